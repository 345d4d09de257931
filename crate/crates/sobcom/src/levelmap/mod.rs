//! Level-set maps `phi: M -> R^n` and their geometry.
//!
//! Each map kind carries analytic first derivatives, from which the normal
//! Jacobian `sqrt(det(Dphi Dphi^T))` is computed; a central-difference
//! fallback exists for cross-checks. Level sets are never triangulated:
//! points on a level are produced by shell sampling plus Newton projection,
//! and all level integrals run through the shell estimator in
//! [`diagnostics`], with closed forms (spheres, tori) used where the level
//! has one.

pub mod diagnostics;

use serde::{Deserialize, Serialize};

use crate::manifold::{vecops, ManifoldModel, Point};
use crate::{Error, Result};

/// An l^p exponent in `[1, inf]`; serialized as a number or the string
/// `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpExponent(pub f64);

impl Serialize for LpExponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for LpExponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => Ok(LpExponent(n.as_f64().ok_or_else(|| D::Error::custom("bad exponent"))?)),
            serde_json::Value::String(s) if s == "inf" => Ok(LpExponent(f64::INFINITY)),
            _ => Err(D::Error::custom("exponent must be a number or \"inf\"")),
        }
    }
}

/// The supported level map families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LevelMapKind {
    /// `x -> |x|` on Euclidean space.
    Radial,
    /// `x -> |x|_l` for an l-norm, `l in [1, inf]`.
    LpRadial { ell: LpExponent },
    /// Coordinate blocks mapped to their l^{r_i} norms; target dimension is
    /// the number of blocks.
    BlockRadial { blocks: Vec<usize>, exps: Vec<LpExponent> },
    /// Anisotropic gauge for the dilation family `t^{diag(powers)}`: the
    /// unique `t > 0` with `sum_i x_i^2 t^{-2 a_i} = 1`.
    QuasiRadial { powers: Vec<f64> },
    /// Radial map on the plane with an angularly shrinking bulge:
    /// `phi(r, theta) = r (1 + chi(r) g(r^2 theta))` with `g` an even bump of
    /// the given height supported on `[-pi, pi]` and `chi` a smooth cutoff
    /// vanishing for `r <= 2` and equal to one for `r >= 3`.
    Bulged { height: f64 },
    /// Distance to the pole on any model manifold.
    PoleDistance,
    /// `x -> (|(x_1 .. x_{m-1})|, x_m)`: cylinder coordinates around the
    /// last axis. Levels are far small circles; the standard witness that
    /// level sets can stay small while escaping.
    CylinderRadial,
    /// Orthogonal projection onto the listed coordinates. Levels are affine
    /// subspaces; only meaningful for windowed diameter scans.
    Projection { kept: Vec<usize> },
}

/// A level map bound to its source manifold.
#[derive(Clone, Debug)]
pub struct LevelMap {
    pub kind: LevelMapKind,
    pub model: ManifoldModel,
}

const FD_STEP: f64 = 1e-6;

impl LevelMap {
    pub fn new(kind: LevelMapKind, model: ManifoldModel) -> Result<Self> {
        let m = model.dim();
        match &kind {
            LevelMapKind::PoleDistance => {}
            LevelMapKind::Radial | LevelMapKind::LpRadial { .. } | LevelMapKind::QuasiRadial { .. }
            | LevelMapKind::BlockRadial { .. } | LevelMapKind::Bulged { .. } | LevelMapKind::CylinderRadial
            | LevelMapKind::Projection { .. } => {
                if !matches!(model, ManifoldModel::Euclidean { .. }) {
                    return Err(Error::Config("this level map kind is defined on Euclidean space".into()));
                }
            }
        }
        match &kind {
            LevelMapKind::LpRadial { ell } => {
                if !(ell.0 >= 1.0) {
                    return Err(Error::Config(format!("l-norm exponent must be >= 1, got {}", ell.0)));
                }
            }
            LevelMapKind::BlockRadial { blocks, exps } => {
                if blocks.is_empty() || blocks.len() != exps.len() {
                    return Err(Error::Config("block sizes and exponents must be nonempty and match".into()));
                }
                if blocks.iter().sum::<usize>() != m {
                    return Err(Error::Config(format!(
                        "block sizes sum to {}, source dimension is {m}",
                        blocks.iter().sum::<usize>()
                    )));
                }
                if blocks.iter().any(|&b| b < 2) {
                    return Err(Error::Config("blocks must have dimension at least 2".into()));
                }
                if exps.iter().any(|e| !(e.0 >= 1.0)) {
                    return Err(Error::Config("block exponents must be >= 1".into()));
                }
            }
            LevelMapKind::QuasiRadial { powers } => {
                if powers.len() != m {
                    return Err(Error::Config("one dilation power per coordinate required".into()));
                }
                if powers.iter().any(|a| !(*a > 0.0)) {
                    return Err(Error::Config("dilation powers must be positive".into()));
                }
            }
            LevelMapKind::Bulged { height } => {
                if m != 2 {
                    return Err(Error::Config("the bulged map lives on the plane".into()));
                }
                if !(*height > 0.0) || !height.is_finite() {
                    return Err(Error::Config(format!("bulge height must be positive, got {height}")));
                }
            }
            LevelMapKind::CylinderRadial => {
                if m < 3 {
                    return Err(Error::Config("cylinder coordinates need dimension at least 3".into()));
                }
            }
            LevelMapKind::Projection { kept } => {
                if kept.is_empty() || kept.iter().any(|&i| i >= m) {
                    return Err(Error::Config("projection coordinates out of range".into()));
                }
                let mut sorted = kept.clone();
                sorted.dedup();
                if sorted.len() != kept.len() {
                    return Err(Error::Config("projection coordinates must be distinct".into()));
                }
            }
            _ => {}
        }
        Ok(LevelMap { kind, model })
    }

    /// Dimension of the target.
    pub fn target_dim(&self) -> usize {
        match &self.kind {
            LevelMapKind::BlockRadial { blocks, .. } => blocks.len(),
            LevelMapKind::CylinderRadial => 2,
            LevelMapKind::Projection { kept } => kept.len(),
            _ => 1,
        }
    }

    pub fn source_dim(&self) -> usize {
        self.model.dim()
    }

    pub fn evaluate(&self, x: &Point) -> Result<Vec<f64>> {
        self.model.validate_point(x)?;
        Ok(self.eval(x.coords()))
    }

    /// Evaluation on raw chart coordinates (trusted input).
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        match &self.kind {
            LevelMapKind::Radial => vec![vecops::norm(x)],
            LevelMapKind::LpRadial { ell } => vec![lp_norm(x, ell.0)],
            LevelMapKind::BlockRadial { blocks, exps } => {
                let mut out = Vec::with_capacity(blocks.len());
                let mut o = 0;
                for (b, e) in blocks.iter().zip(exps) {
                    out.push(lp_norm(&x[o..o + b], e.0));
                    o += b;
                }
                out
            }
            LevelMapKind::QuasiRadial { powers } => vec![quasi_gauge(x, powers)],
            LevelMapKind::Bulged { height } => vec![bulged_value(x, *height)],
            LevelMapKind::PoleDistance => vec![self.model.distance_to_pole(&Point(x.to_vec()))],
            LevelMapKind::CylinderRadial => {
                let m = x.len();
                vec![vecops::norm(&x[..m - 1]), x[m - 1]]
            }
            LevelMapKind::Projection { kept } => kept.iter().map(|&i| x[i]).collect(),
        }
    }

    /// Sup-norm distance from `phi(x)` to the level `z`, allocation-free for
    /// the scalar kinds; the workhorse of the shell estimators.
    pub fn shell_gap(&self, x: &[f64], z: &[f64]) -> f64 {
        match &self.kind {
            LevelMapKind::Radial => (vecops::norm(x) - z[0]).abs(),
            LevelMapKind::LpRadial { ell } => (lp_norm(x, ell.0) - z[0]).abs(),
            LevelMapKind::QuasiRadial { powers } => (quasi_gauge(x, powers) - z[0]).abs(),
            LevelMapKind::Bulged { height } => (bulged_value(x, *height) - z[0]).abs(),
            LevelMapKind::PoleDistance => (self.model.distance_to_pole(&Point(x.to_vec())) - z[0]).abs(),
            LevelMapKind::CylinderRadial => {
                let m = x.len();
                (vecops::norm(&x[..m - 1]) - z[0]).abs().max((x[m - 1] - z[1]).abs())
            }
            _ => {
                let v = self.eval(x);
                v.iter().zip(z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            }
        }
    }

    /// Rows of the differential `Dphi` at `x` (size `n x m`). Points where a
    /// row is undefined (norm vertices, the pole) return an error.
    pub fn differential(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let m = x.len();
        match &self.kind {
            LevelMapKind::Radial => {
                let n = vecops::norm(x);
                if n < 1e-13 {
                    return Err(Error::Domain("radial gradient undefined at the origin".into()));
                }
                Ok(vec![vecops::scale(x, 1.0 / n)])
            }
            LevelMapKind::LpRadial { ell } => Ok(vec![lp_gradient(x, ell.0)?]),
            LevelMapKind::BlockRadial { blocks, exps } => {
                let mut rows = Vec::with_capacity(blocks.len());
                let mut o = 0;
                for (b, e) in blocks.iter().zip(exps) {
                    let g = lp_gradient(&x[o..o + b], e.0)?;
                    let mut row = vec![0.0; m];
                    row[o..o + b].copy_from_slice(&g);
                    rows.push(row);
                    o += b;
                }
                Ok(rows)
            }
            LevelMapKind::QuasiRadial { powers } => {
                let t = quasi_gauge(x, powers);
                if t < 1e-13 {
                    return Err(Error::Domain("gauge gradient undefined at the origin".into()));
                }
                // implicit differentiation of sum x_i^2 t^{-2 a_i} = 1
                let denom: f64 = powers
                    .iter()
                    .zip(x)
                    .map(|(a, xi)| a * xi * xi * t.powf(-2.0 * a))
                    .sum();
                Ok(vec![powers
                    .iter()
                    .zip(x)
                    .map(|(a, xi)| xi * t.powf(-2.0 * a + 1.0) / denom)
                    .collect()])
            }
            LevelMapKind::Bulged { height } => {
                let r = vecops::norm(x);
                if r < 1e-13 {
                    return Err(Error::Domain("radial gradient undefined at the origin".into()));
                }
                let theta = x[1].atan2(x[0]);
                let (dr, dth_over_r) = bulged_polar_partials(r, theta, *height);
                let (c, s) = (theta.cos(), theta.sin());
                Ok(vec![vec![dr * c - dth_over_r * s, dr * s + dth_over_r * c]])
            }
            LevelMapKind::PoleDistance => match &self.model {
                ManifoldModel::Euclidean { .. } => {
                    let n = vecops::norm(x);
                    if n < 1e-13 {
                        return Err(Error::Domain("distance gradient undefined at the pole".into()));
                    }
                    Ok(vec![vecops::scale(x, 1.0 / n)])
                }
                _ => Err(Error::Domain(
                    "analytic differential of the pole distance is only provided on Euclidean charts".into(),
                )),
            },
            LevelMapKind::CylinderRadial => {
                let n = vecops::norm(&x[..m - 1]);
                if n < 1e-13 {
                    return Err(Error::Domain("cylinder radius gradient undefined on the axis".into()));
                }
                let mut r0 = vec![0.0; m];
                for i in 0..m - 1 {
                    r0[i] = x[i] / n;
                }
                let mut r1 = vec![0.0; m];
                r1[m - 1] = 1.0;
                Ok(vec![r0, r1])
            }
            LevelMapKind::Projection { kept } => Ok(kept
                .iter()
                .map(|&i| {
                    let mut row = vec![0.0; m];
                    row[i] = 1.0;
                    row
                })
                .collect()),
        }
    }

    /// Normal Jacobian `sqrt(det(Dphi Dphi^T))`.
    pub fn normal_jacobian(&self, x: &[f64]) -> Result<f64> {
        let rows = self.differential(x)?;
        gram_det(&rows).map(f64::sqrt)
    }

    /// Central-difference normal Jacobian; cross-check for the analytic one.
    pub fn normal_jacobian_fd(&self, x: &[f64]) -> Result<f64> {
        let m = x.len();
        let n = self.target_dim();
        let mut rows = vec![vec![0.0; m]; n];
        let mut xp = x.to_vec();
        for j in 0..m {
            let x0 = x[j];
            xp[j] = x0 + FD_STEP;
            let fp = self.eval(&xp);
            xp[j] = x0 - FD_STEP;
            let fm = self.eval(&xp);
            xp[j] = x0;
            for i in 0..n {
                rows[i][j] = (fp[i] - fm[i]) / (2.0 * FD_STEP);
            }
        }
        gram_det(&rows).map(f64::sqrt)
    }

    /// Geodesic radius of a ball at the pole guaranteed to contain the level
    /// set of every `z' <= z` componentwise; `None` when levels are
    /// unbounded (projections).
    pub fn level_radius_bound(&self, z: &[f64]) -> Option<f64> {
        let m = self.source_dim() as f64;
        match &self.kind {
            LevelMapKind::Radial | LevelMapKind::PoleDistance => Some(z[0]),
            LevelMapKind::LpRadial { ell } => Some(z[0] * m.powf((0.5 - 1.0 / ell.0).max(0.0))),
            LevelMapKind::BlockRadial { blocks, exps } => {
                let mut s = 0.0;
                for ((b, e), zi) in blocks.iter().zip(exps).zip(z) {
                    let bi = *b as f64;
                    let bound = zi * bi.powf((0.5 - 1.0 / e.0).max(0.0));
                    s += bound * bound;
                }
                Some(s.sqrt())
            }
            LevelMapKind::QuasiRadial { powers } => {
                let t = z[0];
                Some(powers.iter().map(|a| t.powf(*a).powi(2)).sum::<f64>().sqrt())
            }
            // height is positive, so phi >= r everywhere
            LevelMapKind::Bulged { .. } => Some(z[0]),
            LevelMapKind::CylinderRadial => Some((z[0] * z[0] + z[1] * z[1]).sqrt() + 1e-9),
            LevelMapKind::Projection { .. } => None,
        }
    }

    /// Newton projection of `x` onto the level `z`; returns the projected
    /// point or `None` when the iteration does not contract.
    pub fn project_to_level(&self, x: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        let scale = 1e-9 * (1.0 + z.iter().fold(0.0f64, |a, b| a.max(b.abs())));
        let mut y = x.to_vec();
        for _ in 0..12 {
            let v = self.eval(&y);
            let gap = v.iter().zip(z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if gap < scale {
                return Some(y);
            }
            let rows = self.differential(&y).ok()?;
            let resid: Vec<f64> = v.iter().zip(z).map(|(a, b)| a - b).collect();
            let lam = solve_gram(&rows, &resid)?;
            for (i, yi) in y.iter_mut().enumerate() {
                let step: f64 = rows.iter().zip(&lam).map(|(row, l)| row[i] * l).sum();
                *yi -= step;
            }
        }
        None
    }
}

fn lp_norm(x: &[f64], ell: f64) -> f64 {
    if ell.is_infinite() {
        x.iter().fold(0.0f64, |a, b| a.max(b.abs()))
    } else if ell == 1.0 {
        x.iter().map(|v| v.abs()).sum()
    } else if ell == 2.0 {
        vecops::norm(x)
    } else {
        let scale = x.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if scale == 0.0 {
            0.0
        } else {
            scale * x.iter().map(|v| (v.abs() / scale).powf(ell)).sum::<f64>().powf(1.0 / ell)
        }
    }
}

/// Gradient of the l-norm away from its singular set; on the singular set
/// (ties for `inf`, zero coordinates for `ell < 2`) an error is returned.
fn lp_gradient(x: &[f64], ell: f64) -> Result<Vec<f64>> {
    let n = lp_norm(x, ell);
    if n < 1e-13 {
        return Err(Error::Domain("norm gradient undefined at the origin".into()));
    }
    if ell.is_infinite() {
        let mut best = 0usize;
        for (i, v) in x.iter().enumerate() {
            if v.abs() > x[best].abs() {
                best = i;
            }
        }
        let mut g = vec![0.0; x.len()];
        g[best] = x[best].signum();
        return Ok(g);
    }
    Ok(x.iter()
        .map(|v| {
            if *v == 0.0 {
                0.0
            } else {
                v.signum() * (v.abs() / n).powf(ell - 1.0)
            }
        })
        .collect())
}

fn quasi_gauge(x: &[f64], powers: &[f64]) -> f64 {
    let norm2: f64 = vecops::dot(x, x);
    if norm2 == 0.0 {
        return 0.0;
    }
    // F(t) = sum x_i^2 t^{-2 a_i} is strictly decreasing; bracket and bisect.
    let f = |t: f64| -> f64 { x.iter().zip(powers).map(|(xi, a)| xi * xi * t.powf(-2.0 * a)).sum::<f64>() - 1.0 };
    let mut lo = 1e-12;
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    while f(lo) < 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return 0.0;
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Even bump of unit height supported on `[-pi, pi]`.
pub(crate) fn angle_bump(u: f64) -> f64 {
    let s = u / std::f64::consts::PI;
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-s * s / (1.0 - s * s)).exp()
    }
}

pub(crate) fn angle_bump_deriv(u: f64) -> f64 {
    let pi = std::f64::consts::PI;
    let s = u / pi;
    if s.abs() >= 1.0 {
        0.0
    } else {
        let d = 1.0 - s * s;
        (-s * s / d).exp() * (-2.0 * s / (d * d)) / pi
    }
}

/// Smooth cutoff: 0 for `r <= 2`, 1 for `r >= 3` (quintic smoothstep).
pub(crate) fn bulge_cutoff(r: f64) -> f64 {
    let t = ((r - 2.0).clamp(0.0, 1.0)) as f64;
    t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
}

pub(crate) fn bulge_cutoff_deriv(r: f64) -> f64 {
    if !(2.0..3.0).contains(&r) {
        return 0.0;
    }
    let t = r - 2.0;
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

pub(crate) fn bulged_value_polar(r: f64, theta: f64, height: f64) -> f64 {
    let u = r * r * theta;
    r * (1.0 + bulge_cutoff(r) * height * angle_bump(u))
}

fn bulged_value(x: &[f64], height: f64) -> f64 {
    let r = vecops::norm(x);
    if r == 0.0 {
        return 0.0;
    }
    let theta = x[1].atan2(x[0]);
    bulged_value_polar(r, theta, height)
}

/// `(d phi / d r, (1/r) d phi / d theta)` for the bulged map.
fn bulged_polar_partials(r: f64, theta: f64, height: f64) -> (f64, f64) {
    let u = r * r * theta;
    let chi = bulge_cutoff(r);
    let g = height * angle_bump(u);
    let gp = height * angle_bump_deriv(u);
    let dr = 1.0 + chi * g + r * bulge_cutoff_deriv(r) * g + 2.0 * u * chi * gp;
    let dth_over_r = chi * gp * r * r;
    (dr, dth_over_r)
}

/// Determinant of the Gram matrix of the rows, by Cholesky.
fn gram_det(rows: &[Vec<f64>]) -> Result<f64> {
    let n = rows.len();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = vecops::dot(&rows[i], &rows[j]);
            g[i][j] = v;
            g[j][i] = v;
        }
    }
    let mut det = 1.0;
    // in-place Cholesky; the Gram matrix is positive semidefinite
    let mut l = g;
    for i in 0..n {
        let mut d = l[i][i];
        for k in 0..i {
            d -= l[i][k] * l[i][k];
        }
        if d <= 0.0 {
            return Err(Error::Numerical("degenerate differential (rank-deficient Gram matrix)".into()));
        }
        let s = d.sqrt();
        l[i][i] = s;
        det *= d;
        for j in (i + 1)..n {
            let mut v = l[j][i];
            for k in 0..i {
                v -= l[j][k] * l[i][k];
            }
            l[j][i] = v / s;
        }
    }
    Ok(det)
}

/// Solve `(R R^T) lambda = rhs` for the Newton projection step.
fn solve_gram(rows: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rows.len();
    let mut g = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        for j in 0..n {
            g[i][j] = vecops::dot(&rows[i], &rows[j]);
        }
        g[i][n] = rhs[i];
    }
    // Gaussian elimination with partial pivoting on the tiny system
    for c in 0..n {
        let piv = (c..n).max_by(|&a, &b| g[a][c].abs().partial_cmp(&g[b][c].abs()).unwrap())?;
        if g[piv][c].abs() < 1e-300 {
            return None;
        }
        g.swap(c, piv);
        for r in (c + 1)..n {
            let f = g[r][c] / g[c][c];
            for k in c..=n {
                g[r][k] -= f * g[c][k];
            }
        }
    }
    let mut lam = vec![0.0; n];
    for i in (0..n).rev() {
        let mut v = g[i][n];
        for j in (i + 1)..n {
            v -= g[i][j] * lam[j];
        }
        lam[i] = v / g[i][i];
    }
    Some(lam)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclid(m: usize) -> ManifoldModel {
        ManifoldModel::euclidean(m).unwrap()
    }

    #[test]
    fn radial_and_block_values() {
        let r = LevelMap::new(LevelMapKind::Radial, euclid(3)).unwrap();
        assert!((r.eval(&[3.0, 4.0, 0.0])[0] - 5.0).abs() < 1e-15);
        let b = LevelMap::new(
            LevelMapKind::BlockRadial {
                blocks: vec![2, 2],
                exps: vec![LpExponent(2.0), LpExponent(2.0)],
            },
            euclid(4),
        )
        .unwrap();
        let v = b.eval(&[3.0, 4.0, 0.0, 2.0]);
        assert!((v[0] - 5.0).abs() < 1e-15 && (v[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn lp_norms_and_limits() {
        let one = LevelMap::new(LevelMapKind::LpRadial { ell: LpExponent(1.0) }, euclid(2)).unwrap();
        assert!((one.eval(&[1.0, -2.0])[0] - 3.0).abs() < 1e-15);
        let inf = LevelMap::new(LevelMapKind::LpRadial { ell: LpExponent(f64::INFINITY) }, euclid(2)).unwrap();
        assert!((inf.eval(&[1.0, -2.0])[0] - 2.0).abs() < 1e-15);
        let four = LevelMap::new(LevelMapKind::LpRadial { ell: LpExponent(4.0) }, euclid(2)).unwrap();
        assert!((four.eval(&[1.0, 1.0])[0] - 2f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn jacobians_match_closed_forms() {
        // unit-exponent cases where sqrt(det(D D^T)) is known exactly
        let r = LevelMap::new(LevelMapKind::Radial, euclid(3)).unwrap();
        assert!((r.normal_jacobian(&[1.0, 2.0, -1.0]).unwrap() - 1.0).abs() < 1e-12);
        let b = LevelMap::new(
            LevelMapKind::BlockRadial { blocks: vec![2, 3], exps: vec![LpExponent(2.0), LpExponent(2.0)] },
            euclid(5),
        )
        .unwrap();
        assert!((b.normal_jacobian(&[1.0, 1.0, 0.5, 0.5, 1.0]).unwrap() - 1.0).abs() < 1e-12);
        let c = LevelMap::new(LevelMapKind::CylinderRadial, euclid(3)).unwrap();
        assert!((c.normal_jacobian(&[0.3, 0.4, 7.0]).unwrap() - 1.0).abs() < 1e-12);
        let l1 = LevelMap::new(LevelMapKind::LpRadial { ell: LpExponent(1.0) }, euclid(3)).unwrap();
        assert!((l1.normal_jacobian(&[1.0, 2.0, 3.0]).unwrap() - 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let maps = vec![
            LevelMap::new(LevelMapKind::LpRadial { ell: LpExponent(3.0) }, euclid(3)).unwrap(),
            LevelMap::new(LevelMapKind::QuasiRadial { powers: vec![1.0, 2.0] }, euclid(2)).unwrap(),
            LevelMap::new(LevelMapKind::Bulged { height: 1.0 }, euclid(2)).unwrap(),
            LevelMap::new(
                LevelMapKind::BlockRadial { blocks: vec![2, 2], exps: vec![LpExponent(4.0), LpExponent(2.0)] },
                euclid(4),
            )
            .unwrap(),
        ];
        let pts: Vec<Vec<f64>> = vec![
            vec![0.7, 1.3],
            vec![-1.1, 0.4],
            vec![3.5, 0.02],
            vec![0.9, -0.8, 1.2, 0.3],
            vec![1.0, 2.0, -0.5, 0.25],
        ];
        for map in &maps {
            for p in pts.iter().filter(|p| p.len() == map.source_dim()) {
                let a = map.normal_jacobian(p).unwrap();
                let f = map.normal_jacobian_fd(p).unwrap();
                let rel = (a - f).abs() / a.abs().max(1e-12);
                assert!(rel < 1e-5, "{:?} at {:?}: analytic {a} vs fd {f}", map.kind, p);
            }
        }
    }

    #[test]
    fn quasi_gauge_homogeneity() {
        // rho(t^{diag(a)} x) = t rho(x) for the dilation family
        let map = LevelMap::new(LevelMapKind::QuasiRadial { powers: vec![1.0, 2.0] }, euclid(2)).unwrap();
        let x = [0.8, -0.3];
        let base = map.eval(&x)[0];
        for t in [0.5, 2.0, 7.0] {
            let scaled = [t * x[0], t * t * x[1]];
            let v = map.eval(&scaled)[0];
            assert!((v - t * base).abs() < 1e-10 * (1.0 + v), "t={t}: {v} vs {}", t * base);
        }
    }

    #[test]
    fn quasi_gauge_directional_derivative() {
        // finite difference along a direction against the implicit gradient
        let map = LevelMap::new(LevelMapKind::QuasiRadial { powers: vec![1.0, 2.0] }, euclid(2)).unwrap();
        let x = [0.9, 0.7];
        let dir = [0.6, -0.8];
        let h = 1e-6;
        let fp = map.eval(&[x[0] + h * dir[0], x[1] + h * dir[1]])[0];
        let fm = map.eval(&[x[0] - h * dir[0], x[1] - h * dir[1]])[0];
        let fd = (fp - fm) / (2.0 * h);
        let grad = &map.differential(&x).unwrap()[0];
        let an = grad[0] * dir[0] + grad[1] * dir[1];
        assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "fd {fd} analytic {an}");
    }

    #[test]
    fn bulged_reduces_to_radial_inside_cutoff() {
        let map = LevelMap::new(LevelMapKind::Bulged { height: 1.0 }, euclid(2)).unwrap();
        assert!((map.eval(&[1.0, 0.5])[0] - (1.25f64).sqrt()).abs() < 1e-14);
        assert!((map.normal_jacobian(&[0.5, 0.1]).unwrap() - 1.0).abs() < 1e-12);
        // outside the cutoff, on the bump axis, the value is lifted by the height
        let v = map.eval(&[5.0, 0.0])[0];
        assert!((v - 10.0).abs() < 1e-12, "peak value {v}");
    }

    #[test]
    fn level_projection_lands_on_level() {
        let maps = vec![
            LevelMap::new(LevelMapKind::Radial, euclid(2)).unwrap(),
            LevelMap::new(LevelMapKind::QuasiRadial { powers: vec![1.0, 2.0] }, euclid(2)).unwrap(),
            LevelMap::new(LevelMapKind::Bulged { height: 1.0 }, euclid(2)).unwrap(),
        ];
        for map in maps {
            let z = [5.0];
            let y = map.project_to_level(&[4.2, 1.7], &z).expect("projection converges");
            let gap = (map.eval(&y)[0] - z[0]).abs();
            assert!(gap < 1e-8, "{:?}: gap {gap}", map.kind);
        }
        let cyl = LevelMap::new(LevelMapKind::CylinderRadial, euclid(3)).unwrap();
        let y = cyl.project_to_level(&[1.2, 0.3, 6.8], &[1.0, 7.0]).unwrap();
        let v = cyl.eval(&y);
        assert!((v[0] - 1.0).abs() < 1e-8 && (v[1] - 7.0).abs() < 1e-8);
    }

    #[test]
    fn config_rejects_bad_setups() {
        assert!(LevelMap::new(LevelMapKind::Bulged { height: 1.0 }, euclid(3)).is_err());
        assert!(LevelMap::new(
            LevelMapKind::BlockRadial { blocks: vec![2, 2], exps: vec![LpExponent(2.0)] },
            euclid(4)
        )
        .is_err());
        assert!(LevelMap::new(LevelMapKind::BlockRadial { blocks: vec![1, 3], exps: vec![LpExponent(2.0), LpExponent(2.0)] }, euclid(4)).is_err());
        assert!(LevelMap::new(LevelMapKind::QuasiRadial { powers: vec![1.0, -1.0] }, euclid(2)).is_err());
        assert!(LevelMap::new(LevelMapKind::Radial, ManifoldModel::hyperbolic(2, -1.0).unwrap()).is_err());
    }

    #[test]
    fn exponent_serde_roundtrip() {
        let k = LevelMapKind::LpRadial { ell: LpExponent(f64::INFINITY) };
        let s = serde_json::to_string(&k).unwrap();
        assert!(s.contains("inf"));
        let back: LevelMapKind = serde_json::from_str(&s).unwrap();
        assert_eq!(back, k);
        let n: LevelMapKind = serde_json::from_str(r#"{"kind":"lp_radial","ell":2.5}"#).unwrap();
        assert_eq!(n, LevelMapKind::LpRadial { ell: LpExponent(2.5) });
    }
}
