//! Isometric group actions: orbit geometry, coercivity, Haar averaging,
//! quasisymmetry checks, and the disjoint-bump witness sequence.
//!
//! The Haar measure is discretized by a finite *subgroup* grid with equal
//! weights: cyclic grids for circle factors, the 60-element icosahedral
//! group for rotations in dimension 3, and direct products of these. Using
//! honest subgroups (rather than generic quasi-uniform grids) makes the
//! averaging operator exactly idempotent and keeps the sampled element set
//! closed under inverses; it restricts rotations to dimensions 2 and 3,
//! which covers every action family handled here.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discretize::Discretization;
use crate::manifold::{sample_direction, vecops, wrap_angle, BallSampler, ManifoldModel, Point};
use crate::{Error, Result};

pub const DEFAULT_GRID: usize = 64;

/// Recursive midpoint split; negating all inputs negates the result exactly,
/// so symmetric grids cancel odd functions to a bitwise zero.
pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

// ---------------------------------------------------------------------------
// Small dense matrices (dimensions 2 and 3 only)

type Mat = Vec<Vec<f64>>;

fn identity(m: usize) -> Mat {
    (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn mat_apply(a: &Mat, x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| vecops::dot(row, x)).collect()
}

fn mat_mul(a: &Mat, b: &Mat) -> Mat {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn mat_neg(a: &Mat) -> Mat {
    a.iter().map(|r| r.iter().map(|v| -v).collect()).collect()
}

fn rotation2(theta: f64) -> Mat {
    let (s, c) = theta.sin_cos();
    vec![vec![c, -s], vec![s, c]]
}

/// Rodrigues formula for a rotation about a unit axis.
fn rotation3(axis: &[f64], theta: f64) -> Mat {
    let (x, y, z) = (axis[0], axis[1], axis[2]);
    let (s, c) = theta.sin_cos();
    let t = 1.0 - c;
    vec![
        vec![t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        vec![t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        vec![t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// Re-orthonormalize rows (modified Gram-Schmidt) to stop drift in products.
fn orthonormalize(a: &mut Mat) {
    let n = a.len();
    for i in 0..n {
        for k in 0..i {
            let proj = vecops::dot(&a[i], &a[k]);
            for j in 0..n {
                a[i][j] -= proj * a[k][j];
            }
        }
        let nrm = vecops::norm(&a[i]);
        for j in 0..n {
            a[i][j] /= nrm;
        }
    }
}

/// Cyclic rotation grid in the plane. For even counts the second half is the
/// entrywise negation of the first, so antipodal cancellations are exact.
fn cyclic_grid(k: usize) -> Vec<Mat> {
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        if k % 2 == 0 && j >= k / 2 {
            out.push(mat_neg(&out[j - k / 2]));
        } else {
            out.push(rotation2(2.0 * std::f64::consts::PI * j as f64 / k as f64));
        }
    }
    out
}

/// The rotation group of the icosahedron (60 elements), generated by a
/// five-fold vertex rotation and a two-fold edge rotation and closed off by
/// breadth-first multiplication.
fn icosahedral_grid() -> Result<Vec<Mat>> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let v = {
        let n = (1.0 + phi * phi).sqrt();
        vec![0.0, 1.0 / n, phi / n]
    };
    let g1 = rotation3(&v, 2.0 * std::f64::consts::PI / 5.0);
    // two-fold edge axis not perpendicular to the vertex axis, else the
    // closure stops at the dihedral subgroup
    let g2 = rotation3(&[0.0, 0.0, 1.0], std::f64::consts::PI);
    let key = |m: &Mat| -> Vec<i64> {
        m.iter().flatten().map(|x| (x * 1e6).round() as i64).collect()
    };
    let mut elems: Vec<Mat> = vec![identity(3)];
    let mut seen = std::collections::BTreeSet::new();
    seen.insert(key(&elems[0]));
    let mut frontier = elems.clone();
    while !frontier.is_empty() {
        let mut next = Vec::new();
        for e in &frontier {
            for g in [&g1, &g2] {
                let mut p = mat_mul(g, e);
                orthonormalize(&mut p);
                if seen.insert(key(&p)) {
                    next.push(p.clone());
                    elems.push(p);
                    if elems.len() > 120 {
                        return Err(Error::Numerical("rotation grid closure overflow".into()));
                    }
                }
            }
        }
        frontier = next;
    }
    if elems.len() != 60 {
        return Err(Error::Numerical(format!("rotation grid closed at {} elements, expected 60", elems.len())));
    }
    Ok(elems)
}

fn so_grid(dim: usize, k: Option<usize>) -> Result<Vec<Mat>> {
    match dim {
        2 => {
            let k = k.unwrap_or(DEFAULT_GRID);
            if k == 0 {
                return Err(Error::Config("rotation grid needs at least one element".into()));
            }
            Ok(cyclic_grid(k))
        }
        3 => match k {
            None | Some(60) => icosahedral_grid(),
            Some(1) => Ok(vec![identity(3)]),
            Some(k) => Err(Error::Config(format!(
                "rotation grids in dimension 3 are the trivial group or the fixed 60-element icosahedral subgroup (got {k})"
            ))),
        },
        _ => Err(Error::Config(format!(
            "rotation grids are provided in dimensions 2 and 3 only (got {dim})"
        ))),
    }
}

/// Embed a block matrix at the given coordinate offset of an identity.
fn embed(block: &Mat, offset: usize, m: usize) -> Mat {
    let mut full = identity(m);
    for (i, row) in block.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            full[offset + i][offset + j] = *v;
        }
    }
    full
}

// ---------------------------------------------------------------------------
// Actions

/// JSON-facing description of an action; dimensions come from the manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupActionConfig {
    /// Full rotation group about the pole (Euclidean or hyperbolic chart).
    Rotations { k: Option<usize> },
    /// Product of per-block rotation groups on Euclidean space.
    BlockRotations { blocks: Vec<usize>, k: Option<usize> },
    /// Circle shifts times rotations of the Euclidean factor of a product.
    CircleTimesRotations { k: Option<usize> },
    /// Rotations of the first `acting_dim` coordinates, fixing the rest.
    SubgroupFixingAxis { acting_dim: usize, k: Option<usize> },
}

/// One sampled group element: an optional circle shift (product models) and
/// an orthogonal matrix on the remaining chart coordinates.
#[derive(Clone, Debug)]
pub struct GroupElement {
    pub shift: f64,
    pub matrix: Mat,
}

#[derive(Clone, Debug)]
pub struct GroupAction {
    config: GroupActionConfig,
    model: ManifoldModel,
    elements: Vec<GroupElement>,
}

impl GroupAction {
    pub fn new(config: GroupActionConfig, model: ManifoldModel) -> Result<Self> {
        let m = model.dim();
        let elements = match &config {
            GroupActionConfig::Rotations { k } => {
                match model {
                    ManifoldModel::Euclidean { .. } | ManifoldModel::Hyperbolic { .. } => {}
                    _ => return Err(Error::Config("pole rotations act on Euclidean or hyperbolic models".into())),
                }
                so_grid(m, *k)?.into_iter().map(|matrix| GroupElement { shift: 0.0, matrix }).collect()
            }
            GroupActionConfig::BlockRotations { blocks, k } => {
                if !matches!(model, ManifoldModel::Euclidean { .. }) {
                    return Err(Error::Config("block rotations act on Euclidean space".into()));
                }
                if blocks.iter().sum::<usize>() != m || blocks.is_empty() {
                    return Err(Error::Config(format!("block sizes must sum to the dimension {m}")));
                }
                let mut mats: Vec<Mat> = vec![identity(m)];
                let mut offset = 0;
                for b in blocks {
                    let grid = so_grid(*b, *k)?;
                    let mut combined = Vec::with_capacity(mats.len() * grid.len());
                    for base in &mats {
                        for g in &grid {
                            combined.push(mat_mul(base, &embed(g, offset, m)));
                        }
                    }
                    mats = combined;
                    offset += b;
                }
                mats.into_iter().map(|matrix| GroupElement { shift: 0.0, matrix }).collect()
            }
            GroupActionConfig::CircleTimesRotations { k } => {
                let ManifoldModel::ProductCircle { euclidean_dim, .. } = model else {
                    return Err(Error::Config("circle-times-rotations acts on the product model".into()));
                };
                let kc = k.unwrap_or(DEFAULT_GRID);
                if kc == 0 {
                    return Err(Error::Config("circle grid needs at least one element".into()));
                }
                let grid = so_grid(euclidean_dim, *k)?;
                let mut out = Vec::with_capacity(kc * grid.len());
                for j in 0..kc {
                    let shift = 2.0 * std::f64::consts::PI * j as f64 / kc as f64;
                    for g in &grid {
                        out.push(GroupElement { shift, matrix: g.clone() });
                    }
                }
                out
            }
            GroupActionConfig::SubgroupFixingAxis { acting_dim, k } => {
                if !matches!(model, ManifoldModel::Euclidean { .. }) {
                    return Err(Error::Config("axis-fixing rotations act on Euclidean space".into()));
                }
                if !(*acting_dim < m) {
                    return Err(Error::Config(format!(
                        "acting dimension {acting_dim} must be smaller than the space dimension {m}"
                    )));
                }
                so_grid(*acting_dim, *k)?
                    .into_iter()
                    .map(|g| GroupElement { shift: 0.0, matrix: embed(&g, 0, m) })
                    .collect()
            }
        };
        Ok(GroupAction { config, model, elements })
    }

    pub fn config(&self) -> &GroupActionConfig {
        &self.config
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    /// Apply the `idx`-th sampled element.
    pub fn apply(&self, idx: usize, x: &Point) -> Point {
        let g = &self.elements[idx];
        match self.model {
            ManifoldModel::ProductCircle { .. } => {
                let mut c = Vec::with_capacity(x.dim());
                c.push(wrap_angle(x.coords()[0] + g.shift));
                c.extend(mat_apply(&g.matrix, &x.coords()[1..]));
                Point(c)
            }
            _ => Point(mat_apply(&g.matrix, x.coords())),
        }
    }

    /// Max distance from `x` to its sampled orbit. Because the sampled set
    /// is a subgroup, this equals the max pairwise distance over the orbit:
    /// `d(gx, hx) = d(x, g^{-1}h x)` and `g^{-1}h` runs over the same set.
    pub fn orbit_diameter(&self, x: &Point) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.elements.len() {
            best = best.max(self.model.dist(x, &self.apply(i, x)));
        }
        best
    }

    /// Discretized Haar average of `f` at `x`, summed over a fixed pairwise
    /// tree so symmetric cancellations are exact.
    pub fn average_at<F: Fn(&Point) -> f64>(&self, f: &F, x: &Point) -> f64 {
        let vals: Vec<f64> = (0..self.elements.len()).map(|i| f(&self.apply(i, x))).collect();
        pairwise_sum(&vals) / self.elements.len() as f64
    }

    /// The averaging operator as a function.
    pub fn average<'a, F: Fn(&Point) -> f64 + 'a>(&'a self, f: F) -> impl Fn(&Point) -> f64 + 'a {
        move |x| self.average_at(&f, x)
    }
}

// ---------------------------------------------------------------------------
// Coercivity

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoercivityVerdict {
    Coercive,
    NotCoercive,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoercivityReport {
    pub radii: Vec<f64>,
    /// Min sampled orbit diameter at each probe distance.
    pub envelope: Vec<f64>,
    pub verdict: CoercivityVerdict,
    /// For axis-fixing actions: an explicit escaping family with bounded
    /// orbit diameters (the analytic non-coercivity witness).
    pub escaping_family: Option<Vec<Vec<f64>>>,
}

impl GroupAction {
    /// Points at the given distance from the pole, uniform in direction.
    fn probe_points<R: Rng>(&self, d: f64, count: usize, rng: &mut R) -> Result<Vec<Point>> {
        let m = self.model.dim();
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            match self.model {
                ManifoldModel::Euclidean { .. } => {
                    out.push(Point(vecops::scale(&sample_direction(m, rng), d)));
                }
                ManifoldModel::Hyperbolic { .. } => {
                    out.push(self.model.exp_map(&sample_direction(m, rng), d)?);
                }
                ManifoldModel::ProductCircle { euclidean_dim, circle_radius } => {
                    // split the distance between the circle arc and the factor
                    let cap = std::f64::consts::PI * circle_radius * (1.0 - 1e-12);
                    let a = rng.random::<f64>() * d.min(cap);
                    let v = (d * d - a * a).sqrt();
                    let dir = sample_direction(euclidean_dim, rng);
                    let mut c = Vec::with_capacity(m);
                    let sign = if rng.random::<f64>() < 0.5 { -1.0 } else { 1.0 };
                    c.push(wrap_angle(sign * a / circle_radius));
                    c.extend(dir.iter().map(|t| t * v));
                    out.push(Point(c));
                }
            }
        }
        Ok(out)
    }

    /// Empirical coercivity: does the minimal orbit diameter at distance `d`
    /// diverge with `d`? Divergence is certified from the sampled lower
    /// envelope; non-coercivity needs an upper bound, which sampling cannot
    /// give, so it is decided from the structure of the action: axis-fixing
    /// rotations carry an explicit escaping family of constant orbit size.
    pub fn coercivity_verdict(&self, probe_radii: &[f64], points_per_radius: usize, seed: u64) -> Result<CoercivityReport> {
        if probe_radii.len() < 2 || probe_radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition("probe radii must be strictly increasing, at least two".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let GroupActionConfig::SubgroupFixingAxis { .. } = self.config {
            let m = self.model.dim();
            let mut envelope = Vec::new();
            let mut family = Vec::new();
            for d in probe_radii {
                // unit offset in the acting block, the rest of the distance
                // along the fixed axis: orbit diameter stays 2
                let axial = (d * d - 1.0).max(0.0).sqrt();
                let mut c = vec![0.0; m];
                c[0] = d.min(1.0);
                c[m - 1] = axial;
                let p = Point(c);
                envelope.push(self.orbit_diameter(&p));
                family.push(p.0);
            }
            return Ok(CoercivityReport {
                radii: probe_radii.to_vec(),
                envelope,
                verdict: CoercivityVerdict::NotCoercive,
                escaping_family: Some(family),
            });
        }
        let mut envelope = Vec::new();
        for d in probe_radii {
            let pts = self.probe_points(*d, points_per_radius, &mut rng)?;
            let min = pts.iter().map(|p| self.orbit_diameter(p)).fold(f64::INFINITY, f64::min);
            envelope.push(min);
        }
        let nondecreasing = envelope.windows(2).all(|w| w[1] >= 0.9 * w[0]);
        let verdict = if nondecreasing && envelope[envelope.len() - 1] >= 2.0 * envelope[0] {
            CoercivityVerdict::Coercive
        } else {
            CoercivityVerdict::Inconclusive
        };
        Ok(CoercivityReport { radii: probe_radii.to_vec(), envelope, verdict, escaping_family: None })
    }
}

// ---------------------------------------------------------------------------
// Discrete energy on a rotation-aligned polar grid

/// Polar grid on the plane whose angular nodes are a refinement of the
/// cyclic rotation grid, so rotations act by exact index shifts and
/// averaging commutes with discretization.
#[derive(Clone, Debug)]
pub struct PolarGrid {
    pub dr: f64,
    pub rings: usize,
    pub angles: usize,
}

impl PolarGrid {
    pub fn new(extent: f64, rings: usize, angles: usize) -> Result<Self> {
        if rings < 2 || angles < 4 || !(extent > 0.0) {
            return Err(Error::Config("polar grid needs extent > 0, at least 2 rings and 4 angles".into()));
        }
        Ok(PolarGrid { dr: extent / rings as f64, rings, angles })
    }

    pub fn radius(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dr
    }

    pub fn node(&self, i: usize, j: usize) -> Point {
        let r = self.radius(i);
        let th = 2.0 * std::f64::consts::PI * j as f64 / self.angles as f64;
        Point(vec![r * th.cos(), r * th.sin()])
    }

    pub fn sample<F: Fn(&Point) -> f64>(&self, f: F) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.rings * self.angles);
        for i in 0..self.rings {
            for j in 0..self.angles {
                v.push(f(&self.node(i, j)));
            }
        }
        v
    }

    /// `sum (|grad f|^p + |f|^p) * cell volume` with forward differences in
    /// the radius and wrapped differences in the angle.
    pub fn energy(&self, values: &[f64], p: f64) -> Result<f64> {
        if values.len() != self.rings * self.angles {
            return Err(Error::Precondition(format!(
                "grid data has {} entries, expected {}",
                values.len(),
                self.rings * self.angles
            )));
        }
        let dth = 2.0 * std::f64::consts::PI / self.angles as f64;
        let at = |i: usize, j: usize| values[i * self.angles + j % self.angles];
        let mut e = 0.0;
        for i in 0..self.rings - 1 {
            let r = self.radius(i);
            let cell = r * self.dr * dth;
            for j in 0..self.angles {
                let gr = (at(i + 1, j) - at(i, j)) / self.dr;
                let gth = (at(i, j + 1) - at(i, j)) / (r * dth);
                e += ((gr * gr + gth * gth).sqrt().powf(p) + at(i, j).abs().powf(p)) * cell;
            }
        }
        Ok(e)
    }

    /// Average over the cyclic rotation subgroup of order `k` (must divide
    /// the angular resolution): rotations become index shifts, so this is
    /// the discretization of the Haar average with no interpolation error.
    pub fn rotation_average(&self, values: &[f64], k: usize) -> Result<Vec<f64>> {
        if k == 0 || self.angles % k != 0 {
            return Err(Error::Config(format!(
                "rotation count {k} must divide the angular resolution {}",
                self.angles
            )));
        }
        if values.len() != self.rings * self.angles {
            return Err(Error::Precondition("grid data size mismatch".into()));
        }
        let step = self.angles / k;
        let mut out = vec![0.0; values.len()];
        let mut buf = vec![0.0; k];
        for i in 0..self.rings {
            // One orbit per residue class mod `step`; gathering from the
            // canonical class representative makes every member of a class
            // receive the bitwise-identical average, so the output is exactly
            // periodic and re-averaging it reduces to a mean of equal values.
            for jc in 0..step {
                for (s, b) in buf.iter_mut().enumerate() {
                    *b = values[i * self.angles + (jc + s * step) % self.angles];
                }
                let avg = pairwise_sum(&buf) / k as f64;
                for s in 0..k {
                    out[i * self.angles + (jc + s * step) % self.angles] = avg;
                }
            }
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Quasisymmetry

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct QuasisymmetryParams {
    /// 1-based ordinal: quasiorbits from this one on are checked.
    pub base_index: usize,
    pub lambda: f64,
}

impl QuasisymmetryParams {
    pub fn new(base_index: usize, lambda: f64) -> Result<Self> {
        if base_index < 1 {
            return Err(Error::Config("base index is 1-based".into()));
        }
        if !(lambda >= 1.0) {
            return Err(Error::Config(format!("ratio bound must be at least 1, got {lambda}")));
        }
        Ok(QuasisymmetryParams { base_index, lambda })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitRatio {
    /// 0-based index into the net's quasiorbit list.
    pub orbit: usize,
    pub ratio: f64,
    pub stderr: f64,
    pub max_mass: f64,
    pub min_mass: f64,
    /// Min mass within ten standard errors of zero: ratio not trustworthy.
    pub unreliable: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuasisymmetryReport {
    pub per_orbit: Vec<OrbitRatio>,
    pub lambda: f64,
    /// True when every reliable ratio is below lambda within three standard
    /// errors.
    pub satisfied: bool,
    pub unreliable_count: usize,
}

/// Per-quasiorbit max/min ball-mass ratios of `|f|` over the net.
pub fn quasisymmetry_ratio<F: Fn(&Point) -> f64>(
    f: F,
    net: &Discretization,
    params: &QuasisymmetryParams,
    mc_samples: usize,
    seed: u64,
) -> Result<QuasisymmetryReport> {
    if net.quasiorbits.is_empty() {
        return Err(Error::Precondition("net has no quasiorbit partition".into()));
    }
    let profile = net.local_mass_profile(&f, mc_samples, seed)?;
    let mut per_orbit = Vec::new();
    let mut satisfied = true;
    let mut unreliable_count = 0;
    for (oi, orbit) in net.quasiorbits.iter().enumerate() {
        if oi + 1 < params.base_index {
            continue;
        }
        let mut min = (f64::INFINITY, 0.0);
        let mut max = (0.0f64, 0.0);
        for &pi in orbit {
            let (m, s) = (profile.values[pi], profile.stderrs[pi]);
            if m < min.0 {
                min = (m, s);
            }
            if m > max.0 {
                max = (m, s);
            }
        }
        // `<=` so an exactly-zero mass (zero stderr) is still flagged
        let unreliable = min.0 <= 10.0 * min.1;
        let (ratio, stderr) = if unreliable {
            (f64::INFINITY, f64::INFINITY)
        } else {
            let r = max.0 / min.0;
            (r, r * (max.1 / max.0).hypot(min.1 / min.0))
        };
        if unreliable {
            unreliable_count += 1;
        } else if ratio > params.lambda + 3.0 * stderr {
            satisfied = false;
        }
        per_orbit.push(OrbitRatio { orbit: oi, ratio, stderr, max_mass: max.0, min_mass: min.0, unreliable });
    }
    Ok(QuasisymmetryReport { per_orbit, lambda: params.lambda, satisfied, unreliable_count })
}

// ---------------------------------------------------------------------------
// Domination

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DominationReport {
    pub violation_fraction: f64,
    pub samples: usize,
}

/// Sampled check of `|u| <= b f` outside the excluded ball, with a relative
/// slack of 1e-9 so exact-equality cases are not broken by roundoff.
pub fn domination_check<U: Fn(&Point) -> f64, F: Fn(&Point) -> f64>(
    model: &ManifoldModel,
    u: U,
    f: F,
    b: f64,
    excluded_radius: f64,
    window_radius: f64,
    samples: usize,
    seed: u64,
) -> Result<DominationReport> {
    if !(b > 0.0) {
        return Err(Error::Precondition(format!("domination constant must be positive, got {b}")));
    }
    if !(window_radius > excluded_radius) {
        return Err(Error::Precondition("window must extend beyond the excluded ball".into()));
    }
    let sampler = BallSampler::annulus(model, &model.pole(), excluded_radius, window_radius)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    for _ in 0..samples {
        let x = sampler.sample(&mut rng);
        let lhs = u(&x).abs();
        let rhs = b * f(&x);
        if lhs - rhs > 1e-9 * (lhs + rhs.abs() + 1e-12) {
            violations += 1;
        }
    }
    Ok(DominationReport { violation_fraction: violations as f64 / samples as f64, samples })
}

// ---------------------------------------------------------------------------
// The disjoint-bump witness sequence

/// Group averages of cone bumps at pairwise-far centers; the standard
/// witness that a non-coercive action admits bounded invariant sequences
/// with mass escaping to infinity.
#[derive(Clone, Debug)]
pub struct PsiKWitness {
    action: GroupAction,
    pub centers: Vec<Point>,
    pub radius: f64,
    /// Max sampled orbit diameter among the centers.
    pub orbit_bound: f64,
}

pub fn psi_k_witness(action: &GroupAction, centers: &[Point], r: f64) -> Result<PsiKWitness> {
    if centers.is_empty() || !(r > 0.0) {
        return Err(Error::Precondition("need at least one center and a positive radius".into()));
    }
    let model = action.model().clone();
    for c in centers {
        model.validate_point(c)?;
    }
    let orbit_bound = centers.iter().map(|c| action.orbit_diameter(c)).fold(0.0f64, f64::max);
    let min_gap = 2.0 * (orbit_bound + r);
    for i in 0..centers.len() {
        for j in (i + 1)..centers.len() {
            let d = model.dist(&centers[i], &centers[j]);
            if d <= min_gap {
                return Err(Error::Precondition(format!(
                    "centers {i} and {j} are {d:.3} apart; supports stay disjoint only beyond {min_gap:.3}"
                )));
            }
        }
    }
    Ok(PsiKWitness { action: action.clone(), centers: centers.to_vec(), radius: r, orbit_bound })
}

impl PsiKWitness {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Support of the k-th bump is contained in this ball about its center.
    pub fn support_radius(&self) -> f64 {
        self.orbit_bound + self.radius
    }

    /// `psi_k(x)`: the Haar average of the cone bump at the k-th center.
    pub fn eval(&self, k: usize, x: &Point) -> f64 {
        let c = &self.centers[k];
        let model = self.action.model();
        let f = |y: &Point| (self.radius - model.dist(y, c)).max(0.0);
        self.action.average_at(&f, x)
    }

    /// Exact total mass shared by every bump: averaging over isometries
    /// preserves integrals, so the mass reduces to the cone integral
    /// `int_0^r (r - t) area(t) dt` about a single center.
    pub fn invariant_mass(&self) -> Result<f64> {
        let model = self.action.model().clone();
        let r = self.radius;
        crate::quad::integrate_tight(move |t| (r - t) * model.sphere_area(t).unwrap_or(0.0), 0.0, r)
    }

    fn ball_mc<G: Fn(&Point) -> f64>(&self, k: usize, g: G, samples: usize, seed: u64) -> Result<(f64, f64)> {
        let sampler = BallSampler::ball(self.action.model(), &self.centers[k], self.support_radius())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        crate::manifold::mc_integral(&sampler, g, samples, &mut rng)
    }

    /// Monte Carlo `L^1` mass of the k-th bump.
    pub fn l1_mass(&self, k: usize, samples: usize, seed: u64) -> Result<(f64, f64)> {
        self.ball_mc(k, |x| self.eval(k, x), samples, seed)
    }

    /// Monte Carlo `L^q` mass (the q-th power integral) of the k-th bump.
    pub fn lq_mass(&self, k: usize, q: f64, samples: usize, seed: u64) -> Result<(f64, f64)> {
        self.ball_mc(k, |x| self.eval(k, x).powf(q), samples, seed)
    }

    /// Fraction of samples in the k-th support ball where the l-th bump is
    /// also positive; zero certifies disjoint supports at this resolution.
    pub fn support_overlap(&self, k: usize, l: usize, samples: usize, seed: u64) -> Result<f64> {
        let sampler = BallSampler::ball(self.action.model(), &self.centers[k], self.support_radius())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd15);
        let mut both = 0usize;
        for _ in 0..samples {
            let x = sampler.sample(&mut rng);
            if self.eval(k, &x) > 0.0 && self.eval(l, &x) > 0.0 {
                both += 1;
            }
        }
        Ok(both as f64 / samples as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn transpose(a: &Mat) -> Mat {
        let n = a.len();
        (0..n).map(|i| (0..n).map(|j| a[j][i]).collect()).collect()
    }

    fn euclid(m: usize) -> ManifoldModel {
        ManifoldModel::euclidean(m).unwrap()
    }

    fn so2(model: ManifoldModel) -> GroupAction {
        GroupAction::new(GroupActionConfig::Rotations { k: None }, model).unwrap()
    }

    #[test]
    fn samplers_are_isometries() {
        let actions = vec![
            so2(euclid(2)),
            GroupAction::new(GroupActionConfig::Rotations { k: None }, euclid(3)).unwrap(),
            GroupAction::new(GroupActionConfig::Rotations { k: Some(32) }, ManifoldModel::hyperbolic(2, -1.0).unwrap())
                .unwrap(),
            GroupAction::new(
                GroupActionConfig::CircleTimesRotations { k: Some(16) },
                ManifoldModel::product_circle(2, 1.0).unwrap(),
            )
            .unwrap(),
            GroupAction::new(GroupActionConfig::SubgroupFixingAxis { acting_dim: 2, k: Some(16) }, euclid(3)).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for action in &actions {
            let model = action.model().clone();
            let sampler = BallSampler::window(&model, 2.0).unwrap();
            for _ in 0..20 {
                let x = sampler.sample(&mut rng);
                let y = sampler.sample(&mut rng);
                let d = model.dist(&x, &y);
                for i in 0..action.len() {
                    let dg = model.dist(&action.apply(i, &x), &action.apply(i, &y));
                    assert!((dg - d).abs() < 1e-10, "isometry broken: {dg} vs {d}");
                }
            }
        }
    }

    #[test]
    fn samplers_closed_under_inverse() {
        let action = GroupAction::new(GroupActionConfig::Rotations { k: None }, euclid(3)).unwrap();
        for g in action.elements() {
            let inv = transpose(&g.matrix);
            let found = action.elements().iter().any(|h| {
                h.matrix
                    .iter()
                    .flatten()
                    .zip(inv.iter().flatten())
                    .all(|(a, b)| (a - b).abs() < 1e-9)
            });
            assert!(found, "inverse missing from the grid");
        }
        let circle = so2(euclid(2));
        assert_eq!(circle.len(), DEFAULT_GRID);
    }

    #[test]
    fn icosahedral_grid_is_orthogonal() {
        let action = GroupAction::new(GroupActionConfig::Rotations { k: None }, euclid(3)).unwrap();
        assert_eq!(action.len(), 60);
        for g in action.elements() {
            let gt = transpose(&g.matrix);
            let prod = mat_mul(&g.matrix, &gt);
            for (i, row) in prod.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((v - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn orbit_diameters_match_geometry() {
        let circle = so2(euclid(2));
        assert!((circle.orbit_diameter(&Point(vec![5.0, 0.0])) - 10.0).abs() < 1e-9);
        assert_eq!(circle.orbit_diameter(&Point(vec![0.0, 0.0])), 0.0);
        let axis = GroupAction::new(GroupActionConfig::SubgroupFixingAxis { acting_dim: 2, k: None }, euclid(3)).unwrap();
        for t in [0.0, 7.0, 300.0] {
            let d = axis.orbit_diameter(&Point(vec![1.0, 0.0, t]));
            assert!((d - 2.0).abs() < 1e-9, "orbit diameter {d} at height {t}");
        }
    }

    #[test]
    fn averaging_fixes_radial_functions() {
        let action = GroupAction::new(GroupActionConfig::Rotations { k: None }, euclid(3)).unwrap();
        let f = |x: &Point| (-vecops::norm(x.coords())).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sampler = BallSampler::window(&euclid(3), 5.0).unwrap();
        for _ in 0..100 {
            let x = sampler.sample(&mut rng);
            let avg = action.average_at(&f, &x);
            assert!((avg - f(&x)).abs() < 1e-10);
        }
    }

    #[test]
    fn odd_functions_average_to_exact_zero() {
        let action = so2(euclid(2));
        let f = |x: &Point| x.coords()[0];
        for p in [[3.0, 1.0], [0.25, -2.0], [100.0, 0.5]] {
            let avg = action.average_at(&f, &Point(p.to_vec()));
            assert_eq!(avg, 0.0, "expected bitwise zero, got {avg:e}");
        }
    }

    #[test]
    fn averaging_is_idempotent() {
        let action = GroupAction::new(GroupActionConfig::Rotations { k: None }, euclid(3)).unwrap();
        let f = |x: &Point| (x.coords()[0] + 0.3 * x.coords()[1]).tanh() + x.coords()[2].powi(2);
        let tg = action.average(f);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sampler = BallSampler::window(&euclid(3), 3.0).unwrap();
        for _ in 0..20 {
            let x = sampler.sample(&mut rng);
            let once = tg(&x);
            let twice = action.average_at(&tg, &x);
            assert!((twice - once).abs() <= 1e-10 * (1.0 + once.abs()), "{twice} vs {once}");
        }
    }

    #[test]
    fn grid_energy_is_non_expansive_under_averaging() {
        let grid = PolarGrid::new(6.0, 48, 128).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..10 {
            // random smooth profile: a few Gaussian bumps
            let bumps: Vec<(f64, f64, f64)> = (0..3)
                .map(|_| {
                    (
                        4.0 * rng.random::<f64>() - 2.0,
                        4.0 * rng.random::<f64>() - 2.0,
                        0.5 + rng.random::<f64>(),
                    )
                })
                .collect();
            let f = |x: &Point| -> f64 {
                bumps
                    .iter()
                    .map(|(cx, cy, w)| {
                        let d2 = (x.coords()[0] - cx).powi(2) + (x.coords()[1] - cy).powi(2);
                        (-d2 / (w * w)).exp()
                    })
                    .sum()
            };
            let vals = grid.sample(f);
            let avg = grid.rotation_average(&vals, 64).unwrap();
            let e0 = grid.energy(&vals, 2.0).unwrap();
            let e1 = grid.energy(&avg, 2.0).unwrap();
            assert!(e1 <= e0 * (1.0 + 1e-8), "trial {trial}: energy grew {e0} -> {e1}");
        }
    }

    #[test]
    fn coercivity_verdicts_by_action_type() {
        let radii = [2.0, 4.0, 8.0, 16.0];
        let full2 = so2(euclid(2)).coercivity_verdict(&radii, 10, 3).unwrap();
        assert_eq!(full2.verdict, CoercivityVerdict::Coercive);
        for (d, e) in radii.iter().zip(&full2.envelope) {
            assert!((e - 2.0 * d).abs() < 1e-9, "envelope {e} at {d}");
        }
        let full3 = GroupAction::new(GroupActionConfig::Rotations { k: None }, euclid(3))
            .unwrap()
            .coercivity_verdict(&radii, 10, 3)
            .unwrap();
        assert_eq!(full3.verdict, CoercivityVerdict::Coercive);
        let axis = GroupAction::new(GroupActionConfig::SubgroupFixingAxis { acting_dim: 2, k: None }, euclid(3))
            .unwrap()
            .coercivity_verdict(&radii, 10, 3)
            .unwrap();
        assert_eq!(axis.verdict, CoercivityVerdict::NotCoercive);
        let envelope_spread = axis.envelope.iter().fold(0.0f64, |a, b| a.max((b - 2.0).abs()));
        assert!(envelope_spread < 1e-9, "escaping family orbit diameters drifted");
        let product = GroupAction::new(
            GroupActionConfig::CircleTimesRotations { k: Some(32) },
            ManifoldModel::product_circle(2, 1.0).unwrap(),
        )
        .unwrap()
        .coercivity_verdict(&[2.0, 4.0, 8.0, 16.0], 10, 3)
        .unwrap();
        assert_eq!(product.verdict, CoercivityVerdict::Coercive);
        // plateau at the circle diameter before the Euclidean part takes over
        assert!(product.envelope[0] >= PI - 1e-6);
    }

    #[test]
    fn quasisymmetry_of_invariant_functions() {
        // radial function on concentric circles partitioned by distance:
        // each quasiorbit is one circle, so every ball mass in it agrees up
        // to Monte Carlo error
        let model = euclid(2);
        let mut pts = Vec::new();
        for (rho, n) in [(2.0, 12usize), (3.0, 18), (4.0, 24)] {
            for j in 0..n {
                let t = 2.0 * PI * j as f64 / n as f64;
                pts.push(Point(vec![rho * t.cos(), rho * t.sin()]));
            }
        }
        let base = crate::discretize::Discretization::from_points(&model, pts, 0.5, 1.0, 4.6).unwrap();
        let model2 = model.clone();
        let net = base.orbital_partition(|p| model2.distance_to_pole(p)).unwrap();
        let f = |x: &Point| (-(vecops::norm(x.coords()) - 3.0).powi(2)).exp() + 0.05;
        let params = QuasisymmetryParams::new(1, 1.3).unwrap();
        let report = quasisymmetry_ratio(f, &net, &params, 4_000, 5).unwrap();
        assert!(report.unreliable_count == 0);
        for o in &report.per_orbit {
            assert!(o.ratio < 1.3, "orbit {} ratio {}", o.orbit, o.ratio);
        }
        assert!(report.satisfied);
    }

    #[test]
    fn off_center_bump_is_flagged_unreliable() {
        let model = euclid(2);
        let base = crate::discretize::Discretization::greedy_net(&model, 5.0, 1.0, 78).unwrap();
        let model2 = model.clone();
        let net = base.orbital_partition(|p| model2.distance_to_pole(p)).unwrap();
        // bump covering one net ball only: other balls in its quasiorbit see
        // essentially zero mass
        let target = net.points[3].clone();
        let f = move |x: &Point| {
            let d = vecops::dist(x.coords(), target.coords());
            (1.0 - d * d).max(0.0)
        };
        let params = QuasisymmetryParams::new(1, 2.0).unwrap();
        let report = quasisymmetry_ratio(f, &net, &params, 3_000, 6).unwrap();
        assert!(report.unreliable_count > 0);
    }

    #[test]
    fn domination_accepts_equality_and_flags_excess() {
        let model = euclid(2);
        let f = |x: &Point| 1.0 + vecops::norm(x.coords());
        let ok = domination_check(&model, f, f, 1.0, 2.0, 6.0, 10_000, 1).unwrap();
        assert_eq!(ok.violation_fraction, 0.0);
        let double = |x: &Point| 2.0 * (1.0 + vecops::norm(x.coords()));
        let bad = domination_check(&model, double, f, 1.0, 2.0, 6.0, 10_000, 1).unwrap();
        assert!(bad.violation_fraction > 0.99);
    }

    #[test]
    fn averaged_function_dominates_quasisymmetric_one() {
        // for rotation-invariant |f| the average equals |f|, so the bound
        // with lambda = 1 holds with zero violations
        let model = euclid(2);
        let action = so2(model.clone());
        let f = |x: &Point| 1.0 / (1.0 + vecops::norm(x.coords()));
        let tg = action.average(f);
        let rep = domination_check(&model, f, tg, 1.0, 1.0, 5.0, 5_000, 2).unwrap();
        assert_eq!(rep.violation_fraction, 0.0);
    }

    #[test]
    fn witness_requires_spaced_centers() {
        let action = GroupAction::new(GroupActionConfig::SubgroupFixingAxis { acting_dim: 2, k: Some(32) }, euclid(3)).unwrap();
        let near = vec![Point(vec![1.0, 0.0, 0.0]), Point(vec![1.0, 0.0, 5.0])];
        // orbit diameter 2, radius 1: need spacing > 6
        assert!(matches!(psi_k_witness(&action, &near, 1.0), Err(Error::Precondition(_))));
        let far = vec![Point(vec![1.0, 0.0, 0.0]), Point(vec![1.0, 0.0, 10.0])];
        assert!(psi_k_witness(&action, &far, 1.0).is_ok());
    }

    #[test]
    fn trivial_group_witness_is_the_cone() {
        let action = GroupAction::new(GroupActionConfig::Rotations { k: Some(1) }, euclid(2)).unwrap();
        let w = psi_k_witness(&action, &[Point(vec![3.0, 0.0])], 1.0).unwrap();
        for p in [[3.2, 0.1], [2.5, 0.0], [3.0, 0.9]] {
            let x = Point(p.to_vec());
            let cone = (1.0 - vecops::dist(x.coords(), &[3.0, 0.0])).max(0.0);
            assert!((w.eval(0, &x) - cone).abs() < 1e-12);
        }
    }

    #[test]
    fn witness_masses_and_disjointness() {
        let action = GroupAction::new(GroupActionConfig::SubgroupFixingAxis { acting_dim: 2, k: Some(32) }, euclid(3)).unwrap();
        let centers: Vec<Point> = (0..3).map(|k| Point(vec![1.0, 0.0, 10.0 * k as f64])).collect();
        let w = psi_k_witness(&action, &centers, 1.0).unwrap();
        for k in 0..3 {
            for l in 0..3 {
                if k != l {
                    assert_eq!(w.support_overlap(k, l, 10_000, 3).unwrap(), 0.0);
                }
            }
        }
        let oracle = w.invariant_mass().unwrap();
        let mut masses = Vec::new();
        for k in 0..3 {
            let (m, s) = w.l1_mass(k, 150_000, 9).unwrap();
            assert!((m - oracle).abs() < 3.0 * s + 0.01 * oracle, "mass {m} vs exact {oracle}");
            masses.push(m);
        }
        let spread = (masses.iter().fold(0.0f64, |a, b| a.max(*b))
            - masses.iter().fold(f64::INFINITY, |a, b| a.min(*b)))
            / oracle;
        assert!(spread < 0.05, "masses vary by {spread}");
    }

    #[test]
    fn cone_half_volume_bound() {
        // the cone of height r dominates r/2 on the ball of radius r/2
        let action = GroupAction::new(GroupActionConfig::Rotations { k: Some(1) }, euclid(3)).unwrap();
        let w = psi_k_witness(&action, &[Point(vec![0.0, 0.0, 0.0])], 1.0).unwrap();
        let mass = w.invariant_mass().unwrap();
        let half_ball = euclid(3).ball_volume(0.5).unwrap();
        assert!(mass >= 0.5 * half_ball, "cone mass {mass} below {}", 0.5 * half_ball);
    }
}
