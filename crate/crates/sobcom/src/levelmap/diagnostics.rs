//! Level-set diagnostics: the coarea weight, ball-capture ratios, uniform
//! thickness, and level-diameter scans.
//!
//! All level integrals carry the reciprocal normal Jacobian. The shell
//! estimator exploits that exactly: the volume of `{|phi - z| < h}` divided
//! by `(2h)^n` converges to the weighted level mass, because the Jacobian in
//! the coarea identity cancels against the `1/J` in the integrand. No
//! explicit Jacobian evaluation is needed on the Monte Carlo path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LevelMap, LevelMapKind};
use crate::manifold::{sample_direction, unit_ball_volume, vecops, BallSampler, ManifoldConfig, Point};
use crate::{Error, Result};

fn cell_rng(seed: u64, cell: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ cell.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn z_scale(z: &[f64]) -> f64 {
    z.iter().fold(1.0f64, |a, b| a.max(b.abs()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMethod {
    ClosedForm,
    Shell,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightEstimate {
    pub value: f64,
    pub stderr: f64,
    pub method: WeightMethod,
}

#[derive(Clone, Debug)]
pub struct PsiOpts {
    /// Shell half-width; default `0.01` times the scale of `z`.
    pub shell_width: Option<f64>,
    pub samples: usize,
    /// Sampling window radius about the pole; defaults to a radius bound for
    /// the level. Required for maps with unbounded levels.
    pub window: Option<f64>,
    /// Skip the closed form even when one exists (for cross-checks).
    pub force_shell: bool,
    pub seed: u64,
}

impl Default for PsiOpts {
    fn default() -> Self {
        PsiOpts { shell_width: None, samples: 200_000, window: None, force_shell: false, seed: 0x5eed }
    }
}

/// Euclidean sphere `S^{d-1}` of radius `rho`, as a hypersurface measure.
fn sphere_surface(d: usize, rho: f64) -> f64 {
    d as f64 * unit_ball_volume(d) * rho.powi(d as i32 - 1)
}

impl LevelMap {
    /// Closed-form weight where the level has an explicit parametrization:
    /// spheres (radial, pole distance), products of spheres (block-radial
    /// with Euclidean block norms), and the far circles of the cylinder map.
    pub fn closed_form_psi(&self, z: &[f64]) -> Option<f64> {
        match &self.kind {
            LevelMapKind::Radial => {
                if z[0] < 0.0 {
                    return None;
                }
                Some(sphere_surface(self.source_dim(), z[0]))
            }
            LevelMapKind::PoleDistance => {
                if z[0] < 0.0 {
                    return None;
                }
                self.model.sphere_area(z[0]).ok()
            }
            LevelMapKind::BlockRadial { blocks, exps } => {
                if exps.iter().any(|e| e.0 != 2.0) || z.iter().any(|v| *v < 0.0) {
                    return None;
                }
                Some(blocks.iter().zip(z).map(|(b, zi)| sphere_surface(*b, *zi)).product())
            }
            LevelMapKind::CylinderRadial => {
                if z[0] < 0.0 {
                    return None;
                }
                Some(sphere_surface(self.source_dim() - 1, z[0]))
            }
            _ => None,
        }
    }

    /// Coarea weight of the level `z`: the `1/J`-weighted level measure.
    pub fn weight_psi(&self, z: &[f64], opts: &PsiOpts) -> Result<WeightEstimate> {
        let n = self.target_dim();
        if z.len() != n {
            return Err(Error::Precondition(format!("level has {} components, map target has {n}", z.len())));
        }
        if !opts.force_shell {
            if let Some(v) = self.closed_form_psi(z) {
                return Ok(WeightEstimate { value: v, stderr: 0.0, method: WeightMethod::ClosedForm });
            }
        }
        let h = opts.shell_width.unwrap_or(0.01 * z_scale(z));
        if !(h > 0.0) {
            return Err(Error::Precondition(format!("shell width must be positive, got {h}")));
        }
        let window = match opts.window {
            Some(w) => w,
            None => {
                let z_hi: Vec<f64> = z.iter().map(|v| v + h).collect();
                self.level_radius_bound(&z_hi)
                    .map(|b| b * (1.0 + 1e-9) + 1e-9)
                    .ok_or_else(|| Error::Config("map has unbounded levels: an explicit window is required".into()))?
            }
        };
        if !(window > 0.0) {
            return Err(Error::Estimation(format!("level {z:?} lies outside the map's range")));
        }
        let sampler = BallSampler::window(&self.model, window)?;
        let mut rng = cell_rng(opts.seed, 0x7e11);
        let mut hits = 0usize;
        for _ in 0..opts.samples {
            let p = sampler.sample(&mut rng);
            if self.shell_gap(p.coords(), z) < h {
                hits += 1;
            }
        }
        if hits == 0 {
            return Err(Error::Estimation(format!(
                "empty shell around level {z:?} in window {window}: the level likely misses the window"
            )));
        }
        let frac = hits as f64 / opts.samples as f64;
        let scale = sampler.volume() / (2.0 * h).powi(n as i32);
        let stderr = scale * (frac * (1.0 - frac) / opts.samples as f64).sqrt();
        Ok(WeightEstimate { value: frac * scale, stderr, method: WeightMethod::Shell })
    }
}

/// Tabulated weight values over a level grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightTable {
    pub grid: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub method: WeightMethod,
}

impl LevelMap {
    pub fn weight_table(&self, grid: &[Vec<f64>], opts: &PsiOpts) -> Result<WeightTable> {
        if grid.is_empty() {
            return Err(Error::Precondition("weight table needs a nonempty grid".into()));
        }
        let mut values = Vec::with_capacity(grid.len());
        let mut stderrs = Vec::with_capacity(grid.len());
        let mut method = WeightMethod::ClosedForm;
        for (k, z) in grid.iter().enumerate() {
            let mut o = opts.clone();
            o.seed = opts.seed.wrapping_add(k as u64);
            let est = self.weight_psi(z, &o)?;
            if est.method == WeightMethod::Shell {
                method = WeightMethod::Shell;
            }
            values.push(est.value);
            stderrs.push(est.stderr);
        }
        Ok(WeightTable { grid: grid.to_vec(), values, stderrs, method })
    }
}

impl WeightTable {
    /// Trapezoid integral of `h(z) * Psi(z)` over a scalar grid; the level-set
    /// side of the coarea identity.
    pub fn integrate_with<F: Fn(f64) -> f64>(&self, h: F) -> Result<f64> {
        if self.grid.iter().any(|z| z.len() != 1) {
            return Err(Error::Precondition("quadrature over the table needs a scalar level grid".into()));
        }
        let mut acc = 0.0;
        for k in 1..self.grid.len() {
            let (a, b) = (self.grid[k - 1][0], self.grid[k][0]);
            let (fa, fb) = (h(a) * self.values[k - 1], h(b) * self.values[k]);
            acc += 0.5 * (fa + fb) * (b - a);
        }
        Ok(acc)
    }
}

// ---------------------------------------------------------------------------
// Level point generation

impl LevelMap {
    /// Points on the level `z` at pole distance at least `excluded`, found by
    /// loose-shell sampling plus Newton projection (pole-distance levels are
    /// built directly from geodesics). Returns at most `count` points; fewer
    /// when the eligible part of the level is small or empty.
    pub fn level_points<R: Rng>(
        &self,
        z: &[f64],
        count: usize,
        excluded: f64,
        window: Option<f64>,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        if z.len() != self.target_dim() {
            return Err(Error::Precondition(format!("level has {} components, map target has {}", z.len(), self.target_dim())));
        }
        if let LevelMapKind::PoleDistance = self.kind {
            if z[0] <= excluded || z[0] < 0.0 {
                return Ok(Vec::new());
            }
            if z[0] > self.model.injectivity_radius() {
                return Err(Error::Estimation(
                    "pole-distance level sampling beyond the injectivity radius is not supported".into(),
                ));
            }
            let mut out = Vec::with_capacity(count);
            for _ in 0..count {
                let dir = sample_direction(self.model.dim(), rng);
                out.push(self.model.exp_map(&dir, z[0])?.0);
            }
            return Ok(out);
        }
        let bound = self.level_radius_bound(z);
        let window = match window {
            Some(w) => w,
            None => bound.map(|b| b * 1.02 + 1.0).ok_or_else(|| {
                Error::Config("map has unbounded levels: an explicit window is required".into())
            })?,
        };
        if !(window > 0.0) {
            return Ok(Vec::new());
        }
        let sampler = BallSampler::window(&self.model, window)?;
        // affine levels project exactly from anywhere; curved ones need a
        // starting point already near the level for Newton to contract
        let loose = if matches!(self.kind, LevelMapKind::Projection { .. }) {
            f64::INFINITY
        } else {
            0.05 * z_scale(z)
        };
        let tol = 1e-8 * z_scale(z);
        let mut out = Vec::with_capacity(count);
        for _ in 0..600 * count {
            if out.len() >= count {
                break;
            }
            let p = sampler.sample(rng);
            if self.shell_gap(p.coords(), z) >= loose {
                continue;
            }
            let Some(y) = self.project_to_level(p.coords(), z) else { continue };
            if self.shell_gap(&y, z) > tol {
                continue;
            }
            let d = self.model.distance_to_pole(&Point(y.clone()));
            if d >= excluded && d <= window * (1.0 + 1e-6) {
                out.push(y);
            }
        }
        Ok(out)
    }

    /// All crossings of the ray `t * dir` with the scalar level `z`, by sign
    /// scan and bisection. Used to reach designed witnesses (e.g. the narrow
    /// angular wedge of the bulged map) that plain sampling would miss.
    pub fn ray_level_crossings(&self, dir: &[f64], z: f64) -> Vec<Vec<f64>> {
        let Some(bound) = self.level_radius_bound(&[z]) else { return Vec::new() };
        let t_max = bound * 1.5 + 1.0;
        let steps = 800;
        let phi = |t: f64| -> f64 {
            let x: Vec<f64> = dir.iter().map(|d| d * t).collect();
            self.eval(&x)[0] - z
        };
        let mut out = Vec::new();
        let mut t_prev = t_max * 1e-9;
        let mut f_prev = phi(t_prev);
        for k in 1..=steps {
            let t = t_max * k as f64 / steps as f64;
            let f = phi(t);
            if f_prev == 0.0 {
                out.push(t_prev);
            } else if f_prev * f < 0.0 {
                let (mut lo, mut hi) = (t_prev, t);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if phi(lo) * phi(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
            t_prev = t;
            f_prev = f;
        }
        out.into_iter().map(|t| dir.iter().map(|d| d * t).collect()).collect()
    }

    /// Candidate witness points on the level for sup-searches: sampled level
    /// points plus deterministic ray crossings (dense near the positive
    /// x-axis for the bulged map, whose interesting features live in an
    /// angular wedge of width shrinking like one over radius squared).
    fn level_candidates<R: Rng>(
        &self,
        z: &[f64],
        count: usize,
        excluded: f64,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        let mut cands = self.level_points(z, count, excluded, None, rng)?;
        if self.target_dim() == 1 && !matches!(self.kind, LevelMapKind::PoleDistance) {
            let dirs: Vec<Vec<f64>> = if matches!(self.kind, LevelMapKind::Bulged { .. }) {
                let mut angles = vec![0.0f64];
                for k in 0..16 {
                    let a = 1e-5 * (0.4f64 / 1e-5).powf(k as f64 / 15.0);
                    angles.push(a);
                    angles.push(-a);
                }
                for k in 1..8 {
                    angles.push(std::f64::consts::PI * k as f64 / 8.0);
                }
                angles.iter().map(|a| vec![a.cos(), a.sin()]).collect()
            } else {
                (0..8).map(|_| sample_direction(self.source_dim(), rng)).collect()
            };
            for dir in dirs {
                for y in self.ray_level_crossings(&dir, z[0]) {
                    if self.model.distance_to_pole(&Point(y.clone())) >= excluded {
                        cands.push(y);
                    }
                }
            }
        }
        Ok(cands)
    }

    /// Weighted level mass captured by the ball `B(y, r)`, by the shell
    /// estimator restricted to the ball.
    pub fn local_level_mass<R: Rng>(
        &self,
        y: &[f64],
        r: f64,
        z: &[f64],
        h: f64,
        samples: usize,
        rng: &mut R,
    ) -> Result<(f64, f64)> {
        let sampler = BallSampler::ball(&self.model, &Point(y.to_vec()), r)?;
        let mut hits = 0usize;
        for _ in 0..samples {
            let p = sampler.sample(rng);
            if self.shell_gap(p.coords(), z) < h {
                hits += 1;
            }
        }
        let n = self.target_dim() as i32;
        let frac = hits as f64 / samples as f64;
        let scale = sampler.volume() / (2.0 * h).powi(n);
        Ok((frac * scale, scale * (frac * (1.0 - frac) / samples as f64).sqrt()))
    }

    /// Default scalar level grid for exhaustion scans: levels hugging the
    /// excluded ball from outside, where the capture ratio peaks.
    pub fn default_level_grid(&self, excluded_radius: f64) -> Result<Vec<Vec<f64>>> {
        match self.target_dim() {
            1 => Ok([1.000_001, 1.05, 1.12, 1.2, 1.3, 1.45]
                .iter()
                .map(|f| vec![excluded_radius * f])
                .collect()),
            2 if matches!(self.kind, LevelMapKind::CylinderRadial) => {
                let a = excluded_radius;
                Ok(vec![vec![1.0, a], vec![1.0, 1.2 * a], vec![2.0, a]])
            }
            _ => Err(Error::Config("no default level grid for this map: provide one explicitly".into())),
        }
    }
}

// ---------------------------------------------------------------------------
// delta_r

#[derive(Clone, Debug)]
pub struct DeltaROpts {
    /// Witness centers must lie outside the ball of this radius at the pole.
    pub excluded_radius: f64,
    pub ball_radius: f64,
    /// Levels to scan; empty means the default grid.
    pub levels: Vec<Vec<f64>>,
    pub candidates_per_level: usize,
    pub numerator_samples: usize,
    pub denominator_samples: usize,
    pub shell_width: Option<f64>,
    pub seed: u64,
}

impl DeltaROpts {
    pub fn new(excluded_radius: f64, ball_radius: f64) -> Self {
        DeltaROpts {
            excluded_radius,
            ball_radius,
            levels: Vec::new(),
            candidates_per_level: 16,
            numerator_samples: 60_000,
            denominator_samples: 400_000,
            shell_width: None,
            seed: 0x51ab,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelWitness {
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub ratio: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaRResult {
    /// The empirical sup of captured-mass fractions, clamped to `[0, 1]`.
    pub value: f64,
    pub stderr: f64,
    pub witness: Option<LevelWitness>,
    pub scanned_levels: usize,
    /// Levels dropped because their weight estimate was unreliable (below
    /// ten standard errors) or unavailable.
    pub skipped_levels: Vec<Vec<f64>>,
}

impl LevelMap {
    /// Worst-case fraction of a level's weighted mass captured by a ball of
    /// radius `ball_radius` centered outside the excluded ball. The sup over
    /// centers and levels is approximated from below by grid search with the
    /// witness reported, so downstream verdicts rely on trends rather than
    /// single values.
    pub fn delta_r(&self, opts: &DeltaROpts) -> Result<DeltaRResult> {
        if !(opts.ball_radius > 0.0) || !(opts.excluded_radius > 0.0) {
            return Err(Error::Precondition("ball and exclusion radii must be positive".into()));
        }
        let levels = if opts.levels.is_empty() {
            self.default_level_grid(opts.excluded_radius)?
        } else {
            opts.levels.clone()
        };
        let h_default = |z: &[f64]| 0.01f64.min(opts.ball_radius / 8.0 / z_scale(z)) * z_scale(z);
        let mut best: Option<LevelWitness> = None;
        let mut skipped = Vec::new();
        let mut scanned = 0usize;
        for (li, z) in levels.iter().enumerate() {
            let h = opts.shell_width.unwrap_or_else(|| h_default(z));
            let den = match self.weight_psi(
                z,
                &PsiOpts {
                    shell_width: Some(h),
                    samples: opts.denominator_samples,
                    window: None,
                    force_shell: false,
                    seed: opts.seed.wrapping_add(li as u64),
                },
            ) {
                Ok(d) => d,
                Err(Error::Estimation(_)) => {
                    skipped.push(z.clone());
                    continue;
                }
                Err(e) => return Err(e),
            };
            if den.method == WeightMethod::Shell && den.value < 10.0 * den.stderr {
                skipped.push(z.clone());
                continue;
            }
            let mut rng = cell_rng(opts.seed, 0xca9d ^ li as u64);
            let cands = self.level_candidates(z, opts.candidates_per_level, opts.excluded_radius, &mut rng)?;
            if cands.is_empty() {
                continue;
            }
            scanned += 1;
            for (ci, y) in cands.iter().enumerate() {
                let mut nrng = cell_rng(opts.seed, (li as u64) << 32 | ci as u64);
                let (num, num_se) =
                    self.local_level_mass(y, opts.ball_radius, z, h, opts.numerator_samples, &mut nrng)?;
                if num <= 0.0 {
                    continue;
                }
                let ratio = num / den.value;
                let rel = (num_se / num).hypot(if den.value > 0.0 { den.stderr / den.value } else { 0.0 });
                if best.as_ref().map_or(true, |b| ratio > b.ratio) {
                    best = Some(LevelWitness { z: z.clone(), y: y.clone(), ratio, stderr: ratio * rel });
                }
            }
        }
        let Some(w) = best else {
            return Err(Error::Estimation(
                "no usable level: every grid level was skipped or had no eligible centers".into(),
            ));
        };
        Ok(DeltaRResult {
            value: w.ratio.clamp(0.0, 1.0),
            stderr: w.stderr,
            witness: Some(w),
            scanned_levels: scanned,
            skipped_levels: skipped,
        })
    }
}

// ---------------------------------------------------------------------------
// sigma_R and the far-ball bound

/// A tent test profile on the level variable: `t -> max(0, 1 - |t-c|/w)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TestProfile {
    pub name: String,
    pub center: f64,
    pub width: f64,
}

impl TestProfile {
    pub fn eval(&self, t: f64) -> f64 {
        (1.0 - (t - self.center).abs() / self.width).max(0.0)
    }
}

#[derive(Clone, Debug)]
pub struct SigmaROpts {
    pub far_radius: f64,
    pub ball_radius: f64,
    /// Exponent applied to the composed profile before integrating.
    pub q: f64,
    /// Uniform-thickness constant entering the pigeonhole bound; exactly 1
    /// for rotationally invariant maps.
    pub epsilon_thick: f64,
    pub window: Option<f64>,
    /// Empty means the default tent family straddling the far radius.
    pub profiles: Vec<TestProfile>,
    pub coarse_samples: usize,
    pub refine_samples: usize,
    pub refine_top: usize,
    pub chain_points: usize,
    pub seed: u64,
}

impl SigmaROpts {
    pub fn new(far_radius: f64, ball_radius: f64) -> Self {
        SigmaROpts {
            far_radius,
            ball_radius,
            q: 4.0,
            epsilon_thick: 1.0,
            window: None,
            profiles: Vec::new(),
            coarse_samples: 25_000,
            refine_samples: 400_000,
            refine_top: 8,
            chain_points: 4_000,
            seed: 0x519a,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SigmaRResult {
    pub value: f64,
    pub stderr: f64,
    /// Disjoint-ball count on the witness level from the greedy chain.
    pub disjoint_balls: usize,
    /// Pigeonhole bound `1 / (epsilon_thick * disjoint_balls)`.
    pub bound: f64,
    pub epsilon_thick: f64,
    pub witness_profile: String,
    pub witness_center: Vec<f64>,
    pub chain_level: Vec<f64>,
}

/// Greedy chain packing: starting from `start`, repeatedly append the point
/// closest to the last kept one among those at distance at least `min_sep`
/// from every kept point. On a closed level curve this marches around it
/// with near-minimal steps, so the count approaches the optimal packing.
pub fn greedy_chain_count(map: &LevelMap, pts: &[Vec<f64>], start: usize, min_sep: f64) -> usize {
    if pts.is_empty() {
        return 0;
    }
    let d = |a: &[f64], b: &[f64]| map.model.dist(&Point(a.to_vec()), &Point(b.to_vec()));
    let mut kept: Vec<usize> = vec![start.min(pts.len() - 1)];
    loop {
        let last = kept[kept.len() - 1];
        let mut next: Option<(usize, f64)> = None;
        'cand: for (i, p) in pts.iter().enumerate() {
            for &k in &kept {
                if d(p, &pts[k]) < min_sep {
                    continue 'cand;
                }
            }
            let dl = d(p, &pts[last]);
            if next.map_or(true, |(_, best)| dl < best) {
                next = Some((i, dl));
            }
        }
        match next {
            Some((i, _)) => kept.push(i),
            None => break,
        }
    }
    kept.len()
}

impl LevelMap {
    /// Worst-case fraction of the `L^q` mass of a composed profile captured
    /// by a far ball, with the disjoint-ball pigeonhole bound it must obey.
    pub fn sigma_r(&self, opts: &SigmaROpts) -> Result<SigmaRResult> {
        if self.target_dim() != 1 {
            return Err(Error::Config("the far-ball functional uses scalar level profiles".into()));
        }
        let (rr, r) = (opts.far_radius, opts.ball_radius);
        if !(rr > r && r > 0.0) {
            return Err(Error::Precondition(format!("need far radius > ball radius > 0, got {rr}, {r}")));
        }
        let profiles = if opts.profiles.is_empty() {
            let mut v = Vec::new();
            for (ci, c) in [rr, rr + 0.5 * r, rr + r, rr + 2.0 * r].iter().enumerate() {
                for (wi, w) in [0.5 * r, r, 2.0 * r].iter().enumerate() {
                    v.push(TestProfile { name: format!("tent_c{ci}_w{wi}"), center: *c, width: *w });
                }
            }
            v
        } else {
            opts.profiles.clone()
        };
        let reach = profiles.iter().map(|p| p.center + p.width).fold(0.0f64, f64::max);
        let window = match opts.window {
            Some(w) => w,
            None => self
                .level_radius_bound(&[reach])
                .map(|b| b * 1.001 + 1.0)
                .ok_or_else(|| Error::Config("map has unbounded levels: an explicit window is required".into()))?,
        };

        // denominators: global L^q masses of the composed profiles
        let win_sampler = BallSampler::window(&self.model, window)?;
        let mut dens = Vec::with_capacity(profiles.len());
        for (pi, prof) in profiles.iter().enumerate() {
            let mut rng = cell_rng(opts.seed, 0xd0_0000 | pi as u64);
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..opts.refine_samples {
                let p = win_sampler.sample(&mut rng);
                let v = prof.eval(self.eval(p.coords())[0]).powf(opts.q);
                sum += v;
                sq += v * v;
            }
            let n = opts.refine_samples as f64;
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0);
            if mean <= 0.0 {
                return Err(Error::Estimation(format!("profile {} has no mass in the window", prof.name)));
            }
            dens.push((mean * win_sampler.volume(), win_sampler.volume() * (var / n).sqrt()));
        }

        // candidate far centers: on the boundary levels and in the fringe annulus
        let mut rng = cell_rng(opts.seed, 0xce_0000);
        let mut centers: Vec<Vec<f64>> = Vec::new();
        for lf in [1.0 + 1e-9, 1.0 + 0.5 * r / rr, 1.0 + r / rr] {
            let z = rr * lf;
            if let Ok(pts) = self.level_points(&[z], 6, rr, None, &mut rng) {
                centers.extend(pts);
            }
        }
        let fringe = BallSampler::annulus(&self.model, &self.model.pole(), rr * (1.0 + 1e-9), rr + 2.0 * r)?;
        for _ in 0..30 {
            centers.push(fringe.sample(&mut rng).0);
        }

        let ball_mean = |y: &[f64], prof: &TestProfile, samples: usize, rng: &mut ChaCha8Rng| -> Result<(f64, f64)> {
            let s = BallSampler::ball(&self.model, &Point(y.to_vec()), r)?;
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..samples {
                let p = s.sample(rng);
                let v = prof.eval(self.eval(p.coords())[0]).powf(opts.q);
                sum += v;
                sq += v * v;
            }
            let n = samples as f64;
            let mean = sum / n;
            let var = (sq / n - mean * mean).max(0.0);
            Ok((mean * s.volume(), s.volume() * (var / n).sqrt()))
        };

        // coarse pass over all cells, then refine the leaders
        let mut cells: Vec<(usize, usize, f64)> = Vec::new();
        for (pi, prof) in profiles.iter().enumerate() {
            for (ci, y) in centers.iter().enumerate() {
                let mut crng = cell_rng(opts.seed, (pi as u64) << 40 | (ci as u64) << 8 | 1);
                let (num, _) = ball_mean(y, prof, opts.coarse_samples, &mut crng)?;
                cells.push((pi, ci, num / dens[pi].0));
            }
        }
        cells.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
        let mut best: Option<(f64, f64, usize, usize)> = None;
        for &(pi, ci, _) in cells.iter().take(opts.refine_top.max(1)) {
            let mut crng = cell_rng(opts.seed, (pi as u64) << 40 | (ci as u64) << 8 | 2);
            let (num, num_se) = ball_mean(&centers[ci], &profiles[pi], opts.refine_samples, &mut crng)?;
            let ratio = num / dens[pi].0;
            let rel = if num > 0.0 { (num_se / num).hypot(dens[pi].1 / dens[pi].0) } else { 0.0 };
            if best.map_or(true, |(v, _, _, _)| ratio > v) {
                best = Some((ratio, ratio * rel, pi, ci));
            }
        }
        let (value, stderr, pi, ci) =
            best.ok_or_else(|| Error::Estimation("no far-ball candidates produced a ratio".into()))?;

        // disjoint-ball chain on the witness level
        let z_star = self.eval(&centers[ci]);
        let mut crng = cell_rng(opts.seed, 0xc4a1);
        let chain_pts = self.level_points(&z_star, opts.chain_points, 0.0, None, &mut crng)?;
        if chain_pts.len() < 2 {
            return Err(Error::Estimation("witness level yielded too few points for the chain".into()));
        }
        let start = chain_pts
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                vecops::dist(a, &centers[ci]).partial_cmp(&vecops::dist(b, &centers[ci])).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        let j = greedy_chain_count(self, &chain_pts, start, 2.0 * r);
        if j == 0 {
            return Err(Error::Estimation("greedy chain found no disjoint balls".into()));
        }
        Ok(SigmaRResult {
            value: value.clamp(0.0, 1.0),
            stderr,
            disjoint_balls: j,
            bound: 1.0 / (opts.epsilon_thick * j as f64),
            epsilon_thick: opts.epsilon_thick,
            witness_profile: profiles[pi].name.clone(),
            witness_center: centers[ci].clone(),
            chain_level: z_star,
        })
    }
}

// ---------------------------------------------------------------------------
// Uniform thickness

#[derive(Clone, Debug)]
pub struct ThicknessOpts {
    pub excluded_radius: f64,
    pub ball_radius: f64,
    pub levels: Vec<Vec<f64>>,
    pub candidates_per_level: usize,
    pub samples: usize,
    pub shell_width: Option<f64>,
    pub seed: u64,
}

impl ThicknessOpts {
    pub fn new(excluded_radius: f64, ball_radius: f64) -> Self {
        ThicknessOpts {
            excluded_radius,
            ball_radius,
            levels: Vec::new(),
            candidates_per_level: 16,
            samples: 150_000,
            shell_width: None,
            seed: 0x791c,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelThickness {
    pub z: Vec<f64>,
    pub min_mass: f64,
    pub max_mass: f64,
    pub ratio: f64,
    pub min_at: Vec<f64>,
    pub max_at: Vec<f64>,
    /// Set when the smallest mass is within ten standard errors of zero.
    pub low_confidence: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThicknessResult {
    /// Empirical uniform-thickness constant: the worst inf/sup ratio of
    /// local level masses over the scanned levels.
    pub epsilon_thick: f64,
    pub per_level: Vec<LevelThickness>,
    pub witness_level: usize,
}

impl LevelMap {
    pub fn thickness_ratio(&self, opts: &ThicknessOpts) -> Result<ThicknessResult> {
        if !(opts.ball_radius > 0.0) {
            return Err(Error::Precondition("ball radius must be positive".into()));
        }
        let levels = if opts.levels.is_empty() {
            self.default_level_grid(opts.excluded_radius)?
        } else {
            opts.levels.clone()
        };
        let mut per_level = Vec::new();
        for (li, z) in levels.iter().enumerate() {
            let h = opts.shell_width.unwrap_or_else(|| {
                0.01f64.min(opts.ball_radius / 8.0 / z_scale(z)) * z_scale(z)
            });
            let mut rng = cell_rng(opts.seed, 0x7a1 ^ li as u64);
            let cands = self.level_candidates(z, opts.candidates_per_level, opts.excluded_radius, &mut rng)?;
            if cands.is_empty() {
                continue;
            }
            let mut lo: Option<(f64, f64, usize)> = None;
            let mut hi: Option<(f64, usize)> = None;
            for (ci, y) in cands.iter().enumerate() {
                let mut nrng = cell_rng(opts.seed, 0xb00 ^ (li as u64) << 24 ^ ci as u64);
                let (mass, se) = self.local_level_mass(y, opts.ball_radius, z, h, opts.samples, &mut nrng)?;
                if lo.as_ref().map_or(true, |(m, _, _)| mass < *m) {
                    lo = Some((mass, se, ci));
                }
                if hi.as_ref().map_or(true, |(m, _)| mass > *m) {
                    hi = Some((mass, ci));
                }
            }
            let (min_mass, min_se, min_ci) = lo.unwrap();
            let (max_mass, max_ci) = hi.unwrap();
            if max_mass <= 0.0 {
                continue;
            }
            per_level.push(LevelThickness {
                z: z.clone(),
                min_mass,
                max_mass,
                ratio: (min_mass / max_mass).clamp(0.0, 1.0),
                min_at: cands[min_ci].clone(),
                max_at: cands[max_ci].clone(),
                low_confidence: min_mass < 10.0 * min_se,
            });
        }
        if per_level.is_empty() {
            return Err(Error::Estimation("no level produced a thickness ratio".into()));
        }
        let witness_level = per_level
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.ratio.partial_cmp(&b.ratio).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        Ok(ThicknessResult { epsilon_thick: per_level[witness_level].ratio, per_level, witness_level })
    }
}

// ---------------------------------------------------------------------------
// Level diameters and coercivity of the map

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelCoercivityVerdict {
    /// Lower envelope of level diameters diverges over the window.
    LevelCoercive,
    /// Far base points with small level diameter were exhibited.
    NotLevelCoercive,
    /// Flat but window-spanning diameters (or too little data): the bounded
    /// witness is absent yet divergence cannot be certified.
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiameterPoint {
    pub distance: f64,
    pub diameter: f64,
    pub low_confidence: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelDiameterCurve {
    pub points: Vec<DiameterPoint>,
    pub verdict: LevelCoercivityVerdict,
}

#[derive(Clone, Debug)]
pub struct DiameterOpts {
    pub samples_per_level: usize,
    pub window: Option<f64>,
    pub seed: u64,
}

impl Default for DiameterOpts {
    fn default() -> Self {
        DiameterOpts { samples_per_level: 60, window: None, seed: 0xd1a }
    }
}

impl LevelMap {
    /// Estimated level-set diameter through each base point, against the base
    /// point's distance from the pole. Diameters are max pairwise distances
    /// over sampled level points, hence slight underestimates.
    pub fn level_diameter_curve(&self, base_points: &[Point], opts: &DiameterOpts) -> Result<LevelDiameterCurve> {
        if base_points.len() < 4 {
            return Err(Error::Precondition("need at least 4 base points spanning increasing distances".into()));
        }
        let mut rng = cell_rng(opts.seed, 0);
        let mut points = Vec::with_capacity(base_points.len());
        for bp in base_points {
            let z = self.evaluate(bp)?;
            let mut pts = self.level_points(&z, opts.samples_per_level, 0.0, opts.window, &mut rng)?;
            pts.push(bp.coords().to_vec());
            let low_confidence = pts.len() < 2;
            let mut diam = 0.0f64;
            for i in 0..pts.len() {
                for j in (i + 1)..pts.len() {
                    diam = diam.max(self.model.dist(&Point(pts[i].clone()), &Point(pts[j].clone())));
                }
            }
            points.push(DiameterPoint {
                distance: self.model.distance_to_pole(bp),
                diameter: diam,
                low_confidence,
            });
        }
        points.sort_by(|a, b| a.distance.partial_cmp(&b.distance).unwrap());
        let verdict = diameter_verdict(&points);
        Ok(LevelDiameterCurve { points, verdict })
    }
}

/// Verdict from the lower envelope of the diameter curve, over four distance
/// bands: coercive needs the envelope to double while never dropping by more
/// than 10%; not coercive needs a flat envelope that stays small relative to
/// the distances reached; anything else is inconclusive.
fn diameter_verdict(points: &[DiameterPoint]) -> LevelCoercivityVerdict {
    let good: Vec<&DiameterPoint> = points.iter().filter(|p| !p.low_confidence).collect();
    if good.len() < 8 || good.len() < points.len() / 2 {
        return LevelCoercivityVerdict::Inconclusive;
    }
    let bands = 4;
    let mut minima = vec![f64::INFINITY; bands];
    for (i, p) in good.iter().enumerate() {
        let b = (i * bands / good.len()).min(bands - 1);
        minima[b] = minima[b].min(p.diameter);
    }
    let d_max = good.last().unwrap().distance;
    let incr = (1..bands).all(|b| minima[b] >= 0.9 * minima[b - 1]);
    if incr && minima[bands - 1] >= 2.0 * minima[0] {
        LevelCoercivityVerdict::LevelCoercive
    } else if minima[bands - 1] <= 1.2 * minima[0] && minima[bands - 1] <= 0.5 * d_max {
        LevelCoercivityVerdict::NotLevelCoercive
    } else {
        LevelCoercivityVerdict::Inconclusive
    }
}

// ---------------------------------------------------------------------------
// Trends and the assembled report

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendVerdict {
    Vanishes,
    BoundedBelow,
    Inconclusive,
}

/// True when the sequence is nonincreasing up to three combined standard
/// errors between consecutive entries.
pub fn monotone_within_noise(values: &[f64], stderrs: &[f64]) -> bool {
    values
        .windows(2)
        .zip(stderrs.windows(2))
        .all(|(v, s)| v[1] <= v[0] + 3.0 * (s[0] + s[1]))
}

/// Classify an exhaustion trend. Vanishing requires at least four radii, a
/// noise-monotone decrease, and the last value at most half the first;
/// bounded-below requires the last value to stay above 80% of the first.
pub fn classify_trend(values: &[f64], stderrs: &[f64]) -> TrendVerdict {
    if values.len() >= 4 && monotone_within_noise(values, stderrs) && values[values.len() - 1] <= 0.5 * values[0] {
        TrendVerdict::Vanishes
    } else if values.len() >= 2 && values[values.len() - 1] + 3.0 * stderrs[stderrs.len() - 1] >= 0.8 * values[0] {
        TrendVerdict::BoundedBelow
    } else {
        TrendVerdict::Inconclusive
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DeltaExhaustion {
    pub radii: Vec<f64>,
    pub results: Vec<DeltaRResult>,
    pub monotone_within_noise: bool,
    pub verdict: TrendVerdict,
}

impl LevelMap {
    /// Run `delta_r` along a growing exhaustion of pole-centered balls and
    /// classify the trend.
    pub fn delta_exhaustion(&self, radii: &[f64], template: &DeltaROpts) -> Result<DeltaExhaustion> {
        if radii.len() < 2 || radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Precondition("exhaustion radii must be strictly increasing, at least two".into()));
        }
        let mut results = Vec::with_capacity(radii.len());
        for (k, rr) in radii.iter().enumerate() {
            let mut o = template.clone();
            o.excluded_radius = *rr;
            o.levels = template.levels.clone();
            o.seed = template.seed.wrapping_add((k as u64) << 16);
            results.push(self.delta_r(&o)?);
        }
        let values: Vec<f64> = results.iter().map(|r| r.value).collect();
        let stderrs: Vec<f64> = results.iter().map(|r| r.stderr).collect();
        Ok(DeltaExhaustion {
            radii: radii.to_vec(),
            monotone_within_noise: monotone_within_noise(&values, &stderrs),
            verdict: classify_trend(&values, &stderrs),
            results,
        })
    }
}

/// Everything the exhaustion scan learned about one map, in exportable form.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub map_kind: LevelMapKind,
    pub manifold: ManifoldConfig,
    pub ball_radius: f64,
    pub delta: Option<DeltaExhaustion>,
    pub sigma: Option<Vec<SigmaRResult>>,
    pub thickness: Option<ThicknessResult>,
    pub diameter_curve: Option<LevelDiameterCurve>,
}
