//! Model manifolds with poles: Euclidean space, hyperbolic space of constant
//! negative curvature, and the flat product of a circle with Euclidean space.
//!
//! All three are homogeneous, so ball volumes and sphere areas depend only on
//! the radius. Hyperbolic points live in Poincare ball coordinates (chart norm
//! strictly below one); conversions to the polar chart at the pole are exact.
//! Product points are stored as an angle in `[0, 2 pi)` followed by the
//! Euclidean coordinates. Sampling uniformly with respect to Riemannian
//! volume inside balls and annuli is provided for every model and is the
//! backbone of the Monte Carlo estimators in the other modules.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{quad, Error, Result};

pub const UNIT_NORM_TOL: f64 = 1e-12;

/// A chart point. Interpretation depends on the model: Cartesian coordinates
/// for Euclidean space, Poincare ball coordinates for hyperbolic space, and
/// `(angle, euclidean...)` for the circle product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

pub(crate) mod vecops {
    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    pub fn norm(a: &[f64]) -> f64 {
        dot(a, a).sqrt()
    }

    pub fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }

    pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
        a.iter().map(|x| x * s).collect()
    }

    pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }
}

/// Volume of the unit ball in `R^m`, by the two-step recursion.
pub fn unit_ball_volume(m: usize) -> f64 {
    match m {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(m - 2) * 2.0 * std::f64::consts::PI / m as f64,
    }
}

/// Wrap an angle into `[0, 2 pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut t = theta % two_pi;
    if t < 0.0 {
        t += two_pi;
    }
    if t >= two_pi {
        t = 0.0;
    }
    t
}

/// Shorter arc between two angles, in `[0, pi]`.
fn arc_gap(a: f64, b: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let d = (a - b).rem_euclid(two_pi);
    d.min(two_pi - d)
}

/// JSON descriptor for a model manifold, as accepted by the command line and
/// sidecar files: `{"kind": "...", "dim": m, "curvature": k, "circle_radius": rho}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifoldConfig {
    pub kind: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circle_radius: Option<f64>,
}

/// A homogeneous model manifold with a distinguished pole.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldModel {
    Euclidean { dim: usize },
    Hyperbolic { dim: usize, curvature: f64 },
    /// `S^1 x R^n` with the product metric; `dim = euclidean_dim + 1`.
    ProductCircle { euclidean_dim: usize, circle_radius: f64 },
}

impl ManifoldModel {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config("euclidean dimension must be at least 2".into()));
        }
        Ok(ManifoldModel::Euclidean { dim })
    }

    pub fn hyperbolic(dim: usize, curvature: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Config("hyperbolic dimension must be at least 2".into()));
        }
        if !(curvature < 0.0) || !curvature.is_finite() {
            return Err(Error::Config(format!("hyperbolic curvature must be negative, got {curvature}")));
        }
        Ok(ManifoldModel::Hyperbolic { dim, curvature })
    }

    pub fn product_circle(euclidean_dim: usize, circle_radius: f64) -> Result<Self> {
        if euclidean_dim < 2 {
            return Err(Error::Config("product euclidean factor must have dimension at least 2".into()));
        }
        if !(circle_radius > 0.0) || !circle_radius.is_finite() {
            return Err(Error::Config(format!("circle radius must be positive, got {circle_radius}")));
        }
        Ok(ManifoldModel::ProductCircle { euclidean_dim, circle_radius })
    }

    pub fn from_config(cfg: &ManifoldConfig) -> Result<Self> {
        match cfg.kind.as_str() {
            "euclidean" => Self::euclidean(cfg.dim),
            "hyperbolic" => {
                let k = cfg.curvature.ok_or_else(|| Error::Config("hyperbolic descriptor needs \"curvature\"".into()))?;
                Self::hyperbolic(cfg.dim, k)
            }
            "product_circle" => {
                let rho = cfg.circle_radius.unwrap_or(1.0);
                if cfg.dim < 3 {
                    return Err(Error::Config("product_circle total dimension must be at least 3".into()));
                }
                Self::product_circle(cfg.dim - 1, rho)
            }
            other => Err(Error::Config(format!(
                "unknown manifold kind {other:?} (expected euclidean, hyperbolic, or product_circle)"
            ))),
        }
    }

    pub fn to_config(&self) -> ManifoldConfig {
        match *self {
            ManifoldModel::Euclidean { dim } => ManifoldConfig { kind: "euclidean".into(), dim, curvature: None, circle_radius: None },
            ManifoldModel::Hyperbolic { dim, curvature } => {
                ManifoldConfig { kind: "hyperbolic".into(), dim, curvature: Some(curvature), circle_radius: None }
            }
            ManifoldModel::ProductCircle { euclidean_dim, circle_radius } => ManifoldConfig {
                kind: "product_circle".into(),
                dim: euclidean_dim + 1,
                curvature: None,
                circle_radius: Some(circle_radius),
            },
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            ManifoldModel::Euclidean { dim } => dim,
            ManifoldModel::Hyperbolic { dim, .. } => dim,
            ManifoldModel::ProductCircle { euclidean_dim, .. } => euclidean_dim + 1,
        }
    }

    /// Curvature length scale `1/sqrt(-k)` for hyperbolic models.
    fn curvature_scale(&self) -> f64 {
        match *self {
            ManifoldModel::Hyperbolic { curvature, .. } => 1.0 / (-curvature).sqrt(),
            _ => 1.0,
        }
    }

    pub fn injectivity_radius(&self) -> f64 {
        match *self {
            ManifoldModel::ProductCircle { circle_radius, .. } => std::f64::consts::PI * circle_radius,
            _ => f64::INFINITY,
        }
    }

    pub fn ricci_lower_bound(&self) -> f64 {
        match *self {
            ManifoldModel::Hyperbolic { dim, curvature } => (dim as f64 - 1.0) * curvature,
            _ => 0.0,
        }
    }

    /// Infimum over centers of the unit ball volume; equal to the unit ball
    /// volume by homogeneity.
    pub fn unit_ball_volume_infimum(&self) -> f64 {
        self.ball_volume(1.0).expect("unit radius is valid")
    }

    pub fn pole(&self) -> Point {
        Point(vec![0.0; self.dim()])
    }

    pub fn validate_point(&self, p: &Point) -> Result<()> {
        if p.dim() != self.dim() {
            return Err(Error::Domain(format!(
                "point has {} coordinates, model expects {}",
                p.dim(),
                self.dim()
            )));
        }
        if p.0.iter().any(|c| !c.is_finite()) {
            return Err(Error::Domain("point has non-finite coordinates".into()));
        }
        match *self {
            ManifoldModel::Hyperbolic { .. } => {
                if vecops::norm(&p.0) >= 1.0 {
                    return Err(Error::Domain("Poincare ball coordinates must have norm < 1".into()));
                }
            }
            ManifoldModel::ProductCircle { .. } => {
                let two_pi = 2.0 * std::f64::consts::PI;
                if !(0.0..two_pi).contains(&p.0[0]) {
                    return Err(Error::Domain(format!("angle coordinate {} outside [0, 2 pi)", p.0[0])));
                }
            }
            ManifoldModel::Euclidean { .. } => {}
        }
        Ok(())
    }

    /// Geodesic distance. Trusts that both points are valid chart points.
    pub fn dist(&self, x: &Point, y: &Point) -> f64 {
        match *self {
            ManifoldModel::Euclidean { .. } => vecops::dist(&x.0, &y.0),
            ManifoldModel::Hyperbolic { .. } => {
                let a = self.curvature_scale();
                let d2 = x.0.iter().zip(&y.0).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
                if d2 == 0.0 {
                    return 0.0;
                }
                let nx = vecops::dot(&x.0, &x.0);
                let ny = vecops::dot(&y.0, &y.0);
                let denom = (1.0 - nx) * (1.0 - ny) + d2;
                2.0 * a * (d2.sqrt() / denom.sqrt()).atanh()
            }
            ManifoldModel::ProductCircle { circle_radius, .. } => {
                let arc = circle_radius * arc_gap(x.0[0], y.0[0]);
                let e = x.0[1..].iter().zip(&y.0[1..]).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
                (arc * arc + e).sqrt()
            }
        }
    }

    /// Validating distance for external inputs.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.validate_point(x)?;
        self.validate_point(y)?;
        Ok(self.dist(x, y))
    }

    pub fn distance_to_pole(&self, x: &Point) -> f64 {
        match *self {
            ManifoldModel::Hyperbolic { .. } => {
                // Exact polar form, avoids cancellation of the generic formula.
                let a = self.curvature_scale();
                2.0 * a * vecops::norm(&x.0).atanh()
            }
            _ => self.dist(&self.pole(), x),
        }
    }

    /// Volume of a geodesic ball of radius `r`.
    pub fn ball_volume(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("ball radius must be nonnegative, got {r}")));
        }
        let m = self.dim();
        Ok(match *self {
            ManifoldModel::Euclidean { .. } => unit_ball_volume(m) * r.powi(m as i32),
            ManifoldModel::Hyperbolic { .. } => {
                let a = self.curvature_scale();
                let t = r / a;
                let v1 = match m {
                    2 => 2.0 * std::f64::consts::PI * (t.cosh() - 1.0),
                    3 => 2.0 * std::f64::consts::PI * (t.sinh() * t.cosh() - t),
                    _ => {
                        let c = m as f64 * unit_ball_volume(m);
                        c * quad::integrate(|s| s.sinh().powi(m as i32 - 1), 0.0, t, 1e-12, 1e-12)?
                    }
                };
                a.powi(m as i32) * v1
            }
            ManifoldModel::ProductCircle { euclidean_dim: n, circle_radius } => {
                let cap = std::f64::consts::PI * circle_radius;
                if r <= cap {
                    unit_ball_volume(n + 1) * r.powi(n as i32 + 1)
                } else {
                    let wn = unit_ball_volume(n);
                    2.0 * wn
                        * quad::integrate(|t| (r * r - t * t).powf(n as f64 / 2.0), 0.0, cap, 1e-12, 1e-12)?
                }
            }
        })
    }

    /// Area of the geodesic sphere of radius `r`; equals the derivative of
    /// `ball_volume` in `r`.
    pub fn sphere_area(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("sphere radius must be nonnegative, got {r}")));
        }
        let m = self.dim();
        Ok(match *self {
            ManifoldModel::Euclidean { .. } => m as f64 * unit_ball_volume(m) * r.powi(m as i32 - 1),
            ManifoldModel::Hyperbolic { .. } => {
                let a = self.curvature_scale();
                m as f64 * unit_ball_volume(m) * a.powi(m as i32 - 1) * (r / a).sinh().powi(m as i32 - 1)
            }
            ManifoldModel::ProductCircle { euclidean_dim: n, circle_radius } => {
                let cap = std::f64::consts::PI * circle_radius;
                if r <= cap {
                    (n as f64 + 1.0) * unit_ball_volume(n + 1) * r.powi(n as i32)
                } else if n == 2 {
                    // integrand is constant in this case
                    2.0 * n as f64 * unit_ball_volume(n) * r * cap
                } else {
                    let wn = unit_ball_volume(n);
                    2.0 * n as f64
                        * wn
                        * r
                        * quad::integrate(|t| (r * r - t * t).powf((n as f64 - 2.0) / 2.0), 0.0, cap, 1e-12, 1e-12)?
                }
            }
        })
    }

    /// Geodesic from the pole: `direction` is a unit vector in the tangent
    /// space at the pole (for the product, coordinate 0 is the circle
    /// direction), `r` the arc length.
    pub fn exp_map(&self, direction: &[f64], r: f64) -> Result<Point> {
        if direction.len() != self.dim() {
            return Err(Error::Domain(format!(
                "direction has {} components, model expects {}",
                direction.len(),
                self.dim()
            )));
        }
        let n = vecops::norm(direction);
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("direction must be a unit vector (norm {n})")));
        }
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("geodesic length must be nonnegative, got {r}")));
        }
        Ok(match *self {
            ManifoldModel::Euclidean { .. } => Point(vecops::scale(direction, r)),
            ManifoldModel::Hyperbolic { .. } => {
                let a = self.curvature_scale();
                Point(vecops::scale(direction, (r / (2.0 * a)).tanh()))
            }
            ManifoldModel::ProductCircle { circle_radius, .. } => {
                let mut c = Vec::with_capacity(self.dim());
                c.push(wrap_angle(r * direction[0] / circle_radius));
                c.extend(direction[1..].iter().map(|d| d * r));
                Point(c)
            }
        })
    }

    /// Polar chart at the pole for hyperbolic models: returns `(direction, r)`.
    pub fn hyperbolic_to_polar(&self, p: &Point) -> Result<(Vec<f64>, f64)> {
        match self {
            ManifoldModel::Hyperbolic { .. } => {
                self.validate_point(p)?;
                let s = vecops::norm(&p.0);
                if s == 0.0 {
                    let mut d = vec![0.0; self.dim()];
                    d[0] = 1.0;
                    return Ok((d, 0.0));
                }
                Ok((vecops::scale(&p.0, 1.0 / s), 2.0 * self.curvature_scale() * s.atanh()))
            }
            _ => Err(Error::Domain("polar chart conversion applies to hyperbolic models".into())),
        }
    }

    /// Isometry of the model taking the pole to `c`, applied to `x`.
    /// Euclidean and product models translate; hyperbolic models use Mobius
    /// addition in the Poincare ball.
    pub fn translate_from_pole(&self, c: &Point, x: &Point) -> Point {
        match *self {
            ManifoldModel::Euclidean { .. } => Point(vecops::add(&c.0, &x.0)),
            ManifoldModel::Hyperbolic { .. } => Point(mobius_add(&c.0, &x.0)),
            ManifoldModel::ProductCircle { .. } => {
                let mut v = Vec::with_capacity(self.dim());
                v.push(wrap_angle(c.0[0] + x.0[0]));
                v.extend(c.0[1..].iter().zip(&x.0[1..]).map(|(a, b)| a + b));
                Point(v)
            }
        }
    }
}

/// Mobius addition `c (+) x` in the Poincare ball; an isometry sending the
/// origin to `c`.
fn mobius_add(c: &[f64], x: &[f64]) -> Vec<f64> {
    let cx = vecops::dot(c, x);
    let c2 = vecops::dot(c, c);
    let x2 = vecops::dot(x, x);
    let denom = 1.0 + 2.0 * cx + c2 * x2;
    let ac = (1.0 + 2.0 * cx + x2) / denom;
    let ax = (1.0 - c2) / denom;
    c.iter().zip(x).map(|(ci, xi)| ac * ci + ax * xi).collect()
}

/// Uniform direction on the unit sphere of `R^m`.
pub fn sample_direction<R: Rng>(m: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        let n = vecops::norm(&v);
        if n > 1e-12 {
            return vecops::scale(&v, 1.0 / n);
        }
    }
}

/// Piecewise-linear inverse CDF over a fine grid; used for radial and
/// slice coordinates whose density has no closed-form inverse.
#[derive(Clone, Debug)]
struct CdfTable {
    xs: Vec<f64>,
    cum: Vec<f64>,
}

impl CdfTable {
    /// Build from an unnormalized density by trapezoidal accumulation.
    fn build<F: Fn(f64) -> f64>(density: F, lo: f64, hi: f64, cells: usize) -> Result<Self> {
        let mut xs = Vec::with_capacity(cells + 1);
        let mut cum = Vec::with_capacity(cells + 1);
        let h = (hi - lo) / cells as f64;
        let mut acc = 0.0;
        let mut prev = density(lo);
        xs.push(lo);
        cum.push(0.0);
        for i in 1..=cells {
            let x = lo + h * i as f64;
            let d = density(x);
            if !d.is_finite() || d < 0.0 {
                return Err(Error::Numerical(format!("invalid sampling density {d} at {x}")));
            }
            acc += 0.5 * (prev + d) * h;
            xs.push(x);
            cum.push(acc);
            prev = d;
        }
        if !(acc > 0.0) {
            return Err(Error::Estimation("sampling density integrates to zero".into()));
        }
        Ok(CdfTable { xs, cum })
    }

    fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * self.total();
        let idx = match self.cum.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        let i = idx.min(self.xs.len() - 2);
        let span = self.cum[i + 1] - self.cum[i];
        let frac = if span > 0.0 { (u - self.cum[i]) / span } else { 0.5 };
        self.xs[i] + frac * (self.xs[i + 1] - self.xs[i])
    }
}

const CDF_CELLS: usize = 4096;

#[derive(Clone)]
enum SamplerShape {
    /// Euclidean radius by the closed-form inverse CDF.
    EuclideanRadial { m: usize },
    /// Hyperbolic geodesic radius from a table; mapped through the chart.
    HyperbolicRadial { table: CdfTable },
    /// Product: arc coordinate from a table, Euclidean factor in an annulus
    /// slice of closed form.
    ProductSlice { table: CdfTable },
}

/// Samples points uniformly (w.r.t. Riemannian volume) in a geodesic annulus
/// `r_min <= d(center, x) <= r_max`; `r_min = 0` gives the full ball.
#[derive(Clone)]
pub struct BallSampler {
    model: ManifoldModel,
    center: Point,
    r_min: f64,
    r_max: f64,
    volume: f64,
    shape: SamplerShape,
}

impl BallSampler {
    pub fn ball(model: &ManifoldModel, center: &Point, radius: f64) -> Result<Self> {
        Self::annulus(model, center, 0.0, radius)
    }

    pub fn window(model: &ManifoldModel, radius: f64) -> Result<Self> {
        Self::annulus(model, &model.pole(), 0.0, radius)
    }

    pub fn annulus(model: &ManifoldModel, center: &Point, r_min: f64, r_max: f64) -> Result<Self> {
        if !(r_max > r_min && r_min >= 0.0) || !r_max.is_finite() {
            return Err(Error::Domain(format!("invalid annulus radii [{r_min}, {r_max}]")));
        }
        model.validate_point(center)?;
        let volume = model.ball_volume(r_max)? - model.ball_volume(r_min)?;
        let shape = match *model {
            ManifoldModel::Euclidean { dim } => SamplerShape::EuclideanRadial { m: dim },
            ManifoldModel::Hyperbolic { .. } => {
                let mdl = model.clone();
                let table = CdfTable::build(|t| mdl.sphere_area(t).unwrap_or(0.0), r_min, r_max, CDF_CELLS)?;
                SamplerShape::HyperbolicRadial { table }
            }
            ManifoldModel::ProductCircle { euclidean_dim: n, circle_radius } => {
                let cap = std::f64::consts::PI * circle_radius;
                let s_max = r_max.min(cap);
                let wn = unit_ball_volume(n);
                let density = |s: f64| {
                    let outer = (r_max * r_max - s * s).max(0.0).powf(n as f64 / 2.0);
                    let inner = (r_min * r_min - s * s).max(0.0).powf(n as f64 / 2.0);
                    wn * (outer - inner)
                };
                let table = CdfTable::build(density, -s_max, s_max, CDF_CELLS)?;
                SamplerShape::ProductSlice { table }
            }
        };
        Ok(BallSampler { model: model.clone(), center: center.clone(), r_min, r_max, volume, shape })
    }

    /// Riemannian volume of the sampled region.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    /// Clone of this sampler around a different center; radii and tables
    /// carry over unchanged because the models are homogeneous.
    pub fn recentered(&self, center: &Point) -> Result<BallSampler> {
        self.model.validate_point(center)?;
        let mut s = self.clone();
        s.center = center.clone();
        Ok(s)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Point {
        match &self.shape {
            SamplerShape::EuclideanRadial { m } => {
                let u: f64 = rng.random();
                let mf = *m as f64;
                let r = (self.r_min.powf(mf) + u * (self.r_max.powf(mf) - self.r_min.powf(mf))).powf(1.0 / mf);
                let dir = sample_direction(*m, rng);
                self.model.translate_from_pole(&self.center, &Point(vecops::scale(&dir, r)))
            }
            SamplerShape::HyperbolicRadial { table } => {
                let t = table.sample(rng);
                let dir = sample_direction(self.model.dim(), rng);
                let a = self.model.curvature_scale();
                let chart = vecops::scale(&dir, (t / (2.0 * a)).tanh());
                self.model.translate_from_pole(&self.center, &Point(chart))
            }
            SamplerShape::ProductSlice { table } => {
                let (n, rho) = match self.model {
                    ManifoldModel::ProductCircle { euclidean_dim, circle_radius } => (euclidean_dim, circle_radius),
                    _ => unreachable!(),
                };
                let s = table.sample(rng);
                let hi = (self.r_max * self.r_max - s * s).max(0.0).sqrt();
                let lo = (self.r_min * self.r_min - s * s).max(0.0).sqrt();
                let u: f64 = rng.random();
                let nf = n as f64;
                let rr = (lo.powf(nf) + u * (hi.powf(nf) - lo.powf(nf))).powf(1.0 / nf);
                let dir = sample_direction(n, rng);
                let mut c = Vec::with_capacity(n + 1);
                c.push(wrap_angle(s / rho));
                c.extend(vecops::scale(&dir, rr));
                self.model.translate_from_pole(&self.center, &Point(c))
            }
        }
    }
}

/// Monte Carlo integral of `f` over the sampler's region: returns
/// `(estimate, standard_error)`.
pub fn mc_integral<R: Rng, F: Fn(&Point) -> f64>(
    sampler: &BallSampler,
    f: F,
    samples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::Domain("Monte Carlo integral needs at least 2 samples".into()));
    }
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..samples {
        let p = sampler.sample(rng);
        let v = f(&p);
        if !v.is_finite() {
            return Err(Error::Data(format!("integrand non-finite at point {:?}", p.0)));
        }
        sum += v;
        sumsq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sumsq / n) - mean * mean).max(0.0);
    let vol = sampler.volume();
    Ok((vol * mean, vol * (var / n).sqrt()))
}
