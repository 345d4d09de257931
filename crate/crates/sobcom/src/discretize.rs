//! Separated covering nets on model manifolds and the derived structures
//! used by concentration arguments: quasiorbit partitions ordered by
//! cardinality, ball-count statistics, selection of pairwise-far subsets
//! inside a quasiorbit, and local mass profiles of a function over the net.
//!
//! A net here is a point set that is pairwise `epsilon`-separated while its
//! `nu * epsilon` balls cover the working window `B(pole, L)`. The greedy
//! construction inserts volume-uniform candidates and then repairs coverage
//! by inserting any probe found farther than `epsilon` from the net, which
//! preserves separation; it therefore realizes `nu = 1` up to the sampled
//! resolution.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::manifold::{BallSampler, ManifoldModel, Point};
use crate::{quad, Error, Result};

/// A separated net with an optional quasiorbit partition.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub model: ManifoldModel,
    pub points: Vec<Point>,
    pub epsilon: f64,
    /// Covering multiplier: every window point lies within `nu * epsilon`
    /// of the net.
    pub nu: f64,
    pub domain_radius: f64,
    /// Indices into `points`, one class per quasiorbit, sorted by
    /// nondecreasing cardinality. Empty when no partition was computed.
    pub quasiorbits: Vec<Vec<usize>>,
    pub seed: u64,
}

/// Result of a local mass profile sweep: the ball integral of `|u|` around
/// every net point, with standard errors.
#[derive(Clone, Debug)]
pub struct LocalMassProfile {
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub sup: f64,
    pub argmax: usize,
}

/// Outcome of the pairwise-far selection inside a quasiorbit.
#[derive(Clone, Debug)]
pub struct SeparatedSelection {
    /// Indices into the net's `points`, starting with the seed point.
    pub indices: Vec<usize>,
    /// True when fewer than the requested number of points were found.
    pub shortfall: bool,
}

const GREEDY_PHASE: usize = 50_000;
const PROBE_ROUND: usize = 20_000;
const CANDIDATE_BUDGET: usize = 1_500_000;

impl Discretization {
    /// Greedy separated net on the window `B(pole, domain_radius)`.
    ///
    /// Candidates are drawn volume-uniformly from a seeded stream; after the
    /// insertion phase, coverage probe rounds insert any uncovered probe
    /// until a full round of probes is covered. Runs out of budget with a
    /// diagnostic carrying the achieved covering fraction.
    pub fn greedy_net(model: &ManifoldModel, domain_radius: f64, epsilon: f64, seed: u64) -> Result<Self> {
        if !(epsilon > 0.0) || !(domain_radius > epsilon) {
            return Err(Error::Config(format!(
                "need 0 < epsilon < domain_radius, got epsilon={epsilon}, L={domain_radius}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let window = BallSampler::window(model, domain_radius)?;
        let shrunk_radius = domain_radius - epsilon;
        let probe_window = if shrunk_radius > 0.0 { BallSampler::window(model, shrunk_radius)? } else { window.recentered(&model.pole())? };
        let mut points: Vec<Point> = Vec::new();
        let mut spent = 0usize;

        let min_dist = |pts: &[Point], q: &Point| -> f64 {
            pts.iter().map(|p| model.dist(p, q)).fold(f64::INFINITY, f64::min)
        };

        for _ in 0..GREEDY_PHASE {
            let cand = window.sample(&mut rng);
            if min_dist(&points, &cand) >= epsilon {
                points.push(cand);
            }
        }
        spent += GREEDY_PHASE;

        loop {
            let mut uncovered = 0usize;
            for _ in 0..PROBE_ROUND {
                let probe = probe_window.sample(&mut rng);
                if min_dist(&points, &probe) > epsilon {
                    uncovered += 1;
                    points.push(probe);
                }
            }
            spent += PROBE_ROUND;
            if uncovered == 0 {
                break;
            }
            if spent > CANDIDATE_BUDGET {
                return Err(Error::Budget {
                    msg: "net candidate stream exhausted before the coverage test passed".into(),
                    achieved: 1.0 - uncovered as f64 / PROBE_ROUND as f64,
                });
            }
        }

        Ok(Discretization {
            model: model.clone(),
            points,
            epsilon,
            nu: 1.0,
            domain_radius,
            quasiorbits: Vec::new(),
            seed,
        })
    }

    /// Wrap an explicit point list as a net, checking pairwise separation
    /// exhaustively.
    pub fn from_points(
        model: &ManifoldModel,
        points: Vec<Point>,
        epsilon: f64,
        nu: f64,
        domain_radius: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0) || !(nu >= 1.0) {
            return Err(Error::Config(format!("need epsilon > 0 and nu >= 1, got {epsilon}, {nu}")));
        }
        for p in &points {
            model.validate_point(p)?;
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let d = model.dist(&points[i], &points[j]);
                if d < epsilon * (1.0 - 1e-12) {
                    return Err(Error::Precondition(format!(
                        "points {i} and {j} are {d} apart, closer than epsilon = {epsilon}"
                    )));
                }
            }
        }
        Ok(Discretization { model: model.clone(), points, epsilon, nu, domain_radius, quasiorbits: Vec::new(), seed: 0 })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Ball radius of the covering: `nu * epsilon`.
    pub fn covering_radius(&self) -> f64 {
        self.nu * self.epsilon
    }

    /// Fraction of `samples` volume-uniform probes of the shrunken window
    /// lying within `nu * epsilon` of the net.
    pub fn covering_fraction(&self, samples: usize, seed: u64) -> Result<f64> {
        let shrunk = self.domain_radius - self.covering_radius();
        if shrunk <= 0.0 {
            return Ok(1.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = BallSampler::window(&self.model, shrunk)?;
        let mut covered = 0usize;
        for _ in 0..samples {
            let p = w.sample(&mut rng);
            let near = self
                .points
                .iter()
                .any(|q| self.model.dist(q, &p) <= self.covering_radius() * (1.0 + 1e-12));
            if near {
                covered += 1;
            }
        }
        Ok(covered as f64 / samples as f64)
    }

    /// Exhaustive pairwise separation check; true when every pair is at
    /// least `epsilon` apart.
    pub fn is_separated(&self) -> bool {
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                if self.model.dist(&self.points[i], &self.points[j]) < self.epsilon * (1.0 - 1e-12) {
                    return false;
                }
            }
        }
        true
    }

    /// Partition the net into quasiorbits by a scalar label, classes ordered
    /// by nondecreasing cardinality.
    ///
    /// Labels are rounded to a spacing of `2 * epsilon` so that label noise
    /// below the packing scale cannot split an orbit; rounding ties go to
    /// the smaller label.
    pub fn orbital_partition<F: Fn(&Point) -> f64>(&self, label: F) -> Result<Discretization> {
        let spacing = 2.0 * self.epsilon;
        let mut buckets: std::collections::BTreeMap<i64, Vec<usize>> = std::collections::BTreeMap::new();
        for (i, p) in self.points.iter().enumerate() {
            let l = label(p);
            if !l.is_finite() {
                return Err(Error::Data(format!("label non-finite at point {:?}", p.0)));
            }
            // round half toward the smaller label
            let k = (l / spacing - 0.5).ceil() as i64;
            buckets.entry(k).or_default().push(i);
        }
        let mut classes: Vec<(i64, Vec<usize>)> = buckets.into_iter().collect();
        // stable sort: cardinality first, then label, for a deterministic order
        classes.sort_by(|a, b| a.1.len().cmp(&b.1.len()).then(a.0.cmp(&b.0)));
        let quasiorbits: Vec<Vec<usize>> = classes.into_iter().map(|(_, v)| v).collect();
        debug_assert!(quasiorbits.iter().all(|c| !c.is_empty()));
        let mut out = self.clone();
        out.quasiorbits = quasiorbits;
        Ok(out)
    }

    /// Whether the last (largest) quasiorbit is strictly larger than the
    /// first; the finite-window stand-in for cardinality growth.
    pub fn quasiorbit_growth(&self) -> Option<bool> {
        let first = self.quasiorbits.first()?;
        let last = self.quasiorbits.last()?;
        Some(last.len() > first.len())
    }

    /// Number of net points inside the closed ball `B(center, radius)`.
    pub fn count_in_ball(&self, center: &Point, radius: f64) -> usize {
        self.points.iter().filter(|p| self.model.dist(p, center) <= radius).count()
    }

    /// Empirical uniform ball-count bound: the maximum of `count_in_ball`
    /// over `centers` volume-uniform window points.
    pub fn empirical_ball_count(&self, radius: f64, centers: usize, seed: u64) -> Result<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = BallSampler::window(&self.model, self.domain_radius)?;
        let mut best = 0usize;
        for _ in 0..centers {
            let c = w.sample(&mut rng);
            best = best.max(self.count_in_ball(&c, radius));
        }
        Ok(best)
    }

    /// Greedily select up to `target` points of quasiorbit `orbit` that are
    /// pairwise more than `separation` apart, starting from the point of the
    /// orbit closest to `start` (which must lie in the orbit).
    pub fn select_separated(
        &self,
        orbit: usize,
        start: &Point,
        separation: f64,
        target: usize,
    ) -> Result<SeparatedSelection> {
        let class = self
            .quasiorbits
            .get(orbit)
            .ok_or_else(|| Error::Precondition(format!("quasiorbit index {orbit} out of range")))?;
        if target > class.len() {
            return Err(Error::Precondition(format!(
                "requested {target} points from a quasiorbit of size {}",
                class.len()
            )));
        }
        if target == 0 {
            return Ok(SeparatedSelection { indices: Vec::new(), shortfall: false });
        }
        let (seed_idx, seed_dist) = class
            .iter()
            .map(|&i| (i, self.model.dist(&self.points[i], start)))
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if seed_dist > 1e-9 {
            return Err(Error::Precondition(format!(
                "starting point is not a member of quasiorbit {orbit} (nearest member is {seed_dist} away)"
            )));
        }
        let mut chosen = vec![seed_idx];
        for &i in class {
            if chosen.len() >= target {
                break;
            }
            if chosen.iter().all(|&c| self.model.dist(&self.points[i], &self.points[c]) > separation) {
                chosen.push(i);
            }
        }
        let shortfall = chosen.len() < target;
        Ok(SeparatedSelection { indices: chosen, shortfall })
    }

    /// Ball integral of `|u|` around every net point, by Monte Carlo with
    /// `samples` draws per ball; ball radius is the covering radius.
    pub fn local_mass_profile<F: Fn(&Point) -> f64>(
        &self,
        u: F,
        samples: usize,
        seed: u64,
    ) -> Result<LocalMassProfile> {
        if self.is_empty() {
            return Err(Error::Precondition("local mass profile of an empty net".into()));
        }
        let radius = self.covering_radius();
        let proto = BallSampler::ball(&self.model, &self.points[0], radius)?;
        let mut values = Vec::with_capacity(self.len());
        let mut stderrs = Vec::with_capacity(self.len());
        for (i, p) in self.points.iter().enumerate() {
            let ball = proto.recentered(p)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)));
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..samples {
                let q = ball.sample(&mut rng);
                let v = u(&q);
                if !v.is_finite() {
                    return Err(Error::Data(format!("function non-finite near net point {i} at {:?}", q.0)));
                }
                let a = v.abs();
                sum += a;
                sumsq += a * a;
            }
            let n = samples as f64;
            let mean = sum / n;
            let var = ((sumsq / n) - mean * mean).max(0.0);
            values.push(ball.volume() * mean);
            stderrs.push(ball.volume() * (var / n).sqrt());
        }
        let (argmax, sup) = values
            .iter()
            .cloned()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        Ok(LocalMassProfile { values, stderrs, sup, argmax })
    }

    /// The canonical member of the quasisymmetry class over quasiorbit
    /// `orbit`: a sum of identical bumps of support `epsilon / 2` centered at
    /// the orbit points, each normalized to unit integral.
    pub fn make_canonical_quasisymmetric(&self, orbit: usize) -> Result<CanonicalQuasisymmetric> {
        let class = self
            .quasiorbits
            .get(orbit)
            .ok_or_else(|| Error::Precondition(format!("quasiorbit index {orbit} out of range")))?;
        let support = self.epsilon / 2.0;
        // Unit-integral normalization of one bump: the model is homogeneous,
        // so a single radial quadrature serves every center.
        let model = self.model.clone();
        let mdl = model.clone();
        let norm = quad::integrate_tight(move |t| bump_profile(t / support) * mdl.sphere_area(t).unwrap_or(0.0), 0.0, support)?;
        if !(norm > 0.0) {
            return Err(Error::Numerical("bump normalization integral vanished".into()));
        }
        Ok(CanonicalQuasisymmetric {
            model,
            centers: class.iter().map(|&i| self.points[i].clone()).collect(),
            support,
            norm,
        })
    }
}

impl LocalMassProfile {
    /// Distance from the pole of the net point realizing the sup.
    pub fn argmax_distance(&self, net: &Discretization) -> f64 {
        net.model.distance_to_pole(&net.points[self.argmax])
    }
}

/// Smooth bump profile on [0, 1): `exp(-1 / (1 - s^2))`, zero for `s >= 1`.
fn bump_profile(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s * s)).exp()
    }
}

/// Sum of unit-integral bumps over the points of one quasiorbit; lies in the
/// quasisymmetry class with constant 1 over that orbit by construction.
#[derive(Clone)]
pub struct CanonicalQuasisymmetric {
    model: ManifoldModel,
    centers: Vec<Point>,
    support: f64,
    norm: f64,
}

impl CanonicalQuasisymmetric {
    pub fn eval(&self, y: &Point) -> f64 {
        let mut acc = 0.0;
        for c in &self.centers {
            let d = self.model.dist(c, y);
            if d < self.support {
                acc += bump_profile(d / self.support) / self.norm;
            }
        }
        acc
    }

    pub fn center_count(&self) -> usize {
        self.centers.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn euclid2() -> ManifoldModel {
        ManifoldModel::euclidean(2).unwrap()
    }

    /// Near-uniform net on the circle of radius `rho`: `count` points with
    /// consecutive chord just above `epsilon`.
    pub(crate) fn circle_net(count: usize, rho: f64, epsilon: f64) -> Discretization {
        let pts: Vec<Point> = (0..count)
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / count as f64;
                Point(vec![rho * t.cos(), rho * t.sin()])
            })
            .collect();
        Discretization::from_points(&euclid2(), pts, epsilon, 1.0, rho * 1.1).unwrap()
    }

    #[test]
    fn greedy_net_cardinality_window() {
        // Packing and covering force between 100 and 441 points here.
        let net = Discretization::greedy_net(&euclid2(), 10.0, 1.0, 42).unwrap();
        assert!(net.len() >= 100 && net.len() <= 441, "unexpected count {}", net.len());
        assert!(net.is_separated());
        let cov = net.covering_fraction(10_000, 7).unwrap();
        assert!(cov >= 0.999, "covering fraction {cov}");
    }

    #[test]
    fn greedy_net_is_deterministic() {
        let a = Discretization::greedy_net(&euclid2(), 6.0, 0.7, 33).unwrap();
        let b = Discretization::greedy_net(&euclid2(), 6.0, 0.7, 33).unwrap();
        assert_eq!(a.points, b.points);
        let c = Discretization::greedy_net(&euclid2(), 6.0, 0.7, 34).unwrap();
        assert!(a.points != c.points);
    }

    #[test]
    fn hyperbolic_net_is_denser_than_euclidean() {
        let e = Discretization::greedy_net(&euclid2(), 5.0, 1.0, 5).unwrap();
        let h = Discretization::greedy_net(&ManifoldModel::hyperbolic(2, -1.0).unwrap(), 5.0, 1.0, 5).unwrap();
        assert!(
            h.len() > e.len(),
            "hyperbolic area dominates euclidean area at radius 5: {} vs {}",
            h.len(),
            e.len()
        );
    }

    #[test]
    fn orbital_partition_sorted_and_complete() {
        let net = Discretization::greedy_net(&euclid2(), 10.0, 1.0, 42).unwrap();
        let model = net.model.clone();
        let orb = net.orbital_partition(|p| model.distance_to_pole(p)).unwrap();
        let total: usize = orb.quasiorbits.iter().map(|c| c.len()).sum();
        assert_eq!(total, orb.len());
        for w in orb.quasiorbits.windows(2) {
            assert!(w[0].len() <= w[1].len());
        }
        let mut seen = vec![false; orb.len()];
        for c in &orb.quasiorbits {
            for &i in c {
                assert!(!seen[i], "point {i} appears in two classes");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&b| b));
        // outer annuli of a planar disc carry more points than the center
        assert_eq!(orb.quasiorbit_growth(), Some(true));
    }

    #[test]
    fn single_point_net_has_single_orbit() {
        let net = Discretization::from_points(&euclid2(), vec![Point(vec![0.0, 0.0])], 1.0, 1.0, 2.0).unwrap();
        let orb = net.orbital_partition(|_| 0.0).unwrap();
        assert_eq!(orb.quasiorbits.len(), 1);
        assert_eq!(orb.quasiorbits[0], vec![0]);
    }

    #[test]
    fn from_points_rejects_close_pairs() {
        let err = Discretization::from_points(
            &euclid2(),
            vec![Point(vec![0.0, 0.0]), Point(vec![0.3, 0.0])],
            1.0,
            1.0,
            2.0,
        );
        assert!(matches!(err, Err(Error::Precondition(_))));
    }

    #[test]
    fn ball_count_respects_packing_bound() {
        // Disjoint half-balls inside B(x, 3.5) cap the count at 49.
        let net = Discretization::greedy_net(&euclid2(), 10.0, 1.0, 11).unwrap();
        let n_r = net.empirical_ball_count(3.0, 1000, 3).unwrap();
        assert!(n_r <= 49, "packing bound violated: {n_r}");
        assert!(n_r >= 10, "suspiciously low ball count {n_r}");
    }

    #[test]
    fn select_separated_on_circle() {
        let net = circle_net(628, 100.0, 1.0);
        let orb = net.orbital_partition(|p| p.0.iter().map(|c| c * c).sum::<f64>().sqrt()).unwrap();
        assert_eq!(orb.quasiorbits.len(), 1);
        let start = orb.points[orb.quasiorbits[0][0]].clone();
        let sel = orb.select_separated(0, &start, 10.0, 5).unwrap();
        assert!(!sel.shortfall);
        assert_eq!(sel.indices.len(), 5);
        assert_eq!(sel.indices[0], orb.quasiorbits[0][0]);
        for i in 0..sel.indices.len() {
            for j in (i + 1)..sel.indices.len() {
                let d = orb.model.dist(&orb.points[sel.indices[i]], &orb.points[sel.indices[j]]);
                assert!(d > 10.0, "selected pair only {d} apart");
            }
        }
    }

    #[test]
    fn select_separated_shortfall_and_preconditions() {
        let net = circle_net(12, 2.0, 1.0);
        let orb = net.orbital_partition(|p| p.0.iter().map(|c| c * c).sum::<f64>().sqrt()).unwrap();
        let start = orb.points[orb.quasiorbits[0][0]].clone();
        // all 12 points lie on a circle of radius 2: nothing is > 10 apart
        let sel = orb.select_separated(0, &start, 10.0, 3).unwrap();
        assert!(sel.shortfall);
        assert_eq!(sel.indices.len(), 1);
        // requesting more points than the orbit holds is a precondition error
        assert!(matches!(orb.select_separated(0, &start, 1.0, 13), Err(Error::Precondition(_))));
        // a start point outside the orbit is rejected
        let outside = Point(vec![50.0, 50.0]);
        assert!(matches!(orb.select_separated(0, &outside, 1.0, 2), Err(Error::Precondition(_))));
    }

    #[test]
    fn local_mass_profile_constant_function() {
        let net = Discretization::greedy_net(&euclid2(), 5.0, 1.0, 21).unwrap();
        let prof = net.local_mass_profile(|_| 1.0, 4000, 9).unwrap();
        let ball = net.model.ball_volume(net.covering_radius()).unwrap();
        for (v, s) in prof.values.iter().zip(&prof.stderrs) {
            assert!((v - ball).abs() <= 1e-9, "constant integrand is exact, got {v} vs {ball}");
            assert!(*s < 1e-12);
        }
        assert!((prof.sup - ball).abs() < 1e-9);
    }

    #[test]
    fn local_mass_profile_additivity_for_disjoint_supports() {
        let net = Discretization::greedy_net(&euclid2(), 6.0, 1.0, 22).unwrap();
        let bump = |c: [f64; 2]| move |p: &Point| bump_profile(((p.0[0] - c[0]).powi(2) + (p.0[1] - c[1]).powi(2)).sqrt() / 0.8);
        let f = bump([2.0, 0.0]);
        let g = bump([-2.0, 0.0]);
        let pf = net.local_mass_profile(&f, 3000, 5).unwrap();
        let pg = net.local_mass_profile(&g, 3000, 5).unwrap();
        let psum = net.local_mass_profile(|p| f(p) + g(p), 3000, 5).unwrap();
        for i in 0..net.len() {
            let d = (psum.values[i] - pf.values[i] - pg.values[i]).abs();
            let tol = 3.0 * (pf.stderrs[i] + pg.stderrs[i] + psum.stderrs[i]) + 1e-12;
            assert!(d <= tol, "additivity violated at {i}: {d} > {tol}");
        }
    }

    #[test]
    fn local_mass_profile_flags_bad_data() {
        let net = Discretization::greedy_net(&euclid2(), 4.0, 1.0, 23).unwrap();
        let r = net.local_mass_profile(|p| 1.0 / (p.0[0].abs() - p.0[0].abs()), 100, 1);
        assert!(matches!(r, Err(Error::Data(_))));
    }

    #[test]
    fn canonical_quasisymmetric_ball_integrals_are_one() {
        // 30 points on radius 8 sit ~1.67 apart: each covering ball of
        // radius 1 then contains exactly one bump support (radius 1/2).
        let net = circle_net(30, 8.0, 1.0);
        let orb = net.orbital_partition(|p| p.0.iter().map(|c| c * c).sum::<f64>().sqrt()).unwrap();
        let f = orb.make_canonical_quasisymmetric(0).unwrap();
        assert_eq!(f.center_count(), 30);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let ball = BallSampler::ball(&orb.model, &orb.points[0], orb.covering_radius()).unwrap();
        let (mass, se) = crate::manifold::mc_integral(&ball, |p| f.eval(p), 60_000, &mut rng).unwrap();
        assert!((mass - 1.0).abs() <= 3.0 * se + 0.01, "ball mass {mass} (se {se})");
    }

    #[test]
    fn product_net_builds_and_covers() {
        let m = ManifoldModel::product_circle(2, 1.0).unwrap();
        let net = Discretization::greedy_net(&m, 4.0, 0.8, 55).unwrap();
        assert!(net.is_separated());
        let cov = net.covering_fraction(5_000, 4).unwrap();
        assert!(cov >= 0.999, "covering fraction {cov}");
    }
}
