//! The reduced radial variational problem: minimize the weighted p-energy
//! `int (|f'|^p + |f|^p) Psi dr` over profiles with unit weighted `L^q`
//! norm, recover the Euler-Lagrange multiplier, and rescale so the profile
//! solves the strong equation with unit coefficient.
//!
//! Profiles live on a uniform grid over `[0, R_max]` with a Neumann
//! condition at the pole (forced by radial regularity) and a Dirichlet
//! truncation at `R_max`; minimizers decay exponentially, so the truncation
//! error is checked by a stability-under-extension invariant rather than
//! modeled.

use serde::{Deserialize, Serialize};

use crate::levelmap::diagnostics::{classify_trend, TrendVerdict};
use crate::manifold::unit_ball_volume;
use crate::{Error, Result};

/// Subcritical exponent window for the reduced problem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    pub m: usize,
    pub p: f64,
    pub q: f64,
}

impl SpaceParams {
    pub fn new(m: usize, p: f64, q: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("dimension must be at least 2, got {m}")));
        }
        if !(p > 1.0 && p < m as f64) {
            return Err(Error::Config(format!("need 1 < p < {m}, got p = {p}")));
        }
        let pc = m as f64 * p / (m as f64 - p);
        if !(q > p && q < pc) {
            return Err(Error::Config(format!("need p < q < {pc} (the conjugate exponent), got q = {q}")));
        }
        Ok(SpaceParams { m, p, q })
    }

    /// `mp/(m-p)`, the upper endpoint of the admissible q range.
    pub fn conjugate_exponent(&self) -> f64 {
        self.m as f64 * self.p / (self.m as f64 - self.p)
    }
}

/// `|x|^(e-2) x`, the odd power appearing in p-Laplacian fluxes; returns 0
/// at the origin also for e < 2 where the formula alone would give NaN.
fn odd_power(x: f64, e: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.abs().powf(e - 2.0) * x
    }
}

// ---------------------------------------------------------------------------
// Profiles

/// Radial profile on the uniform grid `r_k = k dr`, `k = 0..=K`, with the
/// weight sampled at nodes and cell midpoints. The last value is pinned to
/// zero (Dirichlet truncation).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialProfile {
    pub dr: f64,
    pub values: Vec<f64>,
    /// Weight at the nodes `r_k`.
    pub psi_nodes: Vec<f64>,
    /// Weight at the midpoints `r_{k+1/2}`, used by the gradient term.
    pub psi_mid: Vec<f64>,
}

impl RadialProfile {
    pub fn new<P: Fn(f64) -> f64>(r_max: f64, steps: usize, psi: P, values: Vec<f64>) -> Result<Self> {
        if !(r_max > 0.0) || steps < 2 {
            return Err(Error::Config(format!("need r_max > 0 and at least 2 steps, got {r_max}, {steps}")));
        }
        if values.len() != steps + 1 {
            return Err(Error::Precondition(format!(
                "profile needs {} values for {steps} steps, got {}",
                steps + 1,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("profile contains a non-finite value".into()));
        }
        if values[steps] != 0.0 {
            return Err(Error::Precondition("the truncated end value must be exactly zero".into()));
        }
        let dr = r_max / steps as f64;
        let psi_nodes: Vec<f64> = (0..=steps).map(|k| psi(k as f64 * dr)).collect();
        let psi_mid: Vec<f64> = (0..steps).map(|k| psi((k as f64 + 0.5) * dr)).collect();
        if psi_nodes.iter().chain(&psi_mid).any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Data("weight must be finite and nonnegative on the grid".into()));
        }
        Ok(RadialProfile { dr, values, psi_nodes, psi_mid })
    }

    pub fn from_fn<P: Fn(f64) -> f64, F: Fn(f64) -> f64>(r_max: f64, steps: usize, psi: P, f: F) -> Result<Self> {
        let dr = r_max / steps as f64;
        let mut values: Vec<f64> = (0..=steps).map(|k| f(k as f64 * dr)).collect();
        values[steps] = 0.0;
        RadialProfile::new(r_max, steps, psi, values)
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn r_max(&self) -> f64 {
        self.dr * self.steps() as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        k as f64 * self.dr
    }

    /// Same grid and weight, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Precondition("value count does not match the grid".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("profile contains a non-finite value".into()));
        }
        if values[values.len() - 1] != 0.0 {
            return Err(Error::Precondition("the truncated end value must be exactly zero".into()));
        }
        Ok(RadialProfile { dr: self.dr, values, psi_nodes: self.psi_nodes.clone(), psi_mid: self.psi_mid.clone() })
    }

    /// Piecewise-linear evaluation; zero outside the truncated window.
    pub fn eval(&self, r: f64) -> f64 {
        if r < 0.0 || r >= self.r_max() {
            return 0.0;
        }
        let t = r / self.dr;
        let k = (t.floor() as usize).min(self.steps() - 1);
        let frac = t - k as f64;
        self.values[k] * (1.0 - frac) + self.values[k + 1] * frac
    }

    /// Trapezoid rule for `sum g(f_k) Psi_k dr`.
    fn node_sum<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let last = self.steps();
        let mut acc = 0.0;
        for (k, (v, w)) in self.values.iter().zip(&self.psi_nodes).enumerate() {
            let weight = if k == 0 || k == last { 0.5 } else { 1.0 };
            acc += weight * g(*v) * w;
        }
        acc * self.dr
    }
}

// ---------------------------------------------------------------------------
// Energy, constraint, gradient

/// `sum |df_k|^p Psi(r_{k+1/2}) dr + trapezoid(|f|^p Psi)`.
pub fn discrete_energy(f: &RadialProfile, params: &SpaceParams) -> f64 {
    let p = params.p;
    let mut grad_term = 0.0;
    for k in 0..f.steps() {
        let d = (f.values[k + 1] - f.values[k]) / f.dr;
        grad_term += d.abs().powf(p) * f.psi_mid[k];
    }
    grad_term * f.dr + f.node_sum(|v| v.abs().powf(p))
}

/// Weighted `L^q` norm by the trapezoid rule.
pub fn constraint_norm(f: &RadialProfile, q: f64) -> f64 {
    f.node_sum(|v| v.abs().powf(q)).powf(1.0 / q)
}

/// Analytic gradient of `discrete_energy` in the node values; the Dirichlet
/// end stays pinned, so its component is zero.
pub fn energy_gradient(f: &RadialProfile, params: &SpaceParams) -> Vec<f64> {
    let p = params.p;
    let last = f.steps();
    let mut g = vec![0.0; last + 1];
    for (k, gk) in g.iter_mut().enumerate().take(last) {
        let weight = if k == 0 { 0.5 } else { 1.0 };
        *gk = p * weight * odd_power(f.values[k], p) * f.psi_nodes[k] * f.dr;
    }
    for k in 0..last {
        let d = (f.values[k + 1] - f.values[k]) / f.dr;
        let flux = p * odd_power(d, p) * f.psi_mid[k];
        g[k] -= flux;
        if k + 1 < last {
            g[k + 1] += flux;
        }
    }
    g
}

// ---------------------------------------------------------------------------
// Strong-form residual

/// Interior strong-form operator `-(1/Psi) D(Psi |f'|^{p-2} f') + |f|^{p-2} f`
/// at nodes `1..K-1`; the pole node is governed by the Neumann condition and
/// carries no residual row, so the degenerate `Psi(0) = 0` is never divided
/// by.
fn strong_operator(f: &RadialProfile, params: &SpaceParams) -> Vec<f64> {
    let p = params.p;
    let last = f.steps();
    let mut out = vec![0.0; last + 1];
    for k in 1..last {
        let d_left = (f.values[k] - f.values[k - 1]) / f.dr;
        let d_right = (f.values[k + 1] - f.values[k]) / f.dr;
        let div = (f.psi_mid[k] * odd_power(d_right, p) - f.psi_mid[k - 1] * odd_power(d_left, p)) / (f.psi_nodes[k] * f.dr);
        out[k] = -div + odd_power(f.values[k], p);
    }
    out
}

/// Weighted `L^2` norm of the residual of the unit-coefficient equation
/// over the interior nodes. Near the pole the divergence stencil loses an
/// order against the degenerate weight, so this norm scales like
/// `dr^{3/2}` on smooth solutions rather than the interior pointwise `dr^2`.
pub fn el_residual(f: &RadialProfile, params: &SpaceParams) -> f64 {
    let op = strong_operator(f, params);
    let mut acc = 0.0;
    for k in 1..f.steps() {
        let res = op[k] - odd_power(f.values[k], params.q);
        acc += res * res * f.psi_nodes[k] * f.dr;
    }
    acc.sqrt()
}

/// Max pointwise residual over interior nodes with `r_k >= r_min`; away
/// from the pole the stencil is second order.
pub fn el_residual_tail_max(f: &RadialProfile, params: &SpaceParams, r_min: f64) -> f64 {
    let op = strong_operator(f, params);
    let mut worst = 0.0f64;
    for k in 1..f.steps() {
        if f.node(k) >= r_min {
            worst = worst.max((op[k] - odd_power(f.values[k], params.q)).abs());
        }
    }
    worst
}

/// Least-squares coefficient of `|f|^{q-2} f` explaining the strong-form
/// operator, weighted by the measure: the discrete Lagrange multiplier.
pub fn fit_multiplier(f: &RadialProfile, params: &SpaceParams) -> f64 {
    let op = strong_operator(f, params);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..f.steps() {
        let t = odd_power(f.values[k], params.q);
        let w = f.psi_nodes[k] * f.dr;
        num += w * op[k] * t;
        den += w * t * t;
    }
    num / den
}

/// Rescale a unit-constraint minimizer so it solves the strong equation
/// with unit coefficient: `lambda = mu^{1/(q-p)}`.
pub fn rescale_to_el(u0: &RadialProfile, params: &SpaceParams) -> Result<(f64, f64, RadialProfile)> {
    let mu = fit_multiplier(u0, params);
    if !(mu > 0.0) {
        return Err(Error::Numerical(format!(
            "multiplier {mu} is not positive, inconsistent with a positive ground level"
        )));
    }
    let lambda = mu.powf(1.0 / (params.q - params.p));
    let rescaled = u0.with_values(u0.values.iter().map(|v| lambda * v).collect())?;
    Ok((mu, lambda, rescaled))
}

// ---------------------------------------------------------------------------
// Minimization

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MinimizeOpts {
    pub step: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Consecutive iterations with relative decrease below `tol` required
    /// to declare convergence.
    pub window: usize,
    /// Number of intermediate iterates kept for concentration diagnostics.
    pub snapshots: usize,
}

impl Default for MinimizeOpts {
    fn default() -> Self {
        MinimizeOpts { step: 0.05, tol: 1e-10, max_iter: 400_000, window: 50, snapshots: 8 }
    }
}

#[derive(Clone, Debug)]
pub struct SolverResult {
    /// Minimizer with unit weighted `L^q` norm.
    pub minimizer: RadialProfile,
    /// Constrained minimum of the discrete energy.
    pub kappa: f64,
    pub mu: f64,
    pub lambda_scale: f64,
    /// `lambda_scale * minimizer`, solving the unit-coefficient equation.
    pub rescaled: RadialProfile,
    /// Weighted residual of the rescaled solution.
    pub el_residual: f64,
    /// How far the minimizer's constraint sits from one.
    pub constraint_error: f64,
    pub iterations: usize,
    /// Energy after every accepted iteration, nonincreasing.
    pub energies: Vec<f64>,
    pub snapshots: Vec<RadialProfile>,
}

fn renormalized(f: &RadialProfile, q: f64) -> Result<RadialProfile> {
    let c = constraint_norm(f, q);
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Precondition("profile has no mass to normalize".into()));
    }
    f.with_values(f.values.iter().map(|v| v / c).collect())
}

/// Projected gradient descent on the constraint sphere. Renormalizing after
/// each step makes the iteration a descent on the scale-invariant quotient
/// `E(f) / |f|_q^p`, so the search direction is that quotient's gradient;
/// at its zeros the constrained first-order conditions hold. The direction
/// is preconditioned by the diagonal curvature scale (the weight varies by
/// orders of magnitude across the window), the step length is the spectral
/// two-point estimate, and backtracking plus the absolute-value projection
/// keep the energy strictly decreasing through nonnegative iterates.
pub fn minimize(params: &SpaceParams, init: &RadialProfile, opts: &MinimizeOpts) -> Result<SolverResult> {
    if !(opts.step > 0.0) || !(opts.tol > 0.0) || opts.window == 0 {
        return Err(Error::Config("minimizer options need positive step, tolerance and window".into()));
    }
    let (p, q) = (params.p, params.q);
    let mut f = renormalized(init, params.q)?;
    let mut energy = discrete_energy(&f, params);
    let last = f.steps();
    // diagonal of the quadratic-part Hessian at unit slope
    let mut metric = vec![1.0; last + 1];
    for j in 0..last {
        let w = if j == 0 { 0.5 } else { 1.0 };
        let mut d = w * f.psi_nodes[j] * f.dr + f.psi_mid[j] / f.dr;
        if j > 0 {
            d += f.psi_mid[j - 1] / f.dr;
        }
        metric[j] = (p * d).max(1e-300);
    }
    let quotient_grad = |f: &RadialProfile, energy: f64| -> Vec<f64> {
        let mut g = energy_gradient(f, params);
        let mass: f64 = f.node_sum(|v| v.abs().powf(q));
        let scale = p * energy / mass;
        for (j, gj) in g.iter_mut().enumerate().take(last) {
            let w = if j == 0 { 0.5 } else { 1.0 };
            *gj -= scale * w * odd_power(f.values[j], q) * f.psi_nodes[j] * f.dr;
        }
        g
    };
    let mut energies = vec![energy];
    let mut snapshots = vec![f.clone()];
    let snap_every = (opts.max_iter / opts.snapshots.max(1)).max(1);
    let mut calm = 0usize;
    let mut iter = 0usize;
    let mut step = opts.step;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    while iter < opts.max_iter {
        iter += 1;
        let g = quotient_grad(&f, energy);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("gradient lost finiteness at iteration {iter}")));
        }
        // two-point step in the metric; falls back to the last accepted step
        if let Some((pf, pg)) = &prev {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..=last {
                let df = f.values[j] - pf[j];
                num += df * metric[j] * df;
                den += df * (g[j] - pg[j]);
            }
            if den > 0.0 && num > 0.0 {
                let s = num / den;
                if s.is_finite() {
                    step = s.clamp(1e-14, 1e6);
                }
            }
        }
        prev = Some((f.values.clone(), g.clone()));
        let mut improved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = f
                .values
                .iter()
                .zip(&g)
                .zip(&metric)
                .map(|((v, gi), mi)| (v - step * gi / mi).abs())
                .collect();
            let candidate = match renormalized(&f.with_values(trial)?, params.q) {
                Ok(c) => c,
                Err(_) => {
                    step *= 0.5;
                    continue;
                }
            };
            let e = discrete_energy(&candidate, params);
            if e < energy {
                if energy - e < opts.tol * energy {
                    calm += 1;
                } else {
                    calm = 0;
                }
                f = candidate;
                energy = e;
                energies.push(e);
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            // no decrease at any step length: stationary to machine
            // precision; drop the two-point memory and count it as calm
            calm += 1;
            prev = None;
            step = opts.step;
        }
        if iter % snap_every == 0 {
            snapshots.push(f.clone());
        }
        if calm >= opts.window {
            break;
        }
    }
    if calm < opts.window {
        return Err(Error::Budget {
            msg: format!("descent did not settle within {} iterations", opts.max_iter),
            achieved: energy,
        });
    }
    snapshots.push(f.clone());
    let constraint_error = (constraint_norm(&f, params.q) - 1.0).abs();
    let (mu, lambda_scale, rescaled) = rescale_to_el(&f, params)?;
    let residual = el_residual(&rescaled, params);
    Ok(SolverResult {
        kappa: energy,
        minimizer: f,
        mu,
        lambda_scale,
        el_residual: residual,
        rescaled,
        constraint_error,
        iterations: iter,
        energies,
        snapshots,
    })
}

// ---------------------------------------------------------------------------
// Shooting reference solver (p = 2)

/// Ground state of `-u'' - ((m-1)/r) u' + u = u^{q-1}` found by bisecting
/// the initial height between collapse back into the well and overshoot
/// through zero. Independent of the variational solver; used to calibrate
/// it.
#[derive(Clone, Debug)]
pub struct ShootingSolution {
    pub initial_height: f64,
    pub rs: Vec<f64>,
    pub us: Vec<f64>,
    /// `int u^q Psi dr`, which by the Nehari identity equals the energy of
    /// the unrescaled solution.
    pub mass_q: f64,
    /// Constrained ground level implied by scaling: `mass_q^{1 - p/q}`.
    pub kappa: f64,
    /// Relative gap between energy and q-mass; a self-consistency check.
    pub nehari_gap: f64,
}

impl ShootingSolution {
    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return self.us[0];
        }
        match self.rs.binary_search_by(|x| x.partial_cmp(&r).unwrap()) {
            Ok(i) => self.us[i],
            Err(i) => {
                if i >= self.rs.len() {
                    0.0
                } else {
                    let (r0, r1) = (self.rs[i - 1], self.rs[i]);
                    let t = (r - r0) / (r1 - r0);
                    self.us[i - 1] * (1.0 - t) + self.us[i] * t
                }
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Shot {
    /// Turned back up while positive: initial height too low.
    Undershoot,
    /// Crossed zero: initial height too high.
    Overshoot,
    /// Positive and still falling at the far end.
    Hugging,
}

/// Integrate one shot; the collected path is valid up to the event that
/// classified it (empty unless `keep`).
fn shoot(a: f64, m: f64, q: f64, h: f64, r_end: f64, keep: bool) -> (Shot, Vec<f64>, Vec<f64>) {
    // series start: u = a + (a - a^{q-1}) r^2 / (2m)
    let beta = (a - a.powf(q - 1.0)) / (2.0 * m);
    let mut r = h;
    let mut u = a + beta * r * r;
    let mut v = 2.0 * beta * r;
    let mut rs = Vec::new();
    let mut us = Vec::new();
    if keep {
        rs.push(0.0);
        us.push(a);
    }
    let accel = |r: f64, u: f64, v: f64| -> f64 { u - odd_power(u, q) - (m - 1.0) / r * v };
    while r < r_end {
        if keep {
            rs.push(r);
            us.push(u);
        }
        // classic fourth-order step for (u, v)
        let k1v = accel(r, u, v);
        let k1u = v;
        let k2v = accel(r + h / 2.0, u + h / 2.0 * k1u, v + h / 2.0 * k1v);
        let k2u = v + h / 2.0 * k1v;
        let k3v = accel(r + h / 2.0, u + h / 2.0 * k2u, v + h / 2.0 * k2v);
        let k3u = v + h / 2.0 * k2v;
        let k4v = accel(r + h, u + h * k3u, v + h * k3v);
        let k4u = v + h * k3v;
        u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        r += h;
        if u <= 0.0 {
            return (Shot::Overshoot, rs, us);
        }
        // turning up below the well bottom at u = 1 traps the trajectory:
        // friction only drains energy, so it can never clear the origin
        if v >= 0.0 && u < 1.0 {
            return (Shot::Undershoot, rs, us);
        }
    }
    if keep {
        rs.push(r);
        us.push(u);
    }
    (Shot::Hugging, rs, us)
}

pub fn shooting_ground_state(params: &SpaceParams) -> Result<ShootingSolution> {
    if (params.p - 2.0).abs() > 1e-12 {
        return Err(Error::Config("the shooting reference covers p = 2 only".into()));
    }
    let (m, q) = (params.m as f64, params.q);
    let h = 5e-4;
    let r_end = 20.0;
    let (mut lo, mut hi) = (1.2, 9.0);
    if shoot(lo, m, q, h, r_end, false).0 != Shot::Undershoot {
        return Err(Error::Numerical("bisection bracket: low shot did not fall back".into()));
    }
    if shoot(hi, m, q, h, r_end, false).0 != Shot::Overshoot {
        return Err(Error::Numerical("bisection bracket: high shot did not cross zero".into()));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        match shoot(mid, m, q, h, r_end, false).0 {
            Shot::Undershoot => lo = mid,
            Shot::Overshoot => hi = mid,
            Shot::Hugging => {
                // still on the separatrix at the far end; good enough
                lo = mid;
                hi = mid;
                break;
            }
        }
    }
    let a = 0.5 * (lo + hi);
    // the converged shot leaves the separatrix through one of the events
    // around where roundoff noise takes over; the path before that is valid
    let (_, mut rs, mut us) = shoot(a, m, q, h, r_end, true);
    if us.len() < 100 {
        return Err(Error::Numerical("converged shot left the separatrix implausibly early".into()));
    }
    // truncate to the trusted stretch and splice the asymptotic decay
    // u ~ r^{-(m-1)/2} e^{-r}
    let cut = us.iter().position(|u| *u < 1e-8).unwrap_or(us.len() - 1);
    rs.truncate(cut + 1);
    us.truncate(cut + 1);
    let (rc, uc) = (rs[cut], us[cut]);
    let mut r = rc;
    while r < rc + 25.0 {
        r += 0.05;
        rs.push(r);
        us.push(uc * (rc / r).powf((m - 1.0) / 2.0) * (rc - r).exp());
    }
    // sphere-area weight and the two quadratures of the self-check
    let area = m * unit_ball_volume(params.m);
    let (mut mass_q, mut energy) = (0.0, 0.0);
    for i in 1..rs.len() {
        let (r0, r1) = (rs[i - 1], rs[i]);
        let (u0, u1) = (us[i - 1], us[i]);
        let du = (u1 - u0) / (r1 - r0);
        let g = |r: f64, u: f64| (area * r.powf(m - 1.0)) * (du * du + u * u);
        let f = |r: f64, u: f64| (area * r.powf(m - 1.0)) * u.abs().powf(q);
        mass_q += 0.5 * (f(r0, u0) + f(r1, u1)) * (r1 - r0);
        energy += 0.5 * (g(r0, u0) + g(r1, u1)) * (r1 - r0);
    }
    let kappa = mass_q.powf(1.0 - params.p / q);
    Ok(ShootingSolution {
        initial_height: a,
        rs,
        us,
        mass_q,
        kappa,
        nehari_gap: (energy / mass_q - 1.0).abs(),
    })
}

// ---------------------------------------------------------------------------
// Concentration diagnostics

/// Total `|f(|x|)|^q` mass of the metric ball of radius `w` centered at
/// distance `c` from the pole, by quadrature over spherical caps.
pub fn radial_ball_mass(m: usize, f: &RadialProfile, q: f64, c: f64, w: f64) -> Result<f64> {
    if m < 2 || !(w > 0.0) || c < 0.0 {
        return Err(Error::Precondition("ball mass needs m >= 2, a positive radius and a nonnegative center".into()));
    }
    let full_area = m as f64 * unit_ball_volume(m);
    let band = move |theta: f64| theta.sin().powf(m as f64 - 2.0);
    let full_band = crate::quad::integrate_tight(band, 0.0, std::f64::consts::PI)?;
    let cap_area = move |s: f64| -> f64 {
        if s + c <= w {
            return full_area * s.powf(m as f64 - 1.0);
        }
        if s <= (c - w).abs() || s >= c + w {
            return 0.0;
        }
        let cos_alpha = ((s * s + c * c - w * w) / (2.0 * s * c)).clamp(-1.0, 1.0);
        let alpha = cos_alpha.acos();
        let fraction = match m {
            2 => alpha / std::f64::consts::PI,
            3 => (1.0 - cos_alpha) / 2.0,
            _ => crate::quad::integrate(band, 0.0, alpha, 1e-10, 1e-8).unwrap_or(0.0) / full_band,
        };
        full_area * s.powf(m as f64 - 1.0) * fraction
    };
    // trapezoid on the profile's own grid: f is linear within cells and the
    // cap area is smooth, so the rule is second order without adaptivity
    let lo = (c - w).max(0.0);
    let hi = (c + w).min(f.r_max());
    if hi <= lo {
        return Ok(0.0);
    }
    let n = (((hi - lo) / f.dr).ceil() as usize).clamp(16, 20_000);
    let step = (hi - lo) / n as f64;
    let integrand = |s: f64| f.eval(s).abs().powf(q) * cap_area(s);
    let mut acc = 0.5 * (integrand(lo) + integrand(hi));
    for i in 1..n {
        acc += integrand(lo + i as f64 * step);
    }
    Ok(acc * step)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConcentrationVerdict {
    /// Local mass stays bounded below with a stable argmax: no escape.
    Tight,
    /// Local mass persists but its argmax runs to the window edge.
    Escaping,
    /// The local-mass supremum decays to zero.
    Vanishing,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConcentrationReport {
    /// Spotlight supremum of ball masses for each profile in the sequence.
    pub sups: Vec<f64>,
    /// Center radius attaining the supremum.
    pub argmax_radii: Vec<f64>,
    pub ball_radius: f64,
    pub verdict: ConcentrationVerdict,
}

/// Track the spotlight local-mass supremum along a sequence of profiles and
/// classify it: tight, escaping to the window edge, or vanishing.
pub fn concentration_diagnostic(
    iterates: &[RadialProfile],
    m: usize,
    q: f64,
    center_radii: &[f64],
    w: f64,
) -> Result<ConcentrationReport> {
    if iterates.len() < 2 || center_radii.len() < 2 {
        return Err(Error::Precondition("need at least two profiles and two centers".into()));
    }
    let edge = center_radii.iter().fold(0.0f64, |a, b| a.max(*b));
    let mut sups = Vec::with_capacity(iterates.len());
    let mut argmax = Vec::with_capacity(iterates.len());
    for f in iterates {
        let (mut best, mut at) = (f64::NEG_INFINITY, 0.0);
        for &c in center_radii {
            let mass = radial_ball_mass(m, f, q, c, w)?;
            if mass > best {
                best = mass;
                at = c;
            }
        }
        sups.push(best);
        argmax.push(at);
    }
    let zeros = vec![0.0; sups.len()];
    let trend = classify_trend(&sups, &zeros);
    let last = argmax[argmax.len() - 1];
    let drift = last - argmax[0];
    let tail = &argmax[argmax.len().saturating_sub(3)..];
    let tail_spread = tail.iter().fold(0.0f64, |a, b| a.max(*b)) - tail.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    let verdict = match trend {
        TrendVerdict::Vanishes => ConcentrationVerdict::Vanishing,
        TrendVerdict::BoundedBelow => {
            if last >= 0.8 * edge && drift >= 0.4 * edge {
                ConcentrationVerdict::Escaping
            } else if last <= 0.7 * edge && tail_spread <= 2.0 * w {
                ConcentrationVerdict::Tight
            } else {
                ConcentrationVerdict::Inconclusive
            }
        }
        TrendVerdict::Inconclusive => ConcentrationVerdict::Inconclusive,
    };
    Ok(ConcentrationReport { sups, argmax_radii: argmax, ball_radius: w, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sphere3(r: f64) -> f64 {
        4.0 * PI * r * r
    }

    fn params34() -> SpaceParams {
        SpaceParams::new(3, 2.0, 4.0).unwrap()
    }

    #[test]
    fn exponent_window_is_enforced() {
        assert!(SpaceParams::new(3, 2.0, 4.0).is_ok());
        assert!(SpaceParams::new(3, 2.0, 5.9).is_ok());
        assert!(matches!(SpaceParams::new(3, 3.0, 4.0), Err(Error::Config(_))));
        assert!(matches!(SpaceParams::new(3, 2.0, 2.0), Err(Error::Config(_))));
        assert!(matches!(SpaceParams::new(3, 2.0, 6.0), Err(Error::Config(_))));
        assert!(matches!(SpaceParams::new(1, 0.5, 1.0), Err(Error::Config(_))));
        assert!((params34().conjugate_exponent() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn energy_and_constraint_match_quadrature() {
        let params = params34();
        let f = RadialProfile::from_fn(20.0, 2000, sphere3, |r| (-r).exp()).unwrap();
        assert_eq!(discrete_energy(&f.with_values(vec![0.0; 2001]).unwrap(), &params), 0.0);
        assert_eq!(constraint_norm(&f.with_values(vec![0.0; 2001]).unwrap(), 4.0), 0.0);
        // int (f'^2 + f^2) 4 pi r^2 dr for f = e^{-r} is 2 pi
        let e_exact = crate::quad::integrate_tight(|r| 2.0 * (-2.0 * r).exp() * sphere3(r), 0.0, 30.0).unwrap();
        let e = discrete_energy(&f, &params);
        assert!((e - e_exact).abs() < 0.005 * e_exact, "{e} vs {e_exact}");
        let c_exact = crate::quad::integrate_tight(|r| (-4.0 * r).exp() * sphere3(r), 0.0, 30.0)
            .unwrap()
            .powf(0.25);
        let c = constraint_norm(&f, 4.0);
        assert!((c - c_exact).abs() < 0.005 * c_exact, "{c} vs {c_exact}");
        // homogeneity
        let doubled = f.with_values(f.values.iter().map(|v| 2.0 * v).collect()).unwrap();
        assert!((constraint_norm(&doubled, 4.0) - 2.0 * c).abs() < 1e-12);
    }

    #[test]
    fn constant_profile_energy_is_the_analytic_sum() {
        let params = params34();
        let steps = 50;
        let mut vals = vec![3.0; steps + 1];
        vals[steps] = 0.0;
        let f = RadialProfile::new(5.0, steps, sphere3, vals).unwrap();
        let dr = f.dr;
        // mass term: trapezoid of 9 Psi without the end node; gradient term:
        // one boundary step of slope 3/dr on the last cell
        let mut expected = 0.0;
        for k in 0..steps {
            let w = if k == 0 { 0.5 } else { 1.0 };
            expected += 9.0 * w * sphere3(k as f64 * dr) * dr;
        }
        expected += (3.0 / dr).powi(2) * sphere3((steps as f64 - 0.5) * dr) * dr;
        assert!((discrete_energy(&f, &params) - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for p in [2.0, 3.0] {
            let params = SpaceParams::new(4, p, p + 1.0).unwrap();
            for _ in 0..5 {
                let steps = 40;
                let mut vals: Vec<f64> = (0..=steps).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                vals[steps] = 0.0;
                let f = RadialProfile::new(3.0, steps, sphere3, vals).unwrap();
                let g = energy_gradient(&f, &params);
                let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                let h = 1e-6;
                for j in 0..steps {
                    let mut up = f.values.clone();
                    let mut dn = f.values.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (discrete_energy(&f.with_values(up).unwrap(), &params)
                        - discrete_energy(&f.with_values(dn).unwrap(), &params))
                        / (2.0 * h);
                    let scale = fd.abs().max(1e-3 * gmax);
                    assert!(
                        (fd - g[j]).abs() <= 1e-5 * scale,
                        "p={p} component {j}: fd {fd} vs analytic {}",
                        g[j]
                    );
                }
            }
        }
    }

    #[test]
    fn taking_absolute_values_never_raises_energy() {
        let params = params34();
        let f = RadialProfile::from_fn(6.0, 120, sphere3, |r| (3.0 * r).sin() * (-r).exp()).unwrap();
        let folded = f.with_values(f.values.iter().map(|v| v.abs()).collect()).unwrap();
        assert!(discrete_energy(&folded, &params) <= discrete_energy(&f, &params));
    }

    #[test]
    fn shooting_reference_self_checks() {
        let sol = shooting_ground_state(&params34()).unwrap();
        assert!(
            sol.initial_height > 4.2 && sol.initial_height < 4.5,
            "initial height {}",
            sol.initial_height
        );
        assert!(sol.nehari_gap < 1e-3, "energy/mass gap {}", sol.nehari_gap);
        assert!(sol.eval(0.0) == sol.initial_height);
        assert!(sol.eval(10.0) < 1e-3);
        assert!(sol.kappa > 0.0 && (sol.kappa - sol.mass_q.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn coarse_minimization_tracks_the_reference() {
        let params = params34();
        let init = RadialProfile::from_fn(10.0, 200, sphere3, |r| (-r * r).exp()).unwrap();
        let opts = MinimizeOpts { max_iter: 120_000, ..MinimizeOpts::default() };
        let out = minimize(&params, &init, &opts).unwrap();
        assert!(out.kappa > 0.0);
        assert!(out.constraint_error <= 1e-8);
        assert!(out.energies.windows(2).all(|w| w[1] < w[0]), "energy log not strictly decreasing");
        let oracle = shooting_ground_state(&params).unwrap();
        let rel = (out.kappa - oracle.kappa).abs() / oracle.kappa;
        assert!(rel < 0.03, "coarse kappa {} vs reference {}", out.kappa, oracle.kappa);
        assert!((out.lambda_scale - out.mu.sqrt()).abs() < 1e-12);
        // discrete Nehari identity on the rescaled solution
        let u = &out.rescaled;
        let lhs = discrete_energy(u, &params);
        let rhs = u.node_sum(|v| v.abs().powf(params.q));
        assert!((lhs - rhs).abs() < 5e-3 * rhs, "nehari gap {} vs {}", lhs, rhs);
    }

    #[test]
    fn residual_discriminates_solutions_from_noise() {
        let params = params34();
        let oracle = shooting_ground_state(&params).unwrap();
        let f = RadialProfile::from_fn(15.0, 1500, sphere3, |r| oracle.eval(r)).unwrap();
        let l2 = el_residual(&f, &params);
        // near the pole the degenerate weight costs half an order; away
        // from it the stencil is second order
        assert!(l2 < 0.1, "weighted residual {l2}");
        let tail = el_residual_tail_max(&f, &params, 1.0);
        assert!(tail <= 10.0 * f.dr * f.dr, "interior residual {tail} at dr {}", f.dr);
        let junk = RadialProfile::from_fn(15.0, 1500, sphere3, |r| (-r).exp() * (1.0 + (5.0 * r).sin())).unwrap();
        assert!(el_residual(&junk, &params) > 100.0 * l2);
        let zero = f.with_values(vec![0.0; 1501]).unwrap();
        assert_eq!(el_residual(&zero, &params), 0.0);
    }

    #[test]
    fn rescaling_rejects_degenerate_multipliers() {
        let params = params34();
        // the zero profile has no q-term to fit against: mu is NaN
        let zero = RadialProfile::from_fn(5.0, 100, sphere3, |_| 0.0).unwrap();
        assert!(matches!(rescale_to_el(&zero, &params), Err(Error::Numerical(_))));
        // sign consistency on a generic negative profile still yields a
        // definite branch, never a panic
        let f = RadialProfile::from_fn(5.0, 100, sphere3, |r| -(5.0 - r) * 0.2).unwrap();
        let mu = fit_multiplier(&f, &params);
        if mu <= 0.0 {
            assert!(matches!(rescale_to_el(&f, &params), Err(Error::Numerical(_))));
        } else {
            assert!(rescale_to_el(&f, &params).is_ok());
        }
    }

    #[test]
    fn ball_mass_matches_whole_space_when_ball_swallows_support() {
        let f = RadialProfile::from_fn(8.0, 400, sphere3, |r| (1.0 - r).max(0.0)).unwrap();
        let total = radial_ball_mass(3, &f, 4.0, 0.0, 5.0).unwrap();
        let exact = crate::quad::integrate_tight(|r| (1.0 - r).max(0.0).powi(4) * sphere3(r), 0.0, 1.0).unwrap();
        assert!((total - exact).abs() < 1e-4 * exact, "{total} vs {exact}");
        // far, tiny ball sees nothing
        assert_eq!(radial_ball_mass(3, &f, 4.0, 6.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn translated_shells_escape_with_steady_supremum() {
        let centers: Vec<f64> = (0..40).map(|i| i as f64 * 0.5).collect();
        let family: Vec<RadialProfile> = (0..6)
            .map(|k| {
                let c = 6.0 + 2.0 * k as f64;
                RadialProfile::from_fn(24.0, 960, sphere3, move |r| (1.0 - (r - c).powi(2)).max(0.0)).unwrap()
            })
            .collect();
        let report = concentration_diagnostic(&family, 3, 4.0, &centers, 1.0).unwrap();
        assert_eq!(report.verdict, ConcentrationVerdict::Escaping, "argmaxes {:?}", report.argmax_radii);
        let smax = report.sups.iter().fold(0.0f64, |a, b| a.max(*b));
        let smin = report.sups.iter().fold(f64::INFINITY, |a, b| a.min(*b));
        assert!(smax / smin < 1.1, "sup drifted {smin}..{smax}");
    }

    #[test]
    fn spreading_family_vanishes() {
        let centers: Vec<f64> = (0..40).map(|i| i as f64 * 0.5).collect();
        // start at k = 2: the probe ball swallows the k = 1 support whole,
        // which breaks the monotone decay the classifier requires
        let family: Vec<RadialProfile> = (2..=6)
            .map(|k| {
                let k = k as f64;
                RadialProfile::from_fn(24.0, 960, sphere3, move |r| {
                    k.powf(-0.5) * (1.0 - (r / k).powi(2)).max(0.0)
                })
                .unwrap()
            })
            .collect();
        let report = concentration_diagnostic(&family, 3, 4.0, &centers, 1.0).unwrap();
        assert_eq!(report.verdict, ConcentrationVerdict::Vanishing, "sups {:?}", report.sups);
    }

    #[test]
    fn steady_centered_family_is_tight() {
        let centers: Vec<f64> = (0..40).map(|i| i as f64 * 0.5).collect();
        let base = RadialProfile::from_fn(24.0, 960, sphere3, |r| (-r * r).exp()).unwrap();
        let family: Vec<RadialProfile> = (0..5)
            .map(|k| {
                let wobble = 1.0 + 0.01 * k as f64;
                base.with_values(base.values.iter().map(|v| v * wobble).collect()).unwrap()
            })
            .collect();
        let report = concentration_diagnostic(&family, 3, 4.0, &centers, 1.0).unwrap();
        assert_eq!(report.verdict, ConcentrationVerdict::Tight, "argmaxes {:?}", report.argmax_radii);
    }
}
