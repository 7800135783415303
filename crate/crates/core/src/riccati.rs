//! Reduced Riccati systems for the feedback gains.
//!
//! For the all-to-all interaction matrix the `N x N` algebraic Riccati
//! equation `0 = -rK + KA + A^T K - (N/nu) K K + I/N` has a solution with one
//! diagonal value `k_d` and one off-diagonal value `k_o`. Gains are stored in
//! the *scaled* convention `k_d <- N k_d`, `k_o <- N^2 k_o`, in which the
//! reduced system reads
//!
//! ```text
//! 0 = -r k_d - 2 p alpha (k_d - k_o/N) - (k_d^2 + alpha k_o^2 / N) / nu + 1
//! 0 = -r k_o + 2 p (k_d - k_o/N)       - (2 k_d k_o + (alpha - 1/N) k_o^2) / nu
//! ```
//!
//! with `alpha = (N - 1)/N`.
//!
//! # Finite horizon
//!
//! The terminal-value problem `-dK/dt = KA + A^T K - (N/nu) K^2 + I/N`,
//! `K(T) = 0` keeps the same two-value structure for all `t`: the right-hand
//! side maps matrices of the form `k_d I + k_o (J - I)` (with `J` the all-ones
//! matrix) into the same family, because `I`, `J` span a commutative algebra
//! with `J^2 = N J`. Reading off the diagonal and off-diagonal entries and
//! scaling as above gives, in reversed time `tau = T - t`,
//!
//! ```text
//! dk_d/dtau = -2 p alpha (k_d - k_o/N) - (k_d^2 + alpha k_o^2 / N) / nu + 1
//! dk_o/dtau =  2 p (k_d - k_o/N)       - (2 k_d k_o + (alpha - 1/N) k_o^2) / nu
//! ```
//!
//! i.e. the algebraic residual with `r = 0`, integrated forward in `tau` from
//! zero. The discount rate does not enter the finite-horizon problem. The
//! reduction is checked against a dense backward integration in the tests.
//!
//! The averaged-control coefficient `s` obeys
//! `ds/dtau = (k_d + alpha k_o)(1 - s/nu)`, `s(tau = 0) = 0`; its algebraic
//! value is `s = nu`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::sim::rk4_step;

/// Feedback gains in the scaled convention, plus the averaged-control
/// coefficient `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiccatiGains {
    pub k_d: f64,
    pub k_o: f64,
    pub s: f64,
}

impl RiccatiGains {
    /// Entries of the unscaled Riccati matrix for `n` agents.
    pub fn unscaled(&self, n: usize) -> (f64, f64) {
        let n = n as f64;
        (self.k_d / n, self.k_o / (n * n))
    }
}

/// Stabilizing (`+`) branch of the `N -> inf` reduced system
/// `0 = k_d^2/nu + (2p + r) k_d - 1`, `0 = k_o^2/nu + (2 k_d/nu + r) k_o - 2 p k_d`.
///
/// Evaluated in rationalized form; `-b + sqrt(b^2 + c)` loses all digits
/// when `c << b^2`.
pub fn limit_gains(p_bar: f64, nu: f64, r: f64) -> (f64, f64) {
    let b = p_bar + 0.5 * r;
    let k_d = 1.0 / (b + (b * b + 1.0 / nu).sqrt());
    let c = k_d + 0.5 * nu * r;
    let forcing = 2.0 * nu * p_bar * k_d;
    let k_o = if forcing == 0.0 { 0.0 } else { forcing / (c + (c * c + forcing).sqrt()) };
    (k_d, k_o)
}

/// Both roots of each limit quadratic; `k_o` roots are taken at `k_d_plus`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitRoots {
    pub k_d_plus: f64,
    pub k_d_minus: f64,
    pub k_o_plus: f64,
    pub k_o_minus: f64,
}

pub fn limit_gains_all_roots(p_bar: f64, nu: f64, r: f64) -> LimitRoots {
    let (k_d_plus, k_o_plus) = limit_gains(p_bar, nu, r);
    let b = p_bar + 0.5 * r;
    let k_d_minus = -nu * b - nu * (b * b + 1.0 / nu).sqrt();
    let c = k_d_plus + 0.5 * nu * r;
    let k_o_minus = -c - (c * c + 2.0 * nu * p_bar * k_d_plus).sqrt();
    LimitRoots { k_d_plus, k_d_minus, k_o_plus, k_o_minus }
}

/// Right-hand sides of the scaled reduced system, evaluated literally.
pub fn residual_kd_ko(k_d: f64, k_o: f64, params: &ModelParams) -> (f64, f64) {
    reduced_rhs(k_d, k_o, params.n_agents, params.p_bar, params.nu, params.r)
}

fn reduced_rhs(k_d: f64, k_o: f64, n: usize, p_bar: f64, nu: f64, r: f64) -> (f64, f64) {
    let nf = n as f64;
    let alpha = (nf - 1.0) / nf;
    let gap = k_d - k_o / nf;
    let r1 = -r * k_d - 2.0 * p_bar * alpha * gap - (k_d * k_d + alpha / nf * k_o * k_o) / nu + 1.0;
    let r2 = -r * k_o + 2.0 * p_bar * gap - (2.0 * k_d * k_o + (alpha - 1.0 / nf) * k_o * k_o) / nu;
    (r1, r2)
}

/// Right-hand sides of the unscaled reduced system, in the unscaled entries
/// of the Riccati matrix.
pub fn residual_unscaled(k_d: f64, k_o: f64, params: &ModelParams) -> (f64, f64) {
    let n = params.n_agents as f64;
    let (p, nu, r) = (params.p_bar, params.nu, params.r);
    let r1 = -r * k_d - 2.0 * p * (n - 1.0) / n * (k_d - k_o) - n / nu * (k_d * k_d + (n - 1.0) * k_o * k_o) + 1.0 / n;
    let r2 = -r * k_o + 2.0 * p / n * (k_d - k_o) - n / nu * (2.0 * k_d * k_o + (n - 2.0) * k_o * k_o);
    (r1, r2)
}

pub const NEWTON_MAX_ITER: usize = 100;
pub const NEWTON_TOL: f64 = 1e-12;
/// Step is halved while the residual does not decrease.
pub const NEWTON_BACKTRACK: f64 = 0.5;

/// Solves the scaled reduced system at finite `N` by Newton's method started
/// from the limit gains. The returned `s` is the algebraic value `nu`.
pub fn solve_finite_n_gains(params: &ModelParams) -> Result<RiccatiGains> {
    params.validate()?;
    let nf = params.n_agents as f64;
    let alpha = params.alpha();
    let (p, nu, r) = (params.p_bar, params.nu, params.r);
    let (mut k_d, mut k_o) = limit_gains(p, nu, r);
    let norm = |(a, b): (f64, f64)| a.abs().max(b.abs());
    let mut res = norm(residual_kd_ko(k_d, k_o, params));

    for _ in 0..NEWTON_MAX_ITER {
        if res == 0.0 {
            break;
        }
        let (f1, f2) = residual_kd_ko(k_d, k_o, params);
        let j11 = -r - 2.0 * p * alpha - 2.0 * k_d / nu;
        let j12 = 2.0 * p * alpha / nf - 2.0 * alpha / (nu * nf) * k_o;
        let j21 = 2.0 * p - 2.0 * k_o / nu;
        let j22 = -r - 2.0 * p / nf - (2.0 * k_d + 2.0 * (alpha - 1.0 / nf) * k_o) / nu;
        let det = j11 * j22 - j12 * j21;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let dk_d = -(j22 * f1 - j12 * f2) / det;
        let dk_o = -(-j21 * f1 + j11 * f2) / det;

        if res <= NEWTON_TOL {
            // converged: polish with full steps while they still help
            let (cd, co) = (k_d + dk_d, k_o + dk_o);
            let cand = norm(residual_kd_ko(cd, co, params));
            if cand >= res {
                break;
            }
            (k_d, k_o, res) = (cd, co, cand);
            continue;
        }
        let mut step = 1.0;
        loop {
            let (cd, co) = (k_d + step * dk_d, k_o + step * dk_o);
            let cand = norm(residual_kd_ko(cd, co, params));
            if cand < res || step < 1e-6 {
                k_d = cd;
                k_o = co;
                res = cand;
                break;
            }
            step *= NEWTON_BACKTRACK;
        }
    }
    if res <= NEWTON_TOL {
        Ok(RiccatiGains { k_d, k_o, s: nu })
    } else {
        Err(Error::NonConvergence { iterations: NEWTON_MAX_ITER, residual: res })
    }
}

/// Gains on a uniform time grid `t_0 = 0 < .. < t_n = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonGains {
    pub times: Vec<f64>,
    pub k_d: Vec<f64>,
    pub k_o: Vec<f64>,
}

impl FiniteHorizonGains {
    pub fn at_start(&self) -> (f64, f64) {
        (self.k_d[0], self.k_o[0])
    }
}

fn time_grid(t_final: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t_final > 0.0 && dt > 0.0 && t_final.is_finite()) {
        return Err(Error::InvalidParams(format!("need T > 0 and dt > 0, got T = {t_final}, dt = {dt}")));
    }
    let steps = (t_final / dt).round().max(1.0) as usize;
    Ok((steps, t_final / steps as f64))
}

/// Backward RK4 integration of the reduced finite-horizon system from
/// `K(T) = 0`. The step is adjusted so that it divides `T`.
pub fn solve_finite_horizon_gains(params: &ModelParams, t_final: f64, dt: f64) -> Result<FiniteHorizonGains> {
    params.validate()?;
    let (steps, h) = time_grid(t_final, dt)?;
    let (n, p, nu) = (params.n_agents, params.p_bar, params.nu);
    let rhs = |k: &[f64; 2]| {
        let (a, b) = reduced_rhs(k[0], k[1], n, p, nu, 0.0);
        [a, b]
    };
    // index 0 holds tau = 0, i.e. t = T
    let mut rev = Vec::with_capacity(steps + 1);
    let mut k = [0.0, 0.0];
    rev.push(k);
    for _ in 0..steps {
        k = rk4_step(&k, rhs, h);
        rev.push(k);
    }
    rev.reverse();
    Ok(FiniteHorizonGains {
        times: (0..=steps).map(|i| i as f64 * h).collect(),
        k_d: rev.iter().map(|k| k[0]).collect(),
        k_o: rev.iter().map(|k| k[1]).collect(),
    })
}

/// Gains as a function of time. Tabulated schedules are interpolated
/// linearly and clamped at both ends.
#[derive(Debug, Clone, PartialEq)]
pub enum GainSchedule {
    Constant(RiccatiGains),
    Tabulated { times: Vec<f64>, k_d: Vec<f64>, k_o: Vec<f64>, s: Vec<f64> },
}

impl GainSchedule {
    pub fn from_finite_horizon(gains: &FiniteHorizonGains, s: &SSolution) -> Result<Self> {
        let n = gains.times.len();
        let s = match s {
            SSolution::Constant(c) => vec![*c; n],
            SSolution::Series { times, s } => {
                if times.len() != n {
                    return Err(Error::InvalidParams("gain and s grids differ".into()));
                }
                s.clone()
            }
        };
        Ok(GainSchedule::Tabulated { times: gains.times.clone(), k_d: gains.k_d.clone(), k_o: gains.k_o.clone(), s })
    }

    pub fn at(&self, t: f64) -> RiccatiGains {
        match self {
            GainSchedule::Constant(g) => *g,
            GainSchedule::Tabulated { times, k_d, k_o, s } => {
                let last = times.len() - 1;
                if t <= times[0] || last == 0 {
                    return RiccatiGains { k_d: k_d[0], k_o: k_o[0], s: s[0] };
                }
                if t >= times[last] {
                    return RiccatiGains { k_d: k_d[last], k_o: k_o[last], s: s[last] };
                }
                let j = times.partition_point(|&x| x <= t).min(last);
                let i = j - 1;
                let w = (t - times[i]) / (times[j] - times[i]);
                let lerp = |v: &[f64]| v[i] + w * (v[j] - v[i]);
                RiccatiGains { k_d: lerp(k_d), k_o: lerp(k_o), s: lerp(s) }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SMode {
    Algebraic,
    FiniteHorizon { t_final: f64, dt: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum SSolution {
    Constant(f64),
    /// `(t, s(t))` on a uniform grid, `s(T) = 0`.
    Series { times: Vec<f64>, s: Vec<f64> },
}

/// Averaged-control coefficient for constant scaled gains.
pub fn solve_s(params: &ModelParams, k_d: f64, k_o: f64, mode: SMode) -> Result<SSolution> {
    match mode {
        SMode::Algebraic => Ok(SSolution::Constant(params.nu)),
        SMode::FiniteHorizon { t_final, dt } => {
            let (steps, h) = time_grid(t_final, dt)?;
            let g = k_d + params.alpha() * k_o;
            let nu = params.nu;
            let rhs = |s: &f64| g * (1.0 - s / nu);
            let mut rev = Vec::with_capacity(steps + 1);
            let mut s = 0.0;
            rev.push(s);
            for _ in 0..steps {
                s = rk4_step(&s, rhs, h);
                rev.push(s);
            }
            rev.reverse();
            Ok(SSolution::Series { times: (0..=steps).map(|i| i as f64 * h).collect(), s: rev })
        }
    }
}
