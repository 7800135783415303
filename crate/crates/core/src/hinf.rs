//! H-infinity robustness certificates for the closed-loop consensus system and
//! generic bounded-real validators for small state-space systems.
//!
//! With the feedback in place the closed-loop matrix is
//! `A_hat = A - K/nu = -c_N Q - g P`, where `P = 1 1^T / N`, `Q = I - P`,
//! `c_N = p_bar + (k_d - k_o/N)/nu` and `g = (k_d + alpha k_o)/nu`. Every
//! matrix met here lives in the algebra spanned by `Q` and `P`, which is what
//! the structured residual exploits.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg;
use crate::model::ModelParams;
use crate::riccati::RiccatiGains;

/// Relative slack accepted when `gamma c_N` sits on the bound 1.
pub const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HinfCertificate {
    pub gamma: f64,
    pub c_n: f64,
    pub x_d: f64,
    pub x_o_tilde: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub positive_definite: bool,
    /// Largest absolute entry of the dense Riccati residual.
    pub residual_norm: f64,
}

/// Disagreement rate `c_N = p_bar + (k_d - k_o/N)/nu` for scaled gains.
pub fn compute_c_n(params: &ModelParams, gains: &RiccatiGains) -> f64 {
    params.p_bar + (gains.k_d - gains.k_o / params.n_agents as f64) / params.nu
}

/// Rate of the consensus direction, `g = (k_d + alpha k_o)/nu`.
pub fn consensus_rate(params: &ModelParams, gains: &RiccatiGains) -> f64 {
    (gains.k_d + params.alpha() * gains.k_o) / params.nu
}

/// `sqrt(nu) / (sqrt((p_bar + r/2)^2 nu + 1) - r sqrt(nu)/2)`.
pub fn gamma_lower_bound(p_bar: f64, nu: f64, r: f64) -> Result<f64> {
    let sn = nu.sqrt();
    let b = p_bar + 0.5 * r;
    let denom = (b * b * nu + 1.0).sqrt() - 0.5 * r * sn;
    if !(denom > 0.0) || !(nu > 0.0) {
        return Err(Error::DegenerateBound(denom));
    }
    Ok(sn / denom)
}

/// Diagonal certificate `X = lambda_- I` for the closed loop with gains `gains`.
pub fn certify(params: &ModelParams, gains: &RiccatiGains, gamma: f64) -> Result<HinfCertificate> {
    params.validate()?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidParams(format!("gamma must be positive, got {gamma}")));
    }
    let c_n = compute_c_n(params, gains);
    if !(c_n > 0.0) {
        return Err(Error::InfeasibleGamma { gamma, gamma_min: f64::INFINITY });
    }
    let gc = gamma * c_n;
    if gc < 1.0 - BOUNDARY_TOL {
        return Err(Error::InfeasibleGamma { gamma, gamma_min: 1.0 / c_n });
    }
    let root = (gc * gc - 1.0).max(0.0).sqrt();
    let gc = gc.max(1.0);
    let (lambda_minus, lambda_plus) = (gc - root, gc + root);
    let residual_norm = are_residual(lambda_minus, 0.0, params, gains, gamma);
    Ok(HinfCertificate {
        gamma,
        c_n,
        x_d: lambda_minus,
        x_o_tilde: 0.0,
        lambda_minus,
        lambda_plus,
        positive_definite: true,
        residual_norm,
    })
}

/// Riccati residual `A_hat^T X + X A_hat + X X / gamma + I / gamma` for
/// `X = x_d I + (x_o_tilde / sqrt N)(1 1^T - I)`, evaluated in the `Q`/`P`
/// algebra. Returns the largest absolute entry of the dense residual.
pub fn are_residual(x_d: f64, x_o_tilde: f64, params: &ModelParams, gains: &RiccatiGains, gamma: f64) -> f64 {
    let n = params.n_agents as f64;
    let off = x_o_tilde / n.sqrt();
    // X = x_q Q + x_p P
    let x_q = x_d - off;
    let x_p = x_d - off + off * n;
    let (c, g) = (compute_c_n(params, gains), consensus_rate(params, gains));
    let r_q = -2.0 * c * x_q + (x_q * x_q + 1.0) / gamma;
    let r_p = -2.0 * g * x_p + (x_p * x_p + 1.0) / gamma;
    // R = r_q I + (r_p - r_q) P
    let offdiag = (r_p - r_q) / n;
    (r_q + offdiag).abs().max(offdiag.abs())
}

/// [`are_residual`] assembled from dense matrices; `O(N^3)`.
pub fn are_residual_dense(x_d: f64, x_o_tilde: f64, params: &ModelParams, gains: &RiccatiGains, gamma: f64) -> f64 {
    let n = params.n_agents;
    let a_hat = consensus_closed_loop(params, gains);
    let off = x_o_tilde / (n as f64).sqrt();
    let x = DMatrix::from_fn(n, n, |i, j| if i == j { x_d } else { off });
    let r = a_hat.transpose() * &x + &x * &a_hat + (&x * &x) / gamma + DMatrix::identity(n, n) / gamma;
    r.amax()
}

/// `A_hat = p_bar (1 1^T / N - I) - K / nu`, with `K` carrying `k_d` on the
/// diagonal and `k_o / N` off it.
pub fn consensus_closed_loop(params: &ModelParams, gains: &RiccatiGains) -> DMatrix<f64> {
    let n = params.n_agents;
    let nf = n as f64;
    DMatrix::from_fn(n, n, |i, j| {
        let a = params.p_bar * (1.0 / nf - if i == j { 1.0 } else { 0.0 });
        let k = if i == j { gains.k_d } else { gains.k_o / nf };
        a - k / params.nu
    })
}

/// `(A_hat, ones(N x Z), I, 0)`: every input acts on every agent.
pub fn consensus_system(params: &ModelParams, gains: &RiccatiGains) -> StateSpaceSystem {
    let n = params.n_agents;
    StateSpaceSystem {
        a: consensus_closed_loop(params, gains),
        b: DMatrix::from_element(n, params.z, 1.0),
        c: DMatrix::identity(n, n),
        d: DMatrix::zeros(n, params.z),
    }
}

/// `(A_hat, Q, Q, 0)` with `Q = I - 1 1^T / N`: disturbances and outputs
/// restricted to the mean-free subspace. Its norm is `1 / c_N`.
pub fn mean_free_system(params: &ModelParams, gains: &RiccatiGains) -> StateSpaceSystem {
    let n = params.n_agents;
    let q = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
    StateSpaceSystem { a: consensus_closed_loop(params, gains), b: q.clone(), c: q, d: DMatrix::zeros(n, n) }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpaceSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::InvalidParams(format!(
                "inconsistent shapes A {:?} B {:?} C {:?} D {:?}",
                a.shape(),
                b.shape(),
                c.shape(),
                d.shape()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// `D + C (i omega I - A)^{-1} B`.
    pub fn frequency_response(&self, omega: f64) -> Result<DMatrix<Complex<f64>>> {
        let n = self.states();
        let to_c = |m: &DMatrix<f64>| m.map(|x| Complex::new(x, 0.0));
        let s = DMatrix::from_fn(n, n, |i, j| {
            Complex::new(-self.a[(i, j)], if i == j { omega } else { 0.0 })
        });
        let x = s.lu().solve(&to_c(&self.b)).ok_or(Error::UnstableSystem(0.0))?;
        Ok(to_c(&self.d) + to_c(&self.c) * x)
    }

    pub fn gain_at(&self, omega: f64) -> Result<f64> {
        Ok(linalg::max_singular_value(&self.frequency_response(omega)?))
    }
}

/// `n` points spaced evenly in `log10` between `lo` and `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

/// Default grid used by the sweep checks: `[1e-3, 1e3]`, 2000 points.
pub fn default_omega_grid() -> Vec<f64> {
    log_grid(1e-3, 1e3, 2000)
}

/// Local maxima refined by golden-section search.
const REFINED_PEAKS: usize = 3;
const GOLDEN_ITERS: usize = 60;

/// Largest singular value of the frequency response over `omega_grid`,
/// refined around the best grid peaks. A lower bound on the H-infinity norm.
pub fn hinf_norm_sweep(sys: &StateSpaceSystem, omega_grid: &[f64]) -> Result<f64> {
    hinf_norm_sweep_with(sys, omega_grid, Exec::default())
}

pub fn hinf_norm_sweep_with(sys: &StateSpaceSystem, omega_grid: &[f64], exec: Exec) -> Result<f64> {
    if omega_grid.is_empty() {
        return Err(Error::EmptyInput);
    }
    let abscissa = linalg::spectral_abscissa(&sys.a);
    if sys.states() > 0 && !(abscissa < 0.0) {
        return Err(Error::UnstableSystem(abscissa));
    }
    let vals: Vec<f64> = exec
        .map(omega_grid.len(), |i| sys.gain_at(omega_grid[i]))
        .into_iter()
        .collect::<Result<_>>()?;
    let mut best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut peaks: Vec<usize> = (0..vals.len())
        .filter(|&i| (i == 0 || vals[i] >= vals[i - 1]) && (i + 1 == vals.len() || vals[i] >= vals[i + 1]))
        .collect();
    peaks.sort_by(|&i, &j| vals[j].total_cmp(&vals[i]));
    peaks.truncate(REFINED_PEAKS);
    for i in peaks {
        let lo = omega_grid[i.saturating_sub(1)];
        let hi = omega_grid[(i + 1).min(omega_grid.len() - 1)];
        if hi > lo {
            best = best.max(golden_max(|w| sys.gain_at(w), lo, hi)?);
        }
    }
    Ok(best)
}

fn golden_max(f: impl Fn(f64) -> Result<f64>, lo: f64, hi: f64) -> Result<f64> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    let mut best = fc.max(fd);
    for _ in 0..GOLDEN_ITERS {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
        best = best.max(fc).max(fd);
    }
    Ok(best)
}

fn middle_block(sys: &StateSpaceSystem, gamma: f64) -> DMatrix<f64> {
    let m = sys.inputs();
    DMatrix::identity(m, m) * gamma - sys.d.transpose() * &sys.d / gamma
}

/// Checks the bounded-real inequality with the output block already
/// eliminated:
/// `[[A^T X + X A + C^T C/gamma, X B + C^T D/gamma], [.., -gamma I + D^T D/gamma]] < 0`.
/// Fails for a candidate that is not symmetric positive definite.
pub fn lmi_feasible(sys: &StateSpaceSystem, gamma: f64, x: &DMatrix<f64>) -> bool {
    if !linalg::is_spd(x) || !(gamma > 0.0) {
        return false;
    }
    let (n, m) = (sys.states(), sys.inputs());
    let top_left = sys.a.transpose() * x + x * &sys.a + sys.c.transpose() * &sys.c / gamma;
    let top_right = x * &sys.b + sys.c.transpose() * &sys.d / gamma;
    let bottom_right = -middle_block(sys, gamma);
    let mut big = DMatrix::zeros(n + m, n + m);
    big.view_mut((0, 0), (n, n)).copy_from(&top_left);
    big.view_mut((0, n), (n, m)).copy_from(&top_right);
    big.view_mut((n, 0), (m, n)).copy_from(&top_right.transpose());
    big.view_mut((n, n), (m, m)).copy_from(&bottom_right);
    linalg::max_sym_eigenvalue(&((&big + big.transpose()) * 0.5)) < 0.0
}

/// Schur complement of the inequality in [`lmi_feasible`]:
/// `A^T X + X A + C^T C/gamma + L^T (gamma I - D^T D/gamma)^{-1} L`,
/// `L = B^T X + D^T C / gamma`.
fn bounded_real_map(sys: &StateSpaceSystem, gamma: f64, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let r_inv = middle_block(sys, gamma).try_inverse().ok_or(Error::SingularMiddleBlock)?;
    let l = sys.b.transpose() * x + sys.d.transpose() * &sys.c / gamma;
    Ok(sys.a.transpose() * x + x * &sys.a + sys.c.transpose() * &sys.c / gamma + l.transpose() * r_inv * l)
}

/// Frobenius norm of the bounded-real Riccati residual at `x`.
pub fn are_residual_generic(sys: &StateSpaceSystem, gamma: f64, x: &DMatrix<f64>) -> Result<f64> {
    let m = middle_block(sys, gamma);
    if m.nrows() > 0 && m.determinant().abs() <= f64::EPSILON * m.norm().max(1.0).powi(m.nrows() as i32) {
        return Err(Error::SingularMiddleBlock);
    }
    Ok(bounded_real_map(sys, gamma, x)?.norm())
}

pub const ARE_MAX_ITER: usize = 100;
pub const ARE_TOL: f64 = 1e-12;

/// Stabilizing solution of `F(X) + delta I = 0` (with `F` the map of
/// [`are_residual_generic`]) by Newton's method from `X = 0`. The iterates
/// increase monotonically when `gamma` exceeds the H-infinity norm; otherwise
/// the linearization loses stability and the solve fails. Any `delta > 0`
/// makes the returned `X` satisfy [`lmi_feasible`] strictly.
pub fn solve_bounded_real_are(sys: &StateSpaceSystem, gamma: f64, delta: f64) -> Result<DMatrix<f64>> {
    let n = sys.states();
    let mid = middle_block(sys, gamma);
    let r_inv = mid.clone().cholesky().ok_or(Error::InfeasibleGamma { gamma, gamma_min: f64::NAN })?.inverse();
    if !linalg::is_hurwitz(&sys.a) {
        return Err(Error::UnstableSystem(linalg::spectral_abscissa(&sys.a)));
    }
    let shift = DMatrix::identity(n, n) * delta;
    let scale = 1.0 + (sys.c.transpose() * &sys.c).norm() / gamma;
    let mut x = DMatrix::zeros(n, n);
    let mut res = f64::INFINITY;
    for it in 0..ARE_MAX_ITER {
        let f = bounded_real_map(sys, gamma, &x)? + &shift;
        res = f.norm();
        if !res.is_finite() {
            return Err(Error::NonConvergence { iterations: it, residual: res });
        }
        if res <= ARE_TOL * scale {
            return Ok(x);
        }
        let l = sys.b.transpose() * &x + sys.d.transpose() * &sys.c / gamma;
        let a_x = &sys.a + &sys.b * &r_inv * l;
        if !linalg::is_hurwitz(&a_x) {
            return Err(Error::NonConvergence { iterations: it, residual: res });
        }
        let step = linalg::solve_lyapunov(&a_x, &f).ok_or(Error::NonConvergence { iterations: it, residual: res })?;
        x += step;
    }
    Err(Error::NonConvergence { iterations: ARE_MAX_ITER, residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::riccati::{limit_gains, solve_finite_n_gains};

    fn params(n: usize, p_bar: f64, nu: f64) -> ModelParams {
        ModelParams::new(n, 1, p_bar, nu, 0.0, 2).unwrap()
    }

    fn scalar(a: f64, b: f64, c: f64, d: f64) -> StateSpaceSystem {
        let m = |x| DMatrix::from_element(1, 1, x);
        StateSpaceSystem::new(m(a), m(b), m(c), m(d)).unwrap()
    }

    #[test]
    fn c_n_examples() {
        let p = params(10, 1.0, 0.5);
        assert_eq!(compute_c_n(&p, &RiccatiGains { k_d: 0.5, k_o: 0.0, s: 0.5 }), 2.0);
        for (p_bar, nu) in [(1.0, 0.01), (0.3, 2.0), (5.0, 0.1)] {
            let (k_d, _) = limit_gains(p_bar, nu, 0.0);
            let c = p_bar + k_d / nu;
            assert!((c - (p_bar * p_bar + 1.0 / nu).sqrt()).abs() < 1e-12 * c);
        }
    }

    #[test]
    fn gamma_bound_examples() {
        assert!((gamma_lower_bound(1.0, 1.0, 0.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((gamma_lower_bound(0.0, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((gamma_lower_bound(0.0, 4.0, 0.0).unwrap() - 2.0).abs() < 1e-15);
        let mut prev = 0.0;
        for nu in [0.01, 0.1, 1.0, 10.0] {
            let g = gamma_lower_bound(1.0, nu, 0.3).unwrap();
            assert!(g > prev);
            prev = g;
        }
        assert!(gamma_lower_bound(2.0, 1.0, 0.0).unwrap() < gamma_lower_bound(1.0, 1.0, 0.0).unwrap());
        assert!(matches!(gamma_lower_bound(1.0, 0.0, 0.0), Err(Error::DegenerateBound(_))));
    }

    #[test]
    fn gamma_bound_is_inverse_limit_rate_for_any_r() {
        for r in [0.0, 0.1, 1.0] {
            for (p_bar, nu) in [(1.0, 0.1), (0.0, 2.0), (5.0, 10.0)] {
                let (k_d, k_o) = limit_gains(p_bar, nu, r);
                let c = p_bar + k_d / nu;
                let _ = k_o;
                let g = gamma_lower_bound(p_bar, nu, r).unwrap();
                assert!((g * c - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn certificate_examples() {
        let p = params(10, 1.0, 1.0);
        let g = solve_finite_n_gains(&p).unwrap();
        let c = compute_c_n(&p, &g);
        let cert = certify(&p, &g, 1.0 / c).unwrap();
        assert!((cert.lambda_minus - 1.0).abs() < 1e-6 && (cert.lambda_plus - 1.0).abs() < 1e-6);
        let cert = certify(&p, &g, 2.0 / c).unwrap();
        assert!((cert.lambda_minus - (2.0 - 3f64.sqrt())).abs() < 1e-12);
        assert!((cert.lambda_plus - (2.0 + 3f64.sqrt())).abs() < 1e-12);
        assert!(cert.positive_definite);
        match certify(&p, &g, 0.9 / c) {
            Err(Error::InfeasibleGamma { gamma_min, .. }) => assert!((gamma_min - 1.0 / c).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert!(certify(&p, &g, -1.0).is_err());
    }

    #[test]
    fn residual_structure_matches_dense() {
        let p = params(5, 1.0, 0.1);
        let g = solve_finite_n_gains(&p).unwrap();
        for (xd, xo) in [(0.3, 0.0), (1.2, 0.4), (0.0, -0.7)] {
            let a = are_residual(xd, xo, &p, &g, 0.5);
            let b = are_residual_dense(xd, xo, &p, &g, 0.5);
            assert!((a - b).abs() < 1e-12 * b.max(1.0), "{a} {b}");
        }
        // K = 0, X = 0 leaves I / gamma
        let zero = RiccatiGains { k_d: 0.0, k_o: 0.0, s: 0.0 };
        assert!((are_residual(0.0, 0.0, &p, &zero, 0.25) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn certificate_residual_shrinks_like_one_over_n() {
        let res: Vec<f64> = [10, 100, 1000]
            .iter()
            .map(|&n| {
                let p = params(n, 1.0, 1.0);
                let g = solve_finite_n_gains(&p).unwrap();
                certify(&p, &g, 2.0 / compute_c_n(&p, &g)).unwrap().residual_norm
            })
            .collect();
        assert!(res[2] <= res[0] / 50.0, "{res:?}");
    }

    #[test]
    fn limit_certificate_residual_vanishes() {
        let (p_bar, nu) = (1.0, 1.0);
        let (k_d, k_o) = limit_gains(p_bar, nu, 0.0);
        let gains = RiccatiGains { k_d, k_o, s: nu };
        let c = p_bar + k_d / nu;
        let mut prev = f64::INFINITY;
        for n in [10, 100, 1000, 10000] {
            let p = params(n, p_bar, nu);
            let gamma = 2.0 / c;
            let lam = gamma * c - ((gamma * c).powi(2) - 1.0).sqrt();
            let r = are_residual(lam, 0.0, &p, &gains, gamma);
            assert!(r < prev);
            prev = r;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn sweep_examples() {
        let grid = default_omega_grid();
        let n = hinf_norm_sweep(&scalar(-1.0, 1.0, 1.0, 0.0), &grid).unwrap();
        assert!((n - 1.0).abs() < 1e-6);
        let d_only = scalar(-1.0, 0.0, 1.0, 0.7);
        assert!((hinf_norm_sweep(&d_only, &grid).unwrap() - 0.7).abs() < 1e-15);
        assert!(matches!(hinf_norm_sweep(&scalar(0.5, 1.0, 1.0, 0.0), &grid), Err(Error::UnstableSystem(_))));
        assert!(matches!(hinf_norm_sweep(&scalar(-1.0, 1.0, 1.0, 0.0), &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn sweep_finds_resonance() {
        // lightly damped oscillator: peak 1/(2 zeta sqrt(1 - zeta^2)) near omega = 1
        let zeta: f64 = 0.05;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0 * zeta]);
        let sys = StateSpaceSystem::new(a, DMatrix::from_column_slice(2, 1, &[0.0, 1.0]), DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DMatrix::zeros(1, 1)).unwrap();
        let exact = 1.0 / (2.0 * zeta * (1.0 - zeta * zeta).sqrt());
        let got = hinf_norm_sweep(&sys, &log_grid(1e-2, 1e2, 200)).unwrap();
        assert!((got - exact).abs() < 1e-9 * exact, "{got} {exact}");
    }

    #[test]
    fn parallel_sweep_is_identical() {
        let p = params(6, 1.0, 0.1);
        let g = solve_finite_n_gains(&p).unwrap();
        let sys = consensus_system(&p, &g);
        let grid = log_grid(1e-3, 1e3, 300);
        assert_eq!(
            hinf_norm_sweep_with(&sys, &grid, Exec::Sequential).unwrap(),
            hinf_norm_sweep_with(&sys, &grid, Exec::Parallel).unwrap()
        );
    }

    #[test]
    fn consensus_closed_loop_spectrum() {
        let p = params(7, 1.0, 0.1);
        let g = solve_finite_n_gains(&p).unwrap();
        let a = consensus_closed_loop(&p, &g);
        let mut ev: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let (c, r) = (compute_c_n(&p, &g), consensus_rate(&p, &g));
        let mut expected = vec![-c; 6];
        expected.push(-r);
        expected.sort_by(f64::total_cmp);
        for (a, b) in ev.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn consensus_sweeps() {
        let grid = default_omega_grid();
        let p = params(5, 1.0, 1.0);
        let g = solve_finite_n_gains(&p).unwrap();
        let (c, r) = (compute_c_n(&p, &g), consensus_rate(&p, &g));
        let free = hinf_norm_sweep(&mean_free_system(&p, &g), &grid).unwrap();
        assert!((free - 1.0 / c).abs() < 1e-6);
        // every input drives the consensus direction: sqrt(N Z) / g at omega = 0
        let full = hinf_norm_sweep(&consensus_system(&p, &g), &grid).unwrap();
        assert!((full - (10f64).sqrt() / r).abs() < 1e-5, "{full}");
    }

    #[test]
    fn lmi_examples() {
        let zero = StateSpaceSystem::new(-DMatrix::identity(2, 2), DMatrix::zeros(2, 1), DMatrix::zeros(1, 2), DMatrix::zeros(1, 1)).unwrap();
        assert!(lmi_feasible(&zero, 0.3, &DMatrix::identity(2, 2)));

        let p = params(5, 1.0, 1.0);
        let g = solve_finite_n_gains(&p).unwrap();
        let c = compute_c_n(&p, &g);
        let cert = certify(&p, &g, 2.0 / c).unwrap();
        // noise entering every agent separately, full-state output
        let sys = StateSpaceSystem::new(consensus_closed_loop(&p, &g), DMatrix::identity(5, 5), DMatrix::identity(5, 5), DMatrix::zeros(5, 5)).unwrap();
        let gamma = 2.0 / c;
        // lambda_- I zeroes the disagreement block exactly and leaves
        // 2 lambda (c_N - g) > 0 on the consensus direction: not strict
        let x = DMatrix::identity(5, 5) * cert.x_d;
        assert!(!lmi_feasible(&sys, gamma, &x));
        // strictly between the two branches both blocks are negative
        let mid = DMatrix::identity(5, 5) * (gamma * c);
        assert!(lmi_feasible(&sys, gamma, &mid));
        assert!(!lmi_feasible(&sys, gamma, &(-mid)));
    }

    #[test]
    fn scalar_are_by_hand() {
        let sys = scalar(-1.0, 1.0, 1.0, 0.0);
        let x = DMatrix::from_element(1, 1, 2.0 - 3f64.sqrt());
        assert!(are_residual_generic(&sys, 2.0, &x).unwrap() < 1e-12);
        let solved = solve_bounded_real_are(&sys, 2.0, 0.0).unwrap();
        assert!((solved[(0, 0)] - (2.0 - 3f64.sqrt())).abs() < 1e-12);
        let singular = scalar(-1.0, 1.0, 1.0, 1.0);
        assert!(matches!(are_residual_generic(&singular, 1.0, &x), Err(Error::SingularMiddleBlock)));
    }

    #[test]
    fn are_solution_passes_lmi_above_norm_only() {
        let sys = scalar(-1.0, 1.0, 1.0, 0.0);
        let x = solve_bounded_real_are(&sys, 1.05, 1e-7).unwrap();
        assert!(lmi_feasible(&sys, 1.05, &x));
        assert!(solve_bounded_real_are(&sys, 0.95, 1e-7).is_err());
    }
}
