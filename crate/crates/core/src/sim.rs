//! Fixed-step RK4 integration of the agent dynamics, both through the
//! Galerkin coefficient system and by direct sampling of the inputs.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gpc::{project_initial, reconstruct_moments, GalerkinSystem, GpcBasis, GpcCoefficients};
use crate::model::{self, ControlLaw, ModelParams, StateVector, UncertaintySpec};
use crate::quadrature::BasisMoments;
use crate::riccati::GainSchedule;
use crate::rng;

/// A state an explicit integrator can step.
pub trait OdeVector: Clone {
    /// `self + h * other`
    fn add_scaled(&self, other: &Self, h: f64) -> Self;
}

impl OdeVector for f64 {
    fn add_scaled(&self, other: &Self, h: f64) -> Self {
        self + h * other
    }
}

impl<const N: usize> OdeVector for [f64; N] {
    fn add_scaled(&self, other: &Self, h: f64) -> Self {
        std::array::from_fn(|i| self[i] + h * other[i])
    }
}

impl OdeVector for Vec<f64> {
    fn add_scaled(&self, other: &Self, h: f64) -> Self {
        self.iter().zip(other).map(|(a, b)| a + h * b).collect()
    }
}

impl OdeVector for DMatrix<f64> {
    fn add_scaled(&self, other: &Self, h: f64) -> Self {
        self + other * h
    }
}

impl OdeVector for StateVector {
    fn add_scaled(&self, other: &Self, h: f64) -> Self {
        StateVector(self.0.add_scaled(&other.0, h))
    }
}

impl OdeVector for GpcCoefficients {
    fn add_scaled(&self, other: &Self, h: f64) -> Self {
        GpcCoefficients { data: self.data.add_scaled(&other.data, h), ..*self }
    }
}

/// One classical RK4 step of an autonomous system.
pub fn rk4_step<S: OdeVector>(x: &S, rhs: impl Fn(&S) -> S, h: f64) -> S {
    rk4_step_t(0.0, x, |_, s| rhs(s), h)
}

/// One classical RK4 step of `x' = f(t, x)` from time `t`.
pub fn rk4_step_t<S: OdeVector>(t: f64, x: &S, rhs: impl Fn(f64, &S) -> S, h: f64) -> S {
    let k1 = rhs(t, x);
    let k2 = rhs(t + 0.5 * h, &x.add_scaled(&k1, 0.5 * h));
    let k3 = rhs(t + 0.5 * h, &x.add_scaled(&k2, 0.5 * h));
    let k4 = rhs(t + h, &x.add_scaled(&k3, h));
    x.add_scaled(&k1, h / 6.0)
        .add_scaled(&k2, h / 3.0)
        .add_scaled(&k3, h / 3.0)
        .add_scaled(&k4, h / 6.0)
}

/// Scratch buffers for [`rk4_in_place`].
#[derive(Debug, Clone)]
pub struct Rk4Workspace {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    pub fn new(len: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; len]), tmp: vec![0.0; len] }
    }
}

/// Allocation-free RK4 step; `rhs(t, x, out)` writes the derivative into `out`.
pub fn rk4_in_place(t: f64, x: &mut [f64], h: f64, ws: &mut Rk4Workspace, mut rhs: impl FnMut(f64, &[f64], &mut [f64])) {
    let Rk4Workspace { k: [k1, k2, k3, k4], tmp } = ws;
    rhs(t, x, k1);
    tmp.iter_mut().zip(x.iter()).zip(k1.iter()).for_each(|((d, a), b)| *d = a + 0.5 * h * b);
    rhs(t + 0.5 * h, tmp, k2);
    tmp.iter_mut().zip(x.iter()).zip(k2.iter()).for_each(|((d, a), b)| *d = a + 0.5 * h * b);
    rhs(t + 0.5 * h, tmp, k3);
    tmp.iter_mut().zip(x.iter()).zip(k3.iter()).for_each(|((d, a), b)| *d = a + h * b);
    rhs(t + h, tmp, k4);
    for i in 0..x.len() {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Uniform step grid on `[0, T]` with equispaced output snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub t_final: f64,
    pub dt: f64,
    /// Number of output intervals; `snapshots + 1` times are reported.
    pub snapshots: usize,
}

impl TimeGrid {
    /// `(steps, h, stride)`. `h` is `dt` adjusted to divide `T`.
    pub fn resolve(&self) -> Result<(usize, f64, usize)> {
        if !(self.t_final > 0.0 && self.dt > 0.0 && self.t_final.is_finite()) || self.snapshots == 0 {
            return Err(Error::Config(format!("bad time grid {self:?}")));
        }
        let steps = (self.t_final / self.dt).round().max(1.0) as usize;
        if !steps.is_multiple_of(self.snapshots) {
            return Err(Error::Config(format!(
                "{steps} steps cannot be split into {} snapshot intervals",
                self.snapshots
            )));
        }
        Ok((steps, self.t_final / steps as f64, steps / self.snapshots))
    }

    pub fn output_times(&self) -> Result<Vec<f64>> {
        let (_, h, stride) = self.resolve()?;
        Ok((0..=self.snapshots).map(|i| (i * stride) as f64 * h).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Every coordinate of every agent i.i.d. `U(low, high)`.
    UniformBox { low: f64, high: f64 },
    /// Uniform on a disc in the plane.
    Disc { center: [f64; 2], radius: f64 },
    Given { rows: Vec<Vec<f64>> },
}

impl InitialCondition {
    pub fn sample(&self, n_agents: usize, dim: usize, seed: u64) -> Result<StateVector> {
        let mut r = rng::stream(seed, rng::INITIAL_STATE_STREAM);
        match self {
            InitialCondition::UniformBox { low, high } => {
                if !(low < high) {
                    return Err(Error::Config(format!("empty box [{low}, {high}]")));
                }
                let mut v = StateVector::zeros(n_agents, dim);
                for i in 0..n_agents {
                    for k in 0..dim {
                        v.0[(i, k)] = r.gen_range(*low..*high);
                    }
                }
                Ok(v)
            }
            InitialCondition::Disc { center, radius } => {
                if dim != 2 || !(*radius > 0.0) {
                    return Err(Error::Config(format!("disc needs d = 2 and radius > 0, got d = {dim}, radius = {radius}")));
                }
                let mut v = StateVector::zeros(n_agents, 2);
                for i in 0..n_agents {
                    let rad = radius * r.gen::<f64>().sqrt();
                    let phi = std::f64::consts::TAU * r.gen::<f64>();
                    v.0[(i, 0)] = center[0] + rad * phi.cos();
                    v.0[(i, 1)] = center[1] + rad * phi.sin();
                }
                Ok(v)
            }
            InitialCondition::Given { rows } => {
                if rows.len() != n_agents || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Config(format!("given state must be {n_agents} x {dim}")));
                }
                Ok(StateVector::from_rows(rows))
            }
        }
    }
}

/// Moments of the agent states over the random inputs at the output times.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub mean: Vec<StateVector>,
    pub variance: Vec<StateVector>,
    /// Per time and coordinate.
    pub band_low: Vec<Vec<f64>>,
    pub band_high: Vec<Vec<f64>>,
}

impl MomentSeries {
    pub fn new(times: Vec<f64>, mean: Vec<StateVector>, variance: Vec<StateVector>) -> Self {
        confidence_band(MomentSeries { times, mean, variance, band_low: Vec::new(), band_high: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Agent-averaged mean per coordinate at snapshot `s`.
    pub fn agent_mean(&self, s: usize) -> Vec<f64> {
        (0..self.mean[s].dim()).map(|k| self.mean[s].agent_mean(k)).collect()
    }

    pub fn band_width(&self, s: usize, k: usize) -> f64 {
        self.band_high[s][k] - self.band_low[s][k]
    }
}

/// Agent-averaged mean `-/+` the largest agent standard deviation.
pub fn confidence_band(mut series: MomentSeries) -> MomentSeries {
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for (m, v) in series.mean.iter().zip(&series.variance) {
        let (mut l, mut h) = (Vec::new(), Vec::new());
        for k in 0..m.dim() {
            let c = m.agent_mean(k);
            let s = v.0.column(k).iter().fold(0.0f64, |a, &x| a.max(x.max(0.0).sqrt()));
            l.push(c - s);
            h.push(c + s);
        }
        lo.push(l);
        hi.push(h);
    }
    series.band_low = lo;
    series.band_high = hi;
    series
}

/// Everything that defines one microscopic experiment.
#[derive(Debug, Clone)]
pub struct MicroSetup {
    pub params: ModelParams,
    pub unc: UncertaintySpec,
    pub gains: GainSchedule,
    pub control: ControlLaw,
    pub v0: StateVector,
    pub grid: TimeGrid,
}

impl MicroSetup {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.unc.check_against(&self.params)?;
        if self.v0.n_agents() != self.params.n_agents || self.v0.dim() != self.params.dim {
            return Err(Error::Config(format!(
                "initial state is {} x {}, model is {} x {}",
                self.v0.n_agents(),
                self.v0.dim(),
                self.params.n_agents,
                self.params.dim
            )));
        }
        self.grid.resolve().map(|_| ())
    }
}

fn blow_up(step: usize) -> Error {
    Error::NonConvergence { iterations: step, residual: f64::INFINITY }
}

/// Integrates the Galerkin system and calls `on_snapshot(t, coeffs)` at every
/// output time, starting with `t = 0`.
pub fn integrate_sg(
    setup: &MicroSetup,
    basis: &GpcBasis,
    moments: &BasisMoments,
    exec: Exec,
    mut on_snapshot: impl FnMut(f64, &GpcCoefficients) -> Result<()>,
) -> Result<()> {
    setup.validate()?;
    basis.check_against(&setup.unc)?;
    if moments.z() != basis.z() || moments.order() != basis.order {
        return Err(Error::Config("basis moments do not match the basis".into()));
    }
    let (steps, h, stride) = setup.grid.resolve()?;
    let system = GalerkinSystem::new(&setup.params, moments, setup.control, exec)?;
    let mut c = project_initial(&setup.v0, basis);
    on_snapshot(0.0, &c)?;
    for step in 1..=steps {
        let t = (step - 1) as f64 * h;
        c = rk4_step_t(t, &c, |s, x| system.rhs(x, &setup.gains.at(s)), h);
        if step % stride == 0 {
            if !c.is_finite() {
                return Err(blow_up(step));
            }
            on_snapshot(step as f64 * h, &c)?;
        }
    }
    Ok(())
}

/// Stochastic Galerkin moments at every output time.
pub fn run_micro_sg(setup: &MicroSetup, basis: &GpcBasis, moments: &BasisMoments, exec: Exec) -> Result<MomentSeries> {
    let (mut times, mut mean, mut var) = (Vec::new(), Vec::new(), Vec::new());
    integrate_sg(setup, basis, moments, exec, |t, c| {
        let (m, v) = reconstruct_moments(c, moments);
        times.push(t);
        mean.push(m);
        var.push(v);
        Ok(())
    })?;
    Ok(MomentSeries::new(times, mean, var))
}

/// Trajectory for one fixed input realization, stepped on whole states
/// through the model's control and drift functions.
pub fn run_micro_path(setup: &MicroSetup, theta: &[f64]) -> Result<Vec<StateVector>> {
    setup.validate()?;
    if theta.len() != setup.params.z {
        return Err(Error::Config(format!("{} inputs given, model has {}", theta.len(), setup.params.z)));
    }
    let (steps, h, stride) = setup.grid.resolve()?;
    let p = &setup.params;
    let th = model::theta_matrix(theta, p.dim);
    let mu = model::theta_matrix(&setup.unc.components.iter().map(|c| c.mean()).collect::<Vec<_>>(), p.dim);
    // [mean state, realization] for the averaged law, the realization alone otherwise
    let rhs = |t: f64, x: &Vec<StateVector>| -> Vec<StateVector> {
        let g = setup.gains.at(t);
        match setup.control {
            ControlLaw::Feedback => {
                let u = model::feedback_control(&x[0], &g, p);
                vec![model::drift(&x[0], &th, &u, p)]
            }
            ControlLaw::FeedbackCorrected => {
                let u = model::feedback_control_corrected(&x[0], &g, p, &setup.unc);
                vec![model::drift(&x[0], &th, &u, p)]
            }
            ControlLaw::Averaged => {
                let u = model::averaged_control(&x[0], &g, p, &setup.unc);
                vec![model::drift(&x[0], &mu, &u, p), model::drift(&x[1], &th, &u, p)]
            }
        }
    };
    let mut x = match setup.control {
        ControlLaw::Averaged => vec![setup.v0.clone(), setup.v0.clone()],
        _ => vec![setup.v0.clone()],
    };
    let mut out = vec![x.last().unwrap().clone()];
    for step in 1..=steps {
        x = rk4_step_t((step - 1) as f64 * h, &x, rhs, h);
        if step % stride == 0 {
            let v = x.last().unwrap();
            if !v.is_finite() {
                return Err(blow_up(step));
            }
            out.push(v.clone());
        }
    }
    Ok(out)
}

impl OdeVector for Vec<StateVector> {
    fn add_scaled(&self, other: &Self, h: f64) -> Self {
        self.iter().zip(other).map(|(a, b)| a.add_scaled(b, h)).collect()
    }
}

/// Central moments up to order four of a set of samples, per entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMoments {
    pub n: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub m3: Vec<f64>,
    pub m4: Vec<f64>,
}

impl SampleMoments {
    /// Two-pass moments of `rows` equally long sample vectors.
    pub fn from_samples(samples: &[f64], width: usize) -> Self {
        let rows = samples.len() / width;
        let n = rows as f64;
        let mut mean = vec![0.0; width];
        for r in samples.chunks(width) {
            mean.iter_mut().zip(r).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let (mut m2, mut m3, mut m4) = (vec![0.0; width], vec![0.0; width], vec![0.0; width]);
        for r in samples.chunks(width) {
            for j in 0..width {
                let d = r[j] - mean[j];
                let d2 = d * d;
                m2[j] += d2;
                m3[j] += d2 * d;
                m4[j] += d2 * d2;
            }
        }
        Self { n, mean, m2, m3, m4 }
    }

    /// Pairwise combination of central sums (Chan et al. / Pebay).
    pub fn merge(&self, o: &Self) -> Self {
        if self.n == 0.0 {
            return o.clone();
        }
        let (na, nb) = (self.n, o.n);
        let n = na + nb;
        let w = self.mean.len();
        let mut out = Self { n, mean: vec![0.0; w], m2: vec![0.0; w], m3: vec![0.0; w], m4: vec![0.0; w] };
        for j in 0..w {
            let d = o.mean[j] - self.mean[j];
            let (d2, d3, d4) = (d * d, d * d * d, d * d * d * d);
            out.mean[j] = self.mean[j] + d * nb / n;
            out.m2[j] = self.m2[j] + o.m2[j] + d2 * na * nb / n;
            out.m3[j] = self.m3[j] + o.m3[j] + d3 * na * nb * (na - nb) / (n * n)
                + 3.0 * d * (na * o.m2[j] - nb * self.m2[j]) / n;
            out.m4[j] = self.m4[j]
                + o.m4[j]
                + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
                + 6.0 * d2 * (na * na * o.m2[j] + nb * nb * self.m2[j]) / (n * n)
                + 4.0 * d * (na * o.m3[j] - nb * self.m3[j]) / n;
        }
        out
    }

    fn empty(width: usize) -> Self {
        Self { n: 0.0, mean: vec![0.0; width], m2: vec![0.0; width], m3: vec![0.0; width], m4: vec![0.0; width] }
    }
}

/// Monte-Carlo moments plus what is needed for their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledSeries {
    /// Variance is the unbiased estimate (zero for a single sample).
    pub series: MomentSeries,
    pub n_samples: usize,
    /// Fourth central moment per snapshot.
    pub central4: Vec<StateVector>,
}

impl SampledSeries {
    pub fn mean_std_error(&self, s: usize) -> StateVector {
        let n = self.n_samples as f64;
        StateVector(self.series.variance[s].0.map(|v| (v / n).sqrt()))
    }

    /// Large-sample standard error of the variance estimate.
    pub fn variance_std_error(&self, s: usize) -> StateVector {
        let n = self.n_samples as f64;
        let v = &self.series.variance[s].0;
        StateVector(self.central4[s].0.zip_map(v, |m4, v| ((m4 - v * v).max(0.0) / n).sqrt()))
    }
}

/// Samples per reduction block; fixed so that results do not depend on the
/// thread count.
pub const SAMPLE_BLOCK: usize = 64;

/// Draws the inputs `n_samples` times and integrates each realization.
/// Sample `j` uses the random stream `(seed, j)`.
pub fn run_micro_sampled(setup: &MicroSetup, n_samples: usize, seed: u64, exec: Exec) -> Result<SampledSeries> {
    setup.validate()?;
    if n_samples == 0 {
        return Err(Error::InvalidParams("n_samples must be at least 1".into()));
    }
    let (steps, h, stride) = setup.grid.resolve()?;
    let p = &setup.params;
    let (n, d) = (p.n_agents, p.dim);
    let nd = n * d;
    let width = (setup.grid.snapshots + 1) * nd;
    let mu_sum = setup.unc.mean_sum();
    let averaged = setup.control == ControlLaw::Averaged;
    let state_len = if averaged { 2 * nd } else { nd };
    let v0: Vec<f64> = setup.v0.0.as_slice().to_vec(); // column-major: [k][i]

    let run_block = |b: usize| -> Result<SampleMoments> {
        let lo = b * SAMPLE_BLOCK;
        let hi = (lo + SAMPLE_BLOCK).min(n_samples);
        let mut record = vec![0.0; (hi - lo) * width];
        let mut ws = Rk4Workspace::new(state_len);
        let mut x = vec![0.0; state_len];
        for (row, j) in (lo..hi).enumerate() {
            let mut r = rng::stream(seed, j as u64);
            let theta_sum: f64 = setup.unc.sample(&mut r).iter().sum();
            x[..nd].copy_from_slice(&v0);
            if averaged {
                x[nd..].copy_from_slice(&v0);
            }
            let rec = &mut record[row * width..(row + 1) * width];
            rec[..nd].copy_from_slice(&x[state_len - nd..]);
            for step in 1..=steps {
                let t = (step - 1) as f64 * h;
                rk4_in_place(t, &mut x, h, &mut ws, |t, x, out| {
                    let g = setup.gains.at(t);
                    let corr = if setup.control == ControlLaw::FeedbackCorrected { mu_sum } else { 0.0 };
                    for k in 0..d {
                        if averaged {
                            let y = &x[k * n..(k + 1) * n];
                            let v = &x[nd + k * n..nd + (k + 1) * n];
                            let (ty, tv) = (y.iter().sum::<f64>(), v.iter().sum::<f64>());
                            let (my, mv) = (ty / n as f64, tv / n as f64);
                            for i in 0..n {
                                let u = -(g.k_d * y[i] + g.k_o / n as f64 * (ty - y[i]) + g.s * mu_sum) / p.nu;
                                out[k * n + i] = p.p_bar * (my - y[i]) + u + mu_sum;
                                out[nd + k * n + i] = p.p_bar * (mv - v[i]) + u + theta_sum;
                            }
                        } else {
                            let v = &x[k * n..(k + 1) * n];
                            let tv: f64 = v.iter().sum();
                            let mv = tv / n as f64;
                            for i in 0..n {
                                let u = -(g.k_d * v[i] + g.k_o / n as f64 * (tv - v[i])) / p.nu - corr;
                                out[k * n + i] = p.p_bar * (mv - v[i]) + u + theta_sum;
                            }
                        }
                    }
                });
                if step % stride == 0 {
                    let s = step / stride;
                    if !x.iter().all(|v| v.is_finite()) {
                        return Err(blow_up(step));
                    }
                    rec[s * nd..(s + 1) * nd].copy_from_slice(&x[state_len - nd..]);
                }
            }
        }
        Ok(SampleMoments::from_samples(&record, width))
    };

    let n_blocks = n_samples.div_ceil(SAMPLE_BLOCK);
    let blocks = exec.map(n_blocks, run_block);
    let mut total = SampleMoments::empty(width);
    for b in blocks {
        total = total.merge(&b?);
    }

    let times = setup.grid.output_times()?;
    let ns = n_samples as f64;
    let to_state = |v: &[f64]| StateVector(DMatrix::from_column_slice(n, d, v));
    let (mut mean, mut var, mut c4) = (Vec::new(), Vec::new(), Vec::new());
    for s in 0..times.len() {
        let r = s * nd..(s + 1) * nd;
        mean.push(to_state(&total.mean[r.clone()]));
        let v: Vec<f64> = total.m2[r.clone()].iter().map(|m| if n_samples > 1 { m / (ns - 1.0) } else { 0.0 }).collect();
        var.push(to_state(&v));
        let m4: Vec<f64> = total.m4[r].iter().map(|m| m / ns).collect();
        c4.push(to_state(&m4));
    }
    Ok(SampledSeries { series: MomentSeries::new(times, mean, var), n_samples, central4: c4 })
}
