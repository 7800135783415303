//! The uncertain consensus system
//!
//! ```text
//! dv_i/dt = (p/N) sum_j (v_j - v_i) + u_i + sum_k theta_k
//! ```
//!
//! with deterministic initial data and constant-in-time random inputs
//! `theta_k`. Each `theta_k` is a scalar random variable acting on every
//! coordinate of the state.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riccati::RiccatiGains;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n_agents: usize,
    pub dim: usize,
    /// Interaction strength.
    pub p_bar: f64,
    /// Control penalization.
    pub nu: f64,
    /// Discount rate.
    pub r: f64,
    /// Number of random inputs.
    pub z: usize,
}

impl ModelParams {
    pub fn new(n_agents: usize, dim: usize, p_bar: f64, nu: f64, r: f64, z: usize) -> Result<Self> {
        let p = Self { n_agents, dim, p_bar, nu, r, z };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents < 2 {
            return Err(Error::InvalidParams(format!("need at least 2 agents, got {}", self.n_agents)));
        }
        if self.dim == 0 || self.z == 0 {
            return Err(Error::InvalidParams("dim and z must be positive".into()));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidParams(format!("nu must be positive, got {}", self.nu)));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidParams(format!("r must be non-negative, got {}", self.r)));
        }
        if !(self.p_bar >= 0.0 && self.p_bar.is_finite()) {
            return Err(Error::InvalidParams(format!("p_bar must be non-negative, got {}", self.p_bar)));
        }
        Ok(())
    }

    /// `alpha(N) = (N - 1) / N`.
    pub fn alpha(&self) -> f64 {
        (self.n_agents as f64 - 1.0) / self.n_agents as f64
    }

    pub fn with_n_agents(mut self, n: usize) -> Self {
        self.n_agents = n;
        self
    }

    pub fn with_nu(mut self, nu: f64) -> Self {
        self.nu = nu;
        self
    }
}

/// Law of a single scalar random input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputLaw {
    /// `N(mu, sigma2)`. `sigma2 = 0` is accepted as a point mass.
    Gaussian { mu: f64, sigma2: f64 },
    /// `U(a, b)` with `a < b`.
    Uniform { a: f64, b: f64 },
}

impl InputLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InputLaw::Gaussian { mu, sigma2 } if mu.is_finite() && sigma2 >= 0.0 && sigma2.is_finite() => Ok(()),
            InputLaw::Uniform { a, b } if a.is_finite() && b.is_finite() && a < b => Ok(()),
            other => Err(Error::InvalidParams(format!("invalid input law {other:?}"))),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            InputLaw::Gaussian { mu, .. } => mu,
            InputLaw::Uniform { a, b } => 0.5 * (a + b),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            InputLaw::Gaussian { sigma2, .. } => sigma2,
            InputLaw::Uniform { a, b } => (b - a) * (b - a) / 12.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InputLaw::Gaussian { mu, sigma2 } => {
                if sigma2 == 0.0 {
                    mu
                } else {
                    Normal::new(mu, sigma2.sqrt()).expect("validated").sample(rng)
                }
            }
            InputLaw::Uniform { a, b } => rng.gen_range(a..b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpec {
    pub components: Vec<InputLaw>,
}

impl UncertaintySpec {
    pub fn new(components: Vec<InputLaw>) -> Result<Self> {
        for c in &components {
            c.validate()?;
        }
        Ok(Self { components })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn check_against(&self, params: &ModelParams) -> Result<()> {
        if self.len() != params.z {
            return Err(Error::Config(format!(
                "{} uncertainty components for z = {}",
                self.len(),
                params.z
            )));
        }
        Ok(())
    }

    /// `sum_k mu_k`.
    pub fn mean_sum(&self) -> f64 {
        self.components.iter().map(InputLaw::mean).sum()
    }

    /// One realization of `(theta_1, .., theta_Z)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.components.iter().map(|c| c.sample(rng)).collect()
    }
}

/// Entries of the all-to-all interaction matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionMatrix {
    pub a_d: f64,
    pub a_o: f64,
    pub n: usize,
}

impl InteractionMatrix {
    pub fn row_sum(&self) -> f64 {
        self.a_d + (self.n as f64 - 1.0) * self.a_o
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if i == j { self.a_d } else { self.a_o })
    }
}

pub fn build_interaction_matrix(params: &ModelParams) -> InteractionMatrix {
    let n = params.n_agents as f64;
    InteractionMatrix {
        a_d: params.p_bar * (1.0 - n) / n,
        a_o: params.p_bar / n,
        n: params.n_agents,
    }
}

/// Agent states, one row per agent and one column per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(pub DMatrix<f64>);

impl StateVector {
    pub fn zeros(n_agents: usize, dim: usize) -> Self {
        Self(DMatrix::zeros(n_agents, dim))
    }

    pub fn from_fn(n_agents: usize, dim: usize, f: impl FnMut(usize, usize) -> f64) -> Self {
        Self(DMatrix::from_fn(n_agents, dim, f))
    }

    /// Builds from per-agent rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        Self(DMatrix::from_fn(n, d, |i, k| rows[i][k]))
    }

    pub fn n_agents(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, agent: usize, k: usize) -> f64 {
        self.0[(agent, k)]
    }

    /// Average over agents of coordinate `k`.
    pub fn agent_mean(&self, k: usize) -> f64 {
        self.0.column(k).mean()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Which control is applied to the agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlLaw {
    Feedback,
    /// Feedback minus the known input means.
    FeedbackCorrected,
    /// Deterministic control acting on the expected state.
    Averaged,
}

/// Feedback control `u_i = -(1/nu) [ (k_d - k_o/N) v_i + (k_o/N) sum_j v_j ]`,
/// coordinate-wise.
pub fn feedback_control(v: &StateVector, gains: &RiccatiGains, params: &ModelParams) -> StateVector {
    let n = v.n_agents() as f64;
    let diag = reabsorbed_diagonal(gains.k_d, gains.k_o, v.n_agents());
    let off = gains.k_o / n;
    let mut u = StateVector::zeros(v.n_agents(), v.dim());
    for k in 0..v.dim() {
        let col = v.0.column(k);
        let total = col.sum();
        for i in 0..v.n_agents() {
            u.0[(i, k)] = -(diag * col[i] + off * total) / params.nu;
        }
    }
    u
}

/// [`feedback_control`] minus `sum_k mu_k` on every agent and coordinate.
pub fn feedback_control_corrected(
    v: &StateVector,
    gains: &RiccatiGains,
    params: &ModelParams,
    unc: &UncertaintySpec,
) -> StateVector {
    let mut u = feedback_control(v, gains, params);
    u.0.add_scalar_mut(-unc.mean_sum());
    u
}

/// Diagonal coefficient of the feedback once the self term of the all-agent
/// sum is folded in:
/// `k_d v_i + (k_o/N) sum_{j != i} v_j = (k_d - k_o/N) v_i + (k_o/N) sum_j v_j`.
pub fn reabsorbed_diagonal(k_d: f64, k_o: f64, n_agents: usize) -> f64 {
    k_d - k_o / n_agents as f64
}

/// Feedback evaluated with the self-excluding sum `k_d v_i + (k_o/N) sum_{j != i} v_j`.
/// Agrees with [`feedback_control`] up to rounding.
pub fn feedback_control_self_excluded(v: &StateVector, gains: &RiccatiGains, params: &ModelParams) -> StateVector {
    let n = v.n_agents() as f64;
    let mut u = StateVector::zeros(v.n_agents(), v.dim());
    for k in 0..v.dim() {
        let col = v.0.column(k);
        let total = col.sum();
        for i in 0..v.n_agents() {
            u.0[(i, k)] = -(gains.k_d * col[i] + gains.k_o / n * (total - col[i])) / params.nu;
        }
    }
    u
}

/// Deterministic control computed from the expected state:
/// `u_i = -(1/nu) [ k_d E[v_i] + (k_o/N) sum_{j != i} E[v_j] + s sum_k mu_k ]`.
/// With the infinite-horizon value `s = nu` the last term is `-sum_k mu_k`.
pub fn averaged_control(
    mean_state: &StateVector,
    gains: &RiccatiGains,
    params: &ModelParams,
    unc: &UncertaintySpec,
) -> StateVector {
    let mut u = feedback_control_self_excluded(mean_state, gains, params);
    u.0.add_scalar_mut(-gains.s * unc.mean_sum() / params.nu);
    u
}

/// Right-hand side of the agent dynamics for one realization of the inputs.
/// `theta` holds one row per random input and one column per coordinate.
pub fn drift(v: &StateVector, theta: &DMatrix<f64>, control: &StateVector, params: &ModelParams) -> StateVector {
    let mut out = StateVector::zeros(v.n_agents(), v.dim());
    for k in 0..v.dim() {
        let col = v.0.column(k);
        let mean = col.mean();
        let forcing: f64 = theta.column(k).sum();
        for i in 0..v.n_agents() {
            out.0[(i, k)] = params.p_bar * (mean - col[i]) + control.0[(i, k)] + forcing;
        }
    }
    out
}

/// Broadcasts scalar inputs to the `Z x d` layout used by [`drift`].
pub fn theta_matrix(theta: &[f64], dim: usize) -> DMatrix<f64> {
    DMatrix::from_fn(theta.len(), dim, |k, _| theta[k])
}
