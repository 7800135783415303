//! Tensor-product polynomial chaos in the random inputs and the Galerkin
//! projection of the agent dynamics.
//!
//! Each input `theta_j` gets the family orthogonal to its law: probabilists'
//! Hermite `He_k` for a Gaussian, Legendre `P_k` for a uniform law, both after
//! the affine pull-back to `N(0,1)` / `U(-1,1)`. The default basis is not
//! normalized (`E[He_k^2] = k!`, `E[P_k^2] = 1/(2k+1)`), so projections divide
//! by `m2` and the variance carries `m2` weights.
//!
//! Modes are multi-indices in `{0..M}^Z`, numbered lexicographically with the
//! last input varying fastest; mode `0` is the all-zeros index.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::model::{ControlLaw, InputLaw, ModelParams, StateVector, UncertaintySpec};
use crate::quadrature::{self, BasisMoments, Family, QuadratureRule};
use crate::riccati::RiccatiGains;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BasisFamily {
    Hermite { mu: f64, sigma2: f64 },
    Legendre { a: f64, b: f64 },
}

impl BasisFamily {
    pub fn from_law(law: &InputLaw) -> Self {
        match *law {
            InputLaw::Gaussian { mu, sigma2 } => BasisFamily::Hermite { mu, sigma2 },
            InputLaw::Uniform { a, b } => BasisFamily::Legendre { a, b },
        }
    }

    pub fn quadrature_family(&self) -> Family {
        match self {
            BasisFamily::Hermite { .. } => Family::GaussHermite,
            BasisFamily::Legendre { .. } => Family::GaussLegendre,
        }
    }

    /// `(shift, scale)` with `theta = shift + scale * x`.
    pub fn affine(&self) -> (f64, f64) {
        match *self {
            BasisFamily::Hermite { mu, sigma2 } => (mu, sigma2.sqrt()),
            BasisFamily::Legendre { a, b } => (0.5 * (a + b), 0.5 * (b - a)),
        }
    }

    /// A point mass (`sigma2 = 0`) maps everything to the origin.
    pub fn to_canonical(&self, theta: f64) -> f64 {
        let (shift, scale) = self.affine();
        if scale == 0.0 {
            0.0
        } else {
            (theta - shift) / scale
        }
    }

    /// `E[Phi_k^2]` of the unnormalized polynomial.
    pub fn norm_sq(&self, k: usize) -> f64 {
        match self {
            BasisFamily::Hermite { .. } => (1..=k).map(|i| i as f64).product(),
            BasisFamily::Legendre { .. } => 1.0 / (2 * k + 1) as f64,
        }
    }

    pub fn rule(&self, len: usize) -> Result<QuadratureRule> {
        match *self {
            BasisFamily::Hermite { mu, sigma2 } => quadrature::gauss_hermite(len, mu, sigma2),
            BasisFamily::Legendre { a, b } => quadrature::gauss_legendre(len, a, b),
        }
    }
}

/// `He_0..He_M` or `P_0..P_M` at a canonical point.
pub fn canonical_polys(family: Family, order: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    out.push(1.0);
    if order == 0 {
        return out;
    }
    out.push(x);
    for k in 1..order {
        let kf = k as f64;
        let next = match family {
            Family::GaussHermite => x * out[k] - kf * out[k - 1],
            Family::GaussLegendre => ((2.0 * kf + 1.0) * x * out[k] - kf * out[k - 1]) / (kf + 1.0),
        };
        out.push(next);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Standard,
    /// Each polynomial divided by its `L2(rho)` norm.
    Orthonormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpcBasis {
    pub families: Vec<BasisFamily>,
    pub order: usize,
    pub normalization: Normalization,
}

impl GpcBasis {
    pub fn new(families: Vec<BasisFamily>, order: usize, normalization: Normalization) -> Self {
        Self { families, order, normalization }
    }

    pub fn from_uncertainty(unc: &UncertaintySpec, order: usize) -> Self {
        Self::new(unc.components.iter().map(BasisFamily::from_law).collect(), order, Normalization::Standard)
    }

    pub fn z(&self) -> usize {
        self.families.len()
    }

    pub fn n_modes(&self) -> usize {
        (self.order + 1).pow(self.z() as u32)
    }

    pub fn multi_index(&self, mode: usize) -> Vec<usize> {
        multi_index(mode, self.order, self.z())
    }

    pub fn mode_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &k| acc * (self.order + 1) + k)
    }

    /// Fails unless family `j` matches the law of input `j`.
    pub fn check_against(&self, unc: &UncertaintySpec) -> Result<()> {
        if unc.len() != self.z() {
            return Err(Error::Config(format!("basis has {} inputs, uncertainty has {}", self.z(), unc.len())));
        }
        for (j, (fam, law)) in self.families.iter().zip(&unc.components).enumerate() {
            if *fam != BasisFamily::from_law(law) {
                return Err(Error::Config(format!("basis family {j} ({fam:?}) does not match law {law:?}")));
            }
        }
        Ok(())
    }

    /// All `M+1` basis values of input `j` at a canonical point.
    pub fn canonical_values(&self, j: usize, x: f64) -> Vec<f64> {
        let fam = &self.families[j];
        let mut v = canonical_polys(fam.quadrature_family(), self.order, x);
        if self.normalization == Normalization::Orthonormal {
            for (k, p) in v.iter_mut().enumerate() {
                *p /= fam.norm_sq(k).sqrt();
            }
        }
        v
    }

    pub fn values(&self, j: usize, theta: f64) -> Vec<f64> {
        self.canonical_values(j, self.families[j].to_canonical(theta))
    }

    pub fn eval_basis(&self, j: usize, k: usize, theta: f64) -> f64 {
        assert!(k <= self.order, "degree {k} above order {}", self.order);
        self.values(j, theta)[k]
    }

    pub fn rules(&self, len: usize) -> Result<Vec<QuadratureRule>> {
        self.families.iter().map(|f| f.rule(len)).collect()
    }

    pub fn moments(&self, len: usize) -> Result<BasisMoments> {
        quadrature::basis_moments(self, &self.rules(len)?)
    }
}

pub fn multi_index(mode: usize, order: usize, z: usize) -> Vec<usize> {
    let mut idx = vec![0; z];
    let mut rest = mode;
    for slot in idx.iter_mut().rev() {
        *slot = rest % (order + 1);
        rest /= order + 1;
    }
    idx
}

/// Coefficients `v_hat[mode][coordinate][agent]`, stored contiguously so that
/// each `(mode, coordinate)` block is one slice over agents.
#[derive(Debug, Clone, PartialEq)]
pub struct GpcCoefficients {
    pub n_modes: usize,
    pub dim: usize,
    pub n_agents: usize,
    pub data: Vec<f64>,
}

impl GpcCoefficients {
    pub fn zeros(n_modes: usize, dim: usize, n_agents: usize) -> Self {
        Self { n_modes, dim, n_agents, data: vec![0.0; n_modes * dim * n_agents] }
    }

    fn offset(&self, mode: usize, k: usize) -> usize {
        (mode * self.dim + k) * self.n_agents
    }

    pub fn block(&self, mode: usize, k: usize) -> &[f64] {
        let o = self.offset(mode, k);
        &self.data[o..o + self.n_agents]
    }

    pub fn block_mut(&mut self, mode: usize, k: usize) -> &mut [f64] {
        let o = self.offset(mode, k);
        &mut self.data[o..o + self.n_agents]
    }

    pub fn get(&self, agent: usize, mode: usize, k: usize) -> f64 {
        self.data[self.offset(mode, k) + agent]
    }

    /// Mode-0 coefficients as a state.
    pub fn mean_state(&self) -> StateVector {
        StateVector::from_fn(self.n_agents, self.dim, |i, k| self.get(i, 0, k))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

pub fn project_initial(v0: &StateVector, basis: &GpcBasis) -> GpcCoefficients {
    let mut c = GpcCoefficients::zeros(basis.n_modes(), v0.dim(), v0.n_agents());
    for k in 0..v0.dim() {
        c.block_mut(0, k).copy_from_slice(v0.0.column(k).as_slice());
    }
    c
}

/// `prod_j m2[j][k_j]` for every mode.
pub fn mode_weights(moments: &BasisMoments) -> Vec<f64> {
    mode_products(moments, |j, k| moments.m2[j][k])
}

fn mode_products(moments: &BasisMoments, f: impl Fn(usize, usize) -> f64) -> Vec<f64> {
    let (z, order) = (moments.z(), moments.order());
    let n = (order + 1).pow(z as u32);
    (0..n)
        .map(|mode| multi_index(mode, order, z).iter().enumerate().map(|(j, &k)| f(j, k)).product())
        .collect()
}

/// Projection of `sum_l theta_l` on every mode: `E[sum_l theta_l Phi_k] / E[Phi_k^2]`.
pub fn forcing(moments: &BasisMoments) -> Vec<f64> {
    let (z, order) = (moments.z(), moments.order());
    let weights = mode_weights(moments);
    (0..weights.len())
        .map(|mode| {
            let idx = multi_index(mode, order, z);
            let num: f64 = (0..z)
                .map(|l| {
                    let others: f64 = (0..z).filter(|&j| j != l).map(|j| moments.m0[j][idx[j]]).product();
                    moments.m1[l][idx[l]] * others
                })
                .sum();
            num / weights[mode]
        })
        .collect()
}

/// Projection of a unit constant on every mode: `prod m0 / prod m2`.
pub fn constant_projection(moments: &BasisMoments) -> Vec<f64> {
    let m0 = mode_products(moments, |j, k| moments.m0[j][k]);
    m0.iter().zip(mode_weights(moments)).map(|(a, w)| a / w).collect()
}

/// Projected right-hand side for one control law. The per-mode tables are
/// computed once.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    pub params: ModelParams,
    pub control: ControlLaw,
    forcing: Vec<f64>,
    constant: Vec<f64>,
    mean_sum: f64,
    pub exec: Exec,
}

impl GalerkinSystem {
    pub fn new(params: &ModelParams, moments: &BasisMoments, control: ControlLaw, exec: Exec) -> Result<Self> {
        params.validate()?;
        if moments.z() != params.z {
            return Err(Error::Config(format!("moments for {} inputs, model has {}", moments.z(), params.z)));
        }
        // Phi_0 = 1, so m1[l][0] = E[theta_l]
        let mean_sum = moments.m1.iter().map(|m| m[0]).sum();
        Ok(Self {
            params: *params,
            control,
            forcing: forcing(moments),
            constant: constant_projection(moments),
            mean_sum,
            exec,
        })
    }

    pub fn n_modes(&self) -> usize {
        self.forcing.len()
    }

    pub fn forcing(&self) -> &[f64] {
        &self.forcing
    }

    pub fn rhs(&self, c: &GpcCoefficients, gains: &RiccatiGains) -> GpcCoefficients {
        assert_eq!(c.n_modes, self.n_modes(), "coefficient/basis mode count mismatch");
        let n = c.n_agents;
        let nf = n as f64;
        let p = &self.params;
        let (p_bar, nu) = (p.p_bar, p.nu);
        let blocks = self.exec.map(c.n_modes * c.dim, |b| {
            let (mode, k) = (b / c.dim, b % c.dim);
            let x = c.block(mode, k);
            let mean = x.iter().sum::<f64>() / nf;
            let f = self.forcing[mode];
            match self.control {
                ControlLaw::Feedback | ControlLaw::FeedbackCorrected => {
                    let a = p_bar - gains.k_o / nu;
                    let diag = p_bar + (gains.k_d - gains.k_o / nf) / nu;
                    let shift = if self.control == ControlLaw::FeedbackCorrected {
                        self.mean_sum * self.constant[mode]
                    } else {
                        0.0
                    };
                    x.iter().map(|&xi| a * mean - diag * xi + f - shift).collect::<Vec<_>>()
                }
                ControlLaw::Averaged => {
                    let y = c.block(0, k);
                    let total: f64 = y.iter().sum();
                    let ratio = self.constant[mode];
                    x.iter()
                        .zip(y)
                        .map(|(&xi, &yi)| {
                            let u = (gains.k_d * yi + gains.k_o / nf * (total - yi) + gains.s * self.mean_sum) / nu;
                            p_bar * (mean - xi) + f - ratio * u
                        })
                        .collect::<Vec<_>>()
                }
            }
        });
        GpcCoefficients { n_modes: c.n_modes, dim: c.dim, n_agents: n, data: blocks.concat() }
    }
}

pub fn rhs_feedback(c: &GpcCoefficients, params: &ModelParams, gains: &RiccatiGains, moments: &BasisMoments) -> Result<GpcCoefficients> {
    Ok(GalerkinSystem::new(params, moments, ControlLaw::Feedback, Exec::Sequential)?.rhs(c, gains))
}

/// `gains.s` is replaced by `s`.
pub fn rhs_averaged(
    c: &GpcCoefficients,
    params: &ModelParams,
    gains: &RiccatiGains,
    s: f64,
    moments: &BasisMoments,
) -> Result<GpcCoefficients> {
    let g = RiccatiGains { s, ..*gains };
    Ok(GalerkinSystem::new(params, moments, ControlLaw::Averaged, Exec::Sequential)?.rhs(c, &g))
}

/// Mean and variance per agent and coordinate.
pub fn reconstruct_moments(c: &GpcCoefficients, moments: &BasisMoments) -> (StateVector, StateVector) {
    let w = mode_weights(moments);
    assert_eq!(w.len(), c.n_modes);
    let mean = c.mean_state();
    let var = StateVector::from_fn(c.n_agents, c.dim, |i, k| {
        (1..c.n_modes).map(|m| c.get(i, m, k).powi(2) * w[m]).sum()
    });
    (mean, var)
}

/// `sum_k v_hat_k^2 - v_hat_0^2`, the variance for an orthonormal basis.
pub fn variance_unweighted(c: &GpcCoefficients) -> StateVector {
    StateVector::from_fn(c.n_agents, c.dim, |i, k| (1..c.n_modes).map(|m| c.get(i, m, k).powi(2)).sum())
}

/// `d x d` covariance of one agent.
pub fn agent_covariance(c: &GpcCoefficients, moments: &BasisMoments, agent: usize) -> DMatrix<f64> {
    let w = mode_weights(moments);
    DMatrix::from_fn(c.dim, c.dim, |a, b| {
        (1..c.n_modes).map(|m| c.get(agent, m, a) * c.get(agent, m, b) * w[m]).sum()
    })
}

pub fn evaluate_realization(c: &GpcCoefficients, theta: &[f64], basis: &GpcBasis) -> StateVector {
    let nodes: Vec<Vec<f64>> = theta.iter().map(|&t| vec![t]).collect();
    let eval = NodeEvaluator::new(basis, &nodes);
    let flat = eval.map_nodes(c, Exec::Sequential, |_, v| v.to_vec()).pop().unwrap();
    StateVector::from_fn(c.n_agents, c.dim, |i, k| flat[k * c.n_agents + i])
}

/// Evaluates coefficient tensors on a tensor grid of input values by
/// contracting one input at a time; basis values are cached at construction.
#[derive(Debug, Clone)]
pub struct NodeEvaluator {
    /// `[input j][node l][degree k]`
    values: Vec<Vec<Vec<f64>>>,
    order: usize,
}

impl NodeEvaluator {
    /// `nodes[j]` lists the values of input `j`.
    pub fn new(basis: &GpcBasis, nodes: &[Vec<f64>]) -> Self {
        assert_eq!(nodes.len(), basis.z());
        let values = nodes
            .iter()
            .enumerate()
            .map(|(j, pts)| pts.iter().map(|&t| basis.values(j, t)).collect())
            .collect();
        Self { values, order: basis.order }
    }

    pub fn from_rules(basis: &GpcBasis, rules: &[QuadratureRule]) -> Self {
        let nodes: Vec<Vec<f64>> = rules.iter().map(|r| r.nodes.clone()).collect();
        Self::new(basis, &nodes)
    }

    pub fn n_nodes(&self) -> usize {
        self.values.iter().map(Vec::len).product()
    }

    /// Contracts input axis `axis` of a tensor laid out `[outer][axis][inner]`.
    fn contract(&self, data: &[f64], outer: usize, axis: usize, inner: usize) -> Vec<f64> {
        let vals = &self.values[axis];
        let m = self.order + 1;
        let mut out = vec![0.0; outer * vals.len() * inner];
        for o in 0..outer {
            for (l, phi) in vals.iter().enumerate() {
                let dst = &mut out[(o * vals.len() + l) * inner..][..inner];
                for (k, &p) in phi.iter().enumerate() {
                    let src = &data[(o * m + k) * inner..][..inner];
                    dst.iter_mut().zip(src).for_each(|(d, s)| *d += p * s);
                }
            }
        }
        out
    }

    /// Calls `f(node, values)` for every grid node in lexicographic order,
    /// where `values` is laid out `[coordinate][agent]`.
    pub fn map_nodes<T, F>(&self, c: &GpcCoefficients, exec: Exec, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, &[f64]) -> T + Sync + Send,
    {
        let z = self.values.len();
        let m = self.order + 1;
        let block = c.dim * c.n_agents;
        assert_eq!(c.n_modes, m.pow(z as u32));
        // contract inputs z-1 .. 1, keeping input 0 as modes
        let mut data = c.data.clone();
        let mut inner = block;
        for axis in (1..z).rev() {
            let outer = m.pow(axis as u32);
            data = self.contract(&data, outer, axis, inner);
            inner *= self.values[axis].len();
        }
        let rest = inner / block;
        let first = &self.values[0];
        let chunks = exec.map(first.len(), |l| {
            let mut slab = vec![0.0; inner];
            for (k, &p) in first[l].iter().enumerate() {
                slab.iter_mut().zip(&data[k * inner..(k + 1) * inner]).for_each(|(d, s)| *d += p * s);
            }
            (0..rest).map(|r| f(l * rest + r, &slab[r * block..(r + 1) * block])).collect::<Vec<_>>()
        });
        chunks.into_iter().flatten().collect()
    }
}
