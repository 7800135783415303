//! Gauss quadrature against the input probability laws.
//!
//! Rules are built by Golub-Welsch from the three-term recurrence of the
//! monic orthogonal polynomials (probabilists' Hermite for `N(0,1)`, Legendre
//! for `U(-1,1)`), then every node is polished by Newton's method on the
//! orthonormal recurrence and the weights are taken as Christoffel numbers
//! `1 / sum_k p_k(x)^2`. The latter keeps full relative accuracy for the tiny
//! tail weights of high-order Hermite rules, which the eigenvector formula
//! does not.
//!
//! Weights integrate the probability density directly and sum to one.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gpc::GpcBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    GaussHermite,
    GaussLegendre,
}

impl Family {
    /// `beta_k` of the monic recurrence `p_{k+1} = x p_k - beta_k p_{k-1}`.
    fn beta(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            Family::GaussHermite => k,
            Family::GaussLegendre => k * k / (4.0 * k * k - 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    /// Nodes in the coordinates of the target distribution.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub family: Family,
    /// Nodes of the canonical rule (`N(0,1)` or `U(-1,1)`); `nodes = shift + scale * canonical`.
    pub canonical_nodes: Vec<f64>,
    pub shift: f64,
    pub scale: f64,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Orthonormal polynomial `p_L(x)`, its derivative and `sum_{k<L} p_k(x)^2`.
fn orthonormal_eval(family: Family, len: usize, x: f64) -> (f64, f64, f64) {
    let (mut p_prev, mut p) = (0.0, 1.0);
    let (mut d_prev, mut d) = (0.0, 0.0);
    let mut christoffel = 0.0;
    for k in 0..len {
        christoffel += p * p;
        let b_next = family.beta(k + 1).sqrt();
        let b_k = if k == 0 { 0.0 } else { family.beta(k).sqrt() };
        let p_next = (x * p - b_k * p_prev) / b_next;
        let d_next = (p + x * d - b_k * d_prev) / b_next;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (p, d, christoffel)
}

fn canonical_rule(family: Family, len: usize) -> (Vec<f64>, Vec<f64>) {
    if len == 1 {
        return (vec![0.0], vec![1.0]);
    }
    let jacobi = DMatrix::from_fn(len, len, |i, j| {
        if i + 1 == j || j + 1 == i {
            family.beta(i.max(j)).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);

    for x in nodes.iter_mut() {
        for _ in 0..20 {
            let (p, d, _) = orthonormal_eval(family, len, *x);
            let dx = p / d;
            *x -= dx;
            if dx.abs() <= 4.0 * f64::EPSILON * (1.0 + x.abs()) {
                break;
            }
        }
    }
    // both families are symmetric about 0
    for i in 0..len / 2 {
        let j = len - 1 - i;
        let half = 0.5 * (nodes[j] - nodes[i]);
        nodes[i] = -half;
        nodes[j] = half;
    }
    if len % 2 == 1 {
        nodes[len / 2] = 0.0;
    }
    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| 1.0 / orthonormal_eval(family, len, x).2)
        .collect();
    for i in 0..len / 2 {
        let j = len - 1 - i;
        let w = 0.5 * (weights[i] + weights[j]);
        weights[i] = w;
        weights[j] = w;
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    (nodes, weights)
}

fn mapped(family: Family, len: usize, shift: f64, scale: f64) -> QuadratureRule {
    let (canonical_nodes, weights) = canonical_rule(family, len);
    QuadratureRule {
        nodes: canonical_nodes.iter().map(|&x| shift + scale * x).collect(),
        weights,
        family,
        canonical_nodes,
        shift,
        scale,
    }
}

/// `L`-point rule for `N(mu, sigma2)`.
pub fn gauss_hermite(len: usize, mu: f64, sigma2: f64) -> Result<QuadratureRule> {
    if len == 0 || !(sigma2 >= 0.0) {
        return Err(Error::InvalidParams(format!("gauss_hermite: L = {len}, sigma2 = {sigma2}")));
    }
    Ok(mapped(Family::GaussHermite, len, mu, sigma2.sqrt()))
}

/// `L`-point rule for `U(a, b)`.
pub fn gauss_legendre(len: usize, a: f64, b: f64) -> Result<QuadratureRule> {
    if len == 0 || !(a < b) {
        return Err(Error::InvalidParams(format!("gauss_legendre: L = {len}, [{a}, {b}]")));
    }
    Ok(mapped(Family::GaussLegendre, len, 0.5 * (a + b), 0.5 * (b - a)))
}

/// `sum_l w_l f(theta_l)`.
pub fn expect(rule: &QuadratureRule, f: impl Fn(f64) -> f64) -> f64 {
    rule.nodes.iter().zip(&rule.weights).map(|(&x, &w)| w * f(x)).sum()
}

/// One-dimensional basis integrals used by the Galerkin projection, indexed
/// `[input j][degree k]`:
/// `m0 = E[Phi_k]`, `m1 = E[theta_j Phi_k]`, `m2 = E[Phi_k^2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisMoments {
    pub m0: Vec<Vec<f64>>,
    pub m1: Vec<Vec<f64>>,
    pub m2: Vec<Vec<f64>>,
}

impl BasisMoments {
    pub fn z(&self) -> usize {
        self.m0.len()
    }

    pub fn order(&self) -> usize {
        self.m0.first().map_or(0, |v| v.len().saturating_sub(1))
    }
}

pub fn basis_moments(basis: &GpcBasis, rules: &[QuadratureRule]) -> Result<BasisMoments> {
    if rules.len() != basis.z() {
        return Err(Error::Config(format!("{} rules for {} random inputs", rules.len(), basis.z())));
    }
    let m = basis.order;
    let mut out = BasisMoments { m0: Vec::new(), m1: Vec::new(), m2: Vec::new() };
    for (j, rule) in rules.iter().enumerate() {
        let fam = &basis.families[j];
        if rule.family != fam.quadrature_family() {
            return Err(Error::Config(format!("rule {j} is {:?}, basis needs {:?}", rule.family, fam.quadrature_family())));
        }
        if rule.len() < m + 1 {
            return Err(Error::Config(format!("rule {j} has {} nodes, order {m} needs at least {}", rule.len(), m + 1)));
        }
        let (mut m0, mut m1, mut m2) = (vec![0.0; m + 1], vec![0.0; m + 1], vec![0.0; m + 1]);
        for (l, &x) in rule.canonical_nodes.iter().enumerate() {
            let w = rule.weights[l];
            let theta = rule.shift + rule.scale * x;
            let phi = basis.canonical_values(j, x);
            for k in 0..=m {
                m0[k] += w * phi[k];
                m1[k] += w * theta * phi[k];
                m2[k] += w * phi[k] * phi[k];
            }
        }
        out.m0.push(m0);
        out.m1.push(m1);
        out.m2.push(m2);
    }
    Ok(out)
}
