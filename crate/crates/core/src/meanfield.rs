//! Particle approximation of the mean-field density with stochastic Galerkin
//! in the random inputs.
//!
//! The particle ensemble is evolved through the coefficient system; at every
//! output time each tensor quadrature node gets its own histogram of particle
//! positions, and the node histograms are combined into the expectation and
//! standard deviation of the density over the inputs. The quadrature weights
//! already integrate against the input laws, so no density factor is applied.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gpc::{GpcBasis, NodeEvaluator};
use crate::quadrature::QuadratureRule;
use crate::sim::{integrate_sg, MicroSetup};

/// Density-normalized histogram on equal-width bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub mass: Vec<f64>,
    /// Samples that fell outside the range and were put in an end bin.
    pub clipped: usize,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn width(&self, b: usize) -> f64 {
        self.edges[b + 1] - self.edges[b]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn integral(&self) -> f64 {
        (0..self.bins()).map(|b| self.mass[b] * self.width(b)).sum()
    }

    /// `sum_b center_b mass_b width_b`.
    pub fn first_moment(&self) -> f64 {
        self.centers().iter().enumerate().map(|(b, c)| c * self.mass[b] * self.width(b)).sum()
    }

    /// Mass inside `[lo, hi]`, counting partially covered bins pro rata.
    pub fn mass_within(&self, lo: f64, hi: f64) -> f64 {
        (0..self.bins())
            .map(|b| {
                let overlap = (hi.min(self.edges[b + 1]) - lo.max(self.edges[b])).max(0.0);
                self.mass[b] * overlap
            })
            .sum()
    }
}

pub fn histogram(samples: &[f64], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (lo, hi) = range;
    if bins == 0 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InvalidParams(format!("histogram needs bins >= 1 and a finite range, got {bins} on [{lo}, {hi}]")));
    }
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    let mut clipped = 0;
    for &x in samples {
        if x < lo || x > hi {
            clipped += 1;
        }
        let b = ((x - lo) / w).floor();
        let b = if b.is_nan() || b < 0.0 { 0 } else { (b as usize).min(bins - 1) };
        counts[b] += 1;
    }
    let edges: Vec<f64> = (0..=bins).map(|b| if b == bins { hi } else { lo + b as f64 * w }).collect();
    let n = samples.len() as f64;
    let mass = (0..bins).map(|b| counts[b] as f64 / (n * (edges[b + 1] - edges[b]))).collect();
    Ok(Histogram { edges, mass, clipped })
}

/// `[min - 3 spread, max + 3 spread]` of an ensemble, `spread = max - min`.
pub fn ensemble_range(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = if hi > lo { hi - lo } else { 1.0 };
    Ok((lo - 3.0 * spread, hi + 3.0 * spread))
}

/// Expectation and standard deviation of the density over the inputs at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySnapshot {
    pub mean: Histogram,
    pub std: Vec<f64>,
}

/// Combines per-node histograms, ordered like the tensor grid of `rules`
/// (last input fastest), with the product quadrature weights.
pub fn density_moments(hists: &[Histogram], rules: &[QuadratureRule]) -> Result<DensitySnapshot> {
    let weights = tensor_weights(rules);
    if hists.len() != weights.len() {
        return Err(Error::Config(format!("{} histograms for {} quadrature nodes", hists.len(), weights.len())));
    }
    let first = hists.first().ok_or(Error::EmptyInput)?;
    if hists.iter().any(|h| h.edges != first.edges) {
        return Err(Error::Config("node histograms use different bins".into()));
    }
    let bins = first.bins();
    let mut m1 = vec![0.0; bins];
    for (h, w) in hists.iter().zip(&weights) {
        m1.iter_mut().zip(&h.mass).for_each(|(m, f)| *m += w * f);
    }
    // centered second pass: sum w f^2 - E[f]^2 without the cancellation
    let mut var = vec![0.0; bins];
    for (h, w) in hists.iter().zip(&weights) {
        for ((v, f), m) in var.iter_mut().zip(&h.mass).zip(&m1) {
            *v += w * (f - m).powi(2);
        }
    }
    let std = var.iter().map(|v| v.sqrt()).collect();
    Ok(DensitySnapshot {
        mean: Histogram { edges: first.edges.clone(), mass: m1, clipped: hists.iter().map(|h| h.clipped).sum() },
        std,
    })
}

/// Products of the one-dimensional weights in tensor-grid order.
pub fn tensor_weights(rules: &[QuadratureRule]) -> Vec<f64> {
    rules.iter().fold(vec![1.0], |acc, r| {
        acc.iter().flat_map(|a| r.weights.iter().map(move |w| a * w)).collect()
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McSgConfig {
    pub bins: usize,
    /// Quadrature points per input for the density reconstruction.
    pub quad_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMoments {
    pub times: Vec<f64>,
    pub snapshots: Vec<DensitySnapshot>,
    /// Particle average of the expected position.
    pub particle_mean: Vec<f64>,
}

/// `setup.v0` holds the particle positions (one agent per particle, `d = 1`).
pub fn run_mc_sg(setup: &MicroSetup, basis: &GpcBasis, cfg: &McSgConfig, exec: Exec) -> Result<DensityMoments> {
    if setup.params.dim != 1 {
        return Err(Error::Config(format!("density reconstruction needs d = 1, got {}", setup.params.dim)));
    }
    if cfg.bins == 0 {
        return Err(Error::Config("bins must be at least 1".into()));
    }
    let rules = basis.rules(cfg.quad_len)?;
    // the Galerkin integrals are exact with order + 1 points, independent of the density rule
    let moments = basis.moments(basis.order + 1)?;
    let range = ensemble_range(setup.v0.0.as_slice())?;
    let eval = NodeEvaluator::from_rules(basis, &rules);
    let mut out = DensityMoments { times: Vec::new(), snapshots: Vec::new(), particle_mean: Vec::new() };
    integrate_sg(setup, basis, &moments, exec, |t, c| {
        let hists = eval
            .map_nodes(c, exec, |_, v| histogram(v, cfg.bins, range))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let snap = density_moments(&hists, &rules)?;
        if snap.mean.clipped > 0 {
            log::warn!("t = {t}: {} node samples clipped into the end bins", snap.mean.clipped);
        }
        out.times.push(t);
        out.particle_mean.push(c.block(0, 0).iter().sum::<f64>() / c.n_agents as f64);
        out.snapshots.push(snap);
        Ok(())
    })?;
    Ok(out)
}
