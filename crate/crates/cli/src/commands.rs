//! One function per subcommand. Each returns the files it wrote.

use std::path::{Path, PathBuf};

use robust_consensus::exec::Exec;
use robust_consensus::gpc::{agent_covariance, reconstruct_moments, GpcBasis};
use robust_consensus::hinf::{
    certify, compute_c_n, consensus_system, gamma_lower_bound, hinf_norm_sweep, mean_free_system, HinfCertificate,
};
use robust_consensus::meanfield::{run_mc_sg, McSgConfig};
use robust_consensus::model::{ControlLaw, ModelParams, UncertaintySpec};
use robust_consensus::quadrature::BasisMoments;
use robust_consensus::riccati::{
    solve_finite_horizon_gains, solve_finite_n_gains, solve_s, GainSchedule, RiccatiGains, SMode,
};
use robust_consensus::sim::{integrate_sg, run_micro_sg, MicroSetup, MomentSeries, TimeGrid};
use robust_consensus::Error;
use serde::{Deserialize, Serialize};

use crate::config::{section, ExperimentConfig, GainMode};
use crate::error::CliError;
use crate::output::{ensure_dir, write_json, CsvTable};

pub fn control_name(c: ControlLaw) -> &'static str {
    match c {
        ControlLaw::Feedback => "feedback",
        ControlLaw::FeedbackCorrected => "feedback_corrected",
        ControlLaw::Averaged => "averaged",
    }
}

/// Gain schedule for the configured mode.
pub fn gain_schedule(params: &ModelParams, mode: GainMode, grid: &TimeGrid) -> Result<GainSchedule, CliError> {
    let algebraic = solve_finite_n_gains(params)?;
    Ok(match mode {
        GainMode::Algebraic => GainSchedule::Constant(algebraic),
        GainMode::FiniteHorizon => {
            let fh = solve_finite_horizon_gains(params, grid.t_final, grid.dt)?;
            let (k_d, k_o) = fh.at_start();
            let s = solve_s(params, k_d, k_o, SMode::FiniteHorizon { t_final: grid.t_final, dt: grid.dt })?;
            GainSchedule::from_finite_horizon(&fh, &s)?
        }
    })
}

/// Model, inputs, initial state and gains of one run.
pub fn micro_setup(cfg: &ExperimentConfig, params: ModelParams, seed: u64, control: ControlLaw) -> Result<MicroSetup, CliError> {
    let grid = *cfg.integrator()?;
    let unc = cfg.uncertainty()?;
    unc.check_against(&params)?;
    Ok(MicroSetup {
        v0: cfg.initial()?.sample(params.n_agents, params.dim, seed)?,
        gains: gain_schedule(&params, cfg.gains.mode, &grid)?,
        params,
        unc,
        control,
        grid,
    })
}

/// Basis and basis integrals from the `[gpc]` section.
pub fn basis(cfg: &ExperimentConfig, unc: &UncertaintySpec) -> Result<(GpcBasis, BasisMoments), CliError> {
    let g = cfg.gpc()?;
    let b = GpcBasis::from_uncertainty(unc, g.order);
    let m = b.moments(g.quad_points)?;
    Ok((b, m))
}

/// `t, mean_1..d, band_lo_1..d, band_hi_1..d`, agent-averaged.
pub fn series_table(s: &MomentSeries) -> CsvTable {
    let d = s.mean.first().map_or(0, |m| m.dim());
    let mut header = vec!["t".to_string()];
    for prefix in ["mean", "band_lo", "band_hi"] {
        header.extend((1..=d).map(|k| format!("{prefix}_{k}")));
    }
    let mut t = CsvTable::new(header);
    for i in 0..s.len() {
        let mut row = vec![s.times[i]];
        row.extend(s.agent_mean(i));
        row.extend(&s.band_low[i]);
        row.extend(&s.band_high[i]);
        t.push(&row);
    }
    t
}

/// Both controls on the one-dimensional setup; one moment CSV per control.
pub fn cmd_test1(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(out)?;
    let params = cfg.params()?;
    let mut files = Vec::new();
    for &control in cfg.controls()? {
        let setup = micro_setup(cfg, params, seed, control)?;
        let (b, m) = basis(cfg, &setup.unc)?;
        let series = run_micro_sg(&setup, &b, &m, Exec::default())?;
        files.push(series_table(&series).write(&out.join(format!("test1_{}.csv", control_name(control))))?);
    }
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Test2Run {
    pub nu: f64,
    pub c_n_computed: f64,
    pub c_n_reference: Option<f64>,
    pub gamma_min: f64,
    pub gains: RiccatiGains,
    pub certificate: HinfCertificate,
    /// Largest root-mean-square distance of an agent from the origin at `T`, per control.
    pub terminal_spread: Vec<(ControlLaw, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Test2Report {
    pub runs: Vec<Test2Run>,
}

/// Two-dimensional runs over the configured `nu` values, with certificates.
pub fn cmd_test2(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<(Test2Report, Vec<PathBuf>), CliError> {
    ensure_dir(out)?;
    let t2 = section(&cfg.test2, "test2")?;
    let base = cfg.params()?;
    if base.dim != 2 {
        return Err(CliError::Config(format!("test2 needs dim = 2, got {}", base.dim)));
    }
    let mut files = Vec::new();
    let mut runs = Vec::new();
    for (j, &nu) in t2.nu_values.iter().enumerate() {
        let params = base.with_nu(nu);
        params.validate()?;
        let gains = solve_finite_n_gains(&params)?;
        let c_n = compute_c_n(&params, &gains);
        let certificate = certify(&params, &gains, t2.gamma_factor / c_n)?;
        let mut spreads = Vec::new();
        for &control in cfg.controls()? {
            let setup = micro_setup(cfg, params, seed, control)?;
            let (b, m) = basis(cfg, &setup.unc)?;
            let tag = format!("test2_nu{nu}_{}", control_name(control));

            let mut agents = CsvTable::new(["t", "agent", "mean_1", "mean_2", "cov_11", "cov_12", "cov_22"]);
            let (mut times, mut means, mut vars) = (Vec::new(), Vec::new(), Vec::new());
            let mut spread = 0.0;
            integrate_sg(&setup, &b, &m, Exec::default(), |t, c| {
                let (mean, var) = reconstruct_moments(c, &m);
                spread = 0.0;
                for i in 0..c.n_agents {
                    let cov = agent_covariance(c, &m, i);
                    agents.push(&[t, i as f64, mean.get(i, 0), mean.get(i, 1), cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]]);
                    let rms = (mean.get(i, 0).powi(2) + mean.get(i, 1).powi(2) + cov.trace()).sqrt();
                    spread = f64::max(spread, rms);
                }
                times.push(t);
                means.push(mean);
                vars.push(var);
                Ok(())
            })?;
            let series = MomentSeries::new(times, means, vars);
            files.push(series_table(&series).write(&out.join(format!("{tag}.csv")))?);
            files.push(agents.write(&out.join(format!("{tag}_agents.csv")))?);
            spreads.push((control, spread));
        }
        runs.push(Test2Run {
            nu,
            c_n_computed: c_n,
            c_n_reference: t2.reference_c_n.get(j).copied(),
            gamma_min: 1.0 / c_n,
            gains,
            certificate,
            terminal_spread: spreads,
        });
    }
    let report = Test2Report { runs };
    files.push(write_json(&out.join("test2_certificate.json"), &report)?);
    Ok((report, files))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub control: ControlLaw,
    pub times: Vec<f64>,
    pub bin_integral: Vec<f64>,
    pub first_moment: Vec<f64>,
    pub particle_mean: Vec<f64>,
    pub bin_width: f64,
    /// Expected mass within `|v| < 1` at the final time.
    pub terminal_mass_near_zero: f64,
}

/// Particle densities for every control: `t, bin_center, mean_density,
/// std_density` plus a per-time summary.
pub fn cmd_test3(cfg: &ExperimentConfig, out: &Path, seed: u64) -> Result<(Vec<DensitySummary>, Vec<PathBuf>), CliError> {
    ensure_dir(out)?;
    let mf = section(&cfg.meanfield, "meanfield")?;
    let params = cfg.params()?.with_n_agents(mf.n_particles);
    if params.dim != 1 {
        return Err(CliError::Config("test3 needs dim = 1".into()));
    }
    let mut files = Vec::new();
    let mut summaries = Vec::new();
    for &control in cfg.controls()? {
        let setup = micro_setup(cfg, params, seed, control)?;
        let b = GpcBasis::from_uncertainty(&setup.unc, cfg.gpc()?.order);
        let d = run_mc_sg(&setup, &b, &McSgConfig { bins: mf.bins, quad_len: mf.quad_points }, Exec::default())?;
        let mut dens = CsvTable::new(["t", "bin_center", "mean_density", "std_density"]);
        let mut summ = CsvTable::new(["t", "bin_integral", "first_moment", "particle_mean"]);
        for (i, snap) in d.snapshots.iter().enumerate() {
            for (b, c) in snap.mean.centers().iter().enumerate() {
                dens.push(&[d.times[i], *c, snap.mean.mass[b], snap.std[b]]);
            }
            summ.push(&[d.times[i], snap.mean.integral(), snap.mean.first_moment(), d.particle_mean[i]]);
        }
        let name = control_name(control);
        files.push(dens.write(&out.join(format!("test3_{name}.csv")))?);
        files.push(summ.write(&out.join(format!("test3_{name}_summary.csv")))?);
        let last = &d.snapshots.last().ok_or(Error::EmptyInput)?.mean;
        summaries.push(DensitySummary {
            control,
            times: d.times.clone(),
            bin_integral: d.snapshots.iter().map(|s| s.mean.integral()).collect(),
            first_moment: d.snapshots.iter().map(|s| s.mean.first_moment()).collect(),
            particle_mean: d.particle_mean.clone(),
            bin_width: last.width(0),
            terminal_mass_near_zero: last.mass_within(-1.0, 1.0),
        });
    }
    Ok((summaries, files))
}

/// Lower bound on the certifiable `gamma` over the configured grid.
pub fn cmd_gamma_surface(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(out)?;
    let g = section(&cfg.gamma_surface, "gamma_surface")?;
    let (nus, pbars) = (g.nu.values()?, g.p_bar.values()?);
    if g.r_values.is_empty() {
        return Err(CliError::Config("gamma_surface.r_values is empty".into()));
    }
    let mut t = CsvTable::new(["nu", "p_bar", "r", "gamma"]);
    for &r in &g.r_values {
        for &nu in &nus {
            for &p in &pbars {
                t.push(&[nu, p, r, gamma_lower_bound(p, nu, r)?]);
            }
        }
    }
    Ok(vec![t.write(&out.join("gamma_surface.csv"))?])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCheck {
    pub omega_points: usize,
    /// Every input acting on every agent, full-state output.
    pub norm_consensus_inputs: f64,
    pub within_gamma: bool,
    /// Disturbances and outputs restricted to the mean-free subspace.
    pub norm_mean_free: f64,
    pub mean_free_within_gamma: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub params: ModelParams,
    pub gains: RiccatiGains,
    pub c_n: f64,
    pub gamma_min: f64,
    pub certificate: Option<HinfCertificate>,
    pub sweep: Option<SweepCheck>,
    pub error: Option<String>,
}

/// Gains, certificate and (for small `N`) the frequency-sweep cross-check.
/// An infeasible `gamma` still writes the report, then fails.
pub fn cmd_certify(cfg: &ExperimentConfig, out: &Path, gamma: Option<f64>) -> Result<(CertifyReport, Vec<PathBuf>), CliError> {
    ensure_dir(out)?;
    let c = section(&cfg.certify, "certify")?;
    let gamma = gamma.or(c.gamma).ok_or_else(|| CliError::Config("no gamma given (flag or certify.gamma)".into()))?;
    let params = cfg.params()?;
    let gains = solve_finite_n_gains(&params)?;
    let c_n = compute_c_n(&params, &gains);
    let mut report = CertifyReport { params, gains, c_n, gamma_min: 1.0 / c_n, certificate: None, sweep: None, error: None };
    let path = out.join("certificate.json");
    match certify(&params, &gains, gamma) {
        Ok(cert) => {
            if params.n_agents <= c.sweep_max_agents {
                let grid = c.omega.values()?;
                let full = hinf_norm_sweep(&consensus_system(&params, &gains), &grid)?;
                let free = hinf_norm_sweep(&mean_free_system(&params, &gains), &grid)?;
                report.sweep = Some(SweepCheck {
                    omega_points: grid.len(),
                    norm_consensus_inputs: full,
                    within_gamma: full <= gamma,
                    norm_mean_free: free,
                    mean_free_within_gamma: free <= gamma * (1.0 + 1e-9),
                });
            }
            report.certificate = Some(cert);
            let f = write_json(&path, &report)?;
            Ok((report, vec![f]))
        }
        Err(e) => {
            report.error = Some(e.to_string());
            write_json(&path, &report)?;
            Err(e.into())
        }
    }
}
