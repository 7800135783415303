use robust_consensus::exec::Exec;
use robust_consensus::gpc::GpcBasis;
use robust_consensus::meanfield::{run_mc_sg, McSgConfig};
use robust_consensus::model::{ControlLaw, InputLaw, ModelParams, UncertaintySpec};
use robust_consensus::riccati::{solve_finite_n_gains, GainSchedule};
use robust_consensus::sim::{run_micro_sg, InitialCondition, MicroSetup, TimeGrid};

fn setup(unc: UncertaintySpec, control: ControlLaw, seed: u64) -> MicroSetup {
    let n = 500;
    let params = ModelParams::new(n, 1, 1.0, 0.01, 0.0, unc.len()).unwrap();
    let gains = solve_finite_n_gains(&params).unwrap();
    MicroSetup {
        v0: InitialCondition::UniformBox { low: 10.0, high: 20.0 }.sample(n, 1, seed).unwrap(),
        params,
        unc,
        gains: GainSchedule::Constant(gains),
        control,
        grid: TimeGrid { t_final: 1.0, dt: 1e-3, snapshots: 20 },
    }
}

fn inputs() -> UncertaintySpec {
    UncertaintySpec::new(vec![InputLaw::Gaussian { mu: 0.0, sigma2: 5.0 }, InputLaw::Uniform { a: -5.0, b: 5.0 }]).unwrap()
}

#[test]
fn density_mass_and_first_moment() {
    let cfg = McSgConfig { bins: 50, quad_len: 6 };
    for control in [ControlLaw::Feedback, ControlLaw::Averaged] {
        let s = setup(inputs(), control, 4);
        let basis = GpcBasis::from_uncertainty(&s.unc, 3);
        let d = run_mc_sg(&s, &basis, &cfg, Exec::Parallel).unwrap();
        let micro = run_micro_sg(&s, &basis, &basis.moments(6).unwrap(), Exec::Parallel).unwrap();
        for (t, snap) in d.snapshots.iter().enumerate() {
            assert!((snap.mean.integral() - 1.0).abs() < 1e-10);
            assert!(snap.mean.mass.iter().all(|&m| m >= 0.0));
            assert!(snap.std.iter().all(|&s| s >= 0.0));
            let width = snap.mean.width(0);
            assert!((snap.mean.first_moment() - micro.agent_mean(t)[0]).abs() <= width, "{control:?} t = {t}");
            assert!((d.particle_mean[t] - micro.agent_mean(t)[0]).abs() < 1e-12);
        }
    }
}

#[test]
fn no_noise_no_spread_and_reproducible() {
    let unc = UncertaintySpec::new(vec![InputLaw::Gaussian { mu: 0.0, sigma2: 0.0 }]).unwrap();
    let s = setup(unc, ControlLaw::Feedback, 1);
    let basis = GpcBasis::from_uncertainty(&s.unc, 2);
    let cfg = McSgConfig { bins: 30, quad_len: 4 };
    let a = run_mc_sg(&s, &basis, &cfg, Exec::Sequential).unwrap();
    assert!(a.snapshots.iter().all(|s| s.std.iter().all(|&x| x < 1e-9)));
    let b = run_mc_sg(&s, &basis, &cfg, Exec::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn feedback_concentrates_the_density() {
    let cfg = McSgConfig { bins: 50, quad_len: 6 };
    let s = setup(inputs(), ControlLaw::Feedback, 2);
    let basis = GpcBasis::from_uncertainty(&s.unc, 2);
    let d = run_mc_sg(&s, &basis, &cfg, Exec::Parallel).unwrap();
    let (first, last) = (&d.snapshots[0].mean, &d.snapshots.last().unwrap().mean);
    let support = |h: &robust_consensus::meanfield::Histogram| h.mass.iter().filter(|&&m| m > 1e-12).count();
    assert!(support(last) < support(first));
    assert!(last.first_moment().abs() < 1.0);
}
