use sacfem::fem::{mass_form, prolong, Reaction};
use sacfem::harness::{reference_endpoints, run_experiment, strong_error, Axis, InitialCondition, StudyConfig};
use sacfem::noise::{sample_path, SeedSpec};
use sacfem::spectral::CovarianceSpec;
use sacfem::stepper::{Integrator, SchemeConfig};

fn study(axis: Axis, s: f64, trials: Vec<u32>, samples: u64) -> StudyConfig {
    StudyConfig {
        axis,
        covariance: CovarianceSpec::new(s).unwrap(),
        trial_exponents: trials,
        h_ref_exponent: 5,
        tau_ref_exponent: 8,
        samples,
        seed: 3,
        horizon: 1.0,
        initial: InitialCondition::SinePi,
        modes: None,
        reaction: Reaction::AllenCahn,
    }
}

#[test]
fn doubling_samples_shrinks_standard_error_by_about_root_two() {
    let small = strong_error(&study(Axis::Space, 1.5005, vec![2, 3], 200)).unwrap();
    let large = strong_error(&study(Axis::Space, 1.5005, vec![2, 3], 400)).unwrap();
    for (a, b) in small.iter().zip(&large) {
        let ratio = a.std_err / b.std_err;
        assert!((ratio - 2f64.sqrt()).abs() < 0.35, "ratio {ratio}");
    }
}

#[test]
fn coarse_error_exceeds_fine_error() {
    for (axis, trials) in [(Axis::Space, vec![2, 3, 4]), (Axis::Time, vec![2, 3, 4, 5])] {
        for s in [0.5005, 1.5005] {
            let rows = strong_error(&study(axis, s, trials.clone(), 40)).unwrap();
            assert!(rows.first().unwrap().rms_error > rows.last().unwrap().rms_error);
            assert!(rows.windows(2).all(|w| w[0].exponent < w[1].exponent));
        }
    }
}

#[test]
fn reference_endpoints_match_a_direct_integration() {
    let cfg = study(Axis::Space, 0.5005, vec![2], 3);
    let ends = reference_endpoints(&cfg, 2).unwrap();
    assert_eq!(ends.len(), 3);
    let mesh = cfg.reference_mesh().unwrap();
    let modes = cfg.mode_count().unwrap();
    let mut integ = Integrator::new(mesh, modes, SchemeConfig::new(cfg.tau_ref()).unwrap()).unwrap();
    let x0 = cfg.initial.project(&mesh).unwrap();
    for (i, end) in ends.iter().enumerate() {
        let path = sample_path(SeedSpec::new(cfg.seed, i as u64), cfg.covariance, modes, 256, 1.0).unwrap();
        let direct = integ.run(&x0, path.increments()).unwrap();
        assert_eq!(direct.state.coeffs(), end.state.coeffs());
        assert_eq!(end.step, 256);
    }
}

#[test]
fn study_errors_are_distances_to_the_shared_reference() {
    let cfg = study(Axis::Space, 1.5005, vec![3], 2);
    let rows = strong_error(&cfg).unwrap();
    let reference = reference_endpoints(&cfg, 1).unwrap();
    let mesh_ref = cfg.reference_mesh().unwrap();
    let coarse = sacfem::fem::UniformMesh::dyadic(3).unwrap();
    let modes = cfg.mode_count().unwrap();
    let mut integ = Integrator::new(coarse, modes, SchemeConfig::new(cfg.tau_ref()).unwrap()).unwrap();
    let x0 = cfg.initial.project(&coarse).unwrap();
    let mut sum = 0.0;
    for (i, r) in reference.iter().enumerate() {
        let path = sample_path(SeedSpec::new(cfg.seed, i as u64), cfg.covariance, modes, 256, 1.0).unwrap();
        let trial = prolong(&integ.run(&x0, path.increments()).unwrap().state, &mesh_ref).unwrap();
        let d: Vec<f64> = trial.coeffs().iter().zip(r.state.coeffs()).map(|(a, b)| a - b).collect();
        sum += mass_form(&mesh_ref, &d, &d);
    }
    let rms = (sum / 2.0).sqrt();
    assert!((rows[0].rms_error - rms).abs() <= 1e-14 * rms);
}

#[test]
fn report_echoes_config_and_seed() {
    let cfg = study(Axis::Time, 0.5005, vec![3, 4, 5], 8);
    let report = run_experiment(&cfg, 2).unwrap();
    assert_eq!(report.config, cfg);
    assert_eq!(report.seed(), 3);
    assert!((report.config.expected_slope() - 0.50025).abs() < 1e-12);
    let fit = report.fit.unwrap();
    let (lo, hi) = fit.slope_band();
    assert!(lo <= fit.slope && fit.slope <= hi);
}
