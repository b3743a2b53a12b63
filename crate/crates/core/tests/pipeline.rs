use std::path::Path;

use nearfield::estimator::{aco_localize, LikelihoodContext};
use nearfield::synth::{simulate_noiseless, simulate_received};
use nearfield::{
    build_upa, generate_isotropic, run_sweep, AcoConfig, Complex64, NoiseCovariance, Plane, Position3, Scenario,
    Scene, SearchGrid, SweepConfig, Target, WaveformMode,
};

fn small_scene(targets: Vec<Target>) -> Scene {
    let fc = 0.625e9;
    let d = nearfield::wavelength(fc).unwrap() / 2.0;
    let tx = build_upa(4, 4, d, Position3::new(-0.6, 0.0, 0.0), Plane::Xy).unwrap();
    let rx = build_upa(4, 4, d, Position3::new(0.6, 0.0, 0.0), Plane::Xy).unwrap();
    Scene::new(tx, rx, targets, fc, NoiseCovariance::isotropic(1.0, 16).unwrap()).unwrap()
}

fn small_grid(stages: usize) -> SearchGrid {
    SearchGrid::new(Position3::new(-1.0, -1.0, 2.0), Position3::new(1.0, 1.0, 4.0), [11, 11, 11])
        .unwrap()
        .with_refinement([7, 7, 7], 4.0, stages)
        .unwrap()
}

#[test]
fn single_target_noiseless_within_final_pitch() {
    let truth = Position3::new(0.23, -0.41, 2.87);
    let scene = small_scene(vec![Target::new(truth, Complex64::new(0.6, -0.8))]);
    let x = generate_isotropic(16, 24, 1.0, WaveformMode::Unitary, 5).unwrap();
    let y = simulate_noiseless(&scene, &x).unwrap();
    let ctx = LikelihoodContext::from_scene(&scene, &y, &x, 1.0).unwrap();
    let cfg = AcoConfig::new(small_grid(6));
    let loc = aco_localize(&ctx, 1, &cfg).unwrap();
    let pitch = cfg.grid.final_pitch();
    let d = loc.positions[0].sub(&truth);
    assert!(d.x.abs() <= pitch[0] && d.y.abs() <= pitch[1] && d.z.abs() <= pitch[2], "{d:?} vs {pitch:?}");
    assert!(loc.converged);
}

#[test]
fn noiseless_sweep_meets_quantization_bound() {
    let scenario = Scenario::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/two_targets.toml")).unwrap();
    let x = scenario.waveform().unwrap();
    let mut cfg = scenario.sweep_config().unwrap();
    cfg.trials = 1;
    cfg.snr_db = vec![10.0];
    cfg.noiseless = true;
    cfg.loading = 1.0;
    let report = run_sweep(&scenario.scene, &x, &cfg).unwrap();
    let p = cfg.aco.grid.final_pitch();
    let bound = 3.0 * p.iter().fold(0.0f64, |m, v| m.max(*v)).powi(2);
    for row in &report.rows {
        assert_eq!(row.trials_ok, 1);
        assert!(row.mse_m2 <= bound, "target {}: {} > {bound}", row.target_index, row.mse_m2);
        assert!(row.crb_m2 > 0.0);
    }
}

fn sweep_config(trials: usize) -> SweepConfig {
    SweepConfig {
        snr_db: vec![5.0, 15.0],
        trials,
        master_seed: 11,
        aco: AcoConfig::new(small_grid(2)),
        loading: nearfield::estimator::DEFAULT_LOADING,
        noiseless: false,
    }
}

fn two_targets() -> Scene {
    small_scene(vec![
        Target::new(Position3::new(-0.4, 0.3, 2.5), Complex64::new(1.0, 0.0)),
        Target::new(Position3::new(0.5, -0.2, 3.5), Complex64::new(0.0, 1.0)),
    ])
}

#[test]
fn sweep_is_reproducible_and_subsets_rerun_identically() {
    let scene = two_targets();
    let x = generate_isotropic(16, 24, 1.0, WaveformMode::Unitary, 3).unwrap();
    let a = run_sweep(&scene, &x, &sweep_config(3)).unwrap();
    let b = run_sweep(&scene, &x, &sweep_config(3)).unwrap();
    assert_eq!(a.rows, b.rows);
    let sub = run_sweep(&scene, &x, &sweep_config(2)).unwrap();
    for t in &sub.trials {
        let full = a.trials.iter().find(|r| r.snr_db == t.snr_db && r.trial == t.trial).unwrap();
        assert_eq!(full, t);
    }
}

#[test]
fn sweep_reports_every_target_at_every_snr() {
    let scene = two_targets();
    let x = generate_isotropic(16, 24, 1.0, WaveformMode::Unitary, 3).unwrap();
    let report = run_sweep(&scene, &x, &sweep_config(2)).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert_eq!(report.trials.len(), 4);
    for row in &report.rows {
        assert!(row.mse_m2 >= 0.0 && row.crb_m2 > 0.0);
        assert_eq!(row.trials_ok + row.trials_failed, 2);
    }
    // CRB scales with the noise level: 10 dB apart.
    let ratio = report.rows[0].crb_m2 / report.rows[2].crb_m2;
    assert!((ratio - 10.0).abs() < 1e-6 * 10.0, "{ratio}");
}

#[test]
fn moderate_snr_single_target_is_near_truth() {
    let truth = Position3::new(0.1, 0.2, 3.1);
    let scene = small_scene(vec![Target::new(truth, Complex64::new(1.0, 0.0))]);
    let x = generate_isotropic(16, 64, 1.0, WaveformMode::Unitary, 8).unwrap();
    let scene = scene.with_noise(nearfield::synth::noise_for_snr(&scene, &x, 10.0).unwrap()).unwrap();
    let y = simulate_received(&scene, &x, 21).unwrap();
    let ctx = LikelihoodContext::from_scene(&scene, &y, &x, nearfield::estimator::DEFAULT_LOADING).unwrap();
    let grid = SearchGrid::new(Position3::new(-1.0, -1.0, 2.0), Position3::new(1.0, 1.0, 4.0), [21, 21, 21])
        .unwrap()
        .with_refinement([9, 9, 9], 5.0, 4)
        .unwrap();
    let loc = aco_localize(&ctx, 1, &AcoConfig::new(grid)).unwrap();
    let crb = nearfield::crb::exact_position_crbs(&scene, &nearfield::TxCovariance::from_block(&x), 64).unwrap()[0];
    let err = loc.positions[0].distance(&truth);
    assert!(err * err < 100.0 * crb, "error {err} m, CRB {crb} m^2");
}
