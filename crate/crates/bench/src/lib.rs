//! Fixtures shared by the kernel benchmarks.

use nearfield::estimator::{LikelihoodContext, DEFAULT_LOADING};
use nearfield::synth::simulate_received;
use nearfield::{build_upa, generate_isotropic, wavelength, Complex64, NoiseCovariance, Plane, Position3, Scene, SignalBlock, Target, WaveformMode};

/// Two 6×6 half-wavelength arrays at 28 GHz, two targets, 52 snapshots.
pub fn reference_scene() -> (Scene, SignalBlock) {
    let carrier = 28e9;
    let d = wavelength(carrier).expect("valid carrier") / 2.0;
    let tx = build_upa(6, 6, d, Position3::new(-0.05, 0.0, 0.0), Plane::Xy).expect("tx");
    let rx = build_upa(6, 6, d, Position3::new(0.05, 0.0, 0.0), Plane::Xy).expect("rx");
    let targets = vec![
        Target::new(Position3::new(-0.1, 0.05, 1.0), Complex64::new(1.0, 0.0)),
        Target::new(Position3::new(0.1, -0.05, 1.2), Complex64::new(0.0, 1.0)),
    ];
    let scene = Scene::new(tx, rx, targets, carrier, NoiseCovariance::isotropic(1e-12, 36).expect("noise")).expect("scene");
    let x = generate_isotropic(36, 52, 1.0, WaveformMode::Unitary, 1).expect("waveform");
    (scene, x)
}

pub fn reference_context() -> (Scene, LikelihoodContext) {
    let (scene, x) = reference_scene();
    let y = simulate_received(&scene, &x, 2).expect("simulate");
    let ctx = LikelihoodContext::from_scene(&scene, &y, &x, DEFAULT_LOADING).expect("context");
    (scene, ctx)
}
