//! Built-in oracle checks: closed-form Fisher information against finite
//! differences, steering derivatives, and bound scaling laws.

use std::process::ExitCode;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use nearfield::channel::{steering_derivative, steering_vector};
use nearfield::crb::{exact_position_crbs, numeric_fisher_oracle, numeric_joint_fisher, FdSteps};
use nearfield::{
    assemble_fisher, build_steering_set, build_upa, fisher_blocks, generate_isotropic, AmplitudeModel, ArrayGeometry, Axis,
    CMatrix, Complex64, NoiseCovariance, Plane, Position3, Result, Scene, Target, TxCovariance, WaveformMode,
};

fn random_array(rng: &mut ChaCha20Rng, count: usize, x0: f64) -> Result<ArrayGeometry> {
    let pts = (0..count)
        .map(|_| Position3::new(x0 + rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.1..0.1)))
        .collect();
    ArrayGeometry::new(pts)
}

fn random_pd(rng: &mut ChaCha20Rng, m: usize) -> Result<NoiseCovariance> {
    let a = CMatrix::from_fn(m, m, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let q = a.adjoint() * &a * Complex64::from(0.3) + CMatrix::identity(m, m);
    NoiseCovariance::full((&q + q.adjoint()) * Complex64::from(0.5))
}

fn fisher_check(rng: &mut ChaCha20Rng) -> Result<f64> {
    let (m, n) = (rng.random_range(3..=6), rng.random_range(3..=6));
    let k = rng.random_range(1..=3);
    let l = rng.random_range(4..=12);
    let tx = random_array(rng, n, -0.4)?;
    let rx = random_array(rng, m, 0.4)?;
    let targets = (0..k)
        .map(|_| {
            Target::new(
                Position3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(1.5..3.5)),
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            )
        })
        .collect();
    let scene = Scene::new(tx, rx, targets, 1e9, random_pd(rng, m)?)?;
    let x = generate_isotropic(n, l, 1.0, WaveformMode::Gaussian, rng.random())?;
    let st = build_steering_set(&scene.tx, &scene.rx, &scene.positions(), scene.wavenumber(), AmplitudeModel::Exact)?;
    let closed = assemble_fisher(&fisher_blocks(&st, &scene.coeffs(), &TxCovariance::from_block(&x), &scene.noise, l)?);
    let oracle = numeric_fisher_oracle(&scene, &x, FdSteps::default())?;
    Ok((closed - &oracle).norm() / oracle.norm())
}

fn derivative_check(rng: &mut ChaCha20Rng) -> Result<f64> {
    let e = Position3::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), 0.0);
    let t = Position3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.5..4.0));
    let array = ArrayGeometry::new(vec![e])?;
    let nu = 2.0 * std::f64::consts::PI / rng.random_range(0.05..1.0);
    let mut worst: f64 = 0.0;
    for axis in Axis::ALL {
        let analytic = steering_derivative(&array, &t, nu, axis, AmplitudeModel::Exact)?[0];
        let h = 1e-6 * t.distance(&e);
        let u = t.coord(axis);
        let plus = steering_vector(&array, &t.with_coord(axis, u + h), nu, AmplitudeModel::Exact)?[0];
        let minus = steering_vector(&array, &t.with_coord(axis, u - h), nu, AmplitudeModel::Exact)?[0];
        let numeric = (plus - minus) / (2.0 * h);
        let scale = analytic.norm().max(1e-3 * steering_vector(&array, &t, nu, AmplitudeModel::Exact)?[0].norm() * nu);
        worst = worst.max((analytic - numeric).norm() / scale);
    }
    Ok(worst)
}

fn scaling_check() -> Result<(f64, f64)> {
    let lambda = nearfield::wavelength(1e9)?;
    let arr = build_upa(3, 3, lambda / 2.0, Position3::ORIGIN, Plane::Xy)?;
    let targets = vec![
        Target::new(Position3::new(0.3, -0.2, 2.0), Complex64::new(1.0, 0.3)),
        Target::new(Position3::new(-0.4, 0.1, 2.6), Complex64::new(-0.2, 0.8)),
    ];
    let scene = Scene::new(arr.clone(), arr, targets, 1e9, NoiseCovariance::isotropic(1.0, 9)?)?;
    let x = generate_isotropic(9, 12, 1.0, WaveformMode::Unitary, 3)?;
    let x2 = nearfield::SignalBlock::transmit({
        let mut d = DMatrix::zeros(9, 24);
        d.view_mut((0, 0), (9, 12)).copy_from(&x.data);
        d.view_mut((0, 12), (9, 12)).copy_from(&x.data);
        d
    })?;
    let base = exact_position_crbs(&scene, &TxCovariance::from_block(&x), 12)?;
    let sigma2 = 0.037;
    let noisy = exact_position_crbs(&scene.with_noise(NoiseCovariance::isotropic(sigma2, 9)?)?, &TxCovariance::from_block(&x), 12)?;
    let doubled = exact_position_crbs(&scene, &TxCovariance::from_block(&x2), 24)?;
    let mut e_noise: f64 = 0.0;
    let mut e_snap: f64 = 0.0;
    for k in 0..2 {
        e_noise = e_noise.max((noisy[k] / base[k] - sigma2).abs() / sigma2);
        e_snap = e_snap.max((doubled[k] / base[k] - 0.5).abs() / 0.5);
    }
    Ok((e_noise, e_snap))
}

fn decoupling_check(rng: &mut ChaCha20Rng) -> Result<f64> {
    let tx = random_array(rng, 3, -0.4)?;
    let rx = random_array(rng, 3, 0.4)?;
    let t = Target::new(Position3::new(0.1, 0.2, 2.0), Complex64::new(0.7, -0.4));
    let scene = Scene::new(tx, rx, vec![t], 1e9, random_pd(rng, 3)?)?;
    let x = generate_isotropic(3, 6, 1.0, WaveformMode::Gaussian, rng.random())?;
    let joint = numeric_joint_fisher(&scene, &x, FdSteps::default())?;
    Ok(joint.view((0, 5), (5, joint.ncols() - 5)).norm())
}

fn report(name: &str, result: Result<(bool, String)>) -> bool {
    match result {
        Ok((pass, detail)) => {
            println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
            pass
        }
        Err(e) => {
            println!("FAIL {name}: {e}");
            false
        }
    }
}

pub fn run(seed: u64) -> ExitCode {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut all = true;
    all &= report(
        "fisher-oracle",
        (0..5)
            .map(|_| fisher_check(&mut rng))
            .collect::<Result<Vec<_>>>()
            .map(|errs| {
                let worst = errs.iter().cloned().fold(0.0, f64::max);
                (worst < 1e-5, format!("worst relative Frobenius error {worst:.3e} over 5 scenes"))
            }),
    );
    all &= report(
        "steering-derivatives",
        (0..100)
            .map(|_| derivative_check(&mut rng))
            .collect::<Result<Vec<_>>>()
            .map(|errs| {
                let worst = errs.iter().cloned().fold(0.0, f64::max);
                (worst < 1e-5, format!("worst relative error {worst:.3e} over 100 pairs"))
            }),
    );
    all &= report(
        "scaling-laws",
        scaling_check().map(|(n, s)| {
            (
                n < 1e-9 && s < 1e-9,
                format!("noise scaling error {n:.3e}, snapshot scaling error {s:.3e}"),
            )
        }),
    );
    all &= report(
        "noise-decoupling",
        decoupling_check(&mut rng).map(|c| (c == 0.0, format!("position/noise cross-information norm {c:e}"))),
    );
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
