//! Received-data simulation under the exact spherical-wavefront model.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::channel::{steering_matrix, AmplitudeModel};
use crate::error::{Error, Result};
use crate::numerics::CMatrix;
use crate::scene::{NoiseCovariance, Scene};
use crate::waveform::{complex_normal, SignalBlock};

/// `M × L` noise block with i.i.d. `CN(0, Q)` columns, colored through the
/// Cholesky factor of `Q`.
pub fn draw_noise(noise: &NoiseCovariance, snapshots: usize, seed: u64) -> Result<SignalBlock> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    draw_noise_with(noise, snapshots, &mut rng)
}

pub fn draw_noise_with<R: Rng + ?Sized>(noise: &NoiseCovariance, snapshots: usize, rng: &mut R) -> Result<SignalBlock> {
    if snapshots == 0 {
        return Err(Error::InvalidArgument("noise block needs at least one snapshot".into()));
    }
    let m = noise.dim();
    let white = CMatrix::from_fn(m, snapshots, |_, _| complex_normal(rng));
    let z = match noise {
        NoiseCovariance::Isotropic { sigma2, .. } => white * Complex64::from(sigma2.sqrt()),
        NoiseCovariance::Full { .. } => noise.coloring_factor() * white,
    };
    SignalBlock::receive(z)
}

/// Noise-free echo `A diag(b) Vᵀ X` of the scene's targets.
pub fn noise_free_signal(scene: &Scene, x: &SignalBlock) -> Result<CMatrix> {
    if x.rows() != scene.tx.len() {
        return Err(Error::DimensionMismatch(format!(
            "waveform has {} rows but the transmit array has {} elements",
            x.rows(),
            scene.tx.len()
        )));
    }
    let m = scene.rx.len();
    if scene.targets.is_empty() {
        return Ok(CMatrix::zeros(m, x.snapshots()));
    }
    let nu = scene.wavenumber();
    let positions = scene.positions();
    let mut a = steering_matrix(&scene.rx, &positions, nu, AmplitudeModel::Exact)?;
    let v = steering_matrix(&scene.tx, &positions, nu, AmplitudeModel::Exact)?;
    for (k, t) in scene.targets.iter().enumerate() {
        for e in a.column_mut(k).iter_mut() {
            *e *= t.coeff;
        }
    }
    let s = v.transpose() * &x.data;
    Ok(a * s)
}

/// `Y = A diag(b) Vᵀ X + Z`.
pub fn simulate_received(scene: &Scene, x: &SignalBlock, seed: u64) -> Result<SignalBlock> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    simulate_received_with(scene, x, &mut rng)
}

pub fn simulate_received_with<R: Rng + ?Sized>(scene: &Scene, x: &SignalBlock, rng: &mut R) -> Result<SignalBlock> {
    let s = noise_free_signal(scene, x)?;
    let z = draw_noise_with(&scene.noise, x.snapshots(), rng)?;
    SignalBlock::receive(s + z.data)
}

/// Received data with the noise term suppressed.
pub fn simulate_noiseless(scene: &Scene, x: &SignalBlock) -> Result<SignalBlock> {
    SignalBlock::receive(noise_free_signal(scene, x)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr {
    pub linear: f64,
    pub db: f64,
}

impl Snr {
    pub fn from_linear(linear: f64) -> Self {
        Self {
            linear,
            db: 10.0 * linear.log10(),
        }
    }
}

/// `Σ_l ‖A B Vᵀ x_l‖² / Σ_l ‖z_l‖²`.
pub fn empirical_snr(scene: &Scene, x: &SignalBlock, z: &SignalBlock) -> Result<Snr> {
    if z.snapshots() != x.snapshots() {
        return Err(Error::DimensionMismatch(format!(
            "signal has {} snapshots, noise has {}",
            x.snapshots(),
            z.snapshots()
        )));
    }
    let signal = noise_free_signal(scene, x)?.norm_squared();
    let noise = z.data.norm_squared();
    if noise == 0.0 {
        return Err(Error::InvalidArgument("noise block has zero energy".into()));
    }
    Ok(Snr::from_linear(signal / noise))
}

/// Mean noise-free energy per snapshot, `(1/L) Σ_l ‖A B Vᵀ x_l‖²`.
pub fn signal_energy_per_snapshot(scene: &Scene, x: &SignalBlock) -> Result<f64> {
    Ok(noise_free_signal(scene, x)?.norm_squared() / x.snapshots() as f64)
}

/// Rescales the scene's noise covariance so that the expected SNR
/// `E‖A B Vᵀ x_l‖² / tr(Q)` equals `snr_db`, keeping the shape of `Q`.
pub fn noise_for_snr(scene: &Scene, x: &SignalBlock, snr_db: f64) -> Result<NoiseCovariance> {
    let energy = signal_energy_per_snapshot(scene, x)?;
    if !(energy > 0.0) {
        return Err(Error::InvalidArgument("scene has no signal energy; SNR is undefined".into()));
    }
    let target_trace = energy / 10f64.powf(snr_db / 10.0);
    scene.noise.scaled(target_trace / scene.noise.trace())
}
