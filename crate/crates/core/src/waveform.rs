//! Transmit snapshot matrices and their sample covariance.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CMatrix;

/// Whether a block holds transmitted (`N × L`) or received (`M × L`) snapshots.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalRole {
    Transmit,
    Receive,
}

/// A complex snapshot matrix, one column per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalBlock {
    pub data: CMatrix,
    pub role: SignalRole,
}

impl SignalBlock {
    pub fn new(data: CMatrix, role: SignalRole) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(Error::InvalidArgument("signal block needs at least one row and one snapshot".into()));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("signal block has non-finite entries".into()));
        }
        Ok(Self { data, role })
    }

    pub fn transmit(data: CMatrix) -> Result<Self> {
        Self::new(data, SignalRole::Transmit)
    }

    pub fn receive(data: CMatrix) -> Result<Self> {
        Self::new(data, SignalRole::Receive)
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn snapshots(&self) -> usize {
        self.data.ncols()
    }

    /// `(1/L) X Xᴴ`.
    pub fn sample_covariance(&self) -> CMatrix {
        sample_covariance(&self.data)
    }
}

pub fn sample_covariance(x: &CMatrix) -> CMatrix {
    let l = x.ncols() as f64;
    let mut r = x * x.adjoint() / Complex64::from(l);
    // Exact Hermitian symmetry; the product only guarantees it to rounding.
    for j in 0..r.ncols() {
        r[(j, j)].im = 0.0;
        for i in 0..j {
            r[(j, i)] = r[(i, j)].conj();
        }
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaveformMode {
    /// Rows orthonormal, so the sample covariance is exactly `power · I`.
    #[default]
    Unitary,
    /// i.i.d. circular Gaussian entries of variance `power`.
    Gaussian,
}

/// Isotropic transmit block of `n` antennas over `l` snapshots.
pub fn generate_isotropic(n: usize, l: usize, power: f64, mode: WaveformMode, seed: u64) -> Result<SignalBlock> {
    if n == 0 || l == 0 {
        return Err(Error::InvalidArgument(format!("waveform needs N >= 1 and L >= 1, got {n}x{l}")));
    }
    if !(power > 0.0) || !power.is_finite() {
        return Err(Error::InvalidArgument(format!("waveform power must be positive, got {power}")));
    }
    if mode == WaveformMode::Unitary && l < n {
        return Err(Error::InvalidArgument(format!(
            "unitary waveform needs L >= N, got N = {n}, L = {l}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut x = CMatrix::from_fn(n, l, |_, _| complex_normal(&mut rng));
    match mode {
        WaveformMode::Gaussian => {
            x *= Complex64::from(power.sqrt());
        }
        WaveformMode::Unitary => {
            orthonormalize_rows(&mut x)?;
            x *= Complex64::from((l as f64 * power).sqrt());
        }
    }
    SignalBlock::transmit(x)
}

/// Standard circular complex normal, `E|z|² = 1`.
pub(crate) fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Modified Gram-Schmidt on the rows, applied twice for orthogonality at
/// rounding level.
fn orthonormalize_rows(x: &mut CMatrix) -> Result<()> {
    let (n, l) = x.shape();
    for _pass in 0..2 {
        for i in 0..n {
            for j in 0..i {
                // proj = <row_i, row_j> = Σ row_i conj(row_j)
                let mut proj = Complex64::new(0.0, 0.0);
                for c in 0..l {
                    proj += x[(i, c)] * x[(j, c)].conj();
                }
                for c in 0..l {
                    let v = x[(j, c)];
                    x[(i, c)] -= proj * v;
                }
            }
            let norm = (0..l).map(|c| x[(i, c)].norm_sqr()).sum::<f64>().sqrt();
            if !(norm > 1e-300) {
                return Err(Error::RankDeficient("waveform rows are linearly dependent".into()));
            }
            for c in 0..l {
                x[(i, c)] /= norm;
            }
        }
    }
    Ok(())
}

/// Transmit covariance `R_X` as seen by the bound computations.
#[derive(Debug, Clone, PartialEq)]
pub enum TxCovariance {
    /// Ideal isotropic transmission `power · I` of dimension `dim`. Usable
    /// even when `L < N`, where no finite block can realize it.
    Isotropic { power: f64, dim: usize },
    /// Any Hermitian PSD matrix, typically a sample covariance.
    Full(CMatrix),
}

impl TxCovariance {
    pub fn from_block(x: &SignalBlock) -> Self {
        TxCovariance::Full(x.sample_covariance())
    }

    pub fn dim(&self) -> usize {
        match self {
            TxCovariance::Isotropic { dim, .. } => *dim,
            TxCovariance::Full(r) => r.nrows(),
        }
    }

    /// `R_X^* B` (complex conjugate, not adjoint).
    pub fn conj_mul(&self, rhs: &CMatrix) -> CMatrix {
        match self {
            TxCovariance::Isotropic { power, .. } => rhs * Complex64::from(*power),
            TxCovariance::Full(r) => r.map(|z| z.conj()) * rhs,
        }
    }
}
