//! Fisher information and Cramér-Rao bounds for target positions and
//! reflection coefficients.
//!
//! Parameters are ordered `[x_1..x_K, y_1..y_K, z_1..z_K, Re b_1..Re b_K,
//! Im b_1..Im b_K]`. The Fisher matrix is assembled from ten complex `K × K`
//! blocks, each a short sum of Hadamard products between a receive-side
//! Gram matrix (through `Q⁻¹`) and a transmit-side Gram matrix (through
//! `R_X^*`). The noise-covariance parameters are decoupled from these and
//! are never assembled.

use std::f64::consts::PI;

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::channel::{build_steering_set, steering_matrix, AmplitudeModel, SteeringSet};
use crate::error::{Error, Result};
use crate::numerics::{scale_rows_cols, CMatrix, Cholesky, RMatrix};
use crate::scene::{NoiseCovariance, Position3, Scene};
use crate::waveform::{SignalBlock, TxCovariance};

/// Default cap on the equilibrated Fisher condition number.
pub const DEFAULT_CONDITION_CAP: f64 = 1e12;

/// The ten complex `K × K` blocks of the Fisher matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherBlocks {
    pub xx: CMatrix,
    pub yy: CMatrix,
    pub zz: CMatrix,
    pub xy: CMatrix,
    pub xz: CMatrix,
    pub yz: CMatrix,
    pub xb: CMatrix,
    pub yb: CMatrix,
    pub zb: CMatrix,
    pub bb: CMatrix,
}

impl FisherBlocks {
    pub fn num_targets(&self) -> usize {
        self.bb.nrows()
    }

    /// All ten blocks set to the same matrix.
    pub fn uniform(block: CMatrix) -> Self {
        Self {
            xx: block.clone(),
            yy: block.clone(),
            zz: block.clone(),
            xy: block.clone(),
            xz: block.clone(),
            yz: block.clone(),
            xb: block.clone(),
            yb: block.clone(),
            zb: block.clone(),
            bb: block,
        }
    }
}

fn sub(m: &CMatrix, bi: usize, bj: usize, k: usize) -> CMatrix {
    m.view((bi * k, bj * k), (k, k)).into_owned()
}

fn hstack(parts: [&CMatrix; 4]) -> CMatrix {
    let rows = parts[0].nrows();
    let k = parts[0].ncols();
    let mut out = CMatrix::zeros(rows, 4 * k);
    for (i, p) in parts.iter().enumerate() {
        out.view_mut((0, i * k), (rows, k)).copy_from(*p);
    }
    out
}

/// Closed-form Fisher blocks for steering set `st`, coefficients `b`,
/// transmit covariance `r_x`, noise covariance `q` and `snapshots` symbols.
pub fn fisher_blocks(
    st: &SteeringSet,
    b: &[Complex64],
    r_x: &TxCovariance,
    q: &NoiseCovariance,
    snapshots: usize,
) -> Result<FisherBlocks> {
    let k = st.num_targets();
    if b.len() != k {
        return Err(Error::DimensionMismatch(format!("{} coefficients for {k} targets", b.len())));
    }
    if q.dim() != st.a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "noise covariance is {0}x{0}, receive steering has {1} rows",
            q.dim(),
            st.a.nrows()
        )));
    }
    if r_x.dim() != st.v.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "transmit covariance is {0}x{0}, transmit steering has {1} rows",
            r_x.dim(),
            st.v.nrows()
        )));
    }

    // Index 0 is the steering matrix itself, 1..=3 its x/y/z derivatives.
    let a_all = hstack([&st.a, &st.da[0], &st.da[1], &st.da[2]]);
    let v_all = hstack([&st.v, &st.dv[0], &st.dv[1], &st.dv[2]]);
    let rx_gram = a_all.adjoint() * q.solve(&a_all);
    let tx_gram = v_all.adjoint() * r_x.conj_mul(&v_all);

    let l = Complex64::from(snapshots as f64);
    let p = |i: usize, j: usize| sub(&rx_gram, i, j, k);
    let t = |i: usize, j: usize| sub(&tx_gram, i, j, k);
    // B^* M B and B^* M
    let bmb = |m: CMatrix| scale_rows_cols(&m, Some(b), Some(b));
    let bm = |m: CMatrix| scale_rows_cols(&m, Some(b), None);

    let f_uv = |u: usize, v: usize| -> CMatrix {
        (p(u, v).component_mul(&bmb(t(0, 0)))
            + p(u, 0).component_mul(&bmb(t(0, v)))
            + p(0, v).component_mul(&bmb(t(u, 0)))
            + p(0, 0).component_mul(&bmb(t(u, v))))
            * l
    };
    let f_ub = |u: usize| -> CMatrix {
        (p(u, 0).component_mul(&bm(t(0, 0))) + p(0, 0).component_mul(&bm(t(u, 0)))) * l
    };

    Ok(FisherBlocks {
        xx: f_uv(1, 1),
        yy: f_uv(2, 2),
        zz: f_uv(3, 3),
        xy: f_uv(1, 2),
        xz: f_uv(1, 3),
        yz: f_uv(2, 3),
        xb: f_ub(1),
        yb: f_ub(2),
        zb: f_ub(3),
        bb: p(0, 0).component_mul(&t(0, 0)) * l,
    })
}

/// Real `5K × 5K` Fisher matrix from its complex blocks.
///
/// Diagonal blocks use the Hermitian part of their complex block, so the
/// output is exactly symmetric for any input.
pub fn assemble_fisher(blocks: &FisherBlocks) -> RMatrix {
    let k = blocks.num_targets();
    let re = |m: &CMatrix| m.map(|z| z.re);
    let neg_im = |m: &CMatrix| m.map(|z| -z.im);
    let herm_re = |m: &CMatrix| {
        let r = re(m);
        (&r + r.transpose()) * 0.5
    };

    // Upper triangle of the 5x5 block layout; the lower one is its transpose.
    let mut upper: Vec<(usize, usize, RMatrix)> = vec![
        (0, 0, herm_re(&blocks.xx)),
        (0, 1, re(&blocks.xy)),
        (0, 2, re(&blocks.xz)),
        (0, 3, re(&blocks.xb)),
        (0, 4, neg_im(&blocks.xb)),
        (1, 1, herm_re(&blocks.yy)),
        (1, 2, re(&blocks.yz)),
        (1, 3, re(&blocks.yb)),
        (1, 4, neg_im(&blocks.yb)),
        (2, 2, herm_re(&blocks.zz)),
        (2, 3, re(&blocks.zb)),
        (2, 4, neg_im(&blocks.zb)),
        (3, 3, herm_re(&blocks.bb)),
        (3, 4, neg_im(&blocks.bb)),
        (4, 4, herm_re(&blocks.bb)),
    ];
    let mut f = RMatrix::zeros(5 * k, 5 * k);
    for (bi, bj, m) in upper.drain(..) {
        f.view_mut((bi * k, bj * k), (k, k)).copy_from(&(&m * 2.0));
        if bi != bj {
            f.view_mut((bj * k, bi * k), (k, k)).copy_from(&(m.transpose() * 2.0));
        }
    }
    f
}

/// Inverse of a Fisher matrix with the Cholesky condition estimate of its
/// equilibrated form.
#[derive(Debug, Clone)]
pub struct CrbMatrix {
    pub matrix: RMatrix,
    pub condition: f64,
}

/// `C = F⁻¹`, refusing ill-conditioned input.
///
/// The matrix is first equilibrated to `D^{-1/2} F D^{-1/2}`, which removes
/// the unit mismatch between position and coefficient parameters. It is
/// rejected when its Cholesky factorization fails or the Cholesky condition
/// estimate exceeds `condition_cap`; the error then names the smallest
/// equilibrated eigenvalue and the parameter carrying most of its
/// eigenvector.
pub fn crb_matrix(fisher: &RMatrix, condition_cap: f64) -> Result<CrbMatrix> {
    let n = fisher.nrows();
    if fisher.ncols() != n {
        return Err(Error::DimensionMismatch(format!("Fisher matrix is {}x{}", n, fisher.ncols())));
    }
    let mut scale = Vec::with_capacity(n);
    for i in 0..n {
        let d = fisher[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Identifiability {
                eigenvalue: d,
                index: i,
                condition: f64::INFINITY,
                cap: condition_cap,
            });
        }
        scale.push(1.0 / d.sqrt());
    }
    let eq = RMatrix::from_fn(n, n, |i, j| fisher[(i, j)] * scale[i] * scale[j]);
    let eq = (&eq + eq.transpose()) * 0.5;
    let reject = |condition: f64| {
        let eig = SymmetricEigen::new(eq.clone());
        let (imin, &lmin) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty");
        Error::Identifiability {
            eigenvalue: lmin,
            index: eig.eigenvectors.column(imin).iamax(),
            condition,
            cap: condition_cap,
        }
    };
    let chol = Cholesky::new(&eq).map_err(|_| reject(f64::INFINITY))?;
    let condition = chol.condition_estimate();
    if !(condition <= condition_cap) {
        return Err(reject(condition));
    }
    let inv = chol.inverse();
    let mut c = RMatrix::from_fn(n, n, |i, j| inv[(i, j)] * scale[i] * scale[j]);
    c = (&c + c.transpose()) * 0.5;
    Ok(CrbMatrix { matrix: c, condition })
}

/// Position bound of target `k` (0-based): the sum of the x, y and z
/// diagonal entries, in m².
pub fn position_crb(c: &RMatrix, k: usize) -> Result<f64> {
    let n = c.nrows();
    if n % 5 != 0 || c.ncols() != n {
        return Err(Error::DimensionMismatch(format!("CRB matrix is {}x{}, expected 5K x 5K", n, c.ncols())));
    }
    let kk = n / 5;
    if k >= kk {
        return Err(Error::InvalidArgument(format!("target index {k} out of range for K = {kk}")));
    }
    Ok(c[(k, k)] + c[(k + kk, k + kk)] + c[(k + 2 * kk, k + 2 * kk)])
}

/// Blocks, assembled Fisher matrix and its inverse for one scene.
#[derive(Debug, Clone)]
pub struct FisherBundle {
    pub blocks: FisherBlocks,
    pub fisher: RMatrix,
    pub crb: RMatrix,
    pub condition: f64,
}

impl FisherBundle {
    pub fn from_blocks(blocks: FisherBlocks, condition_cap: f64) -> Result<Self> {
        let fisher = assemble_fisher(&blocks);
        let CrbMatrix { matrix, condition } = crb_matrix(&fisher, condition_cap)?;
        Ok(Self {
            blocks,
            fisher,
            crb: matrix,
            condition,
        })
    }

    /// Bundle for the scene's ground truth under the given amplitude model.
    /// The constant model uses the path-loss-normalized coefficients from
    /// [`constant_model_coefficients`].
    pub fn for_scene(
        scene: &Scene,
        r_x: &TxCovariance,
        snapshots: usize,
        model: AmplitudeModel,
        condition_cap: f64,
    ) -> Result<Self> {
        let positions = scene.positions();
        let st = build_steering_set(&scene.tx, &scene.rx, &positions, scene.wavenumber(), model)?;
        let b = match model {
            AmplitudeModel::Exact => scene.coeffs(),
            AmplitudeModel::Constant => constant_model_coefficients(scene),
        };
        let blocks = fisher_blocks(&st, &b, r_x, &scene.noise, snapshots)?;
        Self::from_blocks(blocks, condition_cap)
    }

    pub fn num_targets(&self) -> usize {
        self.blocks.num_targets()
    }

    pub fn position_crbs(&self) -> Vec<f64> {
        (0..self.num_targets())
            .map(|k| position_crb(&self.crb, k).expect("index in range"))
            .collect()
    }
}

/// Per-target position bounds under the exact amplitude model.
pub fn exact_position_crbs(scene: &Scene, r_x: &TxCovariance, snapshots: usize) -> Result<Vec<f64>> {
    Ok(FisherBundle::for_scene(scene, r_x, snapshots, AmplitudeModel::Exact, DEFAULT_CONDITION_CAP)?.position_crbs())
}

/// Coefficients with the round-trip path loss to the array reference
/// points folded in: `b̃ = (λ/4π)² √(G_r G_t) b / (‖l_o^r - l‖ ‖l_o^t - l‖)`.
pub fn constant_model_coefficients(scene: &Scene) -> Vec<Complex64> {
    let lambda = scene.wavelength();
    let gain = (scene.rx.gain() * scene.tx.gain()).sqrt();
    scene
        .targets
        .iter()
        .map(|t| {
            let dr = scene.rx.reference().distance(&t.position);
            let dt = scene.tx.reference().distance(&t.position);
            t.coeff * ((lambda / (4.0 * PI)).powi(2) * gain / (dr * dt))
        })
        .collect()
}

/// Per-target position bounds under the constant-amplitude comparison model.
pub fn constant_amplitude_crb(scene: &Scene, r_x: &TxCovariance, snapshots: usize) -> Result<Vec<f64>> {
    Ok(
        FisherBundle::for_scene(scene, r_x, snapshots, AmplitudeModel::Constant, DEFAULT_CONDITION_CAP)?
            .position_crbs(),
    )
}

/// Relative finite-difference steps for the numeric oracle.
#[derive(Debug, Clone, Copy)]
pub struct FdSteps {
    /// Position step as a fraction of the target's distance to the Rx reference.
    pub position: f64,
    /// Coefficient step as a fraction of `1 + |b|`.
    pub coeff: f64,
}

impl Default for FdSteps {
    fn default() -> Self {
        Self {
            position: 1e-6,
            coeff: 1e-6,
        }
    }
}

/// Mean of the received data, `A(θ) diag(b(θ)) V(θ)ᵀ X`, for parameter vector θ.
fn model_mean(scene: &Scene, x: &CMatrix, theta: &[f64]) -> Result<CMatrix> {
    let k = theta.len() / 5;
    let positions: Vec<Position3> = (0..k)
        .map(|i| Position3::new(theta[i], theta[k + i], theta[2 * k + i]))
        .collect();
    let nu = scene.wavenumber();
    let mut a = steering_matrix(&scene.rx, &positions, nu, AmplitudeModel::Exact)?;
    let v = steering_matrix(&scene.tx, &positions, nu, AmplitudeModel::Exact)?;
    for i in 0..k {
        let b = Complex64::new(theta[3 * k + i], theta[4 * k + i]);
        for e in a.column_mut(i).iter_mut() {
            *e *= b;
        }
    }
    Ok(a * (v.transpose() * x))
}

fn theta_of(scene: &Scene) -> Vec<f64> {
    let k = scene.targets.len();
    let mut theta = vec![0.0; 5 * k];
    for (i, t) in scene.targets.iter().enumerate() {
        theta[i] = t.position.x;
        theta[k + i] = t.position.y;
        theta[2 * k + i] = t.position.z;
        theta[3 * k + i] = t.coeff.re;
        theta[4 * k + i] = t.coeff.im;
    }
    theta
}

fn param_steps(scene: &Scene, steps: FdSteps) -> Vec<f64> {
    let k = scene.targets.len();
    let mut h = vec![0.0; 5 * k];
    for (i, t) in scene.targets.iter().enumerate() {
        let d = scene.rx.reference().distance(&t.position).max(1e-3);
        for axis in 0..3 {
            h[axis * k + i] = steps.position * d;
        }
        let hb = steps.coeff * (1.0 + t.coeff.norm());
        h[3 * k + i] = hb;
        h[4 * k + i] = hb;
    }
    h
}

/// Central-difference derivatives of the mean with respect to each of the 5K parameters.
fn mean_derivatives(scene: &Scene, x: &CMatrix, steps: FdSteps) -> Result<Vec<CMatrix>> {
    let theta = theta_of(scene);
    let h = param_steps(scene, steps);
    (0..theta.len())
        .map(|i| {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[i] += h[i];
            minus[i] -= h[i];
            let d = model_mean(scene, x, &plus)? - model_mean(scene, x, &minus)?;
            Ok(d / Complex64::from(plus[i] - minus[i]))
        })
        .collect()
}

/// Fisher matrix of θ computed directly from the Gaussian-mean formula
/// `F_ij = 2 Re tr[(∂μ/∂θ_i)ᴴ Q⁻¹ (∂μ/∂θ_j)]`, with the mean derivatives
/// taken by central finite differences. Independent of the closed-form
/// blocks; used to cross-check them.
pub fn numeric_fisher_oracle(scene: &Scene, x: &SignalBlock, steps: FdSteps) -> Result<RMatrix> {
    if x.rows() != scene.tx.len() {
        return Err(Error::DimensionMismatch("waveform rows must match transmit elements".into()));
    }
    let derivs = mean_derivatives(scene, &x.data, steps)?;
    let whitened: Vec<CMatrix> = derivs.iter().map(|d| scene.noise.solve(d)).collect();
    let n = derivs.len();
    let mut f = RMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let s: Complex64 = derivs[i].iter().zip(whitened[j].iter()).map(|(a, b)| a.conj() * b).sum();
            f[(i, j)] = 2.0 * s.re;
        }
    }
    Ok(f)
}

/// Hermitian basis of the noise covariance: one real diagonal direction per
/// element, plus a real and an imaginary direction per off-diagonal pair.
fn q_basis(m: usize) -> Vec<CMatrix> {
    let mut basis = Vec::with_capacity(m * m);
    for i in 0..m {
        let mut e = CMatrix::zeros(m, m);
        e[(i, i)] = Complex64::new(1.0, 0.0);
        basis.push(e);
    }
    for j in 0..m {
        for i in 0..j {
            let mut e = CMatrix::zeros(m, m);
            e[(i, j)] = Complex64::new(1.0, 0.0);
            e[(j, i)] = Complex64::new(1.0, 0.0);
            basis.push(e);
            let mut e = CMatrix::zeros(m, m);
            e[(i, j)] = Complex64::new(0.0, 1.0);
            e[(j, i)] = Complex64::new(0.0, -1.0);
            basis.push(e);
        }
    }
    basis
}

/// Joint `(5K + M²)`-dimensional Fisher matrix over θ and the real
/// parameters of `Q`, using the full Gaussian formula with both a
/// covariance term and a mean term. Derivatives of the mean and of the
/// covariance are both taken by central differences, so the θ/Q coupling
/// is measured rather than assumed.
pub fn numeric_joint_fisher(scene: &Scene, x: &SignalBlock, steps: FdSteps) -> Result<RMatrix> {
    let q = scene.noise.to_dense();
    let m = q.nrows();
    let l = x.snapshots() as f64;
    let k5 = 5 * scene.targets.len();
    let basis = q_basis(m);
    let n = k5 + basis.len();
    let q_scale = q.diagonal().iter().map(|z| z.re).fold(0.0, f64::max);
    let hq = steps.coeff * q_scale;

    let mean_derivs = mean_derivatives(scene, &x.data, steps)?;
    let zero_mean = CMatrix::zeros(m, x.snapshots());
    let mut dmu: Vec<CMatrix> = mean_derivs;
    let mut dq: Vec<CMatrix> = vec![CMatrix::zeros(m, m); k5];
    for e in &basis {
        // The mean does not depend on Q, and θ does not enter Q; both facts
        // come out of the differences below rather than being imposed.
        let qp = &q + e * Complex64::from(hq);
        let qm = &q - e * Complex64::from(hq);
        dq.push((qp - qm) / Complex64::from(2.0 * hq));
        dmu.push(zero_mean.clone());
    }
    let qchol = Cholesky::new(&q)?;
    let qinv_dq: Vec<CMatrix> = dq.iter().map(|d| qchol.solve(d)).collect();
    let qinv_dmu: Vec<CMatrix> = dmu.iter().map(|d| qchol.solve(d)).collect();
    let mut f = RMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let cov_term = (&qinv_dq[i] * &qinv_dq[j]).trace().re * l;
            let mean_term: Complex64 = dmu[i].iter().zip(qinv_dmu[j].iter()).map(|(a, b)| a.conj() * b).sum();
            let v = cov_term + 2.0 * mean_term.re;
            f[(i, j)] = v;
            f[(j, i)] = v;
        }
    }
    Ok(f)
}
