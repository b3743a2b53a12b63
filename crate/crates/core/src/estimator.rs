//! Concentrated maximum-likelihood localization with unknown noise
//! covariance: approximate ML coefficients, the concentrated objective, and
//! a cyclic one-target-at-a-time 3D grid search.

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{steering_vector, AmplitudeModel};
use crate::error::{Error, Result};
use crate::numerics::{CMatrix, Cholesky};
use crate::scene::{ArrayGeometry, Position3, Scene};
use crate::waveform::SignalBlock;

/// Relative floor added to the residual Gram before its log-determinant.
pub const LOGDET_FLOOR: f64 = 1e-12;
/// Default relative diagonal loading of the projected-data covariance.
pub const DEFAULT_LOADING: f64 = 1e-9;
/// Default termination threshold on the objective decrease.
pub const DEFAULT_EPSILON: f64 = 1e-5;

// The Gram-form residual carries an absolute error of a few ε·tr(YYᴴ).
// Factors with a squared pivot below this multiple of that error are
// recomputed from the explicit residual.
const GRAM_FORM_PIVOT_MARGIN: f64 = 1e6;

/// Cholesky of `W + floor·I` with `floor = LOGDET_FLOOR · tr(W)/M`, kept
/// strictly positive so an exact fit still gives a finite value.
fn floored_factor(mut w: CMatrix) -> Result<Cholesky<Complex64>> {
    let m = w.nrows();
    let tr: f64 = (0..m).map(|i| w[(i, i)].re).sum();
    let floor = (LOGDET_FLOOR * tr / m as f64).max(f64::MIN_POSITIVE);
    for i in 0..m {
        w[(i, i)] += floor;
    }
    Cholesky::new(&w)
}

fn floored_logdet(w: CMatrix) -> Result<f64> {
    Ok(floored_factor(w)?.log_det())
}

fn residual(y: &CMatrix, a: &CMatrix, b: &[Complex64], s: &CMatrix) -> CMatrix {
    let mut p = a.clone();
    for (k, bk) in b.iter().enumerate() {
        for e in p.column_mut(k).iter_mut() {
            *e *= bk;
        }
    }
    y - p * s
}

/// Approximate ML coefficients
/// `b = [(Aᴴ J⁻¹ A) ⊙ (S Sᴴ)ᵀ]⁻¹ vecd(Aᴴ J⁻¹ Y Sᴴ)` with
/// `J = (1/L)(YYᴴ - YSᴴ(SSᴴ)⁻¹SYᴴ)`, diagonally loaded by
/// `loading·tr(J)/M` plus a tiny multiple of `tr(YYᴴ)/(LM)`.
pub fn aml_coefficients(y: &CMatrix, a: &CMatrix, s: &CMatrix, loading: f64) -> Result<Vec<Complex64>> {
    check_shapes(y, a, s)?;
    let gram = y * y.adjoint();
    let u = y * s.adjoint();
    aml_from_parts(&gram, a, s, &u, y.ncols(), loading)
}

fn check_shapes(y: &CMatrix, a: &CMatrix, s: &CMatrix) -> Result<()> {
    if a.nrows() != y.nrows() || s.ncols() != y.ncols() || a.ncols() != s.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "Y is {}x{}, A is {}x{}, S is {}x{}",
            y.nrows(),
            y.ncols(),
            a.nrows(),
            a.ncols(),
            s.nrows(),
            s.ncols()
        )));
    }
    Ok(())
}

fn aml_from_parts(gram: &CMatrix, a: &CMatrix, s: &CMatrix, u: &CMatrix, l: usize, loading: f64) -> Result<Vec<Complex64>> {
    let m = gram.nrows();
    let k = a.ncols();
    let singular = || Error::RankDeficient(format!("S Sᴴ is singular ({k} targets, {l} snapshots)"));
    if k > l {
        return Err(singular());
    }
    let sst = s * s.adjoint();
    let sst_chol = Cholesky::new(&sst).map_err(|_| singular())?;
    if sst_chol.condition_estimate() > 1e14 {
        return Err(singular());
    }
    let inv_l = 1.0 / l as f64;
    let mut j = (gram - u * sst_chol.solve(&u.adjoint())) * Complex64::from(inv_l);
    let tr_j: f64 = (0..m).map(|i| j[(i, i)].re).sum();
    let tr_g: f64 = (0..m).map(|i| gram[(i, i)].re).sum();
    let load = loading * tr_j.max(0.0) / m as f64 + 1e-12 * tr_g * inv_l / m as f64;
    for i in 0..m {
        j[(i, i)] += load;
    }
    let j_chol = Cholesky::new(&j)?;
    let ji_a = j_chol.solve(a);
    let ji_u = j_chol.solve(u);
    let sst_t = sst.transpose();
    let h = (a.adjoint() * &ji_a).component_mul(&sst_t);
    let r = CMatrix::from_fn(k, 1, |kk, _| a.column(kk).dotc(&ji_u.column(kk)));
    let h_chol = Cholesky::new(&((&h + h.adjoint()) * Complex64::from(0.5)))
        .map_err(|_| Error::RankDeficient("coefficient normal matrix is singular".into()))?;
    Ok(h_chol.solve(&r).column(0).iter().copied().collect())
}

/// Concentrated negative log-likelihood
/// `f₃ = L ln det[(Y - A diag(b) S)(Y - A diag(b) S)ᴴ]`, with the
/// log-determinant floored as described in [`LOGDET_FLOOR`].
pub fn concentrated_nll(y: &CMatrix, a: &CMatrix, b: &[Complex64], s: &CMatrix) -> Result<f64> {
    check_shapes(y, a, s)?;
    let r = residual(y, a, b, s);
    Ok(y.ncols() as f64 * floored_logdet(&r * r.adjoint())?)
}

/// Residual covariance `Q̂ = (1/L)(Y - A diag(b) S)(Y - A diag(b) S)ᴴ`.
pub fn estimate_noise_cov(y: &CMatrix, a: &CMatrix, b: &[Complex64], s: &CMatrix) -> Result<CMatrix> {
    check_shapes(y, a, s)?;
    let r = residual(y, a, b, s);
    let q = &r * r.adjoint() * Complex64::from(1.0 / y.ncols() as f64);
    Ok((&q + q.adjoint()) * Complex64::from(0.5))
}

/// Received and transmitted data with the array geometry they came from.
/// `YYᴴ` is precomputed once; every objective evaluation reuses it.
#[derive(Debug, Clone)]
pub struct LikelihoodContext {
    tx: ArrayGeometry,
    rx: ArrayGeometry,
    wavenumber: f64,
    y: CMatrix,
    x: CMatrix,
    gram: CMatrix,
    gram_trace: f64,
    loading: f64,
}

/// Receive steering column and transmit signature `vᵀX` for one position.
#[derive(Debug, Clone)]
pub struct TargetColumns {
    pub a: DVector<Complex64>,
    pub s: DVector<Complex64>,
}

/// Objective value and the coefficients that achieved it.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub f3: f64,
    pub coeffs: Vec<Complex64>,
}

impl LikelihoodContext {
    pub fn new(
        tx: &ArrayGeometry,
        rx: &ArrayGeometry,
        wavenumber: f64,
        y: &SignalBlock,
        x: &SignalBlock,
        loading: f64,
    ) -> Result<Self> {
        if y.rows() != rx.len() {
            return Err(Error::DimensionMismatch(format!(
                "received data has {} rows, Rx array has {} elements",
                y.rows(),
                rx.len()
            )));
        }
        if x.rows() != tx.len() {
            return Err(Error::DimensionMismatch(format!(
                "waveform has {} rows, Tx array has {} elements",
                x.rows(),
                tx.len()
            )));
        }
        if y.snapshots() != x.snapshots() {
            return Err(Error::DimensionMismatch(format!(
                "received data has {} snapshots, waveform has {}",
                y.snapshots(),
                x.snapshots()
            )));
        }
        if !(wavenumber > 0.0 && wavenumber.is_finite()) {
            return Err(Error::InvalidArgument(format!("wavenumber must be positive, got {wavenumber}")));
        }
        if !(loading >= 0.0 && loading.is_finite()) {
            return Err(Error::InvalidArgument(format!("loading must be non-negative, got {loading}")));
        }
        let gram = &y.data * y.data.adjoint();
        let gram_trace = (0..gram.nrows()).map(|i| gram[(i, i)].re).sum();
        Ok(Self {
            tx: tx.clone(),
            rx: rx.clone(),
            wavenumber,
            y: y.data.clone(),
            x: x.data.clone(),
            gram,
            gram_trace,
            loading,
        })
    }

    /// Context for a scene's arrays and carrier. Targets and noise in the
    /// scene are ignored.
    pub fn from_scene(scene: &Scene, y: &SignalBlock, x: &SignalBlock, loading: f64) -> Result<Self> {
        Self::new(&scene.tx, &scene.rx, scene.wavenumber(), y, x, loading)
    }

    pub fn snapshots(&self) -> usize {
        self.y.ncols()
    }

    pub fn rx_len(&self) -> usize {
        self.y.nrows()
    }

    pub fn loading(&self) -> f64 {
        self.loading
    }

    pub fn received(&self) -> &CMatrix {
        &self.y
    }

    pub fn columns(&self, p: &Position3) -> Result<TargetColumns> {
        let a = steering_vector(&self.rx, p, self.wavenumber, AmplitudeModel::Exact)?;
        let v = steering_vector(&self.tx, p, self.wavenumber, AmplitudeModel::Exact)?;
        let v = DVector::from_vec(v);
        // s = Xᵀ v, i.e. the row vᵀ X stored as a column.
        let s = self.x.tr_mul(&v);
        Ok(TargetColumns {
            a: DVector::from_vec(a),
            s,
        })
    }

    fn stack(&self, cols: &[&TargetColumns]) -> (CMatrix, CMatrix) {
        let k = cols.len();
        let mut a = CMatrix::zeros(self.rx_len(), k);
        let mut s = CMatrix::zeros(k, self.snapshots());
        for (i, c) in cols.iter().enumerate() {
            a.set_column(i, &c.a);
            s.set_row(i, &c.s.transpose());
        }
        (a, s)
    }

    /// Objective and coefficients for targets given by precomputed columns.
    pub fn evaluate_columns(&self, cols: &[&TargetColumns]) -> Result<Evaluation> {
        if cols.is_empty() {
            return Err(Error::InvalidArgument("at least one target is required".into()));
        }
        let (a, s) = self.stack(cols);
        let u = &self.y * s.adjoint();
        let l = self.snapshots();
        let b = aml_from_parts(&self.gram, &a, &s, &u, l, self.loading)?;

        let mut p = a.clone();
        for (k, bk) in b.iter().enumerate() {
            for e in p.column_mut(k).iter_mut() {
                *e *= bk;
            }
        }
        // W = G - U Pᴴ - P Uᴴ + P (S Sᴴ) Pᴴ
        let upt = &u * p.adjoint();
        let w = &self.gram - &upt - upt.adjoint() + &p * (&s * s.adjoint()) * p.adjoint();
        let min_pivot_sq = GRAM_FORM_PIVOT_MARGIN * f64::EPSILON * self.gram_trace;
        let factor = match floored_factor(w) {
            Ok(f) if (0..f.dim()).all(|i| f.factor()[(i, i)].re.powi(2) >= min_pivot_sq) => f,
            _ => {
                let r = &self.y - &p * &s;
                floored_factor(&r * r.adjoint())?
            }
        };
        let f3 = l as f64 * factor.log_det();
        if !f3.is_finite() {
            return Err(Error::InvalidArgument("objective is not finite".into()));
        }
        Ok(Evaluation { f3, coeffs: b })
    }

    /// Objective and coefficients for a set of target positions.
    pub fn evaluate(&self, positions: &[Position3]) -> Result<Evaluation> {
        let cols = positions.iter().map(|p| self.columns(p)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&TargetColumns> = cols.iter().collect();
        self.evaluate_columns(&refs)
    }

    /// `Q̂` at the given positions and coefficients.
    pub fn noise_covariance(&self, positions: &[Position3], coeffs: &[Complex64]) -> Result<CMatrix> {
        let cols = positions.iter().map(|p| self.columns(p)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&TargetColumns> = cols.iter().collect();
        let (a, s) = self.stack(&refs);
        estimate_noise_cov(&self.y, &a, coeffs, &s)
    }
}

/// Axis-aligned search box with a multi-stage refinement schedule.
///
/// Stage 1 lays `initial_counts` points per axis across the whole box.
/// Every later stage lays `refine_counts` points per axis around the current
/// best point, at the previous pitch divided by `refine_factor`, dropping
/// points that fall outside the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchGrid {
    pub min: Position3,
    pub max: Position3,
    pub initial_counts: [usize; 3],
    pub refine_counts: [usize; 3],
    pub refine_factor: f64,
    pub stages: usize,
}

impl SearchGrid {
    pub fn new(min: Position3, max: Position3, initial_counts: [usize; 3]) -> Result<Self> {
        let grid = Self {
            min,
            max,
            initial_counts,
            refine_counts: [11, 11, 11],
            refine_factor: 5.0,
            stages: 1,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_refinement(mut self, refine_counts: [usize; 3], refine_factor: f64, stages: usize) -> Result<Self> {
        self.refine_counts = refine_counts;
        self.refine_factor = refine_factor;
        self.stages = stages;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(Error::InvalidArgument("search box corners must be finite".into()));
        }
        for (axis, name) in ["x", "y", "z"].iter().enumerate() {
            let (lo, hi) = (self.min.to_array()[axis], self.max.to_array()[axis]);
            if hi < lo {
                return Err(Error::InvalidArgument(format!("search box {name} range is empty: [{lo}, {hi}]")));
            }
            let n = self.initial_counts[axis];
            if n == 0 || self.refine_counts[axis] == 0 {
                return Err(Error::InvalidArgument(format!("grid count on {name} must be positive")));
            }
            if hi > lo && n < 2 {
                return Err(Error::InvalidArgument(format!(
                    "search box has extent on {name}; it needs at least 2 initial grid points"
                )));
            }
        }
        if self.stages == 0 {
            return Err(Error::InvalidArgument("at least one search stage is required".into()));
        }
        if !(self.refine_factor > 1.0 && self.refine_factor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "refinement factor must exceed 1, got {}",
                self.refine_factor
            )));
        }
        Ok(())
    }

    /// Per-axis pitch of the stage-1 grid.
    pub fn initial_pitch(&self) -> [f64; 3] {
        let (lo, hi) = (self.min.to_array(), self.max.to_array());
        std::array::from_fn(|i| {
            let n = self.initial_counts[i];
            if n > 1 {
                (hi[i] - lo[i]) / (n - 1) as f64
            } else {
                0.0
            }
        })
    }

    /// Per-axis pitch at stage `stage` (0-based).
    pub fn pitch(&self, stage: usize) -> [f64; 3] {
        let d = self.refine_factor.powi(stage as i32);
        self.initial_pitch().map(|p| p / d)
    }

    pub fn final_pitch(&self) -> [f64; 3] {
        self.pitch(self.stages - 1)
    }

    pub fn contains(&self, p: &Position3) -> bool {
        let (lo, hi, v) = (self.min.to_array(), self.max.to_array(), p.to_array());
        (0..3).all(|i| {
            let tol = 1e-9 * (hi[i] - lo[i]).abs().max(1.0);
            v[i] >= lo[i] - tol && v[i] <= hi[i] + tol
        })
    }

    /// Grid points of stage `stage` in lexicographic (x, y, z) order.
    /// Stage 0 ignores `center`.
    pub fn stage_points(&self, stage: usize, center: &Position3) -> Vec<Position3> {
        let pitch = self.pitch(stage);
        let axes: [Vec<f64>; 3] = std::array::from_fn(|i| {
            if stage == 0 {
                let n = self.initial_counts[i];
                let lo = self.min.to_array()[i];
                (0..n).map(|j| lo + j as f64 * pitch[i]).collect()
            } else {
                let n = self.refine_counts[i];
                let c = center.to_array()[i];
                if pitch[i] == 0.0 {
                    return vec![c];
                }
                let half = (n as f64 - 1.0) / 2.0;
                (0..n).map(|j| c + (j as f64 - half) * pitch[i]).collect()
            }
        });
        let mut pts = Vec::with_capacity(axes[0].len() * axes[1].len() * axes[2].len());
        for &x in &axes[0] {
            for &y in &axes[1] {
                for &z in &axes[2] {
                    let p = Position3::new(x, y, z);
                    if stage == 0 || self.contains(&p) {
                        pts.push(p);
                    }
                }
            }
        }
        pts
    }
}

/// A grid point and its objective value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub position: Position3,
    pub value: f64,
}

impl Candidate {
    /// Lower value wins; equal values go to the lexicographically smaller
    /// position.
    fn beats(&self, other: &Candidate) -> bool {
        if self.value != other.value {
            return self.value < other.value;
        }
        let (a, b) = (self.position.to_array(), other.position.to_array());
        a.iter().zip(b.iter()).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y)
    }
}

/// Outcome of a multi-stage grid search.
#[derive(Debug, Clone, Copy)]
pub struct SearchOutcome {
    pub best: Candidate,
    pub evaluations: usize,
    pub failures: usize,
}

/// Minimizes `objective` over the grid. Points where the objective returns
/// `None` or a non-finite value are skipped. When an `incumbent` is given
/// it competes with every stage, so the result never gets worse than it.
pub fn grid_search<F>(objective: F, grid: &SearchGrid, incumbent: Option<Candidate>) -> Result<SearchOutcome>
where
    F: Fn(&Position3) -> Option<f64> + Sync,
{
    grid.validate()?;
    let mut best = incumbent;
    let mut evaluations = 0;
    let mut failures = 0;
    for stage in 0..grid.stages {
        let center = match (stage, best) {
            (0, _) => grid.min,
            (_, Some(b)) => b.position,
            (_, None) => break,
        };
        let pts = grid.stage_points(stage, &center);
        let values: Vec<Option<f64>> = pts.par_iter().map(|p| objective(p).filter(|v| v.is_finite())).collect();
        evaluations += pts.len();
        for (p, v) in pts.iter().zip(values) {
            match v {
                Some(value) => {
                    let c = Candidate { position: *p, value };
                    if best.is_none_or(|b| c.beats(&b)) {
                        best = Some(c);
                    }
                }
                None => failures += 1,
            }
        }
    }
    match best {
        Some(best) => Ok(SearchOutcome {
            best,
            evaluations,
            failures,
        }),
        None => Err(Error::SearchFailed),
    }
}

/// Settings for [`aco_localize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcoConfig {
    pub grid: SearchGrid,
    pub epsilon: f64,
    /// Cap on single-target re-estimations; defaults to `50 · K_max`.
    pub max_updates: Option<usize>,
}

impl AcoConfig {
    pub fn new(grid: SearchGrid) -> Self {
        Self {
            grid,
            epsilon: DEFAULT_EPSILON,
            max_updates: None,
        }
    }

    /// Candidates closer than this to an already placed target are skipped.
    pub fn min_separation(&self) -> f64 {
        0.5 * self.grid.final_pitch().iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    /// A new target was added with the others held fixed.
    Add,
    /// An existing target was re-estimated with the others held fixed.
    Update,
}

/// One objective value in the estimation trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub k_hat: usize,
    /// 0-based index of the target that was moved.
    pub target: usize,
    pub kind: StepKind,
    pub f3: f64,
}

/// Result of cyclic localization.
#[derive(Debug, Clone)]
pub struct Localization {
    pub positions: Vec<Position3>,
    pub coeffs: Vec<Complex64>,
    pub noise_cov: CMatrix,
    pub f3: f64,
    pub trace: Vec<TraceEntry>,
    /// False when the update cap stopped a refinement loop.
    pub converged: bool,
    pub updates: usize,
    pub evaluations: usize,
    /// Relative log-determinant floor used by the objective.
    pub logdet_floor: f64,
}

/// Cyclic localization of up to `k_max` targets.
///
/// Targets are added one at a time, each found by a grid search with the
/// earlier ones fixed. After each addition the targets are re-estimated in
/// turn until the objective decreases by no more than `epsilon`.
pub fn aco_localize(ctx: &LikelihoodContext, k_max: usize, cfg: &AcoConfig) -> Result<Localization> {
    cfg.grid.validate()?;
    if k_max == 0 {
        return Err(Error::InvalidArgument("K_max must be at least 1".into()));
    }
    if k_max > ctx.snapshots() {
        return Err(Error::RankDeficient(format!(
            "{k_max} targets need at least as many snapshots, got {}",
            ctx.snapshots()
        )));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", cfg.epsilon)));
    }
    let max_updates = cfg.max_updates.unwrap_or(50 * k_max);
    let sep = cfg.min_separation();

    let mut cols: Vec<TargetColumns> = Vec::with_capacity(k_max);
    let mut positions: Vec<Position3> = Vec::with_capacity(k_max);
    let mut trace = Vec::new();
    let mut evaluations = 0;
    let mut updates = 0;
    let mut converged = true;

    // Objective with target `slot` moved to `p`; slot == cols.len() appends.
    let objective = |cols: &[TargetColumns], positions: &[Position3], slot: usize, p: &Position3| -> Option<f64> {
        if positions.iter().enumerate().any(|(i, q)| i != slot && q.distance(p) < sep) {
            return None;
        }
        let c = ctx.columns(p).ok()?;
        let mut refs: Vec<&TargetColumns> = cols.iter().collect();
        if slot == refs.len() {
            refs.push(&c);
        } else {
            refs[slot] = &c;
        }
        ctx.evaluate_columns(&refs).ok().map(|e| e.f3)
    };

    for k_hat in 1..=k_max {
        let slot = k_hat - 1;
        let out = grid_search(|p| objective(&cols, &positions, slot, p), &cfg.grid, None)?;
        evaluations += out.evaluations;
        positions.push(out.best.position);
        cols.push(ctx.columns(&out.best.position)?);
        let mut f_new = out.best.value;
        trace.push(TraceEntry {
            k_hat,
            target: slot,
            kind: StepKind::Add,
            f3: f_new,
        });
        if k_hat == 1 {
            continue;
        }
        let mut f_old = f_new + 2.0 * cfg.epsilon;
        let mut p = 0;
        while f_old - f_new > cfg.epsilon {
            if updates >= max_updates {
                converged = false;
                break;
            }
            f_old = f_new;
            let incumbent = Candidate {
                position: positions[p],
                value: f_new,
            };
            let out = grid_search(|q| objective(&cols, &positions, p, q), &cfg.grid, Some(incumbent))?;
            evaluations += out.evaluations;
            updates += 1;
            if out.best.position != positions[p] {
                positions[p] = out.best.position;
                cols[p] = ctx.columns(&positions[p])?;
            }
            f_new = out.best.value;
            trace.push(TraceEntry {
                k_hat,
                target: p,
                kind: StepKind::Update,
                f3: f_new,
            });
            p = (p + 1) % k_hat;
        }
    }

    let refs: Vec<&TargetColumns> = cols.iter().collect();
    let eval = ctx.evaluate_columns(&refs)?;
    let noise_cov = ctx.noise_covariance(&positions, &eval.coeffs)?;
    Ok(Localization {
        positions,
        coeffs: eval.coeffs,
        noise_cov,
        f3: eval.f3,
        trace,
        converged,
        updates,
        evaluations,
        logdet_floor: LOGDET_FLOOR,
    })
}
