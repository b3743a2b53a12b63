//! Spherical-wavefront steering vectors and their spatial derivatives.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::CMatrix;
use crate::scene::{ArrayGeometry, Axis, Position3};

/// Targets closer than this to any element are rejected as unphysical.
pub const MIN_ELEMENT_DISTANCE: f64 = 1e-9;

/// Per-element channel amplitude model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeModel {
    /// Free-space path loss `λ√G / (4π d)` at every element.
    #[default]
    Exact,
    /// Unit amplitude everywhere; path loss folded into the coefficient.
    Constant,
}

#[inline]
fn element_response(d: f64, wavenumber: f64, amp_scale: f64, model: AmplitudeModel) -> Complex64 {
    let phase = Complex64::from_polar(1.0, -wavenumber * d);
    match model {
        AmplitudeModel::Exact => phase * (amp_scale / d),
        AmplitudeModel::Constant => phase,
    }
}

/// `λ√G / (4π)`; the exact-model amplitude is this over the distance.
fn amplitude_scale(array: &ArrayGeometry, wavenumber: f64) -> f64 {
    let lambda = 2.0 * PI / wavenumber;
    lambda * array.gain().sqrt() / (4.0 * PI)
}

fn checked_distance(element: usize, e: &Position3, target: &Position3) -> Result<f64> {
    let d = e.distance(target);
    if d < MIN_ELEMENT_DISTANCE {
        return Err(Error::Singularity {
            x: target.x,
            y: target.y,
            z: target.z,
            element,
            distance: d,
        });
    }
    Ok(d)
}

/// Steering vector of `array` toward `target`: element `m` is
/// `A_m exp(-j ν d_m)` with `d_m` the element-to-target distance.
pub fn steering_vector(
    array: &ArrayGeometry,
    target: &Position3,
    wavenumber: f64,
    model: AmplitudeModel,
) -> Result<Vec<Complex64>> {
    let scale = amplitude_scale(array, wavenumber);
    array
        .elements()
        .iter()
        .enumerate()
        .map(|(m, e)| Ok(element_response(checked_distance(m, e, target)?, wavenumber, scale, model)))
        .collect()
}

/// Receive-side steering vector `a(l)`.
pub fn rx_steering(rx: &ArrayGeometry, target: &Position3, wavenumber: f64, model: AmplitudeModel) -> Result<Vec<Complex64>> {
    steering_vector(rx, target, wavenumber, model)
}

/// Transmit-side steering vector `v(l)`.
pub fn tx_steering(tx: &ArrayGeometry, target: &Position3, wavenumber: f64, model: AmplitudeModel) -> Result<Vec<Complex64>> {
    steering_vector(tx, target, wavenumber, model)
}

/// Derivative of the steering vector with respect to one target coordinate.
///
/// Exact model: `s_m · ((u_m - u)/d_m² + jν (u_m - u)/d_m)`. The constant
/// model has no amplitude term, only the phase part `jν (u_m - u)/d_m`.
pub fn steering_derivative(
    array: &ArrayGeometry,
    target: &Position3,
    wavenumber: f64,
    axis: Axis,
    model: AmplitudeModel,
) -> Result<Vec<Complex64>> {
    let scale = amplitude_scale(array, wavenumber);
    let u = target.coord(axis);
    array
        .elements()
        .iter()
        .enumerate()
        .map(|(m, e)| {
            let d = checked_distance(m, e, target)?;
            let s = element_response(d, wavenumber, scale, model);
            let du = e.coord(axis) - u;
            let factor = match model {
                AmplitudeModel::Exact => Complex64::new(du / (d * d), wavenumber * du / d),
                AmplitudeModel::Constant => Complex64::new(0.0, wavenumber * du / d),
            };
            Ok(s * factor)
        })
        .collect()
}

/// Stacks steering vectors for `positions` as the columns of a matrix.
pub fn steering_matrix(
    array: &ArrayGeometry,
    positions: &[Position3],
    wavenumber: f64,
    model: AmplitudeModel,
) -> Result<CMatrix> {
    let mut out = CMatrix::zeros(array.len(), positions.len());
    let scale = amplitude_scale(array, wavenumber);
    for (k, p) in positions.iter().enumerate() {
        let mut col = out.column_mut(k);
        for (m, e) in array.elements().iter().enumerate() {
            col[m] = element_response(checked_distance(m, e, p)?, wavenumber, scale, model);
        }
    }
    Ok(out)
}

/// Steering matrices `A` (Rx) and `V` (Tx) with their per-coordinate
/// derivative companions. Column `k` always belongs to target `k`.
#[derive(Debug, Clone)]
pub struct SteeringSet {
    pub a: CMatrix,
    pub v: CMatrix,
    /// `∂A/∂x, ∂A/∂y, ∂A/∂z`, column `k` differentiated w.r.t. target `k`.
    pub da: [CMatrix; 3],
    pub dv: [CMatrix; 3],
}

impl SteeringSet {
    pub fn num_targets(&self) -> usize {
        self.a.ncols()
    }
}

pub fn build_steering_set(
    tx: &ArrayGeometry,
    rx: &ArrayGeometry,
    positions: &[Position3],
    wavenumber: f64,
    model: AmplitudeModel,
) -> Result<SteeringSet> {
    let a = steering_matrix(rx, positions, wavenumber, model)?;
    let v = steering_matrix(tx, positions, wavenumber, model)?;
    let deriv = |array: &ArrayGeometry, axis: Axis| -> Result<CMatrix> {
        let mut out = CMatrix::zeros(array.len(), positions.len());
        for (k, p) in positions.iter().enumerate() {
            let col = steering_derivative(array, p, wavenumber, axis, model)?;
            out.column_mut(k).copy_from_slice(&col);
        }
        Ok(out)
    };
    let da = [deriv(rx, Axis::X)?, deriv(rx, Axis::Y)?, deriv(rx, Axis::Z)?];
    let dv = [deriv(tx, Axis::X)?, deriv(tx, Axis::Y)?, deriv(tx, Axis::Z)?];
    Ok(SteeringSet { a, v, da, dv })
}
