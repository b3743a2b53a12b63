//! Radar geometry and ground-truth scenarios.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{hermitian_defect, CMatrix, Cholesky};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative tolerance for accepting a noise covariance as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Carrier wavelength in meters.
pub fn wavelength(carrier_hz: f64) -> Result<f64> {
    if !(carrier_hz > 0.0) || !carrier_hz.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "carrier frequency must be positive and finite, got {carrier_hz}"
        )));
    }
    Ok(SPEED_OF_LIGHT / carrier_hz)
}

/// A point in 3D space, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const ORIGIN: Position3 = Position3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position3) -> f64 {
        self.sub(other).norm()
    }

    pub fn sub(&self, other: &Position3) -> Position3 {
        Position3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    pub fn add(&self, other: &Position3) -> Position3 {
        Position3::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    pub fn scale(&self, s: f64) -> Position3 {
        Position3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn coord(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn with_coord(mut self, axis: Axis, value: f64) -> Self {
        match axis {
            Axis::X => self.x = value,
            Axis::Y => self.y = value,
            Axis::Z => self.z = value,
        }
        self
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Position3 {
    fn from(v: [f64; 3]) -> Self {
        Position3::new(v[0], v[1], v[2])
    }
}

impl From<Position3> for [f64; 3] {
    fn from(p: Position3) -> Self {
        p.to_array()
    }
}

/// Cartesian coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Plane spanned by a planar array. The first named axis runs along the
/// columns, the second along the rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    #[default]
    Xy,
    Xz,
    Yz,
}

impl Plane {
    fn axes(self) -> (Axis, Axis) {
        match self {
            Plane::Xy => (Axis::X, Axis::Y),
            Plane::Xz => (Axis::X, Axis::Z),
            Plane::Yz => (Axis::Y, Axis::Z),
        }
    }
}

/// Element layout of one side (Tx or Rx) of the radar.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    elements: Vec<Position3>,
    reference: Position3,
    gain: f64,
}

impl ArrayGeometry {
    /// Builds an array with unit gain and its reference point at the centroid.
    pub fn new(elements: Vec<Position3>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidArgument("array needs at least one element".into()));
        }
        if let Some(bad) = elements.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!("element {bad} has a non-finite coordinate")));
        }
        check_distinct(&elements)?;
        let n = elements.len() as f64;
        let sum = elements.iter().fold(Position3::ORIGIN, |acc, p| acc.add(p));
        Ok(Self {
            reference: sum.scale(1.0 / n),
            elements,
            gain: 1.0,
        })
    }

    pub fn with_reference(mut self, reference: Position3) -> Result<Self> {
        if !reference.is_finite() {
            return Err(Error::InvalidArgument("reference point must be finite".into()));
        }
        self.reference = reference;
        Ok(self)
    }

    pub fn with_gain(mut self, gain: f64) -> Result<Self> {
        if !(gain >= 0.0) || !gain.is_finite() {
            return Err(Error::InvalidArgument(format!("antenna gain must be finite and >= 0, got {gain}")));
        }
        self.gain = gain;
        Ok(self)
    }

    pub fn elements(&self) -> &[Position3] {
        &self.elements
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn reference(&self) -> Position3 {
        self.reference
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Diagonal of the axis-aligned bounding box of the elements. Equals the
    /// largest inter-element distance for rectangular grids.
    pub fn aperture(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.elements {
            for (i, v) in p.to_array().into_iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        (0..3).map(|i| (hi[i] - lo[i]).powi(2)).sum::<f64>().sqrt()
    }
}

fn check_distinct(elements: &[Position3]) -> Result<()> {
    const TOL: f64 = 1e-12;
    let mut order: Vec<usize> = (0..elements.len()).collect();
    order.sort_by(|&a, &b| elements[a].x.total_cmp(&elements[b].x));
    for (i, &a) in order.iter().enumerate() {
        for &b in &order[i + 1..] {
            if elements[b].x - elements[a].x > TOL {
                break;
            }
            if elements[a].distance(&elements[b]) <= TOL {
                return Err(Error::InvalidArgument(format!(
                    "elements {} and {} coincide",
                    a.min(b),
                    a.max(b)
                )));
            }
        }
    }
    Ok(())
}

/// Uniform planar array: `rows × cols` elements at `spacing` meters, centered
/// on `center`. The reference point is the center.
pub fn build_upa(rows: usize, cols: usize, spacing: f64, center: Position3, plane: Plane) -> Result<ArrayGeometry> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument(format!("UPA dimensions must be >= 1, got {rows}x{cols}")));
    }
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::InvalidArgument(format!("UPA spacing must be positive, got {spacing}")));
    }
    let (col_axis, row_axis) = plane.axes();
    let c0 = (cols as f64 - 1.0) / 2.0;
    let r0 = (rows as f64 - 1.0) / 2.0;
    let mut elements = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let p = center
                .with_coord(col_axis, center.coord(col_axis) + (c as f64 - c0) * spacing)
                .with_coord(row_axis, center.coord(row_axis) + (r as f64 - r0) * spacing);
            elements.push(p);
        }
    }
    ArrayGeometry::new(elements)?.with_reference(center)
}

/// A point target with its complex reflection coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub position: Position3,
    pub coeff: Complex64,
}

impl Target {
    pub fn new(position: Position3, coeff: Complex64) -> Self {
        Self { position, coeff }
    }
}

/// Noise-plus-interference covariance `Q` of each received snapshot.
#[derive(Debug, Clone)]
pub enum NoiseCovariance {
    /// `σ² I`; stored without materializing the identity so very large
    /// receive arrays stay tractable.
    Isotropic { sigma2: f64, dim: usize },
    /// General Hermitian positive definite matrix with its Cholesky factor.
    Full { q: CMatrix, chol: Cholesky<Complex64> },
}

impl NoiseCovariance {
    pub fn isotropic(sigma2: f64, dim: usize) -> Result<Self> {
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: 0, value: sigma2 });
        }
        Ok(NoiseCovariance::Isotropic { sigma2, dim })
    }

    /// Validates Hermitian symmetry (relative 1e-12) and positive definiteness.
    pub fn full(q: CMatrix) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "noise covariance must be square, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        let defect = hermitian_defect(&q);
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidArgument(format!(
                "noise covariance is not Hermitian (relative defect {defect:e})"
            )));
        }
        let chol = Cholesky::new(&q)?;
        Ok(NoiseCovariance::Full { q, chol })
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseCovariance::Isotropic { dim, .. } => *dim,
            NoiseCovariance::Full { q, .. } => q.nrows(),
        }
    }

    pub fn trace(&self) -> f64 {
        match self {
            NoiseCovariance::Isotropic { sigma2, dim } => sigma2 * *dim as f64,
            NoiseCovariance::Full { q, .. } => q.diagonal().iter().map(|z| z.re).sum(),
        }
    }

    pub fn to_dense(&self) -> CMatrix {
        match self {
            NoiseCovariance::Isotropic { sigma2, dim } => CMatrix::identity(*dim, *dim) * Complex64::from(*sigma2),
            NoiseCovariance::Full { q, .. } => q.clone(),
        }
    }

    /// `Q⁻¹ B`.
    pub fn solve(&self, rhs: &CMatrix) -> CMatrix {
        match self {
            NoiseCovariance::Isotropic { sigma2, .. } => rhs / Complex64::from(*sigma2),
            NoiseCovariance::Full { chol, .. } => chol.solve(rhs),
        }
    }

    /// `Q` scaled by `alpha > 0`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("noise scale must be positive, got {alpha}")));
        }
        match self {
            NoiseCovariance::Isotropic { sigma2, dim } => NoiseCovariance::isotropic(sigma2 * alpha, *dim),
            NoiseCovariance::Full { q, .. } => NoiseCovariance::full(q * Complex64::from(alpha)),
        }
    }

    /// Lower factor `C` with `Q = C Cᴴ`, used to color white noise.
    pub fn coloring_factor(&self) -> CMatrix {
        match self {
            NoiseCovariance::Isotropic { sigma2, dim } => {
                CMatrix::identity(*dim, *dim) * Complex64::from(sigma2.sqrt())
            }
            NoiseCovariance::Full { chol, .. } => chol.factor().clone(),
        }
    }
}

impl PartialEq for NoiseCovariance {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                NoiseCovariance::Isotropic { sigma2: a, dim: m },
                NoiseCovariance::Isotropic { sigma2: b, dim: n },
            ) => a == b && m == n,
            (NoiseCovariance::Full { q: a, .. }, NoiseCovariance::Full { q: b, .. }) => a == b,
            _ => false,
        }
    }
}

/// Complete ground truth of one radar scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub tx: ArrayGeometry,
    pub rx: ArrayGeometry,
    pub targets: Vec<Target>,
    pub carrier_hz: f64,
    pub noise: NoiseCovariance,
}

impl Scene {
    pub fn new(
        tx: ArrayGeometry,
        rx: ArrayGeometry,
        targets: Vec<Target>,
        carrier_hz: f64,
        noise: NoiseCovariance,
    ) -> Result<Self> {
        wavelength(carrier_hz)?;
        if noise.dim() != rx.len() {
            return Err(Error::DimensionMismatch(format!(
                "noise covariance is {0}x{0} but the receive array has {1} elements",
                noise.dim(),
                rx.len()
            )));
        }
        for (k, t) in targets.iter().enumerate() {
            if !t.position.is_finite() || !t.coeff.re.is_finite() || !t.coeff.im.is_finite() {
                return Err(Error::InvalidArgument(format!("target {k} has non-finite data")));
            }
        }
        Ok(Self {
            tx,
            rx,
            targets,
            carrier_hz,
            noise,
        })
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// `ν = 2π / λ`.
    pub fn wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.wavelength()
    }

    pub fn positions(&self) -> Vec<Position3> {
        self.targets.iter().map(|t| t.position).collect()
    }

    pub fn coeffs(&self) -> Vec<Complex64> {
        self.targets.iter().map(|t| t.coeff).collect()
    }

    pub fn with_noise(&self, noise: NoiseCovariance) -> Result<Self> {
        Scene::new(self.tx.clone(), self.rx.clone(), self.targets.clone(), self.carrier_hz, noise)
    }

    pub fn with_targets(&self, targets: Vec<Target>) -> Result<Self> {
        Scene::new(self.tx.clone(), self.rx.clone(), targets, self.carrier_hz, self.noise.clone())
    }
}
