//! Scenario files: arrays, targets, carrier, noise, waveform, estimator and
//! sweep settings in TOML.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{AcoConfig, SearchGrid, DEFAULT_EPSILON, DEFAULT_LOADING};
use crate::io::load_complex_csv;
use crate::montecarlo::SweepConfig;
use crate::scene::{build_upa, wavelength, ArrayGeometry, NoiseCovariance, Plane, Position3, Scene, Target};
use crate::waveform::{generate_isotropic, SignalBlock, TxCovariance, WaveformMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub carrier_hz: f64,
    pub arrays: ArraysSection,
    #[serde(default)]
    pub targets: Vec<TargetSection>,
    pub noise: NoiseSection,
    #[serde(default)]
    pub waveform: WaveformSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<EstimatorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraysSection {
    pub tx: ArraySection,
    pub rx: ArraySection,
}

/// Either a `upa` table or an explicit `elements` list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upa: Option<UpaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elements: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
}

/// Uniform planar array. Give the spacing in meters or in wavelengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpaSection {
    pub rows: usize,
    pub cols: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_wavelengths: Option<f64>,
    #[serde(default)]
    pub center: [f64; 3],
    #[serde(default)]
    pub plane: Plane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub position: [f64; 3],
    /// `[re, im]`.
    pub coeff: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma2: Option<f64>,
    /// Complex CSV file holding the full `M × M` covariance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_file: Option<PathBuf>,
}

/// How the bound computations see the transmit covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceSource {
    /// Sample covariance of the actual waveform block.
    #[default]
    Sample,
    /// Exact `power · I`, available even when `L < N`.
    Ideal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSection {
    #[serde(default)]
    pub mode: WaveformMode,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default = "default_power")]
    pub power: f64,
    #[serde(default)]
    pub seed: u64,
    /// Complex CSV file holding the `N × L` waveform; overrides generation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub covariance: CovarianceSource,
}

fn default_snapshots() -> usize {
    64
}

fn default_power() -> f64 {
    1.0
}

impl Default for WaveformSection {
    fn default() -> Self {
        Self {
            mode: WaveformMode::default(),
            snapshots: default_snapshots(),
            power: default_power(),
            seed: 0,
            file: None,
            covariance: CovarianceSource::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub region_min: [f64; 3],
    pub region_max: [f64; 3],
    #[serde(default = "default_initial_counts")]
    pub initial_counts: [usize; 3],
    #[serde(default = "default_refine_counts")]
    pub refine_counts: [usize; 3],
    #[serde(default = "default_refine_factor")]
    pub refine_factor: f64,
    #[serde(default = "default_stages")]
    pub stages: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_loading")]
    pub loading: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cycles: Option<usize>,
    /// Number of targets to estimate; defaults to the number of targets listed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
}

fn default_initial_counts() -> [usize; 3] {
    [21; 3]
}
fn default_refine_counts() -> [usize; 3] {
    [11; 3]
}
fn default_refine_factor() -> f64 {
    5.0
}
fn default_stages() -> usize {
    3
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_loading() -> f64 {
    DEFAULT_LOADING
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub noiseless: bool,
}

/// A parsed and validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub scene: Scene,
    base_dir: PathBuf,
}

impl ScenarioFile {
    /// Parses TOML text without validating physical consistency.
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let key = if key == "." { "<document>".to_string() } else { key };
            Error::config(key, e.into_inner().to_string().trim_end())
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }
}

fn position(key: &str, v: [f64; 3]) -> Result<Position3> {
    let p = Position3::from(v);
    if !p.is_finite() {
        return Err(Error::config(key, "coordinates must be finite"));
    }
    Ok(p)
}

fn build_array(key: &str, spec: &ArraySection, lambda: f64) -> Result<ArrayGeometry> {
    let at = |field: &str| format!("{key}.{field}");
    let array = match (&spec.upa, &spec.elements) {
        (Some(upa), None) => {
            let spacing = match (upa.spacing, upa.spacing_wavelengths) {
                (Some(s), None) => s,
                (None, Some(w)) => w * lambda,
                (None, None) => return Err(Error::config(at("upa"), "one of `spacing` or `spacing_wavelengths` is required")),
                (Some(_), Some(_)) => {
                    return Err(Error::config(at("upa"), "give only one of `spacing` and `spacing_wavelengths`"))
                }
            };
            let center = position(&at("upa.center"), upa.center)?;
            build_upa(upa.rows, upa.cols, spacing, center, upa.plane).map_err(|e| Error::config(at("upa"), e.to_string()))?
        }
        (None, Some(elements)) => {
            let pts = elements
                .iter()
                .enumerate()
                .map(|(i, e)| position(&format!("{key}.elements[{i}]"), *e))
                .collect::<Result<Vec<_>>>()?;
            ArrayGeometry::new(pts).map_err(|e| Error::config(at("elements"), e.to_string()))?
        }
        (None, None) => return Err(Error::config(key, "either `upa` or `elements` is required")),
        (Some(_), Some(_)) => return Err(Error::config(key, "give only one of `upa` and `elements`")),
    };
    let array = match spec.reference {
        Some(r) => array
            .with_reference(position(&at("reference"), r)?)
            .map_err(|e| Error::config(at("reference"), e.to_string()))?,
        None => array,
    };
    match spec.gain {
        Some(g) => array.with_gain(g).map_err(|e| Error::config(at("gain"), e.to_string())),
        None => Ok(array),
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, &base)
    }

    /// Parses and validates scenario text. Relative file paths inside it are
    /// resolved against `base_dir`.
    pub fn from_str(text: &str, base_dir: &Path) -> Result<Self> {
        Self::from_file(ScenarioFile::parse(text)?, base_dir)
    }

    pub fn from_file(file: ScenarioFile, base_dir: &Path) -> Result<Self> {
        let lambda = wavelength(file.carrier_hz).map_err(|e| Error::config("carrier_hz", e.to_string()))?;
        let tx = build_array("arrays.tx", &file.arrays.tx, lambda)?;
        let rx = build_array("arrays.rx", &file.arrays.rx, lambda)?;
        let targets = file
            .targets
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let c = Complex64::new(t.coeff[0], t.coeff[1]);
                if !(c.re.is_finite() && c.im.is_finite()) {
                    return Err(Error::config(format!("targets[{i}].coeff"), "must be finite"));
                }
                Ok(Target::new(position(&format!("targets[{i}].position"), t.position)?, c))
            })
            .collect::<Result<Vec<_>>>()?;
        let noise = match (&file.noise.sigma2, &file.noise.q_file) {
            (Some(s), None) => NoiseCovariance::isotropic(*s, rx.len()).map_err(|e| Error::config("noise.sigma2", e.to_string()))?,
            (None, Some(path)) => {
                let q = load_complex_csv(&resolve(base_dir, path)).map_err(|e| Error::config("noise.q_file", e.to_string()))?;
                if q.nrows() != rx.len() || q.ncols() != rx.len() {
                    return Err(Error::config(
                        "noise.q_file",
                        format!("covariance is {}x{}, Rx array has {} elements", q.nrows(), q.ncols(), rx.len()),
                    ));
                }
                NoiseCovariance::full(q).map_err(|e| Error::config("noise.q_file", e.to_string()))?
            }
            (None, None) => return Err(Error::config("noise", "one of `sigma2` or `q_file` is required")),
            (Some(_), Some(_)) => return Err(Error::config("noise", "give only one of `sigma2` and `q_file`")),
        };
        if file.waveform.snapshots == 0 {
            return Err(Error::config("waveform.snapshots", "must be at least 1"));
        }
        if !(file.waveform.power > 0.0 && file.waveform.power.is_finite()) {
            return Err(Error::config("waveform.power", "must be positive"));
        }
        let scene = Scene::new(tx, rx, targets, file.carrier_hz, noise).map_err(|e| Error::config("targets", e.to_string()))?;
        if let Some(est) = &file.estimator {
            est.search_grid()?;
            if !(est.epsilon > 0.0) {
                return Err(Error::config("estimator.epsilon", "must be positive"));
            }
            if !(est.loading >= 0.0 && est.loading.is_finite()) {
                return Err(Error::config("estimator.loading", "must be non-negative"));
            }
            if est.k_max == Some(0) {
                return Err(Error::config("estimator.k_max", "must be at least 1"));
            }
        }
        if let Some(sw) = &file.sweep {
            if sw.trials == 0 {
                return Err(Error::config("sweep.trials", "must be at least 1"));
            }
            if sw.snr_db.is_empty() || sw.snr_db.iter().any(|v| !v.is_finite()) {
                return Err(Error::config("sweep.snr_db", "must be a non-empty list of finite values"));
            }
        }
        Ok(Self {
            file,
            scene,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        self.file.to_toml()
    }

    /// Waveform block from the file, or generated from mode, power and seed.
    pub fn waveform(&self) -> Result<SignalBlock> {
        let w = &self.file.waveform;
        let n = self.scene.tx.len();
        match &w.file {
            Some(path) => {
                let x = load_complex_csv(&resolve(&self.base_dir, path)).map_err(|e| Error::config("waveform.file", e.to_string()))?;
                if x.nrows() != n {
                    return Err(Error::config(
                        "waveform.file",
                        format!("waveform has {} rows, Tx array has {n} elements", x.nrows()),
                    ));
                }
                SignalBlock::transmit(x).map_err(|e| Error::config("waveform.file", e.to_string()))
            }
            None => generate_isotropic(n, w.snapshots, w.power, w.mode, w.seed).map_err(|e| Error::config("waveform", e.to_string())),
        }
    }

    /// Snapshot count used by the bounds.
    pub fn snapshots(&self) -> Result<usize> {
        match (&self.file.waveform.file, self.file.waveform.covariance) {
            (Some(_), CovarianceSource::Sample) => Ok(self.waveform()?.snapshots()),
            _ => Ok(self.file.waveform.snapshots),
        }
    }

    /// Transmit covariance and snapshot count for the bound computations.
    pub fn tx_covariance(&self) -> Result<(TxCovariance, usize)> {
        match self.file.waveform.covariance {
            CovarianceSource::Ideal => {
                if self.file.waveform.file.is_some() {
                    return Err(Error::config("waveform.covariance", "`ideal` cannot be combined with a waveform file"));
                }
                Ok((
                    TxCovariance::Isotropic {
                        power: self.file.waveform.power,
                        dim: self.scene.tx.len(),
                    },
                    self.file.waveform.snapshots,
                ))
            }
            CovarianceSource::Sample => {
                let x = self.waveform()?;
                Ok((TxCovariance::from_block(&x), x.snapshots()))
            }
        }
    }

    fn estimator_section(&self) -> Result<&EstimatorSection> {
        self.file
            .estimator
            .as_ref()
            .ok_or_else(|| Error::config("estimator", "an [estimator] section is required for localization"))
    }

    pub fn aco_config(&self) -> Result<AcoConfig> {
        let est = self.estimator_section()?;
        Ok(AcoConfig {
            grid: est.search_grid()?,
            epsilon: est.epsilon,
            max_updates: est.max_cycles,
        })
    }

    pub fn loading(&self) -> f64 {
        self.file.estimator.as_ref().map_or(DEFAULT_LOADING, |e| e.loading)
    }

    /// Number of targets the localizer looks for.
    pub fn k_max(&self) -> Result<usize> {
        let est = self.estimator_section()?;
        match est.k_max {
            Some(k) => Ok(k),
            None if !self.scene.targets.is_empty() => Ok(self.scene.targets.len()),
            None => Err(Error::config("estimator.k_max", "required when the scenario lists no targets")),
        }
    }

    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let sw = self
            .file
            .sweep
            .as_ref()
            .ok_or_else(|| Error::config("sweep", "a [sweep] section is required"))?;
        Ok(SweepConfig {
            snr_db: sw.snr_db.clone(),
            trials: sw.trials,
            master_seed: sw.master_seed,
            aco: self.aco_config()?,
            loading: self.loading(),
            noiseless: sw.noiseless,
        })
    }
}

impl EstimatorSection {
    pub fn search_grid(&self) -> Result<SearchGrid> {
        let grid = SearchGrid {
            min: position("estimator.region_min", self.region_min)?,
            max: position("estimator.region_max", self.region_max)?,
            initial_counts: self.initial_counts,
            refine_counts: self.refine_counts,
            refine_factor: self.refine_factor,
            stages: self.stages,
        };
        grid.validate().map_err(|e| Error::config("estimator", e.to_string()))?;
        Ok(grid)
    }
}
