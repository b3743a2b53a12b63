//! Near-field MIMO radar: Cramér-Rao bounds for 3D target positions and
//! complex reflection coefficients, and a cyclic maximum-likelihood
//! localizer.

pub mod channel;
pub mod config;
pub mod crb;
pub mod estimator;
pub mod error;
pub mod io;
pub mod montecarlo;
pub mod numerics;
pub mod scene;
pub mod synth;
pub mod waveform;

pub use channel::{build_steering_set, steering_matrix, steering_vector, AmplitudeModel, SteeringSet};
pub use config::Scenario;
pub use crb::{
    assemble_fisher, constant_amplitude_crb, crb_matrix, exact_position_crbs, fisher_blocks, numeric_fisher_oracle,
    position_crb, FisherBlocks, FisherBundle,
};
pub use estimator::{aco_localize, AcoConfig, LikelihoodContext, Localization, SearchGrid};
pub use montecarlo::{match_targets, run_sweep, SweepConfig, SweepReport};
pub use error::{Error, Result};
pub use numerics::{CMatrix, CVector, RMatrix};
pub use scene::{build_upa, wavelength, ArrayGeometry, Axis, NoiseCovariance, Plane, Position3, Scene, Target};
pub use waveform::{generate_isotropic, SignalBlock, SignalRole, TxCovariance, WaveformMode};

pub use num_complex::Complex64;
