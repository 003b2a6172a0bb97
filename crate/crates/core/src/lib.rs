//! Simulation and analysis of measurement-based drift correction on a
//! resonant sensor: drift synthesis, trackers with detection latency,
//! sample-and-hold feedback and feedforward control, an LSTM forecaster,
//! Ramsey dephasing and spectral lineshape fitting.

pub mod config;
pub mod ctrl;
pub mod error;
pub mod noisegen;
pub mod predictor;
pub mod ramsey;
pub mod rng;
pub mod spectral;
pub mod tracker;

pub use config::RunConfig;
pub use ctrl::{efficiency, run_loop, ControlPolicy, ControlRun, Scheme};
pub use error::{Error, Result};
pub use noisegen::{generate, load_trace, save_trace, NoiseComponent, NoiseSpec, NoiseTrace};
pub use predictor::{PredictorKind, PredictorModel};
pub use ramsey::{simulate_ramsey, RamseyConfig, RamseyCurve};
pub use spectral::{LinewidthFit, PeakFit, Spectrum};
pub use tracker::{EstimateStream, TrackerConfig};
