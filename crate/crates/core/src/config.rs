//! Declarative run configuration shared by every command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ctrl::ControlPolicy;
use crate::error::{Error, Result};
use crate::noisegen::{generate, load_trace, NoiseComponent, NoiseSpec, NoiseTrace};
use crate::predictor::{build_dataset_split, train, Arch, PredictorKind, PredictorModel, TrainConfig, TrainingReport};
use crate::ramsey::{LinewidthOptions, RamseyConfig, SweepPoint};
use crate::rng::{derive_seed, stream};
use crate::tracker::TrackerConfig;

/// Synthetic noise definition. The noise seed defaults to one derived from
/// the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseBlock {
    pub components: Vec<NoiseComponent>,
    pub duration_s: f64,
    pub dt_s: f64,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl NoiseBlock {
    pub fn spec(&self, run_seed: u64) -> NoiseSpec {
        NoiseSpec {
            components: self.components.clone(),
            seed: self.seed.unwrap_or_else(|| derive_seed(run_seed, stream::NOISE)),
        }
    }

    pub fn generate(&self, run_seed: u64) -> Result<NoiseTrace> {
        generate(&self.spec(run_seed), self.duration_s, self.dt_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorBlock {
    #[serde(default = "PredictorBlock::default_kind")]
    pub kind: PredictorKind,
    #[serde(default)]
    pub arch: Arch,
    #[serde(default)]
    pub train: TrainConfig,
    /// Length of the separate training record; defaults to the run's noise
    /// duration.
    #[serde(default)]
    pub training_duration_s: Option<f64>,
    /// Use a saved model instead of training.
    #[serde(default)]
    pub model_path: Option<PathBuf>,
}

impl PredictorBlock {
    fn default_kind() -> PredictorKind {
        PredictorKind::Lstm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub points: Vec<SweepPoint>,
    #[serde(default = "SweepBlock::default_offset")]
    pub with_offset: bool,
    #[serde(default)]
    pub linewidth: LinewidthOptions,
}

impl SweepBlock {
    fn default_offset() -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub noise: Option<NoiseBlock>,
    /// CSV trace to use instead of synthetic noise.
    #[serde(default)]
    pub trace_path: Option<PathBuf>,
    #[serde(default)]
    pub tracker: Option<TrackerConfig>,
    #[serde(default)]
    pub control: Option<ControlPolicy>,
    #[serde(default)]
    pub predictor: Option<PredictorBlock>,
    #[serde(default)]
    pub ramsey: Option<RamseyConfig>,
    #[serde(default)]
    pub sweep: Option<SweepBlock>,
    /// Update speeds for an efficiency curve.
    #[serde(default)]
    pub efficiency_speeds_hz: Option<Vec<f64>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Parse and validate; errors name the offending field path.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if path == "." {
                Error::Config(inner.to_string())
            } else {
                Error::Config(format!("{path}: {inner}"))
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        let mut cfg = Self::from_json_str(&text)?;
        // relative paths inside a config resolve against its directory
        if let Some(dir) = path.as_ref().parent() {
            if let Some(p) = cfg.trace_path.as_mut() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
            if let Some(p) = cfg.predictor.as_mut().and_then(|b| b.model_path.as_mut()) {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
            if let Some(p) = cfg.output_dir.as_mut() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, e: Error| Error::Config(format!("{name}: {e}"));
        if self.noise.is_some() && self.trace_path.is_some() {
            return Err(Error::Config("give either `noise` or `trace_path`, not both".into()));
        }
        if let Some(n) = &self.noise {
            for (i, c) in n.components.iter().enumerate() {
                c.validate(n.dt_s).map_err(|e| field(&format!("noise.components[{i}]"), e))?;
            }
            if !(n.dt_s > 0.0 && n.duration_s >= n.dt_s) {
                return Err(Error::Config(format!(
                    "noise: need duration_s >= dt_s > 0, got duration {} dt {}",
                    n.duration_s, n.dt_s
                )));
            }
        }
        if let Some(t) = &self.tracker {
            t.validate().map_err(|e| field("tracker", e))?;
        }
        if let Some(c) = &self.control {
            c.validate().map_err(|e| field("control", e))?;
        }
        if let Some(p) = &self.predictor {
            p.arch.validate().map_err(|e| field("predictor.arch", e))?;
            p.train.validate().map_err(|e| field("predictor.train", e))?;
        }
        if let Some(r) = &self.ramsey {
            r.validate().map_err(|e| field("ramsey", e))?;
        }
        if let Some(s) = &self.sweep {
            if s.points.is_empty() {
                return Err(Error::Config("sweep.points: empty".into()));
            }
        }
        Ok(())
    }

    /// The drift trace: generated from `noise` or read from `trace_path`.
    pub fn trace(&self) -> Result<NoiseTrace> {
        match (&self.noise, &self.trace_path) {
            (Some(n), None) => n.generate(self.seed),
            (None, Some(p)) => load_trace(p),
            _ => Err(Error::Config("config needs `noise` or `trace_path`".into())),
        }
    }

    pub fn require_tracker(&self) -> Result<&TrackerConfig> {
        self.tracker.as_ref().ok_or_else(|| Error::Config("missing `tracker` block".into()))
    }

    pub fn require_ramsey(&self) -> Result<&RamseyConfig> {
        self.ramsey.as_ref().ok_or_else(|| Error::Config("missing `ramsey` block".into()))
    }
}

/// Train (or build) the predictor named by `block`. LSTM training uses a
/// separate noise record drawn from the same components with an independent
/// seed, tracked by `tracker`, so the model never sees the evaluation trace.
/// With a file trace instead of synthetic noise, training uses that trace.
pub fn prepare_predictor(
    cfg: &RunConfig,
    block: &PredictorBlock,
    tracker: &TrackerConfig,
) -> Result<(PredictorModel, Option<TrainingReport>)> {
    if block.kind != PredictorKind::Lstm {
        return Ok((PredictorModel::baseline(block.kind, block.arch.m, block.arch.n)?, None));
    }
    if let Some(p) = &block.model_path {
        return Ok((crate::predictor::load_model(p)?, None));
    }
    let (trace, track_seed) = match &cfg.noise {
        Some(noise) => {
            let base = noise.spec(cfg.seed).seed;
            let training_noise = NoiseBlock {
                duration_s: block.training_duration_s.unwrap_or(noise.duration_s),
                seed: Some(derive_seed(base, stream::TRAINING_NOISE)),
                ..noise.clone()
            };
            (training_noise.generate(cfg.seed)?, derive_seed(cfg.seed, stream::TRAINING_NOISE))
        }
        // a measured trace is all there is
        None => (cfg.trace()?, derive_seed(cfg.seed, stream::TRACKER)),
    };
    let estimates = tracker.track(&trace, track_seed)?;
    let series = estimates.values();
    let data = build_dataset_split(&series, block.arch.m, block.arch.n, block.train.validation_fraction)?;
    let tc = TrainConfig {
        seed: Some(block.train.seed.unwrap_or_else(|| derive_seed(cfg.seed, stream::TRAINING))),
        ..block.train.clone()
    };
    let (model, report) = train(&data, block.arch, &tc)?;
    Ok((model, Some(report)))
}
