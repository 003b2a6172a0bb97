//! Forecasters mapping the most recent M estimates to the next N: a
//! hand-written LSTM plus persistence, linear-extrapolation and oracle
//! baselines.

mod dataset;
pub mod lstm;
mod persist;
mod train;

pub use dataset::{build_dataset, build_dataset_split, build_with_norm, Normalization, WindowDataset, STD_FLOOR_HZ};
pub use persist::{load_model, model_from_json, model_to_json, save_model, FORMAT_VERSION};
pub use train::{grad_check, loss_and_grad, mse, train, GradCheck, TrainConfig, TrainingReport};

use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::noisegen::NoiseTrace;
use lstm::Layout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arch {
    pub hidden: usize,
    pub m: usize,
    pub n: usize,
}

impl Default for Arch {
    fn default() -> Self {
        Arch { hidden: 32, m: 60, n: 10 }
    }
}

impl Arch {
    pub fn validate(&self) -> Result<()> {
        require(self.hidden >= 1 && self.m >= 1 && self.n >= 1, || {
            format!("architecture sizes must be positive: {self:?}")
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Lstm,
    Persistence,
    Oracle,
    LinearExtrap,
}

/// Side channel giving the oracle predictor the true trace. Output `j`
/// (1-based) is the trace at the effective time of the estimate that would
/// become available `j` cadences after `t_last_avail_s`.
#[derive(Debug, Clone, Copy)]
pub struct OracleView<'a> {
    pub trace: &'a NoiseTrace,
    pub t_last_avail_s: f64,
    pub cadence_s: f64,
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub kind: PredictorKind,
    pub m: usize,
    pub n: usize,
    pub hidden: usize,
    pub norm: Normalization,
    /// Flat LSTM parameters (see [`lstm::Layout`]); empty for baselines.
    pub params: Vec<f64>,
}

impl PredictorModel {
    pub fn baseline(kind: PredictorKind, m: usize, n: usize) -> Result<Self> {
        if kind == PredictorKind::Lstm {
            return Err(Error::Model("an LSTM model needs weights; use train".into()));
        }
        let model = PredictorModel { kind, m, n, hidden: 0, norm: Normalization::identity(), params: Vec::new() };
        model.validate()?;
        Ok(model)
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.hidden, self.n)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Model(format!("M and N must be positive, got M={} N={}", self.m, self.n)));
        }
        if !(self.norm.scale_hz > 0.0 && self.norm.scale_hz.is_finite() && self.norm.mean_hz.is_finite()) {
            return Err(Error::Model("normalization must be finite with positive scale".into()));
        }
        match self.kind {
            PredictorKind::Lstm => {
                if self.hidden == 0 {
                    return Err(Error::Model("LSTM hidden width must be positive".into()));
                }
                let want = self.layout().len();
                if self.params.len() != want {
                    return Err(Error::Model(format!(
                        "expected {want} LSTM parameters for H={} N={}, got {}",
                        self.hidden,
                        self.n,
                        self.params.len()
                    )));
                }
                if self.params.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Model("LSTM weights must be finite".into()));
                }
            }
            _ => {
                if !self.params.is_empty() {
                    return Err(Error::Model(format!("{:?} predictor carries no weights", self.kind)));
                }
            }
        }
        Ok(())
    }

    /// N predicted values following `recent` (length M, oldest first).
    pub fn predict(&self, recent: &[f64], oracle: Option<&OracleView>) -> Result<Vec<f64>> {
        if recent.len() != self.m {
            return Err(Error::Model(format!("expected {} recent values, got {}", self.m, recent.len())));
        }
        match self.kind {
            PredictorKind::Persistence => Ok(vec![recent[self.m - 1]; self.n]),
            PredictorKind::LinearExtrap => Ok(linear_extrap(recent, self.n)),
            PredictorKind::Oracle => {
                let view = oracle.ok_or_else(|| Error::Config("oracle predictor has no bound trace".into()))?;
                Ok((1..=self.n)
                    .map(|j| {
                        let t = view.t_last_avail_s + j as f64 * view.cadence_s - view.latency_s;
                        view.trace.values[view.trace.index_of(t)]
                    })
                    .collect())
            }
            PredictorKind::Lstm => self.lstm_forward(recent),
        }
    }

    /// Normalize, run the recurrence from a zero state, de-normalize.
    pub fn lstm_forward(&self, recent: &[f64]) -> Result<Vec<f64>> {
        if self.kind != PredictorKind::Lstm {
            return Err(Error::Model("lstm_forward on a non-LSTM model".into()));
        }
        self.validate()?;
        if recent.len() != self.m {
            return Err(Error::Model(format!("expected {} recent values, got {}", self.m, recent.len())));
        }
        let x: Vec<f64> = recent.iter().map(|&v| self.norm.forward(v)).collect();
        let mut out = vec![0.0; self.n];
        lstm::forward(&self.params, self.layout(), &x, &mut out, None);
        Ok(out.into_iter().map(|z| self.norm.inverse(z)).collect())
    }

    /// Largest possible |output − mean_hz|: the hidden state lies in
    /// [−1, 1], so each output is bounded by its FC row's L1 norm plus bias.
    pub fn output_bound(&self) -> f64 {
        if self.kind != PredictorKind::Lstm {
            return f64::INFINITY;
        }
        let l = self.layout();
        let h = self.hidden;
        let w = &self.params[l.fc_w()..l.fc_b()];
        let b = &self.params[l.fc_b()..];
        (0..self.n).map(|j| w[j * h..(j + 1) * h].iter().map(|v| v.abs()).sum::<f64>() + b[j].abs()).fold(0.0, f64::max)
            * self.norm.scale_hz
    }
}

/// Least-squares line through the points at x = 0..M−1, evaluated at
/// x = M−1+j for j = 1..N.
fn linear_extrap(y: &[f64], n: usize) -> Vec<f64> {
    let m = y.len();
    if m == 1 {
        return vec![y[0]; n];
    }
    let mx = (m - 1) as f64 / 2.0;
    let my = y.iter().sum::<f64>() / m as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    let b = sxy / sxx;
    (1..=n).map(|j| my + b * ((m - 1 + j) as f64 - mx)).collect()
}
