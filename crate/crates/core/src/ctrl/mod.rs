//! Sample-and-hold correction loop and the noise-reduction metric.

mod efficiency;

pub use efficiency::{efficiency, efficiency_curve, sample_and_hold_efficiency};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::noisegen::{fmt_g17, NoiseTrace};
use crate::predictor::{OracleView, PredictorModel};
use crate::tracker::{EstimateFlag, EstimateStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Feedback,
    Feedforward,
    #[serde(alias = "ideal")]
    IdealFeedback,
    #[serde(alias = "open")]
    OpenLoop,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Feedback => "feedback",
            Scheme::Feedforward => "feedforward",
            Scheme::IdealFeedback => "ideal_feedback",
            Scheme::OpenLoop => "open_loop",
        }
    }

    pub fn needs_estimates(self) -> bool {
        matches!(self, Scheme::Feedback | Scheme::Feedforward)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlPolicy {
    pub scheme: Scheme,
    /// Update period τ; snapped to a whole number of trace samples.
    pub update_period_s: f64,
    /// Feedforward only: how far past the newest estimate's availability the
    /// applied prediction reaches. Equal to the tracker latency it cancels
    /// the detection delay; `None` means exactly that.
    #[serde(default)]
    pub horizon_s: Option<f64>,
    /// Count open-loop warm-up samples in the efficiency.
    #[serde(default)]
    pub include_warmup: bool,
}

impl ControlPolicy {
    pub fn new(scheme: Scheme, update_period_s: f64) -> Self {
        ControlPolicy { scheme, update_period_s, horizon_s: None, include_warmup: false }
    }

    pub fn validate(&self) -> Result<()> {
        require(self.update_period_s.is_finite() && self.update_period_s > 0.0, || {
            format!("update_period_s must be positive, got {}", self.update_period_s)
        })?;
        if let Some(h) = self.horizon_s {
            require(h.is_finite() && h >= 0.0, || format!("horizon_s must be >= 0, got {h}"))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scheme: Scheme,
    pub update_period_s: f64,
    pub update_steps: usize,
    pub horizon_s: Option<f64>,
    /// Leading samples held at zero because no usable estimate existed yet.
    pub warmup_samples: usize,
    pub include_warmup: bool,
    pub predictor_failures: usize,
    /// Updates that used an estimate flagged invalid or out of capture.
    pub held_estimates: usize,
    pub efficiency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRun {
    pub residual: NoiseTrace,
    /// `(t_s, c_hz)` at every update instant; the correction holds until
    /// the next entry.
    pub correction: Vec<(f64, f64)>,
    pub meta: RunMeta,
    pub estimates: Option<EstimateStream>,
}

impl ControlRun {
    /// Correction value in effect at each trace sample.
    pub fn correction_samples(&self) -> Vec<f64> {
        let steps = self.meta.update_steps;
        (0..self.residual.len()).map(|i| self.correction[i / steps].1).collect()
    }

    /// Residual with the warm-up removed unless the policy asked to keep it.
    pub fn scored_residual(&self) -> Result<NoiseTrace> {
        let skip = if self.meta.include_warmup { 0 } else { self.meta.warmup_samples };
        self.residual.tail_from_index(skip)
    }

    pub fn write_correction_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_s,c_hz")?;
        for &(t, c) in &self.correction {
            writeln!(w, "{},{}", fmt_g17(t), fmt_g17(c))?;
        }
        Ok(())
    }
}

/// Drive the loop over `trace`. The correction changes only at multiples of
/// the snapped update period and `residual = trace − correction`.
pub fn run_loop(
    trace: &NoiseTrace,
    estimates: Option<&EstimateStream>,
    policy: &ControlPolicy,
    predictor: Option<&PredictorModel>,
) -> Result<ControlRun> {
    policy.validate()?;
    trace.validate()?;
    let steps = ((policy.update_period_s / trace.dt_s).round() as usize).max(1);
    let tau = steps as f64 * trace.dt_s;
    if policy.scheme.needs_estimates() && estimates.is_none() {
        return Err(Error::Config(format!("scheme {} needs an estimate stream", policy.scheme.name())));
    }
    if policy.scheme == Scheme::Feedforward && predictor.is_none() {
        return Err(Error::Config("feedforward needs a predictor".into()));
    }

    let n_updates = (trace.len() - 1) / steps + 1;
    let mut correction = Vec::with_capacity(n_updates);
    let mut warmup_updates = 0usize;
    let mut started = !policy.scheme.needs_estimates();
    let mut predictor_failures = 0usize;
    let mut held_estimates = 0usize;
    let mut c = 0.0;
    for k in 0..n_updates {
        let i = k * steps;
        let t = trace.time_at(i);
        let next = match policy.scheme {
            Scheme::OpenLoop => Some(0.0),
            Scheme::IdealFeedback => Some(trace.values[i]),
            Scheme::Feedback => {
                let est = estimates.and_then(|s| s.latest_at(t));
                if let Some(e) = est {
                    if e.flag != EstimateFlag::Valid {
                        held_estimates += 1;
                    }
                }
                est.map(|e| e.est_hz)
            }
            Scheme::Feedforward => {
                let stream = estimates.expect("checked above");
                let model = predictor.expect("checked above");
                let avail = stream.available_at(t);
                if avail < model.m.max(1) {
                    None
                } else {
                    let recent: Vec<f64> = stream.entries[avail - model.m..avail].iter().map(|e| e.est_hz).collect();
                    let last = &stream.entries[avail - 1];
                    if last.flag != EstimateFlag::Valid {
                        held_estimates += 1;
                    }
                    let horizon = policy.horizon_s.unwrap_or(stream.latency_s);
                    let cadence = stream.cadence_s;
                    let j = ((t + horizon - last.t_avail_s) / cadence).round().clamp(0.0, model.n as f64) as usize;
                    if j == 0 {
                        Some(last.est_hz)
                    } else {
                        let view = OracleView {
                            trace,
                            t_last_avail_s: last.t_avail_s,
                            cadence_s: cadence,
                            latency_s: stream.latency_s,
                        };
                        match model.predict(&recent, Some(&view)) {
                            Ok(p) if p[j - 1].is_finite() => Some(p[j - 1]),
                            _ => {
                                predictor_failures += 1;
                                Some(c)
                            }
                        }
                    }
                }
            }
        };
        match next {
            Some(v) => {
                c = v;
                started = true;
            }
            None => {
                if !started {
                    warmup_updates += 1;
                }
            }
        }
        correction.push((t, c));
    }

    let residual = NoiseTrace {
        values: trace.values.iter().enumerate().map(|(i, v)| v - correction[i / steps].1).collect(),
        label: format!("{} residual", policy.scheme.name()),
        ..trace.clone()
    };
    let warmup_samples = (warmup_updates * steps).min(trace.len());
    let mut run = ControlRun {
        residual,
        correction,
        meta: RunMeta {
            scheme: policy.scheme,
            update_period_s: tau,
            update_steps: steps,
            horizon_s: if policy.scheme == Scheme::Feedforward { policy.horizon_s } else { None },
            warmup_samples,
            include_warmup: policy.include_warmup,
            predictor_failures,
            held_estimates,
            efficiency: None,
        },
        estimates: estimates.cloned(),
    };
    let skip = if policy.include_warmup { 0 } else { warmup_samples };
    if skip < trace.len() {
        let original = trace.tail_from_index(skip)?;
        run.meta.efficiency = efficiency(&original, &run.residual.tail_from_index(skip)?).ok();
    }
    Ok(run)
}
