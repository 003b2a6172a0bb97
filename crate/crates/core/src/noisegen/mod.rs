//! Resonance-drift traces: the signal every tracker, controller and Ramsey
//! simulation consumes.

mod csv;
mod generate;

pub use self::csv::{fmt_g17, load_trace, read_trace, save_trace, write_trace};
pub use self::generate::{generate, generate_component};

use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};

/// Uniformly sampled resonance-frequency offset (Hz) versus time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTrace {
    pub dt_s: f64,
    pub t0_s: f64,
    pub values: Vec<f64>,
    #[serde(default)]
    pub label: String,
}

impl NoiseTrace {
    pub fn new(dt_s: f64, t0_s: f64, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let trace = NoiseTrace { dt_s, t0_s, values, label: label.into() };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        require(self.dt_s.is_finite() && self.dt_s > 0.0, || {
            format!("trace dt_s must be positive, got {}", self.dt_s)
        })?;
        require(self.t0_s.is_finite(), || "trace t0_s must be finite".into())?;
        require(!self.values.is_empty(), || "trace has no samples".into())?;
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("trace sample {i} is not finite")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time of sample `i`, computed directly so there is no accumulated rounding.
    pub fn time_at(&self, i: usize) -> f64 {
        self.t0_s + i as f64 * self.dt_s
    }

    pub fn duration_s(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.dt_s
    }

    pub fn end_s(&self) -> f64 {
        self.time_at(self.values.len() - 1)
    }

    /// Nearest sample index for time `t`, clamped to the trace.
    pub fn index_of(&self, t: f64) -> usize {
        let p = ((t - self.t0_s) / self.dt_s).round();
        if p <= 0.0 {
            0
        } else {
            (p as usize).min(self.values.len() - 1)
        }
    }

    /// Linear interpolation at time `t`; clamps outside the trace.
    pub fn interpolate(&self, t: f64) -> f64 {
        let p = (t - self.t0_s) / self.dt_s;
        interp_at(&self.values, p)
    }

    /// Root mean square about zero.
    pub fn rms(&self) -> f64 {
        rms(&self.values)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Samples from index `start` onwards as a new trace with shifted `t0_s`.
    pub fn tail_from_index(&self, start: usize) -> Result<NoiseTrace> {
        if start >= self.values.len() {
            return Err(Error::Size(format!("cannot slice trace of {} samples at {}", self.values.len(), start)));
        }
        Ok(NoiseTrace {
            dt_s: self.dt_s,
            t0_s: self.time_at(start),
            values: self.values[start..].to_vec(),
            label: self.label.clone(),
        })
    }

    /// Elementwise `self + other`; the two traces must share a grid.
    pub fn add(&self, other: &NoiseTrace) -> Result<NoiseTrace> {
        if self.len() != other.len() || self.dt_s != other.dt_s {
            return Err(Error::Size("traces are on different grids".into()));
        }
        Ok(NoiseTrace { values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(), ..self.clone() })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> NoiseTrace {
        NoiseTrace { values: self.values.iter().map(|&v| f(v)).collect(), ..self.clone() }
    }
}

pub(crate) fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Piecewise-linear lookup at fractional index `p`, exact on grid points.
pub(crate) fn interp_at(values: &[f64], p: f64) -> f64 {
    let last = values.len() - 1;
    if p <= 0.0 {
        return values[0];
    }
    if p >= last as f64 {
        return values[last];
    }
    let j = p.floor() as usize;
    let frac = p - j as f64;
    if frac == 0.0 {
        values[j]
    } else {
        values[j] + frac * (values[j + 1] - values[j])
    }
}

/// Linear re-gridding onto period `dt_new`. The new grid starts at `t0_s`
/// and ends at the last grid point not beyond the original end.
pub fn resample(trace: &NoiseTrace, dt_new: f64) -> Result<NoiseTrace> {
    require(dt_new.is_finite() && dt_new > 0.0, || format!("resample period must be positive, got {dt_new}"))?;
    let ratio = dt_new / trace.dt_s;
    let span = (trace.len() - 1) as f64 / ratio;
    let n = (span + 1e-9).floor() as usize + 1;
    let values = (0..n).map(|i| interp_at(&trace.values, i as f64 * ratio)).collect();
    Ok(NoiseTrace { dt_s: dt_new, t0_s: trace.t0_s, values, label: trace.label.clone() })
}

/// One additive constituent of a synthetic drift trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseComponent {
    /// Ornstein-Uhlenbeck process, started from its stationary distribution.
    Ou {
        relaxation_rate_per_s: f64,
        stationary_std_hz: f64,
    },
    /// Band-limited power law, PSD ∝ f^-exponent between the cutoffs.
    PowerLaw {
        exponent: f64,
        rms_hz: f64,
        low_cutoff_hz: f64,
        high_cutoff_hz: f64,
    },
    Sine {
        amplitude_hz: f64,
        frequency_hz: f64,
        #[serde(default)]
        phase_rad: f64,
    },
    Constant {
        offset_hz: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub components: Vec<NoiseComponent>,
    pub seed: u64,
}

impl NoiseComponent {
    pub fn validate(&self, dt_s: f64) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match *self {
            NoiseComponent::Ou { relaxation_rate_per_s, stationary_std_hz } => {
                require(finite(&[relaxation_rate_per_s, stationary_std_hz]), || "ou parameters must be finite".into())?;
                require(relaxation_rate_per_s > 0.0, || "ou relaxation rate must be positive".into())?;
                require(stationary_std_hz >= 0.0, || "ou stationary std must be non-negative".into())
            }
            NoiseComponent::PowerLaw { exponent, rms_hz, low_cutoff_hz, high_cutoff_hz } => {
                require(finite(&[exponent, rms_hz, low_cutoff_hz, high_cutoff_hz]), || {
                    "power-law parameters must be finite".into()
                })?;
                require((0.0..=3.0).contains(&exponent), || format!("power-law exponent {exponent} outside [0, 3]"))?;
                require(rms_hz >= 0.0, || "power-law rms must be non-negative".into())?;
                require(low_cutoff_hz > 0.0 && low_cutoff_hz < high_cutoff_hz, || {
                    "power-law cutoffs must satisfy 0 < low < high".into()
                })?;
                let nyquist = 0.5 / dt_s;
                if high_cutoff_hz > nyquist * (1.0 + 1e-12) {
                    return Err(Error::Nyquist { dt_s, freq_hz: high_cutoff_hz, nyquist_hz: nyquist });
                }
                Ok(())
            }
            NoiseComponent::Sine { amplitude_hz, frequency_hz, phase_rad } => {
                require(finite(&[amplitude_hz, frequency_hz, phase_rad]), || "sine parameters must be finite".into())?;
                require(frequency_hz >= 0.0, || "sine frequency must be >= 0".into())
            }
            NoiseComponent::Constant { offset_hz } => {
                require(offset_hz.is_finite(), || "constant offset must be finite".into())
            }
        }
    }
}
