//! Frequency trackers: the ODMR sweep and the lock-in (LIA) estimator.
//! Both turn a drift trace into a stream of delayed, noisy estimates.

mod lia;
mod odmr;

pub use lia::lia_track;
pub use odmr::odmr_track;

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::noisegen::{fmt_g17, NoiseTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TrackerConfig {
    Odmr(OdmrConfig),
    Lia(LiaConfig),
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            TrackerConfig::Odmr(c) => c.validate(),
            TrackerConfig::Lia(c) => c.validate(),
        }
    }

    pub fn track(&self, trace: &NoiseTrace, seed: u64) -> Result<EstimateStream> {
        match self {
            TrackerConfig::Odmr(c) => odmr_track(trace, c, seed),
            TrackerConfig::Lia(c) => lia_track(trace, c, seed),
        }
    }
}

fn default_contrast() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdmrConfig {
    pub f0_hz: f64,
    /// Sweep span Δ.
    pub range_hz: f64,
    pub n_points: usize,
    pub dwell_s: f64,
    /// Tracking period τ.
    pub period_s: f64,
    #[serde(default = "default_contrast")]
    pub contrast: f64,
    /// Photon rate off resonance; `None` gives noiseless expected counts.
    #[serde(default)]
    pub count_rate_hz: Option<f64>,
    /// Dip HWHM; defaults to Δ/5.
    #[serde(default)]
    pub linewidth_hz: Option<f64>,
}

impl OdmrConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.f0_hz.is_finite(), || "odmr f0_hz must be finite".into())?;
        require(self.range_hz.is_finite() && self.range_hz > 0.0, || {
            format!("odmr range_hz must be positive, got {}", self.range_hz)
        })?;
        require(self.n_points >= 5, || format!("odmr n_points must be >= 5 to fit a dip, got {}", self.n_points))?;
        require(self.dwell_s.is_finite() && self.dwell_s > 0.0, || {
            format!("odmr dwell_s must be positive, got {}", self.dwell_s)
        })?;
        require(self.period_s.is_finite() && self.period_s > 0.0, || {
            format!("odmr period_s must be positive, got {}", self.period_s)
        })?;
        require(self.sweep_s() <= self.period_s * (1.0 + 1e-12), || {
            format!("odmr sweep ({} s) does not fit in the period ({} s)", self.sweep_s(), self.period_s)
        })?;
        require(self.contrast > 0.0 && self.contrast <= 1.0, || {
            format!("odmr contrast must be in (0, 1], got {}", self.contrast)
        })?;
        if let Some(r) = self.count_rate_hz {
            require(r.is_finite() && r > 0.0, || format!("odmr count_rate_hz must be positive, got {r}"))?;
        }
        if let Some(w) = self.linewidth_hz {
            require(w.is_finite() && w > 0.0, || format!("odmr linewidth_hz must be positive, got {w}"))?;
        }
        Ok(())
    }

    pub fn sweep_s(&self) -> f64 {
        self.n_points as f64 * self.dwell_s
    }

    pub fn linewidth(&self) -> f64 {
        self.linewidth_hz.unwrap_or(self.range_hz / 5.0)
    }

    /// The sweep occupies the last `n_points · dwell_s` of each period, so
    /// the estimate is available half a sweep after its effective time.
    pub fn latency_s(&self) -> f64 {
        0.5 * self.sweep_s()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LiaConfig {
    /// Detection window w.
    pub window_s: f64,
    pub update_period_s: f64,
    /// Estimator standard deviation at 1 s of integration, in Hz·√s.
    pub sigma_floor_hz: f64,
    pub capture_range_hz: f64,
}

impl LiaConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.window_s.is_finite() && self.window_s > 0.0, || {
            format!("lia window_s must be positive, got {}", self.window_s)
        })?;
        require(self.update_period_s.is_finite() && self.update_period_s > 0.0, || {
            format!("lia update_period_s must be positive, got {}", self.update_period_s)
        })?;
        require(self.sigma_floor_hz.is_finite() && self.sigma_floor_hz >= 0.0, || {
            format!("lia sigma_floor_hz must be >= 0, got {}", self.sigma_floor_hz)
        })?;
        require(self.capture_range_hz > 0.0, || {
            format!("lia capture_range_hz must be positive, got {}", self.capture_range_hz)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateFlag {
    Valid,
    /// Fit failed; value held from the last valid estimate.
    Invalid,
    /// True offset outside the capture range; value held.
    OutOfCapture,
}

impl EstimateFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimateFlag::Valid => "valid",
            EstimateFlag::Invalid => "invalid",
            EstimateFlag::OutOfCapture => "out_of_capture",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "valid" => Some(EstimateFlag::Valid),
            "invalid" => Some(EstimateFlag::Invalid),
            "out_of_capture" => Some(EstimateFlag::OutOfCapture),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub t_avail_s: f64,
    pub t_eff_s: f64,
    pub est_hz: f64,
    pub sigma_hz: f64,
    pub flag: EstimateFlag,
}

impl Estimate {
    pub fn latency_s(&self) -> f64 {
        self.t_avail_s - self.t_eff_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateStream {
    pub entries: Vec<Estimate>,
    /// Spacing of successive `t_avail_s`.
    pub cadence_s: f64,
    /// Nominal `t_avail_s − t_eff_s`.
    pub latency_s: f64,
}

impl EstimateStream {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of entries available at time `t` (those with `t_avail_s <= t`).
    /// Times within a nanosecond-scale tolerance count as available.
    pub fn available_at(&self, t: f64) -> usize {
        let tol = 1e-9 * t.abs().max(1.0);
        self.entries.partition_point(|e| e.t_avail_s <= t + tol)
    }

    /// Latest estimate usable at time `t`.
    pub fn latest_at(&self, t: f64) -> Option<&Estimate> {
        match self.available_at(t) {
            0 => None,
            k => Some(&self.entries[k - 1]),
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.est_hz).collect()
    }

    pub fn count_flag(&self, flag: EstimateFlag) -> usize {
        self.entries.iter().filter(|e| e.flag == flag).count()
    }

    /// Checks the ordering and causality invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.entries.iter().enumerate() {
            if !(e.t_avail_s >= e.t_eff_s) {
                return Err(Error::Parameter(format!("estimate {i} is acausal")));
            }
            if i > 0 && !(e.t_avail_s > self.entries[i - 1].t_avail_s) {
                return Err(Error::Parameter(format!("estimate {i} is out of order")));
            }
        }
        Ok(())
    }
}

pub const ESTIMATE_HEADER: &str = "t_avail_s,t_eff_s,est_hz,sigma_hz,flag";

pub fn write_estimates<W: Write>(stream: &EstimateStream, mut w: W) -> Result<()> {
    writeln!(w, "{ESTIMATE_HEADER}")?;
    for e in &stream.entries {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_g17(e.t_avail_s),
            fmt_g17(e.t_eff_s),
            fmt_g17(e.est_hz),
            fmt_g17(e.sigma_hz),
            e.flag.as_str()
        )?;
    }
    Ok(())
}

/// Parse an estimate CSV. Cadence and latency are recovered from the rows.
pub fn read_estimates<R: Read>(r: R) -> Result<EstimateStream> {
    let mut entries = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let row = i + 1;
        if i == 0 {
            if line.trim() != ESTIMATE_HEADER {
                return Err(Error::Format { row, msg: format!("expected header `{ESTIMATE_HEADER}`") });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Format { row, msg: format!("expected 5 columns, got {}", cols.len()) });
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format { row, msg: format!("`{s}`: {e}") });
        let flag = EstimateFlag::parse(cols[4].trim())
            .ok_or_else(|| Error::Format { row, msg: format!("unknown flag `{}`", cols[4]) })?;
        entries.push(Estimate {
            t_avail_s: num(cols[0])?,
            t_eff_s: num(cols[1])?,
            est_hz: num(cols[2])?,
            sigma_hz: num(cols[3])?,
            flag,
        });
    }
    let cadence_s = if entries.len() > 1 { entries[1].t_avail_s - entries[0].t_avail_s } else { 0.0 };
    let latency_s = entries.first().map_or(0.0, Estimate::latency_s);
    let stream = EstimateStream { entries, cadence_s, latency_s };
    stream.validate()?;
    Ok(stream)
}

/// Number of whole trace samples spanning `span_s`; at least one.
pub(crate) fn samples_for(span_s: f64, dt_s: f64) -> usize {
    ((span_s / dt_s).round() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let stream = EstimateStream {
            entries: vec![
                Estimate {
                    t_avail_s: 20.0,
                    t_eff_s: 10.0,
                    est_hz: 0.1 + 0.2,
                    sigma_hz: 3.0,
                    flag: EstimateFlag::Valid,
                },
                Estimate {
                    t_avail_s: 21.0,
                    t_eff_s: 11.0,
                    est_hz: -1e-7,
                    sigma_hz: 3.0,
                    flag: EstimateFlag::OutOfCapture,
                },
            ],
            cadence_s: 1.0,
            latency_s: 10.0,
        };
        let mut buf = Vec::new();
        write_estimates(&stream, &mut buf).unwrap();
        let back = read_estimates(buf.as_slice()).unwrap();
        assert_eq!(back, stream);
    }

    #[test]
    fn latest_lookup() {
        let mk =
            |t: f64| Estimate { t_avail_s: t, t_eff_s: t - 1.0, est_hz: t, sigma_hz: 0.0, flag: EstimateFlag::Valid };
        let s = EstimateStream { entries: vec![mk(1.0), mk(2.0), mk(3.0)], cadence_s: 1.0, latency_s: 1.0 };
        assert!(s.latest_at(0.5).is_none());
        assert_eq!(s.latest_at(2.0).unwrap().est_hz, 2.0);
        assert_eq!(s.latest_at(2.9).unwrap().est_hz, 2.0);
        assert_eq!(s.latest_at(10.0).unwrap().est_hz, 3.0);
    }
}
