//! Semiclassical Ramsey measurement under a residual detuning trace, and
//! the linewidth-versus-update-speed sweep built on it.

mod analysis;
mod sweep;

pub use analysis::{ramsey_linewidth, ramsey_peak_selection, ramsey_spectrum, LinewidthOptions, RamseyLinewidth};
pub use sweep::{
    check_feasibility, run_point, sweep_linewidth, write_sweep_csv, PointOutcome, SweepFlag, SweepInputs, SweepPoint,
    SweepRow, SWEEP_HEADER,
};

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::noisegen::NoiseTrace;
use crate::rng;

/// Free-evolution grid: explicit list or `count` points `start, start+step, ...`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EvolutionGrid {
    Linear { start_s: f64, step_s: f64, count: usize },
    Explicit(Vec<f64>),
}

impl EvolutionGrid {
    pub fn times(&self) -> Vec<f64> {
        match self {
            EvolutionGrid::Linear { start_s, step_s, count } => {
                (0..*count).map(|i| start_s + i as f64 * step_s).collect()
            }
            EvolutionGrid::Explicit(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Readout {
    /// Record the population itself.
    #[default]
    Ideal,
    /// Single-shot projective outcome, 0 or 1.
    Projective,
    /// Poisson photon counts with `photons_per_shot` in the bright state and
    /// `1 − contrast` of that in the dark state, rescaled to a population.
    Photon { contrast: f64, photons_per_shot: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acquisition {
    /// One shot per grid point per sweep, cycling through the grid.
    #[default]
    Interleaved,
    /// All shots of a point before moving to the next.
    Sequential,
}

fn default_shot_time() -> f64 {
    5e-3
}

fn default_exponent() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamseyConfig {
    pub bias_hz: f64,
    /// Further equal-weight lines at these biases (a split resonance).
    #[serde(default)]
    pub extra_biases_hz: Vec<f64>,
    pub t_evol: EvolutionGrid,
    pub shots_per_point: usize,
    #[serde(default = "default_shot_time")]
    pub shot_wall_time_s: f64,
    /// Decay not caused by the tracked noise; `None` means none.
    #[serde(default)]
    pub intrinsic_t2_s: Option<f64>,
    #[serde(default = "default_exponent")]
    pub decay_exponent: f64,
    #[serde(default)]
    pub readout: Readout,
    #[serde(default)]
    pub acquisition: Acquisition,
    /// Wall-clock time of the first shot, on the residual's time axis.
    #[serde(default)]
    pub start_s: f64,
}

impl RamseyConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.bias_hz.is_finite() && self.bias_hz >= 0.0, || {
            format!("bias_hz must be >= 0, got {}", self.bias_hz)
        })?;
        require(self.extra_biases_hz.iter().all(|b| b.is_finite() && *b >= 0.0), || {
            "extra_biases_hz must be finite and >= 0".into()
        })?;
        let t = self.t_evol.times();
        require(t.len() >= 2, || "t_evol needs at least 2 points".into())?;
        require(t.iter().all(|v| v.is_finite() && *v > 0.0), || "t_evol must be positive".into())?;
        require(t.windows(2).all(|w| w[1] > w[0]), || "t_evol must be ascending".into())?;
        require(self.shots_per_point >= 1, || "shots_per_point must be >= 1".into())?;
        require(self.shot_wall_time_s.is_finite() && self.shot_wall_time_s > 0.0, || {
            format!("shot_wall_time_s must be positive, got {}", self.shot_wall_time_s)
        })?;
        if let Some(t2) = self.intrinsic_t2_s {
            require(t2.is_finite() && t2 > 0.0, || format!("intrinsic_t2_s must be positive, got {t2}"))?;
        }
        require(self.decay_exponent >= 1.0 && self.decay_exponent.is_finite(), || {
            format!("decay_exponent must be >= 1, got {}", self.decay_exponent)
        })?;
        if let Readout::Photon { contrast, photons_per_shot } = self.readout {
            require(contrast > 0.0 && contrast <= 1.0, || {
                format!("readout contrast must be in (0, 1], got {contrast}")
            })?;
            require(photons_per_shot > 0.0, || "photons_per_shot must be positive".into())?;
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.t_evol.times().len()
    }

    pub fn total_shots(&self) -> usize {
        self.shots_per_point * self.n_points()
    }

    /// Wall-clock time covered by the whole acquisition.
    pub fn wall_span_s(&self) -> f64 {
        self.total_shots() as f64 * self.shot_wall_time_s
    }

    /// Wall-clock time of one pass over the grid.
    pub fn cycle_s(&self) -> f64 {
        self.n_points() as f64 * self.shot_wall_time_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyCurve {
    pub t_evol_s: Vec<f64>,
    pub signal: Vec<f64>,
    pub stderr: Vec<f64>,
    pub wall_start_s: f64,
    pub wall_span_s: f64,
    pub shots_per_point: usize,
}

impl RamseyCurve {
    /// Curve with no acquisition metadata, for analysis of external data.
    pub fn from_signal(t_evol_s: Vec<f64>, signal: Vec<f64>) -> Self {
        let n = signal.len();
        RamseyCurve { t_evol_s, signal, stderr: vec![0.0; n], wall_start_s: 0.0, wall_span_s: 0.0, shots_per_point: 1 }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        use crate::noisegen::fmt_g17;
        writeln!(w, "t_evol_s,signal,stderr")?;
        for i in 0..self.signal.len() {
            writeln!(w, "{},{},{}", fmt_g17(self.t_evol_s[i]), fmt_g17(self.signal[i]), fmt_g17(self.stderr[i]))?;
        }
        Ok(())
    }
}

/// Ideal population for detuning lines `deltas` at evolution time `t`.
fn population(t: f64, deltas: &[f64], envelope: f64) -> f64 {
    let fringe = deltas.iter().map(|d| (2.0 * PI * d * t).cos()).sum::<f64>() / deltas.len() as f64;
    0.5 * (1.0 + envelope * fringe)
}

/// Simulate the acquisition shot by shot in wall-clock order. At wall time
/// `s` every line's detuning is its bias plus the residual at `s`.
pub fn simulate_ramsey(residual: &NoiseTrace, cfg: &RamseyConfig, seed: u64) -> Result<RamseyCurve> {
    cfg.validate()?;
    residual.validate()?;
    let times = cfg.t_evol.times();
    let g = times.len();
    let end = cfg.start_s + cfg.wall_span_s();
    let tol = 1e-9 * end.abs().max(1.0);
    if cfg.start_s < residual.t0_s - tol || end > residual.end_s() + tol {
        return Err(Error::Coverage(format!(
            "acquisition spans [{}, {}] s but the residual covers [{}, {}] s",
            cfg.start_s,
            end,
            residual.t0_s,
            residual.end_s()
        )));
    }
    let envelopes: Vec<f64> = times
        .iter()
        .map(|&t| match cfg.intrinsic_t2_s {
            Some(t2) => (-(t / t2).powf(cfg.decay_exponent)).exp(),
            None => 1.0,
        })
        .collect();
    let mut biases = vec![cfg.bias_hz];
    biases.extend_from_slice(&cfg.extra_biases_hz);
    let mut deltas = vec![0.0; biases.len()];

    let mut rng = rng::rng(seed);
    // Welford accumulators per grid point
    let mut count = vec![0usize; g];
    let mut mean = vec![0.0; g];
    let mut m2 = vec![0.0; g];
    for shot in 0..cfg.total_shots() {
        let j = match cfg.acquisition {
            Acquisition::Interleaved => shot % g,
            Acquisition::Sequential => shot / cfg.shots_per_point,
        };
        let s = cfg.start_s + shot as f64 * cfg.shot_wall_time_s;
        let r = residual.interpolate(s);
        for (d, b) in deltas.iter_mut().zip(&biases) {
            *d = b + r;
        }
        let p = population(times[j], &deltas, envelopes[j]);
        let v = match cfg.readout {
            Readout::Ideal => p,
            Readout::Projective => f64::from(u8::from(rng.random::<f64>() < p)),
            Readout::Photon { contrast, photons_per_shot } => {
                let mean = photons_per_shot * (1.0 - contrast * (1.0 - p));
                let counts: f64 = Poisson::new(mean)
                    .map_err(|e| Error::Parameter(format!("photon mean {mean}: {e}")))?
                    .sample(&mut rng);
                (counts / photons_per_shot - (1.0 - contrast)) / contrast
            }
        };
        count[j] += 1;
        let d = v - mean[j];
        mean[j] += d / count[j] as f64;
        m2[j] += d * (v - mean[j]);
    }
    let k = cfg.shots_per_point as f64;
    let stderr = m2.iter().map(|&q| if k > 1.0 { (q / (k - 1.0) / k).sqrt() } else { 0.0 }).collect();
    let signal = mean;
    Ok(RamseyCurve {
        t_evol_s: times,
        signal,
        stderr,
        wall_start_s: cfg.start_s,
        wall_span_s: cfg.wall_span_s(),
        shots_per_point: cfg.shots_per_point,
    })
}
