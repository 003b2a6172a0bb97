use rand_distr::{Distribution, Poisson};

use super::{Estimate, EstimateFlag, EstimateStream, OdmrConfig};
use crate::error::{Error, Result};
use crate::noisegen::NoiseTrace;
use crate::rng::{self, SimRng};
use crate::spectral::{fit_lines, lorentzian, PeakGuess};

/// ODMR tracking: one swept dip per period, acquired during the last
/// `n_points · dwell_s` of the period and centered on the previous valid
/// estimate. The fitted dip center is the estimate.
pub fn odmr_track(trace: &NoiseTrace, cfg: &OdmrConfig, seed: u64) -> Result<EstimateStream> {
    cfg.validate()?;
    trace.validate()?;
    let n_periods = (trace.duration_s() / cfg.period_s + 1e-9).floor() as usize;
    if n_periods == 0 {
        return Err(Error::Coverage(format!(
            "trace of {} s is shorter than one {} s tracking period",
            trace.duration_s(),
            cfg.period_s
        )));
    }
    let mut rng = rng::rng(seed);
    let sweep = cfg.sweep_s();
    let mut center = cfg.f0_hz;
    let mut held_sigma = f64::NAN;
    let mut entries = Vec::with_capacity(n_periods);
    for k in 0..n_periods {
        let t_avail = trace.t0_s + (k + 1) as f64 * cfg.period_s;
        let start = t_avail - sweep;
        let (x, y) = sweep_counts(trace, cfg, center, start, &mut rng)?;
        let entry = match fit_dip(&x, &y, cfg) {
            Some((c, s)) => {
                center = c;
                held_sigma = s;
                (c, s, EstimateFlag::Valid)
            }
            None => (center, held_sigma, EstimateFlag::Invalid),
        };
        entries.push(Estimate {
            t_avail_s: t_avail,
            t_eff_s: start + 0.5 * sweep,
            est_hz: entry.0,
            sigma_hz: entry.1,
            flag: entry.2,
        });
    }
    Ok(EstimateStream { entries, cadence_s: cfg.period_s, latency_s: cfg.latency_s() })
}

/// Drive frequencies and photon counts (normalized to the off-resonance
/// level) for one sweep beginning at `start`.
fn sweep_counts(
    trace: &NoiseTrace,
    cfg: &OdmrConfig,
    center: f64,
    start: f64,
    rng: &mut SimRng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = cfg.n_points;
    let gamma = cfg.linewidth();
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for j in 0..n {
        let f = center - 0.5 * cfg.range_hz + cfg.range_hz * j as f64 / (n - 1) as f64;
        let a = start + j as f64 * cfg.dwell_s;
        let resonance = dwell_average(trace, a, a + cfg.dwell_s);
        let expected = 1.0 - cfg.contrast * lorentzian(f, resonance, gamma, 1.0);
        let value = match cfg.count_rate_hz {
            None => expected,
            Some(rate) => {
                let mean = rate * cfg.dwell_s * expected;
                let dist = Poisson::new(mean).map_err(|e| Error::Parameter(format!("photon mean {mean}: {e}")))?;
                let counts: f64 = dist.sample(rng);
                counts / (rate * cfg.dwell_s)
            }
        };
        x.push(f);
        y.push(value);
    }
    Ok((x, y))
}

/// Mean of the trace samples inside `[a, b]`, or the interpolated value at
/// the midpoint when no sample falls inside.
fn dwell_average(trace: &NoiseTrace, a: f64, b: f64) -> f64 {
    let dt = trace.dt_s;
    let lo = ((a - trace.t0_s) / dt - 1e-9).ceil().max(0.0) as usize;
    let hi = ((b - trace.t0_s) / dt + 1e-9).floor();
    if hi < 0.0 || (hi as usize) < lo || lo >= trace.len() {
        return trace.interpolate(0.5 * (a + b));
    }
    let hi = (hi as usize).min(trace.len() - 1);
    let xs = &trace.values[lo..=hi];
    let x0 = xs[0];
    x0 + xs.iter().map(|v| v - x0).sum::<f64>() / xs.len() as f64
}

/// Fit a single dip; returns (center, 1σ) or `None` when the fit fails or
/// lands outside the swept range.
fn fit_dip(x: &[f64], y: &[f64], cfg: &OdmrConfig) -> Option<(f64, f64)> {
    // argmin; the strict comparison keeps the lowest frequency on ties
    let mut i_min = 0;
    for (i, v) in y.iter().enumerate() {
        if *v < y[i_min] {
            i_min = i;
        }
    }
    let base = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let guess = PeakGuess { center_hz: x[i_min], hwhm_hz: cfg.linewidth(), amplitude: y[i_min] - base };
    let fit = fit_lines(x, y, 1, Some(&[guess]), 0).ok()?;
    let p = fit.peaks[0];
    let inside = p.center_hz >= x[0] && p.center_hz <= x[x.len() - 1];
    if !(p.amplitude < 0.0 && inside && p.center_hz.is_finite()) {
        return None;
    }
    Some((p.center_hz, p.center_sigma_hz))
}
