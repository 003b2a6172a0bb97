use rand_distr::{Distribution, StandardNormal};

use super::{samples_for, Estimate, EstimateFlag, EstimateStream, LiaConfig};
use crate::error::{Error, Result};
use crate::noisegen::NoiseTrace;
use crate::rng;

/// Lock-in tracking: a trailing moving average over the window plus white
/// estimator noise of σ = sigma_floor / √w. Window and cadence are snapped
/// to whole trace samples.
pub fn lia_track(trace: &NoiseTrace, cfg: &LiaConfig, seed: u64) -> Result<EstimateStream> {
    cfg.validate()?;
    trace.validate()?;
    let dt = trace.dt_s;
    let m = samples_for(cfg.window_s, dt);
    let step = samples_for(cfg.update_period_s, dt);
    if trace.len() <= m {
        return Err(Error::Coverage(format!(
            "trace of {} s is shorter than the {} s window",
            trace.duration_s(),
            cfg.window_s
        )));
    }
    let window = m as f64 * dt;
    let sigma = cfg.sigma_floor_hz / window.sqrt();
    let mut rng = rng::rng(seed);
    let mut entries = Vec::with_capacity((trace.len() - m) / step + 1);
    let mut held = (0.0, sigma);
    let mut i = m;
    while i < trace.len() {
        let xs = &trace.values[i - m..=i];
        // averaging deviations from the first sample keeps constants exact
        let x0 = xs[0];
        let mean = x0 + xs.iter().map(|v| v - x0).sum::<f64>() / xs.len() as f64;
        let z: f64 = StandardNormal.sample(&mut rng);
        let t = trace.time_at(i);
        let (est, sig, flag) = if trace.values[i].abs() > cfg.capture_range_hz {
            (held.0, held.1, EstimateFlag::OutOfCapture)
        } else {
            let e = mean + sigma * z;
            held = (e, sigma);
            (e, sigma, EstimateFlag::Valid)
        };
        entries.push(Estimate { t_avail_s: t, t_eff_s: t - 0.5 * window, est_hz: est, sigma_hz: sig, flag });
        i += step;
    }
    Ok(EstimateStream { entries, cadence_s: step as f64 * dt, latency_s: 0.5 * window })
}
