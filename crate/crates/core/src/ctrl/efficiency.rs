use std::f64::consts::PI;

use rayon::prelude::*;

use super::{run_loop, ControlPolicy};
use crate::error::{Error, Result};
use crate::noisegen::{rms, NoiseTrace};
use crate::predictor::PredictorModel;
use crate::tracker::EstimateStream;

/// η = 1 − rms(residual)/rms(original), both about zero.
pub fn efficiency(original: &NoiseTrace, residual: &NoiseTrace) -> Result<f64> {
    if original.len() != residual.len() || original.dt_s != residual.dt_s {
        return Err(Error::Size("original and residual are on different grids".into()));
    }
    let r0 = rms(&original.values);
    if r0 == 0.0 {
        return Err(Error::UndefinedEfficiency);
    }
    Ok(1.0 - rms(&residual.values) / r0)
}

/// Phase-averaged η for a sine of frequency `f0` under ideal sample-and-hold
/// with period `tau`: 1 − √(2(1 − sin x / x)), x = 2π f0 τ. For small x this
/// is 1 − x/√3.
pub fn sample_and_hold_efficiency(f0_hz: f64, tau_s: f64) -> f64 {
    let x = 2.0 * PI * f0_hz * tau_s;
    if x == 0.0 {
        return 1.0;
    }
    1.0 - (2.0 * (1.0 - x.sin() / x)).max(0.0).sqrt()
}

/// η at each update speed ν (τ = 1/ν) for one scheme; points run in parallel.
pub fn efficiency_curve(
    trace: &NoiseTrace,
    speeds_hz: &[f64],
    policy: &ControlPolicy,
    estimates: Option<&EstimateStream>,
    predictor: Option<&PredictorModel>,
) -> Result<Vec<(f64, f64)>> {
    for &nu in speeds_hz {
        if !(nu > 0.0 && 1.0 / nu >= trace.dt_s * (1.0 - 1e-9)) {
            return Err(Error::Parameter(format!(
                "update speed {nu} Hz is not representable at dt = {} s",
                trace.dt_s
            )));
        }
    }
    speeds_hz
        .par_iter()
        .map(|&nu| {
            let p = ControlPolicy { update_period_s: 1.0 / nu, ..policy.clone() };
            let run = run_loop(trace, estimates, &p, predictor)?;
            let skip = if p.include_warmup { 0 } else { run.meta.warmup_samples };
            let eta = efficiency(&trace.tail_from_index(skip)?, &run.residual.tail_from_index(skip)?)?;
            Ok((nu, eta))
        })
        .collect()
}
