use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::analysis::{ramsey_linewidth, LinewidthOptions, RamseyLinewidth};
use super::{simulate_ramsey, RamseyConfig, RamseyCurve};
use crate::ctrl::{run_loop, ControlPolicy, RunMeta, Scheme};
use crate::error::{Error, Result};
use crate::noisegen::{fmt_g17, NoiseTrace};
use crate::predictor::PredictorModel;
use crate::rng::{derive_seed, stream};
use crate::spectral::{fit_ramsey_decay, DecayFit};
use crate::tracker::TrackerConfig;

/// One point of the sweep. `nu_hz` labels the point; the update period
/// defaults to `1/nu_hz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPoint {
    pub nu_hz: f64,
    pub scheme: Scheme,
    #[serde(default)]
    pub update_period_s: Option<f64>,
    /// Overrides the sweep-wide tracker.
    #[serde(default)]
    pub tracker: Option<TrackerConfig>,
    #[serde(default)]
    pub horizon_s: Option<f64>,
}

impl SweepPoint {
    pub fn update_period(&self) -> f64 {
        self.update_period_s.unwrap_or(1.0 / self.nu_hz)
    }
}

pub struct SweepInputs<'a> {
    pub trace: &'a NoiseTrace,
    pub points: &'a [SweepPoint],
    pub tracker: Option<&'a TrackerConfig>,
    pub predictor: Option<&'a PredictorModel>,
    pub ramsey: &'a RamseyConfig,
    pub linewidth: LinewidthOptions,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFlag {
    Ok,
    /// Linewidth fitted but the decay fit is an extrapolation.
    DecayUnreliable,
    DecayFitFailed,
    LinewidthFitFailed,
    Failed,
}

impl SweepFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepFlag::Ok => "ok",
            SweepFlag::DecayUnreliable => "decay_unreliable",
            SweepFlag::DecayFitFailed => "decay_fit_failed",
            SweepFlag::LinewidthFitFailed => "linewidth_fit_failed",
            SweepFlag::Failed => "failed",
        }
    }

    /// Whether the row carries a usable linewidth.
    pub fn has_linewidth(self) -> bool {
        matches!(self, SweepFlag::Ok | SweepFlag::DecayUnreliable | SweepFlag::DecayFitFailed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub nu_hz: f64,
    pub scheme: Scheme,
    pub update_period_s: f64,
    pub l_hz: f64,
    pub l_sigma_hz: f64,
    pub t2_star_s: f64,
    pub flag: SweepFlag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointOutcome {
    pub row: SweepRow,
    pub run: Option<RunMeta>,
    pub residual_rms_hz: Option<f64>,
    pub curve: Option<RamseyCurve>,
    pub linewidth: Option<RamseyLinewidth>,
    pub decay: Option<DecayFit>,
}

/// Hard checks before any computation: each update period fits the trace
/// grid, the Ramsey acquisition fits the trace, and one pass over the
/// evolution grid takes at most a quarter of 1/ν for the fastest ν.
pub fn check_feasibility(trace: &NoiseTrace, points: &[SweepPoint], ramsey: &RamseyConfig) -> Result<()> {
    ramsey.validate()?;
    let mut fastest = f64::INFINITY;
    for p in points {
        let tau = p.update_period();
        if !(p.nu_hz > 0.0 && tau.is_finite() && tau >= trace.dt_s * (1.0 - 1e-9)) {
            return Err(Error::Feasibility(format!(
                "point ν = {} Hz: update period {tau} s is below the trace step {} s",
                p.nu_hz, trace.dt_s
            )));
        }
        fastest = fastest.min(1.0 / p.nu_hz);
    }
    let end = ramsey.start_s + ramsey.wall_span_s();
    if ramsey.start_s < trace.t0_s || end > trace.end_s() + 1e-9 * end.abs().max(1.0) {
        return Err(Error::Feasibility(format!(
            "Ramsey acquisition [{}, {end}] s is not covered by the trace [{}, {}] s",
            ramsey.start_s,
            trace.t0_s,
            trace.end_s()
        )));
    }
    if ramsey.cycle_s() > 0.25 * fastest {
        return Err(Error::Feasibility(format!(
            "one pass over the evolution grid takes {} s, more than a quarter of 1/ν = {fastest} s for the fastest point",
            ramsey.cycle_s()
        )));
    }
    Ok(())
}

/// Tracker → loop → Ramsey → linewidth and decay fits for point `index`.
/// Failures are reported in the row, never as an `Err`.
pub fn run_point(inputs: &SweepInputs, index: usize) -> PointOutcome {
    let p = &inputs.points[index];
    let tau = p.update_period();
    let mut out = PointOutcome {
        row: SweepRow {
            nu_hz: p.nu_hz,
            scheme: p.scheme,
            update_period_s: tau,
            l_hz: f64::NAN,
            l_sigma_hz: f64::NAN,
            t2_star_s: f64::NAN,
            flag: SweepFlag::Failed,
            error: None,
        },
        run: None,
        residual_rms_hz: None,
        curve: None,
        linewidth: None,
        decay: None,
    };
    let seed = derive_seed(inputs.seed, stream::SWEEP_POINT + index as u64);
    let curve = match simulate_point(inputs, p, seed) {
        Ok((meta, rms, curve)) => {
            out.row.update_period_s = meta.update_period_s;
            out.run = Some(meta);
            out.residual_rms_hz = Some(rms);
            curve
        }
        Err(e) => {
            out.row.error = Some(e.to_string());
            return out;
        }
    };
    match ramsey_linewidth(&curve, &inputs.linewidth) {
        Ok(lw) => {
            out.row.l_hz = lw.l_hz;
            out.row.l_sigma_hz = lw.l_sigma_hz;
            out.linewidth = Some(lw);
        }
        Err(e) => {
            out.row.flag = SweepFlag::LinewidthFitFailed;
            out.row.error = Some(e.to_string());
        }
    }
    match fit_ramsey_decay(&curve, inputs.ramsey.decay_exponent) {
        Ok(d) => {
            out.row.t2_star_s = d.t2_star_s;
            if out.linewidth.is_some() {
                out.row.flag = if d.reliable { SweepFlag::Ok } else { SweepFlag::DecayUnreliable };
            }
            out.decay = Some(d);
        }
        Err(e) => {
            if out.linewidth.is_some() {
                out.row.flag = SweepFlag::DecayFitFailed;
                out.row.error = Some(e.to_string());
            }
        }
    }
    out.curve = Some(curve);
    out
}

fn simulate_point(inputs: &SweepInputs, p: &SweepPoint, seed: u64) -> Result<(RunMeta, f64, RamseyCurve)> {
    let estimates = if p.scheme.needs_estimates() {
        let tracker = p
            .tracker
            .as_ref()
            .or(inputs.tracker)
            .ok_or_else(|| Error::Config(format!("scheme {} needs a tracker", p.scheme.name())))?;
        Some(tracker.track(inputs.trace, derive_seed(seed, stream::TRACKER))?)
    } else {
        None
    };
    let policy = ControlPolicy {
        scheme: p.scheme,
        update_period_s: p.update_period(),
        horizon_s: p.horizon_s,
        include_warmup: false,
    };
    let run = run_loop(inputs.trace, estimates.as_ref(), &policy, inputs.predictor)?;
    let start = inputs.trace.index_of(inputs.ramsey.start_s);
    let rms = run.residual.tail_from_index(start.max(run.meta.warmup_samples))?.rms();
    let curve = simulate_ramsey(&run.residual, inputs.ramsey, derive_seed(seed, stream::RAMSEY))?;
    Ok((run.meta, rms, curve))
}

/// Run every point; with `parallel` the points execute on the rayon pool.
/// Output order always follows `inputs.points`.
pub fn sweep_linewidth(inputs: &SweepInputs, parallel: bool) -> Result<Vec<PointOutcome>> {
    check_feasibility(inputs.trace, inputs.points, inputs.ramsey)?;
    let idx: Vec<usize> = (0..inputs.points.len()).collect();
    Ok(if parallel {
        idx.par_iter().map(|&i| run_point(inputs, i)).collect()
    } else {
        idx.iter().map(|&i| run_point(inputs, i)).collect()
    })
}

pub const SWEEP_HEADER: &str = "nu_hz,l_hz,l_sigma_hz,t2_star_s,flag";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            fmt_g17(r.nu_hz),
            fmt_g17(r.l_hz),
            fmt_g17(r.l_sigma_hz),
            fmt_g17(r.t2_star_s),
            r.flag.as_str()
        )?;
    }
    Ok(())
}
