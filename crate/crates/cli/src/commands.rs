use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;
use serde_json::{json, Value};

use driftctl::config::{prepare_predictor, RunConfig};
use driftctl::ctrl::{efficiency_curve, run_loop, ControlPolicy, ControlRun, Scheme};
use driftctl::noisegen::{fmt_g17, write_trace, NoiseTrace};
use driftctl::predictor::{load_model, model_to_json, PredictorModel, TrainingReport};
use driftctl::ramsey::{
    ramsey_linewidth, ramsey_peak_selection, ramsey_spectrum, simulate_ramsey, sweep_linewidth, write_sweep_csv,
    SweepFlag, SweepInputs, SweepRow, SWEEP_HEADER,
};
use driftctl::rng::{derive_seed, stream};
use driftctl::spectral::{fit_linewidth_law, fit_ramsey_decay, LinewidthFit};
use driftctl::tracker::{write_estimates, EstimateFlag, EstimateStream};
use driftctl::Error;

use crate::output::{Manifest, OutDir};

/// Options shared by every config-driven command.
pub struct Common {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub parallel: Option<usize>,
}

/// Some sweep points failed; the completed ones were still written.
#[derive(Debug)]
pub struct PartialFailure {
    pub failed: usize,
    pub total: usize,
}

impl fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} of {} sweep points failed", self.failed, self.total)
    }
}

impl std::error::Error for PartialFailure {}

struct Loaded {
    cfg: RunConfig,
    manifest: Manifest,
    out: OutDir,
}

fn load(command: &str, common: &Common) -> Result<Loaded> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    let mut manifest = Manifest::new(command, cfg.seed);
    manifest.config_path = Some(common.config.display().to_string());
    manifest.config_sha256 = Some(crate::output::sha256_file(&common.config)?);
    manifest.config = Some(serde_json::to_value(&cfg)?);
    if let Some(p) = &cfg.trace_path {
        manifest.add_input(p)?;
    }
    let dir = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set `output_dir`".into()))?;
    let out = OutDir::create(&dir)?;
    Ok(Loaded { cfg, manifest, out })
}

fn set_override(manifest: &mut Manifest, key: &str, value: Value) {
    if let Value::Object(m) = &mut manifest.overrides {
        m.insert(key.to_string(), value);
    }
}

fn trace_summary(trace: &NoiseTrace) -> Value {
    json!({
        "samples": trace.len(),
        "dt_s": trace.dt_s,
        "duration_s": trace.duration_s(),
        "rms_hz": trace.rms(),
    })
}

pub fn generate(common: &Common) -> Result<()> {
    let Loaded { cfg, mut manifest, mut out } = load("generate", common)?;
    let trace = cfg.trace()?;
    out.write_with("trace.csv", |w| write_trace(&trace, w))?;
    println!("trace: {} samples, duration {} s, rms {:.6e} Hz", trace.len(), trace.duration_s(), trace.rms());
    manifest.summary = trace_summary(&trace);
    manifest.finish(&mut out)
}

fn estimate_summary(est: &EstimateStream) -> Value {
    json!({
        "estimates": est.len(),
        "cadence_s": est.cadence_s,
        "latency_s": est.latency_s,
        "valid": est.count_flag(EstimateFlag::Valid),
        "invalid": est.count_flag(EstimateFlag::Invalid),
        "out_of_capture": est.count_flag(EstimateFlag::OutOfCapture),
    })
}

pub fn track(common: &Common) -> Result<()> {
    let Loaded { cfg, mut manifest, mut out } = load("track", common)?;
    let trace = cfg.trace()?;
    let tracker = cfg.require_tracker()?;
    let est = tracker.track(&trace, derive_seed(cfg.seed, stream::TRACKER))?;
    out.write_with("estimates.csv", |w| write_estimates(&est, w))?;
    let summary = estimate_summary(&est);
    println!("estimates: {summary}");
    manifest.summary = summary;
    manifest.finish(&mut out)
}

/// The forecaster for feedforward runs: a saved model (`--model` or the
/// config's `model_path`), a baseline, or a freshly trained LSTM that is
/// saved next to the other outputs.
fn obtain_predictor(
    cfg: &RunConfig,
    model_flag: Option<&Path>,
    manifest: &mut Manifest,
    out: &mut OutDir,
) -> Result<PredictorModel> {
    if let Some(p) = model_flag {
        let model = load_model(p)?;
        manifest.model_sha256 = Some(manifest.add_input(p)?);
        set_override(manifest, "model", json!(p.display().to_string()));
        return Ok(model);
    }
    let block = cfg
        .predictor
        .as_ref()
        .ok_or_else(|| Error::Config("feedforward needs a `predictor` block or --model".into()))?;
    if let Some(p) = &block.model_path {
        manifest.model_sha256 = Some(manifest.add_input(p)?);
    }
    let (model, report) = prepare_predictor(cfg, block, cfg.require_tracker()?)?;
    if let Some(report) = report {
        info!("trained predictor: best validation loss {:.4e}", report.best_val_loss());
        let text = model_to_json(&model)?;
        out.write("model.json", text.as_bytes())?;
        manifest.model_sha256 = Some(crate::output::sha256_hex(text.as_bytes()));
        out.write_json("training.json", &report)?;
    }
    Ok(model)
}

fn policy_for(cfg: &RunConfig, scheme: Option<Scheme>, manifest: &mut Manifest) -> Result<ControlPolicy> {
    let mut policy = cfg.control.clone().ok_or_else(|| Error::Config("missing `control` block".into()))?;
    if let Some(s) = scheme {
        policy.scheme = s;
        set_override(manifest, "scheme", json!(s.name()));
    }
    Ok(policy)
}

struct LoopParts {
    run: ControlRun,
    estimates: Option<EstimateStream>,
    predictor: Option<PredictorModel>,
}

fn closed_loop(
    cfg: &RunConfig,
    trace: &NoiseTrace,
    policy: &ControlPolicy,
    model_flag: Option<&Path>,
    manifest: &mut Manifest,
    out: &mut OutDir,
) -> Result<LoopParts> {
    let estimates = if policy.scheme.needs_estimates() {
        Some(cfg.require_tracker()?.track(trace, derive_seed(cfg.seed, stream::TRACKER))?)
    } else {
        None
    };
    let predictor = if policy.scheme == Scheme::Feedforward {
        Some(obtain_predictor(cfg, model_flag, manifest, out)?)
    } else {
        None
    };
    let run = run_loop(trace, estimates.as_ref(), policy, predictor.as_ref())?;
    Ok(LoopParts { run, estimates, predictor })
}

fn run_summary(trace: &NoiseTrace, run: &ControlRun) -> Result<Value> {
    let scored = run.scored_residual()?;
    Ok(json!({
        "meta": run.meta,
        "original_rms_hz": trace.rms(),
        "residual_rms_hz": scored.rms(),
    }))
}

pub fn run_loop_cmd(common: &Common, scheme: Option<Scheme>, model: Option<&Path>) -> Result<()> {
    let Loaded { cfg, mut manifest, mut out } = load("loop", common)?;
    let trace = cfg.trace()?;
    let policy = policy_for(&cfg, scheme, &mut manifest)?;
    let parts = closed_loop(&cfg, &trace, &policy, model, &mut manifest, &mut out)?;
    let run = &parts.run;
    out.write_with("residual.csv", |w| write_trace(&run.residual, w))?;
    out.write_with("correction.csv", |w| run.write_correction_csv(w))?;
    if let Some(est) = &parts.estimates {
        out.write_with("estimates.csv", |w| write_estimates(est, w))?;
    }
    let mut summary = run_summary(&trace, run)?;
    if let Some(speeds) = &cfg.efficiency_speeds_hz {
        let curve = with_pool(common.parallel, || {
            efficiency_curve(&trace, speeds, &policy, parts.estimates.as_ref(), parts.predictor.as_ref())
        })??;
        let mut text = String::from("nu_hz,eta\n");
        for (nu, eta) in &curve {
            text.push_str(&format!("{},{}\n", fmt_g17(*nu), fmt_g17(*eta)));
        }
        out.write("efficiency.csv", text.as_bytes())?;
        summary["efficiency_curve"] = json!(curve);
    }
    out.write_json("run.json", &summary)?;
    println!(
        "{}: tau {} s, residual rms {:.6e} Hz, efficiency {}",
        run.meta.scheme.name(),
        run.meta.update_period_s,
        summary["residual_rms_hz"].as_f64().unwrap_or(f64::NAN),
        run.meta.efficiency.map_or("undefined".to_string(), |e| format!("{e:.4}"))
    );
    manifest.summary = summary;
    manifest.finish(&mut out)
}

pub fn train_cmd(common: &Common) -> Result<()> {
    let Loaded { cfg, mut manifest, mut out } = load("train", common)?;
    let block = cfg.predictor.as_ref().ok_or_else(|| Error::Config("missing `predictor` block".into()))?;
    let tracker = cfg.require_tracker()?;
    let (model, report) = prepare_predictor(&cfg, block, tracker)?;
    let text = model_to_json(&model)?;
    out.write("model.json", text.as_bytes())?;
    manifest.model_sha256 = Some(crate::output::sha256_hex(text.as_bytes()));
    let summary = match &report {
        Some(r) => {
            out.write_json("training.json", r)?;
            print_training(r);
            json!({
                "best_epoch": r.best_epoch,
                "best_val_loss": r.best_val_loss(),
                "final_train_loss": r.final_train_loss(),
                "stopped_early": r.stopped_early,
            })
        }
        None => json!({"kind": model.kind}),
    };
    manifest.summary = summary;
    manifest.finish(&mut out)
}

fn print_training(r: &TrainingReport) {
    println!(
        "trained {} epochs (best {}): train loss {:.4e}, validation loss {:.4e}{}",
        r.train_loss.len(),
        r.best_epoch,
        r.final_train_loss(),
        r.best_val_loss(),
        if r.stopped_early { ", stopped early" } else { "" }
    );
}

pub fn ramsey_cmd(common: &Common, scheme: Option<Scheme>, model: Option<&Path>) -> Result<()> {
    let Loaded { cfg, mut manifest, mut out } = load("ramsey", common)?;
    let trace = cfg.trace()?;
    let ramsey = cfg.require_ramsey()?;
    let mut summary = json!({});
    let residual = match &cfg.control {
        Some(_) => {
            let policy = policy_for(&cfg, scheme, &mut manifest)?;
            let parts = closed_loop(&cfg, &trace, &policy, model, &mut manifest, &mut out)?;
            summary["loop"] = run_summary(&trace, &parts.run)?;
            parts.run.residual
        }
        None => {
            if let Some(s) = scheme {
                return Err(Error::Config(format!("--scheme {} needs a `control` block", s.name())).into());
            }
            trace.clone()
        }
    };
    let curve = simulate_ramsey(&residual, ramsey, derive_seed(cfg.seed, stream::RAMSEY))?;
    out.write_with("ramsey.csv", |w| curve.write_csv(w))?;
    let opts = cfg.sweep.as_ref().map(|s| s.linewidth).unwrap_or_default();
    let spec = ramsey_spectrum(&curve, &opts)?;
    out.write_with("spectrum.csv", |w| spec.write_csv(w))?;

    // fits are attempted independently so one failure still reports the rest
    let linewidth = ramsey_linewidth(&curve, &opts);
    let selection = ramsey_peak_selection(&curve, &opts);
    let decay = fit_ramsey_decay(&curve, ramsey.decay_exponent);
    let as_value = |r: Result<Value, &Error>| match r {
        Ok(v) => v,
        Err(e) => json!({"error": e.to_string()}),
    };
    summary["linewidth"] = as_value(linewidth.as_ref().map(|l| json!(l)));
    summary["peak_selection"] = as_value(selection.as_ref().map(|s| json!(s)));
    summary["decay"] = as_value(decay.as_ref().map(|d| json!(d)));
    out.write_json("fit.json", &summary)?;
    match &linewidth {
        Ok(l) => println!("linewidth {:.6e} ± {:.3e} Hz at {:.6e} Hz", l.l_hz, l.l_sigma_hz, l.center_hz),
        Err(e) => println!("linewidth fit failed: {e}"),
    }
    match &decay {
        Ok(d) => println!("T2* {:.6e} ± {:.3e} s", d.t2_star_s, d.t2_star_sigma_s),
        Err(e) => println!("decay fit failed: {e}"),
    }
    if let Ok(s) = &selection {
        println!("preferred line count: {}", s.preferred_peaks);
    }
    manifest.summary = summary;
    manifest.finish(&mut out)?;
    // the curve and whatever fits succeeded are on disk; report the first failure
    linewidth?;
    decay?;
    selection?;
    Ok(())
}

pub fn sweep_cmd(common: &Common, model: Option<&Path>) -> Result<()> {
    let Loaded { cfg, mut manifest, mut out } = load("sweep", common)?;
    let trace = cfg.trace()?;
    let ramsey = cfg.require_ramsey()?;
    let sweep = cfg.sweep.as_ref().ok_or_else(|| Error::Config("missing `sweep` block".into()))?;
    let predictor = if sweep.points.iter().any(|p| p.scheme == Scheme::Feedforward) {
        Some(obtain_predictor(&cfg, model, &mut manifest, &mut out)?)
    } else {
        None
    };
    let inputs = SweepInputs {
        trace: &trace,
        points: &sweep.points,
        tracker: cfg.tracker.as_ref(),
        predictor: predictor.as_ref(),
        ramsey,
        linewidth: sweep.linewidth,
        seed: cfg.seed,
    };
    let parallel = common.parallel.is_none_or(|k| k != 1);
    if let Some(k) = common.parallel {
        set_override(&mut manifest, "parallel", json!(k));
    }
    let outcomes = with_pool(common.parallel, || sweep_linewidth(&inputs, parallel))??;
    let rows: Vec<SweepRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    out.write_with("sweep.csv", |w| write_sweep_csv(&rows, w))?;
    let details: Vec<Value> = outcomes
        .iter()
        .map(|o| {
            json!({
                "row": o.row,
                "run": o.run,
                "residual_rms_hz": o.residual_rms_hz,
                "linewidth": o.linewidth,
                "decay": o.decay,
            })
        })
        .collect();
    out.write_json("points.json", &details)?;
    for (i, o) in outcomes.iter().enumerate() {
        if let Some(c) = &o.curve {
            out.write_with(&format!("ramsey_{i:02}.csv"), |w| c.write_csv(w))?;
        }
    }

    let pts = law_points(&rows);
    let law = if pts.len() >= 3 { Some(fit_linewidth_law(&pts, sweep.with_offset)) } else { None };
    print_rows(&rows);
    let mut summary = json!({"points": rows.len(), "failed": failed_count(&rows)});
    match &law {
        Some(Ok(fit)) => {
            out.write_json("law.json", fit)?;
            print_law(fit);
            summary["law"] = json!(fit);
        }
        Some(Err(e)) => {
            println!("law fit failed: {e}");
            summary["law"] = json!({"error": e.to_string()});
        }
        None => println!("fewer than 3 fitted points; law not fitted"),
    }
    manifest.summary = summary;
    manifest.finish(&mut out)?;
    let failed = failed_count(&rows);
    if failed > 0 {
        return Err(PartialFailure { failed, total: rows.len() }.into());
    }
    if let Some(Err(e)) = law {
        return Err(e.into());
    }
    Ok(())
}

fn failed_count(rows: &[SweepRow]) -> usize {
    rows.iter().filter(|r| !r.flag.has_linewidth()).count()
}

fn law_points(rows: &[SweepRow]) -> Vec<(f64, f64)> {
    usable(rows.iter().map(|r| (r.nu_hz, r.l_hz, r.flag)))
}

fn usable(rows: impl Iterator<Item = (f64, f64, SweepFlag)>) -> Vec<(f64, f64)> {
    rows.filter(|&(_, l, flag)| flag.has_linewidth() && l.is_finite() && l > 0.0).map(|(nu, l, _)| (nu, l)).collect()
}

fn print_rows(rows: &[SweepRow]) {
    println!("{:>10} {:>14} {:>12} {:>12} {:>12}  flag", "nu_hz", "scheme", "l_hz", "l_sigma_hz", "t2_star_s");
    for r in rows {
        println!(
            "{:>10.4} {:>14} {:>12.4e} {:>12.4e} {:>12.4e}  {}",
            r.nu_hz,
            r.scheme.name(),
            r.l_hz,
            r.l_sigma_hz,
            r.t2_star_s,
            r.flag.as_str()
        );
    }
}

fn print_law(fit: &LinewidthFit) {
    println!(
        "l = A/nu^n + d: A = {:.4e} ± {:.2e}, n = {:.4} ± {:.4}, d = {:.4e} ± {:.2e} Hz, rms {:.3e} Hz over {} points",
        fit.amplitude, fit.amplitude_sigma, fit.n, fit.n_sigma, fit.d_hz, fit.d_sigma_hz, fit.rms_hz, fit.n_points
    );
}

/// Fit the linewidth law to a sweep CSV.
pub fn fit_law(csv: &Path, with_offset: bool, out: Option<&Path>) -> Result<()> {
    let text = std::fs::read_to_string(csv).with_context(|| format!("reading {}", csv.display()))?;
    let pts = usable(parse_sweep_csv(&text)?.into_iter());
    let fit = fit_linewidth_law(&pts, with_offset)?;
    print_law(&fit);
    if let Some(dir) = out {
        let mut out = OutDir::create(dir)?;
        out.write_json("law.json", &fit)?;
        let mut manifest = Manifest::new("fit", 0);
        manifest.add_input(csv)?;
        set_override(&mut manifest, "law", json!({"with_offset": with_offset}));
        manifest.summary = json!(fit);
        manifest.finish(&mut out)?;
    }
    Ok(())
}

/// `(nu_hz, l_hz, flag)` per row of a sweep CSV.
pub fn parse_sweep_csv(text: &str) -> driftctl::Result<Vec<(f64, f64, SweepFlag)>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("").trim();
    if header != SWEEP_HEADER {
        return Err(Error::Format { row: 0, msg: format!("expected header `{SWEEP_HEADER}`, got `{header}`") });
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = i + 1;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 5 {
            return Err(Error::Format { row, msg: format!("expected 5 columns, got {}", cols.len()) });
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Format { row, msg: format!("`{s}`: {e}") });
        let flag: SweepFlag = serde_json::from_value(Value::String(cols[4].trim().to_string()))
            .map_err(|_| Error::Format { row, msg: format!("unknown flag `{}`", cols[4]) })?;
        rows.push((num(cols[0])?, num(cols[1])?, flag));
    }
    Ok(rows)
}

/// Run `f` on a pool of `k` threads, or on the global pool when unset.
fn with_pool<T: Send>(k: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match k {
        Some(k) if k > 0 => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build()?;
            Ok(pool.install(f))
        }
        _ => Ok(f()),
    }
}
