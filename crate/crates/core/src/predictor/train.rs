use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::WindowDataset;
use super::lstm::{backward, forward, init_params, Layout, Tape};
use super::{Arch, PredictorKind, PredictorModel};
use crate::error::{require, Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    /// Initialization and shuffling seed; pipelines fill it from the run
    /// seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "defaults::validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default = "defaults::gradient_clip_norm")]
    pub gradient_clip_norm: f64,
    #[serde(default = "defaults::early_stop_patience")]
    pub early_stop_patience: usize,
}

mod defaults {
    pub fn epochs() -> usize {
        60
    }
    pub fn learning_rate() -> f64 {
        3e-3
    }
    pub fn batch_size() -> usize {
        64
    }
    pub fn validation_fraction() -> f64 {
        0.2
    }
    pub fn gradient_clip_norm() -> f64 {
        1.0
    }
    pub fn early_stop_patience() -> usize {
        10
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: defaults::epochs(),
            learning_rate: defaults::learning_rate(),
            batch_size: defaults::batch_size(),
            seed: None,
            validation_fraction: defaults::validation_fraction(),
            gradient_clip_norm: defaults::gradient_clip_norm(),
            early_stop_patience: defaults::early_stop_patience(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.epochs >= 1, || "epochs must be >= 1".into())?;
        require(self.learning_rate > 0.0 && self.learning_rate.is_finite(), || {
            format!("learning_rate must be positive, got {}", self.learning_rate)
        })?;
        require(self.batch_size >= 1, || "batch_size must be >= 1".into())?;
        require(self.validation_fraction > 0.0 && self.validation_fraction < 1.0, || {
            format!("validation_fraction must be in (0, 1), got {}", self.validation_fraction)
        })?;
        require(self.gradient_clip_norm > 0.0, || "gradient_clip_norm must be positive".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Training MSE (normalized units) before the first update.
    pub initial_train_loss: f64,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_val: usize,
}

impl TrainingReport {
    pub fn best_val_loss(&self) -> f64 {
        self.val_loss[self.best_epoch]
    }

    /// Training loss at the epoch whose weights were kept.
    pub fn final_train_loss(&self) -> f64 {
        self.train_loss[self.best_epoch]
    }
}

/// Mean squared error over the windows `rows` and all N outputs, times
/// `loss_scale`, with its gradient.
pub fn loss_and_grad(
    p: &[f64],
    layout: Layout,
    data: &WindowDataset,
    rows: &[usize],
    loss_scale: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; p.len()];
    let mut out = vec![0.0; layout.n_out];
    let mut dout = vec![0.0; layout.n_out];
    let mut tape = Tape::default();
    let denom = (rows.len() * layout.n_out) as f64;
    let mut loss = 0.0;
    for &r in rows {
        let x = data.input(r);
        forward(p, layout, x, &mut out, Some(&mut tape));
        for ((d, &o), &y) in dout.iter_mut().zip(&out).zip(data.target(r)) {
            let e = o - y;
            loss += e * e;
            *d = loss_scale * 2.0 * e / denom;
        }
        backward(p, layout, x, &tape, &dout, &mut grad);
    }
    (loss_scale * loss / denom, grad)
}

/// MSE over `rows` without gradients.
pub fn mse(p: &[f64], layout: Layout, data: &WindowDataset, rows: impl Iterator<Item = usize>) -> f64 {
    let mut out = vec![0.0; layout.n_out];
    let mut tape = Tape::default();
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in rows {
        forward(p, layout, data.input(r), &mut out, Some(&mut tape));
        sum += out.iter().zip(data.target(r)).map(|(o, y)| (o - y).powi(2)).sum::<f64>();
        count += layout.n_out;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..p.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            p[i] -= lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

/// Fit an LSTM predictor by BPTT and Adam. The trailing
/// `validation_fraction` of windows is held out; the weights with the best
/// validation MSE are returned.
pub fn train(data: &WindowDataset, arch: Arch, cfg: &TrainConfig) -> Result<(PredictorModel, TrainingReport)> {
    cfg.validate()?;
    arch.validate()?;
    if arch.m != data.m || arch.n != data.n {
        return Err(Error::Model(format!(
            "architecture M={} N={} does not match dataset M={} N={}",
            arch.m, arch.n, data.m, data.n
        )));
    }
    if data.len() < 2 {
        return Err(Error::Size(format!("need >= 2 windows to train, got {}", data.len())));
    }
    let layout = Layout::new(arch.hidden, arch.n);
    let mut rng = rng::rng(cfg.seed.unwrap_or(0));
    let mut p = init_params(layout, &mut rng);
    let split = data.split_index(cfg.validation_fraction);
    let mut order: Vec<usize> = (0..split).collect();
    let val = split..data.len();

    let initial_train_loss = mse(&p, layout, data, 0..split);
    let mut best = (f64::INFINITY, p.clone(), 0usize);
    let mut adam = Adam::new(p.len());
    let mut train_loss = Vec::new();
    let mut val_loss = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, mut g) = loss_and_grad(&p, layout, data, batch, 1.0);
            if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { epoch, last_finite: best.1 });
            }
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > cfg.gradient_clip_norm {
                let s = cfg.gradient_clip_norm / norm;
                g.iter_mut().for_each(|v| *v *= s);
            }
            adam.step(&mut p, &g, cfg.learning_rate);
            epoch_loss += loss * batch.len() as f64;
        }
        let vl = mse(&p, layout, data, val.clone());
        if !vl.is_finite() {
            return Err(Error::Divergence { epoch, last_finite: best.1 });
        }
        train_loss.push(epoch_loss / split as f64);
        val_loss.push(vl);
        if vl < best.0 {
            best = (vl, p.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (_, params, best_epoch) = best;
    // report the kept weights' full training loss rather than the running mean
    train_loss[best_epoch] = mse(&params, layout, data, 0..split);
    let model = PredictorModel {
        kind: PredictorKind::Lstm,
        m: arch.m,
        n: arch.n,
        hidden: arch.hidden,
        norm: data.norm,
        params,
    };
    let report = TrainingReport {
        initial_train_loss,
        train_loss,
        val_loss,
        best_epoch,
        stopped_early,
        n_train: split,
        n_val: data.len() - split,
    };
    Ok((model, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    pub max_abs_numeric: f64,
}

/// Compare BPTT gradients of the MSE against central differences with step
/// 1e-5, for a model initialized from `seed` on one normalized window.
/// Relative errors use `max(|a|, |n|, 1e-6)` as denominator.
pub fn grad_check(arch: Arch, inputs: &[f64], targets: &[f64], seed: u64) -> Result<GradCheck> {
    arch.validate()?;
    if inputs.len() != arch.m || targets.len() != arch.n {
        return Err(Error::Model("window does not match the architecture".into()));
    }
    let layout = Layout::new(arch.hidden, arch.n);
    let mut p = init_params(layout, &mut rng::rng(seed));
    // spread biases too, so every parameter has a non-trivial gradient
    let mut r = rng::rng(rng::derive_seed(seed, 1));
    for v in &mut p[layout.bias()..] {
        *v += rand::Rng::random_range(&mut r, -0.5..0.5);
    }
    Ok(grad_check_params(&p, layout, inputs, targets))
}

pub(crate) fn grad_check_params(p: &[f64], layout: Layout, inputs: &[f64], targets: &[f64]) -> GradCheck {
    let data = super::dataset::build_with_norm(
        &[inputs, targets].concat(),
        inputs.len(),
        targets.len(),
        super::Normalization::identity(),
    )
    .expect("window shape checked by caller");
    let (_, analytic) = loss_and_grad(p, layout, &data, &[0], 1.0);
    let h = 1e-5;
    let mut q = p.to_vec();
    let mut report = GradCheck { max_rel_error: 0.0, max_abs_analytic: 0.0, max_abs_numeric: 0.0 };
    for i in 0..p.len() {
        q[i] = p[i] + h;
        let lp = mse(&q, layout, &data, 0..1);
        q[i] = p[i] - h;
        let lm = mse(&q, layout, &data, 0..1);
        q[i] = p[i];
        let num = (lp - lm) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.max_abs_analytic = report.max_abs_analytic.max(a.abs());
        report.max_abs_numeric = report.max_abs_numeric.max(num.abs());
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::dataset::build_dataset;

    #[test]
    fn gradients_match_finite_differences() {
        let arch = Arch { hidden: 5, m: 6, n: 3 };
        let x = [0.3, -1.2, 0.8, 0.1, 1.5, -0.4];
        let y = [0.2, -0.7, 1.1];
        let r = grad_check(arch, &x, &y, 11).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn loss_scale_is_linear() {
        let d = build_dataset(&[1.0, 3.0, 2.0, 5.0, 4.0, 6.0, 3.0], 3, 2).unwrap();
        let l = Layout::new(3, 2);
        let p = init_params(l, &mut rng::rng(2));
        let (a, ga) = loss_and_grad(&p, l, &d, &[0, 1, 2], 1.0);
        let (b, gb) = loss_and_grad(&p, l, &d, &[0, 1, 2], 2.0);
        assert_eq!(b, 2.0 * a);
        for (x, y) in ga.iter().zip(&gb) {
            assert_eq!(*y, 2.0 * x);
        }
    }

    #[test]
    fn learns_a_constant() {
        let d = build_dataset(&[42.0; 120], 8, 2).unwrap();
        let cfg = TrainConfig { epochs: 50, seed: Some(1), ..TrainConfig::default() };
        let (model, rep) = train(&d, Arch { hidden: 4, m: 8, n: 2 }, &cfg).unwrap();
        assert!(rep.best_val_loss() < 1e-6);
        let out = model.predict(&[42.0; 8], None).unwrap();
        assert!(out.iter().all(|v| (v - 42.0).abs() < 1e-6));
    }
}
