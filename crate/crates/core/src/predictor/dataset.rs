use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};

/// Standard deviations below this are treated as this (Hz).
pub const STD_FLOOR_HZ: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean_hz: f64,
    pub scale_hz: f64,
}

impl Normalization {
    pub fn identity() -> Self {
        Normalization { mean_hz: 0.0, scale_hz: 1.0 }
    }

    pub fn fit(values: &[f64]) -> Self {
        let n = values.len().max(1) as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Normalization { mean_hz: mean, scale_hz: var.sqrt().max(STD_FLOOR_HZ) }
    }

    pub fn forward(&self, v: f64) -> f64 {
        (v - self.mean_hz) / self.scale_hz
    }

    pub fn inverse(&self, z: f64) -> f64 {
        z * self.scale_hz + self.mean_hz
    }
}

/// Stride-1 sliding windows over a series: `k = len − M − N + 1` rows of M
/// normalized inputs followed by N normalized targets.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDataset {
    pub m: usize,
    pub n: usize,
    pub norm: Normalization,
    /// Raw series the windows were cut from.
    pub series: Vec<f64>,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl WindowDataset {
    pub fn len(&self) -> usize {
        self.inputs.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Normalized inputs of window `r`.
    pub fn input(&self, r: usize) -> &[f64] {
        &self.inputs[r * self.m..(r + 1) * self.m]
    }

    /// Normalized targets of window `r`.
    pub fn target(&self, r: usize) -> &[f64] {
        &self.targets[r * self.n..(r + 1) * self.n]
    }

    /// Raw (inputs, targets) of window `r`.
    pub fn raw_window(&self, r: usize) -> (&[f64], &[f64]) {
        (&self.series[r..r + self.m], &self.series[r + self.m..r + self.m + self.n])
    }

    /// Index of the first validation window for a time-ordered split.
    pub fn split_index(&self, validation_fraction: f64) -> usize {
        let k = self.len();
        let n_val = ((k as f64 * validation_fraction).round() as usize).clamp(1, k.saturating_sub(1).max(1));
        k - n_val
    }
}

/// Windows normalized with the statistics of the whole series.
pub fn build_dataset(series: &[f64], m: usize, n: usize) -> Result<WindowDataset> {
    check(series, m, n)?;
    build_with_norm(series, m, n, Normalization::fit(series))
}

/// Windows normalized with the statistics of the part of the series the
/// training windows (all but the trailing `validation_fraction`) cover.
pub fn build_dataset_split(series: &[f64], m: usize, n: usize, validation_fraction: f64) -> Result<WindowDataset> {
    check(series, m, n)?;
    require(validation_fraction > 0.0 && validation_fraction < 1.0, || {
        format!("validation_fraction must be in (0, 1), got {validation_fraction}")
    })?;
    let k = series.len() - m - n + 1;
    let n_val = ((k as f64 * validation_fraction).round() as usize).clamp(1, k.saturating_sub(1).max(1));
    let train_end = (k - n_val) + m + n - 1;
    build_with_norm(series, m, n, Normalization::fit(&series[..train_end.max(1)]))
}

pub fn build_with_norm(series: &[f64], m: usize, n: usize, norm: Normalization) -> Result<WindowDataset> {
    check(series, m, n)?;
    let k = series.len() - m - n + 1;
    let z: Vec<f64> = series.iter().map(|&v| norm.forward(v)).collect();
    let mut inputs = Vec::with_capacity(k * m);
    let mut targets = Vec::with_capacity(k * n);
    for r in 0..k {
        inputs.extend_from_slice(&z[r..r + m]);
        targets.extend_from_slice(&z[r + m..r + m + n]);
    }
    Ok(WindowDataset { m, n, norm, series: series.to_vec(), inputs, targets })
}

fn check(series: &[f64], m: usize, n: usize) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::Parameter(format!("M and N must be positive, got M={m} N={n}")));
    }
    if series.len() < m + n {
        return Err(Error::Size(format!("series of {} values is shorter than M + N = {}", series.len(), m + n)));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("series contains non-finite values".into()));
    }
    Ok(())
}
