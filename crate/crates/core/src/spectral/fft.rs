use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::noisegen::{fmt_g17, NoiseTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            // periodic Hann
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// One-sided amplitude: a sinusoid of amplitude A peaks at A.
    Amplitude,
    /// One-sided power spectral density, units²/Hz.
    PowerDensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumOptions {
    pub window: Window,
    pub zero_pad_factor: usize,
    pub remove_mean: bool,
}

impl Default for SpectrumOptions {
    fn default() -> Self {
        SpectrumOptions { window: Window::Hann, zero_pad_factor: 4, remove_mean: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsdOptions {
    pub window: Window,
    pub segments: usize,
    pub remove_mean: bool,
}

impl Default for PsdOptions {
    fn default() -> Self {
        PsdOptions { window: Window::Hann, segments: 8, remove_mean: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub window: Window,
    pub zero_pad_factor: usize,
    pub scale: Scale,
    pub n_signal: usize,
    pub n_fft: usize,
    pub segments: usize,
    /// Σw, the coherent gain of the window.
    pub window_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub freqs_hz: Vec<f64>,
    pub amps: Vec<f64>,
    pub meta: SpectrumMeta,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.freqs_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs_hz.is_empty()
    }

    pub fn bin_width_hz(&self) -> f64 {
        if self.freqs_hz.len() > 1 {
            self.freqs_hz[1] - self.freqs_hz[0]
        } else {
            f64::INFINITY
        }
    }

    pub fn peak_index(&self) -> usize {
        argmax(&self.amps)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "freq_hz,amplitude")?;
        for (f, a) in self.freqs_hz.iter().zip(&self.amps) {
            writeln!(w, "{},{}", fmt_g17(*f), fmt_g17(*a))?;
        }
        Ok(())
    }

    /// Bins with `lo <= f <= hi`.
    pub fn band(&self, lo: f64, hi: f64) -> Spectrum {
        let (freqs_hz, amps) =
            self.freqs_hz.iter().zip(&self.amps).filter(|(f, _)| **f >= lo && **f <= hi).map(|(f, a)| (*f, *a)).unzip();
        Spectrum { freqs_hz, amps, meta: self.meta.clone() }
    }

    /// Σ|w·x|² reconstructed from a single-segment amplitude spectrum.
    pub fn parseval_energy(&self) -> f64 {
        let n_fft = self.meta.n_fft;
        let s = self.meta.window_sum;
        let last = self.amps.len() - 1;
        let mut acc = 0.0;
        for (k, a) in self.amps.iter().enumerate() {
            let edge = k == 0 || (n_fft.is_multiple_of(2) && k == last);
            acc += if edge { a * a } else { a * a / 2.0 };
        }
        acc * s * s / n_fft as f64
    }

    /// Least-squares slope of log10(amp) against log10(f) over `[lo, hi]`.
    pub fn log_log_slope(&self, lo: f64, hi: f64) -> Result<f64> {
        let pts: Vec<(f64, f64)> = self
            .freqs_hz
            .iter()
            .zip(&self.amps)
            .filter(|(f, a)| **f >= lo && **f <= hi && **f > 0.0 && **a > 0.0)
            .map(|(f, a)| (f.log10(), a.log10()))
            .collect();
        if pts.len() < 3 {
            return Err(Error::Size("too few bins for a slope".into()));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Ok(sxy / sxx)
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    // first maximum wins, i.e. the lowest frequency on ties
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn one_sided_magnitudes(signal: &[f64], window: &[f64], n_fft: usize) -> Vec<f64> {
    let mut buf: Vec<Complex64> = signal.iter().zip(window).map(|(x, w)| Complex64::new(x * w, 0.0)).collect();
    buf.resize(n_fft, Complex64::new(0.0, 0.0));
    FftPlanner::<f64>::new().plan_fft_forward(n_fft).process(&mut buf);
    buf[..n_fft / 2 + 1].iter().map(|z| z.norm()).collect()
}

fn one_sided_factor(k: usize, n_fft: usize) -> f64 {
    if k == 0 || (n_fft.is_multiple_of(2) && k == n_fft / 2) {
        1.0
    } else {
        2.0
    }
}

/// One-sided amplitude spectrum of a uniformly sampled signal.
pub fn fft_spectrum(signal: &[f64], dt_s: f64, opts: &SpectrumOptions) -> Result<Spectrum> {
    require(signal.len() >= 2, || "spectrum needs at least 2 samples".into())?;
    require(dt_s.is_finite() && dt_s > 0.0, || "dt_s must be positive".into())?;
    require(opts.zero_pad_factor >= 1, || "zero_pad_factor must be >= 1".into())?;
    let n = signal.len();
    let offset = if opts.remove_mean { mean(signal) } else { 0.0 };
    let centered: Vec<f64> = signal.iter().map(|x| x - offset).collect();
    let w = opts.window.coefficients(n);
    let window_sum: f64 = w.iter().sum();
    let n_fft = n * opts.zero_pad_factor;
    let mags = one_sided_magnitudes(&centered, &w, n_fft);
    let df = 1.0 / (n_fft as f64 * dt_s);
    let amps = mags.iter().enumerate().map(|(k, m)| one_sided_factor(k, n_fft) * m / window_sum).collect();
    Ok(Spectrum {
        freqs_hz: (0..mags.len()).map(|k| k as f64 * df).collect(),
        amps,
        meta: SpectrumMeta {
            window: opts.window,
            zero_pad_factor: opts.zero_pad_factor,
            scale: Scale::Amplitude,
            n_signal: n,
            n_fft,
            segments: 1,
            window_sum,
        },
    })
}

/// Welch power spectral density: `segments` half-overlapping windowed
/// segments, one-sided, in Hz²/Hz for a trace in Hz.
pub fn psd(trace: &NoiseTrace, opts: &PsdOptions) -> Result<Spectrum> {
    psd_samples(&trace.values, trace.dt_s, opts)
}

pub fn psd_samples(signal: &[f64], dt_s: f64, opts: &PsdOptions) -> Result<Spectrum> {
    require(opts.segments >= 1, || "need at least one segment".into())?;
    let n = signal.len();
    let seg_len = 2 * n / (opts.segments + 1);
    require(seg_len >= 2, || format!("{n} samples too short for {} segments", opts.segments))?;
    let step = (seg_len / 2).max(1);
    let offset = if opts.remove_mean { mean(signal) } else { 0.0 };
    let w = opts.window.coefficients(seg_len);
    let power_sum: f64 = w.iter().map(|x| x * x).sum();
    let fs = 1.0 / dt_s;
    let mut acc = vec![0.0; seg_len / 2 + 1];
    let mut count = 0usize;
    let mut start = 0;
    while start + seg_len <= n && count < opts.segments {
        let seg: Vec<f64> = signal[start..start + seg_len].iter().map(|x| x - offset).collect();
        let mags = one_sided_magnitudes(&seg, &w, seg_len);
        for (k, m) in mags.iter().enumerate() {
            acc[k] += one_sided_factor(k, seg_len) * m * m / (fs * power_sum);
        }
        count += 1;
        start += step;
    }
    let df = fs / seg_len as f64;
    Ok(Spectrum {
        freqs_hz: (0..acc.len()).map(|k| k as f64 * df).collect(),
        amps: acc.iter().map(|a| a / count as f64).collect(),
        meta: SpectrumMeta {
            window: opts.window,
            zero_pad_factor: 1,
            scale: Scale::PowerDensity,
            n_signal: n,
            n_fft: seg_len,
            segments: count,
            window_sum: w.iter().sum(),
        },
    })
}
