use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::fft::{argmax, Spectrum};
use super::lm::{levenberg_marquardt, LeastSquares, LmOptions};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center_hz: f64,
    /// Half width at half maximum.
    pub hwhm_hz: f64,
    pub amplitude: f64,
    pub center_sigma_hz: f64,
    pub hwhm_sigma_hz: f64,
    pub amplitude_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakGuess {
    pub center_hz: f64,
    pub hwhm_hz: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakFit {
    /// Sorted by center.
    pub peaks: Vec<Peak>,
    pub baseline: f64,
    pub baseline_sigma: f64,
    pub residual_rms: f64,
    /// Small-sample corrected Akaike information criterion; lower is better.
    pub aicc: f64,
    pub n_points: usize,
    pub iterations: usize,
}

impl PeakFit {
    pub fn evaluate(&self, f: f64) -> f64 {
        self.baseline + self.peaks.iter().map(|p| lorentzian(f, p.center_hz, p.hwhm_hz, p.amplitude)).sum::<f64>()
    }

    /// Sparrow criterion for a two-peak fit: the sum of the fitted lines has
    /// a local minimum strictly between the two centers.
    pub fn is_resolved(&self) -> bool {
        if self.peaks.len() != 2 {
            return false;
        }
        let (a, b) = (self.peaks[0], self.peaks[1]);
        if a.amplitude <= 0.0 || b.amplitude <= 0.0 {
            return false;
        }
        let lines = |f: f64| self.evaluate(f) - self.baseline;
        let lo = lines(a.center_hz).min(lines(b.center_hz));
        const STEPS: usize = 400;
        (1..STEPS).any(|i| {
            let f = a.center_hz + (b.center_hz - a.center_hz) * i as f64 / STEPS as f64;
            lines(f) < lo * (1.0 - 1e-6)
        })
    }
}

pub fn lorentzian(f: f64, center: f64, hwhm: f64, amplitude: f64) -> f64 {
    let g2 = hwhm * hwhm;
    amplitude * g2 / ((f - center).powi(2) + g2)
}

/// Sum of Lorentzians plus constant baseline in normalized coordinates.
/// Parameter layout: `[c0, g0, a0, c1, g1, a1, ..., baseline]`.
struct LorentzProblem<'a> {
    u: &'a [f64],
    y: &'a [f64],
    n_peaks: usize,
}

impl LeastSquares for LorentzProblem<'_> {
    fn n_params(&self) -> usize {
        3 * self.n_peaks + 1
    }
    fn n_residuals(&self) -> usize {
        self.u.len()
    }
    fn residuals(&self, p: &[f64], out: &mut [f64]) {
        let b = p[3 * self.n_peaks];
        for (i, (&u, &y)) in self.u.iter().zip(self.y).enumerate() {
            let mut m = b;
            for k in 0..self.n_peaks {
                m += lorentzian(u, p[3 * k], p[3 * k + 1], p[3 * k + 2]);
            }
            out[i] = m - y;
        }
    }
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
        let nb = 3 * self.n_peaks;
        for (i, &u) in self.u.iter().enumerate() {
            for k in 0..self.n_peaks {
                let (c, g, a) = (p[3 * k], p[3 * k + 1], p[3 * k + 2]);
                let x = u - c;
                let g2 = g * g;
                let den = x * x + g2;
                let l = g2 / den;
                out[(i, 3 * k)] = a * 2.0 * x * g2 / (den * den);
                out[(i, 3 * k + 1)] = a * 2.0 * g * x * x / (den * den);
                out[(i, 3 * k + 2)] = l;
            }
            out[(i, nb)] = 1.0;
        }
    }
}

/// Fit `n_peaks` Lorentzian lines plus a constant baseline to a spectrum.
pub fn fit_lorentzian(spec: &Spectrum, n_peaks: usize, init: Option<&[PeakGuess]>) -> Result<PeakFit> {
    fit_lorentzian_xy(&spec.freqs_hz, &spec.amps, n_peaks, init)
}

/// Same as [`fit_lorentzian`] on raw `(x, y)` samples; amplitudes may be
/// negative (dips) when an explicit guess says so.
pub fn fit_lorentzian_xy(x: &[f64], y: &[f64], n_peaks: usize, init: Option<&[PeakGuess]>) -> Result<PeakFit> {
    fit_lines(x, y, n_peaks, init, 5 * (3 * n_peaks + 1))
}

/// Core fitter with an explicit minimum point count. Short ODMR sweeps use
/// this with just enough points to leave one degree of freedom.
pub(crate) fn fit_lines(
    x: &[f64],
    y: &[f64],
    n_peaks: usize,
    init: Option<&[PeakGuess]>,
    min_points: usize,
) -> Result<PeakFit> {
    if !(1..=2).contains(&n_peaks) {
        return Err(Error::Parameter(format!("n_peaks must be 1 or 2, got {n_peaks}")));
    }
    let k = 3 * n_peaks + 1;
    let n = x.len();
    let min_points = min_points.max(k + 1);
    if n != y.len() || n < min_points {
        return Err(Error::Size(format!("need at least {min_points} points for a {n_peaks}-peak fit, got {n}")));
    }
    let bin = x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if !(bin > 0.0) {
        return Err(Error::Parameter("abscissa must be strictly increasing".into()));
    }

    match init {
        Some(g) if g.len() == n_peaks => fit_from(x, y, n_peaks, g, bin),
        Some(g) => Err(Error::Parameter(format!("{} guesses for {n_peaks} peaks", g.len()))),
        None => {
            // several starts; noise bumps make any single guess unreliable
            let mut best: Option<PeakFit> = None;
            let mut first_err = None;
            for g in auto_guesses(x, y, n_peaks) {
                match fit_from(x, y, n_peaks, &g, bin) {
                    Ok(f) => {
                        if best.as_ref().is_none_or(|b| f.aicc < b.aicc) {
                            best = Some(f);
                        }
                    }
                    Err(e) => {
                        first_err.get_or_insert(e);
                    }
                }
            }
            best.ok_or_else(|| first_err.expect("at least one start"))
        }
    }
}

fn fit_from(x: &[f64], y: &[f64], n_peaks: usize, guesses: &[PeakGuess], bin: f64) -> Result<PeakFit> {
    let n = x.len();
    let k = 3 * n_peaks + 1;
    let baseline0 = baseline_guess(y);

    // normalize so all parameters are O(1)
    let x_mid = 0.5 * (x[0] + x[n - 1]);
    let x_half = 0.5 * (x[n - 1] - x[0]);
    let y_scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let u: Vec<f64> = x.iter().map(|v| (v - x_mid) / x_half).collect();
    let yn: Vec<f64> = y.iter().map(|v| v / y_scale).collect();
    let mut p0 = Vec::with_capacity(k);
    for g in guesses {
        p0.push((g.center_hz - x_mid) / x_half);
        p0.push((g.hwhm_hz / x_half).max(bin / x_half));
        p0.push(g.amplitude / y_scale);
    }
    p0.push(baseline0 / y_scale);

    let problem = LorentzProblem { u: &u, y: &yn, n_peaks };
    let rep = levenberg_marquardt(&problem, &p0, &LmOptions::default()).map_err(|e| match e {
        Error::NoConvergence { iterations, last } => {
            Error::NoConvergence { iterations, last: denormalize(&last, n_peaks, x_mid, x_half, y_scale) }
        }
        other => other,
    })?;

    let mut peaks: Vec<Peak> = (0..n_peaks)
        .map(|j| Peak {
            center_hz: x_mid + rep.params[3 * j] * x_half,
            hwhm_hz: rep.params[3 * j + 1].abs() * x_half,
            amplitude: rep.params[3 * j + 2] * y_scale,
            center_sigma_hz: rep.sigma(3 * j) * x_half,
            hwhm_sigma_hz: rep.sigma(3 * j + 1) * x_half,
            amplitude_sigma: rep.sigma(3 * j + 2) * y_scale,
        })
        .collect();
    if let Some(p) = peaks.iter().find(|p| !(p.hwhm_hz >= bin)) {
        return Err(Error::DegenerateFit(format!("hwhm {} Hz collapsed below one bin ({bin} Hz)", p.hwhm_hz)));
    }
    peaks.sort_by(|a, b| a.center_hz.total_cmp(&b.center_hz));

    let rss = rep.rss * y_scale * y_scale;
    let rss_floor = n as f64 * (1e-15 * y_scale).powi(2);
    let nf = n as f64;
    let kf = k as f64;
    let aicc = nf * (rss.max(rss_floor) / nf).ln() + 2.0 * kf + 2.0 * kf * (kf + 1.0) / (nf - kf - 1.0);
    Ok(PeakFit {
        peaks,
        baseline: rep.params[3 * n_peaks] * y_scale,
        baseline_sigma: rep.sigma(3 * n_peaks) * y_scale,
        residual_rms: (rss / nf).sqrt(),
        aicc,
        n_points: n,
        iterations: rep.iterations,
    })
}

fn denormalize(p: &[f64], n_peaks: usize, x_mid: f64, x_half: f64, y_scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(p.len());
    for j in 0..n_peaks {
        out.push(x_mid + p[3 * j] * x_half);
        out.push(p[3 * j + 1].abs() * x_half);
        out.push(p[3 * j + 2] * y_scale);
    }
    out.push(p[3 * n_peaks] * y_scale);
    out
}

/// Median of the outer tenth of the samples on each side.
fn baseline_guess(y: &[f64]) -> f64 {
    let edge = (y.len() / 10).max(1);
    let mut tails: Vec<f64> = y[..edge].iter().chain(&y[y.len() - edge..]).copied().collect();
    tails.sort_by(f64::total_cmp);
    tails[tails.len() / 2]
}

/// Half width from the half-height crossings around index `i`.
pub(crate) fn half_width_at(x: &[f64], y: &[f64], i: usize, base: f64) -> f64 {
    let half = base + 0.5 * (y[i] - base);
    let mut r = i;
    while r + 1 < y.len() && y[r] > half {
        r += 1;
    }
    let mut l = i;
    while l > 0 && y[l] > half {
        l -= 1;
    }
    let bin = if x.len() > 1 { x[1] - x[0] } else { 1.0 };
    (0.5 * (x[r] - x[l])).max(bin)
}

fn local_maxima(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            // walk across plateaus; the plateau start is the candidate
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                out.push(i);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Starting points: the two tallest local maxima of the spectrum and of a
/// copy smoothed over a fraction of the line width, so a noise bump on the
/// flank of the main line cannot be the only candidate for the second.
fn auto_guesses(x: &[f64], y: &[f64], n_peaks: usize) -> Vec<Vec<PeakGuess>> {
    let base = baseline_guess(y);
    let top = argmax(y);
    let hw = half_width_at(x, y, top, base);
    let a = y[top] - base;
    if n_peaks == 1 {
        return vec![vec![PeakGuess { center_hz: x[top], hwhm_hz: hw, amplitude: a }]];
    }
    let mut out = Vec::new();
    let bin = x[1] - x[0];
    let half_bins = ((0.25 * hw / bin).round() as usize).max(1);
    for ys in [y.to_vec(), smooth(y, half_bins)] {
        let mut maxima = local_maxima(&ys);
        // largest first; equal heights keep the lower frequency first
        maxima.sort_by(|&a, &b| ys[b].total_cmp(&ys[a]).then(a.cmp(&b)));
        if maxima.len() >= 2 {
            let (i, j) = (maxima[0], maxima[1]);
            let sep = (x[j] - x[i]).abs();
            let hw_i = half_width_at(x, &ys, i, base).min(sep);
            let hw_j = half_width_at(x, &ys, j, base).min(sep);
            out.push(vec![
                PeakGuess { center_hz: x[i], hwhm_hz: hw_i, amplitude: ys[i] - base },
                PeakGuess { center_hz: x[j], hwhm_hz: hw_j, amplitude: ys[j] - base },
            ]);
        }
    }
    if out.is_empty() {
        out.push(vec![
            PeakGuess { center_hz: x[top] - 0.5 * hw, hwhm_hz: hw, amplitude: 0.5 * a },
            PeakGuess { center_hz: x[top] + 0.5 * hw, hwhm_hz: hw, amplitude: 0.5 * a },
        ]);
    }
    out
}

/// Centered moving average over `2 * half + 1` samples, truncated at the ends.
fn smooth(y: &[f64], half: usize) -> Vec<f64> {
    (0..y.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(y.len());
            y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSelection {
    pub single: PeakFit,
    pub double: Option<PeakFit>,
    pub preferred_peaks: usize,
}

/// Compare one- and two-line fits. Two lines are preferred only when the
/// two-line fit has the lower AICc and its lines are Sparrow-resolved.
pub fn select_peak_count(spec: &Spectrum) -> Result<PeakSelection> {
    let single = fit_lorentzian(spec, 1, None)?;
    let double = fit_lorentzian(spec, 2, None).ok();
    let preferred_peaks = match &double {
        Some(d) if d.aicc < single.aicc && d.is_resolved() => 2,
        _ => 1,
    };
    Ok(PeakSelection { single, double, preferred_peaks })
}
