use std::f64::consts::PI;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::{fft_spectrum, SpectrumOptions, Window};
use super::lm::{levenberg_marquardt, LeastSquares, LmOptions};
use crate::error::{Error, Result};
use crate::ramsey::RamseyCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub t2_star_s: f64,
    pub t2_star_sigma_s: f64,
    pub freq_hz: f64,
    pub freq_sigma_hz: f64,
    pub phase_rad: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub exponent: f64,
    pub residual_rms: f64,
    /// False when the fitted envelope drops by less than 20% over the record,
    /// so T₂* is an extrapolation.
    pub reliable: bool,
}

/// `baseline + amplitude·exp(-(κu)^p)·cos(2πνu + φ)` with u = t / t_scale.
/// Parameters: `[baseline, amplitude, κ, ν, φ]`, κ ≥ 0.
struct DecayProblem<'a> {
    u: &'a [f64],
    y: &'a [f64],
    p: f64,
}

impl DecayProblem<'_> {
    fn envelope(&self, kappa: f64, u: f64) -> (f64, f64) {
        let ku = kappa * u;
        if ku <= 0.0 {
            let d = if self.p == 1.0 { -u } else { 0.0 };
            return (1.0, d);
        }
        let pw = ku.powf(self.p);
        let e = (-pw).exp();
        // d/dκ exp(-(κu)^p) = -p (κu)^(p-1) u · exp(..)
        (e, -self.p * pw / kappa * e)
    }
}

impl LeastSquares for DecayProblem<'_> {
    fn n_params(&self) -> usize {
        5
    }
    fn n_residuals(&self) -> usize {
        self.u.len()
    }
    fn residuals(&self, q: &[f64], out: &mut [f64]) {
        for (i, (&u, &y)) in self.u.iter().zip(self.y).enumerate() {
            let (e, _) = self.envelope(q[2], u);
            out[i] = q[0] + q[1] * e * (2.0 * PI * q[3] * u + q[4]).cos() - y;
        }
    }
    fn jacobian(&self, q: &[f64], out: &mut DMatrix<f64>) {
        for (i, &u) in self.u.iter().enumerate() {
            let (e, de) = self.envelope(q[2], u);
            let th = 2.0 * PI * q[3] * u + q[4];
            let (s, c) = th.sin_cos();
            out[(i, 0)] = 1.0;
            out[(i, 1)] = e * c;
            out[(i, 2)] = q[1] * de * c;
            out[(i, 3)] = -q[1] * e * s * 2.0 * PI * u;
            out[(i, 4)] = -q[1] * e * s;
        }
    }
    fn project(&self, q: &mut [f64]) {
        if q[2] < 0.0 {
            q[2] = 0.0;
        }
    }
}

/// Fit a decaying Ramsey fringe with fixed envelope exponent `p` (1 is
/// exponential, 2 Gaussian). The frequency is seeded from the spectral peak
/// and T₂* from a regression of the log envelope.
pub fn fit_ramsey_decay(curve: &RamseyCurve, exponent: f64) -> Result<DecayFit> {
    let t = &curve.t_evol_s;
    let y = &curve.signal;
    let n = t.len();
    if n < 10 {
        return Err(Error::Size(format!("decay fit needs >= 10 points, got {n}")));
    }
    if !(exponent >= 1.0 && exponent.is_finite()) {
        return Err(Error::Parameter(format!("decay exponent must be >= 1, got {exponent}")));
    }
    let dt = t[1] - t[0];
    let spec =
        fft_spectrum(y, dt, &SpectrumOptions { window: Window::Rectangular, zero_pad_factor: 8, remove_mean: true })?;
    let k = spec.peak_index();
    let f0 = refine_peak(&spec.freqs_hz, &spec.amps, k);
    let span = t[n - 1] - t[0];
    if f0 * span < 2.0 {
        return Err(Error::Fit(format!("record spans {:.2} oscillation periods, need at least 2", f0 * span)));
    }
    let baseline0 = y.iter().sum::<f64>() / n as f64;
    let (amp0, rate0, phase0) = envelope_guess(t, y, baseline0, f0);

    let t_scale = t[n - 1];
    let u: Vec<f64> = t.iter().map(|v| v / t_scale).collect();
    let problem = DecayProblem { u: &u, y, p: exponent };
    let q0 = [baseline0, amp0, rate0 * t_scale, f0 * t_scale, phase0];
    let rep = levenberg_marquardt(&problem, &q0, &LmOptions::default())?;
    let mut q = rep.params.clone();
    // canonical sign: positive amplitude
    if q[1] < 0.0 {
        q[1] = -q[1];
        q[4] += PI;
    }
    let phase = (q[4] + PI).rem_euclid(2.0 * PI) - PI;
    let kappa = q[2];
    let t2 = if kappa > 0.0 { t_scale / kappa } else { f64::INFINITY };
    let t2_sigma = if kappa > 0.0 { t2 * rep.sigma(2) / kappa } else { f64::INFINITY };
    let drop = 1.0 - (-(t[n - 1] / t2).powf(exponent)).exp();
    Ok(DecayFit {
        t2_star_s: t2,
        t2_star_sigma_s: t2_sigma,
        freq_hz: q[3] / t_scale,
        freq_sigma_hz: rep.sigma(3) / t_scale,
        phase_rad: phase,
        amplitude: q[1],
        baseline: q[0],
        exponent,
        residual_rms: (rep.rss / n as f64).sqrt(),
        reliable: drop >= 0.2 && t2.is_finite(),
    })
}

/// Parabolic interpolation of a spectral peak.
fn refine_peak(f: &[f64], a: &[f64], k: usize) -> f64 {
    if k == 0 || k + 1 >= a.len() {
        return f[k];
    }
    let (l, c, r) = (a[k - 1], a[k], a[k + 1]);
    let den = l - 2.0 * c + r;
    if den == 0.0 {
        return f[k];
    }
    let shift = 0.5 * (l - r) / den;
    f[k] + shift.clamp(-0.5, 0.5) * (f[1] - f[0])
}

/// Demodulate at `f0`, smooth over one period and regress ln|envelope|
/// against t. Returns (amplitude, decay rate 1/s, phase).
fn envelope_guess(t: &[f64], y: &[f64], baseline: f64, f0: f64) -> (f64, f64, f64) {
    let n = t.len();
    let dt = t[1] - t[0];
    let z: Vec<Complex64> =
        t.iter().zip(y).map(|(&ti, &yi)| Complex64::from_polar(yi - baseline, -2.0 * PI * f0 * ti)).collect();
    let half = ((0.5 / (f0 * dt)).round() as usize).max(1);
    let smoothed: Vec<Complex64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            z[lo..=hi].iter().sum::<Complex64>() / (hi - lo + 1) as f64
        })
        .collect();
    let env: Vec<f64> = smoothed.iter().map(|c| 2.0 * c.norm()).collect();
    let peak = env.iter().cloned().fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> =
        t.iter().zip(&env).filter(|(_, &e)| e > 0.1 * peak && e > 0.0).map(|(&ti, &e)| (ti, e.ln())).collect();
    let phase = smoothed[0].arg();
    if pts.len() < 2 {
        return (peak, 1.0 / t[n - 1], phase);
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let rate = (-slope).max(0.05 / t[n - 1]);
    let amp = (my - slope * mx).exp();
    (amp, rate, phase)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(t2: f64, f: f64, p: f64, n: usize, dt: f64) -> RamseyCurve {
        let t: Vec<f64> = (1..=n).map(|i| i as f64 * dt).collect();
        let signal = t.iter().map(|&ti| 0.5 * (1.0 + (-(ti / t2).powf(p)).exp() * (2.0 * PI * f * ti).cos())).collect();
        RamseyCurve::from_signal(t, signal)
    }

    #[test]
    fn recovers_exponential_decay() {
        let c = curve(2e-6, 1e6, 1.0, 100, 0.1e-6);
        let fit = fit_ramsey_decay(&c, 1.0).unwrap();
        assert!((fit.t2_star_s - 2e-6).abs() / 2e-6 < 0.01);
        assert!((fit.freq_hz - 1e6).abs() / 1e6 < 0.01);
        assert!((fit.amplitude - 0.5).abs() < 1e-6);
        assert!((fit.baseline - 0.5).abs() < 1e-6);
        assert!(fit.reliable);
    }

    #[test]
    fn recovers_gaussian_decay() {
        let c = curve(3e-6, 1e6, 2.0, 100, 0.1e-6);
        let fit = fit_ramsey_decay(&c, 2.0).unwrap();
        assert!((fit.t2_star_s - 3e-6).abs() / 3e-6 < 0.01);
    }

    #[test]
    fn no_decay_is_flagged() {
        let c = curve(f64::INFINITY, 1e6, 1.0, 100, 0.1e-6);
        let fit = fit_ramsey_decay(&c, 1.0).unwrap();
        assert!(!fit.reliable);
    }

    #[test]
    fn too_few_periods() {
        let c = curve(2e-6, 1e5, 1.0, 100, 0.1e-6);
        assert!(matches!(fit_ramsey_decay(&c, 1.0), Err(Error::Fit(_))));
    }
}
