use serde::{Deserialize, Serialize};

use super::RamseyCurve;
use crate::error::{Error, Result};
use crate::spectral::{
    fft_spectrum, fit_lorentzian, half_width_at, select_peak_count, PeakFit, PeakSelection, Spectrum, SpectrumOptions,
    Window,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinewidthOptions {
    #[serde(default = "LinewidthOptions::default_window")]
    pub window: Window,
    #[serde(default = "LinewidthOptions::default_pad")]
    pub zero_pad_factor: usize,
    /// Half-width of the fitted band, in units of the crude HWHM estimate.
    #[serde(default = "LinewidthOptions::default_span")]
    pub fit_span_hwhm: f64,
}

impl LinewidthOptions {
    fn default_window() -> Window {
        Window::Rectangular
    }
    fn default_pad() -> usize {
        4
    }
    fn default_span() -> f64 {
        8.0
    }
}

impl Default for LinewidthOptions {
    fn default() -> Self {
        LinewidthOptions { window: Window::Rectangular, zero_pad_factor: 4, fit_span_hwhm: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RamseyLinewidth {
    pub l_hz: f64,
    pub l_sigma_hz: f64,
    pub center_hz: f64,
    pub fit: PeakFit,
}

/// Amplitude spectrum of a Ramsey curve. A Ramsey record starts at full
/// contrast and decays, so a rectangular window is the default: a taper
/// would suppress the most informative early samples.
pub fn ramsey_spectrum(curve: &RamseyCurve, opts: &LinewidthOptions) -> Result<Spectrum> {
    let t = &curve.t_evol_s;
    if t.len() < 2 {
        return Err(Error::Size("Ramsey curve needs at least 2 points".into()));
    }
    let dt = t[1] - t[0];
    if t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::Parameter("Ramsey spectrum needs a uniform t_evol grid".into()));
    }
    fft_spectrum(
        &curve.signal,
        dt,
        &SpectrumOptions { window: opts.window, zero_pad_factor: opts.zero_pad_factor, remove_mean: true },
    )
}

/// Band around the strongest line, `fit_span_hwhm` crude half-widths wide.
fn peak_band(spec: &Spectrum, opts: &LinewidthOptions) -> Spectrum {
    let k = spec.peak_index();
    let base = 0.0;
    let hw = half_width_at(&spec.freqs_hz, &spec.amps, k, base);
    let span = opts.fit_span_hwhm * hw;
    let fk = spec.freqs_hz[k];
    let mut band = spec.band(fk - span, fk + span);
    let bin = spec.bin_width_hz();
    let mut widen = span;
    while band.len() < 20 && band.len() < spec.len() {
        widen += 10.0 * bin;
        band = spec.band(fk - widen, fk + widen);
    }
    band
}

/// HWHM of the Ramsey spectral line from a single-Lorentzian fit.
pub fn ramsey_linewidth(curve: &RamseyCurve, opts: &LinewidthOptions) -> Result<RamseyLinewidth> {
    let spec = ramsey_spectrum(curve, opts)?;
    let band = peak_band(&spec, opts);
    let fit = fit_lorentzian(&band, 1, None)?;
    let p = fit.peaks[0];
    Ok(RamseyLinewidth { l_hz: p.hwhm_hz, l_sigma_hz: p.hwhm_sigma_hz, center_hz: p.center_hz, fit })
}

/// One- versus two-line model selection on the Ramsey spectrum.
pub fn ramsey_peak_selection(curve: &RamseyCurve, opts: &LinewidthOptions) -> Result<PeakSelection> {
    let spec = ramsey_spectrum(curve, opts)?;
    select_peak_count(&peak_band(&spec, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn exp_curve(t2: f64) -> RamseyCurve {
        let t: Vec<f64> = (1..=400).map(|i| i as f64 * 0.1e-6).collect();
        let s = t.iter().map(|&x| 0.5 * (1.0 + (-x / t2).exp() * (2.0 * PI * 1e6 * x).cos())).collect();
        RamseyCurve::from_signal(t, s)
    }

    #[test]
    fn exponential_line_constant() {
        // amplitude-spectrum half width of an exponential decay is √3/(2π T₂)
        for t2 in [2e-6, 4e-6, 8e-6] {
            let lw = ramsey_linewidth(&exp_curve(t2), &LinewidthOptions::default()).unwrap();
            let c = lw.l_hz * t2;
            assert!((c - 3f64.sqrt() / (2.0 * PI)).abs() < 0.25 * 0.2757, "l·T2 = {c}");
            // the negative-frequency image pulls the center up slightly
            assert!((lw.center_hz - 1e6).abs() < 0.02e6);
        }
    }
}
