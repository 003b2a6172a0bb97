//! Spectra and lineshape fitting.

mod decay;
mod fft;
mod linewidth;
pub mod lm;
mod lorentz;

pub use decay::{fit_ramsey_decay, DecayFit};
pub use fft::{fft_spectrum, psd, psd_samples, PsdOptions, Scale, Spectrum, SpectrumMeta, SpectrumOptions, Window};
pub use linewidth::{fit_linewidth_law, LinewidthFit};
pub(crate) use lorentz::{fit_lines, half_width_at};
pub use lorentz::{
    fit_lorentzian, fit_lorentzian_xy, lorentzian, select_peak_count, Peak, PeakFit, PeakGuess, PeakSelection,
};
