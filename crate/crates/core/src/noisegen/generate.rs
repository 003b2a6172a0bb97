use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{rms, NoiseComponent, NoiseSpec, NoiseTrace};
use crate::error::{require, Error, Result};
use crate::rng::{derive_seed, rng};

/// Synthesize a trace of `floor(duration_s / dt_s) + 1` samples starting at t = 0.
///
/// Component `i` draws from its own stream seeded with
/// `derive_seed(spec.seed, i)`, so the trace equals the running sum (in
/// component order, starting from zero) of [`generate_component`] outputs.
pub fn generate(spec: &NoiseSpec, duration_s: f64, dt_s: f64) -> Result<NoiseTrace> {
    let n = sample_count(duration_s, dt_s)?;
    for c in &spec.components {
        c.validate(dt_s)?;
    }
    let mut values = vec![0.0; n];
    for (i, c) in spec.components.iter().enumerate() {
        let part = component_values(c, i as u64, spec.seed, n, dt_s)?;
        for (v, p) in values.iter_mut().zip(part) {
            *v += p;
        }
    }
    NoiseTrace::new(dt_s, 0.0, values, "synthetic")
}

/// A single component exactly as [`generate`] would produce it at position `index`.
pub fn generate_component(
    component: &NoiseComponent,
    index: u64,
    seed: u64,
    duration_s: f64,
    dt_s: f64,
) -> Result<NoiseTrace> {
    let n = sample_count(duration_s, dt_s)?;
    component.validate(dt_s)?;
    let values = component_values(component, index, seed, n, dt_s)?;
    NoiseTrace::new(dt_s, 0.0, values, "synthetic")
}

fn sample_count(duration_s: f64, dt_s: f64) -> Result<usize> {
    require(dt_s.is_finite() && dt_s > 0.0, || format!("dt_s must be positive, got {dt_s}"))?;
    require(duration_s.is_finite() && duration_s >= dt_s, || {
        format!("duration {duration_s} s shorter than dt {dt_s} s")
    })?;
    Ok((duration_s / dt_s + 1e-9).floor() as usize + 1)
}

fn component_values(c: &NoiseComponent, index: u64, seed: u64, n: usize, dt_s: f64) -> Result<Vec<f64>> {
    let sub_seed = derive_seed(seed, index);
    Ok(match *c {
        NoiseComponent::Constant { offset_hz } => vec![offset_hz; n],
        NoiseComponent::Sine { amplitude_hz, frequency_hz, phase_rad } => {
            (0..n).map(|i| amplitude_hz * (2.0 * PI * frequency_hz * (i as f64 * dt_s) + phase_rad).sin()).collect()
        }
        NoiseComponent::Ou { relaxation_rate_per_s, stationary_std_hz } => {
            ou(relaxation_rate_per_s, stationary_std_hz, n, dt_s, sub_seed)
        }
        NoiseComponent::PowerLaw { exponent, rms_hz, low_cutoff_hz, high_cutoff_hz } => {
            power_law(exponent, rms_hz, low_cutoff_hz, high_cutoff_hz, n, dt_s, sub_seed)?
        }
    })
}

/// Exact conditional-Gaussian discretization: the stationary variance does
/// not depend on `dt_s`.
fn ou(rate: f64, std: f64, n: usize, dt_s: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    let decay = (-rate * dt_s).exp();
    let kick = std * (1.0 - decay * decay).sqrt();
    let mut x = std * rng.sample::<f64, _>(StandardNormal);
    let mut out = Vec::with_capacity(n);
    out.push(x);
    for _ in 1..n {
        x = decay * x + kick * rng.sample::<f64, _>(StandardNormal);
        out.push(x);
    }
    out
}

/// Frequency-domain synthesis: deterministic amplitudes ∝ f^(-α/2) on the
/// in-band bins, uniform random phases, inverse FFT, then rescale to `rms_hz`.
fn power_law(alpha: f64, rms_hz: f64, low: f64, high: f64, n: usize, dt_s: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = rng(seed);
    let df = 1.0 / (n as f64 * dt_s);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    let mut populated = 0usize;
    for k in 1..=n / 2 {
        let f = k as f64 * df;
        // one phase per bin regardless of band, so changing cutoffs does not
        // reshuffle the phases of bins that stay in band
        let phase = rng.random::<f64>() * 2.0 * PI;
        if f < low || f > high {
            continue;
        }
        populated += 1;
        let amp = f.powf(-alpha / 2.0);
        let z = Complex64::from_polar(amp, phase);
        if 2 * k == n {
            spectrum[k] = Complex64::new(z.re, 0.0);
        } else {
            spectrum[k] = z;
            spectrum[n - k] = z.conj();
        }
    }
    if populated == 0 {
        return Err(Error::Parameter(format!(
            "power-law band [{low}, {high}] Hz contains no frequency bins (resolution {df} Hz)"
        )));
    }
    FftPlanner::<f64>::new().plan_fft_inverse(n).process(&mut spectrum);
    let mut values: Vec<f64> = spectrum.iter().map(|z| z.re).collect();
    let current = rms(&values);
    let scale = if current > 0.0 { rms_hz / current } else { 0.0 };
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(components: Vec<NoiseComponent>) -> NoiseSpec {
        NoiseSpec { components, seed: 11 }
    }

    #[test]
    fn constant_zero_gives_exact_zeros() {
        let t = generate(&spec(vec![NoiseComponent::Constant { offset_hz: 0.0 }]), 100.0, 1.0).unwrap();
        assert_eq!(t.len(), 101);
        assert!(t.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_peak_at_quarter_period() {
        let s = spec(vec![NoiseComponent::Sine { amplitude_hz: 1000.0, frequency_hz: 0.01, phase_rad: 0.0 }]);
        let t = generate(&s, 100.0, 1.0).unwrap();
        assert!((t.values[25] - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = [
            NoiseComponent::Ou { relaxation_rate_per_s: 0.01, stationary_std_hz: -1.0 },
            NoiseComponent::PowerLaw { exponent: 3.5, rms_hz: 1.0, low_cutoff_hz: 0.01, high_cutoff_hz: 0.1 },
            NoiseComponent::PowerLaw { exponent: 1.0, rms_hz: 1.0, low_cutoff_hz: 0.2, high_cutoff_hz: 0.1 },
            NoiseComponent::Sine { amplitude_hz: 1.0, frequency_hz: -1.0, phase_rad: 0.0 },
            NoiseComponent::Constant { offset_hz: f64::INFINITY },
        ];
        for c in bad {
            assert!(matches!(generate(&spec(vec![c]), 100.0, 1.0), Err(Error::Parameter(_))));
        }
        assert!(generate(&spec(vec![]), 0.5, 1.0).is_err());
    }

    #[test]
    fn high_cutoff_beyond_nyquist() {
        let s = spec(vec![NoiseComponent::PowerLaw {
            exponent: 1.0,
            rms_hz: 1.0,
            low_cutoff_hz: 0.01,
            high_cutoff_hz: 0.6,
        }]);
        assert!(matches!(generate(&s, 1000.0, 1.0), Err(Error::Nyquist { .. })));
    }

    #[test]
    fn power_law_hits_requested_rms() {
        let s = spec(vec![NoiseComponent::PowerLaw {
            exponent: 1.0,
            rms_hz: 250.0,
            low_cutoff_hz: 0.001,
            high_cutoff_hz: 0.5,
        }]);
        let t = generate(&s, 4095.0, 1.0).unwrap();
        assert!((t.rms() - 250.0).abs() < 1e-9);
    }

    #[test]
    fn ou_stationary_std_over_seeds() {
        // oracle: stationary variance of the OU process is stationary_std^2
        // independent of dt; average the empirical variance over seeds.
        let c = NoiseComponent::Ou { relaxation_rate_per_s: 0.01, stationary_std_hz: 500.0 };
        let mut vars = Vec::new();
        for seed in 0..12 {
            let t = generate(&NoiseSpec { components: vec![c.clone()], seed }, 10_000.0, 1.0).unwrap();
            let m = t.mean();
            vars.push(t.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (t.len() - 1) as f64);
        }
        let pooled = (vars.iter().sum::<f64>() / vars.len() as f64).sqrt();
        assert!((pooled - 500.0).abs() / 500.0 < 0.1, "pooled std {pooled}");
        let single = generate(&NoiseSpec { components: vec![c], seed: 42 }, 10_000.0, 1.0).unwrap();
        let m = single.mean();
        let sd = (single.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (single.len() - 1) as f64).sqrt();
        assert!((sd - 500.0).abs() / 500.0 < 0.1, "single-seed std {sd}");
    }
}
