use driftctl::ramsey::{
    ramsey_linewidth, simulate_ramsey, sweep_linewidth, EvolutionGrid, LinewidthOptions, RamseyConfig, SweepInputs,
    SweepPoint,
};
use driftctl::rng::rng;
use driftctl::spectral::{lorentzian, select_peak_count, Scale, Spectrum, SpectrumMeta, Window};
use driftctl::{generate, NoiseComponent, NoiseSpec, NoiseTrace, Scheme};
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

fn noisy_spectrum(lines: &[(f64, f64, f64)], noise: f64, seed: u64) -> Spectrum {
    let n = 601;
    let freqs: Vec<f64> = (0..n).map(|i| 0.7e6 + 0.6e6 * i as f64 / (n - 1) as f64).collect();
    let mut r = rng(seed);
    let normal = Normal::new(0.0, noise).unwrap();
    let amps = freqs
        .iter()
        .map(|&f| lines.iter().map(|&(c, g, a)| lorentzian(f, c, g, a)).sum::<f64>() + normal.sample(&mut r))
        .collect();
    Spectrum {
        freqs_hz: freqs,
        amps,
        meta: SpectrumMeta {
            window: Window::Rectangular,
            zero_pad_factor: 1,
            scale: Scale::Amplitude,
            n_signal: n,
            n_fft: n,
            segments: 1,
            window_sum: 1.0,
        },
    }
}

#[test]
fn model_selection_monte_carlo() {
    let g = 20e3;
    let amp = 1.0;
    let noise = amp / 20.0;
    let mut doublet_ok = 0;
    let mut singlet_ok = 0;
    for seed in 0..50 {
        let two = noisy_spectrum(&[(0.97e6, g, amp), (0.97e6 + 3.0 * g, g, amp)], noise, seed);
        if select_peak_count(&two).unwrap().preferred_peaks == 2 {
            doublet_ok += 1;
        }
        let one = noisy_spectrum(&[(1.0e6, g, amp)], noise, 1000 + seed);
        if select_peak_count(&one).unwrap().preferred_peaks == 1 {
            singlet_ok += 1;
        }
    }
    assert!(doublet_ok >= 45, "doublet chosen {doublet_ok}/50");
    assert!(singlet_ok >= 45, "singlet chosen {singlet_ok}/50");
}

fn static_cfg(shots: usize) -> RamseyConfig {
    RamseyConfig {
        bias_hz: 2e6,
        extra_biases_hz: vec![],
        t_evol: EvolutionGrid::Linear { start_s: 2.5e-8, step_s: 2.5e-8, count: 400 },
        shots_per_point: shots,
        shot_wall_time_s: 1e-3,
        intrinsic_t2_s: Some(5e-6),
        decay_exponent: 1.0,
        readout: Default::default(),
        acquisition: Default::default(),
        start_s: 0.0,
    }
}

/// Shot-averaged population for a Gaussian detuning of std `sigma`, by
/// direct quadrature over the detuning.
fn quadrature_population(t: f64, bias: f64, sigma: f64, t2: f64) -> f64 {
    let env = (-t / t2).exp();
    if sigma == 0.0 {
        return 0.5 * (1.0 + env * (2.0 * PI * bias * t).cos());
    }
    let steps = 4000;
    let h = 16.0 * sigma / steps as f64;
    let mut acc = 0.0;
    for k in 0..=steps {
        let d = -8.0 * sigma + k as f64 * h;
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        let pdf = (-0.5 * (d / sigma).powi(2)).exp() / (sigma * (2.0 * PI).sqrt());
        acc += w * h * pdf * (2.0 * PI * (bias + d) * t).cos();
    }
    0.5 * (1.0 + env * acc)
}

#[test]
fn gaussian_static_detuning_broadens_monotonically() {
    let shots = 2000;
    let cfg = static_cfg(shots);
    let opts = LinewidthOptions::default();
    let mut widths = Vec::new();
    for (i, sigma) in [0.0, 10e3, 30e3, 100e3].into_iter().enumerate() {
        let mut r = rng(50 + i as u64);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let values: Vec<f64> = (0..cfg.total_shots() + 1).map(|_| sigma * normal.sample(&mut r)).collect();
        let trace = NoiseTrace::new(cfg.shot_wall_time_s, 0.0, values, "static").unwrap();
        let curve = simulate_ramsey(&trace, &cfg, 1).unwrap();

        let oracle: Vec<f64> =
            curve.t_evol_s.iter().map(|&t| quadrature_population(t, cfg.bias_hz, sigma, 5e-6)).collect();
        let rms_dev =
            (curve.signal.iter().zip(&oracle).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / oracle.len() as f64).sqrt();
        assert!(rms_dev < 2.0 * 0.5 / (shots as f64).sqrt(), "sigma {sigma}: rms deviation {rms_dev}");

        let l = ramsey_linewidth(&curve, &opts).unwrap().l_hz;
        let mut oracle_curve = curve.clone();
        oracle_curve.signal = oracle;
        let l_oracle = ramsey_linewidth(&oracle_curve, &opts).unwrap().l_hz;
        assert!((l / l_oracle - 1.0).abs() < 0.1, "sigma {sigma}: {l} vs oracle {l_oracle}");
        widths.push(l);
    }
    for w in widths.windows(2) {
        assert!(w[1] > w[0], "{widths:?}");
    }
}

#[test]
fn sweep_is_identical_sequential_and_parallel() {
    let spec = NoiseSpec {
        components: vec![NoiseComponent::Ou { relaxation_rate_per_s: 1e-3, stationary_std_hz: 2e5 }],
        seed: 11,
    };
    let trace = generate(&spec, 3000.0, 0.1).unwrap();
    let ramsey = RamseyConfig {
        shots_per_point: 500,
        shot_wall_time_s: 2e-3,
        t_evol: EvolutionGrid::Linear { start_s: 2.5e-8, step_s: 2.5e-8, count: 200 },
        start_s: 500.0,
        ..static_cfg(1)
    };
    let points: Vec<SweepPoint> = [0.01, 0.05, 0.2]
        .iter()
        .map(|&nu| SweepPoint {
            nu_hz: nu,
            scheme: Scheme::IdealFeedback,
            update_period_s: None,
            tracker: None,
            horizon_s: None,
        })
        .collect();
    let inputs = SweepInputs {
        trace: &trace,
        points: &points,
        tracker: None,
        predictor: None,
        ramsey: &ramsey,
        linewidth: LinewidthOptions::default(),
        seed: 3,
    };
    let a = sweep_linewidth(&inputs, false).unwrap();
    let b = sweep_linewidth(&inputs, true).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|p| p.row.flag.has_linewidth()));
}
