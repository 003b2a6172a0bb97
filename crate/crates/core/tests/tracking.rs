use driftctl::tracker::{lia_track, odmr_track, EstimateFlag, LiaConfig, OdmrConfig};
use driftctl::{generate, NoiseComponent, NoiseSpec, NoiseTrace};
use proptest::prelude::*;

fn ou(seed: u64, duration: f64, dt: f64, std: f64) -> NoiseTrace {
    let spec = NoiseSpec {
        components: vec![NoiseComponent::Ou { relaxation_rate_per_s: 0.005, stationary_std_hz: std }],
        seed,
    };
    generate(&spec, duration, dt).unwrap()
}

fn lia(window_s: f64) -> LiaConfig {
    LiaConfig { window_s, update_period_s: 1.0, sigma_floor_hz: 3e3, capture_range_hz: 5e5 }
}

fn odmr() -> OdmrConfig {
    OdmrConfig {
        f0_hz: 0.0,
        range_hz: 2e6,
        n_points: 15,
        dwell_s: 2.0,
        period_s: 60.0,
        contrast: 0.3,
        count_rate_hz: Some(2e4),
        linewidth_hz: None,
    }
}

/// Overwrite every sample strictly after `t_cut`.
fn scramble_after(trace: &NoiseTrace, t_cut: f64, salt: f64) -> NoiseTrace {
    let mut out = trace.clone();
    for (i, v) in out.values.iter_mut().enumerate() {
        if trace.time_at(i) > t_cut {
            *v = 1e5 * (salt * i as f64).sin() - 3e5;
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn lia_estimates_ignore_the_future(seed in any::<u64>(), cut in 50.0f64..900.0, salt in 0.1f64..10.0) {
        let trace = ou(seed, 1000.0, 0.5, 2e5);
        let cfg = lia(20.0);
        let a = lia_track(&trace, &cfg, seed).unwrap();
        let b = lia_track(&scramble_after(&trace, cut, salt), &cfg, seed).unwrap();
        let k = a.available_at(cut);
        prop_assert!(k > 0);
        prop_assert_eq!(&a.entries[..k], &b.entries[..k]);
    }

    #[test]
    fn odmr_estimates_ignore_the_future(seed in any::<u64>(), cut in 100.0f64..1700.0, salt in 0.1f64..10.0) {
        let trace = ou(seed, 1800.0, 0.5, 2e5);
        let cfg = odmr();
        let a = odmr_track(&trace, &cfg, seed).unwrap();
        let b = odmr_track(&scramble_after(&trace, cut, salt), &cfg, seed).unwrap();
        let k = a.available_at(cut);
        prop_assert_eq!(&a.entries[..k], &b.entries[..k]);
    }
}

#[test]
fn lia_noise_variance_scales_inversely_with_window() {
    let zero = NoiseTrace::new(1.0, 0.0, vec![0.0; 20001], "zero").unwrap();
    let sigma = 3e3;
    for w in [5.0, 10.0, 20.0, 40.0] {
        let mut sum_sq = 0.0;
        let mut count = 0usize;
        for seed in 0..5 {
            let est = lia_track(&zero, &lia(w), seed).unwrap();
            for e in &est.entries {
                sum_sq += e.est_hz * e.est_hz;
                count += 1;
            }
        }
        let var = sum_sq / count as f64;
        let expected = sigma * sigma / w;
        assert!((var / expected - 1.0).abs() < 0.2, "w {w}: var {var} expected {expected}");
    }
}

#[test]
fn odmr_is_translation_covariant() {
    let cfg = odmr();
    let trace = ou(3, 3000.0, 0.5, 1.5e5);
    let shift = 237_500.0;
    let moved = trace.map(|v| v + shift);
    let moved_cfg = OdmrConfig { f0_hz: cfg.f0_hz + shift, ..cfg.clone() };
    let a = odmr_track(&trace, &cfg, 8).unwrap();
    let b = odmr_track(&moved, &moved_cfg, 8).unwrap();
    assert_eq!(a.len(), b.len());
    let mut valid = 0;
    for (x, y) in a.entries.iter().zip(&b.entries) {
        assert_eq!(x.flag, y.flag);
        assert_eq!(x.t_avail_s, y.t_avail_s);
        if x.flag == EstimateFlag::Valid {
            valid += 1;
            assert!((y.est_hz - x.est_hz - shift).abs() < 1e-6 * cfg.range_hz, "{} vs {}", x.est_hz, y.est_hz);
        }
    }
    assert!(valid > 40);
}

#[test]
fn odmr_tracks_a_slow_drift() {
    let trace = ou(4, 6000.0, 0.5, 2e5);
    let est = odmr_track(&trace, &odmr(), 1).unwrap();
    let mut err_sq = 0.0;
    for e in &est.entries {
        let truth = trace.interpolate(e.t_eff_s);
        err_sq += (e.est_hz - truth).powi(2);
    }
    let rms = (err_sq / est.len() as f64).sqrt();
    assert!(rms < 0.25 * trace.rms(), "tracking rms {rms} vs trace rms {}", trace.rms());
}
