use driftctl::ctrl::{efficiency_curve, run_loop, ControlPolicy, Scheme};
use driftctl::predictor::{PredictorKind, PredictorModel};
use driftctl::spectral::{psd, PsdOptions};
use driftctl::tracker::{lia_track, LiaConfig};
use driftctl::{generate, NoiseComponent, NoiseSpec, NoiseTrace};
use proptest::prelude::*;

fn ou(seed: u64, rate: f64, duration: f64, dt: f64) -> NoiseTrace {
    let spec = NoiseSpec {
        components: vec![NoiseComponent::Ou { relaxation_rate_per_s: rate, stationary_std_hz: 3e5 }],
        seed,
    };
    generate(&spec, duration, dt).unwrap()
}

fn lia() -> LiaConfig {
    LiaConfig { window_s: 20.0, update_period_s: 1.0, sigma_floor_hz: 2e4, capture_range_hz: 1e9 }
}

fn band_power(trace: &NoiseTrace, below_hz: f64) -> f64 {
    let s = psd(trace, &PsdOptions { segments: 4, ..Default::default() }).unwrap();
    s.freqs_hz.iter().zip(&s.amps).filter(|(f, _)| **f > 0.0 && **f < below_hz).map(|(_, p)| p).sum()
}

#[test]
fn ideal_feedback_suppresses_low_frequencies() {
    for (seed, nu) in [(1, 0.1), (2, 0.05), (3, 0.2)] {
        let trace = ou(seed, 1e-4, 65535.0, 1.0);
        let run = run_loop(&trace, None, &ControlPolicy::new(Scheme::IdealFeedback, 1.0 / nu), None).unwrap();
        let before = band_power(&trace, nu / 10.0);
        let after = band_power(&run.residual, nu / 10.0);
        assert!(before >= 10.0 * after, "nu {nu}: {before} vs {after}");
    }
}

#[test]
fn mean_efficiency_grows_with_update_speed() {
    let speeds = [0.0033, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5];
    let mut mean = vec![0.0; speeds.len()];
    for seed in 0..20 {
        let trace = ou(seed, 2e-3, 6000.0, 0.1);
        let curve =
            efficiency_curve(&trace, &speeds, &ControlPolicy::new(Scheme::IdealFeedback, 1.0), None, None).unwrap();
        for (m, (_, eta)) in mean.iter_mut().zip(curve) {
            *m += eta / 20.0;
        }
    }
    for w in mean.windows(2) {
        assert!(w[1] >= w[0], "{mean:?}");
    }
}

#[test]
fn oracle_feedforward_never_loses_to_feedback() {
    let oracle = PredictorModel::baseline(PredictorKind::Oracle, 30, 10).unwrap();
    for seed in 0..5 {
        let trace = ou(seed, 3e-3, 3000.0, 0.1);
        let est = lia_track(&trace, &lia(), seed).unwrap();
        let fb = run_loop(&trace, Some(&est), &ControlPolicy::new(Scheme::Feedback, 1.0), None).unwrap();
        let ff = run_loop(&trace, Some(&est), &ControlPolicy::new(Scheme::Feedforward, 1.0), Some(&oracle)).unwrap();
        // score both over the same span, after the feedforward warm-up
        let skip = ff.meta.warmup_samples.max(fb.meta.warmup_samples);
        let rms_fb = fb.residual.tail_from_index(skip).unwrap().rms();
        let rms_ff = ff.residual.tail_from_index(skip).unwrap().rms();
        assert!(rms_ff <= rms_fb, "seed {seed}: ff {rms_ff} fb {rms_fb}");
    }
}

#[test]
fn persistence_feedforward_with_zero_horizon_matches_feedback() {
    let persistence = PredictorModel::baseline(PredictorKind::Persistence, 5, 3).unwrap();
    let trace = ou(9, 3e-3, 2000.0, 0.1);
    let est = lia_track(&trace, &lia(), 9).unwrap();
    let fb = run_loop(&trace, Some(&est), &ControlPolicy::new(Scheme::Feedback, 2.0), None).unwrap();
    let policy = ControlPolicy { horizon_s: Some(0.0), ..ControlPolicy::new(Scheme::Feedforward, 2.0) };
    let ff = run_loop(&trace, Some(&est), &policy, Some(&persistence)).unwrap();
    let skip = ff.correction.iter().position(|c| c.1 != 0.0).unwrap();
    assert_eq!(&ff.correction[skip..], &fb.correction[skip..]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn corrections_ignore_the_future(seed in any::<u64>(), cut in 100.0f64..1400.0) {
        let trace = ou(seed, 3e-3, 1500.0, 0.5);
        let mut future = trace.clone();
        for (i, v) in future.values.iter_mut().enumerate() {
            if trace.time_at(i) > cut {
                *v = -*v + 4e5;
            }
        }
        let a_est = lia_track(&trace, &lia(), seed).unwrap();
        let b_est = lia_track(&future, &lia(), seed).unwrap();
        let extrap = PredictorModel::baseline(PredictorKind::LinearExtrap, 6, 10).unwrap();
        for (scheme, predictor) in [
            (Scheme::Feedback, None),
            (Scheme::Feedforward, Some(&extrap)),
            (Scheme::IdealFeedback, None),
        ] {
            let p = ControlPolicy::new(scheme, 3.0);
            let a = run_loop(&trace, Some(&a_est), &p, predictor).unwrap();
            let b = run_loop(&future, Some(&b_est), &p, predictor).unwrap();
            let k = a.correction.iter().take_while(|c| c.0 <= cut).count();
            prop_assert!(k > 0);
            prop_assert_eq!(&a.correction[..k], &b.correction[..k]);
        }
    }
}
