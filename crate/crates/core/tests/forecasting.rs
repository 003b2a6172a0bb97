use driftctl::predictor::{
    build_dataset_split, grad_check, model_from_json, model_to_json, train, Arch, PredictorKind, PredictorModel,
    TrainConfig, WindowDataset,
};
use driftctl::rng::rng;
use driftctl::{generate, NoiseComponent, NoiseSpec};
use proptest::prelude::*;
use rand::Rng;

fn quick(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig { epochs, batch_size: 32, seed: Some(seed), ..TrainConfig::default() }
}

fn sine_ou(seed: u64, n: usize) -> Vec<f64> {
    let spec = NoiseSpec {
        components: vec![
            NoiseComponent::Sine { amplitude_hz: 1e4, frequency_hz: 1.0 / 50.0, phase_rad: 0.0 },
            NoiseComponent::Ou { relaxation_rate_per_s: 0.01, stationary_std_hz: 2e3 },
        ],
        seed,
    };
    generate(&spec, (n - 1) as f64, 1.0).unwrap().values
}

/// Mean squared error of raw predictions over windows `rows`, per output.
fn horizon_errors(model: &PredictorModel, data: &WindowDataset, rows: std::ops::Range<usize>) -> (Vec<f64>, Vec<f64>) {
    let mut sq = vec![0.0; data.n];
    let mut abs = vec![0.0; data.n];
    let count = rows.len() as f64;
    for r in rows {
        let (x, y) = data.raw_window(r);
        let p = model.predict(x, None).unwrap();
        for j in 0..data.n {
            sq[j] += (p[j] - y[j]).powi(2) / count;
            abs[j] += (p[j] - y[j]).abs() / count;
        }
    }
    (sq, abs)
}

#[test]
fn gradients_are_correct_for_random_small_models() {
    let mut r = rng(2024);
    for case in 0..10 {
        let arch = Arch { hidden: r.random_range(1..=8), m: r.random_range(2..=12), n: r.random_range(1..=5) };
        let inputs: Vec<f64> = (0..arch.m).map(|_| r.random_range(-2.0..2.0)).collect();
        let targets: Vec<f64> = (0..arch.n).map(|_| r.random_range(-1.0..1.0)).collect();
        let gc = grad_check(arch, &inputs, &targets, case).unwrap();
        assert!(gc.max_rel_error < 1e-4, "case {case} {arch:?}: {}", gc.max_rel_error);
    }
}

#[test]
fn training_is_deterministic() {
    let series = sine_ou(1, 800);
    let data = build_dataset_split(&series, 20, 5, 0.2).unwrap();
    let arch = Arch { hidden: 6, m: 20, n: 5 };
    let (a, ra) = train(&data, arch, &quick(4, 9)).unwrap();
    let (b, rb) = train(&data, arch, &quick(4, 9)).unwrap();
    assert_eq!(
        a.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        b.params.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(ra, rb);
    let (c, _) = train(&data, arch, &quick(4, 10)).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn shifting_the_series_shifts_predictions() {
    let series = sine_ou(2, 600);
    let shift = 3.75e5;
    let shifted: Vec<f64> = series.iter().map(|v| v + shift).collect();
    let arch = Arch { hidden: 5, m: 16, n: 4 };
    let (a, _) = train(&build_dataset_split(&series, 16, 4, 0.25).unwrap(), arch, &quick(3, 4)).unwrap();
    let (b, _) = train(&build_dataset_split(&shifted, 16, 4, 0.25).unwrap(), arch, &quick(3, 4)).unwrap();
    for start in [0, 100, 450] {
        let pa = a.predict(&series[start..start + 16], None).unwrap();
        let pb = b.predict(&shifted[start..start + 16], None).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert!(((y - shift) - x).abs() <= 1e-9 * y.abs(), "{x} + {shift} vs {y}");
        }
    }
}

#[test]
fn lstm_beats_persistence_on_a_sinusoid() {
    // period 20 samples, M = 2 periods, N = a quarter period
    let series: Vec<f64> = (0..2000).map(|i| 5e4 * (2.0 * std::f64::consts::PI * i as f64 / 20.0).sin()).collect();
    let data = build_dataset_split(&series, 40, 5, 0.2).unwrap();
    let (model, report) = train(&data, Arch { hidden: 12, m: 40, n: 5 }, &quick(30, 3)).unwrap();
    let split = data.split_index(0.2);
    let persistence = PredictorModel::baseline(PredictorKind::Persistence, 40, 5).unwrap();
    let (lstm_sq, _) = horizon_errors(&model, &data, split..data.len());
    let (pers_sq, _) = horizon_errors(&persistence, &data, split..data.len());
    let lstm: f64 = lstm_sq.iter().sum();
    let pers: f64 = pers_sq.iter().sum();
    assert!(lstm < 0.1 * pers, "lstm {lstm} persistence {pers} (val loss {})", report.best_val_loss());
}

fn trained_model() -> PredictorModel {
    let series = sine_ou(5, 400);
    let data = build_dataset_split(&series, 10, 3, 0.2).unwrap();
    train(&data, Arch { hidden: 4, m: 10, n: 3 }, &quick(2, 1)).unwrap().0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn model_json_round_trip_is_bit_exact(
        noise in prop::collection::vec(-1e3f64..1e3, 1..8),
        input in prop::collection::vec(-5e4f64..5e4, 10),
    ) {
        let mut model = trained_model();
        for (i, v) in model.params.iter_mut().enumerate() {
            *v *= 1.0 + noise[i % noise.len()] * 1e-6;
        }
        let back = model_from_json(&model_to_json(&model).unwrap()).unwrap();
        prop_assert_eq!(&back, &model);
        let a = model.predict(&input, None).unwrap();
        let b = back.predict(&input, None).unwrap();
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
