//! Shared inputs for the criterion benches.

use driftctl::noisegen::{generate, NoiseComponent, NoiseSpec, NoiseTrace};

/// OU drift plus a slow sine at `dt_s`, long enough for the benched kernels.
pub fn drift_trace(duration_s: f64, dt_s: f64) -> NoiseTrace {
    let spec = NoiseSpec {
        components: vec![
            NoiseComponent::Ou { relaxation_rate_per_s: 1e-3, stationary_std_hz: 3e5 },
            NoiseComponent::Sine { amplitude_hz: 2e5, frequency_hz: 1.0 / 600.0, phase_rad: 0.0 },
        ],
        seed: 7,
    };
    generate(&spec, duration_s, dt_s).expect("valid bench noise spec")
}
