use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `l = amplitude · ν^(-n) + d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinewidthFit {
    pub amplitude: f64,
    pub n: f64,
    pub d_hz: f64,
    pub amplitude_sigma: f64,
    pub n_sigma: f64,
    pub d_sigma_hz: f64,
    /// rms of (fit − data) in Hz.
    pub rms_hz: f64,
    pub with_offset: bool,
    pub n_points: usize,
}

impl LinewidthFit {
    pub fn evaluate(&self, nu: f64) -> f64 {
        self.amplitude * nu.powf(-self.n) + self.d_hz
    }
}

/// Fit the linewidth-versus-update-speed law to `(ν, l)` points. Without
/// offset this is ordinary least squares in log-log space; with offset it is
/// a bounded nonlinear fit in linear space.
pub fn fit_linewidth_law(points: &[(f64, f64)], with_offset: bool) -> Result<LinewidthFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("need >= 3 points, got {}", points.len())));
    }
    if points.iter().any(|&(v, l)| !(v > 0.0 && l > 0.0 && v.is_finite() && l.is_finite())) {
        return Err(Error::Parameter("linewidth law needs positive finite ν and l".into()));
    }
    let nu: Vec<f64> = points.iter().map(|p| p.0).collect();
    let l: Vec<f64> = points.iter().map(|p| p.1).collect();
    if nu.iter().all(|&v| v == nu[0]) {
        return Err(Error::Fit("all update speeds are equal".into()));
    }
    let log_fit = log_space(&nu, &l);
    if !with_offset {
        return Ok(log_fit);
    }
    let (n, amplitude, d) = profile_exponent(&nu, &l);
    let m = nu.len();
    let rss: f64 = nu.iter().zip(&l).map(|(v, l)| (amplitude * v.powf(-n) + d - l).powi(2)).sum();
    // covariance of (A, n, d) from the local Jacobian
    let mut jac = DMatrix::zeros(m, 3);
    for (i, &v) in nu.iter().enumerate() {
        let x = v.powf(-n);
        jac[(i, 0)] = x;
        jac[(i, 1)] = -amplitude * x * v.ln();
        jac[(i, 2)] = 1.0;
    }
    let sigmas = match (m > 3, (jac.transpose() * &jac).try_inverse()) {
        (true, Some(inv)) => {
            let s2 = rss / (m - 3) as f64;
            [0, 1, 2].map(|i| (inv[(i, i)] * s2).max(0.0).sqrt())
        }
        _ => [f64::INFINITY; 3],
    };
    if !(amplitude.is_finite() && n.is_finite() && d.is_finite()) {
        return Err(Error::Fit("offset power law did not converge".into()));
    }
    Ok(LinewidthFit {
        amplitude,
        n,
        d_hz: d,
        amplitude_sigma: sigmas[0],
        n_sigma: sigmas[1],
        d_sigma_hz: sigmas[2],
        rms_hz: (rss / m as f64).sqrt(),
        with_offset: true,
        n_points: m,
    })
}

/// For fixed n the model is linear in (A, d), so the best (A, d ≥ 0) is
/// closed form. The exponent is found by a grid scan of the profiled cost
/// followed by golden-section refinement.
fn profile_exponent(nu: &[f64], l: &[f64]) -> (f64, f64, f64) {
    let solve = |n: f64| -> (f64, f64, f64) {
        let m = nu.len() as f64;
        let x: Vec<f64> = nu.iter().map(|v| v.powf(-n)).collect();
        let sx: f64 = x.iter().sum();
        let sy: f64 = l.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(l).map(|(a, b)| a * b).sum();
        let det = m * sxx - sx * sx;
        let (mut a, mut d) = if det > 1e-12 * m * sxx {
            ((m * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
        } else {
            (sxy / sxx, 0.0)
        };
        if d < 0.0 {
            d = 0.0;
            a = sxy / sxx;
        }
        let rss = x.iter().zip(l).map(|(x, l)| (a * x + d - l).powi(2)).sum();
        (rss, a, d)
    };
    const LO: f64 = -1.0;
    const HI: f64 = 4.0;
    const STEPS: usize = 500;
    let h = (HI - LO) / STEPS as f64;
    let mut best = (f64::INFINITY, LO);
    for i in 0..=STEPS {
        let n = LO + i as f64 * h;
        let c = solve(n).0;
        if c < best.0 {
            best = (c, n);
        }
    }
    let (mut a, mut b) = ((best.1 - h).max(LO), (best.1 + h).min(HI));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (solve(c).0, solve(d).0);
    for _ in 0..100 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = solve(c).0;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = solve(d).0;
        }
    }
    let n = 0.5 * (a + b);
    let (_, amp, off) = solve(n);
    (n, amp, off)
}

fn log_space(nu: &[f64], l: &[f64]) -> LinewidthFit {
    let m = nu.len() as f64;
    let x: Vec<f64> = nu.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = l.iter().map(|v| v.ln()).collect();
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let resid: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let s2 = if m > 2.0 { resid / (m - 2.0) } else { f64::INFINITY };
    let slope_sigma = (s2 / sxx).sqrt();
    let intercept_sigma = (s2 * (1.0 / m + mx * mx / sxx)).sqrt();
    let amplitude = intercept.exp();
    let rms_hz = (nu.iter().zip(l).map(|(v, l)| (amplitude * v.powf(slope) - l).powi(2)).sum::<f64>() / m).sqrt();
    LinewidthFit {
        amplitude,
        n: -slope,
        d_hz: 0.0,
        amplitude_sigma: amplitude * intercept_sigma,
        n_sigma: slope_sigma,
        d_sigma_hz: 0.0,
        rms_hz,
        with_offset: false,
        n_points: nu.len(),
    }
}
