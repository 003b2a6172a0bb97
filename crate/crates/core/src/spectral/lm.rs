//! Levenberg-Marquardt with Marquardt diagonal scaling.
//!
//! Damping is multiplied by 10 on a rejected step and divided by 10 on an
//! accepted one. Iteration stops when the relative parameter step drops
//! below `step_tolerance` or an accepted step lowers the cost by less than
//! `cost_tolerance` relative (the roundoff floor of a misspecified model),
//! and fails after `max_iterations` linear solves.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub trait LeastSquares {
    fn n_params(&self) -> usize;
    fn n_residuals(&self) -> usize;
    /// model − data
    fn residuals(&self, p: &[f64], out: &mut [f64]);
    /// Row-major `n_residuals × n_params`.
    fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>);
    /// Box constraints; called after every trial step.
    fn project(&self, _p: &mut [f64]) {}
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub cost_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iterations: 200, step_tolerance: 1e-10, cost_tolerance: 1e-13, initial_damping: 1e-3 }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: Vec<f64>,
    /// Residual sum of squares.
    pub rss: f64,
    pub iterations: usize,
    /// `rss / dof · (JᵀJ)⁻¹`; infinite when dof is zero or JᵀJ is singular.
    pub covariance: DMatrix<f64>,
}

impl LmReport {
    pub fn sigma(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0).sqrt()
    }
}

pub fn levenberg_marquardt<P: LeastSquares>(problem: &P, x0: &[f64], opts: &LmOptions) -> Result<LmReport> {
    let n = problem.n_params();
    let m = problem.n_residuals();
    assert_eq!(x0.len(), n);
    let mut x = x0.to_vec();
    problem.project(&mut x);
    let mut r = vec![0.0; m];
    let mut jac = DMatrix::zeros(m, n);
    problem.residuals(&x, &mut r);
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::Fit("non-finite residuals at initial point".into()));
    }
    let mut lambda = opts.initial_damping;
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; m];
    let mut iterations = 0;
    let mut need_jacobian = true;
    let mut jtj = DMatrix::zeros(n, n);
    let mut grad = DVector::zeros(n);

    loop {
        if cost == 0.0 {
            break;
        }
        if need_jacobian {
            problem.jacobian(&x, &mut jac);
            jtj = jac.transpose() * &jac;
            grad = jac.transpose() * DVector::from_column_slice(&r);
            need_jacobian = false;
        }
        if iterations >= opts.max_iterations {
            return Err(Error::NoConvergence { iterations, last: x });
        }
        iterations += 1;
        let max_diag = (0..n).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        let mut a = jtj.clone();
        for i in 0..n {
            let d = jtj[(i, i)].max(1e-12 * max_diag).max(f64::MIN_POSITIVE);
            a[(i, i)] += lambda * d;
        }
        let step = match a.cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => {
                lambda *= 10.0;
                continue;
            }
        };
        for i in 0..n {
            trial[i] = x[i] + step[i];
        }
        problem.project(&mut trial);
        let step_norm = x.iter().zip(&trial).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let small = step_norm <= opts.step_tolerance * (x_norm + opts.step_tolerance);
        problem.residuals(&trial, &mut r_trial);
        let trial_cost = sum_sq(&r_trial);
        if trial_cost.is_finite() && trial_cost < cost {
            let stalled = cost - trial_cost <= opts.cost_tolerance * cost;
            std::mem::swap(&mut x, &mut trial);
            std::mem::swap(&mut r, &mut r_trial);
            cost = trial_cost;
            lambda = (lambda / 10.0).max(1e-15);
            need_jacobian = true;
            if small || stalled {
                break;
            }
        } else {
            if small || lambda > 1e16 {
                break;
            }
            lambda *= 10.0;
        }
    }

    problem.jacobian(&x, &mut jac);
    let jtj = jac.transpose() * &jac;
    let dof = m.saturating_sub(n);
    let covariance = match (dof, jtj.clone().try_inverse()) {
        (d, Some(inv)) if d > 0 => inv * (cost / d as f64),
        _ => DMatrix::from_element(n, n, f64::INFINITY),
    };
    Ok(LmReport { params: x, rss: cost, iterations, covariance })
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// y = a·exp(b·x)
    struct ExpFit {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares for ExpFit {
        fn n_params(&self) -> usize {
            2
        }
        fn n_residuals(&self) -> usize {
            self.x.len()
        }
        fn residuals(&self, p: &[f64], out: &mut [f64]) {
            for (i, (x, y)) in self.x.iter().zip(&self.y).enumerate() {
                out[i] = p[0] * (p[1] * x).exp() - y;
            }
        }
        fn jacobian(&self, p: &[f64], out: &mut DMatrix<f64>) {
            for (i, x) in self.x.iter().enumerate() {
                let e = (p[1] * x).exp();
                out[(i, 0)] = e;
                out[(i, 1)] = p[0] * x * e;
            }
        }
    }

    #[test]
    fn recovers_exponential() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 2.5 * (-1.3 * x).exp()).collect();
        let rep = levenberg_marquardt(&ExpFit { x, y }, &[1.0, 0.0], &LmOptions::default()).unwrap();
        assert!((rep.params[0] - 2.5).abs() < 1e-9);
        assert!((rep.params[1] + 1.3).abs() < 1e-9);
    }

    #[test]
    fn reports_non_convergence() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|x| 2.5 * (-1.3 * x).exp()).collect();
        let opts = LmOptions { max_iterations: 2, ..Default::default() };
        let err = levenberg_marquardt(&ExpFit { x, y }, &[1.0, 0.0], &opts).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 2, .. }));
    }
}
