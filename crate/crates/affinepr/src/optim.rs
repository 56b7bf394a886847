//! Damped Gauss-Newton on a plain residual/Jacobian pair, shared by signal
//! recovery and the restricted sparse falsifier.

use nalgebra::{DMatrix, DVector};

pub(crate) struct DampedConfig {
    pub max_iters: usize,
    /// Initial damping, relative to the mean diagonal of J^T J.
    pub damping_init: f64,
    /// Absolute acceptance threshold on the residual 2-norm.
    pub success_threshold: f64,
}

pub(crate) struct DampedOutcome {
    pub params: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn damped_gauss_newton(
    mut residual: impl FnMut(&DVector<f64>) -> DVector<f64>,
    mut jacobian: impl FnMut(&DVector<f64>) -> DMatrix<f64>,
    x0: DVector<f64>,
    cfg: &DampedConfig,
) -> DampedOutcome {
    let n = x0.len();
    let mut x = x0;
    let mut r = residual(&x);
    let mut cost = r.norm();
    let mut lambda: Option<f64> = None;
    let mut lambda_floor = 0.0_f64;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if cost <= cfg.success_threshold {
            break;
        }
        let j = jacobian(&x);
        let h = j.transpose() * &j;
        let g = j.transpose() * &r;
        if lambda.is_none() {
            let trace: f64 = (0..n).map(|i| h[(i, i)]).sum();
            let base = if trace > 0.0 {
                cfg.damping_init * trace / n as f64
            } else {
                cfg.damping_init
            };
            lambda = Some(base);
            lambda_floor = base * 1e-12;
        }
        let mut lam = lambda.unwrap();
        let mut stalled = true;

        // Retry with increased damping until a step is accepted or the
        // damping explodes.
        for _ in 0..60 {
            let mut damped = h.clone();
            for i in 0..n {
                damped[(i, i)] += lam;
            }
            let step = match nalgebra::Cholesky::new(damped) {
                Some(chol) => -chol.solve(&g),
                None => {
                    lam *= 10.0;
                    continue;
                }
            };
            let x_try = &x + &step;
            let r_try = residual(&x_try);
            let cost_try = r_try.norm();
            if cost_try < cost {
                // Accepted steps never increase the residual.
                assert!(cost_try <= cost);
                x = x_try;
                r = r_try;
                cost = cost_try;
                lam = (lam / 3.0).max(lambda_floor);
                stalled = false;
                break;
            }
            lam *= 10.0;
            if !lam.is_finite() {
                break;
            }
        }
        lambda = Some(lam);
        iterations += 1;
        if stalled {
            break;
        }
    }

    DampedOutcome {
        converged: cost <= cfg.success_threshold,
        params: x,
        residual_norm: cost,
        iterations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_a_small_quadratic_system() {
        // r(x) = (x0^2 - 4, x1 - 1)
        let out = damped_gauss_newton(
            |x| DVector::from_row_slice(&[x[0] * x[0] - 4.0, x[1] - 1.0]),
            |x| DMatrix::from_row_slice(2, 2, &[2.0 * x[0], 0.0, 0.0, 1.0]),
            DVector::from_row_slice(&[3.0, 0.0]),
            &DampedConfig {
                max_iters: 50,
                damping_init: 1e-3,
                success_threshold: 1e-12,
            },
        );
        assert!(out.converged);
        assert!((out.params[0] - 2.0).abs() < 1e-8);
        assert!((out.params[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_residual_start_takes_no_steps() {
        let out = damped_gauss_newton(
            |x| DVector::from_row_slice(&[x[0] - 1.0]),
            |_| DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_row_slice(&[1.0]),
            &DampedConfig {
                max_iters: 50,
                damping_init: 1e-3,
                success_threshold: 1e-12,
            },
        );
        assert!(out.converged);
        assert_eq!(out.iterations, 0);
    }
}
