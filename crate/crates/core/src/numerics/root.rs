//! Powell dogleg trust-region solver for square nonlinear systems.
//!
//! The Jacobian is rebuilt by forward differences at every iteration (columns
//! are evaluated in parallel), and variables are scaled by running column
//! norms as in MINPACK's `hybrd`. Steps are accepted against the largest
//! merit of the last few iterates, which lets full Newton steps through
//! curved valleys where a monotone test would creep.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootReport {
    pub solution: Vec<f64>,
    pub residual: Vec<f64>,
    /// Max-norm of the residual at `solution`.
    pub residual_norm: f64,
    pub initial_residual_norm: f64,
    /// Jacobian-update cycles.
    pub iterations: usize,
    pub jacobian_evals: usize,
    pub function_evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Initial trust radius relative to the scaled norm of `x0`.
    pub radius_factor: f64,
    /// Trial steps tried per Jacobian before giving up on it.
    pub max_trials: usize,
    /// Residual accepted once progress stalls; at least `tol`. Problems with a
    /// discontinuous control have a noise floor set by switch localization.
    pub accept_tol: f64,
    /// Iterations without halving the best residual that count as a stall.
    pub stall_iters: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            radius_factor: 100.0,
            max_trials: 12,
            accept_tol: 1e-10,
            stall_iters: 30,
        }
    }
}

impl RootOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self { tol, max_iter, accept_tol: tol, ..Self::default() }
    }

    pub fn accepting(mut self, accept_tol: f64) -> Self {
        self.accept_tol = accept_tol.max(self.tol);
        self
    }
}

const NONMONOTONE_MEMORY: usize = 6;

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Solves `F(x) = 0`. Failures of `F` at trial points shrink the trust region;
/// a failure at `x0` is returned as is.
pub fn solve_root<F>(f: F, x0: &[f64], opts: &RootOptions) -> Result<RootReport>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let n = x0.len();
    let eval = |x: &DVector<f64>| -> Result<DVector<f64>> {
        let r = f(x.as_slice())?;
        assert_eq!(r.len(), n, "residual must be square");
        let r = DVector::from_vec(r);
        if finite(&r) {
            Ok(r)
        } else {
            Err(Error::NonFiniteResidual)
        }
    };

    let mut x = DVector::from_column_slice(x0);
    let mut fx = eval(&x)?;
    let mut report = RootReport {
        solution: x.as_slice().to_vec(),
        residual: fx.as_slice().to_vec(),
        residual_norm: inf_norm(&fx),
        initial_residual_norm: inf_norm(&fx),
        iterations: 0,
        jacobian_evals: 0,
        function_evals: 1,
        converged: false,
    };
    let mut diag = DVector::<f64>::zeros(n);
    let mut radius = 0.0;
    // recent merit values for the nonmonotone acceptance test
    let mut history: std::collections::VecDeque<f64> = std::collections::VecDeque::with_capacity(NONMONOTONE_MEMORY);

    let finish = |report: &mut RootReport, x: &DVector<f64>, fx: &DVector<f64>, limit: f64| {
        report.solution = x.as_slice().to_vec();
        report.residual = fx.as_slice().to_vec();
        report.residual_norm = inf_norm(fx);
        report.converged = report.residual_norm <= limit;
    };
    let accept = opts.accept_tol.max(opts.tol);
    let mut best = (inf_norm(&fx), 0usize);

    while report.iterations < opts.max_iter {
        if inf_norm(&fx) <= opts.tol {
            break;
        }
        report.iterations += 1;

        let jac = fd_jacobian(&eval, &x, &fx)?;
        report.jacobian_evals += 1;
        report.function_evals += n;

        for j in 0..n {
            let c = jac.column(j).norm();
            let c = if c == 0.0 { 1.0 } else { c };
            diag[j] = if report.iterations == 1 { c } else { diag[j].max(c) };
        }
        if report.iterations == 1 {
            let xs = x.component_mul(&diag).norm();
            radius = opts.radius_factor * if xs > 0.0 { xs } else { 1.0 };
        }

        let gn = gauss_newton_step(&jac, &fx);
        let grad = -(jac.transpose() * &fx);
        let f2 = fx.norm_squared();
        if history.len() == NONMONOTONE_MEMORY {
            history.pop_front();
        }
        history.push_back(f2);
        let f_ref = history.iter().copied().fold(f2, f64::max);

        let mut improved = false;
        for _ in 0..opts.max_trials {
            let step = dogleg(&jac, &grad, gn.as_ref(), &diag, radius);
            let step_scaled = step.component_mul(&diag).norm();
            let pred = f2 - (&fx + &jac * &step).norm_squared();
            let trial = &x + &step;
            report.function_evals += 1;
            let actual_ratio = match eval(&trial) {
                Ok(ft) if pred > 0.0 => {
                    let fnew = ft.norm_squared();
                    let ratio = (f2 - fnew) / pred;
                    if (f_ref - fnew) / pred > 1e-4 {
                        x = trial;
                        fx = ft;
                        improved = true;
                    }
                    ratio
                }
                _ => -1.0,
            };
            if actual_ratio < 0.25 {
                radius = 0.25 * step_scaled.min(radius);
            } else if actual_ratio > 0.75 || (actual_ratio - 1.0).abs() < 0.1 {
                radius = radius.max(2.0 * step_scaled);
            }
            if improved {
                break;
            }
            if radius <= f64::EPSILON * x.component_mul(&diag).norm().max(1e-300) {
                break;
            }
        }

        if !improved {
            finish(&mut report, &x, &fx, accept);
            if report.converged {
                return Ok(report);
            }
            return Err(if gn.is_none() {
                Error::SingularJacobian(Box::new(report))
            } else {
                Error::NoConvergence {
                    reason: "trust region collapsed without decrease".into(),
                    report: Box::new(report),
                }
            });
        }
        let norm = inf_norm(&fx);
        log::trace!("root iter {} |F| = {:.3e}", report.iterations, norm);
        if norm < 0.5 * best.0 {
            best = (norm, report.iterations);
        } else if report.iterations - best.1 >= opts.stall_iters {
            finish(&mut report, &x, &fx, accept);
            if report.converged {
                return Ok(report);
            }
            return Err(Error::NoConvergence {
                reason: "residual stalled".into(),
                report: Box::new(report),
            });
        }
    }

    finish(&mut report, &x, &fx, accept);
    if report.converged {
        Ok(report)
    } else {
        Err(Error::MaxIterations(Box::new(report)))
    }
}

fn fd_jacobian<E>(eval: &E, x: &DVector<f64>, fx: &DVector<f64>) -> Result<DMatrix<f64>>
where
    E: Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    let n = x.len();
    let sqrt_eps = f64::EPSILON.sqrt();
    let columns: Vec<Result<DVector<f64>>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let h = sqrt_eps * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            // fall back to a backward difference if the forward point fails
            match eval(&xp) {
                Ok(fp) => Ok((fp - fx) / h),
                Err(_) => {
                    xp[j] = x[j] - h;
                    eval(&xp).map(|fm| (fx - fm) / h)
                }
            }
        })
        .collect();
    let mut jac = DMatrix::zeros(n, n);
    for (j, col) in columns.into_iter().enumerate() {
        jac.set_column(j, &col?);
    }
    Ok(jac)
}

fn gauss_newton_step(jac: &DMatrix<f64>, fx: &DVector<f64>) -> Option<DVector<f64>> {
    let step = jac.clone().lu().solve(&(-fx))?;
    finite(&step).then_some(step)
}

/// Dogleg step in scaled variables `z = D·x`, returned in unscaled variables.
fn dogleg(
    jac: &DMatrix<f64>,
    grad: &DVector<f64>,
    gn: Option<&DVector<f64>>,
    diag: &DVector<f64>,
    radius: f64,
) -> DVector<f64> {
    if let Some(gn) = gn {
        if gn.component_mul(diag).norm() <= radius {
            return gn.clone();
        }
    }
    // steepest descent in scaled space
    let g_s = grad.component_div(diag);
    let gnorm = g_s.norm();
    if gnorm == 0.0 {
        return DVector::zeros(grad.len());
    }
    let dir = g_s.component_div(diag);
    let jd = jac * &dir;
    let jd2 = jd.norm_squared();
    let t = if jd2 > 0.0 { gnorm * gnorm / jd2 } else { f64::INFINITY };
    let cauchy_s = &g_s * t;
    let cnorm = cauchy_s.norm();
    let Some(gn) = gn.filter(|_| cnorm < radius) else {
        return (&g_s * (radius / gnorm)).component_div(diag);
    };
    let gn_s = gn.component_mul(diag);
    let d = &gn_s - &cauchy_s;
    let a = d.norm_squared();
    let b = 2.0 * cauchy_s.dot(&d);
    let c = cnorm * cnorm - radius * radius;
    let tau = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
    (cauchy_s + d * tau).component_div(diag)
}
