//! Energy-optimal transfers and their linearized first guess.
//!
//! The energy-optimal law `Γ = ‖Bᵀλ‖` is smooth, so the shooting problem is
//! well behaved and its solution seeds both the fuel- and time-optimal
//! pipelines. Eclipses are never modeled here; J2 is included when enabled.

use nalgebra::{SMatrix, SVector};
use num_dual::jacobian;
use serde::{Deserialize, Serialize};

use crate::control::{Costates, ControlLaw};
use crate::dynamics::{gve, j2_rtn, PerturbationConfig, Real};
use crate::error::{Error, Result};
use crate::numerics::ode::{integrate, OdeOptions};
use crate::numerics::{solve_root, RootReport, Trajectory};
use crate::problem::{shooting_failure, Problem, SolverOptions};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EoSolution {
    pub lam0: Costates,
    pub tof: f64,
    pub trajectory: Trajectory,
    /// Accumulated Δv, canonical.
    pub dv: f64,
    pub fuel_kg: f64,
    pub report: RootReport,
}

impl EoSolution {
    /// Sampled `(t, Γ_e)`.
    pub fn gamma_profile(&self) -> Vec<(f64, f64)> {
        self.trajectory.samples.iter().map(|s| (s.t, s.throttle)).collect()
    }
}

fn eo_config(pc: &PerturbationConfig) -> PerturbationConfig {
    PerturbationConfig { eclipse_enabled: false, ..pc.clone() }
}

/// Uncontrolled drift `A(x) + B(x)·a_J2(x)`.
fn drift<D: Real>(x: &[D; 6], pc: &PerturbationConfig) -> [D; 6] {
    let (mut a, b) = gve(x, pc.mu);
    if pc.j2_enabled {
        let w = x[1] * x[5].cos() + x[2] * x[5].sin() + 1.0;
        let aj = j2_rtn(x, x[0] / w, pc.mu, pc.j2, pc.r_body);
        for i in 0..6 {
            a[i] += b[i][0] * aj[0] + b[i][1] * aj[1] + b[i][2] * aj[2];
        }
    }
    a
}

/// Costates from the linearization about the coast arc from `x0`.
///
/// Along the coast `x_n(t)`, deviations obey `δẋ = C·δx − a·B·Bᵀ·λ` and
/// `λ̇ = −Cᵀλ` with `C = ∂(drift)/∂x`. Integrating the costate transition `Ψ`
/// and the response `Z = ∂δx/∂λ0` gives `λ0 = Z(T)⁻¹·(x1 − x_n(T))`.
pub fn linear_eo_guess(problem: &Problem, tof: f64, opts: &SolverOptions) -> Result<Costates> {
    linear_eo_estimate(problem, tof, opts).map(|(lam, _)| lam)
}

/// Linearized costates and the Δv they predict, `a·∫‖Bᵀ(x_n)·Ψ(t)·λ0‖ dt`
/// evaluated at the integrator's step points.
pub fn linear_eo_estimate(problem: &Problem, tof: f64, opts: &SolverOptions) -> Result<(Costates, f64)> {
    let pc = eo_config(&problem.pc);
    let acc = problem.prop.accel();
    let rhs = |_t: f64, y: &SVector<f64, 78>| -> Result<SVector<f64, 78>> {
        let xn: [f64; 6] = std::array::from_fn(|i| y[i]);
        crate::dynamics::MeeState::from_array(xn).validate()?;
        let (f, c) = jacobian(
            |v: SVector<_, 6>| SVector::from(drift(&[v[0], v[1], v[2], v[3], v[4], v[5]], &pc)),
            &SVector::from(xn),
        );
        let (_, b) = gve(&xn, pc.mu);
        let b = SMatrix::<f64, 6, 3>::from_fn(|i, j| b[i][j]);
        let bbt = b * b.transpose() * acc;
        let psi = SMatrix::<f64, 6, 6>::from_column_slice(&y.as_slice()[6..42]);
        let z = SMatrix::<f64, 6, 6>::from_column_slice(&y.as_slice()[42..78]);
        let psi_dot = -(c.transpose() * psi);
        let z_dot = c * z - bbt * psi;
        let mut out = SVector::<f64, 78>::zeros();
        out.fixed_rows_mut::<6>(0).copy_from(&f);
        out.as_mut_slice()[6..42].copy_from_slice(psi_dot.as_slice());
        out.as_mut_slice()[42..78].copy_from_slice(z_dot.as_slice());
        Ok(out)
    };
    let mut y0 = SVector::<f64, 78>::zeros();
    y0.as_mut_slice()[..6].copy_from_slice(&problem.x0.to_array());
    for i in 0..6 {
        y0[6 + i * 6 + i] = 1.0;
    }
    let sol = integrate(&rhs, 0.0, y0, tof, &OdeOptions::with_tol(opts.ode_tol.max(1e-11)))?;
    let yf = sol.final_state();
    let z = SMatrix::<f64, 6, 6>::from_column_slice(&yf.as_slice()[42..78]);
    let miss = SVector::<f64, 6>::from_fn(|i, _| problem.x1.to_array()[i] - yf[i]);

    let svd = z.svd(false, false);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    if !(smin > 1e-13 * smax) {
        return Err(Error::SingularTransition);
    }
    let lam = z.lu().solve(&miss).ok_or(Error::SingularTransition)?;
    if !lam.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularTransition);
    }
    let throttle = |y: &SVector<f64, 78>| {
        let xn: [f64; 6] = std::array::from_fn(|i| y[i]);
        let (_, b) = gve(&xn, pc.mu);
        let psi = SMatrix::<f64, 6, 6>::from_column_slice(&y.as_slice()[6..42]);
        let l = psi * lam;
        let b = SMatrix::<f64, 6, 3>::from_fn(|i, j| b[i][j]);
        (b.transpose() * l).norm()
    };
    let dv = acc
        * sol
            .t
            .windows(2)
            .zip(sol.y.windows(2))
            .map(|(t, y)| 0.5 * (throttle(&y[0]) + throttle(&y[1])) * (t[1] - t[0]))
            .sum::<f64>();
    Ok((Costates::from_array(std::array::from_fn(|i| lam[i])), dv))
}

/// Terminal error of the energy-optimal arc started from `lam0`.
pub fn eo_residual(problem: &Problem, lam0: &Costates, tof: f64, opts: &SolverOptions) -> Result<[f64; 6]> {
    let p = problem.with_perturbations(eo_config(&problem.pc));
    let yf = p.shoot(lam0, &ControlLaw::eo(), tof, opts)?;
    Ok(p.terminal_error(&yf.x))
}

/// Solves the energy-optimal problem over the problem's reference time of flight.
pub fn solve_eo(problem: &Problem, guess: &Costates, opts: &SolverOptions) -> Result<EoSolution> {
    solve_eo_with_tof(problem, problem.tof, guess, opts)
}

pub fn solve_eo_with_tof(problem: &Problem, tof: f64, guess: &Costates, opts: &SolverOptions) -> Result<EoSolution> {
    if !guess.is_finite() {
        return Err(Error::validation("guess", "initial costates must be finite"));
    }
    let p = problem.with_perturbations(eo_config(&problem.pc));
    let law = ControlLaw::eo();
    let residual = |v: &[f64]| -> Result<Vec<f64>> {
        let lam = Costates::from_array(std::array::from_fn(|i| v[i]));
        let yf = p.shoot(&lam, &law, tof, opts)?;
        Ok(p.terminal_error(&yf.x).to_vec())
    };
    let report = solve_root(residual, &guess.to_array(), &opts.root()).map_err(|e| shooting_failure("energy-optimal", e))?;
    let lam0 = Costates::from_array(std::array::from_fn(|i| report.solution[i]));
    let trajectory = p.trajectory(&lam0, &law, tof, opts)?;
    let dv = trajectory.last().state.dv;
    log::info!(
        "{}: EO converged in {} iterations, fuel {:.4} kg",
        problem.name,
        report.iterations,
        problem.fuel_kg(dv)
    );
    Ok(EoSolution {
        lam0,
        tof,
        dv,
        fuel_kg: problem.fuel_kg(dv),
        trajectory,
        report,
    })
}
