//! Fuel-optimal transfers seeded by the energy-optimal solution.
//!
//! The pipeline is: energy-optimal solve, thrust threshold `Γ_TR` from the
//! energy-optimal throttle profile, smoothed fuel-optimal solves over an
//! ascending schedule of `k`, and a final solve with the exact bang-bang law.
//! Eclipses are introduced afterwards by continuation on their weight `ε`.

use serde::{Deserialize, Serialize};

use crate::control::{Costates, ControlLaw, LawKind};
use crate::eo::{linear_eo_guess, solve_eo, EoSolution};
use crate::error::{Error, Result};
use crate::numerics::{solve_root, RootReport, Trajectory};
use crate::problem::{shooting_failure, Problem, SolverOptions};

/// Tolerance on the Δv match when computing `Γ_TR`, canonical.
pub const GAMMA_TR_TOL: f64 = 1e-6;
const MAX_BISECTIONS: usize = 60;
/// Halvings allowed when a continuation step fails.
const MAX_REFINEMENTS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSchedule {
    /// Ascending smoothing parameters in `[0, 1)`.
    pub k_steps: Vec<f64>,
    /// Ascending eclipse weights in `(0, 1]`, ending at 1.
    pub eps_steps: Vec<f64>,
}

impl ContinuationSchedule {
    /// `n` equally spaced smoothing steps from 0 to `k_max`, eclipse steps of `d_eps`.
    pub fn new(n: usize, k_max: f64, d_eps: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::validation("k_steps", "at least one smoothing step is required"));
        }
        let k_steps = if n == 1 {
            vec![k_max]
        } else {
            (0..n).map(|i| k_max * i as f64 / (n - 1) as f64).collect()
        };
        Self::from_steps(k_steps, d_eps)
    }

    pub fn from_steps(k_steps: Vec<f64>, d_eps: f64) -> Result<Self> {
        crate::mission::validate_k_schedule(&k_steps).map_err(|m| Error::validation("k_steps", m))?;
        if !(d_eps > 0.0 && d_eps <= 1.0) {
            return Err(Error::validation("delta_eps", "must lie in (0, 1]"));
        }
        let n = (1.0 / d_eps - 1e-9).ceil() as usize;
        let eps_steps = (1..=n).map(|i| (i as f64 * d_eps).min(1.0)).collect();
        Ok(Self { k_steps, eps_steps })
    }

    pub fn k_max(&self) -> f64 {
        *self.k_steps.last().expect("non-empty schedule")
    }
}

impl Default for ContinuationSchedule {
    fn default() -> Self {
        Self::new(5, 0.99, 0.1).expect("default schedule is valid")
    }
}

/// One solved step of a continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationStep {
    /// `"k"` (smoothing), `"fo"` (bang-bang), `"eps"` (eclipse weight), `"j2"` (J2 scale).
    pub stage: String,
    pub value: f64,
    pub lam0: Costates,
    pub iterations: usize,
    pub initial_residual: f64,
    pub residual: f64,
    pub fuel_kg: f64,
    /// Inserted by step refinement after a failure.
    pub refined: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoSolution {
    pub lam0: Costates,
    pub gamma_tr: f64,
    pub trajectory: Trajectory,
    pub dv: f64,
    pub fuel_kg: f64,
    pub report: RootReport,
    pub log: Vec<ContinuationStep>,
    pub eo: Option<EoSolution>,
}

/// `Γ_TR` from samples `(t, Γ_e, Δv_e)` of an energy-optimal solution.
///
/// The bang-bang profile thrusts at `Γ = m0/m_e(t)` wherever `Γ_e > Γ_TR`, so
/// its Δv is `a·∫_{Γ_e>Γ_TR} exp(Δv_e/c) dt`. Bisection finds the threshold
/// whose Δv equals the energy-optimal Δv. Threshold crossings are located by
/// linear interpolation between samples.
pub fn gamma_tr_from_profile(samples: &[(f64, f64, f64)], accel: f64, isp_g0: f64, dv_target: f64, tol: f64) -> Result<f64> {
    let dv_of = |gtr: f64| bang_bang_dv(samples, gtr, accel, isp_g0);
    let g_max = samples.iter().map(|s| s.1).fold(0.0, f64::max);
    let (mut lo, mut hi) = (0.0, g_max);
    let full = dv_of(0.0);
    if (full - dv_target).abs() <= tol {
        return Ok(0.0);
    }
    if full < dv_target {
        return Err(Error::Unbracketable { best: 0.0, mismatch: full - dv_target });
    }
    let mut best = (f64::INFINITY, 0.0);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let dv = dv_of(mid);
        let miss = dv - dv_target;
        if miss.abs() < best.0.abs() {
            best = (miss, mid);
        }
        if miss.abs() <= tol {
            return Ok(mid);
        }
        if miss > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Unbracketable { best: best.1, mismatch: best.0 })
}

fn bang_bang_dv(samples: &[(f64, f64, f64)], gtr: f64, accel: f64, isp_g0: f64) -> f64 {
    let weight = |dv: f64| (dv / isp_g0).exp();
    let mut total = 0.0;
    for w in samples.windows(2) {
        let (t0, g0, d0) = w[0];
        let (t1, g1, d1) = w[1];
        let (on0, on1) = (g0 > gtr, g1 > gtr);
        let (e0, e1) = (weight(d0), weight(d1));
        total += match (on0, on1) {
            (true, true) => 0.5 * (e0 + e1) * (t1 - t0),
            (false, false) => 0.0,
            _ => {
                let s = (gtr - g0) / (g1 - g0);
                let tc = t0 + s * (t1 - t0);
                let ec = e0 + s * (e1 - e0);
                if on0 {
                    0.5 * (e0 + ec) * (tc - t0)
                } else {
                    0.5 * (ec + e1) * (t1 - tc)
                }
            }
        };
    }
    accel * total
}

/// Thrust threshold matching the bang-bang Δv to the energy-optimal Δv.
pub fn compute_gamma_tr(eo: &EoSolution, problem: &Problem, tol: f64) -> Result<f64> {
    let samples: Vec<_> = eo.trajectory.samples.iter().map(|s| (s.t, s.throttle, s.state.dv)).collect();
    gamma_tr_from_profile(&samples, problem.prop.accel(), problem.prop.isp_g0, eo.dv, tol)
}

/// Terminal error after propagating `lam0` under `law` over the reference time of flight.
pub fn fo_residual(problem: &Problem, lam0: &Costates, law: &ControlLaw, opts: &SolverOptions) -> Result<[f64; 6]> {
    let yf = problem.shoot(lam0, law, problem.tof, opts)?;
    Ok(problem.terminal_error(&yf.x))
}

/// Fixed-time shooting under a smoothed or bang-bang law.
pub fn solve_fixed_time(problem: &Problem, law: &ControlLaw, guess: &Costates, opts: &SolverOptions) -> Result<(Costates, RootReport)> {
    law.validate()?;
    let residual = |v: &[f64]| -> Result<Vec<f64>> {
        let lam = Costates::from_array(std::array::from_fn(|i| v[i]));
        Ok(fo_residual(problem, &lam, law, opts)?.to_vec())
    };
    let report = solve_root(residual, &guess.to_array(), &opts.root_for(law))?;
    Ok((Costates::from_array(std::array::from_fn(|i| report.solution[i])), report))
}

fn law_for(stage_value: f64, gamma_tr: f64, kind: LawKind) -> ControlLaw {
    match kind {
        LawKind::Sfo => ControlLaw::sfo(gamma_tr, stage_value),
        _ => ControlLaw::fo(gamma_tr),
    }
}

fn fuel_of(problem: &Problem, lam0: &Costates, law: &ControlLaw, opts: &SolverOptions) -> f64 {
    problem
        .shoot(lam0, law, problem.tof, opts)
        .map(|y| problem.fuel_kg(y.dv))
        .unwrap_or(f64::NAN)
}

/// Runs a continuation in one scalar parameter with step halving on failure.
///
/// `build` maps a parameter value to the problem and law to solve.
fn continuation<B>(
    stage: &str,
    values: &[f64],
    start: f64,
    mut lam: Costates,
    build: B,
    opts: &SolverOptions,
    log: &mut Vec<ContinuationStep>,
) -> Result<(Costates, RootReport)>
where
    B: Fn(f64) -> (Problem, ControlLaw),
{
    let mut last_value = start;
    let mut last_report = None;
    for &target in values {
        let mut value = target;
        let mut depth = 0;
        loop {
            let (problem, law) = build(value);
            match solve_fixed_time(&problem, &law, &lam, opts) {
                Ok((sol, report)) => {
                    log.push(ContinuationStep {
                        stage: stage.to_string(),
                        value,
                        lam0: sol,
                        iterations: report.iterations,
                        initial_residual: report.initial_residual_norm,
                        residual: report.residual_norm,
                        fuel_kg: fuel_of(&problem, &sol, &law, opts),
                        refined: value != target,
                    });
                    log::info!("{}: {stage} = {value:.4} solved in {} iterations", problem.name, report.iterations);
                    lam = sol;
                    last_value = value;
                    last_report = Some(report);
                    if value == target {
                        break;
                    }
                    value = target;
                    depth = 0;
                }
                Err(err) => {
                    if depth >= MAX_REFINEMENTS {
                        return Err(Error::stalled(format!("{stage} = {value}"), shooting_failure(stage, err)));
                    }
                    log::warn!("{}: {stage} = {value:.4} failed ({err}); refining step", problem.name);
                    depth += 1;
                    value = 0.5 * (last_value + value);
                }
            }
        }
    }
    Ok((lam, last_report.expect("at least one continuation value")))
}

/// Smoothing continuation and final bang-bang solve at a given threshold.
pub fn solve_fo_from(
    problem: &Problem,
    gamma_tr: f64,
    guess: &Costates,
    schedule: &ContinuationSchedule,
    opts: &SolverOptions,
    log: &mut Vec<ContinuationStep>,
) -> Result<(Costates, RootReport)> {
    let (lam, _) = continuation(
        "k",
        &schedule.k_steps,
        schedule.k_steps[0],
        *guess,
        |k| (problem.clone(), law_for(k, gamma_tr, LawKind::Sfo)),
        opts,
        log,
    )?;
    let law = ControlLaw::fo(gamma_tr);
    match solve_fixed_time(problem, &law, &lam, opts) {
        Ok((sol, report)) => {
            log.push(ContinuationStep {
                stage: "fo".into(),
                value: 1.0,
                lam0: sol,
                iterations: report.iterations,
                initial_residual: report.initial_residual_norm,
                residual: report.residual_norm,
                fuel_kg: fuel_of(problem, &sol, &law, opts),
                refined: false,
            });
            Ok((sol, report))
        }
        Err(err) => Err(Error::stalled("fo", shooting_failure("fuel-optimal", err))),
    }
}

fn finish(
    problem: &Problem,
    lam0: Costates,
    gamma_tr: f64,
    report: RootReport,
    log: Vec<ContinuationStep>,
    eo: Option<EoSolution>,
    opts: &SolverOptions,
) -> Result<FoSolution> {
    let trajectory = problem.trajectory(&lam0, &ControlLaw::fo(gamma_tr), problem.tof, opts)?;
    let dv = trajectory.last().state.dv;
    Ok(FoSolution {
        lam0,
        gamma_tr,
        dv,
        fuel_kg: problem.fuel_kg(dv),
        trajectory,
        report,
        log,
        eo,
    })
}

/// Full fuel-optimal pipeline. With eclipses enabled, the transfer is first
/// solved without them and they are then phased in by continuation.
pub fn solve_fo(
    problem: &Problem,
    schedule: &ContinuationSchedule,
    opts: &SolverOptions,
    pin_gamma_tr: Option<f64>,
) -> Result<FoSolution> {
    problem.validate()?;
    let base = eclipse_free(problem);
    let guess = linear_eo_guess(&base, base.tof, opts).unwrap_or_else(|e| {
        log::warn!("{}: linear guess unavailable ({e}); starting from zero costates", problem.name);
        Costates::default()
    });
    let eo = solve_eo(&base, &guess, opts)?;
    solve_fo_with_eo(problem, eo, schedule, opts, pin_gamma_tr)
}

/// Fuel-optimal pipeline from an energy-optimal solution of the eclipse-free problem.
pub fn solve_fo_with_eo(
    problem: &Problem,
    eo: EoSolution,
    schedule: &ContinuationSchedule,
    opts: &SolverOptions,
    pin_gamma_tr: Option<f64>,
) -> Result<FoSolution> {
    let base = eclipse_free(problem);
    let gamma_tr = match pin_gamma_tr {
        Some(g) => g,
        None => compute_gamma_tr(&eo, &base, GAMMA_TR_TOL)?,
    };
    log::info!("{}: Γ_TR = {gamma_tr:.6}", problem.name);
    let mut log = Vec::new();
    let (lam, report) = solve_fo_from(&base, gamma_tr, &eo.lam0, schedule, opts, &mut log)?;
    let fo = finish(&base, lam, gamma_tr, report, log, Some(eo), opts)?;
    if problem.pc.eclipse_enabled {
        continue_perturbations(problem, fo, schedule, opts)
    } else {
        Ok(fo)
    }
}

/// The problem with eclipses switched off; the energy-optimal seed is solved on it.
pub fn eclipse_free(problem: &Problem) -> Problem {
    problem.with_perturbations(crate::dynamics::PerturbationConfig {
        eclipse_enabled: false,
        eclipse_scale: 0.0,
        ..problem.pc.clone()
    })
}

/// Phases eclipses into a converged fuel-optimal solution (`ε` from 0 to 1).
pub fn continue_perturbations(
    problem: &Problem,
    fo: FoSolution,
    schedule: &ContinuationSchedule,
    opts: &SolverOptions,
) -> Result<FoSolution> {
    let gamma_tr = fo.gamma_tr;
    let mut log = fo.log;
    let build = |eps: f64| {
        let pc = crate::dynamics::PerturbationConfig {
            eclipse_enabled: true,
            eclipse_scale: eps,
            ..problem.pc.clone()
        };
        (problem.with_perturbations(pc), ControlLaw::fo(gamma_tr))
    };
    let (lam, report) = continuation("eps", &schedule.eps_steps, 0.0, fo.lam0, build, opts, &mut log)?;
    let (full, _) = build(1.0);
    finish(&full, lam, gamma_tr, report, log, fo.eo, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle(n: usize) -> Vec<(f64, f64, f64)> {
        (0..=n).map(|i| {
            let t = i as f64 / n as f64;
            (t, t, 0.0)
        }).collect()
    }

    #[test]
    fn triangular_profile_threshold_is_one_half() {
        let g = gamma_tr_from_profile(&triangle(400), 1.0, f64::INFINITY, 0.5, 1e-12).unwrap();
        assert!((g - 0.5).abs() < 1e-6);
    }

    #[test]
    fn zero_profile_gives_zero_threshold() {
        let s: Vec<_> = (0..10).map(|i| (i as f64, 0.0, 0.0)).collect();
        assert_eq!(gamma_tr_from_profile(&s, 1.0, 1.0, 0.0, 1e-9).unwrap(), 0.0);
    }

    #[test]
    fn unreachable_target_is_unbracketable() {
        let e = gamma_tr_from_profile(&triangle(10), 1.0, f64::INFINITY, 2.0, 1e-9).unwrap_err();
        assert!(matches!(e, Error::Unbracketable { .. }));
    }

    #[test]
    fn mass_weighting_raises_the_threshold() {
        // with mass loss, thrusting at m0/m costs more Δv per unit time, so less on-time is needed
        let s: Vec<_> = (0..=400).map(|i| {
            let t = i as f64 / 400.0;
            (t, t, 0.25 * t * t)
        }).collect();
        let g = gamma_tr_from_profile(&s, 1.0, 1.0, 0.5, 1e-10).unwrap();
        assert!(g > 0.5);
    }

    #[test]
    fn default_schedule() {
        let s = ContinuationSchedule::default();
        let want = [0.0, 0.2475, 0.495, 0.7425, 0.99];
        assert_eq!(s.k_steps.len(), 5);
        for (a, b) in s.k_steps.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(s.eps_steps.len(), 10);
        assert_eq!(*s.eps_steps.last().unwrap(), 1.0);
        assert!(ContinuationSchedule::from_steps(vec![0.5, 0.2], 0.1).is_err());
    }
}
