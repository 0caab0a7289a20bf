//! Time-optimal transfers seeded by the energy-optimal solution.
//!
//! A bisection on the time of flight finds where full-throttle Δv matches the
//! energy-optimal Δv. The energy-optimal costates at that time then seed the
//! time-optimal shooting, with `β_t` chosen so the terminal transversality
//! condition already holds at the first guess.

use serde::{Deserialize, Serialize};

use crate::control::{hamiltonian, Costates, ControlLaw};
use crate::dynamics::{MeeState, PerturbationConfig};
use crate::eo::{linear_eo_estimate, linear_eo_guess, solve_eo_with_tof, EoSolution};
use crate::error::{Error, Result};
use crate::fo::{ContinuationSchedule, ContinuationStep};
use crate::numerics::{solve_root, AugmentedState, RootReport, Trajectory};
use crate::problem::{shooting_failure, Problem, SolverOptions};

/// Tolerance on the Δv match in the time-of-flight bisection, canonical.
pub const TOF_DV_TOL: f64 = 1e-6;
const MAX_BISECTIONS: usize = 60;
/// Linear Δv beyond this multiple of the full-throttle capacity skips the probe.
const LINEAR_SCREEN: f64 = 3.0;
const MAX_REFINEMENTS: usize = 6;
/// Iteration budget for each energy-optimal probe in the bisection.
const PROBE_MAX_ITER: usize = 60;
const J2_STEPS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// One evaluation of the time-of-flight bisection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TofProbe {
    pub tof: f64,
    pub dv_eo: f64,
    pub dv_full: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TofGuess {
    pub tof: f64,
    /// Energy-optimal solution at `tof`, on the target chosen for it.
    pub eo: EoSolution,
    pub target: MeeState,
    pub probes: Vec<TofProbe>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToSolution {
    pub lam0: Costates,
    pub tof: f64,
    pub tof_days: f64,
    pub beta_t: f64,
    pub trajectory: Trajectory,
    pub dv: f64,
    pub fuel_kg: f64,
    /// `H(t1) − L̇_t·λ_L(t1)` at the solution.
    pub transversality_residual: f64,
    pub report: RootReport,
    pub guess: TofGuess,
    /// Target actually reached (its true longitude may differ from the mission's by whole revolutions).
    pub target: MeeState,
    pub log: Vec<ContinuationStep>,
}

/// Full-throttle Δv over the energy-optimal arc: `a·∫ m0/m_e(t) dt`.
pub fn full_throttle_dv(eo: &EoSolution, problem: &Problem) -> f64 {
    let c = problem.prop.isp_g0;
    let s = &eo.trajectory.samples;
    let integral: f64 = s
        .windows(2)
        .map(|w| 0.5 * ((w[0].state.dv / c).exp() + (w[1].state.dv / c).exp()) * (w[1].t - w[0].t))
        .sum();
    problem.prop.accel() * integral
}

fn eo_at(problem: &Problem, tof: f64, warm: Option<&Costates>, opts: &SolverOptions) -> Result<EoSolution> {
    let attempt = |guess: &Costates| solve_eo_with_tof(problem, tof, guess, opts);
    let from_linear = || {
        let g = linear_eo_guess(problem, tof, opts).unwrap_or_default();
        attempt(&g)
    };
    let res = match warm {
        Some(w) => attempt(w).or_else(|_| from_linear()),
        None => from_linear(),
    };
    res.map_err(|e| Error::EoFailedAt { tof, source: Box::new(e) })
}

/// Cheapest energy-optimal solution among the admissible targets at `tof`.
fn best_eo(problem: &Problem, tof: f64, warm: &[(f64, Costates)], opts: &SolverOptions) -> Result<(Problem, EoSolution)> {
    let mut best: Option<(Problem, EoSolution)> = None;
    let mut last_err = None;
    for target in problem.targets_for(tof) {
        let w = warm.iter().find(|(l, _)| *l == target.x1.l).map(|(_, c)| c);
        match eo_at(&target, tof, w, opts) {
            Ok(eo) => {
                if best.as_ref().is_none_or(|(_, b)| eo.dv < b.dv) {
                    best = Some((target, eo));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or(Error::EoFailedAt { tof, source: Box::new(Error::validation("target", "no admissible revolution count")) }))
}

/// Time of flight at which the full-throttle Δv equals the energy-optimal Δv.
///
/// The full-throttle Δv follows the energy-optimal mass history. Longer
/// flights make it exceed the energy-optimal Δv, which moves the upper bound.
pub fn guess_tof(problem: &Problem, t_upper: f64, opts: &SolverOptions) -> Result<TofGuess> {
    if !(t_upper > 0.0) {
        return Err(Error::validation("t_upper", "must be positive"));
    }
    let probe_opts = SolverOptions { max_iter: opts.max_iter.min(PROBE_MAX_ITER), ..*opts };
    let (mut lo, mut hi) = (0.0, t_upper);
    let mut warm: Vec<(f64, Costates)> = Vec::new();
    let mut probes = Vec::new();
    let mut last: Option<(Problem, EoSolution)> = None;
    for _ in 0..MAX_BISECTIONS {
        let t = 0.5 * (lo + hi);
        if let Some(ratio) = linear_screen(problem, t, &probe_opts) {
            log::debug!("{}: tof {:.6} skipped, linear Δv is {ratio:.2}× the full-throttle capacity", problem.name, t);
            probes.push(TofProbe { tof: t, dv_eo: f64::NAN, dv_full: f64::NAN });
            lo = t;
            continue;
        }
        let (target, eo) = match best_eo(problem, t, &warm, &probe_opts) {
            Ok(r) => r,
            // too short to converge: treat like a flight that cannot be flown at full throttle
            Err(e) if hi - lo > 1e-6 * t_upper => {
                log::warn!("{}: {e}; raising the lower bound", problem.name);
                probes.push(TofProbe { tof: t, dv_eo: f64::NAN, dv_full: f64::NAN });
                lo = t;
                continue;
            }
            Err(e) => return Err(e),
        };
        let dv_full = full_throttle_dv(&eo, &target);
        probes.push(TofProbe { tof: t, dv_eo: eo.dv, dv_full });
        log::debug!("{}: tof {:.6} Δv_e {:.6} Δv_t {:.6}", problem.name, t, eo.dv, dv_full);
        warm.retain(|(l, _)| *l != target.x1.l);
        warm.push((target.x1.l, eo.lam0));
        let miss = dv_full - eo.dv;
        last = Some((target, eo));
        if miss.abs() <= TOF_DV_TOL || hi - lo <= 1e-12 * t_upper {
            break;
        }
        if miss > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
    }
    let Some((target, eo)) = last else {
        return Err(Error::Unbracketable { best: t_upper, mismatch: f64::NAN });
    };
    let miss = probes.iter().rev().find(|p| p.tof == eo.tof).map(|p| p.dv_full - p.dv_eo).unwrap_or(f64::NAN);
    if miss.abs() > TOF_DV_TOL && eo.dv > 0.0 {
        return Err(Error::Unbracketable { best: eo.tof, mismatch: miss });
    }
    Ok(TofGuess { tof: eo.tof, target: target.x1, eo, probes })
}

/// Ratio of the linear-theory Δv to the full-throttle capacity when it is
/// large enough that an energy-optimal solve at `tof` is not worth attempting.
fn linear_screen(problem: &Problem, tof: f64, opts: &SolverOptions) -> Option<f64> {
    let (a, c) = (problem.prop.accel(), problem.prop.isp_g0);
    let capacity = if a * tof < c { -c * (1.0 - a * tof / c).ln() } else { f64::INFINITY };
    let dv_lin = problem
        .targets_for(tof)
        .iter()
        .filter_map(|p| linear_eo_estimate(p, tof, opts).ok().map(|(_, d)| d))
        .fold(f64::INFINITY, f64::min);
    let ratio = dv_lin / capacity;
    (ratio.is_finite() && ratio > LINEAR_SCREEN).then_some(ratio)
}

/// Keplerian true-longitude rate of the target, `√(μp)·(w/p)²`.
pub fn target_longitude_rate(problem: &Problem) -> Result<f64> {
    let rate = problem.x1.longitude_rate(problem.pc.mu);
    if rate > 0.0 && rate.is_finite() {
        Ok(rate)
    } else {
        Err(Error::validation("x1", "target must move prograde (L̇ > 0)"))
    }
}

fn terminal_hamiltonian(problem: &Problem, yf: &AugmentedState, t1: f64, law: &ControlLaw) -> Result<f64> {
    hamiltonian(&yf.x, &yf.lam, yf.mass(&problem.prop), t1, law, &problem.prop, &problem.pc)
}

/// `β_t` making `H(t1) = L̇_t·λ_L(t1)` hold for the full-throttle arc from `lam0`.
pub fn compute_beta_t(problem: &Problem, lam0: &Costates, tof: f64, opts: &SolverOptions) -> Result<f64> {
    let law = ControlLaw::to(0.0);
    let yf = problem.shoot(lam0, &law, tof, opts)?;
    let h0 = terminal_hamiltonian(problem, &yf, tof, &law)?;
    Ok(target_longitude_rate(problem)? * yf.lam.l - h0)
}

/// Residual `[x(t1) − x1; H(t1) − L̇_t·λ_L(t1)]` for unknowns `(λ0, t1)`.
pub fn to_residual(problem: &Problem, lam0: &Costates, tof: f64, beta_t: f64, opts: &SolverOptions) -> Result<[f64; 7]> {
    if !(tof > 0.0) {
        return Err(Error::validation("tof", "time of flight must stay positive"));
    }
    let law = ControlLaw::to(beta_t);
    let yf = problem.shoot(lam0, &law, tof, opts)?;
    let e = problem.terminal_error(&yf.x);
    let h = terminal_hamiltonian(problem, &yf, tof, &law)?;
    let tr = h - target_longitude_rate(problem)? * yf.lam.l;
    Ok([e[0], e[1], e[2], e[3], e[4], e[5], tr])
}

/// Shooting on `(λ0, t1)` at fixed `β_t`.
pub fn solve_to_fixed_beta(
    problem: &Problem,
    beta_t: f64,
    guess: &Costates,
    tof_guess: f64,
    opts: &SolverOptions,
) -> Result<(Costates, f64, RootReport)> {
    ControlLaw::to(beta_t).validate()?;
    let residual = |v: &[f64]| -> Result<Vec<f64>> {
        let lam = Costates::from_array(std::array::from_fn(|i| v[i]));
        Ok(to_residual(problem, &lam, v[6], beta_t, opts)?.to_vec())
    };
    let mut x0 = guess.to_array().to_vec();
    x0.push(tof_guess);
    let report = solve_root(residual, &x0, &opts.root_for(&ControlLaw::to(beta_t))).map_err(|e| shooting_failure("time-optimal", e))?;
    let lam = Costates::from_array(std::array::from_fn(|i| report.solution[i]));
    Ok((lam, report.solution[6], report))
}

fn to_fuel(problem: &Problem, lam: &Costates, tof: f64, beta: f64, opts: &SolverOptions) -> f64 {
    problem
        .shoot(lam, &ControlLaw::to(beta), tof, opts)
        .map(|y| problem.fuel_kg(y.dv))
        .unwrap_or(f64::NAN)
}

#[derive(Clone)]
struct Stage {
    lam: Costates,
    tof: f64,
    beta: f64,
    report: RootReport,
}

fn step(problem: &Problem, stage: &str, value: f64, prev: &Stage, opts: &SolverOptions, log: &mut Vec<ContinuationStep>) -> Result<Stage> {
    // re-anchor β_t so transversality holds at the warm start
    let beta = compute_beta_t(problem, &prev.lam, prev.tof, opts)?;
    let (lam, tof, report) = solve_to_fixed_beta(problem, beta, &prev.lam, prev.tof, opts)?;
    log.push(ContinuationStep {
        stage: stage.into(),
        value,
        lam0: lam,
        iterations: report.iterations,
        initial_residual: report.initial_residual_norm,
        residual: report.residual_norm,
        fuel_kg: to_fuel(problem, &lam, tof, beta, opts),
        refined: false,
    });
    log::info!("{}: TO {stage} = {value:.3} solved in {} iterations, tof {:.6}", problem.name, report.iterations, tof);
    Ok(Stage { lam, tof, beta, report })
}

/// Steps through `values`, halving the increment on failure.
fn ramp<B>(
    stage: &str,
    values: &[f64],
    start: f64,
    mut cur: Stage,
    build: B,
    opts: &SolverOptions,
    log: &mut Vec<ContinuationStep>,
) -> Result<Stage>
where
    B: Fn(f64) -> Problem,
{
    let mut last = start;
    for &target in values {
        let mut value = target;
        let mut depth = 0;
        loop {
            match step(&build(value), stage, value, &cur, opts, log) {
                Ok(s) => {
                    if value != target {
                        if let Some(entry) = log.last_mut() {
                            entry.refined = true;
                        }
                    }
                    cur = s;
                    last = value;
                    if value == target {
                        break;
                    }
                    value = target;
                    depth = 0;
                }
                Err(err) if depth < MAX_REFINEMENTS => {
                    log::warn!("{stage} = {value:.4} failed ({err}); refining step");
                    depth += 1;
                    value = 0.5 * (last + value);
                }
                Err(err) => return Err(Error::stalled(format!("{stage} = {value}"), err)),
            }
        }
    }
    Ok(cur)
}

/// Full time-optimal pipeline.
///
/// The Keplerian problem is solved first. J2 is then added, and eclipses are
/// phased in by continuation on `ε`. If that path stalls the two are added in
/// the opposite order. `β_t` is recomputed at every continuation step.
pub fn solve_to(
    problem: &Problem,
    t_upper: f64,
    schedule: &ContinuationSchedule,
    opts: &SolverOptions,
    pin_beta_t: Option<f64>,
) -> Result<ToSolution> {
    problem.validate()?;
    let guess = guess_tof(&problem.keplerian(), t_upper, opts)?;
    solve_to_from(problem, guess, schedule, opts, pin_beta_t)
}

/// Energy-optimal warm start at a fixed time of flight, on the cheapest target.
pub fn tof_guess_at(problem: &Problem, tof: f64, opts: &SolverOptions) -> Result<TofGuess> {
    if !(tof > 0.0) {
        return Err(Error::validation("tof", "must be positive"));
    }
    let kep = problem.keplerian();
    let (target, eo) = best_eo(&kep, tof, &[], opts)?;
    let probe = TofProbe { tof, dv_eo: eo.dv, dv_full: full_throttle_dv(&eo, &target) };
    Ok(TofGuess { tof, target: target.x1, eo, probes: vec![probe] })
}

/// Time-optimal pipeline from a given warm start.
pub fn solve_to_from(
    problem: &Problem,
    guess: TofGuess,
    schedule: &ContinuationSchedule,
    opts: &SolverOptions,
    pin_beta_t: Option<f64>,
) -> Result<ToSolution> {
    problem.validate()?;
    let kep = problem.keplerian();
    let mut target = kep.clone();
    target.x1 = guess.target;
    let beta = match pin_beta_t {
        Some(b) => b,
        None => compute_beta_t(&target, &guess.eo.lam0, guess.tof, opts)?,
    };
    log::info!("{}: TOF guess {:.6} d, β_t = {beta:.6}", problem.name, target.days(guess.tof));
    let (lam, tof, report) = solve_to_fixed_beta(&target, beta, &guess.eo.lam0, guess.tof, opts)?;
    let mut log = vec![ContinuationStep {
        stage: "kep".into(),
        value: 0.0,
        lam0: lam,
        iterations: report.iterations,
        initial_residual: report.initial_residual_norm,
        residual: report.residual_norm,
        fuel_kg: to_fuel(&target, &lam, tof, beta, opts),
        refined: false,
    }];
    let mut cur = Stage { lam, tof, beta, report };

    let full_pc = problem.pc.clone();
    let mut pc = target.pc.clone();
    let add_eclipse = |cur: Stage, pc: &mut PerturbationConfig, log: &mut Vec<ContinuationStep>| -> Result<Stage> {
        pc.eclipse_enabled = true;
        let base = pc.clone();
        let build = |eps| target.with_perturbations(PerturbationConfig { eclipse_scale: eps, ..base.clone() });
        let s = ramp("eps", &schedule.eps_steps, 0.0, cur, build, opts, log)?;
        pc.eclipse_scale = 1.0;
        Ok(s)
    };
    let add_j2 = |cur: Stage, pc: &mut PerturbationConfig, log: &mut Vec<ContinuationStep>| -> Result<Stage> {
        pc.j2_enabled = true;
        match step(&target.with_perturbations(pc.clone()), "j2", 1.0, &cur, opts, log) {
            Ok(s) => Ok(s),
            Err(err) => {
                log::warn!("{}: adding J2 in one step failed ({err}); ramping J2", problem.name);
                let base = pc.clone();
                let build = |f| target.with_perturbations(PerturbationConfig { j2: full_pc.j2 * f, ..base.clone() });
                ramp("j2", &J2_STEPS, 0.0, cur, build, opts, log)
            }
        }
    };
    // J2 first is the more robust path; eclipses first is the fallback
    let kep_stage = cur.clone();
    let kep_len = log.len();
    let j2_then_eclipse = |cur: Stage, log: &mut Vec<ContinuationStep>| -> Result<Stage> {
        let mut pc = pc.clone();
        let cur = if full_pc.j2_enabled { add_j2(cur, &mut pc, log)? } else { cur };
        if full_pc.eclipse_enabled {
            add_eclipse(cur, &mut pc, log)
        } else {
            Ok(cur)
        }
    };
    cur = match j2_then_eclipse(cur, &mut log) {
        Ok(s) => s,
        Err(err) if full_pc.j2_enabled && full_pc.eclipse_enabled => {
            log::warn!("{}: J2 then eclipses failed ({err}); trying eclipses first", problem.name);
            log.truncate(kep_len);
            let s = add_eclipse(kep_stage, &mut pc, &mut log)?;
            add_j2(s, &mut pc, &mut log)?
        }
        Err(err) => return Err(err),
    };

    let fin = target.with_perturbations(full_pc);
    let law = ControlLaw::to(cur.beta);
    let trajectory = fin.trajectory(&cur.lam, &law, cur.tof, opts)?;
    let last = trajectory.last().state;
    let tr = to_residual(&fin, &cur.lam, cur.tof, cur.beta, opts)?[6];
    Ok(ToSolution {
        lam0: cur.lam,
        tof: cur.tof,
        tof_days: fin.days(cur.tof),
        beta_t: cur.beta,
        dv: last.dv,
        fuel_kg: fin.fuel_kg(last.dv),
        trajectory,
        transversality_residual: tr,
        report: cur.report,
        target: fin.x1,
        guess,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::builtin;

    fn tempel() -> (Problem, Costates, f64) {
        let p = builtin("tempel1").unwrap().canonicalize().unwrap();
        let tof = p.units.days_to_canonical(330.0);
        let lam = linear_eo_guess(&p, tof, &SolverOptions::default()).unwrap();
        (p, lam, tof)
    }

    #[test]
    fn beta_zeroes_the_first_transversality_residual() {
        let (p, lam, tof) = tempel();
        let opts = SolverOptions::default();
        let beta = compute_beta_t(&p, &lam, tof, &opts).unwrap();
        let r = to_residual(&p, &lam, tof, beta, &opts).unwrap();
        assert!(r[6].abs() < 1e-12, "{}", r[6]);
    }

    #[test]
    fn residual_is_homogeneous_in_costates_and_beta() {
        let (p, lam, tof) = tempel();
        let opts = SolverOptions::default();
        let r1 = to_residual(&p, &lam, tof, 1.5, &opts).unwrap();
        let scaled = Costates::from_array(lam.to_array().map(|v| 3.0 * v));
        let r3 = to_residual(&p, &scaled, tof, 4.5, &opts).unwrap();
        for i in 0..6 {
            assert!((r1[i] - r3[i]).abs() < 1e-9, "state {i}");
        }
        assert!((3.0 * r1[6] - r3[6]).abs() < 1e-9 * r3[6].abs().max(1.0));
    }

    #[test]
    fn full_throttle_mass_is_linear() {
        let (p, lam, tof) = tempel();
        let y = p.shoot(&lam, &ControlLaw::to(1.0), tof, &SolverOptions::default()).unwrap();
        let expect = 1.0 - p.prop.t_max / p.prop.isp_g0 * tof;
        assert!((y.mass(&p.prop) - expect).abs() < 1e-10);
    }

    #[test]
    fn nonpositive_upper_bound_is_rejected() {
        let (p, _, _) = tempel();
        assert!(guess_tof(&p, 0.0, &SolverOptions::default()).is_err());
        assert!(tof_guess_at(&p, -1.0, &SolverOptions::default()).is_err());
    }

    #[test]
    fn retrograde_target_is_rejected() {
        let (mut p, _, _) = tempel();
        p.pc.mu = -1.0;
        assert!(target_longitude_rate(&p).is_err());
    }
}
