//! Pipeline execution and run artifacts: summary JSON, trajectory and
//! continuation CSV tables, and parameter sweeps.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::Costates;
use crate::eo::{linear_eo_guess, solve_eo, EoSolution};
use crate::error::{Error, Result};
use crate::fo::{
    compute_gamma_tr, eclipse_free, solve_fo, solve_fo_with_eo, ContinuationSchedule, ContinuationStep, GAMMA_TR_TOL,
};
use crate::mission::MissionConfig;
use crate::numerics::Trajectory;
use crate::problem::{Problem, SolverOptions};
use crate::to::{compute_beta_t, guess_tof, solve_to, solve_to_from, to_residual};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    SolveEo,
    SolveFo,
    SolveTo,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveEo => "solve-eo",
            Command::SolveFo => "solve-fo",
            Command::SolveTo => "solve-to",
        }
    }
}

/// Solver settings for one run, after mission overrides and command-line flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub opts: SolverOptions,
    pub schedule: ContinuationSchedule,
    pub pin_gamma_tr: Option<f64>,
    pub pin_beta_t: Option<f64>,
}

impl RunSettings {
    /// Defaults with the mission file's solver overrides applied.
    pub fn from_config(cfg: &MissionConfig) -> Result<Self> {
        let s = &cfg.solver;
        let mut opts = SolverOptions::default();
        if let Some(t) = s.tol {
            opts.tol = t;
        }
        if let Some(t) = s.ode_tol {
            opts.ode_tol = t;
        }
        if let Some(n) = s.max_iter {
            opts.max_iter = n;
        }
        if let Some(n) = s.samples {
            opts.samples = n;
        }
        let default = ContinuationSchedule::default();
        let k = s.k_schedule.clone().unwrap_or(default.k_steps);
        let d_eps = s.delta_eps.unwrap_or(0.1);
        Ok(Self {
            opts,
            schedule: ContinuationSchedule::from_steps(k, d_eps)?,
            pin_gamma_tr: None,
            pin_beta_t: None,
        })
    }
}

/// Headline numbers of a run, in mission units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mission: String,
    pub command: Command,
    pub fuel_kg: f64,
    pub final_mass_kg: f64,
    pub dv_m_s: f64,
    pub tof_days: f64,
    pub gamma_tr: Option<f64>,
    pub beta_t: Option<f64>,
    /// Root-finder iterations summed over every continuation step.
    pub iterations: usize,
    pub residual: f64,
    pub lam0: Costates,
    pub tof_guess_days: Option<f64>,
    pub transversality_residual: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub summary: Summary,
    pub trajectory: Trajectory,
    pub log: Vec<ContinuationStep>,
    pub problem: Problem,
}

pub fn run(command: Command, cfg: &MissionConfig, settings: &RunSettings) -> Result<RunArtifacts> {
    let problem = cfg.canonicalize()?;
    let start = Instant::now();
    let opts = &settings.opts;
    let mut summary = Summary {
        mission: cfg.name.clone(),
        command,
        fuel_kg: f64::NAN,
        final_mass_kg: f64::NAN,
        dv_m_s: f64::NAN,
        tof_days: f64::NAN,
        gamma_tr: None,
        beta_t: None,
        iterations: 0,
        residual: f64::NAN,
        lam0: Costates::default(),
        tof_guess_days: None,
        transversality_residual: None,
        wall_time_s: 0.0,
    };
    let (trajectory, log, final_problem) = match command {
        Command::SolveEo => {
            let base = eclipse_free(&problem);
            let eo = seed_eo(&base, opts)?;
            summary.lam0 = eo.lam0;
            summary.iterations = eo.report.iterations;
            summary.residual = eo.report.residual_norm;
            let step = ContinuationStep {
                stage: "eo".into(),
                value: 0.0,
                lam0: eo.lam0,
                iterations: eo.report.iterations,
                initial_residual: eo.report.initial_residual_norm,
                residual: eo.report.residual_norm,
                fuel_kg: eo.fuel_kg,
                refined: false,
            };
            (eo.trajectory, vec![step], base)
        }
        Command::SolveFo => {
            let fo = solve_fo(&problem, &settings.schedule, opts, settings.pin_gamma_tr)?;
            summary.lam0 = fo.lam0;
            summary.gamma_tr = Some(fo.gamma_tr);
            summary.residual = fo.report.residual_norm;
            (fo.trajectory, fo.log, problem.clone())
        }
        Command::SolveTo => {
            let to = solve_to(&problem, cfg.tof_upper(), &settings.schedule, opts, settings.pin_beta_t)?;
            summary.lam0 = to.lam0;
            summary.beta_t = Some(to.beta_t);
            summary.residual = to.report.residual_norm;
            summary.tof_guess_days = Some(problem.days(to.guess.tof));
            summary.transversality_residual = Some(to.transversality_residual);
            let mut p = problem.clone();
            p.x1 = to.target;
            p.tof = to.tof;
            (to.trajectory, to.log, p)
        }
    };
    if command != Command::SolveEo {
        summary.iterations = log.iter().map(|s| s.iterations).sum();
    }
    let last = trajectory.last();
    summary.dv_m_s = final_problem.dv_si(last.state.dv);
    summary.fuel_kg = final_problem.fuel_kg(last.state.dv);
    summary.final_mass_kg = last.mass * final_problem.units.mass_unit;
    summary.tof_days = final_problem.days(last.t);
    summary.wall_time_s = start.elapsed().as_secs_f64();
    Ok(RunArtifacts { summary, trajectory, log, problem: final_problem })
}

fn seed_eo(problem: &Problem, opts: &SolverOptions) -> Result<EoSolution> {
    let guess = linear_eo_guess(problem, problem.tof, opts).unwrap_or_default();
    solve_eo(problem, &guess, opts)
}

#[derive(Debug, Serialize)]
struct TrajectoryRow {
    t_days: f64,
    p: f64,
    f: f64,
    g: f64,
    h: f64,
    k: f64,
    #[serde(rename = "L")]
    l: f64,
    mass_kg: f64,
    throttle: f64,
    rho: f64,
    alpha_r: f64,
    alpha_t: f64,
    alpha_n: f64,
    nu: f64,
}

fn csv_string<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

impl RunArtifacts {
    pub fn trajectory_csv(&self) -> Result<String> {
        let u = &self.problem.units;
        csv_string(self.trajectory.samples.iter().map(|s| {
            let x = &s.state.x;
            TrajectoryRow {
                t_days: u.canonical_to_days(s.t),
                p: x.p,
                f: x.f,
                g: x.g,
                h: x.h,
                k: x.k,
                l: x.l,
                mass_kg: s.mass * u.mass_unit,
                throttle: s.throttle,
                rho: s.rho,
                alpha_r: s.direction[0],
                alpha_t: s.direction[1],
                alpha_n: s.direction[2],
                nu: s.nu,
            }
        }))
    }

    pub fn continuation_csv(&self) -> Result<String> {
        continuation_csv(&self.log)
    }

    /// Writes `summary.json`, `trajectory.csv` and `continuation.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let summary = serde_json::to_string_pretty(&self.summary)?;
        fs::write(dir.join("summary.json"), summary + "\n")?;
        fs::write(dir.join("trajectory.csv"), self.trajectory_csv()?)?;
        fs::write(dir.join("continuation.csv"), self.continuation_csv()?)?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct LogRow<'a> {
    stage: &'a str,
    value: f64,
    iterations: usize,
    initial_residual: f64,
    residual: f64,
    fuel_kg: f64,
    refined: bool,
    lam_p: f64,
    lam_f: f64,
    lam_g: f64,
    lam_h: f64,
    lam_k: f64,
    #[serde(rename = "lam_L")]
    lam_l: f64,
}

pub fn continuation_csv(log: &[ContinuationStep]) -> Result<String> {
    csv_string(log.iter().map(|s| {
        let l = s.lam0;
        LogRow {
            stage: &s.stage,
            value: s.value,
            iterations: s.iterations,
            initial_residual: s.initial_residual,
            residual: s.residual,
            fuel_kg: s.fuel_kg,
            refined: s.refined,
            lam_p: l.p,
            lam_f: l.f,
            lam_g: l.g,
            lam_h: l.h,
            lam_k: l.k,
            lam_l: l.l,
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    GammaTr,
    BetaT,
}

/// One pinned value of a sweep. Failed rows carry the error and NaN metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    /// The value the pipeline computes on its own.
    pub auto: bool,
    pub converged: bool,
    /// Residual norm at the first guess of the first solve.
    pub initial_residual: f64,
    /// Transversality component of that residual (time-optimal only).
    pub initial_transversality: Option<f64>,
    pub iterations: usize,
    pub fuel_kg: f64,
    pub tof_days: f64,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(value: f64, auto: bool, err: &Error) -> Self {
        Self {
            value,
            auto,
            converged: false,
            initial_residual: f64::NAN,
            initial_transversality: None,
            iterations: 0,
            fuel_kg: f64::NAN,
            tof_days: f64::NAN,
            error: Some(err.to_string()),
        }
    }
}

/// Runs the pipeline once per grid value with the scaling parameter pinned.
///
/// With two or more grid values the auto-computed value is appended and its
/// row marked; a single value is a plain pinned run. Rows run in parallel and
/// a failed row does not stop the sweep.
pub fn sweep(param: SweepParam, cfg: &MissionConfig, grid: &[f64], settings: &RunSettings) -> Result<Vec<SweepRow>> {
    if grid.is_empty() {
        return Err(Error::validation("grid", "must contain at least one value"));
    }
    if let Some(v) = grid.iter().find(|v| !v.is_finite()) {
        return Err(Error::validation("grid", format!("values must be finite (got {v})")));
    }
    let problem = cfg.canonicalize()?;
    let opts = &settings.opts;
    match param {
        SweepParam::GammaTr => {
            let base = eclipse_free(&problem);
            let eo = seed_eo(&base, opts)?;
            let auto = compute_gamma_tr(&eo, &base, GAMMA_TR_TOL)?;
            Ok(run_rows(grid, auto, |g| {
                let fo = solve_fo_with_eo(&problem, eo.clone(), &settings.schedule, opts, Some(g))?;
                Ok(row_from_log(g, &fo.log, fo.fuel_kg, problem.days(problem.tof), None))
            }))
        }
        SweepParam::BetaT => {
            let kep = problem.keplerian();
            let guess = guess_tof(&kep, cfg.tof_upper(), opts)?;
            let mut target = kep.clone();
            target.x1 = guess.target;
            let auto = compute_beta_t(&target, &guess.eo.lam0, guess.tof, opts)?;
            Ok(run_rows(grid, auto, |b| {
                let transversality = to_residual(&target, &guess.eo.lam0, guess.tof, b, opts)?[6];
                let to = solve_to_from(&problem, guess.clone(), &settings.schedule, opts, Some(b))?;
                Ok(row_from_log(b, &to.log, to.fuel_kg, to.tof_days, Some(transversality)))
            }))
        }
    }
}

fn row_from_log(value: f64, log: &[ContinuationStep], fuel_kg: f64, tof_days: f64, tr: Option<f64>) -> SweepRow {
    SweepRow {
        value,
        auto: false,
        converged: true,
        initial_residual: log.first().map_or(f64::NAN, |s| s.initial_residual),
        initial_transversality: tr,
        iterations: log.iter().map(|s| s.iterations).sum(),
        fuel_kg,
        tof_days,
        error: None,
    }
}

fn run_rows<F>(grid: &[f64], auto: f64, row: F) -> Vec<SweepRow>
where
    F: Fn(f64) -> Result<SweepRow> + Sync,
{
    let mut values: Vec<(f64, bool)> = grid.iter().map(|&v| (v, false)).collect();
    if grid.len() > 1 {
        values.push((auto, true));
    }
    values
        .par_iter()
        .map(|&(v, is_auto)| match row(v) {
            Ok(r) => SweepRow { auto: is_auto, ..r },
            Err(e) => {
                log::warn!("sweep row {v}: {e}");
                SweepRow::failed(v, is_auto, &e)
            }
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct SweepCsvRow {
    value: f64,
    auto: bool,
    converged: bool,
    initial_residual: f64,
    initial_transversality: Option<f64>,
    iterations: usize,
    fuel_kg: f64,
    tof_days: f64,
    error: String,
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    csv_string(rows.iter().map(|r| SweepCsvRow {
        value: r.value,
        auto: r.auto,
        converged: r.converged,
        initial_residual: r.initial_residual,
        initial_transversality: r.initial_transversality,
        iterations: r.iterations,
        fuel_kg: r.fuel_kg,
        tof_days: r.tof_days,
        error: r.error.clone().unwrap_or_default(),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::builtin;

    #[test]
    fn settings_pick_up_mission_overrides() {
        let mut cfg = builtin("tempel1").unwrap();
        cfg.solver.tol = Some(1e-9);
        cfg.solver.k_schedule = Some(vec![0.0, 0.5, 0.9]);
        cfg.solver.delta_eps = Some(0.25);
        let s = RunSettings::from_config(&cfg).unwrap();
        assert_eq!(s.opts.tol, 1e-9);
        assert_eq!(s.schedule.k_steps, vec![0.0, 0.5, 0.9]);
        assert_eq!(s.schedule.eps_steps, vec![0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn empty_grid_is_rejected() {
        let cfg = builtin("tempel1").unwrap();
        let s = RunSettings::from_config(&cfg).unwrap();
        assert!(sweep(SweepParam::GammaTr, &cfg, &[], &s).is_err());
        assert!(sweep(SweepParam::BetaT, &cfg, &[f64::NAN], &s).is_err());
    }

    #[test]
    fn run_rows_marks_auto_and_keeps_failures() {
        let rows = run_rows(&[1.0, 2.0], 1.5, |v| {
            if v == 2.0 {
                Err(Error::validation("x", "boom"))
            } else {
                Ok(row_from_log(v, &[], 1.0, 1.0, None))
            }
        });
        assert_eq!(rows.len(), 3);
        assert!(!rows[1].converged && rows[1].error.is_some());
        assert!(rows[2].auto && rows[2].value == 1.5);
        assert_eq!(run_rows(&[1.0], 1.5, |v| Ok(row_from_log(v, &[], 1.0, 1.0, None))).len(), 1);
    }
}
