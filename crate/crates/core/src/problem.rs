//! Canonical boundary-value problem shared by the EO, FO and TO solvers.

use serde::{Deserialize, Serialize};

use crate::control::{Costates, ControlLaw};
use crate::dynamics::{MeeState, PerturbationConfig, Propulsion};
use crate::error::{Error, Result};
use crate::numerics::{propagate, propagate_final, AugmentedState, PropagateOptions, RootOptions, Trajectory};
use crate::units::UnitSystem;

/// A transfer in canonical units. The target's true longitude already
/// includes the requested number of full revolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub name: String,
    pub x0: MeeState,
    pub x1: MeeState,
    /// Reference time of flight, canonical.
    pub tof: f64,
    pub prop: Propulsion,
    pub pc: PerturbationConfig,
    pub units: UnitSystem,
    /// Re-select the target's revolution count when the time of flight changes.
    #[serde(default)]
    pub adapt_revolutions: bool,
}

impl Problem {
    pub fn validate(&self) -> Result<()> {
        self.x0.validate()?;
        self.x1.validate()?;
        self.pc.validate()?;
        if !(self.tof > 0.0) {
            return Err(Error::validation("tof", "must be positive"));
        }
        if !(self.prop.t_max > 0.0 && self.prop.isp_g0 > 0.0 && self.prop.m0 > 0.0) {
            return Err(Error::validation("propulsion", "thrust, exhaust speed and mass must be positive"));
        }
        Ok(())
    }

    /// Propellant consumed for an accumulated Δv, in kilograms.
    pub fn fuel_kg(&self, dv: f64) -> f64 {
        self.units.mass_unit * self.prop.m0 * (1.0 - (-dv / self.prop.isp_g0).exp())
    }

    pub fn dv_si(&self, dv: f64) -> f64 {
        self.units.speed_to_si(dv)
    }

    pub fn days(&self, t: f64) -> f64 {
        self.units.canonical_to_days(t)
    }

    /// Terminal state error `x(t1) − x1`.
    pub(crate) fn terminal_error(&self, xf: &MeeState) -> [f64; 6] {
        let a = xf.to_array();
        let b = self.x1.to_array();
        std::array::from_fn(|i| a[i] - b[i])
    }

    pub fn with_perturbations(&self, pc: PerturbationConfig) -> Self {
        Self { pc, ..self.clone() }
    }

    /// Same transfer without J2 or eclipses.
    pub fn keplerian(&self) -> Self {
        self.with_perturbations(PerturbationConfig {
            j2_enabled: false,
            eclipse_enabled: false,
            eclipse_scale: 0.0,
            ..self.pc.clone()
        })
    }

    /// Targets to try for a transfer of duration `tof`.
    ///
    /// Without revolution adaptation this is the problem itself. Otherwise the
    /// two targets whose true longitude brackets the coast arc's mean
    /// longitude after `tof` are returned.
    pub fn targets_for(&self, tof: f64) -> Vec<Problem> {
        let base = Self { tof, ..self.clone() };
        if !self.adapt_revolutions {
            return vec![base];
        }
        let e2 = self.x0.f * self.x0.f + self.x0.g * self.x0.g;
        let sma = self.x0.p / (1.0 - e2);
        let coast_l = self.x0.l + (self.pc.mu / sma.powi(3)).sqrt() * tof;
        let tau = std::f64::consts::TAU;
        let k = ((self.x1.l - coast_l) / tau).floor();
        [k, k + 1.0]
            .into_iter()
            .map(|k| {
                let mut p = base.clone();
                p.x1.l = self.x1.l - tau * k;
                p
            })
            .filter(|p| p.x1.l > p.x0.l)
            .collect()
    }

    pub fn shoot(&self, lam0: &Costates, law: &ControlLaw, tof: f64, opts: &SolverOptions) -> Result<AugmentedState> {
        let y0 = AugmentedState::new(self.x0, *lam0);
        propagate_final(&y0, law, 0.0, tof, &self.prop, &self.pc, opts.ode_tol)
    }

    pub(crate) fn trajectory(&self, lam0: &Costates, law: &ControlLaw, tof: f64, opts: &SolverOptions) -> Result<Trajectory> {
        let y0 = AugmentedState::new(self.x0, *lam0);
        let popts = PropagateOptions { tol: opts.ode_tol, samples: opts.samples };
        propagate(&y0, law, 0.0, tof, &self.prop, &self.pc, &popts)
    }
}

/// Tolerances shared by the shooting solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Max-norm shooting residual at convergence.
    pub tol: f64,
    pub ode_tol: f64,
    /// Residual accepted once a bang-bang solve stalls at its noise floor.
    pub fo_tol: f64,
    pub max_iter: usize,
    /// Uniform samples in reported trajectories.
    pub samples: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            ode_tol: 1e-12,
            fo_tol: 1e-8,
            max_iter: 200,
            samples: crate::numerics::MIN_SAMPLES,
        }
    }
}

impl SolverOptions {
    pub(crate) fn root(&self) -> RootOptions {
        RootOptions::new(self.tol, self.max_iter)
    }

    /// Root options for laws whose residual has a noise floor (discontinuous throttle, free final time).
    pub(crate) fn root_for(&self, law: &ControlLaw) -> RootOptions {
        match law.kind {
            crate::control::LawKind::Fo | crate::control::LawKind::To => self.root().accepting(self.fo_tol),
            _ => self.root(),
        }
    }
}

/// Turns a root-finder failure into a shooting failure carrying its report.
pub(crate) fn shooting_failure(stage: &str, err: Error) -> Error {
    match err {
        Error::MaxIterations(report) => Error::NoConvergence {
            reason: format!("{stage}: iteration limit"),
            report,
        },
        Error::SingularJacobian(report) => Error::NoConvergence {
            reason: format!("{stage}: singular Jacobian"),
            report,
        },
        Error::NoConvergence { reason, report } => Error::NoConvergence {
            reason: format!("{stage}: {reason}"),
            report,
        },
        other => other,
    }
}
