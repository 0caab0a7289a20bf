//! Propagation of the state/costate/Δv system under a control law.

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::ode::{integrate, OdeOptions, OdeSolution};
use crate::control::{evaluate, Costates, ControlLaw, Evaluation};
use crate::dynamics::{MeeState, PerturbationConfig, Propulsion};
use crate::error::Result;

/// Minimum number of uniformly spaced output epochs in a dense trajectory.
pub const MIN_SAMPLES: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentedState {
    pub x: MeeState,
    pub lam: Costates,
    /// Accumulated Δv, canonical speed.
    pub dv: f64,
}

impl AugmentedState {
    pub fn new(x: MeeState, lam: Costates) -> Self {
        Self { x, lam, dv: 0.0 }
    }

    pub(crate) fn to_vector(self) -> SVector<f64, 13> {
        let mut v = SVector::<f64, 13>::zeros();
        v.fixed_rows_mut::<6>(0).copy_from_slice(&self.x.to_array());
        v.fixed_rows_mut::<6>(6).copy_from_slice(&self.lam.to_array());
        v[12] = self.dv;
        v
    }

    pub(crate) fn from_vector(v: &SVector<f64, 13>) -> Self {
        Self {
            x: MeeState::from_array(std::array::from_fn(|i| v[i])),
            lam: Costates::from_array(std::array::from_fn(|i| v[6 + i])),
            dv: v[12],
        }
    }

    pub fn mass(&self, prop: &Propulsion) -> f64 {
        prop.m0 * (-self.dv / prop.isp_g0).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub state: AugmentedState,
    pub throttle: f64,
    pub rho: f64,
    pub direction: [f64; 3],
    pub nu: f64,
    pub mass: f64,
    pub hamiltonian: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub t0: f64,
    pub t1: f64,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has samples")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagateOptions {
    pub tol: f64,
    /// Uniform output epochs (in addition to accepted steps); 0 keeps only the endpoints.
    pub samples: usize,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        Self { tol: 1e-12, samples: MIN_SAMPLES }
    }
}

/// Right-hand side and diagnostics of the augmented system.
pub struct AugmentedSystem<'a> {
    pub law: &'a ControlLaw,
    pub prop: &'a Propulsion,
    pub pc: &'a PerturbationConfig,
}

impl AugmentedSystem<'_> {
    pub fn evaluate(&self, t: f64, y: &SVector<f64, 13>) -> Result<Evaluation> {
        let x: [f64; 6] = std::array::from_fn(|i| y[i]);
        let lam: [f64; 6] = std::array::from_fn(|i| y[6 + i]);
        let m = self.prop.m0 * (-y[12] / self.prop.isp_g0).exp();
        evaluate(&x, &lam, m, t, self.law, self.prop, self.pc)
    }

    pub fn rhs(&self, t: f64, y: &SVector<f64, 13>) -> Result<SVector<f64, 13>> {
        let e = self.evaluate(t, y)?;
        let mut d = SVector::<f64, 13>::zeros();
        d.fixed_rows_mut::<6>(0).copy_from(&e.x_dot);
        d.fixed_rows_mut::<6>(6).copy_from(&e.lam_dot);
        d[12] = e.dv_dot;
        Ok(d)
    }

    fn sample(&self, t: f64, y: &SVector<f64, 13>) -> Result<Sample> {
        let e = self.evaluate(t, y)?;
        let state = AugmentedState::from_vector(y);
        Ok(Sample {
            t,
            state,
            throttle: e.throttle,
            rho: e.rho,
            direction: [e.direction.x, e.direction.y, e.direction.z],
            nu: e.nu,
            mass: state.mass(self.prop),
            hamiltonian: e.hamiltonian,
        })
    }
}

fn run(
    y0: &AugmentedState,
    sys: &AugmentedSystem<'_>,
    t0: f64,
    t1: f64,
    opts: &OdeOptions,
) -> Result<OdeSolution<13>> {
    y0.x.validate()?;
    let f = |t: f64, y: &SVector<f64, 13>| sys.rhs(t, y);
    integrate(&f, t0, y0.to_vector(), t1, opts)
}

/// Final augmented state only; the fast path used inside shooting.
pub fn propagate_final(
    y0: &AugmentedState,
    law: &ControlLaw,
    t0: f64,
    t1: f64,
    prop: &Propulsion,
    pc: &PerturbationConfig,
    tol: f64,
) -> Result<AugmentedState> {
    let sys = AugmentedSystem { law, prop, pc };
    let sol = run(y0, &sys, t0, t1, &OdeOptions::with_tol(tol))?;
    Ok(AugmentedState::from_vector(sol.final_state()))
}

/// Dense trajectory with control diagnostics at uniform epochs and at every accepted step.
pub fn propagate(
    y0: &AugmentedState,
    law: &ControlLaw,
    t0: f64,
    t1: f64,
    prop: &Propulsion,
    pc: &PerturbationConfig,
    opts: &PropagateOptions,
) -> Result<Trajectory> {
    let sys = AugmentedSystem { law, prop, pc };
    let dense = opts.samples > 0;
    let sol = run(y0, &sys, t0, t1, &OdeOptions::with_tol(opts.tol).dense(dense))?;

    let mut points: Vec<(f64, SVector<f64, 13>)> = sol.t.iter().copied().zip(sol.y.iter().copied()).collect();
    if dense {
        let n = opts.samples.max(2);
        for i in 1..n - 1 {
            let t = t0 + (t1 - t0) * i as f64 / (n - 1) as f64;
            points.push((t, sol.sample(t).expect("dense output")));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        points.dedup_by(|a, b| a.0 == b.0);
    }
    let samples = points
        .iter()
        .map(|(t, y)| sys.sample(*t, y))
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { t0, t1, samples })
}

/// Direction of thrust as a vector.
pub fn direction_of(s: &Sample) -> Vector3<f64> {
    Vector3::from(s.direction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ControlLaw;

    fn unit_prop() -> Propulsion {
        Propulsion { t_max: 0.01, isp_g0: 0.5, m0: 1.0 }
    }

    #[test]
    fn coast_one_period() {
        let pc = PerturbationConfig::keplerian(1.0);
        let y0 = AugmentedState::new(MeeState::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0), Costates::default());
        let tau = std::f64::consts::TAU;
        let yf = propagate_final(&y0, &ControlLaw::fo(1.0), 0.0, tau, &unit_prop(), &pc, 1e-12).unwrap();
        assert!((yf.x.l - tau).abs() < 1e-10);
        for (a, b) in yf.x.to_array()[..5].iter().zip(&y0.x.to_array()[..5]) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(yf.dv, 0.0);
    }

    #[test]
    fn time_optimal_mass_is_linear() {
        let pc = PerturbationConfig::keplerian(1.0);
        let prop = unit_prop();
        let y0 = AugmentedState::new(
            MeeState::new(1.0, 0.01, 0.0, 0.0, 0.0, 0.0),
            Costates::new(-1.0, 0.2, 0.1, 0.0, 0.0, -0.1),
        );
        let traj = propagate(&y0, &ControlLaw::to(1.0), 0.0, 10.0, &prop, &pc, &PropagateOptions::default()).unwrap();
        assert!(traj.samples.len() >= MIN_SAMPLES);
        let rate = prop.t_max / prop.isp_g0;
        for s in &traj.samples {
            assert!((s.mass - (prop.m0 - rate * s.t)).abs() < 1e-9, "t {}", s.t);
        }
        assert_eq!(traj.first().t, 0.0);
        assert_eq!(traj.last().t, 10.0);
        assert!(traj.samples.windows(2).all(|w| w[0].t < w[1].t));
    }
}
