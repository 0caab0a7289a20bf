//! Independent oracles shared by the property and acceptance suites.
//!
//! The Hamiltonian here is rebuilt from the public Gauss-equation matrices
//! with the control frozen at a point, and differentiated by central
//! differences. It shares no code with the automatic-differentiation path.

#![allow(dead_code)]

use lowthrust::control::{Costates, ControlLaw, LawKind};
use lowthrust::dynamics::{eclipse_factor, gve_matrices, j2_accel, MeeState, PerturbationConfig, Propulsion};
use lowthrust::numerics::Trajectory;
use lowthrust::Problem;
use nalgebra::Vector3;

/// Throttle and direction prescribed by `law` at one point.
pub fn frozen_control(x: &MeeState, lam: &Costates, m: f64, law: &ControlLaw, prop: &Propulsion, mu: f64) -> (f64, Vector3<f64>) {
    let (_, b) = gve_matrices(x, mu).unwrap();
    let l = nalgebra::SVector::<f64, 6>::from(lam.to_array());
    let btl = b.transpose() * l;
    let n = btl.norm();
    let full = prop.m0 / m;
    let rho = law.gamma_tr - n;
    let gamma = match law.kind {
        LawKind::Eo => n,
        LawKind::To => full,
        LawKind::Fo => {
            if rho < 0.0 {
                full
            } else {
                0.0
            }
        }
        LawKind::Sfo => 0.5 * full * (1.0 - (rho / (1.0 - law.smoothing_k)).tanh()),
    };
    (gamma, -btl / n)
}

/// Hamiltonian with throttle and direction held at the given values.
#[allow(clippy::too_many_arguments)]
pub fn frozen_hamiltonian(
    x: &MeeState,
    lam: &Costates,
    t: f64,
    law: &ControlLaw,
    prop: &Propulsion,
    pc: &PerturbationConfig,
    gamma: f64,
    alpha: &Vector3<f64>,
) -> f64 {
    let (a_vec, b) = gve_matrices(x, pc.mu).unwrap();
    let l = nalgebra::SVector::<f64, 6>::from(lam.to_array());
    let s = 1.0 - pc.eclipse_scale * eclipse_factor(x, t, pc).unwrap();
    let acc = prop.accel();
    let mut pert = alpha * (acc * s * gamma);
    if pc.j2_enabled {
        pert += j2_accel(x, x.radius(), pc).unwrap();
    }
    let cost = match law.kind {
        LawKind::Eo => 0.5 * acc * s * gamma * gamma,
        LawKind::To => law.beta_t,
        LawKind::Fo | LawKind::Sfo => acc * s * gamma * law.gamma_tr,
    };
    l.dot(&(a_vec + b * pert)) + cost
}

/// `−∂H/∂x` by central differences with the control frozen at `x`.
pub fn fd_costate_rate(
    x: &MeeState,
    lam: &Costates,
    m: f64,
    t: f64,
    law: &ControlLaw,
    prop: &Propulsion,
    pc: &PerturbationConfig,
) -> [f64; 6] {
    let (gamma, alpha) = frozen_control(x, lam, m, law, prop, pc.mu);
    let base = x.to_array();
    std::array::from_fn(|i| {
        let h = 1e-6 * base[i].abs().max(1.0);
        let at = |d: f64| {
            let mut v = base;
            v[i] += d;
            frozen_hamiltonian(&MeeState::from_array(v), lam, t, law, prop, pc, gamma, &alpha)
        };
        -(at(h) - at(-h)) / (2.0 * h)
    })
}

/// Largest deviation of the mass-augmented Hamiltonian from its initial value.
///
/// With mass eliminated, `H` depends on time through `m(t)`, so
/// `H(t) − ∫ ∂H/∂m·ṁ dt` is the conserved quantity. `∂H/∂m` is taken by
/// central differences of the library Hamiltonian.
pub fn hamiltonian_drift(problem: &Problem, traj: &Trajectory, law: &ControlLaw) -> f64 {
    let c = problem.prop.isp_g0;
    let rate = |s: &lowthrust::numerics::Sample| -> (f64, f64) {
        let h = |m: f64| {
            lowthrust::control::hamiltonian(&s.state.x, &s.state.lam, m, s.t, law, &problem.prop, &problem.pc).unwrap()
        };
        let dm = 1e-7 * s.mass;
        let dh_dm = (h(s.mass + dm) - h(s.mass - dm)) / (2.0 * dm);
        let m_dot = -s.mass * problem.prop.accel() * s.throttle * (1.0 - problem.pc.eclipse_scale * s.nu) / c;
        (h(s.mass), dh_dm * m_dot)
    };
    let pts: Vec<(f64, f64, f64)> = traj
        .samples
        .iter()
        .map(|s| {
            let (h, r) = rate(s);
            (s.t, h, r)
        })
        .collect();
    let h0 = pts[0].1;
    let mut integral = 0.0;
    let mut worst: f64 = 0.0;
    for w in pts.windows(2) {
        integral += 0.5 * (w[0].2 + w[1].2) * (w[1].0 - w[0].0);
        worst = worst.max((w[1].1 - integral - h0).abs());
    }
    worst
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
}
