//! Control laws derived from the minimum principle, the Hamiltonian, and costate dynamics.
//!
//! The thrust direction always minimizes the Hamiltonian (`α̂ = −Bᵀλ/‖Bᵀλ‖`);
//! the throttle `Γ` depends on the cost functional:
//!
//! | law | running cost         | throttle                               |
//! |-----|----------------------|----------------------------------------|
//! | EO  | `½·a·s·Γ²`           | `‖Bᵀλ‖`                                |
//! | FO  | `Γ_TR·a·s·Γ`         | `m0/m` if `ρ < 0`, else 0              |
//! | SFO | `Γ_TR·a·s·Γ`         | `(m0/2m)(1 − tanh(ρ/(1−k)))`           |
//! | TO  | `β_t`                | `m0/m`                                 |
//!
//! with `a = T_max/m0`, `s = 1 − εν` and `ρ = Γ_TR − ‖Bᵀλ‖`.

use nalgebra::{SVector, Vector3};
use num_dual::gradient;
use serde::{Deserialize, Serialize};

use crate::dynamics::{availability, gve, j2_rtn, MeeState, PerturbationConfig, Propulsion, Real};
use crate::error::{Error, Result};

/// Below this primer magnitude the thrust direction is undefined.
pub const ZERO_PRIMER: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Costates {
    pub p: f64,
    pub f: f64,
    pub g: f64,
    pub h: f64,
    pub k: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

impl Costates {
    pub const fn new(p: f64, f: f64, g: f64, h: f64, k: f64, l: f64) -> Self {
        Self { p, f, g, h, k, l }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.p, self.f, self.g, self.h, self.k, self.l]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LawKind {
    Eo,
    Sfo,
    Fo,
    To,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlLaw {
    pub kind: LawKind,
    pub gamma_tr: f64,
    pub smoothing_k: f64,
    pub beta_t: f64,
}

impl ControlLaw {
    pub fn eo() -> Self {
        Self { kind: LawKind::Eo, gamma_tr: 0.0, smoothing_k: 0.0, beta_t: 0.0 }
    }

    pub fn fo(gamma_tr: f64) -> Self {
        Self { kind: LawKind::Fo, gamma_tr, smoothing_k: 0.0, beta_t: 0.0 }
    }

    pub fn sfo(gamma_tr: f64, k: f64) -> Self {
        Self { kind: LawKind::Sfo, gamma_tr, smoothing_k: k, beta_t: 0.0 }
    }

    pub fn to(beta_t: f64) -> Self {
        Self { kind: LawKind::To, gamma_tr: 0.0, smoothing_k: 0.0, beta_t }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_tr >= 0.0) {
            return Err(Error::validation("gamma_tr", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.smoothing_k) {
            return Err(Error::validation("smoothing_k", "must lie in [0, 1)"));
        }
        if !self.beta_t.is_finite() {
            return Err(Error::validation("beta_t", "must be finite"));
        }
        Ok(())
    }
}

pub fn optimal_direction(btl: &Vector3<f64>) -> Result<Vector3<f64>> {
    let n = btl.norm();
    if n < ZERO_PRIMER {
        return Err(Error::ZeroPrimer(n));
    }
    Ok(-btl / n)
}

pub fn switching_function(btl: &Vector3<f64>, gamma_tr: f64) -> f64 {
    gamma_tr - btl.norm()
}

/// Throttle for the given law; `ρ = 0` under the bang-bang law is treated as coast.
pub fn throttle(law: &ControlLaw, btl: &Vector3<f64>, m: f64, m0: f64) -> f64 {
    throttle_generic(law, btl.norm_squared(), m, m0)
}

fn primer_norm<D: Real>(norm2: D) -> D {
    if norm2.re() > 0.0 {
        norm2.sqrt()
    } else {
        D::from(0.0)
    }
}

fn throttle_generic<D: Real>(law: &ControlLaw, norm2: D, m: f64, m0: f64) -> D {
    let full = m0 / m;
    match law.kind {
        LawKind::Eo => primer_norm(norm2),
        LawKind::To => D::from(full),
        LawKind::Fo => {
            let rho = law.gamma_tr - primer_norm(norm2).re();
            D::from(if rho < 0.0 { full } else { 0.0 })
        }
        LawKind::Sfo => {
            let rho = -primer_norm(norm2) + law.gamma_tr;
            (-(rho / (1.0 - law.smoothing_k)).tanh() + 1.0) * (0.5 * full)
        }
    }
}

/// Primer vector `Bᵀλ`.
pub(crate) fn primer<D: Real>(b: &[[D; 3]; 6], lam: &[f64; 6]) -> [D; 3] {
    let mut out = [D::from(0.0); 3];
    for (row, &l) in b.iter().zip(lam) {
        for j in 0..3 {
            out[j] += row[j] * l;
        }
    }
    out
}

/// Hamiltonian with the optimal control substituted, generic in the state.
pub(crate) fn hamiltonian_generic<D: Real>(
    x: &[D; 6],
    lam: &[f64; 6],
    m: f64,
    law: &ControlLaw,
    prop: &Propulsion,
    pc: &PerturbationConfig,
    sun: Option<&[f64; 3]>,
) -> D {
    let (a, b) = gve(x, pc.mu);
    let btl = primer(&b, lam);
    let mut h = D::from(0.0);
    for i in 0..6 {
        h += a[i] * lam[i];
    }
    if pc.j2_enabled {
        let w = x[1] * x[5].cos() + x[2] * x[5].sin() + 1.0;
        let aj = j2_rtn(x, x[0] / w, pc.mu, pc.j2, pc.r_body);
        for j in 0..3 {
            h += btl[j] * aj[j];
        }
    }
    let norm2 = btl[0] * btl[0] + btl[1] * btl[1] + btl[2] * btl[2];
    let acc = prop.accel();
    let s = availability(x, sun, pc);
    match law.kind {
        // ½aΓ² − aΓ‖Bᵀλ‖ at Γ = ‖Bᵀλ‖
        LawKind::Eo => h - norm2 * s * (0.5 * acc),
        LawKind::To => {
            let gamma = throttle_generic(law, norm2, m, prop.m0);
            h - primer_norm(norm2) * s * gamma * acc + law.beta_t
        }
        LawKind::Fo | LawKind::Sfo => {
            let gamma = D::from(throttle_generic(law, norm2.re(), m, prop.m0));
            let rho = -primer_norm(norm2) + law.gamma_tr;
            h + rho * s * gamma * acc
        }
    }
}

pub fn hamiltonian(
    x: &MeeState,
    lam: &Costates,
    m: f64,
    t: f64,
    law: &ControlLaw,
    prop: &Propulsion,
    pc: &PerturbationConfig,
) -> Result<f64> {
    x.validate()?;
    let sun = pc.sun_if_active(t)?;
    Ok(hamiltonian_generic(&x.to_array(), &lam.to_array(), m, law, prop, pc, sun.as_ref()))
}

/// `λ̇ = −∂H/∂x`, differentiating through the optimal control.
pub fn costate_rate(
    x: &MeeState,
    lam: &Costates,
    m: f64,
    t: f64,
    law: &ControlLaw,
    prop: &Propulsion,
    pc: &PerturbationConfig,
) -> Result<Costates> {
    x.validate()?;
    let sun = pc.sun_if_active(t)?;
    let (_, grad) = h_gradient(&x.to_array(), &lam.to_array(), m, law, prop, pc, sun.as_ref());
    Ok(Costates::from_array(std::array::from_fn(|i| -grad[i])))
}

pub(crate) fn h_gradient(
    x: &[f64; 6],
    lam: &[f64; 6],
    m: f64,
    law: &ControlLaw,
    prop: &Propulsion,
    pc: &PerturbationConfig,
    sun: Option<&[f64; 3]>,
) -> (f64, SVector<f64, 6>) {
    gradient(
        |v| {
            let xd = [v[0], v[1], v[2], v[3], v[4], v[5]];
            hamiltonian_generic(&xd, lam, m, law, prop, pc, sun)
        },
        &SVector::from(*x),
    )
}

/// Everything the propagator needs at one point of the augmented system.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation {
    pub hamiltonian: f64,
    pub x_dot: SVector<f64, 6>,
    pub lam_dot: SVector<f64, 6>,
    /// Rate of accumulated Δv, `a·(1 − εν)·Γ`.
    pub dv_dot: f64,
    pub throttle: f64,
    pub rho: f64,
    pub direction: Vector3<f64>,
    pub primer: Vector3<f64>,
    pub nu: f64,
}

/// Evaluates state, costate and Δv rates together with the control at one point.
pub fn evaluate(
    x: &[f64; 6],
    lam: &[f64; 6],
    m: f64,
    t: f64,
    law: &ControlLaw,
    prop: &Propulsion,
    pc: &PerturbationConfig,
) -> Result<Evaluation> {
    let state = MeeState::from_array(*x);
    state.validate()?;
    let sun = pc.sun_if_active(t)?;
    let (h, grad) = h_gradient(x, lam, m, law, prop, pc, sun.as_ref());

    let (a, b) = gve(x, pc.mu);
    let btl = Vector3::from(primer(&b, lam));
    let norm = btl.norm();
    let direction = if norm < ZERO_PRIMER { Vector3::zeros() } else { -btl / norm };
    let gamma = if norm < ZERO_PRIMER && law.kind != LawKind::To {
        0.0
    } else {
        throttle(law, &btl, m, prop.m0)
    };
    let nu = match sun {
        Some(ref s) => crate::dynamics::shadow(&crate::dynamics::position(x), s, &pc.shadow, pc.r_body, pc.sun_radius()),
        None => 0.0,
    };
    let avail = if pc.eclipse_active() { 1.0 - pc.eclipse_scale * nu } else { 1.0 };
    let thrust = prop.accel() * avail * gamma;
    let mut acc = direction * thrust;
    if pc.j2_enabled {
        acc += Vector3::from(j2_rtn(x, state.radius(), pc.mu, pc.j2, pc.r_body));
    }
    let x_dot = SVector::<f64, 6>::from_fn(|i, _| a[i] + b[i][0] * acc.x + b[i][1] * acc.y + b[i][2] * acc.z);

    Ok(Evaluation {
        hamiltonian: h,
        x_dot,
        lam_dot: -grad,
        dv_dot: thrust,
        throttle: gamma,
        rho: switching_function(&btl, law.gamma_tr),
        direction,
        primer: btl,
        nu,
    })
}
