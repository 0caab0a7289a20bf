//! Controlled equations of motion in modified equinoctial elements.
//!
//! The element rates are `ẋ = A(x) + B(x)·a_ctrl + B(x)·a_J2`, where `a_ctrl`
//! is the RTN control acceleration `(T_max/m0)·(1 − εν)·Γ·α̂`. Mass is not a
//! state: it is recovered from the accumulated Δv through the rocket equation.
//!
//! The kernels are generic over [`Real`] so that the same expressions are
//! evaluated with plain `f64` and with dual numbers for exact state gradients.

use nalgebra::{SMatrix, SVector, Vector3};
use num_dual::{DualNum, DualStruct};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{AU, DAY, R_SUN};

/// Scalar usable by the dynamics kernels (`f64` or a forward-mode dual number).
pub trait Real: DualNum<Primitive = f64> + DualStruct<Real = f64> + Copy {}
impl<T: DualNum<Primitive = f64> + DualStruct<Real = f64> + Copy> Real for T {}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeeState {
    pub p: f64,
    pub f: f64,
    pub g: f64,
    pub h: f64,
    pub k: f64,
    /// True longitude, unwrapped (accumulates across revolutions).
    #[serde(rename = "L")]
    pub l: f64,
}

impl MeeState {
    pub const fn new(p: f64, f: f64, g: f64, h: f64, k: f64, l: f64) -> Self {
        Self { p, f, g, h, k, l }
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.p, self.f, self.g, self.h, self.k, self.l]
    }

    pub fn w(&self) -> f64 {
        1.0 + self.f * self.l.cos() + self.g * self.l.sin()
    }

    /// Orbital radius `p / w`.
    pub fn radius(&self) -> f64 {
        self.p / self.w()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0) {
            return Err(Error::NonPositiveSemiLatus(self.p));
        }
        let w = self.w();
        if !(w > 0.0) {
            return Err(Error::DegenerateOrbit(format!("w = {w} <= 0")));
        }
        Ok(())
    }

    /// Keplerian rate of the true longitude, `√(μp)·(w/p)²`.
    pub fn longitude_rate(&self, mu: f64) -> f64 {
        (mu * self.p).sqrt() * (self.w() / self.p).powi(2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Propulsion {
    /// Maximum thrust, canonical force.
    pub t_max: f64,
    /// Effective exhaust velocity `Isp·g0`, canonical speed.
    pub isp_g0: f64,
    /// Initial mass, canonical (1 when `M_u = m0`).
    pub m0: f64,
}

impl Propulsion {
    /// Control acceleration scale `T_max/m0`.
    pub fn accel(&self) -> f64 {
        self.t_max / self.m0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowParams {
    /// Sharpness of the shadow boundary, per radian of apparent separation.
    pub c_t: f64,
    /// Fraction of the summed apparent radii of Sun and body at which `ν = ½`.
    pub c_s: f64,
}

impl Default for ShadowParams {
    fn default() -> Self {
        Self { c_t: 100.0, c_s: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub mu: f64,
    pub j2_enabled: bool,
    pub j2: f64,
    /// Central-body radius, canonical length.
    pub r_body: f64,
    pub eclipse_enabled: bool,
    /// Continuation weight ε on the eclipse factor.
    pub eclipse_scale: f64,
    pub shadow: ShadowParams,
    /// Julian date (UTC) of `t = 0`.
    pub epoch_jd: Option<f64>,
    /// Days per canonical time unit, used to advance the Sun position.
    pub time_unit_days: f64,
    /// Astronomical unit in canonical length units.
    pub au: f64,
}

impl PerturbationConfig {
    /// Pure two-body dynamics.
    pub fn keplerian(mu: f64) -> Self {
        Self {
            mu,
            j2_enabled: false,
            j2: 0.0,
            r_body: 1.0,
            eclipse_enabled: false,
            eclipse_scale: 0.0,
            shadow: ShadowParams::default(),
            epoch_jd: None,
            time_unit_days: 1.0,
            au: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eclipse_scale) {
            return Err(Error::validation("eclipse_scale", "must lie in [0, 1]"));
        }
        if !(self.shadow.c_t > 0.0) {
            return Err(Error::validation("c_t", "must be positive"));
        }
        if !(self.shadow.c_s > 0.0 && self.shadow.c_s <= 1.0) {
            return Err(Error::validation("c_s", "must lie in (0, 1]"));
        }
        if self.eclipse_enabled && self.epoch_jd.is_none() {
            return Err(Error::EpochUnavailable);
        }
        Ok(())
    }

    /// Whether the eclipse factor can change the dynamics at all.
    pub(crate) fn eclipse_active(&self) -> bool {
        self.eclipse_enabled && self.eclipse_scale > 0.0
    }

    /// Unit vector towards the Sun at canonical time `t`.
    pub fn sun_radius(&self) -> f64 {
        self.au * R_SUN / AU
    }

    pub fn sun_direction(&self, t: f64) -> Result<Vector3<f64>> {
        let jd0 = self.epoch_jd.ok_or(Error::EpochUnavailable)?;
        Ok(sun_direction(jd0 + t * self.time_unit_days))
    }

    /// Sun position relative to the central body, canonical length.
    pub fn sun_position(&self, t: f64) -> Result<Vector3<f64>> {
        let jd0 = self.epoch_jd.ok_or(Error::EpochUnavailable)?;
        let jd = jd0 + t * self.time_unit_days;
        Ok(sun_direction(jd) * sun_distance_au(jd) * self.au)
    }

    pub(crate) fn sun_if_active(&self, t: f64) -> Result<Option<[f64; 3]>> {
        if self.eclipse_active() {
            let s = self.sun_position(t)?;
            Ok(Some([s.x, s.y, s.z]))
        } else {
            Ok(None)
        }
    }
}

/// RTN control input: throttle and unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub throttle: f64,
    pub direction: Vector3<f64>,
}

impl ControlInput {
    pub fn coast() -> Self {
        Self {
            throttle: 0.0,
            direction: Vector3::zeros(),
        }
    }
}

/// Drift vector `A` and Gauss variational matrix `B` (rows p, f, g, h, k, L;
/// columns radial, transverse, normal).
pub(crate) fn gve<D: Real>(x: &[D; 6], mu: f64) -> ([D; 6], [[D; 3]; 6]) {
    let [p, f, g, h, k, l] = *x;
    let (sl, cl) = l.sin_cos();
    let zero = D::from(0.0);
    let w = f * cl + g * sl + 1.0;
    let s2 = h * h + k * k + 1.0;
    let q = (p / mu).sqrt();
    let hk = h * sl - k * cl;

    let mut a = [zero; 6];
    a[5] = (p * mu).sqrt() * (w / p).powi(2);

    let b = [
        [zero, q * p * 2.0 / w, zero],
        [q * sl, q * ((w + 1.0) * cl + f) / w, -(q * hk * g / w)],
        [-(q * cl), q * ((w + 1.0) * sl + g) / w, q * hk * f / w],
        [zero, zero, q * s2 * cl / (w * 2.0)],
        [zero, zero, q * s2 * sl / (w * 2.0)],
        [zero, zero, q * hk / w],
    ];
    (a, b)
}

/// J2 acceleration in RTN at radius `r`. Only the latitude-dependent part of
/// the radial term carries the `(1 + h² + k²)²` factor.
pub(crate) fn j2_rtn<D: Real>(x: &[D; 6], r: D, mu: f64, j2: f64, r_body: f64) -> [D; 3] {
    let (h, k) = (x[3], x[4]);
    let (sl, cl) = x[5].sin_cos();
    let s2 = h * h + k * k + 1.0;
    let base = D::from(-1.5 * mu * j2 * r_body * r_body) / r.powi(4);
    let coef = base / (s2 * s2);
    let hs = h * sl - k * cl;
    let hc = h * cl + k * sl;
    [
        base - coef * hs * hs * 12.0,
        coef * hs * hc * 8.0,
        coef * hs * (-(h * h) - k * k + 1.0) * 4.0,
    ]
}

pub(crate) fn position<D: Real>(x: &[D; 6]) -> [D; 3] {
    let [p, f, g, h, k, l] = *x;
    let (sl, cl) = l.sin_cos();
    let w = f * cl + g * sl + 1.0;
    let r = p / w;
    let s2 = h * h + k * k + 1.0;
    let alpha2 = h * h - k * k;
    let hk2 = h * k * 2.0;
    let scale = r / s2;
    [
        (cl + alpha2 * cl + hk2 * sl) * scale,
        (sl - alpha2 * sl + hk2 * cl) * scale,
        (h * sl - k * cl) * 2.0 * scale,
    ]
}

/// Smooth shadow indicator: 1 when the body hides the Sun, 0 in sunlight.
///
/// With `ζ` the angle between the directions to the body centre and to the
/// Sun as seen from `pos`, and `a_S`, `a_B` the apparent angular radii of Sun
/// and body, `ν = ½(1 − tanh(½·c_t·(ζ − c_s·(a_S + a_B))))`.
pub(crate) fn shadow<D: Real>(pos: &[D; 3], sun: &[f64; 3], params: &ShadowParams, r_body: f64, r_sun: f64) -> D {
    let rel: [D; 3] = std::array::from_fn(|i| -pos[i] + sun[i]);
    let r = (pos[0] * pos[0] + pos[1] * pos[1] + pos[2] * pos[2]).sqrt();
    let d = (rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2]).sqrt();
    let dot = -(pos[0] * rel[0] + pos[1] * rel[1] + pos[2] * rel[2]);
    let cross = [
        pos[2] * rel[1] - pos[1] * rel[2],
        pos[0] * rel[2] - pos[2] * rel[0],
        pos[1] * rel[0] - pos[0] * rel[1],
    ];
    let c2 = cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2];
    let c = if c2.re() > 0.0 { c2.sqrt() } else { D::from(0.0) };
    let zeta = c.atan2(dot);
    let a_body = if r.re() > r_body { (D::from(r_body) / r).asin() } else { D::from(std::f64::consts::FRAC_PI_2) };
    let a_sun = (D::from(r_sun) / d).asin();
    let x = (zeta - (a_body + a_sun) * params.c_s) * (0.5 * params.c_t);
    (-x.tanh() + 1.0) * 0.5
}

/// Thrust availability `1 − εν` at the given state.
pub(crate) fn availability<D: Real>(x: &[D; 6], sun: Option<&[f64; 3]>, pc: &PerturbationConfig) -> D {
    match sun {
        Some(sun) => -(shadow(&position(x), sun, &pc.shadow, pc.r_body, pc.sun_radius()) * pc.eclipse_scale) + 1.0,
        None => D::from(1.0),
    }
}

fn lift(x: &MeeState) -> [f64; 6] {
    x.to_array()
}

pub fn gve_matrices(x: &MeeState, mu: f64) -> Result<(SVector<f64, 6>, SMatrix<f64, 6, 3>)> {
    x.validate()?;
    let (a, b) = gve(&lift(x), mu);
    Ok((SVector::from(a), SMatrix::from_fn(|i, j| b[i][j])))
}

/// Rocket equation: mass after expending `dv`.
pub fn mass_from_dv(dv: f64, prop: &Propulsion) -> Result<f64> {
    if dv < 0.0 {
        return Err(Error::NegativeDeltaV(dv));
    }
    Ok(prop.m0 * (-dv / prop.isp_g0).exp())
}

pub fn j2_accel(x: &MeeState, r: f64, pc: &PerturbationConfig) -> Result<Vector3<f64>> {
    if !(r > 0.0) {
        return Err(Error::DegenerateOrbit(format!("radius {r} <= 0")));
    }
    let a = j2_rtn(&lift(x), r, pc.mu, pc.j2, pc.r_body);
    Ok(Vector3::from(a))
}

/// Eclipse factor ν ∈ [0, 1] at canonical time `t`; zero when eclipses are disabled.
pub fn eclipse_factor(x: &MeeState, t: f64, pc: &PerturbationConfig) -> Result<f64> {
    if !pc.eclipse_enabled {
        return Ok(0.0);
    }
    let sun = pc.sun_position(t)?;
    Ok(shadow(&position(&lift(x)), &[sun.x, sun.y, sun.z], &pc.shadow, pc.r_body, pc.sun_radius()))
}

pub fn state_rate(
    x: &MeeState,
    t: f64,
    u: &ControlInput,
    prop: &Propulsion,
    pc: &PerturbationConfig,
) -> Result<SVector<f64, 6>> {
    x.validate()?;
    let xa = lift(x);
    let (a, b) = gve(&xa, pc.mu);
    let sun = pc.sun_if_active(t)?;
    let avail: f64 = availability(&xa, sun.as_ref(), pc);
    let mut acc = u.direction * (prop.accel() * avail * u.throttle);
    if pc.j2_enabled {
        acc += Vector3::from(j2_rtn(&xa, x.p / x.w(), pc.mu, pc.j2, pc.r_body));
    }
    Ok(SVector::from_fn(|i, _| {
        a[i] + b[i][0] * acc.x + b[i][1] * acc.y + b[i][2] * acc.z
    }))
}

/// Low-precision solar direction (mean elements, ~0.01°) in the Earth
/// mean-equator frame, for a Julian date.
pub fn sun_direction(jd: f64) -> Vector3<f64> {
    let n = jd - 2_451_545.0;
    let mean_lon = (280.460 + 0.985_647_4 * n).to_radians();
    let anomaly = (357.528 + 0.985_600_3 * n).to_radians();
    let ecl_lon = mean_lon + (1.915f64.to_radians()) * anomaly.sin() + (0.020f64.to_radians()) * (2.0 * anomaly).sin();
    let obliquity = (23.439 - 4.0e-7 * n).to_radians();
    let (sl, cl) = ecl_lon.sin_cos();
    Vector3::new(cl, obliquity.cos() * sl, obliquity.sin() * sl)
}

/// Earth-Sun distance in AU from the same low-precision almanac.
pub fn sun_distance_au(jd: f64) -> f64 {
    let g = (357.528 + 0.985_600_3 * (jd - 2_451_545.0)).to_radians();
    1.000_14 - 0.016_71 * g.cos() - 0.000_14 * (2.0 * g).cos()
}

/// Julian date of a UTC calendar instant (seconds since the Unix epoch).
pub fn julian_date_from_unix(seconds: f64) -> f64 {
    seconds / DAY + 2_440_587.5
}
