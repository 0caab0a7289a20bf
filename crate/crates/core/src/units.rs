//! Canonical unit systems and element conversions.
//!
//! All solver internals work in canonical units: lengths in `L_u`, times in
//! `T_u`, masses in `M_u = m0`. The two presets cover the heliocentric
//! (AU / Julian year) and geocentric (Earth radius / day) regimes.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::dynamics::MeeState;
use crate::error::{Error, Result};

/// Standard gravity, m/s².
pub const G0: f64 = 9.80665;
/// Sun gravitational parameter, km³/s².
pub const MU_SUN: f64 = 1.327_124_400_18e11;
/// Earth gravitational parameter, km³/s².
pub const MU_EARTH: f64 = 3.986e5;
/// Earth J2 zonal coefficient.
pub const J2_EARTH: f64 = 1.082_626_68e-3;
/// Earth equatorial radius used by the J2 and shadow models, km.
pub const R_EARTH: f64 = 6378.1370;
/// Astronomical unit used as the heliocentric length unit, km.
pub const AU: f64 = 149_597_870.66;
/// Solar radius, km.
pub const R_SUN: f64 = 695_700.0;
/// Geocentric length unit, km.
pub const GEOCENTRIC_LENGTH: f64 = 6378.1363;
pub const DAY: f64 = 86_400.0;
pub const JULIAN_YEAR: f64 = 365.25 * DAY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Heliocentric,
    Geocentric,
}

/// Scale factors from canonical to physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitSystem {
    /// km per `L_u`.
    pub length_unit: f64,
    /// s per `T_u`.
    pub time_unit: f64,
    /// kg per `M_u`.
    pub mass_unit: f64,
    /// Gravitational parameter in `L_u³/T_u²`.
    pub mu_canonical: f64,
}

impl UnitSystem {
    pub fn new(length_unit: f64, time_unit: f64, mass_unit: f64, mu_km3_s2: f64) -> Self {
        Self {
            length_unit,
            time_unit,
            mass_unit,
            mu_canonical: mu_km3_s2 * time_unit * time_unit / length_unit.powi(3),
        }
    }

    pub fn heliocentric(m0_kg: f64) -> Self {
        Self::new(AU, JULIAN_YEAR, m0_kg, MU_SUN)
    }

    pub fn geocentric(m0_kg: f64) -> Self {
        Self::new(GEOCENTRIC_LENGTH, DAY, m0_kg, MU_EARTH)
    }

    pub fn for_regime(regime: Regime, m0_kg: f64) -> Self {
        match regime {
            Regime::Heliocentric => Self::heliocentric(m0_kg),
            Regime::Geocentric => Self::geocentric(m0_kg),
        }
    }

    /// Thrust in newtons to canonical force `M_u·L_u/T_u²`.
    pub fn force_to_canonical(&self, newtons: f64) -> f64 {
        newtons * self.time_unit * self.time_unit / (self.mass_unit * self.length_unit * 1000.0)
    }

    /// Acceleration in km/s² to `L_u/T_u²`.
    pub fn accel_to_canonical(&self, km_s2: f64) -> f64 {
        km_s2 * self.time_unit * self.time_unit / self.length_unit
    }

    /// Speed in m/s to `L_u/T_u`.
    pub fn speed_to_canonical(&self, m_s: f64) -> f64 {
        m_s * 1e-3 * self.time_unit / self.length_unit
    }

    pub fn speed_to_si(&self, canonical: f64) -> f64 {
        canonical * self.length_unit / self.time_unit * 1000.0
    }

    pub fn days_to_canonical(&self, days: f64) -> f64 {
        days * DAY / self.time_unit
    }

    pub fn canonical_to_days(&self, t: f64) -> f64 {
        t * self.time_unit / DAY
    }

    pub fn length_to_canonical(&self, km: f64) -> f64 {
        km / self.length_unit
    }
}

/// Inertial position and velocity in canonical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl CartesianState {
    pub fn new(position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self { position, velocity }
    }

    /// Specific two-body energy.
    pub fn energy(&self, mu: f64) -> f64 {
        0.5 * self.velocity.norm_squared() - mu / self.position.norm()
    }

    pub fn angular_momentum(&self) -> Vector3<f64> {
        self.position.cross(&self.velocity)
    }
}

pub fn mee_to_cartesian(x: &MeeState, mu: f64) -> Result<CartesianState> {
    if !(x.p > 0.0) {
        return Err(Error::NonPositiveSemiLatus(x.p));
    }
    let (sl, cl) = x.l.sin_cos();
    let w = 1.0 + x.f * cl + x.g * sl;
    if !(w > 0.0) {
        return Err(Error::DegenerateOrbit(format!("w = {w} <= 0")));
    }
    let (h, k, f, g) = (x.h, x.k, x.f, x.g);
    let alpha2 = h * h - k * k;
    let s2 = 1.0 + h * h + k * k;
    let r = x.p / w;
    let hk2 = 2.0 * h * k;

    let position = Vector3::new(
        cl + alpha2 * cl + hk2 * sl,
        sl - alpha2 * sl + hk2 * cl,
        2.0 * (h * sl - k * cl),
    ) * (r / s2);

    let vscale = -(mu / x.p).sqrt() / s2;
    let velocity = Vector3::new(
        sl + alpha2 * sl - hk2 * cl + g - 2.0 * f * h * k + alpha2 * g,
        -cl + alpha2 * cl + hk2 * sl - f + 2.0 * g * h * k + alpha2 * f,
        -2.0 * (h * cl + k * sl + f * h + g * k),
    ) * vscale;

    Ok(CartesianState { position, velocity })
}

/// Inverse of [`mee_to_cartesian`]; the returned true longitude lies in `[0, 2π)`.
pub fn cartesian_to_mee(s: &CartesianState, mu: f64) -> Result<MeeState> {
    let r = s.position;
    let v = s.velocity;
    let rmag = r.norm();
    if !(rmag > 0.0) {
        return Err(Error::DegenerateOrbit("zero position vector".into()));
    }
    let hvec = r.cross(&v);
    let hmag = hvec.norm();
    if hmag <= 1e-14 * rmag * v.norm() {
        return Err(Error::DegenerateOrbit("zero angular momentum".into()));
    }
    let hhat = hvec / hmag;
    let denom = 1.0 + hhat.z;
    if denom < 1e-12 {
        return Err(Error::RetrogradeSingularity);
    }
    let p = hmag * hmag / mu;
    let k = hhat.x / denom;
    let h = -hhat.y / denom;

    let s2 = 1.0 + h * h + k * k;
    let fhat = Vector3::new(1.0 - k * k + h * h, 2.0 * h * k, -2.0 * k) / s2;
    let ghat = Vector3::new(2.0 * h * k, 1.0 + k * k - h * h, 2.0 * h) / s2;

    let ecc = v.cross(&hvec) / mu - r / rmag;
    let f = ecc.dot(&fhat);
    let g = ecc.dot(&ghat);
    let l = r.dot(&ghat).atan2(r.dot(&fhat)).rem_euclid(std::f64::consts::TAU);

    Ok(MeeState { p, f, g, h, k, l })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn circular_equatorial_orbit() {
        let x = MeeState::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let c = mee_to_cartesian(&x, 1.0).unwrap();
        assert_relative_eq!(c.position, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(c.velocity, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);

        let back = cartesian_to_mee(&c, 1.0).unwrap();
        assert_relative_eq!(back.to_array().as_slice(), x.to_array().as_slice(), epsilon = 1e-15);
    }

    #[test]
    fn tempel1_departure_is_near_one_au() {
        let x0 = MeeState::new(1.000064, -0.003764, 0.015791, -1.211e-5, -4.514e-6, 5.51356);
        let mu = UnitSystem::heliocentric(1000.0).mu_canonical;
        let c = mee_to_cartesian(&x0, mu).unwrap();
        assert!((c.position.norm() - 1.0).abs() < 0.02);

        let back = cartesian_to_mee(&c, mu).unwrap();
        for (a, b) in back.to_array().iter().zip(x0.to_array()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_velocity_is_degenerate() {
        let s = CartesianState::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros());
        assert!(matches!(cartesian_to_mee(&s, 1.0), Err(Error::DegenerateOrbit(_))));
    }

    #[test]
    fn retrograde_equatorial_is_rejected() {
        let s = CartesianState::new(Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, -1.0, 0.0));
        assert!(matches!(cartesian_to_mee(&s, 1.0), Err(Error::RetrogradeSingularity)));
    }

    #[test]
    fn invalid_elements_are_rejected() {
        let bad_p = MeeState::new(-1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(mee_to_cartesian(&bad_p, 1.0), Err(Error::NonPositiveSemiLatus(_))));
        let hyperbolic = MeeState::new(1.0, -1.5, 0.0, 0.0, 0.0, 0.0);
        assert!(matches!(mee_to_cartesian(&hyperbolic, 1.0), Err(Error::DegenerateOrbit(_))));
    }

    #[test]
    fn presets_match_reference_units() {
        let helio = UnitSystem::heliocentric(1000.0);
        assert_eq!(helio.length_unit, 149_597_870.66);
        assert_eq!(helio.time_unit, 365.25 * 86400.0);
        assert_eq!(helio.mass_unit, 1000.0);
        // close to 4π² for AU / Julian year
        assert!((helio.mu_canonical - 39.4769).abs() < 1e-3);

        let geo = UnitSystem::geocentric(100.0);
        assert_eq!(geo.length_unit, 6378.1363);
        assert_eq!(geo.time_unit, 86400.0);
    }

    #[test]
    fn thrust_and_exhaust_speed_scale_dimensionally() {
        let u = UnitSystem::heliocentric(1000.0);
        // 0.6 N on 1000 kg is 0.6e-3 m/s² = 0.6e-6 km/s²
        let expected = 0.6e-6 * u.time_unit * u.time_unit / u.length_unit;
        assert_relative_eq!(u.force_to_canonical(0.6), expected, max_relative = 1e-15);
        assert_relative_eq!(u.accel_to_canonical(0.6e-6), expected, max_relative = 1e-15);

        let c = u.speed_to_canonical(3000.0 * G0);
        assert_relative_eq!(c, 29.41995 * u.time_unit / u.length_unit, max_relative = 1e-15);
        assert_relative_eq!(u.speed_to_si(c), 3000.0 * G0, max_relative = 1e-14);
    }
}
