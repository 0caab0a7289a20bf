//! Mission files: parsing, validation and conversion to a canonical [`Problem`].
//!
//! Boundary elements are given with `p` already in the regime's length unit
//! (AU heliocentric, Earth radii geocentric); everything else is SI-like.

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dynamics::{julian_date_from_unix, MeeState, PerturbationConfig, Propulsion, ShadowParams};
use crate::error::{Error, Result};
use crate::problem::Problem;
use crate::units::{Regime, UnitSystem, AU, G0, J2_EARTH, R_EARTH};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    #[serde(default)]
    pub j2: bool,
    #[serde(default)]
    pub eclipse: bool,
}

/// Optional solver overrides.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub tol: Option<f64>,
    pub ode_tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub k_schedule: Option<Vec<f64>>,
    pub delta_eps: Option<f64>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub name: String,
    pub regime: Regime,
    pub x0: MeeState,
    pub x1: MeeState,
    /// Full revolutions added to the target's true longitude.
    #[serde(default)]
    pub revolutions: u32,
    pub tof_days: f64,
    /// Upper bracket for the time-of-flight guess; defaults to `tof_days`.
    #[serde(default)]
    pub tof_upper_days: Option<f64>,
    pub isp_s: f64,
    #[serde(rename = "t_max_N")]
    pub t_max_n: f64,
    pub m0_kg: f64,
    /// UTC epoch of departure (RFC 3339).
    #[serde(default)]
    pub epoch: Option<String>,
    #[serde(default)]
    pub flags: Flags,
    /// Let the time-optimal solver change the revolution count as the time of flight shrinks.
    #[serde(default)]
    pub adapt_revolutions: bool,
    #[serde(default)]
    pub solver: SolverOverrides,
}

const BUILTINS: [(&str, &str); 3] = [
    ("tempel1", include_str!("../fixtures/tempel1.json")),
    ("dionysus", include_str!("../fixtures/dionysus.json")),
    ("gtoc9", include_str!("../fixtures/gtoc9.json")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

pub fn builtin(name: &str) -> Option<MissionConfig> {
    BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| parse_mission(s).expect("bundled fixture is valid"))
}

pub fn parse_mission(text: &str) -> Result<MissionConfig> {
    let cfg: MissionConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a mission from a JSON file, or a bundled mission by name.
pub fn load_mission(path_or_name: &str) -> Result<MissionConfig> {
    let path = Path::new(path_or_name);
    if !path.exists() {
        if let Some(cfg) = builtin(path_or_name) {
            return Ok(cfg);
        }
    }
    parse_mission(&std::fs::read_to_string(path)?)
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be positive and finite (got {v})")))
    }
}

fn check_state(field: &str, x: &MeeState) -> Result<()> {
    if !x.to_array().iter().all(|v| v.is_finite()) {
        return Err(Error::validation(field, "elements must be finite"));
    }
    x.validate().map_err(|e| Error::validation(field, e.to_string()))
}

impl MissionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::validation("name", "must not be empty"));
        }
        check_state("x0", &self.x0)?;
        check_state("x1", &self.x1)?;
        positive("tof_days", self.tof_days)?;
        if let Some(t) = self.tof_upper_days {
            positive("tof_upper_days", t)?;
        }
        positive("isp_s", self.isp_s)?;
        positive("t_max_N", self.t_max_n)?;
        positive("m0_kg", self.m0_kg)?;
        if self.flags.eclipse && self.regime != Regime::Geocentric {
            return Err(Error::validation("flags.eclipse", "eclipses require the geocentric regime"));
        }
        if self.flags.j2 && self.regime != Regime::Geocentric {
            return Err(Error::validation("flags.j2", "J2 requires the geocentric regime"));
        }
        match (&self.epoch, self.flags.eclipse) {
            (None, true) => return Err(Error::validation("epoch", "required when eclipses are enabled")),
            (Some(_), _) => {
                self.epoch_jd()?;
            }
            _ => {}
        }
        let s = &self.solver;
        if let Some(t) = s.tol {
            positive("solver.tol", t)?;
        }
        if let Some(t) = s.ode_tol {
            positive("solver.ode_tol", t)?;
        }
        if s.max_iter == Some(0) {
            return Err(Error::validation("solver.max_iter", "must be at least 1"));
        }
        if let Some(k) = &s.k_schedule {
            validate_k_schedule(k).map_err(|m| Error::validation("solver.k_schedule", m))?;
        }
        if let Some(d) = s.delta_eps {
            if !(d > 0.0 && d <= 1.0) {
                return Err(Error::validation("solver.delta_eps", "must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    pub fn epoch_jd(&self) -> Result<Option<f64>> {
        self.epoch
            .as_deref()
            .map(|s| {
                let dt: DateTime<Utc> = s
                    .parse::<DateTime<chrono::FixedOffset>>()
                    .map_err(|e| Error::validation("epoch", e.to_string()))?
                    .with_timezone(&Utc);
                Ok(julian_date_from_unix(dt.timestamp() as f64 + dt.timestamp_subsec_nanos() as f64 * 1e-9))
            })
            .transpose()
    }

    pub fn units(&self) -> UnitSystem {
        UnitSystem::for_regime(self.regime, self.m0_kg)
    }

    /// Canonical problem with the configured perturbations fully active.
    pub fn canonicalize(&self) -> Result<Problem> {
        self.validate()?;
        let units = self.units();
        let mut x1 = self.x1;
        x1.l += std::f64::consts::TAU * self.revolutions as f64;
        let prop = Propulsion {
            t_max: units.force_to_canonical(self.t_max_n),
            isp_g0: units.speed_to_canonical(self.isp_s * G0),
            m0: 1.0,
        };
        let pc = PerturbationConfig {
            mu: units.mu_canonical,
            j2_enabled: self.flags.j2,
            j2: J2_EARTH,
            r_body: units.length_to_canonical(R_EARTH),
            eclipse_enabled: self.flags.eclipse,
            eclipse_scale: if self.flags.eclipse { 1.0 } else { 0.0 },
            shadow: ShadowParams::default(),
            epoch_jd: self.epoch_jd()?,
            time_unit_days: units.canonical_to_days(1.0),
            au: units.length_to_canonical(AU),
        };
        let problem = Problem {
            name: self.name.clone(),
            x0: self.x0,
            x1,
            tof: units.days_to_canonical(self.tof_days),
            prop,
            pc,
            units,
            adapt_revolutions: self.adapt_revolutions,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn tof_upper(&self) -> f64 {
        self.units().days_to_canonical(self.tof_upper_days.unwrap_or(self.tof_days))
    }
}

pub(crate) fn validate_k_schedule(k: &[f64]) -> std::result::Result<(), String> {
    if k.is_empty() {
        return Err("must contain at least one value".into());
    }
    if !k.iter().all(|v| (0.0..1.0).contains(v)) {
        return Err("values must lie in [0, 1)".into());
    }
    if !k.windows(2).all(|w| w[0] < w[1]) {
        return Err("values must be strictly ascending".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_fixtures_load() {
        for name in builtin_names() {
            let cfg = builtin(name).unwrap();
            cfg.canonicalize().unwrap();
        }
        let t = builtin("tempel1").unwrap();
        assert_eq!((t.isp_s, t.t_max_n, t.m0_kg, t.tof_days), (3000.0, 0.6, 1000.0, 420.0));
    }

    #[test]
    fn canonical_tempel1() {
        let p = builtin("tempel1").unwrap().canonicalize().unwrap();
        assert_eq!(p.prop.m0, 1.0);
        assert!((p.prop.accel() - 3.994236468873547).abs() < 1e-9);
        assert!((p.prop.isp_g0 - 6.206124525863622).abs() < 1e-9);
        assert!((p.x1.l - (4.96395 + std::f64::consts::TAU)).abs() < 1e-15);
    }

    #[test]
    fn gtoc9_epoch_is_julian_date() {
        let cfg = builtin("gtoc9").unwrap();
        assert_eq!(cfg.epoch_jd().unwrap(), Some(2_460_309.5));
        let p = cfg.canonicalize().unwrap();
        assert!(p.pc.j2_enabled && p.pc.eclipse_enabled);
        assert!((p.pc.r_body - 6378.1370 / 6378.1363).abs() < 1e-15);
    }

    fn field_of(e: Error) -> String {
        match e {
            Error::Validation { field, .. } => field,
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn missing_epoch_with_eclipse() {
        let mut cfg = builtin("gtoc9").unwrap();
        cfg.epoch = None;
        assert_eq!(field_of(cfg.validate().unwrap_err()), "epoch");
    }

    #[test]
    fn negative_isp() {
        let mut cfg = builtin("tempel1").unwrap();
        cfg.isp_s = -3000.0;
        assert_eq!(field_of(cfg.validate().unwrap_err()), "isp_s");
    }

    #[test]
    fn bad_json_is_a_parse_error() {
        assert!(matches!(parse_mission("{ not json"), Err(Error::Parse(_))));
        assert!(matches!(parse_mission(r#"{"name": "x"}"#), Err(Error::Parse(_))));
    }

    #[test]
    fn k_schedule_must_ascend() {
        let mut cfg = builtin("tempel1").unwrap();
        cfg.solver.k_schedule = Some(vec![0.0, 0.5, 0.4]);
        assert_eq!(field_of(cfg.validate().unwrap_err()), "solver.k_schedule");
        cfg.solver.k_schedule = Some(vec![0.0, 1.0]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn canonicalization_preserves_dimensionless_ratios() {
        let cfg = builtin("dionysus").unwrap();
        let p = cfg.canonicalize().unwrap();
        // a·T / c is dimensionless
        let si = cfg.t_max_n / cfg.m0_kg * cfg.tof_days * 86400.0 / (cfg.isp_s * G0);
        let can = p.prop.accel() * p.tof / p.prop.isp_g0;
        assert!((si - can).abs() <= 1e-14 * si);
    }
}
