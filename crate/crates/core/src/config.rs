//! SCP and transcription settings.

use serde::{Deserialize, Serialize};

use crate::dynamics::SatelliteParams;
use crate::transcription::ScalingMap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("malformed configuration JSON: {0}")]
    Json(String),
}

/// How the SCP subproblems scale ω, r and u. Time is always scaled by the
/// initial final-time guess.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Physical units for ω, r and u.
    #[default]
    Physical,
    /// ω by the largest principal-axis rate the rotors can absorb, r by
    /// `r_max`, u by `u_max`.
    Range,
}

impl Scaling {
    pub fn map(self, p: &SatelliteParams, t_ref: f64) -> ScalingMap {
        match self {
            Scaling::Physical => ScalingMap {
                st: t_ref,
                ..ScalingMap::identity()
            },
            Scaling::Range => ScalingMap::from_params(p, t_ref),
        }
    }
}

/// Optional tightening of the actuator limits and an optional body-rate bound.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScpConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N_max")]
    pub n_max: usize,
    pub w_vc: f64,
    pub w_tr: f64,
    pub eps_vc: f64,
    pub eps_tr: f64,
    pub gamma: f64,
    pub rho: f64,
    /// Fixed horizon of the multi-target problem, s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_f: Option<f64>,
    pub t_min_floor: f64,
    #[serde(default)]
    pub bounds: BoundsOverride,
    #[serde(default)]
    pub scaling: Scaling,
    /// Hard attitude-error tolerance; switches the multi-target problem to
    /// its constraint formulation when either tolerance is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_w: Option<f64>,
}

impl Default for ScpConfig {
    fn default() -> Self {
        Self::min_time()
    }
}

impl ScpConfig {
    pub fn min_time() -> Self {
        Self {
            k: 30,
            n_max: 20,
            w_vc: 1e5,
            w_tr: 1e-1,
            eps_vc: 1e-5,
            eps_tr: 1e-5,
            gamma: 1e5,
            rho: 1.0,
            t_f: None,
            t_min_floor: 0.1,
            bounds: BoundsOverride::default(),
            scaling: Scaling::Physical,
            eps_q: None,
            eps_w: None,
        }
    }

    pub fn multi_target() -> Self {
        Self {
            eps_vc: 1e-3,
            eps_tr: 1e-4,
            ..Self::min_time()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.k < 2 {
            return bad("K must be at least 2");
        }
        if self.n_max < 1 {
            return bad("N_max must be at least 1");
        }
        for (name, v) in [
            ("w_vc", self.w_vc),
            ("w_tr", self.w_tr),
            ("eps_vc", self.eps_vc),
            ("eps_tr", self.eps_tr),
            ("gamma", self.gamma),
            ("rho", self.rho),
            ("t_min_floor", self.t_min_floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive and finite"));
            }
        }
        if self.t_f.is_some_and(|t| !(t.is_finite() && t > 0.0)) {
            return bad("t_f must be positive");
        }
        let b = &self.bounds;
        for v in [b.r_max, b.u_max, b.w_max].into_iter().flatten() {
            if !(v > 0.0) {
                return bad("bounds overrides must be positive");
            }
        }
        for v in [self.eps_q, self.eps_w].into_iter().flatten() {
            if !(v >= 0.0) {
                return bad("eps_q and eps_w must be nonnegative");
            }
        }
        Ok(())
    }

    /// Parses JSON, filling absent keys from `base`.
    pub fn from_json_with_base(json: &str, base: &ScpConfig) -> Result<Self, ConfigError> {
        let mut merged = serde_json::to_value(base).map_err(|e| ConfigError::Json(e.to_string()))?;
        let over: serde_json::Value =
            serde_json::from_str(json).map_err(|e| ConfigError::Json(e.to_string()))?;
        let serde_json::Value::Object(over) = over else {
            return Err(ConfigError::Json("expected a JSON object".into()));
        };
        let obj = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in over {
            obj.insert(k, v);
        }
        let cfg: ScpConfig = serde_json::from_value(merged).map_err(|e| ConfigError::Json(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn constraint_mode(&self) -> bool {
        self.eps_q.is_some() || self.eps_w.is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ScpConfig::min_time().validate().unwrap();
        ScpConfig::multi_target().validate().unwrap();
        assert_eq!(ScpConfig::multi_target().eps_tr, 1e-4);
    }

    #[test]
    fn json_overlay_keeps_base_values() {
        let cfg = ScpConfig::from_json_with_base(r#"{"K": 12, "w_tr": 0.5}"#, &ScpConfig::multi_target()).unwrap();
        assert_eq!(cfg.k, 12);
        assert_eq!(cfg.w_tr, 0.5);
        assert_eq!(cfg.eps_vc, 1e-3);
        let round: ScpConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(ScpConfig::from_json_with_base(r#"{"K": 1}"#, &ScpConfig::min_time()).is_err());
        assert!(ScpConfig::from_json_with_base(r#"{"w_vc": -1}"#, &ScpConfig::min_time()).is_err());
        assert!(ScpConfig::from_json_with_base(r#"{"typo": 3}"#, &ScpConfig::min_time()).is_err());
        assert!(ScpConfig::from_json_with_base("[1]", &ScpConfig::min_time()).is_err());
    }
}
