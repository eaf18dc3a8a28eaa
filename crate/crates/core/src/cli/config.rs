//! JSON system configuration.
//!
//! ```json
//! {
//!   "n": 2,
//!   "truncation_degree": 12,
//!   "subsystems": [
//!     { "name": "F1",
//!       "coefficients": [ { "component": 1, "alpha": [1, 0], "re": -1.0, "im": 0.0 } ],
//!       "tail_l1": null }
//!   ],
//!   "scheme": { "kind": "poly", "xi": null },
//!   "rho_request": null,
//!   "simulation": { "dt": 0.01, "horizon": 20.0, "trials": 100, "points": 50,
//!                   "seed": 0, "min_dwell": 0.1, "max_dwell": 1.0 }
//! }
//! ```
//!
//! `component` is 1-based; `alpha` has length `n` and total degree ≥ 1.
//! `tail_l1`, when present, holds the exact ℓ¹ norm of each component's full
//! series (needed for analytic fields truncated at `truncation_degree`).

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::certificate::SchemeChoice;
use crate::multiindex::MultiIndex;
use crate::switchsim::AuditOptions;
use crate::vectorfield::{FieldError, PolyVectorField, SwitchedFamily};
use crate::C64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Json(#[from] serde_json::Error),
    #[error("subsystem {subsystem}: {message}")]
    Term { subsystem: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub component: usize,
    pub alpha: Vec<u32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub coefficients: Vec<Coefficient>,
    #[serde(default)]
    pub tail_l1: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub dt: f64,
    pub horizon: f64,
    pub trials: usize,
    pub points: usize,
    pub seed: u64,
    pub min_dwell: f64,
    pub max_dwell: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let a = AuditOptions::default();
        SimulationConfig {
            dt: a.dt,
            horizon: a.horizon,
            trials: a.trials,
            points: a.points,
            seed: a.seed,
            min_dwell: a.min_dwell,
            max_dwell: a.max_dwell,
        }
    }
}

impl SimulationConfig {
    pub fn audit_options(&self) -> AuditOptions {
        AuditOptions {
            trials: self.trials,
            points: self.points,
            horizon: self.horizon,
            dt: self.dt,
            min_dwell: self.min_dwell,
            max_dwell: self.max_dwell,
            seed: self.seed,
            ..AuditOptions::default()
        }
    }
}

fn default_scheme() -> SchemeChoice {
    SchemeChoice::Poly { xi: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n: usize,
    pub truncation_degree: u32,
    pub subsystems: Vec<SubsystemConfig>,
    #[serde(default = "default_scheme")]
    pub scheme: SchemeChoice,
    #[serde(default)]
    pub rho_request: Option<f64>,
    #[serde(default)]
    pub simulation: SimulationConfig,
}

impl SystemConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: SystemConfig = serde_json::from_str(text)?;
        cfg.family()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// Builds and validates the switched family.
    pub fn family(&self) -> Result<SwitchedFamily, ConfigError> {
        let n = self.n;
        if n == 0 {
            return Err(ConfigError::Invalid("n must be at least 1".into()));
        }
        if self.truncation_degree == 0 {
            return Err(ConfigError::Invalid("truncation_degree must be at least 1".into()));
        }
        if self.subsystems.is_empty() {
            return Err(ConfigError::Invalid("at least one subsystem is required".into()));
        }
        let mut fields = Vec::with_capacity(self.subsystems.len());
        for (i, s) in self.subsystems.iter().enumerate() {
            let bad = |message: String| ConfigError::Term { subsystem: i + 1, message };
            let mut seen = BTreeSet::new();
            let mut terms = Vec::with_capacity(s.coefficients.len());
            for c in &s.coefficients {
                if c.component == 0 || c.component > n {
                    return Err(bad(format!("component {} outside 1..={n}", c.component)));
                }
                if c.alpha.len() != n {
                    return Err(bad(format!("exponent vector {:?} must have length {n}", c.alpha)));
                }
                if c.alpha.iter().sum::<u32>() == 0 {
                    return Err(bad(format!("constant term in component {}: the origin must be an equilibrium", c.component)));
                }
                if !seen.insert((c.component, c.alpha.clone())) {
                    return Err(bad(format!("duplicate coefficient for component {} and exponent {:?}", c.component, c.alpha)));
                }
                terms.push((c.component - 1, MultiIndex::new(c.alpha.clone()), C64::new(c.re, c.im)));
            }
            let mut f = PolyVectorField::from_terms(n, terms)?;
            if let Some(t) = &s.tail_l1 {
                f = f.with_tail_l1(t.clone()).map_err(|e| bad(e.to_string()))?;
            }
            fields.push(f);
        }
        Ok(SwitchedFamily::new(fields)?)
    }

    /// Config describing `family`; coefficients are listed per component in
    /// graded order.
    pub fn from_family(family: &SwitchedFamily, truncation_degree: u32, scheme: SchemeChoice) -> Self {
        let subsystems = family
            .subsystems()
            .iter()
            .enumerate()
            .map(|(i, f)| SubsystemConfig {
                name: Some(format!("F{}", i + 1)),
                coefficients: f
                    .terms()
                    .map(|(l, a, c)| Coefficient { component: l + 1, alpha: a.exponents().to_vec(), re: c.re, im: c.im })
                    .collect(),
                tail_l1: f.tail_l1().map(<[f64]>::to_vec),
            })
            .collect();
        SystemConfig {
            n: family.dim(),
            truncation_degree,
            subsystems,
            scheme,
            rho_request: None,
            simulation: SimulationConfig::default(),
        }
    }
}
