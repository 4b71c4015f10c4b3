//! Declarative model files.
//!
//! A model file is one JSON object that selects exactly one queue model and
//! carries everything a command run needs: the arrival side (`lambda` for
//! Poisson input, the `c`/`d` rate matrices for Markov-modulated input), the
//! service law, the workload capacity (a number, or the string `"inf"` for
//! the uncapped queue), an optional regime request with manual certificate
//! parameters, optional tolerance overrides, and an optional seed.
//!
//! Parsing is strict: unknown keys are rejected everywhere (top level,
//! service object, tolerance object), every number must be a finite double,
//! and [`ModelFile::validate`] enforces that the fields present actually
//! belong to the declared kind, so a file cannot silently mix the two
//! models. Construction helpers then turn the validated file into the core
//! objects ([`MarkovArrivalProcess`], [`WclModel`]) with their own
//! structural checks.

use std::fmt;
use std::str::FromStr;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arrival::{MapError, MarkovArrivalProcess};
use crate::linalg::{LinalgError, Matrix};
use crate::service::ServiceLaw;
use crate::tol::Tolerances;
use crate::wcl::{WclError, WclModel};

/// Errors raised while validating or building from a model file.
#[derive(Debug, Error)]
pub enum ModelError {
    /// Field rules for the declared kind are violated.
    #[error("invalid model file: {0}")]
    Invalid(String),
    /// Matrix shape problems while assembling the arrival process.
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    /// The arrival process failed its structural checks.
    #[error(transparent)]
    Map(#[from] MapError),
    /// The capacity-limited queue failed its structural checks.
    #[error(transparent)]
    Wcl(#[from] WclError),
}

/// Which queue model the file describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Markov-modulated arrivals, general service, no capacity limit.
    MapGi1,
    /// Poisson arrivals, general service, workload capacity limit
    /// (infinite capacity describes the plain M/GI/1 queue).
    Mg1Wcl,
}

/// Requested drift regime for scalar (Poisson-input) models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeChoice {
    Light,
    Moderate,
    Polynomial,
}

impl FromStr for RegimeChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "light" => Ok(Self::Light),
            "moderate" => Ok(Self::Moderate),
            "polynomial" => Ok(Self::Polynomial),
            other => Err(format!(
                "unknown regime '{other}' (expected light, moderate, or polynomial)"
            )),
        }
    }
}

impl fmt::Display for RegimeChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Light => "light",
            Self::Moderate => "moderate",
            Self::Polynomial => "polynomial",
        };
        f.write_str(s)
    }
}

/// Workload capacity: a positive double or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capacity(pub f64);

impl Serialize for Capacity {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            serializer.serialize_str("inf")
        } else {
            serializer.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Capacity {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct CapacityVisitor;

        impl Visitor<'_> for CapacityVisitor {
            type Value = Capacity;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a finite number or the string \"inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Capacity, E> {
                Ok(Capacity(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Capacity, E> {
                Ok(Capacity(v as f64))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Capacity, E> {
                Ok(Capacity(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Capacity, E> {
                if v == "inf" {
                    Ok(Capacity(f64::INFINITY))
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(CapacityVisitor)
    }
}

/// Parsed model file. Field presence rules are enforced by
/// [`ModelFile::validate`], not by the parser, so error messages can name
/// the offending field and kind together.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub kind: ModelKind,
    /// Poisson arrival rate (`mg1_wcl` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Phase-transition rates without arrivals, row-major (`map_gi1` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    /// Phase-transition rates with an arrival, row-major (`map_gi1` only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Vec<Vec<f64>>>,
    pub service: ServiceLaw,
    /// Workload capacity (`mg1_wcl` only); `"inf"` for the uncapped queue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub capacity: Option<Capacity>,
    /// Drift regime request (`mg1_wcl` only; Markov-modulated input has a
    /// single regime).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<RegimeChoice>,
    /// Manual drift exponent for the exponential regimes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Manual stretched-exponential coefficient (moderate regime).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Manual potential shift (moderate/polynomial regimes) or return-time
    /// spacing (`map_gi1` witness).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    /// Manual inflated-load target (moderate/polynomial regimes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_tilde: Option<f64>,
    /// Manual potential degree (polynomial regime).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_tilde: Option<f64>,
    /// Manual return-time offset (`map_gi1` witness).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
    /// Tolerance overrides; omitted fields keep their defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    /// Seed for every simulation the run performs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ModelFile {
    /// Checks that the fields present belong to the declared kind and that
    /// required ones are there. Numeric plausibility (rates positive, load
    /// below one) is left to the construction helpers.
    pub fn validate(&self) -> Result<(), ModelError> {
        match self.kind {
            ModelKind::MapGi1 => {
                self.require("c", self.c.is_some())?;
                self.require("d", self.d.is_some())?;
                self.forbid("lambda", self.lambda.is_some())?;
                self.forbid("capacity", self.capacity.is_some())?;
                self.forbid("regime", self.regime.is_some())?;
                self.forbid("epsilon", self.epsilon.is_some())?;
                self.forbid("rho_tilde", self.rho_tilde.is_some())?;
                self.forbid("kappa_tilde", self.kappa_tilde.is_some())?;
            }
            ModelKind::Mg1Wcl => {
                self.require("lambda", self.lambda.is_some())?;
                self.require("capacity", self.capacity.is_some())?;
                self.forbid("c", self.c.is_some())?;
                self.forbid("d", self.d.is_some())?;
                self.forbid("t0", self.t0.is_some())?;
            }
        }
        Ok(())
    }

    fn require(&self, name: &str, present: bool) -> Result<(), ModelError> {
        if present {
            Ok(())
        } else {
            Err(ModelError::Invalid(format!(
                "{} requires the '{name}' field",
                self.kind_name()
            )))
        }
    }

    fn forbid(&self, name: &str, present: bool) -> Result<(), ModelError> {
        if present {
            Err(ModelError::Invalid(format!(
                "{} does not accept the '{name}' field",
                self.kind_name()
            )))
        } else {
            Ok(())
        }
    }

    fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::MapGi1 => "map_gi1",
            ModelKind::Mg1Wcl => "mg1_wcl",
        }
    }

    /// Effective tolerances: the file's overrides or the defaults.
    pub fn tolerances(&self) -> Tolerances {
        self.tolerances.clone().unwrap_or_default()
    }

    /// Builds the arrival process of a `map_gi1` file.
    pub fn arrival_process(&self) -> Result<MarkovArrivalProcess, ModelError> {
        self.validate()?;
        let (c, d) = match (&self.c, &self.d) {
            (Some(c), Some(d)) => (c.clone(), d.clone()),
            _ => {
                return Err(ModelError::Invalid(
                    "arrival matrices are only available for map_gi1".to_string(),
                ))
            }
        };
        let c = Matrix::from_rows(c)?;
        let d = Matrix::from_rows(d)?;
        Ok(MarkovArrivalProcess::new(c, d, &self.tolerances())?)
    }

    /// Builds the capacity-limited queue of an `mg1_wcl` file.
    pub fn wcl_model(&self) -> Result<WclModel, ModelError> {
        self.validate()?;
        let (lambda, capacity) = match (self.lambda, self.capacity) {
            (Some(l), Some(cap)) => (l, cap.0),
            _ => {
                return Err(ModelError::Invalid(
                    "a capacity-limited queue needs 'lambda' and 'capacity'".to_string(),
                ))
            }
        };
        Ok(WclModel::new(lambda, self.service.clone(), capacity)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<ModelFile, serde_json::Error> {
        serde_json::from_str(s)
    }

    const MG1: &str = r#"{
        "kind": "mg1_wcl",
        "lambda": 0.5,
        "service": {"family": "exponential", "rate": 1.0},
        "capacity": 10.0,
        "regime": "light",
        "theta": 0.4,
        "seed": 42
    }"#;

    const MAP: &str = r#"{
        "kind": "map_gi1",
        "c": [[-2.0, 1.0], [0.5, -1.5]],
        "d": [[1.0, 0.0], [0.0, 1.0]],
        "service": {"family": "exponential", "rate": 2.0},
        "theta": 0.5,
        "t0": 0.0,
        "x0": 1.0,
        "seed": 7
    }"#;

    #[test]
    fn parses_and_validates_both_kinds() {
        let mg1 = parse(MG1).unwrap();
        mg1.validate().unwrap();
        assert_eq!(mg1.kind, ModelKind::Mg1Wcl);
        assert_eq!(mg1.capacity.unwrap().0, 10.0);
        let wcl = mg1.wcl_model().unwrap();
        assert_eq!(wcl.lambda(), 0.5);

        let map = parse(MAP).unwrap();
        map.validate().unwrap();
        let process = map.arrival_process().unwrap();
        assert_eq!(process.phases(), 2);
    }

    #[test]
    fn infinite_capacity_spelled_as_string() {
        let file = parse(
            r#"{"kind": "mg1_wcl", "lambda": 0.5,
                "service": {"family": "exponential", "rate": 1.0},
                "capacity": "inf"}"#,
        )
        .unwrap();
        assert!(file.capacity.unwrap().0.is_infinite());
        // Round trip keeps the spelling.
        let json = serde_json::to_string(&file).unwrap();
        assert!(json.contains("\"capacity\":\"inf\""));
        let again: ModelFile = serde_json::from_str(&json).unwrap();
        assert!(again.capacity.unwrap().0.is_infinite());
    }

    #[test]
    fn unknown_keys_rejected_everywhere() {
        assert!(parse(
            r#"{"kind": "mg1_wcl", "lambda": 0.5, "bogus": 1,
                "service": {"family": "exponential", "rate": 1.0},
                "capacity": 1.0}"#
        )
        .is_err());
        assert!(parse(
            r#"{"kind": "mg1_wcl", "lambda": 0.5,
                "service": {"family": "exponential", "rate": 1.0, "shape": 2.0},
                "capacity": 1.0}"#
        )
        .is_err());
        assert!(parse(
            r#"{"kind": "mg1_wcl", "lambda": 0.5,
                "service": {"family": "exponential", "rate": 1.0},
                "capacity": 1.0, "tolerances": {"quadabs": 1e-9}}"#
        )
        .is_err());
    }

    #[test]
    fn kind_field_rules_enforced() {
        // Arrival matrices on a Poisson model.
        let mixed = parse(
            r#"{"kind": "mg1_wcl", "lambda": 0.5, "c": [[-1.0]],
                "service": {"family": "exponential", "rate": 1.0},
                "capacity": 1.0}"#,
        )
        .unwrap();
        assert!(matches!(mixed.validate(), Err(ModelError::Invalid(_))));

        // Missing capacity.
        let missing = parse(
            r#"{"kind": "mg1_wcl", "lambda": 0.5,
                "service": {"family": "exponential", "rate": 1.0}}"#,
        )
        .unwrap();
        assert!(matches!(missing.validate(), Err(ModelError::Invalid(_))));

        // Scalar-regime knobs on a Markov-modulated model.
        let wrong = parse(
            r#"{"kind": "map_gi1", "c": [[-1.0]], "d": [[1.0]], "epsilon": 0.1,
                "service": {"family": "exponential", "rate": 2.0}}"#,
        )
        .unwrap();
        assert!(matches!(wrong.validate(), Err(ModelError::Invalid(_))));
    }

    #[test]
    fn malformed_matrices_surface_structural_errors() {
        let ragged = parse(
            r#"{"kind": "map_gi1", "c": [[-2.0, 1.0], [0.5]],
                "d": [[1.0, 0.0], [0.0, 1.0]],
                "service": {"family": "exponential", "rate": 2.0}}"#,
        )
        .unwrap();
        assert!(ragged.arrival_process().is_err());

        let bad_rows = parse(
            r#"{"kind": "map_gi1", "c": [[-2.0, 1.0], [0.5, -1.5]],
                "d": [[2.0, 0.0], [0.0, 1.0]],
                "service": {"family": "exponential", "rate": 2.0}}"#,
        )
        .unwrap();
        assert!(matches!(
            bad_rows.arrival_process(),
            Err(ModelError::Map(_))
        ));
    }

    #[test]
    fn tolerance_overrides_apply_partially() {
        let file = parse(
            r#"{"kind": "mg1_wcl", "lambda": 0.5,
                "service": {"family": "exponential", "rate": 1.0},
                "capacity": 1.0, "tolerances": {"drift_check": 1e-8}}"#,
        )
        .unwrap();
        let tol = file.tolerances();
        assert_eq!(tol.drift_check, 1e-8);
        assert_eq!(tol.residual, Tolerances::default().residual);
    }

    #[test]
    fn regime_strings_parse_and_display() {
        assert_eq!(
            "light".parse::<RegimeChoice>().unwrap(),
            RegimeChoice::Light
        );
        assert_eq!(
            "polynomial".parse::<RegimeChoice>().unwrap().to_string(),
            "polynomial"
        );
        assert!("heavy".parse::<RegimeChoice>().is_err());
    }
}
