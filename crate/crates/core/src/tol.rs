//! Centralized numeric tolerances.
//!
//! Every module that validates structure, iterates to convergence, or
//! truncates a series reads its thresholds from one [`Tolerances`] record so
//! that a single configuration governs the whole pipeline and tests can
//! tighten or relax it in one place.

use serde::{Deserialize, Serialize};

/// Numeric tolerances shared across validation, linear algebra, quadrature,
/// and series truncation.
///
/// The defaults are chosen so that structural checks sit well below the
/// noise floor of double arithmetic on well-scaled inputs, while iterative
/// residuals leave two orders of magnitude of headroom above it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Exact structural identities (generator row sums, probability mass
    /// normalization). Violations beyond this are input errors, not noise.
    pub structural: f64,
    /// Iterative residuals: Perron pairs, stationary vectors, and the
    /// truncation mass left out of the uniformized exponential series.
    pub residual: f64,
    /// Absolute tolerance for adaptive quadrature.
    pub quad_abs: f64,
    /// Relative tolerance for adaptive quadrature.
    pub quad_rel: f64,
    /// Relative slack allowed when re-checking a drift inequality on a grid;
    /// absorbs quadrature error on both sides of the inequality.
    pub drift_check: f64,
    /// Smallest usable drift floor `inf f`; certificates below this would
    /// blow up the bound prefactor past any useful magnitude.
    pub f_inf_floor: f64,
    /// Smallest usable return-probability witness; values below this are
    /// treated as degenerate (the additive term `b T / xi` overflows).
    pub xi_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            structural: 1e-12,
            residual: 1e-10,
            quad_abs: 1e-11,
            quad_rel: 1e-10,
            drift_check: 1e-6,
            f_inf_floor: 1e-12,
            xi_floor: 1e-300,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_ordered_sensibly() {
        let t = Tolerances::default();
        // Structural identities are held tighter than iterative residuals,
        // which are tighter than grid re-checks.
        assert!(t.structural < t.residual);
        assert!(t.residual < t.drift_check);
        assert!(t.quad_abs < t.quad_rel || t.quad_abs < t.drift_check);
        assert!(t.xi_floor > 0.0 && t.f_inf_floor > 0.0);
    }

    #[test]
    fn deserializes_partial_records_with_defaults() {
        let t: Tolerances = serde_json::from_str(r#"{"drift_check": 1e-7}"#).unwrap();
        assert_eq!(t.drift_check, 1e-7);
        assert_eq!(t.structural, 1e-12);
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(serde_json::from_str::<Tolerances>(r#"{"driftcheck": 1e-7}"#).is_err());
    }
}
