//! Closed-form bias bounds built from a drift certificate.
//!
//! For a certified model the workload-bias function (the solution of the
//! reward bias equation that vanishes on the atom) satisfies, for every
//! reward `g` with `|g| <= f`,
//!
//! ```text
//!     |h(x)|  <=  (1 + pi_g_abs / f_inf) * ( V0(x) + b T / xi_T )
//! ```
//!
//! where `pi_g_abs` is (an upper bound on) the absolute stationary mean of
//! `g`, and `(T, xi_T)` is a *return witness*: from any empty-workload
//! state, the chain is back in the atom `T` time units later with
//! probability at least `xi_T`. When the empty-workload set *is* the atom
//! (single arrival phase), the witness degenerates (`T` can shrink to 0)
//! and the additive term disappears:
//!
//! ```text
//!     |h(x)|  <=  (1 + b pi_alpha / f_inf) * V0(x).
//! ```
//!
//! The generic substitution for `pi_g_abs` is `b * pi(C)`: integrating the
//! drift inequality against the stationary law gives `<pi, f> <= b pi(C)`,
//! and `|<pi, g>| <= <pi, f>`. For the queues here `pi(C) = 1 - rho` (the
//! stationary empty-workload probability, by work conservation); callers
//! holding an exact transform value may pass something sharper.
//!
//! Witnesses for multi-phase models come from an explicit construction:
//! sit at zero workload for `t0` without arrivals, then absorb `M` arrivals
//! whose services fit in `x0` each and drain between them, ending in the
//! atom phase. That event has probability at least
//!
//! ```text
//!     xi_T = H(x0)^M * min_i [ e^{C t0} (D e^{C x0})^M ]_{i, i0},
//!     T = t0 + M x0,
//! ```
//!
//! computable with matrix exponentials. When every off-atom phase jumps
//! directly to the atom phase at a positive rate (`C[i][i0] > 0`), letting
//! `T -> 0` in the simpler one-factor witness collapses `T / xi_T` to
//! `1 / min_{i != i0} C[i][i0]`, which [`map_gi1_witness_special`] returns
//! without any exponentials.

use serde::Serialize;
use thiserror::Error;

use crate::arrival::MarkovArrivalProcess;
use crate::drift::{DriftCertificate, Regime};
use crate::linalg::{matrix_exponential, LinalgError};
use crate::service::ServiceLaw;
use crate::tol::Tolerances;

/// Errors from witness construction and bound assembly.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BoundError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("the small set is larger than the atom; the additive-free bound needs a single phase")]
    SmallSetNotAtom,
    #[error("certificate and witness disagree: {0}")]
    MismatchedModel(String),
    #[error("service law puts no mass on [0, {x0}]")]
    ZeroServiceMass { x0: f64 },
    #[error("witness probability underflows (log10 xi = {log10_xi:.1}); increase t0 or x0")]
    DegenerateXi { log10_xi: f64 },
    #[error("phase {phase} has no direct transition into the atom phase (rate {rate})")]
    ConditionViolated { phase: usize, rate: f64 },
    #[error("every grid point produced a degenerate witness")]
    AllDegenerate,
    #[error("{name} = {value} is not a probability")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("invalid witness parameter: {0}")]
    InvalidWitness(String),
    #[error("pi_g_abs = {value} must be a finite nonnegative real")]
    InvalidPiG { value: f64 },
    #[error("atom phase {i0} is out of range for {phases} phases")]
    AtomPhaseOutOfRange { i0: usize, phases: usize },
}

/// A certified return event: from any empty-workload state the chain is in
/// the atom `T` time units later with probability at least `xi_T`. Only the
/// ratio `T / xi_T` enters the bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReturnWitness {
    /// The explicit multi-phase construction; stores its `(t0, x0)` inputs
    /// so recomputation is bit-identical.
    MapFormula {
        t0: f64,
        x0: f64,
        time: f64,
        xi: f64,
    },
    /// The `T -> 0` limit under positive direct return rates; stores the
    /// limiting ratio directly (0 in the single-phase collapse, where the
    /// additive term vanishes entirely).
    SpecialCaseLimit { ratio: f64 },
    /// Caller-provided `(T, xi_T)`.
    UserSupplied { time: f64, xi: f64 },
}

impl ReturnWitness {
    /// Validated constructor for a caller-provided witness.
    pub fn user_supplied(time: f64, xi: f64) -> Result<Self, BoundError> {
        if !(time > 0.0 && time.is_finite()) {
            return Err(BoundError::InvalidWitness(format!(
                "time {time} must be a positive real"
            )));
        }
        if !(xi > 0.0 && xi <= 1.0) {
            return Err(BoundError::InvalidWitness(format!(
                "xi {xi} must lie in (0, 1]"
            )));
        }
        Ok(Self::UserSupplied { time, xi })
    }

    /// The penalty ratio `T / xi_T` entering the additive bound term.
    pub fn ratio(&self) -> f64 {
        match self {
            Self::MapFormula { time, xi, .. } | Self::UserSupplied { time, xi } => time / xi,
            Self::SpecialCaseLimit { ratio } => *ratio,
        }
    }
}

/// An evaluated bias bound: `bound(x) = prefactor * (V0(x) + additive)`.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub certificate: DriftCertificate,
    /// `None` on the additive-free (atom) route.
    pub witness: Option<ReturnWitness>,
    /// `1 + pi_g_abs / f_inf`.
    pub prefactor: f64,
    /// `b T / xi_T` (0 on the atom route).
    pub additive: f64,
    /// The value used for the absolute stationary reward mean.
    pub pi_g_abs: f64,
}

impl BoundReport {
    /// The bound on `|h(w, phase)|`, valid for every reward `|g| <= f`.
    pub fn evaluate(&self, w: f64, phase: usize) -> f64 {
        self.prefactor * (self.certificate.potential_gap(w, phase) + self.additive)
    }

    /// The bound for the rescaled family `|g| <= c * f`, `c > 0`: bias is
    /// linear in the reward, so the bound simply scales.
    pub fn evaluate_scaled(&self, w: f64, phase: usize, c: f64) -> f64 {
        c * self.evaluate(w, phase)
    }
}

/// Assembles the witness-based bound
/// `(1 + pi_g_abs/f_inf) (V0 + b T/xi_T)` for `|g| <= f`.
///
/// `pi_g_abs` should be `|<pi, g>|` or any upper bound for it; the generic
/// choice is `b * pi(C)` (and `b` alone when `pi(C)` is unknown).
pub fn general_bound(
    cert: &DriftCertificate,
    witness: &ReturnWitness,
    pi_g_abs: f64,
) -> Result<BoundReport, BoundError> {
    if !(pi_g_abs >= 0.0 && pi_g_abs.is_finite()) {
        return Err(BoundError::InvalidPiG { value: pi_g_abs });
    }
    match witness {
        ReturnWitness::MapFormula { t0, x0, time, .. } => {
            if cert.regime != Regime::MapExponential {
                return Err(BoundError::MismatchedModel(
                    "an explicit multi-phase witness requires a phase-exponential certificate"
                        .into(),
                ));
            }
            // T = t0 + M x0 encodes the phase count; it must match.
            let m = cert.phases() as f64;
            if (time - t0 - m * x0).abs() > 1e-9 * time.max(1.0) {
                return Err(BoundError::MismatchedModel(format!(
                    "witness time {time} is not t0 + {m} x0; built for a different phase count"
                )));
            }
        }
        ReturnWitness::SpecialCaseLimit { .. } => {
            if cert.regime != Regime::MapExponential {
                return Err(BoundError::MismatchedModel(
                    "the direct-return limit witness requires a phase-exponential certificate"
                        .into(),
                ));
            }
        }
        ReturnWitness::UserSupplied { .. } => {}
    }
    let prefactor = 1.0 + pi_g_abs / cert.f_inf;
    Ok(BoundReport {
        certificate: cert.clone(),
        witness: Some(witness.clone()),
        prefactor,
        additive: cert.b * witness.ratio(),
        pi_g_abs,
    })
}

/// Assembles the additive-free bound `(1 + b pi_alpha/f_inf) V0` available
/// when the empty-workload set is the atom itself (single phase).
///
/// `pi_alpha` is the stationary atom mass; `1 - rho` for these queues.
pub fn atom_bound(cert: &DriftCertificate, pi_alpha: f64) -> Result<BoundReport, BoundError> {
    if !cert.small_set_is_atom() {
        return Err(BoundError::SmallSetNotAtom);
    }
    if !(0.0..=1.0).contains(&pi_alpha) || !pi_alpha.is_finite() {
        return Err(BoundError::InvalidProbability {
            name: "pi_alpha",
            value: pi_alpha,
        });
    }
    let pi_g_abs = cert.b * pi_alpha;
    Ok(BoundReport {
        certificate: cert.clone(),
        witness: None,
        prefactor: 1.0 + pi_g_abs / cert.f_inf,
        additive: 0.0,
        pi_g_abs,
    })
}

/// Builds the explicit return witness for a multi-phase model:
/// `T = t0 + M x0`, `xi_T = H(x0)^M min_i [e^{C t0} (D e^{C x0})^M]_{i,i0}`.
///
/// `xi_T` is assembled in log space so that deep but nonzero products
/// survive; it degenerates (error) below 1e-300.
pub fn map_gi1_witness(
    map: &MarkovArrivalProcess,
    law: &ServiceLaw,
    i0: usize,
    t0: f64,
    x0: f64,
    tol: &Tolerances,
) -> Result<ReturnWitness, BoundError> {
    let m = map.phases();
    if i0 >= m {
        return Err(BoundError::AtomPhaseOutOfRange { i0, phases: m });
    }
    if !(t0 > 0.0 && t0.is_finite()) || !(x0 > 0.0 && x0.is_finite()) {
        return Err(BoundError::InvalidWitness(format!(
            "t0 = {t0}, x0 = {x0} must be positive reals"
        )));
    }
    let h_mass = 1.0 - law.tail(x0);
    if h_mass <= 0.0 {
        return Err(BoundError::ZeroServiceMass { x0 });
    }
    let exp_t0 = matrix_exponential(map.c(), t0, tol.structural * 0.1)?;
    let exp_x0 = matrix_exponential(map.c(), x0, tol.structural * 0.1)?;
    let step = map.d().matmul(&exp_x0)?;
    let mut product = exp_t0;
    for _ in 0..m {
        product = product.matmul(&step)?;
    }
    let min_entry = (0..m).fold(f64::INFINITY, |acc, i| acc.min(product.get(i, i0)));
    if min_entry <= 0.0 {
        return Err(BoundError::DegenerateXi {
            log10_xi: f64::NEG_INFINITY,
        });
    }
    let log10_xi = (m as f64) * h_mass.log10() + min_entry.log10();
    if log10_xi < tol.xi_floor.log10() {
        return Err(BoundError::DegenerateXi { log10_xi });
    }
    // The formula can nominally exceed 1 for large arrival rates at tiny
    // (t0, x0); cap at 1 to keep the probability interpretation.
    let xi = (h_mass.powi(m as i32) * min_entry).min(1.0);
    Ok(ReturnWitness::MapFormula {
        t0,
        x0,
        time: t0 + m as f64 * x0,
        xi,
    })
}

/// Builds the limit witness available when every off-atom phase has a
/// positive direct transition rate into the atom phase: the penalty ratio
/// collapses to `1 / min_{i != i0} C[i][i0]` (and to 0 with one phase only,
/// where the additive term vanishes).
///
/// The minimum deliberately excludes `i = i0`: the diagonal entry is
/// negative and the shrinking-`T` argument concerns starts outside the atom
/// phase only.
pub fn map_gi1_witness_special(
    map: &MarkovArrivalProcess,
    i0: usize,
) -> Result<ReturnWitness, BoundError> {
    let m = map.phases();
    if i0 >= m {
        return Err(BoundError::AtomPhaseOutOfRange { i0, phases: m });
    }
    if m == 1 {
        return Ok(ReturnWitness::SpecialCaseLimit { ratio: 0.0 });
    }
    let mut min_rate = f64::INFINITY;
    for i in (0..m).filter(|&i| i != i0) {
        let rate = map.c().get(i, i0);
        if rate <= 0.0 {
            return Err(BoundError::ConditionViolated { phase: i, rate });
        }
        min_rate = min_rate.min(rate);
    }
    Ok(ReturnWitness::SpecialCaseLimit {
        ratio: 1.0 / min_rate,
    })
}

/// Minimizes `T / xi_T` over a `(t0, x0)` grid; deterministic, with ties
/// broken toward the lexicographically smallest `(t0, x0)`.
pub fn optimize_witness(
    map: &MarkovArrivalProcess,
    law: &ServiceLaw,
    i0: usize,
    t0_grid: &[f64],
    x0_grid: &[f64],
    tol: &Tolerances,
) -> Result<ReturnWitness, BoundError> {
    let mut best: Option<(f64, ReturnWitness)> = None;
    for &t0 in t0_grid {
        for &x0 in x0_grid {
            match map_gi1_witness(map, law, i0, t0, x0, tol) {
                Ok(witness) => {
                    let ratio = witness.ratio();
                    if best.as_ref().is_none_or(|(r, _)| ratio < *r) {
                        best = Some((ratio, witness));
                    }
                }
                Err(BoundError::DegenerateXi { .. }) | Err(BoundError::ZeroServiceMass { .. }) => {}
                Err(other) => return Err(other),
            }
        }
    }
    best.map(|(_, w)| w).ok_or(BoundError::AllDegenerate)
}
