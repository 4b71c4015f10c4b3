//! Stationary-distance bound for the workload-capacity-limited queue.
//!
//! Capping the workload of an M/GI/1 queue at `L` (an arrival is accepted
//! only while the workload plus its service stays at or below `L`) perturbs
//! the stationary law from `pi` to `pi_L`. For any weight function `g` with
//! `0 <= g <= f`, where `f` is the rate function of a verified drift
//! certificate for the uncapped queue, the weighted gap obeys
//!
//! ```text
//! |<pi, g> - <pi_L, g>|
//!   <= lambda (1 + b (1 - rho) / f_inf)
//!      * integral_0^L pi(dx) inner(x),            where
//! inner(x) = integral_{(L - x, inf)} H(dy) { V0(x + y) + V0(x) }.
//! ```
//!
//! The inner integral charges each rejected arrival (service draw `y`
//! overshooting the remaining room `L - x`) the centered potential at the
//! state the uncapped chain would have jumped to plus the potential at the
//! state the capped chain stays in. The outer average is against the
//! uncapped stationary workload law, which the load decomposition writes as
//! a geometric mixture of equilibrium-law convolution powers:
//!
//! ```text
//! pi = (1 - rho) sum_{m >= 0} rho^m Hre^{*m},       rho = lambda E[S],
//! ```
//!
//! turning the bound into a series over `m` whose terms this module
//! evaluates with controlled truncation and quadrature:
//!
//! * truncation: `inner` is nondecreasing on `[0, L]` and
//!   `Hre^{*m}([0, L]) <= 1`, so every discarded term is at most
//!   `rho^m * inner(L)`; the geometric remainder is added to the reported
//!   value, making it a rigorous upper bound at any truncation point;
//! * inner integrals: the Stieltjes form is converted to a tail-function
//!   integral, `integral_a^inf H(dy) G(y) = G(a) H̄(a) +
//!   integral_a^inf H̄(y) G'(y) dy` (point-mass laws are summed exactly),
//!   and the remaining smooth integral is done by adaptive quadrature;
//! * outer integrals: grid sums against the shared
//!   [`EquilibriumGrid`](crate::service::EquilibriumGrid) convolution
//!   tables, with a half-grid Richardson disagreement as the resolution
//!   estimate; the grid is refined until the total quadrature allowance
//!   fits in half of the requested tolerance (the other half is the
//!   truncation budget).
//!
//! Series terms are summed in ascending `m` with compensated addition, so
//! results are bitwise reproducible; the terms are independent once the
//! tables exist, which is what makes the per-term breakdown meaningful.
//!
//! The reported [`DistanceBound::value`] folds both error allowances in:
//! `value = sum of kept terms + truncation remainder + quadrature
//! allowance`, so runs at different tolerances bracket the same quantity
//! from above and agree to within the looser tolerance.

use serde::Serialize;
use thiserror::Error;

use crate::drift::{CertForm, DriftCertificate, Regime};
use crate::quad::{integrate_to_inf, QuadError, QuadResult};
use crate::service::{equilibrium_tables, GridSpec, ServiceError, ServiceLaw, TailEnvelope};
use crate::tol::Tolerances;

/// Grid-refinement ladder for the outer Stieltjes sums (cells per table;
/// each count is even so the half grid is a strict sub-grid).
const GRID_LADDER: [usize; 5] = [128, 256, 512, 1024, 2048];

/// Hard cap on the series truncation index; reaching it means the geometric
/// remainder cannot meet the requested tolerance (load too close to 1).
const MAX_TERMS: usize = 100_000;

/// Errors from the distance-bound computation.
#[derive(Debug, Error)]
pub enum WclError {
    /// Service-law validation or equilibrium-table construction failed.
    #[error(transparent)]
    Service(#[from] ServiceError),
    /// Quadrature failed for a reason other than divergence.
    #[error(transparent)]
    Quad(QuadError),
    /// The overshoot integrand `H̄(y) V0'(x + y)` does not decay: the
    /// certificate's potential grows at least as fast as the service tail
    /// thins out, so the bound is vacuous for this law/certificate pair.
    #[error("inner overshoot integral diverges: {detail}")]
    DivergentInnerIntegral { detail: String },
    /// Truncation plus quadrature allowances cannot be pushed below the
    /// requested tolerance within the refinement budget.
    #[error("requested tolerance {requested:.3e} is unreachable; achieved {achieved:.3e}")]
    ToleranceUnreachable { requested: f64, achieved: f64 },
    /// The certificate carries phase structure; the capacity-limited queue
    /// needs a scalar workload potential (light, moderate, or polynomial).
    #[error("certificate regime {regime:?} has no scalar workload potential")]
    WrongRegime { regime: Regime },
    /// Offered load at or beyond saturation.
    #[error("offered load rho = {rho} must be below 1")]
    Unstable { rho: f64 },
    /// Malformed input (nonpositive rate, capacity, or tolerance; probe
    /// point outside `[0, L]`).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// M/GI/1 queue with a workload capacity limit.
///
/// `capacity` may be `f64::INFINITY`, in which case the capped and uncapped
/// queues coincide and the distance bound is exactly zero.
#[derive(Debug, Clone)]
pub struct WclModel {
    lambda: f64,
    law: ServiceLaw,
    capacity: f64,
}

impl WclModel {
    /// Validates the law, the arrival rate, the capacity, and stability of
    /// the uncapped queue (`rho < 1`; the capped queue is always stable,
    /// but the decomposition of `pi` it is compared against is not).
    pub fn new(lambda: f64, law: ServiceLaw, capacity: f64) -> Result<Self, WclError> {
        law.validate()?;
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(WclError::InvalidParameter(format!(
                "arrival rate must be positive and finite, got {lambda}"
            )));
        }
        if !(capacity > 0.0) {
            return Err(WclError::InvalidParameter(format!(
                "capacity must be positive (possibly infinite), got {capacity}"
            )));
        }
        let rho = lambda * law.mean();
        if rho >= 1.0 {
            return Err(WclError::Unstable { rho });
        }
        Ok(Self {
            lambda,
            law,
            capacity,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn law(&self) -> &ServiceLaw {
        &self.law
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    /// Offered load `lambda * E[S]` of the uncapped queue.
    pub fn rho(&self) -> f64 {
        self.lambda * self.law.mean()
    }
}

/// Result of [`wcl_distance_bound`]: a rigorous upper bound on the weighted
/// stationary distance together with its error decomposition.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceBound {
    /// Upper bound on `|<pi, g> - <pi_L, g>|` for every `0 <= g <= f`:
    /// kept series terms plus the truncation remainder plus the quadrature
    /// allowance.
    pub value: f64,
    /// Largest mixture index kept in the series.
    pub m_used: usize,
    /// Geometric remainder bound for the discarded terms (at most half the
    /// requested tolerance).
    pub truncation_error: f64,
    /// Total quadrature allowance across inner integrals, grid sums, and
    /// table resolution (at most half the requested tolerance).
    pub quadrature_error: f64,
    /// Kept series terms in ascending `m`, each already carrying its
    /// `lambda * prefactor * (1 - rho) * rho^m` weight; exported with the
    /// report so the truncation decision is auditable.
    pub terms: Vec<f64>,
}

/// Overshoot integral `integral_{(L - x, inf)} H(dy) {V0(x + y) + V0(x)}`
/// for a scalar certificate potential, with an error estimate.
///
/// Point-mass laws are summed exactly. For all other families the Stieltjes
/// integral is transformed to tail form,
///
/// ```text
/// (V0(L) + V0(x)) H̄(L - x) + integral_{L - x}^inf H̄(y) V0'(x + y) dy,
/// ```
///
/// which adaptive quadrature handles without touching a density. The
/// transformation needs `H̄(y) V0(x + y) -> 0`; when the potential grows too
/// fast for the law's tail the result is
/// [`WclError::DivergentInnerIntegral`], detected either by the a priori
/// growth comparison or by the quadrature's divergence guard.
pub fn inner_tail_integral(
    law: &ServiceLaw,
    cert: &DriftCertificate,
    x: f64,
    capacity: f64,
    tol: &Tolerances,
) -> Result<QuadResult, WclError> {
    law.validate()?;
    require_scalar(cert)?;
    if !capacity.is_finite() || capacity <= 0.0 {
        return Err(WclError::InvalidParameter(format!(
            "inner integral needs a finite positive capacity, got {capacity}"
        )));
    }
    if !(0.0..=capacity).contains(&x) {
        return Err(WclError::InvalidParameter(format!(
            "probe point {x} outside [0, {capacity}]"
        )));
    }
    check_tail_beats_potential(law, cert)?;

    let room = capacity - x;
    let gap_here = cert.potential_gap(x, 0);

    // A point mass either clears the remaining room or it does not; the
    // admission rule accepts a draw exactly filling the room.
    if let ServiceLaw::Deterministic { value } = law {
        let v = if *value > room {
            cert.potential_gap(x + value, 0) + gap_here
        } else {
            0.0
        };
        return Ok(QuadResult {
            value: v,
            error: 0.0,
        });
    }

    let boundary = (cert.potential_gap(capacity, 0) + gap_here) * law.tail(room);
    let scale = law.mean().max(room.max(1.0) * 0.25);
    let tail = integrate_to_inf(
        &|y| law.tail(y) * cert.potential_slope(x + y, 0),
        room,
        scale,
        tol.quad_abs,
        tol.quad_rel,
    )
    .map_err(quad_to_wcl)?;
    Ok(QuadResult {
        value: boundary + tail.value,
        error: tail.error,
    })
}

/// Upper bound on the weighted stationary distance between the capped and
/// uncapped queues, for every weight `0 <= g <= f` of the certificate.
///
/// `tol` is the total error budget: the series truncation remainder and the
/// quadrature allowance each get half, and both are folded into
/// [`DistanceBound::value`] so the result stays an upper bound. The grid
/// for the outer sums is refined along a fixed ladder; if the allowance
/// still exceeds its budget at the finest grid the run fails with
/// [`WclError::ToleranceUnreachable`] rather than under-reporting.
pub fn wcl_distance_bound(
    model: &WclModel,
    cert: &DriftCertificate,
    tol: f64,
) -> Result<DistanceBound, WclError> {
    require_scalar(cert)?;
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(WclError::InvalidParameter(format!(
            "tolerance must be positive and finite, got {tol}"
        )));
    }
    let rho = model.rho();
    if rho >= 1.0 {
        return Err(WclError::Unstable { rho });
    }
    let capacity = model.capacity;
    if capacity.is_infinite() {
        // No arrival is ever rejected: pi_L = pi.
        return Ok(DistanceBound {
            value: 0.0,
            m_used: 0,
            truncation_error: 0.0,
            quadrature_error: 0.0,
            terms: Vec::new(),
        });
    }
    check_tail_beats_potential(&model.law, cert)?;

    let quad_tol = Tolerances::default();
    let prefactor = 1.0 + cert.b * (1.0 - rho) / cert.f_inf;
    let scale = model.lambda * prefactor;

    // x-independent majorant of the inner integral: V0 is increasing, so
    // inner(x) <= inner(L), and each convolution power has mass <= 1 on
    // [0, L]. Its own quadrature error is absorbed upward.
    let sup = inner_tail_integral(&model.law, cert, capacity, capacity, &quad_tol)?;
    let sup_term = sup.value + sup.error;

    let mut m_used = 0usize;
    while scale * rho.powi(m_used as i32 + 1) * sup_term > tol / 2.0 {
        m_used += 1;
        if m_used > MAX_TERMS {
            return Err(WclError::ToleranceUnreachable {
                requested: tol,
                achieved: scale * rho.powi(m_used as i32) * sup_term,
            });
        }
    }
    let truncation_error = scale * rho.powi(m_used as i32 + 1) * sup_term;

    let mut achieved = f64::INFINITY;
    for &cells in &GRID_LADDER {
        let (terms, quadrature_error) =
            match series_terms(model, cert, m_used, cells, scale, &quad_tol) {
                Ok(pair) => pair,
                // The tables' own resolution self-check failing is exactly
                // the signal to move up the ladder.
                Err(WclError::Service(ServiceError::GridTooCoarse { .. })) => continue,
                Err(other) => return Err(other),
            };
        if quadrature_error <= tol / 2.0 {
            let series = compensated_sum(&terms);
            return Ok(DistanceBound {
                value: series + truncation_error + quadrature_error,
                m_used,
                truncation_error,
                quadrature_error,
                terms,
            });
        }
        achieved = quadrature_error;
        if m_used == 0 {
            break; // no grid involved, refinement cannot help
        }
    }
    Err(WclError::ToleranceUnreachable {
        requested: tol,
        achieved: truncation_error + achieved,
    })
}

/// Evaluates the kept series terms on one grid resolution, returning the
/// weighted terms (ascending `m`) and the total quadrature allowance.
fn series_terms(
    model: &WclModel,
    cert: &DriftCertificate,
    m_used: usize,
    cells: usize,
    scale: f64,
    quad_tol: &Tolerances,
) -> Result<(Vec<f64>, f64), WclError> {
    let rho = model.rho();
    let capacity = model.capacity;
    let mut terms = Vec::with_capacity(m_used + 1);
    let mut allowance = 0.0;

    // m = 0: the zeroth convolution power is a point mass at the origin.
    let at_zero = inner_tail_integral(&model.law, cert, 0.0, capacity, quad_tol)?;
    terms.push(scale * (1.0 - rho) * at_zero.value);
    allowance += scale * (1.0 - rho) * at_zero.error;

    if m_used >= 1 {
        // Tables at the working resolution and, independently, at half of
        // it. The half-resolution nodes are a strict subset of the full
        // ones, so differencing the two sums probes the integrand's
        // interpolation error and the tables' own construction error at
        // once; /3 is the usual second-order Richardson factor.
        let eq = equilibrium_tables(
            &model.law,
            m_used,
            &GridSpec::new(capacity, cells),
            quad_tol,
        )?;
        let eq_half = equilibrium_tables(
            &model.law,
            m_used,
            &GridSpec::new(capacity, cells / 2),
            quad_tol,
        )?;
        let nodes = eq.xs.len();
        let mut vals = Vec::with_capacity(nodes);
        let mut errs = Vec::with_capacity(nodes);
        for &x in &eq.xs {
            let r = inner_tail_integral(&model.law, cert, x.min(capacity), capacity, quad_tol)?;
            vals.push(r.value);
            errs.push(r.error);
        }
        let half_vals: Vec<f64> = vals.iter().copied().step_by(2).collect();
        for m in 1..=m_used {
            let full = stieltjes_trapezoid(&vals, &eq.tables[m - 1]);
            let half = stieltjes_trapezoid(&half_vals, &eq_half.tables[m - 1]);
            let richardson = (full - half).abs() / 3.0;
            let err_sum = stieltjes_trapezoid(&errs, &eq.tables[m - 1]);
            let weight = scale * (1.0 - rho) * rho.powi(m as i32);
            terms.push(weight * full.max(0.0));
            allowance += weight * (err_sum + richardson);
        }
    }
    Ok((terms, allowance))
}

/// Measure-weighted trapezoid sum `sum 0.5 (v_i + v_{i+1})(F_{i+1} - F_i)`
/// over consecutive grid nodes.
fn stieltjes_trapezoid(vals: &[f64], table: &[f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..vals.len().saturating_sub(1) {
        sum += 0.5 * (vals[i] + vals[i + 1]) * (table[i + 1] - table[i]);
    }
    sum
}

/// Kahan-compensated sum in slice order (ascending `m`).
fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for &x in xs {
        let y = x - carry;
        let t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
    sum
}

fn require_scalar(cert: &DriftCertificate) -> Result<(), WclError> {
    match cert.regime {
        Regime::MapExponential => Err(WclError::WrongRegime {
            regime: cert.regime,
        }),
        Regime::Light | Regime::Moderate | Regime::Polynomial => Ok(()),
    }
}

/// A priori divergence screen for certificate/law pairs whose mismatch is
/// decidable from the parameters alone. Pairs that pass may still be caught
/// by the quadrature divergence guard (growth the screen cannot see).
fn check_tail_beats_potential(law: &ServiceLaw, cert: &DriftCertificate) -> Result<(), WclError> {
    match &cert.form {
        CertForm::Exponential { theta, .. } => {
            let radius = law.mgf_radius();
            if *theta >= radius {
                return Err(WclError::DivergentInnerIntegral {
                    detail: format!(
                        "potential growth rate {theta} is not below the service \
                         tail decay bound {radius}"
                    ),
                });
            }
        }
        CertForm::StretchedExponential { epsilon, beta, .. } => match TailEnvelope::for_law(law) {
            TailEnvelope::Polynomial { .. } => {
                return Err(WclError::DivergentInnerIntegral {
                    detail: "stretched-exponential potential against a polynomial \
                                 service tail"
                        .to_string(),
                });
            }
            TailEnvelope::Moderate {
                gamma,
                beta: tail_beta,
                ..
            } => {
                if *beta > tail_beta || (*beta == tail_beta && *epsilon >= gamma) {
                    return Err(WclError::DivergentInnerIntegral {
                        detail: format!(
                            "stretched-exponential potential (exponent {beta}, \
                                 coefficient {epsilon}) outgrows the service tail \
                                 (exponent {tail_beta}, coefficient {gamma})"
                        ),
                    });
                }
            }
            TailEnvelope::LightTail { .. } => {}
        },
        CertForm::PowerLaw { kappa_tilde, .. } => {
            if let ServiceLaw::ParetoTail { exponent, .. } = law {
                if *kappa_tilde >= *exponent {
                    return Err(WclError::DivergentInnerIntegral {
                        detail: format!(
                            "power-law potential of degree {kappa_tilde} against a \
                             service tail of degree {exponent}"
                        ),
                    });
                }
            }
        }
        CertForm::PhaseExponential { .. } => unreachable!("screened by require_scalar"),
    }
    Ok(())
}

fn quad_to_wcl(e: QuadError) -> WclError {
    match e {
        QuadError::Divergent { .. } => WclError::DivergentInnerIntegral {
            detail: e.to_string(),
        },
        other => WclError::Quad(other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{build_mg1_light, DriftInput};
    use crate::quad::integrate;
    use proptest::prelude::*;

    const THETA: f64 = 0.4;

    fn mm1_cert(lambda: f64) -> DriftCertificate {
        let input = DriftInput::new(lambda, ServiceLaw::Exponential { rate: 1.0 });
        build_mg1_light(&input, THETA, &Tolerances::default()).unwrap()
    }

    /// Closed form of the overshoot integral for unit-exponential service
    /// and `V0 = e^{theta x} - 1`, with `a = L - x`:
    /// `e^{theta x} e^{-(1-theta) a} / (1-theta) + (e^{theta x} - 2) e^{-a}`.
    fn mm1_inner_closed(theta: f64, x: f64, capacity: f64) -> f64 {
        let a = capacity - x;
        (theta * x).exp() * (-(1.0 - theta) * a).exp() / (1.0 - theta)
            + ((theta * x).exp() - 2.0) * (-a).exp()
    }

    #[test]
    fn inner_integral_matches_exponential_closed_form() {
        let law = ServiceLaw::Exponential { rate: 1.0 };
        let cert = mm1_cert(0.5);
        let tol = Tolerances::default();
        let got = inner_tail_integral(&law, &cert, 2.0, 10.0, &tol).unwrap();
        assert!(
            (got.value - mm1_inner_closed(THETA, 2.0, 10.0)).abs() <= 1e-8,
            "inner integral {} vs closed form {}",
            got.value,
            mm1_inner_closed(THETA, 2.0, 10.0)
        );
    }

    #[test]
    fn boundary_probe_equals_majorant() {
        let law = ServiceLaw::Exponential { rate: 1.0 };
        let cert = mm1_cert(0.5);
        let tol = Tolerances::default();
        let capacity = 10.0;
        let got = inner_tail_integral(&law, &cert, capacity, capacity, &tol).unwrap();
        // x = L: integral_0^inf H(dy) {V0(L + y) + V0(L)}.
        let want = mm1_inner_closed(THETA, capacity, capacity);
        assert!((got.value - want).abs() <= 1e-8 * want);
    }

    #[test]
    fn point_mass_inside_capacity_contributes_nothing() {
        let law = ServiceLaw::Deterministic { value: 2.0 };
        let cert = {
            let input = DriftInput::new(0.3, law.clone());
            build_mg1_light(&input, 0.2, &Tolerances::default()).unwrap()
        };
        let tol = Tolerances::default();
        let zero = inner_tail_integral(&law, &cert, 0.0, 10.0, &tol).unwrap();
        assert_eq!(zero.value, 0.0);
        assert_eq!(zero.error, 0.0);
        // From x = 9 the draw of 2 overshoots the room of 1.
        let hit = inner_tail_integral(&law, &cert, 9.0, 10.0, &tol).unwrap();
        let want = cert.potential_gap(11.0, 0) + cert.potential_gap(9.0, 0);
        assert!((hit.value - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn infinite_capacity_distance_is_zero() {
        let law = ServiceLaw::Exponential { rate: 1.0 };
        let model = WclModel::new(0.5, law, f64::INFINITY).unwrap();
        let cert = mm1_cert(0.5);
        let bound = wcl_distance_bound(&model, &cert, 1e-3).unwrap();
        assert_eq!(bound.value, 0.0);
        assert_eq!(bound.m_used, 0);
        assert_eq!(bound.truncation_error, 0.0);
        assert_eq!(bound.quadrature_error, 0.0);
        assert!(bound.terms.is_empty());
    }

    /// Brute-force oracle for the M/M/1 series: with unit-exponential
    /// service the equilibrium law is again unit-exponential, so the m-th
    /// convolution power has the Erlang(m, 1) density
    /// `x^{m-1} e^{-x} / (m-1)!`, and every outer integral reduces to
    /// adaptive quadrature of density * closed-form inner value. Summed far
    /// past the truncation point, this evaluates the exact series without
    /// grid tables.
    fn mm1_brute_force(theta: f64, lambda: f64, capacity: f64, prefactor: f64) -> f64 {
        let rho = lambda;
        let scale = lambda * prefactor;
        let mut total = scale * (1.0 - rho) * mm1_inner_closed(theta, 0.0, capacity);
        let mut log_fact = 0.0;
        for m in 1..=60usize {
            log_fact += if m > 1 { ((m - 1) as f64).ln() } else { 0.0 };
            let density = move |x: f64| {
                if m == 1 {
                    (-x).exp()
                } else if x <= 0.0 {
                    0.0
                } else {
                    ((m as f64 - 1.0) * x.ln() - x - log_fact).exp()
                }
            };
            let outer = integrate(
                &|x| density(x) * mm1_inner_closed(theta, x, capacity),
                0.0,
                capacity,
                1e-12,
                1e-11,
            )
            .unwrap()
            .value;
            total += scale * (1.0 - rho) * rho.powi(m as i32) * outer;
        }
        total
    }

    #[test]
    fn distance_bound_matches_brute_force_series() {
        let lambda = 0.5;
        let law = ServiceLaw::Exponential { rate: 1.0 };
        let model = WclModel::new(lambda, law, 10.0).unwrap();
        let cert = mm1_cert(lambda);
        let tol = 1e-3;
        let bound = wcl_distance_bound(&model, &cert, tol).unwrap();
        let prefactor = 1.0 + cert.b * (1.0 - model.rho()) / cert.f_inf;
        let exact = mm1_brute_force(THETA, lambda, 10.0, prefactor);
        assert!(
            bound.value >= exact - 1e-9,
            "reported value {} must not undercut the exact series {}",
            bound.value,
            exact
        );
        assert!(
            bound.value <= exact + tol,
            "reported value {} overshoots the exact series {} by more than tol",
            bound.value,
            exact
        );
        // Frozen from the brute-force series above (lambda = 0.5, mu = 1,
        // theta = 0.4, prefactor 4, L = 10).
        assert!(
            (exact - 0.8040541530).abs() < 1e-6,
            "oracle drifted: {exact}"
        );
    }

    #[test]
    fn value_is_terms_plus_allowances() {
        let law = ServiceLaw::Exponential { rate: 1.0 };
        let model = WclModel::new(0.5, law, 10.0).unwrap();
        let cert = mm1_cert(0.5);
        let bound = wcl_distance_bound(&model, &cert, 1e-3).unwrap();
        let series: f64 = compensated_sum(&bound.terms);
        let rebuilt = series + bound.truncation_error + bound.quadrature_error;
        assert!((bound.value - rebuilt).abs() <= 1e-12 * bound.value.max(1.0));
        assert_eq!(bound.terms.len(), bound.m_used + 1);
    }

    /// Every capacity on this ladder sits past the bulk of the stationary
    /// workload (mean 1 at this load), where growing `L` only shrinks the
    /// tail integrals. Below the bulk the response is not monotone; see
    /// `capacity_response_rises_over_the_workload_bulk_then_decays`.
    #[test]
    fn bound_decreases_along_capacity_ladder() {
        let law = ServiceLaw::Exponential { rate: 1.0 };
        let cert = mm1_cert(0.5);
        let tol = 1e-3;
        let mut last = f64::INFINITY;
        for capacity in [5.0, 10.0, 20.0] {
            let model = WclModel::new(0.5, law.clone(), capacity).unwrap();
            let bound = wcl_distance_bound(&model, &cert, tol).unwrap();
            assert!(bound.value >= 0.0);
            assert!(bound.truncation_error <= tol / 2.0 + 1e-15);
            assert!(bound.quadrature_error <= tol / 2.0 + 1e-15);
            assert!(
                bound.value < last,
                "bound must shrink as capacity grows: {} at L = {capacity} vs {last}",
                bound.value
            );
            last = bound.value;
        }
    }

    /// The outer integrals run against the geometric mixture of equilibrium
    /// convolution powers restricted to [0, L], and that mixture is exactly
    /// the stationary workload law. While `L` is still inside the workload
    /// bulk, raising it admits new mixture mass faster than the integrand's
    /// exponential decay removes weight, so the bound rises; once `L`
    /// clears the bulk, the decay wins and the bound falls toward zero. In
    /// heavy traffic the bulk is wide (mean workload ~2.2 here), which
    /// makes the hump visible at small capacities. Both flanks are pinned
    /// against the grid-free brute-force series.
    #[test]
    fn capacity_response_rises_over_the_workload_bulk_then_decays() {
        let lambda = 0.6879565779670955; // shrunken failure of a onetime monotonicity conjecture
        let theta = 0.5 * (1.0 - lambda);
        let law = ServiceLaw::Exponential { rate: 1.0 };
        let input = DriftInput::new(lambda, law.clone());
        let cert = build_mg1_light(&input, theta, &Tolerances::default()).unwrap();
        let prefactor = 1.0 + cert.b * (1.0 - lambda) / cert.f_inf;
        let tol = 1e-4;
        let value = |capacity: f64| {
            let model = WclModel::new(lambda, law.clone(), capacity).unwrap();
            wcl_distance_bound(&model, &cert, tol).unwrap().value
        };
        let (v2, v4) = (value(2.0), value(4.0));
        assert!(
            v4 > v2 + 0.04,
            "bound should rise across the workload bulk: {v2} at L = 2 vs {v4} at L = 4"
        );
        let (v7, v10, v15) = (value(7.0), value(10.0), value(15.0));
        assert!(
            v4 > v7 && v7 > v10 && v10 > v15,
            "bound should decay past the bulk: {v4}, {v7}, {v10}, {v15}"
        );
        for (capacity, v) in [(2.0, v2), (4.0, v4), (10.0, v10)] {
            let exact = mm1_brute_force(theta, lambda, capacity, prefactor);
            assert!(
                v >= exact - 1e-9 && v <= exact + tol,
                "value {v} at L = {capacity} strayed from the exact series {exact}"
            );
        }
    }

    #[test]
    fn tolerance_runs_agree_within_the_looser_budget() {
        let law = ServiceLaw::Exponential { rate: 1.0 };
        let model = WclModel::new(0.5, law, 10.0).unwrap();
        let cert = mm1_cert(0.5);
        let loose = wcl_distance_bound(&model, &cert, 1e-3).unwrap();
        let tight = wcl_distance_bound(&model, &cert, 1e-4).unwrap();
        assert!(
            (loose.value - tight.value).abs() <= 1e-3,
            "runs disagree: {} vs {}",
            loose.value,
            tight.value
        );
        assert!(tight.m_used >= loose.m_used);
    }

    #[test]
    fn series_terms_sit_below_geometric_majorant() {
        let law = ServiceLaw::Exponential { rate: 1.0 };
        let model = WclModel::new(0.5, law.clone(), 10.0).unwrap();
        let cert = mm1_cert(0.5);
        let bound = wcl_distance_bound(&model, &cert, 1e-3).unwrap();
        let sup = inner_tail_integral(&law, &cert, 10.0, 10.0, &Tolerances::default()).unwrap();
        let sup_term = sup.value + sup.error;
        let prefactor = 1.0 + cert.b * (1.0 - model.rho()) / cert.f_inf;
        let rho = model.rho();
        for (m, &term) in bound.terms.iter().enumerate() {
            assert!(term >= 0.0);
            let majorant = model.lambda() * prefactor * rho.powi(m as i32) * sup_term;
            assert!(
                term <= majorant * (1.0 + 1e-9),
                "term {m} = {term} exceeds its majorant {majorant}"
            );
        }
    }

    #[test]
    fn heavier_actual_tail_is_rejected_as_divergent() {
        // Certificate built for unit-exponential service, applied to a law
        // whose tail decays slower than the potential grows.
        let cert = mm1_cert(0.5);
        let slow = ServiceLaw::Exponential { rate: 0.3 };
        let model = WclModel::new(0.25, slow, 10.0).unwrap();
        match wcl_distance_bound(&model, &cert, 1e-3) {
            Err(WclError::DivergentInnerIntegral { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn stretched_potential_against_polynomial_tail_is_divergent() {
        let weibull = ServiceLaw::WeibullTail {
            shape: 0.5,
            rate: 1.0,
        };
        let input = DriftInput::new(0.25, weibull);
        let envelope = TailEnvelope::for_law(&input.law);
        let params = crate::drift::ModerateParams {
            epsilon: 0.1,
            x0: 100.0,
            rho_tilde: 0.75,
        };
        let cert =
            crate::drift::build_mg1_moderate(&input, &envelope, &params, &Tolerances::default())
                .unwrap();
        let pareto = ServiceLaw::ParetoTail {
            exponent: 3.0,
            scale: 1.0,
        };
        let model = WclModel::new(0.25, pareto, 10.0).unwrap();
        match wcl_distance_bound(&model, &cert, 1e-2) {
            Err(WclError::DivergentInnerIntegral { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn phase_certificates_are_rejected() {
        use crate::arrival::MarkovArrivalProcess;
        let c = crate::linalg::Matrix::from_rows(vec![vec![-2.0, 1.0], vec![0.5, -1.5]]).unwrap();
        let d = crate::linalg::Matrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let map = MarkovArrivalProcess::new(c, d, &Tolerances::default()).unwrap();
        let law = ServiceLaw::Exponential { rate: 2.0 };
        let cert = crate::drift::build_map_gi1(&map, &law, 0.5, &Tolerances::default()).unwrap();
        let model = WclModel::new(0.5, law, 10.0).unwrap();
        match wcl_distance_bound(&model, &cert, 1e-3) {
            Err(WclError::WrongRegime {
                regime: Regime::MapExponential,
            }) => {}
            other => panic!("expected regime rejection, got {other:?}"),
        }
    }

    #[test]
    fn model_constructor_validates() {
        let law = ServiceLaw::Exponential { rate: 1.0 };
        assert!(matches!(
            WclModel::new(1.5, law.clone(), 10.0),
            Err(WclError::Unstable { .. })
        ));
        assert!(matches!(
            WclModel::new(0.5, law.clone(), 0.0),
            Err(WclError::InvalidParameter(_))
        ));
        assert!(matches!(
            WclModel::new(-0.5, law.clone(), 10.0),
            Err(WclError::InvalidParameter(_))
        ));
        assert!(WclModel::new(0.5, law, f64::INFINITY).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 24, .. ProptestConfig::default() })]

        /// Across the whole parameter box, including heavy traffic and
        /// capacities inside the workload bulk where the capacity response
        /// is hump-shaped rather than monotone, the bound stays nonnegative
        /// and two runs at different tolerances agree within the looser
        /// budget (both sit within it above the same exact series).
        #[test]
        fn random_models_stay_nonnegative_and_tolerance_consistent(
            lambda in 0.2f64..0.7,
            low in 2.0f64..8.0,
            gap in 1.0f64..10.0,
        ) {
            let law = ServiceLaw::Exponential { rate: 1.0 };
            let theta = 0.5 * (1.0 - lambda); // strictly inside the feasible window
            let input = DriftInput::new(lambda, law.clone());
            let cert = build_mg1_light(&input, theta, &Tolerances::default()).unwrap();
            let near = WclModel::new(lambda, law.clone(), low).unwrap();
            let far = WclModel::new(lambda, law, low + gap).unwrap();
            let loose = wcl_distance_bound(&near, &cert, 1e-2).unwrap();
            let tight = wcl_distance_bound(&near, &cert, 1e-4).unwrap();
            let far_loose = wcl_distance_bound(&far, &cert, 1e-2).unwrap();
            prop_assert!(loose.value >= 0.0 && tight.value >= 0.0 && far_loose.value >= 0.0);
            prop_assert!((loose.value - tight.value).abs() <= 1e-2,
                "tolerance runs disagree: {} vs {}", loose.value, tight.value);
            prop_assert!(tight.m_used >= loose.m_used);
        }
    }
}
