//! Drift certificates: Lyapunov potentials with verified negative drift.
//!
//! A certificate packages a potential `V >= 1`, a rate function `f` with
//! `inf f > 0`, and a constant `b` such that the workload generator `A` of
//! the model satisfies the modulated drift inequality
//!
//! ```text
//!     A V(x)  <=  -f(x) + b * 1{x in C},        C = the empty-workload set.
//! ```
//!
//! Everything downstream (bias bounds, truncation-distance bounds) consumes
//! only the certificate, so this module is where model analysis happens:
//!
//! * **Phase exponential** ([`build_map_gi1`]): for a queue fed by a MAP
//!   `(C, D)` with service transform `H^(theta)`, the matrix
//!   `B(theta) = C + H^(theta) D` has a Perron eigenvalue `sigma(theta)`
//!   and positive eigenvector `u(theta)` (normalized to max 1). With
//!   `V(x, i) = u_i e^{theta x}` the drift inequality holds with
//!   `f = (theta - sigma) V` and `b = theta` whenever `sigma(theta) < theta`.
//!   The atom is `(0, i0)` at an index where `u` attains its maximum.
//!
//! * **Scalar light tail** ([`build_mg1_light`]): the one-phase collapse,
//!   `sigma(theta) = -lambda + lambda H^(theta)`, `V(x) = e^{theta x}`.
//!
//! * **Stretched exponential** ([`build_mg1_moderate`]): for Poisson input
//!   and a service tail dominated by `coeff * e^{-gamma x^beta}`,
//!   `V(x) = exp(eps (x + x0)^beta)` with `eps < gamma` and `x0` above the
//!   convexity floor `((1-beta)/(eps beta))^{1/beta}` (which makes `V'`
//!   nondecreasing). Feasibility is certified by the x-uniform sufficient
//!   check `lambda * integral H̄(y) e^{eps y^beta} dy <= rho~` for a chosen
//!   `rho~` in `(rho, 1)`; then `f = (1 - rho~) V'`.
//!
//! * **Power law** ([`build_mg1_polynomial`]): for tails dominated by
//!   `coeff * (1+x)^{-kappa}`, `V(x) = (x + x0)^{kappa~}` with
//!   `1 < kappa~ < kappa`, `x0 >= 1`, sufficient check
//!   `lambda * integral H̄(y) (1 + y/x0)^{kappa~ - 1} dy <= rho~`.
//!
//! In each scalar regime `b` is set to the smallest admissible value,
//! `b = (1 - rho~) V'(0) + lambda * integral H̄(y) V'(y) dy`, so the bound
//! prefactors are as tight as this construction allows.
//!
//! [`generator_check`] re-verifies any emitted certificate numerically:
//! it applies the model generator to `V` by quadrature on a caller grid and
//! confirms the drift inequality pointwise within a relative tolerance.
//! This check is deliberately independent of the algebra used to build the
//! certificate (it never uses the closed-form transform identities), so it
//! catches both analysis and implementation mistakes.

use serde::Serialize;
use thiserror::Error;

use crate::arrival::{MapError, MarkovArrivalProcess};
use crate::linalg::{perron_eigenpair, LinalgError, Matrix};
use crate::quad::{integrate_to_inf, QuadError, QuadResult};
use crate::service::{envelope_grid, verify_envelope, ServiceError, ServiceLaw, TailEnvelope};
use crate::tol::Tolerances;

/// Errors from certificate construction and verification.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum DriftError {
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("queue is unstable or critically loaded: rho = {rho}")]
    Unstable { rho: f64 },
    #[error("theta = {theta} is infeasible: sigma(theta) = {sigma} must stay below theta")]
    InfeasibleTheta { theta: f64, sigma: f64 },
    #[error("no feasible theta found on the search grid (upper limit {upper})")]
    NoFeasibleTheta { upper: f64 },
    #[error("infeasible drift parameters: {0}")]
    InfeasibleParameters(String),
    #[error("kappa~ = {kappa_tilde} must stay strictly below the tail exponent kappa = {kappa}")]
    TailTooHeavy { kappa_tilde: f64, kappa: f64 },
    #[error("envelope does not dominate the service tail: ratio {worst_ratio} at x = {worst_x}")]
    EnvelopeViolated { worst_x: f64, worst_ratio: f64 },
    #[error("expected a {expected} envelope for this regime")]
    WrongEnvelope { expected: &'static str },
    #[error("drift floor inf f = {f_inf:.3e} is below the usable minimum {floor:.3e}")]
    DegenerateDrift { f_inf: f64, floor: f64 },
    #[error("certificate does not match the model: {0}")]
    ModelMismatch(String),
    #[error("no parameter combination on the search grid was feasible; last failure: {last}")]
    NoFeasibleParameters { last: String },
}

/// Which construction produced a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    MapExponential,
    Light,
    Moderate,
    Polynomial,
}

/// Parameter payload of a certificate; fixes `V` and `f` exactly.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum CertForm {
    /// `V(x, i) = u_i e^{theta x}`, `f = (theta - sigma) V`.
    PhaseExponential {
        theta: f64,
        sigma: f64,
        u: Vec<f64>,
        atom_phase: usize,
    },
    /// `V(x) = e^{theta x}`, `f = (theta - sigma) V`.
    Exponential { theta: f64, sigma: f64 },
    /// `V(x) = exp(epsilon (x + x0)^beta)`, `f = (1 - rho_tilde) V'`.
    StretchedExponential {
        epsilon: f64,
        beta: f64,
        x0: f64,
        rho_tilde: f64,
    },
    /// `V(x) = (x + x0)^kappa_tilde`, `f = (1 - rho_tilde) V'`.
    PowerLaw {
        kappa_tilde: f64,
        x0: f64,
        rho_tilde: f64,
    },
}

/// Construction diagnostics carried into reports: enough to audit every
/// feasibility decision without rebuilding.
#[derive(Debug, Clone, Serialize)]
pub struct CertDiagnostics {
    /// Offered load `lambda * mean service`.
    pub rho: f64,
    /// Value of the x-uniform sufficient integral (stretched/power regimes).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sufficient_integral: Option<f64>,
    /// Quadrature error accumulated while computing `b`.
    pub b_quad_error: f64,
    /// Achieved eigen residual (phase-exponential regime).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigen_residual: Option<f64>,
}

/// A verified drift certificate. Immutable; all evaluators are pure.
#[derive(Debug, Clone, Serialize)]
pub struct DriftCertificate {
    pub regime: Regime,
    pub form: CertForm,
    /// Excess-drift constant on the empty-workload set.
    pub b: f64,
    /// Infimum of the rate function `f` over the state space.
    pub f_inf: f64,
    pub diagnostics: CertDiagnostics,
    /// `f = rate_scale * dV/dx` in every regime; private so the relation
    /// between `f` and `V` cannot be broken after construction.
    rate_scale: f64,
}

impl DriftCertificate {
    /// Number of arrival phases (1 for the scalar regimes).
    pub fn phases(&self) -> usize {
        match &self.form {
            CertForm::PhaseExponential { u, .. } => u.len(),
            _ => 1,
        }
    }

    /// Phase tag of the atom (0 for the scalar regimes).
    pub fn atom_phase(&self) -> usize {
        match &self.form {
            CertForm::PhaseExponential { atom_phase, .. } => *atom_phase,
            _ => 0,
        }
    }

    /// Whether the small set `C` (empty workload, any phase) coincides with
    /// the atom: true exactly when there is a single phase.
    pub fn small_set_is_atom(&self) -> bool {
        self.phases() == 1
    }

    /// The potential `V(w, phase) >= min_i u_i > 0`.
    pub fn potential(&self, w: f64, phase: usize) -> f64 {
        match &self.form {
            CertForm::PhaseExponential { theta, u, .. } => u[phase] * (theta * w).exp(),
            CertForm::Exponential { theta, .. } => (theta * w).exp(),
            CertForm::StretchedExponential {
                epsilon, beta, x0, ..
            } => (epsilon * (w + x0).powf(*beta)).exp(),
            CertForm::PowerLaw {
                kappa_tilde, x0, ..
            } => (w + x0).powf(*kappa_tilde),
        }
    }

    /// The centered potential `V0 = V - V(atom)`; zero at the atom. May be
    /// negative at empty-workload states whose phase is not the atom phase.
    pub fn potential_gap(&self, w: f64, phase: usize) -> f64 {
        let atom_value = match &self.form {
            CertForm::PhaseExponential { .. } => 1.0, // u is normalized to max 1 at the atom phase
            _ => self.potential(0.0, 0),
        };
        self.potential(w, phase) - atom_value
    }

    /// Workload derivative `dV/dw`.
    pub fn potential_slope(&self, w: f64, phase: usize) -> f64 {
        match &self.form {
            CertForm::PhaseExponential { theta, u, .. } => theta * u[phase] * (theta * w).exp(),
            CertForm::Exponential { theta, .. } => theta * (theta * w).exp(),
            CertForm::StretchedExponential {
                epsilon, beta, x0, ..
            } => {
                epsilon * beta * (w + x0).powf(beta - 1.0) * (epsilon * (w + x0).powf(*beta)).exp()
            }
            CertForm::PowerLaw {
                kappa_tilde, x0, ..
            } => kappa_tilde * (w + x0).powf(kappa_tilde - 1.0),
        }
    }

    /// The rate function `f(w, phase) = rate_scale * dV/dw`; strictly
    /// positive with infimum [`DriftCertificate::f_inf`].
    pub fn drift_rate(&self, w: f64, phase: usize) -> f64 {
        self.rate_scale * self.potential_slope(w, phase)
    }

    /// Antiderivative of `f` in the workload coordinate:
    /// `drift_rate_primitive(b) - drift_rate_primitive(a) = integral_a^b f`.
    /// Lets simulators integrate `f` over linear decay segments exactly.
    pub fn drift_rate_primitive(&self, w: f64, phase: usize) -> f64 {
        self.rate_scale * self.potential(w, phase)
    }
}

/// Poisson-input model data for the scalar builders.
#[derive(Debug, Clone)]
pub struct DriftInput {
    pub lambda: f64,
    pub law: ServiceLaw,
}

impl DriftInput {
    pub fn new(lambda: f64, law: ServiceLaw) -> Self {
        Self { lambda, law }
    }

    /// Offered load `lambda * mean service time`.
    pub fn rho(&self) -> f64 {
        self.lambda * self.law.mean()
    }
}

/// `sigma(theta) = -lambda + lambda * E e^{theta S}` for Poisson input.
fn sigma_scalar(lambda: f64, law: &ServiceLaw, theta: f64) -> Result<f64, DriftError> {
    Ok(lambda * (law.mgf(theta)? - 1.0))
}

fn require_positive_rate(lambda: f64) -> Result<(), DriftError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(DriftError::InfeasibleParameters(format!(
            "arrival rate must be positive and finite, got {lambda}"
        )));
    }
    Ok(())
}

/// Builds the scalar light-tail certificate `V(x) = e^{theta x}`.
pub fn build_mg1_light(
    input: &DriftInput,
    theta: f64,
    tol: &Tolerances,
) -> Result<DriftCertificate, DriftError> {
    input.law.validate()?;
    require_positive_rate(input.lambda)?;
    if !(theta > 0.0) {
        return Err(DriftError::InfeasibleTheta { theta, sigma: 0.0 });
    }
    let sigma = sigma_scalar(input.lambda, &input.law, theta)?;
    if sigma >= theta {
        return Err(DriftError::InfeasibleTheta { theta, sigma });
    }
    let f_inf = theta - sigma;
    if f_inf < tol.f_inf_floor {
        return Err(DriftError::DegenerateDrift {
            f_inf,
            floor: tol.f_inf_floor,
        });
    }
    Ok(DriftCertificate {
        regime: Regime::Light,
        form: CertForm::Exponential { theta, sigma },
        b: theta,
        f_inf,
        diagnostics: CertDiagnostics {
            rho: input.rho(),
            sufficient_integral: None,
            b_quad_error: 0.0,
            eigen_residual: None,
        },
        rate_scale: (theta - sigma) / theta,
    })
}

/// Builds the phase-exponential certificate for a MAP-driven queue.
///
/// `sigma(theta)` is the Perron eigenvalue of `C + H^(theta) D`, found by
/// power iteration after shifting the diagonal into the nonnegative cone
/// (the shift moves the eigenvalue, not the eigenvector). The atom phase is
/// the first index where the eigenvector attains its maximum of 1.
pub fn build_map_gi1(
    map: &MarkovArrivalProcess,
    law: &ServiceLaw,
    theta: f64,
    tol: &Tolerances,
) -> Result<DriftCertificate, DriftError> {
    law.validate()?;
    if !(theta > 0.0) {
        return Err(DriftError::InfeasibleTheta { theta, sigma: 0.0 });
    }
    let mgf = law.mgf(theta)?;
    let b_matrix = map.c().add_scaled(mgf, map.d())?;
    let (sigma, u, residual) = perron_of_shifted(&b_matrix, tol)?;
    if sigma >= theta {
        return Err(DriftError::InfeasibleTheta { theta, sigma });
    }
    let atom_phase = u
        .iter()
        .position(|&v| v == 1.0)
        .expect("eigenvector is renormalized to max exactly 1");
    let u_min = u.iter().cloned().fold(f64::INFINITY, f64::min);
    let f_inf = (theta - sigma) * u_min;
    if f_inf < tol.f_inf_floor {
        return Err(DriftError::DegenerateDrift {
            f_inf,
            floor: tol.f_inf_floor,
        });
    }
    let stationary = map.stationary(tol)?;
    let rho = stationary.lambda * law.mean();
    Ok(DriftCertificate {
        regime: Regime::MapExponential,
        form: CertForm::PhaseExponential {
            theta,
            sigma,
            u,
            atom_phase,
        },
        b: theta,
        f_inf,
        diagnostics: CertDiagnostics {
            rho,
            sufficient_integral: None,
            b_quad_error: 0.0,
            eigen_residual: Some(residual),
        },
        rate_scale: (theta - sigma) / theta,
    })
}

/// Perron pair of a matrix with nonnegative off-diagonals but arbitrary
/// diagonal sign: shift by `K = max(0, -min diag) + 1`, iterate, shift back.
fn perron_of_shifted(b: &Matrix, tol: &Tolerances) -> Result<(f64, Vec<f64>, f64), DriftError> {
    let n = b.rows();
    let min_diag = (0..n).fold(f64::INFINITY, |m, i| m.min(b.get(i, i)));
    let shift = (-min_diag).max(0.0) + 1.0;
    let shifted = b.add_scaled(shift, &Matrix::identity(n))?;
    let pair = perron_eigenpair(&shifted, tol.residual * 1e-2, 1_000_000)?;
    Ok((pair.value - shift, pair.vector, pair.residual))
}

/// Manual parameters for the stretched-exponential regime.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ModerateParams {
    pub epsilon: f64,
    pub x0: f64,
    pub rho_tilde: f64,
}

/// Convexity floor for `x0`: the smallest shift making `V'` nondecreasing,
/// `((1 - beta) / (epsilon beta))^{1/beta}`.
pub fn moderate_x0_floor(epsilon: f64, beta: f64) -> f64 {
    ((1.0 - beta) / (epsilon * beta)).powf(1.0 / beta)
}

/// Builds the stretched-exponential certificate for a heavy-tailed queue
/// whose tail is dominated by the given envelope.
pub fn build_mg1_moderate(
    input: &DriftInput,
    envelope: &TailEnvelope,
    params: &ModerateParams,
    tol: &Tolerances,
) -> Result<DriftCertificate, DriftError> {
    input.law.validate()?;
    require_positive_rate(input.lambda)?;
    let (gamma, beta) = match envelope {
        TailEnvelope::Moderate { gamma, beta, .. } => (*gamma, *beta),
        _ => {
            return Err(DriftError::WrongEnvelope {
                expected: "moderate (stretched-exponential)",
            })
        }
    };
    check_envelope(&input.law, envelope)?;
    let rho = input.rho();
    if rho >= 1.0 {
        return Err(DriftError::Unstable { rho });
    }
    let ModerateParams {
        epsilon,
        x0,
        rho_tilde,
    } = *params;
    if !(epsilon > 0.0 && epsilon < gamma) {
        return Err(DriftError::InfeasibleParameters(format!(
            "epsilon must lie in (0, gamma) = (0, {gamma}), got {epsilon}"
        )));
    }
    if !(rho_tilde > rho && rho_tilde < 1.0) {
        return Err(DriftError::InfeasibleParameters(format!(
            "rho_tilde must lie in (rho, 1) = ({rho}, 1), got {rho_tilde}"
        )));
    }
    let floor = moderate_x0_floor(epsilon, beta);
    if !(x0 >= floor) {
        return Err(DriftError::InfeasibleParameters(format!(
            "x0 = {x0} is below the convexity floor {floor}"
        )));
    }

    // x-uniform sufficient feasibility: the growth factor of V' between x
    // and x + y is at most e^{eps y^beta} once V' is nondecreasing, so this
    // single integral dominates the drift condition at every workload.
    let law = input.law.clone();
    let sufficient = tail_integral(
        &input.law,
        move |y| (epsilon * y.powf(beta)).exp() * law.tail(y),
        tol,
    )?;
    let s_value = input.lambda * sufficient.value;
    if s_value > rho_tilde {
        return Err(DriftError::InfeasibleParameters(format!(
            "sufficient integral lambda*I = {s_value:.6} exceeds rho_tilde = {rho_tilde}"
        )));
    }

    let slope = move |y: f64| {
        epsilon * beta * (y + x0).powf(beta - 1.0) * (epsilon * (y + x0).powf(beta)).exp()
    };
    let law = input.law.clone();
    let b_tail = tail_integral(&input.law, move |y| law.tail(y) * slope(y), tol)?;
    let v_prime_0 = epsilon * beta * x0.powf(beta - 1.0) * (epsilon * x0.powf(beta)).exp();
    let f_inf = (1.0 - rho_tilde) * v_prime_0;
    if f_inf < tol.f_inf_floor {
        return Err(DriftError::DegenerateDrift {
            f_inf,
            floor: tol.f_inf_floor,
        });
    }
    let b = f_inf + input.lambda * b_tail.value;
    Ok(DriftCertificate {
        regime: Regime::Moderate,
        form: CertForm::StretchedExponential {
            epsilon,
            beta,
            x0,
            rho_tilde,
        },
        b,
        f_inf,
        diagnostics: CertDiagnostics {
            rho,
            sufficient_integral: Some(s_value),
            b_quad_error: input.lambda * b_tail.error + sufficient.error,
            eigen_residual: None,
        },
        rate_scale: 1.0 - rho_tilde,
    })
}

/// Manual parameters for the power-law regime.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PolynomialParams {
    pub kappa_tilde: f64,
    pub x0: f64,
    pub rho_tilde: f64,
}

/// Builds the power-law certificate for a polynomially tailed queue.
pub fn build_mg1_polynomial(
    input: &DriftInput,
    envelope: &TailEnvelope,
    params: &PolynomialParams,
    tol: &Tolerances,
) -> Result<DriftCertificate, DriftError> {
    input.law.validate()?;
    require_positive_rate(input.lambda)?;
    let kappa = match envelope {
        TailEnvelope::Polynomial { kappa, .. } => *kappa,
        _ => {
            return Err(DriftError::WrongEnvelope {
                expected: "polynomial (power-law)",
            })
        }
    };
    check_envelope(&input.law, envelope)?;
    let rho = input.rho();
    if rho >= 1.0 {
        return Err(DriftError::Unstable { rho });
    }
    let PolynomialParams {
        kappa_tilde,
        x0,
        rho_tilde,
    } = *params;
    if kappa_tilde >= kappa {
        return Err(DriftError::TailTooHeavy { kappa_tilde, kappa });
    }
    if !(kappa_tilde > 1.0) {
        return Err(DriftError::InfeasibleParameters(format!(
            "kappa_tilde must exceed 1, got {kappa_tilde}"
        )));
    }
    if !(x0 >= 1.0) {
        return Err(DriftError::InfeasibleParameters(format!(
            "x0 must be at least 1, got {x0}"
        )));
    }
    if !(rho_tilde > rho && rho_tilde < 1.0) {
        return Err(DriftError::InfeasibleParameters(format!(
            "rho_tilde must lie in (rho, 1) = ({rho}, 1), got {rho_tilde}"
        )));
    }

    // Ratio domination: V'(x+y)/V'(x) <= (1 + y/x0)^{kappa~-1} for every x,
    // so this single integral certifies the drift condition uniformly.
    let law = input.law.clone();
    let sufficient = tail_integral(
        &input.law,
        move |y| (1.0 + y / x0).powf(kappa_tilde - 1.0) * law.tail(y),
        tol,
    )?;
    let s_value = input.lambda * sufficient.value;
    if s_value > rho_tilde {
        return Err(DriftError::InfeasibleParameters(format!(
            "sufficient integral lambda*I = {s_value:.6} exceeds rho_tilde = {rho_tilde}"
        )));
    }

    let law = input.law.clone();
    let b_tail = tail_integral(
        &input.law,
        move |y| law.tail(y) * kappa_tilde * (y + x0).powf(kappa_tilde - 1.0),
        tol,
    )?;
    let f_inf = (1.0 - rho_tilde) * kappa_tilde * x0.powf(kappa_tilde - 1.0);
    if f_inf < tol.f_inf_floor {
        return Err(DriftError::DegenerateDrift {
            f_inf,
            floor: tol.f_inf_floor,
        });
    }
    let b = f_inf + input.lambda * b_tail.value;
    Ok(DriftCertificate {
        regime: Regime::Polynomial,
        form: CertForm::PowerLaw {
            kappa_tilde,
            x0,
            rho_tilde,
        },
        b,
        f_inf,
        diagnostics: CertDiagnostics {
            rho,
            sufficient_integral: Some(s_value),
            b_quad_error: input.lambda * b_tail.error + sufficient.error,
            eigen_residual: None,
        },
        rate_scale: 1.0 - rho_tilde,
    })
}

fn check_envelope(law: &ServiceLaw, envelope: &TailEnvelope) -> Result<(), DriftError> {
    // Check out to where the envelope itself is negligible; beyond that the
    // claim has no numerical content.
    let x_max = match envelope {
        TailEnvelope::Moderate { coeff, gamma, beta } => {
            (((coeff.max(1.0)).ln() + 41.0) / gamma).powf(1.0 / beta)
        }
        TailEnvelope::Polynomial { coeff, kappa } => (coeff.max(1.0) * 1e12).powf(1.0 / kappa),
        TailEnvelope::LightTail { .. } => 1.0,
    };
    let grid = envelope_grid(x_max.max(1.0), 400);
    let check = verify_envelope(law, envelope, &grid);
    if !check.holds {
        return Err(DriftError::EnvelopeViolated {
            worst_x: check.worst_x,
            worst_ratio: check.worst_ratio,
        });
    }
    Ok(())
}

/// Semi-infinite tail integral splitting at the service law's discontinuity.
fn tail_integral(
    law: &ServiceLaw,
    integrand: impl Fn(f64) -> f64 + 'static,
    tol: &Tolerances,
) -> Result<QuadResult, DriftError> {
    let scale = law.mean().max(1e-3);
    match law.tail_break() {
        Some(brk) => {
            let head = crate::quad::integrate(&integrand, 0.0, brk, tol.quad_abs, tol.quad_rel)?;
            let tail = integrate_to_inf(&integrand, brk, scale, tol.quad_abs, tol.quad_rel)?;
            Ok(QuadResult {
                value: head.value + tail.value,
                error: head.error + tail.error,
            })
        }
        None => Ok(integrate_to_inf(
            &integrand,
            0.0,
            scale,
            tol.quad_abs,
            tol.quad_rel,
        )?),
    }
}

/// Arrival side of a queue model, for generator evaluation and witness/bias
/// cross-checks.
#[derive(Debug, Clone)]
pub enum QueueArrivals<'a> {
    Poisson { lambda: f64 },
    Map(&'a MarkovArrivalProcess),
}

impl QueueArrivals<'_> {
    pub fn phases(&self) -> usize {
        match self {
            Self::Poisson { .. } => 1,
            Self::Map(map) => map.phases(),
        }
    }
}

/// One grid point of the numerical drift re-check.
#[derive(Debug, Clone, Serialize)]
pub struct DriftCheckPoint {
    pub w: f64,
    pub phase: usize,
    /// `A V` at the point, computed by quadrature against the model.
    pub generator_value: f64,
    /// `-f + b 1{w = 0}` at the point.
    pub allowed: f64,
    /// Relative slack `(allowed - generator_value) / max(1, |generator_value|)`;
    /// the inequality holds when this is above `-tol.drift_check`.
    pub margin: f64,
    pub ok: bool,
}

/// Re-verifies the drift inequality `A V <= -f + b 1{w = 0}` on a workload
/// grid (crossed with every phase), evaluating the generator by quadrature:
///
/// ```text
///   scalar:  A V(w) = -V'(w) 1{w>0} + lambda * integral H̄(y) V'(w+y) dy
///   phase:   A V(w,i) = -V'(w,i) 1{w>0} + sum_j C[i][j] V(w,j)
///                        + sum_j D[i][j] [ V(w,j) + integral H̄(y) V'(w+y,j) dy ]
/// ```
///
/// both using the tail (integrated-by-parts) form of the service average,
/// which is valid because every certified potential keeps
/// `H̄(y) V(w + y) -> 0`.
pub fn generator_check(
    arrivals: &QueueArrivals,
    law: &ServiceLaw,
    cert: &DriftCertificate,
    grid: &[f64],
    tol: &Tolerances,
) -> Result<Vec<DriftCheckPoint>, DriftError> {
    if arrivals.phases() != cert.phases() {
        return Err(DriftError::ModelMismatch(format!(
            "model has {} phases, certificate has {}",
            arrivals.phases(),
            cert.phases()
        )));
    }
    let mut points = Vec::with_capacity(grid.len() * cert.phases());
    for &w in grid {
        if !(w >= 0.0) {
            return Err(DriftError::InfeasibleParameters(format!(
                "grid point {w} is negative"
            )));
        }
        for phase in 0..cert.phases() {
            let generator_value = apply_generator(arrivals, law, cert, w, phase, tol)?;
            let indicator = if w == 0.0 { cert.b } else { 0.0 };
            let allowed = -cert.drift_rate(w, phase) + indicator;
            let scale = generator_value.abs().max(1.0);
            let margin = (allowed - generator_value) / scale;
            points.push(DriftCheckPoint {
                w,
                phase,
                generator_value,
                allowed,
                margin,
                ok: margin >= -tol.drift_check,
            });
        }
    }
    Ok(points)
}

fn apply_generator(
    arrivals: &QueueArrivals,
    law: &ServiceLaw,
    cert: &DriftCertificate,
    w: f64,
    phase: usize,
    tol: &Tolerances,
) -> Result<f64, DriftError> {
    let decay = if w > 0.0 {
        -cert.potential_slope(w, phase)
    } else {
        0.0
    };
    // The quadrature tolerance must track the local potential scale or the
    // relative check degrades where V is large.
    let v_scale = cert.potential(w, phase).abs().max(1.0);
    match arrivals {
        QueueArrivals::Poisson { lambda } => {
            let c = cert.clone();
            let l = law.clone();
            let jump = tail_integral_at(
                law,
                move |y| l.tail(y) * c.potential_slope(w + y, 0),
                tol.quad_abs * v_scale,
                tol.quad_rel,
            )?;
            Ok(decay + lambda * jump)
        }
        QueueArrivals::Map(map) => {
            let mut acc = decay;
            for j in 0..map.phases() {
                let c_ij = map.c().get(phase, j);
                let d_ij = map.d().get(phase, j);
                if c_ij != 0.0 {
                    acc += c_ij * cert.potential(w, j);
                }
                if d_ij != 0.0 {
                    let c = cert.clone();
                    let l = law.clone();
                    let jump = tail_integral_at(
                        law,
                        move |y| l.tail(y) * c.potential_slope(w + y, j),
                        tol.quad_abs * v_scale,
                        tol.quad_rel,
                    )?;
                    acc += d_ij * (cert.potential(w, j) + jump);
                }
            }
            Ok(acc)
        }
    }
}

fn tail_integral_at(
    law: &ServiceLaw,
    integrand: impl Fn(f64) -> f64 + 'static,
    abs: f64,
    rel: f64,
) -> Result<f64, DriftError> {
    let scale = law.mean().max(1e-3);
    let value = match law.tail_break() {
        Some(brk) => {
            crate::quad::integrate(&integrand, 0.0, brk, abs, rel)?.value
                + integrate_to_inf(&integrand, brk, scale, abs, rel)?.value
        }
        None => integrate_to_inf(&integrand, 0.0, scale, abs, rel)?.value,
    };
    Ok(value)
}

/// How to pick `theta` on the feasible set `{theta > 0 : sigma(theta) < theta}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThetaStrategy {
    /// Maximize the drift floor `inf f = (theta - sigma(theta)) min_i u_i`.
    MaxMargin,
    /// Minimize the prefactor-weighted bound at a reference workload,
    /// `(1 + b(1 - rho)/f_inf) * (e^{theta x_ref} - 1)`, using the generic
    /// stationary-mean bound `<pi, f> <= b (1 - rho)`.
    MinPrefactor { x_ref: f64 },
}

/// Outcome of a deterministic `theta` search.
#[derive(Debug, Clone, Serialize)]
pub struct ThetaChoice {
    pub theta: f64,
    /// Objective value at the chosen point (floor for max-margin, bound
    /// value for min-prefactor).
    pub objective: f64,
    /// Upper end of the bracket the grid searched.
    pub search_upper: f64,
}

/// Selects `theta` for the scalar light-tail builder.
pub fn select_theta_mg1(
    input: &DriftInput,
    strategy: ThetaStrategy,
    tol: &Tolerances,
) -> Result<ThetaChoice, DriftError> {
    input.law.validate()?;
    require_positive_rate(input.lambda)?;
    let rho = input.rho();
    if rho >= 1.0 {
        return Err(DriftError::Unstable { rho });
    }
    select_theta_impl(
        strategy,
        tol,
        input.law.mgf_radius(),
        1.0 / input.law.mean(),
        rho,
        |theta| build_mg1_light(input, theta, tol),
    )
}

/// Selects `theta` for the MAP builder.
pub fn select_theta_map(
    map: &MarkovArrivalProcess,
    law: &ServiceLaw,
    strategy: ThetaStrategy,
    tol: &Tolerances,
) -> Result<ThetaChoice, DriftError> {
    law.validate()?;
    let stationary = map.stationary(tol)?;
    let rho = stationary.lambda * law.mean();
    if rho >= 1.0 {
        return Err(DriftError::Unstable { rho });
    }
    select_theta_impl(
        strategy,
        tol,
        law.mgf_radius(),
        1.0 / law.mean(),
        rho,
        |theta| build_map_gi1(map, law, theta, tol),
    )
}

fn select_theta_impl(
    strategy: ThetaStrategy,
    tol: &Tolerances,
    mgf_radius: f64,
    rate_scale: f64,
    rho: f64,
    build: impl Fn(f64) -> Result<DriftCertificate, DriftError>,
) -> Result<ThetaChoice, DriftError> {
    // Upper bracket: the transform radius when finite, else grow until the
    // drift margin closes (deterministic doubling).
    let upper = if mgf_radius.is_finite() {
        mgf_radius
    } else {
        let mut hi = rate_scale.max(1e-6);
        let mut steps = 0;
        while build(hi).is_ok() && steps < 64 {
            hi *= 2.0;
            steps += 1;
        }
        hi
    };
    let _ = tol;

    let objective = |cert: &DriftCertificate| -> f64 {
        match strategy {
            ThetaStrategy::MaxMargin => -cert.f_inf, // minimize the negative floor
            ThetaStrategy::MinPrefactor { x_ref } => {
                let theta = match cert.form {
                    CertForm::Exponential { theta, .. }
                    | CertForm::PhaseExponential { theta, .. } => theta,
                    _ => unreachable!("theta search only builds exponential certificates"),
                };
                (1.0 + cert.b * (1.0 - rho) / cert.f_inf) * ((theta * x_ref).exp() - 1.0)
            }
        }
    };

    // Coarse log grid, then one linear refinement around the best point:
    // deterministic candidate order, strict improvement, first winner kept.
    let mut best: Option<(f64, f64)> = None;
    let coarse: Vec<f64> = (0..120)
        .map(|j| upper * (1e-4_f64).powf(1.0 - j as f64 / 119.0) * 0.999_999)
        .collect();
    for &theta in &coarse {
        if let Ok(cert) = build(theta) {
            let obj = objective(&cert);
            if best.is_none_or(|(_, b)| obj < b) {
                best = Some((theta, obj));
            }
        }
    }
    let (theta0, _) = best.ok_or(DriftError::NoFeasibleTheta { upper })?;
    let lo = theta0 * 0.5;
    let hi = (theta0 * 1.5).min(upper * 0.999_999);
    for j in 0..=80 {
        let theta = lo + (hi - lo) * j as f64 / 80.0;
        if theta <= 0.0 {
            continue;
        }
        if let Ok(cert) = build(theta) {
            let obj = objective(&cert);
            if best.is_none_or(|(_, b)| obj < b) {
                best = Some((theta, obj));
            }
        }
    }
    let (theta, obj) = best.expect("a feasible point survived the coarse pass");
    let objective_out = match strategy {
        ThetaStrategy::MaxMargin => -obj,
        ThetaStrategy::MinPrefactor { .. } => obj,
    };
    Ok(ThetaChoice {
        theta,
        objective: objective_out,
        search_upper: upper,
    })
}

/// Deterministic coarse-to-fine search for a feasible stretched-exponential
/// certificate minimizing the prefactor proxy `1 + b(1-rho)/f_inf`.
pub fn search_moderate(
    input: &DriftInput,
    envelope: &TailEnvelope,
    tol: &Tolerances,
) -> Result<(DriftCertificate, ModerateParams), DriftError> {
    let (gamma, beta) = match envelope {
        TailEnvelope::Moderate { gamma, beta, .. } => (*gamma, *beta),
        _ => {
            return Err(DriftError::WrongEnvelope {
                expected: "moderate (stretched-exponential)",
            })
        }
    };
    let rho = input.rho();
    if rho >= 1.0 {
        return Err(DriftError::Unstable { rho });
    }
    let mut best: Option<(f64, DriftCertificate, ModerateParams)> = None;
    let mut last_err = String::from("no candidates evaluated");
    for eps_frac in [0.5, 0.25, 0.1, 0.05, 0.02, 0.01, 0.004] {
        let epsilon = gamma * eps_frac;
        let floor = moderate_x0_floor(epsilon, beta);
        for x0_mult in [1.0, 1.5, 2.0, 4.0] {
            let x0 = floor * x0_mult;
            for q in [0.5, 0.75, 0.9] {
                let rho_tilde = rho + (1.0 - rho) * q;
                let params = ModerateParams {
                    epsilon,
                    x0,
                    rho_tilde,
                };
                match build_mg1_moderate(input, envelope, &params, tol) {
                    Ok(cert) => {
                        let proxy = 1.0 + cert.b * (1.0 - rho) / cert.f_inf;
                        if best.as_ref().is_none_or(|(b, _, _)| proxy < *b) {
                            best = Some((proxy, cert, params));
                        }
                    }
                    Err(e) => last_err = e.to_string(),
                }
            }
        }
    }
    best.map(|(_, cert, params)| (cert, params))
        .ok_or(DriftError::NoFeasibleParameters { last: last_err })
}

/// Deterministic coarse-to-fine search for a feasible power-law certificate
/// minimizing the prefactor proxy `1 + b(1-rho)/f_inf`.
pub fn search_polynomial(
    input: &DriftInput,
    envelope: &TailEnvelope,
    tol: &Tolerances,
) -> Result<(DriftCertificate, PolynomialParams), DriftError> {
    let kappa = match envelope {
        TailEnvelope::Polynomial { kappa, .. } => *kappa,
        _ => {
            return Err(DriftError::WrongEnvelope {
                expected: "polynomial (power-law)",
            })
        }
    };
    let rho = input.rho();
    if rho >= 1.0 {
        return Err(DriftError::Unstable { rho });
    }
    let mut best: Option<(f64, DriftCertificate, PolynomialParams)> = None;
    let mut last_err = String::from("no candidates evaluated");
    for kappa_frac in [0.5, 0.65, 0.8, 0.9] {
        let kappa_tilde = 1.0 + (kappa - 1.0) * kappa_frac;
        for x0 in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
            for q in [0.5, 0.75, 0.9] {
                let rho_tilde = rho + (1.0 - rho) * q;
                let params = PolynomialParams {
                    kappa_tilde,
                    x0,
                    rho_tilde,
                };
                match build_mg1_polynomial(input, envelope, &params, tol) {
                    Ok(cert) => {
                        let proxy = 1.0 + cert.b * (1.0 - rho) / cert.f_inf;
                        if best.as_ref().is_none_or(|(b, _, _)| proxy < *b) {
                            best = Some((proxy, cert, params));
                        }
                    }
                    Err(e) => last_err = e.to_string(),
                }
            }
        }
    }
    best.map(|(_, cert, params)| (cert, params))
        .ok_or(DriftError::NoFeasibleParameters { last: last_err })
}
