//! Self-contained run reports.
//!
//! A [`Report`] records one command run end to end: the parsed model file
//! and the options that drove the run (so the run can be reproduced from
//! the report alone), the certificate and witness that were built, the
//! evaluated bound curve, any simulation estimates with their standard
//! errors, and per-check verdicts. Every computed number travels with a
//! `provenance` string naming the formula or estimator it came from, so a
//! reader never has to guess which quantity a field holds.
//!
//! Reports serialize to a single JSON object with a stable field order
//! (struct order); two runs with the same inputs and seed produce
//! byte-identical serializations. Curves additionally export as CSV with
//! the fixed header `x[,phase],bound,estimate,std_error`.

use std::io::{self, Write};

use serde::Serialize;

use crate::bound::{BoundReport, ReturnWitness};
use crate::drift::{CertForm, DriftCertificate, Regime};
use crate::model::ModelFile;
use crate::sim::RegenerativeEstimate;
use crate::wcl::DistanceBound;

/// A computed number plus the formula that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct Quantity {
    pub value: f64,
    pub provenance: String,
}

impl Quantity {
    pub fn new(value: f64, provenance: impl Into<String>) -> Self {
        Self {
            value,
            provenance: provenance.into(),
        }
    }
}

/// A named parameter with its provenance, used for certificate and witness
/// parameter lists where the set of fields depends on the regime.
#[derive(Debug, Clone, Serialize)]
pub struct Param {
    pub name: String,
    pub value: f64,
    pub provenance: String,
}

impl Param {
    pub fn new(name: impl Into<String>, value: f64, provenance: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            value,
            provenance: provenance.into(),
        }
    }
}

/// A simulation estimate with its standard error and replication count.
#[derive(Debug, Clone, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n: u64,
    pub seed: u64,
    pub provenance: String,
}

impl Estimate {
    pub fn from_regenerative(est: &RegenerativeEstimate, provenance: impl Into<String>) -> Self {
        Self {
            value: est.point,
            std_error: est.std_error,
            n: est.n,
            seed: est.seed,
            provenance: provenance.into(),
        }
    }
}

/// Certificate echo: regime, form parameters, and the derived constants,
/// each with the formula it came from.
#[derive(Debug, Clone, Serialize)]
pub struct CertificateSummary {
    pub regime: String,
    pub params: Vec<Param>,
    pub b: Quantity,
    pub f_inf: Quantity,
    pub rho: Quantity,
}

impl CertificateSummary {
    pub fn from_certificate(cert: &DriftCertificate) -> Self {
        let mut params = Vec::new();
        let (regime, b_prov, f_prov) = match &cert.form {
            CertForm::PhaseExponential {
                theta,
                sigma,
                u,
                atom_phase,
            } => {
                params.push(Param::new("theta", *theta, "potential exponent"));
                params.push(Param::new(
                    "sigma",
                    *sigma,
                    "Perron growth rate of C + D * Hhat(theta)",
                ));
                for (i, ui) in u.iter().enumerate() {
                    params.push(Param::new(
                        format!("u[{i}]"),
                        *ui,
                        "Perron left-compatible weight vector, max-normalized",
                    ));
                }
                params.push(Param::new(
                    "atom_phase",
                    *atom_phase as f64,
                    "phase where the weight vector attains 1",
                ));
                (
                    "map_exponential",
                    "b = theta (weights are max-normalized)",
                    "inf f = (theta - sigma) min_i u_i",
                )
            }
            CertForm::Exponential { theta, sigma } => {
                params.push(Param::new("theta", *theta, "potential exponent"));
                params.push(Param::new(
                    "sigma",
                    *sigma,
                    "sigma(theta) = lambda (E e^{theta S} - 1)",
                ));
                ("light", "b = theta", "inf f = theta - sigma")
            }
            CertForm::StretchedExponential {
                epsilon,
                beta,
                x0,
                rho_tilde,
            } => {
                params.push(Param::new(
                    "epsilon",
                    *epsilon,
                    "stretched-exponential coefficient",
                ));
                params.push(Param::new("beta", *beta, "stretched-exponential exponent"));
                params.push(Param::new(
                    "x0",
                    *x0,
                    "potential shift (above the convexity floor)",
                ));
                params.push(Param::new("rho_tilde", *rho_tilde, "inflated-load target"));
                (
                    "moderate",
                    "b = inf f + lambda * integral H-bar(y) V'(y) dy",
                    "inf f = (1 - rho_tilde) V'(0)",
                )
            }
            CertForm::PowerLaw {
                kappa_tilde,
                x0,
                rho_tilde,
            } => {
                params.push(Param::new("kappa_tilde", *kappa_tilde, "potential degree"));
                params.push(Param::new("x0", *x0, "potential shift (at least 1)"));
                params.push(Param::new("rho_tilde", *rho_tilde, "inflated-load target"));
                (
                    "polynomial",
                    "b = inf f + lambda * integral H-bar(y) V'(y) dy",
                    "inf f = (1 - rho_tilde) V'(0)",
                )
            }
        };
        if let Some(s) = cert.diagnostics.sufficient_integral {
            params.push(Param::new(
                "sufficient_integral",
                s,
                "x-uniform drift feasibility integral (must be <= rho_tilde)",
            ));
        }
        if let Some(r) = cert.diagnostics.eigen_residual {
            params.push(Param::new("eigen_residual", r, "Perron pair residual"));
        }
        Self {
            regime: regime.to_string(),
            params,
            b: Quantity::new(cert.b, b_prov),
            f_inf: Quantity::new(cert.f_inf, f_prov),
            rho: Quantity::new(cert.diagnostics.rho, "rho = lambda * E[S]"),
        }
    }
}

/// Witness echo: which construction produced the return-probability pair
/// and the numbers it certifies.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessSummary {
    pub kind: String,
    pub params: Vec<Param>,
    pub ratio: Quantity,
}

impl WitnessSummary {
    pub fn from_witness(witness: &ReturnWitness) -> Self {
        let (kind, params) = match witness {
            ReturnWitness::MapFormula { t0, x0, time, xi } => (
                "map_formula",
                vec![
                    Param::new("t0", *t0, "return-time offset (input)"),
                    Param::new("x0", *x0, "return-time spacing (input)"),
                    Param::new("time", *time, "T = t0 + phases * x0"),
                    Param::new(
                        "xi",
                        *xi,
                        "xi_T = prod H-bar(x0) * min diag of e^{C t0} (D e^{C x0})^phases",
                    ),
                ],
            ),
            ReturnWitness::SpecialCaseLimit { ratio } => (
                "special_case_limit",
                vec![Param::new(
                    "ratio",
                    *ratio,
                    "T -> 0 limit under positive direct return rates",
                )],
            ),
            ReturnWitness::UserSupplied { time, xi } => (
                "user_supplied",
                vec![
                    Param::new("time", *time, "T (user supplied)"),
                    Param::new("xi", *xi, "xi_T (user supplied)"),
                ],
            ),
        };
        Self {
            kind: kind.to_string(),
            params,
            ratio: Quantity::new(witness.ratio(), "T / xi_T"),
        }
    }
}

/// One sample of the bound curve, optionally paired with a simulation
/// estimate of the bias at the same state.
#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub x: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<usize>,
    pub bound: Quantity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<Estimate>,
}

/// Distance-bound echo with its error split and the per-term breakdown
/// behind the truncation decision.
#[derive(Debug, Clone, Serialize)]
pub struct DistanceSummary {
    pub value: Quantity,
    pub m_used: usize,
    pub truncation_error: Quantity,
    pub quadrature_error: Quantity,
    pub terms: Vec<Quantity>,
}

impl DistanceSummary {
    pub fn from_distance(d: &DistanceBound) -> Self {
        Self {
            value: Quantity::new(
                d.value,
                "kept series terms + truncation remainder + quadrature allowance",
            ),
            m_used: d.m_used,
            truncation_error: Quantity::new(
                d.truncation_error,
                "geometric remainder rho^{m+1} * scale * sup_term",
            ),
            quadrature_error: Quantity::new(
                d.quadrature_error,
                "inner quadrature + two-resolution Richardson disagreement",
            ),
            terms: d
                .terms
                .iter()
                .enumerate()
                .map(|(m, &t)| Quantity::new(t, format!("series term m = {m} (weights included)")))
                .collect(),
        }
    }
}

/// One empirical domination check: `margin = bound - |estimate| - 3 SE`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Human-readable state the check probed (e.g. `x = 2.5, phase 0`).
    pub state: String,
    pub bound: Quantity,
    pub estimate: Estimate,
    pub margin: Quantity,
    pub pass: bool,
}

impl CheckResult {
    /// Builds the check verdict from a bound value and an estimate; the
    /// margin convention treats the estimate's magnitude as the quantity
    /// that must stay below the bound.
    pub fn domination(
        name: impl Into<String>,
        state: impl Into<String>,
        bound: Quantity,
        estimate: Estimate,
    ) -> Self {
        let margin = bound.value - estimate.value.abs() - 3.0 * estimate.std_error;
        Self {
            name: name.into(),
            state: state.into(),
            bound,
            estimate,
            margin: Quantity::new(margin, "bound - |estimate| - 3 * std_error"),
            pass: margin >= 0.0,
        }
    }
}

/// Echo of the command-line options that drove a run; `None` fields were
/// not supplied and fell back to their documented defaults.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunOptions {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regime: Option<String>,
    pub auto: bool,
}

/// A complete, reproducible record of one command run.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    /// Which command produced this report.
    pub command: String,
    /// The parsed model file, echoed back verbatim.
    pub model: ModelFile,
    /// The options that drove the run.
    pub options: RunOptions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<WitnessSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prefactor: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub additive: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_g_abs: Option<Quantity>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub curve: Vec<CurvePoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<DistanceSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub checks: Vec<CheckResult>,
    /// Overall verdict: `Some(true)` iff every check passed; `None` when
    /// the command ran no checks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<bool>,
}

impl Report {
    /// Empty report skeleton for a command and its echoed inputs.
    pub fn new(command: impl Into<String>, model: ModelFile, options: RunOptions) -> Self {
        Self {
            command: command.into(),
            model,
            options,
            certificate: None,
            witness: None,
            prefactor: None,
            additive: None,
            pi_g_abs: None,
            curve: Vec::new(),
            distance: None,
            checks: Vec::new(),
            verdict: None,
        }
    }

    /// Installs the certificate/witness/prefactor block of an evaluated
    /// bound, wiring the provenance strings to the construction route.
    pub fn set_bound(&mut self, bound: &BoundReport) {
        self.certificate = Some(CertificateSummary::from_certificate(&bound.certificate));
        self.witness = bound.witness.as_ref().map(WitnessSummary::from_witness);
        self.prefactor = Some(Quantity::new(bound.prefactor, "1 + pi(|g|) / inf f"));
        let additive_prov = if bound.witness.is_some() {
            "b T / xi_T"
        } else {
            "0 (the small set is the atom)"
        };
        self.additive = Some(Quantity::new(bound.additive, additive_prov));
        let pi_prov = if bound.witness.is_some() {
            "pi(|g|) <= b pi(C) (or user-sharpened)"
        } else {
            "pi(|g|) <= b pi(alpha)"
        };
        self.pi_g_abs = Some(Quantity::new(bound.pi_g_abs, pi_prov));
    }

    /// Records the per-check conjunction into `verdict`.
    pub fn finalize_verdict(&mut self) {
        if !self.checks.is_empty() {
            self.verdict = Some(self.checks.iter().all(|c| c.pass));
        }
    }
}

/// Writes the curve as CSV with the fixed header
/// `x[,phase],bound,estimate,std_error`; the phase column appears exactly
/// when any point carries a phase. Missing estimates leave their cells
/// empty.
pub fn write_curve_csv<W: Write>(mut out: W, curve: &[CurvePoint]) -> io::Result<()> {
    let with_phase = curve.iter().any(|p| p.phase.is_some());
    if with_phase {
        writeln!(out, "x,phase,bound,estimate,std_error")?;
    } else {
        writeln!(out, "x,bound,estimate,std_error")?;
    }
    for p in curve {
        let (est, se) = match &p.estimate {
            Some(e) => (e.value.to_string(), e.std_error.to_string()),
            None => (String::new(), String::new()),
        };
        if with_phase {
            writeln!(
                out,
                "{},{},{},{},{}",
                p.x,
                p.phase.map(|i| i.to_string()).unwrap_or_default(),
                p.bound.value,
                est,
                se
            )?;
        } else {
            writeln!(out, "{},{},{},{}", p.x, p.bound.value, est, se)?;
        }
    }
    Ok(())
}

/// It is the regime name, as reports spell it, for a certificate regime.
pub fn regime_name(regime: Regime) -> &'static str {
    match regime {
        Regime::MapExponential => "map_exponential",
        Regime::Light => "light",
        Regime::Moderate => "moderate",
        Regime::Polynomial => "polynomial",
    }
}
