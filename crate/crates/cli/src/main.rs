//! Command-line front end: declarative model files in, reproducible
//! reports out.
//!
//! Three subcommands cover the pipeline:
//!
//! * `bound` builds a drift certificate for the model (searching free
//!   parameters when asked), attaches a return-time witness where the model
//!   needs one, and emits the bias-bound curve on a workload grid;
//! * `wcl-distance` bounds the weighted stationary distance between the
//!   capacity-limited queue and its uncapped counterpart;
//! * `verify` reruns every claim empirically: it simulates the queue with
//!   the built-in regenerative estimators and checks each bound against
//!   its estimate, reporting one margin per check.
//!
//! Reports are JSON on standard output (or `--out`); curves also export as
//! CSV via `--csv`. Every simulation seed derives deterministically from
//! the run seed, so reruns with the same inputs are byte-identical.
//!
//! Exit codes: 0 success, 2 malformed input (including a missing seed for
//! `verify`), 3 infeasible model or certificate, 4 a verification check
//! failed.

// `!(x > 0.0)` guards are deliberate: they reject NaN flag values too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use driftbound::arrival::MarkovArrivalProcess;
use driftbound::bound::{
    atom_bound, general_bound, map_gi1_witness, map_gi1_witness_special, optimize_witness,
    BoundError, BoundReport, ReturnWitness,
};
use driftbound::drift::{
    build_map_gi1, build_mg1_light, build_mg1_moderate, build_mg1_polynomial, search_moderate,
    search_polynomial, select_theta_map, select_theta_mg1, DriftCertificate, DriftError,
    DriftInput, ModerateParams, PolynomialParams, ThetaStrategy,
};
use driftbound::model::{ModelError, ModelFile, ModelKind, RegimeChoice};
use driftbound::report::{
    write_curve_csv, CheckResult, CurvePoint, Estimate, Quantity, Report, RunOptions,
};
use driftbound::service::TailEnvelope;
use driftbound::sim::{
    estimate_h, estimate_pi_g, estimate_return_probability, estimate_stationary_histogram,
    QueueModel, RegenerativeEstimate, Reward, SimError, WorkloadState,
};
use driftbound::wcl::{wcl_distance_bound, WclError};
use driftbound::Tolerances;

/// Grid of return-time offsets tried when the model file does not pin the
/// witness parameters.
const T0_GRID: [f64; 5] = [0.1, 0.25, 0.5, 1.0, 2.0];
/// Grid of return-time spacings tried alongside [`T0_GRID`].
const X0_GRID: [f64; 6] = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0];

const DEFAULT_GRID: &str = "0:4.5:0.5";
const DEFAULT_REPS: u64 = 10_000;
const DEFAULT_DISTANCE_TOL: f64 = 1e-3;
/// Histogram resolution for the empirical stationary-distance check.
const DISTANCE_BINS: usize = 40;

#[derive(Parser)]
#[command(
    name = "driftbound",
    version,
    about = "Explicit workload-bias bounds for single-server queues, \
             with built-in empirical verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a drift certificate and emit the bias-bound curve.
    Bound(RunArgs),
    /// Bound the stationary distance a workload capacity limit induces.
    WclDistance(RunArgs),
    /// Simulate the model and check every applicable bound empirically.
    Verify(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON model file.
    #[arg(long)]
    model: PathBuf,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the curve (or series breakdown) as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Simulation seed; `verify` requires one here or in the model file.
    #[arg(long)]
    seed: Option<u64>,
    /// Replications per estimate (default 10000).
    #[arg(long)]
    reps: Option<u64>,
    /// Workload grid as "start:end:step" (default "0:4.5:0.5").
    #[arg(long)]
    grid: Option<String>,
    /// Error budget for the distance bound (default 1e-3).
    #[arg(long)]
    tol: Option<f64>,
    /// Drift regime override: light, moderate, or polynomial.
    #[arg(long)]
    regime: Option<String>,
    /// Search certificate parameters even when the file pins them.
    #[arg(long)]
    auto: bool,
}

/// A run failure carrying its exit code.
#[derive(Debug)]
enum Failure {
    /// Malformed input: unreadable or unparsable files, bad flags,
    /// missing seed for `verify`, structurally invalid models.
    Input(String),
    /// Valid input with no feasible certificate, witness, or bound.
    Infeasible(String),
    /// A verification check failed; the report names the state and margin.
    Verification(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Verification(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Infeasible(m) | Failure::Verification(m) => m,
        }
    }
}

fn infeasible(e: impl ToString) -> Failure {
    Failure::Infeasible(e.to_string())
}

fn drift_failure(e: DriftError) -> Failure {
    Failure::Infeasible(e.to_string())
}

fn bound_failure(e: BoundError) -> Failure {
    Failure::Infeasible(e.to_string())
}

fn sim_failure(e: SimError) -> Failure {
    Failure::Infeasible(e.to_string())
}

fn wcl_failure(e: WclError) -> Failure {
    match e {
        WclError::InvalidParameter(_) | WclError::Service(_) => Failure::Input(e.to_string()),
        other => Failure::Infeasible(other.to_string()),
    }
}

fn model_failure(e: ModelError) -> Failure {
    match e {
        ModelError::Wcl(w) => wcl_failure(w),
        other => Failure::Input(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Bound(args) => cmd_bound(args),
        Command::WclDistance(args) => cmd_wcl_distance(args),
        Command::Verify(args) => cmd_verify(args),
    }
}

// ---------------------------------------------------------------------------
// Shared plumbing

fn load_model(path: &Path) -> Result<ModelFile, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
    let file: ModelFile = serde_json::from_str(&text)
        .map_err(|e| Failure::Input(format!("cannot parse {}: {e}", path.display())))?;
    file.validate().map_err(model_failure)?;
    Ok(file)
}

/// Parses "start:end:step" into an inclusive grid.
fn parse_grid(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || {
        Failure::Input(format!(
            "grid '{spec}' must be start:end:step with step > 0"
        ))
    };
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || end < start || !start.is_finite() || !end.is_finite() || start < 0.0 {
        return Err(bad());
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// Echo of the effective options (after defaults), so a report names
/// everything needed to reproduce it.
fn echo_options(args: &RunArgs, seed: Option<u64>, regime: Option<RegimeChoice>) -> RunOptions {
    RunOptions {
        seed,
        reps: Some(args.reps.unwrap_or(DEFAULT_REPS)),
        grid: Some(
            args.grid
                .clone()
                .unwrap_or_else(|| DEFAULT_GRID.to_string()),
        ),
        tol: Some(args.tol.unwrap_or(DEFAULT_DISTANCE_TOL)),
        regime: regime.map(|r| r.to_string()),
        auto: args.auto,
    }
}

fn emit(report: &Report, args: &RunArgs) -> Result<(), Failure> {
    let mut json = serde_json::to_string_pretty(report)
        .map_err(|e| Failure::Input(format!("cannot serialize report: {e}")))?;
    json.push('\n');
    match &args.out {
        Some(path) => fs::write(path, json)
            .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{json}"),
    }
    if let Some(path) = &args.csv {
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &report.curve)
            .map_err(|e| Failure::Input(format!("cannot format CSV: {e}")))?;
        fs::write(path, buf)
            .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Certificate construction

/// Resolves the effective scalar regime: flag beats file, default light.
fn effective_regime(file: &ModelFile, args: &RunArgs) -> Result<RegimeChoice, Failure> {
    match &args.regime {
        Some(s) => s.parse::<RegimeChoice>().map_err(Failure::Input),
        None => Ok(file.regime.unwrap_or(RegimeChoice::Light)),
    }
}

/// Builds the scalar (Poisson-input) certificate, searching any parameter
/// the file leaves open (or all of them under `--auto`).
fn scalar_certificate(
    file: &ModelFile,
    args: &RunArgs,
    regime: RegimeChoice,
) -> Result<DriftCertificate, Failure> {
    let lambda = file.lambda.expect("validated mg1_wcl file has lambda");
    let input = DriftInput::new(lambda, file.service.clone());
    let tol = file.tolerances();
    match regime {
        RegimeChoice::Light => {
            let theta = match (args.auto, file.theta) {
                (false, Some(theta)) => theta,
                _ => {
                    select_theta_mg1(&input, ThetaStrategy::MaxMargin, &tol)
                        .map_err(drift_failure)?
                        .theta
                }
            };
            build_mg1_light(&input, theta, &tol).map_err(drift_failure)
        }
        RegimeChoice::Moderate => {
            let envelope = TailEnvelope::for_law(&input.law);
            match (args.auto, file.epsilon, file.x0, file.rho_tilde) {
                (false, Some(epsilon), Some(x0), Some(rho_tilde)) => {
                    let params = ModerateParams {
                        epsilon,
                        x0,
                        rho_tilde,
                    };
                    build_mg1_moderate(&input, &envelope, &params, &tol).map_err(drift_failure)
                }
                _ => search_moderate(&input, &envelope, &tol)
                    .map(|(cert, _)| cert)
                    .map_err(drift_failure),
            }
        }
        RegimeChoice::Polynomial => {
            let envelope = TailEnvelope::for_law(&input.law);
            match (args.auto, file.kappa_tilde, file.x0, file.rho_tilde) {
                (false, Some(kappa_tilde), Some(x0), Some(rho_tilde)) => {
                    let params = PolynomialParams {
                        kappa_tilde,
                        x0,
                        rho_tilde,
                    };
                    build_mg1_polynomial(&input, &envelope, &params, &tol).map_err(drift_failure)
                }
                _ => search_polynomial(&input, &envelope, &tol)
                    .map(|(cert, _)| cert)
                    .map_err(drift_failure),
            }
        }
    }
}

fn map_certificate(
    file: &ModelFile,
    args: &RunArgs,
    map: &MarkovArrivalProcess,
) -> Result<DriftCertificate, Failure> {
    let tol = file.tolerances();
    let theta = match (args.auto, file.theta) {
        (false, Some(theta)) => theta,
        _ => {
            select_theta_map(map, &file.service, ThetaStrategy::MaxMargin, &tol)
                .map_err(drift_failure)?
                .theta
        }
    };
    build_map_gi1(map, &file.service, theta, &tol).map_err(drift_failure)
}

/// Picks the return witness: explicit `(t0, x0)` from the file when given,
/// otherwise the best of a grid search and (when the direct-return rates
/// allow it) the vanishing-return-time limit.
fn map_witness(
    file: &ModelFile,
    map: &MarkovArrivalProcess,
    cert: &DriftCertificate,
    tol: &Tolerances,
) -> Result<ReturnWitness, Failure> {
    let i0 = cert.atom_phase();
    if let (Some(t0), Some(x0)) = (file.t0, file.x0) {
        return map_gi1_witness(map, &file.service, i0, t0, x0, tol).map_err(bound_failure);
    }
    let searched =
        optimize_witness(map, &file.service, i0, &T0_GRID, &X0_GRID, tol).map_err(bound_failure)?;
    Ok(match map_gi1_witness_special(map, i0) {
        Ok(special) if special.ratio() < searched.ratio() => special,
        _ => searched,
    })
}

/// The evaluated bound and the queueing context behind it.
enum ModelContext {
    Scalar { lambda: f64 },
    Map { map: MarkovArrivalProcess },
}

fn build_bound(
    file: &ModelFile,
    args: &RunArgs,
    regime: Option<RegimeChoice>,
) -> Result<(BoundReport, ModelContext), Failure> {
    let tol = file.tolerances();
    match file.kind {
        ModelKind::Mg1Wcl => {
            let cert = scalar_certificate(file, args, regime.expect("scalar regime resolved"))?;
            let rho = cert.diagnostics.rho;
            // The empty state is an atom with stationary mass 1 - rho.
            let bound = atom_bound(&cert, 1.0 - rho).map_err(bound_failure)?;
            let lambda = file.lambda.expect("validated mg1_wcl file has lambda");
            Ok((bound, ModelContext::Scalar { lambda }))
        }
        ModelKind::MapGi1 => {
            let map = file.arrival_process().map_err(model_failure)?;
            let cert = map_certificate(file, args, &map)?;
            let witness = map_witness(file, &map, &cert, &tol)?;
            let stationary = map.stationary(&tol).map_err(infeasible)?;
            let rho = stationary.lambda * file.service.mean();
            if rho >= 1.0 {
                return Err(Failure::Infeasible(format!(
                    "offered load rho = {rho} must be below 1"
                )));
            }
            // <pi, |g|> <= <pi, f> <= b pi(C) with pi(C) = 1 - rho by work
            // conservation (the level-0 set carries the idle mass).
            let pi_g_abs = cert.b * (1.0 - rho);
            let bound = general_bound(&cert, &witness, pi_g_abs).map_err(bound_failure)?;
            Ok((bound, ModelContext::Map { map }))
        }
    }
}

// ---------------------------------------------------------------------------
// bound

fn cmd_bound(args: RunArgs) -> Result<(), Failure> {
    let file = load_model(&args.model)?;
    let regime = match file.kind {
        ModelKind::Mg1Wcl => Some(effective_regime(&file, &args)?),
        ModelKind::MapGi1 => None,
    };
    let grid = parse_grid(args.grid.as_deref().unwrap_or(DEFAULT_GRID))?;
    let (bound, _ctx) = build_bound(&file, &args, regime)?;

    let seed = args.seed.or(file.seed);
    let mut report = Report::new("bound", file, echo_options(&args, seed, regime));
    report.set_bound(&bound);
    let phases = bound.certificate.phases();
    for &x in &grid {
        for phase in 0..phases {
            report.curve.push(CurvePoint {
                x,
                phase: (phases > 1).then_some(phase),
                bound: Quantity::new(bound.evaluate(x, phase), "prefactor * (V0(x) + additive)"),
                estimate: None,
            });
        }
    }
    emit(&report, &args)
}

// ---------------------------------------------------------------------------
// wcl-distance

fn cmd_wcl_distance(args: RunArgs) -> Result<(), Failure> {
    let file = load_model(&args.model)?;
    if file.kind != ModelKind::Mg1Wcl {
        return Err(Failure::Input(
            "wcl-distance needs an mg1_wcl model (a capacity to remove)".to_string(),
        ));
    }
    let regime = effective_regime(&file, &args)?;
    let model = file.wcl_model().map_err(model_failure)?;
    let cert = scalar_certificate(&file, &args, regime)?;
    let tol = args.tol.unwrap_or(DEFAULT_DISTANCE_TOL);
    let distance = wcl_distance_bound(&model, &cert, tol).map_err(wcl_failure)?;

    let seed = args.seed.or(file.seed);
    let mut report = Report::new(
        "wcl-distance",
        file,
        echo_options(&args, seed, Some(regime)),
    );
    report.certificate = Some(driftbound::report::CertificateSummary::from_certificate(
        &cert,
    ));
    let rho = cert.diagnostics.rho;
    report.prefactor = Some(Quantity::new(
        1.0 + cert.b * (1.0 - rho) / cert.f_inf,
        "1 + b (1 - rho) / inf f",
    ));
    // Series breakdown doubles as the exported curve: term index on the x
    // axis, weighted term value as the bound column.
    for (m, &term) in distance.terms.iter().enumerate() {
        report.curve.push(CurvePoint {
            x: m as f64,
            phase: None,
            bound: Quantity::new(term, "weighted series term"),
            estimate: None,
        });
    }
    report.distance = Some(driftbound::report::DistanceSummary::from_distance(
        &distance,
    ));
    emit(&report, &args)
}

// ---------------------------------------------------------------------------
// verify

fn cmd_verify(args: RunArgs) -> Result<(), Failure> {
    let file = load_model(&args.model)?;
    let seed = args.seed.or(file.seed).ok_or_else(|| {
        Failure::Input("verify requires a seed (--seed or a \"seed\" field)".to_string())
    })?;
    let reps = args.reps.unwrap_or(DEFAULT_REPS);
    let grid = parse_grid(args.grid.as_deref().unwrap_or(DEFAULT_GRID))?;
    let regime = match file.kind {
        ModelKind::Mg1Wcl => Some(effective_regime(&file, &args)?),
        ModelKind::MapGi1 => None,
    };
    let (bound, ctx) = build_bound(&file, &args, regime)?;

    let mut report = Report::new(
        "verify",
        file.clone(),
        echo_options(&args, Some(seed), regime),
    );
    report.set_bound(&bound);

    match ctx {
        ModelContext::Scalar { lambda } => {
            let queue = QueueModel::mg1(lambda, file.service.clone()).map_err(sim_failure)?;
            verify_bias_curve(&mut report, &bound, &queue, &grid, reps, seed)?;
            if let Some(cap) = file.capacity {
                if cap.0.is_finite() {
                    verify_distance(&mut report, &file, &args, &bound.certificate, reps, seed)?;
                }
            }
        }
        ModelContext::Map { map } => {
            let queue =
                QueueModel::map_gi1(map, file.service.clone(), bound.certificate.atom_phase())
                    .map_err(sim_failure)?;
            verify_bias_curve(&mut report, &bound, &queue, &grid, reps, seed)?;
            verify_witness(&mut report, &bound, &queue, reps, seed)?;
            verify_occupation(&mut report, &bound, &queue, &grid, reps, seed)?;
        }
    }

    report.finalize_verdict();
    emit(&report, &args)?;
    if report.verdict == Some(false) {
        let failing = report
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{} at {} (margin {:.4e})", c.name, c.state, c.margin.value))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Failure::Verification(format!("checks failed: {failing}")));
    }
    Ok(())
}

/// Bias domination on the grid plus the atom-consistency check: estimates
/// of `h` with `g = f` against the evaluated bound at every state.
fn verify_bias_curve(
    report: &mut Report,
    bound: &BoundReport,
    queue: &QueueModel,
    grid: &[f64],
    reps: u64,
    seed: u64,
) -> Result<(), Failure> {
    let cert = &bound.certificate;
    let reward = Reward::CertRate(cert.clone());
    let pi_g = estimate_pi_g(queue, &reward, reps.max(1_000), seed).map_err(sim_failure)?;
    let phases = cert.phases();

    for (k, &x) in grid.iter().enumerate() {
        for phase in 0..phases {
            let start = WorkloadState::new(x, phase);
            let est = estimate_h(
                queue,
                &reward,
                start,
                reps,
                &pi_g,
                seed.wrapping_add(1 + (k * phases + phase) as u64),
            )
            .map_err(sim_failure)?;
            let b = Quantity::new(bound.evaluate(x, phase), "prefactor * (V0(x) + additive)");
            let estimate = Estimate::from_regenerative(&est, "regenerative bias estimator (g = f)");
            let state = if phases > 1 {
                format!("x = {x}, phase {phase}")
            } else {
                format!("x = {x}")
            };
            report.curve.push(CurvePoint {
                x,
                phase: (phases > 1).then_some(phase),
                bound: b.clone(),
                estimate: Some(estimate.clone()),
            });
            report.checks.push(CheckResult::domination(
                "bias-domination",
                state,
                b,
                estimate,
            ));
        }
    }

    // At the atom the standard solution vanishes identically; the check
    // passes when the estimate is statistically indistinguishable from 0.
    let atom = WorkloadState::new(0.0, queue.atom_phase());
    let est = estimate_h(queue, &reward, atom, reps, &pi_g, seed.wrapping_add(997))
        .map_err(sim_failure)?;
    let margin = 3.0 * est.std_error - est.point.abs();
    report.checks.push(CheckResult {
        name: "atom-zero".to_string(),
        state: format!("x = 0, phase {}", queue.atom_phase()),
        bound: Quantity::new(0.0, "h vanishes on the atom by construction"),
        estimate: Estimate::from_regenerative(&est, "regenerative bias estimator (g = f)"),
        margin: Quantity::new(margin, "3 * std_error - |estimate|"),
        pass: margin >= 0.0,
    });
    Ok(())
}

/// Witness validity: the observed probability of sitting in the atom at
/// the witness time must not undercut `xi_T` from any phase.
fn verify_witness(
    report: &mut Report,
    bound: &BoundReport,
    queue: &QueueModel,
    reps: u64,
    seed: u64,
) -> Result<(), Failure> {
    let Some(witness) = &bound.witness else {
        return Ok(());
    };
    let (time, xi) = match witness {
        ReturnWitness::MapFormula { time, xi, .. } | ReturnWitness::UserSupplied { time, xi } => {
            (*time, *xi)
        }
        // The vanishing-return-time limit has no finite probe to simulate.
        ReturnWitness::SpecialCaseLimit { .. } => return Ok(()),
    };
    for phase in 0..queue.phases() {
        let est = estimate_return_probability(
            queue,
            phase,
            time,
            reps,
            seed.wrapping_add(2_000 + phase as u64),
        )
        .map_err(sim_failure)?;
        let margin = est.point + 3.0 * est.std_error - xi;
        report.checks.push(CheckResult {
            name: "return-probability".to_string(),
            state: format!("start (0, {phase}), probe t = {time}"),
            bound: Quantity::new(xi, "xi_T (witness lower bound)"),
            estimate: Estimate::from_regenerative(
                &est,
                "atom-occupancy fraction at the probe time",
            ),
            margin: Quantity::new(margin, "estimate + 3 * std_error - xi_T"),
            pass: margin >= 0.0,
        });
    }
    Ok(())
}

/// Small-set occupation: expected time spent at workload zero before the
/// atom is hit must stay below the witness ratio `T / xi_T`.
fn verify_occupation(
    report: &mut Report,
    bound: &BoundReport,
    queue: &QueueModel,
    grid: &[f64],
    reps: u64,
    seed: u64,
) -> Result<(), Failure> {
    let Some(witness) = &bound.witness else {
        return Ok(());
    };
    let ratio = witness.ratio();
    let phases = queue.phases();
    let zero = RegenerativeEstimate {
        point: 0.0,
        std_error: 0.0,
        n: 1,
        seed: 0,
    };
    let occupancy = Reward::Band { lo: 0.0, hi: 0.0 };
    let top = grid.last().copied().unwrap_or(4.5);
    let starts: Vec<WorkloadState> = (0..5)
        .map(|j| WorkloadState::new(top * j as f64 / 4.0, (j + 1) % phases))
        .collect();
    for (j, &start) in starts.iter().enumerate() {
        let est = estimate_h(
            queue,
            &occupancy,
            start,
            reps,
            &zero,
            seed.wrapping_add(3_000 + j as u64),
        )
        .map_err(sim_failure)?;
        let margin = ratio - est.point - 3.0 * est.std_error;
        report.checks.push(CheckResult {
            name: "occupation".to_string(),
            state: format!("start ({}, {})", start.w, start.phase),
            bound: Quantity::new(ratio, "T / xi_T"),
            estimate: Estimate::from_regenerative(
                &est,
                "mean time at workload zero before hitting the atom",
            ),
            margin: Quantity::new(margin, "T/xi_T - estimate - 3 * std_error"),
            pass: margin >= 0.0,
        });
    }
    Ok(())
}

/// Stationary-distance domination: the f-weighted histogram distance
/// between the capped and uncapped queues against the series bound.
fn verify_distance(
    report: &mut Report,
    file: &ModelFile,
    args: &RunArgs,
    cert: &DriftCertificate,
    reps: u64,
    seed: u64,
) -> Result<(), Failure> {
    let model = file.wcl_model().map_err(model_failure)?;
    let tol = args.tol.unwrap_or(DEFAULT_DISTANCE_TOL);
    let distance = wcl_distance_bound(&model, cert, tol).map_err(wcl_failure)?;
    report.distance = Some(driftbound::report::DistanceSummary::from_distance(
        &distance,
    ));

    let capacity = model.capacity();
    let lambda = model.lambda();
    let uncapped = QueueModel::mg1(lambda, file.service.clone()).map_err(sim_failure)?;
    let capped =
        QueueModel::mg1_wcl(lambda, file.service.clone(), capacity).map_err(sim_failure)?;
    let edges: Vec<f64> = (1..=DISTANCE_BINS)
        .map(|i| capacity * i as f64 / DISTANCE_BINS as f64)
        .collect();
    let cycles = reps.max(1_000);
    let hist_u = estimate_stationary_histogram(&uncapped, &edges, cycles, seed.wrapping_add(4_000))
        .map_err(sim_failure)?;
    let hist_c = estimate_stationary_histogram(&capped, &edges, cycles, seed.wrapping_add(4_001))
        .map_err(sim_failure)?;

    // Empirical f-weighted total variation restricted to [0, L]: the test
    // weight is f truncated at the capacity, an admissible choice since
    // the bound covers every 0 <= g-bar <= f.
    let mut value = cert.drift_rate(0.0, 0) * (hist_u.atom.point - hist_c.atom.point).abs();
    let mut variance =
        (cert.drift_rate(0.0, 0) * (hist_u.atom.std_error + hist_c.atom.std_error)).powi(2);
    let mut lo = 0.0;
    for (i, &hi) in edges.iter().enumerate() {
        let mid = 0.5 * (lo + hi);
        let weight = cert.drift_rate(mid, 0);
        value += weight * (hist_u.bins[i].point - hist_c.bins[i].point).abs();
        variance += (weight * hist_u.bins[i].std_error).powi(2)
            + (weight * hist_c.bins[i].std_error).powi(2);
        lo = hi;
    }
    let estimate = Estimate {
        value,
        std_error: variance.sqrt(),
        n: cycles,
        seed,
        provenance: "f-weighted histogram distance on [0, L] (g-bar = f truncated at L)"
            .to_string(),
    };
    report.checks.push(CheckResult::domination(
        "stationary-distance",
        format!("L = {capacity}"),
        Quantity::new(distance.value, "series distance bound"),
        estimate,
    ));
    Ok(())
}
