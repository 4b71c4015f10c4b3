//! Regenerative Monte Carlo engine for the certified queue models.
//!
//! The workload process is piecewise deterministic: between phase events it
//! decays at unit rate (sticking at zero), and at arrival events it jumps
//! up by a service draw, accepted under a capacity limit `L` only when the
//! post-jump workload stays within `L`. Each visit to the atom (empty
//! workload in the atom phase) is a regeneration point, so sample paths
//! split into i.i.d. cycles and every stationary quantity is a ratio of
//! cycle means with a delta-method standard error. That is what makes this
//! module an *oracle*: its estimates carry confidence intervals that the
//! closed-form bounds must dominate.
//!
//! Two design points remove hidden bias:
//!
//! * rewards are integrated **exactly** along each linear decay segment
//!   (exponential and polynomial primitives in closed form, band rewards by
//!   interval overlap), so there is no time-discretization error at all;
//! * every replication owns a counter-mode RNG stream derived from
//!   `(seed, replication index)`, making each estimate reproducible
//!   bit-for-bit and replications independent by construction.
//!
//! Cycles longer than a configurable cap abort with an error rather than
//! being dropped: a runaway cycle signals an unstable or mis-specified
//! model, and dropping it would bias every estimator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::arrival::MarkovArrivalProcess;
use crate::drift::DriftCertificate;
use crate::service::ServiceLaw;

/// Errors from simulation and estimation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("cycle exceeded the time cap {cap:.3e}; the model may be unstable")]
    ExplodedCycle { cap: f64 },
    #[error("{n} cycles requested but at least {min} are required")]
    TooFewCycles { n: u64, min: u64 },
    #[error("reward does not fit the model: {0}")]
    MismatchedReward(String),
    #[error("invalid start state: {0}")]
    InvalidStart(String),
    #[error("invalid histogram bins: {0}")]
    InvalidBins(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// Arrival side of a simulated queue.
#[derive(Debug, Clone)]
pub enum Arrivals {
    Poisson { lambda: f64 },
    Map(MarkovArrivalProcess),
}

/// A simulatable queue: arrivals, service law, optional workload capacity,
/// and the atom phase that marks regeneration.
#[derive(Debug, Clone)]
pub struct QueueModel {
    arrivals: Arrivals,
    law: ServiceLaw,
    /// Workload capacity; `f64::INFINITY` disables admission control.
    capacity: f64,
    atom_phase: usize,
    cycle_cap: f64,
}

const DEFAULT_CYCLE_CAP: f64 = 1e6;

impl QueueModel {
    /// Poisson arrivals, no capacity limit.
    pub fn mg1(lambda: f64, law: ServiceLaw) -> Result<Self, SimError> {
        Self::build(Arrivals::Poisson { lambda }, law, f64::INFINITY, 0)
    }

    /// Poisson arrivals with a workload capacity limit.
    pub fn mg1_wcl(lambda: f64, law: ServiceLaw, capacity: f64) -> Result<Self, SimError> {
        Self::build(Arrivals::Poisson { lambda }, law, capacity, 0)
    }

    /// Markov-modulated arrivals, no capacity limit.
    pub fn map_gi1(
        map: MarkovArrivalProcess,
        law: ServiceLaw,
        atom_phase: usize,
    ) -> Result<Self, SimError> {
        Self::build(Arrivals::Map(map), law, f64::INFINITY, atom_phase)
    }

    fn build(
        arrivals: Arrivals,
        law: ServiceLaw,
        capacity: f64,
        atom_phase: usize,
    ) -> Result<Self, SimError> {
        if let Arrivals::Poisson { lambda } = &arrivals {
            if !(lambda.is_finite() && *lambda > 0.0) {
                return Err(SimError::InvalidModel(format!(
                    "arrival rate {lambda} must be positive"
                )));
            }
        }
        if !(capacity > 0.0) {
            return Err(SimError::InvalidModel(format!(
                "capacity {capacity} must be positive"
            )));
        }
        let model = Self {
            arrivals,
            law,
            capacity,
            atom_phase,
            cycle_cap: DEFAULT_CYCLE_CAP,
        };
        if atom_phase >= model.phases() {
            return Err(SimError::InvalidModel(format!(
                "atom phase {atom_phase} out of range for {} phases",
                model.phases()
            )));
        }
        Ok(model)
    }

    /// Replaces the cycle time cap (default 1e6 time units).
    pub fn with_cycle_cap(mut self, cap: f64) -> Self {
        self.cycle_cap = cap;
        self
    }

    pub fn phases(&self) -> usize {
        match &self.arrivals {
            Arrivals::Poisson { .. } => 1,
            Arrivals::Map(map) => map.phases(),
        }
    }

    pub fn atom_phase(&self) -> usize {
        self.atom_phase
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn law(&self) -> &ServiceLaw {
        &self.law
    }

    fn event_rate(&self, phase: usize) -> f64 {
        match &self.arrivals {
            Arrivals::Poisson { lambda } => *lambda,
            Arrivals::Map(map) => map.event_rate(phase),
        }
    }

    fn in_atom(&self, w: f64, phase: usize) -> bool {
        w == 0.0 && phase == self.atom_phase
    }
}

/// A point of the workload state space: unfinished work plus arrival phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorkloadState {
    pub w: f64,
    pub phase: usize,
}

impl WorkloadState {
    pub fn new(w: f64, phase: usize) -> Self {
        Self { w, phase }
    }
}

/// Reward functions with exact integrals along linear decay segments.
#[derive(Debug, Clone)]
pub enum Reward {
    /// `g = c`.
    Constant(f64),
    /// `g(w, i) = coeff * e^{theta w} * weights[i]`.
    Exponential {
        coeff: f64,
        theta: f64,
        weights: Vec<f64>,
    },
    /// `g(w, i) = 1{lo <= w <= hi}`.
    Band { lo: f64, hi: f64 },
    /// `g = f` from a drift certificate (`rate_scale * dV/dw`).
    CertRate(DriftCertificate),
}

impl Reward {
    fn validate(&self, phases: usize) -> Result<(), SimError> {
        match self {
            Reward::Exponential { weights, .. } => {
                if weights.len() != phases {
                    return Err(SimError::MismatchedReward(format!(
                        "{} weights for {} phases",
                        weights.len(),
                        phases
                    )));
                }
            }
            Reward::CertRate(cert) => {
                if cert.phases() != phases {
                    return Err(SimError::MismatchedReward(format!(
                        "certificate has {} phases, model has {}",
                        cert.phases(),
                        phases
                    )));
                }
            }
            Reward::Band { lo, hi } => {
                if !(lo <= hi) {
                    return Err(SimError::MismatchedReward(format!(
                        "band [{lo}, {hi}] is empty"
                    )));
                }
            }
            Reward::Constant(_) => {}
        }
        Ok(())
    }

    /// Pointwise value `g(w, phase)`.
    pub fn eval(&self, w: f64, phase: usize) -> f64 {
        match self {
            Reward::Constant(c) => *c,
            Reward::Exponential {
                coeff,
                theta,
                weights,
            } => coeff * weights[phase] * (theta * w).exp(),
            Reward::Band { lo, hi } => {
                if *lo <= w && w <= *hi {
                    1.0
                } else {
                    0.0
                }
            }
            Reward::CertRate(cert) => cert.drift_rate(w, phase),
        }
    }

    /// Exact `integral_0^d g(w - s, phase) ds` along a unit-rate decay
    /// segment from `w` of length `d <= w`.
    fn decay_integral(&self, w: f64, d: f64, phase: usize) -> f64 {
        let w_end = w - d;
        match self {
            Reward::Constant(c) => c * d,
            Reward::Exponential {
                coeff,
                theta,
                weights,
            } => {
                if *theta == 0.0 {
                    coeff * weights[phase] * d
                } else {
                    coeff * weights[phase] * ((theta * w).exp() - (theta * w_end).exp()) / theta
                }
            }
            Reward::Band { lo, hi } => (hi.min(w) - lo.max(w_end)).max(0.0),
            Reward::CertRate(cert) => {
                cert.drift_rate_primitive(w, phase) - cert.drift_rate_primitive(w_end, phase)
            }
        }
    }
}

/// One regeneration cycle (or one hitting path), with exact time integrals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleRecord {
    /// Cycle length (time to the next atom entry).
    pub tau: f64,
    /// `integral_0^tau g(X(t)) dt`.
    pub g_integral: f64,
    /// Time spent in the empty-workload set (any phase).
    pub occupation_c: f64,
    /// Arrival events seen (accepted or rejected).
    pub arrivals: u64,
    /// Whether the path first reached the atom within the probe horizon
    /// (always true for paths started inside the atom; false without a
    /// probe).
    pub hit_alpha_by_t: bool,
}

/// A reproducible point estimate with its regenerative standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegenerativeEstimate {
    pub point: f64,
    pub std_error: f64,
    pub n: u64,
    pub seed: u64,
}

/// Derives the RNG stream for replication `index` of a run keyed by `seed`.
fn stream(seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

enum EventKind {
    PhaseJump(usize),
    Arrival(usize),
}

/// Draws the next dwell time and event type from phase `i`.
fn next_event<R: Rng + ?Sized>(model: &QueueModel, i: usize, rng: &mut R) -> (f64, EventKind) {
    let q = model.event_rate(i);
    let dwell = -(1.0 - rng.gen::<f64>()).ln() / q;
    match &model.arrivals {
        Arrivals::Poisson { .. } => (dwell, EventKind::Arrival(0)),
        Arrivals::Map(map) => {
            let mut u = rng.gen::<f64>() * q;
            let m = map.phases();
            let mut fallback = EventKind::PhaseJump(i);
            for j in 0..m {
                if j == i {
                    continue;
                }
                let rate = map.c().get(i, j);
                if rate > 0.0 {
                    fallback = EventKind::PhaseJump(j);
                    if u < rate {
                        return (dwell, EventKind::PhaseJump(j));
                    }
                    u -= rate;
                }
            }
            for j in 0..m {
                let rate = map.d().get(i, j);
                if rate > 0.0 {
                    fallback = EventKind::Arrival(j);
                    if u < rate {
                        return (dwell, EventKind::Arrival(j));
                    }
                    u -= rate;
                }
            }
            // Rounding can leave a sliver of u; attribute it to the last
            // positive-rate category.
            (dwell, fallback)
        }
    }
}

/// Accumulates exact segment integrals along a path.
struct PathAccum<'a> {
    reward: &'a Reward,
    time: f64,
    g_integral: f64,
    occupation_c: f64,
    arrivals: u64,
    /// Optional histogram: bin edges and per-bin occupation, laid out as
    /// `[atom, (0,e1], .., (e_{k-1},e_k], (e_k, inf)]`.
    edges: Option<&'a [f64]>,
    bin_occ: Vec<f64>,
}

impl<'a> PathAccum<'a> {
    fn new(reward: &'a Reward, edges: Option<&'a [f64]>) -> Self {
        let bin_occ = edges.map_or(Vec::new(), |e| vec![0.0; e.len() + 2]);
        Self {
            reward,
            time: 0.0,
            g_integral: 0.0,
            occupation_c: 0.0,
            arrivals: 0,
            edges,
            bin_occ,
        }
    }

    /// A flat segment at zero workload.
    fn flat(&mut self, duration: f64, phase: usize) {
        if duration <= 0.0 {
            return;
        }
        self.time += duration;
        self.occupation_c += duration;
        self.g_integral += self.reward.eval(0.0, phase) * duration;
        if self.edges.is_some() {
            self.bin_occ[0] += duration;
        }
    }

    /// A unit-rate decay segment from `w` of length `d <= w`.
    fn decay(&mut self, w: f64, d: f64, phase: usize) {
        if d <= 0.0 {
            return;
        }
        self.time += d;
        self.g_integral += self.reward.decay_integral(w, d, phase);
        if let Some(edges) = self.edges {
            // Time spent with workload in (a, b] equals the overlap of
            // [w - d, w] with (a, b], by the unit decay rate.
            let w_end = w - d;
            let mut lo = 0.0_f64;
            for (k, &edge) in edges.iter().enumerate() {
                let overlap = (edge.min(w) - lo.max(w_end)).max(0.0);
                self.bin_occ[k + 1] += overlap;
                lo = edge;
            }
            let last = *edges.last().expect("validated nonempty");
            self.bin_occ[edges.len() + 1] += (w - last.max(w_end)).max(0.0);
        }
    }
}

enum StopRule {
    /// Stop at the first entry into the atom (start must lie outside).
    AtomEntry,
    /// Stop at an exact horizon; never stops early.
    Horizon(f64),
}

struct PathEnd {
    state: WorkloadState,
}

/// Core event loop. Advances from `start`, pushing exact segments into
/// `acc`, until the stop rule fires or the time cap is exceeded.
fn run_path<R: Rng + ?Sized>(
    model: &QueueModel,
    start: WorkloadState,
    stop: StopRule,
    acc: &mut PathAccum,
    rng: &mut R,
) -> Result<PathEnd, SimError> {
    let mut w = start.w;
    let mut phase = start.phase;
    let horizon = match stop {
        StopRule::Horizon(t) => t,
        StopRule::AtomEntry => f64::INFINITY,
    };
    let stop_at_atom = matches!(stop, StopRule::AtomEntry);

    loop {
        if acc.time > model.cycle_cap {
            return Err(SimError::ExplodedCycle {
                cap: model.cycle_cap,
            });
        }
        let (dwell, event) = next_event(model, phase, rng);
        let remaining = horizon - acc.time;

        // Horizon cut: close the truncated segment and report the state.
        if dwell >= remaining {
            if w > 0.0 {
                let d = remaining.min(w);
                acc.decay(w, d, phase);
                w -= d;
                if w == 0.0 {
                    acc.flat(remaining - d, phase);
                }
            } else {
                acc.flat(remaining, phase);
            }
            return Ok(PathEnd {
                state: WorkloadState::new(w, phase),
            });
        }

        // Within the dwell: decay, possibly hitting zero.
        if w > 0.0 {
            if dwell >= w {
                acc.decay(w, w, phase);
                let spare = dwell - w;
                w = 0.0;
                if stop_at_atom && phase == model.atom_phase {
                    return Ok(PathEnd {
                        state: WorkloadState::new(0.0, phase),
                    });
                }
                acc.flat(spare, phase);
            } else {
                acc.decay(w, dwell, phase);
                w -= dwell;
            }
        } else {
            acc.flat(dwell, phase);
        }

        // The event itself.
        match event {
            EventKind::PhaseJump(j) => {
                phase = j;
            }
            EventKind::Arrival(j) => {
                acc.arrivals += 1;
                let s = model.law.sample(rng);
                if w + s <= model.capacity {
                    w += s;
                }
                phase = j;
            }
        }
        if stop_at_atom && model.in_atom(w, phase) {
            return Ok(PathEnd {
                state: WorkloadState::new(w, phase),
            });
        }
    }
}

fn check_start(model: &QueueModel, start: WorkloadState) -> Result<(), SimError> {
    if !(start.w >= 0.0 && start.w.is_finite()) {
        return Err(SimError::InvalidStart(format!(
            "workload {} must be a nonnegative real",
            start.w
        )));
    }
    if start.w > model.capacity {
        return Err(SimError::InvalidStart(format!(
            "workload {} exceeds the capacity {}",
            start.w, model.capacity
        )));
    }
    if start.phase >= model.phases() {
        return Err(SimError::InvalidStart(format!(
            "phase {} out of range for {} phases",
            start.phase,
            model.phases()
        )));
    }
    Ok(())
}

/// Simulates one regeneration cycle (for starts inside the atom: the atom
/// sojourn plus the excursion back) or one hitting path (for starts outside
/// the atom: until the first atom entry), integrating `g` exactly.
///
/// `probe` optionally asks whether the atom was reached within that time;
/// the answer lands in [`CycleRecord::hit_alpha_by_t`].
pub fn simulate_cycle<R: Rng + ?Sized>(
    model: &QueueModel,
    start: WorkloadState,
    reward: &Reward,
    probe: Option<f64>,
    rng: &mut R,
) -> Result<CycleRecord, SimError> {
    reward.validate(model.phases())?;
    check_start(model, start)?;
    let mut acc = PathAccum::new(reward, None);
    let hit_time = run_cycle_path(model, start, &mut acc, rng)?;
    Ok(CycleRecord {
        tau: acc.time,
        g_integral: acc.g_integral,
        occupation_c: acc.occupation_c,
        arrivals: acc.arrivals,
        hit_alpha_by_t: probe.is_some_and(|t| hit_time <= t),
    })
}

/// Runs the cycle/hitting path into `acc`; returns the first time the path
/// was in the atom (0 for atom starts).
fn run_cycle_path<R: Rng + ?Sized>(
    model: &QueueModel,
    start: WorkloadState,
    acc: &mut PathAccum,
    rng: &mut R,
) -> Result<f64, SimError> {
    let mut state = start;
    if model.in_atom(state.w, state.phase) {
        // Atom sojourn: flat segments until an event takes the state out.
        // Rejected arrivals landing back in the atom phase prolong it.
        loop {
            if acc.time > model.cycle_cap {
                return Err(SimError::ExplodedCycle {
                    cap: model.cycle_cap,
                });
            }
            let (dwell, event) = next_event(model, state.phase, rng);
            acc.flat(dwell, state.phase);
            match event {
                EventKind::PhaseJump(j) => {
                    state.phase = j;
                }
                EventKind::Arrival(j) => {
                    acc.arrivals += 1;
                    let s = model.law.sample(rng);
                    if state.w + s <= model.capacity {
                        state.w += s;
                    }
                    state.phase = j;
                }
            }
            if !model.in_atom(state.w, state.phase) {
                break;
            }
        }
        run_path(model, state, StopRule::AtomEntry, acc, rng)?;
        Ok(0.0)
    } else {
        run_path(model, state, StopRule::AtomEntry, acc, rng)?;
        Ok(acc.time)
    }
}

/// Estimates the stationary mean `<pi, g>` as a ratio of cycle sums over
/// `n_cycles` i.i.d. regeneration cycles.
pub fn estimate_pi_g(
    model: &QueueModel,
    reward: &Reward,
    n_cycles: u64,
    seed: u64,
) -> Result<RegenerativeEstimate, SimError> {
    const MIN_CYCLES: u64 = 100;
    if n_cycles < MIN_CYCLES {
        return Err(SimError::TooFewCycles {
            n: n_cycles,
            min: MIN_CYCLES,
        });
    }
    reward.validate(model.phases())?;
    let start = WorkloadState::new(0.0, model.atom_phase);
    let mut g = Vec::with_capacity(n_cycles as usize);
    let mut tau = Vec::with_capacity(n_cycles as usize);
    for k in 0..n_cycles {
        let mut rng = stream(seed, k);
        let rec = simulate_cycle(model, start, reward, None, &mut rng)?;
        g.push(rec.g_integral);
        tau.push(rec.tau);
    }
    let (point, std_error) = ratio_estimate(&g, &tau);
    Ok(RegenerativeEstimate {
        point,
        std_error,
        n: n_cycles,
        seed,
    })
}

/// Ratio estimator `sum y / sum t` with the regenerative (delta-method)
/// standard error.
fn ratio_estimate(y: &[f64], t: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let sum_y: f64 = y.iter().sum();
    let sum_t: f64 = t.iter().sum();
    let point = sum_y / sum_t;
    let mean_t = sum_t / n;
    let var: f64 = y
        .iter()
        .zip(t)
        .map(|(yi, ti)| {
            let d = yi - point * ti;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0);
    let std_error = (var / n).sqrt() / mean_t;
    (point, std_error)
}

/// Estimates the bias function `h(x) = E_x[integral g - <pi,g>] over the
/// hitting path to the atom`, propagating the uncertainty of the supplied
/// `<pi, g>` estimate (which must come from an independent seed).
pub fn estimate_h(
    model: &QueueModel,
    reward: &Reward,
    start: WorkloadState,
    n_reps: u64,
    pi_g: &RegenerativeEstimate,
    seed: u64,
) -> Result<RegenerativeEstimate, SimError> {
    if n_reps < 2 {
        return Err(SimError::TooFewCycles { n: n_reps, min: 2 });
    }
    reward.validate(model.phases())?;
    check_start(model, start)?;
    if model.in_atom(start.w, start.phase) {
        // The hitting time is identically zero on the atom.
        return Ok(RegenerativeEstimate {
            point: 0.0,
            std_error: 0.0,
            n: n_reps,
            seed,
        });
    }
    let n = n_reps as f64;
    let mut a = Vec::with_capacity(n_reps as usize);
    let mut b = Vec::with_capacity(n_reps as usize);
    for k in 0..n_reps {
        let mut rng = stream(seed, k);
        let rec = simulate_cycle(model, start, reward, None, &mut rng)?;
        a.push(rec.g_integral);
        b.push(rec.tau);
    }
    let p = pi_g.point;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let point = mean_a - p * mean_b;
    let var: f64 = a
        .iter()
        .zip(&b)
        .map(|(ai, bi)| {
            let d = (ai - p * bi) - point;
            d * d
        })
        .sum::<f64>()
        / (n - 1.0);
    let std_error = (var / n + (pi_g.std_error * mean_b).powi(2)).sqrt();
    Ok(RegenerativeEstimate {
        point,
        std_error,
        n: n_reps,
        seed,
    })
}

/// Estimates `P((0, phase) -> atom in exactly time t)`: the fraction of
/// paths started at zero workload in `phase` that sit in the atom at the
/// exact probe time. This is the quantity a return witness lower-bounds.
pub fn estimate_return_probability(
    model: &QueueModel,
    phase: usize,
    t: f64,
    n_reps: u64,
    seed: u64,
) -> Result<RegenerativeEstimate, SimError> {
    let start = WorkloadState::new(0.0, phase);
    check_start(model, start)?;
    if !(t >= 0.0) {
        return Err(SimError::InvalidStart(format!(
            "probe time {t} must be nonnegative"
        )));
    }
    if n_reps == 0 {
        return Err(SimError::TooFewCycles { n: 0, min: 1 });
    }
    if t == 0.0 {
        let point = if model.in_atom(0.0, phase) { 1.0 } else { 0.0 };
        return Ok(RegenerativeEstimate {
            point,
            std_error: 0.0,
            n: n_reps,
            seed,
        });
    }
    let reward = Reward::Constant(0.0);
    let mut hits = 0u64;
    for k in 0..n_reps {
        let mut rng = stream(seed, k);
        let mut acc = PathAccum::new(&reward, None);
        let end = run_path(model, start, StopRule::Horizon(t), &mut acc, &mut rng)?;
        if model.in_atom(end.state.w, end.state.phase) {
            hits += 1;
        }
    }
    let p = hits as f64 / n_reps as f64;
    let std_error = (p * (1.0 - p) / n_reps as f64).sqrt();
    Ok(RegenerativeEstimate {
        point: p,
        std_error,
        n: n_reps,
        seed,
    })
}

/// A binned estimate of the stationary workload law.
#[derive(Debug, Clone, Serialize)]
pub struct StationaryHistogram {
    /// Strictly increasing positive bin edges `e1 < .. < ek`.
    pub edges: Vec<f64>,
    /// Mass of the empty-workload atom `{0}`.
    pub atom: RegenerativeEstimate,
    /// Masses of `(0, e1], (e1, e2], .., (e_{k-1}, ek]`.
    pub bins: Vec<RegenerativeEstimate>,
    /// Mass of `(ek, inf)`.
    pub overflow: RegenerativeEstimate,
}

/// Estimates the stationary workload distribution as time-average bin
/// occupancies over regeneration cycles, one ratio estimator per bin.
pub fn estimate_stationary_histogram(
    model: &QueueModel,
    edges: &[f64],
    n_cycles: u64,
    seed: u64,
) -> Result<StationaryHistogram, SimError> {
    const MIN_CYCLES: u64 = 100;
    if n_cycles < MIN_CYCLES {
        return Err(SimError::TooFewCycles {
            n: n_cycles,
            min: MIN_CYCLES,
        });
    }
    if edges.is_empty() {
        return Err(SimError::InvalidBins("at least one edge required".into()));
    }
    let increasing = edges.windows(2).all(|p| p[0] < p[1]);
    if !increasing || edges[0] <= 0.0 || !edges.iter().all(|e| e.is_finite()) {
        return Err(SimError::InvalidBins(
            "edges must be finite, positive, strictly increasing".into(),
        ));
    }
    let reward = Reward::Constant(0.0);
    let start = WorkloadState::new(0.0, model.atom_phase);
    let n_bins = edges.len() + 2;
    let mut occ: Vec<Vec<f64>> = vec![Vec::with_capacity(n_cycles as usize); n_bins];
    let mut tau = Vec::with_capacity(n_cycles as usize);
    for k in 0..n_cycles {
        let mut rng = stream(seed, k);
        let mut acc = PathAccum::new(&reward, Some(edges));
        run_cycle_path(model, start, &mut acc, &mut rng)?;
        for (b, col) in occ.iter_mut().enumerate() {
            col.push(acc.bin_occ[b]);
        }
        tau.push(acc.time);
    }
    let estimate = |col: &[f64]| {
        let (point, std_error) = ratio_estimate(col, &tau);
        RegenerativeEstimate {
            point,
            std_error,
            n: n_cycles,
            seed,
        }
    };
    Ok(StationaryHistogram {
        edges: edges.to_vec(),
        atom: estimate(&occ[0]),
        bins: (1..=edges.len()).map(|b| estimate(&occ[b])).collect(),
        overflow: estimate(&occ[n_bins - 1]),
    })
}
