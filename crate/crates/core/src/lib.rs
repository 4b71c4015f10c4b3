//! Explicit, checkable bounds on workload bias for single-server queues.
//!
//! The central object is the *bias function* of a reward `g`: the expected
//! excess reward accumulated before the workload process first returns to an
//! atom, centered so that the long-run average contributes nothing,
//!
//! ```text
//!     bias(x) = E_x[ integral of g over [0, hit(atom)) ]
//!               - <pi, g> * E_x[ hit(atom) ],
//! ```
//!
//! where `pi` is the stationary law. This function solves the dynamic
//! counterpart of `average reward = <pi, g>` and controls, among other
//! things, how fast time averages converge and how sensitive the stationary
//! law is to model truncation.
//!
//! The crate computes *fully explicit* upper bounds on `|bias|` from three
//! certified ingredients:
//!
//! 1. a **drift certificate**: a smooth potential `V >= 1` whose expected
//!    drift is at most `-f + b` on a bounded set and at most `-f` elsewhere,
//!    with `inf f > 0` ([`drift`]);
//! 2. an **atom**: a single state the process re-enters infinitely often
//!    (the empty-queue state, possibly tagged with an arrival phase);
//! 3. a **return witness**: a horizon `T` and a probability floor `xi` such
//!    that from anywhere in the bounded set the process sits in the atom at
//!    time `T` with probability at least `xi` ([`bound`]).
//!
//! The resulting bound has the closed form
//!
//! ```text
//!     |bias(x)| <= (1 + |<pi, g>| / inf f) * (V(x) - V(atom) + b * T / xi)
//! ```
//!
//! with sharper variants when the bounded set *is* the atom. Builders are
//! provided for queues fed by a Markov arrival process with general service
//! ([`drift::build_map_gi1`]) and for Poisson-arrival queues in three
//! service-tail regimes — light, stretched-exponential, and polynomial
//! ([`drift::build_mg1_light`], [`drift::build_mg1_moderate`],
//! [`drift::build_mg1_polynomial`]). A companion bound quantifies the
//! stationary-law error introduced by rejecting arrivals that would push the
//! workload past a finite cap ([`wcl`]).
//!
//! Everything the bounds promise is testable against the built-in
//! regenerative Monte Carlo engine ([`sim`]), which estimates the same
//! quantities from independent excursion cycles with standard errors.
//!
//! # Example
//!
//! Bound the bias of `g(x) = 0.4 * e^{0.4 x}` in an M/M/1 queue with arrival
//! rate 1/2 and service rate 1, certifying the drift at `theta = 0.4`:
//!
//! ```
//! use driftbound::drift::{build_mg1_light, DriftInput};
//! use driftbound::service::ServiceLaw;
//! use driftbound::bound::atom_bound;
//! use driftbound::tol::Tolerances;
//!
//! let law = ServiceLaw::Exponential { rate: 1.0 };
//! let tol = Tolerances::default();
//! let cert = build_mg1_light(&DriftInput::new(0.5, law), 0.4, &tol).unwrap();
//!
//! // The empty state is an atom with stationary mass 1 - rho = 1/2.
//! let report = atom_bound(&cert, 0.5).unwrap();
//! assert!((report.prefactor - 4.0).abs() < 1e-12);
//! assert!(report.evaluate(0.0, 0) == 0.0);
//! ```

// Validation guards are written `!(x > 0.0)` on purpose: the negated form
// also rejects NaN, which `x <= 0.0` would let through. Index-coupled loops
// over matrix/grid entries stay as index loops for symmetry with the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod arrival;
pub mod bound;
pub mod drift;
pub mod linalg;
pub mod model;
pub mod quad;
pub mod report;
pub mod service;
pub mod sim;
pub mod tol;
pub mod wcl;

pub use arrival::MarkovArrivalProcess;
pub use bound::BoundReport;
pub use drift::DriftCertificate;
pub use model::ModelFile;
pub use report::Report;
pub use service::ServiceLaw;
pub use tol::Tolerances;
pub use wcl::WclModel;
