//! Service-time laws: tails, transforms, sampling, and equilibrium tables.
//!
//! Six parametric families cover the regimes the drift builders certify:
//!
//! | family             | tail `H̄(x) = P(S > x)`           | transform radius |
//! |--------------------|-----------------------------------|------------------|
//! | `Exponential`      | `e^{-rate x}`                     | `rate`           |
//! | `Erlang`           | `e^{-rate x} sum (rate x)^j / j!` | `rate`           |
//! | `HyperExponential` | `sum p_i e^{-rate_i x}`           | `min rate_i`     |
//! | `Deterministic`    | step at `value`                   | infinite         |
//! | `WeibullTail`      | `e^{-rate x^shape}`, shape < 1    | zero (heavy)     |
//! | `ParetoTail`       | `(1 + x/scale)^{-exponent}`       | zero (heavy)     |
//!
//! The moment transform `mgf(theta) = E e^{theta S}` is evaluated in closed
//! form and cross-checked in tests against the tail identity
//! `E e^{theta S} = 1 + theta * integral_0^inf e^{theta y} H̄(y) dy`, which
//! is also how downstream drift integrals consume the law (integrating the
//! bounded tail avoids the density singularities of the heavy families).
//!
//! [`equilibrium_tables`] produces the integrated-tail (equilibrium) law
//! `Hre(x) = integral_0^x H̄(y) dy / mean` and its convolution powers on a
//! shared grid, the raw material for geometric-mixture representations of
//! stationary workload laws. The grid is power-stretched (dense near the
//! origin where the laws bend fastest) and self-checks its resolution by
//! recomputing the deepest convolution on the half grid.

use rand::Rng;
use rand_distr::{Distribution, Exp, Weibull};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::{integrate, integrate_to_inf, QuadError};
use crate::tol::Tolerances;

/// Errors raised by service-law validation, transforms, and tables.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ServiceError {
    #[error("invalid service-law parameter: {0}")]
    InvalidParameter(String),
    #[error("transform argument theta = {theta} is outside the domain (radius {radius})")]
    OutsideMgfDomain { theta: f64, radius: f64 },
    #[error(
        "equilibrium grid too coarse: half-grid disagreement {error:.3e} exceeds {tolerance:.3e}"
    )]
    GridTooCoarse { error: f64, tolerance: f64 },
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// A parametric service-time law. All families live on `[0, inf)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServiceLaw {
    Exponential {
        rate: f64,
    },
    Erlang {
        shape: u32,
        rate: f64,
    },
    HyperExponential {
        probs: Vec<f64>,
        rates: Vec<f64>,
    },
    Deterministic {
        value: f64,
    },
    /// Stretched-exponential tail `e^{-rate x^shape}` with `shape` in (0,1):
    /// every moment is finite but no exponential moment is.
    WeibullTail {
        shape: f64,
        rate: f64,
    },
    /// Shifted power tail `(1 + x/scale)^{-exponent}` with `exponent > 1`
    /// so the mean is finite.
    ParetoTail {
        exponent: f64,
        scale: f64,
    },
}

impl ServiceLaw {
    /// Checks parameter ranges; every other method assumes a valid law.
    pub fn validate(&self) -> Result<(), ServiceError> {
        let bad = |msg: String| Err(ServiceError::InvalidParameter(msg));
        match self {
            Self::Exponential { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("exponential rate must be positive, got {rate}"));
                }
            }
            Self::Erlang { shape, rate } => {
                if *shape == 0 {
                    return bad("erlang shape must be at least 1".into());
                }
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("erlang rate must be positive, got {rate}"));
                }
            }
            Self::HyperExponential { probs, rates } => {
                if probs.is_empty() || probs.len() != rates.len() {
                    return bad(format!(
                        "hyperexponential needs matching nonempty probs/rates, got {}/{}",
                        probs.len(),
                        rates.len()
                    ));
                }
                if probs.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                    return bad("hyperexponential probabilities must be positive".into());
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return bad(format!(
                        "hyperexponential probabilities sum to {total}, expected 1"
                    ));
                }
                if rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                    return bad("hyperexponential rates must be positive".into());
                }
            }
            Self::Deterministic { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return bad(format!("deterministic value must be positive, got {value}"));
                }
            }
            Self::WeibullTail { shape, rate } => {
                if !(shape.is_finite() && *shape > 0.0 && *shape < 1.0) {
                    return bad(format!(
                        "weibull_tail shape must lie in (0, 1), got {shape}; shape 1 is the exponential family"
                    ));
                }
                if !(rate.is_finite() && *rate > 0.0) {
                    return bad(format!("weibull_tail rate must be positive, got {rate}"));
                }
            }
            Self::ParetoTail { exponent, scale } => {
                if !(exponent.is_finite() && *exponent > 1.0) {
                    return bad(format!(
                        "pareto_tail exponent must exceed 1 for a finite mean, got {exponent}"
                    ));
                }
                if !(scale.is_finite() && *scale > 0.0) {
                    return bad(format!("pareto_tail scale must be positive, got {scale}"));
                }
            }
        }
        Ok(())
    }

    /// Survival function `P(S > x)`; equals 1 for negative `x`.
    pub fn tail(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 1.0;
        }
        match self {
            Self::Exponential { rate } => (-rate * x).exp(),
            Self::Erlang { shape, rate } => {
                let mut term = 1.0;
                let mut sum = 1.0;
                for j in 1..*shape {
                    term *= rate * x / j as f64;
                    sum += term;
                }
                (-rate * x).exp() * sum
            }
            Self::HyperExponential { probs, rates } => probs
                .iter()
                .zip(rates)
                .map(|(p, r)| p * (-r * x).exp())
                .sum(),
            Self::Deterministic { value } => {
                if x < *value {
                    1.0
                } else {
                    0.0
                }
            }
            Self::WeibullTail { shape, rate } => (-rate * x.powf(*shape)).exp(),
            Self::ParetoTail { exponent, scale } => (1.0 + x / scale).powf(-exponent),
        }
    }

    /// Distribution function `P(S <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.tail(x)
    }

    /// Mean service time. Closed form except for the stretched-exponential
    /// family, whose mean is the (rapidly convergent) tail integral.
    pub fn mean(&self) -> f64 {
        match self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::Erlang { shape, rate } => f64::from(*shape) / rate,
            Self::HyperExponential { probs, rates } => {
                probs.iter().zip(rates).map(|(p, r)| p / r).sum()
            }
            Self::Deterministic { value } => *value,
            Self::WeibullTail { shape, rate } => {
                let (shape, rate) = (*shape, *rate);
                let scale = rate.powf(-1.0 / shape);
                integrate_to_inf(&|x| (-rate * x.powf(shape)).exp(), 0.0, scale, 1e-13, 1e-12)
                    .expect("stretched-exponential tail integral converges")
                    .value
            }
            Self::ParetoTail { exponent, scale } => scale / (exponent - 1.0),
        }
    }

    /// Supremum of the set of `theta >= 0` with `E e^{theta S} < inf`.
    /// Zero for the heavy-tailed families, infinite for deterministic
    /// service.
    pub fn mgf_radius(&self) -> f64 {
        match self {
            Self::Exponential { rate } | Self::Erlang { rate, .. } => *rate,
            Self::HyperExponential { rates, .. } => {
                rates.iter().cloned().fold(f64::INFINITY, f64::min)
            }
            Self::Deterministic { .. } => f64::INFINITY,
            Self::WeibullTail { .. } | Self::ParetoTail { .. } => 0.0,
        }
    }

    /// Moment transform `E e^{theta S}` for `theta` strictly inside the
    /// domain (`theta < mgf_radius`, any nonpositive `theta` allowed).
    pub fn mgf(&self, theta: f64) -> Result<f64, ServiceError> {
        if theta <= 0.0 {
            // All families have full negative half-line domains; the closed
            // forms below remain valid there.
        } else if theta >= self.mgf_radius() {
            return Err(ServiceError::OutsideMgfDomain {
                theta,
                radius: self.mgf_radius(),
            });
        }
        Ok(match self {
            Self::Exponential { rate } => rate / (rate - theta),
            Self::Erlang { shape, rate } => (rate / (rate - theta)).powi(*shape as i32),
            Self::HyperExponential { probs, rates } => probs
                .iter()
                .zip(rates)
                .map(|(p, r)| p * r / (r - theta))
                .sum(),
            Self::Deterministic { value } => (theta * value).exp(),
            Self::WeibullTail { .. } | Self::ParetoTail { .. } => {
                if theta == 0.0 {
                    1.0
                } else {
                    // theta < 0: integrate the tail identity numerically;
                    // the integrand decays at least exponentially.
                    let scale = 1.0 / theta.abs();
                    let tail_part = integrate_to_inf(
                        &|y| (theta * y).exp() * self.tail(y),
                        0.0,
                        scale.min(self.mean().max(1e-6)),
                        1e-13,
                        1e-12,
                    )?;
                    1.0 + theta * tail_part.value
                }
            }
        })
    }

    /// True when no exponential moment exists (transform radius zero).
    pub fn is_heavy_tailed(&self) -> bool {
        self.mgf_radius() == 0.0
    }

    /// Location of the single tail discontinuity, if any; quadratures over
    /// the tail split here.
    pub fn tail_break(&self) -> Option<f64> {
        match self {
            Self::Deterministic { value } => Some(*value),
            _ => None,
        }
    }

    /// Draws one service time. Inverse transforms and standard samplers
    /// only, so a fixed RNG stream reproduces draws exactly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            Self::Erlang { shape, rate } => {
                let exp = Exp::new(*rate).expect("validated rate");
                (0..*shape).map(|_| exp.sample(rng)).sum()
            }
            Self::HyperExponential { probs, rates } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut idx = rates.len() - 1;
                for (k, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        idx = k;
                        break;
                    }
                }
                Exp::new(rates[idx]).expect("validated rate").sample(rng)
            }
            Self::Deterministic { value } => *value,
            Self::WeibullTail { shape, rate } => {
                // rand_distr parametrizes by scale: e^{-(x/scale)^shape}.
                let scale = rate.powf(-1.0 / shape);
                Weibull::new(scale, *shape)
                    .expect("validated shape")
                    .sample(rng)
            }
            Self::ParetoTail { exponent, scale } => {
                // Inverse transform of the shifted power tail.
                let u: f64 = rng.gen();
                scale * ((1.0 - u).powf(-1.0 / exponent) - 1.0)
            }
        }
    }
}

/// A claimed analytic envelope for a service tail, used to certify which
/// drift regime applies.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TailEnvelope {
    /// Some exponential moment exists below `theta_bar`.
    LightTail { theta_bar: f64 },
    /// `H̄(x) <= coeff * e^{-gamma x^beta}` with `beta` in (0,1).
    Moderate { coeff: f64, gamma: f64, beta: f64 },
    /// `H̄(x) <= coeff * (1 + x)^{-kappa}`.
    Polynomial { coeff: f64, kappa: f64 },
}

impl TailEnvelope {
    /// Pointwise envelope value; the light-tail claim is not pointwise.
    pub fn value(&self, x: f64) -> Option<f64> {
        match self {
            Self::LightTail { .. } => None,
            Self::Moderate { coeff, gamma, beta } => Some(coeff * (-gamma * x.powf(*beta)).exp()),
            Self::Polynomial { coeff, kappa } => Some(coeff * (1.0 + x).powf(-kappa)),
        }
    }

    /// The tightest natural envelope of a law's own family: exact for the
    /// heavy families, transform-radius for the light ones.
    pub fn for_law(law: &ServiceLaw) -> TailEnvelope {
        match law {
            ServiceLaw::WeibullTail { shape, rate } => TailEnvelope::Moderate {
                coeff: 1.0,
                gamma: *rate,
                beta: *shape,
            },
            ServiceLaw::ParetoTail { exponent, scale } => {
                // (1 + x/s)^{-k} <= coeff (1 + x)^{-k} with
                // coeff = max(1, s^k): the ratio ((1+x)/(1+x/s))^k increases
                // to s^k when s > 1 and stays below 1 when s <= 1.
                TailEnvelope::Polynomial {
                    coeff: scale.powf(*exponent).max(1.0),
                    kappa: *exponent,
                }
            }
            light => TailEnvelope::LightTail {
                theta_bar: light.mgf_radius(),
            },
        }
    }
}

/// Result of checking a tail envelope on a grid.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeCheck {
    pub holds: bool,
    /// Grid point with the largest `tail / envelope` ratio.
    pub worst_x: f64,
    /// Largest observed ratio; above 1 means the claim failed there.
    pub worst_ratio: f64,
}

/// Checks `H̄(x) <= envelope(x)` on the given grid (light-tail claims are
/// checked against the transform radius instead).
pub fn verify_envelope(law: &ServiceLaw, envelope: &TailEnvelope, grid: &[f64]) -> EnvelopeCheck {
    if let TailEnvelope::LightTail { theta_bar } = envelope {
        let holds = *theta_bar <= law.mgf_radius() && *theta_bar > 0.0;
        return EnvelopeCheck {
            holds,
            worst_x: 0.0,
            worst_ratio: if holds { 1.0 } else { f64::INFINITY },
        };
    }
    let mut worst_x = 0.0;
    let mut worst_ratio = 0.0_f64;
    for &x in grid {
        let env = envelope.value(x).expect("pointwise envelope");
        let ratio = if env > 0.0 {
            law.tail(x) / env
        } else {
            f64::INFINITY
        };
        if ratio > worst_ratio {
            worst_ratio = ratio;
            worst_x = x;
        }
    }
    EnvelopeCheck {
        holds: worst_ratio <= 1.0 + 1e-12,
        worst_x,
        worst_ratio,
    }
}

/// Default grid for envelope verification: power-stretched to `x_max`.
pub fn envelope_grid(x_max: f64, points: usize) -> Vec<f64> {
    power_grid(x_max, points)
}

/// Evaluation grid specification for equilibrium tables.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Right endpoint of the grid (tables are exact restrictions: mass
    /// beyond `x_max` never influences values at or below it).
    pub x_max: f64,
    /// Number of cells; the grid holds `points + 1` nodes including 0.
    pub points: usize,
}

impl GridSpec {
    pub fn new(x_max: f64, points: usize) -> Self {
        Self { x_max, points }
    }
}

/// Equilibrium law and its convolution powers sampled on a shared grid.
#[derive(Debug, Clone)]
pub struct EquilibriumGrid {
    /// Grid nodes `0 = x_0 < ... < x_K = x_max`, power-stretched so nodes
    /// cluster near the origin.
    pub xs: Vec<f64>,
    /// `tables[n-1][j] = Hre^{*n}(xs[j])` for `n = 1 ..= n_max`.
    pub tables: Vec<Vec<f64>>,
    /// Half-grid disagreement of the deepest convolution, an a posteriori
    /// resolution estimate.
    pub grid_error: f64,
}

impl EquilibriumGrid {
    /// Linear interpolation of `Hre^{*n}` (1-based `n`) at `x`, clamped to
    /// the grid range.
    pub fn value_at(&self, n: usize, x: f64) -> f64 {
        interp(&self.xs, &self.tables[n - 1], x)
    }
}

/// Power-stretched grid on `[0, x_max]`: `x_j = x_max (j/K)^{3/2}`.
fn power_grid(x_max: f64, points: usize) -> Vec<f64> {
    let k = points.max(2);
    (0..=k)
        .map(|j| x_max * (j as f64 / k as f64).powf(1.5))
        .collect()
}

fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= *xs.last().unwrap() {
        return *ys.last().unwrap();
    }
    let idx = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[idx - 1], xs[idx]);
    let (y0, y1) = (ys[idx - 1], ys[idx]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Builds `Hre` and its convolution powers `Hre^{*n}`, `n = 1 ..= n_max`,
/// on a power-stretched grid over `[0, x_max]`.
///
/// `Hre(x) = integral_0^x H̄(y) dy / mean` is evaluated by adaptive
/// quadrature per grid cell (splitting at a tail discontinuity when the law
/// has one); convolution powers use measure-weighted trapezoid sums against
/// the same grid. The deepest table is recomputed on the half grid and the
/// disagreement must stay below `tol.quad_rel * 100` (a coarse-but-honest
/// resolution proxy), else [`ServiceError::GridTooCoarse`] is returned.
pub fn equilibrium_tables(
    law: &ServiceLaw,
    n_max: usize,
    grid: &GridSpec,
    tol: &Tolerances,
) -> Result<EquilibriumGrid, ServiceError> {
    law.validate()?;
    if !(grid.x_max > 0.0) || grid.points < 8 {
        return Err(ServiceError::InvalidParameter(format!(
            "grid needs positive x_max and at least 8 points, got x_max={} points={}",
            grid.x_max, grid.points
        )));
    }
    let n_max = n_max.max(1);
    let xs = power_grid(grid.x_max, grid.points);
    let tables = build_tables(law, n_max, &xs, tol)?;

    // Resolution self-check: the power grid with half the cells is a strict
    // subset of the full grid, so the deepest tables are directly
    // comparable at the shared nodes.
    let half_xs = power_grid(grid.x_max, grid.points / 2);
    let half_tables = build_tables(law, n_max, &half_xs, tol)?;
    let deep = &tables[n_max - 1];
    let half_deep = &half_tables[n_max - 1];
    let mut grid_error = 0.0_f64;
    for (i, &x) in half_xs.iter().enumerate() {
        let full_val = interp(&xs, deep, x);
        grid_error = grid_error.max((full_val - half_deep[i]).abs());
    }
    let grid_tol = 1e-4_f64.max(tol.quad_rel * 100.0);
    if grid_error > grid_tol {
        return Err(ServiceError::GridTooCoarse {
            error: grid_error,
            tolerance: grid_tol,
        });
    }
    Ok(EquilibriumGrid {
        xs,
        tables,
        grid_error,
    })
}

fn build_tables(
    law: &ServiceLaw,
    n_max: usize,
    xs: &[f64],
    tol: &Tolerances,
) -> Result<Vec<Vec<f64>>, ServiceError> {
    let mean = law.mean();
    let k = xs.len();
    // Cumulative equilibrium law on the grid, integrating the tail cell by
    // cell and splitting at the single discontinuity if the law has one.
    let mut hre = vec![0.0; k];
    for j in 1..k {
        let (a, b) = (xs[j - 1], xs[j]);
        let cell = match law.tail_break() {
            Some(brk) if a < brk && brk < b => {
                integrate(&|y| law.tail(y), a, brk, tol.quad_abs, tol.quad_rel)?.value
                    + integrate(&|y| law.tail(y), brk, b, tol.quad_abs, tol.quad_rel)?.value
            }
            _ => integrate(&|y| law.tail(y), a, b, tol.quad_abs, tol.quad_rel)?.value,
        };
        hre[j] = hre[j - 1] + cell / mean;
    }

    let mut tables = Vec::with_capacity(n_max);
    tables.push(hre);
    for _ in 1..n_max {
        let prev = tables.last().unwrap();
        let hre = &tables[0];
        let mut next = vec![0.0; k];
        for (target, value) in next.iter_mut().enumerate().skip(1) {
            let x = xs[target];
            // Stieltjes trapezoid: sum over dHre cells of the average of
            // prev(x - y) at the cell ends, interpolated on the grid. The
            // arguments decrease as the cell index grows, so a backward
            // cursor keeps interpolation amortized O(1).
            let mut acc = 0.0;
            let mut cursor = target;
            let mut upper = prev[target]; // prev(x - xs[0]) = prev(x)
            for cell in 1..=target {
                let y = xs[cell];
                let arg = x - y;
                while cursor > 0 && xs[cursor - 1] > arg {
                    cursor -= 1;
                }
                // xs[cursor - 1] <= arg <= xs[cursor]
                let lower = if cursor == 0 {
                    prev[0]
                } else {
                    let (x0, x1) = (xs[cursor - 1], xs[cursor]);
                    let (y0, y1) = (prev[cursor - 1], prev[cursor]);
                    if x1 == x0 {
                        y0
                    } else {
                        y0 + (y1 - y0) * (arg - x0) / (x1 - x0)
                    }
                };
                let mass = hre[cell] - hre[cell - 1];
                acc += 0.5 * (upper + lower) * mass;
                upper = lower;
            }
            *value = acc;
        }
        tables.push(next);
    }
    Ok(tables)
}
