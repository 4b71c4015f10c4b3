//! Adaptive quadrature for tail and drift integrals.
//!
//! The integrands in this crate are bounded and piecewise smooth (survival
//! functions times smooth potentials), so classic adaptive Simpson with
//! Richardson extrapolation is accurate and self-reporting: every result
//! carries the accumulated local error estimates, and semi-infinite
//! integrals add an explicit tail allowance. Callers compare the reported
//! error against their own budget instead of trusting a silent success.
//!
//! Semi-infinite integrals are evaluated over geometrically growing
//! segments; integration stops once two consecutive segments contribute
//! below the budget, and clear non-decay (segment contributions failing to
//! shrink, or the running value leaving the representable range) is reported
//! as [`QuadError::Divergent`].

use thiserror::Error;

/// Errors from quadrature routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum QuadError {
    #[error("integrand returned a non-finite value at x = {at}")]
    NonFinite { at: f64 },
    #[error("integral over [{from}, inf) shows no decay after reaching x = {reached} (running value {value:.3e})")]
    Divergent { from: f64, reached: f64, value: f64 },
    #[error("integration bounds are invalid: [{a}, {b}]")]
    InvalidBounds { a: f64, b: f64 },
}

/// A quadrature value together with its accumulated error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    /// Estimated absolute error (sum of local Richardson estimates plus any
    /// tail allowance). An honest report, not a guarantee.
    pub error: f64,
}

/// Maximum bisection depth; reaching it accepts the local estimate and adds
/// its error to the report instead of recursing forever on a kink.
const MAX_DEPTH: u32 = 48;

/// Number of geometric segments allowed for semi-infinite integrals before
/// declaring divergence; covers ranges beyond 1e15 times the scale.
const MAX_SEGMENTS: u32 = 60;

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

struct Adaptive<'a> {
    f: &'a dyn Fn(f64) -> f64,
    abs_tol: f64,
    rel_tol: f64,
    error: f64,
    bad_point: Option<f64>,
}

impl Adaptive<'_> {
    fn eval(&mut self, x: f64) -> f64 {
        let v = (self.f)(x);
        if !v.is_finite() && self.bad_point.is_none() {
            self.bad_point = Some(x);
        }
        v
    }

    /// Recursive bisection on [a, b] with precomputed endpoint/midpoint
    /// values and the whole-interval Simpson estimate.
    #[allow(clippy::too_many_arguments)]
    fn refine(
        &mut self,
        a: f64,
        fa: f64,
        m: f64,
        fm: f64,
        b: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = self.eval(lm);
        let frm = self.eval(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        // Simpson halving gains a factor 16; delta/15 is the standard
        // Richardson error estimate for the refined value.
        if delta.abs() <= 15.0 * tol || depth >= MAX_DEPTH {
            self.error += delta.abs() / 15.0;
            return left + right + delta / 15.0;
        }
        let half_tol = 0.5 * tol;
        self.refine(a, fa, lm, flm, m, fm, left, half_tol, depth + 1)
            + self.refine(m, fm, rm, frm, b, fb, right, half_tol, depth + 1)
    }
}

/// Integrates `f` over the finite interval `[a, b]` by adaptive Simpson.
///
/// The effective tolerance is `max(abs_tol, rel_tol * |first estimate|)`;
/// the achieved error estimate is reported in the result.
pub fn integrate(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult, QuadError> {
    if !a.is_finite() || !b.is_finite() || b < a {
        return Err(QuadError::InvalidBounds { a, b });
    }
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
        });
    }
    let mut ctx = Adaptive {
        f,
        abs_tol,
        rel_tol,
        error: 0.0,
        bad_point: None,
    };
    let m = 0.5 * (a + b);
    let fa = ctx.eval(a);
    let fm = ctx.eval(m);
    let fb = ctx.eval(b);
    let whole = simpson(fa, fm, fb, b - a);
    let tol = ctx.abs_tol.max(ctx.rel_tol * whole.abs());
    let value = ctx.refine(a, fa, m, fm, b, fb, whole, tol, 0);
    if let Some(at) = ctx.bad_point {
        return Err(QuadError::NonFinite { at });
    }
    Ok(QuadResult {
        value,
        error: ctx.error,
    })
}

/// Integrates `f` over `[a, inf)` using geometrically growing segments of
/// initial length `scale` (a characteristic decay length of the integrand).
///
/// Stops once two consecutive segments each contribute less than the
/// tolerance budget, adding the last contribution to the error report as a
/// tail allowance. Reports [`QuadError::Divergent`] when contributions stop
/// decaying or the running value grows out of range.
pub fn integrate_to_inf(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    scale: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<QuadResult, QuadError> {
    if !a.is_finite() || !(scale > 0.0) {
        return Err(QuadError::InvalidBounds {
            a,
            b: f64::INFINITY,
        });
    }
    let mut total = 0.0;
    let mut error = 0.0;
    let mut left = a;
    let mut len = scale;
    let mut small_streak = 0u32;
    let mut last_abs = f64::INFINITY;
    let mut growth_streak = 0u32;
    for _ in 0..MAX_SEGMENTS {
        let right = left + len;
        let seg = integrate(f, left, right, abs_tol, rel_tol)?;
        total += seg.value;
        error += seg.error;
        if !total.is_finite() || total.abs() > 1e300 {
            return Err(QuadError::Divergent {
                from: a,
                reached: right,
                value: total,
            });
        }
        let budget = abs_tol.max(rel_tol * total.abs());
        let seg_abs = seg.value.abs();
        if seg_abs <= budget {
            small_streak += 1;
            if small_streak >= 2 {
                error += seg_abs;
                return Ok(QuadResult {
                    value: total,
                    error,
                });
            }
        } else {
            small_streak = 0;
        }
        // Contributions over doubling segments must eventually shrink for
        // any convergent tail; sustained growth is decisive divergence.
        if seg_abs > last_abs && seg_abs > budget {
            growth_streak += 1;
            if growth_streak >= 8 {
                return Err(QuadError::Divergent {
                    from: a,
                    reached: right,
                    value: total,
                });
            }
        } else {
            growth_streak = 0;
        }
        last_abs = seg_abs;
        left = right;
        len *= 2.0;
    }
    Err(QuadError::Divergent {
        from: a,
        reached: left,
        value: total,
    })
}
