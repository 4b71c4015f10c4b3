//! Markov arrival processes (MAPs) over a finite phase space.
//!
//! A MAP is a pair of square matrices `(C, D)`: `C` holds phase-change rates
//! without an arrival (nonnegative off-diagonals, strictly negative
//! diagonals), `D` holds rates that fire an arrival (entrywise nonnegative),
//! and `C + D` is a conservative irreducible generator (rows sum to zero).
//! Poisson input is the one-phase special case `C = [-lambda]`,
//! `D = [lambda]`.
//!
//! [`MarkovArrivalProcess::new`] enforces the structure in a fixed order
//! (shape, signs, row sums, arrival mass, irreducibility) so error reporting
//! is deterministic. [`MarkovArrivalProcess::stationary`] solves for the
//! phase law `varpi (C + D) = 0`, `sum varpi = 1` by direct elimination and
//! reports the achieved residual together with the arrival intensity
//! `lambda = varpi D 1`.

use serde::Serialize;
use thiserror::Error;

use crate::linalg::{solve_linear, LinalgError, Matrix};
use crate::tol::Tolerances;

/// Errors raised while validating a MAP or solving for its phase law.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum MapError {
    #[error("C and D must be square with equal dimensions, got C {c_rows}x{c_cols} and D {d_rows}x{d_cols}")]
    ShapeMismatch {
        c_rows: usize,
        c_cols: usize,
        d_rows: usize,
        d_cols: usize,
    },
    #[error("negative rate in {matrix}[{row}][{col}] = {value:.6e}")]
    NegativeRate {
        matrix: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    #[error("row {row} of C + D sums to {sum:.3e}; a conservative generator needs zero row sums")]
    NonGeneratorRows { row: usize, sum: f64 },
    #[error("D is identically zero; the process would generate no arrivals")]
    NoArrivals,
    #[error("C + D is reducible; every phase must communicate with every other")]
    Reducible,
    #[error("phase-stationary system did not produce a positive law: {0}")]
    SingularSystem(String),
}

impl From<LinalgError> for MapError {
    fn from(e: LinalgError) -> Self {
        MapError::SingularSystem(e.to_string())
    }
}

/// Stationary phase law of `C + D` with the induced arrival intensity.
#[derive(Debug, Clone, Serialize)]
pub struct PhaseStationary {
    /// Entrywise positive probability vector with `varpi (C + D) = 0`.
    pub varpi: Vec<f64>,
    /// Long-run arrival intensity `lambda = varpi D 1`.
    pub lambda: f64,
    /// Achieved residual `max_j |(varpi (C + D))_j|`.
    pub residual: f64,
}

/// A validated Markov arrival process. Immutable once constructed: all
/// structural invariants are checked in [`MarkovArrivalProcess::new`] and
/// relied upon downstream without re-validation.
#[derive(Debug, Clone)]
pub struct MarkovArrivalProcess {
    c: Matrix,
    d: Matrix,
    phases: usize,
}

impl MarkovArrivalProcess {
    /// Validates `(C, D)` and wraps them as a MAP.
    pub fn new(c: Matrix, d: Matrix, tol: &Tolerances) -> Result<Self, MapError> {
        if !c.is_square() || !d.is_square() || c.rows() != d.rows() {
            return Err(MapError::ShapeMismatch {
                c_rows: c.rows(),
                c_cols: c.cols(),
                d_rows: d.rows(),
                d_cols: d.cols(),
            });
        }
        let n = c.rows();
        for i in 0..n {
            for j in 0..n {
                if i != j && c.get(i, j) < 0.0 {
                    return Err(MapError::NegativeRate {
                        matrix: "C",
                        row: i,
                        col: j,
                        value: c.get(i, j),
                    });
                }
                if d.get(i, j) < 0.0 {
                    return Err(MapError::NegativeRate {
                        matrix: "D",
                        row: i,
                        col: j,
                        value: d.get(i, j),
                    });
                }
            }
        }
        let scale = c.max_abs().max(d.max_abs()).max(1.0);
        for i in 0..n {
            let sum = c.row_sum(i) + d.row_sum(i);
            if sum.abs() > tol.structural * scale {
                return Err(MapError::NonGeneratorRows { row: i, sum });
            }
        }
        if d.max_abs() == 0.0 {
            return Err(MapError::NoArrivals);
        }
        if !strongly_connected(&c, &d) {
            return Err(MapError::Reducible);
        }
        Ok(Self { c, d, phases: n })
    }

    pub fn phases(&self) -> usize {
        self.phases
    }

    /// Phase-change rates without arrivals.
    pub fn c(&self) -> &Matrix {
        &self.c
    }

    /// Phase-change rates with an arrival.
    pub fn d(&self) -> &Matrix {
        &self.d
    }

    /// Total event rate while in phase `i` (diagonal of `-C`); strictly
    /// positive for every validated MAP.
    pub fn event_rate(&self, i: usize) -> f64 {
        -self.c.get(i, i)
    }

    /// Poisson input of rate `lambda` as a one-phase MAP.
    pub fn poisson(lambda: f64, tol: &Tolerances) -> Result<Self, MapError> {
        let c = Matrix::from_rows(vec![vec![-lambda]]).map_err(MapError::from)?;
        let d = Matrix::from_rows(vec![vec![lambda]]).map_err(MapError::from)?;
        Self::new(c, d, tol)
    }

    /// Solves `varpi (C + D) = 0`, `sum varpi = 1` and computes
    /// `lambda = varpi D 1`.
    ///
    /// The generator has rank `n - 1` for an irreducible MAP, so one balance
    /// equation is replaced by the normalization; the residual of the full
    /// balance system is rechecked against `tol.residual`.
    pub fn stationary(&self, tol: &Tolerances) -> Result<PhaseStationary, MapError> {
        let n = self.phases;
        let q = self.c.add_scaled(1.0, &self.d)?;
        // Transposed balance equations Q^T varpi^T = 0 with the last row
        // swapped for normalization.
        let mut system = q.transpose();
        for j in 0..n {
            system.set(n - 1, j, 1.0);
        }
        let mut rhs = vec![0.0; n];
        rhs[n - 1] = 1.0;
        let varpi = solve_linear(&system, &rhs)?;
        if varpi.iter().any(|&v| !(v > 0.0)) {
            return Err(MapError::SingularSystem(format!(
                "stationary law has a nonpositive entry: {varpi:?}"
            )));
        }
        let total: f64 = varpi.iter().sum();
        let varpi: Vec<f64> = varpi.iter().map(|v| v / total).collect();
        let balance = q.transpose().matvec(&varpi)?;
        let residual = balance.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        if residual > tol.residual {
            return Err(MapError::SingularSystem(format!(
                "balance residual {residual:.3e} exceeds {:.3e}",
                tol.residual
            )));
        }
        let ones = vec![1.0; n];
        let d_ones = self.d.matvec(&ones)?;
        let lambda = varpi.iter().zip(&d_ones).map(|(p, r)| p * r).sum();
        Ok(PhaseStationary {
            varpi,
            lambda,
            residual,
        })
    }
}

/// Strong connectivity of the digraph with an edge `i -> j` whenever
/// `(C + D)[i][j] > 0`, `i != j`: forward and backward reachability from
/// phase 0 must both cover every phase.
fn strongly_connected(c: &Matrix, d: &Matrix) -> bool {
    let n = c.rows();
    let edge = |i: usize, j: usize| i != j && c.get(i, j) + d.get(i, j) > 0.0;
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                let connected = if forward { edge(i, j) } else { edge(j, i) };
                if connected && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use proptest::prelude::*;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn mat(rows: Vec<Vec<f64>>) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    /// Independent stationary oracle: power iteration of the uniformized
    /// transition kernel P = I + (C+D)/zeta until the law stops moving.
    fn stationary_by_power_method(c: &Matrix, d: &Matrix) -> Vec<f64> {
        let n = c.rows();
        let q = c.add_scaled(1.0, d).unwrap();
        let zeta = (0..n).fold(0.0_f64, |m, i| m.max(q.get(i, i).abs())) * 1.05 + 1e-9;
        let p = Matrix::identity(n).add_scaled(1.0 / zeta, &q).unwrap();
        let pt = p.transpose();
        let mut v = vec![1.0 / n as f64; n];
        for _ in 0..2_000_000 {
            let next = pt.matvec(&v).unwrap();
            let diff = next
                .iter()
                .zip(&v)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            v = next;
            if diff < 1e-15 {
                break;
            }
        }
        v
    }

    #[test]
    fn poisson_special_case() {
        let map = MarkovArrivalProcess::poisson(2.0, &tol()).unwrap();
        let st = map.stationary(&tol()).unwrap();
        assert_eq!(st.varpi, vec![1.0]);
        assert!((st.lambda - 2.0).abs() < 1e-14);
        assert_eq!(map.event_rate(0), 2.0);
    }

    #[test]
    fn two_phase_law_matches_hand_solution() {
        // C + D = [[-1, 1], [1/2, -1/2]]: balance gives varpi = (1/3, 2/3);
        // D = I makes lambda = varpi . 1 = 1.
        let c = mat(vec![vec![-2.0, 1.0], vec![0.5, -1.5]]);
        let d = Matrix::identity(2);
        let map = MarkovArrivalProcess::new(c, d, &tol()).unwrap();
        let st = map.stationary(&tol()).unwrap();
        assert!((st.varpi[0] - 1.0 / 3.0).abs() < 1e-13);
        assert!((st.varpi[1] - 2.0 / 3.0).abs() < 1e-13);
        assert!((st.lambda - 1.0).abs() < 1e-13);
        assert!(st.residual <= 1e-10);
    }

    #[test]
    fn switched_poisson_law_matches_power_method() {
        let c = mat(vec![vec![-3.0, 1.0], vec![2.0, -4.0]]);
        let d = mat(vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
        let oracle = stationary_by_power_method(&c, &d);
        let map = MarkovArrivalProcess::new(c, d, &tol()).unwrap();
        let st = map.stationary(&tol()).unwrap();
        for (got, want) in st.varpi.iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn absorbing_phase_is_rejected_as_reducible() {
        // C + D = [[-1, 1], [0, 0]]: phase 1 never leaves, so the pair is
        // not a usable MAP even though each matrix is well-signed.
        let c = mat(vec![vec![-2.0, 1.0], vec![0.0, -1.0]]);
        let d = Matrix::identity(2);
        assert!(matches!(
            MarkovArrivalProcess::new(c, d, &tol()),
            Err(MapError::Reducible)
        ));
    }

    #[test]
    fn zero_d_is_rejected() {
        let c = mat(vec![vec![-1.0, 1.0], vec![1.0, -1.0]]);
        let d = Matrix::zeros(2, 2);
        assert!(matches!(
            MarkovArrivalProcess::new(c, d, &tol()),
            Err(MapError::NoArrivals)
        ));
    }

    #[test]
    fn bad_row_sums_are_rejected() {
        let c = mat(vec![vec![-2.0, 1.0], vec![0.5, -1.5]]);
        let d = mat(vec![vec![1.0, 0.1], vec![0.0, 1.0]]);
        assert!(matches!(
            MarkovArrivalProcess::new(c, d, &tol()),
            Err(MapError::NonGeneratorRows { row: 0, .. })
        ));
    }

    #[test]
    fn negative_rates_are_rejected() {
        let c = mat(vec![vec![-2.0, -0.5], vec![0.5, -1.5]]);
        let d = mat(vec![vec![2.5, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(
            MarkovArrivalProcess::new(c, d, &tol()),
            Err(MapError::NegativeRate { matrix: "C", .. })
        ));
        let c = mat(vec![vec![-2.0, 1.0], vec![0.5, -1.5]]);
        let d = mat(vec![vec![1.0, 0.0], vec![-0.1, 1.1]]);
        assert!(matches!(
            MarkovArrivalProcess::new(c, d, &tol()),
            Err(MapError::NegativeRate { matrix: "D", .. })
        ));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let c = mat(vec![vec![-1.0, 1.0], vec![1.0, -1.0]]);
        let d = mat(vec![vec![1.0]]);
        assert!(matches!(
            MarkovArrivalProcess::new(c, d, &tol()),
            Err(MapError::ShapeMismatch { .. })
        ));
    }

    /// Random irreducible MAPs: strictly positive off-diagonal C rates and a
    /// strictly positive arrival diagonal keep every pair communicating.
    fn random_map(n: usize) -> impl Strategy<Value = (Matrix, Matrix)> {
        let offs = proptest::collection::vec(proptest::collection::vec(0.05..2.0_f64, n), n);
        let arr = proptest::collection::vec(0.05..2.0_f64, n);
        (offs, arr).prop_map(move |(offs, arr)| {
            let mut c = Matrix::zeros(n, n);
            let mut d = Matrix::zeros(n, n);
            for i in 0..n {
                let mut total = arr[i];
                d.set(i, i, arr[i]);
                for j in 0..n {
                    if i != j {
                        c.set(i, j, offs[i][j]);
                        total += offs[i][j];
                    }
                }
                c.set(i, i, -total);
            }
            (c, d)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn stationary_law_agrees_with_power_method((c, d) in (2usize..5).prop_flat_map(random_map)) {
            let oracle = stationary_by_power_method(&c, &d);
            let map = MarkovArrivalProcess::new(c, d, &tol()).unwrap();
            let st = map.stationary(&tol()).unwrap();
            let sum: f64 = st.varpi.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(st.lambda > 0.0);
            for (got, want) in st.varpi.iter().zip(&oracle) {
                prop_assert!((got - want).abs() < 1e-9);
            }
        }
    }
}
