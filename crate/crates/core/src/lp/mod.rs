//! Small dense linear and linear-fractional programming.

mod fractional;
mod lemma1;
mod problems;
mod simplex;

pub use fractional::{solve_fractional, FractionalProgram, FractionalSolution};
pub use lemma1::{lemma1_solve, Lemma1Failure, SINGULAR_CONDITION};
pub use problems::{
    check_point_feasible, coordinate_program, feasibility_witness, solve_coordinate,
    CoordinateProgram, CoordinateSolution,
};
pub use simplex::{solve_lp, LinearProgram, LpSolution, LpStatus, MAX_VARIABLES};

/// `(a·x − b)` relative to the magnitude of the terms involved; positive when violated.
pub(crate) fn row_violation(a: &[f64], b: f64, x: &[f64]) -> f64 {
    let mut lhs = 0.0;
    let mut mag = b.abs();
    for (ai, xi) in a.iter().zip(x) {
        let v = ai * xi;
        lhs += v;
        mag += v.abs();
    }
    if mag == 0.0 {
        0.0
    } else {
        (lhs - b) / mag
    }
}
