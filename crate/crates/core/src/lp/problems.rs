//! The linear programs the branch-and-bound search poses over a problem instance.
//!
//! Coordinates whose SINR lower limit is zero are fixed at zero power: doing so
//! only lowers interference on everyone else and loosens every QoS and SIC
//! row, so it never turns a feasible question into an infeasible one, and it
//! keeps the witness clear of SIC rows that would otherwise switch on.

use super::fractional::{solve_fractional, FractionalProgram};
use super::lemma1::lemma1_solve;
use super::simplex::{solve_lp, LinearProgram};
use crate::reform::{check_feasible, ProblemData};

const WITNESS_TOL: f64 = 1e-7;

fn restrict(coef: &[f64], vars: &[usize]) -> Vec<f64> {
    vars.iter().map(|&i| coef[i]).collect()
}

fn expand(pd: &ProblemData, vars: &[usize], y: &[f64]) -> Vec<f64> {
    let mut full = vec![0.0; pd.len()];
    for (&i, &v) in vars.iter().zip(y) {
        full[i] = v.max(0.0);
    }
    full
}

/// `(c_p − x · Rᵀd_p)` restricted to `vars`.
fn sinr_row(pd: &ProblemData, p: usize, x: f64, vars: &[usize]) -> Vec<f64> {
    vars.iter()
        .map(|&i| {
            let own = if i == p { pd.c_gain[p] } else { 0.0 };
            own - x * pd.dy(p)[i]
        })
        .collect()
}

/// Pushes the QoS rows, the SIC rows of `sic_for`, and the budget, all restricted to `vars`.
fn push_common(
    pd: &ProblemData,
    vars: &[usize],
    sic_for: &[usize],
    a: &mut Vec<Vec<f64>>,
    b: &mut Vec<f64>,
) {
    for row in pd.qos_rows() {
        let r = restrict(&row.coef, vars);
        if r.iter().any(|&v| v != 0.0) {
            a.push(r);
            b.push(row.rhs);
        }
    }
    for &p in sic_for {
        if let Some(row) = pd.sic_row(p) {
            a.push(restrict(&row.coef, vars));
            b.push(row.rhs);
        }
    }
    a.push(vec![1.0; vars.len()]);
    b.push(pd.p_max);
}

fn witness_ok(pd: &ProblemData, y: &[f64], x_min: &[f64]) -> bool {
    if !check_feasible(pd, y).feasible(WITNESS_TOL) {
        return false;
    }
    (0..pd.len()).all(|p| pd.sinr(p, y) >= x_min[p] * (1.0 - WITNESS_TOL))
}

/// A power vector reaching every SINR in `x_min` while meeting all constraints,
/// with the SIC row of pair `p` imposed exactly when `x_min,p > 0`.
pub fn feasibility_witness(pd: &ProblemData, x_min: &[f64]) -> Option<Vec<f64>> {
    let vars: Vec<usize> = (0..pd.len()).filter(|&p| x_min[p] > 0.0).collect();
    if vars.is_empty() {
        let y = vec![0.0; pd.len()];
        return witness_ok(pd, &y, x_min).then_some(y);
    }
    if vars.iter().any(|&p| x_min[p] > pd.sinr_cap(p) * (1.0 + 1e-12)) {
        return None;
    }
    let mut lp = LinearProgram::new(vars.len());
    for &p in &vars {
        let r: Vec<f64> = sinr_row(pd, p, x_min[p], &vars).iter().map(|v| -v).collect();
        lp.add_le(r, -x_min[p] * pd.t[p]);
    }
    push_common(pd, &vars, &vars, &mut lp.a_ub, &mut lp.b_ub);
    let sol = solve_lp(&lp).ok()?;
    if !sol.is_optimal() {
        return None;
    }
    let y = expand(pd, &vars, &sol.x);
    witness_ok(pd, &y, x_min).then_some(y)
}

/// Whether the SINR vector `x_min` is achievable.
pub fn check_point_feasible(pd: &ProblemData, x_min: &[f64]) -> bool {
    feasibility_witness(pd, x_min).is_some()
}

/// The single-coordinate fractional program behind bound tightening, posed over `vars`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateProgram {
    pub program: FractionalProgram,
    /// Active-set index of each program variable.
    pub vars: Vec<usize>,
    /// Position of the maximized coordinate within `vars`.
    pub target: usize,
}

/// Maximize SINR `p` with every other coordinate of positive `x_min` held at
/// its lower limit, SINR `p` capped at `x_max,p`, and all system constraints.
///
/// The SIC row of `p` itself is always imposed: any point with positive
/// SINR on `p` schedules that pair, so its SIC condition must hold there.
pub fn coordinate_program(pd: &ProblemData, x_min: &[f64], x_max: &[f64], p: usize) -> CoordinateProgram {
    let vars: Vec<usize> = (0..pd.len()).filter(|&i| i == p || x_min[i] > 0.0).collect();
    let target = vars.iter().position(|&i| i == p).expect("p is always kept");
    let mut a_ub = Vec::new();
    let mut b_ub = Vec::new();
    if x_max[p].is_finite() {
        a_ub.push(sinr_row(pd, p, x_max[p], &vars));
        b_ub.push(x_max[p] * pd.t[p]);
    }
    push_common(pd, &vars, &vars, &mut a_ub, &mut b_ub);
    for c in 0..vars.len() {
        let mut r = vec![0.0; vars.len()];
        r[c] = -1.0;
        a_ub.push(r);
        b_ub.push(0.0);
    }
    let mut a_eq = Vec::new();
    let mut b_eq = Vec::new();
    for &i in vars.iter().filter(|&&i| i != p) {
        a_eq.push(sinr_row(pd, i, x_min[i], &vars));
        b_eq.push(x_min[i] * pd.t[i]);
    }
    let mut numerator = vec![0.0; vars.len()];
    numerator[target] = pd.c_gain[p];
    CoordinateProgram {
        program: FractionalProgram {
            numerator,
            denominator: restrict(pd.dy(p), &vars),
            den_const: pd.t[p],
            a_ub,
            b_ub,
            a_eq,
            b_eq,
        },
        vars,
        target,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateSolution {
    /// Largest SINR reachable on the coordinate, capped at `x_max,p`.
    pub value: f64,
    /// Feasible power vector over the full active set attaining it.
    pub y: Vec<f64>,
    /// Whether the closed form produced the answer (otherwise the LP did).
    pub closed_form: bool,
}

/// Solves the coordinate program, preferring the closed form and falling back
/// to the Charnes–Cooper LP. `None` when the program is infeasible.
pub fn solve_coordinate(pd: &ProblemData, x_min: &[f64], x_max: &[f64], p: usize) -> Option<CoordinateSolution> {
    let cp = coordinate_program(pd, x_min, x_max, p);
    let mut floor = x_min.to_vec();
    floor[p] = 0.0;
    let accept = |y_local: &[f64], closed_form: bool| -> Option<CoordinateSolution> {
        let y = expand(pd, &cp.vars, y_local);
        if !witness_ok(pd, &y, &floor) {
            return None;
        }
        Some(CoordinateSolution {
            value: pd.sinr(p, &y).min(x_max[p]),
            y,
            closed_form,
        })
    };
    if let Ok(y) = lemma1_solve(&cp.program, cp.target) {
        if let Some(s) = accept(&y, true) {
            return Some(s);
        }
    }
    let sol = solve_fractional(&cp.program);
    if sol.status != super::LpStatus::Optimal {
        return None;
    }
    accept(&sol.y, false)
}
