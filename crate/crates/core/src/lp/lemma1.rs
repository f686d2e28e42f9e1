//! Closed-form solution of a single-coordinate fractional program whose
//! equality system pins every other coordinate to an affine function of it.

use nalgebra::{DMatrix, DVector};

use super::fractional::FractionalProgram;

/// Condition number of the row-normalized reduced equality matrix above which
/// the closed form is not trusted.
pub const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lemma1Failure {
    /// The reduced equality matrix is (nearly) singular.
    Singular { condition: f64 },
    /// No inequality row bounds the free coordinate from above.
    EmptyMask,
    /// The line through the equality system misses the inequality region.
    Infeasible,
    /// The equality system does not have exactly `n − 1` rows.
    Shape,
}

/// Maximizes the ratio along the one-dimensional solution set of the equalities.
///
/// Eliminating the other coordinates, every inequality row becomes
/// `g_i · y_p ≤ r_i`. The positive-`g` rows cap `y_p`; since the ratio grows
/// with `y_p` along the line, the smallest cap is optimal. Rows with negative
/// `g` give lower limits which are checked, the result is clamped to
/// `y_p ≥ 0`, and the full point is verified before it is returned.
pub fn lemma1_solve(fp: &FractionalProgram, p: usize) -> Result<Vec<f64>, Lemma1Failure> {
    let n = fp.n();
    if fp.a_eq.len() + 1 != n || p >= n {
        return Err(Lemma1Failure::Shape);
    }
    let others: Vec<usize> = (0..n).filter(|&i| i != p).collect();
    // y_others = u − v · y_p
    let (u, v) = if n == 1 {
        (DVector::zeros(0), DVector::zeros(0))
    } else {
        let a_e = DMatrix::from_fn(n - 1, n - 1, |r, c| fp.a_eq[r][others[c]]);
        let a_ep = DVector::from_fn(n - 1, |r, _| fp.a_eq[r][p]);
        let b_e = DVector::from_column_slice(&fp.b_eq);
        let mut normalized = a_e.clone();
        for mut row in normalized.row_iter_mut() {
            let m = row.amax();
            if m > 0.0 {
                row /= m;
            }
        }
        let sv = normalized.svd(false, false).singular_values;
        let condition = sv.max() / sv.min();
        if !(condition <= SINGULAR_CONDITION) {
            return Err(Lemma1Failure::Singular { condition });
        }
        let lu = a_e.lu();
        let u = lu.solve(&b_e).ok_or(Lemma1Failure::Singular {
            condition: f64::INFINITY,
        })?;
        let v = lu.solve(&a_ep).ok_or(Lemma1Failure::Singular {
            condition: f64::INFINITY,
        })?;
        (u, v)
    };

    let mut upper = f64::INFINITY;
    let mut lower = f64::NEG_INFINITY;
    let mut any_cap = false;
    for (row, &b) in fp.a_ub.iter().zip(&fp.b_ub) {
        if b == f64::INFINITY {
            continue;
        }
        let mut g = row[p];
        let mut r = b;
        let mut mag = row[p].abs();
        for (c, &i) in others.iter().enumerate() {
            g -= row[i] * v[c];
            r -= row[i] * u[c];
            mag += (row[i] * v[c]).abs();
        }
        let tol = 1e-12 * mag;
        if g > tol {
            any_cap = true;
            upper = upper.min(r / g);
        } else if g < -tol {
            lower = lower.max(r / g);
        } else if r < -1e-12 * (b.abs() + mag).max(f64::MIN_POSITIVE) {
            return Err(Lemma1Failure::Infeasible);
        }
    }
    if !any_cap {
        return Err(Lemma1Failure::EmptyMask);
    }
    let y_p = upper.max(0.0);
    if lower > y_p + 1e-9 * y_p.abs().max(lower.abs()).max(1e-300) {
        return Err(Lemma1Failure::Infeasible);
    }
    let mut y = vec![0.0; n];
    y[p] = y_p;
    for (c, &i) in others.iter().enumerate() {
        y[i] = u[c] - v[c] * y_p;
    }
    if fp.max_violation(&y) > 1e-8 {
        return Err(Lemma1Failure::Infeasible);
    }
    for val in &mut y {
        *val = val.max(0.0);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_fractional, LpStatus};

    #[test]
    fn decoupled_single_binding_row() {
        // y1 = 0.5 fixed by the equality; y0 capped at 2 by the first row
        let fp = FractionalProgram {
            numerator: vec![1.0, 0.0],
            denominator: vec![0.0, 1.0],
            den_const: 1.0,
            a_ub: vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
            b_ub: vec![2.0, 0.0, 0.0],
            a_eq: vec![vec![0.0, 2.0]],
            b_eq: vec![1.0],
        };
        let y = lemma1_solve(&fp, 0).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-12 && (y[1] - 0.5).abs() < 1e-12);
        let lp = solve_fractional(&fp);
        assert_eq!(lp.status, LpStatus::Optimal);
        assert!((lp.value - fp.ratio(&y)).abs() < 1e-12);
    }

    #[test]
    fn near_singular_is_flagged() {
        let fp = FractionalProgram {
            numerator: vec![1.0, 0.0, 0.0],
            denominator: vec![0.0, 1.0, 1.0],
            den_const: 1.0,
            a_ub: vec![vec![1.0, 1.0, 1.0]],
            b_ub: vec![1.0],
            a_eq: vec![vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 1.0 + 1e-14]],
            b_eq: vec![0.1, 0.1],
        };
        assert!(matches!(
            lemma1_solve(&fp, 0),
            Err(Lemma1Failure::Singular { condition }) if condition > 1e12
        ));
    }

    #[test]
    fn no_cap_is_reported() {
        let fp = FractionalProgram {
            numerator: vec![1.0],
            denominator: vec![1.0],
            den_const: 1.0,
            a_ub: vec![vec![-1.0]],
            b_ub: vec![0.0],
            a_eq: vec![],
            b_eq: vec![],
        };
        assert_eq!(lemma1_solve(&fp, 0), Err(Lemma1Failure::EmptyMask));
    }

    #[test]
    fn negative_cap_is_infeasible() {
        let fp = FractionalProgram {
            numerator: vec![1.0],
            denominator: vec![0.0],
            den_const: 1.0,
            a_ub: vec![vec![1.0], vec![-1.0]],
            b_ub: vec![-1.0, 0.0],
            a_eq: vec![],
            b_eq: vec![],
        };
        assert_eq!(lemma1_solve(&fp, 0), Err(Lemma1Failure::Infeasible));
    }
}
