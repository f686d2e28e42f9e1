use super::simplex::{solve_lp, LinearProgram, LpStatus};

/// `max (nᵀy) / (dᵀy + t)` over `y ≥ 0`, `A y ≤ b`, `A_eq y = b_eq`, with `t > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalProgram {
    pub numerator: Vec<f64>,
    pub denominator: Vec<f64>,
    pub den_const: f64,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
}

impl FractionalProgram {
    pub fn n(&self) -> usize {
        self.numerator.len()
    }

    pub fn ratio(&self, y: &[f64]) -> f64 {
        let num: f64 = self.numerator.iter().zip(y).map(|(a, b)| a * b).sum();
        let den: f64 = self.denominator.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() + self.den_const;
        num / den
    }

    /// Largest scaled constraint violation at `y`, including `y ≥ 0`.
    pub fn max_violation(&self, y: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, &b) in self.a_ub.iter().zip(&self.b_ub) {
            if b < f64::INFINITY {
                worst = worst.max(super::row_violation(row, b, y));
            }
        }
        for (row, &b) in self.a_eq.iter().zip(&self.b_eq) {
            worst = worst.max(super::row_violation(row, b, y).abs());
        }
        let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for &v in y {
            worst = worst.max(-v / scale);
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FractionalSolution {
    pub status: LpStatus,
    pub value: f64,
    pub y: Vec<f64>,
}

/// Solves through the Charnes–Cooper change of variables `w = κ/(dᵀy/t + 1)`,
/// `z = w·y`, which turns the ratio into the linear program
/// `max (n/t)ᵀz` s.t. `A z ≤ b w`, `A_eq z = b_eq w`, `(d/t)ᵀz + w = κ`.
///
/// With a bound `D ≥ dᵀy` read off the nonnegative rows, `κ = 1 + D/t` keeps the
/// optimal `w` in `[1, κ]`; with `κ = 1` a small `t` pushes `w` below the simplex
/// tolerances. Without such a bound `κ = 1` is tried first and, if `w` comes out
/// far from one, the program is re-solved once with `κ = 1/w`.
pub fn solve_fractional(fp: &FractionalProgram) -> FractionalSolution {
    if let Some(d) = denominator_bound(fp) {
        let kappa = (1.0 + d / fp.den_const).log2().round().exp2();
        return match charnes_cooper(fp, kappa) {
            Ok((sol, _)) => sol,
            Err(status) => failed(fp.n(), status),
        };
    }
    match charnes_cooper(fp, 1.0) {
        Ok((_, w)) if !(1e-3..=1e3).contains(&w) && w.is_finite() => {
            match charnes_cooper(fp, (-w.log2()).round().exp2()) {
                Ok((sol, _)) => sol,
                Err(status) => failed(fp.n(), status),
            }
        }
        Ok((sol, _)) => sol,
        Err(status) => failed(fp.n(), status),
    }
}

/// `max dᵀy` bounded through per-coordinate caps from rows with nonnegative
/// coefficients; `None` if some coordinate with a positive weight is uncapped.
fn denominator_bound(fp: &FractionalProgram) -> Option<f64> {
    let mut total = 0.0;
    for (i, &d) in fp.denominator.iter().enumerate() {
        if d <= 0.0 {
            continue;
        }
        let cap = fp
            .a_ub
            .iter()
            .zip(&fp.b_ub)
            .filter(|(row, b)| row[i] > 0.0 && b.is_finite() && row.iter().all(|&a| a >= 0.0))
            .map(|(row, &b)| b.max(0.0) / row[i])
            .fold(f64::INFINITY, f64::min);
        if !cap.is_finite() {
            return None;
        }
        total += d * cap;
    }
    Some(total)
}

fn failed(n: usize, status: LpStatus) -> FractionalSolution {
    FractionalSolution {
        status,
        value: f64::NAN,
        y: vec![0.0; n],
    }
}

/// One Charnes–Cooper solve; returns the recovered solution (which may still
/// report a violation) together with the optimal `w`.
fn charnes_cooper(fp: &FractionalProgram, kappa: f64) -> Result<(FractionalSolution, f64), LpStatus> {
    let n = fp.n();
    let t = fp.den_const;
    let mut lp = LinearProgram::new(n + 1);
    for i in 0..n {
        lp.objective[i] = fp.numerator[i] / t;
    }
    for (row, &b) in fp.a_ub.iter().zip(&fp.b_ub) {
        if b == f64::INFINITY {
            continue;
        }
        let mut r = row.clone();
        r.push(-b);
        lp.add_le(r, 0.0);
    }
    for (row, &b) in fp.a_eq.iter().zip(&fp.b_eq) {
        let mut r = row.clone();
        r.push(-b);
        lp.add_eq(r, 0.0);
    }
    let mut norm: Vec<f64> = fp.denominator.iter().map(|d| d / t).collect();
    norm.push(1.0);
    lp.add_eq(norm, kappa);

    let sol = solve_lp(&lp).map_err(|_| LpStatus::Infeasible)?;
    if !sol.is_optimal() {
        return Err(sol.status);
    }
    let w = sol.x[n];
    if !(w > 1e-14 * kappa) {
        return Err(LpStatus::Unbounded);
    }
    let y: Vec<f64> = sol.x[..n].iter().map(|z| (z / w).max(0.0)).collect();
    let out = if fp.max_violation(&y) > 1e-7 {
        failed(n, LpStatus::Infeasible)
    } else {
        FractionalSolution {
            status: LpStatus::Optimal,
            value: fp.ratio(&y),
            y,
        }
    };
    Ok((out, w / kappa))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dim(cap: f64) -> FractionalProgram {
        FractionalProgram {
            numerator: vec![1.0],
            denominator: vec![1.0],
            den_const: 1.0,
            a_ub: vec![vec![1.0]],
            b_ub: vec![cap],
            a_eq: vec![],
            b_eq: vec![],
        }
    }

    #[test]
    fn monotone_one_dimensional() {
        let s = solve_fractional(&one_dim(1.0));
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.value - 0.5).abs() < 1e-12);
        assert!((s.y[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_numerator() {
        let mut fp = one_dim(1.0);
        fp.numerator = vec![0.0];
        let s = solve_fractional(&fp);
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.value, 0.0);
    }

    #[test]
    fn infeasible_region() {
        let mut fp = one_dim(1.0);
        fp.a_ub.push(vec![-1.0]);
        fp.b_ub.push(-2.0);
        assert_eq!(solve_fractional(&fp).status, LpStatus::Infeasible);
    }

    #[test]
    fn trades_numerator_against_denominator() {
        // max y0 / (y1 + 1) with y0 + y1 ≤ 2, y0 ≤ 1.5 → y0 = 1.5, y1 = 0
        let fp = FractionalProgram {
            numerator: vec![1.0, 0.0],
            denominator: vec![0.0, 1.0],
            den_const: 1.0,
            a_ub: vec![vec![1.0, 1.0], vec![1.0, 0.0]],
            b_ub: vec![2.0, 1.5],
            a_eq: vec![],
            b_eq: vec![],
        };
        let s = solve_fractional(&fp);
        assert!((s.value - 1.5).abs() < 1e-12);
    }

    #[test]
    fn charnes_cooper_round_trip() {
        let d = [0.3, 2.0, 0.0];
        let t = 0.7;
        let y0 = [0.25, 1.5, 3.0];
        let w = 1.0 / (d.iter().zip(&y0).map(|(a, b)| a * b).sum::<f64>() / t + 1.0);
        let z: Vec<f64> = y0.iter().map(|v| v * w).collect();
        let back: Vec<f64> = z.iter().map(|v| v / w).collect();
        for (a, b) in back.iter().zip(&y0) {
            assert!((a - b).abs() < 1e-12);
        }
        let num = [1.0, 0.5, 0.0];
        let fp = FractionalProgram {
            numerator: num.to_vec(),
            denominator: d.to_vec(),
            den_const: t,
            a_ub: vec![],
            b_ub: vec![],
            a_eq: vec![],
            b_eq: vec![],
        };
        let linear: f64 = num.iter().zip(&z).map(|(a, b)| a / t * b).sum();
        assert!((fp.ratio(&y0) - linear).abs() < 1e-12);
    }
}
