//! Dense two-phase tableau simplex.
//!
//! Entering columns follow the largest reduced cost until a run of degenerate
//! pivots is seen, after which the solver switches to Bland's rule for the rest
//! of the solve; the ratio test always breaks ties on the lowest basic index.
//! Given identical input bits the pivot sequence, and so the answer, is fixed.

use crate::error::{Error, Result};

/// Largest number of structural variables accepted.
pub const MAX_VARIABLES: usize = 512;

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-10;
const DEGENERATE_RUN: usize = 50;

/// `max cᵀx` subject to `A_ub x ≤ b_ub`, `A_eq x = b_eq`, `lower ≤ x ≤ upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// `n` variables in `[0, ∞)` with a zero objective.
    pub fn new(n: usize) -> Self {
        Self {
            objective: vec![0.0; n],
            a_ub: Vec::new(),
            b_ub: Vec::new(),
            a_eq: Vec::new(),
            b_eq: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn n(&self) -> usize {
        self.objective.len()
    }

    pub fn add_le(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_ub.push(row);
        self.b_ub.push(rhs);
    }

    pub fn add_eq(&mut self, row: Vec<f64>, rhs: f64) {
        self.a_eq.push(row);
        self.b_eq.push(rhs);
    }

    /// Largest scaled violation of any constraint or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (row, &b) in self.a_ub.iter().zip(&self.b_ub) {
            worst = worst.max(super::row_violation(row, b, x));
        }
        for (row, &b) in self.a_eq.iter().zip(&self.b_eq) {
            worst = worst.max(super::row_violation(row, b, x).abs());
        }
        for ((&v, &lo), &hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max((lo - v) / lo.abs().max(1.0));
            worst = worst.max((v - hi) / hi.abs().max(1.0));
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// The pivot cap was hit; `x` is the last basic point and may be infeasible.
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    pub value: f64,
    pub pivots: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Le,
    Ge,
    Eq,
}

/// How an original variable maps onto non-negative standard-form columns.
enum VarMap {
    /// `x = offset + sign · s[col]`
    Shift { col: usize, offset: f64, sign: f64 },
    /// `x = s[pos] − s[neg]`
    Split { pos: usize, neg: usize },
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.n();
    if n > MAX_VARIABLES {
        return Err(Error::InvalidConfig(format!(
            "linear program with {n} variables exceeds the cap of {MAX_VARIABLES}"
        )));
    }
    let mut maps = Vec::with_capacity(n);
    let mut n_std = 0;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        let (lo, hi) = (lp.lower[i], lp.upper[i]);
        if lo > hi {
            return Ok(infeasible(n));
        }
        if lo.is_finite() {
            maps.push(VarMap::Shift {
                col: n_std,
                offset: lo,
                sign: 1.0,
            });
            if hi.is_finite() {
                bound_rows.push((n_std, hi - lo));
            }
            n_std += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Shift {
                col: n_std,
                offset: hi,
                sign: -1.0,
            });
            n_std += 1;
        } else {
            maps.push(VarMap::Split {
                pos: n_std,
                neg: n_std + 1,
            });
            n_std += 2;
        }
    }

    let translate = |row: &[f64], rhs: f64| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; n_std];
        let mut b = rhs;
        for (i, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[i] {
                VarMap::Shift { col, offset, sign } => {
                    out[col] += a * sign;
                    b -= a * offset;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] += a;
                    out[neg] -= a;
                }
            }
        }
        (out, b)
    };

    let mut rows: Vec<(Vec<f64>, Kind, f64)> = Vec::new();
    for (row, &b) in lp.a_ub.iter().zip(&lp.b_ub) {
        if b == f64::INFINITY {
            continue;
        }
        let (r, b) = translate(row, b);
        rows.push((r, Kind::Le, b));
    }
    for (row, &b) in lp.a_eq.iter().zip(&lp.b_eq) {
        let (r, b) = translate(row, b);
        rows.push((r, Kind::Eq, b));
    }
    for &(col, ub) in &bound_rows {
        let mut r = vec![0.0; n_std];
        r[col] = 1.0;
        rows.push((r, Kind::Le, ub));
    }

    let mut cost = vec![0.0; n_std];
    for (i, &c) in lp.objective.iter().enumerate() {
        match maps[i] {
            VarMap::Shift { col, sign, .. } => {
                cost[col] += c * sign;
            }
            VarMap::Split { pos, neg } => {
                cost[pos] += c;
                cost[neg] -= c;
            }
        }
    }

    let (status, s, pivots) = match standard_simplex(&cost, rows) {
        Some(r) => r,
        None => return Ok(infeasible(n)),
    };
    let x: Vec<f64> = maps
        .iter()
        .map(|m| match *m {
            VarMap::Shift { col, offset, sign } => offset + sign * s[col],
            VarMap::Split { pos, neg } => s[pos] - s[neg],
        })
        .collect();
    let value = if status == LpStatus::Optimal {
        lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum::<f64>()
    } else {
        f64::NAN
    };
    Ok(LpSolution {
        status,
        x,
        value,
        pivots,
    })
}

fn infeasible(n: usize) -> LpSolution {
    LpSolution {
        status: LpStatus::Infeasible,
        x: vec![0.0; n],
        value: f64::NAN,
        pivots: 0,
    }
}

struct Tableau {
    /// Row-major `m × (cols + 1)`; the last entry of each row is the right-hand side.
    t: Vec<f64>,
    width: usize,
    basis: Vec<usize>,
    obj: Vec<f64>,
    allowed: Vec<bool>,
    bland: bool,
    degenerate: usize,
    pivots: usize,
}

impl Tableau {
    fn m(&self) -> usize {
        self.basis.len()
    }

    fn cols(&self) -> usize {
        self.width - 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.t[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.t[r * w + c];
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for i in 0..self.m() {
            if i == r {
                continue;
            }
            let f = self.t[i * w + c];
            if f != 0.0 {
                for (v, &pr) in self.t[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.t[i * w + c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, &pr) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Reduced costs (and, in the last slot, minus the objective value) for `cost`.
    fn price(&mut self, cost: &[f64]) {
        let w = self.width;
        let mut obj = vec![0.0; w];
        obj[..cost.len()].copy_from_slice(cost);
        for i in 0..self.m() {
            let cb = cost.get(self.basis[i]).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for (o, &v) in obj.iter_mut().zip(&self.t[i * w..(i + 1) * w]) {
                    *o -= cb * v;
                }
            }
        }
        self.obj = obj;
    }

    fn entering(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.cols() {
            if !self.allowed[j] || self.obj[j] <= COST_TOL {
                continue;
            }
            if self.bland {
                return Some(j);
            }
            if best.is_none_or(|(_, v)| self.obj[j] > v) {
                best = Some((j, self.obj[j]));
            }
        }
        best.map(|(j, _)| j)
    }

    fn leaving(&self, c: usize) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.m() {
            let a = self.at(i, c);
            if a <= PIVOT_TOL {
                continue;
            }
            let ratio = self.rhs(i).max(0.0) / a;
            best = match best {
                None => Some((i, ratio)),
                Some((bi, br)) => {
                    let tie = (ratio - br).abs() <= 1e-12 * br.abs().max(1.0);
                    if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                        Some((i, ratio))
                    } else {
                        Some((bi, br))
                    }
                }
            };
        }
        best
    }

    /// Runs pivots to optimality for the currently priced objective.
    fn optimize(&mut self, cap: usize) -> LpStatus {
        loop {
            if self.pivots >= cap {
                return LpStatus::IterationLimit;
            }
            let Some(c) = self.entering() else {
                return LpStatus::Optimal;
            };
            let Some((r, ratio)) = self.leaving(c) else {
                return LpStatus::Unbounded;
            };
            if ratio <= 1e-12 {
                self.degenerate += 1;
                if self.degenerate > DEGENERATE_RUN {
                    self.bland = true;
                }
            } else {
                self.degenerate = 0;
            }
            self.pivot(r, c);
        }
    }
}

/// Solves `max costᵀs`, `s ≥ 0`, subject to the given rows. Returns `None` when infeasible.
fn standard_simplex(
    cost: &[f64],
    rows: Vec<(Vec<f64>, Kind, f64)>,
) -> Option<(LpStatus, Vec<f64>, usize)> {
    let n = cost.len();
    let col_scale = equilibrate(&rows, n);
    let cost: Vec<f64> = cost.iter().zip(&col_scale).map(|(c, s)| c * s).collect();
    let cmax = cost.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cost: Vec<f64> = if cmax > 0.0 { cost.iter().map(|c| c / cmax).collect() } else { cost };
    let mut kept = Vec::with_capacity(rows.len());
    for (mut r, mut kind, mut b) in rows {
        r.iter_mut().zip(&col_scale).for_each(|(v, s)| *v *= s);
        let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            let tol = 1e-12 * b.abs().max(1.0);
            let ok = match kind {
                Kind::Le => b >= -tol,
                Kind::Ge => b <= tol,
                Kind::Eq => b.abs() <= tol,
            };
            if !ok {
                return None;
            }
            continue;
        }
        r.iter_mut().for_each(|v| *v /= scale);
        b /= scale;
        if b < 0.0 {
            r.iter_mut().for_each(|v| *v = -*v);
            b = -b;
            kind = match kind {
                Kind::Le => Kind::Ge,
                Kind::Ge => Kind::Le,
                Kind::Eq => Kind::Eq,
            };
        }
        kept.push((r, kind, b));
    }
    let m = kept.len();
    let n_slack = kept.iter().filter(|r| r.1 != Kind::Eq).count();
    let n_art = kept.iter().filter(|r| r.1 != Kind::Le).count();
    let cols = n + n_slack + n_art;
    let width = cols + 1;
    let mut t = vec![0.0; m * width];
    let mut basis = Vec::with_capacity(m);
    let (mut slack, mut art) = (n, n + n_slack);
    for (i, (r, kind, b)) in kept.iter().enumerate() {
        t[i * width..i * width + n].copy_from_slice(r);
        t[i * width + cols] = *b;
        match kind {
            Kind::Le => {
                t[i * width + slack] = 1.0;
                basis.push(slack);
                slack += 1;
            }
            Kind::Ge => {
                t[i * width + slack] = -1.0;
                slack += 1;
                t[i * width + art] = 1.0;
                basis.push(art);
                art += 1;
            }
            Kind::Eq => {
                t[i * width + art] = 1.0;
                basis.push(art);
                art += 1;
            }
        }
    }
    let first_art = n + n_slack;
    let mut tab = Tableau {
        t,
        width,
        basis,
        obj: Vec::new(),
        allowed: vec![true; cols],
        bland: false,
        degenerate: 0,
        pivots: 0,
    };
    let cap = 100 * (m + cols) + 1000;
    let b_scale = kept.iter().fold(1.0f64, |s, r| s.max(r.2));

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        phase1[first_art..].iter_mut().for_each(|v| *v = -1.0);
        tab.price(&phase1);
        let status = tab.optimize(cap);
        if status == LpStatus::IterationLimit {
            return Some((status, unscale(extract(&tab, n), &col_scale), tab.pivots));
        }
        let infeasibility: f64 = (0..tab.m())
            .filter(|&i| tab.basis[i] >= first_art)
            .map(|i| tab.rhs(i))
            .sum();
        if infeasibility > 1e-9 * b_scale {
            return None;
        }
        // drive remaining artificials out of the basis, dropping redundant rows
        let mut i = 0;
        while i < tab.m() {
            if tab.basis[i] >= first_art {
                let col = (0..first_art)
                    .filter(|&j| tab.at(i, j).abs() > 1e-9)
                    .max_by(|&a, &b| tab.at(i, a).abs().total_cmp(&tab.at(i, b).abs()));
                match col {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        let w = tab.width;
                        tab.t.drain(i * w..(i + 1) * w);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
        for j in first_art..cols {
            tab.allowed[j] = false;
        }
        tab.bland = false;
        tab.degenerate = 0;
    }
    let mut full_cost = vec![0.0; cols];
    full_cost[..n].copy_from_slice(&cost);
    tab.price(&full_cost);
    let status = tab.optimize(cap);
    Some((status, unscale(extract(&tab, n), &col_scale), tab.pivots))
}

fn unscale(mut s: Vec<f64>, col_scale: &[f64]) -> Vec<f64> {
    s.iter_mut().zip(col_scale).for_each(|(v, c)| *v *= c);
    s
}

/// Column factors from a few rounds of geometric-mean row/column scaling, rounded
/// to powers of two so scaling itself is exact. Entries far below their row's
/// largest are ignored; they would otherwise drag the means toward underflow.
fn equilibrate(rows: &[(Vec<f64>, Kind, f64)], n: usize) -> Vec<f64> {
    const PASSES: usize = 6;
    const IGNORE_BELOW: f64 = 1e-14;
    let mut col = vec![1.0; n];
    let mut row = vec![1.0; rows.len()];
    let significant: Vec<Vec<(usize, f64)>> = rows
        .iter()
        .map(|(r, _, _)| {
            let big = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            r.iter()
                .enumerate()
                .filter(|(_, v)| v.abs() > IGNORE_BELOW * big)
                .map(|(j, v)| (j, v.abs()))
                .collect()
        })
        .collect();
    let pow2 = |lo: f64, hi: f64| (-0.5 * (lo.log2() + hi.log2())).round().exp2();
    for _ in 0..PASSES {
        for (i, entries) in significant.iter().enumerate() {
            let (lo, hi) = entries.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &(j, v)| {
                let v = v * col[j];
                (lo.min(v), hi.max(v))
            });
            if hi > 0.0 {
                row[i] = pow2(lo, hi);
            }
        }
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![0.0f64; n];
        for (i, entries) in significant.iter().enumerate() {
            for &(j, v) in entries {
                let v = v * row[i];
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        for j in 0..n {
            if hi[j] > 0.0 {
                col[j] = pow2(lo[j], hi[j]);
            }
        }
    }
    col
}

fn extract(tab: &Tableau, n: usize) -> Vec<f64> {
    let mut s = vec![0.0; n];
    for (i, &b) in tab.basis.iter().enumerate() {
        if b < n {
            s[b] = tab.rhs(i).max(0.0);
        }
    }
    s
}
