//! Successive convex approximation of the difference-of-logs objective.
//!
//! The subtracted `log2(d_pᵀRy + t_p)` terms are replaced by their tangent at
//! `y_0`, which over-estimates them, so each surrogate is a concave minorant
//! of the true objective that touches it at `y_0`. The auxiliary epigraph
//! variables are eliminated up front: each one only ever sits at its bound.

use std::f64::consts::LN_2;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reform::{
    build_problem_with, objective, recover_assignment, ActiveSet, Allocation, ProblemData,
};
use crate::channel::EffectiveGains;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScaVariant {
    /// Full active set with every SIC row enforced.
    I,
    /// One max-gain user per beam, then power allocation.
    II,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InnerConfig {
    /// Stop once the duality-gap estimate `m/τ` falls below this (nats).
    pub gap_tol: f64,
    pub tau_start: f64,
    pub tau_growth: f64,
    pub max_newton: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            tau_start: 1.0,
            tau_growth: 10.0,
            max_newton: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaConfig {
    pub variant: ScaVariant,
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Start from an interior uniform split instead of `y = 0`.
    pub uniform_start: bool,
    pub inner: InnerConfig,
}

impl Default for ScaConfig {
    fn default() -> Self {
        Self {
            variant: ScaVariant::II,
            outer_tol: 1e-4,
            max_outer: 50,
            uniform_start: false,
            inner: InnerConfig::default(),
        }
    }
}

impl ScaConfig {
    pub fn with_variant(variant: ScaVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.outer_tol > 0.0) || self.max_outer == 0 {
            return Err(Error::InvalidConfig(
                "SCA needs outer_tol > 0 and max_outer >= 1".into(),
            ));
        }
        if !(self.inner.gap_tol > 0.0) || !(self.inner.tau_start > 0.0) || !(self.inner.tau_growth > 1.0) {
            return Err(Error::InvalidConfig("invalid barrier parameters".into()));
        }
        Ok(())
    }
}

/// Keeps, on every beam, only the admitted user with the largest `hS[j][k]`
/// (lowest `j` on ties).
pub fn schedule_max_gain(g: &EffectiveGains, s: &ActiveSet) -> ActiveSet {
    let mut best: Vec<Option<usize>> = vec![None; g.n_primary()];
    for &(j, k) in &s.pairs {
        match best[k] {
            Some(b) if g.hs[b][k] >= g.hs[j][k] && (g.hs[b][k] > g.hs[j][k] || b < j) => {}
            _ => best[k] = Some(j),
        }
    }
    ActiveSet::from_pairs(
        best.iter()
            .enumerate()
            .filter_map(|(k, j)| j.map(|j| (j, k)))
            .collect(),
    )
}

/// Concave surrogate `Σ log2(1 + ã_pᵀy) − gᵀy/ln2 + constant` under linear constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaSubproblem {
    pub y0: Vec<f64>,
    /// `ã_p = (c_p + Rᵀd_p)/t_p`.
    pub gains: Vec<Vec<f64>>,
    /// `g = Σ_p Rᵀd_p / (d_pᵀRy_0 + t_p)`.
    pub slope: Vec<f64>,
    pub constant: f64,
    /// `a_ub y ≤ b_ub`, all coefficients nonnegative; `y ≥ 0` is implicit.
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl ScaSubproblem {
    pub fn n(&self) -> usize {
        self.y0.len()
    }

    /// Surrogate objective in bits.
    pub fn value(&self, y: &[f64]) -> f64 {
        let logs: f64 = self.gains.iter().map(|a| (1.0 + dot(a, y)).log2()).sum();
        logs - dot(&self.slope, y) / LN_2 + self.constant
    }

    pub fn max_violation(&self, y: &[f64]) -> f64 {
        let mut worst = y.iter().map(|&v| -v).fold(0.0, f64::max);
        for (row, &b) in self.a_ub.iter().zip(&self.b_ub) {
            worst = worst.max(crate::lp::row_violation(row, b, y));
        }
        worst
    }
}

/// Linearizes the subtracted logs at `y0`; QoS rows, every SIC row and the budget.
pub fn build_subproblem(pd: &ProblemData, y0: &[f64]) -> ScaSubproblem {
    let n = pd.len();
    let mut gains = Vec::with_capacity(n);
    let mut slope = vec![0.0; n];
    let mut constant = 0.0;
    for p in 0..n {
        let dy = pd.dy(p);
        let t = pd.t[p];
        let mut a: Vec<f64> = dy.iter().map(|v| v / t).collect();
        a[p] += pd.c_gain[p] / t;
        gains.push(a);
        let den0 = pd.denominator(p, y0);
        for (s, v) in slope.iter_mut().zip(dy) {
            *s += v / den0;
        }
        constant += (t / den0).log2();
    }
    constant += dot(&slope, y0) / LN_2;
    let mut a_ub = Vec::new();
    let mut b_ub = Vec::new();
    for row in pd.qos_rows() {
        a_ub.push(row.coef.clone());
        b_ub.push(row.rhs);
    }
    for p in 0..n {
        if let Some(row) = pd.sic_row(p) {
            a_ub.push(row.coef.clone());
            b_ub.push(row.rhs);
        }
    }
    a_ub.push(vec![1.0; n]);
    b_ub.push(pd.p_max);
    ScaSubproblem {
        y0: y0.to_vec(),
        gains,
        slope,
        constant,
        a_ub,
        b_ub,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InnerStatus {
    Converged,
    /// The barrier path stalled; the last strictly feasible iterate is returned.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerSolution {
    pub y: Vec<f64>,
    pub status: InnerStatus,
    pub newton_steps: usize,
}

/// Variables forced to zero by a row with no slack, or absent from every log
/// term (the objective can only fall as they grow).
fn pinned(sub: &ScaSubproblem) -> Vec<bool> {
    let mut fixed: Vec<bool> = (0..sub.n())
        .map(|i| sub.gains.iter().all(|a| a[i] == 0.0))
        .collect();
    for (row, &b) in sub.a_ub.iter().zip(&sub.b_ub) {
        if b <= 0.0 {
            for (f, &a) in fixed.iter_mut().zip(row) {
                if a > 0.0 {
                    *f = true;
                }
            }
        }
    }
    fixed
}

struct Barrier {
    gains: Vec<Vec<f64>>,
    slope: Vec<f64>,
    rows: Vec<(Vec<f64>, f64)>,
}

impl Barrier {
    /// `−τψ(y) − Σ ln slack`, or `None` outside the interior.
    fn value(&self, tau: f64, y: &[f64]) -> Option<f64> {
        let mut v = 0.0;
        for (row, b) in &self.rows {
            let s = b - dot(row, y);
            if !(s > 0.0) {
                return None;
            }
            v -= s.ln();
        }
        for &yi in y {
            if !(yi > 0.0) {
                return None;
            }
            v -= yi.ln();
        }
        let psi: f64 = self.gains.iter().map(|a| (1.0 + dot(a, y)).ln()).sum::<f64>() - dot(&self.slope, y);
        Some(v - tau * psi)
    }

    fn newton_system(&self, tau: f64, y: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
        let n = y.len();
        let mut h = DMatrix::zeros(n, n);
        let mut grad = DVector::from_fn(n, |i, _| tau * self.slope[i]);
        for a in &self.gains {
            let u = 1.0 + dot(a, y);
            for i in 0..n {
                grad[i] -= tau * a[i] / u;
                for j in 0..n {
                    h[(i, j)] += tau * a[i] * a[j] / (u * u);
                }
            }
        }
        for (row, b) in &self.rows {
            let s = b - dot(row, y);
            for i in 0..n {
                grad[i] += row[i] / s;
                for j in 0..n {
                    h[(i, j)] += row[i] * row[j] / (s * s);
                }
            }
        }
        for i in 0..n {
            grad[i] -= 1.0 / y[i];
            h[(i, i)] += 1.0 / (y[i] * y[i]);
        }
        (h, grad)
    }
}

/// Log-barrier interior-point method with damped Newton centering steps.
pub fn solve_subproblem(sub: &ScaSubproblem, cfg: &InnerConfig) -> InnerSolution {
    let n = sub.n();
    let fixed = pinned(sub);
    let free: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
    let mut full = vec![0.0; n];
    let done = |y: Vec<f64>, status, steps| InnerSolution {
        y,
        status,
        newton_steps: steps,
    };
    if free.is_empty() {
        return done(full, InnerStatus::Converged, 0);
    }
    let restrict = |v: &[f64]| -> Vec<f64> { free.iter().map(|&i| v[i]).collect() };
    let rows: Vec<(Vec<f64>, f64)> = sub
        .a_ub
        .iter()
        .zip(&sub.b_ub)
        .filter(|(r, b)| b.is_finite() && free.iter().any(|&i| r[i] != 0.0))
        .map(|(r, &b)| (restrict(r), b))
        .collect();
    let barrier = Barrier {
        gains: sub.gains.iter().map(|a| restrict(a)).collect(),
        slope: restrict(&sub.slope),
        rows,
    };
    // interior start: half the largest uniform level every row allows
    let mut level = f64::INFINITY;
    for (row, b) in &barrier.rows {
        let load: f64 = row.iter().filter(|&&a| a > 0.0).sum();
        if load > 0.0 {
            level = level.min(b / load);
        }
    }
    if !level.is_finite() {
        level = 1.0;
    }
    let mut y = vec![0.5 * level; free.len()];
    let m = (barrier.rows.len() + free.len()) as f64;
    let mut tau = cfg.tau_start;
    let mut steps = 0;
    let mut status = InnerStatus::Converged;
    'outer: loop {
        for _ in 0..cfg.max_newton {
            let (h, grad) = barrier.newton_system(tau, &y);
            let Some(dir) = newton_direction(h, &grad) else {
                status = InnerStatus::Stalled;
                break 'outer;
            };
            let decrement = -grad.dot(&dir);
            if !(decrement > 0.0) || decrement / 2.0 <= 1e-12 {
                break;
            }
            steps += 1;
            let f0 = barrier.value(tau, &y).expect("iterate stays interior");
            let mut step = 1.0;
            let accepted = loop {
                let trial: Vec<f64> = y.iter().zip(dir.iter()).map(|(a, d)| a + step * d).collect();
                if let Some(f1) = barrier.value(tau, &trial) {
                    if f1 <= f0 - 0.25 * step * decrement {
                        break Some(trial);
                    }
                }
                step *= 0.5;
                if step < 1e-14 {
                    break None;
                }
            };
            match accepted {
                Some(t) => y = t,
                None => {
                    // no further progress at this τ
                    break;
                }
            }
        }
        if m / tau < cfg.gap_tol {
            break;
        }
        tau *= cfg.tau_growth;
        if !tau.is_finite() {
            status = InnerStatus::Stalled;
            break;
        }
    }
    for (&i, &v) in free.iter().zip(&y) {
        full[i] = v;
    }
    done(push_to_boundary(sub, full), status, steps)
}

/// The barrier optimum sits strictly inside the feasible set. Rows are
/// nonnegative, so `s·y` stays feasible up to `s = min b/(aᵀy)`; the scaled
/// point replaces `y` when the surrogate does not drop.
fn push_to_boundary(sub: &ScaSubproblem, y: Vec<f64>) -> Vec<f64> {
    let s = sub
        .a_ub
        .iter()
        .zip(&sub.b_ub)
        .filter_map(|(row, &b)| {
            let load = dot(row, &y);
            (load > 0.0).then(|| b / load)
        })
        .fold(f64::INFINITY, f64::min);
    if !(s > 1.0 && s.is_finite()) {
        return y;
    }
    let scaled: Vec<f64> = y.iter().map(|v| v * s).collect();
    // a few ulps of relative violation are roundoff in s itself
    if sub.value(&scaled) >= sub.value(&y) && sub.max_violation(&scaled) <= 4.0 * f64::EPSILON {
        scaled
    } else {
        y
    }
}

fn newton_direction(h: DMatrix<f64>, grad: &DVector<f64>) -> Option<DVector<f64>> {
    let rhs = -grad;
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(&rhs));
    }
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1.0);
    let n = h.nrows();
    let reg = h + DMatrix::identity(n, n) * (1e-12 * scale);
    reg.cholesky().map(|ch| ch.solve(&rhs))
}

/// One row of the outer-loop trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaTraceRow {
    pub iteration: usize,
    /// True objective at the iterate.
    pub objective: f64,
    /// Surrogate optimum of the subproblem that produced it.
    pub surrogate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaResult {
    pub allocation: Allocation,
    pub value: f64,
    /// Number of subproblems solved.
    pub iterations: usize,
    pub converged: bool,
    pub inner_stalls: usize,
    pub trace: Vec<ScaTraceRow>,
}

struct Iterated {
    y: Vec<f64>,
    iterations: usize,
    converged: bool,
    inner_stalls: usize,
    trace: Vec<ScaTraceRow>,
}

fn start_point(pd: &ProblemData, uniform: bool) -> Vec<f64> {
    let n = pd.len();
    if !uniform || n == 0 {
        return vec![0.0; n];
    }
    let sub = build_subproblem(pd, &vec![0.0; n]);
    let fixed = pinned(&sub);
    let mut level = pd.p_max / n as f64;
    for (row, &b) in sub.a_ub.iter().zip(&sub.b_ub) {
        let load: f64 = row.iter().zip(&fixed).filter(|(a, f)| **a > 0.0 && !**f).map(|(a, _)| a).sum();
        if load > 0.0 {
            level = level.min(0.5 * b / load);
        }
    }
    fixed.iter().map(|&f| if f { 0.0 } else { level.max(0.0) }).collect()
}

fn iterate(pd: &ProblemData, cfg: &ScaConfig) -> Iterated {
    let mut y = start_point(pd, cfg.uniform_start);
    let mut obj = objective(pd, &y);
    let mut trace = vec![ScaTraceRow {
        iteration: 0,
        objective: obj,
        surrogate: obj,
    }];
    let mut out = Iterated {
        y: y.clone(),
        iterations: 0,
        converged: false,
        inner_stalls: 0,
        trace: Vec::new(),
    };
    if pd.is_empty() || !(pd.p_max > 0.0) {
        out.converged = true;
        out.trace = trace;
        return out;
    }
    for it in 1..=cfg.max_outer {
        let sub = build_subproblem(pd, &y);
        let sol = solve_subproblem(&sub, &cfg.inner);
        out.iterations = it;
        if sol.status == InnerStatus::Stalled {
            out.inner_stalls += 1;
        }
        let next_obj = objective(pd, &sol.y);
        trace.push(ScaTraceRow {
            iteration: it,
            objective: next_obj,
            surrogate: sub.value(&sol.y),
        });
        if next_obj < obj {
            // inner inaccuracy only; keep the better iterate
            out.converged = obj - next_obj < cfg.outer_tol;
            break;
        }
        let delta = next_obj - obj;
        y = sol.y;
        obj = next_obj;
        if delta < cfg.outer_tol {
            out.converged = true;
            break;
        }
    }
    out.y = y;
    out.trace = trace;
    out
}

pub fn run_sca(pd: &ProblemData, cfg: &ScaConfig) -> ScaResult {
    let (y, it) = match cfg.variant {
        ScaVariant::I => {
            let it = iterate(pd, cfg);
            (it.y.clone(), it)
        }
        ScaVariant::II => {
            let reduced = schedule_max_gain(&pd.gains, &pd.active);
            let rpd = build_problem_with(&pd.gains, &reduced, pd.p_max, pd.xi);
            let it = iterate(&rpd, cfg);
            let mut full = vec![0.0; pd.len()];
            for (q, &(j, k)) in reduced.pairs.iter().enumerate() {
                let p = pd.active.index_of(j, k).expect("reduced pairs come from the active set");
                full[p] = it.y[q];
            }
            (full, it)
        }
    };
    let allocation = recover_assignment(pd, &y, pd.default_floor());
    ScaResult {
        value: allocation.sum_rate(),
        allocation,
        iterations: it.iterations,
        converged: it.converged,
        inner_stalls: it.inner_stalls,
        trace: it.trace,
    }
}

/// Writes `iteration,objective,surrogate` rows.
pub fn write_trace(path: &Path, trace: &[ScaTraceRow]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in trace {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
