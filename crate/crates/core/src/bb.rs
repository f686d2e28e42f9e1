//! Branch and bound over boxes of per-pair SINR targets.
//!
//! The search minimizes `f(x) = −Σ log2(1 + x_p)` over the achievable SINR
//! region. Every box `[x_min, x_max]` whose corner `x_min` is achievable has
//! `f(x_max) ≤ f* ≤ f(x_min)` on it; unachievable boxes get `(0, 0)` and fall
//! to pruning once a positive rate is known.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{feasibility_witness, solve_coordinate};
use crate::reform::{objective, recover_assignment, Allocation, ProblemData};

/// Lower bounds above `U + PRUNE_GUARD` are pruned.
pub const PRUNE_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BbConfig {
    /// Absolute tolerance on `U − L` (bits per channel use).
    pub epsilon: f64,
    pub max_iterations: usize,
    pub tighten: bool,
    /// Disabling pruning keeps every box in the list; only useful for checks.
    pub prune: bool,
}

impl Default for BbConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            max_iterations: 200,
            tighten: true,
            prune: true,
        }
    }
}

impl BbConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "branch and bound needs epsilon > 0 and at least one iteration".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rectangle {
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub lb: f64,
    pub ub: f64,
    /// Power vector achieving at least `x_min`, when `x_min` is achievable.
    pub witness: Option<Vec<f64>>,
}

impl Rectangle {
    pub fn feasible(&self) -> bool {
        self.witness.is_some()
    }

    fn longest_edge(&self) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, (lo, hi)) in self.x_min.iter().zip(&self.x_max).enumerate() {
            if hi - lo > best.1 {
                best = (i, hi - lo);
            }
        }
        best
    }
}

/// `−Σ log2(1 + x_p)`.
pub fn f_min(x: &[f64]) -> f64 {
    -x.iter().map(|v| (1.0 + v).log2()).sum::<f64>()
}

/// The box `0 ≤ x_p ≤ P_max h_p / t_p`, bounds not yet evaluated.
pub fn initial_rectangle(pd: &ProblemData) -> Rectangle {
    Rectangle {
        x_min: vec![0.0; pd.len()],
        x_max: (0..pd.len()).map(|p| pd.sinr_cap(p)).collect(),
        lb: f64::NEG_INFINITY,
        ub: 0.0,
        witness: None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lb: f64,
    pub ub: f64,
    pub witness: Option<Vec<f64>>,
}

/// Corner bounds: `(f(x_max), f(x_min))` with the feasibility witness, or `(0, 0)`.
pub fn evaluate_bounds(x_min: &[f64], x_max: &[f64], pd: &ProblemData) -> Bounds {
    match feasibility_witness(pd, x_min) {
        Some(w) => Bounds {
            lb: f_min(x_max),
            ub: f_min(x_min),
            witness: Some(w),
        },
        None => Bounds {
            lb: 0.0,
            ub: 0.0,
            witness: None,
        },
    }
}

/// Counters from the per-coordinate programs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TightenStats {
    pub coordinate_solves: usize,
    pub closed_form: usize,
    pub infeasible: usize,
}

/// Tightened bounds for a box whose `x_min` is achievable.
///
/// If `x_max` is achievable too the box is solved outright. Otherwise each
/// coordinate is pushed as far as it goes with the others held at `x_min`,
/// giving `x̃_max` and the lower bound `f(x̃_max)`; each single-coordinate
/// point `x̃_min^i` is achievable by construction and yields an upper bound.
pub fn tighten(
    x_min: &[f64],
    x_max: &[f64],
    plain: Bounds,
    pd: &ProblemData,
    stats: &mut TightenStats,
) -> Bounds {
    if let Some(w) = feasibility_witness(pd, x_max) {
        let v = f_min(x_max);
        return Bounds {
            lb: v,
            ub: v,
            witness: Some(w),
        };
    }
    let n = x_min.len();
    let mut x_t = x_max.to_vec();
    let mut best = plain;
    for p in 0..n {
        if x_max[p] <= x_min[p] {
            x_t[p] = x_min[p];
            continue;
        }
        stats.coordinate_solves += 1;
        match solve_coordinate(pd, x_min, x_max, p) {
            Some(sol) => {
                if sol.closed_form {
                    stats.closed_form += 1;
                }
                x_t[p] = sol.value.clamp(x_min[p], x_max[p]);
                let mut corner = x_min.to_vec();
                corner[p] = x_t[p];
                let ub = f_min(&corner);
                if ub < best.ub {
                    best.ub = ub;
                    best.witness = Some(sol.y);
                }
            }
            None => {
                stats.infeasible += 1;
                if x_min[p] == 0.0 {
                    x_t[p] = 0.0;
                }
            }
        }
    }
    best.lb = best.lb.max(f_min(&x_t));
    if best.lb > best.ub {
        // numerical noise on a nearly solved box
        best.lb = best.ub;
    }
    best
}

/// Bisects the longest edge (lowest index on ties).
pub fn branch(rect: &Rectangle) -> (Rectangle, Rectangle) {
    let (i, _) = rect.longest_edge();
    let mid = 0.5 * (rect.x_min[i] + rect.x_max[i]);
    let mut lo = Rectangle {
        x_min: rect.x_min.clone(),
        x_max: rect.x_max.clone(),
        lb: rect.lb,
        ub: rect.ub,
        witness: None,
    };
    let mut hi = lo.clone();
    lo.x_max[i] = mid;
    hi.x_min[i] = mid;
    (lo, hi)
}

/// One row of the convergence history (minimization convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub iteration: usize,
    pub lower: f64,
    pub upper: f64,
    pub active: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BbResult {
    pub allocation: Allocation,
    /// Sum rate of the returned allocation.
    pub value: f64,
    /// Final `U − L`.
    pub gap: f64,
    /// Final `−L`: no allocation can exceed this penalized sum rate.
    pub rate_upper_bound: f64,
    pub iterations: usize,
    pub pruned: usize,
    pub history: Vec<BoundRecord>,
    pub stats: TightenStats,
}

struct Entry {
    rect: Rectangle,
    seq: u64,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // max-heap: smallest lower bound first, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .rect
            .lb
            .total_cmp(&self.rect.lb)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    pd: &'a ProblemData,
    cfg: BbConfig,
    stats: TightenStats,
    best_y: Vec<f64>,
    best_obj: f64,
}

impl Search<'_> {
    fn evaluate(&mut self, mut rect: Rectangle, known_witness: Option<Vec<f64>>) -> Rectangle {
        let plain = match known_witness {
            Some(w) => Bounds {
                lb: f_min(&rect.x_max),
                ub: f_min(&rect.x_min),
                witness: Some(w),
            },
            None => evaluate_bounds(&rect.x_min, &rect.x_max, self.pd),
        };
        let b = if self.cfg.tighten && plain.witness.is_some() {
            tighten(&rect.x_min, &rect.x_max, plain, self.pd, &mut self.stats)
        } else {
            plain
        };
        if let Some(w) = &b.witness {
            let obj = objective(self.pd, w);
            if obj > self.best_obj {
                self.best_obj = obj;
                self.best_y = w.clone();
            }
        }
        rect.lb = b.lb;
        rect.ub = b.ub;
        rect.witness = b.witness;
        rect
    }

    fn upper(&self, u: f64) -> f64 {
        u.min(-self.best_obj)
    }
}

pub fn run_bb(pd: &ProblemData, cfg: &BbConfig) -> BbResult {
    let n = pd.len();
    let mut search = Search {
        pd,
        cfg: *cfg,
        stats: TightenStats::default(),
        best_y: vec![0.0; n],
        best_obj: 0.0,
    };
    if n == 0 || !(pd.p_max > 0.0) {
        return finish(search, 0.0, 0, 0, vec![BoundRecord {
            iteration: 0,
            lower: 0.0,
            upper: 0.0,
            active: 0,
        }]);
    }
    let root = search.evaluate(initial_rectangle(pd), None);
    let mut upper = search.upper(root.ub);
    let mut lower = root.lb.min(upper);
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Entry { rect: root, seq });
    let mut history = vec![BoundRecord {
        iteration: 0,
        lower,
        upper,
        active: 1,
    }];
    let mut pruned = 0;
    let mut iterations = 0;
    while upper - lower >= cfg.epsilon && iterations < cfg.max_iterations {
        let Some(Entry { rect, .. }) = heap.pop() else {
            break;
        };
        iterations += 1;
        let (_, edge) = rect.longest_edge();
        let scale = rect.x_max.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if !(edge > 1e-12 * scale) {
            // nothing left to split: the box is its own corner
            let mut r = rect;
            if r.feasible() {
                r.lb = r.ub;
            }
            seq += 1;
            heap.push(Entry { rect: r, seq });
        } else {
            let parent_lb = rect.lb;
            let parent_witness = rect.witness.clone();
            let (lo, hi) = branch(&rect);
            for (child, inherited) in [(lo, parent_witness), (hi, None)] {
                let mut c = search.evaluate(child, inherited);
                if c.feasible() {
                    c.lb = c.lb.max(parent_lb).min(c.ub);
                }
                upper = search.upper(upper.min(c.ub));
                seq += 1;
                heap.push(Entry { rect: c, seq });
            }
        }
        if cfg.prune {
            let before = heap.len();
            heap.retain(|e| e.rect.lb <= upper + PRUNE_GUARD);
            pruned += before - heap.len();
        }
        let raw = heap.peek().map_or(upper, |e| e.rect.lb);
        lower = lower.max(raw.min(upper));
        history.push(BoundRecord {
            iteration: iterations,
            lower,
            upper,
            active: heap.len(),
        });
    }
    finish(search, upper - lower, iterations, pruned, history)
}

fn finish(
    search: Search<'_>,
    gap: f64,
    iterations: usize,
    pruned: usize,
    history: Vec<BoundRecord>,
) -> BbResult {
    let pd = search.pd;
    let allocation = recover_assignment(pd, &search.best_y, pd.default_floor());
    let lower = history.last().map_or(0.0, |h| h.lower);
    BbResult {
        value: allocation.sum_rate(),
        allocation,
        gap: gap.max(0.0),
        rate_upper_bound: -lower,
        iterations,
        pruned,
        history,
        stats: search.stats,
    }
}

/// Writes `iteration,lower,upper,active` rows.
pub fn write_history(path: &Path, history: &[BoundRecord]) -> Result<()> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for rec in history {
        w.serialize(rec).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::EffectiveGains;
    use crate::reform::{build_active_set, build_problem_with, check_feasible};

    fn single_pair(hs: f64, target: f64, p_max: f64) -> ProblemData {
        let g = EffectiveGains::from_gains(vec![vec![1e-8]], vec![vec![hs]], 1.0, 1e-12, vec![target]).unwrap();
        let s = build_active_set(&g);
        build_problem_with(&g, &s, p_max, 1e8)
    }

    #[test]
    fn unit_box_example() {
        let g = EffectiveGains::from_gains(vec![vec![1.0]], vec![vec![1.0]], 1.0, 1.0, vec![0.0]).unwrap();
        // t = σ² = 1, h = 1, P_max = 1
        let pd = build_problem_with(&g, &build_active_set(&g), 1.0, 1e8);
        assert_eq!(initial_rectangle(&pd).x_max, vec![1.0]);
    }

    #[test]
    fn branch_longest_edge() {
        let r = Rectangle {
            x_min: vec![0.0, 0.0],
            x_max: vec![1.0, 1.0],
            lb: -1.0,
            ub: 0.0,
            witness: None,
        };
        let (a, b) = branch(&r);
        assert_eq!(a.x_max, vec![0.5, 1.0]);
        assert_eq!(b.x_min, vec![0.5, 0.0]);
        let r2 = Rectangle {
            x_max: vec![1.0, 2.0],
            ..r
        };
        let (a, b) = branch(&r2);
        assert_eq!(a.x_max, vec![1.0, 1.0]);
        assert_eq!(b.x_min, vec![0.0, 1.0]);
        let vol = |r: &Rectangle| r.x_min.iter().zip(&r.x_max).map(|(l, h)| h - l).product::<f64>();
        assert!((vol(&a) + vol(&b) - vol(&r2)).abs() < 1e-15);
    }

    #[test]
    fn zero_budget_is_degenerate() {
        let pd = single_pair(1e-9, 1.0, 0.0);
        let r = run_bb(&pd, &BbConfig::default());
        assert_eq!(r.value, 0.0);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn infeasible_corner_bounds() {
        let pd = single_pair(1e-9, 1.0, 1.0);
        let cap = pd.sinr_cap(0);
        let b = evaluate_bounds(&[cap * 1.5], &[cap * 2.0], &pd);
        assert_eq!((b.lb, b.ub), (0.0, 0.0));
        assert!(b.witness.is_none());
        let b = evaluate_bounds(&[0.0], &[0.0], &pd);
        assert_eq!((b.lb, b.ub), (0.0, 0.0));
        assert!(b.witness.is_some());
    }

    #[test]
    fn single_pair_matches_clip_formula() {
        for (hs, target) in [(1e-9, 1.0), (3e-10, 2.0), (5e-9, 0.2)] {
            let pd = single_pair(hs, target, 1.0);
            let g = &pd.gains;
            let power = 1.0f64.min(-g.c[0]).min(-g.b[0][0]).max(0.0);
            let expect = (1.0 + g.hs[0][0] / g.t[0][0] * power).log2();
            for tighten in [false, true] {
                let cfg = BbConfig {
                    epsilon: 1e-6,
                    max_iterations: 10_000,
                    tighten,
                    prune: true,
                };
                let r = run_bb(&pd, &cfg);
                assert!((r.value - expect).abs() < 1e-5, "{tighten}: {} vs {expect}", r.value);
                if tighten {
                    assert!(r.iterations <= 1);
                }
            }
        }
    }

    #[test]
    fn history_is_monotone_and_witness_feasible() {
        let g = EffectiveGains::from_gains(
            vec![vec![1e-8, 2e-12], vec![1e-12, 2e-8]],
            vec![vec![4e-10, 3e-10], vec![2e-10, 3e-10]],
            1.0,
            1e-12,
            vec![0.5, 0.5],
        )
        .unwrap();
        let s = build_active_set(&g);
        assert_eq!(s.len(), 4);
        let pd = build_problem_with(&g, &s, 1.0, 1e8);
        let r = run_bb(&pd, &BbConfig { epsilon: 1e-3, max_iterations: 2000, ..Default::default() });
        for w in r.history.windows(2) {
            assert!(w[1].upper <= w[0].upper + 1e-12);
            assert!(w[1].lower >= w[0].lower - 1e-12);
        }
        assert!(r.history.iter().all(|h| h.upper >= h.lower));
        assert!(check_feasible(&pd, &r.allocation.y).feasible(1e-7));
        assert!(r.allocation.rates.qos_shortfall < 1e-6);
        if r.iterations < 2000 {
            assert!(r.gap < 1e-3);
        }
    }
}
