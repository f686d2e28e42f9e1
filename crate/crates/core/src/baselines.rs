//! Reference solvers: single-pair greedy scheduling, the two-user power-split
//! function, and an exhaustive grid oracle for small instances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reform::{recover_assignment, true_rates, Allocation, ProblemData, ScheduledPower};

/// Shortfall (bits) below which a rate requirement counts as met.
pub const QOS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyChoice {
    pub user: usize,
    pub beam: usize,
    pub power: f64,
    pub rate: f64,
}

/// `max(0, min(P_max, −c_k, −b_jk))` and the resulting single-pair rate.
pub fn clip_choice(pd: &ProblemData, user: usize, beam: usize) -> GreedyChoice {
    let g = &pd.gains;
    let power = pd.p_max.min(-g.c[beam]).min(-g.b[user][beam]).max(0.0);
    GreedyChoice {
        user,
        beam,
        power,
        rate: (1.0 + g.hs[user][beam] * power / g.t[user][beam]).log2(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyResult {
    pub allocation: Allocation,
    pub value: f64,
    pub choice: Option<GreedyChoice>,
    /// Factor applied to the clipped power to restore other beams' QoS.
    pub scale: f64,
}

/// Best single (user, beam) pair with its clipped power.
///
/// The clip only protects the pair's own beam; if the power leaks enough onto
/// another beam to break that primary's target, the power is bisected down.
pub fn greedy_schedule(pd: &ProblemData) -> GreedyResult {
    let g = &pd.gains;
    let mut best: Option<GreedyChoice> = None;
    for k in 0..g.n_primary() {
        for j in 0..g.n_secondary() {
            let c = clip_choice(pd, j, k);
            if c.power > 0.0 && best.is_none_or(|b| c.rate > b.rate) {
                best = Some(c);
            }
        }
    }
    let zero = || GreedyResult {
        allocation: Allocation::zero(pd),
        value: 0.0,
        choice: best,
        scale: 0.0,
    };
    let Some(choice) = best else {
        return zero();
    };
    let Some(p) = pd.active.index_of(choice.user, choice.beam) else {
        return zero();
    };
    let ok = |scale: f64| {
        let sp = ScheduledPower {
            user: choice.user,
            beam: choice.beam,
            power: choice.power * scale,
        };
        true_rates(g, &[sp]).qos_shortfall <= QOS_TOL
    };
    let mut scale = 1.0;
    if !ok(1.0) {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        scale = lo;
    }
    let mut y = vec![0.0; pd.len()];
    y[p] = choice.power * scale;
    let allocation = recover_assignment(pd, &y, 0.0);
    GreedyResult {
        value: allocation.sum_rate(),
        allocation,
        choice: Some(choice),
        scale,
    }
}

/// Two users sharing one beam, strong user taking share `alpha` of the power:
/// `log2(1 + xα/(1+β−α)) + log2(1 + (1−α)/(x(α+β)))`.
pub fn f_alpha(alpha: f64, x: f64, beta: f64) -> f64 {
    (1.0 + x * alpha / (1.0 + beta - alpha)).log2() + (1.0 + (1.0 - alpha) / (x * (alpha + beta))).log2()
}

/// `(1+β)²x² − βx − β²`, which carries the sign of `f'(1)`.
pub fn f_alpha_slope_sign(x: f64, beta: f64) -> f64 {
    (1.0 + beta).powi(2) * x * x - beta * x - beta * beta
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FalphaRow {
    pub x: f64,
    pub beta: f64,
    /// First maximizer on the α grid.
    pub argmax_alpha: f64,
    pub f_one: f64,
    pub f_zero: f64,
    pub slope_sign: f64,
}

/// Scans `f_alpha` on a log grid of `x ∈ (1, 100]` and `β ∈ [0.01, 100]`,
/// with `n_alpha` evenly spaced shares in `[0, 1]`.
pub fn falpha_grid(n_x: usize, n_beta: usize, n_alpha: usize) -> Vec<FalphaRow> {
    assert!(n_x >= 1 && n_beta >= 2 && n_alpha >= 2);
    let mut rows = Vec::with_capacity(n_x * n_beta);
    for i in 0..n_x {
        let x = 10f64.powf(2.0 * (i + 1) as f64 / n_x as f64);
        for b in 0..n_beta {
            let beta = 10f64.powf(-2.0 + 4.0 * b as f64 / (n_beta - 1) as f64);
            let mut best = (0.0, f64::NEG_INFINITY);
            for a in 0..n_alpha {
                let alpha = a as f64 / (n_alpha - 1) as f64;
                let v = f_alpha(alpha, x, beta);
                if v > best.1 {
                    best = (alpha, v);
                }
            }
            rows.push(FalphaRow {
                x,
                beta,
                argmax_alpha: best.0,
                f_one: f_alpha(1.0, x, beta),
                f_zero: f_alpha(0.0, x, beta),
                slope_sign: f_alpha_slope_sign(x, beta),
            });
        }
    }
    rows
}

/// Largest table of beam assignments the oracle will enumerate.
pub const ORACLE_MAX_ASSIGNMENTS: usize = 256;
pub const ORACLE_MAX_PAIRS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub allocation: Allocation,
    pub value: f64,
    /// Largest sum-rate change between the best grid point and a neighbour one step away.
    pub delta_grid: f64,
    pub evaluated: usize,
}

fn sum_rate_at(pd: &ProblemData, pairs: &[usize], levels: &[usize], step: f64) -> (f64, f64) {
    let powers: Vec<ScheduledPower> = pairs
        .iter()
        .zip(levels)
        .map(|(&p, &l)| {
            let (user, beam) = pd.active.pairs[p];
            ScheduledPower {
                user,
                beam,
                power: l as f64 * step,
            }
        })
        .collect();
    let r = true_rates(&pd.gains, &powers);
    (r.sum_rate, r.qos_shortfall)
}

/// Calls `visit` on every level vector with entries in `0..=n` summing to at most `n`.
fn for_each_level(dim: usize, n: usize, visit: &mut dyn FnMut(&[usize])) {
    fn rec(levels: &mut Vec<usize>, dim: usize, left: usize, visit: &mut dyn FnMut(&[usize])) {
        if levels.len() == dim {
            visit(levels);
            return;
        }
        for l in 0..=left {
            levels.push(l);
            rec(levels, dim, left - l, visit);
            levels.pop();
        }
    }
    rec(&mut Vec::with_capacity(dim), dim, n, visit);
}

/// Exhaustive search over beam assignments and a power grid of step `P_max/grid_n`,
/// scored with the original rate model.
///
/// Pairs outside the active set are skipped: their beam's primary or their
/// own decoding of it already fails with no secondary power at all.
pub fn brute_force(pd: &ProblemData, grid_n: usize) -> Result<OracleResult> {
    let g = &pd.gains;
    let k_n = g.n_primary();
    let m = g.n_secondary();
    let table = (m + 1).checked_pow(k_n as u32).unwrap_or(usize::MAX);
    if table > ORACLE_MAX_ASSIGNMENTS || pd.len() > ORACLE_MAX_PAIRS {
        return Err(Error::OracleTooLarge(format!(
            "(M+1)^K = {table}, |S| = {} (limits {ORACLE_MAX_ASSIGNMENTS}, {ORACLE_MAX_PAIRS})",
            pd.len()
        )));
    }
    if grid_n == 0 {
        return Err(Error::InvalidConfig("oracle grid needs at least one step".into()));
    }
    if !(pd.p_max > 0.0) || pd.is_empty() {
        return Ok(OracleResult {
            allocation: Allocation::zero(pd),
            value: 0.0,
            delta_grid: 0.0,
            evaluated: 0,
        });
    }
    let step = pd.p_max / grid_n as f64;
    // assignment a encodes beam k's user as digit k in base M+1, 0 meaning idle
    let best = (0..table)
        .into_par_iter()
        .filter_map(|a| {
            let mut pairs = Vec::new();
            let mut code = a;
            for k in 0..k_n {
                let digit = code % (m + 1);
                code /= m + 1;
                if digit > 0 {
                    pairs.push(pd.active.index_of(digit - 1, k)?);
                }
            }
            let mut local: Option<(f64, Vec<usize>)> = None;
            let mut count = 0usize;
            for_each_level(pairs.len(), grid_n, &mut |levels| {
                count += 1;
                let (rate, short) = sum_rate_at(pd, &pairs, levels, step);
                if short <= QOS_TOL && local.as_ref().is_none_or(|(v, _)| rate > *v) {
                    local = Some((rate, levels.to_vec()));
                }
            });
            Some((a, pairs, local, count))
        })
        .collect::<Vec<_>>();
    let evaluated = best.iter().map(|b| b.3).sum();
    let mut winner: Option<(f64, &Vec<usize>, &Vec<usize>)> = None;
    for (_, pairs, local, _) in &best {
        if let Some((v, levels)) = local {
            if winner.is_none_or(|(w, _, _)| *v > w) {
                winner = Some((*v, pairs, levels));
            }
        }
    }
    let (value, pairs, levels) = winner.expect("the all-idle assignment is always evaluated");
    let mut delta: f64 = 0.0;
    let total: usize = levels.iter().sum();
    for i in 0..levels.len() {
        for up in [false, true] {
            let mut nb = levels.clone();
            if up {
                if total + 1 > grid_n {
                    continue;
                }
                nb[i] += 1;
            } else {
                if nb[i] == 0 {
                    continue;
                }
                nb[i] -= 1;
            }
            let (rate, _) = sum_rate_at(pd, pairs, &nb, step);
            delta = delta.max((rate - value).abs());
        }
    }
    let mut y = vec![0.0; pd.len()];
    for (&p, &l) in pairs.iter().zip(levels) {
        y[p] = l as f64 * step;
    }
    let allocation = recover_assignment(pd, &y, 0.0);
    Ok(OracleResult {
        value: allocation.sum_rate(),
        allocation,
        delta_grid: delta,
        evaluated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::EffectiveGains;
    use crate::reform::{build_active_set, build_problem_with};

    fn pd_from(hp: Vec<Vec<f64>>, hs: Vec<Vec<f64>>, noise: f64, targets: Vec<f64>, p_max: f64) -> ProblemData {
        let g = EffectiveGains::from_gains(hp, hs, 1.0, noise, targets).unwrap();
        let s = build_active_set(&g);
        build_problem_with(&g, &s, p_max, 1e8)
    }

    #[test]
    fn f_alpha_endpoints() {
        assert!((f_alpha(1.0, 2.0, 1.0) - 3.0f64.log2()).abs() < 1e-12);
        assert!((f_alpha(0.0, 2.0, 1.0) - 1.5f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn f_alpha_slope_matches_sign_polynomial() {
        for &x in &[1.01, 2.0, 10.0, 99.0] {
            for &beta in &[0.01, 0.5, 3.0, 100.0] {
                let h = 1e-6;
                let a = 1.0 - 1e-6;
                let d = (f_alpha(a + h, x, beta) - f_alpha(a - h, x, beta)) / (2.0 * h);
                assert!(d > 0.0 && f_alpha_slope_sign(x, beta) > 0.0, "x={x} β={beta}");
            }
        }
    }

    #[test]
    fn greedy_idle_when_no_beam_admits() {
        let pd = pd_from(vec![vec![1e-8]], vec![vec![1e-10]], 1e-12, vec![30.0], 1.0);
        let r = greedy_schedule(&pd);
        assert_eq!(r.value, 0.0);
        assert!(r.choice.is_none());
    }

    #[test]
    fn greedy_takes_dominant_gain() {
        // orthogonal beams and targets so small that −c, −b are effectively unbounded
        let pd = pd_from(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![vec![2.0, 1.0]],
            1.0,
            vec![1e-12, 1e-12],
            1.0,
        );
        let r = greedy_schedule(&pd);
        let c = r.choice.unwrap();
        assert_eq!((c.user, c.beam), (0, 0));
        assert!((c.power - 1.0).abs() < 1e-15);
        // t = ρ·hS_01 + σ² = 2
        assert!((r.value - 2.0f64.log2()).abs() < 1e-12);
        assert_eq!(r.scale, 1.0);
    }

    #[test]
    fn greedy_scales_down_for_leakage() {
        // beam 0's secondary power leaks hard onto primary 1, whose target is tight
        let pd = pd_from(
            vec![vec![1e-8, 1e-13], vec![5e-9, 1e-8]],
            vec![vec![5e-10, 1e-12]],
            1e-12,
            vec![0.5, 1.5],
            1.0,
        );
        let r = greedy_schedule(&pd);
        assert!(r.scale < 1.0, "scale {}", r.scale);
        assert!(r.allocation.rates.qos_shortfall <= QOS_TOL);
    }

    #[test]
    fn oracle_guard_and_zero_budget() {
        let big = pd_from(vec![vec![1e-8; 4]; 4], vec![vec![1e-10; 4]; 4], 1e-12, vec![0.1; 4], 1.0);
        assert!(matches!(brute_force(&big, 10), Err(Error::OracleTooLarge(_))));
        let pd = pd_from(vec![vec![1e-8]], vec![vec![1e-9]], 1e-12, vec![1.0], 0.0);
        assert_eq!(brute_force(&pd, 10).unwrap().value, 0.0);
    }

    #[test]
    fn oracle_single_pair_within_one_step() {
        let pd = pd_from(vec![vec![1e-8]], vec![vec![1e-9]], 1e-12, vec![1.0], 1.0);
        let clip = clip_choice(&pd, 0, 0);
        let o = brute_force(&pd, 200).unwrap();
        assert!(o.value <= clip.rate + 1e-12);
        assert!(clip.rate - o.value <= o.delta_grid + 1e-12);
        assert!(o.allocation.rates.qos_shortfall <= QOS_TOL);
        let step_rate = (1.0 + pd.gains.hs[0][0] * (clip.power - pd.p_max / 200.0).max(0.0) / pd.gains.t[0][0]).log2();
        assert!(o.value >= step_rate - 1e-12);
    }

    #[test]
    fn level_enumeration_counts() {
        let mut n = 0;
        for_each_level(2, 3, &mut |l| {
            assert!(l.iter().sum::<usize>() <= 3);
            n += 1;
        });
        assert_eq!(n, 10);
    }
}
