#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thz_noma::channel::design_beams;
use thz_noma::harness::sample_instance;
use thz_noma::lp::{coordinate_program, lemma1_solve, solve_fractional, Lemma1Failure, LpStatus};
use thz_noma::reform::{check_feasible, ProblemData};
use thz_noma::SystemConfig;

/// Reference scenario with the given user counts.
pub fn config(m: usize, k: usize) -> SystemConfig {
    SystemConfig {
        n_secondary: m,
        n_primary: k,
        ..SystemConfig::default()
    }
}

pub fn instance(cfg: &SystemConfig, seed: u64) -> ProblemData {
    let beams = design_beams(cfg).expect("valid config");
    sample_instance(cfg, &beams, seed).expect("instance").problem
}

/// Instances drawn until one has at least `min_pairs` admissible pairs.
pub fn instance_with_pairs(cfg: &SystemConfig, seed: u64, min_pairs: usize) -> ProblemData {
    let beams = design_beams(cfg).expect("valid config");
    (0..1000u64)
        .map(|i| sample_instance(cfg, &beams, seed.wrapping_mul(7919).wrapping_add(i)).unwrap().problem)
        .find(|pd| pd.len() >= min_pairs)
        .expect("an instance with enough pairs")
}

/// A feasible point with one powered pair per occupied beam: the pair gets a
/// random share of a budget scaled down until all constraints hold.
fn one_per_beam(pd: &ProblemData, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let n = pd.len();
    let mut w = vec![0.0; n];
    for k in 0..pd.gains.n_primary() {
        let on_k: Vec<usize> = (0..n).filter(|&p| pd.active.pairs[p].1 == k).collect();
        if !on_k.is_empty() {
            w[on_k[rng.random_range(0..on_k.len())]] = rng.random_range(0.05..1.0);
        }
    }
    let total: f64 = w.iter().sum();
    let mut scale = pd.p_max / total;
    for _ in 0..80 {
        let y: Vec<f64> = w.iter().map(|v| v * scale).collect();
        if check_feasible(pd, &y).feasible(0.0) {
            return Some(y);
        }
        scale *= 0.5;
    }
    None
}

pub struct Lemma1Tally {
    pub compared: usize,
    pub singular: usize,
    pub other_fallback: usize,
    pub worst_rel: f64,
}

/// Coordinate programs whose floor pins the other powered pairs at their SINRs
/// in a feasible point, solved by the closed form and by the Charnes–Cooper LP.
/// The LP must succeed on every one; flagged programs are only counted.
pub fn lemma1_against_lp(count: usize, seed: u64) -> Lemma1Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Lemma1Tally {
        compared: 0,
        singular: 0,
        other_fallback: 0,
        worst_rel: 0.0,
    };
    let mut made = 0;
    let mut draw = 0u64;
    while made < count {
        draw += 1;
        let m = rng.random_range(2..=4);
        let k = rng.random_range(2..=4);
        let pd = instance(&config(m, k), seed ^ draw.wrapping_mul(0x9e37_79b9));
        if !(2..=4).contains(&pd.len()) {
            continue;
        }
        let Some(y) = one_per_beam(&pd, &mut rng) else { continue };
        let n = pd.len();
        let p = rng.random_range(0..n);
        // box floor: the SINRs of the other powered pairs, zero elsewhere
        let mut x_min: Vec<f64> = (0..n).map(|i| if y[i] > 0.0 { pd.sinr(i, &y) } else { 0.0 }).collect();
        x_min[p] = 0.0;
        if !x_min.iter().any(|&x| x > 0.0) {
            continue;
        }
        let cp = coordinate_program(&pd, &x_min, &vec![f64::INFINITY; n], p);
        // the target's own SIC row may exclude the generating point
        let local: Vec<f64> = cp.vars.iter().map(|&i| y[i]).collect();
        if cp.program.max_violation(&local) > 1e-12 {
            continue;
        }
        made += 1;
        let lp = solve_fractional(&cp.program);
        assert_eq!(lp.status, LpStatus::Optimal, "LP failed on a feasible coordinate program: {:?}", cp.program);
        match lemma1_solve(&cp.program, cp.target) {
            Ok(yl) => {
                assert!(cp.program.max_violation(&yl) <= 1e-9);
                let v = cp.program.ratio(&yl);
                // SINRs a billion times below the single-user scale are roundoff
                let unit = cp.program.numerator[cp.target] / cp.program.den_const;
                let rel = (v - lp.value).abs() / lp.value.abs().max(1e-9 * unit);
                tally.worst_rel = tally.worst_rel.max(rel);
                tally.compared += 1;
            }
            Err(Lemma1Failure::Singular { .. }) => tally.singular += 1,
            Err(_) => tally.other_fallback += 1,
        }
    }
    tally
}
