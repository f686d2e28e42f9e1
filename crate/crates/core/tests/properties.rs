mod common;

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use thz_noma::baselines::{brute_force, greedy_schedule};
use thz_noma::bb::{run_bb, BbConfig};
use thz_noma::channel::{compute_effective, design_beams, sample_deployment, steering_vector};
use thz_noma::lp::{check_point_feasible, solve_fractional, solve_lp, FractionalProgram, LinearProgram, LpStatus};
use thz_noma::reform::{build_active_set, check_feasible, objective, recover_assignment, true_rates};
use thz_noma::sca::{build_subproblem, run_sca, ScaConfig, ScaVariant};
use thz_noma::SystemConfig;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_cfg() -> impl Strategy<Value = (SystemConfig, u64)> {
    (1usize..=4, 1usize..=3, any::<u64>()).prop_map(|(m, k, seed)| (common::config(m, k), seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_entries_are_unit_and_depend_on_sin_only(theta in -10.0f64..10.0) {
        let cfg = SystemConfig::default();
        let a = steering_vector(theta, &cfg);
        for z in a.iter() {
            prop_assert!((z.norm() - 1.0).abs() < 1e-12);
        }
        let shifted = steering_vector(theta + 2.0 * PI, &cfg);
        let mirrored = steering_vector(PI - theta, &cfg);
        for i in 0..a.len() {
            prop_assert!((a[i] - shifted[i]).norm() < 1e-9);
            prop_assert!((a[i] - mirrored[i]).norm() < 1e-9);
        }
    }

    #[test]
    fn own_gain_matches_raw_recomputation((cfg, seed) in small_cfg()) {
        let beams = design_beams(&cfg).unwrap();
        let dep = sample_deployment(&cfg, &mut ChaCha8Rng::seed_from_u64(seed));
        let g = compute_effective(&cfg, &dep, &beams).unwrap();
        let lambda = 3e8 / cfg.carrier_hz;
        for k in 0..cfg.n_primary {
            let f = beams.beam(k);
            let phase = 2.0 * PI * cfg.carrier_hz * cfg.antenna_spacing * dep.theta_p[k].sin() / 3e8;
            let mut corr = Complex64::new(0.0, 0.0);
            for n in 0..cfg.n_antennas {
                // a_n^* f_n with a_n = exp(−j n phase)
                corr += Complex64::from_polar(1.0, n as f64 * phase) * f[n];
            }
            let r = dep.dist_p[k];
            let pl = (4.0 * PI / lambda).powi(2) * (cfg.absorption * r).exp() * (r.powf(cfg.path_loss_exponent) + 1.0);
            let [re, im] = dep.fading_p[k];
            let expect = (re * re + im * im) / pl * corr.norm_sqr();
            prop_assert!((g.hp[k][k] - expect).abs() <= 1e-12 * expect.abs().max(1e-300), "{} vs {}", g.hp[k][k], expect);
        }
    }

    #[test]
    fn primary_headroom_sign_matches_rate((cfg, seed) in small_cfg(), rbar in 0.1f64..12.0) {
        let cfg = SystemConfig { target_rates: vec![rbar], ..cfg };
        let pd = common::instance(&cfg, seed);
        let g = &pd.gains;
        for k in 0..g.n_primary() {
            let cross: f64 = (0..g.n_primary()).filter(|&i| i != k).map(|i| g.hp[k][i] * g.primary_power).sum();
            let rate = (1.0 + g.hp[k][k] * g.primary_power / (cross + g.noise_power)).log2();
            if (rate - rbar).abs() > 1e-9 {
                prop_assert_eq!(g.c[k] <= 0.0, rate >= rbar);
            }
        }
    }

    #[test]
    fn active_set_excludes_hopeless_pairs((cfg, seed) in small_cfg()) {
        let pd = common::instance(&cfg, seed);
        let g = &pd.gains;
        for &(j, k) in &pd.active.pairs {
            prop_assert!(g.b[j][k] <= 0.0 && g.c[k] <= 0.0);
        }
        for j in 0..g.n_secondary() {
            for k in 0..g.n_primary() {
                if g.b[j][k] <= 0.0 && g.c[k] <= 0.0 {
                    prop_assert!(pd.active.index_of(j, k).is_some());
                }
            }
        }
        if !pd.is_empty() {
            prop_assert!(check_point_feasible(&pd, &vec![0.0; pd.len()]));
        }
    }

    #[test]
    fn mapping_is_orthonormal((cfg, seed) in small_cfg()) {
        let pd = common::instance(&cfg, seed);
        let r = pd.mapping.to_dense();
        let n = pd.len();
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = r.iter().map(|row| row[a] * row[b]).sum();
                prop_assert_eq!(dot, if a == b { 1.0 } else { 0.0 });
            }
        }
        let m = pd.gains.n_secondary();
        for (p, &(j, k)) in pd.active.pairs.iter().enumerate() {
            let mut y = vec![0.0; n];
            y[p] = 1.0;
            let rho = pd.mapping.apply(&y);
            prop_assert_eq!(rho[m * k + j], 1.0);
            prop_assert_eq!(pd.mapping.pull_back(&rho), y);
        }
    }

    #[test]
    fn objective_equals_true_rates_for_single_user_beams(
        (cfg, seed) in small_cfg(),
        picks in proptest::collection::vec((any::<prop::sample::Index>(), 0.0f64..1.0), 3),
    ) {
        let pd = common::instance(&cfg, seed);
        prop_assume!(!pd.is_empty());
        let mut y = vec![0.0; pd.len()];
        for k in 0..pd.gains.n_primary() {
            let on_k: Vec<usize> = (0..pd.len()).filter(|&p| pd.active.pairs[p].1 == k).collect();
            if on_k.is_empty() {
                continue;
            }
            let (idx, frac) = picks[k];
            y[*idx.get(&on_k)] = frac * pd.p_max / 3.0;
        }
        let alloc = recover_assignment(&pd, &y, 0.0);
        let direct = true_rates(&pd.gains, &alloc.powers).sum_rate;
        let obj = objective(&pd, &y);
        prop_assert!((obj - direct).abs() <= 1e-9 * direct.abs().max(1.0), "{obj} vs {direct}");
    }

    #[test]
    fn feasible_points_meet_every_rate_target(
        (cfg, seed) in small_cfg(),
        raw in proptest::collection::vec(0.0f64..1.0, 12),
        scale in -6.0f64..0.0,
    ) {
        let pd = common::instance(&cfg, seed);
        prop_assume!(!pd.is_empty());
        let mut y = vec![0.0; pd.len()];
        for k in 0..pd.gains.n_primary() {
            // strongest pair on each beam only, as a scheduled allocation
            if let Some(p) = (0..pd.len()).filter(|&p| pd.active.pairs[p].1 == k).last() {
                y[p] = raw[p % raw.len()] * pd.p_max * 10f64.powf(scale);
            }
        }
        if check_feasible(&pd, &y).feasible(1e-9) {
            let alloc = recover_assignment(&pd, &y, 0.0);
            prop_assert!(alloc.rates.qos_shortfall <= 1e-6, "shortfall {}", alloc.rates.qos_shortfall);
        }
    }

    #[test]
    fn lp_strong_duality(
        a in proptest::collection::vec(proptest::collection::vec(0.05f64..2.0, 4), 3),
        b in proptest::collection::vec(0.5f64..5.0, 3),
        c in proptest::collection::vec(-1.0f64..2.0, 4),
    ) {
        // max cᵀx, Ax ≤ b, x ≥ 0 against min bᵀu, Aᵀu ≥ c, u ≥ 0
        let mut primal = LinearProgram::new(4);
        primal.objective = c.clone();
        for (row, &rhs) in a.iter().zip(&b) {
            primal.add_le(row.clone(), rhs);
        }
        let mut dual = LinearProgram::new(3);
        dual.objective = b.iter().map(|v| -v).collect();
        for j in 0..4 {
            dual.add_le((0..3).map(|i| -a[i][j]).collect(), -c[j]);
        }
        let p = solve_lp(&primal).unwrap();
        let d = solve_lp(&dual).unwrap();
        prop_assert_eq!(p.status, LpStatus::Optimal);
        prop_assert_eq!(d.status, LpStatus::Optimal);
        prop_assert!(primal.max_violation(&p.x) < 1e-9);
        prop_assert!((p.value + d.value).abs() <= 1e-8 * p.value.abs().max(1.0), "{} vs {}", p.value, -d.value);
    }

    #[test]
    fn charnes_cooper_matches_direct_ratio(
        num in proptest::collection::vec(0.0f64..2.0, 3),
        den in proptest::collection::vec(0.0f64..2.0, 3),
        t in 0.1f64..3.0,
        cap in 0.1f64..5.0,
    ) {
        let fp = FractionalProgram {
            numerator: num,
            denominator: den,
            den_const: t,
            a_ub: vec![vec![1.0; 3]],
            b_ub: vec![cap],
            a_eq: vec![],
            b_eq: vec![],
        };
        let s = solve_fractional(&fp);
        prop_assert_eq!(s.status, LpStatus::Optimal);
        prop_assert!((fp.ratio(&s.y) - s.value).abs() < 1e-12);
        // optimum of a linear-fractional program sits at a vertex of the simplex
        let mut best: f64 = 0.0;
        for i in 0..3 {
            let mut v = vec![0.0; 3];
            v[i] = cap;
            best = best.max(fp.ratio(&v));
        }
        prop_assert!((s.value - best).abs() <= 1e-9 * best.max(1.0), "{} vs {}", s.value, best);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bb_bounds_and_witness((cfg, seed) in small_cfg()) {
        let pd = common::instance(&cfg, seed);
        let bb = BbConfig { epsilon: 1e-3, max_iterations: 400, ..BbConfig::default() };
        let r = run_bb(&pd, &bb);
        for w in r.history.windows(2) {
            prop_assert!(w[1].upper <= w[0].upper);
            prop_assert!(w[1].lower >= w[0].lower);
        }
        for h in &r.history {
            prop_assert!(h.upper >= h.lower);
        }
        if r.iterations < bb.max_iterations {
            prop_assert!(r.gap < bb.epsilon);
        }
        prop_assert!(check_feasible(&pd, &r.allocation.y).feasible(1e-7));
        prop_assert!(r.allocation.rates.qos_shortfall <= 1e-6);
        prop_assert!(!r.allocation.penalty_leak);
        // any feasible allocation stays under the certified bound
        let g = greedy_schedule(&pd);
        prop_assert!(g.value <= r.rate_upper_bound + 1e-9);
        let s = run_sca(&pd, &ScaConfig::default());
        prop_assert!(s.value <= r.rate_upper_bound + 1e-9, "sca {} bound {}", s.value, r.rate_upper_bound);
    }

    #[test]
    fn tightening_does_not_change_the_answer((cfg, seed) in small_cfg()) {
        let pd = common::instance(&cfg, seed);
        let on = BbConfig { epsilon: 1e-2, max_iterations: 3000, ..BbConfig::default() };
        let off = BbConfig { tighten: false, ..on };
        let a = run_bb(&pd, &on);
        let b = run_bb(&pd, &off);
        prop_assume!(a.gap < on.epsilon && b.gap < off.epsilon);
        prop_assert!((a.value - b.value).abs() <= on.epsilon + 1e-9, "{} vs {}", a.value, b.value);
    }

    #[test]
    fn pruning_is_sound((cfg, seed) in small_cfg()) {
        let pd = common::instance(&cfg, seed);
        let on = BbConfig { epsilon: 1e-3, max_iterations: 60, ..BbConfig::default() };
        let a = run_bb(&pd, &on);
        let b = run_bb(&pd, &BbConfig { prune: false, ..on });
        let (ua, ub) = (a.history.last().unwrap().upper, b.history.last().unwrap().upper);
        prop_assert!((ua - ub).abs() <= 1e-9 * ua.abs().max(1.0), "{ua} vs {ub}");
    }

    #[test]
    fn sca_ascends_and_second_variant_never_leaks((cfg, seed) in small_cfg()) {
        let pd = common::instance(&cfg, seed);
        for variant in [ScaVariant::I, ScaVariant::II] {
            let r = run_sca(&pd, &ScaConfig::with_variant(variant));
            let kept: Vec<_> = r.trace.iter().take(r.iterations.max(1)).collect();
            for w in kept.windows(2) {
                prop_assert!(w[1].objective >= w[0].objective - 1e-8);
            }
            prop_assert!(check_feasible(&pd, &r.allocation.y).feasible(1e-7));
            if variant == ScaVariant::II {
                prop_assert!(!r.allocation.penalty_leak);
            }
        }
    }

    #[test]
    fn surrogate_is_a_tangent_minorant(
        (cfg, seed) in small_cfg(),
        w0 in proptest::collection::vec(0.0f64..1.0, 12),
        w1 in proptest::collection::vec(0.0f64..1.0, 12),
    ) {
        let pd = common::instance(&cfg, seed);
        prop_assume!(!pd.is_empty());
        let n = pd.len();
        let y0: Vec<f64> = (0..n).map(|i| w0[i % 12] * pd.p_max / n as f64).collect();
        let y: Vec<f64> = (0..n).map(|i| w1[i % 12] * pd.p_max / n as f64).collect();
        let sub = build_subproblem(&pd, &y0);
        let at0 = objective(&pd, &y0);
        prop_assert!((sub.value(&y0) - at0).abs() <= 1e-12 * at0.abs().max(1.0));
        prop_assert!(sub.value(&y) <= objective(&pd, &y) + 1e-9);
    }

    #[test]
    fn greedy_is_feasible((cfg, seed) in small_cfg()) {
        let pd = common::instance(&cfg, seed);
        let r = greedy_schedule(&pd);
        prop_assert!(r.allocation.rates.qos_shortfall <= 1e-9);
        prop_assert!(r.allocation.powers.len() <= 1);
        prop_assert!(r.allocation.y.iter().sum::<f64>() <= pd.p_max * (1.0 + 1e-12));
    }

    #[test]
    fn oracle_points_pass_their_checks(seed in any::<u64>()) {
        let pd = common::instance(&common::config(2, 2), seed);
        let o = brute_force(&pd, 40).unwrap();
        prop_assert!(o.allocation.rates.qos_shortfall <= 1e-9);
    }
}

#[test]
fn active_set_is_recomputed_identically() {
    let cfg = common::config(3, 3);
    let pd = common::instance(&cfg, 11);
    assert_eq!(build_active_set(&pd.gains), pd.active);
}
