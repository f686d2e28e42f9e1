//! Matrix form of the beam-sharing problem over the active (user, beam) pairs,
//! plus evaluation of allocations in both the reformulated and the original
//! rate terms.
//!
//! Indices are 0-based throughout: pair `(j, k)` is secondary user `j` on the
//! beam of primary `k`. The power vector `ρ̃` has length `K·M` with entry
//! `M·k + j`.

use serde::{Deserialize, Serialize};

use crate::channel::EffectiveGains;
use crate::config::SystemConfig;

/// Admissible (user, beam) pairs in beam-major order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSet {
    pub pairs: Vec<(usize, usize)>,
}

impl ActiveSet {
    /// Sorts into beam-major order and drops duplicates.
    pub fn from_pairs(mut pairs: Vec<(usize, usize)>) -> Self {
        pairs.sort_by_key(|&(j, k)| (k, j));
        pairs.dedup();
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Rows `[user, beam]`, 1-based.
    pub fn as_matrix(&self) -> Vec<[usize; 2]> {
        self.pairs.iter().map(|&(j, k)| [j + 1, k + 1]).collect()
    }

    pub fn index_of(&self, j: usize, k: usize) -> Option<usize> {
        self.pairs.iter().position(|&p| p == (j, k))
    }

    pub fn mapping(&self, n_secondary: usize, n_primary: usize) -> MappingMatrix {
        MappingMatrix {
            n_rows: n_secondary * n_primary,
            rows: self.pairs.iter().map(|&(j, k)| n_secondary * k + j).collect(),
        }
    }
}

/// Sparse 0/1 matrix `R` with `ρ̃ = R y`; column `p` has its one at `rows[p]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingMatrix {
    pub n_rows: usize,
    pub rows: Vec<usize>,
}

impl MappingMatrix {
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut r = vec![vec![0.0; self.rows.len()]; self.n_rows];
        for (p, &row) in self.rows.iter().enumerate() {
            r[row][p] = 1.0;
        }
        r
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows];
        for (p, &row) in self.rows.iter().enumerate() {
            out[row] = y[p];
        }
        out
    }

    /// `Rᵀ v`: pulls a length-`KM` row back onto the active coordinates.
    pub fn pull_back(&self, v: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|&row| v[row]).collect()
    }
}

/// Pairs whose beam and whose SIC condition both leave headroom at zero
/// secondary power.
pub fn build_active_set(g: &EffectiveGains) -> ActiveSet {
    let mut pairs = Vec::new();
    for k in 0..g.n_primary() {
        if !(g.c[k] <= 0.0) {
            continue;
        }
        for j in 0..g.n_secondary() {
            if g.b[j][k] <= 0.0 {
                pairs.push((j, k));
            }
        }
    }
    ActiveSet { pairs }
}

/// One affine constraint `coef · y ≤ rhs` in the active coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub coef: Vec<f64>,
    pub rhs: f64,
}

impl LinearRow {
    pub fn eval(&self, y: &[f64]) -> f64 {
        dot(&self.coef, y)
    }

    /// Violation scaled by `max(1, |rhs|)`; non-positive when satisfied.
    pub fn residual(&self, y: &[f64]) -> f64 {
        (self.eval(y) - self.rhs) / self.rhs.abs().max(1.0)
    }
}

/// Primary-QoS row for a beam that no active pair can use but whose primary
/// still meets its target and must keep doing so under leakage from the
/// other beams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardRow {
    pub beam: usize,
    pub e: Vec<f64>,
    #[serde(with = "crate::nonfinite::scalar")]
    pub c: f64,
}

/// Coefficient data of the reformulated problem.
///
/// `c_gain[p]` is the single nonzero of `c_p`; `d`, `e`, `f` hold the `KM`-long
/// vectors `d_p`, `e_p`, `f_p`; `t`, `c`, `b` are the per-pair constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawProblem")]
pub struct ProblemData {
    pub gains: EffectiveGains,
    pub active: ActiveSet,
    pub mapping: MappingMatrix,
    pub c_gain: Vec<f64>,
    pub d: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub t: Vec<f64>,
    #[serde(with = "crate::nonfinite::vec")]
    pub c: Vec<f64>,
    #[serde(with = "crate::nonfinite::vec")]
    pub b: Vec<f64>,
    pub guards: Vec<GuardRow>,
    pub p_max: f64,
    pub xi: f64,
    #[serde(skip_serializing)]
    cache: Projections,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Projections {
    /// `Rᵀ d_p`.
    dy: Vec<Vec<f64>>,
    qos: Vec<LinearRow>,
    /// `f_p` rows; `None` when `b_p = −∞` leaves nothing to enforce.
    sic: Vec<Option<LinearRow>>,
}

#[derive(Deserialize)]
struct RawProblem {
    gains: EffectiveGains,
    active: ActiveSet,
    mapping: MappingMatrix,
    c_gain: Vec<f64>,
    d: Vec<Vec<f64>>,
    e: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
    t: Vec<f64>,
    #[serde(with = "crate::nonfinite::vec")]
    c: Vec<f64>,
    #[serde(with = "crate::nonfinite::vec")]
    b: Vec<f64>,
    guards: Vec<GuardRow>,
    p_max: f64,
    xi: f64,
}

impl From<RawProblem> for ProblemData {
    fn from(r: RawProblem) -> Self {
        let mut pd = ProblemData {
            gains: r.gains,
            active: r.active,
            mapping: r.mapping,
            c_gain: r.c_gain,
            d: r.d,
            e: r.e,
            f: r.f,
            t: r.t,
            c: r.c,
            b: r.b,
            guards: r.guards,
            p_max: r.p_max,
            xi: r.xi,
            cache: Projections::default(),
        };
        pd.refresh();
        pd
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn build_problem(g: &EffectiveGains, s: &ActiveSet, cfg: &SystemConfig) -> ProblemData {
    build_problem_with(g, s, cfg.secondary_budget, cfg.penalty)
}

pub fn build_problem_with(g: &EffectiveGains, s: &ActiveSet, p_max: f64, xi: f64) -> ProblemData {
    let m = g.n_secondary();
    let k_n = g.n_primary();
    let km = m * k_n;
    let mapping = s.mapping(m, k_n);
    let mut c_gain = Vec::with_capacity(s.len());
    let (mut d, mut e, mut f) = (Vec::new(), Vec::new(), Vec::new());
    let (mut t, mut c, mut b) = (Vec::new(), Vec::new(), Vec::new());
    for &(j, k) in &s.pairs {
        let hs = &g.hs[j];
        let hp = &g.hp[k];
        let mut dp = vec![0.0; km];
        let mut ep = vec![0.0; km];
        let mut fp = vec![0.0; km];
        for i in 0..k_n {
            for mm in 0..m {
                let row = m * i + mm;
                if i == k {
                    dp[row] = if mm == j { 0.0 } else { xi * hs[k] };
                    let own = if mm == j { 1.0 } else { 0.0 };
                    ep[row] = own;
                    fp[row] = own;
                } else {
                    dp[row] = hs[i];
                    ep[row] = hp[i] / hp[k];
                    fp[row] = hs[i] / hs[k];
                }
            }
        }
        c_gain.push(hs[k]);
        d.push(dp);
        e.push(ep);
        f.push(fp);
        t.push(g.t[j][k]);
        c.push(g.c[k]);
        b.push(g.b[j][k]);
    }
    let mut guards = Vec::new();
    for k in 0..k_n {
        let used = s.pairs.iter().any(|&(_, kk)| kk == k);
        if used || !(g.c[k] <= 0.0) || g.c[k] == f64::NEG_INFINITY {
            continue;
        }
        let mut ek = vec![0.0; km];
        for i in (0..k_n).filter(|&i| i != k) {
            for mm in 0..m {
                ek[m * i + mm] = g.hp[k][i] / g.hp[k][k];
            }
        }
        guards.push(GuardRow {
            beam: k,
            e: ek,
            c: g.c[k],
        });
    }
    let mut pd = ProblemData {
        gains: g.clone(),
        active: s.clone(),
        mapping,
        c_gain,
        d,
        e,
        f,
        t,
        c,
        b,
        guards,
        p_max,
        xi,
        cache: Projections::default(),
    };
    pd.refresh();
    pd
}

impl ProblemData {
    fn refresh(&mut self) {
        let r = &self.mapping;
        let dy = self.d.iter().map(|v| r.pull_back(v)).collect();
        let mut qos = Vec::new();
        for (ep, &c) in self.e.iter().zip(&self.c) {
            if c > f64::NEG_INFINITY {
                qos.push(LinearRow {
                    coef: r.pull_back(ep),
                    rhs: -c,
                });
            }
        }
        for gr in &self.guards {
            if gr.c > f64::NEG_INFINITY {
                qos.push(LinearRow {
                    coef: r.pull_back(&gr.e),
                    rhs: -gr.c,
                });
            }
        }
        let sic = self
            .f
            .iter()
            .zip(&self.b)
            .map(|(fp, &b)| {
                (b > f64::NEG_INFINITY).then(|| LinearRow {
                    coef: r.pull_back(fp),
                    rhs: -b,
                })
            })
            .collect();
        self.cache = Projections { dy, qos, sic };
    }

    /// Number of optimization variables `|S|`.
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// `c_p` as a dense vector.
    pub fn c_vec(&self, p: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        v[p] = self.c_gain[p];
        v
    }

    /// `Rᵀ d_p`.
    pub fn dy(&self, p: usize) -> &[f64] {
        &self.cache.dy[p]
    }

    /// Primary-QoS rows, one per active pair with a finite constant, then the guard rows.
    pub fn qos_rows(&self) -> &[LinearRow] {
        &self.cache.qos
    }

    /// SIC row of pair `p`, active only while `y_p > 0`.
    pub fn sic_row(&self, p: usize) -> Option<&LinearRow> {
        self.cache.sic[p].as_ref()
    }

    /// `d_pᵀ R y + t_p`.
    pub fn denominator(&self, p: usize, y: &[f64]) -> f64 {
        dot(self.dy(p), y) + self.t[p]
    }

    pub fn sinr(&self, p: usize, y: &[f64]) -> f64 {
        self.c_gain[p] * y[p] / self.denominator(p, y)
    }

    /// Interference-free SINR bound `P_max · h_p / t_p`.
    pub fn sinr_cap(&self, p: usize) -> f64 {
        self.p_max * self.c_gain[p] / self.t[p]
    }

    pub fn default_floor(&self) -> f64 {
        1e-6 * self.p_max
    }
}

/// Penalized sum rate `Σ log2(1 + c_pᵀy / (d_pᵀRy + t_p))`.
pub fn objective(pd: &ProblemData, y: &[f64]) -> f64 {
    (0..pd.len()).map(|p| (1.0 + pd.sinr(p, y)).log2()).sum()
}

/// Worst relative violation of each constraint family. Every field is
/// non-positive when its family holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub qos: f64,
    pub sic: f64,
    pub budget: f64,
    pub negativity: f64,
}

impl FeasibilityReport {
    pub fn max(&self) -> f64 {
        self.qos.max(self.sic).max(self.budget).max(self.negativity)
    }

    pub fn feasible(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

/// Residuals of `y` against the problem constraints. Rows are scaled by
/// `max(1, |constant|)`; the SIC row of a pair only counts when its power is positive.
pub fn check_feasible(pd: &ProblemData, y: &[f64]) -> FeasibilityReport {
    let qos = pd
        .qos_rows()
        .iter()
        .map(|r| r.residual(y))
        .fold(f64::NEG_INFINITY, f64::max);
    let sic = (0..pd.len())
        .filter(|&p| y[p] > 0.0)
        .filter_map(|p| pd.sic_row(p).map(|r| r.residual(y)))
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = y.iter().sum();
    let budget = (total - pd.p_max) / pd.p_max.max(1.0);
    let negativity = y.iter().map(|&v| -v).fold(f64::NEG_INFINITY, f64::max);
    FeasibilityReport {
        qos: qos.max(-1.0),
        sic: sic.max(-1.0),
        budget,
        negativity: if y.is_empty() { 0.0 } else { negativity },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledPower {
    pub user: usize,
    pub beam: usize,
    pub power: f64,
}

/// Rates of an allocation in the original model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// Primary rates with the scheduled secondary power in place.
    pub primary: Vec<f64>,
    /// Rate at which each scheduled secondary decodes its beam's primary, in `powers` order.
    pub decode: Vec<f64>,
    /// Each scheduled secondary's own rate after SIC, in `powers` order.
    pub secondary: Vec<f64>,
    pub sum_rate: f64,
    /// Largest shortfall below a target among the rate requirements that apply,
    /// or 0 when all hold. Idle beams only count when the primary met its target
    /// before any secondary was admitted.
    pub qos_shortfall: f64,
}

/// Evaluates the primary, decoding and secondary rates of a set of scheduled powers.
pub fn true_rates(g: &EffectiveGains, powers: &[ScheduledPower]) -> RateReport {
    let k_n = g.n_primary();
    let rho = g.primary_power;
    let noise = g.noise_power;
    let mut beam_power = vec![0.0; k_n];
    for sp in powers {
        beam_power[sp.beam] += sp.power;
    }
    let leak = |h: &[f64], k: usize| -> f64 {
        (0..k_n)
            .filter(|&i| i != k)
            .map(|i| h[i] * (rho + beam_power[i]))
            .sum::<f64>()
    };
    let primary: Vec<f64> = (0..k_n)
        .map(|k| {
            let h = &g.hp[k];
            let sinr = h[k] * rho / (h[k] * beam_power[k] + leak(h, k) + noise);
            (1.0 + sinr).log2()
        })
        .collect();
    let mut decode = Vec::with_capacity(powers.len());
    let mut secondary = Vec::with_capacity(powers.len());
    for sp in powers {
        let h = &g.hs[sp.user];
        let k = sp.beam;
        let ibi = leak(h, k);
        decode.push((1.0 + h[k] * rho / (h[k] * beam_power[k] + ibi + noise)).log2());
        secondary.push((1.0 + h[k] * sp.power / (ibi + noise)).log2());
    }
    let mut shortfall: f64 = 0.0;
    for k in 0..k_n {
        let served = powers.iter().any(|sp| sp.beam == k && sp.power > 0.0);
        if served || g.c[k] <= 0.0 {
            shortfall = shortfall.max(g.targets[k] - primary[k]);
        }
    }
    for (sp, &r) in powers.iter().zip(&decode) {
        if sp.power > 0.0 {
            shortfall = shortfall.max(g.targets[sp.beam] - r);
        }
    }
    RateReport {
        sum_rate: secondary.iter().sum(),
        primary,
        decode,
        secondary,
        qos_shortfall: shortfall,
    }
}

/// A power vector over the active set, its schedule and the rates it achieves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Powers over the active set after recovery (below-floor and losing co-beam entries zeroed).
    pub y: Vec<f64>,
    pub powers: Vec<ScheduledPower>,
    /// Penalized objective of `y`.
    pub objective: f64,
    pub rates: RateReport,
    /// Set when more than one user on some beam carried power above the floor.
    pub penalty_leak: bool,
}

impl Allocation {
    pub fn zero(pd: &ProblemData) -> Self {
        recover_assignment(pd, &vec![0.0; pd.len()], pd.default_floor())
    }

    pub fn sum_rate(&self) -> f64 {
        self.rates.sum_rate
    }
}

/// Turns a continuous power vector into a schedule with at most one user per beam.
pub fn recover_assignment(pd: &ProblemData, y: &[f64], power_floor: f64) -> Allocation {
    let mut clean = vec![0.0; pd.len()];
    let mut leak = false;
    let k_n = pd.gains.n_primary();
    for k in 0..k_n {
        let on_beam: Vec<usize> = (0..pd.len())
            .filter(|&p| pd.active.pairs[p].1 == k && y[p] > power_floor)
            .collect();
        if on_beam.len() > 1 {
            leak = true;
            log::warn!(
                "penalty leak on beam {k}: {} users above the {power_floor:e} W floor",
                on_beam.len()
            );
        }
        // strictly larger wins, so ties stay with the lower user index
        if let Some(&best) = on_beam.iter().reduce(|a, b| if y[*b] > y[*a] { b } else { a }) {
            clean[best] = y[best];
        }
    }
    let powers: Vec<ScheduledPower> = (0..pd.len())
        .filter(|&p| clean[p] > 0.0)
        .map(|p| {
            let (user, beam) = pd.active.pairs[p];
            ScheduledPower {
                user,
                beam,
                power: clean[p],
            }
        })
        .collect();
    let rates = true_rates(&pd.gains, &powers);
    Allocation {
        objective: objective(pd, &clean),
        y: clean,
        powers,
        rates,
        penalty_leak: leak,
    }
}
