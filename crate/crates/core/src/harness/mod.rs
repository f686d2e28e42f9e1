//! Seeded Monte Carlo sweeps: every solver runs on the same sampled instance,
//! records are collected per trial and aggregated per sweep point.

mod output;
mod presets;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{brute_force, greedy_schedule};
use crate::bb::{run_bb, BbConfig, BoundRecord};
use crate::channel::{compute_effective, design_beams, sample_deployment, BeamSet};
use crate::config::SystemConfig;
use crate::error::{Error, Result};
use crate::reform::{build_active_set, build_problem, check_feasible, Allocation, ProblemData};
use crate::sca::{run_sca, ScaConfig, ScaTraceRow, ScaVariant};

pub use output::{emit_outputs, Manifest, TRIALS_HEADER};
pub use presets::{preset, Preset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepVar {
    M,
    K,
    N,
    #[serde(rename = "N_Q")]
    NQ,
    #[serde(rename = "r_S")]
    RS,
    #[serde(rename = "R_bar")]
    RBar,
}

impl SweepVar {
    /// `cfg` with the swept quantity set to `value`.
    pub fn apply(self, cfg: &SystemConfig, value: f64) -> Result<SystemConfig> {
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidExperiment(format!(
                    "sweep over {self:?} needs positive integers, got {value}"
                )))
            }
        };
        let mut out = cfg.clone();
        match self {
            SweepVar::M => out.n_secondary = count()?,
            SweepVar::K => out.n_primary = count()?,
            SweepVar::N => out.n_antennas = count()?,
            SweepVar::NQ => out.codebook_size = count()?,
            SweepVar::RS => out.secondary_square = value,
            SweepVar::RBar => out.target_rates = vec![value],
        }
        out.validate()?;
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVar,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Bb,
    /// Branch and bound with the large iteration cap standing in for "no cap".
    Cap,
    Sca1,
    Sca2,
    Greedy,
    Oracle,
}

impl SolverKind {
    pub const ALL: [SolverKind; 6] = [
        SolverKind::Bb,
        SolverKind::Cap,
        SolverKind::Sca1,
        SolverKind::Sca2,
        SolverKind::Greedy,
        SolverKind::Oracle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SolverKind::Bb => "bb",
            SolverKind::Cap => "cap",
            SolverKind::Sca1 => "sca1",
            SolverKind::Sca2 => "sca2",
            SolverKind::Greedy => "greedy",
            SolverKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::InvalidExperiment(format!("unknown solver {s:?}")))
    }
}

fn default_cap_iterations() -> usize {
    20_000
}

fn default_oracle_grid() -> usize {
    200
}

fn default_parallelism() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    /// Base configuration; its `seed` is the master seed.
    pub base: SystemConfig,
    pub sweep: Sweep,
    pub trials: usize,
    pub solvers: Vec<SolverKind>,
    #[serde(default)]
    pub bb: BbConfig,
    #[serde(default = "default_cap_iterations")]
    pub cap_iterations: usize,
    /// Shared SCA settings; the variant is set per solver.
    #[serde(default)]
    pub sca: ScaConfig,
    #[serde(default = "default_oracle_grid")]
    pub oracle_grid: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Worker threads; 0 lets the thread pool decide.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Record wall-clock times (makes outputs run-dependent).
    #[serde(default)]
    pub timing: bool,
    /// Keep BB bound histories and SCA traces.
    #[serde(default)]
    pub record_traces: bool,
}

impl ExperimentSpec {
    pub fn new(name: &str, base: SystemConfig, sweep: Sweep, solvers: Vec<SolverKind>) -> Self {
        Self {
            name: name.to_string(),
            base,
            sweep,
            trials: 200,
            solvers,
            bb: BbConfig::default(),
            cap_iterations: default_cap_iterations(),
            sca: ScaConfig::default(),
            oracle_grid: default_oracle_grid(),
            output: None,
            parallelism: default_parallelism(),
            timing: false,
            record_traces: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidExperiment(m));
        if self.trials == 0 {
            return bad("at least one trial is required".into());
        }
        if self.solvers.is_empty() {
            return bad("solver list is empty".into());
        }
        for (i, s) in self.solvers.iter().enumerate() {
            if self.solvers[..i].contains(s) {
                return bad(format!("solver {s} listed twice"));
            }
        }
        if self.sweep.values.is_empty() {
            return bad("sweep has no values".into());
        }
        if self.cap_iterations == 0 || self.oracle_grid == 0 {
            return bad("cap_iterations and oracle_grid must be positive".into());
        }
        self.bb.validate()?;
        self.sca.validate()?;
        for &v in &self.sweep.values {
            self.sweep.variable.apply(&self.base, v)?;
        }
        Ok(())
    }

    pub fn master_seed(&self) -> u64 {
        self.base.seed
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` at sweep point `sweep`; independent of how many
/// points or trials surround it.
pub fn trial_seed(master: u64, sweep: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ sweep as u64) ^ trial as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub sweep: f64,
    pub solver: SolverKind,
    pub sum_rate_bpcu: f64,
    pub iterations: usize,
    pub wall_ms: f64,
    pub residual: f64,
    pub penalty_leak: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub seed: u64,
    pub sweep: f64,
    /// Solver label, or `instance` when the channel itself could not be built.
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub seed: u64,
    pub sweep: f64,
    pub solver: SolverKind,
    pub iteration: usize,
    pub lower: f64,
    pub upper: f64,
    pub active: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub seed: u64,
    pub sweep: f64,
    pub solver: SolverKind,
    pub iteration: usize,
    pub objective: f64,
    pub surrogate: f64,
}

/// What every solver hands back to the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub solver: SolverKind,
    pub allocation: Allocation,
    pub iterations: usize,
    pub history: Vec<BoundRecord>,
    pub trace: Vec<ScaTraceRow>,
}

impl SolverReport {
    pub fn sum_rate(&self) -> f64 {
        self.allocation.sum_rate()
    }

    /// Largest of the constraint residuals of the power vector and the rate shortfall.
    pub fn residual(&self, pd: &ProblemData) -> f64 {
        let r = if pd.is_empty() {
            0.0
        } else {
            check_feasible(pd, &self.allocation.y).max()
        };
        r.max(self.allocation.rates.qos_shortfall).max(0.0)
    }
}

pub fn run_solver(kind: SolverKind, pd: &ProblemData, spec: &ExperimentSpec) -> Result<SolverReport> {
    let report = |allocation, iterations, history, trace| SolverReport {
        solver: kind,
        allocation,
        iterations,
        history,
        trace,
    };
    Ok(match kind {
        SolverKind::Bb | SolverKind::Cap => {
            let cfg = if kind == SolverKind::Cap {
                BbConfig {
                    max_iterations: spec.cap_iterations,
                    ..spec.bb
                }
            } else {
                spec.bb
            };
            let r = run_bb(pd, &cfg);
            report(r.allocation, r.iterations, r.history, Vec::new())
        }
        SolverKind::Sca1 | SolverKind::Sca2 => {
            let variant = if kind == SolverKind::Sca1 { ScaVariant::I } else { ScaVariant::II };
            let r = run_sca(pd, &ScaConfig { variant, ..spec.sca });
            report(r.allocation, r.iterations, Vec::new(), r.trace)
        }
        SolverKind::Greedy => report(greedy_schedule(pd).allocation, 1, Vec::new(), Vec::new()),
        SolverKind::Oracle => {
            let r = brute_force(pd, spec.oracle_grid)?;
            report(r.allocation, r.evaluated, Vec::new(), Vec::new())
        }
    })
}

/// One sampled instance, ready for the solvers.
#[derive(Debug, Clone)]
pub struct Instance {
    pub seed: u64,
    pub problem: ProblemData,
}

pub fn sample_instance(cfg: &SystemConfig, beams: &BeamSet, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dep = sample_deployment(cfg, &mut rng);
    let g = compute_effective(cfg, &dep, beams)?;
    let s = build_active_set(&g);
    Ok(Instance {
        seed,
        problem: build_problem(&g, &s, cfg),
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
struct TrialOutcome {
    records: Vec<TrialRecord>,
    failures: Vec<FailureRecord>,
    history: Vec<HistoryRow>,
    trace: Vec<TraceRow>,
}

fn run_trial(spec: &ExperimentSpec, cfg: &SystemConfig, beams: &BeamSet, value: f64, seed: u64) -> TrialOutcome {
    let mut out = TrialOutcome::default();
    let inst = match sample_instance(cfg, beams, seed) {
        Ok(i) => i,
        Err(e) => {
            out.failures.push(FailureRecord {
                seed,
                sweep: value,
                stage: "instance".into(),
                error: e.to_string(),
            });
            return out;
        }
    };
    let pd = &inst.problem;
    for &kind in &spec.solvers {
        let start = Instant::now();
        let rep = match run_solver(kind, pd, spec) {
            Ok(r) => r,
            Err(e) => {
                out.failures.push(FailureRecord {
                    seed,
                    sweep: value,
                    stage: kind.label().into(),
                    error: e.to_string(),
                });
                continue;
            }
        };
        let wall_ms = if spec.timing {
            start.elapsed().as_secs_f64() * 1e3
        } else {
            0.0
        };
        out.records.push(TrialRecord {
            seed,
            sweep: value,
            solver: kind,
            sum_rate_bpcu: rep.sum_rate(),
            iterations: rep.iterations,
            wall_ms,
            residual: rep.residual(pd),
            penalty_leak: rep.allocation.penalty_leak,
        });
        if spec.record_traces {
            out.history.extend(rep.history.iter().map(|h| HistoryRow {
                seed,
                sweep: value,
                solver: kind,
                iteration: h.iteration,
                lower: h.lower,
                upper: h.upper,
                active: h.active,
            }));
            out.trace.extend(rep.trace.iter().map(|t| TraceRow {
                seed,
                sweep: value,
                solver: kind,
                iteration: t.iteration,
                objective: t.objective,
                surrogate: t.surrogate,
            }));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep: f64,
    pub solver: SolverKind,
    pub trials: usize,
    pub mean: f64,
    pub std_err: f64,
    pub mean_iterations: f64,
    pub leaks: usize,
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseRow {
    pub sweep: f64,
    pub solver_a: SolverKind,
    pub solver_b: SolverKind,
    pub paired: usize,
    /// Mean of `a − b` over trials where both succeeded.
    pub mean_diff: f64,
    pub std_err: f64,
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub spec: ExperimentSpec,
    pub records: Vec<TrialRecord>,
    pub failures: Vec<FailureRecord>,
    pub history: Vec<HistoryRow>,
    pub trace: Vec<TraceRow>,
    pub summary: Vec<SummaryRow>,
    pub pairwise: Vec<PairwiseRow>,
    pub elapsed_ms: Option<f64>,
}

impl ExperimentResults {
    pub fn summary_for(&self, sweep: f64, solver: SolverKind) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.sweep == sweep && r.solver == solver)
    }

    pub fn pair_for(&self, sweep: f64, a: SolverKind, b: SolverKind) -> Option<&PairwiseRow> {
        self.pairwise
            .iter()
            .find(|r| r.sweep == sweep && r.solver_a == a && r.solver_b == b)
    }

    /// Sum rates of `solver` at `sweep`, in trial order.
    pub fn rates(&self, sweep: f64, solver: SolverKind) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.sweep == sweep && r.solver == solver)
            .map(|r| r.sum_rate_bpcu)
            .collect()
    }
}

fn aggregate(spec: &ExperimentSpec, records: &[TrialRecord]) -> (Vec<SummaryRow>, Vec<PairwiseRow>) {
    let mut summary = Vec::new();
    let mut pairwise = Vec::new();
    for &v in &spec.sweep.values {
        let at: Vec<&TrialRecord> = records.iter().filter(|r| r.sweep == v).collect();
        for &kind in &spec.solvers {
            let rows: Vec<&&TrialRecord> = at.iter().filter(|r| r.solver == kind).collect();
            let rates: Vec<f64> = rows.iter().map(|r| r.sum_rate_bpcu).collect();
            let (mean, std_err) = mean_se(&rates);
            let n = rows.len().max(1) as f64;
            summary.push(SummaryRow {
                sweep: v,
                solver: kind,
                trials: rows.len(),
                mean,
                std_err,
                mean_iterations: rows.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
                leaks: rows.iter().filter(|r| r.penalty_leak).count(),
                max_residual: rows.iter().map(|r| r.residual).fold(0.0, f64::max),
            });
        }
        for (i, &a) in spec.solvers.iter().enumerate() {
            for &b in &spec.solvers[i + 1..] {
                let diffs: Vec<f64> = at
                    .iter()
                    .filter(|r| r.solver == a)
                    .filter_map(|ra| {
                        at.iter()
                            .find(|rb| rb.solver == b && rb.seed == ra.seed)
                            .map(|rb| ra.sum_rate_bpcu - rb.sum_rate_bpcu)
                    })
                    .collect();
                let (mean_diff, std_err) = mean_se(&diffs);
                pairwise.push(PairwiseRow {
                    sweep: v,
                    solver_a: a,
                    solver_b: b,
                    paired: diffs.len(),
                    mean_diff,
                    std_err,
                });
            }
        }
    }
    (summary, pairwise)
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResults> {
    spec.validate()?;
    let start = Instant::now();
    let mut points = Vec::with_capacity(spec.sweep.values.len());
    for &v in &spec.sweep.values {
        let cfg = spec.sweep.variable.apply(&spec.base, v)?;
        let beams = design_beams(&cfg)?;
        points.push((v, cfg, beams));
    }
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|i| (0..spec.trials).map(move |t| (i, t)))
        .collect();
    let one = |&(i, t): &(usize, usize)| {
        let (v, cfg, beams) = &points[i];
        run_trial(spec, cfg, beams, *v, trial_seed(spec.master_seed(), i, t))
    };
    let outcomes: Vec<TrialOutcome> = if spec.parallelism == 1 {
        jobs.iter().map(one).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(spec.parallelism)
            .build()
            .map_err(|e| Error::InvalidExperiment(format!("thread pool: {e}")))?
            .install(|| jobs.par_iter().map(one).collect())
    };
    let mut res = ExperimentResults {
        spec: spec.clone(),
        records: Vec::new(),
        failures: Vec::new(),
        history: Vec::new(),
        trace: Vec::new(),
        summary: Vec::new(),
        pairwise: Vec::new(),
        elapsed_ms: None,
    };
    for o in outcomes {
        res.records.extend(o.records);
        res.failures.extend(o.failures);
        res.history.extend(o.history);
        res.trace.extend(o.trace);
    }
    for f in &res.failures {
        log::warn!("seed {} at {}: {} failed: {}", f.seed, f.sweep, f.stage, f.error);
    }
    let (summary, pairwise) = aggregate(spec, &res.records);
    res.summary = summary;
    res.pairwise = pairwise;
    if spec.timing {
        res.elapsed_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(res)
}
