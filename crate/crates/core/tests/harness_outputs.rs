use std::fs;
use std::path::Path;

use thz_noma::harness::{
    emit_outputs, run_experiment, ExperimentSpec, Manifest, SolverKind, Sweep, SweepVar, TRIALS_HEADER,
};
use thz_noma::SystemConfig;

fn spec() -> ExperimentSpec {
    let mut s = ExperimentSpec::new(
        "outputs",
        SystemConfig::default(),
        Sweep {
            variable: SweepVar::M,
            values: vec![1.0, 3.0],
        },
        vec![SolverKind::Bb, SolverKind::Sca2, SolverKind::Greedy],
    );
    s.trials = 4;
    s.bb.max_iterations = 50;
    s
}

fn run_into(spec: &ExperimentSpec, dir: &Path) {
    let res = run_experiment(spec).unwrap();
    emit_outputs(&res, dir).unwrap();
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn tables_carry_their_headers() {
    let dir = tempfile::tempdir().unwrap();
    run_into(&spec(), dir.path());
    assert_eq!(first_line(&dir.path().join("trials.csv")), TRIALS_HEADER);
    assert_eq!(
        TRIALS_HEADER,
        "seed,sweep,solver,sum_rate_bpcu,iterations,wall_ms,residual,penalty_leak"
    );
    assert_eq!(
        first_line(&dir.path().join("summary.csv")),
        "sweep,solver,trials,mean,std_err,mean_iterations,leaks,max_residual"
    );
    assert_eq!(
        first_line(&dir.path().join("pairwise.csv")),
        "sweep,solver_a,solver_b,paired,mean_diff,std_err"
    );
    assert_eq!(first_line(&dir.path().join("failures.csv")), "seed,sweep,stage,error");
    // 2 sweep points × 4 trials × 3 solvers
    let rows = fs::read_to_string(dir.path().join("trials.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + 24);
    assert!(!dir.path().join("bb_history.csv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_into(&spec(), a.path());
    let mut parallel = spec();
    parallel.parallelism = 3;
    run_into(&parallel, b.path());
    for f in ["trials.csv", "summary.csv", "pairwise.csv", "failures.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn manifest_round_trips_to_the_spec() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec();
    run_into(&s, dir.path());
    let m = Manifest::read(&dir.path().join("manifest.json")).unwrap();
    assert_eq!(m.spec, s);
    assert_eq!(m.trial_records, 24);
    assert_eq!(m.elapsed_ms, None);
    // a manifest's spec is itself a runnable spec file
    let spec_path = dir.path().join("spec.json");
    fs::write(&spec_path, serde_json::to_string(&m.spec).unwrap()).unwrap();
    assert_eq!(ExperimentSpec::from_json_file(&spec_path).unwrap(), s);
}

#[test]
fn traces_are_written_when_requested() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec();
    s.record_traces = true;
    run_into(&s, dir.path());
    assert_eq!(
        first_line(&dir.path().join("bb_history.csv")),
        "seed,sweep,solver,iteration,lower,upper,active"
    );
    assert_eq!(
        first_line(&dir.path().join("sca_trace.csv")),
        "seed,sweep,solver,iteration,objective,surrogate"
    );
}

#[test]
fn empty_solver_list_fails_before_writing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let mut s = spec();
    s.solvers.clear();
    s.output = Some(out.clone());
    assert!(run_experiment(&s).is_err());
    assert!(!out.exists());
}

#[test]
fn unknown_spec_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let mut v = serde_json::to_value(spec()).unwrap();
    v["trails"] = serde_json::json!(3);
    fs::write(&path, v.to_string()).unwrap();
    assert!(ExperimentSpec::from_json_file(&path).is_err());
}
