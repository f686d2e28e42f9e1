//! The reference scenarios behind the result tables and figures.

use super::{ExperimentSpec, SolverKind, Sweep, SweepVar};
use crate::config::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preset {
    /// Iteration cap against the large cap over M.
    Table1,
    /// Solver comparison over M for a given secondary square and target rate.
    Fig1 { r_s: f64, r_bar: f64 },
    /// Convergence of BB against SCA-II on two instances.
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

const COMPARED: [SolverKind; 4] = [SolverKind::Bb, SolverKind::Sca1, SolverKind::Sca2, SolverKind::Greedy];

pub fn preset(which: Preset) -> ExperimentSpec {
    let base = SystemConfig::default();
    let sweep = |variable, values: &[f64]| Sweep {
        variable,
        values: values.to_vec(),
    };
    let m_values = [1.0, 2.0, 4.0, 6.0, 8.0];
    match which {
        Preset::Table1 => ExperimentSpec::new(
            "table1",
            base,
            sweep(SweepVar::M, &m_values),
            vec![SolverKind::Cap, SolverKind::Bb],
        ),
        Preset::Fig1 { r_s, r_bar } => ExperimentSpec::new(
            "fig1",
            SystemConfig {
                secondary_square: r_s,
                target_rates: vec![r_bar],
                ..base
            },
            sweep(SweepVar::M, &m_values),
            COMPARED.to_vec(),
        ),
        Preset::Fig2 => {
            let mut s = ExperimentSpec::new(
                "fig2",
                SystemConfig {
                    secondary_square: 5.0,
                    target_rates: vec![2.5],
                    ..base
                },
                sweep(SweepVar::M, &[8.0]),
                vec![SolverKind::Cap, SolverKind::Sca2],
            );
            s.trials = 2;
            s.record_traces = true;
            s
        }
        Preset::Fig3 => ExperimentSpec::new(
            "fig3",
            SystemConfig {
                n_secondary: 4,
                ..base
            },
            sweep(SweepVar::K, &[2.0, 4.0, 6.0]),
            COMPARED.to_vec(),
        ),
        Preset::Fig4 => ExperimentSpec::new(
            "fig4",
            SystemConfig {
                n_secondary: 4,
                ..base
            },
            sweep(SweepVar::N, &[10.0, 20.0, 40.0]),
            COMPARED.to_vec(),
        ),
        Preset::Fig5 => ExperimentSpec::new(
            "fig5",
            SystemConfig {
                n_secondary: 4,
                ..base
            },
            sweep(SweepVar::NQ, &[10.0, 20.0, 40.0]),
            COMPARED.to_vec(),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in [
            Preset::Table1,
            Preset::Fig1 { r_s: 10.0, r_bar: 1.0 },
            Preset::Fig2,
            Preset::Fig3,
            Preset::Fig4,
            Preset::Fig5,
        ] {
            preset(p).validate().unwrap();
        }
    }
}
