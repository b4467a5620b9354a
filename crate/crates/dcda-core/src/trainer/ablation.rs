//! Ablation harness: all four training modes over a set of seeds, scored
//! by target-test ACER at the fixed threshold.

use std::fmt::Write as _;

use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::error::Result;
use crate::metrics::{evaluate_dataset, DEFAULT_THRESHOLD};
use crate::model::DcdaModel;
use crate::trainer::mode::MODES;
use crate::trainer::report::TrainReport;
use crate::trainer::train;

#[derive(Debug, Clone)]
pub struct AblationRun {
    pub mode: String,
    pub seed: u64,
    /// Target-test ACER at the fixed threshold.
    pub acer: f64,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub runs: Vec<AblationRun>,
    pub seeds: Vec<u64>,
}

impl AblationTable {
    pub fn mean_acer(&self, mode: &str) -> f64 {
        let values: Vec<f64> = self
            .runs
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| r.acer)
            .collect();
        values.iter().sum::<f64>() / values.len() as f64
    }

    /// One row per mode, one column per seed, plus the mean; ACER in %.
    pub fn to_display_string(&self) -> String {
        let mut out = String::new();
        write!(out, "{:<20}", "mode").unwrap();
        for seed in &self.seeds {
            write!(out, "  seed{seed:<4}").unwrap();
        }
        writeln!(out, "  mean_acer%").unwrap();
        for policy in MODES {
            let mode = policy.name();
            write!(out, "{mode:<20}").unwrap();
            for seed in &self.seeds {
                let run = self
                    .runs
                    .iter()
                    .find(|r| r.mode == mode && r.seed == *seed)
                    .expect("every (mode, seed) pair ran");
                write!(out, "  {:>8.2}", run.acer * 100.0).unwrap();
            }
            writeln!(out, "  {:>10.2}", self.mean_acer(mode) * 100.0).unwrap();
        }
        out
    }
}

/// Trains one (mode, seed) cell and scores it on the target test split.
pub fn run_cell(
    base: &TrainConfig,
    mode: &str,
    seed: u64,
    source_train: &Dataset,
    target_train: &Dataset,
    target_test: &Dataset,
) -> Result<(DcdaModel, TrainReport, AblationRun)> {
    let config = TrainConfig {
        mode: mode.into(),
        seed,
        ..base.clone()
    };
    let (model, report) = train(&config, source_train, Some(target_train))?;
    let metrics = evaluate_dataset(&model, target_test, DEFAULT_THRESHOLD)?;
    Ok((
        model,
        report,
        AblationRun {
            mode: mode.into(),
            seed,
            acer: metrics.acer,
        },
    ))
}

/// Runs every registered mode over every seed.
pub fn run_ablation(
    base: &TrainConfig,
    seeds: &[u64],
    source_train: &Dataset,
    target_train: &Dataset,
    target_test: &Dataset,
) -> Result<AblationTable> {
    let mut runs = Vec::with_capacity(MODES.len() * seeds.len());
    for policy in MODES {
        for &seed in seeds {
            let (_, _, run) = run_cell(
                base,
                policy.name(),
                seed,
                source_train,
                target_train,
                target_test,
            )?;
            runs.push(run);
        }
    }
    Ok(AblationTable {
        runs,
        seeds: seeds.to_vec(),
    })
}
