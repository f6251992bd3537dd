//! Ablation sweeps over schedules and mixing settings.
//!
//! Each experiment overrides the schedule and the Mixup/CutMix switches of a
//! shared base config and is trained once per seed. A row reports the mean
//! over seeds of each run's best validation macro-F1.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::curriculum::CurriculumSchedule;
use crate::data::labels::CompoundCatalog;
use crate::error::{config_err, Result};
use crate::train::{load_pools, train, Pools, TrainOptions};

pub const CSV_HEADER: [&str; 6] = ["exp", "epoch_dis", "compound_prop", "mixup", "cutmix", "macro_f1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub exp: String,
    pub epoch_dis: Vec<usize>,
    pub compound_prop: Vec<f64>,
    pub mixup: bool,
    pub cutmix: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub base: RunConfig,
    /// One run per seed per experiment; the base seed when empty.
    #[serde(default)]
    pub seeds: Vec<u64>,
    pub experiments: Vec<Experiment>,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![self.base.seed]
        } else {
            self.seeds.clone()
        }
    }

    /// The run config of one experiment at one seed.
    pub fn run_config(&self, exp: &Experiment, seed: u64) -> RunConfig {
        let mut cfg = self.base.clone();
        cfg.seed = seed;
        cfg.epoch_dis = exp.epoch_dis.clone();
        cfg.compound_prop = exp.compound_prop.clone();
        cfg.mixup.enabled = exp.mixup;
        cfg.cutmix.enabled = exp.cutmix;
        cfg
    }

    /// The curriculum ablation: five schedules with both mixers enabled.
    pub fn curriculum_grid(base: RunConfig, seeds: Vec<u64>) -> Self {
        let experiments = CurriculumSchedule::ablation_grid()
            .into_iter()
            .enumerate()
            .map(|(i, s)| Experiment {
                exp: (i + 1).to_string(),
                epoch_dis: s.epoch_dis(),
                compound_prop: s.compound_prop(),
                mixup: true,
                cutmix: true,
            })
            .collect();
        Self { base, seeds, experiments }
    }

    /// The mixing ablation under the four-stage schedule: Mixup only,
    /// CutMix only, both.
    pub fn augmentation_grid(base: RunConfig, seeds: Vec<u64>) -> Self {
        let s = CurriculumSchedule::default_four_stage();
        let experiments = [(true, false), (false, true), (true, true)]
            .into_iter()
            .enumerate()
            .map(|(i, (mixup, cutmix))| Experiment {
                exp: (i + 1).to_string(),
                epoch_dis: s.epoch_dis(),
                compound_prop: s.compound_prop(),
                mixup,
                cutmix,
            })
            .collect();
        Self { base, seeds, experiments }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub exp: String,
    pub epoch_dis: String,
    pub compound_prop: String,
    pub mixup: bool,
    pub cutmix: bool,
    /// Mean best validation macro-F1 over successful seeds.
    pub macro_f1: Option<f64>,
    pub per_seed: Vec<(u64, f64)>,
    pub errors: Vec<(u64, String)>,
}

fn schedule_strings(exp: &Experiment) -> (String, String) {
    match CurriculumSchedule::from_arrays(&exp.epoch_dis, &exp.compound_prop) {
        Ok(s) => (s.epoch_dis_string(), s.compound_prop_string()),
        Err(_) => (format!("{:?}", exp.epoch_dis), format!("{:?}", exp.compound_prop)),
    }
}

/// Trains every experiment at every seed. A failing run is recorded in its
/// row and the sweep continues.
pub fn run_sweep(sweep: &SweepConfig) -> Result<Vec<SweepRow>> {
    if sweep.experiments.is_empty() {
        return config_err("sweep has no experiments");
    }
    let catalog = CompoundCatalog::standard();
    let seeds = sweep.seeds();
    let mut rows: Vec<SweepRow> = sweep
        .experiments
        .iter()
        .map(|e| {
            let (epoch_dis, compound_prop) = schedule_strings(e);
            SweepRow {
                exp: e.exp.clone(),
                epoch_dis,
                compound_prop,
                mixup: e.mixup,
                cutmix: e.cutmix,
                macro_f1: None,
                per_seed: Vec::new(),
                errors: Vec::new(),
            }
        })
        .collect();

    for &seed in &seeds {
        // Data depends only on the seed, so it is shared by every experiment.
        let mut data_cfg = sweep.base.clone();
        data_cfg.seed = seed;
        let pools: std::result::Result<Pools, String> = data_cfg
            .validate()
            .and_then(|_| load_pools(&data_cfg, &catalog))
            .map_err(|e| e.to_string());
        for (exp, row) in sweep.experiments.iter().zip(&mut rows) {
            let result = match &pools {
                Ok(p) => train(&sweep.run_config(exp, seed), p, &TrainOptions::default()).map_err(|e| e.to_string()),
                Err(e) => Err(e.clone()),
            };
            match result {
                Ok(out) => {
                    log::info!("exp {} seed {seed}: best macro-F1 {:.4}", exp.exp, out.best_macro_f1);
                    row.per_seed.push((seed, out.best_macro_f1));
                }
                Err(e) => {
                    log::error!("exp {} seed {seed} failed: {e}", exp.exp);
                    row.errors.push((seed, e));
                }
            }
        }
    }
    for row in &mut rows {
        if !row.per_seed.is_empty() {
            let sum: f64 = row.per_seed.iter().map(|(_, f)| f).sum();
            row.macro_f1 = Some(sum / row.per_seed.len() as f64);
        }
    }
    Ok(rows)
}

/// Renders rows as CSV. Failed experiments have an empty `macro_f1` cell.
pub fn to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.exp.clone(),
            r.epoch_dis.clone(),
            r.compound_prop.clone(),
            r.mixup.to_string(),
            r.cutmix.to_string(),
            r.macro_f1.map(|f| format!("{f:.6}")).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
