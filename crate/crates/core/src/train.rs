//! The curriculum training loop.
//!
//! Each batch comes from the stage iterator. Basic samples get flip, crop,
//! colour jitter and cutout; compound samples are used as synthesized. The
//! model is scored on the compound validation set after every epoch and the
//! best epoch is checkpointed.
//!
//! Files written to the output directory:
//!
//! - `train_log.jsonl`: one [`EpochRecord`] per epoch
//! - `timing.jsonl`: wall-clock seconds per epoch, kept apart so the log
//!   itself is reproducible byte for byte
//! - `best.ckpt`, `last.ckpt`
//! - `metrics.json`: validation metrics of the best epoch
//! - `config.json`: the effective run configuration

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::augment::{basic_augment, cutout, mixup, MixMode};
use crate::config::RunConfig;
use crate::curriculum::{default_batches_per_epoch, BasicPool, BatchSources, StageIterator};
use crate::data::dataset::{filter_neutral, load_manifest, split, Sample, SampleSource};
use crate::data::labels::CompoundCatalog;
use crate::data::synthetic::{generate_compound, generate_synthetic};
use crate::error::{config_err, Error, Result};
use crate::eval::{compound_targets, evaluate, Metrics};
use crate::nn::{loss_and_backward_chunked, Checkpoint, ModelSpec, ModelState, Optimizer, Tensor};
use crate::rng::RngStream;

pub const LOG_FILE: &str = "train_log.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const METRICS_FILE: &str = "metrics.json";
pub const CONFIG_FILE: &str = "config.json";

/// Training data: basic samples, natural compounds and the scored validation set.
#[derive(Debug, Clone, Default)]
pub struct Pools {
    pub basic: Vec<Sample>,
    pub natural: Vec<Sample>,
    /// Compound samples with their ground-truth catalog index.
    pub val: Vec<(Sample, usize)>,
}

impl Pools {
    /// Separates single-label from multi-label training samples.
    pub fn from_train(samples: Vec<Sample>, val: Vec<(Sample, usize)>) -> Self {
        let (natural, basic) = samples.into_iter().partition(|s| s.label.support().len() >= 2);
        Self { basic, natural, val }
    }
}

/// `n_per_entry` equal-weight Mixup composites per realizable catalog entry,
/// built from a pool of basic samples.
pub fn synthesize_val_set(
    basic: &[Sample],
    catalog: &CompoundCatalog,
    n_per_entry: usize,
    stream: RngStream,
) -> Result<Vec<(Sample, usize)>> {
    use rand::Rng;
    let pool = BasicPool::new(basic);
    let mut out = Vec::new();
    for (k, entry) in catalog.entries().iter().enumerate() {
        let [a, b] = entry.constituents;
        if !(pool.has(a) && pool.has(b)) {
            continue;
        }
        let of = |c| -> Vec<&Sample> { basic.iter().filter(|s| s.label.argmax() == c).collect() };
        let (xs, ys) = (of(a), of(b));
        for i in 0..n_per_entry {
            let mut rng = stream.indices(&[k as u64, i as u64]).rng();
            let x = xs[rng.random_range(0..xs.len())];
            let y = ys[rng.random_range(0..ys.len())];
            out.push((mixup(x, y, 0.5, MixMode::Union)?, k));
        }
    }
    Ok(out)
}

/// Builds the pools a config describes: a generated glyph dataset, or
/// manifests on disk.
pub fn load_pools(cfg: &RunConfig, catalog: &CompoundCatalog) -> Result<Pools> {
    let Some(train_manifest) = &cfg.data.train_manifest else {
        let syn = cfg.synthetic_data();
        let basic = generate_synthetic(&syn)?;
        let val = generate_compound(&syn, catalog, cfg.data.synthetic.n_val_per_entry)?;
        return Ok(Pools::from_train(basic, val));
    };
    let root = match &cfg.data.image_root {
        Some(r) => r.clone(),
        None => train_manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let res = Some(cfg.resolution);
    let samples = filter_neutral(load_manifest(train_manifest, &root, res)?);
    let pools = if let Some(val_manifest) = &cfg.data.val_manifest {
        let val_root = match &cfg.data.image_root {
            Some(r) => r.clone(),
            None => val_manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        let val = filter_neutral(load_manifest(val_manifest, &val_root, res)?);
        Pools::from_train(samples, compound_targets(&val, catalog))
    } else {
        let parts = split(&samples, cfg.data.val_fraction, cfg.seed)?;
        let held: Vec<Sample> = parts.val.iter().map(|&i| samples[i].clone()).collect();
        let train: Vec<Sample> = parts.train.iter().map(|&i| samples[i].clone()).collect();
        let mut val = compound_targets(&held, catalog);
        let held_basic: Vec<Sample> = held.into_iter().filter(|s| s.label.support().len() < 2).collect();
        val.extend(synthesize_val_set(
            &held_basic,
            catalog,
            cfg.data.val_per_entry,
            RngStream::new(cfg.seed).child("val"),
        )?);
        Pools::from_train(train, val)
    };
    if pools.val.is_empty() {
        return config_err("validation set has no compound samples");
    }
    Ok(pools)
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub stage: usize,
    pub compound_proportion: f64,
    pub mean_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub output_dir: Option<PathBuf>,
    pub resume: Option<Checkpoint>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub spec: ModelSpec,
    /// Parameters after the final epoch.
    pub state: ModelState,
    /// Parameters of the epoch with the best validation macro-F1.
    pub best_state: ModelState,
    pub best_epoch: usize,
    pub best_macro_f1: f64,
    pub best_metrics: Option<Metrics>,
    /// Epochs run by this call (after the resume point, if any).
    pub log: Vec<EpochRecord>,
    pub wall_times: Vec<f64>,
    /// Loss of the very first batch, when this call started at epoch 1.
    pub first_batch_loss: Option<f64>,
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn append_jsonl<T: Serialize>(path: &Path, record: &T) -> Result<()> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_vec(record)?;
    line.push(b'\n');
    f.write_all(&line)?;
    Ok(())
}

/// Reads a training log.
pub fn read_log(path: &Path) -> Result<Vec<EpochRecord>> {
    fs::read_to_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct TimingRecord {
    epoch: usize,
    wall_time: f64,
}

/// Stacks images and labels of a batch, augmenting the basic samples.
fn prepare_batch(cfg: &RunConfig, samples: Vec<Sample>, stream: RngStream) -> Result<(Tensor, Tensor)> {
    let basic_cfg = cfg.augment.basic();
    let mut images = Vec::with_capacity(samples.len());
    let mut labels = Vec::with_capacity(samples.len() * crate::NUM_BASIC);
    for (i, s) in samples.into_iter().enumerate() {
        let img = if s.source == SampleSource::Basic {
            let mut rng = stream.index(i as u64).rng();
            let aug = basic_augment(&s, &mut rng, &basic_cfg)?;
            cutout(&aug.image, &mut rng, cfg.augment.cutout_size, cfg.augment.cutout_fill)?
        } else {
            s.image
        };
        labels.extend_from_slice(s.label.values());
        images.push(img);
    }
    let n = images.len();
    Ok((Tensor::stack(images.iter())?, Tensor::new(vec![n, crate::NUM_BASIC], labels)?))
}

fn stored_config(cfg: &RunConfig) -> Result<serde_json::Value> {
    let mut c = cfg.clone();
    c.output_dir = None;
    Ok(serde_json::to_value(c)?)
}

/// Runs the full schedule (or its remainder when resuming).
pub fn train(cfg: &RunConfig, pools: &Pools, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    let catalog = CompoundCatalog::standard();
    let schedule = cfg.schedule()?;
    let spec = cfg.model_spec()?;
    if pools.basic.is_empty() {
        return config_err("basic training pool is empty");
    }
    if pools.val.is_empty() {
        return config_err("validation set is empty");
    }
    let stored = stored_config(cfg)?;

    let (mut state, mut optimizer, start_epoch, mut best_macro_f1) = match &opts.resume {
        Some(ckpt) => {
            if ckpt.spec != spec {
                return Err(Error::Checkpoint("checkpoint model does not match the config".into()));
            }
            let opt = match &ckpt.optimizer {
                Some(o) => o.clone(),
                None => Optimizer::new(cfg.optimizer)?,
            };
            (ckpt.state.clone(), opt, ckpt.epoch + 1, ckpt.best_macro_f1.unwrap_or(f64::NEG_INFINITY))
        }
        None => (
            ModelState::init(&spec, cfg.seed),
            Optimizer::new(cfg.optimizer)?,
            1,
            f64::NEG_INFINITY,
        ),
    };

    let out_dir = opts.output_dir.as_deref();
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(CONFIG_FILE), cfg.to_json()?)?;
        let log_path = dir.join(LOG_FILE);
        let timing_path = dir.join(TIMING_FILE);
        if start_epoch == 1 {
            fs::write(&log_path, "")?;
            fs::write(&timing_path, "")?;
        } else {
            // Drop records past the resume point.
            let kept: Vec<EpochRecord> = if log_path.exists() {
                read_log(&log_path)?.into_iter().filter(|r| r.epoch < start_epoch).collect()
            } else {
                Vec::new()
            };
            write_jsonl(&log_path, &kept)?;
            let timing: Vec<TimingRecord> = if timing_path.exists() {
                fs::read_to_string(&timing_path)?
                    .lines()
                    .filter_map(|l| serde_json::from_str::<TimingRecord>(l).ok())
                    .filter(|r| r.epoch < start_epoch)
                    .collect()
            } else {
                Vec::new()
            };
            write_jsonl(&timing_path, &timing)?;
        }
    }

    let basic_pool = BasicPool::new(&pools.basic);
    let sources = BatchSources {
        basic: &basic_pool,
        natural: &pools.natural,
        source: cfg.compound_source(!pools.natural.is_empty())?,
        synthesis: cfg.synthesis(),
        catalog: &catalog,
    };
    let bpe = cfg
        .batches_per_epoch
        .unwrap_or_else(|| default_batches_per_epoch(pools.basic.len(), cfg.batch_size));
    let root = RngStream::new(cfg.seed);
    let batches = StageIterator::starting_at(&schedule, sources, cfg.batch_size, bpe, root.child("curriculum"), start_epoch)?;
    let augment_stream = root.child("augment");
    let chunks = rayon::current_num_threads();

    let mut best_state = state.clone();
    let mut best_epoch = opts.resume.as_ref().map_or(0, |c| c.epoch);
    let mut best_metrics = None;
    let mut log = Vec::new();
    let mut wall_times = Vec::new();
    let mut first_batch_loss = None;
    let mut loss_sum = 0.0;
    let mut prev_stage = None;
    let mut epoch_start = Instant::now();

    for batch in batches {
        let batch = batch?;
        if batch.batch_index == 0 {
            epoch_start = Instant::now();
            loss_sum = 0.0;
            if cfg.reset_optimizer_between_stages && prev_stage.is_some_and(|s| s != batch.stage) {
                optimizer.reset();
            }
            prev_stage = Some(batch.stage);
        }
        let stream = augment_stream.indices(&[batch.epoch as u64, batch.batch_index as u64]);
        let (x, y) = prepare_batch(cfg, batch.samples, stream)?;
        let diverged = |loss: f64| Error::Diverged {
            epoch: batch.epoch,
            batch: batch.batch_index + 1,
            loss,
        };
        let (loss, grads) = match loss_and_backward_chunked(&spec, &state, &x, &y, chunks) {
            Ok(r) => r,
            Err(Error::Numeric { .. }) => return Err(diverged(f64::NAN)),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() || !grads.all_finite() {
            return Err(diverged(loss));
        }
        if batch.epoch == 1 && batch.batch_index == 0 {
            first_batch_loss = Some(loss);
        }
        optimizer.step(&mut state, &grads)?;
        if !state.all_finite() {
            return Err(diverged(loss));
        }
        loss_sum += loss;

        if batch.batch_index + 1 < bpe {
            continue;
        }
        let metrics = evaluate(&spec, &state, &pools.val, &catalog)?;
        let record = EpochRecord {
            epoch: batch.epoch,
            stage: batch.stage,
            compound_proportion: batch.compound_proportion,
            mean_loss: loss_sum / bpe as f64,
            val_macro_f1: metrics.macro_f1,
        };
        let wall = epoch_start.elapsed().as_secs_f64();
        log::info!(
            "epoch {} stage {} p={} loss={:.4} val_macro_f1={:.4} ({wall:.1}s)",
            record.epoch,
            record.stage,
            record.compound_proportion,
            record.mean_loss,
            record.val_macro_f1
        );
        let improved = metrics.macro_f1 > best_macro_f1;
        if improved {
            best_macro_f1 = metrics.macro_f1;
            best_epoch = batch.epoch;
            best_state = state.clone();
            best_metrics = Some(metrics);
        }
        if let Some(dir) = out_dir {
            let ckpt = |s: &ModelState| Checkpoint {
                spec: spec.clone(),
                state: s.clone(),
                optimizer: Some(optimizer.clone()),
                epoch: batch.epoch,
                best_macro_f1: Some(best_macro_f1),
                run_config: Some(stored.clone()),
            };
            if improved {
                ckpt(&state).save(&dir.join(BEST_CHECKPOINT))?;
                if let Some(m) = &best_metrics {
                    fs::write(dir.join(METRICS_FILE), m.to_json()?)?;
                }
            }
            ckpt(&state).save(&dir.join(LAST_CHECKPOINT))?;
            append_jsonl(&dir.join(LOG_FILE), &record)?;
            append_jsonl(
                &dir.join(TIMING_FILE),
                &TimingRecord {
                    epoch: batch.epoch,
                    wall_time: wall,
                },
            )?;
        }
        log.push(record);
        wall_times.push(wall);
    }

    Ok(TrainOutcome {
        spec,
        state,
        best_state,
        best_epoch,
        best_macro_f1,
        best_metrics,
        log,
        wall_times,
        first_batch_loss,
    })
}

/// Loads the configured data and trains.
pub fn run(cfg: &RunConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pools = load_pools(cfg, &CompoundCatalog::standard())?;
    train(cfg, &pools, opts)
}
