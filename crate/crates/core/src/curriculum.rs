//! Staged compound-exposure schedules and the batch stream they drive.
//!
//! A [`CurriculumSchedule`] is a list of stages, each a number of epochs and
//! the fraction of every batch that must be compound samples. Stage one is
//! typically pure single-expression training (proportion 0). Compound
//! samples are drawn fresh for every batch, either from a natural compound
//! pool or by mixing two basic samples whose classes form a catalog entry.

use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{cutmix, mixup, LambdaSpec, MixMode};
use crate::data::dataset::Sample;
use crate::data::labels::{BasicClass, CompoundCatalog, CompoundEntry};
use crate::error::{config_err, Error, Result};
use crate::rng::RngStream;
use crate::NUM_BASIC;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub epochs: usize,
    pub compound_proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<StageSpec>", into = "Vec<StageSpec>")]
pub struct CurriculumSchedule {
    stages: Vec<StageSpec>,
}

impl TryFrom<Vec<StageSpec>> for CurriculumSchedule {
    type Error = Error;

    fn try_from(stages: Vec<StageSpec>) -> Result<Self> {
        Self::new(stages)
    }
}

impl From<CurriculumSchedule> for Vec<StageSpec> {
    fn from(s: CurriculumSchedule) -> Self {
        s.stages
    }
}

impl CurriculumSchedule {
    pub fn new(stages: Vec<StageSpec>) -> Result<Self> {
        if stages.is_empty() {
            return config_err("schedule needs at least one stage");
        }
        for (i, s) in stages.iter().enumerate() {
            if s.epochs == 0 {
                return config_err(format!("stage {} has zero epochs", i + 1));
            }
            if !(0.0..=1.0).contains(&s.compound_proportion) {
                return config_err(format!(
                    "stage {} compound proportion {} outside [0, 1]",
                    i + 1,
                    s.compound_proportion
                ));
            }
        }
        Ok(Self { stages })
    }

    /// Builds a schedule from parallel `epoch_dis` / `compound_prop` arrays.
    pub fn from_arrays(epoch_dis: &[usize], compound_prop: &[f64]) -> Result<Self> {
        if epoch_dis.len() != compound_prop.len() {
            return config_err(format!(
                "epoch_dis has {} entries but compound_prop has {}",
                epoch_dis.len(),
                compound_prop.len()
            ));
        }
        Self::new(
            epoch_dis
                .iter()
                .zip(compound_prop)
                .map(|(&epochs, &compound_proportion)| StageSpec {
                    epochs,
                    compound_proportion,
                })
                .collect(),
        )
    }

    /// Four stages of 5, 5, 3 and 3 epochs at proportions 0, 0.2, 0.4 and 1.
    pub fn default_four_stage() -> Self {
        Self::from_arrays(&[5, 5, 3, 3], &[0.0, 0.2, 0.4, 1.0]).expect("valid schedule")
    }

    /// The five schedules of the curriculum ablation, in experiment order.
    /// The first trains on single-expression data only.
    pub fn ablation_grid() -> Vec<Self> {
        [
            (vec![15], vec![0.0]),
            (vec![5, 15], vec![0.0, 1.0]),
            (vec![5, 5, 5], vec![0.0, 0.5, 1.0]),
            (vec![5, 5, 3, 3], vec![0.0, 0.2, 0.4, 1.0]),
            (vec![5, 3, 3, 3, 3], vec![0.0, 0.2, 0.4, 0.6, 1.0]),
        ]
        .into_iter()
        .map(|(e, p)| Self::from_arrays(&e, &p).expect("valid schedule"))
        .collect()
    }

    pub fn stages(&self) -> &[StageSpec] {
        &self.stages
    }

    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|s| s.epochs).sum()
    }

    pub fn needs_compounds(&self) -> bool {
        self.stages.iter().any(|s| s.compound_proportion > 0.0)
    }

    pub fn epoch_dis(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.epochs).collect()
    }

    pub fn compound_prop(&self) -> Vec<f64> {
        self.stages.iter().map(|s| s.compound_proportion).collect()
    }

    /// `"[5, 5, 3, 3]"`.
    pub fn epoch_dis_string(&self) -> String {
        bracket(self.stages.iter().map(|s| s.epochs.to_string()))
    }

    /// `"[0, 0.2, 0.4, 1]"`.
    pub fn compound_prop_string(&self) -> String {
        bracket(self.stages.iter().map(|s| format!("{}", s.compound_proportion)))
    }
}

fn bracket(items: impl Iterator<Item = String>) -> String {
    let mut out = String::from("[");
    for (i, item) in items.enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{item}");
    }
    out.push(']');
    out
}

/// One epoch of a planned schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlannedEpoch {
    /// 1-based, across all stages.
    pub epoch: usize,
    /// 1-based.
    pub stage: usize,
    pub compound_proportion: f64,
}

/// Expands a schedule into one entry per epoch.
pub fn plan(schedule: &CurriculumSchedule) -> Vec<PlannedEpoch> {
    let mut out = Vec::with_capacity(schedule.total_epochs());
    for (s, stage) in schedule.stages.iter().enumerate() {
        for _ in 0..stage.epochs {
            out.push(PlannedEpoch {
                epoch: out.len() + 1,
                stage: s + 1,
                compound_proportion: stage.compound_proportion,
            });
        }
    }
    out
}

/// How compound samples are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompoundMethod {
    Mixup,
    Cutmix,
    Natural,
}

/// Mixture weights over compound producers. Weights sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompoundSource {
    pub mixup: f64,
    pub cutmix: f64,
    pub natural: f64,
}

impl CompoundSource {
    /// Even split between the enabled synthesizers; with a natural pool it
    /// takes half and the synthesizers share the rest.
    pub fn balanced(mixup: bool, cutmix: bool, has_natural: bool) -> Result<Self> {
        let synth = mixup as u8 + cutmix as u8;
        let natural_share = match (has_natural, synth) {
            (false, 0) => return config_err("no compound source enabled"),
            (true, 0) => 1.0,
            (true, _) => 0.5,
            (false, _) => 0.0,
        };
        let each = if synth == 0 {
            0.0
        } else {
            (1.0 - natural_share) / synth as f64
        };
        Ok(Self {
            mixup: if mixup { each } else { 0.0 },
            cutmix: if cutmix { each } else { 0.0 },
            natural: natural_share,
        })
    }

    pub fn validate(&self, natural_pool_len: usize) -> Result<()> {
        let w = [self.mixup, self.cutmix, self.natural];
        if w.iter().any(|&x| !(x >= 0.0)) || ((w.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return config_err(format!("compound source weights must be >= 0 and sum to 1: {self:?}"));
        }
        if self.natural > 0.0 && natural_pool_len == 0 {
            return config_err("natural compound weight > 0 but the natural pool is empty");
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> CompoundMethod {
        let u: f64 = rng.random();
        if u < self.mixup {
            CompoundMethod::Mixup
        } else if u < self.mixup + self.cutmix || self.natural == 0.0 {
            CompoundMethod::Cutmix
        } else {
            CompoundMethod::Natural
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub mode: MixMode,
    /// Weight of the first operand in Mixup.
    pub mixup_lambda: LambdaSpec,
    /// Target fraction of the first operand kept by CutMix.
    pub cutmix_lambda: LambdaSpec,
    /// Only mix pairs that form a catalog entry.
    pub restrict_to_catalog: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            mode: MixMode::Union,
            mixup_lambda: LambdaSpec::Fixed(0.1),
            cutmix_lambda: LambdaSpec::Uniform(0.3, 0.7),
            restrict_to_catalog: true,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        self.mixup_lambda.validate()?;
        self.cutmix_lambda.validate()
    }
}

/// Basic samples indexed by their dominant class.
#[derive(Debug, Clone)]
pub struct BasicPool<'a> {
    samples: &'a [Sample],
    by_class: [Vec<usize>; NUM_BASIC],
}

impl<'a> BasicPool<'a> {
    pub fn new(samples: &'a [Sample]) -> Self {
        let mut by_class: [Vec<usize>; NUM_BASIC] = Default::default();
        for (i, s) in samples.iter().enumerate() {
            by_class[s.label.argmax().index()].push(i);
        }
        Self { samples, by_class }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &'a [Sample] {
        self.samples
    }

    pub fn has(&self, class: BasicClass) -> bool {
        !self.by_class[class.index()].is_empty()
    }

    fn pick<R: Rng + ?Sized>(&self, class: BasicClass, rng: &mut R) -> &'a Sample {
        let ids = &self.by_class[class.index()];
        &self.samples[ids[rng.random_range(0..ids.len())]]
    }

    /// Class pairs that can be synthesized from this pool.
    pub fn realizable_pairs(&self, catalog: &CompoundCatalog, restrict: bool) -> Vec<[BasicClass; 2]> {
        if restrict {
            catalog
                .entries()
                .iter()
                .filter(|e| self.has(e.constituents[0]) && self.has(e.constituents[1]))
                .map(|e| e.constituents)
                .collect()
        } else {
            let avail: Vec<_> = BasicClass::ALL.into_iter().filter(|&c| self.has(c)).collect();
            let mut pairs = Vec::new();
            for (i, &a) in avail.iter().enumerate() {
                for &b in &avail[i + 1..] {
                    pairs.push([a, b]);
                }
            }
            pairs
        }
    }
}

/// Mixes one sample from each constituent of a uniformly chosen realizable
/// pair. Which constituent is the first operand is a fair coin flip.
pub fn synthesize_compound<R: Rng + ?Sized>(
    pool: &BasicPool<'_>,
    catalog: &CompoundCatalog,
    method: CompoundMethod,
    config: &SynthesisConfig,
    rng: &mut R,
) -> Result<Sample> {
    let pairs = pool.realizable_pairs(catalog, config.restrict_to_catalog);
    if pairs.is_empty() {
        return Err(Error::Synthesis(
            "no catalog entry has samples for both constituents".into(),
        ));
    }
    let mut pair = pairs[rng.random_range(0..pairs.len())];
    if rng.random_bool(0.5) {
        pair.swap(0, 1);
    }
    let a = pool.pick(pair[0], rng);
    let b = pool.pick(pair[1], rng);
    match method {
        CompoundMethod::Mixup => {
            let lambda = config.mixup_lambda.draw(rng);
            mixup(a, b, lambda, config.mode)
        }
        CompoundMethod::Cutmix => {
            let lambda = config.cutmix_lambda.draw(rng);
            Ok(cutmix(a, b, lambda, rng, config.mode)?.sample)
        }
        CompoundMethod::Natural => Err(Error::Synthesis(
            "natural compounds are drawn from a pool, not synthesized".into(),
        )),
    }
}

/// Catalog entry whose constituents are exactly a synthesized label's support.
pub fn matching_entry<'c>(catalog: &'c CompoundCatalog, sample: &Sample) -> Option<&'c CompoundEntry> {
    catalog
        .find(&sample.label.support())
        .and_then(|k| catalog.get(k))
}

/// Everything a batch is drawn from.
#[derive(Debug, Clone, Copy)]
pub struct BatchSources<'a> {
    pub basic: &'a BasicPool<'a>,
    pub natural: &'a [Sample],
    pub source: CompoundSource,
    pub synthesis: SynthesisConfig,
    pub catalog: &'a CompoundCatalog,
}

/// Number of compound samples in a batch: `round(p · B)`.
pub fn compound_count(proportion: f64, batch_size: usize) -> usize {
    (proportion * batch_size as f64).round() as usize
}

/// Draws one batch with exactly `round(proportion · batch_size)` compound
/// samples. Basic samples are drawn without replacement within the batch.
/// The result is shuffled.
///
/// Each compound slot uses its own sub-stream, so slots are synthesized in
/// parallel without affecting the output.
pub fn sample_batch(
    sources: &BatchSources<'_>,
    proportion: f64,
    batch_size: usize,
    stream: RngStream,
) -> Result<Vec<Sample>> {
    if batch_size == 0 {
        return config_err("batch_size must be >= 1");
    }
    if !(0.0..=1.0).contains(&proportion) {
        return config_err(format!("compound proportion {proportion} outside [0, 1]"));
    }
    let n_compound = compound_count(proportion, batch_size);
    let n_basic = batch_size - n_compound;
    if n_basic > sources.basic.len() {
        return Err(Error::InsufficientPool {
            needed: n_basic,
            available: sources.basic.len(),
        });
    }
    if n_compound > 0 {
        sources.source.validate(sources.natural.len())?;
    }

    let mut rng = stream.substream("basic");
    let mut batch: Vec<Sample> = index::sample(&mut rng, sources.basic.len(), n_basic)
        .into_iter()
        .map(|i| sources.basic.samples()[i].clone())
        .collect();

    let slots = stream.child("compound");
    let compounds: Vec<Result<Sample>> = (0..n_compound)
        .into_par_iter()
        .map(|k| {
            let mut rng = slots.index(k as u64).rng();
            match sources.source.draw(&mut rng) {
                CompoundMethod::Natural => {
                    let i = rng.random_range(0..sources.natural.len());
                    Ok(sources.natural[i].clone())
                }
                method => synthesize_compound(
                    sources.basic,
                    sources.catalog,
                    method,
                    &sources.synthesis,
                    &mut rng,
                ),
            }
        })
        .collect();
    for c in compounds {
        batch.push(c?);
    }

    batch.shuffle(&mut stream.substream("shuffle"));
    Ok(batch)
}

/// One batch of the curriculum stream.
#[derive(Debug, Clone)]
pub struct CurriculumBatch {
    pub epoch: usize,
    pub stage: usize,
    pub compound_proportion: f64,
    /// 0-based within the epoch.
    pub batch_index: usize,
    pub samples: Vec<Sample>,
}

/// Sequential stream of batches over every planned epoch.
pub struct StageIterator<'a> {
    sources: BatchSources<'a>,
    plan: Vec<PlannedEpoch>,
    batch_size: usize,
    batches_per_epoch: usize,
    stream: RngStream,
    cursor: usize,
}

/// `ceil(pool / batch_size)`.
pub fn default_batches_per_epoch(pool_len: usize, batch_size: usize) -> usize {
    pool_len.div_ceil(batch_size).max(1)
}

impl<'a> StageIterator<'a> {
    pub fn new(
        schedule: &CurriculumSchedule,
        sources: BatchSources<'a>,
        batch_size: usize,
        batches_per_epoch: usize,
        stream: RngStream,
    ) -> Result<Self> {
        Self::starting_at(schedule, sources, batch_size, batches_per_epoch, stream, 1)
    }

    /// Skips every epoch before `first_epoch` (1-based). Batches are keyed by
    /// `(epoch, batch)`, so a resumed stream matches the uninterrupted one.
    pub fn starting_at(
        schedule: &CurriculumSchedule,
        sources: BatchSources<'a>,
        batch_size: usize,
        batches_per_epoch: usize,
        stream: RngStream,
        first_epoch: usize,
    ) -> Result<Self> {
        if batch_size == 0 || batches_per_epoch == 0 {
            return config_err("batch_size and batches_per_epoch must be >= 1");
        }
        if sources.basic.is_empty() {
            return config_err("basic training pool is empty");
        }
        sources.synthesis.validate()?;
        if schedule.needs_compounds() {
            sources.source.validate(sources.natural.len())?;
        }
        Ok(Self {
            sources,
            plan: plan(schedule),
            batch_size,
            batches_per_epoch,
            stream: stream.child("batches"),
            cursor: first_epoch.saturating_sub(1) * batches_per_epoch,
        })
    }

    pub fn total_batches(&self) -> usize {
        self.plan.len() * self.batches_per_epoch
    }
}

impl Iterator for StageIterator<'_> {
    type Item = Result<CurriculumBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.total_batches() {
            return None;
        }
        let e = self.cursor / self.batches_per_epoch;
        let b = self.cursor % self.batches_per_epoch;
        self.cursor += 1;
        let planned = self.plan[e];
        let stream = self.stream.indices(&[planned.epoch as u64, b as u64]);
        Some(
            sample_batch(&self.sources, planned.compound_proportion, self.batch_size, stream).map(
                |samples| CurriculumBatch {
                    epoch: planned.epoch,
                    stage: planned.stage,
                    compound_proportion: planned.compound_proportion,
                    batch_index: b,
                    samples,
                },
            ),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::SampleSource;
    use crate::data::labels::LabelVector;
    use crate::nn::tensor::Tensor;

    fn pool_of(classes: &[BasicClass], per_class: usize) -> Vec<Sample> {
        classes
            .iter()
            .flat_map(|&c| {
                (0..per_class).map(move |i| {
                    Sample::basic(Tensor::filled(vec![16, 16, 3], (c.index() * 10 + i) as f64 / 100.0), c)
                })
            })
            .collect()
    }

    #[test]
    fn plan_four_stage() {
        let p = plan(&CurriculumSchedule::default_four_stage());
        assert_eq!(p.len(), 16);
        assert_eq!(p[5].epoch, 6);
        assert_eq!(p[5].compound_proportion, 0.2);
        assert_eq!(p[13].compound_proportion, 1.0);
        assert_eq!(p[13].stage, 4);
    }

    #[test]
    fn plan_single_and_two_stage() {
        let one = CurriculumSchedule::from_arrays(&[1], &[0.0]).unwrap();
        assert_eq!(plan(&one).len(), 1);
        assert_eq!(plan(&one)[0].compound_proportion, 0.0);
        let two = CurriculumSchedule::from_arrays(&[5, 15], &[0.0, 1.0]).unwrap();
        let p = plan(&two);
        assert_eq!(p.len(), 20);
        assert!(p[5..].iter().all(|e| e.compound_proportion == 1.0));
        assert!(p[..5].iter().all(|e| e.compound_proportion == 0.0));
    }

    #[test]
    fn schedule_validation() {
        assert!(CurriculumSchedule::new(vec![]).is_err());
        assert!(CurriculumSchedule::from_arrays(&[5, 5], &[0.0]).is_err());
        assert!(CurriculumSchedule::from_arrays(&[0], &[0.0]).is_err());
        assert!(CurriculumSchedule::from_arrays(&[1], &[1.5]).is_err());
    }

    #[test]
    fn schedule_strings() {
        let s = CurriculumSchedule::default_four_stage();
        assert_eq!(s.epoch_dis_string(), "[5, 5, 3, 3]");
        assert_eq!(s.compound_prop_string(), "[0, 0.2, 0.4, 1]");
    }

    #[test]
    fn schedule_serde_round_trip() {
        let s = CurriculumSchedule::default_four_stage();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<CurriculumSchedule>(&json).unwrap(), s);
        assert!(serde_json::from_str::<CurriculumSchedule>("[]").is_err());
    }

    #[test]
    fn only_fear_and_surprise_gives_fearfully_surprised() {
        let samples = pool_of(&[BasicClass::Fear, BasicClass::Surprise], 3);
        let pool = BasicPool::new(&samples);
        let cat = CompoundCatalog::standard();
        let mut rng = RngStream::new(0).rng();
        for method in [CompoundMethod::Mixup, CompoundMethod::Cutmix] {
            for _ in 0..50 {
                let s = synthesize_compound(&pool, &cat, method, &SynthesisConfig::default(), &mut rng)
                    .unwrap();
                assert_eq!(matching_entry(&cat, &s).unwrap().name, "Fearfully Surprised");
                assert_eq!(s.label, LabelVector::from_classes(&[BasicClass::Fear, BasicClass::Surprise]));
                assert_eq!(s.source, SampleSource::SynthesizedCompound);
            }
        }
    }

    #[test]
    fn unrealizable_pool_is_an_error() {
        let samples = pool_of(&[BasicClass::Happiness, BasicClass::Anger], 2);
        let pool = BasicPool::new(&samples);
        let cat = CompoundCatalog::standard();
        let mut rng = RngStream::new(0).rng();
        let r = synthesize_compound(&pool, &cat, CompoundMethod::Mixup, &SynthesisConfig::default(), &mut rng);
        assert!(matches!(r, Err(Error::Synthesis(_))));
        // Unrestricted synthesis allows the off-catalog pair.
        let free = SynthesisConfig {
            restrict_to_catalog: false,
            ..SynthesisConfig::default()
        };
        assert!(synthesize_compound(&pool, &cat, CompoundMethod::Mixup, &free, &mut rng).is_ok());
    }

    #[test]
    fn proportional_mode_support_within_entry() {
        let samples = pool_of(&BasicClass::ALL, 2);
        let pool = BasicPool::new(&samples);
        let cat = CompoundCatalog::standard();
        let cfg = SynthesisConfig {
            mode: MixMode::Proportional,
            ..SynthesisConfig::default()
        };
        let mut rng = RngStream::new(9).rng();
        for _ in 0..100 {
            let s = synthesize_compound(&pool, &cat, CompoundMethod::Cutmix, &cfg, &mut rng).unwrap();
            assert!(matching_entry(&cat, &s).is_some());
            let total: f64 = s.label.values().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_counts() {
        let samples = pool_of(&BasicClass::ALL, 50);
        let pool = BasicPool::new(&samples);
        let cat = CompoundCatalog::standard();
        let sources = BatchSources {
            basic: &pool,
            natural: &[],
            source: CompoundSource::balanced(true, true, false).unwrap(),
            synthesis: SynthesisConfig::default(),
            catalog: &cat,
        };
        let b = sample_batch(&sources, 0.2, 256, RngStream::new(1)).unwrap();
        assert_eq!(b.len(), 256);
        assert_eq!(b.iter().filter(|s| s.is_compound()).count(), 51);
        let b = sample_batch(&sources, 0.0, 64, RngStream::new(1)).unwrap();
        assert!(b.iter().all(|s| !s.is_compound()));
        let b = sample_batch(&sources, 1.0, 64, RngStream::new(1)).unwrap();
        assert!(b.iter().all(|s| s.is_compound()));
        assert!(matches!(
            sample_batch(&sources, 0.0, 301, RngStream::new(1)),
            Err(Error::InsufficientPool { .. })
        ));
        assert!(sample_batch(&sources, 0.0, 0, RngStream::new(1)).is_err());
    }

    #[test]
    fn natural_source_requires_pool() {
        let src = CompoundSource::balanced(true, true, true).unwrap();
        assert_eq!(src.natural, 0.5);
        assert_eq!(src.mixup, 0.25);
        assert!(src.validate(0).is_err());
        assert!(src.validate(3).is_ok());
        assert!(CompoundSource::balanced(false, false, false).is_err());
    }

    #[test]
    fn iterator_stage_one_needs_no_compound_source() {
        let samples = pool_of(&BasicClass::ALL, 4);
        let pool = BasicPool::new(&samples);
        let cat = CompoundCatalog::standard();
        let sources = BatchSources {
            basic: &pool,
            natural: &[],
            source: CompoundSource {
                mixup: 0.0,
                cutmix: 0.0,
                natural: 1.0,
            },
            synthesis: SynthesisConfig::default(),
            catalog: &cat,
        };
        let sched = CurriculumSchedule::from_arrays(&[2], &[0.0]).unwrap();
        let it = StageIterator::new(&sched, sources, 8, 3, RngStream::new(0)).unwrap();
        let batches: Vec<_> = it.collect::<Result<_>>().unwrap();
        assert_eq!(batches.len(), 6);
    }

    #[test]
    fn resumed_iterator_matches_tail() {
        let samples = pool_of(&BasicClass::ALL, 4);
        let pool = BasicPool::new(&samples);
        let cat = CompoundCatalog::standard();
        let sources = BatchSources {
            basic: &pool,
            natural: &[],
            source: CompoundSource::balanced(true, true, false).unwrap(),
            synthesis: SynthesisConfig::default(),
            catalog: &cat,
        };
        let sched = CurriculumSchedule::from_arrays(&[1, 2], &[0.0, 0.5]).unwrap();
        let full: Vec<_> = StageIterator::new(&sched, sources, 6, 2, RngStream::new(4))
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        let tail: Vec<_> = StageIterator::starting_at(&sched, sources, 6, 2, RngStream::new(4), 2)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(tail.len(), 4);
        for (a, b) in full[2..].iter().zip(&tail) {
            assert_eq!(a.epoch, b.epoch);
            assert_eq!(a.samples, b.samples);
        }
    }
}
