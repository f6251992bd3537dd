//! JSON run configuration.
//!
//! Every field has a default, so `{}` is a valid config: the four-stage
//! schedule on a generated glyph dataset. Relative data paths are resolved
//! against the directory of the config file by [`RunConfig::load`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{BasicAugmentConfig, LambdaSpec, MixMode, CUTOUT_FILL};
use crate::curriculum::{CompoundSource, CurriculumSchedule, SynthesisConfig};
use crate::data::synthetic::{SyntheticConfig, CHANNELS};
use crate::error::{config_err, Result};
use crate::nn::{ModelSpec, OptimizerConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Widths of the hidden ReLU layers.
    pub hidden_units: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_units: vec![128, 64],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixupConfig {
    pub enabled: bool,
    pub lambda: LambdaSpec,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            lambda: LambdaSpec::Fixed(0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutmixConfig {
    pub enabled: bool,
    pub lambda: LambdaSpec,
}

impl Default for CutmixConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            lambda: LambdaSpec::Uniform(0.3, 0.7),
        }
    }
}

/// Augmentation applied to basic samples in every batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub flip_p: f64,
    pub jitter_strength: f64,
    pub crop_scale: f64,
    /// Side of the cutout square; 0 disables cutout.
    pub cutout_size: usize,
    pub cutout_fill: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        let basic = BasicAugmentConfig::default();
        Self {
            flip_p: basic.flip_p,
            jitter_strength: basic.jitter_strength,
            crop_scale: basic.crop_scale,
            cutout_size: 8,
            cutout_fill: CUTOUT_FILL,
        }
    }
}

impl AugmentConfig {
    pub fn basic(&self) -> BasicAugmentConfig {
        BasicAugmentConfig {
            flip_p: self.flip_p,
            jitter_strength: self.jitter_strength,
            crop_scale: self.crop_scale,
        }
    }

    /// No augmentation at all.
    pub fn none() -> Self {
        Self {
            flip_p: 0.0,
            jitter_strength: 0.0,
            crop_scale: 1.0,
            cutout_size: 0,
            cutout_fill: CUTOUT_FILL,
        }
    }
}

/// Generated glyph data, used when no training manifest is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDataConfig {
    pub n_per_class: usize,
    /// Natural compound validation samples per catalog entry.
    pub n_val_per_entry: usize,
    pub noise_sigma: f64,
    /// Weight range of one constituent in natural compound glyphs.
    pub compound_weight: [f64; 2],
    /// Dataset seed; the run seed when absent.
    pub seed: Option<u64>,
}

impl Default for SyntheticDataConfig {
    fn default() -> Self {
        Self {
            n_per_class: 200,
            n_val_per_entry: 50,
            noise_sigma: 0.1,
            compound_weight: SyntheticConfig::default().compound_weight,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV manifest of training images. Rows with two or more positive
    /// classes form the natural compound pool.
    pub train_manifest: Option<PathBuf>,
    /// Directory image paths are relative to; the manifest's directory by default.
    pub image_root: Option<PathBuf>,
    /// Validation manifest; only its compound rows are scored.
    pub val_manifest: Option<PathBuf>,
    /// Held-out fraction of the training manifest when no validation manifest is given.
    pub val_fraction: f64,
    /// Compound samples per catalog entry synthesized from held-out basic
    /// images when no validation manifest is given.
    pub val_per_entry: usize,
    pub synthetic: SyntheticDataConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_manifest: None,
            image_root: None,
            val_manifest: None,
            val_fraction: 0.2,
            val_per_entry: 50,
            synthetic: SyntheticDataConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Images are resized to `resolution × resolution`.
    pub resolution: usize,
    pub model: ModelConfig,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    /// Batches per epoch; `ceil(|basic pool| / batch_size)` when absent.
    pub batches_per_epoch: Option<usize>,
    pub epoch_dis: Vec<usize>,
    pub compound_prop: Vec<f64>,
    pub mixup: MixupConfig,
    pub cutmix: CutmixConfig,
    pub mix_mode: MixMode,
    /// Only synthesize pairs that form a catalog entry.
    pub restrict_to_catalog: bool,
    /// Clear optimizer moments when a new stage begins.
    pub reset_optimizer_between_stages: bool,
    /// Explicit compound source weights; derived from the enabled mixers and
    /// the natural pool when absent.
    pub compound_source: Option<CompoundSource>,
    pub augment: AugmentConfig,
    pub data: DataConfig,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let schedule = CurriculumSchedule::default_four_stage();
        Self {
            seed: 0,
            resolution: 32,
            model: ModelConfig::default(),
            optimizer: OptimizerConfig::default(),
            batch_size: 64,
            batches_per_epoch: None,
            epoch_dis: schedule.epoch_dis(),
            compound_prop: schedule.compound_prop(),
            mixup: MixupConfig::default(),
            cutmix: CutmixConfig::default(),
            mix_mode: MixMode::Union,
            restrict_to_catalog: true,
            reset_optimizer_between_stages: false,
            compound_source: None,
            augment: AugmentConfig::default(),
            data: DataConfig::default(),
            output_dir: None,
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.data.train_manifest);
        resolve(base, &mut cfg.data.image_root);
        resolve(base, &mut cfg.data.val_manifest);
        resolve(base, &mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn schedule(&self) -> Result<CurriculumSchedule> {
        CurriculumSchedule::from_arrays(&self.epoch_dis, &self.compound_prop)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        ModelSpec::mlp([self.resolution, self.resolution, CHANNELS], &self.model.hidden_units)
    }

    pub fn synthesis(&self) -> SynthesisConfig {
        SynthesisConfig {
            mode: self.mix_mode,
            mixup_lambda: self.mixup.lambda,
            cutmix_lambda: self.cutmix.lambda,
            restrict_to_catalog: self.restrict_to_catalog,
        }
    }

    pub fn compound_source(&self, has_natural: bool) -> Result<CompoundSource> {
        match self.compound_source {
            Some(s) => Ok(s),
            None => CompoundSource::balanced(self.mixup.enabled, self.cutmix.enabled, has_natural),
        }
    }

    pub fn synthetic_data(&self) -> SyntheticConfig {
        SyntheticConfig {
            n_per_class: self.data.synthetic.n_per_class,
            resolution: self.resolution,
            noise_sigma: self.data.synthetic.noise_sigma,
            compound_weight: self.data.synthetic.compound_weight,
            seed: self.data.synthetic.seed.unwrap_or(self.seed),
        }
    }

    /// Checks everything that can be checked before any data is loaded,
    /// including that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        self.schedule()?;
        self.model_spec()?.validate()?;
        self.optimizer.validate()?;
        self.synthesis().validate()?;
        self.augment.basic().validate()?;
        if self.batch_size == 0 {
            return config_err("batch_size must be >= 1");
        }
        if self.batches_per_epoch == Some(0) {
            return config_err("batches_per_epoch must be >= 1");
        }
        if self.resolution == 0 {
            return config_err("resolution must be >= 1");
        }
        if self.augment.cutout_size > self.resolution {
            return config_err(format!(
                "cutout_size {} exceeds resolution {}",
                self.augment.cutout_size, self.resolution
            ));
        }
        if let Some(s) = &self.compound_source {
            s.validate(usize::MAX)?;
        }
        for (name, path) in [
            ("train_manifest", &self.data.train_manifest),
            ("image_root", &self.data.image_root),
            ("val_manifest", &self.data.val_manifest),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return config_err(format!("{name} {} does not exist", p.display()));
                }
            }
        }
        if self.data.train_manifest.is_none() {
            self.synthetic_data().validate()?;
            if self.data.synthetic.n_per_class == 0 || self.data.synthetic.n_val_per_entry == 0 {
                return config_err("synthetic n_per_class and n_val_per_entry must be >= 1");
            }
        } else if self.data.val_manifest.is_none() && !(self.data.val_fraction > 0.0 && self.data.val_fraction < 1.0) {
            return config_err("val_fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_is_default() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.epoch_dis, vec![5, 5, 3, 3]);
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig {
            seed: 7,
            mix_mode: MixMode::Proportional,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn mismatched_arrays_fail_validation() {
        let cfg = RunConfig::from_json(r#"{"epoch_dis": [5, 5], "compound_prop": [0]}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(RunConfig::from_json(r#"{"epochs": 3}"#).is_err());
    }

    #[test]
    fn missing_paths_fail_validation() {
        let cfg = RunConfig::from_json(r#"{"data": {"train_manifest": "/no/such/file.csv"}}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("m.csv"), "").unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"data": {"train_manifest": "m.csv"}, "output_dir": "out"}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.data.train_manifest.unwrap(), dir.path().join("m.csv"));
        assert_eq!(cfg.output_dir.unwrap(), dir.path().join("out"));
    }
}
