//! Procedural stand-in dataset.
//!
//! Every basic class is a family of mirror-symmetric oriented gratings
//! ("chevrons") with its own angle and spatial frequency. Each sample draws
//! a small jitter of angle, frequency, phase and contrast, then adds
//! Gaussian pixel noise and clips to `[0, 1]`. Horizontal flipping maps
//! every glyph onto the same family, like a face.
//!
//! Natural compound glyphs blend their two constituents unevenly: one side
//! gets a weight from `compound_weight`, so a basic-only classifier tends
//! to see just the dominant constituent.
//!
//! Pixel values are quantized to multiples of `1/255`, so writing a dataset
//! as PPM and reloading it is lossless.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::dataset::{write_manifest, ManifestRow, Sample, SampleSource};
use crate::data::image::{quantize, write_ppm};
use crate::data::labels::{BasicClass, CompoundCatalog, CompoundEntry, LabelVector};
use crate::error::{config_err, Result};
use crate::nn::tensor::Tensor;
use crate::rng::RngStream;

pub const CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub n_per_class: usize,
    pub resolution: usize,
    pub noise_sigma: f64,
    /// Range of the weight given to one constituent (chosen at random) of
    /// a compound glyph; the other gets the remainder.
    pub compound_weight: [f64; 2],
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_per_class: 200,
            resolution: 32,
            noise_sigma: 0.1,
            compound_weight: [0.2, 0.35],
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 16 {
            return config_err(format!("resolution must be >= 16, got {}", self.resolution));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return config_err("noise_sigma must be nonnegative");
        }
        let [lo, hi] = self.compound_weight;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return config_err(format!("compound_weight must satisfy 0 < lo <= hi < 1, got {:?}", self.compound_weight));
        }
        Ok(())
    }
}

/// Angle (degrees) and frequency (cycles per image) of each class's grating,
/// plus a per-channel gain.
struct Family {
    angle_deg: f64,
    cycles: f64,
    gain: [f64; CHANNELS],
}

fn family(class: BasicClass) -> Family {
    let (angle_deg, cycles, gain) = match class {
        BasicClass::Anger => (0.0, 3.0, [1.0, 0.8, 0.8]),
        BasicClass::Disgust => (90.0, 4.0, [0.8, 1.0, 0.8]),
        BasicClass::Fear => (40.0, 3.5, [0.8, 0.8, 1.0]),
        BasicClass::Happiness => (140.0, 3.5, [1.0, 1.0, 0.8]),
        BasicClass::Sadness => (65.0, 5.0, [0.8, 1.0, 1.0]),
        BasicClass::Surprise => (115.0, 2.5, [1.0, 0.8, 1.0]),
    };
    Family {
        angle_deg,
        cycles,
        gain,
    }
}

/// Noise-free jittered glyph, values centred on 0.5.
fn clean_glyph<R: Rng>(class: BasicClass, res: usize, rng: &mut R) -> Vec<f64> {
    let fam = family(class);
    let theta = (fam.angle_deg + rng.random_range(-4.0..=4.0)) * PI / 180.0;
    let cycles = fam.cycles * rng.random_range(0.95..=1.05);
    let phase = rng.random_range(-0.4..=0.4);
    let contrast = rng.random_range(0.7..=1.0);
    let (s, c) = theta.sin_cos();
    let centre = (res as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(res * res * CHANNELS);
    for y in 0..res {
        let v = (y as f64 - centre) / res as f64;
        for x in 0..res {
            let u = (x as f64 - centre).abs() / res as f64;
            let wave = (2.0 * PI * cycles * (u * c + v * s) + phase).cos();
            for g in fam.gain {
                out.push(0.5 + 0.4 * contrast * g * wave);
            }
        }
    }
    out
}

fn finish<R: Rng>(mut pixels: Vec<f64>, res: usize, noise_sigma: f64, rng: &mut R) -> Tensor {
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
        for p in &mut pixels {
            *p += normal.sample(rng);
        }
    }
    for p in &mut pixels {
        *p = quantize(*p) as f64 / 255.0;
    }
    Tensor::new(vec![res, res, CHANNELS], pixels).expect("sizes agree")
}

/// One basic-class glyph drawn from `stream`.
pub fn basic_glyph(class: BasicClass, res: usize, noise_sigma: f64, stream: RngStream) -> Tensor {
    let mut rng = stream.rng();
    let clean = clean_glyph(class, res, &mut rng);
    finish(clean, res, noise_sigma, &mut rng)
}

/// A weighted superposition of both constituents' glyphs, each with its own
/// jitter, plus noise. One constituent, picked at random, gets a weight drawn
/// from `weight_range`.
pub fn compound_glyph(
    entry: &CompoundEntry,
    res: usize,
    noise_sigma: f64,
    weight_range: [f64; 2],
    stream: RngStream,
) -> Tensor {
    let mut rng = stream.rng();
    let a = clean_glyph(entry.constituents[0], res, &mut rng);
    let b = clean_glyph(entry.constituents[1], res, &mut rng);
    let [lo, hi] = weight_range;
    let w = if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let w = if rng.random_bool(0.5) { w } else { 1.0 - w };
    let mixed = a.iter().zip(&b).map(|(x, y)| w * x + (1.0 - w) * y).collect();
    finish(mixed, res, noise_sigma, &mut rng)
}

/// `n_per_class` one-hot samples per basic class, grouped by class.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Vec<Sample>> {
    config.validate()?;
    let root = RngStream::new(config.seed).child("basic");
    let jobs: Vec<(BasicClass, usize)> = BasicClass::ALL
        .into_iter()
        .flat_map(|c| (0..config.n_per_class).map(move |i| (c, i)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(class, i)| {
            let stream = root.indices(&[class.index() as u64, i as u64]);
            Sample::basic(
                basic_glyph(class, config.resolution, config.noise_sigma, stream),
                class,
            )
        })
        .collect())
}

/// `n_per_entry` natural-compound samples per catalog entry, labelled with
/// both constituents set to 1. Returns each sample with its catalog index.
pub fn generate_compound(
    config: &SyntheticConfig,
    catalog: &CompoundCatalog,
    n_per_entry: usize,
) -> Result<Vec<(Sample, usize)>> {
    config.validate()?;
    let root = RngStream::new(config.seed).child("compound");
    let jobs: Vec<(usize, usize)> = (0..catalog.len())
        .flat_map(|k| (0..n_per_entry).map(move |i| (k, i)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(k, i)| {
            let entry = &catalog.entries()[k];
            let stream = root.indices(&[k as u64, i as u64]);
            let sample = Sample {
                image: compound_glyph(entry, config.resolution, config.noise_sigma, config.compound_weight, stream),
                label: LabelVector::from_classes(&entry.constituents),
                source: SampleSource::NaturalCompound,
                neutral: 0.0,
            };
            (sample, k)
        })
        .collect())
}

/// Writes samples as `images/<prefix>_<index>.ppm` under `dir` and a manifest
/// at `dir/<manifest_name>` whose paths are relative to `dir`.
pub fn write_dataset(dir: &Path, manifest_name: &str, prefix: &str, samples: &[Sample]) -> Result<Vec<ManifestRow>> {
    let images = dir.join("images");
    fs::create_dir_all(&images)?;
    let rows: Vec<ManifestRow> = samples
        .iter()
        .enumerate()
        .map(|(i, s)| ManifestRow {
            path: format!("images/{prefix}_{i:05}.ppm"),
            label: s.label,
            neutral: s.neutral,
        })
        .collect();
    rows.par_iter()
        .zip(samples.par_iter())
        .try_for_each(|(row, s)| write_ppm(&dir.join(&row.path), &s.image))?;
    write_manifest(&dir.join(manifest_name), &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::dataset::load_manifest;
    use crate::data::image::flip_horizontal;

    fn cfg(n: usize) -> SyntheticConfig {
        SyntheticConfig {
            n_per_class: n,
            resolution: 16,
            noise_sigma: 0.05,
            seed: 3,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn counts_and_labels() {
        let s = generate_synthetic(&cfg(10)).unwrap();
        assert_eq!(s.len(), 60);
        for class in BasicClass::ALL {
            let n = s.iter().filter(|x| x.label == LabelVector::one_hot(class)).count();
            assert_eq!(n, 10);
        }
        assert!(s
            .iter()
            .all(|x| x.image.data().iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn deterministic_given_seed() {
        let c = SyntheticConfig {
            noise_sigma: 0.0,
            ..cfg(3)
        };
        assert_eq!(generate_synthetic(&c).unwrap(), generate_synthetic(&c).unwrap());
        let noisy = cfg(3);
        assert_eq!(generate_synthetic(&noisy).unwrap(), generate_synthetic(&noisy).unwrap());
        let other = SyntheticConfig { seed: 4, ..noisy.clone() };
        assert_ne!(generate_synthetic(&noisy).unwrap(), generate_synthetic(&other).unwrap());
    }

    #[test]
    fn clean_glyphs_are_mirror_symmetric() {
        let c = SyntheticConfig {
            noise_sigma: 0.0,
            ..cfg(2)
        };
        for s in generate_synthetic(&c).unwrap() {
            assert_eq!(flip_horizontal(&s.image), s.image);
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(generate_synthetic(&SyntheticConfig { resolution: 8, ..cfg(1) }).is_err());
        assert!(generate_synthetic(&SyntheticConfig { noise_sigma: -1.0, ..cfg(1) }).is_err());
    }

    #[test]
    fn compound_labels_follow_catalog() {
        let cat = CompoundCatalog::standard();
        let s = generate_compound(&cfg(1), &cat, 2).unwrap();
        assert_eq!(s.len(), 14);
        for (sample, k) in &s {
            assert_eq!(cat.find(&sample.label.support()), Some(*k));
        }
    }

    #[test]
    fn manifest_round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let samples = generate_synthetic(&cfg(2)).unwrap();
        write_dataset(dir.path(), "manifest.csv", "basic", &samples).unwrap();
        let back = load_manifest(&dir.path().join("manifest.csv"), dir.path(), None).unwrap();
        assert_eq!(back, samples);
    }
}
