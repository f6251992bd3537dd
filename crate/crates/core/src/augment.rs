//! Image and label augmentation.
//!
//! Mixup and CutMix combine two samples into a compound one; cutout, flips,
//! colour jitter and random crops perturb single-expression samples. Every
//! function is pure given its inputs and the random generator it is handed.

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::data::dataset::{Sample, SampleSource};
use crate::data::image::{crop, dims, flip_horizontal, resize_bilinear};
use crate::data::labels::LabelVector;
use crate::error::{config_err, Error, Result};
use crate::nn::tensor::Tensor;
use crate::NUM_BASIC;

/// Threshold applied to each source's labels before a union.
pub const UNION_THRESHOLD: f64 = 0.5;
/// Default cutout fill (mid-gray).
pub const CUTOUT_FILL: f64 = 0.5;

/// How the labels of two mixed samples combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    /// `λ·y_a + (1 − λ)·y_b`.
    Proportional,
    /// Elementwise max of both sources' labels, each binarized at
    /// [`UNION_THRESHOLD`]. A source that contributes no pixels is ignored.
    Union,
}

/// How a mixing weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSpec {
    Fixed(f64),
    /// `Beta(α, α)`.
    Beta(f64),
    /// Uniform on `[lo, hi]`.
    Uniform(f64, f64),
}

impl LambdaSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LambdaSpec::Fixed(l) => (0.0..=1.0).contains(&l),
            LambdaSpec::Beta(a) => a > 0.0 && a.is_finite(),
            LambdaSpec::Uniform(lo, hi) => 0.0 <= lo && lo <= hi && hi <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            config_err(format!("invalid mixing weight {self:?}"))
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LambdaSpec::Fixed(l) => l,
            LambdaSpec::Beta(a) => Beta::new(a, a).expect("validated alpha").sample(rng),
            LambdaSpec::Uniform(lo, hi) if lo == hi => lo,
            LambdaSpec::Uniform(lo, hi) => rng.random_range(lo..=hi),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        config_err(format!("lambda must lie in [0, 1], got {lambda}"))
    }
}

fn check_same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape {
            expected: a.shape().to_vec(),
            actual: b.shape().to_vec(),
        });
    }
    Ok(())
}

/// Combines labels where `a` carries weight `weight_a` of the pixels.
pub fn mix_labels(a: &LabelVector, b: &LabelVector, weight_a: f64, mode: MixMode) -> LabelVector {
    match mode {
        MixMode::Proportional => {
            let mut v = [0.0; NUM_BASIC];
            for (i, slot) in v.iter_mut().enumerate() {
                *slot = weight_a * a.0[i] + (1.0 - weight_a) * b.0[i];
            }
            LabelVector(v)
        }
        MixMode::Union => {
            let mut v = [0.0; NUM_BASIC];
            if weight_a > 0.0 {
                for (slot, x) in v.iter_mut().zip(a.binarized(UNION_THRESHOLD).0) {
                    *slot = f64::max(*slot, x);
                }
            }
            if weight_a < 1.0 {
                for (slot, x) in v.iter_mut().zip(b.binarized(UNION_THRESHOLD).0) {
                    *slot = f64::max(*slot, x);
                }
            }
            LabelVector(v)
        }
    }
}

fn mixed_source(a: &Sample, b: &Sample, weight_a: f64) -> SampleSource {
    if weight_a >= 1.0 {
        a.source
    } else if weight_a <= 0.0 {
        b.source
    } else if a.label.argmax() != b.label.argmax() {
        SampleSource::SynthesizedCompound
    } else {
        a.source
    }
}

/// `image = λ·a + (1 − λ)·b`, labels per `mode`.
pub fn mixup(a: &Sample, b: &Sample, lambda: f64, mode: MixMode) -> Result<Sample> {
    check_lambda(lambda)?;
    check_same_shape(&a.image, &b.image)?;
    let data = a
        .image
        .data()
        .iter()
        .zip(b.image.data())
        .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
        .collect();
    Ok(Sample {
        image: Tensor::new(a.image.shape().to_vec(), data)?,
        label: mix_labels(&a.label, &b.label, lambda, mode),
        source: mixed_source(a, b, lambda),
        neutral: 0.0,
    })
}

/// Axis-aligned pixel rectangle, half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PatchRect {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl PatchRect {
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.top && y < self.top + self.height && x >= self.left && x < self.left + self.width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutMixOutput {
    pub sample: Sample,
    pub patch: PatchRect,
    /// Fraction of pixels still taken from `a`: `1 − patch_area / (H·W)`.
    pub lambda_hat: f64,
}

/// Draws a CutMix rectangle: side lengths `⌊H·√(1−λ)⌋ × ⌊W·√(1−λ)⌋`,
/// centre uniform over the image, clipped to the bounds.
pub fn cutmix_patch<R: Rng + ?Sized>(height: usize, width: usize, lambda: f64, rng: &mut R) -> PatchRect {
    let ratio = (1.0 - lambda).sqrt();
    let cut_h = (height as f64 * ratio).floor() as i64;
    let cut_w = (width as f64 * ratio).floor() as i64;
    let cy = rng.random_range(0..height) as i64;
    let cx = rng.random_range(0..width) as i64;
    let clip = |v: i64, hi: usize| v.clamp(0, hi as i64) as usize;
    let top = clip(cy - cut_h / 2, height);
    let bottom = clip(cy - cut_h / 2 + cut_h, height);
    let left = clip(cx - cut_w / 2, width);
    let right = clip(cx - cut_w / 2 + cut_w, width);
    PatchRect {
        top,
        left,
        height: bottom - top,
        width: right - left,
    }
}

/// Pastes `patch` of `b` onto `a`.
pub fn cutmix_with_patch(a: &Sample, b: &Sample, patch: PatchRect, mode: MixMode) -> Result<CutMixOutput> {
    check_same_shape(&a.image, &b.image)?;
    let (h, w, c) = dims(&a.image);
    if patch.top + patch.height > h || patch.left + patch.width > w {
        return config_err(format!("patch {patch:?} exceeds a {h}x{w} image"));
    }
    let mut data = a.image.data().to_vec();
    let src = b.image.data();
    for y in patch.top..patch.top + patch.height {
        let start = (y * w + patch.left) * c;
        let end = start + patch.width * c;
        data[start..end].copy_from_slice(&src[start..end]);
    }
    let lambda_hat = 1.0 - patch.area() as f64 / (h * w) as f64;
    Ok(CutMixOutput {
        sample: Sample {
            image: Tensor::new(a.image.shape().to_vec(), data)?,
            label: mix_labels(&a.label, &b.label, lambda_hat, mode),
            source: mixed_source(a, b, lambda_hat),
            neutral: 0.0,
        },
        patch,
        lambda_hat,
    })
}

/// CutMix with a randomly placed patch; labels use the recomputed `λ̂`.
pub fn cutmix<R: Rng + ?Sized>(
    a: &Sample,
    b: &Sample,
    lambda: f64,
    rng: &mut R,
    mode: MixMode,
) -> Result<CutMixOutput> {
    check_lambda(lambda)?;
    check_same_shape(&a.image, &b.image)?;
    let (h, w, _) = dims(&a.image);
    let patch = cutmix_patch(h, w, lambda, rng);
    cutmix_with_patch(a, b, patch, mode)
}

/// Fills a square `hole_size × hole_size` region with `fill`. The square is
/// placed uniformly among positions that keep it inside the image.
pub fn cutout<R: Rng + ?Sized>(img: &Tensor, rng: &mut R, hole_size: usize, fill: f64) -> Result<Tensor> {
    let (h, w, _) = dims(img);
    if hole_size > h.min(w) {
        return config_err(format!("hole_size {hole_size} exceeds image {h}x{w}"));
    }
    if hole_size == 0 {
        return Ok(img.clone());
    }
    let top = rng.random_range(0..=h - hole_size);
    let left = rng.random_range(0..=w - hole_size);
    Ok(cutout_at(
        img,
        PatchRect {
            top,
            left,
            height: hole_size,
            width: hole_size,
        },
        fill,
    ))
}

/// Fills `rect` with `fill` in every channel.
pub fn cutout_at(img: &Tensor, rect: PatchRect, fill: f64) -> Tensor {
    let (_, w, c) = dims(img);
    let mut out = img.clone();
    let data = out.data_mut();
    for y in rect.top..rect.top + rect.height {
        let start = (y * w + rect.left) * c;
        data[start..start + rect.width * c].fill(fill);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BasicAugmentConfig {
    /// Probability of a horizontal flip.
    pub flip_p: f64,
    /// Per-channel gain is drawn from `[1 − s, 1 + s]`.
    pub jitter_strength: f64,
    /// Area fraction of the random crop; 1 disables cropping.
    pub crop_scale: f64,
}

impl Default for BasicAugmentConfig {
    fn default() -> Self {
        Self {
            flip_p: 0.5,
            jitter_strength: 0.1,
            crop_scale: 0.9,
        }
    }
}

impl BasicAugmentConfig {
    pub fn identity() -> Self {
        Self {
            flip_p: 0.0,
            jitter_strength: 0.0,
            crop_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_p) {
            return config_err("flip_p must lie in [0, 1]");
        }
        if !(self.crop_scale > 0.0 && self.crop_scale <= 1.0) {
            return config_err("crop_scale must lie in (0, 1]");
        }
        if !(self.jitter_strength >= 0.0 && self.jitter_strength.is_finite()) {
            return config_err("jitter_strength must be nonnegative");
        }
        Ok(())
    }
}

/// Random flip, random crop (resized back to the input size), then
/// per-channel multiplicative colour jitter clipped to `[0, 1]`.
pub fn basic_augment<R: Rng + ?Sized>(sample: &Sample, rng: &mut R, config: &BasicAugmentConfig) -> Result<Sample> {
    config.validate()?;
    let (h, w, c) = dims(&sample.image);
    let mut img = sample.image.clone();

    if config.flip_p > 0.0 && rng.random_bool(config.flip_p) {
        img = flip_horizontal(&img);
    }

    if config.crop_scale < 1.0 {
        let side = config.crop_scale.sqrt();
        let ch = ((h as f64 * side).round() as usize).clamp(1, h);
        let cw = ((w as f64 * side).round() as usize).clamp(1, w);
        if ch < h || cw < w {
            let top = rng.random_range(0..=h - ch);
            let left = rng.random_range(0..=w - cw);
            img = resize_bilinear(&crop(&img, top, left, ch, cw), h, w);
        }
    }

    if config.jitter_strength > 0.0 {
        let s = config.jitter_strength;
        let gains: Vec<f64> = (0..c).map(|_| rng.random_range(1.0 - s..=1.0 + s)).collect();
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (*v * gains[i % c]).clamp(0.0, 1.0);
        }
    }

    Ok(Sample {
        image: img,
        ..sample.clone()
    })
}
