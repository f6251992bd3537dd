//! Labeled samples, CSV manifests, neutral filtering and train/val splits.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::image::{read_image, resize_bilinear};
use crate::data::labels::{BasicClass, LabelVector};
use crate::error::{config_err, Error, Result};
use crate::nn::tensor::Tensor;
use crate::NUM_BASIC;

/// Required manifest header.
pub const MANIFEST_HEADER: [&str; 8] = [
    "path",
    "anger",
    "disgust",
    "fear",
    "happiness",
    "sadness",
    "surprise",
    "neutral",
];

/// Where a sample came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSource {
    Basic,
    NaturalCompound,
    SynthesizedCompound,
}

/// An `H×W×C` image with values in `[0, 1]` and its multi-label target.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Tensor,
    pub label: LabelVector,
    pub source: SampleSource,
    /// The neutral cell from the manifest; anything above zero is dropped by
    /// [`filter_neutral`].
    pub neutral: f64,
}

impl Sample {
    pub fn basic(image: Tensor, class: BasicClass) -> Self {
        Self {
            image,
            label: LabelVector::one_hot(class),
            source: SampleSource::Basic,
            neutral: 0.0,
        }
    }

    pub fn is_compound(&self) -> bool {
        self.source != SampleSource::Basic
    }
}

/// Source tag implied by a label: one nonzero entry is basic, more is compound.
pub fn source_for_label(label: &LabelVector) -> SampleSource {
    if label.support().len() >= 2 {
        SampleSource::NaturalCompound
    } else {
        SampleSource::Basic
    }
}

/// A manifest row before its image is decoded.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub path: String,
    pub label: LabelVector,
    pub neutral: f64,
}

fn parse_cell(row: usize, name: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Ingestion {
        row,
        message: format!("column {name}: cannot parse {cell:?} as a number"),
    })?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Ingestion {
            row,
            message: format!("column {name}: label {v} outside [0, 1]"),
        });
    }
    Ok(v)
}

/// Parses manifest text. Row numbers in errors count data rows from 1.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    let found: Vec<&str> = header.iter().map(str::trim).collect();
    if found != MANIFEST_HEADER {
        return Err(Error::Ingestion {
            row: 0,
            message: format!(
                "header must be `{}`, got `{}`",
                MANIFEST_HEADER.join(","),
                found.join(",")
            ),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Ingestion {
            row,
            message: e.to_string(),
        })?;
        if record.len() != MANIFEST_HEADER.len() {
            return Err(Error::Ingestion {
                row,
                message: format!(
                    "expected {} cells, found {}",
                    MANIFEST_HEADER.len(),
                    record.len()
                ),
            });
        }
        let path = record[0].trim().to_string();
        if path.is_empty() {
            return Err(Error::Ingestion {
                row,
                message: "empty path".into(),
            });
        }
        let mut label = [0.0; NUM_BASIC];
        for (k, slot) in label.iter_mut().enumerate() {
            *slot = parse_cell(row, MANIFEST_HEADER[k + 1], &record[k + 1])?;
        }
        let neutral = parse_cell(row, "neutral", &record[7])?;
        let label = LabelVector(label);
        if neutral == 0.0 && label.support().is_empty() {
            return Err(Error::Ingestion {
                row,
                message: "row has no positive label".into(),
            });
        }
        rows.push(ManifestRow {
            path,
            label,
            neutral,
        });
    }
    Ok(rows)
}

/// Loads every manifest row, decoding images relative to `image_root` and
/// resizing them to `resolution × resolution` when given.
///
/// Images decode in parallel; output order always follows the manifest.
pub fn load_manifest(path: &Path, image_root: &Path, resolution: Option<usize>) -> Result<Vec<Sample>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Ingestion {
            row: 0,
            message: format!("cannot read manifest {}: {e}", path.display()),
        })?;
    let rows = parse_manifest(&text)?;
    rows.par_iter()
        .enumerate()
        .map(|(i, row)| {
            let img = read_image(&image_root.join(&row.path)).map_err(|e| Error::Ingestion {
                row: i + 1,
                message: e.to_string(),
            })?;
            let img = match resolution {
                Some(r) => resize_bilinear(&img, r, r),
                None => img,
            };
            Ok(Sample {
                image: img,
                label: row.label,
                source: source_for_label(&row.label),
                neutral: row.neutral,
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Writes a manifest with the standard header.
pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(MANIFEST_HEADER)?;
    for r in rows {
        let mut rec = vec![r.path.clone()];
        rec.extend(r.label.values().iter().map(|v| format_label(*v)));
        rec.push(format_label(r.neutral));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn format_label(v: f64) -> String {
    if v == v.trunc() {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Removes every sample whose neutral indicator is positive.
pub fn filter_neutral(samples: Vec<Sample>) -> Vec<Sample> {
    samples.into_iter().filter(|s| !(s.neutral > 0.0)).collect()
}

/// Train/validation partition given as indices into the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub seed: u64,
    /// False when some class had fewer than two samples and a global split was used.
    pub stratified: bool,
}

fn stratum(s: &Sample) -> usize {
    if s.label.support().is_empty() {
        NUM_BASIC
    } else {
        s.label.argmax().index()
    }
}

/// Splits `samples` into train and validation sets, stratified by dominant
/// label class. Deterministic for a given seed.
pub fn split(samples: &[Sample], val_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return config_err(format!("val_fraction must lie in (0, 1), got {val_fraction}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); NUM_BASIC + 1];
    for (i, s) in samples.iter().enumerate() {
        strata[stratum(s)].push(i);
    }
    let stratified = strata.iter().all(|g| g.is_empty() || g.len() >= 2);
    if !stratified {
        log::warn!("a class has fewer than 2 samples; falling back to an unstratified split");
        strata = vec![(0..samples.len()).collect()];
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for mut group in strata {
        group.shuffle(&mut rng);
        let n_val = (group.len() as f64 * val_fraction).round() as usize;
        val.extend_from_slice(&group[..n_val]);
        train.extend_from_slice(&group[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok(DatasetSplit {
        train,
        val,
        seed,
        stratified,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::image::write_ppm;

    fn sample(class: usize, neutral: f64) -> Sample {
        Sample {
            image: Tensor::filled(vec![2, 2, 3], class as f64 / 10.0),
            label: LabelVector::one_hot(BasicClass::ALL[class]),
            source: SampleSource::Basic,
            neutral,
        }
    }

    #[test]
    fn parse_happiness_row() {
        let rows = parse_manifest("path,anger,disgust,fear,happiness,sadness,surprise,neutral\na.ppm,0,0,0,1,0,0,0\n").unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].label, LabelVector::one_hot(BasicClass::Happiness));
        assert_eq!(source_for_label(&rows[0].label), SampleSource::Basic);
    }

    #[test]
    fn parse_soft_compound_and_neutral_rows() {
        let text = "path,anger,disgust,fear,happiness,sadness,surprise,neutral\n\
                    a.ppm,0,0,0.6,0,0,0.4,0\n\
                    b.ppm,0,0,0,0,0,0,1\n";
        let rows = parse_manifest(text).unwrap();
        assert_eq!(source_for_label(&rows[0].label), SampleSource::NaturalCompound);
        assert_eq!(rows[1].neutral, 1.0);
    }

    #[test]
    fn parse_errors_name_the_row() {
        let header = "path,anger,disgust,fear,happiness,sadness,surprise,neutral\n";
        let out_of_range = format!("{header}a.ppm,0,0,0,1,0,0,0\nb.ppm,0,0,0,1.5,0,0,0\n");
        match parse_manifest(&out_of_range) {
            Err(Error::Ingestion { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        let short = format!("{header}a.ppm,0,0,0,1,0,0\n");
        assert!(matches!(parse_manifest(&short), Err(Error::Ingestion { row: 1, .. })));
        let no_label = format!("{header}a.ppm,0,0,0,0,0,0,0\n");
        assert!(parse_manifest(&no_label).is_err());
        assert!(parse_manifest("file,a\nx,1\n").is_err());
    }

    #[test]
    fn load_reports_unreadable_row() {
        let dir = tempfile::tempdir().unwrap();
        let img = Tensor::filled(vec![4, 4, 3], 0.5);
        write_ppm(&dir.path().join("a.ppm"), &img).unwrap();
        write_ppm(&dir.path().join("c.ppm"), &img).unwrap();
        let manifest = dir.path().join("m.csv");
        fs::write(
            &manifest,
            "path,anger,disgust,fear,happiness,sadness,surprise,neutral\n\
             a.ppm,1,0,0,0,0,0,0\nb.ppm,0,1,0,0,0,0,0\nc.ppm,0,0,1,0,0,0,0\n",
        )
        .unwrap();
        match load_manifest(&manifest, dir.path(), None) {
            Err(Error::Ingestion { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn load_resizes() {
        let dir = tempfile::tempdir().unwrap();
        write_ppm(&dir.path().join("a.ppm"), &Tensor::filled(vec![8, 6, 3], 0.2)).unwrap();
        let manifest = dir.path().join("m.csv");
        write_manifest(
            &manifest,
            &[ManifestRow {
                path: "a.ppm".into(),
                label: LabelVector::one_hot(BasicClass::Fear),
                neutral: 0.0,
            }],
        )
        .unwrap();
        let s = load_manifest(&manifest, dir.path(), Some(4)).unwrap();
        assert_eq!(s[0].image.shape(), &[4, 4, 3]);
        assert_eq!(s[0].label, LabelVector::one_hot(BasicClass::Fear));
    }

    #[test]
    fn filter_neutral_counts() {
        let none: Vec<_> = (0..5).map(|i| sample(i % 6, 0.0)).collect();
        assert_eq!(filter_neutral(none.clone()), none);

        let mixed: Vec<_> = (0..10).map(|i| sample(i % 6, if i % 3 == 0 && i > 0 { 1.0 } else { 0.0 })).collect();
        let out = filter_neutral(mixed.clone());
        assert_eq!(out.len(), 7);
        assert_eq!(filter_neutral(out.clone()), out);

        let all: Vec<_> = (0..4).map(|i| sample(i, 1.0)).collect();
        assert!(filter_neutral(all).is_empty());
    }

    #[test]
    fn balanced_split_is_stratified_and_deterministic() {
        let samples: Vec<_> = (0..100).map(|i| sample(i % 5, 0.0)).collect();
        let s = split(&samples, 0.2, 3).unwrap();
        assert!(s.stratified);
        assert_eq!(s.train.len(), 80);
        assert_eq!(s.val.len(), 20);
        for class in 0..5 {
            let in_val = s.val.iter().filter(|&&i| i % 5 == class).count();
            assert_eq!(in_val, 4);
        }
        assert_eq!(split(&samples, 0.2, 3).unwrap(), s);
        assert_ne!(split(&samples, 0.2, 4).unwrap(), s);
    }

    #[test]
    fn split_rejects_bad_fraction_and_falls_back() {
        let samples: Vec<_> = (0..10).map(|i| sample(i % 2, 0.0)).collect();
        assert!(split(&samples, 0.0, 1).is_err());
        assert!(split(&samples, 1.0, 1).is_err());

        let mut lonely = samples.clone();
        lonely.push(sample(4, 0.0));
        let s = split(&lonely, 0.3, 1).unwrap();
        assert!(!s.stratified);
        assert_eq!(s.train.len() + s.val.len(), 11);
    }
}
