//! Labels, ingestion, splits and the synthetic glyph dataset.

pub mod dataset;
pub mod image;
pub mod labels;
pub mod synthetic;

pub use dataset::{
    filter_neutral, load_manifest, parse_manifest, split, write_manifest, DatasetSplit,
    ManifestRow, Sample, SampleSource, MANIFEST_HEADER,
};
pub use labels::{BasicClass, CompoundCatalog, CompoundEntry, LabelVector};
pub use synthetic::{generate_compound, generate_synthetic, write_dataset, SyntheticConfig};
