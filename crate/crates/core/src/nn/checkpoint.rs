//! Model checkpoint files.
//!
//! Layout:
//!
//! ```text
//! CURRICOMP-CKPT-v1\n
//! <single-line JSON header>\n
//! <little-endian f64 payload>
//! ```
//!
//! The header holds the [`ModelSpec`], training metadata and the length of
//! each parameter array. The payload stores, in order, every dense layer's
//! weights and bias, followed by the optimizer moment buffers when present.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::model::{ModelSpec, ModelState};
use crate::nn::optim::{Optimizer, OptimizerConfig};

pub const CHECKPOINT_MAGIC: &str = "CURRICOMP-CKPT-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub state: ModelState,
    pub optimizer: Option<Optimizer>,
    /// Last completed epoch (1-based; 0 for an untrained model).
    pub epoch: usize,
    pub best_macro_f1: Option<f64>,
    /// The run configuration that produced this checkpoint, if any.
    pub run_config: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    epoch: usize,
    best_macro_f1: Option<f64>,
    optimizer: Option<OptimizerHeader>,
    run_config: Option<serde_json::Value>,
    /// `(in_dim, out_dim)` per dense layer.
    dense: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    config: OptimizerConfig,
    t: u64,
    has_first: bool,
    has_second: bool,
}

fn push_state(buf: &mut Vec<u8>, state: &ModelState) {
    for v in state.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn fill(&mut self, state: &mut ModelState) -> Result<()> {
        for v in state.iter_mut() {
            let (head, rest) = self
                .bytes
                .split_first_chunk::<8>()
                .ok_or_else(|| Error::Checkpoint("payload truncated".into()))?;
            *v = f64::from_le_bytes(*head);
            self.bytes = rest;
        }
        Ok(())
    }
}

impl Checkpoint {
    pub fn new(spec: ModelSpec, state: ModelState) -> Self {
        Self {
            spec,
            state,
            optimizer: None,
            epoch: 0,
            best_macro_f1: None,
            run_config: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.state.check_matches(&self.spec)?;
        let header = Header {
            spec: self.spec.clone(),
            epoch: self.epoch,
            best_macro_f1: self.best_macro_f1,
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader {
                config: o.config,
                t: o.t,
                has_first: o.first.is_some(),
                has_second: o.second.is_some(),
            }),
            run_config: self.run_config.clone(),
            dense: self.spec.dense_shapes(),
        };
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC.as_bytes());
        buf.push(b'\n');
        serde_json::to_writer(&mut buf, &header)?;
        buf.push(b'\n');
        push_state(&mut buf, &self.state);
        if let Some(o) = &self.optimizer {
            for moment in [&o.first, &o.second].into_iter().flatten() {
                push_state(&mut buf, moment);
            }
        }
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let magic_end = CHECKPOINT_MAGIC.len();
        if bytes.len() <= magic_end
            || &bytes[..magic_end] != CHECKPOINT_MAGIC.as_bytes()
            || bytes[magic_end] != b'\n'
        {
            return Err(Error::Checkpoint(format!(
                "missing {CHECKPOINT_MAGIC} header"
            )));
        }
        let rest = &bytes[magic_end + 1..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Checkpoint("unterminated header".into()))?;
        let header: Header = serde_json::from_slice(&rest[..nl])?;
        header.spec.validate()?;
        if header.dense != header.spec.dense_shapes() {
            return Err(Error::Checkpoint("layer shapes disagree with spec".into()));
        }
        let mut reader = Reader {
            bytes: &rest[nl + 1..],
        };
        let mut state = ModelState::zeros(&header.spec);
        reader.fill(&mut state)?;
        let optimizer = match header.optimizer {
            Some(h) => {
                let mut opt = Optimizer::new(h.config)?;
                opt.t = h.t;
                if h.has_first {
                    let mut m = ModelState::zeros(&header.spec);
                    reader.fill(&mut m)?;
                    opt.first = Some(m);
                }
                if h.has_second {
                    let mut v = ModelState::zeros(&header.spec);
                    reader.fill(&mut v)?;
                    opt.second = Some(v);
                }
                Some(opt)
            }
            None => None,
        };
        if !reader.bytes.is_empty() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after payload",
                reader.bytes.len()
            )));
        }
        if !state.all_finite() {
            return Err(Error::Checkpoint("non-finite parameters".into()));
        }
        Ok(Self {
            spec: header.spec,
            state,
            optimizer,
            epoch: header.epoch,
            best_macro_f1: header.best_macro_f1,
            run_config: header.run_config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut f = fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| {
            Error::Checkpoint(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_bytes(&bytes)
    }
}
