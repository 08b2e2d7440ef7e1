//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            8  bytes  "TBCFCKPT"
//! format version   u32       currently 1
//! schema hash      u64       fingerprint of the table schema
//! seed             u64       run seed the artifacts were produced under
//! meta count       u32
//!   per entry:     name (u32 length + utf-8 bytes), value u64
//! section count    u32
//!   per section:   name (u32 length + utf-8 bytes), block count u32
//!     per block:   name (u32 length + utf-8 bytes),
//!                  ndim u32, dims (u64 each),
//!                  values (f64 little-endian, prod(dims) of them)
//! ```
//!
//! Floats that are conceptually metadata (like the Gumbel temperature)
//! ride in the u64 meta table via `f64::to_bits`.

use crate::autodiff::Tensor;
use crate::blackbox::Classifier;
use crate::dataset::Preprocessor;
use crate::vae::{VaeArch, VaeModel};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"TBCFCKPT";
const VERSION: u32 = 1;

#[derive(Debug)]
pub enum CheckpointError {
    Io { path: String, source: std::io::Error },
    BadMagic,
    UnsupportedVersion { found: u32 },
    Corrupt(String),
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io { path, source } => write!(f, "io error on {path}: {source}"),
            CheckpointError::BadMagic => write!(f, "not a checkpoint file (magic mismatch)"),
            CheckpointError::UnsupportedVersion { found } => {
                write!(f, "checkpoint format version {found} not supported (expected {VERSION})")
            }
            CheckpointError::Corrupt(msg) => write!(f, "corrupt checkpoint: {msg}"),
        }
    }
}

impl std::error::Error for CheckpointError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CheckpointError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub blocks: Vec<Block>,
}

impl Section {
    pub fn block(&self, name: &str) -> Option<&Block> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub schema_hash: u64,
    pub seed: u64,
    pub meta: Vec<(String, u64)>,
    pub sections: Vec<Section>,
}

impl Checkpoint {
    pub fn new(schema_hash: u64, seed: u64) -> Checkpoint {
        Checkpoint { schema_hash, seed, meta: Vec::new(), sections: Vec::new() }
    }

    pub fn put_meta_u64(&mut self, name: &str, value: u64) {
        self.meta.push((name.to_string(), value));
    }

    pub fn put_meta_f64(&mut self, name: &str, value: f64) {
        self.meta.push((name.to_string(), value.to_bits()));
    }

    pub fn meta_u64(&self, name: &str) -> Option<u64> {
        self.meta.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn meta_f64(&self, name: &str) -> Option<f64> {
        self.meta_u64(name).map(f64::from_bits)
    }

    pub fn section(&self, name: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.name == name)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&self.schema_hash.to_le_bytes());
        buf.extend_from_slice(&self.seed.to_le_bytes());
        write_u32(&mut buf, self.meta.len());
        for (name, value) in &self.meta {
            write_str(&mut buf, name);
            buf.extend_from_slice(&value.to_le_bytes());
        }
        write_u32(&mut buf, self.sections.len());
        for section in &self.sections {
            write_str(&mut buf, &section.name);
            write_u32(&mut buf, section.blocks.len());
            for block in &section.blocks {
                write_str(&mut buf, &block.name);
                write_u32(&mut buf, block.shape.len());
                for &d in &block.shape {
                    buf.extend_from_slice(&(d as u64).to_le_bytes());
                }
                for v in &block.values {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        let mut r = Reader { bytes: &bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.read_u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion { found: version });
        }
        let schema_hash = r.read_u64()?;
        let seed = r.read_u64()?;
        let n_meta = r.read_u32()? as usize;
        let mut meta = Vec::with_capacity(n_meta);
        for _ in 0..n_meta {
            let name = r.read_str()?;
            meta.push((name, r.read_u64()?));
        }
        let n_sections = r.read_u32()? as usize;
        let mut sections = Vec::with_capacity(n_sections);
        for _ in 0..n_sections {
            let name = r.read_str()?;
            let n_blocks = r.read_u32()? as usize;
            let mut blocks = Vec::with_capacity(n_blocks);
            for _ in 0..n_blocks {
                let bname = r.read_str()?;
                let ndim = r.read_u32()? as usize;
                if ndim > 8 {
                    return Err(CheckpointError::Corrupt(format!(
                        "block '{bname}' claims {ndim} dimensions"
                    )));
                }
                let mut shape = Vec::with_capacity(ndim);
                for _ in 0..ndim {
                    shape.push(r.read_u64()? as usize);
                }
                let numel: usize = shape.iter().product();
                if numel > 100_000_000 {
                    return Err(CheckpointError::Corrupt(format!(
                        "block '{bname}' claims {numel} values"
                    )));
                }
                let mut values = Vec::with_capacity(numel);
                for _ in 0..numel {
                    values.push(f64::from_le_bytes(
                        r.take(8)?.try_into().expect("8-byte slice"),
                    ));
                }
                blocks.push(Block { name: bname, shape, values });
            }
            sections.push(Section { name, blocks });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Corrupt(format!(
                "{} trailing bytes after the last section",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint { schema_hash, seed, meta, sections })
    }
}

fn write_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn write_str(buf: &mut Vec<u8>, s: &str) {
    write_u32(buf, s.len());
    buf.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Corrupt("file truncated".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn read_u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4-byte slice")))
    }

    fn read_u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8-byte slice")))
    }

    fn read_str(&mut self) -> Result<String, CheckpointError> {
        let len = self.read_u32()? as usize;
        if len > 4096 {
            return Err(CheckpointError::Corrupt(format!("name of {len} bytes")));
        }
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| CheckpointError::Corrupt("name is not utf-8".into()))
    }
}

// ── Model glue ──────────────────────────────────────────────────────────

fn tensors_to_section(name: &str, named: &[(String, Tensor)]) -> Section {
    Section {
        name: name.to_string(),
        blocks: named
            .iter()
            .map(|(n, t)| Block {
                name: n.clone(),
                shape: t.shape().to_vec(),
                values: t.to_vec(),
            })
            .collect(),
    }
}

fn fill_tensors_from_section(
    section: &Section,
    named: &[(String, Tensor)],
) -> Result<(), CheckpointError> {
    if section.blocks.len() != named.len() {
        return Err(CheckpointError::Corrupt(format!(
            "section '{}' holds {} blocks, model expects {}",
            section.name,
            section.blocks.len(),
            named.len()
        )));
    }
    for (name, tensor) in named {
        let block = section
            .block(name)
            .ok_or_else(|| CheckpointError::Corrupt(format!("missing block '{name}'")))?;
        if block.shape != tensor.shape() {
            return Err(CheckpointError::Corrupt(format!(
                "block '{name}' has shape {:?}, model expects {:?}",
                block.shape,
                tensor.shape()
            )));
        }
        tensor
            .set_values(block.values.clone())
            .map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
    }
    Ok(())
}

pub const SECTION_VAE: &str = "vae";
pub const SECTION_CLASSIFIER: &str = "classifier";
pub const SECTION_PREPROCESSOR: &str = "preprocessor";

/// Appends the VAE parameters and architecture metadata to a checkpoint.
pub fn store_vae(ckpt: &mut Checkpoint, model: &VaeModel) {
    ckpt.put_meta_u64("vae.n_layers", model.arch.n_layers as u64);
    ckpt.put_meta_u64("vae.n_heads", model.arch.n_heads as u64);
    ckpt.put_meta_u64("vae.d", model.arch.d as u64);
    ckpt.put_meta_u64("vae.m", model.arch.m as u64);
    ckpt.put_meta_u64("vae.d_z", model.arch.d_z as u64);
    ckpt.put_meta_f64("vae.temperature", model.temperature);
    ckpt.sections
        .push(tensors_to_section(SECTION_VAE, &model.named_params()));
}

/// Rebuilds the VAE from a checkpoint; the layout must come from the same
/// schema the checkpoint was written under.
pub fn load_vae(
    ckpt: &Checkpoint,
    layout: &crate::dataset::SchemaLayout,
) -> Result<VaeModel, CheckpointError> {
    let need = |name: &str| {
        ckpt.meta_u64(name)
            .ok_or_else(|| CheckpointError::Corrupt(format!("missing meta '{name}'")))
    };
    let arch = VaeArch {
        n_layers: need("vae.n_layers")? as usize,
        n_heads: need("vae.n_heads")? as usize,
        d: need("vae.d")? as usize,
        m: need("vae.m")? as usize,
        d_z: need("vae.d_z")? as usize,
    };
    let temperature = ckpt
        .meta_f64("vae.temperature")
        .ok_or_else(|| CheckpointError::Corrupt("missing meta 'vae.temperature'".into()))?;
    let section = ckpt
        .section(SECTION_VAE)
        .ok_or_else(|| CheckpointError::Corrupt("missing vae section".into()))?;
    let model = VaeModel::init(layout, arch, temperature, 0);
    fill_tensors_from_section(section, &model.named_params())?;
    Ok(model)
}

/// Appends the classifier parameters to a checkpoint.
pub fn store_classifier(ckpt: &mut Checkpoint, clf: &Classifier) {
    ckpt.sections
        .push(tensors_to_section(SECTION_CLASSIFIER, &clf.named_params()));
}

pub fn load_classifier(ckpt: &Checkpoint) -> Result<Classifier, CheckpointError> {
    let section = ckpt
        .section(SECTION_CLASSIFIER)
        .ok_or_else(|| CheckpointError::Corrupt("missing classifier section".into()))?;
    let w1 = section
        .block("w1")
        .ok_or_else(|| CheckpointError::Corrupt("missing block 'w1'".into()))?;
    if w1.shape.len() != 2 {
        return Err(CheckpointError::Corrupt("block 'w1' must be 2-D".into()));
    }
    let clf = Classifier::init(w1.shape[0], w1.shape[1], 0);
    fill_tensors_from_section(section, &clf.named_params())?;
    Ok(clf)
}

/// Appends the fitted preprocessing statistics to a checkpoint.
pub fn store_preprocessor(ckpt: &mut Checkpoint, pre: &Preprocessor) {
    let n = pre.num_min.len();
    let vec_block = |name: &str, values: Vec<f64>| Block {
        name: name.to_string(),
        shape: vec![n],
        values,
    };
    ckpt.sections.push(Section {
        name: SECTION_PREPROCESSOR.to_string(),
        blocks: vec![
            vec_block("num_min", pre.num_min.clone()),
            vec_block("num_max", pre.num_max.clone()),
            vec_block("num_mean", pre.num_mean.clone()),
            vec_block("num_std", pre.num_std.clone()),
            vec_block(
                "constant",
                pre.constant.iter().map(|&c| f64::from(u8::from(c))).collect(),
            ),
        ],
    });
}

pub fn load_preprocessor(ckpt: &Checkpoint) -> Result<Preprocessor, CheckpointError> {
    let section = ckpt
        .section(SECTION_PREPROCESSOR)
        .ok_or_else(|| CheckpointError::Corrupt("missing preprocessor section".into()))?;
    let get = |name: &str| -> Result<Vec<f64>, CheckpointError> {
        Ok(section
            .block(name)
            .ok_or_else(|| CheckpointError::Corrupt(format!("missing block '{name}'")))?
            .values
            .clone())
    };
    Ok(Preprocessor {
        num_min: get("num_min")?,
        num_max: get("num_max")?,
        num_mean: get("num_mean")?,
        num_std: get("num_std")?,
        constant: get("constant")?.iter().map(|&v| v != 0.0).collect(),
    })
}
