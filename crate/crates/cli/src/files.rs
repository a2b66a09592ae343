//! Binary file formats: corpora ("CMRR"), model checkpoints ("CMRM"), and
//! embedding indices ("CMRI").
//!
//! All integers and floats are little-endian. Decoding tracks byte offsets
//! so truncation and malformed payloads report exactly where the data ends.
//! Checkpoints store every parameter tensor as f32 in the fixed order given
//! by `ModelParams::tensors`, which makes save-load-save byte-exact.

use std::fs;
use std::path::Path;

use cmrr_core::corpus::{Corpus, Item, Modality};
use cmrr_core::index::EmbeddingIndex;
use cmrr_core::model::{LayerSkip, ModelConfig, ModelParams};

use crate::{CliError, Result};

pub const CORPUS_MAGIC: &[u8; 4] = b"CMRR";
pub const MODEL_MAGIC: &[u8; 4] = b"CMRM";
pub const INDEX_MAGIC: &[u8; 4] = b"CMRI";
pub const FORMAT_VERSION: u16 = 1;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CliError::Io(format!(
                "truncated file while reading {what}: data ends at byte offset {}",
                self.buf.len()
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        let b = self.take(8, what)?;
        let mut arr = [0u8; 8];
        arr.copy_from_slice(b);
        Ok(u64::from_le_bytes(arr))
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(count * 4, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn expect_magic(&mut self, magic: &[u8; 4], kind: &str) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != magic {
            return Err(CliError::Io(format!(
                "not a {kind} file: bad magic at offset 0"
            )));
        }
        let version = self.u16("version")?;
        if version != FORMAT_VERSION {
            return Err(CliError::Io(format!(
                "unsupported {kind} format version {version}"
            )));
        }
        Ok(())
    }

    fn expect_end(&self, kind: &str) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(CliError::Io(format!(
                "{kind} file has {} trailing bytes at offset {}",
                self.buf.len() - self.pos,
                self.pos
            )));
        }
        Ok(())
    }
}

fn push_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f32s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f32>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_corpus(corpus: &Corpus) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CORPUS_MAGIC);
    push_u16(&mut out, FORMAT_VERSION);
    push_u32(&mut out, corpus.feature_dim() as u32);
    push_u32(&mut out, corpus.items().len() as u32);
    for item in corpus.items() {
        if item.token_count() > u16::MAX as usize {
            return Err(CliError::Validation(format!(
                "item {} has {} tokens; the format caps at {}",
                item.id,
                item.token_count(),
                u16::MAX
            )));
        }
        push_u32(&mut out, item.id);
        out.push(item.modality.code());
        push_u16(&mut out, item.token_count() as u16);
        push_f32s(&mut out, item.raw_tokens().iter().copied());
    }
    push_u32(&mut out, corpus.gold().len() as u32);
    for &(image_id, caption_id) in corpus.gold() {
        push_u32(&mut out, image_id);
        push_u32(&mut out, caption_id);
    }
    Ok(out)
}

pub fn decode_corpus(bytes: &[u8]) -> Result<Corpus> {
    let mut r = Reader::new(bytes);
    r.expect_magic(CORPUS_MAGIC, "corpus")?;
    let dim = r.u32("feature_dim")? as usize;
    let item_count = r.u32("item count")? as usize;
    let mut items = Vec::with_capacity(item_count);
    for i in 0..item_count {
        let id = r.u32("item id")?;
        let modality_offset = r.pos;
        let modality_code = r.u8("modality")?;
        let modality = Modality::from_code(modality_code).ok_or_else(|| {
            CliError::Io(format!(
                "item {i}: invalid modality byte {modality_code} at offset {modality_offset}"
            ))
        })?;
        let tokens = r.u16("token count")? as usize;
        if tokens == 0 {
            return Err(CliError::Io(format!(
                "item {id}: zero tokens at offset {}",
                r.pos
            )));
        }
        let values = r.f32s(tokens * dim, "token payload")?;
        items.push(Item::new(id, modality, dim, values)?);
    }
    let gold_count = r.u32("gold count")? as usize;
    let mut gold = Vec::with_capacity(gold_count);
    for _ in 0..gold_count {
        let image_id = r.u32("gold image id")?;
        let caption_id = r.u32("gold caption id")?;
        gold.push((image_id, caption_id));
    }
    r.expect_end("corpus")?;
    Ok(Corpus::new(dim, items, gold)?)
}

pub fn save_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    fs::write(path, encode_corpus(corpus)?)?;
    Ok(())
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    decode_corpus(&bytes).map_err(|e| prefix_path(path, e))
}

fn prefix_path(path: &Path, err: CliError) -> CliError {
    match err {
        CliError::Io(msg) => CliError::Io(format!("{}: {msg}", path.display())),
        CliError::Validation(msg) => CliError::Io(format!("{}: {msg}", path.display())),
    }
}

pub fn encode_params(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    push_u16(&mut out, FORMAT_VERSION);
    let cfg = &params.config;
    push_u32(&mut out, cfg.feature_dim as u32);
    push_u32(&mut out, cfg.embed_dim as u32);
    push_u32(&mut out, cfg.trunk_layers as u32);
    out.push(cfg.layer_skip.code());
    push_u64(&mut out, cfg.seed);
    for tensor in params.tensors() {
        push_f32s(&mut out, tensor.iter().map(|&v| v as f32));
    }
    out
}

pub fn decode_params(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader::new(bytes);
    r.expect_magic(MODEL_MAGIC, "checkpoint")?;
    let feature_dim = r.u32("feature_dim")? as usize;
    let embed_dim = r.u32("embed_dim")? as usize;
    let trunk_layers = r.u32("trunk_layers")? as usize;
    let skip_offset = r.pos;
    let skip_code = r.u8("layer_skip")?;
    let layer_skip = LayerSkip::from_code(skip_code).ok_or_else(|| {
        CliError::Io(format!(
            "invalid layer_skip byte {skip_code} at offset {skip_offset}"
        ))
    })?;
    let seed = r.u64("seed")?;
    let config = ModelConfig {
        feature_dim,
        embed_dim,
        trunk_layers,
        layer_skip,
        seed,
    };
    let mut params = cmrr_core::model::init_params(&config)?;
    for tensor in params.tensors_mut() {
        let values = r.f32s(tensor.len(), "parameter tensor")?;
        for (dst, v) in tensor.iter_mut().zip(values) {
            if !v.is_finite() {
                return Err(CliError::Io(
                    "checkpoint contains a non-finite parameter".into(),
                ));
            }
            *dst = v as f64;
        }
    }
    r.expect_end("checkpoint")?;
    Ok(params)
}

pub fn save_params(path: &Path, params: &ModelParams) -> Result<()> {
    fs::write(path, encode_params(params))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    decode_params(&bytes).map_err(|e| prefix_path(path, e))
}

pub fn encode_index(index: &EmbeddingIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    push_u16(&mut out, FORMAT_VERSION);
    push_u32(&mut out, index.dim() as u32);
    push_u32(&mut out, index.len() as u32);
    for &id in index.ids() {
        push_u32(&mut out, id);
    }
    push_f32s(&mut out, index.vectors().iter().copied());
    out
}

pub fn decode_index(bytes: &[u8]) -> Result<EmbeddingIndex> {
    let mut r = Reader::new(bytes);
    r.expect_magic(INDEX_MAGIC, "index")?;
    let dim = r.u32("embed_dim")? as usize;
    let count = r.u32("count")? as usize;
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        ids.push(r.u32("id")?);
    }
    let vectors = r.f32s(count * dim, "vectors")?;
    r.expect_end("index")?;
    Ok(EmbeddingIndex::from_parts(ids, dim, vectors)?)
}

pub fn save_index(path: &Path, index: &EmbeddingIndex) -> Result<()> {
    fs::write(path, encode_index(index))?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<EmbeddingIndex> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    decode_index(&bytes).map_err(|e| prefix_path(path, e))
}
