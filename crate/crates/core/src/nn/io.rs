//! Binary model file, little-endian throughout.
//!
//! ```text
//! header   "GTAG"                      4 bytes
//!          format version              u32
//! config   seq_len                     u32
//!          embedding_dim               u32
//!          filter width count, widths  u32, u32 each
//!          feature_maps                u32
//!          pool_window                 u32
//!          conv_depth                  u32
//!          dense_depth                 u32
//!          dense_hidden                u32
//!          dropout                     f64
//!          learning_rate               f64
//!          batch_size                  u32
//!          epochs                      u32
//!          threshold                   f64
//!          embeddings_trainable        u8
//!          seed                        u64
//! vocab    word count                  u32
//!          per word: byte length u32, UTF-8 bytes (index order)
//! body     f32 arrays: embedding rows, then per branch (ascending width)
//!          per layer weights then bias, then each dense layer weights then
//!          bias, then output weights then bias
//! trailer  CRC32 (IEEE) of the body    u32
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Model, ModelConfig, NnError};
use crate::embedding::{EmbeddingMatrix, Vocabulary};

pub const MAGIC: &[u8; 4] = b"GTAG";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model file (bad magic bytes)")]
    BadMagic,
    #[error("unsupported model format version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("model body checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("model file is truncated")]
    Truncated,
    #[error("{0} unexpected trailing bytes after the checksum")]
    TrailingData(usize),
    #[error("invalid model contents: {0}")]
    Invalid(String),
}

impl From<NnError> for ModelFileError {
    fn from(e: NnError) -> Self {
        ModelFileError::Invalid(e.to_string())
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("field fits in u32").to_le_bytes());
}

pub fn write_model(model: &Model) -> Vec<u8> {
    let c = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut out, c.seq_len);
    put_u32(&mut out, c.embedding_dim);
    put_u32(&mut out, c.filter_widths.len());
    for &w in &c.filter_widths {
        put_u32(&mut out, w);
    }
    put_u32(&mut out, c.feature_maps);
    put_u32(&mut out, c.pool_window);
    put_u32(&mut out, c.conv_depth);
    put_u32(&mut out, c.dense_depth);
    put_u32(&mut out, c.dense_hidden);
    out.extend_from_slice(&c.dropout.to_le_bytes());
    out.extend_from_slice(&c.learning_rate.to_le_bytes());
    put_u32(&mut out, c.batch_size);
    put_u32(&mut out, c.epochs);
    out.extend_from_slice(&c.threshold.to_le_bytes());
    out.push(u8::from(c.embeddings_trainable));
    out.extend_from_slice(&c.seed.to_le_bytes());

    let words = model.vocab().words();
    put_u32(&mut out, words.len());
    for w in words {
        put_u32(&mut out, w.len());
        out.extend_from_slice(w.as_bytes());
    }

    let body_start = out.len();
    let arrays = std::iter::once(model.embedding().as_slice()).chain(model.param_groups());
    for v in arrays.flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&out[body_start..]);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), ModelFileError> {
    let bytes = write_model(model);
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&bytes))
        .map_err(|source| ModelFileError::Io {
            path: path.to_path_buf(),
            source,
        })
}

pub fn load_model(path: &Path) -> Result<Model, ModelFileError> {
    let bytes = fs::read(path).map_err(|source| ModelFileError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_model(&bytes)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelFileError> {
        let end = self.pos.checked_add(n).ok_or(ModelFileError::Truncated)?;
        let s = self.buf.get(self.pos..end).ok_or(ModelFileError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize, ModelFileError> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> Result<u64, ModelFileError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ModelFileError> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

pub fn read_model(bytes: &[u8]) -> Result<Model, ModelFileError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| ModelFileError::BadMagic)? != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(ModelFileError::UnsupportedVersion(version));
    }

    let seq_len = r.usize()?;
    let embedding_dim = r.usize()?;
    let n_widths = r.usize()?;
    if n_widths > r.remaining() / 4 {
        return Err(ModelFileError::Truncated);
    }
    let filter_widths = (0..n_widths).map(|_| r.usize()).collect::<Result<Vec<_>, _>>()?;
    let config = ModelConfig {
        seq_len,
        embedding_dim,
        filter_widths,
        feature_maps: r.usize()?,
        pool_window: r.usize()?,
        conv_depth: r.usize()?,
        dense_depth: r.usize()?,
        dense_hidden: r.usize()?,
        dropout: r.f64()?,
        learning_rate: r.f64()?,
        batch_size: r.usize()?,
        epochs: r.usize()?,
        threshold: r.f64()?,
        embeddings_trainable: r.take(1)?[0] != 0,
        seed: r.u64()?,
    };
    config.validate().map_err(|e| ModelFileError::Invalid(e.to_string()))?;

    let n_words = r.usize()?;
    if n_words > r.remaining() / 4 {
        return Err(ModelFileError::Truncated);
    }
    let mut words = Vec::with_capacity(n_words);
    for _ in 0..n_words {
        let len = r.usize()?;
        let raw = r.take(len)?;
        let word = std::str::from_utf8(raw).map_err(|e| ModelFileError::Invalid(format!("vocabulary: {e}")))?;
        words.push(word.to_string());
    }
    let vocab = Vocabulary::from_words(words).map_err(|e| ModelFileError::Invalid(e.to_string()))?;

    // Shapes come from a freshly built model so the body length is known
    // before touching it.
    let embedding_len = vocab.len() * config.embedding_dim;
    let skeleton = Model::new(
        config.clone(),
        vocab.clone(),
        EmbeddingMatrix::zeros(vocab.len(), config.embedding_dim),
    )?;
    let group_lens: Vec<usize> = skeleton.param_groups().iter().map(|g| g.len()).collect();
    let body_len = 4 * (embedding_len + group_lens.iter().sum::<usize>());
    if r.remaining() < body_len + 4 {
        return Err(ModelFileError::Truncated);
    }
    let body = r.take(body_len)?;
    let stored = r.u32()?;
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ModelFileError::ChecksumMismatch { stored, computed });
    }
    if r.remaining() > 0 {
        return Err(ModelFileError::TrailingData(r.remaining()));
    }

    let mut floats = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let embedding: Vec<f32> = floats.by_ref().take(embedding_len).collect();
    let groups: Vec<Vec<f32>> = group_lens.iter().map(|&n| floats.by_ref().take(n).collect()).collect();
    let embedding = EmbeddingMatrix::from_raw(config.embedding_dim, embedding);
    Ok(Model::from_parts(config, vocab, embedding, groups)?)
}
