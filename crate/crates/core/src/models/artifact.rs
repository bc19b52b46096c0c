//! Binary model artifact.
//!
//! Single-file format shared by both router kinds:
//!
//! ```text
//! offset 0   magic "GQRM"
//!        4   format version, u32 LE (currently 1)
//!        8   model kind, u8 (1 = mlp, 2 = linear)
//!        9   section count, u32 LE
//!        13  section table: per section, tag u32 LE + absolute offset
//!            u64 LE + length u64 LE
//!        ... section payloads
//!        end-4  CRC-32 (IEEE) over every preceding byte, u32 LE
//! ```
//!
//! All integers and floats are little-endian; weights are 32-bit floats,
//! which is why saving is provided for `f32`-backed models only: a load
//! must reproduce bit-exact weights, and therefore bit-identical routing.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::scalar::Scalar;
use crate::text::Vocabulary;

use super::linear::{LinearModel, LinearOptions};
use super::mlp::MlpModel;
use super::{ModelError, RouteDecision, RouteError, Router};

pub const MAGIC: [u8; 4] = *b"GQRM";
pub const FORMAT_VERSION: u32 = 1;

const KIND_MLP: u8 = 1;
const KIND_LINEAR: u8 = 2;

const TAG_DOMAINS: [u8; 4] = *b"DOMS";
const TAG_VOCAB: [u8; 4] = *b"VOCB";
const TAG_HYPER: [u8; 4] = *b"HYPR";
const TAG_EMBEDDING: [u8; 4] = *b"EMBD";
const TAG_HIDDEN_BIAS: [u8; 4] = *b"HBIA";
const TAG_OUTPUT_WEIGHTS: [u8; 4] = *b"OUTW";
const TAG_OUTPUT_BIAS: [u8; 4] = *b"OBIA";
const TAG_WEIGHTS: [u8; 4] = *b"WGTS";
const TAG_BIAS: [u8; 4] = *b"BIAS";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: not a model file (bad magic)", path.display())]
    NotAModelFile { path: PathBuf },
    #[error("{}: unsupported artifact version {found} (expected {FORMAT_VERSION})", path.display())]
    Version { path: PathBuf, found: u32 },
    #[error("{}: checksum mismatch (stored {stored:08x}, computed {computed:08x})", path.display())]
    Checksum { path: PathBuf, stored: u32, computed: u32 },
    #[error("{}: malformed artifact: {message}", path.display())]
    Malformed { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Either trained router kind behind one dispatch point.
#[derive(Debug, Clone, PartialEq)]
pub enum GuardedModel<S> {
    Mlp(MlpModel<S>),
    Linear(LinearModel<S>),
}

impl<S: Scalar> GuardedModel<S> {
    pub fn kind(&self) -> &'static str {
        match self {
            GuardedModel::Mlp(_) => "mlp",
            GuardedModel::Linear(_) => "linear",
        }
    }

    pub fn threshold(&self) -> f64 {
        match self {
            GuardedModel::Mlp(m) => m.threshold(),
            GuardedModel::Linear(m) => m.threshold(),
        }
    }

    /// Serve-time gate re-parameterization; weights are untouched.
    pub fn set_threshold(&mut self, threshold: f64) -> Result<(), ModelError> {
        match self {
            GuardedModel::Mlp(m) => m.set_threshold(threshold),
            GuardedModel::Linear(m) => m.set_threshold(threshold),
        }
    }
}

impl<S: Scalar> Router for GuardedModel<S> {
    fn domains(&self) -> &[String] {
        match self {
            GuardedModel::Mlp(m) => m.domains(),
            GuardedModel::Linear(m) => m.domains(),
        }
    }

    fn route(&self, text: &str) -> Result<RouteDecision, RouteError> {
        match self {
            GuardedModel::Mlp(m) => m.route(text),
            GuardedModel::Linear(m) => m.route(text),
        }
    }
}

/// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut table = [0u32; 256];
    for (i, entry) in table.iter_mut().enumerate() {
        let mut c = i as u32;
        for _ in 0..8 {
            c = if c & 1 != 0 { 0xEDB8_8320 ^ (c >> 1) } else { c >> 1 };
        }
        *entry = c;
    }
    let mut crc = u32::MAX;
    for &b in bytes {
        crc = table[((crc ^ u32::from(b)) & 0xFF) as usize] ^ (crc >> 8);
    }
    crc ^ u32::MAX
}

struct Builder {
    sections: Vec<([u8; 4], Vec<u8>)>,
}

impl Builder {
    fn new() -> Self {
        Self { sections: Vec::new() }
    }

    fn section(&mut self, tag: [u8; 4], payload: Vec<u8>) {
        self.sections.push((tag, payload));
    }

    fn finish(self, kind: u8) -> Vec<u8> {
        let table_len = self.sections.len() * 20;
        let mut offset = (4 + 4 + 1 + 4 + table_len) as u64;
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(kind);
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (tag, payload) in &self.sections {
            out.extend_from_slice(&u32::from_le_bytes(*tag).to_le_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            offset += payload.len() as u64;
        }
        for (_, payload) in &self.sections {
            out.extend_from_slice(payload);
        }
        let crc = crc32(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn domains_payload(domains: &[String]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(domains.len() as u32).to_le_bytes());
    for d in domains {
        put_str(&mut out, d);
    }
    out
}

fn vocab_payload(vocab: &Vocabulary) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(vocab.n_docs() as u64).to_le_bytes());
    out.extend_from_slice(&(vocab.len() as u32).to_le_bytes());
    for (token, &df) in vocab.tokens().iter().zip(vocab.document_frequencies()) {
        put_str(&mut out, token);
        out.extend_from_slice(&df.to_le_bytes());
    }
    out
}

fn floats_payload(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Serializes a trained model. Only `f32` models can be saved: the
/// format stores 32-bit floats and a load must be bit-exact.
pub fn save_model(model: &GuardedModel<f32>, path: impl AsRef<Path>) -> Result<(), ArtifactError> {
    let path = path.as_ref();
    let mut b = Builder::new();
    let bytes = match model {
        GuardedModel::Mlp(m) => {
            b.section(TAG_DOMAINS, domains_payload(m.domains()));
            b.section(TAG_VOCAB, vocab_payload(m.vocabulary()));
            let mut hyper = Vec::new();
            hyper.extend_from_slice(&(m.hidden_width() as u32).to_le_bytes());
            hyper.extend_from_slice(&m.dropout().to_le_bytes());
            hyper.extend_from_slice(&m.threshold().to_le_bytes());
            b.section(TAG_HYPER, hyper);
            b.section(TAG_EMBEDDING, floats_payload(m.embedding()));
            b.section(TAG_HIDDEN_BIAS, floats_payload(m.hidden_bias()));
            b.section(TAG_OUTPUT_WEIGHTS, floats_payload(m.output_weights()));
            b.section(TAG_OUTPUT_BIAS, floats_payload(m.output_bias()));
            b.finish(KIND_MLP)
        }
        GuardedModel::Linear(m) => {
            b.section(TAG_DOMAINS, domains_payload(m.domains()));
            let opts = m.options();
            let mut hyper = Vec::new();
            hyper.extend_from_slice(&opts.bucket_count.to_le_bytes());
            hyper.extend_from_slice(&(opts.n_min as u32).to_le_bytes());
            hyper.extend_from_slice(&(opts.n_max as u32).to_le_bytes());
            b.section(TAG_HYPER, hyper);
            b.section(TAG_WEIGHTS, floats_payload(m.weights()));
            b.section(TAG_BIAS, floats_payload(m.bias()));
            b.finish(KIND_LINEAR)
        }
    };
    fs::write(path, bytes).map_err(|source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn malformed(&self, message: impl Into<String>) -> ArtifactError {
        ArtifactError::Malformed { path: self.path.to_path_buf(), message: message.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ArtifactError> {
        if self.pos + n > self.data.len() {
            return Err(self.malformed(format!(
                "needed {n} bytes at offset {}, section has {}",
                self.pos,
                self.data.len()
            )));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ArtifactError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ArtifactError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ArtifactError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, ArtifactError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| self.malformed("invalid UTF-8 string"))
    }

    fn done(&self) -> Result<(), ArtifactError> {
        if self.pos != self.data.len() {
            return Err(self.malformed(format!(
                "{} unread trailing bytes in section",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn floats_from(section: &[u8], path: &Path) -> Result<Vec<f32>, ArtifactError> {
    if section.len() % 4 != 0 {
        return Err(ArtifactError::Malformed {
            path: path.to_path_buf(),
            message: format!("float section length {} is not a multiple of 4", section.len()),
        });
    }
    Ok(section
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Loads and validates a model artifact: magic, checksum, version,
/// section table, and finally full model-invariant revalidation.
pub fn load_model(path: impl AsRef<Path>) -> Result<GuardedModel<f32>, ArtifactError> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let malformed = |message: String| ArtifactError::Malformed {
        path: path.to_path_buf(),
        message,
    };
    if data.len() < 4 {
        return Err(ArtifactError::NotAModelFile { path: path.to_path_buf() });
    }
    if data[..4] != MAGIC {
        return Err(ArtifactError::NotAModelFile { path: path.to_path_buf() });
    }
    if data.len() < 4 + 4 + 1 + 4 + 4 {
        return Err(malformed("file too short for header and checksum".into()));
    }
    let body = &data[..data.len() - 4];
    let stored = u32::from_le_bytes(data[data.len() - 4..].try_into().unwrap());
    let computed = crc32(body);
    if stored != computed {
        return Err(ArtifactError::Checksum { path: path.to_path_buf(), stored, computed });
    }
    let version = u32::from_le_bytes(data[4..8].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ArtifactError::Version { path: path.to_path_buf(), found: version });
    }
    let kind = data[8];
    let section_count = u32::from_le_bytes(data[9..13].try_into().unwrap()) as usize;
    let table_end = 13 + section_count * 20;
    if table_end > body.len() {
        return Err(malformed("section table exceeds file size".into()));
    }
    let mut sections: Vec<(u32, &[u8])> = Vec::with_capacity(section_count);
    for i in 0..section_count {
        let base = 13 + i * 20;
        let tag = u32::from_le_bytes(body[base..base + 4].try_into().unwrap());
        let offset = u64::from_le_bytes(body[base + 4..base + 12].try_into().unwrap()) as usize;
        let len = u64::from_le_bytes(body[base + 12..base + 20].try_into().unwrap()) as usize;
        let end = offset.checked_add(len).ok_or_else(|| malformed("section bounds overflow".into()))?;
        if offset < table_end || end > body.len() {
            return Err(malformed(format!("section {i} at {offset}+{len} is out of bounds")));
        }
        sections.push((tag, &body[offset..end]));
    }
    let section = |tag: [u8; 4]| -> Result<&[u8], ArtifactError> {
        let wanted = u32::from_le_bytes(tag);
        sections
            .iter()
            .find(|(t, _)| *t == wanted)
            .map(|&(_, s)| s)
            .ok_or_else(|| ArtifactError::Malformed {
                path: path.to_path_buf(),
                message: format!(
                    "missing section {:?}",
                    std::str::from_utf8(&tag).unwrap_or("<non-ascii>")
                ),
            })
    };

    let domains = {
        let mut r = Reader { data: section(TAG_DOMAINS)?, pos: 0, path };
        let n = r.u32()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(r.string()?);
        }
        r.done()?;
        out
    };

    match kind {
        KIND_MLP => {
            let vocab = {
                let mut r = Reader { data: section(TAG_VOCAB)?, pos: 0, path };
                let n_docs = r.u64()? as usize;
                let n = r.u32()? as usize;
                let mut tokens = Vec::with_capacity(n);
                let mut df = Vec::with_capacity(n);
                for _ in 0..n {
                    tokens.push(r.string()?);
                    df.push(r.u32()?);
                }
                r.done()?;
                Vocabulary::from_parts(tokens, df, n_docs)
                    .map_err(|e| malformed(e.to_string()))?
            };
            let mut r = Reader { data: section(TAG_HYPER)?, pos: 0, path };
            let hidden_width = r.u32()? as usize;
            let dropout = r.f64()?;
            let threshold = r.f64()?;
            r.done()?;
            let model = MlpModel::from_parts(
                vocab,
                hidden_width,
                floats_from(section(TAG_EMBEDDING)?, path)?,
                floats_from(section(TAG_HIDDEN_BIAS)?, path)?,
                floats_from(section(TAG_OUTPUT_WEIGHTS)?, path)?,
                floats_from(section(TAG_OUTPUT_BIAS)?, path)?,
                dropout,
                threshold,
                domains,
            )?;
            Ok(GuardedModel::Mlp(model))
        }
        KIND_LINEAR => {
            let mut r = Reader { data: section(TAG_HYPER)?, pos: 0, path };
            let options = LinearOptions {
                bucket_count: r.u32()?,
                n_min: r.u32()? as usize,
                n_max: r.u32()? as usize,
            };
            r.done()?;
            let model = LinearModel::from_parts(
                options,
                floats_from(section(TAG_WEIGHTS)?, path)?,
                floats_from(section(TAG_BIAS)?, path)?,
                domains,
            )?;
            Ok(GuardedModel::Linear(model))
        }
        other => Err(malformed(format!("unknown model kind byte {other}"))),
    }
}
