//! Corpus and embedding loading, the binary embedding format, and the
//! synthetic benchmark generator.
//!
//! Corpus files are JSON Lines with one `{"id", "text", "label", "split"}`
//! object per line. Embedding files are little-endian:
//!
//! ```text
//! magic   8 bytes  "MNIDEMB1"
//! version u32      1
//! count   u64      number of rows, equal to the corpus record count
//! dim     u32      row width
//! data    count*dim f32, row-major
//! ```
//!
//! Row `i` of the embedding file belongs to record `i` of the corpus.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ClassId, ClassVocabulary, Split, UtteranceRecord, UNKNOWN_LABEL};
use crate::rng::{stream, Stream};
use crate::scalar::{norm, Scalar};

pub const EMBEDDING_MAGIC: &[u8; 8] = b"MNIDEMB1";
pub const EMBEDDING_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 4;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: invalid split {value:?}")]
    InvalidSplit { line: usize, value: String },
    #[error("line {line}: init record has no gold label")]
    InitWithoutLabel { line: usize },
    #[error("bad magic bytes in embedding file")]
    BadMagic,
    #[error("unsupported embedding format version {0}")]
    UnsupportedVersion(u32),
    #[error("embedding file truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("embedding count {found} does not match corpus size {expected}")]
    CountMismatch { expected: usize, found: usize },
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },
    #[error("row {0} has zero norm and cannot be normalized")]
    ZeroNormRow(usize),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// Records plus the class vocabulary built from their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<UtteranceRecord>,
    vocabulary: ClassVocabulary,
    gold: Vec<Option<ClassId>>,
}

impl Corpus {
    /// Builds the vocabulary in first-appearance order; classes seen in the
    /// init split are marked known.
    pub fn from_records(records: Vec<UtteranceRecord>) -> Self {
        let mut vocabulary = ClassVocabulary::new();
        let gold: Vec<Option<ClassId>> = records
            .iter()
            .map(|r| r.has_gold().then(|| vocabulary.intern(&r.gold_label)))
            .collect();
        for (r, g) in records.iter().zip(&gold) {
            if let (Split::Init, Some(c)) = (r.split, g) {
                vocabulary.mark_known(*c);
            }
        }
        Self { records, vocabulary, gold }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[UtteranceRecord] {
        &self.records
    }

    pub fn record(&self, row: usize) -> &UtteranceRecord {
        &self.records[row]
    }

    pub fn vocabulary(&self) -> &ClassVocabulary {
        &self.vocabulary
    }

    pub fn gold(&self, row: usize) -> Option<ClassId> {
        self.gold[row]
    }

    pub fn rows(&self, split: Split) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id == id)
    }

    /// Number of distinct gold classes (N).
    pub fn n_classes(&self) -> usize {
        self.vocabulary.len()
    }

    /// Number of classes present in the init split (N_init).
    pub fn n_known(&self) -> usize {
        self.vocabulary.known_count()
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    text: String,
    label: String,
    split: String,
}

pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Corpus, IngestError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| IngestError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let split = Split::parse(&raw.split).ok_or_else(|| IngestError::InvalidSplit {
            line: line_no,
            value: raw.split.clone(),
        })?;
        if raw.label.is_empty() {
            return Err(IngestError::Parse {
                line: line_no,
                message: "empty label".into(),
            });
        }
        if split == Split::Init && raw.label == UNKNOWN_LABEL {
            return Err(IngestError::InitWithoutLabel { line: line_no });
        }
        if !seen.insert(raw.id.clone()) {
            return Err(IngestError::DuplicateId {
                line: line_no,
                id: raw.id,
            });
        }
        records.push(UtteranceRecord {
            id: raw.id,
            text: raw.text,
            gold_label: raw.label,
            split,
        });
    }
    Ok(Corpus::from_records(records))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, IngestError> {
    parse_corpus(BufReader::new(fs::File::open(path)?))
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<(), IngestError> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in corpus.records() {
        serde_json::to_writer(&mut w, r).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Dense row-major matrix of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix<T> {
    n: usize,
    d: usize,
    values: Vec<T>,
    normalized: bool,
}

impl<T: Scalar> EmbeddingMatrix<T> {
    pub fn from_vec(n: usize, d: usize, values: Vec<T>) -> Result<Self, IngestError> {
        if d == 0 {
            return Err(IngestError::ZeroDim);
        }
        assert_eq!(values.len(), n * d, "values length must equal n*d");
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(IngestError::NonFiniteValue {
                row: pos / d,
                col: pos % d,
            });
        }
        Ok(Self {
            n,
            d,
            values,
            normalized: false,
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self, IngestError> {
        let d = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == d), "ragged rows");
        Self::from_vec(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    /// L2-normalizes every row. Zero rows are an error.
    pub fn normalize_rows(&mut self) -> Result<(), IngestError> {
        for i in 0..self.n {
            let r = &mut self.values[i * self.d..(i + 1) * self.d];
            let len = norm(r);
            if len == T::zero() {
                return Err(IngestError::ZeroNormRow(i));
            }
            r.iter_mut().for_each(|v| *v = *v / len);
        }
        self.normalized = true;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> EmbeddingMatrix<U> {
        EmbeddingMatrix {
            n: self.n,
            d: self.d,
            values: self
                .values
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
            normalized: self.normalized,
        }
    }

    /// Multiplies every row by `m` (row-major d×d) from the right: `x ↦ x·m`.
    pub fn transform(&self, m: &[T]) -> Self {
        assert_eq!(m.len(), self.d * self.d);
        let mut values = vec![T::zero(); self.values.len()];
        for i in 0..self.n {
            let x = self.row(i);
            for j in 0..self.d {
                values[i * self.d + j] =
                    (0..self.d).fold(T::zero(), |acc, k| acc + x[k] * m[k * self.d + j]);
            }
        }
        Self {
            n: self.n,
            d: self.d,
            values,
            normalized: self.normalized,
        }
    }

    /// Encodes the matrix in the binary file format (values narrowed to f32).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.values.len() * 4);
        out.extend_from_slice(EMBEDDING_MAGIC);
        out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&(v.to_f64_lossy() as f32).to_le_bytes());
        }
        out
    }
}

/// Decodes the binary embedding format without checking it against a corpus.
pub fn decode_embeddings<T: Scalar>(bytes: &[u8]) -> Result<EmbeddingMatrix<T>, IngestError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() < 8 || &bytes[..8] != EMBEDDING_MAGIC {
            return Err(IngestError::BadMagic);
        }
        return Err(IngestError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..8] != EMBEDDING_MAGIC {
        return Err(IngestError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != EMBEDDING_VERSION {
        return Err(IngestError::UnsupportedVersion(version));
    }
    let count = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(IngestError::ZeroDim);
    }
    let expected = HEADER_LEN + count * dim * 4;
    if bytes.len() != expected {
        return Err(IngestError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| T::from_f64_lossy(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    EmbeddingMatrix::from_vec(count, dim, values)
}

/// Loads an embedding file and validates it against the corpus row count.
pub fn load_embeddings<T: Scalar>(
    path: impl AsRef<Path>,
    corpus: &Corpus,
    normalize: bool,
) -> Result<EmbeddingMatrix<T>, IngestError> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut m = decode_embeddings::<T>(&bytes)?;
    if m.n() != corpus.len() {
        return Err(IngestError::CountMismatch {
            expected: corpus.len(),
            found: m.n(),
        });
    }
    if normalize {
        m.normalize_rows()?;
    }
    Ok(m)
}

pub fn write_embeddings<T: Scalar>(
    path: impl AsRef<Path>,
    m: &EmbeddingMatrix<T>,
) -> Result<(), IngestError> {
    fs::write(path, m.to_bytes())?;
    Ok(())
}

fn default_kappa() -> usize {
    10
}

fn default_test_fraction() -> f64 {
    0.2
}

/// Gaussian-blob benchmark description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_classes: usize,
    pub n_known: usize,
    pub points_per_class: usize,
    pub dim: usize,
    pub center_scale: f64,
    pub cluster_std: f64,
    pub seed: u64,
    /// Initial labels per known class.
    #[serde(default = "default_kappa")]
    pub kappa: usize,
    /// Per-class fraction held out for test.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::InvalidSpec(m.to_owned()));
        if self.n_known == 0 || self.n_known >= self.n_classes {
            return bad("need 0 < n_known < n_classes");
        }
        if self.points_per_class < self.kappa {
            return bad("points_per_class must be at least kappa");
        }
        if self.kappa == 0 {
            return bad("kappa must be positive");
        }
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if !(self.center_scale > 0.0 && self.center_scale.is_finite()) {
            return bad("center_scale must be positive");
        }
        if !(self.cluster_std > 0.0 && self.cluster_std.is_finite()) {
            return bad("cluster_std must be positive");
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad("test_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

/// Draws Gaussian class blobs. Records are laid out class by class; within a
/// known class the first `kappa` points are `init`, the last
/// `round(test_fraction * points_per_class)` are `test` (capped so init and
/// test never overlap) and the rest are `pool`. Embeddings are not normalized.
pub fn generate_synthetic(
    spec: &SyntheticSpec,
) -> Result<(Corpus, EmbeddingMatrix<f32>), IngestError> {
    spec.validate()?;
    let mut rng = stream(spec.seed, Stream::Synthetic);
    let mut gauss = move || -> f64 { rng.sample(StandardNormal) };

    let centers: Vec<Vec<f64>> = (0..spec.n_classes)
        .map(|_| (0..spec.dim).map(|_| gauss() * spec.center_scale).collect())
        .collect();

    let n_test_nominal = (spec.test_fraction * spec.points_per_class as f64).round() as usize;
    let mut records = Vec::with_capacity(spec.n_classes * spec.points_per_class);
    let mut values = Vec::with_capacity(spec.n_classes * spec.points_per_class * spec.dim);
    for (c, center) in centers.iter().enumerate() {
        let known = c < spec.n_known;
        let n_init = if known { spec.kappa } else { 0 };
        let n_test = n_test_nominal.min(spec.points_per_class - n_init);
        for i in 0..spec.points_per_class {
            let split = if i < n_init {
                Split::Init
            } else if i >= spec.points_per_class - n_test {
                Split::Test
            } else {
                Split::Pool
            };
            records.push(UtteranceRecord {
                id: format!("c{c:03}-{i:05}"),
                text: format!("synthetic utterance {i} of class {c}"),
                gold_label: format!("class_{c:03}"),
                split,
            });
            for &mu in center {
                values.push((mu + gauss() * spec.cluster_std) as f32);
            }
        }
    }
    let n = records.len();
    Ok((
        Corpus::from_records(records),
        EmbeddingMatrix::from_vec(n, spec.dim, values)?,
    ))
}
