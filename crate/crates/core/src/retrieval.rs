//! Late-interaction (MaxSim) index over training-record student answers.
//!
//! The relevance of a document to a query is
//!
//! ```text
//! score(q, d) = Σ_i max_j ( q_i · d_j )
//! ```
//!
//! over unit-length token rows. Retrieval is exhaustive: every entry is
//! scored and ties are broken by ascending record id.
//!
//! On-disk layout (all integers little-endian):
//!
//! ```text
//! magic "ASXI" | u32 format_version | u32 dim | 32-byte ascii fingerprint | u64 entry_count
//! entry_count × ( u32 rows | rows × dim × f32 )
//! u64 payload_len | payload_len bytes of JSON { entries: [{id, tokens}], records, skipped }
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::AnswerRecord;
use crate::embedding::{Embedder, EmbeddingError, Role, TokenEmbeddingMatrix};

pub const INDEX_MAGIC: &[u8; 4] = b"ASXI";
pub const INDEX_FORMAT_VERSION: u32 = 1;
const FINGERPRINT_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("dimension mismatch: query has {query}, document has {doc}")]
    DimensionMismatch { query: usize, doc: usize },
    #[error("empty embedding matrix")]
    EmptyMatrix,
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("index fingerprint {found} does not match embedder {expected} (use --force to override)")]
    FingerprintMismatch { expected: String, found: String },
    #[error("corrupt index file: {0}")]
    Corrupt(String),
    #[error("unsupported index format version {0}")]
    UnsupportedVersion(u32),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sum over query rows of the best dot product against any document row.
pub fn maxsim_score(
    query: &TokenEmbeddingMatrix,
    doc: &TokenEmbeddingMatrix,
) -> Result<f64, RetrievalError> {
    if query.dim() != doc.dim() {
        return Err(RetrievalError::DimensionMismatch {
            query: query.dim(),
            doc: doc.dim(),
        });
    }
    if query.is_empty() || doc.is_empty() {
        return Err(RetrievalError::EmptyMatrix);
    }
    Ok(maxsim_unchecked(query, doc))
}

fn maxsim_unchecked(query: &TokenEmbeddingMatrix, doc: &TokenEmbeddingMatrix) -> f64 {
    query
        .iter_rows()
        .map(|q| {
            doc.iter_rows()
                .map(|d| dot(q, d))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum()
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Which record field is embedded into the index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexedField {
    #[default]
    StudentAnswer,
}

impl IndexedField {
    fn text(self, record: &AnswerRecord) -> &str {
        match self {
            IndexedField::StudentAnswer => &record.student_answer,
        }
    }
}

/// A scored neighbor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedExample {
    pub record: AnswerRecord,
    pub relevance: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct IndexEntry {
    id: String,
    matrix: TokenEmbeddingMatrix,
}

/// Immutable, exhaustively-searched MaxSim index.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxSimIndex {
    dim: usize,
    fingerprint: String,
    entries: Vec<IndexEntry>,
    payload: BTreeMap<String, AnswerRecord>,
    skipped: usize,
}

impl MaxSimIndex {
    /// Embed `field` of each record with the document role. Records whose
    /// field is empty (or tokenizes to nothing) are skipped and counted.
    pub fn build(
        records: &[AnswerRecord],
        embedder: &dyn Embedder,
        field: IndexedField,
    ) -> Result<MaxSimIndex, RetrievalError> {
        let kept: Vec<&AnswerRecord> = records
            .iter()
            .filter(|r| !field.text(r).trim().is_empty())
            .collect();
        let mut skipped = records.len() - kept.len();
        if kept.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        let texts: Vec<&str> = kept.iter().map(|r| field.text(r)).collect();
        let matrices = embedder.embed_batch(&texts, Role::Document)?;
        if matrices.len() != kept.len() {
            return Err(EmbeddingError::Protocol(format!(
                "embedded {} of {} texts",
                matrices.len(),
                kept.len()
            ))
            .into());
        }

        let mut dim = None;
        let mut entries = Vec::with_capacity(kept.len());
        let mut payload = BTreeMap::new();
        for (record, matrix) in kept.into_iter().zip(matrices) {
            if matrix.is_empty() {
                skipped += 1;
                continue;
            }
            match dim {
                None => dim = Some(matrix.dim()),
                Some(d) if d != matrix.dim() => {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: d,
                        actual: matrix.dim(),
                    }
                    .into())
                }
                Some(_) => {}
            }
            entries.push(IndexEntry {
                id: record.id.clone(),
                matrix,
            });
            payload.insert(record.id.clone(), record.clone());
        }
        if skipped > 0 {
            log::warn!("index build skipped {skipped} record(s) with empty text");
        }
        let dim = dim.ok_or(RetrievalError::EmptyIndex)?;
        Ok(MaxSimIndex {
            dim,
            fingerprint: embedder.fingerprint(),
            entries,
            payload,
            skipped,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Records skipped at build time because their indexed text was empty.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    pub fn record(&self, id: &str) -> Option<&AnswerRecord> {
        self.payload.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.payload.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> + '_ {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// Ids of indexed records that belong to `question_id`.
    pub fn ids_for_question(&self, question_id: &str) -> HashSet<String> {
        self.payload
            .values()
            .filter(|r| r.question_id == question_id)
            .map(|r| r.id.clone())
            .collect()
    }

    /// Embed `query_text` with the query role and return the exact top `k`.
    pub fn top_k(
        &self,
        embedder: &dyn Embedder,
        query_text: &str,
        k: usize,
        exclude: Option<&HashSet<String>>,
    ) -> Result<Vec<RetrievedExample>, RetrievalError> {
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        let query = embedder.embed(query_text, Role::Query)?;
        self.top_k_matrix(&query, k, exclude)
    }

    /// Top-`k` for a pre-embedded query. An empty query scores every entry
    /// 0.0 (an empty sum), so results fall back to id order.
    pub fn top_k_matrix(
        &self,
        query: &TokenEmbeddingMatrix,
        k: usize,
        exclude: Option<&HashSet<String>>,
    ) -> Result<Vec<RetrievedExample>, RetrievalError> {
        if self.entries.is_empty() {
            return Err(RetrievalError::EmptyIndex);
        }
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        if !query.is_empty() && query.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                query: query.dim(),
                doc: self.dim,
            });
        }
        let mut scored: Vec<(f64, &IndexEntry)> = self
            .entries
            .iter()
            .filter(|e| exclude.is_none_or(|ex| !ex.contains(&e.id)))
            .map(|e| {
                let s = if query.is_empty() {
                    0.0
                } else {
                    maxsim_unchecked(query, &e.matrix)
                };
                (s, e)
            })
            .collect();
        scored.sort_by(|a, b| rank_order((a.0, &a.1.id), (b.0, &b.1.id)));
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (relevance, entry))| RetrievedExample {
                record: self.payload[&entry.id].clone(),
                relevance,
                rank: i + 1,
            })
            .collect())
    }

    /// Refuse to load an index whose fingerprint differs from `expected`
    /// unless `force` is set.
    pub fn load(
        path: impl AsRef<Path>,
        expected_fingerprint: Option<&str>,
        force: bool,
    ) -> Result<MaxSimIndex, RetrievalError> {
        let mut reader = BufReader::new(File::open(path)?);
        let index = MaxSimIndex::read_from(&mut reader)?;
        if let Some(expected) = expected_fingerprint {
            if expected != index.fingerprint {
                if !force {
                    return Err(RetrievalError::FingerprintMismatch {
                        expected: expected.to_string(),
                        found: index.fingerprint,
                    });
                }
                log::warn!(
                    "loading index with fingerprint {} against embedder {expected}",
                    index.fingerprint
                );
            }
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RetrievalError> {
        let mut writer = BufWriter::new(File::create(path)?);
        self.write_to(&mut writer)?;
        writer.flush()?;
        Ok(())
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<(), RetrievalError> {
        out.write_all(INDEX_MAGIC)?;
        out.write_all(&INDEX_FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.dim as u32).to_le_bytes())?;
        let mut fp = [b' '; FINGERPRINT_LEN];
        let bytes = self.fingerprint.as_bytes();
        let n = bytes.len().min(FINGERPRINT_LEN);
        fp[..n].copy_from_slice(&bytes[..n]);
        out.write_all(&fp)?;
        out.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for entry in &self.entries {
            out.write_all(&(entry.matrix.rows() as u32).to_le_bytes())?;
            for value in entry.matrix.as_slice() {
                out.write_all(&value.to_le_bytes())?;
            }
        }
        let payload = PayloadSection {
            entries: self
                .entries
                .iter()
                .map(|e| PayloadEntry {
                    id: e.id.clone(),
                    tokens: e.matrix.tokens().to_vec(),
                })
                .collect(),
            records: self.payload.values().cloned().collect(),
            skipped: self.skipped,
        };
        let json = serde_json::to_vec(&payload)
            .map_err(|e| RetrievalError::Corrupt(format!("payload encoding: {e}")))?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;
        Ok(())
    }

    pub fn read_from(input: &mut impl Read) -> Result<MaxSimIndex, RetrievalError> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != INDEX_MAGIC {
            return Err(RetrievalError::Corrupt("bad magic".into()));
        }
        let version = read_u32(input)?;
        if version != INDEX_FORMAT_VERSION {
            return Err(RetrievalError::UnsupportedVersion(version));
        }
        let dim = read_u32(input)? as usize;
        let mut fp = [0u8; FINGERPRINT_LEN];
        input.read_exact(&mut fp)?;
        let fingerprint = String::from_utf8(fp.to_vec())
            .map_err(|_| RetrievalError::Corrupt("fingerprint is not utf-8".into()))?
            .trim_end()
            .to_string();
        let count = read_u64(input)? as usize;
        let mut packed = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let rows = read_u32(input)? as usize;
            let mut buf = vec![0u8; rows * dim * 4];
            input.read_exact(&mut buf)?;
            let values: Vec<f32> = buf
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            packed.push((rows, values));
        }
        let payload_len = read_u64(input)? as usize;
        let mut json = Vec::with_capacity(payload_len.min(1 << 26));
        input.take(payload_len as u64).read_to_end(&mut json)?;
        if json.len() != payload_len {
            return Err(RetrievalError::Corrupt("truncated payload".into()));
        }
        let payload: PayloadSection = serde_json::from_slice(&json)
            .map_err(|e| RetrievalError::Corrupt(format!("payload: {e}")))?;
        if payload.entries.len() != count {
            return Err(RetrievalError::Corrupt(format!(
                "header declares {count} entries, payload lists {}",
                payload.entries.len()
            )));
        }
        let records: BTreeMap<String, AnswerRecord> = payload
            .records
            .into_iter()
            .map(|r| (r.id.clone(), r))
            .collect();
        let mut entries = Vec::with_capacity(count);
        for (meta, (rows, values)) in payload.entries.into_iter().zip(packed) {
            if meta.tokens.len() != rows {
                return Err(RetrievalError::Corrupt(format!(
                    "entry {} has {rows} rows but {} tokens",
                    meta.id,
                    meta.tokens.len()
                )));
            }
            if !records.contains_key(&meta.id) {
                return Err(RetrievalError::Corrupt(format!(
                    "entry {} has no payload record",
                    meta.id
                )));
            }
            let matrix = TokenEmbeddingMatrix::from_packed(meta.tokens, dim, values)?;
            entries.push(IndexEntry {
                id: meta.id,
                matrix,
            });
        }
        Ok(MaxSimIndex {
            dim,
            fingerprint,
            entries,
            payload: records,
            skipped: payload.skipped,
        })
    }
}

/// Higher relevance first, then ascending id.
fn rank_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

#[derive(Serialize, Deserialize)]
struct PayloadEntry {
    id: String,
    tokens: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct PayloadSection {
    entries: Vec<PayloadEntry>,
    records: Vec<AnswerRecord>,
    skipped: usize,
}

fn read_u32(input: &mut impl Read) -> Result<u32, RetrievalError> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(input: &mut impl Read) -> Result<u64, RetrievalError> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
