//! Teacher-branch sequence embeddings.
//!
//! The backbone is frozen and lives out of process: embeddings from any
//! external model are ingested from a TSV or `TXDE` binary file. A seeded
//! 6-mer random projection stands in when no external embeddings exist.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::binio::*;
use crate::error::{Error, Result};
use crate::features::{kmer_counts, ContigRecord};
use crate::neuralnet::Mlp;
use crate::par::{self, Exec};

pub const PROJECTION_K: usize = 6;
pub const DEFAULT_EMBED_DIM: usize = 256;
const N_HEXA: usize = 1 << (2 * PROJECTION_K);
const EMBED_MAGIC: &[u8; 4] = b"TXDE";
const EMBED_VERSION: u32 = 1;

/// Embeddings loaded from a file, stored at the file's f32 precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FileEmbeddings {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    values: Vec<f32>,
}

impl FileEmbeddings {
    fn from_rows(dim: usize, rows: Vec<(String, Vec<f32>)>) -> Result<Self> {
        let mut ids = Vec::with_capacity(rows.len());
        let mut index = HashMap::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (id, v) in rows {
            if v.len() != dim {
                return Err(Error::Format(format!(
                    "embedding for {id} has width {}, expected {dim}",
                    v.len()
                )));
            }
            if let Some(x) = v.iter().find(|x| !x.is_finite()) {
                return Err(Error::Value(format!("non-finite embedding value {x} for {id}")));
            }
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(Error::Duplicate(id));
            }
            ids.push(id);
            values.extend(v);
        }
        Ok(Self {
            dim,
            ids,
            index,
            values,
        })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

#[derive(Debug, Clone)]
pub struct KmerProjection {
    dim: usize,
    seed: u64,
    /// 4096 x dim, entries N(0, 1) / 64.
    matrix: Array2<f64>,
}

impl KmerProjection {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (N_HEXA as f64).sqrt();
        let matrix = Array2::from_shape_simple_fn((N_HEXA, dim), || {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        });
        Self { dim, seed, matrix }
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    /// Unit-norm projection of the normalized 6-mer frequency vector.
    pub fn embed(&self, record: &ContigRecord) -> Result<Vec<f64>> {
        let too_short = || Error::TooShort {
            id: record.id.clone(),
            len: record.len(),
            need: 1,
        };
        if record.len() < PROJECTION_K {
            return Err(too_short());
        }
        let (counts, total) = kmer_counts(&record.seq, PROJECTION_K);
        if total == 0 {
            return Err(too_short());
        }
        let mut out = vec![0.0; self.dim];
        for (w, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let f = c as f64 / total as f64;
            for (o, &m) in out.iter_mut().zip(self.matrix.row(w)) {
                *o += f * m;
            }
        }
        let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::Numeric(format!("degenerate embedding for {}", record.id)));
        }
        out.iter_mut().for_each(|x| *x /= norm);
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub enum EmbeddingProvider {
    FileBacked(FileEmbeddings),
    KmerProjection(KmerProjection),
}

impl EmbeddingProvider {
    pub fn kmer_projection(dim: usize, seed: u64) -> Self {
        EmbeddingProvider::KmerProjection(KmerProjection::new(dim, seed))
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::FileBacked(f) => f.dim,
            EmbeddingProvider::KmerProjection(k) => k.dim,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            EmbeddingProvider::FileBacked(f) => {
                format!("file-backed, dim {}, {} contigs", f.dim, f.ids.len())
            }
            EmbeddingProvider::KmerProjection(k) => {
                format!("{PROJECTION_K}-mer projection, dim {}, seed {}", k.dim, k.seed)
            }
        }
    }

    /// Embedding matrix with rows in `records` order. File-backed providers
    /// resolve by id only; the projection embedder reads the sequence.
    pub fn embed_all(&self, records: &[ContigRecord], exec: Exec) -> Result<Array2<f64>> {
        let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
        match self {
            EmbeddingProvider::FileBacked(_) => self.lookup(&ids),
            EmbeddingProvider::KmerProjection(k) => {
                let rows = par::map(exec, records, |r| k.embed(r));
                let mut out = Array2::zeros((records.len(), k.dim));
                for (i, row) in rows.into_iter().enumerate() {
                    for (j, v) in row?.into_iter().enumerate() {
                        out[[i, j]] = v;
                    }
                }
                Ok(out)
            }
        }
    }

    /// Looks up ids in a file-backed provider.
    pub fn lookup(&self, ids: &[&str]) -> Result<Array2<f64>> {
        let EmbeddingProvider::FileBacked(f) = self else {
            return Err(Error::Value(
                "projection embedder needs sequences, not ids".into(),
            ));
        };
        let missing: Vec<String> = ids
            .iter()
            .filter(|id| !f.index.contains_key(**id))
            .map(|s| s.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingEmbedding(missing));
        }
        let mut out = Array2::zeros((ids.len(), f.dim));
        for (i, id) in ids.iter().enumerate() {
            for (j, v) in f.row(f.index[*id]).iter().enumerate() {
                out[[i, j]] = f64::from(*v);
            }
        }
        Ok(out)
    }
}

/// Parses `contig_id<TAB>v1..vD` rows; width comes from the first row.
pub fn load_embedding_tsv<R: BufRead>(reader: R) -> Result<EmbeddingProvider> {
    let mut rows = Vec::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let id = cols.next().unwrap_or_default().to_string();
        let parsed: std::result::Result<Vec<f32>, _> = cols.map(|c| c.trim().parse()).collect();
        let values = match parsed {
            Ok(v) => v,
            // header row
            Err(_) if i == 0 && rows.is_empty() => continue,
            Err(e) => return Err(Error::parse(i + 1, format!("bad embedding value: {e}"))),
        };
        let d = *dim.get_or_insert(values.len());
        if values.len() != d {
            return Err(Error::Format(format!(
                "line {}: width {} differs from {d}",
                i + 1,
                values.len()
            )));
        }
        rows.push((id, values));
    }
    let dim = dim.ok_or_else(|| Error::Empty("embedding file has no rows".into()))?;
    if dim == 0 {
        return Err(Error::Format("embedding rows have no values".into()));
    }
    Ok(EmbeddingProvider::FileBacked(FileEmbeddings::from_rows(dim, rows)?))
}

pub fn read_embedding_binary<R: Read>(mut r: R) -> Result<EmbeddingProvider> {
    expect_magic(&mut r, EMBED_MAGIC, EMBED_VERSION)?;
    let dim = get_u32(&mut r)? as usize;
    let count = get_u64(&mut r)?;
    let mut rows = Vec::new();
    for _ in 0..count {
        let id = get_str(&mut r)?;
        let v = (0..dim).map(|_| get_f32(&mut r)).collect::<Result<Vec<_>>>()?;
        rows.push((id, v));
    }
    Ok(EmbeddingProvider::FileBacked(FileEmbeddings::from_rows(dim, rows)?))
}

/// Sniffs the `TXDE` magic and dispatches to the binary or TSV reader.
pub fn load_embedding_file<R: BufRead>(mut r: R) -> Result<EmbeddingProvider> {
    let head = r.fill_buf()?;
    if head.starts_with(EMBED_MAGIC) {
        read_embedding_binary(r)
    } else {
        load_embedding_tsv(r)
    }
}

/// Writes `TXDE`; values are stored as f32.
pub fn write_embedding_binary<W: Write>(
    mut w: W,
    ids: &[String],
    embeddings: ArrayView2<f64>,
) -> Result<()> {
    if ids.len() != embeddings.nrows() {
        return Err(Error::Shape(format!(
            "{} ids for {} embedding rows",
            ids.len(),
            embeddings.nrows()
        )));
    }
    w.write_all(EMBED_MAGIC)?;
    put_u32(&mut w, EMBED_VERSION)?;
    put_len(&mut w, embeddings.ncols(), "dim")?;
    put_u64(&mut w, ids.len() as u64)?;
    for (id, row) in ids.iter().zip(embeddings.rows()) {
        put_str(&mut w, id)?;
        for v in row {
            put_f32(&mut w, *v as f32)?;
        }
    }
    Ok(())
}

/// Teacher head forward pass; rows are the teacher logits.
pub fn teacher_logits(head: &Mlp, embeddings: ArrayView2<f64>) -> Result<Array2<f64>> {
    if embeddings.nrows() == 0 && embeddings.ncols() == head.input_dim() {
        return Ok(Array2::zeros((0, head.output_dim())));
    }
    head.forward(embeddings)
}
