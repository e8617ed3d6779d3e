//! Student input features: projected TNFs, per-sample abundance composition
//! and a standardized total abundance, one row per contig.

mod abundance;
mod fasta;
mod tnf;

use std::io::{Read, Write};

use ndarray::{Array2, ArrayViewMut2};

pub use abundance::{load_abundances, zscore_log_totals, Abundances};
pub use fasta::{filter_length, parse_fasta, reverse_complement, write_fasta, ContigRecord};
pub use tnf::{constraint_matrix, kmer_counts, revcomp_index, TnfKernel, N_TETRA, SVD_THRESHOLD};

use crate::binio::*;
use crate::error::{Error, Result};
use crate::par::{self, Exec};

pub const DEFAULT_MIN_LENGTH: usize = 2000;
const CACHE_MAGIC: &[u8; 4] = b"TXDF";
const CACHE_VERSION: u32 = 1;

/// Rows are `[tnf(0..D) | abundance(0..K) | total]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub contig_ids: Vec<String>,
    pub data: Array2<f64>,
    pub n_samples: usize,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn width(&self) -> usize {
        self.data.ncols()
    }

    pub fn tnf_dim(&self) -> usize {
        self.width() - self.n_samples - 1
    }

    pub fn write_cache<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        put_u32(&mut w, CACHE_VERSION)?;
        put_len(&mut w, self.n_rows(), "row count")?;
        put_len(&mut w, self.width(), "width")?;
        put_len(&mut w, self.n_samples, "sample count")?;
        for v in self.data.iter() {
            put_f64(&mut w, *v)?;
        }
        put_len(&mut w, self.contig_ids.len(), "id count")?;
        for id in &self.contig_ids {
            put_str(&mut w, id)?;
        }
        Ok(())
    }

    pub fn read_cache<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, CACHE_MAGIC, CACHE_VERSION)?;
        let n = get_u32(&mut r)? as usize;
        let width = get_u32(&mut r)? as usize;
        let n_samples = get_u32(&mut r)? as usize;
        if width < n_samples + 1 {
            return Err(Error::Format(format!(
                "width {width} cannot hold {n_samples} samples"
            )));
        }
        let mut values = Vec::with_capacity(n * width);
        for _ in 0..n * width {
            values.push(get_f64(&mut r)?);
        }
        let count = get_u32(&mut r)? as usize;
        if count != n {
            return Err(Error::Format(format!("{count} ids for {n} rows")));
        }
        let contig_ids = (0..count)
            .map(|_| get_str(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let data = Array2::from_shape_vec((n, width), values)
            .map_err(|e| Error::Format(e.to_string()))?;
        Ok(Self {
            contig_ids,
            data,
            n_samples,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FeatureOptions {
    /// Z-score each TNF column over the dataset.
    pub standardize_tnf: bool,
}

/// Concatenates TNF, abundance composition and standardized total per
/// contig. `abundances` rows align with `records` by index. Contigs without
/// a valid 4-mer window are dropped and logged; the total-abundance z-score
/// is computed over the survivors.
pub fn assemble_features(
    records: &[ContigRecord],
    kernel: &TnfKernel,
    abundances: &Abundances,
    options: FeatureOptions,
    exec: Exec,
) -> Result<FeatureMatrix> {
    if abundances.rows.len() != records.len() {
        return Err(Error::Shape(format!(
            "{} abundance rows for {} records",
            abundances.rows.len(),
            records.len()
        )));
    }
    let tnfs = par::map(exec, records, |r| kernel.tnf(r));

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (i, t) in tnfs.into_iter().enumerate() {
        match t {
            Ok(v) => kept.push((i, v)),
            Err(Error::TooShort { id, .. }) => dropped.push(id),
            Err(e) => return Err(e),
        }
    }
    if !dropped.is_empty() {
        log::warn!("dropped {} contigs without a valid 4-mer: {}", dropped.len(), dropped.join(", "));
    }
    if kept.is_empty() {
        return Err(Error::Empty("no contigs survived feature extraction".into()));
    }

    let d = kernel.dim();
    let k = abundances.n_samples();
    let width = d + k + 1;
    let totals: Vec<f64> = kept.iter().map(|(i, _)| abundances.raw_totals[*i]).collect();
    let z = zscore_log_totals(&totals);

    let mut data = Array2::zeros((kept.len(), width));
    let mut contig_ids = Vec::with_capacity(kept.len());
    for (row, (i, tnf)) in kept.iter().enumerate() {
        contig_ids.push(records[*i].id.clone());
        let mut out = data.row_mut(row);
        for (j, v) in tnf.iter().enumerate() {
            out[j] = *v;
        }
        for (j, v) in abundances.rows[*i].iter().enumerate() {
            out[d + j] = *v;
        }
        out[d + k] = z[row];
    }
    if options.standardize_tnf {
        standardize_columns(data.slice_mut(ndarray::s![.., ..d]));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite feature value".into()));
    }
    Ok(FeatureMatrix {
        contig_ids,
        data,
        n_samples: k,
    })
}

/// Z-scores every column in place with the population sd; constant
/// columns become zero.
pub fn standardize_columns(mut m: ArrayViewMut2<f64>) {
    for mut col in m.columns_mut() {
        let n = col.len() as f64;
        if n == 0.0 {
            return;
        }
        let mean = col.sum() / n;
        let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        col.mapv_inplace(|x| if sd > 0.0 { (x - mean) / sd } else { 0.0 });
    }
}
