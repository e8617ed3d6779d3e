//! Tetranucleotide frequencies projected onto the strand-symmetric,
//! overlap-consistent subspace of the 256-dim 4-mer simplex.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};

use super::fasta::ContigRecord;
use crate::error::{Error, Result};

pub const N_TETRA: usize = 256;
pub const SVD_THRESHOLD: f64 = 1e-10;
const GAP_TOLERANCE: f64 = 1e-12;

fn base_code(b: u8) -> Option<usize> {
    match b {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

/// Counts of every overlapping `k`-mer (first base most significant),
/// skipping windows that contain `N`. Returns counts and the number of
/// counted windows.
pub fn kmer_counts(seq: &[u8], k: usize) -> (Vec<u32>, u64) {
    let mut counts = vec![0u32; 1 << (2 * k)];
    let mask = (1usize << (2 * k)) - 1;
    let mut code = 0usize;
    let mut valid = 0usize;
    let mut total = 0u64;
    for &b in seq {
        match base_code(b) {
            Some(c) => {
                code = ((code << 2) | c) & mask;
                valid += 1;
                if valid >= k {
                    counts[code] += 1;
                    total += 1;
                }
            }
            None => valid = 0,
        }
    }
    (counts, total)
}

/// Index of the reverse complement of a `k`-mer index.
pub fn revcomp_index(mut code: usize, k: usize) -> usize {
    let mut out = 0;
    for _ in 0..k {
        out = (out << 2) | (3 - (code & 3));
        code >>= 2;
    }
    out
}

#[derive(Debug, Clone)]
pub struct TnfKernel {
    /// 256 x D, orthonormal columns.
    basis: Array2<f64>,
    pub n_constraints: usize,
    pub constraint_rank: usize,
    /// Largest singular value treated as zero.
    pub null_sigma_max: f64,
    /// Smallest singular value treated as non-zero.
    pub range_sigma_min: f64,
}

/// Rows: 120 reverse-complement differences, one all-ones row, then 64
/// 3-mer overlap rows (`sum_x e_{sx} - sum_x e_{xs}`).
pub fn constraint_matrix() -> Array2<f64> {
    let mut rows: Vec<Array1<f64>> = Vec::with_capacity(185);
    for w in 0..N_TETRA {
        let rc = revcomp_index(w, 4);
        if w < rc {
            let mut v = Array1::zeros(N_TETRA);
            v[w] = 1.0;
            v[rc] = -1.0;
            rows.push(v);
        }
    }
    rows.push(Array1::ones(N_TETRA));
    for s in 0..64 {
        let mut v = Array1::zeros(N_TETRA);
        for x in 0..4 {
            v[s * 4 + x] += 1.0;
            v[x * 64 + s] -= 1.0;
        }
        rows.push(v);
    }
    let mut m = Array2::zeros((rows.len(), N_TETRA));
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).assign(r);
    }
    m
}

impl TnfKernel {
    pub fn build() -> Result<Self> {
        let constraints = constraint_matrix();
        let n_constraints = constraints.nrows();
        // Zero-pad to square so the SVD returns the full right-singular basis.
        let padded = DMatrix::<f64>::from_fn(N_TETRA, N_TETRA, |i, j| {
            if i < n_constraints {
                constraints[[i, j]]
            } else {
                0.0
            }
        });
        let svd = padded.svd(false, true);
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::Kernel("SVD did not return right singular vectors".into()))?;

        let mut null_rows = Vec::new();
        let mut null_sigma_max = 0.0f64;
        let mut range_sigma_min = f64::INFINITY;
        for (i, &sigma) in svd.singular_values.iter().enumerate() {
            if (sigma - SVD_THRESHOLD).abs() < GAP_TOLERANCE * SVD_THRESHOLD.max(sigma) {
                return Err(Error::Kernel(format!(
                    "singular value {sigma:e} straddles the threshold"
                )));
            }
            if sigma <= SVD_THRESHOLD {
                null_rows.push(i);
                null_sigma_max = null_sigma_max.max(sigma);
            } else {
                range_sigma_min = range_sigma_min.min(sigma);
            }
        }
        let dim = null_rows.len();
        if dim == 0 {
            return Err(Error::Kernel("constraint system has a trivial null space".into()));
        }

        let mut basis = Array2::zeros((N_TETRA, dim));
        for (col, &row) in null_rows.iter().enumerate() {
            for w in 0..N_TETRA {
                basis[[w, col]] = v_t[(row, w)];
            }
        }
        // Null-space vectors already satisfy v[w] == v[rc(w)] up to rounding;
        // averaging makes the equality exact so strand flips cancel exactly.
        for w in 0..N_TETRA {
            let rc = revcomp_index(w, 4);
            if w < rc {
                for col in 0..dim {
                    let m = 0.5 * (basis[[w, col]] + basis[[rc, col]]);
                    basis[[w, col]] = m;
                    basis[[rc, col]] = m;
                }
            }
        }

        Ok(Self {
            basis,
            n_constraints,
            constraint_rank: N_TETRA - dim,
            null_sigma_max,
            range_sigma_min,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &Array2<f64> {
        &self.basis
    }

    /// `basis^T (f - 1/256)` for a 256-dim frequency vector.
    pub fn project(&self, freqs: &[f64]) -> Vec<f64> {
        let centre = 1.0 / N_TETRA as f64;
        let mut out = vec![0.0; self.dim()];
        for (w, &f) in freqs.iter().enumerate() {
            let c = f - centre;
            for (o, &b) in out.iter_mut().zip(self.basis.row(w)) {
                *o += b * c;
            }
        }
        out
    }

    pub fn tnf(&self, record: &ContigRecord) -> Result<Vec<f64>> {
        let too_short = || Error::TooShort {
            id: record.id.clone(),
            len: record.len(),
            need: 1,
        };
        if record.len() < 4 {
            return Err(too_short());
        }
        let (counts, total) = kmer_counts(&record.seq, 4);
        if total == 0 {
            return Err(too_short());
        }
        let freqs: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(self.project(&freqs))
    }
}
