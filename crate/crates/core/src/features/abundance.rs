use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};

/// Per-contig abundance rows aligned to a contig id list.
#[derive(Debug, Clone, PartialEq)]
pub struct Abundances {
    pub sample_names: Vec<String>,
    /// Row-normalized composition; all-zero rows stay zero.
    pub rows: Vec<Vec<f64>>,
    pub raw_totals: Vec<f64>,
    /// `log1p(raw_total)` z-scored over the rows.
    pub z_totals: Vec<f64>,
}

impl Abundances {
    pub fn n_samples(&self) -> usize {
        self.sample_names.len()
    }
}

/// Parses `contig_id<TAB>s1..sK` and aligns rows to `contig_ids`.
pub fn load_abundances<R: BufRead>(reader: R, contig_ids: &[String]) -> Result<Abundances> {
    let mut lines = reader.lines().enumerate();
    let sample_names: Vec<String> = loop {
        let Some((_, line)) = lines.next() else {
            return Err(Error::Format("abundance table has no header".into()));
        };
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        cols.next();
        break cols.map(str::to_string).collect();
    };
    if sample_names.is_empty() {
        return Err(Error::Format("abundance table has no sample columns".into()));
    }

    let mut table: HashMap<String, Vec<f64>> = HashMap::new();
    for (i, line) in lines {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let mut cols = line.split('\t');
        let id = cols.next().unwrap_or_default().to_string();
        let values = cols
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(lineno, format!("{c:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != sample_names.len() {
            return Err(Error::parse(
                lineno,
                format!("{} values, expected {}", values.len(), sample_names.len()),
            ));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Value(format!(
                "abundance {v} for {id} at line {lineno} must be finite and >= 0"
            )));
        }
        if table.insert(id.clone(), values).is_some() {
            return Err(Error::Duplicate(id));
        }
    }

    let missing: Vec<String> = contig_ids
        .iter()
        .filter(|id| !table.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingAbundance(missing));
    }

    let mut rows = Vec::with_capacity(contig_ids.len());
    let mut raw_totals = Vec::with_capacity(contig_ids.len());
    for id in contig_ids {
        let raw = &table[id];
        let total: f64 = raw.iter().sum();
        raw_totals.push(total);
        rows.push(if total > 0.0 {
            raw.iter().map(|v| v / total).collect()
        } else {
            vec![0.0; raw.len()]
        });
    }
    let z_totals = zscore_log_totals(&raw_totals);
    Ok(Abundances {
        sample_names,
        rows,
        raw_totals,
        z_totals,
    })
}

/// `log1p` then population z-score; zero spread gives all zeros.
pub fn zscore_log_totals(totals: &[f64]) -> Vec<f64> {
    if totals.is_empty() {
        return Vec::new();
    }
    let logs: Vec<f64> = totals.iter().map(|t| t.ln_1p()).collect();
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 || !sd.is_finite() {
        return vec![0.0; logs.len()];
    }
    logs.iter().map(|x| (x - mean) / sd).collect()
}
