use std::collections::HashSet;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContigRecord {
    pub id: String,
    /// Uppercase, over `ACGTN`.
    pub seq: Vec<u8>,
}

impl ContigRecord {
    pub fn new(id: impl Into<String>, seq: &[u8]) -> Self {
        Self {
            id: id.into(),
            seq: seq.iter().map(|&b| normalize_base(b).0).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }
}

/// Uppercases and maps anything outside `ACGTN` to `N`. The flag reports a
/// replacement.
fn normalize_base(b: u8) -> (u8, bool) {
    match b.to_ascii_uppercase() {
        c @ (b'A' | b'C' | b'G' | b'T' | b'N') => (c, false),
        _ => (b'N', true),
    }
}

pub fn parse_fasta<R: BufRead>(reader: R) -> Result<Vec<ContigRecord>> {
    let mut records: Vec<ContigRecord> = Vec::new();
    let mut ids = HashSet::new();
    let mut replaced = 0usize;

    for (lineno, line) in reader.split(b'\n').enumerate() {
        let mut line = line?;
        if line.last() == Some(&b'\r') {
            line.pop();
        }
        if let Some(header) = line.strip_prefix(b">") {
            let header = String::from_utf8_lossy(header);
            let id = header.split_whitespace().next().unwrap_or("").to_string();
            if id.is_empty() {
                return Err(Error::parse(lineno + 1, "empty FASTA header"));
            }
            if !ids.insert(id.clone()) {
                return Err(Error::Duplicate(id));
            }
            records.push(ContigRecord {
                id,
                seq: Vec::new(),
            });
            continue;
        }
        let trimmed: Vec<u8> = line
            .iter()
            .copied()
            .filter(|b| !b.is_ascii_whitespace())
            .collect();
        if trimmed.is_empty() {
            continue;
        }
        let Some(rec) = records.last_mut() else {
            return Err(Error::parse(lineno + 1, "sequence data before first header"));
        };
        for b in trimmed {
            let (c, swapped) = normalize_base(b);
            replaced += usize::from(swapped);
            rec.seq.push(c);
        }
    }
    if replaced > 0 {
        log::warn!("replaced {replaced} non-ACGTN characters with N");
    }
    Ok(records)
}

pub fn write_fasta<W: Write>(records: &[ContigRecord], mut out: W) -> Result<()> {
    for rec in records {
        writeln!(out, ">{}", rec.id)?;
        for chunk in rec.seq.chunks(80) {
            out.write_all(chunk)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn reverse_complement(seq: &[u8]) -> Vec<u8> {
    seq.iter()
        .rev()
        .map(|&b| match b {
            b'A' => b'T',
            b'C' => b'G',
            b'G' => b'C',
            b'T' => b'A',
            other => other,
        })
        .collect()
}

/// Keeps records with `min <= len <= max`.
pub fn filter_length(
    records: Vec<ContigRecord>,
    min: usize,
    max: Option<usize>,
) -> Vec<ContigRecord> {
    let before = records.len();
    let kept: Vec<_> = records
        .into_iter()
        .filter(|r| r.len() >= min && max.is_none_or(|m| r.len() <= m))
        .collect();
    if kept.len() < before {
        log::info!(
            "length filter [{min}, {}] dropped {} of {before} contigs",
            max.map_or("inf".to_string(), |m| m.to_string()),
            before - kept.len()
        );
    }
    kept
}
