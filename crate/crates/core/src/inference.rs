//! Threshold decoding of hierarchical predictions, species-level scoring
//! and before/after label transitions.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{BufRead, Write};

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::neuralnet::Mlp;
use crate::par::{self, Exec};
use crate::taxonomy::{leaf_probabilities, node_probabilities, RankedPath, TaxTree, ROOT};

/// Descend into the best child only while its probability exceeds this.
pub const DESCEND_THRESHOLD: f64 = 0.5;
/// Report the deepest visited node whose probability reaches this.
pub const REPORT_THRESHOLD: f64 = 0.80;

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub contig_id: String,
    /// Empty when unassigned.
    pub path: RankedPath,
    pub node_prob: f64,
    pub leaf_argmax: usize,
}

/// Decoded node plus the probabilities along the visited chain (root first).
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub node: usize,
    pub node_prob: f64,
    pub leaf_argmax: usize,
    pub chain: Vec<(usize, f64)>,
}

/// Greedy descent through children above [`DESCEND_THRESHOLD`], then report
/// the deepest visited node at or above [`REPORT_THRESHOLD`]. Ties between
/// children go to the one with the lower leaf slot.
pub fn decode_node(tree: &TaxTree, leaf_probs: &[f64]) -> Result<Decoded> {
    let probs = node_probabilities(tree, leaf_probs)?;
    let mut chain = vec![(ROOT, probs[ROOT])];
    let mut current = ROOT;
    loop {
        let children = &tree.nodes()[current].children;
        // children are in leaf-slot order; strict > keeps the first on ties
        let best = children.iter().copied().fold(None, |best: Option<usize>, c| match best {
            Some(b) if probs[c] <= probs[b] => Some(b),
            _ => Some(c),
        });
        match best {
            Some(c) if probs[c] > DESCEND_THRESHOLD => {
                chain.push((c, probs[c]));
                current = c;
            }
            _ => break,
        }
    }
    assert!(
        chain.windows(2).all(|w| w[1].1 <= w[0].1),
        "decode chain probabilities increased with depth"
    );
    let (node, node_prob) = chain
        .iter()
        .rev()
        .find(|&&(id, p)| id == ROOT || p >= REPORT_THRESHOLD)
        .copied()
        .expect("root is always on the chain");
    // the root's mass is 1 by definition; the fold can land an ulp short
    let node_prob = if node == ROOT { 1.0 } else { node_prob };
    let leaf_argmax = leaf_probs
        .iter()
        .enumerate()
        .fold(0, |best, (i, &p)| if p > leaf_probs[best] { i } else { best });
    Ok(Decoded {
        node,
        node_prob,
        leaf_argmax,
        chain,
    })
}

pub fn decode(tree: &TaxTree, contig_id: &str, leaf_probs: &[f64]) -> Result<Prediction> {
    let d = decode_node(tree, leaf_probs)?;
    Ok(Prediction {
        contig_id: contig_id.to_string(),
        path: tree.path_of(d.node),
        node_prob: d.node_prob,
        leaf_argmax: d.leaf_argmax,
    })
}

/// Student forward pass plus decoding, row by row in input order.
pub fn predict(
    tree: &TaxTree,
    student: &Mlp,
    ids: &[String],
    features: ArrayView2<f64>,
    exec: Exec,
) -> Result<Vec<Prediction>> {
    if ids.len() != features.nrows() {
        return Err(Error::Shape(format!(
            "{} ids for {} feature rows",
            ids.len(),
            features.nrows()
        )));
    }
    const CHUNK: usize = 256;
    let starts: Vec<usize> = (0..ids.len()).step_by(CHUNK).collect();
    let chunks = par::map(exec, &starts, |&start| -> Result<Vec<Prediction>> {
        let end = (start + CHUNK).min(ids.len());
        let logits = student.forward(features.slice(ndarray::s![start..end, ..]))?;
        logits
            .rows()
            .into_iter()
            .zip(&ids[start..end])
            .map(|(row, id)| {
                let probs = leaf_probabilities(&row.to_vec())?;
                decode(tree, id, &probs)
            })
            .collect()
    });
    let mut out = Vec::with_capacity(ids.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    Correct,
    Wrong,
    NoLabel,
}

impl Status {
    pub const ALL: [Status; 3] = [Status::Correct, Status::Wrong, Status::NoLabel];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Correct => "Correct",
            Status::Wrong => "Wrong",
            Status::NoLabel => "NoLabel",
        })
    }
}

/// Scores one call at `rank` (0-based): a call deeper than `rank` is judged
/// by its ancestor at `rank`.
pub fn classify(predicted: &RankedPath, truth: &RankedPath, rank: usize) -> Status {
    if predicted.depth() <= rank {
        Status::NoLabel
    } else if predicted.truncated(rank + 1) == truth.truncated(rank + 1) {
        Status::Correct
    } else {
        Status::Wrong
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalCounts {
    pub correct: u64,
    pub wrong: u64,
    pub no_label: u64,
}

impl EvalCounts {
    pub fn new(correct: u64, wrong: u64, no_label: u64) -> Self {
        Self {
            correct,
            wrong,
            no_label,
        }
    }

    pub fn n_total(&self) -> u64 {
        self.correct + self.wrong + self.no_label
    }

    fn add(&mut self, s: Status) {
        match s {
            Status::Correct => self.correct += 1,
            Status::Wrong => self.wrong += 1,
            Status::NoLabel => self.no_label += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

/// Recall over all contigs, precision over called contigs, F1 their
/// harmonic mean; empty denominators give 0.
pub fn metrics(counts: &EvalCounts) -> Result<Metrics> {
    let n = counts.n_total();
    if n == 0 {
        return Err(Error::Empty("no contigs to score".into()));
    }
    let c = counts.correct as f64;
    let recall = c / n as f64;
    let called = counts.correct + counts.wrong;
    let precision = if called == 0 { 0.0 } else { c / called as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Metrics {
        recall,
        precision,
        f1,
    })
}

/// Deepest 0-based rank present among the truth paths.
pub fn deepest_rank(truth: &HashMap<String, RankedPath>) -> Option<usize> {
    truth.values().map(|p| p.depth()).max().filter(|&d| d > 0).map(|d| d - 1)
}

/// Per-contig status, keyed by id.
pub fn statuses<'a, I>(
    calls: I,
    truth: &HashMap<String, RankedPath>,
    rank: usize,
) -> Result<HashMap<String, Status>>
where
    I: IntoIterator<Item = (&'a str, &'a RankedPath)>,
{
    let mut out = HashMap::new();
    let mut missing = BTreeSet::new();
    for (id, path) in calls {
        match truth.get(id) {
            Some(t) if t.depth() > rank => {
                out.insert(id.to_string(), classify(path, t, rank));
            }
            _ => {
                missing.insert(id.to_string());
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingTruth(missing.into_iter().collect()));
    }
    Ok(out)
}

pub fn evaluate(
    predictions: &[Prediction],
    truth: &HashMap<String, RankedPath>,
    rank: usize,
) -> Result<EvalCounts> {
    let s = statuses(
        predictions.iter().map(|p| (p.contig_id.as_str(), &p.path)),
        truth,
        rank,
    )?;
    Ok(count(s.values().copied()))
}

pub fn count<I: IntoIterator<Item = Status>>(statuses: I) -> EvalCounts {
    let mut c = EvalCounts::default();
    for s in statuses {
        c.add(s);
    }
    c
}

/// `matrix[before][after]` over `Status::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Transitions(pub [[u64; 3]; 3]);

impl Transitions {
    pub fn get(&self, before: Status, after: Status) -> u64 {
        self.0[before.index()][after.index()]
    }

    pub fn before_counts(&self) -> EvalCounts {
        let r = |i: usize| self.0[i].iter().sum();
        EvalCounts::new(r(0), r(1), r(2))
    }

    pub fn after_counts(&self) -> EvalCounts {
        let c = |j: usize| (0..3).map(|i| self.0[i][j]).sum();
        EvalCounts::new(c(0), c(1), c(2))
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "before\\after\tCorrect\tWrong\tNoLabel")?;
        for b in Status::ALL {
            let row = &self.0[b.index()];
            writeln!(w, "{b}\t{}\t{}\t{}", row[0], row[1], row[2])?;
        }
        Ok(())
    }
}

pub fn transitions(
    before: &HashMap<String, Status>,
    after: &HashMap<String, Status>,
) -> Result<Transitions> {
    let only_before: Vec<&String> = before.keys().filter(|k| !after.contains_key(*k)).collect();
    let only_after: Vec<&String> = after.keys().filter(|k| !before.contains_key(*k)).collect();
    if !only_before.is_empty() || !only_after.is_empty() {
        return Err(Error::Alignment(format!(
            "{} ids only before, {} only after",
            only_before.len(),
            only_after.len()
        )));
    }
    let mut m = Transitions::default();
    for (id, b) in before {
        m.0[b.index()][after[id].index()] += 1;
    }
    Ok(m)
}

/// Reads `contig_id<TAB>path[<TAB>...]`. A first line starting with
/// `contig_id` is a header. Extra columns are ignored, so prediction files
/// load as label files.
pub fn read_label_tsv<R: BufRead>(reader: R) -> Result<HashMap<String, RankedPath>> {
    let mut out = HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (i == 0 && line.starts_with("contig_id")) {
            continue;
        }
        let mut cols = line.split('\t');
        let id = cols.next().unwrap_or_default().trim().to_string();
        if id.is_empty() {
            return Err(Error::parse(i + 1, "empty contig id"));
        }
        let path = RankedPath::parse_line(cols.next().unwrap_or(""), i + 1)?;
        if out.insert(id.clone(), path).is_some() {
            return Err(Error::Duplicate(id));
        }
    }
    Ok(out)
}

pub fn write_label_tsv<W: Write>(mut w: W, rows: &[(String, RankedPath)]) -> Result<()> {
    writeln!(w, "contig_id\tlineage")?;
    for (id, p) in rows {
        writeln!(w, "{id}\t{p}")?;
    }
    Ok(())
}

pub fn write_predictions<W: Write>(mut w: W, predictions: &[Prediction]) -> Result<()> {
    writeln!(w, "contig_id\tpath\tnode_prob")?;
    for p in predictions {
        writeln!(w, "{}\t{}\t{:.6}", p.contig_id, p.path, p.node_prob)?;
    }
    Ok(())
}

pub fn write_eval_report<W: Write>(mut w: W, counts: &EvalCounts, rank: usize) -> Result<()> {
    let m = metrics(counts)?;
    writeln!(w, "rank\tcorrect\twrong\tno_label\tn_total\trecall\tprecision\tf1")?;
    writeln!(
        w,
        "{rank}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
        counts.correct,
        counts.wrong,
        counts.no_label,
        counts.n_total(),
        m.recall,
        m.precision,
        m.f1
    )?;
    Ok(())
}
