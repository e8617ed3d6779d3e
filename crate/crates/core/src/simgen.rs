//! Synthetic labeled metagenomes: Markov-chain genomes on a regular
//! taxonomy, random contigs, sample abundances and noisy pseudo-labels.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, LogNormal};

use crate::distill::seeded_stream;
use crate::error::{Error, Result};
use crate::features::{write_fasta, ContigRecord};
use crate::inference::write_label_tsv;
use crate::par::{self, Exec};
use crate::taxonomy::RankedPath;

const RANK_PREFIXES: [&str; 7] = ["d__", "p__", "c__", "o__", "f__", "g__", "s__"];
const GENOME_FACTOR: usize = 10;
/// Abundance values are written in these units.
const ABUNDANCE_SCALE: f64 = 100.0;
const DEPTH_SIGMA: f64 = 0.25;

const STREAM_CONTIGS: u64 = 1;
const STREAM_ABUNDANCE: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_SPECIES_BASE: u64 = 1 << 32;

pub const FASTA_FILE: &str = "contigs.fna";
pub const LABELS_FILE: &str = "labels.tsv";
pub const ABUNDANCE_FILE: &str = "abundance.tsv";
pub const TRUTH_FILE: &str = "truth.tsv";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub tree_shape: Vec<usize>,
    pub n_contigs: usize,
    pub length_range: (usize, usize),
    pub n_samples: usize,
    pub markov_order: usize,
    pub p_wrong: f64,
    pub p_drop: f64,
    pub siblings_only: bool,
    /// Defaults to ten times the longest contig.
    pub genome_length: Option<usize>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tree_shape: vec![2, 2, 5],
            n_contigs: 3000,
            length_range: (2000, 10_000),
            n_samples: 4,
            markov_order: 3,
            p_wrong: 0.2,
            p_drop: 0.2,
            siblings_only: false,
            genome_length: None,
            seed: 42,
        }
    }
}

impl SimConfig {
    pub fn n_species(&self) -> usize {
        self.tree_shape.iter().product()
    }

    pub fn genome_len(&self) -> usize {
        self.genome_length
            .unwrap_or(GENOME_FACTOR * self.length_range.1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.tree_shape.is_empty() || self.tree_shape.len() > RANK_PREFIXES.len() {
            return bad(format!(
                "tree shape needs 1..={} ranks, got {}",
                RANK_PREFIXES.len(),
                self.tree_shape.len()
            ));
        }
        if self.tree_shape.contains(&0) {
            return bad("branching factors must be >= 1".into());
        }
        if self.n_species() < 2 {
            return bad("need at least two species".into());
        }
        for (name, p) in [("p_wrong", self.p_wrong), ("p_drop", self.p_drop)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.p_wrong + self.p_drop > 1.0 {
            return bad(format!(
                "p_wrong + p_drop = {} exceeds 1",
                self.p_wrong + self.p_drop
            ));
        }
        let (lo, hi) = self.length_range;
        if lo < 4 || lo > hi {
            return bad(format!("length range [{lo}, {hi}] needs 4 <= min <= max"));
        }
        if self.n_contigs == 0 || self.n_samples == 0 {
            return bad("n_contigs and n_samples must be positive".into());
        }
        if self.markov_order > 8 {
            return bad(format!("markov order {} is above 8", self.markov_order));
        }
        if self.genome_len() < hi {
            return bad(format!(
                "genome length {} is shorter than the longest contig {hi}",
                self.genome_len()
            ));
        }
        Ok(())
    }

    fn manifest(&self) -> String {
        let shape: Vec<String> = self.tree_shape.iter().map(|b| b.to_string()).collect();
        let mut s = String::new();
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "tree_shape={}", shape.join(","));
        let _ = writeln!(s, "n_species={}", self.n_species());
        let _ = writeln!(s, "n_contigs={}", self.n_contigs);
        let _ = writeln!(s, "min_length={}", self.length_range.0);
        let _ = writeln!(s, "max_length={}", self.length_range.1);
        let _ = writeln!(s, "genome_length={}", self.genome_len());
        let _ = writeln!(s, "n_samples={}", self.n_samples);
        let _ = writeln!(s, "markov_order={}", self.markov_order);
        let _ = writeln!(s, "p_wrong={}", self.p_wrong);
        let _ = writeln!(s, "p_drop={}", self.p_drop);
        let _ = writeln!(s, "siblings_only={}", self.siblings_only);
        s
    }
}

/// Which noise, if any, hit a contig's pseudo-label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Clean,
    Wrong,
    Dropped,
}

#[derive(Debug, Clone)]
pub struct SimCorpus {
    pub config: SimConfig,
    pub records: Vec<ContigRecord>,
    /// Source species index per contig.
    pub species: Vec<usize>,
    pub truth: Vec<RankedPath>,
    pub labels: Vec<RankedPath>,
    pub noise: Vec<Noise>,
    pub sample_names: Vec<String>,
    /// `n_contigs x n_samples`.
    pub abundance: Vec<Vec<f64>>,
}

/// Lineage of species `s`; names encode the branch taken at every rank.
pub fn species_path(shape: &[usize], s: usize) -> RankedPath {
    let mut digits = vec![0; shape.len()];
    let mut rest = s;
    for (d, &b) in digits.iter_mut().zip(shape).rev() {
        *d = rest % b;
        rest /= b;
    }
    let mut labels = Vec::with_capacity(shape.len());
    let mut code = String::new();
    for (r, d) in digits.iter().enumerate() {
        if r > 0 {
            code.push('_');
        }
        code.push_str(&d.to_string());
        labels.push(format!("{}R{code}", RANK_PREFIXES[r]));
    }
    RankedPath::new(labels).expect("generated labels are non-empty")
}

/// Order-`k` Markov chain over ACGT with Dirichlet(1) transition rows.
fn markov_genome(order: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    const BASES: [u8; 4] = *b"ACGT";
    let n_ctx = 1usize << (2 * order);
    let table: Vec<[f64; 4]> = (0..n_ctx)
        .map(|_| {
            let e: [f64; 4] = std::array::from_fn(|_| Exp1.sample(rng));
            let sum: f64 = e.iter().sum();
            e.map(|x| x / sum)
        })
        .collect();
    let mask = n_ctx - 1;
    let mut ctx = 0usize;
    let mut seq = Vec::with_capacity(len);
    for i in 0..len {
        let code = if i < order {
            rng.random_range(0..4)
        } else {
            let row = &table[ctx];
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = 3;
            for (c, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    pick = c;
                    break;
                }
            }
            pick
        };
        seq.push(BASES[code]);
        ctx = ((ctx << 2) | code) & mask;
    }
    seq
}

fn dirichlet_ones(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|x| x / sum).collect()
}

pub fn simulate(config: &SimConfig, exec: Exec) -> Result<SimCorpus> {
    config.validate()?;
    let n_species = config.n_species();
    let genome_len = config.genome_len();
    let genomes = par::map_range(exec, n_species, |s| {
        let mut rng = seeded_stream(config.seed, STREAM_SPECIES_BASE + s as u64);
        markov_genome(config.markov_order, genome_len, &mut rng)
    });
    let truths: Vec<RankedPath> = (0..n_species)
        .map(|s| species_path(&config.tree_shape, s))
        .collect();

    let mut rng = seeded_stream(config.seed, STREAM_CONTIGS);
    let (lo, hi) = config.length_range;
    let mut records = Vec::with_capacity(config.n_contigs);
    let mut species = Vec::with_capacity(config.n_contigs);
    for i in 0..config.n_contigs {
        let s = rng.random_range(0..n_species);
        let len = rng.random_range(lo..=hi);
        let start = rng.random_range(0..=genome_len - len);
        records.push(ContigRecord::new(
            format!("sim_{i}"),
            &genomes[s][start..start + len],
        ));
        species.push(s);
    }

    let mut rng = seeded_stream(config.seed, STREAM_ABUNDANCE);
    // per_sample[k][s]
    let per_sample: Vec<Vec<f64>> = (0..config.n_samples)
        .map(|_| dirichlet_ones(n_species, &mut rng))
        .collect();
    let depth_noise = LogNormal::new(0.0, DEPTH_SIGMA).expect("valid lognormal");
    let abundance: Vec<Vec<f64>> = species
        .iter()
        .map(|&s| {
            per_sample
                .iter()
                .map(|a| a[s] * depth_noise.sample(&mut rng) * ABUNDANCE_SCALE)
                .collect()
        })
        .collect();

    let mut rng = seeded_stream(config.seed, STREAM_NOISE);
    let parent_width = *config.tree_shape.last().expect("validated shape");
    let mut labels = Vec::with_capacity(config.n_contigs);
    let mut noise = Vec::with_capacity(config.n_contigs);
    for &s in &species {
        let u: f64 = rng.random();
        let truth = &truths[s];
        if u < config.p_wrong {
            let family = s / parent_width * parent_width;
            let pool: Vec<usize> = if config.siblings_only && parent_width > 1 {
                (family..family + parent_width).filter(|&o| o != s).collect()
            } else {
                (0..n_species).filter(|&o| o != s).collect()
            };
            let other = *pool.choose(&mut rng).expect("at least two species");
            labels.push(truths[other].clone());
            noise.push(Noise::Wrong);
        } else if u < config.p_wrong + config.p_drop {
            let keep = rng.random_range(0..truth.depth());
            labels.push(truth.truncated(keep));
            noise.push(Noise::Dropped);
        } else {
            labels.push(truth.clone());
            noise.push(Noise::Clean);
        }
    }

    Ok(SimCorpus {
        config: config.clone(),
        records,
        truth: species.iter().map(|&s| truths[s].clone()).collect(),
        species,
        labels,
        noise,
        sample_names: (0..config.n_samples).map(|k| format!("sample{k}")).collect(),
        abundance,
    })
}

/// Paths of the files written by [`SimCorpus::write_to`].
#[derive(Debug, Clone)]
pub struct SimFiles {
    pub fasta: PathBuf,
    pub labels: PathBuf,
    pub abundance: PathBuf,
    pub truth: PathBuf,
    pub manifest: PathBuf,
}

impl SimFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            fasta: dir.join(FASTA_FILE),
            labels: dir.join(LABELS_FILE),
            abundance: dir.join(ABUNDANCE_FILE),
            truth: dir.join(TRUTH_FILE),
            manifest: dir.join(MANIFEST_FILE),
        }
    }
}

impl SimCorpus {
    pub fn ids(&self) -> Vec<String> {
        self.records.iter().map(|r| r.id.clone()).collect()
    }

    pub fn write_fasta<W: Write>(&self, w: W) -> Result<()> {
        write_fasta(&self.records, w)
    }

    pub fn write_labels<W: Write>(&self, w: W) -> Result<()> {
        write_label_tsv(w, &self.ids().into_iter().zip(self.labels.clone()).collect::<Vec<_>>())
    }

    pub fn write_truth<W: Write>(&self, w: W) -> Result<()> {
        write_label_tsv(w, &self.ids().into_iter().zip(self.truth.clone()).collect::<Vec<_>>())
    }

    pub fn write_abundance<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "contig_id\t{}", self.sample_names.join("\t"))?;
        for (r, row) in self.records.iter().zip(&self.abundance) {
            write!(w, "{}", r.id)?;
            for v in row {
                write!(w, "\t{v:.6}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn write_manifest<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.config.manifest().as_bytes())?;
        writeln!(w, "fasta={FASTA_FILE}")?;
        writeln!(w, "labels={LABELS_FILE}")?;
        writeln!(w, "abundance={ABUNDANCE_FILE}")?;
        writeln!(w, "truth={TRUTH_FILE}")?;
        Ok(())
    }

    /// Writes all five files into `dir`, creating it if needed.
    pub fn write_to(&self, dir: &Path) -> Result<SimFiles> {
        fs::create_dir_all(dir)?;
        let files = SimFiles::in_dir(dir);
        let open = |p: &Path| -> Result<BufWriter<fs::File>> { Ok(BufWriter::new(fs::File::create(p)?)) };
        let mut w = open(&files.fasta)?;
        self.write_fasta(&mut w)?;
        w.flush()?;
        let mut w = open(&files.labels)?;
        self.write_labels(&mut w)?;
        w.flush()?;
        let mut w = open(&files.truth)?;
        self.write_truth(&mut w)?;
        w.flush()?;
        let mut w = open(&files.abundance)?;
        self.write_abundance(&mut w)?;
        w.flush()?;
        let mut w = open(&files.manifest)?;
        self.write_manifest(&mut w)?;
        w.flush()?;
        Ok(files)
    }
}
