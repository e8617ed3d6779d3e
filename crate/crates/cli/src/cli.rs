use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "taxkd",
    version,
    about = "Correct noisy taxonomic pseudo-labels of metagenomic contigs by hierarchical distillation"
)]
pub struct Cli {
    /// Worker threads for featurization and inference (0 = all cores, 1 = sequential)
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Only log warnings and errors
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the TNF projection basis as TSV (one row per 4-mer)
    Kernel(KernelArgs),
    /// Build the student feature cache from FASTA and an abundance table
    Featurize(FeaturizeArgs),
    /// Embed contigs with the built-in k-mer projection embedder
    Embed(EmbedArgs),
    /// Train teacher head and student, write a checkpoint and loss history
    Train(TrainArgs),
    /// Decode corrected labels with a trained student
    Predict(PredictArgs),
    /// Score predictions or labels against ground truth
    Eval(EvalArgs),
    /// Count before/after status transitions against ground truth
    Transitions(TransitionsArgs),
    /// Generate a synthetic labeled metagenome with noisy pseudo-labels
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct KernelArgs {
    /// Output TSV
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct LengthArgs {
    /// Minimum contig length kept (bp)
    #[arg(long, default_value_t = taxkd::features::DEFAULT_MIN_LENGTH)]
    pub min_length: usize,

    /// Maximum contig length kept (bp) [default: no limit]
    #[arg(long)]
    pub max_length: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// Contig FASTA
    #[arg(long)]
    pub fasta: PathBuf,

    /// Abundance TSV: contig_id, then one column per sample
    #[arg(long)]
    pub abundances: PathBuf,

    /// Output feature cache (TXDF)
    #[arg(long, short)]
    pub out: PathBuf,

    #[command(flatten)]
    pub lengths: LengthArgs,

    /// Keep raw TNF projections instead of z-scoring each column
    #[arg(long)]
    pub raw_tnf: bool,
}

#[derive(Debug, Args, Clone)]
pub struct EmbedderArgs {
    /// Width of the k-mer projection embedding
    #[arg(long, default_value_t = taxkd::teacher::DEFAULT_EMBED_DIM)]
    pub embed_dim: usize,

    /// Seed of the projection matrix
    #[arg(long, default_value_t = 0)]
    pub embed_seed: u64,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Contig FASTA
    #[arg(long)]
    pub fasta: PathBuf,

    /// Output embeddings (TXDE binary)
    #[arg(long, short)]
    pub out: PathBuf,

    #[command(flatten)]
    pub lengths: LengthArgs,

    #[command(flatten)]
    pub embedder: EmbedderArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Feature cache from `featurize`
    #[arg(long)]
    pub features: PathBuf,

    /// Pseudo-label TSV: contig_id, lineage
    #[arg(long)]
    pub labels: PathBuf,

    /// Teacher embeddings (TSV or TXDE); overrides --fasta
    #[arg(long)]
    pub embeddings: Option<PathBuf>,

    /// Contig FASTA for the built-in projection embedder
    #[arg(long, required_unless_present = "embeddings")]
    pub fasta: Option<PathBuf>,

    #[command(flatten)]
    pub embedder: EmbedderArgs,

    /// Feed embeddings to the teacher head without z-scoring columns
    #[arg(long)]
    pub raw_embeddings: bool,

    /// Output checkpoint (TXDM)
    #[arg(long, short)]
    pub out: PathBuf,

    /// Output loss-history TSV
    #[arg(long)]
    pub history: PathBuf,

    /// key=value file with training settings; flags take precedence
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Weight of the hierarchical loss in the student objective [default: 0.3]
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Distillation temperature [default: 4]
    #[arg(long)]
    pub tau: Option<f64>,

    /// Training epochs [default: 100]
    #[arg(long)]
    pub epochs: Option<usize>,

    /// Mini-batch size [default: 64]
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Student learning rate [default: 0.001]
    #[arg(long)]
    pub lr_student: Option<f64>,

    /// Teacher-head learning rate [default: 0.0001]
    #[arg(long)]
    pub lr_teacher: Option<f64>,

    /// Decoupled weight decay [default: 0.0001]
    #[arg(long)]
    pub weight_decay: Option<f64>,

    /// Seed for initialization and batch order [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Seeded batch order (false draws it from OS entropy) [default: true]
    #[arg(long)]
    pub deterministic: Option<bool>,

    /// Student hidden widths, comma separated [default: 512,512]
    #[arg(long, value_delimiter = ',')]
    pub student_hidden: Option<Vec<usize>>,

    /// Teacher-head hidden widths, comma separated; "none" for a linear head [default: none]
    #[arg(long)]
    pub teacher_hidden: Option<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Checkpoint from `train`
    #[arg(long)]
    pub model: PathBuf,

    /// Feature cache from `featurize`
    #[arg(long)]
    pub features: PathBuf,

    /// Output predictions TSV
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions or label TSV to score
    #[arg(long)]
    pub predictions: PathBuf,

    /// Ground-truth label TSV
    #[arg(long)]
    pub truth: PathBuf,

    /// 0-based evaluation rank [default: deepest rank in the truth]
    #[arg(long)]
    pub rank: Option<usize>,

    /// Output metrics TSV
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransitionsArgs {
    /// Labels before correction (e.g. pseudo-labels)
    #[arg(long)]
    pub before: PathBuf,

    /// Labels after correction (e.g. predictions)
    #[arg(long)]
    pub after: PathBuf,

    /// Ground-truth label TSV
    #[arg(long)]
    pub truth: PathBuf,

    /// 0-based evaluation rank [default: deepest rank in the truth]
    #[arg(long)]
    pub rank: Option<usize>,

    /// Output 3x3 TSV
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory (created if absent)
    #[arg(long)]
    pub out_dir: PathBuf,

    /// Random seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    /// Branching factor per rank, comma separated
    #[arg(long, value_delimiter = ',', default_value = "2,2,5")]
    pub tree_shape: Vec<usize>,

    /// Number of contigs
    #[arg(long, default_value_t = 3000)]
    pub n_contigs: usize,

    /// Shortest contig (bp)
    #[arg(long, default_value_t = 2000)]
    pub min_length: usize,

    /// Longest contig (bp)
    #[arg(long, default_value_t = 10_000)]
    pub max_length: usize,

    /// Number of samples (abundance columns)
    #[arg(long, default_value_t = 4)]
    pub samples: usize,

    /// Order of the genome Markov chains
    #[arg(long, default_value_t = 3)]
    pub markov_order: usize,

    /// Fraction of pseudo-labels moved to another species
    #[arg(long, default_value_t = 0.2)]
    pub p_wrong: f64,

    /// Fraction of pseudo-labels truncated to an ancestor or unassigned
    #[arg(long, default_value_t = 0.2)]
    pub p_drop: f64,

    /// Wrong labels only move to sibling species
    #[arg(long)]
    pub siblings_only: bool,
}
