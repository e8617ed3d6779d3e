use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{Context, Result};
use taxkd::distill::{write_history_tsv, Checkpoint, TrainData, TrainState};
use taxkd::features::{
    assemble_features, filter_length, load_abundances, parse_fasta, standardize_columns,
    ContigRecord, FeatureMatrix, FeatureOptions, TnfKernel, N_TETRA,
};
use taxkd::inference::{
    count, deepest_rank, predict, read_label_tsv, statuses, transitions, write_eval_report,
    write_predictions, Status,
};
use taxkd::simgen::{simulate, SimConfig, SimFiles};
use taxkd::taxonomy::RankedPath;
use taxkd::teacher::{load_embedding_file, write_embedding_binary, EmbeddingProvider};
use taxkd::Exec;

use crate::cli::*;
use crate::config::{resolve, FileConfig};
use crate::output::{commit_all, require_readable, Staged};
use crate::Invalid;

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn read_records(path: &Path, lengths: &LengthArgs) -> Result<Vec<ContigRecord>> {
    let records = parse_fasta(open(path)?).with_context(|| format!("in {}", path.display()))?;
    let n = records.len();
    let kept = filter_length(records, lengths.min_length, lengths.max_length);
    log::info!("{}: {} of {n} contigs within length bounds", path.display(), kept.len());
    Ok(kept)
}

fn read_labels(path: &Path) -> Result<HashMap<String, RankedPath>> {
    read_label_tsv(open(path)?).with_context(|| format!("in {}", path.display()))
}

fn read_features(path: &Path) -> Result<FeatureMatrix> {
    FeatureMatrix::read_cache(open(path)?).with_context(|| format!("in {}", path.display()))
}

fn check_lengths(lengths: &LengthArgs) -> Result<()> {
    if let Some(max) = lengths.max_length {
        if max < lengths.min_length {
            return Err(Invalid(format!(
                "--max-length {max} is below --min-length {}",
                lengths.min_length
            ))
            .into());
        }
    }
    Ok(())
}

fn kmer_text(code: usize) -> String {
    (0..4)
        .rev()
        .map(|i| b"ACGT"[(code >> (2 * i)) & 3] as char)
        .collect()
}

pub fn kernel(args: &KernelArgs) -> Result<()> {
    let kernel = TnfKernel::build()?;
    log::info!(
        "TNF kernel: {} constraints of rank {}, null space dimension {}",
        kernel.n_constraints,
        kernel.constraint_rank,
        kernel.dim()
    );
    let staged = Staged::write(&args.out, |w| {
        writeln!(w, "# dim\t{}", kernel.dim())?;
        write!(w, "kmer")?;
        for j in 0..kernel.dim() {
            write!(w, "\tb{j}")?;
        }
        writeln!(w)?;
        for code in 0..N_TETRA {
            write!(w, "{}", kmer_text(code))?;
            for v in kernel.basis().row(code) {
                write!(w, "\t{v:.17e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    commit_all(vec![staged])
}

pub fn featurize(args: &FeaturizeArgs, exec: Exec) -> Result<()> {
    require_readable([args.fasta.as_path(), args.abundances.as_path()])?;
    check_lengths(&args.lengths)?;
    let records = read_records(&args.fasta, &args.lengths)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let abundances = load_abundances(open(&args.abundances)?, &ids)
        .with_context(|| format!("in {}", args.abundances.display()))?;
    let kernel = TnfKernel::build()?;
    let options = FeatureOptions {
        standardize_tnf: !args.raw_tnf,
    };
    let features = assemble_features(&records, &kernel, &abundances, options, exec)?;
    log::info!(
        "features: {} contigs x {} columns ({} TNF, {} samples, 1 total)",
        features.n_rows(),
        features.width(),
        features.tnf_dim(),
        features.n_samples
    );
    let staged = Staged::write(&args.out, |w| features.write_cache(w))?;
    commit_all(vec![staged])
}

pub fn embed(args: &EmbedArgs, exec: Exec) -> Result<()> {
    require_readable([args.fasta.as_path()])?;
    check_lengths(&args.lengths)?;
    if args.embedder.embed_dim == 0 {
        return Err(Invalid("--embed-dim must be >= 1".into()).into());
    }
    let records = read_records(&args.fasta, &args.lengths)?;
    let provider = EmbeddingProvider::kmer_projection(args.embedder.embed_dim, args.embedder.embed_seed);
    let emb = provider.embed_all(&records, exec)?;
    let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
    let staged = Staged::write(&args.out, |w| write_embedding_binary(w, &ids, emb.view()))?;
    commit_all(vec![staged])
}

fn teacher_inputs(args: &TrainArgs, ids: &[String], exec: Exec) -> Result<ndarray::Array2<f64>> {
    let mut emb = if let Some(path) = &args.embeddings {
        let provider = load_embedding_file(open(path)?).with_context(|| format!("in {}", path.display()))?;
        log::info!("teacher embeddings: {}", provider.describe());
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        provider.lookup(&refs)?
    } else {
        let fasta = args.fasta.as_ref().expect("clap requires --fasta without --embeddings");
        let mut by_id: HashMap<String, ContigRecord> = parse_fasta(open(fasta)?)
            .with_context(|| format!("in {}", fasta.display()))?
            .into_iter()
            .map(|r| (r.id.clone(), r))
            .collect();
        let missing: Vec<String> = ids.iter().filter(|id| !by_id.contains_key(*id)).cloned().collect();
        if !missing.is_empty() {
            return Err(taxkd::Error::MissingEmbedding(missing).into());
        }
        let records: Vec<ContigRecord> = ids.iter().map(|id| by_id.remove(id).expect("checked")).collect();
        if args.embedder.embed_dim == 0 {
            return Err(Invalid("--embed-dim must be >= 1".into()).into());
        }
        let provider = EmbeddingProvider::kmer_projection(args.embedder.embed_dim, args.embedder.embed_seed);
        log::info!("teacher embeddings: {}", provider.describe());
        provider.embed_all(&records, exec)?
    };
    if !args.raw_embeddings {
        standardize_columns(emb.view_mut());
    }
    Ok(emb)
}

pub fn train(args: &TrainArgs, exec: Exec) -> Result<()> {
    let mut inputs = vec![args.features.as_path(), args.labels.as_path()];
    inputs.extend(args.embeddings.as_deref().or(args.fasta.as_deref()));
    inputs.extend(args.config.as_deref());
    require_readable(inputs)?;
    let file = match &args.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let config = resolve(args, &file)?;

    let features = read_features(&args.features)?;
    let labels = read_labels(&args.labels)?;
    let unlabeled = features.contig_ids.iter().filter(|id| !labels.contains_key(*id)).count();
    if unlabeled > 0 {
        log::info!("{unlabeled} contigs have no pseudo-label row and count as unassigned");
    }
    let teacher_x = teacher_inputs(args, &features.contig_ids, exec)?;
    let (data, tree) = TrainData::align(
        features.contig_ids.clone(),
        features.data.clone(),
        teacher_x,
        &labels,
    )?;
    log::info!(
        "training on {} contigs ({} labeled), tree of {} nodes and {} leaves",
        data.len(),
        data.n_labeled(),
        tree.len(),
        tree.n_leaves()
    );
    let mut state = TrainState::init(&config, &tree, &data)?;
    let every = (config.epochs / 10).max(1);
    while state.epoch < config.epochs {
        let e = state.run_epoch(&tree, &data, |_, _| {})?;
        if e.epoch % every == 0 || e.epoch + 1 == config.epochs {
            log::info!(
                "epoch {:>4}  teacher {:.4}  student-hier {:.4}  kd {:.4}",
                e.epoch,
                e.teacher_hier,
                e.student_hier,
                e.kd
            );
        }
    }
    let ck = Checkpoint::from_state(&tree, &state);
    let staged = vec![
        Staged::write(&args.out, |w| ck.write(w))?,
        Staged::write(&args.history, |w| write_history_tsv(w, &state.history, config.alpha))?,
    ];
    commit_all(staged)
}

pub fn predict_cmd(args: &PredictArgs, exec: Exec) -> Result<()> {
    require_readable([args.model.as_path(), args.features.as_path()])?;
    let ck = Checkpoint::read(open(&args.model)?).with_context(|| format!("in {}", args.model.display()))?;
    let features = read_features(&args.features)?;
    if features.width() != ck.student.input_dim() {
        return Err(taxkd::Error::Shape(format!(
            "features have {} columns but the student expects {}",
            features.width(),
            ck.student.input_dim()
        ))
        .into());
    }
    let preds = predict(&ck.tree, &ck.student, &features.contig_ids, features.data.view(), exec)?;
    let assigned = preds.iter().filter(|p| !p.path.is_unassigned()).count();
    log::info!("{assigned} of {} contigs assigned", preds.len());
    let staged = Staged::write(&args.out, |w| write_predictions(w, &preds))?;
    commit_all(vec![staged])
}

fn eval_rank(rank: Option<usize>, truth: &HashMap<String, RankedPath>) -> Result<usize> {
    match rank {
        Some(r) => Ok(r),
        None => deepest_rank(truth)
            .ok_or_else(|| Invalid("ground truth has no assigned contigs".into()).into()),
    }
}

fn status_map(
    calls: &HashMap<String, RankedPath>,
    truth: &HashMap<String, RankedPath>,
    rank: usize,
) -> Result<HashMap<String, Status>> {
    Ok(statuses(
        calls.iter().map(|(id, p)| (id.as_str(), p)),
        truth,
        rank,
    )?)
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    require_readable([args.predictions.as_path(), args.truth.as_path()])?;
    let calls = read_labels(&args.predictions)?;
    let truth = read_labels(&args.truth)?;
    let rank = eval_rank(args.rank, &truth)?;
    let s = status_map(&calls, &truth, rank)?;
    let counts = count(s.values().copied());
    let staged = Staged::write(&args.out, |w| write_eval_report(w, &counts, rank))?;
    commit_all(vec![staged])
}

pub fn transitions_cmd(args: &TransitionsArgs) -> Result<()> {
    require_readable([args.before.as_path(), args.after.as_path(), args.truth.as_path()])?;
    let truth = read_labels(&args.truth)?;
    let rank = eval_rank(args.rank, &truth)?;
    let before = status_map(&read_labels(&args.before)?, &truth, rank)?;
    let after = status_map(&read_labels(&args.after)?, &truth, rank)?;
    let m = transitions(&before, &after)?;
    let staged = Staged::write(&args.out, |w| m.write_tsv(w))?;
    commit_all(vec![staged])
}

pub fn simulate_cmd(args: &SimulateArgs, exec: Exec) -> Result<()> {
    let config = SimConfig {
        tree_shape: args.tree_shape.clone(),
        n_contigs: args.n_contigs,
        length_range: (args.min_length, args.max_length),
        n_samples: args.samples,
        markov_order: args.markov_order,
        p_wrong: args.p_wrong,
        p_drop: args.p_drop,
        siblings_only: args.siblings_only,
        genome_length: None,
        seed: args.seed,
    };
    config.validate()?;
    let corpus = simulate(&config, exec)?;
    let files = SimFiles::in_dir(&args.out_dir);
    let staged = vec![
        Staged::write(&files.fasta, |w| corpus.write_fasta(w))?,
        Staged::write(&files.labels, |w| corpus.write_labels(w))?,
        Staged::write(&files.abundance, |w| corpus.write_abundance(w))?,
        Staged::write(&files.truth, |w| corpus.write_truth(w))?,
        Staged::write(&files.manifest, |w| corpus.write_manifest(w))?,
    ];
    commit_all(staged)
}
