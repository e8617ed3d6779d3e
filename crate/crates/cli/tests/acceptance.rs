//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taxkd::distill::{hier_loss_ids, kd_loss, soften, DistillConfig, TrainData, TrainState};
use taxkd::features::{
    assemble_features, load_abundances, reverse_complement, ContigRecord, FeatureOptions,
    TnfKernel, N_TETRA,
};
use taxkd::inference::{decode, decode_node, metrics, EvalCounts};
use taxkd::neuralnet::{grad_check, Mlp};
use taxkd::simgen::{simulate, SimConfig};
use taxkd::taxonomy::{leaf_probabilities, node_probabilities, RankedPath, TaxTree, ROOT};
use taxkd::Exec;

type Check = Result<String, String>;

fn data_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn read_tsv(name: &str) -> Vec<Vec<String>> {
    std::fs::read_to_string(data_file(name))
        .expect("fixture")
        .lines()
        .skip(1)
        .map(|l| l.split('\t').map(str::to_string).collect())
        .collect()
}

// 1 ------------------------------------------------------------------------

fn metric_oracle() -> Check {
    let t0 = Instant::now();
    let counts = read_tsv("counts.tsv");
    let table = read_tsv("metrics.tsv");
    let expected: HashMap<(String, String, String), [f64; 3]> = table
        .iter()
        .map(|r| {
            let v = |i: usize| r[i].parse::<f64>().unwrap();
            ((r[0].clone(), r[1].clone(), r[2].clone()), [v(3), v(4), v(5)])
        })
        .collect();
    let mut bad = Vec::new();
    for r in &counts {
        let n = |i: usize| r[i].parse::<u64>().unwrap();
        let m = metrics(&EvalCounts::new(n(4), n(5), n(6))).map_err(|e| e.to_string())?;
        let key = (r[0].clone(), r[2].clone(), r[3].clone());
        let want = expected.get(&key).ok_or_else(|| format!("no metric row for {key:?}"))?;
        let got = [m.f1, m.recall, m.precision];
        if got.iter().zip(want).any(|(g, w)| (g - w).abs() > 0.0005) {
            bad.push(format!(
                "{}/{}/{}: got F1 {:.4} R {:.4} P {:.4}, table {:.4} {:.4} {:.4}",
                key.0, key.1, key.2, got[0], got[1], got[2], want[0], want[1], want[2]
            ));
        }
    }
    let anchors = [
        ((52_060, 2_774, 26_768), [0.7631, 0.6380, 0.9494]),
        ((158_516, 15_499, 13_670), [0.8765, 0.8446, 0.9109]),
    ];
    for ((c, w, u), want) in anchors {
        let m = metrics(&EvalCounts::new(c, w, u)).unwrap();
        for (g, e) in [m.f1, m.recall, m.precision].iter().zip(want) {
            if (g - e).abs() > 0.0001 {
                bad.push(format!("anchor ({c}, {w}, {u}): {g:.4} vs {e:.4}"));
            }
        }
    }
    let elapsed = t0.elapsed();
    if elapsed > Duration::from_secs(1) {
        bad.push(format!("runtime {elapsed:?} exceeds 1 s"));
    }
    let cells = counts.len();
    if bad.is_empty() {
        Ok(format!("{cells} cells and 2 anchors within 0.0005 in {elapsed:.1?}"))
    } else {
        Err(format!("{} of {cells} cells off: {}", bad.len(), bad.join("; ")))
    }
}

// 2 ------------------------------------------------------------------------

fn six_leaf_tree() -> TaxTree {
    let paths: Vec<RankedPath> = [
        "d__A;p__A1;c__a", "d__A;p__A1;c__b", "d__A;p__A2;c__c", "d__B;p__B1;c__d",
        "d__B;p__B1;c__e", "d__B;p__B2;c__f",
    ]
    .iter()
    .map(|s| s.parse().unwrap())
    .collect();
    TaxTree::build(&paths).unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-scale..scale))
}

fn jittered(mut m: Mlp, rng: &mut ChaCha8Rng) -> Mlp {
    let p: Vec<f64> = m.params_flat().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
    m.set_params_flat(&p).unwrap();
    m
}

fn student_objective(
    tree: &TaxTree,
    model: &Mlp,
    x: ArrayView2<f64>,
    teacher: ArrayView2<f64>,
    targets: &[usize],
    alpha: f64,
    tau: f64,
) -> (f64, Array2<f64>) {
    let (z, cache) = model.forward_cached(x).unwrap();
    let (lh, gh) = hier_loss_ids(tree, z.view(), targets).unwrap();
    let (lk, gk) = kd_loss(teacher, z.view(), tau).unwrap();
    let g = &gh * alpha + &gk * (1.0 - alpha);
    let grads = model.backward(&cache, g.view()).unwrap();
    (alpha * lh + (1.0 - alpha) * lk, Array2::from_shape_vec((1, grads.flat().len()), grads.flat()).unwrap())
}

fn gradient_checks() -> Check {
    let t0 = Instant::now();
    let tree = six_leaf_tree();
    assert_eq!(tree.n_leaves(), 6);
    let (alpha, tau, h) = (0.3, 4.0, 1e-5);
    // |N| = 6, batch 4, K = 2 -> student width 103 + 2 + 1
    let (b, width, embed) = (4, 106, 12);
    let leaf = |name: &str| {
        tree.resolve(&format!("d__A;p__A1;c__{name}").parse().unwrap()).unwrap()
    };
    let targets = vec![
        leaf("a"),
        tree.resolve(&"d__B;p__B2;c__f".parse().unwrap()).unwrap(),
        tree.resolve(&"d__A;p__A2".parse().unwrap()).unwrap(),
        ROOT,
    ];
    let _ = leaf("b");
    let mut worst = (0.0f64, 0.0f64);
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_matrix(&mut rng, b, width, 1.0);
        let e = random_matrix(&mut rng, b, embed, 1.0);
        // Jitter so biases are non-zero and no pre-activation sits on a ReLU kink.
        let student = jittered(Mlp::init(&[width, 10, 8, 6], &mut rng).unwrap(), &mut rng);
        let teacher = jittered(Mlp::init(&[embed, 6], &mut rng).unwrap(), &mut rng);
        let t_logits = teacher.forward(e.view()).unwrap();

        // teacher: hierarchical loss only
        let (z, cache) = teacher.forward_cached(e.view()).unwrap();
        let (_, g) = hier_loss_ids(&tree, z.view(), &targets).unwrap();
        let analytic = teacher.backward(&cache, g.view()).unwrap().flat();
        let base = teacher.params_flat();
        let mut probe = teacher.clone();
        let tc = grad_check(
            |p| {
                probe.set_params_flat(p).unwrap();
                let z = probe.forward(e.view()).unwrap();
                hier_loss_ids(&tree, z.view(), &targets).unwrap().0
            },
            &base,
            &analytic,
            h,
        );

        // student: alpha * hier + (1 - alpha) * kd against frozen teacher logits
        let (_, analytic) = student_objective(&tree, &student, x.view(), t_logits.view(), &targets, alpha, tau);
        let base = student.params_flat();
        let mut probe = student.clone();
        let sc = grad_check(
            |p| {
                probe.set_params_flat(p).unwrap();
                student_objective(&tree, &probe, x.view(), t_logits.view(), &targets, alpha, tau).0
            },
            &base,
            analytic.as_slice().unwrap(),
            h,
        );
        worst.0 = worst.0.max(tc.max_rel_error);
        worst.1 = worst.1.max(sc.max_rel_error);
    }
    let elapsed = t0.elapsed();
    let detail = format!(
        "10 seeds, max rel error teacher {:.2e}, student {:.2e} in {elapsed:.1?}",
        worst.0, worst.1
    );
    if worst.0 <= 1e-4 && worst.1 <= 1e-4 && elapsed < Duration::from_secs(30) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 3 ------------------------------------------------------------------------

fn random_tree(rng: &mut ChaCha8Rng) -> TaxTree {
    let prefixes = ["d__", "p__", "c__", "o__", "f__", "g__", "s__"];
    let n_paths = rng.random_range(2..30);
    let max_depth = rng.random_range(1..=6);
    let paths: Vec<RankedPath> = (0..n_paths)
        .map(|_| {
            let depth = rng.random_range(1..=max_depth);
            let labels = (0..depth)
                .map(|r| format!("{}n{}", prefixes[r], rng.random_range(0..3)))
                .collect();
            RankedPath::new(labels).unwrap()
        })
        .collect();
    TaxTree::build(&paths).unwrap()
}

fn probability_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst_sum = 0.0f64;
    let mut worst_root = 0.0f64;
    for case in 0..1000 {
        let tree = random_tree(&mut rng);
        let scale = [0.1, 1.0, 5.0, 30.0][case % 4];
        let logits: Vec<f64> = (0..tree.n_leaves()).map(|_| rng.random_range(-scale..scale)).collect();
        let p = leaf_probabilities(&logits).map_err(|e| e.to_string())?;
        let sum: f64 = p.iter().sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
        let nodes = node_probabilities(&tree, &p).map_err(|e| e.to_string())?;
        worst_root = worst_root.max((nodes[ROOT] - 1.0).abs());
        for (id, node) in tree.nodes().iter().enumerate() {
            if node.children.is_empty() {
                continue;
            }
            let children = node.children.iter().fold(0.0, |acc, &c| acc + nodes[c]);
            if children != nodes[id] {
                return Err(format!("case {case}: node {id} {} != children {children}", nodes[id]));
            }
        }
        let d = decode_node(&tree, &p).map_err(|e| e.to_string())?;
        if d.chain.windows(2).any(|w| w[1].1 > w[0].1) {
            return Err(format!("case {case}: decode chain increases: {:?}", d.chain));
        }
    }
    let detail = format!(
        "1000 trees: max |sum - 1| {worst_sum:.1e}, max |root - 1| {worst_root:.1e}, children sums exact, chains non-increasing"
    );
    if worst_sum <= 1e-12 && worst_root <= 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 4 ------------------------------------------------------------------------

/// Row-mean KL(q_t || q_s) at temperature tau, computed without the
/// library. With `d = (t - s) / tau` centred on its teacher mean,
/// `KL = ln sum_l q_t[l] e^{-d_l}`, evaluated as `ln_1p` of `expm1` terms so
/// near-identical pairs keep their relative precision.
fn kl_reference(t: ArrayView2<f64>, s: ArrayView2<f64>, tau: f64) -> f64 {
    let mut total = 0.0;
    for (tr, sr) in t.rows().into_iter().zip(s.rows()) {
        let m = tr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = tr.iter().map(|v| ((v - m) / tau).exp()).collect();
        let z: f64 = w.iter().sum();
        let q: Vec<f64> = w.iter().map(|v| v / z).collect();
        let d: Vec<f64> = tr.iter().zip(sr.iter()).map(|(a, b)| (a - b) / tau).collect();
        let mean: f64 = q.iter().zip(&d).map(|(a, b)| a * b).sum();
        let inner: f64 = q.iter().zip(&d).map(|(a, b)| a * (-(b - mean)).exp_m1()).sum();
        total += inner.ln_1p();
    }
    total / t.nrows() as f64
}

fn kd_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_rel = 0.0f64;
    let mut min_loss = f64::INFINITY;
    for &tau in &[1.0, 3.0, 4.0, 6.0] {
        for _ in 0..200 {
            let (b, n) = (rng.random_range(1..8), rng.random_range(2..12));
            let t = random_matrix(&mut rng, b, n, 4.0);
            let s = random_matrix(&mut rng, b, n, 4.0);
            let (l, _) = kd_loss(t.view(), s.view(), tau).map_err(|e| e.to_string())?;
            min_loss = min_loss.min(l);
            let (zero, _) = kd_loss(t.view(), t.view(), tau).map_err(|e| e.to_string())?;
            if zero != 0.0 {
                return Err(format!("identical logits gave {zero:e} at tau {tau}"));
            }
            let reference = tau * tau * kl_reference(t.view(), s.view(), tau);
            let rel = (l - reference).abs() / reference.abs().max(1e-300);
            worst_rel = worst_rel.max(rel);
            // soften at tau equals softmax of z / tau
            let row: Vec<f64> = t.row(0).to_vec();
            let scaled: Vec<f64> = row.iter().map(|v| v / tau).collect();
            let a = soften(&row, tau).unwrap();
            let c = leaf_probabilities(&scaled).unwrap();
            if a.iter().zip(&c).any(|(x, y)| (x - y).abs() > 1e-15) {
                return Err("soften disagrees with softmax(z / tau)".into());
            }
        }
    }
    let detail = format!("800 batches: min loss {min_loss:.3e}, identical -> 0, max rel dev from tau^2 * KL {worst_rel:.1e}");
    if min_loss >= 0.0 && worst_rel <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 5 ------------------------------------------------------------------------

fn small_training_set() -> (TrainData, TaxTree) {
    let corpus = simulate(
        &SimConfig {
            n_contigs: 240,
            length_range: (800, 1500),
            ..SimConfig::default()
        },
        Exec::default(),
    )
    .unwrap();
    let ids = corpus.ids();
    let mut tsv = Vec::new();
    corpus.write_abundance(&mut tsv).unwrap();
    let ab = load_abundances(&tsv[..], &ids).unwrap();
    let kernel = TnfKernel::build().unwrap();
    let feats = assemble_features(&corpus.records, &kernel, &ab, FeatureOptions::default(), Exec::default()).unwrap();
    let emb = taxkd::teacher::EmbeddingProvider::kmer_projection(64, 0)
        .embed_all(&corpus.records, Exec::default())
        .unwrap();
    let labels: HashMap<String, RankedPath> = ids.iter().cloned().zip(corpus.labels).collect();
    TrainData::align(ids, feats.data, emb, &labels).unwrap()
}

fn stop_gradient_isolation() -> Check {
    let (data, tree) = small_training_set();
    let base = DistillConfig {
        epochs: 5,
        student_hidden: vec![64, 64],
        ..DistillConfig::default()
    };
    let run = |cfg: &DistillConfig, student_seed: Option<u64>| -> Vec<f64> {
        let mut state = TrainState::init(cfg, &tree, &data).unwrap();
        if let Some(seed) = student_seed {
            let dims = cfg.student_dims(data.student_x.ncols(), tree.n_leaves());
            let student = Mlp::init(&dims, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            state = TrainState::with_models(cfg, student, state.teacher.clone()).unwrap();
        }
        state.run(&tree, &data).unwrap();
        state.teacher.params_flat()
    };
    let a = run(&base, None);
    let b = run(&DistillConfig { alpha: 0.8, ..base.clone() }, None);
    let c = run(&base, Some(1234));
    let same = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits());
    let init = TrainState::init(&base, &tree, &data).unwrap().teacher.params_flat();
    let moved = a.iter().zip(&init).filter(|(p, q)| p != q).count();
    let detail = format!(
        "{} teacher params after 5 epochs ({moved} moved): alpha 0.3 vs 0.8 identical {}, two student inits identical {}",
        a.len(),
        same(&a, &b),
        same(&a, &c)
    );
    if same(&a, &b) && same(&a, &c) && moved > 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 6 ------------------------------------------------------------------------

fn tnf_kernel() -> Check {
    let t0 = Instant::now();
    let kernel = TnfKernel::build().map_err(|e| e.to_string())?;
    let basis = kernel.basis();
    let gram = basis.t().dot(basis);
    let mut orth = 0.0f64;
    for ((i, j), v) in gram.indexed_iter() {
        orth = orth.max((v - if i == j { 1.0 } else { 0.0 }).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut strand = 0.0f64;
    for i in 0..200 {
        let len = rng.random_range(4..3000);
        let seq: Vec<u8> = (0..len).map(|_| b"ACGTN"[rng.random_range(0..if i % 5 == 0 { 5 } else { 4 })]).collect();
        let fwd = ContigRecord::new("f", &seq);
        let rev = ContigRecord::new("r", &reverse_complement(&seq));
        match (kernel.tnf(&fwd), kernel.tnf(&rev)) {
            (Ok(a), Ok(b)) => {
                for (x, y) in a.iter().zip(&b) {
                    strand = strand.max((x - y).abs());
                }
            }
            (Err(_), Err(_)) => {}
            _ => return Err(format!("sequence {i}: only one strand featurized")),
        }
    }
    let elapsed = t0.elapsed();
    let detail = format!(
        "null space dimension {} of {N_TETRA}, orthonormality error {orth:.1e}, strand max diff {strand:.1e} over 200 sequences in {elapsed:.1?}",
        kernel.dim()
    );
    if kernel.dim() == 103 && orth <= 1e-10 && strand <= 1e-12 && elapsed < Duration::from_secs(10) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// 7, 8 ---------------------------------------------------------------------

struct PipelineRun {
    dir: PathBuf,
}

impl PipelineRun {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

fn taxkd(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_taxkd"))
        .args(["--quiet"])
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "taxkd {} failed ({}): {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn pipeline(dir: &Path) -> Result<PipelineRun, String> {
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let steps: [&[&str]; 7] = [
        &["simulate", "--out-dir", "sim", "--seed", "42", "--n-contigs", "3000", "--samples", "4", "--p-wrong", "0.2", "--p-drop", "0.2"],
        &["featurize", "--fasta", "sim/contigs.fna", "--abundances", "sim/abundance.tsv", "--out", "features.txdf"],
        &["train", "--features", "features.txdf", "--labels", "sim/labels.tsv", "--fasta", "sim/contigs.fna", "--out", "model.txdm", "--history", "history.tsv"],
        &["predict", "--model", "model.txdm", "--features", "features.txdf", "--out", "predictions.tsv"],
        &["eval", "--predictions", "predictions.tsv", "--truth", "sim/truth.tsv", "--out", "metrics.tsv"],
        &["eval", "--predictions", "sim/labels.tsv", "--truth", "sim/truth.tsv", "--out", "baseline.tsv"],
        &["transitions", "--before", "sim/labels.tsv", "--after", "predictions.tsv", "--truth", "sim/truth.tsv", "--out", "transitions.tsv"],
    ];
    for s in steps {
        taxkd(s, dir)?;
    }
    Ok(PipelineRun { dir: dir.to_path_buf() })
}

fn metric_row(path: &Path) -> Result<HashMap<String, String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().ok_or("empty metrics")?.split('\t').collect();
    let row: Vec<&str> = lines.next().ok_or("no metrics row")?.split('\t').collect();
    Ok(head.iter().map(|h| h.to_string()).zip(row.iter().map(|v| v.to_string())).collect())
}

fn transition_cell(path: &Path, before: &str, after: &str) -> Result<u64, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    let head: Vec<&str> = lines.next().ok_or("empty transitions")?.split('\t').collect();
    let col = head.iter().position(|h| *h == after).ok_or("missing column")?;
    for l in lines {
        let cells: Vec<&str> = l.split('\t').collect();
        if cells[0] == before {
            return cells[col].parse().map_err(|e| format!("{e}"));
        }
    }
    Err(format!("missing row {before}"))
}

fn end_to_end(run: &Result<PipelineRun, String>, elapsed: Duration) -> Check {
    let run = run.as_ref().map_err(Clone::clone)?;
    let after = metric_row(&run.path("metrics.tsv"))?;
    let before = metric_row(&run.path("baseline.tsv"))?;
    let f1 = |m: &HashMap<String, String>| m["f1"].parse::<f64>().unwrap();
    let t = run.path("transitions.tsv");
    let up = transition_cell(&t, "NoLabel", "Correct")?;
    let down = transition_cell(&t, "Correct", "NoLabel")?;
    let detail = format!(
        "species F1 noisy {:.4} -> corrected {:.4} (C/W/U {}/{}/{} -> {}/{}/{}); NoLabel->Correct {up} vs Correct->NoLabel {down}; {elapsed:.0?}",
        f1(&before),
        f1(&after),
        before["correct"],
        before["wrong"],
        before["no_label"],
        after["correct"],
        after["wrong"],
        after["no_label"]
    );
    if f1(&after) > f1(&before) && up > down && elapsed < Duration::from_secs(600) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism(a: &Result<PipelineRun, String>, b: &Result<PipelineRun, String>) -> Check {
    let a = a.as_ref().map_err(Clone::clone)?;
    let b = b.as_ref().map_err(Clone::clone)?;
    let files = [
        "sim/contigs.fna", "sim/labels.tsv", "features.txdf", "model.txdm", "history.tsv",
        "predictions.tsv", "metrics.tsv", "transitions.tsv",
    ];
    let mut differ = Vec::new();
    let mut bytes = 0;
    for f in files {
        let x = std::fs::read(a.path(f)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path(f)).map_err(|e| e.to_string())?;
        bytes += x.len();
        if x != y {
            differ.push(f);
        }
    }
    if differ.is_empty() {
        Ok(format!("{} files ({bytes} bytes) byte-identical across two runs", files.len()))
    } else {
        Err(format!("differ: {}", differ.join(", ")))
    }
}

// 9 ------------------------------------------------------------------------

fn decode_examples() -> Check {
    let p = |s: &str| -> RankedPath { s.parse().unwrap() };
    let tree = TaxTree::build(&[p("d__A;p__l1"), p("d__A;p__l2"), p("d__B")]).unwrap();
    let first = decode(&tree, "x", &[0.9, 0.05, 0.05]).map_err(|e| e.to_string())?;
    if first.path != p("d__A;p__l1") || (first.node_prob - 0.9).abs() > 1e-12 {
        return Err(format!("0.9/0.05/0.05 gave {} at {}", first.path, first.node_prob));
    }
    let second = decode(&tree, "x", &[0.6, 0.15, 0.25]).map_err(|e| e.to_string())?;
    if !second.path.is_unassigned() {
        return Err(format!("0.6/0.15/0.25 gave {}", second.path));
    }
    let pair = TaxTree::build(&[p("d__A"), p("d__B")]).unwrap();
    let third = decode(&pair, "x", &[0.5, 0.5]).map_err(|e| e.to_string())?;
    if !third.path.is_unassigned() {
        return Err(format!("0.5/0.5 gave {}", third.path));
    }
    Ok("0.9/0.05/0.05 -> leaf at 0.9; 0.6/0.15/0.25 -> unassigned; 0.5/0.5 -> unassigned".into())
}

fn main() {
    let mut results: Vec<(u32, &str, Check)> = Vec::new();
    let mut record = |id: u32, name: &'static str, check: Check| {
        let (tag, detail) = match &check {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} [{id}] {name}: {detail}");
        results.push((id, name, check));
    };
    record(1, "metric oracle", metric_oracle());
    record(2, "gradient correctness", gradient_checks());
    record(3, "probability invariants", probability_invariants());
    record(4, "kd loss properties", kd_properties());
    record(5, "stop-gradient isolation", stop_gradient_isolation());
    record(6, "tnf kernel", tnf_kernel());

    let root = tempfile::tempdir().expect("tempdir");
    let t0 = Instant::now();
    let first = pipeline(&root.path().join("run1"));
    let elapsed = t0.elapsed();
    record(7, "end-to-end denoising", end_to_end(&first, elapsed));
    let second = pipeline(&root.path().join("run2"));
    record(8, "determinism", determinism(&first, &second));
    record(9, "decode rule", decode_examples());

    let failed: Vec<u32> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({failed:?})")
        }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
