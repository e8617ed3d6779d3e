//! Simulate a noisy corpus, train with default settings on standardized
//! inputs, and compare corrected labels against the pseudo-labels.
//!
//! `cargo run --release -p taxkd --example denoise [epochs] [alpha]`

use std::collections::HashMap;
use std::time::Instant;

use taxkd::distill::{train, DistillConfig, TrainData};
use taxkd::features::{assemble_features, load_abundances, standardize_columns, FeatureOptions, TnfKernel};
use taxkd::inference::{count, metrics, predict, statuses, transitions, Status};
use taxkd::simgen::{simulate, SimConfig};
use taxkd::taxonomy::RankedPath;
use taxkd::teacher::{EmbeddingProvider, DEFAULT_EMBED_DIM};
use taxkd::Exec;

fn main() -> taxkd::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(100, |s| s.parse().expect("epochs"));
    let alpha: f64 = args.next().map_or(0.3, |s| s.parse().expect("alpha"));
    let t0 = Instant::now();
    let exec = Exec::default();
    let corpus = simulate(&SimConfig::default(), exec)?;
    let ids = corpus.ids();

    let mut tsv = Vec::new();
    corpus.write_abundance(&mut tsv)?;
    let abundances = load_abundances(&tsv[..], &ids)?;
    let kernel = TnfKernel::build()?;
    let features = assemble_features(
        &corpus.records,
        &kernel,
        &abundances,
        FeatureOptions { standardize_tnf: true },
        exec,
    )?;
    let mut embeddings =
        EmbeddingProvider::kmer_projection(DEFAULT_EMBED_DIM, 0).embed_all(&corpus.records, exec)?;
    standardize_columns(embeddings.view_mut());
    println!("features {:?} in {:.1?}", features.data.dim(), t0.elapsed());

    let labels: HashMap<String, RankedPath> = ids.iter().cloned().zip(corpus.labels.clone()).collect();
    let truth: HashMap<String, RankedPath> = ids.iter().cloned().zip(corpus.truth.clone()).collect();
    let (data, tree) = TrainData::align(ids.clone(), features.data.clone(), embeddings, &labels)?;
    let config = DistillConfig {
        epochs,
        alpha,
        ..DistillConfig::default()
    };
    let state = train(&config, &tree, &data)?;
    for h in state.history.iter().step_by((epochs / 10).max(1)) {
        println!(
            "epoch {:3} teacher {:.4} student {:.4} kd {:.4}",
            h.epoch, h.teacher_hier, h.student_hier, h.kd
        );
    }
    println!("trained in {:.1?}", t0.elapsed());

    let rank = 2;
    let preds = predict(&tree, &state.student, &ids, features.data.view(), exec)?;
    let before = statuses(ids.iter().map(String::as_str).zip(&corpus.labels), &truth, rank)?;
    let after = statuses(preds.iter().map(|p| (p.contig_id.as_str(), &p.path)), &truth, rank)?;
    let teacher = predict(&tree, &state.teacher, &ids, data.teacher_x.view(), exec)?;
    let teacher = statuses(teacher.iter().map(|p| (p.contig_id.as_str(), &p.path)), &truth, rank)?;
    for (name, s) in [("noisy", &before), ("corrected", &after), ("teacher", &teacher)] {
        let c = count(s.values().copied());
        let m = metrics(&c)?;
        println!(
            "{name:10} C {:5} W {:5} U {:5}  recall {:.4} precision {:.4} f1 {:.4}",
            c.correct, c.wrong, c.no_label, m.recall, m.precision, m.f1
        );
    }
    let m = transitions(&before, &after)?;
    println!(
        "NoLabel->Correct {} Correct->NoLabel {}",
        m.get(Status::NoLabel, Status::Correct),
        m.get(Status::Correct, Status::NoLabel)
    );
    println!("total {:.1?}", t0.elapsed());
    Ok(())
}
