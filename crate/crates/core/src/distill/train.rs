use std::collections::HashMap;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{hier_loss_ids, kd_loss};
use crate::error::{Error, Result};
use crate::neuralnet::{AdamConfig, AdamW, Mlp};
use crate::taxonomy::{RankedPath, TaxTree, ROOT};

#[derive(Debug, Clone, PartialEq)]
pub struct DistillConfig {
    /// Weight of the hierarchical term in the student objective.
    pub alpha: f64,
    pub tau: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_student: f64,
    pub lr_teacher: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// When false the batch order is drawn from OS entropy.
    pub deterministic: bool,
    pub student_hidden: Vec<usize>,
    /// Empty means a single linear head.
    pub teacher_hidden: Vec<usize>,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            tau: 4.0,
            epochs: 100,
            batch_size: 64,
            lr_student: 1e-3,
            lr_teacher: 1e-4,
            weight_decay: 1e-4,
            seed: 0,
            deterministic: true,
            student_hidden: vec![512, 512],
            teacher_hidden: Vec::new(),
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return fail(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return fail(format!("tau must be > 0, got {}", self.tau));
        }
        if self.epochs == 0 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return fail("batch size must be >= 1".into());
        }
        for (name, lr) in [("lr-student", self.lr_student), ("lr-teacher", self.lr_teacher)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return fail(format!("{name} must be > 0, got {lr}"));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight decay must be >= 0, got {}", self.weight_decay));
        }
        if self.student_hidden.iter().chain(&self.teacher_hidden).any(|&w| w == 0) {
            return fail("hidden widths must be >= 1".into());
        }
        Ok(())
    }

    pub fn student_dims(&self, input: usize, leaves: usize) -> Vec<usize> {
        dims(input, &self.student_hidden, leaves)
    }

    pub fn teacher_dims(&self, input: usize, leaves: usize) -> Vec<usize> {
        dims(input, &self.teacher_hidden, leaves)
    }
}

fn dims(input: usize, hidden: &[usize], out: usize) -> Vec<usize> {
    std::iter::once(input)
        .chain(hidden.iter().copied())
        .chain(std::iter::once(out))
        .collect()
}

/// Random streams derived from the run seed. Teacher init, student init and
/// batch order never share a stream, so the teacher trajectory cannot
/// depend on anything student-side.
pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub const STREAM_TEACHER_INIT: u64 = 1;
pub const STREAM_STUDENT_INIT: u64 = 2;
pub const STREAM_SHUFFLE: u64 = 3;

/// Row-aligned training inputs.
#[derive(Debug, Clone)]
pub struct TrainData {
    pub ids: Vec<String>,
    pub student_x: Array2<f64>,
    pub teacher_x: Array2<f64>,
    /// Pseudo-label node per row; [`ROOT`] when unlabeled.
    pub targets: Vec<usize>,
}

impl TrainData {
    /// Builds the label tree from the pseudo-labels of `ids` and aligns
    /// everything by row. Ids without a label are unlabeled.
    pub fn align(
        ids: Vec<String>,
        student_x: Array2<f64>,
        teacher_x: Array2<f64>,
        labels: &HashMap<String, RankedPath>,
    ) -> Result<(Self, TaxTree)> {
        if ids.is_empty() {
            return Err(Error::Empty("no contigs to train on".into()));
        }
        if student_x.nrows() != ids.len() || teacher_x.nrows() != ids.len() {
            return Err(Error::Shape(format!(
                "{} ids, {} feature rows, {} embedding rows",
                ids.len(),
                student_x.nrows(),
                teacher_x.nrows()
            )));
        }
        let unassigned = RankedPath::unassigned();
        let paths: Vec<&RankedPath> = ids
            .iter()
            .map(|id| labels.get(id).unwrap_or(&unassigned))
            .collect();
        let tree = TaxTree::build(paths.iter().copied())?;
        let targets = paths
            .iter()
            .map(|p| tree.resolve(p))
            .collect::<Result<Vec<_>>>()?;
        Ok((
            Self {
                ids,
                student_x,
                teacher_x,
                targets,
            },
            tree,
        ))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_labeled(&self) -> usize {
        self.targets.iter().filter(|&&t| t != ROOT).count()
    }
}

/// Losses of one optimizer step. The teacher loss is measured before the
/// teacher update; the student terms against the refreshed teacher.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLosses {
    pub teacher_hier: f64,
    pub student_hier: f64,
    pub kd: f64,
    pub student: f64,
    pub total: f64,
}

/// Batch-mean losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLosses {
    pub epoch: usize,
    pub teacher_hier: f64,
    pub student_hier: f64,
    pub kd: f64,
}

impl EpochLosses {
    pub fn total(&self, alpha: f64) -> f64 {
        self.teacher_hier + alpha * self.student_hier + (1.0 - alpha) * self.kd
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: DistillConfig,
    pub student: Mlp,
    pub student_opt: AdamW,
    pub teacher: Mlp,
    pub teacher_opt: AdamW,
    pub epoch: usize,
    pub history: Vec<EpochLosses>,
    shuffle_rng: ChaCha8Rng,
}

impl TrainState {
    /// Seeded initialization of both networks.
    pub fn init(config: &DistillConfig, tree: &TaxTree, data: &TrainData) -> Result<Self> {
        config.validate()?;
        let leaves = tree.n_leaves();
        if leaves < 2 {
            return Err(Error::Value(format!(
                "need at least 2 leaf labels to train, found {leaves}"
            )));
        }
        let student = Mlp::init(
            &config.student_dims(data.student_x.ncols(), leaves),
            &mut seeded_stream(config.seed, STREAM_STUDENT_INIT),
        )?;
        let teacher = Mlp::init(
            &config.teacher_dims(data.teacher_x.ncols(), leaves),
            &mut seeded_stream(config.seed, STREAM_TEACHER_INIT),
        )?;
        Self::with_models(config, student, teacher)
    }

    /// Starts from explicit networks.
    pub fn with_models(config: &DistillConfig, student: Mlp, teacher: Mlp) -> Result<Self> {
        config.validate()?;
        if student.output_dim() != teacher.output_dim() {
            return Err(Error::Shape(format!(
                "student emits {} logits, teacher {}",
                student.output_dim(),
                teacher.output_dim()
            )));
        }
        let shuffle_rng = if config.deterministic {
            seeded_stream(config.seed, STREAM_SHUFFLE)
        } else {
            ChaCha8Rng::from_os_rng()
        };
        Ok(Self {
            student_opt: AdamW::new(AdamConfig::new(config.lr_student, config.weight_decay), &student),
            teacher_opt: AdamW::new(AdamConfig::new(config.lr_teacher, config.weight_decay), &teacher),
            config: config.clone(),
            student,
            teacher,
            epoch: 0,
            history: Vec::new(),
            shuffle_rng,
        })
    }

    /// One step on a batch: teacher update from its hierarchical loss,
    /// then a student update against the refreshed (constant) teacher
    /// logits.
    pub fn step(
        &mut self,
        tree: &TaxTree,
        student_x: ArrayView2<f64>,
        teacher_x: ArrayView2<f64>,
        targets: &[usize],
    ) -> Result<BatchLosses> {
        let alpha = self.config.alpha;

        let (t_logits, t_cache) = self.teacher.forward_cached(teacher_x)?;
        let (teacher_hier, t_grad) = hier_loss_ids(tree, t_logits.view(), targets)?;
        let grads = self.teacher.backward(&t_cache, t_grad.view())?;
        self.teacher_opt.step(&mut self.teacher, &grads)?;

        let soft_targets = self.teacher.forward(teacher_x)?;
        let (s_logits, s_cache) = self.student.forward_cached(student_x)?;
        let (student_hier, mut s_grad) = hier_loss_ids(tree, s_logits.view(), targets)?;
        let (kd, kd_grad) = kd_loss(soft_targets.view(), s_logits.view(), self.config.tau)?;
        s_grad.mapv_inplace(|g| alpha * g);
        s_grad.scaled_add(1.0 - alpha, &kd_grad);
        let grads = self.student.backward(&s_cache, s_grad.view())?;
        self.student_opt.step(&mut self.student, &grads)?;

        let student = alpha * student_hier + (1.0 - alpha) * kd;
        Ok(BatchLosses {
            teacher_hier,
            student_hier,
            kd,
            student,
            total: teacher_hier + student,
        })
    }

    /// One pass over a fresh seeded permutation of the data.
    pub fn run_epoch<F>(&mut self, tree: &TaxTree, data: &TrainData, mut on_batch: F) -> Result<EpochLosses>
    where
        F: FnMut(usize, &BatchLosses),
    {
        if data.is_empty() {
            return Err(Error::Empty("no contigs to train on".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let mut sums = [0.0; 3];
        let mut n_batches = 0usize;
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let sx = data.student_x.select(Axis(0), chunk);
            let tx = data.teacher_x.select(Axis(0), chunk);
            let targets: Vec<usize> = chunk.iter().map(|&i| data.targets[i]).collect();
            let losses = self.step(tree, sx.view(), tx.view(), &targets)?;
            if !losses.total.is_finite() {
                return Err(Error::Diverged {
                    epoch: self.epoch,
                    batch: b,
                });
            }
            on_batch(b, &losses);
            sums[0] += losses.teacher_hier;
            sums[1] += losses.student_hier;
            sums[2] += losses.kd;
            n_batches += 1;
        }
        let n = n_batches as f64;
        let record = EpochLosses {
            epoch: self.epoch,
            teacher_hier: sums[0] / n,
            student_hier: sums[1] / n,
            kd: sums[2] / n,
        };
        self.history.push(record);
        self.epoch += 1;
        Ok(record)
    }

    /// Runs the remaining configured epochs.
    pub fn run(&mut self, tree: &TaxTree, data: &TrainData) -> Result<()> {
        while self.epoch < self.config.epochs {
            let e = self.run_epoch(tree, data, |_, _| {})?;
            log::debug!(
                "epoch {}: teacher {:.5} student-hier {:.5} kd {:.5}",
                e.epoch,
                e.teacher_hier,
                e.student_hier,
                e.kd
            );
        }
        Ok(())
    }
}

/// Seeded init followed by the full configured schedule.
pub fn train(config: &DistillConfig, tree: &TaxTree, data: &TrainData) -> Result<TrainState> {
    let mut state = TrainState::init(config, tree, data)?;
    log::info!(
        "training on {} contigs ({} labeled), {} leaves, {} epochs",
        data.len(),
        data.n_labeled(),
        tree.n_leaves(),
        config.epochs
    );
    state.run(tree, data)?;
    Ok(state)
}
