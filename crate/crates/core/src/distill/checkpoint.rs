//! `TXDM` checkpoint: tree, config echo, layer shapes, parameters and loss
//! history, all little-endian.

use std::io::{Read, Write};

use ndarray::{Array1, Array2};

use super::train::{DistillConfig, EpochLosses, TrainState};
use crate::binio::*;
use crate::error::{Error, Result};
use crate::neuralnet::{Activation, DenseLayer, Mlp};
use crate::taxonomy::{RankedPath, TaxTree};

const MAGIC: &[u8; 4] = b"TXDM";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub tree: TaxTree,
    pub config: DistillConfig,
    pub student: Mlp,
    pub teacher: Mlp,
    pub history: Vec<EpochLosses>,
}

impl Checkpoint {
    pub fn from_state(tree: &TaxTree, state: &TrainState) -> Self {
        Self {
            tree: tree.clone(),
            config: state.config.clone(),
            student: state.student.clone(),
            teacher: state.teacher.clone(),
            history: state.history.clone(),
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(&mut w, VERSION)?;

        let paths = self.tree.canonical_paths();
        put_len(&mut w, paths.len(), "tree")?;
        for p in &paths {
            put_str(&mut w, &p.to_text())?;
        }

        let c = &self.config;
        put_f64(&mut w, c.alpha)?;
        put_f64(&mut w, c.tau)?;
        put_len(&mut w, c.epochs, "epochs")?;
        put_len(&mut w, c.batch_size, "batch size")?;
        put_f64(&mut w, c.lr_student)?;
        put_f64(&mut w, c.lr_teacher)?;
        put_f64(&mut w, c.weight_decay)?;
        put_u64(&mut w, c.seed)?;
        put_u8(&mut w, u8::from(c.deterministic))?;

        for model in [&self.student, &self.teacher] {
            put_len(&mut w, model.layers().len(), "layers")?;
            for l in model.layers() {
                put_len(&mut w, l.input_dim(), "layer input")?;
                put_len(&mut w, l.output_dim(), "layer output")?;
                put_u8(&mut w, l.activation.code())?;
            }
        }
        for model in [&self.student, &self.teacher] {
            for v in model.params_flat() {
                put_f64(&mut w, v)?;
            }
        }

        put_len(&mut w, self.history.len(), "history")?;
        for h in &self.history {
            put_len(&mut w, h.epoch, "epoch")?;
            put_f64(&mut w, h.teacher_hier)?;
            put_f64(&mut w, h.student_hier)?;
            put_f64(&mut w, h.kd)?;
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        expect_magic(&mut r, MAGIC, VERSION)?;
        let n_paths = get_u32(&mut r)? as usize;
        let mut paths = Vec::with_capacity(n_paths);
        for i in 0..n_paths {
            paths.push(RankedPath::parse_line(&get_str(&mut r)?, i + 1)?);
        }
        // An empty list still needs one (unassigned) path to yield the root.
        let tree = if paths.is_empty() {
            TaxTree::build(&[RankedPath::unassigned()])?
        } else {
            TaxTree::build(&paths)?
        };

        let alpha = get_f64(&mut r)?;
        let tau = get_f64(&mut r)?;
        let epochs = get_u32(&mut r)? as usize;
        let batch_size = get_u32(&mut r)? as usize;
        let lr_student = get_f64(&mut r)?;
        let lr_teacher = get_f64(&mut r)?;
        let weight_decay = get_f64(&mut r)?;
        let seed = get_u64(&mut r)?;
        let deterministic = get_u8(&mut r)? != 0;

        let mut shapes = Vec::new();
        for _ in 0..2 {
            let n = get_u32(&mut r)? as usize;
            let mut layers = Vec::with_capacity(n);
            for _ in 0..n {
                let input = get_u32(&mut r)? as usize;
                let output = get_u32(&mut r)? as usize;
                let act = Activation::from_code(get_u8(&mut r)?)?;
                layers.push((input, output, act));
            }
            shapes.push(layers);
        }
        let mut models = Vec::new();
        for layers in &shapes {
            let mut built = Vec::with_capacity(layers.len());
            for &(input, output, activation) in layers {
                let w = (0..input * output)
                    .map(|_| get_f64(&mut r))
                    .collect::<Result<Vec<_>>>()?;
                let b = (0..output).map(|_| get_f64(&mut r)).collect::<Result<Vec<_>>>()?;
                built.push(DenseLayer {
                    weights: Array2::from_shape_vec((output, input), w)
                        .map_err(|e| Error::Format(e.to_string()))?,
                    bias: Array1::from(b),
                    activation,
                });
            }
            models.push(Mlp::new(built)?);
        }
        let teacher = models.pop().unwrap();
        let student = models.pop().unwrap();

        let n_hist = get_u32(&mut r)? as usize;
        let mut history = Vec::with_capacity(n_hist);
        for _ in 0..n_hist {
            history.push(EpochLosses {
                epoch: get_u32(&mut r)? as usize,
                teacher_hier: get_f64(&mut r)?,
                student_hier: get_f64(&mut r)?,
                kd: get_f64(&mut r)?,
            });
        }

        let hidden = |m: &Mlp| {
            let d = m.dims();
            d[1..d.len() - 1].to_vec()
        };
        let config = DistillConfig {
            alpha,
            tau,
            epochs,
            batch_size,
            lr_student,
            lr_teacher,
            weight_decay,
            seed,
            deterministic,
            student_hidden: hidden(&student),
            teacher_hidden: hidden(&teacher),
        };
        if student.output_dim() != tree.n_leaves() {
            return Err(Error::Format(format!(
                "student emits {} logits but the tree has {} leaves",
                student.output_dim(),
                tree.n_leaves()
            )));
        }
        Ok(Self {
            tree,
            config,
            student,
            teacher,
            history,
        })
    }
}

/// Loss history as TSV: `epoch, teacher_hier, student_hier, kd, total`.
pub fn write_history_tsv<W: Write>(mut w: W, history: &[EpochLosses], alpha: f64) -> Result<()> {
    writeln!(w, "epoch\tteacher_hier\tstudent_hier\tkd\ttotal")?;
    for h in history {
        writeln!(
            w,
            "{}\t{:.10}\t{:.10}\t{:.10}\t{:.10}",
            h.epoch,
            h.teacher_hier,
            h.student_hier,
            h.kd,
            h.total(alpha)
        )?;
    }
    Ok(())
}
