//! Loss stack and the transductive teacher/student training loop.

mod checkpoint;
mod loss;
mod train;

pub use checkpoint::{write_history_tsv, Checkpoint};
pub use loss::{hier_loss, hier_loss_ids, kd_loss, soften};
pub use train::{
    seeded_stream, train, BatchLosses, DistillConfig, EpochLosses, TrainData, TrainState,
    STREAM_SHUFFLE, STREAM_STUDENT_INIT, STREAM_TEACHER_INIT,
};
