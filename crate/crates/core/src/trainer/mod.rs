//! Deterministic training, gradient checking and the margin sweep.

mod checkpoint;
mod gradcheck;
mod model;
mod sgd;
mod sweep;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use gradcheck::{
    gradcheck, gradcheck_with, relative_error, GradcheckSpec, DEFAULT_TOLERANCE, FD_STEP,
};
pub use model::{argmax, init_model, ClassifierModel, ExampleGrad};
pub use sgd::{
    mean_loss, train, EpochStats, TrainConfig, TrainLog, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS,
    DEFAULT_LEARNING_RATE,
};
pub use sweep::{margin_sweep, SweepReport, SweepRow, SweepSettings, DEFAULT_FIXED_MARGINS};
