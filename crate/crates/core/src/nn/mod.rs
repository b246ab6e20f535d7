//! Small dense network core: row-major tensors, ReLU MLPs with hand-written
//! backward passes, Adam, and learning-rate schedules.

pub mod adam;
pub mod checkpoint;
pub mod mlp;
pub mod schedule;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, ModelKind};
pub use mlp::{Dense, Mlp, MlpGrads, MlpSnapshot};
pub use schedule::Schedule;
pub use tensor::Tensor;
