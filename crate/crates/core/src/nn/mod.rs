//! Tensor arithmetic, the feed-forward classifier, optimizers, gradient
//! checking and checkpoints.

pub mod checkpoint;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod tensor;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{grad_check, grad_check_against, GradCheckReport};
pub use model::{
    backward, backward_chunked, forward, logits, loss_and_backward, loss_and_backward_chunked, Gradients, LayerSpec,
    ModelSpec, ModelState,
};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use tensor::Tensor;
