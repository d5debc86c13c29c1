//! Dense networks trained with momentum SGD.

pub mod checkpoint;
pub mod gradcheck;
pub mod input;
pub mod loss;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{argmax, nll_loss, softmax};
pub use model::{
    Activation, CheckpointMeta, ForwardPass, Gradients, Head, Layer, LayerGrad, ModelCheckpoint, ModelSpec,
    Provenance, TAP_PENULTIMATE, TAP_TOP,
};
pub use optim::{sgd_step, SgdState, TrainConfig};
pub use tensor::Tensor;
pub use train::{fit, Targets, TrainReport};
