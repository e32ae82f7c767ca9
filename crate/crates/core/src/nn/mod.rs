//! Dense numerics for the transformer and fusion stages.

mod gradcheck;
mod layers;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, grad_check_with_floor, CoordError, GradCheckReport, DEFAULT_REL_FLOOR};
pub use layers::{
    gelu, gelu_grad, init_weight, layer_norm, layer_norm_rows, linear, mhsa, softmax, AttentionParams, Mlp,
    Parameters,
};
pub(crate) use layers::{visit_prefixed, visit_prefixed_mut};
pub use optim::{adam_step, adam_update, AdamConfig, OptimizerState};
pub use tape::{Gradients, Groups, MixRows, Tape, Var};
pub use tensor::Tensor;
