//! Differentiable-computation kernel: tensors, primitives recorded on a tape,
//! reverse-mode gradients, parameter storage, initialisation and Adam.

mod adam;
mod attention;
mod graph;
mod init;
mod params;
mod tensor;

pub use adam::Adam;
pub use attention::{multi_head_self_attention, AttentionWeights};
pub use graph::{softmax, Graph, Var};
pub use init::{fans, glorot_uniform, init_bias, init_weight, seeded_rng, SeededRng};
pub use params::{ParamId, ParamStore};
pub use tensor::{Scalar, Tensor};
