//! Minimal f64 tensor, layer, reverse-mode-differentiation, and optimizer
//! engine. All training math is 64-bit; checkpoints store 32-bit payloads.

mod gradcheck;
mod kernels;
mod layers;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::grad_check;
pub use layers::{glorot_uniform, Activation, ConvSpec, Layer, LayerSpec, Mlp, Network};
pub use optim::{Adam, AdamConfig};
pub use tape::{NeighborTable, Tape, VarId};
pub use tensor::{ParamId, ParamStore, Parameter, Tensor};
