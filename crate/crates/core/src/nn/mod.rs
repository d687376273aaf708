//! Small layer library with explicit forward and backward passes.
//!
//! Every layer keeps its parameters in [`Param`]s (value plus accumulated
//! gradient). `forward` returns the output together with whatever the layer
//! needs for its backward pass; `backward` consumes the output gradient, adds
//! parameter gradients into the `Param`s and returns the input gradient.
//! All tensors are channels-last `f64` arrays.

mod act;
mod attention;
mod conv;
mod gru;
mod linear;
mod norm;
mod param;

pub use act::{gelu, gelu_grad, sigmoid, softmax_in_place};
pub use attention::{AttentionCache, MultiHeadAttention};
pub use conv::{Conv1d, Conv1dCache, DepthwiseConv2d, PatchConv2d};
pub use gru::{BiGru, BiGruCache, Gru, GruCache};
pub use linear::Linear;
pub use norm::{LayerNorm, LayerNormCache};
pub use param::{Module, Param, ParamView};
