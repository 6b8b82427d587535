//! Neural network building blocks, written against f64 ndarray throughout.
//!
//! Layers are stateless over activations: `forward` returns the output plus
//! an explicit cache, and `backward` consumes that cache while accumulating
//! parameter gradients into the layer's own grad buffers. This keeps one
//! layer reusable across frames of a clip (every call carries its own cache)
//! and makes gradient accumulation over a batch trivial.

pub mod act;
pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod conv;
pub mod dropout;
pub mod gradcheck;
pub mod linear;
pub mod loss;
pub mod norm;
pub mod param;
pub mod pool;

pub use adam::Adam;
pub use attention::MultiHeadAttention;
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint};
pub use conv::Conv2d;
pub use dropout::Dropout;
pub use linear::Linear;
pub use loss::cross_entropy;
pub use norm::{BatchNorm2d, LayerNorm};
pub use param::{clip_grad_norm, param_count, zero_grads, Init, ParamMut, Params};
pub use pool::{global_avg_pool, MaxPool2d};

/// Whether stochastic layers (dropout) and batch statistics are live.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
