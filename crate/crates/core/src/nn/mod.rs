//! Small reverse-mode differentiation engine and the layers built on it.

mod graph;
pub mod layers;
pub mod optim;
mod params;
mod tensor;

pub use graph::{Graph, Var};
pub use layers::{ConvEncoder, Dense, GlobalContext, GruCell, LayerNorm, Mhsa};
pub use optim::{clip_weights, Adam, RmsProp};
pub use params::ModelParams;
pub use tensor::Tensor;
