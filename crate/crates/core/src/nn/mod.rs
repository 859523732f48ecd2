//! A small differentiable-layer engine: the layer set the three architectures
//! need, explicit forward / backward passes, Adam and the label-smoothed
//! cross-entropy loss.

pub mod adam;
pub mod checkpoint;
pub mod graph;
pub mod layers;
pub mod loss;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use graph::{Graph, GraphSpec, NodeSpec};
pub use layers::{Layer, LayerGrads, LayerKind, LayerSpec, Mode};
pub use loss::{label_smoothed_ce, label_smoothed_ce_with_grad, smoothed_labels, LossConfig};
pub use tensor::{Precision, Real, Tensor};
