//! Computational core of DACB-Net.
//!
//! A self-contained, deterministic stack for fine-grained image
//! classification experiments: dense tensors with explicit reverse-mode
//! rules, exact and compact (sketched) bilinear pooling, channel/spatial
//! dual attention with ECA gating, complement cross entropy and baseline
//! losses, heterogeneous dual-stream backbones, an Adam training loop with
//! bit-exact checkpointing, evaluation metrics (confusion matrix, PRF1,
//! ROC/AUC), and Grad-CAM heat maps.

pub mod attention;
pub mod backbone;
pub mod bilinear;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layer;
pub mod loss;
pub mod metrics;
pub mod ops;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use graph::{GraphGrads, ModelGraph, PortRef};
pub use layer::{LayerGrads, LayerNode};
pub use rng::Rng;
pub use tensor::Tensor;
