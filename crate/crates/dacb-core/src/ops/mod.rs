//! Primitive differentiable operations.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod elementwise;
pub mod matmul;
pub mod norm;
pub mod pool;

pub use activation::{sigmoid_scalar, softmax_rows, softmax_rows_backward, Relu, Sigmoid, SoftmaxRows};
pub use conv::{ChannelConv1d, Conv2d, DepthwiseConv2d};
pub use dense::{Flatten, Linear};
pub use elementwise::{bcast_mul, bcast_mul_backward, Add2, BroadcastMul, BroadcastSpatial, ConcatChannels};
pub use norm::{LayerNorm, LAYER_NORM_EPS};
pub use pool::{GlobalAvgPool, GlobalMaxPool, Pool2d, PoolKind};
