//! Differentiable primitives: each forward op has a matching backward.

pub mod activation;
pub mod conv;
pub mod elementwise;
pub mod loss;
pub mod resample;

pub use activation::{leaky_relu, leaky_relu_backward, LEAKY_SLOPE};
pub use conv::{
    conv2d, conv2d_backward, conv2d_backward_opt, conv_out_len, transposed_conv2d,
    transposed_conv2d_backward, transposed_conv2d_backward_opt, ConvGrads, ConvParams,
};
pub use elementwise::{add, add_assign, concat_channels};
pub use loss::l1_loss;
pub use resample::{bilinear_upsample, bilinear_upsample_backward};
