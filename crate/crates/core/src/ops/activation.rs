use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Slope of the negative half used throughout the network.
pub const LEAKY_SLOPE: f32 = 0.2;

/// `y = x` for `x >= 0`, `slope * x` otherwise.
pub fn leaky_relu(x: &Tensor, slope: f32) -> Result<Tensor> {
    x.ensure_finite("leaky_relu")?;
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < 0.0 {
            *v *= slope;
        }
    }
    Ok(y)
}

/// Multiplies `grad_out` by the piecewise derivative evaluated at `x`.
pub fn leaky_relu_backward(x: &Tensor, grad_out: &Tensor, slope: f32) -> Result<Tensor> {
    if x.shape() != grad_out.shape() {
        return Err(Error::Shape(format!(
            "leaky_relu_backward: {} vs {}",
            x.shape(),
            grad_out.shape()
        )));
    }
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(x.data()) {
        if xv < 0.0 {
            *gv *= slope;
        }
    }
    Ok(g)
}
