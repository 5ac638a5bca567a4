use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean absolute error averaged per sample, then over the batch.
///
/// Each sample is normalized by its element count `c * h * w`. The
/// derivative of `|d|` at `d = 0` is taken as 0.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "l1_loss: {} vs {}",
            pred.shape(),
            target.shape()
        )));
    }
    let s = pred.shape();
    let per_sample = s.c * s.plane();
    if per_sample == 0 || s.n == 0 {
        return Err(Error::Argument("l1_loss on an empty tensor".into()));
    }
    let scale = 1.0 / (s.n as f64 * per_sample as f64);
    let mut grad = Tensor::zeros(s);
    let mut total = 0.0f64;
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        let d = p as f64 - t as f64;
        total += d.abs();
        *g = if d > 0.0 {
            scale as f32
        } else if d < 0.0 {
            -scale as f32
        } else {
            0.0
        };
    }
    Ok((total * scale, grad))
}
