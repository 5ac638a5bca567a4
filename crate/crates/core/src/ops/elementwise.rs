use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut out = a.clone();
    add_assign(&mut out, b)?;
    Ok(out)
}

pub fn add_assign(acc: &mut Tensor, b: &Tensor) -> Result<()> {
    if acc.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "add: {} vs {}",
            acc.shape(),
            b.shape()
        )));
    }
    for (x, &y) in acc.data_mut().iter_mut().zip(b.data()) {
        *x += y;
    }
    Ok(())
}

/// Stacks the channels of `a` followed by those of `b`.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa.n != sb.n || sa.h != sb.h || sa.w != sb.w {
        return Err(Error::Shape(format!("concat_channels: {sa} vs {sb}")));
    }
    let p = sa.plane();
    let mut data = Vec::with_capacity(sa.numel() + sb.numel());
    for n in 0..sa.n {
        data.extend_from_slice(&a.data()[n * sa.c * p..(n + 1) * sa.c * p]);
        data.extend_from_slice(&b.data()[n * sb.c * p..(n + 1) * sb.c * p]);
    }
    Tensor::from_vec(Shape::new(sa.n, sa.c + sb.c, sa.h, sa.w), data)
}
