//! Dilated, strided 2-D convolution and its transpose.
//!
//! Padding is always "same" zero padding of `dilation * (k - 1) / 2` pixels on
//! every side, so a stride-1 convolution preserves the spatial size and a
//! stride-2 convolution produces `ceil(h / 2) x ceil(w / 2)`.
//!
//! All reductions accumulate in `f64` and round once to `f32`. Work is split
//! over independent output planes, so results do not depend on the thread
//! count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Weights and geometry of one convolution layer.
///
/// For [`conv2d`] the weight is shaped `(c_out, c_in, k, k)`. For
/// [`transposed_conv2d`] it is shaped `(c_in, c_out, k, k)`: the same tensor a
/// stride-2 [`conv2d`] from the output space back to the input space would
/// use, which makes the two operations exact adjoints.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub weight: Tensor,
    pub bias: Vec<f32>,
    pub stride: usize,
    pub dilation: usize,
}

/// Gradients returned by the backward passes.
#[derive(Clone, Debug)]
pub struct ConvGrads {
    /// `None` when the caller asked to skip the input gradient.
    pub input: Option<Tensor>,
    pub weight: Tensor,
    pub bias: Vec<f32>,
}

impl ConvParams {
    pub fn new(weight: Tensor, bias: Vec<f32>, stride: usize, dilation: usize) -> Result<Self> {
        let p = ConvParams {
            weight,
            bias,
            stride,
            dilation,
        };
        p.validate()?;
        Ok(p)
    }

    /// Zero weights and bias for a `(dim0, dim1, k, k)` kernel.
    pub fn zeros(
        dim0: usize,
        dim1: usize,
        k: usize,
        stride: usize,
        dilation: usize,
        bias_len: usize,
    ) -> Self {
        ConvParams {
            weight: Tensor::zeros(Shape::new(dim0, dim1, k, k)),
            bias: vec![0.0; bias_len],
            stride,
            dilation,
        }
    }

    #[inline]
    pub fn kernel(&self) -> usize {
        self.weight.shape().h
    }

    #[inline]
    pub fn pad(&self) -> usize {
        self.dilation * (self.kernel() - 1) / 2
    }

    pub fn num_params(&self) -> usize {
        self.weight.shape().numel() + self.bias.len()
    }

    fn validate(&self) -> Result<()> {
        let s = self.weight.shape();
        if s.h != s.w || s.h.is_multiple_of(2) {
            return Err(Error::Argument(format!(
                "kernel must be square with odd size, got {}x{}",
                s.h, s.w
            )));
        }
        if !matches!(self.stride, 1 | 2) {
            return Err(Error::Argument(format!(
                "stride {} not in {{1, 2}}",
                self.stride
            )));
        }
        if !matches!(self.dilation, 1 | 2) {
            return Err(Error::Argument(format!(
                "dilation {} not in {{1, 2}}",
                self.dilation
            )));
        }
        Ok(())
    }
}

/// Output length of a same-padded convolution along one axis.
#[inline]
pub fn conv_out_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

/// Output positions `o` in `[lo, hi)` whose input index
/// `o * stride + offset` lies inside `[0, in_len)`.
#[inline]
fn valid_range(offset: isize, stride: usize, in_len: usize, out_len: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 {
        0
    } else {
        (-offset + s - 1) / s
    };
    let hi_excl = in_len as isize - offset;
    let hi = if hi_excl <= 0 {
        0
    } else {
        (hi_excl + s - 1) / s
    };
    let lo = lo.max(0) as usize;
    let hi = (hi.max(0) as usize).min(out_len);
    (lo, hi.max(lo))
}

/// Rows per cache tile for an accumulator of width `w`.
#[inline]
fn tile_rows(w: usize) -> usize {
    (4096 / w.max(1)).max(1)
}

struct Geometry {
    k: usize,
    stride: usize,
    dil: usize,
    pad: usize,
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    #[inline]
    fn offset(&self, tap: usize) -> isize {
        (tap * self.dil) as isize - self.pad as isize
    }
}

/// `out[n, co] = bias[co] + sum_ci W[co, ci] (*) x[n, ci]`.
fn conv_forward_raw(
    x: &[f32],
    n: usize,
    c_in: usize,
    weight: &[f32],
    c_out: usize,
    bias: Option<&[f32]>,
    g: &Geometry,
) -> Vec<f32> {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let k = g.k;
    let mut out = vec![0.0f32; n * c_out * out_plane];
    if out_plane == 0 {
        return out;
    }
    let rows = tile_rows(g.out_w);
    out.par_chunks_mut(out_plane)
        .enumerate()
        .for_each(|(idx, out_p)| {
            let (b, co) = (idx / c_out, idx % c_out);
            let b0 = bias.map_or(0.0, |bv| bv[co] as f64);
            let mut acc = vec![0.0f64; rows * g.out_w];
            let mut y0 = 0;
            while y0 < g.out_h {
                let y1 = (y0 + rows).min(g.out_h);
                let acc = &mut acc[..(y1 - y0) * g.out_w];
                acc.fill(b0);
                for ci in 0..c_in {
                    let xp = &x[(b * c_in + ci) * in_plane..][..in_plane];
                    let wk = &weight[(co * c_in + ci) * k * k..][..k * k];
                    for ky in 0..k {
                        let (oy_lo, oy_hi) = valid_range(g.offset(ky), g.stride, g.in_h, g.out_h);
                        let (oy_lo, oy_hi) = (oy_lo.max(y0), oy_hi.min(y1));
                        for kx in 0..k {
                            let wv = wk[ky * k + kx] as f64;
                            if wv == 0.0 {
                                continue;
                            }
                            let off_x = g.offset(kx);
                            let (ox_lo, ox_hi) = valid_range(off_x, g.stride, g.in_w, g.out_w);
                            if ox_lo >= ox_hi {
                                continue;
                            }
                            let ix_lo = (ox_lo as isize * g.stride as isize + off_x) as usize;
                            let len = ox_hi - ox_lo;
                            for oy in oy_lo..oy_hi {
                                let iy = (oy as isize * g.stride as isize + g.offset(ky)) as usize;
                                let row_in = &xp[iy * g.in_w..][..g.in_w];
                                let row_acc = &mut acc[(oy - y0) * g.out_w + ox_lo..][..len];
                                if g.stride == 1 {
                                    for (a, &v) in
                                        row_acc.iter_mut().zip(&row_in[ix_lo..ix_lo + len])
                                    {
                                        *a += wv * v as f64;
                                    }
                                } else {
                                    for (a, &v) in row_acc
                                        .iter_mut()
                                        .zip(row_in[ix_lo..].iter().step_by(g.stride))
                                    {
                                        *a += wv * v as f64;
                                    }
                                }
                            }
                        }
                    }
                }
                for (o, a) in out_p[y0 * g.out_w..y1 * g.out_w].iter_mut().zip(acc.iter()) {
                    *o = *a as f32;
                }
                y0 = y1;
            }
        });
    out
}

/// Adjoint of [`conv_forward_raw`] with respect to its input:
/// `gx[n, ci] = bias[ci] + sum_co W[co, ci] (*)^T g[n, co]`.
fn conv_input_grad_raw(
    grad: &[f32],
    n: usize,
    c_out: usize,
    weight: &[f32],
    c_in: usize,
    bias: Option<&[f32]>,
    g: &Geometry,
) -> Vec<f32> {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let k = g.k;
    let mut gx = vec![0.0f32; n * c_in * in_plane];
    if in_plane == 0 {
        return gx;
    }
    let rows = tile_rows(g.out_w);
    gx.par_chunks_mut(in_plane)
        .enumerate()
        .for_each(|(idx, gx_p)| {
            let (b, ci) = (idx / c_in, idx % c_in);
            let mut acc = vec![bias.map_or(0.0, |bv| bv[ci] as f64); in_plane];
            let mut y0 = 0;
            while y0 < g.out_h {
                let y1 = (y0 + rows).min(g.out_h);
                for co in 0..c_out {
                    let gp = &grad[(b * c_out + co) * out_plane..][..out_plane];
                    let wk = &weight[(co * c_in + ci) * k * k..][..k * k];
                    for ky in 0..k {
                        let (oy_lo, oy_hi) = valid_range(g.offset(ky), g.stride, g.in_h, g.out_h);
                        let (oy_lo, oy_hi) = (oy_lo.max(y0), oy_hi.min(y1));
                        for kx in 0..k {
                            let wv = wk[ky * k + kx] as f64;
                            if wv == 0.0 {
                                continue;
                            }
                            let off_x = g.offset(kx);
                            let (ox_lo, ox_hi) = valid_range(off_x, g.stride, g.in_w, g.out_w);
                            if ox_lo >= ox_hi {
                                continue;
                            }
                            let ix_lo = (ox_lo as isize * g.stride as isize + off_x) as usize;
                            let len = ox_hi - ox_lo;
                            for oy in oy_lo..oy_hi {
                                let iy = (oy as isize * g.stride as isize + g.offset(ky)) as usize;
                                let row_g = &gp[oy * g.out_w + ox_lo..][..len];
                                let row_acc = &mut acc[iy * g.in_w..][..g.in_w];
                                if g.stride == 1 {
                                    for (a, &v) in row_acc[ix_lo..ix_lo + len].iter_mut().zip(row_g)
                                    {
                                        *a += wv * v as f64;
                                    }
                                } else {
                                    for (a, &v) in
                                        row_acc[ix_lo..].iter_mut().step_by(g.stride).zip(row_g)
                                    {
                                        *a += wv * v as f64;
                                    }
                                }
                            }
                        }
                    }
                }
                y0 = y1;
            }
            for (o, a) in gx_p.iter_mut().zip(&acc) {
                *o = *a as f32;
            }
        });
    gx
}

/// `dW[co, ci, ky, kx] = sum_{n, oy, ox} g[n, co, oy, ox] * x[n, ci, iy, ix]`.
fn conv_weight_grad_raw(
    x: &[f32],
    grad: &[f32],
    n: usize,
    c_in: usize,
    c_out: usize,
    g: &Geometry,
) -> Vec<f32> {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let k = g.k;
    let per_co = c_in * k * k;
    let mut dw = vec![0.0f32; c_out * per_co];
    dw.par_chunks_mut(per_co)
        .enumerate()
        .for_each(|(co, dw_co)| {
            let mut acc = vec![0.0f64; per_co];
            for b in 0..n {
                let gp = &grad[(b * c_out + co) * out_plane..][..out_plane];
                for ci in 0..c_in {
                    let xp = &x[(b * c_in + ci) * in_plane..][..in_plane];
                    for ky in 0..k {
                        let (oy_lo, oy_hi) = valid_range(g.offset(ky), g.stride, g.in_h, g.out_h);
                        for kx in 0..k {
                            let off_x = g.offset(kx);
                            let (ox_lo, ox_hi) = valid_range(off_x, g.stride, g.in_w, g.out_w);
                            if ox_lo >= ox_hi {
                                continue;
                            }
                            let ix_lo = (ox_lo as isize * g.stride as isize + off_x) as usize;
                            let len = ox_hi - ox_lo;
                            let mut sum = 0.0f64;
                            for oy in oy_lo..oy_hi {
                                let iy = (oy as isize * g.stride as isize + g.offset(ky)) as usize;
                                let row_g = &gp[oy * g.out_w + ox_lo..][..len];
                                let row_in = &xp[iy * g.in_w..][..g.in_w];
                                if g.stride == 1 {
                                    for (&a, &v) in row_g.iter().zip(&row_in[ix_lo..ix_lo + len]) {
                                        sum += a as f64 * v as f64;
                                    }
                                } else {
                                    for (&a, &v) in
                                        row_g.iter().zip(row_in[ix_lo..].iter().step_by(g.stride))
                                    {
                                        sum += a as f64 * v as f64;
                                    }
                                }
                            }
                            acc[(ci * k + ky) * k + kx] += sum;
                        }
                    }
                }
            }
            for (o, a) in dw_co.iter_mut().zip(&acc) {
                *o = *a as f32;
            }
        });
    dw
}

fn channel_sums(t: &Tensor) -> Vec<f32> {
    let s = t.shape();
    (0..s.c)
        .map(|c| {
            (0..s.n)
                .map(|n| t.plane(n, c).iter().map(|&v| v as f64).sum::<f64>())
                .sum::<f64>() as f32
        })
        .collect()
}

fn check_conv(
    x: &Tensor,
    p: &ConvParams,
    c_in: usize,
    bias_len: usize,
    op: &'static str,
) -> Result<()> {
    p.validate()?;
    if x.shape().c != c_in {
        return Err(Error::Argument(format!(
            "{op}: input has {} channels, kernel expects {c_in}",
            x.shape().c
        )));
    }
    if p.bias.len() != bias_len {
        return Err(Error::Argument(format!(
            "{op}: bias has {} entries, expected {bias_len}",
            p.bias.len()
        )));
    }
    x.ensure_finite(op)
}

fn conv_geometry(p: &ConvParams, in_h: usize, in_w: usize) -> Geometry {
    Geometry {
        k: p.kernel(),
        stride: p.stride,
        dil: p.dilation,
        pad: p.pad(),
        in_h,
        in_w,
        out_h: conv_out_len(in_h, p.stride),
        out_w: conv_out_len(in_w, p.stride),
    }
}

/// Same-padded dilated cross-correlation plus bias.
pub fn conv2d(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let ws = p.weight.shape();
    check_conv(x, p, ws.c, ws.n, "conv2d")?;
    let xs = x.shape();
    let g = conv_geometry(p, xs.h, xs.w);
    let out = conv_forward_raw(
        x.data(),
        xs.n,
        xs.c,
        p.weight.data(),
        ws.n,
        Some(&p.bias),
        &g,
    );
    Tensor::from_vec(Shape::new(xs.n, ws.n, g.out_h, g.out_w), out)
}

/// Gradients of a scalar loss through [`conv2d`], given `dL/d(output)`.
pub fn conv2d_backward(x: &Tensor, p: &ConvParams, grad_out: &Tensor) -> Result<ConvGrads> {
    conv2d_backward_opt(x, p, grad_out, true)
}

/// [`conv2d_backward`] that skips the input gradient when `want_input` is false.
pub fn conv2d_backward_opt(
    x: &Tensor,
    p: &ConvParams,
    grad_out: &Tensor,
    want_input: bool,
) -> Result<ConvGrads> {
    let ws = p.weight.shape();
    check_conv(x, p, ws.c, ws.n, "conv2d_backward")?;
    let xs = x.shape();
    let g = conv_geometry(p, xs.h, xs.w);
    let expect = Shape::new(xs.n, ws.n, g.out_h, g.out_w);
    if grad_out.shape() != expect {
        return Err(Error::Argument(format!(
            "conv2d_backward: grad_out shape {} != output shape {expect}",
            grad_out.shape()
        )));
    }
    let input = if want_input {
        let gx = conv_input_grad_raw(grad_out.data(), xs.n, ws.n, p.weight.data(), ws.c, None, &g);
        Some(Tensor::from_vec(xs, gx)?)
    } else {
        None
    };
    let dw = conv_weight_grad_raw(x.data(), grad_out.data(), xs.n, ws.c, ws.n, &g);
    Ok(ConvGrads {
        input,
        weight: Tensor::from_vec(ws, dw)?,
        bias: channel_sums(grad_out),
    })
}

/// Geometry of the stride-2 convolution whose adjoint a transposed conv is.
fn transposed_geometry(p: &ConvParams, h: usize, w: usize) -> Geometry {
    let f = p.stride;
    Geometry {
        k: p.kernel(),
        stride: f,
        dil: p.dilation,
        pad: p.pad(),
        in_h: h * f,
        in_w: w * f,
        out_h: h,
        out_w: w,
    }
}

/// Fractionally strided convolution: upsamples `(h, w)` to
/// `(stride * h, stride * w)`. It is the exact adjoint of [`conv2d`] with the
/// same weight tensor and stride, plus bias.
pub fn transposed_conv2d(x: &Tensor, p: &ConvParams) -> Result<Tensor> {
    let ws = p.weight.shape();
    check_conv(x, p, ws.n, ws.c, "transposed_conv2d")?;
    let xs = x.shape();
    let g = transposed_geometry(p, xs.h, xs.w);
    let out = conv_input_grad_raw(
        x.data(),
        xs.n,
        ws.n,
        p.weight.data(),
        ws.c,
        Some(&p.bias),
        &g,
    );
    Tensor::from_vec(Shape::new(xs.n, ws.c, g.in_h, g.in_w), out)
}

pub fn transposed_conv2d_backward(
    x: &Tensor,
    p: &ConvParams,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    transposed_conv2d_backward_opt(x, p, grad_out, true)
}

pub fn transposed_conv2d_backward_opt(
    x: &Tensor,
    p: &ConvParams,
    grad_out: &Tensor,
    want_input: bool,
) -> Result<ConvGrads> {
    let ws = p.weight.shape();
    check_conv(x, p, ws.n, ws.c, "transposed_conv2d_backward")?;
    let xs = x.shape();
    let g = transposed_geometry(p, xs.h, xs.w);
    let expect = Shape::new(xs.n, ws.c, g.in_h, g.in_w);
    if grad_out.shape() != expect {
        return Err(Error::Argument(format!(
            "transposed_conv2d_backward: grad_out shape {} != output shape {expect}",
            grad_out.shape()
        )));
    }
    let input = if want_input {
        let gx = conv_forward_raw(grad_out.data(), xs.n, ws.c, p.weight.data(), ws.n, None, &g);
        Some(Tensor::from_vec(xs, gx)?)
    } else {
        None
    };
    // The transposed op's weight plays the role of a conv kernel mapping
    // grad_out space (conv input) to x space (conv output).
    let dw = conv_weight_grad_raw(grad_out.data(), x.data(), xs.n, ws.c, ws.n, &g);
    Ok(ConvGrads {
        input,
        weight: Tensor::from_vec(ws, dw)?,
        bias: channel_sums(grad_out),
    })
}
