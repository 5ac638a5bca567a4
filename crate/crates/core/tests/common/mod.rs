//! Independent f64 reference implementations used as test oracles.
#![allow(dead_code, clippy::needless_range_loop)]

pub mod checks;

use bitexpand::model::{BitNetModel, LayerKind};
use bitexpand::rng::Rng;
use bitexpand::{Shape, Tensor};

/// Plain f64 NCHW array.
#[derive(Clone, Debug)]
pub struct T64 {
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

impl T64 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        T64 {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        T64 {
            dims: t.shape().dims(),
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        let [n, c, h, w] = self.dims;
        Tensor::from_vec(
            Shape::new(n, c, h, w),
            self.data.iter().map(|&v| v as f32).collect(),
        )
        .unwrap()
    }

    pub fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.dims[1] + c) * self.dims[2] + y) * self.dims[3] + x
    }

    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(n, c, y, x)]
    }

    pub fn add(&self, o: &T64) -> T64 {
        assert_eq!(self.dims, o.dims);
        T64 {
            dims: self.dims,
            data: self.data.iter().zip(&o.data).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn dot(&self, o: &T64) -> f64 {
        self.data.iter().zip(&o.data).map(|(a, b)| a * b).sum()
    }
}

pub fn random_tensor(shape: Shape, rng: &mut Rng, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.uniform(lo, hi) as f32)
}

/// Random values whose magnitude is at least `min_abs`, away from kinks.
pub fn random_away_from_zero(shape: Shape, rng: &mut Rng, min_abs: f64, max_abs: f64) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| {
        let m = rng.uniform(min_abs, max_abs);
        (if rng.bernoulli(0.5) { m } else { -m }) as f32
    })
}

/// Six-loop dilated cross-correlation with symmetric zero padding.
/// `w` is `(c_out, c_in, k, k)`.
pub fn conv2d_ref(x: &T64, w: &T64, b: &[f64], stride: usize, dil: usize) -> T64 {
    let [n, c_in, h, wd] = x.dims;
    let [c_out, wc_in, k, _] = w.dims;
    assert_eq!(c_in, wc_in);
    let pad = (dil * (k - 1) / 2) as isize;
    let (oh, ow) = (h.div_ceil(stride), wd.div_ceil(stride));
    let mut out = T64::zeros([n, c_out, oh, ow]);
    for b_ in 0..n {
        for co in 0..c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = b[co];
                    for ci in 0..c_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride) as isize - pad + (ky * dil) as isize;
                                let ix = (ox * stride) as isize - pad + (kx * dil) as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                s +=
                                    x.get(b_, ci, iy as usize, ix as usize) * w.get(co, ci, ky, kx);
                            }
                        }
                    }
                    let i = out.idx(b_, co, oy, ox);
                    out.data[i] = s;
                }
            }
        }
    }
    out
}

/// Scatter form of the stride-2 upsampling conv: every input sample adds
/// `x * w` at `2 * i - pad + k * dil`. `w` is `(c_in, c_out, k, k)`.
pub fn transposed_ref(x: &T64, w: &T64, b: &[f64], dil: usize) -> T64 {
    let [n, c_in, h, wd] = x.dims;
    let [wc_in, c_out, k, _] = w.dims;
    assert_eq!(c_in, wc_in);
    let pad = (dil * (k - 1) / 2) as isize;
    let (oh, ow) = (2 * h, 2 * wd);
    let mut out = T64::zeros([n, c_out, oh, ow]);
    for b_ in 0..n {
        for co in 0..c_out {
            for y in 0..oh {
                for xx in 0..ow {
                    let i = out.idx(b_, co, y, xx);
                    out.data[i] = b[co];
                }
            }
        }
        for ci in 0..c_in {
            for iy in 0..h {
                for ix in 0..wd {
                    let v = x.get(b_, ci, iy, ix);
                    for co in 0..c_out {
                        for ky in 0..k {
                            for kx in 0..k {
                                let oy = (2 * iy) as isize - pad + (ky * dil) as isize;
                                let ox = (2 * ix) as isize - pad + (kx * dil) as isize;
                                if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                                    continue;
                                }
                                let o = out.idx(b_, co, oy as usize, ox as usize);
                                out.data[o] += v * w.get(ci, co, ky, kx);
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn leaky_ref(x: &T64) -> T64 {
    T64 {
        dims: x.dims,
        data: x
            .data
            .iter()
            .map(|&v| if v >= 0.0 { v } else { 0.2 * v })
            .collect(),
    }
}

/// Direct half-pixel bilinear interpolation.
pub fn upsample_ref(x: &T64, oh: usize, ow: usize) -> T64 {
    let [n, c, h, w] = x.dims;
    let coord = |d: usize, inp: usize, out: usize| -> (usize, usize, f64) {
        let s = ((d as f64 + 0.5) * inp as f64 / out as f64 - 0.5).clamp(0.0, (inp - 1) as f64);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(inp - 1);
        (i0, i1, s - i0 as f64)
    };
    let mut out = T64::zeros([n, c, oh, ow]);
    for b in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                let (y0, y1, fy) = coord(y, h, oh);
                for xx in 0..ow {
                    let (x0, x1, fx) = coord(xx, w, ow);
                    let top = x.get(b, ch, y0, x0) * (1.0 - fx) + x.get(b, ch, y0, x1) * fx;
                    let bot = x.get(b, ch, y1, x0) * (1.0 - fx) + x.get(b, ch, y1, x1) * fx;
                    let i = out.idx(b, ch, y, xx);
                    out.data[i] = top * (1.0 - fy) + bot * fy;
                }
            }
        }
    }
    out
}

/// Per-sample mean absolute error averaged over the batch.
pub fn l1_ref(pred: &T64, target: &T64) -> f64 {
    let [n, c, h, w] = pred.dims;
    let per = c * h * w;
    (0..n)
        .map(|b| {
            pred.data[b * per..(b + 1) * per]
                .iter()
                .zip(&target.data[b * per..(b + 1) * per])
                .map(|(p, t)| (p - t).abs())
                .sum::<f64>()
                / per as f64
        })
        .sum::<f64>()
        / n as f64
}

/// A model's parameters in f64, `[w0, b0, w1, b1, ...]`.
pub fn model_params(model: &BitNetModel) -> Vec<Vec<f64>> {
    model
        .layers()
        .iter()
        .flat_map(|l| {
            [
                l.params
                    .weight
                    .data()
                    .iter()
                    .map(|&v| v as f64)
                    .collect::<Vec<_>>(),
                l.params.bias.iter().map(|&v| v as f64).collect(),
            ]
        })
        .collect()
}

/// The network graph re-derived from its layer names and evaluated in f64
/// with `params` substituted for the model's own values.
pub fn model_forward_ref(model: &BitNetModel, params: &[Vec<f64>], x: &T64) -> T64 {
    model_forward_ref_signs(model, params, x).0
}

/// [`model_forward_ref`] plus the sign of every value entering a leaky ReLU,
/// which identifies the linear piece the network is evaluated on.
pub fn model_forward_ref_signs(
    model: &BitNetModel,
    params: &[Vec<f64>],
    x: &T64,
) -> (T64, Vec<bool>) {
    let cfg = model.config();
    let d = cfg.num_stages;
    let signs = std::cell::RefCell::new(Vec::new());
    let layer = |name: &str, input: &T64, preact: bool| -> T64 {
        if preact {
            signs
                .borrow_mut()
                .extend(input.data.iter().map(|&v| v >= 0.0));
        }
        let (i, l) = model
            .layers()
            .iter()
            .enumerate()
            .find(|(_, l)| l.name == name)
            .unwrap_or_else(|| panic!("no layer {name}"));
        let input = if preact {
            leaky_ref(input)
        } else {
            input.clone()
        };
        let w = T64 {
            dims: l.params.weight.shape().dims(),
            data: params[2 * i].clone(),
        };
        let b = &params[2 * i + 1];
        match l.kind {
            LayerKind::Conv => conv2d_ref(&input, &w, b, l.params.stride, l.params.dilation),
            LayerKind::Transposed => transposed_ref(&input, &w, b, l.params.dilation),
        }
    };

    let h0 = layer("head.0", x, false);
    let mut feats = vec![layer("head.1", &h0, true)];
    for k in 1..=d {
        let a = layer(&format!("down.{k}.stride"), &feats[k - 1], true);
        feats.push(layer(&format!("down.{k}.dilated"), &a, true));
    }
    let mut u = feats[d].clone();
    let mut ups = vec![None; d];
    for k in (1..=d).rev() {
        let t = layer(&format!("up.{k}.dilated"), &u, true);
        u = layer(&format!("up.{k}.transposed"), &t, true).add(&feats[k - 1]);
        ups[k - 1] = Some(u.clone());
    }
    let [_, _, h, w] = x.dims;
    let mut s = u;
    if cfg.use_msfi {
        for k in 0..d {
            if k + cfg.msfi_disconnect_from_smallest >= d {
                continue;
            }
            let tap = ups[k].as_ref().unwrap();
            let up = upsample_ref(tap, h, w);
            s = s.add(&layer(&format!("msfi.{k}"), &up, true));
        }
    }
    let t0 = layer("tail.0", &s, true);
    let y = layer("tail.1", &t0, true);
    (y, signs.into_inner())
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
