//! Reusable numeric checks shared by the integration tests and the
//! acceptance harness. Each returns the worst error it observed.

use bitexpand::classical::{bit_replicate_value, mig_value, zero_pad_value, BitDepthSpec};
use bitexpand::image::{max_value, ImageBuffer};
use bitexpand::model::{BitNetConfig, BitNetModel};
use bitexpand::ops::{
    bilinear_upsample, bilinear_upsample_backward, conv2d, conv2d_backward, l1_loss,
    leaky_relu_backward, transposed_conv2d, transposed_conv2d_backward, ConvParams,
};
use bitexpand::rng::Rng;
use bitexpand::{Shape, Tensor};

use super::*;

/// Finite-difference step.
pub const FD_STEP: f64 = 1e-3;
/// Gradients smaller than this are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-3;

fn central(v: &mut [f64], i: usize, h: f64, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let orig = v[i];
    v[i] = orig + h;
    let up = f(v);
    v[i] = orig - h;
    let down = f(v);
    v[i] = orig;
    (up - down) / (2.0 * h)
}

/// Worst relative error of `analytic` against central differences of `f`
/// at every coordinate of `values`.
fn worst_fd(analytic: &[f32], values: &[f64], f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let mut v = values.to_vec();
    (0..v.len())
        .map(|i| {
            rel_err(
                analytic[i] as f64,
                central(&mut v, i, FD_STEP, f),
                GRAD_FLOOR,
            )
        })
        .fold(0.0, f64::max)
}

/// Input, weight and bias gradients of a conv or upsampling conv through
/// the linear probe `<layer(x), r>` on a 1x2x6x6 input.
pub fn conv_grad_case(transposed: bool, stride: usize, dil: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let (c_in, c_out) = (2, 3);
    let x = random_tensor(Shape::new(1, c_in, 6, 6), &mut rng, -1.0, 1.0);
    let wshape = if transposed {
        Shape::new(c_in, c_out, 3, 3)
    } else {
        Shape::new(c_out, c_in, 3, 3)
    };
    let weight = random_tensor(wshape, &mut rng, -1.0, 1.0);
    let bias: Vec<f32> = (0..c_out).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
    let p = ConvParams::new(weight.clone(), bias.clone(), stride, dil).unwrap();
    let out_side = if transposed {
        12
    } else {
        6usize.div_ceil(stride)
    };
    let probe = random_tensor(
        Shape::new(1, c_out, out_side, out_side),
        &mut rng,
        -1.0,
        1.0,
    );
    let r = T64::from_tensor(&probe);

    let g = if transposed {
        transposed_conv2d_backward(&x, &p, &probe).unwrap()
    } else {
        conv2d_backward(&x, &p, &probe).unwrap()
    };
    let x64 = T64::from_tensor(&x);
    let w64 = T64::from_tensor(&weight);
    let b64: Vec<f64> = bias.iter().map(|&v| v as f64).collect();
    let fwd = |x: &T64, w: &T64, b: &[f64]| {
        if transposed {
            transposed_ref(x, w, b, dil)
        } else {
            conv2d_ref(x, w, b, stride, dil)
        }
    };
    let fx = |v: &[f64]| {
        fwd(
            &T64 {
                dims: x64.dims,
                data: v.to_vec(),
            },
            &w64,
            &b64,
        )
        .dot(&r)
    };
    let fw = |v: &[f64]| {
        fwd(
            &x64,
            &T64 {
                dims: w64.dims,
                data: v.to_vec(),
            },
            &b64,
        )
        .dot(&r)
    };
    let fb = |v: &[f64]| fwd(&x64, &w64, v).dot(&r);
    worst_fd(g.input.as_ref().unwrap().data(), &x64.data, &fx)
        .max(worst_fd(g.weight.data(), &w64.data, &fw))
        .max(worst_fd(&g.bias, &b64, &fb))
}

/// Inputs kept at least `10 h` from the kink.
pub fn leaky_grad_case(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let x = random_away_from_zero(Shape::new(1, 2, 6, 6), &mut rng, 10.0 * FD_STEP, 2.0);
    let probe = random_tensor(x.shape(), &mut rng, -1.0, 1.0);
    let g = leaky_relu_backward(&x, &probe, 0.2).unwrap();
    let x64 = T64::from_tensor(&x);
    let r = T64::from_tensor(&probe);
    worst_fd(g.data(), &x64.data, &|v| {
        leaky_ref(&T64 {
            dims: x64.dims,
            data: v.to_vec(),
        })
        .dot(&r)
    })
}

pub fn bilinear_grad_case(oh: usize, ow: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let x = random_tensor(Shape::new(1, 2, 6, 6), &mut rng, -1.0, 1.0);
    let probe = random_tensor(Shape::new(1, 2, oh, ow), &mut rng, -1.0, 1.0);
    let g = bilinear_upsample_backward(x.shape(), &probe).unwrap();
    let x64 = T64::from_tensor(&x);
    let r = T64::from_tensor(&probe);
    worst_fd(g.data(), &x64.data, &|v| {
        upsample_ref(
            &T64 {
                dims: x64.dims,
                data: v.to_vec(),
            },
            oh,
            ow,
        )
        .dot(&r)
    })
}

/// Residuals at least `10 h` from zero so no element crosses a tie.
pub fn l1_grad_case(seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let target = random_tensor(Shape::new(2, 2, 6, 6), &mut rng, 0.0, 1.0);
    let offset = random_away_from_zero(target.shape(), &mut rng, 10.0 * FD_STEP, 0.5);
    let pred = Tensor::from_vec(
        target.shape(),
        target
            .data()
            .iter()
            .zip(offset.data())
            .map(|(t, o)| t + o)
            .collect(),
    )
    .unwrap();
    let (_, g) = l1_loss(&pred, &target).unwrap();
    let p64 = T64::from_tensor(&pred);
    let t64 = T64::from_tensor(&target);
    worst_fd(g.data(), &p64.data, &|v| {
        l1_ref(
            &T64 {
                dims: p64.dims,
                data: v.to_vec(),
            },
            &t64,
        )
    })
}

pub struct EndToEnd {
    pub worst: f64,
    pub checked: usize,
    /// Samples redrawn because a leaky ReLU input changed sign within +-h.
    pub skipped: usize,
    /// Parameter tensors with at least one checked sample.
    pub tensors_covered: usize,
    pub tensors: usize,
}

/// Sampled parameter gradients of `l1(forward(x))` on a 1xCx16x16 input
/// against central differences of step `h`, using the f64 reference
/// network. With `exclude_kinks`, samples whose perturbation moves any
/// pre-activation across zero are redrawn: the leaky-ReLU analogue of
/// excluding l1 ties.
pub fn end_to_end_case(
    cfg: BitNetConfig,
    seed: u64,
    samples_per_tensor: usize,
    h: f64,
    exclude_kinks: bool,
) -> EndToEnd {
    let mut rng = Rng::new(seed);
    let mut model = BitNetModel::build(cfg, seed).unwrap();
    // Move every parameter off its symmetric initial value.
    for p in model.params_mut() {
        for v in p.iter_mut() {
            *v += rng.uniform(-0.1, 0.1) as f32;
        }
    }
    let c_in = model.config().in_channels();
    let x = random_tensor(Shape::new(1, c_in, 16, 16), &mut rng, 0.0, 1.0);
    let x64 = T64::from_tensor(&x);
    let params = model_params(&model);

    let (base, base_signs) = model_forward_ref_signs(&model, &params, &x64);
    let offset = random_away_from_zero(base.to_tensor().shape(), &mut rng, 0.05, 0.1);
    let target64 = T64 {
        dims: base.dims,
        data: base
            .data
            .iter()
            .zip(offset.data())
            .map(|(b, o)| b - *o as f64)
            .collect(),
    };
    let target = target64.to_tensor();

    let (out, trace) = model.forward_train(&x).unwrap();
    let (_, g_out) = l1_loss(&out, &target).unwrap();
    let grads = model.backward(&trace, &g_out).unwrap();
    let flat = grads.slices();

    let mut res = EndToEnd {
        worst: 0.0,
        checked: 0,
        skipped: 0,
        tensors_covered: 0,
        tensors: params.len(),
    };
    for (pi, values) in params.iter().enumerate() {
        let want = samples_per_tensor.min(values.len());
        let (mut done, mut tries) = (0, 0);
        while done < want && tries < 40 * want {
            tries += 1;
            let i = rng.below(values.len() as u64) as usize;
            let mut p = params.clone();
            p[pi][i] = params[pi][i] + h;
            let (y_up, s_up) = model_forward_ref_signs(&model, &p, &x64);
            p[pi][i] = params[pi][i] - h;
            let (y_down, s_down) = model_forward_ref_signs(&model, &p, &x64);
            if exclude_kinks && (s_up != base_signs || s_down != base_signs) {
                res.skipped += 1;
                continue;
            }
            let num = (l1_ref(&y_up, &target64) - l1_ref(&y_down, &target64)) / (2.0 * h);
            res.worst = res.worst.max(rel_err(flat[pi][i] as f64, num, GRAD_FLOOR));
            res.checked += 1;
            done += 1;
        }
        if done > 0 {
            res.tensors_covered += 1;
        }
    }
    res
}

fn random_conv(rng: &mut Rng, stride: usize, dil: usize, transposed: bool) -> (Tensor, ConvParams) {
    let n = rng.range_inclusive(1, 2) as usize;
    let c_in = rng.range_inclusive(1, 4) as usize;
    let c_out = rng.range_inclusive(1, 4) as usize;
    let h = rng.range_inclusive(1, 9) as usize;
    let w = rng.range_inclusive(1, 9) as usize;
    let k = if !transposed && rng.bernoulli(0.25) {
        1
    } else {
        3
    };
    let x = random_tensor(Shape::new(n, c_in, h, w), rng, -1.0, 1.0);
    let wshape = if transposed {
        Shape::new(c_in, c_out, k, k)
    } else {
        Shape::new(c_out, c_in, k, k)
    };
    let weight = random_tensor(wshape, rng, -1.0, 1.0);
    let bias = (0..c_out).map(|_| rng.uniform(-1.0, 1.0) as f32).collect();
    (x, ConvParams::new(weight, bias, stride, dil).unwrap())
}

fn max_abs(a: &Tensor, b: &T64) -> f64 {
    assert_eq!(a.shape().dims(), b.dims, "shape mismatch against reference");
    a.data()
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x as f64 - y).abs())
        .fold(0.0, f64::max)
}

/// Worst absolute difference between `conv2d` and the six-loop reference
/// over `cases` random problems at the given stride and dilation.
pub fn conv_oracle(cases: usize, stride: usize, dil: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    (0..cases)
        .map(|_| {
            let (x, p) = random_conv(&mut rng, stride, dil, false);
            let y = conv2d(&x, &p).unwrap();
            let b: Vec<f64> = p.bias.iter().map(|&v| v as f64).collect();
            max_abs(
                &y,
                &conv2d_ref(
                    &T64::from_tensor(&x),
                    &T64::from_tensor(&p.weight),
                    &b,
                    stride,
                    dil,
                ),
            )
        })
        .fold(0.0, f64::max)
}

/// Upsampling conv against the scatter reference, plus the adjoint identity
/// `<conv(x), y> = <x, conv^T(y)>` relative to the product magnitudes.
pub fn transposed_oracle(cases: usize, seed: u64) -> (f64, f64) {
    let mut rng = Rng::new(seed);
    let mut worst_ref: f64 = 0.0;
    let mut worst_adj: f64 = 0.0;
    for _ in 0..cases {
        let (x, mut p) = random_conv(&mut rng, 2, 1, true);
        let y = transposed_conv2d(&x, &p).unwrap();
        let b: Vec<f64> = p.bias.iter().map(|&v| v as f64).collect();
        worst_ref = worst_ref.max(max_abs(
            &y,
            &transposed_ref(&T64::from_tensor(&x), &T64::from_tensor(&p.weight), &b, 1),
        ));

        // The adjoint identity concerns the linear part only.
        p.bias = vec![0.0; p.weight.shape().n];
        let lin_up =
            ConvParams::new(p.weight.clone(), vec![0.0; p.weight.shape().c], 2, 1).unwrap();
        let s = x.shape();
        let c_out = p.weight.shape().c;
        let z = random_tensor(
            Shape::new(s.n, c_out, 2 * s.h, 2 * s.w),
            &mut rng,
            -1.0,
            1.0,
        );
        let down = conv2d(&z, &p).unwrap();
        let up = transposed_conv2d(&x, &lin_up).unwrap();
        let lhs = down.dot(&x).unwrap();
        let rhs = up.dot(&z).unwrap();
        let scale = down
            .data()
            .iter()
            .map(|v| v.abs() as f64)
            .sum::<f64>()
            .max(1.0);
        worst_adj = worst_adj.max((lhs - rhs).abs() / scale);
    }
    (worst_ref, worst_adj)
}

/// Upsampling against the direct reference and the adjoint identity.
pub fn bilinear_oracle(cases: usize, seed: u64) -> (f64, f64) {
    let mut rng = Rng::new(seed);
    let mut worst_ref: f64 = 0.0;
    let mut worst_adj: f64 = 0.0;
    for _ in 0..cases {
        let (h, w) = (
            rng.range_inclusive(1, 8) as usize,
            rng.range_inclusive(1, 8) as usize,
        );
        let (oh, ow) = (h + rng.below(12) as usize, w + rng.below(12) as usize);
        let x = random_tensor(Shape::new(1, 2, h, w), &mut rng, -1.0, 1.0);
        let y = bilinear_upsample(&x, oh, ow).unwrap();
        worst_ref = worst_ref.max(max_abs(&y, &upsample_ref(&T64::from_tensor(&x), oh, ow)));
        let z = random_tensor(y.shape(), &mut rng, -1.0, 1.0);
        let back = bilinear_upsample_backward(x.shape(), &z).unwrap();
        let lhs = y.dot(&z).unwrap();
        let rhs = x.dot(&back).unwrap();
        worst_adj = worst_adj.max((lhs - rhs).abs() / lhs.abs().max(1.0));
    }
    (worst_ref, worst_adj)
}

/// SSIM by direct 2-D windowed sums with its own window construction.
pub fn ssim_ref(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let (w, h, c) = (a.width(), a.height(), a.channels());
    let peak = max_value(a.bit_depth()) as f64;
    let (c1, c2) = ((0.01 * peak).powi(2), (0.03 * peak).powi(2));
    let mut win = [[0.0f64; 11]; 11];
    let mut total = 0.0;
    for (i, row) in win.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            *v = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
            total += *v;
        }
    }
    let mut sum = 0.0;
    for ch in 0..c {
        let mut acc = 0.0;
        let mut count = 0usize;
        for y0 in 0..=h - 11 {
            for x0 in 0..=w - 11 {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for (i, row) in win.iter().enumerate() {
                    for (j, wt) in row.iter().enumerate() {
                        let wt = wt / total;
                        let va = a.get(x0 + j, y0 + i, ch) as f64;
                        let vb = b.get(x0 + j, y0 + i, ch) as f64;
                        ma += wt * va;
                        mb += wt * vb;
                        saa += wt * va * va;
                        sbb += wt * vb * vb;
                        sab += wt * va * vb;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        sum += acc / count as f64;
    }
    sum / c as f64
}

/// Random image pairs of assorted sizes and depths: `b` is `a` plus noise.
pub fn ssim_oracle(cases: usize, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let w = rng.range_inclusive(11, 24) as usize;
        let h = rng.range_inclusive(11, 24) as usize;
        let c = if rng.bernoulli(0.5) { 1 } else { 3 };
        let bits = [8u8, 10, 16][rng.below(3) as usize];
        let max = max_value(bits) as f64;
        let a = ImageBuffer::from_fn(w, h, c, bits, |_, _, _| {
            (rng.next_f64() * max).round() as u16
        })
        .unwrap();
        let noise = rng.uniform(0.0, 0.3) * max;
        let b = a
            .map_values(bits, |v| {
                (v as f64 + (rng_hash(v) - 0.5) * noise)
                    .clamp(0.0, max)
                    .round() as u16
            })
            .unwrap();
        let got = bitexpand::metrics::ssim(&a, &b).unwrap();
        worst = worst.max((got - ssim_ref(&a, &b)).abs());
    }
    worst
}

/// Cheap deterministic pseudo-noise in [0, 1) keyed by a value.
fn rng_hash(v: u16) -> f64 {
    let mut r = Rng::new(v as u64 + 1);
    r.next_f64()
}

/// Exhaustive checks of the classical expanders for `q` in 1..=8 and every
/// `H` in `q+1..=16` over all `2^q` codes. Returns the number of (q, H,
/// value) triples checked or the first failure.
pub fn exhaustive_expanders() -> Result<usize, String> {
    let mut checked = 0;
    for q in 1u8..=8 {
        for target in q + 1..=16 {
            let spec = BitDepthSpec::new(q, target).unwrap();
            let (qmax, hmax) = (max_value(q), max_value(target));
            let mut prev = (0u16, 0u16, 0u16);
            for v in 0..=qmax {
                let zp = zero_pad_value(v, spec);
                if zp >> (target - q) != v {
                    return Err(format!(
                        "zero_pad {v} q={q} H={target}: truncation gives back {}",
                        zp >> (target - q)
                    ));
                }
                let m = mig_value(v, spec);
                let exact = v as f64 * hmax as f64 / qmax as f64;
                if (m as f64 - exact).abs() > 0.5 {
                    return Err(format!("mig {v} q={q} H={target}: {m} vs {exact}"));
                }
                let br = bit_replicate_value(v, spec);
                // Output bit i (from the top) is source bit i mod q (from the top).
                for i in 0..target {
                    let out_bit = (br >> (target - 1 - i)) & 1;
                    let src_bit = (v >> (q - 1 - i % q)) & 1;
                    if out_bit != src_bit {
                        return Err(format!(
                            "bit_replicate {v} q={q} H={target}: bit {i} is {out_bit}"
                        ));
                    }
                }
                if target == 2 * q && br as u32 != v as u32 * ((1u32 << q) + 1) {
                    return Err(format!("bit_replicate {v} q={q}->2q: {br}"));
                }
                if v > 0 && (zp < prev.0 || m < prev.1 || br < prev.2) {
                    return Err(format!("expander not monotone at {v} q={q} H={target}"));
                }
                prev = (zp, m, br);
                checked += 1;
            }
            let ends = [
                (mig_value(0, spec), 0),
                (mig_value(qmax, spec), hmax),
                (bit_replicate_value(0, spec), 0),
                (bit_replicate_value(qmax, spec), hmax),
                (
                    zero_pad_value(qmax, spec),
                    hmax - ((1u16 << (target - q)) - 1),
                ),
            ];
            if let Some((got, want)) = ends.iter().find(|(g, w)| g != w) {
                return Err(format!("endpoint q={q} H={target}: {got} != {want}"));
            }
        }
    }
    Ok(checked)
}

fn jitter(model: &mut BitNetModel, seed: u64) {
    let mut rng = Rng::new(seed);
    for p in model.params_mut() {
        for v in p.iter_mut() {
            *v += rng.uniform(-0.05, 0.05) as f32;
        }
    }
}

/// Saves and reloads a perturbed default model, with and without optimizer
/// state, and compares parameters and forward outputs bit for bit.
pub fn checkpoint_roundtrip(dir: &std::path::Path) -> Result<(), String> {
    use bitexpand::model::{load_checkpoint, save_checkpoint, Checkpoint, TrainState};
    use bitexpand::optim::{AdamConfig, AdamState};

    let mut model = BitNetModel::build(BitNetConfig::default(), 21).map_err(|e| e.to_string())?;
    jitter(&mut model, 22);
    let x = random_tensor(Shape::new(1, 4, 32, 48), &mut Rng::new(23), 0.0, 1.0);
    let y = model.forward(&x).map_err(|e| e.to_string())?;

    let path = dir.join("roundtrip.ckpt");
    save_checkpoint(&model, &path).map_err(|e| e.to_string())?;
    let loaded = load_checkpoint(&path).map_err(|e| e.to_string())?;
    if loaded != model {
        return Err("reloaded parameters differ".into());
    }
    let y2 = loaded.forward(&x).map_err(|e| e.to_string())?;
    let same_bits = y
        .data()
        .iter()
        .zip(y2.data())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    if !same_bits {
        return Err("forward output differs after reload".into());
    }

    let mut adam = AdamState::new(model.param_lens(), AdamConfig::default());
    let mut rng = Rng::new(24);
    for m in adam.m.iter_mut().chain(adam.v.iter_mut()) {
        m.iter_mut()
            .for_each(|v| *v = rng.uniform(0.0, 1e-3) as f32);
    }
    adam.t = 77;
    let ck = Checkpoint {
        model: model.clone(),
        train: Some(TrainState {
            step: 77,
            epoch: 3,
            rng_state: {
                let mut r = Rng::stream(24, 9);
                r.next_u64();
                r.state()
            },
            adam,
        }),
    };
    let path = dir.join("train.ckpt");
    ck.save(&path).map_err(|e| e.to_string())?;
    if Checkpoint::load(&path).map_err(|e| e.to_string())? != ck {
        return Err("training state differs after reload".into());
    }
    Ok(())
}

type Mutation = fn(&mut Vec<u8>);

fn header_end(bytes: &[u8]) -> usize {
    bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .expect("blank line")
        + 2
}

fn replace_in_header(bytes: &mut Vec<u8>, from: &str, to: &str) {
    let end = header_end(bytes);
    let header = String::from_utf8(bytes[..end].to_vec()).unwrap();
    assert!(header.contains(from), "{from:?} not in header");
    let mut out = header.replacen(from, to, 1).into_bytes();
    out.extend_from_slice(&bytes[end..]);
    *bytes = out;
}

/// Corruptions every loader must reject, with a fragment of the expected
/// diagnostic.
pub fn corruption_cases() -> Vec<(&'static str, Mutation, &'static str)> {
    vec![
        (
            "truncated payload",
            |b| b.truncate(b.len() - 5),
            "truncated",
        ),
        (
            "trailing bytes",
            |b| b.extend_from_slice(&[0, 0, 0, 0]),
            "trailing",
        ),
        (
            "flipped payload bit",
            |b| *b.last_mut().unwrap() ^= 0x01,
            "checksum",
        ),
        ("bad magic", |b| b[0] = b'X', "magic"),
        (
            "future version",
            |b| replace_in_header(b, "format_version=1", "format_version=9"),
            "format_version",
        ),
        (
            "edited shape",
            |b| {
                replace_in_header(
                    b,
                    "param=head.0.weight 4x4x3x3",
                    "param=head.0.weight 2x8x3x3",
                )
            },
            "head.0.weight",
        ),
        (
            "missing parameter",
            |b| replace_in_header(b, "param=tail.1.bias", "param=tail.1.bogus"),
            "tail.1.bias",
        ),
        ("header cut short", |b| b.truncate(40), "blank line"),
        (
            "non-numeric width",
            |b| replace_in_header(b, "widths=4,8", "widths=4,x"),
            "width",
        ),
    ]
}

/// Applies every corruption to a fresh checkpoint and checks that loading
/// fails with a checkpoint error naming the problem. Returns the number of
/// cases.
pub fn checkpoint_corruptions(dir: &std::path::Path) -> Result<usize, String> {
    use bitexpand::model::{load_checkpoint, save_checkpoint};
    use bitexpand::Error;

    let model =
        BitNetModel::build(BitNetConfig::with_widths(vec![4, 8]), 31).map_err(|e| e.to_string())?;
    let clean = dir.join("clean.ckpt");
    save_checkpoint(&model, &clean).map_err(|e| e.to_string())?;
    let original = std::fs::read(&clean).map_err(|e| e.to_string())?;
    let cases = corruption_cases();
    for (label, mutate, needle) in &cases {
        let mut bytes = original.clone();
        mutate(&mut bytes);
        let path = dir.join("corrupt.ckpt");
        std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
        match load_checkpoint(&path) {
            Ok(_) => return Err(format!("{label}: accepted")),
            Err(Error::Checkpoint { msg, .. }) if msg.contains(needle) => {}
            Err(e) => return Err(format!("{label}: diagnostic {e:?} lacks {needle:?}")),
        }
    }
    match load_checkpoint(dir.join("absent.ckpt")) {
        Err(Error::Io { .. }) => Ok(cases.len() + 1),
        other => Err(format!("missing file: {other:?}")),
    }
}

/// `n` 16-bit RGB ramps with varied direction, slope and offset.
pub fn ramp_corpus(n: usize, size: usize, seed: u64) -> Vec<(String, ImageBuffer)> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|i| {
            let angle = rng.uniform(0.0, std::f64::consts::TAU);
            let (dx, dy) = (angle.cos(), angle.sin());
            let offsets: Vec<f64> = (0..3).map(|_| rng.uniform(0.2, 0.8)).collect();
            let slope = rng.uniform(0.1, 0.5);
            let img = ImageBuffer::from_fn(size, size, 3, 16, |x, y, c| {
                let u = (x as f64 / size as f64 - 0.5) * dx + (y as f64 / size as f64 - 0.5) * dy;
                ((offsets[c] + slope * u).clamp(0.0, 1.0) * 65535.0).round() as u16
            })
            .unwrap();
            (format!("ramp_{i:02}"), img)
        })
        .collect()
}

/// Runs `fit` on an in-memory corpus and returns the per-step records.
pub fn train_in(
    dir: &std::path::Path,
    config: bitexpand::train::TrainConfig,
    images: Vec<(String, ImageBuffer)>,
) -> bitexpand::Result<Vec<bitexpand::train::StepRecord>> {
    use bitexpand::data::{Dataset, MemorySource};
    let ds = Dataset::new(
        Box::new(MemorySource::new(images)),
        config.augment.clone(),
        config.target_bits,
    )?;
    bitexpand::train::Trainer::new(config, ds)?.fit(dir)
}

/// Every regular file of `dir` keyed by name.
pub fn dir_bytes(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}
