//! Encoder-decoder bit-depth expansion network.
//!
//! Graph, for `D` stages:
//!
//! ```text
//! f0      = head.1(head.0(x))                       full resolution
//! f_k     = down.k.dilated(down.k.stride(f_{k-1}))   1/2^k,  k = 1..D
//! u_D     = f_D
//! u_{k-1} = up.k.transposed(up.k.dilated(u_k)) + f_{k-1}
//! s       = u_0 + sum_k msfi.k(upsample(u_k))        k = 0..D-1
//! y       = tail.1(tail.0(s))
//! ```
//!
//! Every conv except `head.0` is preceded by a leaky ReLU with slope 0.2.

mod checkpoint;
mod config;
mod padding;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, TrainState, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{BitNetConfig, Variant};
pub(crate) use padding::zero_extend;
pub use padding::{crop, pad_to_multiple, CropSpec};

use crate::error::{Error, Result};
use crate::ops::{
    add_assign, bilinear_upsample, bilinear_upsample_backward, conv2d, conv2d_backward_opt,
    leaky_relu, leaky_relu_backward, transposed_conv2d, transposed_conv2d_backward_opt, ConvGrads,
    ConvParams, LEAKY_SLOPE,
};
use crate::rng::Rng;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Transposed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    pub params: ConvParams,
}

impl Layer {
    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        match self.kind {
            LayerKind::Conv => conv2d(x, &self.params),
            LayerKind::Transposed => transposed_conv2d(x, &self.params),
        }
    }

    fn backward(&self, x: &Tensor, grad_out: &Tensor, want_input: bool) -> Result<ConvGrads> {
        match self.kind {
            LayerKind::Conv => conv2d_backward_opt(x, &self.params, grad_out, want_input),
            LayerKind::Transposed => {
                transposed_conv2d_backward_opt(x, &self.params, grad_out, want_input)
            }
        }
    }

    /// `(c_in, c_out)` of the layer as a map between feature spaces.
    pub fn io_channels(&self) -> (usize, usize) {
        let s = self.params.weight.shape();
        match self.kind {
            LayerKind::Conv => (s.c, s.n),
            LayerKind::Transposed => (s.n, s.c),
        }
    }
}

/// Positions of each role in the flat layer list.
#[derive(Clone, Debug, PartialEq)]
struct LayerIndex {
    head: [usize; 2],
    /// `(stride, dilated)` for stages 1..=D.
    down: Vec<(usize, usize)>,
    /// `(dilated, transposed)` for stages 1..=D.
    up: Vec<(usize, usize)>,
    /// One 1x1 conv per scale 0..D, empty when multi-scale integration is off.
    msfi: Vec<usize>,
    tail: [usize; 2],
}

/// A built network: configuration plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BitNetModel {
    config: BitNetConfig,
    layers: Vec<Layer>,
    index: LayerIndex,
}

/// Per-layer weight and bias gradients, aligned with [`BitNetModel::layers`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelGrads {
    pub layers: Vec<(Tensor, Vec<f32>)>,
}

impl ModelGrads {
    /// Flat `[w0, b0, w1, b1, ...]` view matching [`BitNetModel::params_mut`].
    pub fn slices(&self) -> Vec<&[f32]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.data(), b.as_slice()])
            .collect()
    }
}

struct Record {
    /// Input before the pre-activation.
    raw: Tensor,
    /// Input the convolution actually saw.
    input: Tensor,
    preact: bool,
}

/// Intermediate values retained by [`BitNetModel::forward_train`].
pub struct Trace {
    records: Vec<Option<Record>>,
    /// Shapes of the multi-scale taps before upsampling.
    tap_shapes: Vec<Shape>,
    output_shape: Shape,
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Center tap 1 on the diagonal `(out j, in j mod c_in)`, 0 elsewhere.
fn identity_init(p: &mut ConvParams, kind: LayerKind) {
    let s = p.weight.shape();
    let center = s.h / 2;
    let (c_in, c_out) = match kind {
        LayerKind::Conv => (s.c, s.n),
        LayerKind::Transposed => (s.n, s.c),
    };
    for j in 0..c_out {
        let i = j % c_in;
        let idx = match kind {
            LayerKind::Conv => p.weight.index(j, i, center, center),
            LayerKind::Transposed => p.weight.index(i, j, center, center),
        };
        p.weight.data_mut()[idx] = 1.0;
    }
}

/// Uniform in `+-sqrt(6 / (fan_in + fan_out))`.
fn xavier_init(p: &mut ConvParams, rng: &mut Rng) {
    let s = p.weight.shape();
    let k2 = s.h * s.w;
    let limit = (6.0 / ((s.c * k2 + s.n * k2) as f64)).sqrt();
    for v in p.weight.data_mut() {
        *v = rng.uniform(-limit, limit) as f32;
    }
}

struct Builder {
    layers: Vec<Layer>,
    seed: u64,
}

impl Builder {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        name: String,
        kind: LayerKind,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        dilation: usize,
    ) -> usize {
        let mut params = match kind {
            LayerKind::Conv => ConvParams::zeros(c_out, c_in, k, stride, dilation, c_out),
            LayerKind::Transposed => ConvParams::zeros(c_in, c_out, k, stride, dilation, c_out),
        };
        if k == 1 {
            xavier_init(&mut params, &mut Rng::stream(self.seed, fnv1a(&name)));
        } else {
            identity_init(&mut params, kind);
        }
        self.layers.push(Layer { name, kind, params });
        self.layers.len() - 1
    }
}

impl BitNetModel {
    /// Builds and initializes a network. 3x3 kernels start as center-tap
    /// identities, 1x1 kernels are Xavier-uniform from a per-layer stream
    /// derived from `seed` and the layer name, biases are zero.
    pub fn build(config: BitNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let d = config.num_stages;
        let hw = config.head_width;
        let mut b = Builder {
            layers: Vec::new(),
            seed,
        };
        let head = [
            b.push(
                "head.0".into(),
                LayerKind::Conv,
                config.in_channels(),
                hw,
                3,
                1,
                1,
            ),
            b.push("head.1".into(), LayerKind::Conv, hw, hw, 3, 1, 1),
        ];
        let mut down = Vec::with_capacity(d);
        for k in 1..=d {
            let (c_prev, c) = (config.feature_channels(k - 1), config.feature_channels(k));
            down.push((
                b.push(
                    format!("down.{k}.stride"),
                    LayerKind::Conv,
                    c_prev,
                    c,
                    3,
                    2,
                    1,
                ),
                b.push(
                    format!("down.{k}.dilated"),
                    LayerKind::Conv,
                    c,
                    c,
                    3,
                    1,
                    config.r_d,
                ),
            ));
        }
        let mut up = vec![(0, 0); d];
        for k in (1..=d).rev() {
            let (c_prev, c) = (config.feature_channels(k - 1), config.feature_channels(k));
            up[k - 1] = (
                b.push(
                    format!("up.{k}.dilated"),
                    LayerKind::Conv,
                    c,
                    c,
                    3,
                    1,
                    config.r_u,
                ),
                b.push(
                    format!("up.{k}.transposed"),
                    LayerKind::Transposed,
                    c,
                    c_prev,
                    3,
                    2,
                    1,
                ),
            );
        }
        let msfi = if config.use_msfi {
            (0..d)
                .map(|k| {
                    b.push(
                        format!("msfi.{k}"),
                        LayerKind::Conv,
                        config.feature_channels(k),
                        hw,
                        1,
                        1,
                        1,
                    )
                })
                .collect()
        } else {
            Vec::new()
        };
        let tail = [
            b.push("tail.0".into(), LayerKind::Conv, hw, hw, 3, 1, 1),
            b.push(
                "tail.1".into(),
                LayerKind::Conv,
                hw,
                config.out_channels(),
                1,
                1,
                1,
            ),
        ];
        Ok(BitNetModel {
            config,
            layers: b.layers,
            index: LayerIndex {
                head,
                down,
                up,
                msfi,
                tail,
            },
        })
    }

    pub fn config(&self) -> &BitNetConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn layer_mut(&mut self, name: &str) -> Option<&mut Layer> {
        self.layers.iter_mut().find(|l| l.name == name)
    }

    /// Changes how many multi-scale taps are dropped, without touching any
    /// parameter.
    pub fn set_msfi_disconnect(&mut self, count: usize) -> Result<()> {
        let mut cfg = self.config.clone();
        cfg.msfi_disconnect_from_smallest = count;
        cfg.validate()?;
        self.config = cfg;
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.params.num_params()).sum()
    }

    /// Flat `[w0, b0, w1, b1, ...]` mutable parameter view.
    pub fn params_mut(&mut self) -> Vec<&mut [f32]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                let p = &mut l.params;
                [p.weight.data_mut(), p.bias.as_mut_slice()]
            })
            .collect()
    }

    pub fn param_lens(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.params.weight.shape().numel(), l.params.bias.len()])
            .collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = x.shape();
        if s.c != self.config.in_channels() {
            return Err(Error::Argument(format!(
                "input has {} channels, network expects {}",
                s.c,
                self.config.in_channels()
            )));
        }
        let m = self.config.alignment();
        if s.h == 0 || s.w == 0 || !s.h.is_multiple_of(m) || !s.w.is_multiple_of(m) {
            return Err(Error::Precondition(format!(
                "spatial size {}x{} is not a multiple of {m}; pad the input first",
                s.h, s.w
            )));
        }
        Ok(())
    }

    fn apply(
        &self,
        layer: usize,
        raw: &Tensor,
        preact: bool,
        trace: &mut Option<&mut Trace>,
    ) -> Result<Tensor> {
        let l = &self.layers[layer];
        match trace {
            Some(t) => {
                let input = if preact {
                    leaky_relu(raw, LEAKY_SLOPE)?
                } else {
                    raw.clone()
                };
                let out = l.forward(&input)?;
                t.records[layer] = Some(Record {
                    raw: raw.clone(),
                    input,
                    preact,
                });
                Ok(out)
            }
            None if preact => l.forward(&leaky_relu(raw, LEAKY_SLOPE)?),
            None => l.forward(raw),
        }
    }

    fn run(&self, x: &Tensor, mut trace: Option<&mut Trace>) -> Result<Tensor> {
        self.check_input(x)?;
        let d = self.config.num_stages;
        let ix = &self.index;
        let (h, w) = (x.shape().h, x.shape().w);

        let h0 = self.apply(ix.head[0], x, false, &mut trace)?;
        let mut feats = vec![self.apply(ix.head[1], &h0, true, &mut trace)?];
        for &(stride, dilated) in &ix.down {
            let a = self.apply(stride, feats.last().expect("non-empty"), true, &mut trace)?;
            let f = self.apply(dilated, &a, true, &mut trace)?;
            feats.push(f);
        }

        let mut ups: Vec<Tensor> = Vec::with_capacity(d);
        let mut u = feats.pop().expect("D >= 1");
        for k in (1..=d).rev() {
            let (dilated, transposed) = ix.up[k - 1];
            let t = self.apply(dilated, &u, true, &mut trace)?;
            let mut v = self.apply(transposed, &t, true, &mut trace)?;
            add_assign(&mut v, &feats[k - 1])?;
            ups.push(v.clone());
            u = v;
        }
        // ups[i] holds u_{D-1-i}
        ups.reverse();

        let mut s = u;
        if !ix.msfi.is_empty() {
            for (k, tap) in ups.iter().enumerate() {
                if !self.config.msfi_tap_active(k) {
                    continue;
                }
                let up = if k == 0 {
                    tap.clone()
                } else {
                    bilinear_upsample(tap, h, w)?
                };
                let m = self.apply(ix.msfi[k], &up, true, &mut trace)?;
                add_assign(&mut s, &m)?;
            }
        }
        if let Some(t) = trace.as_deref_mut() {
            t.tap_shapes = ups.iter().map(Tensor::shape).collect();
        }
        let t0 = self.apply(ix.tail[0], &s, true, &mut trace)?;
        let y = self.apply(ix.tail[1], &t0, true, &mut trace)?;
        if let Some(t) = trace {
            t.output_shape = y.shape();
        }
        Ok(y)
    }

    /// Runs the network on `(n, in_channels, h, w)` with `h, w` multiples of
    /// `2^D`. The output has `out_channels` channels and the input's size.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.run(x, None)
    }

    /// Forward pass that keeps what [`BitNetModel::backward`] needs.
    pub fn forward_train(&self, x: &Tensor) -> Result<(Tensor, Trace)> {
        let mut trace = Trace {
            records: (0..self.layers.len()).map(|_| None).collect(),
            tap_shapes: Vec::new(),
            output_shape: Shape::new(0, 0, 0, 0),
        };
        let y = self.run(x, Some(&mut trace))?;
        Ok((y, trace))
    }

    fn layer_backward(
        &self,
        layer: usize,
        trace: &Trace,
        grad_out: &Tensor,
        grads: &mut [Option<(Tensor, Vec<f32>)>],
        want_input: bool,
    ) -> Result<Option<Tensor>> {
        let rec = trace.records[layer].as_ref().ok_or_else(|| {
            Error::Precondition(format!(
                "layer {} missing from trace",
                self.layers[layer].name
            ))
        })?;
        let g = self.layers[layer].backward(&rec.input, grad_out, want_input)?;
        grads[layer] = Some((g.weight, g.bias));
        match g.input {
            Some(gi) if rec.preact => Ok(Some(leaky_relu_backward(&rec.raw, &gi, LEAKY_SLOPE)?)),
            other => Ok(other),
        }
    }

    /// Gradients of a scalar loss with respect to every parameter, given
    /// `dL/d(output)` for the pass recorded in `trace`.
    pub fn backward(&self, trace: &Trace, grad_out: &Tensor) -> Result<ModelGrads> {
        if grad_out.shape() != trace.output_shape {
            return Err(Error::Shape(format!(
                "gradient {} does not match output {}",
                grad_out.shape(),
                trace.output_shape
            )));
        }
        let d = self.config.num_stages;
        let ix = &self.index;
        let mut grads: Vec<Option<(Tensor, Vec<f32>)>> =
            (0..self.layers.len()).map(|_| None).collect();
        let need = |t: Option<Tensor>| {
            t.ok_or_else(|| Error::Precondition("missing input gradient".into()))
        };
        let accumulate = |slot: &mut Option<Tensor>, g: Tensor| -> Result<()> {
            match slot {
                Some(acc) => add_assign(acc, &g),
                None => {
                    *slot = Some(g);
                    Ok(())
                }
            }
        };

        let g_t0 = need(self.layer_backward(ix.tail[1], trace, grad_out, &mut grads, true)?)?;
        let g_s = need(self.layer_backward(ix.tail[0], trace, &g_t0, &mut grads, true)?)?;

        let mut g_ups: Vec<Option<Tensor>> = (0..d).map(|_| None).collect();
        if !ix.msfi.is_empty() {
            for (k, slot) in g_ups.iter_mut().enumerate() {
                if !self.config.msfi_tap_active(k) {
                    continue;
                }
                let g_up = need(self.layer_backward(ix.msfi[k], trace, &g_s, &mut grads, true)?)?;
                let g_tap = if k == 0 {
                    g_up
                } else {
                    bilinear_upsample_backward(trace.tap_shapes[k], &g_up)?
                };
                accumulate(slot, g_tap)?;
            }
        }
        accumulate(&mut g_ups[0], g_s)?;

        let mut g_feats: Vec<Option<Tensor>> = (0..=d).map(|_| None).collect();
        for k in 1..=d {
            let g_u = need(g_ups[k - 1].take())?;
            let (dilated, transposed) = ix.up[k - 1];
            let g_t = need(self.layer_backward(transposed, trace, &g_u, &mut grads, true)?)?;
            accumulate(&mut g_feats[k - 1], g_u)?;
            let g_in = need(self.layer_backward(dilated, trace, &g_t, &mut grads, true)?)?;
            if k < d {
                accumulate(&mut g_ups[k], g_in)?;
            } else {
                accumulate(&mut g_feats[d], g_in)?;
            }
        }
        for k in (1..=d).rev() {
            let g_f = need(g_feats[k].take())?;
            let (stride, dilated) = ix.down[k - 1];
            let g_a = need(self.layer_backward(dilated, trace, &g_f, &mut grads, true)?)?;
            let g_prev = need(self.layer_backward(stride, trace, &g_a, &mut grads, true)?)?;
            accumulate(&mut g_feats[k - 1], g_prev)?;
        }
        let g_f0 = need(g_feats[0].take())?;
        let g_h0 = need(self.layer_backward(ix.head[1], trace, &g_f0, &mut grads, true)?)?;
        self.layer_backward(ix.head[0], trace, &g_h0, &mut grads, false)?;

        let layers = grads
            .into_iter()
            .zip(&self.layers)
            .map(|(g, l)| {
                // Disconnected taps receive zero gradient.
                g.unwrap_or_else(|| {
                    (
                        Tensor::zeros(l.params.weight.shape()),
                        vec![0.0; l.params.bias.len()],
                    )
                })
            })
            .collect();
        Ok(ModelGrads { layers })
    }

    /// Regroups `(n, 3 [+1], h, w)` into the single-channel batch
    /// `(3n, 1 [+1], h, w)` the channel-wise variant consumes; the bit-depth
    /// channel, when present, is shared by all three colour channels.
    pub fn chan_batch(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        let info = self.config.use_bit_info as usize;
        if s.c != 3 + info {
            return Err(Error::Argument(format!(
                "channel-wise input needs {} channels, got {}",
                3 + info,
                s.c
            )));
        }
        let per = 1 + info;
        let p = s.plane();
        let mut data = Vec::with_capacity(3 * s.n * per * p);
        for n in 0..s.n {
            for c in 0..3 {
                data.extend_from_slice(x.plane(n, c));
                if info == 1 {
                    data.extend_from_slice(x.plane(n, 3));
                }
            }
        }
        Tensor::from_vec(Shape::new(3 * s.n, per, s.h, s.w), data)
    }

    /// Applies a channel-wise network to each colour channel separately and
    /// concatenates the three results.
    pub fn forward_chan(&self, x: &Tensor) -> Result<Tensor> {
        if self.config.variant != Variant::Chan {
            return Err(Error::Argument(
                "forward_chan needs a channel-wise network".into(),
            ));
        }
        let batch = self.chan_batch(x)?;
        let y = self.forward(&batch)?;
        let s = x.shape();
        y.reshape(Shape::new(s.n, 3, s.h, s.w))
    }

    /// Image entry point: [`BitNetModel::forward_chan`] for colour input to
    /// the channel-wise variant, [`BitNetModel::forward`] otherwise.
    pub fn forward_image(&self, x: &Tensor) -> Result<Tensor> {
        match self.config.variant {
            Variant::Chan if x.shape().c != self.config.in_channels() => self.forward_chan(x),
            _ => self.forward(x),
        }
    }

    /// Pads to the alignment, runs [`BitNetModel::forward_image`], crops back.
    pub fn forward_padded(&self, x: &Tensor) -> Result<Tensor> {
        let (padded, spec) = pad_to_multiple(x, self.config.alignment());
        crop(&self.forward_image(&padded)?, spec)
    }
}
