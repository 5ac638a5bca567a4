//! Adam with bias correction.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter slice.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(lens: impl IntoIterator<Item = usize>, config: AdamConfig) -> Self {
        let lens: Vec<usize> = lens.into_iter().collect();
        AdamState {
            config,
            m: lens.iter().map(|&n| vec![0.0; n]).collect(),
            v: lens.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// One update of every parameter slice; `t` advances by one.
    pub fn step(&mut self, params: &mut [&mut [f32]], grads: &[&[f32]], lr: f64) -> Result<()> {
        if lr.is_nan() || lr <= 0.0 || !lr.is_finite() {
            return Err(Error::Argument(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam: {} parameter slices, {} gradients, state for {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::Shape(format!(
                    "adam slice {i}: param {} grad {} state {}",
                    p.len(),
                    g.len(),
                    self.m[i].len()
                )));
            }
        }

        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                let gj = g[j] as f64;
                let mj = beta1 * m[j] as f64 + (1.0 - beta1) * gj;
                let vj = beta2 * v[j] as f64 + (1.0 - beta2) * gj * gj;
                m[j] = mj as f32;
                v[j] = vj as f32;
                let update = lr * (mj / bc1) / ((vj / bc2).sqrt() + eps);
                p[j] = (p[j] as f64 - update) as f32;
            }
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(
    params: &mut [&mut [f32]],
    grads: &[&[f32]],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    state.step(params, grads, lr)
}
