//! Dense multilayer perceptron with ReLU hidden layers and a linear output,
//! trained with analytic backpropagation and Adam.
//!
//! Matrices are row-major `f64`. A layer's weight matrix has shape
//! `out_dim x in_dim`, so a batch `X` (`batch x in_dim`) maps to
//! `X W^T + b`.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;

/// Magic bytes opening a serialized network.
pub const WEIGHTS_MAGIC: &[u8; 8] = b"HV2XMLP1";

/// Behaviour/target network shape: 6 state features, two hidden layers of
/// 256 units, one Q-value per communication mode.
pub const DEFAULT_DIMS: [usize; 4] = [6, 256, 256, 4];

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Row-major `out_dim x in_dim`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    /// `out = x W^T + b` for a batch of rows.
    fn affine(&self, x: &[f64], batch: usize, out: &mut [f64]) {
        debug_assert_eq!(x.len(), batch * self.in_dim);
        debug_assert_eq!(out.len(), batch * self.out_dim);
        for row in out.chunks_exact_mut(self.out_dim) {
            row.copy_from_slice(&self.bias);
        }
        // SAFETY: slice lengths are checked above and strides describe
        // exactly those row-major buffers.
        unsafe {
            matrixmultiply::dgemm(
                batch,
                self.in_dim,
                self.out_dim,
                1.0,
                x.as_ptr(),
                self.in_dim as isize,
                1,
                self.weights.as_ptr(),
                1,
                self.in_dim as isize,
                1.0,
                out.as_mut_ptr(),
                self.out_dim as isize,
                1,
            );
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Post-activation outputs of every layer for one batch, input included.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn global_norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescales so the global L2 norm does not exceed `max_norm`.
    pub fn clip_global_norm(&mut self, max_norm: f64) {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for l in &mut self.layers {
                l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|g| *g *= s);
            }
        }
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::Shape(format!("invalid layer dims {dims:?}")));
    }
    Ok(())
}

impl Mlp {
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    /// He-uniform weights in `[-sqrt(6/fan_in), sqrt(6/fan_in)]`, zero biases.
    pub fn he_uniform(dims: &[usize], rng: &mut SimRng) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        for l in &mut net.layers {
            let bound = (6.0 / l.in_dim as f64).sqrt();
            for w in &mut l.weights {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].in_dim];
        d.extend(self.layers.iter().map(|l| l.out_dim));
        d
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_batch(x, 1)
    }

    /// Inference for `batch` row-major inputs.
    pub fn forward_batch(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        self.check_input(x, batch)?;
        let last = self.layers.len() - 1;
        let mut current = x.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; batch * layer.out_dim];
            layer.affine(&current, batch, &mut out);
            if k < last {
                relu_in_place(&mut out);
            }
            current = out;
        }
        Ok(current)
    }

    /// Forward pass keeping every activation for [`Mlp::backward`].
    pub fn forward_cached(&self, x: &[f64], batch: usize) -> Result<ForwardCache> {
        self.check_input(x, batch)?;
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; batch * layer.out_dim];
            layer.affine(&activations[k], batch, &mut out);
            if k < last {
                relu_in_place(&mut out);
            }
            activations.push(out);
        }
        Ok(ForwardCache { batch, activations })
    }

    /// Gradients of `sum(output * upstream)` with respect to every weight and
    /// bias. The ReLU derivative at exactly zero is taken as zero.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Gradients> {
        let batch = cache.batch;
        if cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::Shape("forward cache does not belong to this network".into()));
        }
        if upstream.len() != batch * self.out_dim() {
            return Err(Error::Shape(format!(
                "upstream gradient has {} values, expected {}",
                upstream.len(),
                batch * self.out_dim()
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut delta = upstream.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let input = &cache.activations[k];
            let g = &mut grads.layers[k];
            // dW = delta^T x
            // SAFETY: delta is batch x out, input is batch x in, dW is out x in.
            unsafe {
                matrixmultiply::dgemm(
                    layer.out_dim,
                    batch,
                    layer.in_dim,
                    1.0,
                    delta.as_ptr(),
                    1,
                    layer.out_dim as isize,
                    input.as_ptr(),
                    layer.in_dim as isize,
                    1,
                    0.0,
                    g.weights.as_mut_ptr(),
                    layer.in_dim as isize,
                    1,
                );
            }
            for row in delta.chunks_exact(layer.out_dim) {
                for (b, d) in g.bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if k == 0 {
                break;
            }
            // d input = delta W, masked by the previous layer's ReLU.
            let mut prev = vec![0.0; batch * layer.in_dim];
            // SAFETY: delta is batch x out, W is out x in, prev is batch x in.
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    layer.out_dim,
                    layer.in_dim,
                    1.0,
                    delta.as_ptr(),
                    layer.out_dim as isize,
                    1,
                    layer.weights.as_ptr(),
                    layer.in_dim as isize,
                    1,
                    0.0,
                    prev.as_mut_ptr(),
                    layer.in_dim as isize,
                    1,
                );
            }
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
        Ok(grads)
    }

    /// Hard copy of `source` parameters into `self`.
    pub fn copy_from(&mut self, source: &Mlp) -> Result<()> {
        if self.dims() != source.dims() {
            return Err(Error::Shape(format!(
                "cannot sync {:?} from {:?}",
                self.dims(),
                source.dims()
            )));
        }
        self.layers.clone_from(&source.layers);
        Ok(())
    }

    fn check_input(&self, x: &[f64], batch: usize) -> Result<()> {
        if batch == 0 || x.len() != batch * self.in_dim() {
            return Err(Error::Shape(format!(
                "input of {} values for batch {batch} x {}",
                x.len(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// Serializes as: magic, `u32` layer-dim count, `u32` dims, then per
    /// layer the row-major weights followed by the biases, all little-endian
    /// `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let dims = self.dims();
        w.write_all(WEIGHTS_MAGIC)?;
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in &dims {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for l in &self.layers {
            for v in l.weights.iter().chain(&l.bias) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let corrupt = |what: &str| Error::Weights(what.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
        if &magic != WEIGHTS_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32> {
            r.read_exact(&mut u32_buf).map_err(|_| corrupt("truncated header"))?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let n = read_u32(&mut r)? as usize;
        if !(2..=64).contains(&n) {
            return Err(corrupt("implausible layer count"));
        }
        let dims = (0..n)
            .map(|_| read_u32(&mut r).map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut net = Self::zeros(&dims).map_err(|_| corrupt("invalid dims"))?;
        let mut f64_buf = [0u8; 8];
        for l in &mut net.layers {
            for v in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                r.read_exact(&mut f64_buf).map_err(|_| corrupt("truncated parameters"))?;
                *v = f64::from_le_bytes(f64_buf);
            }
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        if !net.is_finite() {
            return Err(corrupt("non-finite parameter"));
        }
        Ok(net)
    }
}

fn flush_subnormal(x: f64) -> f64 {
    if x.is_subnormal() {
        0.0
    } else {
        x
    }
}

fn relu_in_place(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Squared error summed over every element and divided by the batch size
/// `m`, with its gradient `2 (pred - target) / m`.
pub fn mse_loss(pred: &[f64], target: &[f64], m: usize) -> (f64, Vec<f64>) {
    debug_assert_eq!(pred.len(), target.len());
    let m = m.max(1) as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / m
        })
        .collect();
    (loss / m, grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Gradients,
    v: Gradients,
    t: u64,
}

impl Adam {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        Self {
            config,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update of `net` in place.
    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.layers.len() != net.layers.len()
            || grads
                .layers
                .iter()
                .zip(&net.layers)
                .any(|(g, l)| g.in_dim != l.in_dim || g.out_dim != l.out_dim)
        {
            return Err(Error::Shape("gradients do not match network".into()));
        }
        if !grads.iter().all(|g| g.is_finite()) {
            return Err(Error::NonFinite("gradients"));
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powf(self.t as f64);
        let c2 = 1.0 - beta2.powf(self.t as f64);
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m.layers)
            .zip(&mut self.v.layers)
        {
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            let gs = g.weights.iter().chain(&g.bias);
            let ms = m.weights.iter_mut().chain(m.bias.iter_mut());
            let vs = v.weights.iter_mut().chain(v.bias.iter_mut());
            for (((p, g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                // Moments of dead units decay through the subnormal range,
                // where arithmetic is many times slower; those values are
                // indistinguishable from zero in the update anyway.
                *m = flush_subnormal(*m);
                *v = flush_subnormal(*v);
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
