//! Dense tanh networks with exact reverse-mode gradients, and ADAM.
//!
//! Parameters live in one flat vector, layer by layer: the row-major
//! `out × in` weight matrix followed by the `out` biases. Hidden layers use
//! tanh, the output layer is affine.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Default hidden sizing: `h1 = 10·n_in`, `h3 = 10·n_out`,
/// `h2 = round(√(h1·h3))`.
pub fn hidden_sizes(n_in: usize, n_out: usize) -> [usize; 3] {
    let h1 = 10 * n_in;
    let h3 = 10 * n_out;
    let h2 = ((h1 * h3) as f64).sqrt().round() as usize;
    [h1, h2.max(1), h3]
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f64>,
    #[serde(skip, default = "next_generation")]
    generation: u64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self {
            dims: self.dims.clone(),
            params: self.params.clone(),
            generation: self.generation,
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims && self.params == other.params
    }
}

/// Layer outputs recorded by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, the last entry the network output.
    pub activations: Vec<Vec<f64>>,
    generation: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

pub fn param_count(dims: &[usize]) -> usize {
    dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(dims: &[usize]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer dimensions {dims:?}")));
        }
        Ok(Self {
            dims: dims.to_vec(),
            params: vec![0.0; param_count(dims)],
            generation: next_generation(),
        })
    }

    /// Xavier-uniform weights, zero biases.
    pub fn xavier<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        let mut offset = 0;
        for w in dims.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + n_in * n_out] {
                *p = rng.random_range(-limit..=limit);
            }
            offset += n_in * n_out + n_out;
        }
        Ok(net)
    }

    /// Multiplies the weights of the last layer by `k`; a small `k` starts
    /// the network near a zero output.
    pub fn scale_output_layer(&mut self, k: f64) {
        let n = self.dims.len();
        let (n_in, n_out) = (self.dims[n - 2], self.dims[n - 1]);
        let start = param_count(&self.dims[..n - 1]);
        for p in &mut self.params[start..start + n_in * n_out] {
            *p *= k;
        }
        self.generation = next_generation();
    }

    pub fn from_params(dims: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(dims)?;
        if params.len() != net.params.len() {
            return Err(Error::DimensionMismatch {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_in(&self) -> usize {
        self.dims[0]
    }

    pub fn n_out(&self) -> usize {
        *self.dims.last().unwrap_or(&0)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation = next_generation();
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn layer_count(&self) -> usize {
        self.dims.len() - 1
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.n_in() {
            return Err(Error::DimensionMismatch {
                expected: self.n_in(),
                got: input.len(),
            });
        }
        Ok(())
    }

    fn layer(&self, l: usize, offset: usize, input: &[f64], out: &mut Vec<f64>) -> usize {
        let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
        let w = &self.params[offset..offset + n_in * n_out];
        let b = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        let hidden = l + 1 < self.layer_count();
        out.clear();
        for j in 0..n_out {
            let row = &w[j * n_in..(j + 1) * n_in];
            let z = b[j] + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
            out.push(if hidden { z.tanh() } else { z });
        }
        offset + n_in * n_out + n_out
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        let mut offset = 0;
        for l in 0..self.layer_count() {
            offset = self.layer(l, offset, &cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Scalar-output convenience.
    pub fn forward_scalar(&self, input: &[f64]) -> Result<f64> {
        Ok(self.forward(input)?[0])
    }

    pub fn forward_cached(&self, input: &[f64]) -> Result<ForwardCache> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.dims.len());
        activations.push(input.to_vec());
        let mut offset = 0;
        for l in 0..self.layer_count() {
            let mut out = Vec::with_capacity(self.dims[l + 1]);
            offset = self.layer(l, offset, &activations[l], &mut out);
            activations.push(out);
        }
        Ok(ForwardCache {
            activations,
            generation: self.generation,
        })
    }

    /// Parameter gradient of `grad_out · output`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(cache, grad_out, &mut grads)?;
        Ok(grads)
    }

    /// Like [`backward`](Self::backward) but accumulates into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, grad_out: &[f64], grads: &mut [f64]) -> Result<()> {
        if cache.generation != self.generation || cache.activations.len() != self.dims.len() {
            return Err(Error::StaleCache);
        }
        if grad_out.len() != self.n_out() {
            return Err(Error::DimensionMismatch {
                expected: self.n_out(),
                got: grad_out.len(),
            });
        }
        if grads.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                got: grads.len(),
            });
        }
        let mut offsets = Vec::with_capacity(self.layer_count());
        let mut o = 0;
        for w in self.dims.windows(2) {
            offsets.push(o);
            o += w[0] * w[1] + w[1];
        }
        // delta = dL/dz for the current layer
        let mut delta = grad_out.to_vec();
        for l in (0..self.layer_count()).rev() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            let input = &cache.activations[l];
            let off = offsets[l];
            {
                let (gw, gb) = grads[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for j in 0..n_out {
                    let d = delta[j];
                    if d == 0.0 {
                        continue;
                    }
                    gb[j] += d;
                    for (g, x) in gw[j * n_in..(j + 1) * n_in].iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for j in 0..n_out {
                    let d = delta[j];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, a) in prev.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                        *p += d * a;
                    }
                }
                // tanh' = 1 − y²
                for (p, y) in prev.iter_mut().zip(input) {
                    *p *= 1.0 - y * y;
                }
                delta = prev;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    /// Bias-corrected ADAM step. A non-finite gradient rejects the whole
    /// step and leaves parameters and moments untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch {
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}
