use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math;
use crate::rng::gaussian;
use crate::{Error, Result};

/// Layer widths of a fully-connected rectifier network, input first and
/// class count last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    sizes: Vec<usize>,
}

impl Architecture {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::arg("architecture needs an input and an output layer of positive width"));
        }
        Ok(Self { sizes })
    }

    /// `input → hidden… → classes`.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(classes);
        Self::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input(&self) -> usize {
        self.sizes[0]
    }

    pub fn classes(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Offset of layer `l`'s weight block; its bias follows the weights.
    pub(crate) fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.layers() + 1);
        let mut off = 0;
        out.push(0);
        for w in self.sizes.windows(2) {
            off += w[0] * w[1] + w[1];
            out.push(off);
        }
        out
    }
}

/// Flat parameter vector. Layer `l` stores its `out × in` weight matrix
/// row-major followed by its `out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    arch: Architecture,
    params: Vec<f64>,
}

impl ModelWeights {
    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::arg("parameter vector length does not match architecture"));
        }
        if params.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("model weights"));
        }
        Ok(Self { arch, params })
    }

    pub fn zeros(arch: Architecture) -> Self {
        let n = arch.param_count();
        Self { arch, params: vec![0.0; n] }
    }

    /// He-style fan-in initialisation: weights `N(0, 2/fan_in)`, biases zero.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(arch.param_count());
        for w in arch.sizes().windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = math::sqrt(2.0 / fan_in as f64);
            params.extend((0..fan_in * fan_out).map(|_| scale * gaussian(rng)));
            params.extend(core::iter::repeat_n(0.0, fan_out));
        }
        Self { arch, params }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// `w ← w + delta`.
    pub fn add(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.params.len() {
            return Err(Error::arg("delta dimension does not match weights"));
        }
        for (p, d) in self.params.iter_mut().zip(delta) {
            *p += d;
        }
        if self.params.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("model weights"));
        }
        Ok(())
    }

    /// `self − base`, elementwise.
    pub fn delta_from(&self, base: &ModelWeights) -> Vec<f64> {
        self.params.iter().zip(&base.params).map(|(a, b)| a - b).collect()
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Activations of every layer, input first and logits last.
    pub(crate) fn forward_all(&self, c: &[f64]) -> Vec<Vec<f64>> {
        let sizes = self.arch.sizes();
        let offsets = self.arch.offsets();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(sizes.len());
        acts.push(c.to_vec());
        for l in 0..self.arch.layers() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w = &self.params[offsets[l]..offsets[l] + n_in * n_out];
            let b = &self.params[offsets[l] + n_in * n_out..offsets[l + 1]];
            let x = &acts[l];
            let last = l + 1 == self.arch.layers();
            let out: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let z = b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                    if last {
                        z
                    } else {
                        z.max(0.0)
                    }
                })
                .collect();
            acts.push(out);
        }
        acts
    }

    /// Accumulates `scale · ∂(g·logits)/∂w` into `grad`, where `g` is the
    /// loss gradient at the logits.
    pub(crate) fn backward(&self, acts: &[Vec<f64>], dlogits: &[f64], scale: f64, grad: &mut [f64]) {
        let sizes = self.arch.sizes();
        let offsets = self.arch.offsets();
        let mut delta: Vec<f64> = dlogits.to_vec();
        for l in (0..self.arch.layers()).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let x = &acts[l];
            let (gw, gb) = grad[offsets[l]..offsets[l + 1]].split_at_mut(n_in * n_out);
            for o in 0..n_out {
                let d = scale * delta[o];
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                for (g, xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *g += d * xi;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.params[offsets[l]..offsets[l] + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                for (p, wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wi;
                }
            }
            // rectifier derivative, read off the post-activation
            for (p, a) in prev.iter_mut().zip(&acts[l]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

/// Logit vector `s(c | w)`.
pub fn forward_logits(w: &ModelWeights, c: &[f64]) -> Result<Vec<f64>> {
    if c.len() != w.arch().input() {
        return Err(Error::arg("covariate dimension does not match the network input"));
    }
    if c.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("covariates"));
    }
    let mut acts = w.forward_all(c);
    Ok(acts.pop().unwrap())
}
