use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::engine::{Graph, Tensor, Var};
use crate::error::{Result, VampError};
use crate::params::{glorot, Bound, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Gelu,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Gelu => g.gelu(x),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Gelu => "gelu",
        })
    }
}

impl FromStr for Activation {
    type Err = VampError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "gelu" => Ok(Activation::Gelu),
            other => Err(VampError::Config(format!("unknown activation {other:?}"))),
        }
    }
}

/// `y = x W + b` applied over the last axis.
#[derive(Clone, Copy, Debug)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.insert(&format!("{name}/w"), glorot(&[d_in, d_out], d_in, d_out, rng));
        let b = store.insert(&format!("{name}/b"), Tensor::zeros(&[d_out]));
        Linear { w, b, d_in, d_out }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p.var(self.w))?;
        g.add(y, p.var(self.b))
    }
}

/// Layer normalisation with learned gain and shift.
#[derive(Clone, Copy, Debug)]
pub struct LayerNorm {
    pub gamma: usize,
    pub beta: usize,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, eps: f64) -> Self {
        let gamma = store.insert(&format!("{name}/gamma"), Tensor::filled(&[dim], 1.0));
        let beta = store.insert(&format!("{name}/beta"), Tensor::zeros(&[dim]));
        LayerNorm { gamma, beta, eps }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let n = g.layer_norm(x, self.eps)?;
        let s = g.mul(n, p.var(self.gamma))?;
        g.add(s, p.var(self.beta))
    }
}

/// Constant `[B, 1, L]` weights averaging the valid positions of each row.
/// Rows without valid positions get all-zero weights.
pub fn masked_mean_weights(valid: &[bool], batch: usize, len: usize) -> Tensor {
    let mut w = vec![0.0; batch * len];
    for b in 0..batch {
        let row = &valid[b * len..(b + 1) * len];
        let n = row.iter().filter(|&&v| v).count();
        if n > 0 {
            for (j, &v) in row.iter().enumerate() {
                if v {
                    w[b * len + j] = 1.0 / n as f64;
                }
            }
        }
    }
    Tensor::new(vec![batch, 1, len], w).expect("sized")
}

/// Masked mean over the position axis: `[B, L, d] -> [B, d]`.
pub fn masked_mean(g: &mut Graph, x: Var, valid: &[bool]) -> Result<Var> {
    let s = g.shape(x).to_vec();
    let (b, l, d) = (s[0], s[1], s[2]);
    let w = g.constant(masked_mean_weights(valid, b, l));
    let pooled = g.bmm(w, x)?;
    g.reshape(pooled, &[b, d])
}

/// Constant 0/1 tensor of shape `[B, L, d]` that zeroes padded rows.
pub fn row_mask(valid: &[bool], batch: usize, len: usize, d: usize) -> Tensor {
    let mut m = Vec::with_capacity(batch * len * d);
    for &v in &valid[..batch * len] {
        m.extend(std::iter::repeat_n(if v { 1.0 } else { 0.0 }, d));
    }
    Tensor::new(vec![batch, len, d], m).expect("sized")
}
