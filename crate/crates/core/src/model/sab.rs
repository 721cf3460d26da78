//! Path 1: token embeddings, stacked set-attention blocks, masked mean pooling.
//!
//! No positional information enters this path, so each block is
//! permutation-equivariant over the positions it may attend to and the
//! pooled vector is permutation-invariant. With `masked = true` every padded
//! key receives exactly zero attention weight, which makes the pooled
//! output independent of how much padding a sample carries.

use rand::Rng;

use super::layers::{masked_mean, row_mask, Activation, LayerNorm, Linear};
use crate::batch::PaddedBatch;
use crate::engine::{Graph, Tensor, Var, MASK_NEG};
use crate::error::{Result, VampError};
use crate::params::{normal, Bound, ParamStore};
use crate::tokenizer::PAD;

#[derive(Clone, Debug, PartialEq)]
pub struct SabConfig {
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub masked: bool,
    pub ln_eps: f64,
}

impl Default for SabConfig {
    fn default() -> Self {
        SabConfig {
            emb_dim: 64,
            hidden_dim: 32,
            num_layers: 3,
            num_heads: 4,
            dropout: 0.1128,
            activation: Activation::Relu,
            masked: true,
            ln_eps: 1e-5,
        }
    }
}

impl SabConfig {
    pub fn validate(&self) -> Result<()> {
        if self.emb_dim == 0 || self.num_heads == 0 || self.emb_dim % self.num_heads != 0 {
            return Err(VampError::Config(format!(
                "emb_dim {} must be a positive multiple of num_heads {}",
                self.emb_dim, self.num_heads
            )));
        }
        if self.hidden_dim == 0 {
            return Err(VampError::Config("hidden_dim must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(VampError::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        Ok(())
    }
}

/// Additive key-side mask for `[B*H, L, L]` scores: `-MASK_NEG` wherever key
/// position `j` is padding.
pub fn key_padding_mask(valid: &[bool], batch: usize, heads: usize, len: usize) -> Tensor {
    let mut m = Vec::with_capacity(batch * heads * len * len);
    for b in 0..batch {
        let row: Vec<f64> = valid[b * len..(b + 1) * len]
            .iter()
            .map(|&v| if v { 0.0 } else { -MASK_NEG })
            .collect();
        for _ in 0..heads * len {
            m.extend_from_slice(&row);
        }
    }
    Tensor::new(vec![batch * heads, len, len], m).expect("sized")
}

#[derive(Clone, Debug)]
struct SabLayer {
    wq: Linear,
    wk: Linear,
    wv: Linear,
    wo: Linear,
    ln1: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    ln2: LayerNorm,
}

/// Output of Path 1 for a batch.
pub struct Path1Output {
    /// `[B, d]` pooled set representation.
    pub z_sab: Var,
    /// Per layer, `[B*H, L, L]` attention weights (pre-dropout).
    pub attention: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct Path1 {
    pub config: SabConfig,
    pub embedding: usize,
    layers: Vec<SabLayer>,
}

impl Path1 {
    pub fn new<R: Rng + ?Sized>(
        config: &SabConfig,
        vocab_size: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.emb_dim;
        let mut table = normal(&[vocab_size, d], 1.0, rng);
        // PAD row stays zero
        table.data_mut()[..d].iter_mut().for_each(|v| *v = 0.0);
        let embedding = store.insert("path1/embedding", table);
        let layers = (0..config.num_layers)
            .map(|i| {
                let p = format!("path1/layer{i}");
                SabLayer {
                    wq: Linear::new(store, &format!("{p}/wq"), d, d, rng),
                    wk: Linear::new(store, &format!("{p}/wk"), d, d, rng),
                    wv: Linear::new(store, &format!("{p}/wv"), d, d, rng),
                    wo: Linear::new(store, &format!("{p}/wo"), d, d, rng),
                    ln1: LayerNorm::new(store, &format!("{p}/ln1"), d, config.ln_eps),
                    ff1: Linear::new(store, &format!("{p}/ff1"), d, config.hidden_dim, rng),
                    ff2: Linear::new(store, &format!("{p}/ff2"), config.hidden_dim, d, rng),
                    ln2: LayerNorm::new(store, &format!("{p}/ln2"), d, config.ln_eps),
                }
            })
            .collect();
        Ok(Path1 {
            config: config.clone(),
            embedding,
            layers,
        })
    }

    /// Look up variant embeddings: `[B, L, d]`, zero at padded positions.
    /// Multi-piece variants are the mean of their piece embeddings.
    pub fn embed(&self, g: &mut Graph, p: &Bound, batch: &PaddedBatch) -> Result<Var> {
        let bags: Vec<Vec<u32>> = batch
            .pieces
            .iter()
            .zip(&batch.valid_mask)
            .map(|(ids, &v)| if v { ids.iter().copied().filter(|&i| i != PAD).collect() } else { Vec::new() })
            .collect();
        let e = g.embedding_bag(p.var(self.embedding), bags)?;
        g.reshape(e, &[batch.batch, batch.l_max, self.config.emb_dim])
    }

    /// Run the attention stack on precomputed embeddings `[B, L, d]`.
    pub fn forward_embedded<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &Bound,
        x: Var,
        valid: &[bool],
        train: bool,
        rng: &mut R,
    ) -> Result<Path1Output> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || s[2] != self.config.emb_dim {
            return Err(VampError::Dimension(format!("path1 input shape {s:?}")));
        }
        let (b, l, d) = (s[0], s[1], s[2]);
        let h = self.config.num_heads;
        let dk = d / h;
        let key_mask = self.config.masked.then(|| key_padding_mask(valid, b, h, l));
        let rows = if self.config.masked {
            Some(g.constant(row_mask(valid, b, l, d)))
        } else {
            None
        };
        let mut x = x;
        let mut attention = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let split = |g: &mut Graph, t: Var| -> Result<Var> {
                let t = g.reshape(t, &[b, l, h, dk])?;
                let t = g.permute(t, &[0, 2, 1, 3])?;
                g.reshape(t, &[b * h, l, dk])
            };
            let q = layer.wq.forward(g, p, x)?;
            let q = split(g, q)?;
            let k = layer.wk.forward(g, p, x)?;
            let k = split(g, k)?;
            let v = layer.wv.forward(g, p, x)?;
            let v = split(g, v)?;
            let kt = g.transpose_last2(k)?;
            let scores = g.bmm(q, kt)?;
            let scores = g.scale(scores, 1.0 / (dk as f64).sqrt());
            let attn = match &key_mask {
                Some(m) => g.masked_softmax_rows(scores, m)?,
                None => g.softmax_rows(scores)?,
            };
            attention.push(attn);
            let o = g.bmm(attn, v)?;
            let o = g.reshape(o, &[b, h, l, dk])?;
            let o = g.permute(o, &[0, 2, 1, 3])?;
            let o = g.reshape(o, &[b, l, d])?;
            let mut o = layer.wo.forward(g, p, o)?;
            if let Some(rm) = rows {
                o = g.mul(o, rm)?;
            }
            let o = g.dropout(o, self.config.dropout, train, rng)?;
            let r1 = g.add(x, o)?;
            let h1 = layer.ln1.forward(g, p, r1)?;
            let f = layer.ff1.forward(g, p, h1)?;
            let f = self.config.activation.apply(g, f);
            let f = layer.ff2.forward(g, p, f)?;
            let f = g.dropout(f, self.config.dropout, train, rng)?;
            let r2 = g.add(h1, f)?;
            let mut out = layer.ln2.forward(g, p, r2)?;
            if let Some(rm) = rows {
                out = g.mul(out, rm)?;
            }
            x = out;
        }
        let z_sab = masked_mean(g, x, valid)?;
        Ok(Path1Output { z_sab, attention })
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &Bound,
        batch: &PaddedBatch,
        train: bool,
        rng: &mut R,
    ) -> Result<Path1Output> {
        let e = self.embed(g, p, batch)?;
        self.forward_embedded(g, p, e, &batch.valid_mask, train, rng)
    }
}
