//! Path 2: 1-D convolutions along the variant axis over the eight quality
//! channels, masked global mean, projection to the model width.

use rand::Rng;

use super::layers::{masked_mean, row_mask, Activation, Linear};
use crate::engine::{Graph, Tensor, Var};
use crate::error::{Result, VampError};
use crate::params::{glorot, Bound, ParamStore};
use crate::vcf::N_CHANNELS;

#[derive(Clone, Debug, PartialEq)]
pub struct CnnConfig {
    pub conv_layers: usize,
    pub kernel: usize,
    pub channels: usize,
    pub activation: Activation,
    pub dropout: f64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        CnnConfig {
            conv_layers: 3,
            kernel: 3,
            channels: 32,
            activation: Activation::Relu,
            dropout: 0.1128,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.conv_layers == 0 || self.channels == 0 {
            return Err(VampError::Config("conv layers and channels must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(VampError::Config(format!(
                "conv kernel {} must be odd for same padding",
                self.kernel
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(VampError::Config(format!("dropout {} outside [0,1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct ConvLayer {
    w: usize,
    b: usize,
}

#[derive(Clone, Debug)]
pub struct Path2 {
    pub config: CnnConfig,
    convs: Vec<ConvLayer>,
    proj: Linear,
}

impl Path2 {
    pub fn new<R: Rng + ?Sized>(
        config: &CnnConfig,
        d_model: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let k = config.kernel;
        let mut cin = N_CHANNELS;
        let mut convs = Vec::new();
        for i in 0..config.conv_layers {
            let cout = config.channels;
            let w = store.insert(
                &format!("path2/conv{i}/w"),
                glorot(&[cout, cin, k], cin * k, cout * k, rng),
            );
            let b = store.insert(&format!("path2/conv{i}/b"), Tensor::zeros(&[cout]));
            convs.push(ConvLayer { w, b });
            cin = cout;
        }
        let proj = Linear::new(store, "path2/proj", cin, d_model, rng);
        Ok(Path2 {
            config: config.clone(),
            convs,
            proj,
        })
    }

    /// `features[B, L, 8] -> z_cnn[B, d_model]`. Padded positions must be
    /// zero; they are re-zeroed after every convolution so the output does
    /// not depend on the padded length.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &Bound,
        features: Var,
        valid: &[bool],
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let s = g.shape(features).to_vec();
        if s.len() != 3 || s[2] != N_CHANNELS {
            return Err(VampError::Dimension(format!("path2 input shape {s:?}")));
        }
        let (b, l) = (s[0], s[1]);
        let pad = (self.config.kernel - 1) / 2;
        let mut x = g.permute(features, &[0, 2, 1])?;
        let mut mask: Option<Var> = None;
        for conv in &self.convs {
            let y = g.conv1d(x, p.var(conv.w), Some(p.var(conv.b)), 1, pad)?;
            let y = self.config.activation.apply(g, y);
            let m = *mask.get_or_insert_with(|| {
                // [B, L, C] row mask transposed to channels-first
                let rm = row_mask(valid, b, l, self.config.channels);
                let t = g.constant(rm);
                g.permute(t, &[0, 2, 1]).expect("rank 3")
            });
            let y = g.mul(y, m)?;
            x = g.dropout(y, self.config.dropout, train, rng)?;
        }
        let x = g.permute(x, &[0, 2, 1])?;
        let pooled = masked_mean(g, x, valid)?;
        self.proj.forward(g, p, pooled)
    }
}
