//! Combining the two path outputs, and the classification head.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use super::layers::{Activation, Linear};
use crate::engine::{Graph, Var};
use crate::error::{Result, VampError};
use crate::params::{Bound, ParamStore};

/// How the quality vector modulates the set representation. All gated modes
/// use `g = sigmoid(z_cnn)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusionMode {
    /// `[z_sab ; z_cnn]`
    Concat,
    /// `g * z_sab`
    Suppression,
    /// `(1 + g) * z_sab`
    Amplification,
    /// `(2g - 1) * z_sab`
    Adaptive,
}

impl FusionMode {
    pub const ALL: [FusionMode; 4] = [
        FusionMode::Concat,
        FusionMode::Suppression,
        FusionMode::Amplification,
        FusionMode::Adaptive,
    ];

    /// Width of the fused vector for path width `d`.
    pub fn fused_dim(self, d: usize) -> usize {
        match self {
            FusionMode::Concat => 2 * d,
            _ => d,
        }
    }
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionMode::Concat => "concat",
            FusionMode::Suppression => "suppression",
            FusionMode::Amplification => "amplification",
            FusionMode::Adaptive => "adaptive",
        })
    }
}

impl FromStr for FusionMode {
    type Err = VampError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "concat" => Ok(FusionMode::Concat),
            "suppression" => Ok(FusionMode::Suppression),
            "amplification" => Ok(FusionMode::Amplification),
            "adaptive" => Ok(FusionMode::Adaptive),
            other => Err(VampError::Config(format!("unknown fusion mode {other:?}"))),
        }
    }
}

/// Fuse `z_sab[B, d]` with `z_cnn[B, d']` on the graph.
pub fn fuse(g: &mut Graph, z_sab: Var, z_cnn: Var, mode: FusionMode) -> Result<Var> {
    if mode == FusionMode::Concat {
        return g.concat_last(z_sab, z_cnn);
    }
    if g.shape(z_sab) != g.shape(z_cnn) {
        return Err(VampError::Contract(format!(
            "{mode} fusion needs equal widths, got {:?} and {:?}",
            g.shape(z_sab),
            g.shape(z_cnn)
        )));
    }
    let gate = g.sigmoid(z_cnn);
    let factor = match mode {
        FusionMode::Suppression => gate,
        FusionMode::Amplification => g.add_scalar(gate, 1.0),
        FusionMode::Adaptive => {
            let two_g = g.scale(gate, 2.0);
            g.add_scalar(two_g, -1.0)
        }
        FusionMode::Concat => unreachable!(),
    };
    g.mul(factor, z_sab)
}

/// Plain-number form of [`fuse`] for a single pair of vectors.
pub fn fuse_values(z_sab: &[f64], z_cnn: &[f64], mode: FusionMode) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let a = g.constant(crate::engine::Tensor::vector(z_sab.to_vec()));
    let b = g.constant(crate::engine::Tensor::vector(z_cnn.to_vec()));
    let out = fuse(&mut g, a, b, mode)?;
    Ok(g.value(out).data().to_vec())
}

/// Fully connected stack `fused -> d -> d/2 -> 2 logits`.
#[derive(Clone, Debug)]
pub struct ClassifierHead {
    fc: Vec<Linear>,
    activation: Activation,
    dropout: f64,
}

impl ClassifierHead {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        d_model: usize,
        activation: Activation,
        dropout: f64,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Self {
        let h1 = d_model.max(1);
        let h2 = (d_model / 2).max(1);
        let fc = vec![
            Linear::new(store, "head/fc0", in_dim, h1, rng),
            Linear::new(store, "head/fc1", h1, h2, rng),
            Linear::new(store, "head/out", h2, 2, rng),
        ];
        ClassifierHead {
            fc,
            activation,
            dropout,
        }
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &Bound,
        x: Var,
        train: bool,
        rng: &mut R,
    ) -> Result<Var> {
        let mut x = x;
        for (i, layer) in self.fc.iter().enumerate() {
            x = layer.forward(g, p, x)?;
            if i + 1 < self.fc.len() {
                x = self.activation.apply(g, x);
                x = g.dropout(x, self.dropout, train, rng)?;
            }
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_endpoints() {
        let z = [1.5, -2.0, 0.25];
        let out = fuse_values(&z, &[0.0; 3], FusionMode::Adaptive).unwrap();
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
        let out = fuse_values(&z, &[800.0; 3], FusionMode::Suppression).unwrap();
        assert_eq!(out, z.to_vec());
        let out = fuse_values(&z, &[-800.0; 3], FusionMode::Suppression).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
        let out = fuse_values(&z, &[-800.0; 3], FusionMode::Amplification).unwrap();
        assert_eq!(out, z.to_vec());
        let out = fuse_values(&z, &[800.0; 3], FusionMode::Amplification).unwrap();
        assert_eq!(out, z.iter().map(|v| 2.0 * v).collect::<Vec<_>>());
    }

    #[test]
    fn concat_allows_unequal_widths() {
        let out = fuse_values(&[1.0, 2.0], &[3.0], FusionMode::Concat).unwrap();
        assert_eq!(out, vec![1.0, 2.0, 3.0]);
        assert!(fuse_values(&[1.0, 2.0], &[3.0], FusionMode::Amplification).is_err());
    }
}
