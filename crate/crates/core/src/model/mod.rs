//! The two-path network and its configuration.

mod cnn;
mod fusion;
mod layers;
mod sab;

pub use cnn::{CnnConfig, Path2};
pub use fusion::{fuse, fuse_values, ClassifierHead, FusionMode};
pub use layers::{masked_mean, masked_mean_weights, row_mask, Activation, LayerNorm, Linear};
pub use sab::{key_padding_mask, Path1, Path1Output, SabConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::batch::{collate, EncodedSample, PaddedBatch};
use crate::engine::{Graph, Var};
use crate::error::{Result, VampError};
use crate::params::{Bound, ParamStore};

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    /// Every batch is padded (or truncated) to this many positions.
    pub max_len: usize,
    pub sab: SabConfig,
    /// `None` disables Path 2; the head then sees `z_sab` directly.
    pub cnn: Option<CnnConfig>,
    pub fusion: FusionMode,
}

impl ModelConfig {
    pub fn new(vocab_size: usize, max_len: usize) -> Self {
        ModelConfig {
            vocab_size,
            max_len,
            sab: SabConfig::default(),
            cnn: Some(CnnConfig::default()),
            fusion: FusionMode::Amplification,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(VampError::Config("vocabulary must hold the reserved ids".into()));
        }
        if self.max_len == 0 {
            return Err(VampError::Config("max_len must be positive".into()));
        }
        self.sab.validate()?;
        if let Some(c) = &self.cnn {
            c.validate()?;
        }
        Ok(())
    }

    fn fused_dim(&self) -> usize {
        match self.cnn {
            Some(_) => self.fusion.fused_dim(self.sab.emb_dim),
            None => self.sab.emb_dim,
        }
    }
}

/// Every intermediate a caller may want from one forward pass.
pub struct ForwardOutput {
    /// `[B, 2]`
    pub logits: Var,
    pub z_sab: Var,
    pub z_cnn: Option<Var>,
    pub fused: Var,
    pub attention: Vec<Var>,
}

#[derive(Clone, Debug)]
pub struct VampNet {
    pub config: ModelConfig,
    pub params: ParamStore,
    path1: Path1,
    path2: Option<Path2>,
    head: ClassifierHead,
}

impl VampNet {
    /// Fresh model with parameters drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let path1 = Path1::new(&config.sab, config.vocab_size, &mut params, &mut rng)?;
        let path2 = match &config.cnn {
            Some(c) => Some(Path2::new(c, config.sab.emb_dim, &mut params, &mut rng)?),
            None => None,
        };
        let head = ClassifierHead::new(
            config.fused_dim(),
            config.sab.emb_dim,
            config.sab.activation,
            config.sab.dropout,
            &mut params,
            &mut rng,
        );
        Ok(VampNet {
            config,
            params,
            path1,
            path2,
            head,
        })
    }

    pub fn path1(&self) -> &Path1 {
        &self.path1
    }

    pub fn has_path2(&self) -> bool {
        self.path2.is_some()
    }

    /// Index of the embedding table in the parameter store.
    pub fn embedding_param(&self) -> usize {
        self.path1.embedding
    }

    pub fn collate(&self, samples: &[&EncodedSample]) -> PaddedBatch {
        collate(samples, self.config.max_len)
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &Bound,
        batch: &PaddedBatch,
        train: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        let e = self.path1.embed(g, p, batch)?;
        self.forward_embedded(g, p, e, batch, train, rng)
    }

    /// Forward pass from externally supplied variant embeddings `[B, L, d]`.
    pub fn forward_embedded<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &Bound,
        embeddings: Var,
        batch: &PaddedBatch,
        train: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        let f = g.constant(batch.features.clone());
        self.forward_with_features(g, p, embeddings, f, batch, train, rng)
    }

    /// As [`VampNet::forward_embedded`] with the quality features `[B, L, 8]`
    /// supplied as a graph node, so they can be differentiated.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_with_features<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &Bound,
        embeddings: Var,
        features: Var,
        batch: &PaddedBatch,
        train: bool,
        rng: &mut R,
    ) -> Result<ForwardOutput> {
        let out1 = self
            .path1
            .forward_embedded(g, p, embeddings, &batch.valid_mask, train, rng)?;
        let (z_cnn, fused) = match &self.path2 {
            Some(p2) => {
                let z = p2.forward(g, p, features, &batch.valid_mask, train, rng)?;
                (Some(z), fuse(g, out1.z_sab, z, self.config.fusion)?)
            }
            None => (None, out1.z_sab),
        };
        let logits = self.head.forward(g, p, fused, train, rng)?;
        Ok(ForwardOutput {
            logits,
            z_sab: out1.z_sab,
            z_cnn,
            fused,
            attention: out1.attention,
        })
    }

    /// Eval-mode logits for a batch, `[B, 2]` row-major.
    pub fn logits(&self, batch: &PaddedBatch) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.forward(&mut g, &p, batch, false, &mut rng)?;
        Ok(g.value(out.logits).data().to_vec())
    }

    /// Resistant-class probability for every sample, in eval mode.
    pub fn predict_scores(&self, samples: &[EncodedSample]) -> Result<Vec<f64>> {
        let mut scores = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(64) {
            let refs: Vec<&EncodedSample> = chunk.iter().collect();
            let logits = self.logits(&self.collate(&refs))?;
            scores.extend(logits.chunks(2).map(|l| resistant_score(l[0], l[1])));
        }
        Ok(scores)
    }

    /// Eval-mode pooled Path-1 output `[B, d]` for a batch.
    pub fn z_sab(&self, batch: &PaddedBatch) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = self.path1.forward(&mut g, &p, batch, false, &mut rng)?;
        Ok(g.value(out.z_sab).data().to_vec())
    }
}

/// `softmax([l0, l1])[1]`, computed stably.
pub fn resistant_score(l0: f64, l1: f64) -> f64 {
    let d = l0 - l1;
    if d >= 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    }
}
