//! Mini-batch training with weighted cross-entropy and early stopping on
//! validation AUC.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::class_weights_from_counts;
use super::metrics::{fmt_auc, roc_auc, Confusion, MetricsReport};
use super::optim::{Optimizer, OptimizerKind};
use crate::batch::{random_permutation, EncodedSample};
use crate::engine::{Graph, Var};
use crate::error::{Result, VampError};
use crate::model::{resistant_score, VampNet};
use crate::params::{Bound, ParamStore};

/// A model the generic loop can fit.
pub trait Trainable {
    type Sample: Clone;

    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn label(sample: &Self::Sample) -> u8;

    /// `[B, 2]` logits for a batch.
    fn forward_logits(
        &self,
        g: &mut Graph,
        p: &Bound,
        batch: &[&Self::Sample],
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var>;

    /// Order augmentation for one sample; identity unless overridden.
    fn augment(sample: &Self::Sample, _rng: &mut ChaCha8Rng) -> Self::Sample {
        sample.clone()
    }
}

impl Trainable for VampNet {
    type Sample = EncodedSample;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn label(sample: &EncodedSample) -> u8 {
        sample.label
    }

    fn forward_logits(
        &self,
        g: &mut Graph,
        p: &Bound,
        batch: &[&EncodedSample],
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let b = self.collate(batch);
        Ok(self.forward(g, p, &b, train, rng)?.logits)
    }

    fn augment(sample: &EncodedSample, rng: &mut ChaCha8Rng) -> EncodedSample {
        let perm = random_permutation(sample.len(), rng);
        sample.permuted(&perm)
    }
}

/// Eval-mode logits `[n, 2]` in chunks of 64.
pub fn predict_logits<M: Trainable>(model: &M, samples: &[M::Sample]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len() * 2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for chunk in samples.chunks(64) {
        let refs: Vec<&M::Sample> = chunk.iter().collect();
        let mut g = Graph::new();
        let p = model.params().bind(&mut g, false);
        let l = model.forward_logits(&mut g, &p, &refs, false, &mut rng)?;
        out.extend_from_slice(g.value(l).data());
    }
    Ok(out)
}

/// Resistant-class probabilities in eval mode.
pub fn predict<M: Trainable>(model: &M, samples: &[M::Sample]) -> Result<Vec<f64>> {
    Ok(predict_logits(model, samples)?
        .chunks(2)
        .map(|l| resistant_score(l[0], l[1]))
        .collect())
}

/// Metrics at threshold 0.5 plus rank AUC.
pub fn evaluate<M: Trainable>(model: &M, samples: &[M::Sample]) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(VampError::Contract("cannot evaluate an empty split".into()));
    }
    let scores = predict(model, samples)?;
    let labels: Vec<u8> = samples.iter().map(M::label).collect();
    Ok(MetricsReport::from_scores(&scores, &labels))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// `None` derives inverse-frequency weights from the training split.
    pub class_weights: Option<[f64; 2]>,
    pub augment: bool,
    pub seed: u64,
    /// train / validation / test
    pub split: [f64; 3],
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.00137,
            batch_size: 32,
            max_epochs: 100,
            patience: 10,
            class_weights: None,
            augment: false,
            seed: 0,
            split: [0.7, 0.15, 0.15],
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 || self.split.iter().any(|&f| f < 0.0) {
            return Err(VampError::Config(format!("split fractions {:?} must sum to 1", self.split)));
        }
        if self.patience == 0 {
            return Err(VampError::Config("patience must be >= 1".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(VampError::Config("batch size and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(VampError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Index sets of a stratified split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffle each class with `seed` and cut it by `fractions`; each part is
/// returned in ascending index order.
pub fn stratified_split(labels: &[u8], fractions: [f64; 3], seed: u64) -> Split {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = Split {
        train: vec![],
        val: vec![],
        test: vec![],
    };
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let n_train = (fractions[0] * n as f64).round() as usize;
        let n_val = ((fractions[1] * n as f64).round() as usize).min(n - n_train);
        split.train.extend_from_slice(&idx[..n_train]);
        split.val.extend_from_slice(&idx[n_train..n_train + n_val]);
        split.test.extend_from_slice(&idx[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    split
}

/// One row of the learning curves.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub split: &'static str,
    pub loss: f64,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

pub fn curves_csv(rows: &[CurveRow]) -> String {
    let mut s = String::from("epoch,split,loss,accuracy,auc\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch,
            r.split,
            r.loss,
            r.accuracy,
            fmt_auc(r.auc)
        ));
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub curves: Vec<CurveRow>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_val_auc: Option<f64>,
    pub class_weights: [f64; 2],
}

fn val_key(auc: Option<f64>, loss: f64) -> f64 {
    // AUC when defined, otherwise fall back on negative loss
    auc.unwrap_or(-loss)
}

/// Fit `model` on `train`, select the epoch with the best validation AUC and
/// leave those parameters in `model`.
pub fn train<M: Trainable>(
    model: &mut M,
    train: &[M::Sample],
    val: &[M::Sample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(VampError::Config("training and validation splits must be non-empty".into()));
    }
    let train_labels: Vec<u8> = train.iter().map(M::label).collect();
    let counts = [
        train_labels.iter().filter(|&&y| y == 0).count(),
        train_labels.iter().filter(|&&y| y == 1).count(),
    ];
    let weights = match config.class_weights {
        Some(w) => w,
        None => class_weights_from_counts(counts)?,
    };
    let val_labels: Vec<u8> = val.iter().map(M::label).collect();
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, model.params())?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut aug_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut drop_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(3));

    let mut curves = Vec::new();
    let mut best: Option<(f64, usize, ParamStore, Option<f64>)> = None;
    let mut bad_epochs = 0;
    let mut epochs_run = 0;
    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        let mut scores = vec![0.0; train.len()];
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let owned: Vec<M::Sample>;
            let refs: Vec<&M::Sample> = if config.augment {
                owned = chunk.iter().map(|&i| M::augment(&train[i], &mut aug_rng)).collect();
                owned.iter().collect()
            } else {
                chunk.iter().map(|&i| &train[i]).collect()
            };
            let labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i] as usize).collect();
            let mut g = Graph::new();
            let p = model.params().bind(&mut g, true);
            let logits = model.forward_logits(&mut g, &p, &refs, true, &mut drop_rng)?;
            let loss = g.weighted_cross_entropy(logits, &labels, &weights)?;
            let lv = g.value(loss).item();
            if !lv.is_finite() {
                return Err(VampError::NumericDomain(format!(
                    "loss diverged at epoch {epoch}, batch {bi}"
                )));
            }
            loss_sum += lv * chunk.len() as f64;
            for (k, l) in g.value(logits).data().chunks(2).enumerate() {
                scores[chunk[k]] = resistant_score(l[0], l[1]);
            }
            g.backward(loss)?;
            let grads = model.params().collect_grads(&g, &p);
            opt.step(model.params_mut(), &grads);
        }
        let conf = Confusion::from_scores(&scores, &train_labels, 0.5);
        curves.push(CurveRow {
            epoch,
            split: "train",
            loss: loss_sum / train.len() as f64,
            accuracy: (conf.tp + conf.tn) as f64 / train.len() as f64,
            auc: roc_auc(&scores, &train_labels),
        });

        let val_logits = predict_logits(model, val)?;
        let val_loss = super::loss::weighted_ce(&val_logits, &val_labels, &weights)?;
        let val_scores: Vec<f64> = val_logits.chunks(2).map(|l| resistant_score(l[0], l[1])).collect();
        let vm = MetricsReport::from_scores(&val_scores, &val_labels);
        curves.push(CurveRow {
            epoch,
            split: "val",
            loss: val_loss,
            accuracy: vm.accuracy,
            auc: vm.auc,
        });
        debug!(
            "epoch {epoch}: train loss {:.4}, val loss {val_loss:.4}, val auc {}",
            loss_sum / train.len() as f64,
            fmt_auc(vm.auc)
        );

        let key = val_key(vm.auc, val_loss);
        if best.as_ref().is_none_or(|(k, ..)| key > *k) {
            best = Some((key, epoch, model.params().clone(), vm.auc));
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= config.patience {
                info!("early stop at epoch {epoch}");
                break;
            }
        }
    }
    let (_, best_epoch, best_params, best_val_auc) = best.expect("at least one epoch ran");
    model.params_mut().load_from(&best_params)?;
    Ok(TrainOutcome {
        curves,
        best_epoch,
        epochs_run,
        best_val_auc,
        class_weights: weights,
    })
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stratified_split_is_disjoint_and_balanced() {
        let labels: Vec<u8> = (0..200).map(|i| u8::from(i % 4 == 0)).collect();
        let s = stratified_split(&labels, [0.7, 0.15, 0.15], 5);
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
        let pos = |v: &[usize]| v.iter().filter(|&&i| labels[i] == 1).count();
        assert_eq!(pos(&s.train), 35);
        assert_eq!(s.train.len(), 140);
        assert_eq!(s, stratified_split(&labels, [0.7, 0.15, 0.15], 5));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.split = [0.5, 0.5, 0.5];
        assert!(c.validate().is_err());
        c = TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
