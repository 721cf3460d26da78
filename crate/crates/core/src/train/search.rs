//! Seeded random hyperparameter search.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::MetricsReport;
use crate::error::{Result, VampError};

/// Ranges a trial is drawn from. Discrete choices are sampled uniformly from
/// their lists; continuous ranges uniformly on `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub emb_dims: Vec<usize>,
    pub hidden_dims: Vec<usize>,
    pub layers: (usize, usize),
    pub dropout: (f64, f64),
    pub kernels: Vec<usize>,
    pub learning_rate: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            emb_dims: vec![64, 128],
            hidden_dims: vec![32],
            layers: (1, 4),
            dropout: (0.02, 0.4),
            kernels: vec![3, 5],
            learning_rate: (1e-3, 2e-3),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub index: usize,
    /// `search seed + index`
    pub seed: u64,
    pub emb_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub dropout: f64,
    pub kernel: usize,
    pub learning_rate: f64,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let empty = self.emb_dims.is_empty()
            || self.hidden_dims.is_empty()
            || self.kernels.is_empty()
            || self.layers.0 > self.layers.1
            || self.dropout.0 > self.dropout.1
            || self.learning_rate.0 > self.learning_rate.1;
        if empty {
            return Err(VampError::Config("search space has an empty range".into()));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, index: usize, seed: u64, rng: &mut R) -> Trial {
        let uni = |r: &mut R, (lo, hi): (f64, f64)| if lo == hi { lo } else { r.random_range(lo..=hi) };
        Trial {
            index,
            seed: seed.wrapping_add(index as u64),
            emb_dim: *self.emb_dims.choose(rng).expect("validated"),
            hidden_dim: *self.hidden_dims.choose(rng).expect("validated"),
            num_layers: rng.random_range(self.layers.0..=self.layers.1),
            dropout: uni(rng, self.dropout),
            kernel: *self.kernels.choose(rng).expect("validated"),
            learning_rate: uni(rng, self.learning_rate),
        }
    }
}

/// Selection score: mean of validation AUC and validation accuracy.
pub fn selection_score(m: &MetricsReport) -> f64 {
    0.5 * (m.auc.unwrap_or(0.5) + m.accuracy)
}

#[derive(Clone, Debug)]
pub struct SearchResult<T> {
    pub best: usize,
    pub trials: Vec<(Trial, MetricsReport, T)>,
}

impl<T> SearchResult<T> {
    pub fn best_trial(&self) -> &(Trial, MetricsReport, T) {
        &self.trials[self.best]
    }
}

/// Draw `budget` trials and run `fit` on each. The winner maximises
/// [`selection_score`]; ties go to the earlier trial.
pub fn random_search<T, F>(space: &SearchSpace, budget: usize, seed: u64, mut fit: F) -> Result<SearchResult<T>>
where
    F: FnMut(&Trial) -> Result<(MetricsReport, T)>,
{
    space.validate()?;
    if budget == 0 {
        return Err(VampError::Config("search budget must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials: Vec<(Trial, MetricsReport, T)> = Vec::with_capacity(budget);
    let mut best = 0;
    for i in 0..budget {
        let trial = space.sample(i, seed, &mut rng);
        let (m, out) = fit(&trial)?;
        log::info!("trial {i}: {m}");
        if i > 0 && selection_score(&m) > selection_score(&trials[best].1) {
            best = i;
        }
        trials.push((trial, m, out));
    }
    Ok(SearchResult { best, trials })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(auc: f64, acc: f64) -> MetricsReport {
        MetricsReport {
            accuracy: acc,
            balanced_accuracy: acc,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            auc: Some(auc),
            n: 10,
        }
    }

    #[test]
    fn sequence_is_reproducible_and_in_range() {
        let space = SearchSpace::default();
        let run = || random_search(&space, 20, 9, |t| Ok((report(0.5, 0.5), t.clone()))).unwrap();
        let a = run();
        let b = run();
        let ta: Vec<_> = a.trials.iter().map(|t| t.0.clone()).collect();
        let tb: Vec<_> = b.trials.iter().map(|t| t.0.clone()).collect();
        assert_eq!(ta, tb);
        for t in &ta {
            assert!([64, 128].contains(&t.emb_dim));
            assert!((1..=4).contains(&t.num_layers));
            assert!((0.02..=0.4).contains(&t.dropout));
            assert!((1e-3..=2e-3).contains(&t.learning_rate));
            assert!([3, 5].contains(&t.kernel));
        }
        assert_eq!(ta[3].seed, 12);
    }

    #[test]
    fn ties_go_to_earlier_trial() {
        let scores = [(0.75, 0.5), (0.5, 0.75), (0.625, 0.625), (0.875, 0.625)];
        let r = random_search(&SearchSpace::default(), 4, 1, |t| {
            let (a, c) = scores[t.index];
            Ok((report(a, c), ()))
        })
        .unwrap();
        assert_eq!(r.best, 3);
        let r = random_search(&SearchSpace::default(), 3, 1, |t| {
            let (a, c) = scores[t.index];
            Ok((report(a, c), ()))
        })
        .unwrap();
        assert_eq!(r.best, 0);
    }

    #[test]
    fn budget_one_and_empty_space() {
        let r = random_search(&SearchSpace::default(), 1, 3, |_| Ok((report(0.5, 0.5), ()))).unwrap();
        assert_eq!(r.trials.len(), 1);
        let empty = SearchSpace {
            kernels: vec![],
            ..SearchSpace::default()
        };
        assert!(random_search(&empty, 1, 3, |_| Ok((report(0.5, 0.5), ()))).is_err());
    }
}
