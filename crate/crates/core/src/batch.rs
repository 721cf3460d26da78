//! Encoding, shuffle augmentation and padded batching.

use log::debug;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::cohort::{Cohort, QualityVector, SampleRecord};
use crate::engine::Tensor;
use crate::tokenizer::{Vocabulary, PAD};
use crate::vcf::N_CHANNELS;

/// A sample with every variant already mapped to its vocabulary ids.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSample {
    /// One id list per variant (a single id in static mode).
    pub pieces: Vec<Vec<u32>>,
    pub features: Vec<QualityVector>,
    pub label: u8,
}

impl EncodedSample {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    /// Reorder variants and their feature rows by the same permutation.
    pub fn permuted(&self, perm: &[usize]) -> EncodedSample {
        EncodedSample {
            pieces: perm.iter().map(|&i| self.pieces[i].clone()).collect(),
            features: perm.iter().map(|&i| self.features[i]).collect(),
            label: self.label,
        }
    }
}

pub fn encode_sample(vocab: &Vocabulary, rec: &SampleRecord) -> EncodedSample {
    EncodedSample {
        pieces: rec.tokens.iter().map(|t| vocab.encode(t.canonical())).collect(),
        features: rec.features.clone(),
        label: rec.label,
    }
}

pub fn encode_cohort(vocab: &Vocabulary, cohort: &Cohort) -> Vec<EncodedSample> {
    cohort.samples.iter().map(|s| encode_sample(vocab, s)).collect()
}

/// Uniformly random permutation of `0..n`.
pub fn random_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Shuffle tokens and feature rows jointly; the label is untouched.
pub fn shuffle_augment<R: Rng + ?Sized>(rec: &SampleRecord, rng: &mut R) -> SampleRecord {
    let perm = random_permutation(rec.tokens.len(), rng);
    SampleRecord {
        sample_id: rec.sample_id.clone(),
        tokens: perm.iter().map(|&i| rec.tokens[i].clone()).collect(),
        features: perm.iter().map(|&i| rec.features[i]).collect(),
        label: rec.label,
        drug: rec.drug.clone(),
    }
}

/// Fixed-length batch. Position `(b, j)` is valid iff `j < lengths[b]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBatch {
    pub batch: usize,
    pub l_max: usize,
    /// `batch * l_max` id lists; padded positions hold `[PAD]`.
    pub pieces: Vec<Vec<u32>>,
    pub valid_mask: Vec<bool>,
    /// `[batch, l_max, 8]`, zero under padding.
    pub features: Tensor,
    pub labels: Vec<u8>,
    pub lengths: Vec<usize>,
}

impl PaddedBatch {
    /// First id of every position as a `batch x l_max` matrix.
    pub fn token_ids(&self) -> Vec<Vec<u32>> {
        self.pieces
            .chunks(self.l_max.max(1))
            .take(self.batch)
            .map(|row| row.iter().map(|p| p[0]).collect())
            .collect()
    }

    pub fn is_valid(&self, b: usize, j: usize) -> bool {
        self.valid_mask[b * self.l_max + j]
    }
}

/// Pad (or truncate) every sample to `l_max` positions.
pub fn collate(samples: &[&EncodedSample], l_max: usize) -> PaddedBatch {
    let b = samples.len();
    let mut pieces = Vec::with_capacity(b * l_max);
    let mut valid_mask = Vec::with_capacity(b * l_max);
    let mut feats = vec![0.0; b * l_max * N_CHANNELS];
    let mut lengths = Vec::with_capacity(b);
    for (i, s) in samples.iter().enumerate() {
        if s.len() > l_max {
            debug!("truncating sample with {} variants to {l_max}", s.len());
        }
        let n = s.len().min(l_max);
        lengths.push(n);
        for j in 0..l_max {
            if j < n {
                pieces.push(s.pieces[j].clone());
                valid_mask.push(true);
                let off = (i * l_max + j) * N_CHANNELS;
                feats[off..off + N_CHANNELS].copy_from_slice(&s.features[j]);
            } else {
                pieces.push(vec![PAD]);
                valid_mask.push(false);
            }
        }
    }
    PaddedBatch {
        batch: b,
        l_max,
        pieces,
        valid_mask,
        features: Tensor::new(vec![b, l_max, N_CHANNELS], feats).expect("sized above"),
        labels: samples.iter().map(|s| s.label).collect(),
        lengths,
    }
}

/// Pad to the longest sample in the slice (at least 1).
pub fn collate_tight(samples: &[&EncodedSample]) -> PaddedBatch {
    let l = samples.iter().map(|s| s.len()).max().unwrap_or(0).max(1);
    collate(samples, l)
}

/// Length at quantile `q` of the given lengths (nearest-rank), at least 1.
pub fn length_quantile(lengths: &[usize], q: f64) -> usize {
    if lengths.is_empty() {
        return 1;
    }
    let mut v = lengths.to_vec();
    v.sort_unstable();
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1].max(1)
}
