//! Glue from a cohort to split, encoded training data.

use log::warn;

use crate::batch::{encode_cohort, length_quantile, EncodedSample};
use crate::cohort::Cohort;
use crate::error::{Result, VampError};
use crate::tokenizer::{VocabMode, Vocabulary};
use crate::train::{stratified_split, Split};

/// Default target size for a trained subword vocabulary.
pub const SUBWORD_TARGET: usize = 4096;

pub struct Prepared {
    pub vocab: Vocabulary,
    pub encoded: Vec<EncodedSample>,
    pub split: Split,
    /// 99th-percentile training length.
    pub max_len: usize,
}

impl Prepared {
    pub fn part(&self, idx: &[usize]) -> Vec<EncodedSample> {
        idx.iter().map(|&i| self.encoded[i].clone()).collect()
    }
}

pub fn build_vocab(cohort: &Cohort, mode: VocabMode) -> Result<Vocabulary> {
    match mode {
        VocabMode::Static => Ok(Vocabulary::build_static(cohort)),
        VocabMode::Subword => {
            let corpus: Vec<String> = cohort
                .samples
                .iter()
                .flat_map(|s| s.tokens.iter().map(|t| t.to_string()))
                .collect();
            Vocabulary::train_subword(&corpus, SUBWORD_TARGET)
        }
    }
}

/// Split by label, build the vocabulary on the training part only and encode
/// every sample with it.
pub fn prepare(cohort: &Cohort, mode: VocabMode, fractions: [f64; 3], seed: u64) -> Result<Prepared> {
    let labels: Vec<u8> = cohort.samples.iter().map(|s| s.label).collect();
    let split = stratified_split(&labels, fractions, seed);
    if split.train.is_empty() || split.val.is_empty() {
        return Err(VampError::Config(format!(
            "cohort of {} samples too small to split",
            cohort.len()
        )));
    }
    let vocab = build_vocab(&cohort.subset(&split.train), mode)?;
    let encoded = encode_cohort(&vocab, cohort);
    let lengths: Vec<usize> = split.train.iter().map(|&i| encoded[i].len()).collect();
    let max_len = length_quantile(&lengths, 0.99);
    let over = encoded.iter().filter(|e| e.len() > max_len).count();
    if over > 0 {
        warn!("{over} samples longer than {max_len} variants will be truncated");
    }
    Ok(Prepared {
        max_len,
        vocab,
        encoded,
        split,
    })
}
