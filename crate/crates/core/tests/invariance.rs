mod common;

use vampnet::model::{FusionMode, ModelConfig, VampNet};

#[test]
fn set_path_scores_ignore_variant_order() {
    let (_, prep) = common::small_prepared(120, 11);
    let m = common::small_model(&prep, FusionMode::Amplification, false, true, 11);
    let drift = common::permutation_drift(&m, &common::untruncated(&m, &prep.encoded, 40), 5, 1);
    assert!(drift <= 1e-8, "drift {drift:e}");
}

#[test]
fn pointwise_quality_path_keeps_the_fused_model_invariant() {
    let (_, prep) = common::small_prepared(120, 12);
    let mut c = ModelConfig::new(prep.vocab.len(), prep.max_len);
    c.cnn.as_mut().unwrap().kernel = 1;
    let m = VampNet::new(c, 12).unwrap();
    let drift = common::permutation_drift(&m, &common::untruncated(&m, &prep.encoded, 40), 5, 2);
    assert!(drift <= 1e-8, "drift {drift:e}");
}

#[test]
fn wide_kernels_make_the_quality_path_order_sensitive() {
    let (_, prep) = common::small_prepared(120, 12);
    let m = VampNet::new(ModelConfig::new(prep.vocab.len(), prep.max_len), 12).unwrap();
    let drift = common::permutation_drift(&m, &common::untruncated(&m, &prep.encoded, 40), 5, 2);
    assert!(drift > 1e-12 && drift < 0.05, "drift {drift:e}");
}

#[test]
fn masked_attention_is_blind_to_padding() {
    let (_, prep) = common::small_prepared(120, 13);
    let m = common::small_model(&prep, FusionMode::Amplification, true, true, 13);
    let gap = common::padding_gap(&m, &prep.encoded[..40]);
    assert!(gap <= 1e-8, "gap {gap:e}");
}

#[test]
fn unmasked_attention_sees_padding() {
    let (_, prep) = common::small_prepared(120, 13);
    let m = common::small_model(&prep, FusionMode::Amplification, true, false, 13);
    let gap = common::padding_gap(&m, &prep.encoded[..40]);
    assert!(gap > 1e-3, "gap {gap:e}");
}

#[test]
fn empty_sample_scores_are_finite() {
    let (_, prep) = common::small_prepared(60, 14);
    let m = common::small_model(&prep, FusionMode::Adaptive, true, true, 14);
    let mut s = prep.encoded[0].clone();
    s.pieces.clear();
    s.features.clear();
    let score = m.predict_scores(&[s]).unwrap()[0];
    assert!(score.is_finite() && (0.0..=1.0).contains(&score));
}
