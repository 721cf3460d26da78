use crate::engine::{Graph, Tensor};
use crate::error::{Result, VampError};

/// Inverse-frequency weights `total / (2 * count_c)`.
pub fn class_weights_from_counts(counts: [usize; 2]) -> Result<[f64; 2]> {
    if counts.iter().any(|&c| c == 0) {
        return Err(VampError::Config(format!(
            "class weights need both classes present, got counts {counts:?}"
        )));
    }
    let total = (counts[0] + counts[1]) as f64;
    Ok([
        total / (2.0 * counts[0] as f64),
        total / (2.0 * counts[1] as f64),
    ])
}

/// Weighted cross-entropy of a `[B, 2]` logit matrix, evaluated off-graph.
pub fn weighted_ce(logits: &[f64], labels: &[u8], weights: &[f64; 2]) -> Result<f64> {
    let mut g = Graph::new();
    let l = g.constant(Tensor::new(vec![labels.len(), 2], logits.to_vec())?);
    let y: Vec<usize> = labels.iter().map(|&v| v as usize).collect();
    let loss = g.weighted_cross_entropy(l, &y, weights)?;
    Ok(g.value(loss).item())
}
