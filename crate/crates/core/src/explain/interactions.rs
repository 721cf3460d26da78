//! Head-averaged attention interactions between co-occurring variants, hub
//! ranking and greedy modularity communities.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::batch::EncodedSample;
use crate::engine::Graph;
use crate::error::{Result, VampError};
use crate::model::VampNet;

/// Pairs must co-occur in at least this many samples by default.
pub const DEFAULT_MIN_COOCCURRENCE: usize = 10;

/// Symmetric matrix of mean bidirectional attention over a variant subset.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionMatrix {
    pub variants: Vec<String>,
    /// Row-major `V x V`, zero on the diagonal and for unretained pairs.
    pub weights: Vec<f64>,
    /// Samples in which each pair co-occurred.
    pub counts: Vec<usize>,
}

impl InteractionMatrix {
    pub fn from_pairs(pairs: &BTreeMap<(String, String), (f64, usize)>, min_count: usize) -> Self {
        let kept: Vec<(&(String, String), &(f64, usize))> =
            pairs.iter().filter(|(_, &(_, n))| n >= min_count && n > 0).collect();
        let mut names: Vec<String> = kept.iter().flat_map(|((a, b), _)| [a.clone(), b.clone()]).collect();
        names.sort();
        names.dedup();
        let idx: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let v = names.len();
        let mut weights = vec![0.0; v * v];
        let mut counts = vec![0; v * v];
        for ((a, b), &(sum, n)) in kept {
            let (i, j) = (idx[a.as_str()], idx[b.as_str()]);
            let w = sum / n as f64;
            weights[i * v + j] = w;
            weights[j * v + i] = w;
            counts[i * v + j] = n;
            counts[j * v + i] = n;
        }
        InteractionMatrix {
            variants: names,
            weights,
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.len() + j]
    }

    pub fn index_of(&self, variant: &str) -> Option<usize> {
        self.variants.binary_search_by(|v| v.as_str().cmp(variant)).ok()
    }

    /// TSV with a header row and a header column of variant names.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("variant");
        for v in &self.variants {
            s.push('\t');
            s.push_str(v);
        }
        s.push('\n');
        for (i, v) in self.variants.iter().enumerate() {
            s.push_str(v);
            for j in 0..self.len() {
                let _ = write!(s, "\t{}", self.get(i, j));
            }
            s.push('\n');
        }
        s
    }
}

/// Head-averaged `[L, L]` attention of `layer` for every sample, restricted
/// to the sample's own positions.
pub fn head_averaged_attention(model: &VampNet, samples: &[EncodedSample], layer: usize) -> Result<Vec<Vec<f64>>> {
    let heads = model.config.sab.num_heads;
    if layer >= model.config.sab.num_layers {
        return Err(VampError::Config(format!(
            "layer {layer} out of range for {} layers",
            model.config.sab.num_layers
        )));
    }
    let mut out = Vec::with_capacity(samples.len());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for chunk in samples.chunks(64) {
        let refs: Vec<&EncodedSample> = chunk.iter().collect();
        let batch = model.collate(&refs);
        let mut g = Graph::new();
        let p = model.params.bind(&mut g, false);
        let fw = model.forward(&mut g, &p, &batch, false, &mut rng)?;
        let att = g.value(fw.attention[layer]).data();
        let l = batch.l_max;
        for (b, s) in chunk.iter().enumerate() {
            let n = s.len().min(l);
            let mut a = vec![0.0; n * n];
            for h in 0..heads {
                let base = (b * heads + h) * l * l;
                for u in 0..n {
                    for v in 0..n {
                        a[u * n + v] += att[base + u * l + v];
                    }
                }
            }
            a.iter_mut().for_each(|x| *x /= heads as f64);
            out.push(a);
        }
    }
    Ok(out)
}

/// Aggregate `(A[u,v] + A[v,u]) / 2` over the samples in which both variants
/// occur. `tokens[i]` names the positions of `samples[i]`.
pub fn extract_interactions<S: AsRef<str>>(
    model: &VampNet,
    samples: &[EncodedSample],
    tokens: &[Vec<S>],
    min_cooccurrence: usize,
    layer: usize,
) -> Result<InteractionMatrix> {
    if tokens.len() != samples.len() {
        return Err(VampError::Contract("one token list per sample required".into()));
    }
    let att = head_averaged_attention(model, samples, layer)?;
    let mut pairs: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for (a, toks) in att.iter().zip(tokens) {
        let n = (a.len() as f64).sqrt() as usize;
        // mean strength per pair within this sample
        let mut local: BTreeMap<(&str, &str), (f64, usize)> = BTreeMap::new();
        for u in 0..n {
            for v in u + 1..n {
                let (tu, tv) = (toks[u].as_ref(), toks[v].as_ref());
                if tu == tv {
                    continue;
                }
                let key = if tu < tv { (tu, tv) } else { (tv, tu) };
                let e = local.entry(key).or_default();
                e.0 += (a[u * n + v] + a[v * n + u]) / 2.0;
                e.1 += 1;
            }
        }
        for ((x, y), (s, k)) in local {
            let e = pairs.entry((x.to_string(), y.to_string())).or_default();
            e.0 += s / k as f64;
            e.1 += 1;
        }
    }
    let m = InteractionMatrix::from_pairs(&pairs, min_cooccurrence);
    if m.is_empty() {
        warn!("no variant pair co-occurs in {min_cooccurrence} or more samples");
    }
    Ok(m)
}

/// Top `k` variants by weighted degree, ties by name.
pub fn detect_hubs(m: &InteractionMatrix, top_k: usize) -> Vec<(String, f64)> {
    let v = m.len();
    let mut deg: Vec<(String, f64)> = (0..v)
        .map(|i| {
            let d = (0..v).filter(|&j| j != i).map(|j| m.get(i, j)).sum();
            (m.variants[i].clone(), d)
        })
        .collect();
    deg.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    deg.truncate(top_k);
    deg
}

pub fn hubs_csv(hubs: &[(String, f64)]) -> String {
    let mut s = String::from("variant,weighted_degree,rank\n");
    for (i, (v, d)) in hubs.iter().enumerate() {
        let _ = writeln!(s, "{v},{d},{}", i + 1);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(list: &[(&str, &str, f64, usize)]) -> BTreeMap<(String, String), (f64, usize)> {
        list.iter()
            .map(|&(a, b, w, n)| ((a.to_string(), b.to_string()), (w * n as f64, n)))
            .collect()
    }

    #[test]
    fn matrix_is_symmetric_and_thresholded() {
        let m = InteractionMatrix::from_pairs(&pairs(&[("a", "b", 0.3, 12), ("a", "c", 0.5, 4), ("b", "c", 0.2, 10)]), 10);
        assert_eq!(m.variants, ["a", "b", "c"]);
        for i in 0..3 {
            assert_eq!(m.get(i, i), 0.0);
            for j in 0..3 {
                assert_eq!(m.get(i, j).to_bits(), m.get(j, i).to_bits());
            }
        }
        assert_eq!(m.get(0, 2), 0.0);
        assert!(m.to_tsv().starts_with("variant\ta\tb\tc\na\t0\t"));
        assert!(InteractionMatrix::from_pairs(&pairs(&[("a", "b", 0.3, 2)]), 10).is_empty());
    }

    #[test]
    fn star_center_is_the_hub_and_ties_are_lexicographic() {
        let m = InteractionMatrix::from_pairs(
            &pairs(&[("c", "x", 0.4, 10), ("c", "y", 0.4, 10), ("c", "z", 0.4, 10)]),
            10,
        );
        let h = detect_hubs(&m, 2);
        assert_eq!(h[0].0, "c");
        assert_eq!(h[1].0, "x");
        let m = InteractionMatrix::from_pairs(&pairs(&[("p", "q", 0.4, 10)]), 10);
        assert_eq!(detect_hubs(&m, 1)[0].0, "p");
    }
}
