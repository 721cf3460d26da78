//! Integrated Gradients with a right Riemann sum.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::batch::EncodedSample;
use crate::engine::{Graph, Tensor, Var};
use crate::error::{Result, VampError};
use crate::model::VampNet;

/// Number of integration steps used unless configured otherwise.
pub const DEFAULT_STEPS: usize = 20;

/// Interpolation points evaluated in a single graph.
const CHUNK: usize = 32;

/// Element-wise IG of a scalar function `f` from `baseline` to `x`.
///
/// `f` receives a `[n, ...x.shape]` stack of interpolated inputs and must
/// return a node whose sum is the sum of the `n` function values.
pub fn integrated_gradients_fn<F>(x: &Tensor, baseline: &Tensor, steps: usize, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&mut Graph, Var, usize) -> Result<Var>,
{
    if steps < 1 {
        return Err(VampError::Config("integration steps must be >= 1".into()));
    }
    if x.shape() != baseline.shape() {
        return Err(VampError::Dimension(format!(
            "IG input {:?} vs baseline {:?}",
            x.shape(),
            baseline.shape()
        )));
    }
    let n = x.len();
    let diff: Vec<f64> = x.data().iter().zip(baseline.data()).map(|(a, b)| a - b).collect();
    let mut grad_sum = vec![0.0; n];
    let mut k = 1;
    while k <= steps {
        let m = CHUNK.min(steps - k + 1);
        let mut data = Vec::with_capacity(m * n);
        for j in 0..m {
            let alpha = (k + j) as f64 / steps as f64;
            data.extend(baseline.data().iter().zip(&diff).map(|(b, d)| b + alpha * d));
        }
        let mut shape = vec![m];
        shape.extend_from_slice(x.shape());
        let mut g = Graph::new();
        let xs = g.param(Tensor::new(shape, data)?);
        let out = f(&mut g, xs, m)?;
        let total = g.sum(out);
        g.backward(total)?;
        let gr = g.grad(xs).expect("input is a leaf with gradient");
        for chunk in gr.data().chunks(n) {
            for (s, v) in grad_sum.iter_mut().zip(chunk) {
                *s += v;
            }
        }
        k += m;
    }
    Ok(diff
        .iter()
        .zip(&grad_sum)
        .map(|(d, g)| d * g / steps as f64)
        .collect())
}

/// Attributions for one sample.
#[derive(Clone, Debug)]
pub struct SampleAttribution {
    /// One value per variant position of the sample.
    pub per_variant: Vec<f64>,
    /// Resistant logit at the input and at the baseline.
    pub f_input: f64,
    pub f_baseline: f64,
}

impl SampleAttribution {
    /// `|sum(attr) - (F(x) - F(b))| / |F(x) - F(b)|`
    pub fn completeness_error(&self) -> f64 {
        let delta = self.f_input - self.f_baseline;
        let s: f64 = self.per_variant.iter().sum();
        (s - delta).abs() / delta.abs().max(f64::MIN_POSITIVE)
    }
}

/// Resistant logits `[m]` for `m` stacked embedding inputs `[m, L, d]` of
/// the same sample.
fn resistant_logits(model: &VampNet, sample: &EncodedSample, g: &mut Graph, xs: Var, m: usize) -> Result<Var> {
    let batch = model.collate(&vec![sample; m]);
    let p = model.params.bind(g, false);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = model.forward_embedded(g, &p, xs, &batch, false, &mut rng)?;
    g.select_last(out.logits, 1)
}

/// Variant embeddings `[L, d]` of one sample.
pub fn sample_embedding(model: &VampNet, sample: &EncodedSample) -> Result<Tensor> {
    let batch = model.collate(&[sample]);
    let mut g = Graph::new();
    let p = model.params.bind(&mut g, false);
    let e = model.path1().embed(&mut g, &p, &batch)?;
    let t = g.value(e);
    t.clone().reshaped(&t.shape()[1..])
}

/// IG over Path-1 embeddings with the zero (PAD) embedding as baseline and
/// the resistant-class logit as target. Attributions are summed over the
/// embedding dimensions of each variant.
pub fn integrated_gradients(model: &VampNet, sample: &EncodedSample, steps: usize) -> Result<SampleAttribution> {
    let e = sample_embedding(model, sample)?;
    let base = Tensor::zeros(e.shape());
    let elem = integrated_gradients_fn(&e, &base, steps, |g, xs, m| resistant_logits(model, sample, g, xs, m))?;
    let d = e.shape()[1];
    let n = sample.len().min(e.shape()[0]);
    let per_variant = (0..n).map(|j| elem[j * d..(j + 1) * d].iter().sum()).collect();
    let eval = |t: &Tensor| -> Result<f64> {
        let mut g = Graph::new();
        let mut shape = vec![1];
        shape.extend_from_slice(t.shape());
        let xs = g.constant(t.clone().reshaped(&shape)?);
        let f = resistant_logits(model, sample, &mut g, xs, 1)?;
        Ok(g.value(f).data()[0])
    };
    Ok(SampleAttribution {
        per_variant,
        f_input: eval(&e)?,
        f_baseline: eval(&base)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttributionEntry {
    pub variant: String,
    pub mean_score: f64,
    pub n_samples: usize,
}

/// Cohort-level importance, sorted by `|mean_score|` descending (ties by
/// variant name).
#[derive(Clone, Debug, PartialEq)]
pub struct AttributionReport {
    pub entries: Vec<AttributionEntry>,
    pub steps: usize,
}

/// Mean attribution per variant over the samples that contain it. A variant
/// occurring twice in one sample contributes the sum of both positions.
pub fn aggregate_attributions<S: AsRef<str>>(samples: &[(Vec<S>, Vec<f64>)], steps: usize) -> AttributionReport {
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for (tokens, attrs) in samples {
        let mut within: BTreeMap<&str, f64> = BTreeMap::new();
        for (t, a) in tokens.iter().zip(attrs) {
            *within.entry(t.as_ref()).or_default() += a;
        }
        for (t, a) in within {
            let e = acc.entry(t).or_default();
            e.0 += a;
            e.1 += 1;
        }
    }
    let mut entries: Vec<AttributionEntry> = acc
        .into_iter()
        .map(|(v, (s, n))| AttributionEntry {
            variant: v.to_string(),
            mean_score: s / n as f64,
            n_samples: n,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.mean_score
            .abs()
            .total_cmp(&a.mean_score.abs())
            .then_with(|| a.variant.cmp(&b.variant))
    });
    AttributionReport { entries, steps }
}

impl AttributionReport {
    /// 1-based rank of `variant`, if present.
    pub fn rank_of(&self, variant: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.variant == variant).map(|i| i + 1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,mean_score,abs_rank,n_samples\n");
        for (i, e) in self.entries.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", e.variant, e.mean_score, i + 1, e.n_samples);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_has_closed_form() {
        let w = Tensor::vector(vec![0.5, -2.0, 3.0]);
        let x = Tensor::vector(vec![1.5, 0.25, -1.0]);
        for steps in [1, 2, 7, 20] {
            let attr = integrated_gradients_fn(&x, &Tensor::zeros(&[3]), steps, |g, xs, _| {
                let wv = g.constant(w.clone().reshaped(&[3, 1]).unwrap());
                g.matmul(xs, wv)
            })
            .unwrap();
            for i in 0..3 {
                assert!((attr[i] - w.data()[i] * x.data()[i]).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn zero_path_gives_zero() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        let attr = integrated_gradients_fn(&x, &x, 5, |g, xs, _| {
            let s = g.sigmoid(xs);
            Ok(g.mul(s, xs)?)
        })
        .unwrap();
        assert_eq!(attr, vec![0.0, 0.0]);
        assert!(integrated_gradients_fn(&x, &x, 0, |_, xs, _| Ok(xs)).is_err());
    }

    #[test]
    fn aggregation_means_and_ranks() {
        let samples = vec![
            (vec!["a", "b", "c"], vec![1.0, 0.5, 0.1]),
            (vec!["a", "c"], vec![-1.0, 0.1]),
        ];
        let r = aggregate_attributions(&samples, 20);
        let names: Vec<&str> = r.entries.iter().map(|e| e.variant.as_str()).collect();
        assert_eq!(names, ["b", "c", "a"]);
        assert_eq!(r.entries[2].mean_score, 0.0);
        assert_eq!(r.entries[2].n_samples, 2);
        assert_eq!(r.entries[0].mean_score, 0.5);
        assert!(r.to_csv().starts_with("variant,mean_score,abs_rank,n_samples\nb,0.5,1,1\n"));
    }
}
