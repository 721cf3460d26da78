//! Helpers shared by the integration tests: finite-difference gradient
//! checks, brute-force oracles and small fixtures.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vampnet::baselines::Table;
use vampnet::cohort::{Cohort, SampleRecord};
use vampnet::engine::{Graph, Tensor, Var};
use vampnet::error::Result;
use vampnet::model::{FusionMode, ModelConfig, VampNet};
use vampnet::pipeline::{prepare, Prepared};
use vampnet::synth::{generate, SyntheticSpec};
use vampnet::vcf::{VariantToken, N_CHANNELS};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Worst norm-wise relative error `|g - n| / max(|g| + |n|, 1e-12)` over
/// the inputs, where `g` is the traced adjoint and `n` the central
/// difference of the scalar `f` at step `h`.
pub fn gradcheck<F>(inputs: &[Tensor], h: f64, f: F) -> f64
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars).unwrap();
        let s = g.sum(out);
        g.value(s).item()
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars).unwrap();
    let s = g.sum(out);
    g.backward(s).unwrap();
    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let traced = g.grad(*v).map_or_else(|| vec![0.0; inputs[k].len()], |t| t.into_data());
        let mut numeric = Vec::with_capacity(traced.len());
        for i in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            numeric.push((eval(&plus) - eval(&minus)) / (2.0 * h));
        }
        let diff: f64 = traced.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na: f64 = traced.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(diff / (na + nb).max(1e-12));
    }
    worst
}

/// Multiply by fixed random weights before summing so every output element
/// gets a distinct upstream gradient.
pub fn weighted(g: &mut Graph, out: Var, seed: u64) -> Result<Var> {
    let shape = g.shape(out).to_vec();
    let w = uniform(&shape, -1.0, 1.0, &mut rng(seed));
    let w = g.constant(w);
    g.mul(out, w)
}

// ---- oracles

/// Table of `token` counted by scanning every sample.
pub fn brute_table(cohort: &Cohort, token: &str) -> Table {
    let mut t = [0u64; 4];
    for s in &cohort.samples {
        let present = s.tokens.iter().any(|v| v.canonical() == token);
        let idx = match (present, s.label) {
            (true, 1) => 0,
            (true, _) => 1,
            (false, 1) => 2,
            (false, _) => 3,
        };
        t[idx] += 1;
    }
    t
}

/// Pearson statistic as an exact fraction `sum (O - E)^2 / E` over the four
/// cells, `None` when a margin is empty.
pub fn brute_chi2_fraction(t: &Table) -> Option<(u128, u128)> {
    let o = [[t[0] as i128, t[1] as i128], [t[2] as i128, t[3] as i128]];
    let rows = [o[0][0] + o[0][1], o[1][0] + o[1][1]];
    let cols = [o[0][0] + o[1][0], o[0][1] + o[1][1]];
    if rows.contains(&0) || cols.contains(&0) {
        return None;
    }
    let n = rows[0] + rows[1];
    // E = R C / n, so (O - E)^2 / E = (O n - R C)^2 / (n R C)
    let den = n * rows[0] * rows[1] * cols[0] * cols[1];
    let mut num: i128 = 0;
    for i in 0..2 {
        for j in 0..2 {
            let d = o[i][j] * n - rows[i] * cols[j];
            num += d * d * rows[1 - i] * cols[1 - j];
        }
    }
    Some((num as u128, den as u128))
}

/// AUC by comparing every positive with every negative.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let (mut np, mut nn, mut wins2) = (0u64, 0u64, 0u128);
    for (i, &yi) in labels.iter().enumerate() {
        if yi == 1 {
            np += 1;
        } else {
            nn += 1;
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj == 1 {
                continue;
            }
            if scores[i] > scores[j] {
                wins2 += 2;
            } else if scores[i] == scores[j] {
                wins2 += 1;
            }
        }
    }
    if np == 0 || nn == 0 {
        return None;
    }
    Some(wins2 as f64 / (2.0 * np as f64 * nn as f64))
}

/// Maximum modularity over every set partition of `n` nodes.
pub fn exhaustive_max_q(adj: &[f64], n: usize) -> f64 {
    fn rec(i: usize, n: usize, a: &mut [usize], adj: &[f64], best: &mut f64) {
        if i == n {
            *best = best.max(vampnet::explain::modularity(adj, n, a));
            return;
        }
        let next = a[..i].iter().copied().max().map_or(0, |m| m + 1);
        for c in 0..=next {
            a[i] = c;
            rec(i + 1, n, a, adj, best);
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(0, n, &mut vec![0; n], adj, &mut best);
    best
}

/// Random weighted undirected graph on 2..=8 nodes.
pub fn random_graph(rng: &mut ChaCha8Rng) -> (Vec<f64>, usize) {
    let n = rng.random_range(2..=8);
    let p: f64 = rng.random_range(0.2..0.8);
    let mut adj = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                let w = rng.random_range(0.1..1.0);
                adj[i * n + j] = w;
                adj[j * n + i] = w;
            }
        }
    }
    (adj, n)
}

// ---- fixtures

pub fn token(i: usize) -> VariantToken {
    VariantToken::new(100 + i as u64, "A", "G").unwrap()
}

/// Cohort with `n_tokens` independent variants of random carrier rates.
pub fn random_presence_cohort(n_samples: usize, n_tokens: usize, rng: &mut ChaCha8Rng) -> Cohort {
    let rates: Vec<f64> = (0..n_tokens).map(|_| rng.random_range(0.03..0.6)).collect();
    let samples = (0..n_samples)
        .map(|i| {
            let label = u8::from(rng.random_bool(0.4));
            let tokens: Vec<VariantToken> = (0..n_tokens)
                .filter(|&k| rng.random_bool((rates[k] + if label == 1 && k % 7 == 0 { 0.3 } else { 0.0 }).min(1.0)))
                .map(token)
                .collect();
            let features = vec![[0.5; N_CHANNELS]; tokens.len()];
            SampleRecord {
                sample_id: format!("s{i}"),
                tokens,
                features,
                label,
                drug: "D".into(),
            }
        })
        .collect();
    Cohort::new("D", samples)
}

pub fn small_spec(n: usize) -> SyntheticSpec {
    SyntheticSpec {
        n_samples: n,
        vocab_size: 60,
        background_mean: 6.0,
        ..SyntheticSpec::default()
    }
}

/// A narrow network over a prepared synthetic cohort.
pub fn small_model(prep: &Prepared, fusion: FusionMode, path2: bool, masked: bool, seed: u64) -> VampNet {
    let mut c = ModelConfig::new(prep.vocab.len(), prep.max_len);
    c.sab.emb_dim = 8;
    c.sab.hidden_dim = 12;
    c.sab.num_heads = 2;
    c.sab.num_layers = 2;
    c.sab.masked = masked;
    c.cnn = path2.then(|| {
        let mut k = c.cnn.clone().unwrap();
        k.channels = 6;
        k
    });
    c.fusion = fusion;
    VampNet::new(c, seed).unwrap()
}

pub fn small_prepared(n: usize, seed: u64) -> (Cohort, Prepared) {
    let mut spec = small_spec(n);
    spec.seed = seed;
    let g = generate(&spec).unwrap();
    let prep = prepare(&g.cohort, vampnet::tokenizer::VocabMode::Static, [0.7, 0.15, 0.15], seed).unwrap();
    (g.cohort, prep)
}

/// Finite-difference checks of every differentiable primitive, as
/// `(name, worst relative error)`.
pub fn primitive_gradchecks() -> Vec<(&'static str, f64)> {
    use vampnet::engine::MASK_NEG;
    let mut r = rng(42);
    let h = 1e-6;
    let mut out = Vec::new();
    let a23 = uniform(&[2, 3], -1.5, 1.5, &mut r);
    let b23 = uniform(&[2, 3], -1.5, 1.5, &mut r);
    let b3 = uniform(&[3], -1.5, 1.5, &mut r);
    // keep ReLU inputs away from the kink
    let away = a23.map(|v| if v.abs() < 0.1 { v + 0.3 } else { v });

    out.push(("add", gradcheck(&[a23.clone(), b3.clone()], h, |g, v| {
        let o = g.add(v[0], v[1])?;
        weighted(g, o, 1)
    })));
    out.push(("sub", gradcheck(&[a23.clone(), b23.clone()], h, |g, v| {
        let o = g.sub(v[0], v[1])?;
        weighted(g, o, 2)
    })));
    out.push(("mul", gradcheck(&[a23.clone(), b3.clone()], h, |g, v| {
        let o = g.mul(v[0], v[1])?;
        weighted(g, o, 3)
    })));
    out.push(("scale", gradcheck(&[a23.clone()], h, |g, v| {
        let o = g.scale(v[0], -2.5);
        weighted(g, o, 4)
    })));
    out.push(("add_scalar", gradcheck(&[a23.clone()], h, |g, v| {
        let o = g.add_scalar(v[0], 0.7);
        weighted(g, o, 5)
    })));
    out.push(("sigmoid", gradcheck(&[a23.clone()], h, |g, v| {
        let o = g.sigmoid(v[0]);
        weighted(g, o, 6)
    })));
    out.push(("relu", gradcheck(&[away.clone()], h, |g, v| {
        let o = g.relu(v[0]);
        weighted(g, o, 7)
    })));
    out.push(("gelu", gradcheck(&[a23.clone()], h, |g, v| {
        let o = g.gelu(v[0]);
        weighted(g, o, 8)
    })));
    out.push(("dropout", gradcheck(&[a23.clone()], h, |g, v| {
        let o = g.dropout(v[0], 0.4, true, &mut rng(9))?;
        weighted(g, o, 9)
    })));
    let m34 = uniform(&[3, 4], -1.0, 1.0, &mut r);
    out.push(("matmul", gradcheck(&[a23.clone(), m34], h, |g, v| {
        let o = g.matmul(v[0], v[1])?;
        weighted(g, o, 10)
    })));
    let x234 = uniform(&[2, 3, 4], -1.0, 1.0, &mut r);
    let y245 = uniform(&[2, 4, 5], -1.0, 1.0, &mut r);
    out.push(("bmm", gradcheck(&[x234.clone(), y245], h, |g, v| {
        let o = g.bmm(v[0], v[1])?;
        weighted(g, o, 11)
    })));
    out.push(("permute", gradcheck(&[x234.clone()], h, |g, v| {
        let o = g.permute(v[0], &[2, 0, 1])?;
        weighted(g, o, 12)
    })));
    out.push(("transpose_last2", gradcheck(&[x234.clone()], h, |g, v| {
        let o = g.transpose_last2(v[0])?;
        weighted(g, o, 13)
    })));
    out.push(("reshape", gradcheck(&[x234.clone()], h, |g, v| {
        let o = g.reshape(v[0], &[6, 4])?;
        weighted(g, o, 14)
    })));
    let c22 = uniform(&[2, 2], -1.0, 1.0, &mut r);
    out.push(("concat_last", gradcheck(&[a23.clone(), c22], h, |g, v| {
        let o = g.concat_last(v[0], v[1])?;
        weighted(g, o, 15)
    })));
    out.push(("select_last", gradcheck(&[x234.clone()], h, |g, v| {
        let o = g.select_last(v[0], 2)?;
        weighted(g, o, 16)
    })));
    out.push(("sum", gradcheck(&[x234.clone()], h, |g, v| {
        let w = weighted(g, v[0], 17)?;
        Ok(g.sum(w))
    })));
    out.push(("mean_over_axis", gradcheck(&[x234.clone()], h, |g, v| {
        let o = g.mean_over_axis(v[0], 1)?;
        weighted(g, o, 18)
    })));
    out.push(("softmax_rows", gradcheck(&[x234.clone()], h, |g, v| {
        let o = g.softmax_rows(v[0])?;
        weighted(g, o, 19)
    })));
    let mut mask = Tensor::zeros(&[2, 3, 4]);
    for (i, m) in mask.data_mut().iter_mut().enumerate() {
        // last key masked everywhere, one row fully masked
        if i % 4 == 3 || (4..8).contains(&i) {
            *m = -MASK_NEG;
        }
    }
    out.push(("masked_softmax_rows", gradcheck(&[x234.clone()], h, move |g, v| {
        let o = g.masked_softmax_rows(v[0], &mask)?;
        weighted(g, o, 20)
    })));
    out.push(("layer_norm", gradcheck(&[x234.clone()], h, |g, v| {
        let o = g.layer_norm(v[0], 1e-5)?;
        weighted(g, o, 21)
    })));
    let table = uniform(&[5, 3], -1.0, 1.0, &mut r);
    out.push(("embedding_bag", gradcheck(&[table], h, |g, v| {
        let o = g.embedding_bag(v[0], vec![vec![1], vec![2, 4, 2], vec![], vec![0, 3]])?;
        weighted(g, o, 22)
    })));
    let cx = uniform(&[2, 3, 7], -1.0, 1.0, &mut r);
    let cw = uniform(&[4, 3, 3], -1.0, 1.0, &mut r);
    let cb = uniform(&[4], -1.0, 1.0, &mut r);
    out.push(("conv1d", gradcheck(&[cx.clone(), cw.clone(), cb.clone()], h, |g, v| {
        let o = g.conv1d(v[0], v[1], Some(v[2]), 1, 1)?;
        weighted(g, o, 23)
    })));
    out.push(("conv1d_strided", gradcheck(&[cx.clone(), cw, cb], h, |g, v| {
        let o = g.conv1d(v[0], v[1], Some(v[2]), 2, 0)?;
        weighted(g, o, 24)
    })));
    out.push(("max_pool1d", gradcheck(&[cx], h, |g, v| {
        let o = g.max_pool1d(v[0], 3)?;
        weighted(g, o, 25)
    })));
    let logits = uniform(&[4, 2], -2.0, 2.0, &mut r);
    out.push(("weighted_cross_entropy", gradcheck(&[logits], h, |g, v| {
        g.weighted_cross_entropy(v[0], &[0, 1, 1, 0], &[0.8, 1.4])
    })));
    out
}

/// Finite differences against traced adjoints for the training loss of a
/// 4-sample batch, over every parameter. Dropout is active with a fixed
/// mask stream.
pub fn end_to_end_gradcheck(fusion: FusionMode, path2: bool) -> f64 {
    use vampnet::batch::EncodedSample;
    let (_, prep) = small_prepared(60, 3);
    let model = small_model(&prep, fusion, path2, true, 3);
    let samples: Vec<EncodedSample> = prep.encoded[..4].to_vec();
    let refs: Vec<&EncodedSample> = samples.iter().collect();
    let batch = model.collate(&refs);
    let labels: Vec<usize> = samples.iter().map(|s| s.label as usize).collect();
    let loss_of = |m: &VampNet, traced: bool| -> (f64, Option<Vec<Vec<f64>>>) {
        let mut g = Graph::new();
        let p = m.params.bind(&mut g, traced);
        let out = m.forward(&mut g, &p, &batch, true, &mut rng(77)).unwrap();
        let loss = g.weighted_cross_entropy(out.logits, &labels, &[0.9, 1.2]).unwrap();
        let v = g.value(loss).item();
        if traced {
            g.backward(loss).unwrap();
            (v, Some(m.params.collect_grads(&g, &p)))
        } else {
            (v, None)
        }
    };
    let traced = loss_of(&model, true).1.unwrap();
    let h = 1e-6;
    let mut diff2 = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    let mut m = model.clone();
    for (id, grads) in traced.iter().enumerate() {
        for i in 0..grads.len() {
            let orig = m.params.get(id).data()[i];
            m.params.get_mut(id).data_mut()[i] = orig + h;
            let up = loss_of(&m, false).0;
            m.params.get_mut(id).data_mut()[i] = orig - h;
            let down = loss_of(&m, false).0;
            m.params.get_mut(id).data_mut()[i] = orig;
            let num = (up - down) / (2.0 * h);
            diff2 += (num - grads[i]).powi(2);
            na += grads[i] * grads[i];
            nb += num * num;
        }
    }
    diff2.sqrt() / (na.sqrt() + nb.sqrt()).max(1e-12)
}

/// Samples no longer than the model's padded length.
pub fn untruncated(model: &VampNet, samples: &[vampnet::batch::EncodedSample], n: usize) -> Vec<vampnet::batch::EncodedSample> {
    samples.iter().filter(|s| s.len() <= model.config.max_len).take(n).cloned().collect()
}

/// Worst score change over `perms` joint permutations of tokens and feature
/// rows for each sample.
pub fn permutation_drift(model: &VampNet, samples: &[vampnet::batch::EncodedSample], perms: usize, seed: u64) -> f64 {
    use vampnet::batch::random_permutation;
    let base = model.predict_scores(samples).unwrap();
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..perms {
        let shuffled: Vec<_> = samples
            .iter()
            .map(|s| s.permuted(&random_permutation(s.len(), &mut r)))
            .collect();
        let s = model.predict_scores(&shuffled).unwrap();
        for (a, b) in base.iter().zip(&s) {
            worst = worst.max((a - b).abs());
        }
    }
    worst
}

/// Worst `|z_SAB(padded batch) - z_SAB(sample alone, no padding)|`.
pub fn padding_gap(model: &VampNet, samples: &[vampnet::batch::EncodedSample]) -> f64 {
    let d = model.config.sab.emb_dim;
    let mut worst: f64 = 0.0;
    for chunk in samples.chunks(16) {
        let refs: Vec<_> = chunk.iter().collect();
        let padded = model.z_sab(&model.collate(&refs)).unwrap();
        for (k, s) in chunk.iter().enumerate() {
            // same truncation as the padded batch, but no padding
            let n = s.len().min(model.config.max_len).max(1);
            let alone = model.z_sab(&vampnet::batch::collate(&[s], n)).unwrap();
            for (a, b) in padded[k * d..(k + 1) * d].iter().zip(&alone) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    worst
}
