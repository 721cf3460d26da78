//! Channel ablation and gradient saliency over the quality path.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::batch::EncodedSample;
use crate::engine::Graph;
use crate::error::{Result, VampError};
use crate::model::VampNet;
use crate::train::{predict, MetricsReport, Trainable};
use crate::vcf::{channel_index, CHANNELS, N_CHANNELS};

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelImportance {
    pub channel: String,
    /// Baseline AUC minus ablated AUC; 0 when either AUC is undefined.
    pub auc_drop: f64,
    pub f1_drop: f64,
}

/// Copy of `samples` with the given channels set to zero.
pub fn zero_channels(samples: &[EncodedSample], channels: &[usize]) -> Vec<EncodedSample> {
    samples
        .iter()
        .map(|s| {
            let mut s = s.clone();
            for f in &mut s.features {
                for &c in channels {
                    f[c] = 0.0;
                }
            }
            s
        })
        .collect()
}

fn metrics<M: Trainable<Sample = EncodedSample>>(model: &M, samples: &[EncodedSample]) -> Result<MetricsReport> {
    let scores = predict(model, samples)?;
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    Ok(MetricsReport::from_scores(&scores, &labels))
}

fn drop_between(name: &str, base: &MetricsReport, ablated: &MetricsReport) -> ChannelImportance {
    let auc_drop = match (base.auc, ablated.auc) {
        (Some(a), Some(b)) => a - b,
        _ => 0.0,
    };
    ChannelImportance {
        channel: name.to_string(),
        auc_drop,
        f1_drop: base.f1 - ablated.f1,
    }
}

pub fn ablate_channel<M: Trainable<Sample = EncodedSample>>(
    model: &M,
    samples: &[EncodedSample],
    channel: &str,
) -> Result<ChannelImportance> {
    let c = channel_index(channel).ok_or_else(|| VampError::Config(format!("unknown channel {channel:?}")))?;
    let base = metrics(model, samples)?;
    let ablated = metrics(model, &zero_channels(samples, &[c]))?;
    Ok(drop_between(CHANNELS[c], &base, &ablated))
}

/// One row per channel, in channel order.
pub fn ablation_report<M: Trainable<Sample = EncodedSample>>(
    model: &M,
    samples: &[EncodedSample],
) -> Result<Vec<ChannelImportance>> {
    let base = metrics(model, samples)?;
    (0..N_CHANNELS)
        .map(|c| {
            let ablated = metrics(model, &zero_channels(samples, &[c]))?;
            Ok(drop_between(CHANNELS[c], &base, &ablated))
        })
        .collect()
}

/// Diagnostic: every channel zeroed at once.
pub fn ablate_all<M: Trainable<Sample = EncodedSample>>(model: &M, samples: &[EncodedSample]) -> Result<ChannelImportance> {
    let all: Vec<usize> = (0..N_CHANNELS).collect();
    let base = metrics(model, samples)?;
    let ablated = metrics(model, &zero_channels(samples, &all))?;
    Ok(drop_between("ALL", &base, &ablated))
}

pub fn ablation_csv(rows: &[ChannelImportance]) -> String {
    let mut s = String::from("channel,auc_drop,f1_drop\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{}", r.channel, r.auc_drop, r.f1_drop);
    }
    s
}

/// Mean `|dF/dx|` per channel over valid positions, `F` the resistant logit.
pub fn channel_saliency(model: &VampNet, samples: &[EncodedSample]) -> Result<[f64; N_CHANNELS]> {
    if !model.has_path2() {
        return Err(VampError::Usage("saliency needs the quality path".into()));
    }
    let mut sum = [0.0; N_CHANNELS];
    let mut count = 0usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for chunk in samples.chunks(64) {
        let refs: Vec<&EncodedSample> = chunk.iter().collect();
        let batch = model.collate(&refs);
        let mut g = Graph::new();
        let p = model.params.bind(&mut g, false);
        let e = model.path1().embed(&mut g, &p, &batch)?;
        let f = g.param(batch.features.clone());
        let out = model.forward_with_features(&mut g, &p, e, f, &batch, false, &mut rng)?;
        let r = g.select_last(out.logits, 1)?;
        let total = g.sum(r);
        g.backward(total)?;
        let gr = g.grad(f).expect("features are a leaf");
        for (pos, row) in gr.data().chunks(N_CHANNELS).enumerate() {
            if batch.valid_mask[pos] {
                count += 1;
                for c in 0..N_CHANNELS {
                    sum[c] += row[c].abs();
                }
            }
        }
    }
    if count > 0 {
        sum.iter_mut().for_each(|v| *v /= count as f64);
    }
    Ok(sum)
}
