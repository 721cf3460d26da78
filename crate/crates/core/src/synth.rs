//! Synthetic cohorts with planted causal variants and quality-gated labels.
//!
//! Each sample is either high quality (every FRS drawn from `U(0.55, 1)`)
//! or low quality (`U(0.05, 0.45)`). A planted
//! variant only counts toward the label when its FRS reaches `tau`, so on a
//! low-quality sample every planted call is spurious. The pooled quality
//! channels therefore carry information that the token set alone lacks.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::cohort::{Cohort, QualityVector, SampleRecord};
use crate::config::parse_entries;
use crate::error::{Result, VampError};
use crate::train::roc_auc;
use crate::vcf::{VariantToken, FRS_CHANNEL};

const BASES: [&str; 4] = ["A", "C", "G", "T"];

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub vocab_size: usize,
    /// Poisson mean of background variants per sample.
    pub background_mean: f64,
    pub n_marginal: usize,
    pub n_pairs: usize,
    /// Carrier frequency of each marginal variant.
    pub marginal_freq: f64,
    /// Frequency of carrying both members of a pair.
    pub pair_freq: f64,
    /// Frequency of carrying each pair member on its own.
    pub pair_single_freq: f64,
    /// Fraction of low-quality samples.
    pub low_quality_frac: f64,
    pub tau: f64,
    pub noise: f64,
    pub seed: u64,
    pub drug: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_samples: 2000,
            vocab_size: 500,
            background_mean: 12.0,
            n_marginal: 2,
            n_pairs: 2,
            marginal_freq: 0.25,
            pair_freq: 0.20,
            pair_single_freq: 0.10,
            low_quality_frac: 0.3,
            tau: 0.5,
            noise: 0.05,
            seed: 0,
            drug: "SYN".to_string(),
        }
    }
}

fn check_freq(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(VampError::Config(format!("{name} = {v} must lie in [0,1]")));
    }
    Ok(())
}

impl SyntheticSpec {
    pub fn planted_count(&self) -> usize {
        self.n_marginal + 2 * self.n_pairs
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(VampError::Config("n_samples must be positive".into()));
        }
        if self.vocab_size <= self.planted_count() {
            return Err(VampError::Config(format!(
                "vocab_size {} too small for {} planted variants",
                self.vocab_size,
                self.planted_count()
            )));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(VampError::Config(format!("tau = {} must lie in (0,1)", self.tau)));
        }
        if !(0.0..0.5).contains(&self.noise) {
            return Err(VampError::Config(format!("noise = {} must lie in [0,0.5)", self.noise)));
        }
        if !(self.background_mean >= 0.0 && self.background_mean.is_finite()) {
            return Err(VampError::Config("background_mean must be >= 0".into()));
        }
        check_freq("marginal_freq", self.marginal_freq)?;
        check_freq("pair_freq", self.pair_freq)?;
        check_freq("pair_single_freq", self.pair_single_freq)?;
        check_freq("low_quality_frac", self.low_quality_frac)?;
        Ok(())
    }

    /// Parse a spec file; keys may sit in a `[synth]` section or at top level.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut s = SyntheticSpec::default();
        for e in parse_entries(text)? {
            if !(e.section.is_empty() || e.section == "synth") {
                return Err(e.unknown());
            }
            match e.key.as_str() {
                "n_samples" => s.n_samples = e.parse()?,
                "vocab_size" => s.vocab_size = e.parse()?,
                "background_mean" => s.background_mean = e.parse()?,
                "n_marginal" => s.n_marginal = e.parse()?,
                "n_pairs" => s.n_pairs = e.parse()?,
                "marginal_freq" => s.marginal_freq = e.parse()?,
                "pair_freq" => s.pair_freq = e.parse()?,
                "pair_single_freq" => s.pair_single_freq = e.parse()?,
                "low_quality_frac" => s.low_quality_frac = e.parse()?,
                "tau" => s.tau = e.parse()?,
                "noise" => s.noise = e.parse()?,
                "seed" => s.seed = e.parse()?,
                "drug" => s.drug = e.value.clone(),
                _ => return Err(e.unknown()),
            }
        }
        s.validate()?;
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        format!(
            "[synth]\nn_samples = {}\nvocab_size = {}\nbackground_mean = {}\nn_marginal = {}\nn_pairs = {}\n\
             marginal_freq = {}\npair_freq = {}\npair_single_freq = {}\nlow_quality_frac = {}\ntau = {}\n\
             noise = {}\nseed = {}\ndrug = {}\n",
            self.n_samples,
            self.vocab_size,
            self.background_mean,
            self.n_marginal,
            self.n_pairs,
            self.marginal_freq,
            self.pair_freq,
            self.pair_single_freq,
            self.low_quality_frac,
            self.tau,
            self.noise,
            self.seed,
            self.drug
        )
    }
}

/// The `i`-th token of the synthetic vocabulary.
pub fn synthetic_token(i: usize) -> VariantToken {
    let r = i % 4;
    let a = (r + 1 + (i / 4) % 3) % 4;
    VariantToken::new(1000 + 7 * i as u64, BASES[r], BASES[a]).expect("distinct bases")
}

/// Causal ground truth of a generated cohort.
#[derive(Clone, Debug, PartialEq)]
pub struct Ledger {
    pub tau: f64,
    pub marginals: Vec<VariantToken>,
    pub pairs: Vec<(VariantToken, VariantToken)>,
    /// Observed carrier frequency per element, marginals first.
    pub frequencies: Vec<f64>,
}

impl Ledger {
    pub fn causal_tokens(&self) -> Vec<&VariantToken> {
        self.marginals
            .iter()
            .chain(self.pairs.iter().flat_map(|(a, b)| [a, b]))
            .collect()
    }

    /// The noiseless labelling rule.
    pub fn rule(&self, s: &SampleRecord) -> u8 {
        let qualifies = |t: &VariantToken| {
            s.tokens
                .iter()
                .zip(&s.features)
                .any(|(u, f)| u == t && f[FRS_CHANNEL] >= self.tau)
        };
        let hit = self.marginals.iter().any(qualifies) || self.pairs.iter().any(|(a, b)| qualifies(a) && qualifies(b));
        u8::from(hit)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("element,kind,members,effect\n");
        for (i, t) in self.marginals.iter().enumerate() {
            let _ = writeln!(s, "M{},marginal,{},{}", i + 1, t, self.frequencies[i]);
        }
        for (i, (a, b)) in self.pairs.iter().enumerate() {
            let f = self.frequencies[self.marginals.len() + i];
            let _ = writeln!(s, "P{},pair,{a};{b},{f}", i + 1);
        }
        s
    }

    pub fn from_csv(text: &str, tau: f64) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "element,kind,members,effect")) => {}
            _ => return Err(VampError::parse(1, "expected ledger header")),
        }
        let mut l = Ledger {
            tau,
            marginals: vec![],
            pairs: vec![],
            frequencies: vec![],
        };
        let mut pair_freqs = vec![];
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(VampError::parse(i + 1, "expected 4 columns"));
            }
            let f: f64 = cols[3].parse().map_err(|_| VampError::parse(i + 1, "bad effect"))?;
            let tok = |s: &str| s.parse::<VariantToken>().map_err(|_| VampError::parse(i + 1, format!("bad token {s:?}")));
            match cols[1] {
                "marginal" => {
                    l.marginals.push(tok(cols[2])?);
                    l.frequencies.push(f);
                }
                "pair" => {
                    let (a, b) = cols[2]
                        .split_once(';')
                        .ok_or_else(|| VampError::parse(i + 1, "pair needs two members"))?;
                    l.pairs.push((tok(a)?, tok(b)?));
                    pair_freqs.push(f);
                }
                k => return Err(VampError::parse(i + 1, format!("unknown kind {k:?}"))),
            }
        }
        l.frequencies.extend(pair_freqs);
        Ok(l)
    }
}

pub struct Generated {
    pub cohort: Cohort,
    pub ledger: Ledger,
}

impl Generated {
    pub fn write(&self, cohort_path: &Path, ledger_path: &Path) -> Result<()> {
        self.cohort.write(cohort_path)?;
        std::fs::write(ledger_path, self.ledger.to_csv()).map_err(|e| VampError::io(ledger_path, e))
    }
}

fn quality_vector<R: Rng>(rng: &mut R, frs: f64) -> QualityVector {
    let gt = if rng.random_bool(0.9) { 1.0 } else { 0.5 };
    let cov_alt: f64 = rng.random();
    [
        gt,
        rng.random(),
        rng.random(),
        cov_alt * (1.0 - frs) * 0.5 + rng.random::<f64>() * 0.5,
        cov_alt,
        frs,
        rng.random(),
        (0.3 * frs + 0.7 * rng.random::<f64>()).clamp(0.0, 1.0),
    ]
}

/// Deterministic in `spec` (including its seed).
pub fn generate(spec: &SyntheticSpec) -> Result<Generated> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab: Vec<VariantToken> = (0..spec.vocab_size).map(synthetic_token).collect();
    let planted_idx = index::sample(&mut rng, spec.vocab_size, spec.planted_count()).into_vec();
    let planted: BTreeSet<usize> = planted_idx.iter().copied().collect();
    let background: Vec<usize> = (0..spec.vocab_size).filter(|i| !planted.contains(i)).collect();
    let marginal_ids = &planted_idx[..spec.n_marginal];
    let pair_ids: Vec<(usize, usize)> = planted_idx[spec.n_marginal..]
        .chunks(2)
        .map(|c| (c[0], c[1]))
        .collect();
    let poisson = Poisson::new(spec.background_mean.max(1e-12))
        .map_err(|e| VampError::Config(format!("background_mean: {e}")))?;

    let mut counts = vec![0usize; spec.n_marginal + spec.n_pairs];
    let mut ledger = Ledger {
        tau: spec.tau,
        marginals: marginal_ids.iter().map(|&i| vocab[i].clone()).collect(),
        pairs: pair_ids.iter().map(|&(a, b)| (vocab[a].clone(), vocab[b].clone())).collect(),
        frequencies: vec![],
    };
    let mut samples = Vec::with_capacity(spec.n_samples);
    for s in 0..spec.n_samples {
        let low = rng.random_bool(spec.low_quality_frac);
        let n_bg = if spec.background_mean > 0.0 {
            (poisson.sample(&mut rng) as usize).min(background.len())
        } else {
            0
        };
        let mut ids: Vec<usize> = index::sample(&mut rng, background.len(), n_bg)
            .into_iter()
            .map(|k| background[k])
            .collect();
        for (m, &id) in marginal_ids.iter().enumerate() {
            if rng.random_bool(spec.marginal_freq) {
                ids.push(id);
                counts[m] += 1;
            }
        }
        for (p, &(a, b)) in pair_ids.iter().enumerate() {
            if rng.random_bool(spec.pair_freq) {
                ids.extend([a, b]);
                counts[spec.n_marginal + p] += 1;
            } else {
                let (ha, hb) = (rng.random_bool(spec.pair_single_freq), rng.random_bool(spec.pair_single_freq));
                if ha && !hb {
                    ids.push(a);
                } else if hb && !ha {
                    ids.push(b);
                }
            }
        }
        ids.shuffle(&mut rng);
        let mut tokens = Vec::with_capacity(ids.len());
        let mut features = Vec::with_capacity(ids.len());
        for id in ids {
            let frs = if low {
                rng.random_range(0.05..0.45)
            } else {
                rng.random_range(0.55..=1.0)
            };
            tokens.push(vocab[id].clone());
            features.push(quality_vector(&mut rng, frs));
        }
        let mut rec = SampleRecord {
            sample_id: format!("syn{s:05}"),
            tokens,
            features,
            label: 0,
            drug: spec.drug.clone(),
        };
        let clean = ledger.rule(&rec);
        rec.label = if rng.random_bool(spec.noise) { 1 - clean } else { clean };
        samples.push(rec);
    }
    ledger.frequencies = counts.iter().map(|&c| c as f64 / spec.n_samples as f64).collect();
    Ok(Generated {
        cohort: Cohort::new(&spec.drug, samples),
        ledger,
    })
}

/// AUC of the noiseless rule against the recorded labels, the ceiling for
/// any scorer. `None` when the cohort holds a single class.
pub fn bayes_optimal_auc(ledger: &Ledger, cohort: &Cohort) -> Option<f64> {
    let scores: Vec<f64> = cohort.samples.iter().map(|s| ledger.rule(s) as f64).collect();
    let labels: Vec<u8> = cohort.samples.iter().map(|s| s.label).collect();
    roc_auc(&scores, &labels)
}
