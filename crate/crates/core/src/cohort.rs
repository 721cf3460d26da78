//! Sample records, min-max normalisation and the cohort interchange file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Result, VampError};
use crate::vcf::{VariantToken, N_CHANNELS};

pub const COHORT_SCHEMA: &str = "vampnet-cohort/1";
pub const STATS_SCHEMA: &str = "vampnet-norm/1";

/// Normalised per-variant quality channels, each in `[0, 1]`.
pub type QualityVector = [f64; N_CHANNELS];

/// One isolate.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub tokens: Vec<VariantToken>,
    pub features: Vec<QualityVector>,
    /// 1 = resistant.
    pub label: u8,
    pub drug: String,
}

impl SampleRecord {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn assemble_sample(
    sample_id: &str,
    tokens: Vec<VariantToken>,
    features: Vec<QualityVector>,
    label: u8,
    drug: &str,
) -> Result<SampleRecord> {
    if tokens.len() != features.len() {
        return Err(VampError::Contract(format!(
            "sample {sample_id}: {} tokens but {} feature rows",
            tokens.len(),
            features.len()
        )));
    }
    if label > 1 {
        return Err(VampError::Contract(format!("sample {sample_id}: label {label} not binary")));
    }
    Ok(SampleRecord {
        sample_id: sample_id.to_string(),
        tokens,
        features,
        label,
        drug: drug.to_string(),
    })
}

/// Per-channel bounds from the training split plus class counts.
#[derive(Clone, Debug, PartialEq)]
pub struct CohortStats {
    pub min: [f64; N_CHANNELS],
    pub max: [f64; N_CHANNELS],
    pub class_counts: [usize; 2],
}

impl CohortStats {
    /// Fit bounds on raw training vectors. Samples are `(raw rows, label)`.
    pub fn fit<'a>(
        train: impl IntoIterator<Item = (&'a [[f64; N_CHANNELS]], u8)>,
    ) -> Result<Self> {
        let mut min = [f64::INFINITY; N_CHANNELS];
        let mut max = [f64::NEG_INFINITY; N_CHANNELS];
        let mut class_counts = [0usize; 2];
        let mut n_samples = 0;
        for (rows, label) in train {
            n_samples += 1;
            class_counts[usize::from(label.min(1))] += 1;
            for row in rows {
                for c in 0..N_CHANNELS {
                    min[c] = min[c].min(row[c]);
                    max[c] = max[c].max(row[c]);
                }
            }
        }
        if n_samples == 0 {
            return Err(VampError::Config("cannot fit normaliser on an empty training set".into()));
        }
        for c in 0..N_CHANNELS {
            if min[c] > max[c] {
                // no variants anywhere
                min[c] = 0.0;
                max[c] = 0.0;
            }
        }
        Ok(CohortStats {
            min,
            max,
            class_counts,
        })
    }

    /// `(x - min) / (max - min)` per channel, clamped to `[0, 1]`; constant
    /// channels map to 0.
    pub fn apply(&self, raw: &[f64; N_CHANNELS]) -> QualityVector {
        let mut out = [0.0; N_CHANNELS];
        for c in 0..N_CHANNELS {
            let span = self.max[c] - self.min[c];
            out[c] = if span > 0.0 {
                ((raw[c] - self.min[c]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{STATS_SCHEMA}\nchannel\tmin\tmax\n");
        for c in 0..N_CHANNELS {
            s.push_str(&format!("{}\t{}\t{}\n", crate::vcf::CHANNELS[c], self.min[c], self.max[c]));
        }
        s.push_str(&format!(
            "class_counts\t{}\t{}\n",
            self.class_counts[0], self.class_counts[1]
        ));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == STATS_SCHEMA => {}
            _ => return Err(VampError::parse(1, format!("expected {STATS_SCHEMA} header"))),
        }
        let mut min = [0.0; N_CHANNELS];
        let mut max = [0.0; N_CHANNELS];
        let mut class_counts = [0; 2];
        let mut seen = [false; N_CHANNELS];
        for (i, line) in lines {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 || cols[0] == "channel" {
                continue;
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| VampError::parse(i + 1, format!("bad number {s:?}")))
            };
            if cols[0] == "class_counts" {
                class_counts = [num(cols[1])? as usize, num(cols[2])? as usize];
            } else if let Some(c) = crate::vcf::channel_index(cols[0]) {
                min[c] = num(cols[1])?;
                max[c] = num(cols[2])?;
                seen[c] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(VampError::parse(0, "normaliser file lacks a channel"));
        }
        Ok(CohortStats {
            min,
            max,
            class_counts,
        })
    }
}

/// An ordered collection of samples for one drug.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Cohort {
    pub drug: String,
    pub samples: Vec<SampleRecord>,
}

impl Cohort {
    pub fn new(drug: &str, samples: Vec<SampleRecord>) -> Self {
        Cohort {
            drug: drug.to_string(),
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let pos = self.samples.iter().filter(|s| s.label == 1).count();
        [self.samples.len() - pos, pos]
    }

    /// Number of samples each canonical token occurs in.
    pub fn token_document_counts(&self) -> BTreeMap<&str, usize> {
        let mut counts = BTreeMap::new();
        for s in &self.samples {
            let mut seen: Vec<&str> = s.tokens.iter().map(|t| t.canonical()).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        counts
    }

    pub fn subset(&self, idx: &[usize]) -> Cohort {
        Cohort {
            drug: self.drug.clone(),
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Interchange text: schema header then one tab-separated line per sample
    /// `id, label, N, N tokens, N*8 doubles`.
    pub fn to_text(&self) -> String {
        let mut s = format!("{COHORT_SCHEMA}\tdrug={}\n", self.drug);
        for rec in &self.samples {
            s.push_str(&rec.sample_id);
            s.push('\t');
            s.push_str(&rec.label.to_string());
            s.push('\t');
            s.push_str(&rec.tokens.len().to_string());
            for t in &rec.tokens {
                s.push('\t');
                s.push_str(t.canonical());
            }
            for row in &rec.features {
                for v in row {
                    s.push('\t');
                    // Display for f64 is shortest round-trip.
                    s.push_str(&v.to_string());
                }
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Cohort> {
        let mut lines = text.lines().enumerate();
        let drug = match lines.next() {
            Some((_, header)) => {
                let mut parts = header.split('\t');
                if parts.next() != Some(COHORT_SCHEMA) {
                    return Err(VampError::parse(1, format!("expected {COHORT_SCHEMA} header")));
                }
                parts
                    .find_map(|p| p.strip_prefix("drug="))
                    .unwrap_or("")
                    .to_string()
            }
            None => return Err(VampError::parse(1, "empty cohort file")),
        };
        let mut samples = Vec::new();
        for (i, line) in lines {
            let ln = i + 1;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 3 {
                return Err(VampError::parse(ln, "sample line needs id, label, count"));
            }
            let label = cols[1]
                .parse::<u8>()
                .ok()
                .filter(|&l| l <= 1)
                .ok_or_else(|| VampError::parse(ln, format!("label {:?} not 0/1", cols[1])))?;
            let n = cols[2]
                .parse::<usize>()
                .map_err(|_| VampError::parse(ln, format!("bad token count {:?}", cols[2])))?;
            if cols.len() != 3 + n + n * N_CHANNELS {
                return Err(VampError::parse(
                    ln,
                    format!("expected {} columns for {n} tokens, found {}", 3 + n * (1 + N_CHANNELS), cols.len()),
                ));
            }
            let tokens = cols[3..3 + n]
                .iter()
                .map(|t| {
                    t.parse::<VariantToken>().map_err(|_| VampError::parse(ln, format!("bad token {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut features = Vec::with_capacity(n);
            for chunk in cols[3 + n..].chunks(N_CHANNELS) {
                let mut row = [0.0; N_CHANNELS];
                for (dst, src) in row.iter_mut().zip(chunk) {
                    *dst = src
                        .parse::<f64>()
                        .map_err(|_| VampError::parse(ln, format!("bad feature {src:?}")))?;
                }
                features.push(row);
            }
            samples.push(assemble_sample(cols[0], tokens, features, label, &drug)?);
        }
        Ok(Cohort { drug, samples })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| VampError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Cohort> {
        let text = fs::read_to_string(path).map_err(|e| VampError::io(path, e))?;
        Cohort::from_text(&text)
    }
}

/// Phenotype quality grade.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhenotypeQuality {
    High,
    Medium,
    Low,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhenotypeRow {
    pub sample_id: String,
    pub drug: String,
    pub label: u8,
    pub quality: PhenotypeQuality,
}

/// Parse the `sample_id,drug,label,quality` table. Labels may be 0/1 or S/R.
pub fn parse_phenotypes(text: &str) -> Result<Vec<PhenotypeRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim().replace(' ', "") == "sample_id,drug,label,quality" => {}
        _ => {
            return Err(VampError::parse(1, "phenotype header must be sample_id,drug,label,quality"))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(VampError::parse(i + 1, "phenotype row needs 4 columns"));
        }
        let label = match cols[2] {
            "1" | "R" | "r" => 1,
            "0" | "S" | "s" => 0,
            other => return Err(VampError::parse(i + 1, format!("label {other:?}"))),
        };
        let quality = match cols[3].to_ascii_uppercase().as_str() {
            "HIGH" => PhenotypeQuality::High,
            "MEDIUM" => PhenotypeQuality::Medium,
            "LOW" => PhenotypeQuality::Low,
            other => return Err(VampError::parse(i + 1, format!("quality {other:?}"))),
        };
        rows.push(PhenotypeRow {
            sample_id: cols[0].to_string(),
            drug: cols[1].to_string(),
            label,
            quality,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tok(s: &str) -> VariantToken {
        s.parse().unwrap()
    }

    #[test]
    fn normaliser_examples() {
        let a = vec![[0.0, 10.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]];
        let b = vec![[1.0, 50.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]];
        let stats = CohortStats::fit([(a.as_slice(), 0), (b.as_slice(), 1)]).unwrap();
        let q = stats.apply(&[1.0, 30.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(q[1], 0.5);
        assert_eq!(q[2], 0.0, "constant channel");
        let q = stats.apply(&[1.0, 100.0, 7.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(q[1], 1.0, "clamped");
        assert_eq!(stats.class_counts, [1, 1]);
    }

    #[test]
    fn empty_training_set_is_config_error() {
        let none: Vec<(&[[f64; N_CHANNELS]], u8)> = vec![];
        assert!(matches!(CohortStats::fit(none), Err(VampError::Config(_))));
    }

    #[test]
    fn stats_text_round_trip() {
        let a = vec![[0.0, 10.0, 0.1, 3.0, 1.0, 0.2, 5.5, 0.0]];
        let b = vec![[1.0, 50.0, 0.9, 7.0, 2.0, 0.9, 500.25, 99.0]];
        let stats = CohortStats::fit([(a.as_slice(), 0), (b.as_slice(), 0)]).unwrap();
        assert_eq!(CohortStats::from_text(&stats.to_text()).unwrap(), stats);
    }

    #[test]
    fn assemble_checks_alignment() {
        let r = assemble_sample("s", vec![tok("1_A>C"); 3], vec![[0.0; 8]; 3], 1, "RIF").unwrap();
        assert_eq!(r.features.len(), 3);
        let e = assemble_sample("s", vec![], vec![], 0, "RIF").unwrap();
        assert!(e.is_empty());
        assert!(assemble_sample("s", vec![tok("1_A>C"); 3], vec![[0.0; 8]; 2], 1, "RIF").is_err());
    }

    #[test]
    fn cohort_text_round_trip_is_bit_exact() {
        let s1 = assemble_sample(
            "iso1",
            vec![tok("761139_C>A"), tok("2338202_CAC>CCAC")],
            vec![[0.1, 1.0 / 3.0, 2e-300, 0.0, 1.0, 0.123456789012345678, 5e-324, 0.999999999999]; 2],
            1,
            "RIF",
        )
        .unwrap();
        let s2 = assemble_sample("iso2", vec![], vec![], 0, "RIF").unwrap();
        let c = Cohort::new("RIF", vec![s1, s2]);
        let back = Cohort::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn cohort_rejects_bad_header_and_counts() {
        assert!(Cohort::from_text("nope\n").is_err());
        let bad = format!("{COHORT_SCHEMA}\tdrug=RIF\ns\t1\t2\t1_A>C\n");
        assert!(matches!(Cohort::from_text(&bad), Err(VampError::Parse { line: 2, .. })));
    }

    #[test]
    fn phenotype_table() {
        let t = "sample_id,drug,label,quality\na,RIF,1,HIGH\nb,RIF,S,LOW\n";
        let rows = parse_phenotypes(t).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].label, 0);
        assert_eq!(rows[1].quality, PhenotypeQuality::Low);
        assert!(parse_phenotypes("id,x\n").is_err());
    }
}
