//! Per-sample VCF parsing, genotype filtering and feature extraction.

use std::fmt;
use std::str::FromStr;

use crate::error::{Result, VampError};

/// Number of per-variant quality channels.
pub const N_CHANNELS: usize = 8;

/// Channel names in storage order.
pub const CHANNELS: [&str; N_CHANNELS] = [
    "GT",
    "DP",
    "DPF",
    "COV_REF",
    "COV_ALT",
    "FRS",
    "GT_CONF",
    "GT_CONF_PERCENTILE",
];

/// Index of a channel by name (case-insensitive).
pub fn channel_index(name: &str) -> Option<usize> {
    CHANNELS.iter().position(|c| c.eq_ignore_ascii_case(name))
}

pub const FRS_CHANNEL: usize = 5;

/// One genetic alteration, written canonically as `pos_REF>ALT`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VariantToken {
    canonical: String,
    position: u64,
    ref_allele: String,
    alt_allele: String,
}

fn valid_allele(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| matches!(b, b'A' | b'C' | b'G' | b'T'))
}

impl VariantToken {
    pub fn new(position: u64, ref_allele: &str, alt_allele: &str) -> Result<Self> {
        let r = ref_allele.to_ascii_uppercase();
        let a = alt_allele.to_ascii_uppercase();
        if !valid_allele(&r) || !valid_allele(&a) {
            return Err(VampError::parse(
                0,
                format!("alleles must be non-empty ACGT strings, got {ref_allele:?}>{alt_allele:?}"),
            ));
        }
        if r == a {
            return Err(VampError::parse(0, format!("REF equals ALT ({r}) at position {position}")));
        }
        Ok(VariantToken {
            canonical: format!("{position}_{r}>{a}"),
            position,
            ref_allele: r,
            alt_allele: a,
        })
    }

    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn ref_allele(&self) -> &str {
        &self.ref_allele
    }

    pub fn alt_allele(&self) -> &str {
        &self.alt_allele
    }
}

impl fmt::Display for VariantToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical)
    }
}

impl FromStr for VariantToken {
    type Err = VampError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || VampError::parse(0, format!("malformed variant token {s:?}"));
        let (pos, rest) = s.split_once('_').ok_or_else(bad)?;
        let (r, a) = rest.split_once('>').ok_or_else(bad)?;
        let pos = pos.parse::<u64>().map_err(|_| bad())?;
        VariantToken::new(pos, r, a)
    }
}

/// One VCF data row for the first sample column, raw strings preserved.
#[derive(Clone, Debug, PartialEq)]
pub struct VcfRecord {
    /// 1-based line number in the source.
    pub line: usize,
    pub chrom: String,
    pub pos: u64,
    pub ref_allele: String,
    pub alts: Vec<String>,
    pub filter: String,
    pub pass: bool,
    /// FORMAT keys paired with the sample's values, in column order.
    pub fields: Vec<(String, String)>,
    /// Alternate allele (1-based index into `alts`) this record stands for
    /// once filtering has expanded multi-allelic rows.
    pub selected_alt: Option<usize>,
}

impl VcfRecord {
    pub fn field(&self, key: &str) -> Option<&str> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn genotype(&self) -> Option<&str> {
        self.field("GT")
    }
}

/// Parse VCF text. `##` lines are skipped, a `#CHROM` header must precede the
/// data rows, and only the first sample column is read.
pub fn parse_vcf(text: &str) -> Result<Vec<VcfRecord>> {
    let mut seen_header = false;
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.starts_with("##") || line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.first() != Some(&"#CHROM") || cols.len() < 10 || cols[8] != "FORMAT" {
                return Err(VampError::parse(
                    line_no,
                    "header must be #CHROM..FORMAT followed by a sample column",
                ));
            }
            seen_header = true;
            continue;
        }
        if !seen_header {
            return Err(VampError::parse(line_no, "missing #CHROM header before data"));
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 10 {
            return Err(VampError::parse(
                line_no,
                format!("expected at least 10 tab-separated columns, found {}", cols.len()),
            ));
        }
        let pos = cols[1]
            .parse::<u64>()
            .map_err(|_| VampError::parse(line_no, format!("bad POS {:?}", cols[1])))?;
        if pos == 0 {
            return Err(VampError::parse(line_no, "POS is 1-based"));
        }
        let keys: Vec<&str> = cols[8].split(':').collect();
        let vals: Vec<&str> = cols[9].split(':').collect();
        if keys.len() != vals.len() {
            return Err(VampError::parse(
                line_no,
                format!("FORMAT has {} keys but sample has {} values", keys.len(), vals.len()),
            ));
        }
        records.push(VcfRecord {
            line: line_no,
            chrom: cols[0].to_string(),
            pos,
            ref_allele: cols[3].to_string(),
            alts: cols[4].split(',').map(str::to_string).collect(),
            filter: cols[6].to_string(),
            pass: cols[6] == "PASS",
            fields: keys
                .iter()
                .zip(&vals)
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
            selected_alt: None,
        });
    }
    if !seen_header {
        return Err(VampError::parse(text.lines().count().max(1), "missing #CHROM header"));
    }
    Ok(records)
}

/// Allele indices of a genotype string; `None` entries are missing calls.
fn gt_alleles(gt: &str) -> Vec<Option<usize>> {
    gt.split(['/', '|']).map(|a| a.parse::<usize>().ok()).collect()
}

fn is_dropped_genotype(gt: &str) -> bool {
    matches!(gt, "0/0" | "0|0" | "./." | ".|.")
}

/// Keep PASS rows that carry an alternate call, one record per called
/// alternate allele. Applying it twice gives the same result as once.
pub fn filter_variants(records: &[VcfRecord]) -> Vec<VcfRecord> {
    let mut kept = Vec::new();
    for rec in records {
        if !rec.pass {
            continue;
        }
        let Some(gt) = rec.genotype() else { continue };
        if is_dropped_genotype(gt) {
            continue;
        }
        if rec.selected_alt.is_some() {
            kept.push(rec.clone());
            continue;
        }
        let mut called: Vec<usize> = gt_alleles(gt)
            .into_iter()
            .flatten()
            .filter(|&a| a >= 1 && a <= rec.alts.len())
            .collect();
        called.sort_unstable();
        called.dedup();
        for a in called {
            let mut r = rec.clone();
            r.selected_alt = Some(a);
            kept.push(r);
        }
    }
    kept
}

/// Canonical token of a filtered record.
pub fn make_token(record: &VcfRecord) -> Result<VariantToken> {
    let alt_idx = record.selected_alt.unwrap_or(1);
    let alt = record
        .alts
        .get(alt_idx - 1)
        .ok_or_else(|| VampError::parse(record.line, "allele index beyond ALT list"))?;
    VariantToken::new(record.pos, &record.ref_allele, alt).map_err(|e| match e {
        VampError::Parse { msg, .. } => VampError::parse(record.line, msg),
        other => other,
    })
}

fn numeric(record: &VcfRecord, key: &str, value: Option<&str>) -> Result<f64> {
    match value {
        None | Some(".") | Some("") => Ok(0.0),
        Some(v) => v
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| VampError::parse(record.line, format!("{key} value {v:?} is not numeric"))),
    }
}

/// Raw (un-normalised) quality vector in [`CHANNELS`] order.
pub fn extract_features(record: &VcfRecord) -> Result<[f64; N_CHANNELS]> {
    let alt_idx = record.selected_alt.unwrap_or(1);
    let alleles = gt_alleles(record.genotype().unwrap_or("."));
    let ploidy = alleles.len().max(1) as f64;
    let copies = alleles.iter().filter(|a| **a == Some(alt_idx)).count() as f64;
    // het -> 0.5, hom-alt -> 1.0
    let gt = copies / ploidy;

    let (cov_ref, cov_alt) = match record.field("COV") {
        None | Some(".") => (0.0, 0.0),
        Some(cov) => {
            let parts: Vec<&str> = cov.split(',').collect();
            let r = numeric(record, "COV", parts.first().copied())?;
            let a = numeric(record, "COV", parts.get(alt_idx).copied())?;
            (r, a)
        }
    };
    Ok([
        gt,
        numeric(record, "DP", record.field("DP"))?,
        numeric(record, "DPF", record.field("DPF"))?,
        cov_ref,
        cov_alt,
        numeric(record, "FRS", record.field("FRS"))?,
        numeric(record, "GT_CONF", record.field("GT_CONF"))?,
        numeric(record, "GT_CONF_PERCENTILE", record.field("GT_CONF_PERCENTILE"))?,
    ])
}

/// Parsed, filtered and tokenised content of one VCF file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtractedSample {
    pub tokens: Vec<VariantToken>,
    pub raw_features: Vec<[f64; N_CHANNELS]>,
}

pub fn extract_sample(text: &str) -> Result<ExtractedSample> {
    let records = parse_vcf(text)?;
    let mut out = ExtractedSample::default();
    for rec in filter_variants(&records) {
        out.tokens.push(make_token(&rec)?);
        out.raw_features.push(extract_features(&rec)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "##fileformat=VCFv4.2\n#CHROM\tPOS\tID\tREF\tALT\tQUAL\tFILTER\tINFO\tFORMAT\tS1\n";
    const FMT: &str = "GT:DP:DPF:COV:FRS:GT_CONF:GT_CONF_PERCENTILE";

    fn row(pos: u64, r: &str, a: &str, filter: &str, sample: &str) -> String {
        format!("NC_000962.3\t{pos}\t.\t{r}\t{a}\t.\t{filter}\t.\t{FMT}\t{sample}\n")
    }

    #[test]
    fn pass_flag_reflects_filter_column() {
        let text = format!(
            "{HEADER}{}{}",
            row(10, "C", "A", "PASS", "1/1:50:1:10,40:0.8:300:90"),
            row(20, "G", "T", "MIN_FRS", "1/1:50:1:10,40:0.8:300:90"),
        );
        let recs = parse_vcf(&text).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[0].pass);
        assert!(!recs[1].pass);
        assert_eq!(recs[1].filter, "MIN_FRS");
    }

    #[test]
    fn short_row_is_error_with_line() {
        let text = format!("{HEADER}NC\t5\t.\tA\tC\t.\tPASS\n");
        match parse_vcf(&text) {
            Err(VampError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_header_is_error() {
        let text = "NC\t5\t.\tA\tC\t.\tPASS\t.\tGT\t1/1\n";
        assert!(matches!(parse_vcf(text), Err(VampError::Parse { line: 1, .. })));
        assert!(matches!(parse_vcf("##meta\n"), Err(VampError::Parse { .. })));
    }

    #[test]
    fn format_arity_mismatch_is_error() {
        let text = format!("{HEADER}{}", row(5, "A", "C", "PASS", "1/1:3"));
        assert!(matches!(parse_vcf(&text), Err(VampError::Parse { line: 3, .. })));
    }

    #[test]
    fn drops_reference_and_missing_genotypes() {
        let text = format!(
            "{HEADER}{}{}{}{}{}",
            row(1, "A", "C", "PASS", "0/0:1:1:1,0:1:1:1"),
            row(2, "A", "C", "PASS", "0|0:1:1:1,0:1:1:1"),
            row(3, "A", "C", "PASS", "./.:1:1:1,0:1:1:1"),
            row(4, "A", "C", "PASS", ".|.:1:1:1,0:1:1:1"),
            row(5, "A", "C", "PASS", "1/1:1:1:0,1:1:1:1"),
        );
        let kept = filter_variants(&parse_vcf(&text).unwrap());
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].pos, 5);
    }

    #[test]
    fn multiallelic_resolves_called_allele() {
        let text = format!(
            "{HEADER}{}{}",
            row(7, "C", "A,G", "PASS", "1/1:9:1:0,9,0:1:5:50"),
            row(8, "C", "A,G", "PASS", "1/2:9:1:0,4,5:1:5:50"),
        );
        let kept = filter_variants(&parse_vcf(&text).unwrap());
        let toks: Vec<String> = kept.iter().map(|r| make_token(r).unwrap().to_string()).collect();
        assert_eq!(toks, ["7_C>A", "8_C>A", "8_C>G"]);
        let f = extract_features(&kept[2]).unwrap();
        assert_eq!(f[0], 0.5);
        assert_eq!(f[4], 5.0);
    }

    #[test]
    fn filtering_is_idempotent() {
        let text = format!(
            "{HEADER}{}{}{}",
            row(7, "C", "A,G", "PASS", "1/2:9:1:0,4,5:1:5:50"),
            row(9, "C", "T", "LOW", "1/1:9:1:0,9:1:5:50"),
            row(11, "C", "T", "PASS", "0/1:9:1:4,5:.:5:50"),
        );
        let once = filter_variants(&parse_vcf(&text).unwrap());
        assert_eq!(filter_variants(&once), once);
    }

    #[test]
    fn token_examples() {
        assert_eq!(VariantToken::new(761139, "C", "A").unwrap().canonical(), "761139_C>A");
        assert_eq!(
            VariantToken::new(2338202, "CAC", "CCAC").unwrap().canonical(),
            "2338202_CAC>CCAC"
        );
        assert!(VariantToken::new(5, "A", "A").is_err());
        assert!(VariantToken::new(5, "", "A").is_err());
        let t: VariantToken = "761139_C>A".parse().unwrap();
        assert_eq!(t.position(), 761139);
    }

    #[test]
    fn feature_mapping() {
        let text = format!("{HEADER}{}", row(3, "A", "G", "PASS", "1/1:50:0.9:10,40:0.8:312.5:97.1"));
        let kept = filter_variants(&parse_vcf(&text).unwrap());
        let f = extract_features(&kept[0]).unwrap();
        assert_eq!(f, [1.0, 50.0, 0.9, 10.0, 40.0, 0.8, 312.5, 97.1]);

        let text = format!("{HEADER}{}", row(3, "A", "G", "PASS", "0/1:50:0.9:10,40:.:312.5:97.1"));
        let kept = filter_variants(&parse_vcf(&text).unwrap());
        let f = extract_features(&kept[0]).unwrap();
        assert_eq!(f[0], 0.5);
        assert_eq!(f[FRS_CHANNEL], 0.0);
    }

    #[test]
    fn non_numeric_field_is_parse_error() {
        let text = format!("{HEADER}{}", row(3, "A", "G", "PASS", "1/1:lots:0.9:10,40:0.8:1:1"));
        let kept = filter_variants(&parse_vcf(&text).unwrap());
        assert!(matches!(extract_features(&kept[0]), Err(VampError::Parse { line: 3, .. })));
    }

    #[test]
    fn unknown_format_keys_are_ignored() {
        let text = format!(
            "{HEADER}NC\t3\t.\tA\tG\t.\tPASS\t.\tGT:XYZ:FRS\t1/1:whatever:0.7\n"
        );
        let s = extract_sample(&text).unwrap();
        assert_eq!(s.tokens.len(), 1);
        assert_eq!(s.raw_features[0][FRS_CHANNEL], 0.7);
    }
}
