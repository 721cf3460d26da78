//! Presence/absence baselines: chi-squared pre-selection, an MLP and a pooled
//! 1-D CNN over the selected-variant columns.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma_ur;

use crate::cohort::Cohort;
use crate::engine::{Graph, Tensor, Var};
use crate::error::{Result, VampError};
use crate::model::{Activation, Linear};
use crate::params::{glorot, Bound, ParamStore};
use crate::train::Trainable;

/// 2x2 table `[present&R, present&S, absent&R, absent&S]`.
pub type Table = [u64; 4];

/// Plain Pearson statistic without continuity correction; 0 when any margin
/// is empty.
pub fn chi2_statistic(t: &Table) -> f64 {
    let [a, b, c, d] = *t;
    let rows = [a + b, c + d];
    let cols = [a + c, b + d];
    if rows.contains(&0) || cols.contains(&0) {
        return 0.0;
    }
    let n = (a + b + c + d) as f64;
    let diff = a as i128 * d as i128 - b as i128 * c as i128;
    let num = (diff * diff) as f64;
    let den = rows[0] as f64 * rows[1] as f64 * cols[0] as f64 * cols[1] as f64;
    n * num / den
}

/// Upper tail of the 1-dof chi-squared distribution, `Q(1/2, x/2)`.
pub fn chi2_pvalue(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(0.5, x / 2.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chi2Row {
    pub token: String,
    pub table: Table,
    pub chi2: f64,
    pub p_value: f64,
}

/// Contingency tables for every token of the cohort, in token order.
pub fn chi2_scan(cohort: &Cohort) -> Result<Vec<Chi2Row>> {
    let [n_s, n_r] = cohort.class_counts();
    if n_s == 0 || n_r == 0 {
        return Err(VampError::Config("chi-squared selection needs both classes".into()));
    }
    let mut present: BTreeMap<&str, [u64; 2]> = BTreeMap::new();
    for s in &cohort.samples {
        let uniq: BTreeSet<&str> = s.tokens.iter().map(|t| t.canonical()).collect();
        for t in uniq {
            present.entry(t).or_default()[s.label as usize] += 1;
        }
    }
    Ok(present
        .into_iter()
        .map(|(tok, [ps, pr])| {
            let table = [pr, ps, n_r as u64 - pr, n_s as u64 - ps];
            let chi2 = chi2_statistic(&table);
            Chi2Row {
                token: tok.to_string(),
                table,
                chi2,
                p_value: chi2_pvalue(chi2),
            }
        })
        .collect())
}

/// Tokens with `p < alpha`, sorted by p ascending then token.
pub fn chi2_select(cohort: &Cohort, alpha: f64) -> Result<Vec<Chi2Row>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(VampError::Config(format!("alpha {alpha} must lie in (0,1]")));
    }
    let mut rows: Vec<Chi2Row> = chi2_scan(cohort)?
        .into_iter()
        .filter(|r| r.chi2 > 0.0 && r.p_value < alpha)
        .collect();
    rows.sort_by(|x, y| x.p_value.total_cmp(&y.p_value).then_with(|| x.token.cmp(&y.token)));
    Ok(rows)
}

pub fn selected_tsv(rows: &[Chi2Row]) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(s, "{}\t{}\t{:e}", r.token, r.chi2, r.p_value);
    }
    s
}

/// One binary row of the presence matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PresenceRow {
    pub x: Vec<f64>,
    pub label: u8,
}

/// Samples x selected variants, 1 where the sample carries the variant.
#[derive(Clone, Debug, PartialEq)]
pub struct PresenceMatrix {
    pub columns: Vec<String>,
    pub rows: Vec<PresenceRow>,
}

impl PresenceMatrix {
    pub fn build(cohort: &Cohort, columns: &[String]) -> Result<Self> {
        let index: BTreeMap<&str, usize> = columns.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        if index.len() != columns.len() {
            return Err(VampError::Contract("presence matrix columns must be unique".into()));
        }
        let rows = cohort
            .samples
            .iter()
            .map(|s| {
                let mut x = vec![0.0; columns.len()];
                for t in &s.tokens {
                    if let Some(&j) = index.get(t.canonical()) {
                        x[j] = 1.0;
                    }
                }
                PresenceRow { x, label: s.label }
            })
            .collect();
        Ok(PresenceMatrix {
            columns: columns.to_vec(),
            rows,
        })
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }
}

fn rows_tensor(batch: &[&PresenceRow], width: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(batch.len() * width);
    for r in batch {
        if r.x.len() != width {
            return Err(VampError::Dimension(format!(
                "presence row of width {} for a model expecting {width}",
                r.x.len()
            )));
        }
        data.extend_from_slice(&r.x);
    }
    Tensor::new(vec![batch.len(), width], data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub activation: Activation,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![1024, 128, 128],
            dropout: 0.1315,
            activation: Activation::Gelu,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MlpBaseline {
    pub config: MlpConfig,
    pub n_inputs: usize,
    pub params: ParamStore,
    layers: Vec<Linear>,
    out: Linear,
}

impl MlpBaseline {
    pub fn new(config: MlpConfig, n_inputs: usize, seed: u64) -> Result<Self> {
        if n_inputs == 0 {
            return Err(VampError::Config("MLP baseline needs at least one input column".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(VampError::Config(format!("dropout {} outside [0,1)", config.dropout)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut d = n_inputs;
        let mut layers = Vec::new();
        for (i, &h) in config.hidden.iter().enumerate() {
            layers.push(Linear::new(&mut params, &format!("mlp/fc{i}"), d, h, &mut rng));
            d = h;
        }
        let out = Linear::new(&mut params, "mlp/out", d, 2, &mut rng);
        Ok(MlpBaseline {
            config,
            n_inputs,
            params,
            layers,
            out,
        })
    }
}

impl Trainable for MlpBaseline {
    type Sample = PresenceRow;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn label(s: &PresenceRow) -> u8 {
        s.label
    }

    fn forward_logits(
        &self,
        g: &mut Graph,
        p: &Bound,
        batch: &[&PresenceRow],
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let mut h = g.constant(rows_tensor(batch, self.n_inputs)?);
        for l in &self.layers {
            h = l.forward(g, p, h)?;
            h = self.config.activation.apply(g, h);
            h = g.dropout(h, self.config.dropout, train, rng)?;
        }
        self.out.forward(g, p, h)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CnnBaselineConfig {
    pub filters: Vec<usize>,
    pub kernels: Vec<usize>,
    pub pools: Vec<usize>,
    pub activation: Activation,
    pub dropout: f64,
}

impl Default for CnnBaselineConfig {
    fn default() -> Self {
        CnnBaselineConfig {
            filters: vec![96, 128, 256],
            kernels: vec![5, 9, 2],
            pools: vec![3, 3, 3],
            activation: Activation::Relu,
            dropout: 0.1315,
        }
    }
}

impl CnnBaselineConfig {
    /// Length after every conv (no padding) and pool stage.
    pub fn output_len(&self, width: usize) -> Result<usize> {
        if self.filters.len() != self.kernels.len() || self.filters.len() != self.pools.len() {
            return Err(VampError::Config("filters, kernels and pools need equal lengths".into()));
        }
        let mut l = width;
        for (&k, &p) in self.kernels.iter().zip(&self.pools) {
            if k == 0 || p == 0 || l < k || (l - k + 1) < p {
                return Err(VampError::Dimension(format!(
                    "presence width {width} narrower than the receptive field of {:?}/{:?}",
                    self.kernels, self.pools
                )));
            }
            l = (l - k + 1) / p;
        }
        Ok(l)
    }
}

#[derive(Clone, Debug)]
pub struct CnnBaseline {
    pub config: CnnBaselineConfig,
    pub n_inputs: usize,
    pub params: ParamStore,
    convs: Vec<(usize, usize)>,
    out: Linear,
    flat: usize,
}

impl CnnBaseline {
    pub fn new(config: CnnBaselineConfig, n_inputs: usize, seed: u64) -> Result<Self> {
        let l = config.output_len(n_inputs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut cin = 1;
        let mut convs = Vec::new();
        for (i, (&f, &k)) in config.filters.iter().zip(&config.kernels).enumerate() {
            let w = params.insert(
                &format!("cnn/conv{i}/w"),
                glorot(&[f, cin, k], cin * k, f * k, &mut rng),
            );
            let b = params.insert(&format!("cnn/conv{i}/b"), Tensor::zeros(&[f]));
            convs.push((w, b));
            cin = f;
        }
        let flat = cin * l;
        let out = Linear::new(&mut params, "cnn/out", flat, 2, &mut rng);
        Ok(CnnBaseline {
            config,
            n_inputs,
            params,
            convs,
            out,
            flat,
        })
    }
}

impl Trainable for CnnBaseline {
    type Sample = PresenceRow;

    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn label(s: &PresenceRow) -> u8 {
        s.label
    }

    fn forward_logits(
        &self,
        g: &mut Graph,
        p: &Bound,
        batch: &[&PresenceRow],
        train: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        let x = g.constant(rows_tensor(batch, self.n_inputs)?);
        let mut h = g.reshape(x, &[batch.len(), 1, self.n_inputs])?;
        for (&(w, b), &pool) in self.convs.iter().zip(&self.config.pools) {
            h = g.conv1d(h, p.var(w), Some(p.var(b)), 1, 0)?;
            h = self.config.activation.apply(g, h);
            h = g.max_pool1d(h, pool)?;
        }
        let h = g.reshape(h, &[batch.len(), self.flat])?;
        let h = g.dropout(h, self.config.dropout, train, rng)?;
        self.out.forward(g, p, h)
    }
}
