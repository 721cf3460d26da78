//! Text checkpoints: a header echoing the run configuration, the vocabulary
//! or presence columns, and every named parameter as decimal doubles.
//!
//! Doubles are written with Rust's shortest round-trip formatting, so a
//! save/load cycle restores every parameter bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::baselines::{CnnBaseline, MlpBaseline, PresenceMatrix};
use crate::batch::encode_cohort;
use crate::cohort::Cohort;
use crate::config::RunConfig;
use crate::engine::Tensor;
use crate::error::{Result, VampError};
use crate::model::VampNet;
use crate::params::ParamStore;
use crate::tokenizer::Vocabulary;
use crate::train::predict;

pub const CKPT_SCHEMA: &str = "vampnet-ckpt/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    VampNet,
    Mlp,
    Cnn,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::VampNet => "vampnet",
            ModelKind::Mlp => "mlp",
            ModelKind::Cnn => "cnn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = VampError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vampnet" => Ok(ModelKind::VampNet),
            "mlp" => Ok(ModelKind::Mlp),
            "cnn" => Ok(ModelKind::Cnn),
            other => Err(VampError::Usage(format!("unknown model {other:?}"))),
        }
    }
}

/// A trained model of any kind.
#[derive(Clone, Debug)]
pub enum AnyModel {
    VampNet(VampNet),
    Mlp(MlpBaseline),
    Cnn(CnnBaseline),
}

impl AnyModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::VampNet(_) => ModelKind::VampNet,
            AnyModel::Mlp(_) => ModelKind::Mlp,
            AnyModel::Cnn(_) => ModelKind::Cnn,
        }
    }

    pub fn params(&self) -> &ParamStore {
        match self {
            AnyModel::VampNet(m) => &m.params,
            AnyModel::Mlp(m) => &m.params,
            AnyModel::Cnn(m) => &m.params,
        }
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        match self {
            AnyModel::VampNet(m) => &mut m.params,
            AnyModel::Mlp(m) => &mut m.params,
            AnyModel::Cnn(m) => &mut m.params,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub seed: u64,
    pub config: RunConfig,
    pub model: AnyModel,
    /// Token vocabulary of a set model.
    pub vocab: Option<Vocabulary>,
    /// Presence-matrix columns of a baseline.
    pub columns: Vec<String>,
}

fn section(out: &mut String, name: &str, body: &str) {
    let _ = writeln!(out, "{name}\t{}", body.lines().count());
    for l in body.lines() {
        out.push_str(l);
        out.push('\n');
    }
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut s = format!("{CKPT_SCHEMA}\n");
        let _ = writeln!(s, "kind\t{}", self.model.kind());
        let _ = writeln!(s, "seed\t{}", self.seed);
        let fusion = match &self.model {
            AnyModel::VampNet(m) if m.has_path2() => self.config.fusion.to_string(),
            AnyModel::VampNet(_) => "none".to_string(),
            _ => "-".to_string(),
        };
        let _ = writeln!(s, "fusion\t{fusion}");
        let (a, b) = match &self.model {
            AnyModel::VampNet(m) => (m.config.vocab_size, m.config.max_len),
            AnyModel::Mlp(m) => (m.n_inputs, 0),
            AnyModel::Cnn(m) => (m.n_inputs, 0),
        };
        let _ = writeln!(s, "dims\t{a}\t{b}");
        section(&mut s, "config", &self.config.to_text());
        section(&mut s, "vocab", &self.vocab.as_ref().map(|v| v.to_text()).unwrap_or_default());
        section(&mut s, "columns", &self.columns.join("\n"));
        let params = self.model.params();
        let _ = writeln!(s, "params\t{}", params.len());
        for (name, t) in params.iter() {
            let dims: Vec<String> = t.shape().iter().map(|d| d.to_string()).collect();
            let _ = writeln!(s, "{name}\t{}", dims.join(","));
            let vals: Vec<String> = t.data().iter().map(|v| v.to_string()).collect();
            s.push_str(&vals.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().collect();
        let mut pos = 0;
        let mut next = |what: &str| -> Result<(usize, &str)> {
            let l = *lines
                .get(pos)
                .ok_or_else(|| VampError::parse(pos + 1, format!("checkpoint truncated before {what}")))?;
            pos += 1;
            Ok((pos, l))
        };
        let (_, h) = next("header")?;
        if h != CKPT_SCHEMA {
            return Err(VampError::parse(1, format!("expected {CKPT_SCHEMA} header")));
        }
        let field = |(ln, l): (usize, &str), key: &str| -> Result<String> {
            l.strip_prefix(key)
                .and_then(|r| r.strip_prefix('\t'))
                .map(str::to_string)
                .ok_or_else(|| VampError::parse(ln, format!("expected {key}")))
        };
        let num = |ln: usize, v: &str| -> Result<usize> {
            v.parse().map_err(|_| VampError::parse(ln, format!("bad count {v:?}")))
        };
        let kind: ModelKind = field(next("kind")?, "kind")?
            .parse()
            .map_err(|_| VampError::parse(2, "unknown model kind"))?;
        let seed_l = next("seed")?;
        let seed: u64 = field(seed_l, "seed")?
            .parse()
            .map_err(|_| VampError::parse(seed_l.0, "bad seed"))?;
        field(next("fusion")?, "fusion")?;
        let dims_l = next("dims")?;
        let dims = field(dims_l, "dims")?;
        let (a, b) = dims
            .split_once('\t')
            .ok_or_else(|| VampError::parse(dims_l.0, "expected two dims"))?;
        let (a, b) = (num(dims_l.0, a)?, num(dims_l.0, b)?);
        let mut block = |name: &str| -> Result<String> {
            let l = next(name)?;
            let n = num(l.0, &field(l, name)?)?;
            let mut body = String::new();
            for _ in 0..n {
                body.push_str(next(name)?.1);
                body.push('\n');
            }
            Ok(body)
        };
        let config = RunConfig::from_text(&block("config")?)?;
        let vocab_text = block("vocab")?;
        let columns: Vec<String> = block("columns")?.lines().map(str::to_string).collect();
        let vocab = if vocab_text.is_empty() {
            None
        } else {
            Some(Vocabulary::from_text(&vocab_text)?)
        };
        let mut model = match kind {
            ModelKind::VampNet => AnyModel::VampNet(VampNet::new(config.model_config(a, b), seed)?),
            ModelKind::Mlp => AnyModel::Mlp(MlpBaseline::new(config.mlp.clone(), a, seed)?),
            ModelKind::Cnn => AnyModel::Cnn(CnnBaseline::new(config.cnn_baseline.clone(), a, seed)?),
        };
        let pl = next("params")?;
        let n_params = num(pl.0, &field(pl, "params")?)?;
        let mut loaded = ParamStore::new();
        for _ in 0..n_params {
            let (ln, head) = next("parameter")?;
            let (name, shape) = head
                .split_once('\t')
                .ok_or_else(|| VampError::parse(ln, "expected name<TAB>shape"))?;
            let shape: Vec<usize> = shape
                .split(',')
                .map(|d| num(ln, d))
                .collect::<Result<_>>()?;
            let (vl, vals) = next("values")?;
            let data: Vec<f64> = vals
                .split(' ')
                .filter(|v| !v.is_empty())
                .map(|v| v.parse().map_err(|_| VampError::parse(vl, format!("bad value {v:?}"))))
                .collect::<Result<_>>()?;
            loaded.insert(name, Tensor::new(shape, data).map_err(|e| VampError::parse(vl, e.to_string()))?);
        }
        model.params_mut().load_from(&loaded)?;
        if kind == ModelKind::VampNet && vocab.is_none() {
            return Err(VampError::parse(pos, "set model checkpoint without vocabulary"));
        }
        Ok(Checkpoint {
            seed,
            config,
            model,
            vocab,
            columns,
        })
    }

    /// Resistant-class probability for every sample of `cohort`.
    pub fn score(&self, cohort: &Cohort) -> Result<Vec<f64>> {
        match &self.model {
            AnyModel::VampNet(m) => {
                let vocab = self
                    .vocab
                    .as_ref()
                    .ok_or_else(|| VampError::Contract("set model without vocabulary".into()))?;
                predict(m, &encode_cohort(vocab, cohort))
            }
            AnyModel::Mlp(m) => predict(m, &PresenceMatrix::build(cohort, &self.columns)?.rows),
            AnyModel::Cnn(m) => predict(m, &PresenceMatrix::build(cohort, &self.columns)?.rows),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| VampError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let t = fs::read_to_string(path).map_err(|e| VampError::io(path, e))?;
        Self::from_text(&t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::MlpConfig;
    use crate::cohort::{Cohort, SampleRecord};
    use crate::vcf::VariantToken;

    #[test]
    fn vampnet_round_trip_is_bit_exact() {
        let rec = SampleRecord {
            sample_id: "a".into(),
            tokens: vec![VariantToken::new(5, "A", "C").unwrap()],
            features: vec![[0.5; 8]],
            label: 1,
            drug: "D".into(),
        };
        let vocab = Vocabulary::build_static(&Cohort::new("D", vec![rec]));
        let mut config = RunConfig::default();
        config.sab.emb_dim = 8;
        config.sab.num_heads = 2;
        config.sab.num_layers = 1;
        config.cnn.channels = 4;
        let model = VampNet::new(config.model_config(vocab.len(), 6), 11).unwrap();
        let ck = Checkpoint {
            seed: 11,
            config,
            model: AnyModel::VampNet(model),
            vocab: Some(vocab),
            columns: vec![],
        };
        let text = ck.to_text();
        let back = Checkpoint::from_text(&text).unwrap();
        assert_eq!(back.to_text(), text);
        for ((n1, a), (n2, b)) in ck.model.params().iter().zip(back.model.params().iter()) {
            assert_eq!(n1, n2);
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn baseline_round_trip_and_corruption() {
        let mut config = RunConfig::default();
        config.mlp = MlpConfig {
            hidden: vec![3],
            ..MlpConfig::default()
        };
        let ck = Checkpoint {
            seed: 2,
            model: AnyModel::Mlp(MlpBaseline::new(config.mlp.clone(), 2, 2).unwrap()),
            config,
            vocab: None,
            columns: vec!["1_A>C".into(), "2_G>T".into()],
        };
        let text = ck.to_text();
        let back = Checkpoint::from_text(&text).unwrap();
        assert_eq!(back.columns, ck.columns);
        assert_eq!(back.to_text(), text);
        assert!(Checkpoint::from_text(&text[..text.len() / 2]).is_err());
        assert!(Checkpoint::from_text("vampnet-ckpt/0\n").is_err());
    }
}
