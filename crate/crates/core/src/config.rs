//! Flat `key = value` configuration text with optional `[section]` headers.
//!
//! `#` starts a comment. Keys outside any section belong to the section
//! named by the caller's default.

use std::str::FromStr;

use crate::baselines::{CnnBaselineConfig, MlpConfig};
use crate::error::{Result, VampError};
use crate::explain::{DEFAULT_MIN_COOCCURRENCE, DEFAULT_STEPS};
use crate::model::{CnnConfig, FusionMode, ModelConfig, SabConfig};
use crate::tokenizer::VocabMode;
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

impl Entry {
    /// `section.key`, or the bare key for the unnamed section.
    pub fn qualified(&self) -> String {
        if self.section.is_empty() {
            self.key.clone()
        } else {
            format!("{}.{}", self.section, self.key)
        }
    }

    pub fn parse<T: FromStr>(&self) -> Result<T> {
        self.value.parse().map_err(|_| {
            VampError::Config(format!(
                "line {}: invalid value {:?} for key {}",
                self.line,
                self.value,
                self.qualified()
            ))
        })
    }

    pub fn unknown(&self) -> VampError {
        VampError::Config(format!("line {}: unknown key {}", self.line, self.qualified()))
    }
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut section = String::new();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(name) = s.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| VampError::Config(format!("line {line}: unterminated section header")))?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| VampError::Config(format!("line {line}: expected key = value")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(VampError::Config(format!("line {line}: empty key")));
        }
        out.push(Entry {
            section: section.clone(),
            key: key.to_string(),
            value: v.trim().to_string(),
            line,
        });
    }
    Ok(out)
}

/// Comma-separated list value.
pub fn parse_list<T: FromStr>(e: &Entry) -> Result<Vec<T>> {
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|_| {
                VampError::Config(format!("line {}: invalid list item {s:?} for key {}", e.line, e.qualified()))
            })
        })
        .collect()
}


/// Every tunable of a run, with defaults, loadable from a config file and
/// echoed into checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub sab: SabConfig,
    pub cnn: CnnConfig,
    pub path2: bool,
    pub fusion: FusionMode,
    pub vocab: VocabMode,
    pub train: TrainConfig,
    /// Random-search trials; 0 trains the configured model directly.
    pub search_budget: usize,
    pub mlp: MlpConfig,
    pub cnn_baseline: CnnBaselineConfig,
    pub chi2_alpha: f64,
    pub explain: ExplainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExplainConfig {
    pub ig_steps: usize,
    pub min_cooccurrence: usize,
    pub layer: usize,
    pub top_k: usize,
    /// `None` uses the 75th percentile of the positive weights.
    pub edge_threshold: Option<f64>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            ig_steps: DEFAULT_STEPS,
            min_cooccurrence: DEFAULT_MIN_COOCCURRENCE,
            layer: 0,
            top_k: 10,
            edge_threshold: None,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sab: SabConfig::default(),
            cnn: CnnConfig::default(),
            path2: true,
            fusion: FusionMode::Amplification,
            vocab: VocabMode::Static,
            train: TrainConfig::default(),
            search_budget: 0,
            mlp: MlpConfig::default(),
            cnn_baseline: CnnBaselineConfig::default(),
            chi2_alpha: 0.001,
            explain: ExplainConfig::default(),
        }
    }
}

fn parse_bool(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(VampError::Config(format!(
            "line {}: {} expects true or false, got {:?}",
            e.line,
            e.qualified(),
            e.value
        ))),
    }
}

fn join<T: std::fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for e in parse_entries(text)? {
            c.set(&e)?;
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, e: &Entry) -> Result<()> {
        match (e.section.as_str(), e.key.as_str()) {
            ("model", "emb_dim") => self.sab.emb_dim = e.parse()?,
            ("model", "hidden_dim") => self.sab.hidden_dim = e.parse()?,
            ("model", "num_layers") => self.sab.num_layers = e.parse()?,
            ("model", "num_heads") => self.sab.num_heads = e.parse()?,
            ("model", "dropout") => self.sab.dropout = e.parse()?,
            ("model", "activation") => self.sab.activation = e.parse()?,
            ("model", "masked") => self.sab.masked = parse_bool(e)?,
            ("model", "ln_eps") => self.sab.ln_eps = e.parse()?,
            ("model", "conv_layers") => self.cnn.conv_layers = e.parse()?,
            ("model", "kernel") => self.cnn.kernel = e.parse()?,
            ("model", "channels") => self.cnn.channels = e.parse()?,
            ("model", "cnn_activation") => self.cnn.activation = e.parse()?,
            ("model", "cnn_dropout") => self.cnn.dropout = e.parse()?,
            ("model", "path2") => self.path2 = parse_bool(e)?,
            ("model", "fusion") => self.fusion = e.parse()?,
            ("model", "vocab") => self.vocab = e.parse()?,
            ("train", "learning_rate") => self.train.learning_rate = e.parse()?,
            ("train", "batch_size") => self.train.batch_size = e.parse()?,
            ("train", "max_epochs") => self.train.max_epochs = e.parse()?,
            ("train", "patience") => self.train.patience = e.parse()?,
            ("train", "class_weights") => {
                self.train.class_weights = if e.value == "auto" {
                    None
                } else {
                    let w: Vec<f64> = parse_list(e)?;
                    if w.len() != 2 {
                        return Err(VampError::Config(format!("{} needs two weights", e.qualified())));
                    }
                    Some([w[0], w[1]])
                }
            }
            ("train", "augment") => self.train.augment = parse_bool(e)?,
            ("train", "split") => {
                let f: Vec<f64> = parse_list(e)?;
                if f.len() != 3 {
                    return Err(VampError::Config(format!("{} needs three fractions", e.qualified())));
                }
                self.train.split = [f[0], f[1], f[2]];
            }
            ("train", "optimizer") => self.train.optimizer = e.parse()?,
            ("search", "budget") => self.search_budget = e.parse()?,
            ("mlp", "hidden") => self.mlp.hidden = parse_list(e)?,
            ("mlp", "dropout") => self.mlp.dropout = e.parse()?,
            ("mlp", "activation") => self.mlp.activation = e.parse()?,
            ("cnn_baseline", "filters") => self.cnn_baseline.filters = parse_list(e)?,
            ("cnn_baseline", "kernels") => self.cnn_baseline.kernels = parse_list(e)?,
            ("cnn_baseline", "pools") => self.cnn_baseline.pools = parse_list(e)?,
            ("cnn_baseline", "activation") => self.cnn_baseline.activation = e.parse()?,
            ("cnn_baseline", "dropout") => self.cnn_baseline.dropout = e.parse()?,
            ("baseline", "chi2_alpha") => self.chi2_alpha = e.parse()?,
            ("explain", "ig_steps") => self.explain.ig_steps = e.parse()?,
            ("explain", "min_cooccurrence") => self.explain.min_cooccurrence = e.parse()?,
            ("explain", "layer") => self.explain.layer = e.parse()?,
            ("explain", "top_k") => self.explain.top_k = e.parse()?,
            ("explain", "edge_threshold") => {
                self.explain.edge_threshold = if e.value == "auto" { None } else { Some(e.parse()?) }
            }
            _ => return Err(e.unknown()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.sab.validate()?;
        self.cnn.validate()?;
        self.train.validate()?;
        if !(self.chi2_alpha > 0.0 && self.chi2_alpha <= 1.0) {
            return Err(VampError::Config(format!("baseline.chi2_alpha {} outside (0,1]", self.chi2_alpha)));
        }
        if self.explain.ig_steps == 0 {
            return Err(VampError::Config("explain.ig_steps must be >= 1".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let s = &self.sab;
        let c = &self.cnn;
        let t = &self.train;
        let weights = t
            .class_weights
            .map_or_else(|| "auto".to_string(), |w| format!("{},{}", w[0], w[1]));
        format!(
            "[model]\nemb_dim = {}\nhidden_dim = {}\nnum_layers = {}\nnum_heads = {}\ndropout = {}\n\
             activation = {}\nmasked = {}\nln_eps = {}\nconv_layers = {}\nkernel = {}\nchannels = {}\n\
             cnn_activation = {}\ncnn_dropout = {}\npath2 = {}\nfusion = {}\nvocab = {}\n\n\
             [train]\nlearning_rate = {}\nbatch_size = {}\nmax_epochs = {}\npatience = {}\nclass_weights = {}\n\
             augment = {}\nsplit = {}\noptimizer = {}\n\n[search]\nbudget = {}\n\n\
             [mlp]\nhidden = {}\ndropout = {}\nactivation = {}\n\n\
             [cnn_baseline]\nfilters = {}\nkernels = {}\npools = {}\nactivation = {}\ndropout = {}\n\n\
             [baseline]\nchi2_alpha = {}\n\n\
             [explain]\nig_steps = {}\nmin_cooccurrence = {}\nlayer = {}\ntop_k = {}\nedge_threshold = {}\n",
            s.emb_dim,
            s.hidden_dim,
            s.num_layers,
            s.num_heads,
            s.dropout,
            s.activation,
            s.masked,
            s.ln_eps,
            c.conv_layers,
            c.kernel,
            c.channels,
            c.activation,
            c.dropout,
            self.path2,
            self.fusion,
            self.vocab,
            t.learning_rate,
            t.batch_size,
            t.max_epochs,
            t.patience,
            weights,
            t.augment,
            join(&t.split),
            t.optimizer,
            self.search_budget,
            join(&self.mlp.hidden),
            self.mlp.dropout,
            self.mlp.activation,
            join(&self.cnn_baseline.filters),
            join(&self.cnn_baseline.kernels),
            join(&self.cnn_baseline.pools),
            self.cnn_baseline.activation,
            self.cnn_baseline.dropout,
            self.chi2_alpha,
            self.explain.ig_steps,
            self.explain.min_cooccurrence,
            self.explain.layer,
            self.explain.top_k,
            self.explain
                .edge_threshold
                .map_or_else(|| "auto".to_string(), |v| v.to_string()),
        )
    }

    /// Model configuration for a cohort with the given vocabulary and length.
    pub fn model_config(&self, vocab_size: usize, max_len: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            max_len,
            sab: self.sab.clone(),
            cnn: self.path2.then(|| self.cnn.clone()),
            fusion: self.fusion,
        }
    }
}
