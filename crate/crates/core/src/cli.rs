//! Command-line front end. Every subcommand is a plain function over parsed
//! arguments so tests can drive it without spawning a process.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::baselines::{chi2_select, selected_tsv, CnnBaseline, MlpBaseline, PresenceMatrix, PresenceRow};
use crate::batch::{encode_cohort, EncodedSample};
use crate::checkpoint::{AnyModel, Checkpoint, ModelKind};
use crate::cohort::{assemble_sample, parse_phenotypes, Cohort, CohortStats, PhenotypeQuality};
use crate::config::RunConfig;
use crate::error::{Result, VampError};
use crate::explain::{
    ablation_csv, ablation_report, aggregate_attributions, communities_csv, default_edge_threshold,
    detect_hubs, extract_interactions, greedy_modularity, hubs_csv, integrated_gradients, SampleAttribution,
};
use crate::model::{FusionMode, VampNet};
use crate::pipeline::prepare;
use crate::synth::{generate, SyntheticSpec};
use crate::tokenizer::VocabMode;
use crate::train::{
    curves_csv, evaluate, random_search, stratified_split, train, MetricsReport, SearchSpace, Split, Trainable,
    TrainOutcome,
};
use crate::vcf::extract_sample;

#[derive(Debug, Parser)]
#[command(name = "vampnet", version, about = "Drug-resistance prediction from variant sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a cohort file from a directory of per-sample VCFs.
    Ingest(IngestArgs),
    /// Train a set model or a presence-matrix baseline.
    Train(TrainArgs),
    /// Attribution, ablation and interaction analyses of a trained set model.
    Explain(ExplainArgs),
    /// Generate a synthetic cohort with planted causal variants.
    Synth(SynthArgs),
    /// Collect test metrics of several training runs into one table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub vcf_dir: PathBuf,
    #[arg(long)]
    pub phenotypes: PathBuf,
    #[arg(long)]
    pub drug: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Apply these normalisation bounds instead of fitting new ones.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Where fitted bounds are written (default: <out>.norm).
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Vampnet,
    Mlp,
    Cnn,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Vampnet => ModelKind::VampNet,
            ModelArg::Mlp => ModelKind::Mlp,
            ModelArg::Cnn => ModelKind::Cnn,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long, value_enum, default_value = "vampnet")]
    pub model: ModelArg,
    #[arg(long)]
    pub fusion: Option<FusionMode>,
    #[arg(long)]
    pub masked: Option<bool>,
    #[arg(long)]
    pub augment: Option<bool>,
    /// Drop the quality path and classify from the set representation alone.
    #[arg(long)]
    pub no_path2: bool,
    #[arg(long)]
    pub chi2_alpha: Option<f64>,
    #[arg(long)]
    pub vocab: Option<VocabMode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Random-search trials before the final fit (set model only).
    #[arg(long)]
    pub search_budget: Option<usize>,
    #[arg(long)]
    pub seed: u64,
    /// Output directory for checkpoint, curves and metrics.
    #[arg(long)]
    pub out: PathBuf,
    /// Configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExplainMode {
    Ig,
    Ablate,
    Interactions,
    Communities,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    All,
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub cohort: PathBuf,
    #[arg(long, value_enum)]
    pub mode: ExplainMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Samples to analyse; splits are recomputed from the checkpoint seed.
    #[arg(long, value_enum, default_value = "all")]
    pub split: SplitArg,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Ledger CSV (default: <out>.ledger.csv).
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parse `args` and run; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Ingest(a) => ingest(&a).map(|s| print!("{s}")),
        Command::Train(a) => train_cmd(&a).map(|s| print!("{s}")),
        Command::Explain(a) => explain_cmd(&a),
        Command::Synth(a) => synth_cmd(&a).map(|s| print!("{s}")),
        Command::Report(a) => report_cmd(&a),
    }
}

/// Worker count from `VAMPNET_THREADS`, default 1.
pub fn thread_count() -> usize {
    std::env::var("VAMPNET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| VampError::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| VampError::io(path, e))
}

fn with_suffix(p: &Path, suffix: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

// ---- ingest

pub fn ingest(a: &IngestArgs) -> Result<String> {
    let phenos = parse_phenotypes(&read(&a.phenotypes)?)?;
    let mut table: BTreeMap<&str, (u8, PhenotypeQuality)> = BTreeMap::new();
    for p in phenos.iter().filter(|p| p.drug == a.drug) {
        if table.insert(p.sample_id.as_str(), (p.label, p.quality)).is_some() {
            return Err(VampError::Contract(format!(
                "sample {} has two {} phenotypes",
                p.sample_id, a.drug
            )));
        }
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&a.vcf_dir)
        .map_err(|e| VampError::io(&a.vcf_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "vcf"))
        .collect();
    files.sort();

    let (mut low, mut missing, mut empty) = (0usize, 0usize, 0usize);
    let mut kept = Vec::new();
    for f in &files {
        let id = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let Some(&(label, quality)) = table.get(id.as_str()) else {
            warn!("{id}: no {} phenotype, sample skipped", a.drug);
            missing += 1;
            continue;
        };
        if quality == PhenotypeQuality::Low {
            low += 1;
            continue;
        }
        let ex = extract_sample(&read(f)?).map_err(|e| match e {
            VampError::Parse { line, msg } => VampError::parse(line, format!("{}: {msg}", f.display())),
            other => other,
        })?;
        if ex.tokens.is_empty() {
            warn!("{id}: no PASS variants");
            empty += 1;
        }
        kept.push((id, ex, label));
    }

    let stats = match &a.stats {
        Some(p) => CohortStats::from_text(&read(p)?)?,
        None => {
            let s = CohortStats::fit(kept.iter().map(|(_, ex, l)| (ex.raw_features.as_slice(), *l)))?;
            let path = a.stats_out.clone().unwrap_or_else(|| with_suffix(&a.out, ".norm"));
            write(&path, &s.to_text())?;
            s
        }
    };
    let mut samples = Vec::with_capacity(kept.len());
    for (id, ex, label) in kept {
        let feats = ex.raw_features.iter().map(|r| stats.apply(r)).collect();
        samples.push(assemble_sample(&id, ex.tokens, feats, label, &a.drug)?);
    }
    let cohort = Cohort::new(&a.drug, samples);
    cohort.write(&a.out)?;
    let [s, r] = cohort.class_counts();
    Ok(format!(
        "files\t{}\nkept\t{}\nresistant\t{r}\nsusceptible\t{s}\ndropped_low_quality\t{low}\n\
         dropped_missing_phenotype\t{missing}\nempty_samples\t{empty}\nunique_variants\t{}\n",
        files.len(),
        cohort.len(),
        cohort.token_document_counts().len()
    ))
}

// ---- train

/// Everything a finished training run produced.
pub struct RunOutput {
    pub checkpoint: Checkpoint,
    pub outcome: TrainOutcome,
    /// `(split name, metrics)` for every non-empty split.
    pub metrics: Vec<(&'static str, MetricsReport)>,
    pub selected: Option<String>,
}

impl RunOutput {
    pub fn metrics_csv(&self) -> String {
        let mut s = format!("{}\n", MetricsReport::CSV_HEADER);
        for (name, m) in &self.metrics {
            s.push_str(&m.csv_row(name));
            s.push('\n');
        }
        s
    }

    pub fn test(&self) -> Option<&MetricsReport> {
        self.metrics.iter().find(|(n, _)| *n == "test").map(|(_, m)| m)
    }
}

fn split_metrics<M: Trainable>(model: &M, parts: [&[M::Sample]; 3]) -> Result<Vec<(&'static str, MetricsReport)>> {
    let mut out = Vec::new();
    for (name, part) in ["train", "val", "test"].into_iter().zip(parts) {
        if !part.is_empty() {
            out.push((name, evaluate(model, part)?));
        }
    }
    Ok(out)
}

/// Merge a config file and flag overrides, rejecting flags that do not
/// apply to the chosen model.
pub fn resolve_config(a: &TrainArgs) -> Result<RunConfig> {
    let mut c = match &a.config {
        Some(p) => RunConfig::from_text(&read(p)?)?,
        None => RunConfig::default(),
    };
    let baseline = a.model != ModelArg::Vampnet;
    let bad = |flag: &str| -> Result<RunConfig> {
        Err(VampError::Usage(format!(
            "{flag} does not apply to --model {}",
            ModelKind::from(a.model)
        )))
    };
    if baseline {
        if a.fusion.is_some() {
            return bad("--fusion");
        }
        if a.masked.is_some() {
            return bad("--masked");
        }
        if a.augment.is_some() {
            return bad("--augment");
        }
        if a.no_path2 {
            return bad("--no-path2");
        }
        if a.vocab.is_some() {
            return bad("--vocab");
        }
        if a.search_budget.is_some() {
            return bad("--search-budget");
        }
    } else if a.chi2_alpha.is_some() {
        return bad("--chi2-alpha");
    }
    if a.no_path2 && a.fusion.is_some() {
        return Err(VampError::Usage("--fusion needs the quality path; drop --no-path2".into()));
    }
    if let Some(f) = a.fusion {
        c.fusion = f;
    }
    if let Some(m) = a.masked {
        c.sab.masked = m;
    }
    if let Some(x) = a.augment {
        c.train.augment = x;
    }
    if a.no_path2 {
        c.path2 = false;
    }
    if let Some(v) = a.vocab {
        c.vocab = v;
    }
    if let Some(x) = a.chi2_alpha {
        c.chi2_alpha = x;
    }
    if let Some(e) = a.epochs {
        c.train.max_epochs = e;
    }
    if let Some(lr) = a.lr {
        c.train.learning_rate = lr;
    }
    if let Some(b) = a.search_budget {
        c.search_budget = b;
    }
    c.train.seed = a.seed;
    c.validate()?;
    Ok(c)
}

/// Fit the set model on `cohort`, optionally after a random search over the
/// architecture.
pub fn fit_vampnet(cohort: &Cohort, config: &RunConfig, seed: u64) -> Result<RunOutput> {
    let prep = prepare(cohort, config.vocab, config.train.split, seed)?;
    let (tr, va, te) = (
        prep.part(&prep.split.train),
        prep.part(&prep.split.val),
        prep.part(&prep.split.test),
    );
    let mut config = config.clone();
    config.train.seed = seed;
    if config.search_budget > 0 {
        let base = config.clone();
        let result = random_search(&SearchSpace::default(), config.search_budget, seed, |t| {
            let mut c = base.clone();
            c.sab.emb_dim = t.emb_dim;
            c.sab.hidden_dim = t.hidden_dim;
            c.sab.num_layers = t.num_layers;
            c.sab.dropout = t.dropout;
            c.cnn.kernel = t.kernel;
            c.train.learning_rate = t.learning_rate;
            c.train.seed = t.seed;
            c.validate()?;
            let mut m = VampNet::new(c.model_config(prep.vocab.len(), prep.max_len), t.seed)?;
            train(&mut m, &tr, &va, &c.train)?;
            info!("trial {} seed {}", t.index, t.seed);
            Ok((evaluate(&m, &va)?, c))
        })?;
        config = result.best_trial().2.clone();
    }
    let model_seed = config.train.seed;
    let mut model = VampNet::new(config.model_config(prep.vocab.len(), prep.max_len), model_seed)?;
    let outcome = train(&mut model, &tr, &va, &config.train)?;
    let metrics = split_metrics(&model, [&tr, &va, &te])?;
    Ok(RunOutput {
        checkpoint: Checkpoint {
            seed: model_seed,
            config,
            model: AnyModel::VampNet(model),
            vocab: Some(prep.vocab),
            columns: vec![],
        },
        outcome,
        metrics,
        selected: None,
    })
}

/// Chi-squared selection on the training split, then a presence-matrix
/// MLP or CNN.
pub fn fit_baseline(cohort: &Cohort, config: &RunConfig, kind: ModelKind, seed: u64) -> Result<RunOutput> {
    let labels: Vec<u8> = cohort.samples.iter().map(|s| s.label).collect();
    let split = stratified_split(&labels, config.train.split, seed);
    let selected = chi2_select(&cohort.subset(&split.train), config.chi2_alpha)?;
    if selected.is_empty() {
        return Err(VampError::Contract(format!(
            "no variant passes the chi-squared test at alpha {}",
            config.chi2_alpha
        )));
    }
    info!("{} variants selected", selected.len());
    let columns: Vec<String> = selected.iter().map(|r| r.token.clone()).collect();
    let pm = PresenceMatrix::build(cohort, &columns)?;
    let part = |idx: &[usize]| -> Vec<PresenceRow> { idx.iter().map(|&i| pm.rows[i].clone()).collect() };
    let (tr, va, te) = (part(&split.train), part(&split.val), part(&split.test));
    let mut config = config.clone();
    config.train.seed = seed;
    let (model, outcome, metrics) = match kind {
        ModelKind::Mlp => {
            let mut m = MlpBaseline::new(config.mlp.clone(), pm.width(), seed)?;
            let o = train(&mut m, &tr, &va, &config.train)?;
            let metrics = split_metrics(&m, [&tr, &va, &te])?;
            (AnyModel::Mlp(m), o, metrics)
        }
        ModelKind::Cnn => {
            let mut m = CnnBaseline::new(config.cnn_baseline.clone(), pm.width(), seed)?;
            let o = train(&mut m, &tr, &va, &config.train)?;
            let metrics = split_metrics(&m, [&tr, &va, &te])?;
            (AnyModel::Cnn(m), o, metrics)
        }
        ModelKind::VampNet => return Err(VampError::Usage("set model is not a baseline".into())),
    };
    Ok(RunOutput {
        checkpoint: Checkpoint {
            seed,
            config,
            model,
            vocab: None,
            columns,
        },
        outcome,
        metrics,
        selected: Some(selected_tsv(&selected)),
    })
}

pub fn train_cmd(a: &TrainArgs) -> Result<String> {
    let config = resolve_config(a)?;
    let cohort = Cohort::read(&a.cohort)?;
    let out = match a.model {
        ModelArg::Vampnet => fit_vampnet(&cohort, &config, a.seed)?,
        m => fit_baseline(&cohort, &config, m.into(), a.seed)?,
    };
    fs::create_dir_all(&a.out).map_err(|e| VampError::io(&a.out, e))?;
    out.checkpoint.write(&a.out.join("checkpoint.txt"))?;
    write(&a.out.join("curves.csv"), &curves_csv(&out.outcome.curves))?;
    write(&a.out.join("metrics.csv"), &out.metrics_csv())?;
    write(&a.out.join("run.cfg"), &out.checkpoint.config.to_text())?;
    if let Some(sel) = &out.selected {
        write(&a.out.join("selected_variants.tsv"), sel)?;
    }
    let mut s = format!(
        "best_epoch\t{}\nepochs_run\t{}\n",
        out.outcome.best_epoch, out.outcome.epochs_run
    );
    for (name, m) in &out.metrics {
        let _ = writeln!(s, "{name}\t{m}");
    }
    Ok(s)
}

// ---- explain

fn split_indices(split: &Split, which: SplitArg, n: usize) -> Vec<usize> {
    match which {
        SplitArg::All => (0..n).collect(),
        SplitArg::Train => split.train.clone(),
        SplitArg::Val => split.val.clone(),
        SplitArg::Test => split.test.clone(),
    }
}

/// IG for every sample, spread over `threads` workers. Results keep sample
/// order whatever the thread count.
pub fn integrated_gradients_all(
    model: &VampNet,
    samples: &[EncodedSample],
    steps: usize,
    threads: usize,
) -> Result<Vec<SampleAttribution>> {
    let threads = threads.clamp(1, samples.len().max(1));
    if threads == 1 {
        return samples.iter().map(|s| integrated_gradients(model, s, steps)).collect();
    }
    let chunk = samples.len().div_ceil(threads);
    let parts: Vec<Result<Vec<SampleAttribution>>> = std::thread::scope(|sc| {
        let handles: Vec<_> = samples
            .chunks(chunk)
            .map(|c| sc.spawn(move || c.iter().map(|s| integrated_gradients(model, s, steps)).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(samples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

pub fn explain_cmd(a: &ExplainArgs) -> Result<()> {
    let ck = Checkpoint::read(&a.ckpt)?;
    let AnyModel::VampNet(model) = &ck.model else {
        return Err(VampError::Usage(format!(
            "--mode {} needs a set model checkpoint, got {}",
            a.mode.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default(),
            ck.model.kind()
        )));
    };
    let vocab = ck.vocab.as_ref().expect("set model checkpoints carry a vocabulary");
    let cohort = Cohort::read(&a.cohort)?;
    let labels: Vec<u8> = cohort.samples.iter().map(|s| s.label).collect();
    let split = stratified_split(&labels, ck.config.train.split, ck.seed);
    let idx = split_indices(&split, a.split, cohort.len());
    let cohort = cohort.subset(&idx);
    let samples = encode_cohort(vocab, &cohort);
    let names: Vec<Vec<&str>> = cohort
        .samples
        .iter()
        .map(|s| s.tokens.iter().map(|t| t.canonical()).collect())
        .collect();
    let ex = &ck.config.explain;
    fs::create_dir_all(&a.out).map_err(|e| VampError::io(&a.out, e))?;
    match a.mode {
        ExplainMode::Ig => {
            let steps = a.steps.unwrap_or(ex.ig_steps);
            if steps == 0 {
                return Err(VampError::Usage("--steps must be >= 1".into()));
            }
            let attrs = integrated_gradients_all(model, &samples, steps, thread_count())?;
            let mut comp = String::from("sample_id,f_input,f_baseline,attribution_sum,relative_error\n");
            for (s, at) in cohort.samples.iter().zip(&attrs) {
                let _ = writeln!(
                    comp,
                    "{},{},{},{},{}",
                    s.sample_id,
                    at.f_input,
                    at.f_baseline,
                    at.per_variant.iter().sum::<f64>(),
                    at.completeness_error()
                );
            }
            let pairs: Vec<(Vec<&str>, Vec<f64>)> = names
                .iter()
                .zip(attrs)
                .map(|(n, at)| (n.clone(), at.per_variant))
                .collect();
            write(&a.out.join("ig_attributions.csv"), &aggregate_attributions(&pairs, steps).to_csv())?;
            write(&a.out.join("ig_completeness.csv"), &comp)?;
        }
        ExplainMode::Ablate => {
            write(&a.out.join("channel_importance.csv"), &ablation_csv(&ablation_report(model, &samples)?))?;
        }
        ExplainMode::Interactions | ExplainMode::Communities => {
            let m = extract_interactions(model, &samples, &names, ex.min_cooccurrence, ex.layer)?;
            if a.mode == ExplainMode::Interactions {
                write(&a.out.join("interactions.tsv"), &m.to_tsv())?;
                write(&a.out.join("hubs.csv"), &hubs_csv(&detect_hubs(&m, ex.top_k)))?;
            } else {
                let thr = ex.edge_threshold.unwrap_or_else(|| default_edge_threshold(&m));
                let part = greedy_modularity(&m, thr);
                write(&a.out.join("communities.csv"), &communities_csv(&m, &part))?;
            }
        }
    }
    Ok(())
}

// ---- synth

pub fn synth_cmd(a: &SynthArgs) -> Result<String> {
    let mut spec = match &a.spec {
        Some(p) => SyntheticSpec::from_text(&read(p)?)?,
        None => SyntheticSpec::default(),
    };
    spec.seed = a.seed;
    spec.validate()?;
    let g = generate(&spec)?;
    let ledger = a.ledger.clone().unwrap_or_else(|| with_suffix(&a.out, ".ledger.csv"));
    g.write(&a.out, &ledger)?;
    let [s, r] = g.cohort.class_counts();
    Ok(format!("samples\t{}\nresistant\t{r}\nsusceptible\t{s}\n", g.cohort.len()))
}

// ---- report

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub run: String,
    pub kind: String,
    pub fusion: String,
    pub seed: String,
    pub test: Vec<String>,
    pub auc: Option<f64>,
}

fn header_field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .take(6)
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('\t')))
        .unwrap_or("")
}

/// One row per run directory holding a `metrics.csv` with a test row.
pub fn collect_runs(dir: &Path) -> Result<Vec<ReportRow>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| VampError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("metrics.csv").is_file())
        .collect();
    dirs.sort();
    let mut rows = Vec::new();
    for d in dirs {
        let metrics = read(&d.join("metrics.csv"))?;
        let Some(test) = metrics.lines().find(|l| l.starts_with("test,")) else {
            warn!("{}: no test metrics", d.display());
            continue;
        };
        let cols: Vec<String> = test.split(',').skip(1).map(str::to_string).collect();
        let ck = fs::read_to_string(d.join("checkpoint.txt")).unwrap_or_default();
        rows.push(ReportRow {
            run: d.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
            kind: header_field(&ck, "kind").to_string(),
            fusion: header_field(&ck, "fusion").to_string(),
            seed: header_field(&ck, "seed").to_string(),
            auc: cols.get(5).and_then(|v| v.parse().ok()),
            test: cols,
        });
    }
    // best AUC first, undefined last, ties by name
    rows.sort_by(|x, y| {
        y.auc
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&x.auc.unwrap_or(f64::NEG_INFINITY))
            .then_with(|| x.run.cmp(&y.run))
    });
    Ok(rows)
}

pub fn report_cmd(a: &ReportArgs) -> Result<()> {
    let rows = collect_runs(&a.runs)?;
    if rows.is_empty() {
        write(&a.out, "")?;
        return Err(VampError::Contract(format!("no runs with test metrics under {}", a.runs.display())));
    }
    let mut s = String::from("run,model,fusion,seed,accuracy,balanced_accuracy,precision,recall,f1,auc,n\n");
    for r in &rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.run, r.kind, r.fusion, r.seed, r.test.join(","));
    }
    write(&a.out, &s)
}
