//! Stage-on-disk pipeline. Every command reads earlier artifacts from a
//! work directory and writes its own stage directory, including a
//! `manifest.json` describing the run.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::analyses::{
    adrf_estimate, assemble_lag_dataset, binary_growth_prediction, build_treatment_dataset, feature_summary, labeled_words,
    pos_feature_prediction, pos_matched_comparison, read_pos_tags, relative_importance_analysis, write_accuracy_csv, AdrfOptions,
    FeatureSet, Panel, PredictionOptions, DL, DS, DT, DU, PREDICTOR_KEYS,
};
use crate::counts::{accumulate_counts, CountTables};
use crate::dissemination::{compute_dissemination, Dissemination};
use crate::ingest::{
    build_vocabulary, ingest_sharded, ExclusionLists, IngestSettings, IngestStats, MonthWindow, NormalizationRules, NormalizedComment,
    Vocabulary,
};
use crate::numstats::BootstrapOptions;
use crate::survival::{assemble_survival_records, cox_fit, deviance_test, survival_cv, CoxOptions};
use crate::synthgen::{write_corpus, SynthConfig};
use crate::wordsets::{apply_annotations, detect_candidates, read_labels_tsv, read_word_list, write_labels_tsv, DetectionConfig, Label, WordLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Command {
    Ingest,
    Count,
    Disseminate,
    Detect,
    AnalyzeCorrelation,
    AnalyzeCausal,
    AnalyzePredict,
    AnalyzeSurvival,
    Synth,
    Report,
}

impl Command {
    pub const ALL: [Command; 10] = [
        Command::Ingest,
        Command::Count,
        Command::Disseminate,
        Command::Detect,
        Command::AnalyzeCorrelation,
        Command::AnalyzeCausal,
        Command::AnalyzePredict,
        Command::AnalyzeSurvival,
        Command::Synth,
        Command::Report,
    ];

    /// Corpus stages and analyses in dependency order (without `synth`).
    pub const PIPELINE: [Command; 9] = [
        Command::Ingest,
        Command::Count,
        Command::Disseminate,
        Command::Detect,
        Command::AnalyzeCorrelation,
        Command::AnalyzeCausal,
        Command::AnalyzePredict,
        Command::AnalyzeSurvival,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Count => "count",
            Command::Disseminate => "disseminate",
            Command::Detect => "detect",
            Command::AnalyzeCorrelation => "analyze-correlation",
            Command::AnalyzeCausal => "analyze-causal",
            Command::AnalyzePredict => "analyze-predict",
            Command::AnalyzeSurvival => "analyze-survival",
            Command::Synth => "synth",
            Command::Report => "report",
        }
    }

    /// Directory (under the work directory) owned by this command.
    pub fn stage_dir(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Count => "counts",
            Command::Disseminate => "dissemination",
            Command::Detect => "detect",
            Command::AnalyzeCorrelation => "correlation",
            Command::AnalyzeCausal => "causal",
            Command::AnalyzePredict => "predict",
            Command::AnalyzeSurvival => "survival",
            Command::Synth => "synth",
            Command::Report => "report",
        }
    }

    fn stochastic(self) -> bool {
        matches!(
            self,
            Command::AnalyzeCorrelation | Command::AnalyzeCausal | Command::AnalyzePredict | Command::AnalyzeSurvival | Command::Synth
        )
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, PipelineError> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| PipelineError::config("command", format!("unknown command {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub workdir: PathBuf,
    /// Comment dump, one JSON record per line.
    pub input: Option<PathBuf>,
    pub bots: Option<PathBuf>,
    pub excluded_subreddits: Option<PathBuf>,
    pub allowlist: Option<PathBuf>,
    pub denylist: Option<PathBuf>,
    /// Labels for the analyses; defaults to the detect stage's output.
    pub labels: Option<PathBuf>,
    pub pos: Option<PathBuf>,
    pub synth_config: Option<PathBuf>,
    /// `YYYY-MM`
    pub start: String,
    pub months: u32,
    pub vocab_size: usize,
    pub repeat_cap: usize,
    pub shards: usize,
    /// Smallest monthly count for a word to enter the Heaps fit.
    pub min_count: u64,
    pub growth_percentile: f64,
    pub piecewise_percentile: f64,
    pub logistic_percentile: f64,
    pub lags: Vec<usize>,
    pub causal_k: usize,
    pub pos_k: usize,
    pub predict_k_max: usize,
    pub survival_k: usize,
    pub folds: usize,
    pub bootstrap_iters: usize,
    pub adrf_boot: usize,
    pub quantiles: usize,
    pub seed: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let det = DetectionConfig::default();
        Self {
            workdir: PathBuf::from("work"),
            input: None,
            bots: None,
            excluded_subreddits: None,
            allowlist: None,
            denylist: None,
            labels: None,
            pos: None,
            synth_config: None,
            start: "2013-06".to_string(),
            months: 36,
            vocab_size: 100_000,
            repeat_cap: 3,
            shards: 1,
            min_count: 1,
            growth_percentile: det.growth_pct,
            piecewise_percentile: det.piecewise_pct,
            logistic_percentile: det.logistic_pct,
            lags: vec![12, 24],
            causal_k: 1,
            pos_k: 12,
            predict_k_max: 12,
            survival_k: 3,
            folds: 10,
            bootstrap_iters: 100,
            adrf_boot: 100,
            quantiles: 10,
            seed: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config field `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("missing artifact {}; run `{producer}` first", path.display())]
    MissingArtifact { path: PathBuf, producer: String },
    #[error("work directory is locked by another command ({}); remove it if no command is running", .0.display())]
    Locked(PathBuf),
    #[error(transparent)]
    Core(#[from] crate::Error),
}

macro_rules! via_core {
    ($($t:ty),*) => {$(
        impl From<$t> for PipelineError {
            fn from(e: $t) -> Self {
                PipelineError::Core(e.into())
            }
        }
    )*};
}

via_core!(std::io::Error, serde_json::Error, csv::Error);

impl PipelineError {
    fn config(field: &str, reason: impl Into<String>) -> Self {
        PipelineError::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// 2 config error, 3 missing dependency artifact, 4 numerical failure,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config { .. } | PipelineError::Locked(_) => 2,
            PipelineError::MissingArtifact { .. } => 3,
            PipelineError::Core(crate::Error::Numerical(_) | crate::Error::RankDeficient { .. }) => 4,
            PipelineError::Core(_) => 1,
        }
    }
}

type PResult<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub command: Command,
    /// Inputs, configuration and outputs matched the last manifest.
    pub up_to_date: bool,
    pub outputs: Vec<PathBuf>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub duration_ms: u128,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lexdiss.lock";

pub fn manifest_path(workdir: &Path, command: Command) -> PathBuf {
    workdir.join(command.stage_dir()).join(MANIFEST_FILE)
}

fn sha256_file(path: &Path) -> PResult<String> {
    let mut f = File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

struct Lock(PathBuf);

impl Lock {
    fn acquire(workdir: &Path) -> PResult<Self> {
        let path = workdir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Lock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path)),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Paths of the artifacts each stage reads and writes.
struct Layout {
    root: PathBuf,
}

impl Layout {
    fn dir(&self, c: Command) -> PathBuf {
        self.root.join(c.stage_dir())
    }
    fn comments(&self) -> PathBuf {
        self.dir(Command::Ingest).join("comments.tsv")
    }
    fn vocab(&self) -> PathBuf {
        self.dir(Command::Ingest).join("vocab.tsv")
    }
    fn ingest_meta(&self) -> PathBuf {
        self.dir(Command::Ingest).join("stats.json")
    }
    fn count_files(&self) -> Vec<PathBuf> {
        CountTables::file_names().iter().map(|f| self.dir(Command::Count).join(f)).collect()
    }
    fn dissemination_files(&self) -> Vec<PathBuf> {
        Dissemination::file_names().iter().map(|f| self.dir(Command::Disseminate).join(f)).collect()
    }
    fn detected_labels(&self) -> PathBuf {
        self.dir(Command::Detect).join("labels.tsv")
    }
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

fn producer_of(layout: &Layout, p: &Path) -> String {
    Command::ALL
        .into_iter()
        .find(|c| p.starts_with(layout.dir(*c)))
        .map_or_else(|| "the step that creates it".to_string(), |c| c.name().to_string())
}

fn require(layout: &Layout, paths: &[PathBuf]) -> PResult<()> {
    for p in paths {
        if !p.is_file() {
            return Err(PipelineError::MissingArtifact {
                path: p.clone(),
                producer: producer_of(layout, p),
            });
        }
    }
    Ok(())
}

fn check_path(field: &str, p: &Option<PathBuf>) -> PResult<()> {
    match p {
        Some(p) if !p.is_file() => Err(PipelineError::config(field, format!("{} does not exist", p.display()))),
        _ => Ok(()),
    }
}

fn check_pct(field: &str, v: f64) -> PResult<()> {
    if (0.0..=100.0).contains(&v) {
        Ok(())
    } else {
        Err(PipelineError::config(field, format!("{v} is not a percentile in [0, 100]")))
    }
}

fn check_min(field: &str, v: usize, min: usize) -> PResult<()> {
    if v >= min {
        Ok(())
    } else {
        Err(PipelineError::config(field, format!("must be at least {min}, got {v}")))
    }
}

impl PipelineConfig {
    pub fn window(&self) -> PResult<MonthWindow> {
        MonthWindow::parse_start(&self.start, self.months).map_err(|e| PipelineError::config("start", e.to_string()))
    }

    /// Checks the fields `command` relies on.
    pub fn validate(&self, command: Command) -> PResult<()> {
        for (field, p) in [
            ("input", &self.input),
            ("bots", &self.bots),
            ("excluded_subreddits", &self.excluded_subreddits),
            ("allowlist", &self.allowlist),
            ("denylist", &self.denylist),
            ("labels", &self.labels),
            ("pos", &self.pos),
            ("synth_config", &self.synth_config),
        ] {
            check_path(field, p)?;
        }
        if command.stochastic() && self.seed.is_none() {
            return Err(PipelineError::config("seed", format!("`{command}` is stochastic and needs an explicit seed")));
        }
        check_min("shards", self.shards, 1)?;
        match command {
            Command::Ingest => {
                if self.input.is_none() {
                    return Err(PipelineError::config("input", "ingest needs an input file"));
                }
                self.window()?;
                check_min("months", self.months as usize, 1)?;
                check_min("vocab_size", self.vocab_size, 1)?;
                check_min("repeat_cap", self.repeat_cap, 1)?;
            }
            Command::Detect => {
                check_pct("growth_percentile", self.growth_percentile)?;
                check_pct("piecewise_percentile", self.piecewise_percentile)?;
                check_pct("logistic_percentile", self.logistic_percentile)?;
            }
            Command::AnalyzeCorrelation => {
                if self.lags.is_empty() {
                    return Err(PipelineError::config("lags", "at least one lag is needed"));
                }
                for &k in &self.lags {
                    check_min("lags", k, 1)?;
                }
                check_min("bootstrap_iters", self.bootstrap_iters, 1)?;
            }
            Command::AnalyzeCausal => {
                check_min("causal_k", self.causal_k, 1)?;
                check_min("adrf_boot", self.adrf_boot, 1)?;
                check_min("quantiles", self.quantiles, 1)?;
            }
            Command::AnalyzePredict => {
                check_min("predict_k_max", self.predict_k_max, 1)?;
                check_min("pos_k", self.pos_k, 1)?;
                check_min("folds", self.folds, 2)?;
            }
            Command::AnalyzeSurvival => {
                check_min("survival_k", self.survival_k, 1)?;
                check_min("folds", self.folds, 2)?;
            }
            Command::Count | Command::Disseminate | Command::Synth | Command::Report => {}
        }
        Ok(())
    }

    /// Digest of everything except the work directory and shard count,
    /// neither of which may change any artifact.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Value::Object(m) = &mut v {
            m.remove("workdir");
            m.remove("shards");
        }
        hex::encode(Sha256::digest(v.to_string().as_bytes()))
    }

    fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }
}

/// Runs one command against the configured work directory.
pub fn run(command: Command, cfg: &PipelineConfig) -> PResult<RunSummary> {
    cfg.validate(command)?;
    fs::create_dir_all(&cfg.workdir)?;
    let layout = Layout { root: cfg.workdir.clone() };
    let inputs = stage_inputs(command, cfg, &layout);
    if command != Command::Report {
        require(&layout, &inputs)?;
    }
    let _lock = Lock::acquire(&cfg.workdir)?;
    let started = Instant::now();
    let config_hash = cfg.hash();
    let mut input_digests = BTreeMap::new();
    for p in inputs.iter().filter(|p| p.is_file()) {
        input_digests.insert(rel(&layout.root, p), sha256_file(p)?);
    }
    let mpath = manifest_path(&layout.root, command);
    if let Some(old) = fs::read(&mpath).ok().and_then(|b| serde_json::from_slice::<Manifest>(&b).ok()) {
        if old.config_hash == config_hash && old.inputs == input_digests && outputs_match(&layout.root, &old.outputs) {
            return Ok(RunSummary {
                command,
                up_to_date: true,
                outputs: old.outputs.keys().map(|k| layout.root.join(k)).collect(),
                notes: vec!["inputs and configuration unchanged; nothing to do".to_string()],
            });
        }
    }
    let stage = layout.dir(command);
    if stage.exists() {
        fs::remove_dir_all(&stage)?;
    }
    fs::create_dir_all(&stage)?;
    let (outputs, notes) = match command {
        Command::Ingest => run_ingest(cfg, &layout)?,
        Command::Count => run_count(cfg, &layout)?,
        Command::Disseminate => run_disseminate(cfg, &layout)?,
        Command::Detect => run_detect(cfg, &layout)?,
        Command::AnalyzeCorrelation => run_correlation(cfg, &layout)?,
        Command::AnalyzeCausal => run_causal(cfg, &layout)?,
        Command::AnalyzePredict => run_predict(cfg, &layout)?,
        Command::AnalyzeSurvival => run_survival(cfg, &layout)?,
        Command::Synth => run_synth(cfg, &layout)?,
        Command::Report => run_report(&layout)?,
    };
    let mut output_digests = BTreeMap::new();
    for p in &outputs {
        output_digests.insert(rel(&layout.root, p), sha256_file(p)?);
    }
    let manifest = Manifest {
        command: command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        seed: cfg.seed,
        inputs: input_digests,
        outputs: output_digests,
        duration_ms: started.elapsed().as_millis(),
    };
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(RunSummary {
        command,
        up_to_date: false,
        outputs,
        notes,
    })
}

fn outputs_match(root: &Path, outputs: &BTreeMap<String, String>) -> bool {
    outputs
        .iter()
        .all(|(p, digest)| sha256_file(&root.join(p)).map(|d| &d == digest).unwrap_or(false))
}

fn labels_path(cfg: &PipelineConfig, layout: &Layout) -> PathBuf {
    cfg.labels.clone().unwrap_or_else(|| layout.detected_labels())
}

fn panel_inputs(cfg: &PipelineConfig, layout: &Layout) -> Vec<PathBuf> {
    let mut v = layout.count_files();
    v.extend(layout.dissemination_files());
    v.push(labels_path(cfg, layout));
    v
}

fn stage_inputs(command: Command, cfg: &PipelineConfig, layout: &Layout) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = match command {
        Command::Ingest => [&cfg.input, &cfg.bots, &cfg.excluded_subreddits].into_iter().flatten().cloned().collect(),
        Command::Count => vec![layout.comments(), layout.vocab(), layout.ingest_meta()],
        Command::Disseminate => layout.count_files(),
        Command::Detect => {
            let mut v = layout.count_files();
            v.extend([&cfg.allowlist, &cfg.denylist].into_iter().flatten().cloned());
            v
        }
        Command::AnalyzeCorrelation | Command::AnalyzeCausal | Command::AnalyzeSurvival => panel_inputs(cfg, layout),
        Command::AnalyzePredict => {
            let mut v = panel_inputs(cfg, layout);
            v.extend(cfg.pos.iter().cloned());
            v
        }
        Command::Synth => cfg.synth_config.iter().cloned().collect(),
        Command::Report => report_sources(layout).into_iter().map(|(_, p)| p).collect(),
    };
    v.dedup();
    v
}

type StageOutput = (Vec<PathBuf>, Vec<String>);

fn read_lines(path: &Path) -> PResult<Vec<String>> {
    let f = BufReader::new(File::open(path)?);
    Ok(f.lines().collect::<std::io::Result<Vec<_>>>()?)
}

#[derive(Serialize, Deserialize)]
struct IngestMeta {
    window: MonthWindow,
    stats: IngestStats,
}

fn run_ingest(cfg: &PipelineConfig, layout: &Layout) -> PResult<StageOutput> {
    let input = cfg.input.as_ref().expect("validated");
    let settings = IngestSettings {
        window: cfg.window()?,
        rules: NormalizationRules { repeat_cap: cfg.repeat_cap },
        exclusions: ExclusionLists::load(cfg.bots.as_deref(), cfg.excluded_subreddits.as_deref())?,
    };
    let lines = read_lines(input)?;
    let out = ingest_sharded(&lines, cfg.shards, &settings);
    if out.word_counts.is_empty() {
        return Err(crate::Error::invalid(format!("no comments in {} fall inside {}", input.display(), settings.window)).into());
    }
    let vocab = build_vocabulary(&out.word_counts, cfg.vocab_size)?;
    let mut w = BufWriter::new(File::create(layout.comments())?);
    for c in &out.comments {
        writeln!(w, "{}", c.to_tsv_line())?;
    }
    w.flush()?;
    let mut vw = BufWriter::new(File::create(layout.vocab())?);
    vocab.write_tsv(&mut vw)?;
    vw.flush()?;
    let meta = IngestMeta {
        window: settings.window,
        stats: out.stats.clone(),
    };
    fs::write(layout.ingest_meta(), serde_json::to_string_pretty(&meta)? + "\n")?;
    let s = &out.stats;
    let notes = vec![format!(
        "{} lines: {} kept, {} malformed, {} out of window, {} bot, {} excluded subreddit; vocabulary {}",
        s.lines,
        s.kept,
        s.malformed,
        s.out_of_window,
        s.filtered_bot,
        s.filtered_subreddit,
        vocab.len()
    )];
    Ok((vec![layout.comments(), layout.vocab(), layout.ingest_meta()], notes))
}

fn run_count(cfg: &PipelineConfig, layout: &Layout) -> PResult<StageOutput> {
    let meta: IngestMeta = serde_json::from_slice(&fs::read(layout.ingest_meta())?)?;
    let vocab = Vocabulary::read_tsv(&layout.vocab())?;
    let path = layout.comments();
    let comments = read_lines(&path)?
        .iter()
        .enumerate()
        .map(|(i, l)| NormalizedComment::from_tsv_line(l).ok_or_else(|| crate::Error::Format {
            path: path.clone(),
            reason: format!("line {} is not a normalized comment", i + 1),
        }))
        .collect::<crate::Result<Vec<_>>>()?;
    let tables = accumulate_counts(&comments, &vocab, meta.window.months as usize, cfg.shards)?;
    tables.write_csv(&layout.dir(Command::Count))?;
    Ok((layout.count_files(), vec![format!("{} words x {} months", tables.frequency.words.len(), tables.frequency.months())]))
}

fn run_disseminate(cfg: &PipelineConfig, layout: &Layout) -> PResult<StageOutput> {
    let tables = CountTables::read_csv(&layout.dir(Command::Count))?;
    let d = compute_dissemination(&tables, cfg.min_count)?;
    d.write_csv(&layout.dir(Command::Disseminate))?;
    let undefined = d.heaps.iter().filter(|h| h.is_none()).count();
    let mut notes = Vec::new();
    if undefined > 0 {
        notes.push(format!("{undefined} months had too few words for a Heaps fit"));
    }
    Ok((layout.dissemination_files(), notes))
}

fn write_labels(path: &Path, labels: &[WordLabel]) -> PResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_labels_tsv(labels, &mut w)?;
    w.flush()?;
    Ok(())
}

fn run_detect(cfg: &PipelineConfig, layout: &Layout) -> PResult<StageOutput> {
    let tables = CountTables::read_csv(&layout.dir(Command::Count))?;
    let dc = DetectionConfig {
        growth_pct: cfg.growth_percentile,
        piecewise_pct: cfg.piecewise_percentile,
        logistic_pct: cfg.logistic_percentile,
        ..DetectionConfig::default()
    };
    let det = detect_candidates(&tables.frequency, &dc)?;
    let dir = layout.dir(Command::Detect);
    let cand = dir.join("candidates.tsv");
    write_labels(&cand, &det.candidates)?;
    let (labels, todo) = if cfg.allowlist.is_some() || cfg.denylist.is_some() {
        let load = |p: &Option<PathBuf>| p.as_deref().map(read_word_list).transpose().map(Option::unwrap_or_default);
        let a = apply_annotations(&det.candidates, &load(&cfg.allowlist)?, &load(&cfg.denylist)?)?;
        (a.labels, a.todo)
    } else {
        (det.candidates.clone(), Vec::new())
    };
    let todo_path = dir.join("todo.tsv");
    write_labels(&layout.detected_labels(), &labels)?;
    write_labels(&todo_path, &todo)?;
    let count = |l: Label| labels.iter().filter(|x| x.label == l).count();
    let notes = vec![format!(
        "{} candidates; labeled {} growth, {} decline, {} excluded; {} awaiting annotation",
        det.candidates.len(),
        count(Label::Growth),
        count(Label::Decline),
        count(Label::Excluded),
        todo.len()
    )];
    Ok((vec![cand, layout.detected_labels(), todo_path], notes))
}

fn load_panel(cfg: &PipelineConfig, layout: &Layout) -> PResult<(Panel, Vec<WordLabel>)> {
    let tables = CountTables::read_csv(&layout.dir(Command::Count))?;
    let d = Dissemination::read_csv(&layout.dir(Command::Disseminate))?;
    let panel = Panel::from_tables(&tables.frequency, &d)?;
    let labels = read_labels_tsv(&labels_path(cfg, layout))?;
    Ok((panel, labels))
}

fn run_correlation(cfg: &PipelineConfig, layout: &Layout) -> PResult<StageOutput> {
    let (panel, labels) = load_panel(cfg, layout)?;
    let growth: Vec<String> = labeled_words(&labels).into_iter().filter(|(_, g)| *g).map(|(w, _)| w).collect();
    let mut outputs = Vec::new();
    let mut notes = Vec::new();
    for &k in &cfg.lags {
        let d = assemble_lag_dataset(&panel, &growth, k)?;
        let opts = BootstrapOptions {
            iters: cfg.bootstrap_iters,
            level: 0.95,
            seed: cfg.seed().wrapping_add(k as u64),
        };
        let r = relative_importance_analysis(&d, opts)?;
        let path = layout.dir(Command::AnalyzeCorrelation).join(format!("importance_k{k}.csv"));
        r.write_csv(&path)?;
        outputs.push(path);
        notes.push(format!("k={k}: {} rows ({} dropped), total R2 {:.4}", d.rows.len(), d.dropped, r.r2.point));
    }
    Ok((outputs, notes))
}

const TREATMENTS: [usize; 4] = [DL, DU, DS, DT];

fn run_causal(cfg: &PipelineConfig, layout: &Layout) -> PResult<StageOutput> {
    let (panel, labels) = load_panel(cfg, layout)?;
    let words: Vec<String> = labeled_words(&labels).into_iter().map(|(w, _)| w).collect();
    let fs = feature_summary(&panel, &words, cfg.causal_k)?;
    let mut outputs = Vec::new();
    for t in TREATMENTS {
        let td = build_treatment_dataset(&fs, &labels, t)?;
        let curve = adrf_estimate(
            &td,
            AdrfOptions {
                quantiles: cfg.quantiles,
                boot: cfg.adrf_boot,
                level: 0.95,
                seed: cfg.seed(),
            },
        )?;
        let path = layout.dir(Command::AnalyzeCausal).join(format!("adrf_{}.csv", PREDICTOR_KEYS[t]));
        curve.write_csv(&path)?;
        outputs.push(path);
    }
    Ok((outputs, vec![format!("{} words in the early window, {} dropped", fs.words.len(), fs.dropped.len())]))
}

fn run_predict(cfg: &PipelineConfig, layout: &Layout) -> PResult<StageOutput> {
    let (panel, labels) = load_panel(cfg, layout)?;
    let dir = layout.dir(Command::AnalyzePredict);
    let rows = binary_growth_prediction(
        &panel,
        &labels,
        PredictionOptions {
            folds: cfg.folds,
            k_max: cfg.predict_k_max,
            seed: cfg.seed(),
        },
    )?;
    let acc = dir.join("accuracy.csv");
    write_accuracy_csv(&rows, &acc)?;
    let mut outputs = vec![acc];
    let mut notes = Vec::new();
    if let Some(pos_path) = &cfg.pos {
        let tags = read_pos_tags(pos_path)?;
        let labeled = labeled_words(&labels);
        let words: Vec<String> = labeled.iter().map(|(w, _)| w.clone()).collect();
        let fs = feature_summary(&panel, &words, cfg.pos_k)?;
        let matched = pos_matched_comparison(&fs, &labels, &tags)?;
        let cmp = dir.join("pos_comparison.csv");
        matched.write_csv(&cmp)?;
        let pred = pos_feature_prediction(&panel, &labels, &tags, 1, cfg.folds, cfg.seed())?;
        let pp = dir.join("pos_prediction.csv");
        pred.write_csv(&pp)?;
        // per-word D_L by tag and label, for distribution plots
        let dl = dir.join("pos_dl.csv");
        let mut w = csv::Writer::from_path(&dl)?;
        w.write_record(["tag", "label", "word", "dl"])?;
        for (i, word) in fs.words.iter().enumerate() {
            let (Some(tag), Ok(j)) = (tags.get(word), labeled.binary_search_by(|(x, _)| x.cmp(word))) else {
                continue;
            };
            let label = if labeled[j].1 { "growth" } else { "decline" };
            w.write_record([tag.as_str(), label, word.as_str(), &fs.values[i][DL].to_string()])
                ?;
        }
        w.flush()?;
        outputs.extend([cmp, pp, dl]);
        if matched.unmatched > 0 {
            notes.push(format!("{} decline words had no growth partner with the same tag", matched.unmatched));
        }
    } else {
        notes.push("no part-of-speech file; tag analyses skipped".to_string());
    }
    Ok((outputs, notes))
}

fn run_survival(cfg: &PipelineConfig, layout: &Layout) -> PResult<StageOutput> {
    let (panel, labels) = load_panel(cfg, layout)?;
    let words: Vec<String> = labeled_words(&labels).into_iter().map(|(w, _)| w).collect();
    let fs = feature_summary(&panel, &words, cfg.survival_k)?;
    let data = assemble_survival_records(&labels, &fs, panel.months())?;
    let recs = &data.records;
    let opts = CoxOptions::default();
    let dir = layout.dir(Command::AnalyzeSurvival);

    let full = cox_fit(recs, FeatureSet::FLS.columns(), opts)?;
    let coef = dir.join("cox_coefficients.csv");
    full.write_csv(&coef)?;

    let null = cox_fit(recs, &[], opts)?;
    let models = [
        ("null", null),
        ("f", cox_fit(recs, FeatureSet::F.columns(), opts)?),
        ("f+L", cox_fit(recs, FeatureSet::FL.columns(), opts)?),
        ("f+S", cox_fit(recs, FeatureSet::FS.columns(), opts)?),
        ("f+L+S", full.clone()),
    ];
    let model = |name: &str| &models.iter().find(|(n, _)| *n == name).expect("known model").1;
    let dev = dir.join("deviance.csv");
    let mut w = csv::Writer::from_path(&dev)?;
    w.write_record(["nested", "full", "df", "chi2", "p"])?;
    for (a, b) in [("null", "f"), ("null", "f+L"), ("f", "f+L"), ("f", "f+S"), ("f+L", "f+L+S"), ("f+S", "f+L+S")] {
        let (na, nb) = (model(a), model(b));
        let t = deviance_test(na, nb, (nb.beta.len() - na.beta.len()) as u32)?;
        w.write_record([a, b, &t.df.to_string(), &t.statistic.to_string(), &t.p.to_string()])
            ?;
    }
    w.flush()?;

    let cv = survival_cv(recs, cfg.folds, &FeatureSet::ALL, cfg.seed(), opts)?;
    let conc = dir.join("concordance.csv");
    cv.write_csv(&conc)?;
    let tests = dir.join("concordance_tests.csv");
    let mut w = csv::Writer::from_path(&tests)?;
    w.write_record(["a", "b", "mean_a", "mean_b", "t", "p"])?;
    for (a, b) in [(FeatureSet::FL, FeatureSet::F), (FeatureSet::FS, FeatureSet::F), (FeatureSet::FLS, FeatureSet::FL)] {
        let t = cv.compare(a, b);
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            a.name().to_string(),
            b.name().to_string(),
            fmt(cv.mean(a)),
            fmt(cv.mean(b)),
            fmt(t.map(|t| t.t)),
            fmt(t.map(|t| t.p)),
        ])
        ?;
    }
    w.flush()?;
    let mut notes = vec![format!(
        "{} records ({} events), {} dropped",
        recs.len(),
        recs.iter().filter(|r| r.event).count(),
        data.dropped
    )];
    if models.iter().any(|(_, m)| m.ridge) {
        notes.push("a diverging likelihood was stabilized with a small ridge penalty".to_string());
    }
    Ok((vec![coef, dev, conc, tests], notes))
}

fn run_synth(cfg: &PipelineConfig, layout: &Layout) -> PResult<StageOutput> {
    let mut sc = match &cfg.synth_config {
        Some(p) => SynthConfig::parse(&fs::read_to_string(p)?).map_err(|e| PipelineError::config("synth_config", e.to_string()))?,
        None => SynthConfig::default(),
    };
    sc.seed = cfg.seed();
    let dir = layout.dir(Command::Synth);
    let corpus = write_corpus(&sc, &dir)?;
    let mut outputs: Vec<PathBuf> = fs::read_dir(&dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    outputs.sort();
    Ok((outputs, vec![format!("{} comments, {} injected words", corpus.lines.len(), corpus.words.len())]))
}

// ---- report ----

/// Analysis CSVs the report can aggregate, keyed by section.
fn report_sources(layout: &Layout) -> Vec<(&'static str, PathBuf)> {
    let mut v = vec![("word_sets", layout.detected_labels())];
    if let Ok(entries) = fs::read_dir(layout.dir(Command::AnalyzeCorrelation)) {
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        v.extend(files.into_iter().map(|p| ("importance", p)));
    }
    for t in TREATMENTS {
        v.push(("adrf", layout.dir(Command::AnalyzeCausal).join(format!("adrf_{}.csv", PREDICTOR_KEYS[t]))));
    }
    let p = layout.dir(Command::AnalyzePredict);
    v.extend([("prediction", p.join("accuracy.csv")), ("pos", p.join("pos_comparison.csv")), ("pos", p.join("pos_dl.csv"))]);
    let s = layout.dir(Command::AnalyzeSurvival);
    v.extend([
        ("survival", s.join("cox_coefficients.csv")),
        ("survival", s.join("concordance.csv")),
        ("survival", s.join("deviance.csv")),
    ]);
    v.into_iter().filter(|(_, p)| p.is_file()).collect()
}

fn read_csv_rows(path: &Path) -> PResult<Vec<BTreeMap<String, String>>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect());
    }
    Ok(out)
}

/// Numbers pass through unchanged; empty cells become null.
fn num(s: &str) -> Value {
    if let Ok(i) = s.parse::<i64>() {
        return Value::from(i);
    }
    s.parse::<f64>().ok().map_or(Value::Null, Value::from)
}

fn row_json(row: &BTreeMap<String, String>, numeric: &[&str]) -> Value {
    Value::Object(
        row.iter()
            .map(|(k, v)| (k.clone(), if numeric.contains(&k.as_str()) { num(v) } else { Value::from(v.clone()) }))
            .collect(),
    )
}

fn copy_plot(src: &Path, dst: &Path, rename: &[(&str, &str)]) -> PResult<()> {
    let rows = read_csv_rows(src)?;
    let mut r = csv::Reader::from_path(src)?;
    let headers: Vec<String> = r
        .headers()
        ?
        .iter()
        .map(|h| rename.iter().find(|(a, _)| *a == h).map_or(h, |(_, b)| b).to_string())
        .collect();
    let original: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut w = csv::Writer::from_path(dst)?;
    w.write_record(&headers)?;
    for row in rows {
        w.write_record(original.iter().map(|h| row[h].as_str()))?;
    }
    w.flush()?;
    Ok(())
}

/// Plot-ready CSVs, one per figure analog, written to `report/plots`.
/// Returns the written files and the names of figures whose inputs are missing.
fn emit_plot_data(layout: &Layout) -> PResult<(Vec<PathBuf>, Vec<String>)> {
    let plots = layout.dir(Command::Report).join("plots");
    fs::create_dir_all(&plots)?;
    let mut written = Vec::new();
    let mut skipped = Vec::new();
    let mut emit = |name: &str, src: PathBuf, rename: &[(&str, &str)]| -> PResult<()> {
        if src.is_file() {
            let dst = plots.join(format!("{name}.csv"));
            copy_plot(&src, &dst, rename)?;
            written.push(dst);
        } else {
            skipped.push(name.to_string());
        }
        Ok(())
    };
    emit("accuracy_by_k", layout.dir(Command::AnalyzePredict).join("accuracy.csv"), &[("mean_acc", "mean")])?;
    for t in TREATMENTS {
        let key = PREDICTOR_KEYS[t];
        emit(&format!("adrf_{key}"), layout.dir(Command::AnalyzeCausal).join(format!("adrf_{key}.csv")), &[("mu", "mean")])?;
    }
    emit("concordance", layout.dir(Command::AnalyzeSurvival).join("concordance.csv"), &[])?;
    emit("pos_dl", layout.dir(Command::AnalyzePredict).join("pos_dl.csv"), &[])?;
    Ok((written, skipped))
}

fn run_report(layout: &Layout) -> PResult<StageOutput> {
    let sources = report_sources(layout);
    if !sources.iter().any(|(s, _)| *s != "word_sets") {
        return Err(PipelineError::MissingArtifact {
            path: layout.dir(Command::AnalyzePredict).join("accuracy.csv"),
            producer: "an analyze-* command".to_string(),
        });
    }
    let mut report = Map::new();
    for key in ["word_sets", "importance", "adrf", "prediction", "survival"] {
        report.insert(key.to_string(), Value::Null);
    }
    let labels = layout.detected_labels();
    if labels.is_file() {
        let l = read_labels_tsv(&labels)?;
        let count = |x: Label| l.iter().filter(|w| w.label == x).count();
        report.insert(
            "word_sets".into(),
            json!({"growth": count(Label::Growth), "decline": count(Label::Decline), "excluded": count(Label::Excluded)}),
        );
    }
    let mut importance = Map::new();
    for (_, p) in sources.iter().filter(|(s, _)| *s == "importance") {
        let rows = read_csv_rows(p)?;
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let top = rows
            .iter()
            .filter(|r| r["predictor"] != "r2_total")
            .max_by(|a, b| a["share"].parse::<f64>().unwrap_or(f64::MIN).total_cmp(&b["share"].parse::<f64>().unwrap_or(f64::MIN)))
            .map(|r| r["predictor"].clone());
        importance.insert(
            name,
            json!({"top": top, "shares": rows.iter().map(|r| row_json(r, &["share", "lo", "hi"])).collect::<Vec<_>>()}),
        );
    }
    if !importance.is_empty() {
        report.insert("importance".into(), Value::Object(importance));
    }
    let mut adrf = Map::new();
    for (_, p) in sources.iter().filter(|(s, _)| *s == "adrf") {
        let rows = read_csv_rows(p)?;
        let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let cols = ["quantile", "mu", "lo", "hi"];
        adrf.insert(name, json!({"first": rows.first().map(|r| row_json(r, &cols)), "last": rows.last().map(|r| row_json(r, &cols))}));
    }
    if !adrf.is_empty() {
        report.insert("adrf".into(), Value::Object(adrf));
    }
    if let Some((_, p)) = sources.iter().find(|(s, _)| *s == "prediction") {
        let rows = read_csv_rows(p)?;
        let mut best: BTreeMap<String, &BTreeMap<String, String>> = BTreeMap::new();
        for r in &rows {
            let m = r["mean_acc"].parse::<f64>().unwrap_or(f64::MIN);
            let better = best
                .get(&r["feature_set"])
                .is_none_or(|b| m > b["mean_acc"].parse::<f64>().unwrap_or(f64::MIN));
            if better {
                best.insert(r["feature_set"].clone(), r);
            }
        }
        let cols = ["k", "mean_acc", "std"];
        report.insert(
            "prediction".into(),
            json!({"best": best.iter().map(|(k, r)| (k.clone(), row_json(r, &cols))).collect::<Map<_, _>>()}),
        );
    }
    let surv_dir = layout.dir(Command::AnalyzeSurvival);
    let mut survival = Map::new();
    for (key, file, cols) in [
        ("cox", "cox_coefficients.csv", &["beta", "se", "z", "p"][..]),
        ("deviance", "deviance.csv", &["df", "chi2", "p"][..]),
        ("concordance_tests", "concordance_tests.csv", &["mean_a", "mean_b", "t", "p"][..]),
    ] {
        let p = surv_dir.join(file);
        if p.is_file() {
            survival.insert(key.into(), Value::Array(read_csv_rows(&p)?.iter().map(|r| row_json(r, cols)).collect()));
        }
    }
    if !survival.is_empty() {
        report.insert("survival".into(), Value::Object(survival));
    }
    let (plots, skipped) = emit_plot_data(layout)?;
    report.insert(
        "figures".into(),
        Value::Array(plots.iter().map(|p| Value::from(rel(&layout.root, p))).collect()),
    );
    report.insert("skipped_figures".into(), Value::Array(skipped.iter().cloned().map(Value::from).collect()));
    let out = layout.dir(Command::Report).join("report.json");
    fs::write(&out, serde_json::to_string_pretty(&Value::Object(report))? + "\n")?;
    let mut outputs = vec![out];
    outputs.extend(plots);
    let notes = if skipped.is_empty() {
        Vec::new()
    } else {
        vec![format!("skipped figures without inputs: {}", skipped.join(", "))]
    };
    Ok((outputs, notes))
}
