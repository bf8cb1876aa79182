use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lexdiss::pipeline::{run, Command, PipelineConfig, PipelineError};

/// Dissemination analysis of nonstandard words in a comment corpus.
#[derive(Parser, Debug)]
#[command(name = "lexdiss", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Normalize comments and build the vocabulary
    Ingest,
    /// Monthly frequency, unit and context tables
    Count,
    /// Social and linguistic dissemination per word and month
    Disseminate,
    /// Detect growth and decline words
    Detect,
    /// Relative importance of each predictor for frequency change
    AnalyzeCorrelation,
    /// Dose response of growth probability on each dissemination metric
    AnalyzeCausal,
    /// Cross-validated growth/decline prediction, plus tag comparisons
    AnalyzePredict,
    /// Cox model of decline timing
    AnalyzeSurvival,
    /// Generate a synthetic corpus with known growth and decline words
    Synth,
    /// Summarize every analysis present into report.json and plot CSVs
    Report,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Ingest => Command::Ingest,
            Cmd::Count => Command::Count,
            Cmd::Disseminate => Command::Disseminate,
            Cmd::Detect => Command::Detect,
            Cmd::AnalyzeCorrelation => Command::AnalyzeCorrelation,
            Cmd::AnalyzeCausal => Command::AnalyzeCausal,
            Cmd::AnalyzePredict => Command::AnalyzePredict,
            Cmd::AnalyzeSurvival => Command::AnalyzeSurvival,
            Cmd::Synth => Command::Synth,
            Cmd::Report => Command::Report,
        }
    }
}

#[derive(Args, Debug, Default)]
struct Opts {
    /// TOML file with pipeline settings; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Comment dump (JSON lines)
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Window length for the current analysis; repeat for several lags
    #[arg(long, global = true)]
    k: Vec<usize>,
    #[arg(long, global = true)]
    vocab_size: Option<usize>,
    /// Percentile used by every detection gate
    #[arg(long, global = true)]
    percentile: Option<f64>,
    #[arg(long, global = true)]
    bootstrap_iters: Option<usize>,
    #[arg(long, global = true)]
    shards: Option<usize>,
    /// First month, YYYY-MM
    #[arg(long, global = true)]
    start: Option<String>,
    #[arg(long, global = true)]
    months: Option<u32>,
    #[arg(long, global = true)]
    bots: Option<PathBuf>,
    #[arg(long, global = true)]
    excluded_subreddits: Option<PathBuf>,
    #[arg(long, global = true)]
    allowlist: Option<PathBuf>,
    #[arg(long, global = true)]
    denylist: Option<PathBuf>,
    /// Labels to analyze instead of the detect output
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    /// Part-of-speech tags, word<TAB>tag
    #[arg(long, global = true)]
    pos: Option<PathBuf>,
    #[arg(long, global = true)]
    synth_config: Option<PathBuf>,
}

fn load_config(opts: &Opts, command: Command) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = match &opts.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| PipelineError::Config {
                field: "config".into(),
                reason: format!("{}: {e}", p.display()),
            })?;
            toml::from_str(&text).map_err(|e| PipelineError::Config {
                field: "config".into(),
                reason: e.to_string(),
            })?
        }
        None => PipelineConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => {$(
            if let Some(v) = &opts.$f {
                cfg.$f = v.clone().into();
            }
        )*};
    }
    set!(workdir, vocab_size, bootstrap_iters, shards, start, months);
    set!(input, seed, bots, excluded_subreddits, allowlist, denylist, labels, pos, synth_config);
    if let Some(p) = opts.percentile {
        cfg.growth_percentile = p;
        cfg.piecewise_percentile = p;
        cfg.logistic_percentile = p;
    }
    if let Some(&k) = opts.k.first() {
        match command {
            Command::AnalyzeCorrelation => cfg.lags = opts.k.clone(),
            Command::AnalyzeCausal => cfg.causal_k = k,
            Command::AnalyzePredict => {
                cfg.predict_k_max = k;
                cfg.pos_k = k;
            }
            Command::AnalyzeSurvival => cfg.survival_k = k,
            _ => {
                return Err(PipelineError::Config {
                    field: "k".into(),
                    reason: format!("`{command}` has no window to set"),
                })
            }
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = Command::from(cli.command);
    let result = load_config(&cli.opts, command).and_then(|cfg| run(command, &cfg));
    match result {
        Ok(summary) => {
            if summary.up_to_date {
                eprintln!("{command}: up to date");
            }
            for n in &summary.notes {
                eprintln!("{command}: {n}");
            }
            for p in &summary.outputs {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            let err = anyhow::Error::new(e).context(format!("{command} failed"));
            eprintln!("error: {err:#}");
            ExitCode::from(code as u8)
        }
    }
}
