use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use covkg::pipeline::{run_all, run_stage, PipelineConfig, PipelineError, Stage};

/// Build and analyse a knowledge graph from a tweet corpus, one stage at a time.
///
/// Settings are resolved as: built-in defaults, then `--config`, then
/// `--set`, then the named flags.
#[derive(Debug, Parser)]
#[command(name = "covkg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// key = value file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override any config key; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Tweet JSONL
    #[arg(long, global = true)]
    tweets: Option<PathBuf>,
    /// Filter keywords, one per line
    #[arg(long, global = true)]
    keywords: Option<PathBuf>,
    /// Extra stopwords on top of the bundled lists
    #[arg(long, global = true)]
    stopwords: Option<PathBuf>,
    /// Extra `inflected<TAB>lemma` exceptions
    #[arg(long, global = true)]
    lemmas: Option<PathBuf>,
    /// `word<TAB>valence` sentiment lexicon
    #[arg(long, global = true)]
    lexicon: Option<PathBuf>,
    /// word2vec text-format vectors
    #[arg(long, global = true)]
    vectors: Option<PathBuf>,
    /// Event timeline CSV
    #[arg(long, global = true)]
    events: Option<PathBuf>,
    /// Per-date statistics CSV
    #[arg(long, global = true)]
    stats: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Keyword filter and text cleaning
    Ingest,
    /// TF-IDF, NMF and topic assignment
    Topics,
    /// Tweet sentiment and aspect scores for linked keywords
    Sentiment,
    /// Daily series, PELT changepoints and volume peaks
    Changepoints,
    /// Assemble the knowledge graph
    BuildGraph,
    /// Graph counts and weakly-connected-component histograms
    Stats,
    /// Train the TransD embedding
    Train,
    /// Rank missing links with the trained embedding
    Predict,
    /// Louvain communities
    Communities,
    /// Every stage in order
    All,
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Ingest => Stage::Ingest,
            Command::Topics => Stage::Topics,
            Command::Sentiment => Stage::Sentiment,
            Command::Changepoints => Stage::Changepoints,
            Command::BuildGraph => Stage::BuildGraph,
            Command::Stats => Stage::Stats,
            Command::Train => Stage::Train,
            Command::Predict => Stage::Predict,
            Command::Communities => Stage::Communities,
            Command::All => return None,
        })
    }
}

fn resolve(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_file(&text)?;
    }
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| PipelineError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v)?;
    }
    if let Some(w) = &cli.workdir {
        cfg.workdir = w.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let paths = [
        (&cli.tweets, &mut cfg.tweets),
        (&cli.keywords, &mut cfg.keywords),
        (&cli.stopwords, &mut cfg.stopwords),
        (&cli.lemmas, &mut cfg.lemmas),
        (&cli.lexicon, &mut cfg.lexicon),
        (&cli.vectors, &mut cfg.vectors),
        (&cli.events, &mut cfg.events),
        (&cli.stats, &mut cfg.stats),
    ];
    for (flag, slot) in paths {
        if flag.is_some() {
            *slot = flag.clone();
        }
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = resolve(cli)?;
    match cli.command.stage() {
        Some(stage) => {
            let m = run_stage(&cfg, stage)?;
            log::info!("{}: {} artifacts", m.stage, m.artifacts.len());
        }
        None => {
            run_all(&cfg)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
