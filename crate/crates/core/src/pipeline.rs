//! File-based stage runner: each stage reads its inputs from disk, writes
//! artifacts under `workdir/<stage>/`, and records a manifest of input and
//! artifact digests so reruns can be checked byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{Display, Write as _};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{
    community_report, louvain, predict_links, write_communities, write_community_report, write_predictions,
};
use crate::builder::{build, load_date_stats, load_events, topic_id, BuildConfig, BuildInputs, TweetKeyword};
use crate::embedding::{load_model, save_model, train, EmbeddingParams, Layer, TransD};
use crate::graph::{
    export_attrs, export_triples, import_graph, wcc_histograms, EntityKind, GraphStats, KnowledgeGraph,
    RelationType,
};
use crate::ingest::{
    clean_corpus, filter_corpus, parse_tweets, read_cleaned, write_cleaned, CleanedRecord, KeywordList,
    LemmaMap, Stopwords,
};
use crate::sentiment::{aspect_scores, score_text, Lexicon};
use crate::timeseries::{daily_mean, detect_peaks, pelt, rolling_mean, tune_penalty, DailySeries};
use crate::topics::{
    assign_topics, build_tfidf, build_vocabulary, load_nmf, nmf_fit, save_nmf, topic_keywords, NmfConfig,
};
use crate::wordvec::{best_keyword_link, WordVectors};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error("input file {0} does not exist")]
    MissingInput(PathBuf),
    #[error("missing {artifact}; run `covkg {stage}` first")]
    MissingArtifact { artifact: String, stage: &'static str },
    #[error("{0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl PipelineError {
    /// 1 usage, 2 data, 3 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 1,
            PipelineError::MissingInput(_)
            | PipelineError::MissingArtifact { .. }
            | PipelineError::Data(_) => 2,
            PipelineError::Io(_) => 3,
        }
    }
}

fn data<E: Display>(e: E) -> PipelineError {
    PipelineError::Data(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Topics,
    Sentiment,
    Changepoints,
    BuildGraph,
    Stats,
    Train,
    Predict,
    Communities,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Topics,
        Stage::Sentiment,
        Stage::Changepoints,
        Stage::BuildGraph,
        Stage::Stats,
        Stage::Train,
        Stage::Predict,
        Stage::Communities,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Topics => "topics",
            Stage::Sentiment => "sentiment",
            Stage::Changepoints => "changepoints",
            Stage::BuildGraph => "build-graph",
            Stage::Stats => "stats",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Communities => "communities",
        }
    }

    /// Artifact directory under the workdir.
    pub fn dir(self) -> &'static str {
        match self {
            Stage::BuildGraph => "graph",
            s => s.name(),
        }
    }

    /// Config keys recorded in this stage's manifest.
    fn keys(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &["tweets", "keywords", "stopwords", "lemmas"],
            Stage::Topics => &["topics", "vocab_cap", "nmf_max_iters", "nmf_tol", "dominance", "top_k"],
            Stage::Sentiment => &["lexicon", "vectors"],
            Stage::Changepoints => &["window", "rolling", "penalty", "penalty_grid", "prominence", "events"],
            Stage::BuildGraph => {
                &["span_start", "span_end", "events", "stats", "top_k", "dominance", "penalty"]
            }
            Stage::Stats => &[],
            Stage::Train => &[
                "dim_n",
                "dim_m",
                "margin",
                "beta",
                "learning_rate",
                "epochs",
                "batch_size",
                "train_fraction",
                "layer",
            ],
            Stage::Predict => &["predict_relation", "percentile"],
            Stage::Communities => &[],
        }
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| PipelineError::Usage(format!("unknown stage {s:?}")))
    }
}

/// Every path and parameter of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub workdir: PathBuf,
    pub seed: u64,
    pub tweets: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    /// Extra stopwords on top of the bundled lists.
    pub stopwords: Option<PathBuf>,
    /// Extra lemma exceptions on top of the bundled map.
    pub lemmas: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub stats: Option<PathBuf>,
    pub topics: usize,
    pub vocab_cap: usize,
    pub nmf_max_iters: usize,
    pub nmf_tol: f64,
    pub dominance: f64,
    pub top_k: usize,
    pub window: usize,
    pub rolling: bool,
    pub penalty: f64,
    pub penalty_grid: Vec<f64>,
    pub prominence: f64,
    pub span_start: Option<NaiveDate>,
    pub span_end: Option<NaiveDate>,
    pub dim_n: usize,
    pub dim_m: usize,
    pub margin: f64,
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub train_fraction: f64,
    pub layer: Layer,
    pub predict_relation: RelationType,
    pub percentile: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let nmf = NmfConfig::default();
        let emb = EmbeddingParams::<f64>::default();
        PipelineConfig {
            workdir: PathBuf::from("work"),
            seed: 0,
            tweets: None,
            keywords: None,
            stopwords: None,
            lemmas: None,
            lexicon: None,
            vectors: None,
            events: None,
            stats: None,
            topics: nmf.topics,
            vocab_cap: crate::topics::DEFAULT_VOCAB_CAP,
            nmf_max_iters: nmf.max_iters,
            nmf_tol: nmf.tol,
            dominance: 0.8,
            top_k: crate::topics::DEFAULT_TOP_K,
            window: crate::timeseries::DEFAULT_WINDOW,
            rolling: true,
            penalty: 1.0,
            penalty_grid: Vec::new(),
            prominence: crate::timeseries::DEFAULT_PROMINENCE,
            span_start: None,
            span_end: None,
            dim_n: emb.n,
            dim_m: emb.m,
            margin: emb.margin,
            beta: emb.beta,
            learning_rate: emb.learning_rate,
            epochs: emb.epochs,
            batch_size: emb.batch_size,
            train_fraction: emb.train_fraction,
            layer: Layer::FocusE,
            predict_relation: RelationType::HasChangepoint,
            percentile: crate::analysis::DEFAULT_PERCENTILE,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value.trim().parse().map_err(|_| PipelineError::Usage(format!("invalid value for {key}: {value:?}")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn opt_date(key: &str, value: &str) -> Result<Option<NaiveDate>, PipelineError> {
    let v = value.trim();
    if v.is_empty() {
        return Ok(None);
    }
    NaiveDate::parse_from_str(v, "%Y-%m-%d")
        .map(Some)
        .map_err(|_| PipelineError::Usage(format!("invalid date for {key}: {value:?}")))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 34] = [
        "workdir",
        "seed",
        "tweets",
        "keywords",
        "stopwords",
        "lemmas",
        "lexicon",
        "vectors",
        "events",
        "stats",
        "topics",
        "vocab_cap",
        "nmf_max_iters",
        "nmf_tol",
        "dominance",
        "top_k",
        "window",
        "rolling",
        "penalty",
        "penalty_grid",
        "prominence",
        "span_start",
        "span_end",
        "dim_n",
        "dim_m",
        "margin",
        "beta",
        "learning_rate",
        "epochs",
        "batch_size",
        "train_fraction",
        "layer",
        "predict_relation",
        "percentile",
    ];

    /// Sets one `key=value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let key = key.trim();
        match key {
            "workdir" => self.workdir = PathBuf::from(value.trim()),
            "seed" => self.seed = parse(key, value)?,
            "tweets" => self.tweets = opt_path(value),
            "keywords" => self.keywords = opt_path(value),
            "stopwords" => self.stopwords = opt_path(value),
            "lemmas" => self.lemmas = opt_path(value),
            "lexicon" => self.lexicon = opt_path(value),
            "vectors" => self.vectors = opt_path(value),
            "events" => self.events = opt_path(value),
            "stats" => self.stats = opt_path(value),
            "topics" => self.topics = parse(key, value)?,
            "vocab_cap" => self.vocab_cap = parse(key, value)?,
            "nmf_max_iters" => self.nmf_max_iters = parse(key, value)?,
            "nmf_tol" => self.nmf_tol = parse(key, value)?,
            "dominance" => self.dominance = parse(key, value)?,
            "top_k" => self.top_k = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "rolling" => self.rolling = parse(key, value)?,
            "penalty" => self.penalty = parse(key, value)?,
            "penalty_grid" => {
                self.penalty_grid = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_, _>>()?
            }
            "prominence" => self.prominence = parse(key, value)?,
            "span_start" => self.span_start = opt_date(key, value)?,
            "span_end" => self.span_end = opt_date(key, value)?,
            "dim_n" => self.dim_n = parse(key, value)?,
            "dim_m" => self.dim_m = parse(key, value)?,
            "margin" => self.margin = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "train_fraction" => self.train_fraction = parse(key, value)?,
            "layer" => {
                self.layer = match value.trim() {
                    "focuse" => Layer::FocusE,
                    "plain" => Layer::Plain,
                    _ => {
                        return Err(PipelineError::Usage(format!(
                            "layer must be focuse or plain, got {value:?}"
                        )))
                    }
                }
            }
            "predict_relation" => self.predict_relation = parse(key, value)?,
            "percentile" => self.percentile = parse(key, value)?,
            _ => return Err(PipelineError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Canonical string form of a key's current value.
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "workdir" => self.workdir.display().to_string(),
            "seed" => self.seed.to_string(),
            "tweets" => show_path(&self.tweets),
            "keywords" => show_path(&self.keywords),
            "stopwords" => show_path(&self.stopwords),
            "lemmas" => show_path(&self.lemmas),
            "lexicon" => show_path(&self.lexicon),
            "vectors" => show_path(&self.vectors),
            "events" => show_path(&self.events),
            "stats" => show_path(&self.stats),
            "topics" => self.topics.to_string(),
            "vocab_cap" => self.vocab_cap.to_string(),
            "nmf_max_iters" => self.nmf_max_iters.to_string(),
            "nmf_tol" => self.nmf_tol.to_string(),
            "dominance" => self.dominance.to_string(),
            "top_k" => self.top_k.to_string(),
            "window" => self.window.to_string(),
            "rolling" => self.rolling.to_string(),
            "penalty" => self.penalty.to_string(),
            "penalty_grid" => self.penalty_grid.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            "prominence" => self.prominence.to_string(),
            "span_start" => self.span_start.map(|d| d.to_string()).unwrap_or_default(),
            "span_end" => self.span_end.map(|d| d.to_string()).unwrap_or_default(),
            "dim_n" => self.dim_n.to_string(),
            "dim_m" => self.dim_m.to_string(),
            "margin" => self.margin.to_string(),
            "beta" => self.beta.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "train_fraction" => self.train_fraction.to_string(),
            "layer" => match self.layer {
                Layer::FocusE => "focuse".into(),
                Layer::Plain => "plain".into(),
            },
            "predict_relation" => self.predict_relation.to_string(),
            "percentile" => self.percentile.to_string(),
            _ => return None,
        })
    }

    /// Applies a `key = value` file; blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, text: &str) -> Result<(), PipelineError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                PipelineError::Usage(format!("config line {}: expected key = value", n + 1))
            })?;
            self.set(k, v).map_err(|e| PipelineError::Usage(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    fn embedding_params(&self) -> EmbeddingParams<f64> {
        EmbeddingParams {
            n: self.dim_n,
            m: self.dim_m,
            margin: self.margin,
            beta: self.beta,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            train_fraction: self.train_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Manifest {
    pub stage: String,
    pub inputs: Vec<FileDigest>,
    pub params: BTreeMap<String, String>,
    pub params_hash: String,
    pub seed: u64,
    pub artifacts: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One stage invocation: tracks inputs and outputs for the manifest.
struct Run<'a> {
    cfg: &'a PipelineConfig,
    stage: Stage,
    inputs: Vec<FileDigest>,
    artifacts: Vec<FileDigest>,
}

impl<'a> Run<'a> {
    fn start(cfg: &'a PipelineConfig, stage: Stage) -> Result<Self, PipelineError> {
        let dir = cfg.workdir.join(stage.dir());
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        log::info!("running {}", stage.name());
        Ok(Run { cfg, stage, inputs: Vec::new(), artifacts: Vec::new() })
    }

    /// Reads an artifact produced by `producer`.
    fn artifact(&mut self, rel: &str, producer: Stage) -> Result<Vec<u8>, PipelineError> {
        let path = self.cfg.workdir.join(rel);
        if !path.is_file() {
            return Err(PipelineError::MissingArtifact { artifact: rel.to_string(), stage: producer.name() });
        }
        let bytes = fs::read(&path)?;
        self.inputs.push(FileDigest { path: rel.to_string(), sha256: sha256_hex(&bytes) });
        Ok(bytes)
    }

    fn external(&mut self, path: &Path) -> Result<Vec<u8>, PipelineError> {
        if !path.is_file() {
            return Err(PipelineError::MissingInput(path.to_path_buf()));
        }
        let bytes = fs::read(path)?;
        self.inputs.push(FileDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) });
        Ok(bytes)
    }

    fn required(&mut self, path: &Option<PathBuf>, key: &str) -> Result<Vec<u8>, PipelineError> {
        match path {
            Some(p) => self.external(p),
            None => Err(PipelineError::Usage(format!("stage {} needs `{key}` to be set", self.stage.name()))),
        }
    }

    fn optional(&mut self, path: &Option<PathBuf>) -> Result<Option<Vec<u8>>, PipelineError> {
        path.as_ref().map(|p| self.external(p)).transpose()
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let rel = format!("{}/{name}", self.stage.dir());
        let path = self.cfg.workdir.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.artifacts.push(FileDigest { path: rel, sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn finish(self) -> Result<Manifest, PipelineError> {
        let params: BTreeMap<String, String> =
            self.stage.keys().iter().map(|&k| (k.to_string(), self.cfg.get(k).expect("known key"))).collect();
        let params_hash = sha256_hex(&serde_json::to_vec(&params).map_err(data)?);
        let manifest = Manifest {
            stage: self.stage.name().to_string(),
            inputs: self.inputs,
            params,
            params_hash,
            seed: self.cfg.seed,
            artifacts: self.artifacts,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(data)?;
        text.push('\n');
        fs::write(self.cfg.workdir.join(self.stage.dir()).join("manifest.json"), text)?;
        Ok(manifest)
    }
}

pub const CLEANED: &str = "ingest/cleaned.jsonl";
pub const NMF_MODEL: &str = "topics/nmf.bin";
pub const TOPIC_KEYWORDS: &str = "topics/keywords.csv";
pub const ASSIGNMENTS: &str = "topics/assignments.csv";
pub const SCORES: &str = "sentiment/scores.csv";
pub const KEYWORD_LINKS: &str = "sentiment/keyword_links.csv";
pub const CHANGEPOINTS: &str = "changepoints/changepoints.csv";
pub const TRIPLES: &str = "graph/triples.tsv";
pub const ATTRS: &str = "graph/attrs.jsonl";
pub const MODEL: &str = "train/model.bin";

fn csv_rows(bytes: &[u8], what: &str) -> Result<Vec<csv::StringRecord>, PipelineError> {
    csv::Reader::from_reader(bytes)
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::Data(format!("{what}: {e}")))
}

fn field<T: FromStr>(rec: &csv::StringRecord, i: usize, what: &str) -> Result<T, PipelineError> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse().map_err(|_| PipelineError::Data(format!("{what}: bad field {raw:?}")))
}

fn cleaned(run: &mut Run) -> Result<Vec<CleanedRecord>, PipelineError> {
    let bytes = run.artifact(CLEANED, Stage::Ingest)?;
    read_cleaned(bytes.as_slice()).map_err(data)
}

fn load_graph(run: &mut Run) -> Result<KnowledgeGraph, PipelineError> {
    let triples = run.artifact(TRIPLES, Stage::BuildGraph)?;
    let attrs = run.artifact(ATTRS, Stage::BuildGraph)?;
    import_graph(triples.as_slice(), Some(attrs.as_slice())).map_err(data)
}

pub fn run_ingest(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = Run::start(cfg, Stage::Ingest)?;
    let tweets = run.required(&cfg.tweets, "tweets")?;
    let keywords = run.required(&cfg.keywords, "keywords")?;
    let mut stopwords = Stopwords::bundled();
    if let Some(extra) = run.optional(&cfg.stopwords)? {
        stopwords.extend_from_reader(extra.as_slice()).map_err(data)?;
    }
    let mut lemmas = LemmaMap::bundled();
    if let Some(extra) = run.optional(&cfg.lemmas)? {
        lemmas.extend(LemmaMap::from_reader(extra.as_slice()).map_err(data)?);
    }
    let parsed = parse_tweets(tweets.as_slice()).map_err(data)?;
    let keywords = KeywordList::from_reader(keywords.as_slice()).map_err(data)?;
    let kept = filter_corpus(&parsed.tweets, &keywords);
    log::info!(
        "{} tweets parsed, {} rejected, {} kept",
        parsed.tweets.len(),
        parsed.errors.len(),
        kept.len()
    );
    let records = clean_corpus(&kept, &stopwords, &lemmas);
    let mut out = Vec::new();
    write_cleaned(&records, &mut out).map_err(data)?;
    run.write("cleaned.jsonl", &out)?;
    let mut rejected = String::from("line,message\n");
    for e in &parsed.errors {
        writeln!(rejected, "{},\"{}\"", e.line, e.message.replace('"', "\"\"")).expect("string write");
    }
    run.write("rejected.csv", rejected.as_bytes())?;
    run.finish()
}

pub fn run_topics(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = Run::start(cfg, Stage::Topics)?;
    let records = cleaned(&mut run)?;
    let docs: Vec<&Vec<String>> = records.iter().map(|r| &r.cleaned_text).collect();
    let docs: Vec<Vec<&str>> = docs.iter().map(|d| d.iter().map(String::as_str).collect()).collect();
    let vocab = build_vocabulary(&docs, cfg.vocab_cap);
    let x = build_tfidf::<f64, _>(&docs, &vocab).map_err(data)?;
    let model = nmf_fit(
        &x,
        &NmfConfig { topics: cfg.topics, max_iters: cfg.nmf_max_iters, tol: cfg.nmf_tol, seed: cfg.seed },
    )
    .map_err(data)?;

    let mut buf = Vec::new();
    vocab.write(&mut buf)?;
    run.write("vocab.txt", &buf)?;
    let mut buf = Vec::new();
    save_nmf(&model, &mut buf)?;
    run.write("nmf.bin", &buf)?;

    let mut kw = String::from("topic_id,rank,keyword,weight\n");
    for (t, words) in topic_keywords(&model.h, &vocab, cfg.top_k).iter().enumerate() {
        for (rank, (word, w)) in words.iter().enumerate() {
            writeln!(kw, "{},{},{word},{w}", topic_id(t), rank + 1).expect("string write");
        }
    }
    run.write("keywords.csv", kw.as_bytes())?;

    let assignment = assign_topics(&model.w, cfg.dominance).map_err(data)?;
    let mut asg = String::from("tweet_id,topic_id,weight\n");
    for (rec, ms) in records.iter().zip(&assignment.memberships) {
        for (t, w) in ms {
            writeln!(asg, "{},{},{w}", rec.tweet.tweet_id, topic_id(*t)).expect("string write");
        }
    }
    run.write("assignments.csv", asg.as_bytes())?;

    let mut err = String::from("iteration,error\n");
    for (i, e) in model.errors.iter().enumerate() {
        writeln!(err, "{i},{e}").expect("string write");
    }
    run.write("errors.csv", err.as_bytes())?;
    run.finish()
}

fn parse_topic(id: &str) -> Result<usize, PipelineError> {
    id.strip_prefix("topic-")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| PipelineError::Data(format!("bad topic id {id:?}")))
}

pub fn run_sentiment(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = Run::start(cfg, Stage::Sentiment)?;
    let records = cleaned(&mut run)?;
    let kw_bytes = run.artifact(TOPIC_KEYWORDS, Stage::Topics)?;
    let lexicon = run.required(&cfg.lexicon, "lexicon")?;
    let lexicon = Lexicon::<f64>::from_reader(lexicon.as_slice()).map_err(data)?;
    let vectors = match run.optional(&cfg.vectors)? {
        Some(b) => Some(WordVectors::<f64>::load(b.as_slice()).map_err(data)?),
        None => None,
    };
    let keywords: Vec<String> = csv_rows(&kw_bytes, TOPIC_KEYWORDS)?
        .iter()
        .map(|r| r.get(2).unwrap_or("").to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut scores = String::from("tweet_id,date,score\n");
    let mut links = String::from("tweet_id,keyword,token,weight,aspect_sentiment\n");
    for rec in &records {
        let t = &rec.tweet;
        let s = score_text(&t.text, &lexicon);
        writeln!(scores, "{},{},{s}", t.tweet_id, t.created_at.date_naive()).expect("string write");
        let link = match &vectors {
            Some(v) => {
                best_keyword_link(&rec.cleaned_text, &keywords, v).map(|l| (l.keyword, l.token, l.weight))
            }
            // without vectors only literal matches link
            None => {
                keywords.iter().find(|k| rec.cleaned_text.contains(k)).map(|k| (k.clone(), k.clone(), 1.0))
            }
        };
        if let Some((keyword, token, weight)) = link {
            let aspects = aspect_scores(&t.text, &[keyword.as_str(), token.as_str()], &lexicon);
            let aspect = aspects.get(&keyword).or_else(|| aspects.get(&token));
            writeln!(
                links,
                "{},{keyword},{token},{weight},{}",
                t.tweet_id,
                aspect.map(f64::to_string).unwrap_or_default()
            )
            .expect("string write");
        }
    }
    run.write("scores.csv", scores.as_bytes())?;
    run.write("keyword_links.csv", links.as_bytes())?;
    run.finish()
}

fn series_csv(s: &DailySeries<f64>) -> Result<Vec<u8>, PipelineError> {
    let mut buf = Vec::new();
    s.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn run_changepoints(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = Run::start(cfg, Stage::Changepoints)?;
    let scores = run.artifact(SCORES, Stage::Sentiment)?;
    let assignments = run.artifact(ASSIGNMENTS, Stage::Topics)?;
    let events = match run.optional(&cfg.events)? {
        Some(b) => load_events(b.as_slice()).map_err(data)?,
        None => Vec::new(),
    };

    let mut by_tweet: BTreeMap<u64, (NaiveDate, f64)> = BTreeMap::new();
    for r in csv_rows(&scores, SCORES)? {
        by_tweet.insert(field(&r, 0, SCORES)?, (field(&r, 1, SCORES)?, field(&r, 2, SCORES)?));
    }
    // series id → member observations; "all" is the whole corpus
    let mut groups: BTreeMap<(usize, String), Vec<(NaiveDate, f64)>> = BTreeMap::new();
    groups.insert((0, "all".into()), by_tweet.values().copied().collect());
    for r in csv_rows(&assignments, ASSIGNMENTS)? {
        let tweet: u64 = field(&r, 0, ASSIGNMENTS)?;
        let id = r.get(1).unwrap_or("").to_string();
        let key = (parse_topic(&id)? + 1, id);
        let obs = *by_tweet
            .get(&tweet)
            .ok_or_else(|| PipelineError::Data(format!("tweet {tweet} has a topic but no score")))?;
        groups.entry(key).or_default().push(obs);
    }

    let smooth = |s: DailySeries<f64>| -> Result<DailySeries<f64>, PipelineError> {
        if cfg.rolling {
            let v = rolling_mean(&s.values, cfg.window).map_err(data)?;
            Ok(s.with_values(v))
        } else {
            Ok(s)
        }
    };

    let mut penalty = cfg.penalty;
    if !cfg.penalty_grid.is_empty() {
        let targets: Vec<NaiveDate> = events.iter().map(|e| e.date).collect();
        let all = smooth(daily_mean(&groups[&(0, "all".to_string())]))?;
        penalty = tune_penalty(&all, &targets, &cfg.penalty_grid).map_err(data)?;
        log::info!("tuned penalty {penalty}");
    }
    run.write("penalty.txt", format!("{penalty}\n").as_bytes())?;

    let mut cps = String::from("topic_id,date\n");
    let mut peaks = String::from("topic_id,date\n");
    for ((_, id), obs) in &groups {
        let raw = daily_mean(obs);
        let series = smooth(raw.clone())?;
        run.write(&format!("series/{id}.csv"), &series_csv(&series)?)?;
        for d in pelt(&series.values, penalty).dates(&series.dates) {
            writeln!(cps, "{id},{d}").expect("string write");
        }
        let mut volume: BTreeMap<NaiveDate, f64> = BTreeMap::new();
        for (d, _) in obs {
            *volume.entry(*d).or_default() += 1.0;
        }
        let volume = DailySeries {
            dates: volume.keys().copied().collect(),
            values: volume.values().copied().collect(),
        };
        run.write(&format!("volume/{id}.csv"), &series_csv(&volume)?)?;
        for i in detect_peaks(&volume.values, cfg.prominence) {
            writeln!(peaks, "{id},{}", volume.dates[i]).expect("string write");
        }
    }
    run.write("changepoints.csv", cps.as_bytes())?;
    run.write("peaks.csv", peaks.as_bytes())?;
    run.finish()
}

pub fn run_build_graph(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = Run::start(cfg, Stage::BuildGraph)?;
    let records = cleaned(&mut run)?;
    let nmf = run.artifact(NMF_MODEL, Stage::Topics)?;
    let kw = run.artifact(TOPIC_KEYWORDS, Stage::Topics)?;
    let asg = run.artifact(ASSIGNMENTS, Stage::Topics)?;
    let scores = run.artifact(SCORES, Stage::Sentiment)?;
    let links = run.artifact(KEYWORD_LINKS, Stage::Sentiment)?;
    let cps = run.artifact(CHANGEPOINTS, Stage::Changepoints)?;
    let events = match run.optional(&cfg.events)? {
        Some(b) => load_events(b.as_slice()).map_err(data)?,
        None => Vec::new(),
    };
    let date_stats = match run.optional(&cfg.stats)? {
        Some(b) => load_date_stats(b.as_slice()).map_err(data)?.0,
        None => BTreeMap::new(),
    };

    let (_, h) = load_nmf::<f64, _>(nmf.as_slice()).map_err(data)?;
    let mut inputs = BuildInputs {
        tweets: records.into_iter().map(|r| r.tweet).collect(),
        topic_count: h.rows(),
        topic_keywords: vec![Vec::new(); h.rows()],
        ..BuildInputs::default()
    };
    for r in csv_rows(&kw, TOPIC_KEYWORDS)? {
        let t = parse_topic(r.get(0).unwrap_or(""))?;
        let slot = inputs
            .topic_keywords
            .get_mut(t)
            .ok_or_else(|| PipelineError::Data(format!("topic {t} beyond model")))?;
        slot.push((r.get(2).unwrap_or("").to_string(), field(&r, 3, TOPIC_KEYWORDS)?));
    }
    for r in csv_rows(&asg, ASSIGNMENTS)? {
        let t = parse_topic(r.get(1).unwrap_or(""))?;
        inputs
            .memberships
            .entry(field(&r, 0, ASSIGNMENTS)?)
            .or_default()
            .push((t, field(&r, 2, ASSIGNMENTS)?));
    }
    for r in csv_rows(&scores, SCORES)? {
        inputs.sentiment.insert(field(&r, 0, SCORES)?, field(&r, 2, SCORES)?);
    }
    for r in csv_rows(&links, KEYWORD_LINKS)? {
        let aspect = r.get(4).unwrap_or("");
        inputs.keyword_links.insert(
            field(&r, 0, KEYWORD_LINKS)?,
            TweetKeyword {
                keyword: r.get(1).unwrap_or("").to_string(),
                weight: field(&r, 3, KEYWORD_LINKS)?,
                aspect_sentiment: if aspect.is_empty() { None } else { Some(field(&r, 4, KEYWORD_LINKS)?) },
            },
        );
    }
    for r in csv_rows(&cps, CHANGEPOINTS)? {
        let id = r.get(0).unwrap_or("");
        if id.starts_with("topic-") {
            inputs.changepoints.push((parse_topic(id)?, field(&r, 1, CHANGEPOINTS)?));
        }
    }

    let tweet_days = inputs.tweets.iter().map(|t| t.created_at.date_naive());
    let (lo, hi) = (tweet_days.clone().min(), tweet_days.max());
    let start = cfg.span_start.or(lo).ok_or_else(|| data("no tweets and no span configured"))?;
    let end = cfg.span_end.or(hi).ok_or_else(|| data("no tweets and no span configured"))?;
    let config = BuildConfig { start, end, dominance: cfg.dominance, top_k: cfg.top_k, penalty: cfg.penalty };
    let in_span = |d: &NaiveDate| start <= *d && *d <= end;
    let outside = events.iter().filter(|e| !in_span(&e.date)).count();
    if outside > 0 {
        log::warn!("{outside} events fall outside {start}..{end} and are left out");
    }
    inputs.events = events.into_iter().filter(|e| in_span(&e.date)).collect();
    inputs.date_stats = date_stats.into_iter().filter(|(d, _)| in_span(d)).collect();

    let (graph, report) = build(&inputs, &config).map_err(data)?;
    let mut buf = Vec::new();
    export_triples(&graph, &mut buf).map_err(data)?;
    run.write("triples.tsv", &buf)?;
    let mut buf = Vec::new();
    export_attrs(&graph, &mut buf).map_err(data)?;
    run.write("attrs.jsonl", &buf)?;
    let summary = serde_json::json!({
        "span_start": start.to_string(),
        "span_end": end.to_string(),
        "skipped_replies": report.skipped_replies,
        "skipped_quotes": report.skipped_quotes,
        "tweets_without_topic": report.tweets_without_topic,
        "events_outside_span": outside,
    });
    let mut text = serde_json::to_string_pretty(&summary).map_err(data)?;
    text.push('\n');
    run.write("report.json", text.as_bytes())?;
    run.finish()
}

pub fn run_stats(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = Run::start(cfg, Stage::Stats)?;
    let graph = load_graph(&mut run)?;
    let stats = graph.stats();
    run.write("graph_stats.csv", format!("{}\n{}\n", GraphStats::CSV_HEADER, stats.to_csv_row()).as_bytes())?;
    let h = wcc_histograms(&graph, &[EntityKind::Tweet]).map_err(data)?;
    run.write("wcc_sizes.csv", h.sizes_csv().as_bytes())?;
    run.write("wcc_longest_paths.csv", h.longest_paths_csv().as_bytes())?;
    run.finish()
}

pub fn run_train(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = Run::start(cfg, Stage::Train)?;
    let graph = load_graph(&mut run)?;
    let out = train(&graph, &cfg.embedding_params(), cfg.layer).map_err(data)?;
    let mut buf = Vec::new();
    save_model(&out.model, &mut buf).map_err(data)?;
    run.write("model.bin", &buf)?;
    let mut losses = String::from("epoch,train,validation\n");
    for (i, l) in out.losses.iter().enumerate() {
        writeln!(losses, "{},{},{}", i + 1, l.train, l.validation).expect("string write");
    }
    run.write("losses.csv", losses.as_bytes())?;
    run.finish()
}

pub fn run_predict(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = Run::start(cfg, Stage::Predict)?;
    let model_bytes = run.artifact(MODEL, Stage::Train)?;
    let graph = load_graph(&mut run)?;
    let model: TransD<f64> = load_model(BufReader::new(model_bytes.as_slice())).map_err(data)?;
    let (hk, tk) = cfg.predict_relation.signature();
    let links = predict_links(
        &model,
        &graph,
        cfg.predict_relation,
        graph.entities_of_kind(hk),
        graph.entities_of_kind(tk),
        cfg.percentile,
    )
    .map_err(data)?;
    let mut buf = Vec::new();
    write_predictions(&links, &mut buf)?;
    run.write("predictions.csv", &buf)?;
    run.finish()
}

pub fn run_communities(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    let mut run = Run::start(cfg, Stage::Communities)?;
    let graph = load_graph(&mut run)?;
    let result = louvain(&graph, cfg.seed);
    let mut buf = Vec::new();
    write_communities(&result.partition, &graph, &mut buf)?;
    run.write("communities.csv", &buf)?;
    let mut buf = Vec::new();
    write_community_report(&community_report(&result.partition, &graph), &mut buf)?;
    run.write("report.csv", &buf)?;
    let mut trace = String::from("level,modularity\n");
    for (i, q) in result.trace.iter().enumerate() {
        writeln!(trace, "{},{q}", i + 1).expect("string write");
    }
    run.write("modularity.csv", trace.as_bytes())?;
    run.finish()
}

pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<Manifest, PipelineError> {
    match stage {
        Stage::Ingest => run_ingest(cfg),
        Stage::Topics => run_topics(cfg),
        Stage::Sentiment => run_sentiment(cfg),
        Stage::Changepoints => run_changepoints(cfg),
        Stage::BuildGraph => run_build_graph(cfg),
        Stage::Stats => run_stats(cfg),
        Stage::Train => run_train(cfg),
        Stage::Predict => run_predict(cfg),
        Stage::Communities => run_communities(cfg),
    }
}

/// Runs every stage in order.
pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<Manifest>, PipelineError> {
    Stage::ALL.into_iter().map(|s| run_stage(cfg, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let cfg = PipelineConfig::default();
        for k in PipelineConfig::KEYS {
            let v = cfg.get(k).unwrap();
            let mut c2 = cfg.clone();
            c2.set(k, &v).unwrap();
            assert_eq!(c2, cfg, "{k}");
        }
        for s in Stage::ALL {
            for k in s.keys() {
                assert!(cfg.get(k).is_some(), "{k}");
            }
        }
    }

    #[test]
    fn config_file_and_errors() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_file("# comment\nseed = 7\n\npenalty_grid = 0.1, 1,10\nlayer=plain\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.penalty_grid, [0.1, 1.0, 10.0]);
        assert_eq!(cfg.layer, Layer::Plain);
        assert_eq!(cfg.set("nope", "1").unwrap_err().exit_code(), 1);
        assert_eq!(cfg.set("seed", "x").unwrap_err().exit_code(), 1);
        assert!(cfg.apply_file("seed 3").is_err());
    }
}
