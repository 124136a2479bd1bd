//! The five commands behind the command-line tool.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::checkpoint::Checkpoint;
use super::config::RunConfig;
use super::report::{aggregate, MetricsRow, RunReport};
use crate::data::examples::FilterStats;
use crate::data::log::{read_log, write_log};
use crate::data::synthetic::{gen_synthetic, SyntheticConfig};
use crate::data::text::tokenize;
use crate::data::vocab::Vocabulary;
use crate::encoders::{url_char_ids, PastStep};
use crate::error::{Error, Result};
use crate::model::{Model, ModelDims, Task};
use crate::pipeline::prepare;
use crate::retention::{
    eval_retention, majority_baseline, predict_retention, train_retention, RetentionExample,
    RetentionMetrics,
};
use crate::selection::{
    eval_mrr, score_candidates, train_selection, write_candidates, SelectionExample,
    SelectionMetrics,
};
use crate::train::Trainer;

pub const SPLITS: [&str; 3] = ["train", "dev", "test"];
pub const VOCAB_FILE: &str = "vocab.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn retention_file(split: &str) -> String {
    format!("{split}.retention.jsonl")
}

pub fn selection_file(split: &str) -> String {
    format!("{split}.selection.jsonl")
}

pub fn candidates_file(split: &str) -> String {
    format!("{split}.candidates.tsv")
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.push(b'\n');
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: format!("{}: {e}", path.display()),
        })?);
    }
    Ok(out)
}

fn input_path(config: &RunConfig) -> Result<&Path> {
    config
        .input
        .as_deref()
        .ok_or_else(|| Error::Config("`input` is required".into()))
}

/// Writes a synthetic log to `input` and returns summary numbers.
pub fn cmd_gen_synthetic(config: &RunConfig) -> Result<BTreeMap<String, f64>> {
    let corpus = gen_synthetic(SyntheticConfig {
        n_sessions: config.synthetic_sessions,
        vocab_size: config.synthetic_vocab,
        seed: config.seed()?,
        deficit_strength: config.deficit_strength,
    })?;
    let records = corpus.records();
    let path = input_path(config)?;
    let mut buf = Vec::new();
    write_log(&mut buf, &records).map_err(|e| Error::io(path, e))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_file(path, &buf)?;
    Ok(BTreeMap::from([
        ("sessions".to_string(), corpus.sessions.len() as f64),
        ("rows".to_string(), records.len() as f64),
        ("bayes_accuracy".to_string(), corpus.bayes_accuracy()),
    ]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub sessions: usize,
    pub filter: FilterStats,
    pub selection_examples: usize,
    pub unscorable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub vocab_size: usize,
    /// Whole-log tallies before splitting.
    pub totals: FilterStats,
    pub splits: BTreeMap<String, SplitManifest>,
    /// sha256 of every artifact.
    pub files: BTreeMap<String, String>,
}

fn echo(config: &RunConfig) -> BTreeMap<String, String> {
    config
        .entries()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

pub fn cmd_preprocess(config: &RunConfig) -> Result<Manifest> {
    config.validate()?;
    let path = input_path(config)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let records = read_log(BufReader::new(file))?;
    let prepared = prepare(&records, &config.prepare_config()?)?;
    let dir = &config.workdir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut files = BTreeMap::new();
    let mut emit = |name: String, bytes: Vec<u8>| -> Result<()> {
        write_file(&dir.join(&name), &bytes)?;
        files.insert(name, sha256_hex(&bytes));
        Ok(())
    };
    let mut vocab_bytes = Vec::new();
    prepared
        .vocab
        .write_tsv(&mut vocab_bytes)
        .map_err(|e| Error::io(dir.join(VOCAB_FILE), e))?;
    emit(VOCAB_FILE.to_string(), vocab_bytes)?;

    let mut splits = BTreeMap::new();
    let mut totals = FilterStats::default();
    for name in SPLITS {
        let data = prepared.split(name)?;
        emit(retention_file(name), to_jsonl(&data.examples.retention)?)?;
        emit(selection_file(name), to_jsonl(&data.selection)?)?;
        let mut tsv = Vec::new();
        write_candidates(&mut tsv, &data.selection)
            .map_err(|e| Error::io(dir.join(candidates_file(name)), e))?;
        emit(candidates_file(name), tsv)?;

        let stats = &data.examples.stats;
        totals.sessions += stats.sessions;
        totals.pairs += stats.pairs;
        totals.kept += stats.kept;
        totals.no_context += stats.no_context;
        totals.examples += stats.examples;
        for (k, v) in &stats.dropped {
            *totals.dropped.entry(k.clone()).or_default() += v;
        }
        splits.insert(
            name.to_string(),
            SplitManifest {
                sessions: prepared.sessions(name)?.len(),
                filter: stats.clone(),
                selection_examples: data.selection.len(),
                unscorable: data.unscorable,
            },
        );
    }
    let manifest = Manifest {
        seed: config.seed()?,
        config: echo(config),
        vocab_size: prepared.vocab.len(),
        totals,
        splits,
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_file(&dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(manifest)
}

pub fn load_vocab(workdir: &Path) -> Result<Vocabulary> {
    let path = workdir.join(VOCAB_FILE);
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    Vocabulary::read_tsv(BufReader::new(file))
}

fn model_dims(config: &RunConfig, vocab_size: usize) -> ModelDims {
    ModelDims {
        vocab_size,
        embed_dim: config.embed_dim,
        char_embed_dim: config.char_embed_dim,
        hidden_dim: config.hidden_dim,
    }
}

fn retention_row(name: &str, m: &RetentionMetrics) -> MetricsRow {
    MetricsRow {
        name: name.into(),
        values: BTreeMap::from([
            ("accuracy".to_string(), m.accuracy),
            ("micro_accuracy".to_string(), m.micro_accuracy),
            ("f1_removal".to_string(), m.f1_removal),
            ("precision_removal".to_string(), m.precision_removal),
            ("recall_removal".to_string(), m.recall_removal),
            ("n_queries".to_string(), m.n_queries as f64),
            ("n_words".to_string(), m.n_words as f64),
        ]),
    }
}

fn selection_row(name: &str, m: &SelectionMetrics) -> MetricsRow {
    MetricsRow {
        name: name.into(),
        values: BTreeMap::from([
            ("mrr".to_string(), m.mrr),
            ("n_examples".to_string(), m.n_examples as f64),
            ("mean_candidates".to_string(), m.mean_candidates),
        ]),
    }
}

/// Examples of one split for the configured task.
enum TaskData {
    Retention(Vec<RetentionExample>),
    Selection(Vec<SelectionExample>),
}

impl TaskData {
    fn load(task: Task, workdir: &Path, split: &str) -> Result<Self> {
        Ok(match task {
            Task::Retention => {
                TaskData::Retention(read_jsonl(&workdir.join(retention_file(split)))?)
            }
            Task::Selection => {
                TaskData::Selection(read_jsonl(&workdir.join(selection_file(split)))?)
            }
        })
    }

    fn len(&self) -> usize {
        match self {
            TaskData::Retention(e) => e.len(),
            TaskData::Selection(e) => e.len(),
        }
    }

    fn evaluate(&self, name: &str, model: &Model, config: &RunConfig) -> Result<MetricsRow> {
        let (ablation, order) = (config.ablation(), config.context_order);
        Ok(match self {
            TaskData::Retention(e) => {
                retention_row(name, &eval_retention(model, e, ablation, order)?)
            }
            TaskData::Selection(e) => selection_row(name, &eval_mrr(model, e, ablation, order)?),
        })
    }
}

fn write_report(config: &RunConfig, stem: &str, report: &RunReport) -> Result<()> {
    let base = format!("{}.{stem}", config.task.as_str());
    write_file(
        &config.workdir.join(format!("{base}.jsonl")),
        report.to_jsonl()?.as_bytes(),
    )?;
    write_file(
        &config.workdir.join(format!("{base}.txt")),
        report.to_text().as_bytes(),
    )
}

fn build_trainer(config: &RunConfig, vocab_size: usize) -> Result<(Trainer, Vec<f64>)> {
    let dims = model_dims(config, vocab_size);
    let path = config.checkpoint_path();
    if config.resume && path.exists() {
        let ck = Checkpoint::load(&path)?;
        if ck.config.task != config.task {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained for {}, not {}",
                ck.config.task.as_str(),
                config.task.as_str()
            )));
        }
        if ck.model.dims() != dims {
            return Err(Error::Checkpoint(format!(
                "checkpoint dims {:?} do not match the configured {:?}",
                ck.model.dims(),
                dims
            )));
        }
        let trainer = Trainer::resume(
            ck.model,
            ck.adam,
            config.task,
            config.train_config()?,
            ck.epochs_done,
        )?;
        return Ok((trainer, ck.losses));
    }
    let mut model = Model::new(dims, config.seed()?)?;
    if let Some(from) = &config.init_from {
        let source = Checkpoint::load(from)?;
        if source.model.dims() != dims {
            return Err(Error::Checkpoint(format!(
                "init_from dims {:?} do not match the configured {:?}",
                source.model.dims(),
                dims
            )));
        }
        model.params = source.model.params;
    }
    Ok((
        Trainer::new(model, config.task, config.train_config()?)?,
        Vec::new(),
    ))
}

/// Trains up to `config.epochs` total epochs, checkpointing after each.
pub fn cmd_train(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let vocab = load_vocab(&config.workdir)?;
    let train = TaskData::load(config.task, &config.workdir, "train")?;
    let dev = TaskData::load(config.task, &config.workdir, "dev")?;
    let (mut trainer, mut losses) = build_trainer(config, vocab.len())?;
    let path = config.checkpoint_path();

    let save = |trainer: &Trainer, losses: &[f64]| {
        Checkpoint {
            config: config.clone(),
            model: trainer.model.clone(),
            adam: trainer.adam.clone(),
            epochs_done: trainer.epochs_done,
            losses: losses.to_vec(),
        }
        .save(&path)
    };
    trainer.config.epochs = 1;
    let mut ran = false;
    while trainer.epochs_done < config.epochs {
        ran = true;
        let curve = match &train {
            TaskData::Retention(e) => train_retention(&mut trainer, e)?,
            TaskData::Selection(e) => train_selection(&mut trainer, e)?,
        };
        losses.extend(curve);
        save(&trainer, &losses)?;
    }
    if !ran {
        save(&trainer, &losses)?;
    }

    let mut report = RunReport {
        command: "train".into(),
        config: echo(config),
        corpus: BTreeMap::from([
            ("train_examples".to_string(), train.len() as f64),
            ("dev_examples".to_string(), dev.len() as f64),
            ("vocab_size".to_string(), vocab.len() as f64),
            (
                "parameters".to_string(),
                trainer.model.params.num_scalars() as f64,
            ),
        ]),
        losses,
        ..Default::default()
    };
    if dev.len() > 0 {
        report
            .metrics
            .push(dev.evaluate("dev", &trainer.model, config)?);
    }
    if config.report_wall_time {
        report.wall_time_secs = Some(started.elapsed().as_secs_f64());
    }
    write_report(config, "train", &report)?;
    Ok(report)
}

/// Evaluates one or more checkpoints on `config.eval_split`; with several,
/// adds mean and standard-deviation rows.
pub fn cmd_eval(config: &RunConfig, checkpoints: &[PathBuf]) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let paths: Vec<PathBuf> = if checkpoints.is_empty() {
        vec![config.checkpoint_path()]
    } else {
        checkpoints.to_vec()
    };
    let data = TaskData::load(config.task, &config.workdir, &config.eval_split)?;
    if data.len() == 0 {
        return Err(Error::Empty("evaluation split"));
    }
    let mut rows = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        let ck = Checkpoint::load(path)?;
        if ck.config.task != config.task {
            return Err(Error::Checkpoint(format!(
                "{} holds a {} model, cannot evaluate {}",
                path.display(),
                ck.config.task.as_str(),
                config.task.as_str()
            )));
        }
        let name = if paths.len() == 1 {
            "model".to_string()
        } else {
            format!("model_{}", i + 1)
        };
        rows.push(data.evaluate(&name, &ck.model, &ck.config)?);
    }
    let mut metrics = rows.clone();
    if rows.len() > 1 {
        let (mean, std) = aggregate(&rows);
        metrics.push(mean);
        metrics.push(std);
    }
    if config.baseline {
        metrics.push(match &data {
            TaskData::Retention(e) => retention_row("majority", &majority_baseline(e)?),
            TaskData::Selection(e) => {
                let expected = e
                    .iter()
                    .map(|ex| {
                        let c = ex.candidates.len();
                        (1..=c).map(|i| 1.0 / i as f64).sum::<f64>() / c as f64
                    })
                    .sum::<f64>()
                    / e.len() as f64;
                MetricsRow {
                    name: "random_expected".into(),
                    values: BTreeMap::from([("mrr".to_string(), expected)]),
                }
            }
        });
    }
    let mut report = RunReport {
        command: "eval".into(),
        config: echo(config),
        corpus: BTreeMap::from([
            ("examples".to_string(), data.len() as f64),
            ("checkpoints".to_string(), paths.len() as f64),
        ]),
        metrics,
        ..Default::default()
    };
    if config.report_wall_time {
        report.wall_time_secs = Some(started.elapsed().as_secs_f64());
    }
    write_report(config, "eval", &report)?;
    Ok(report)
}

/// One earlier step given to `predict`: raw query text and clicked urls.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PastInput {
    pub query: String,
    pub clicks: Vec<String>,
}

/// Per-word retention probabilities, or candidates sorted by score.
pub fn cmd_predict(
    config: &RunConfig,
    query: &str,
    past: &[PastInput],
    candidates: &[String],
) -> Result<Vec<(String, f64)>> {
    let ck = Checkpoint::load(&config.checkpoint_path())?;
    let vocab = load_vocab(&config.workdir)?;
    let words = tokenize(query);
    if words.is_empty() {
        return Err(Error::Empty("query"));
    }
    let past: Vec<PastStep> = past
        .iter()
        .take(ck.config.context_window)
        .map(|p| {
            let q = tokenize(&p.query);
            if q.is_empty() {
                return Err(Error::Empty("past query"));
            }
            Ok(PastStep {
                query_ids: vocab.ids(&q),
                url_chars: url_char_ids(&p.clicks, ck.config.max_url_chars),
            })
        })
        .collect::<Result<_>>()?;
    let (ablation, order) = (ck.config.ablation(), ck.config.context_order);
    let ids = vocab.ids(&words);
    match ck.config.task {
        Task::Retention => {
            let probs = predict_retention(&ck.model, &ids, &past, ablation, order)?;
            Ok(words.into_iter().zip(probs.iter().map(|p| p[1])).collect())
        }
        Task::Selection => {
            if candidates.is_empty() {
                return Err(Error::Empty("candidates"));
            }
            let texts: Vec<String> = candidates.iter().map(|c| tokenize(c).join(" ")).collect();
            if texts.iter().any(String::is_empty) {
                return Err(Error::Empty("candidate"));
            }
            let cand_ids: Vec<Vec<usize>> = texts
                .iter()
                .map(|t| vocab.ids(&t.split(' ').collect::<Vec<_>>()))
                .collect();
            let scores = score_candidates(&ck.model, &ids, &past, &cand_ids, ablation, order)?;
            let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
            // stable: equal scores keep input order
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
            Ok(ranked
                .into_iter()
                .map(|(i, s)| (texts[i].clone(), s))
                .collect())
        }
    }
}

/// Writes rows as `text\tvalue` lines.
pub fn write_predictions(mut out: impl Write, rows: &[(String, f64)]) -> std::io::Result<()> {
    for (text, value) in rows {
        writeln!(out, "{text}\t{value}")?;
    }
    Ok(())
}
