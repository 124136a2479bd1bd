//! Python bindings: `import infodeficit_py`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict};

use infodeficit::data::synthetic::{gen_synthetic as gen, SyntheticConfig};
use infodeficit::data::text;
use infodeficit::encoders::{url_char_ids, PastStep, DEFAULT_MAX_URL_CHARS};
use infodeficit::retention::{self, metrics_from_predictions};
use infodeficit::run::{self, Checkpoint, PastInput, RunConfig, RunReport};
use infodeficit::selection;
use infodeficit::{Ablation, ContextOrder, ModelDims};

/// `(user, query, timestamp, url)` as written to the log.
type LogRow = (String, String, u64, Option<String>);

create_exception!(infodeficit_py, InfodeficitError, PyException);

fn err(e: infodeficit::Error) -> PyErr {
    InfodeficitError::new_err(format!("{}: {e}", e.kind()))
}

fn config_from(values: Option<&Bound<'_, PyDict>>) -> PyResult<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(values) = values {
        for (k, v) in values.iter() {
            let key: String = k.extract()?;
            let value = if v.is_instance_of::<PyBool>() {
                v.extract::<bool>()?.to_string()
            } else {
                v.str()?.to_string()
            };
            config.set(&key, &value).map_err(err)?;
        }
    }
    Ok(config)
}

fn report_dict<'py>(py: Python<'py>, report: &RunReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("command", &report.command)?;
    d.set_item("losses", &report.losses)?;
    d.set_item("corpus", &report.corpus)?;
    let metrics = PyDict::new(py);
    for row in &report.metrics {
        metrics.set_item(&row.name, &row.values)?;
    }
    d.set_item("metrics", metrics)?;
    d.set_item("wall_time_secs", report.wall_time_secs)?;
    Ok(d)
}

/// Lowercased query words.
#[pyfunction]
fn tokenize(raw: &str) -> Vec<String> {
    text::tokenize(raw)
}

/// 1 for each current word that appears in the next query.
#[pyfunction]
fn label_edits(current: Vec<String>, next: Vec<String>) -> PyResult<Vec<u32>> {
    let labels = retention::label_edits(&current, &next).map_err(err)?;
    Ok(labels.into_iter().map(u32::from).collect())
}

/// Accuracy (mean over queries) and removal-class scores.
#[pyfunction]
fn retention_metrics(
    predictions: Vec<Vec<u8>>,
    labels: Vec<Vec<u8>>,
) -> PyResult<BTreeMap<String, f64>> {
    let m = metrics_from_predictions(&predictions, &labels).map_err(err)?;
    Ok(BTreeMap::from([
        ("accuracy".to_string(), m.accuracy),
        ("micro_accuracy".to_string(), m.micro_accuracy),
        ("f1_removal".to_string(), m.f1_removal),
        ("precision_removal".to_string(), m.precision_removal),
        ("recall_removal".to_string(), m.recall_removal),
    ]))
}

/// Reciprocal rank of `truth` with ties ranked against it.
#[pyfunction]
fn reciprocal_rank(scores: Vec<f64>, truth: usize) -> PyResult<f64> {
    if truth >= scores.len() {
        return Err(InfodeficitError::new_err("truth index out of range"));
    }
    Ok(selection::reciprocal_rank(&scores, truth))
}

/// Synthetic log rows `(user_id, query, timestamp, url_or_None)` and the
/// Bayes accuracy ceiling.
#[pyfunction]
#[pyo3(signature = (n_sessions, seed, vocab_size = 40, deficit_strength = 1.0))]
fn gen_synthetic(
    n_sessions: usize,
    seed: u64,
    vocab_size: usize,
    deficit_strength: f64,
) -> PyResult<(Vec<LogRow>, f64)> {
    let corpus = gen(SyntheticConfig {
        n_sessions,
        vocab_size,
        seed,
        deficit_strength,
    })
    .map_err(err)?;
    let rows = corpus
        .records()
        .into_iter()
        .map(|r| (r.user_id, r.raw_query, r.timestamp, r.clicked_url))
        .collect();
    Ok((rows, corpus.bayes_accuracy()))
}

#[pyfunction]
#[pyo3(signature = (config = None))]
fn generate(config: Option<&Bound<'_, PyDict>>) -> PyResult<BTreeMap<String, f64>> {
    run::cmd_gen_synthetic(&config_from(config)?).map_err(err)
}

/// Preprocesses `input` into `workdir`; returns whole-log filter tallies.
#[pyfunction]
#[pyo3(signature = (config = None))]
fn preprocess(config: Option<&Bound<'_, PyDict>>) -> PyResult<BTreeMap<String, usize>> {
    let manifest = run::cmd_preprocess(&config_from(config)?).map_err(err)?;
    let t = manifest.totals;
    let mut out = BTreeMap::from([
        ("sessions".to_string(), t.sessions),
        ("pairs".to_string(), t.pairs),
        ("kept".to_string(), t.kept),
        ("no_context".to_string(), t.no_context),
        ("examples".to_string(), t.examples),
    ]);
    for (k, v) in t.dropped {
        out.insert(format!("dropped_{k}"), v);
    }
    Ok(out)
}

#[pyfunction]
#[pyo3(signature = (config = None))]
fn train<'py>(
    py: Python<'py>,
    config: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let report = run::cmd_train(&config_from(config)?).map_err(err)?;
    report_dict(py, &report)
}

#[pyfunction]
#[pyo3(signature = (config = None, checkpoints = Vec::new()))]
fn evaluate<'py>(
    py: Python<'py>,
    config: Option<&Bound<'py, PyDict>>,
    checkpoints: Vec<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let report = run::cmd_eval(&config_from(config)?, &checkpoints).map_err(err)?;
    report_dict(py, &report)
}

/// `past` holds `(query, [urls])` pairs, most recent first.
#[pyfunction]
#[pyo3(signature = (config, query, past = Vec::new(), candidates = Vec::new()))]
fn predict(
    config: &Bound<'_, PyDict>,
    query: &str,
    past: Vec<(String, Vec<String>)>,
    candidates: Vec<String>,
) -> PyResult<Vec<(String, f64)>> {
    let past: Vec<PastInput> = past
        .into_iter()
        .map(|(query, clicks)| PastInput { query, clicks })
        .collect();
    run::cmd_predict(&config_from(Some(config))?, query, &past, &candidates).map_err(err)
}

/// A model with freshly initialized or loaded parameters.
#[pyclass]
struct Model {
    inner: infodeficit::Model,
    ablation: Ablation,
    order: ContextOrder,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (vocab_size, seed, embed_dim = 64, char_embed_dim = 16, hidden_dim = 64))]
    fn new(
        vocab_size: usize,
        seed: u64,
        embed_dim: usize,
        char_embed_dim: usize,
        hidden_dim: usize,
    ) -> PyResult<Self> {
        let dims = ModelDims {
            vocab_size,
            embed_dim,
            char_embed_dim,
            hidden_dim,
        };
        Ok(Model {
            inner: infodeficit::Model::new(dims, seed).map_err(err)?,
            ablation: Ablation::NONE,
            order: ContextOrder::default(),
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ck = Checkpoint::load(&path).map_err(err)?;
        Ok(Model {
            ablation: ck.config.ablation(),
            order: ck.config.context_order,
            inner: ck.model,
        })
    }

    fn num_parameters(&self) -> usize {
        self.inner.params.num_scalars()
    }

    fn parameter_names(&self) -> Vec<String> {
        self.inner
            .params
            .iter()
            .map(|(_, n, _)| n.to_string())
            .collect()
    }

    /// `(shape, flat values)` of a named tensor.
    fn tensor(&self, name: &str) -> PyResult<(Vec<usize>, Vec<f64>)> {
        let id = self
            .inner
            .params
            .id(name)
            .ok_or_else(|| InfodeficitError::new_err(format!("no tensor `{name}`")))?;
        let t = self.inner.params.get(id);
        Ok((t.shape().to_vec(), t.values().to_vec()))
    }

    /// `(p_removal, p_retention)` per word; `past` holds
    /// `(query_ids, [urls])` pairs, most recent first.
    #[pyo3(signature = (word_ids, past = Vec::new()))]
    fn predict_retention(
        &self,
        word_ids: Vec<usize>,
        past: Vec<(Vec<usize>, Vec<String>)>,
    ) -> PyResult<Vec<(f64, f64)>> {
        let past = past_steps(past);
        let probs =
            retention::predict_retention(&self.inner, &word_ids, &past, self.ablation, self.order)
                .map_err(err)?;
        Ok(probs.into_iter().map(|p| (p[0], p[1])).collect())
    }

    #[pyo3(signature = (word_ids, candidates, past = Vec::new()))]
    fn score_candidates(
        &self,
        word_ids: Vec<usize>,
        candidates: Vec<Vec<usize>>,
        past: Vec<(Vec<usize>, Vec<String>)>,
    ) -> PyResult<Vec<f64>> {
        let past = past_steps(past);
        selection::score_candidates(
            &self.inner,
            &word_ids,
            &past,
            &candidates,
            self.ablation,
            self.order,
        )
        .map_err(err)
    }
}

fn past_steps(past: Vec<(Vec<usize>, Vec<String>)>) -> Vec<PastStep> {
    past.into_iter()
        .map(|(query_ids, urls)| PastStep {
            query_ids,
            url_chars: url_char_ids(&urls, DEFAULT_MAX_URL_CHARS),
        })
        .collect()
}

#[pymodule]
fn infodeficit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("InfodeficitError", m.py().get_type::<InfodeficitError>())?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(label_edits, m)?)?;
    m.add_function(wrap_pyfunction!(retention_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(reciprocal_rank, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    Ok(())
}
