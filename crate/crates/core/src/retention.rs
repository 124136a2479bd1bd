//! Per-word retention/removal prediction.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::encoders::{encode_query, encode_session, gru_forward, PastStep};
use crate::error::{Error, Result};
use crate::math::{Graph, Var};
use crate::model::{Ablation, ContextOrder, Layout, Model, Task};
use crate::train::{LossKind, TrainConfig, Trainer};

/// Label of a word that does not reappear in the next query.
pub const REMOVAL: u8 = 0;
/// Label of a word that reappears in the next query.
pub const RETENTION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetentionExample {
    pub current_ids: Vec<usize>,
    #[serde(skip)]
    pub raw_words: Vec<String>,
    /// Most recent first.
    pub past: Vec<PastStep>,
    pub labels: Vec<u8>,
}

/// `1` for each current word found anywhere in the next query.
pub fn label_edits<S: AsRef<str>>(current: &[S], next: &[S]) -> Result<Vec<u8>> {
    if next.is_empty() {
        return Err(Error::Empty("next query"));
    }
    let next: HashSet<&str> = next.iter().map(AsRef::as_ref).collect();
    Ok(current
        .iter()
        .map(|w| u8::from(next.contains(w.as_ref())))
        .collect())
}

/// `v_i = GRU_dec(z, v_{i−1})` for `i = 1..n` from `v_0 = 0`.
pub fn decode_steps(g: &mut Graph, layout: &Layout, z: Var, n: usize) -> Result<Vec<Var>> {
    if n == 0 {
        return Err(Error::Empty("decoder steps"));
    }
    let v0 = g.zeros(layout.dims.hidden_dim);
    gru_forward(g, &layout.dec, &vec![z; n], v0)
}

/// Per-word `(p_removal, p_retention)` nodes of one example.
pub fn retention_forward(
    g: &mut Graph,
    layout: &Layout,
    current_ids: &[usize],
    past: &[PastStep],
    ablation: Ablation,
    order: ContextOrder,
) -> Result<Vec<Var>> {
    let q = encode_query(g, layout, current_ids)?;
    let session = encode_session(g, layout, past, ablation, order)?;
    let steps = decode_steps(g, layout, q.z, current_ids.len())?;
    let w = g.param(layout.retention_w);
    let b = g.param(layout.retention_b);
    steps
        .into_iter()
        .map(|v| {
            let x = g.concat(&[v, session.deficit, session.context], 0)?;
            let logits = g.affine(&[(w, x)], Some(b))?;
            Ok(g.softmax(logits))
        })
        .collect()
}

/// Probability pairs for every word of `current_ids`.
pub fn predict_retention(
    model: &Model,
    current_ids: &[usize],
    past: &[PastStep],
    ablation: Ablation,
    order: ContextOrder,
) -> Result<Vec<[f64; 2]>> {
    let mut g = Graph::new(&model.params);
    let probs = retention_forward(&mut g, &model.layout, current_ids, past, ablation, order)?;
    Ok(probs
        .iter()
        .map(|&p| {
            let v = g.value(p);
            [v[0], v[1]]
        })
        .collect())
}

/// Argmax with ties resolved to retention.
pub fn hard_label(p: [f64; 2]) -> u8 {
    if p[0] > p[1] {
        REMOVAL
    } else {
        RETENTION
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionMetrics {
    /// Mean over queries of per-query word accuracy.
    pub accuracy: f64,
    /// Accuracy pooled over all words.
    pub micro_accuracy: f64,
    pub f1_removal: f64,
    pub precision_removal: f64,
    pub recall_removal: f64,
    pub n_queries: usize,
    pub n_words: usize,
    pub per_query_accuracies: Vec<f64>,
}

pub fn metrics_from_predictions(
    predictions: &[Vec<u8>],
    labels: &[Vec<u8>],
) -> Result<RetentionMetrics> {
    if labels.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "metrics",
            left: vec![predictions.len()],
            right: vec![labels.len()],
        });
    }
    let mut per_query = Vec::with_capacity(labels.len());
    let (mut correct, mut words) = (0usize, 0usize);
    let (mut tp, mut predicted, mut actual) = (0usize, 0usize, 0usize);
    for (pred, gold) in predictions.iter().zip(labels) {
        if pred.len() != gold.len() || gold.is_empty() {
            return Err(Error::ShapeMismatch {
                op: "metrics",
                left: vec![pred.len()],
                right: vec![gold.len()],
            });
        }
        let hits = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
        per_query.push(hits as f64 / gold.len() as f64);
        correct += hits;
        words += gold.len();
        for (&p, &g) in pred.iter().zip(gold) {
            predicted += usize::from(p == REMOVAL);
            actual += usize::from(g == REMOVAL);
            tp += usize::from(p == REMOVAL && g == REMOVAL);
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, predicted);
    let recall = ratio(tp, actual);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(RetentionMetrics {
        accuracy: per_query.iter().sum::<f64>() / per_query.len() as f64,
        micro_accuracy: ratio(correct, words),
        f1_removal: f1,
        precision_removal: precision,
        recall_removal: recall,
        n_queries: labels.len(),
        n_words: words,
        per_query_accuracies: per_query,
    })
}

pub fn eval_retention(
    model: &Model,
    examples: &[RetentionExample],
    ablation: Ablation,
    order: ContextOrder,
) -> Result<RetentionMetrics> {
    if examples.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let predictions = examples
        .iter()
        .map(|ex| {
            let probs = predict_retention(model, &ex.current_ids, &ex.past, ablation, order)?;
            Ok(probs.into_iter().map(hard_label).collect())
        })
        .collect::<Result<Vec<Vec<u8>>>>()?;
    let labels: Vec<Vec<u8>> = examples.iter().map(|e| e.labels.clone()).collect();
    metrics_from_predictions(&predictions, &labels)
}

/// Metrics of predicting retention for every word.
pub fn majority_baseline(examples: &[RetentionExample]) -> Result<RetentionMetrics> {
    let labels: Vec<Vec<u8>> = examples.iter().map(|e| e.labels.clone()).collect();
    let predictions: Vec<Vec<u8>> = labels.iter().map(|l| vec![RETENTION; l.len()]).collect();
    metrics_from_predictions(&predictions, &labels)
}

/// Builds the retention loss terms of one example: interleaved
/// `(p_removal, p_retention)` predictions and their one-hot targets.
fn retention_terms(
    g: &mut Graph,
    layout: &Layout,
    ex: &RetentionExample,
    config: &TrainConfig,
) -> Result<(Vec<Var>, Vec<f64>)> {
    if ex.labels.len() != ex.current_ids.len() {
        return Err(Error::ShapeMismatch {
            op: "retention example",
            left: vec![ex.current_ids.len()],
            right: vec![ex.labels.len()],
        });
    }
    let probs = retention_forward(
        g,
        layout,
        &ex.current_ids,
        &ex.past,
        config.ablation,
        config.order,
    )?;
    let targets = ex
        .labels
        .iter()
        .flat_map(|&y| {
            let y = f64::from(y);
            [1.0 - y, y]
        })
        .collect();
    Ok((probs, targets))
}

/// Trains for `config.epochs` further epochs and returns the per-epoch
/// mean word loss.
pub fn train_retention(trainer: &mut Trainer, examples: &[RetentionExample]) -> Result<Vec<f64>> {
    if trainer.task != Task::Retention {
        return Err(Error::Config(
            "trainer was built for the selection task".into(),
        ));
    }
    trainer.train(examples, LossKind::Bce, retention_terms)
}
