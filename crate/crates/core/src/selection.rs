//! Next-query selection: co-occurrence candidates, the similarity scoring
//! head and MRR evaluation.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::examples::SelectionScaffold;
use crate::data::split::TrainSplit;
use crate::data::vocab::Vocabulary;
use crate::encoders::{encode_query, encode_session, PastStep};
use crate::error::{Error, Result};
use crate::math::{Graph, Var};
use crate::model::{Ablation, ContextOrder, Layout, Model, Task};
use crate::retention::decode_steps;
use crate::train::{LossKind, TrainConfig, Trainer};

pub const DEFAULT_K: usize = 20;

/// Counts of which query followed which within training sessions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CooccurrenceIndex {
    followers: BTreeMap<String, BTreeMap<String, usize>>,
    /// Every next query with its count, most frequent first.
    popular: Vec<(String, usize)>,
}

fn by_count(a: &(String, usize), b: &(String, usize)) -> std::cmp::Ordering {
    b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

fn ranked(counts: &BTreeMap<String, usize>, k: usize) -> Vec<String> {
    let mut all: Vec<(String, usize)> = counts.iter().map(|(q, &c)| (q.clone(), c)).collect();
    all.sort_by(by_count);
    all.into_iter().take(k).map(|(q, _)| q).collect()
}

impl CooccurrenceIndex {
    /// Adjacent pairs of normalized queries; a query repeated verbatim is
    /// not counted as its own follower.
    pub fn build(train: &TrainSplit) -> Self {
        let mut followers: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        let mut next_counts: BTreeMap<String, usize> = BTreeMap::new();
        for session in train.sessions() {
            for pair in session.steps.windows(2) {
                let (cur, next) = (pair[0].normalized(), pair[1].normalized());
                if cur == next {
                    continue;
                }
                *next_counts.entry(next.clone()).or_default() += 1;
                *followers.entry(cur).or_default().entry(next).or_default() += 1;
            }
        }
        let mut popular: Vec<(String, usize)> = next_counts.into_iter().collect();
        popular.sort_by(by_count);
        CooccurrenceIndex { followers, popular }
    }

    pub fn count(&self, current: &str, next: &str) -> usize {
        self.followers
            .get(current)
            .and_then(|f| f.get(next))
            .copied()
            .unwrap_or(0)
    }

    /// Most frequent followers of `current`, or the most frequent next
    /// queries overall when `current` was never followed.
    pub fn top_k(&self, current: &str, k: usize) -> Vec<String> {
        match self.followers.get(current) {
            Some(f) => ranked(f, k),
            None => self
                .popular
                .iter()
                .take(k)
                .map(|(q, _)| q.clone())
                .collect(),
        }
    }

    /// `top_k` with one occurrence of `current → next` discounted, for
    /// pairs that were themselves counted when the index was built.
    pub fn top_k_excluding(&self, current: &str, next: &str, k: usize) -> Vec<String> {
        if let Some(f) = self.followers.get(current) {
            let mut f = f.clone();
            if let Some(c) = f.get_mut(next) {
                *c -= 1;
                if *c == 0 {
                    f.remove(next);
                }
            }
            if !f.is_empty() {
                return ranked(&f, k);
            }
        }
        // lowering one count can only pull in the (k+1)-th entry
        let mut head: Vec<(String, usize)> = self.popular.iter().take(k + 1).cloned().collect();
        if let Some(e) = head.iter_mut().find(|e| e.0 == next) {
            e.1 -= 1;
        }
        head.retain(|e| e.1 > 0);
        head.sort_by(by_count);
        head.into_iter().take(k).map(|(q, _)| q).collect()
    }
}

/// Top-K candidates with the ground truth appended when missing. Returns
/// the candidates and the position of the truth.
pub fn build_candidates(
    index: &CooccurrenceIndex,
    current: &str,
    truth: &str,
    k: usize,
) -> (Vec<String>, usize) {
    with_truth(index.top_k(current, k), truth)
}

/// `build_candidates` for a pair from the sessions the index was built on;
/// the pair's own occurrence is discounted so the truth is not always the
/// only follower.
pub fn build_train_candidates(
    index: &CooccurrenceIndex,
    current: &str,
    truth: &str,
    k: usize,
) -> (Vec<String>, usize) {
    with_truth(index.top_k_excluding(current, truth, k), truth)
}

fn with_truth(mut candidates: Vec<String>, truth: &str) -> (Vec<String>, usize) {
    match candidates.iter().position(|c| c == truth) {
        Some(i) => (candidates, i),
        None => {
            candidates.push(truth.to_string());
            let i = candidates.len() - 1;
            (candidates, i)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionExample {
    pub current_ids: Vec<usize>,
    /// Most recent first.
    pub past: Vec<PastStep>,
    pub candidates: Vec<String>,
    pub candidate_ids: Vec<Vec<usize>>,
    pub truth_index: usize,
}

/// Attaches candidates to every scaffold. Examples with fewer than two
/// candidates cannot be ranked and are only counted. `in_index` marks
/// scaffolds drawn from the sessions the index was built on.
pub fn make_selection_examples(
    scaffolds: &[SelectionScaffold],
    index: &CooccurrenceIndex,
    vocab: &Vocabulary,
    k: usize,
    in_index: bool,
) -> (Vec<SelectionExample>, usize) {
    let mut out = Vec::with_capacity(scaffolds.len());
    let mut unscorable = 0;
    let build = if in_index {
        build_train_candidates
    } else {
        build_candidates
    };
    for s in scaffolds {
        let (candidates, truth_index) = build(index, &s.current_text, &s.next_text, k);
        if candidates.len() < 2 {
            unscorable += 1;
            continue;
        }
        let candidate_ids = candidates
            .iter()
            .map(|c| vocab.ids(&c.split(' ').collect::<Vec<_>>()))
            .collect();
        out.push(SelectionExample {
            current_ids: s.current_ids.clone(),
            past: s.past.clone(),
            candidates,
            candidate_ids,
            truth_index,
        });
    }
    (out, unscorable)
}

/// One line per example, candidates tab-separated, the truth prefixed by `*`.
pub fn write_candidates(mut out: impl Write, examples: &[SelectionExample]) -> std::io::Result<()> {
    for ex in examples {
        let line: Vec<String> = ex
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == ex.truth_index {
                    format!("*{c}")
                } else {
                    c.clone()
                }
            })
            .collect();
        writeln!(out, "{}", line.join("\t"))?;
    }
    Ok(())
}

/// `z_q = v_n`, the last decoder state of a query.
pub fn pool_query(g: &mut Graph, layout: &Layout, word_ids: &[usize]) -> Result<Var> {
    let q = encode_query(g, layout, word_ids)?;
    let steps = decode_steps(g, layout, q.z, word_ids.len())?;
    Ok(*steps.last().expect("n >= 1"))
}

/// `sigmoid(W'·[z_q ⊗ z_j, D, s] + b')`
pub fn score_candidate(
    g: &mut Graph,
    layout: &Layout,
    z_q: Var,
    z_j: Var,
    deficit: Var,
    context: Var,
) -> Result<Var> {
    let sim = g.mul(z_q, z_j)?;
    let x = g.concat(&[sim, deficit, context], 0)?;
    let w = g.param(layout.selection_w);
    let b = g.param(layout.selection_b);
    let logit = g.affine(&[(w, x)], Some(b))?;
    Ok(g.sigmoid(logit))
}

/// Score nodes of every candidate of one example.
pub fn selection_forward(
    g: &mut Graph,
    layout: &Layout,
    current_ids: &[usize],
    past: &[PastStep],
    candidate_ids: &[Vec<usize>],
    ablation: Ablation,
    order: ContextOrder,
) -> Result<Vec<Var>> {
    let z_q = pool_query(g, layout, current_ids)?;
    let session = encode_session(g, layout, past, ablation, order)?;
    candidate_ids
        .iter()
        .map(|ids| {
            let z_j = pool_query(g, layout, ids)?;
            score_candidate(g, layout, z_q, z_j, session.deficit, session.context)
        })
        .collect()
}

pub fn score_candidates(
    model: &Model,
    current_ids: &[usize],
    past: &[PastStep],
    candidate_ids: &[Vec<usize>],
    ablation: Ablation,
    order: ContextOrder,
) -> Result<Vec<f64>> {
    let mut g = Graph::new(&model.params);
    let scores = selection_forward(
        &mut g,
        &model.layout,
        current_ids,
        past,
        candidate_ids,
        ablation,
        order,
    )?;
    Ok(scores.iter().map(|&s| g.value(s)[0]).collect())
}

/// Argmax; the lowest index wins ties.
pub fn select_next(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Empty("candidates"));
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    Ok(best)
}

/// `1 / rank` of the truth, ranking it below every candidate it ties with.
pub fn reciprocal_rank(scores: &[f64], truth: usize) -> f64 {
    let t = scores[truth];
    let above = scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| i != truth && s >= t)
        .count();
    1.0 / (above + 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionMetrics {
    pub mrr: f64,
    pub n_examples: usize,
    pub mean_candidates: f64,
}

pub fn mrr_from_scores(scores: &[Vec<f64>], truths: &[usize]) -> Result<SelectionMetrics> {
    if scores.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let rr: f64 = scores
        .iter()
        .zip(truths)
        .map(|(s, &t)| reciprocal_rank(s, t))
        .sum();
    let n = scores.len() as f64;
    Ok(SelectionMetrics {
        mrr: rr / n,
        n_examples: scores.len(),
        mean_candidates: scores.iter().map(Vec::len).sum::<usize>() as f64 / n,
    })
}

pub fn eval_mrr(
    model: &Model,
    examples: &[SelectionExample],
    ablation: Ablation,
    order: ContextOrder,
) -> Result<SelectionMetrics> {
    let scores = examples
        .iter()
        .map(|ex| {
            score_candidates(
                model,
                &ex.current_ids,
                &ex.past,
                &ex.candidate_ids,
                ablation,
                order,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let truths: Vec<usize> = examples.iter().map(|e| e.truth_index).collect();
    mrr_from_scores(&scores, &truths)
}

fn selection_terms(
    g: &mut Graph,
    layout: &Layout,
    ex: &SelectionExample,
    config: &TrainConfig,
) -> Result<(Vec<Var>, Vec<f64>)> {
    if ex.truth_index >= ex.candidate_ids.len() {
        return Err(Error::OutOfRange {
            what: "truth index",
            index: ex.truth_index,
            size: ex.candidate_ids.len(),
        });
    }
    let scores = selection_forward(
        g,
        layout,
        &ex.current_ids,
        &ex.past,
        &ex.candidate_ids,
        config.ablation,
        config.order,
    )?;
    let targets = (0..scores.len())
        .map(|i| if i == ex.truth_index { 1.0 } else { 0.0 })
        .collect();
    Ok((scores, targets))
}

/// Trains with mean absolute error against 1 for the truth and 0 for
/// distractors; returns the per-epoch mean loss.
pub fn train_selection(trainer: &mut Trainer, examples: &[SelectionExample]) -> Result<Vec<f64>> {
    if trainer.task != Task::Selection {
        return Err(Error::Config(
            "trainer was built for the retention task".into(),
        ));
    }
    trainer.train(examples, LossKind::Mae, selection_terms)
}
