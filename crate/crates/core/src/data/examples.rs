use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::session::{filter_queries, Session};
use super::text::DropReason;
use super::vocab::Vocabulary;
use crate::encoders::{url_char_ids, PastStep};
use crate::error::Result;
use crate::retention::{label_edits, RetentionExample};

/// Everything the selection task needs before candidates are attached.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionScaffold {
    pub current_ids: Vec<usize>,
    pub current_text: String,
    pub next_text: String,
    pub past: Vec<PastStep>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub sessions: usize,
    pub pairs: usize,
    pub kept: usize,
    pub dropped: BTreeMap<String, usize>,
    /// Eligible pairs without any earlier step in the session.
    pub no_context: usize,
    pub examples: usize,
}

impl FilterStats {
    pub fn dropped_for(&self, reason: DropReason) -> usize {
        self.dropped.get(reason.as_str()).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExampleSet {
    pub retention: Vec<RetentionExample>,
    pub selection: Vec<SelectionScaffold>,
    pub stats: FilterStats,
}

/// Builds one example per eligible pair that has at least one earlier step;
/// the context holds the `context_window` most recent earlier steps, most
/// recent first.
pub fn make_examples(
    sessions: &[Session],
    vocab: &Vocabulary,
    context_window: usize,
    max_url_chars: usize,
) -> Result<ExampleSet> {
    let mut set = ExampleSet::default();
    for reason in DropReason::ALL {
        set.stats.dropped.insert(reason.as_str().to_string(), 0);
    }
    set.stats.sessions = sessions.len();
    for session in sessions {
        let outcome = filter_queries(session);
        set.stats.pairs += outcome.kept.len() + outcome.dropped.len();
        set.stats.kept += outcome.kept.len();
        for (_, reason) in &outcome.dropped {
            *set.stats
                .dropped
                .get_mut(reason.as_str())
                .expect("all reasons present") += 1;
        }
        for &t in &outcome.kept {
            if t == 0 {
                set.stats.no_context += 1;
                continue;
            }
            let current = &session.steps[t];
            let next = &session.steps[t + 1];
            let past: Vec<PastStep> = session.steps[..t]
                .iter()
                .rev()
                .take(context_window)
                .map(|s| PastStep {
                    query_ids: vocab.ids(&s.words),
                    url_chars: url_char_ids(&s.clicks, max_url_chars),
                })
                .collect();
            let current_ids = vocab.ids(&current.words);
            set.retention.push(RetentionExample {
                current_ids: current_ids.clone(),
                raw_words: current.words.clone(),
                past: past.clone(),
                labels: label_edits(&current.words, &next.words)?,
            });
            set.selection.push(SelectionScaffold {
                current_ids,
                current_text: current.normalized(),
                next_text: next.normalized(),
                past,
            });
        }
    }
    set.stats.examples = set.retention.len();
    Ok(set)
}
