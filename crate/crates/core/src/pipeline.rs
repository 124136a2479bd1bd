//! Log rows to training-ready example sets.

use crate::data::examples::{make_examples, ExampleSet};
use crate::data::log::LogRecord;
use crate::data::session::{segment_sessions, Session, DEFAULT_SESSION_GAP_SECS};
use crate::data::split::{split_sessions, SplitSpec, Splits};
use crate::data::vocab::{build_vocab, Vocabulary, DEFAULT_VOCAB_CAPACITY};
use crate::encoders::DEFAULT_MAX_URL_CHARS;
use crate::error::{Error, Result};
use crate::selection::{make_selection_examples, CooccurrenceIndex, SelectionExample, DEFAULT_K};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepareConfig {
    pub session_gap_secs: u64,
    pub split: SplitSpec,
    pub vocab_capacity: usize,
    pub context_window: usize,
    pub max_url_chars: usize,
    pub k: usize,
}

impl PrepareConfig {
    pub fn new(seed: u64) -> Self {
        PrepareConfig {
            session_gap_secs: DEFAULT_SESSION_GAP_SECS,
            split: SplitSpec::new(seed),
            vocab_capacity: DEFAULT_VOCAB_CAPACITY,
            context_window: 3,
            max_url_chars: DEFAULT_MAX_URL_CHARS,
            k: DEFAULT_K,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SplitData {
    pub examples: ExampleSet,
    pub selection: Vec<SelectionExample>,
    /// Scaffolds whose candidate list held only the truth.
    pub unscorable: usize,
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub vocab: Vocabulary,
    pub splits: Splits,
    pub index: CooccurrenceIndex,
    pub train: SplitData,
    pub dev: SplitData,
    pub test: SplitData,
}

impl Prepared {
    pub fn split(&self, name: &str) -> Result<&SplitData> {
        match name {
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }

    pub fn sessions(&self, name: &str) -> Result<&[Session]> {
        match name {
            "train" => Ok(self.splits.train.sessions()),
            "dev" => Ok(&self.splits.dev),
            "test" => Ok(&self.splits.test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Segments, splits, builds the vocabulary and co-occurrence index on the
/// training split, and extracts examples for every split.
pub fn prepare(records: &[LogRecord], config: &PrepareConfig) -> Result<Prepared> {
    if config.context_window == 0 || config.k == 0 {
        return Err(Error::Config(
            "context_window and k must be at least 1".into(),
        ));
    }
    let sessions = segment_sessions(records, config.session_gap_secs)?;
    let splits = split_sessions(sessions, config.split)?;
    let vocab = build_vocab(&splits.train, config.vocab_capacity)?;
    let index = CooccurrenceIndex::build(&splits.train);
    let build = |sessions: &[Session], in_index: bool| -> Result<SplitData> {
        let examples = make_examples(
            sessions,
            &vocab,
            config.context_window,
            config.max_url_chars,
        )?;
        let (selection, unscorable) =
            make_selection_examples(&examples.selection, &index, &vocab, config.k, in_index);
        Ok(SplitData {
            examples,
            selection,
            unscorable,
        })
    };
    let train = build(splits.train.sessions(), true)?;
    let dev = build(&splits.dev, false)?;
    let test = build(&splits.test, false)?;
    if train.examples.retention.is_empty()
        && dev.examples.retention.is_empty()
        && test.examples.retention.is_empty()
    {
        return Err(Error::NoEligiblePairs);
    }
    Ok(Prepared {
        vocab,
        splits,
        index,
        train,
        dev,
        test,
    })
}
