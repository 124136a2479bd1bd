use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::split::TrainSplit;
use crate::encoders::{OOV_ID, PAD_ID};
use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "<pad>";
pub const OOV_TOKEN: &str = "<oov>";
pub const DEFAULT_VOCAB_CAPACITY: usize = 10_000;

/// Word ↔ id map with `0 = pad`, `1 = OOV`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    fn from_words(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { words, index }
    }

    /// Total ids including the two reserved ones.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(OOV_ID)
    }

    pub fn ids<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    pub fn write_tsv(&self, mut out: impl Write) -> std::io::Result<()> {
        for (i, w) in self.words.iter().enumerate() {
            writeln!(out, "{w}\t{i}")?;
        }
        Ok(())
    }

    pub fn read_tsv(reader: impl BufRead) -> Result<Self> {
        let mut words = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let (word, id) = line.rsplit_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected `word\\tid`".into(),
            })?;
            if id.parse::<usize>().ok() != Some(i) {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("ids must be dense, expected {i}"),
                });
            }
            words.push(word.to_string());
        }
        if words.len() < 2 || words[PAD_ID] != PAD_TOKEN || words[OOV_ID] != OOV_TOKEN {
            return Err(Error::Parse {
                line: 1,
                message: "vocabulary must start with the pad and OOV tokens".into(),
            });
        }
        Ok(Self::from_words(words))
    }
}

/// The `capacity − 2` most frequent words of the training sessions,
/// ties broken lexicographically.
pub fn build_vocab(train: &TrainSplit, capacity: usize) -> Result<Vocabulary> {
    if capacity < 3 {
        return Err(Error::Config(format!(
            "vocabulary capacity must be at least 3, got {capacity}"
        )));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for session in train.sessions() {
        for step in &session.steps {
            for w in &step.words {
                *counts.entry(w.as_str()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut words = vec![PAD_TOKEN.to_string(), OOV_TOKEN.to_string()];
    words.extend(
        ranked
            .into_iter()
            .take(capacity - 2)
            .map(|(w, _)| w.to_string()),
    );
    Ok(Vocabulary::from_words(words))
}
