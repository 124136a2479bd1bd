//! Synthetic search sessions with a known retention law.
//!
//! Every session has a hidden set of need words drawn from a content pool;
//! queries mix need words with filler words from a disjoint noise pool. A
//! clicked result either embeds every need word still present in the query
//! (relevant) or a filler word (irrelevant), or there is no click. When the
//! next query is formed, each current word is kept independently with
//!
//! * `P_NOISE` for filler words,
//! * `P_COVERED` for need words that already appeared in an earlier click,
//! * `P_COVERED + strength · (P_UNCOVERED − P_COVERED)` for need words no
//!   earlier click has shown,
//!
//! so at `deficit_strength = 0` clicks carry no information about retention
//! and at `1` the best predictor must combine earlier queries with earlier
//! clicks. Dropped need words never return; the next query is topped up with
//! fresh filler words, and the session ends once no need word is left.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::log::LogRecord;
use crate::error::{Error, Result};

pub const NEED_WORDS: usize = 3;
pub const QUERY_LEN: usize = 4;
pub const MIN_STEPS: usize = 3;
pub const MAX_STEPS: usize = 5;
pub const P_NOISE: f64 = 0.05;
pub const P_COVERED: f64 = 0.1;
pub const P_UNCOVERED: f64 = 0.95;
pub const P_RELEVANT_CLICK: f64 = 0.5;
pub const P_IRRELEVANT_CLICK: f64 = 0.25;

const CONTENT_CONSONANTS: &[u8] = b"bdfgklp";
const NOISE_CONSONANTS: &[u8] = b"mnrstvz";
const VOWELS: &[u8] = b"aeiou";
const HOSTS: [&str; 4] = ["cy.io", "hu.io", "qo.io", "wa.io"];
/// Seconds between sessions; larger than any session gap.
const SESSION_SPACING: u64 = 100_000;
const STEP_SPACING: u64 = 90;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub n_sessions: usize,
    /// Distinct words; half content, half noise.
    pub vocab_size: usize,
    pub seed: u64,
    pub deficit_strength: f64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 * (NEED_WORDS + QUERY_LEN) {
            return Err(Error::Config(format!(
                "synthetic vocab_size must be at least {}",
                2 * (NEED_WORDS + QUERY_LEN)
            )));
        }
        if self.vocab_size > 2 * CONTENT_CONSONANTS.len().pow(2) * VOWELS.len().pow(2) {
            return Err(Error::Config("synthetic vocab_size too large".into()));
        }
        if !(0.0..=1.0).contains(&self.deficit_strength) {
            return Err(Error::Config("deficit_strength must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticStep {
    pub words: Vec<String>,
    pub need: Vec<bool>,
    pub click: Option<String>,
    /// Probability that each word reappears in the next query; empty for
    /// the last step.
    pub retention_probs: Vec<f64>,
    /// Whether each word had been shown by an earlier click.
    pub covered: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSession {
    pub user_id: String,
    pub steps: Vec<SyntheticStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub config: SyntheticConfig,
    pub sessions: Vec<SyntheticSession>,
}

fn word(consonants: &[u8], k: usize) -> String {
    let (c, v) = (consonants.len(), VOWELS.len());
    let letters = [
        consonants[(k / (v * c * v)) % c],
        VOWELS[(k / (c * v)) % v],
        consonants[(k / v) % c],
        VOWELS[k % v],
    ];
    String::from_utf8(letters.to_vec()).expect("ascii")
}

/// Content and noise word pools for a vocabulary size.
pub fn word_pools(vocab_size: usize) -> (Vec<String>, Vec<String>) {
    let n_content = vocab_size / 2;
    // stride spreads the first letters across the alphabet
    let content = (0..n_content)
        .map(|k| word(CONTENT_CONSONANTS, k * 37))
        .collect();
    let noise = (0..vocab_size - n_content)
        .map(|k| word(NOISE_CONSONANTS, k * 37))
        .collect();
    (content, noise)
}

pub fn gen_synthetic(config: SyntheticConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let (content, noise) = word_pools(config.vocab_size);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let p_uncovered = P_COVERED + config.deficit_strength * (P_UNCOVERED - P_COVERED);

    let mut sessions = Vec::with_capacity(config.n_sessions);
    for s in 0..config.n_sessions {
        let need: Vec<String> = content
            .choose_multiple(&mut rng, NEED_WORDS)
            .cloned()
            .collect();
        let n_steps = rng.gen_range(MIN_STEPS..=MAX_STEPS);

        let mut words: Vec<String> = need.clone();
        words.extend(fresh_noise(
            &noise,
            &words,
            QUERY_LEN - NEED_WORDS,
            &mut rng,
        ));
        words.shuffle(&mut rng);

        let mut covered_words: Vec<String> = Vec::new();
        let mut steps = Vec::new();
        loop {
            let is_need: Vec<bool> = words.iter().map(|w| need.contains(w)).collect();
            let present_need: Vec<&String> = words.iter().filter(|w| need.contains(w)).collect();
            let roll: f64 = rng.gen();
            let host = HOSTS[rng.gen_range(0..HOSTS.len())];
            let click = if roll < P_RELEVANT_CLICK && !present_need.is_empty() {
                let path: Vec<&str> = present_need.iter().map(|w| w.as_str()).collect();
                Some(format!("{host}/{}", path.join("/")))
            } else if roll < P_RELEVANT_CLICK + P_IRRELEVANT_CLICK {
                let filler = &noise[rng.gen_range(0..noise.len())];
                Some(format!("{host}/{filler}"))
            } else {
                None
            };
            let covered: Vec<bool> = words.iter().map(|w| covered_words.contains(w)).collect();

            let last = steps.len() + 1 == n_steps || present_need.is_empty();
            if last {
                steps.push(SyntheticStep {
                    words,
                    need: is_need,
                    click,
                    retention_probs: Vec::new(),
                    covered,
                });
                break;
            }

            let probs: Vec<f64> = is_need
                .iter()
                .zip(&covered)
                .map(|(&n, &c)| match (n, c) {
                    (false, _) => P_NOISE,
                    (true, true) => P_COVERED,
                    (true, false) => p_uncovered,
                })
                .collect();
            let kept: Vec<String> = words
                .iter()
                .zip(&probs)
                .filter(|(_, &p)| rng.gen::<f64>() < p)
                .map(|(w, _)| w.clone())
                .collect();
            if let Some(url) = &click {
                for w in &present_need {
                    if url.contains(w.as_str()) && !covered_words.contains(w) {
                        covered_words.push((*w).clone());
                    }
                }
            }

            let mut next = kept.clone();
            let refill = if kept.is_empty() {
                QUERY_LEN - 1
            } else {
                QUERY_LEN.saturating_sub(kept.len()).max(1)
            };
            let exclude: Vec<String> = words.iter().chain(&kept).cloned().collect();
            next.extend(fresh_noise(&noise, &exclude, refill, &mut rng));

            steps.push(SyntheticStep {
                words: std::mem::replace(&mut words, next),
                need: is_need,
                click,
                retention_probs: probs,
                covered,
            });
        }
        sessions.push(SyntheticSession {
            user_id: format!("s{s:07}"),
            steps,
        });
    }
    Ok(SyntheticCorpus { config, sessions })
}

fn fresh_noise(
    noise: &[String],
    exclude: &[String],
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<String> {
    let pool: Vec<&String> = noise.iter().filter(|w| !exclude.contains(w)).collect();
    pool.choose_multiple(rng, n).map(|w| (*w).clone()).collect()
}

impl SyntheticCorpus {
    /// Log rows in the canonical ingestion order.
    pub fn records(&self) -> Vec<LogRecord> {
        let mut out = Vec::new();
        for (i, s) in self.sessions.iter().enumerate() {
            for (t, step) in s.steps.iter().enumerate() {
                out.push(LogRecord {
                    user_id: s.user_id.clone(),
                    raw_query: step.words.join(" "),
                    timestamp: i as u64 * SESSION_SPACING + t as u64 * STEP_SPACING,
                    clicked_url: step.click.clone(),
                });
            }
        }
        out
    }

    /// Expected accuracy of the predictor that knows every word's retention
    /// probability, over the transitions that become training examples
    /// (those with an earlier step and at least one retained word).
    pub fn bayes_accuracy(&self) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        for s in &self.sessions {
            for (step, next) in s.steps.iter().zip(&s.steps[1..]).skip(1) {
                if !step.words.iter().any(|w| next.words.contains(w)) {
                    continue;
                }
                total += bayes_query_accuracy(&step.retention_probs);
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            total / count as f64
        }
    }
}

/// Expected per-query accuracy of the Bayes decision for independent
/// retention probabilities, conditioned on at least one word being kept.
/// Enumerates all keep/drop outcomes.
pub fn bayes_query_accuracy(probs: &[f64]) -> f64 {
    let n = probs.len();
    let mut marginals = vec![0.0; n];
    let mut mass = 0.0;
    for outcome in 1u32..(1 << n) {
        let p: f64 = (0..n)
            .map(|i| {
                if outcome & (1 << i) != 0 {
                    probs[i]
                } else {
                    1.0 - probs[i]
                }
            })
            .product();
        mass += p;
        for (i, m) in marginals.iter_mut().enumerate() {
            if outcome & (1 << i) != 0 {
                *m += p;
            }
        }
    }
    marginals
        .iter()
        .map(|m| {
            let q = m / mass;
            q.max(1.0 - q)
        })
        .sum::<f64>()
        / n as f64
}
