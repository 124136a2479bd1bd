use super::log::LogRecord;
use super::text::{pair_verdict, tokenize, DropReason};
use crate::error::{Error, Result};

/// Default maximum gap between consecutive queries of one session.
pub const DEFAULT_SESSION_GAP_SECS: u64 = 30 * 60;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionStep {
    pub raw_query: String,
    pub words: Vec<String>,
    /// Clicked urls in row order.
    pub clicks: Vec<String>,
    pub timestamp: u64,
}

impl SessionStep {
    pub fn normalized(&self) -> String {
        self.words.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub user_id: String,
    pub steps: Vec<SessionStep>,
}

/// Groups a `(user_id, timestamp)`-sorted log into sessions.
///
/// Consecutive rows with the same user, query and timestamp form one step
/// whose clicks are the rows' urls in order. A new session starts when the
/// user changes or more than `gap_secs` pass between queries. Rows whose
/// query has no tokens are dropped.
pub fn segment_sessions(records: &[LogRecord], gap_secs: u64) -> Result<Vec<Session>> {
    let mut sessions: Vec<Session> = Vec::new();
    let mut prev: Option<&LogRecord> = None;
    for (i, rec) in records.iter().enumerate() {
        if let Some(p) = prev {
            if (rec.user_id.as_str(), rec.timestamp) < (p.user_id.as_str(), p.timestamp) {
                return Err(Error::Unsorted(i + 1));
            }
        }
        let words = tokenize(&rec.raw_query);
        if words.is_empty() {
            continue;
        }
        let same_step = prev.is_some_and(|p| {
            p.user_id == rec.user_id && p.raw_query == rec.raw_query && p.timestamp == rec.timestamp
        });
        if same_step {
            let step = sessions
                .last_mut()
                .and_then(|s| s.steps.last_mut())
                .expect("previous row opened a step");
            step.clicks.extend(rec.clicked_url.clone());
        } else {
            let step = SessionStep {
                raw_query: rec.raw_query.clone(),
                words,
                clicks: rec.clicked_url.iter().cloned().collect(),
                timestamp: rec.timestamp,
            };
            let continues = prev.is_some_and(|p| {
                p.user_id == rec.user_id && rec.timestamp - p.timestamp <= gap_secs
            });
            match sessions.last_mut() {
                Some(s) if continues => s.steps.push(step),
                _ => sessions.push(Session {
                    user_id: rec.user_id.clone(),
                    steps: vec![step],
                }),
            }
        }
        prev = Some(rec);
    }
    Ok(sessions)
}

/// Verdict for every adjacent pair of a session.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterOutcome {
    /// Indices `t` whose pair `(t, t + 1)` is eligible.
    pub kept: Vec<usize>,
    pub dropped: Vec<(usize, DropReason)>,
}

pub fn filter_queries(session: &Session) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for (t, pair) in session.steps.windows(2).enumerate() {
        match pair_verdict(&pair[0].words, &pair[1].words) {
            None => out.kept.push(t),
            Some(reason) => out.dropped.push((t, reason)),
        }
    }
    out
}
