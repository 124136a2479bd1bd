//! Canonical ingestion format: `user_id \t query \t epoch_seconds \t url_or_dash`,
//! one row per (query, click) event.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Marker for a query row without a click.
pub const NO_CLICK: &str = "-";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub user_id: String,
    pub raw_query: String,
    pub timestamp: u64,
    pub clicked_url: Option<String>,
}

impl LogRecord {
    pub fn new(user_id: &str, raw_query: &str, timestamp: u64, clicked_url: Option<&str>) -> Self {
        LogRecord {
            user_id: user_id.to_string(),
            raw_query: raw_query.to_string(),
            timestamp,
            clicked_url: clicked_url.map(str::to_string),
        }
    }
}

pub fn parse_line(line: &str, line_no: usize) -> Result<LogRecord> {
    let err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return Err(err(format!(
            "expected 4 tab-separated fields, found {}",
            fields.len()
        )));
    }
    let user_id = fields[0].trim();
    if user_id.is_empty() {
        return Err(err("empty user_id".into()));
    }
    let raw_query = fields[1].trim();
    if raw_query.is_empty() {
        return Err(err("empty query".into()));
    }
    let timestamp = fields[2]
        .trim()
        .parse::<u64>()
        .map_err(|e| err(format!("bad timestamp `{}`: {e}", fields[2])))?;
    let url = fields[3].trim();
    let clicked_url = match url {
        "" | NO_CLICK => None,
        u => Some(u.to_string()),
    };
    Ok(LogRecord {
        user_id: user_id.to_string(),
        raw_query: raw_query.to_string(),
        timestamp,
        clicked_url,
    })
}

/// Parses a whole log; line numbers in errors are 1-based.
pub fn read_log(reader: impl BufRead) -> Result<Vec<LogRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        records.push(parse_line(line, i + 1)?);
    }
    Ok(records)
}

pub fn write_log(mut out: impl Write, records: &[LogRecord]) -> std::io::Result<()> {
    for r in records {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.user_id,
            r.raw_query,
            r.timestamp,
            r.clicked_url.as_deref().unwrap_or(NO_CLICK)
        )?;
    }
    Ok(())
}
