//! SRT subtitles: timestamps, entries, parsing, rendering, and timeline
//! checks. This is the only persistent output format of the pipeline.

mod parse;
mod timestamp;
mod validate;

pub use parse::{parse_srt, parse_srt_with_warnings, render_srt};
pub use timestamp::{Timestamp, TimestampParseError};
pub use validate::{validate_timeline, validate_timeline_with, Gap, ValidationReport};

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SrtError {
    #[error("malformed subtitle block at line {line}: {reason}")]
    MalformedBlock { line: usize, reason: String },
    #[error("invalid subtitle entry: {0}")]
    InvalidEntry(String),
}

/// One cue: 1-based index, `[start, end)` and one or more text lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubtitleEntry {
    index: usize,
    start: Timestamp,
    end: Timestamp,
    lines: Vec<String>,
}

impl SubtitleEntry {
    /// Trailing whitespace is stripped from each line. Lines must be
    /// non-blank and single-line.
    pub fn new<I, S>(index: usize, start: Timestamp, end: Timestamp, lines: I) -> Result<Self, SrtError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if start >= end {
            return Err(SrtError::InvalidEntry(format!(
                "start {start} is not before end {end}"
            )));
        }
        let lines: Vec<String> = lines
            .into_iter()
            .map(|l| l.as_ref().trim_end().to_string())
            .collect();
        if lines.is_empty() {
            return Err(SrtError::InvalidEntry("entry has no text lines".into()));
        }
        if let Some(bad) = lines
            .iter()
            .find(|l| l.trim().is_empty() || l.contains(['\n', '\r']))
        {
            return Err(SrtError::InvalidEntry(format!("bad text line {bad:?}")));
        }
        Ok(Self {
            index,
            start,
            end,
            lines,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn start(&self) -> Timestamp {
        self.start
    }

    pub fn end(&self) -> Timestamp {
        self.end
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn text(&self) -> String {
        self.lines.join("\n")
    }

    pub fn duration_ms(&self) -> u64 {
        self.end.saturating_sub(self.start)
    }

    /// Same entry moved by `delta_ms` (clamped at zero).
    pub fn shifted(&self, delta_ms: i64) -> Self {
        let shift = |t: Timestamp| {
            Timestamp::from_millis((t.as_millis() as i64 + delta_ms).max(0) as u64)
        };
        Self {
            start: shift(self.start),
            end: shift(self.end),
            ..self.clone()
        }
    }
}

/// Ordered entries with indices renumbered `1..=n` on construction.
///
/// Entries keep the order they were given in; [`SubtitleFile::sorted`]
/// recovers start-time order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SubtitleFile {
    entries: Vec<SubtitleEntry>,
}

impl SubtitleFile {
    pub fn new(mut entries: Vec<SubtitleEntry>) -> Self {
        for (i, e) in entries.iter_mut().enumerate() {
            e.index = i + 1;
        }
        Self { entries }
    }

    pub fn entries(&self) -> &[SubtitleEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn into_entries(self) -> Vec<SubtitleEntry> {
        self.entries
    }

    /// Stable sort by `(start, end)` followed by renumbering.
    pub fn sorted(&self) -> Self {
        let mut entries = self.entries.clone();
        entries.sort_by_key(|e| (e.start, e.end));
        Self::new(entries)
    }

    pub fn shifted(&self, delta_ms: i64) -> Self {
        Self::new(self.entries.iter().map(|e| e.shifted(delta_ms)).collect())
    }
}
