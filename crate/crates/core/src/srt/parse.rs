use std::fmt::Write as _;

use super::{SrtError, SubtitleEntry, SubtitleFile, Timestamp};

const ARROW: &str = "-->";

fn is_index_line(line: &str) -> bool {
    let t = line.trim();
    !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit())
}

fn parse_arrow_line(line: &str, line_no: usize) -> Result<(Timestamp, Timestamp), SrtError> {
    let malformed = |reason: String| SrtError::MalformedBlock {
        line: line_no,
        reason,
    };
    let (left, right) = line
        .split_once(ARROW)
        .ok_or_else(|| malformed("missing timestamp arrow".into()))?;
    // Anything after the end time (position hints etc.) is ignored.
    let right = right.split_whitespace().next().unwrap_or("");
    let start = Timestamp::parse_srt(left.trim()).map_err(|e| malformed(e.to_string()))?;
    let end = Timestamp::parse_srt(right).map_err(|e| malformed(e.to_string()))?;
    Ok((start, end))
}

/// Parses SRT text, logging any repairs through `log::warn!`.
pub fn parse_srt(text: &str) -> Result<SubtitleFile, SrtError> {
    let (file, warnings) = parse_srt_with_warnings(text)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(file)
}

/// Parses SRT text and returns the repairs that were applied.
///
/// Tolerates a UTF-8 BOM, CRLF line endings, trailing whitespace, padded or
/// unpadded hours, and a missing blank line between blocks. Missing,
/// duplicate or out-of-sequence indices are renumbered. Blocks without text
/// are dropped.
pub fn parse_srt_with_warnings(text: &str) -> Result<(SubtitleFile, Vec<String>), SrtError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    let mut i = 0;

    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let block_line = i + 1;
        let (declared, time_idx) = if lines[i].contains(ARROW) {
            (None, i)
        } else {
            (Some(lines[i].trim()), i + 1)
        };
        if time_idx >= lines.len() || !lines[time_idx].contains(ARROW) {
            return Err(SrtError::MalformedBlock {
                line: (time_idx + 1).min(lines.len()),
                reason: "missing timestamp arrow".into(),
            });
        }
        let (start, end) = parse_arrow_line(lines[time_idx], time_idx + 1)?;

        i = time_idx + 1;
        let mut text_lines = Vec::new();
        while i < lines.len() && !lines[i].trim().is_empty() {
            if is_index_line(lines[i]) && lines.get(i + 1).is_some_and(|l| l.contains(ARROW)) {
                warnings.push(format!(
                    "line {}: missing blank line before next block",
                    i + 1
                ));
                break;
            }
            text_lines.push(lines[i]);
            i += 1;
        }

        if text_lines.is_empty() {
            warnings.push(format!("line {block_line}: block has no text, dropped"));
            continue;
        }

        let expected = entries.len() + 1;
        match declared {
            None => warnings.push(format!(
                "line {block_line}: missing index, numbered {expected}"
            )),
            Some(raw) if raw.parse::<usize>().ok() != Some(expected) => warnings.push(format!(
                "line {block_line}: index {raw:?} renumbered to {expected}"
            )),
            Some(_) => {}
        }

        let entry = SubtitleEntry::new(expected, start, end, text_lines).map_err(|e| {
            SrtError::MalformedBlock {
                line: time_idx + 1,
                reason: e.to_string(),
            }
        })?;
        entries.push(entry);
    }

    Ok((SubtitleFile::new(entries), warnings))
}

/// Renders with zero-padded `hh:mm:ss,mmm` timestamps, one blank line after
/// every entry.
pub fn render_srt(file: &SubtitleFile) -> String {
    let mut out = String::new();
    for e in file.entries() {
        let _ = writeln!(out, "{}", e.index());
        let _ = writeln!(out, "{} {ARROW} {}", e.start().to_srt(), e.end().to_srt());
        for line in e.lines() {
            out.push_str(line);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
