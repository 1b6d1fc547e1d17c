use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::MemoryError;
use crate::text::{contains_term, truncate_chars};

pub(super) const DEFAULT_TOP_DOCS: usize = 3;
const EXCERPT_PARAGRAPHS: usize = 2;
const EXCERPT_CHARS: usize = 600;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Term {
    pub source: String,
    pub target: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Term {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    fn to_line(&self) -> String {
        match &self.note {
            Some(n) => format!("term: {} => {} | {}", self.source, self.target, n),
            None => format!("term: {} => {}", self.source, self.target),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KnowledgeDoc {
    pub id: String,
    pub title: String,
    pub body: String,
    pub terms: Vec<Term>,
}

impl KnowledgeDoc {
    /// Parses a KB file. `default_id` is used when the front matter has no
    /// `id:`.
    ///
    /// ```text
    /// ---
    /// id: sc2-zerg
    /// title: Zerg structures
    /// term: Spire => 飞龙塔 | air tech building
    /// ---
    /// Free text body.
    /// ```
    pub fn parse(default_id: &str, text: &str, origin: &str) -> Result<Self, MemoryError> {
        let err = |line: usize, reason: String| MemoryError::KbFormat {
            path: origin.to_string(),
            line,
            reason,
        };
        let text = text.strip_prefix('\u{feff}').unwrap_or(text);
        let lines: Vec<&str> = text.lines().collect();
        let mut id = default_id.to_string();
        let mut title = None;
        let mut terms: Vec<Term> = Vec::new();
        let mut body_start = 0;

        if lines.first().map(|l| l.trim()) == Some("---") {
            let close = lines
                .iter()
                .skip(1)
                .position(|l| l.trim() == "---")
                .map(|p| p + 1)
                .ok_or_else(|| err(1, "unterminated front matter".into()))?;
            for (i, raw) in lines.iter().enumerate().take(close).skip(1) {
                let line_no = i + 1;
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line
                    .split_once(':')
                    .ok_or_else(|| err(line_no, format!("expected `key: value`, got {line:?}")))?;
                let value = value.trim();
                match key.trim() {
                    "id" if !value.is_empty() => id = value.to_string(),
                    "title" => title = Some(value.to_string()),
                    "term" => {
                        let term = parse_term(value).map_err(|r| err(line_no, r))?;
                        if terms.iter().any(|t| t.source.to_lowercase() == term.source.to_lowercase()) {
                            return Err(err(line_no, format!("duplicate term {:?}", term.source)));
                        }
                        terms.push(term);
                    }
                    other => return Err(err(line_no, format!("unknown front matter key {other:?}"))),
                }
            }
            body_start = close + 1;
        }

        let body = lines.get(body_start..).unwrap_or_default().join("\n").trim().to_string();
        Ok(Self {
            title: title.filter(|t| !t.is_empty()).unwrap_or_else(|| id.clone()),
            id,
            body,
            terms,
        })
    }

    pub fn to_file_text(&self) -> String {
        let mut out = format!("---\nid: {}\ntitle: {}\n", self.id, self.title);
        for t in &self.terms {
            out.push_str(&t.to_line());
            out.push('\n');
        }
        out.push_str("---\n");
        if !self.body.is_empty() {
            out.push_str(&self.body);
            out.push('\n');
        }
        out
    }

    fn matched_terms(&self, text: &str) -> Vec<&Term> {
        self.terms.iter().filter(|t| contains_term(text, &t.source)).collect()
    }

    fn excerpt(&self, matched: &[&Term]) -> String {
        let paragraphs: Vec<&str> = self
            .body
            .split("\n\n")
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .collect();
        let relevant: Vec<&str> = paragraphs
            .iter()
            .copied()
            .filter(|p| matched.iter().any(|t| contains_term(p, &t.source) || p.contains(&t.target)))
            .take(EXCERPT_PARAGRAPHS)
            .collect();
        let text = if relevant.is_empty() {
            paragraphs.first().copied().unwrap_or("").to_string()
        } else {
            relevant.join("\n\n")
        };
        truncate_chars(&text, EXCERPT_CHARS)
    }
}

fn parse_term(value: &str) -> Result<Term, String> {
    let (src, rest) = value
        .split_once("=>")
        .ok_or_else(|| format!("term {value:?} lacks `=>`"))?;
    let (tgt, note) = match rest.split_once('|') {
        Some((t, n)) => (t, Some(n.trim()).filter(|n| !n.is_empty())),
        None => (rest, None),
    };
    let (src, tgt) = (src.trim(), tgt.trim());
    if src.is_empty() || tgt.is_empty() {
        return Err(format!("term {value:?} has an empty side"));
    }
    Ok(Term {
        source: src.to_string(),
        target: tgt.to_string(),
        note: note.map(str::to_string),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TermMatch {
    pub doc_id: String,
    pub term: Term,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DocExcerpt {
    pub id: String,
    pub title: String,
    pub matches: usize,
    pub excerpt: String,
}

/// Result of a domain query: every matching term plus the best documents.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DomainGuide {
    pub terms: Vec<TermMatch>,
    pub docs: Vec<DocExcerpt>,
}

impl DomainGuide {
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty() && self.docs.is_empty()
    }

    pub fn render_terms(&self) -> String {
        let mut out = String::new();
        for m in &self.terms {
            let _ = write!(out, "\"{}\" => \"{}\"", m.term.source, m.term.target);
            if let Some(n) = &m.term.note {
                let _ = write!(out, " ({n})");
            }
            out.push('\n');
        }
        out.trim_end().to_string()
    }

    pub fn render_docs(&self) -> String {
        self.docs
            .iter()
            .map(|d| format!("[{}]\n{}", d.title, d.excerpt))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    pub fn render(&self) -> String {
        [self.render_terms(), self.render_docs()]
            .into_iter()
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

/// Domain documents, kept sorted by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KnowledgeBase {
    docs: Vec<KnowledgeDoc>,
}

impl KnowledgeBase {
    pub fn from_docs(mut docs: Vec<KnowledgeDoc>) -> Result<Self, MemoryError> {
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = docs.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(MemoryError::KbFormat {
                path: w[1].id.clone(),
                line: 0,
                reason: "duplicate document id".into(),
            });
        }
        Ok(Self { docs })
    }

    /// Loads `.md` and `.txt` files from each path; directories are walked
    /// recursively in name order.
    pub fn load(paths: &[PathBuf]) -> Result<Self, MemoryError> {
        let mut files = Vec::new();
        for p in paths {
            collect_files(p, &mut files)?;
        }
        let docs = files
            .iter()
            .map(|f| {
                let text = std::fs::read_to_string(f).map_err(|e| MemoryError::Io {
                    path: f.display().to_string(),
                    reason: e.to_string(),
                })?;
                let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("doc");
                KnowledgeDoc::parse(stem, &text, &f.display().to_string())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_docs(docs)
    }

    pub fn docs(&self) -> &[KnowledgeDoc] {
        &self.docs
    }

    /// Source terms of every document, deduplicated case-insensitively.
    pub fn source_terms(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.docs
            .iter()
            .flat_map(|d| &d.terms)
            .filter(|t| seen.insert(t.source.to_lowercase()))
            .map(|t| t.source.clone())
            .collect()
    }

    pub fn has_term(&self, source: &str) -> bool {
        let s = source.to_lowercase();
        self.docs.iter().flat_map(|d| &d.terms).any(|t| t.source.to_lowercase() == s)
    }

    /// SHA-256 over the serialized documents.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(&self.docs).expect("kb is serializable");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Every term whose source matches `text` (whole word, any case), and
    /// the `top_k` documents with the most matched terms, ties by id.
    pub fn query(&self, text: &str, top_k: usize) -> DomainGuide {
        let mut guide = DomainGuide::default();
        let mut ranked: Vec<(usize, &KnowledgeDoc, Vec<&Term>)> = Vec::new();
        for doc in &self.docs {
            let matched = doc.matched_terms(text);
            if matched.is_empty() {
                continue;
            }
            guide.terms.extend(matched.iter().map(|t| TermMatch {
                doc_id: doc.id.clone(),
                term: (*t).clone(),
            }));
            ranked.push((matched.len(), doc, matched));
        }
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
        guide.docs = ranked
            .into_iter()
            .take(top_k)
            .map(|(n, doc, matched)| DocExcerpt {
                id: doc.id.clone(),
                title: doc.title.clone(),
                matches: n,
                excerpt: doc.excerpt(&matched),
            })
            .collect();
        guide
    }
}

fn collect_files(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), MemoryError> {
    let io = |e: std::io::Error| MemoryError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    if path.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(io)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io)?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(&p, out)?;
        } else if matches!(p.extension().and_then(|e| e.to_str()), Some("md" | "txt")) {
            out.push(p);
        }
    }
    Ok(())
}

/// Writes `terms` as a KB document at `path`, to be loaded by a later run.
/// Terms are deduplicated by source, first one wins.
pub fn export_term_patch(path: &Path, id: &str, terms: &[Term]) -> Result<(), MemoryError> {
    let mut seen = BTreeSet::new();
    let doc = KnowledgeDoc {
        id: id.to_string(),
        title: id.to_string(),
        body: String::new(),
        terms: terms
            .iter()
            .filter(|t| seen.insert(t.source.to_lowercase()))
            .cloned()
            .collect(),
    };
    std::fs::write(path, doc.to_file_text()).map_err(|e| MemoryError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}
