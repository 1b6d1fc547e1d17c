//! Short-term memory (translation history and per-chunk cues) and
//! long-term memory (domain knowledge base and web search).

mod kb;
mod short_term;
mod web;

pub use kb::{export_term_patch, DocExcerpt, DomainGuide, KnowledgeBase, KnowledgeDoc, Term, TermMatch};
pub use short_term::{History, HistoryEntry, ShortTermMemory};
pub use web::{MockWeb, RemoteWeb, WebDoc, WebScript, WebSearchBackend};

use std::sync::Arc;

use serde::Serialize;

use crate::diag::{CallStats, Diagnostics};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MemoryError {
    #[error("{store}: expected index {expected}, got {got}")]
    IndexGap { store: &'static str, expected: usize, got: usize },
    #[error("web query is empty")]
    EmptyQuery,
    #[error("{path}:{line}: {reason}")]
    KbFormat { path: String, line: usize, reason: String },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

pub const DEFAULT_MAX_WEB_DOCS: usize = 3;

/// Domain knowledge plus an optional web search backend. Read-only for the
/// duration of a run.
#[derive(Clone)]
pub struct LongTermMemory {
    kb: Arc<KnowledgeBase>,
    web: Option<Arc<dyn WebSearchBackend>>,
    max_web_docs: usize,
    stats: CallStats,
}

impl std::fmt::Debug for LongTermMemory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LongTermMemory")
            .field("docs", &self.kb.docs().len())
            .field("web", &self.web.as_ref().map(|w| w.name().to_string()))
            .field("max_web_docs", &self.max_web_docs)
            .finish()
    }
}

impl LongTermMemory {
    pub fn new(kb: KnowledgeBase) -> Self {
        Self {
            kb: Arc::new(kb),
            web: None,
            max_web_docs: DEFAULT_MAX_WEB_DOCS,
            stats: CallStats::new(),
        }
    }

    pub fn with_web(mut self, web: Arc<dyn WebSearchBackend>) -> Self {
        self.web = Some(web);
        self
    }

    pub fn with_max_web_docs(mut self, n: usize) -> Self {
        self.max_web_docs = n;
        self
    }

    pub fn with_stats(mut self, stats: CallStats) -> Self {
        self.stats = stats;
        self
    }

    pub fn kb(&self) -> &KnowledgeBase {
        &self.kb
    }

    pub fn has_web(&self) -> bool {
        self.web.is_some()
    }

    pub fn query_domain(&self, text: &str) -> DomainGuide {
        self.kb.query(text, kb::DEFAULT_TOP_DOCS)
    }

    /// At most `max_web_docs` results. An unconfigured or failing backend
    /// yields no results and a warning.
    pub fn query_web(&self, query: &str, diag: &Diagnostics) -> Result<Vec<WebDoc>, MemoryError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(MemoryError::EmptyQuery);
        }
        let Some(web) = &self.web else {
            diag.warn("web search requested but no web backend is configured");
            return Ok(Vec::new());
        };
        self.stats.record("web");
        match web.search(query) {
            Ok(mut docs) => {
                docs.truncate(self.max_web_docs);
                Ok(docs)
            }
            Err(e) => {
                diag.warn(format!("web search failed: {e}"));
                Ok(Vec::new())
            }
        }
    }
}

#[derive(Serialize)]
struct MemoryDump<'a> {
    short_term: &'a ShortTermMemory,
    long_term: &'a KnowledgeBase,
}

/// Both memories as one JSON document, for debugging.
pub fn memory_dump(short_term: &ShortTermMemory, long_term: &LongTermMemory) -> serde_json::Value {
    serde_json::to_value(MemoryDump {
        short_term,
        long_term: long_term.kb(),
    })
    .expect("memory is serializable")
}
