//! Translator, proofreader and editor agents.
//!
//! The translator drafts each segment as soon as its chunk is perceived.
//! Proofreading and editing run afterwards over the whole document, so the
//! editor can see the drafts of following segments.

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::agent::{
    parse_proofreader_output, AgentRuntime, ChatMessage, PromptError, PromptSet, SlotMap, Suggestion,
    SuggestionKind, TemplateId,
};
use crate::backend::BackendError;
use crate::diag::Diagnostics;
use crate::media::ChunkBoundary;
use crate::memory::{DomainGuide, HistoryEntry, LongTermMemory, MemoryError, ShortTermMemory, Term, WebDoc};
use crate::text::{is_cjk, truncate_chars};

const WEB_QUERY_CHARS: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum TeamError {
    #[error("{stage} backend failed: {source}")]
    Backend {
        stage: Stage,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("invalid job config: {0}")]
    InvalidJob(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JobConfig {
    pub domain: String,
    pub source_language: String,
    pub target_language: String,
    pub user_instruction: Option<String>,
    pub history_window: usize,
    pub proofreader_batch: usize,
}

impl Default for JobConfig {
    fn default() -> Self {
        Self {
            domain: "General".into(),
            source_language: "en".into(),
            target_language: "zh".into(),
            user_instruction: None,
            history_window: 5,
            proofreader_batch: 20,
        }
    }
}

impl JobConfig {
    pub fn validate(&self) -> Result<(), TeamError> {
        let bad = |m: &str| Err(TeamError::InvalidJob(m.to_string()));
        if self.domain.trim().is_empty() {
            return bad("domain is empty");
        }
        if self.source_language.trim().is_empty() || self.target_language.trim().is_empty() {
            return bad("languages must be set");
        }
        if self.source_language.trim().eq_ignore_ascii_case(self.target_language.trim()) {
            return bad("source and target language are the same");
        }
        if self.proofreader_batch == 0 {
            return bad("proofreader_batch must be at least 1");
        }
        Ok(())
    }
}

/// Display name for common language codes; other values pass through.
pub fn language_name(code: &str) -> &str {
    match code.to_ascii_lowercase().as_str() {
        "en" => "English",
        "zh" | "zh-cn" | "zh-hans" => "Chinese",
        "zh-tw" | "zh-hant" => "Traditional Chinese",
        "ja" => "Japanese",
        "ko" => "Korean",
        "fr" => "French",
        "de" => "German",
        "es" => "Spanish",
        "it" => "Italian",
        "pt" => "Portuguese",
        "ru" => "Russian",
        "ar" => "Arabic",
        _ => code,
    }
}

/// Agent switches; all on by default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Features {
    pub proofreader: bool,
    pub domain_memory: bool,
    pub vision: bool,
    pub web: bool,
}

impl Default for Features {
    fn default() -> Self {
        Self {
            proofreader: true,
            domain_memory: true,
            vision: true,
            web: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Translator,
    Proofreader,
    Editor,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Translator => "translator",
            Stage::Proofreader => "proofreader",
            Stage::Editor => "editor",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Revision {
    pub stage: Stage,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SegmentDraft {
    pub index: usize,
    pub boundary: ChunkBoundary,
    pub source_lines: Vec<String>,
    pub draft_lines: Vec<String>,
    pub domain_guide: DomainGuide,
}

impl SegmentDraft {
    pub fn chunk_index(&self) -> usize {
        self.boundary.index
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranslationRecord {
    pub draft: SegmentDraft,
    pub suggestion: Suggestion,
    pub final_lines: Vec<String>,
    pub revision_log: Vec<Revision>,
}

/// Transcript lines: trimmed, blank lines dropped.
pub fn source_lines(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

fn reply_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with("```"))
        .map(String::from)
        .collect()
}

fn join_pair(a: &str, b: &str) -> String {
    let glue = match (a.chars().last(), b.chars().next()) {
        (Some(x), Some(y)) if is_cjk(x) || is_cjk(y) => "",
        _ => " ",
    };
    format!("{a}{glue}{b}")
}

/// Makes `lines` exactly as long as `source`: extra lines are merged into
/// the last kept line, missing lines are filled from the source.
pub fn force_line_count(mut lines: Vec<String>, source: &[String]) -> Vec<String> {
    let want = source.len();
    if want == 0 {
        return lines;
    }
    if lines.len() > want {
        let tail = lines.split_off(want);
        let last = lines.pop().expect("want > 0");
        lines.push(tail.iter().fold(last, |acc, l| join_pair(&acc, l)));
    }
    while lines.len() < want {
        lines.push(source[lines.len()].clone());
    }
    lines
}

fn one_line(s: &str) -> String {
    s.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" / ")
}

fn format_history(entries: &[HistoryEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("[{}] {} => {}", e.segment_index, one_line(&e.source), one_line(&e.target)))
        .collect::<Vec<_>>()
        .join("\n")
}

fn format_web(docs: &[WebDoc]) -> String {
    docs.iter()
        .map(|d| format!("{}: {} ({})", d.title, d.snippet, d.url))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The agents of one run and everything they read.
pub struct Team<'a> {
    pub job: &'a JobConfig,
    pub features: &'a Features,
    pub prompts: &'a PromptSet,
    pub runtime: &'a AgentRuntime,
    pub long_term: &'a LongTermMemory,
    pub diag: &'a Diagnostics,
}

impl Team<'_> {
    fn base_slots(&self) -> SlotMap {
        let mut s = SlotMap::new();
        s.insert("domain".into(), self.job.domain.clone());
        s.insert("source_language".into(), language_name(&self.job.source_language).to_string());
        s.insert("target_language".into(), language_name(&self.job.target_language).to_string());
        s
    }

    fn domain_guide(&self, text: &str) -> DomainGuide {
        if !self.features.domain_memory {
            return DomainGuide::default();
        }
        self.runtime.stats().record("kb");
        self.long_term.query_domain(text)
    }

    fn web_docs(&self, text: &str) -> Vec<WebDoc> {
        if !self.features.web || !self.long_term.has_web() {
            return Vec::new();
        }
        let query = truncate_chars(&one_line(text), WEB_QUERY_CHARS);
        self.long_term.query_web(&query, self.diag).unwrap_or_default()
    }

    fn context_cues(&self, chunk: usize, memory: &ShortTermMemory) -> String {
        let mut parts = Vec::new();
        if self.features.vision {
            if let Some(v) = memory.visual_cue(chunk).filter(|v| !v.description.is_empty()) {
                parts.push(format!("Clip {}: {}", chunk, v.description));
            }
        }
        if let Some(a) = memory.audio_cue(chunk) {
            if !a.events.is_empty() {
                parts.push(format!("Audio events: {}", a.events.join(", ")));
            }
            if let Some(e) = &a.emotion {
                parts.push(format!("Speaker emotion: {e}"));
            }
        }
        parts.join("\n")
    }

    /// Sends `prompt` and returns exactly `source.len()` lines: on a
    /// mismatch one corrective retry, then [`force_line_count`].
    fn complete_lines(&self, stage: Stage, index: usize, prompt: String, source: &[String]) -> Result<Vec<String>, BackendError> {
        let label = stage.to_string();
        let want = source.len();
        let first = match self.runtime.complete(&label, vec![ChatMessage::user(prompt.clone())]) {
            Ok(t) => t,
            Err(BackendError::ResponseEmpty { .. }) => String::new(),
            Err(e) => return Err(e),
        };
        let lines = reply_lines(&first);
        if lines.len() == want {
            return Ok(lines);
        }
        self.diag.warn(format!(
            "segment {index}: {label} returned {} lines for {want} source lines, retrying",
            lines.len()
        ));
        let mut messages = vec![ChatMessage::user(prompt)];
        if !first.is_empty() {
            messages.push(ChatMessage::assistant(first));
        }
        messages.push(ChatMessage::user(format!(
            "Your answer has {} lines but the source text has {want}. Return exactly {want} lines, one per source line, with no other text.",
            lines.len()
        )));
        let retry = match self.runtime.complete(&label, messages) {
            Ok(t) => reply_lines(&t),
            Err(e) => {
                self.diag.warn(format!("segment {index}: {label} repair retry failed: {e}"));
                lines
            }
        };
        if retry.len() == want {
            return Ok(retry);
        }
        self.diag.warn(format!(
            "segment {index}: {label} line count still {} for {want}, merged/padded",
            retry.len()
        ));
        Ok(force_line_count(retry, source))
    }

    /// Drafts segment `index` (chunk `boundary.index`) from its transcript.
    pub fn translate_segment(
        &self,
        index: usize,
        boundary: ChunkBoundary,
        source: &str,
        memory: &ShortTermMemory,
    ) -> Result<SegmentDraft, TeamError> {
        let lines = source_lines(source);
        let text = lines.join("\n");
        let guide = self.domain_guide(&text);
        let mut slots = self.base_slots();
        slots.insert(
            "history".into(),
            format_history(memory.retrieve_history_window(index, self.job.history_window)),
        );
        slots.insert("kb_context".into(), guide.render());
        slots.insert("web_docs".into(), format_web(&self.web_docs(&text)));
        slots.insert("video_descriptions".into(), self.context_cues(boundary.index, memory));
        slots.insert("text".into(), text);
        let prompt = self.prompts.get(TemplateId::Translator).render(&slots)?;
        let draft_lines = self
            .complete_lines(Stage::Translator, index, prompt, &lines)
            .map_err(|source| TeamError::Backend {
                stage: Stage::Translator,
                source,
            })?;
        Ok(SegmentDraft {
            index,
            boundary,
            source_lines: lines,
            draft_lines,
            domain_guide: guide,
        })
    }

    /// One suggestion per draft. Fails open to all-PASS.
    pub fn proofread_batch(&self, drafts: &[SegmentDraft], memory: &ShortTermMemory) -> Result<Vec<Suggestion>, TeamError> {
        let Some(first) = drafts.first() else {
            return Ok(Vec::new());
        };
        let all_pass = || drafts.iter().map(|d| Suggestion::pass(d.index)).collect();
        if !self.features.proofreader {
            return Ok(all_pass());
        }
        let segments = drafts
            .iter()
            .map(|d| {
                format!(
                    "Segment {}\nSource: {}\nTranslation: {}",
                    d.index,
                    d.source_lines.join("\n"),
                    d.draft_lines.join("\n")
                )
            })
            .collect::<Vec<_>>()
            .join("\n\n");
        let sources = drafts.iter().map(|d| d.source_lines.join("\n")).collect::<Vec<_>>().join("\n");
        let mut slots = self.base_slots();
        slots.insert("number_of_segments".into(), drafts.len().to_string());
        slots.insert("segments".into(), segments);
        slots.insert(
            "short_term_memory".into(),
            format_history(memory.retrieve_history_window(first.index, self.job.history_window)),
        );
        slots.insert("term_context".into(), self.domain_guide(&sources).render());
        slots.insert("web_context".into(), format_web(&self.web_docs(&sources)));
        let prompt = self.prompts.get(TemplateId::Proofreader).render(&slots)?;

        match self.runtime.complete("proofreader", vec![ChatMessage::user(prompt)]) {
            Ok(reply) => {
                let parsed = parse_proofreader_output(&reply, drafts.len(), first.index);
                for w in parsed.warnings {
                    self.diag.warn(w);
                }
                Ok(parsed.suggestions)
            }
            Err(e) => {
                self.diag.warn(format!(
                    "proofreader unavailable for segments {}..={}: {e}; assuming PASS",
                    first.index,
                    first.index + drafts.len() - 1
                ));
                Ok(all_pass())
            }
        }
    }

    /// Final lines for one segment. Fails open to the draft.
    pub fn edit_segment(
        &self,
        draft: &SegmentDraft,
        suggestion: &Suggestion,
        memory: &ShortTermMemory,
    ) -> Result<Vec<String>, TeamError> {
        let chunk = draft.chunk_index();
        let (previous, next) = memory.editor_window(draft.index, self.job.history_window);
        let visual = match memory.visual_cue(chunk) {
            Some(v) if self.features.vision && !v.description.is_empty() => {
                if v.entities.is_empty() {
                    v.description.clone()
                } else {
                    format!("{}\nEntities: {}", v.description, v.entities.join(", "))
                }
            }
            _ => String::new(),
        };
        let audio = memory
            .audio_cue(chunk)
            .map(|a| {
                let mut parts = Vec::new();
                if !a.events.is_empty() {
                    parts.push(format!("Events: {}", a.events.join(", ")));
                }
                if let Some(e) = &a.emotion {
                    parts.push(format!("Speaker emotion: {e}"));
                }
                parts.join("\n")
            })
            .unwrap_or_default();
        let long_term = if self.features.domain_memory {
            draft.domain_guide.render()
        } else {
            String::new()
        };

        let mut slots = self.base_slots();
        slots.insert("idx".into(), draft.index.to_string());
        slots.insert("source".into(), draft.source_lines.join("\n"));
        slots.insert("translation".into(), draft.draft_lines.join("\n"));
        slots.insert("suggestion".into(), suggestion.text.clone());
        slots.insert("user_instruction".into(), self.job.user_instruction.clone().unwrap_or_default());
        slots.insert("visual_context".into(), visual);
        slots.insert("audio_context".into(), audio);
        slots.insert("previous_history".into(), format_history(previous));
        slots.insert("next_history".into(), format_history(next));
        slots.insert("long_term_memory".into(), long_term);
        let prompt = self.prompts.get(TemplateId::Editor).render(&slots)?;

        match self.complete_lines(Stage::Editor, draft.index, prompt, &draft.source_lines) {
            Ok(lines) => Ok(lines),
            Err(e) => {
                self.diag.warn(format!("segment {}: editor unavailable, keeping draft: {e}", draft.index));
                Ok(draft.draft_lines.clone())
            }
        }
    }

    /// Proofreads every draft in batches, then edits segments in order,
    /// recording each final before the next edit.
    pub fn post_process(&self, drafts: Vec<SegmentDraft>, memory: &mut ShortTermMemory) -> Result<Vec<TranslationRecord>, TeamError> {
        let mut suggestions = Vec::with_capacity(drafts.len());
        for batch in drafts.chunks(self.job.proofreader_batch.max(1)) {
            suggestions.extend(self.proofread_batch(batch, memory)?);
        }
        let mut records = Vec::with_capacity(drafts.len());
        for (draft, suggestion) in drafts.into_iter().zip(suggestions) {
            let final_lines = self.edit_segment(&draft, &suggestion, memory)?;
            memory.append_final(HistoryEntry::new(
                draft.index,
                draft.source_lines.join("\n"),
                final_lines.join("\n"),
            ))?;
            let mut revision_log = vec![Revision {
                stage: Stage::Translator,
                text: draft.draft_lines.join("\n"),
            }];
            if suggestion.kind != SuggestionKind::Pass {
                revision_log.push(Revision {
                    stage: Stage::Proofreader,
                    text: suggestion.text.clone(),
                });
            }
            if final_lines != draft.draft_lines {
                revision_log.push(Revision {
                    stage: Stage::Editor,
                    text: final_lines.join("\n"),
                });
            }
            records.push(TranslationRecord {
                draft,
                suggestion,
                final_lines,
                revision_log,
            });
        }
        Ok(records)
    }
}

static SHOULD_BE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r#"["“]([^"”]+)["”]\s+should be translated as\s+["“]([^"”]+)["”]"#).expect("valid regex")
});

/// Corrections of the form `"X" should be translated as "Y"` that the
/// editor applied and the knowledge base does not know yet.
pub fn learned_terms(records: &[TranslationRecord], long_term: &LongTermMemory) -> Vec<Term> {
    let mut out: Vec<Term> = Vec::new();
    for r in records {
        let applied = r.revision_log.iter().any(|rev| rev.stage == Stage::Editor);
        if r.suggestion.is_pass() || !applied {
            continue;
        }
        let final_text = r.final_lines.join("\n");
        for cap in SHOULD_BE.captures_iter(&r.suggestion.text) {
            let (src, tgt) = (cap[1].trim(), cap[2].trim().trim_end_matches(['.', ',']));
            if final_text.contains(tgt)
                && !long_term.kb().has_term(src)
                && !out.iter().any(|t| t.source.eq_ignore_ascii_case(src))
            {
                out.push(Term::new(src, tgt));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{ChatRequest, ChatRule, FnChat, ScriptedChat};
    use crate::audio::AudioCue;
    use crate::memory::{KnowledgeBase, KnowledgeDoc};
    use crate::srt::Timestamp;
    use crate::vision::{CueStatus, VisualCue};
    use std::sync::Arc;

    struct Fixture {
        job: JobConfig,
        features: Features,
        prompts: PromptSet,
        runtime: AgentRuntime,
        long_term: LongTermMemory,
        diag: Diagnostics,
    }

    impl Fixture {
        fn new(chat: Arc<dyn crate::agent::ChatBackend>) -> Self {
            let kb = KnowledgeBase::from_docs(vec![KnowledgeDoc {
                id: "zerg".into(),
                title: "Zerg".into(),
                body: "The Spire unlocks flyers.".into(),
                terms: vec![Term::new("Spire", "飞龙塔")],
            }])
            .unwrap();
            Self {
                job: JobConfig {
                    domain: "StarCraft II".into(),
                    ..JobConfig::default()
                },
                features: Features::default(),
                prompts: PromptSet::default(),
                runtime: AgentRuntime::new(chat),
                long_term: LongTermMemory::new(kb),
                diag: Diagnostics::new(),
            }
        }

        fn team(&self) -> Team<'_> {
            Team {
                job: &self.job,
                features: &self.features,
                prompts: &self.prompts,
                runtime: &self.runtime,
                long_term: &self.long_term,
                diag: &self.diag,
            }
        }
    }

    fn boundary(i: usize) -> ChunkBoundary {
        ChunkBoundary {
            index: i,
            start: Timestamp::from_millis(i as u64 * 1000),
            end: Timestamp::from_millis(i as u64 * 1000 + 900),
        }
    }

    fn lines(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn two_line_draft() {
        let f = Fixture::new(Arc::new(ScriptedChat::sequence(["第一行\n第二行"])));
        let d = f.team().translate_segment(0, boundary(0), "line one\nline two", &ShortTermMemory::new()).unwrap();
        assert_eq!(d.draft_lines, ["第一行", "第二行"]);
        assert!(f.diag.is_empty());
    }

    #[test]
    fn repair_retry_then_success() {
        let chat = Arc::new(ScriptedChat::sequence(["只有一行", "第一行\n第二行"]));
        let f = Fixture::new(chat.clone());
        let d = f.team().translate_segment(0, boundary(0), "line one\nline two", &ShortTermMemory::new()).unwrap();
        assert_eq!(d.draft_lines, ["第一行", "第二行"]);
        assert_eq!(f.diag.warnings().len(), 1);
        let retry = &chat.requests()[1];
        assert_eq!(retry.messages.len(), 3);
        assert!(retry.last_user_content().contains("Return exactly 2 lines"));
    }

    #[test]
    fn merge_and_pad_fallback() {
        let src = lines(&["a", "b"]);
        assert_eq!(force_line_count(lines(&["x", "y", "z"]), &src), ["x", "y z"]);
        assert_eq!(force_line_count(lines(&["你好", "世界", "！"]), &src), ["你好", "世界！"]);
        assert_eq!(force_line_count(lines(&["x"]), &src), ["x", "b"]);
        assert_eq!(force_line_count(vec![], &src), ["a", "b"]);
    }

    #[test]
    fn devil_line_is_kept_verbatim() {
        let f = Fixture::new(Arc::new(ScriptedChat::sequence(["当恶魔行走在我们中间时会发生什么？"])));
        let d = f
            .team()
            .translate_segment(0, boundary(0), "What happens when the devil walks among us?", &ShortTermMemory::new())
            .unwrap();
        assert_eq!(d.draft_lines, ["当恶魔行走在我们中间时会发生什么？"]);
    }

    #[test]
    fn translator_prompt_carries_memory() {
        let chat = Arc::new(ScriptedChat::sequence(["建造飞龙塔"]));
        let f = Fixture::new(chat.clone());
        let mut m = ShortTermMemory::new();
        m.append_history(HistoryEntry::new(0, "gg", "打得好")).unwrap();
        m.append_visual_cue(VisualCue::empty(0, CueStatus::NoFrames)).unwrap();
        m.append_visual_cue(VisualCue {
            chunk_index: 1,
            description: "a Spire on creep".into(),
            entities: vec!["Spire".into()],
            status: CueStatus::Described,
        })
        .unwrap();
        m.append_audio_cue(AudioCue::silent(0)).unwrap();
        let mut a = AudioCue::silent(1);
        a.events = vec!["crowd".into()];
        m.append_audio_cue(a).unwrap();
        let d = f.team().translate_segment(1, boundary(1), "build a Spire", &m).unwrap();
        let p = chat.requests()[0].last_user_content().to_string();
        assert!(p.contains("[0] gg => 打得好"));
        assert!(p.contains("\"Spire\" => \"飞龙塔\""));
        assert!(p.contains("Clip 1: a Spire on creep\nAudio events: crowd"));
        assert!(p.contains("from English to Chinese"));
        assert_eq!(d.domain_guide.terms.len(), 1);
    }

    #[test]
    fn translator_outage_propagates() {
        let f = Fixture::new(Arc::new(ScriptedChat::sequence(Vec::<String>::new())));
        let err = f.team().translate_segment(0, boundary(0), "x", &ShortTermMemory::new()).unwrap_err();
        assert!(matches!(err, TeamError::Backend { stage: Stage::Translator, .. }));
    }

    fn drafts(n: usize) -> (Vec<SegmentDraft>, ShortTermMemory) {
        let mut m = ShortTermMemory::new();
        let ds: Vec<SegmentDraft> = (0..n)
            .map(|i| SegmentDraft {
                index: i,
                boundary: boundary(i),
                source_lines: vec![format!("source {i}")],
                draft_lines: vec![format!("草稿{i}")],
                domain_guide: DomainGuide::default(),
            })
            .collect();
        for d in &ds {
            m.append_history(HistoryEntry::new(d.index, &d.source_lines[0], &d.draft_lines[0])).unwrap();
        }
        (ds, m)
    }

    fn echo_editor() -> ChatRule {
        ChatRule {
            label: Some("editor".into()),
            extract_after: Some("Translated text:\n".into()),
            extract_before: Some("\n\nHere is a provided suggestion".into()),
            ..ChatRule::default()
        }
    }

    #[test]
    fn batch_of_five_all_pass() {
        let reply = (0..5).map(|i| format!("Segment {i}: PASS")).collect::<Vec<_>>().join("\n");
        let f = Fixture::new(Arc::new(ScriptedChat::sequence([reply])));
        let (ds, m) = drafts(5);
        let s = f.team().proofread_batch(&ds, &m).unwrap();
        assert_eq!(s.len(), 5);
        assert!(s.iter().all(Suggestion::is_pass));
    }

    #[test]
    fn proofreader_outage_fails_open() {
        let f = Fixture::new(Arc::new(ScriptedChat::sequence(Vec::<String>::new())));
        let (ds, m) = drafts(3);
        let s = f.team().proofread_batch(&ds, &m).unwrap();
        assert!(s.iter().all(Suggestion::is_pass));
        assert_eq!(f.diag.warnings().len(), 1);
    }

    #[test]
    fn all_pass_echo_editor_keeps_drafts() {
        let f = Fixture::new(Arc::new(ScriptedChat::from_rules(vec![
            ChatRule::reply("proofreader", "Segment 0: PASS\nSegment 1: PASS\nSegment 2: PASS"),
            echo_editor(),
        ])));
        let (ds, mut m) = drafts(3);
        let recs = f.team().post_process(ds.clone(), &mut m).unwrap();
        for (r, d) in recs.iter().zip(&ds) {
            assert_eq!(r.final_lines, d.draft_lines);
            assert_eq!(r.revision_log.len(), 1);
        }
        assert_eq!(m.finals().len(), 3);
    }

    #[test]
    fn empty_document() {
        let f = Fixture::new(Arc::new(ScriptedChat::sequence(Vec::<String>::new())));
        let mut m = ShortTermMemory::new();
        assert!(f.team().post_process(Vec::new(), &mut m).unwrap().is_empty());
    }

    #[test]
    fn one_flagged_of_forty() {
        let chat = FnChat::new(|req: &ChatRequest| {
            let p = req.last_user_content();
            if req.label == "proofreader" {
                // segments come in batches of 20; flag segment 27 only
                let first: usize = p.split("\n---\nSegment ").nth(1).unwrap().split('\n').next().unwrap().parse().unwrap();
                return Ok((first..first + 20)
                    .map(|i| if i == 27 { format!("Segment {i}: use 第二十七") } else { format!("Segment {i}: PASS") })
                    .collect::<Vec<_>>()
                    .join("\n"));
            }
            let draft = p.split("Translated text:\n").nth(1).unwrap().split('\n').next().unwrap();
            Ok(if p.contains("use 第二十七") { "第二十七".to_string() } else { draft.to_string() })
        });
        let f = Fixture::new(Arc::new(chat));
        let (ds, mut m) = drafts(40);
        let recs = f.team().post_process(ds, &mut m).unwrap();
        let edited: Vec<usize> = recs
            .iter()
            .filter(|r| r.revision_log.iter().any(|x| x.stage == Stage::Editor))
            .map(|r| r.draft.index)
            .collect();
        assert_eq!(edited, [27]);
        assert_eq!(f.runtime.stats().get("proofreader"), 2);
    }

    #[test]
    fn editor_prompt_has_instruction_and_windows() {
        let chat = Arc::new(ScriptedChat::from_rules(vec![
            ChatRule::reply("proofreader", "Segment 0: PASS"),
            echo_editor(),
        ]));
        let mut f = Fixture::new(chat.clone());
        f.job.user_instruction = Some("use formal register".into());
        let (ds, mut m) = drafts(3);
        f.team().post_process(ds, &mut m).unwrap();
        let editor_calls: Vec<_> = chat.requests().into_iter().filter(|r| r.label == "editor").collect();
        let p = editor_calls[1].last_user_content();
        assert!(p.contains("User instruction:\nuse formal register\n"));
        assert!(p.contains("Previous translation history (up to 5 segments):\n[0] source 0 => 草稿0\n"));
        assert!(p.contains("Next translation history (up to 5 segments):\n[2] source 2 => 草稿2\n"));
        let first = editor_calls[0].last_user_content();
        assert!(first.contains("Suggestion:\n\nNo suggestion provided.\n"));
    }

    #[test]
    fn editor_outage_keeps_draft() {
        let f = Fixture::new(Arc::new(ScriptedChat::from_rules(vec![
            ChatRule::reply("proofreader", "Segment 0: PASS"),
            ChatRule {
                label: Some("editor".into()),
                fail: true,
                ..ChatRule::default()
            },
        ])));
        let (ds, mut m) = drafts(1);
        let recs = f.team().post_process(ds, &mut m).unwrap();
        assert_eq!(recs[0].final_lines, ["草稿0"]);
        assert!(!f.diag.is_empty());
    }

    #[test]
    fn disabled_switches_skip_calls() {
        let mut f = Fixture::new(Arc::new(ScriptedChat::from_rules(vec![echo_editor(), ChatRule {
            label: Some("translator".into()),
            respond: Some("建造飞龙塔".into()),
            ..ChatRule::default()
        }])));
        f.features.proofreader = false;
        f.features.domain_memory = false;
        let d = f.team().translate_segment(0, boundary(0), "build a Spire", &ShortTermMemory::new()).unwrap();
        assert!(d.domain_guide.is_empty());
        let (ds, mut m) = drafts(2);
        let recs = f.team().post_process(ds, &mut m).unwrap();
        assert!(recs.iter().all(|r| r.suggestion.is_pass()));
        assert_eq!(f.runtime.stats().get("proofreader"), 0);
        assert_eq!(f.runtime.stats().get("kb"), 0);
    }

    #[test]
    fn learned_terms_from_applied_fix() {
        let f = Fixture::new(Arc::new(ScriptedChat::sequence(Vec::<String>::new())));
        let (mut ds, _) = drafts(1);
        let d = ds.remove(0);
        let rec = TranslationRecord {
            suggestion: Suggestion {
                segment_index: 0,
                kind: SuggestionKind::Comment,
                text: "\"spore crawler\" should be translated as \"孢子爬虫.\" Also \"Spire\" should be translated as \"飞龙塔\"".into(),
            },
            final_lines: vec!["孢子爬虫和飞龙塔".into()],
            revision_log: vec![Revision {
                stage: Stage::Editor,
                text: "孢子爬虫和飞龙塔".into(),
            }],
            draft: d,
        };
        // Spire is already known
        assert_eq!(learned_terms(&[rec], &f.long_term), [Term::new("spore crawler", "孢子爬虫")]);
    }
}
