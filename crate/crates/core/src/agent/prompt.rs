use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub type SlotMap = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("missing prompt slot {0:?}")]
    MissingSlot(String),
    #[error("template syntax error at byte {at}: {reason}")]
    Syntax { at: usize, reason: String },
    #[error("cannot read template {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Translator,
    Proofreader,
    Editor,
    VisionAnalysis,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        TemplateId::Translator,
        TemplateId::Proofreader,
        TemplateId::Editor,
        TemplateId::VisionAnalysis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Translator => "translator",
            TemplateId::Proofreader => "proofreader",
            TemplateId::Editor => "editor",
            TemplateId::VisionAnalysis => "vision_analysis",
        }
    }

    /// Values used when an optional slot is absent or blank.
    pub fn defaults(self) -> &'static [(&'static str, &'static str)] {
        match self {
            TemplateId::Translator => &[
                ("history", "No translation history."),
                ("kb_context", "No matching context documents."),
                ("web_docs", "No supporting documents."),
                ("video_descriptions", "No video clip descriptions."),
            ],
            TemplateId::Proofreader => &[
                ("short_term_memory", "None."),
                ("term_context", "None."),
                ("web_context", "None."),
            ],
            TemplateId::Editor => &[
                ("suggestion", "No suggestion provided."),
                ("user_instruction", "No user instruction provided."),
                ("visual_context", "No visual cues."),
                ("audio_context", "No audio cues."),
                ("previous_history", "None."),
                ("next_history", "None."),
                ("long_term_memory", "No long-term memory retrieved."),
            ],
            TemplateId::VisionAnalysis => &[("domain_terms", "None."), ("prior_visual_context", "None.")],
        }
    }

    fn builtin_body(self) -> &'static str {
        match self {
            TemplateId::Translator => TRANSLATOR,
            TemplateId::Proofreader => PROOFREADER,
            TemplateId::Editor => EDITOR,
            TemplateId::VisionAnalysis => VISION_ANALYSIS,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| format!("unknown template {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Part {
    Literal(String),
    Slot(String),
}

/// A prompt body with `{slot}` markers. `{{` and `}}` are literal braces.
/// Slots without a default are required.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    id: TemplateId,
    body: String,
    parts: Vec<Part>,
}

fn is_slot_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

impl PromptTemplate {
    pub fn parse(id: TemplateId, body: &str) -> Result<Self, PromptError> {
        let mut parts = Vec::new();
        let mut lit = String::new();
        let mut chars = body.char_indices().peekable();
        while let Some((at, c)) = chars.next() {
            match c {
                '{' if chars.peek().map(|&(_, n)| n) == Some('{') => {
                    chars.next();
                    lit.push('{');
                }
                '}' if chars.peek().map(|&(_, n)| n) == Some('}') => {
                    chars.next();
                    lit.push('}');
                }
                '{' => {
                    let mut name = String::new();
                    loop {
                        match chars.next() {
                            Some((_, '}')) => break,
                            Some((_, ch)) if is_slot_char(ch) => name.push(ch),
                            _ => {
                                return Err(PromptError::Syntax {
                                    at,
                                    reason: "unterminated or invalid slot".into(),
                                })
                            }
                        }
                    }
                    if name.is_empty() {
                        return Err(PromptError::Syntax {
                            at,
                            reason: "empty slot name".into(),
                        });
                    }
                    if !lit.is_empty() {
                        parts.push(Part::Literal(std::mem::take(&mut lit)));
                    }
                    parts.push(Part::Slot(name));
                }
                '}' => {
                    return Err(PromptError::Syntax {
                        at,
                        reason: "unmatched '}'".into(),
                    })
                }
                _ => lit.push(c),
            }
        }
        if !lit.is_empty() {
            parts.push(Part::Literal(lit));
        }
        Ok(Self {
            id,
            body: body.to_string(),
            parts,
        })
    }

    pub fn builtin(id: TemplateId) -> Self {
        Self::parse(id, id.builtin_body()).expect("builtin templates are well-formed")
    }

    pub fn id(&self) -> TemplateId {
        self.id
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    /// Slot names in order of first appearance.
    pub fn slot_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for p in &self.parts {
            if let Part::Slot(n) = p {
                if !names.contains(&n.as_str()) {
                    names.push(n);
                }
            }
        }
        names
    }

    pub fn required_slots(&self) -> Vec<&str> {
        let defaults = self.id.defaults();
        self.slot_names()
            .into_iter()
            .filter(|n| !defaults.iter().any(|(d, _)| d == n))
            .collect()
    }

    /// Single-pass substitution: slot values are never re-scanned.
    pub fn render(&self, slots: &SlotMap) -> Result<String, PromptError> {
        let defaults = self.id.defaults();
        let mut out = String::with_capacity(self.body.len());
        for p in &self.parts {
            match p {
                Part::Literal(s) => out.push_str(s),
                Part::Slot(name) => {
                    let default = defaults.iter().find(|(d, _)| d == name).map(|(_, v)| *v);
                    match (slots.get(name), default) {
                        (Some(v), Some(d)) if v.trim().is_empty() => out.push_str(d),
                        (Some(v), _) => out.push_str(v),
                        (None, Some(d)) => out.push_str(d),
                        (None, None) => return Err(PromptError::MissingSlot(name.clone())),
                    }
                }
            }
        }
        Ok(out)
    }
}

pub fn render_prompt(template: &PromptTemplate, slots: &SlotMap) -> Result<String, PromptError> {
    template.render(slots)
}

/// The prompt list: one template per agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    templates: BTreeMap<TemplateId, PromptTemplate>,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            templates: TemplateId::ALL
                .into_iter()
                .map(|id| (id, PromptTemplate::builtin(id)))
                .collect(),
        }
    }
}

impl PromptSet {
    pub fn get(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn set(&mut self, template: PromptTemplate) {
        self.templates.insert(template.id, template);
    }

    /// Replaces builtins with `<dir>/<id>.txt` where such files exist.
    pub fn with_overrides(mut self, dir: &Path) -> Result<Self, PromptError> {
        for id in TemplateId::ALL {
            let path = dir.join(format!("{id}.txt"));
            if !path.is_file() {
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|e| PromptError::Io {
                path: path.display().to_string(),
                reason: e.to_string(),
            })?;
            self.set(PromptTemplate::parse(id, &body)?);
        }
        Ok(self)
    }
}

const TRANSLATOR: &str = r"You are a professional translator. your job is to translate texts in domain of {domain} from {source_language} to {target_language}

you will be provided with a segment in source language parsed by line, where your translation text should keep the original meaning and the number of lines.

Keep every \n in the translated text in the corresponding place, and make sure to keep the same number of lines in the translated text.

You must break the translated sentence into multiple lines accordingly if original text breaks a complete sentence into different lines.

You should only output the translated text line by line without any other notation.

You current task is to translate the script in the domain of {domain} from {source_language} to {target_language}

Here are some supporting information including previous translation history, context documenting, supporting documents from internet and video clips description that might help you translate the text.
Please refer to them if necessary.
Previous translation history:

{history}

if you detect any word is in the following context, please use it as a reference for current translation

{kb_context}

Here are some supporting documents that might help you translate the text, refer to them if necessary.:

{web_docs}

Here are some descriptions of video clips that might help you translate the text, refer to them if necessary. :

{video_descriptions}

Now please translate the following text from {source_language} to {target_language}

{text}

Your translation:";

const EDITOR: &str = r#"You are an Editor ensuring overall translation quality and coherence,
aligning the translation with the original video content in domain {domain}, you must ensure the term and style are aligned with the domain's language.

Segment index: {idx}
Source text:
{source}

Translated text:
{translation}

Here is a provided suggestion for each segment, which may or may not useful for your revision, you may use the suggestion only if necessary (for example, term correctness).
Note that the suggestion may not be accurate, the proofreader has less information comparing to you, so you need to double check before making revision.
The proofreader may return "UNCLEAR" if they are not sure about the translation, they will specify the location and you need to check with other information provided to you to solve for unclear.
If there is no suggestions, you may ignore this part, but still check with other modality context and long-term memory for correctness and coherence.
Suggestion:

{suggestion}

Your edit will also follow the following instruction if provided:
User instruction:
{user_instruction}

--- Multimodal Context (Short-Term Memory) ---
Visual cues:
You may use visual cues from the video to improve translation or make corrections, the source text might not be accurate, you need to check with the video context if provided:
{visual_context}

Audio cues:
{audio_context}

Translation context:
You will be provided with the previous and next 5 segments' translations, which may help you understand the context and make corrections:
Previous translation history (up to 5 segments):
{previous_history}
Next translation history (up to 5 segments):
{next_history}

--- Long-Term Memory ---
Long-term memory provides broader context and domain-specific knowledge, you may use it to improve translation or make corrections:
{long_term_memory}

Notice:
1. Corrections or adjustments to better align text with the video context.
2. Suggestions for improving coherence across segments.
3. Logical consistency and any broader context adjustments.
4. Ensure the translation is accurate and aligned with the domain {domain}.
5. Ensure translation is smooth and fluent across segments.
6. To ensure the fluency in {target_language}, you do not have to ensure translation be word by word accurate, but be sure to convey the same information.

--- Important ---
Directly return the revised content only."#;

const PROOFREADER: &str = r#"You are a translation proofreader. Below are {number_of_segments} subtitle segments.
Some are full sentences, some are fragments. Give **specific advice** for each one,
but do not treat each segment separately you need information across segment.

Return suggestions in this format:
Segment 0: [your comment here]
Segment 1: [your comment here]
...

DO NOT return JSON. DO NOT rewrite the translation. Just return suggestion texts.

---
{segments}

**Short-term memory:**
{short_term_memory}

**Term context:**
{term_context}

**Web memory context:**
{web_context}

Focus on:
1. Translation accuracy while sticking to domain {domain} (missing or incorrect meanings)
2. Fluency (grammar, spelling, repetition. Only if it affects understanding) and ensure the translation is smooth and fluent across segments.
3. Terminology (Use term context to edit idioms, ensure every sentence is translated into domain-specific language)
4. If you have no suggestions, return "PASS" for that segment.
5. Source text isn't 100% accurate. If you have doubt about the source text, return "UNCLEAR" and specify the location, editor will check the issue.
6. Only make suggestions if you believe revision is necessary."#;

const VISION_ANALYSIS: &str = "You are the visual analyst of a subtitling team working on a video in the domain of {domain}.
You are given {frame_count} key frames taken in order from one clip of the video.

Describe the clip in one short paragraph: the scene, the people and objects on screen, any readable on-screen text, and anything else that helps interpret what is being said.
When you recognise one of the domain terms below, name it exactly as written in the list.

Domain terms:
{domain_terms}

Descriptions of earlier clips:
{prior_visual_context}

Your description:";
