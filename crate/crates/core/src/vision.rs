//! Visual cue extraction from chunk keyframes.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentRuntime, ChatMessage, PromptTemplate, SlotMap};
use crate::backend::{load_script, BackendError, JsonHttpClient, RemoteSettings};
use crate::diag::Diagnostics;
use crate::media::{EncodedImage, FrameRef};
use crate::memory::ShortTermMemory;
use crate::text::{contains_term, dedup_preserving_order, truncate_chars};

const PRIOR_CUES: usize = 3;
const MAX_PROMPT_TERMS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueStatus {
    Described,
    NoFrames,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisualCue {
    pub chunk_index: usize,
    pub description: String,
    pub entities: Vec<String>,
    pub status: CueStatus,
}

impl VisualCue {
    pub fn empty(chunk_index: usize, status: CueStatus) -> Self {
        Self {
            chunk_index,
            description: String::new(),
            entities: Vec::new(),
            status,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VlmRequest {
    pub chunk_index: usize,
    pub images: Vec<EncodedImage>,
    pub prompt: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VlmResponse {
    pub text: String,
    #[serde(default)]
    pub entities: Vec<String>,
}

pub trait VlmBackend: Send + Sync {
    fn name(&self) -> &str;

    fn analyze(&self, request: &VlmRequest) -> Result<VlmResponse, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VlmReply {
    Text(String),
    Full(VlmResponse),
}

impl From<VlmReply> for VlmResponse {
    fn from(r: VlmReply) -> Self {
        match r {
            VlmReply::Text(text) => VlmResponse {
                text,
                entities: Vec::new(),
            },
            VlmReply::Full(r) => r,
        }
    }
}

/// Replies per chunk index, else `default`; chunks in `fail` are outages.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmScript {
    pub chunks: BTreeMap<usize, VlmReply>,
    pub default: Option<VlmReply>,
    pub fail: Vec<usize>,
}

#[derive(Debug)]
pub struct MockVlm {
    script: VlmScript,
    log: Mutex<Vec<VlmRequest>>,
}

impl MockVlm {
    pub fn new(script: VlmScript) -> Self {
        Self {
            script,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn from_script(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(load_script("vlm", path)?))
    }

    pub fn requests(&self) -> Vec<VlmRequest> {
        self.log.lock().expect("mock log poisoned").clone()
    }
}

impl VlmBackend for MockVlm {
    fn name(&self) -> &str {
        "mock-vlm"
    }

    fn analyze(&self, request: &VlmRequest) -> Result<VlmResponse, BackendError> {
        self.log.lock().expect("mock log poisoned").push(request.clone());
        if self.script.fail.contains(&request.chunk_index) {
            return Err(BackendError::unavailable("vlm", "scripted outage"));
        }
        self.script
            .chunks
            .get(&request.chunk_index)
            .or(self.script.default.as_ref())
            .cloned()
            .map(Into::into)
            .ok_or_else(|| BackendError::unavailable("vlm", format!("no reply scripted for chunk {}", request.chunk_index)))
    }
}

#[derive(Serialize)]
struct RemoteVlmRequest<'a> {
    images: &'a [EncodedImage],
    prompt: &'a str,
}

/// `POST {images: [{format, bytes}], prompt}` → `{text, entities?}`.
#[derive(Debug, Clone)]
pub struct RemoteVlm {
    client: JsonHttpClient,
}

impl RemoteVlm {
    pub fn new(endpoint: &str, settings: RemoteSettings) -> Self {
        Self {
            client: JsonHttpClient::new("vlm", endpoint, settings),
        }
    }
}

impl VlmBackend for RemoteVlm {
    fn name(&self) -> &str {
        "remote-vlm"
    }

    fn analyze(&self, request: &VlmRequest) -> Result<VlmResponse, BackendError> {
        self.client.post(&RemoteVlmRequest {
            images: &request.images,
            prompt: &request.prompt,
        })
    }
}

/// Uses the chat backend as the vision model, images attached to the user
/// message.
#[derive(Clone)]
pub struct ChatVlm {
    runtime: AgentRuntime,
}

impl ChatVlm {
    pub fn new(runtime: AgentRuntime) -> Self {
        Self { runtime }
    }
}

impl VlmBackend for ChatVlm {
    fn name(&self) -> &str {
        "chat-vlm"
    }

    fn analyze(&self, request: &VlmRequest) -> Result<VlmResponse, BackendError> {
        let mut msg = ChatMessage::user(request.prompt.clone());
        msg.images = request.images.clone();
        let text = self.runtime.complete("vision", vec![msg])?;
        Ok(VlmResponse {
            text,
            entities: Vec::new(),
        })
    }
}

/// Domain terms occurring in `description` as whole words, in term order.
pub fn extract_entities(description: &str, domain_terms: &[String]) -> Vec<String> {
    dedup_preserving_order(
        domain_terms
            .iter()
            .filter(|t| contains_term(description, t))
            .cloned(),
    )
}

/// Inputs for one vision call besides the frames.
pub struct VisionContext<'a> {
    pub domain: &'a str,
    pub domain_terms: &'a [String],
    pub prompt: &'a PromptTemplate,
    pub max_frames: usize,
}

/// Builds the analysis prompt for `chunk` from earlier visual cues.
pub fn vision_prompt(
    chunk: usize,
    frame_count: usize,
    memory: &ShortTermMemory,
    ctx: &VisionContext<'_>,
) -> Result<String, crate::agent::PromptError> {
    let prior: Vec<String> = memory
        .prior_visual_descriptions(chunk, PRIOR_CUES)
        .iter()
        .map(|c| format!("Clip {}: {}", c.chunk_index, c.description))
        .collect();
    let terms: Vec<&str> = ctx
        .domain_terms
        .iter()
        .take(MAX_PROMPT_TERMS)
        .map(String::as_str)
        .collect();
    let mut slots = SlotMap::new();
    slots.insert("domain".into(), ctx.domain.to_string());
    slots.insert("frame_count".into(), frame_count.to_string());
    slots.insert("domain_terms".into(), terms.join(", "));
    slots.insert("prior_visual_context".into(), prior.join("\n"));
    ctx.prompt.render(&slots)
}

/// Describes the keyframes of one chunk. Never fails: missing frames or a
/// backend failure give an empty cue (the latter with a warning).
pub fn analyze_frames(
    chunk: usize,
    frames: &[FrameRef],
    memory: &ShortTermMemory,
    ctx: &VisionContext<'_>,
    backend: &dyn VlmBackend,
    diag: &Diagnostics,
) -> VisualCue {
    if frames.is_empty() {
        return VisualCue::empty(chunk, CueStatus::NoFrames);
    }
    let images: Vec<EncodedImage> = frames.iter().take(ctx.max_frames).map(|f| f.image.clone()).collect();
    let prompt = match vision_prompt(chunk, images.len(), memory, ctx) {
        Ok(p) => p,
        Err(e) => {
            diag.warn(format!("chunk {chunk}: vision prompt: {e}"));
            return VisualCue::empty(chunk, CueStatus::Failed);
        }
    };
    let request = VlmRequest {
        chunk_index: chunk,
        images,
        prompt,
    };
    match backend.analyze(&request) {
        Ok(resp) if !resp.text.trim().is_empty() => {
            let description = resp.text.trim().to_string();
            let mut entities = extract_entities(&description, ctx.domain_terms);
            entities.extend(resp.entities.into_iter().map(|e| truncate_chars(e.trim(), 64)).filter(|e| !e.is_empty()));
            VisualCue {
                chunk_index: chunk,
                description,
                entities: dedup_preserving_order(entities),
                status: CueStatus::Described,
            }
        }
        Ok(_) => {
            diag.warn(format!("chunk {chunk}: vision backend returned an empty description"));
            VisualCue::empty(chunk, CueStatus::Failed)
        }
        Err(e) => {
            diag.warn(format!("chunk {chunk}: vision unavailable: {e}"));
            VisualCue::empty(chunk, CueStatus::Failed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::TemplateId;
    use crate::backend::testing;
    use crate::srt::Timestamp;

    fn frames(n: usize) -> Vec<FrameRef> {
        (0..n)
            .map(|i| FrameRef {
                timestamp: Timestamp::from_millis(i as u64 * 1000),
                image: EncodedImage::new("png", vec![i as u8]),
            })
            .collect()
    }

    fn terms(t: &[&str]) -> Vec<String> {
        t.iter().map(|s| s.to_string()).collect()
    }

    fn run(mock: &MockVlm, chunk: usize, memory: &ShortTermMemory, domain_terms: &[String], diag: &Diagnostics) -> VisualCue {
        let prompt = PromptTemplate::builtin(TemplateId::VisionAnalysis);
        let ctx = VisionContext {
            domain: "StarCraft II",
            domain_terms,
            prompt: &prompt,
            max_frames: 3,
        };
        analyze_frames(chunk, &frames(5), memory, &ctx, mock, diag)
    }

    fn scripted(pairs: &[(usize, &str)]) -> MockVlm {
        MockVlm::new(VlmScript {
            chunks: pairs.iter().map(|(k, v)| (*k, VlmReply::Text(v.to_string()))).collect(),
            ..VlmScript::default()
        })
    }

    #[test]
    fn entities_from_description() {
        let mock = scripted(&[(0, "player builds a Spire")]);
        let cue = run(&mock, 0, &ShortTermMemory::new(), &terms(&["Spire", "pylon"]), &Diagnostics::new());
        assert_eq!(cue.entities, ["Spire"]);
        assert_eq!(cue.status, CueStatus::Described);
        assert_eq!(mock.requests()[0].images.len(), 3);
    }

    #[test]
    fn entity_oracle_on_substrings() {
        let desc = "Spires and a pylon; the SPIRE burns";
        // oracle: lowercase, split on non-alphanumerics, compare word lists
        let words: Vec<String> = desc.to_lowercase().split(|c: char| !c.is_alphanumeric()).map(String::from).collect();
        let domain = terms(&["Spire", "pylon", "nexus"]);
        let want: Vec<String> = domain.iter().filter(|t| words.contains(&t.to_lowercase())).cloned().collect();
        assert_eq!(extract_entities(desc, &domain), want);
    }

    #[test]
    fn backend_entities_are_unioned() {
        let mock = MockVlm::new(VlmScript {
            default: Some(VlmReply::Full(VlmResponse {
                text: "a pylon glows".into(),
                entities: vec!["Serral".into(), "pylon".into()],
            })),
            ..VlmScript::default()
        });
        let cue = run(&mock, 0, &ShortTermMemory::new(), &terms(&["pylon"]), &Diagnostics::new());
        assert_eq!(cue.entities, ["pylon", "Serral"]);
    }

    #[test]
    fn no_frames_gives_empty_cue() {
        let prompt = PromptTemplate::builtin(TemplateId::VisionAnalysis);
        let ctx = VisionContext {
            domain: "d",
            domain_terms: &[],
            prompt: &prompt,
            max_frames: 3,
        };
        let mock = scripted(&[]);
        let cue = analyze_frames(0, &[], &ShortTermMemory::new(), &ctx, &mock, &Diagnostics::new());
        assert_eq!(cue, VisualCue::empty(0, CueStatus::NoFrames));
        assert!(mock.requests().is_empty());
    }

    #[test]
    fn prior_cues_reach_backend() {
        let mut memory = ShortTermMemory::new();
        for (i, d) in ["zerg base at night", "two drones mining"].iter().enumerate() {
            memory
                .append_visual_cue(VisualCue {
                    chunk_index: i,
                    description: d.to_string(),
                    entities: vec![],
                    status: CueStatus::Described,
                })
                .unwrap();
        }
        let mock = scripted(&[(2, "a Spire")]);
        run(&mock, 2, &memory, &[], &Diagnostics::new());
        let prompt = &mock.requests()[0].prompt;
        assert!(prompt.contains("Clip 0: zerg base at night\nClip 1: two drones mining"));
    }

    #[test]
    fn outage_is_advisory() {
        let diag = Diagnostics::new();
        let mock = MockVlm::new(VlmScript {
            fail: vec![0],
            ..VlmScript::default()
        });
        let cue = run(&mock, 0, &ShortTermMemory::new(), &[], &diag);
        assert_eq!(cue.status, CueStatus::Failed);
        assert!(cue.description.is_empty());
        assert_eq!(diag.warnings().len(), 1);
    }

    #[test]
    fn script_json_accepts_both_reply_forms() {
        let script: VlmScript =
            serde_json::from_str(r#"{"chunks":{"0":"plain","1":{"text":"full","entities":["x"]}}}"#).unwrap();
        assert_eq!(script.chunks[&0], VlmReply::Text("plain".into()));
        assert!(matches!(&script.chunks[&1], VlmReply::Full(r) if r.entities == ["x"]));
    }

    #[test]
    fn remote_contract() {
        let server = testing::serve(|_| Some(r#"{"text":"a Spire","entities":["Spire"]}"#.into()));
        let vlm = RemoteVlm::new(&server.url, RemoteSettings::default());
        let resp = vlm
            .analyze(&VlmRequest {
                chunk_index: 0,
                images: vec![EncodedImage::new("png", vec![1, 2, 3])],
                prompt: "describe".into(),
            })
            .unwrap();
        assert_eq!(resp.entities, ["Spire"]);
        let sent: serde_json::Value = serde_json::from_str(&server.requests.lock().unwrap()[0]).unwrap();
        assert_eq!(
            sent,
            serde_json::json!({"images": [{"format": "png", "bytes": "AQID"}], "prompt": "describe"})
        );
    }
}
