//! Audio cue extraction: transcript, background events, speaker emotion.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::backend::{load_script, BackendError, JsonHttpClient, RemoteSettings};
use crate::diag::{CallStats, Diagnostics};
use crate::media::{AudioSpan, Chunk};
use crate::memory::{KnowledgeBase, ShortTermMemory};
use crate::text::{contains_term, dedup_preserving_order, truncate_chars};

pub const MAX_KEYWORDS: usize = 20;
pub const MAX_KEYWORD_CHARS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AudioError {
    #[error("transcription failed for chunk {chunk_index}: {reason}")]
    TranscriptionFailed { chunk_index: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioCue {
    pub chunk_index: usize,
    pub transcript: String,
    pub events: Vec<String>,
    pub emotion: Option<String>,
    pub speaker_hint: Option<String>,
    /// No speech was recognised.
    pub silent: bool,
}

impl AudioCue {
    pub fn silent(chunk_index: usize) -> Self {
        Self {
            chunk_index,
            transcript: String::new(),
            events: Vec::new(),
            emotion: None,
            speaker_hint: None,
            silent: true,
        }
    }
}

/// Audio to transcribe plus biasing keywords.
#[derive(Debug, Clone)]
pub struct TranscriptionRequest {
    pub audio: AudioSpan,
    pub context_keywords: Vec<String>,
    pub language_hint: Option<String>,
}

impl TranscriptionRequest {
    /// Keywords are trimmed, cut to 64 characters, deduplicated and capped
    /// at 20, keeping the first ones.
    pub fn new(audio: AudioSpan, keywords: Vec<String>, language_hint: Option<String>) -> Self {
        let cleaned = keywords
            .iter()
            .map(|k| truncate_chars(k.trim(), MAX_KEYWORD_CHARS))
            .filter(|k| !k.is_empty());
        let mut context_keywords = dedup_preserving_order(cleaned);
        context_keywords.truncate(MAX_KEYWORDS);
        Self {
            audio,
            context_keywords,
            language_hint,
        }
    }

    pub fn chunk_index(&self) -> usize {
        self.audio.chunk_index
    }
}

pub trait AsrBackend: Send + Sync {
    fn name(&self) -> &str;

    fn transcribe(&self, request: &TranscriptionRequest) -> Result<String, BackendError>;
}

pub trait AudioTagBackend: Send + Sync {
    fn name(&self) -> &str;

    fn tags(&self, audio: &AudioSpan) -> Result<Vec<String>, BackendError>;
}

pub trait EmotionBackend: Send + Sync {
    fn name(&self) -> &str;

    fn emotion(&self, audio: &AudioSpan) -> Result<Option<String>, BackendError>;
}

/// Scripted transcripts per chunk index. Unscripted chunks are silent.
/// With `echo_keywords` the received keywords are appended as
/// `[hints: a, b]`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AsrScript {
    pub chunks: BTreeMap<usize, String>,
    pub echo_keywords: bool,
    pub fail: Vec<usize>,
}

/// What a mock ASR received.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsrCall {
    pub chunk_index: usize,
    pub keywords: Vec<String>,
    pub language_hint: Option<String>,
}

#[derive(Debug)]
pub struct MockAsr {
    script: AsrScript,
    log: Mutex<Vec<AsrCall>>,
}

impl MockAsr {
    pub fn new(script: AsrScript) -> Self {
        Self {
            script,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn from_script(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(load_script("asr", path)?))
    }

    pub fn calls(&self) -> Vec<AsrCall> {
        self.log.lock().expect("mock log poisoned").clone()
    }
}

impl AsrBackend for MockAsr {
    fn name(&self) -> &str {
        "mock-asr"
    }

    fn transcribe(&self, request: &TranscriptionRequest) -> Result<String, BackendError> {
        let chunk = request.chunk_index();
        self.log.lock().expect("mock log poisoned").push(AsrCall {
            chunk_index: chunk,
            keywords: request.context_keywords.clone(),
            language_hint: request.language_hint.clone(),
        });
        if self.script.fail.contains(&chunk) {
            return Err(BackendError::unavailable("asr", "scripted outage"));
        }
        let mut text = self.script.chunks.get(&chunk).cloned().unwrap_or_default();
        if self.script.echo_keywords && !request.context_keywords.is_empty() {
            if !text.is_empty() {
                text.push(' ');
            }
            text.push_str(&format!("[hints: {}]", request.context_keywords.join(", ")));
        }
        Ok(text)
    }
}

/// Scripted labels per chunk index; `unavailable` simulates an outage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelScript<T> {
    pub chunks: BTreeMap<usize, T>,
    pub unavailable: bool,
}

#[derive(Debug, Default)]
pub struct MockAudioTags {
    script: LabelScript<Vec<String>>,
}

impl MockAudioTags {
    pub fn new(script: LabelScript<Vec<String>>) -> Self {
        Self { script }
    }

    pub fn from_script(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(load_script("audio_tags", path)?))
    }
}

impl AudioTagBackend for MockAudioTags {
    fn name(&self) -> &str {
        "mock-audio-tags"
    }

    fn tags(&self, audio: &AudioSpan) -> Result<Vec<String>, BackendError> {
        if self.script.unavailable {
            return Err(BackendError::unavailable("audio_tags", "scripted outage"));
        }
        Ok(self.script.chunks.get(&audio.chunk_index).cloned().unwrap_or_default())
    }
}

#[derive(Debug, Default)]
pub struct MockEmotion {
    script: LabelScript<String>,
}

impl MockEmotion {
    pub fn new(script: LabelScript<String>) -> Self {
        Self { script }
    }

    pub fn from_script(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(load_script("emotion", path)?))
    }
}

impl EmotionBackend for MockEmotion {
    fn name(&self) -> &str {
        "mock-emotion"
    }

    fn emotion(&self, audio: &AudioSpan) -> Result<Option<String>, BackendError> {
        if self.script.unavailable {
            return Err(BackendError::unavailable("emotion", "scripted outage"));
        }
        Ok(self.script.chunks.get(&audio.chunk_index).cloned())
    }
}

#[derive(Serialize)]
struct RemoteAudioRequest<'a> {
    audio_b64: String,
    keywords: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    language_hint: Option<&'a str>,
}

impl<'a> RemoteAudioRequest<'a> {
    fn new(audio: &AudioSpan, keywords: &'a [String], language_hint: Option<&'a str>) -> Self {
        Self {
            audio_b64: base64::engine::general_purpose::STANDARD.encode(audio.to_wav()),
            keywords,
            language_hint,
        }
    }
}

#[derive(Deserialize)]
struct TextResponse {
    text: String,
}

#[derive(Deserialize)]
struct TagsResponse {
    tags: Vec<String>,
}

#[derive(Deserialize)]
struct LabelResponse {
    label: Option<String>,
}

/// Remote audio model speaking `{audio_b64, keywords, language_hint}`;
/// the WAV payload is 16 kHz mono PCM. Replies are `{text}` for ASR,
/// `{tags}` for event tagging and `{label}` for emotion.
#[derive(Debug, Clone)]
pub struct RemoteAudio {
    client: JsonHttpClient,
}

impl RemoteAudio {
    pub fn new(backend: &str, endpoint: &str, settings: RemoteSettings) -> Self {
        Self {
            client: JsonHttpClient::new(backend, endpoint, settings),
        }
    }
}

impl AsrBackend for RemoteAudio {
    fn name(&self) -> &str {
        "remote-asr"
    }

    fn transcribe(&self, request: &TranscriptionRequest) -> Result<String, BackendError> {
        let body = RemoteAudioRequest::new(&request.audio, &request.context_keywords, request.language_hint.as_deref());
        Ok(self.client.post::<_, TextResponse>(&body)?.text)
    }
}

impl AudioTagBackend for RemoteAudio {
    fn name(&self) -> &str {
        "remote-audio-tags"
    }

    fn tags(&self, audio: &AudioSpan) -> Result<Vec<String>, BackendError> {
        Ok(self.client.post::<_, TagsResponse>(&RemoteAudioRequest::new(audio, &[], None))?.tags)
    }
}

impl EmotionBackend for RemoteAudio {
    fn name(&self) -> &str {
        "remote-emotion"
    }

    fn emotion(&self, audio: &AudioSpan) -> Result<Option<String>, BackendError> {
        Ok(self.client.post::<_, LabelResponse>(&RemoteAudioRequest::new(audio, &[], None))?.label)
    }
}

/// Event tags, deduplicated in order. Failures give no tags and a warning.
pub fn extract_audio_events(audio: &AudioSpan, backend: &dyn AudioTagBackend, diag: &Diagnostics) -> Vec<String> {
    if audio.is_empty() {
        return Vec::new();
    }
    match backend.tags(audio) {
        Ok(tags) => dedup_preserving_order(tags.into_iter().map(|t| t.trim().to_string()).filter(|t| !t.is_empty())),
        Err(e) => {
            diag.warn(format!("chunk {}: audio events unavailable: {e}", audio.chunk_index));
            Vec::new()
        }
    }
}

/// The emotion label as returned. Failures give none and a warning.
pub fn extract_emotion(audio: &AudioSpan, backend: &dyn EmotionBackend, diag: &Diagnostics) -> Option<String> {
    if audio.is_empty() {
        return None;
    }
    match backend.emotion(audio) {
        Ok(label) => label.map(|l| l.trim().to_string()).filter(|l| !l.is_empty()),
        Err(e) => {
            diag.warn(format!("chunk {}: emotion unavailable: {e}", audio.chunk_index));
            None
        }
    }
}

/// Empty audio transcribes to `""` without calling the backend.
pub fn transcribe(request: &TranscriptionRequest, backend: &dyn AsrBackend) -> Result<String, AudioError> {
    if request.audio.is_empty() {
        return Ok(String::new());
    }
    backend
        .transcribe(request)
        .map(|t| t.trim().to_string())
        .map_err(|e| AudioError::TranscriptionFailed {
            chunk_index: request.chunk_index(),
            reason: e.to_string(),
        })
}

/// The audio backends of a run. Event and emotion backends are optional.
#[derive(Clone)]
pub struct AudioBackends {
    pub asr: Arc<dyn AsrBackend>,
    pub tags: Option<Arc<dyn AudioTagBackend>>,
    pub emotion: Option<Arc<dyn EmotionBackend>>,
    pub stats: CallStats,
}

impl AudioBackends {
    pub fn new(asr: Arc<dyn AsrBackend>) -> Self {
        Self {
            asr,
            tags: None,
            emotion: None,
            stats: CallStats::new(),
        }
    }
}

/// Keywords for chunk `chunk`: visual entities of chunks up to and
/// including it (most recent first), then knowledge-base terms found in
/// earlier transcripts (most recent first). At most 20.
pub fn injection_keywords(memory: &ShortTermMemory, kb: &KnowledgeBase, chunk: usize) -> Vec<String> {
    let mut words = memory.visual_keywords(chunk);
    let terms = kb.source_terms();
    let prior = &memory.audio_cues()[..chunk.min(memory.audio_cues().len())];
    for cue in prior.iter().rev() {
        words.extend(terms.iter().filter(|t| contains_term(&cue.transcript, t)).cloned());
    }
    let mut words = dedup_preserving_order(words);
    words.truncate(MAX_KEYWORDS);
    words
}

/// Transcript, events and emotion of one chunk.
pub fn build_audio_cue(
    chunk: &Chunk,
    keywords: Vec<String>,
    language_hint: Option<String>,
    backends: &AudioBackends,
    diag: &Diagnostics,
) -> Result<AudioCue, AudioError> {
    let audio = &chunk.audio;
    let request = TranscriptionRequest::new(audio.clone(), keywords, language_hint);
    if !audio.is_empty() {
        backends.stats.record("asr");
    }
    let transcript = transcribe(&request, &*backends.asr)?;
    let events = match &backends.tags {
        Some(b) if !audio.is_empty() => {
            backends.stats.record("audio_tags");
            extract_audio_events(audio, &**b, diag)
        }
        _ => Vec::new(),
    };
    let emotion = match &backends.emotion {
        Some(b) if !audio.is_empty() => {
            backends.stats.record("emotion");
            extract_emotion(audio, &**b, diag)
        }
        _ => None,
    };
    Ok(AudioCue {
        chunk_index: chunk.index(),
        silent: transcript.is_empty(),
        transcript,
        events,
        emotion,
        speaker_hint: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::testing;
    use crate::media::ChunkBoundary;
    use crate::memory::{KnowledgeDoc, Term};
    use crate::srt::Timestamp;
    use crate::vision::{CueStatus, VisualCue};

    fn span(chunk_index: usize, samples: usize) -> AudioSpan {
        AudioSpan {
            chunk_index,
            start: Timestamp::ZERO,
            end: Timestamp::from_millis(1000),
            samples: vec![7i16; samples].into(),
        }
    }

    fn chunk(index: usize, samples: usize) -> Chunk {
        Chunk {
            boundary: ChunkBoundary {
                index,
                start: Timestamp::ZERO,
                end: Timestamp::from_millis(1000),
            },
            audio: span(index, samples),
            frames: vec![],
            decode_failed: false,
        }
    }

    fn asr(pairs: &[(usize, &str)], echo: bool) -> Arc<MockAsr> {
        Arc::new(MockAsr::new(AsrScript {
            chunks: pairs.iter().map(|(k, v)| (*k, v.to_string())).collect(),
            echo_keywords: echo,
            ..AsrScript::default()
        }))
    }

    fn tags(pairs: &[(usize, &[&str])]) -> MockAudioTags {
        MockAudioTags::new(LabelScript {
            chunks: pairs
                .iter()
                .map(|(k, v)| (*k, v.iter().map(|s| s.to_string()).collect()))
                .collect(),
            unavailable: false,
        })
    }

    #[test]
    fn events_pass_through_and_dedup() {
        let d = Diagnostics::new();
        assert_eq!(extract_audio_events(&span(0, 16), &tags(&[(0, &["applause"])]), &d), ["applause"]);
        assert!(extract_audio_events(&span(1, 16), &tags(&[]), &d).is_empty());
        let dup = tags(&[(0, &["music", "crowd", "music"])]);
        let got = extract_audio_events(&span(0, 16), &dup, &d);
        assert_eq!(got, ["music", "crowd"]);
        assert!(d.is_empty());
    }

    #[test]
    fn emotion_is_open_vocabulary_and_advisory() {
        let d = Diagnostics::new();
        let mut script = LabelScript::default();
        script.chunks.insert(0, "wistful-ish".to_string());
        assert_eq!(extract_emotion(&span(0, 16), &MockEmotion::new(script), &d).as_deref(), Some("wistful-ish"));
        let down = MockEmotion::new(LabelScript {
            unavailable: true,
            ..LabelScript::default()
        });
        assert_eq!(extract_emotion(&span(0, 16), &down, &d), None);
        assert_eq!(d.warnings().len(), 1);
    }

    #[test]
    fn transcribe_scripted_and_empty() {
        let mock = asr(&[(1, "gg well played")], false);
        let req = TranscriptionRequest::new(span(1, 16), vec![], None);
        assert_eq!(transcribe(&req, &*mock).unwrap(), "gg well played");
        let empty = TranscriptionRequest::new(span(1, 0), vec![], None);
        assert_eq!(transcribe(&empty, &*mock).unwrap(), "");
        assert_eq!(mock.calls().len(), 1);
    }

    #[test]
    fn keywords_reach_backend() {
        let mock = asr(&[(0, "the spire")], true);
        let req = TranscriptionRequest::new(span(0, 16), vec!["Spire".into(), "pylon".into()], Some("en".into()));
        assert_eq!(transcribe(&req, &*mock).unwrap(), "the spire [hints: Spire, pylon]");
        assert_eq!(mock.calls()[0].keywords, ["Spire", "pylon"]);
    }

    #[test]
    fn outage_is_fatal() {
        let mock = MockAsr::new(AsrScript {
            fail: vec![2],
            ..AsrScript::default()
        });
        let req = TranscriptionRequest::new(span(2, 16), vec![], None);
        assert!(matches!(
            transcribe(&req, &mock),
            Err(AudioError::TranscriptionFailed { chunk_index: 2, .. })
        ));
    }

    #[test]
    fn request_normalizes_keywords() {
        let long = "x".repeat(100);
        let mut kws: Vec<String> = vec![" a ".into(), "a".into(), "".into(), long];
        kws.extend((0..30).map(|i| format!("k{i}")));
        let req = TranscriptionRequest::new(span(0, 1), kws, None);
        assert_eq!(req.context_keywords.len(), MAX_KEYWORDS);
        assert_eq!(req.context_keywords[0], "a");
        assert_eq!(req.context_keywords[1].chars().count(), MAX_KEYWORD_CHARS);
    }

    #[test]
    fn cue_composition() {
        let mut b = AudioBackends::new(asr(&[(0, "hello")], false));
        b.tags = Some(Arc::new(tags(&[(0, &["music"])])));
        let cue = build_audio_cue(&chunk(0, 16), vec![], None, &b, &Diagnostics::new()).unwrap();
        assert_eq!(cue.transcript, "hello");
        assert_eq!(cue.events, ["music"]);
        assert!(!cue.silent);
        assert_eq!(b.stats.get("asr"), 1);
    }

    #[test]
    fn non_speech_chunk_is_silent() {
        let b = AudioBackends::new(asr(&[], false));
        let cue = build_audio_cue(&chunk(4, 16), vec![], None, &b, &Diagnostics::new()).unwrap();
        assert_eq!(cue, AudioCue::silent(4));
    }

    #[test]
    fn visual_terms_are_injected() {
        let mut memory = ShortTermMemory::new();
        for i in 0..4 {
            memory
                .append_visual_cue(VisualCue {
                    chunk_index: i,
                    description: "d".into(),
                    entities: if i == 1 { vec!["pylon".into()] } else { vec![] },
                    status: CueStatus::Described,
                })
                .unwrap();
        }
        for i in 0..3 {
            let t = if i == 2 { "the hatchery is up" } else { "" };
            let mut cue = AudioCue::silent(i);
            cue.transcript = t.into();
            memory.append_audio_cue(cue).unwrap();
        }
        let kb = KnowledgeBase::from_docs(vec![KnowledgeDoc {
            id: "z".into(),
            title: "z".into(),
            body: String::new(),
            terms: vec![Term::new("hatchery", "孵化场"), Term::new("Spire", "飞龙塔")],
        }])
        .unwrap();
        let kws = injection_keywords(&memory, &kb, 3);
        assert_eq!(kws, ["pylon", "hatchery"]);

        let mock = asr(&[(3, "x")], false);
        build_audio_cue(&chunk(3, 16), kws, None, &AudioBackends::new(mock.clone()), &Diagnostics::new()).unwrap();
        assert!(mock.calls()[0].keywords.contains(&"pylon".to_string()));
    }

    #[test]
    fn remote_contracts() {
        let server = testing::serve(|body| {
            let v: serde_json::Value = serde_json::from_str(body).unwrap();
            Some(if v["language_hint"] == "en" {
                r#"{"text":" hi "}"#.into()
            } else {
                r#"{"tags":["music"],"label":null}"#.into()
            })
        });
        let remote = RemoteAudio::new("asr", &server.url, RemoteSettings::default());
        let req = TranscriptionRequest::new(span(0, 16), vec!["Spire".into()], Some("en".into()));
        assert_eq!(transcribe(&req, &remote).unwrap(), "hi");
        assert_eq!(remote.tags(&span(0, 16)).unwrap(), ["music"]);
        assert_eq!(remote.emotion(&span(0, 16)).unwrap(), None);
        let sent: serde_json::Value = serde_json::from_str(&server.requests.lock().unwrap()[0]).unwrap();
        assert_eq!(sent["keywords"], serde_json::json!(["Spire"]));
        let wav = base64::engine::general_purpose::STANDARD
            .decode(sent["audio_b64"].as_str().unwrap())
            .unwrap();
        assert_eq!(&wav[..4], b"RIFF");
    }
}
