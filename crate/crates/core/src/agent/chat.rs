use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backend::{load_script, BackendError, JsonHttpClient, RemoteSettings};
use crate::diag::CallStats;
use crate::media::EncodedImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<EncodedImage>,
}

impl ChatMessage {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            images: Vec::new(),
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }

    /// Content must be non-empty unless images are attached.
    pub fn is_valid(&self) -> bool {
        !self.content.trim().is_empty() || !self.images.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub temperature: f32,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            model: None,
            temperature: 0.0,
            max_tokens: None,
        }
    }
}

/// One completion call. `label` names the calling agent
/// (`translator`, `proofreader`, ...) and is never sent to remote backends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub label: String,
    pub messages: Vec<ChatMessage>,
    pub params: CompletionParams,
}

impl ChatRequest {
    /// Hex SHA-256 over the messages and parameters (label excluded).
    pub fn fingerprint(&self) -> String {
        let body = serde_json::to_vec(&(&self.messages, &self.params)).expect("serializable request");
        hex::encode(Sha256::digest(&body))
    }

    pub fn last_user_content(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

/// A chat-completion model. Implementations must tolerate concurrent calls.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

/// Sends `messages` and returns the trimmed assistant text.
pub fn complete(
    backend: &dyn ChatBackend,
    label: &str,
    messages: Vec<ChatMessage>,
    params: &CompletionParams,
) -> Result<String, BackendError> {
    if messages.is_empty() || messages.iter().any(|m| !m.is_valid()) {
        return Err(BackendError::unavailable(
            backend.name(),
            "request contains an empty message",
        ));
    }
    let request = ChatRequest {
        label: label.to_string(),
        messages,
        params: params.clone(),
    };
    let text = backend.complete(&request)?;
    let text = text.trim();
    if text.is_empty() {
        return Err(BackendError::ResponseEmpty {
            backend: backend.name().to_string(),
        });
    }
    Ok(text.to_string())
}

/// JSONL record of every chat call: label, request fingerprint, outcome.
#[derive(Debug)]
pub struct TranscriptLog {
    file: Mutex<File>,
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    label: &'a str,
    fingerprint: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

impl TranscriptLog {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            file: Mutex::new(File::create(path)?),
        })
    }

    fn record(&self, request: &ChatRequest, outcome: &Result<String, BackendError>) {
        let line = TranscriptLine {
            label: &request.label,
            fingerprint: request.fingerprint(),
            response: outcome.as_ref().ok().map(String::as_str),
            error: outcome.as_ref().err().map(ToString::to_string),
        };
        let mut file = self.file.lock().expect("transcript lock poisoned");
        if let Ok(json) = serde_json::to_string(&line) {
            let _ = writeln!(file, "{json}");
        }
    }
}

/// The chat backend as seen by the agents: counts calls per label and
/// optionally writes a transcript.
#[derive(Clone)]
pub struct AgentRuntime {
    chat: Arc<dyn ChatBackend>,
    params: CompletionParams,
    stats: CallStats,
    transcript: Option<Arc<TranscriptLog>>,
}

impl AgentRuntime {
    pub fn new(chat: Arc<dyn ChatBackend>) -> Self {
        Self {
            chat,
            params: CompletionParams::default(),
            stats: CallStats::new(),
            transcript: None,
        }
    }

    pub fn with_params(mut self, params: CompletionParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_stats(mut self, stats: CallStats) -> Self {
        self.stats = stats;
        self
    }

    pub fn with_transcript(mut self, log: Arc<TranscriptLog>) -> Self {
        self.transcript = Some(log);
        self
    }

    pub fn stats(&self) -> &CallStats {
        &self.stats
    }

    pub fn complete(&self, label: &str, messages: Vec<ChatMessage>) -> Result<String, BackendError> {
        self.stats.record(label);
        let request_for_log = self.transcript.as_ref().map(|_| ChatRequest {
            label: label.to_string(),
            messages: messages.clone(),
            params: self.params.clone(),
        });
        let outcome = complete(&*self.chat, label, messages, &self.params);
        if let (Some(log), Some(req)) = (&self.transcript, &request_for_log) {
            log.record(req, &outcome);
        }
        outcome
    }
}

/// One reply rule in a chat script. A rule matches when its `label` (if
/// set) equals the request label and its `contains` (if set) occurs in the
/// last user message.
///
/// The reply is, in priority order: `fail` (simulated outage), `echo` (the
/// last user message), `extract_after`/`extract_before` (the text between
/// two markers of the last user message), `responses` (consumed in order,
/// the last one repeating), or `respond`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatRule {
    pub label: Option<String>,
    pub contains: Option<String>,
    pub respond: Option<String>,
    pub responses: Vec<String>,
    pub extract_after: Option<String>,
    pub extract_before: Option<String>,
    pub echo: bool,
    pub fail: bool,
}

impl ChatRule {
    pub fn reply(label: &str, text: impl Into<String>) -> Self {
        Self {
            label: Some(label.to_string()),
            respond: Some(text.into()),
            ..Self::default()
        }
    }

    pub fn when(mut self, contains: impl Into<String>) -> Self {
        self.contains = Some(contains.into());
        self
    }

    fn matches(&self, request: &ChatRequest) -> bool {
        self.label.as_ref().is_none_or(|l| *l == request.label)
            && self
                .contains
                .as_ref()
                .is_none_or(|c| request.last_user_content().contains(c.as_str()))
    }
}

/// JSON chat script. Lookup order: exact request fingerprint, then the
/// first matching rule, then the next unused `sequence` entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatScript {
    pub by_fingerprint: BTreeMap<String, String>,
    pub rules: Vec<ChatRule>,
    pub sequence: Vec<String>,
}

#[derive(Debug, Default)]
struct Cursors {
    rules: Vec<usize>,
    sequence: usize,
}

/// Deterministic scripted chat backend with a request log.
#[derive(Debug)]
pub struct ScriptedChat {
    script: ChatScript,
    cursors: Mutex<Cursors>,
    log: Mutex<Vec<ChatRequest>>,
}

impl ScriptedChat {
    pub fn new(script: ChatScript) -> Self {
        let rules = vec![0; script.rules.len()];
        Self {
            script,
            cursors: Mutex::new(Cursors { rules, sequence: 0 }),
            log: Mutex::new(Vec::new()),
        }
    }

    /// Replies with `responses` in call order.
    pub fn sequence<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(ChatScript {
            sequence: responses.into_iter().map(Into::into).collect(),
            ..ChatScript::default()
        })
    }

    pub fn from_rules(rules: Vec<ChatRule>) -> Self {
        Self::new(ChatScript {
            rules,
            ..ChatScript::default()
        })
    }

    pub fn from_script(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::new(load_script("chat", path)?))
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("mock log poisoned").clone()
    }

    fn extract(content: &str, after: &str, before: Option<&str>) -> Option<String> {
        let (_, rest) = content.split_once(after)?;
        let body = match before {
            Some(b) => rest.split_once(b).map(|(x, _)| x).unwrap_or(rest),
            None => rest,
        };
        Some(body.trim().to_string())
    }
}

impl ChatBackend for ScriptedChat {
    fn name(&self) -> &str {
        "mock-chat"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.log.lock().expect("mock log poisoned").push(request.clone());
        let mut cursors = self.cursors.lock().expect("mock cursor poisoned");

        if let Some(reply) = self.script.by_fingerprint.get(&request.fingerprint()) {
            return Ok(reply.clone());
        }
        if let Some((i, rule)) = self
            .script
            .rules
            .iter()
            .enumerate()
            .find(|(_, r)| r.matches(request))
        {
            let content = request.last_user_content();
            if rule.fail {
                return Err(BackendError::unavailable("chat", "scripted outage"));
            }
            if rule.echo {
                return Ok(content.to_string());
            }
            if let Some(after) = &rule.extract_after {
                return Self::extract(content, after, rule.extract_before.as_deref()).ok_or_else(|| {
                    BackendError::unavailable("chat", format!("marker {after:?} not found in request"))
                });
            }
            if !rule.responses.is_empty() {
                let n = cursors.rules[i];
                cursors.rules[i] += 1;
                return Ok(rule.responses[n.min(rule.responses.len() - 1)].clone());
            }
            return Ok(rule.respond.clone().unwrap_or_default());
        }
        let n = cursors.sequence;
        match self.script.sequence.get(n) {
            Some(reply) => {
                cursors.sequence += 1;
                Ok(reply.clone())
            }
            None => Err(BackendError::unavailable(
                "chat",
                format!("mock script has no reply for {} call", request.label),
            )),
        }
    }
}

type ChatFn = dyn Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync;

/// Chat backend driven by a closure; for tests and embedding.
pub struct FnChat {
    handler: Box<ChatFn>,
    log: Mutex<Vec<ChatRequest>>,
}

impl FnChat {
    pub fn new<F>(handler: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    {
        Self {
            handler: Box::new(handler),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.log.lock().expect("mock log poisoned").clone()
    }
}

impl ChatBackend for FnChat {
    fn name(&self) -> &str {
        "fn-chat"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.log.lock().expect("mock log poisoned").push(request.clone());
        (self.handler)(request)
    }
}

#[derive(Serialize)]
struct RemoteChatRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_tokens: Option<u32>,
}

#[derive(Deserialize)]
struct RemoteChatResponse {
    text: String,
}

/// `POST {model, messages, temperature, max_tokens}` → `{text}`.
#[derive(Debug, Clone)]
pub struct RemoteChat {
    client: JsonHttpClient,
    model: String,
}

impl RemoteChat {
    pub fn new(endpoint: &str, model: impl Into<String>, settings: RemoteSettings) -> Self {
        Self {
            client: JsonHttpClient::new("chat", endpoint, settings),
            model: model.into(),
        }
    }
}

impl ChatBackend for RemoteChat {
    fn name(&self) -> &str {
        "remote-chat"
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let body = RemoteChatRequest {
            model: request.params.model.as_deref().unwrap_or(&self.model),
            messages: &request.messages,
            temperature: request.params.temperature,
            max_tokens: request.params.max_tokens,
        };
        let resp: RemoteChatResponse = self.client.post(&body)?;
        Ok(resp.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::testing;

    fn ask(backend: &dyn ChatBackend, label: &str, text: &str) -> Result<String, BackendError> {
        complete(backend, label, vec![ChatMessage::user(text)], &CompletionParams::default())
    }

    #[test]
    fn sequence_replies_in_order() {
        let mock = ScriptedChat::sequence(["你好", "再见"]);
        assert_eq!(ask(&mock, "translator", "hello").unwrap(), "你好");
        assert_eq!(ask(&mock, "translator", "bye").unwrap(), "再见");
        assert!(matches!(ask(&mock, "translator", "again"), Err(BackendError::Unavailable { .. })));
    }

    #[test]
    fn identical_runs_produce_identical_transcripts() {
        let run = || {
            let mock = ScriptedChat::new(ChatScript {
                rules: vec![ChatRule::reply("editor", "E").when("Segment index: 2")],
                sequence: vec!["a".into(), "b".into()],
                ..ChatScript::default()
            });
            let out: Vec<_> = ["x", "Segment index: 2", "y"]
                .iter()
                .map(|t| ask(&mock, "editor", t).unwrap())
                .collect();
            (out, mock.requests())
        };
        assert_eq!(run(), run());
        assert_eq!(run().0, ["a", "E", "b"]);
    }

    #[test]
    fn empty_reply_is_response_empty() {
        let mock = ScriptedChat::sequence(["   "]);
        assert!(matches!(ask(&mock, "t", "hi"), Err(BackendError::ResponseEmpty { .. })));
    }

    #[test]
    fn empty_message_rejected_before_sending() {
        let mock = ScriptedChat::sequence(["x"]);
        assert!(ask(&mock, "t", "  ").is_err());
        assert!(mock.requests().is_empty());
    }

    #[test]
    fn rules_echo_extract_and_fail() {
        let mock = ScriptedChat::from_rules(vec![
            ChatRule {
                label: Some("editor".into()),
                extract_after: Some("Translated text:\n".into()),
                extract_before: Some("\n\n".into()),
                ..ChatRule::default()
            },
            ChatRule {
                label: Some("proofreader".into()),
                fail: true,
                ..ChatRule::default()
            },
            ChatRule {
                echo: true,
                ..ChatRule::default()
            },
        ]);
        assert_eq!(
            ask(&mock, "editor", "Source:\nhi\n\nTranslated text:\n你好\n世界\n\nmore").unwrap(),
            "你好\n世界"
        );
        assert!(ask(&mock, "proofreader", "x").is_err());
        assert_eq!(ask(&mock, "translator", "echo me").unwrap(), "echo me");
    }

    #[test]
    fn responses_list_repeats_last() {
        let rule = ChatRule {
            responses: vec!["1".into(), "2".into()],
            ..ChatRule::default()
        };
        let mock = ScriptedChat::from_rules(vec![rule]);
        let got: Vec<_> = (0..3).map(|_| ask(&mock, "t", "q").unwrap()).collect();
        assert_eq!(got, ["1", "2", "2"]);
    }

    #[test]
    fn fingerprint_lookup_wins() {
        let req = ChatRequest {
            label: "translator".into(),
            messages: vec![ChatMessage::user("hello")],
            params: CompletionParams::default(),
        };
        let mut script = ChatScript {
            sequence: vec!["seq".into()],
            ..ChatScript::default()
        };
        script.by_fingerprint.insert(req.fingerprint(), "fp".into());
        let mock = ScriptedChat::new(script);
        assert_eq!(ask(&mock, "other-label", "hello").unwrap(), "fp");
        assert_eq!(ask(&mock, "translator", "different").unwrap(), "seq");
    }

    #[test]
    fn script_loads_from_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chat.json");
        std::fs::write(
            &path,
            r#"{"rules":[{"label":"translator","contains":"gg","respond":"打得好"}],"sequence":["fallback"]}"#,
        )
        .unwrap();
        let mock = ScriptedChat::from_script(&path).unwrap();
        assert_eq!(ask(&mock, "translator", "gg well played").unwrap(), "打得好");
        assert_eq!(ask(&mock, "translator", "other").unwrap(), "fallback");
    }

    #[test]
    fn runtime_counts_and_logs_calls() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("calls.jsonl");
        let log = Arc::new(TranscriptLog::create(&path).unwrap());
        let rt = AgentRuntime::new(Arc::new(ScriptedChat::sequence(["a"]))).with_transcript(log);
        rt.complete("translator", vec![ChatMessage::user("x")]).unwrap();
        assert!(rt.complete("editor", vec![ChatMessage::user("y")]).is_err());
        assert_eq!(rt.stats().get("translator"), 1);
        assert_eq!(rt.stats().get("editor"), 1);
        let lines: Vec<serde_json::Value> = std::fs::read_to_string(&path)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0]["response"], "a");
        assert_eq!(lines[0]["fingerprint"].as_str().unwrap().len(), 64);
        assert!(lines[1]["error"].is_string());
    }

    #[test]
    fn remote_contract() {
        let server = testing::serve(|_| Some(r#"{"text":"你好"}"#.into()));
        let chat = RemoteChat::new(&server.url, "gpt-test", RemoteSettings::default());
        let params = CompletionParams {
            max_tokens: Some(64),
            ..CompletionParams::default()
        };
        let out = complete(&chat, "translator", vec![ChatMessage::system("s"), ChatMessage::user("hi")], &params)
            .unwrap();
        assert_eq!(out, "你好");
        let sent: serde_json::Value = serde_json::from_str(&server.requests.lock().unwrap()[0]).unwrap();
        assert_eq!(
            sent,
            serde_json::json!({
                "model": "gpt-test",
                "messages": [{"role": "system", "content": "s"}, {"role": "user", "content": "hi"}],
                "temperature": 0.0,
                "max_tokens": 64
            })
        );
    }

    #[test]
    fn remote_timeouts_exhaust_retries() {
        let server = testing::serve(|_| None);
        let settings = RemoteSettings {
            timeout_ms: 100,
            retries: 1,
            retry_backoff_ms: 0,
            api_key_env: None,
        };
        let chat = RemoteChat::new(&server.url, "m", settings);
        assert!(matches!(ask(&chat, "translator", "hi"), Err(BackendError::Unavailable { .. })));
        assert_eq!(server.requests.lock().unwrap().len(), 2);
    }
}
