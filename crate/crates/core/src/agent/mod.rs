//! Chat-completion backends, prompt templates, and the proofreader reply
//! protocol.

mod chat;
mod prompt;
mod proofread;

pub use chat::{
    complete, AgentRuntime, ChatBackend, ChatMessage, ChatRequest, ChatRule, ChatScript,
    CompletionParams, FnChat, RemoteChat, Role, ScriptedChat, TranscriptLog,
};
pub use prompt::{
    render_prompt, PromptError, PromptSet, PromptTemplate, SlotMap, TemplateId,
};
pub use proofread::{parse_proofreader_output, ProofreadParse, Suggestion, SuggestionKind};
