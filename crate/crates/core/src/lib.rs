//! Long-form video subtitling pipeline.
//!
//! Media is cut into speaker-activity chunks, each chunk is described by a
//! vision backend and transcribed by a speech backend (with keyword
//! injection from visual memory), and a translator agent drafts a
//! translation per chunk. Once the whole document is drafted, a proofreader
//! and an editor agent refine it using short-term memory (history, cues) and
//! long-term memory (domain knowledge base, web search). Results are written
//! as SRT files.
//!
//! Every model is reached through a backend trait with a scripted mock and a
//! JSON-over-HTTP client, so the full pipeline is deterministic under mocks.

pub mod agent;
pub mod audio;
pub mod backend;
pub mod diag;
pub mod eval;
pub mod media;
pub mod memory;
pub mod pipeline;
pub mod srt;
pub mod team;
pub mod text;
pub mod vision;

pub use diag::Diagnostics;
pub use srt::{SubtitleEntry, SubtitleFile, Timestamp};
