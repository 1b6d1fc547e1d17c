//! End-to-end run: chunking, per-chunk perception and drafting, the
//! document-wide review pass, and SRT output.
//!
//! Configuration is one TOML document:
//!
//! ```toml
//! kb_paths = ["kb"]
//! output_dir = "out"
//!
//! [job]
//! domain = "StarCraft II"
//! source_language = "en"
//! target_language = "zh"
//!
//! [features]
//! proofreader = true
//!
//! [backends]
//! segmenter = "energy"
//! asr = "mock:scripts/asr.json"
//! chat = "remote:http://localhost:8000/v1/chat"
//! vlm = "chat"
//! ```
//!
//! Relative paths (mock scripts, `kb_paths`, `output_dir`, `prompts_dir`,
//! `transcript_log`, `media.frames_dir`) resolve against the directory of
//! the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{
    AgentRuntime, ChatBackend, CompletionParams, PromptError, PromptSet, RemoteChat, ScriptedChat, Suggestion,
    TemplateId, TranscriptLog,
};
use crate::audio::{
    build_audio_cue, injection_keywords, AsrBackend, AudioBackends, AudioCue, AudioError, AudioTagBackend,
    EmotionBackend, MockAsr, MockAudioTags, MockEmotion, RemoteAudio,
};
use crate::backend::{BackendError, BackendSpec, RemoteSettings};
use crate::diag::{CallStats, Diagnostics, Warning};
use crate::media::{
    extract_chunks, sample_keyframes, segment, ChunkBoundary, CommandMediaTool, EnergyVad, ImageDirFrames,
    KeyframePolicy, MediaAsset, MediaError, MockSegmenter, PcmAudio, SegmentConfig, SegmenterBackend,
};
use crate::memory::{
    export_term_patch, DomainGuide, HistoryEntry, KnowledgeBase, LongTermMemory, MemoryError, MockWeb, RemoteWeb,
    ShortTermMemory, Term, WebSearchBackend, DEFAULT_MAX_WEB_DOCS,
};
use crate::srt::{render_srt, validate_timeline, SrtError, SubtitleEntry, SubtitleFile, ValidationReport};
use crate::team::{learned_terms, Features, JobConfig, Revision, Team, TeamError, TranslationRecord};
use crate::vision::{analyze_frames, ChatVlm, CueStatus, MockVlm, RemoteVlm, VisionContext, VisualCue, VlmBackend};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Team(#[from] TeamError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Srt(#[from] SrtError),
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("muxer failed: {0}")]
    Muxer(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

/// Backend selectors, each `none`, `mock:<script>`, `remote:<url>` or a
/// builtin name (`energy` for the segmenter, `chat` for the vlm).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendsConfig {
    pub segmenter: String,
    pub asr: String,
    pub chat: String,
    pub vlm: String,
    pub audio_tags: String,
    pub emotion: String,
    pub web: String,
}

impl Default for BackendsConfig {
    fn default() -> Self {
        Self {
            segmenter: "energy".into(),
            asr: "none".into(),
            chat: "none".into(),
            vlm: "none".into(),
            audio_tags: "none".into(),
            emotion: "none".into(),
            web: "none".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    #[serde(flatten)]
    pub settings: RemoteSettings,
    /// Model name sent to the chat endpoint.
    pub model: Option<String>,
    pub max_tokens: Option<u32>,
}

/// How non-WAV inputs are decoded. Commands are argument templates with
/// `{input}` and, for frames, `{seconds}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MediaConfig {
    pub audio_command: Option<Vec<String>>,
    pub frame_command: Option<Vec<String>>,
    pub frame_format: Option<String>,
    /// Pre-extracted frames named by millisecond timestamp.
    pub frames_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub job: JobConfig,
    pub segment: SegmentConfig,
    pub keyframes: KeyframePolicy,
    pub features: Features,
    pub backends: BackendsConfig,
    pub remote: RemoteConfig,
    pub media: MediaConfig,
    pub kb_paths: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub emit_video: bool,
    /// Argument template with `{video}`, `{srt}` and `{output}`.
    pub muxer_command: Vec<String>,
    pub prompts_dir: Option<PathBuf>,
    /// JSONL log of every chat call.
    pub transcript_log: Option<PathBuf>,
    pub max_web_docs: usize,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            job: JobConfig::default(),
            segment: SegmentConfig::default(),
            keyframes: KeyframePolicy::default(),
            features: Features::default(),
            backends: BackendsConfig::default(),
            remote: RemoteConfig::default(),
            media: MediaConfig::default(),
            kb_paths: Vec::new(),
            output_dir: PathBuf::from("out"),
            emit_video: false,
            muxer_command: Vec::new(),
            prompts_dir: None,
            transcript_log: None,
            max_web_docs: DEFAULT_MAX_WEB_DOCS,
            base_dir: PathBuf::from("."),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml_str(&text, &base).map_err(|e| match e {
            PipelineError::Config(m) => PipelineError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_relative() {
            self.base_dir.join(p)
        } else {
            p.to_path_buf()
        }
    }

    fn spec(&self, slot: &str, value: &str) -> Result<BackendSpec, PipelineError> {
        value
            .parse::<BackendSpec>()
            .map(|s| s.resolved(&self.base_dir))
            .map_err(|e| PipelineError::Config(format!("backends.{slot}: {e}")))
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.job.validate()?;
        self.segment.validate()?;
        if self.keyframes.max_frames == 0 || self.keyframes.candidates < self.keyframes.max_frames {
            return Err(PipelineError::Config(
                "keyframes: need 1 <= max_frames <= candidates".into(),
            ));
        }
        if self.emit_video && self.muxer_command.is_empty() {
            return Err(PipelineError::Config("emit_video requires muxer_command".into()));
        }
        let b = &self.backends;
        for (slot, v) in [
            ("segmenter", &b.segmenter),
            ("asr", &b.asr),
            ("chat", &b.chat),
            ("vlm", &b.vlm),
            ("audio_tags", &b.audio_tags),
            ("emotion", &b.emotion),
            ("web", &b.web),
        ] {
            self.spec(slot, v)?;
        }
        Ok(())
    }
}

/// Instantiated backends of a run.
#[derive(Clone)]
pub struct Backends {
    pub segmenter: Arc<dyn SegmenterBackend>,
    pub asr: Arc<dyn AsrBackend>,
    pub audio_tags: Option<Arc<dyn AudioTagBackend>>,
    pub emotion: Option<Arc<dyn EmotionBackend>>,
    pub chat: Arc<dyn ChatBackend>,
    /// `None` uses the chat backend for vision.
    pub vlm: Option<Arc<dyn VlmBackend>>,
    pub vision_via_chat: bool,
    pub web: Option<Arc<dyn WebSearchBackend>>,
}

fn builtin_err(slot: &str, name: &str) -> PipelineError {
    PipelineError::Config(format!("backends.{slot}: no builtin named {name:?}"))
}

impl Backends {
    pub fn from_config(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let b = &cfg.backends;
        let settings = cfg.remote.settings.clone();

        let segmenter: Arc<dyn SegmenterBackend> = match cfg.spec("segmenter", &b.segmenter)? {
            BackendSpec::Builtin(n) if n == "energy" => Arc::new(EnergyVad::new(cfg.segment.vad)),
            BackendSpec::None => Arc::new(EnergyVad::new(cfg.segment.vad)),
            BackendSpec::Mock(p) => Arc::new(MockSegmenter::from_script(&p)?),
            BackendSpec::Remote(_) => {
                return Err(PipelineError::Config("backends.segmenter: no remote segmenter contract".into()))
            }
            BackendSpec::Builtin(n) => return Err(builtin_err("segmenter", &n)),
        };
        let asr: Arc<dyn AsrBackend> = match cfg.spec("asr", &b.asr)? {
            BackendSpec::Mock(p) => Arc::new(MockAsr::from_script(&p)?),
            BackendSpec::Remote(u) => Arc::new(RemoteAudio::new("asr", &u, settings.clone())),
            BackendSpec::None => return Err(PipelineError::Config("backends.asr is required".into())),
            BackendSpec::Builtin(n) => return Err(builtin_err("asr", &n)),
        };
        let audio_tags: Option<Arc<dyn AudioTagBackend>> = match cfg.spec("audio_tags", &b.audio_tags)? {
            BackendSpec::None => None,
            BackendSpec::Mock(p) => Some(Arc::new(MockAudioTags::from_script(&p)?)),
            BackendSpec::Remote(u) => Some(Arc::new(RemoteAudio::new("audio_tags", &u, settings.clone()))),
            BackendSpec::Builtin(n) => return Err(builtin_err("audio_tags", &n)),
        };
        let emotion: Option<Arc<dyn EmotionBackend>> = match cfg.spec("emotion", &b.emotion)? {
            BackendSpec::None => None,
            BackendSpec::Mock(p) => Some(Arc::new(MockEmotion::from_script(&p)?)),
            BackendSpec::Remote(u) => Some(Arc::new(RemoteAudio::new("emotion", &u, settings.clone()))),
            BackendSpec::Builtin(n) => return Err(builtin_err("emotion", &n)),
        };
        let chat: Arc<dyn ChatBackend> = match cfg.spec("chat", &b.chat)? {
            BackendSpec::Mock(p) => Arc::new(ScriptedChat::from_script(&p)?),
            BackendSpec::Remote(u) => Arc::new(RemoteChat::new(
                &u,
                cfg.remote.model.clone().unwrap_or_default(),
                settings.clone(),
            )),
            BackendSpec::None => return Err(PipelineError::Config("backends.chat is required".into())),
            BackendSpec::Builtin(n) => return Err(builtin_err("chat", &n)),
        };
        let (vlm, vision_via_chat): (Option<Arc<dyn VlmBackend>>, bool) = match cfg.spec("vlm", &b.vlm)? {
            BackendSpec::None => (None, false),
            BackendSpec::Builtin(n) if n == "chat" => (None, true),
            BackendSpec::Mock(p) => (Some(Arc::new(MockVlm::from_script(&p)?)), false),
            BackendSpec::Remote(u) => (Some(Arc::new(RemoteVlm::new(&u, settings.clone()))), false),
            BackendSpec::Builtin(n) => return Err(builtin_err("vlm", &n)),
        };
        let web: Option<Arc<dyn WebSearchBackend>> = match cfg.spec("web", &b.web)? {
            BackendSpec::None => None,
            BackendSpec::Mock(p) => Some(Arc::new(MockWeb::from_script(&p)?)),
            BackendSpec::Remote(u) => Some(Arc::new(RemoteWeb::new(&u, settings))),
            BackendSpec::Builtin(n) => return Err(builtin_err("web", &n)),
        };
        Ok(Self {
            segmenter,
            asr,
            audio_tags,
            emotion,
            chat,
            vlm,
            vision_via_chat,
            web,
        })
    }
}

/// Opens an input file: WAV natively, anything else through the configured
/// (or default ffmpeg) commands. Frames come from `media.frames_dir` when
/// set, else from the frame command.
pub fn load_asset(input: &Path, cfg: &PipelineConfig) -> Result<MediaAsset, PipelineError> {
    if !input.exists() {
        return Err(io_err(input, "no such file"));
    }
    let is_wav = input
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
    let (asset, tool) = if is_wav && cfg.media.audio_command.is_none() {
        (MediaAsset::from_pcm(PcmAudio::from_wav_file(input)?)?, None)
    } else {
        let mut tool = match &cfg.media.audio_command {
            Some(cmd) => CommandMediaTool::new(input, cmd.clone()),
            None => CommandMediaTool::ffmpeg(input),
        };
        if let Some(cmd) = &cfg.media.frame_command {
            let fmt = cfg.media.frame_format.clone().unwrap_or_else(|| "png".into());
            tool = tool.with_frame_command(cmd.clone(), fmt);
        }
        (MediaAsset::from_pcm(tool.decode_all()?)?, Some(tool))
    };
    Ok(match (&cfg.media.frames_dir, tool) {
        (Some(dir), _) => asset.with_frames(Arc::new(ImageDirFrames::open(&cfg.resolve(dir))?)),
        (None, Some(tool)) if tool.has_frames() => asset.with_frames(Arc::new(tool)),
        _ => asset,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentReport {
    pub index: usize,
    pub chunk_index: usize,
    pub start_ms: u64,
    pub end_ms: u64,
    pub source: Vec<String>,
    pub draft: Vec<String>,
    pub suggestion: Suggestion,
    #[serde(rename = "final")]
    pub final_lines: Vec<String>,
    pub revision_log: Vec<Revision>,
    pub domain_guide: DomainGuide,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub chunks: Vec<ChunkBoundary>,
    pub segments: Vec<SegmentReport>,
    pub visual_cues: Vec<VisualCue>,
    pub audio_cues: Vec<AudioCue>,
    pub warnings: Vec<Warning>,
    pub backend_calls: BTreeMap<String, u64>,
    pub learned_terms: Vec<Term>,
    pub timeline: ValidationReport,
}

impl RunReport {
    pub fn calls(&self, label: &str) -> u64 {
        self.backend_calls.get(label).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub source_srt: SubtitleFile,
    pub target_srt: SubtitleFile,
    pub records: Vec<TranslationRecord>,
    pub report: RunReport,
    pub muxed_video_path: Option<PathBuf>,
}

/// Runs with backends built from `config`.
pub fn run(asset: &MediaAsset, config: &PipelineConfig) -> Result<RunResult, PipelineError> {
    let backends = Backends::from_config(config)?;
    run_with(asset, config, &backends)
}

/// Runs with caller-supplied backends. Short-term memory lives only for
/// the duration of the call.
pub fn run_with(asset: &MediaAsset, config: &PipelineConfig, backends: &Backends) -> Result<RunResult, PipelineError> {
    config.job.validate()?;
    let diag = Diagnostics::new();
    let stats = CallStats::new();

    let kb_paths: Vec<PathBuf> = config.kb_paths.iter().map(|p| config.resolve(p)).collect();
    let kb = KnowledgeBase::load(&kb_paths)?;
    let prompts = match &config.prompts_dir {
        Some(dir) => PromptSet::default().with_overrides(&config.resolve(dir))?,
        None => PromptSet::default(),
    };
    let params = CompletionParams {
        model: config.remote.model.clone(),
        max_tokens: config.remote.max_tokens,
        ..CompletionParams::default()
    };
    let mut runtime = AgentRuntime::new(backends.chat.clone())
        .with_params(params)
        .with_stats(stats.clone());
    if let Some(path) = &config.transcript_log {
        let path = config.resolve(path);
        let log = TranscriptLog::create(&path).map_err(|e| io_err(&path, e))?;
        runtime = runtime.with_transcript(Arc::new(log));
    }
    let mut long_term = LongTermMemory::new(kb)
        .with_max_web_docs(config.max_web_docs)
        .with_stats(stats.clone());
    if config.features.web {
        if let Some(web) = &backends.web {
            long_term = long_term.with_web(web.clone());
        }
    }
    let empty_kb = KnowledgeBase::default();
    let keyword_kb = if config.features.domain_memory {
        long_term.kb()
    } else {
        &empty_kb
    };

    // vision calls are counted here for every backend kind
    let chat_vlm;
    let vlm: Option<&dyn VlmBackend> = match (&backends.vlm, backends.vision_via_chat) {
        _ if !config.features.vision => None,
        (Some(v), _) => Some(&**v),
        (None, true) => {
            chat_vlm = ChatVlm::new(AgentRuntime::new(backends.chat.clone()));
            Some(&chat_vlm)
        }
        (None, false) => None,
    };
    let domain_terms = if config.features.domain_memory {
        long_term.kb().source_terms()
    } else {
        Vec::new()
    };
    let vision_ctx = VisionContext {
        domain: &config.job.domain,
        domain_terms: &domain_terms,
        prompt: prompts.get(TemplateId::VisionAnalysis),
        max_frames: config.keyframes.max_frames,
    };
    let audio = AudioBackends {
        asr: backends.asr.clone(),
        tags: backends.audio_tags.clone(),
        emotion: backends.emotion.clone(),
        stats: stats.clone(),
    };
    let team = Team {
        job: &config.job,
        features: &config.features,
        prompts: &prompts,
        runtime: &runtime,
        long_term: &long_term,
        diag: &diag,
    };

    let boundaries = segment(asset, &*backends.segmenter, &config.segment, &diag)?;
    let chunks = extract_chunks(asset, &boundaries, &config.keyframes, &diag);
    let mut memory = ShortTermMemory::new();
    let mut drafts = Vec::new();
    let language_hint = Some(config.job.source_language.clone());

    for chunk in &chunks {
        let i = chunk.index();
        let cue = match vlm {
            Some(backend) => {
                let frames = sample_keyframes(chunk, &config.keyframes);
                if !frames.is_empty() {
                    stats.record("vision");
                }
                analyze_frames(i, &frames, &memory, &vision_ctx, backend, &diag)
            }
            None => VisualCue::empty(i, CueStatus::Skipped),
        };
        memory.append_visual_cue(cue)?;

        let audio_cue = if chunk.decode_failed {
            AudioCue::silent(i)
        } else {
            let keywords = injection_keywords(&memory, keyword_kb, i);
            build_audio_cue(chunk, keywords, language_hint.clone(), &audio, &diag)?
        };
        let transcript = audio_cue.transcript.clone();
        let silent = audio_cue.silent;
        memory.append_audio_cue(audio_cue)?;
        if silent {
            continue;
        }

        let draft = team.translate_segment(drafts.len(), chunk.boundary, &transcript, &memory)?;
        memory.append_history(HistoryEntry::new(
            draft.index,
            draft.source_lines.join("\n"),
            draft.draft_lines.join("\n"),
        ))?;
        drafts.push(draft);
    }

    let records = team.post_process(drafts, &mut memory)?;

    let mut src_entries = Vec::with_capacity(records.len());
    let mut tgt_entries = Vec::with_capacity(records.len());
    for r in &records {
        let b = r.draft.boundary;
        src_entries.push(SubtitleEntry::new(0, b.start, b.end, &r.draft.source_lines)?);
        tgt_entries.push(SubtitleEntry::new(0, b.start, b.end, &r.final_lines)?);
    }
    let source_srt = SubtitleFile::new(src_entries);
    let target_srt = SubtitleFile::new(tgt_entries);
    let timeline = validate_timeline(&target_srt);
    if !timeline.is_clean() {
        diag.warn(format!(
            "timeline check: {} overlap(s), {} order violation(s)",
            timeline.overlaps.len(),
            timeline.order_violations.len()
        ));
    }

    let learned = learned_terms(&records, &long_term);
    let segments = records
        .iter()
        .map(|r| SegmentReport {
            index: r.draft.index,
            chunk_index: r.draft.chunk_index(),
            start_ms: r.draft.boundary.start.as_millis(),
            end_ms: r.draft.boundary.end.as_millis(),
            source: r.draft.source_lines.clone(),
            draft: r.draft.draft_lines.clone(),
            suggestion: r.suggestion.clone(),
            final_lines: r.final_lines.clone(),
            revision_log: r.revision_log.clone(),
            domain_guide: r.draft.domain_guide.clone(),
        })
        .collect();
    let report = RunReport {
        chunks: boundaries,
        segments,
        visual_cues: memory.visual_cues().to_vec(),
        audio_cues: memory.audio_cues().to_vec(),
        warnings: diag.warnings(),
        backend_calls: stats.snapshot(),
        learned_terms: learned,
        timeline,
    };
    Ok(RunResult {
        source_srt,
        target_srt,
        records,
        report,
        muxed_video_path: None,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub source_srt: PathBuf,
    pub target_srt: PathBuf,
    pub report: PathBuf,
    pub term_patch: Option<PathBuf>,
}

/// Writes `<stem>.src.srt`, `<stem>.<tgt>.srt`, `<stem>.report.json` and,
/// when the editor taught new terms, `<stem>.terms.md`.
pub fn write_outputs(result: &RunResult, dir: &Path, stem: &str, target_language: &str) -> Result<OutputPaths, PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let write = |name: String, body: &str| -> Result<PathBuf, PipelineError> {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| io_err(&p, e))?;
        Ok(p)
    };
    let source_srt = write(format!("{stem}.src.srt"), &render_srt(&result.source_srt))?;
    let target_srt = write(format!("{stem}.{target_language}.srt"), &render_srt(&result.target_srt))?;
    let json = serde_json::to_string_pretty(&result.report).map_err(|e| io_err(dir, e))?;
    let report = write(format!("{stem}.report.json"), &json)?;
    let term_patch = if result.report.learned_terms.is_empty() {
        None
    } else {
        let p = dir.join(format!("{stem}.terms.md"));
        export_term_patch(&p, &format!("{stem}-learned"), &result.report.learned_terms)?;
        Some(p)
    };
    Ok(OutputPaths {
        source_srt,
        target_srt,
        report,
        term_patch,
    })
}

/// Runs the external muxer; returns the output video path.
pub fn mux_video(command: &[String], video: &Path, srt: &Path, output: &Path) -> Result<PathBuf, PipelineError> {
    let sub = |a: &String| {
        a.replace("{video}", &video.to_string_lossy())
            .replace("{srt}", &srt.to_string_lossy())
            .replace("{output}", &output.to_string_lossy())
    };
    let args: Vec<String> = command.iter().map(sub).collect();
    let (program, rest) = args
        .split_first()
        .ok_or_else(|| PipelineError::Muxer("empty muxer command".into()))?;
    let out = Command::new(program)
        .args(rest)
        .output()
        .map_err(|e| PipelineError::Muxer(format!("{program}: {e}")))?;
    if !out.status.success() {
        return Err(PipelineError::Muxer(format!(
            "{program} exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(output.to_path_buf())
}

/// Loads `input`, runs, writes outputs to the configured directory and
/// muxes when `emit_video` is set.
pub fn run_file(input: &Path, config: &PipelineConfig) -> Result<(RunResult, OutputPaths), PipelineError> {
    let backends = Backends::from_config(config)?;
    let asset = load_asset(input, config)?;
    let mut result = run_with(&asset, config, &backends)?;
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "output".into());
    let dir = config.resolve(&config.output_dir);
    let paths = write_outputs(&result, &dir, &stem, &config.job.target_language)?;
    if config.emit_video {
        let ext = input.extension().map(|e| e.to_string_lossy().to_string()).unwrap_or_else(|| "mp4".into());
        let output = dir.join(format!("{stem}.subtitled.{ext}"));
        result.muxed_video_path = Some(mux_video(&config.muxer_command, input, &paths.target_srt, &output)?);
    }
    Ok((result, paths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{ChatRule, ScriptedChat};
    use crate::audio::AsrScript;
    use crate::media::SAMPLES_PER_MS;
    use crate::srt::Timestamp;

    fn bursts(spans: &[(u64, u64)], total_ms: u64) -> MediaAsset {
        let mut s = vec![0i16; total_ms as usize * SAMPLES_PER_MS];
        for &(a, b) in spans {
            for (k, v) in s[a as usize * SAMPLES_PER_MS..b as usize * SAMPLES_PER_MS].iter_mut().enumerate() {
                *v = if k % 2 == 0 { 4000 } else { -4000 };
            }
        }
        MediaAsset::from_pcm(PcmAudio::new(s)).unwrap()
    }

    fn backends(asr: AsrScript, chat: Vec<ChatRule>) -> Backends {
        Backends {
            segmenter: Arc::new(EnergyVad::new(Default::default())),
            asr: Arc::new(MockAsr::new(asr)),
            audio_tags: None,
            emotion: None,
            chat: Arc::new(ScriptedChat::from_rules(chat)),
            vlm: None,
            vision_via_chat: false,
            web: None,
        }
    }

    fn asr(texts: &[&str]) -> AsrScript {
        AsrScript {
            chunks: texts.iter().enumerate().map(|(i, t)| (i, t.to_string())).collect(),
            ..AsrScript::default()
        }
    }

    fn echo_rules() -> Vec<ChatRule> {
        vec![
            ChatRule {
                label: Some("translator".into()),
                echo: true,
                extract_after: Some("\n\n".into()),
                ..ChatRule::default()
            },
            ChatRule::reply("proofreader", "Segment 0: PASS\nSegment 1: PASS"),
            ChatRule {
                label: Some("editor".into()),
                extract_after: Some("Translated text:\n".into()),
                extract_before: Some("\n\nHere is a provided suggestion".into()),
                ..ChatRule::default()
            },
        ]
    }

    #[test]
    fn two_chunk_wiring() {
        let asset = bursts(&[(1_000, 3_000), (5_000, 8_000)], 10_000);
        let b = backends(asr(&["hello there", "good bye"]), vec![
            // the second prompt's history also mentions "hello there"
            ChatRule::reply("translator", "再见").when("good bye"),
            ChatRule::reply("translator", "你好").when("hello there"),
            ChatRule::reply("proofreader", "Segment 0: PASS\nSegment 1: PASS"),
            ChatRule::reply("editor", "你好").when("Translated text:\n你好"),
            ChatRule::reply("editor", "再见").when("Translated text:\n再见"),
        ]);
        let r = run_with(&asset, &PipelineConfig::default(), &b).unwrap();
        assert_eq!(r.source_srt.len(), 2);
        assert_eq!(r.target_srt.len(), 2);
        for (s, t) in r.source_srt.entries().iter().zip(r.target_srt.entries()) {
            assert_eq!((s.index(), s.start(), s.end()), (t.index(), t.start(), t.end()));
        }
        let chunks = &r.report.chunks;
        assert_eq!(r.source_srt.entries()[0].start(), chunks[0].start);
        assert_eq!(r.target_srt.entries()[1].lines(), ["再见"]);
        assert!(r.report.timeline.is_clean());
        assert!(r.muxed_video_path.is_none());
        assert_eq!(r.report.calls("translator"), 2);
        assert_eq!(r.report.calls("asr"), 2);
    }

    #[test]
    fn silent_chunks_produce_no_entries() {
        let asset = bursts(&[(1_000, 3_000), (5_000, 8_000)], 10_000);
        let b = backends(asr(&["", "good bye"]), vec![
            ChatRule::reply("translator", "再见"),
            ChatRule::reply("proofreader", "Segment 0: PASS"),
            ChatRule::reply("editor", "再见"),
        ]);
        let r = run_with(&asset, &PipelineConfig::default(), &b).unwrap();
        assert_eq!(r.target_srt.len(), 1);
        assert_eq!(r.records[0].draft.chunk_index(), 1);
        assert_eq!(r.report.audio_cues.len(), 2);
    }

    #[test]
    fn transcription_failure_aborts() {
        let asset = bursts(&[(1_000, 3_000)], 5_000);
        let b = backends(
            AsrScript {
                fail: vec![0],
                ..AsrScript::default()
            },
            echo_rules(),
        );
        let err = run_with(&asset, &PipelineConfig::default(), &b).unwrap_err();
        assert!(matches!(err, PipelineError::Audio(AudioError::TranscriptionFailed { chunk_index: 0, .. })));
    }

    #[test]
    fn config_parses_and_resolves() {
        let cfg = PipelineConfig::from_toml_str(
            r#"
            kb_paths = ["kb"]
            [job]
            domain = "StarCraft II"
            [features]
            proofreader = false
            [backends]
            asr = "mock:asr.json"
            chat = "remote:http://127.0.0.1:9/v1"
            [remote]
            timeout_ms = 50
            model = "m"
            "#,
            Path::new("/cfg"),
        )
        .unwrap();
        assert_eq!(cfg.job.domain, "StarCraft II");
        assert!(!cfg.features.proofreader);
        assert_eq!(cfg.remote.settings.timeout_ms, 50);
        assert_eq!(cfg.resolve(&cfg.kb_paths[0]), Path::new("/cfg/kb"));
        assert_eq!(cfg.spec("asr", &cfg.backends.asr).unwrap(), BackendSpec::Mock("/cfg/asr.json".into()));
    }

    #[test]
    fn config_rejects_unknown_and_invalid() {
        assert!(PipelineConfig::from_toml_str("bogus = 1", Path::new(".")).is_err());
        let cfg = PipelineConfig::from_toml_str("[backends]\nasr = \"weird:x\"", Path::new(".")).unwrap();
        assert!(matches!(cfg.validate(), Err(PipelineError::Config(_))));
        let cfg = PipelineConfig::from_toml_str("emit_video = true", Path::new(".")).unwrap();
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig::default();
        assert!(matches!(Backends::from_config(&cfg), Err(PipelineError::Config(m)) if m.contains("asr")));
    }

    #[test]
    fn muxer_substitutes_placeholders() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("v.out");
        let cmd: Vec<String> = ["sh", "-c", "cat {srt} > {output}"].iter().map(|s| s.to_string()).collect();
        let srt = dir.path().join("a.srt");
        std::fs::write(&srt, "x").unwrap();
        let p = mux_video(&cmd, Path::new("in.mp4"), &srt, &out).unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "x");
        let bad: Vec<String> = vec!["false".into()];
        assert!(mux_video(&bad, Path::new("v"), &srt, &out).is_err());
    }

    #[test]
    fn timestamps_are_chunk_boundaries() {
        let asset = bursts(&[(500, 2_500), (4_000, 4_900), (6_000, 9_000)], 9_500);
        let b = backends(asr(&["a", "b", "c"]), vec![
            ChatRule::reply("translator", "甲"),
            ChatRule::reply("proofreader", "PASS"),
            ChatRule::reply("editor", "甲"),
        ]);
        let r = run_with(&asset, &PipelineConfig::default(), &b).unwrap();
        let got: Vec<(Timestamp, Timestamp)> = r.target_srt.entries().iter().map(|e| (e.start(), e.end())).collect();
        let want: Vec<(Timestamp, Timestamp)> = r.report.chunks.iter().map(|c| (c.start, c.end)).collect();
        assert_eq!(got, want);
    }
}
