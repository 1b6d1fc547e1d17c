use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MediaAsset, MediaError, SAMPLES_PER_MS};
use crate::backend::{load_script, BackendError};
use crate::diag::Diagnostics;
use crate::srt::Timestamp;

/// A raw speech-activity span `[start, end)` as reported by a segmenter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Span {
    pub fn from_millis(start: u64, end: u64) -> Self {
        Self {
            start: Timestamp::from_millis(start),
            end: Timestamp::from_millis(end),
        }
    }

    pub fn len_ms(&self) -> u64 {
        self.end.saturating_sub(self.start)
    }
}

/// A normalized chunk span with its 0-based position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkBoundary {
    pub index: usize,
    pub start: Timestamp,
    pub end: Timestamp,
}

impl ChunkBoundary {
    pub fn duration_ms(&self) -> u64 {
        self.end.saturating_sub(self.start)
    }
}

/// How spans longer than the maximum chunk length are cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStrategy {
    /// Equal-length pieces.
    Even,
    /// Cuts at the quietest frame within the feasible window.
    EnergyMinimum,
}

/// Detects speech spans in 16 kHz mono PCM.
pub trait SegmenterBackend: Send + Sync {
    fn name(&self) -> &str;

    fn detect(&self, audio: &[i16]) -> Result<Vec<Span>, BackendError>;

    fn split_strategy(&self) -> SplitStrategy {
        SplitStrategy::Even
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyVadConfig {
    pub frame_ms: u64,
    /// Frame RMS (16-bit sample scale) at or above which a frame is speech.
    pub threshold_rms: f64,
    /// Speech state is held this long after energy drops.
    pub hangover_ms: u64,
}

impl Default for EnergyVadConfig {
    fn default() -> Self {
        Self {
            frame_ms: 30,
            threshold_rms: 500.0,
            hangover_ms: 300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub min_chunk_ms: u64,
    pub max_chunk_ms: u64,
    /// Adjacent spans closer than this are merged (when the result fits).
    pub merge_gap_ms: u64,
    pub vad: EnergyVadConfig,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            min_chunk_ms: 500,
            max_chunk_ms: 120_000,
            merge_gap_ms: 300,
            vad: EnergyVadConfig::default(),
        }
    }
}

impl SegmentConfig {
    pub fn validate(&self) -> Result<(), MediaError> {
        if self.max_chunk_ms == 0 {
            return Err(MediaError::InvalidConfig("max_chunk_ms must be positive".into()));
        }
        if self.min_chunk_ms.saturating_mul(2) > self.max_chunk_ms {
            return Err(MediaError::InvalidConfig(format!(
                "min_chunk_ms ({}) must be at most half of max_chunk_ms ({})",
                self.min_chunk_ms, self.max_chunk_ms
            )));
        }
        if self.vad.frame_ms == 0 {
            return Err(MediaError::InvalidConfig("vad.frame_ms must be positive".into()));
        }
        Ok(())
    }
}

/// Per-frame RMS over fixed-length frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProfile {
    pub frame_ms: u64,
    pub rms: Vec<f64>,
}

impl EnergyProfile {
    pub fn compute(audio: &[i16], frame_ms: u64) -> Self {
        let frame_len = (frame_ms as usize * SAMPLES_PER_MS).max(1);
        let rms = audio
            .chunks(frame_len)
            .map(|frame| {
                let sum: f64 = frame.iter().map(|&s| (s as f64) * (s as f64)).sum();
                (sum / frame.len() as f64).sqrt()
            })
            .collect();
        Self { frame_ms, rms }
    }

    fn frame_at(&self, ms: u64) -> Option<f64> {
        self.rms.get((ms / self.frame_ms) as usize).copied()
    }
}

/// Deterministic energy-threshold voice activity detector with hangover
/// smoothing.
#[derive(Debug, Clone, Default)]
pub struct EnergyVad {
    config: EnergyVadConfig,
}

impl EnergyVad {
    pub fn new(config: EnergyVadConfig) -> Self {
        Self { config }
    }
}

impl SegmenterBackend for EnergyVad {
    fn name(&self) -> &str {
        "energy"
    }

    fn detect(&self, audio: &[i16]) -> Result<Vec<Span>, BackendError> {
        let frame_ms = self.config.frame_ms.max(1);
        let profile = EnergyProfile::compute(audio, frame_ms);
        let total_ms = audio.len().div_ceil(SAMPLES_PER_MS) as u64;
        let hang_frames = self.config.hangover_ms.div_ceil(frame_ms) as usize;

        let mut spans = Vec::new();
        let mut open: Option<usize> = None;
        let mut last_loud = 0usize;
        for (f, &rms) in profile.rms.iter().enumerate() {
            let loud = rms >= self.config.threshold_rms;
            if loud {
                last_loud = f;
                open.get_or_insert(f);
            } else if let Some(s) = open {
                if f > last_loud + hang_frames {
                    spans.push((s, f));
                    open = None;
                }
            }
        }
        if let Some(s) = open {
            spans.push((s, profile.rms.len()));
        }
        Ok(spans
            .into_iter()
            .map(|(s, e)| Span::from_millis(s as u64 * frame_ms, (e as u64 * frame_ms).min(total_ms)))
            .filter(|s| s.len_ms() > 0)
            .collect())
    }

    fn split_strategy(&self) -> SplitStrategy {
        SplitStrategy::EnergyMinimum
    }
}

/// Returns scripted spans regardless of the audio.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockSegmenter {
    /// `[start_ms, end_ms]` pairs.
    #[serde(default)]
    pub spans: Vec<(u64, u64)>,
    /// Simulates an unreachable backend.
    #[serde(default)]
    pub unavailable: bool,
}

impl MockSegmenter {
    pub fn new(spans: Vec<(u64, u64)>) -> Self {
        Self {
            spans,
            unavailable: false,
        }
    }

    pub fn unavailable() -> Self {
        Self {
            spans: Vec::new(),
            unavailable: true,
        }
    }

    pub fn from_script(path: &Path) -> Result<Self, BackendError> {
        load_script("segmenter", path)
    }
}

impl SegmenterBackend for MockSegmenter {
    fn name(&self) -> &str {
        "mock"
    }

    fn detect(&self, _audio: &[i16]) -> Result<Vec<Span>, BackendError> {
        if self.unavailable {
            return Err(BackendError::unavailable("segmenter", "scripted outage"));
        }
        Ok(self
            .spans
            .iter()
            .map(|&(s, e)| Span::from_millis(s, e))
            .collect())
    }
}

fn split_even(span: Span, max_ms: u64) -> Vec<Span> {
    let len = span.len_ms();
    let k = len.div_ceil(max_ms).max(1);
    let s = span.start.as_millis();
    (0..k)
        .map(|j| {
            let a = s + (j * len + k / 2) / k;
            let b = s + ((j + 1) * len + k / 2) / k;
            Span::from_millis(a, b)
        })
        .collect()
}

/// Cuts into `ceil(len / max)` pieces, each longer than `max / 2` and at
/// most `max`, placing every cut at the quietest frame that keeps the
/// remainder feasible.
fn split_energy(span: Span, max_ms: u64, profile: &EnergyProfile) -> Vec<Span> {
    let len = span.len_ms();
    let k = len.div_ceil(max_ms).max(1);
    let lo = max_ms / 2 + 1;
    if k < 2 || k * lo > len {
        return split_even(span, max_ms);
    }
    let (start, end) = (span.start.as_millis(), span.end.as_millis());
    let half = profile.frame_ms / 2;
    let mut cuts = vec![start];
    for j in 1..k {
        let prev = *cuts.last().unwrap();
        let remaining = k - j;
        let low = (prev + lo).max(end.saturating_sub(remaining * max_ms));
        let high = (prev + max_ms).min(end - remaining * lo);
        let mut best: Option<(f64, u64)> = None;
        let first_frame = low.saturating_sub(half) / profile.frame_ms;
        let mut f = first_frame;
        loop {
            let mid = f * profile.frame_ms + half;
            if mid > high {
                break;
            }
            if mid >= low {
                if let Some(rms) = profile.frame_at(mid) {
                    if best.is_none_or(|(b, _)| rms < b) {
                        best = Some((rms, mid));
                    }
                }
            }
            f += 1;
        }
        let cut = match best {
            Some((_, mid)) => mid,
            None => (start + j * len / k).clamp(low, high),
        };
        cuts.push(cut);
    }
    cuts.push(end);
    cuts.windows(2)
        .map(|w| Span::from_millis(w[0], w[1]))
        .collect()
}

/// Turns raw speech spans into chunk spans.
///
/// 1. Clip to `[0, duration)`, sort, and coalesce overlapping spans.
/// 2. Split spans longer than `max_chunk_ms`.
/// 3. Greedily merge neighbours closer than `merge_gap_ms` while the merged
///    span stays within `max_chunk_ms`.
/// 4. Drop spans shorter than `min_chunk_ms`.
/// 5. If nothing is left, use the whole asset (split if needed).
///
/// The result is sorted and disjoint, and normalizing it again returns it
/// unchanged.
pub fn normalize_spans(
    spans: &[Span],
    duration: Timestamp,
    config: &SegmentConfig,
    profile: Option<&EnergyProfile>,
) -> Vec<Span> {
    let split = |s: Span| match profile {
        Some(p) => split_energy(s, config.max_chunk_ms, p),
        None => split_even(s, config.max_chunk_ms),
    };

    let mut clipped: Vec<Span> = spans
        .iter()
        .map(|s| Span {
            start: s.start.min(duration),
            end: s.end.min(duration),
        })
        .filter(|s| s.start < s.end)
        .collect();
    clipped.sort();
    let mut coalesced: Vec<Span> = Vec::with_capacity(clipped.len());
    for s in clipped {
        match coalesced.last_mut() {
            Some(last) if s.start < last.end => last.end = last.end.max(s.end),
            _ => coalesced.push(s),
        }
    }

    let pieces: Vec<Span> = coalesced
        .into_iter()
        .flat_map(|s| {
            if s.len_ms() > config.max_chunk_ms {
                split(s)
            } else {
                vec![s]
            }
        })
        .collect();

    let mut merged: Vec<Span> = Vec::with_capacity(pieces.len());
    for s in pieces {
        match merged.last_mut() {
            Some(last)
                if s.start.saturating_sub(last.end) < config.merge_gap_ms
                    && s.end.saturating_sub(last.start) <= config.max_chunk_ms =>
            {
                last.end = s.end
            }
            _ => merged.push(s),
        }
    }

    merged.retain(|s| s.len_ms() >= config.min_chunk_ms);
    if merged.is_empty() {
        return split(Span {
            start: Timestamp::ZERO,
            end: duration,
        });
    }
    merged
}

/// Decomposes an asset into chunk boundaries.
///
/// An unavailable backend falls back to [`EnergyVad`] with a warning; audio
/// with no samples yields the whole asset as one chunk.
pub fn segment(
    asset: &MediaAsset,
    segmenter: &dyn SegmenterBackend,
    config: &SegmentConfig,
    diag: &Diagnostics,
) -> Result<Vec<ChunkBoundary>, MediaError> {
    config.validate()?;
    let duration = asset.duration();
    let audio = asset.audio().decode(Timestamp::ZERO, duration)?;

    if audio.is_empty() {
        diag.warn("audio decoded to zero samples; using the whole asset as one chunk");
        return Ok(to_boundaries(normalize_spans(&[], duration, config, None)));
    }
    let (spans, profile) = match segmenter.detect(&audio) {
        Ok(spans) => {
            let profile = (segmenter.split_strategy() == SplitStrategy::EnergyMinimum)
                .then(|| EnergyProfile::compute(&audio, config.vad.frame_ms));
            (spans, profile)
        }
        Err(e) => {
            diag.warn(format!(
                "segmenter {} failed ({e}); falling back to energy VAD",
                segmenter.name()
            ));
            let spans = EnergyVad::new(config.vad).detect(&audio).unwrap_or_default();
            (spans, Some(EnergyProfile::compute(&audio, config.vad.frame_ms)))
        }
    };
    Ok(to_boundaries(normalize_spans(&spans, duration, config, profile.as_ref())))
}

fn to_boundaries(spans: Vec<Span>) -> Vec<ChunkBoundary> {
    spans
        .into_iter()
        .enumerate()
        .map(|(index, s)| ChunkBoundary {
            index,
            start: s.start,
            end: s.end,
        })
        .collect()
}
