use serde::Serialize;

use super::MemoryError;
use crate::audio::AudioCue;
use crate::text::dedup_preserving_order;
use crate::vision::VisualCue;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HistoryEntry {
    pub segment_index: usize,
    pub source: String,
    pub target: String,
}

impl HistoryEntry {
    pub fn new(segment_index: usize, source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            segment_index,
            source: source.into(),
            target: target.into(),
        }
    }
}

/// Gap-free, append-only list of translations indexed by segment.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct History {
    entries: Vec<HistoryEntry>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    fn append(&mut self, store: &'static str, entry: HistoryEntry) -> Result<(), MemoryError> {
        if entry.segment_index != self.entries.len() {
            return Err(MemoryError::IndexGap {
                store,
                expected: self.entries.len(),
                got: entry.segment_index,
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> Option<&HistoryEntry> {
        self.entries.get(index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries `index - n ..= index - 1` that exist.
    pub fn window(&self, index: usize, n: usize) -> &[HistoryEntry] {
        let hi = index.min(self.entries.len());
        let lo = index.saturating_sub(n).min(hi);
        &self.entries[lo..hi]
    }

    /// Entries `index + 1 ..= index + n` that exist.
    pub fn following(&self, index: usize, n: usize) -> &[HistoryEntry] {
        let lo = index.saturating_add(1).min(self.entries.len());
        let hi = index.saturating_add(n).saturating_add(1).min(self.entries.len());
        &self.entries[lo..hi]
    }

    pub fn bidirectional(&self, index: usize, n: usize) -> (&[HistoryEntry], &[HistoryEntry]) {
        (self.window(index, n), self.following(index, n))
    }
}

/// Per-run working memory. Drafts and finals are kept apart so the editor
/// can see finals before a segment and drafts after it.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ShortTermMemory {
    history: History,
    finals: History,
    visual_cues: Vec<VisualCue>,
    audio_cues: Vec<AudioCue>,
}

impl ShortTermMemory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.history.is_empty() && self.finals.is_empty() && self.visual_cues.is_empty() && self.audio_cues.is_empty()
    }

    pub fn append_history(&mut self, entry: HistoryEntry) -> Result<(), MemoryError> {
        self.history.append("history", entry)
    }

    pub fn append_final(&mut self, entry: HistoryEntry) -> Result<(), MemoryError> {
        self.finals.append("finals", entry)
    }

    pub fn append_visual_cue(&mut self, cue: VisualCue) -> Result<(), MemoryError> {
        if cue.chunk_index != self.visual_cues.len() {
            return Err(MemoryError::IndexGap {
                store: "visual cues",
                expected: self.visual_cues.len(),
                got: cue.chunk_index,
            });
        }
        self.visual_cues.push(cue);
        Ok(())
    }

    pub fn append_audio_cue(&mut self, cue: AudioCue) -> Result<(), MemoryError> {
        if cue.chunk_index != self.audio_cues.len() {
            return Err(MemoryError::IndexGap {
                store: "audio cues",
                expected: self.audio_cues.len(),
                got: cue.chunk_index,
            });
        }
        self.audio_cues.push(cue);
        Ok(())
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn finals(&self) -> &History {
        &self.finals
    }

    pub fn visual_cues(&self) -> &[VisualCue] {
        &self.visual_cues
    }

    pub fn audio_cues(&self) -> &[AudioCue] {
        &self.audio_cues
    }

    pub fn visual_cue(&self, chunk: usize) -> Option<&VisualCue> {
        self.visual_cues.get(chunk)
    }

    pub fn audio_cue(&self, chunk: usize) -> Option<&AudioCue> {
        self.audio_cues.get(chunk)
    }

    pub fn retrieve_history_window(&self, index: usize, n: usize) -> &[HistoryEntry] {
        self.history.window(index, n)
    }

    pub fn retrieve_bidirectional_window(&self, index: usize, n: usize) -> (&[HistoryEntry], &[HistoryEntry]) {
        self.history.bidirectional(index, n)
    }

    /// Finals before `index` and drafts after it.
    pub fn editor_window(&self, index: usize, n: usize) -> (&[HistoryEntry], &[HistoryEntry]) {
        (self.finals.window(index, n), self.history.following(index, n))
    }

    /// Entities of visual cues for chunks `0..=chunk`, most recent chunk
    /// first, deduplicated.
    pub fn visual_keywords(&self, chunk: usize) -> Vec<String> {
        let upto = chunk.saturating_add(1).min(self.visual_cues.len());
        dedup_preserving_order(
            self.visual_cues[..upto]
                .iter()
                .rev()
                .flat_map(|c| c.entities.iter().cloned()),
        )
    }

    /// Most recent non-empty visual descriptions before `chunk`, oldest first.
    pub fn prior_visual_descriptions(&self, chunk: usize, n: usize) -> Vec<&VisualCue> {
        let upto = chunk.min(self.visual_cues.len());
        let mut picked: Vec<&VisualCue> = self.visual_cues[..upto]
            .iter()
            .rev()
            .filter(|c| !c.description.is_empty())
            .take(n)
            .collect();
        picked.reverse();
        picked
    }
}
