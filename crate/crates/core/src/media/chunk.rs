use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ChunkBoundary, FrameRef, MediaAsset, PcmAudio};
use crate::diag::Diagnostics;
use crate::srt::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyframePolicy {
    /// Keyframes handed to the vision backend per chunk.
    pub max_frames: usize,
    /// Candidate frames grabbed per chunk, evenly spaced.
    pub candidates: usize,
}

impl Default for KeyframePolicy {
    fn default() -> Self {
        // 11 candidates put a grid point exactly on the 3 default keyframe
        // positions (quarters of the chunk).
        Self {
            max_frames: 3,
            candidates: 11,
        }
    }
}

/// The audio of one chunk: 16 kHz mono PCM sliced at the boundary times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioSpan {
    pub chunk_index: usize,
    pub start: Timestamp,
    pub end: Timestamp,
    pub samples: Arc<[i16]>,
}

impl AudioSpan {
    pub fn duration_ms(&self) -> u64 {
        self.end.saturating_sub(self.start)
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_wav(&self) -> Vec<u8> {
        PcmAudio::wav_bytes(&self.samples)
    }
}

/// One speaker-activity chunk with its audio and candidate frames.
#[derive(Debug, Clone)]
pub struct Chunk {
    pub boundary: ChunkBoundary,
    pub audio: AudioSpan,
    pub frames: Vec<FrameRef>,
    /// The audio span could not be decoded; media is empty.
    pub decode_failed: bool,
}

impl Chunk {
    pub fn index(&self) -> usize {
        self.boundary.index
    }
}

/// `(i + 1) * len / (n + 1)` for `i in 0..n`: `n` points strictly inside
/// `[0, len)`, evenly spaced.
fn even_offsets(len: u64, n: usize) -> impl Iterator<Item = u64> {
    let n = n as u64;
    (0..n).map(move |i| (i + 1) * len / (n + 1))
}

/// Slices every boundary out of the asset. Chunks are decoded in parallel
/// and returned in boundary order; a failed decode keeps the chunk with
/// empty media and `decode_failed` set.
pub fn extract_chunks(
    asset: &MediaAsset,
    boundaries: &[ChunkBoundary],
    policy: &KeyframePolicy,
    diag: &Diagnostics,
) -> Vec<Chunk> {
    boundaries
        .par_iter()
        .map(|&b| {
            let empty_audio = || AudioSpan {
                chunk_index: b.index,
                start: b.start,
                end: b.end,
                samples: Arc::from(Vec::new()),
            };
            let samples = match asset.audio().decode(b.start, b.end) {
                Ok(s) => s,
                Err(e) => {
                    diag.warn(format!("chunk {}: decode failure: {e}", b.index));
                    return Chunk {
                        boundary: b,
                        audio: empty_audio(),
                        frames: Vec::new(),
                        decode_failed: true,
                    };
                }
            };
            let frames = match asset.frames() {
                None => Vec::new(),
                Some(grabber) => even_offsets(b.duration_ms(), policy.candidates)
                    .map(|off| b.start.offset(off))
                    .filter_map(|at| match grabber.grab(at) {
                        Ok(image) => Some(FrameRef {
                            timestamp: at,
                            image,
                        }),
                        Err(e) => {
                            diag.warn(format!("chunk {}: {e}", b.index));
                            None
                        }
                    })
                    .collect(),
            };
            Chunk {
                boundary: b,
                audio: AudioSpan {
                    samples: samples.into(),
                    ..empty_audio()
                },
                frames,
                decode_failed: false,
            }
        })
        .collect()
}

/// Picks up to `max_frames` frames nearest to evenly spaced positions
/// `(i + 1) * d / (n + 1)` within the chunk.
pub fn sample_keyframes(chunk: &Chunk, policy: &KeyframePolicy) -> Vec<FrameRef> {
    if chunk.frames.is_empty() {
        return Vec::new();
    }
    let start = chunk.boundary.start;
    let mut picked: Vec<usize> = Vec::new();
    for off in even_offsets(chunk.boundary.duration_ms(), policy.max_frames) {
        let target = start.as_millis() + off;
        let nearest = chunk
            .frames
            .iter()
            .enumerate()
            .min_by_key(|(_, f)| f.timestamp.as_millis().abs_diff(target))
            .map(|(i, _)| i)
            .expect("frames non-empty");
        if !picked.contains(&nearest) {
            picked.push(nearest);
        }
    }
    picked.into_iter().map(|i| chunk.frames[i].clone()).collect()
}
