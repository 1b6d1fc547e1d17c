//! Media access and speaker-activity chunking.
//!
//! Audio is always handled as 16 kHz mono signed 16-bit PCM. Decoding and
//! frame extraction sit behind [`AudioDecoder`] and [`FrameGrabber`]; WAV
//! files are read natively, anything else goes through an external tool
//! configured as a command template ([`CommandMediaTool`]).

mod chunk;
mod segment;
mod source;

pub use chunk::{extract_chunks, sample_keyframes, AudioSpan, Chunk, KeyframePolicy};
pub use segment::{
    normalize_spans, segment, ChunkBoundary, EnergyProfile, EnergyVad, EnergyVadConfig, MockSegmenter,
    SegmentConfig, SegmenterBackend, Span, SplitStrategy,
};
pub use source::{CommandMediaTool, ImageDirFrames, PcmAudio};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::srt::Timestamp;

pub const SAMPLE_RATE: u32 = 16_000;
pub const SAMPLES_PER_MS: usize = (SAMPLE_RATE / 1000) as usize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MediaError {
    #[error("audio decode failed: {0}")]
    Decode(String),
    #[error("frame extraction failed at {at}: {reason}")]
    Frame { at: Timestamp, reason: String },
    #[error("invalid media asset: {0}")]
    InvalidAsset(String),
    #[error("invalid segmentation config: {0}")]
    InvalidConfig(String),
}

/// Produces 16 kHz mono PCM for a time range.
pub trait AudioDecoder: Send + Sync {
    fn decode(&self, start: Timestamp, end: Timestamp) -> Result<Vec<i16>, MediaError>;
}

/// Produces one encoded still image for a media time.
pub trait FrameGrabber: Send + Sync {
    fn grab(&self, at: Timestamp) -> Result<EncodedImage, MediaError>;
}

/// Opaque image bytes plus a format tag such as `png` or `jpeg`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedImage {
    pub format: String,
    #[serde(with = "b64")]
    pub bytes: Vec<u8>,
}

impl EncodedImage {
    pub fn new(format: impl Into<String>, bytes: Vec<u8>) -> Self {
        Self {
            format: format.into(),
            bytes,
        }
    }

    /// Format implied by the leading magic bytes, if recognised.
    pub fn sniff_format(bytes: &[u8]) -> Option<&'static str> {
        if bytes.starts_with(b"\x89PNG\r\n\x1a\n") {
            Some("png")
        } else if bytes.starts_with(&[0xFF, 0xD8, 0xFF]) {
            Some("jpeg")
        } else if bytes.len() >= 12 && &bytes[0..4] == b"RIFF" && &bytes[8..12] == b"WEBP" {
            Some("webp")
        } else {
            None
        }
    }
}

mod b64 {
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&base64::engine::general_purpose::STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        base64::engine::general_purpose::STANDARD
            .decode(s)
            .map_err(serde::de::Error::custom)
    }
}

/// A frame taken at `timestamp`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrameRef {
    pub timestamp: Timestamp,
    pub image: EncodedImage,
}

/// Input media: audio always, video frames optionally.
#[derive(Clone)]
pub struct MediaAsset {
    audio: Arc<dyn AudioDecoder>,
    frames: Option<Arc<dyn FrameGrabber>>,
    duration: Timestamp,
}

impl std::fmt::Debug for MediaAsset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MediaAsset")
            .field("duration", &self.duration)
            .field("has_frames", &self.frames.is_some())
            .finish()
    }
}

impl MediaAsset {
    pub fn new(
        audio: Arc<dyn AudioDecoder>,
        frames: Option<Arc<dyn FrameGrabber>>,
        duration: Timestamp,
    ) -> Result<Self, MediaError> {
        if duration == Timestamp::ZERO {
            return Err(MediaError::InvalidAsset("duration must be positive".into()));
        }
        Ok(Self {
            audio,
            frames,
            duration,
        })
    }

    /// Audio-only asset backed by in-memory PCM.
    pub fn from_pcm(pcm: PcmAudio) -> Result<Self, MediaError> {
        let duration = pcm.duration();
        Self::new(Arc::new(pcm), None, duration)
    }

    pub fn with_frames(mut self, frames: Arc<dyn FrameGrabber>) -> Self {
        self.frames = Some(frames);
        self
    }

    pub fn audio(&self) -> &dyn AudioDecoder {
        &*self.audio
    }

    pub fn frames(&self) -> Option<&dyn FrameGrabber> {
        self.frames.as_deref()
    }

    pub fn duration(&self) -> Timestamp {
        self.duration
    }
}
