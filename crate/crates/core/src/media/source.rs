use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;

use once_cell::sync::Lazy;
use regex::Regex;

use super::{AudioDecoder, EncodedImage, FrameGrabber, MediaError, SAMPLES_PER_MS, SAMPLE_RATE};
use crate::srt::Timestamp;

/// Decoded 16 kHz mono PCM held in memory.
#[derive(Debug, Clone)]
pub struct PcmAudio {
    samples: Arc<[i16]>,
}

impl PcmAudio {
    pub fn new(samples: Vec<i16>) -> Self {
        Self {
            samples: samples.into(),
        }
    }

    pub fn samples(&self) -> &[i16] {
        &self.samples
    }

    /// Duration rounded up to whole milliseconds.
    pub fn duration(&self) -> Timestamp {
        Timestamp::from_millis(self.samples.len().div_ceil(SAMPLES_PER_MS) as u64)
    }

    /// Reads a WAV file, downmixing to mono and resampling to 16 kHz.
    pub fn from_wav_file(path: &Path) -> Result<Self, MediaError> {
        let reader = hound::WavReader::open(path)
            .map_err(|e| MediaError::Decode(format!("{}: {e}", path.display())))?;
        Self::from_wav_reader(reader)
    }

    pub fn from_wav_bytes(bytes: &[u8]) -> Result<Self, MediaError> {
        let reader = hound::WavReader::new(std::io::Cursor::new(bytes))
            .map_err(|e| MediaError::Decode(e.to_string()))?;
        Self::from_wav_reader(reader)
    }

    fn from_wav_reader<R: std::io::Read>(reader: hound::WavReader<R>) -> Result<Self, MediaError> {
        let spec = reader.spec();
        let channels = spec.channels.max(1) as usize;
        let decode_err = |e: hound::Error| MediaError::Decode(e.to_string());
        let interleaved: Vec<f32> = match spec.sample_format {
            hound::SampleFormat::Float => reader
                .into_samples::<f32>()
                .collect::<Result<_, _>>()
                .map_err(decode_err)?,
            hound::SampleFormat::Int => {
                let scale = (1i64 << (spec.bits_per_sample - 1)) as f32;
                reader
                    .into_samples::<i32>()
                    .map(|s| s.map(|v| v as f32 / scale))
                    .collect::<Result<_, _>>()
                    .map_err(decode_err)?
            }
        };
        let mono: Vec<f32> = interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f32>() / frame.len() as f32)
            .collect();
        let resampled = resample_linear(&mono, spec.sample_rate, SAMPLE_RATE);
        Ok(Self::new(
            resampled
                .into_iter()
                .map(|v| (v.clamp(-1.0, 1.0) * i16::MAX as f32).round() as i16)
                .collect(),
        ))
    }

    /// Encodes samples as a 16 kHz mono 16-bit WAV file.
    pub fn wav_bytes(samples: &[i16]) -> Vec<u8> {
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: SAMPLE_RATE,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut cursor = std::io::Cursor::new(Vec::new());
        {
            let mut writer = hound::WavWriter::new(&mut cursor, spec).expect("in-memory wav writer");
            for &s in samples {
                writer.write_sample(s).expect("in-memory wav write");
            }
            writer.finalize().expect("in-memory wav finalize");
        }
        cursor.into_inner()
    }
}

fn resample_linear(input: &[f32], from: u32, to: u32) -> Vec<f32> {
    if from == to || input.is_empty() {
        return input.to_vec();
    }
    let out_len = (input.len() as u64 * to as u64 / from as u64) as usize;
    let step = from as f64 / to as f64;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let j = pos.floor() as usize;
            let frac = (pos - j as f64) as f32;
            let a = input[j.min(input.len() - 1)];
            let b = input[(j + 1).min(input.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

impl AudioDecoder for PcmAudio {
    /// Slices `[start, end)`; ranges past the end of the data are clipped.
    fn decode(&self, start: Timestamp, end: Timestamp) -> Result<Vec<i16>, MediaError> {
        let n = self.samples.len();
        let a = (start.as_millis() as usize * SAMPLES_PER_MS).min(n);
        let b = (end.as_millis() as usize * SAMPLES_PER_MS).min(n).max(a);
        Ok(self.samples[a..b].to_vec())
    }
}

/// Decoder and frame grabber that shell out to an external media tool.
///
/// Commands are argument templates. `{input}` is replaced by the media path
/// and, for frames, `{seconds}` by the frame time in decimal seconds. The
/// audio command must write raw 16 kHz mono s16le PCM to stdout; the frame
/// command must write one encoded image to stdout.
#[derive(Debug, Clone)]
pub struct CommandMediaTool {
    input: PathBuf,
    audio_command: Vec<String>,
    frame_command: Option<Vec<String>>,
    frame_format: String,
}

impl CommandMediaTool {
    pub fn new(input: impl Into<PathBuf>, audio_command: Vec<String>) -> Self {
        Self {
            input: input.into(),
            audio_command,
            frame_command: None,
            frame_format: "png".into(),
        }
    }

    /// ffmpeg invocations matching the PCM and PNG contracts.
    pub fn ffmpeg(input: impl Into<PathBuf>) -> Self {
        let args = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
        Self::new(
            input,
            args("ffmpeg -nostdin -v error -i {input} -f s16le -ac 1 -ar 16000 -"),
        )
        .with_frame_command(
            args("ffmpeg -nostdin -v error -ss {seconds} -i {input} -frames:v 1 -f image2pipe -c:v png -"),
            "png",
        )
    }

    pub fn with_frame_command(mut self, command: Vec<String>, format: impl Into<String>) -> Self {
        self.frame_command = Some(command);
        self.frame_format = format.into();
        self
    }

    fn run(&self, template: &[String], seconds: Option<f64>) -> Result<Vec<u8>, String> {
        let input = self.input.to_string_lossy();
        let secs = seconds.map(|s| format!("{s:.3}")).unwrap_or_default();
        let args: Vec<String> = template
            .iter()
            .map(|a| a.replace("{input}", &input).replace("{seconds}", &secs))
            .collect();
        let (program, rest) = args.split_first().ok_or("empty command template")?;
        let output = Command::new(program)
            .args(rest)
            .output()
            .map_err(|e| format!("{program}: {e}"))?;
        if !output.status.success() {
            return Err(format!(
                "{program} exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            ));
        }
        Ok(output.stdout)
    }

    /// Runs the audio command once and keeps the PCM in memory.
    pub fn decode_all(&self) -> Result<PcmAudio, MediaError> {
        let bytes = self.run(&self.audio_command, None).map_err(MediaError::Decode)?;
        Ok(PcmAudio::new(
            bytes
                .chunks_exact(2)
                .map(|b| i16::from_le_bytes([b[0], b[1]]))
                .collect(),
        ))
    }

    pub fn has_frames(&self) -> bool {
        self.frame_command.is_some()
    }
}

impl FrameGrabber for CommandMediaTool {
    fn grab(&self, at: Timestamp) -> Result<EncodedImage, MediaError> {
        let template = self.frame_command.as_ref().ok_or_else(|| MediaError::Frame {
            at,
            reason: "no frame command configured".into(),
        })?;
        let bytes = self
            .run(template, Some(at.as_secs_f64()))
            .map_err(|reason| MediaError::Frame { at, reason })?;
        if bytes.is_empty() {
            return Err(MediaError::Frame {
                at,
                reason: "tool produced no image".into(),
            });
        }
        Ok(EncodedImage::new(self.frame_format.clone(), bytes))
    }
}

static FRAME_NAME_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)(\d+)\.(png|jpe?g|webp)$").unwrap());

/// Pre-extracted still frames in a directory, named with their time in
/// milliseconds as the last number before the extension
/// (`frame_000012500.png`). A grab returns the latest frame at or before
/// the requested time, or the first frame if none precedes it.
#[derive(Debug, Clone)]
pub struct ImageDirFrames {
    frames: Vec<(Timestamp, PathBuf, String)>,
}

impl ImageDirFrames {
    pub fn open(dir: &Path) -> Result<Self, MediaError> {
        let read = std::fs::read_dir(dir)
            .map_err(|e| MediaError::InvalidAsset(format!("{}: {e}", dir.display())))?;
        let mut frames = Vec::new();
        for entry in read.flatten() {
            let path = entry.path();
            let name = path.file_name().map(|n| n.to_string_lossy().to_string()).unwrap_or_default();
            if let Some(caps) = FRAME_NAME_RE.captures(&name) {
                let ms: u64 = caps[1].parse().unwrap_or(0);
                let format = match caps[2].to_ascii_lowercase().as_str() {
                    "jpg" | "jpeg" => "jpeg".to_string(),
                    other => other.to_string(),
                };
                frames.push((Timestamp::from_millis(ms), path, format));
            }
        }
        if frames.is_empty() {
            return Err(MediaError::InvalidAsset(format!(
                "{}: no timestamped frame images",
                dir.display()
            )));
        }
        frames.sort();
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

impl FrameGrabber for ImageDirFrames {
    fn grab(&self, at: Timestamp) -> Result<EncodedImage, MediaError> {
        let pos = self.frames.partition_point(|(t, _, _)| *t <= at);
        let (_, path, format) = &self.frames[pos.saturating_sub(1)];
        let bytes = std::fs::read(path).map_err(|e| MediaError::Frame {
            at,
            reason: format!("{}: {e}", path.display()),
        })?;
        Ok(EncodedImage::new(format.clone(), bytes))
    }
}
