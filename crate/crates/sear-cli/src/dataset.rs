//! Session and corpus file formats.
//!
//! A session file is NDJSON with a tagged header line first, then cue
//! events, audio frame references, and transcript tokens in any interleaved
//! order. PCM audio lives in external little-endian f32 blobs referenced by
//! path, keeping the NDJSON human-diffable. Loaders attach line numbers to
//! every violation and return the valid remainder.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sear_core::context::{AudioFrame, TranscriptToken};
use sear_core::model::{CueEvent, SocialCorpusDoc, Validate};

/// One rejected line with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Errors from dataset loading and writing.
#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot access {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("{} invalid line(s):\n{}", .0.len(), format_lines(.0))]
    Lines(Vec<LineError>),
    #[error("audio blob {path} is too short for sampleOffset {offset} + {frame_size} samples")]
    BlobTooShort { path: PathBuf, offset: u64, frame_size: usize },
}

fn format_lines(errors: &[LineError]) -> String {
    errors.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n")
}

fn read_to_string(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}

// ---------------------------------------------------------------------------
// Session format
// ---------------------------------------------------------------------------

/// Sample rates the session format accepts.
pub const VALID_SAMPLE_RATES: [u32; 3] = [8000, 16_000, 48_000];

/// Session header: identity, audio geometry, participants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionHeader {
    pub session_id: String,
    pub sample_rate_hz: u32,
    pub frame_size: usize,
    pub participants: Vec<String>,
}

/// Reference to one frame inside an external PCM blob (little-endian f32).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AudioFrameRef {
    pub path: String,
    pub sample_offset: u64,
    pub start_ms: i64,
}

/// One tagged line of a session file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionRecord {
    Header(SessionHeader),
    CueEvent(CueEvent),
    AudioFrameRef(AudioFrameRef),
    TranscriptToken(TranscriptToken),
}

/// A parsed session: header, validated body records, and per-line rejects.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedSession {
    pub header: SessionHeader,
    pub events: Vec<CueEvent>,
    pub frame_refs: Vec<AudioFrameRef>,
    pub tokens: Vec<TranscriptToken>,
    pub line_errors: Vec<LineError>,
}

/// Parse a session file. The header must be the first line; body violations
/// are collected per line (with the valid remainder kept), and a malformed
/// header is a hard error.
pub fn load_session(path: &Path) -> Result<LoadedSession, DatasetError> {
    let file = std::fs::File::open(path)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    let mut lines = BufReader::new(file).lines().enumerate();

    let header = loop {
        let Some((index, line)) = lines.next() else {
            return Err(DatasetError::Header("file is empty".to_string()));
        };
        let line = line.map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SessionRecord>(&line) {
            Ok(SessionRecord::Header(header)) => {
                if !VALID_SAMPLE_RATES.contains(&header.sample_rate_hz) {
                    return Err(DatasetError::Header(format!(
                        "sampleRateHz {} not in {:?}",
                        header.sample_rate_hz, VALID_SAMPLE_RATES
                    )));
                }
                if header.frame_size == 0 {
                    return Err(DatasetError::Header("frameSize must be > 0".to_string()));
                }
                break header;
            }
            Ok(_) => {
                return Err(DatasetError::Header(format!(
                    "line {}: first record must be the header",
                    index + 1
                )))
            }
            Err(e) => return Err(DatasetError::Header(format!("line {}: {e}", index + 1))),
        }
    };

    let mut session = LoadedSession {
        header,
        events: Vec::new(),
        frame_refs: Vec::new(),
        tokens: Vec::new(),
        line_errors: Vec::new(),
    };
    // Per-track monotonicity; the ambient (trackless) stream is its own key.
    let mut last_per_track: BTreeMap<Option<String>, i64> = BTreeMap::new();
    let mut last_frame_ms: Option<i64> = None;
    let mut last_token_end: Option<i64> = None;

    for (index, line) in lines {
        let line_no = index + 1;
        let line = line.map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = match serde_json::from_str::<SessionRecord>(&line) {
            Ok(record) => record,
            Err(e) => {
                session.line_errors.push(LineError { line: line_no, message: e.to_string() });
                continue;
            }
        };
        match record {
            SessionRecord::Header(_) => {
                session
                    .line_errors
                    .push(LineError { line: line_no, message: "duplicate header".to_string() });
            }
            SessionRecord::CueEvent(event) => {
                let report = event.validate();
                if !report.is_valid() {
                    for violation in report.violations {
                        session.line_errors.push(LineError {
                            line: line_no,
                            message: format!("{}: {}", violation.path, violation.message),
                        });
                    }
                    continue;
                }
                let key = event.track_id.clone();
                if let Some(last) = last_per_track.get(&key) {
                    if event.timestamp_ms < *last {
                        session.line_errors.push(LineError {
                            line: line_no,
                            message: format!(
                                "timestamp {} decreases for track {:?}",
                                event.timestamp_ms, key
                            ),
                        });
                        continue;
                    }
                }
                last_per_track.insert(key, event.timestamp_ms);
                session.events.push(event);
            }
            SessionRecord::AudioFrameRef(frame_ref) => {
                if let Some(last) = last_frame_ms {
                    if frame_ref.start_ms < last {
                        session.line_errors.push(LineError {
                            line: line_no,
                            message: format!("frame startMs {} decreases", frame_ref.start_ms),
                        });
                        continue;
                    }
                }
                last_frame_ms = Some(frame_ref.start_ms);
                session.frame_refs.push(frame_ref);
            }
            SessionRecord::TranscriptToken(token) => {
                if token.end_ms <= token.start_ms {
                    session.line_errors.push(LineError {
                        line: line_no,
                        message: "token endMs must exceed startMs".to_string(),
                    });
                    continue;
                }
                if let Some(last_end) = last_token_end {
                    if token.start_ms < last_end {
                        session.line_errors.push(LineError {
                            line: line_no,
                            message: "tokens must be time-ordered and non-overlapping".to_string(),
                        });
                        continue;
                    }
                }
                last_token_end = Some(token.end_ms);
                session.tokens.push(token);
            }
        }
    }
    Ok(session)
}

/// Write a session back to disk in canonical order: header, cue events,
/// frame refs, tokens. Byte-deterministic for identical input.
pub fn write_session(path: &Path, session: &LoadedSession) -> Result<(), DatasetError> {
    let mut out = Vec::new();
    let mut push = |record: &SessionRecord| {
        out.extend_from_slice(serde_json::to_string(record).expect("serializable").as_bytes());
        out.push(b'\n');
    };
    push(&SessionRecord::Header(session.header.clone()));
    for event in &session.events {
        push(&SessionRecord::CueEvent(event.clone()));
    }
    for frame_ref in &session.frame_refs {
        push(&SessionRecord::AudioFrameRef(frame_ref.clone()));
    }
    for token in &session.tokens {
        push(&SessionRecord::TranscriptToken(token.clone()));
    }
    std::fs::write(path, out).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}

/// Materialize the session's audio frames from their PCM blobs, resolved
/// relative to `base_dir`.
pub fn load_audio_frames(
    session: &LoadedSession,
    base_dir: &Path,
) -> Result<Vec<AudioFrame>, DatasetError> {
    let mut blobs: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut frames = Vec::new();
    for frame_ref in &session.frame_refs {
        if !blobs.contains_key(frame_ref.path.as_str()) {
            let blob_path = base_dir.join(&frame_ref.path);
            blobs.insert(frame_ref.path.as_str(), read_pcm_blob(&blob_path)?);
        }
        let samples = &blobs[frame_ref.path.as_str()];
        let offset = frame_ref.sample_offset as usize;
        let frame_size = session.header.frame_size;
        if offset + frame_size > samples.len() {
            return Err(DatasetError::BlobTooShort {
                path: base_dir.join(&frame_ref.path),
                offset: frame_ref.sample_offset,
                frame_size,
            });
        }
        frames.push(AudioFrame::new(
            samples[offset..offset + frame_size].to_vec(),
            session.header.sample_rate_hz,
            frame_ref.start_ms,
        ));
    }
    Ok(frames)
}

/// Read a little-endian f32 PCM blob.
pub fn read_pcm_blob(path: &Path) -> Result<Vec<f64>, DatasetError> {
    let bytes = std::fs::read(path)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    Ok(bytes
        .chunks_exact(4)
        .map(|chunk| f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]) as f64)
        .collect())
}

/// Write samples as a little-endian f32 PCM blob.
pub fn write_pcm_blob(path: &Path, samples: &[f64]) -> Result<(), DatasetError> {
    let mut bytes = Vec::with_capacity(samples.len() * 4);
    for sample in samples {
        bytes.extend_from_slice(&(*sample as f32).to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}

// ---------------------------------------------------------------------------
// Corpus format
// ---------------------------------------------------------------------------

/// Load a social corpus (one [`SocialCorpusDoc`] per NDJSON line). Corpus
/// loading is strict: any invalid line fails the load with a line-numbered
/// report.
pub fn load_corpus(path: &Path) -> Result<Vec<SocialCorpusDoc>, DatasetError> {
    let text = read_to_string(path)?;
    let mut docs = Vec::new();
    let mut errors = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SocialCorpusDoc>(line) {
            Ok(doc) => {
                let report = doc.validate();
                if report.is_valid() {
                    docs.push(doc);
                } else {
                    for violation in report.violations {
                        errors.push(LineError {
                            line: index + 1,
                            message: format!("{}: {}", violation.path, violation.message),
                        });
                    }
                }
            }
            Err(e) => errors.push(LineError { line: index + 1, message: e.to_string() }),
        }
    }
    if errors.is_empty() {
        Ok(docs)
    } else {
        Err(DatasetError::Lines(errors))
    }
}

/// Write NDJSON lines of any serializable records.
pub fn write_ndjson<T: Serialize>(path: &Path, records: &[T]) -> Result<(), DatasetError> {
    let file = std::fs::File::create(path)
        .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    let mut writer = std::io::BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut writer, record)
            .map_err(|e| DatasetError::Header(format!("serialization failed: {e}")))?;
        writer
            .write_all(b"\n")
            .map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    }
    writer.flush().map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })
}
