//! Stage 1: social-context synthesis from annotated cue streams and audio.
//!
//! The speaker rule exploits the bone-conduction asymmetry of a head-worn
//! device: the wearer's own voice carries disproportionate energy below
//! 1 kHz, so a frame is attributed to the wearer when the 0–1000 Hz band
//! holds at least `ratioThreshold` of total spectral energy.
//!
//! Frame analysis uses a periodic Hann window and a radix-2 FFT at the
//! default N=1024 / 16 kHz configuration, where the 1000 Hz band edge falls
//! exactly on bin 64. Everything here is a pure function over immutable
//! inputs; callers may parallelize across windows freely.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::{
    CueEvent, CueModality, EmotionEstimate, EnvironmentSummary, FaceTrack, PayloadValue, Segment,
    Setting, SocialContextFrame, Speaker,
};

/// Band attributed to the primary (device-wearing) speaker, in Hz.
pub const PRIMARY_BAND_LOW_HZ: f64 = 0.0;
/// Upper edge of the primary-speaker band, in Hz.
pub const PRIMARY_BAND_HIGH_HZ: f64 = 1000.0;

/// Below this total energy the band fraction is defined as zero.
pub const DEFAULT_SILENCE_FLOOR: f64 = 1e-6;

/// Errors from stage-1 operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContextError {
    #[error("invalid band bounds [{low}, {high}] for sample rate {sample_rate_hz} Hz")]
    InvalidBand { low: f64, high: f64, sample_rate_hz: u32 },
    #[error("audio frame must be non-empty with finite samples in [-1, 1]")]
    InvalidFrame,
    #[error("tokens must be time-ordered and non-overlapping (token {index})")]
    TokensOutOfOrder { index: usize },
    #[error("no audio frame overlaps token(s): {tokens}")]
    TokenWithoutFrames { tokens: String },
}

/// A fixed-length PCM frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AudioFrame {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
    pub start_ms: i64,
}

impl AudioFrame {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32, start_ms: i64) -> AudioFrame {
        AudioFrame { samples, sample_rate_hz, start_ms }
    }

    /// Frame duration in milliseconds (exact rational, as f64).
    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sample_rate_hz as f64
    }

    /// Exclusive end of the frame interval in milliseconds.
    pub fn end_ms(&self) -> f64 {
        self.start_ms as f64 + self.duration_ms()
    }

    fn is_valid(&self) -> bool {
        !self.samples.is_empty()
            && self.sample_rate_hz > 0
            && self.samples.iter().all(|s| s.is_finite() && s.abs() <= 1.0)
    }
}

/// Thresholds for the speaker rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpeakerCalibration {
    /// Low-band energy fraction at or above which a frame is Primary.
    pub ratio_threshold: f64,
    /// Absolute total-energy threshold below which a frame is Silence.
    pub silence_floor: f64,
}

impl Default for SpeakerCalibration {
    fn default() -> Self {
        SpeakerCalibration { ratio_threshold: 0.60, silence_floor: 1e-6 }
    }
}

/// Per-frame speaker verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpeakerLabel {
    Primary,
    Other,
    Silence,
}

/// Result of band-energy analysis of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BandEnergy {
    pub band_energy: f64,
    pub total_energy: f64,
    pub band_fraction: f64,
}

/// A pre-transcribed token awaiting speaker attribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TranscriptToken {
    pub text: String,
    pub start_ms: i64,
    pub end_ms: i64,
}

// ---------------------------------------------------------------------------
// Spectrum
// ---------------------------------------------------------------------------

fn hann_window(n: usize, i: usize) -> f64 {
    // Periodic convention: integer-bin sines leak into adjacent bins only.
    0.5 - 0.5 * libm::cos(2.0 * core::f64::consts::PI * i as f64 / n as f64)
}

/// Squared-magnitude spectrum of the Hann-windowed frame, bins 0..=N/2.
fn power_spectrum(samples: &[f64]) -> Vec<f64> {
    let n = samples.len();
    let windowed: Vec<f64> =
        samples.iter().enumerate().map(|(i, s)| s * hann_window(n, i)).collect();
    let (re, im) = if n.is_power_of_two() && n >= 2 {
        fft_real(&windowed)
    } else {
        dft_real(&windowed)
    };
    (0..=n / 2).map(|k| re[k] * re[k] + im[k] * im[k]).collect()
}

/// Iterative radix-2 Cooley-Tukey FFT of a real signal.
fn fft_real(signal: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = signal.len();
    let mut re = signal.to_vec();
    let mut im = vec![0.0; n];

    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i as u32).reverse_bits() >> (32 - bits);
        let j = j as usize;
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let angle = -2.0 * core::f64::consts::PI / len as f64;
        let (w_re, w_im) = (libm::cos(angle), libm::sin(angle));
        for start in (0..n).step_by(len) {
            let (mut cur_re, mut cur_im) = (1.0, 0.0);
            for k in 0..len / 2 {
                let even = (re[start + k], im[start + k]);
                let odd = (re[start + k + len / 2], im[start + k + len / 2]);
                let t_re = odd.0 * cur_re - odd.1 * cur_im;
                let t_im = odd.0 * cur_im + odd.1 * cur_re;
                re[start + k] = even.0 + t_re;
                im[start + k] = even.1 + t_im;
                re[start + k + len / 2] = even.0 - t_re;
                im[start + k + len / 2] = even.1 - t_im;
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
        }
        len *= 2;
    }
    (re, im)
}

/// Direct DFT fallback for non-power-of-two frame lengths.
fn dft_real(signal: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = signal.len();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for (k, (rk, ik)) in re.iter_mut().zip(im.iter_mut()).enumerate() {
        for (i, s) in signal.iter().enumerate() {
            let angle = -2.0 * core::f64::consts::PI * (k * i) as f64 / n as f64;
            *rk += s * libm::cos(angle);
            *ik += s * libm::sin(angle);
        }
    }
    (re, im)
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Sum squared spectral magnitudes over the band and over all bins up to
/// Nyquist. A bin belongs to the band when its center frequency lies in
/// `[band_low_hz, band_high_hz]`, inclusive at both ends. The fraction is
/// zero when total energy sits below [`DEFAULT_SILENCE_FLOOR`].
pub fn compute_band_energy(
    frame: &AudioFrame,
    band_low_hz: f64,
    band_high_hz: f64,
) -> Result<BandEnergy, ContextError> {
    if !frame.is_valid() {
        return Err(ContextError::InvalidFrame);
    }
    let nyquist = frame.sample_rate_hz as f64 / 2.0;
    if !(0.0 <= band_low_hz && band_low_hz < band_high_hz && band_high_hz <= nyquist) {
        return Err(ContextError::InvalidBand {
            low: band_low_hz,
            high: band_high_hz,
            sample_rate_hz: frame.sample_rate_hz,
        });
    }

    let spectrum = power_spectrum(&frame.samples);
    let bin_hz = frame.sample_rate_hz as f64 / frame.samples.len() as f64;
    let mut band_energy = 0.0;
    let mut total_energy = 0.0;
    for (k, power) in spectrum.iter().enumerate() {
        let center = k as f64 * bin_hz;
        total_energy += power;
        if center >= band_low_hz && center <= band_high_hz {
            band_energy += power;
        }
    }
    let band_fraction =
        if total_energy < DEFAULT_SILENCE_FLOOR { 0.0 } else { band_energy / total_energy };
    Ok(BandEnergy { band_energy, total_energy, band_fraction })
}

/// Label a frame Primary, Other, or Silence by the 0–1000 Hz energy rule.
pub fn attribute_speaker(
    frame: &AudioFrame,
    cal: &SpeakerCalibration,
) -> Result<SpeakerLabel, ContextError> {
    let energy = compute_band_energy(frame, PRIMARY_BAND_LOW_HZ, PRIMARY_BAND_HIGH_HZ)?;
    if energy.total_energy < cal.silence_floor {
        return Ok(SpeakerLabel::Silence);
    }
    if energy.band_fraction >= cal.ratio_threshold {
        Ok(SpeakerLabel::Primary)
    } else {
        Ok(SpeakerLabel::Other)
    }
}

/// Attribute each token by majority speaker vote over its overlapping
/// frames, then merge adjacent tokens with equal labels into segments.
///
/// Silence frames do not vote; tokens overlapped only by Silence are
/// dropped. Vote ties go to Primary, favoring capture of the wearer's
/// speech.
pub fn segment_transcript(
    frames: &[AudioFrame],
    tokens: &[TranscriptToken],
    cal: &SpeakerCalibration,
) -> Result<Vec<Segment>, ContextError> {
    for (index, pair) in tokens.windows(2).enumerate() {
        if pair[1].start_ms < pair[0].end_ms {
            return Err(ContextError::TokensOutOfOrder { index: index + 1 });
        }
    }

    let labels: Vec<SpeakerLabel> =
        frames.iter().map(|f| attribute_speaker(f, cal)).collect::<Result<_, _>>()?;

    let mut orphaned: Vec<String> = Vec::new();
    let mut attributed: Vec<(Speaker, &TranscriptToken)> = Vec::new();
    for token in tokens {
        let mut primary = 0usize;
        let mut other = 0usize;
        let mut overlapping = 0usize;
        for (frame, label) in frames.iter().zip(&labels) {
            let overlaps =
                (frame.start_ms as f64) < token.end_ms as f64 && (token.start_ms as f64) < frame.end_ms();
            if !overlaps {
                continue;
            }
            overlapping += 1;
            match label {
                SpeakerLabel::Primary => primary += 1,
                SpeakerLabel::Other => other += 1,
                SpeakerLabel::Silence => {}
            }
        }
        if overlapping == 0 {
            orphaned.push(format!("\"{}\" [{}, {}]", token.text, token.start_ms, token.end_ms));
            continue;
        }
        if primary == 0 && other == 0 {
            continue; // entirely silence
        }
        let speaker = if primary >= other { Speaker::Primary } else { Speaker::Other };
        attributed.push((speaker, token));
    }
    if !orphaned.is_empty() {
        return Err(ContextError::TokenWithoutFrames { tokens: orphaned.join(", ") });
    }

    let mut segments: Vec<Segment> = Vec::new();
    for (speaker, token) in attributed {
        match segments.last_mut() {
            Some(last) if last.speaker == speaker => {
                last.text.push(' ');
                last.text.push_str(&token.text);
                last.end_ms = token.end_ms;
            }
            _ => segments.push(Segment {
                speaker,
                text: token.text.clone(),
                start_ms: token.start_ms,
                end_ms: token.end_ms,
            }),
        }
    }
    Ok(segments)
}

/// Indoor/outdoor vote vocabulary. Labels missing from both sets are
/// neutral and do not vote.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EnvironmentVocabulary {
    pub indoor: alloc::collections::BTreeSet<String>,
    pub outdoor: alloc::collections::BTreeSet<String>,
}

impl EnvironmentVocabulary {
    /// Default label sets for common indoor furniture and street scenes.
    pub fn builtin() -> EnvironmentVocabulary {
        let indoor = ["sofa", "lamp", "chair", "table", "desk", "laptop", "mug", "bookshelf",
            "couch", "whiteboard", "television"];
        let outdoor = ["tree", "car", "traffic light", "bench", "grass", "bicycle", "street",
            "cloud", "fountain", "bus"];
        EnvironmentVocabulary {
            indoor: indoor.iter().map(|s| s.to_string()).collect(),
            outdoor: outdoor.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Majority vote of object labels through the vocabulary; empty or tied
/// votes yield Unknown.
pub fn classify_environment(
    object_labels: &BTreeMap<String, u32>,
    vocabulary: &EnvironmentVocabulary,
) -> Setting {
    let mut indoor_votes = 0u64;
    let mut outdoor_votes = 0u64;
    for (label, count) in object_labels {
        let label = label.to_lowercase();
        if vocabulary.indoor.contains(&label) {
            indoor_votes += u64::from(*count);
        } else if vocabulary.outdoor.contains(&label) {
            outdoor_votes += u64::from(*count);
        }
    }
    match indoor_votes.cmp(&outdoor_votes) {
        core::cmp::Ordering::Greater => Setting::Indoor,
        core::cmp::Ordering::Less => Setting::Outdoor,
        core::cmp::Ordering::Equal => Setting::Unknown,
    }
}

/// Expression-key → emotion-label table.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EmotionTable {
    pub mapping: BTreeMap<String, String>,
}

impl EmotionTable {
    pub fn builtin() -> EmotionTable {
        let pairs = [
            ("expression.smile", "happy"),
            ("expression.laugh", "happy"),
            ("expression.frown", "displeased"),
            ("expression.scowl", "displeased"),
            ("expression.surprise", "surprised"),
            ("expression.squint", "skeptical"),
            ("expression.neutral", "neutral"),
        ];
        EmotionTable {
            mapping: pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

/// Arg-max over table-mapped expression scores; confidence is the winning
/// score. Unmapped keys are ignored; an empty result is ("neutral", 0).
pub fn estimate_emotion(
    expression_scores: &BTreeMap<String, f64>,
    table: &EmotionTable,
) -> EmotionEstimate {
    let mut best: Option<(&String, f64)> = None;
    for (key, score) in expression_scores {
        let Some(label) = table.mapping.get(key) else { continue };
        let better = match best {
            None => true,
            // Strict greater-than: equal scores keep the lexicographically
            // smaller key, which BTreeMap iteration visits first.
            Some((_, best_score)) => *score > best_score,
        };
        if better {
            best = Some((label, *score));
        }
    }
    match best {
        Some((label, confidence)) => EmotionEstimate { label: label.clone(), confidence },
        None => EmotionEstimate { label: "neutral".to_string(), confidence: 0.0 },
    }
}

/// Stage-1 configuration knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ContextConfig {
    pub calibration: SpeakerCalibration,
    pub environment_vocabulary: EnvironmentVocabulary,
    pub emotion_table: EmotionTable,
}

impl Default for ContextConfig {
    fn default() -> Self {
        ContextConfig {
            calibration: SpeakerCalibration::default(),
            environment_vocabulary: EnvironmentVocabulary::builtin(),
            emotion_table: EmotionTable::builtin(),
        }
    }
}

/// Fuse cue events, audio frames, and transcript tokens over one window
/// into a [`SocialContextFrame`].
///
/// Cue events are kept when their timestamp lies in `[start, end)`; tokens
/// when fully contained in the window; audio frames when they overlap it.
pub fn synthesize_context_frame(
    events: &[CueEvent],
    frames: &[AudioFrame],
    tokens: &[TranscriptToken],
    window: (i64, i64),
    config: &ContextConfig,
) -> Result<SocialContextFrame, ContextError> {
    let (window_start_ms, window_end_ms) = window;

    let in_window =
        |t: i64| t >= window_start_ms && t < window_end_ms;

    // Visual cues grouped by track; numeric payload entries are expression
    // scores, later timestamps winning per key.
    let mut tracks: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    let mut object_labels: BTreeMap<String, u32> = BTreeMap::new();
    for event in events.iter().filter(|e| in_window(e.timestamp_ms)) {
        match event.modality {
            CueModality::Visual => {
                let Some(track_id) = &event.track_id else { continue };
                let scores = tracks.entry(track_id.clone()).or_default();
                for (key, value) in &event.payload {
                    if let PayloadValue::Number(score) = value {
                        scores.insert(key.clone(), *score);
                    }
                }
            }
            CueModality::Environment => {
                if let Some(PayloadValue::Text(label)) = event.payload.get("object.label") {
                    *object_labels.entry(label.clone()).or_insert(0) += 1;
                }
            }
            CueModality::Audio => {}
        }
    }

    let mut face_tracks = Vec::new();
    let mut emotion = BTreeMap::new();
    for (track_id, expression_scores) in tracks {
        let dominant_expression = dominant_expression(&expression_scores);
        emotion.insert(track_id.clone(), estimate_emotion(&expression_scores, &config.emotion_table));
        face_tracks.push(FaceTrack { track_id, expression_scores, dominant_expression });
    }

    let window_tokens: Vec<TranscriptToken> = tokens
        .iter()
        .filter(|t| t.start_ms >= window_start_ms && t.end_ms <= window_end_ms)
        .cloned()
        .collect();
    let window_frames: Vec<AudioFrame> = frames
        .iter()
        .filter(|f| (f.start_ms as f64) < window_end_ms as f64 && (window_start_ms as f64) < f.end_ms())
        .cloned()
        .collect();
    let transcript = segment_transcript(&window_frames, &window_tokens, &config.calibration)?;

    let setting = classify_environment(&object_labels, &config.environment_vocabulary);
    Ok(SocialContextFrame {
        window_start_ms,
        window_end_ms,
        face_tracks,
        transcript,
        environment: EnvironmentSummary { object_labels, setting },
        emotion,
    })
}

/// Highest-scoring expression key, stripped of a leading "expression."
/// prefix; "neutral" when no scores exist. Ties keep the smaller key.
fn dominant_expression(scores: &BTreeMap<String, f64>) -> String {
    let mut best: Option<(&String, f64)> = None;
    for (key, score) in scores {
        let better = match best {
            None => true,
            Some((_, best_score)) => *score > best_score,
        };
        if better {
            best = Some((key, *score));
        }
    }
    match best {
        Some((key, _)) => key.strip_prefix("expression.").unwrap_or(key).to_string(),
        None => "neutral".to_string(),
    }
}
