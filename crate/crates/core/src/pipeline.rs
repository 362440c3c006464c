//! Turns plus sessions to model-ready examples.

use serde::{Deserialize, Serialize};

use crate::corpus::{GestureType, Session};
use crate::error::{Error, Result};
use crate::features::{
    audio_span, embed_text_hashed, extract_motion_window, load_precomputed, AudioConfig, FilterBank, MotionConfig,
};
use crate::segment::{Split, TurnLabel, TurnRecord};
use crate::vqvae::{GestureTokenSequence, VqVae, DOWNSAMPLE};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextFeatureConfig {
    /// `hashed` or `precomputed`.
    pub provider: String,
    pub dim: usize,
}

impl Default for TextFeatureConfig {
    fn default() -> Self {
        Self {
            provider: "hashed".into(),
            dim: 384,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudioFeatureConfig {
    /// `spectral` or `precomputed`.
    pub provider: String,
    pub bands: usize,
    pub window_ms: f64,
    pub hop_ms: f64,
}

impl Default for AudioFeatureConfig {
    fn default() -> Self {
        let a = AudioConfig::default();
        Self {
            provider: "spectral".into(),
            bands: a.bands,
            window_ms: a.window_ms,
            hop_ms: a.hop_ms,
        }
    }
}

impl AudioFeatureConfig {
    pub fn spectral(&self) -> AudioConfig {
        AudioConfig {
            bands: self.bands,
            window_ms: self.window_ms,
            hop_ms: self.hop_ms,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.bands
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub text: TextFeatureConfig,
    pub audio: AudioFeatureConfig,
    pub motion: MotionConfig,
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.text.provider.as_str(), "hashed" | "precomputed") {
            return Err(Error::config(
                "text.provider",
                format!("unknown provider `{}` (expected hashed or precomputed)", self.text.provider),
            ));
        }
        if !matches!(self.audio.provider.as_str(), "spectral" | "precomputed") {
            return Err(Error::config(
                "audio.provider",
                format!("unknown provider `{}` (expected spectral or precomputed)", self.audio.provider),
            ));
        }
        if self.text.dim == 0 {
            return Err(Error::config("text.dim", "must be positive"));
        }
        if self.audio.bands == 0 {
            return Err(Error::config("audio.bands", "must be positive"));
        }
        if !(self.motion.window_s > 0.0) {
            return Err(Error::config("motion.window_s", "must be positive"));
        }
        if !self.motion.joints.iter().any(|j| j == crate::corpus::PELVIS) {
            return Err(Error::config("motion.joints", "must include `pelvis`"));
        }
        Ok(())
    }

    /// Gesture tokens per turn at the configured frame rate.
    pub fn gesture_len(&self, frame_rate_hz: f32) -> usize {
        let t = (self.motion.window_s * frame_rate_hz as f64).round() as usize;
        t.div_ceil(DOWNSAMPLE)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GestureTokens {
    pub token_ids: Vec<usize>,
    pub mask: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurnExample {
    pub session_id: String,
    pub speaker_id: String,
    pub onset: f64,
    pub offset: f64,
    pub label: TurnLabel,
    pub split: Split,
    /// Type of the longest attached gesture, if any.
    pub gesture_type: Option<GestureType>,
    pub text: Vec<f32>,
    pub audio: Vec<f32>,
    /// `None` when the speaker has no motion.
    pub gesture: Option<GestureTokens>,
}

impl TurnExample {
    pub fn key(&self) -> String {
        format!("{}/{}/{}", self.session_id, self.speaker_id, crate::corpus::span_key(self.onset, self.offset))
    }
}

/// Longest gesture attached to a turn.
pub fn dominant_gesture(rec: &TurnRecord) -> Option<GestureType> {
    rec.gestures
        .iter()
        .max_by(|a, b| {
            let oa = a.offset.min(rec.offset) - a.onset.max(rec.onset);
            let ob = b.offset.min(rec.offset) - b.onset.max(rec.onset);
            oa.total_cmp(&ob).then(b.onset.total_cmp(&a.onset))
        })
        .map(|g| g.gtype)
}

/// Token sequence for a turn's trailing motion window.
pub fn turn_tokens(
    session: &Session,
    rec: &TurnRecord,
    motion: &MotionConfig,
    vq: &VqVae<f32>,
) -> Result<GestureTokenSequence> {
    let track = session
        .speaker(&rec.speaker_id)
        .ok_or_else(|| Error::Invalid(format!("session {} has no speaker {}", session.session_id, rec.speaker_id)))?;
    let span = (rec.onset, rec.offset);
    let Some(m) = &track.motion else {
        return Ok(GestureTokenSequence::absent(span));
    };
    let w = extract_motion_window(Some(m), rec.onset, rec.offset, motion)?;
    vq.tokenize(&w, span)
}

/// Builds examples for the turns of one session. Gesture tokens come from
/// `vq` when given, else from `tokens` (aligned with `records`).
pub fn build_examples(
    session: &Session,
    records: &[&TurnRecord],
    cfg: &FeatureConfig,
    vq: Option<&VqVae<f32>>,
    tokens: Option<&[Option<GestureTokens>]>,
) -> Result<Vec<TurnExample>> {
    cfg.validate()?;
    let mut banks: Vec<(u32, FilterBank)> = Vec::new();
    let mut out = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let track = session.speaker(&rec.speaker_id).ok_or_else(|| {
            Error::Invalid(format!("session {} has no speaker {}", session.session_id, rec.speaker_id))
        })?;
        let text = if cfg.text.provider == "precomputed" {
            load_precomputed(track, "text", rec.onset, rec.offset)
                .ok_or_else(|| Error::Invalid(format!("no precomputed text vector for {}", rec.onset)))?
                .values
        } else {
            embed_text_hashed(&rec.tokens(), cfg.text.dim).values
        };
        let audio = if cfg.audio.provider == "precomputed" {
            load_precomputed(track, "audio", rec.onset, rec.offset)
                .ok_or_else(|| Error::Invalid(format!("no precomputed audio vector for {}", rec.onset)))?
                .values
        } else if let Some(a) = &track.audio {
            let pos = match banks.iter().position(|(sr, _)| *sr == a.sample_rate_hz) {
                Some(p) => p,
                None => {
                    banks.push((a.sample_rate_hz, FilterBank::new(a.sample_rate_hz as f64, &cfg.audio.spectral())?));
                    banks.len() - 1
                }
            };
            banks[pos].1.features(audio_span(track, rec.onset, rec.offset)).values
        } else {
            vec![0.0; cfg.audio.dim()]
        };
        let gesture = match (vq, tokens) {
            (Some(vq), _) => {
                let seq = turn_tokens(session, rec, &cfg.motion, vq)?;
                (!seq.empty).then_some(GestureTokens {
                    token_ids: seq.token_ids,
                    mask: seq.mask,
                })
            }
            (None, Some(t)) => t[i].clone(),
            (None, None) => None,
        };
        out.push(TurnExample {
            session_id: rec.session_id.clone(),
            speaker_id: rec.speaker_id.clone(),
            onset: rec.onset,
            offset: rec.offset,
            label: rec.label,
            split: rec.split,
            gesture_type: dominant_gesture(rec),
            text,
            audio,
            gesture,
        });
    }
    Ok(out)
}

/// Per-dimension mean and standard deviation over the training examples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(rows: impl Iterator<Item = &'a [f32]>) -> Option<Self> {
        let mut n = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for r in rows {
            if sum.is_empty() {
                sum = vec![0.0; r.len()];
                sq = vec![0.0; r.len()];
            }
            n += 1;
            for (j, v) in r.iter().enumerate() {
                sum[j] += *v as f64;
                sq[j] += (*v as f64).powi(2);
            }
        }
        if n == 0 {
            return None;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s / n as f64 - m * m).max(0.0).sqrt().max(1e-6))
            .collect();
        Some(Self { mean, std })
    }

    pub fn apply(&self, row: &mut [f32]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = ((*v as f64 - m) / s) as f32;
        }
    }
}

/// Standardizes audio features with training-split statistics.
pub fn standardize_audio(examples: &mut [TurnExample]) -> Option<Standardizer> {
    let st = Standardizer::fit(
        examples
            .iter()
            .filter(|e| e.split == Split::Train)
            .map(|e| e.audio.as_slice()),
    )?;
    for e in examples.iter_mut() {
        st.apply(&mut e.audio);
    }
    Some(st)
}
