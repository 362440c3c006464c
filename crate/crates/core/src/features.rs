//! Per-turn feature providers: hashed text embeddings, log filterbank audio
//! statistics, externally precomputed vectors and pelvis-relative motion
//! windows.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::corpus::{span_key, MotionSequence, SpeakerTrack, PELVIS};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub provider_id: String,
    /// Input was empty; the vector is all zeros and exempt from unit norm.
    pub empty: bool,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of lowercased unigrams and bigrams into `dim`
/// buckets, L2-normalized.
pub fn embed_text_hashed(tokens: &[String], dim: usize) -> FeatureVector {
    let dim = dim.max(1);
    let mut v = vec![0f64; dim];
    let toks: Vec<String> = tokens.iter().map(|t| t.to_lowercase()).collect();
    let mut add = |key: String| {
        let h = fnv1a(key.as_bytes());
        let bucket = (h % dim as u64) as usize;
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        v[bucket] += sign;
    };
    for t in &toks {
        add(format!("u:{t}"));
    }
    for pair in toks.windows(2) {
        add(format!("b:{} {}", pair[0], pair[1]));
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let empty = norm == 0.0;
    let values = v
        .iter()
        .map(|x| if empty { 0.0 } else { (x / norm) as f32 })
        .collect();
    FeatureVector {
        values,
        provider_id: format!("hashed-{dim}"),
        empty: tokens.is_empty(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudioConfig {
    pub bands: usize,
    pub window_ms: f64,
    pub hop_ms: f64,
    /// Energies below this are clamped before the log.
    pub log_floor: f64,
    /// Smallest FFT size; frames are zero-padded up to it.
    pub min_fft: usize,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            bands: 26,
            window_ms: 25.0,
            hop_ms: 10.0,
            log_floor: 1e-10,
            min_fft: 512,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Log filterbank front end for one sample rate.
pub struct FilterBank {
    sample_rate: f64,
    window: usize,
    hop: usize,
    fft_size: usize,
    hann: Vec<f64>,
    /// `bands x (fft_size/2 + 1)` triangular weights.
    weights: Vec<Vec<f64>>,
    centers_hz: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    cfg: AudioConfig,
}

impl FilterBank {
    pub fn new(sample_rate_hz: f64, cfg: &AudioConfig) -> Result<Self> {
        if !(sample_rate_hz > 0.0) {
            return Err(Error::config("audio.sample_rate", "must be positive"));
        }
        if cfg.bands == 0 {
            return Err(Error::config("audio.bands", "must be at least 1"));
        }
        let window = ((cfg.window_ms / 1000.0) * sample_rate_hz).round().max(1.0) as usize;
        let hop = ((cfg.hop_ms / 1000.0) * sample_rate_hz).round().max(1.0) as usize;
        let fft_size = window.next_power_of_two().max(cfg.min_fft);
        let hann = (0..window)
            .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / window as f64).cos())
            .collect();
        let nyquist = sample_rate_hz / 2.0;
        let mel_max = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..cfg.bands + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (cfg.bands + 1) as f64))
            .collect();
        let n_bins = fft_size / 2 + 1;
        let weights = (0..cfg.bands)
            .map(|b| {
                let (lo, c, hi) = (edges[b], edges[b + 1], edges[b + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * sample_rate_hz / fft_size as f64;
                        ((f - lo) / (c - lo)).min((hi - f) / (hi - c)).max(0.0)
                    })
                    .collect()
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(fft_size);
        Ok(Self {
            sample_rate: sample_rate_hz,
            window,
            hop,
            fft_size,
            hann,
            weights,
            centers_hz: edges[1..=cfg.bands].to_vec(),
            fft,
            cfg: cfg.clone(),
        })
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Log filterbank energies, one row of `bands` values per frame.
    pub fn log_energies(&self, samples: &[f32]) -> Vec<Vec<f64>> {
        let n_frames = if samples.len() <= self.window {
            1
        } else {
            1 + (samples.len() - self.window) / self.hop
        };
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        let mut out = Vec::with_capacity(n_frames);
        for f in 0..n_frames {
            let start = f * self.hop;
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for i in 0..self.window {
                let s = samples.get(start + i).copied().unwrap_or(0.0) as f64;
                buf[i].re = s * self.hann[i];
            }
            self.fft.process(&mut buf);
            let power: Vec<f64> = buf[..self.fft_size / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
            let row = self
                .weights
                .iter()
                .map(|w| {
                    let e: f64 = w.iter().zip(&power).map(|(w, p)| w * p).sum();
                    e.max(self.cfg.log_floor).ln()
                })
                .collect();
            out.push(row);
        }
        out
    }

    /// Per-band mean then per-band standard deviation of the log energies.
    pub fn features(&self, samples: &[f32]) -> FeatureVector {
        let bands = self.cfg.bands;
        if samples.is_empty() {
            return FeatureVector {
                values: vec![0.0; 2 * bands],
                provider_id: format!("spectral-{bands}"),
                empty: true,
            };
        }
        let frames = self.log_energies(samples);
        let n = frames.len() as f64;
        let mut values = vec![0f32; 2 * bands];
        for b in 0..bands {
            let first = frames[0][b];
            let (mean, var) = if frames.iter().all(|r| r[b] == first) {
                (first, 0.0)
            } else {
                let mean = frames.iter().map(|r| r[b]).sum::<f64>() / n;
                (mean, frames.iter().map(|r| (r[b] - mean).powi(2)).sum::<f64>() / n)
            };
            values[b] = mean as f32;
            values[bands + b] = var.sqrt() as f32;
        }
        FeatureVector {
            values,
            provider_id: format!("spectral-{bands}"),
            empty: false,
        }
    }
}

/// One-shot form of [`FilterBank::features`].
pub fn audio_spectral_features(samples: &[f32], sample_rate_hz: f64, cfg: &AudioConfig) -> Result<FeatureVector> {
    Ok(FilterBank::new(sample_rate_hz, cfg)?.features(samples))
}

/// Samples of `track`'s waveform inside `[onset, offset)`.
pub fn audio_span(track: &SpeakerTrack, onset: f64, offset: f64) -> &[f32] {
    let Some(a) = &track.audio else { return &[] };
    let sr = a.sample_rate_hz as f64;
    let lo = ((onset * sr).floor().max(0.0) as usize).min(a.samples.len());
    let hi = ((offset * sr).ceil().max(0.0) as usize).min(a.samples.len());
    &a.samples[lo..hi.max(lo)]
}

/// Stored vector for a span, if the track has one. Keys `"{modality}:{span}"`
/// take precedence over a bare span key.
pub fn load_precomputed(track: &SpeakerTrack, modality: &str, onset: f64, offset: f64) -> Option<FeatureVector> {
    let e = track.embeddings.as_ref()?;
    let key = span_key(onset, offset);
    e.vectors
        .get(&format!("{modality}:{key}"))
        .or_else(|| e.vectors.get(&key))
        .map(|v| FeatureVector {
            values: v.clone(),
            provider_id: "precomputed".into(),
            empty: false,
        })
}

/// Pelvis-relative motion for the trailing part of a span, left-padded.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionWindow {
    /// `len * n_joints * 3` values.
    pub frames: Vec<f32>,
    /// True for real frames.
    pub mask: Vec<bool>,
    pub n_joints: usize,
    pub frame_rate_hz: f32,
}

impl MotionWindow {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn real_frames(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn channels(&self) -> usize {
        self.n_joints * 3
    }

    /// Left-pads with zero frames to a multiple of `k`.
    pub fn pad_to_multiple(mut self, k: usize) -> Self {
        let extra = (k - self.len() % k) % k;
        if extra > 0 {
            let c = self.channels();
            let mut frames = vec![0.0; extra * c];
            frames.extend_from_slice(&self.frames);
            let mut mask = vec![false; extra];
            mask.extend_from_slice(&self.mask);
            self.frames = frames;
            self.mask = mask;
        }
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionConfig {
    pub window_s: f64,
    /// Joints kept in the window, in order; must include `pelvis`.
    pub joints: Vec<String>,
    /// Used to size fully padded windows when a track has no motion.
    pub frame_rate_hz: f32,
}

pub fn default_upper_body() -> Vec<String> {
    [
        "pelvis",
        "spine",
        "neck",
        "head",
        "l_shoulder",
        "l_elbow",
        "l_wrist",
        "r_shoulder",
        "r_elbow",
        "r_wrist",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            window_s: 4.0,
            joints: default_upper_body(),
            frame_rate_hz: 15.0,
        }
    }
}

const FRAME_EPS: f64 = 1e-9;

/// Frames `i` with `start <= i / fps < end`.
pub fn frame_range(start: f64, end: f64, fps: f64, n_frames: usize) -> (usize, usize) {
    let lo = ((start * fps - FRAME_EPS).ceil().max(0.0) as usize).min(n_frames);
    let hi = ((end * fps - FRAME_EPS).ceil().max(0.0) as usize).min(n_frames);
    (lo, hi.max(lo))
}

/// Trailing `window_s` of `[onset, offset]`, pelvis subtracted per frame,
/// left-padded with zero frames to `round(window_s * fps)`.
pub fn extract_motion_window(
    motion: Option<&MotionSequence>,
    onset: f64,
    offset: f64,
    cfg: &MotionConfig,
) -> Result<MotionWindow> {
    let Some(m) = motion else {
        let t = (cfg.window_s * cfg.frame_rate_hz as f64).round() as usize;
        return Ok(MotionWindow {
            frames: vec![0.0; t * cfg.joints.len() * 3],
            mask: vec![false; t],
            n_joints: cfg.joints.len(),
            frame_rate_hz: cfg.frame_rate_hz,
        });
    };
    let fps = m.frame_rate_hz as f64;
    let t = (cfg.window_s * fps).round() as usize;
    let pelvis = m
        .joint_index(PELVIS)
        .ok_or_else(|| Error::config("motion.joints", "motion has no `pelvis` joint"))?;
    if !cfg.joints.iter().any(|j| j == PELVIS) {
        return Err(Error::config("motion.joints", "joint list must include `pelvis`"));
    }
    let idx = cfg
        .joints
        .iter()
        .map(|j| {
            m.joint_index(j)
                .ok_or_else(|| Error::config("motion.joints", format!("joint `{j}` not in motion")))
        })
        .collect::<Result<Vec<_>>>()?;
    let start = onset.max(offset - cfg.window_s);
    let (lo, hi) = frame_range(start, offset, fps, m.n_frames());
    let real = (hi - lo).min(t);
    let lo = hi - real;
    let nj = idx.len();
    let mut frames = vec![0f32; t * nj * 3];
    let mut mask = vec![false; t];
    for (k, f) in (lo..hi).enumerate() {
        let row = t - real + k;
        mask[row] = true;
        let p = m.position(f, pelvis);
        for (jj, &j) in idx.iter().enumerate() {
            let q = m.position(f, j);
            for c in 0..3 {
                frames[(row * nj + jj) * 3 + c] = q[c] - p[c];
            }
        }
    }
    Ok(MotionWindow {
        frames,
        mask,
        n_joints: nj,
        frame_rate_hz: m.frame_rate_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn hashed_text_deterministic_unit_norm() {
        let a = embed_text_hashed(&toks("so what do you think"), 384);
        let b = embed_text_hashed(&toks("so what do you think"), 384);
        assert_eq!(a, b);
        let n: f64 = a.values.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-6);
    }

    #[test]
    fn hashed_text_empty_is_zero() {
        let v = embed_text_hashed(&[], 64);
        assert!(v.empty);
        assert!(v.values.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn yes_and_no_differ() {
        let a = embed_text_hashed(&toks("yes"), 64);
        let b = embed_text_hashed(&toks("no"), 64);
        assert_ne!(a.values, b.values);
    }

    #[test]
    fn silence_gives_log_floor() {
        let cfg = AudioConfig::default();
        let v = audio_spectral_features(&vec![0.0; 4000], 16000.0, &cfg).unwrap();
        assert_eq!(v.dim(), 52);
        let floor = (1e-10f64).ln() as f32;
        assert!(v.values[..26].iter().all(|x| *x == floor));
        assert!(v.values[26..].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn empty_audio_flagged() {
        let v = audio_spectral_features(&[], 16000.0, &AudioConfig::default()).unwrap();
        assert!(v.empty);
        assert_eq!(v.dim(), 52);
    }

    #[test]
    fn sine_at_center_peaks_in_its_band() {
        let cfg = AudioConfig::default();
        let sr = 16000.0;
        let fb = FilterBank::new(sr, &cfg).unwrap();
        for band in [3usize, 10, 18, 24] {
            let f = fb.centers_hz()[band];
            let s: Vec<f32> = (0..8000)
                .map(|i| (std::f64::consts::TAU * f * i as f64 / sr).sin() as f32)
                .collect();
            let v = fb.features(&s);
            let means = &v.values[..cfg.bands];
            let best = means
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(best, band);
            let second = means
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != band)
                .map(|(_, v)| *v)
                .fold(f32::MIN, f32::max);
            assert!(means[band] > second);
        }
    }

    #[test]
    fn amplitude_doubling_shifts_means_by_ln4() {
        let cfg = AudioConfig::default();
        let sr = 8000.0;
        let s: Vec<f32> = (0..4000)
            .map(|i| {
                let t = i as f64 / sr;
                (0.3 * (700.0 * t).sin() + 0.2 * (2300.0 * t).sin() + 0.1 * (37.0 * t).cos()) as f32
            })
            .collect();
        let s2: Vec<f32> = s.iter().map(|x| 2.0 * x).collect();
        let a = audio_spectral_features(&s, sr, &cfg).unwrap();
        let b = audio_spectral_features(&s2, sr, &cfg).unwrap();
        for i in 0..cfg.bands {
            assert!(((b.values[i] - a.values[i]) as f64 - 4f64.ln()).abs() < 1e-4);
            assert!((b.values[cfg.bands + i] - a.values[cfg.bands + i]).abs() < 1e-4);
        }
    }

    fn motion(frames: usize, fps: f32, offset: [f32; 3]) -> MotionSequence {
        let joints = default_upper_body();
        let nj = joints.len();
        let mut positions = Vec::with_capacity(frames * nj * 3);
        for f in 0..frames {
            for j in 0..nj {
                for c in 0..3 {
                    positions.push((f as f32 * 0.01 + j as f32 * 0.1 + c as f32) + offset[c]);
                }
            }
        }
        MotionSequence {
            frame_rate_hz: fps,
            joint_names: joints,
            positions,
        }
    }

    #[test]
    fn two_second_span_at_30fps() {
        let m = motion(300, 30.0, [0.0; 3]);
        let w = extract_motion_window(Some(&m), 1.0, 3.0, &MotionConfig::default()).unwrap();
        assert_eq!(w.len(), 120);
        assert_eq!(w.real_frames(), 60);
        assert!(w.mask[..60].iter().all(|m| !m));
        assert!(w.frames[..60 * w.channels()].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pelvis_is_origin_and_translation_invariant() {
        let m = motion(300, 30.0, [0.0; 3]);
        let moved = motion(300, 30.0, [1.5, -2.0, 0.25]);
        let cfg = MotionConfig::default();
        let a = extract_motion_window(Some(&m), 0.5, 6.0, &cfg).unwrap();
        let b = extract_motion_window(Some(&moved), 0.5, 6.0, &cfg).unwrap();
        assert_eq!(a.mask, b.mask);
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert!((x - y).abs() < 1e-5);
        }
        for (r, real) in a.mask.iter().enumerate() {
            if *real {
                assert_eq!(&a.frames[r * a.channels()..r * a.channels() + 3], &[0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn no_motion_fully_padded() {
        let w = extract_motion_window(None, 0.0, 1.0, &MotionConfig::default()).unwrap();
        assert_eq!(w.len(), 60);
        assert_eq!(w.real_frames(), 0);
    }

    #[test]
    fn missing_joint_is_error() {
        let m = motion(30, 30.0, [0.0; 3]);
        let cfg = MotionConfig {
            joints: vec!["pelvis".into(), "l_ankle".into()],
            ..Default::default()
        };
        assert!(extract_motion_window(Some(&m), 0.0, 1.0, &cfg).is_err());
    }

    #[test]
    fn pad_to_multiple_left_pads() {
        let w = MotionWindow {
            frames: vec![1.0; 6 * 3],
            mask: vec![true; 6],
            n_joints: 1,
            frame_rate_hz: 10.0,
        }
        .pad_to_multiple(4);
        assert_eq!(w.len(), 8);
        assert_eq!(&w.mask[..3], &[false, false, true]);
    }
}
