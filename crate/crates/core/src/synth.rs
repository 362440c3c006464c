//! Deterministic synthetic multi-party sessions with a planted
//! gesture-to-turn correlation.

use std::path::Path;

use semturn_tensor::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    encode_motion, GestureSpan, GestureType, MotionSequence, Session, SpeakerTrack, TimedWord, Waveform,
};
use crate::error::{Error, Result};
use crate::features::default_upper_body;
use crate::segment::TurnLabel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionSynthConfig {
    pub enabled: bool,
    pub frame_rate_hz: f32,
    /// Per-coordinate white noise on every non-pelvis joint, meters.
    pub noise_sigma: f64,
    pub idle_amplitude: f64,
    /// Type-independent arm movement present in every gesture; each gesture
    /// draws its own scale in `[0.5, 1.5]` and phase.
    pub common_amplitude: f64,
    pub common_freq_hz: f64,
    /// Amplitude of the type-specific component.
    pub type_amplitude: f64,
    /// Frequencies of the type-specific component, in `GestureType` order.
    pub type_freq_hz: [f64; 4],
    pub gesture_duration_s: [f64; 2],
}

impl Default for MotionSynthConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            frame_rate_hz: 15.0,
            noise_sigma: 0.05,
            idle_amplitude: 0.02,
            common_amplitude: 0.15,
            common_freq_hz: 1.2,
            type_amplitude: 0.06,
            type_freq_hz: [0.8, 1.6, 2.4, 3.2],
            gesture_duration_s: [1.0, 2.5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudioSynthConfig {
    pub enabled: bool,
    pub sample_rate_hz: u32,
    /// Speaker `i` speaks with a tone at `base_freq_hz + i * freq_step_hz`.
    pub base_freq_hz: f64,
    pub freq_step_hz: f64,
    pub modulation_hz: f64,
    pub amplitude: f64,
    pub noise: f64,
}

impl Default for AudioSynthConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            sample_rate_hz: 800,
            base_freq_hz: 110.0,
            freq_step_hz: 55.0,
            modulation_hz: 4.0,
            amplitude: 0.3,
            noise: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub session_length_s: f64,
    /// Probability that a speaker keeps the floor after an IPU.
    pub hold_prob: Vec<f64>,
    /// Optional full transition matrix; its diagonal overrides `hold_prob`.
    pub transition: Option<Vec<Vec<f64>>>,
    pub words_per_ipu: [usize; 2],
    pub word_duration_s: [f64; 2],
    pub intra_gap_s: [f64; 2],
    pub pause_s: [f64; 2],
    /// Probability that an IPU carries a gesture.
    pub gesture_rate: f64,
    /// Relative type rates in `GestureType` order.
    pub type_rates: [f64; 4],
    pub planted_type: GestureType,
    /// Added to P(yield) when the planted type is present.
    pub planted_delta: f64,
    /// Probability that the final word is drawn from the label's cue words.
    pub text_cue: f64,
    pub motion: MotionSynthConfig,
    pub audio: AudioSynthConfig,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_speakers: 4,
            session_length_s: 600.0,
            hold_prob: vec![0.6; 4],
            transition: None,
            words_per_ipu: [2, 8],
            word_duration_s: [0.15, 0.45],
            intra_gap_s: [0.02, 0.15],
            pause_s: [0.25, 0.9],
            gesture_rate: 0.5,
            type_rates: [0.27, 0.06, 0.43, 0.24],
            planted_type: GestureType::Deictic,
            planted_delta: 0.25,
            text_cue: 0.3,
            motion: MotionSynthConfig::default(),
            audio: AudioSynthConfig::default(),
            seed: 0,
        }
    }
}

fn bad(key: &str, msg: impl Into<String>) -> Error {
    Error::config(key, msg)
}

fn check_range(key: &str, r: [f64; 2], min: f64) -> Result<()> {
    if !(r[0] >= min && r[1] >= r[0] && r[1].is_finite()) {
        return Err(bad(key, format!("expected {min} <= lo <= hi, got {r:?}")));
    }
    Ok(())
}

impl SynthConfig {
    /// Row-stochastic speaker transition matrix.
    pub fn transition_matrix(&self) -> Vec<Vec<f64>> {
        if let Some(t) = &self.transition {
            return t.clone();
        }
        let n = self.n_speakers;
        (0..n)
            .map(|i| {
                let h = self.hold_prob[i];
                (0..n)
                    .map(|j| {
                        if i == j {
                            h
                        } else {
                            (1.0 - h) / (n - 1) as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_speakers;
        if n < 2 {
            return Err(bad("n_speakers", "need at least 2 speakers"));
        }
        if !(self.session_length_s > 2.0) {
            return Err(bad("session_length_s", "must exceed 2 seconds"));
        }
        if self.transition.is_none() && self.hold_prob.len() != n {
            return Err(bad(
                "hold_prob",
                format!("expected {n} entries, got {}", self.hold_prob.len()),
            ));
        }
        let t = self.transition_matrix();
        if t.len() != n || t.iter().any(|r| r.len() != n) {
            return Err(bad("transition", format!("must be {n}x{n}")));
        }
        for (i, row) in t.iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(bad(&format!("transition[{i}]"), "probabilities must lie in [0, 1]"));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(bad(&format!("transition[{i}]"), "row must sum to 1"));
            }
            if row[i] < 1.0 && row.iter().enumerate().all(|(j, p)| j == i || *p == 0.0) {
                return Err(bad(&format!("transition[{i}]"), "yield mass but no other speaker"));
            }
            let p_yield = 1.0 - row[i] + self.planted_delta;
            if !(0.0..=1.0).contains(&p_yield) {
                return Err(bad(
                    "planted_delta",
                    format!("shifts P(yield) of speaker {i} to {p_yield:.3}, outside [0, 1]"),
                ));
            }
        }
        if self.words_per_ipu[0] < 1 || self.words_per_ipu[1] < self.words_per_ipu[0] {
            return Err(bad("words_per_ipu", "expected 1 <= lo <= hi"));
        }
        check_range("word_duration_s", self.word_duration_s, 0.01)?;
        check_range("intra_gap_s", self.intra_gap_s, 0.0)?;
        check_range("pause_s", self.pause_s, 0.0)?;
        check_range("motion.gesture_duration_s", self.motion.gesture_duration_s, 0.05)?;
        for (key, p) in [("gesture_rate", self.gesture_rate), ("text_cue", self.text_cue)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(bad(key, "probability must lie in [0, 1]"));
            }
        }
        if self.type_rates.iter().any(|r| !(*r >= 0.0)) || self.type_rates.iter().sum::<f64>() <= 0.0 {
            return Err(bad("type_rates", "need non-negative rates with a positive sum"));
        }
        if self.motion.enabled && !(self.motion.frame_rate_hz > 0.0) {
            return Err(bad("motion.frame_rate_hz", "must be positive"));
        }
        if self.audio.enabled && self.audio.sample_rate_hz == 0 {
            return Err(bad("audio.sample_rate_hz", "must be positive"));
        }
        Ok(())
    }
}

const VOCAB: &[&str] = &[
    "the", "dragon", "cave", "sword", "roll", "dice", "attack", "door", "gold", "spell", "we", "go",
    "look", "north", "wait", "goblin", "tavern", "map", "check", "trap", "i", "think", "maybe",
    "there", "is", "a", "bridge", "over", "river", "cast", "shield", "potion", "run", "left",
    "stairs", "down", "torch", "wall", "hidden", "key",
];
const HOLD_CUES: &[&str] = &["and", "so", "um", "because"];
const YIELD_CUES: &[&str] = &["right", "okay", "yeah", "you"];

/// Label and gesture the generator assigned to one IPU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthTurn {
    pub speaker_id: String,
    pub onset: f64,
    pub offset: f64,
    pub label: TurnLabel,
    pub gesture: Option<GestureType>,
}

#[derive(Clone, Debug)]
pub struct SynthSession {
    pub session: Session,
    pub truth: Vec<TruthTurn>,
}

fn ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

pub fn speaker_id(i: usize) -> String {
    format!("spk{i}")
}

/// Offsets of each joint from the pelvis in the rest pose.
fn rest_pose(joint: &str) -> [f64; 3] {
    match joint {
        "pelvis" => [0.0, 0.0, 0.0],
        "spine" => [0.0, 0.0, 0.25],
        "neck" => [0.0, 0.0, 0.5],
        "head" => [0.0, 0.0, 0.65],
        "l_shoulder" => [-0.18, 0.0, 0.45],
        "r_shoulder" => [0.18, 0.0, 0.45],
        "l_elbow" => [-0.22, 0.0, 0.2],
        "r_elbow" => [0.22, 0.0, 0.2],
        "l_wrist" => [-0.22, 0.05, 0.0],
        "r_wrist" => [0.22, 0.05, 0.0],
        _ => [0.0, 0.0, 0.0],
    }
}

const ARM_JOINTS: [&str; 4] = ["l_elbow", "l_wrist", "r_elbow", "r_wrist"];

/// Fixed phase of the type-specific component for (type, arm joint, axis).
pub fn type_phase(t: usize, j: usize, k: usize) -> f64 {
    ((t * 7 + j * 3 + k) as f64 * 0.9) % std::f64::consts::TAU
}

/// Direction of the common gesture component for an arm joint.
fn common_direction(j: usize) -> [f64; 3] {
    let side = if j < 2 { -1.0 } else { 1.0 };
    let reach = if j % 2 == 1 { 1.0 } else { 0.6 };
    [0.3 * side * reach, 0.8 * reach, 0.5 * reach]
}

fn envelope(t: f64, onset: f64, offset: f64) -> f64 {
    const RAMP: f64 = 0.1;
    if t < onset || t >= offset {
        return 0.0;
    }
    let a = ((t - onset) / RAMP).min(1.0);
    let b = ((offset - t) / RAMP).min(1.0);
    let e = a.min(b);
    0.5 - 0.5 * (std::f64::consts::PI * e).cos()
}

struct GestureDraw {
    span: GestureSpan,
    scale: f64,
    phase: f64,
}

fn synth_motion(cfg: &SynthConfig, duration: f64, gestures: &[GestureDraw], rng: &mut Rng) -> MotionSequence {
    let m = &cfg.motion;
    let fps = m.frame_rate_hz as f64;
    let n = (duration * fps).round() as usize;
    let joints = default_upper_body();
    let nj = joints.len();
    let drift_phase = [rng.uniform_range(0.0, 6.28), rng.uniform_range(0.0, 6.28)];
    let origin = [rng.uniform_range(-2.0, 2.0), rng.uniform_range(-2.0, 2.0)];
    let sway_phase: Vec<f64> = (0..nj * 3).map(|_| rng.uniform_range(0.0, 6.28)).collect();
    let arm: Vec<Option<usize>> = joints.iter().map(|j| ARM_JOINTS.iter().position(|a| a == j)).collect();
    let mut positions = vec![0f32; n * nj * 3];
    let mut g = 0;
    for f in 0..n {
        let t = f as f64 / fps;
        while g < gestures.len() && gestures[g].span.offset <= t {
            g += 1;
        }
        let active = gestures[g..].iter().take_while(|d| d.span.onset <= t);
        let pelvis = [
            origin[0] + 0.3 * (std::f64::consts::TAU * 0.01 * t + drift_phase[0]).sin(),
            origin[1] + 0.3 * (std::f64::consts::TAU * 0.013 * t + drift_phase[1]).sin(),
            0.95,
        ];
        let mut offs = vec![[0f64; 3]; nj];
        for (d, off) in offs.iter_mut().enumerate().skip(1) {
            let rest = rest_pose(&joints[d]);
            for k in 0..3 {
                let sway = m.idle_amplitude * (std::f64::consts::TAU * 0.3 * t + sway_phase[d * 3 + k]).sin();
                off[k] = rest[k] + sway + m.noise_sigma * rng.normal();
            }
        }
        for d in active {
            let e = envelope(t, d.span.onset, d.span.offset);
            let tt = t - d.span.onset;
            let ti = d.span.gtype.index();
            let common = d.scale * m.common_amplitude * (std::f64::consts::TAU * m.common_freq_hz * tt + d.phase).sin();
            for (jd, a) in arm.iter().enumerate() {
                let Some(aj) = a else { continue };
                let dir = common_direction(*aj);
                for k in 0..3 {
                    let ty = m.type_amplitude
                        * (std::f64::consts::TAU * m.type_freq_hz[ti] * tt + type_phase(ti, *aj, k)).sin();
                    offs[jd][k] += e * (common * dir[k] + ty);
                }
            }
        }
        for (d, off) in offs.iter().enumerate() {
            for k in 0..3 {
                positions[(f * nj + d) * 3 + k] = (pelvis[k] + off[k]) as f32;
            }
        }
    }
    MotionSequence {
        frame_rate_hz: m.frame_rate_hz,
        joint_names: joints,
        positions,
    }
}

fn synth_audio(cfg: &SynthConfig, duration: f64, speaker: usize, words: &[TimedWord], rng: &mut Rng) -> Waveform {
    let a = &cfg.audio;
    let sr = a.sample_rate_hz as f64;
    let n = (duration * sr).round() as usize;
    let f0 = a.base_freq_hz + speaker as f64 * a.freq_step_hz;
    let mut samples: Vec<f32> = (0..n).map(|_| (a.noise * rng.normal()) as f32).collect();
    for w in words {
        let lo = ((w.onset * sr).round() as usize).min(n);
        let hi = ((w.offset * sr).round() as usize).min(n);
        for (i, s) in samples.iter_mut().enumerate().take(hi).skip(lo) {
            let t = i as f64 / sr;
            let am = 0.5 + 0.5 * (std::f64::consts::TAU * a.modulation_hz * t).sin();
            *s += (a.amplitude * am * (std::f64::consts::TAU * f0 * t).sin()) as f32;
        }
    }
    Waveform {
        sample_rate_hz: a.sample_rate_hz,
        samples,
    }
}

/// Simulates one session. Streams are attached in memory; sidecar paths are
/// set to `<session_id>.<speaker>.motion` / `.audio`.
pub fn generate_session(cfg: &SynthConfig, session_id: &str, seed: u64) -> Result<SynthSession> {
    cfg.validate()?;
    let mut rng = Rng::new(seed);
    let n = cfg.n_speakers;
    let trans = cfg.transition_matrix();
    let total_rate: f64 = cfg.type_rates.iter().sum();
    let type_p: Vec<f64> = cfg.type_rates.iter().map(|r| r / total_rate).collect();
    let mut words: Vec<Vec<TimedWord>> = vec![Vec::new(); n];
    let mut gestures: Vec<Vec<GestureDraw>> = (0..n).map(|_| Vec::new()).collect();
    let mut truth = Vec::new();
    let end = cfg.session_length_s - 0.5;
    let mut speaker = rng.below(n);
    let mut t = 0.5;
    loop {
        let n_words = cfg.words_per_ipu[0] + rng.below(cfg.words_per_ipu[1] - cfg.words_per_ipu[0] + 1);
        let mut spans = Vec::with_capacity(n_words);
        let mut cur = t;
        for i in 0..n_words {
            if i > 0 {
                cur += rng.uniform_range(cfg.intra_gap_s[0], cfg.intra_gap_s[1]);
            }
            let d = rng.uniform_range(cfg.word_duration_s[0], cfg.word_duration_s[1]);
            spans.push((ms(cur), ms(cur + d)));
            cur += d;
        }
        let (onset, offset) = (spans[0].0, spans[n_words - 1].1);
        if offset > end {
            break;
        }
        let gesture = if rng.bernoulli(cfg.gesture_rate) {
            Some(GestureType::ALL[rng.categorical(&type_p)])
        } else {
            None
        };
        let mut p_yield = 1.0 - trans[speaker][speaker];
        if gesture == Some(cfg.planted_type) {
            p_yield += cfg.planted_delta;
        }
        let label = if rng.bernoulli(p_yield) {
            TurnLabel::Yield
        } else {
            TurnLabel::Hold
        };
        let cue = rng.bernoulli(cfg.text_cue);
        for (i, (a, b)) in spans.iter().enumerate() {
            let text = if i + 1 == n_words && cue {
                let pool = match label {
                    TurnLabel::Hold => HOLD_CUES,
                    TurnLabel::Yield => YIELD_CUES,
                };
                pool[rng.below(pool.len())]
            } else {
                VOCAB[rng.below(VOCAB.len())]
            };
            words[speaker].push(TimedWord {
                text: text.to_string(),
                onset: *a,
                offset: *b,
            });
        }
        if let Some(gt) = gesture {
            let g_off = ms((offset + rng.uniform_range(-0.2, 0.1)).max(onset + 0.2));
            let dur = rng.uniform_range(cfg.motion.gesture_duration_s[0], cfg.motion.gesture_duration_s[1]);
            let g_on = ms((g_off - dur).max(onset));
            gestures[speaker].push(GestureDraw {
                span: GestureSpan {
                    onset: g_on,
                    offset: g_off,
                    gtype: gt,
                },
                scale: rng.uniform_range(0.5, 1.5),
                phase: rng.uniform_range(0.0, std::f64::consts::TAU),
            });
        }
        truth.push(TruthTurn {
            speaker_id: speaker_id(speaker),
            onset,
            offset,
            label,
            gesture,
        });
        if label == TurnLabel::Yield {
            let mut w = trans[speaker].clone();
            w[speaker] = 0.0;
            speaker = rng.categorical(&w);
        }
        t = offset + rng.uniform_range(cfg.pause_s[0], cfg.pause_s[1]);
    }
    if let Some(last) = truth.last_mut() {
        last.label = TurnLabel::Hold;
    }
    let duration = cfg.session_length_s;
    let mut speakers = Vec::with_capacity(n);
    for (i, (w, g)) in words.into_iter().zip(gestures).enumerate() {
        let id = speaker_id(i);
        let mut track = SpeakerTrack::new(id.clone());
        track.gestures = g.iter().map(|d| d.span).collect();
        if cfg.motion.enabled {
            let mut mrng = Rng::with_stream(seed, 1 + i as u64);
            track.motion = Some(synth_motion(cfg, duration, &g, &mut mrng));
            track.motion_path = Some(format!("{session_id}.{id}.motion"));
        }
        if cfg.audio.enabled {
            let mut arng = Rng::with_stream(seed, 101 + i as u64);
            track.audio = Some(synth_audio(cfg, duration, i, &w, &mut arng));
            track.audio_path = Some(format!("{session_id}.{id}.audio"));
        }
        track.words = w;
        speakers.push(track);
    }
    Ok(SynthSession {
        session: Session {
            session_id: session_id.to_string(),
            duration_s: duration,
            speakers,
        },
        truth,
    })
}

/// Seed of session `index`: the first output of the master generator on
/// stream `index + 1`.
pub fn session_seed(master: u64, index: usize) -> u64 {
    Rng::with_stream(master, index as u64 + 1).next_u64()
}

pub fn session_name(index: usize) -> String {
    format!("synth{index:03}")
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TruthCounts {
    pub turns: usize,
    pub hold: usize,
    #[serde(rename = "yield")]
    pub yield_: usize,
    pub with_gesture: usize,
    pub with_planted: usize,
    pub yield_with_planted: usize,
}

impl TruthCounts {
    pub fn add(&mut self, truth: &[TruthTurn], planted: GestureType) {
        for t in truth {
            self.turns += 1;
            let y = t.label == TurnLabel::Yield;
            if y {
                self.yield_ += 1;
            } else {
                self.hold += 1;
            }
            if t.gesture.is_some() {
                self.with_gesture += 1;
            }
            if t.gesture == Some(planted) {
                self.with_planted += 1;
                if y {
                    self.yield_with_planted += 1;
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestSession {
    pub session_id: String,
    pub file: String,
    pub seed: u64,
    pub counts: TruthCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedStats {
    pub gesture_type: GestureType,
    pub delta: f64,
    /// Configured P(yield) per speaker without and with the planted gesture.
    pub p_yield: Vec<f64>,
    pub p_yield_planted: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub algorithm_id: String,
    pub master_seed: u64,
    pub seed_rule: String,
    pub config: SynthConfig,
    pub planted: PlantedStats,
    pub sessions: Vec<ManifestSession>,
    pub totals: TruthCounts,
    /// SHA-256 over every written file, in session order.
    pub content_hash: String,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn write_bytes(path: &Path, bytes: &[u8], hasher: &mut Sha256) -> Result<()> {
    hasher.update(bytes);
    crate::corpus::write_atomic(path, bytes)
}

/// Writes `n_sessions` sessions plus `manifest.json` into `dir`, one session
/// in memory at a time.
pub fn generate_benchmark(cfg: &SynthConfig, n_sessions: usize, dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut hasher = Sha256::new();
    let mut sessions = Vec::with_capacity(n_sessions);
    let mut totals = TruthCounts::default();
    for i in 0..n_sessions {
        let id = session_name(i);
        let seed = session_seed(cfg.seed, i);
        let s = generate_session(cfg, &id, seed)?;
        for sp in &s.session.speakers {
            if let (Some(p), Some(m)) = (&sp.motion_path, &sp.motion) {
                write_bytes(&dir.join(p), &encode_motion(m), &mut hasher)?;
            }
            if let (Some(p), Some(a)) = (&sp.audio_path, &sp.audio) {
                write_bytes(&dir.join(p), &crate::corpus::encode_audio(a), &mut hasher)?;
            }
        }
        let file = format!("{id}.session.json");
        let json = serde_json::to_string_pretty(&s.session).map_err(|e| Error::Invalid(e.to_string()))?;
        write_bytes(&dir.join(&file), json.as_bytes(), &mut hasher)?;
        let mut counts = TruthCounts::default();
        counts.add(&s.truth, cfg.planted_type);
        totals.add(&s.truth, cfg.planted_type);
        sessions.push(ManifestSession {
            session_id: id,
            file,
            seed,
            counts,
        });
    }
    let trans = cfg.transition_matrix();
    let p_yield: Vec<f64> = (0..cfg.n_speakers).map(|i| 1.0 - trans[i][i]).collect();
    let manifest = Manifest {
        algorithm_id: Rng::ALGORITHM_ID.to_string(),
        master_seed: cfg.seed,
        seed_rule: "session i uses the first u64 of the master generator on stream i+1".into(),
        config: cfg.clone(),
        planted: PlantedStats {
            gesture_type: cfg.planted_type,
            delta: cfg.planted_delta,
            p_yield_planted: p_yield.iter().map(|p| p + cfg.planted_delta).collect(),
            p_yield,
        },
        sessions,
        totals,
        content_hash: hex(&hasher.finalize()),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Invalid(e.to_string()))?;
    let path = dir.join(MANIFEST_FILE);
    crate::corpus::write_atomic(&path, json)?;
    Ok(manifest)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
