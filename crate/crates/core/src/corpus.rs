//! Multi-party session data model, on-disk formats and integrity checks.
//!
//! A session is one JSON document. Bulky per-speaker data lives in sidecar
//! files referenced by relative path: motion (`GMO1` binary), audio (`GAU1`
//! binary) and precomputed embeddings (JSON map from span key to vector).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Semantic gesture categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GestureType {
    Iconic,
    Metaphoric,
    Deictic,
    Discourse,
}

impl GestureType {
    pub const ALL: [GestureType; 4] = [
        GestureType::Iconic,
        GestureType::Metaphoric,
        GestureType::Deictic,
        GestureType::Discourse,
    ];

    /// Class index used by the semantic head; 4 is reserved for "none".
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            GestureType::Iconic => "iconic",
            GestureType::Metaphoric => "metaphoric",
            GestureType::Deictic => "deictic",
            GestureType::Discourse => "discourse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == s.trim())
    }
}

impl fmt::Display for GestureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedWord {
    pub text: String,
    pub onset: f64,
    pub offset: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureSpan {
    pub onset: f64,
    pub offset: f64,
    #[serde(rename = "type")]
    pub gtype: GestureType,
}

/// Frame-major 3D joint positions in meters.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionSequence {
    pub frame_rate_hz: f32,
    pub joint_names: Vec<String>,
    /// `n_frames * joints * 3` values.
    pub positions: Vec<f32>,
}

pub const PELVIS: &str = "pelvis";

impl MotionSequence {
    pub fn n_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn n_frames(&self) -> usize {
        self.positions.len() / (self.n_joints() * 3).max(1)
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|j| j == name)
    }

    /// `[x, y, z]` of joint `j` at frame `f`.
    pub fn position(&self, f: usize, j: usize) -> [f32; 3] {
        let base = (f * self.n_joints() + j) * 3;
        [self.positions[base], self.positions[base + 1], self.positions[base + 2]]
    }
}

/// Mono waveform.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub sample_rate_hz: u32,
    pub samples: Vec<f32>,
}

/// Externally computed vectors keyed by [`span_key`].
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Embeddings {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f32>>,
}

/// Key for a time span: `"{onset_ms}-{offset_ms}"` with rounded milliseconds.
pub fn span_key(onset: f64, offset: f64) -> String {
    format!("{}-{}", (onset * 1000.0).round() as i64, (offset * 1000.0).round() as i64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakerTrack {
    pub speaker_id: String,
    #[serde(default)]
    pub words: Vec<TimedWord>,
    #[serde(default)]
    pub gestures: Vec<GestureSpan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_path: Option<String>,
    #[serde(skip)]
    pub motion: Option<MotionSequence>,
    #[serde(skip)]
    pub audio: Option<Waveform>,
    #[serde(skip)]
    pub embeddings: Option<Embeddings>,
}

impl SpeakerTrack {
    pub fn new(speaker_id: impl Into<String>) -> Self {
        Self {
            speaker_id: speaker_id.into(),
            words: Vec::new(),
            gestures: Vec::new(),
            motion_path: None,
            audio_path: None,
            embeddings_path: None,
            motion: None,
            audio: None,
            embeddings: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Session {
    pub session_id: String,
    pub duration_s: f64,
    pub speakers: Vec<SpeakerTrack>,
}

impl Session {
    pub fn speaker(&self, id: &str) -> Option<&SpeakerTrack> {
        self.speakers.iter().find(|s| s.speaker_id == id)
    }
}

/// One failed invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Checks every session invariant; an empty result means the session is valid.
pub fn validate_session(s: &Session) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut flag = |path: String, message: String| out.push(Violation { path, message });
    let dur = s.duration_s;
    if !(dur.is_finite() && dur >= 0.0) {
        flag("duration_s".into(), format!("must be a non-negative number, got {dur}"));
    }
    let within = |t: f64| t >= 0.0 && t <= dur;
    let mut seen = HashSet::new();
    for (si, sp) in s.speakers.iter().enumerate() {
        let base = format!("speakers[{si}]");
        if !seen.insert(sp.speaker_id.as_str()) {
            flag(format!("{base}.speaker_id"), format!("duplicate speaker id `{}`", sp.speaker_id));
        }
        for (wi, w) in sp.words.iter().enumerate() {
            let p = format!("{base}.words[{wi}]");
            if !(w.onset >= 0.0 && w.offset > w.onset) {
                flag(p.clone(), format!("needs 0 <= onset < offset, got [{}, {}]", w.onset, w.offset));
            } else if !within(w.onset) || !within(w.offset) {
                flag(p.clone(), format!("[{}, {}] outside session [0, {dur}]", w.onset, w.offset));
            }
            if wi > 0 && w.onset < sp.words[wi - 1].onset {
                flag(p, "words not sorted by onset".into());
            }
        }
        for (gi, g) in sp.gestures.iter().enumerate() {
            let p = format!("{base}.gestures[{gi}]");
            if !(g.offset > g.onset) {
                flag(p, format!("needs onset < offset, got [{}, {}]", g.onset, g.offset));
            } else if !within(g.onset) || !within(g.offset) {
                flag(p, format!("[{}, {}] outside session [0, {dur}]", g.onset, g.offset));
            }
        }
        if let Some(m) = &sp.motion {
            let p = format!("{base}.motion");
            if !(m.frame_rate_hz.is_finite() && m.frame_rate_hz > 0.0) {
                flag(p.clone(), format!("frame rate must be positive, got {}", m.frame_rate_hz));
            } else {
                let expected = (dur * m.frame_rate_hz as f64).round() as i64;
                let got = m.n_frames() as i64;
                if (got - expected).abs() > 1 {
                    flag(p.clone(), format!("{got} frames, expected {expected} +/- 1 for {dur} s"));
                }
            }
            if m.joint_index(PELVIS).is_none() {
                flag(p.clone(), "joint set lacks `pelvis`".into());
            }
            if let Some(i) = m.positions.iter().position(|v| !v.is_finite()) {
                flag(p, format!("non-finite value at flat index {i}"));
            }
        }
        if let Some(e) = &sp.embeddings {
            for (k, v) in &e.vectors {
                if v.len() != e.dim {
                    flag(
                        format!("{base}.embeddings[{k}]"),
                        format!("length {} differs from {}", v.len(), e.dim),
                    );
                }
            }
        }
    }
    out
}

fn parse_err(path: &Path, e: impl fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Loads a session document and every sidecar it references (paths relative
/// to the document's directory), then validates it.
pub fn load_session(path: &Path) -> Result<Session> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut session: Session = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    for sp in &mut session.speakers {
        if let Some(p) = &sp.motion_path {
            sp.motion = Some(load_motion(&dir.join(p))?);
        }
        if let Some(p) = &sp.audio_path {
            sp.audio = Some(load_audio(&dir.join(p))?);
        }
        if let Some(p) = &sp.embeddings_path {
            sp.embeddings = Some(load_embeddings(&dir.join(p))?);
        }
    }
    let violations = validate_session(&session);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(session)
}

/// Writes the session document and the sidecars of every loaded stream whose
/// path is set.
pub fn write_session(s: &Session, path: &Path) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    for sp in &s.speakers {
        if let (Some(p), Some(m)) = (&sp.motion_path, &sp.motion) {
            write_motion(m, &dir.join(p))?;
        }
        if let (Some(p), Some(a)) = (&sp.audio_path, &sp.audio) {
            write_audio(a, &dir.join(p))?;
        }
        if let (Some(p), Some(e)) = (&sp.embeddings_path, &sp.embeddings) {
            let text = serde_json::to_string(&e.vectors).map_err(|e| parse_err(path, e))?;
            write_atomic(&dir.join(p), text)?;
        }
    }
    let text = serde_json::to_string_pretty(s).map_err(|e| parse_err(path, e))?;
    write_atomic(path, text)
}

const MOTION_MAGIC: &[u8; 4] = b"GMO1";
const AUDIO_MAGIC: &[u8; 4] = b"GAU1";

pub fn encode_motion(m: &MotionSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + m.positions.len() * 4);
    out.extend_from_slice(MOTION_MAGIC);
    out.extend_from_slice(&(m.n_frames() as u32).to_le_bytes());
    out.extend_from_slice(&(m.n_joints() as u32).to_le_bytes());
    out.extend_from_slice(&m.frame_rate_hz.to_le_bytes());
    for name in &m.joint_names {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for v in &m.positions {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::SizeMismatch {
                path: self.path.to_path_buf(),
                message: format!("need {n} bytes at offset {}, file has {}", self.pos, self.bytes.len()),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode_motion(bytes: &[u8], path: &Path) -> Result<MotionSequence> {
    let mut c = Cursor { bytes, pos: 0, path };
    if c.take(4)? != MOTION_MAGIC {
        return Err(parse_err(path, "missing GMO1 magic"));
    }
    let frames = c.u32()? as usize;
    let joints = c.u32()? as usize;
    let frame_rate_hz = c.f32()?;
    let mut joint_names = Vec::with_capacity(joints);
    for _ in 0..joints {
        let len = c.u32()? as usize;
        let raw = c.take(len)?;
        joint_names.push(String::from_utf8(raw.to_vec()).map_err(|e| parse_err(path, e))?);
    }
    let n = frames * joints * 3;
    let remaining = bytes.len() - c.pos;
    if remaining != n * 4 {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            message: format!("header declares {frames}x{joints}x3 values ({} bytes), payload has {remaining}", n * 4),
        });
    }
    let positions: Vec<f32> = c
        .take(n * 4)?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    if let Some(i) = positions.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            path: path.to_path_buf(),
            index: i,
        });
    }
    Ok(MotionSequence {
        frame_rate_hz,
        joint_names,
        positions,
    })
}

pub fn load_motion(path: &Path) -> Result<MotionSequence> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_motion(&bytes, path)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn write_motion(m: &MotionSequence, path: &Path) -> Result<()> {
    write_atomic(path, encode_motion(m))
}

/// Audio sidecar: magic `GAU1`, u32 sample rate, u32 sample count, f32 samples.
pub fn encode_audio(a: &Waveform) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + a.samples.len() * 4);
    out.extend_from_slice(AUDIO_MAGIC);
    out.extend_from_slice(&a.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(a.samples.len() as u32).to_le_bytes());
    for v in &a.samples {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_audio(a: &Waveform, path: &Path) -> Result<()> {
    write_atomic(path, encode_audio(a))
}

pub fn load_audio(path: &Path) -> Result<Waveform> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut c = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if c.take(4)? != AUDIO_MAGIC {
        return Err(parse_err(path, "missing GAU1 magic"));
    }
    let sample_rate_hz = c.u32()?;
    let n = c.u32()? as usize;
    if bytes.len() - c.pos != n * 4 {
        return Err(Error::SizeMismatch {
            path: path.to_path_buf(),
            message: format!("header declares {n} samples, payload has {} bytes", bytes.len() - c.pos),
        });
    }
    let samples = (0..n).map(|_| c.f32()).collect::<Result<Vec<_>>>()?;
    Ok(Waveform {
        sample_rate_hz,
        samples,
    })
}

/// Reads an embeddings file; every vector must have the same length.
pub fn load_embeddings(path: &Path) -> Result<Embeddings> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let vectors: BTreeMap<String, Vec<f32>> = serde_json::from_str(&text).map_err(|e| parse_err(path, e))?;
    embeddings_from_map(vectors).map_err(|m| parse_err(path, m))
}

pub fn embeddings_from_map(vectors: BTreeMap<String, Vec<f32>>) -> std::result::Result<Embeddings, String> {
    let mut dim = None;
    for (k, v) in &vectors {
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(format!("dimension mismatch: `{k}` has {} values, expected {d}", v.len()))
            }
            _ => {}
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(format!("non-finite value in `{k}`"));
        }
    }
    Ok(Embeddings {
        dim: dim.unwrap_or(0),
        vectors,
    })
}

#[derive(Deserialize)]
struct AnnotationRow {
    onset_s: String,
    offset_s: String,
    gesture_type: String,
}

/// Appends gesture spans from an annotation CSV (`onset_s,offset_s,gesture_type`).
pub fn import_annotation_csv(path: &Path, track: SpeakerTrack) -> Result<SpeakerTrack> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    import_annotation_reader(file, path, track)
}

pub fn import_annotation_reader(reader: impl Read, path: &Path, mut track: SpeakerTrack) -> Result<SpeakerTrack> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| parse_err(path, e))?.clone();
    let expected = ["onset_s", "offset_s", "gesture_type"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(path, format!("header must be `{}`", expected.join(","))));
    }
    let mut spans = Vec::new();
    for (i, row) in rdr.deserialize::<AnnotationRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| parse_err(path, e))?;
        let num = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Annotation {
                line,
                message: format!("`{s}` is not a number"),
            })
        };
        let onset = num(&row.onset_s)?;
        let offset = num(&row.offset_s)?;
        let gtype = GestureType::parse(&row.gesture_type).ok_or_else(|| Error::Annotation {
            line,
            message: format!(
                "unknown gesture type `{}`; accepted: {}",
                row.gesture_type,
                GestureType::ALL.map(|g| g.name()).join(", ")
            ),
        })?;
        spans.push(GestureSpan { onset, offset, gtype });
    }
    track.gestures.extend(spans);
    Ok(track)
}

/// Session document paths inside a corpus directory, sorted by file name.
pub fn session_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.ends_with(".session.json") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}
