//! File-level plumbing shared by the command-line tools: resolved run
//! configurations, corpus and turn loading, dataset assembly and run
//! sidecars for trained models.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{load_session, session_paths, write_atomic, Session};
use crate::error::{Error, Result};
use crate::features::MotionConfig;
use crate::harness::{Dataset, TrainConfig};
use crate::model::{Modality, ModelConfig};
use crate::pipeline::{build_examples, standardize_audio, FeatureConfig, Standardizer};
use crate::segment::{parse_turns_jsonl, TurnRecord};
use crate::vqvae::{GestureTokenSequence, VqVae};

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

fn default_iterations() -> usize {
    10_000
}

/// Everything `train` needs. Relative paths resolve against the working
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub id: Option<String>,
    pub turns: PathBuf,
    pub corpus: PathBuf,
    /// Gesture VQ-VAE checkpoint; required when the gesture modality is used.
    #[serde(default)]
    pub vq: Option<PathBuf>,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_iterations")]
    pub significance_iterations: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.model.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.train.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be positive"));
        }
        if !(self.train.lr > 0.0) {
            return Err(Error::config("train.lr", "must be positive"));
        }
        if self.model.uses(Modality::Gesture) && self.vq.is_none() {
            return Err(Error::config("vq", "the gesture modality needs a VQ-VAE checkpoint"));
        }
        Ok(())
    }

    pub fn id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            let mods: Vec<&str> = self.model.active().iter().map(|m| m.name()).collect();
            format!("{}-{:?}", mods.join("+"), self.model.fusion).to_lowercase()
        })
    }
}

/// Parses JSON into `T`. Unknown or ill-typed keys become configuration
/// errors naming the dotted key path.
pub fn parse_config<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_data() && key != "." {
            let msg = inner.to_string();
            let msg = msg.split(" at line ").next().unwrap_or(&msg).to_string();
            Error::config(key, msg)
        } else {
            Error::Parse {
                path: path.to_path_buf(),
                message: inner.to_string(),
            }
        }
    })
}

/// All `*.session.json` files of a directory with their sidecar streams.
pub fn load_corpus(dir: &Path) -> Result<Vec<Session>> {
    let paths = session_paths(dir)?;
    if paths.is_empty() {
        return Err(Error::Invalid(format!("{}: no *.session.json files", dir.display())));
    }
    paths.iter().map(|p| load_session(p)).collect()
}

pub fn load_turns(path: &Path) -> Result<Vec<TurnRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_turns_jsonl(&text).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Features with the motion joints and frame rate a VQ-VAE was trained on.
pub fn features_for(base: &FeatureConfig, vq_motion: Option<&MotionConfig>) -> FeatureConfig {
    let mut f = base.clone();
    if let Some(m) = vq_motion {
        f.motion.joints = m.joints.clone();
        f.motion.frame_rate_hz = m.frame_rate_hz;
    }
    f
}

/// Examples of every turn, grouped by session in corpus order, with audio
/// standardized by `standardizer` or, when absent, by training-split
/// statistics (returned).
pub fn build_dataset(
    sessions: &[Session],
    records: &[TurnRecord],
    features: &FeatureConfig,
    vq: Option<&VqVae<f32>>,
    standardizer: Option<&Standardizer>,
) -> Result<(Dataset, Option<Standardizer>)> {
    let mut by_session: BTreeMap<&str, Vec<&TurnRecord>> = BTreeMap::new();
    for r in records {
        by_session.entry(r.session_id.as_str()).or_default().push(r);
    }
    let mut examples = Vec::with_capacity(records.len());
    for s in sessions {
        if let Some(recs) = by_session.remove(s.session_id.as_str()) {
            examples.extend(build_examples(s, &recs, features, vq, None)?);
        }
    }
    if let Some(id) = by_session.keys().next() {
        return Err(Error::Invalid(format!("turns reference session `{id}` missing from the corpus")));
    }
    let st = match standardizer {
        Some(st) => {
            for e in examples.iter_mut() {
                st.apply(&mut e.audio);
            }
            Some(st.clone())
        }
        None => standardize_audio(&mut examples),
    };
    let codebook = vq.map(|v| v.codebook().clone());
    let ds = Dataset::new(examples, features.gesture_len(features.motion.frame_rate_hz), codebook)?;
    Ok((ds, st))
}

/// Stored next to a trained turn model as `<checkpoint>.run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSidecar {
    pub run: RunConfig,
    pub features: FeatureConfig,
    pub audio_standardizer: Option<Standardizer>,
    pub seed: u64,
}

pub fn run_sidecar_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

impl RunSidecar {
    pub fn save(&self, model: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Invalid(e.to_string()))?;
        write_atomic(&run_sidecar_path(model), json)
    }

    pub fn load(model: &Path) -> Result<Self> {
        let p = run_sidecar_path(model);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
        parse_config(&text, &p)
    }
}

/// One line of a token file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub session_id: String,
    pub speaker_id: String,
    pub onset: f64,
    pub offset: f64,
    pub token_ids: Vec<usize>,
    pub mask: Vec<bool>,
    pub empty: bool,
}

impl TokenRecord {
    pub fn new(rec: &TurnRecord, seq: GestureTokenSequence) -> Self {
        Self {
            session_id: rec.session_id.clone(),
            speaker_id: rec.speaker_id.clone(),
            onset: rec.onset,
            offset: rec.offset,
            token_ids: seq.token_ids,
            mask: seq.mask,
            empty: seq.empty,
        }
    }
}
