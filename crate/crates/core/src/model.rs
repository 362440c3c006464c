//! Hold/yield classifier: per-modality experts, a softmax gate and three
//! fusion strategies.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use semturn_tensor::{load_checkpoint, Graph, Init, ParamId, ParamStore, Rng, Scalar, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Audio,
    Gesture,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Text, Modality::Audio, Modality::Gesture];

    pub fn name(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Audio => "audio",
            Modality::Gesture => "gesture",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s.trim().to_lowercase())
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    Moe,
    Concat,
    Lmf,
}

impl Fusion {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_lowercase().as_str() {
            "moe" => Some(Fusion::Moe),
            "concat" => Some(Fusion::Concat),
            "lmf" => Some(Fusion::Lmf),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub modalities: Vec<Modality>,
    pub fusion: Fusion,
    /// Common expert output width.
    pub d: usize,
    pub lmf_rank: usize,
    /// Whether gesture tokens come from a semantically aligned VQ-VAE.
    pub semantic_gestures: bool,
    pub gesture_heads: usize,
    pub gesture_ff: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            modalities: vec![Modality::Text, Modality::Audio, Modality::Gesture],
            fusion: Fusion::Moe,
            d: 256,
            lmf_rank: 4,
            semantic_gestures: true,
            gesture_heads: 4,
            gesture_ff: 128,
        }
    }
}

impl ModelConfig {
    /// Active modalities in canonical order, deduplicated.
    pub fn active(&self) -> Vec<Modality> {
        Modality::ALL.into_iter().filter(|m| self.modalities.contains(m)).collect()
    }

    pub fn uses(&self, m: Modality) -> bool {
        self.modalities.contains(&m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::config("modalities", "at least one modality is required"));
        }
        if self.d == 0 {
            return Err(Error::config("d", "must be positive"));
        }
        if self.fusion == Fusion::Lmf && self.lmf_rank == 0 {
            return Err(Error::config("lmf_rank", "must be at least 1"));
        }
        if self.gesture_heads == 0 || self.gesture_ff == 0 {
            return Err(Error::config("gesture_heads", "heads and ff width must be positive"));
        }
        Ok(())
    }
}

/// Input widths the model is built for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputDims {
    pub text: usize,
    pub audio: usize,
    /// Gesture tokens per turn.
    pub gesture_len: usize,
    pub codebook_size: usize,
    pub codebook_dim: usize,
}

/// One batch of model inputs. Absent modalities may be left empty.
#[derive(Clone, Debug, Default)]
pub struct Batch<T> {
    pub size: usize,
    /// `[B, text]` row-major.
    pub text: Vec<T>,
    /// `[B, audio]` row-major.
    pub audio: Vec<T>,
    /// `[B, gesture_len]` token ids.
    pub gesture_ids: Vec<usize>,
    pub gesture_mask: Vec<bool>,
    /// False where a turn has no motion.
    pub gesture_present: Vec<bool>,
}

#[derive(Clone, Copy, Debug)]
struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    fn new<T: Scalar>(s: &mut ParamStore<T>, name: &str, i: usize, o: usize, rng: &mut Rng) -> Self {
        Self {
            w: s.init(format!("{name}.w"), vec![i, o], Init::KaimingUniform { fan_in: i }, rng),
            b: s.init(format!("{name}.b"), vec![o], Init::Zeros, rng),
        }
    }

    fn zeros<T: Scalar>(s: &mut ParamStore<T>, name: &str, i: usize, o: usize, rng: &mut Rng) -> Self {
        Self {
            w: s.init(format!("{name}.w"), vec![i, o], Init::Zeros, rng),
            b: s.init(format!("{name}.b"), vec![o], Init::Zeros, rng),
        }
    }

    fn apply<'g, T: Scalar>(&self, g: &'g Graph<T>, s: &ParamStore<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        Ok(x.matmul(g.param(s, self.w))?.add_bias(g.param(s, self.b))?)
    }
}

#[derive(Clone, Copy, Debug)]
struct Mlp {
    l1: Linear,
    l2: Linear,
}

impl Mlp {
    fn apply<'g, T: Scalar>(&self, g: &'g Graph<T>, s: &ParamStore<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let h = self.l1.apply(g, s, x)?.gelu();
        self.l2.apply(g, s, h)
    }
}

#[derive(Clone, Copy, Debug)]
struct LayerNorm {
    gamma: ParamId,
    beta: ParamId,
}

impl LayerNorm {
    fn new<T: Scalar>(s: &mut ParamStore<T>, name: &str, d: usize, rng: &mut Rng) -> Self {
        Self {
            gamma: s.init(format!("{name}.gamma"), vec![d], Init::Ones, rng),
            beta: s.init(format!("{name}.beta"), vec![d], Init::Zeros, rng),
        }
    }

    fn apply<'g, T: Scalar>(&self, g: &'g Graph<T>, s: &ParamStore<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        Ok(x.layer_norm(g.param(s, self.gamma), g.param(s, self.beta))?)
    }
}

#[derive(Clone, Debug)]
struct GestureExpert {
    codebook: ParamId,
    positions: ParamId,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    ln1: LayerNorm,
    ff1: Linear,
    ff2: Linear,
    ln2: LayerNorm,
    out: Linear,
    absent: ParamId,
}

#[derive(Clone, Debug)]
enum FusionParams {
    Moe { gate: Linear },
    Concat { proj: Linear },
    /// Factors indexed `[modality][rank]`, each `[d+1, d]`.
    Lmf { factors: Vec<Vec<ParamId>> },
}

pub struct TurnModel<T: Scalar> {
    pub config: ModelConfig,
    pub dims: InputDims,
    pub store: ParamStore<T>,
    text: Option<Mlp>,
    audio: Option<Mlp>,
    gesture: Option<GestureExpert>,
    fusion: FusionParams,
    classifier: Linear,
}

/// Forward pass results.
pub struct Forward<'g, T: Scalar> {
    /// `[B, 2]` hold/yield logits.
    pub logits: Var<'g, T>,
    /// `[B, M]` gate weights (MoE only).
    pub gate: Option<Var<'g, T>>,
    /// Per active modality, `[B, d]`.
    pub experts: Vec<(Modality, Var<'g, T>)>,
    pub fused: Var<'g, T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSidecar {
    pub config: ModelConfig,
    pub dims: InputDims,
    pub seed: u64,
}

impl<T: Scalar> TurnModel<T> {
    /// Builds a model. `codebook` (`[K, D]`, frozen) is required when the
    /// gesture modality is active.
    pub fn new(config: &ModelConfig, dims: &InputDims, codebook: Option<&Tensor<T>>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(seed);
        let mut s = ParamStore::new();
        let d = config.d;
        let mlp = |s: &mut ParamStore<T>, name: &str, i: usize, rng: &mut Rng| Mlp {
            l1: Linear::new(s, &format!("{name}.l1"), i, d, rng),
            l2: Linear::new(s, &format!("{name}.l2"), d, d, rng),
        };
        let text = config.uses(Modality::Text).then(|| mlp(&mut s, "text", dims.text, &mut rng));
        let audio = config.uses(Modality::Audio).then(|| mlp(&mut s, "audio", dims.audio, &mut rng));
        let gesture = if config.uses(Modality::Gesture) {
            let cb = codebook.ok_or_else(|| Error::config("modalities", "gesture modality needs a codebook"))?;
            if cb.shape() != [dims.codebook_size, dims.codebook_dim] {
                return Err(Error::config(
                    "codebook",
                    format!("expected [{}, {}], got {:?}", dims.codebook_size, dims.codebook_dim, cb.shape()),
                ));
            }
            let dc = dims.codebook_dim;
            if dc % config.gesture_heads != 0 {
                return Err(Error::config("gesture_heads", format!("must divide codebook dim {dc}")));
            }
            let codebook = s.add("gesture.codebook", cb.clone());
            s.set_trainable(codebook, false);
            Some(GestureExpert {
                codebook,
                positions: s.init("gesture.pos", vec![dims.gesture_len.max(1), dc], Init::Normal { std: 0.02 }, &mut rng),
                q: Linear::new(&mut s, "gesture.q", dc, dc, &mut rng),
                k: Linear::new(&mut s, "gesture.k", dc, dc, &mut rng),
                v: Linear::new(&mut s, "gesture.v", dc, dc, &mut rng),
                o: Linear::new(&mut s, "gesture.o", dc, dc, &mut rng),
                ln1: LayerNorm::new(&mut s, "gesture.ln1", dc, &mut rng),
                ff1: Linear::new(&mut s, "gesture.ff1", dc, config.gesture_ff, &mut rng),
                ff2: Linear::new(&mut s, "gesture.ff2", config.gesture_ff, dc, &mut rng),
                ln2: LayerNorm::new(&mut s, "gesture.ln2", dc, &mut rng),
                out: Linear::new(&mut s, "gesture.out", dc, d, &mut rng),
                absent: s.init("gesture.absent", vec![1, d], Init::Normal { std: 0.02 }, &mut rng),
            })
        } else {
            None
        };
        let m = config.active().len();
        let fusion = match config.fusion {
            Fusion::Moe => FusionParams::Moe {
                gate: Linear::zeros(&mut s, "gate", m * d, m, &mut rng),
            },
            Fusion::Concat => FusionParams::Concat {
                proj: Linear::new(&mut s, "concat", m * d, d, &mut rng),
            },
            Fusion::Lmf => FusionParams::Lmf {
                factors: config
                    .active()
                    .iter()
                    .map(|md| {
                        (0..config.lmf_rank)
                            .map(|r| {
                                s.init(
                                    format!("lmf.{md}.{r}"),
                                    vec![d + 1, d],
                                    Init::KaimingUniform { fan_in: d + 1 },
                                    &mut rng,
                                )
                            })
                            .collect()
                    })
                    .collect(),
            },
        };
        let classifier = Linear::new(&mut s, "classifier", d, 2, &mut rng);
        Ok(Self {
            config: config.clone(),
            dims: dims.clone(),
            store: s,
            text,
            audio,
            gesture,
            fusion,
            classifier,
        })
    }

    fn gesture_forward<'g>(&self, g: &'g Graph<T>, ge: &GestureExpert, batch: &Batch<T>) -> Result<Var<'g, T>> {
        let s = &self.store;
        let (b, l, dc, d) = (batch.size, self.dims.gesture_len, self.dims.codebook_dim, self.config.d);
        if batch.gesture_ids.len() != b * l || batch.gesture_mask.len() != b * l || batch.gesture_present.len() != b {
            return Err(Error::Invalid(format!(
                "gesture batch expects {b}x{l} ids and mask, got {} and {}",
                batch.gesture_ids.len(),
                batch.gesture_mask.len()
            )));
        }
        let pos_ids: Vec<usize> = (0..b).flat_map(|_| 0..l).collect();
        let x = g
            .param(s, ge.codebook)
            .embedding(&batch.gesture_ids)?
            .add(g.param(s, ge.positions).embedding(&pos_ids)?)?
            .reshape(vec![b, l, dc])?;
        let mask = Some(batch.gesture_mask.as_slice());
        let (q, k, v) = (ge.q.apply(g, s, x)?, ge.k.apply(g, s, x)?, ge.v.apply(g, s, x)?);
        let att = ge.o.apply(g, s, q.attention(k, v, self.config.gesture_heads, mask)?)?;
        let h = ge.ln1.apply(g, s, x.add(att)?)?;
        let ff = ge.ff2.apply(g, s, ge.ff1.apply(g, s, h)?.relu())?;
        let h = ge.ln2.apply(g, s, h.add(ff)?)?;
        let pooled = h.mean_pool(1, mask)?;
        let present: Vec<T> = batch
            .gesture_present
            .iter()
            .flat_map(|p| std::iter::repeat(if *p { T::one() } else { T::zero() }).take(d))
            .collect();
        let absent: Vec<T> = batch
            .gesture_present
            .iter()
            .map(|p| if *p { T::zero() } else { T::one() })
            .collect();
        let out = ge.out.apply(g, s, pooled)?.mul(g.constant(Tensor::new(vec![b, d], present)?))?;
        Ok(out.add(g.constant(Tensor::new(vec![b, 1], absent)?).matmul(g.param(s, ge.absent))?)?)
    }

    pub fn forward<'g>(&self, g: &'g Graph<T>, batch: &Batch<T>) -> Result<Forward<'g, T>> {
        let s = &self.store;
        let b = batch.size;
        let mut experts = Vec::new();
        if let Some(mlp) = &self.text {
            let x = g.constant(Tensor::new(vec![b, self.dims.text], batch.text.clone())?);
            experts.push((Modality::Text, mlp.apply(g, s, x)?));
        }
        if let Some(mlp) = &self.audio {
            let x = g.constant(Tensor::new(vec![b, self.dims.audio], batch.audio.clone())?);
            experts.push((Modality::Audio, mlp.apply(g, s, x)?));
        }
        if let Some(ge) = &self.gesture {
            experts.push((Modality::Gesture, self.gesture_forward(g, ge, batch)?));
        }
        let outs: Vec<Var<'g, T>> = experts.iter().map(|(_, v)| *v).collect();
        let (fused, gate) = match &self.fusion {
            FusionParams::Moe { gate } => {
                let w = gate.apply(g, s, Var::concat(&outs, 1)?)?.softmax(1)?;
                (w.weighted_sum(&outs)?, Some(w))
            }
            FusionParams::Concat { proj } => (proj.apply(g, s, Var::concat(&outs, 1)?)?.gelu(), None),
            FusionParams::Lmf { factors } => {
                let ones = g.constant(Tensor::full(vec![b, 1], T::one()));
                let aug: Vec<Var<'g, T>> = outs
                    .iter()
                    .map(|o| Var::concat(&[*o, ones], 1))
                    .collect::<std::result::Result<_, _>>()?;
                let mut sum: Option<Var<'g, T>> = None;
                for r in 0..self.config.lmf_rank {
                    let mut prod: Option<Var<'g, T>> = None;
                    for (m, a) in aug.iter().enumerate() {
                        let z = a.matmul(g.param(s, factors[m][r]))?;
                        prod = Some(match prod {
                            Some(p) => p.mul(z)?,
                            None => z,
                        });
                    }
                    let p = prod.expect("at least one modality");
                    sum = Some(match sum {
                        Some(acc) => acc.add(p)?,
                        None => p,
                    });
                }
                (sum.expect("rank >= 1"), None)
            }
        };
        let logits = self.classifier.apply(g, s, fused)?;
        Ok(Forward {
            logits,
            gate,
            experts,
            fused,
        })
    }

    /// Class predictions (ties go to hold) and gate weights per example.
    pub fn predict(&self, batch: &Batch<T>) -> Result<(Vec<usize>, Option<Vec<Vec<f64>>>)> {
        let g = Graph::new();
        let f = self.forward(&g, batch)?;
        let logits = f.logits.to_tensor();
        let preds = (0..batch.size)
            .map(|i| {
                let r = logits.row(i);
                usize::from(r[1] > r[0])
            })
            .collect();
        let gate = f.gate.map(|w| {
            let t = w.to_tensor();
            (0..batch.size).map(|i| t.row(i).iter().map(|v| v.f64()).collect()).collect()
        });
        Ok((preds, gate))
    }

    /// Names of every parameter, grouped by the component that owns them.
    pub fn param_names(&self) -> BTreeMap<String, usize> {
        self.store.iter().map(|(_, p)| (p.name.clone(), p.value.len())).collect()
    }

    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        let mut buf = Vec::new();
        self.store.write_to(&mut buf)?;
        crate::corpus::write_atomic(path, buf)?;
        let side = ModelSidecar {
            config: self.config.clone(),
            dims: self.dims.clone(),
            seed,
        };
        let sp = crate::vqvae::sidecar_path(path);
        let json = serde_json::to_string_pretty(&side).map_err(|e| Error::Invalid(e.to_string()))?;
        crate::corpus::write_atomic(&sp, json)
    }

    pub fn load(path: &Path) -> Result<(Self, ModelSidecar)> {
        let sp = crate::vqvae::sidecar_path(path);
        let text = std::fs::read_to_string(&sp).map_err(|e| Error::Io { path: sp.clone(), source: e })?;
        let side: ModelSidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: sp.clone(),
            message: e.to_string(),
        })?;
        let tensors = load_checkpoint(path)?;
        let cb = if side.config.uses(Modality::Gesture) {
            let t = tensors
                .get("gesture.codebook")
                .ok_or_else(|| Error::Invalid("checkpoint has no gesture codebook".into()))?;
            Some(t.cast::<T>())
        } else {
            None
        };
        let mut m = Self::new(&side.config, &side.dims, cb.as_ref(), side.seed)?;
        m.store.load_values(&tensors)?;
        Ok((m, side))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> InputDims {
        InputDims {
            text: 5,
            audio: 3,
            gesture_len: 4,
            codebook_size: 6,
            codebook_dim: 8,
        }
    }

    fn cfg(mods: &[Modality], fusion: Fusion) -> ModelConfig {
        ModelConfig {
            modalities: mods.to_vec(),
            fusion,
            d: 8,
            lmf_rank: 2,
            gesture_ff: 16,
            ..Default::default()
        }
    }

    fn codebook() -> Tensor<f64> {
        let mut rng = Rng::new(9);
        Tensor::new(vec![6, 8], rng.normal_vec(48, 1.0)).unwrap()
    }

    fn batch(b: usize, seed: u64) -> Batch<f64> {
        let mut rng = Rng::new(seed);
        Batch {
            size: b,
            text: rng.normal_vec(b * 5, 1.0),
            audio: rng.normal_vec(b * 3, 1.0),
            gesture_ids: (0..b * 4).map(|_| rng.below(6)).collect(),
            gesture_mask: vec![true; b * 4],
            gesture_present: vec![true; b],
        }
    }

    #[test]
    fn zero_gate_is_uniform() {
        let m = TurnModel::new(&cfg(&Modality::ALL, Fusion::Moe), &dims(), Some(&codebook()), 0).unwrap();
        let (_, gate) = m.predict(&batch(3, 1)).unwrap();
        for row in gate.unwrap() {
            for w in row {
                assert!((w - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn text_audio_model_has_no_gesture_params() {
        let m = TurnModel::<f64>::new(&cfg(&[Modality::Text, Modality::Audio], Fusion::Moe), &dims(), None, 0).unwrap();
        assert!(m.param_names().keys().all(|k| !k.starts_with("gesture")));
        let g = Graph::new();
        let mut b = batch(2, 1);
        b.gesture_ids.clear();
        let f = m.forward(&g, &b).unwrap();
        assert_eq!(f.gate.unwrap().shape(), vec![2, 2]);
    }

    #[test]
    fn gesture_needs_codebook() {
        assert!(TurnModel::<f64>::new(&cfg(&Modality::ALL, Fusion::Moe), &dims(), None, 0).is_err());
    }

    #[test]
    fn masked_gesture_positions_do_not_matter() {
        let m = TurnModel::new(&cfg(&[Modality::Gesture], Fusion::Moe), &dims(), Some(&codebook()), 3).unwrap();
        let mut a = batch(2, 4);
        a.gesture_mask = vec![false, true, true, true, false, false, true, true];
        let mut b = a.clone();
        b.gesture_ids[0] = (b.gesture_ids[0] + 1) % 6;
        b.gesture_ids[4] = (b.gesture_ids[4] + 2) % 6;
        b.gesture_ids[5] = (b.gesture_ids[5] + 3) % 6;
        let g = Graph::new();
        let ea = m.forward(&g, &a).unwrap().experts[0].1.to_tensor();
        let eb = m.forward(&g, &b).unwrap().experts[0].1.to_tensor();
        for (x, y) in ea.data().iter().zip(eb.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn token_order_matters() {
        let m = TurnModel::new(&cfg(&[Modality::Gesture], Fusion::Moe), &dims(), Some(&codebook()), 3).unwrap();
        let a = Batch {
            gesture_ids: vec![0, 1, 2, 3],
            ..batch(1, 5)
        };
        let b = Batch {
            gesture_ids: vec![3, 2, 1, 0],
            ..batch(1, 5)
        };
        let g = Graph::new();
        let ea = m.forward(&g, &a).unwrap().experts[0].1.to_tensor();
        let eb = m.forward(&g, &b).unwrap().experts[0].1.to_tensor();
        assert!(ea.data().iter().zip(eb.data()).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn absent_gesture_uses_absent_embedding() {
        let m = TurnModel::new(&cfg(&[Modality::Gesture], Fusion::Moe), &dims(), Some(&codebook()), 3).unwrap();
        let mut b = batch(1, 6);
        b.gesture_present = vec![false];
        b.gesture_mask = vec![false; 4];
        let g = Graph::new();
        let e = m.forward(&g, &b).unwrap().experts[0].1.to_tensor();
        let absent = m.store.value(m.gesture.as_ref().unwrap().absent);
        assert_eq!(e.data(), absent.data());
    }

    #[test]
    fn all_fusions_produce_logits() {
        for fusion in [Fusion::Moe, Fusion::Concat, Fusion::Lmf] {
            let m = TurnModel::new(&cfg(&Modality::ALL, fusion), &dims(), Some(&codebook()), 1).unwrap();
            let g = Graph::new();
            let f = m.forward(&g, &batch(4, 2)).unwrap();
            assert_eq!(f.logits.shape(), vec![4, 2]);
            assert_eq!(f.fused.shape(), vec![4, 8]);
            assert!(f.logits.value().is_finite());
        }
    }
}
