//! Training, evaluation, seed aggregation, significance testing and analysis
//! exports for the turn model.

use std::collections::BTreeMap;
use std::io::Write;

use semturn_tensor::{AdamW, AdamWConfig, Graph, Rng, Scalar, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Batch, Fusion, InputDims, Modality, ModelConfig, TurnModel};
use crate::pipeline::TurnExample;
use crate::segment::{Split, TurnLabel};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Percent.
    pub accuracy: f64,
    pub macro_f1: f64,
    pub f1_hold: f64,
    pub f1_yield: f64,
    /// `confusion[true][predicted]`, hold = 0, yield = 1.
    pub confusion: [[f64; 2]; 2],
}

fn f1(tp: f64, fp: f64, fn_: f64) -> f64 {
    let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let r = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

impl Metrics {
    pub fn from_confusion(c: [[f64; 2]; 2]) -> Self {
        let total = c[0][0] + c[0][1] + c[1][0] + c[1][1];
        let accuracy = if total > 0.0 { 100.0 * (c[0][0] + c[1][1]) / total } else { 0.0 };
        let f1_hold = 100.0 * f1(c[0][0], c[1][0], c[0][1]);
        let f1_yield = 100.0 * f1(c[1][1], c[0][1], c[1][0]);
        Self {
            accuracy,
            macro_f1: (f1_hold + f1_yield) / 2.0,
            f1_hold,
            f1_yield,
            confusion: c,
        }
    }

    pub fn total(&self) -> f64 {
        self.confusion.iter().flatten().sum()
    }
}

/// Metrics of predictions against labels (class indices).
pub fn compute_metrics(labels: &[usize], preds: &[usize]) -> Result<Metrics> {
    if labels.len() != preds.len() {
        return Err(Error::Invalid(format!("{} labels vs {} predictions", labels.len(), preds.len())));
    }
    let mut c = [[0f64; 2]; 2];
    for (l, p) in labels.iter().zip(preds) {
        if *l > 1 || *p > 1 {
            return Err(Error::Invalid(format!("class index out of range: label {l}, prediction {p}")));
        }
        c[*l][*p] += 1.0;
    }
    Ok(Metrics::from_confusion(c))
}

/// Arithmetic mean of each field.
pub fn mean_metrics(all: &[Metrics]) -> Metrics {
    let n = all.len().max(1) as f64;
    let mut m = Metrics::default();
    for x in all {
        m.accuracy += x.accuracy / n;
        m.macro_f1 += x.macro_f1 / n;
        m.f1_hold += x.f1_hold / n;
        m.f1_yield += x.f1_yield / n;
        for i in 0..2 {
            for j in 0..2 {
                m.confusion[i][j] += x.confusion[i][j] / n;
            }
        }
    }
    m
}

/// Approximate randomization test on the macro-F1 difference: each example's
/// pair of predictions is swapped with probability 1/2;
/// `p = (count(|d_perm| >= |d_obs|) + 1) / (iterations + 1)`.
pub fn significance(preds_a: &[usize], preds_b: &[usize], labels: &[usize], iterations: usize, seed: u64) -> Result<f64> {
    if preds_a.len() != labels.len() || preds_b.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "length mismatch: {} / {} predictions for {} labels",
            preds_a.len(),
            preds_b.len(),
            labels.len()
        )));
    }
    let observed = (compute_metrics(labels, preds_a)?.macro_f1 - compute_metrics(labels, preds_b)?.macro_f1).abs();
    let mut rng = Rng::with_stream(seed, 0x51a);
    let mut count = 0usize;
    let mut pa = preds_a.to_vec();
    let mut pb = preds_b.to_vec();
    for _ in 0..iterations {
        for i in 0..labels.len() {
            if rng.bernoulli(0.5) {
                pa[i] = preds_b[i];
                pb[i] = preds_a[i];
            } else {
                pa[i] = preds_a[i];
                pb[i] = preds_b[i];
            }
        }
        let d = (compute_metrics(labels, &pa)?.macro_f1 - compute_metrics(labels, &pb)?.macro_f1).abs();
        if d >= observed - 1e-12 {
            count += 1;
        }
    }
    Ok((count + 1) as f64 / (iterations + 1) as f64)
}

/// Examples plus the shapes the model needs.
pub struct Dataset {
    pub examples: Vec<TurnExample>,
    pub dims: InputDims,
    /// `[K, D]` frozen codebook for the gesture expert.
    pub codebook: Option<Tensor<f32>>,
}

impl Dataset {
    pub fn new(examples: Vec<TurnExample>, gesture_len: usize, codebook: Option<Tensor<f32>>) -> Result<Self> {
        let first = examples.first().ok_or_else(|| Error::Invalid("dataset is empty".into()))?;
        let (text, audio) = (first.text.len(), first.audio.len());
        if let Some(e) = examples.iter().find(|e| e.text.len() != text || e.audio.len() != audio) {
            return Err(Error::Invalid(format!("inconsistent feature widths at {}", e.key())));
        }
        let (k, d) = codebook.as_ref().map_or((0, 0), |c| (c.shape()[0], c.shape()[1]));
        for e in &examples {
            if let Some(g) = &e.gesture {
                if g.token_ids.len() != gesture_len || g.mask.len() != gesture_len {
                    return Err(Error::Invalid(format!(
                        "{} has {} gesture tokens, expected {gesture_len}",
                        e.key(),
                        g.token_ids.len()
                    )));
                }
                if let Some(&bad) = g.token_ids.iter().find(|&&t| t >= k.max(1)) {
                    return Err(Error::Invalid(format!("token {bad} out of codebook range {k}")));
                }
            }
        }
        Ok(Self {
            examples,
            dims: InputDims {
                text,
                audio,
                gesture_len,
                codebook_size: k,
                codebook_dim: d,
            },
            codebook,
        })
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.examples.len()).filter(|&i| self.examples[i].split == split).collect()
    }

    pub fn labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.examples[i].label.index()).collect()
    }

    pub fn batch<T: Scalar>(&self, idx: &[usize], cfg: &ModelConfig) -> Batch<T> {
        let l = self.dims.gesture_len;
        let conv = |v: &[f32]| v.iter().map(|x| T::of(*x as f64)).collect::<Vec<T>>();
        let mut b = Batch {
            size: idx.len(),
            ..Default::default()
        };
        for &i in idx {
            let e = &self.examples[i];
            if cfg.uses(Modality::Text) {
                b.text.extend(conv(&e.text));
            }
            if cfg.uses(Modality::Audio) {
                b.audio.extend(conv(&e.audio));
            }
            if cfg.uses(Modality::Gesture) {
                match &e.gesture {
                    Some(g) => {
                        b.gesture_ids.extend(&g.token_ids);
                        b.gesture_mask.extend(&g.mask);
                        b.gesture_present.push(true);
                    }
                    None => {
                        b.gesture_ids.extend(std::iter::repeat(0).take(l));
                        b.gesture_mask.extend(std::iter::repeat(false).take(l));
                        b.gesture_present.push(false);
                    }
                }
            }
        }
        b
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    /// Inverse-frequency class weights in the loss.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            batch_size: 32,
            epochs: 20,
            weight_decay: 0.01,
            class_weighting: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
}

pub struct Trained<T: Scalar> {
    pub model: TurnModel<T>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_macro_f1: f64,
}

const EVAL_BATCH: usize = 256;

/// Predictions and per-example gate weights over `idx`.
pub fn predict<T: Scalar>(model: &TurnModel<T>, ds: &Dataset, idx: &[usize]) -> Result<(Vec<usize>, Option<Vec<Vec<f64>>>)> {
    let mut preds = Vec::with_capacity(idx.len());
    let mut gates: Option<Vec<Vec<f64>>> = None;
    for chunk in idx.chunks(EVAL_BATCH) {
        let (p, g) = model.predict(&ds.batch(chunk, &model.config))?;
        preds.extend(p);
        if let Some(g) = g {
            gates.get_or_insert_with(Vec::new).extend(g);
        }
    }
    Ok((preds, gates))
}

pub fn evaluate<T: Scalar>(model: &TurnModel<T>, ds: &Dataset, split: Split) -> Result<Metrics> {
    let idx = ds.indices(split);
    if idx.is_empty() {
        return Err(Error::Invalid(format!("split {split:?} is empty")));
    }
    let (preds, _) = predict(model, ds, &idx)?;
    compute_metrics(&ds.labels(&idx), &preds)
}

/// Trains with AdamW on the training split and returns the parameters of
/// the epoch with the best validation macro-F1 (earliest on ties).
pub fn train_turn_model<T: Scalar>(
    ds: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<Trained<T>> {
    let train = ds.indices(Split::Train);
    if train.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    let val = ds.indices(Split::Val);
    let eval_idx = if val.is_empty() { train.clone() } else { val };
    let eval_labels = ds.labels(&eval_idx);
    let codebook = ds.codebook.as_ref().map(|c| c.cast::<T>());
    let mut model = TurnModel::<T>::new(model_cfg, &ds.dims, codebook.as_ref(), seed)?;
    let mut opt = AdamW::new(
        &model.store,
        AdamWConfig {
            lr: train_cfg.lr,
            weight_decay: train_cfg.weight_decay,
            ..Default::default()
        },
    );
    let class_weights: Option<Vec<T>> = train_cfg.class_weighting.then(|| {
        let labels = ds.labels(&train);
        let n = labels.len() as f64;
        (0..2)
            .map(|c| {
                let k = labels.iter().filter(|l| **l == c).count().max(1) as f64;
                T::of(n / (2.0 * k))
            })
            .collect()
    });
    let mut rng = Rng::with_stream(seed, 0x7a1);
    let mut order = train.clone();
    let mut history = Vec::with_capacity(train_cfg.epochs);
    let mut best: Option<(usize, f64, semturn_tensor::ParamStore<T>)> = None;
    for epoch in 1..=train_cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(train_cfg.batch_size.max(1)).enumerate() {
            let batch = ds.batch::<T>(chunk, model_cfg);
            let labels = ds.labels(chunk);
            let g = Graph::new();
            let f = model.forward(&g, &batch)?;
            let loss = f.logits.cross_entropy(&labels, None, class_weights.as_deref())?;
            let lv = loss.value().data()[0].f64();
            if !lv.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    loss: lv,
                });
            }
            let grads = g.backward(loss)?.params(&model.store);
            opt.step(&mut model.store, &grads);
            loss_sum += lv;
            batches += 1;
        }
        let (preds, _) = predict(&model, ds, &eval_idx)?;
        let val_f1 = compute_metrics(&eval_labels, &preds)?.macro_f1;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches.max(1) as f64,
            val_macro_f1: val_f1,
        });
        if best.as_ref().map_or(true, |(_, b, _)| val_f1 > *b) {
            best = Some((epoch, val_f1, model.store.clone()));
        }
    }
    let (best_epoch, best_val_macro_f1) = match best {
        Some((e, f, store)) => {
            model.store = store;
            (e, f)
        }
        None => (0, 0.0),
    };
    Ok(Trained {
        model,
        history,
        best_epoch,
        best_val_macro_f1,
    })
}

/// Mean gate weight per modality over `split`. Errors for non-MoE models.
pub fn modality_weight_means<T: Scalar>(
    model: &TurnModel<T>,
    ds: &Dataset,
    split: Split,
) -> Result<BTreeMap<String, f64>> {
    if model.config.fusion != Fusion::Moe {
        return Err(Error::Invalid("modality weights exist only for MoE fusion".into()));
    }
    let idx = ds.indices(split);
    if idx.is_empty() {
        return Err(Error::Invalid(format!("split {split:?} is empty")));
    }
    let (_, gates) = predict(model, ds, &idx)?;
    let gates = gates.expect("MoE yields gate weights");
    let active = model.config.active();
    let mut means = vec![0f64; active.len()];
    for row in &gates {
        for (m, w) in means.iter_mut().zip(row) {
            *m += w;
        }
    }
    Ok(active
        .iter()
        .zip(means)
        .map(|(m, s)| (m.name().to_string(), s / gates.len() as f64))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: Metrics,
    pub best_epoch: usize,
    pub val_macro_f1: f64,
    pub history: Vec<EpochRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality_weights: Option<BTreeMap<String, f64>>,
    /// Test predictions, aligned with `ExperimentReport::test_keys`.
    pub predictions: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub baseline_id: String,
    pub p_value: f64,
    pub iterations: usize,
    pub seed: u64,
    pub test: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub id: String,
    /// Full resolved configuration of the run.
    pub config: serde_json::Value,
    pub seeds: Vec<SeedResult>,
    pub mean_metrics: Metrics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modality_weights: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub significance: Option<SignificanceResult>,
    pub test_keys: Vec<String>,
    pub test_labels: Vec<u8>,
    pub threads: usize,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: "report".into(),
            message: e.to_string(),
        })
    }

    /// Predictions of the seeds both reports share, concatenated in seed
    /// order, with matching labels.
    pub fn pooled_against(&self, other: &ExperimentReport) -> Result<(Vec<usize>, Vec<usize>, Vec<usize>)> {
        if self.test_keys != other.test_keys || self.test_labels != other.test_labels {
            return Err(Error::Invalid("reports were evaluated on different test sets".into()));
        }
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut labels = Vec::new();
        for sa in &self.seeds {
            if let Some(sb) = other.seeds.iter().find(|s| s.seed == sa.seed) {
                a.extend(sa.predictions.iter().map(|p| *p as usize));
                b.extend(sb.predictions.iter().map(|p| *p as usize));
                labels.extend(self.test_labels.iter().map(|l| *l as usize));
            }
        }
        if labels.is_empty() {
            return Err(Error::Invalid("reports share no seeds".into()));
        }
        Ok((a, b, labels))
    }
}

/// Trains and evaluates one model per seed.
pub fn run_seeds(
    id: &str,
    ds: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seeds: &[u64],
    config_snapshot: serde_json::Value,
) -> Result<ExperimentReport> {
    let (report, _) = run_seeds_with_models::<f32>(id, ds, model_cfg, train_cfg, seeds, config_snapshot)?;
    Ok(report)
}

/// As [`run_seeds`], also returning the trained models.
pub fn run_seeds_with_models<T: Scalar>(
    id: &str,
    ds: &Dataset,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seeds: &[u64],
    config_snapshot: serde_json::Value,
) -> Result<(ExperimentReport, Vec<TurnModel<T>>)> {
    if seeds.is_empty() {
        return Err(Error::Invalid("at least one seed is required".into()));
    }
    let test = ds.indices(Split::Test);
    if test.is_empty() {
        return Err(Error::Invalid("test split is empty".into()));
    }
    let labels = ds.labels(&test);
    let mut results = Vec::with_capacity(seeds.len());
    let mut models = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let wrap = |e: Error| Error::Invalid(format!("seed {seed}: {e}"));
        let trained = train_turn_model::<T>(ds, model_cfg, train_cfg, seed).map_err(wrap)?;
        let (preds, _) = predict(&trained.model, ds, &test).map_err(wrap)?;
        let metrics = compute_metrics(&labels, &preds)?;
        let modality_weights = if model_cfg.fusion == Fusion::Moe {
            Some(modality_weight_means(&trained.model, ds, Split::Test).map_err(wrap)?)
        } else {
            None
        };
        results.push(SeedResult {
            seed,
            metrics,
            best_epoch: trained.best_epoch,
            val_macro_f1: trained.best_val_macro_f1,
            history: trained.history,
            modality_weights,
            predictions: preds.iter().map(|p| *p as u8).collect(),
        });
        models.push(trained.model);
    }
    let mean = mean_metrics(&results.iter().map(|r| r.metrics).collect::<Vec<_>>());
    let modality_weights = if model_cfg.fusion == Fusion::Moe {
        let mut acc: BTreeMap<String, f64> = BTreeMap::new();
        for r in &results {
            for (k, v) in r.modality_weights.as_ref().expect("MoE weights") {
                *acc.entry(k.clone()).or_default() += v / results.len() as f64;
            }
        }
        Some(acc)
    } else {
        None
    };
    Ok((
        ExperimentReport {
            id: id.to_string(),
            config: config_snapshot,
            seeds: results,
            mean_metrics: mean,
            modality_weights,
            significance: None,
            test_keys: test.iter().map(|&i| ds.examples[i].key()).collect(),
            test_labels: labels.iter().map(|l| *l as u8).collect(),
            threads: 1,
        },
        models,
    ))
}

/// Runs [`significance`] on pooled predictions of two reports.
pub fn compare_reports(a: &ExperimentReport, b: &ExperimentReport, iterations: usize, seed: u64) -> Result<SignificanceResult> {
    let (pa, pb, labels) = a.pooled_against(b)?;
    Ok(SignificanceResult {
        baseline_id: b.id.clone(),
        p_value: significance(&pa, &pb, &labels, iterations, seed)?,
        iterations,
        seed,
        test: "approximate randomization on macro-F1".into(),
    })
}

/// Predictions of the majority (hold) baseline.
pub fn majority_predictions(n: usize) -> Vec<usize> {
    vec![TurnLabel::Hold.index(); n]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub x: f64,
    pub y: f64,
    #[serde(rename = "type")]
    pub gtype: String,
}

/// Pooled codebook embeddings of each example's gesture tokens, projected
/// onto two principal axes. Turns without motion are skipped; turns without
/// an attached gesture are labeled `none` and dropped when `omit_none`.
pub fn embedding_projection(ds: &Dataset, split: Option<Split>, omit_none: bool) -> Result<Vec<ProjectionRow>> {
    let cb = ds
        .codebook
        .as_ref()
        .ok_or_else(|| Error::Invalid("no gesture codebook available".into()))?;
    let d = cb.shape()[1];
    let mut points = Vec::new();
    let mut types = Vec::new();
    for e in &ds.examples {
        if split.is_some_and(|s| e.split != s) {
            continue;
        }
        let Some(g) = &e.gesture else { continue };
        if omit_none && e.gesture_type.is_none() {
            continue;
        }
        let mut v = vec![0f64; d];
        let mut n = 0usize;
        for (t, m) in g.token_ids.iter().zip(&g.mask) {
            if *m {
                n += 1;
                for (a, b) in v.iter_mut().zip(cb.row(*t)) {
                    *a += *b as f64;
                }
            }
        }
        v.iter_mut().for_each(|x| *x /= n.max(1) as f64);
        points.push(v);
        types.push(e.gesture_type.map_or("none", |t| t.name()).to_string());
    }
    let proj = crate::analysis::pca_2d(&points)?;
    Ok(proj
        .into_iter()
        .zip(types)
        .map(|(p, t)| ProjectionRow {
            x: p[0],
            y: p[1],
            gtype: t,
        })
        .collect())
}

pub fn write_projection_csv(rows: &[ProjectionRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Invalid(e.to_string()))?;
    }
    out.flush().map_err(|e| Error::Invalid(e.to_string()))
}

pub fn write_weights_csv(weights: &BTreeMap<String, f64>, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Invalid(e.to_string());
    out.write_record(["modality", "weight"]).map_err(err)?;
    for (k, v) in weights {
        out.write_record([k.as_str(), &v.to_string()]).map_err(err)?;
    }
    out.flush().map_err(|e| Error::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictor() {
        let l = [0, 1, 1, 0];
        let m = compute_metrics(&l, &l).unwrap();
        assert_eq!((m.accuracy, m.macro_f1, m.f1_hold, m.f1_yield), (100.0, 100.0, 100.0, 100.0));
    }

    #[test]
    fn inverted_predictor_on_balanced_set() {
        let l = [0, 1, 0, 1];
        let p = [1, 0, 1, 0];
        let m = compute_metrics(&l, &p).unwrap();
        assert_eq!((m.accuracy, m.f1_hold, m.f1_yield), (0.0, 0.0, 0.0));
    }

    #[test]
    fn identical_predictions_give_p_one() {
        let l = [0, 1, 0, 1, 1];
        let p = [0, 1, 1, 1, 0];
        assert_eq!(significance(&p, &p, &l, 200, 0).unwrap(), 1.0);
    }

    #[test]
    fn significance_length_mismatch() {
        assert!(significance(&[0], &[0, 1], &[0, 1], 10, 0).is_err());
    }

    #[test]
    fn mean_of_one_is_identity() {
        let m = compute_metrics(&[0, 1, 1], &[0, 1, 0]).unwrap();
        assert_eq!(mean_metrics(&[m]), m);
    }
}
