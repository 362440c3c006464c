//! Residual convolutional VQ-VAE over pelvis-relative motion windows, with an
//! optional semantic head on the pooled quantized sequence.

use std::path::Path;

use semturn_tensor::{
    load_checkpoint, AdamW, AdamWConfig, Graph, Init, ParamId, ParamStore, Rng, Scalar, Tensor, Var,
};
use serde::{Deserialize, Serialize};

use crate::corpus::{GestureType, SpeakerTrack};
use crate::error::{Error, Result};
use crate::features::{extract_motion_window, frame_range, MotionConfig, MotionWindow};

/// Temporal downsampling of the encoder.
pub const DOWNSAMPLE: usize = 4;
/// Semantic classes: the four gesture types plus `none`.
pub const SEMANTIC_CLASSES: usize = 5;
pub const NONE_CLASS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookInit {
    /// Uniform in `[-1/K, 1/K]`.
    Uniform,
    /// Rows copied from encoder outputs of the first training batch.
    Data,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VqConfig {
    pub codebook_size: usize,
    pub dim: usize,
    /// Hidden channels of the convolutional stacks.
    pub channels: usize,
    pub residual_blocks: usize,
    pub beta: f64,
    pub recon_weight: f64,
    pub semantic_weight: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub codebook_init: CodebookInit,
    pub seed: u64,
}

impl Default for VqConfig {
    fn default() -> Self {
        Self {
            codebook_size: 256,
            dim: 256,
            channels: 128,
            residual_blocks: 2,
            beta: 0.25,
            recon_weight: 1.0,
            semantic_weight: 0.1,
            lr: 3e-4,
            weight_decay: 0.0,
            batch_size: 512,
            epochs: 120,
            codebook_init: CodebookInit::Data,
            seed: 0,
        }
    }
}

impl VqConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("codebook_size", self.codebook_size),
            ("dim", self.dim),
            ("channels", self.channels),
            ("batch_size", self.batch_size),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::config(k, "must be positive"));
            }
        }
        for (k, v) in [
            ("beta", self.beta),
            ("recon_weight", self.recon_weight),
            ("semantic_weight", self.semantic_weight),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(k, "must be finite and non-negative"));
            }
        }
        if !(self.lr > 0.0) {
            return Err(Error::config("lr", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
struct Conv {
    w: ParamId,
    b: ParamId,
    stride: usize,
    pad: usize,
}

impl Conv {
    fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        (c_in, c_out, k): (usize, usize, usize),
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Self {
        let w = store.init(format!("{name}.w"), vec![c_out, c_in, k], Init::KaimingUniform { fan_in: c_in * k }, rng);
        let b = store.init(format!("{name}.b"), vec![c_out], Init::Zeros, rng);
        Self { w, b, stride, pad }
    }

    fn apply<'g, T: Scalar>(&self, g: &'g Graph<T>, s: &ParamStore<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        Ok(x.conv1d(g.param(s, self.w), Some(g.param(s, self.b)), self.stride, self.pad)?)
    }
}

#[derive(Clone, Copy, Debug)]
struct Residual {
    a: Conv,
    b: Conv,
}

impl Residual {
    fn apply<'g, T: Scalar>(&self, g: &'g Graph<T>, s: &ParamStore<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let h = self.a.apply(g, s, x.relu())?.relu();
        Ok(x.add(self.b.apply(g, s, h)?)?)
    }
}

fn residuals<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, n: usize, c: usize, rng: &mut Rng) -> Vec<Residual> {
    (0..n)
        .map(|i| Residual {
            a: Conv::new(store, &format!("{prefix}.res{i}.a"), (c, c, 3), 1, 1, rng),
            b: Conv::new(store, &format!("{prefix}.res{i}.b"), (c, c, 1), 1, 0, rng),
        })
        .collect()
}

/// Metadata written next to a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqSidecar {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub downsample: usize,
    pub semantic_weight: f64,
    pub seed: u64,
    pub in_channels: usize,
    pub config: VqConfig,
    pub motion: MotionConfig,
}

pub struct VqVae<T: Scalar> {
    pub config: VqConfig,
    pub in_channels: usize,
    pub store: ParamStore<T>,
    norm_mean: ParamId,
    norm_std: ParamId,
    enc_in: Conv,
    enc_down: [Conv; 2],
    enc_res: Vec<Residual>,
    enc_out: Conv,
    dec_in: Conv,
    dec_res: Vec<Residual>,
    dec_up: [Conv; 2],
    dec_out: Conv,
    codebook: ParamId,
    head_w: ParamId,
    head_b: ParamId,
}

/// Result of quantizing a `[B, D, L]` latent batch.
pub struct Quantized<'g, T: Scalar> {
    /// Row-major over `(batch, position)`.
    pub ids: Vec<usize>,
    /// Codebook rows, `[B*L, D]`.
    pub rows: Var<'g, T>,
    /// Quantized latents carrying straight-through gradients, `[B, D, L]`.
    pub zq: Var<'g, T>,
    pub vq_loss: Var<'g, T>,
    pub commit_loss: Var<'g, T>,
}

/// Index of the nearest codebook row for each latent row; ties go to the
/// smallest index.
pub fn nearest_codes<T: Scalar>(latents: &[T], codebook: &[T], dim: usize) -> Vec<usize> {
    latents
        .chunks(dim)
        .map(|z| {
            let mut best = 0;
            let mut best_d = T::infinity();
            for (j, e) in codebook.chunks(dim).enumerate() {
                let d: T = z.iter().zip(e).map(|(a, b)| (*a - *b) * (*a - *b)).sum();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Downsampled mask: a token is real when any of its frames is.
pub fn token_mask(frame_mask: &[bool]) -> Vec<bool> {
    frame_mask.chunks(DOWNSAMPLE).map(|c| c.iter().any(|m| *m)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GestureTokenSequence {
    pub token_ids: Vec<usize>,
    /// `token_ids.len() x dim`, rows copied from the codebook.
    pub quantized: Vec<f32>,
    pub mask: Vec<bool>,
    pub source_span: (f64, f64),
    /// The window had no real frames; the sequence is empty.
    pub empty: bool,
}

impl GestureTokenSequence {
    pub fn absent(span: (f64, f64)) -> Self {
        Self {
            token_ids: Vec::new(),
            quantized: Vec::new(),
            mask: Vec::new(),
            source_span: span,
            empty: true,
        }
    }
}

impl<T: Scalar> VqVae<T> {
    pub fn new(config: &VqConfig, in_channels: usize) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(config.seed);
        let mut s = ParamStore::new();
        let (c, d, k) = (config.channels, config.dim, config.codebook_size);
        let norm_mean = s.add("norm.mean", Tensor::zeros(vec![in_channels]));
        let norm_std = s.add("norm.std", Tensor::full(vec![in_channels], T::one()));
        s.set_trainable(norm_mean, false);
        s.set_trainable(norm_std, false);
        let enc_in = Conv::new(&mut s, "enc.in", (in_channels, c, 3), 1, 1, &mut rng);
        let enc_down = [
            Conv::new(&mut s, "enc.down0", (c, c, 4), 2, 1, &mut rng),
            Conv::new(&mut s, "enc.down1", (c, c, 4), 2, 1, &mut rng),
        ];
        let enc_res = residuals(&mut s, "enc", config.residual_blocks, c, &mut rng);
        let enc_out = Conv::new(&mut s, "enc.out", (c, d, 1), 1, 0, &mut rng);
        let dec_in = Conv::new(&mut s, "dec.in", (d, c, 3), 1, 1, &mut rng);
        let dec_res = residuals(&mut s, "dec", config.residual_blocks, c, &mut rng);
        let dec_up = [
            Conv::new(&mut s, "dec.up0", (c, c, 3), 1, 1, &mut rng),
            Conv::new(&mut s, "dec.up1", (c, c, 3), 1, 1, &mut rng),
        ];
        let dec_out = Conv::new(&mut s, "dec.out", (c, in_channels, 3), 1, 1, &mut rng);
        let codebook = s.init("codebook", vec![k, d], Init::Uniform { bound: 1.0 / k as f64 }, &mut rng);
        let head_w = s.init("head.w", vec![d, SEMANTIC_CLASSES], Init::KaimingUniform { fan_in: d }, &mut rng);
        let head_b = s.init("head.b", vec![SEMANTIC_CLASSES], Init::Zeros, &mut rng);
        Ok(Self {
            config: config.clone(),
            in_channels,
            store: s,
            norm_mean,
            norm_std,
            enc_in,
            enc_down,
            enc_res,
            enc_out,
            dec_in,
            dec_res,
            dec_up,
            dec_out,
            codebook,
            head_w,
            head_b,
        })
    }

    pub fn codebook(&self) -> &Tensor<T> {
        self.store.value(self.codebook)
    }

    pub fn codebook_mut(&mut self) -> &mut Tensor<T> {
        self.store.value_mut(self.codebook)
    }

    pub fn head_params(&self) -> [ParamId; 2] {
        [self.head_w, self.head_b]
    }

    /// Per-channel mean and standard deviation over the real frames of
    /// `windows`; inputs are standardized with them before encoding.
    pub fn fit_normalization(&mut self, windows: &[&MotionWindow]) {
        let c = self.in_channels;
        let mut sum = vec![0f64; c];
        let mut sq = vec![0f64; c];
        let mut n = 0usize;
        for w in windows {
            for (f, real) in w.mask.iter().enumerate() {
                if !real {
                    continue;
                }
                n += 1;
                for (j, v) in w.frames[f * c..(f + 1) * c].iter().enumerate() {
                    sum[j] += *v as f64;
                    sq[j] += (*v as f64).powi(2);
                }
            }
        }
        if n == 0 {
            return;
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std: Vec<f64> = sq
            .iter()
            .zip(&mean)
            .map(|(s, m)| (s / n as f64 - m * m).max(0.0).sqrt().max(1e-3))
            .collect();
        *self.store.value_mut(self.norm_mean) = Tensor::from_f64(vec![c], &mean).expect("shape");
        *self.store.value_mut(self.norm_std) = Tensor::from_f64(vec![c], &std).expect("shape");
    }

    /// Standardized `[B, C, T]` batch; padded frames are zero.
    pub fn batch_tensor(&self, windows: &[&MotionWindow]) -> Result<Tensor<T>> {
        let c = self.in_channels;
        let t = windows.first().map_or(0, |w| w.len());
        let mean = self.store.value(self.norm_mean).data();
        let std = self.store.value(self.norm_std).data();
        let mut out = vec![T::zero(); windows.len() * c * t];
        for (b, w) in windows.iter().enumerate() {
            if w.len() != t || w.channels() != c {
                return Err(Error::Invalid(format!(
                    "window {b} is {}x{}, batch expects {t}x{c}",
                    w.len(),
                    w.channels()
                )));
            }
            for (f, real) in w.mask.iter().enumerate() {
                if !real {
                    continue;
                }
                for j in 0..c {
                    let v = T::of(w.frames[f * c + j] as f64);
                    out[(b * c + j) * t + f] = (v - mean[j]) / std[j];
                }
            }
        }
        Ok(Tensor::new(vec![windows.len(), c, t], out)?)
    }

    /// `[B, C, T]` to latents `[B, D, T/4]`.
    pub fn encode<'g>(&self, g: &'g Graph<T>, x: Var<'g, T>) -> Result<Var<'g, T>> {
        let t = x.shape()[2];
        if t == 0 || t % DOWNSAMPLE != 0 {
            return Err(Error::Invalid(format!("window length {t} is not a positive multiple of {DOWNSAMPLE}")));
        }
        let s = &self.store;
        let mut h = self.enc_in.apply(g, s, x)?.relu();
        h = self.enc_down[0].apply(g, s, h)?.relu();
        h = self.enc_down[1].apply(g, s, h)?;
        for r in &self.enc_res {
            h = r.apply(g, s, h)?;
        }
        self.enc_out.apply(g, s, h.relu())
    }

    pub fn quantize<'g>(&self, g: &'g Graph<T>, z: Var<'g, T>) -> Result<Quantized<'g, T>> {
        let shape = z.shape();
        let (b, d, l) = (shape[0], shape[1], shape[2]);
        let z_rows = z.swap_last2()?.reshape(vec![b * l, d])?;
        let ids = nearest_codes(z_rows.value().data(), self.codebook().data(), d);
        let rows = g.param(&self.store, self.codebook).embedding(&ids)?;
        let vq_loss = rows.mse(z_rows.detach())?;
        let commit_loss = z_rows.mse(rows.detach())?;
        let zq = rows.straight_through(z_rows)?.reshape(vec![b, l, d])?.swap_last2()?;
        Ok(Quantized {
            ids,
            rows,
            zq,
            vq_loss,
            commit_loss,
        })
    }

    /// `[B, D, L]` to reconstructions `[B, C, 4L]`.
    pub fn decode<'g>(&self, g: &'g Graph<T>, zq: Var<'g, T>) -> Result<Var<'g, T>> {
        let s = &self.store;
        let mut h = self.dec_in.apply(g, s, zq)?;
        for r in &self.dec_res {
            h = r.apply(g, s, h)?;
        }
        h = h.relu().upsample(2)?;
        h = self.dec_up[0].apply(g, s, h)?.relu().upsample(2)?;
        h = self.dec_up[1].apply(g, s, h)?.relu();
        self.dec_out.apply(g, s, h)
    }

    /// Linear head on the masked temporal mean of `[B, D, L]` quantized
    /// latents; output `[B, 5]`.
    pub fn semantic_logits<'g>(&self, g: &'g Graph<T>, zq: Var<'g, T>, mask: Option<&[bool]>) -> Result<Var<'g, T>> {
        let pooled = zq.swap_last2()?.mean_pool(1, mask)?;
        let w = g.param(&self.store, self.head_w);
        let b = g.param(&self.store, self.head_b);
        Ok(pooled.matmul(w)?.add_bias(b)?)
    }

    /// Latents `[L, D]` for one window.
    pub fn encode_window(&self, window: &MotionWindow) -> Result<Tensor<T>> {
        if window.real_frames() == 0 {
            return Err(Error::NoMotion);
        }
        let window = window.clone().pad_to_multiple(DOWNSAMPLE);
        let g = Graph::new();
        let x = g.constant(self.batch_tensor(&[&window])?);
        let z = self.encode(&g, x)?.swap_last2()?;
        let shape = z.shape();
        Ok(z.to_tensor().reshape(vec![shape[1], shape[2]])?)
    }

    /// Token ids and codebook rows for one window; the frame mask is carried
    /// to token resolution.
    pub fn tokenize(&self, window: &MotionWindow, span: (f64, f64)) -> Result<GestureTokenSequence> {
        if window.real_frames() == 0 {
            return Ok(GestureTokenSequence::absent(span));
        }
        let window = window.clone().pad_to_multiple(DOWNSAMPLE);
        let latents = self.encode_window(&window)?;
        let d = self.config.dim;
        let ids = nearest_codes(latents.data(), self.codebook().data(), d);
        let cb = self.codebook().data();
        let quantized = ids
            .iter()
            .flat_map(|&i| cb[i * d..(i + 1) * d].iter().map(|v| v.f64() as f32))
            .collect();
        Ok(GestureTokenSequence {
            token_ids: ids,
            quantized,
            mask: token_mask(&window.mask),
            source_span: span,
            empty: false,
        })
    }

    /// Reconstruction of a token sequence in standardized input space,
    /// `[C, 4L]`.
    pub fn decode_tokens(&self, ids: &[usize]) -> Result<Tensor<T>> {
        let g = Graph::new();
        let rows = g.param(&self.store, self.codebook).embedding(ids)?;
        let zq = rows.reshape(vec![1, ids.len(), self.config.dim])?.swap_last2()?;
        let out = self.decode(&g, zq)?;
        let shape = out.shape();
        Ok(out.to_tensor().reshape(vec![shape[1], shape[2]])?)
    }

    /// Token ids of a standardized `[C, T]` input.
    pub fn tokens_of_standardized(&self, x: &Tensor<T>) -> Result<Vec<usize>> {
        let shape = x.shape().to_vec();
        let g = Graph::new();
        let xv = g.constant(x.clone().reshape(vec![1, shape[0], shape[1]])?);
        let z = self.encode(&g, xv)?.swap_last2()?.to_tensor();
        Ok(nearest_codes(z.data(), self.codebook().data(), self.config.dim))
    }

    pub fn save(&self, path: &Path, motion: &MotionConfig) -> Result<()> {
        let mut buf = Vec::new();
        self.store.write_to(&mut buf)?;
        write_file(path, &buf)?;
        let side = VqSidecar {
            k: self.config.codebook_size,
            d: self.config.dim,
            downsample: DOWNSAMPLE,
            semantic_weight: self.config.semantic_weight,
            seed: self.config.seed,
            in_channels: self.in_channels,
            config: self.config.clone(),
            motion: motion.clone(),
        };
        let json = serde_json::to_string_pretty(&side).map_err(|e| Error::Invalid(e.to_string()))?;
        write_file(&sidecar_path(path), json.as_bytes())
    }

    pub fn load(path: &Path) -> Result<(Self, VqSidecar)> {
        let sp = sidecar_path(path);
        let text = std::fs::read_to_string(&sp).map_err(|e| Error::Io { path: sp.clone(), source: e })?;
        let side: VqSidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: sp.clone(),
            message: e.to_string(),
        })?;
        let mut model = Self::new(&side.config, side.in_channels)?;
        let tensors = load_checkpoint(path)?;
        model.store.load_values(&tensors)?;
        Ok((model, side))
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    crate::corpus::write_atomic(path, bytes)
}

/// `<checkpoint>.json`.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledWindow {
    pub window: MotionWindow,
    /// Gesture type index, or [`NONE_CLASS`].
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    pub window_s: f64,
    pub hop_s: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_s: 1.6,
            hop_s: 0.8,
        }
    }
}

/// Class of a window: the gesture type covering more than half of its real
/// frames, else `none`.
pub fn window_label(track: &SpeakerTrack, window: &MotionWindow, start: f64, end: f64) -> usize {
    let Some(m) = &track.motion else { return NONE_CLASS };
    let fps = m.frame_rate_hz as f64;
    let (lo, hi) = frame_range(start, end, fps, m.n_frames());
    let real = window.real_frames();
    if real == 0 {
        return NONE_CLASS;
    }
    let lo = hi - real.min(hi - lo);
    let mut best = (0usize, NONE_CLASS);
    for g in &track.gestures {
        let (glo, ghi) = frame_range(g.onset, g.offset, fps, m.n_frames());
        let cover = ghi.min(hi).saturating_sub(glo.max(lo));
        if cover > best.0 {
            best = (cover, g.gtype.index());
        }
    }
    if 2 * best.0 > real {
        best.1
    } else {
        NONE_CLASS
    }
}

/// Fixed-length windows sliding over each `(onset, offset)` span of the
/// speaker's own motion; spans shorter than a window contribute the window
/// ending at their offset.
pub fn labeled_windows(
    track: &SpeakerTrack,
    spans: &[(f64, f64)],
    wcfg: &WindowConfig,
    mcfg: &MotionConfig,
) -> Result<Vec<LabeledWindow>> {
    let Some(m) = &track.motion else { return Ok(Vec::new()) };
    let cfg = MotionConfig {
        window_s: wcfg.window_s,
        ..mcfg.clone()
    };
    let mut out = Vec::new();
    for &(on, off) in spans {
        let mut starts = Vec::new();
        let mut s = on;
        while s + wcfg.window_s <= off + 1e-9 {
            starts.push(s);
            s += wcfg.hop_s;
        }
        if starts.is_empty() {
            starts.push((off - wcfg.window_s).max(0.0));
        }
        for s in starts {
            let e = s + wcfg.window_s;
            let window = extract_motion_window(Some(m), s, e, &cfg)?;
            if window.real_frames() == 0 {
                continue;
            }
            let label = window_label(track, &window, s, e);
            out.push(LabeledWindow { window, label });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub recon: f64,
    pub vq: f64,
    pub commit: f64,
    pub semantic: f64,
    pub total: f64,
    /// Entropy (nats) of the epoch's token histogram.
    pub usage_entropy: f64,
    pub codes_used: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

pub fn usage_entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|c| **c > 0)
        .map(|&c| {
            let p = c as f64 / n as f64;
            -p * p.ln()
        })
        .sum()
}

fn to_f64<T: Scalar>(v: Var<'_, T>) -> f64 {
    v.value().data()[0].f64()
}

/// Trains a VQ-VAE. Windows must share one length; the model standardizes
/// inputs with statistics of `windows`.
pub fn train_vqvae<T: Scalar>(windows: &[LabeledWindow], config: &VqConfig) -> Result<(VqVae<T>, TrainingLog)> {
    if windows.is_empty() {
        return Err(Error::Invalid("no training windows".into()));
    }
    let windows: Vec<LabeledWindow> = windows
        .iter()
        .map(|w| LabeledWindow {
            window: w.window.clone().pad_to_multiple(DOWNSAMPLE),
            label: w.label,
        })
        .collect();
    let mut model = VqVae::<T>::new(config, windows[0].window.channels())?;
    let refs: Vec<&MotionWindow> = windows.iter().map(|w| &w.window).collect();
    model.fit_normalization(&refs);
    let mut opt = AdamW::new(
        &model.store,
        AdamWConfig {
            lr: config.lr,
            weight_decay: config.weight_decay,
            ..Default::default()
        },
    );
    let mut rng = Rng::with_stream(config.seed, 0x7e);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut log = TrainingLog::default();
    let (rw, sw, beta) = (T::of(config.recon_weight), T::of(config.semantic_weight), T::of(config.beta));
    let k = config.codebook_size;
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut acc = EpochLog {
            epoch,
            ..Default::default()
        };
        let mut counts = vec![0usize; k];
        let mut n_batches = 0usize;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&MotionWindow> = chunk.iter().map(|&i| &windows[i].window).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| windows[i].label).collect();
            let x_t = model.batch_tensor(&batch)?;
            if epoch == 1 && bi == 0 && config.codebook_init == CodebookInit::Data {
                init_codebook_from_data(&mut model, &x_t, &mut rng)?;
            }
            let g = Graph::new();
            let x = g.constant(x_t);
            let z = model.encode(&g, x)?;
            let q = model.quantize(&g, z)?;
            let recon = model.decode(&g, q.zq)?.mse(x)?;
            let mask: Vec<bool> = batch.iter().flat_map(|w| token_mask(&w.mask)).collect();
            let sem = model.semantic_logits(&g, q.zq, Some(&mask))?.cross_entropy(&labels, Some(NONE_CLASS), None)?;
            let total = recon
                .scale(rw)
                .add(q.vq_loss)?
                .add(q.commit_loss.scale(beta))?
                .add(sem.scale(sw))?;
            let loss = to_f64(total);
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    loss,
                });
            }
            let grads = g.backward(total)?.params(&model.store);
            opt.step(&mut model.store, &grads);
            if !model.store.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                    loss: f64::NAN,
                });
            }
            acc.recon += to_f64(recon);
            acc.vq += to_f64(q.vq_loss);
            acc.commit += to_f64(q.commit_loss);
            acc.semantic += to_f64(sem);
            acc.total += loss;
            for &i in &q.ids {
                counts[i] += 1;
            }
            n_batches += 1;
        }
        let n = n_batches.max(1) as f64;
        acc.recon /= n;
        acc.vq /= n;
        acc.commit /= n;
        acc.semantic /= n;
        acc.total /= n;
        acc.usage_entropy = usage_entropy(&counts);
        acc.codes_used = counts.iter().filter(|c| **c > 0).count();
        log.epochs.push(acc);
    }
    Ok((model, log))
}

fn init_codebook_from_data<T: Scalar>(model: &mut VqVae<T>, x: &Tensor<T>, rng: &mut Rng) -> Result<()> {
    let g = Graph::new();
    let z = model.encode(&g, g.constant(x.clone()))?.swap_last2()?;
    let rows = z.to_tensor();
    let d = model.config.dim;
    let n = rows.len() / d;
    let k = model.config.codebook_size;
    let mut picks: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut picks);
    let noise: Vec<T> = rng.normal_vec(k * d, 1e-3);
    let cb = model.codebook_mut().data_mut();
    for j in 0..k {
        let src = picks[j % n];
        for c in 0..d {
            cb[j * d + c] = rows.data()[src * d + c] + noise[j * d + c];
        }
    }
    Ok(())
}

/// Masked mean of a sequence's quantized rows.
pub fn pooled_embedding(seq: &GestureTokenSequence, dim: usize) -> Vec<f32> {
    let mut out = vec![0f32; dim];
    let mut n = 0usize;
    for (i, real) in seq.mask.iter().enumerate() {
        if *real {
            n += 1;
            for (o, v) in out.iter_mut().zip(&seq.quantized[i * dim..(i + 1) * dim]) {
                *o += v;
            }
        }
    }
    if n > 0 {
        out.iter_mut().for_each(|v| *v /= n as f32);
    }
    out
}

pub fn label_name(label: usize) -> &'static str {
    GestureType::ALL.get(label).map_or("none", |g| g.name())
}
