//! Linear probes and principal-component projections of pooled embeddings.

use semturn_tensor::{AdamW, AdamWConfig, Graph, Init, ParamStore, Rng, Tensor};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeConfig {
    pub iterations: usize,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            lr: 0.05,
            weight_decay: 1e-3,
        }
    }
}

fn standardizer(x: &[Vec<f32>]) -> (Vec<f64>, Vec<f64>) {
    let d = x[0].len();
    let n = x.len() as f64;
    let mut mean = vec![0f64; d];
    for r in x {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += *v as f64 / n;
        }
    }
    let mut std = vec![0f64; d];
    for r in x {
        for ((s, v), m) in std.iter_mut().zip(r).zip(&mean) {
            *s += (*v as f64 - m).powi(2) / n;
        }
    }
    (mean, std.into_iter().map(|s| s.sqrt().max(1e-6)).collect())
}

/// Multinomial logistic regression fit full-batch on standardized features;
/// returns accuracy on the test rows.
pub fn linear_probe_accuracy(
    train_x: &[Vec<f32>],
    train_y: &[usize],
    test_x: &[Vec<f32>],
    test_y: &[usize],
    classes: usize,
    cfg: &ProbeConfig,
) -> Result<f64> {
    if train_x.is_empty() || test_x.is_empty() || train_x.len() != train_y.len() || test_x.len() != test_y.len() {
        return Err(Error::Invalid("probe needs non-empty, aligned train and test sets".into()));
    }
    let d = train_x[0].len();
    let (mean, std) = standardizer(train_x);
    let pack = |x: &[Vec<f32>]| -> Result<Tensor<f64>> {
        let data: Vec<f64> = x
            .iter()
            .flat_map(|r| r.iter().zip(&mean).zip(&std).map(|((v, m), s)| (*v as f64 - m) / s))
            .collect();
        Ok(Tensor::new(vec![x.len(), d], data)?)
    };
    let (xtr, xte) = (pack(train_x)?, pack(test_x)?);
    let mut store = ParamStore::<f64>::new();
    let mut rng = Rng::new(0);
    let w = store.init("w", vec![d, classes], Init::Zeros, &mut rng);
    let b = store.init("b", vec![classes], Init::Zeros, &mut rng);
    let mut opt = AdamW::new(
        &store,
        AdamWConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..Default::default()
        },
    );
    for _ in 0..cfg.iterations {
        let g = Graph::new();
        let logits = g.constant(xtr.clone()).matmul(g.param(&store, w))?.add_bias(g.param(&store, b))?;
        let loss = logits.cross_entropy(train_y, None, None)?;
        let grads = g.backward(loss)?.params(&store);
        opt.step(&mut store, &grads);
    }
    let g = Graph::new();
    let logits = g.constant(xte).matmul(g.param(&store, w))?.add_bias(g.param(&store, b))?.to_tensor();
    let correct = test_y
        .iter()
        .enumerate()
        .filter(|(i, y)| argmax(logits.row(*i)) == **y)
        .count();
    Ok(correct as f64 / test_y.len() as f64)
}

/// Index of the largest value; ties go to the smallest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Eigenvalues and column eigenvectors of a symmetric matrix by cyclic
/// Jacobi rotations, sorted by decreasing eigenvalue.
pub fn symmetric_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a.to_vec();
    let mut v = vec![0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j].powi(2))
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k * n + p], a[k * n + q]);
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p * n + k], a[q * n + k]);
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k * n + p], v[k * n + q]);
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let vals = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vecs = vec![0f64; n * n];
    for (c, &i) in order.iter().enumerate() {
        for r in 0..n {
            vecs[r * n + c] = v[r * n + i];
        }
    }
    (vals, vecs)
}

/// Projection of the rows of `x` onto the two leading principal axes. Each
/// axis is signed so that its largest-magnitude component is positive.
pub fn pca_2d(x: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    if x.len() < 2 {
        return Err(Error::Invalid(format!("PCA needs at least 2 samples, got {}", x.len())));
    }
    let d = x[0].len();
    if d < 1 {
        return Err(Error::Invalid("PCA needs non-empty rows".into()));
    }
    let n = x.len() as f64;
    let mut mean = vec![0f64; d];
    for r in x {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n;
        }
    }
    let mut cov = vec![0f64; d * d];
    for r in x {
        for i in 0..d {
            let a = r[i] - mean[i];
            for j in 0..d {
                cov[i * d + j] += a * (r[j] - mean[j]) / (n - 1.0);
            }
        }
    }
    let (_, vecs) = symmetric_eigen(&cov, d);
    let axes: Vec<Vec<f64>> = (0..2.min(d))
        .map(|c| {
            let mut col: Vec<f64> = (0..d).map(|r| vecs[r * d + c]).collect();
            let big = col.iter().copied().fold(0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if big < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
            col
        })
        .collect();
    Ok(x.iter()
        .map(|r| {
            let mut p = [0f64; 2];
            for (c, axis) in axes.iter().enumerate() {
                p[c] = r.iter().zip(&mean).zip(axis).map(|((v, m), a)| (v - m) * a).sum();
            }
            p
        })
        .collect())
}
