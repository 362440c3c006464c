use proptest::prelude::*;
use semturn_core::model::{Batch, Fusion, InputDims, Modality, ModelConfig, TurnModel};
use semturn_core::TurnModel64;
use semturn_tensor::{Graph, Rng, Tensor};

fn dims() -> InputDims {
    InputDims {
        text: 6,
        audio: 4,
        gesture_len: 5,
        codebook_size: 7,
        codebook_dim: 8,
    }
}

fn config(fusion: Fusion) -> ModelConfig {
    ModelConfig {
        modalities: Modality::ALL.to_vec(),
        fusion,
        d: 8,
        lmf_rank: 2,
        gesture_heads: 2,
        gesture_ff: 8,
        semantic_gestures: true,
    }
}

fn batch(b: usize, seed: u64) -> Batch<f64> {
    let mut rng = Rng::new(seed);
    let d = dims();
    Batch {
        size: b,
        text: rng.normal_vec(b * d.text, 1.0),
        audio: rng.normal_vec(b * d.audio, 1.0),
        gesture_ids: (0..b * d.gesture_len).map(|_| rng.below(d.codebook_size)).collect(),
        gesture_mask: (0..b * d.gesture_len).map(|i| i % d.gesture_len >= 1).collect(),
        gesture_present: (0..b).map(|i| i != 1).collect(),
    }
}

fn model(fusion: Fusion, seed: u64) -> TurnModel64 {
    let mut rng = Rng::new(99);
    let cb = Tensor::new(vec![7, 8], rng.normal_vec(56, 1.0)).unwrap();
    let mut m = TurnModel::new(&config(fusion), &dims(), Some(&cb), seed).unwrap();
    // Nudge zero-initialized biases off zero.
    let ids: Vec<_> = m.store.ids().collect();
    for id in ids {
        for v in m.store.value_mut(id).data_mut() {
            *v += 0.1 * rng.normal();
        }
    }
    m
}

fn loss(m: &TurnModel64, b: &Batch<f64>, labels: &[usize]) -> f64 {
    let g = Graph::new();
    let f = m.forward(&g, b).unwrap();
    f.logits.cross_entropy(labels, None, None).unwrap().to_tensor().data()[0]
}

fn finite_difference_check(fusion: Fusion) {
    let mut m = model(fusion, 3);
    let b = batch(4, 5);
    let labels = [0, 1, 1, 0];
    let g = Graph::new();
    let f = m.forward(&g, &b).unwrap();
    let l = f.logits.cross_entropy(&labels, None, None).unwrap();
    let grads = g.backward(l).unwrap().params(&m.store);
    let ids: Vec<_> = m.store.iter().filter(|(_, p)| p.trainable).map(|(id, _)| id).collect();
    let h = 1e-5;
    let mut checked = 0;
    for id in ids {
        let name = m.store.get(id).name.clone();
        let analytic = grads.get(id).map(|g| g.to_vec()).unwrap_or_default();
        let n = m.store.value(id).len();
        for k in (0..n).step_by((n / 3).max(1)) {
            let orig = m.store.value(id).data()[k];
            m.store.value_mut(id).data_mut()[k] = orig + h;
            let up = loss(&m, &b, &labels);
            m.store.value_mut(id).data_mut()[k] = orig - h;
            let down = loss(&m, &b, &labels);
            m.store.value_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(k).copied().unwrap_or(0.0);
            let tol = 1e-4 * numeric.abs().max(a.abs()).max(1e-3);
            assert!((numeric - a).abs() <= tol, "{name}[{k}]: numeric {numeric} vs analytic {a}");
            checked += 1;
        }
    }
    assert!(checked > 30);
}

#[test]
fn moe_model_matches_finite_differences() {
    finite_difference_check(Fusion::Moe);
}

#[test]
fn concat_model_matches_finite_differences() {
    finite_difference_check(Fusion::Concat);
}

#[test]
fn lmf_model_matches_finite_differences() {
    finite_difference_check(Fusion::Lmf);
}

#[test]
fn every_expert_receives_gradient_through_the_gate() {
    let m = model(Fusion::Moe, 1);
    let b = batch(3, 2);
    let g = Graph::new();
    let f = m.forward(&g, &b).unwrap();
    let l = f.logits.cross_entropy(&[0, 1, 0], None, None).unwrap();
    let grads = g.backward(l).unwrap().params(&m.store);
    for prefix in ["text.", "audio.", "gesture."] {
        let touched = m
            .store
            .iter()
            .filter(|(_, p)| p.name.starts_with(prefix) && p.trainable)
            .any(|(id, _)| grads.get(id).is_some_and(|g| g.iter().any(|v| *v != 0.0)));
        assert!(touched, "no gradient reaches {prefix}*");
    }
}

#[test]
fn saved_model_predicts_identically_after_load() {
    let dir = tempfile::tempdir().unwrap();
    let m = model(Fusion::Moe, 4).store.clone();
    let mut rng = Rng::new(99);
    let cb = Tensor::<f64>::new(vec![7, 8], rng.normal_vec(56, 1.0)).unwrap().cast::<f32>();
    let mut m32 = TurnModel::<f32>::new(&config(Fusion::Moe), &dims(), Some(&cb), 4).unwrap();
    for (id, p) in m.iter() {
        *m32.store.value_mut(id) = p.value.cast();
    }
    let path = dir.path().join("m.ckpt");
    m32.save(&path, 4).unwrap();
    let (back, side) = TurnModel::<f32>::load(&path).unwrap();
    assert_eq!(side.seed, 4);
    let b64 = batch(5, 8);
    let b = Batch {
        size: b64.size,
        text: b64.text.iter().map(|v| *v as f32).collect(),
        audio: b64.audio.iter().map(|v| *v as f32).collect(),
        gesture_ids: b64.gesture_ids.clone(),
        gesture_mask: b64.gesture_mask.clone(),
        gesture_present: b64.gesture_present.clone(),
    };
    assert_eq!(m32.predict(&b).unwrap(), back.predict(&b).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gate_rows_are_on_the_simplex(seed in 0u64..1000, b in 1usize..6) {
        let m = model(Fusion::Moe, seed);
        let (_, gate) = m.predict(&batch(b, seed + 1)).unwrap();
        for row in gate.unwrap() {
            prop_assert_eq!(row.len(), 3);
            prop_assert!(row.iter().all(|w| *w >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn text_audio_model_ignores_gesture_inputs(seed in 0u64..1000) {
        let cfg = ModelConfig { modalities: vec![Modality::Text, Modality::Audio], ..config(Fusion::Moe) };
        let m = TurnModel::<f64>::new(&cfg, &dims(), None, seed).unwrap();
        prop_assert!(m.store.iter().all(|(_, p)| !p.name.starts_with("gesture.")));
        let mut a = batch(3, seed);
        a.gesture_ids.clear();
        a.gesture_mask.clear();
        a.gesture_present.clear();
        let (_, gate) = m.predict(&a).unwrap();
        prop_assert!(gate.unwrap().iter().all(|r| r.len() == 2));
    }
}
