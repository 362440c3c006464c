use semturn_core::corpus::{load_session, session_paths, GestureType};
use semturn_core::features::frame_range;
use semturn_core::segment::{segment_session, SegmentConfig, TurnLabel};
use semturn_core::synth::{generate_benchmark, generate_session, session_seed, SynthConfig, TruthCounts};

fn streamless(len: f64) -> SynthConfig {
    let mut cfg = SynthConfig {
        session_length_s: len,
        ..Default::default()
    };
    cfg.motion.enabled = false;
    cfg.audio.enabled = false;
    cfg
}

fn counts(cfg: &SynthConfig, sessions: usize) -> TruthCounts {
    let mut c = TruthCounts::default();
    for i in 0..sessions {
        let s = generate_session(cfg, "s", session_seed(cfg.seed, i)).unwrap();
        c.add(&s.truth, cfg.planted_type);
    }
    c
}

#[test]
fn benchmark_is_reproducible_byte_for_byte() {
    let cfg = SynthConfig {
        session_length_s: 40.0,
        ..Default::default()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = generate_benchmark(&cfg, 2, a.path()).unwrap();
    let mb = generate_benchmark(&cfg, 2, b.path()).unwrap();
    assert_eq!(ma.content_hash, mb.content_hash);
    let paths = session_paths(a.path()).unwrap();
    assert_eq!(paths.len(), 2);
    for p in &paths {
        let other = b.path().join(p.file_name().unwrap());
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(other).unwrap());
        load_session(p).unwrap();
    }
    assert!(a.path().join("manifest.json").exists());
}

#[test]
fn hold_fraction_matches_configuration() {
    let cfg = SynthConfig {
        planted_delta: 0.0,
        ..streamless(1200.0)
    };
    let c = counts(&cfg, 12);
    assert!(c.turns >= 5000, "{} turns", c.turns);
    let hold = c.hold as f64 / c.turns as f64;
    assert!((hold - 0.6).abs() <= 0.02, "hold fraction {hold}");
}

#[test]
fn zero_delta_gives_no_gesture_effect() {
    let cfg = SynthConfig {
        planted_delta: 0.0,
        ..streamless(1200.0)
    };
    let c = counts(&cfg, 12);
    assert!(c.with_planted >= 1000);
    let p = c.yield_ as f64 / c.turns as f64;
    let n = c.with_planted as f64;
    let observed = c.yield_with_planted as f64 / n;
    let sigma = (p * (1.0 - p) / n).sqrt();
    assert!((observed - p).abs() <= 3.0 * sigma, "{observed} vs {p} (sigma {sigma})");
}

#[test]
fn planted_delta_shifts_yield_rate() {
    let cfg = streamless(1200.0);
    let c = counts(&cfg, 6);
    let observed = c.yield_with_planted as f64 / c.with_planted as f64;
    let n = c.with_planted as f64;
    let sigma = (0.65 * 0.35 / n).sqrt();
    assert!((observed - 0.65).abs() <= 3.0 * sigma, "{observed}");
}

#[test]
fn segmentation_recovers_generated_turns() {
    let cfg = streamless(900.0);
    let mut total = 0;
    let mut matched = 0;
    for i in 0..4 {
        let s = generate_session(&cfg, "s", session_seed(7, i)).unwrap();
        let turns = segment_session(&s.session, &SegmentConfig::default());
        assert_eq!(turns.len(), s.truth.len());
        total += s.truth.len();
        for (t, g) in turns.iter().zip(&s.truth) {
            let ok = t.ipu.speaker_id == g.speaker_id
                && (t.ipu.onset - g.onset).abs() < 1e-9
                && (t.ipu.offset - g.offset).abs() < 1e-9
                && t.label == g.label
                && t.gestures.first().map(|x| x.gtype) == g.gesture;
            matched += ok as usize;
        }
    }
    assert!(matched as f64 >= 0.99 * total as f64, "{matched}/{total}");
}

/// Onset-aligned arm clips of every gesture, pelvis-relative.
fn gesture_clips(cfg: &SynthConfig, sessions: usize, clip_frames: usize) -> Vec<(usize, Vec<f64>)> {
    let mut out = Vec::new();
    for i in 0..sessions {
        let s = generate_session(cfg, "s", session_seed(cfg.seed, i)).unwrap();
        for sp in &s.session.speakers {
            let m = sp.motion.as_ref().unwrap();
            let fps = m.frame_rate_hz as f64;
            let pelvis = m.joint_index("pelvis").unwrap();
            let arms: Vec<usize> = ["l_elbow", "l_wrist", "r_elbow", "r_wrist"]
                .iter()
                .map(|j| m.joint_index(j).unwrap())
                .collect();
            for g in &sp.gestures {
                let (lo, hi) = frame_range(g.onset, g.offset, fps, m.n_frames());
                if hi - lo < clip_frames {
                    continue;
                }
                let mut v = Vec::new();
                for f in lo..lo + clip_frames {
                    let p = m.position(f, pelvis);
                    for &j in &arms {
                        let q = m.position(f, j);
                        v.extend((0..3).map(|k| (q[k] - p[k]) as f64));
                    }
                }
                out.push((g.gtype.index(), v));
            }
        }
    }
    out
}

#[test]
fn motion_templates_are_class_separable() {
    let cfg = SynthConfig {
        session_length_s: 600.0,
        ..Default::default()
    };
    let clips = gesture_clips(&cfg, 4, 15);
    let (train, test) = clips.split_at(clips.len() / 2);
    let dim = train[0].1.len();
    let mut centroids = vec![vec![0f64; dim]; 4];
    let mut n = [0usize; 4];
    for (c, v) in train {
        n[*c] += 1;
        for (a, b) in centroids[*c].iter_mut().zip(v) {
            *a += b;
        }
    }
    for (c, cen) in centroids.iter_mut().enumerate() {
        assert!(n[c] > 0, "no training clips of class {c}");
        cen.iter_mut().for_each(|x| *x /= n[c] as f64);
    }
    let correct = test
        .iter()
        .filter(|(c, v)| {
            let best = (0..4)
                .min_by(|&a, &b| {
                    let da: f64 = centroids[a].iter().zip(v).map(|(x, y)| (x - y).powi(2)).sum();
                    let db: f64 = centroids[b].iter().zip(v).map(|(x, y)| (x - y).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            best == *c
        })
        .count();
    let acc = correct as f64 / test.len() as f64;
    assert!(acc >= 0.9, "nearest-centroid accuracy {acc}");
    assert_eq!(GestureType::ALL.len(), 4);
}

#[test]
fn final_generated_turn_is_hold_after_segmentation() {
    let cfg = streamless(120.0);
    let s = generate_session(&cfg, "s", 1).unwrap();
    let turns = segment_session(&s.session, &SegmentConfig::default());
    let last = turns.iter().max_by(|a, b| a.ipu.offset.total_cmp(&b.ipu.offset)).unwrap();
    assert_eq!(last.label, TurnLabel::Hold);
}
