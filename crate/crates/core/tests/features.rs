use proptest::prelude::*;
use semturn_core::corpus::MotionSequence;
use semturn_core::features::{
    audio_spectral_features, embed_text_hashed, extract_motion_window, frame_range, AudioConfig, FilterBank,
    MotionConfig,
};

fn motion(frames: usize, fps: f32, joints: &[&str], seed: f32) -> MotionSequence {
    let nj = joints.len();
    MotionSequence {
        frame_rate_hz: fps,
        joint_names: joints.iter().map(|s| s.to_string()).collect(),
        positions: (0..frames * nj * 3).map(|i| (i as f32 * 0.37 + seed).sin()).collect(),
    }
}

proptest! {
    #[test]
    fn hashed_text_is_deterministic_and_unit_norm(
        words in prop::collection::vec("[a-zA-Z]{1,8}", 1..20),
        dim in 1usize..512,
    ) {
        let a = embed_text_hashed(&words, dim);
        prop_assert_eq!(&a, &embed_text_hashed(&words, dim));
        prop_assert_eq!(a.dim(), dim);
        let norm: f64 = a.values.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        // Signed hashing can cancel every count; the vector is then zero.
        prop_assert!((norm - 1.0).abs() < 1e-5 || norm == 0.0, "norm {}", norm);
        let upper: Vec<String> = words.iter().map(|w| w.to_uppercase()).collect();
        prop_assert_eq!(a.values, embed_text_hashed(&upper, dim).values);
    }

    #[test]
    fn motion_window_has_fixed_shape_and_pelvis_origin(
        frames in 1usize..200,
        onset in 0.0f64..5.0,
        len in 0.0f64..8.0,
        fps in prop::sample::select(vec![15.0f32, 30.0]),
    ) {
        let joints = ["pelvis", "head", "r_wrist"];
        let m = motion(frames, fps, &joints, 1.0);
        let cfg = MotionConfig { window_s: 4.0, joints: joints.iter().map(|s| s.to_string()).collect(), frame_rate_hz: fps };
        let w = extract_motion_window(Some(&m), onset, onset + len, &cfg).unwrap();
        let t = (4.0 * fps as f64).round() as usize;
        prop_assert_eq!(w.len(), t);
        prop_assert_eq!(w.frames.len(), t * 3 * 3);
        let (lo, hi) = frame_range((onset + len - 4.0).max(onset), onset + len, fps as f64, frames);
        prop_assert_eq!(w.real_frames(), (hi - lo).min(t));
        let first_real = w.mask.iter().position(|m| *m).unwrap_or(t);
        prop_assert!(w.mask[first_real..].iter().all(|m| *m));
        for (row, real) in w.mask.iter().enumerate() {
            let pelvis = &w.frames[row * 9..row * 9 + 3];
            prop_assert!(pelvis.iter().all(|v| *v == 0.0));
            if !real {
                prop_assert!(w.frames[row * 9..(row + 1) * 9].iter().all(|v| *v == 0.0));
            }
        }
    }

    #[test]
    fn frame_range_selects_frames_inside_the_span(start in 0.0f64..10.0, len in 0.0f64..5.0, n in 0usize..400) {
        let fps = 30.0;
        let (lo, hi) = frame_range(start, start + len, fps, n);
        prop_assert!(lo <= hi && hi <= n);
        for i in 0..n {
            let t = i as f64 / fps;
            let inside = t >= start - 1e-9 && t < start + len - 1e-9;
            prop_assert_eq!(inside, (lo..hi).contains(&i), "frame {} at {}", i, t);
        }
    }
}

#[test]
fn tone_energy_peaks_in_the_band_nearest_its_frequency() {
    let sr = 16_000.0;
    let cfg = AudioConfig::default();
    let fb = FilterBank::new(sr, &cfg).unwrap();
    for band in [3usize, 10, 20] {
        let f = fb.centers_hz()[band];
        let samples: Vec<f32> =
            (0..8000).map(|i| (std::f64::consts::TAU * f * i as f64 / sr).sin() as f32).collect();
        let v = fb.features(&samples);
        let means = &v.values[..cfg.bands];
        let peak = means.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(peak, band, "tone at {f:.1} Hz");
    }
}

#[test]
fn scaling_the_signal_shifts_log_means_only() {
    // Scaling the signal by 10 adds ln(100) to every log energy mean and
    // leaves the standard deviations unchanged.
    let cfg = AudioConfig::default();
    let samples: Vec<f32> = (0..4000).map(|i| ((i * 7919) % 101) as f32 / 101.0 - 0.5).collect();
    let loud: Vec<f32> = samples.iter().map(|s| s * 10.0).collect();
    let a = audio_spectral_features(&samples, 8000.0, &cfg).unwrap();
    let b = audio_spectral_features(&loud, 8000.0, &cfg).unwrap();
    let shift = 100f64.ln();
    for k in 0..cfg.bands {
        assert!((b.values[k] as f64 - a.values[k] as f64 - shift).abs() < 1e-3);
        assert!((b.values[cfg.bands + k] - a.values[cfg.bands + k]).abs() < 1e-3);
    }
}

#[test]
fn zero_bands_is_a_config_error() {
    let cfg = AudioConfig { bands: 0, ..AudioConfig::default() };
    assert!(FilterBank::new(16_000.0, &cfg).err().unwrap().is_validation());
}
