use std::path::Path;

use proptest::prelude::*;
use semturn_core::corpus::{
    decode_motion, encode_audio, encode_motion, import_annotation_reader, load_session, validate_session,
    write_session, GestureType, MotionSequence, Session, SpeakerTrack, TimedWord, Waveform,
};
use semturn_core::Error;

fn motion(frames: usize) -> MotionSequence {
    MotionSequence {
        frame_rate_hz: 15.0,
        joint_names: vec!["pelvis".into(), "head".into()],
        positions: (0..frames * 6).map(|i| i as f32 * 0.25).collect(),
    }
}

fn session() -> Session {
    let mut a = SpeakerTrack::new("A");
    a.words = vec![
        TimedWord { text: "hello".into(), onset: 0.1, offset: 0.5 },
        TimedWord { text: "there".into(), onset: 0.6, offset: 1.0 },
    ];
    a.motion_path = Some("s.A.motion".into());
    a.motion = Some(motion(30));
    a.audio_path = Some("s.A.audio".into());
    a.audio = Some(Waveform { sample_rate_hz: 8000, samples: vec![0.0, 0.5, -0.5, 0.25] });
    let mut b = SpeakerTrack::new("B");
    b.words = vec![TimedWord { text: "hi".into(), onset: 1.2, offset: 1.5 }];
    Session { session_id: "s".into(), duration_s: 2.0, speakers: vec![a, b] }
}

#[test]
fn session_round_trips_with_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.session.json");
    let s = session();
    write_session(&s, &path).unwrap();
    assert_eq!(load_session(&path).unwrap(), s);
}

#[test]
fn motion_bytes_match_the_documented_layout() {
    let m = MotionSequence { frame_rate_hz: 30.0, joint_names: vec!["pelvis".into()], positions: vec![1.0, 2.0, 3.0] };
    let mut expected = b"GMO1".to_vec();
    expected.extend_from_slice(&1u32.to_le_bytes());
    expected.extend_from_slice(&1u32.to_le_bytes());
    expected.extend_from_slice(&30f32.to_le_bytes());
    expected.extend_from_slice(&6u32.to_le_bytes());
    expected.extend_from_slice(b"pelvis");
    for v in [1f32, 2.0, 3.0] {
        expected.extend_from_slice(&v.to_le_bytes());
    }
    assert_eq!(encode_motion(&m), expected);
    assert_eq!(decode_motion(&expected, Path::new("x")).unwrap(), m);
}

#[test]
fn audio_bytes_match_the_documented_layout() {
    let a = Waveform { sample_rate_hz: 16_000, samples: vec![0.5] };
    let mut expected = b"GAU1".to_vec();
    expected.extend_from_slice(&16_000u32.to_le_bytes());
    expected.extend_from_slice(&1u32.to_le_bytes());
    expected.extend_from_slice(&0.5f32.to_le_bytes());
    assert_eq!(encode_audio(&a), expected);
}

#[test]
fn truncated_motion_is_a_size_mismatch() {
    let bytes = encode_motion(&motion(4));
    for cut in [3, 10, bytes.len() - 1] {
        let e = decode_motion(&bytes[..cut], Path::new("m")).unwrap_err();
        assert!(matches!(e, Error::SizeMismatch { .. }), "cut {cut}: {e}");
    }
    let mut long = bytes.clone();
    long.extend_from_slice(&[0; 4]);
    assert!(matches!(decode_motion(&long, Path::new("m")), Err(Error::SizeMismatch { .. })));
}

#[test]
fn non_finite_motion_is_rejected() {
    let mut m = motion(2);
    m.positions[5] = f32::NAN;
    let e = decode_motion(&encode_motion(&m), Path::new("m")).unwrap_err();
    assert!(matches!(e, Error::NonFinite { index: 5, .. }), "{e}");
}

#[test]
fn session_with_unknown_key_fails_to_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.session.json");
    std::fs::write(&path, r#"{"session_id":"x","duration_s":1,"speakers":[],"extra":0}"#).unwrap();
    assert!(load_session(&path).unwrap_err().is_validation());
}

#[test]
fn invalid_sessions_list_every_violation() {
    let mut s = session();
    s.speakers[1].speaker_id = "A".into();
    s.speakers[0].words[1].onset = 0.05;
    s.speakers[0].words.push(TimedWord { text: "late".into(), onset: 1.5, offset: 2.5 });
    s.speakers[0].motion = Some(motion(20));
    let paths: Vec<String> = validate_session(&s).into_iter().map(|v| v.path).collect();
    assert!(paths.contains(&"speakers[1].speaker_id".to_string()), "{paths:?}");
    assert!(paths.contains(&"speakers[0].words[1]".to_string()), "{paths:?}");
    assert!(paths.contains(&"speakers[0].words[2]".to_string()), "{paths:?}");
    assert!(paths.contains(&"speakers[0].motion".to_string()), "{paths:?}");
}

#[test]
fn annotation_csv_appends_spans() {
    let csv = "onset_s,offset_s,gesture_type\n0.5,1.0,iconic\n 1.2 , 1.8 , deictic\n";
    let t = import_annotation_reader(csv.as_bytes(), Path::new("a.csv"), SpeakerTrack::new("A")).unwrap();
    assert_eq!(t.gestures.len(), 2);
    assert_eq!(t.gestures[0].gtype, GestureType::Iconic);
    assert_eq!(t.gestures[1].onset, 1.2);
}

#[test]
fn annotation_csv_errors_name_the_line() {
    let bad_type = "onset_s,offset_s,gesture_type\n0.5,1.0,iconic\n1.2,1.8,waving\n";
    let e = import_annotation_reader(bad_type.as_bytes(), Path::new("a.csv"), SpeakerTrack::new("A")).unwrap_err();
    assert!(matches!(e, Error::Annotation { line: 3, .. }), "{e}");
    assert!(e.to_string().contains("metaphoric"), "{e}");
    let bad_num = "onset_s,offset_s,gesture_type\nsoon,1.0,iconic\n";
    let e = import_annotation_reader(bad_num.as_bytes(), Path::new("a.csv"), SpeakerTrack::new("A")).unwrap_err();
    assert!(matches!(e, Error::Annotation { line: 2, .. }), "{e}");
    let bad_header = "start,end,type\n";
    assert!(import_annotation_reader(bad_header.as_bytes(), Path::new("a.csv"), SpeakerTrack::new("A")).is_err());
}

proptest! {
    #[test]
    fn motion_encoding_round_trips(
        frames in 0usize..20,
        names in prop::collection::vec("[a-z_]{1,10}", 1..6),
        fps in 1.0f32..120.0,
        seed in 0u32..1000,
    ) {
        let n = frames * names.len() * 3;
        let m = MotionSequence {
            frame_rate_hz: fps,
            joint_names: names,
            positions: (0..n).map(|i| ((i as u32 ^ seed) as f32).sin()).collect(),
        };
        prop_assert_eq!(decode_motion(&encode_motion(&m), Path::new("m")).unwrap(), m);
    }
}
