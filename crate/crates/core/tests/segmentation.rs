use proptest::prelude::*;
use semturn_core::corpus::{Session, SpeakerTrack, TimedWord};
use semturn_core::segment::{
    build_ipus, label_turns, merge_short_ipus, parse_turns_jsonl, segment_session, session_ipus, split_dataset,
    split_sizes, write_turns_jsonl, SegmentConfig, Split, SplitRatios, TurnLabel, TurnRecord,
};

fn words_strategy() -> impl Strategy<Value = Vec<TimedWord>> {
    prop::collection::vec((0.0f64..0.6, 0.05f64..0.5), 1..40).prop_map(|steps| {
        let mut t = 0.0;
        steps
            .into_iter()
            .enumerate()
            .map(|(i, (gap, dur))| {
                let onset = t + gap;
                t = onset + dur;
                TimedWord {
                    text: format!("w{i}"),
                    onset,
                    offset: t,
                }
            })
            .collect()
    })
}

fn track(id: &str, words: Vec<TimedWord>) -> SpeakerTrack {
    let mut t = SpeakerTrack::new(id);
    t.words = words;
    t
}

fn session_strategy() -> impl Strategy<Value = Session> {
    (words_strategy(), words_strategy(), 0.0f64..3.0).prop_map(|(a, mut b, shift)| {
        for w in &mut b {
            w.onset += shift;
            w.offset += shift;
        }
        Session {
            session_id: "s".into(),
            duration_s: 100.0,
            speakers: vec![track("A", a), track("B", b)],
        }
    })
}

fn flat_words(ipus: &[semturn_core::segment::Ipu]) -> Vec<String> {
    ipus.iter().flat_map(|u| u.words.iter().map(|w| w.text.clone())).collect()
}

proptest! {
    #[test]
    fn every_word_lands_in_exactly_one_ipu(words in words_strategy(), gap in 0.05f64..0.5) {
        let t = track("A", words.clone());
        let ipus = build_ipus(&t, gap);
        let expected: Vec<String> = words.iter().map(|w| w.text.clone()).collect();
        prop_assert_eq!(flat_words(&ipus), expected);
        for u in &ipus {
            prop_assert_eq!(u.onset, u.words[0].onset);
            prop_assert_eq!(u.offset, u.words.last().unwrap().offset);
            for pair in u.words.windows(2) {
                prop_assert!(pair[1].onset - pair[0].offset < gap);
            }
        }
        for pair in ipus.windows(2) {
            prop_assert!(pair[1].onset - pair[0].offset >= gap);
        }
    }

    #[test]
    fn merging_keeps_words_and_removes_short_ipus(words in words_strategy(), min in 0.1f64..1.0) {
        let ipus = build_ipus(&track("A", words), 0.2);
        let before = flat_words(&ipus);
        let merged = merge_short_ipus(ipus, min);
        prop_assert_eq!(flat_words(&merged), before);
        if merged.len() > 1 {
            prop_assert!(merged.iter().all(|u| u.duration() >= min));
        }
        for pair in merged.windows(2) {
            prop_assert!(pair[0].offset <= pair[1].onset);
        }
    }

    #[test]
    fn labels_follow_the_next_speaker(session in session_strategy()) {
        let cfg = SegmentConfig::default();
        let turns = segment_session(&session, &cfg);
        let ipus = session_ipus(&session, &cfg);
        let n: usize = ipus.values().map(Vec::len).sum();
        prop_assert_eq!(turns.len(), n);
        for t in &turns {
            let yields = t.next_speaker_id.as_deref().is_some_and(|s| s != t.ipu.speaker_id);
            prop_assert_eq!(t.label == TurnLabel::Yield, yields);
        }
        let last = turns.iter().max_by(|a, b| a.ipu.onset.total_cmp(&b.ipu.onset)).unwrap();
        prop_assert_eq!(last.label, TurnLabel::Hold);
        prop_assert_eq!(&last.next_speaker_id, &None);
    }

    #[test]
    fn single_speaker_sessions_never_yield(words in words_strategy()) {
        let session = Session { session_id: "s".into(), duration_s: 100.0, speakers: vec![track("A", words)] };
        let ipus = session_ipus(&session, &SegmentConfig::default());
        prop_assert!(label_turns(&session, &ipus, 0.0).iter().all(|t| t.label == TurnLabel::Hold));
    }

    #[test]
    fn split_counts_match_the_floor_rule(session in session_strategy(), seed in 0u64..100) {
        let turns = segment_session(&session, &SegmentConfig::default());
        let n = turns.len();
        let r = SplitRatios::default();
        let out = split_dataset(turns.clone(), &r, seed, false).unwrap();
        let count = |s: Split| out.iter().filter(|t| t.split == s).count();
        prop_assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), split_sizes(n, &r));
        prop_assert_eq!(out, split_dataset(turns, &r, seed, false).unwrap());
    }

    #[test]
    fn turn_records_round_trip_through_jsonl(session in session_strategy()) {
        let turns = segment_session(&session, &SegmentConfig::default());
        let records: Vec<TurnRecord> = turns.iter().map(TurnRecord::from).collect();
        prop_assert_eq!(parse_turns_jsonl(&write_turns_jsonl(&records)).unwrap(), records);
    }
}

#[test]
fn split_sizes_by_hand() {
    let r = SplitRatios::default();
    assert_eq!(split_sizes(10, &r), (7, 1, 2));
    assert_eq!(split_sizes(19, &r), (15, 1, 3));
    assert_eq!(split_sizes(2, &r), (2, 0, 0));
}

#[test]
fn malformed_turn_line_is_a_parse_error() {
    let e = parse_turns_jsonl("{\"session_id\": 3}\n").unwrap_err();
    assert!(e.is_validation());
    assert!(e.to_string().contains("line 1"), "{e}");
}
