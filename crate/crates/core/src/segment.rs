//! Inter-pausal units, hold/yield labels at their endpoints, gesture
//! attachment, corpus statistics and dataset splits.

use std::collections::BTreeMap;
use std::fmt;

use semturn_tensor::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{GestureSpan, GestureType, Session, SpeakerTrack, TimedWord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ipu {
    pub speaker_id: String,
    pub onset: f64,
    pub offset: f64,
    pub words: Vec<TimedWord>,
}

impl Ipu {
    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    pub fn transcript(&self) -> String {
        self.words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnLabel {
    Hold,
    Yield,
}

impl TurnLabel {
    /// Class index: hold = 0, yield = 1.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        if i == 1 {
            TurnLabel::Yield
        } else {
            TurnLabel::Hold
        }
    }
}

impl fmt::Display for TurnLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TurnLabel::Hold => "hold",
            TurnLabel::Yield => "yield",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    Unassigned,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurnInstance {
    pub session_id: String,
    pub ipu: Ipu,
    pub label: TurnLabel,
    pub gestures: Vec<GestureSpan>,
    pub next_speaker_id: Option<String>,
    pub split: Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub gap_threshold_s: f64,
    pub min_ipu_s: f64,
    /// A successor must start after `offset - overlap_grace_s`.
    pub overlap_grace_s: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            gap_threshold_s: 0.200,
            min_ipu_s: 0.300,
            overlap_grace_s: 0.0,
        }
    }
}

/// Groups a speaker's words into IPUs. A new IPU starts exactly when the
/// silence since the previous word reaches `gap_threshold`.
pub fn build_ipus(track: &SpeakerTrack, gap_threshold: f64) -> Vec<Ipu> {
    let mut out: Vec<Ipu> = Vec::new();
    for w in &track.words {
        match out.last_mut() {
            Some(cur) if w.onset - cur.offset < gap_threshold => {
                cur.offset = cur.offset.max(w.offset);
                cur.words.push(w.clone());
            }
            _ => out.push(Ipu {
                speaker_id: track.speaker_id.clone(),
                onset: w.onset,
                offset: w.offset,
                words: vec![w.clone()],
            }),
        }
    }
    out
}

/// Absorbs every IPU shorter than `min_duration` into its temporally nearer
/// neighbor (ties go to the earlier one) until none remain or a short IPU has
/// no neighbor.
pub fn merge_short_ipus(ipus: Vec<Ipu>, min_duration: f64) -> Vec<Ipu> {
    let mut ipus = ipus;
    while ipus.len() > 1 {
        let Some(i) = ipus.iter().position(|u| u.duration() < min_duration) else {
            break;
        };
        let gap_prev = (i > 0).then(|| ipus[i].onset - ipus[i - 1].offset);
        let gap_next = (i + 1 < ipus.len()).then(|| ipus[i + 1].onset - ipus[i].offset);
        let into_prev = match (gap_prev, gap_next) {
            (Some(p), Some(n)) => p <= n,
            (Some(_), None) => true,
            _ => false,
        };
        let short = ipus.remove(i);
        if into_prev {
            let prev = &mut ipus[i - 1];
            prev.offset = prev.offset.max(short.offset);
            prev.words.extend(short.words);
        } else {
            let next = &mut ipus[i];
            next.onset = next.onset.min(short.onset);
            let mut words = short.words;
            words.append(&mut next.words);
            next.words = words;
        }
    }
    ipus
}

/// IPUs for every speaker after thresholding and merging, keyed by speaker id.
pub fn session_ipus(session: &Session, cfg: &SegmentConfig) -> BTreeMap<String, Vec<Ipu>> {
    session
        .speakers
        .iter()
        .map(|t| {
            let ipus = merge_short_ipus(build_ipus(t, cfg.gap_threshold_s), cfg.min_ipu_s);
            (t.speaker_id.clone(), ipus)
        })
        .collect()
}

/// Labels every IPU. The successor of an IPU ending at `t` is the IPU (any
/// speaker) with the smallest onset strictly after `t - overlap_grace`,
/// skipping IPUs that lie wholly inside another speaker's IPU. Yield iff the
/// successor's speaker differs; no successor means hold. Equal onsets resolve
/// to the speaker listed first in the session.
pub fn label_turns(
    session: &Session,
    ipus_by_speaker: &BTreeMap<String, Vec<Ipu>>,
    overlap_grace: f64,
) -> Vec<TurnInstance> {
    let order: Vec<&str> = session.speakers.iter().map(|s| s.speaker_id.as_str()).collect();
    let rank = |id: &str| order.iter().position(|s| *s == id).unwrap_or(usize::MAX);
    let mut all: Vec<(usize, &Ipu)> = ipus_by_speaker
        .iter()
        .flat_map(|(id, v)| {
            let r = rank(id);
            v.iter().map(move |u| (r, u))
        })
        .collect();
    all.sort_by(|a, b| a.1.onset.total_cmp(&b.1.onset).then(a.0.cmp(&b.0)));

    let inside_other = |u: &Ipu| {
        all.iter().any(|(_, o)| {
            o.speaker_id != u.speaker_id && o.onset <= u.onset && u.offset <= o.offset
        })
    };
    let eligible: Vec<bool> = all.iter().map(|(_, u)| !inside_other(u)).collect();

    let mut out = Vec::with_capacity(all.len());
    for (idx, (_, u)) in all.iter().enumerate() {
        let cutoff = u.offset - overlap_grace;
        let next = all
            .iter()
            .enumerate()
            .filter(|(j, (_, v))| *j != idx && eligible[*j] && v.onset > cutoff)
            .map(|(_, (_, v))| v)
            .next();
        let (label, next_speaker_id) = match next {
            Some(v) if v.speaker_id != u.speaker_id => (TurnLabel::Yield, Some(v.speaker_id.clone())),
            Some(v) => (TurnLabel::Hold, Some(v.speaker_id.clone())),
            None => (TurnLabel::Hold, None),
        };
        out.push(TurnInstance {
            session_id: session.session_id.clone(),
            ipu: (*u).clone(),
            label,
            gestures: Vec::new(),
            next_speaker_id,
            split: Split::Unassigned,
        });
    }
    out
}

/// Attaches the speaker's gesture spans whose overlap with the IPU is
/// strictly positive.
pub fn attach_gestures(mut turn: TurnInstance, track: &SpeakerTrack) -> TurnInstance {
    turn.gestures = track
        .gestures
        .iter()
        .filter(|g| g.offset.min(turn.ipu.offset) - g.onset.max(turn.ipu.onset) > 0.0)
        .copied()
        .collect();
    turn
}

/// Segments, labels and attaches gestures for one session.
pub fn segment_session(session: &Session, cfg: &SegmentConfig) -> Vec<TurnInstance> {
    let ipus = session_ipus(session, cfg);
    label_turns(session, &ipus, cfg.overlap_grace_s)
        .into_iter()
        .map(|t| {
            let track = session.speaker(&t.ipu.speaker_id).expect("speaker of own IPU");
            attach_gestures(t, track)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.10,
            test: 0.20,
        }
    }
}

/// `(train, val, test)` counts: validation and test sizes are floored, the
/// remainder goes to train.
pub fn split_sizes(n: usize, r: &SplitRatios) -> (usize, usize, usize) {
    if n < 3 {
        return (n, 0, 0);
    }
    let val = (n as f64 * r.val).floor() as usize;
    let test = (n as f64 * r.test).floor() as usize;
    (n - val - test, val, test)
}

/// Assigns splits by seeded shuffle. With `by_session`, whole sessions are
/// assigned (shuffled session order, filled train, then val, then test up to
/// the per-turn targets).
pub fn split_dataset(
    mut turns: Vec<TurnInstance>,
    ratios: &SplitRatios,
    seed: u64,
    by_session: bool,
) -> Result<Vec<TurnInstance>> {
    let sum = ratios.train + ratios.val + ratios.test;
    if (sum - 1.0).abs() > 1e-9 || [ratios.train, ratios.val, ratios.test].iter().any(|r| *r < 0.0) {
        return Err(Error::config("split.ratios", format!("must be non-negative and sum to 1, got {sum}")));
    }
    let n = turns.len();
    let (n_train, n_val, _) = split_sizes(n, ratios);
    let mut rng = Rng::with_stream(seed, 0x5b1);
    if by_session {
        let mut ids: Vec<String> = turns.iter().map(|t| t.session_id.clone()).collect();
        ids.sort();
        ids.dedup();
        rng.shuffle(&mut ids);
        let mut count: BTreeMap<&str, usize> = BTreeMap::new();
        for t in &turns {
            *count.entry(t.session_id.as_str()).or_default() += 1;
        }
        let mut assign: BTreeMap<String, Split> = BTreeMap::new();
        let mut filled = 0;
        for id in &ids {
            let split = if filled < n_train {
                Split::Train
            } else if filled < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            filled += count[id.as_str()];
            assign.insert(id.clone(), split);
        }
        for t in &mut turns {
            t.split = assign[&t.session_id];
        }
        return Ok(turns);
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    for (rank, &i) in order.iter().enumerate() {
        turns[i].split = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(turns)
}

/// Gesture counts and shares for the turns of one label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelStats {
    pub total_turns: usize,
    pub turns_with_gesture: usize,
    pub gesture_counts: BTreeMap<GestureType, usize>,
    /// Percent of attached gesture instances per type; zeros when
    /// `undefined`.
    pub percentages: BTreeMap<GestureType, f64>,
    /// No gesture instance exists for this label.
    pub undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub hold: LabelStats,
    #[serde(rename = "yield")]
    pub yield_: LabelStats,
}

impl CorpusStats {
    pub fn get(&self, label: TurnLabel) -> &LabelStats {
        match label {
            TurnLabel::Hold => &self.hold,
            TurnLabel::Yield => &self.yield_,
        }
    }
}

pub fn corpus_stats(turns: &[TurnInstance]) -> CorpusStats {
    let pairs: Vec<(TurnLabel, &[GestureSpan])> = turns.iter().map(|t| (t.label, t.gestures.as_slice())).collect();
    stats_of(&pairs)
}

pub fn record_stats(turns: &[TurnRecord]) -> CorpusStats {
    let pairs: Vec<(TurnLabel, &[GestureSpan])> = turns.iter().map(|t| (t.label, t.gestures.as_slice())).collect();
    stats_of(&pairs)
}

fn stats_of(turns: &[(TurnLabel, &[GestureSpan])]) -> CorpusStats {
    let row = |label: TurnLabel| {
        let mut counts: BTreeMap<GestureType, usize> = GestureType::ALL.iter().map(|g| (*g, 0)).collect();
        let mut total = 0;
        let mut with = 0;
        for (_, gestures) in turns.iter().filter(|t| t.0 == label) {
            total += 1;
            if !gestures.is_empty() {
                with += 1;
            }
            for g in gestures.iter() {
                *counts.get_mut(&g.gtype).expect("all types present") += 1;
            }
        }
        let instances: usize = counts.values().sum();
        let percentages = counts
            .iter()
            .map(|(g, c)| {
                let p = if instances == 0 { 0.0 } else { 100.0 * *c as f64 / instances as f64 };
                (*g, p)
            })
            .collect();
        LabelStats {
            total_turns: total,
            turns_with_gesture: with,
            gesture_counts: counts,
            percentages,
            undefined: instances == 0,
        }
    };
    CorpusStats {
        hold: row(TurnLabel::Hold),
        yield_: row(TurnLabel::Yield),
    }
}

/// Renders stats in the De / Di / Ic / Me column order.
pub fn format_stats(stats: &CorpusStats) -> String {
    let cols = [
        GestureType::Deictic,
        GestureType::Discourse,
        GestureType::Iconic,
        GestureType::Metaphoric,
    ];
    let mut out = String::from("label  |   De    Di    Ic    Me | turns w sem gesture (total)\n");
    for label in [TurnLabel::Hold, TurnLabel::Yield] {
        let s = stats.get(label);
        out.push_str(&format!("{:<6} |", label.to_string()));
        for c in cols {
            out.push_str(&format!(" {:>5.1}", s.percentages[&c]));
        }
        out.push_str(&format!(" | {} ({})", s.turns_with_gesture, s.total_turns));
        if s.undefined {
            out.push_str("  [no gestures: percentages undefined]");
        }
        out.push('\n');
    }
    out
}

/// One line of the turn dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRecord {
    pub session_id: String,
    pub speaker_id: String,
    pub onset: f64,
    pub offset: f64,
    pub transcript: String,
    pub label: TurnLabel,
    pub gestures: Vec<GestureSpan>,
    pub split: Split,
    #[serde(default)]
    pub next_speaker_id: Option<String>,
}

impl From<&TurnInstance> for TurnRecord {
    fn from(t: &TurnInstance) -> Self {
        Self {
            session_id: t.session_id.clone(),
            speaker_id: t.ipu.speaker_id.clone(),
            onset: t.ipu.onset,
            offset: t.ipu.offset,
            transcript: t.ipu.transcript(),
            label: t.label,
            gestures: t.gestures.clone(),
            split: t.split,
            next_speaker_id: t.next_speaker_id.clone(),
        }
    }
}

impl TurnRecord {
    pub fn tokens(&self) -> Vec<String> {
        self.transcript.split_whitespace().map(str::to_string).collect()
    }
}

pub fn write_turns_jsonl(turns: &[TurnRecord]) -> String {
    let mut out = String::new();
    for t in turns {
        out.push_str(&serde_json::to_string(t).expect("turn record serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_turns_jsonl(text: &str) -> Result<Vec<TurnRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: format!("line {}", i + 1).into(),
                message: e.to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(onset: f64, offset: f64) -> TimedWord {
        TimedWord {
            text: "w".into(),
            onset,
            offset,
        }
    }

    fn track(id: &str, words: &[(f64, f64)]) -> SpeakerTrack {
        let mut t = SpeakerTrack::new(id);
        t.words = words.iter().map(|(a, b)| w(*a, *b)).collect();
        t
    }

    fn ipu(id: &str, onset: f64, offset: f64) -> Ipu {
        Ipu {
            speaker_id: id.into(),
            onset,
            offset,
            words: vec![w(onset, offset)],
        }
    }

    #[test]
    fn sub_threshold_gap_joins() {
        let ipus = build_ipus(&track("a", &[(0.0, 0.5), (0.6, 1.0)]), 0.2);
        assert_eq!(ipus.len(), 1);
        assert_eq!((ipus[0].onset, ipus[0].offset), (0.0, 1.0));
    }

    #[test]
    fn threshold_gap_splits() {
        let ipus = build_ipus(&track("a", &[(0.0, 0.5), (0.75, 1.0)]), 0.2);
        assert_eq!(ipus.len(), 2);
    }

    #[test]
    fn gap_exactly_at_threshold_splits() {
        let ipus = build_ipus(&track("a", &[(0.0, 0.5), (0.75, 1.0)]), 0.25);
        assert_eq!(ipus.len(), 2);
    }

    #[test]
    fn single_word_ipu() {
        let ipus = build_ipus(&track("a", &[(1.0, 1.4)]), 0.2);
        assert_eq!(ipus.len(), 1);
        assert_eq!((ipus[0].onset, ipus[0].offset), (1.0, 1.4));
        assert!(build_ipus(&track("a", &[]), 0.2).is_empty());
    }

    #[test]
    fn short_ipu_merges_into_only_neighbor() {
        let out = merge_short_ipus(vec![ipu("a", 0.0, 0.1), ipu("a", 0.5, 2.0)], 0.3);
        assert_eq!(out.len(), 1);
        assert_eq!((out[0].onset, out[0].offset), (0.0, 2.0));
        assert_eq!(out[0].words.len(), 2);
        assert!(out[0].words[0].onset < out[0].words[1].onset);
    }

    #[test]
    fn merge_prefers_nearer_then_earlier() {
        let out = merge_short_ipus(
            vec![ipu("a", 0.0, 1.0), ipu("a", 1.5, 1.6), ipu("a", 1.8, 3.0)],
            0.3,
        );
        assert_eq!(out.len(), 2);
        assert_eq!((out[1].onset, out[1].offset), (1.5, 3.0));
        let tie = merge_short_ipus(
            vec![ipu("a", 0.0, 1.0), ipu("a", 1.5, 1.6), ipu("a", 2.1, 3.0)],
            0.3,
        );
        assert_eq!((tie[0].onset, tie[0].offset), (0.0, 1.6));
    }

    #[test]
    fn lone_short_ipu_kept() {
        let out = merge_short_ipus(vec![ipu("a", 0.0, 0.1)], 0.3);
        assert_eq!(out, vec![ipu("a", 0.0, 0.1)]);
    }

    #[test]
    fn long_ipus_unchanged() {
        let v = vec![ipu("a", 0.0, 1.0), ipu("a", 1.5, 2.0)];
        assert_eq!(merge_short_ipus(v.clone(), 0.3), v);
    }

    fn session(tracks: Vec<SpeakerTrack>) -> Session {
        Session {
            session_id: "s".into(),
            duration_s: 10.0,
            speakers: tracks,
        }
    }

    #[test]
    fn yield_to_other_speaker() {
        let s = session(vec![track("A", &[(0.0, 1.0)]), track("B", &[(1.3, 2.0)])]);
        let turns = segment_session(&s, &SegmentConfig::default());
        let a = turns.iter().find(|t| t.ipu.speaker_id == "A").unwrap();
        assert_eq!(a.label, TurnLabel::Yield);
        assert_eq!(a.next_speaker_id.as_deref(), Some("B"));
        let b = turns.iter().find(|t| t.ipu.speaker_id == "B").unwrap();
        assert_eq!((b.label, b.next_speaker_id.as_deref()), (TurnLabel::Hold, None));
    }

    #[test]
    fn hold_when_same_speaker_continues() {
        let s = session(vec![track("A", &[(0.0, 1.0), (1.25, 2.0)]), track("B", &[(3.0, 4.0)])]);
        let turns = segment_session(&s, &SegmentConfig::default());
        assert_eq!(turns[0].label, TurnLabel::Hold);
        assert_eq!(turns[0].next_speaker_id.as_deref(), Some("A"));
        assert_eq!(turns[1].label, TurnLabel::Yield);
    }

    #[test]
    fn single_speaker_all_hold() {
        let s = session(vec![track("A", &[(0.0, 1.0), (1.5, 2.0), (3.0, 4.0)])]);
        let turns = segment_session(&s, &SegmentConfig::default());
        assert_eq!(turns.len(), 3);
        assert!(turns.iter().all(|t| t.label == TurnLabel::Hold));
    }

    #[test]
    fn backchannel_is_not_a_successor() {
        // B's backchannel lies inside C's IPU, so C (not B) follows A.
        let s = session(vec![
            track("A", &[(0.0, 1.0), (3.5, 4.0)]),
            track("B", &[(1.5, 1.9)]),
            track("C", &[(1.2, 2.5)]),
        ]);
        let turns = segment_session(&s, &SegmentConfig::default());
        let a0 = &turns[0];
        assert_eq!(a0.label, TurnLabel::Yield);
        assert_eq!(a0.next_speaker_id.as_deref(), Some("C"));
    }

    fn turn_at(onset: f64, offset: f64) -> TurnInstance {
        TurnInstance {
            session_id: "s".into(),
            ipu: ipu("A", onset, offset),
            label: TurnLabel::Hold,
            gestures: vec![],
            next_speaker_id: None,
            split: Split::Unassigned,
        }
    }

    #[test]
    fn gesture_attachment_requires_positive_overlap() {
        let mut t = SpeakerTrack::new("A");
        let g = |a, b| GestureSpan {
            onset: a,
            offset: b,
            gtype: GestureType::Iconic,
        };
        t.gestures = vec![g(0.5, 1.5), g(2.1, 2.5), g(0.2, 1.0), g(2.0, 2.4)];
        let out = attach_gestures(turn_at(1.0, 2.0), &t);
        assert_eq!(out.gestures, vec![g(0.5, 1.5)]);
    }

    #[test]
    fn split_sizes_floor_rule() {
        let r = SplitRatios::default();
        assert_eq!(split_sizes(10, &r), (7, 1, 2));
        assert_eq!(split_sizes(12_809, &r), (8968, 1280, 2561));
        assert_eq!(split_sizes(2, &r), (2, 0, 0));
    }

    #[test]
    fn split_is_deterministic_and_complete() {
        let turns: Vec<_> = (0..10).map(|i| turn_at(i as f64, i as f64 + 0.5)).collect();
        let a = split_dataset(turns.clone(), &SplitRatios::default(), 0, false).unwrap();
        let b = split_dataset(turns, &SplitRatios::default(), 0, false).unwrap();
        assert_eq!(a, b);
        let count = |s| a.iter().filter(|t| t.split == s).count();
        assert_eq!((count(Split::Train), count(Split::Val), count(Split::Test)), (7, 1, 2));
    }

    #[test]
    fn tiny_split_all_train() {
        let turns: Vec<_> = (0..2).map(|i| turn_at(i as f64, i as f64 + 0.5)).collect();
        let out = split_dataset(turns, &SplitRatios::default(), 3, false).unwrap();
        assert!(out.iter().all(|t| t.split == Split::Train));
    }

    #[test]
    fn bad_ratios_rejected() {
        let r = SplitRatios {
            train: 0.7,
            val: 0.2,
            test: 0.2,
        };
        assert!(split_dataset(vec![], &r, 0, false).is_err());
    }

    #[test]
    fn stats_by_hand() {
        let g = |gtype| GestureSpan {
            onset: 0.0,
            offset: 1.0,
            gtype,
        };
        let mut a = turn_at(0.0, 1.0);
        a.gestures = vec![g(GestureType::Deictic), g(GestureType::Iconic)];
        let mut b = turn_at(1.0, 2.0);
        b.gestures = vec![g(GestureType::Deictic), g(GestureType::Iconic)];
        let c = turn_at(2.0, 3.0);
        let stats = corpus_stats(&[a, b, c]);
        assert_eq!(stats.hold.total_turns, 3);
        assert_eq!(stats.hold.turns_with_gesture, 2);
        assert_eq!(stats.hold.percentages[&GestureType::Deictic], 50.0);
        assert_eq!(stats.hold.percentages[&GestureType::Iconic], 50.0);
        assert_eq!(stats.hold.percentages[&GestureType::Discourse], 0.0);
        assert!(stats.yield_.undefined);
    }

    #[test]
    fn empty_stats_flagged() {
        let s = corpus_stats(&[]);
        assert_eq!(s.hold.total_turns, 0);
        assert!(s.hold.undefined && s.yield_.undefined);
        assert!(format_stats(&s).contains("undefined"));
    }
}
