use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use semturn_core::corpus::write_atomic;
use semturn_core::experiment::{
    build_dataset, features_for, load_corpus, load_turns, parse_config, RunConfig, RunSidecar, TokenRecord,
};
use semturn_core::features::MotionConfig;
use semturn_core::harness::{
    compare_reports, compute_metrics, embedding_projection, modality_weight_means, predict, run_seeds_with_models,
    write_projection_csv, write_weights_csv, ExperimentReport, SeedResult,
};
use semturn_core::model::{Fusion, Modality};
use semturn_core::pipeline::turn_tokens;
use semturn_core::segment::{
    format_stats, record_stats, segment_session, split_dataset, write_turns_jsonl, SegmentConfig, Split, SplitRatios,
    TurnRecord,
};
use semturn_core::synth::{generate_benchmark, SynthConfig};
use semturn_core::vqvae::{labeled_windows, train_vqvae, VqConfig, WindowConfig};
use semturn_core::{Error, TurnModel32, VqVae32};

/// Multimodal turn-taking toolkit.
///
/// Exit codes: 0 success, 1 invalid input or usage, 2 runtime failure.
/// Configuration files are JSON; command-line flags override file values.
#[derive(Parser)]
#[command(name = "semturn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark corpus with a planted gesture signal.
    Synth(SynthArgs),
    /// Segment a corpus into IPUs, label hold/yield and assign splits.
    Segment(SegmentArgs),
    /// Print per-label gesture statistics of a turn file.
    Stats(StatsArgs),
    /// Train the gesture VQ-VAE on motion windows of training turns.
    TrainVqvae(TrainVqArgs),
    /// Write gesture token sequences for every turn.
    Tokenize(TokenizeArgs),
    /// Train and evaluate a turn model over several seeds.
    Train(TrainArgs),
    /// Evaluate a saved turn model.
    Evaluate(EvaluateArgs),
    /// Randomization test between two reports' stored predictions.
    Compare(CompareArgs),
    /// Export embedding projections and modality weights as CSV.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Generator configuration (JSON); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    sessions: usize,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Session length in seconds (overrides the config).
    #[arg(long)]
    session_length_s: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Silence that starts a new IPU.
    #[arg(long, default_value_t = 200.0)]
    gap_ms: f64,
    /// IPUs shorter than this merge into a neighbor.
    #[arg(long, default_value_t = 300.0)]
    min_ipu_ms: f64,
    #[arg(long, default_value_t = 0.0)]
    overlap_grace_ms: f64,
    /// Seed of the split shuffle.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    train: f64,
    #[arg(long, default_value_t = 0.1)]
    val: f64,
    #[arg(long, default_value_t = 0.2)]
    test: f64,
    /// Assign whole sessions to splits.
    #[arg(long)]
    by_session: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    turns: PathBuf,
    /// Print JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct TrainVqArgs {
    #[arg(long)]
    turns: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// VQ-VAE configuration (JSON); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Semantic alignment loss: on uses weight 0.1, off uses 0.
    #[arg(long, value_enum, default_value = "on")]
    semantic: OnOff,
    #[arg(long, default_value_t = 120)]
    epochs: usize,
    /// Codebook size [default: 256]
    #[arg(long)]
    codebook_size: Option<usize>,
    /// Embedding dimension [default: 256]
    #[arg(long)]
    dim: Option<usize>,
    /// Convolution channels [default: 128]
    #[arg(long)]
    channels: Option<usize>,
    /// Batch size [default: 512]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Learning rate [default: 3e-4]
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training window length in seconds.
    #[arg(long, default_value_t = 1.6)]
    window_s: f64,
    #[arg(long, default_value_t = 0.8)]
    hop_s: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TokenizeArgs {
    /// VQ-VAE checkpoint.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    turns: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Trailing motion window per turn, seconds.
    #[arg(long, default_value_t = 4.0)]
    window_s: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration (JSON); flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    turns: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// VQ-VAE checkpoint for the gesture expert.
    #[arg(long)]
    vq: Option<PathBuf>,
    /// Comma-separated seeds [default: 0,1,2]
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated subset of text,audio,gesture [default: all]
    #[arg(long, value_delimiter = ',')]
    modalities: Option<Vec<String>>,
    /// moe, concat or lmf [default: moe]
    #[arg(long)]
    fusion: Option<String>,
    /// Expert width [default: 256]
    #[arg(long)]
    d: Option<usize>,
    /// Whether the VQ-VAE was trained with semantic alignment (recorded).
    #[arg(long)]
    semantic_gestures: Option<bool>,
    /// [default: 20]
    #[arg(long)]
    epochs: Option<usize>,
    /// [default: 5e-5]
    #[arg(long)]
    lr: Option<f64>,
    /// [default: 32]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Inverse-frequency class weights in the loss.
    #[arg(long)]
    class_weighting: bool,
    /// Text embedding dimension [default: 384]
    #[arg(long)]
    text_dim: Option<usize>,
    /// Report identifier.
    #[arg(long)]
    id: Option<String>,
    /// Save the first seed's model here (plus sidecars).
    #[arg(long)]
    model_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Turn-model checkpoint written by `train --model-out`.
    #[arg(long)]
    model: PathBuf,
    /// Turn file (defaults to the one the model was trained with).
    #[arg(long)]
    turns: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// train, val or test.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    /// Baseline report.
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write report A with the significance result attached.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Turn-model checkpoint written by `train --model-out`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    turns: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// train, val, test or all.
    #[arg(long, default_value = "test")]
    split: String,
    /// Drop turns without an annotated gesture from the projection.
    #[arg(long)]
    omit_none: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let missing_input = matches!(&e, Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound);
        if e.is_validation() || missing_input {
            Failure::Invalid(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn invalid<T>(msg: impl Into<String>) -> Outcome<T> {
    Err(Failure::Invalid(msg.into()))
}

fn read_text(path: &Path) -> Outcome<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Outcome {
    let text = serde_json::to_string_pretty(v).map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(write_atomic(path, text + "\n")?)
}

fn parse_split(s: &str) -> Outcome<Option<Split>> {
    Ok(Some(match s {
        "train" => Split::Train,
        "val" => Split::Val,
        "test" => Split::Test,
        "all" => return Ok(None),
        other => return invalid(format!("unknown split `{other}` (expected train, val, test or all)")),
    }))
}

/// Sets `value` at a dotted key path inside a JSON object.
fn set_path(root: &mut Value, path: &str, value: Value) {
    let mut cur = root;
    let keys: Vec<&str> = path.split('.').collect();
    for k in &keys[..keys.len() - 1] {
        if !cur.get(*k).is_some_and(Value::is_object) {
            cur[*k] = json!({});
        }
        cur = &mut cur[*k];
    }
    cur[keys[keys.len() - 1]] = value;
}

fn load_config_value(path: Option<&Path>) -> Outcome<Value> {
    match path {
        Some(p) => {
            let v: Value = serde_json::from_str(&read_text(p)?)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", p.display())))?;
            if !v.is_object() {
                return invalid(format!("{}: configuration must be a JSON object", p.display()));
            }
            Ok(v)
        }
        None => Ok(json!({})),
    }
}

fn resolve<T: serde::de::DeserializeOwned>(v: &Value, origin: Option<&Path>) -> Outcome<T> {
    Ok(parse_config(&v.to_string(), origin.unwrap_or(Path::new("<flags>")))?)
}

fn synth(a: SynthArgs) -> Outcome {
    let mut v = load_config_value(a.config.as_deref())?;
    if let Some(s) = a.seed {
        set_path(&mut v, "seed", json!(s));
    }
    if let Some(l) = a.session_length_s {
        set_path(&mut v, "session_length_s", json!(l));
    }
    let cfg: SynthConfig = resolve(&v, a.config.as_deref())?;
    cfg.validate()?;
    if a.sessions == 0 {
        return invalid("--sessions must be positive");
    }
    std::fs::create_dir_all(&a.out).map_err(|e| Failure::Runtime(format!("{}: {e}", a.out.display())))?;
    let m = generate_benchmark(&cfg, a.sessions, &a.out)?;
    println!(
        "wrote {} sessions to {} ({} turns, {} hold / {} yield)",
        m.sessions.len(),
        a.out.display(),
        m.totals.turns,
        m.totals.hold,
        m.totals.yield_
    );
    Ok(())
}

fn segment(a: SegmentArgs) -> Outcome {
    let cfg = SegmentConfig {
        gap_threshold_s: a.gap_ms / 1000.0,
        min_ipu_s: a.min_ipu_ms / 1000.0,
        overlap_grace_s: a.overlap_grace_ms / 1000.0,
    };
    if !(cfg.gap_threshold_s > 0.0) || cfg.min_ipu_s < 0.0 || cfg.overlap_grace_s < 0.0 {
        return invalid("--gap-ms must be positive; --min-ipu-ms and --overlap-grace-ms non-negative");
    }
    let sessions = load_corpus(&a.corpus)?;
    let turns: Vec<_> = sessions.iter().flat_map(|s| segment_session(s, &cfg)).collect();
    let ratios = SplitRatios {
        train: a.train,
        val: a.val,
        test: a.test,
    };
    let turns = split_dataset(turns, &ratios, a.seed, a.by_session)?;
    let records: Vec<TurnRecord> = turns.iter().map(TurnRecord::from).collect();
    write_atomic(&a.out, write_turns_jsonl(&records))?;
    let stats = record_stats(&records);
    println!(
        "{} turns ({} hold / {} yield) from {} sessions",
        records.len(),
        stats.hold.total_turns,
        stats.yield_.total_turns,
        sessions.len()
    );
    Ok(())
}

fn stats(a: StatsArgs) -> Outcome {
    let records = load_turns(&a.turns)?;
    let s = record_stats(&records);
    if a.json {
        println!("{}", serde_json::to_string_pretty(&s).map_err(|e| Failure::Runtime(e.to_string()))?);
    } else {
        print!("{}", format_stats(&s));
    }
    Ok(())
}

fn train_vqvae_cmd(a: TrainVqArgs) -> Outcome {
    let mut v = load_config_value(a.config.as_deref())?;
    let semantic = match a.semantic {
        OnOff::On => 0.1,
        OnOff::Off => 0.0,
    };
    set_path(&mut v, "semantic_weight", json!(semantic));
    set_path(&mut v, "epochs", json!(a.epochs));
    set_path(&mut v, "seed", json!(a.seed));
    for (k, x) in [
        ("codebook_size", a.codebook_size.map(|x| json!(x))),
        ("dim", a.dim.map(|x| json!(x))),
        ("channels", a.channels.map(|x| json!(x))),
        ("batch_size", a.batch_size.map(|x| json!(x))),
        ("lr", a.lr.map(|x| json!(x))),
    ] {
        if let Some(x) = x {
            set_path(&mut v, k, x);
        }
    }
    let cfg: VqConfig = resolve(&v, a.config.as_deref())?;
    cfg.validate()?;
    let wcfg = WindowConfig {
        window_s: a.window_s,
        hop_s: a.hop_s,
    };
    if !(wcfg.window_s > 0.0 && wcfg.hop_s > 0.0) {
        return invalid("--window-s and --hop-s must be positive");
    }
    let motion = MotionConfig::default();
    let records = load_turns(&a.turns)?;
    let sessions = load_corpus(&a.corpus)?;
    let use_all = !records.iter().any(|r| r.split == Split::Train);
    let mut windows = Vec::new();
    for s in &sessions {
        for sp in &s.speakers {
            let spans: Vec<(f64, f64)> = records
                .iter()
                .filter(|r| {
                    (use_all || r.split == Split::Train) && r.session_id == s.session_id && r.speaker_id == sp.speaker_id
                })
                .map(|r| (r.onset, r.offset))
                .collect();
            windows.extend(labeled_windows(sp, &spans, &wcfg, &motion)?);
        }
    }
    if windows.is_empty() {
        return Err(Failure::Runtime("no motion windows found for the training turns".into()));
    }
    let (vq, log) = train_vqvae::<f32>(&windows, &cfg)?;
    vq.save(&a.out, &motion)?;
    let mut log_path = a.out.clone().into_os_string();
    log_path.push(".log.json");
    write_json(Path::new(&log_path), &log)?;
    if let Some(last) = log.epochs.last() {
        println!(
            "trained on {} windows: recon {:.4}, semantic {:.4}, {} codes used",
            windows.len(),
            last.recon,
            last.semantic,
            last.codes_used
        );
    }
    Ok(())
}

fn tokenize(a: TokenizeArgs) -> Outcome {
    let (vq, side) = VqVae32::load(&a.model)?;
    let motion = MotionConfig {
        window_s: a.window_s,
        ..side.motion
    };
    if !(motion.window_s > 0.0) {
        return invalid("--window-s must be positive");
    }
    let records = load_turns(&a.turns)?;
    let sessions = load_corpus(&a.corpus)?;
    let mut out = String::new();
    let mut written = 0usize;
    for s in &sessions {
        for r in records.iter().filter(|r| r.session_id == s.session_id) {
            let seq = turn_tokens(s, r, &motion, &vq)?;
            out.push_str(&serde_json::to_string(&TokenRecord::new(r, seq)).map_err(|e| Failure::Runtime(e.to_string()))?);
            out.push('\n');
            written += 1;
        }
    }
    if written != records.len() {
        return invalid(format!("{} turns reference sessions missing from the corpus", records.len() - written));
    }
    write_atomic(&a.out, out)?;
    println!("wrote {written} token sequences");
    Ok(())
}

fn train(a: TrainArgs) -> Outcome {
    let mut v = load_config_value(a.config.as_deref())?;
    let path_str = |p: &PathBuf| json!(p.to_string_lossy());
    let overrides: Vec<(&str, Option<Value>)> = vec![
        ("id", a.id.as_ref().map(|x| json!(x))),
        ("turns", a.turns.as_ref().map(path_str)),
        ("corpus", a.corpus.as_ref().map(path_str)),
        ("vq", a.vq.as_ref().map(path_str)),
        ("seeds", a.seeds.as_ref().map(|x| json!(x))),
        ("model.modalities", a.modalities.as_ref().map(|x| json!(x))),
        ("model.fusion", a.fusion.as_ref().map(|x| json!(x))),
        ("model.d", a.d.map(|x| json!(x))),
        ("model.semantic_gestures", a.semantic_gestures.map(|x| json!(x))),
        ("train.epochs", a.epochs.map(|x| json!(x))),
        ("train.lr", a.lr.map(|x| json!(x))),
        ("train.batch_size", a.batch_size.map(|x| json!(x))),
        ("train.class_weighting", a.class_weighting.then(|| json!(true))),
        ("features.text.dim", a.text_dim.map(|x| json!(x))),
    ];
    for (k, x) in overrides {
        if let Some(x) = x {
            set_path(&mut v, k, x);
        }
    }
    let run: RunConfig = resolve(&v, a.config.as_deref())?;
    run.validate()?;
    let vq = match (&run.vq, run.model.uses(Modality::Gesture)) {
        (Some(p), true) => Some(VqVae32::load(p)?),
        _ => None,
    };
    let features = features_for(&run.features, vq.as_ref().map(|(_, s)| &s.motion));
    let records = load_turns(&run.turns)?;
    let sessions = load_corpus(&run.corpus)?;
    let (ds, standardizer) = build_dataset(&sessions, &records, &features, vq.as_ref().map(|(m, _)| m), None)?;
    let snapshot = json!({ "run": &run, "features": &features });
    let (report, models) = run_seeds_with_models::<f32>(&run.id(), &ds, &run.model, &run.train, &run.seeds, snapshot)?;
    write_json(&a.out, &report)?;
    if let Some(p) = &a.model_out {
        models[0].save(p, run.seeds[0])?;
        RunSidecar {
            run: run.clone(),
            features,
            audio_standardizer: standardizer,
            seed: run.seeds[0],
        }
        .save(p)?;
    }
    let m = report.mean_metrics;
    println!(
        "{}: accuracy {:.2}, macro-F1 {:.2} (hold {:.2}, yield {:.2}) over {} seeds",
        report.id,
        m.accuracy,
        m.macro_f1,
        m.f1_hold,
        m.f1_yield,
        report.seeds.len()
    );
    if let Some(w) = &report.modality_weights {
        let parts: Vec<String> = w.iter().map(|(k, x)| format!("{k} {x:.3}")).collect();
        println!("modality weights: {}", parts.join(", "));
    }
    Ok(())
}

struct Loaded {
    model: TurnModel32,
    side: RunSidecar,
    ds: semturn_core::harness::Dataset,
}

fn load_trained(model: &Path, turns: Option<&PathBuf>, corpus: Option<&PathBuf>) -> Outcome<Loaded> {
    let (m, _) = TurnModel32::load(model)?;
    let side = RunSidecar::load(model)?;
    let vq = match (&side.run.vq, m.config.uses(Modality::Gesture)) {
        (Some(p), true) => Some(VqVae32::load(p)?.0),
        _ => None,
    };
    let records = load_turns(turns.unwrap_or(&side.run.turns))?;
    let sessions = load_corpus(corpus.unwrap_or(&side.run.corpus))?;
    let (ds, _) = build_dataset(&sessions, &records, &side.features, vq.as_ref(), side.audio_standardizer.as_ref())?;
    if ds.dims != m.dims {
        return invalid("turn features do not match the model's input dimensions");
    }
    Ok(Loaded { model: m, side, ds })
}

fn evaluate(a: EvaluateArgs) -> Outcome {
    let split = parse_split(&a.split)?;
    let l = load_trained(&a.model, a.turns.as_ref(), a.corpus.as_ref())?;
    let idx: Vec<usize> = match split {
        Some(s) => l.ds.indices(s),
        None => (0..l.ds.examples.len()).collect(),
    };
    if idx.is_empty() {
        return invalid(format!("split `{}` has no turns", a.split));
    }
    let labels = l.ds.labels(&idx);
    let (preds, _) = predict(&l.model, &l.ds, &idx)?;
    let metrics = compute_metrics(&labels, &preds)?;
    let weights = if l.model.config.fusion == Fusion::Moe {
        let mut sub = l.ds.examples.clone();
        for (i, e) in sub.iter_mut().enumerate() {
            e.split = if idx.binary_search(&i).is_ok() { Split::Test } else { Split::Unassigned };
        }
        let tmp = semturn_core::harness::Dataset::new(sub, l.ds.dims.gesture_len, l.ds.codebook.clone())?;
        Some(modality_weight_means(&l.model, &tmp, Split::Test)?)
    } else {
        None
    };
    let report = ExperimentReport {
        id: l.side.run.id(),
        config: json!({ "run": &l.side.run, "features": &l.side.features, "evaluated_split": a.split }),
        seeds: vec![SeedResult {
            seed: l.side.seed,
            metrics,
            best_epoch: 0,
            val_macro_f1: 0.0,
            history: Vec::new(),
            modality_weights: weights.clone(),
            predictions: preds.iter().map(|p| *p as u8).collect(),
        }],
        mean_metrics: metrics,
        modality_weights: weights,
        significance: None,
        test_keys: idx.iter().map(|&i| l.ds.examples[i].key()).collect(),
        test_labels: labels.iter().map(|x| *x as u8).collect(),
        threads: 1,
    };
    write_json(&a.out, &report)?;
    println!(
        "{} turns: accuracy {:.2}, macro-F1 {:.2} (hold {:.2}, yield {:.2})",
        idx.len(),
        metrics.accuracy,
        metrics.macro_f1,
        metrics.f1_hold,
        metrics.f1_yield
    );
    Ok(())
}

fn compare(a: CompareArgs) -> Outcome {
    let ra = ExperimentReport::from_json(&read_text(&a.a)?)?;
    let rb = ExperimentReport::from_json(&read_text(&a.b)?)?;
    let sig = compare_reports(&ra, &rb, a.iterations, a.seed)?;
    println!(
        "{} vs {}: macro-F1 {:.2} vs {:.2}, p = {:.4} ({} iterations)",
        ra.id, rb.id, ra.mean_metrics.macro_f1, rb.mean_metrics.macro_f1, sig.p_value, sig.iterations
    );
    if let Some(out) = &a.out {
        let mut ra = ra;
        ra.significance = Some(sig);
        write_json(out, &ra)?;
    }
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Outcome {
    let split = parse_split(&a.split)?;
    let l = load_trained(&a.model, a.turns.as_ref(), a.corpus.as_ref())?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Failure::Runtime(format!("{}: {e}", a.out_dir.display())))?;
    let mut wrote = Vec::new();
    if l.ds.codebook.is_some() {
        let rows = embedding_projection(&l.ds, split, a.omit_none)?;
        let mut buf = Vec::new();
        write_projection_csv(&rows, &mut buf)?;
        let p = a.out_dir.join("projection.csv");
        write_atomic(&p, buf)?;
        wrote.push(p);
    }
    if l.model.config.fusion == Fusion::Moe {
        let w = modality_weight_means(&l.model, &l.ds, split.unwrap_or(Split::Test))?;
        let mut buf = Vec::new();
        write_weights_csv(&w, &mut buf)?;
        let p = a.out_dir.join("modality_weights.csv");
        write_atomic(&p, buf)?;
        wrote.push(p);
    }
    if wrote.is_empty() {
        return invalid("model has neither a gesture codebook nor MoE fusion; nothing to export");
    }
    for p in wrote {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Segment(a) => segment(a),
        Command::Stats(a) => stats(a),
        Command::TrainVqvae(a) => train_vqvae_cmd(a),
        Command::Tokenize(a) => tokenize(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Compare(a) => compare(a),
        Command::Analyze(a) => analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
