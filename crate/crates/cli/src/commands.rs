use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, ValueEnum};
use serde::Serialize;
use weld_anomaly::audio::{buffer_size, model_latency_ms, read_wav, stft_magnitude, StreamingStft};
use weld_anomaly::audio_ae::{audio_frame_scores, StreamingScorer};
use weld_anomaly::dataset::{generate_corpus, Manifest, SynthSpec, WeldCategory};
use weld_anomaly::eval::{det_of, det_svg, roc_svg, AucTable, EvalReport, ScoredSample, Split};
use weld_anomaly::pipeline::{
    audio_series, fuse_splits, load_audio, load_embeddings, run_audio_grid, spectrograms,
    standardized_records, train_audio, train_video, video_series, ExperimentConfig, Labels,
    PairedScores, TrainedModel, GRID_BOTTLENECKS, GRID_FFT_WINDOWS,
};
use weld_anomaly::scoring::{read_scores, write_scores, Aggregation, Modality, ScoreRecord};
use weld_anomaly::{Error, Result};

use crate::run_manifest::RunManifest;
use crate::{Command, ExperimentArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::TrainAudio(a) => train(a, Modality::Audio),
        Command::TrainVideo(a) => train(a, Modality::Video),
        Command::Score(a) => score(a),
        Command::Fuse(a) => fuse(a),
        Command::Eval(a) => eval(a),
        Command::Stream(a) => stream(a),
        Command::Grid(a) => grid(a),
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => create_dir(dir),
        None => Ok(()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_config(args: &ExperimentArgs, run: &mut RunManifest) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            run.input(path)?;
            ExperimentConfig::load(path)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    run.config_sha256 = Some(cfg.hash());
    run.seed = Some(cfg.seed);
    Ok(cfg)
}

/// Sidecar run manifest for a single output file: `<file>.run.json`.
fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    path.with_file_name(name)
}

fn parse_defect(s: &str) -> std::result::Result<(WeldCategory, usize), String> {
    let (cat, n) = s
        .split_once('=')
        .ok_or_else(|| format!("expected CATEGORY=COUNT, got `{s}`"))?;
    let cat: WeldCategory = cat.parse().map_err(|e: Error| e.to_string())?;
    if cat.is_good() {
        return Err("use --n-good for good welds".into());
    }
    let n = n.parse().map_err(|_| format!("bad count `{n}`"))?;
    Ok((cat, n))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    n_good: usize,
    /// Defect count as CATEGORY=COUNT; repeatable.
    #[arg(long = "defect", value_parser = parse_defect)]
    defects: Vec<(WeldCategory, usize)>,
    /// Samples of every defect category (added to --defect counts).
    #[arg(long)]
    defects_each: Option<usize>,
    /// Clip length in seconds.
    #[arg(long, default_value_t = 3.0)]
    duration: f64,
    #[arg(long, default_value_t = 192_000)]
    sample_rate: u32,
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Defect strength; 1 is clearly visible.
    #[arg(long, default_value_t = 1.0)]
    intensity: f64,
    #[arg(long, default_value_t = weld_anomaly::video::EMBEDDING_DIM)]
    embedding_dim: usize,
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut run = RunManifest::start("synth");
    let mut defects: BTreeMap<WeldCategory, usize> = BTreeMap::new();
    if let Some(n) = a.defects_each {
        defects.extend(WeldCategory::defects().map(|c| (c, n)));
    }
    for (c, n) in a.defects {
        *defects.entry(c).or_insert(0) += n;
    }
    let spec = SynthSpec {
        seed: a.seed,
        n_good: a.n_good,
        defects,
        duration_s: a.duration,
        sample_rate: a.sample_rate,
        fps: a.fps,
        intensity: a.intensity,
        embedding_dim: a.embedding_dim,
    };
    spec.validate()?;
    run.seed = Some(a.seed);
    create_dir(&a.out)?;
    let manifest = generate_corpus(&spec, &a.out)?;
    log::info!("wrote {} samples to {}", manifest.len(), a.out.display());
    run.output(&a.out.join("manifest.jsonl"))?;
    run.output(&a.out.join("synth_spec.json"))?;
    run.finish(&a.out.join("synth.run.json"))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Corpus manifest (JSONL).
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the checkpoint and training report.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the configured epoch count.
    #[arg(long)]
    epochs: Option<usize>,
}

fn train(a: TrainArgs, modality: Modality) -> Result<()> {
    let name = match modality {
        Modality::Audio => "train-audio",
        _ => "train-video",
    };
    let mut run = RunManifest::start(name);
    let mut cfg = load_config(&a.exp, &mut run)?;
    if let Some(e) = a.epochs {
        cfg.audio.train.epochs = e;
        cfg.video.train.epochs = e;
        run.config_sha256 = Some(cfg.hash());
    }
    run.input(&a.manifest)?;
    let manifest = Manifest::load(&a.manifest)?;
    let labels = Labels::from_manifest(&manifest, cfg.seed)?;
    create_dir(&a.out)?;
    let (ckpt_path, report_path) = match modality {
        Modality::Audio => {
            let signals = load_audio(&manifest, cfg.audio.stft.sample_rate)?;
            let specs = spectrograms(&signals, &cfg.audio.stft)?;
            let (model, report) = train_audio(&cfg, &labels, &specs)?;
            let ck = a.out.join("audio_ae.ckpt");
            model.to_checkpoint(&cfg.audio.stft, cfg.seed).save(&ck)?;
            let rp = a.out.join("audio_train.json");
            write_json(&rp, &report)?;
            (ck, rp)
        }
        _ => {
            let seqs = load_embeddings(&manifest)?;
            let (model, report) = train_video(&cfg, &labels, &seqs)?;
            let ck = a.out.join("video_ae.ckpt");
            model.to_checkpoint(cfg.seed).save(&ck)?;
            let rp = a.out.join("video_train.json");
            write_json(&rp, &report)?;
            (ck, rp)
        }
    };
    write_text(&a.out.join(format!("{name}.config.toml")), &cfg.to_toml())?;
    run.output(&ckpt_path)?;
    run.output(&report_path)?;
    run.finish(&a.out.join(format!("{name}.run.json")))
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    All,
    Train,
    Val,
    Test,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::All => None,
            SplitArg::Train => Some(Split::Train),
            SplitArg::Val => Some(Split::Val),
            SplitArg::Test => Some(Split::Test),
        }
    }
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Trained audio or video checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Score every sample of this manifest (z-scores use its training split).
    #[arg(long, conflicts_with = "wav", requires = "out")]
    manifest: Option<PathBuf>,
    /// Print per-frame scores of one WAV as CSV on stdout.
    #[arg(long, required_unless_present = "manifest")]
    wav: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "all")]
    split: SplitArg,
    /// Overrides the configured aggregation (mean, max, max-ma:<seconds>).
    #[arg(long)]
    aggregation: Option<Aggregation>,
    /// Score file to write (.csv or .jsonl).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn print_frame_scores(scores: &[f64], period: f64) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "frame,time_s,score").map_err(io)?;
    for (i, s) in scores.iter().enumerate() {
        writeln!(out, "{i},{},{s}", i as f64 * period).map_err(io)?;
    }
    out.flush().map_err(io)
}

fn score(a: ScoreArgs) -> Result<()> {
    let (model, ck_seed) = TrainedModel::load(&a.checkpoint)?;
    if let Some(wav) = &a.wav {
        let TrainedModel::Audio(model, stft) = model else {
            return Err(Error::config("--wav needs an audio checkpoint"));
        };
        let pcm = read_wav(wav, None)?;
        if pcm.sample_rate != stft.sample_rate {
            return Err(Error::config(format!(
                "{} is sampled at {} Hz, the model expects {}",
                wav.display(),
                pcm.sample_rate,
                stft.sample_rate
            )));
        }
        let spec = stft_magnitude(&pcm.samples, &stft)?;
        let scores = audio_frame_scores(&Arc::new(model.frame_model()), &spec)?;
        return print_frame_scores(&scores, stft.frame_period());
    }

    let mut run = RunManifest::start("score");
    let exp = ExperimentArgs {
        seed: a.exp.seed.or(a.exp.config.is_none().then_some(ck_seed)),
        ..a.exp.clone()
    };
    let cfg = load_config(&exp, &mut run)?;
    let manifest_path = a.manifest.expect("clap requires --manifest without --wav");
    let out = a.out.expect("clap requires --out with --manifest");
    run.input(&a.checkpoint)?;
    run.input(&manifest_path)?;
    let manifest = Manifest::load(&manifest_path)?;
    let labels = Labels::from_manifest(&manifest, cfg.seed)?;
    let all: Vec<usize> = (0..manifest.len()).collect();
    let (series, aggregation) = match model {
        TrainedModel::Audio(model, stft) => {
            let signals = load_audio(&manifest, stft.sample_rate)?;
            let specs = spectrograms(&signals, &stft)?;
            (
                audio_series(&model, &labels, &specs, &all)?,
                cfg.audio.aggregation,
            )
        }
        TrainedModel::Video(mut model) => {
            let seqs = load_embeddings(&manifest)?;
            (
                video_series(&mut model, &labels, &seqs, &all)?,
                cfg.video.aggregation,
            )
        }
    };
    let aggregation = a.aggregation.unwrap_or(aggregation);
    let (standardizer, records) =
        standardized_records(&series, &labels, aggregation, a.split.split())?;
    log::info!(
        "standardizer from {} training samples: mean {:.6e}, std {:.6e}",
        labels.partition.train.len(),
        standardizer.mean,
        standardizer.std
    );
    ensure_parent(&out)?;
    write_scores(&out, &records)?;
    run.output(&out)?;
    run.finish(&sidecar(&out))
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Validation score files holding audio and video records; repeatable.
    #[arg(long, required = true)]
    val: Vec<PathBuf>,
    /// Test score files; repeatable.
    #[arg(long, required = true)]
    test: Vec<PathBuf>,
    /// Grid resolution (weights i / steps).
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Fusion report JSON; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write fused test scores (.csv or .jsonl).
    #[arg(long)]
    fused_out: Option<PathBuf>,
}

fn read_all(paths: &[PathBuf], run: &mut RunManifest) -> Result<Vec<ScoreRecord>> {
    let mut out = Vec::new();
    for p in paths {
        run.input(p)?;
        out.extend(read_scores(p)?);
    }
    Ok(out)
}

fn fuse(a: FuseArgs) -> Result<()> {
    let mut run = RunManifest::start("fuse");
    let val = PairedScores::from_records(&read_all(&a.val, &mut run)?)?;
    let test = PairedScores::from_records(&read_all(&a.test, &mut run)?)?;
    let report = fuse_splits(&val, &test, a.steps)?;
    log::info!(
        "w_audio {:.2}: validation auc {:.4}, test auc {:.4}",
        report.w_audio,
        report.val_auc,
        report.test_auc
    );
    if let Some(path) = &a.fused_out {
        ensure_parent(path)?;
        write_scores(path, &test.fused_records(report.w_audio)?)?;
        run.output(path)?;
    }
    match &a.out {
        Some(path) => {
            write_json(path, &report)?;
            run.output(path)?;
            run.finish(&sidecar(path))
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Score files; every modality found becomes a report column.
    #[arg(long, required = true)]
    scores: Vec<PathBuf>,
    /// Directory for report.json, table.txt and ROC/DET SVGs.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn eval(a: EvalArgs) -> Result<()> {
    let mut run = RunManifest::start("eval");
    let records = read_all(&a.scores, &mut run)?;
    let mut by_modality: BTreeMap<Modality, Vec<ScoredSample>> = BTreeMap::new();
    for r in records {
        by_modality
            .entry(r.modality)
            .or_default()
            .push(ScoredSample {
                sample_id: r.sample_id,
                category: r.category,
                score: r.z_score,
            });
    }
    if by_modality.is_empty() {
        return Err(Error::Empty("score files"));
    }
    let mut reports = Vec::new();
    for (m, samples) in &by_modality {
        reports.push(EvalReport::build(m.id(), samples)?);
    }
    let table = AucTable::from_reports(&reports.iter().collect::<Vec<_>>()).render_text();
    print!("{table}");
    for r in &reports {
        println!("{}: EER {:.4}", r.name, r.eer.rate);
    }
    if let Some(dir) = &a.out {
        create_dir(dir)?;
        let report_path = dir.join("report.json");
        write_json(&report_path, &reports)?;
        run.output(&report_path)?;
        let table_path = dir.join("table.txt");
        write_text(&table_path, &table)?;
        run.output(&table_path)?;
        for (r, samples) in reports.iter().zip(by_modality.values()) {
            let roc = dir.join(format!("roc_{}.svg", r.name));
            write_text(&roc, &roc_svg(&format!("ROC ({})", r.name), &r.roc))?;
            let (det, eer) = det_of(samples)?;
            let det_path = dir.join(format!("det_{}.svg", r.name));
            write_text(
                &det_path,
                &det_svg(&format!("DET ({})", r.name), &det, &eer),
            )?;
            run.output(&roc)?;
            run.output(&det_path)?;
        }
        run.finish(&dir.join("eval.run.json"))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Trained audio checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    wav: PathBuf,
    /// Samples delivered per push; defaults to one hop.
    #[arg(long)]
    chunk: Option<usize>,
    /// Ring buffer capacity in samples; defaults to the minimum safe size.
    #[arg(long)]
    buffer: Option<usize>,
    /// Pace delivery at the recording's sample rate.
    #[arg(long)]
    realtime: bool,
}

fn stream(a: StreamArgs) -> Result<()> {
    let (model, _) = TrainedModel::load(&a.checkpoint)?;
    let TrainedModel::Audio(model, stft) = model else {
        return Err(Error::config("stream needs an audio checkpoint"));
    };
    let pcm = read_wav(&a.wav, None)?;
    if pcm.sample_rate != stft.sample_rate {
        return Err(Error::config(format!(
            "{} is sampled at {} Hz, the model expects {}",
            a.wav.display(),
            pcm.sample_rate,
            stft.sample_rate
        )));
    }
    let min_buffer = buffer_size(stft.hop_length, stft.fft_window)?;
    let capacity = a.buffer.unwrap_or(min_buffer);
    let ring = StreamingStft::new(stft, capacity)?;
    eprintln!(
        "stream: buffer {capacity} samples (minimum {min_buffer} = {} x hop {}), model latency {:.2} ms",
        min_buffer / stft.hop_length,
        stft.hop_length,
        model_latency_ms(stft.hop_length, stft.sample_rate)
    );
    let mut scorer = StreamingScorer::new(Arc::new(model.frame_model()), ring)?;
    let chunk = a.chunk.unwrap_or(stft.hop_length).max(1);
    let started = Instant::now();
    let mut scores = Vec::new();
    for (k, piece) in pcm.samples.chunks(chunk).enumerate() {
        if a.realtime {
            let due = Duration::from_secs_f64((k * chunk) as f64 / pcm.sample_rate as f64);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        scores.extend(scorer.push(piece)?);
    }
    scores.extend(scorer.finish()?);
    print_frame_scores(&scores, stft.frame_period())
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory: one checkpoint per trial plus the comparison report.
    #[arg(long)]
    out: PathBuf,
    /// FFT windows (hop is half the window); defaults to the reference grid.
    #[arg(long, value_delimiter = ',')]
    fft: Vec<usize>,
    /// Bottleneck widths; defaults to the reference grid.
    #[arg(long, value_delimiter = ',')]
    bottleneck: Vec<usize>,
    /// Overrides the configured epoch count.
    #[arg(long)]
    epochs: Option<usize>,
}

fn grid(a: GridArgs) -> Result<()> {
    let mut run = RunManifest::start("grid");
    let mut cfg = load_config(&a.exp, &mut run)?;
    if let Some(e) = a.epochs {
        cfg.audio.train.epochs = e;
        run.config_sha256 = Some(cfg.hash());
    }
    let ffts = if a.fft.is_empty() {
        GRID_FFT_WINDOWS.to_vec()
    } else {
        a.fft
    };
    let bottlenecks = if a.bottleneck.is_empty() {
        GRID_BOTTLENECKS.to_vec()
    } else {
        a.bottleneck
    };
    run.input(&a.manifest)?;
    let manifest = Manifest::load(&a.manifest)?;
    let labels = Labels::from_manifest(&manifest, cfg.seed)?;
    let signals = load_audio(&manifest, cfg.audio.stft.sample_rate)?;
    let (report, trials) = run_audio_grid(&cfg, &labels, &signals, &ffts, &bottlenecks)?;
    create_dir(&a.out)?;
    for (trial, model, stft) in &trials {
        let path = a
            .out
            .join(format!("fft{}_b{}", trial.fft_window, trial.bottleneck))
            .join("audio_ae.ckpt");
        create_dir(path.parent().expect("joined path has a parent"))?;
        model.to_checkpoint(stft, cfg.seed).save(&path)?;
        run.output(&path)?;
    }
    let report_path = a.out.join("grid_report.json");
    write_json(&report_path, &report)?;
    let table_path = a.out.join("grid_table.txt");
    let table = report.render_text();
    write_text(&table_path, &table)?;
    print!("{table}");
    run.output(&report_path)?;
    run.output(&table_path)?;
    run.finish(&a.out.join("grid.run.json"))
}
