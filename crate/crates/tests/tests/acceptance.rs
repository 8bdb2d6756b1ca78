//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! `cargo test -p weld-anomaly-tests --test acceptance` runs everything;
//! trailing numbers (`-- 3 4`) select criteria.

// the per-layer gradient harness is shared with the core crate's own tests
#[path = "../../core/tests/common/gradcheck.rs"]
mod gradcheck;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ndarray::{Array2, Array3};
use rand::Rng as _;
use weld_anomaly::audio::{
    buffer_size, model_latency_ms, read_wav, stft_magnitude, write_wav_i16, MagnitudeScale,
    StftConfig, StreamingStft,
};
use weld_anomaly::audio_ae::{
    audio_frame_scores, AudioAeConfig, AudioAutoencoder, StreamingScorer,
};
use weld_anomaly::dataset::{Generator, SynthSpec, WeldCategory};
use weld_anomaly::eval::{auc, auc_trapezoid};
use weld_anomaly::nn::{LayerSpec, Mode};
use weld_anomaly::pipeline::{
    desk_scale_config, run_audio_grid, run_experiment, ExperimentConfig, Labels, GRID_FFT_WINDOWS,
};
use weld_anomaly::rng;
use weld_anomaly::scoring::{aggregate, Aggregation};
use weld_anomaly::video::{VideoAeConfig, VideoAutoencoder, EMBEDDING_DIM};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pair_count_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0u64, 0u64);
    for (&si, _) in scores.iter().zip(labels).filter(|(_, &l)| l) {
        for (&sj, _) in scores.iter().zip(labels).filter(|(_, &l)| !l) {
            pairs += 2;
            wins += match si.partial_cmp(&sj).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    wins as f64 / pairs as f64
}

fn c1_auc_oracle() -> Outcome {
    let mut r = rng::seeded(1);
    let mut worst = 0.0f64;
    for set in 0..200 {
        let n = r.random_range(2..=500);
        // coarse lattices force ties; the finest is nearly tie-free
        let levels = [3, 10, 50, 100_000][set % 4];
        let scores: Vec<f64> = (0..n)
            .map(|_| r.random_range(0..levels) as f64 / 7.0)
            .collect();
        let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let oracle = pair_count_auc(&scores, &labels);
        let trap = auc_trapezoid(&scores, &labels).map_err(|e| e.to_string())?;
        let mw = auc(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((trap - oracle).abs()).max((mw - oracle).abs());
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let flipped = auc(&neg, &labels).map_err(|e| e.to_string())?;
        ensure(mw + flipped == 1.0, || {
            format!("set {set}: auc(s) + auc(-s) = {}", mw + flipped)
        })?;
    }
    ensure(worst <= 1e-12, || {
        format!("max deviation from pair counting {worst:e}")
    })?;
    Ok(format!(
        "200 sets, max deviation {worst:e}, complement exact"
    ))
}

fn c2_gradients() -> Outcome {
    let checks = gradcheck::all_layers();
    let summary = checks
        .iter()
        .map(|c| format!("{} {:.1e}", c.layer, c.worst))
        .collect::<Vec<_>>()
        .join(", ");
    let failed: Vec<_> = checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| c.layer)
        .collect();
    ensure(failed.is_empty(), || {
        format!("failing layers {failed:?}; {summary}")
    })?;
    let instances = checks.iter().map(|c| c.instances).min().unwrap_or(0);
    Ok(format!(
        "{} layers x {instances} instances, worst relative error: {summary}",
        checks.len()
    ))
}

fn c3_shape_contract() -> Outcome {
    let reference = AudioAeConfig::default().layer_specs();
    let convs = reference
        .iter()
        .filter(|l| {
            matches!(
                l,
                LayerSpec::Conv1d {
                    kernel_size: 3,
                    stride: 1,
                    ..
                }
            )
        })
        .count();
    let deconvs = reference
        .iter()
        .filter(|l| {
            matches!(
                l,
                LayerSpec::ConvTranspose1d {
                    kernel_size: 3,
                    stride: 1,
                    ..
                }
            )
        })
        .count();
    ensure(convs == 5 && deconvs == 5, || {
        format!("{convs} convolutions, {deconvs} transposed")
    })?;

    // the length contract depends on kernel and depth only, so a narrow model suffices
    let mut model = AudioAutoencoder::new(AudioAeConfig::new(33, 16, 4), &mut rng::seeded(3))
        .map_err(|e| e.to_string())?;
    for t in [11, 12, 32, 64] {
        let x = Array3::from_shape_fn((2, 33, t), |(b, c, i)| {
            ((b + c * 7 + i * 3) % 11) as f64 / 11.0
        });
        let (y, z) = model
            .forward_with_bottleneck(&x, Mode::Eval)
            .map_err(|e| e.to_string())?;
        ensure(y.dim() == (2, 33, t), || {
            format!("T={t}: output {:?}", y.dim())
        })?;
        ensure(z.dim() == (2, 4, t - 10), || {
            format!("T={t}: bottleneck {:?}", z.dim())
        })?;
    }
    let err = model
        .forward(&Array3::zeros((1, 33, 10)), Mode::Eval)
        .err()
        .ok_or("T=10 was accepted")?;
    ensure(err.to_string().contains("more than 10 frames"), || {
        format!("T=10 message: {err}")
    })?;
    Ok(format!(
        "T in {{11, 12, 32, 64}} -> output T, bottleneck T-10; T=10 rejected: \"{err}\""
    ))
}

fn c4_latency() -> Outcome {
    let buf = buffer_size(8192, 16384).map_err(|e| e.to_string())?;
    ensure(buf == 98_304, || {
        format!("buffer_size(8192, 16384) = {buf}")
    })?;
    let lat = model_latency_ms(8192, 192_000);
    ensure((42.6..=42.8).contains(&lat), || format!("latency {lat} ms"))?;
    let grid: Vec<f64> = GRID_FFT_WINDOWS
        .iter()
        .map(|&f| model_latency_ms(f / 2, 192_000))
        .collect();
    let (lo, hi) = (grid[0], grid[grid.len() - 1]);
    ensure(
        (lo - 10.7).abs() < 0.05 && (hi - 170.7).abs() < 0.05,
        || format!("grid latencies {grid:?}"),
    )?;
    Ok(format!(
        "buffer 98304 samples, latency {lat:.3} ms, grid {lo:.2}..{hi:.2} ms"
    ))
}

const TARGET_VIDEO_PARAMS: usize = 2_833_408;

fn c5_video_structure() -> Outcome {
    let cfg = VideoAeConfig::default();
    let closed_form: usize = cfg.dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
    let mut model =
        VideoAutoencoder::new(cfg.clone(), &mut rng::seeded(5)).map_err(|e| e.to_string())?;
    let enumerated = model.param_count();
    ensure(
        closed_form == enumerated && cfg.param_count() == enumerated,
        || format!("closed form {closed_form} vs enumeration {enumerated}"),
    )?;

    let x = Array2::from_shape_fn((3, EMBEDDING_DIM), |(i, j)| {
        ((i * 31 + j * 7) % 13) as f64 / 13.0 - 0.5
    });
    let y1 = model.reconstruct(&x).map_err(|e| e.to_string())?;
    let y2 = model.reconstruct(&x).map_err(|e| e.to_string())?;
    let mut twin = VideoAutoencoder::new(cfg, &mut rng::seeded(5)).map_err(|e| e.to_string())?;
    let y3 = twin.reconstruct(&x).map_err(|e| e.to_string())?;
    ensure(y1.ncols() == EMBEDDING_DIM, || {
        format!("output dim {}", y1.ncols())
    })?;
    ensure(y1 == y2 && y1 == y3, || {
        "eval-mode outputs differ between runs".into()
    })?;

    ensure(enumerated == TARGET_VIDEO_PARAMS, || {
        format!(
            "parameter count {enumerated} (closed form and enumeration agree) != {TARGET_VIDEO_PARAMS}; \
             output dim {EMBEDDING_DIM} and eval determinism hold"
        )
    })?;
    Ok(format!(
        "{enumerated} parameters, output dim {EMBEDDING_DIM}, eval deterministic"
    ))
}

/// Published seed for the synthetic end-to-end run.
const E2E_SEED: u64 = 2024;

fn c6_end_to_end() -> Outcome {
    let sr = 16_000;
    let spec = SynthSpec {
        sample_rate: sr,
        ..SynthSpec::balanced(E2E_SEED, 120, 120)
    };
    let cfg = desk_scale_config(E2E_SEED, sr);
    let generator = Generator::new(spec.clone()).map_err(|e| e.to_string())?;
    let samples = spec
        .plan()
        .iter()
        .map(|(id, c)| generator.sample(id, *c))
        .collect::<weld_anomaly::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let labels = Labels::new(
        samples.iter().map(|s| s.sample_id.clone()).collect(),
        samples.iter().map(|s| s.category).collect(),
        cfg.seed,
    )
    .map_err(|e| e.to_string())?;
    let signals: Vec<Vec<f64>> = samples.iter().map(|s| s.audio.clone()).collect();
    let seqs: Vec<_> = samples.into_iter().map(|s| s.embeddings).collect();
    let f = run_experiment(&cfg, &labels, &signals, &seqs).map_err(|e| e.to_string())?;

    let detail = format!(
        "seed {E2E_SEED}: test audio {:.4} video {:.4} fused {:.4} (w_audio {:.2}); val audio {:.4} video {:.4} fused {:.4}",
        f.test_auc_audio, f.test_auc_video, f.test_auc, f.w_audio, f.val_auc_audio, f.val_auc_video, f.val_auc
    );
    let ok = f.test_auc_audio >= 0.85
        && f.test_auc_video >= 0.85
        && f.test_auc >= f.test_auc_audio.max(f.test_auc_video) - 0.02
        && f.val_auc >= f.val_auc_audio.max(f.val_auc_video);
    ensure(ok, || detail.clone())?;
    Ok(detail)
}

fn c7_streaming() -> Outcome {
    let sr = 16_000;
    let stft = StftConfig {
        sample_rate: sr,
        fft_window: 512,
        hop_length: 256,
        scale: MagnitudeScale::Log,
        ..StftConfig::default()
    };
    let model = AudioAutoencoder::new(
        AudioAeConfig::new(stft.n_bins(), 32, 8),
        &mut rng::seeded(7),
    )
    .map_err(|e| e.to_string())?;
    // the scorers run from a saved checkpoint, as the command-line tools do
    let (model, stft) = AudioAutoencoder::from_checkpoint(&model.to_checkpoint(&stft, 7))
        .map_err(|e| e.to_string())?;
    let frame_model = Arc::new(model.frame_model());

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let generator = Generator::new(SynthSpec {
        sample_rate: sr,
        embedding_dim: 8,
        ..SynthSpec::default()
    })
    .map_err(|e| e.to_string())?;
    let mut r = rng::seeded(77);
    let mut frames_total = 0;
    for k in 0..20 {
        let signal: Vec<f64> = if k % 2 == 0 {
            let cat = WeldCategory::ALL[r.random_range(0..WeldCategory::ALL.len())];
            let mut s = generator
                .sample(&format!("wav{k}"), cat)
                .map_err(|e| e.to_string())?
                .audio;
            s.truncate(r.random_range(6_000..s.len()));
            s
        } else {
            (0..r.random_range(6_000..40_000))
                .map(|_| r.random_range(-0.8..0.8))
                .collect()
        };
        let path = dir.path().join(format!("{k}.wav"));
        write_wav_i16(&path, sr, &signal).map_err(|e| e.to_string())?;
        let pcm = read_wav(&path, None).map_err(|e| e.to_string())?;

        let spec = stft_magnitude(&pcm.samples, &stft).map_err(|e| e.to_string())?;
        let offline = audio_frame_scores(&frame_model, &spec).map_err(|e| e.to_string())?;

        let ring = StreamingStft::with_minimum_buffer(stft).map_err(|e| e.to_string())?;
        let mut streaming =
            StreamingScorer::new(Arc::clone(&frame_model), ring).map_err(|e| e.to_string())?;
        let mut online = Vec::new();
        let mut pos = 0;
        while pos < pcm.samples.len() {
            let room = streaming.stft().free_space();
            let len = r.random_range(1..=room).min(pcm.samples.len() - pos);
            online.extend(
                streaming
                    .push(&pcm.samples[pos..pos + len])
                    .map_err(|e| e.to_string())?,
            );
            pos += len;
        }
        online.extend(streaming.finish().map_err(|e| e.to_string())?);

        let same = offline.len() == online.len()
            && offline
                .iter()
                .zip(&online)
                .all(|(a, b)| a.to_bits() == b.to_bits());
        ensure(same, || {
            format!(
                "wav {k}: {} offline vs {} streamed scores differ",
                offline.len(),
                online.len()
            )
        })?;
        frames_total += offline.len();
    }
    Ok(format!(
        "20 wavs, {frames_total} frame scores bit-identical"
    ))
}

fn c8_aggregation() -> Outcome {
    let agg = |s: &[f64], p: f64, m: Aggregation| aggregate(s, p, m).map_err(|e| e.to_string());
    let x = [1.0, 2.0, 3.0, 4.0];
    let cases = [
        (Aggregation::Mean, 2.5),
        (Aggregation::Max, 4.0),
        (Aggregation::MaxOverMa { window_s: 2.0 }, 3.5),
    ];
    for (m, want) in cases {
        let got = agg(&x, 1.0, m)?;
        ensure(got == want, || format!("[1,2,3,4] {m}: {got} != {want}"))?;
    }
    let mut r = rng::seeded(8);
    for _ in 0..200 {
        let n = r.random_range(1..80);
        let period = r.random_range(0.01..0.5);
        let s: Vec<f64> = (0..n).map(|_| r.random_range(0.0..5.0)).collect();
        let w = r.random_range(0.0..=1.0) * period;
        let (ma, max) = (
            agg(&s, period, Aggregation::MaxOverMa { window_s: w })?,
            agg(&s, period, Aggregation::Max)?,
        );
        ensure(ma == max, || {
            format!("window {w} <= period {period}: {ma} != {max}")
        })?;
        let c = r.random_range(0.0..10.0);
        let flat = vec![c; n];
        for m in [
            Aggregation::Mean,
            Aggregation::Max,
            Aggregation::MaxOverMa {
                window_s: r.random_range(0.01..5.0),
            },
        ] {
            let got = agg(&flat, period, m)?;
            ensure(got == c, || format!("constant {c} under {m}: {got}"))?;
        }
    }
    Ok("hand cases 2.5 / 4 / 3.5, 200 degenerate-window and constant series".into())
}

fn grid_run(
    cfg: &ExperimentConfig,
    labels: &Labels,
    signals: &[Vec<f64>],
) -> Result<(Vec<u8>, Vec<Vec<u8>>), String> {
    let ffts = [256, 512, 1024, 2048];
    let bottlenecks = [16, 32, 48, 64];
    let (report, trials) =
        run_audio_grid(cfg, labels, signals, &ffts, &bottlenecks).map_err(|e| e.to_string())?;
    let report = serde_json::to_vec_pretty(&report).map_err(|e| e.to_string())?;
    let checkpoints = trials
        .iter()
        .map(|(_, model, stft)| model.to_checkpoint(stft, cfg.seed).to_bytes())
        .collect();
    Ok((report, checkpoints))
}

fn c9_grid_determinism() -> Outcome {
    let sr = 16_000;
    let spec = SynthSpec {
        sample_rate: sr,
        duration_s: 2.5,
        embedding_dim: 8,
        ..SynthSpec::balanced(9, 30, 22)
    };
    let mut cfg = desk_scale_config(9, sr);
    cfg.audio.model.width = 80;
    cfg.audio.train.epochs = 2;
    let generator = Generator::new(spec.clone()).map_err(|e| e.to_string())?;
    let samples = spec
        .plan()
        .iter()
        .map(|(id, c)| generator.sample(id, *c))
        .collect::<weld_anomaly::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let labels = Labels::new(
        samples.iter().map(|s| s.sample_id.clone()).collect(),
        samples.iter().map(|s| s.category).collect(),
        cfg.seed,
    )
    .map_err(|e| e.to_string())?;
    let signals: Vec<Vec<f64>> = samples.into_iter().map(|s| s.audio).collect();

    let (report_a, ckpts_a) = grid_run(&cfg, &labels, &signals)?;
    let (report_b, ckpts_b) = grid_run(&cfg, &labels, &signals)?;
    ensure(ckpts_a.len() == 16, || format!("{} trials", ckpts_a.len()))?;
    for (k, (a, b)) in ckpts_a.iter().zip(&ckpts_b).enumerate() {
        ensure(a == b, || format!("trial {k}: checkpoints differ"))?;
    }
    ensure(report_a == report_b, || "grid reports differ".into())?;
    Ok(format!(
        "16 trials twice: checkpoints ({} bytes total) and report ({} bytes) byte-identical",
        ckpts_a.iter().map(Vec::len).sum::<usize>(),
        report_a.len()
    ))
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "AUC oracle equivalence",
            budget: Duration::from_secs(5),
            run: c1_auc_oracle,
        },
        Criterion {
            id: 2,
            name: "gradient suite",
            budget: Duration::from_secs(30),
            run: c2_gradients,
        },
        Criterion {
            id: 3,
            name: "shape contract",
            budget: Duration::from_secs(1),
            run: c3_shape_contract,
        },
        Criterion {
            id: 4,
            name: "buffer size and latency",
            budget: Duration::from_secs(1),
            run: c4_latency,
        },
        Criterion {
            id: 5,
            name: "video autoencoder structure",
            budget: Duration::from_secs(1),
            run: c5_video_structure,
        },
        Criterion {
            id: 6,
            name: "synthetic end-to-end",
            budget: Duration::from_secs(600),
            run: c6_end_to_end,
        },
        Criterion {
            id: 7,
            name: "streaming equivalence",
            budget: Duration::from_secs(30),
            run: c7_streaming,
        },
        Criterion {
            id: 8,
            name: "aggregation algebra",
            budget: Duration::from_secs(1),
            run: c8_aggregation,
        },
        Criterion {
            id: 9,
            name: "grid determinism",
            budget: Duration::from_secs(900),
            run: c9_grid_determinism,
        },
    ];
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        for c in &criteria {
            println!("criterion_{}: test", c.id);
        }
        return ExitCode::SUCCESS;
    }
    let selected: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    // keep panic messages from interleaving with the report
    panic::set_hook(Box::new(|_| {}));

    let mut failures = 0;
    for c in criteria
        .iter()
        .filter(|c| selected.is_empty() || selected.contains(&c.id))
    {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > c.budget => Err(format!("over the {:?} budget; {d}", c.budget)),
            other => other,
        };
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!(
            "criterion {} [{}] {status} ({:.2} s): {detail}",
            c.id,
            c.name,
            elapsed.as_secs_f64()
        );
        if outcome.is_err() {
            failures += 1;
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}
