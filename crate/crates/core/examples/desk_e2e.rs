//! Desk-scale end-to-end run on a synthetic corpus: generate, train both
//! autoencoders, standardize, fuse and report AUCs.
//!
//! `cargo run --release -p weld-anomaly --example desk_e2e -- [seed]`

use std::time::Instant;

use weld_anomaly::dataset::{Generator, SynthSpec};
use weld_anomaly::pipeline::{desk_scale_config, run_experiment, Labels};

fn main() -> weld_anomaly::Result<()> {
    let seed: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2024);
    let sr = 16_000;
    let mut spec = SynthSpec::balanced(seed, 120, 120);
    spec.sample_rate = sr;
    let cfg = desk_scale_config(seed, sr);

    let t = Instant::now();
    let generator = Generator::new(spec.clone())?;
    let samples = spec
        .plan()
        .iter()
        .map(|(id, c)| generator.sample(id, *c))
        .collect::<weld_anomaly::Result<Vec<_>>>()?;
    println!("generated {} samples in {:.1?}", samples.len(), t.elapsed());

    let labels = Labels::new(
        samples.iter().map(|s| s.sample_id.clone()).collect(),
        samples.iter().map(|s| s.category).collect(),
        cfg.seed,
    )?;
    let signals: Vec<Vec<f64>> = samples.iter().map(|s| s.audio.clone()).collect();
    let seqs: Vec<_> = samples.into_iter().map(|s| s.embeddings).collect();

    let t = Instant::now();
    let fusion = run_experiment(&cfg, &labels, &signals, &seqs)?;
    println!("trained and scored in {:.1?}", t.elapsed());
    println!(
        "test auc: audio {:.4} video {:.4} fused {:.4} (w_audio {:.2})",
        fusion.test_auc_audio, fusion.test_auc_video, fusion.test_auc, fusion.w_audio
    );
    println!(
        "val auc: audio {:.4} video {:.4} fused {:.4}",
        fusion.val_auc_audio, fusion.val_auc_video, fusion.val_auc
    );
    Ok(())
}
