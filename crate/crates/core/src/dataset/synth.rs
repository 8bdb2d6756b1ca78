//! Deterministic synthetic corpus: harmonic "arc" audio with pink noise and
//! low-rank Gaussian embedding sequences, with defects injected per category
//! family into one time span shared by both modalities.
//!
//! Every sample draws from its own stream derived from `(seed, sample id)`,
//! so samples can be generated in any order or in parallel.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestEntry};
use super::{DefectFamily, Material, WeldCategory, WeldType};
use crate::audio::write_wav_i16;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::video::{EmbeddingSequence, EMBEDDING_DIM};

/// Shortest clip that still fits one 64-frame window at 30 fps.
pub const MIN_DURATION_S: f64 = 2.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_good: usize,
    pub defects: BTreeMap<WeldCategory, usize>,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub fps: f64,
    /// Scales every defect archetype; 1.0 is clearly visible.
    pub intensity: f64,
    pub embedding_dim: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            n_good: 10,
            defects: WeldCategory::defects().map(|c| (c, 1)).collect(),
            duration_s: 3.0,
            sample_rate: 192_000,
            fps: 30.0,
            intensity: 1.0,
            embedding_dim: EMBEDDING_DIM,
        }
    }
}

impl SynthSpec {
    /// `n_defect` samples spread round-robin over the eleven defect categories.
    pub fn balanced(seed: u64, n_good: usize, n_defect: usize) -> Self {
        let mut defects: BTreeMap<WeldCategory, usize> =
            WeldCategory::defects().map(|c| (c, 0)).collect();
        for c in WeldCategory::ALL[1..]
            .iter()
            .copied()
            .cycle()
            .take(n_defect)
        {
            *defects.get_mut(&c).expect("every defect is present") += 1;
        }
        SynthSpec {
            seed,
            n_good,
            defects,
            ..SynthSpec::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.defects.keys().any(|c| c.is_good()) {
            return Err(Error::config("`good` is not a defect category; use n_good"));
        }
        if !(self.duration_s >= MIN_DURATION_S && self.duration_s.is_finite()) {
            return Err(Error::config(format!(
                "duration must be at least {MIN_DURATION_S} s, got {}",
                self.duration_s
            )));
        }
        if self.sample_rate < 8000 {
            return Err(Error::config(format!(
                "sample rate {} is below 8000 Hz",
                self.sample_rate
            )));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::config(format!(
                "fps must be positive, got {}",
                self.fps
            )));
        }
        if !(self.intensity > 0.0 && self.intensity.is_finite()) {
            return Err(Error::config(format!(
                "intensity must be positive, got {}",
                self.intensity
            )));
        }
        if self.embedding_dim < 8 {
            return Err(Error::config("embedding dimension must be at least 8"));
        }
        Ok(())
    }

    /// `(sample id, category)` for every sample, goods first.
    pub fn plan(&self) -> Vec<(String, WeldCategory)> {
        let mut out: Vec<(String, WeldCategory)> = (0..self.n_good)
            .map(|i| (sample_id(WeldCategory::Good, i), WeldCategory::Good))
            .collect();
        for (&c, &n) in &self.defects {
            out.extend((0..n).map(|i| (sample_id(c, i), c)));
        }
        out
    }

    pub fn n_audio_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }

    pub fn n_video_frames(&self) -> usize {
        (self.duration_s * self.fps).floor() as usize
    }
}

pub fn sample_id(category: WeldCategory, index: usize) -> String {
    format!("{}_{index:04}", category.id())
}

/// One generated sample with its ground truth.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub sample_id: String,
    pub category: WeldCategory,
    pub weld_type: WeldType,
    pub material: Material,
    pub audio: Vec<f64>,
    pub embeddings: EmbeddingSequence,
    /// Seconds `[start, end)` of the defect, shared by both modalities.
    pub defect_span: Option<(f64, f64)>,
    /// Finer audio events inside the span (burst intervals), in seconds.
    pub events: Vec<(f64, f64)>,
}

/// Parameters shared by every sample of a corpus.
struct CorpusModel {
    mean: Array1<f64>,
    basis: Array2<f64>,
    directions: BTreeMap<WeldCategory, Array1<f64>>,
}

const LATENT_RANK: usize = 8;
const LATENT_AR: f64 = 0.9;
const LATENT_SCALE: f64 = 0.5;
const EMBED_NOISE: f64 = 0.1;
/// Per-coordinate RMS of a defect shift at intensity 1.
const VIDEO_SHIFT: f64 = 0.45;

impl CorpusModel {
    fn new(spec: &SynthSpec) -> Self {
        let d = spec.embedding_dim;
        let mut r = rng::derived(spec.seed, "synth/corpus");
        let mean = Array1::from_shape_fn(d, |_| normal(&mut r));
        let scale = LATENT_SCALE / (LATENT_RANK as f64).sqrt();
        let basis = Array2::from_shape_fn((d, LATENT_RANK), |_| scale * normal(&mut r));
        let directions = WeldCategory::defects()
            .map(|c| {
                let v = Array1::from_shape_fn(d, |_| normal(&mut r));
                // unit RMS per coordinate
                let rms = (v.dot(&v) / d as f64).sqrt();
                (c, v / rms)
            })
            .collect();
        CorpusModel {
            mean,
            basis,
            directions,
        }
    }
}

fn normal(r: &mut Rng) -> f64 {
    StandardNormal.sample(r)
}

pub struct Generator {
    spec: SynthSpec,
    model: CorpusModel,
}

impl Generator {
    pub fn new(spec: SynthSpec) -> Result<Self> {
        spec.validate()?;
        let model = CorpusModel::new(&spec);
        Ok(Generator { spec, model })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    pub fn sample(&self, sample_id: &str, category: WeldCategory) -> Result<SynthSample> {
        let spec = &self.spec;
        let mut r = rng::derived(spec.seed, &format!("synth/sample/{sample_id}"));
        let weld_type = if r.random::<bool>() {
            WeldType::Fillet
        } else {
            WeldType::NonFillet
        };
        let material = [
            Material::Fe410Thick,
            Material::Fe410Thin,
            Material::Bsk46Thick,
            Material::Bsk46Thin,
        ][r.random_range(0..4)];

        let defect_span = category.family().map(|_| {
            let len = spec.duration_s * r.random_range(0.3..0.5);
            let start = r.random_range(0.0..spec.duration_s - len);
            (start, start + len)
        });
        let (audio, events) = self.audio(&mut r, category.family(), defect_span);
        let vectors = self.embeddings(&mut r, category, defect_span);
        let embeddings = EmbeddingSequence::new(sample_id, spec.fps as f32, vectors)?;
        Ok(SynthSample {
            sample_id: sample_id.to_string(),
            category,
            weld_type,
            material,
            audio,
            embeddings,
            defect_span,
            events,
        })
    }

    fn audio(
        &self,
        r: &mut Rng,
        family: Option<DefectFamily>,
        span: Option<(f64, f64)>,
    ) -> (Vec<f64>, Vec<(f64, f64)>) {
        let spec = &self.spec;
        let sr = spec.sample_rate as f64;
        let n = spec.n_audio_samples();
        let k = spec.intensity;
        let f0 = 150.0 * (1.0 + 0.02 * r.random_range(-1.0..1.0));
        let max_f0 =
            f0 * if family == Some(DefectFamily::PitchDrift) {
                1.0 + 0.3 * k
            } else {
                1.0
            } * 1.02;
        let n_harm = ((0.45 * sr / max_f0) as usize).clamp(1, 40);
        let amps: Vec<f64> = (1..=n_harm)
            .map(|h| 0.1 / h as f64 * (1.0 + 0.1 * r.random_range(-1.0..1.0)))
            .collect();
        // harmonics in the middle third of the stack lose energy under band attenuation
        let band = (n_harm / 3 + 1)..=(2 * n_harm / 3 + 1).max(n_harm / 3 + 1);
        let attenuation = 10f64.powf(-k);

        let span_samples = span.map(|(a, b)| ((a * sr) as usize, ((b * sr) as usize).min(n)));
        let in_span = |i: usize| span_samples.is_some_and(|(a, b)| i >= a && i < b);

        // slow pitch jitter, updated every 64 samples
        const BLOCK: usize = 64;
        let mut jitter = 0.0;
        let mut phase = 0.0f64;
        let mut pink = PinkNoise::default();
        let mut out = Vec::with_capacity(n);
        let mut gains = amps.clone();
        for i in 0..n {
            if i % BLOCK == 0 {
                jitter = 0.98 * jitter + 0.2 * 0.003 * normal(r);
            }
            let mut f = f0 * (1.0 + jitter);
            let active = in_span(i);
            if active && family == Some(DefectFamily::PitchDrift) {
                let (a, b) = span_samples.expect("active implies a span");
                f *= 1.0 + 0.3 * k * (i - a) as f64 / (b - a) as f64;
            }
            phase = (phase + TAU * f / sr) % TAU;
            let attenuate = active && family == Some(DefectFamily::BandAttenuation);
            for (h, g) in gains.iter_mut().enumerate() {
                *g = if attenuate && band.contains(&(h + 1)) {
                    amps[h] * attenuation
                } else {
                    amps[h]
                };
            }
            let mut x = harmonic_sum(phase, &gains) + 0.02 * pink.next(normal(r));
            if active && family == Some(DefectFamily::LevelJump) {
                x *= 1.0 + k;
            }
            out.push(x);
        }

        let mut events = Vec::new();
        if let (Some(DefectFamily::Bursts), Some((a, b))) = (family, span_samples) {
            let n_bursts = (4.0 + 8.0 * k).round() as usize;
            let burst_len = (0.01 * sr) as usize;
            for _ in 0..n_bursts {
                let start = r.random_range(a..b.saturating_sub(burst_len).max(a + 1));
                let end = (start + burst_len).min(n);
                for (j, x) in out[start..end].iter_mut().enumerate() {
                    let env = (-(j as f64) / (0.3 * burst_len as f64)).exp();
                    *x += 0.3 * k * env * normal(r);
                }
                events.push((start as f64 / sr, end as f64 / sr));
            }
            events.sort_by(|x, y| x.0.total_cmp(&y.0));
        }
        for x in &mut out {
            *x = x.clamp(-1.0, 1.0);
        }
        (out, events)
    }

    fn embeddings(
        &self,
        r: &mut Rng,
        category: WeldCategory,
        span: Option<(f64, f64)>,
    ) -> Array2<f64> {
        let spec = &self.spec;
        let m = &self.model;
        let d = spec.embedding_dim;
        let n = spec.n_video_frames();
        let innov = (1.0 - LATENT_AR * LATENT_AR).sqrt();
        let mut z: Vec<f64> = (0..LATENT_RANK).map(|_| normal(r)).collect();
        let frames = span.map(|(a, b)| {
            (
                (a * spec.fps).floor() as usize,
                ((b * spec.fps).ceil() as usize).min(n),
            )
        });
        let shift = m
            .directions
            .get(&category)
            .map(|v| v * (VIDEO_SHIFT * spec.intensity));
        let mut out = Array2::zeros((n, d));
        for t in 0..n {
            if t > 0 {
                for zi in &mut z {
                    *zi = LATENT_AR * *zi + innov * normal(r);
                }
            }
            let z_vec = Array1::from(z.clone());
            let mut row = &m.mean + &m.basis.dot(&z_vec);
            for x in row.iter_mut() {
                *x += EMBED_NOISE * normal(r);
            }
            if let (Some((a, b)), Some(s)) = (frames, &shift) {
                if t >= a && t < b {
                    row += s;
                }
            }
            out.row_mut(t).assign(&row);
        }
        out
    }
}

/// `sum_h g[h] sin((h + 1) phase)` by the Chebyshev recurrence.
fn harmonic_sum(phase: f64, gains: &[f64]) -> f64 {
    let (s1, c1) = phase.sin_cos();
    let two_c = 2.0 * c1;
    let (mut prev, mut cur) = (0.0, s1);
    let mut acc = 0.0;
    for &g in gains {
        acc += g * cur;
        let next = two_c * cur - prev;
        prev = cur;
        cur = next;
    }
    acc
}

/// Paul Kellett's pink filter over white Gaussian input.
#[derive(Default)]
struct PinkNoise {
    b: [f64; 7],
}

impl PinkNoise {
    fn next(&mut self, white: f64) -> f64 {
        let b = &mut self.b;
        b[0] = 0.99886 * b[0] + white * 0.0555179;
        b[1] = 0.99332 * b[1] + white * 0.0750759;
        b[2] = 0.96900 * b[2] + white * 0.1538520;
        b[3] = 0.86650 * b[3] + white * 0.3104856;
        b[4] = 0.55000 * b[4] + white * 0.5329522;
        b[5] = -0.7616 * b[5] - white * 0.0168980;
        let out = b.iter().sum::<f64>() + white * 0.5362;
        b[6] = white * 0.115926;
        out * 0.11
    }
}

/// Writes `audio/<id>.wav`, `video/<id>.emb` and `manifest.jsonl` under
/// `out_dir`, plus `synth_spec.json` recording the generator settings.
pub fn generate_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<Manifest> {
    let generator = Generator::new(spec.clone())?;
    for sub in ["audio", "video"] {
        let dir = out_dir.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let plan = spec.plan();
    let write_one = |(id, category): &(String, WeldCategory)| -> Result<ManifestEntry> {
        let s = generator.sample(id, *category)?;
        let audio_path = PathBuf::from("audio").join(format!("{id}.wav"));
        let video_path = PathBuf::from("video").join(format!("{id}.emb"));
        write_wav_i16(&out_dir.join(&audio_path), spec.sample_rate, &s.audio)?;
        s.embeddings.save(&out_dir.join(&video_path))?;
        Ok(ManifestEntry {
            sample_id: id.clone(),
            audio_path,
            video_path,
            category: *category,
            weld_type: s.weld_type,
            material: s.material,
            duration_s: spec.duration_s,
        })
    };
    #[cfg(feature = "parallel")]
    let entries: Vec<ManifestEntry> = {
        use rayon::prelude::*;
        plan.par_iter().map(write_one).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let entries: Vec<ManifestEntry> = plan.iter().map(write_one).collect::<Result<_>>()?;

    let manifest = Manifest::new(entries, out_dir)?;
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    let spec_path = out_dir.join("synth_spec.json");
    let json = serde_json::to_string_pretty(spec)?;
    std::fs::write(&spec_path, json + "\n").map_err(|e| Error::io(&spec_path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            seed: 11,
            n_good: 2,
            defects: [(WeldCategory::Spatter, 2)].into_iter().collect(),
            duration_s: 2.2,
            sample_rate: 8000,
            fps: 30.0,
            intensity: 1.0,
            embedding_dim: 16,
        }
    }

    #[test]
    fn chebyshev_matches_direct_sum() {
        let gains = [0.5, 0.25, 0.0, 0.125, 0.3];
        for phase in [0.0, 0.3, 1.7, 3.0, 5.9] {
            let direct: f64 = gains
                .iter()
                .enumerate()
                .map(|(h, g)| g * ((h + 1) as f64 * phase).sin())
                .sum();
            assert!((harmonic_sum(phase, &gains) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn samples_are_reproducible_and_order_free() {
        let g = Generator::new(small_spec()).unwrap();
        let a = g.sample("spatter_0001", WeldCategory::Spatter).unwrap();
        let _ = g.sample("good_0000", WeldCategory::Good).unwrap();
        let b = g.sample("spatter_0001", WeldCategory::Spatter).unwrap();
        assert_eq!(a.audio, b.audio);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.embeddings.n_frames(), 66);
        assert_eq!(a.audio.len(), 17600);
        assert!(a.defect_span.is_some() && !a.events.is_empty());
    }

    #[test]
    fn counting_and_unique_ids() {
        let mut spec = small_spec();
        spec.n_good = 10;
        spec.defects = [(WeldCategory::Porosity, 10)].into_iter().collect();
        let plan = spec.plan();
        assert_eq!(plan.len(), 20);
        let ids: std::collections::HashSet<_> = plan.iter().map(|p| &p.0).collect();
        assert_eq!(ids.len(), 20);
    }

    #[test]
    fn invalid_specs() {
        let mut s = small_spec();
        s.duration_s = 2.0;
        assert!(Generator::new(s).is_err());
        let mut s = small_spec();
        s.defects.insert(WeldCategory::Good, 1);
        assert!(s.validate().is_err());
        let mut s = small_spec();
        s.intensity = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn balanced_spreads_defects() {
        let s = SynthSpec::balanced(0, 120, 120);
        assert_eq!(s.defects.values().sum::<usize>(), 120);
        assert!(s.defects.values().all(|&n| n == 10 || n == 11));
    }
}
