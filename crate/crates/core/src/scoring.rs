//! Sample-level aggregation of frame scores, training-set standardization,
//! convex late fusion and the score file formats.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::WeldCategory;
use crate::error::{Error, Result};
use crate::eval::auc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Video,
    /// Only appears in score files, for fused outputs.
    Fused,
}

impl Modality {
    pub fn id(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Video => "video",
            Modality::Fused => "fused",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Per-frame anomaly scores of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSeries {
    pub sample_id: String,
    pub modality: Modality,
    pub scores: Vec<f64>,
    /// Seconds between consecutive frames.
    pub frame_period: f64,
}

impl ScoreSeries {
    pub fn new(
        sample_id: impl Into<String>,
        modality: Modality,
        scores: Vec<f64>,
        frame_period: f64,
    ) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("score series"));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite() || **s < 0.0) {
            return Err(Error::data(format!(
                "frame scores must be finite and non-negative, got {bad}"
            )));
        }
        if !(frame_period > 0.0 && frame_period.is_finite()) {
            return Err(Error::config(format!(
                "frame period must be positive, got {frame_period}"
            )));
        }
        Ok(ScoreSeries {
            sample_id: sample_id.into(),
            modality,
            scores,
            frame_period,
        })
    }

    pub fn aggregate(&self, method: Aggregation) -> Result<f64> {
        aggregate(&self.scores, self.frame_period, method)
    }
}

/// How frame scores collapse to one sample score. Serialized as its string
/// form (`mean`, `max`, `max-ma:<seconds>`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Aggregation {
    Mean,
    Max,
    /// Maximum of the moving averages over `window_s` seconds.
    MaxOverMa {
        window_s: f64,
    },
}

impl Aggregation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Aggregation::MaxOverMa { window_s } if !(window_s > 0.0 && window_s.is_finite()) => {
                Err(Error::config(format!(
                    "moving-average window must be positive, got {window_s}"
                )))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregation::Mean => f.write_str("mean"),
            Aggregation::Max => f.write_str("max"),
            Aggregation::MaxOverMa { window_s } => write!(f, "max-ma:{window_s}"),
        }
    }
}

impl From<Aggregation> for String {
    fn from(a: Aggregation) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for Aggregation {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Parses `mean`, `max` or `max-ma:<seconds>`.
impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let agg = match s {
            "mean" => Aggregation::Mean,
            "max" => Aggregation::Max,
            other => {
                let window = other.strip_prefix("max-ma:").ok_or_else(|| {
                    Error::config(format!(
                        "unknown aggregation `{other}` (mean, max, max-ma:<seconds>)"
                    ))
                })?;
                let window_s = window
                    .parse()
                    .map_err(|_| Error::config(format!("bad moving-average window `{window}`")))?;
                Aggregation::MaxOverMa { window_s }
            }
        };
        agg.validate()?;
        Ok(agg)
    }
}

/// Mean written as `x0 + mean(x - x0)` so a constant series comes back exact.
fn shifted_mean(xs: &[f64]) -> f64 {
    let x0 = xs[0];
    x0 + xs.iter().map(|x| x - x0).sum::<f64>() / xs.len() as f64
}

/// Moving-average window length in frames: `round(window_s / period)`,
/// at least one frame and at most the whole series.
pub fn ma_window_frames(window_s: f64, frame_period: f64, n: usize) -> usize {
    let k = (window_s / frame_period).round();
    if k < 1.0 {
        1
    } else {
        (k as usize).min(n)
    }
}

pub fn aggregate(scores: &[f64], frame_period: f64, method: Aggregation) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("score series"));
    }
    method.validate()?;
    Ok(match method {
        Aggregation::Mean => shifted_mean(scores),
        Aggregation::Max => scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::MaxOverMa { window_s } => {
            let k = ma_window_frames(window_s, frame_period, scores.len());
            scores
                .windows(k)
                .map(shifted_mean)
                .fold(f64::NEG_INFINITY, f64::max)
        }
    })
}

/// Mean and population standard deviation of training-set sample scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub std: f64,
}

impl Standardizer {
    pub fn fit(training_scores: &[f64]) -> Result<Self> {
        if training_scores.len() < 2 {
            return Err(Error::data(format!(
                "standardization needs at least 2 training scores, got {}",
                training_scores.len()
            )));
        }
        if let Some(bad) = training_scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("training score {bad}")));
        }
        let mean = shifted_mean(training_scores);
        let var = training_scores
            .iter()
            .map(|x| (x - mean).powi(2))
            .sum::<f64>()
            / training_scores.len() as f64;
        let std = var.sqrt();
        if std == 0.0 {
            log::warn!("all training scores equal {mean}; standardized scores will all be 0");
        }
        Ok(Standardizer { mean, std })
    }

    pub fn is_degenerate(&self) -> bool {
        self.std == 0.0
    }

    pub fn apply(&self, score: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            (score - self.mean) / self.std
        }
    }
}

/// `w * z_audio + (1 - w) * z_video`.
pub fn fuse(z_audio: f64, z_video: f64, w_audio: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&w_audio) {
        return Err(Error::config(format!(
            "fusion weight must lie in [0, 1], got {w_audio}"
        )));
    }
    Ok(w_audio * z_audio + (1.0 - w_audio) * z_video)
}

/// Outcome of the validation grid over fusion weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSearch {
    pub w_audio: f64,
    pub w_video: f64,
    pub auc: f64,
    /// `(w_audio, validation AUC)` for every grid weight, ascending.
    pub trace: Vec<(f64, f64)>,
}

/// Scans `w = i / steps` for `i = 0..=steps` and keeps the weight with the
/// highest validation AUC; only strict improvements replace the incumbent,
/// so ties resolve to the smallest audio weight.
pub fn grid_search_weight(
    z_audio: &[f64],
    z_video: &[f64],
    labels: &[bool],
    steps: usize,
) -> Result<FusionSearch> {
    if z_audio.len() != z_video.len() || z_audio.len() != labels.len() {
        return Err(Error::shape(
            "fusion grid",
            format!(
                "{} audio, {} video scores and {} labels",
                z_audio.len(),
                z_video.len(),
                labels.len()
            ),
        ));
    }
    if steps == 0 {
        return Err(Error::config("fusion grid needs at least one step"));
    }
    let eval_weight = |i: usize| -> Result<(f64, f64)> {
        let w = i as f64 / steps as f64;
        let fused = z_audio
            .iter()
            .zip(z_video)
            .map(|(&a, &v)| fuse(a, v, w))
            .collect::<Result<Vec<f64>>>()?;
        Ok((w, auc(&fused, labels)?))
    };
    #[cfg(feature = "parallel")]
    let trace: Vec<(f64, f64)> = {
        use rayon::prelude::*;
        (0..=steps)
            .into_par_iter()
            .map(eval_weight)
            .collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let trace: Vec<(f64, f64)> = (0..=steps).map(eval_weight).collect::<Result<_>>()?;

    let mut best = trace[0];
    for &(w, a) in &trace[1..] {
        if a > best.1 {
            best = (w, a);
        }
    }
    Ok(FusionSearch {
        w_audio: best.0,
        w_video: 1.0 - best.0,
        auc: best.1,
        trace,
    })
}

/// One line of a score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub sample_id: String,
    pub modality: Modality,
    /// 1 for a defect, 0 for a good weld.
    pub label: u8,
    pub category: WeldCategory,
    pub raw_score: f64,
    pub z_score: f64,
}

impl ScoreRecord {
    pub fn new(
        sample_id: impl Into<String>,
        modality: Modality,
        category: WeldCategory,
        raw_score: f64,
        z_score: f64,
    ) -> Self {
        ScoreRecord {
            sample_id: sample_id.into(),
            modality,
            label: u8::from(!category.is_good()),
            category,
            raw_score,
            z_score,
        }
    }

    pub fn is_defect(&self) -> bool {
        self.label == 1
    }

    fn check(&self) -> Result<()> {
        if self.label > 1 {
            return Err(Error::data(format!(
                "`{}`: label must be 0 or 1, got {}",
                self.sample_id, self.label
            )));
        }
        if self.is_defect() == self.category.is_good() {
            return Err(Error::data(format!(
                "`{}`: label {} contradicts category `{}`",
                self.sample_id, self.label, self.category
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFormat {
    Csv,
    Jsonl,
}

impl ScoreFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(ScoreFormat::Csv),
            Some("jsonl") => Ok(ScoreFormat::Jsonl),
            _ => Err(Error::config(format!(
                "score file {} must end in .csv or .jsonl",
                path.display()
            ))),
        }
    }
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    let format = ScoreFormat::from_path(path)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        ScoreFormat::Csv => {
            let mut w = csv::Writer::from_writer(out);
            for r in records {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        ScoreFormat::Jsonl => {
            for r in records {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            out.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let format = ScoreFormat::from_path(path)?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let records: Vec<ScoreRecord> = match format {
        ScoreFormat::Csv => csv::Reader::from_reader(file)
            .deserialize()
            .collect::<std::result::Result<_, _>>()?,
        ScoreFormat::Jsonl => {
            let mut out = Vec::new();
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record = serde_json::from_str(&line).map_err(|e| Error::Format {
                    format: "score jsonl",
                    detail: format!("line {}: {e}", i + 1),
                })?;
                out.push(record);
            }
            out
        }
    };
    for r in &records {
        r.check()?;
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_aggregates() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(aggregate(&s, 1.0, Aggregation::Mean).unwrap(), 2.5);
        assert_eq!(aggregate(&s, 1.0, Aggregation::Max).unwrap(), 4.0);
        assert_eq!(
            aggregate(&s, 1.0, Aggregation::MaxOverMa { window_s: 2.0 }).unwrap(),
            3.5
        );
        // window longer than the series truncates to the whole series
        assert_eq!(
            aggregate(&s, 1.0, Aggregation::MaxOverMa { window_s: 10.0 }).unwrap(),
            2.5
        );
        assert_eq!(
            aggregate(&s, 1.0, Aggregation::MaxOverMa { window_s: 0.3 }).unwrap(),
            4.0
        );
    }

    #[test]
    fn constant_series_is_fixed() {
        let s = vec![0.1; 37];
        for m in [
            Aggregation::Mean,
            Aggregation::Max,
            Aggregation::MaxOverMa { window_s: 0.5 },
            Aggregation::MaxOverMa { window_s: 1.0 },
        ] {
            assert_eq!(aggregate(&s, 1.0 / 30.0, m).unwrap(), 0.1, "{m}");
        }
    }

    #[test]
    fn aggregation_errors() {
        assert!(aggregate(&[], 1.0, Aggregation::Mean).is_err());
        assert!(aggregate(&[1.0], 1.0, Aggregation::MaxOverMa { window_s: 0.0 }).is_err());
        assert!(ScoreSeries::new("x", Modality::Audio, vec![-1.0], 1.0).is_err());
        assert!(ScoreSeries::new("x", Modality::Audio, vec![1.0], 0.0).is_err());
    }

    #[test]
    fn aggregation_parses() {
        assert_eq!("mean".parse::<Aggregation>().unwrap(), Aggregation::Mean);
        assert_eq!(
            "max-ma:2".parse::<Aggregation>().unwrap(),
            Aggregation::MaxOverMa { window_s: 2.0 }
        );
        assert!("max-ma:-1".parse::<Aggregation>().is_err());
        assert!("median".parse::<Aggregation>().is_err());
        let a = Aggregation::MaxOverMa { window_s: 1.5 };
        assert_eq!(a.to_string().parse::<Aggregation>().unwrap(), a);
        assert_eq!(serde_json::to_string(&a).unwrap(), "\"max-ma:1.5\"");
        assert!(serde_json::from_str::<Aggregation>("\"max-ma:0\"").is_err());
    }

    #[test]
    fn standardizer_closed_form() {
        let st = Standardizer::fit(&[2.0, 4.0]).unwrap();
        assert_eq!((st.mean, st.std), (3.0, 1.0));
        assert_eq!(st.apply(5.0), 2.0);
        assert_eq!(st.apply(3.0), 0.0);
        assert!(Standardizer::fit(&[1.0]).is_err());
    }

    #[test]
    fn degenerate_standardizer_maps_to_zero() {
        let st = Standardizer::fit(&[7.0, 7.0, 7.0]).unwrap();
        assert!(st.is_degenerate());
        assert_eq!(st.apply(100.0), 0.0);
    }

    #[test]
    fn fuse_examples() {
        assert_eq!(fuse(3.0, -2.0, 0.0).unwrap(), -2.0);
        assert_eq!(fuse(3.0, -2.0, 1.0).unwrap(), 3.0);
        assert!((fuse(1.0, -1.0, 0.37).unwrap() + 0.26).abs() < 1e-15);
        assert!(fuse(1.0, 1.0, 1.01).is_err());
        assert!(fuse(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn grid_prefers_separating_video() {
        let labels = [false, false, false, true, true, true];
        let za = [0.5, -0.5, 0.5, -0.5, 0.5, -0.5];
        let zv = [-1.0, -2.0, -1.5, 1.0, 2.0, 1.5];
        let r = grid_search_weight(&za, &zv, &labels, 100).unwrap();
        assert_eq!(r.w_audio, 0.0);
        assert_eq!(r.auc, 1.0);
        assert_eq!(r.trace.len(), 101);
    }

    #[test]
    fn grid_ties_resolve_to_zero() {
        let labels = [false, true, false, true];
        let z = [0.3, 0.1, -0.2, 0.9];
        let r = grid_search_weight(&z, &z, &labels, 100).unwrap();
        assert_eq!(r.w_audio, 0.0);
        assert!(r.trace.iter().all(|&(_, a)| a == r.auc));
    }

    #[test]
    fn score_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            ScoreRecord::new("a", Modality::Audio, WeldCategory::Good, 0.25, -1.0),
            ScoreRecord::new("b", Modality::Video, WeldCategory::Porosity, 1.5, 2.0),
        ];
        for name in ["s.csv", "s.jsonl"] {
            let p = dir.path().join(name);
            write_scores(&p, &records).unwrap();
            assert_eq!(read_scores(&p).unwrap(), records);
        }
        let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "sample_id,modality,label,category,raw_score,z_score"
        );
        assert!(write_scores(&dir.path().join("s.txt"), &records).is_err());
    }

    #[test]
    fn contradictory_label_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        std::fs::write(
            &p,
            r#"{"sample_id":"a","modality":"audio","label":1,"category":"good","raw_score":0.1,"z_score":0.0}"#,
        )
        .unwrap();
        assert!(read_scores(&p).is_err());
    }
}
