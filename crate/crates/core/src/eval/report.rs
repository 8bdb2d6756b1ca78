use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::curves::{auc, det_curve, eer, roc_curve, DetPoint, Eer, RocCurve};
use crate::dataset::WeldCategory;
use crate::error::{Error, Result};

/// One evaluated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample_id: String,
    pub category: WeldCategory,
    pub score: f64,
}

impl ScoredSample {
    pub fn is_defect(&self) -> bool {
        !self.category.is_good()
    }
}

fn columns(samples: &[ScoredSample]) -> (Vec<f64>, Vec<bool>) {
    samples.iter().map(|s| (s.score, s.is_defect())).unzip()
}

pub fn auc_of(samples: &[ScoredSample]) -> Result<f64> {
    let (s, l) = columns(samples);
    auc(&s, &l)
}

/// Row key of a per-category table: a defect category or the pooled "All".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKey {
    Category(WeldCategory),
    All,
}

impl RowKey {
    pub fn label(&self) -> &'static str {
        match self {
            RowKey::Category(c) => c.label(),
            RowKey::All => "All",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryAuc {
    pub row: RowKey,
    pub n_good: usize,
    pub n_defect: usize,
    pub auc: f64,
}

/// AUC of each defect category against the good welds only, followed by the
/// "All" row over goods and every defect pooled. Categories without samples
/// are skipped (with a warning when they appear nowhere in the set).
pub fn per_category_auc(samples: &[ScoredSample]) -> Result<Vec<CategoryAuc>> {
    let goods: Vec<&ScoredSample> = samples.iter().filter(|s| !s.is_defect()).collect();
    if goods.is_empty() {
        return Err(Error::SingleClass {
            positives: samples.len(),
            negatives: 0,
        });
    }
    let mut by_cat: BTreeMap<WeldCategory, Vec<&ScoredSample>> = BTreeMap::new();
    for s in samples.iter().filter(|s| s.is_defect()) {
        by_cat.entry(s.category).or_default().push(s);
    }
    let mut rows = Vec::new();
    for cat in WeldCategory::defects() {
        let Some(defects) = by_cat.get(&cat) else {
            log::debug!("per-category auc: no `{}` samples, row skipped", cat.id());
            continue;
        };
        let (mut scores, mut labels): (Vec<f64>, Vec<bool>) =
            goods.iter().map(|g| (g.score, false)).unzip();
        scores.extend(defects.iter().map(|d| d.score));
        labels.extend(std::iter::repeat_n(true, defects.len()));
        rows.push(CategoryAuc {
            row: RowKey::Category(cat),
            n_good: goods.len(),
            n_defect: defects.len(),
            auc: auc(&scores, &labels)?,
        });
    }
    let n_defect = samples.len() - goods.len();
    rows.push(CategoryAuc {
        row: RowKey::All,
        n_good: goods.len(),
        n_defect,
        auc: auc_of(samples)?,
    });
    Ok(rows)
}

/// Everything `eval` reports for one score set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub n_good: usize,
    pub n_defect: usize,
    pub categories: Vec<CategoryAuc>,
    pub eer: Eer,
    pub roc: RocCurve,
}

impl EvalReport {
    pub fn build(name: impl Into<String>, samples: &[ScoredSample]) -> Result<Self> {
        let categories = per_category_auc(samples)?;
        let (s, l) = columns(samples);
        let all = categories.last().expect("the All row is always present");
        Ok(EvalReport {
            name: name.into(),
            n_good: all.n_good,
            n_defect: all.n_defect,
            eer: eer(&s, &l)?,
            roc: roc_curve(&s, &l)?,
            categories,
        })
    }

    pub fn all_auc(&self) -> f64 {
        self.categories.last().map(|r| r.auc).unwrap_or(f64::NAN)
    }
}

/// A category-by-column AUC table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucTable {
    pub columns: Vec<String>,
    pub rows: Vec<(RowKey, Vec<Option<f64>>)>,
}

impl AucTable {
    /// Joins several reports column-wise; a category missing from a report
    /// leaves an empty cell.
    pub fn from_reports(reports: &[&EvalReport]) -> Self {
        let mut keys: Vec<RowKey> = reports
            .iter()
            .flat_map(|r| r.categories.iter().map(|c| c.row))
            .collect();
        keys.sort();
        keys.dedup();
        let rows = keys
            .into_iter()
            .map(|k| {
                let cells = reports
                    .iter()
                    .map(|r| r.categories.iter().find(|c| c.row == k).map(|c| c.auc))
                    .collect();
                (k, cells)
            })
            .collect();
        AucTable {
            columns: reports.iter().map(|r| r.name.clone()).collect(),
            rows,
        }
    }

    /// Fixed-width text rendering, one row per category, "All" last.
    pub fn render_text(&self) -> String {
        let first = self
            .rows
            .iter()
            .map(|(k, _)| k.label().len())
            .chain(std::iter::once("Weld Category".len()))
            .max()
            .unwrap_or(0);
        let widths: Vec<usize> = self.columns.iter().map(|c| c.len().max(6)).collect();
        let mut out = String::new();
        let _ = write!(out, "{:<first$}", "Weld Category");
        for (c, w) in self.columns.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
        let total = first + widths.iter().map(|w| w + 2).sum::<usize>();
        out.push_str(&"-".repeat(total));
        out.push('\n');
        for (key, cells) in &self.rows {
            let _ = write!(out, "{:<first$}", key.label());
            for (cell, w) in cells.iter().zip(&widths) {
                match cell {
                    Some(v) => {
                        let _ = write!(out, "  {v:>w$.4}");
                    }
                    None => {
                        let _ = write!(out, "  {:>w$}", "-");
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

const SVG_SIZE: f64 = 360.0;
const SVG_MARGIN: f64 = 40.0;

fn svg_frame(title: &str, x_label: &str, y_label: &str, body: &str) -> String {
    let plot = SVG_SIZE - 2.0 * SVG_MARGIN;
    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#,
        s = SVG_SIZE
    );
    let _ = write!(
        svg,
        r#"<rect x="{m}" y="{m}" width="{p}" height="{p}" fill="none" stroke="black"/>"#,
        m = SVG_MARGIN,
        p = plot
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        SVG_SIZE / 2.0,
        escape(title)
    );
    let _ = write!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
        SVG_SIZE / 2.0,
        SVG_SIZE - 10.0,
        escape(x_label)
    );
    let _ = write!(
        svg,
        r#"<text x="14" y="{y}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {y})">{}</text>"#,
        escape(y_label),
        y = SVG_SIZE / 2.0
    );
    svg.push_str(body);
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn polyline(points: impl Iterator<Item = (f64, f64)>, color: &str) -> String {
    let plot = SVG_SIZE - 2.0 * SVG_MARGIN;
    let coords: Vec<String> = points
        .map(|(x, y)| {
            format!(
                "{:.2},{:.2}",
                SVG_MARGIN + x * plot,
                SVG_MARGIN + (1.0 - y) * plot
            )
        })
        .collect();
    format!(
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
        coords.join(" ")
    )
}

/// ROC plot with the chance diagonal.
pub fn roc_svg(title: &str, curve: &RocCurve) -> String {
    let mut body = polyline([(0.0, 0.0), (1.0, 1.0)].into_iter(), "#bbbbbb");
    body.push_str(&polyline(
        curve.points.iter().map(|p| (p.fpr, p.tpr)),
        "#1f5fa8",
    ));
    svg_frame(title, "false positive rate", "true positive rate", &body)
}

/// DET plot (linear axes) with the equal-error diagonal and EER marker.
pub fn det_svg(title: &str, det: &[DetPoint], eer: &Eer) -> String {
    let plot = SVG_SIZE - 2.0 * SVG_MARGIN;
    let mut body = polyline([(0.0, 0.0), (1.0, 1.0)].into_iter(), "#bbbbbb");
    body.push_str(&polyline(det.iter().map(|p| (p.fpr, p.fnr)), "#a83a1f"));
    let _ = write!(
        body,
        r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="black"/><text x="{:.2}" y="{:.2}" font-size="11">EER {:.3}</text>"#,
        SVG_MARGIN + eer.rate * plot,
        SVG_MARGIN + (1.0 - eer.rate) * plot,
        SVG_MARGIN + eer.rate * plot + 6.0,
        SVG_MARGIN + (1.0 - eer.rate) * plot - 6.0,
        eer.rate
    );
    svg_frame(title, "false positive rate", "false negative rate", &body)
}

/// DET points and EER for a sample set.
pub fn det_of(samples: &[ScoredSample]) -> Result<(Vec<DetPoint>, Eer)> {
    let (s, l) = columns(samples);
    Ok((det_curve(&s, &l)?, eer(&s, &l)?))
}
