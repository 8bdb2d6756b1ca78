//! Threshold-free evaluation: AUC, ROC and DET curves, equal error rate,
//! per-category breakdowns and the train/validation/test split.

mod curves;
mod report;
mod split;

pub use curves::{
    auc, auc_trapezoid, det_curve, eer, roc_curve, DetPoint, Eer, RocCurve, RocPoint,
};
pub use report::{
    auc_of, det_of, det_svg, per_category_auc, roc_svg, AucTable, CategoryAuc, EvalReport, RowKey,
    ScoredSample,
};
pub use split::{apply_split, good_split_sizes, Partition, Split};
