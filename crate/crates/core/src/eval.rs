//! Two-class (authentic/forged) mIoU scoring of predicted forgery masks.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetManifest, ManifestEntry, Split};
use crate::patterns::CaseKey;
use crate::raster::Mask;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("mask dimensions differ: prediction {pred:?}, ground truth {gt:?}")]
    DimensionMismatch { pred: (u32, u32), gt: (u32, u32) },
    #[error("no manifest entries to evaluate")]
    NoSamples,
    #[error("cannot average zero reports")]
    NoReports,
    #[error("reports cover different cases or aggregation modes")]
    IncompatibleReports,
}

/// Pixel tallies with forged as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merge(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_, tn: self.tn + o.tn }
    }

    pub fn iou_forged(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fp + self.fn_)
    }

    pub fn iou_authentic(&self) -> f64 {
        ratio_or_one(self.tn, self.tn + self.fp + self.fn_)
    }
}

fn ratio_or_one(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion(pred: &Mask, gt: &Mask) -> Result<ConfusionCounts, EvalError> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(EvalError::DimensionMismatch {
            pred: (pred.width(), pred.height()),
            gt: (gt.width(), gt.height()),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.as_raw().iter().zip(gt.as_raw()) {
        match (p != 0, g != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Mean of the forged and authentic IoU.
pub fn miou(c: &ConfusionCounts) -> f64 {
    (c.iou_forged() + c.iou_authentic()) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// mIoU computed per image, then averaged within each case.
    #[default]
    PerImage,
    /// Confusion counts summed within each case before computing mIoU.
    Pooled,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub allow_missing: bool,
    pub aggregation: Aggregation,
    /// Only entries of this split are scored; `None` scores all entries.
    pub split: Option<Split>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { allow_missing: false, aggregation: Aggregation::PerImage, split: Some(Split::Test) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleErrorKind {
    MissingPrediction,
    DimensionMismatch,
    Unreadable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleError {
    pub path: String,
    pub kind: SampleErrorKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScore {
    pub case: CaseKey,
    pub n_samples: usize,
    pub miou: f64,
    pub iou_forged: f64,
    pub iou_authentic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aggregation: Aggregation,
    /// Number of runs averaged into this report.
    pub runs: usize,
    pub per_case: Vec<CaseScore>,
    /// Unweighted mean of the per-case mIoU values.
    pub overall: f64,
    /// Mean weighted by per-case sample counts.
    pub overall_weighted: f64,
    pub iou_forged: f64,
    pub iou_authentic: f64,
    pub n_samples: usize,
    pub errors: Vec<SampleError>,
}

impl EvalReport {
    pub fn case(&self, case: CaseKey) -> Option<&CaseScore> {
        self.per_case.iter().find(|c| c.case == case)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    fn from_cases(aggregation: Aggregation, runs: usize, per_case: Vec<CaseScore>, errors: Vec<SampleError>) -> Self {
        let k = per_case.len().max(1) as f64;
        let n_samples: usize = per_case.iter().map(|c| c.n_samples).sum();
        let overall = per_case.iter().map(|c| c.miou).sum::<f64>() / k;
        let overall_weighted = if n_samples == 0 {
            0.0
        } else {
            per_case.iter().map(|c| c.miou * c.n_samples as f64).sum::<f64>() / n_samples as f64
        };
        EvalReport {
            aggregation,
            runs,
            overall,
            overall_weighted,
            iou_forged: per_case.iter().map(|c| c.iou_forged).sum::<f64>() / k,
            iou_authentic: per_case.iter().map(|c| c.iou_authentic).sum::<f64>() / k,
            n_samples,
            per_case,
            errors,
        }
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<22} {:<12} {:>6} {:>8} {:>10} {:>10}",
            "pattern", "method", "n", "mIoU", "IoU forged", "IoU auth"
        )?;
        for c in &self.per_case {
            writeln!(
                f,
                "{:<22} {:<12} {:>6} {:>8.3} {:>10.3} {:>10.3}",
                c.case.pattern().label(),
                c.case.method().label(),
                c.n_samples,
                c.miou,
                c.iou_forged,
                c.iou_authentic
            )?;
        }
        writeln!(
            f,
            "{:<22} {:<12} {:>6} {:>8.3} {:>10.3} {:>10.3}",
            "Average", "", self.n_samples, self.overall, self.iou_forged, self.iou_authentic
        )?;
        write!(f, "{:<22} {:<12} {:>6} {:>8.3}", "Weighted average", "", self.n_samples, self.overall_weighted)?;
        if self.runs > 1 {
            write!(f, "\n(mean of {} runs)", self.runs)?;
        }
        if !self.errors.is_empty() {
            write!(f, "\n{} sample error(s)", self.errors.len())?;
        }
        Ok(())
    }
}

/// Locates the prediction for an entry: the ground-truth mask's relative
/// path under `pred_dir`, falling back to the forged image's relative path.
pub fn prediction_path(pred_dir: &Path, entry: &ManifestEntry) -> Option<PathBuf> {
    [&entry.mask_path, &entry.forged_path].into_iter().map(|p| pred_dir.join(p)).find(|p| p.is_file())
}

fn score_entry(root: &Path, pred_dir: &Path, entry: &ManifestEntry, allow_missing: bool) -> Result<ConfusionCounts, SampleError> {
    let err = |kind, message: String| Err(SampleError { path: entry.forged_path.clone(), kind, message });
    let gt = match Mask::load_png(&root.join(&entry.mask_path)) {
        Ok(m) => m,
        Err(e) => return err(SampleErrorKind::Unreadable, format!("ground truth: {e}")),
    };
    let pred = match prediction_path(pred_dir, entry) {
        Some(p) => match Mask::load_png(&p) {
            Ok(m) => m,
            Err(e) => return err(SampleErrorKind::Unreadable, format!("prediction {}: {e}", p.display())),
        },
        None if allow_missing => Mask::zeros(gt.width(), gt.height()),
        None => return err(SampleErrorKind::MissingPrediction, format!("no prediction under {}", pred_dir.display())),
    };
    match confusion(&pred, &gt) {
        Ok(c) => Ok(c),
        Err(e) => err(SampleErrorKind::DimensionMismatch, e.to_string()),
    }
}

/// Per-sample confusion counts, in manifest order, for the selected entries.
pub fn score_samples(
    manifest: &DatasetManifest,
    manifest_path: &Path,
    pred_dir: &Path,
    options: &EvalOptions,
) -> Vec<(CaseKey, Result<ConfusionCounts, SampleError>)> {
    let root = manifest.root_dir(manifest_path);
    let selected: Vec<&ManifestEntry> =
        manifest.entries.iter().filter(|e| options.split.is_none_or(|s| e.split == s)).collect();
    selected
        .par_iter()
        .map(|e| {
            (e.record.case, score_entry(&root, pred_dir, e, options.allow_missing))
        })
        .collect()
}

/// Builds a report from per-sample confusion counts.
pub fn aggregate(samples: &[(CaseKey, ConfusionCounts)], aggregation: Aggregation) -> Vec<CaseScore> {
    let mut out = Vec::new();
    for case in CaseKey::ALL {
        let counts: Vec<&ConfusionCounts> = samples.iter().filter(|(k, _)| *k == case).map(|(_, c)| c).collect();
        if counts.is_empty() {
            continue;
        }
        let n = counts.len() as f64;
        let (m, f, a) = match aggregation {
            Aggregation::PerImage => (
                counts.iter().map(|c| miou(c)).sum::<f64>() / n,
                counts.iter().map(|c| c.iou_forged()).sum::<f64>() / n,
                counts.iter().map(|c| c.iou_authentic()).sum::<f64>() / n,
            ),
            Aggregation::Pooled => {
                let pooled = counts.iter().fold(ConfusionCounts::default(), |acc, c| acc.merge(**c));
                (miou(&pooled), pooled.iou_forged(), pooled.iou_authentic())
            }
        };
        out.push(CaseScore { case, n_samples: counts.len(), miou: m, iou_forged: f, iou_authentic: a });
    }
    out
}

/// Scores every selected manifest entry against predictions in `pred_dir`.
/// Per-sample failures are collected in `errors` and excluded from scores.
pub fn evaluate_run(
    manifest: &DatasetManifest,
    manifest_path: &Path,
    pred_dir: &Path,
    options: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let scored = score_samples(manifest, manifest_path, pred_dir, options);
    if scored.is_empty() {
        return Err(EvalError::NoSamples);
    }
    let mut ok = Vec::with_capacity(scored.len());
    let mut errors = Vec::new();
    for (case, r) in scored {
        match r {
            Ok(c) => ok.push((case, c)),
            Err(e) => errors.push(e),
        }
    }
    Ok(EvalReport::from_cases(options.aggregation, 1, aggregate(&ok, options.aggregation), errors))
}

/// Cell-wise mean of repeated runs over the same cases.
pub fn average_reports(reports: &[EvalReport]) -> Result<EvalReport, EvalError> {
    let first = reports.first().ok_or(EvalError::NoReports)?;
    let cases: Vec<CaseKey> = first.per_case.iter().map(|c| c.case).collect();
    for r in reports {
        if r.aggregation != first.aggregation || r.per_case.iter().map(|c| c.case).collect::<Vec<_>>() != cases {
            return Err(EvalError::IncompatibleReports);
        }
    }
    let k = reports.len() as f64;
    let per_case = cases
        .iter()
        .enumerate()
        .map(|(i, &case)| CaseScore {
            case,
            n_samples: first.per_case[i].n_samples,
            miou: reports.iter().map(|r| r.per_case[i].miou).sum::<f64>() / k,
            iou_forged: reports.iter().map(|r| r.per_case[i].iou_forged).sum::<f64>() / k,
            iou_authentic: reports.iter().map(|r| r.per_case[i].iou_authentic).sum::<f64>() / k,
        })
        .collect();
    let errors = reports.iter().flat_map(|r| r.errors.iter().cloned()).collect();
    let runs = reports.iter().map(|r| r.runs).sum();
    Ok(EvalReport::from_cases(first.aggregation, runs, per_case, errors))
}
