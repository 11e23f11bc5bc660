//! ImageCLEF figure-separation metrics.
//!
//! A detection is correct when it covers more than `overlap_threshold` of a
//! ground-truth box that no higher-ranked detection has claimed. Per-figure
//! accuracy divides the correct count by `max(#gt, #detections)`, so missed,
//! spurious and duplicate detections all cost.

use std::cmp::Ordering;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, OverlapDenominator};
use crate::real::Real;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no figures to evaluate")]
    EmptyDataset,
    #[error("overlap threshold {0} outside (0, 1]")]
    InvalidThreshold(f64),
    #[error(transparent)]
    IoFailure(#[from] std::io::Error),
}

/// How precision is summarized into AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMethod {
    /// Area under the monotone precision envelope at every recall step.
    #[default]
    AllPointInterpolated,
    /// Mean of raw precision at the rank of each true positive, over `#gt`.
    Uninterpolated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub overlap_threshold: f64,
    pub overlap_denominator: OverlapDenominator,
    pub ap_method: ApMethod,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            overlap_threshold: 0.66,
            overlap_denominator: OverlapDenominator::GtArea,
            ap_method: ApMethod::AllPointInterpolated,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.overlap_threshold > 0.0 && self.overlap_threshold <= 1.0 {
            Ok(())
        } else {
            Err(EvalError::InvalidThreshold(self.overlap_threshold))
        }
    }
}

/// A scored box as seen by the evaluator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox<T> {
    pub bbox: BBox<T>,
    pub confidence: T,
}

impl<T: Real> From<crate::detector::Detection<T>> for ScoredBox<T> {
    fn from(d: crate::detector::Detection<T>) -> Self {
        Self {
            bbox: d.bbox,
            confidence: d.confidence,
        }
    }
}

/// Detection indices by descending confidence; equal scores keep input order.
fn confidence_order<T: Real>(dets: &[ScoredBox<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .partial_cmp(&dets[a].confidence)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy matching: detections in descending confidence each claim the
/// still-unmatched ground truth with the largest overlap, if that overlap
/// exceeds the threshold. Returns the matched gt index per detection.
pub fn match_figure<T: Real>(
    dets: &[ScoredBox<T>],
    gts: &[BBox<T>],
    config: &EvalConfig,
) -> Vec<Option<usize>> {
    let threshold = T::lit(config.overlap_threshold);
    let mut taken = vec![false; gts.len()];
    let mut matches = vec![None; dets.len()];
    for d in confidence_order(dets) {
        let mut best: Option<(usize, T)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let ov = config.overlap_denominator.overlap(&dets[d].bbox, gt);
            if ov > threshold && best.is_none_or(|(_, b)| ov > b) {
                best = Some((g, ov));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            matches[d] = Some(g);
        }
    }
    matches
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigureScore {
    pub correct: usize,
    pub n_gt: usize,
    pub n_det: usize,
    pub accuracy: f64,
    /// Neither ground truth nor detections: scored 1.0 and counted separately.
    pub both_empty: bool,
}

pub fn figure_accuracy<T: Real>(
    dets: &[ScoredBox<T>],
    gts: &[BBox<T>],
    config: &EvalConfig,
) -> FigureScore {
    let correct = match_figure(dets, gts, config)
        .iter()
        .filter(|m| m.is_some())
        .count();
    score(correct, gts.len(), dets.len())
}

fn score(correct: usize, n_gt: usize, n_det: usize) -> FigureScore {
    let denom = n_gt.max(n_det);
    FigureScore {
        correct,
        n_gt,
        n_det,
        accuracy: if denom == 0 {
            1.0
        } else {
            correct as f64 / denom as f64
        },
        both_empty: denom == 0,
    }
}

/// Detections and ground truth of one figure.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureEval<T> {
    pub detections: Vec<ScoredBox<T>>,
    pub ground_truth: Vec<BBox<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_figure_accuracy: Vec<f64>,
    pub dataset_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub average_precision: f64,
    /// `(recall, precision)` after each detection of the pooled ranking.
    pub pr_points: Vec<(f64, f64)>,
    pub n_figures: usize,
    pub n_gt: usize,
    pub n_det: usize,
    pub both_empty_count: usize,
}

/// Fixed-key JSON form of [`EvalReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub map: f64,
    pub n_figures: usize,
    pub n_gt: usize,
    pub n_det: usize,
    pub both_empty_count: usize,
}

impl EvalReport {
    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            accuracy: self.dataset_accuracy,
            precision: self.precision,
            recall: self.recall,
            map: self.average_precision,
            n_figures: self.n_figures,
            n_gt: self.n_gt,
            n_det: self.n_det,
            both_empty_count: self.both_empty_count,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary()).expect("plain numbers serialize")
    }

    /// Precision envelope: at each rank, the best precision at that recall or beyond.
    pub fn interpolated_precision(&self) -> Vec<f64> {
        let mut env: Vec<f64> = self.pr_points.iter().map(|p| p.1).collect();
        for i in (0..env.len().saturating_sub(1)).rev() {
            env[i] = env[i].max(env[i + 1]);
        }
        env
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Average precision of a ranked list of correctness flags against `n_gt`
/// ground-truth boxes.
pub fn average_precision(ranked_hits: &[bool], n_gt: usize, method: ApMethod) -> f64 {
    if n_gt == 0 {
        return 0.0;
    }
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(ranked_hits.len());
    for (i, &hit) in ranked_hits.iter().enumerate() {
        tp += usize::from(hit);
        points.push((ratio(tp, n_gt), ratio(tp, i + 1), hit));
    }
    match method {
        ApMethod::Uninterpolated => {
            points.iter().filter(|p| p.2).map(|p| p.1).sum::<f64>() / n_gt as f64
        }
        ApMethod::AllPointInterpolated => {
            let mut env: Vec<f64> = points.iter().map(|p| p.1).collect();
            for i in (0..env.len().saturating_sub(1)).rev() {
                env[i] = env[i].max(env[i + 1]);
            }
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for (p, e) in points.iter().zip(&env) {
                if p.2 {
                    ap += (p.0 - prev_recall) * e;
                    prev_recall = p.0;
                }
            }
            ap
        }
    }
}

/// Dataset accuracy (mean of per-figure accuracies), pooled precision and
/// recall, AP over the confidence-ranked pooled detections, and PR points.
pub fn dataset_metrics<T: Real>(
    figures: &[FigureEval<T>],
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    config.validate()?;
    if figures.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut per_figure = Vec::with_capacity(figures.len());
    // (confidence, figure, det index, hit)
    let mut pooled: Vec<(T, usize, usize, bool)> = Vec::new();
    let (mut n_gt, mut n_det, mut tp, mut both_empty) = (0, 0, 0, 0);
    for (f, fig) in figures.iter().enumerate() {
        let m = match_figure(&fig.detections, &fig.ground_truth, config);
        let correct = m.iter().filter(|x| x.is_some()).count();
        let s = score(correct, fig.ground_truth.len(), fig.detections.len());
        per_figure.push(s.accuracy);
        both_empty += usize::from(s.both_empty);
        n_gt += s.n_gt;
        n_det += s.n_det;
        tp += correct;
        for (d, det) in fig.detections.iter().enumerate() {
            pooled.push((det.confidence, f, d, m[d].is_some()));
        }
    }
    if both_empty > 0 {
        log::warn!("{both_empty} figure(s) with neither ground truth nor detections scored 1.0");
    }
    pooled.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let hits: Vec<bool> = pooled.iter().map(|p| p.3).collect();
    let mut cum = 0usize;
    let pr_points = hits
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            cum += usize::from(h);
            (ratio(cum, n_gt), ratio(cum, i + 1))
        })
        .collect();
    Ok(EvalReport {
        dataset_accuracy: per_figure.iter().sum::<f64>() / per_figure.len() as f64,
        per_figure_accuracy: per_figure,
        precision: ratio(tp, n_det),
        recall: ratio(tp, n_gt),
        average_precision: average_precision(&hits, n_gt, config.ap_method),
        pr_points,
        n_figures: figures.len(),
        n_gt,
        n_det,
        both_empty_count: both_empty,
    })
}

/// Writes `recall,precision` rows, one per pooled detection, with the
/// precision envelope applied.
pub fn export_pr_curve(report: &EvalReport, path: &Path) -> Result<(), EvalError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "recall,precision")?;
    for ((recall, _), p) in report.pr_points.iter().zip(report.interpolated_precision()) {
        writeln!(out, "{recall},{p}")?;
    }
    out.flush()?;
    Ok(())
}
