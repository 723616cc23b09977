//! Detection evaluation: per-category average precision at one or more IoU
//! thresholds, plus subgroup means (mAP50 / mAP75 / mAP over the
//! .50:.05:.95 sweep).
//!
//! The protocol is the COCO-style one: within each (image, category) pair,
//! detections are processed in descending score and greedily matched to the
//! unmatched ground truth of highest IoU (ties to the lowest ground-truth
//! index); a detection is a true positive when that IoU reaches the
//! threshold, and each ground truth is matched at most once. AP is the mean
//! of interpolated precision sampled at the 101 recall points
//! {0.00, 0.01, ..., 1.00}, where interpolated precision at recall `r` is
//! the maximum precision at any recall >= `r`.
//!
//! Detections are ordered by a total key (score descending, then image id,
//! category id and box coordinates), so results are independent of input
//! order even in the presence of tied scores. A strictly increasing
//! transform of all scores leaves every reported value unchanged.
//!
//! Categories with zero ground-truth instances are reported with AP 0 when
//! they received detections, and are excluded from subgroup means unless
//! [`EvalOptions::zero_fill_missing`] asks for zero-filling instead.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::coco::{CocoCategory, CocoDetRecord, CocoDocument};
use crate::dataset::CategorySet;
use crate::geometry::{box_iou, BoundingBox, GeometryError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown category id {0} in detections")]
    UnknownCategory(u32),
    #[error("unknown image id {0} in detections")]
    UnknownImage(u64),
    #[error("invalid detection score {0}: must be finite in [0, 1]")]
    InvalidScore(f64),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// IoU thresholds of the COCO sweep, .50:.05:.95.
pub const COCO_THRESHOLDS: [f64; 10] = [0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95];

/// A scored box attributed to an image and category.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: BoundingBox,
    pub score: f64,
}

/// A reference box.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    /// Count zero-ground-truth subgroup categories as AP 0 in means instead
    /// of excluding them.
    pub zero_fill_missing: bool,
    /// Keep only the top-N detections per image (across categories), for
    /// strict COCO parity. `None` means no cap.
    pub max_dets_per_image: Option<usize>,
}

/// Total order on detections: score descending, then image id, category id
/// and box coordinates. Makes every downstream result independent of input
/// ordering.
fn det_cmp(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.image_id.cmp(&b.image_id))
        .then_with(|| a.category_id.cmp(&b.category_id))
        .then_with(|| a.bbox.x.total_cmp(&b.bbox.x))
        .then_with(|| a.bbox.y.total_cmp(&b.bbox.y))
        .then_with(|| a.bbox.w.total_cmp(&b.bbox.w))
        .then_with(|| a.bbox.h.total_cmp(&b.bbox.h))
}

/// Match labels for one (image, category) group.
#[derive(Debug, Clone)]
pub struct MatchResult {
    /// `(score, is_true_positive)` per detection, in descending-score order.
    pub labels: Vec<(f64, bool)>,
    /// Ground truths left unmatched.
    pub missed: usize,
}

/// Greedy matching within one (image, category) group. Inputs may be
/// unsorted; detections are processed in descending score.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> MatchResult {
    let det_refs: Vec<&Detection> = dets.iter().collect();
    let gt_refs: Vec<&GroundTruthBox> = gts.iter().collect();
    let matched = match_group(&det_refs, &gt_refs, iou_threshold);
    let tp_count = matched.iter().filter(|(_, tp)| *tp).count();
    MatchResult {
        labels: matched.into_iter().map(|(d, tp)| (d.score, tp)).collect(),
        missed: gts.len() - tp_count,
    }
}

/// Core greedy matcher over references; output follows descending-score
/// order.
fn match_group<'a>(
    dets: &[&'a Detection],
    gts: &[&GroundTruthBox],
    iou_threshold: f64,
) -> Vec<(&'a Detection, bool)> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| det_cmp(dets[i], dets[j]));

    let mut gt_used = vec![false; gts.len()];
    let mut out = Vec::with_capacity(dets.len());
    for &di in &order {
        let det = dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_used[gi] {
                continue;
            }
            let iou = box_iou(&det.bbox, &gt.bbox);
            // strict '>' keeps the lowest ground-truth index on ties
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        let mut tp = false;
        if let Some((gi, iou)) = best {
            if iou >= iou_threshold {
                gt_used[gi] = true;
                tp = true;
            }
        }
        out.push((det, tp));
    }
    out
}

/// 101-point interpolated AP from pooled match labels.
///
/// `labels` must be sorted by descending score. Returns `None` when there
/// is nothing to evaluate (zero ground truths and zero detections); zero
/// ground truths with detections yield `Some(0.0)`.
pub fn average_precision(labels: &[(f64, bool)], gt_count: usize) -> Option<f64> {
    debug_assert!(labels.windows(2).all(|w| w[0].0 >= w[1].0));
    if gt_count == 0 {
        return if labels.is_empty() { None } else { Some(0.0) };
    }
    if labels.is_empty() {
        return Some(0.0);
    }
    let n = labels.len();
    let mut precision = vec![0.0f64; n];
    let mut recall = vec![0.0f64; n];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (i, (_, is_tp)) in labels.iter().enumerate() {
        if *is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        precision[i] = tp as f64 / (tp + fp) as f64;
        recall[i] = tp as f64 / gt_count as f64;
    }
    // envelope: precision[i] becomes the max precision at recall >= recall[i]
    for i in (0..n - 1).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    let mut idx = 0;
    for r in 0..=100u32 {
        let r_val = f64::from(r) / 100.0;
        while idx < n && recall[idx] < r_val {
            idx += 1;
        }
        if idx < n {
            sum += precision[idx];
        }
    }
    Some(sum / 101.0)
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CategoryResult {
    pub id: u32,
    pub name: String,
    pub gt_count: usize,
    pub det_count: usize,
    /// AP per requested threshold; `None` when the category had neither
    /// ground truths nor detections.
    pub ap: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SubgroupResult {
    pub name: String,
    /// Categories contributing to the means.
    pub categories_in_mean: usize,
    pub map_per_threshold: Vec<Option<f64>>,
    pub map50: Option<f64>,
    pub map75: Option<f64>,
    /// Mean over the .50:.05:.95 sweep; present only when the full sweep
    /// was requested.
    pub map: Option<f64>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    pub categories: Vec<CategoryResult>,
    pub subgroups: Vec<SubgroupResult>,
}

impl EvalReport {
    /// Plain-text rendering: one row per category, then subgroup summary
    /// rows.
    pub fn render_text(&self) -> String {
        enum Column {
            Threshold(usize),
            SweepMean,
        }
        let mut columns: Vec<(String, Column)> = Vec::new();
        if let Some(i) = self.threshold_index(0.5) {
            columns.push(("AP50".into(), Column::Threshold(i)));
        }
        if let Some(i) = self.threshold_index(0.75) {
            columns.push(("AP75".into(), Column::Threshold(i)));
        }
        if self.is_coco_sweep() {
            columns.push(("AP".into(), Column::SweepMean));
        }
        if columns.is_empty() {
            for (i, t) in self.thresholds.iter().enumerate() {
                columns.push((format!("AP@{t:.2}"), Column::Threshold(i)));
            }
        }

        let name_w = self
            .categories
            .iter()
            .map(|c| c.name.len())
            .chain(self.subgroups.iter().map(|s| s.name.len() + 4))
            .chain(std::iter::once("category".len()))
            .max()
            .unwrap_or(8);
        let fmt_cell = |v: Option<f64>| match v {
            Some(v) => format!("{v:>7.3}"),
            None => format!("{:>7}", "-"),
        };
        let mut out = String::new();
        out.push_str(&format!("{:<name_w$} {:>6}", "category", "gt"));
        for (label, _) in &columns {
            out.push_str(&format!(" {label:>7}"));
        }
        out.push('\n');
        for cat in &self.categories {
            out.push_str(&format!("{:<name_w$} {:>6}", cat.name, cat.gt_count));
            for (_, column) in &columns {
                let v = match column {
                    Column::Threshold(i) => cat.ap[*i],
                    Column::SweepMean => self.category_sweep_mean(cat),
                };
                out.push_str(&format!(" {}", fmt_cell(v)));
            }
            out.push('\n');
        }
        for sg in &self.subgroups {
            let label = format!("{} mAP", sg.name);
            out.push_str(&format!(
                "{label:<name_w$} {:>6}",
                format!("n={}", sg.categories_in_mean)
            ));
            for (_, column) in &columns {
                let v = match column {
                    Column::Threshold(i) => sg.map_per_threshold[*i],
                    Column::SweepMean => sg.map,
                };
                out.push_str(&format!(" {}", fmt_cell(v)));
            }
            out.push('\n');
        }
        out
    }

    fn threshold_index(&self, t: f64) -> Option<usize> {
        self.thresholds.iter().position(|x| (x - t).abs() < 1e-9)
    }

    fn is_coco_sweep(&self) -> bool {
        self.thresholds.len() == COCO_THRESHOLDS.len()
            && self
                .thresholds
                .iter()
                .zip(&COCO_THRESHOLDS)
                .all(|(a, b)| (a - b).abs() < 1e-9)
    }

    fn category_sweep_mean(&self, cat: &CategoryResult) -> Option<f64> {
        let vals: Vec<f64> = cat.ap.iter().flatten().copied().collect();
        if !vals.is_empty() && vals.len() == self.thresholds.len() {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        } else {
            None
        }
    }
}

// ---------------------------------------------------------------------------
// Evaluation drivers
// ---------------------------------------------------------------------------

/// Evaluates detections against ground truth over the given category
/// universe. `subgroups` select which categories are reported and averaged;
/// subgroup categories missing from `categories` or without ground truth
/// follow the exclusion/zero-fill rule.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    categories: &[CocoCategory],
    subgroups: &[CategorySet],
    thresholds: &[f64],
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let known_ids: HashSet<u32> = categories.iter().map(|c| c.id).collect();
    for det in dets {
        if !known_ids.contains(&det.category_id) {
            return Err(EvalError::UnknownCategory(det.category_id));
        }
        if !det.score.is_finite() || !(0.0..=1.0).contains(&det.score) {
            return Err(EvalError::InvalidScore(det.score));
        }
    }

    // optional per-image cap, applied across categories
    let dets_capped: Vec<&Detection> = match opts.max_dets_per_image {
        None => dets.iter().collect(),
        Some(cap) => {
            let mut by_image: BTreeMap<u64, Vec<&Detection>> = BTreeMap::new();
            for det in dets {
                by_image.entry(det.image_id).or_default().push(det);
            }
            let mut kept = Vec::with_capacity(dets.len());
            for (_, mut group) in by_image {
                group.sort_by(|a, b| det_cmp(a, b));
                group.truncate(cap);
                kept.extend(group);
            }
            kept
        }
    };

    let mut dets_by_cat: HashMap<u32, Vec<&Detection>> = HashMap::new();
    for det in dets_capped {
        dets_by_cat.entry(det.category_id).or_default().push(det);
    }
    let mut gts_by_cat: HashMap<u32, Vec<&GroundTruthBox>> = HashMap::new();
    for gt in gts {
        gts_by_cat.entry(gt.category_id).or_default().push(gt);
    }

    // report rows: union of subgroup categories, first-seen order,
    // restricted to the known universe
    let name_to_cat: HashMap<&str, &CocoCategory> =
        categories.iter().map(|c| (c.name.as_str(), c)).collect();
    let mut row_names: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for sg in subgroups {
        for name in &sg.categories {
            if seen.insert(name.as_str()) {
                row_names.push(name.as_str());
            }
        }
    }

    let empty_dets: Vec<&Detection> = Vec::new();
    let empty_gts: Vec<&GroundTruthBox> = Vec::new();
    let mut results: HashMap<u32, CategoryResult> = HashMap::new();
    for name in &row_names {
        let Some(cat) = name_to_cat.get(name) else {
            continue;
        };
        let cat_dets = dets_by_cat.get(&cat.id).unwrap_or(&empty_dets);
        let cat_gts = gts_by_cat.get(&cat.id).unwrap_or(&empty_gts);
        results.insert(
            cat.id,
            CategoryResult {
                id: cat.id,
                name: cat.name.clone(),
                gt_count: cat_gts.len(),
                det_count: cat_dets.len(),
                ap: category_ap(cat_dets, cat_gts, thresholds),
            },
        );
    }

    let mut report = EvalReport {
        thresholds: thresholds.to_vec(),
        categories: row_names
            .iter()
            .filter_map(|n| name_to_cat.get(n).and_then(|c| results.get(&c.id)).cloned())
            .collect(),
        subgroups: Vec::new(),
    };

    for sg in subgroups {
        let mut per_threshold: Vec<Vec<f64>> = vec![Vec::new(); thresholds.len()];
        let mut included = 0usize;
        for name in &sg.categories {
            let result = name_to_cat
                .get(name.as_str())
                .and_then(|c| results.get(&c.id));
            match result {
                Some(r) if r.gt_count > 0 => {
                    included += 1;
                    for (ti, ap) in r.ap.iter().enumerate() {
                        per_threshold[ti].push(ap.unwrap_or(0.0));
                    }
                }
                _ if opts.zero_fill_missing => {
                    included += 1;
                    for bucket in per_threshold.iter_mut() {
                        bucket.push(0.0);
                    }
                }
                _ => {}
            }
        }
        let map_per_threshold: Vec<Option<f64>> = per_threshold
            .iter()
            .map(|vals| {
                if vals.is_empty() {
                    None
                } else {
                    Some(vals.iter().sum::<f64>() / vals.len() as f64)
                }
            })
            .collect();
        let pick = |t: f64| {
            thresholds
                .iter()
                .position(|x| (x - t).abs() < 1e-9)
                .and_then(|i| map_per_threshold[i])
        };
        let map = if report.is_coco_sweep() && map_per_threshold.iter().all(Option::is_some) {
            Some(map_per_threshold.iter().flatten().sum::<f64>() / map_per_threshold.len() as f64)
        } else {
            None
        };
        report.subgroups.push(SubgroupResult {
            name: sg.name.clone(),
            categories_in_mean: included,
            map50: pick(0.5),
            map75: pick(0.75),
            map,
            map_per_threshold,
        });
    }
    Ok(report)
}

/// AP per threshold for one category: match per image, pool labels in total
/// order, then interpolate.
fn category_ap(
    dets: &[&Detection],
    gts: &[&GroundTruthBox],
    thresholds: &[f64],
) -> Vec<Option<f64>> {
    let mut images: Vec<u64> = dets
        .iter()
        .map(|d| d.image_id)
        .chain(gts.iter().map(|g| g.image_id))
        .collect();
    images.sort_unstable();
    images.dedup();

    thresholds
        .iter()
        .map(|&thr| {
            let mut pooled: Vec<(&Detection, bool)> = Vec::with_capacity(dets.len());
            for &image in &images {
                let image_dets: Vec<&Detection> = dets
                    .iter()
                    .filter(|d| d.image_id == image)
                    .copied()
                    .collect();
                let image_gts: Vec<&GroundTruthBox> = gts
                    .iter()
                    .filter(|g| g.image_id == image)
                    .copied()
                    .collect();
                pooled.extend(match_group(&image_dets, &image_gts, thr));
            }
            pooled.sort_by(|a, b| det_cmp(a.0, b.0));
            let labels: Vec<(f64, bool)> = pooled.iter().map(|(d, tp)| (d.score, *tp)).collect();
            average_precision(&labels, gts.len())
        })
        .collect()
}

/// Evaluates a COCO results array against a COCO annotation document.
/// Detections referencing unknown categories or images are rejected.
pub fn evaluate_coco(
    gt_doc: &CocoDocument,
    det_records: &[CocoDetRecord],
    subgroups: &[CategorySet],
    thresholds: &[f64],
    opts: &EvalOptions,
) -> Result<EvalReport, EvalError> {
    let image_ids: HashSet<u64> = gt_doc.images.iter().map(|i| i.id).collect();
    let mut dets = Vec::with_capacity(det_records.len());
    for rec in det_records {
        if !image_ids.contains(&rec.image_id) {
            return Err(EvalError::UnknownImage(rec.image_id));
        }
        dets.push(Detection {
            image_id: rec.image_id,
            category_id: rec.category_id,
            bbox: BoundingBox::new(rec.bbox[0], rec.bbox[1], rec.bbox[2], rec.bbox[3])?,
            score: rec.score,
        });
    }
    let mut gts = Vec::with_capacity(gt_doc.annotations.len());
    for ann in &gt_doc.annotations {
        gts.push(GroundTruthBox {
            image_id: ann.image_id,
            category_id: ann.category_id,
            bbox: BoundingBox::new(ann.bbox[0], ann.bbox[1], ann.bbox[2], ann.bbox[3])?,
        });
    }
    evaluate(&dets, &gts, &gt_doc.categories, subgroups, thresholds, opts)
}

/// Subgroup covering every category of the document, named `all`.
pub fn all_categories_subgroup(doc_categories: &[CocoCategory]) -> CategorySet {
    CategorySet {
        name: "all".into(),
        categories: doc_categories.iter().map(|c| c.name.clone()).collect(),
    }
}
