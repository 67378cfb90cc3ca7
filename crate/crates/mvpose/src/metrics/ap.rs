use crate::mask::{bbox_iou, BinaryMask};
use crate::{ClassId, ViewId};
use serde::Serialize;
use std::collections::BTreeMap;

/// A scored detection in one view; carries a mask and/or a continuous
/// `[xmin, ymin, xmax, ymax]` box depending on the evaluation kind.
#[derive(Debug, Clone)]
pub struct DetectionRecord {
    pub view_id: ViewId,
    pub class_id: ClassId,
    pub score: f64,
    pub mask: Option<BinaryMask>,
    pub bbox: Option<[f64; 4]>,
}

/// A ground-truth annotation in one view.
#[derive(Debug, Clone)]
pub struct GroundTruthRecord {
    pub view_id: ViewId,
    pub class_id: ClassId,
    pub mask: Option<BinaryMask>,
    pub bbox: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IouKind {
    Mask,
    Bbox,
}

/// Average precision over IoU thresholds 0.5:0.05:0.95.
#[derive(Debug, Clone, Serialize)]
pub struct ApReport {
    /// Mean over classes (classes without ground truth are skipped).
    pub mean_ap: f64,
    pub per_class: BTreeMap<ClassId, f64>,
    /// AP per threshold, averaged over classes; thresholds ascending.
    pub per_threshold: Vec<(f64, f64)>,
}

fn iou_of(
    detection: &DetectionRecord,
    gt: &GroundTruthRecord,
    kind: IouKind,
) -> f64 {
    match kind {
        IouKind::Mask => match (&detection.mask, &gt.mask) {
            (Some(a), Some(b)) => a.iou(b).unwrap_or(0.0),
            _ => 0.0,
        },
        IouKind::Bbox => match (&detection.bbox, &gt.bbox) {
            (Some(a), Some(b)) => bbox_iou(a, b),
            _ => 0.0,
        },
    }
}

/// The ten evaluation thresholds, exactly representable as `k/100`.
pub fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// COCO-style AP: per class and threshold, detections greedily match the
/// highest-IoU unmatched ground truth in their view (score-descending
/// order), the precision-recall curve is interpolated at 101 recall points,
/// and the result is averaged over the ten thresholds and over all classes
/// that have ground truth.
pub fn average_precision(
    detections: &[DetectionRecord],
    ground_truth: &[GroundTruthRecord],
    kind: IouKind,
) -> ApReport {
    let thresholds = iou_thresholds();
    let mut classes: Vec<ClassId> = ground_truth.iter().map(|g| g.class_id).collect();
    classes.sort_unstable();
    classes.dedup();

    let mut per_class = BTreeMap::new();
    let mut per_threshold_sum = vec![0.0f64; thresholds.len()];

    for &class_id in &classes {
        let gt_of_class: Vec<(usize, &GroundTruthRecord)> = ground_truth
            .iter()
            .filter(|g| g.class_id == class_id)
            .enumerate()
            .collect();
        let mut dets: Vec<&DetectionRecord> = detections
            .iter()
            .filter(|d| d.class_id == class_id)
            .collect();
        // Stable sort keeps insertion order on ties, which makes the
        // matching deterministic.
        dets.sort_by(|a, b| b.score.total_cmp(&a.score));

        let mut class_ap = 0.0;
        for (ti, &threshold) in thresholds.iter().enumerate() {
            let mut matched = vec![false; gt_of_class.len()];
            let mut tp = Vec::with_capacity(dets.len());
            for det in &dets {
                let mut best: Option<(usize, f64)> = None;
                for (slot, (_, gt)) in gt_of_class.iter().enumerate() {
                    if matched[slot] || gt.view_id != det.view_id {
                        continue;
                    }
                    let iou = iou_of(det, gt, kind);
                    if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                        best = Some((slot, iou));
                    }
                }
                match best {
                    Some((slot, _)) => {
                        matched[slot] = true;
                        tp.push(true);
                    }
                    None => tp.push(false),
                }
            }
            let ap = interpolated_ap(&tp, gt_of_class.len());
            class_ap += ap;
            per_threshold_sum[ti] += ap;
        }
        per_class.insert(class_id, class_ap / thresholds.len() as f64);
    }

    let mean_ap = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    let per_threshold = thresholds
        .iter()
        .zip(&per_threshold_sum)
        .map(|(&t, &sum)| {
            (
                t,
                if classes.is_empty() {
                    0.0
                } else {
                    sum / classes.len() as f64
                },
            )
        })
        .collect();
    ApReport {
        mean_ap,
        per_class,
        per_threshold,
    }
}

/// 101-point interpolated AP from the per-detection TP flags (already in
/// score-descending order) and the number of ground-truth instances.
fn interpolated_ap(tp_flags: &[bool], gt_count: usize) -> f64 {
    if gt_count == 0 {
        return 0.0;
    }
    let mut precisions = Vec::with_capacity(tp_flags.len());
    let mut recalls = Vec::with_capacity(tp_flags.len());
    let mut tp = 0usize;
    for (i, &is_tp) in tp_flags.iter().enumerate() {
        tp += is_tp as usize;
        precisions.push(tp as f64 / (i + 1) as f64);
        recalls.push(tp as f64 / gt_count as f64);
    }
    // Precision envelope: max precision at recall >= r.
    for i in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[i] = precisions[i].max(precisions[i + 1]);
    }
    let mut sum = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        // First index with recall >= r.
        let p = recalls
            .iter()
            .position(|&rec| rec >= r)
            .map_or(0.0, |idx| precisions[idx]);
        sum += p;
    }
    sum / 101.0
}
