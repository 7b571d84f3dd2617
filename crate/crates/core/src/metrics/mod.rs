//! Evaluation metrics: plausibility (sparsity, energy-based pointing game),
//! faithfulness (deletion, insertion, over-all), ground-truth matching,
//! map comparison and object-size grouping.

mod faithfulness;
mod kmeans;

pub use faithfulness::{
    blurred_baseline, curve_auc, deletion_curve, faithfulness_curve, insertion_curve, pixel_order,
    Curve, CurvePoint, DEFAULT_STEPS,
};
pub use kmeans::{kmeans_1d, kmeans_1d_group, KMeans1d, SizeGroup};

use serde::{Deserialize, Serialize};

use crate::bbox::{iou, BBox};
use crate::detection::DetectionVector;
use crate::error::{Error, Result};
use crate::map::{stable_sum, DiffMap, SaliencyMap};

/// Minimum IoU for a detection to count as matching a ground-truth box.
pub const MATCH_IOU: f64 = 0.5;

/// Percentage of saliency mass whose pixel centers fall inside `gt`.
pub fn ebpg(m: &SaliencyMap, gt: &BBox) -> f64 {
    let total = m.sum();
    if total <= 0.0 {
        return 0.0;
    }
    let (xs, ys) = gt.pixel_ranges(m.width(), m.height());
    let inside = stable_sum(ys.flat_map(|y| xs.clone().map(move |x| m.get(x, y))));
    (100.0 * inside / total).clamp(0.0, 100.0)
}

/// Concentration ratio `max / mean`.
pub fn sparsity(m: &SaliencyMap) -> Result<f64> {
    let mean = m.mean();
    if mean <= 0.0 {
        return Err(Error::UndefinedMetric("sparsity of an all-zero map".into()));
    }
    Ok(m.max() / mean)
}

/// Insertion AUC minus deletion AUC.
pub fn overall(insertion_auc: f64, deletion_auc: f64) -> f64 {
    insertion_auc - deletion_auc
}

/// Ground-truth object: box plus class index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub class_id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_name: Option<String>,
}

/// Greedy per-class matching by descending IoU; each detection and each
/// ground truth is used at most once and pairs below [`MATCH_IOU`] are
/// dropped. A detection's class is its highest-scoring class. Returns
/// `(gt_index, det_index)` sorted by ground-truth index.
pub fn match_detections_to_gt(dets: &[DetectionVector], gts: &[GroundTruth]) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (g, gt) in gts.iter().enumerate() {
        for (d, det) in dets.iter().enumerate() {
            if det.top_class() != gt.class_id {
                continue;
            }
            let v = iou(&gt.bbox, &det.bbox);
            if v >= MATCH_IOU {
                candidates.push((v, g, d));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_used = vec![false; gts.len()];
    let mut det_used = vec![false; dets.len()];
    let mut pairs = Vec::new();
    for (_, g, d) in candidates {
        if !gt_used[g] && !det_used[d] {
            gt_used[g] = true;
            det_used[d] = true;
            pairs.push((g, d));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Pearson correlation of pixel values.
pub fn compare_maps(a: &SaliencyMap, b: &SaliencyMap) -> Result<f64> {
    a.ensure_same_dims(b)?;
    if a.is_constant() || b.is_constant() {
        return Err(Error::UndefinedMetric("correlation with a constant map".into()));
    }
    let (ma, mb) = (a.mean(), b.mean());
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.values().iter().zip(b.values()) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Signed difference `a - b`.
pub fn error_diff(a: &SaliencyMap, b: &SaliencyMap) -> Result<DiffMap> {
    a.ensure_same_dims(b)?;
    Ok(DiffMap {
        width: a.width(),
        height: a.height(),
        values: a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect(),
    })
}

/// Per-object evaluation row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub object_id: String,
    pub method: String,
    pub size_group: SizeGroup,
    pub sparsity: f64,
    pub ebpg: f64,
    pub deletion_auc: f64,
    pub insertion_auc: f64,
    pub overall: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::minmax_normalize;

    fn map(w: usize, h: usize, v: &[f64]) -> SaliencyMap {
        SaliencyMap::new(w, h, v.to_vec()).unwrap()
    }

    fn bb(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn ebpg_examples() {
        let mut v = vec![0.0; 100];
        v[11] = 1.0;
        v[12] = 0.5;
        assert_eq!(ebpg(&map(10, 10, &v), &bb(0., 0., 5., 5.)), 100.0);
        assert_eq!(ebpg(&map(10, 10, &[0.3; 100]), &bb(0., 0., 5., 5.)), 25.0);
        assert_eq!(ebpg(&map(2, 2, &[1., 0., 0., 1.]), &bb(0., 0., 1., 2.)), 50.0);
        assert_eq!(ebpg(&map(2, 2, &[0.; 4]), &bb(0., 0., 1., 2.)), 0.0);
    }

    #[test]
    fn ebpg_scale_invariant() {
        let a = map(3, 2, &[0.1, 0.5, 0.9, 0.2, 0.0, 0.4]);
        let b = map(3, 2, &a.values().iter().map(|v| v * 7.5).collect::<Vec<_>>());
        let g = bb(0., 0., 2., 1.);
        assert!((ebpg(&a, &g) - ebpg(&b, &g)).abs() < 1e-9);
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity(&map(2, 2, &[0.6; 4])).unwrap(), 1.0);
        let mut v = vec![0.0; 100];
        v[42] = 1.0;
        assert!((sparsity(&map(10, 10, &v)).unwrap() - 100.0).abs() < 1e-9);
        assert!((sparsity(&map(2, 2, &[1., 0.5, 0.25, 0.25])).unwrap() - 2.0).abs() < 1e-12);
        assert!(matches!(sparsity(&map(2, 1, &[0., 0.])), Err(Error::UndefinedMetric(_))));
        let n = minmax_normalize(&map(2, 2, &[3., 1., 2., 1.]));
        assert!((sparsity(&n).unwrap() - 1.0 / n.mean()).abs() < 1e-12);
    }

    #[test]
    fn overall_examples() {
        assert!((overall(0.9, 0.1) - 0.8).abs() < 1e-12);
        assert_eq!(overall(0.37, 0.37), 0.0);
        assert!((overall(0.9085, 0.0271) - 0.8814).abs() < 1e-9);
        assert_eq!(overall(0.2, 0.7), -overall(0.7, 0.2));
    }

    fn det(b: BBox, scores: &[f64]) -> DetectionVector {
        DetectionVector::new(b, 1.0, scores.to_vec()).unwrap()
    }

    fn gt(b: BBox, class_id: usize) -> GroundTruth {
        GroundTruth { bbox: b, class_id, class_name: None }
    }

    #[test]
    fn matching_examples() {
        let g = bb(0., 0., 10., 10.);
        assert_eq!(match_detections_to_gt(&[det(g, &[0.9, 0.1])], &[gt(g, 0)]), vec![(0, 0)]);
        assert!(match_detections_to_gt(&[det(g, &[0.1, 0.9])], &[gt(g, 0)]).is_empty());

        // IoU 0.9 and 0.6 against one ground truth
        let d09 = det(bb(0., 0., 10., 9.), &[1.0]);
        let d06 = det(bb(0., 0., 10., 6.), &[1.0]);
        assert_eq!(match_detections_to_gt(&[d06.clone(), d09.clone()], &[gt(g, 0)]), vec![(0, 1)]);
        // below threshold
        let d04 = det(bb(0., 0., 10., 4.), &[1.0]);
        assert!(match_detections_to_gt(&[d04], &[gt(g, 0)]).is_empty());
        // two gts, two dets: each used once
        let g2 = bb(0., 0., 10., 8.);
        let pairs = match_detections_to_gt(&[d06, d09], &[gt(g, 0), gt(g2, 0)]);
        assert_eq!(pairs.len(), 2);
    }

    #[test]
    fn compare_maps_examples() {
        let a = map(2, 2, &[0., 0.3, 1., 0.6]);
        assert!((compare_maps(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let inv = map(2, 2, &a.values().iter().map(|v| 1.0 - v).collect::<Vec<_>>());
        assert!((compare_maps(&a, &inv).unwrap() + 1.0).abs() < 1e-12);
        assert!(compare_maps(&a, &map(2, 2, &[0.5; 4])).is_err());
        assert!(compare_maps(&a, &map(4, 1, &[0., 1., 0., 1.])).is_err());
    }

    #[test]
    fn error_diff_examples() {
        let a = map(2, 1, &[1., 0.]);
        let b = map(2, 1, &[0., 1.]);
        assert_eq!(error_diff(&a, &a).unwrap().values, vec![0.0, 0.0]);
        assert_eq!(error_diff(&a, &b).unwrap().values, vec![1.0, -1.0]);
        assert!(error_diff(&a, &map(1, 2, &[0., 1.])).is_err());
    }
}
