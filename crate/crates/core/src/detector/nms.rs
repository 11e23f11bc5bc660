use std::cmp::Ordering;

use super::Detection;
use crate::geometry::iou;
use crate::real::Real;

fn rank<T: Real>(a: &Detection<T>, b: &Detection<T>) -> Ordering {
    b.confidence
        .partial_cmp(&a.confidence)
        .unwrap_or(Ordering::Equal)
        .then_with(|| {
            a.bbox
                .coords()
                .iter()
                .zip(b.bbox.coords().iter())
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Greedy non-maximum suppression. Detections are visited by descending
/// confidence (ties by box coordinates) and dropped when their IOU with an
/// already kept detection exceeds `iou_threshold`.
pub fn nms<T: Real>(dets: &[Detection<T>], iou_threshold: T) -> Vec<Detection<T>> {
    let mut order: Vec<&Detection<T>> = dets.iter().collect();
    order.sort_by(|a, b| rank(a, b));
    let mut kept: Vec<Detection<T>> = Vec::new();
    for d in order {
        if kept.iter().all(|k| iou(&k.bbox, &d.bbox) <= iou_threshold) {
            kept.push(*d);
        }
    }
    kept
}
