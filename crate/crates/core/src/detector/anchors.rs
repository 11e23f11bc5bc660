use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::DetectorError;
use crate::geometry::{centered_iou, BBox};
use crate::real::Real;

const MAX_ITERATIONS: usize = 300;

fn nearest(p: (f64, f64), centroids: &[(f64, f64)]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let v = centered_iou(p.0, p.1, c.0, c.1);
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// k-means over box `(width, height)` pairs with distance
/// `1 - IOU(centered boxes)`. Seeding is k-means++ under the same distance.
/// Returns the centroids sorted by area.
pub fn estimate_anchors<T: Real>(
    boxes: &[BBox<T>],
    k: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>, DetectorError> {
    if k == 0 || boxes.len() < k {
        return Err(DetectorError::TooFewBoxes {
            needed: k.max(1),
            got: boxes.len(),
        });
    }
    let points: Vec<(f64, f64)> = boxes
        .iter()
        .map(|b| (b.width().as_f64(), b.height().as_f64()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = vec![points[rng.gen_range(0..points.len())]];
    while centroids.len() < k {
        let dist: Vec<f64> = points
            .iter()
            .map(|&p| {
                let d = 1.0 - nearest(p, &centroids).1;
                d * d
            })
            .collect();
        let total: f64 = dist.iter().sum();
        let pick = if total <= 0.0 {
            rng.gen_range(0..points.len())
        } else {
            let mut r = rng.gen::<f64>() * total;
            dist.iter()
                .position(|&d| {
                    r -= d;
                    r < 0.0
                })
                .unwrap_or(points.len() - 1)
        };
        centroids.push(points[pick]);
    }
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        for (a, &p) in assignment.iter_mut().zip(&points) {
            let (c, _) = nearest(p, &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for (&a, &p) in assignment.iter().zip(&points) {
            sums[a].0 += p.0;
            sums[a].1 += p.1;
            sums[a].2 += 1;
        }
        for (c, s) in centroids.iter_mut().zip(&sums) {
            if s.2 > 0 {
                *c = (s.0 / s.2 as f64, s.1 / s.2 as f64);
            }
        }
    }
    centroids.sort_by(|a, b| (a.0 * a.1).total_cmp(&(b.0 * b.1)));
    Ok(centroids)
}
