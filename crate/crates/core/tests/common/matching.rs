// Independent re-implementation of greedy figure matching, written against
// raw coordinates rather than the library's geometry helpers.

use figsep::evaluation::ScoredBox;
use figsep::BBox;
use rand::Rng;

fn overlap_vs_gt(d: &BBox<f64>, g: &BBox<f64>) -> f64 {
    let [dx0, dy0, dx1, dy1] = d.coords();
    let [gx0, gy0, gx1, gy1] = g.coords();
    let iw = (dx1.min(gx1) - dx0.max(gx0)).max(0.0);
    let ih = (dy1.min(gy1) - dy0.max(gy0)).max(0.0);
    (iw * ih) / ((gx1 - gx0) * (gy1 - gy0))
}

/// Walks detections by (confidence desc, index asc); each claims the free gt
/// of largest overlap above `threshold`, lowest index on ties.
pub fn brute_force_match(dets: &[ScoredBox<f64>], gts: &[BBox<f64>], threshold: f64) -> Vec<Option<usize>> {
    let mut remaining: Vec<usize> = (0..dets.len()).collect();
    let mut free = vec![true; gts.len()];
    let mut out = vec![None; dets.len()];
    while !remaining.is_empty() {
        // pick the next detection by scanning, no sorting
        let mut pick = 0;
        for (k, &d) in remaining.iter().enumerate() {
            let p = remaining[pick];
            if dets[d].confidence > dets[p].confidence
                || (dets[d].confidence == dets[p].confidence && d < p)
            {
                pick = k;
            }
        }
        let d = remaining.remove(pick);
        let mut best: Option<(usize, f64)> = None;
        for g in 0..gts.len() {
            let ov = overlap_vs_gt(&dets[d].bbox, &gts[g]);
            if free[g] && ov > threshold && best.map_or(true, |(_, b)| ov > b) {
                best = Some((g, ov));
            }
        }
        if let Some((g, _)) = best {
            free[g] = false;
            out[d] = Some(g);
        }
    }
    out
}

/// Boxes on a 1/16 lattice so every overlap ratio is computed exactly the
/// same way by both implementations. Confidences repeat to exercise ties.
fn lattice_box<R: Rng>(rng: &mut R) -> BBox<f64> {
    let x0 = rng.gen_range(0..15);
    let y0 = rng.gen_range(0..15);
    let x1 = rng.gen_range(x0 + 1..=16);
    let y1 = rng.gen_range(y0 + 1..=16);
    BBox::new(x0 as f64 / 16.0, y0 as f64 / 16.0, x1 as f64 / 16.0, y1 as f64 / 16.0).unwrap()
}

pub fn random_figure<R: Rng>(rng: &mut R) -> (Vec<ScoredBox<f64>>, Vec<BBox<f64>>) {
    let n_gt = rng.gen_range(0..=6);
    let gts: Vec<_> = (0..n_gt).map(|_| lattice_box(rng)).collect();
    let n_det = rng.gen_range(0..=6);
    let dets = (0..n_det)
        .map(|_| {
            // half the detections jitter a gt box, the rest are anywhere
            let bbox = match gts.len() {
                n if n > 0 && rng.gen_bool(0.5) => {
                    let [x0, y0, x1, y1] = gts[rng.gen_range(0..n)].coords();
                    let j = |v: f64, rng: &mut R| (v + rng.gen_range(-1i32..=1) as f64 / 16.0).clamp(0.0, 1.0);
                    let (a, b, c, d) = (j(x0, rng), j(y0, rng), j(x1, rng), j(y1, rng));
                    BBox::new(a.min(c), b.min(d), a.max(c), b.max(d)).unwrap_or_else(|_| lattice_box(rng))
                }
                _ => lattice_box(rng),
            };
            ScoredBox {
                bbox,
                confidence: rng.gen_range(1..=5) as f64 / 5.0,
            }
        })
        .collect();
    (dets, gts)
}
