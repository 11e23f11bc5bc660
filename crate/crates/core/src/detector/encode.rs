use super::{Detection, DetectorError};
use crate::geometry::{centered_iou, BBox};
use crate::nn::{mismatch, sigmoid_scalar, Tensor};
use crate::real::Real;

/// Regression target of one responsible `(anchor, cell)` slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetCoords<T> {
    /// Box center offset inside its cell, in `[0, 1)` (post-sigmoid scale).
    pub offset_x: T,
    pub offset_y: T,
    /// `ln(gt_size / anchor_size)`.
    pub log_w: T,
    pub log_h: T,
}

/// Per-slot targets for one image on an `S x S` grid with `B` anchors.
/// Slot index is `(anchor * S + row) * S + col`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTargets<T> {
    pub grid: usize,
    pub num_anchors: usize,
    pub coords: Vec<Option<TargetCoords<T>>>,
    /// Ground-truth index assigned to each responsible slot.
    pub owner: Vec<Option<usize>>,
    /// Boxes that landed on an occupied slot (the larger box is kept).
    pub collisions: usize,
}

impl<T: Real> EncodedTargets<T> {
    pub fn slot(&self, anchor: usize, row: usize, col: usize) -> usize {
        (anchor * self.grid + row) * self.grid + col
    }

    pub fn responsible_count(&self) -> usize {
        self.coords.iter().filter(|c| c.is_some()).count()
    }

    /// Raw `(1, B*5, S, S)` prediction that decodes exactly to the targets:
    /// inverse-sigmoid offsets, log sizes, and the given objectness logits
    /// for responsible and empty slots.
    pub fn to_raw(&self, conf_logit: T, empty_logit: T) -> Tensor<T> {
        let s = self.grid;
        let mut raw = Tensor::zeros(&[1, self.num_anchors * 5, s, s]);
        let data = raw.data_mut();
        let at = |a: usize, ch: usize, cell: usize| (a * 5 + ch) * s * s + cell;
        for a in 0..self.num_anchors {
            for cell in 0..s * s {
                match self.coords[a * s * s + cell] {
                    Some(t) => {
                        let logit = |p: T| (p / (T::one() - p)).ln();
                        data[at(a, 0, cell)] = logit(t.offset_x);
                        data[at(a, 1, cell)] = logit(t.offset_y);
                        data[at(a, 2, cell)] = t.log_w;
                        data[at(a, 3, cell)] = t.log_h;
                        data[at(a, 4, cell)] = conf_logit;
                    }
                    None => data[at(a, 4, cell)] = empty_logit,
                }
            }
        }
        raw
    }
}

fn best_anchor<T: Real>(w: T, h: T, anchors: &[(T, T)]) -> usize {
    let mut best = (0, T::neg_infinity());
    for (i, &(aw, ah)) in anchors.iter().enumerate() {
        let v = centered_iou(w, h, aw, ah);
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Assigns each ground-truth box to the cell holding its center and to the
/// anchor whose shape overlaps it best when both are centered.
pub fn encode_targets<T: Real>(
    gt_boxes: &[BBox<T>],
    anchors: &[(T, T)],
    grid: usize,
) -> Result<EncodedTargets<T>, DetectorError> {
    if anchors.is_empty() || grid == 0 {
        return Err(DetectorError::InvalidConfig(
            "encoding needs anchors and a positive grid".into(),
        ));
    }
    let slots = anchors.len() * grid * grid;
    let mut enc = EncodedTargets {
        grid,
        num_anchors: anchors.len(),
        coords: vec![None; slots],
        owner: vec![None; slots],
        collisions: 0,
    };
    let s = T::lit(grid as f64);
    for (gi, b) in gt_boxes.iter().enumerate() {
        // re-validate: boxes may come from outside this crate's constructors
        let b = BBox::new(b.x_min(), b.y_min(), b.x_max(), b.y_max())?;
        let (cx, cy) = b.center();
        let (fx, fy) = (cx * s, cy * s);
        let col = (fx.floor().as_f64() as usize).min(grid - 1);
        let row = (fy.floor().as_f64() as usize).min(grid - 1);
        let a = best_anchor(b.width(), b.height(), anchors);
        let slot = enc.slot(a, row, col);
        if let Some(prev) = enc.owner[slot] {
            enc.collisions += 1;
            if gt_boxes[prev].area() >= b.area() {
                continue;
            }
        }
        enc.coords[slot] = Some(TargetCoords {
            offset_x: fx - T::lit(col as f64),
            offset_y: fy - T::lit(row as f64),
            log_w: (b.width() / anchors[a].0).ln(),
            log_h: (b.height() / anchors[a].1).ln(),
        });
        enc.owner[slot] = Some(gi);
    }
    Ok(enc)
}

/// Turns one image's raw output, shaped `(B*5, S, S)` or `(1, B*5, S, S)`,
/// into boxes whose objectness is at least `conf_threshold`. Sizes are
/// clamped to `[0, 1]` and boxes clipped to the unit square.
pub fn decode_predictions<T: Real>(
    raw: &Tensor<T>,
    anchors: &[(T, T)],
    conf_threshold: T,
) -> Result<Vec<Detection<T>>, DetectorError> {
    let (c, h, w) = match raw.shape() {
        &[c, h, w] | &[1, c, h, w] => (c, h, w),
        other => return Err(mismatch(format!("raw output shape {other:?}")).into()),
    };
    if h != w || c != anchors.len() * 5 {
        return Err(mismatch(format!(
            "raw output {:?} for {} anchors",
            raw.shape(),
            anchors.len()
        ))
        .into());
    }
    let s = h;
    let sf = T::lit(s as f64);
    let data = raw.data();
    let at = |a: usize, ch: usize, cell: usize| data[(a * 5 + ch) * s * s + cell];
    let mut out = Vec::new();
    for (a, &(aw, ah)) in anchors.iter().enumerate() {
        for cell in 0..s * s {
            let conf = sigmoid_scalar(at(a, 4, cell));
            if conf < conf_threshold {
                continue;
            }
            let (row, col) = (cell / s, cell % s);
            let cx = (sigmoid_scalar(at(a, 0, cell)) + T::lit(col as f64)) / sf;
            let cy = (sigmoid_scalar(at(a, 1, cell)) + T::lit(row as f64)) / sf;
            let bw = (aw * at(a, 2, cell).exp()).min(T::one());
            let bh = (ah * at(a, 3, cell).exp()).min(T::one());
            if let Some(bbox) = BBox::from_center(cx, cy, bw, bh) {
                out.push(Detection {
                    bbox,
                    confidence: conf,
                });
            }
        }
    }
    Ok(out)
}
