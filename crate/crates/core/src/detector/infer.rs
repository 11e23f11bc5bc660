use std::time::Instant;

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};

use super::{decode_predictions, nms, Detection, DetectorError, DetectorModel};
use crate::geometry::BBox;
use crate::nn::Tensor;
use crate::real::Real;

const PAD_GRAY: Rgb<u8> = Rgb([128, 128, 128]);

/// Aspect-preserving fit of a `src_w x src_h` image into a `side x side`
/// square, centered, with gray padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Letterbox {
    pub side: u32,
    pub scaled_w: u32,
    pub scaled_h: u32,
    pub offset_x: u32,
    pub offset_y: u32,
}

impl Letterbox {
    pub fn new(src_w: u32, src_h: u32, side: u32) -> Self {
        let scale = side as f64 / src_w.max(src_h) as f64;
        let scaled_w = ((src_w as f64 * scale).round() as u32).clamp(1, side);
        let scaled_h = ((src_h as f64 * scale).round() as u32).clamp(1, side);
        Self {
            side,
            scaled_w,
            scaled_h,
            offset_x: (side - scaled_w) / 2,
            offset_y: (side - scaled_h) / 2,
        }
    }

    pub fn apply(&self, img: &RgbImage) -> RgbImage {
        let mut out = RgbImage::from_pixel(self.side, self.side, PAD_GRAY);
        let scaled = imageops::resize(img, self.scaled_w, self.scaled_h, FilterType::Triangle);
        imageops::replace(&mut out, &scaled, self.offset_x as i64, self.offset_y as i64);
        out
    }

    fn axes<T: Real>(&self) -> (T, T, T, T, T) {
        let l = |v: u32| T::lit(v as f64);
        (
            l(self.side),
            l(self.scaled_w),
            l(self.scaled_h),
            l(self.offset_x),
            l(self.offset_y),
        )
    }

    /// Source-image normalized box to letterbox-normalized box.
    pub fn forward_box<T: Real>(&self, b: &BBox<T>) -> Option<BBox<T>> {
        let (side, sw, sh, ox, oy) = self.axes::<T>();
        let fx = |x: T| (x * sw + ox) / side;
        let fy = |y: T| (y * sh + oy) / side;
        BBox::clipped(fx(b.x_min()), fy(b.y_min()), fx(b.x_max()), fy(b.y_max()))
    }

    /// Letterbox-normalized box back to the source image; parts falling on
    /// padding are clipped away.
    pub fn inverse_box<T: Real>(&self, b: &BBox<T>) -> Option<BBox<T>> {
        let (side, sw, sh, ox, oy) = self.axes::<T>();
        let fx = |x: T| (x * side - ox) / sw;
        let fy = |y: T| (y * side - oy) / sh;
        BBox::clipped(fx(b.x_min()), fy(b.y_min()), fx(b.x_max()), fy(b.y_max()))
    }
}

/// RGB bytes to a `(1, 3, H, W)` tensor scaled to `[-0.5, 0.5]`.
pub fn image_to_tensor<T: Real>(img: &RgbImage) -> Tensor<T> {
    let (w, h) = img.dimensions();
    let plane = (w * h) as usize;
    let mut data = vec![T::zero(); 3 * plane];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = T::lit(px[c] as f64 / 255.0 - 0.5);
        }
    }
    Tensor::from_vec(&[1, 3, h as usize, w as usize], data).expect("non-empty image")
}

/// Letterbox, forward, decode, NMS, then map boxes back to the source image.
/// Returns the detections and the elapsed wall-clock milliseconds.
pub fn detect<T: Real>(
    model: &DetectorModel<T>,
    image: &RgbImage,
) -> Result<(Vec<Detection<T>>, f64), DetectorError> {
    let start = Instant::now();
    let cfg = model.config();
    let lb = Letterbox::new(image.width(), image.height(), cfg.input_side_px as u32);
    let input = image_to_tensor::<T>(&lb.apply(image));
    let raw = model.forward(&input)?;
    let anchors = cfg.anchors_as::<T>();
    let dets = decode_predictions(&raw, &anchors, T::lit(cfg.conf_threshold))?;
    let kept = nms(&dets, T::lit(cfg.nms_iou_threshold));
    let out = kept
        .into_iter()
        .filter_map(|d| {
            lb.inverse_box(&d.bbox).map(|bbox| Detection {
                bbox,
                confidence: d.confidence,
            })
        })
        .collect();
    Ok((out, start.elapsed().as_secs_f64() * 1e3))
}
