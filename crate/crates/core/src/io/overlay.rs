use std::path::Path;

use image::{Rgb, RgbImage};

use super::{save_png, IoError, LabeledBox};
use crate::geometry::BBox;

pub const DET_COLOR: Rgb<u8> = Rgb([255, 0, 0]);
pub const GT_COLOR: Rgb<u8> = Rgb([255, 255, 0]);
const LINE_PX: u32 = 3;

// 3x5 glyphs, one row per u8, high bit first.
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];
const DOT: [u8; 5] = [0, 0, 0, 0, 0b010];

/// Inclusive pixel rectangle covered by a normalized box.
fn pixel_rect(b: &BBox<f64>, w: u32, h: u32) -> (u32, u32, u32, u32) {
    let lo = |v: f64, n: u32| ((v * n as f64).floor().max(0.0) as u32).min(n - 1);
    let hi = |v: f64, n: u32| ((v * n as f64).ceil() as u32).clamp(1, n) - 1;
    let [x0, y0, x1, y1] = b.coords();
    let (px0, py0) = (lo(x0, w), lo(y0, h));
    (px0, py0, hi(x1, w).max(px0), hi(y1, h).max(py0))
}

fn stroke(img: &mut RgbImage, rect: (u32, u32, u32, u32), color: Rgb<u8>) {
    let (x0, y0, x1, y1) = rect;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let inner = x >= x0 + LINE_PX
                && x + LINE_PX <= x1
                && y >= y0 + LINE_PX
                && y + LINE_PX <= y1;
            if !inner {
                img.put_pixel(x, y, color);
            }
        }
    }
}

fn draw_text(img: &mut RgbImage, x: u32, y: u32, text: &str, color: Rgb<u8>) {
    let mut cx = x;
    for ch in text.chars() {
        let glyph = match ch {
            '0'..='9' => DIGITS[ch as usize - '0' as usize],
            '.' => DOT,
            _ => continue,
        };
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    let (px, py) = (cx + col, y + row as u32);
                    if px < img.width() && py < img.height() {
                        img.put_pixel(px, py, color);
                    }
                }
            }
        }
        cx += 4;
    }
}

/// Copy of `image` with ground truth stroked in yellow and detections in
/// red on top, 3-px lines drawn inside each box. Scores are printed in the
/// top-left corner of their box.
pub fn render_overlay(image: &RgbImage, dets: &[LabeledBox], gts: &[BBox<f64>]) -> RgbImage {
    let mut out = image.clone();
    let (w, h) = out.dimensions();
    if w == 0 || h == 0 {
        return out;
    }
    for g in gts {
        stroke(&mut out, pixel_rect(g, w, h), GT_COLOR);
    }
    for d in dets {
        let rect = pixel_rect(&d.bbox, w, h);
        stroke(&mut out, rect, DET_COLOR);
        if let Some(c) = d.confidence {
            let text = format!("{c:.2}");
            draw_text(&mut out, rect.0 + LINE_PX + 1, rect.1 + LINE_PX + 1, &text, DET_COLOR);
        }
    }
    out
}

pub fn save_overlay(
    image: &RgbImage,
    dets: &[LabeledBox],
    gts: &[BBox<f64>],
    out_path: &Path,
) -> Result<(), IoError> {
    save_png(&render_overlay(image, dets, gts), out_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noisy(w: u32, h: u32) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| Rgb([(x * 7 % 256) as u8, (y * 13 % 256) as u8, 40]))
    }

    #[test]
    fn nothing_to_draw_is_identity() {
        let img = noisy(37, 21);
        assert_eq!(render_overlay(&img, &[], &[]), img);
    }

    #[test]
    fn full_frame_detection_has_red_border() {
        let img = noisy(40, 30);
        let full = LabeledBox::from(BBox::new(0.0, 0.0, 1.0, 1.0).unwrap());
        let out = render_overlay(&img, &[full], &[]);
        assert_eq!(out.dimensions(), img.dimensions());
        for x in 0..40 {
            for y in [0, 1, 2, 27, 28, 29] {
                assert_eq!(*out.get_pixel(x, y), DET_COLOR);
            }
        }
        for y in 0..30 {
            assert_eq!(*out.get_pixel(0, y), DET_COLOR);
            assert_eq!(*out.get_pixel(39, y), DET_COLOR);
        }
        assert_eq!(out.get_pixel(20, 15), img.get_pixel(20, 15));
    }

    #[test]
    fn detections_drawn_over_ground_truth() {
        let img = noisy(50, 50);
        let b = BBox::new(0.2, 0.2, 0.8, 0.8).unwrap();
        let out = render_overlay(
            &img,
            &[LabeledBox {
                bbox: b,
                confidence: Some(0.5),
            }],
            &[b, BBox::new(0.0, 0.0, 0.1, 0.1).unwrap()],
        );
        assert_eq!(*out.get_pixel(10, 10), DET_COLOR);
        assert_eq!(*out.get_pixel(0, 0), GT_COLOR);
        // "0.50" printed inside the box
        assert!((14..28).any(|x| (14..20).any(|y| *out.get_pixel(x, y) == DET_COLOR)));
    }

    #[test]
    fn dimensions_preserved_for_tiny_boxes() {
        let img = noisy(9, 5);
        let tiny = BBox::new(0.95, 0.95, 1.0, 1.0).unwrap();
        let out = render_overlay(&img, &[LabeledBox::from(tiny)], &[tiny]);
        assert_eq!(out.dimensions(), (9, 5));
        assert_eq!(*out.get_pixel(8, 4), DET_COLOR);
    }
}
