use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{figure_rng, SynthesisError};

/// Smallest side a subfigure asset may have.
pub const MIN_ASSET_SIDE: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetKind {
    ImportedCrop,
    Procedural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssetStyle {
    BarChartLike,
    LinePlotLike,
    PhotoNoise,
    TextBlock,
}

impl AssetStyle {
    pub const ALL: [AssetStyle; 4] = [
        AssetStyle::BarChartLike,
        AssetStyle::LinePlotLike,
        AssetStyle::PhotoNoise,
        AssetStyle::TextBlock,
    ];
}

/// One subfigure raster that synthesis can paste into a compound figure.
#[derive(Debug, Clone, PartialEq)]
pub struct SubfigureAsset {
    raster: RgbImage,
    kind: AssetKind,
}

impl SubfigureAsset {
    pub fn new(raster: RgbImage, kind: AssetKind) -> Result<Self, SynthesisError> {
        let (w, h) = raster.dimensions();
        if w < MIN_ASSET_SIDE || h < MIN_ASSET_SIDE {
            return Err(SynthesisError::AssetTooSmall { width: w, height: h });
        }
        Ok(Self { raster, kind })
    }

    pub fn raster(&self) -> &RgbImage {
        &self.raster
    }

    pub fn kind(&self) -> AssetKind {
        self.kind
    }

    pub fn width_px(&self) -> u32 {
        self.raster.width()
    }

    pub fn height_px(&self) -> u32 {
        self.raster.height()
    }
}

/// Side-length bounds for procedurally generated assets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssetBounds {
    pub min_side: u32,
    pub max_side: u32,
}

impl Default for AssetBounds {
    fn default() -> Self {
        Self {
            min_side: 48,
            max_side: 192,
        }
    }
}

fn random_color<R: Rng + ?Sized>(rng: &mut R, lo: u8, hi: u8) -> Rgb<u8> {
    Rgb([
        rng.gen_range(lo..=hi),
        rng.gen_range(lo..=hi),
        rng.gen_range(lo..=hi),
    ])
}

fn light_background<R: Rng + ?Sized>(rng: &mut R) -> Rgb<u8> {
    if rng.gen_bool(0.6) {
        Rgb([255, 255, 255])
    } else {
        random_color(rng, 215, 255)
    }
}

fn fill_rect(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, c: Rgb<u8>) {
    let (w, h) = img.dimensions();
    for y in y0.min(h)..y1.min(h) {
        for x in x0.min(w)..x1.min(w) {
            img.put_pixel(x, y, c);
        }
    }
}

fn draw_line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            img.put_pixel(x as u32, y as u32, c);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn frame(img: &mut RgbImage, c: Rgb<u8>) {
    let (w, h) = img.dimensions();
    fill_rect(img, 0, 0, w, 1, c);
    fill_rect(img, 0, h - 1, w, h, c);
    fill_rect(img, 0, 0, 1, h, c);
    fill_rect(img, w - 1, 0, w, h, c);
}

fn axes(img: &mut RgbImage, margin: u32, c: Rgb<u8>) {
    let (w, h) = img.dimensions();
    fill_rect(img, margin, margin, margin + 1, h - margin, c);
    fill_rect(img, margin, h - margin - 1, w - margin, h - margin, c);
}

fn bar_chart<R: Rng + ?Sized>(img: &mut RgbImage, rng: &mut R) {
    let (w, h) = img.dimensions();
    let margin = (w.min(h) / 8).max(2);
    let ink = random_color(rng, 0, 60);
    axes(img, margin, ink);
    let bars = rng.gen_range(3..=8u32);
    let span = w.saturating_sub(2 * margin + 2).max(bars);
    let slot = (span / bars).max(1);
    let base = h - margin - 1;
    let top = margin + 1;
    let palette: Vec<Rgb<u8>> = (0..3).map(|_| random_color(rng, 20, 220)).collect();
    for i in 0..bars {
        let x0 = margin + 2 + i * slot + slot / 6;
        let x1 = (x0 + (slot * 2 / 3).max(1)).min(w - margin);
        let bar_h = rng.gen_range(0.15..0.95) * (base - top) as f64;
        let y0 = base.saturating_sub(bar_h as u32).max(top);
        fill_rect(img, x0, y0, x1, base, *palette.choose(rng).expect("non-empty"));
    }
}

fn line_plot<R: Rng + ?Sized>(img: &mut RgbImage, rng: &mut R) {
    let (w, h) = img.dimensions();
    let margin = (w.min(h) / 8).max(2);
    let ink = random_color(rng, 0, 60);
    axes(img, margin, ink);
    let (left, right) = (margin as i64 + 2, (w - margin) as i64 - 1);
    let (top, bottom) = (margin as i64 + 1, (h - margin) as i64 - 2);
    for _ in 0..rng.gen_range(1..=3) {
        let color = random_color(rng, 0, 200);
        let steps = rng.gen_range(6..=16);
        let mut y = rng.gen_range(top..=bottom.max(top));
        let mut prev = (left, y);
        for s in 1..=steps {
            let x = left + (right - left) * s / steps;
            let jump = ((bottom - top) / 4).max(1);
            y = (y + rng.gen_range(-jump..=jump)).clamp(top, bottom.max(top));
            draw_line(img, prev, (x, y), color);
            draw_line(img, (prev.0, prev.1 + 1), (x, y + 1), color);
            prev = (x, y);
        }
    }
}

fn photo_noise<R: Rng + ?Sized>(img: &mut RgbImage, rng: &mut R) {
    let (w, h) = img.dimensions();
    let gx = rng.gen_range(3..=7usize);
    let gy = rng.gen_range(3..=7usize);
    let lattice: Vec<[f64; 3]> = (0..(gx + 1) * (gy + 1))
        .map(|_| {
            let c = random_color(rng, 10, 245);
            [c[0] as f64, c[1] as f64, c[2] as f64]
        })
        .collect();
    let noise = rng.gen_range(4.0..24.0);
    for y in 0..h {
        let fy = y as f64 / (h - 1).max(1) as f64 * gy as f64;
        let (iy, ty) = ((fy as usize).min(gy - 1), fy - (fy as usize).min(gy - 1) as f64);
        for x in 0..w {
            let fx = x as f64 / (w - 1).max(1) as f64 * gx as f64;
            let (ix, tx) = ((fx as usize).min(gx - 1), fx - (fx as usize).min(gx - 1) as f64);
            let at = |i: usize, j: usize| lattice[j * (gx + 1) + i];
            let mut px = [0u8; 3];
            for (ch, p) in px.iter_mut().enumerate() {
                let top = at(ix, iy)[ch] * (1.0 - tx) + at(ix + 1, iy)[ch] * tx;
                let bot = at(ix, iy + 1)[ch] * (1.0 - tx) + at(ix + 1, iy + 1)[ch] * tx;
                let v = top * (1.0 - ty) + bot * ty + rng.gen_range(-noise..=noise);
                *p = v.round().clamp(0.0, 255.0) as u8;
            }
            img.put_pixel(x, y, Rgb(px));
        }
    }
}

fn text_block<R: Rng + ?Sized>(img: &mut RgbImage, rng: &mut R) {
    let (w, h) = img.dimensions();
    let ink = random_color(rng, 0, 70);
    let glyph_h = rng.gen_range(2..=4u32);
    let leading = glyph_h + rng.gen_range(2..=4u32);
    let margin = 3u32;
    let mut y = margin;
    while y + glyph_h < h - margin {
        let mut x = margin;
        let line_end = w - margin - rng.gen_range(0..=(w / 4).max(1)).min(w - 2 * margin);
        while x < line_end {
            let word = rng.gen_range(2..=12u32);
            fill_rect(img, x, y, (x + word).min(line_end), y + glyph_h, ink);
            x += word + rng.gen_range(2..=3u32);
        }
        y += leading;
    }
}

/// Draws a procedural stand-in for a real subfigure crop: a framed panel whose
/// interior mimics the given style.
pub fn generate_asset<R: Rng + ?Sized>(
    rng: &mut R,
    style: AssetStyle,
    bounds: AssetBounds,
) -> SubfigureAsset {
    let lo = bounds.min_side.max(MIN_ASSET_SIDE);
    let hi = bounds.max_side.max(lo);
    let w = rng.gen_range(lo..=hi);
    let h = rng.gen_range(lo..=hi);
    let mut img = RgbImage::from_pixel(w, h, light_background(rng));
    match style {
        AssetStyle::BarChartLike => bar_chart(&mut img, rng),
        AssetStyle::LinePlotLike => line_plot(&mut img, rng),
        AssetStyle::PhotoNoise => photo_noise(&mut img, rng),
        AssetStyle::TextBlock => text_block(&mut img, rng),
    }
    let frame_color = random_color(rng, 0, 90);
    frame(&mut img, frame_color);
    SubfigureAsset::new(img, AssetKind::Procedural).expect("bounds respect the minimum side")
}

/// Deterministic pool of `count` procedural assets with random styles.
pub fn procedural_pool(seed: u64, count: usize, bounds: AssetBounds) -> Vec<SubfigureAsset> {
    // stream u64::MAX is reserved for the pool so figure streams never collide
    let mut rng: ChaCha8Rng = figure_rng(seed, u64::MAX);
    (0..count)
        .map(|_| {
            let style = *AssetStyle::ALL.choose(&mut rng).expect("non-empty");
            generate_asset(&mut rng, style, bounds)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn variance(img: &RgbImage) -> f64 {
        let vals: Vec<f64> = img.as_raw().iter().map(|&v| v as f64).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64
    }

    #[test]
    fn every_style_is_non_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for style in AssetStyle::ALL {
            let a = generate_asset(&mut rng, style, AssetBounds::default());
            assert!(variance(a.raster()) > 0.0, "{style:?}");
            assert_eq!(a.kind(), AssetKind::Procedural);
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_asset(
            &mut ChaCha8Rng::seed_from_u64(99),
            AssetStyle::TextBlock,
            AssetBounds::default(),
        );
        let b = generate_asset(
            &mut ChaCha8Rng::seed_from_u64(99),
            AssetStyle::TextBlock,
            AssetBounds::default(),
        );
        assert_eq!(a.raster().as_raw(), b.raster().as_raw());
    }

    #[test]
    fn thousand_assets_respect_min_size() {
        let bounds = AssetBounds {
            min_side: 8,
            max_side: 40,
        };
        let pool = procedural_pool(1, 1000, bounds);
        assert_eq!(pool.len(), 1000);
        for a in &pool {
            assert!(a.width_px() >= MIN_ASSET_SIDE && a.height_px() >= MIN_ASSET_SIDE);
            assert!(a.width_px() <= 40 && a.height_px() <= 40);
        }
    }

    #[test]
    fn has_frame() {
        let a = generate_asset(
            &mut ChaCha8Rng::seed_from_u64(2),
            AssetStyle::PhotoNoise,
            AssetBounds::default(),
        );
        let corner = *a.raster().get_pixel(0, 0);
        let (w, h) = a.raster().dimensions();
        assert_eq!(*a.raster().get_pixel(w - 1, h - 1), corner);
        assert_eq!(*a.raster().get_pixel(w / 2, 0), corner);
    }

    #[test]
    fn rejects_tiny_rasters() {
        assert!(SubfigureAsset::new(RgbImage::new(7, 30), AssetKind::ImportedCrop).is_err());
    }
}
