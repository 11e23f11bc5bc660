use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use rand::Rng;

use super::{
    Provenance, SubfigureAsset, SynthesisConfig, SynthesisError, SynthesisMode, SyntheticFigure,
};
use crate::geometry::{iou, BBox};

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);

fn check_mode(config: &SynthesisConfig, want: SynthesisMode) -> Result<(), SynthesisError> {
    config.validate()?;
    if config.mode != want {
        return Err(SynthesisError::WrongMode(config.mode));
    }
    Ok(())
}

fn resized(asset: &SubfigureAsset, w: u32, h: u32) -> RgbImage {
    if asset.raster().dimensions() == (w, h) {
        asset.raster().clone()
    } else {
        imageops::resize(asset.raster(), w, h, FilterType::Triangle)
    }
}

/// Pastes randomly chosen, randomly scaled subfigures at random empty spots
/// until no empty spot turns up within the configured number of attempts.
pub fn synthesize_random<R: Rng + ?Sized>(
    config: &SynthesisConfig,
    pool: &[SubfigureAsset],
    rng: &mut R,
) -> Result<SyntheticFigure, SynthesisError> {
    check_mode(config, SynthesisMode::RandomPaste)?;
    if pool.is_empty() {
        return Err(SynthesisError::EmptyAssetPool);
    }
    let (cw, ch) = config.draw_canvas(rng);
    let mut canvas = RgbImage::from_pixel(cw, ch, WHITE);
    let mut boxes: Vec<BBox<f64>> = Vec::new();
    let (s0, s1) = config.paste_scale_range;
    while boxes.len() < config.max_subfigures {
        let asset = &pool[rng.gen_range(0..pool.len())];
        let scale = if s0 < s1 { rng.gen_range(s0..=s1) } else { s0 };
        let mut w = asset.width_px() as f64 * scale;
        let mut h = asset.height_px() as f64 * scale;
        let fit = (cw as f64 / w).min(ch as f64 / h).min(1.0);
        w *= fit;
        h *= fit;
        let w = (w.round() as u32).clamp(1, cw);
        let h = (h.round() as u32).clamp(1, ch);
        let mut placed = None;
        for _ in 0..config.placement_attempts {
            let x = rng.gen_range(0..=cw - w);
            let y = rng.gen_range(0..=ch - h);
            let cand = BBox::from_pixels(
                x as f64,
                y as f64,
                (x + w) as f64,
                (y + h) as f64,
                cw,
                ch,
            )
            .expect("placement inside canvas");
            if boxes
                .iter()
                .all(|b| iou(b, &cand) < config.empty_spot_iou_max)
            {
                placed = Some((x, y, cand));
                break;
            }
        }
        let Some((x, y, cand)) = placed else {
            break;
        };
        imageops::replace(&mut canvas, &resized(asset, w, h), x as i64, y as i64);
        boxes.push(cand);
    }
    Ok(SyntheticFigure {
        raster: canvas,
        boxes,
        provenance: Provenance {
            mode: SynthesisMode::RandomPaste,
            seed: config.seed,
            index: 0,
            row_counts: Vec::new(),
            transposed: false,
        },
    })
}

/// Splits `total` px into `parts` integer lengths, each at least `min_len`,
/// with the remainder distributed by uniform spacings.
fn random_partition<R: Rng + ?Sized>(
    rng: &mut R,
    total: u32,
    parts: usize,
    min_len: u32,
) -> Vec<u32> {
    let free = total - min_len * parts as u32;
    let mut cuts: Vec<f64> = (0..parts - 1).map(|_| rng.gen::<f64>()).collect();
    cuts.sort_by(f64::total_cmp);
    let mut bounds = vec![0u32];
    for (i, c) in cuts.iter().enumerate() {
        bounds.push((i as u32 + 1) * min_len + (c * free as f64).round() as u32);
    }
    bounds.push(total);
    bounds.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Integer column boundaries `0 = b0 < b1 < ... < bn = total` proportional to
/// `weights`, every span at least one pixel.
fn proportional_bounds(weights: &[f64], total: u32) -> Vec<u32> {
    let n = weights.len() as u32;
    let sum: f64 = weights.iter().sum();
    let mut bounds = Vec::with_capacity(weights.len() + 1);
    bounds.push(0u32);
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        let i = i as u32 + 1;
        let b = if i == n {
            total
        } else {
            ((acc / sum) * total as f64).round() as u32
        };
        let lo = bounds[bounds.len() - 1] + 1;
        let hi = total - (n - i);
        bounds.push(b.clamp(lo, hi));
    }
    bounds
}

/// Rows of gap-free subfigures: a random number of rows with random heights,
/// each row holding a random number of subfigures resized to the row height
/// and stretched together to span the full width.
pub fn synthesize_grid<R: Rng + ?Sized>(
    config: &SynthesisConfig,
    pool: &[SubfigureAsset],
    rng: &mut R,
) -> Result<SyntheticFigure, SynthesisError> {
    check_mode(config, SynthesisMode::Grid)?;
    if pool.is_empty() {
        return Err(SynthesisError::EmptyAssetPool);
    }
    let (cw, ch) = config.draw_canvas(rng);
    let rows = rng.gen_range(config.rows_range.0..=config.rows_range.1);
    let min_h = config.min_row_height_px.min(ch / rows as u32).max(1);
    let heights = random_partition(rng, ch, rows, min_h);
    let mut canvas = RgbImage::from_pixel(cw, ch, WHITE);
    let mut boxes = Vec::new();
    let mut row_counts = Vec::with_capacity(rows);
    let mut y0 = 0u32;
    for &row_h in &heights {
        let n = rng.gen_range(config.per_row_count_range.0..=config.per_row_count_range.1);
        let picks: Vec<&SubfigureAsset> =
            (0..n).map(|_| &pool[rng.gen_range(0..pool.len())]).collect();
        let natural: Vec<f64> = picks
            .iter()
            .map(|a| a.width_px() as f64 * row_h as f64 / a.height_px() as f64)
            .collect();
        let bounds = proportional_bounds(&natural, cw);
        for (asset, span) in picks.iter().zip(bounds.windows(2)) {
            let (x0, x1) = (span[0], span[1]);
            imageops::replace(
                &mut canvas,
                &resized(asset, x1 - x0, row_h),
                x0 as i64,
                y0 as i64,
            );
            boxes.push(
                BBox::from_pixels(x0 as f64, y0 as f64, x1 as f64, (y0 + row_h) as f64, cw, ch)
                    .expect("cell inside canvas"),
            );
        }
        row_counts.push(n);
        y0 += row_h;
    }
    Ok(SyntheticFigure {
        raster: canvas,
        boxes,
        provenance: Provenance {
            mode: SynthesisMode::Grid,
            seed: config.seed,
            index: 0,
            row_counts,
            transposed: false,
        },
    })
}

/// Swaps the x and y axes of a grid figure, turning rows into columns.
pub fn transpose_layout(fig: &SyntheticFigure) -> Result<SyntheticFigure, SynthesisError> {
    if fig.provenance.mode != SynthesisMode::Grid {
        return Err(SynthesisError::NotGridFigure);
    }
    let (w, h) = fig.raster.dimensions();
    let mut out = RgbImage::new(h, w);
    for (x, y, p) in fig.raster.enumerate_pixels() {
        out.put_pixel(y, x, *p);
    }
    Ok(SyntheticFigure {
        raster: out,
        boxes: fig.boxes.iter().map(BBox::transpose).collect(),
        provenance: Provenance {
            transposed: !fig.provenance.transposed,
            ..fig.provenance.clone()
        },
    })
}
