use image::imageops;
use rand::Rng;

use super::{SynthesisConfig, SyntheticFigure};

/// Random inversion, per-channel affine color change and horizontal flip,
/// each applied with its configured probability. Boxes follow the flip.
pub fn augment<R: Rng + ?Sized>(
    fig: &SyntheticFigure,
    rng: &mut R,
    config: &SynthesisConfig,
) -> SyntheticFigure {
    let invert = rng.gen_bool(config.augment_invert_prob);
    let recolor = rng.gen_bool(config.augment_color_prob);
    let flip = rng.gen_bool(config.augment_hflip_prob);
    let mut raster = fig.raster.clone();
    if invert {
        imageops::invert(&mut raster);
    }
    if recolor {
        let scale: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.7..=1.3));
        let shift: [f64; 3] = std::array::from_fn(|_| rng.gen_range(-20.0..=20.0));
        for px in raster.pixels_mut() {
            for c in 0..3 {
                px[c] = (px[c] as f64 * scale[c] + shift[c]).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    let boxes = if flip {
        raster = imageops::flip_horizontal(&raster);
        fig.boxes.iter().map(|b| b.hflip()).collect()
    } else {
        fig.boxes.clone()
    };
    SyntheticFigure {
        raster,
        boxes,
        provenance: fig.provenance.clone(),
    }
}
