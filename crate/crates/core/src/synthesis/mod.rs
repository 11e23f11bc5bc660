//! Labeled compound-figure synthesis: random pasting with an IOU-bounded
//! empty-spot search, and gap-free row grids that can be transposed, followed
//! by inversion, color and flip augmentation.

mod assets;
mod augment;
mod layout;

pub use assets::{
    generate_asset, procedural_pool, AssetBounds, AssetKind, AssetStyle, SubfigureAsset,
    MIN_ASSET_SIDE,
};
pub use augment::augment;
pub use layout::{synthesize_grid, synthesize_random, transpose_layout};

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("asset pool is empty")]
    EmptyAssetPool,
    #[error("figure was not produced by grid synthesis")]
    NotGridFigure,
    #[error("asset is {width}x{height}, below the {MIN_ASSET_SIDE} px minimum side")]
    AssetTooSmall { width: u32, height: u32 },
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error("config mode is {0:?}")]
    WrongMode(SynthesisMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisMode {
    RandomPaste,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisConfig {
    pub mode: SynthesisMode,
    /// Canvas width / height, drawn uniformly from this range.
    pub aspect_ratio_range: (f64, f64),
    /// A random-paste spot is empty when its IOU with every placed box is below this.
    pub empty_spot_iou_max: f64,
    pub rows_range: (usize, usize),
    pub per_row_count_range: (usize, usize),
    pub canvas_long_side_px: u32,
    pub min_row_height_px: u32,
    /// Candidate positions tried per subfigure before random pasting stops.
    pub placement_attempts: usize,
    /// Random-paste scale factor relative to the asset's own size.
    pub paste_scale_range: (f64, f64),
    pub max_subfigures: usize,
    /// Probability that a grid figure is emitted transposed.
    pub transpose_prob: f64,
    pub augment_invert_prob: f64,
    pub augment_color_prob: f64,
    pub augment_hflip_prob: f64,
    pub seed: u64,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            mode: SynthesisMode::Grid,
            aspect_ratio_range: (0.5, 2.0),
            empty_spot_iou_max: 0.05,
            rows_range: (3, 7),
            per_row_count_range: (1, 7),
            canvas_long_side_px: 512,
            min_row_height_px: 24,
            placement_attempts: 200,
            paste_scale_range: (0.3, 1.5),
            max_subfigures: 100,
            transpose_prob: 0.5,
            augment_invert_prob: 0.2,
            augment_color_prob: 0.3,
            augment_hflip_prob: 0.5,
            seed: 0,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<(), SynthesisError> {
        let bad = |m: &str| Err(SynthesisError::InvalidConfig(m.to_string()));
        let (a0, a1) = self.aspect_ratio_range;
        if !(a0 > 0.0 && a0 <= a1 && a1.is_finite()) {
            return bad("aspect_ratio_range must be a non-empty positive range");
        }
        if !(self.empty_spot_iou_max > 0.0 && self.empty_spot_iou_max <= 1.0) {
            return bad("empty_spot_iou_max must be in (0, 1]");
        }
        if self.rows_range.0 == 0 || self.rows_range.0 > self.rows_range.1 {
            return bad("rows_range must be a non-empty range of positive counts");
        }
        if self.per_row_count_range.0 == 0 || self.per_row_count_range.0 > self.per_row_count_range.1
        {
            return bad("per_row_count_range must be a non-empty range of positive counts");
        }
        let (s0, s1) = self.paste_scale_range;
        if !(s0 > 0.0 && s0 <= s1 && s1.is_finite()) {
            return bad("paste_scale_range must be a non-empty positive range");
        }
        let short = (self.canvas_long_side_px as f64 * a0.min(1.0 / a1)).floor() as usize;
        if self.canvas_long_side_px < 16 || short < self.rows_range.1.max(self.per_row_count_range.1) {
            return bad("canvas too small for the configured rows and subfigures");
        }
        if self.placement_attempts == 0 || self.max_subfigures == 0 {
            return bad("placement_attempts and max_subfigures must be positive");
        }
        for p in [
            self.transpose_prob,
            self.augment_invert_prob,
            self.augment_color_prob,
            self.augment_hflip_prob,
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad("probabilities must lie in [0, 1]");
            }
        }
        Ok(())
    }

    /// Canvas `(width, height)` for an aspect ratio drawn from the configured range.
    pub(crate) fn draw_canvas<R: Rng + ?Sized>(&self, rng: &mut R) -> (u32, u32) {
        let (a0, a1) = self.aspect_ratio_range;
        let aspect = if a0 < a1 { rng.gen_range(a0..=a1) } else { a0 };
        let long = self.canvas_long_side_px;
        if aspect >= 1.0 {
            (long, ((long as f64 / aspect).round() as u32).max(1))
        } else {
            (((long as f64 * aspect).round() as u32).max(1), long)
        }
    }
}

/// Where a synthetic figure came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub mode: SynthesisMode,
    pub seed: u64,
    pub index: u64,
    /// Grid figures only: subfigure count of each row, top to bottom.
    pub row_counts: Vec<usize>,
    pub transposed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFigure {
    pub raster: RgbImage,
    pub boxes: Vec<BBox<f64>>,
    pub provenance: Provenance,
}

/// Independent RNG stream for figure `index` under `seed`.
pub fn figure_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Full synthesis of figure `index`: layout by the configured mode, random
/// transposition for grids, then augmentation. Deterministic in
/// `(config, pool, index)`.
pub fn synthesize_figure(
    config: &SynthesisConfig,
    pool: &[SubfigureAsset],
    index: u64,
) -> Result<SyntheticFigure, SynthesisError> {
    config.validate()?;
    let mut rng = figure_rng(config.seed, index);
    let mut fig = match config.mode {
        SynthesisMode::Grid => {
            let fig = synthesize_grid(config, pool, &mut rng)?;
            if rng.gen_bool(config.transpose_prob) {
                transpose_layout(&fig)?
            } else {
                fig
            }
        }
        SynthesisMode::RandomPaste => synthesize_random(config, pool, &mut rng)?,
    };
    fig.provenance.index = index;
    Ok(augment(&fig, &mut rng, config))
}
