//! File formats and the image codec boundary.
//!
//! Annotations are JSON Lines, one figure per line, with box coordinates
//! normalized to the image size:
//!
//! ```text
//! {"image":"images/000001.png","width":256,"height":180,"boxes":[{"x_min":0.0,"y_min":0.0,"x_max":0.5,"y_max":1.0}]}
//! ```
//!
//! Detection files use the same format with a `confidence` on every box.

mod annotations;
mod manifest;
mod overlay;

use std::path::{Path, PathBuf};

use image::RgbImage;
use thiserror::Error;

pub use annotations::{
    load_annotations, load_corpus, parse_annotations, resolve_image, save_corpus, write_annotations, Corpus,
    FigureRecord, LabeledBox, Split,
};
pub use manifest::{corpus_digest, RunManifest};
pub use overlay::{render_overlay, save_overlay, DET_COLOR, GT_COLOR};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing image {0}")]
    MissingImage(PathBuf),
    #[error("{path}: annotated {annotated:?} but image is {actual:?}")]
    DimensionMismatch {
        path: PathBuf,
        annotated: (u32, u32),
        actual: (u32, u32),
    },
    #[error("image {path}")]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error(transparent)]
    IoFailure(#[from] std::io::Error),
}

/// Decodes any supported raster (PNG, JPEG) to 8-bit RGB.
pub fn load_rgb(path: &Path) -> Result<RgbImage, IoError> {
    if !path.exists() {
        return Err(IoError::MissingImage(path.to_path_buf()));
    }
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|source| IoError::Image {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes a PNG, creating parent directories as needed.
pub fn save_png(img: &RgbImage, path: &Path) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| IoError::Image {
            path: path.to_path_buf(),
            source,
        })
}
