use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::annotations::resolve_image;
use super::{write_annotations, FigureRecord, IoError};

/// Reproducibility record written next to every run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub corpus_digest: String,
    pub figures_timed: usize,
    pub mean_ms_per_figure: f64,
    pub elapsed_ms: f64,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: serde_json::Value) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed,
            config,
            corpus_digest: String::new(),
            figures_timed: 0,
            mean_ms_per_figure: 0.0,
            elapsed_ms: 0.0,
        }
    }

    /// Records per-figure wall-clock times; the mean is over exactly these.
    pub fn set_timing(&mut self, per_figure_ms: &[f64]) {
        self.figures_timed = per_figure_ms.len();
        self.mean_ms_per_figure = if per_figure_ms.is_empty() {
            0.0
        } else {
            per_figure_ms.iter().sum::<f64>() / per_figure_ms.len() as f64
        };
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::from)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// SHA-256 over the canonical annotation lines and, when `image_root` is
/// given, the bytes of every referenced image. Hex encoded.
pub fn corpus_digest(records: &[FigureRecord], image_root: Option<&Path>) -> Result<String, IoError> {
    let mut hasher = Sha256::new();
    let mut lines = Vec::new();
    write_annotations(&mut lines, records)?;
    hasher.update(&lines);
    if let Some(root) = image_root {
        for r in records {
            hasher.update(std::fs::read(resolve_image(root, &r.image_path))?);
        }
    }
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}
