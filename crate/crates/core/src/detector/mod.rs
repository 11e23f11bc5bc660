//! Single-shot grid detector for subfigures.
//!
//! The network maps a letterboxed image to an `S x S` grid; every cell
//! predicts, for each of `B` anchor shapes, a center offset, a log-scale size
//! correction and an objectness logit.

mod anchors;
mod encode;
mod infer;
mod loss;
mod model;
mod nms;
mod train;

pub use anchors::estimate_anchors;
pub use encode::{decode_predictions, encode_targets, EncodedTargets, TargetCoords};
pub use infer::{detect, image_to_tensor, Letterbox};
pub use loss::{detection_loss, loss_terms, LossTerms};
pub use model::{load_model, save_model, DetectorModel, ForwardTrace};
pub use nms::nms;
pub use train::{train, TrainLogEntry, TrainOutcome, TrainSample};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, GeometryError};
use crate::nn::weights::WeightsError;
use crate::nn::NnError;
use crate::real::Real;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("need at least {needed} boxes, got {got}")]
    TooFewBoxes { needed: usize, got: usize },
    #[error("invalid box")]
    InvalidBox(#[from] GeometryError),
    #[error(transparent)]
    Shape(#[from] NnError),
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    DivergenceDetected { epoch: usize, batch: usize },
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("weight file")]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("config json")]
    Json(#[from] serde_json::Error),
    #[error("weight file lacks tensor {0:?} or its shape differs")]
    MissingTensor(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum BackboneLayer {
    /// `kernel x kernel` convolution with same-padding followed by leaky ReLU.
    Conv { out_channels: usize, kernel: usize },
    /// 2x2 max pooling, stride 2.
    MaxPool,
}

fn default_backbone() -> Vec<BackboneLayer> {
    use BackboneLayer::{Conv, MaxPool};
    let conv = |c| Conv {
        out_channels: c,
        kernel: 3,
    };
    vec![
        conv(16),
        MaxPool,
        conv(32),
        MaxPool,
        conv(64),
        MaxPool,
        conv(64),
        conv(128),
        conv(128),
    ]
}

/// Architecture, anchors, decoding thresholds and training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub input_side_px: usize,
    /// Total downsampling factor of the backbone (2 per max-pool).
    pub stride: usize,
    pub num_anchors: usize,
    /// Anchor `(width, height)` pairs, normalized to the input side.
    pub anchors: Vec<(f64, f64)>,
    pub conf_threshold: f64,
    pub nms_iou_threshold: f64,
    pub lambda_coord: f64,
    pub lambda_noobj: f64,
    pub leaky_slope: f64,
    pub backbone: Vec<BackboneLayer>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_milestones: Vec<usize>,
    pub lr_decay: f64,
    pub warmup_steps: usize,
    /// Rescale the full gradient to at most this L2 norm; `None` disables.
    pub grad_clip_norm: Option<f64>,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Working resolutions for multi-scale training; all multiples of `stride`.
    pub multiscale_sides: Vec<usize>,
    /// Batches between working-resolution redraws.
    pub rescale_every: usize,
    /// Probability of mirroring a training image (and its boxes).
    pub train_hflip_prob: f64,
    /// Probability of flipping a training image upside down.
    pub train_vflip_prob: f64,
    /// Probability of transposing a training image (swapping rows and columns).
    pub train_transpose_prob: f64,
    /// Probability of inverting a training image's colors.
    pub train_invert_prob: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            input_side_px: 128,
            stride: 8,
            num_anchors: 5,
            anchors: Vec::new(),
            conf_threshold: 0.25,
            nms_iou_threshold: 0.45,
            lambda_coord: 5.0,
            lambda_noobj: 0.5,
            leaky_slope: 0.1,
            backbone: default_backbone(),
            epochs: 60,
            batch_size: 8,
            learning_rate: 1e-2,
            lr_milestones: vec![50, 57],
            lr_decay: 0.1,
            warmup_steps: 0,
            grad_clip_norm: Some(10.0),
            momentum: 0.9,
            weight_decay: 0.0005,
            multiscale_sides: vec![128],
            rescale_every: 10,
            train_hflip_prob: 0.5,
            train_vflip_prob: 0.5,
            train_transpose_prob: 0.5,
            train_invert_prob: 0.2,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    /// Training schedule from the full-scale setup: 160 epochs, batch 64,
    /// decay at epochs 60 and 90.
    pub fn full_scale_schedule(self) -> Self {
        Self {
            epochs: 160,
            batch_size: 64,
            lr_milestones: vec![60, 90],
            ..self
        }
    }

    pub fn grid_side(&self) -> usize {
        self.input_side_px / self.stride
    }

    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: String| Err(DetectorError::InvalidConfig(m));
        let pools = self
            .backbone
            .iter()
            .filter(|l| matches!(l, BackboneLayer::MaxPool))
            .count();
        if self.stride != 1 << pools {
            return bad(format!(
                "stride {} but backbone has {pools} pooling layers",
                self.stride
            ));
        }
        if self.input_side_px == 0 || self.input_side_px % self.stride != 0 {
            return bad(format!(
                "input side {} is not a positive multiple of stride {}",
                self.input_side_px, self.stride
            ));
        }
        if let Some(s) = self
            .multiscale_sides
            .iter()
            .find(|&&s| s == 0 || s % self.stride != 0)
        {
            return bad(format!("multi-scale side {s} is not a multiple of the stride"));
        }
        if self.num_anchors == 0 || self.anchors.len() != self.num_anchors {
            return bad(format!(
                "{} anchors configured for num_anchors = {}",
                self.anchors.len(),
                self.num_anchors
            ));
        }
        if self
            .anchors
            .iter()
            .any(|&(w, h)| !(w > 0.0 && h > 0.0 && w <= 1.0 && h <= 1.0))
        {
            return bad("anchor sizes must lie in (0, 1]".into());
        }
        if self.grad_clip_norm.is_some_and(|c| !(c > 0.0)) {
            return bad("grad_clip_norm must be positive".into());
        }
        if self.batch_size == 0 || self.rescale_every == 0 {
            return bad("batch_size and rescale_every must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.conf_threshold)
            || !(0.0..=1.0).contains(&self.nms_iou_threshold)
            || [
                self.train_hflip_prob,
                self.train_vflip_prob,
                self.train_transpose_prob,
                self.train_invert_prob,
            ]
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return bad("thresholds and probabilities must lie in [0, 1]".into());
        }
        Ok(())
    }

    pub(crate) fn anchors_as<T: Real>(&self) -> Vec<(T, T)> {
        self.anchors
            .iter()
            .map(|&(w, h)| (T::lit(w), T::lit(h)))
            .collect()
    }
}

/// One predicted subfigure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection<T> {
    pub bbox: BBox<T>,
    pub confidence: T,
}

#[cfg(test)]
pub(crate) fn test_config(anchors: usize) -> DetectorConfig {
    let anchors: Vec<(f64, f64)> = (0..anchors)
        .map(|i| {
            let s = 0.1 + 0.15 * i as f64;
            (s, (s * 0.8).min(1.0))
        })
        .collect();
    DetectorConfig {
        num_anchors: anchors.len(),
        anchors,
        ..DetectorConfig::default()
    }
}
