use image::{imageops, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    detection_loss, encode_targets, loss_terms, image_to_tensor, DetectorConfig, DetectorError,
    DetectorModel, EncodedTargets, Letterbox,
};
use crate::geometry::BBox;
use crate::nn::{sgd_step, LrSchedule, OptimizerState, Tensor};
use crate::real::Real;

/// One training figure: the raster and its subfigure boxes.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub image: RgbImage,
    pub boxes: Vec<BBox<f64>>,
}

/// One row of the loss history.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainLogEntry {
    pub epoch: usize,
    pub batch: usize,
    pub loss: f64,
    pub lr: f64,
    pub resolution: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: DetectorModel<T>,
    pub history: Vec<TrainLogEntry>,
    /// Ground-truth boxes dropped by target-slot collisions over all batches.
    pub collisions: usize,
}

impl<T> TrainOutcome<T> {
    /// Mean batch loss of every epoch.
    pub fn epoch_mean_losses(&self) -> Vec<f64> {
        let epochs = self.history.iter().map(|e| e.epoch + 1).max().unwrap_or(0);
        (0..epochs)
            .map(|ep| {
                let losses: Vec<f64> = self
                    .history
                    .iter()
                    .filter(|e| e.epoch == ep)
                    .map(|e| e.loss)
                    .collect();
                losses.iter().sum::<f64>() / losses.len().max(1) as f64
            })
            .collect()
    }
}

impl<T: Real> DetectorModel<T> {
    /// The model [`train`] starts from for this config.
    pub fn initial(config: &DetectorConfig) -> Result<Self, DetectorError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(0);
        Self::new(config.clone(), &mut rng)
    }
}

/// Label-preserving distortions drawn per training image.
#[derive(Debug, Clone, Copy, Default)]
struct Distortion {
    transpose: bool,
    hflip: bool,
    vflip: bool,
    invert: bool,
}

impl Distortion {
    fn draw<R: Rng>(rng: &mut R, config: &DetectorConfig) -> Self {
        Self {
            transpose: rng.gen_bool(config.train_transpose_prob),
            hflip: rng.gen_bool(config.train_hflip_prob),
            vflip: rng.gen_bool(config.train_vflip_prob),
            invert: rng.gen_bool(config.train_invert_prob),
        }
    }
}

fn prepare<T: Real>(
    sample: &TrainSample,
    side: usize,
    stride: usize,
    anchors: &[(T, T)],
    d: Distortion,
) -> Result<(Tensor<T>, EncodedTargets<T>), DetectorError> {
    let transposed;
    let (src, src_boxes): (&RgbImage, Vec<BBox<f64>>) = if d.transpose {
        transposed = imageops::flip_horizontal(&imageops::rotate90(&sample.image));
        (&transposed, sample.boxes.iter().map(BBox::transpose).collect())
    } else {
        (&sample.image, sample.boxes.clone())
    };
    let lb = Letterbox::new(src.width(), src.height(), side as u32);
    let mut img = lb.apply(src);
    let mut boxes: Vec<BBox<T>> = src_boxes
        .iter()
        .filter_map(|b| b.cast::<T>())
        .filter_map(|b| lb.forward_box(&b))
        .collect();
    if d.hflip {
        imageops::flip_horizontal_in_place(&mut img);
        boxes = boxes.iter().map(BBox::hflip).collect();
    }
    if d.vflip {
        imageops::flip_vertical_in_place(&mut img);
        boxes = boxes.iter().map(BBox::vflip).collect();
    }
    if d.invert {
        imageops::invert(&mut img);
    }
    let tensor = image_to_tensor::<T>(&img).reshape(&[3, side, side])?;
    let targets = encode_targets(&boxes, anchors, side / stride)?;
    Ok((tensor, targets))
}

/// Mini-batch SGD with momentum and weight decay under a step learning-rate
/// schedule. Every `rescale_every` batches the working resolution is redrawn
/// from `multiscale_sides`. Deterministic in `config.seed`.
pub fn train<T: Real>(
    dataset: &[TrainSample],
    config: &DetectorConfig,
) -> Result<TrainOutcome<T>, DetectorError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(DetectorError::EmptyDataset);
    }
    let mut model = DetectorModel::<T>::initial(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let sides = if config.multiscale_sides.is_empty() {
        vec![config.input_side_px]
    } else {
        config.multiscale_sides.clone()
    };
    let schedule = LrSchedule {
        base: config.learning_rate,
        milestones: config.lr_milestones.clone(),
        factor: config.lr_decay,
        warmup_steps: config.warmup_steps,
    };
    let mut opt = OptimizerState::new(
        &model.params(),
        config.learning_rate,
        config.momentum,
        config.weight_decay,
    );
    let anchors = config.anchors_as::<T>();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::new();
    let mut collisions = 0;
    let mut step = 0usize;
    let mut side = sides[0];
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            if step % config.rescale_every == 0 {
                side = *sides.choose(&mut rng).expect("non-empty");
            }
            let mut items = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let d = Distortion::draw(&mut rng, config);
                let (x, t) = prepare(&dataset[i], side, config.stride, &anchors, d)?;
                collisions += t.collisions;
                items.push(x);
                targets.push(t);
            }
            let input = Tensor::stack(&items.iter().collect::<Vec<_>>())?;
            let (raw, trace) = model.forward_train(&input)?;
            if log::log_enabled!(log::Level::Trace) {
                let t = loss_terms(&raw, &targets, config.lambda_coord, config.lambda_noobj)?;
                log::trace!(
                    "coord {:.3} object {:.3} no-object {:.3}",
                    t.coord,
                    t.object,
                    t.no_object
                );
            }
            let (loss, grad) =
                detection_loss(&raw, &targets, config.lambda_coord, config.lambda_noobj)?;
            if !loss.is_finite() {
                return Err(DetectorError::DivergenceDetected { epoch, batch });
            }
            let mut grads = model.backward(trace, grad)?;
            let grad_norm = grads.iter().map(|g| g.sum_squares()).sum::<f64>().sqrt();
            if let Some(clip) = config.grad_clip_norm {
                if grad_norm > clip {
                    let k = T::lit(clip / grad_norm);
                    grads.iter_mut().for_each(|g| *g = g.scale(k));
                }
            }
            let lr = schedule.rate(epoch, step);
            opt.learning_rate = lr;
            sgd_step(&mut model.params_mut(), &grads, &mut opt)?;
            log::debug!("epoch {epoch} batch {batch} side {side} lr {lr:.2e} loss {loss:.4} |g| {grad_norm:.3e}");
            history.push(TrainLogEntry {
                epoch,
                batch,
                loss,
                lr,
                resolution: side,
            });
            step += 1;
        }
        if let Some(mean) = history
            .iter()
            .filter(|e| e.epoch == epoch)
            .map(|e| e.loss)
            .reduce(|a, b| a + b)
        {
            let n = history.iter().filter(|e| e.epoch == epoch).count();
            log::info!("epoch {epoch}: mean loss {:.4}", mean / n as f64);
        }
    }
    Ok(TrainOutcome {
        model,
        history,
        collisions,
    })
}
