// Finite-difference checks for every layer, the detection loss, and a whole
// small detector. Shared by the core tests and the acceptance run.

use figsep::detector::{detection_loss, encode_targets, BackboneLayer, DetectorConfig, DetectorModel};
use figsep::nn::{
    conv2d, conv2d_backward, grad_check, leaky_relu, leaky_relu_backward, maxpool2d,
    maxpool2d_backward, sigmoid, sigmoid_backward, Tensor,
};
use figsep::BBox;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub seed: u64,
    pub error: f64,
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero so `eps` never crosses the leaky kink.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let vals = (0..n)
        .map(|_| rng.gen_range(0.05..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 })
        .collect();
    Tensor::from_vec(shape, vals).unwrap()
}

/// Distinct values at least 0.01 apart, so pooling winners are stable.
fn separated(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.5).collect();
    vals.shuffle(rng);
    Tensor::from_vec(shape, vals).unwrap()
}

fn project(out: &Tensor<f64>, r: &Tensor<f64>) -> f64 {
    out.dot(r).unwrap()
}

fn conv_check(rng: &mut ChaCha8Rng, k: usize, stride: usize, pad: usize) -> f64 {
    let x = uniform(rng, &[2, 3, 7, 6], -1.0, 1.0);
    let w = uniform(rng, &[4, 3, k, k], -0.5, 0.5);
    let b = uniform(rng, &[4], -0.5, 0.5);
    let probe = conv2d(&x, &w, &b, stride, pad).unwrap();
    let r = uniform(rng, probe.shape(), -1.0, 1.0);
    grad_check(
        |t| {
            let y = conv2d(&t[0], &t[1], &t[2], stride, pad).unwrap();
            let g = conv2d_backward(&t[0], &t[1], stride, pad, &r, true).unwrap();
            (project(&y, &r), vec![g.input.unwrap(), g.weight, g.bias])
        },
        &[x, w, b],
        EPS,
    )
}

fn leaky_check(rng: &mut ChaCha8Rng) -> f64 {
    let x = off_zero(rng, &[2, 3, 4, 5]);
    let r = uniform(rng, x.shape(), -1.0, 1.0);
    grad_check(
        |t| {
            let y = leaky_relu(&t[0], 0.1);
            (project(&y, &r), vec![leaky_relu_backward(&t[0], &r, 0.1).unwrap()])
        },
        &[x],
        EPS,
    )
}

fn sigmoid_check(rng: &mut ChaCha8Rng) -> f64 {
    let x = uniform(rng, &[2, 3, 4, 4], -4.0, 4.0);
    let r = uniform(rng, x.shape(), -1.0, 1.0);
    grad_check(
        |t| {
            let y = sigmoid(&t[0]);
            let g = sigmoid_backward(&y, &r).unwrap();
            (project(&y, &r), vec![g])
        },
        &[x],
        EPS,
    )
}

fn pool_check(rng: &mut ChaCha8Rng, h: usize, w: usize) -> f64 {
    let x = separated(rng, &[2, 2, h, w]);
    let (probe, _) = maxpool2d(&x).unwrap();
    let r = uniform(rng, probe.shape(), -1.0, 1.0);
    grad_check(
        |t| {
            let (y, idx) = maxpool2d(&t[0]).unwrap();
            (project(&y, &r), vec![maxpool2d_backward(&idx, &r).unwrap()])
        },
        &[x],
        EPS,
    )
}

fn composite_check(rng: &mut ChaCha8Rng) -> f64 {
    // Redraw until every pre-activation is clear of the kink by more than
    // any finite-difference step can move it.
    let (x, w, b) = loop {
        let x = uniform(rng, &[1, 2, 6, 6], -1.0, 1.0);
        let w = uniform(rng, &[3, 2, 3, 3], -0.5, 0.5);
        let b = uniform(rng, &[3], -0.5, 0.5);
        let z = conv2d(&x, &w, &b, 1, 1).unwrap();
        if z.data().iter().all(|v| v.abs() > 0.01) {
            break (x, w, b);
        }
    };
    let r = uniform(rng, &[1, 3, 6, 6], -1.0, 1.0);
    grad_check(
        |t| {
            let z = conv2d(&t[0], &t[1], &t[2], 1, 1).unwrap();
            let y = leaky_relu(&z, 0.1);
            let gz = leaky_relu_backward(&z, &r, 0.1).unwrap();
            let g = conv2d_backward(&t[0], &t[1], 1, 1, &gz, true).unwrap();
            (project(&y, &r), vec![g.input.unwrap(), g.weight, g.bias])
        },
        &[x, w, b],
        1e-5,
    )
}

fn random_boxes(rng: &mut ChaCha8Rng, n: usize) -> Vec<BBox<f64>> {
    (0..n)
        .map(|_| {
            let (w, h) = (rng.gen_range(0.05..0.5), rng.gen_range(0.05..0.5));
            let (x, y) = (rng.gen_range(0.0..1.0 - w), rng.gen_range(0.0..1.0 - h));
            BBox::new(x, y, x + w, y + h).unwrap()
        })
        .collect()
}

fn loss_check(rng: &mut ChaCha8Rng) -> f64 {
    let anchors = [(0.1, 0.15), (0.3, 0.2), (0.4, 0.45)];
    let grid = 4;
    let targets: Vec<_> = (0..2)
        .map(|_| {
            let n = rng.gen_range(0..5);
            encode_targets(&random_boxes(rng, n), &anchors, grid).unwrap()
        })
        .collect();
    let raw = uniform(rng, &[2, 15, grid, grid], -2.0, 2.0);
    grad_check(
        |t| {
            let (loss, g) = detection_loss(&t[0], &targets, 5.0, 0.5).unwrap();
            (loss, vec![g])
        },
        &[raw],
        EPS,
    )
}

pub fn tiny_detector_config() -> DetectorConfig {
    DetectorConfig {
        input_side_px: 16,
        stride: 4,
        num_anchors: 2,
        anchors: vec![(0.2, 0.25), (0.5, 0.4)],
        backbone: vec![
            BackboneLayer::Conv {
                out_channels: 3,
                kernel: 3,
            },
            BackboneLayer::MaxPool,
            BackboneLayer::Conv {
                out_channels: 4,
                kernel: 3,
            },
            BackboneLayer::MaxPool,
            BackboneLayer::Conv {
                out_channels: 4,
                kernel: 1,
            },
        ],
        ..DetectorConfig::default()
    }
}

fn model_check(rng: &mut ChaCha8Rng) -> f64 {
    let cfg = tiny_detector_config();
    let base = DetectorModel::<f64>::new(cfg.clone(), rng).unwrap();
    let x = uniform(rng, &[2, 3, 16, 16], -0.5, 0.5);
    let targets: Vec<_> = (0..2)
        .map(|_| encode_targets(&random_boxes(rng, 3), &cfg.anchors, 4).unwrap())
        .collect();
    let params: Vec<Tensor<f64>> = base.params().into_iter().cloned().collect();
    grad_check(
        |t| {
            let mut m = base.clone();
            for (p, v) in m.params_mut().into_iter().zip(t) {
                *p = v.clone();
            }
            let (raw, trace) = m.forward_train(&x).unwrap();
            let (loss, g) = detection_loss(&raw, &targets, 5.0, 0.5).unwrap();
            (loss, m.backward(trace, g).unwrap())
        },
        &params,
        // The loss is O(10); a smaller step lets roundoff swamp the
        // smallest gradient components.
        1e-5,
    )
}

/// Every check once per seed.
pub fn run_suite(seeds: std::ops::Range<u64>, include_model: bool) -> Vec<Check> {
    let mut out = Vec::new();
    for seed in seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut push = |name, error| out.push(Check { name, seed, error });
        push("conv3x3 pad1", conv_check(&mut rng, 3, 1, 1));
        push("conv3x3 stride2", conv_check(&mut rng, 3, 2, 0));
        push("conv1x1", conv_check(&mut rng, 1, 1, 0));
        push("leaky_relu", leaky_check(&mut rng));
        push("sigmoid", sigmoid_check(&mut rng));
        push("maxpool even", pool_check(&mut rng, 6, 8));
        push("maxpool odd", pool_check(&mut rng, 5, 7));
        push("conv+leaky", composite_check(&mut rng));
        push("detection_loss", loss_check(&mut rng));
        if include_model {
            push("detector", model_check(&mut rng));
        }
    }
    out
}
