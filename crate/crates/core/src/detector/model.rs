use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};

use super::{BackboneLayer, DetectorConfig, DetectorError};
use crate::nn::weights::{read_weights, write_weights, NamedTensor};
use crate::nn::{
    conv2d, conv2d_backward, leaky_relu, leaky_relu_backward, maxpool2d, maxpool2d_backward,
    mismatch, PoolIndices, Tensor,
};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq)]
enum Layer<T> {
    Conv {
        name: String,
        weight: Tensor<T>,
        bias: Tensor<T>,
        pad: usize,
        /// Leaky ReLU after the convolution (every layer but the head).
        activate: bool,
    },
    MaxPool,
}

enum Cache<T> {
    Conv {
        input: Tensor<T>,
        pre_activation: Option<Tensor<T>>,
    },
    Pool(PoolIndices),
}

/// Saved activations from [`DetectorModel::forward_train`].
pub struct ForwardTrace<T> {
    caches: Vec<Cache<T>>,
}

/// Backbone of convolutions and max-pools ending in a 1x1 head with
/// `B*5` output channels.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorModel<T> {
    config: DetectorConfig,
    layers: Vec<Layer<T>>,
}

impl<T: Real> DetectorModel<T> {
    /// He-initialized weights, zero biases.
    pub fn new<R: Rng + ?Sized>(config: DetectorConfig, rng: &mut R) -> Result<Self, DetectorError> {
        config.validate()?;
        let mut layers = Vec::new();
        let mut channels = 3;
        let mut conv_index = 0;
        for spec in &config.backbone {
            match *spec {
                BackboneLayer::Conv {
                    out_channels,
                    kernel,
                } => {
                    if kernel % 2 == 0 || out_channels == 0 {
                        return Err(DetectorError::InvalidConfig(format!(
                            "conv needs an odd kernel and channels, got {kernel}/{out_channels}"
                        )));
                    }
                    let fan_in = channels * kernel * kernel;
                    layers.push(Layer::Conv {
                        name: format!("conv{conv_index}"),
                        weight: Tensor::he_uniform(
                            &[out_channels, channels, kernel, kernel],
                            fan_in,
                            rng,
                        ),
                        bias: Tensor::zeros(&[out_channels]),
                        pad: kernel / 2,
                        activate: true,
                    });
                    conv_index += 1;
                    channels = out_channels;
                }
                BackboneLayer::MaxPool => layers.push(Layer::MaxPool),
            }
        }
        let out = config.num_anchors * 5;
        // scaled down so initial logits stay near zero
        let head = Tensor::he_uniform(&[out, channels, 1, 1], channels, rng).scale(T::lit(0.1));
        layers.push(Layer::Conv {
            name: "head".into(),
            weight: head,
            bias: Tensor::zeros(&[out]),
            pad: 0,
            activate: false,
        });
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Decoding and NMS settings may change after training; the architecture may not.
    pub fn set_thresholds(&mut self, conf_threshold: f64, nms_iou_threshold: f64) {
        self.config.conf_threshold = conf_threshold;
        self.config.nms_iou_threshold = nms_iou_threshold;
    }

    fn slope(&self) -> T {
        T::lit(self.config.leaky_slope)
    }

    /// `(N, 3, H, W)` in, `(N, B*5, H/stride, W/stride)` out.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>, DetectorError> {
        self.check_input(input)?;
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv {
                    weight,
                    bias,
                    pad,
                    activate,
                    ..
                } => {
                    let y = conv2d(&x, weight, bias, 1, *pad)?;
                    if *activate {
                        leaky_relu(&y, self.slope())
                    } else {
                        y
                    }
                }
                Layer::MaxPool => maxpool2d(&x)?.0,
            };
        }
        Ok(x)
    }

    fn check_input(&self, input: &Tensor<T>) -> Result<(), DetectorError> {
        let (_, c, h, w) = input.dims4()?;
        if c != 3 || h % self.config.stride != 0 || w % self.config.stride != 0 {
            return Err(mismatch(format!(
                "input {:?} must have 3 channels and sides divisible by {}",
                input.shape(),
                self.config.stride
            ))
            .into());
        }
        Ok(())
    }

    pub fn forward_train(
        &self,
        input: &Tensor<T>,
    ) -> Result<(Tensor<T>, ForwardTrace<T>), DetectorError> {
        self.check_input(input)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            x = match layer {
                Layer::Conv {
                    weight,
                    bias,
                    pad,
                    activate,
                    ..
                } => {
                    let y = conv2d(&x, weight, bias, 1, *pad)?;
                    let input = std::mem::replace(&mut x, Tensor::zeros(&[1]));
                    if *activate {
                        let out = leaky_relu(&y, self.slope());
                        caches.push(Cache::Conv {
                            input,
                            pre_activation: Some(y),
                        });
                        out
                    } else {
                        caches.push(Cache::Conv {
                            input,
                            pre_activation: None,
                        });
                        y
                    }
                }
                Layer::MaxPool => {
                    let (y, idx) = maxpool2d(&x)?;
                    caches.push(Cache::Pool(idx));
                    y
                }
            };
        }
        Ok((x, ForwardTrace { caches }))
    }

    /// Parameter gradients, in [`Self::params`] order, given `dL/d output`.
    pub fn backward(
        &self,
        trace: ForwardTrace<T>,
        grad_out: Tensor<T>,
    ) -> Result<Vec<Tensor<T>>, DetectorError> {
        let mut grads_rev = Vec::new();
        let mut g = grad_out;
        let n_layers = self.layers.len();
        for (i, (layer, cache)) in self
            .layers
            .iter()
            .zip(trace.caches)
            .enumerate()
            .rev()
        {
            let first = i == 0;
            g = match (layer, cache) {
                (
                    Layer::Conv {
                        weight, pad, ..
                    },
                    Cache::Conv {
                        input,
                        pre_activation,
                    },
                ) => {
                    let g_pre = match pre_activation {
                        Some(pre) => leaky_relu_backward(&pre, &g, self.slope())?,
                        None => g,
                    };
                    let cg = conv2d_backward(&input, weight, 1, *pad, &g_pre, !first)?;
                    grads_rev.push(cg.bias);
                    grads_rev.push(cg.weight);
                    cg.input.unwrap_or_else(|| Tensor::zeros(&[1]))
                }
                (Layer::MaxPool, Cache::Pool(idx)) => maxpool2d_backward(&idx, &g)?,
                _ => unreachable!("trace produced by forward_train of a {n_layers}-layer model"),
            };
        }
        grads_rev.reverse();
        Ok(grads_rev)
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Conv { weight, bias, .. } => vec![weight, bias],
                Layer::MaxPool => vec![],
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| match l {
                Layer::Conv { weight, bias, .. } => vec![weight, bias],
                Layer::MaxPool => vec![],
            })
            .collect()
    }

    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Conv {
                    name, weight, bias, ..
                } => vec![
                    (format!("{name}.weight"), weight),
                    (format!("{name}.bias"), bias),
                ],
                Layer::MaxPool => vec![],
            })
            .collect()
    }

    pub fn to_named_tensors(&self) -> Vec<NamedTensor> {
        self.named_params()
            .into_iter()
            .map(|(name, t)| NamedTensor {
                name,
                dims: t.shape().to_vec(),
                values: t.data().iter().map(|v| v.as_f64() as f32).collect(),
            })
            .collect()
    }

    /// Builds the architecture from `config` and fills it from stored tensors.
    pub fn from_named_tensors(
        config: DetectorConfig,
        tensors: &[NamedTensor],
    ) -> Result<Self, DetectorError> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut model = Self::new(config, &mut rng)?;
        for l in &mut model.layers {
            if let Layer::Conv {
                name, weight, bias, ..
            } = l
            {
                for (suffix, t) in [("weight", weight), ("bias", bias)] {
                    let key = format!("{name}.{suffix}");
                    let stored = tensors
                        .iter()
                        .find(|n| n.name == key && n.dims == t.shape())
                        .ok_or_else(|| DetectorError::MissingTensor(key.clone()))?;
                    for (dst, &src) in t.data_mut().iter_mut().zip(&stored.values) {
                        *dst = T::lit(src as f64);
                    }
                }
            }
        }
        Ok(model)
    }
}

/// Path of the JSON config stored next to a weight file.
pub fn config_path(weights: &Path) -> PathBuf {
    let mut s = weights.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the weight file and its `<weights>.json` config sidecar.
pub fn save_model<T: Real>(model: &DetectorModel<T>, path: &Path) -> Result<(), DetectorError> {
    write_weights(BufWriter::new(File::create(path)?), &model.to_named_tensors())?;
    let cfg = serde_json::to_string_pretty(model.config())?;
    std::fs::write(config_path(path), cfg + "\n")?;
    Ok(())
}

pub fn load_model<T: Real>(path: &Path) -> Result<DetectorModel<T>, DetectorError> {
    let config: DetectorConfig = serde_json::from_str(&std::fs::read_to_string(config_path(path))?)?;
    let tensors = read_weights(BufReader::new(File::open(path)?))?;
    DetectorModel::from_named_tensors(config, &tensors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::test_config;

    fn small_config() -> DetectorConfig {
        DetectorConfig {
            input_side_px: 16,
            stride: 4,
            num_anchors: 2,
            anchors: vec![(0.2, 0.2), (0.5, 0.4)],
            backbone: vec![
                BackboneLayer::Conv {
                    out_channels: 4,
                    kernel: 3,
                },
                BackboneLayer::MaxPool,
                BackboneLayer::Conv {
                    out_channels: 6,
                    kernel: 3,
                },
                BackboneLayer::MaxPool,
                BackboneLayer::Conv {
                    out_channels: 5,
                    kernel: 1,
                },
            ],
            multiscale_sides: vec![16],
            ..DetectorConfig::default()
        }
    }

    #[test]
    fn output_shape_follows_stride() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let model = DetectorModel::<f32>::new(test_config(5), &mut rng).unwrap();
        let y = model.forward(&Tensor::zeros(&[2, 3, 128, 96])).unwrap();
        assert_eq!(y.shape(), &[2, 25, 16, 12]);
        assert!(model.forward(&Tensor::zeros(&[1, 3, 20, 16])).is_err());
        assert!(model.forward(&Tensor::zeros(&[1, 1, 16, 16])).is_err());
    }

    #[test]
    fn forward_train_matches_forward() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let model = DetectorModel::<f64>::new(small_config(), &mut rng).unwrap();
        let x = Tensor::he_uniform(&[2, 3, 16, 16], 1, &mut rng);
        let (y, _) = model.forward_train(&x).unwrap();
        assert_eq!(y, model.forward(&x).unwrap());
    }

    #[test]
    fn backward_grads_mirror_params() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let model = DetectorModel::<f64>::new(small_config(), &mut rng).unwrap();
        let x = Tensor::he_uniform(&[1, 3, 16, 16], 1, &mut rng);
        let (y, trace) = model.forward_train(&x).unwrap();
        let grads = model.backward(trace, Tensor::filled(y.shape(), 1.0)).unwrap();
        let params = model.params();
        assert_eq!(grads.len(), params.len());
        for (g, p) in grads.iter().zip(params) {
            assert_eq!(g.shape(), p.shape());
        }
    }

    #[test]
    fn save_load_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let model = DetectorModel::<f32>::new(small_config(), &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save_model(&model, &path).unwrap();
        let back: DetectorModel<f32> = load_model(&path).unwrap();
        assert_eq!(back, model);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"FIGSEP01");
    }

    #[test]
    fn load_rejects_wrong_architecture() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let model = DetectorModel::<f32>::new(small_config(), &mut rng).unwrap();
        let mut cfg = small_config();
        cfg.backbone[0] = BackboneLayer::Conv {
            out_channels: 7,
            kernel: 3,
        };
        assert!(matches!(
            DetectorModel::<f32>::from_named_tensors(cfg, &model.to_named_tensors()),
            Err(DetectorError::MissingTensor(_))
        ));
    }
}
