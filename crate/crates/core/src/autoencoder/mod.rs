//! Convolutional autoencoder whose 512-value bottleneck supplies the learned
//! icon features.
//!
//! Icon architecture (input 3×32×32):
//!
//! | stage   | layer                                   | output   |
//! |---------|-----------------------------------------|----------|
//! | encoder | conv 3→8, stride 2, ReLU                | 8×16×16  |
//! | encoder | conv 8→16, stride 2, ReLU               | 16×8×8   |
//! | encoder | conv 16→8, stride 1, linear             | 8×8×8 = 512 latent |
//! | decoder | conv 8→16, ReLU; upsample ×2            | 16×16×16 |
//! | decoder | conv 16→8, ReLU; upsample ×2            | 8×32×32  |
//! | decoder | conv 8→3, sigmoid                       | 3×32×32  |
//!
//! All convolutions are 3×3 with zero padding 1. Parameters are `f64`.

pub mod layers;
mod train;

pub use train::{adam_step, ae_gradient_check, ae_train, gradient_check, AdamState, TrainingTrace};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::{Resize, RgbImage};
use crate::rng::SeededRng;
use layers::{activate, conv_forward, conv_output_side, upsample2x, Activation, Tensor, KERNEL};

pub const LATENT_DIM: usize = 512;
pub const AE_INPUT_SIDE: usize = 32;
pub const MODEL_FORMAT: &str = "icoclust-autoencoder";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AeError {
    #[error("input has {got} values, model expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid model file: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self { seed: 0, learning_rate: 1e-3, batch_size: 16, epochs: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { in_channels: usize, out_channels: usize, stride: usize, activation: Activation },
    Upsample2x,
}

/// `(channels, height, width)`
pub type Shape = (usize, usize, usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    /// `(channels, height, width)`
    pub input: (usize, usize, usize),
    pub encoder: Vec<LayerSpec>,
    pub decoder: Vec<LayerSpec>,
}

const fn conv(in_channels: usize, out_channels: usize, stride: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Conv { in_channels, out_channels, stride, activation }
}

impl Architecture {
    pub fn icon() -> Self {
        use Activation::*;
        Self {
            input: (3, AE_INPUT_SIDE, AE_INPUT_SIDE),
            encoder: vec![conv(3, 8, 2, Relu), conv(8, 16, 2, Relu), conv(16, 8, 1, Linear)],
            decoder: vec![
                conv(8, 16, 1, Relu),
                LayerSpec::Upsample2x,
                conv(16, 8, 1, Relu),
                LayerSpec::Upsample2x,
                conv(8, 3, 1, Sigmoid),
            ],
        }
    }

    /// 2×4×4 network with the same layer kinds, used for gradient checking.
    pub fn tiny() -> Self {
        use Activation::*;
        Self {
            input: (2, 4, 4),
            encoder: vec![conv(2, 3, 2, Relu), conv(3, 2, 1, Linear)],
            decoder: vec![conv(2, 3, 1, Relu), LayerSpec::Upsample2x, conv(3, 2, 1, Sigmoid)],
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.encoder.iter().chain(self.decoder.iter())
    }

    pub fn input_len(&self) -> usize {
        self.input.0 * self.input.1 * self.input.2
    }

    /// Checks channel chaining and returns `(latent shape, output shape)`.
    pub fn shapes(&self) -> Result<(Shape, Shape), AeError> {
        let step = |shape: (usize, usize, usize), layer: &LayerSpec| -> Result<_, AeError> {
            let (c, h, w) = shape;
            match *layer {
                LayerSpec::Conv { in_channels, out_channels, stride, .. } => {
                    if in_channels != c || stride == 0 || out_channels == 0 {
                        return Err(AeError::InvalidModel(format!("conv expects {in_channels} channels, gets {c}")));
                    }
                    Ok((out_channels, conv_output_side(h, stride), conv_output_side(w, stride)))
                }
                LayerSpec::Upsample2x => Ok((c, 2 * h, 2 * w)),
            }
        };
        let latent = self.encoder.iter().try_fold(self.input, step)?;
        let output = self.decoder.iter().try_fold(latent, step)?;
        if output != self.input {
            return Err(AeError::InvalidModel(format!(
                "decoder output {output:?} does not match input {:?}",
                self.input
            )));
        }
        Ok((latent, output))
    }

    pub fn latent_len(&self) -> usize {
        let (c, h, w) = self.shapes().expect("valid architecture").0;
        c * h * w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    /// `[out][in][ky][kx]`
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeModel {
    pub architecture: Architecture,
    /// One entry per convolution, encoder first, in layer order.
    pub params: Vec<ConvParams>,
    /// SHA-256 of the training corpus, recorded by training.
    pub corpus_sha256: Option<String>,
}

/// Output of a forward pass for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct AeOutput {
    pub latent: Vec<f64>,
    pub reconstruction: Vec<f64>,
}

impl AeModel {
    /// Xavier-uniform weights in `±sqrt(6 / (fan_in + fan_out))` with
    /// `fan = channels · 9`, zero biases. Values come from [`SeededRng`]
    /// (ChaCha8) in layer order, weights row-major.
    pub fn init(architecture: Architecture, seed: u64) -> Self {
        architecture.shapes().expect("valid architecture");
        let mut rng = SeededRng::new(seed);
        let params = architecture
            .layers()
            .filter_map(|l| match *l {
                LayerSpec::Conv { in_channels, out_channels, .. } => {
                    let taps = KERNEL * KERNEL;
                    let limit = (6.0 / ((in_channels + out_channels) * taps) as f64).sqrt();
                    let weights =
                        (0..out_channels * in_channels * taps).map(|_| rng.uniform_range(-limit, limit)).collect();
                    Some(ConvParams { weights, bias: vec![0.0; out_channels] })
                }
                LayerSpec::Upsample2x => None,
            })
            .collect();
        Self { architecture, params, corpus_sha256: None }
    }

    pub fn zeroed(architecture: Architecture) -> Self {
        let mut m = Self::init(architecture, 0);
        for p in &mut m.params {
            p.weights.fill(0.0);
            p.bias.fill(0.0);
        }
        m
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.weights.len() + p.bias.len()).sum()
    }

    /// Parameters flattened in the canonical order (per conv: weights, then bias).
    pub fn flat_params(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.weights.iter().chain(p.bias.iter()).copied()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut it = flat.iter().copied();
        for p in &mut self.params {
            p.weights.iter_mut().chain(p.bias.iter_mut()).for_each(|v| *v = it.next().unwrap());
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<Tensor, AeError> {
        let (c, h, w) = self.architecture.input;
        if input.len() != c * h * w {
            return Err(AeError::ShapeMismatch { expected: c * h * w, got: input.len() });
        }
        Ok(Tensor::from_vec(c, h, w, input.to_vec()))
    }

    fn run_layers<'a>(
        &self,
        mut x: Tensor,
        layers: impl Iterator<Item = &'a LayerSpec>,
        mut param_idx: usize,
    ) -> Tensor {
        for layer in layers {
            x = match *layer {
                LayerSpec::Conv { out_channels, stride, activation, .. } => {
                    let p = &self.params[param_idx];
                    param_idx += 1;
                    activate(&conv_forward(&x, &p.weights, &p.bias, out_channels, stride), activation)
                }
                LayerSpec::Upsample2x => upsample2x(&x),
            };
        }
        x
    }

    fn encoder_conv_count(&self) -> usize {
        self.architecture.encoder.iter().filter(|l| matches!(l, LayerSpec::Conv { .. })).count()
    }

    /// Latent code for one CHW input.
    pub fn encode_raw(&self, input: &[f64]) -> Result<Vec<f64>, AeError> {
        let x = self.check_input(input)?;
        Ok(self.run_layers(x, self.architecture.encoder.iter(), 0).data)
    }

    pub fn forward_one(&self, input: &[f64]) -> Result<AeOutput, AeError> {
        let x = self.check_input(input)?;
        let latent = self.run_layers(x, self.architecture.encoder.iter(), 0);
        let recon = self.run_layers(latent.clone(), self.architecture.decoder.iter(), self.encoder_conv_count());
        Ok(AeOutput { latent: latent.data, reconstruction: recon.data })
    }
}

/// Fresh icon-architecture model seeded from `config.seed`.
pub fn ae_init(config: &AeConfig) -> AeModel {
    AeModel::init(Architecture::icon(), config.seed)
}

/// Forward pass over a batch of CHW inputs; output order matches input order.
pub fn ae_forward(model: &AeModel, batch: &[Vec<f64>]) -> Result<Vec<AeOutput>, AeError> {
    batch.par_iter().map(|x| model.forward_one(x)).collect()
}

/// Resizes to the model input size and returns the encoder output.
pub fn ae_encode(model: &AeModel, icon: &RgbImage) -> Vec<f64> {
    let (_, h, w) = model.architecture.input;
    let resized = icon.resize_bilinear(w, h);
    model.encode_raw(&resized.data).expect("resized input matches model")
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    architecture: Architecture,
    corpus_sha256: Option<String>,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    /// `[out, in, 3, 3]`
    weight_shape: [usize; 4],
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl AeModel {
    pub fn to_json(&self) -> String {
        let layers = self
            .architecture
            .layers()
            .filter_map(|l| match *l {
                LayerSpec::Conv { in_channels, out_channels, .. } => Some([out_channels, in_channels, KERNEL, KERNEL]),
                LayerSpec::Upsample2x => None,
            })
            .zip(&self.params)
            .map(|(weight_shape, p)| LayerFile { weight_shape, weights: p.weights.clone(), bias: p.bias.clone() })
            .collect();
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            architecture: self.architecture.clone(),
            corpus_sha256: self.corpus_sha256.clone(),
            layers,
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AeError> {
        let bad = |m: String| AeError::InvalidModel(m);
        let file: ModelFile = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(bad(format!("unsupported format {} v{}", file.format, file.version)));
        }
        file.architecture.shapes()?;
        let convs: Vec<_> = file
            .architecture
            .layers()
            .filter_map(|l| match *l {
                LayerSpec::Conv { in_channels, out_channels, .. } => Some((in_channels, out_channels)),
                LayerSpec::Upsample2x => None,
            })
            .collect();
        if convs.len() != file.layers.len() {
            return Err(bad(format!("{} conv layers but {} parameter blocks", convs.len(), file.layers.len())));
        }
        let mut params = Vec::new();
        for (i, ((ic, oc), layer)) in convs.into_iter().zip(file.layers).enumerate() {
            if layer.weight_shape != [oc, ic, KERNEL, KERNEL]
                || layer.weights.len() != oc * ic * KERNEL * KERNEL
                || layer.bias.len() != oc
            {
                return Err(bad(format!("layer {i} shape mismatch")));
            }
            if !layer.weights.iter().chain(&layer.bias).all(|v| v.is_finite()) {
                return Err(bad(format!("layer {i} has non-finite parameters")));
            }
            params.push(ConvParams { weights: layer.weights, bias: layer.bias });
        }
        Ok(Self { architecture: file.architecture, params, corpus_sha256: file.corpus_sha256 })
    }
}
