//! Convolutional encoder + deconvolutional generator that learns to map
//! cipher images back to plain images.
//!
//! Encoder: `g` groups of `conv 4x4/2 pad 1 -> batchnorm -> relu` halving the
//! side down to 4, then `conv 4x4/1 -> sigmoid` to a 1x1 latent. The generator
//! mirrors it and ends in a linear deconvolution with one output map.

pub mod checkpoint;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;
use crate::nn::{LayerSpec, Mode, NnError, Parameter, Scalar, Sequential, Tensor};
use crate::seed::{derive_rng, INIT};

pub use checkpoint::TrainingMeta;
pub use train::{train, StepInfo, TrainConfig, TrainReport, DESK_WEIGHT_DECAY, WEIGHT_DECAY};

pub const KERNEL: usize = 4;
const INFER_CHUNK: usize = 64;
pub const CHECKPOINT_KIND: &str = "decryptor";

#[derive(Debug, Error)]
pub enum NetError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("model expects {expected}x{expected} images, got {found}x{found}")]
    SideMismatch { expected: usize, found: usize },
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}; recent losses {trace:?}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        loss: f64,
        trace: Vec<f64>,
    },
    #[error("training data: {0}")]
    Data(String),
    #[error("checkpoint: bad magic {0:?}")]
    BadMagic(Vec<u8>),
    #[error("checkpoint: truncated at offset {offset}, {needed} more bytes needed")]
    Truncated { offset: usize, needed: usize },
    #[error("checkpoint: digest mismatch, stored {stored:016x}, computed {computed:016x}")]
    Digest { stored: u64, computed: u64 },
    #[error("checkpoint: unsupported format version {0}")]
    Version(u32),
    #[error("checkpoint holds a {found} model, expected {expected}")]
    Kind { expected: String, found: String },
    #[error("checkpoint config {found} does not match requested {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub side: usize,
    pub base_channels: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// 128x128 input, 32 base channels: 6 encoder and 6 generator groups.
    pub fn paper(seed: u64) -> Self {
        Self {
            side: 128,
            base_channels: 32,
            seed,
        }
    }

    /// 32x32 input, 8 base channels: 4 encoder and 4 generator groups.
    pub fn desk(seed: u64) -> Self {
        Self {
            side: 32,
            base_channels: 8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.side < 8 || !self.side.is_power_of_two() {
            return Err(NetError::Config(format!(
                "side {} must be a power of two >= 8 so stride-2 halvings reach 4",
                self.side
            )));
        }
        if self.base_channels == 0 {
            return Err(NetError::Config("base channels must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of stride-2 groups per side (side -> 4).
    pub fn halvings(&self) -> usize {
        (self.side.trailing_zeros() - 2) as usize
    }

    /// Groups per side including the stride-1 group.
    pub fn groups(&self) -> usize {
        self.halvings() + 1
    }

    pub fn latent_channels(&self) -> usize {
        self.base_channels << self.halvings()
    }

    fn width(&self, g: usize) -> usize {
        self.base_channels << g
    }

    pub fn encoder_specs(&self) -> Vec<LayerSpec> {
        let mut specs = Vec::new();
        let mut c_in = 1;
        for g in 0..self.halvings() {
            let c_out = self.width(g);
            specs.push(LayerSpec::Conv {
                in_channels: c_in,
                out_channels: c_out,
                kernel: KERNEL,
                stride: 2,
                padding: 1,
            });
            specs.push(LayerSpec::BatchNorm { channels: c_out });
            specs.push(LayerSpec::Relu);
            c_in = c_out;
        }
        specs.push(LayerSpec::Conv {
            in_channels: c_in,
            out_channels: self.latent_channels(),
            kernel: KERNEL,
            stride: 1,
            padding: 0,
        });
        specs.push(LayerSpec::Sigmoid);
        specs
    }

    pub fn generator_specs(&self) -> Vec<LayerSpec> {
        let h = self.halvings();
        let top = self.width(h - 1);
        let mut specs = vec![
            LayerSpec::Deconv {
                in_channels: self.latent_channels(),
                out_channels: top,
                kernel: KERNEL,
                stride: 1,
                padding: 0,
            },
            LayerSpec::BatchNorm { channels: top },
            LayerSpec::Relu,
        ];
        for g in (0..h).rev() {
            let c_out = if g == 0 { 1 } else { self.width(g - 1) };
            specs.push(LayerSpec::Deconv {
                in_channels: self.width(g),
                out_channels: c_out,
                kernel: KERNEL,
                stride: 2,
                padding: 1,
            });
            if g > 0 {
                specs.push(LayerSpec::BatchNorm { channels: c_out });
                specs.push(LayerSpec::Relu);
            }
        }
        specs
    }
}

/// Stacks images into a `(B, 1, N, N)` tensor with values `v / 255`.
pub fn images_to_tensor<T: Scalar>(images: &[&GrayImage]) -> Result<Tensor<T>, NetError> {
    let side = images.first().map_or(0, |i| i.side());
    let mut data = Vec::with_capacity(images.len() * side * side);
    for img in images {
        if img.side() != side {
            return Err(NetError::SideMismatch {
                expected: side,
                found: img.side(),
            });
        }
        data.extend(img.to_unit::<T>());
    }
    Ok(Tensor::from_vec(&[images.len(), 1, side, side], data)?)
}

#[derive(Clone, Debug)]
pub struct DecryptionNet<T> {
    pub config: ModelConfig,
    pub encoder: Sequential<T>,
    pub generator: Sequential<T>,
    pub training: TrainingMeta,
}

impl<T: Scalar> DecryptionNet<T> {
    /// Fresh He-initialized model drawn from the config's seed.
    pub fn new(config: ModelConfig) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = derive_rng(config.seed, INIT, &[]);
        let encoder = Sequential::from_specs("encoder", &config.encoder_specs(), &mut rng);
        let generator = Sequential::from_specs("generator", &config.generator_specs(), &mut rng);
        Ok(Self {
            config,
            encoder,
            generator,
            training: TrainingMeta {
                seed: config.seed,
                ..Default::default()
            },
        })
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NetError> {
        let (_, c, h, w) = x.dims4()?;
        if c != 1 || h != w {
            return Err(NetError::Nn(NnError::Shape(format!(
                "expected (B, 1, N, N) input, got {:?}",
                x.shape()
            ))));
        }
        if h != self.config.side {
            return Err(NetError::SideMismatch {
                expected: self.config.side,
                found: h,
            });
        }
        Ok(())
    }

    /// Latent features `(B, latent, 1, 1)`.
    pub fn encode(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NetError> {
        self.check_input(x)?;
        Ok(self.encoder.forward(x, mode)?)
    }

    pub fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NetError> {
        let y = self.encode(x, mode)?;
        Ok(self.generator.forward(&y, mode)?)
    }

    /// Eval-mode forward pass without caching; safe to share across threads.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        self.check_input(x)?;
        let y = self.encoder.infer(x)?;
        Ok(self.generator.infer(&y)?)
    }

    pub fn backward(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>, NetError> {
        let g = self.generator.backward(grad)?;
        Ok(self.encoder.backward(&g)?)
    }

    pub fn params(&self) -> Vec<&Parameter<T>> {
        let mut v = self.encoder.params();
        v.extend(self.generator.params());
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter<T>> {
        let mut v = self.encoder.params_mut();
        v.extend(self.generator.params_mut());
        v
    }

    pub fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        self.generator.zero_grad();
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Reconstructs the plain image: eval-mode forward, clamp to [0,1],
    /// scale by 255, round half up.
    pub fn decrypt_learned(&self, cipher: &GrayImage) -> Result<GrayImage, NetError> {
        Ok(self.decrypt_batch(std::slice::from_ref(cipher))?.remove(0))
    }

    pub fn decrypt_batch(&self, ciphers: &[GrayImage]) -> Result<Vec<GrayImage>, NetError> {
        let side = self.config.side;
        let mut out = Vec::with_capacity(ciphers.len());
        for chunk in ciphers.chunks(INFER_CHUNK) {
            let refs: Vec<&GrayImage> = chunk.iter().collect();
            let y = self.infer(&images_to_tensor(&refs)?)?;
            for plane in y.data().chunks(side * side) {
                out.push(GrayImage::from_unit(side, plane).expect("plane has side^2 values"));
            }
        }
        Ok(out)
    }

    /// Mean per-pixel squared error on the [0,1] scale after emission to bytes.
    pub fn reconstruction_mse(&self, ciphers: &[GrayImage], plains: &[GrayImage]) -> Result<f64, NetError> {
        let decoded = self.decrypt_batch(ciphers)?;
        Ok(crate::image::mean_squared_error(&decoded, plains))
    }

    pub fn to_bytes(&self, with_optimizer: bool) -> Result<Vec<u8>, NetError> {
        let config = serde_json::to_value(self.config).expect("config serializes");
        checkpoint::encode(
            CHECKPOINT_KIND,
            config,
            &[("encoder", &self.encoder), ("generator", &self.generator)],
            self.training.clone(),
            with_optimizer,
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let (meta, mut modules) = checkpoint::decode::<T>(bytes)?;
        if meta.kind != CHECKPOINT_KIND {
            return Err(NetError::Kind {
                expected: CHECKPOINT_KIND.into(),
                found: meta.kind,
            });
        }
        let config: ModelConfig = serde_json::from_value(meta.config.clone())
            .map_err(|e| NetError::Checkpoint(format!("config: {e}")))?;
        config.validate()?;
        let names: Vec<&str> = meta.modules.iter().map(|m| m.name.as_str()).collect();
        if names != ["encoder", "generator"]
            || meta.modules[0].layers != config.encoder_specs()
            || meta.modules[1].layers != config.generator_specs()
        {
            return Err(NetError::Checkpoint("layer stack does not match its config".into()));
        }
        let generator = modules.pop().unwrap();
        let encoder = modules.pop().unwrap();
        Ok(Self {
            config,
            encoder,
            generator,
            training: meta.training,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        checkpoint::save(path, &self.to_bytes(true)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        Self::from_bytes(&checkpoint::load(path)?)
    }

    /// Loads and checks that side and width match `expected`.
    pub fn load_expecting(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Self, NetError> {
        let net = Self::load(path)?;
        if net.config.side != expected.side || net.config.base_channels != expected.base_channels {
            return Err(NetError::ConfigMismatch {
                expected: format!("side {} base {}", expected.side, expected.base_channels),
                found: format!("side {} base {}", net.config.side, net.config.base_channels),
            });
        }
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::random_tensor;

    #[test]
    fn paper_config_shapes() {
        let cfg = ModelConfig::paper(0);
        assert_eq!(cfg.groups(), 6);
        assert_eq!(cfg.latent_channels(), 1024);
        let enc = cfg.encoder_specs();
        assert!(matches!(enc[0], LayerSpec::Conv { out_channels: 32, .. }));
        assert!(matches!(enc.last(), Some(LayerSpec::Sigmoid)));
        assert!(!matches!(enc[enc.len() - 2], LayerSpec::BatchNorm { .. }));
        let gen = cfg.generator_specs();
        assert!(matches!(gen.last(), Some(LayerSpec::Deconv { out_channels: 1, stride: 2, .. })));
        assert!(matches!(gen[1], LayerSpec::BatchNorm { channels: 512 }));
        let convs = enc.iter().filter(|s| matches!(s, LayerSpec::Conv { .. })).count();
        let deconvs = gen.iter().filter(|s| matches!(s, LayerSpec::Deconv { .. })).count();
        assert_eq!((convs, deconvs), (6, 6));
    }

    #[test]
    fn paper_encoder_reaches_1x1() {
        let mut net = DecryptionNet::<f32>::new(ModelConfig::paper(1)).unwrap();
        let x = random_tensor::<f32>(&[1, 1, 128, 128], 2).map(|v| v.abs());
        let y = net.encoder.forward(&x, Mode::Eval).unwrap();
        assert_eq!(y.shape(), &[1, 1024, 1, 1]);
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
        let out = net.generator.infer(&y).unwrap();
        assert_eq!(out.shape(), &[1, 1, 128, 128]);
    }

    #[test]
    fn desk_config_shapes() {
        let cfg = ModelConfig::desk(0);
        assert_eq!(cfg.groups(), 4);
        assert_eq!(cfg.latent_channels(), 64);
        let mut net = DecryptionNet::<f32>::new(cfg).unwrap();
        let x = random_tensor::<f32>(&[3, 1, 32, 32], 5);
        assert_eq!(net.encode(&x, Mode::Train).unwrap().shape(), &[3, 64, 1, 1]);
        assert_eq!(net.forward(&x, Mode::Train).unwrap().shape(), &[3, 1, 32, 32]);
    }

    #[test]
    fn invalid_configs() {
        for (side, base) in [(30, 8), (4, 8), (32, 0)] {
            let cfg = ModelConfig {
                side,
                base_channels: base,
                seed: 0,
            };
            assert!(DecryptionNet::<f32>::new(cfg).is_err());
        }
    }

    #[test]
    fn side_mismatch_is_error() {
        let net = DecryptionNet::<f32>::new(ModelConfig::desk(0)).unwrap();
        assert!(matches!(
            net.decrypt_learned(&GrayImage::filled(16, 0)),
            Err(NetError::SideMismatch { expected: 32, found: 16 })
        ));
    }

    #[test]
    fn decrypt_is_deterministic_and_sized() {
        let net = DecryptionNet::<f32>::new(ModelConfig::desk(3)).unwrap();
        let img = GrayImage::new(32, (0..1024).map(|i| (i * 7 % 256) as u8).collect()).unwrap();
        let a = net.decrypt_learned(&img).unwrap();
        assert_eq!(a.side(), 32);
        assert_eq!(a, net.decrypt_learned(&img).unwrap());
    }

    #[test]
    fn same_seed_same_weights() {
        let a = DecryptionNet::<f32>::new(ModelConfig::desk(9)).unwrap();
        let b = DecryptionNet::<f32>::new(ModelConfig::desk(9)).unwrap();
        let c = DecryptionNet::<f32>::new(ModelConfig::desk(10)).unwrap();
        assert_eq!(a.params()[0].value, b.params()[0].value);
        assert_ne!(a.params()[0].value, c.params()[0].value);
    }

    #[test]
    fn checkpoint_round_trip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let mut net = DecryptionNet::<f32>::new(ModelConfig::desk(4)).unwrap();
        // move running stats away from their defaults
        let x = random_tensor::<f32>(&[4, 1, 32, 32], 8);
        net.forward(&x, Mode::Train).unwrap();
        net.training.corpus_digest = Some("abc".into());
        net.save(&path).unwrap();
        let back = DecryptionNet::<f32>::load_expecting(&path, &ModelConfig::desk(0)).unwrap();
        assert_eq!(back.training.corpus_digest.as_deref(), Some("abc"));
        assert_eq!(net.infer(&x).unwrap().data(), back.infer(&x).unwrap().data());

        assert!(matches!(
            DecryptionNet::<f32>::load_expecting(&path, &ModelConfig::paper(0)),
            Err(NetError::ConfigMismatch { .. })
        ));
    }

    #[test]
    fn checkpoint_kind_checked() {
        let m: Sequential<f32> = Sequential::new(Vec::new());
        let bytes = checkpoint::encode(
            "classifier",
            serde_json::json!({}),
            &[("m", &m)],
            TrainingMeta::default(),
            false,
        )
        .unwrap();
        assert!(matches!(
            DecryptionNet::<f32>::from_bytes(&bytes),
            Err(NetError::Kind { .. })
        ));
    }
}
