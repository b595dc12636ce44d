//! LeNet-style digit classifier and decryption-quality reports.
//!
//! Architecture: `conv 5x5 pad 2 (6) -> relu -> maxpool 2 -> conv 5x5 (16) ->
//! relu -> maxpool 2 -> fc 400->120 -> relu -> fc 120->84 -> relu -> fc 84->10`.
//! Images of any side are resized to 28x28 (nearest neighbour) before scoring.

use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledImage;
use crate::image::GrayImage;
use crate::net::checkpoint::{self, TrainingMeta};
use crate::net::{images_to_tensor, NetError};
use crate::nn::{adam_step, softmax_cross_entropy, AdamConfig, LayerSpec, Mode, Sequential};
use crate::seed::{derive_rng, sha256_hex, INIT, SHUFFLE};

pub const CLASSIFIER_SIDE: usize = 28;
pub const CLASSES: usize = 10;
pub const CHECKPOINT_KIND: &str = "classifier";
const INFER_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub side: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            side: CLASSIFIER_SIDE,
            epochs: 3,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

pub fn lenet_specs() -> Vec<LayerSpec> {
    let conv = |i, o, padding| LayerSpec::Conv {
        in_channels: i,
        out_channels: o,
        kernel: 5,
        stride: 1,
        padding,
    };
    let fc = |i, o| LayerSpec::Linear {
        in_features: i,
        out_features: o,
    };
    vec![
        conv(1, 6, 2),
        LayerSpec::Relu,
        LayerSpec::MaxPool { size: 2 },
        conv(6, 16, 0),
        LayerSpec::Relu,
        LayerSpec::MaxPool { size: 2 },
        LayerSpec::Flatten,
        fc(16 * 5 * 5, 120),
        LayerSpec::Relu,
        fc(120, 84),
        LayerSpec::Relu,
        fc(84, CLASSES),
    ]
}

#[derive(Clone, Debug)]
pub struct Classifier {
    pub config: ClassifierConfig,
    pub net: Sequential<f32>,
    pub training: TrainingMeta,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassifierReport {
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

fn to_side(img: &GrayImage, side: usize) -> GrayImage {
    if img.side() == side {
        img.clone()
    } else {
        img.resize(side)
    }
}

impl Classifier {
    /// Untrained classifier with seeded He initialization.
    pub fn new(config: ClassifierConfig) -> Result<Self, NetError> {
        if config.side != CLASSIFIER_SIDE {
            return Err(NetError::Config(format!(
                "classifier input side must be {CLASSIFIER_SIDE}, got {}",
                config.side
            )));
        }
        let mut rng = derive_rng(config.seed, INIT, &[]);
        Ok(Self {
            config,
            net: Sequential::from_specs("lenet", &lenet_specs(), &mut rng),
            training: TrainingMeta {
                seed: config.seed,
                ..Default::default()
            },
        })
    }

    /// Logits `(B, 10)`.
    pub fn logits(&self, images: &[GrayImage]) -> Result<Vec<[f32; CLASSES]>, NetError> {
        let chunks: Vec<&[GrayImage]> = images.chunks(INFER_CHUNK).collect();
        let parts = chunks
            .par_iter()
            .map(|chunk| {
                let resized: Vec<GrayImage> = chunk.iter().map(|i| to_side(i, self.config.side)).collect();
                let refs: Vec<&GrayImage> = resized.iter().collect();
                let out = self.net.infer(&images_to_tensor::<f32>(&refs)?)?;
                Ok(out
                    .data()
                    .chunks(CLASSES)
                    .map(|r| r.try_into().unwrap())
                    .collect::<Vec<[f32; CLASSES]>>())
            })
            .collect::<Result<Vec<_>, NetError>>()?;
        Ok(parts.into_iter().flatten().collect())
    }

    pub fn predict(&self, images: &[GrayImage]) -> Result<Vec<u8>, NetError> {
        Ok(self
            .logits(images)?
            .iter()
            .map(|row| {
                // first maximum wins ties
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best as u8
            })
            .collect())
    }

    pub fn accuracy(&self, images: &[GrayImage], labels: &[u8]) -> Result<f64, NetError> {
        if images.len() != labels.len() || images.is_empty() {
            return Err(NetError::Data(format!(
                "{} images for {} labels",
                images.len(),
                labels.len()
            )));
        }
        let pred = self.predict(images)?;
        let hits = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
        Ok(hits as f64 / labels.len() as f64)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, NetError> {
        checkpoint::encode(
            CHECKPOINT_KIND,
            serde_json::to_value(self.config).expect("config serializes"),
            &[("lenet", &self.net)],
            self.training.clone(),
            false,
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let (meta, mut modules) = checkpoint::decode::<f32>(bytes)?;
        if meta.kind != CHECKPOINT_KIND {
            return Err(NetError::Kind {
                expected: CHECKPOINT_KIND.into(),
                found: meta.kind,
            });
        }
        let config: ClassifierConfig = serde_json::from_value(meta.config)
            .map_err(|e| NetError::Checkpoint(format!("config: {e}")))?;
        if modules.len() != 1 || modules[0].specs() != lenet_specs() {
            return Err(NetError::Checkpoint("not a LeNet layer stack".into()));
        }
        Ok(Self {
            config,
            net: modules.remove(0),
            training: meta.training,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NetError> {
        checkpoint::save(path, &self.to_bytes()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetError> {
        Self::from_bytes(&checkpoint::load(path)?)
    }
}

/// Minibatch Adam on softmax cross-entropy.
pub fn train_classifier(
    config: ClassifierConfig,
    data: &[LabeledImage],
) -> Result<(Classifier, ClassifierReport), NetError> {
    if data.is_empty() {
        return Err(NetError::Data("no training images".into()));
    }
    let mut clf = Classifier::new(config)?;
    let images: Vec<GrayImage> = data.iter().map(|d| to_side(&d.image, config.side)).collect();
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..Default::default()
    };
    let mut report = ClassifierReport::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..config.epochs {
        order.sort_unstable();
        order.shuffle(&mut derive_rng(config.seed, SHUFFLE, &[epoch as u64]));
        let mut sum = 0.0;
        let mut count = 0;
        for (batch, idx) in order.chunks(config.batch_size.max(1)).enumerate() {
            let refs: Vec<&GrayImage> = idx.iter().map(|&i| &images[i]).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| data[i].label as usize).collect();
            let x = images_to_tensor::<f32>(&refs)?;
            clf.net.zero_grad();
            let logits = clf.net.forward(&x, Mode::Train)?;
            let (loss, grad) = softmax_cross_entropy(&logits, &labels)?;
            let loss = loss as f64;
            if !loss.is_finite() {
                let start = report.epoch_losses.len().saturating_sub(10);
                return Err(NetError::NonFinite {
                    epoch,
                    batch,
                    loss,
                    trace: report.epoch_losses[start..].to_vec(),
                });
            }
            clf.net.backward(&grad)?;
            adam_step(clf.net.params_mut(), &adam)?;
            sum += loss;
            count += 1;
            report.steps += 1;
        }
        report.epoch_losses.push(sum / count as f64);
        log::info!("classifier epoch {epoch}: loss {:.5}", sum / count as f64);
    }
    clf.training.epochs = config.epochs;
    clf.training.steps = report.steps;
    clf.training.final_loss = report.epoch_losses.last().copied();
    Ok((clf, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusIdentity {
    Plain,
    DecryptedStatic,
    DecryptedDynamic,
}

impl fmt::Display for CorpusIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorpusIdentity::Plain => "plain",
            CorpusIdentity::DecryptedStatic => "decrypted-static",
            CorpusIdentity::DecryptedDynamic => "decrypted-dynamic",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub corpus: CorpusIdentity,
    pub samples: usize,
    pub accuracy: f64,
    /// Mean per-pixel squared error on the [0,1] scale.
    pub mse: f64,
    /// `10 log10(1 / mse)`; infinite for identical images.
    pub psnr: f64,
    pub corpus_digest: Option<String>,
    pub checkpoint_digest: Option<String>,
}

pub fn psnr(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

impl EvalReport {
    pub fn psnr_text(&self) -> String {
        if self.psnr.is_infinite() {
            "inf".into()
        } else {
            format!("{:.3}", self.psnr)
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "corpus: {}\nsamples: {}\naccuracy: {:.4}\nmse: {:.6}\npsnr_db: {}\n",
            self.corpus,
            self.samples,
            self.accuracy,
            self.mse,
            self.psnr_text()
        );
        if let Some(d) = &self.corpus_digest {
            s.push_str(&format!("corpus_digest: {d}\n"));
        }
        if let Some(d) = &self.checkpoint_digest {
            s.push_str(&format!("checkpoint_digest: {d}\n"));
        }
        s
    }

    /// One JSON object, no trailing newline.
    pub fn to_json_line(&self) -> String {
        let psnr = if self.psnr.is_finite() {
            serde_json::json!(self.psnr)
        } else {
            serde_json::json!("inf")
        };
        serde_json::json!({
            "corpus": self.corpus,
            "samples": self.samples,
            "accuracy": self.accuracy,
            "mse": self.mse,
            "psnr_db": psnr,
            "corpus_digest": self.corpus_digest,
            "checkpoint_digest": self.checkpoint_digest,
        })
        .to_string()
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Scores `decrypted` images against their plain counterparts and labels.
pub fn score(
    clf: &Classifier,
    corpus: CorpusIdentity,
    decrypted: &[GrayImage],
    plains: &[GrayImage],
    labels: &[u8],
) -> Result<EvalReport, NetError> {
    if decrypted.is_empty() || decrypted.len() != labels.len() || decrypted.len() != plains.len() {
        return Err(NetError::Data(format!(
            "{} decrypted images, {} plain images, {} labels",
            decrypted.len(),
            plains.len(),
            labels.len()
        )));
    }
    if let Some((d, p)) = decrypted.iter().zip(plains).find(|(d, p)| d.side() != p.side()) {
        return Err(NetError::SideMismatch {
            expected: p.side(),
            found: d.side(),
        });
    }
    let accuracy = clf.accuracy(decrypted, labels)?;
    let mse = crate::image::mean_squared_error(decrypted, plains);
    Ok(EvalReport {
        corpus,
        samples: decrypted.len(),
        accuracy,
        mse,
        psnr: psnr(mse),
        corpus_digest: None,
        checkpoint_digest: None,
    })
}

/// SHA-256 of a checkpoint file, for report provenance.
pub fn file_digest(path: impl AsRef<Path>) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Ten visually distinct synthetic classes: a bar at a class-specific row.
    fn toy(count: usize, seed: u64) -> Vec<LabeledImage> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|index| {
                let label = (index % 10) as u8;
                let mut img = GrayImage::new(28, (0..784).map(|_| rng.random_range(0..40)).collect()).unwrap();
                let row = 2 + label as usize * 2 + rng.random_range(0..2);
                for x in 4..24 {
                    img.set(x, row, 255);
                }
                LabeledImage { image: img, label, index }
            })
            .collect()
    }

    #[test]
    fn lenet_shapes() {
        let clf = Classifier::new(ClassifierConfig::default()).unwrap();
        let imgs = vec![GrayImage::filled(28, 3); 3];
        assert_eq!(clf.logits(&imgs).unwrap().len(), 3);
        // other sides are resized first
        assert_eq!(clf.predict(&[GrayImage::filled(32, 3)]).unwrap().len(), 1);
    }

    #[test]
    fn learns_toy_classes_deterministically() {
        let train = toy(400, 1);
        let test = toy(100, 2);
        let cfg = ClassifierConfig {
            epochs: 3,
            batch_size: 20,
            seed: 4,
            ..Default::default()
        };
        let (clf, report) = train_classifier(cfg, &train).unwrap();
        assert!(report.epoch_losses[2] < report.epoch_losses[0]);
        let imgs: Vec<GrayImage> = test.iter().map(|t| t.image.clone()).collect();
        let labels: Vec<u8> = test.iter().map(|t| t.label).collect();
        let acc = clf.accuracy(&imgs, &labels).unwrap();
        assert!(acc > 0.9, "accuracy {acc}");
        let (again, _) = train_classifier(cfg, &train).unwrap();
        assert_eq!(again.accuracy(&imgs, &labels).unwrap(), acc);
    }

    #[test]
    fn score_exact_images() {
        let test = toy(50, 3);
        let clf = Classifier::new(ClassifierConfig::default()).unwrap();
        let imgs: Vec<GrayImage> = test.iter().map(|t| t.image.clone()).collect();
        let labels: Vec<u8> = test.iter().map(|t| t.label).collect();
        let r = score(&clf, CorpusIdentity::Plain, &imgs, &imgs, &labels).unwrap();
        assert_eq!(r.mse, 0.0);
        assert!(r.psnr.is_infinite());
        assert_eq!(r.accuracy, clf.accuracy(&imgs, &labels).unwrap());
        assert!(r.to_json_line().contains("\"psnr_db\":\"inf\""));
        assert!(r.to_text().contains("psnr_db: inf"));
        assert_eq!(r, score(&clf, CorpusIdentity::Plain, &imgs, &imgs, &labels).unwrap());
        assert!(score(&clf, CorpusIdentity::Plain, &imgs, &imgs, &labels[1..]).is_err());
    }

    #[test]
    fn psnr_values() {
        assert!((psnr(0.01) - 20.0).abs() < 1e-12);
        assert!(psnr(0.0).is_infinite());
    }

    #[test]
    fn checkpoint_round_trip() {
        let clf = Classifier::new(ClassifierConfig {
            seed: 8,
            ..Default::default()
        })
        .unwrap();
        let back = Classifier::from_bytes(&clf.to_bytes().unwrap()).unwrap();
        let imgs = toy(5, 9).into_iter().map(|t| t.image).collect::<Vec<_>>();
        assert_eq!(clf.logits(&imgs).unwrap(), back.logits(&imgs).unwrap());
        assert_eq!(back.config.seed, 8);
    }
}
