use rand::seq::SliceRandom;

use super::{images_to_tensor, DecryptionNet, NetError};
use crate::image::GrayImage;
use crate::nn::{adam_step, l2_penalty, mse_loss, AdamConfig, Mode, Scalar};
use crate::seed::{derive_rng, SHUFFLE};

/// L2 penalty weight on convolution weights.
pub const WEIGHT_DECAY: f64 = 0.01;
/// Lighter penalty for the 32x32 desk model, which underfits at 0.01.
pub const DESK_WEIGHT_DECAY: f64 = 1e-3;
const TRACE_LEN: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub weight_decay: f64,
    /// Seeds the minibatch order.
    pub seed: u64,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            batch_size: 64,
            adam: AdamConfig::default(),
            weight_decay: WEIGHT_DECAY,
            seed: 0,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    /// Static-key attack at desk scale: 40 epochs, batch 64, lr 1e-3, decay 1e-3.
    pub fn desk_attack(seed: u64) -> Self {
        Self {
            epochs: 40,
            weight_decay: DESK_WEIGHT_DECAY,
            seed,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean of `mse + penalty` over each epoch's batches.
    pub epoch_losses: Vec<f64>,
    /// Mean reconstruction MSE per epoch.
    pub epoch_mse: Vec<f64>,
    /// `mse + penalty` per optimizer step.
    pub step_losses: Vec<f64>,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct StepInfo {
    pub epoch: usize,
    pub batch: usize,
    pub step: usize,
    pub loss: f64,
    pub mse: f64,
}

/// Splits `order` into batches of `size`; a trailing batch of one sample is
/// folded into the previous batch since batchnorm needs two.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().unwrap().len() == 1 {
        out.pop();
        let start = order.len() - size - 1;
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

/// Minibatch Adam on `mse(net(cipher), plain) + weight_decay * sum ||W||^2`.
pub fn train<T: Scalar>(
    net: &mut DecryptionNet<T>,
    ciphers: &[GrayImage],
    plains: &[GrayImage],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepInfo),
) -> Result<TrainReport, NetError> {
    if ciphers.len() != plains.len() {
        return Err(NetError::Data(format!(
            "{} cipher images but {} plain images",
            ciphers.len(),
            plains.len()
        )));
    }
    if ciphers.len() < 2 {
        return Err(NetError::Data("need at least 2 training pairs".into()));
    }
    if cfg.batch_size < 2 {
        return Err(NetError::Data("batch size must be >= 2".into()));
    }
    let alpha = T::lit(cfg.weight_decay);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..ciphers.len()).collect();
    'epochs: for epoch in 0..cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut derive_rng(cfg.seed, SHUFFLE, &[epoch as u64]));
        let (mut loss_sum, mut mse_sum, mut count) = (0.0, 0.0, 0usize);
        for (batch, idx) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            if cfg.max_steps.is_some_and(|m| report.steps >= m) {
                break;
            }
            let x = images_to_tensor::<T>(&idx.iter().map(|&i| &ciphers[i]).collect::<Vec<_>>())?;
            let y = images_to_tensor::<T>(&idx.iter().map(|&i| &plains[i]).collect::<Vec<_>>())?;
            net.zero_grad();
            let out = net.forward(&x, Mode::Train)?;
            let (mse, grad) = mse_loss(&out, &y)?;
            net.backward(&grad)?;
            let penalty = l2_penalty(net.params_mut(), alpha);
            let loss = (mse + penalty).to_f64().unwrap();
            if !loss.is_finite() {
                let start = report.step_losses.len().saturating_sub(TRACE_LEN);
                return Err(NetError::NonFinite {
                    epoch,
                    batch,
                    loss,
                    trace: report.step_losses[start..].to_vec(),
                });
            }
            adam_step(net.params_mut(), &cfg.adam)?;
            let mse = mse.to_f64().unwrap();
            report.step_losses.push(loss);
            report.steps += 1;
            loss_sum += loss;
            mse_sum += mse;
            count += 1;
            on_step(&StepInfo {
                epoch,
                batch,
                step: report.steps,
                loss,
                mse,
            });
        }
        if count > 0 {
            report.epoch_losses.push(loss_sum / count as f64);
            report.epoch_mse.push(mse_sum / count as f64);
            log::info!(
                "epoch {epoch}: loss {:.6} mse {:.6} ({count} batches)",
                loss_sum / count as f64,
                mse_sum / count as f64
            );
        }
        if cfg.max_steps.is_some_and(|m| report.steps >= m) {
            break 'epochs;
        }
    }
    net.training.epochs += report.epoch_losses.len();
    net.training.steps += report.steps;
    net.training.final_loss = report.step_losses.last().copied();
    Ok(report)
}
