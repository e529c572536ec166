//! Gaussian negative log-likelihood training of the learned filter.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spd_cholesky;
use crate::nn::{NodeId, Tape};
use crate::rkn::{rkn_forward, RknArch, RknModel, RknStep};
use crate::ssm::{Dataset, Dynamics, Episode, InitialLaw};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `½ (ln det P + eᵀ P⁻¹ e + m ln 2π)`
pub fn gaussian_nll(e: &DVector<f64>, p: &DMatrix<f64>) -> Result<f64> {
    if p.shape() != (e.len(), e.len()) {
        return Err(Error::dim("error and covariance sizes differ"));
    }
    let chol = spd_cholesky(p, "covariance")?;
    let l = chol.l();
    let logdet: f64 = l.diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let quad = e.dot(&chol.solve(e));
    Ok(0.5 * (logdet + quad + e.len() as f64 * LN_2PI))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub l2_lambda: f64,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    /// Gradient-norm bound switched on after a divergence.
    pub clip_norm: f64,
    pub hidden: usize,
    /// Optional cap on the number of training episodes used.
    pub max_train_episodes: Option<usize>,
    /// Scenario mixes used when this config drives dataset generation.
    pub train_mix: Option<String>,
    pub val_mix: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 300,
            patience: 20,
            l2_lambda: 1e-4,
            seed: 0,
            clip_norm: 10.0,
            hidden: crate::rkn::DEFAULT_HIDDEN,
            max_train_episodes: None,
            train_mix: None,
            val_mix: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        positive(self.learning_rate, "learning_rate")?;
        positive(self.clip_norm, "clip_norm")?;
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return Err(Error::invalid("l2_lambda must be non-negative"));
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::invalid("batch_size and hidden must be positive"));
        }
        if self.max_epochs > 0 && (self.patience == 0 || self.patience > self.max_epochs) {
            return Err(Error::invalid("patience must be in 1..=max_epochs"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::Parse { line: e.line(), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub clipping: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub early_stop_epoch: Option<usize>,
    pub events: Vec<String>,
}

impl TrainHistory {
    pub fn write_csv<W: Write>(&self, preamble: &[String], mut w: W) -> Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "epoch,train_loss,val_loss")?;
        for e in &self.epochs {
            writeln!(w, "{},{},{}", e.epoch, e.train_loss, e.val_loss)?;
        }
        Ok(())
    }
}

/// Mean NLL of the corrected errors over a recorded sequence, as a node.
pub fn nll_node(tape: &mut Tape<'_>, steps: &[RknStep], truth: &[Vec<f64>]) -> Result<NodeId> {
    if steps.len() != truth.len() {
        return Err(Error::dim("run and truth lengths differ"));
    }
    let mut terms = Vec::with_capacity(steps.len());
    for (t, (s, x)) in steps.iter().zip(truth).enumerate() {
        let xt = tape.vector(x);
        let e = tape.sub(xt, s.x_corr)?;
        terms.push(tape.gaussian_nll(e, s.p_corr).map_err(|e| e.at_step(None, t))?);
    }
    tape.mean(&terms)
}

/// Mean NLL over time of one episode and its gradient with respect to the
/// flat parameter vector (no regularization).
pub fn episode_nll_grad(
    model: &RknModel,
    initial: &InitialLaw,
    dynamics: &Dynamics,
    episode: &Episode,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new(&model.params);
    let steps = rkn_forward(model, initial, dynamics, &episode.z, &mut tape)?;
    let loss = nll_node(&mut tape, &steps, &episode.x)?;
    let value = tape.scalar(loss);
    let grads = tape.backward(loss, &[1.0])?;
    Ok((value, grads.params))
}

pub fn episode_nll(model: &RknModel, initial: &InitialLaw, dynamics: &Dynamics, episode: &Episode) -> Result<f64> {
    let mut tape = Tape::new(&model.params);
    let steps = rkn_forward(model, initial, dynamics, &episode.z, &mut tape)?;
    let loss = nll_node(&mut tape, &steps, &episode.x)?;
    Ok(tape.scalar(loss))
}

/// Batch objective: mean over episodes of the mean-over-time NLL, plus
/// `l2_lambda * ||θ||²`. Gradients are reduced in episode order.
pub fn sequence_loss(
    model: &RknModel,
    initial: &InitialLaw,
    dynamics: &Dynamics,
    episodes: &[&Episode],
    l2_lambda: f64,
) -> Result<(f64, Vec<f64>)> {
    if episodes.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let per: Vec<(f64, Vec<f64>)> = episodes
        .par_iter()
        .map(|ep| {
            episode_nll_grad(model, initial, dynamics, ep).map_err(|e| match e {
                Error::AtStep { context, source } => Error::AtStep {
                    context: crate::error::StepContext { episode_id: Some(ep.episode_id), ..context },
                    source,
                },
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / episodes.len() as f64;
    let mut grad = vec![0.0; model.params.len()];
    let mut loss = 0.0;
    for (l, g) in &per {
        loss += l * scale;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v * scale;
        }
    }
    let theta = model.params.flat();
    loss += l2_lambda * model.params.squared_norm();
    for (acc, v) in grad.iter_mut().zip(theta) {
        *acc += 2.0 * l2_lambda * v;
    }
    Ok((loss, grad))
}

/// Mean NLL over a dataset, without regularization.
pub fn mean_nll(model: &RknModel, dataset: &Dataset) -> Result<f64> {
    let dynamics = dataset.model.dynamics();
    let losses: Vec<f64> = dataset
        .episodes
        .par_iter()
        .map(|ep| episode_nll(model, &dataset.initial, &dynamics, ep))
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            theta[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

fn clip(grad: &mut [f64], max_norm: f64) {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
}

fn check_compatible(arch: &RknArch, ds: &Dataset, what: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::invalid(format!("{what} set is empty")));
    }
    if ds.model.state_dim() != arch.m || ds.model.meas_dim() != arch.n {
        return Err(Error::dim(format!("{what} set dimensions do not match the model")));
    }
    Ok(())
}

/// Trains a freshly initialized model and returns the parameters of the
/// epoch with the lowest validation NLL.
pub fn train_rkn(
    config: &TrainConfig,
    model_init_seed: u64,
    train: &Dataset,
    val: &Dataset,
) -> Result<(RknModel, TrainHistory)> {
    let arch = RknArch::new(train.model.state_dim(), train.model.meas_dim(), config.hidden)?;
    train_from(config, RknModel::new(arch, model_init_seed), train, val, |_| {})
}

/// Same as [`train_rkn`] but starting from `model`, reporting each finished
/// epoch to `on_epoch`.
pub fn train_from(
    config: &TrainConfig,
    mut model: RknModel,
    train: &Dataset,
    val: &Dataset,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(RknModel, TrainHistory)> {
    config.validate()?;
    check_compatible(&model.arch, train, "training")?;
    check_compatible(&model.arch, val, "validation")?;
    let mut history = TrainHistory::default();
    if config.max_epochs == 0 {
        return Ok((model, history));
    }
    let dynamics = train.model.dynamics();
    let n_train = config.max_train_episodes.map_or(train.len(), |c| c.min(train.len()));
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut adam = Adam::new(model.params.len(), config.learning_rate);
    let mut clipping = false;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;

    let mut epoch = 0;
    while epoch < config.max_epochs {
        let snapshot = (model.params.flat().to_vec(), adam.clone());
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);

        let outcome = (|| -> Result<f64> {
            let mut total = 0.0;
            let mut batches = 0;
            for chunk in order.chunks(config.batch_size) {
                let batch: Vec<&Episode> = chunk.iter().map(|&i| &train.episodes[i]).collect();
                let (loss, mut grad) = sequence_loss(&model, &train.initial, &dynamics, &batch, config.l2_lambda)?;
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::Numerical("non-finite loss or gradient".into()));
                }
                if clipping {
                    clip(&mut grad, config.clip_norm);
                }
                adam.step(model.params.flat_mut(), &grad);
                total += loss;
                batches += 1;
            }
            let val_loss = mean_nll(&model, val)?;
            if !val_loss.is_finite() {
                return Err(Error::Numerical("non-finite validation loss".into()));
            }
            history.epochs.push(EpochRecord { epoch, train_loss: total / batches as f64, val_loss, clipping });
            Ok(val_loss)
        })();

        let val_loss = match outcome {
            Ok(v) => v,
            Err(err @ (Error::Numerical(_) | Error::AtStep { .. })) => {
                if clipping {
                    return Err(Error::Diverged(format!("epoch {epoch} with gradient clipping enabled: {err}")));
                }
                model.params.set_flat(&snapshot.0)?;
                adam = snapshot.1;
                clipping = true;
                history.events.push(format!(
                    "epoch {epoch}: divergence ({err}); restarted the epoch with gradient clipping at norm {}",
                    config.clip_norm
                ));
                continue;
            }
            Err(other) => return Err(other),
        };
        on_epoch(history.epochs.last().expect("epoch recorded"));

        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.params.flat().to_vec()));
            history.best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                history.early_stop_epoch = Some(epoch);
                history.events.push(format!("early stop at epoch {epoch}"));
                break;
            }
        }
        epoch += 1;
    }
    if let Some((_, params)) = best {
        model.params.set_flat(&params)?;
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nll_values() {
        let one = DMatrix::from_row_slice(1, 1, &[1.0]);
        let v = gaussian_nll(&DVector::from_column_slice(&[0.0]), &one).unwrap();
        assert!((v - 0.918_939).abs() < 1e-6);
        let v = gaussian_nll(&DVector::from_column_slice(&[1.0]), &one).unwrap();
        assert!((v - 1.418_939).abs() < 1e-6);
        assert!(gaussian_nll(&DVector::from_column_slice(&[1.0]), &DMatrix::from_row_slice(1, 1, &[0.0])).is_err());
    }

    #[test]
    fn nll_matches_dense_formula() {
        let p: DMatrix<f64> = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let e = DVector::from_column_slice(&[0.7, -1.1]);
        let inv = p.clone().try_inverse().unwrap();
        let dense = 0.5 * (p.determinant().ln() + (e.transpose() * inv * &e)[(0, 0)] + 2.0 * LN_2PI);
        assert!((gaussian_nll(&e, &p).unwrap() - dense).abs() < 1e-10);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig { patience: 400, ..Default::default() };
        assert!(bad.validate().is_err());
        let zero = TrainConfig { max_epochs: 0, ..Default::default() };
        assert!(zero.validate().is_ok());
        assert!(TrainConfig::from_json(r#"{"learning_rate": -1}"#).is_err());
        assert!(TrainConfig::from_json(r#"{"bogus": 1}"#).is_err());
        let c = TrainConfig::from_json(r#"{"max_epochs": 5, "patience": 2}"#).unwrap();
        assert_eq!(c.batch_size, 32);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut a = Adam::new(2, 0.1);
        let mut th = [1.0, -1.0];
        a.step(&mut th, &[3.0, -0.5]);
        assert!((th[0] - 0.9).abs() < 1e-8);
        assert!((th[1] + 0.9).abs() < 1e-8);
    }
}
