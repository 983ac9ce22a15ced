use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pipeline::SampleRecord;
use crate::scalar::Real;
use crate::surrogate::loss::{check_records, draw_probes, evaluate, evaluate_batch, LossReport, Metrics};
use crate::surrogate::params::SurrogateParams;
use crate::SurrogateError;

/// Adam hyperparameters and the data schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Stop after this many optimizer steps in total, if set.
    pub max_steps: Option<usize>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 3e-4, batch: 512, epochs: 10, seed: 0, max_steps: None, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), SurrogateError> {
        if !(self.lr > 0.0) || self.batch == 0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(SurrogateError::Config(format!("invalid training config {self:?}")));
        }
        Ok(())
    }
}

/// One row of the training history.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub steps: usize,
    /// Mean of the batch losses seen during the epoch.
    pub train: LossReport,
    pub val_loss: Option<LossReport>,
    pub val: Option<Metrics>,
}

/// Parameters plus Adam moments; resumable between calls.
#[derive(Clone, Debug, PartialEq)]
pub struct Trainer<T> {
    pub params: SurrogateParams<T>,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: usize,
    pub epoch: usize,
}

fn epoch_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl<T: Real> Trainer<T> {
    pub fn new(params: SurrogateParams<T>) -> Self {
        let n = params.n_params();
        Self { params, m: vec![T::zero(); n], v: vec![T::zero(); n], step: 0, epoch: 0 }
    }

    fn adam(&mut self, grad: &[T], cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let one = T::one();
        let c1 = one - b1.powi(self.step as i32);
        let c2 = one - b2.powi(self.step as i32);
        let lr = T::lit(cfg.lr);
        let eps = T::lit(cfg.eps);
        let mut flat = self.params.flatten();
        for k in 0..flat.len() {
            let g = grad[k];
            self.m[k] = b1 * self.m[k] + (one - b1) * g;
            self.v[k] = b2 * self.v[k] + (one - b2) * g * g;
            flat[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + eps);
        }
        self.params.assign(&flat);
    }

    /// Runs `cfg.epochs` further epochs. On a non-finite loss or update the parameters are
    /// left at the last finite state and [`SurrogateError::Diverged`] is returned.
    pub fn run(&mut self, train: &[SampleRecord], val: &[SampleRecord], cfg: &TrainConfig) -> Result<Vec<EpochReport>, SurrogateError> {
        cfg.check()?;
        self.params.check()?;
        if train.is_empty() {
            return Err(SurrogateError::EmptyDataset);
        }
        let dim = self.params.config.dim();
        check_records(&train.iter().collect::<Vec<_>>(), dim, 0)?;
        check_records(&val.iter().collect::<Vec<_>>(), dim, train.len())?;
        let mut history = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            if cfg.max_steps.is_some_and(|m| self.step >= m) {
                break;
            }
            let mut rng = epoch_rng(cfg.seed, self.epoch as u64);
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut rng);
            let mut sum = LossReport::default();
            let mut batches = 0usize;
            for chunk in order.chunks(cfg.batch) {
                if cfg.max_steps.is_some_and(|m| self.step >= m) {
                    break;
                }
                let recs: Vec<&SampleRecord> = chunk.iter().map(|&i| &train[i]).collect();
                let probes = draw_probes(recs.len(), dim, &mut rng);
                let out = evaluate_batch(&self.params, &recs, &probes, false, true);
                let grad = out.param_grad.expect("gradient requested");
                if !out.report.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(SurrogateError::Diverged { step: self.step });
                }
                let backup = (self.params.clone(), self.m.clone(), self.v.clone(), self.step);
                self.adam(&grad, cfg);
                if !self.params.is_finite() {
                    (self.params, self.m, self.v, self.step) = backup;
                    return Err(SurrogateError::Diverged { step: self.step });
                }
                sum.l0 += out.report.l0;
                sum.l1 += out.report.l1;
                sum.l2 += out.report.l2;
                sum.total += out.report.total;
                batches += 1;
            }
            let nb = batches.max(1) as f64;
            let train_report = LossReport { l0: sum.l0 / nb, l1: sum.l1 / nb, l2: sum.l2 / nb, total: sum.total / nb };
            let (val_loss, val_metrics) = if val.is_empty() {
                (None, None)
            } else {
                let (l, m) = evaluate(&self.params, val, &mut epoch_rng(cfg.seed, u64::MAX))?;
                (Some(l), Some(m))
            };
            log::info!(
                "epoch {} steps {} loss {:.5} (l0 {:.5} l1 {:.5} l2 {:.5})",
                self.epoch,
                self.step,
                train_report.total,
                train_report.l0,
                train_report.l1,
                train_report.l2
            );
            history.push(EpochReport { epoch: self.epoch, steps: self.step, train: train_report, val_loss, val: val_metrics });
            self.epoch += 1;
        }
        Ok(history)
    }
}

/// Adam training from `params`; returns the trained weights and per-epoch history.
pub fn train<T: Real>(
    params: SurrogateParams<T>,
    train: &[SampleRecord],
    val: &[SampleRecord],
    cfg: &TrainConfig,
) -> Result<(SurrogateParams<T>, Vec<EpochReport>), SurrogateError> {
    let mut trainer = Trainer::new(params);
    let history = trainer.run(train, val, cfg)?;
    Ok((trainer.params, history))
}

/// Validation probes use a fixed stream so epochs are comparable.
pub fn validation_metrics<T: Real>(params: &SurrogateParams<T>, val: &[SampleRecord], seed: u64) -> Result<(LossReport, Metrics), SurrogateError> {
    evaluate(params, val, &mut epoch_rng(seed, u64::MAX))
}
