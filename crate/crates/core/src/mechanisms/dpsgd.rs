use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::accountant::{AccountOptions, StepAccountant};
use crate::dist::GGParams;
use crate::error::{domain, Result};
use crate::exec::{self, chunk_rng, derive_seed};
use crate::prv::MechanismSpec;

use super::data::Dataset;
use super::lbeta_clip;
use super::models::Model;

/// β-DP-SGD settings. `noise.sigma()` is the noise multiplier: each step
/// adds `N_β(0, σ·C)` per coordinate to the sum of clipped gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub noise: GGParams,
    pub clip_norm: f64,
    pub learning_rate: f64,
    pub expected_batch: usize,
    pub epochs: usize,
    pub delta: f64,
    /// Stop before the reported `ε` would exceed this.
    pub target_epsilon: Option<f64>,
}

impl TrainConfig {
    /// Checks the settings against a training set and returns `q`.
    pub fn sample_rate(&self, n: usize) -> Result<f64> {
        if !(self.clip_norm > 0.0) || !(self.learning_rate > 0.0) {
            return Err(domain("clip norm and learning rate must be positive"));
        }
        if self.expected_batch == 0 || self.epochs == 0 {
            return Err(domain("batch size and epochs must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(domain(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.expected_batch > n {
            return Err(domain(format!("expected batch {} exceeds the {n} training rows", self.expected_batch)));
        }
        Ok(self.expected_batch as f64 / n as f64)
    }

    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.expected_batch)
    }

    /// One step as an accountable mechanism: clipping to `C` and noise
    /// `σ·C` reduce to sensitivity 1 with scale `σ`.
    pub fn step_mechanism(&self, n: usize) -> Result<MechanismSpec> {
        MechanismSpec::new(self.noise, 1.0, Some(self.sample_rate(n)?), 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub params: Vec<f64>,
    pub log: Vec<EpochLog>,
    pub steps: usize,
    /// Whether the privacy budget stopped training early.
    pub halted: bool,
    pub sample_rate: f64,
}

impl TrainResult {
    pub fn final_test_acc(&self) -> f64 {
        self.log.last().map_or(0.0, |l| l.test_acc)
    }

    /// JSON lines, one object per epoch.
    pub fn write_log<W: Write>(&self, mut out: W) -> Result<()> {
        for l in &self.log {
            serde_json::to_writer(&mut out, l).map_err(std::io::Error::from)?;
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn accuracy(model: &dyn Model, params: &[f64], data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let hits: usize = exec::map_range(data.len(), |i| (model.predict(params, data.row(i)) == data.label(i)) as usize)
        .into_iter()
        .sum();
    hits as f64 / data.len() as f64
}

const ACCOUNT_TAG: u64 = 0xacc0;
const TRAIN_TAG: u64 = 0x7a1e;
const INIT_TAG: u64 = 0x1417;

struct Step<'a> {
    model: &'a dyn Model,
    train: &'a Dataset,
    cfg: &'a TrainConfig,
    q: f64,
    private: bool,
}

impl Step<'_> {
    fn run(&self, params: &mut [f64], rng: &mut impl Rng) -> Result<()> {
        let batch: Vec<usize> = if self.q >= 1.0 {
            (0..self.train.len()).collect()
        } else {
            (0..self.train.len()).filter(|_| rng.random::<f64>() < self.q).collect()
        };
        let p = self.model.num_params();
        let grads = exec::map_slice(&batch, |&i| {
            let mut g = vec![0.0; p];
            self.model.gradient(params, self.train.row(i), self.train.label(i), &mut g);
            if self.private {
                lbeta_clip(&g, self.cfg.noise.beta(), self.cfg.clip_norm)
            } else {
                Ok(g)
            }
        });
        let mut sum = vec![0.0; p];
        for g in grads {
            for (s, v) in sum.iter_mut().zip(g?) {
                *s += v;
            }
        }
        if self.private {
            let sampler = self.cfg.noise.scaled(self.cfg.clip_norm)?.sampler();
            for s in &mut sum {
                *s += sampler.draw(rng);
            }
        }
        let scale = self.cfg.learning_rate / self.cfg.expected_batch as f64;
        for (w, s) in params.iter_mut().zip(&sum) {
            *w -= scale * s;
        }
        Ok(())
    }
}

/// Trains with β-DP-SGD: Poisson batches at rate `q = L/|D|`, per-example
/// `ℓ_β` clipping, GG noise on the gradient sum, division by `L`. The
/// accountant composes one subsampled GG step per iteration and training
/// halts once the next step would exceed `cfg.target_epsilon`.
pub fn beta_dpsgd(
    model: &dyn Model,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    opts: &AccountOptions,
    seed: u64,
) -> Result<TrainResult> {
    let q = cfg.sample_rate(train.len())?;
    let per_epoch = cfg.steps_per_epoch(train.len());
    let total = per_epoch * cfg.epochs;
    let accountant = StepAccountant::new(&cfg.step_mechanism(train.len())?, opts, total, derive_seed(seed, ACCOUNT_TAG))?;
    let allowed = match cfg.target_epsilon {
        Some(e) => accountant.max_steps_within(e, cfg.delta)?,
        None => total,
    };
    let step = Step { model, train, cfg, q, private: true };
    let mut params = model.init(derive_seed(seed, INIT_TAG));
    let train_seed = derive_seed(seed, TRAIN_TAG);
    let mut log = Vec::new();
    for s in 0..allowed {
        step.run(&mut params, &mut chunk_rng(train_seed, s as u64))?;
        let done = s + 1;
        if done % per_epoch == 0 || done == allowed {
            log.push(EpochLog {
                epoch: done.div_ceil(per_epoch),
                epsilon: accountant.epsilon_after(done, cfg.delta)?,
                delta: cfg.delta,
                train_acc: accuracy(model, &params, train),
                test_acc: accuracy(model, &params, test),
            });
        }
    }
    Ok(TrainResult { params, log, steps: allowed, halted: allowed < total, sample_rate: q })
}

/// The same loop without clipping or noise, for the same number of epochs.
/// The logged `ε` is infinite.
pub fn train_nonprivate(
    model: &dyn Model,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainResult> {
    let q = cfg.sample_rate(train.len())?;
    let per_epoch = cfg.steps_per_epoch(train.len());
    let total = per_epoch * cfg.epochs;
    let step = Step { model, train, cfg, q, private: false };
    let mut params = model.init(derive_seed(seed, INIT_TAG));
    let train_seed = derive_seed(seed, TRAIN_TAG);
    let mut log = Vec::new();
    for s in 0..total {
        step.run(&mut params, &mut chunk_rng(train_seed, s as u64))?;
        if (s + 1) % per_epoch == 0 {
            log.push(EpochLog {
                epoch: (s + 1) / per_epoch,
                epsilon: f64::INFINITY,
                delta: 0.0,
                train_acc: accuracy(model, &params, train),
                test_acc: accuracy(model, &params, test),
            });
        }
    }
    Ok(TrainResult { params, log, steps: total, halted: false, sample_rate: q })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::mechanisms::{synthetic_blobs, ModelKind};

    fn opts() -> AccountOptions {
        AccountOptions::default().with_samples(50_000).with_half_bins(1 << 12)
    }

    fn cfg(sigma: f64) -> TrainConfig {
        TrainConfig {
            noise: GGParams::new(2.0, sigma).unwrap(),
            clip_norm: 1.0,
            learning_rate: 0.5,
            expected_batch: 100,
            epochs: 3,
            delta: 1e-5,
            target_epsilon: None,
        }
    }

    #[test]
    fn epsilon_grows_per_epoch_and_run_is_reproducible() {
        let data = synthetic_blobs(600, 5, 4.0, 1).unwrap();
        let (train, test) = data.split(0.2, 1);
        let model = ModelKind::Logistic.build(train.dim(), train.classes());
        let a = beta_dpsgd(model.as_ref(), &train, &test, &cfg(2.0), &opts(), 3).unwrap();
        let b = beta_dpsgd(model.as_ref(), &train, &test, &cfg(2.0), &opts(), 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.log.len(), 3);
        assert!(a.log.windows(2).all(|w| w[1].epsilon > w[0].epsilon));
    }

    #[test]
    fn huge_noise_is_chance_level() {
        // a single run is a random hyperplane; the average over seeds is chance
        let data = synthetic_blobs(500, 5, 4.0, 2).unwrap();
        let (train, test) = data.split(0.2, 2);
        let model = ModelKind::Logistic.build(train.dim(), train.classes());
        let mut c = cfg(1e6);
        c.epochs = 1;
        let accs: Vec<f64> = (0..60)
            .map(|s| beta_dpsgd(model.as_ref(), &train, &test, &c, &opts(), s).unwrap().final_test_acc())
            .collect();
        let m = crate::stats::mean(&accs);
        assert!((m - test.majority_rate()).abs() < 0.1, "{m}");
    }

    #[test]
    fn budget_error_before_first_step() {
        let data = synthetic_blobs(400, 3, 4.0, 3).unwrap();
        let (train, test) = data.split(0.2, 3);
        let model = ModelKind::Logistic.build(train.dim(), train.classes());
        let mut c = cfg(0.3);
        c.target_epsilon = Some(0.01);
        assert!(matches!(
            beta_dpsgd(model.as_ref(), &train, &test, &c, &opts(), 5),
            Err(Error::Budget { .. })
        ));
    }
}
