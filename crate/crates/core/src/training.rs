//! Adversarial training: Wasserstein loss with gradient penalty, L1
//! reconstruction, Adam with a cosine learning-rate schedule, validation-driven
//! model selection and checkpoints.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{NormalizationStats, SplitData, Variable};
use crate::error::{Error, Result};
use crate::evaluation::{self, BoxStats};
use crate::io;
use crate::nets::{Critic, CriticConfig, Generator, GeneratorConfig, ParamSet, Pass, RunningStats, Variant, RESOLUTION};
use crate::tensor::{grad, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda_r: f64,
    pub lambda_p: f64,
    pub eta_max: f64,
    pub eta_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub critic_updates_per_gen: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            epochs: 50,
            lambda_r: 500.0,
            lambda_p: 10.0,
            eta_max: 1e-4,
            eta_min: 1e-16,
            beta1: 0.5,
            beta2: 0.999,
            adam_eps: 1e-8,
            critic_updates_per_gen: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::config(format!("batch_size must be at least 2 for batch statistics, got {}", self.batch_size)));
        }
        if self.epochs == 0 || self.critic_updates_per_gen == 0 {
            return Err(Error::config("epochs and critic_updates_per_gen must be positive"));
        }
        for (name, v) in [("lambda_r", self.lambda_r), ("lambda_p", self.lambda_p), ("eta_max", self.eta_max), ("eta_min", self.eta_min), ("adam_eps", self.adam_eps)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.eta_min > self.eta_max {
            return Err(Error::config("eta_min exceeds eta_max"));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }

    /// Steps per epoch for `pairs` (sample, time) pairs; the last batch wraps.
    pub fn steps_per_epoch(&self, pairs: usize) -> usize {
        pairs.div_ceil(self.batch_size)
    }
}

/// `eta_min + (eta_max - eta_min) (1 + cos(pi step_c / step_f)) / 2`.
pub fn cosine_lr(step_c: usize, step_f: usize, eta_min: f64, eta_max: f64) -> f64 {
    assert!(step_f > 0 && step_c <= step_f, "cosine_lr needs 0 <= step_c <= step_f, step_f > 0");
    eta_min + 0.5 * (eta_max - eta_min) * (1.0 + (PI * step_c as f64 / step_f as f64).cos())
}

/// Per-sample `eps * real + (1 - eps) * fake`.
pub fn interpolate_samples<T: Scalar>(real: &Tensor<T>, fake: &Tensor<T>, eps: &[f64]) -> Result<Tensor<T>> {
    if real.shape() != fake.shape() || real.rank() == 0 || real.shape()[0] != eps.len() {
        return Err(Error::Shape(format!("cannot interpolate {:?} and {:?} with {} weights", real.shape(), fake.shape(), eps.len())));
    }
    let mut bshape = vec![1; real.rank()];
    bshape[0] = eps.len();
    let e = Tensor::from_f64(eps, &bshape).expand(real.shape());
    let one_minus: Vec<f64> = eps.iter().map(|e| 1.0 - e).collect();
    let f = Tensor::from_f64(&one_minus, &bshape).expand(real.shape());
    Ok(real.mul(&e).add(&fake.mul(&f)))
}

/// Mean over the batch of `(||d critic / d x_bar||_2 - 1)^2`, with the gradient
/// of each sample's score taken over all elements of that sample's input.
///
/// `critic` maps a tracked copy of `x_bar` to per-sample scores `[B]`. The
/// result stays differentiable with respect to the critic parameters.
pub fn gradient_penalty_with<T: Scalar>(x_bar: &Tensor<T>, critic: impl FnOnce(&Tensor<T>) -> Result<Tensor<T>>) -> Result<Tensor<T>> {
    let x = x_bar.detach().tracked_leaf();
    let b = x.shape()[0];
    let scores = critic(&x)?;
    if scores.shape() != [b] {
        return Err(Error::Shape(format!("critic scores have shape {:?}, expected [{b}]", scores.shape())));
    }
    let g = grad(&scores.sum(), &[&x], true).pop().flatten().unwrap_or_else(|| Tensor::zeros(x.shape()));
    let norms = g.reshape(&[b, x.numel() / b]).sq_norm_rows().sqrt();
    if let Some(bad) = norms.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::numerical(format!("non-finite critic gradient norm {bad} in the gradient penalty")));
    }
    Ok(norms.add_scalar(-1.0).square().mean())
}

pub fn gradient_penalty<T: Scalar>(critic: &Critic<T>, k: &Tensor<T>, t: &Tensor<T>, x_bar: &Tensor<T>) -> Result<Tensor<T>> {
    gradient_penalty_with(x_bar, |x| critic.forward(k, x, t, &mut Pass::train_no_dropout()))
}

/// Adam with bias correction; moments are kept per parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new<T: Scalar>(ps: &ParamSet<T>, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros = || ps.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Adam { beta1, beta2, eps, t: 0, m: zeros(), v: zeros() }
    }

    /// One update; parameters without a gradient are left untouched.
    pub fn step<T: Scalar>(&mut self, ps: &mut ParamSet<T>, grads: &[Option<Tensor<T>>], lr: f64) -> Result<()> {
        if grads.len() != ps.len() {
            return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), ps.len())));
        }
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for (i, g) in grads.iter().enumerate() {
            let Some(g) = g else { continue };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let gd = g.data();
            ps.tensors_mut()[i].update_data(|p| {
                for j in 0..p.len() {
                    let gj = gd[j].f64();
                    let mj = b1 * m[j] as f64 + (1.0 - b1) * gj;
                    let vj = b2 * v[j] as f64 + (1.0 - b2) * gj * gj;
                    m[j] = mj as f32;
                    v[j] = vj as f32;
                    let upd = lr * (mj / c1) / ((vj / c2).sqrt() + eps);
                    p[j] = T::c(p[j].f64() - upd);
                }
            });
        }
        Ok(())
    }
}

/// One minibatch of (k, t, x) on the training grid.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[B, 1, H, W]`.
    pub k: Tensor,
    /// `[B]`.
    pub t: Tensor,
    /// `[B, C, H, W]`.
    pub x: Tensor,
}

impl Batch {
    /// Gathers `(sample, snapshot)` pairs from a split.
    pub fn gather(data: &SplitData, variable: Variable, pairs: &[(usize, usize)]) -> Result<Self> {
        let r0 = data.records.first().ok_or_else(|| Error::data("cannot batch an empty split"))?;
        let (h, w) = (r0.height, r0.width);
        if h != RESOLUTION || w != RESOLUTION {
            return Err(Error::Shape(format!("training grid must be {RESOLUTION}x{RESOLUTION}, dataset is {h}x{w}")));
        }
        let c = variable.channels();
        let b = pairs.len();
        let mut k = Vec::with_capacity(b * h * w);
        let mut t = Vec::with_capacity(b);
        let mut x = Vec::with_capacity(b * c * h * w);
        for &(i, n) in pairs {
            let r = &data.records[i];
            k.extend_from_slice(&r.k);
            t.push(r.t[n]);
            x.extend_from_slice(variable.target(r, n));
        }
        Ok(Batch { k: Tensor::new(k, &[b, 1, h, w]), t: Tensor::new(t, &[b]), x: Tensor::new(x, &[b, c, h, w]) })
    }

    pub fn len(&self) -> usize {
        self.t.numel()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CriticLosses {
    /// `-adversarial + lambda_p * penalty`.
    pub loss: f64,
    /// `mean C(real) - mean C(fake)`.
    pub adversarial: f64,
    pub penalty: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorLosses {
    /// `-mean C(fake) + lambda_r * reconstruction`.
    pub loss: f64,
    pub adversarial: f64,
    /// Mean absolute error over all elements, normalized units.
    pub reconstruction: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub critic: CriticLosses,
    pub generator: GeneratorLosses,
}

/// Networks, optimizers and the sampling RNG.
pub struct TrainState {
    pub cfg: TrainConfig,
    pub variable: Variable,
    pub generator: Generator,
    pub critic: Critic,
    pub opt_g: Adam,
    pub opt_c: Adam,
    pub rng: ChaCha8Rng,
    pub step_c: usize,
    pub step_f: usize,
}

impl TrainState {
    pub fn new(variant: Variant, variable: Variable, cfg: &TrainConfig, step_f: usize) -> Result<Self> {
        cfg.validate()?;
        let generator = Generator::new(&GeneratorConfig::new(variant, variable.channels()), cfg.seed)?;
        let critic = Critic::new(&CriticConfig::new(variable.channels()), cfg.seed.wrapping_add(1))?;
        let opt_g = Adam::new(generator.params(), cfg.beta1, cfg.beta2, cfg.adam_eps);
        let opt_c = Adam::new(critic.params(), cfg.beta1, cfg.beta2, cfg.adam_eps);
        Ok(TrainState {
            cfg: cfg.clone(),
            variable,
            generator,
            critic,
            opt_g,
            opt_c,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2)),
            step_c: 0,
            step_f: step_f.max(1),
        })
    }

    pub fn lr(&self) -> f64 {
        cosine_lr(self.step_c.min(self.step_f), self.step_f, self.cfg.eta_min, self.cfg.eta_max)
    }

    /// Training-mode generator output, recorded for the generator update.
    pub fn generate(&mut self, batch: &Batch) -> Result<Tensor> {
        self.generator.forward(&batch.k, &batch.t, &mut Pass::train(&mut self.rng))
    }
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numerical(format!("{name} is not finite ({v})")))
    }
}

/// Critic loss for a batch and a (detached) generated sample; also returns the
/// loss tensor for differentiation.
pub fn critic_loss(state: &mut TrainState, batch: &Batch, fake: &Tensor) -> Result<(Tensor, CriticLosses)> {
    let fake = fake.detach();
    let critic = &state.critic;
    let real_score = critic.forward(&batch.k, &batch.x, &batch.t, &mut Pass::train_no_dropout())?.mean();
    let fake_score = critic.forward(&batch.k, &fake, &batch.t, &mut Pass::train_no_dropout())?.mean();
    let eps: Vec<f64> = (0..batch.len()).map(|_| state.rng.random::<f64>()).collect();
    let x_bar = interpolate_samples(&batch.x, &fake, &eps)?;
    let penalty = gradient_penalty(critic, &batch.k, &batch.t, &x_bar)?;
    let adversarial = real_score.sub(&fake_score);
    let loss = adversarial.neg().add(&penalty.scale(state.cfg.lambda_p));
    let l = CriticLosses {
        loss: finite("critic loss", loss.item().f64())?,
        adversarial: adversarial.item() as f64,
        penalty: penalty.item() as f64,
    };
    Ok((loss, l))
}

/// One Adam update of the critic with the generator frozen.
pub fn critic_step(state: &mut TrainState, batch: &Batch, fake: &Tensor) -> Result<CriticLosses> {
    let (loss, l) = critic_loss(state, batch, fake)?;
    let params: Vec<&Tensor> = state.critic.params().tensors().iter().collect();
    let grads = grad(&loss, &params, false);
    drop(params);
    let lr = state.lr();
    state.opt_c.step(state.critic.params_mut(), &grads, lr)?;
    if !state.critic.params().all_finite() {
        return Err(Error::numerical("critic parameters became non-finite"));
    }
    Ok(l)
}

/// Generator loss on a recorded generator output.
pub fn generator_loss(state: &TrainState, batch: &Batch, fake: &Tensor) -> Result<(Tensor, GeneratorLosses)> {
    let score = state.critic.forward(&batch.k, fake, &batch.t, &mut Pass::train_no_dropout())?.mean();
    let recon = fake.sub(&batch.x).abs().mean();
    let loss = score.neg().add(&recon.scale(state.cfg.lambda_r));
    let l = GeneratorLosses {
        loss: finite("generator loss", loss.item().f64())?,
        adversarial: -(score.item() as f64),
        reconstruction: recon.item() as f64,
    };
    Ok((loss, l))
}

/// One Adam update of the generator with the critic frozen.
pub fn generator_step(state: &mut TrainState, batch: &Batch, fake: &Tensor) -> Result<GeneratorLosses> {
    let (loss, l) = generator_loss(state, batch, fake)?;
    let params: Vec<&Tensor> = state.generator.params().tensors().iter().collect();
    let grads = grad(&loss, &params, false);
    drop(params);
    let lr = state.lr();
    state.opt_g.step(state.generator.params_mut(), &grads, lr)?;
    if !state.generator.params().all_finite() {
        return Err(Error::numerical("generator parameters became non-finite"));
    }
    Ok(l)
}

/// Critic update(s) followed by one generator update on the same batch.
pub fn train_step(state: &mut TrainState, batch: &Batch, epoch: usize) -> Result<StepLosses> {
    let lr = state.lr();
    let fake = state.generate(batch)?;
    let mut critic = CriticLosses::default();
    for _ in 0..state.cfg.critic_updates_per_gen {
        critic = critic_step(state, batch, &fake)?;
    }
    let generator = generator_step(state, batch, &fake)?;
    let step = state.step_c;
    state.step_c += 1;
    Ok(StepLosses { step, epoch, lr, critic, generator })
}

/// Validation statistics after one epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub per_sample: Vec<f64>,
    pub summary: BoxStats,
    pub mean_critic_loss: f64,
    pub mean_generator_loss: f64,
    pub mean_reconstruction: f64,
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochMetrics>,
    pub losses: Vec<StepLosses>,
    pub best_epoch: usize,
    pub best_mean: f64,
    pub wall_time: f64,
    pub step_f: usize,
}

/// Every `(sample, snapshot)` pair of a split.
pub fn all_pairs(data: &SplitData) -> Vec<(usize, usize)> {
    data.records.iter().enumerate().flat_map(|(i, r)| (0..r.nt()).map(move |n| (i, n))).collect()
}

/// Batches of one epoch: a seeded shuffle, the last batch wrapping to the start.
pub fn epoch_batches(pairs: &[(usize, usize)], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<(usize, usize)>> {
    let mut order = pairs.to_vec();
    order.shuffle(rng);
    let steps = order.len().div_ceil(batch_size);
    (0..steps).map(|s| (0..batch_size).map(|j| order[(s * batch_size + j) % order.len()]).collect()).collect()
}

fn check_splits(train: &SplitData, val: &SplitData) -> Result<()> {
    if train.records.is_empty() || val.records.is_empty() {
        return Err(Error::data("training needs nonempty training and validation splits"));
    }
    if train.stats() != val.stats() {
        return Err(Error::data("training and validation splits were normalized with different statistics"));
    }
    if train.nt() != val.nt() {
        return Err(Error::data("training and validation splits have different snapshot counts"));
    }
    Ok(())
}

/// Runs `epochs × ⌈M·Nt/B⌉` steps, validating after every epoch. With
/// `out`, writes `history.csv`, `losses.csv` and the `best` and `last`
/// checkpoints.
pub fn train(train: &SplitData, val: &SplitData, variant: Variant, variable: Variable, cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    check_splits(train, val)?;
    let start = Instant::now();
    let pairs = all_pairs(train);
    let steps = cfg.steps_per_epoch(pairs.len());
    let step_f = cfg.epochs * steps;
    let mut state = TrainState::new(variant, variable, cfg, step_f)?;
    if let Some(dir) = out {
        io::create_dir(dir)?;
    }
    let mut history: Vec<EpochMetrics> = Vec::with_capacity(cfg.epochs);
    let mut losses = Vec::with_capacity(step_f);
    let (mut best_epoch, mut best_mean) = (0, f64::INFINITY);
    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        let first = losses.len();
        for pairs in epoch_batches(&pairs, cfg.batch_size, &mut state.rng) {
            let batch = Batch::gather(train, variable, &pairs)?;
            let l = train_step(&mut state, &batch, epoch).map_err(|e| {
                if let Some(dir) = out {
                    log::error!("training diverged at step {}; last checkpoint kept in {}", state.step_c, dir.display());
                }
                e
            })?;
            log::debug!("epoch {epoch} step {} critic {:.4e} generator {:.4e}", l.step, l.critic.loss, l.generator.loss);
            losses.push(l);
        }
        let per_sample = evaluation::per_sample_rmse(&state.generator, val, variable)?;
        let summary = evaluation::box_stats(&per_sample)?;
        let el = &losses[first..];
        let avg = |f: &dyn Fn(&StepLosses) -> f64| el.iter().map(f).sum::<f64>() / el.len().max(1) as f64;
        let m = EpochMetrics {
            epoch,
            summary,
            mean_critic_loss: avg(&|l| l.critic.loss),
            mean_generator_loss: avg(&|l| l.generator.loss),
            mean_reconstruction: avg(&|l| l.generator.reconstruction),
            per_sample,
            wall_time: t0.elapsed().as_secs_f64(),
        };
        log::info!("epoch {epoch}: validation relative RMSE mean {:.4} median {:.4}", m.summary.mean, m.summary.q50);
        let improved = m.summary.mean < best_mean;
        if improved {
            best_mean = m.summary.mean;
            best_epoch = epoch;
        }
        if let Some(dir) = out {
            let ck = Checkpoint::capture(&state, train.stats(), epoch, m.summary.mean);
            ck.save(&dir.join("last"))?;
            if improved {
                ck.save(&dir.join("best"))?;
            }
        }
        history.push(m);
        if let Some(dir) = out {
            write_history_csv(&dir.join("history.csv"), &history)?;
            write_losses_csv(&dir.join("losses.csv"), &losses)?;
        }
    }
    Ok(TrainOutcome { history, losses, best_epoch, best_mean, wall_time: start.elapsed().as_secs_f64(), step_f })
}

/// `epoch,mean,q25,q50,q75,outliers` per epoch.
pub fn history_csv(history: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,mean,q25,q50,q75,outliers\n");
    for m in history {
        let b = &m.summary;
        s += &format!("{},{:.9e},{:.9e},{:.9e},{:.9e},{}\n", m.epoch, b.mean, b.q25, b.q50, b.q75, b.outliers.len());
    }
    s
}

pub fn write_history_csv(path: &Path, history: &[EpochMetrics]) -> Result<()> {
    std::fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}

pub fn losses_csv(losses: &[StepLosses]) -> String {
    let mut s = String::from("step,epoch,lr,critic_loss,critic_adversarial,gradient_penalty,generator_loss,generator_adversarial,reconstruction\n");
    for l in losses {
        s += &format!(
            "{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            l.step, l.epoch, l.lr, l.critic.loss, l.critic.adversarial, l.critic.penalty, l.generator.loss, l.generator.adversarial, l.generator.reconstruction
        );
    }
    s
}

pub fn write_losses_csv(path: &Path, losses: &[StepLosses]) -> Result<()> {
    std::fs::write(path, losses_csv(losses)).map_err(|e| Error::io(path, e))
}

pub const CHECKPOINT_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsEntry {
    pub name: String,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Generator weights plus everything needed to run it on new inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub schema_version: u32,
    pub generator: GeneratorConfig,
    pub variable: Variable,
    pub epoch: usize,
    pub step: usize,
    /// Absent for a checkpoint that was never validated.
    pub validation_mean: Option<f64>,
    pub stats: NormalizationStats,
    pub train: TrainConfig,
    pub params: Vec<ParamEntry>,
    pub running_stats: Vec<StatsEntry>,
    pub checksums: BTreeMap<String, String>,
}

pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub values: Vec<f32>,
}

impl Checkpoint {
    pub fn capture(state: &TrainState, stats: &NormalizationStats, epoch: usize, validation_mean: f64) -> Self {
        Self::from_generator(&state.generator, state.variable, stats, &state.cfg, epoch, state.step_c, Some(validation_mean))
    }

    pub fn from_generator(
        g: &Generator,
        variable: Variable,
        stats: &NormalizationStats,
        cfg: &TrainConfig,
        epoch: usize,
        step: usize,
        validation_mean: Option<f64>,
    ) -> Self {
        let params = g.params().iter().map(|(n, t)| ParamEntry { name: n.to_string(), shape: t.shape().to_vec() }).collect();
        let values = g.params().tensors().iter().flat_map(|t| t.data().iter().copied()).collect();
        let running_stats = g.stats().snapshot().into_iter().map(|s| StatsEntry { name: s.name, mean: s.mean, var: s.var }).collect();
        Checkpoint {
            manifest: CheckpointManifest {
                schema_version: CHECKPOINT_SCHEMA,
                generator: g.config().clone(),
                variable,
                epoch,
                step,
                validation_mean,
                stats: *stats,
                train: cfg.clone(),
                params,
                running_stats,
                checksums: BTreeMap::new(),
            },
            values,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<CheckpointManifest> {
        io::create_dir(dir)?;
        let sum = io::write_f32(&dir.join("generator.f32"), self.values.iter().copied())?;
        let mut m = self.manifest.clone();
        m.checksums.insert("generator.f32".into(), sum);
        io::write_json(&dir.join("checkpoint.json"), &m)?;
        Ok(m)
    }

    /// Loads a checkpoint directory (or its `checkpoint.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let dir = if path.is_dir() { path } else { path.parent().unwrap_or(Path::new(".")) };
        let manifest: CheckpointManifest = io::read_json(&dir.join("checkpoint.json"))?;
        if manifest.schema_version != CHECKPOINT_SCHEMA {
            return Err(Error::data(format!("unsupported checkpoint schema {}", manifest.schema_version)));
        }
        manifest.stats.validate()?;
        let len = manifest.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
        let values = io::read_f32(&dir.join("generator.f32"), len, manifest.checksums.get("generator.f32").map(String::as_str))?;
        Ok(Checkpoint { manifest, values })
    }

    /// Rebuilds the generator with the stored weights and running statistics.
    pub fn generator(&self) -> Result<Generator> {
        let m = &self.manifest;
        let mut g = Generator::new(&m.generator, 0)?;
        if g.params().len() != m.params.len() {
            return Err(Error::data(format!("checkpoint has {} tensors, architecture has {}", m.params.len(), g.params().len())));
        }
        let mut off = 0;
        for (i, p) in m.params.iter().enumerate() {
            let t = g.params().get(i);
            if g.params().names()[i] != p.name || t.shape() != p.shape.as_slice() {
                return Err(Error::data(format!("checkpoint parameter {} {:?} does not match the architecture", p.name, p.shape)));
            }
            let n = t.numel();
            g.params_mut().set_values(i, &self.values[off..off + n])?;
            off += n;
        }
        let stats = m.running_stats.iter().map(|s| RunningStats { name: s.name.clone(), mean: s.mean.clone(), var: s.var.clone() }).collect();
        g.stats().restore(stats)?;
        Ok(g)
    }
}

/// Normalized L1 reconstruction error of a generator over all pairs of a split,
/// in inference mode.
pub fn reconstruction_error(g: &Generator, data: &SplitData, variable: Variable) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in &data.records {
        let pred = evaluation::predict_record(g, r)?;
        let per = pred.len() / r.nt();
        for n in 0..r.nt() {
            let target = variable.target(r, n);
            total += pred[n * per..(n + 1) * per].iter().zip(target).map(|(a, b)| (a - b).abs() as f64).sum::<f64>();
            count += per;
        }
    }
    Ok(total / count.max(1) as f64)
}
