//! Proximal policy optimization of the layer generator.
//!
//! Each epoch samples episodes until the configured number of generation
//! steps is reached, scores every finished design against the spectral
//! target, remembers the best design seen so far, and then runs several
//! clipped-surrogate update passes over the batch.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::MaterialLibrary;
use crate::nn::{AdamConfig, AdamState, Checkpoint, Gradients, ParamStore, Tape};
use crate::policy::{structure_from_layers, Action, DesignVocabulary, Episode, Generator, NetworkConfig, VariantFlags};
use crate::reward::{compute_reward, RewardSpec};
use crate::structure::Structure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Generation steps per batch (EOS steps included).
    pub batch_steps: usize,
    pub max_length: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub update_epochs: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    /// Stop the update passes early once the approximate KL exceeds this.
    pub target_kl: Option<f64>,
    pub max_grad_norm: f64,
    /// Set from the task section, not from `[train]`.
    #[serde(skip)]
    pub seed: u64,
    pub workers: usize,
    pub flags: VariantFlags,
    pub network: NetworkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 3000,
            batch_steps: 1000,
            max_length: 6,
            learning_rate: 5e-5,
            gamma: 1.0,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            update_epochs: 10,
            value_coef: 0.5,
            entropy_coef: 0.01,
            target_kl: Some(0.02),
            max_grad_norm: 0.5,
            seed: 0,
            workers: 1,
            flags: VariantFlags::default(),
            network: NetworkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.gamma != 1.0 {
            return bad(format!("gamma must be 1 for terminal-only rewards, got {}", self.gamma));
        }
        if self.max_length == 0 {
            return bad("max_length must be at least 1".into());
        }
        if self.batch_steps < self.max_length {
            return bad(format!(
                "batch_steps ({}) must be at least max_length ({})",
                self.batch_steps, self.max_length
            ));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad(format!("clip_eps must lie in (0, 1), got {}", self.clip_eps));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad(format!("gae_lambda must lie in [0, 1], got {}", self.gae_lambda));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.value_coef < 0.0 || self.entropy_coef < 0.0 || !(self.max_grad_norm > 0.0) {
            return bad("loss coefficients must be non-negative and max_grad_norm positive".into());
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig::with_lr(self.learning_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestEntry {
    pub structure: Structure,
    pub reward: f64,
    pub epoch: usize,
}

/// Size-one buffer holding the best design seen so far.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BestBuffer {
    pub entry: Option<BestEntry>,
}

impl BestBuffer {
    /// Replaces the held design only on strict improvement.
    pub fn offer(&mut self, structure: &Structure, reward: f64, epoch: usize) -> bool {
        let better = self.entry.as_ref().is_none_or(|e| reward > e.reward);
        if better {
            self.entry = Some(BestEntry {
                structure: structure.clone(),
                reward,
                epoch,
            });
        }
        better
    }

    pub fn reward(&self) -> Option<f64> {
        self.entry.as_ref().map(|e| e.reward)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeBatch {
    pub episodes: Vec<Episode>,
    pub steps: usize,
}

impl EpisodeBatch {
    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.reward.unwrap_or(f64::NAN)).collect()
    }
}

/// Rewards keyed by layer sequence. Rewards are pure functions of the
/// design, so cached values are exact.
#[derive(Debug, Default)]
pub struct RewardCache {
    map: Mutex<HashMap<Vec<(usize, usize)>, f64>>,
}

const CACHE_LIMIT: usize = 200_000;

impl RewardCache {
    pub fn len(&self) -> usize {
        self.map.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fills in `episode.reward` for every episode, evaluating each distinct
    /// uncached design once.
    pub fn score(
        &self,
        episodes: &mut [Episode],
        vocab: &DesignVocabulary,
        spec: &RewardSpec,
        library: &MaterialLibrary,
    ) -> Result<()> {
        let keys: Vec<Vec<(usize, usize)>> = episodes.iter().map(Episode::layers).collect();
        let mut missing: Vec<&Vec<(usize, usize)>> = {
            let map = self.map.lock().unwrap();
            keys.iter().filter(|k| !map.contains_key(*k)).collect()
        };
        missing.sort();
        missing.dedup();
        let fresh: Vec<(Vec<(usize, usize)>, f64)> = missing
            .par_iter()
            .map(|k| {
                let s = structure_from_layers(k, vocab);
                compute_reward(&s, spec, library).map(|g| ((*k).clone(), g))
            })
            .collect::<Result<_>>()?;
        let mut map = self.map.lock().unwrap();
        if map.len() + fresh.len() > CACHE_LIMIT {
            map.clear();
        }
        for (k, g) in fresh {
            map.insert(k, g);
        }
        for (ep, k) in episodes.iter_mut().zip(&keys) {
            ep.reward = Some(match map.get(k) {
                Some(&g) => g,
                None => compute_reward(&structure_from_layers(k, vocab), spec, library)?,
            });
        }
        Ok(())
    }
}

/// Episode `index` of a batch draws from its own stream of the epoch seed,
/// so the batch does not depend on how episodes are spread over threads.
fn episode_rng(epoch_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(epoch_seed);
    rng.set_stream(index as u64);
    rng
}

/// Samples episodes until at least `batch_steps` generation steps have been
/// taken, then scores them.
#[allow(clippy::too_many_arguments)]
pub fn collect_batch(
    generator: &Generator,
    params: &ParamStore,
    cfg: &TrainConfig,
    spec: &RewardSpec,
    library: &MaterialLibrary,
    epoch_seed: u64,
    cache: &RewardCache,
) -> Result<EpisodeBatch> {
    let wave = cfg.workers.max(1) * 4;
    let mut episodes = Vec::new();
    let mut steps = 0;
    'outer: while steps < cfg.batch_steps {
        let start = episodes.len();
        let generated: Vec<Episode> = (start..start + wave)
            .into_par_iter()
            .map(|i| generator.generate_episode(params, cfg.max_length, &mut episode_rng(epoch_seed, i)))
            .collect::<Result<_>>()?;
        for ep in generated {
            steps += ep.steps.len();
            episodes.push(ep);
            if steps >= cfg.batch_steps {
                break 'outer;
            }
        }
    }
    cache.score(&mut episodes, &generator.vocab, spec, library)?;
    Ok(EpisodeBatch { episodes, steps })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Advantages {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// GAE over one episode whose only reward arrives with the last step.
/// Returns are `advantage + value`.
pub fn gae_advantages(values: &[f64], reward: f64, gamma: f64, lambda: f64) -> Result<Advantages> {
    if values.is_empty() {
        return Err(Error::invalid("GAE needs at least one step"));
    }
    let n = values.len();
    let mut advantages = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let (r, next_value) = if t + 1 == n {
            (reward, 0.0)
        } else {
            (0.0, values[t + 1])
        };
        let delta = r + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        advantages[t] = next_adv;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok(Advantages { advantages, returns })
}

/// Per-episode inputs to the surrogate loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedEpisode {
    pub actions: Vec<Action>,
    pub old_logp: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Computes GAE for every episode and normalizes advantages over the batch.
pub fn prepare_batch(batch: &EpisodeBatch, cfg: &TrainConfig) -> Result<Vec<PreparedEpisode>> {
    let mut prepared = Vec::with_capacity(batch.episodes.len());
    for ep in &batch.episodes {
        let reward = ep.reward.ok_or_else(|| Error::invalid("episode has no reward"))?;
        let values: Vec<f64> = ep.steps.iter().map(|s| s.value).collect();
        let adv = gae_advantages(&values, reward, cfg.gamma, cfg.gae_lambda)?;
        prepared.push(PreparedEpisode {
            actions: ep.actions(),
            old_logp: ep.steps.iter().map(|s| s.logp()).collect(),
            advantages: adv.advantages,
            returns: adv.returns,
        });
    }
    let all: Vec<f64> = prepared.iter().flat_map(|p| p.advantages.iter().copied()).collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for p in &mut prepared {
        for a in &mut p.advantages {
            *a = (*a - mean) / (std + 1e-8);
        }
    }
    Ok(prepared)
}

/// Loss value, diagnostics and parameter gradients for one update pass.
#[derive(Debug, Clone)]
pub struct LossEval {
    /// `-surrogate + value_coef * value_loss - entropy_coef * entropy`, each a
    /// mean over steps.
    pub loss: f64,
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grads: Gradients,
}

#[derive(Default, Clone, Copy)]
struct Sums {
    surrogate: f64,
    value_loss: f64,
    entropy: f64,
    kl: f64,
    clipped: f64,
}

/// Clipped surrogate `min(r A, clip(r, 1-eps, 1+eps) A)` and its derivative
/// with respect to the new log-probability.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> (f64, f64) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if unclipped <= clipped {
        (unclipped, unclipped)
    } else {
        (clipped, 0.0)
    }
}

pub fn ppo_loss(
    generator: &Generator,
    params: &ParamStore,
    prepared: &[PreparedEpisode],
    cfg: &TrainConfig,
) -> Result<LossEval> {
    let total_steps: usize = prepared.iter().map(|p| p.actions.len()).sum();
    if total_steps == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let inv_n = 1.0 / total_steps as f64;
    let parts: Vec<(Sums, Gradients)> = prepared
        .par_iter()
        .map(|p| {
            let mut tape = Tape::new(params);
            let vars = generator.evaluate_on_tape(&mut tape, &p.actions)?;
            let mut sums = Sums::default();
            let mut seeds = Vec::with_capacity(vars.len() * 5);
            for (i, v) in vars.iter().enumerate() {
                let logp = tape.scalar(v.logp_material) + v.logp_thickness.map_or(0.0, |t| tape.scalar(t));
                let log_ratio = logp - p.old_logp[i];
                let ratio = log_ratio.exp();
                let (surr, dsurr) = clipped_surrogate(ratio, p.advantages[i], cfg.clip_eps);
                let value = tape.scalar(v.value);
                let verr = value - p.returns[i];
                let entropy = tape.scalar(v.entropy_material) + v.entropy_thickness.map_or(0.0, |e| tape.scalar(e));
                if !(ratio.is_finite() && value.is_finite() && entropy.is_finite()) {
                    return Err(Error::NonFinite(format!(
                        "ratio {ratio}, value {value}, entropy {entropy} during update"
                    )));
                }
                sums.surrogate += surr;
                sums.value_loss += verr * verr;
                sums.entropy += entropy;
                sums.kl += (ratio - 1.0) - log_ratio;
                if (ratio - 1.0).abs() > cfg.clip_eps {
                    sums.clipped += 1.0;
                }

                let g_logp = -dsurr * inv_n;
                seeds.push((v.logp_material, vec![g_logp]));
                if let Some(t) = v.logp_thickness {
                    seeds.push((t, vec![g_logp]));
                }
                seeds.push((v.value, vec![cfg.value_coef * 2.0 * verr * inv_n]));
                let g_ent = -cfg.entropy_coef * inv_n;
                seeds.push((v.entropy_material, vec![g_ent]));
                if let Some(e) = v.entropy_thickness {
                    seeds.push((e, vec![g_ent]));
                }
            }
            Ok((sums, tape.backward(&seeds).grads))
        })
        .collect::<Result<_>>()?;

    let mut grads = Gradients::zeros_like(params);
    let mut s = Sums::default();
    for (p, g) in &parts {
        grads.add_assign(g);
        s.surrogate += p.surrogate;
        s.value_loss += p.value_loss;
        s.entropy += p.entropy;
        s.kl += p.kl;
        s.clipped += p.clipped;
    }
    let surrogate = s.surrogate * inv_n;
    let value_loss = s.value_loss * inv_n;
    let entropy = s.entropy * inv_n;
    Ok(LossEval {
        loss: -surrogate + cfg.value_coef * value_loss - cfg.entropy_coef * entropy,
        surrogate,
        value_loss,
        entropy,
        approx_kl: s.kl * inv_n,
        clip_fraction: s.clipped * inv_n,
        grads,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub passes: usize,
    pub clip_fraction: f64,
    pub approx_kl: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
}

/// Runs up to `cfg.update_epochs` passes of surrogate ascent over the batch.
/// Statistics are those of the last evaluated pass.
pub fn ppo_update(
    generator: &Generator,
    params: &mut ParamStore,
    adam: &mut AdamState,
    batch: &EpisodeBatch,
    cfg: &TrainConfig,
) -> Result<UpdateStats> {
    let prepared = prepare_batch(batch, cfg)?;
    let adam_cfg = cfg.adam();
    let mut stats = UpdateStats::default();
    for pass in 0..cfg.update_epochs {
        let eval = ppo_loss(generator, params, &prepared, cfg)?;
        if !eval.loss.is_finite() {
            return Err(Error::NonFinite(format!(
                "PPO loss {} (surrogate {}, value loss {}, entropy {})",
                eval.loss, eval.surrogate, eval.value_loss, eval.entropy
            )));
        }
        stats.clip_fraction = eval.clip_fraction;
        stats.approx_kl = eval.approx_kl;
        stats.value_loss = eval.value_loss;
        stats.entropy = eval.entropy;
        if let Some(limit) = cfg.target_kl {
            if pass > 0 && eval.approx_kl > limit {
                break;
            }
        }
        params.zero_grad();
        params.accumulate(&eval.grads);
        stats.grad_norm = params.clip_grad_norm(cfg.max_grad_norm);
        adam.update(params, &adam_cfg)?;
        stats.passes = pass + 1;
    }
    Ok(stats)
}

/// One line of the training trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub mean_reward: f64,
    pub max_reward: f64,
    pub best_so_far: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

pub fn write_trace_csv<W: std::io::Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Serde(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::Serde(e.to_string()))?;
    Ok(())
}

pub fn read_trace_csv<R: std::io::Read>(input: R) -> Result<Vec<TraceRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(|e| Error::Serde(e.to_string())))
        .collect()
}

/// Training state that can be advanced epoch by epoch and checkpointed.
pub struct Trainer<'a> {
    pub cfg: TrainConfig,
    pub generator: Generator,
    pub params: ParamStore,
    pub adam: AdamState,
    pub best: BestBuffer,
    pub trace: Vec<TraceRow>,
    pub epoch: usize,
    rng: ChaCha8Rng,
    spec: &'a RewardSpec,
    library: &'a MaterialLibrary,
    cache: RewardCache,
    pool: rayon::ThreadPool,
}

#[derive(Serialize, Deserialize)]
struct TrainerMeta {
    best: BestBuffer,
    trace: Vec<TraceRow>,
    generator: Generator,
}

impl<'a> Trainer<'a> {
    pub fn new(
        cfg: TrainConfig,
        vocab: DesignVocabulary,
        spec: &'a RewardSpec,
        library: &'a MaterialLibrary,
    ) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        for m in vocab.materials() {
            library.table(m)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (generator, params) = Generator::new(vocab, cfg.flags, cfg.network.clone(), &mut rng)?;
        let adam = AdamState::new(&params);
        let pool = build_pool(cfg.workers)?;
        Ok(Trainer {
            cfg,
            generator,
            params,
            adam,
            best: BestBuffer::default(),
            trace: Vec::new(),
            epoch: 0,
            rng,
            spec,
            library,
            cache: RewardCache::default(),
            pool,
        })
    }

    /// Restores a trainer from a checkpoint written by [`Trainer::checkpoint`].
    pub fn resume(
        cfg: TrainConfig,
        ckpt: Checkpoint,
        spec: &'a RewardSpec,
        library: &'a MaterialLibrary,
    ) -> Result<Self> {
        cfg.validate()?;
        let meta: TrainerMeta = serde_json::from_value(ckpt.meta)?;
        if !ckpt.params.same_layout(
            &Generator::new(
                meta.generator.vocab.clone(),
                meta.generator.flags,
                meta.generator.network.clone(),
                &mut ChaCha8Rng::seed_from_u64(0),
            )?
            .1,
        ) {
            return Err(Error::Serde("checkpoint parameters do not match the generator".into()));
        }
        let pool = build_pool(cfg.workers)?;
        Ok(Trainer {
            cfg,
            generator: meta.generator,
            params: ckpt.params,
            adam: ckpt.adam,
            best: meta.best,
            trace: meta.trace,
            epoch: ckpt.epoch,
            rng: ckpt.rng.restore()?,
            spec,
            library,
            cache: RewardCache::default(),
            pool,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let meta = TrainerMeta {
            best: self.best.clone(),
            trace: self.trace.clone(),
            generator: self.generator.clone(),
        };
        Checkpoint::new(
            self.epoch,
            &self.params,
            &self.adam,
            &self.rng,
            serde_json::to_value(meta).expect("trainer metadata serializes"),
        )
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.cfg.epochs
    }

    /// Collect, select best, update.
    pub fn run_epoch(&mut self) -> Result<TraceRow> {
        let epoch_seed: u64 = self.rng.random();
        let (generator, cfg, spec, library, cache) = (&self.generator, &self.cfg, self.spec, self.library, &self.cache);
        let params = &mut self.params;
        let adam = &mut self.adam;
        let best = &mut self.best;
        let epoch = self.epoch;
        let row = self.pool.install(|| -> Result<TraceRow> {
            let batch = collect_batch(generator, params, cfg, spec, library, epoch_seed, cache)?;
            let rewards = batch.rewards();
            let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
            let (best_idx, max) =
                rewards.iter().enumerate().fold(
                    (0, f64::NEG_INFINITY),
                    |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc },
                );
            let structure = structure_from_layers(&batch.episodes[best_idx].layers(), &generator.vocab);
            best.offer(&structure, max, epoch);
            let stats = ppo_update(generator, params, adam, &batch, cfg)?;
            Ok(TraceRow {
                epoch,
                mean_reward: mean,
                max_reward: max,
                best_so_far: best.reward().unwrap_or(max),
                clip_fraction: stats.clip_fraction,
                approx_kl: stats.approx_kl,
            })
        })?;
        self.trace.push(row);
        self.epoch += 1;
        Ok(row)
    }
}

fn build_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} worker threads: {e}")))
}

pub struct TrainOutcome {
    pub best: BestBuffer,
    pub trace: Vec<TraceRow>,
    pub generator: Generator,
    pub params: ParamStore,
}

/// Runs all configured epochs.
pub fn train(
    cfg: &TrainConfig,
    vocab: &DesignVocabulary,
    spec: &RewardSpec,
    library: &MaterialLibrary,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg.clone(), vocab.clone(), spec, library)?;
    while !trainer.is_done() {
        trainer.run_epoch()?;
    }
    Ok(TrainOutcome {
        best: trainer.best,
        trace: trainer.trace,
        generator: trainer.generator,
        params: trainer.params,
    })
}
