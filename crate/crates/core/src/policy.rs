//! Recurrent generator that emits a layer sequence one (material, thickness)
//! pair at a time.
//!
//! At every step a GRU consumes the encoding of the previous layer (a learned
//! start vector at step 0). The material head scores every material plus an
//! end-of-sequence action; with gating on, the previous material is removed
//! from the candidates before the softmax. When a material is drawn, the
//! thickness head scores the discrete thickness set, conditioned on the
//! material embedding in the autoregressive variant. A critic reads the same
//! hidden state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{dist, Embedding, GruCell, Mlp, ParamId, ParamStore, Tape, Var};
use crate::structure::Structure;

/// Materials and thickness values available to the generator. The EOS
/// action has index `materials.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignVocabulary {
    materials: Vec<String>,
    thicknesses_nm: Vec<f64>,
}

impl DesignVocabulary {
    pub fn new(materials: Vec<String>, thicknesses_nm: Vec<f64>) -> Result<Self> {
        if materials.len() < 2 {
            return Err(Error::invalid("vocabulary needs at least two materials"));
        }
        for (i, m) in materials.iter().enumerate() {
            if materials[..i].contains(m) {
                return Err(Error::invalid(format!("material `{m}` listed twice")));
            }
        }
        if thicknesses_nm.is_empty() {
            return Err(Error::invalid("vocabulary needs at least one thickness"));
        }
        if thicknesses_nm.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::invalid("thicknesses must be positive and finite"));
        }
        if thicknesses_nm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("thicknesses must be strictly increasing"));
        }
        Ok(DesignVocabulary {
            materials,
            thicknesses_nm,
        })
    }

    /// Thicknesses `start, start + step, ..., stop` (inclusive).
    pub fn thickness_range(start: f64, stop: f64, step: f64) -> Vec<f64> {
        let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| start + step * i as f64).collect()
    }

    pub fn materials(&self) -> &[String] {
        &self.materials
    }

    pub fn thicknesses_nm(&self) -> &[f64] {
        &self.thicknesses_nm
    }

    pub fn num_materials(&self) -> usize {
        self.materials.len()
    }

    pub fn num_thicknesses(&self) -> usize {
        self.thicknesses_nm.len()
    }

    pub fn eos_index(&self) -> usize {
        self.materials.len()
    }

    pub fn material_index(&self, id: &str) -> Option<usize> {
        self.materials.iter().position(|m| m == id)
    }

    /// Index of a thickness value, matching to within 1e-9 nm.
    pub fn thickness_index(&self, nm: f64) -> Option<usize> {
        self.thicknesses_nm.iter().position(|d| (d - nm).abs() < 1e-9)
    }
}

/// Switches for the ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariantFlags {
    /// Remove the previous material from the candidates at each step.
    pub gating: bool,
    /// Feed the sampled material's embedding to the thickness head.
    pub autoregressive: bool,
    /// Allow EOS at the very first step (empty designs).
    pub eos_at_first_step: bool,
}

impl Default for VariantFlags {
    fn default() -> Self {
        VariantFlags {
            gating: true,
            autoregressive: true,
            eos_at_first_step: false,
        }
    }
}

impl VariantFlags {
    pub fn baseline() -> Self {
        VariantFlags {
            gating: false,
            autoregressive: false,
            eos_at_first_step: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub embedding_dim: usize,
    pub hidden_size: usize,
    pub head_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            embedding_dim: 5,
            hidden_size: 128,
            head_hidden: vec![64],
            critic_hidden: vec![64, 64],
        }
    }
}

/// One generation decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Layer { material: usize, thickness: usize },
    Eos,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub action: Action,
    pub logp_material: f64,
    /// Zero on the EOS step.
    pub logp_thickness: f64,
    pub value: f64,
}

impl StepRecord {
    pub fn logp(&self) -> f64 {
        self.logp_material + self.logp_thickness
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<StepRecord>,
    /// Terminal reward, filled in after evaluation.
    pub reward: Option<f64>,
}

impl Episode {
    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }

    /// `(material, thickness)` index pairs of the emitted layers.
    pub fn layers(&self) -> Vec<(usize, usize)> {
        self.steps
            .iter()
            .filter_map(|s| match s.action {
                Action::Layer { material, thickness } => Some((material, thickness)),
                Action::Eos => None,
            })
            .collect()
    }

    pub fn num_layers(&self) -> usize {
        self.layers().len()
    }

    /// log P(S): sum of every step's log-probabilities.
    pub fn log_prob(&self) -> f64 {
        self.steps.iter().map(StepRecord::logp).sum()
    }
}

/// Removes the logit of material `last` (the row-deleted identity applied to
/// the material logits). The EOS logit is kept.
pub fn apply_gating(logits: &[f64], last: usize) -> Result<Vec<f64>> {
    if logits.len() < 2 || last + 1 >= logits.len() {
        return Err(Error::invalid(format!(
            "gating index {last} out of range for {} material logits",
            logits.len().saturating_sub(1)
        )));
    }
    Ok(logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != last)
        .map(|(_, &v)| v)
        .collect())
}

/// Material-head indices that may be chosen at step `step` after `last`.
pub fn allowed_materials(
    vocab: &DesignVocabulary,
    flags: &VariantFlags,
    step: usize,
    last: Option<usize>,
) -> Vec<usize> {
    let eos = vocab.eos_index();
    (0..=eos)
        .filter(|&i| !(step == 0 && i == eos && !flags.eos_at_first_step))
        .filter(|&i| !(flags.gating && last == Some(i)))
        .collect()
}

/// Per-step quantities from re-evaluating a fixed action sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEval {
    pub logp_material: f64,
    pub logp_thickness: f64,
    pub value: f64,
    pub entropy: f64,
    /// Probabilities over the allowed material candidates (after gating).
    pub material_probs: Vec<f64>,
    /// Thickness probabilities; empty on the EOS step.
    pub thickness_probs: Vec<f64>,
}

/// Tape nodes for one step, used by the PPO update.
#[derive(Debug, Clone, Copy)]
pub struct StepVars {
    pub logp_material: Var,
    pub logp_thickness: Option<Var>,
    pub value: Var,
    pub entropy_material: Var,
    pub entropy_thickness: Option<Var>,
    material_logp_all: Var,
    thickness_logp_all: Option<Var>,
}

enum Decide<'a, R: Rng + ?Sized> {
    Sample(&'a mut R),
    Replay(&'a [Action]),
}

/// Architecture of the generator and critic; the weights live in a
/// separate [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub vocab: DesignVocabulary,
    pub flags: VariantFlags,
    pub network: NetworkConfig,
    material_emb: Embedding,
    thickness_emb: Embedding,
    start: ParamId,
    gru: GruCell,
    material_head: Mlp,
    thickness_head: Mlp,
    critic: Mlp,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(
        vocab: DesignVocabulary,
        flags: VariantFlags,
        network: NetworkConfig,
        rng: &mut R,
    ) -> Result<(Self, ParamStore)> {
        if network.embedding_dim == 0 || network.hidden_size == 0 {
            return Err(Error::invalid("embedding and hidden sizes must be positive"));
        }
        let d = network.embedding_dim;
        let h = network.hidden_size;
        let mut store = ParamStore::new();
        let material_emb = Embedding::new(&mut store, "material_embedding", vocab.num_materials(), d, rng);
        let thickness_emb = Embedding::new(&mut store, "thickness_embedding", vocab.num_thicknesses(), d, rng);
        let start = store.uniform("start_token", vec![2 * d], 1.0, rng);
        let gru = GruCell::new(&mut store, "gru", 2 * d, h, rng);

        let sizes = |input: usize, hidden: &[usize], output: usize| {
            let mut s = vec![input];
            s.extend_from_slice(hidden);
            s.push(output);
            s
        };
        let material_head = Mlp::new(
            &mut store,
            "material_head",
            &sizes(h, &network.head_hidden, vocab.num_materials() + 1),
            rng,
        );
        let thickness_in = if flags.autoregressive { h + d } else { h };
        let thickness_head = Mlp::new(
            &mut store,
            "thickness_head",
            &sizes(thickness_in, &network.head_hidden, vocab.num_thicknesses()),
            rng,
        );
        let critic = Mlp::new(&mut store, "critic", &sizes(h, &network.critic_hidden, 1), rng);
        let generator = Generator {
            vocab,
            flags,
            network,
            material_emb,
            thickness_emb,
            start,
            gru,
            material_head,
            thickness_head,
            critic,
        };
        Ok((generator, store))
    }

    pub fn thickness_head_input_size(&self) -> usize {
        self.thickness_head.input_size()
    }

    pub fn material_head_output_size(&self) -> usize {
        self.material_head.output_size()
    }

    /// Samples one design of at most `max_length` layers.
    pub fn generate_episode<R: Rng + ?Sized>(
        &self,
        params: &ParamStore,
        max_length: usize,
        rng: &mut R,
    ) -> Result<Episode> {
        if max_length == 0 {
            return Err(Error::invalid("maximum length must be at least 1"));
        }
        let mut tape = Tape::new(params);
        let (actions, vars) = self.unroll(&mut tape, max_length, Decide::Sample(rng))?;
        let steps = actions
            .into_iter()
            .zip(vars)
            .map(|(action, v)| StepRecord {
                action,
                logp_material: tape.scalar(v.logp_material),
                logp_thickness: v.logp_thickness.map_or(0.0, |t| tape.scalar(t)),
                value: tape.scalar(v.value),
            })
            .collect();
        Ok(Episode { steps, reward: None })
    }

    /// Replays `actions` on `tape`, returning the nodes needed for gradients.
    pub fn evaluate_on_tape(&self, tape: &mut Tape<'_>, actions: &[Action]) -> Result<Vec<StepVars>> {
        let (_, vars) = self.unroll::<rand_chacha::ChaCha8Rng>(tape, actions.len(), Decide::Replay(actions))?;
        Ok(vars)
    }

    /// Log-probabilities, values and entropies of a recorded action sequence
    /// under `params`.
    pub fn evaluate_log_probs(&self, params: &ParamStore, actions: &[Action]) -> Result<Vec<StepEval>> {
        let mut tape = Tape::new(params);
        let vars = self.evaluate_on_tape(&mut tape, actions)?;
        Ok(vars
            .iter()
            .map(|v| {
                let ent_t = v.entropy_thickness.map_or(0.0, |e| tape.scalar(e));
                StepEval {
                    logp_material: tape.scalar(v.logp_material),
                    logp_thickness: v.logp_thickness.map_or(0.0, |t| tape.scalar(t)),
                    value: tape.scalar(v.value),
                    entropy: tape.scalar(v.entropy_material) + ent_t,
                    material_probs: tape.value(v.material_logp_all).iter().map(|l| l.exp()).collect(),
                    thickness_probs: v
                        .thickness_logp_all
                        .map(|t| tape.value(t).iter().map(|l| l.exp()).collect())
                        .unwrap_or_default(),
                }
            })
            .collect())
    }

    fn unroll<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_>,
        max_length: usize,
        mut decide: Decide<'_, R>,
    ) -> Result<(Vec<Action>, Vec<StepVars>)> {
        let mut actions = Vec::with_capacity(max_length);
        let mut vars = Vec::with_capacity(max_length);
        let mut h = tape.input(vec![0.0; self.network.hidden_size]);
        let mut prev: Option<(usize, usize)> = None;
        let eos = self.vocab.eos_index();

        for step in 0..max_length {
            let x = match prev {
                None => tape.param(self.start),
                Some((m, t)) => {
                    let em = self.material_emb.lookup(tape, m)?;
                    let et = self.thickness_emb.lookup(tape, t)?;
                    tape.concat(&[em, et])
                }
            };
            h = self.gru.step(tape, x, h)?;
            let value_vec = self.critic.forward(tape, h)?;
            let value = tape.pick(value_vec, 0);

            let logits = self.material_head.forward(tape, h)?;
            check_finite(tape.value(logits), "material logits", step)?;
            let allowed = allowed_materials(&self.vocab, &self.flags, step, prev.map(|p| p.0));
            let gated = tape.select(logits, &allowed);
            let lp_m = tape.log_softmax(gated);
            let ent_m = tape.entropy(gated);

            let replayed = match &decide {
                Decide::Replay(a) => Some(a[step]),
                Decide::Sample(_) => None,
            };
            let pos = match (&mut decide, replayed) {
                (Decide::Sample(rng), _) => sample_log_probs(tape.value(lp_m), rng)?,
                (Decide::Replay(_), Some(action)) => {
                    let target = match action {
                        Action::Eos => eos,
                        Action::Layer { material, .. } => material,
                    };
                    allowed.iter().position(|&i| i == target).ok_or_else(|| {
                        Error::invalid(format!(
                            "action at step {step} is not permitted by this generator's flags"
                        ))
                    })?
                }
                (Decide::Replay(_), None) => unreachable!(),
            };
            let logp_material = tape.pick(lp_m, pos);
            let material = allowed[pos];

            if material == eos {
                actions.push(Action::Eos);
                vars.push(StepVars {
                    logp_material,
                    logp_thickness: None,
                    value,
                    entropy_material: ent_m,
                    entropy_thickness: None,
                    material_logp_all: lp_m,
                    thickness_logp_all: None,
                });
                if let Decide::Replay(a) = &decide {
                    if a.len() != step + 1 {
                        return Err(Error::invalid("actions continue after EOS"));
                    }
                }
                break;
            }

            let t_in = if self.flags.autoregressive {
                let em = self.material_emb.lookup(tape, material)?;
                tape.concat(&[em, h])
            } else {
                h
            };
            let t_logits = self.thickness_head.forward(tape, t_in)?;
            check_finite(tape.value(t_logits), "thickness logits", step)?;
            let lp_t = tape.log_softmax(t_logits);
            let ent_t = tape.entropy(t_logits);
            let thickness = match (&mut decide, replayed) {
                (Decide::Sample(rng), _) => sample_log_probs(tape.value(lp_t), rng)?,
                (Decide::Replay(_), Some(Action::Layer { thickness, .. })) => {
                    if thickness >= self.vocab.num_thicknesses() {
                        return Err(Error::invalid(format!("thickness index {thickness} out of range")));
                    }
                    thickness
                }
                _ => unreachable!(),
            };
            let logp_thickness = tape.pick(lp_t, thickness);
            actions.push(Action::Layer { material, thickness });
            vars.push(StepVars {
                logp_material,
                logp_thickness: Some(logp_thickness),
                value,
                entropy_material: ent_m,
                entropy_thickness: Some(ent_t),
                material_logp_all: lp_m,
                thickness_logp_all: Some(lp_t),
            });
            prev = Some((material, thickness));
        }
        Ok((actions, vars))
    }
}

fn check_finite(values: &[f64], what: &str, step: usize) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{what}[{i}] = {} at step {step}", values[i]))),
        None => Ok(()),
    }
}

fn sample_log_probs<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> Result<usize> {
    let probs: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
    dist::categorical_sample(&probs, rng)
}

/// Maps an episode's layers to material ids and thicknesses.
pub fn structure_from_episode(episode: &Episode, vocab: &DesignVocabulary) -> Structure {
    structure_from_layers(&episode.layers(), vocab)
}

pub fn structure_from_layers(layers: &[(usize, usize)], vocab: &DesignVocabulary) -> Structure {
    Structure::from_pairs(
        layers
            .iter()
            .map(|&(m, t)| (vocab.materials[m].clone(), vocab.thicknesses_nm[t])),
    )
}

/// Converts a structure whose materials and thicknesses are all in the
/// vocabulary back into an action sequence (terminated by EOS when shorter
/// than `max_length`).
pub fn actions_for_structure(
    structure: &Structure,
    vocab: &DesignVocabulary,
    max_length: usize,
) -> Result<Vec<Action>> {
    let mut actions = Vec::with_capacity(structure.len() + 1);
    for l in &structure.layers {
        let material = vocab
            .material_index(&l.material)
            .ok_or_else(|| Error::UnknownMaterial(l.material.clone()))?;
        let thickness = vocab
            .thickness_index(l.thickness_nm)
            .ok_or_else(|| Error::invalid(format!("thickness {} nm is not in the vocabulary", l.thickness_nm)))?;
        actions.push(Action::Layer { material, thickness });
    }
    if actions.len() > max_length {
        return Err(Error::invalid(format!(
            "{} layers exceed the maximum length {max_length}",
            actions.len()
        )));
    }
    if actions.len() < max_length {
        actions.push(Action::Eos);
    }
    Ok(actions)
}
