//! Continuous refinement of layer thicknesses with materials held fixed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbfgsb::{self, LbfgsbOptions, StopReason};
use crate::materials::MaterialLibrary;
use crate::reward::{compute_reward, RewardSpec};
use crate::structure::Structure;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneOptions {
    pub memory: usize,
    pub pgtol: f64,
    pub max_iterations: usize,
    /// Central-difference step for the reward gradient.
    pub fd_step_nm: f64,
}

impl Default for FinetuneOptions {
    fn default() -> Self {
        FinetuneOptions {
            memory: 10,
            pgtol: 1e-6,
            max_iterations: 500,
            fd_step_nm: 0.1,
        }
    }
}

pub struct FinetuneProblem<'a> {
    pub structure: Structure,
    pub lower_nm: Vec<f64>,
    pub upper_nm: Vec<f64>,
    pub spec: &'a RewardSpec,
    pub library: &'a MaterialLibrary,
}

impl<'a> FinetuneProblem<'a> {
    /// Same bounds for every layer.
    pub fn uniform(
        structure: Structure,
        lower_nm: f64,
        upper_nm: f64,
        spec: &'a RewardSpec,
        library: &'a MaterialLibrary,
    ) -> Result<Self> {
        let n = structure.len();
        let p = FinetuneProblem {
            structure,
            lower_nm: vec![lower_nm; n],
            upper_nm: vec![upper_nm; n],
            spec,
            library,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.structure.len();
        if self.lower_nm.len() != n || self.upper_nm.len() != n {
            return Err(Error::Dimension(format!(
                "bounds given for a different number of layers than {n}"
            )));
        }
        self.structure.validate(self.library)?;
        for (i, ((l, u), x)) in self
            .lower_nm
            .iter()
            .zip(&self.upper_nm)
            .zip(self.structure.thicknesses())
            .enumerate()
        {
            if !(*l > 0.0 && l < u) {
                return Err(Error::invalid(format!(
                    "layer {i}: bounds [{l}, {u}] must satisfy 0 < lower < upper"
                )));
            }
            if x < *l || x > *u {
                return Err(Error::invalid(format!(
                    "layer {i}: thickness {x} nm outside bounds [{l}, {u}]"
                )));
            }
        }
        Ok(())
    }

    pub fn reward(&self, x: &[f64]) -> Result<f64> {
        compute_reward(&self.structure.with_thicknesses(x), self.spec, self.library)
    }
}

/// Central-difference gradient of the reward with step `h` (forward
/// difference where the backward probe would reach zero thickness).
pub fn reward_gradient(problem: &FinetuneProblem<'_>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    let mut g0 = None;
    for i in 0..x.len() {
        let xi = x[i];
        probe[i] = xi + h;
        let up = problem.reward(&probe)?;
        let gi = if xi - h > 0.0 {
            probe[i] = xi - h;
            (up - problem.reward(&probe)?) / (2.0 * h)
        } else {
            let base = match g0 {
                Some(v) => v,
                None => *g0.insert(problem.reward(x)?),
            };
            (up - base) / h
        };
        probe[i] = xi;
        grad.push(gi);
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub before: Structure,
    pub after: Structure,
    pub reward_before: f64,
    pub reward_after: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// False when the optimizer did not beat the starting design, in which
    /// case `after == before`.
    pub improved: bool,
    pub stop: String,
}

/// Maximizes the reward over thicknesses within the bounds.
pub fn finetune(problem: &FinetuneProblem<'_>, opts: &FinetuneOptions) -> Result<FinetuneReport> {
    problem.validate()?;
    let x0 = problem.structure.thicknesses();
    let reward_before = problem.reward(&x0)?;
    if x0.is_empty() {
        return Ok(FinetuneReport {
            before: problem.structure.clone(),
            after: problem.structure.clone(),
            reward_before,
            reward_after: reward_before,
            iterations: 0,
            evaluations: 1,
            improved: false,
            stop: "no layers".into(),
        });
    }
    let h = opts.fd_step_nm;
    let objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
        let g = reward_gradient(problem, x, h)?;
        Ok((-problem.reward(x)?, g.into_iter().map(|v| -v).collect()))
    };
    let lb_opts = LbfgsbOptions {
        memory: opts.memory,
        pgtol: opts.pgtol,
        max_iterations: opts.max_iterations,
        ..LbfgsbOptions::default()
    };
    let result = lbfgsb::minimize(objective, &x0, &problem.lower_nm, &problem.upper_nm, &lb_opts)?;
    let candidate = problem.structure.with_thicknesses(&result.x);
    let reward_candidate = -result.f;
    let improved = reward_candidate > reward_before;
    let stop = match result.stop {
        StopReason::ProjectedGradient => "projected gradient below tolerance",
        StopReason::RelativeReduction => "relative reduction below tolerance",
        StopReason::MaxIterations => "iteration limit",
        StopReason::LineSearch => "line search failed",
    };
    Ok(FinetuneReport {
        before: problem.structure.clone(),
        after: if improved { candidate } else { problem.structure.clone() },
        reward_before,
        reward_after: if improved { reward_candidate } else { reward_before },
        iterations: result.iterations,
        evaluations: result.evaluations,
        improved,
        stop: stop.into(),
    })
}
