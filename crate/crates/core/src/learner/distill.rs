//! Sequential training with output-matching regularization on stored samples.

use serde::{Deserialize, Serialize};

use super::solve::{Design, SolverOptions};
use super::{solve_design, TrainOutcome};
use crate::datagen::SampleStore;
use crate::error::{bail, Result};
use crate::memory::{restrict, MemoryPolicy};
use crate::models::{Family, ParameterSpace};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistillVariant {
    /// Anchors are the previous model's outputs, recomputed each round.
    #[default]
    AnchorPrevious,
    /// Anchors are `f_{theta_t}(x_ti)`, cached when task `t` finishes.
    AnchorPerTask,
}

/// `beta_t` as a function of the lag `T - t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BetaSchedule {
    /// `beta_t = ratio^{-(T - t)}`.
    Geometric { ratio: f64 },
    /// `beta_t = values[T - t]`.
    ByLag { values: Vec<f64> },
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self::Geometric { ratio: 4.0 }
    }
}

impl BetaSchedule {
    /// `(beta_1, ..., beta_T)` for the round with `tasks` tasks.
    pub fn betas(&self, tasks: usize) -> Result<Vec<f64>> {
        let out: Vec<f64> = match self {
            Self::Geometric { ratio } => (1..=tasks).map(|t| ratio.powi(-((tasks - t) as i32))).collect(),
            Self::ByLag { values } => {
                if values.len() < tasks {
                    bail!(Argument, "beta schedule covers {} lags, {tasks} needed", values.len());
                }
                (1..=tasks).map(|t| values[tasks - t]).collect()
            }
        };
        if out.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            bail!(Argument, "beta values must be positive and finite");
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    #[serde(default)]
    pub variant: DistillVariant,
    #[serde(default)]
    pub beta: BetaSchedule,
}

/// Trains `theta_1, ..., theta_T` in order. Round `T` sees the memory
/// `restrict(store, policy, T)` and minimizes
/// `beta_T sum_i |y_Ti - f(x_Ti)|^2 + sum_{t<T} beta_t sum_{i in R_t} |f(x_ti) - anchor_ti|^2`.
pub fn fit_distill_sequence(
    store: &SampleStore,
    policy: &MemoryPolicy,
    cfg: &DistillConfig,
    space: &ParameterSpace,
    family: Family,
    opts: &SolverOptions,
) -> Result<TrainOutcome> {
    let (m, d_y) = (store.m(), store.d_y());
    let mut history: Vec<Vec<f64>> = Vec::with_capacity(store.tasks());
    // Per-task anchor caches (AnchorPerTask): outputs on all m samples.
    let mut cached: Vec<Vec<f64>> = Vec::new();
    let mut last = None;
    let mut iters = 0;
    let mut converged = true;
    for round in 1..=store.tasks() {
        let view = restrict(store, policy, round)?;
        let beta = cfg.beta.betas(round)?;
        let mut design = Design::new(store.d_x(), d_y);
        let mut anchor = vec![0.0; d_y];
        for t in 1..round {
            if view.n(t) == 0 {
                log::info!("round {round}: no stored samples for task {t}, regularizer term dropped");
                continue;
            }
            for &i in view.rows(t) {
                let x = view.x_raw(t, i);
                match cfg.variant {
                    DistillVariant::AnchorPrevious => family.eval_into(&history[round - 2], x, &mut anchor),
                    DistillVariant::AnchorPerTask => anchor.copy_from_slice(&cached[t - 1][i * d_y..(i + 1) * d_y]),
                }
                design.push(x, &anchor, beta[t - 1]);
            }
        }
        for i in 0..m {
            design.push(view.x_raw(round, i), view.y_raw(round, i), beta[round - 1]);
        }
        let init = history.last().map(Vec::as_slice);
        let (theta, info) = solve_design(&design, family, 0.0, space, init, opts)?;
        iters += info.iters;
        converged &= info.converged;
        if cfg.variant == DistillVariant::AnchorPerTask {
            let mut outs = vec![0.0; m * d_y];
            for i in 0..m {
                family.eval_into(&theta, view.x_raw(round, i), &mut outs[i * d_y..(i + 1) * d_y]);
            }
            cached.push(outs);
        }
        let value = design.objective(family, &theta, 0.0);
        history.push(theta);
        last = Some((value, info));
    }
    let Some((objective_value, info)) = last else {
        bail!(Argument, "store has no tasks");
    };
    Ok(TrainOutcome {
        theta_hat: history.last().cloned().unwrap_or_default(),
        history,
        objective_value,
        solver_iters: iters,
        converged,
        info,
        weights: None,
    })
}

/// Regularizer value `sum_{t<T} beta_t sum_{i in R_t} |f_theta(x_ti) - anchor_ti|^2`
/// of the last round, with anchors taken from `history`.
pub fn distill_regularizer(
    store: &SampleStore,
    policy: &MemoryPolicy,
    cfg: &DistillConfig,
    family: Family,
    history: &[Vec<f64>],
    theta: &[f64],
) -> Result<f64> {
    let round = store.tasks();
    if history.len() + 1 < round {
        bail!(Shape, "history has {} models, round {round} needs {}", history.len(), round - 1);
    }
    let view = restrict(store, policy, round)?;
    let beta = cfg.beta.betas(round)?;
    let d_y = store.d_y();
    let (mut f, mut a) = (vec![0.0; d_y], vec![0.0; d_y]);
    let mut total = 0.0;
    for t in 1..round {
        let anchor_theta = match cfg.variant {
            DistillVariant::AnchorPrevious => &history[round - 2],
            DistillVariant::AnchorPerTask => &history[t - 1],
        };
        for &i in view.rows(t) {
            let x = view.x_raw(t, i);
            family.eval_into(theta, x, &mut f);
            family.eval_into(anchor_theta, x, &mut a);
            total += beta[t - 1] * f.iter().zip(&a).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        }
    }
    Ok(total)
}
