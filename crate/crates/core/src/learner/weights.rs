//! Data-dependent task weights from a pilot fit.

use serde::{Deserialize, Serialize};

use super::{fit_replay_with, ReplayObjective, SolverOptions, TrainOutcome};
use crate::datagen::SampleStore;
use crate::error::{bail, Result};
use crate::models::{Family, ParameterSpace};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SchemeKind {
    Constant { value: f64 },
    /// Raw weight proportional to the pilot loss of the task.
    LossProportional,
    /// Raw weight proportional to the inverse pilot loss.
    LossInverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    #[serde(flatten)]
    pub kind: SchemeKind,
    pub w_cap: f64,
}

/// Weights at each stage: raw, divided by the smallest (`normalized`),
/// then clipped to `[1, W_cap]` (`realized`).
#[derive(Clone, Debug, PartialEq)]
pub struct WeightReport {
    pub pilot_losses: Vec<f64>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub realized: Vec<f64>,
}

impl WeightScheme {
    pub fn weights(&self, pilot_losses: &[f64]) -> Result<WeightReport> {
        if !(self.w_cap >= 1.0) {
            bail!(Argument, "W_cap must be at least 1, got {}", self.w_cap);
        }
        let floor = |l: f64| l.max(f64::MIN_POSITIVE);
        let raw: Vec<f64> = match self.kind {
            SchemeKind::Constant { value } => {
                if !(value > 0.0 && value.is_finite()) {
                    bail!(Argument, "constant weight must be positive, got {value}");
                }
                vec![value; pilot_losses.len()]
            }
            SchemeKind::LossProportional => pilot_losses.iter().map(|&l| floor(l)).collect(),
            SchemeKind::LossInverse => pilot_losses.iter().map(|&l| 1.0 / floor(l)).collect(),
        };
        let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let normalized: Vec<f64> = raw.iter().map(|w| w / lo).collect();
        let realized = normalized.iter().map(|w| w.clamp(1.0, self.w_cap)).collect();
        Ok(WeightReport {
            pilot_losses: pilot_losses.to_vec(),
            raw,
            normalized,
            realized,
        })
    }
}

/// Per-task mean squared residual of `theta` on the available samples.
pub(crate) fn task_losses(store: &SampleStore, family: Family, theta: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; store.d_y()];
    (1..=store.tasks())
        .map(|t| {
            let rows = store.rows(t);
            let s: f64 = rows
                .iter()
                .map(|&i| {
                    family.eval_into(theta, store.x_raw(t, i), &mut out);
                    out.iter().zip(store.y_raw(t, i)).map(|(f, y)| (y - f) * (y - f)).sum::<f64>()
                })
                .sum();
            s / rows.len() as f64
        })
        .collect()
}

/// Uniform pilot fit, weights from its per-task losses, then an
/// unregularized replay fit with the realized weights.
pub fn fit_weighted_dependent(
    store: &SampleStore,
    scheme: &WeightScheme,
    space: &ParameterSpace,
    family: Family,
    opts: &SolverOptions,
) -> Result<TrainOutcome> {
    if !(scheme.w_cap >= 1.0) {
        bail!(Argument, "W_cap must be at least 1, got {}", scheme.w_cap);
    }
    if let Some(t) = (1..=store.tasks()).find(|&t| store.n(t) == 0) {
        bail!(Precondition, "task {t} has no stored samples; data-dependent weights need every n_t >= 1");
    }
    let pilot = fit_replay_with(store, &ReplayObjective::uniform(store.tasks()), space, family, opts)?;
    let report = scheme.weights(&task_losses(store, family, &pilot.theta_hat))?;
    let obj = ReplayObjective {
        weights: report.realized.clone(),
        ..ReplayObjective::uniform(store.tasks())
    };
    let mut out = fit_replay_with(store, &obj, space, family, opts)?;
    out.weights = Some(report);
    Ok(out)
}
