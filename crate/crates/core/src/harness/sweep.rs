//! Grid x trial experiment runs.

use rayon::prelude::*;

use super::config::{ExperimentConfig, Paradigm, WeightMode};
use super::table::{aggregate, join, Row, RUN};
use crate::bounds::{net_constant, radii, theorem_bound, BoundInputs, BoundKind, BoundValue};
use crate::datagen::{generate_full, TaskSequenceSpec};
use crate::error::{bail, Result};
use crate::learner::{fit_distill_sequence, fit_replay_with, fit_weighted_dependent, Regularizer, ReplayObjective, TrainOutcome};
use crate::memory::restrict;
use crate::metrics::{discrepancy_distance, estimate_moments, estimation_error, Arm, DiscrepancyMethod, InputModel, MomentConfig};
use crate::models::c_max_probe;
use crate::rng::{derive, tag};

pub const PROVENANCE: &str = concat!("cl-recovery ", env!("CARGO_PKG_VERSION"));

/// Problem constants shared by every trial of a grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridConstants {
    pub kappa: f64,
    pub m2: f64,
    pub lf: f64,
    pub c_max: f64,
    pub l_g: f64,
    pub k_g: f64,
    pub alpha: f64,
    pub b: f64,
}

/// Estimates `kappa`, `M2`, `L_F`, `C_max`, `L_G`, `k_G` and `B` for a spec.
/// `L_F` is taken on the input radius `r_x` pushed through the chain.
pub fn grid_constants(spec: &TaskSequenceSpec, cfg: &ExperimentConfig, seed: u64) -> Result<GridConstants> {
    let family = spec.f_star.family();
    let probe = BoundInputs {
        sigma: spec.sigma,
        nu: spec.nu,
        d_x: spec.d_x,
        d_y: spec.d_y,
        m: spec.m,
        delta: cfg.eval.delta,
        ..placeholder_inputs()
    };
    let (r_x, _) = radii(&probe)?;
    let r_prime = r_x * spec.chain.max_cumulative_lipschitz();
    let lf = family.lipschitz_f(spec.space.radius(), r_prime).max(f64::MIN_POSITIVE);
    let c_max = c_max_probe(family, &spec.space, &spec.chain, &spec.f_star, cfg.eval.c_max_probes, derive(seed, &[tag::PROBE]))?;
    let lip = spec.chain.lipschitz_constants(lf, c_max)?;
    let moments = estimate_moments(
        family,
        &spec.space,
        &spec.chain,
        &spec.f_star,
        &InputModel::of(spec),
        &MomentConfig { n_mc: cfg.eval.n_mc, n_theta: cfg.eval.n_theta, seed: derive(seed, &[tag::EVAL]), tasks: None },
    )?;
    Ok(GridConstants {
        kappa: moments.kappa,
        m2: moments.m2,
        lf,
        c_max,
        l_g: lip.l_g,
        k_g: lip.k_g,
        alpha: lip.alpha,
        b: net_constant(spec.space.diam(), lf),
    })
}

fn placeholder_inputs() -> BoundInputs {
    BoundInputs {
        p: 1,
        d_x: 1,
        d_y: 1,
        sigma: 0.0,
        nu: 0.0,
        tasks: 1,
        m: 1,
        n: vec![1],
        w: vec![1.0],
        delta: crate::bounds::DEFAULT_DELTA,
        c: crate::bounds::DEFAULT_C,
        kappa: 1.0,
        m2: 0.0,
        l_g: 0.0,
        k_g: 0.0,
        alpha: 1.0,
        b: 0.0,
        omega_at_fstar: 0.0,
        lambda: 0.0,
        beta: Vec::new(),
    }
}

/// Bound inputs for one run with realized counts and weights.
pub fn bound_inputs(
    spec: &TaskSequenceSpec,
    cfg: &ExperimentConfig,
    consts: &GridConstants,
    counts: &[usize],
    weights: &[f64],
    beta: Vec<f64>,
) -> BoundInputs {
    let (lambda, omega) = match cfg.paradigm {
        Paradigm::Replay if cfg.replay.regularizer != Regularizer::None && cfg.replay.lambda > 0.0 => {
            (cfg.replay.lambda, cfg.replay.regularizer.value(spec.f_star.theta()))
        }
        _ => (0.0, 0.0),
    };
    BoundInputs {
        p: spec.f_star.family().p(),
        d_x: spec.d_x,
        d_y: spec.d_y,
        sigma: spec.sigma,
        nu: spec.nu,
        tasks: spec.tasks,
        m: spec.m,
        n: counts.to_vec(),
        w: weights.to_vec(),
        delta: cfg.eval.delta,
        c: cfg.eval.c,
        kappa: consts.kappa,
        m2: consts.m2,
        l_g: consts.l_g,
        k_g: consts.k_g,
        alpha: consts.alpha,
        b: consts.b,
        omega_at_fstar: omega,
        lambda,
        beta,
    }
}

/// Everything one run produces besides the CSV row.
#[derive(Clone, Debug)]
pub struct RunDetail {
    pub row: Row,
    pub outcome: TrainOutcome,
    pub bound: Option<(BoundInputs, BoundValue)>,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    /// Run rows in (grid, trial) order, then one aggregate row per grid point.
    pub rows: Vec<Row>,
    pub constants: Vec<Option<GridConstants>>,
    pub runs: usize,
    pub failures: usize,
    pub out_of_regime: usize,
}

impl SweepResult {
    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.runs as f64
    }
}

fn weights_for(point: &ExperimentConfig, counts: &[usize]) -> Result<Vec<f64>> {
    Ok(match point.replay.weights {
        WeightMode::Uniform => vec![1.0; counts.len()],
        WeightMode::Proportional => ReplayObjective::proportional(counts).weights,
        WeightMode::Explicit => match &point.replay.values {
            Some(v) if v.len() == counts.len() => v.clone(),
            Some(v) => bail!(Config, "{} explicit weights for {} tasks", v.len(), counts.len()),
            None => bail!(Config, "explicit weights need `replay.values`"),
        },
    })
}

/// Weights the bound is evaluated with (`w_t = W_cap` for data-dependent
/// weights), the `beta_t` (distillation only), and the bound kind.
pub fn planned_weights(point: &ExperimentConfig, counts: &[usize]) -> Result<(Vec<f64>, Vec<f64>, BoundKind)> {
    let t_n = counts.len();
    Ok(match point.paradigm {
        Paradigm::Replay => (weights_for(point, counts)?, Vec::new(), BoundKind::General),
        Paradigm::Distill => {
            let beta = point.distill.beta.betas(t_n)?;
            (BoundInputs::distill_weights(counts, point.spec.m, &beta), beta, BoundKind::Distill)
        }
        Paradigm::DepWeights => {
            let w_cap = point.weight_scheme(counts).w_cap;
            (vec![w_cap; t_n], Vec::new(), BoundKind::DepWeights { w_cap })
        }
    })
}

/// Constants and bound at grid point 0, with the counts of trial 0.
pub fn bound_at(cfg: &ExperimentConfig) -> Result<(GridConstants, BoundInputs, BoundValue)> {
    let point = cfg.point(0)?;
    let data_seed = derive(cfg.seed, &[tag::TRIAL, 0, 0]);
    let spec = point.build_spec(data_seed)?;
    let consts = grid_constants(&spec, &point, derive(cfg.seed, &[tag::PROBE, 0]))?;
    let store = generate_full(&spec)?;
    let counts = restrict(&store, &point.policy(derive(data_seed, &[tag::MEMORY]))?, spec.tasks)?.counts();
    let (w, beta, kind) = planned_weights(&point, &counts)?;
    let inputs = bound_inputs(&spec, &point, &consts, &counts, &w, beta);
    let value = theorem_bound(&inputs, kind)?;
    Ok((consts, inputs, value))
}

/// Generate, restrict, fit, measure and (optionally) bound one trial.
pub fn run_one(point: &ExperimentConfig, g: usize, trial: usize, consts: Option<&GridConstants>) -> Result<RunDetail> {
    let data_seed = derive(point.seed, &[tag::TRIAL, g as u64, trial as u64]);
    let spec = point.build_spec(data_seed)?;
    let store = generate_full(&spec)?;
    let policy = point.policy(derive(data_seed, &[tag::MEMORY]))?;
    let opts = point.solver_options(derive(data_seed, &[tag::INIT]));
    let family = spec.f_star.family();
    let t_n = spec.tasks;
    let view = restrict(&store, &policy, t_n)?;
    let counts = view.counts();
    let (planned, beta, kind) = planned_weights(point, &counts)?;
    let (outcome, weights) = match point.paradigm {
        Paradigm::Replay => {
            let obj = ReplayObjective { weights: planned.clone(), lambda: point.replay.lambda, regularizer: point.replay.regularizer };
            (fit_replay_with(&view, &obj, &spec.space, family, &opts)?, planned)
        }
        Paradigm::Distill => (fit_distill_sequence(&store, &policy, &point.distill, &spec.space, family, &opts)?, planned),
        Paradigm::DepWeights => {
            let out = fit_weighted_dependent(&view, &point.weight_scheme(&counts), &spec.space, family, &opts)?;
            let w = out.weights.as_ref().map(|r| r.realized.clone()).unwrap_or_else(|| vec![1.0; t_n]);
            (out, w)
        }
    };
    let err = estimation_error(&spec, &outcome.theta_hat, &weights, point.eval.n_eval, derive(data_seed, &[tag::EVAL]))?;
    let err_beta = (!beta.is_empty()).then(|| err.beta_weighted(&beta, &counts, true).0);
    let discrepancy = discrepancy(&spec, point)?;
    let bound = match consts {
        Some(c) => {
            let inputs = bound_inputs(&spec, point, c, &counts, &weights, beta);
            let value = theorem_bound(&inputs, kind)?;
            Some((inputs, value))
        }
        None => None,
    };
    let row = Row {
        kind: RUN.into(),
        grid_index: g,
        axis: point.sweep.axis.map_or("", |a| a.name()).into(),
        axis_value: point.axis_value(g),
        trial,
        paradigm: point.paradigm.name().into(),
        tasks: t_n,
        m: spec.m,
        n_min: counts.iter().copied().min().unwrap_or(0),
        total_samples: counts.iter().sum(),
        seed: point.seed,
        objective: outcome.objective_value,
        converged: outcome.converged,
        err_weighted: err.weighted,
        err_se: err.weighted_se,
        err_avg: err.average,
        err_beta,
        err_tasks: join(&err.per_task),
        discrepancy,
        bound_value: bound.as_ref().map(|(_, v)| v.value),
        in_regime: bound.as_ref().map(|(_, v)| v.in_regime),
        config_hash: point.hash(),
        provenance: PROVENANCE.into(),
    };
    Ok(RunDetail { row, outcome, bound })
}

/// Discrepancy between the task-1 and task-T input laws: closed form when the
/// chain is a pure scaling, Monte-Carlo only when enabled.
fn discrepancy(spec: &TaskSequenceSpec, cfg: &ExperimentConfig) -> Result<Option<f64>> {
    let family = spec.f_star.family();
    let closed = family.is_linear() && spec.chain.uniform_scale(spec.tasks).is_some();
    if !closed && !cfg.eval.discrepancy_mc {
        return Ok(None);
    }
    let input = InputModel::of(spec);
    let a1 = Arm { input, chain: &spec.chain, t: 1 };
    let a2 = Arm { input, chain: &spec.chain, t: spec.tasks };
    let report = discrepancy_distance(&a1, &a2, family, &spec.space, DiscrepancyMethod::Auto)?;
    Ok(Some(report.value))
}

/// Runs every grid point and trial on the rayon pool; rows come back in
/// (grid, trial) order whatever the completion order.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let points: Vec<ExperimentConfig> = (0..cfg.grid_len()).map(|g| cfg.point(g)).collect::<Result<_>>()?;
    let constants: Vec<Option<GridConstants>> = if cfg.eval.bound {
        points
            .iter()
            .enumerate()
            .map(|(g, p)| {
                let spec = p.build_spec(derive(cfg.seed, &[tag::TRIAL, g as u64]))?;
                grid_constants(&spec, p, derive(cfg.seed, &[tag::PROBE, g as u64])).map(Some)
            })
            .collect::<Result<_>>()?
    } else {
        vec![None; points.len()]
    };
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|g| (0..cfg.trials).map(move |k| (g, k))).collect();
    let hash = cfg.hash();
    let rows: Vec<Row> = jobs
        .par_iter()
        .map(|&(g, k)| {
            run_one(&points[g], g, k, constants[g].as_ref()).map(|d| Row { config_hash: hash.clone(), ..d.row })
        })
        .collect::<Result<_>>()?;
    let failures = rows.iter().filter(|r| !r.converged).count();
    let out_of_regime = rows.iter().filter(|r| r.in_regime == Some(false)).count();
    if failures > 0 {
        log::warn!("{failures} of {} fits did not converge; excluded from aggregates", rows.len());
    }
    let runs = rows.len();
    let mut all = rows;
    let agg = aggregate(&all);
    all.extend(agg);
    Ok(SweepResult { rows: all, constants, runs, failures, out_of_regime })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::table::fit_loglog_slope;

    fn cfg(extra: &[&str]) -> ExperimentConfig {
        let base = r#"
seed = 11
trials = 1

[spec]
d_x = 4
d_y = 2
tasks = 3
m = 40
nu = 0.1

[eval]
n_eval = 500
bound = false
delta = 0.05
c = 2.0
n_mc = 10000
n_theta = 8
c_max_probes = 16
discrepancy_mc = false
failure_threshold = 0.1
"#;
        let o: Vec<String> = extra.iter().map(|s| s.to_string()).collect();
        ExperimentConfig::from_toml_with(base, &o).unwrap()
    }

    #[test]
    fn single_point_gives_one_run_and_one_aggregate() {
        let r = run_sweep(&cfg(&[])).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(!r.rows[0].is_aggregate() && r.rows[1].is_aggregate());
        assert_eq!(r.rows[1].err_weighted, r.rows[0].err_weighted);
    }

    #[test]
    fn every_paradigm_runs_with_bounds() {
        for p in ["replay", "distill", "dep-weights"] {
            let c = cfg(&[&format!("paradigm={p}"), "eval.bound=true", "memory.kind=random", "memory.fractions=[0.5]"]);
            let r = run_sweep(&c).unwrap();
            let run = &r.rows[0];
            assert!(run.bound_value.unwrap() > 0.0, "{p}");
            assert_eq!(run.err_beta.is_some(), p == "distill");
            assert_eq!(run.n_min, 20);
        }
    }

    #[test]
    fn sweep_is_deterministic_and_slope_is_computable() {
        let c = cfg(&["trials=3", "sweep.axis=total_samples", "sweep.grid=[120.0, 240.0, 480.0]"]);
        let a = super::super::table::table_to_string(&run_sweep(&c).unwrap().rows).unwrap();
        let b = super::super::table::table_to_string(&run_sweep(&c).unwrap().rows).unwrap();
        assert_eq!(a, b);
        let rows = super::super::table::read_table(a.as_bytes()).unwrap();
        let (slope, _) = fit_loglog_slope(&rows, "total_samples", "err_weighted").unwrap();
        assert!(slope < 0.0);
    }
}
