//! Monte-Carlo estimates of population errors and of the moment constants.
//!
//! Suprema over the function class are taken over finite probe sets, so the
//! reported `kappa`, `M2` and Monte-Carlo discrepancy values are lower
//! estimates of the true suprema.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::datagen::{InputDist, TaskSequenceSpec};
use crate::error::{bail, Result};
use crate::models::{norm, Family, ParameterSpace, Predictor};
use crate::rng::{derive, stream, tag};
use crate::transforms::DependencyChain;

pub const DEFAULT_N_EVAL: usize = 20_000;
pub const DEFAULT_N_MC: usize = 100_000;
pub const DEFAULT_N_THETA: usize = 64;
const JACKKNIFE_GROUPS: usize = 20;

/// Task-1 input law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputModel {
    pub dist: InputDist,
    pub sigma: f64,
    pub d_x: usize,
}

impl InputModel {
    pub fn of(spec: &TaskSequenceSpec) -> Self {
        Self { dist: spec.input_dist, sigma: spec.sigma, d_x: spec.d_x }
    }

    pub fn batch(&self, n: usize, seed: u64) -> Vec<DVector<f64>> {
        let std = self.sigma / (self.d_x as f64).sqrt();
        let mut rng = stream(seed, &[]);
        (0..n)
            .map(|_| {
                let mut x = DVector::zeros(self.d_x);
                self.dist.fill(std, x.as_mut_slice(), &mut rng);
                x
            })
            .collect()
    }
}

/// Per-task `E|f*(x_t) - f(x_t)|^2` with standard errors, plus weighted
/// aggregates. All tasks are evaluated on common task-1 draws.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub per_task: Vec<f64>,
    pub per_task_se: Vec<f64>,
    /// `(1/T) sum_t w_t err_t`.
    pub weighted: f64,
    pub weighted_se: f64,
    /// Uniform average over tasks.
    pub average: f64,
    pub average_se: f64,
    pub n_eval: usize,
    samples: Vec<Vec<f64>>,
}

impl ErrorReport {
    /// `sum_t c_t err_t` and its standard error.
    pub fn combine(&self, coeffs: &[f64]) -> (f64, f64) {
        let n = self.n_eval;
        let vals: Vec<f64> = (0..n)
            .map(|j| coeffs.iter().zip(&self.samples).map(|(c, s)| c * s[j]).sum())
            .collect();
        mean_se(&vals)
    }

    /// `sum_t beta_t n_t err_t / sum_t beta_t n_t` (or divided by `sum n_t`
    /// when `normalize_by_counts` is set).
    pub fn beta_weighted(&self, betas: &[f64], counts: &[usize], normalize_by_counts: bool) -> (f64, f64) {
        let den: f64 = if normalize_by_counts {
            counts.iter().map(|&n| n as f64).sum()
        } else {
            betas.iter().zip(counts).map(|(b, &n)| b * n as f64).sum()
        };
        let coeffs: Vec<f64> = betas.iter().zip(counts).map(|(b, &n)| b * n as f64 / den).collect();
        self.combine(&coeffs)
    }
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Fresh-sample estimate of the per-task and weighted estimation error.
pub fn estimation_error(spec: &TaskSequenceSpec, theta_hat: &[f64], weights: &[f64], n_eval: usize, seed: u64) -> Result<ErrorReport> {
    spec.validate()?;
    if n_eval < 100 {
        bail!(Argument, "N_eval must be at least 100, got {n_eval}");
    }
    if weights.len() != spec.tasks {
        bail!(Shape, "{} weights for {} tasks", weights.len(), spec.tasks);
    }
    let family = spec.f_star.family();
    if theta_hat.len() != family.p() {
        bail!(Shape, "theta has {} entries, family needs {}", theta_hat.len(), family.p());
    }
    let t_n = spec.tasks;
    let mut samples = vec![vec![0.0; n_eval]; t_n];
    let mut rng = stream(seed, &[tag::EVAL]);
    let (mut f, mut g) = (vec![0.0; spec.d_y], vec![0.0; spec.d_y]);
    for j in 0..n_eval {
        let x1 = spec.draw_x1(&mut rng);
        for (k, xt) in spec.chain.trajectory(&x1).iter().enumerate() {
            family.eval_into(theta_hat, xt.as_slice(), &mut f);
            spec.f_star.eval_slice(xt.as_slice(), &mut g);
            samples[k][j] = f.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    }
    let (per_task, per_task_se): (Vec<f64>, Vec<f64>) = samples.iter().map(|s| mean_se(s)).unzip();
    let mut report = ErrorReport {
        per_task,
        per_task_se,
        weighted: 0.0,
        weighted_se: 0.0,
        average: 0.0,
        average_se: 0.0,
        n_eval,
        samples,
    };
    let w: Vec<f64> = weights.iter().map(|w| w / t_n as f64).collect();
    (report.weighted, report.weighted_se) = report.combine(&w);
    (report.average, report.average_se) = report.combine(&vec![1.0 / t_n as f64; t_n]);
    Ok(report)
}

/// Probe configuration for the moment constants.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentConfig {
    pub n_mc: usize,
    pub n_theta: usize,
    pub seed: u64,
    /// Tasks entering the supremum (those with `w_t > 0`); all when `None`.
    pub tasks: Option<Vec<usize>>,
}

impl Default for MomentConfig {
    fn default() -> Self {
        Self { n_mc: DEFAULT_N_MC, n_theta: DEFAULT_N_THETA, seed: 0, tasks: None }
    }
}

/// Probe-set estimates of `kappa` and `M2` (lower estimates of the suprema).
#[derive(Clone, Debug, PartialEq)]
pub struct MomentEstimate {
    pub kappa: f64,
    /// Jackknife standard error of the maximizing probe's ratio.
    pub kappa_se: f64,
    pub m2: f64,
    pub m2_se: f64,
    /// Running supremum of `kappa` over probes, in probe order.
    pub kappa_running: Vec<f64>,
    pub m2_running: Vec<f64>,
    /// Maximizing `(theta, t)` for `kappa`.
    pub kappa_argmax: Option<(Vec<f64>, usize)>,
    /// Probes with `E|G|^2 = 0` (skipped for `kappa`).
    pub skipped: usize,
}

/// Interior draws, boundary draws, and the boundary point antipodal to `theta*`.
pub fn probe_thetas(space: &ParameterSpace, f_star: &Predictor, n_theta: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, &[tag::PROBE]);
    let mut out = Vec::with_capacity(2 * n_theta + 1);
    for _ in 0..n_theta {
        out.push(space.sample_interior(&mut rng));
        out.push(space.sample_sphere(space.radius(), &mut rng));
    }
    let s = norm(f_star.theta());
    if s > 0.0 {
        out.push(f_star.theta().iter().map(|v| -v * space.radius() / s).collect());
    }
    out
}

/// Moments of `|G_{theta,t}(x_1)|^2` over a fixed task-1 batch.
pub fn moments_on_batch(
    family: Family,
    f_star: &Predictor,
    chain: &DependencyChain,
    tasks: &[usize],
    probes: &[Vec<f64>],
    batch: &[DVector<f64>],
) -> Result<MomentEstimate> {
    if batch.is_empty() {
        bail!(Argument, "empty Monte-Carlo batch");
    }
    struct Stat {
        ratio: f64,
        ratio_se: f64,
        m2: f64,
        m2_se: f64,
    }
    // stats[probe][task]
    let mut stats: Vec<Vec<Option<Stat>>> = (0..probes.len()).map(|_| Vec::new()).collect();
    for &t in tasks {
        let xt: Vec<DVector<f64>> = batch.iter().map(|x| chain.apply(t, x)).collect::<Result<_>>()?;
        let per_probe: Vec<Option<Stat>> = probes
            .par_iter()
            .map(|theta| {
                let (mut f, mut g) = (vec![0.0; family.d_y()], vec![0.0; family.d_y()]);
                let e: Vec<f64> = xt
                    .iter()
                    .map(|x| {
                        family.eval_into(theta, x.as_slice(), &mut f);
                        f_star.eval_slice(x.as_slice(), &mut g);
                        f.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum()
                    })
                    .collect();
                let (m2, m2_se) = mean_se(&e);
                if m2 == 0.0 {
                    return None;
                }
                let e2: Vec<f64> = e.iter().map(|v| v * v).collect();
                let ratio = (e2.iter().sum::<f64>() / e.len() as f64).sqrt() / m2;
                Some(Stat { ratio, ratio_se: jackknife_ratio_se(&e), m2, m2_se })
            })
            .collect();
        for (k, s) in per_probe.into_iter().enumerate() {
            stats[k].push(s);
        }
    }
    let mut est = MomentEstimate {
        kappa: 1.0,
        kappa_se: 0.0,
        m2: 0.0,
        m2_se: 0.0,
        kappa_running: Vec::with_capacity(probes.len()),
        m2_running: Vec::with_capacity(probes.len()),
        kappa_argmax: None,
        skipped: 0,
    };
    let mut kappa_seen = f64::NEG_INFINITY;
    for (k, per_task) in stats.iter().enumerate() {
        for (ti, s) in per_task.iter().enumerate() {
            match s {
                None => {
                    est.skipped += 1;
                    log::debug!("probe {k} at task {} equals f* almost surely; skipped", tasks[ti]);
                }
                Some(s) => {
                    if s.ratio > kappa_seen {
                        kappa_seen = s.ratio;
                        est.kappa_se = s.ratio_se;
                        est.kappa_argmax = Some((probes[k].clone(), tasks[ti]));
                    }
                    if s.m2 > est.m2 {
                        est.m2 = s.m2;
                        est.m2_se = s.m2_se;
                    }
                }
            }
        }
        est.kappa_running.push(kappa_seen.max(1.0));
        est.m2_running.push(est.m2);
    }
    if kappa_seen.is_finite() {
        est.kappa = kappa_seen;
    }
    Ok(est)
}

fn jackknife_ratio_se(e: &[f64]) -> f64 {
    let g = JACKKNIFE_GROUPS.min(e.len());
    if g < 2 {
        return 0.0;
    }
    let (s1, s2): (f64, f64) = e.iter().fold((0.0, 0.0), |(a, b), v| (a + v, b + v * v));
    let n = e.len();
    let reps: Vec<f64> = (0..g)
        .map(|k| {
            let (lo, hi) = (k * n / g, (k + 1) * n / g);
            let (g1, g2) = e[lo..hi].iter().fold((0.0, 0.0), |(a, b), v| (a + v, b + v * v));
            let m = (n - (hi - lo)) as f64;
            ((s2 - g2) / m).sqrt() / ((s1 - g1) / m)
        })
        .collect();
    let mean = reps.iter().sum::<f64>() / g as f64;
    ((g as f64 - 1.0) / g as f64 * reps.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()).sqrt()
}

/// `kappa` and `M2` from `n_mc` fresh task-1 inputs and `probe_thetas` probes.
pub fn estimate_moments(
    family: Family,
    space: &ParameterSpace,
    chain: &DependencyChain,
    f_star: &Predictor,
    input: &InputModel,
    cfg: &MomentConfig,
) -> Result<MomentEstimate> {
    if cfg.n_mc < 10_000 {
        bail!(Argument, "N_mc must be at least 10^4, got {}", cfg.n_mc);
    }
    if family.d_x() != chain.d_x() || input.d_x != chain.d_x() || f_star.family() != family {
        bail!(Shape, "family, chain, input and f* dimensions disagree");
    }
    let tasks = match &cfg.tasks {
        Some(t) => t.clone(),
        None => (1..=chain.len()).collect(),
    };
    let probes = probe_thetas(space, f_star, cfg.n_theta, cfg.seed);
    let batch = input.batch(cfg.n_mc, derive(cfg.seed, &[tag::EVAL]));
    moments_on_batch(family, f_star, chain, &tasks, &probes, &batch)
}

/// `(kappa, jackknife SE)`.
pub fn estimate_kappa(
    family: Family,
    space: &ParameterSpace,
    chain: &DependencyChain,
    f_star: &Predictor,
    input: &InputModel,
    cfg: &MomentConfig,
) -> Result<(f64, f64)> {
    let e = estimate_moments(family, space, chain, f_star, input, cfg)?;
    Ok((e.kappa, e.kappa_se))
}

/// `(M2, SE)`.
pub fn estimate_m2(
    family: Family,
    space: &ParameterSpace,
    chain: &DependencyChain,
    f_star: &Predictor,
    input: &InputModel,
    cfg: &MomentConfig,
) -> Result<(f64, f64)> {
    let e = estimate_moments(family, space, chain, f_star, input, cfg)?;
    Ok((e.m2, e.m2_se))
}

/// A distribution of `x_t`: a task-1 input law pushed through the first
/// `t` maps of a chain.
#[derive(Clone, Copy, Debug)]
pub struct Arm<'a> {
    pub input: InputModel,
    pub chain: &'a DependencyChain,
    pub t: usize,
}

impl Arm<'_> {
    fn uniform_scale(&self) -> Option<f64> {
        self.chain.uniform_scale(self.t)
    }

    fn sample_key(&self) -> u64 {
        let dist = match self.input.dist {
            InputDist::Gaussian => 1,
            InputDist::BoundedUniform => 2,
            InputDist::Rademacher => 3,
        };
        derive(dist, &[self.input.sigma.to_bits(), self.input.d_x as u64])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DiscrepancyMethod {
    /// Closed form when available, Monte-Carlo otherwise.
    Auto,
    MonteCarlo { n_mc: usize, n_pairs: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscrepancyReport {
    pub value: f64,
    pub closed_form: bool,
    /// Maximizing `(theta_1, theta_2)` on the Monte-Carlo path.
    pub argmax: Option<(Vec<f64>, Vec<f64>)>,
    /// Standard error of the maximizing pair's estimate; the sup over noisy
    /// estimates is biased upward by roughly this much.
    pub optimism_gap: f64,
}

/// `sup_{theta_1, theta_2} |E_{pi_1} l(f_1, f_2) - E_{pi_2} l(f_1, f_2)|` for
/// the squared loss. For the linear family with both arms isotropically
/// scaled copies of one input law this is
/// `|s_2^2 - s_1^2| (sigma^2/d_x) diam(Theta)^2`.
pub fn discrepancy_distance(
    pi1: &Arm,
    pi2: &Arm,
    family: Family,
    space: &ParameterSpace,
    method: DiscrepancyMethod,
) -> Result<DiscrepancyReport> {
    if pi1.input.d_x != family.d_x() || pi2.input.d_x != family.d_x() {
        bail!(Shape, "arm and family dimensions disagree");
    }
    match method {
        DiscrepancyMethod::Auto => {
            if let (true, Some(s1), Some(s2)) = (family.is_linear(), pi1.uniform_scale(), pi2.uniform_scale()) {
                if pi1.input.sigma == pi2.input.sigma {
                    let var = pi1.input.sigma * pi1.input.sigma / pi1.input.d_x as f64;
                    let diam = space.diam();
                    return Ok(DiscrepancyReport {
                        value: (s2 * s2 - s1 * s1).abs() * var * (diam * diam),
                        closed_form: true,
                        argmax: None,
                        optimism_gap: 0.0,
                    });
                }
            }
            discrepancy_mc(pi1, pi2, family, space, 100_000, DEFAULT_N_THETA, 0)
        }
        DiscrepancyMethod::MonteCarlo { n_mc, n_pairs, seed } => discrepancy_mc(pi1, pi2, family, space, n_mc, n_pairs, seed),
    }
}

fn discrepancy_mc(
    pi1: &Arm,
    pi2: &Arm,
    family: Family,
    space: &ParameterSpace,
    n_mc: usize,
    n_pairs: usize,
    seed: u64,
) -> Result<DiscrepancyReport> {
    if n_mc < 2 || n_pairs == 0 {
        bail!(Argument, "Monte-Carlo discrepancy needs n_mc >= 2 and at least one pair");
    }
    let draw = |arm: &Arm| -> Result<Vec<DVector<f64>>> {
        arm.input
            .batch(n_mc, derive(seed, &[tag::EVAL, arm.sample_key()]))
            .iter()
            .map(|x| arm.chain.apply(arm.t, x))
            .collect()
    };
    let (b1, b2) = (draw(pi1)?, draw(pi2)?);
    let mut rng = stream(seed, &[tag::PROBE, 0xd]);
    let mut pairs = Vec::with_capacity(2 * n_pairs);
    for _ in 0..n_pairs {
        let a = space.sample_sphere(space.radius(), &mut rng);
        let anti: Vec<f64> = a.iter().map(|v| -v).collect();
        pairs.push((a, anti));
        pairs.push((space.sample_interior(&mut rng), space.sample_interior(&mut rng)));
    }
    let loss = |batch: &[DVector<f64>], t1: &[f64], t2: &[f64]| -> Vec<f64> {
        let (mut f, mut g) = (vec![0.0; family.d_y()], vec![0.0; family.d_y()]);
        batch
            .iter()
            .map(|x| {
                family.eval_into(t1, x.as_slice(), &mut f);
                family.eval_into(t2, x.as_slice(), &mut g);
                f.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum()
            })
            .collect()
    };
    let scored: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|(t1, t2)| {
            let (m1, se1) = mean_se(&loss(&b1, t1, t2));
            let (m2, se2) = mean_se(&loss(&b2, t1, t2));
            ((m1 - m2).abs(), (se1 * se1 + se2 * se2).sqrt())
        })
        .collect();
    let (k, &(value, gap)) = scored
        .iter()
        .enumerate()
        .fold((0, &(f64::NEG_INFINITY, 0.0)), |best, cur| if cur.1 .0 > best.1 .0 { cur } else { best });
    Ok(DiscrepancyReport {
        value,
        closed_form: false,
        argmax: Some(pairs[k].clone()),
        optimism_gap: gap,
    })
}
