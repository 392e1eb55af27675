//! Training under weighted replay, distillation, and data-dependent weights.

mod distill;
mod solve;
mod weights;

pub use distill::{distill_regularizer, fit_distill_sequence, BetaSchedule, DistillConfig, DistillVariant};
pub use solve::{SolveInfo, SolverOptions};
pub use weights::{fit_weighted_dependent, SchemeKind, WeightReport, WeightScheme};

use serde::{Deserialize, Serialize};

use crate::datagen::SampleStore;
use crate::error::{bail, Result};
use crate::models::{Family, ParameterSpace};
use solve::Design;

/// Data-independent regularizer `Omega_T`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    #[default]
    None,
    /// `|theta|^2`.
    Ridge,
}

impl Regularizer {
    pub fn value(self, theta: &[f64]) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Ridge => theta.iter().map(|v| v * v).sum(),
        }
    }

    fn lambda(self, lambda: f64) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Ridge => lambda,
        }
    }
}

/// `(1/T) sum_t (w_t/n_t) sum_{i in R_t} |y_ti - f_theta(x_ti)|^2 + lambda Omega(theta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplayObjective {
    pub weights: Vec<f64>,
    pub lambda: f64,
    pub regularizer: Regularizer,
}

impl ReplayObjective {
    pub fn uniform(tasks: usize) -> Self {
        Self {
            weights: vec![1.0; tasks],
            lambda: 0.0,
            regularizer: Regularizer::None,
        }
    }

    /// `w_t = T n_t / sum_s n_s`.
    pub fn proportional(counts: &[usize]) -> Self {
        let total: usize = counts.iter().sum();
        let t = counts.len() as f64;
        Self {
            weights: counts.iter().map(|&n| t * n as f64 / total as f64).collect(),
            lambda: 0.0,
            regularizer: Regularizer::None,
        }
    }

    fn validate(&self, tasks: usize) -> Result<()> {
        if self.weights.len() != tasks {
            bail!(Shape, "{} weights for {tasks} tasks", self.weights.len());
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            bail!(Argument, "weights must be finite and non-negative");
        }
        if self.weights.iter().all(|&w| w == 0.0) {
            bail!(Argument, "all weights are zero");
        }
        if !(self.weights[tasks - 1] > 0.0) {
            bail!(Argument, "the current task must carry positive weight");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            bail!(Argument, "lambda must be finite and non-negative");
        }
        Ok(())
    }

    fn design(&self, store: &SampleStore) -> Result<Design> {
        self.validate(store.tasks())?;
        let t_n = store.tasks() as f64;
        let mut d = Design::new(store.d_x(), store.d_y());
        for t in 1..=store.tasks() {
            let (w, n) = (self.weights[t - 1], store.n(t));
            if w == 0.0 || n == 0 {
                continue;
            }
            let a = w / (t_n * n as f64);
            for &i in store.rows(t) {
                d.push(store.x_raw(t, i), store.y_raw(t, i), a);
            }
        }
        if d.len() == 0 {
            bail!(Argument, "no available sample carries positive weight");
        }
        Ok(d)
    }
}

/// Result of a fit.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub theta_hat: Vec<f64>,
    /// `theta_hat_1, ..., theta_hat_T` for sequential paradigms.
    pub history: Vec<Vec<f64>>,
    pub objective_value: f64,
    pub solver_iters: usize,
    pub converged: bool,
    pub info: SolveInfo,
    /// Realized data-dependent weights, when they were used.
    pub weights: Option<WeightReport>,
}

pub(crate) fn solve_design(
    design: &Design,
    family: Family,
    lambda: f64,
    space: &ParameterSpace,
    init: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveInfo)> {
    if family.p() != space.p() {
        bail!(Shape, "family has p = {}, parameter space has p = {}", family.p(), space.p());
    }
    if design.d_x != family.d_x() || design.d_y != family.d_y() {
        bail!(Shape, "samples are R^{} -> R^{}, family expects R^{} -> R^{}", design.d_x, design.d_y, family.d_x(), family.d_y());
    }
    if family.is_linear() {
        solve::solve_linear(design, lambda, space)
    } else {
        solve::solve_pgd(design, family, lambda, space, init, opts)
    }
}

/// Minimizes the replay objective over `Theta`: closed form for the linear
/// family, projected gradient descent otherwise.
pub fn fit_replay(store: &SampleStore, obj: &ReplayObjective, space: &ParameterSpace, family: Family) -> Result<TrainOutcome> {
    fit_replay_with(store, obj, space, family, &SolverOptions::default())
}

pub fn fit_replay_with(
    store: &SampleStore,
    obj: &ReplayObjective,
    space: &ParameterSpace,
    family: Family,
    opts: &SolverOptions,
) -> Result<TrainOutcome> {
    let design = obj.design(store)?;
    let lambda = obj.regularizer.lambda(obj.lambda);
    let (theta, info) = solve_design(&design, family, lambda, space, None, opts)?;
    let objective_value = design.objective(family, &theta, lambda);
    Ok(TrainOutcome {
        history: vec![theta.clone()],
        theta_hat: theta,
        objective_value,
        solver_iters: info.iters,
        converged: info.converged,
        info,
        weights: None,
    })
}

/// The replay objective at `theta`, without optimizing.
pub fn objective_value(store: &SampleStore, obj: &ReplayObjective, family: Family, theta: &[f64]) -> Result<f64> {
    if theta.len() != family.p() {
        bail!(Shape, "family expects {} parameters, got {}", family.p(), theta.len());
    }
    if store.d_x() != family.d_x() || store.d_y() != family.d_y() {
        bail!(Shape, "store and family dimensions disagree");
    }
    let design = obj.design(store)?;
    let lambda = obj.regularizer.lambda(obj.lambda);
    Ok(design.objective(family, theta, lambda))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_full, InputDist, TaskSequenceSpec};
    use crate::memory::{restrict, MemoryPolicy};
    use crate::models::Predictor;
    use crate::rng::stream;
    use crate::transforms::{DependencyChain, Transformation};

    pub(crate) fn spec(d_x: usize, d_y: usize, tasks: usize, m: usize, nu: f64, seed: u64) -> TaskSequenceSpec {
        let fam = Family::Linear { d_x, d_y };
        let space = ParameterSpace::new(fam.p(), 3.0).unwrap();
        let mut rng = stream(seed, &[99]);
        let f_star = Predictor::new(fam, space.sample_sphere(1.5, &mut rng)).unwrap();
        let mut maps = vec![Transformation::Identity];
        for _ in 1..tasks {
            maps.push(Transformation::random_rotation(d_x, &mut rng).unwrap());
        }
        TaskSequenceSpec {
            d_x,
            d_y,
            tasks,
            m,
            sigma: (d_x as f64).sqrt(),
            nu,
            input_dist: InputDist::Gaussian,
            noise_dist: InputDist::Gaussian,
            chain: DependencyChain::new(d_x, maps).unwrap(),
            f_star,
            space,
            seed,
        }
    }

    #[test]
    fn noiseless_recovery_is_exact() {
        let s = spec(6, 2, 3, 12, 0.0, 1);
        let store = generate_full(&s).unwrap();
        let out = fit_replay(&store, &ReplayObjective::uniform(3), &s.space, s.f_star.family()).unwrap();
        let err = out.theta_hat.iter().zip(s.f_star.theta()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-8, "{err}");
        assert!(out.objective_value < 1e-20);
    }

    #[test]
    fn masked_weights_reduce_to_single_task_fit() {
        let s = spec(4, 1, 3, 20, 0.3, 2);
        let store = generate_full(&s).unwrap();
        let fam = s.f_star.family();
        let masked = ReplayObjective { weights: vec![0.0, 0.0, 1.0], ..ReplayObjective::uniform(3) };
        let a = fit_replay(&store, &masked, &s.space, fam).unwrap();
        let only = store.with_rows(vec![vec![], vec![], (0..20).collect()]).unwrap();
        let b = fit_replay(&only, &ReplayObjective::uniform(3), &s.space, fam).unwrap();
        assert_eq!(a.theta_hat, b.theta_hat);
        // Single-task store built from scratch.
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..20 {
            x.extend_from_slice(store.x(3, i).unwrap());
            y.extend_from_slice(store.y(3, i).unwrap());
        }
        let single = SampleStore::from_dense(1, 20, 4, 1, x, y, vec![(0..20).collect()]).unwrap();
        let c = fit_replay(&single, &ReplayObjective::uniform(1), &s.space, fam).unwrap();
        for (p, q) in a.theta_hat.iter().zip(&c.theta_hat) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn objective_examples() {
        let s = spec(3, 2, 2, 10, 0.0, 3);
        let store = generate_full(&s).unwrap();
        let fam = s.f_star.family();
        let obj = ReplayObjective::uniform(2);
        assert_eq!(objective_value(&store, &obj, fam, s.f_star.theta()).unwrap(), 0.0);

        let noisy = spec(3, 2, 2, 10, 0.7, 3);
        let store = generate_full(&noisy).unwrap();
        let got = objective_value(&store, &obj, fam, noisy.f_star.theta()).unwrap();
        // Oracle: residuals are the injected noise, recomputed from its streams.
        let mut want = 0.0;
        for t in 1..=2u64 {
            let mut sum = 0.0;
            for i in 0..10u64 {
                let mut rng = stream(noisy.seed, &[crate::rng::tag::NOISE, t, i]);
                for _ in 0..2 {
                    let v = noisy.noise_dist.draw(noisy.nu, &mut rng);
                    sum += v * v;
                }
            }
            want += (1.0 / 10.0) * sum;
        }
        want /= 2.0;
        assert!((got - want).abs() < 1e-12 * want, "{got} vs {want}");

        let theta = vec![0.1; 6];
        let v1 = objective_value(&store, &obj, fam, &theta).unwrap();
        let doubled = ReplayObjective { weights: vec![2.0, 2.0], ..obj.clone() };
        assert_eq!(objective_value(&store, &doubled, fam, &theta).unwrap(), 2.0 * v1);
        assert!(matches!(objective_value(&store, &obj, fam, &theta[..5]), Err(crate::Error::Shape(_))));
    }

    #[test]
    fn invalid_weights_are_rejected() {
        let s = spec(2, 1, 2, 5, 0.1, 4);
        let store = generate_full(&s).unwrap();
        let fam = s.f_star.family();
        let zero = ReplayObjective { weights: vec![0.0, 0.0], ..ReplayObjective::uniform(2) };
        assert!(matches!(fit_replay(&store, &zero, &s.space, fam), Err(crate::Error::Argument(_))));
        let neg = ReplayObjective { weights: vec![-1.0, 1.0], ..ReplayObjective::uniform(2) };
        assert!(fit_replay(&store, &neg, &s.space, fam).is_err());
    }

    #[test]
    fn weight_scale_invariance_is_exact() {
        let s = spec(5, 2, 3, 40, 0.5, 5);
        let full = generate_full(&s).unwrap();
        let store = restrict(&full, &MemoryPolicy::random(vec![15, 25], 1), 3).unwrap();
        let fam = s.f_star.family();
        let base = ReplayObjective { weights: vec![0.3, 1.7, 1.0], lambda: 0.01, regularizer: Regularizer::Ridge };
        let a = fit_replay(&store, &base, &s.space, fam).unwrap();
        for c in [0.5, 2.0, 4.0, 0.125] {
            let scaled = ReplayObjective {
                weights: base.weights.iter().map(|w| w * c).collect(),
                lambda: base.lambda * c,
                regularizer: Regularizer::Ridge,
            };
            assert_eq!(fit_replay(&store, &scaled, &s.space, fam).unwrap().theta_hat, a.theta_hat);
        }
    }

    #[test]
    fn fits_beat_the_true_parameter() {
        for seed in 0..5 {
            let s = spec(4, 2, 3, 30, 0.4, 10 + seed);
            let full = generate_full(&s).unwrap();
            let store = restrict(&full, &MemoryPolicy::random(vec![10], seed), 3).unwrap();
            let fam = s.f_star.family();
            let obj = ReplayObjective { weights: vec![0.5, 1.0, 1.5], lambda: 1e-3, regularizer: Regularizer::Ridge };
            let out = fit_replay(&store, &obj, &s.space, fam).unwrap();
            let at_star = objective_value(&store, &obj, fam, s.f_star.theta()).unwrap();
            assert!(out.objective_value <= at_star + 1e-9);
            assert!(s.space.contains(&out.theta_hat));
        }
    }

    #[test]
    fn nonlinear_fit_is_a_labelled_local_solution() {
        let fam = Family::Mlp { d_x: 3, d_y: 1, hidden: 4 };
        let space = ParameterSpace::new(fam.p(), 3.0).unwrap();
        let mut rng = stream(6, &[]);
        let f_star = Predictor::new(fam, space.sample_sphere(1.0, &mut rng)).unwrap();
        let s = TaskSequenceSpec {
            d_x: 3,
            d_y: 1,
            tasks: 2,
            m: 60,
            sigma: 3f64.sqrt(),
            nu: 0.05,
            input_dist: InputDist::Gaussian,
            noise_dist: InputDist::Gaussian,
            chain: DependencyChain::identity(3, 2),
            f_star,
            space,
            seed: 6,
        };
        let store = generate_full(&s).unwrap();
        let opts = SolverOptions { max_iter: 20_000, tol: 1e-6, ..SolverOptions::default() };
        let out = fit_replay_with(&store, &ReplayObjective::uniform(2), &space, fam, &opts).unwrap();
        assert!(out.info.local_solution);
        assert!(space.contains(&out.theta_hat));
        let at_start = objective_value(&store, &ReplayObjective::uniform(2), fam, &vec![0.0; fam.p()]).unwrap();
        assert!(out.objective_value < at_start);
    }
}
