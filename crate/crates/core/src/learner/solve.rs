//! Weighted least-squares solvers shared by every paradigm.

use nalgebra::{DMatrix, DVector};

use crate::error::{bail, Result};
use crate::models::{dot, norm, Family, ParameterSpace};
use crate::rng::{stream, tag};

/// Rows `(x_k, target_k)` with coefficients `a_k`; the objective is
/// `sum_k a_k |target_k - f_theta(x_k)|^2 + lambda |theta|^2`.
#[derive(Clone, Debug, Default)]
pub(crate) struct Design {
    pub d_x: usize,
    pub d_y: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub a: Vec<f64>,
}

impl Design {
    pub fn new(d_x: usize, d_y: usize) -> Self {
        Self { d_x, d_y, ..Self::default() }
    }

    pub fn push(&mut self, x: &[f64], y: &[f64], a: f64) {
        self.x.extend_from_slice(x);
        self.y.extend_from_slice(y);
        self.a.push(a);
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn row(&self, k: usize) -> (&[f64], &[f64], f64) {
        (
            &self.x[k * self.d_x..(k + 1) * self.d_x],
            &self.y[k * self.d_y..(k + 1) * self.d_y],
            self.a[k],
        )
    }

    pub fn objective(&self, family: Family, theta: &[f64], lambda: f64) -> f64 {
        let mut out = vec![0.0; self.d_y];
        let mut total = 0.0;
        for k in 0..self.len() {
            let (x, y, a) = self.row(k);
            if a == 0.0 {
                continue;
            }
            family.eval_into(theta, x, &mut out);
            total += a * out.iter().zip(y).map(|(f, t)| (t - f) * (t - f)).sum::<f64>();
        }
        total + lambda * theta.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Solver knobs for the iterative path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Stop once the gradient-mapping norm falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed for the random initial point of nonlinear families.
    pub init_seed: u64,
    /// Scale of the random initial point.
    pub init_scale: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 100_000,
            init_seed: 0,
            init_scale: 0.1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveInfo {
    pub iters: usize,
    pub converged: bool,
    pub rank_deficient: bool,
    pub projected: bool,
    /// Iterative solutions of non-convex objectives are only stationary points.
    pub local_solution: bool,
}

const CHUNK: usize = 2048;

/// Globally optimal solution for the linear family: a streamed QR of the
/// weighted design `[sqrt(a) x | sqrt(a) y]`, with `sqrt(lambda) I` rows
/// for the ridge term. Rank-deficient systems get the minimum-norm solution.
/// Solutions outside `Theta` are projected onto it.
pub(crate) fn solve_linear(design: &Design, lambda: f64, space: &ParameterSpace) -> Result<(Vec<f64>, SolveInfo)> {
    let (d_x, d_y) = (design.d_x, design.d_y);
    let scale = design.a.iter().copied().fold(0.0, f64::max);
    if !(scale > 0.0) {
        bail!(Argument, "objective has no positively weighted samples");
    }
    let cols = d_x + d_y;
    let mut r = DMatrix::<f64>::zeros(0, cols);
    let mut block = Vec::with_capacity(CHUNK);
    let flush = |r: &mut DMatrix<f64>, block: &mut Vec<DVector<f64>>| {
        if block.is_empty() {
            return;
        }
        let mut stacked = DMatrix::<f64>::zeros(r.nrows() + block.len(), cols);
        stacked.rows_mut(0, r.nrows()).copy_from(r);
        for (k, row) in block.iter().enumerate() {
            stacked.row_mut(r.nrows() + k).copy_from(&row.transpose());
        }
        block.clear();
        let rr = stacked.qr().r();
        *r = rr;
    };
    for k in 0..design.len() {
        let (x, y, a) = design.row(k);
        if a == 0.0 {
            continue;
        }
        let s = (a / scale).sqrt();
        block.push(DVector::from_iterator(cols, x.iter().chain(y).map(|v| v * s)));
        if block.len() == CHUNK {
            flush(&mut r, &mut block);
        }
    }
    let lam = lambda / scale;
    if lam > 0.0 {
        let s = lam.sqrt();
        for j in 0..d_x {
            let mut row = DVector::zeros(cols);
            row[j] = s;
            block.push(row);
        }
    }
    flush(&mut r, &mut block);

    let k = r.nrows().min(d_x);
    let r11 = r.view((0, 0), (k, d_x)).into_owned();
    let r12 = r.view((0, d_x), (k, d_y)).into_owned();
    let diag_max = (0..k).map(|j| r11[(j, j)].abs()).fold(0.0, f64::max);
    let tol = diag_max * (d_x.max(design.len()) as f64) * f64::EPSILON;
    let full_rank = k == d_x && (0..k).all(|j| r11[(j, j)].abs() > tol);
    let mut info = SolveInfo { converged: true, ..SolveInfo::default() };
    // Columns of `sol` are the rows of the d_y x d_x parameter matrix.
    let sol: DMatrix<f64> = match full_rank.then(|| r11.solve_upper_triangular(&r12)).flatten() {
        Some(s) => s,
        None => {
            info.rank_deficient = true;
            let svd = r11.svd(true, true);
            let eps = svd.singular_values.max() * (d_x.max(k) as f64) * f64::EPSILON;
            svd.pseudo_inverse(eps).map_err(|e| crate::Error::Argument(e.to_string()))? * r12
        }
    };
    let mut theta = Vec::with_capacity(d_x * d_y);
    for row in 0..d_y {
        theta.extend(sol.column(row).iter().copied());
    }
    if norm(&theta) > space.radius() {
        theta = space.project(&theta);
        info.projected = true;
    }
    Ok((theta, info))
}

/// Projected gradient descent with step `1/L`, `L` from power iteration on
/// the Gauss-Newton matrix and doubled whenever a step fails to decrease the
/// objective.
pub(crate) fn solve_pgd(
    design: &Design,
    family: Family,
    lambda: f64,
    space: &ParameterSpace,
    init: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveInfo)> {
    let scale = design.a.iter().copied().fold(0.0, f64::max);
    if !(scale > 0.0) {
        bail!(Argument, "objective has no positively weighted samples");
    }
    let lam = lambda / scale;
    let mut theta = match init {
        Some(t) => space.project(t),
        None => {
            let mut rng = stream(opts.init_seed, &[tag::INIT]);
            space.project(&space.sample_sphere(opts.init_scale.min(space.radius()), &mut rng))
        }
    };
    let obj = |th: &[f64]| scaled_objective(design, family, th, lam, scale);
    let grad = |th: &[f64]| scaled_gradient(design, family, th, lam, scale);

    let mut lip = gauss_newton_norm(design, family, &theta, lam, scale).max(1e-12);
    let mut f = obj(&theta);
    let mut info = SolveInfo {
        local_solution: !family.is_linear(),
        ..SolveInfo::default()
    };
    for it in 0..opts.max_iter {
        let g = grad(&theta);
        loop {
            let cand: Vec<f64> = space.project(&theta.iter().zip(&g).map(|(t, gi)| t - gi / lip).collect::<Vec<_>>());
            let fc = obj(&cand);
            if fc <= f || lip > 1e300 {
                let step = norm(&cand.iter().zip(&theta).map(|(a, b)| a - b).collect::<Vec<_>>());
                theta = cand;
                f = fc;
                info.iters = it + 1;
                // Gradient mapping is in units of the unscaled objective.
                if step * lip * scale < opts.tol {
                    info.converged = true;
                    return Ok((theta, info));
                }
                break;
            }
            lip *= 2.0;
        }
    }
    Ok((theta, info))
}

fn scaled_objective(design: &Design, family: Family, theta: &[f64], lam: f64, scale: f64) -> f64 {
    let mut out = vec![0.0; design.d_y];
    let mut total = 0.0;
    for k in 0..design.len() {
        let (x, y, a) = design.row(k);
        family.eval_into(theta, x, &mut out);
        total += (a / scale) * out.iter().zip(y).map(|(f, t)| (t - f) * (t - f)).sum::<f64>();
    }
    total + lam * dot(theta, theta)
}

fn scaled_gradient(design: &Design, family: Family, theta: &[f64], lam: f64, scale: f64) -> Vec<f64> {
    let mut g: Vec<f64> = theta.iter().map(|t| 2.0 * lam * t).collect();
    let mut out = vec![0.0; design.d_y];
    for k in 0..design.len() {
        let (x, y, a) = design.row(k);
        family.eval_into(theta, x, &mut out);
        for (o, t) in out.iter_mut().zip(y) {
            *o -= t;
        }
        family.vjp(theta, x, &out, 2.0 * a / scale, &mut g);
    }
    g
}

fn gauss_newton_norm(design: &Design, family: Family, theta: &[f64], lam: f64, scale: f64) -> f64 {
    let p = family.p();
    let mut v: Vec<f64> = (0..p).map(|j| 1.0 + (j as f64 * 0.618).fract()).collect();
    let mut est = 0.0;
    let mut jv = vec![0.0; design.d_y];
    for _ in 0..30 {
        let n = norm(&v);
        if n == 0.0 {
            break;
        }
        v.iter_mut().for_each(|x| *x /= n);
        let mut w: Vec<f64> = v.iter().map(|x| 2.0 * lam * x).collect();
        for k in 0..design.len() {
            let (x, _, a) = design.row(k);
            family.jvp(theta, x, &v, &mut jv);
            family.vjp(theta, x, &jv, 2.0 * a / scale, &mut w);
        }
        est = norm(&w);
        v = w;
    }
    est
}
