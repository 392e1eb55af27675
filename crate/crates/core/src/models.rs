//! Parameterized predictors `f_theta` over a Euclidean ball `Theta`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::rng::{stream, tag};
use crate::transforms::DependencyChain;

/// Function class `F`.
///
/// `Linear` reads `theta` as a row-major `d_y x d_x` matrix. `Mlp` is a one
/// hidden layer tanh network `W2 tanh(W1 x + b1) + b2`, flattened as
/// `[W1 (row-major h x d_x), b1, W2 (row-major d_y x h), b2]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    Linear { d_x: usize, d_y: usize },
    Mlp { d_x: usize, d_y: usize, hidden: usize },
}

impl Family {
    pub fn d_x(&self) -> usize {
        match *self {
            Self::Linear { d_x, .. } | Self::Mlp { d_x, .. } => d_x,
        }
    }

    pub fn d_y(&self) -> usize {
        match *self {
            Self::Linear { d_y, .. } | Self::Mlp { d_y, .. } => d_y,
        }
    }

    /// Parameter dimension `p`.
    pub fn p(&self) -> usize {
        match *self {
            Self::Linear { d_x, d_y } => d_x * d_y,
            Self::Mlp { d_x, d_y, hidden } => hidden * d_x + hidden + d_y * hidden + d_y,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Self::Linear { .. })
    }

    /// `f_theta(x)` into `out`. Slices must have lengths `p`, `d_x`, `d_y`.
    pub fn eval_into(&self, theta: &[f64], x: &[f64], out: &mut [f64]) {
        match *self {
            Self::Linear { d_x, .. } => {
                for (r, o) in out.iter_mut().enumerate() {
                    *o = dot(&theta[r * d_x..(r + 1) * d_x], x);
                }
            }
            Self::Mlp { d_x, d_y, hidden } => {
                let l = MlpLayout::new(d_x, d_y, hidden);
                let z: Vec<f64> = (0..hidden)
                    .map(|k| (dot(&theta[l.w1 + k * d_x..l.w1 + (k + 1) * d_x], x) + theta[l.b1 + k]).tanh())
                    .collect();
                for (r, o) in out.iter_mut().enumerate() {
                    *o = dot(&theta[l.w2 + r * hidden..l.w2 + (r + 1) * hidden], &z) + theta[l.b2 + r];
                }
            }
        }
    }

    /// Directional derivative `J_theta(x) v` into `out`.
    pub fn jvp(&self, theta: &[f64], x: &[f64], v: &[f64], out: &mut [f64]) {
        match *self {
            Self::Linear { .. } => self.eval_into(v, x, out),
            Self::Mlp { d_x, d_y, hidden } => {
                let l = MlpLayout::new(d_x, d_y, hidden);
                let mut z = vec![0.0; hidden];
                let mut dz = vec![0.0; hidden];
                for k in 0..hidden {
                    let w = l.w1 + k * d_x;
                    let a = dot(&theta[w..w + d_x], x) + theta[l.b1 + k];
                    z[k] = a.tanh();
                    let da = dot(&v[w..w + d_x], x) + v[l.b1 + k];
                    dz[k] = (1.0 - z[k] * z[k]) * da;
                }
                for (r, o) in out.iter_mut().enumerate() {
                    let w = l.w2 + r * hidden;
                    *o = dot(&v[w..w + hidden], &z) + v[l.b2 + r] + dot(&theta[w..w + hidden], &dz);
                }
            }
        }
    }

    /// `grad += scale * J_theta(x)^T u`.
    pub fn vjp(&self, theta: &[f64], x: &[f64], u: &[f64], scale: f64, grad: &mut [f64]) {
        match *self {
            Self::Linear { d_x, .. } => {
                for (r, &ur) in u.iter().enumerate() {
                    let s = scale * ur;
                    for (g, &xc) in grad[r * d_x..(r + 1) * d_x].iter_mut().zip(x) {
                        *g += s * xc;
                    }
                }
            }
            Self::Mlp { d_x, d_y, hidden } => {
                let l = MlpLayout::new(d_x, d_y, hidden);
                let mut z = vec![0.0; hidden];
                for (k, zk) in z.iter_mut().enumerate() {
                    let w = l.w1 + k * d_x;
                    *zk = (dot(&theta[w..w + d_x], x) + theta[l.b1 + k]).tanh();
                }
                let mut gz = vec![0.0; hidden];
                for (r, &ur) in u.iter().enumerate() {
                    let s = scale * ur;
                    let w = l.w2 + r * hidden;
                    for k in 0..hidden {
                        grad[w + k] += s * z[k];
                        gz[k] += s * theta[w + k];
                    }
                    grad[l.b2 + r] += s;
                }
                for k in 0..hidden {
                    let ga = gz[k] * (1.0 - z[k] * z[k]);
                    let w = l.w1 + k * d_x;
                    for (g, &xc) in grad[w..w + d_x].iter_mut().zip(x) {
                        *g += ga * xc;
                    }
                    grad[l.b1 + k] += ga;
                }
            }
        }
    }

    /// `L_F` under the sup-over-ball norm on `B_{r'}`: the larger of the
    /// parameter-Lipschitz constant on `B_{r'}` and the input-Lipschitz
    /// constant over `Theta`.
    pub fn lipschitz_f(&self, radius: f64, r_prime: f64) -> f64 {
        match *self {
            Self::Linear { .. } => r_prime.max(radius),
            Self::Mlp { hidden, .. } => {
                let param = (hidden as f64 + 1.0 + radius * radius * (r_prime * r_prime + 1.0)).sqrt();
                param.max(radius * radius)
            }
        }
    }
}

struct MlpLayout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

impl MlpLayout {
    fn new(d_x: usize, d_y: usize, hidden: usize) -> Self {
        let b1 = hidden * d_x;
        let w2 = b1 + hidden;
        Self { w1: 0, b1, w2, b2: w2 + d_y * hidden }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const PROJ_SLACK: f64 = 1e-14;

/// Closed Euclidean ball `{theta : |theta| <= R}` in `R^p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    p: usize,
    radius: f64,
}

impl ParameterSpace {
    pub fn new(p: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            bail!(Argument, "parameter radius must be positive and finite, got {radius}");
        }
        Ok(Self { p, radius })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn diam(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.p && norm(theta) <= self.radius * (1.0 + PROJ_SLACK)
    }

    /// Radial projection onto the ball.
    pub fn project(&self, theta: &[f64]) -> Vec<f64> {
        let n = norm(theta);
        // Rescaled points may land a few ulps outside; keep them fixed.
        if n <= self.radius * (1.0 + PROJ_SLACK) {
            return theta.to_vec();
        }
        let s = self.radius / n;
        theta.iter().map(|v| v * s).collect()
    }

    /// Uniform direction scaled to `radius`.
    pub fn sample_sphere<R: Rng + ?Sized>(&self, radius: f64, rng: &mut R) -> Vec<f64> {
        loop {
            let g: Vec<f64> = (0..self.p).map(|_| rng.sample(StandardNormal)).collect();
            let n = norm(&g);
            if n > 0.0 || self.p == 0 {
                return g.iter().map(|v| v * radius / n.max(f64::MIN_POSITIVE)).collect();
            }
        }
    }

    /// Uniform draw from the ball.
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let r = self.radius * u.powf(1.0 / self.p.max(1) as f64);
        self.sample_sphere(r, rng)
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A point of the function class.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictor {
    family: Family,
    theta: Vec<f64>,
}

impl Predictor {
    pub fn new(family: Family, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != family.p() {
            bail!(Shape, "family expects {} parameters, got {}", family.p(), theta.len());
        }
        if theta.iter().any(|v| !v.is_finite()) {
            bail!(Argument, "parameter vector has non-finite entries");
        }
        Ok(Self { family, theta })
    }

    /// Linear predictor from a `d_y x d_x` matrix.
    pub fn linear(matrix: &DMatrix<f64>) -> Self {
        let (d_y, d_x) = matrix.shape();
        let theta = (0..d_y).flat_map(|r| (0..d_x).map(move |c| (r, c))).map(|(r, c)| matrix[(r, c)]).collect();
        Self {
            family: Family::Linear { d_x, d_y },
            theta,
        }
    }

    pub fn zero(family: Family) -> Self {
        Self {
            family,
            theta: vec![0.0; family.p()],
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// The linear parameter as a `d_y x d_x` matrix.
    pub fn matrix(&self) -> Option<DMatrix<f64>> {
        match self.family {
            Family::Linear { d_x, d_y } => Some(DMatrix::from_row_slice(d_y, d_x, &self.theta)),
            Family::Mlp { .. } => None,
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.family.d_x() {
            bail!(Shape, "input has dimension {}, predictor expects {}", x.len(), self.family.d_x());
        }
        let mut out = DVector::zeros(self.family.d_y());
        self.family.eval_into(&self.theta, x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    pub(crate) fn eval_slice(&self, x: &[f64], out: &mut [f64]) {
        self.family.eval_into(&self.theta, x, out);
    }
}

/// `G_{f,t} = (f - f*) ∘ g_t ∘ ... ∘ g_1`.
#[derive(Clone, Copy, Debug)]
pub struct DirectDifferenceMap<'a> {
    pub f: &'a Predictor,
    pub f_star: &'a Predictor,
    pub chain: &'a DependencyChain,
    pub t: usize,
}

impl DirectDifferenceMap<'_> {
    pub fn eval(&self, x1: &DVector<f64>) -> Result<DVector<f64>> {
        if self.f.family != self.f_star.family {
            bail!(Shape, "f and f* belong to different families");
        }
        let xt = self.chain.apply(self.t, x1)?;
        Ok(self.f.eval(&xt)? - self.f_star.eval(&xt)?)
    }
}

/// Probe estimate of `C_max = sup_{theta,t} |f_theta(g_t ∘ ... ∘ g_1(0))|`,
/// also covering `f*`. Uses `n_probe` interior draws plus as many boundary
/// draws of `Theta`.
pub fn c_max_probe(
    family: Family,
    space: &ParameterSpace,
    chain: &DependencyChain,
    f_star: &Predictor,
    n_probe: usize,
    seed: u64,
) -> Result<f64> {
    if family.d_x() != chain.d_x() || f_star.family != family {
        bail!(Shape, "family, chain and f* dimensions disagree");
    }
    let origins = chain.trajectory(&DVector::zeros(chain.d_x()));
    if origins.iter().all(|z| z.iter().all(|&v| v == 0.0)) && family.is_linear() {
        return Ok(0.0);
    }
    let mut rng = stream(seed, &[tag::PROBE, 0xc]);
    let mut out = vec![0.0; family.d_y()];
    let mut best = 0.0f64;
    let mut visit = |theta: &[f64], best: &mut f64| {
        for z in &origins {
            family.eval_into(theta, z.as_slice(), &mut out);
            *best = best.max(norm(&out));
        }
    };
    visit(f_star.theta(), &mut best);
    for _ in 0..n_probe {
        let interior = space.sample_interior(&mut rng);
        visit(&interior, &mut best);
        let boundary = space.sample_sphere(space.radius(), &mut rng);
        visit(&boundary, &mut best);
    }
    Ok(best)
}
