//! Explicit recovery bounds and Monte-Carlo checks of the concentration
//! inequalities behind them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::InputDist;
use crate::error::{bail, Result};
use crate::rng::{stream, tag};

pub const DEFAULT_C: f64 = 2.0;
pub const DEFAULT_DELTA: f64 = 0.05;
/// Constant in `log |net| = NET_CONSTANT * p * (1 + ln(diam/eps))`.
pub const NET_CONSTANT: f64 = 3.0;

/// Every constant entering the bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub p: usize,
    pub d_x: usize,
    pub d_y: usize,
    pub sigma: f64,
    pub nu: f64,
    pub tasks: usize,
    pub m: usize,
    /// Per-task sample counts `n_t`.
    pub n: Vec<usize>,
    /// Per-task weights `w_t`.
    pub w: Vec<f64>,
    pub delta: f64,
    pub c: f64,
    pub kappa: f64,
    pub m2: f64,
    pub l_g: f64,
    pub k_g: f64,
    pub alpha: f64,
    /// Net constant `B = diam(Theta) L_F`.
    pub b: f64,
    /// `Omega_T(f*)`; zero when no regularizer is used.
    pub omega_at_fstar: f64,
    /// Regularization coefficient actually used.
    #[serde(default)]
    pub lambda: f64,
    /// Distillation `beta_t`; empty for the other paradigms.
    #[serde(default)]
    pub beta: Vec<f64>,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            bail!(Argument, "delta must lie in (0, 1], got {}", self.delta);
        }
        if !(self.c > 1.0) {
            bail!(Argument, "C must exceed 1, got {}", self.c);
        }
        if self.tasks == 0 || self.m == 0 || self.d_x == 0 || self.d_y == 0 {
            bail!(Argument, "T, m, d_x, d_y must be at least 1");
        }
        if self.n.len() != self.tasks || self.w.len() != self.tasks {
            bail!(Shape, "n and w need {} entries", self.tasks);
        }
        if self.n.iter().any(|&n| n == 0) {
            bail!(Argument, "every n_t must be at least 1");
        }
        if self.w.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || self.w.iter().all(|&w| w == 0.0) {
            bail!(Argument, "weights must be non-negative, finite, and not all zero");
        }
        let finite_nonneg = [self.sigma, self.nu, self.m2, self.l_g, self.k_g, self.b, self.omega_at_fstar, self.lambda];
        if finite_nonneg.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            bail!(Argument, "constants must be finite and non-negative");
        }
        if !(self.alpha > 0.0) || !(self.kappa >= 1.0) {
            bail!(Argument, "need alpha > 0 and kappa >= 1");
        }
        if !self.beta.is_empty() && (self.beta.len() != self.tasks || self.beta.iter().any(|b| !(*b > 0.0))) {
            bail!(Argument, "beta needs {} positive entries", self.tasks);
        }
        Ok(())
    }

    /// `n' = min_t n_t`.
    pub fn n_prime(&self) -> f64 {
        self.n.iter().copied().min().unwrap_or(0) as f64
    }

    /// `n'' = min_{t: w_t > 0} n_t / w_t`.
    pub fn n_dprime(&self) -> f64 {
        self.n
            .iter()
            .zip(&self.w)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&n, &w)| n as f64 / w)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn w_avg(&self) -> f64 {
        self.w.iter().sum::<f64>() / self.tasks as f64
    }

    /// `lambda <= 4 nu^2 / (T n'')`.
    pub fn lambda_cap(&self) -> f64 {
        4.0 * self.nu * self.nu / (self.tasks as f64 * self.n_dprime())
    }

    /// Distillation weights `w_t = 4^{T-t} (n_t/m) beta_t`.
    pub fn distill_weights(n: &[usize], m: usize, beta: &[f64]) -> Vec<f64> {
        let t_n = n.len();
        n.iter()
            .zip(beta)
            .enumerate()
            .map(|(k, (&nt, &b))| 4f64.powi((t_n - 1 - k) as i32) * (nt as f64 / m as f64) * b)
            .collect()
    }

    fn log4m(&self) -> f64 {
        (4.0 * self.m as f64 / self.delta).ln()
    }
}

/// `(r_x, r_v)` lower radii.
pub fn radii(inputs: &BoundInputs) -> Result<(f64, f64)> {
    if !(inputs.delta > 0.0) {
        bail!(Argument, "delta must be positive, got {}", inputs.delta);
    }
    let l = inputs.log4m();
    let r_x = inputs.sigma * (3.0 + 16.0 * (l / inputs.d_x as f64).sqrt());
    let r_v = 2.0 * inputs.nu * ((inputs.d_y as f64).sqrt() + 8.0 * (2.0 * l).sqrt());
    Ok((r_x, r_v))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleCondition {
    /// `n' - rhs` of the count condition.
    pub n_margin: f64,
    pub n_required: f64,
    /// `m - rhs` of the trajectory-count condition.
    pub m_margin: f64,
    pub m_required: f64,
    pub lambda_ok: bool,
    pub satisfied: bool,
}

/// Both sample-size conditions and the `lambda` cap.
pub fn sample_condition(inputs: &BoundInputs) -> Result<SampleCondition> {
    inputs.validate()?;
    let (_, r_v) = radii(inputs)?;
    let c = inputs.c;
    let t_n = inputs.tasks as f64;
    let ln_net = (1.0 + 2.0 * inputs.b * (c + 1.0) / (c * (1.0 + r_v)) * t_n * inputs.n_dprime()).ln();
    let n_required = 2.0 * inputs.kappa * inputs.kappa * c * c / (c - 1.0) * ((4.0 / inputs.delta).ln() + inputs.p as f64 * ln_net);
    let m_required = if inputs.sigma == 0.0 || inputs.l_g == 0.0 {
        0.0
    } else {
        2f64.sqrt() * inputs.l_g * inputs.sigma * inputs.delta * (inputs.d_x as f64 + 64.0).sqrt()
            / ((inputs.d_x as f64 / 256.0).exp() * inputs.m2.sqrt())
    };
    let n_margin = inputs.n_prime() - n_required;
    let m_margin = inputs.m as f64 - m_required;
    let lambda_ok = inputs.lambda <= inputs.lambda_cap();
    Ok(SampleCondition {
        n_margin,
        n_required,
        m_margin,
        m_required,
        lambda_ok,
        satisfied: n_margin >= 0.0 && m_margin >= 0.0 && lambda_ok,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundKind {
    /// Weighted replay with data-independent weights.
    General,
    /// Distillation with weights `beta_t`; bounds `sum n_t beta_t err_t / sum n_t`.
    Distill,
    /// Data-dependent weights in `[1, W]`: the general bound with every
    /// `w_t = W`, in regime only when `W <= 1 + 1/(T min n_t)`.
    DepWeights { w_cap: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundValue {
    pub value: f64,
    /// Input-radius term, noise/complexity term, and confidence term.
    pub terms: [f64; 3],
    pub condition: SampleCondition,
    pub in_regime: bool,
}

/// `[3 + 16 sqrt(ln(4m/delta)/d_x)]^alpha + 1/(16^alpha d_x^{alpha/2})` plus
/// the `max{..., 0}^{alpha/2}` correction.
fn bracket(inputs: &BoundInputs) -> f64 {
    let (a, c) = (inputs.alpha, inputs.c);
    let dx = inputs.d_x as f64;
    let l = inputs.log4m();
    let w_avg = inputs.w_avg();
    let head = (3.0 + 16.0 * (l / dx).sqrt()).powf(a) + 1.0 / (16f64.powf(a) * dx.powf(a / 2.0));
    let inner = 32.0 * inputs.l_g * (2.0 * inputs.m2).sqrt() / (a * 16f64.powf(a) * (c + 1.0) * w_avg * inputs.k_g)
        * (dx.powf(a / 2.0 - 1.0) * (dx + 64.0).sqrt() / inputs.sigma.powf(a - 1.0))
        * (inputs.m as f64 * inputs.m as f64);
    head + (256.0 / dx * inner.ln()).max(0.0).powf(a / 2.0)
}

/// `1 + 8 nu [1 + 8 sqrt(2 ln(4m/delta))]`.
fn noise_factor(inputs: &BoundInputs) -> f64 {
    1.0 + 8.0 * inputs.nu * (1.0 + 8.0 * (2.0 * inputs.log4m()).sqrt())
}

/// `X` in the net term `ln(1 + X * count)`.
fn net_scale(inputs: &BoundInputs) -> f64 {
    let c = inputs.c;
    2.0 * inputs.b * (c + 1.0) / (c * noise_factor(inputs))
}

/// The bound specialised to noiseless labels (`nu = 0`).
pub fn corollary_nu0(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    if inputs.nu != 0.0 {
        bail!(Argument, "the noiseless form needs nu = 0, got {}", inputs.nu);
    }
    if inputs.sigma == 0.0 {
        return Ok(0.0);
    }
    let tn = inputs.tasks as f64 * inputs.n_dprime();
    let lead = 2.0 * inputs.alpha * inputs.c * inputs.w_avg() * inputs.k_g;
    Ok(lead * bracket(inputs) * inputs.sigma.powf(inputs.alpha) / tn)
}

/// The bound specialised to degenerate inputs (`sigma = 0`).
pub fn corollary_sigma0(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    if inputs.sigma != 0.0 {
        bail!(Argument, "the degenerate-input form needs sigma = 0, got {}", inputs.sigma);
    }
    let tn = inputs.tasks as f64 * inputs.n_dprime();
    let c = inputs.c;
    let nu2 = inputs.nu * inputs.nu;
    Ok(8.0 * c * nu2 / tn * (inputs.p as f64 * (1.0 + net_scale(inputs) * tn).ln() + inputs.omega_at_fstar + (4.0 / inputs.delta).ln()))
}

/// Numeric value of the explicit bound of the chosen kind.
pub fn theorem_bound(inputs: &BoundInputs, kind: BoundKind) -> Result<BoundValue> {
    inputs.validate()?;
    match kind {
        BoundKind::General => general(inputs),
        BoundKind::DepWeights { w_cap } => {
            if !(w_cap >= 1.0) {
                bail!(Argument, "W must be at least 1, got {w_cap}");
            }
            let mut at_cap = inputs.clone();
            at_cap.w = vec![w_cap; inputs.tasks];
            let mut out = general(&at_cap)?;
            let limit = 1.0 + 1.0 / (inputs.tasks as f64 * inputs.n_prime());
            out.in_regime &= w_cap <= limit;
            Ok(out)
        }
        BoundKind::Distill => distill(inputs),
    }
}

fn general(inputs: &BoundInputs) -> Result<BoundValue> {
    let condition = sample_condition(inputs)?;
    let tn = inputs.tasks as f64 * inputs.n_dprime();
    let c = inputs.c;
    let nu2 = inputs.nu * inputs.nu;
    let t1 = if inputs.sigma == 0.0 {
        0.0
    } else {
        let lead = 2.0 * inputs.alpha * c * inputs.w_avg() * inputs.k_g * noise_factor(inputs);
        lead * bracket(inputs) * inputs.sigma.powf(inputs.alpha) / tn
    };
    let net = inputs.p as f64 * (1.0 + net_scale(inputs) * tn).ln();
    let conf = (4.0 / inputs.delta).ln();
    // Same grouping as the sigma = 0 form, so the two agree bit for bit.
    let noise = 8.0 * c * nu2 / tn * (net + inputs.omega_at_fstar + conf);
    let t2 = 8.0 * c * nu2 * (net + inputs.omega_at_fstar) / tn;
    let t3 = 8.0 * c * nu2 * conf / tn;
    Ok(BoundValue {
        value: t1 + noise,
        terms: [t1, t2, t3],
        in_regime: condition.satisfied,
        condition,
    })
}

fn distill(inputs: &BoundInputs) -> Result<BoundValue> {
    if inputs.beta.len() != inputs.tasks {
        bail!(Argument, "distillation bound needs beta_t for every task");
    }
    let condition = sample_condition(inputs)?;
    let t_n = inputs.tasks;
    let total: f64 = inputs.n.iter().map(|&n| n as f64).sum();
    let peak = inputs
        .beta
        .iter()
        .enumerate()
        .map(|(k, b)| 4f64.powi((t_n - 1 - k) as i32) * b)
        .fold(0.0, f64::max);
    let c = inputs.c;
    let nu2 = inputs.nu * inputs.nu;
    let t1 = if inputs.sigma == 0.0 {
        0.0
    } else {
        let lead = 2.0 * inputs.alpha * c * inputs.w_avg() * inputs.k_g * noise_factor(inputs);
        lead * bracket(inputs) * inputs.sigma.powf(inputs.alpha) / total * peak
    };
    let count = t_n as f64 * inputs.m as f64 / peak;
    let t2 = 8.0 * c * nu2 * (inputs.p as f64 * t_n as f64 * (1.0 + net_scale(inputs) * count).ln()) / total;
    let t3 = 8.0 * c * nu2 * (4.0 / inputs.delta).ln() / total * peak;
    Ok(BoundValue {
        value: t1 + t2 + t3,
        terms: [t1, t2, t3],
        in_regime: condition.satisfied,
        condition,
    })
}

/// `log |net|` of a `p`-dimensional ball of diameter `diam` at scale `eps`.
pub fn net_size(p: usize, diam: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        bail!(Argument, "eps must be positive, got {eps}");
    }
    if p == 0 {
        return Ok(0.0);
    }
    Ok(NET_CONSTANT * p as f64 * (1.0 + (diam / eps).ln()))
}

/// Net constant `B = diam(Theta) L_F` (a net of `Theta` at `eps / L_F` is
/// an `eps`-net of `F`).
pub fn net_constant(diam: f64, lf: f64) -> f64 {
    diam * lf
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationRow {
    pub param: f64,
    pub empirical: f64,
    pub se: f64,
    pub bound: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
    pub trials: usize,
}

impl ValidationReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| !r.ok).count()
    }
}

/// Default `u` grid, in units of `sigma`.
pub const DEFAULT_U_GRID: [f64; 8] = [0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0];

fn draw_norms(dist: InputDist, sigma: f64, d: usize, trials: usize, seed: u64) -> Vec<f64> {
    let std = sigma / (d as f64).sqrt();
    let mut rng = stream(seed, &[tag::VALIDATE]);
    (0..trials)
        .map(|_| (0..d).map(|_| dist.draw(std, &mut rng).powi(2)).sum::<f64>().sqrt())
        .collect()
}

/// `P[|z| - 2 sigma >= u] <= exp(-d u^2 / (128 sigma^2))` for `z` with
/// independent coordinates of proxy variance `sigma^2 / d`, checked at
/// `u = k sigma` for each `k` in `u_grid` (absolute `u` when `sigma = 0`).
pub fn validate_norm_concentration(
    dist: InputDist,
    sigma: f64,
    d: usize,
    trials: usize,
    u_grid: &[f64],
    seed: u64,
) -> Result<ValidationReport> {
    if trials < 10_000 {
        bail!(Argument, "need at least 10^4 trials, got {trials}");
    }
    if d == 0 || !(sigma >= 0.0) {
        bail!(Argument, "need d >= 1 and sigma >= 0");
    }
    let norms = draw_norms(dist, sigma, d, trials, seed);
    let n = trials as f64;
    let rows = u_grid
        .iter()
        .map(|&k| {
            let u = if sigma > 0.0 { k * sigma } else { k };
            let hits = norms.iter().filter(|&&r| r - 2.0 * sigma >= u).count() as f64;
            let freq = hits / n;
            let se = (freq * (1.0 - freq) / n).sqrt();
            let bound = norm_tail_bound(sigma, d, u);
            ValidationRow { param: u, empirical: freq, se, bound, ok: freq <= bound + 3.0 * se }
        })
        .collect();
    Ok(ValidationReport { rows, trials })
}

/// `exp(-d u^2 / (128 sigma^2))`, with the `sigma = 0` and `u = 0` limits.
pub fn norm_tail_bound(sigma: f64, d: usize, u: f64) -> f64 {
    if u <= 0.0 {
        1.0
    } else if sigma == 0.0 {
        0.0
    } else {
        (-(d as f64) * u * u / (128.0 * sigma * sigma)).exp()
    }
}

/// `128 L^2 sigma^2 (d+64)/d^2 exp(-d (r - 2 sigma)^2 / (128 sigma^2))`.
pub fn projection_difference_bound(sigma: f64, d: usize, r: f64, lipschitz: f64) -> f64 {
    let d = d as f64;
    128.0 * lipschitz * lipschitz * sigma * sigma * (d + 64.0) / (d * d) * (-d * (r - 2.0 * sigma).powi(2) / (128.0 * sigma * sigma)).exp()
}

/// `E|h(P_r(z)) - h(z)|^2` for `h = L * identity` and `P_r` the projection
/// onto the radius-`r` ball, against its exponential bound.
pub fn validate_projection_difference(
    dist: InputDist,
    sigma: f64,
    d: usize,
    r: f64,
    lipschitz: f64,
    trials: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if !(r > 3.0 * sigma) {
        bail!(Precondition, "radius {r} must exceed 3 sigma = {}", 3.0 * sigma);
    }
    if trials < 2 || d == 0 {
        bail!(Argument, "need d >= 1 and at least two trials");
    }
    let norms = draw_norms(dist, sigma, d, trials, seed);
    let vals: Vec<f64> = norms
        .iter()
        .map(|&z| {
            let gap = lipschitz * (z - r).max(0.0);
            gap * gap
        })
        .collect();
    let n = trials as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let bound = projection_difference_bound(sigma, d, r, lipschitz);
    Ok(ValidationReport {
        rows: vec![ValidationRow { param: r, empirical: mean, se, bound, ok: mean <= bound + 3.0 * se }],
        trials,
    })
}

/// A random but valid `BoundInputs`, for property sweeps.
pub fn random_inputs<R: Rng + ?Sized>(rng: &mut R) -> BoundInputs {
    let tasks = rng.random_range(1..=8);
    let m = rng.random_range(10..=5000);
    let n: Vec<usize> = (0..tasks).map(|k| if k + 1 == tasks { m } else { rng.random_range(1..=m) }).collect();
    let w: Vec<f64> = (0..tasks).map(|k| if k + 1 == tasks { rng.random_range(0.5..2.0) } else { rng.random_range(0.0..2.0) }).collect();
    let sigma = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.1..10.0) };
    let nu = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.01..2.0) };
    let l_g = rng.random_range(0.5..50.0);
    BoundInputs {
        p: rng.random_range(1..=200),
        d_x: rng.random_range(1..=64),
        d_y: rng.random_range(1..=8),
        sigma,
        nu,
        tasks,
        m,
        n,
        w,
        delta: rng.random_range(0.001..1.0),
        c: rng.random_range(1.1..4.0),
        kappa: rng.random_range(1.0..3.0),
        m2: rng.random_range(0.01..100.0),
        l_g,
        k_g: 2.0 * l_g + 1.0 + rng.random_range(0.0..5.0),
        alpha: 1.0,
        b: rng.random_range(0.1..100.0),
        omega_at_fstar: if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..4.0) },
        lambda: 0.0,
        beta: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn base() -> BoundInputs {
        BoundInputs {
            p: 64,
            d_x: 16,
            d_y: 4,
            sigma: 4.0,
            nu: 0.1,
            tasks: 4,
            m: 400,
            n: vec![100, 200, 300, 400],
            w: vec![0.4, 0.8, 1.2, 1.6],
            delta: 0.05,
            c: 2.0,
            kappa: 3f64.sqrt(),
            m2: 16.0,
            l_g: 40.0,
            k_g: 81.0,
            alpha: 1.0,
            b: 20.0,
            omega_at_fstar: 0.0,
            lambda: 0.0,
            beta: Vec::new(),
        }
    }

    #[test]
    fn radii_examples() {
        let mut b = base();
        b.sigma = 0.0;
        b.nu = 0.0;
        assert_eq!(radii(&b).unwrap(), (0.0, 0.0));
        b.sigma = 1.0;
        b.d_x = 16;
        b.m = 4;
        b.delta = 1.0;
        let (r_x, _) = radii(&b).unwrap();
        // ln(4m/delta) = ln 16 here.
        assert!((r_x - (3.0 + 4.0 * 16f64.ln().sqrt())).abs() < 1e-14);
        b.delta = 0.0;
        assert!(matches!(radii(&b), Err(crate::Error::Argument(_))));
    }

    #[test]
    fn sample_condition_examples() {
        let mut b = base();
        b.kappa = 1.0;
        b.c = 2.0;
        b.delta = 1.0;
        b.p = 1;
        b.b = 1e-9;
        b.tasks = 1;
        b.n = vec![100];
        b.w = vec![1.0];
        b.m = 100;
        b.sigma = 0.0;
        let s = sample_condition(&b).unwrap();
        assert!(s.satisfied && s.n_margin > 0.0, "{s:?}");

        b.n = vec![1];
        b.p = 500;
        b.b = 10.0;
        assert!(!sample_condition(&b).unwrap().satisfied);

        assert_eq!(sample_condition(&b).unwrap().m_required, 0.0);
    }

    #[test]
    fn both_limits_vanish() {
        let mut b = base();
        b.sigma = 0.0;
        b.nu = 0.0;
        let v = theorem_bound(&b, BoundKind::General).unwrap();
        assert_eq!(v.value, 0.0);
        b.beta = vec![1.0 / 64.0, 1.0 / 16.0, 0.25, 1.0];
        assert_eq!(theorem_bound(&b, BoundKind::Distill).unwrap().value, 0.0);
    }

    #[test]
    fn doubling_n_dprime_decreases_the_bound() {
        let b = base();
        let mut d = b.clone();
        d.n = b.n.iter().map(|n| 2 * n).collect();
        d.m = 2 * b.m;
        assert!((d.n_dprime() - 2.0 * b.n_dprime()).abs() < 1e-12);
        // Hold m fixed so only n'' moves.
        d.m = b.m;
        let v0 = theorem_bound(&b, BoundKind::General).unwrap().value;
        let v1 = theorem_bound(&d, BoundKind::General).unwrap().value;
        assert!(v1 < v0);
    }

    #[test]
    fn scaling_the_chain_changes_the_bound_only_logarithmically() {
        // L_G and k_G grow by 10^3; they enter as a ratio inside a log and
        // linearly through k_G, so compare with k_G held by its ratio to L_G.
        let b = base();
        let mut s = b.clone();
        s.l_g *= 1e3;
        s.m2 *= 1e6;
        s.k_g = 2.0 * s.l_g + 1.0;
        let ratio_k = s.k_g / b.k_g;
        let v0 = theorem_bound(&b, BoundKind::General).unwrap();
        let v1 = theorem_bound(&s, BoundKind::General).unwrap();
        let sigma_ratio = v1.terms[0] / v0.terms[0] / ratio_k;
        assert!(sigma_ratio <= 3.0, "{sigma_ratio}");
        assert_eq!(v1.terms[1], v0.terms[1]);
    }

    #[test]
    fn corollaries_match_general_path_exactly() {
        let mut b = base();
        b.nu = 0.0;
        let g = theorem_bound(&b, BoundKind::General).unwrap().value;
        assert_eq!(g, corollary_nu0(&b).unwrap());
        let mut b = base();
        b.sigma = 0.0;
        b.omega_at_fstar = 1.5;
        let g = theorem_bound(&b, BoundKind::General).unwrap().value;
        assert_eq!(g, corollary_sigma0(&b).unwrap());
        assert!(corollary_nu0(&b).is_err());
    }

    #[test]
    fn all_terms_nonnegative_on_random_inputs() {
        let mut rng = stream(1, &[]);
        for _ in 0..500 {
            let b = random_inputs(&mut rng);
            for kind in [BoundKind::General, BoundKind::DepWeights { w_cap: 1.0 }] {
                let v = theorem_bound(&b, kind).unwrap();
                assert!(v.terms.iter().all(|t| *t >= 0.0) && v.value >= 0.0, "{b:?}");
            }
        }
    }

    #[test]
    fn noise_term_falls_with_confidence_when_p_is_large() {
        // With sigma = 0 and p > 2 ln(4m/delta) the log argument shrinks
        // faster in ln(1/delta) than ln(4/delta) grows.
        let mut b = base();
        b.sigma = 0.0;
        b.nu = 1.0;
        b.p = 200;
        let loose = corollary_sigma0(&b).unwrap();
        b.delta = 0.005;
        let tight = corollary_sigma0(&b).unwrap();
        assert!(tight < loose, "{tight} vs {loose}");
    }

    #[test]
    fn distill_bound_uses_weighted_counts() {
        let mut b = base();
        b.beta = vec![1.0 / 64.0, 1.0 / 16.0, 0.25, 1.0];
        b.w = BoundInputs::distill_weights(&b.n, b.m, &b.beta);
        assert_eq!(b.w, vec![0.25, 0.5, 0.75, 1.0]);
        assert_eq!(b.n_dprime(), 400.0);
        let v = theorem_bound(&b, BoundKind::Distill).unwrap();
        assert!(v.value > 0.0 && v.terms.iter().all(|t| *t >= 0.0));
        b.beta.clear();
        assert!(theorem_bound(&b, BoundKind::Distill).is_err());
    }

    #[test]
    fn dep_weights_regime_limit() {
        let b = base();
        let limit = 1.0 + 1.0 / (4.0 * 100.0);
        let at = theorem_bound(&b, BoundKind::DepWeights { w_cap: limit }).unwrap();
        let over = theorem_bound(&b, BoundKind::DepWeights { w_cap: 2.0 }).unwrap();
        assert!(over.value > at.value);
        assert!(!over.in_regime);
        assert!(theorem_bound(&b, BoundKind::DepWeights { w_cap: 0.5 }).is_err());
    }

    #[test]
    fn net_size_examples() {
        assert_eq!(net_size(5, 2.0, 2.0).unwrap(), NET_CONSTANT * 5.0);
        let a = net_size(7, 3.0, 0.1).unwrap();
        let h = net_size(7, 3.0, 0.05).unwrap();
        assert!((h - a - NET_CONSTANT * 7.0 * 2f64.ln()).abs() < 1e-12);
        assert_eq!(net_size(0, 3.0, 0.1).unwrap(), 0.0);
        assert!(net_size(1, 1.0, 0.0).is_err());
    }

    #[test]
    fn norm_concentration_examples() {
        let r = validate_norm_concentration(InputDist::Gaussian, 1.0, 32, 20_000, &[0.0, 1.0], 1).unwrap();
        assert_eq!(r.rows[0].bound, 1.0);
        assert!((r.rows[1].bound - (-32.0f64 / 128.0).exp()).abs() < 1e-15);
        assert_eq!(r.violations(), 0);
        let z = validate_norm_concentration(InputDist::Gaussian, 0.0, 8, 10_000, &[0.5, 1.0], 1).unwrap();
        assert!(z.rows.iter().all(|row| row.empirical == 0.0 && row.ok));
        assert!(validate_norm_concentration(InputDist::Gaussian, 1.0, 8, 100, &[0.5], 1).is_err());
    }

    #[test]
    fn projection_difference_examples() {
        let far = validate_projection_difference(InputDist::Gaussian, 1.0, 8, 20.0, 1.0, 10_000, 2).unwrap();
        assert_eq!(far.rows[0].empirical, 0.0);
        let a = validate_projection_difference(InputDist::Gaussian, 1.0, 8, 3.5, 1.0, 10_000, 3).unwrap();
        assert_eq!(a.violations(), 0);
        let b = validate_projection_difference(InputDist::Gaussian, 1.0, 8, 3.5, 2.0, 10_000, 3).unwrap();
        assert!((b.rows[0].empirical - 4.0 * a.rows[0].empirical).abs() <= 1e-12 * b.rows[0].empirical.max(1e-300));
        assert!(matches!(
            validate_projection_difference(InputDist::Gaussian, 1.0, 8, 3.0, 1.0, 10_000, 3),
            Err(crate::Error::Precondition(_))
        ));
    }
}
