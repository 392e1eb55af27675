//! Deterministic task-dependency maps `g_t` and their Lipschitz bookkeeping.
//!
//! Only the Markov form `x_t = g_t(x_{t-1})` is evaluated; a chain of `T` maps
//! therefore sends `x_1` to `x_t = g_t(g_{t-1}(...g_2(x_1)))`, with `g_1` the
//! identity.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

const ORTHO_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub enum Transformation {
    Identity,
    Scaling(f64),
    /// Orthogonal matrix.
    Rotation(DMatrix<f64>),
    /// `out[k] = x[perm[k]]`.
    Permutation(Vec<usize>),
    Affine {
        matrix: DMatrix<f64>,
        offset: DVector<f64>,
    },
    /// Parts are applied left to right.
    Composition(Vec<Transformation>),
}

impl Transformation {
    pub fn scaling(s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            bail!(Argument, "scaling factor must be positive and finite, got {s}");
        }
        Ok(Self::Scaling(s))
    }

    pub fn rotation(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            bail!(Shape, "rotation matrix must be square, got {}x{}", matrix.nrows(), matrix.ncols());
        }
        let n = matrix.nrows();
        let defect = (matrix.transpose() * &matrix - DMatrix::identity(n, n)).abs().max();
        if !(defect <= ORTHO_TOL) {
            bail!(Argument, "rotation matrix is not orthogonal (max |Q^T Q - I| = {defect:e})");
        }
        Ok(Self::Rotation(matrix))
    }

    /// Givens rotations on the coordinate planes `(0,1), (2,3), ...`, one angle
    /// (radians) per plane.
    pub fn rotation_from_angles(d: usize, angles: &[f64]) -> Result<Self> {
        if 2 * angles.len() > d {
            bail!(Argument, "{} plane angles need at least {} dimensions, got {d}", angles.len(), 2 * angles.len());
        }
        let mut q = DMatrix::identity(d, d);
        for (k, &a) in angles.iter().enumerate() {
            let (s, c) = a.sin_cos();
            let (i, j) = (2 * k, 2 * k + 1);
            q[(i, i)] = c;
            q[(i, j)] = -s;
            q[(j, i)] = s;
            q[(j, j)] = c;
        }
        Self::rotation(q)
    }

    /// Haar-distributed orthogonal matrix via QR of a Gaussian matrix.
    pub fn random_rotation<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Self> {
        let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..d {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        Self::rotation(q)
    }

    pub fn permutation(perm: Vec<usize>) -> Result<Self> {
        let n = perm.len();
        let mut seen = vec![false; n];
        for &p in &perm {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                bail!(Argument, "not a permutation of 0..{n}: {perm:?}");
            }
        }
        Ok(Self::Permutation(perm))
    }

    pub fn random_permutation<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(rng);
        Self::Permutation(perm)
    }

    pub fn affine(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() != offset.len() {
            bail!(
                Shape,
                "affine map needs a square matrix matching the offset, got {}x{} and {}",
                matrix.nrows(),
                matrix.ncols(),
                offset.len()
            );
        }
        if matrix.iter().chain(offset.iter()).any(|v| !v.is_finite()) {
            bail!(Argument, "affine map has non-finite entries");
        }
        Ok(Self::Affine { matrix, offset })
    }

    pub fn diagonal(scales: &[f64]) -> Result<Self> {
        let d = scales.len();
        Self::affine(
            DMatrix::from_diagonal(&DVector::from_column_slice(scales)),
            DVector::zeros(d),
        )
    }

    /// Input dimension this map is pinned to, if any.
    pub fn dim(&self) -> Option<usize> {
        match self {
            Self::Identity | Self::Scaling(_) => None,
            Self::Rotation(q) => Some(q.nrows()),
            Self::Permutation(p) => Some(p.len()),
            Self::Affine { matrix, .. } => Some(matrix.nrows()),
            Self::Composition(parts) => parts.iter().find_map(Self::dim),
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        match self {
            Self::Composition(parts) => parts.iter().try_for_each(|p| p.check_dim(d)),
            other => match other.dim() {
                Some(k) if k != d => bail!(Shape, "transformation acts on dimension {k}, chain has d_x = {d}"),
                _ => Ok(()),
            },
        }
    }

    /// Operator-norm bound of the map.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Self::Identity | Self::Rotation(_) | Self::Permutation(_) => 1.0,
            Self::Scaling(s) => s.abs(),
            Self::Affine { matrix, .. } => spectral_norm(matrix),
            Self::Composition(parts) => parts.iter().map(Self::lipschitz).product(),
        }
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Identity => x.clone(),
            Self::Scaling(s) => x * *s,
            Self::Rotation(q) => q * x,
            Self::Permutation(p) => DVector::from_fn(p.len(), |k, _| x[p[k]]),
            Self::Affine { matrix, offset } => matrix * x + offset,
            Self::Composition(parts) => parts.iter().fold(x.clone(), |acc, g| g.apply(&acc)),
        }
    }

    /// `Some(s)` when the map is `x -> s x`.
    pub fn uniform_scale(&self) -> Option<f64> {
        match self {
            Self::Identity => Some(1.0),
            Self::Scaling(s) => Some(*s),
            Self::Composition(parts) => parts.iter().map(Self::uniform_scale).product(),
            _ => None,
        }
    }
}

pub(crate) fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Serializable description of a [`Transformation`], as written in config files
/// (`{kind = "scaling", s = 100.0}`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TransformSpec {
    Identity,
    Scaling {
        s: f64,
    },
    /// Exactly one of `matrix`, `angles` (Givens planes) or `seed` (Haar draw).
    Rotation {
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        angles: Option<Vec<f64>>,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Explicit permutation, or a uniformly random one drawn from `seed`.
    Permutation {
        #[serde(default)]
        perm: Option<Vec<usize>>,
        #[serde(default)]
        seed: Option<u64>,
    },
    Affine {
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        diag: Option<Vec<f64>>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
    },
    Composition {
        parts: Vec<TransformSpec>,
    },
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) {
        bail!(Shape, "ragged matrix rows");
    }
    Ok(DMatrix::from_fn(n, k, |i, j| rows[i][j]))
}

impl TransformSpec {
    pub fn build(&self, d_x: usize) -> Result<Transformation> {
        use crate::rng::{stream, tag};
        let t = match self {
            Self::Identity => Transformation::Identity,
            Self::Scaling { s } => Transformation::scaling(*s)?,
            Self::Rotation { matrix, angles, seed } => match (matrix, angles, seed) {
                (Some(m), None, None) => Transformation::rotation(matrix_from_rows(m)?)?,
                (None, Some(a), None) => Transformation::rotation_from_angles(d_x, a)?,
                (None, None, Some(s)) => Transformation::random_rotation(d_x, &mut stream(*s, &[tag::CHAIN]))?,
                _ => bail!(Config, "rotation needs exactly one of `matrix`, `angles`, `seed`"),
            },
            Self::Permutation { perm, seed } => match (perm, seed) {
                (Some(p), None) => Transformation::permutation(p.clone())?,
                (None, Some(s)) => Transformation::random_permutation(d_x, &mut stream(*s, &[tag::CHAIN])),
                _ => bail!(Config, "permutation needs exactly one of `perm`, `seed`"),
            },
            Self::Affine { matrix, diag, offset } => {
                let a = match (matrix, diag) {
                    (Some(m), None) => matrix_from_rows(m)?,
                    (None, Some(d)) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
                    _ => bail!(Config, "affine needs exactly one of `matrix`, `diag`"),
                };
                let b = offset
                    .as_ref()
                    .map(|o| DVector::from_column_slice(o))
                    .unwrap_or_else(|| DVector::zeros(a.nrows()));
                Transformation::affine(a, b)?
            }
            Self::Composition { parts } => {
                Transformation::Composition(parts.iter().map(|p| p.build(d_x)).collect::<Result<_>>()?)
            }
        };
        t.check_dim(d_x)?;
        Ok(t)
    }
}

/// The maps `g_1, ..., g_T` relating each task's inputs to the previous task's.
#[derive(Clone, Debug, PartialEq)]
pub struct DependencyChain {
    d_x: usize,
    maps: Vec<Transformation>,
}

/// `(L_G, k_G, alpha)` with `K_G(r) <= k_G r^alpha`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzSummary {
    pub l_g: f64,
    pub k_g: f64,
    pub alpha: f64,
}

impl DependencyChain {
    pub fn new(d_x: usize, maps: Vec<Transformation>) -> Result<Self> {
        if maps.is_empty() {
            bail!(Argument, "a chain needs at least one map");
        }
        if maps[0] != Transformation::Identity {
            bail!(Argument, "the first map of a chain must be the identity");
        }
        for g in &maps {
            g.check_dim(d_x)?;
            if !g.lipschitz().is_finite() {
                bail!(Argument, "map has non-finite Lipschitz constant");
            }
        }
        Ok(Self { d_x, maps })
    }

    pub fn identity(d_x: usize, tasks: usize) -> Self {
        Self {
            d_x,
            maps: vec![Transformation::Identity; tasks.max(1)],
        }
    }

    pub fn from_specs(d_x: usize, specs: &[TransformSpec]) -> Result<Self> {
        Self::new(d_x, specs.iter().map(|s| s.build(d_x)).collect::<Result<_>>()?)
    }

    /// Block drift: task `t >= 2` sees coordinate block `b` scaled by
    /// `decay^|t - b|` (blocks indexed from 1), so each new task emphasises
    /// its own block and attenuates the others; task 1 is isotropic.
    pub fn block_drift(d_x: usize, tasks: usize, block: usize, decay: f64) -> Result<Self> {
        if block == 0 || !(decay > 0.0 && decay.is_finite()) {
            bail!(Argument, "block drift needs block >= 1 and a positive decay");
        }
        let profile = |t: usize| -> Vec<f64> {
            if t == 1 {
                return vec![1.0; d_x];
            }
            (0..d_x)
                .map(|j| decay.powi((t as i32 - (j / block) as i32 - 1).abs()))
                .collect()
        };
        let mut maps = vec![Transformation::Identity];
        for t in 2..=tasks {
            let (prev, cur) = (profile(t - 1), profile(t));
            let ratio: Vec<f64> = cur.iter().zip(&prev).map(|(c, p)| c / p).collect();
            maps.push(Transformation::diagonal(&ratio)?);
        }
        Self::new(d_x, maps)
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    /// Number of tasks `T`.
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// Only `x_t = g_t(x_{t-1})` is evaluated.
    pub fn markov_only(&self) -> bool {
        true
    }

    pub fn maps(&self) -> &[Transformation] {
        &self.maps
    }

    /// Keeps the first `tasks` maps.
    pub fn truncated(&self, tasks: usize) -> Result<Self> {
        if tasks == 0 || tasks > self.maps.len() {
            bail!(Index, "cannot truncate a chain of {} tasks to {tasks}", self.maps.len());
        }
        Ok(Self {
            d_x: self.d_x,
            maps: self.maps[..tasks].to_vec(),
        })
    }

    fn check_task(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.maps.len() {
            bail!(Index, "task {t} outside 1..={}", self.maps.len());
        }
        Ok(())
    }

    /// `g_t ∘ ... ∘ g_1 (x1)`.
    pub fn apply(&self, t: usize, x1: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_task(t)?;
        if x1.len() != self.d_x {
            bail!(Shape, "input has dimension {}, chain expects {}", x1.len(), self.d_x);
        }
        Ok(self.maps[1..t].iter().fold(x1.clone(), |x, g| g.apply(&x)))
    }

    /// `[x_1, x_2, ..., x_T]` for one trajectory.
    pub fn trajectory(&self, x1: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(self.maps.len());
        out.push(x1.clone());
        for g in &self.maps[1..] {
            let next = g.apply(out.last().unwrap());
            out.push(next);
        }
        out
    }

    /// `prod_{i<=t} L_{g,i}`.
    pub fn cumulative_lipschitz(&self, t: usize) -> Result<f64> {
        self.check_task(t)?;
        Ok(self.maps[..t].iter().map(Transformation::lipschitz).product())
    }

    pub fn max_cumulative_lipschitz(&self) -> f64 {
        self.maps
            .iter()
            .scan(1.0, |acc, g| {
                *acc *= g.lipschitz();
                Some(*acc)
            })
            .fold(0.0, f64::max)
    }

    /// Overall factor `s` when `x_t = s x_1` for this `t`.
    pub fn uniform_scale(&self, t: usize) -> Option<f64> {
        self.check_task(t).ok()?;
        self.maps[..t].iter().map(Transformation::uniform_scale).product()
    }

    /// `L_G = 2 L_F max_t prod_{i<=t} L_{g,i}`; `K_G(r) = max(1, 2 r L_G + 2 C_max)`
    /// is dominated by `k_G r` for `r >= 1` with `k_G = 2 L_G + 2 C_max + 1`.
    pub fn lipschitz_constants(&self, lf: f64, c_max: f64) -> Result<LipschitzSummary> {
        if !(lf > 0.0 && lf.is_finite()) {
            bail!(Argument, "L_F must be positive and finite, got {lf}");
        }
        if !(c_max >= 0.0 && c_max.is_finite()) {
            bail!(Argument, "C_max must be non-negative and finite, got {c_max}");
        }
        let l_g = 2.0 * lf * self.max_cumulative_lipschitz();
        Ok(LipschitzSummary {
            l_g,
            k_g: 2.0 * l_g + 2.0 * c_max + 1.0,
            alpha: 1.0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use std::f64::consts::FRAC_PI_2;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    // Independent matrix-apply oracle: plain nested loops over row slices.
    fn oracle_matvec(rows: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        rows.iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    #[test]
    fn identity_chain_returns_input() {
        let chain = DependencyChain::identity(2, 1);
        assert_eq!(chain.apply(1, &v(&[1.0, 2.0])).unwrap(), v(&[1.0, 2.0]));
    }

    #[test]
    fn huge_scaling_is_applied() {
        let chain = DependencyChain::new(3, vec![Transformation::Identity, Transformation::scaling(1e10).unwrap()]).unwrap();
        let x = v(&[1.0, -2.0, 0.5]);
        assert_eq!(chain.apply(2, &x).unwrap(), &x * 1e10);
    }

    #[test]
    fn quarter_turn_matches_hand_oracle() {
        let rot = Transformation::rotation_from_angles(2, &[FRAC_PI_2]).unwrap();
        let chain = DependencyChain::new(2, vec![Transformation::Identity, rot.clone()]).unwrap();
        let got = chain.apply(2, &v(&[1.0, 0.0])).unwrap();
        let Transformation::Rotation(q) = &rot else { unreachable!() };
        let rows: Vec<Vec<f64>> = (0..2).map(|i| vec![q[(i, 0)], q[(i, 1)]]).collect();
        let want = oracle_matvec(&rows, &[1.0, 0.0]);
        assert!((got[0] - want[0]).abs() < 1e-15 && (got[1] - want[1]).abs() < 1e-15);
        assert!(got[0].abs() < 1e-15 && (got[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn task_index_is_checked() {
        let chain = DependencyChain::identity(2, 3);
        assert!(matches!(chain.apply(0, &v(&[0.0, 0.0])), Err(crate::Error::Index(_))));
        assert!(matches!(chain.apply(4, &v(&[0.0, 0.0])), Err(crate::Error::Index(_))));
    }

    #[test]
    fn lipschitz_constants_follow_composition() {
        let ident = DependencyChain::identity(4, 3);
        assert_eq!(ident.lipschitz_constants(1.0, 0.0).unwrap().l_g, 2.0);

        let scaled = DependencyChain::new(4, vec![Transformation::Identity, Transformation::scaling(5.0).unwrap()]).unwrap();
        assert_eq!(scaled.lipschitz_constants(1.0, 0.0).unwrap().l_g, 10.0);

        let mut rng = stream(1, &[]);
        let rotated =
            DependencyChain::new(4, vec![Transformation::Identity, Transformation::random_rotation(4, &mut rng).unwrap()])
                .unwrap();
        let s = rotated.lipschitz_constants(3.0, 0.5).unwrap();
        assert_eq!(s.l_g, 6.0);
        assert_eq!(s.k_g, 2.0 * 6.0 + 1.0 + 1.0);
        assert_eq!(s.alpha, 1.0);

        assert!(matches!(ident.lipschitz_constants(0.0, 0.0), Err(crate::Error::Argument(_))));
    }

    #[test]
    fn max_cumulative_picks_the_largest_prefix() {
        let chain = DependencyChain::new(
            2,
            vec![
                Transformation::Identity,
                Transformation::scaling(4.0).unwrap(),
                Transformation::scaling(0.1).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(chain.max_cumulative_lipschitz(), 4.0);
        assert!((chain.cumulative_lipschitz(3).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn affine_lipschitz_is_spectral_norm() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, -7.0]);
        let g = Transformation::affine(a, v(&[1.0, 1.0])).unwrap();
        assert!((g.lipschitz() - 7.0).abs() < 1e-12);
        let comp = Transformation::Composition(vec![g, Transformation::scaling(2.0).unwrap()]);
        assert!((comp.lipschitz() - 14.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_maps_are_rejected() {
        assert!(Transformation::permutation(vec![0, 0, 1]).is_err());
        assert!(Transformation::permutation(vec![0, 3, 1]).is_err());
        assert!(Transformation::scaling(-1.0).is_err());
        assert!(Transformation::rotation(DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])).is_err());
        assert!(DependencyChain::new(2, vec![Transformation::scaling(2.0).unwrap()]).is_err());
        let wrong_dim = Transformation::permutation(vec![1, 0, 2]).unwrap();
        assert!(DependencyChain::new(2, vec![Transformation::Identity, wrong_dim]).is_err());
    }

    #[test]
    fn random_rotation_is_orthogonal_and_preserves_norm() {
        let mut rng = stream(3, &[]);
        for d in [2, 5, 16] {
            let g = Transformation::random_rotation(d, &mut rng).unwrap();
            let p = Transformation::random_permutation(d, &mut rng);
            for _ in 0..20 {
                let x = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                assert!((g.apply(&x).norm() - x.norm()).abs() < 1e-10);
                assert!((p.apply(&x).norm() - x.norm()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn lipschitz_soundness_randomized() {
        let mut rng = stream(11, &[]);
        let d = 6;
        let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let maps = [
            Transformation::scaling(3.5).unwrap(),
            Transformation::random_rotation(d, &mut rng).unwrap(),
            Transformation::random_permutation(d, &mut rng),
            Transformation::affine(a, DVector::from_element(d, 0.3)).unwrap(),
        ];
        let comp = Transformation::Composition(maps.to_vec());
        for g in maps.iter().chain(std::iter::once(&comp)) {
            let l = g.lipschitz();
            for _ in 0..1000 {
                let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let w = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                assert!((g.apply(&z) - g.apply(&w)).norm() <= l * (&z - &w).norm() + 1e-9);
            }
        }
    }

    #[test]
    fn composition_matches_sequential_application_exactly() {
        let mut rng = stream(5, &[]);
        let d = 5;
        let parts = vec![
            Transformation::random_rotation(d, &mut rng).unwrap(),
            Transformation::scaling(2.5).unwrap(),
            Transformation::random_permutation(d, &mut rng),
        ];
        let comp = Transformation::Composition(parts.clone());
        for _ in 0..50 {
            let x = DVector::from_fn(d, |_, _| rng.random::<f64>());
            let seq = parts.iter().fold(x.clone(), |acc, g| g.apply(&acc));
            assert_eq!(comp.apply(&x), seq);
        }
    }

    #[test]
    fn trajectory_agrees_with_apply_bitwise() {
        let chain = DependencyChain::block_drift(8, 4, 2, 0.5).unwrap();
        let x = DVector::from_fn(8, |i, _| (i as f64).sin());
        let traj = chain.trajectory(&x);
        for t in 1..=4 {
            assert_eq!(traj[t - 1], chain.apply(t, &x).unwrap());
        }
    }

    #[test]
    fn block_drift_profiles() {
        let chain = DependencyChain::block_drift(6, 3, 2, 0.5).unwrap();
        let ones = DVector::from_element(6, 1.0);
        assert_eq!(chain.apply(1, &ones).unwrap(), ones);
        // Task 2 emphasises block 2 (coordinates 2, 3).
        let x2 = chain.apply(2, &ones).unwrap();
        assert_eq!(x2.as_slice(), &[0.5, 0.5, 1.0, 1.0, 0.5, 0.5]);
        let x3 = chain.apply(3, &ones).unwrap();
        assert_eq!(x3.as_slice(), &[0.25, 0.25, 0.5, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn specs_parse_from_tagged_records() {
        #[derive(Deserialize)]
        struct Wrap {
            maps: Vec<TransformSpec>,
        }
        let w: Wrap = toml::from_str(
            r#"maps = [
                {kind = "identity"},
                {kind = "scaling", s = 100.0},
                {kind = "rotation", angles = [1.0]},
                {kind = "permutation", perm = [1, 0, 2]},
                {kind = "affine", diag = [1.0, 2.0, 3.0]},
            ]"#,
        )
        .unwrap();
        let chain = DependencyChain::from_specs(3, &w.maps).unwrap();
        assert_eq!(chain.len(), 5);
        assert_eq!(chain.maps()[1], Transformation::Scaling(100.0));
        assert_eq!(chain.uniform_scale(2), Some(100.0));
        assert_eq!(chain.uniform_scale(3), None);
    }
}
