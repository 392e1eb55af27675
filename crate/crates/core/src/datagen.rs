//! Task-sequence generation and the partial sample matrix.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::models::{ParameterSpace, Predictor};
use crate::rng::{stream, tag};
use crate::transforms::DependencyChain;

/// Coordinate law for inputs and noise; each is zero-mean with the requested
/// standard deviation and independent across coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputDist {
    #[default]
    Gaussian,
    /// `U[-sqrt(3) s, sqrt(3) s]`.
    BoundedUniform,
    /// `±s` with equal probability.
    Rademacher,
}

impl InputDist {
    pub fn draw<R: Rng + ?Sized>(self, std: f64, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian => std * rng.sample::<f64, _>(StandardNormal),
            Self::BoundedUniform => std * 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0),
            Self::Rademacher => {
                if rng.random::<bool>() {
                    std
                } else {
                    -std
                }
            }
        }
    }

    pub fn fill<R: Rng + ?Sized>(self, std: f64, out: &mut [f64], rng: &mut R) {
        for v in out {
            *v = self.draw(std, rng);
        }
    }
}

/// Full generative description of a task sequence.
#[derive(Clone, Debug)]
pub struct TaskSequenceSpec {
    pub d_x: usize,
    pub d_y: usize,
    pub tasks: usize,
    pub m: usize,
    /// Inputs have per-coordinate variance `sigma^2 / d_x`.
    pub sigma: f64,
    /// Noise has per-coordinate variance `nu^2`.
    pub nu: f64,
    pub input_dist: InputDist,
    pub noise_dist: InputDist,
    pub chain: DependencyChain,
    pub f_star: Predictor,
    pub space: ParameterSpace,
    pub seed: u64,
}

impl TaskSequenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_x == 0 || self.d_y == 0 || self.tasks == 0 || self.m == 0 {
            bail!(Argument, "d_x, d_y, T and m must all be at least 1");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) || !(self.nu >= 0.0 && self.nu.is_finite()) {
            bail!(Argument, "sigma and nu must be finite and non-negative");
        }
        if self.chain.len() != self.tasks {
            bail!(Shape, "chain has {} maps, spec has T = {}", self.chain.len(), self.tasks);
        }
        if self.chain.d_x() != self.d_x {
            bail!(Shape, "chain acts on dimension {}, spec has d_x = {}", self.chain.d_x(), self.d_x);
        }
        let fam = self.f_star.family();
        if fam.d_x() != self.d_x || fam.d_y() != self.d_y {
            bail!(Shape, "f* maps R^{} -> R^{}, spec needs R^{} -> R^{}", fam.d_x(), fam.d_y(), self.d_x, self.d_y);
        }
        if self.space.p() != fam.p() || !self.space.contains(self.f_star.theta()) {
            bail!(Precondition, "f* is not realizable in the parameter ball of radius {}", self.space.radius());
        }
        Ok(())
    }

    pub fn input_std(&self) -> f64 {
        self.sigma / (self.d_x as f64).sqrt()
    }

    /// A fresh task-1 input from `rng`.
    pub fn draw_x1<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let mut x = DVector::zeros(self.d_x);
        self.input_dist.fill(self.input_std(), x.as_mut_slice(), rng);
        x
    }
}

/// The `m` task-1 inputs; sample `i` is drawn from its own stream.
pub fn sample_task1(spec: &TaskSequenceSpec) -> Result<Vec<DVector<f64>>> {
    spec.validate()?;
    Ok((0..spec.m)
        .map(|i| spec.draw_x1(&mut stream(spec.seed, &[tag::INPUT, i as u64])))
        .collect())
}

/// The complete `T x m` sample matrix.
pub fn generate_full(spec: &TaskSequenceSpec) -> Result<SampleStore> {
    let x1 = sample_task1(spec)?;
    let (t_n, m, d_x, d_y) = (spec.tasks, spec.m, spec.d_x, spec.d_y);
    let columns: Vec<(Vec<f64>, Vec<f64>)> = x1
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut xs = Vec::with_capacity(t_n * d_x);
            let mut ys = vec![0.0; t_n * d_y];
            for (k, xt) in spec.chain.trajectory(x).into_iter().enumerate() {
                let y = &mut ys[k * d_y..(k + 1) * d_y];
                spec.f_star.eval_slice(xt.as_slice(), y);
                let mut rng = stream(spec.seed, &[tag::NOISE, (k + 1) as u64, i as u64]);
                for v in y.iter_mut() {
                    *v += spec.noise_dist.draw(spec.nu, &mut rng);
                }
                xs.extend_from_slice(xt.as_slice());
            }
            (xs, ys)
        })
        .collect();
    let mut x = vec![0.0; t_n * m * d_x];
    let mut y = vec![0.0; t_n * m * d_y];
    for (i, (xs, ys)) in columns.into_iter().enumerate() {
        for t in 0..t_n {
            x[(t * m + i) * d_x..(t * m + i + 1) * d_x].copy_from_slice(&xs[t * d_x..(t + 1) * d_x]);
            y[(t * m + i) * d_y..(t * m + i + 1) * d_y].copy_from_slice(&ys[t * d_y..(t + 1) * d_y]);
        }
    }
    Ok(SampleStore {
        tasks: t_n,
        m,
        d_x,
        d_y,
        x: Arc::new(x),
        y: Arc::new(y),
        rows: vec![(0..m).collect(); t_n],
    })
}

/// `n` fresh pairs `(x_t, f*(x_t))`, each from a new task-1 draw.
pub fn fresh_eval_batch<R: Rng + ?Sized>(
    spec: &TaskSequenceSpec,
    t: usize,
    n: usize,
    rng: &mut R,
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    spec.validate()?;
    if n == 0 {
        bail!(Argument, "evaluation batch must be non-empty");
    }
    (0..n)
        .map(|_| {
            let xt = spec.chain.apply(t, &spec.draw_x1(rng))?;
            let fy = spec.f_star.eval(&xt)?;
            Ok((xt, fy))
        })
        .collect()
}

/// Samples `(x_ti, y_ti)` with per-task availability `R_t`.
///
/// Absent entries may still occupy buffer space but are never exposed.
#[derive(Clone, Debug)]
pub struct SampleStore {
    tasks: usize,
    m: usize,
    d_x: usize,
    d_y: usize,
    x: Arc<Vec<f64>>,
    y: Arc<Vec<f64>>,
    rows: Vec<Vec<usize>>,
}

impl PartialEq for SampleStore {
    fn eq(&self, other: &Self) -> bool {
        self.tasks == other.tasks
            && self.m == other.m
            && self.d_x == other.d_x
            && self.d_y == other.d_y
            && self.rows == other.rows
            && self.present().all(|(t, i)| self.x(t, i) == other.x(t, i) && self.y(t, i) == other.y(t, i))
    }
}

impl SampleStore {
    /// Builds a store from dense `T*m*d_x` / `T*m*d_y` buffers laid out task-major.
    pub fn from_dense(
        tasks: usize,
        m: usize,
        d_x: usize,
        d_y: usize,
        x: Vec<f64>,
        y: Vec<f64>,
        rows: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if x.len() != tasks * m * d_x || y.len() != tasks * m * d_y {
            bail!(Shape, "dense buffers do not match T={tasks}, m={m}, d_x={d_x}, d_y={d_y}");
        }
        let store = Self {
            tasks,
            m,
            d_x,
            d_y,
            x: Arc::new(x),
            y: Arc::new(y),
            rows: Vec::new(),
        };
        store.with_rows(rows)
    }

    pub fn tasks(&self) -> usize {
        self.tasks
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn d_y(&self) -> usize {
        self.d_y
    }

    /// `R_t` (sorted, 0-based sample indices).
    pub fn rows(&self, t: usize) -> &[usize] {
        &self.rows[t - 1]
    }

    /// `M_i = {t : i in R_t}`.
    pub fn cols(&self, i: usize) -> Vec<usize> {
        (1..=self.tasks).filter(|&t| self.contains(t, i)).collect()
    }

    pub fn n(&self, t: usize) -> usize {
        self.rows[t - 1].len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    pub fn contains(&self, t: usize, i: usize) -> bool {
        t >= 1 && t <= self.tasks && self.rows[t - 1].binary_search(&i).is_ok()
    }

    /// Every available `(t, i)`, task-major.
    pub fn present(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(k, r)| r.iter().map(move |&i| (k + 1, i)))
    }

    pub fn is_full(&self) -> bool {
        self.rows.iter().all(|r| r.len() == self.m)
    }

    pub fn x(&self, t: usize, i: usize) -> Option<&[f64]> {
        self.contains(t, i).then(|| self.x_raw(t, i))
    }

    pub fn y(&self, t: usize, i: usize) -> Option<&[f64]> {
        self.contains(t, i).then(|| self.y_raw(t, i))
    }

    pub(crate) fn x_raw(&self, t: usize, i: usize) -> &[f64] {
        let k = ((t - 1) * self.m + i) * self.d_x;
        &self.x[k..k + self.d_x]
    }

    pub(crate) fn y_raw(&self, t: usize, i: usize) -> &[f64] {
        let k = ((t - 1) * self.m + i) * self.d_y;
        &self.y[k..k + self.d_y]
    }

    /// Same buffers, first `tasks` tasks only.
    pub fn truncated(&self, tasks: usize) -> Result<Self> {
        if tasks == 0 || tasks > self.tasks {
            bail!(Index, "cannot view {tasks} tasks of a store with {}", self.tasks);
        }
        let mut out = self.clone();
        out.tasks = tasks;
        out.rows.truncate(tasks);
        Ok(out)
    }

    /// Same buffers, new availability. Each `rows[t]` must be within `[m]`.
    pub(crate) fn with_rows(&self, mut rows: Vec<Vec<usize>>) -> Result<Self> {
        if rows.len() != self.tasks {
            bail!(Shape, "expected {} index sets, got {}", self.tasks, rows.len());
        }
        for (k, r) in rows.iter_mut().enumerate() {
            r.sort_unstable();
            r.dedup();
            if let Some(&last) = r.last() {
                if last >= self.m {
                    bail!(Index, "index {last} in R_{} is outside [0, {})", k + 1, self.m);
                }
            }
        }
        let mut out = self.clone();
        out.rows = rows;
        Ok(out)
    }

    /// Writes `t,i,x_0..,y_0..` rows for every available sample.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string(), "i".to_string()];
        header.extend((0..self.d_x).map(|k| format!("x_{k}")));
        header.extend((0..self.d_y).map(|k| format!("y_{k}")));
        w.write_record(&header)?;
        for (t, i) in self.present() {
            let mut rec = vec![t.to_string(), i.to_string()];
            rec.extend(self.x_raw(t, i).iter().map(f64::to_string));
            rec.extend(self.y_raw(t, i).iter().map(f64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes the sidecar `t,m,n_t,indices` file; indices are `;`-separated.
    pub fn write_index<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "m", "n_t", "indices"])?;
        for t in 1..=self.tasks {
            let idx: Vec<String> = self.rows(t).iter().map(usize::to_string).collect();
            w.write_record([t.to_string(), self.m.to_string(), self.n(t).to_string(), idx.join(";")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<P: AsRef<Path>, Q: AsRef<Path>>(data: P, index: Q) -> Result<Self> {
        let mut rows = Vec::new();
        let mut m = None;
        let mut r = csv::Reader::from_path(index)?;
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let t: usize = parse_field(&rec, 0)?;
            if t != k + 1 {
                bail!(Parse, "index file rows must list tasks 1, 2, ... in order");
            }
            let mm: usize = parse_field(&rec, 1)?;
            if *m.get_or_insert(mm) != mm {
                bail!(Parse, "inconsistent m in index file");
            }
            let list = rec.get(3).unwrap_or("");
            let idx = list
                .split(';')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<usize>().map_err(|e| crate::Error::Parse(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if idx.len() != parse_field::<usize>(&rec, 2)? {
                bail!(Parse, "n_t disagrees with the index list for task {t}");
            }
            rows.push(idx);
        }
        let Some(m) = m else { bail!(Parse, "empty index file") };
        let tasks = rows.len();

        let mut r = csv::Reader::from_path(data)?;
        let header = r.headers()?.clone();
        let d_x = header.iter().filter(|h| h.starts_with("x_")).count();
        let d_y = header.iter().filter(|h| h.starts_with("y_")).count();
        if header.len() != 2 + d_x + d_y {
            bail!(Parse, "unexpected sample header");
        }
        let mut x = vec![0.0; tasks * m * d_x];
        let mut y = vec![0.0; tasks * m * d_y];
        let mut seen = vec![Vec::new(); tasks];
        for rec in r.records() {
            let rec = rec?;
            let t: usize = parse_field(&rec, 0)?;
            let i: usize = parse_field(&rec, 1)?;
            if t == 0 || t > tasks || i >= m {
                bail!(Index, "sample ({t}, {i}) outside the indexed layout");
            }
            let base = (t - 1) * m + i;
            for k in 0..d_x {
                x[base * d_x + k] = parse_field(&rec, 2 + k)?;
            }
            for k in 0..d_y {
                y[base * d_y + k] = parse_field(&rec, 2 + d_x + k)?;
            }
            seen[t - 1].push(i);
        }
        for (k, s) in seen.iter_mut().enumerate() {
            s.sort_unstable();
            let mut want = rows[k].clone();
            want.sort_unstable();
            if *s != want {
                bail!(Parse, "samples present for task {} do not match its index set", k + 1);
            }
        }
        Self::from_dense(tasks, m, d_x, d_y, x, y, rows)
    }
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, k: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let s = rec.get(k).ok_or_else(|| crate::Error::Parse(format!("missing field {k}")))?;
    s.trim().parse().map_err(|e: T::Err| crate::Error::Parse(format!("field {k} ({s:?}): {e}")))
}
