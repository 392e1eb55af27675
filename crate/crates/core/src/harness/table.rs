//! Result rows, aggregation, CSV I/O, slope fits and plot data.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

pub const RUN: &str = "run";
pub const AGGREGATE: &str = "aggregate";

/// One CSV row. Aggregate rows hold means over the converged runs of a grid
/// point; their `trial` column is the number of runs included and `err_se`
/// is the across-trial standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub kind: String,
    pub grid_index: usize,
    pub axis: String,
    pub axis_value: Option<f64>,
    pub trial: usize,
    pub paradigm: String,
    #[serde(rename = "T")]
    pub tasks: usize,
    pub m: usize,
    pub n_min: usize,
    pub total_samples: usize,
    pub seed: u64,
    pub objective: f64,
    pub converged: bool,
    pub err_weighted: f64,
    pub err_se: f64,
    pub err_avg: f64,
    pub err_beta: Option<f64>,
    /// Per-task errors joined by `;`.
    pub err_tasks: String,
    pub discrepancy: Option<f64>,
    pub bound_value: Option<f64>,
    pub in_regime: Option<bool>,
    pub config_hash: String,
    pub provenance: String,
}

impl Row {
    pub fn is_aggregate(&self) -> bool {
        self.kind == AGGREGATE
    }

    pub fn per_task(&self) -> Vec<f64> {
        if self.err_tasks.is_empty() {
            return Vec::new();
        }
        self.err_tasks.split(';').map(|v| v.parse().unwrap_or(f64::NAN)).collect()
    }

    /// Numeric column by CSV name.
    pub fn get(&self, col: &str) -> Option<f64> {
        Some(match col {
            "axis_value" => self.axis_value?,
            "T" => self.tasks as f64,
            "m" => self.m as f64,
            "n_min" => self.n_min as f64,
            "total_samples" => self.total_samples as f64,
            "objective" => self.objective,
            "err_weighted" => self.err_weighted,
            "err_se" => self.err_se,
            "err_avg" => self.err_avg,
            "err_beta" => self.err_beta?,
            "discrepancy" => self.discrepancy?,
            "bound_value" => self.bound_value?,
            _ => return None,
        })
    }
}

pub(crate) fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let vals: Option<Vec<f64>> = v.collect();
    vals.filter(|v| !v.is_empty()).map(|v| mean(&v))
}

/// Aggregate rows (one per grid point, in grid order) from run rows.
/// Non-converged runs are excluded.
pub fn aggregate(runs: &[Row]) -> Vec<Row> {
    let mut points: Vec<usize> = runs.iter().filter(|r| !r.is_aggregate()).map(|r| r.grid_index).collect();
    points.sort_unstable();
    points.dedup();
    points
        .into_iter()
        .map(|g| {
            let all: Vec<&Row> = runs.iter().filter(|r| !r.is_aggregate() && r.grid_index == g).collect();
            let ok: Vec<&Row> = all.iter().copied().filter(|r| r.converged).collect();
            let first = all[0];
            let errs: Vec<f64> = ok.iter().map(|r| r.err_weighted).collect();
            let k = errs.len();
            let (err, se) = if k == 0 {
                (f64::NAN, f64::NAN)
            } else if k == 1 {
                (errs[0], 0.0)
            } else {
                let mu = mean(&errs);
                let var = errs.iter().map(|e| (e - mu) * (e - mu)).sum::<f64>() / (k - 1) as f64;
                (mu, (var / k as f64).sqrt())
            };
            let tasks: Vec<Vec<f64>> = ok.iter().map(|r| r.per_task()).collect();
            let per_task: Vec<f64> = match tasks.first() {
                Some(t0) => (0..t0.len()).map(|j| mean(&tasks.iter().map(|t| t[j]).collect::<Vec<_>>())).collect(),
                None => Vec::new(),
            };
            let regime: Option<Vec<bool>> = ok.iter().map(|r| r.in_regime).collect();
            Row {
                kind: AGGREGATE.into(),
                grid_index: g,
                axis: first.axis.clone(),
                axis_value: first.axis_value,
                trial: k,
                paradigm: first.paradigm.clone(),
                tasks: first.tasks,
                m: first.m,
                n_min: ok.iter().map(|r| r.n_min).min().unwrap_or(first.n_min),
                total_samples: first.total_samples,
                seed: first.seed,
                objective: if k == 0 { f64::NAN } else { mean(&ok.iter().map(|r| r.objective).collect::<Vec<_>>()) },
                converged: k == all.len(),
                err_weighted: err,
                err_se: se,
                err_avg: if k == 0 { f64::NAN } else { mean(&ok.iter().map(|r| r.err_avg).collect::<Vec<_>>()) },
                err_beta: mean_opt(ok.iter().map(|r| r.err_beta)),
                err_tasks: join(&per_task),
                discrepancy: mean_opt(ok.iter().map(|r| r.discrepancy)),
                bound_value: mean_opt(ok.iter().map(|r| r.bound_value)),
                in_regime: regime.filter(|v| !v.is_empty()).map(|v| v.iter().all(|&b| b)),
                config_hash: first.config_hash.clone(),
                provenance: first.provenance.clone(),
            }
        })
        .collect()
}

pub fn write_table<W: std::io::Write>(rows: &[Row], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn table_to_string(rows: &[Row]) -> Result<String> {
    let mut buf = Vec::new();
    write_table(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn read_table<R: std::io::Read>(input: R) -> Result<Vec<Row>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Into::into))
        .collect()
}

/// OLS slope of `ln y` on `ln x` and its standard error.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        bail!(Shape, "{} x values, {} y values", xs.len(), ys.len());
    }
    if xs.len() < 3 {
        bail!(Argument, "need at least 3 points, got {}", xs.len());
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        bail!(Argument, "log-log fit needs positive finite values");
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        bail!(Argument, "x values are all equal");
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    let dof = (xs.len() - 2) as f64;
    Ok((slope, (sse / dof / sxx).sqrt()))
}

/// Log-log slope over the aggregate rows of `table`.
pub fn fit_loglog_slope(table: &[Row], xcol: &str, ycol: &str) -> Result<(f64, f64)> {
    let agg: Vec<&Row> = table.iter().filter(|r| r.is_aggregate()).collect();
    let mut xs = Vec::with_capacity(agg.len());
    let mut ys = Vec::with_capacity(agg.len());
    for r in agg {
        match (r.get(xcol), r.get(ycol)) {
            (Some(x), Some(y)) => {
                xs.push(x);
                ys.push(y);
            }
            _ => bail!(Argument, "column `{xcol}` or `{ycol}` is missing or not numeric"),
        }
    }
    fit_loglog(&xs, &ys)
}

/// Which aggregate columns to plot against which x column.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotSpec {
    pub x: String,
    pub curves: Vec<String>,
    pub stem: String,
}

impl Default for PlotSpec {
    fn default() -> Self {
        Self {
            x: "axis_value".into(),
            curves: vec!["err_weighted".into(), "bound_value".into()],
            stem: "sweep".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub curve: String,
    pub x: f64,
    pub y: f64,
}

pub fn plot_points(table: &[Row], spec: &PlotSpec) -> Vec<PlotPoint> {
    let mut out = Vec::new();
    for curve in &spec.curves {
        for r in table.iter().filter(|r| r.is_aggregate()) {
            if let (Some(x), Some(y)) = (r.get(&spec.x), r.get(curve)) {
                out.push(PlotPoint { curve: curve.clone(), x, y });
            }
        }
    }
    out
}

/// Writes `<stem>.csv` (tidy: curve, x, y) and one two-column
/// `<stem>_<curve>.dat` per curve that has points. Returns the written paths.
pub fn emit_plotdata(table: &[Row], spec: &PlotSpec, dir: &Path) -> Result<Vec<PathBuf>> {
    let points = plot_points(table, spec);
    let tidy = dir.join(format!("{}.csv", spec.stem));
    let mut w = csv::Writer::from_path(&tidy)?;
    if points.is_empty() {
        w.write_record(["curve", "x", "y"])?;
    }
    for p in &points {
        w.serialize(p)?;
    }
    w.flush()?;
    let mut written = vec![tidy];
    for curve in &spec.curves {
        let series: Vec<&PlotPoint> = points.iter().filter(|p| &p.curve == curve).collect();
        if series.is_empty() {
            continue;
        }
        let mut text = format!("# {} {}\n", spec.x, curve);
        for p in series {
            text.push_str(&format!("{} {}\n", p.x, p.y));
        }
        let path = dir.join(format!("{}_{}.dat", spec.stem, curve));
        std::fs::write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_plotdata(path: &Path) -> Result<Vec<PlotPoint>> {
    csv::Reader::from_path(path)?
        .deserialize()
        .map(|r| r.map_err(Into::into))
        .collect()
}
