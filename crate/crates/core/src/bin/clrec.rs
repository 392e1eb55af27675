use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cl_recovery::bounds::{self, DEFAULT_U_GRID};
use cl_recovery::datagen::generate_full;
use cl_recovery::harness::{self, ExperimentConfig, PlotSpec};
use cl_recovery::memory::restrict;
use cl_recovery::rng::{derive, tag};
use cl_recovery::{Error, InputDist};

const EXIT_OTHER: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_OUT_OF_REGIME: u8 = 3;
const EXIT_SOLVER: u8 = 4;

#[derive(Parser)]
#[command(name = "clrec", version, about = "Continual-learning recovery experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long, short)]
    config: PathBuf,
    /// `section.key=value` overrides, applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `trials`.
    #[arg(long)]
    trials: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> cl_recovery::Result<ExperimentConfig> {
        let mut o = self.set.clone();
        if let Some(s) = self.seed {
            o.push(format!("seed={s}"));
        }
        if let Some(t) = self.trials {
            o.push(format!("trials={t}"));
        }
        ExperimentConfig::load(&self.config, &o)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw the task sequence and write samples plus memory index.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Fit one trial at the first grid point and report its errors.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the configured grid and write the result table.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for plot data.
        #[arg(long)]
        plot_dir: Option<PathBuf>,
    },
    /// Evaluate the explicit bound at the first grid point.
    Bound {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Monte-Carlo check of the concentration inequalities.
    Validate {
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
        /// Projection radius, in units of sigma.
        #[arg(long, default_value_t = 3.5)]
        r: f64,
        #[arg(long, default_value_t = 1.0)]
        lipschitz: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Log-log slope between two columns of a result table's aggregate rows.
    Slope {
        table: PathBuf,
        #[arg(long, default_value = "total_samples")]
        x: String,
        #[arg(long, default_value = "err_weighted")]
        y: String,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Parse(_) => EXIT_CONFIG,
                _ => EXIT_OTHER,
            })
        }
    }
}

fn run(cli: Cli) -> cl_recovery::Result<u8> {
    match cli.cmd {
        Cmd::Generate { cfg, out_dir } => {
            let cfg = cfg.load()?;
            let point = cfg.point(0)?;
            let data_seed = derive(cfg.seed, &[tag::TRIAL, 0, 0]);
            let spec = point.build_spec(data_seed)?;
            let store = generate_full(&spec)?;
            let view = restrict(&store, &point.policy(derive(data_seed, &[tag::MEMORY]))?, spec.tasks)?;
            std::fs::create_dir_all(&out_dir)?;
            view.write_csv(out_dir.join("samples.csv"))?;
            view.write_index(out_dir.join("index.csv"))?;
            println!("wrote {} samples for T = {} to {}", view.counts().iter().sum::<usize>(), spec.tasks, out_dir.display());
            Ok(0)
        }
        Cmd::Train { cfg } => {
            let cfg = cfg.load()?;
            let detail = harness::run_one(&cfg.point(0)?, 0, 0, None)?;
            let r = &detail.row;
            println!("paradigm     {}", r.paradigm);
            println!("counts       n_min = {}, total = {}", r.n_min, r.total_samples);
            println!("converged    {} ({} iterations)", r.converged, detail.outcome.solver_iters);
            println!("objective    {}", r.objective);
            println!("err_weighted {} (se {})", r.err_weighted, r.err_se);
            println!("err_tasks    {}", r.err_tasks);
            println!("theta_hat    {:?}", detail.outcome.theta_hat);
            Ok(if r.converged { 0 } else { EXIT_SOLVER })
        }
        Cmd::Sweep { cfg, out, plot_dir } => {
            if cfg.seed.is_none() {
                return Err(Error::Config("`sweep` needs --seed".into()));
            }
            let cfg = cfg.load()?;
            let result = harness::run_sweep(&cfg)?;
            match &out {
                Some(p) => harness::write_table(&result.rows, std::fs::File::create(p)?)?,
                None => harness::write_table(&result.rows, std::io::stdout().lock())?,
            }
            if let Some(dir) = plot_dir {
                std::fs::create_dir_all(&dir)?;
                harness::emit_plotdata(&result.rows, &PlotSpec::default(), &dir)?;
            }
            if result.failure_rate() > cfg.eval.failure_threshold {
                eprintln!("{} of {} fits failed", result.failures, result.runs);
                return Ok(EXIT_SOLVER);
            }
            if cfg.eval.bound && result.out_of_regime > 0 {
                eprintln!("{} of {} runs are outside the bound's regime", result.out_of_regime, result.runs);
                return Ok(EXIT_OUT_OF_REGIME);
            }
            Ok(0)
        }
        Cmd::Bound { cfg } => {
            let (consts, inputs, v) = harness::bound_at(&cfg.load()?)?;
            println!("kappa {} M2 {} L_G {} k_G {} B {}", consts.kappa, consts.m2, consts.l_g, consts.k_g, consts.b);
            println!("n' {} n'' {}", inputs.n_prime(), inputs.n_dprime());
            println!("bound {} (terms {:?})", v.value, v.terms);
            println!(
                "regime {} (n margin {}, m margin {}, lambda ok {})",
                v.in_regime, v.condition.n_margin, v.condition.m_margin, v.condition.lambda_ok
            );
            Ok(if v.in_regime { 0 } else { EXIT_OUT_OF_REGIME })
        }
        Cmd::Validate { sigma, d, trials, r, lipschitz, seed } => {
            let norm = bounds::validate_norm_concentration(InputDist::Gaussian, sigma, d, trials, &DEFAULT_U_GRID, seed)?;
            println!("u,empirical,se,bound,ok");
            for row in &norm.rows {
                println!("{},{},{},{},{}", row.param, row.empirical, row.se, row.bound, row.ok);
            }
            let proj = bounds::validate_projection_difference(InputDist::Gaussian, sigma, d, r * sigma, lipschitz, trials, seed)?;
            println!("r,empirical,se,bound,ok");
            for row in &proj.rows {
                println!("{},{},{},{},{}", row.param, row.empirical, row.se, row.bound, row.ok);
            }
            Ok(if norm.violations() + proj.violations() == 0 { 0 } else { EXIT_OTHER })
        }
        Cmd::Slope { table, x, y } => {
            let rows = harness::read_table(std::fs::File::open(table)?)?;
            let (slope, se) = harness::fit_loglog_slope(&rows, &x, &y)?;
            println!("{slope} {se}");
            Ok(0)
        }
    }
}
