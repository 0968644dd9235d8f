use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mlwls::harness::engine::{schedule_options, space_builder};
use mlwls::harness::{fit_rate, lower_envelope, run_sweep, Method, RunConfig, RunRecord, Sweep};
use mlwls::indexsets::total_degree_set;
use mlwls::lsq::k_constant;
use mlwls::multilevel::{build_schedule, SamplerKind};
use mlwls::problems::{EllipticSolver, ProblemSpec, SyntheticConfig};
use mlwls::sampling::{
    arcsine_weight, density_bounds_check, stability_margin, NormEstimator, PNorm, Sampler, SamplingSpec,
};
use mlwls::{Error, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "mlwls", version, about = "Multilevel weighted least-squares sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep from a JSON configuration, inline flags, or both (flags win).
    Run(RunArgs),
    /// Fit the work-error rate of a result file.
    Fit {
        csv: PathBuf,
        /// Power of |log error| divided out of the work.
        #[arg(long)]
        log_power: Option<f64>,
        /// Fit only the lower envelope of the rows.
        #[arg(long)]
        envelope: bool,
    },
    /// Sampling diagnostics for total-degree spaces, plus the schedules of a multilevel configuration.
    Check(CheckArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// synthetic | elliptic
    #[arg(long)]
    problem: Option<String>,
    /// sl | ml | ml-conditioned | adaptive
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    /// `1,2,3` or `levels:…`, `tol:…`, `budget:…`, `steps:…`, `grid:LEVELS/DEGREES`.
    #[arg(long)]
    sweep: Option<String>,
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// optimal | arcsine | mis
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    mc_count: Option<usize>,
    /// CSV destination; metadata goes next to it with a .json extension.
    #[arg(long, visible_alias = "output")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter dimension when no configuration is given.
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Highest total degree examined.
    #[arg(long, default_value_t = 4)]
    degree: u32,
    /// Uniform mixture weight of the perturbed density fed to the stability check.
    #[arg(long, default_value_t = 0.01)]
    contamination: f64,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = run_config(args)?;
            let record = run_sweep(&cfg)?;
            for r in &record.rows {
                println!("L={} seed={} work={} error={} se={}", r.level, r.seed, r.work, r.error, r.error_se);
            }
            if let Some(f) = record.fitted {
                println!("slope={}", f.slope);
            }
            Ok(())
        }
        Command::Fit { csv, log_power, envelope } => {
            let record = RunRecord::load(&csv)?;
            let mut points = record.points();
            if envelope {
                points = lower_envelope(&points);
            }
            let fit = fit_rate(&points, log_power)?;
            println!("{}", serde_json::to_string(&fit)?);
            Ok(())
        }
        Command::Check(args) => check(args),
    }
}

fn run_config(args: RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let (Some(problem), Some(method), Some(sweep)) = (&args.problem, &args.method, &args.sweep) else {
                return Err(Error::Config("without --config, --problem, --method and --sweep are required".into()));
            };
            let seeds = if args.seed.is_empty() { vec![0] } else { args.seed.clone() };
            RunConfig::new(parse_problem(problem, args.d.unwrap_or(2))?, parse_method(method)?, parse_sweep(sweep)?, seeds)
        }
    };
    if args.config.is_some() {
        if let Some(p) = &args.problem {
            cfg.problem = parse_problem(p, args.d.unwrap_or(cfg.problem.dim()))?;
        } else if let Some(d) = args.d {
            cfg.problem = with_dim(&cfg.problem, d);
        }
        if let Some(m) = &args.method {
            cfg.method = parse_method(m)?;
        }
        if let Some(s) = &args.sweep {
            cfg.sweep = parse_sweep(s)?;
        }
        if !args.seed.is_empty() {
            cfg.seeds = args.seed.clone();
        }
    }
    if let Some(s) = &args.sampler {
        cfg.sampler = parse_sampler(s)?;
    }
    if let Some(m) = args.mc_count {
        cfg.mc_samples = m;
    }
    if args.out.is_some() {
        cfg.output = args.out;
    }
    if cfg.output.is_none() {
        return Err(Error::Config("no output path in the configuration or on the command line".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_problem(name: &str, d: usize) -> Result<ProblemSpec> {
    match name {
        "synthetic" => Ok(ProblemSpec::Synthetic(SyntheticConfig::new(d, 3.0, 2.0, 2.0, 2.0, 2.0))),
        "elliptic" => Ok(ProblemSpec::Elliptic {
            dim: d,
            solver: EllipticSolver::default(),
        }),
        other => Err(Error::Parse(format!("unknown problem '{other}'"))),
    }
}

fn with_dim(problem: &ProblemSpec, d: usize) -> ProblemSpec {
    match problem {
        ProblemSpec::Synthetic(c) => ProblemSpec::Synthetic(SyntheticConfig { dim: d, ..c.clone() }),
        ProblemSpec::Elliptic { solver, .. } => ProblemSpec::Elliptic { dim: d, solver: *solver },
    }
}

fn parse_method(name: &str) -> Result<Method> {
    match name {
        "sl" => Ok(Method::Sl),
        "ml" => Ok(Method::Ml),
        "ml-conditioned" => Ok(Method::MlConditioned),
        "adaptive" => Ok(Method::Adaptive),
        other => Err(Error::Parse(format!("unknown method '{other}'"))),
    }
}

fn parse_sampler(name: &str) -> Result<SamplerKind> {
    match name {
        "optimal" => Ok(SamplerKind::Optimal),
        "arcsine" => Ok(SamplerKind::Arcsine),
        "mis" => Ok(SamplerKind::Mis),
        other => Err(Error::Parse(format!("unknown sampler '{other}'"))),
    }
}

fn list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| Error::Parse(format!("bad sweep entry '{s}'"))))
        .collect()
}

fn parse_sweep(text: &str) -> Result<Sweep> {
    let (kind, rest) = text.split_once(':').unwrap_or(("levels", text));
    match kind {
        "levels" => Ok(Sweep::Levels(list(rest)?)),
        "tol" => Ok(Sweep::Tolerances(list(rest)?)),
        "budget" => Ok(Sweep::Budgets(list(rest)?)),
        "steps" => Ok(Sweep::Steps(list(rest)?)),
        "grid" => {
            let (levels, degrees) = rest
                .split_once('/')
                .ok_or_else(|| Error::Parse("grid sweep needs LEVELS/DEGREES".into()))?;
            Ok(Sweep::Grid {
                levels: list(levels)?,
                degrees: list(degrees)?,
            })
        }
        other => Err(Error::Parse(format!("unknown sweep kind '{other}'"))),
    }
}

fn check(args: CheckArgs) -> Result<()> {
    let cfg = args.config.as_ref().map(|p| RunConfig::load(p)).transpose()?;
    let d = cfg.as_ref().map_or(args.d, |c| c.problem.dim());
    if d == 0 {
        return Err(Error::Config("dimension must be positive".into()));
    }
    for degree in 0..=args.degree {
        let space = total_degree_set(d, degree);
        let optimal = Sampler::new(SamplingSpec::optimal(space.clone()))?;
        let perturbed = Sampler::new(SamplingSpec::perturbed(SamplingSpec::optimal(space.clone()), args.contamination))?;
        let mut line = json!({ "degree": degree, "dim": space.len() });
        if d <= 3 {
            line["k_optimal"] = json!(k_constant(&space, &|y| optimal.weight(y))?);
            line["k_arcsine"] = json!(k_constant(&space, &arcsine_weight)?);
            let bounds = density_bounds_check(&space, (4000f64).powf(1.0 / d as f64).ceil() as usize)?;
            line["density_bounds"] = json!(bounds);
        }
        let ratio = |y: &[f64]| perturbed.density(y) / optimal.density(y);
        let q = (degree as usize + 4).min(if d <= 3 { 40 } else { 8 });
        for (key, p) in [("stability_1", PNorm::One), ("stability_2", PNorm::Two), ("stability_inf", PNorm::Inf)] {
            line[key] = json!(stability_margin(&space, &ratio, p, NormEstimator::Quadrature(q))?);
        }
        println!("{line}");
    }
    if let Some(cfg) = cfg {
        let params = cfg.rate_params()?;
        println!("{}", json!({ "rates": params }));
        if let Sweep::Levels(levels) = &cfg.sweep {
            let opts = schedule_options(&cfg, &params);
            let builder = space_builder(&cfg);
            for &l in levels {
                let s = build_schedule(&params, l, builder.as_ref(), opts)?;
                println!("{}", json!({ "L": l, "dims": s.dims(), "samples": s.sample_counts }));
            }
        }
    }
    Ok(())
}
