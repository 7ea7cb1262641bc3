//! Command-line front end. Exit codes: 0 success, 2 invalid input or
//! configuration, 3 solver failure, 4 I/O.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::census::{self, BinningSpec};
use crate::error::{Error, Result};
use crate::io;
use crate::model::{expected_distortion, AdversaryPrior, SupportLevel};
use crate::objective::{
    convexity_certificate, cost_initial_limited, cost_posterior_limited, dc_split, dirichlet_lower_bound,
    evaluate_leakage, lb_dc_split, ConvexityCertificate,
};
use crate::priors::{gen_biased_prior, mc_expected_posterior_cost, DirichletPrior, PerturbSpec};
use crate::solver::{multistart, SolveConfig, SolveResult};
use crate::sweep::{derive_seed, parse_delta_list, run_sweep, SweepPrior, SweepSpec, Units};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::InnerSolverFailure(_) | Error::DivergentGradient { .. } | Error::InfeasibleInit(_) => EXIT_SOLVER,
        _ => EXIT_INVALID,
    }
}

#[derive(Debug, Parser)]
#[command(name = "privmap", version, about = "Design privacy mappings against limited adversaries")]
struct Cli {
    /// Worker threads for restarts and sweep cells (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a model and optional prior, and report the convexity certificate.
    Validate(ValidateArgs),
    /// Optimize one privacy mapping.
    Solve(SolveArgs),
    /// Solve over a list of distortion budgets for several priors.
    Sweep(SweepArgs),
    /// Build the census model from Adult data files.
    Census(CensusArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum UnitArg {
    Nats,
    Bits,
}

impl From<UnitArg> for Units {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Nats => Units::Nats,
            UnitArg::Bits => Units::Bits,
        }
    }
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, conflicts_with = "dirichlet")]
    prior: Option<PathBuf>,
    #[arg(long)]
    dirichlet: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolverFlags {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-8)]
    inner_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    inner_max_iter: usize,
    #[arg(long, value_enum, default_value_t = UnitArg::Nats)]
    units: UnitArg,
    /// Prior draws for Monte-Carlo posterior costs.
    #[arg(long, default_value_t = 100)]
    mc_samples: usize,
}

impl SolverFlags {
    fn config(&self, delta: Option<f64>) -> SolveConfig {
        SolveConfig {
            epsilon: self.epsilon,
            max_iter: self.max_iter,
            restarts: self.restarts,
            inner_tol: self.inner_tol,
            inner_max_iter: self.inner_max_iter,
            seed: self.seed,
            delta,
        }
    }
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, conflicts_with = "dirichlet")]
    prior: Option<PathBuf>,
    #[arg(long)]
    dirichlet: Option<PathBuf>,
    /// Distortion budget; defaults to the model's.
    #[arg(long)]
    delta: Option<f64>,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    /// Fixed adversary prior file (repeatable).
    #[arg(long)]
    prior: Vec<PathBuf>,
    /// Perturbation levels for generated biased priors, e.g. 0.1,0.25,0.5.
    #[arg(long, value_delimiter = ',')]
    gamma_list: Vec<f64>,
    /// Dirichlet prior file (repeatable).
    #[arg(long)]
    dirichlet: Vec<PathBuf>,
    /// Scales for count-based Dirichlet priors; needs --counts.
    #[arg(long, value_delimiter = ',', requires = "counts")]
    nu_list: Vec<f64>,
    /// Count table CSV as written by `census`.
    #[arg(long)]
    counts: Option<PathBuf>,
    /// `start:step:end` or a comma-separated list.
    #[arg(long, default_value = "0:0.1:1.5")]
    delta_list: String,
    #[command(flatten)]
    solver: SolverFlags,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CensusArgs {
    /// Adult data file (repeatable; train and test splits are concatenated).
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let outcome = match cli.jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::InvalidConfig(format!("cannot start {n} workers: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Validate(a) => cmd_validate(&a),
        Command::Solve(a) => cmd_solve(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Census(a) => cmd_census(&a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn level_text(level: SupportLevel) -> &'static str {
    match level {
        SupportLevel::None => "none: some useful value the user can emit has zero adversary probability",
        SupportLevel::YMarginal => "y-marginal: posteriors defined, but the initial cost is infinite",
        SupportLevel::XMarginal => "x-marginal: leakage defined, but it can be driven to minus infinity",
        SupportLevel::Joint => "joint: adversary joint covers p(x,y)",
    }
}

fn print_certificate(cert: &ConvexityCertificate) {
    println!(
        "convexity certificate: {}",
        if cert.condition_holds { "holds (problem is convex)" } else { "not established" }
    );
    for (x, (lo, hi)) in cert.r_lower.iter().zip(&cert.r_upper).enumerate() {
        println!("  x={x}: r_lower={lo:.6} r_upper={hi:.6}");
    }
    if let Some(x) = cert.witness_x {
        println!("  first failing x: {x}");
    }
}

fn cmd_validate(a: &ValidateArgs) -> Result<i32> {
    let model = io::load_model(&a.model)?;
    println!(
        "model: |X|={} |Y|={} |Z|={} delta={}",
        model.nx(),
        model.ny(),
        model.nz(),
        model.delta()
    );
    println!("marginals p_X, p_Y strictly positive: yes");
    if let Some(path) = &a.dirichlet {
        let d = io::load_dirichlet(path)?;
        println!("dirichlet: alpha0={} nu={}", d.alpha0(), d.nu().map_or("-".into(), |v| v.to_string()));
        return match d.check_support(&model) {
            Ok(()) => {
                println!("dirichlet support covers p(x,y): yes");
                Ok(EXIT_OK)
            }
            Err(e) => {
                println!("dirichlet support covers p(x,y): no ({e})");
                Ok(EXIT_INVALID)
            }
        };
    }
    let prior = match &a.prior {
        Some(p) => io::load_prior(p, &model)?,
        None => AdversaryPrior::omniscient(&model),
    };
    let level = prior.level();
    println!("support level: {}", level_text(level));
    if level != SupportLevel::Joint {
        let c = prior.clauses();
        println!(
            "failing clause(s): {}",
            [
                (!c.y_marginal).then_some("y-marginal"),
                (!c.x_marginal).then_some("x-marginal"),
                (!c.joint).then_some("joint"),
            ]
            .into_iter()
            .flatten()
            .collect::<Vec<_>>()
            .join(", ")
        );
        return Ok(EXIT_INVALID);
    }
    print_certificate(&convexity_certificate(&model, &prior)?);
    Ok(EXIT_OK)
}

fn trace_json(r: &SolveResult) -> serde_json::Value {
    r.trace
        .iter()
        .map(|t| json!({"objective": t.objective, "distortion": t.distortion, "step": t.step, "inner_gap": t.inner_gap}))
        .collect()
}

fn cmd_solve(a: &SolveArgs) -> Result<i32> {
    let model = io::load_model(&a.model)?;
    let cfg = a.solver.config(a.delta);
    let units: Units = a.solver.units.into();
    let u = |v: f64| units.convert(v);
    let delta = a.delta.unwrap_or(model.delta());
    create_dir(&a.out_dir)?;
    let metrics = if let Some(path) = &a.dirichlet {
        let d = io::load_dirichlet(path)?;
        let obj = lb_dc_split(&model, &d)?;
        let r = multistart(&obj, &model, &cfg)?;
        let lb = dirichlet_lower_bound(&model, &d, &r.channel)?;
        let (mean, se) =
            mc_expected_posterior_cost(&model, &d, &r.channel, a.solver.mc_samples, derive_seed(cfg.seed, 1))?;
        io::write_channel_csv(&a.out_dir.join("channel.csv"), &model, &r.channel)?;
        println!("lower bound: {:.6} {}", u(lb), units.name());
        println!("monte-carlo posterior cost: {:.6} ± {:.6} {}", u(mean), u(se), units.name());
        json!({
            "units": units.name(),
            "problem": "dirichlet_lower_bound",
            "delta": delta,
            "objective_nats": r.objective,
            "lower_bound": u(lb),
            "mc_posterior_cost": u(mean),
            "mc_std_error": u(se),
            "mc_samples": a.solver.mc_samples,
            "distortion": expected_distortion(&model, &r.channel),
            "status": r.status.as_str(),
            "iterations": r.iterations,
            "restart": r.restart,
            "inner_cap_hits": r.inner_cap_hits,
            "trace": trace_json(&r),
        })
    } else {
        let prior = match &a.prior {
            Some(p) => io::load_prior(p, &model)?,
            None => AdversaryPrior::omniscient(&model),
        };
        let obj = dc_split(&model, &prior)?;
        let mut r = multistart(&obj, &model, &cfg)?;
        r.certificate = Some(convexity_certificate(&model, &prior)?);
        let leak = evaluate_leakage(&model, &prior, &r.channel)?;
        let c0 = cost_initial_limited(&model.p_xy().row_dist(), &prior.p_hat_xy().row_dist())?;
        let cz = cost_posterior_limited(&model, &prior, &r.channel)?;
        io::write_channel_csv(&a.out_dir.join("channel.csv"), &model, &r.channel)?;
        println!("leakage: {:.6} {}", u(leak), units.name());
        println!("posterior cost: {:.6} {}", u(cz), units.name());
        let cert = r.certificate.as_ref().expect("set above");
        json!({
            "units": units.name(),
            "problem": "leakage",
            "delta": delta,
            "objective_nats": r.objective,
            "leakage": u(leak),
            "initial_cost": u(c0),
            "posterior_cost": u(cz),
            "distortion": expected_distortion(&model, &r.channel),
            "status": r.status.as_str(),
            "iterations": r.iterations,
            "restart": r.restart,
            "inner_cap_hits": r.inner_cap_hits,
            "certificate": {
                "condition_holds": cert.condition_holds,
                "r_lower": cert.r_lower,
                "r_upper": cert.r_upper,
                "witness_x": cert.witness_x,
            },
            "trace": trace_json(&r),
        })
    };
    let text = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    write_file(&a.out_dir.join("metrics.json"), &(text + "\n"))?;
    println!("wrote {}", a.out_dir.display());
    Ok(EXIT_OK)
}

fn load_counts(path: &Path) -> Result<Vec<Vec<u64>>> {
    let file = fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let lm = io::read_matrix_csv(file, &path.display().to_string())?;
    let m = &lm.matrix;
    let mut out = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        let row = m
            .row(r)
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v.is_finite() {
                    Ok(v as u64)
                } else {
                    Err(Error::Parse(format!("{}: count {v} is not a nonnegative integer", path.display())))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

fn cmd_sweep(a: &SweepArgs) -> Result<i32> {
    let model = io::load_model(&a.model)?;
    let deltas = parse_delta_list(&a.delta_list)?;
    let cfg = a.solver.config(None);
    let mut priors = Vec::new();
    for p in &a.prior {
        let name = p.file_stem().map_or("prior".into(), |s| s.to_string_lossy().into_owned());
        priors.push(SweepPrior::Point { name, prior: io::load_prior(p, &model)? });
    }
    for (i, &gamma) in a.gamma_list.iter().enumerate() {
        let spec = PerturbSpec::new(gamma, derive_seed(cfg.seed, 1000 + i as u64))?;
        let joint = gen_biased_prior(model.p_xy(), spec);
        priors.push(SweepPrior::Point { name: format!("gamma={gamma}"), prior: AdversaryPrior::new(&model, joint)? });
    }
    for p in &a.dirichlet {
        let name = p.file_stem().map_or("dirichlet".into(), |s| s.to_string_lossy().into_owned());
        priors.push(SweepPrior::Dirichlet { name, prior: io::load_dirichlet(p)? });
    }
    if let Some(path) = &a.counts {
        let counts = load_counts(path)?;
        for &nu in &a.nu_list {
            priors.push(SweepPrior::Dirichlet {
                name: format!("nu={nu}"),
                prior: DirichletPrior::from_counts(&counts, nu)?,
            });
        }
    }
    let spec = SweepSpec { deltas, cfg, mc_samples: a.solver.mc_samples };
    let report = run_sweep(&model, &priors, &spec)?;
    create_dir(&a.out_dir)?;
    let path = a.out_dir.join("sweep.csv");
    let file = fs::File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    report.write_csv(file, a.solver.units.into())?;
    let failed = report.rows.iter().filter(|r| r.is_failed()).count();
    println!("wrote {} rows to {}", report.rows.len(), path.display());
    if failed > 0 {
        eprintln!("{failed} cell(s) failed; see the status column");
        return Ok(EXIT_SOLVER);
    }
    Ok(EXIT_OK)
}

fn cmd_census(a: &CensusArgs) -> Result<i32> {
    let cm = census::ingest(&a.input, &BinningSpec::default())?;
    let model = cm.model.with_delta(a.delta)?;
    println!(
        "records: {} read, {} dropped for missing values, {} retained",
        cm.raw_records,
        cm.dropped_missing,
        cm.retained()
    );
    println!("|X|={} |Y|={} |Z|={}", model.nx(), model.ny(), model.nz());
    create_dir(&a.out_dir)?;
    write_file(&a.out_dir.join("model.json"), &(io::model_to_json(&model) + "\n"))?;
    let counts = crate::matrix::Matrix::from_rows(
        &cm.counts.iter().map(|r| r.iter().map(|&c| c as f64).collect::<Vec<_>>()).collect::<Vec<_>>(),
    )
    .expect("rectangular counts");
    let path = a.out_dir.join("counts.csv");
    let file = fs::File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    io::write_matrix_csv(file, "x\\y", model.x_labels(), model.y_labels(), &counts)?;
    println!("wrote {}", a.out_dir.display());
    Ok(EXIT_OK)
}
