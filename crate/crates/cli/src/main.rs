mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use io::{emit, parse_list, write_text, CliError, CliResult, List, Run};
use mcdstat::cones::{radial_membership, tangent_membership};
use mcdstat::dcalc::{dd_expr, dd_objective, dd_penalized, dd_reduced, index_sets, DdValue, Order};
use mcdstat::oracle::{fd_expr, fd_objective, fd_penalized, fd_reduced, OracleConfig, OracleEstimate};
use mcdstat::penalty::{certify, estimate_moduli, suggest_beta};
use mcdstat::rnn::{self, RnnSpec};
use mcdstat::scenarios;
use mcdstat::solver::{random_start, solve, SolverConfig};
use mcdstat::stationarity::{
    check_box, check_first_order, check_second_order, check_sufficient, compare_sets, SearchConfig, SearchMode,
    Target, Verdict,
};
use mcdstat::tolerances::MODULI_EPS;
use mcdstat::{Expr, Problem};

#[derive(Parser)]
#[command(name = "mcdstat", version, about = "Directional derivatives, exact penalties and d-stationarity checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate objectives and residuals of a problem at a point.
    Eval(EvalArgs),
    /// First- and second-order directional derivatives.
    Dderiv(DderivArgs),
    /// Tangent and radial cone membership.
    Cone {
        #[command(subcommand)]
        action: ConeCommand,
    },
    /// Lipschitz moduli, penalty thresholds and a certified penalty suggestion.
    Thresholds(ThresholdArgs),
    /// First- or second-order d-stationarity check.
    Check(CheckArgs),
    /// Minimize the penalized objective.
    Solve(SolveArgs),
    /// Recurrent network instances.
    Rnn {
        #[command(subcommand)]
        action: RnnCommand,
    },
    /// Run a named regression scenario.
    Repro(ReproArgs),
}

#[derive(Args)]
struct Common {
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Point file `{theta, u}`; defaults to `lift(0)`.
    #[arg(long, conflicts_with = "theta")]
    point: Option<PathBuf>,
    /// Evaluate at `lift(theta)`.
    #[arg(long, value_parser = parse_list)]
    theta: Option<List>,
    #[arg(long, value_parser = parse_list)]
    beta: Option<List>,
    /// Print the problem in canonical form and nothing else.
    #[arg(long)]
    canonical: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Of {
    /// `F(z) = g(u) + λ‖θ‖²`.
    Objective,
    /// `Θ(z)` with penalty `beta`.
    Penalized,
    /// `Ψ(θ) + λ‖θ‖²` along `θ + τ d_θ`.
    Reduced,
}

#[derive(Args)]
struct DderivArgs {
    /// Problem file (use with --point and --direction).
    #[arg(long, required_unless_present = "expr")]
    problem: Option<PathBuf>,
    /// Standalone expression file (use with --x and --d).
    #[arg(long, conflicts_with = "problem")]
    expr: Option<PathBuf>,
    #[arg(long)]
    point: Option<PathBuf>,
    #[arg(long)]
    direction: Option<PathBuf>,
    #[arg(long, value_parser = parse_list)]
    x: Option<List>,
    #[arg(long, value_parser = parse_list)]
    d: Option<List>,
    #[arg(long, value_enum, default_value = "objective")]
    of: Of,
    #[arg(long, value_parser = parse_list)]
    beta: Option<List>,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    order: u8,
    /// Also report a finite-difference estimate.
    #[arg(long)]
    oracle: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum ConeCommand {
    /// Test a direction against the tangent (and optionally radial) cone.
    Check {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        point: PathBuf,
        #[arg(long)]
        direction: PathBuf,
        #[arg(long)]
        radial: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct ThresholdArgs {
    #[arg(long)]
    problem: PathBuf,
    /// Penalty parameters; the problem's own `beta` is used when omitted.
    #[arg(long, value_parser = parse_list)]
    beta: Option<List>,
    #[arg(long, default_value_t = MODULI_EPS)]
    eps: f64,
    /// Sample pairs for the fallback estimator.
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    P,
    P0,
    P1,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::P => Target::P,
            TargetArg::P0 => Target::P0,
            TargetArg::P1 => Target::P1,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sample,
    Enumerate,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Expect {
    Stationary,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, value_enum, default_value = "sample")]
    mode: ModeArg,
    #[arg(long, default_value_t = 64)]
    starts: usize,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = mcdstat::tolerances::STATIONARITY_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SearchArgs {
    fn config(&self) -> SearchConfig {
        SearchConfig {
            mode: match self.mode {
                ModeArg::Sample => SearchMode::Sample,
                ModeArg::Enumerate => SearchMode::Enumerate,
            },
            starts: self.starts,
            max_iters: self.max_iters,
            tol: self.tol,
            seed: self.seed,
            ..SearchConfig::default()
        }
    }
}

#[derive(Args)]
struct CheckArgs {
    /// Problem file (use with --point).
    #[arg(long, required_unless_present = "expr")]
    problem: Option<PathBuf>,
    #[arg(long)]
    point: Option<PathBuf>,
    /// Box-constrained expression file (use with --x, --lower, --upper).
    #[arg(long, conflicts_with = "problem")]
    expr: Option<PathBuf>,
    #[arg(long, value_parser = parse_list)]
    x: Option<List>,
    #[arg(long, value_parser = parse_list)]
    lower: Option<List>,
    #[arg(long, value_parser = parse_list)]
    upper: Option<List>,
    #[arg(long, value_enum, default_value = "p1")]
    target: TargetArg,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    order: u8,
    #[arg(long, value_parser = parse_list)]
    beta: Option<List>,
    /// Treat `beta` as certified for the second-order P1 search.
    #[arg(long)]
    certified: bool,
    /// Check the strong-local-minimum sufficient condition instead.
    #[arg(long, conflicts_with_all = ["compare", "expr"])]
    sufficient: bool,
    /// Run every check and test the relations between the stationarity sets.
    #[arg(long, conflicts_with = "expr")]
    compare: bool,
    #[arg(long, default_value_t = MODULI_EPS)]
    eps: f64,
    /// Exit with status 3 unless the verdict matches.
    #[arg(long, value_enum)]
    expect: Option<Expect>,
    #[command(flatten)]
    search: SearchArgs,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, ValueEnum)]
enum Init {
    Zero,
    Random,
    File,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, value_parser = parse_list)]
    beta: Option<List>,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    stop_tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "zero")]
    init: Init,
    /// Start point for `--init file` (its `theta` block is used).
    #[arg(long, required_if_eq("init", "file"))]
    init_file: Option<PathBuf>,
    /// Write the iterate trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct RnnData {
    /// Directory with one CSV file per sequence.
    #[arg(long, required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Use this many seeded random sequences instead of --data.
    #[arg(long, conflicts_with = "data")]
    synthetic: Option<usize>,
    #[arg(long)]
    n0: usize,
    #[arg(long)]
    n1: usize,
    #[arg(long)]
    n2: usize,
    #[arg(long)]
    t: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long)]
    lambda: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum RnnCommand {
    /// Write the layered problem as JSON.
    Build {
        #[command(flatten)]
        data: RnnData,
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form moduli and thresholds.
    Thresholds {
        #[command(flatten)]
        data: RnnData,
        #[command(flatten)]
        common: Common,
    },
    /// Train from zero, then certify stationarity.
    Train {
        #[command(flatten)]
        data: RnnData,
        /// `(β₁, β₂)`; defaults to 1.05 times the thresholds.
        #[arg(long, value_parser = parse_list)]
        beta: Option<List>,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        stop_tol: f64,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct ReproArgs {
    /// Scenario name (see --list).
    #[arg(required_unless_present = "list")]
    name: Option<String>,
    #[arg(long)]
    list: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    common: Common,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Failed(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<u8> {
    match cmd {
        Command::Eval(a) => eval(a),
        Command::Dderiv(a) => dderiv(a),
        Command::Cone {
            action:
                ConeCommand::Check {
                    problem,
                    point,
                    direction,
                    radial,
                    common,
                },
        } => cone_check(&problem, &point, &direction, radial, common.out.as_deref()),
        Command::Thresholds(a) => thresholds(a),
        Command::Check(a) => check(a),
        Command::Solve(a) => solve_cmd(a),
        Command::Rnn { action } => rnn_cmd(action),
        Command::Repro(a) => repro(a),
    }
}

fn beta_for(problem: &Problem, beta: Option<&List>) -> CliResult<Vec<f64>> {
    match (beta, problem.beta()) {
        (Some(b), _) => {
            problem.check_beta(&b.0)?;
            Ok(b.0.clone())
        }
        (None, Some(b)) => Ok(b.to_vec()),
        (None, None) => Err(CliError::Invalid("penalty parameters needed: pass --beta or set \"beta\" in the problem".into())),
    }
}

fn need<'a, T>(v: &'a Option<T>, flag: &str) -> CliResult<&'a T> {
    v.as_ref().ok_or_else(|| CliError::Invalid(format!("{flag} is required here")))
}

#[derive(Serialize)]
struct EvalReport {
    schema_version: u32,
    objective: f64,
    /// `g(u)`; the theory assumes it is nonnegative.
    loss: f64,
    loss_nonnegative: bool,
    penalized: Option<f64>,
    reduced: f64,
    gamma_bar: f64,
    max_residual: f64,
    feasible: bool,
    residuals: Vec<Vec<f64>>,
    index_sets: mcdstat::dcalc::IndexSets,
}

fn eval(a: EvalArgs) -> CliResult<u8> {
    let mut run = Run::new();
    let problem = run.problem(&a.problem)?;
    if a.canonical {
        write_text(&problem.to_canonical_string(), a.common.out.as_deref())?;
        return Ok(0);
    }
    let z = match (&a.point, &a.theta) {
        (Some(p), _) => run.point(p)?,
        (None, Some(t)) => problem.lift(&t.0)?,
        (None, None) => problem.reference_point()?,
    };
    let beta = match (&a.beta, problem.beta()) {
        (Some(b), _) => Some(b.0.clone()),
        (None, b) => b.map(<[f64]>::to_vec),
    };
    let loss = problem.outer_value(&z);
    if loss < 0.0 {
        eprintln!("warning: outer loss is negative ({loss}) at this point");
    }
    let report = EvalReport {
        schema_version: mcdstat::SCHEMA_VERSION,
        objective: problem.objective(&z)?,
        loss,
        loss_nonnegative: loss >= 0.0,
        penalized: beta.as_ref().map(|b| problem.penalized(&z, b)).transpose()?,
        reduced: problem.reduced(&z.theta)?,
        gamma_bar: problem.gamma_bar()?,
        max_residual: problem.max_residual(&z)?,
        feasible: problem.is_feasible(&z, mcdstat::tolerances::FEASIBILITY_TOL)?,
        residuals: problem.residuals(&z)?,
        index_sets: index_sets(&problem, &z, None)?,
    };
    emit(run, &report, a.common.out.as_deref())?;
    Ok(0)
}

#[derive(Serialize)]
struct DderivReport {
    schema_version: u32,
    of: String,
    derivative: DdValue<f64>,
    oracle: Option<OracleEstimate<f64>>,
}

fn dderiv(a: DderivArgs) -> CliResult<u8> {
    let mut run = Run::new();
    let order = Order::from_int(a.order)?;
    let ocfg = OracleConfig::default();
    let (of, derivative, oracle) = if let Some(path) = &a.expr {
        let e = Expr::from_json(&run.json(path)?)?;
        let x = &need(&a.x, "--x")?.0;
        let d = &need(&a.d, "--d")?.0;
        let v = dd_expr(&e, x, d, order)?;
        let o = a.oracle.then(|| fd_expr(&e, x, d, order, Some(v.first), &ocfg));
        ("expression".to_string(), v, o)
    } else {
        let problem = run.problem(need(&a.problem, "--problem")?)?;
        match a.of {
            Of::Reduced => {
                let theta = match &a.x {
                    Some(x) => x.0.clone(),
                    None => run.point(need(&a.point, "--point or --x")?)?.theta,
                };
                let d = match &a.d {
                    Some(d) => d.0.clone(),
                    None => run.point(need(&a.direction, "--direction or --d")?)?.theta,
                };
                let v = dd_reduced(&problem, &theta, &d, order)?;
                let o = a
                    .oracle
                    .then(|| fd_reduced(&problem, &theta, &d, order, Some(v.first), &ocfg))
                    .transpose()?;
                ("reduced".to_string(), v, o)
            }
            Of::Objective | Of::Penalized => {
                let z = run.point(need(&a.point, "--point")?)?;
                let d = run.point(need(&a.direction, "--direction")?)?;
                if let Of::Penalized = a.of {
                    let beta = beta_for(&problem, a.beta.as_ref())?;
                    let v = dd_penalized(&problem, &z, &d, &beta, order)?;
                    let o = a
                        .oracle
                        .then(|| fd_penalized(&problem, &z, &d, &beta, order, Some(v.first), &ocfg))
                        .transpose()?;
                    ("penalized".to_string(), v, o)
                } else {
                    let v = dd_objective(&problem, &z, &d, order)?;
                    let o = a
                        .oracle
                        .then(|| fd_objective(&problem, &z, &d, order, Some(v.first), &ocfg))
                        .transpose()?;
                    ("objective".to_string(), v, o)
                }
            }
        }
    };
    let report = DderivReport {
        schema_version: mcdstat::SCHEMA_VERSION,
        of,
        derivative,
        oracle,
    };
    emit(run, &report, a.common.out.as_deref())?;
    Ok(0)
}

#[derive(Serialize)]
struct ConeReport {
    schema_version: u32,
    tangent: mcdstat::cones::ConeMembership<f64>,
    radial: Option<mcdstat::cones::RadialMembership<f64>>,
}

fn cone_check(problem: &Path, point: &Path, direction: &Path, radial: bool, out: Option<&Path>) -> CliResult<u8> {
    let mut run = Run::new();
    let problem = run.problem(problem)?;
    let z = run.point(point)?;
    let d = run.point(direction)?;
    let report = ConeReport {
        schema_version: mcdstat::SCHEMA_VERSION,
        tangent: tangent_membership(&problem, &z, &d)?,
        radial: radial.then(|| radial_membership(&problem, &z, &d)).transpose()?,
    };
    emit(run, &report, out)?;
    Ok(0)
}

#[derive(Serialize)]
struct ThresholdReport {
    schema_version: u32,
    k_g: f64,
    k: Vec<f64>,
    source: mcdstat::penalty::ModuliSource,
    heuristic: bool,
    thresholds: Vec<f64>,
    beta: Vec<f64>,
    certified: bool,
    gamma_bar: f64,
    suggested_beta: Vec<f64>,
    suggested_certified: bool,
}

fn thresholds(a: ThresholdArgs) -> CliResult<u8> {
    let mut run = Run::new();
    run.seed = Some(a.seed);
    let problem = run.problem(&a.problem)?;
    let beta = beta_for(&problem, a.beta.as_ref())?;
    let gamma = problem.gamma_bar()?;
    let moduli = estimate_moduli(&problem, &beta, gamma, a.eps, a.pairs, a.seed)?;
    let cfg = certify(&problem, &beta, moduli)?;
    let suggestion = suggest_beta(&problem, &beta, a.eps, a.pairs, a.seed)?;
    let report = ThresholdReport {
        schema_version: mcdstat::SCHEMA_VERSION,
        k_g: cfg.moduli.k_g,
        k: cfg.moduli.k.clone(),
        source: cfg.moduli.source,
        heuristic: cfg.moduli.heuristic(),
        thresholds: cfg.thresholds.clone(),
        beta,
        certified: cfg.certified,
        gamma_bar: cfg.gamma_bar,
        suggested_beta: suggestion.beta,
        suggested_certified: suggestion.certified,
    };
    emit(run, &report, a.common.out.as_deref())?;
    Ok(0)
}

fn expect_code(expect: Option<Expect>, stationary: Option<bool>) -> u8 {
    match (expect, stationary) {
        (Some(Expect::Stationary), Some(false)) => 3,
        _ => 0,
    }
}

fn verdict_flag(v: Verdict) -> Option<bool> {
    match v {
        Verdict::Stationary => Some(true),
        Verdict::NotStationary => Some(false),
        Verdict::Inconclusive => None,
    }
}

fn check(a: CheckArgs) -> CliResult<u8> {
    let mut run = Run::new();
    run.seed = Some(a.search.seed);
    let cfg = a.search.config();
    let out = a.common.out.as_deref();
    let order = Order::from_int(a.order)?;
    if let Some(path) = &a.expr {
        let e = Expr::from_json(&run.json(path)?)?;
        let x = &need(&a.x, "--x")?.0;
        let inf = vec![f64::INFINITY; x.len()];
        let lower = a.lower.as_ref().map_or(inf.iter().map(|v| -v).collect(), |l| l.0.clone());
        let upper = a.upper.as_ref().map_or(inf, |u| u.0.clone());
        let r = check_box(&e, x, &lower, &upper, order, &cfg)?;
        let code = expect_code(a.expect, verdict_flag(r.verdict));
        emit(run, &r, out)?;
        return Ok(code);
    }
    let problem = run.problem(need(&a.problem, "--problem")?)?;
    let z = match &a.point {
        Some(p) => run.point(p)?,
        None => problem.reference_point()?,
    };
    if a.sufficient || a.compare {
        let beta = beta_for(&problem, a.beta.as_ref())?;
        let gamma = problem.gamma_bar()?;
        let moduli = estimate_moduli(&problem, &beta, gamma, a.eps, 10_000, a.search.seed)?;
        let pc = certify(&problem, &beta, moduli)?;
        if a.sufficient {
            let r = check_sufficient(&problem, &z, &pc, &cfg)?;
            let flag = match r.verdict {
                mcdstat::stationarity::Sufficiency::Holds => Some(true),
                mcdstat::stationarity::Sufficiency::Fails => Some(false),
                mcdstat::stationarity::Sufficiency::Inconclusive => None,
            };
            emit(run, &r, out)?;
            return Ok(expect_code(a.expect, flag));
        }
        let r = compare_sets(&problem, &z, &pc, &cfg)?;
        let code = expect_code(a.expect, Some(r.implications_hold));
        emit(run, &r, out)?;
        return Ok(code);
    }
    let target: Target = a.target.into();
    let beta = match target {
        Target::P1 => Some(beta_for(&problem, a.beta.as_ref())?),
        _ => None,
    };
    let first = check_first_order(&problem, &z, target, beta.as_deref(), &cfg)?;
    let report = if order == Order::Second && first.verdict == Verdict::Stationary {
        check_second_order(&problem, &z, target, beta.as_deref(), a.certified, &first, &cfg)?
    } else {
        first
    };
    let code = expect_code(a.expect, verdict_flag(report.verdict));
    emit(run, &report, out)?;
    Ok(code)
}

fn write_trace(path: &Path, trace: &[mcdstat::solver::TraceRow<f64>]) -> CliResult<()> {
    let fail = |e: csv::Error| CliError::Failed(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    w.write_record(["iter", "objective", "theta", "max_residual", "step"]).map_err(fail)?;
    for r in trace {
        let theta = r.theta.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        w.write_record([
            r.iter.to_string(),
            format!("{:e}", r.objective),
            theta,
            format!("{:e}", r.max_residual),
            format!("{:e}", r.step),
        ])
        .map_err(fail)?;
    }
    w.flush().map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn solve_cmd(a: SolveArgs) -> CliResult<u8> {
    let mut run = Run::new();
    run.seed = Some(a.seed);
    let problem = run.problem(&a.problem)?;
    let beta = beta_for(&problem, a.beta.as_ref())?;
    let theta0 = match a.init {
        Init::Zero => vec![0.0; problem.n_params()],
        Init::Random => random_start(&problem, a.seed, 1000)?,
        Init::File => run.point(need(&a.init_file, "--init-file")?)?.theta,
    };
    let cfg = SolverConfig {
        max_iters: a.max_iters,
        stop_tol: a.stop_tol,
        seed: a.seed,
        ..SolverConfig::default()
    };
    let result = solve(&problem, &beta, &theta0, &cfg)?;
    if let Some(t) = &a.trace {
        write_trace(t, &result.trace)?;
    }
    emit(run, &result, a.common.out.as_deref())?;
    Ok(0)
}

fn rnn_spec(run: &mut Run, d: &RnnData) -> CliResult<RnnSpec<f64>> {
    run.seed = Some(d.seed);
    let spec = match (&d.data, d.synthetic) {
        (Some(dir), _) => {
            run.note_dir(dir)?;
            let seqs = rnn::load_csv_dir(dir, d.n0, d.n2)?;
            RnnSpec::new(d.n0, d.n1, d.n2, d.t, d.alpha, d.lambda, seqs)?
        }
        (None, Some(n)) => {
            let mut s = rnn::desk_instance(n, d.t, d.n0, d.n1, d.n2, d.lambda, d.seed)?;
            s.alpha = d.alpha;
            s.validate()?;
            s
        }
        (None, None) => return Err(CliError::Invalid("pass --data or --synthetic".into())),
    };
    Ok(spec)
}

fn rnn_cmd(action: RnnCommand) -> CliResult<u8> {
    let mut run = Run::new();
    match action {
        RnnCommand::Build { data, common } => {
            let spec = rnn_spec(&mut run, &data)?;
            let problem = rnn::build_problem(&spec)?;
            write_text(&problem.to_canonical_string(), common.out.as_deref())?;
        }
        RnnCommand::Thresholds { data, common } => {
            let spec = rnn_spec(&mut run, &data)?;
            let report = rnn::rnn_thresholds(&spec);
            emit(run, &report, common.out.as_deref())?;
        }
        RnnCommand::Train {
            data,
            beta,
            max_iters,
            stop_tol,
            trace,
            common,
        } => {
            let spec = rnn_spec(&mut run, &data)?;
            let beta = match beta {
                Some(List(b)) if b.len() == 2 => Some((b[0], b[1])),
                Some(_) => return Err(CliError::Invalid("--beta takes two values (w/s layers, v/r layers)".into())),
                None => None,
            };
            let solver = SolverConfig {
                max_iters,
                stop_tol,
                seed: data.seed,
                ..SolverConfig::default()
            };
            let search = SearchConfig {
                seed: data.seed,
                ..SearchConfig::default()
            };
            let report = rnn::train_and_certify(&spec, beta, None, &solver, &search)?;
            if let Some(t) = &trace {
                write_trace(t, &report.solve.trace)?;
            }
            emit(run, &report, common.out.as_deref())?;
        }
    }
    Ok(0)
}

fn repro(a: ReproArgs) -> CliResult<u8> {
    if a.list {
        let text = scenarios::SCENARIOS
            .iter()
            .map(|(n, d)| format!("{n:<14} {d}"))
            .collect::<Vec<_>>()
            .join("\n");
        write_text(&text, a.common.out.as_deref())?;
        return Ok(0);
    }
    let mut run = Run::new();
    run.seed = Some(a.seed);
    let name = need(&a.name, "scenario name")?;
    let report = scenarios::run(name, a.seed)?;
    for c in &report.checks {
        eprintln!(
            "[{}] {}: expected {}, observed {}",
            if c.pass { "pass" } else { "FAIL" },
            c.label,
            c.expected,
            c.observed
        );
    }
    let pass = report.pass;
    emit(run, &report, a.common.out.as_deref())?;
    if pass {
        Ok(0)
    } else {
        Err(CliError::Failed(format!("scenario {name} failed")))
    }
}
