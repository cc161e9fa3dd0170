//! `contact-ddm`: drive the contact solvers from the command line.
//!
//! Subcommands: `solve` (domain-decomposition iteration), `oracle`
//! (monolithic reference solve), `audit` (contact conditions of a stored
//! field), `bench` (scheme comparison grids), `derivcheck` (directional
//! derivatives against central differences). Exit codes: 0 success /
//! convergence, 1 input error, 2 divergence or failed run.

mod artifact;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use contact_ddm::dof::DofMap;
use contact_ddm::io::load_problem;
use contact_ddm::material::OmegaFn;
use contact_ddm::mesh::{
    generate_split_square, generate_square, generate_stacked_blocks, MultiBodyProblem,
};
use contact_ddm::oracle::{contact_audit, fd_check, solve_monolithic_penalty};
use contact_ddm::penalty::{default_theta, CharFnPolicy, PenaltyConfig};
use contact_ddm::solver::{solve, GammaChoice, IterationConfig, Scheme, SolverError};
use contact_ddm::sparse::dot;
use contact_ddm::suites::run_suite;

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "contact-ddm", version, about = "Penalty contact solvers on P1 triangles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a domain-decomposition iteration; write history CSV + field.
    Solve(SolveArgs),
    /// Run the monolithic reference solver; write energy CSV + field.
    Oracle(OracleArgs),
    /// Audit contact conditions of a stored field artifact.
    Audit(AuditArgs),
    /// Run a named benchmark suite across schemes and relaxations.
    Bench(BenchArgs),
    /// Check directional derivatives against central differences.
    Derivcheck(DerivcheckArgs),
}

/// Where the problem comes from: a file or a named generator.
#[derive(Args)]
struct ProblemArgs {
    /// Problem description file.
    #[arg(long, conflicts_with = "generate")]
    problem: Option<PathBuf>,
    /// Built-in generator: blocks2, blocks3, square, split.
    #[arg(long)]
    generate: Option<String>,
    /// Elements per block side for generated problems.
    #[arg(long, default_value_t = 4)]
    n: usize,
    /// Top-edge pressure for generated problems.
    #[arg(long, default_value_t = 1.0)]
    load: f64,
    /// Initial interface gap for generated problems.
    #[arg(long, default_value_t = 0.0)]
    gap: f64,
    /// Material nonlinearity: zero, const:<c>, rational:<c>.
    #[arg(long)]
    omega: Option<String>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Penalty parameter (default: mesh- and material-scaled).
    #[arg(long)]
    theta: Option<f64>,
    /// Relaxation parameter: a number, or `auto` for the estimated optimum.
    #[arg(long, default_value = "auto")]
    gamma: String,
    /// Interface operators: neumann, robin, subset:<tag,...>, dirichlet.
    #[arg(long, default_value = "robin")]
    policy: String,
    /// Iteration scheme: stationary, nonstationary, newton.
    #[arg(long, default_value = "stationary")]
    scheme: String,
    /// Relative tolerance for both stopping tests.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iters: usize,
    /// Output directory for history.csv and solution.field.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Sequential subdomain solves (results are bit-identical either way).
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    theta: Option<f64>,
    /// Relative gradient tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Output directory for oracle-energy.csv and oracle.field.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    /// Field artifact written by `solve` or `oracle`.
    #[arg(long)]
    problem: PathBuf,
    /// Override the penalty parameter echoed in the artifact.
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Suite name: blocks2-linear, blocks3-linear, blocks2-nonlinear,
    /// split-body-ideal.
    #[arg(long)]
    suite: String,
    /// Output directory for bench-<suite>.csv.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    serial: bool,
}

#[derive(Args)]
struct DerivcheckArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    theta: Option<f64>,
    /// Number of random states per functional.
    #[arg(long, default_value_t = 5)]
    states: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Oracle(args) => cmd_oracle(&args),
        Command::Audit(args) => cmd_audit(&args),
        Command::Bench(args) => cmd_bench(&args),
        Command::Derivcheck(args) => cmd_derivcheck(&args),
    };
    ExitCode::from(code)
}

fn input_error(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    EXIT_INPUT
}

fn run_error(msg: impl std::fmt::Display) -> u8 {
    eprintln!("error: {msg}");
    EXIT_FAILED
}

fn parse_omega(spec: &str) -> Result<OmegaFn, String> {
    if spec == "zero" {
        return Ok(OmegaFn::Zero);
    }
    let parse_c = |rest: &str, name: &str| -> Result<f64, String> {
        rest.parse::<f64>()
            .map_err(|_| format!("bad {name} coefficient {rest:?}"))
    };
    if let Some(rest) = spec.strip_prefix("const:") {
        return Ok(OmegaFn::Const(parse_c(rest, "const")?));
    }
    if let Some(rest) = spec.strip_prefix("rational:") {
        return Ok(OmegaFn::Rational(parse_c(rest, "rational")?));
    }
    Err(format!(
        "unknown omega {spec:?}; expected zero, const:<c>, or rational:<c>"
    ))
}

fn parse_policy(spec: &str) -> Result<CharFnPolicy, String> {
    match spec {
        "neumann" => Ok(CharFnPolicy::NeumannNeumann),
        "robin" => Ok(CharFnPolicy::RobinRobin),
        "dirichlet" => Ok(CharFnPolicy::DirichletDirichletNonstationary),
        other => {
            if let Some(rest) = other.strip_prefix("subset:") {
                let tags: Vec<String> = rest
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(str::to_string)
                    .collect();
                if tags.is_empty() {
                    return Err("subset policy needs at least one tag".into());
                }
                return Ok(CharFnPolicy::SubsetRobin { tags });
            }
            Err(format!(
                "unknown policy {other:?}; expected neumann, robin, subset:<tags>, or dirichlet"
            ))
        }
    }
}

fn parse_scheme(spec: &str) -> Result<Scheme, String> {
    match spec {
        "stationary" => Ok(Scheme::Stationary),
        "nonstationary" => Ok(Scheme::Nonstationary),
        "newton" => Ok(Scheme::NewtonLike),
        other => Err(format!(
            "unknown scheme {other:?}; expected stationary, nonstationary, or newton"
        )),
    }
}

fn parse_gamma(spec: &str) -> Result<GammaChoice, String> {
    if spec == "auto" {
        return Ok(GammaChoice::Auto);
    }
    spec.parse::<f64>()
        .map(GammaChoice::Value)
        .map_err(|_| format!("bad gamma {spec:?}; expected a number or `auto`"))
}

/// Builds the problem and the flag echo that makes artifacts reproducible.
fn build_problem(args: &ProblemArgs) -> Result<(MultiBodyProblem, Vec<(String, String)>), String> {
    let mut header = Vec::new();
    let mut problem = match (&args.problem, &args.generate) {
        (Some(path), None) => {
            header.push(("problem".to_string(), path.display().to_string()));
            load_problem(path).map_err(|e| e.to_string())?
        }
        (None, Some(name)) => {
            let p = match name.as_str() {
                "blocks2" => generate_stacked_blocks(2, args.n, args.gap, args.load),
                "blocks3" => generate_stacked_blocks(3, args.n, args.gap, args.load),
                "square" => generate_square(args.n, args.load),
                "split" => generate_split_square(args.n, args.load),
                other => {
                    return Err(format!(
                        "unknown generator {other:?}; expected blocks2, blocks3, square, or split"
                    ))
                }
            }
            .map_err(|e| e.to_string())?;
            header.push(("generate".to_string(), name.clone()));
            header.push(("n".to_string(), args.n.to_string()));
            header.push(("load".to_string(), format!("{}", args.load)));
            header.push(("gap".to_string(), format!("{}", args.gap)));
            p
        }
        (None, None) => return Err("one of --problem or --generate is required".into()),
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
    };
    if let Some(spec) = &args.omega {
        let omega = parse_omega(spec)?;
        for body in &mut problem.bodies {
            body.material.omega = omega;
        }
        header.push(("omega".to_string(), spec.clone()));
    }
    Ok((problem, header))
}

fn write_out(path: &Path, contents: &str) -> Result<(), String> {
    std::fs::write(path, contents).map_err(|e| format!("writing {}: {e}", path.display()))
}

fn cmd_solve(args: &SolveArgs) -> u8 {
    let (problem, mut header) = match build_problem(&args.problem) {
        Ok(p) => p,
        Err(e) => return input_error(e),
    };
    let theta = args.theta.unwrap_or_else(|| default_theta(&problem));
    let policy = match parse_policy(&args.policy) {
        Ok(p) => p,
        Err(e) => return input_error(e),
    };
    let mut config = IterationConfig::new(PenaltyConfig { theta, policy });
    config.scheme = match parse_scheme(&args.scheme) {
        Ok(s) => s,
        Err(e) => return input_error(e),
    };
    config.gamma = match parse_gamma(&args.gamma) {
        Ok(g) => g,
        Err(e) => return input_error(e),
    };
    config.tol_rel = args.tol;
    config.max_iters = args.max_iters;
    config.serial = args.serial;
    header.push(("theta".to_string(), format!("{theta}")));
    header.push(("policy".to_string(), args.policy.clone()));
    header.push(("scheme".to_string(), args.scheme.clone()));
    header.push(("gamma".to_string(), args.gamma.clone()));
    header.push(("tol".to_string(), format!("{}", args.tol)));
    header.push(("max-iters".to_string(), args.max_iters.to_string()));
    header.push(("serial".to_string(), args.serial.to_string()));

    if let Err(e) = std::fs::create_dir_all(&args.out) {
        return input_error(format!("creating {}: {e}", args.out.display()));
    }
    let history_path = args.out.join("history.csv");
    match solve(&problem, &config) {
        Ok((state, history)) => {
            if let Err(e) = write_out(&history_path, &history.to_csv()) {
                return input_error(e);
            }
            let map = DofMap::new(&problem);
            let field_path = args.out.join("solution.field");
            if let Err(e) =
                artifact::write_field(&field_path, &header, &problem, &map, &state.u)
            {
                return input_error(format!("writing {}: {e}", field_path.display()));
            }
            let last = history.records.last();
            println!("converged: {}", history.converged);
            println!("iterations: {}", history.records.len());
            println!(
                "residual: {:e}",
                last.map_or(f64::NAN, |r| r.residual)
            );
            println!("history: {}", history_path.display());
            println!("field: {}", field_path.display());
            if history.converged {
                EXIT_OK
            } else {
                eprintln!("error: tolerance not reached in {} iterations", args.max_iters);
                EXIT_FAILED
            }
        }
        Err(SolverError::Divergence {
            k,
            consecutive,
            history,
        }) => {
            let _ = write_out(&history_path, &history.to_csv());
            run_error(format!(
                "diverged at iteration {k} ({consecutive} consecutive step growths); partial history in {}",
                history_path.display()
            ))
        }
        Err(e @ SolverError::InvalidConfig(_)) => input_error(e),
        Err(e) => run_error(e),
    }
}

fn cmd_oracle(args: &OracleArgs) -> u8 {
    let (problem, mut header) = match build_problem(&args.problem) {
        Ok(p) => p,
        Err(e) => return input_error(e),
    };
    let theta = args.theta.unwrap_or_else(|| default_theta(&problem));
    header.push(("theta".to_string(), format!("{theta}")));
    header.push(("tol".to_string(), format!("{}", args.tol)));
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        return input_error(format!("creating {}: {e}", args.out.display()));
    }
    match solve_monolithic_penalty(&problem, theta, args.tol) {
        Ok(sol) => {
            let mut csv = String::from("k,energy\n");
            for (k, e) in sol.energies.iter().enumerate() {
                csv.push_str(&format!("{k},{e:e}\n"));
            }
            let csv_path = args.out.join("oracle-energy.csv");
            if let Err(e) = write_out(&csv_path, &csv) {
                return input_error(e);
            }
            let map = DofMap::new(&problem);
            let field_path = args.out.join("oracle.field");
            if let Err(e) = artifact::write_field(&field_path, &header, &problem, &map, &sol.state.u)
            {
                return input_error(format!("writing {}: {e}", field_path.display()));
            }
            println!("iterations: {}", sol.iterations);
            println!("residual: {:e}", sol.residual);
            println!("energy: {:e}", sol.energies.last().unwrap());
            println!("energies: {}", csv_path.display());
            println!("field: {}", field_path.display());
            EXIT_OK
        }
        Err(e) => run_error(e),
    }
}

fn cmd_audit(args: &AuditArgs) -> u8 {
    let field = match artifact::read_field(&args.problem) {
        Ok(f) => f,
        Err(e) => return input_error(e),
    };
    let rebuild = || -> Result<MultiBodyProblem, String> {
        if let Some(path) = field.header_value("problem") {
            return load_problem(path).map_err(|e| e.to_string());
        }
        let name = field
            .header_value("generate")
            .ok_or("artifact header has neither `problem` nor `generate`")?;
        let get = |key: &str| -> Result<&str, String> {
            field
                .header_value(key)
                .ok_or(format!("artifact header is missing `{key}`"))
        };
        let n: usize = get("n")?.parse().map_err(|e| format!("header n: {e}"))?;
        let load: f64 = get("load")?.parse().map_err(|e| format!("header load: {e}"))?;
        let gap: f64 = get("gap")?.parse().map_err(|e| format!("header gap: {e}"))?;
        let mut p = match name {
            "blocks2" => generate_stacked_blocks(2, n, gap, load),
            "blocks3" => generate_stacked_blocks(3, n, gap, load),
            "square" => generate_square(n, load),
            "split" => generate_split_square(n, load),
            other => return Err(format!("artifact names unknown generator {other:?}")),
        }
        .map_err(|e| e.to_string())?;
        if let Some(spec) = field.header_value("omega") {
            let omega = parse_omega(spec)?;
            for body in &mut p.bodies {
                body.material.omega = omega;
            }
        }
        Ok(p)
    };
    let problem = match rebuild() {
        Ok(p) => p,
        Err(e) => return input_error(e),
    };
    let theta = match args.theta {
        Some(t) => t,
        None => match field.header_value("theta").map(str::parse::<f64>) {
            Some(Ok(t)) => t,
            Some(Err(e)) => return input_error(format!("artifact theta: {e}")),
            None => return input_error("artifact header has no `theta`; pass --theta"),
        },
    };
    let map = DofMap::new(&problem);
    let u = match artifact::rows_to_free(&field, &problem, &map) {
        Ok(u) => u,
        Err(e) => return input_error(e),
    };
    match contact_audit(
        &problem,
        &contact_ddm::dof::DisplacementState { u },
        theta,
    ) {
        Ok(report) => {
            println!("{report}");
            EXIT_OK
        }
        Err(e) => run_error(e),
    }
}

fn cmd_bench(args: &BenchArgs) -> u8 {
    match run_suite(&args.suite, args.serial) {
        Ok(report) => {
            if let Err(e) = std::fs::create_dir_all(&args.out) {
                return input_error(format!("creating {}: {e}", args.out.display()));
            }
            let csv_path = args.out.join(format!("bench-{}.csv", report.suite));
            if let Err(e) = write_out(&csv_path, &report.to_csv()) {
                return input_error(e);
            }
            print!("{}", report.to_table());
            println!("csv: {}", csv_path.display());
            EXIT_OK
        }
        Err(e @ contact_ddm::suites::SuiteError::UnknownSuite(_)) => input_error(e),
        Err(e) => run_error(e),
    }
}

fn cmd_derivcheck(args: &DerivcheckArgs) -> u8 {
    use rand::{Rng, SeedableRng};

    let (problem, _) = match build_problem(&args.problem) {
        Ok(p) => p,
        Err(e) => return input_error(e),
    };
    let theta = args.theta.unwrap_or_else(|| default_theta(&problem));
    let map = DofMap::new(&problem);
    let pairs = match problem.build_pairs() {
        Ok(p) => p,
        Err(e) => return run_error(e),
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x0df5_f00d);
    let mut worst = [("h_prime", 0.0f64), ("h_second", 0.0), ("j_prime", 0.0)];
    for _ in 0..args.states.max(1) {
        let u: Vec<f64> = (0..map.n_free()).map(|_| rng.gen_range(-0.3..0.3)).collect();
        let v: Vec<f64> = (0..map.n_free()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..map.n_free()).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let hp = contact_ddm::forms::eval_h_prime(&problem, &map, &u);
        let r0 = fd_check(
            |x| contact_ddm::forms::eval_h(&problem, &map, x),
            dot(&hp, &v),
            &u,
            &v,
        );
        worst[0].1 = worst[0].1.max(r0.best_rel);

        let hpp = contact_ddm::forms::eval_h_second(&problem, &map, &u);
        let r1 = fd_check(
            |x| dot(&contact_ddm::forms::eval_h_prime(&problem, &map, x), &w),
            dot(&hpp.apply(&v), &w),
            &u,
            &v,
        );
        worst[1].1 = worst[1].1.max(r1.best_rel);

        let jp = contact_ddm::penalty::eval_j_prime(&map, &pairs, &u, theta);
        let r2 = fd_check(
            |x| contact_ddm::penalty::eval_j(&map, &pairs, x, theta),
            dot(&jp, &v),
            &u,
            &v,
        );
        worst[2].1 = worst[2].1.max(r2.best_rel);
    }
    let mut ok = true;
    for (name, rel) in worst {
        let verdict = if rel <= 1e-6 { "ok" } else { "FAILED" };
        ok &= rel <= 1e-6;
        println!("{name}: rel {rel:e} {verdict}");
    }
    if ok {
        EXIT_OK
    } else {
        eprintln!("error: derivative check failed");
        EXIT_FAILED
    }
}
