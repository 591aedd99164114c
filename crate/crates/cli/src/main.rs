mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qode_core::learner::par_map;
use qode_core::ode::resolve_p;
use qode_core::{
    build_sampling_distribution, certify_decay, integrate, noise_report, run_annealed_boltzmann, run_learning,
    run_suite, solve_fixed_point, validate_schedule, AnnealSchedule, Error, IntegrateOptions, MdpModel, OdeSystem,
    OperatorKind, PChoice, RandomMdp, RunOptions, ScheduleVerdict, Scheme, StepSizeSchedule, Suite,
};

const USAGE: u8 = 1;
const NOT_CONVERGED: u8 = 2;
const VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "qode", version, about = "Q-learning operators, ODE certificates and property checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random MDP with a strictly positive sampling distribution.
    GenMdp(GenMdpArgs),
    /// Solve the Bellman fixed point of an operator.
    Solve(SolveArgs),
    /// Integrate the Q-learning ODE and certify its Lyapunov decay.
    Ode(OdeArgs),
    /// Run stochastic Q-learning.
    Learn(LearnArgs),
    /// Run the property-verification battery.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenMdpArgs {
    #[arg(long)]
    states: usize,
    #[arg(long)]
    actions: usize,
    #[arg(long, default_value_t = 0.9)]
    gamma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    sparsity: f64,
    #[arg(long, default_value_t = 0.0)]
    reward_lo: f64,
    #[arg(long, default_value_t = 1.0)]
    reward_hi: f64,
    #[arg(long, default_value = "mdp.json")]
    out: PathBuf,
}

#[derive(Args)]
struct OperatorArgs {
    /// max, lse, mellowmax or boltzmann
    #[arg(long, default_value = "max")]
    operator: String,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
}

impl OperatorArgs {
    fn kind(&self) -> Result<OperatorKind, Error> {
        OperatorKind::from_name(&self.operator, self.temperature)
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    mdp: PathBuf,
    #[command(flatten)]
    op: OperatorArgs,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Write the result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OdeArgs {
    #[arg(long)]
    mdp: PathBuf,
    #[command(flatten)]
    op: OperatorArgs,
    /// `auto` or an even integer
    #[arg(long, default_value = "auto")]
    p: String,
    #[arg(long, default_value_t = 20.0)]
    t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    /// rk4 or euler
    #[arg(long, default_value = "rk4")]
    scheme: String,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value = "trajectory.csv")]
    trajectory: PathBuf,
    #[arg(long, default_value = "certificate.json")]
    certificate: PathBuf,
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    mdp: PathBuf,
    #[command(flatten)]
    op: OperatorArgs,
    #[arg(long, default_value_t = 10.0)]
    steps_a: f64,
    #[arg(long, default_value_t = 100.0)]
    steps_b: f64,
    #[arg(long, default_value_t = 1.0)]
    steps_q: f64,
    #[arg(long)]
    steps_cap: Option<f64>,
    /// Boltzmann with a growing inverse temperature, measured against the max fixed point.
    #[arg(long)]
    anneal: bool,
    #[arg(long, default_value_t = 1.0)]
    anneal_lambda0: f64,
    /// Power growth `λ_k = λ_0 (1 + k)^r`.
    #[arg(long, conflicts_with = "anneal_rho")]
    anneal_r: Option<f64>,
    /// Geometric growth `λ_k = λ_0 ρ^k`.
    #[arg(long)]
    anneal_rho: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    iterations: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    /// Record every `stride`-th iterate; defaults to iterations / 1000.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    stride: Option<u64>,
    /// Run CSV; with several seeds each file gets a `_seed<N>` suffix.
    #[arg(long, default_value = "run.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// norms, operators, contraction, ode, learning or all
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = qode_core::verify::DEFAULT_TRIALS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = qode_core::verify::DEFAULT_SEED)]
    seed: u64,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numeric(_) | Error::Divergence { .. } => NOT_CONVERGED,
            Error::PropertyViolation(_) => VIOLATION,
            _ => USAGE,
        };
        Self::new(code, e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(USAGE);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match cli.command {
        Command::GenMdp(a) => gen_mdp(a),
        Command::Solve(a) => solve(a),
        Command::Ode(a) => ode(a),
        Command::Learn(a) => learn(a),
        Command::Verify(a) => verify(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, format!("{text}\n")).map_err(|e| Failure::from(Error::Io(e))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn gen_mdp(a: GenMdpArgs) -> Outcome {
    let mdp = RandomMdp::new(a.states, a.actions)
        .gamma(a.gamma)
        .sparsity(a.sparsity)
        .reward_range(a.reward_lo, a.reward_hi)
        .generate(a.seed)?;
    let dist = build_sampling_distribution(&mdp)?;
    mdp.save(&a.out)?;
    println!("{}", a.out.display());
    println!(
        "|S|={} |A|={} gamma={} min d(s,a)={:.6e}",
        mdp.n_states(),
        mdp.n_actions(),
        mdp.gamma(),
        dist.min_d()
    );
    Ok(())
}

fn solve(a: SolveArgs) -> Outcome {
    let mdp = MdpModel::load(&a.mdp)?;
    let kind = a.op.kind()?;
    let result = solve_fixed_point(&mdp, kind, a.tol, a.max_iter)?;
    let json = serde_json::to_string_pretty(&result).map_err(Error::from)?;
    write_or_print(a.out.as_deref(), &json)?;
    if !result.converged {
        return Err(Failure::new(
            NOT_CONVERGED,
            format!(
                "{} did not converge after {} iterations (residual {:e})",
                kind.name(),
                result.iterations,
                result.residual
            ),
        ));
    }
    Ok(())
}

fn ode(a: OdeArgs) -> Outcome {
    let mdp = MdpModel::load(&a.mdp)?;
    let kind = a.op.kind()?;
    let p: PChoice = a.p.parse()?;
    let scheme: Scheme = a.scheme.parse()?;
    let system = OdeSystem::q_learning(&mdp, kind)?;
    let chosen = resolve_p(&system, p)?;
    let q_star = system.fixed_point(1e-12)?;
    let opts = IntegrateOptions::new(a.t_end).step(a.step).scheme(scheme).stride(a.stride);
    let q0 = vec![0.0; system.dim()];
    let traj = integrate(&system, &q0, opts)?;
    traj.save_csv(&a.trajectory)?;
    let cert = certify_decay(&traj, &q_star, &system, PChoice::Even(chosen))?;
    fs::write(&a.certificate, format!("{}\n", cert.to_json()?)).map_err(Error::from)?;
    println!(
        "p={} rate={:.6e} max_violation={:.3e} {}",
        cert.p,
        cert.rate,
        cert.max_violation,
        if cert.passed { "PASS" } else { "FAIL" }
    );
    if !cert.passed {
        return Err(Failure::new(
            VIOLATION,
            format!("decay envelope exceeded by {:.3e} (tolerance {:e})", cert.max_violation, cert.tolerance),
        ));
    }
    Ok(())
}

fn seed_path(out: &Path, seed: u64, many: bool) -> PathBuf {
    if !many {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    let name = match out.extension() {
        Some(ext) => format!("{stem}_seed{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}_seed{seed}"),
    };
    out.with_file_name(name)
}

fn learn(a: LearnArgs) -> Outcome {
    let mut steps = StepSizeSchedule::new(a.steps_a, a.steps_b, a.steps_q);
    if let Some(c) = a.steps_cap {
        steps = steps.cap(c);
    }
    if let ScheduleVerdict::Reject(reason) = validate_schedule(&steps) {
        return Err(Failure::new(USAGE, format!("step-size schedule rejected: {reason}")));
    }
    let mdp = MdpModel::load(&a.mdp)?;
    let kind = a.op.kind()?;

    let anneal = if a.anneal {
        Some(match a.anneal_rho {
            Some(rho) => AnnealSchedule::geometric(a.anneal_lambda0, rho)?,
            None => AnnealSchedule::power(a.anneal_lambda0, a.anneal_r.unwrap_or(0.6))?,
        })
    } else {
        if matches!(kind, OperatorKind::Boltzmann(_)) {
            eprintln!("warning: fixed-temperature Boltzmann: convergence not guaranteed by theory");
        }
        None
    };

    let ref_kind = if anneal.is_some() { OperatorKind::Max } else { kind };
    let reference = solve_fixed_point(&mdp, ref_kind, 1e-12, 1_000_000)?;
    if !reference.converged {
        return Err(Failure::new(NOT_CONVERGED, format!("reference fixed point of {} did not converge", ref_kind.name())));
    }
    let q_ref = reference.q_star;

    let seeds: Vec<u64> = (a.seed..a.seed + a.seeds).collect();
    let runs = par_map(&seeds, |&seed| {
        let mut opts = RunOptions::new(a.iterations, seed);
        if let Some(s) = a.stride {
            opts = opts.stride(s);
        }
        match &anneal {
            Some(sched) => run_annealed_boltzmann(&mdp, &steps, sched, opts, &q_ref),
            None => run_learning(&mdp, kind, &steps, opts, &q_ref),
        }
    })?;

    let many = seeds.len() > 1;
    let mut violations = 0;
    for run in &runs {
        let path = seed_path(&a.out, run.seed, many);
        let file = fs::File::create(&path).map_err(Error::from)?;
        run.write_csv(std::io::BufWriter::new(file))?;
        println!("seed {} final_error {:.6e} -> {}", run.seed, run.final_error, path.display());
        for check in noise_report(run).checks {
            println!(
                "  {} {} (worst slack {:.3e})",
                check.name,
                if check.passed { "pass" } else { "FAIL" },
                check.worst_slack
            );
            if !check.passed {
                violations += 1;
            }
        }
    }
    if violations > 0 {
        return Err(Failure::new(VIOLATION, format!("{violations} noise check(s) failed")));
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Outcome {
    let suite: Suite = a.suite.parse()?;
    let report = run_suite(suite, a.trials as usize, a.seed)?;
    write_or_print(a.out.as_deref(), &report.to_json()?)?;
    let failed: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
    if !failed.is_empty() {
        return Err(Failure::new(VIOLATION, format!("{} check(s) failed: {}", failed.len(), failed.join(", "))));
    }
    Ok(())
}
