mod plot;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use masep::integrability::{
    run_braid_suite, run_inverse_suite, run_well_definedness_suite, run_ybe_suite, SuiteConfig,
};
use masep::oracle::{build_generator, compare, evolve, WindowedStateSpace};
use masep::quadrature::QuadratureError;
use masep::transition::{
    calibrated_window, distribution, initial_condition_report, probability, DistributionResult,
    ProbabilityRecord, TransitionError,
};
use masep::{max_radius, ContourSpec, ConvergenceSettings, SpeciesWord, State, SystemParams,
    TransitionQuery};

const EXIT_USAGE: u8 = 1;
const EXIT_NO_CONVERGENCE: u8 = 2;
const EXIT_VERIFY_FAILED: u8 = 3;
const EXIT_ORACLE_LEAKY: u8 = 4;

/// Exact transition probabilities for the multi-species exclusion process.
#[derive(Parser)]
#[command(name = "masep", version, disable_help_subcommand = true)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One transition probability between two labelled configurations.
    Prob(ProbArgs),
    /// Run the self-verification suites.
    Verify(VerifyArgs),
    /// Compare a full window against the generator-exponential solver.
    OracleCompare(OracleCompareArgs),
    /// Tabulate window distributions for a list of times.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ProbArgs {
    /// Right-hop rate, strictly between 0 and 1.
    #[arg(long)]
    p: f64,
    #[arg(long)]
    t: f64,
    /// Initial positions, comma separated, strictly increasing.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    y: Vec<i64>,
    /// Initial species word, e.g. 112.
    #[arg(long)]
    nu: String,
    /// Terminal positions.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x: Vec<i64>,
    /// Terminal species word.
    #[arg(long)]
    pi: String,
    /// Contour radius, or "auto" for 0.9 of the admissible bound.
    #[arg(long, default_value = "auto")]
    radius: String,
    /// Nodes per circle to start from (doubled until converged).
    #[arg(long, default_value_t = 32)]
    nodes: usize,
    /// Convergence tolerance between successive node doublings.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Print the result as a single JSON object.
    #[arg(long)]
    json: bool,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SuiteName {
    Inverse,
    Ybe,
    Braid,
    Initial,
    All,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    suite: SuiteName,
    /// Species labels the sampled sectors draw from (relation suites).
    #[arg(long, default_value_t = 3)]
    alphabet: u32,
    /// Random spectral points per relation instance (relation suites).
    #[arg(long, default_value_t = 50)]
    points: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    p: f64,
}

#[derive(Args)]
struct OracleCompareArgs {
    #[arg(long, default_value_t = 0.7)]
    p: f64,
    #[arg(long, default_value_t = 0.5)]
    t: f64,
    /// Initial positions (default 0,1).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    y: Option<Vec<i64>>,
    #[arg(long, default_value = "12")]
    nu: String,
    /// Window halfwidth around the initial span (default: calibrated for t).
    #[arg(long)]
    window: Option<i64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    p: f64,
    /// Times to tabulate, comma separated.
    #[arg(long = "t-list", value_delimiter = ',', required = true)]
    t_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    y: Vec<i64>,
    #[arg(long)]
    nu: String,
    /// Window halfwidth around the initial span (default: calibrated).
    #[arg(long)]
    window: Option<i64>,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Optional SVG of per-site species marginals.
    #[arg(long)]
    plot: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let benign = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if benign { ExitCode::SUCCESS } else { ExitCode::from(EXIT_USAGE) };
        }
    };
    if let Some(n) = cli.threads {
        // Ignored if a pool already exists (only possible in tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Prob(args) => cmd_prob(args),
        Command::Verify(args) => cmd_verify(args),
        Command::OracleCompare(args) => cmd_oracle_compare(args),
        Command::Sweep(args) => cmd_sweep(args),
    }
}

fn usage_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn transition_exit(err: &TransitionError) -> ExitCode {
    let no_convergence = matches!(
        err,
        TransitionError::NotConverged { .. }
            | TransitionError::Quadrature(QuadratureError::NotConverged { .. })
    );
    eprintln!("error: {err}");
    if no_convergence {
        ExitCode::from(EXIT_NO_CONVERGENCE)
    } else {
        ExitCode::from(EXIT_USAGE)
    }
}

/// 17 significant digits, enough to round-trip any f64.
fn sig17(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_state(positions: &[i64], word: &str) -> Result<State, String> {
    let species: SpeciesWord = word.parse().map_err(|e| format!("species word: {e}"))?;
    State::new(positions.to_vec(), species).map_err(|e| e.to_string())
}

fn parse_contour(
    radius: &str,
    nodes: usize,
    params: &SystemParams,
) -> Result<ContourSpec, String> {
    if radius == "auto" {
        let r = 0.9 * max_radius(params);
        return ContourSpec::new(r, nodes, params).map_err(|e| e.to_string());
    }
    let r: f64 = radius
        .parse()
        .map_err(|_| format!("radius must be a number or \"auto\", got {radius:?}"))?;
    ContourSpec::new(r, nodes, params).map_err(|e| e.to_string())
}

fn cmd_prob(args: ProbArgs) -> ExitCode {
    let params = match SystemParams::new(args.p) {
        Ok(p) => p,
        Err(e) => return usage_error(e),
    };
    let contour = match parse_contour(&args.radius, args.nodes, &params) {
        Ok(c) => c,
        Err(e) => return usage_error(e),
    };
    let initial = match parse_state(&args.y, &args.nu) {
        Ok(s) => s,
        Err(e) => return usage_error(format!("initial state: {e}")),
    };
    let terminal = match parse_state(&args.x, &args.pi) {
        Ok(s) => s,
        Err(e) => return usage_error(format!("terminal state: {e}")),
    };
    if args.tol <= 0.0 || !args.tol.is_finite() {
        return usage_error(format!("tolerance must be positive, got {}", args.tol));
    }
    let query = match TransitionQuery::new(initial, terminal, args.t, params) {
        Ok(q) => q,
        Err(e) => return usage_error(e),
    };
    let query = query.with_contour(contour).with_convergence(ConvergenceSettings {
        tol_rel: args.tol,
        max_nodes: 512.max(args.nodes),
    });
    let result = match probability(&query) {
        Ok(r) => r,
        Err(e) => return transition_exit(&e),
    };
    if args.json {
        let record = ProbabilityRecord::new(&query, &result);
        match serde_json::to_string(&record) {
            Ok(line) => println!("{line}"),
            Err(e) => return usage_error(e),
        }
    } else {
        println!("value  {}", sig17(result.value));
        println!("err    {:.2e}", result.est_error);
        println!("M      {}", result.nodes);
        println!("radius {}", result.radius);
    }
    ExitCode::SUCCESS
}

/// Worst deviation seen across the suites that ran, for the failure summary.
struct Offender {
    desc: String,
    deviation: f64,
    tolerance: f64,
}

fn cmd_verify(args: VerifyArgs) -> ExitCode {
    let params = match SystemParams::new(args.p) {
        Ok(p) => p,
        Err(e) => return usage_error(e),
    };
    let cfg = SuiteConfig {
        alphabet: args.alphabet,
        points: args.points,
        seed: args.seed,
        tolerance: 1e-12,
    };
    let mut passed = true;
    let mut worst: Option<Offender> = None;
    let mut note = |desc: String, deviation: f64, tolerance: f64| {
        if worst.as_ref().is_none_or(|w| deviation / tolerance > w.deviation / w.tolerance) {
            worst = Some(Offender { desc, deviation, tolerance });
        }
    };

    let wants = |name: SuiteName| args.suite == name || args.suite == SuiteName::All;
    let mut relation_reports = Vec::new();
    if wants(SuiteName::Inverse) {
        relation_reports.push(run_inverse_suite(&params, &cfg));
    }
    if wants(SuiteName::Ybe) {
        relation_reports.push(run_ybe_suite(&params, &cfg));
    }
    if wants(SuiteName::Braid) {
        relation_reports.push(run_braid_suite(&params, &cfg));
    }
    for report in relation_reports {
        let report = match report {
            Ok(r) => r,
            Err(e) => return usage_error(e),
        };
        print!("{}", report.render_text());
        passed &= report.passed();
        if let Some(row) = report
            .rows
            .iter()
            .max_by(|a, b| a.max_deviation.total_cmp(&b.max_deviation))
        {
            note(
                format!("{} suite, sector {} ({})", report.suite, row.sector, row.detail),
                row.max_deviation,
                report.tolerance,
            );
        }
    }
    if args.suite == SuiteName::All {
        // The decomposition-independence check rides along with the named
        // suites when everything is requested.
        let report = match run_well_definedness_suite(&params, &cfg) {
            Ok(r) => r,
            Err(e) => return usage_error(e),
        };
        print!("{}", report.render_text());
        passed &= report.passed();
        note("decomposition independence".into(), report.max_deviation, report.tolerance);
    }
    if args.suite == SuiteName::Initial || args.suite == SuiteName::All {
        let report = match initial_condition_report(&params, None, 1e-8, 3) {
            Ok(r) => r,
            Err(e) => return usage_error(format!("initial-condition check: {e}")),
        };
        print!("{}", report.render_text());
        passed &= report.passed();
        let dev = report.max_delta_deviation.max(report.max_term_deviation);
        note("zero-time initial condition".into(), dev, report.tolerance);
    }

    if passed {
        ExitCode::SUCCESS
    } else {
        if let Some(w) = worst {
            eprintln!(
                "verification failed: {} deviated by {:.3e} (tolerance {:.1e})",
                w.desc, w.deviation, w.tolerance
            );
        }
        ExitCode::from(EXIT_VERIFY_FAILED)
    }
}

fn cmd_oracle_compare(args: OracleCompareArgs) -> ExitCode {
    let params = match SystemParams::new(args.p) {
        Ok(p) => p,
        Err(e) => return usage_error(e),
    };
    if args.t < 0.0 || !args.t.is_finite() {
        return usage_error(format!("time must be nonnegative, got {}", args.t));
    }
    let y = args.y.unwrap_or_else(|| vec![0, 1]);
    let initial = match parse_state(&y, &args.nu) {
        Ok(s) => s,
        Err(e) => return usage_error(format!("initial state: {e}")),
    };
    let (left, right) = match args.window {
        Some(hw) if hw < 0 => return usage_error("window halfwidth must be nonnegative"),
        Some(hw) => (y[0] - hw, y[y.len() - 1] + hw),
        None => calibrated_window(&initial, args.t),
    };
    let space = match WindowedStateSpace::new(left, right, initial.species()) {
        Ok(s) => s,
        Err(e) => return usage_error(e),
    };
    let generator = build_generator(&space, &params);
    let solved = match evolve(&space, &generator, &initial, args.t, 1e-12) {
        Ok(s) => s,
        Err(e) => return usage_error(e),
    };
    if solved.leakage > 1e-8 {
        eprintln!(
            "error: a fraction {:.3e} of the mass left the window [{left}, {right}]; \
             widen it with --window",
            solved.leakage
        );
        return ExitCode::from(EXIT_ORACLE_LEAKY);
    }
    let settings = ConvergenceSettings { tol_rel: 1e-8, max_nodes: 512 };
    let dist = match distribution(&initial, args.t, &params, (left, right), None, &settings) {
        Ok(d) => d,
        Err(e) => return transition_exit(&e),
    };
    let report = compare(&space, &dist.probs, &solved);

    println!("state,exact,oracle,diff");
    for (idx, state) in space.iter_states().enumerate() {
        let exact = dist.probs[idx];
        let oracle = solved.probs[idx];
        println!(
            "\"{state}\",{},{},{}",
            sig17(exact),
            sig17(oracle),
            sig17(exact - oracle)
        );
    }
    eprintln!(
        "max |diff| {:.3e} over {} states, oracle leakage {:.3e}, M {}",
        report.max_abs_diff,
        space.len(),
        solved.leakage,
        dist.nodes
    );
    ExitCode::SUCCESS
}

fn cmd_sweep(args: SweepArgs) -> ExitCode {
    let params = match SystemParams::new(args.p) {
        Ok(p) => p,
        Err(e) => return usage_error(e),
    };
    let initial = match parse_state(&args.y, &args.nu) {
        Ok(s) => s,
        Err(e) => return usage_error(format!("initial state: {e}")),
    };
    if args.t_list.is_empty() {
        return usage_error("at least one time is required");
    }
    for &t in &args.t_list {
        if t < 0.0 || !t.is_finite() {
            return usage_error(format!("times must be nonnegative, got {t}"));
        }
    }
    // One shared window for every requested time keeps the rows comparable.
    let t_max = args.t_list.iter().cloned().fold(0.0f64, f64::max);
    let (left, right) = match args.window {
        Some(hw) if hw < 0 => return usage_error("window halfwidth must be nonnegative"),
        Some(hw) => (args.y[0] - hw, args.y[args.y.len() - 1] + hw),
        None => calibrated_window(&initial, t_max),
    };
    let settings = ConvergenceSettings { tol_rel: 1e-8, max_nodes: 512 };

    let mut sweeps: Vec<(f64, DistributionResult)> = Vec::new();
    for &t in &args.t_list {
        match distribution(&initial, t, &params, (left, right), None, &settings) {
            Ok(d) => sweeps.push((t, d)),
            Err(e) => return transition_exit(&e),
        }
    }

    let n = initial.len();
    let mut csv = String::new();
    csv.push('t');
    for i in 1..=n {
        csv.push_str(&format!(",x_{i}"));
    }
    csv.push_str(",pi,prob\n");
    for (t, dist) in &sweeps {
        for (state, prob) in dist.space.iter_states().zip(&dist.probs) {
            csv.push_str(&format!("{t}"));
            for &pos in state.positions() {
                csv.push_str(&format!(",{pos}"));
            }
            csv.push_str(&format!(",{},{}\n", state.species(), sig17(*prob)));
        }
    }
    if let Err(e) = fs::write(&args.out, csv) {
        return usage_error(format!("cannot write {}: {e}", args.out.display()));
    }

    if let Some(path) = &args.plot {
        let svg = plot::marginals_svg(&sweeps, left, right);
        if let Err(e) = fs::write(path, svg) {
            return usage_error(format!("cannot write {}: {e}", path.display()));
        }
    }
    for (t, dist) in &sweeps {
        eprintln!(
            "t={t}: {} states, mass {:.9}, M {}",
            dist.probs.len(),
            dist.total_mass,
            dist.nodes
        );
    }
    ExitCode::SUCCESS
}
