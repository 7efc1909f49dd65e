use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use taylode::integrate::{ControllerKind, SolveOptions, Tolerances};
use taylode::problems::{make_problem, relative_error};

use crate::config::{BenchConfig, Format, TolPair, OUT_DIR_VAR};
use crate::method::{parse_degree, MethodSpec};
use crate::report;
use crate::run::{self, DenseSample, Prepared, SolveReport, StatsReport};

/// Exit status for bad arguments and unknown names.
pub const EXIT_USAGE: i32 = 2;
/// Exit status when a solve fails or output cannot be written.
pub const EXIT_FAILURE: i32 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "taylode",
    version,
    about = "Arbitrary-order Taylor ODE integration"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one problem over its time span and print a JSON summary.
    Solve(SolveArgs),
    /// Work-precision sweep over methods and tolerances.
    Bench(BenchArgs),
    /// Naive versus compiled coefficient evaluation per degree.
    CompileStats(CompileStatsArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    problem: String,
    /// taylor:<p>, taylor-adaptive:<p_min>:<p_max>, dp5 or tsit5
    method: MethodSpec,
    /// Absolute tolerance; defaults to the relative tolerance, else 1e-8.
    #[arg(long)]
    abstol: Option<f64>,
    /// Relative tolerance; defaults to the absolute tolerance, else 1e-8.
    #[arg(long)]
    reltol: Option<f64>,
    /// Initial step size.
    #[arg(long)]
    h0: Option<f64>,
    /// Include dense output sampled on a uniform grid (Taylor methods only).
    #[arg(long)]
    dense: bool,
    /// Number of dense-output samples.
    #[arg(long, default_value_t = 101, requires = "dense")]
    samples: usize,
    #[arg(long, default_value = "i")]
    controller: ControllerKind,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// JSON configuration file; replaces all other options.
    #[arg(
        long,
        conflicts_with_all = ["problem", "methods", "tolerances", "repetitions", "output", "format", "controller", "jobs"]
    )]
    config: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    problem: Option<String>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', required_unless_present = "config")]
    methods: Vec<MethodSpec>,
    /// Comma-separated tolerances, each used as both abstol and reltol.
    #[arg(long, value_delimiter = ',', required_unless_present = "config")]
    tolerances: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    #[arg(long, default_value = "i")]
    controller: ControllerKind,
    /// Worker threads for independent cells.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Args)]
struct CompileStatsArgs {
    problem: String,
    /// Comma-separated degrees.
    #[arg(long, default_value = "6,8,10,12,16,20", value_delimiter = ',', value_parser = parse_degree_arg)]
    degrees: Vec<usize>,
    /// Timed samples per measurement.
    #[arg(long, default_value_t = 15)]
    repetitions: usize,
    /// Output file; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
}

fn parse_degree_arg(s: &str) -> Result<usize, String> {
    parse_degree(s).map_err(|e| e.to_string())
}

/// Runs the command line `args` (program name first), writing results to
/// `out` and diagnostics to `err`. Returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let status = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{text}")
            } else {
                write!(out, "{text}")
            };
            return status;
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a, out),
        Command::Bench(a) => bench(a, out),
        Command::CompileStats(a) => compile_stats(a, out),
    };
    match result {
        Ok(()) => 0,
        Err((status, message)) => {
            let _ = writeln!(err, "error: {message}");
            status
        }
    }
}

type CmdResult = Result<(), (i32, String)>;

fn usage(e: impl ToString) -> (i32, String) {
    (EXIT_USAGE, e.to_string())
}

fn failure(e: impl ToString) -> (i32, String) {
    (EXIT_FAILURE, e.to_string())
}

fn solve(a: SolveArgs, out: &mut dyn Write) -> CmdResult {
    let problem = make_problem(&a.problem).map_err(usage)?;
    let abstol = a.abstol.or(a.reltol).unwrap_or(1e-8);
    let reltol = a.reltol.or(a.abstol).unwrap_or(1e-8);
    let tol = Tolerances::new(abstol, reltol).map_err(usage)?;
    if a.h0.is_some_and(|h| !(h > 0.0 && h.is_finite())) {
        return Err(usage("--h0 must be positive and finite"));
    }
    if a.dense && !a.method.is_taylor() {
        return Err(usage("dense output needs a Taylor method"));
    }
    if a.dense && a.samples < 2 {
        return Err(usage("dense output needs at least 2 samples"));
    }
    let opts = SolveOptions {
        h0: a.h0,
        dense: a.dense,
        ..SolveOptions::default()
    };
    let (t0, t_end) = problem.tspan;
    let reference = problem.reference_solution(t_end).map_err(failure)?;
    let prepared = Prepared::new(problem);

    let start = Instant::now();
    let sol = prepared
        .solve(a.method, &tol, a.controller, &opts)
        .map_err(failure)?;
    let wall = start.elapsed();

    let dense = if a.dense {
        let mut samples = Vec::with_capacity(a.samples);
        for k in 0..a.samples {
            let t = if k + 1 == a.samples {
                t_end
            } else {
                t0 + (t_end - t0) * k as f64 / (a.samples - 1) as f64
            };
            samples.push(DenseSample {
                t,
                u: sol.dense(t).map_err(failure)?,
            });
        }
        Some(samples)
    } else {
        None
    };

    let (evals, work) = run::evals_and_work(a.method, &sol);
    let report = SolveReport {
        problem: prepared.problem.name.to_string(),
        method: a.method.to_string(),
        controller: format!("{:?}", a.controller).to_ascii_lowercase(),
        abstol,
        reltol,
        t0,
        t_end,
        final_time: sol.final_time(),
        final_state: sol.final_state().to_vec(),
        final_error: relative_error(sol.final_state(), &reference),
        reference,
        stats: StatsReport {
            steps_accepted: sol.stats.steps_accepted,
            steps_rejected: sol.stats.steps_rejected,
            tape_evals: sol.stats.tape_evals,
            rhs_evals: sol.stats.rhs_evals,
            evals,
            work,
        },
        degree_histogram: sol.stats.degree_histogram.clone(),
        compile_time_ns: prepared.setup_time(a.method).as_nanos() as u64,
        wall_time_ns: wall.as_nanos() as u64,
        dense,
    };
    serde_json::to_writer_pretty(&mut *out, &report).map_err(failure)?;
    writeln!(out).map_err(failure)
}

fn open_output(
    path: Option<PathBuf>,
    out: &mut dyn Write,
) -> Result<Box<dyn Write + '_>, (i32, String)> {
    match path {
        None => Ok(Box::new(out)),
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .map_err(|e| failure(format!("{}: {e}", dir.display())))?;
            }
            let file =
                File::create(&path).map_err(|e| failure(format!("{}: {e}", path.display())))?;
            Ok(Box::new(BufWriter::new(file)))
        }
    }
}

fn bench(a: BenchArgs, out: &mut dyn Write) -> CmdResult {
    let config = match a.config {
        Some(path) => BenchConfig::from_file(&path).map_err(usage)?,
        None => {
            let config = BenchConfig {
                problem: a.problem.unwrap_or_default(),
                methods: a.methods,
                tolerances: a
                    .tolerances
                    .iter()
                    .map(|&t| TolPair {
                        abstol: t,
                        reltol: t,
                    })
                    .collect(),
                repetitions: a.repetitions,
                output: a.output,
                format: a.format,
                controller: a.controller,
                jobs: a.jobs,
            };
            config.validate().map_err(usage)?;
            config
        }
    };
    let rows = run::bench(&config).map_err(failure)?;
    let mut sink = open_output(config.output_path(), out)?;
    report::write_bench(&mut sink, &rows, config.format).map_err(failure)?;
    sink.flush().map_err(failure)
}

fn compile_stats(a: CompileStatsArgs, out: &mut dyn Write) -> CmdResult {
    let problem = make_problem(&a.problem).map_err(usage)?;
    let rows = run::compile_statistics(&problem, &a.degrees, a.repetitions).map_err(failure)?;
    let path = crate::config::resolve_output(
        a.output.as_deref(),
        std::env::var_os(OUT_DIR_VAR).map(PathBuf::from),
    );
    let mut sink = open_output(path, out)?;
    report::write_compile_stats(&mut sink, &rows, a.format).map_err(failure)?;
    sink.flush().map_err(failure)
}

/// Entry point of the `taylode` binary.
pub fn main() -> ! {
    let stdout = io::stdout();
    let stderr = io::stderr();
    let status = run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock());
    std::process::exit(status)
}
