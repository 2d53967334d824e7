//! `coallab`: runs the verification experiments and the raw simulators.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coallab::excursion::{local_time_profile, sample_conditioned_excursion, sample_reflected_forest, write_path};
use coallab::experiment::{geometric_grid, run_experiment, spectrum_table, Experiment, ExperimentSpec};
use coallab::kingman::simulate_kingman;
use coallab::rng::replicate_rng;
use coallab::stats::{reports_to_csv, reports_to_json, TestReport};

#[derive(Parser)]
#[command(name = "coallab", version, about = "Kingman's coalescent from Brownian excursions, checked by simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one verification experiment and write its reports.
    Verify {
        #[arg(value_parser = parse_experiment)]
        experiment: Experiment,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Extreme block frequencies of Kingman's coalescent over a time grid.
    Spectrum {
        #[command(flatten)]
        run: RunArgs,
    },
    #[command(subcommand)]
    Simulate(Simulate),
}

#[derive(Subcommand)]
enum Simulate {
    /// Merge events of one Kingman coalescent.
    Kingman {
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Stop at this time instead of running down to one block.
        #[arg(long)]
        horizon: Option<f64>,
        #[command(flatten)]
        io: OutputArgs,
    },
    /// Local time profile of one lattice path.
    Excursion {
        #[arg(long, value_parser = parse_step, default_value = "0.0025")]
        h: f64,
        #[arg(long, value_enum, default_value_t = PathChoice::Conditioned)]
        kind: PathChoice,
        /// Also write the path itself in the binary dump format.
        #[arg(long)]
        dump_path: Option<PathBuf>,
        #[command(flatten)]
        io: OutputArgs,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PathChoice {
    Conditioned,
    Forest,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct OutputArgs {
    #[arg(long, env = "COALLAB_SEED", default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Args)]
struct RunArgs {
    /// Lattice step, `1/M` as a decimal or a fraction.
    #[arg(long, value_parser = parse_step)]
    h: Option<f64>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    reps: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    /// Geometric grid `start:stop:count`, endpoints included.
    #[arg(long, value_parser = parse_grid)]
    t_grid: Option<Grid>,
    #[arg(long)]
    threads: Option<usize>,
    #[command(flatten)]
    io: OutputArgs,
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    match s.parse::<Experiment>() {
        Ok(Experiment::Spectrum) => Err("spectrum has its own subcommand".into()),
        Ok(e) => Ok(e),
        Err(e) => Err(e.to_string()),
    }
}

fn parse_step(s: &str) -> Result<f64, String> {
    let h = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
            a / b
        }
        None => s.parse().map_err(|e| format!("{e}"))?,
    };
    coallab::excursion::lattice_size(h).map_err(|e| e.to_string())?;
    Ok(h)
}

#[derive(Clone)]
struct Grid(Vec<f64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [start, stop, count] = parts[..] else {
        return Err("expected start:stop:count".into());
    };
    let start: f64 = start.parse().map_err(|e| format!("start: {e}"))?;
    let stop: f64 = stop.parse().map_err(|e| format!("stop: {e}"))?;
    let count: usize = count.parse().map_err(|e| format!("count: {e}"))?;
    geometric_grid(start, stop, count).map(Grid).map_err(|e| e.to_string())
}

enum Failure {
    Usage(String),
    Run(String),
}

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Run(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nRun `coallab --help` for usage.");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether every report passed.
fn dispatch(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Verify { experiment, run } => verify(experiment, run),
        Command::Spectrum { run } => spectrum(run),
        Command::Simulate(Simulate::Kingman { n, horizon, io }) => {
            let mut rng = replicate_rng(io.seed, "simulate-kingman", 0);
            let traj = simulate_kingman(n, horizon, &mut rng).map_err(|e| Failure::Usage(e.to_string()))?;
            let body = match io.format.unwrap_or(Format::Csv) {
                Format::Json => serde_json::to_string_pretty(traj.events())? + "\n",
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["time", "survivor", "absorbed"])?;
                    for ev in traj.events() {
                        w.write_record([ev.time.to_string(), ev.pair.0.to_string(), ev.pair.1.to_string()])?;
                    }
                    let header = format!("# coallab simulate kingman n={n} horizon={horizon:?} seed={}\n", io.seed);
                    header + &String::from_utf8(w.into_inner().map_err(|e| e.to_string())?)?
                }
            };
            emit(&io.out, &body)?;
            Ok(true)
        }
        Command::Simulate(Simulate::Excursion {
            h,
            kind,
            dump_path,
            io,
        }) => {
            let mut rng = replicate_rng(io.seed, "simulate-excursion", 0);
            let path = match kind {
                PathChoice::Conditioned => sample_conditioned_excursion(h, &mut rng)?,
                PathChoice::Forest => sample_reflected_forest(h, &mut rng)?,
            };
            if let Some(dump) = dump_path {
                let mut out = BufWriter::new(File::create(&dump)?);
                write_path(&path, &mut out)?;
                out.flush()?;
            }
            let profile = local_time_profile(&path);
            let levels: Vec<f64> = (0..profile.z().len()).map(|k| k as f64 * h).collect();
            let body = match io.format.unwrap_or(Format::Csv) {
                Format::Json => {
                    let value = serde_json::json!({ "h": h, "level": levels, "local_time": profile.z() });
                    serde_json::to_string_pretty(&value)? + "\n"
                }
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["level", "local_time"])?;
                    for (l, z) in levels.iter().zip(profile.z()) {
                        w.write_record([l.to_string(), z.to_string()])?;
                    }
                    let header = format!("# coallab simulate excursion h={h} seed={}\n", io.seed);
                    header + &String::from_utf8(w.into_inner().map_err(|e| e.to_string())?)?
                }
            };
            emit(&io.out, &body)?;
            Ok(true)
        }
    }
}

fn build_spec(experiment: Experiment, run: &RunArgs) -> Result<ExperimentSpec, Failure> {
    let mut spec = ExperimentSpec::new(experiment);
    if let Some(h) = run.h {
        spec.h = h;
    }
    if let Some(reps) = run.reps {
        spec.replicates = reps as usize;
    }
    if let Some(n) = run.n {
        spec.n = n;
    }
    if let Some(grid) = &run.t_grid {
        spec.t_grid = grid.0.clone();
    }
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(spec)
}

/// Runs `f` on a pool of the requested size, or on the global pool.
fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    match threads {
        Some(0) => Err(Failure::Usage("--threads must be at least 1".into())),
        Some(k) => Ok(rayon::ThreadPoolBuilder::new().num_threads(k).build()?.install(f)),
        None => Ok(f()),
    }
}

fn provenance(command: &str, spec: &ExperimentSpec, seed: u64) -> String {
    let grid: Vec<String> = spec.t_grid.iter().map(|t| format!("{t}")).collect();
    format!(
        "coallab {command} h={} reps={} n={} t_grid=[{}] seed={seed}",
        spec.h,
        spec.replicates,
        spec.n,
        grid.join(",")
    )
}

fn verify(experiment: Experiment, run: RunArgs) -> Result<bool, Failure> {
    let spec = build_spec(experiment, &run)?;
    let seed = run.io.seed;
    let reports = with_threads(run.threads, || run_experiment(&spec, seed))??;
    let header = provenance(&format!("verify {experiment}"), &spec, seed);
    let body = match run.io.format.unwrap_or(Format::Json) {
        Format::Json => {
            eprintln!("{header}");
            reports_to_json(&reports) + "\n"
        }
        Format::Csv => format!("# {header}\n{}", reports_to_csv(&reports)),
    };
    emit(&run.io.out, &body)?;
    summarize(&reports);
    Ok(reports.iter().all(|r| r.pass))
}

fn spectrum(run: RunArgs) -> Result<bool, Failure> {
    let spec = build_spec(Experiment::Spectrum, &run)?;
    let seed = run.io.seed;
    let table = with_threads(run.threads, || spectrum_table(&spec, seed))??;
    let header = provenance("spectrum", &spec, seed);
    let body = match run.io.format.unwrap_or(Format::Csv) {
        Format::Json => {
            eprintln!("{header}");
            serde_json::to_string_pretty(&table)? + "\n"
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["t", "min_freq_mean", "max_freq_mean"])?;
            for i in 0..table.t.len() {
                w.write_record([
                    table.t[i].to_string(),
                    table.min_freq_mean[i].to_string(),
                    table.max_freq_mean[i].to_string(),
                ])?;
            }
            w.write_record(["slope".to_string(), table.min_slope.to_string(), table.max_slope.to_string()])?;
            format!("# {header}\n{}", String::from_utf8(w.into_inner().map_err(|e| e.to_string())?)?)
        }
    };
    emit(&run.io.out, &body)?;
    summarize(&table.reports);
    Ok(table.reports.iter().all(|r| r.pass))
}

fn summarize(reports: &[TestReport]) {
    for r in reports {
        eprintln!("{r}");
    }
}

fn emit(out: &Option<PathBuf>, body: &str) -> io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, body),
        None => io::stdout().write_all(body.as_bytes()),
    }
}
