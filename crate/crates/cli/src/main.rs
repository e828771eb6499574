use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cablenet::exec::Execution;
use cablenet::fdcheck::{fd_check, Stencil, StepRule};
use cablenet::scenario::{bundled, load_scenario, Scenario, BUNDLED};
use cablenet::system::power_budget;
use cablenet::trace::{parse_trace, render_svg, write_trace, TraceHeader};
use cablenet::{Error, RunOutcome};
use clap::{Parser, Subcommand};

/// Tolerance `check-grad` holds the adjoint gradient to.
const GRADIENT_CHECK_TOLERANCE: f64 = 1e-5;

#[derive(Parser)]
#[command(name = "cablenet", version, about = "Adjoint optimization of coaxial-cable networks")]
struct Cli {
    /// Root directory for run outputs.
    #[arg(long, global = true, env = "CABLENET_OUTPUT_ROOT", default_value = "runs")]
    output_root: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize one scenario and write its trace.
    Run {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to <output-root>/<name>/seed-<seed>.
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Compare the adjoint gradient with finite differences at the start point.
    CheckGrad {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Use plain central differences with this step instead of the default rule.
        #[arg(long)]
        step: Option<f64>,
        /// Print every component.
        #[arg(long, short)]
        verbose: bool,
    },
    /// Run scenarios over a range of seeds, concurrently.
    Batch {
        #[arg(required = true)]
        scenarios: Vec<String>,
        /// Seeds as `a..b` (inclusive) or a comma list.
        #[arg(long, default_value = "1..10")]
        seeds: String,
        #[arg(long)]
        sequential: bool,
    },
    /// Render g against iteration from a trace CSV as SVG.
    EmitPlot {
        trace: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// List bundled scenarios.
    List,
}

enum Status {
    Converged,
    NotMet,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(Status::Converged) => ExitCode::SUCCESS,
        Ok(Status::NotMet) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<Status, Error> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            output,
            max_iterations,
        } => {
            let mut s = resolve(&scenario, seed)?;
            if let Some(n) = max_iterations {
                s.optimizer.max_iterations = n;
            }
            let dir = output.unwrap_or_else(|| default_dir(&cli.output_root, &s));
            let report = execute(&s, &dir)?;
            println!("{}", report.line);
            println!("trace: {}", dir.join("trace.csv").display());
            Ok(if report.ok { Status::Converged } else { Status::NotMet })
        }
        Command::CheckGrad {
            scenario,
            seed,
            step,
            verbose,
        } => {
            let mut s = resolve(&scenario, seed)?;
            // quantized actuation makes the objective piecewise constant
            s.instrument.quantize_shifter = false;
            let twin = s.twin()?;
            let rule = step.map(StepRule::central).unwrap_or_default();
            let report = fd_check(&twin, &s.params.values(), rule, Execution::default())?;
            if verbose {
                println!("{:>5} {:>24} {:>24} {:>12}", "param", "adjoint", "numeric", "rel.err");
                for (i, e) in report.entries.iter().enumerate() {
                    println!(
                        "{i:>5} {:>24.16e} {:>24.16e} {:>12.3e}",
                        e.adjoint, e.numeric, e.relative_error
                    );
                }
            }
            let stencil = match rule.stencil {
                Stencil::Central => "central",
                Stencil::Central4 => "central, 4th order",
            };
            println!(
                "{}: {} parameters, max relative error {:.3e} ({stencil}, base step {:e})",
                s.name,
                report.entries.len(),
                report.max_relative_error,
                rule.base
            );
            Ok(if report.max_relative_error < GRADIENT_CHECK_TOLERANCE {
                Status::Converged
            } else {
                Status::NotMet
            })
        }
        Command::Batch {
            scenarios,
            seeds,
            sequential,
        } => {
            let seeds = parse_seeds(&seeds)?;
            let mut jobs = Vec::new();
            for name in &scenarios {
                let base = resolve(name, None)?;
                for &seed in &seeds {
                    jobs.push(base.with_seed(seed)?);
                }
            }
            let exec = if sequential {
                Execution::Sequential
            } else {
                Execution::default()
            };
            let root = cli.output_root.clone();
            let results = exec.map(&jobs, |s| execute(s, &default_dir(&root, s)));
            let mut status = Status::Converged;
            let mut failed = false;
            for (s, r) in jobs.iter().zip(results) {
                match r {
                    Ok(report) => {
                        println!("{}", report.line);
                        if !report.ok {
                            status = Status::NotMet;
                        }
                    }
                    Err(e) => {
                        eprintln!("{} seed {}: error: {e}", s.name, s.seed);
                        failed = true;
                    }
                }
            }
            if failed {
                return Err(Error::Scenario("one or more batch runs failed".into()));
            }
            Ok(status)
        }
        Command::EmitPlot { trace, output } => {
            let text = fs::read_to_string(&trace).map_err(|e| Error::Io(format!("{}: {e}", trace.display())))?;
            let parsed = parse_trace(&text)?;
            let title = parsed.header.get("scenario").unwrap_or("trace").to_string();
            let svg = render_svg(
                &title,
                &parsed.column("iteration").unwrap_or_default(),
                &parsed.g_series(),
            );
            let out = output.unwrap_or_else(|| trace.with_extension("svg"));
            fs::write(&out, svg).map_err(|e| Error::Io(format!("{}: {e}", out.display())))?;
            println!("plot: {}", out.display());
            Ok(Status::Converged)
        }
        Command::List => {
            for (name, _) in BUNDLED {
                println!("{name}");
            }
            Ok(Status::Converged)
        }
    }
}

fn resolve(arg: &str, seed: Option<u64>) -> Result<Scenario, Error> {
    let path = Path::new(arg);
    let scenario = if path.exists() {
        load_scenario(path)?
    } else if let Some(s) = bundled(arg) {
        s?
    } else if arg.ends_with(".toml") || arg.contains(std::path::MAIN_SEPARATOR) {
        return Err(Error::Io(format!("{arg}: file not found")));
    } else {
        let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        return Err(Error::Scenario(format!(
            "no scenario file or bundled scenario named {arg:?} (bundled: {})",
            names.join(", ")
        )));
    };
    match seed {
        Some(seed) => scenario.with_seed(seed),
        None => Ok(scenario),
    }
}

fn default_dir(root: &Path, s: &Scenario) -> PathBuf {
    let base = s.output.dir.clone().unwrap_or_else(|| PathBuf::from(&s.name));
    root.join(base).join(format!("seed-{}", s.seed))
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>, Error> {
    let bad = || Error::InvalidConfig(format!("cannot parse seeds {spec:?}; use a..b or a,b,c"));
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

struct RunReport {
    line: String,
    ok: bool,
}

fn execute(s: &Scenario, dir: &Path) -> Result<RunReport, Error> {
    let outcome = s.run()?;
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let header = TraceHeader::new(&s.name, &s.hash, s.seed)
        .with("mode", format!("{:?}", s.mode))
        .with("stop", format!("{:?}", outcome.stop));
    let trace_path = dir.join("trace.csv");
    let file = fs::File::create(&trace_path).map_err(|e| Error::Io(format!("{}: {e}", trace_path.display())))?;
    write_trace(BufWriter::new(file), &header, &outcome.trace, &s.params, &s.graph)?;
    if s.output.plot {
        let iterations: Vec<f64> = outcome.trace.records.iter().map(|r| r.iteration as f64).collect();
        let svg = render_svg(&s.name, &iterations, &outcome.trace.values());
        fs::write(dir.join("g.svg"), svg)?;
    }
    let absorbed = absorbed_share(s, &outcome)?;
    let final_g = outcome.final_value();
    let target_met = s.target_met(final_g);
    let ok = outcome.stop.is_converged() && target_met;
    let summary = format!(
        "scenario = {:?}\nhash = {:?}\nseed = {}\nstop = \"{:?}\"\niterations = {}\nfinal_g = {final_g}\ntarget = {}\ntarget_met = {target_met}\nabsorbed_share = {absorbed}\n",
        s.name,
        s.hash,
        s.seed,
        outcome.stop,
        outcome.trace.len(),
        s.target.map(|t| t.to_string()).unwrap_or_else(|| "\"none\"".into()),
    );
    fs::write(dir.join("summary.toml"), summary)?;
    let line = format!(
        "{} seed {}: g = {final_g:.6} after {} iterations ({:?}){}",
        s.name,
        s.seed,
        outcome.trace.len(),
        outcome.stop,
        match s.target {
            Some(t) if target_met => format!(", target {t} met"),
            Some(t) => format!(", target {t} NOT met"),
            None => String::new(),
        }
    );
    Ok(RunReport { line, ok })
}

/// Fraction of injected power lost inside the network at the final point.
fn absorbed_share(s: &Scenario, outcome: &RunOutcome) -> Result<f64, Error> {
    let state = s.twin()?.forward(&outcome.state.x)?;
    let budget = power_budget(&state.phi, &state.graph, &state.wavefront)?;
    Ok(budget.absorbed / budget.input)
}
