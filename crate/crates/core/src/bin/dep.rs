use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dep_core::harness::suite::{
    run_suite, summarize, write_outputs, RunFailure, SuiteOutput, SuiteSpec,
};
use dep_core::harness::{run_with, PlannerKind, RunArtifacts, RunMetrics, RunOptions};
use dep_core::{Result, Scenario};

#[derive(Parser)]
#[command(
    name = "dep",
    about = "Roadmap exploration planner in a simulated voxel world"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore one scenario and print its metrics.
    Run {
        #[command(flatten)]
        run: RunArgs,
        /// Directory for CSV and log output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit nonzero if the robot touched anything.
        #[arg(long)]
        require_safe: bool,
    },
    /// Run every scenario with every planner and seed.
    Suite {
        #[arg(long = "scenario", required = true, num_args = 1..)]
        scenarios: Vec<PathBuf>,
        #[arg(
            long = "planner",
            value_delimiter = ',',
            default_value = "dep,dep_no_opt,frontier"
        )]
        planners: Vec<PlannerKind>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        seeds: Vec<u64>,
        /// Wall-clock budget per run in seconds.
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long)]
        require_safe: bool,
    },
    /// Explore, then write the occupancy map as text.
    ExportMap {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Explore, then write the roadmap as text.
    ExportRoadmap {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "dep")]
    planner: PlannerKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Wall-clock budget in seconds.
    #[arg(long)]
    budget: Option<f64>,
    /// Stop after this many simulated seconds.
    #[arg(long)]
    until: Option<f64>,
}

impl RunArgs {
    fn execute(&self) -> Result<RunArtifacts> {
        let scenario = Scenario::load(&self.scenario)?;
        let mut opts = RunOptions::new(self.planner, self.seed);
        opts.wall_budget = self.budget;
        opts.max_sim_time = self.until;
        run_with(&scenario, &opts)
    }
}

fn report(m: &RunMetrics) {
    let o = &m.outcome;
    eprintln!(
        "{} {} seed {}: {:?} after {:.1} s, mapped {:.1}%, path {:.1} m, compute {:.2} s, replans {}, collisions {}",
        m.scenario,
        m.kind,
        m.seed,
        o.termination,
        o.exploration_time,
        100.0 * o.mapped_fraction,
        o.path_length,
        m.timing.computational_time,
        o.replanning_events,
        o.collisions
    );
}

fn report_failure(f: &RunFailure) {
    eprintln!(
        "{} {} seed {}: failed: {}",
        f.scenario,
        f.kind.name(),
        f.seed,
        f.error
    );
}

fn write_with(path: &Path, f: impl FnOnce(BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    f(BufWriter::new(File::create(path)?))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            run,
            out,
            require_safe,
        } => {
            let metrics = run.execute()?.metrics;
            report(&metrics);
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            if let Some(dir) = out {
                let out = SuiteOutput {
                    runs: vec![metrics.clone()],
                    failures: Vec::new(),
                };
                write_outputs(&out, &dir)?;
            }
            if require_safe && !metrics.is_safe() {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Suite {
            scenarios,
            planners,
            seeds,
            budget,
            out,
            require_safe,
        } => {
            let scenarios = scenarios
                .iter()
                .map(Scenario::load)
                .collect::<Result<Vec<_>>>()?;
            let spec = SuiteSpec {
                kinds: planners,
                seeds,
                wall_budget: budget,
            };
            let result = run_suite(&scenarios, &spec, |r| match r {
                Ok(m) => report(m),
                Err(f) => report_failure(f),
            });
            write_outputs(&result, &out)?;
            for s in summarize(&result.runs) {
                println!(
                    "{:<20} {:<11} n={} time {:.1}±{:.1} s  path {:.1}±{:.1} m  mapped {:.1}%  collisions {}",
                    s.scenario,
                    s.planner,
                    s.runs,
                    s.exploration_time_mean,
                    s.exploration_time_sd,
                    s.path_length_mean,
                    s.path_length_sd,
                    100.0 * s.mapped_fraction_mean,
                    s.collisions
                );
            }
            if require_safe && !result.runs.iter().all(RunMetrics::is_safe) {
                return Ok(ExitCode::from(1));
            }
            if !result.failures.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::ExportMap { run, out } => {
            let a = run.execute()?;
            report(&a.metrics);
            write_with(&out, |w| a.map.write_snapshot(w))?;
        }
        Command::ExportRoadmap { run, out } => {
            let a = run.execute()?;
            report(&a.metrics);
            write_with(&out, |w| a.roadmap.write_snapshot(w))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
