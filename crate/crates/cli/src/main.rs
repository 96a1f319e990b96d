use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tracelab::experiment::{
    minimax_demo, run_experiment, write_outputs, ExperimentConfig, PipelineSpec, RunError, RunOptions, RunOutcome,
};
use tracelab::theorems::TheoremOptions;

#[derive(Parser)]
#[command(name = "tracelab", version, about = "Batch verification experiments on convex bodies")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replaces the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write iterates.csv for a reference interior solve.
    #[arg(long)]
    trace_iterates: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TheoremId {
    #[value(name = "1.1")]
    T11,
    #[value(name = "2.5")]
    T25,
    #[value(name = "2.6")]
    T26,
    #[value(name = "2.7")]
    T27,
}

#[derive(Clone, Copy, ValueEnum)]
enum Counterexample {
    Halfline,
}

#[derive(Subcommand)]
enum Command {
    /// Run whatever pipeline the config selects.
    Run(RunArgs),
    /// Search for a multi-minimal tilt of the configured trace.
    SearchEta(RunArgs),
    /// Verify one theorem; the config must select the matching pipeline.
    Verify {
        theorem: TheoremId,
        #[command(flatten)]
        run: RunArgs,
    },
    Counterexample {
        which: Counterexample,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [-2.0, -1.0, 0.0, 1.0, 2.0])]
        gammas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// The (x − y)² instance on X = {−1, 1}, Y = [−1, 1].
    MinimaxDemo {
        #[arg(long, default_value_t = 201)]
        resolution: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force grid minimizer of the configured objective.
    GridOracle(RunArgs),
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, RunError> {
    ExperimentConfig::load(&args.config)
}

fn options(args: &RunArgs) -> RunOptions {
    RunOptions { seed: args.seed, trace_iterates: args.trace_iterates }
}

fn out_dir(args: &RunArgs, cfg: &ExperimentConfig) -> PathBuf {
    args.out.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn matches(theorem: TheoremId, p: &PipelineSpec) -> bool {
    matches!(
        (theorem, p),
        (TheoremId::T11, PipelineSpec::Theorem11 { .. })
            | (TheoremId::T25, PipelineSpec::Theorem25 { .. })
            | (TheoremId::T26, PipelineSpec::Theorem26 { .. })
            | (TheoremId::T27, PipelineSpec::Theorem27 { .. })
    )
}

fn finish(outcome: &RunOutcome, out: Option<&Path>) -> Result<i32, RunError> {
    let r = &outcome.report;
    println!(
        "{} verdict={} status={}",
        r.theorem_id,
        r.verdict,
        serde_json::to_value(r.status).unwrap_or_default().as_str().unwrap_or_default()
    );
    if let Some(m) = r.min_margin {
        println!("min_margin={m:e}");
    }
    for note in &r.notes {
        println!("note: {note}");
    }
    for m in r.members.iter().filter(|m| !m.passed) {
        println!("member {} failed: {}", m.index, m.notes.join("; "));
    }
    if let Some(dir) = out {
        let files = write_outputs(outcome, dir)?;
        println!("wrote {} to {}", files.join(", "), dir.display());
    }
    Ok(outcome.exit_code())
}

fn execute(cli: Cli) -> Result<i32, RunError> {
    match cli.command {
        Command::Run(args) => {
            let cfg = load(&args)?;
            let outcome = run_experiment(&cfg, &options(&args))?;
            finish(&outcome, Some(&out_dir(&args, &cfg)))
        }
        Command::SearchEta(args) => {
            let mut cfg = load(&args)?;
            cfg.pipeline = PipelineSpec::SearchEta;
            let outcome = run_experiment(&cfg, &options(&args))?;
            if let Some(eta) = &outcome.report.eta {
                println!("eta={eta:?}");
                let minima = &outcome.report.details["eta_search"]["boundary_minima"];
                println!("boundary_minima={}", minima.as_array().map_or(0, |a| a.len()));
            }
            finish(&outcome, Some(&out_dir(&args, &cfg)))
        }
        Command::Verify { theorem, run } => {
            let cfg = load(&run)?;
            if !matches(theorem, &cfg.pipeline) {
                return Err(RunError::Config(format!(
                    "{} selects a different pipeline than theorem {}",
                    run.config.display(),
                    theorem.to_possible_value().expect("named").get_name()
                )));
            }
            let outcome = run_experiment(&cfg, &options(&run))?;
            finish(&outcome, Some(&out_dir(&run, &cfg)))
        }
        Command::Counterexample { which: Counterexample::Halfline, gammas, out } => {
            let cfg = ExperimentConfig {
                seed: 0,
                body: None,
                trace: None,
                family: None,
                resolution: Default::default(),
                solver: Default::default(),
                search: Default::default(),
                pipeline: PipelineSpec::Halfline { gammas },
                output: None,
            };
            let outcome = run_experiment(&cfg, &RunOptions::default())?;
            finish(&outcome, out.as_deref())
        }
        Command::MinimaxDemo { resolution, out } => {
            let r = minimax_demo(resolution, &TheoremOptions::default());
            let g = &r.details["gap"];
            let y = &g["witness"]["y_star"][0];
            println!("sup_inf={} inf_sup={} y*={}", fmt(&g["sup_inf"]), fmt(&g["inf_sup"]), fmt(y));
            println!("strict_gap={} minima={}", g["strict_gap"], g["witness"]["minima"]);
            let outcome = RunOutcome {
                summary_csv: tracelab::experiment::summary_csv(&r),
                report: r,
                plot: None,
                minimizers_csv: None,
                iterates_csv: None,
            };
            finish(&outcome, out.as_deref())
        }
        Command::GridOracle(args) => {
            let cfg = load(&args)?;
            if !matches!(cfg.pipeline, PipelineSpec::GridOracle { .. }) {
                return Err(RunError::Config("grid-oracle needs a grid_oracle pipeline".into()));
            }
            let outcome = run_experiment(&cfg, &options(&args))?;
            let g = &outcome.report.details["grid"];
            println!("argmin={} value={} spacing={}", g["x"], g["value"], g["spacing"]);
            finish(&outcome, args.out.as_deref())
        }
    }
}

/// Shortest decimal form, so `1.0` prints as `1`.
fn fmt(v: &serde_json::Value) -> String {
    v.as_f64().map_or_else(|| v.to_string(), |x| format!("{x}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
