//! `adiawalk` — reproducible experiments on adiabatic spatial search.
//!
//! Subcommands: `generate | analyze | evolve | verify`. Every output file
//! is deterministic for a fixed command line and seed.
//!
//! Exit codes: 0 success, 2 usage errors and dimension caps, 3 chain
//! validation failures, 4 evolution success-bound violation, 5 invariant
//! suite failures, 1 everything else.

mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use adiawalk::adiabatic::{evolve, running_time, trace_csv, EvolveSummary};
use adiawalk::chain::{from_json, generate, make_lazy, to_json, Family, StochasticChain};
use adiawalk::discriminant::{discriminant, eigendecompose, spectrum_csv};
use adiawalk::hitting::{
    classical_hitting_time, ht_grid_csv, monte_carlo_hitting_time, series_hitting_time,
    verify_derivative_lemma, verify_lemma_ht, HittingReport,
};
use adiawalk::suite::run_suite;
use adiawalk::{interpolate, Error};

use config::{ChainSource, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "adiawalk",
    version,
    about = "Adiabatic spatial search on reversible Markov chains"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Seed for every random choice (generators, Monte Carlo, sampling).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Directory that receives the output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Number of s-grid points for sweeps and CSV dumps.
    #[arg(long, global = true, default_value_t = 101)]
    grid: usize,

    /// Do not apply the laziness transform automatically when a chain has
    /// negative discriminant eigenvalues.
    #[arg(long, global = true)]
    no_auto_lazy: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a chain file from a built-in family.
    Generate {
        #[command(subcommand)]
        family: FamilyCmd,
    },
    /// Hitting times (three methods), the spectrum dump, and the lemma
    /// deviations for a chain file.
    Analyze { chain_file: PathBuf },
    /// Run the adiabatic search end to end and dump the trace.
    Evolve {
        chain_file: PathBuf,
        /// Target error amplitude; the running time is (pi/2eps) sqrt(HT).
        #[arg(long)]
        epsilon: f64,
        /// Base step size override (the stepper still refines it).
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Run every module invariant against a chain file.
    Verify { chain_file: PathBuf },
}

#[derive(Subcommand)]
enum FamilyCmd {
    /// Complete-graph walk on n vertices.
    Complete {
        #[arg(long)]
        n: usize,
        /// Marked vertices, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        marked: Vec<usize>,
        /// Apply the laziness transform (P+I)/2 before writing.
        #[arg(long)]
        lazy: bool,
    },
    /// Symmetric cycle walk on n vertices.
    Cycle {
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        marked: Vec<usize>,
        #[arg(long)]
        lazy: bool,
    },
    /// Nearest-neighbour walk on a w x h torus.
    Torus {
        #[arg(long)]
        w: usize,
        #[arg(long)]
        h: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        marked: Vec<usize>,
        #[arg(long)]
        lazy: bool,
    },
    /// Random reversible chain with a cycle backbone and random chords.
    Random {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        deg: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        marked: Vec<usize>,
        #[arg(long)]
        lazy: bool,
    },
}

impl FamilyCmd {
    fn family(&self, seed: u64) -> Family {
        match self {
            FamilyCmd::Complete { n, .. } => Family::Complete { n: *n },
            FamilyCmd::Cycle { n, .. } => Family::Cycle { n: *n },
            FamilyCmd::Torus { w, h, .. } => Family::Torus { w: *w, h: *h },
            FamilyCmd::Random { n, deg, .. } => Family::RandomReversible {
                n: *n,
                degree: *deg,
                seed,
            },
        }
    }

    fn marked(&self) -> &[usize] {
        match self {
            FamilyCmd::Complete { marked, .. }
            | FamilyCmd::Cycle { marked, .. }
            | FamilyCmd::Torus { marked, .. }
            | FamilyCmd::Random { marked, .. } => marked,
        }
    }

    fn lazy(&self) -> bool {
        match self {
            FamilyCmd::Complete { lazy, .. }
            | FamilyCmd::Cycle { lazy, .. }
            | FamilyCmd::Torus { lazy, .. }
            | FamilyCmd::Random { lazy, .. } => *lazy,
        }
    }
}

#[derive(Serialize)]
struct HtThreeWays {
    linear_solve: HittingReport,
    series: HittingReport,
    monte_carlo: HittingReport,
}

#[derive(Serialize)]
struct RunningTimeEntry {
    epsilon: f64,
    #[serde(rename = "T")]
    t: f64,
}

#[derive(Serialize)]
struct AnalyzeReport {
    n: usize,
    marked: Vec<usize>,
    p_marked: f64,
    lazy: bool,
    ht: HtThreeWays,
    sin4_identity_max_dev: f64,
    derivative_lemma_max_dev: f64,
    running_time: Vec<RunningTimeEntry>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error[{}]: {err}", err.code());
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    if err.is_validation() {
        3
    } else {
        match err {
            Error::DimensionCap { .. } | Error::BadParams { .. } | Error::SOutOfRange { .. } => 2,
            _ => 1,
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Generate { family } => cmd_generate(&cli, family),
        Command::Analyze { chain_file } => cmd_analyze(&cli, chain_file),
        Command::Evolve {
            chain_file,
            epsilon,
            dt,
        } => cmd_evolve(&cli, chain_file, *epsilon, *dt),
        Command::Verify { chain_file } => cmd_verify(&cli, chain_file),
    }
}

fn load_chain(cli: &Cli, chain_file: &PathBuf) -> Result<StochasticChain, Error> {
    let text = fs::read_to_string(chain_file)?;
    let chain = from_json(&text)?;
    if cli.no_auto_lazy || chain.lazy() {
        return Ok(chain);
    }
    // Auto-apply laziness only when it is actually needed: a negative
    // discriminant eigenvalue breaks the running-time derivation.
    let spectral = eigendecompose(&discriminant(&interpolate(&chain, 0.0)?))?;
    if spectral.lambda(0) < -1e-10 {
        eprintln!(
            "note: discriminant eigenvalue {:.4} is negative; applying the laziness \
             transform (P+I)/2 (disable with --no-auto-lazy). Reported hitting times \
             refer to the lazy chain.",
            spectral.lambda(0)
        );
        return Ok(make_lazy(&chain));
    }
    Ok(chain)
}

fn write_config(cli: &Cli, config: &ExperimentConfig) -> Result<(), Error> {
    fs::write(cli.out.join("config.json"), config.to_json())?;
    Ok(())
}

fn cmd_generate(cli: &Cli, family_cmd: &FamilyCmd) -> Result<ExitCode, Error> {
    let family = family_cmd.family(cli.seed);
    let mut chain = generate(&family, family_cmd.marked())?;
    if family_cmd.lazy() {
        chain = make_lazy(&chain);
    }
    let path = cli.out.join("chain.json");
    fs::write(&path, to_json(&chain))?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(cli: &Cli, chain_file: &PathBuf) -> Result<ExitCode, Error> {
    let chain = load_chain(cli, chain_file)?;
    chain.require_searchable()?;
    let grid = cli.grid.max(2);
    let grid_values: Vec<f64> = (0..grid)
        .map(|i| i as f64 / (grid - 1) as f64)
        .collect();

    let report = AnalyzeReport {
        n: chain.n(),
        marked: chain.marked().to_vec(),
        p_marked: chain.p_marked(),
        lazy: chain.lazy(),
        ht: HtThreeWays {
            linear_solve: classical_hitting_time(&chain)?,
            series: series_hitting_time(&chain, 1e-9)?,
            monte_carlo: monte_carlo_hitting_time(&chain, 100_000, cli.seed)?,
        },
        sin4_identity_max_dev: verify_lemma_ht(&chain, &grid_values)?,
        derivative_lemma_max_dev: verify_derivative_lemma(
            &chain,
            &[0.0, 0.25, 0.5, 0.75, 0.9],
        )?,
        running_time: [0.5, 0.25, 0.1]
            .iter()
            .map(|&epsilon| {
                running_time(&chain, epsilon, 101).map(|rt| RunningTimeEntry {
                    epsilon,
                    t: rt.t,
                })
            })
            .collect::<Result<Vec<_>, _>>()?,
    };

    fs::write(
        cli.out.join("analyze.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    fs::write(cli.out.join("spectrum.csv"), spectrum_csv(&chain, grid)?)?;
    fs::write(cli.out.join("ht_grid.csv"), ht_grid_csv(&chain, grid)?)?;
    write_config(
        cli,
        &ExperimentConfig {
            command: "analyze".to_string(),
            chain: ChainSource::File {
                path: chain_file.display().to_string(),
            },
            marked: Some(chain.marked().to_vec()),
            epsilon: None,
            grid,
            dt: None,
            out_dir: cli.out.display().to_string(),
            seed: cli.seed,
        },
    )?;
    println!(
        "ht = {:.12} (linear solve), sin^4 identity max dev = {:.3e}",
        report.ht.linear_solve.ht, report.sin4_identity_max_dev
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_evolve(
    cli: &Cli,
    chain_file: &PathBuf,
    epsilon: f64,
    dt: Option<f64>,
) -> Result<ExitCode, Error> {
    let chain = load_chain(cli, chain_file)?;
    let trace = evolve(&chain, epsilon, dt)?;
    let summary = EvolveSummary::from_trace(&trace);

    fs::write(cli.out.join("trace.csv"), trace_csv(&trace))?;
    fs::write(
        cli.out.join("summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    write_config(
        cli,
        &ExperimentConfig {
            command: "evolve".to_string(),
            chain: ChainSource::File {
                path: chain_file.display().to_string(),
            },
            marked: Some(chain.marked().to_vec()),
            epsilon: Some(epsilon),
            grid: cli.grid,
            dt,
            out_dir: cli.out.display().to_string(),
            seed: cli.seed,
        },
    )?;

    let bound = 1.0 - epsilon * epsilon - 0.05;
    println!(
        "T = {:.6}, success probability = {:.6}, min overlap = {:.6}, bound = {:.6}",
        summary.t, summary.success_prob, summary.min_overlap, bound
    );
    if summary.success_prob >= bound {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!(
            "evolution bound violated: success probability {:.6} < {:.6}; \
             this is a reportable finding",
            summary.success_prob, bound
        );
        Ok(ExitCode::from(4))
    }
}

fn cmd_verify(cli: &Cli, chain_file: &PathBuf) -> Result<ExitCode, Error> {
    let chain = load_chain(cli, chain_file)?;
    let report = run_suite(&chain, cli.grid, cli.seed)?;
    for check in &report.checks {
        println!(
            "{} {} (residual {:.3e}, tolerance {:.3e}){}",
            if check.passed { "ok  " } else { "FAIL" },
            check.name,
            check.residual,
            check.tolerance,
            check
                .note
                .as_ref()
                .map(|n| format!(" [{n}]"))
                .unwrap_or_default()
        );
    }
    fs::write(
        cli.out.join("verify.json"),
        serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;
    if report.all_passed() {
        println!("all {} invariants hold", report.checks.len());
        Ok(ExitCode::SUCCESS)
    } else {
        let failures: Vec<&str> = report
            .failures()
            .iter()
            .map(|c| c.name.as_str())
            .collect();
        eprintln!("invariant failures: {}", failures.join(", "));
        Ok(ExitCode::from(5))
    }
}
