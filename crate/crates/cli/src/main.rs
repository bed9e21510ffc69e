use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::bail;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mpo_tomography::basis::DENSE_CAP;
use mpo_tomography::io::{
    load_block_data, load_counts, load_json, load_state, save_block_data, save_counts, save_json, save_state,
    CountsFile,
};
use mpo_tomography::measurement::{
    add_gaussian_noise, block_data_from_counts, exact_block_data, marginalize_global_counts, simulate_counts,
    CountsOptions, MleOptions,
};
use mpo_tomography::metrics::{compare, CompareOptions, ComparisonReport};
use mpo_tomography::reconstruction::{
    check_invertibility_dense, check_invertibility_mpo_spans, reconstruct_with_report, ReconstructionConfig,
    SolverMode,
};
use mpo_tomography::states::{
    random_mpo_via_ancilla, thermal_dense, AnyState, DenseOperator, HamiltonianSpec, MatrixProductOperator,
    NamedState, DEFAULT_COUPLING,
};
use mpo_tomography::sweep::{run_sweep, SweepConfig};

/// Reconstruct matrix product operators from local block data.
#[derive(Parser)]
#[command(name = "mpo-tomo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a state and write it as JSON.
    GenState(GenState),
    /// Produce block data (or simulated counts) from a state.
    Measure(Measure),
    /// Rebuild an MPO from block data.
    Reconstruct(Reconstruct),
    /// Compare an estimate with a reference state.
    Compare(Compare),
    /// Check (l, r)-invertibility of a state.
    CheckInvertibility(CheckInvertibility),
    /// Run a parameter sweep described by a JSON config.
    Sweep(Sweep),
    /// Turn a measurement counts file into block data by local maximum likelihood.
    IngestCounts(IngestCounts),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    CriticalIsing,
    RandomNextNeighbour,
    Ancilla,
    W,
    Ghz,
    Product,
    MaximallyMixed,
}

#[derive(Args)]
struct GenState {
    #[arg(long, value_enum)]
    family: Family,
    #[arg(long)]
    n: usize,
    /// Inverse temperature for thermal families.
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// t ||H_k||_op for the ancilla family.
    #[arg(long, default_value_t = DEFAULT_COUPLING)]
    coupling: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated W-state phases (N-1 values); zero by default.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    phases: Option<Vec<f64>>,
    /// Mix with the maximally mixed state: (1-p) rho + p 1/d^N. Dense states only.
    #[arg(long)]
    white_noise: Option<f64>,
    /// Output path; the state is stored in its native form.
    #[arg(long)]
    out: PathBuf,
    /// Also write the state as an MPO.
    #[arg(long)]
    mpo_out: Option<PathBuf>,
    /// Also write the state as a dense matrix.
    #[arg(long)]
    dense_out: Option<PathBuf>,
}

#[derive(Args)]
struct Measure {
    #[arg(long)]
    state: PathBuf,
    /// Block size R.
    #[arg(long = "r")]
    window: usize,
    /// Standard deviation of the noise on the expectation values.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Simulate this many shots per setting and write a counts file instead.
    #[arg(long)]
    shots: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Tikhonov,
    Pinv,
    Fisher,
}

#[derive(Args)]
struct Reconstruct {
    #[arg(long)]
    data: PathBuf,
    /// Left block length; defaults to floor(R/2).
    #[arg(long)]
    l: Option<usize>,
    /// Right block length; defaults to R - l - 1.
    #[arg(long)]
    r: Option<usize>,
    #[arg(long, value_enum, default_value = "tikhonov")]
    solver: Solver,
    /// Explicit Tikhonov parameter; derived from the data's noise when absent.
    #[arg(long)]
    sigma2: Option<f64>,
    /// Relative cutoff for the truncated pseudoinverse.
    #[arg(long, default_value_t = 1e-9)]
    tau: f64,
    #[arg(long, default_value_t = 1e-9)]
    rank_tol: f64,
    #[arg(long)]
    normalize_trace: bool,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the solver report; printed to stdout otherwise.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct Compare {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    estimate: PathBuf,
    /// Optimize the W-state fidelity over local phases.
    #[arg(long)]
    fidelity_w: bool,
    /// Also compute the minimum eigenvalue of the estimate.
    #[arg(long)]
    dense: bool,
    /// JSON output path; printed to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the report as a one-row CSV table.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    /// Dense rank test when the chain is small enough, span test otherwise.
    Auto,
    Dense,
    Spans,
}

#[derive(Args)]
struct CheckInvertibility {
    #[arg(long)]
    state: PathBuf,
    #[arg(long)]
    l: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 1e-9)]
    rank_tol: f64,
    #[arg(long, value_enum, default_value = "auto")]
    method: Method,
}

#[derive(Args)]
struct Sweep {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Record per-trial wall time (makes the output nondeterministic).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct IngestCounts {
    #[arg(long)]
    counts: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Reduce whole-chain records (R = N) to blocks of this size first.
    #[arg(long)]
    window: Option<usize>,
    /// Attach a scalar shot-noise variance instead of inverse Fisher information.
    #[arg(long)]
    no_fisher: bool,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
    /// Per-block MLE diagnostics as JSON.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn gen_state(a: GenState) -> anyhow::Result<()> {
    let state: AnyState = match a.family {
        Family::CriticalIsing => thermal_dense(&HamiltonianSpec::critical_ising(a.n, a.beta))?.into(),
        Family::RandomNextNeighbour => {
            thermal_dense(&HamiltonianSpec::random_next_neighbour(a.n, a.beta, a.seed))?.into()
        }
        Family::Ancilla => random_mpo_via_ancilla(a.n, a.coupling, a.seed)?.into(),
        Family::W => NamedState::w(a.n, a.phases.clone().unwrap_or_else(|| vec![0.0; a.n.saturating_sub(1)]))?
            .mpo()?
            .into(),
        Family::Ghz => NamedState::ghz(a.n)?.mpo()?.into(),
        Family::Product => NamedState::all_zero(a.n).mpo()?.into(),
        Family::MaximallyMixed => MatrixProductOperator::maximally_mixed(a.n, 2)?.into(),
    };
    let state = match a.white_noise {
        None => state,
        Some(p) => {
            if !(0.0..=1.0).contains(&p) {
                bail!(mpo_tomography::Error::InvalidArgument(format!("white noise must be in [0, 1], got {p}")));
            }
            let rho = state.to_dense()?;
            let mixed = DenseOperator::maximally_mixed(a.n, rho.d())?;
            DenseOperator::new(rho.matrix().scale(1.0 - p) + mixed.matrix().scale(p), rho.d())?.into()
        }
    };
    save_state(&a.out, &state)?;
    if let Some(path) = &a.mpo_out {
        save_state(path, &AnyState::Mpo(state.to_mpo()?))?;
    }
    if let Some(path) = &a.dense_out {
        save_state(path, &AnyState::Dense(state.to_dense()?))?;
    }
    Ok(())
}

fn measure(a: Measure) -> anyhow::Result<()> {
    let state = load_state(&a.state)?;
    if let Some(shots) = a.shots {
        let rho = state.to_dense()?;
        let blocks = simulate_counts(&rho, a.window, shots, a.seed)?;
        let file = CountsFile {
            n_sites: rho.n_sites(),
            window: a.window,
            blocks,
        };
        save_counts(&a.out, &file)?;
        return Ok(());
    }
    let exact = match &state {
        AnyState::Dense(s) => exact_block_data(s, a.window)?,
        AnyState::Mpo(m) => exact_block_data(m, a.window)?,
    };
    save_block_data(&a.out, &add_gaussian_noise(&exact, a.sigma, a.seed)?)?;
    Ok(())
}

fn reconstruct(a: Reconstruct) -> anyhow::Result<()> {
    let data = load_block_data(&a.data)?;
    let window = data.window();
    let l = a.l.unwrap_or(window / 2);
    let r = a.r.unwrap_or_else(|| window.saturating_sub(l + 1));
    let solver = match a.solver {
        Solver::Tikhonov => SolverMode::Tikhonov { sigma2: a.sigma2 },
        Solver::Pinv => SolverMode::TruncatedPinv { tau: a.tau },
        Solver::Fisher => SolverMode::Fisher,
    };
    let mut cfg = ReconstructionConfig::new(l, r, solver);
    cfg.rank_tol = a.rank_tol;
    cfg.normalize_trace = a.normalize_trace;
    let (mpo, mut report) = reconstruct_with_report(&data, &cfg)?;
    save_state(&a.out, &AnyState::Mpo(mpo))?;
    report.output = Some(a.out.display().to_string());
    match &a.report {
        Some(path) => save_json(path, &report)?,
        None => print_json(&serde_json::to_value(&report)?),
    }
    Ok(())
}

fn write_comparison_csv(path: &Path, report: &ComparisonReport) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ComparisonReport::CSV_HEADER)?;
    w.write_record(report.csv_record())?;
    w.flush()?;
    Ok(())
}

fn compare_cmd(a: Compare) -> anyhow::Result<()> {
    let reference = load_state(&a.reference)?;
    let estimate = load_state(&a.estimate)?;
    let opts = CompareOptions {
        dense: a.dense,
        fidelity_w: a.fidelity_w,
    };
    let report = compare(&reference, &estimate, &opts)?;
    match &a.out {
        Some(path) => save_json(path, &report)?,
        None => print_json(&serde_json::to_value(&report)?),
    }
    if let Some(path) = &a.csv {
        write_comparison_csv(path, &report)?;
    }
    Ok(())
}

fn check_invertibility(a: CheckInvertibility) -> anyhow::Result<()> {
    let state = load_state(&a.state)?;
    let dense = match a.method {
        Method::Dense => true,
        Method::Spans => false,
        Method::Auto => state.n_sites() <= DENSE_CAP,
    };
    let value = if dense {
        let rep = check_invertibility_dense(&state.to_dense()?, a.l, a.r, a.rank_tol)?;
        json!({ "method": "dense", "invertible": rep.is_invertible, "report": rep })
    } else {
        let rep = check_invertibility_mpo_spans(&state.to_mpo()?, a.l, a.r, a.rank_tol)?;
        json!({ "method": "spans", "sufficient": rep.sufficient, "report": rep })
    };
    print_json(&value);
    Ok(())
}

fn sweep(a: Sweep) -> anyhow::Result<()> {
    let mut cfg: SweepConfig = load_json(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.master_seed = seed;
    }
    if let Some(t) = a.threads {
        cfg.threads = Some(t);
    }
    cfg.record_timing |= a.timing;
    if let Some(out) = a.out {
        cfg.output = Some(out);
    }
    let Some(dir) = cfg.output.clone() else {
        bail!(mpo_tomography::Error::InvalidArgument(
            "no output directory: pass --out or set `output` in the config".into()
        ));
    };
    let result = run_sweep(&cfg)?;
    result.write_tables(&dir)?;
    let failures: usize = result.summary.iter().map(|c| c.failures).sum();
    print_json(&json!({
        "output": dir.display().to_string(),
        "cells": result.summary.len(),
        "trials": result.rows.len(),
        "failures": failures,
    }));
    Ok(())
}

fn ingest_counts(a: IngestCounts) -> anyhow::Result<()> {
    let file = load_counts(&a.counts)?;
    let opts = CountsOptions {
        mle: MleOptions {
            max_iterations: a.max_iterations,
            ..MleOptions::default()
        },
        fisher: !a.no_fisher,
    };
    let blocks = match a.window {
        Some(w) if w != file.window => {
            if file.window != file.n_sites || file.blocks.len() != 1 {
                bail!(mpo_tomography::Error::InvalidArgument(format!(
                    "--window needs a single whole-chain block, file has R = {} on N = {}",
                    file.window, file.n_sites
                )));
            }
            marginalize_global_counts(&file.blocks[0], w)?
        }
        _ => file.blocks,
    };
    let (data, diagnostics) = block_data_from_counts(&blocks, &opts)?;
    if data.n_sites() != file.n_sites {
        bail!(mpo_tomography::Error::Format(format!(
            "file declares N = {} but its blocks cover {} sites",
            file.n_sites,
            data.n_sites()
        )));
    }
    save_block_data(&a.out, &data)?;
    if let Some(path) = &a.diagnostics {
        save_json(path, &diagnostics)?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenState(a) => gen_state(a),
        Command::Measure(a) => measure(a),
        Command::Reconstruct(a) => reconstruct(a),
        Command::Compare(a) => compare_cmd(a),
        Command::CheckInvertibility(a) => check_invertibility(a),
        Command::Sweep(a) => sweep(a),
        Command::IngestCounts(a) => ingest_counts(a),
    }
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<mpo_tomography::Error>())
        .map(|e| e.kind())
        .unwrap_or("error")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": "usage", "message": e.to_string().trim_end() }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let message = format!("{:#}", err);
            eprintln!("{}", json!({ "error": error_kind(&err), "message": message }));
            ExitCode::FAILURE
        }
    }
}
