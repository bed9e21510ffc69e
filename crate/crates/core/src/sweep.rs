//! Parameter sweeps: generate, measure, perturb, reconstruct and compare over
//! a grid of chain lengths, noise levels and block sizes.
//!
//! Seeds: every trial uses `derive_seed(master, cell, trial)` for its noise and
//! `derive_seed(master, N, trial)` for its state, so a state is shared by all
//! cells with the same `N` and a trial can be rerun in isolation. Cells are
//! ordered by `N`, then `R`, then `sigma`, in the order given in the config.

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::DENSE_CAP;
use crate::error::{Error, Result};
use crate::measurement::{add_gaussian_noise, exact_block_data};
use crate::metrics::{hs_distance_dense, hs_distance_mpo};
use crate::reconstruction::{reconstruct_mpo, ReconstructionConfig, SolverMode};
use crate::states::{random_mpo_via_ancilla, thermal_dense, AnyState, HamiltonianSpec, DEFAULT_COUPLING};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum StateFamily {
    CriticalIsing {
        beta: f64,
    },
    RandomNextNeighbour {
        beta: f64,
    },
    /// Random MPS coupled to per-site ancillas; `coupling = t ||H_k||_op`.
    Ancilla {
        #[serde(default = "default_coupling")]
        coupling: f64,
    },
}

fn default_coupling() -> f64 {
    DEFAULT_COUPLING
}

impl StateFamily {
    pub fn name(&self) -> &'static str {
        match self {
            Self::CriticalIsing { .. } => "critical_ising",
            Self::RandomNextNeighbour { .. } => "random_next_neighbour",
            Self::Ancilla { .. } => "ancilla",
        }
    }

    fn is_dense(&self) -> bool {
        !matches!(self, Self::Ancilla { .. })
    }

    /// Deterministic state for the given chain length and seed.
    pub fn generate(&self, n_sites: usize, seed: u64) -> Result<AnyState> {
        Ok(match *self {
            Self::CriticalIsing { beta } => AnyState::Dense(thermal_dense(&HamiltonianSpec::critical_ising(n_sites, beta))?),
            Self::RandomNextNeighbour { beta } => AnyState::Dense(thermal_dense(
                &HamiltonianSpec::random_next_neighbour(n_sites, beta, seed),
            )?),
            Self::Ancilla { coupling } => AnyState::Mpo(random_mpo_via_ancilla(n_sites, coupling, seed)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub state: StateFamily,
    pub n_sites: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub windows: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub solver: SolverMode,
    #[serde(default)]
    pub master_seed: u64,
    /// Worker threads; `None` uses all cores.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Fill the `wall_ms` column. Off by default so reruns are byte-identical.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Directory for the CSV tables, used by the command-line front end.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_bins() -> usize {
    20
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.n_sites.is_empty() || self.sigmas.is_empty() || self.windows.is_empty() {
            return bad("grid lists must be non-empty".into());
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return bad(format!("sigma must be >= 0, got {s}"));
        }
        if self.histogram_bins == 0 {
            return bad("histogram_bins must be at least 1".into());
        }
        match self.state {
            StateFamily::CriticalIsing { beta } | StateFamily::RandomNextNeighbour { beta } if !(beta >= 0.0) => {
                return bad(format!("beta must be >= 0, got {beta}"));
            }
            StateFamily::Ancilla { coupling } if !(coupling >= 0.0) => {
                return bad(format!("coupling must be >= 0, got {coupling}"));
            }
            _ => {}
        }
        for &n in &self.n_sites {
            if self.state.is_dense() && n > DENSE_CAP {
                return bad(format!("{} states are limited to N <= {DENSE_CAP}", self.state.name()));
            }
            for &w in &self.windows {
                let cfg = ReconstructionConfig::for_window(w)?.with_solver(self.solver);
                cfg.validate(n)?;
            }
        }
        Ok(())
    }

    /// Cells in canonical order: `(N, R, sigma)`.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &n in &self.n_sites {
            for &window in &self.windows {
                for &sigma in &self.sigmas {
                    out.push(Cell {
                        index: out.len(),
                        n_sites: n,
                        window,
                        sigma,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub n_sites: usize,
    pub window: usize,
    pub sigma: f64,
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `splitmix64(splitmix64(splitmix64(master) ^ a) ^ b)`.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ a) ^ b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRow {
    pub family: &'static str,
    #[serde(rename = "N")]
    pub n_sites: usize,
    #[serde(rename = "R")]
    pub window: usize,
    pub l: usize,
    pub r: usize,
    pub sigma: f64,
    pub trial: usize,
    pub seed: u64,
    #[serde(rename = "D")]
    pub d: Option<f64>,
    pub purity_ref: Option<f64>,
    pub solver_mode: &'static str,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub family: &'static str,
    #[serde(rename = "N")]
    pub n_sites: usize,
    #[serde(rename = "R")]
    pub window: usize,
    pub l: usize,
    pub r: usize,
    pub sigma: f64,
    pub solver_mode: &'static str,
    pub trials: usize,
    pub failures: usize,
    pub mean_d: Option<f64>,
    pub std_d: Option<f64>,
    pub min_d: Option<f64>,
    pub max_d: Option<f64>,
}

impl CellSummary {
    /// Standard error of the mean.
    pub fn stderr(&self) -> Option<f64> {
        let ok = self.trials - self.failures;
        self.std_d.map(|s| s / (ok as f64).sqrt())
    }
}

/// One bin of the per-cell distribution of `log10 D`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramRow {
    pub family: &'static str,
    #[serde(rename = "N")]
    pub n_sites: usize,
    #[serde(rename = "R")]
    pub window: usize,
    pub sigma: f64,
    pub log10_d_lo: f64,
    pub log10_d_hi: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<TrialRow>,
    pub summary: Vec<CellSummary>,
    pub histogram: Vec<HistogramRow>,
}

impl SweepResult {
    pub fn cell(&self, n_sites: usize, window: usize, sigma: f64) -> Option<&CellSummary> {
        self.summary
            .iter()
            .find(|c| c.n_sites == n_sites && c.window == window && c.sigma == sigma)
    }

    /// Writes `trials.csv`, `summary.csv` and `histogram.csv` into `dir`.
    pub fn write_tables(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_trials_csv(std::fs::File::create(dir.join("trials.csv"))?, &self.rows)?;
        write_summary_csv(std::fs::File::create(dir.join("summary.csv"))?, &self.summary)?;
        write_histogram_csv(std::fs::File::create(dir.join("histogram.csv"))?, &self.histogram)
    }
}

fn run_trial(
    cfg: &SweepConfig,
    cell: &Cell,
    trial: usize,
    state: &std::result::Result<AnyState, String>,
) -> TrialRow {
    let seed = derive_seed(cfg.master_seed, cell.index as u64, trial as u64);
    let rc = ReconstructionConfig::for_window(cell.window)
        .expect("validated")
        .with_solver(cfg.solver);
    let start = Instant::now();
    let outcome = (|| -> Result<(f64, f64)> {
        let state = state.as_ref().map_err(|e| Error::InvalidArgument(e.clone()))?;
        let exact = match state {
            AnyState::Dense(s) => exact_block_data(s, cell.window)?,
            AnyState::Mpo(m) => exact_block_data(m, cell.window)?,
        };
        let data = add_gaussian_noise(&exact, cell.sigma, seed)?;
        let est = reconstruct_mpo(&data, &rc)?;
        match state {
            AnyState::Dense(s) => Ok((hs_distance_dense(s, &est.to_dense()?)?, s.purity())),
            AnyState::Mpo(m) => Ok((hs_distance_mpo(m, &est)?, m.purity())),
        }
    })();
    let wall_ms = cfg.record_timing.then(|| start.elapsed().as_secs_f64() * 1e3);
    let (d, purity_ref, error) = match outcome {
        Ok((d, p)) if d.is_finite() => (Some(d), Some(p), None),
        Ok((d, p)) => (None, Some(p), Some(format!("non_finite: D = {d}"))),
        Err(e) => (None, None, Some(format!("{}: {e}", e.kind()))),
    };
    TrialRow {
        family: cfg.state.name(),
        n_sites: cell.n_sites,
        window: cell.window,
        l: rc.l,
        r: rc.r,
        sigma: cell.sigma,
        trial,
        seed,
        d,
        purity_ref,
        solver_mode: cfg.solver.name(),
        wall_ms,
        error,
    }
}

fn summarize(cfg: &SweepConfig, cell: &Cell, rows: &[TrialRow]) -> (CellSummary, Vec<HistogramRow>) {
    let ds: Vec<f64> = rows.iter().filter_map(|r| r.d).collect();
    let n = ds.len();
    let mean = (n > 0).then(|| ds.iter().sum::<f64>() / n as f64);
    let std = mean.map(|m| {
        if n > 1 {
            (ds.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        }
    });
    let min = ds.iter().cloned().reduce(f64::min);
    let max = ds.iter().cloned().reduce(f64::max);
    let first = &rows[0];
    let summary = CellSummary {
        family: cfg.state.name(),
        n_sites: cell.n_sites,
        window: cell.window,
        l: first.l,
        r: first.r,
        sigma: cell.sigma,
        solver_mode: cfg.solver.name(),
        trials: rows.len(),
        failures: rows.len() - n,
        mean_d: mean,
        std_d: std,
        min_d: min,
        max_d: max,
    };
    // a D of exactly zero has no logarithm; floor it
    let logs: Vec<f64> = ds.iter().map(|d| d.max(1e-300).log10()).collect();
    let mut hist = Vec::new();
    if let (Some(lo), Some(hi)) = (
        logs.iter().cloned().reduce(f64::min),
        logs.iter().cloned().reduce(f64::max),
    ) {
        let bins = if hi > lo { cfg.histogram_bins } else { 1 };
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 0.0 };
        let mut counts = vec![0usize; bins];
        for x in &logs {
            let b = if width > 0.0 { (((x - lo) / width) as usize).min(bins - 1) } else { 0 };
            counts[b] += 1;
        }
        for (b, count) in counts.into_iter().enumerate() {
            hist.push(HistogramRow {
                family: cfg.state.name(),
                n_sites: cell.n_sites,
                window: cell.window,
                sigma: cell.sigma,
                log10_d_lo: lo + b as f64 * width,
                log10_d_hi: if b + 1 == bins { hi } else { lo + (b + 1) as f64 * width },
                count,
            });
        }
    }
    (summary, hist)
}

/// Runs every trial of every cell. Individual failures are recorded in the
/// rows and do not stop the sweep.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &SweepConfig) -> Result<SweepResult> {
    let cells = cfg.cells();
    // deterministic families ignore the seed, so one state per N suffices
    let seeded = !matches!(cfg.state, StateFamily::CriticalIsing { .. });
    let mut keys: Vec<(usize, usize)> = Vec::new();
    for &n in &cfg.n_sites {
        for trial in 0..if seeded { cfg.trials } else { 1 } {
            if !keys.contains(&(n, trial)) {
                keys.push((n, trial));
            }
        }
    }
    let states: HashMap<(usize, usize), std::result::Result<AnyState, String>> = keys
        .par_iter()
        .map(|&(n, trial)| {
            let seed = derive_seed(cfg.master_seed, n as u64, trial as u64);
            let state = cfg.state.generate(n, seed).map_err(|e| format!("{}: {e}", e.kind()));
            ((n, trial), state)
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..cfg.trials).map(move |t| (c, t)))
        .collect();
    let rows: Vec<TrialRow> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let cell = &cells[c];
            let key = (cell.n_sites, if seeded { t } else { 0 });
            run_trial(cfg, cell, t, &states[&key])
        })
        .collect();
    let mut summary = Vec::with_capacity(cells.len());
    let mut histogram = Vec::new();
    for (cell, chunk) in cells.iter().zip(rows.chunks(cfg.trials)) {
        let (s, h) = summarize(cfg, cell, chunk);
        summary.push(s);
        histogram.extend(h);
    }
    Ok(SweepResult {
        rows,
        summary,
        histogram,
    })
}

fn fmt_f(x: f64) -> String {
    format!("{x:e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f).unwrap_or_default()
}

pub const TRIAL_COLUMNS: [&str; 13] = [
    "family",
    "N",
    "R",
    "l",
    "r",
    "sigma",
    "trial",
    "seed",
    "D",
    "purity_ref",
    "solver_mode",
    "wall_ms",
    "error",
];

pub fn write_trials_csv<W: Write>(out: W, rows: &[TrialRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRIAL_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.family.to_string(),
            r.n_sites.to_string(),
            r.window.to_string(),
            r.l.to_string(),
            r.r.to_string(),
            fmt_f(r.sigma),
            r.trial.to_string(),
            r.seed.to_string(),
            fmt_opt(r.d),
            fmt_opt(r.purity_ref),
            r.solver_mode.to_string(),
            r.wall_ms.map(|t| format!("{t:.3}")).unwrap_or_default(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, summary: &[CellSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "family",
        "N",
        "R",
        "l",
        "r",
        "sigma",
        "solver_mode",
        "trials",
        "failures",
        "mean_D",
        "std_D",
        "stderr_D",
        "min_D",
        "max_D",
    ])?;
    for c in summary {
        w.write_record([
            c.family.to_string(),
            c.n_sites.to_string(),
            c.window.to_string(),
            c.l.to_string(),
            c.r.to_string(),
            fmt_f(c.sigma),
            c.solver_mode.to_string(),
            c.trials.to_string(),
            c.failures.to_string(),
            fmt_opt(c.mean_d),
            fmt_opt(c.std_d),
            fmt_opt(c.stderr()),
            fmt_opt(c.min_d),
            fmt_opt(c.max_d),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(out: W, rows: &[HistogramRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["family", "N", "R", "sigma", "log10_D_lo", "log10_D_hi", "count"])?;
    for h in rows {
        w.write_record([
            h.family.to_string(),
            h.n_sites.to_string(),
            h.window.to_string(),
            fmt_f(h.sigma),
            fmt_f(h.log10_d_lo),
            fmt_f(h.log10_d_hi),
            h.count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(trials: usize) -> SweepConfig {
        SweepConfig {
            state: StateFamily::Ancilla { coupling: 0.01 },
            n_sites: vec![6],
            sigmas: vec![0.0, 1e-3],
            windows: vec![3],
            trials,
            solver: SolverMode::default(),
            master_seed: 42,
            threads: Some(2),
            record_timing: false,
            histogram_bins: 4,
            output: None,
        }
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
        assert_ne!(derive_seed(1, 0, 0), derive_seed(2, 0, 0));
        // reference value of the splitmix64 finalizer
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
    }

    #[test]
    fn exact_column_reconstructs() {
        let res = run_sweep(&small(3)).unwrap();
        assert_eq!(res.rows.len(), 6);
        let exact = res.cell(6, 3, 0.0).unwrap();
        assert!(exact.max_d.unwrap() <= 1e-8);
        let noisy = res.cell(6, 3, 1e-3).unwrap();
        assert!(noisy.mean_d.unwrap() > exact.mean_d.unwrap());
        assert_eq!(res.histogram.iter().filter(|h| h.sigma == 1e-3).map(|h| h.count).sum::<usize>(), 3);
    }

    #[test]
    fn output_is_independent_of_thread_count() {
        let mut a = small(2);
        let mut b = small(2);
        a.threads = Some(1);
        b.threads = Some(3);
        let (ra, rb) = (run_sweep(&a).unwrap(), run_sweep(&b).unwrap());
        let mut ca = Vec::new();
        let mut cb = Vec::new();
        write_trials_csv(&mut ca, &ra.rows).unwrap();
        write_trials_csv(&mut cb, &rb.rows).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn invalid_grids_are_rejected() {
        let mut c = small(1);
        c.trials = 0;
        assert!(run_sweep(&c).is_err());
        let mut c = small(1);
        c.windows = vec![7];
        assert!(run_sweep(&c).is_err());
        let mut c = small(1);
        c.state = StateFamily::CriticalIsing { beta: 1.0 };
        c.n_sites = vec![14];
        assert!(run_sweep(&c).is_err());
    }

    #[test]
    fn config_json_defaults() {
        let c: SweepConfig = serde_json::from_str(
            r#"{"state":{"family":"ancilla"},"n_sites":[6],"sigmas":[0.01],"windows":[3],"trials":2}"#,
        )
        .unwrap();
        assert_eq!(c.state, StateFamily::Ancilla { coupling: 0.01 });
        assert_eq!(c.solver, SolverMode::Tikhonov { sigma2: None });
        assert_eq!(c.histogram_bins, 20);
    }
}
