//! Figure drivers. Each run returns a [`Table`] that can be written as CSV
//! next to a JSON sidecar holding the resolved configuration.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::asymptotics::rs_of_rbd;
use crate::channel::{
    db_to_linear, domain, los_channel, mix_seed, sample_scenario, ChannelSet, Scenario, SystemParams, PRNG_ID,
};
use crate::error::{Error, Result};
use crate::exec::{mean_stderr, Execution};
use crate::linalg::CMatrix;
use crate::precoder::{
    constraint_rate, direct_link_matching, max_constraint_rate, solve_precoding, SolveMode, SolveOptions,
};
use crate::rates::{primary_rate_mc, BdSymbolSource};

/// How the BD sum-rate threshold is chosen for each channel realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    /// Use `solver.r_bd` as given.
    Fixed,
    /// A fraction of the largest achievable BD sum rate.
    FractionOfMax(f64),
    /// The BD sum rate reached by the direct-link matching precoder.
    Benchmark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub power_dbm: Vec<f64>,
    pub j: Vec<usize>,
    pub r_bd: Vec<f64>,
    /// SNR grid `P̄` in dB for the closed-form trade-off curves.
    pub pbar_db: Vec<f64>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            power_dbm: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            j: vec![1, 5, 10, 20, 50],
            r_bd: (0..=50).map(|i| i as f64 * 0.5).collect(),
            pbar_db: vec![80.0, 90.0, 100.0, 110.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub params: SystemParams,
    pub sweep: Sweep,
    pub seed: u64,
    pub replications: usize,
    pub solver: SolveOptions,
    pub threshold: Threshold,
    /// Fresh BD symbol draws for Monte Carlo primary rates.
    pub eval_samples: usize,
    /// Direct-link gain in dB for the closed-form trade-off curves.
    pub beta_hd_db: f64,
    pub output_path: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            params: SystemParams::default(),
            sweep: Sweep::default(),
            seed: 1,
            replications: 100,
            solver: SolveOptions::default(),
            threshold: Threshold::Fixed,
            eval_samples: 1000,
            beta_hd_db: -120.0,
            output_path: None,
        }
    }
}

pub const FIGURES: [u32; 6] = [2, 3, 4, 5, 6, 7];

impl ExperimentConfig {
    /// Defaults for one figure. Figures 4/5 and 6/7 share a driver.
    pub fn for_figure(id: u32) -> Result<Self> {
        let base = Self::default();
        Ok(match id {
            2 => base,
            3 => Self { threshold: Threshold::FractionOfMax(0.9), ..base },
            4 | 5 => Self { threshold: Threshold::Benchmark, ..base },
            6 | 7 => Self { eval_samples: 200, threshold: Threshold::FractionOfMax(0.9), ..base },
            _ => return Err(Error::Config(format!("unknown figure {id}; expected 2..=7"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.params.validate()?;
        self.solver.validate()?;
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if self.eval_samples == 0 {
            return Err(Error::Config("eval_samples must be at least 1".into()));
        }
        if let Threshold::FractionOfMax(f) = self.threshold {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("threshold fraction {f} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Int(u64),
    Num(f64),
    Text(String),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Int(v) => write!(f, "{v}"),
            Cell::Num(v) => write!(f, "{v}"),
            Cell::Text(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: vec![] }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn index(&self, column: &str) -> Result<usize> {
        self.columns.iter().position(|c| *c == column).ok_or_else(|| Error::Config(format!("no column {column}")))
    }

    /// Numeric column values, in row order.
    pub fn numbers(&self, column: &str) -> Result<Vec<f64>> {
        let i = self.index(column)?;
        self.rows
            .iter()
            .map(|r| match &r[i] {
                Cell::Int(v) => Ok(*v as f64),
                Cell::Num(v) => Ok(*v),
                Cell::Text(_) => Err(Error::Config(format!("column {column} is not numeric"))),
            })
            .collect()
    }

    /// Rows whose text column `column` equals `value`.
    pub fn filter(&self, column: &str, value: &str) -> Result<Table> {
        let i = self.index(column)?;
        let rows = self.rows.iter().filter(|r| matches!(&r[i], Cell::Text(t) if t == value)).cloned().collect();
        Ok(Table { columns: self.columns.clone(), rows })
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    figure: u32,
    prng: &'a str,
    version: &'a str,
    config: &'a ExperimentConfig,
}

/// Writes `table` as CSV at `path` and the configuration next to it with a
/// `.json` extension.
pub fn write_outputs(table: &Table, figure: u32, config: &ExperimentConfig, path: &Path) -> Result<PathBuf> {
    std::fs::write(path, table.to_csv()?)?;
    let sidecar = path.with_extension("json");
    let meta = Sidecar { figure, prng: PRNG_ID, version: env!("CARGO_PKG_VERSION"), config };
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    std::fs::write(&sidecar, text)?;
    Ok(sidecar)
}

pub fn run_figure(id: u32, config: &ExperimentConfig) -> Result<Table> {
    config.validate()?;
    match id {
        2 => run_fig2(config),
        3 => run_fig3(config),
        4 | 5 => run_fig4_5(config),
        6 | 7 => run_fig6_7(config),
        _ => Err(Error::Config(format!("unknown figure {id}; expected 2..=7"))),
    }
}

/// Closed-form primary rate against BD sum rate for a single-antenna PT
/// over a LoS direct link with gain `beta_hd_db`.
pub fn run_fig2(config: &ExperimentConfig) -> Result<Table> {
    let p = &config.params;
    let h_d_norm2 = db_to_linear(config.beta_hd_db) * p.m_r as f64;
    let mut table = Table::new(&["r_bd_asym", "pbar_db", "r_s_asym"]);
    for &pbar_db in &config.sweep.pbar_db {
        let pbar = db_to_linear(pbar_db);
        for &r_bd in &config.sweep.r_bd {
            if r_bd < 0.0 {
                return Err(Error::Config("r_bd sweep values must be non-negative".into()));
            }
            let r_s = rs_of_rbd(r_bd, pbar, h_d_norm2, p.m_r, p.k);
            table.push(vec![Cell::Num(r_bd), Cell::Num(pbar_db), Cell::Num(r_s)]);
        }
    }
    Ok(table)
}

/// Channel realization `rep` of a sweep, shared by every J in the sweep.
fn realization(config: &ExperimentConfig, params: &SystemParams, rep: usize) -> ChannelSet {
    sample_scenario(&config.scenario, params, mix_seed(config.seed, rep as u64))
}

/// BD sum-rate threshold for one realization.
pub fn threshold_for(
    config: &ExperimentConfig,
    ch: &ChannelSet,
    params: &SystemParams,
    opts: &SolveOptions,
) -> Result<f64> {
    Ok(match config.threshold {
        Threshold::Fixed => opts.r_bd,
        Threshold::FractionOfMax(f) => f * max_constraint_rate(ch, params, opts)?.0,
        Threshold::Benchmark => {
            let f = direct_link_matching(&ch.h_d, params.pbar(), params.m_t)?;
            constraint_rate(&(&f * f.adjoint()), ch, params)?
        }
    })
}

fn solve_with_threshold(
    config: &ExperimentConfig,
    ch: &ChannelSet,
    params: &SystemParams,
    mode: SolveMode,
    seed: u64,
) -> Result<(CMatrix, crate::precoder::SolveDiagnostics)> {
    let mut opts = SolveOptions { mode, ..config.solver.clone() };
    opts.r_bd = threshold_for(config, ch, params, &opts)?;
    solve_precoding(ch, params, &opts, seed)
}

/// Solver wall time per J and mode. Solves run one at a time so that the
/// timings are not distorted by contention.
pub fn run_fig3(config: &ExperimentConfig) -> Result<Table> {
    let mut table = Table::new(&["j", "mode", "mean_time_s", "stderr_time_s", "mean_iterations"]);
    let max_j = config.sweep.j.iter().copied().max().unwrap_or(0);
    let full = SystemParams { j: max_j, ..config.params.clone() };
    let channels: Vec<ChannelSet> = (0..config.replications).map(|r| realization(config, &full, r)).collect();
    for &j in &config.sweep.j {
        let params = SystemParams { j, ..config.params.clone() };
        for mode in [SolveMode::UpperBound, SolveMode::SampleAverage] {
            let mut times = vec![];
            let mut iters = 0.0;
            for (rep, ch) in channels.iter().enumerate() {
                let ch = ch.truncated(j);
                let start = Instant::now();
                let cfg = ExperimentConfig {
                    solver: SolveOptions { execution: Execution::Sequential, ..config.solver.clone() },
                    ..config.clone()
                };
                let (_, diag) = solve_with_threshold(&cfg, &ch, &params, mode, mix_seed(config.seed, rep as u64))?;
                times.push(start.elapsed().as_secs_f64());
                iters += diag.iterations as f64;
            }
            let (mean, se) = mean_stderr(&times);
            table.push(vec![
                Cell::Int(j as u64),
                Cell::Text(mode.name().into()),
                Cell::Num(mean),
                Cell::Num(se),
                Cell::Num(iters / times.len() as f64),
            ]);
        }
    }
    Ok(table)
}

/// Primary and BD rates against transmit power for one channel realization,
/// for both solvers and the direct-link matching benchmark.
pub fn run_fig4_5(config: &ExperimentConfig) -> Result<Table> {
    let mut table = Table::new(&["p_dbm", "scheme", "r_s", "r_s_stderr", "r_bd"]);
    let ch = realization(config, &config.params, 0);
    let seed = mix_seed(config.seed, 0);
    let eval = BdSymbolSource::new(config.params.constellation, seed).with_domain(domain::EVAL_SAMPLES);
    for &p_dbm in &config.sweep.power_dbm {
        let params = SystemParams { p_dbm, ..config.params.clone() };
        let bench = direct_link_matching(&ch.h_d, params.pbar(), params.m_t)?;
        let schemes = [
            ("sample_average", Some(SolveMode::SampleAverage)),
            ("upper_bound", Some(SolveMode::UpperBound)),
            ("direct_link", None),
        ];
        for (name, mode) in schemes {
            let q = match mode {
                Some(mode) => solve_with_threshold(config, &ch, &params, mode, seed)?.0,
                None => &bench * bench.adjoint(),
            };
            let (r_s, se) = primary_rate_mc(&ch, &q, &params, &eval, config.eval_samples)?;
            let r_bd = constraint_rate(&q, &ch, &params)?;
            table.push(vec![Cell::Num(p_dbm), Cell::Text(name.into()), Cell::Num(r_s), Cell::Num(se), Cell::Num(r_bd)]);
        }
    }
    Ok(table)
}

/// Mean primary and BD rates against J over independent realizations, with
/// the upper-bound solver.
pub fn run_fig6_7(config: &ExperimentConfig) -> Result<Table> {
    let mut table = Table::new(&["j", "mean_r_s", "stderr_r_s", "mean_r_bd", "stderr_r_bd"]);
    let max_j = config.sweep.j.iter().copied().max().unwrap_or(0);
    let full = SystemParams { j: max_j, ..config.params.clone() };
    let inner = SolveOptions { execution: Execution::Sequential, ..config.solver.clone() };
    let cfg = ExperimentConfig { solver: inner, ..config.clone() };
    for &j in &config.sweep.j {
        let params = SystemParams { j, ..config.params.clone() };
        let per_rep = config.solver.execution.map(config.replications, |rep| {
            let ch = realization(config, &full, rep).truncated(j);
            let seed = mix_seed(config.seed, rep as u64);
            let (q, _) = solve_with_threshold(&cfg, &ch, &params, SolveMode::UpperBound, seed)?;
            let eval = BdSymbolSource::new(params.constellation, seed).with_domain(domain::EVAL_SAMPLES);
            let (r_s, _) = primary_rate_mc(&ch, &q, &params, &eval, config.eval_samples)?;
            let r_bd = constraint_rate(&q, &ch, &params)?;
            Ok::<_, Error>((r_s, r_bd))
        });
        let per_rep = per_rep.into_iter().collect::<Result<Vec<_>>>()?;
        let r_s: Vec<f64> = per_rep.iter().map(|v| v.0).collect();
        let r_bd: Vec<f64> = per_rep.iter().map(|v| v.1).collect();
        let (ms, ss) = mean_stderr(&r_s);
        let (mb, sb) = mean_stderr(&r_bd);
        table.push(vec![Cell::Int(j as u64), Cell::Num(ms), Cell::Num(ss), Cell::Num(mb), Cell::Num(sb)]);
    }
    Ok(table)
}

/// The LoS direct link of a scenario, for the closed-form commands.
pub fn scenario_direct_link(config: &ExperimentConfig) -> CMatrix {
    los_channel(&config.scenario, config.params.m_t, config.params.m_r)
}
