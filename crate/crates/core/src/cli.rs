//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::asymptotics::{bd_sumrate_asym, primary_rate_asym, rs_of_rbd, simo_asym, AsymParams};
use crate::channel::{domain, sample_scenario, SystemParams};
use crate::error::{Error, Result};
use crate::experiments::{run_figure, scenario_direct_link, threshold_for, write_outputs, ExperimentConfig};
use crate::linalg::{identity, CMatrix};
use crate::precoder::{covariance_to_precoder, solve_precoding, SolveOptions};
use crate::rates::{rate_report, BdSymbolSource};

#[cfg(feature = "parallel")]
const BUILD: &str = concat!(env!("CARGO_PKG_VERSION"), " (rayon)");
#[cfg(not(feature = "parallel"))]
const BUILD: &str = concat!(env!("CARGO_PKG_VERSION"), " (sequential)");

#[derive(Parser, Debug)]
#[command(name = "symradio", version = BUILD, about = "Symbiotic radio rates, asymptotics and precoding")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON configuration file; missing keys keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file. Figures write CSV here plus a `.json` sidecar.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker thread cap (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Override one configuration value, e.g. `--set params.j=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Rate report for one channel realization under the uniform covariance.
    Rates,
    /// Large-J closed forms at the scenario's mean gains.
    Asym,
    /// Solve the rate-constrained covariance problem on one realization.
    Optimize,
    /// Regenerate the data behind one figure.
    Figure {
        /// Figure number, 2 to 7.
        #[arg(long)]
        id: u32,
    },
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_override(config: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) =
        spec.split_once('=').ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let mut slot = &mut *config;
    for part in key.split('.') {
        slot = slot
            .as_object_mut()
            .and_then(|o| o.get_mut(part))
            .ok_or_else(|| Error::Config(format!("unknown configuration key `{key}`")))?;
    }
    *slot = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok(())
}

/// Defaults, then the config file, then `--seed`, `--out` and `--set`.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let base = match cli.command {
        Command::Figure { id } => ExperimentConfig::for_figure(id)?,
        _ => ExperimentConfig::default(),
    };
    let mut value = serde_json::to_value(&base)?;
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let patch: Value =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        merge(&mut value, patch);
    }
    if let Some(seed) = cli.seed {
        value["seed"] = json!(seed);
    }
    if let Some(out) = &cli.out {
        value["output_path"] = json!(out);
    }
    for spec in &cli.overrides {
        apply_override(&mut value, spec)?;
    }
    let config: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| Error::Config(format!("configuration: {e}")))?;
    config.validate()?;
    Ok(config)
}

fn matrix_json(m: &CMatrix) -> Value {
    let rows: Vec<Value> = (0..m.nrows())
        .map(|r| Value::Array((0..m.ncols()).map(|c| json!([m[(r, c)].re, m[(r, c)].im])).collect()))
        .collect();
    Value::Array(rows)
}

fn emit(cli: &Cli, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match &cli.out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn asym_params(config: &ExperimentConfig, p: &SystemParams) -> AsymParams {
    let s = &config.scenario;
    AsymParams {
        j: p.j,
        k: p.k,
        m_t: p.m_t,
        m_r: p.m_r,
        pbar: p.pbar(),
        alpha: p.alpha,
        beta_h: s.beta_h_center(),
        beta_g: s.beta_g(),
        beta_hd: s.beta_hd(),
    }
}

fn cmd_rates(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let p = &config.params;
    let ch = sample_scenario(&config.scenario, p, config.seed);
    let f = identity(p.m_t).scale(1.0 / (p.m_t as f64).sqrt());
    let source = BdSymbolSource::new(p.constellation, config.seed).with_domain(domain::EVAL_SAMPLES);
    let report = rate_report(&ch, &f, p, &source, config.eval_samples)?;
    emit(cli, &report)
}

fn cmd_asym(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let p = &config.params;
    let ap = asym_params(config, p);
    ap.validate()?;
    let h_d = scenario_direct_link(config);
    let uniform = identity(p.m_t).scale(1.0 / p.m_t as f64);
    let r_bd = bd_sumrate_asym(&uniform, &ap);
    let (r_s, alloc, f) = primary_rate_asym(&h_d, &ap)?;
    let simo = AsymParams { m_t: 1, ..ap };
    let h_d_norm2 = ap.beta_hd * p.m_r as f64;
    let (simo_bd, simo_s) = simo_asym(&simo, h_d_norm2)?;
    let out = json!({
        "beta_h": ap.beta_h,
        "beta_g": ap.beta_g,
        "beta_hd": ap.beta_hd,
        "bd_sum_rate_uniform_bits": r_bd,
        "primary_rate_bits": r_s,
        "power_allocation": alloc.p,
        "precoder": matrix_json(&f),
        "single_antenna": {
            "bd_sum_rate_bits": simo_bd,
            "primary_rate_bits": simo_s,
            "primary_rate_from_bd_rate_bits": rs_of_rbd(simo_bd, simo.pbar, h_d_norm2, p.m_r, p.k),
        },
    });
    emit(cli, &out)
}

fn cmd_optimize(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    let p = &config.params;
    let ch = sample_scenario(&config.scenario, p, config.seed);
    let mut opts: SolveOptions = config.solver.clone();
    opts.r_bd = threshold_for(config, &ch, p, &opts)?;
    let (q, diag) = solve_precoding(&ch, p, &opts, config.seed)?;
    let (f, m_s) = covariance_to_precoder(&q, 1e-8)?;
    eprintln!("wall time: {:.3} s", diag.wall_time_s);
    let out = json!({
        "mode": opts.mode.name(),
        "r_bd_target_bits": opts.r_bd,
        "q": matrix_json(&q),
        "f": matrix_json(&f),
        "m_s": m_s,
        "diagnostics": {
            "objective_bits": diag.objective_bits,
            "constraint_bits": diag.constraint_bits,
            "mu": diag.mu,
            "iterations": diag.iterations,
            "converged": diag.converged,
        },
    });
    emit(cli, &out)
}

fn cmd_figure(id: u32, config: &ExperimentConfig) -> Result<()> {
    let table = run_figure(id, config)?;
    let path = config.output_path.clone().unwrap_or_else(|| PathBuf::from(format!("fig{id}.csv")));
    let sidecar = write_outputs(&table, id, config, &path)?;
    eprintln!("wrote {} and {}", path.display(), sidecar.display());
    Ok(())
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        crate::exec::set_threads(n).map_err(Error::Config)?;
    }
    let config = resolve_config(cli)?;
    match cli.command {
        Command::Rates => cmd_rates(cli, &config),
        Command::Asym => cmd_asym(cli, &config),
        Command::Optimize => cmd_optimize(cli, &config),
        Command::Figure { id } => cmd_figure(id, &config),
    }
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Json(_) => 2,
        Error::Infeasible { .. } => 3,
        Error::NoConvergence { .. } => 4,
        _ => 1,
    }
}

pub fn main<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
