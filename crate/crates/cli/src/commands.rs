//! Subcommand drivers. Each returns a table without run metadata; [`run`]
//! adds the metadata block.

use cvmdi_core::integration::{montecarlo, rate_pair};
use cvmdi_core::optimize::{asymmetric_frontier, distance_sweep, optimal_param_sweep, FreeParams};
use cvmdi_core::{DetectorModel, ProtocolParams};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::table::{Cell, ResultTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Rate,
    Sweep,
    Frontier,
    Oracle,
    Optparams,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Rate => "rate",
            Command::Sweep => "sweep",
            Command::Frontier => "frontier",
            Command::Oracle => "oracle",
            Command::Optparams => "optparams",
        }
    }
}

/// Default window of the optimal-parameter table.
pub const OPTPARAMS_WINDOW_KM: [f64; 6] = [10.0, 12.0, 14.0, 16.0, 18.0, 20.0];

pub fn cmd_rate(cfg: &RunConfig) -> Result<ResultTable, CliError> {
    let p = cfg.point_params()?;
    let (raw, ps) = rate_pair(&p, &cfg.grid)?;
    let mut t = ResultTable::new(&["tau_a", "tau_b", "raw_rate", "ps_rate", "ps_mass", "n_evals"]);
    t.push(vec![
        Cell::Float(p.tau_a),
        Cell::Float(p.tau_b),
        Cell::Float(raw.value),
        Cell::Float(ps.value),
        Cell::Float(ps.ps_mass),
        Cell::Int(ps.n_evals),
    ]);
    Ok(t)
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<ResultTable, CliError> {
    if cfg.distances_km.is_empty() {
        return Err(CliError::Usage("sweep needs a non-empty distances_km list".into()));
    }
    let rows = distance_sweep(&cfg.params, &cfg.distances_km, cfg.symmetric, &cfg.grid, cfg.warm_start)?;
    let [n0, n1] = FreeParams::for_params(&cfg.params).names();
    let mut t = ResultTable::new(&["distance_km", "ps_rate", n0, n1, "n_evals"]);
    for r in rows {
        t.push(vec![
            Cell::Float(r.distance_km),
            Cell::Float(r.best_rate),
            Cell::Float(r.best_params[0]),
            Cell::Float(r.best_params[1]),
            Cell::Int(r.n_evals as u64),
        ]);
    }
    Ok(t)
}

pub fn cmd_frontier(cfg: &RunConfig) -> Result<ResultTable, CliError> {
    if cfg.alice_km.is_empty() {
        return Err(CliError::Usage("frontier needs a non-empty alice_km list".into()));
    }
    let rows = asymmetric_frontier(&cfg.params, &cfg.alice_km, cfg.rate_floor, &cfg.grid)?;
    let mut t = ResultTable::new(&["alice_km", "max_bob_km"]);
    for r in rows {
        t.push(vec![Cell::Float(r.alice_km), r.max_bob_km.map_or(Cell::Missing, Cell::Float)]);
    }
    Ok(t)
}

pub fn cmd_oracle(cfg: &RunConfig) -> Result<ResultTable, CliError> {
    let p = cfg.point_params()?;
    let (raw, ps) = rate_pair(&p, &cfg.grid)?;
    let mc = montecarlo(&p, cfg.n_samples, cfg.seed)?;
    let z = |quad: f64, est: f64, se: f64| if se > 0.0 { (quad - est) / se } else if quad == est { 0.0 } else { f64::INFINITY };
    let mut t = ResultTable::new(&[
        "quad_ps_rate",
        "mc_ps_rate",
        "mc_ps_std_err",
        "ps_z",
        "quad_raw_rate",
        "mc_raw_rate",
        "mc_raw_std_err",
        "raw_z",
        "n_samples",
    ]);
    t.push(vec![
        Cell::Float(ps.value),
        Cell::Float(mc.ps.value),
        Cell::Float(mc.ps.std_err),
        Cell::Float(z(ps.value, mc.ps.value, mc.ps.std_err)),
        Cell::Float(raw.value),
        Cell::Float(mc.raw.value),
        Cell::Float(mc.raw.std_err),
        Cell::Float(z(raw.value, mc.raw.value, mc.raw.std_err)),
        Cell::Int(mc.ps.n_evals),
    ]);
    Ok(t)
}

/// Pure-loss channel with ideal detection and reconciliation, other
/// settings as configured.
pub fn ideal_regime(p: &ProtocolParams) -> ProtocolParams {
    ProtocolParams {
        eps_a: 0.0,
        eps_b: 0.0,
        eta: 1.0,
        s_det: 1.0,
        beta_rec: 1.0,
        detector_model: DetectorModel::Untrusted,
        ..*p
    }
}

pub fn cmd_optparams(cfg: &RunConfig) -> Result<ResultTable, CliError> {
    if !cfg.params.scenario.is_restricted() {
        return Err(CliError::Usage("optparams needs a restricted scenario".into()));
    }
    let window = if cfg.distances_km.is_empty() { OPTPARAMS_WINDOW_KM.to_vec() } else { cfg.distances_km.clone() };
    let ideal = optimal_param_sweep(&ideal_regime(&cfg.params), &window, &cfg.grid, cfg.warm_start)?;
    let configured = optimal_param_sweep(&cfg.params, &window, &cfg.grid, cfg.warm_start)?;
    let mut t = ResultTable::new(&[
        "distance_km",
        "sigma_a_ideal",
        "mu_ideal",
        "rate_ideal",
        "sigma_a_configured",
        "mu_configured",
        "rate_configured",
    ]);
    for (i, c) in ideal.iter().zip(&configured) {
        t.push(vec![
            Cell::Float(i.distance_km),
            Cell::Float(i.best_params[0]),
            Cell::Float(i.best_params[1]),
            Cell::Float(i.best_rate),
            Cell::Float(c.best_params[0]),
            Cell::Float(c.best_params[1]),
            Cell::Float(c.best_rate),
        ]);
    }
    Ok(t)
}

/// Validates the config, runs `cmd` and attaches the metadata block.
pub fn run(cmd: Command, cfg: &RunConfig, timestamp: &str) -> Result<ResultTable, CliError> {
    cfg.validate()?;
    let mut t = match cmd {
        Command::Rate => cmd_rate(cfg)?,
        Command::Sweep => cmd_sweep(cfg)?,
        Command::Frontier => cmd_frontier(cfg)?,
        Command::Oracle => cmd_oracle(cfg)?,
        Command::Optparams => cmd_optparams(cfg)?,
    };
    t.meta("command", cmd.name());
    t.meta("version", env!("CARGO_PKG_VERSION"));
    t.meta("timestamp", timestamp);
    t.meta("seed", cfg.seed.to_string());
    for (k, v) in cfg.pairs() {
        t.meta(&format!("config.{k}"), v);
    }
    Ok(t)
}
