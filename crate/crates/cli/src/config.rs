//! Flat `key = value` run configuration.

use std::path::PathBuf;
use std::str::FromStr;

use cvmdi_core::integration::MC_MIN_SAMPLES;
use cvmdi_core::optimize::{at_distance, DEFAULT_RATE_FLOOR};
use cvmdi_core::{GridSpec, ProtocolParams};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("expected csv or json, got '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ProtocolParams,
    pub grid: GridSpec,
    /// Total distance for single-point commands; unset keeps `tau_a`, `tau_b`.
    pub distance_km: Option<f64>,
    pub distances_km: Vec<f64>,
    pub alice_km: Vec<f64>,
    pub symmetric: bool,
    pub rate_floor: f64,
    pub seed: u64,
    pub n_samples: usize,
    pub warm_start: bool,
    pub output: Option<PathBuf>,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ProtocolParams::default(),
            grid: GridSpec::default(),
            distance_km: None,
            distances_km: Vec::new(),
            alice_km: Vec::new(),
            symmetric: true,
            rate_floor: DEFAULT_RATE_FLOOR,
            seed: 1,
            n_samples: 1_000_000,
            warm_start: true,
            output: None,
            format: Format::Csv,
        }
    }
}

/// Where a setting came from, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override,
}

fn parse<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("cannot parse '{v}': {e}"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected on/off, got '{v}'")),
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(parse::<f64>)
        .collect()
}

fn show_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn on_off(b: bool) -> String {
    if b { "on" } else { "off" }.to_string()
}

impl RunConfig {
    /// Every key in canonical order with a value that parses back to the
    /// same setting.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let p = &self.params;
        let g = &self.grid;
        vec![
            ("scenario", p.scenario.name().to_string()),
            ("detector_model", p.detector_model.name().to_string()),
            ("beta_mode", p.beta_mode.name().to_string()),
            ("tau_a", p.tau_a.to_string()),
            ("tau_b", p.tau_b.to_string()),
            ("eps_a", p.eps_a.to_string()),
            ("eps_b", p.eps_b.to_string()),
            ("eta", p.eta.to_string()),
            ("s_det", p.s_det.to_string()),
            ("sigma_a", p.sigma_a.to_string()),
            ("sigma_b", p.sigma_b.to_string()),
            ("mu", p.mu.to_string()),
            ("beta_rec", p.beta_rec.to_string()),
            ("n_a", g.n_a.to_string()),
            ("n_b", g.n_b.to_string()),
            ("n_g", g.n_g.to_string()),
            ("cutoff_sigmas", g.cutoff_sigmas.to_string()),
            ("distance_km", self.distance_km.map(|d| d.to_string()).unwrap_or_default()),
            ("distances_km", show_list(&self.distances_km)),
            ("alice_km", show_list(&self.alice_km)),
            ("symmetric", on_off(self.symmetric)),
            ("rate_floor", self.rate_floor.to_string()),
            ("seed", self.seed.to_string()),
            ("n_samples", self.n_samples.to_string()),
            ("warm_start", on_off(self.warm_start)),
            ("output", self.output.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
            ("format", self.format.name().to_string()),
        ]
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), String> {
        let p = &mut self.params;
        let g = &mut self.grid;
        match key {
            "scenario" => p.scenario = value.parse().map_err(|e| format!("{e}"))?,
            "detector_model" => p.detector_model = value.parse().map_err(|e| format!("{e}"))?,
            "beta_mode" => p.beta_mode = value.parse().map_err(|e| format!("{e}"))?,
            "tau_a" => p.tau_a = parse(value)?,
            "tau_b" => p.tau_b = parse(value)?,
            "eps_a" => p.eps_a = parse(value)?,
            "eps_b" => p.eps_b = parse(value)?,
            "eta" => p.eta = parse(value)?,
            "s_det" => p.s_det = parse(value)?,
            "sigma_a" => p.sigma_a = parse(value)?,
            "sigma_b" => p.sigma_b = parse(value)?,
            "mu" => p.mu = parse(value)?,
            "beta_rec" => p.beta_rec = parse(value)?,
            "n_a" => g.n_a = parse(value)?,
            "n_b" => g.n_b = parse(value)?,
            "n_g" => g.n_g = parse(value)?,
            "cutoff_sigmas" => g.cutoff_sigmas = parse(value)?,
            "distance_km" => {
                self.distance_km = if value.is_empty() { None } else { Some(parse(value)?) }
            }
            "distances_km" => self.distances_km = parse_list(value)?,
            "alice_km" => self.alice_km = parse_list(value)?,
            "symmetric" => self.symmetric = parse_bool(value)?,
            "rate_floor" => self.rate_floor = parse(value)?,
            "seed" => self.seed = parse(value)?,
            "n_samples" => self.n_samples = parse(value)?,
            "warm_start" => self.warm_start = parse_bool(value)?,
            "output" => self.output = (!value.is_empty()).then(|| PathBuf::from(value)),
            "format" => self.format = parse(value)?,
            _ => return Err("unknown key".to_string()),
        }
        Ok(())
    }

    /// Applies one setting, reporting the key and origin on failure.
    pub fn set(&mut self, key: &str, value: &str, origin: Origin) -> Result<(), CliError> {
        self.apply(key, value).map_err(|message| CliError::Config {
            line: match origin {
                Origin::Line(n) => Some(n),
                Origin::Override => None,
            },
            key: Some(key.to_string()),
            message,
        })
    }

    /// Applies a config file body on top of `self`.
    pub fn merge_text(&mut self, text: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Config {
                    line: Some(i + 1),
                    key: None,
                    message: format!("expected 'key = value', got '{line}'"),
                });
            };
            self.set(k.trim(), v.trim(), Origin::Line(i + 1))?;
        }
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn merge_override(&mut self, kv: &str) -> Result<(), CliError> {
        let Some((k, v)) = kv.split_once('=') else {
            return Err(CliError::Config { line: None, key: None, message: format!("override '{kv}' is not key=value") });
        };
        self.set(k.trim(), v.trim(), Origin::Override)
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut c = Self::default();
        c.merge_text(text)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let field = |key: &str, message: String| CliError::Config { line: None, key: Some(key.to_string()), message };
        let invalid = |e: cvmdi_core::Error| CliError::Config { line: None, key: None, message: e.to_string() };
        self.params.validate().map_err(invalid)?;
        self.grid.validate().map_err(invalid)?;
        if !(self.rate_floor > 0.0 && self.rate_floor.is_finite()) {
            return Err(field("rate_floor", format!("must be > 0, got {}", self.rate_floor)));
        }
        if self.n_samples < MC_MIN_SAMPLES {
            return Err(field("n_samples", format!("must be >= {MC_MIN_SAMPLES}, got {}", self.n_samples)));
        }
        for (key, list) in [("distances_km", &self.distances_km), ("alice_km", &self.alice_km)] {
            if let Some(d) = list.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
                return Err(field(key, format!("distances must be finite and >= 0, got {d}")));
            }
        }
        if let Some(d) = self.distance_km {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(field("distance_km", format!("must be finite and >= 0, got {d}")));
            }
        }
        Ok(())
    }

    /// Protocol parameters for single-point commands.
    pub fn point_params(&self) -> Result<ProtocolParams, CliError> {
        match self.distance_km {
            Some(d) => Ok(at_distance(&self.params, d, self.symmetric)?),
            None => Ok(self.params),
        }
    }
}
