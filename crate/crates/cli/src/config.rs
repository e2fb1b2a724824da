//! Plain-text `key = value` configuration with dotted keys.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default, so an empty file is a valid configuration.

use std::fmt::Write as _;
use std::path::Path;

use kinklab::harness::Perturbation;
use kinklab::{ForcingFamily, ParamWindow, RunConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config '{path}': {reason}")]
    Unreadable { path: String, reason: String },
    #[error("line {line}: expected 'key = value', got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("bad value for '{key}': {reason}")]
    BadValue { key: String, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Keys with their one-line documentation, in canonical order.
pub const KEYS: &[(&str, &str)] = &[
    ("grid.half_width", "domain is [-half_width, half_width]"),
    ("grid.dx", "grid spacing"),
    ("evolve.dt", "time step"),
    ("evolve.t_end", "final time for simulate (sweep uses 1/eps)"),
    ("evolve.diag_stride", "steps between diagnostics"),
    ("evolve.cfl_guard", "largest allowed dt/dx"),
    ("forcing.family", "zero | gaussian | sech2"),
    ("forcing.amplitude", "profile amplitude A"),
    ("forcing.width", "profile width sigma"),
    ("run.eps", "forcing scale eps"),
    ("run.seed", "seed for the random perturbation"),
    ("initial.xi", "initial soliton position"),
    ("initial.u", "initial soliton velocity"),
    ("window.u_max", "velocity window bound U in (0, 1)"),
    ("perturbation.kind", "none | random_bump"),
    ("decompose.tol", "Newton tolerance on the orthogonality residual"),
    ("decompose.max_iter", "Newton iteration cap"),
    ("decompose.max_condition", "largest accepted Jacobian condition number"),
    ("decompose.max_halvings", "step halvings per Newton iteration"),
    ("monitor.boundary_tol", "largest deviation from the asymptotes at the boundary nodes"),
    ("sweep.eps", "comma-separated, strictly decreasing eps values"),
    ("ode.cbar", "injected error size in units of eps^(3/4)"),
    ("ode.ds", "step in rescaled time"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub run: RunConfig,
    pub sweep_eps: Vec<f64>,
    pub ode_cbar: f64,
    pub ode_ds: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Self { run: RunConfig::default(), sweep_eps: vec![0.2, 0.1, 0.05], ode_cbar: 1.0, ode_ds: 1e-3 }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue { key: key.into(), reason: format!("'{value}': {e}") })
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let (key, v) = (key.trim(), value.trim());
        let r = &mut self.run;
        match key {
            "grid.half_width" => r.grid.half_width = parse(key, v)?,
            "grid.dx" => r.grid.dx = parse(key, v)?,
            "evolve.dt" => r.evolve.dt = parse(key, v)?,
            "evolve.t_end" => r.evolve.t_end = parse(key, v)?,
            "evolve.diag_stride" => r.evolve.diag_stride = parse(key, v)?,
            "evolve.cfl_guard" => r.evolve.cfl_guard = parse(key, v)?,
            "forcing.family" => r.forcing.family = parse::<ForcingFamily>(key, v)?,
            "forcing.amplitude" => r.forcing.amplitude = parse(key, v)?,
            "forcing.width" => r.forcing.width = parse(key, v)?,
            "run.eps" => r.forcing.epsilon = parse(key, v)?,
            "run.seed" => r.seed = parse(key, v)?,
            "initial.xi" => r.initial.xi = parse(key, v)?,
            "initial.u" => r.initial.u = parse(key, v)?,
            "window.u_max" => {
                r.window = ParamWindow::new(parse(key, v)?)
                    .map_err(|e| ConfigError::BadValue { key: key.into(), reason: e.to_string() })?
            }
            "perturbation.kind" => r.perturbation = parse::<Perturbation>(key, v)?,
            "decompose.tol" => r.decompose.tol = parse(key, v)?,
            "decompose.max_iter" => r.decompose.max_iter = parse(key, v)?,
            "decompose.max_condition" => r.decompose.max_condition = parse(key, v)?,
            "decompose.max_halvings" => r.decompose.max_halvings = parse(key, v)?,
            "monitor.boundary_tol" => r.boundary_tol = parse(key, v)?,
            "sweep.eps" => {
                self.sweep_eps = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            "ode.cbar" => self.ode_cbar = parse(key, v)?,
            "ode.ds" => self.ode_ds = parse(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let r = &self.run;
        Some(match key {
            "grid.half_width" => r.grid.half_width.to_string(),
            "grid.dx" => r.grid.dx.to_string(),
            "evolve.dt" => r.evolve.dt.to_string(),
            "evolve.t_end" => r.evolve.t_end.to_string(),
            "evolve.diag_stride" => r.evolve.diag_stride.to_string(),
            "evolve.cfl_guard" => r.evolve.cfl_guard.to_string(),
            "forcing.family" => r.forcing.family.to_string(),
            "forcing.amplitude" => r.forcing.amplitude.to_string(),
            "forcing.width" => r.forcing.width.to_string(),
            "run.eps" => r.forcing.epsilon.to_string(),
            "run.seed" => r.seed.to_string(),
            "initial.xi" => r.initial.xi.to_string(),
            "initial.u" => r.initial.u.to_string(),
            "window.u_max" => r.window.u_max().to_string(),
            "perturbation.kind" => r.perturbation.to_string(),
            "decompose.tol" => r.decompose.tol.to_string(),
            "decompose.max_iter" => r.decompose.max_iter.to_string(),
            "decompose.max_condition" => r.decompose.max_condition.to_string(),
            "decompose.max_halvings" => r.decompose.max_halvings.to_string(),
            "monitor.boundary_tol" => r.boundary_tol.to_string(),
            "sweep.eps" => self.sweep_eps.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            "ode.cbar" => self.ode_cbar.to_string(),
            "ode.ds" => self.ode_ds.to_string(),
            _ => return None,
        })
    }

    /// Applies every `key = value` line of `text` in order.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: line.into() })?;
            if k.trim().is_empty() {
                return Err(ConfigError::Syntax { line: i + 1, text: line.into() });
            }
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Unreadable { path: path.display().to_string(), reason: e.to_string() })?;
        let mut s = Self::default();
        s.apply_text(&text)?;
        Ok(s)
    }

    /// Applies a `KEY=VALUE` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), ConfigError> {
        let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax { line: 0, text: kv.into() })?;
        self.set(k, v)
    }

    /// Checks the single-run settings.
    pub fn validate_run(&self) -> Result<(), ConfigError> {
        self.run.validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Checks the settings used by a sweep; `evolve.t_end` is replaced by `1/eps` per run.
    pub fn validate_sweep(&self) -> Result<(), ConfigError> {
        for &e in &self.sweep_eps {
            let mut c = self.run;
            c.forcing.epsilon = e;
            c.evolve.t_end = 1.0 / e;
            c.validate().map_err(|err| ConfigError::Invalid(format!("sweep.eps = {e}: {err}")))?;
        }
        Ok(())
    }

    pub fn validate_ode(&self) -> Result<(), ConfigError> {
        self.run.forcing.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.run.forcing.epsilon > 0.0) {
            return Err(ConfigError::Invalid(format!("run.eps must be positive, got {}", self.run.forcing.epsilon)));
        }
        if !(self.ode_cbar.is_finite() && self.ode_cbar >= 0.0) {
            return Err(ConfigError::Invalid(format!("ode.cbar must be finite and non-negative, got {}", self.ode_cbar)));
        }
        if !(self.ode_ds > 0.0 && self.ode_ds <= 0.5) {
            return Err(ConfigError::Invalid(format!("ode.ds must lie in (0, 0.5], got {}", self.ode_ds)));
        }
        Ok(())
    }

    /// The fully resolved configuration in the file format, with comments.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, doc) in KEYS {
            let _ = writeln!(out, "# {doc}\n{k} = {}", self.get(k).expect("listed key"));
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let map = KEYS
            .iter()
            .map(|(k, _)| {
                let v = self.get(k).expect("listed key");
                let j = if let Ok(n) = v.parse::<i64>() {
                    serde_json::json!(n)
                } else {
                    match v.parse::<f64>() {
                        Ok(x) if x.is_finite() => serde_json::json!(x),
                        _ => serde_json::Value::String(v),
                    }
                };
                (k.to_string(), j)
            })
            .collect();
        serde_json::Value::Object(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_round_trips() {
        let s = Settings::default();
        for (k, _) in KEYS {
            let mut t = Settings::default();
            t.set(k, &s.get(k).unwrap()).unwrap();
            assert_eq!(t, s, "{k}");
        }
    }

    #[test]
    fn rendered_config_parses_back() {
        let mut s = Settings::default();
        s.apply_text("grid.dx = 0.01\nforcing.family = sech2\nsweep.eps = 0.3, 0.2,0.1\n").unwrap();
        let mut t = Settings::default();
        t.apply_text(&s.render()).unwrap();
        assert_eq!(s, t);
    }

    #[test]
    fn last_writer_wins() {
        let mut s = Settings::default();
        s.apply_text("run.eps = 0.2\n# comment\n\nrun.eps = 0.05").unwrap();
        s.apply_override("run.eps=0.1").unwrap();
        assert_eq!(s.run.forcing.epsilon, 0.1);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let mut s = Settings::default();
        assert!(matches!(s.set("grid.dy", "1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(s.set("grid.dx", "abc"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(s.set("window.u_max", "1.5"), Err(ConfigError::BadValue { .. })));
        assert!(matches!(s.apply_text("grid.dx 0.1"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(s.apply_override("run.eps"), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn validation_catches_inconsistent_settings() {
        let mut s = Settings::default();
        s.set("evolve.dt", "0.05").unwrap();
        assert!(matches!(s.validate_run(), Err(ConfigError::Invalid(_))));
    }
}
