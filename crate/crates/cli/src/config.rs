//! `key = value` run configuration. Later sources override earlier ones:
//! defaults, then the file named by `TNL_CONFIG` or `--config`, then flags.

use std::fmt;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(format!("unknown format {s:?} (expected json or csv)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub restarts: Option<usize>,
    pub max_rank: Option<usize>,
    pub family_budget: Option<usize>,
    pub grid: Option<usize>,
    pub samples: usize,
    pub budget: usize,
    pub lin_steps: usize,
    /// Overrides the per-suite tolerance tier.
    pub tolerance: Option<f64>,
    pub p: String,
    pub q: Option<String>,
    pub dims: Option<Vec<usize>>,
    pub norm: Option<String>,
    pub format: Format,
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            restarts: None,
            max_rank: None,
            family_budget: None,
            grid: None,
            samples: 12,
            budget: 16,
            lin_steps: 0,
            tolerance: None,
            p: "2".into(),
            q: None,
            dims: None,
            norm: None,
            format: Format::Json,
            out: None,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// `2x3x2` → `[2, 3, 2]`.
pub fn parse_dims(s: &str) -> Result<Vec<usize>, String> {
    let dims: Vec<usize> = s
        .split(['x', 'X'])
        .map(|d| d.trim().parse::<usize>().map_err(|_| format!("bad dims {s:?}")))
        .collect::<Result<_, _>>()?;
    if dims.contains(&0) {
        return Err(format!("bad dims {s:?}: every dimension must be positive"));
    }
    Ok(dims)
}

fn positive(key: &str, value: &str) -> Result<usize, String> {
    match value.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("{key} must be a positive integer, got {value:?}")),
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        match key {
            "seed" => self.seed = value.parse().map_err(|_| format!("bad seed {value:?}"))?,
            "restarts" => self.restarts = Some(positive(key, value)?),
            "max_rank" => self.max_rank = Some(positive(key, value)?),
            "family_budget" => self.family_budget = Some(positive(key, value)?),
            "grid" => self.grid = Some(positive(key, value)?),
            "samples" => self.samples = positive(key, value)?,
            "budget" => self.budget = positive(key, value)?,
            "lin_steps" => self.lin_steps = value.parse().map_err(|_| format!("bad lin_steps {value:?}"))?,
            "tolerance" => match value.parse::<f64>() {
                Ok(t) if t.is_finite() && t >= 0.0 => self.tolerance = Some(t),
                _ => return Err(format!("bad tolerance {value:?}")),
            },
            "p" => self.p = value.into(),
            "q" => self.q = Some(value.into()),
            "dims" => self.dims = Some(parse_dims(value)?),
            "norm" => self.norm = Some(value.into()),
            "format" => self.format = value.parse()?,
            "out" => self.out = Some(value.into()),
            _ => return Err(format!("unknown config key {key:?}")),
        }
        Ok(())
    }

    /// Applies every `key = value` line; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| ConfigError(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text)
    }
}
