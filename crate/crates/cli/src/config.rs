//! TOML run configuration. Every key is optional; command-line flags win over
//! the file, and the file wins over built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chronoface::dating::Model;
use chronoface::dist::YearSupport;
use chronoface::priors::PriorKind;
use chronoface::synthetic::WorldSpec;
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Inclusive `[first, last]` year range.
    pub support: Option<[i32; 2]>,
    /// Expected embedding dimension; checked against loaded artifacts.
    pub dim: Option<usize>,
    pub coverage: Option<f64>,
    pub k_max: Option<usize>,
    pub assignment_cap: Option<usize>,
    pub prior: Option<PriorKind>,
    pub lambda: Option<f64>,
    pub prior_stats: Option<PathBuf>,
    pub open_set: Option<bool>,
    pub model: Option<Model>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub emit_posterior: Option<bool>,
    /// Overrides for the synthetic world spec.
    pub synth: Option<toml::Table>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config: Config =
            toml::from_str(&text).with_context(|| format!("config {}", path.display()))?;
        if let Some(p) = &config.prior_stats {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    config.prior_stats = Some(dir.join(p));
                }
            }
        }
        config
            .validate()
            .with_context(|| format!("config {}", path.display()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some([a, b]) = self.support {
            YearSupport::new(a, b)?;
        }
        if let Some(d) = self.dim {
            if d < 2 {
                bail!("dim {d} is below 2");
            }
        }
        if let Some(c) = self.coverage {
            check_coverage(c)?;
        }
        if self.k_max == Some(0) {
            bail!("k_max must be positive");
        }
        if self.assignment_cap == Some(0) {
            bail!("assignment_cap must be positive");
        }
        if let Some(l) = self.lambda {
            check_lambda(l)?;
        }
        if self.workers == Some(0) {
            bail!("workers must be positive");
        }
        if self.synth.is_some() {
            self.world_spec(None)?;
        }
        Ok(())
    }

    pub fn support(&self) -> Result<YearSupport> {
        match self.support {
            Some([a, b]) => Ok(YearSupport::new(a, b)?),
            None => Ok(YearSupport::default()),
        }
    }

    /// Default spec, then `dim` and the `[synth]` table, then `overrides`.
    pub fn world_spec(&self, overrides: Option<serde_json::Value>) -> Result<WorldSpec> {
        let mut value = serde_json::to_value(WorldSpec::default())?;
        if let Some(d) = self.dim {
            value["dim"] = d.into();
        }
        if let Some(table) = &self.synth {
            merge(&mut value, serde_json::to_value(table)?).context("synth section")?;
        }
        if let Some(o) = overrides {
            merge(&mut value, o).context("world spec")?;
        }
        let spec: WorldSpec = serde_json::from_value(value).context("world spec")?;
        spec.validate()?;
        Ok(spec)
    }
}

fn merge(base: &mut serde_json::Value, top: serde_json::Value) -> Result<()> {
    let serde_json::Value::Object(top) = top else {
        bail!("expected a table of world spec keys");
    };
    let base = base.as_object_mut().expect("spec serializes as an object");
    for (k, v) in top {
        base.insert(k, v);
    }
    Ok(())
}

pub fn check_coverage(c: f64) -> Result<()> {
    if !(c > 0.0 && c <= 1.0) {
        bail!("coverage {c} is outside (0, 1]");
    }
    Ok(())
}

pub fn check_lambda(l: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&l) {
        bail!("lambda {l} is outside [0, 1]");
    }
    Ok(())
}

/// Loads the explicit config path, falling back to nothing.
pub fn resolve(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}
