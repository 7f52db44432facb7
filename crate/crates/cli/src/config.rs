//! Config file loading and command-line overrides.

use std::path::{Path, PathBuf};

use knockoff::simulate::{ExperimentConfig, MethodSpec};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::Failure;

/// Values given on the command line that take precedence over the file.
#[derive(Debug, Clone)]
pub struct Overrides {
    pub path: PathBuf,
    pub seed: Option<u64>,
    pub q: Option<f64>,
    pub trials: Option<usize>,
}

impl Overrides {
    pub fn new(path: &Path, seed: Option<u64>, q: Option<f64>, trials: Option<usize>) -> Self {
        Self {
            path: path.to_path_buf(),
            seed,
            q,
            trials,
        }
    }

    fn apply_q(&self, methods: &mut [MethodSpec]) {
        if let Some(q) = self.q {
            for m in methods {
                m.params.q = q;
            }
        }
    }
}

/// Input files for `run`. Relative paths are resolved against the config
/// file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub design: PathBuf,
    pub response: PathBuf,
    /// True coefficients, one per line; enables scoring.
    #[serde(default)]
    pub beta: Option<PathBuf>,
    /// Indices counted by restricted power (default: the whole support).
    #[serde(default)]
    pub strong: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub data: DataFiles,
    pub methods: Vec<MethodSpec>,
}

fn parse<T: DeserializeOwned>(ov: &Overrides) -> Result<T, Failure> {
    let text = knockoff::io::read_text(&ov.path)?;
    let table: toml::Table = text
        .parse()
        .map_err(|e| Failure::Config(format!("{}: {e}", ov.path.display())))?;
    if ov.seed.is_none() && !table.contains_key("seed") {
        return Err(Failure::Config(format!(
            "{}: no seed given (set `seed` in the file or pass --seed)",
            ov.path.display()
        )));
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e| Failure::Config(format!("{}: {e}", ov.path.display())))
}

pub fn load_experiment(ov: &Overrides) -> Result<ExperimentConfig, Failure> {
    let mut cfg: ExperimentConfig = parse(ov)?;
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(t) = ov.trials {
        cfg.trials = t;
    }
    ov.apply_q(&mut cfg.methods);
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_run(ov: &Overrides) -> Result<RunConfig, Failure> {
    let mut cfg: RunConfig = parse(ov)?;
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    ov.apply_q(&mut cfg.methods);
    let base = ov.path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &mut PathBuf| {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    };
    resolve(&mut cfg.data.design);
    resolve(&mut cfg.data.response);
    if let Some(b) = cfg.data.beta.as_mut() {
        resolve(b);
    }
    Ok(cfg)
}
