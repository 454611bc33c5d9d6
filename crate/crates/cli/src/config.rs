use std::path::{Path, PathBuf};

use qtraits_core::eval::{GridSpec, SplitSpec};
use qtraits_core::{Encoding, IrtConfig};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

/// Everything a pipeline run depends on. Loadable from JSON; missing fields
/// take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub interactions: Option<PathBuf>,
    pub questions: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub irt: IrtConfig,
    pub split: SplitSpec,
    pub grid: GridSpec,
    /// Restricts the grid to one encoding.
    pub encoding: Option<Encoding>,
    /// Restricts the grid to one vocabulary size.
    pub n_w: Option<usize>,
    pub k_folds: usize,
    /// Items answered by fewer distinct students are dropped.
    pub min_students: usize,
    pub threshold: f64,
    /// Seed for folds and model fitting.
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            interactions: None,
            questions: None,
            output_dir: PathBuf::from("run"),
            irt: IrtConfig::default(),
            split: SplitSpec::default(),
            grid: GridSpec::default(),
            encoding: None,
            n_w: None,
            k_folds: 5,
            min_students: 1,
            threshold: 0.5,
            seed: 0,
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// The grid after applying the single-encoding / single-N_W overrides.
    pub fn effective_grid(&self) -> GridSpec {
        let mut g = self.grid.clone();
        if let Some(e) = self.encoding {
            g.encodings = vec![e];
        }
        if let Some(n) = self.n_w {
            g.n_ws = vec![n];
        }
        g
    }

    pub fn validate(&self) -> CliResult<()> {
        self.irt.validate()?;
        self.split.validate()?;
        let g = self.effective_grid();
        if g.models.is_empty() || g.encodings.is_empty() || g.n_ws.is_empty() {
            return Err(CliError::Usage("model grid is empty".into()));
        }
        if g.n_ws.contains(&0) {
            return Err(CliError::Usage("n_w must be >= 1".into()));
        }
        if self.k_folds < 2 {
            return Err(CliError::Usage("k_folds must be >= 2".into()));
        }
        if self.min_students < 1 {
            return Err(CliError::Usage("min_students must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CliError::Usage("threshold must lie in [0, 1]".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Usage("workers must be >= 1".into()));
        }
        Ok(())
    }

    pub fn require_inputs(&self) -> CliResult<(&Path, &Path)> {
        match (&self.interactions, &self.questions) {
            (Some(i), Some(q)) => Ok((i, q)),
            _ => Err(CliError::Usage(
                "both an interactions file and a question bank are required".into(),
            )),
        }
    }
}
