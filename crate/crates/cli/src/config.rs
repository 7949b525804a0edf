use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use aro_split::routeplan::ExperimentConfig;
use aro_split::splitter::SplitConfig;
use aro_split::Tolerances;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    RppExperiment,
    Verify,
}

/// Everything a run needs. Loaded from a TOML file, then overridden field by
/// field from the command line.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub input: Option<PathBuf>,
    pub seed: u64,
    pub max_cells: usize,
    pub max_rounds: usize,
    pub n: Vec<usize>,
    pub b: Vec<f64>,
    pub theta: Vec<f64>,
    pub instances: usize,
    pub target_cells: Vec<usize>,
    pub parallel: bool,
    pub out: Option<PathBuf>,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        let s = SplitConfig::default();
        Self {
            command: None,
            input: None,
            seed: e.seed,
            max_cells: s.max_cells,
            max_rounds: s.max_rounds,
            n: e.n_values,
            b: e.budgets,
            theta: e.thetas,
            instances: e.instances,
            target_cells: e.target_cells,
            parallel: e.parallel,
            out: None,
            tolerances: Tolerances::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.max_cells == 0 {
            bail!("max_cells must be positive");
        }
        if self.instances == 0 {
            bail!("instances must be positive");
        }
        if self.n.iter().any(|n| *n < 4) {
            bail!("every N must be at least 4");
        }
        if self.b.iter().any(|b| *b <= 0.0) {
            bail!("every B must be positive");
        }
        if self.theta.iter().any(|t| !(0.0..=1.0).contains(t)) {
            bail!("every theta must lie in [0, 1]");
        }
        if self.target_cells.is_empty() || self.target_cells.contains(&0) {
            bail!("target_cells must be a nonempty list of positive counts");
        }
        let t = &self.tolerances;
        let all = [
            t.feas,
            t.gap,
            t.pivot,
            t.integrality,
            t.lambda_threshold,
            t.active,
            t.dedup,
        ];
        if all.iter().any(|v| v.is_nan() || *v <= 0.0) {
            bail!("tolerances must be positive");
        }
        if let Some(input) = &self.input {
            if !input.exists() {
                bail!("input {} does not exist", input.display());
            }
        }
        Ok(())
    }

    pub fn split(&self) -> SplitConfig {
        SplitConfig {
            max_cells: self.max_cells,
            max_rounds: self.max_rounds,
            ..SplitConfig::default()
        }
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            n_values: self.n.clone(),
            budgets: self.b.clone(),
            thetas: self.theta.clone(),
            instances: self.instances,
            seed: self.seed,
            target_cells: self.target_cells.clone(),
            max_rounds: self.max_rounds,
            parallel: self.parallel,
            ..ExperimentConfig::default()
        }
    }
}
