use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{manifest_for, prepare_output_dir};
use crate::error::{Error, Result};
use crate::simgen::{gen_sim_dataset, random_truth_model, write_sim_dataset, SimDataset, TruthSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub truth: TruthSpec,
    pub n_signals: usize,
    pub windows_per_signal: usize,
    pub beta: f64,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            truth: TruthSpec::default(),
            n_signals: 2000,
            windows_per_signal: 4,
            beta: 1.0,
            seed: 0,
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_signals == 0 || self.windows_per_signal == 0 {
            return Err(Error::param("n_signals", "signals and windows per signal must be >= 1"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::param("beta", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Draws a truth model and a labeled dataset and writes it into `out`.
pub fn run_simulate(cfg: &SimulateConfig, out: &Path) -> Result<SimDataset> {
    cfg.validate()?;
    let truth = random_truth_model(&cfg.truth, cfg.seed)?;
    let manifest = manifest_for("simulate", cfg)?;
    prepare_output_dir(out, &manifest)?;
    let sim = gen_sim_dataset(&truth, cfg.n_signals, cfg.windows_per_signal, cfg.beta, cfg.seed)?;
    write_sim_dataset(&sim, out)?;
    Ok(sim)
}
