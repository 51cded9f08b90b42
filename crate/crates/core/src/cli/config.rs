//! Experiment configuration: a sectioned TOML file, flag overrides, and the
//! resolved form embedded in every output for reruns.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::sensing::Construction;
use crate::theory::{measurements_for_confidence, ConcentrationConstants, DEFAULT_SLACK};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Plan,
    Bounds,
    Ratio,
    Simulate,
    SweepAlpha,
    SweepGamma,
    Concentration,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Plan => "plan",
            Mode::Bounds => "bounds",
            Mode::Ratio => "ratio",
            Mode::Simulate => "simulate",
            Mode::SweepAlpha => "sweep-alpha",
            Mode::SweepGamma => "sweep-gamma",
            Mode::Concentration => "concentration",
        }
    }

    /// Modes with a single M (or γ) rather than a grid.
    fn uses_single_m(self) -> bool {
        !matches!(self, Mode::Plan | Mode::SweepGamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    /// Signal dimension N.
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Fixed sparsity; otherwise `ceil(k_scale · ln N)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    pub k_scale: f64,
    pub snr_db: f64,
    pub sigma2: f64,
    pub construction: Construction,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            n: 100,
            m: None,
            gamma: None,
            k: None,
            k_scale: 2.0,
            snr_db: 5.0,
            sigma2: 1.0,
            construction: Construction::GaussianEnsemble,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub rho: f64,
    pub pi0: f64,
    pub alpha: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            rho: 0.1,
            pi0: 0.0,
            alpha: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySection {
    pub delta: f64,
    pub beta: f64,
    pub r0: f64,
    pub slack: f64,
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl Default for TheorySection {
    fn default() -> Self {
        let k = ConcentrationConstants::default();
        Self {
            delta: 0.5,
            beta: 0.1,
            r0: 4.0,
            slack: DEFAULT_SLACK,
            c: k.c,
            c1: k.c1,
            c2: k.c2,
            delta1: k.delta1,
            delta2: k.delta2,
        }
    }
}

impl TheorySection {
    pub fn constants(&self) -> ConcentrationConstants {
        ConcentrationConstants {
            c: self.c,
            c1: self.c1,
            c2: self.c2,
            delta1: self.delta1,
            delta2: self.delta2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    /// Master seed for every random draw.
    pub seed: u64,
    pub n_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u64>,
    pub model: String,
    /// Search derived seeds for a matrix satisfying the concentration bracket.
    pub require_concentration: bool,
    pub max_attempts: usize,
    /// Matrix draws for the concentration experiment.
    pub n_draws: usize,
    /// Also simulate the delay ratio in `ratio` mode.
    pub estimate_ratio: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            seed: 0,
            n_trials: 10_000,
            horizon: None,
            model: "scalar".to_string(),
            require_concentration: true,
            max_attempts: 1_000,
            n_draws: 10_000,
            estimate_ratio: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gammas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub format: Format,
    /// Per-trial CSV log (`simulate` only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcomes: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    pub problem: ProblemSection,
    pub detector: DetectorSection,
    pub theory: TheorySection,
    pub simulation: SimulationSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

pub const DEFAULT_ALPHAS: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const DEFAULT_GAMMAS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];

/// 10² to 10⁶, four points per decade.
pub fn default_n_grid() -> Vec<usize> {
    (0..=16).map(|i| 10f64.powf(2.0 + i as f64 / 4.0).round() as usize).collect()
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| config_err(format!("config: {e}")))
    }

    /// Parses a TOML config, or recovers the embedded config from a previous
    /// CSV or JSON output.
    /// Reads a TOML config or the config embedded in a previous CSV/JSON
    /// output. Output destinations are not carried over from outputs.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let embedded = if let Some(json) = text.lines().find_map(|l| l.strip_prefix(super::output::CONFIG_PREFIX)) {
            serde_json::from_str::<serde_json::Value>(json).map_err(|e| config_err(format!("embedded config: {e}")))?
        } else if text.trim_start().starts_with('{') {
            let value: serde_json::Value =
                serde_json::from_str(text).map_err(|e| config_err(format!("json output: {e}")))?;
            value
                .get("config")
                .cloned()
                .ok_or_else(|| config_err("json output has no `config` field"))?
        } else {
            return Self::from_toml(text);
        };
        let mut config: Self =
            serde_json::from_value(embedded).map_err(|e| config_err(format!("embedded config: {e}")))?;
        config.output.path = None;
        config.output.outcomes = None;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Checks cross-field consistency for `mode` and fills mode-dependent
    /// defaults.
    pub fn resolve(mut self, mode: Mode) -> Result<Self, CliError> {
        if let Some(stored) = self.mode {
            if stored != mode {
                return Err(config_err(format!(
                    "config is for `{}`, not `{}`",
                    stored.name(),
                    mode.name()
                )));
            }
        }
        self.mode = Some(mode);

        let only = |present: bool, field: &str, owner: Mode| {
            if present && mode != owner {
                Err(config_err(format!("{field} is only used by `{}`", owner.name())))
            } else {
                Ok(())
            }
        };
        only(self.sweep.alphas.is_some(), "sweep.alphas", Mode::SweepAlpha)?;
        only(self.sweep.gammas.is_some(), "sweep.gammas", Mode::SweepGamma)?;
        only(self.sweep.n_grid.is_some(), "sweep.n_grid", Mode::Plan)?;
        only(self.output.outcomes.is_some(), "output.outcomes", Mode::Simulate)?;
        let p = &mut self.problem;
        if p.m.is_some() && p.gamma.is_some() {
            return Err(config_err("give either problem.m or problem.gamma, not both"));
        }
        if !mode.uses_single_m() && (p.m.is_some() || p.gamma.is_some()) {
            return Err(config_err(format!("problem.m/gamma are not used by `{}`", mode.name())));
        }
        if p.n == 0 {
            return Err(config_err("problem.n must be at least 1"));
        }
        if let Some(m) = p.m {
            if m == 0 {
                return Err(config_err("problem.m must be at least 1"));
            }
        }

        match mode {
            Mode::SweepAlpha => {
                self.sweep.alphas.get_or_insert_with(|| DEFAULT_ALPHAS.to_vec());
            }
            Mode::SweepGamma => {
                self.sweep.gammas.get_or_insert_with(|| DEFAULT_GAMMAS.to_vec());
            }
            Mode::Plan => {
                self.sweep.n_grid.get_or_insert_with(default_n_grid);
            }
            _ => {}
        }
        let nonempty = |grid: &Option<Vec<f64>>, name: &str| match grid {
            Some(g) if g.is_empty() => Err(config_err(format!("{name} is empty"))),
            _ => Ok(()),
        };
        nonempty(&self.sweep.alphas, "sweep.alphas")?;
        nonempty(&self.sweep.gammas, "sweep.gammas")?;
        if self.sweep.n_grid.as_ref().is_some_and(Vec::is_empty) {
            return Err(config_err("sweep.n_grid is empty"));
        }
        if self.sweep.n_grid.as_ref().is_some_and(|g| g.contains(&0)) {
            return Err(config_err("sweep.n_grid entries must be at least 1"));
        }

        // Default M: the smallest M meeting the concentration confidence 1 − β.
        if mode.uses_single_m() && self.problem.m.is_none() && self.problem.gamma.is_none() {
            let m = measurements_for_confidence(self.theory.delta, self.theory.beta, &self.theory.constants())?;
            self.problem.m = Some((m as usize).min(self.problem.n));
        }
        Ok(self)
    }

    /// M for single-point modes: explicit M, or `round(γN)`.
    pub fn measurements(&self) -> Result<usize, CliError> {
        match (self.problem.m, self.problem.gamma) {
            (Some(m), _) => Ok(m),
            (None, Some(g)) => {
                let m = (g * self.problem.n as f64).round();
                if m < 1.0 {
                    return Err(config_err(format!("gamma = {g} gives M < 1")));
                }
                Ok(m as usize)
            }
            (None, None) => Err(config_err("problem.m is unresolved")),
        }
    }

    /// γ for the closed-form calculators: explicit γ, or M/N.
    pub fn gamma(&self) -> Result<f64, CliError> {
        match self.problem.gamma {
            Some(g) => Ok(g),
            None => Ok(self.measurements()? as f64 / self.problem.n as f64),
        }
    }

    pub fn sparsity(&self, n: usize) -> usize {
        self.problem
            .k
            .unwrap_or_else(|| crate::theory::sparsity_for(n, self.problem.k_scale))
    }

    /// Compact JSON of the resolved config, as embedded in outputs.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
