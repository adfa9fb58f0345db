//! Experiment configuration: JSON schema, defaults, and validation.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::circuit::InitMode;
use crate::error::{LdosError, Result};
use crate::linalg::{CVector, C64};
use crate::models::{ModelSpec, PerturbationSpec};
use crate::stats::{ProfileHypothesis, RegimeThresholds};

fn default_coupling_threshold() -> f64 {
    crate::models::DEFAULT_COUPLING_THRESHOLD
}

fn default_mass_fraction() -> f64 {
    crate::models::DEFAULT_MASS_FRACTION
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Initial-state description as it appears in config files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitModeSpec {
    MaximallyMixed,
    EigenstateIndex(usize),
    /// amplitudes as [re, im] pairs
    PureState(Vec<[f64; 2]>),
}

impl InitModeSpec {
    pub fn build(&self) -> InitMode {
        match self {
            InitModeSpec::MaximallyMixed => InitMode::MaximallyMixed,
            InitModeSpec::EigenstateIndex(j) => InitMode::EigenstateIndex(*j),
            InitModeSpec::PureState(amps) => InitMode::PureState(CVector::from_vec(
                amps.iter().map(|&[re, im]| C64::new(re, im)).collect(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    pub m_bins: usize,
    pub init_mode: InitModeSpec,
    pub shots: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    pub hypotheses: Vec<ProfileHypothesis>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llr_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime_thresholds: Option<RegimeThresholds>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default)]
    pub persist_matrices: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub perturbation: PerturbationSpec,
    pub delta: f64,
    #[serde(default = "default_coupling_threshold")]
    pub coupling_threshold: f64,
    #[serde(default = "default_mass_fraction")]
    pub bandwidth_mass_fraction: f64,
    pub circuit: CircuitSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSection>,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(LdosError::Config(format!(
                "`delta` must be finite and non-negative, got {}",
                self.delta
            )));
        }
        if !(self.coupling_threshold >= 0.0 && self.coupling_threshold < 1.0) {
            return Err(LdosError::Config(format!(
                "`coupling_threshold` must lie in [0, 1), got {}",
                self.coupling_threshold
            )));
        }
        if !(self.bandwidth_mass_fraction > 0.0 && self.bandwidth_mass_fraction <= 1.0) {
            return Err(LdosError::Config(format!(
                "`bandwidth_mass_fraction` must lie in (0, 1], got {}",
                self.bandwidth_mass_fraction
            )));
        }
        if self.circuit.m_bins < 2 {
            return Err(LdosError::Config(format!(
                "`circuit.m_bins` must be at least 2, got {}",
                self.circuit.m_bins
            )));
        }
        if let Some(analysis) = &self.analysis {
            if !(analysis.epsilon > 0.0 && analysis.epsilon < 1.0) {
                return Err(LdosError::Config(format!(
                    "`analysis.epsilon` must lie in (0, 1), got {}",
                    analysis.epsilon
                )));
            }
            for (i, h) in analysis.hypotheses.iter().enumerate() {
                if !(h.width > 0.0) || !h.width.is_finite() {
                    return Err(LdosError::Config(format!(
                        "`analysis.hypotheses[{i}].width` must be positive, got {}",
                        h.width
                    )));
                }
            }
            if let Some(t) = analysis.llr_threshold {
                if !(t > 0.0) || !t.is_finite() {
                    return Err(LdosError::Config(format!(
                        "`analysis.llr_threshold` must be positive, got {t}"
                    )));
                }
            }
        }
        if self.output.formats.is_empty() {
            return Err(LdosError::Config(
                "`output.formats` must not be empty".to_string(),
            ));
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| {
        LdosError::Config(format!("{}: {e}", path.display()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}
