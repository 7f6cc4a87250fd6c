use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thermoclust::algebra::PauliString;
use thermoclust::lattice::Site;
use thermoclust::model::ModelConfig;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Verify,
    Decay,
    Count,
    Ising,
    Certify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Decay => "decay",
            Command::Count => "count",
            Command::Ising => "ising",
            Command::Certify => "certify",
        }
    }
}

/// A Pauli-string template and the site it is anchored at.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observable {
    pub pauli: PauliString,
    pub anchor: Site,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountConfig {
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "R")]
    pub range: u32,
    pub k_max: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsingConfig {
    pub n: usize,
    #[serde(rename = "J")]
    pub j: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub betas: Vec<f64>,
    #[serde(default)]
    pub observables: Vec<Observable>,
    #[serde(default)]
    pub distances: Vec<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub count: Option<CountConfig>,
    #[serde(default)]
    pub ising: Option<IsingConfig>,
}

/// Default tolerances, overridable by name in the config.
pub const DEFAULT_TOLERANCES: &[(&str, f64)] = &[
    ("resummation", 1e-10),
    ("norm_bound", 1e-12),
    ("factorization", 1e-10),
    ("swap", 1e-10),
    ("supercluster", 1e-10),
    ("partition_ratio", 1e-12),
    ("subset_sum", 1e-10),
    ("covariance", 1e-9),
    ("ising", 1e-10),
    ("ising_xi", 1e-6),
    ("certify_a_max", 1.0),
];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        for name in self.tolerances.keys() {
            if !DEFAULT_TOLERANCES.iter().any(|(n, _)| n == name) {
                return Err(CliError::Config(format!("unknown tolerance {name:?}")));
            }
        }
        if let Some((name, v)) = self.tolerances.iter().find(|(_, v)| !(**v >= 0.0)) {
            return Err(CliError::Config(format!(
                "tolerance {name:?} must be nonnegative, got {v}"
            )));
        }
        if let Some(b) = self.betas.iter().find(|b| !(**b > 0.0 && b.is_finite())) {
            return Err(CliError::Config(format!(
                "betas must be positive and finite, got {b}"
            )));
        }
        if self.distances.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config(
                "distances must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn tolerance(&self, name: &str) -> f64 {
        self.tolerances.get(name).copied().unwrap_or_else(|| {
            DEFAULT_TOLERANCES
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| *v)
                .expect("known tolerance name")
        })
    }
}
