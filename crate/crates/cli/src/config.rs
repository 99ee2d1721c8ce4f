//! Experiment configuration: versioned JSON schema, field-level
//! validation, and dotted-path overrides from the command line.

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use spectra_core::disorder::DisorderSpec;
use std::path::Path;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

pub const EXPERIMENT_NAMES: &[&str] = &[
    "sample-spectrum",
    "dos",
    "levelstats",
    "wegner",
    "minami",
    "decorrelate",
    "independence",
    "heavytail",
    "separation",
    "check-perturbation",
    "check-determinants",
    "laplace-check",
];

/// One experiment run, fully described. Unknown fields are rejected so
/// typos fail loudly; serializing and reparsing is the identity.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub experiment: String,
    pub disorder: DisorderSpec,
    /// Two-column CSV `t,rho` with header; when present it replaces
    /// `disorder` with the tabulated density it describes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density_csv: Option<String>,
    pub master_seed: u64,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_sites: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows_per_energy: Option<Vec<Vec<(f64, f64)>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_targets: Option<Vec<Vec<u32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_list: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_override: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_overrides: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_verify: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_ref: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_draws: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sizes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_fields: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_hessian: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skip_localization_gate: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allow_low_energy: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    /// Samples per checkpoint chunk.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_interval: Option<u64>,
}

impl ExperimentConfig {
    /// Parse a config file, apply `--set` dotted-path overrides, then
    /// the dedicated flag overrides.
    pub fn load(
        path: &Path,
        sets: &[String],
        seed: Option<u64>,
        workers: Option<usize>,
        out_dir: Option<&str>,
    ) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        for set in sets {
            apply_set(&mut value, set)?;
        }
        let mut config: ExperimentConfig = serde_json::from_value(value)
            .map_err(|e| anyhow!("config {}: {e}", path.display()))?;
        if let Some(csv) = config.density_csv.take() {
            // resolve relative to the config file
            let csv_path = path.parent().unwrap_or(Path::new(".")).join(&csv);
            config.disorder = DisorderSpec::tabulated_from_csv(&csv_path)
                .map_err(|e| anyhow!("density_csv {}: {e}", csv_path.display()))?;
        }
        if let Some(s) = seed {
            config.master_seed = s;
        }
        if let Some(w) = workers {
            config.workers = Some(w);
        }
        if let Some(o) = out_dir {
            config.out_dir = Some(o.to_string());
        }
        config.validate()?;
        Ok(config)
    }

    /// Canonical serialization used for hashing and embedding.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            bail!(
                "schema_version: got {}, this build reads {}",
                self.schema_version,
                CONFIG_SCHEMA_VERSION
            );
        }
        if !EXPERIMENT_NAMES.contains(&self.experiment.as_str()) {
            bail!(
                "experiment: unknown name '{}'; valid names: {}",
                self.experiment,
                EXPERIMENT_NAMES.join(", ")
            );
        }
        self.disorder
            .validate()
            .map_err(|e| anyhow!("disorder: {e}"))?;

        let need = |field: &str, present: bool| -> Result<()> {
            if present {
                Ok(())
            } else {
                Err(anyhow!(
                    "{field}: required for experiment '{}'",
                    self.experiment
                ))
            }
        };
        match self.experiment.as_str() {
            "sample-spectrum" => need("n_sites", self.n_sites.is_some()),
            "dos" => {
                need("n_sites", self.n_sites.is_some())?;
                need("n_samples", self.n_samples.is_some())
            }
            "levelstats" => {
                need("n_sites", self.n_sites.is_some())?;
                need("n_samples", self.n_samples.is_some())?;
                need("energy", self.energy.is_some())?;
                need("windows", self.windows.is_some())
            }
            "wegner" => {
                need("n_sites", self.n_sites.is_some())?;
                need("n_samples", self.n_samples.is_some())?;
                need("energy", self.energy.is_some())?;
                need("epsilons", self.epsilons.as_ref().is_some_and(|v| !v.is_empty()))
            }
            "minami" => {
                need("n_sites", self.n_sites.is_some())?;
                need("n_samples", self.n_samples.is_some())?;
                need("interval", self.interval.is_some())
            }
            "decorrelate" => {
                need("n_samples", self.n_samples.is_some())?;
                need("energy", self.energy.is_some())?;
                need("energy_prime", self.energy_prime.is_some())?;
                need("l_list", self.l_list.as_ref().is_some_and(|v| !v.is_empty()))?;
                need("alpha", self.alpha.is_some())?;
                need("beta", self.beta.is_some())
            }
            "independence" => {
                need("n_sites", self.n_sites.is_some())?;
                need("n_samples", self.n_samples.is_some())?;
                need("energies", self.energies.as_ref().is_some_and(|v| !v.is_empty()))?;
                need("windows_per_energy", self.windows_per_energy.is_some())?;
                need("k_targets", self.k_targets.is_some())
            }
            "heavytail" => {
                need("n_samples", self.n_samples.is_some())?;
                need("l_list", self.l_list.as_ref().is_some_and(|v| v.len() == 1))?;
                need("delta", self.delta.is_some())?;
                need("beta", self.beta.is_some())?;
                need("epsilon", self.epsilon.is_some())
            }
            "separation" => {
                need("n_sites", self.n_sites.is_some())?;
                need("n_samples", self.n_samples.is_some())?;
                need("energy", self.energy.is_some())?;
                need("energy_prime", self.energy_prime.is_some())
            }
            "check-perturbation" | "check-determinants" | "laplace-check" => Ok(()),
            _ => unreachable!("name validated above"),
        }
    }
}

/// Apply one `key=value` override; dotted keys descend into objects.
/// The value is parsed as JSON when possible, else taken as a string.
fn apply_set(value: &mut serde_json::Value, set: &str) -> Result<()> {
    let (key, raw) = set
        .split_once('=')
        .ok_or_else(|| anyhow!("--set needs key=value, got '{set}'"))?;
    let parsed: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cursor = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            let obj = cursor
                .as_object_mut()
                .ok_or_else(|| anyhow!("--set {key}: '{part}' is not an object field"))?;
            obj.insert(part.to_string(), parsed);
            return Ok(());
        }
        cursor = cursor
            .as_object_mut()
            .ok_or_else(|| anyhow!("--set {key}: '{part}' is not an object field"))?
            .entry(part.to_string())
            .or_insert_with(|| serde_json::Value::Object(Default::default()));
    }
    unreachable!()
}
