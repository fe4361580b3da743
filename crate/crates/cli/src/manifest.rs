//! Fully resolved run descriptions. Every command writes one, and any
//! command accepts one back through `--config`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use scn_core::gradcheck::GradcheckConfig;
use scn_core::train::experiment::DataSpec;
use scn_core::train::{AblationSweep, ScnConfig};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Manifest {
    pub command: String,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub noise: Vec<f64>,
    pub data: DataSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_data: Option<PathBuf>,
    pub config: ScnConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<AblationSweep>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradcheck: Option<GradcheckConfig>,
}

impl Manifest {
    /// Reads either a manifest written by a previous run or a bare
    /// training config.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("{} is not valid JSON", path.display()))?;
        let Some(obj) = value.as_object() else {
            bail!("{} must hold a JSON object", path.display());
        };
        if obj.contains_key("config") {
            serde_json::from_value(value).with_context(|| format!("{} is not a valid manifest", path.display()))
        } else {
            let config = serde_json::from_value(value)
                .with_context(|| format!("{} is not a valid training config", path.display()))?;
            Ok(Self {
                config,
                ..Self::default()
            })
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}
