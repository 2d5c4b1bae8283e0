//! Sidecar configuration, read from a small TOML file next to the model:
//!
//! ```toml
//! n = 3
//! approach = "signal"
//! fault_prefixes = ["f_", "F_"]
//! faults = ["bias_a", "bias_b"]   # optional; replaces prefix detection
//!
//! [params]
//! M = 2
//!
//! [macros]
//! "bypass_{k}" = "!c[{k}].forward & !c[{k}].backward"
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{Approach, FlattenOptions, ModelError};

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Shorthand for the `N` parameter.
    pub n: Option<i64>,
    #[serde(default)]
    pub params: BTreeMap<String, i64>,
    pub approach: Option<Approach>,
    pub fault_prefixes: Option<Vec<String>>,
    pub faults: Option<Vec<String>>,
    /// Rendering macros: name template to formula template.
    #[serde(default)]
    pub macros: BTreeMap<String, String>,
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self, ModelError> {
        let cfg: ModelConfig = toml::from_str(text).map_err(|e| ModelError::Config(e.to_string()))?;
        if let Some(n) = cfg.n {
            if n < 0 {
                return Err(ModelError::Config(format!("n must be non-negative, got {n}")));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn flatten_options(&self) -> FlattenOptions {
        let mut opts = FlattenOptions::with_params(self.params.clone());
        if let Some(n) = self.n {
            opts.params.insert("N".to_string(), n);
        }
        if let Some(p) = &self.fault_prefixes {
            opts.fault_prefixes = p.clone();
        }
        opts.faults = self.faults.clone();
        opts
    }
}
