use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::cascade::{
    DEFAULT_EDGES_PER_NODE, DEFAULT_INFECTION_PROB, DEFAULT_MASK_FRACTION, DEFAULT_MAX_STEPS, DEFAULT_NODES,
    DEFAULT_PE_DIM,
};
use crate::chem::standin::StandinConfig;
use crate::chem::ChemFitConfig;
use crate::eco::{EcoNoise, DEFAULT_HORIZON_YEARS};
use crate::epi::EpiConfig;
use crate::error::{Error, Result};

pub const DEFAULT_SHARD_SIZE: u64 = 1000;

/// Engine configuration, normally read from TOML. Every section and field is
/// optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub shard_size: u64,
    pub epi: EpiConfig,
    pub eco: EcoConfig,
    pub chem: ChemCorpusConfig,
    pub cascade: CascadeConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            shard_size: DEFAULT_SHARD_SIZE,
            epi: EpiConfig::default(),
            eco: EcoConfig::default(),
            chem: ChemCorpusConfig::default(),
            cascade: CascadeConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EcoConfig {
    pub horizon_years: usize,
    pub environment_noise: bool,
    pub process_noise: bool,
    pub observation_noise: bool,
}

impl Default for EcoConfig {
    fn default() -> Self {
        EcoConfig {
            horizon_years: DEFAULT_HORIZON_YEARS,
            environment_noise: true,
            process_noise: true,
            observation_noise: true,
        }
    }
}

impl EcoConfig {
    pub fn noise(&self) -> EcoNoise {
        EcoNoise {
            environment: self.environment_noise,
            process: self.process_noise,
            observation: self.observation_noise,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChemCorpusConfig {
    /// Empirical reaction table; the built-in stand-in when absent.
    pub source: Option<PathBuf>,
    /// Filled in when the config is resolved so the digest covers the data.
    pub source_sha256: Option<String>,
    pub standin_seed: u64,
    pub fit: ChemFitConfig,
}

impl Default for ChemCorpusConfig {
    fn default() -> Self {
        ChemCorpusConfig {
            source: None,
            source_sha256: None,
            standin_seed: StandinConfig::default().seed,
            fit: ChemFitConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    pub nodes: usize,
    pub edges_per_node: usize,
    pub infection_prob: f64,
    pub max_steps: u32,
    pub mask_fraction: f64,
    pub pe_dim: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            nodes: DEFAULT_NODES,
            edges_per_node: DEFAULT_EDGES_PER_NODE,
            infection_prob: DEFAULT_INFECTION_PROB,
            max_steps: DEFAULT_MAX_STEPS,
            mask_fraction: DEFAULT_MASK_FRACTION,
            pe_dim: DEFAULT_PE_DIM,
        }
    }
}

impl CorpusConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: CorpusConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a TOML file; a relative chem source is taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)?;
        if let Some(src) = config.chem.source.as_mut() {
            if src.is_relative() {
                *src = path.parent().unwrap_or(Path::new(".")).join(&*src);
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.shard_size == 0 {
            return Err(Error::Config("shard_size must be positive".into()));
        }
        self.epi.validate()?;
        let c = &self.cascade;
        if !(0.0..=1.0).contains(&c.infection_prob) || !(0.0..=1.0).contains(&c.mask_fraction) {
            return Err(Error::Config("cascade probabilities must lie in [0, 1]".into()));
        }
        if c.edges_per_node == 0 || c.nodes <= c.edges_per_node || c.pe_dim == 0 || c.pe_dim >= c.nodes {
            return Err(Error::Config("cascade graph needs nodes > edges_per_node >= 1 and 0 < pe_dim < nodes".into()));
        }
        if self.eco.horizon_years == 0 {
            return Err(Error::Config("eco horizon_years must be positive".into()));
        }
        Ok(())
    }

    /// Fills derived fields (the chem source hash) before hashing.
    pub fn resolve(mut self) -> Result<Self> {
        if let Some(src) = &self.chem.source {
            let bytes = std::fs::read(src).map_err(|e| Error::io(src, e))?;
            self.chem.source_sha256 = Some(hex::encode(Sha256::digest(&bytes)));
        }
        Ok(self)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_toml_keeps_defaults() {
        let c = CorpusConfig::from_toml_str("shard_size = 10\n[epi]\np_npi = 0.5\n[cascade]\nnodes = 200\n").unwrap();
        assert_eq!(c.shard_size, 10);
        assert_eq!(c.epi.p_npi, 0.5);
        assert_eq!(c.epi.p_exposed, 0.7);
        assert_eq!(c.cascade.nodes, 200);
        assert_eq!(c.cascade.pe_dim, 16);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(matches!(CorpusConfig::from_toml_str("shard_sise = 3"), Err(Error::Config(_))));
        assert!(matches!(CorpusConfig::from_toml_str("[cascade]\ninfection_prob = 2.0"), Err(Error::Config(_))));
    }
}
