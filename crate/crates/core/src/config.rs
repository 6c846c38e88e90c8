//! Single TOML configuration file with one section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::actions::ActionSpaceConfig;
use crate::balancer::DEFAULT_RATIO;
use crate::llm::HttpConfig;
use crate::mock::MockConfig;
use crate::refiner::DEFAULT_REWRITE_ROUNDS;
use crate::sampler::SamplingPolicy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSection {
    pub n_demos: usize,
    pub demos: Option<PathBuf>,
    pub instructions: Option<PathBuf>,
}

impl Default for PromptSection {
    fn default() -> Self {
        Self {
            n_demos: 2,
            demos: None,
            instructions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinerSection {
    pub lexicon: Option<PathBuf>,
    pub max_rewrite_rounds: u32,
}

impl Default for RefinerSection {
    fn default() -> Self {
        Self {
            lexicon: None,
            max_rewrite_rounds: DEFAULT_REWRITE_ROUNDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalancerSection {
    pub ratio: f64,
    pub distractors: Option<PathBuf>,
    pub n_per_subset: usize,
}

impl Default for BalancerSection {
    fn default() -> Self {
        Self {
            ratio: DEFAULT_RATIO,
            distractors: None,
            n_per_subset: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmitterSection {
    pub shard_size: usize,
    pub image_tokens: u32,
    pub object_tokens: u32,
}

impl Default for EmitterSection {
    fn default() -> Self {
        Self {
            shard_size: 10_000,
            image_tokens: 0,
            object_tokens: 60,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub sampler: SamplingPolicy,
    pub llm: HttpConfig,
    pub mock: MockConfig,
    pub prompt: PromptSection,
    pub refiner: RefinerSection,
    pub balancer: BalancerSection,
    pub emitter: EmitterSection,
    pub actions: ActionSpaceConfig,
}

impl Config {
    /// Relative paths inside the file resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg: Config = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.prompt.demos,
            &mut cfg.prompt.instructions,
            &mut cfg.refiner.lexicon,
            &mut cfg.balancer.distractors,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map_or_else(|| Ok(Config::default()), Config::load)
    }
}
