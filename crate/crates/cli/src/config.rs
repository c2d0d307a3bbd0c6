//! Pipeline configuration, read from a TOML file.
//!
//! The file is looked up in this order: the `--config` flag, the
//! `GNSSRAG_CONFIG` variable, `./gnssrag.toml`. With none of them present
//! the defaults apply. Relative paths inside a file resolve against the
//! file's directory.
//!
//! ```toml
//! dataset = "data"
//! index = "data/index.gvix"
//! k = 5
//!
//! [embedder]
//! kind = "external"
//! url = "http://127.0.0.1:9000/encode"
//!
//! [describer]
//! kind = "templated"
//!
//! [params]
//! temperature = 0.2
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use gnssrag_core::describer::RemoteEndpoint;
use gnssrag_core::embedder::{EncoderEndpoint, EncoderHandle, EMBEDDING_DIM};
use gnssrag_core::promptkit::{GenParams, DEFAULT_K};
use serde::{Deserialize, Serialize};

use crate::error::AppError;

pub const CONFIG_ENV: &str = "GNSSRAG_CONFIG";
pub const DEFAULT_CONFIG_FILE: &str = "gnssrag.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderConfig {
    Baseline,
    /// Exactly one of `url` and `model_path`.
    External {
        url: Option<String>,
        model_path: Option<PathBuf>,
        #[serde(default = "default_dimension")]
        dimension: usize,
        #[serde(default = "default_encoder_timeout")]
        timeout_ms: u64,
    },
}

fn default_dimension() -> usize {
    EMBEDDING_DIM
}

fn default_encoder_timeout() -> u64 {
    EncoderHandle::DEFAULT_TIMEOUT_MS
}

impl EmbedderConfig {
    pub fn handle(&self) -> Result<Option<EncoderHandle>, AppError> {
        let EmbedderConfig::External {
            url,
            model_path,
            dimension,
            timeout_ms,
        } = self
        else {
            return Ok(None);
        };
        let endpoint = match (url, model_path) {
            (Some(url), None) => EncoderEndpoint::Url(url.clone()),
            (None, Some(path)) => EncoderEndpoint::ModelPath(path.clone()),
            _ => {
                return Err(AppError::config(
                    "embedder",
                    "an external embedder needs exactly one of `url` and `model_path`",
                ))
            }
        };
        Ok(Some(EncoderHandle {
            endpoint,
            dimension: *dimension,
            timeout_ms: *timeout_ms,
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DescriberConfig {
    Templated,
    Remote {
        url: String,
        #[serde(default = "default_describer_timeout")]
        timeout_ms: u64,
    },
}

fn default_describer_timeout() -> u64 {
    gnssrag_core::describer::DEFAULT_TIMEOUT_MS
}

impl DescriberConfig {
    pub fn endpoint(&self) -> Option<RemoteEndpoint> {
        match self {
            DescriberConfig::Templated => None,
            DescriberConfig::Remote { url, timeout_ms } => Some(RemoteEndpoint {
                url: url.clone(),
                timeout_ms: *timeout_ms,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Dataset directory (manifest plus snapshots).
    pub dataset: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub k: usize,
    pub embedder: EmbedderConfig,
    pub describer: DescriberConfig,
    pub params: GenParams,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: None,
            index: None,
            k: DEFAULT_K,
            embedder: EmbedderConfig::Baseline,
            describer: DescriberConfig::Templated,
            params: GenParams::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, AppError> {
        let de = toml::Deserializer::parse(text).map_err(|e| AppError::config("config", e.to_string()))?;
        let config: PipelineConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            AppError::Config {
                field: path,
                reason: e.into_inner().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.resolve_relative(base);
        }
        Ok(config)
    }

    /// Loads the file picked by the lookup order, or the defaults.
    pub fn discover(flag: Option<&Path>) -> Result<Self, AppError> {
        if let Some(path) = flag {
            return Self::load(path);
        }
        if let Some(path) = std::env::var_os(CONFIG_ENV).filter(|p| !p.is_empty()) {
            return Self::load(Path::new(&path));
        }
        let local = Path::new(DEFAULT_CONFIG_FILE);
        if local.is_file() {
            return Self::load(local);
        }
        Ok(Self::default())
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.dataset.as_mut().map(fix);
        self.index.as_mut().map(fix);
        if let EmbedderConfig::External {
            model_path: Some(p), ..
        } = &mut self.embedder
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if self.k == 0 {
            return Err(AppError::config("k", "must be at least 1"));
        }
        self.params
            .validate()
            .map_err(|e| AppError::config("params", e.to_string()))?;
        self.embedder.handle()?;
        Ok(())
    }

    pub fn index_path(&self) -> Result<&Path, AppError> {
        self.index
            .as_deref()
            .ok_or_else(|| AppError::Usage("no index configured; pass --index or set `index` in the config".into()))
    }

    pub fn dataset_path(&self) -> Result<&Path, AppError> {
        self.dataset
            .as_deref()
            .ok_or_else(|| AppError::Usage("no dataset configured; pass --dataset or set `dataset` in the config".into()))
    }
}
