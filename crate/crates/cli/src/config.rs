use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tarjama_core::ranking::Weights;
use tarjama_core::stats::{FilterPolicy, StrataPolicy};
use tarjama_core::{ChunkPolicy, MetricParams, Tokenizer, TokenizerKind, TokenizerSpec};
use tarjama_queue::{BackendConfig, DEFAULT_MAX_ATTEMPTS};

use crate::error::{invalid, CliError, CliResult};

/// Everything a run depends on. Loaded from a TOML file; command-line flags
/// override individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed for every random choice (sampling).
    pub seed: u64,
    pub queue_dir: PathBuf,
    /// Units per queue task.
    pub batch_size: usize,
    /// Lease time-to-live in seconds.
    pub ttl_secs: f64,
    pub max_attempts: u32,
    /// Run manifest file; every run appends one JSON line.
    pub manifest: PathBuf,
    /// Tokenizer used for chunk budgets.
    pub tokenizer: TokenizerSpec,
    /// Tokenizer used for token statistics; defaults to `tokenizer`.
    pub analysis_tokenizer: Option<TokenizerSpec>,
    pub chunk: ChunkPolicy,
    pub metrics: MetricParams,
    pub weights: Weights,
    pub filter: FilterPolicy,
    pub strata: StrataPolicy,
    pub backends: Vec<BackendConfig>,
    pub scorer: Option<ScorerConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            queue_dir: PathBuf::from("queue"),
            batch_size: 8,
            ttl_secs: tarjama_queue::DEFAULT_TTL.as_secs_f64(),
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            manifest: PathBuf::from("tarjama-runs.jsonl"),
            tokenizer: TokenizerSpec::builtin(),
            analysis_tokenizer: None,
            chunk: ChunkPolicy::default(),
            metrics: MetricParams::default(),
            weights: Weights::default(),
            filter: FilterPolicy::default(),
            strata: StrataPolicy::default(),
            backends: vec![BackendConfig::mock_identity("mock-identity")],
            scorer: None,
        }
    }
}

/// External reward model: either a command speaking JSON over stdin/stdout
/// or an HTTP endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerConfig {
    #[serde(default)]
    pub command: Vec<String>,
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    #[serde(default = "default_scorer_timeout")]
    pub timeout_secs: u64,
}

fn default_scorer_timeout() -> u64 {
    60
}

impl PipelineConfig {
    /// Reads and validates a config file. A missing or unparsable file is an
    /// I/O error naming the path.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io_at(path, e))?;
        let config: Self = toml::from_str(&text)
            .map_err(|e| CliError::io(format!("{}: invalid config: {e}", path.display())))?;
        Ok(config)
    }

    /// Checks numeric ranges and that referenced files exist.
    pub fn validate(&self) -> CliResult<()> {
        self.chunk.validate().map_err(invalid)?;
        self.metrics.validate().map_err(invalid)?;
        self.weights.validate().map_err(invalid)?;
        self.filter.validate().map_err(invalid)?;
        self.strata.validate().map_err(invalid)?;
        if self.batch_size == 0 {
            return Err(CliError::validation("batch_size must be positive"));
        }
        if !(self.ttl_secs.is_finite() && self.ttl_secs > 0.0) {
            return Err(CliError::validation(format!("ttl_secs must be positive, got {}", self.ttl_secs)));
        }
        if self.max_attempts == 0 {
            return Err(CliError::validation("max_attempts must be positive"));
        }
        for spec in std::iter::once(&self.tokenizer).chain(&self.analysis_tokenizer) {
            if spec.kind == TokenizerKind::ExternalVocab {
                match &spec.vocab_path {
                    Some(p) if p.exists() => {}
                    Some(p) => return Err(CliError::io(format!("tokenizer file {} does not exist", p.display()))),
                    None => return Err(CliError::io(format!("tokenizer `{}` needs vocab_path", spec.name))),
                }
            }
        }
        let mut ids = std::collections::BTreeSet::new();
        for b in &self.backends {
            b.validate().map_err(|e| CliError::io(e.to_string()))?;
            if !ids.insert(&b.id) {
                return Err(CliError::io(format!("backend id `{}` is used twice", b.id)));
            }
        }
        if let Some(s) = &self.scorer {
            if s.command.is_empty() == s.endpoint.is_none() {
                return Err(CliError::io("scorer needs exactly one of `command` or `endpoint`"));
            }
        }
        Ok(())
    }

    pub fn chunk_tokenizer(&self) -> CliResult<Tokenizer> {
        self.tokenizer.load().map_err(|e| CliError::io(e.to_string()))
    }

    pub fn analysis_spec(&self) -> &TokenizerSpec {
        self.analysis_tokenizer.as_ref().unwrap_or(&self.tokenizer)
    }

    pub fn analysis_tokenizer(&self) -> CliResult<Tokenizer> {
        self.analysis_spec().load().map_err(|e| CliError::io(e.to_string()))
    }

    pub fn ttl(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(self.ttl_secs)
    }

    /// SHA-256 of the canonical JSON form of the effective config.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}
