//! Layered configuration: defaults, then `HIREC_*` environment variables,
//! then a TOML file, then command-line flags (applied by the commands).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use hirec_core::embed::{Embedder, EmbedderConfig, EmbedderKind, HashedEmbedder};
use hirec_core::reason::{ChatReasoner, ChatReasonerConfig, MockReasoner, Reasoner, DEFAULT_TEST_SIMILARITY_THRESHOLD};
use hirec_core::weigh::{HeuristicWeigher, RemoteWeigher, Weigher};
use hirec_core::{AblationConfig, PipelineParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CONFIG_ENV: &str = "HIREC_CONFIG";

/// Environment variable → dotted config key.
pub const ENV_KEYS: [(&str, &str); 13] = [
    ("HIREC_LOG", "log"),
    ("HIREC_KB", "paths.kb"),
    ("HIREC_INDEX", "paths.index"),
    ("HIREC_CASES", "paths.cases"),
    ("HIREC_BIND", "server.bind"),
    ("HIREC_EMBEDDER_KIND", "embedder.kind"),
    ("HIREC_EMBEDDER_URL", "embedder.endpoint_url"),
    ("HIREC_EMBEDDER_MODEL", "embedder.model_name"),
    ("HIREC_REASONER_KIND", "reasoner.kind"),
    ("HIREC_REASONER_URL", "reasoner.endpoint_url"),
    ("HIREC_REASONER_MODEL", "reasoner.model"),
    ("HIREC_WEIGHER_KIND", "weigher.kind"),
    ("HIREC_WEIGHER_URL", "weigher.endpoint_url"),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonerKind {
    #[default]
    Mock,
    Chat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasonerSettings {
    pub kind: ReasonerKind,
    /// Mock only: minimum similarity for a test candidate.
    pub threshold: f64,
    pub endpoint_url: String,
    pub model: String,
    pub timeout_ms: u64,
    pub max_in_flight: usize,
}

impl Default for ReasonerSettings {
    fn default() -> Self {
        let chat = ChatReasonerConfig::default();
        Self {
            kind: ReasonerKind::Mock,
            threshold: DEFAULT_TEST_SIMILARITY_THRESHOLD,
            endpoint_url: chat.endpoint_url,
            model: chat.model,
            timeout_ms: chat.timeout_ms,
            max_in_flight: chat.max_in_flight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeigherKind {
    #[default]
    Heuristic,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeigherSettings {
    pub kind: WeigherKind,
    pub endpoint_url: String,
    pub timeout_ms: u64,
}

impl Default for WeigherSettings {
    fn default() -> Self {
        Self {
            kind: WeigherKind::Heuristic,
            endpoint_url: String::new(),
            timeout_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub kb: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub cases: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSettings {
    pub bind: String,
}

impl Default for ServerSettings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    /// `tracing` filter directive, e.g. `info` or `hirec_core=debug`.
    pub log: String,
    pub pipeline: PipelineParams,
    pub ablation: AblationConfig,
    pub embedder: EmbedderConfig,
    pub reasoner: ReasonerSettings,
    pub weigher: WeigherSettings,
    pub paths: Paths,
    pub server: ServerSettings,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            log: "warn".into(),
            pipeline: PipelineParams::default(),
            ablation: AblationConfig::default(),
            embedder: EmbedderConfig::default(),
            reasoner: ReasonerSettings::default(),
            weigher: WeigherSettings::default(),
            paths: Paths::default(),
            server: ServerSettings::default(),
        }
    }
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn set_dotted(table: &mut toml::Table, key: &str, value: String) {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("non-empty key");
    let mut cur = table;
    for p in parts {
        cur = cur
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .expect("config sections are tables");
    }
    cur.insert(last.to_string(), toml::Value::String(value));
}

impl CliConfig {
    /// Resolves defaults < environment < file. `env` looks up a variable.
    pub fn resolve(file: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut table = toml::Table::try_from(CliConfig::default())
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut from_env = toml::Table::new();
        for (var, key) in ENV_KEYS {
            if let Some(v) = env(var).filter(|v| !v.is_empty()) {
                set_dotted(&mut from_env, key, v);
            }
        }
        merge(&mut table, from_env);
        let file = file.map(Path::to_path_buf).or_else(|| env(CONFIG_ENV).map(PathBuf::from));
        if let Some(path) = file {
            let text = fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            let overlay: toml::Table = text
                .parse()
                .map_err(|e: toml::de::Error| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
            merge(&mut table, overlay);
        }
        let cfg: CliConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_process_env(file: Option<&Path>) -> Result<Self, ConfigError> {
        Self::resolve(file, |k| std::env::var(k).ok())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.embedder
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("embedder: {e}")))?;
        if self.reasoner.kind == ReasonerKind::Chat
            && (self.reasoner.endpoint_url.is_empty() || self.reasoner.model.is_empty())
        {
            return Err(ConfigError::Invalid(
                "chat reasoner requires reasoner.endpoint_url and reasoner.model".into(),
            ));
        }
        if self.weigher.kind == WeigherKind::Remote && self.weigher.endpoint_url.is_empty() {
            return Err(ConfigError::Invalid("remote weigher requires weigher.endpoint_url".into()));
        }
        Ok(())
    }

    /// Embedder for an index of `dimension`; the local embedder always
    /// follows the index.
    pub fn build_embedder(&self, dimension: usize) -> Result<Arc<dyn Embedder>, ConfigError> {
        let invalid = |e: hirec_core::embed::EmbedderConfigError| ConfigError::Invalid(format!("embedder: {e}"));
        match self.embedder.kind {
            EmbedderKind::LocalHashed => Ok(Arc::new(HashedEmbedder::new(dimension).map_err(invalid)?)),
            EmbedderKind::Remote => self.embedder.build(None).map_err(invalid),
        }
    }

    pub fn build_reasoner(&self) -> Arc<dyn Reasoner> {
        match self.reasoner.kind {
            ReasonerKind::Mock => Arc::new(MockReasoner::with_threshold(self.reasoner.threshold)),
            ReasonerKind::Chat => Arc::new(ChatReasoner::from_config(
                &ChatReasonerConfig {
                    endpoint_url: self.reasoner.endpoint_url.clone(),
                    model: self.reasoner.model.clone(),
                    timeout_ms: self.reasoner.timeout_ms,
                    max_in_flight: self.reasoner.max_in_flight,
                },
                None,
            )),
        }
    }

    pub fn build_weigher(&self) -> Arc<dyn Weigher> {
        match self.weigher.kind {
            WeigherKind::Heuristic => Arc::new(HeuristicWeigher),
            WeigherKind::Remote => Arc::new(RemoteWeigher::from_url(
                self.weigher.endpoint_url.clone(),
                self.weigher.timeout_ms,
                None,
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;
    use std::io::Write;

    use super::*;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn defaults() {
        let cfg = CliConfig::resolve(None, env(&[])).unwrap();
        assert_eq!(cfg, CliConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn file_beats_env() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "log = \"debug\"\n[pipeline]\nroot_top_k = 4\n[paths]\nindex = \"from-file.idx\"").unwrap();
        let cfg = CliConfig::resolve(
            Some(f.path()),
            env(&[("HIREC_INDEX", "from-env.idx"), ("HIREC_LOG", "info"), ("HIREC_KB", "kb.jsonl")]),
        )
        .unwrap();
        assert_eq!(cfg.log, "debug");
        assert_eq!(cfg.paths.index.as_deref(), Some(Path::new("from-file.idx")));
        assert_eq!(cfg.paths.kb.as_deref(), Some(Path::new("kb.jsonl")));
        assert_eq!(cfg.pipeline.root_top_k, 4);
        assert_eq!(cfg.pipeline.dept_top_k, 10);
    }

    #[test]
    fn env_selects_backends() {
        let cfg = CliConfig::resolve(
            None,
            env(&[("HIREC_REASONER_KIND", "chat"), ("HIREC_REASONER_URL", "http://x"), ("HIREC_REASONER_MODEL", "m")]),
        )
        .unwrap();
        assert_eq!(cfg.reasoner.kind, ReasonerKind::Chat);
        cfg.validate().unwrap();
        let cfg = CliConfig::resolve(None, env(&[("HIREC_WEIGHER_KIND", "remote")])).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unknown_keys_and_kinds_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[reasoner]\nflavour = \"x\"").unwrap();
        assert!(CliConfig::resolve(Some(f.path()), env(&[])).is_err());
        assert!(CliConfig::resolve(None, env(&[("HIREC_EMBEDDER_KIND", "quantum")])).is_err());
    }
}
