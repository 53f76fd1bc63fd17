//! Layered run configuration: defaults, then an optional TOML file, then
//! command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use llm_planner::controller::EpisodeConfig;
use llm_planner::http::RetryPolicy;
use llm_planner::prompting::PromptConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub jobs: usize,
    pub data: DataPaths,
    pub prompt: PromptConfig,
    pub episode: EpisodeConfig,
    pub retriever: RetrieverConfig,
    pub backend: BackendConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 1,
            data: DataPaths::default(),
            prompt: PromptConfig::default(),
            episode: EpisodeConfig::default(),
            retriever: RetrieverConfig::default(),
            backend: BackendConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    pub train: PathBuf,
    pub tasks: PathBuf,
    pub scenes: PathBuf,
}

impl Default for DataPaths {
    fn default() -> Self {
        Self {
            train: "assets/train.jsonl".into(),
            tasks: "assets/tasks.jsonl".into(),
            scenes: "assets/scenes".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Lexical,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrieverConfig {
    pub provider: ProviderKind,
    pub dimension: usize,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// JSONL embedding cache, reused across runs.
    pub cache: Option<PathBuf>,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Lexical,
            dimension: llm_planner::retriever::DEFAULT_DIMENSION,
            endpoint: None,
            model: None,
            cache: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BackendSpec {
    /// Gold plans of the loaded tasks, keyed by goal.
    Oracle,
    Scripted(PathBuf),
    Http,
    Replay(PathBuf),
    /// HTTP backend that also stores every completion under the directory.
    Record(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let path = |a: Option<&str>| match a {
            Some(a) if !a.is_empty() => Ok(PathBuf::from(a)),
            _ => Err(format!("backend `{kind}` needs a path, e.g. `{kind}:<path>`")),
        };
        match kind {
            "oracle" if arg.is_none() => Ok(BackendSpec::Oracle),
            "http" if arg.is_none() => Ok(BackendSpec::Http),
            "scripted" => path(arg).map(BackendSpec::Scripted),
            "replay" => path(arg).map(BackendSpec::Replay),
            "record" => path(arg).map(BackendSpec::Record),
            _ => Err(format!(
                "unknown backend `{s}`; expected oracle, scripted:<file>, http, replay:<dir> or record:<dir>"
            )),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Oracle => f.write_str("oracle"),
            BackendSpec::Http => f.write_str("http"),
            BackendSpec::Scripted(p) => write!(f, "scripted:{}", p.display()),
            BackendSpec::Replay(p) => write!(f, "replay:{}", p.display()),
            BackendSpec::Record(p) => write!(f, "record:{}", p.display()),
        }
    }
}

impl TryFrom<String> for BackendSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<BackendSpec> for String {
    fn from(b: BackendSpec) -> String {
        b.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendConfig {
    pub spec: BackendSpec,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// JSON map from word to token id; whitespace tokens when absent.
    pub tokenizer: Option<PathBuf>,
    pub retry: RetryPolicy,
    pub max_concurrency: Option<usize>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            spec: BackendSpec::Oracle,
            endpoint: None,
            model: None,
            tokenizer: None,
            retry: RetryPolicy::default(),
            max_concurrency: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("invalid config {}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.prompt.validate().map_err(|e| format!("prompt: {e}"))?;
        self.episode.validate().map_err(|e| format!("episode: {e}"))?;
        if self.jobs == 0 {
            return Err("jobs must be at least 1".into());
        }
        if self.retriever.dimension == 0 {
            return Err("retriever.dimension must be positive".into());
        }
        Ok(())
    }
}
