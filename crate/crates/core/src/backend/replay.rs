use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BackendError, CompletionRequest, LlmBackend, TokenizerRef};

#[derive(Serialize, Deserialize)]
struct Recorded {
    backend: String,
    request: CompletionRequest,
    completion: String,
}

fn record_path(dir: &Path, req: &CompletionRequest) -> PathBuf {
    dir.join(format!("{}.json", req.hash()))
}

/// Serves completions previously saved by [`RecordingBackend`], one file
/// per request hash.
pub struct ReplayBackend {
    dir: PathBuf,
    tokenizer: TokenizerRef,
}

impl ReplayBackend {
    /// `tokenizer` must be the one the recording backend used, or the
    /// logit-bias keys and therefore the request hashes will differ.
    pub fn new(dir: impl Into<PathBuf>, tokenizer: TokenizerRef) -> Self {
        Self { dir: dir.into(), tokenizer }
    }
}

impl LlmBackend for ReplayBackend {
    fn id(&self) -> String {
        format!("replay:{}", self.dir.display())
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let path = record_path(&self.dir, req);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(BackendError::NotRecorded { hash: req.hash() })
            }
            Err(e) => return Err(e.into()),
        };
        let rec: Recorded = serde_json::from_str(&text).map_err(|e| BackendError::MalformedResponse(format!("{}: {e}", path.display())))?;
        Ok(rec.completion)
    }

    fn tokenizer(&self) -> TokenizerRef {
        self.tokenizer.clone()
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Passes requests through and saves each successful completion.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { inner, dir })
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        let completion = self.inner.complete(req)?;
        let rec = Recorded { backend: self.inner.id(), request: req.clone(), completion };
        let path = record_path(&self.dir, req);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&rec).expect("record serializes"))?;
        fs::rename(&tmp, &path)?;
        Ok(rec.completion)
    }

    fn tokenizer(&self) -> TokenizerRef {
        self.inner.tokenizer()
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }

    fn max_concurrency(&self) -> Option<usize> {
        self.inner.max_concurrency()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{ScriptRule, ScriptedBackend};

    #[test]
    fn record_then_replay() {
        let dir = tempfile::tempdir().unwrap();
        let scripted = ScriptedBackend::new(
            "s",
            vec![ScriptRule {
                goal: "g".into(),
                completed: None,
                requires_visible: vec![],
                prompt_contains: None,
                continuation: "Navigation Apple".into(),
            }],
        );
        let tok = scripted.tokenizer();
        let rec = RecordingBackend::new(scripted, dir.path()).unwrap();
        let req = CompletionRequest::new("Task description: g\nNext plan:");
        assert_eq!(rec.complete(&req).unwrap(), "Navigation Apple");
        let replay = ReplayBackend::new(dir.path(), tok);
        assert_eq!(replay.complete(&req).unwrap(), "Navigation Apple");
        let miss = CompletionRequest::new("Task description: h\nNext plan:");
        assert!(matches!(replay.complete(&miss), Err(BackendError::NotRecorded { .. })));
    }
}
