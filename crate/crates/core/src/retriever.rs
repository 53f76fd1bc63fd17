//! Nearest-neighbour selection of in-context examples.

use std::collections::HashMap;
use std::fs;
use std::hash::Hasher;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::http::{HttpClient, HttpError};
use crate::types::{Instruction, TaskInstance};

pub const DEFAULT_DIMENSION: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn squared_distance(&self, other: &EmbeddingVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, other: &EmbeddingVector) -> f64 {
        self.squared_distance(other).sqrt()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("k = {k} exceeds corpus size {len}")]
    KTooLarge { k: usize, len: usize },
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding dimension {got} differs from {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding provider {provider} failed: {message}")]
    ProviderFailure { provider: String, message: String },
}

pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier covering everything that changes the vectors.
    fn id(&self) -> String;

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError>;
}

/// Lowercased alphanumeric runs.
pub fn lexical_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Bucket of a token in the hashed count vector.
pub fn token_bucket(token: &str, dimension: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write(token.as_bytes());
    (h.finish() % dimension as u64) as usize
}

/// Hashed bag-of-words embedding, L2-normalized.
#[derive(Debug, Clone)]
pub struct LexicalEmbedder {
    dimension: usize,
}

impl LexicalEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0);
        Self { dimension }
    }

    /// Counts before normalization.
    pub fn counts(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for t in lexical_tokens(text) {
            v[token_bucket(&t, self.dimension)] += 1.0;
        }
        v
    }
}

impl Default for LexicalEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

impl EmbeddingProvider for LexicalEmbedder {
    fn id(&self) -> String {
        format!("lexical-fnv1a64-{}", self.dimension)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        if text.trim().is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let mut v = self.counts(text);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // Text of punctuation only has no tokens; keep the zero vector.
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(EmbeddingVector(v))
    }
}

/// Embeddings endpoint speaking the common `{"model", "input"}` →
/// `{"data": [{"embedding": [...]}]}` wire format. Vectors pass through
/// unnormalized.
pub struct HttpEmbedder {
    client: HttpClient,
    model: String,
}

impl HttpEmbedder {
    pub fn new(client: HttpClient, model: impl Into<String>) -> Self {
        Self {
            client,
            model: model.into(),
        }
    }
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl EmbeddingProvider for HttpEmbedder {
    fn id(&self) -> String {
        format!("http:{}:{}", self.client.endpoint(), self.model)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        if text.trim().is_empty() {
            return Err(RetrievalError::EmptyText);
        }
        let failure = |message: String| RetrievalError::ProviderFailure {
            provider: self.id(),
            message,
        };
        let body = serde_json::json!({ "model": self.model, "input": text });
        let value = self.client.post_json(&body).map_err(|e: HttpError| failure(e.to_string()))?;
        let resp: EmbeddingResponse =
            serde_json::from_value(value).map_err(|e| failure(format!("malformed response: {e}")))?;
        let v = resp
            .data
            .into_iter()
            .next()
            .ok_or_else(|| failure("response has no embedding".into()))?
            .embedding;
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(failure("embedding is empty or non-finite".into()));
        }
        Ok(EmbeddingVector(v))
    }
}

#[derive(Serialize, Deserialize)]
struct CacheHeader {
    provider_hash: String,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    vector: EmbeddingVector,
}

/// Memoizing wrapper with an optional JSONL file backing. The file starts
/// with a header naming the provider hash; a mismatched header discards the
/// file's contents.
pub struct CachedEmbedder<P> {
    inner: P,
    memo: Mutex<HashMap<String, EmbeddingVector>>,
    file: Option<PathBuf>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl<P: EmbeddingProvider> CachedEmbedder<P> {
    pub fn in_memory(inner: P) -> Self {
        Self {
            inner,
            memo: Mutex::new(HashMap::new()),
            file: None,
        }
    }

    /// Loads entries from `path` when its header matches the provider.
    pub fn with_file(inner: P, path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let provider_hash = sha256_hex(inner.id().as_bytes());
        let mut memo = HashMap::new();
        let mut valid = false;
        if let Ok(f) = fs::File::open(&path) {
            let mut lines = BufReader::new(f).lines();
            if let Some(Ok(first)) = lines.next() {
                valid = serde_json::from_str::<CacheHeader>(&first)
                    .is_ok_and(|h| h.provider_hash == provider_hash);
            }
            if valid {
                for line in lines {
                    let line = line?;
                    if let Ok(entry) = serde_json::from_str::<CacheLine>(&line) {
                        memo.insert(entry.key, entry.vector);
                    }
                }
            }
        }
        if !valid {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let mut f = fs::File::create(&path)?;
            writeln!(f, "{}", serde_json::to_string(&CacheHeader { provider_hash }).unwrap())?;
        }
        Ok(Self {
            inner,
            memo: Mutex::new(memo),
            file: Some(path),
        })
    }

    pub fn len(&self) -> usize {
        self.memo.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachedEmbedder<P> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        let key = sha256_hex(text.as_bytes());
        if let Some(v) = self.memo.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let v = self.inner.embed(text)?;
        let mut memo = self.memo.lock().unwrap();
        if let Some(path) = &self.file {
            if !memo.contains_key(&key) {
                let line = serde_json::to_string(&CacheLine { key: key.clone(), vector: v.clone() }).unwrap();
                let appended = fs::OpenOptions::new()
                    .append(true)
                    .open(path)
                    .and_then(|mut f| writeln!(f, "{line}"));
                if let Err(e) = appended {
                    log::warn!("embedding cache {} not updated: {e}", path.display());
                }
            }
        }
        memo.insert(key, v.clone());
        Ok(v)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for std::sync::Arc<T> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        (**self).embed(text)
    }
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<T> {
    fn id(&self) -> String {
        (**self).id()
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, RetrievalError> {
        (**self).embed(text)
    }
}

pub fn embed_text(text: &str, provider: &dyn EmbeddingProvider) -> Result<EmbeddingVector, RetrievalError> {
    if text.trim().is_empty() {
        return Err(RetrievalError::EmptyText);
    }
    provider.embed(text)
}

/// Indices of the `k` candidates nearest to `query`, ordered by descending
/// distance so the nearest comes last. Equal distances order by ascending
/// id before the reversal.
pub fn knn_indices(query: &EmbeddingVector, candidates: &[(&str, &EmbeddingVector)], k: usize) -> Vec<usize> {
    let mut order: Vec<(f64, &str, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(i, (id, v))| (query.squared_distance(v), *id, i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
    order.truncate(k);
    order.reverse();
    order.into_iter().map(|(_, _, i)| i).collect()
}

/// The `k` corpus items nearest to the query instruction, nearest last.
pub fn knn_retrieve<'c>(
    query: &Instruction,
    corpus: &'c [TaskInstance],
    k: usize,
    provider: &dyn EmbeddingProvider,
    use_steps: bool,
) -> Result<Vec<&'c TaskInstance>, RetrievalError> {
    if corpus.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    if k > corpus.len() {
        return Err(RetrievalError::KTooLarge { k, len: corpus.len() });
    }
    let q = embed_text(&query.query_text(use_steps), provider)?;
    let vectors = corpus
        .iter()
        .map(|t| {
            let v = embed_text(&t.instruction.query_text(use_steps), provider)?;
            if v.dimension() != q.dimension() {
                return Err(RetrievalError::DimensionMismatch { expected: q.dimension(), got: v.dimension() });
            }
            Ok(v)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let candidates: Vec<(&str, &EmbeddingVector)> =
        corpus.iter().zip(&vectors).map(|(t, v)| (t.id.as_str(), v)).collect();
    Ok(knn_indices(&q, &candidates, k).into_iter().map(|i| &corpus[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn lexical_is_deterministic_and_normalized() {
        let e = LexicalEmbedder::default();
        let a = e.embed("Put a chilled apple in the microwave.").unwrap();
        assert_eq!(a, e.embed("Put a chilled apple in the microwave.").unwrap());
        assert!((a.norm() - 1.0).abs() < 1e-9);
        assert_eq!(a, e.embed("put A CHILLED apple, in the microwave").unwrap());
        assert!(matches!(e.embed(""), Err(RetrievalError::EmptyText)));
        assert!(matches!(embed_text("  ", &e), Err(RetrievalError::EmptyText)));
    }

    #[test]
    fn repeated_token_changes_only_its_bucket() {
        let e = LexicalEmbedder::default();
        let aab = e.counts("a a b");
        let ab = e.counts("a b");
        // Oracle: direct per-token counting into the same buckets.
        let mut expected = vec![0.0; DEFAULT_DIMENSION];
        expected[token_bucket("a", DEFAULT_DIMENSION)] += 1.0;
        expected[token_bucket("b", DEFAULT_DIMENSION)] += 1.0;
        assert_eq!(ab, expected);
        let diff: Vec<usize> = (0..DEFAULT_DIMENSION).filter(|&i| aab[i] != ab[i]).collect();
        assert_eq!(diff, vec![token_bucket("a", DEFAULT_DIMENSION)]);
    }

    #[test]
    fn fnv_bucket_matches_reference_constants() {
        // FNV-1a 64 of "a" is 0xaf63dc4c8601ec8c.
        assert_eq!(token_bucket("a", 1 << 16), 0xec8c);
    }

    #[test]
    fn cache_file_survives_reload_and_invalidates_on_provider_change() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let c = CachedEmbedder::with_file(LexicalEmbedder::default(), &path).unwrap();
        let v = c.embed("slice the bread").unwrap();
        drop(c);
        let c = CachedEmbedder::with_file(LexicalEmbedder::default(), &path).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.embed("slice the bread").unwrap(), v);
        let other = CachedEmbedder::with_file(LexicalEmbedder::new(64), &path).unwrap();
        assert!(other.is_empty());
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((-4i32..=4).prop_map(|x| x as f64 * 0.5), dim)
    }

    proptest! {
        #[test]
        fn knn_matches_brute_force(
            corpus in prop::collection::vec(vec_strategy(3), 1..200),
            query in vec_strategy(3),
            k_pick in 0usize..3,
        ) {
            let k = [1, 5, 9][k_pick].min(corpus.len());
            let ids: Vec<String> = (0..corpus.len()).map(|i| format!("t{i:03}")).collect();
            let vecs: Vec<EmbeddingVector> = corpus.into_iter().map(EmbeddingVector).collect();
            let q = EmbeddingVector(query);
            let cands: Vec<(&str, &EmbeddingVector)> = ids.iter().map(|s| s.as_str()).zip(&vecs).collect();
            let got = knn_indices(&q, &cands, k);

            // Oracle: repeated argmin with explicit (distance, id) comparison.
            let mut remaining: Vec<usize> = (0..vecs.len()).collect();
            let mut nearest_first = Vec::new();
            for _ in 0..k {
                let (pos, _) = remaining.iter().enumerate().min_by(|(_, &a), (_, &b)| {
                    let da: f64 = q.0.iter().zip(&vecs[a].0).map(|(x, y)| (x - y).powi(2)).sum();
                    let db: f64 = q.0.iter().zip(&vecs[b].0).map(|(x, y)| (x - y).powi(2)).sum();
                    da.partial_cmp(&db).unwrap().then(ids[a].cmp(&ids[b]))
                }).unwrap();
                nearest_first.push(remaining.remove(pos));
            }
            nearest_first.reverse();
            prop_assert_eq!(got, nearest_first);
        }

        #[test]
        fn knn_is_permutation_invariant(
            corpus in prop::collection::vec(vec_strategy(2), 2..40),
            query in vec_strategy(2),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let ids: Vec<String> = (0..corpus.len()).map(|i| format!("t{i:03}")).collect();
            let vecs: Vec<EmbeddingVector> = corpus.into_iter().map(EmbeddingVector).collect();
            let q = EmbeddingVector(query);
            let k = vecs.len().min(5);
            let pick = |order: &[usize]| {
                let cands: Vec<(&str, &EmbeddingVector)> = order.iter().map(|&i| (ids[i].as_str(), &vecs[i])).collect();
                knn_indices(&q, &cands, k).into_iter().map(|j| ids[order[j]].clone()).collect::<Vec<_>>()
            };
            let identity: Vec<usize> = (0..vecs.len()).collect();
            let mut shuffled = identity.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(pick(&identity), pick(&shuffled));
        }

        #[test]
        fn lexical_norm_is_one(text in "[a-zA-Z ,.]{0,60}") {
            let e = LexicalEmbedder::default();
            match e.embed(&text) {
                Ok(v) => {
                    let has_tokens = lexical_tokens(&text).next().is_some();
                    prop_assert!(!has_tokens || (v.norm() - 1.0).abs() < 1e-9);
                    prop_assert!(v.0.iter().all(|x| x.is_finite()));
                }
                Err(_) => prop_assert!(text.trim().is_empty()),
            }
        }
    }
}
