use std::sync::{Condvar, Mutex};

use super::{BackendError, CompletionRequest, LlmBackend, TokenizerRef};

/// Admits at most `limit` concurrent `complete` calls; callers past the
/// limit wait in turn.
pub struct ConcurrencyLimited<B> {
    inner: B,
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl<B: LlmBackend> ConcurrencyLimited<B> {
    /// Uses the backend's declared limit when it has one, else `fallback`.
    pub fn new(inner: B, fallback: usize) -> Self {
        let limit = inner.max_concurrency().unwrap_or(fallback).max(1);
        Self {
            inner,
            limit,
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn limit(&self) -> usize {
        self.limit
    }
}

impl<B: LlmBackend> LlmBackend for ConcurrencyLimited<B> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<String, BackendError> {
        {
            let mut n = self.in_flight.lock().unwrap();
            while *n >= self.limit {
                n = self.freed.wait(n).unwrap();
            }
            *n += 1;
        }
        let result = self.inner.complete(req);
        *self.in_flight.lock().unwrap() -= 1;
        self.freed.notify_one();
        result
    }

    fn tokenizer(&self) -> TokenizerRef {
        self.inner.tokenizer()
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }

    fn max_concurrency(&self) -> Option<usize> {
        Some(self.limit)
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;
    use std::time::Duration;

    use super::*;
    use crate::backend::WhitespaceTokenizer;

    struct Slow {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl LlmBackend for Slow {
        fn id(&self) -> String {
            "slow".into()
        }
        fn complete(&self, _: &CompletionRequest) -> Result<String, BackendError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(5));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok(String::new())
        }
        fn tokenizer(&self) -> TokenizerRef {
            Arc::new(WhitespaceTokenizer)
        }
        fn is_deterministic(&self) -> bool {
            true
        }
        fn max_concurrency(&self) -> Option<usize> {
            Some(2)
        }
    }

    #[test]
    fn never_exceeds_declared_limit() {
        let gate = ConcurrencyLimited::new(Slow { current: AtomicUsize::new(0), peak: AtomicUsize::new(0) }, 8);
        assert_eq!(gate.limit(), 2);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| gate.complete(&CompletionRequest::new("p")).unwrap());
            }
        });
        assert!(gate.inner.peak.load(Ordering::SeqCst) <= 2);
    }
}
