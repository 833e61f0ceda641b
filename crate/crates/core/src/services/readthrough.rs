//! Read-through cache front for an external provider, and its static twin.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lfu::LfuCache;
use crate::simnet::SimTime;

/// Entries older than this are refetched, so an upstream outage becomes
/// visible to callers instead of being masked indefinitely.
pub const DEFAULT_TTL_MS: SimTime = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontMode {
    /// Serve hits locally, fetch misses from the upstream provider.
    Cache,
    /// Serve the local static dataset only.
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("upstream unavailable")]
pub struct UpstreamUnavailable;

#[derive(Debug, Clone)]
pub struct ReadThrough<K, V> {
    entries: LfuCache<K, (V, SimTime)>,
    ttl_ms: SimTime,
    upstream_calls: u64,
}

impl<K: Ord + Clone, V: Clone> ReadThrough<K, V> {
    pub fn new(capacity: usize, ttl_ms: SimTime) -> Self {
        Self { entries: LfuCache::new(capacity), ttl_ms, upstream_calls: 0 }
    }

    pub fn upstream_calls(&self) -> u64 {
        self.upstream_calls
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// A fresh cached value, if any.
    pub fn lookup(&mut self, now: SimTime, key: &K) -> Option<V> {
        let ttl = self.ttl_ms;
        match self.entries.get(key) {
            Some((v, at)) if now.saturating_sub(*at) < ttl => Some(v.clone()),
            _ => None,
        }
    }

    /// Records that a miss is being fetched from upstream.
    pub fn note_fetch(&mut self) {
        self.upstream_calls += 1;
    }

    pub fn store(&mut self, now: SimTime, key: K, value: V) {
        self.entries.insert(key, (value, now));
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    /// Synchronous read-through. `upstream` returns `None` when the call
    /// timed out; `local` produces the static value.
    pub fn get(
        &mut self,
        now: SimTime,
        key: &K,
        mode: FrontMode,
        local: impl FnOnce(&K) -> V,
        upstream: impl FnOnce(&K) -> Option<V>,
    ) -> Result<V, UpstreamUnavailable> {
        if mode == FrontMode::Static {
            return Ok(local(key));
        }
        if let Some(v) = self.lookup(now, key) {
            return Ok(v);
        }
        self.note_fetch();
        let v = upstream(key).ok_or(UpstreamUnavailable)?;
        self.store(now, key.clone(), v.clone());
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn miss_fetches_and_caches() {
        let mut c: ReadThrough<u32, String> = ReadThrough::new(8, DEFAULT_TTL_MS);
        let v = c.get(0, &1, FrontMode::Cache, |_| unreachable!(), |k| Some(format!("v{k}"))).unwrap();
        assert_eq!(v, "v1");
        let again = c.get(10, &1, FrontMode::Cache, |_| unreachable!(), |_| panic!("hit expected")).unwrap();
        assert_eq!(again, "v1");
        assert_eq!(c.upstream_calls(), 1);
    }

    #[test]
    fn miss_with_upstream_down_errors() {
        let mut c: ReadThrough<u32, String> = ReadThrough::new(8, DEFAULT_TTL_MS);
        assert_eq!(c.get(0, &1, FrontMode::Cache, |_| unreachable!(), |_| None), Err(UpstreamUnavailable));
    }

    #[test]
    fn static_mode_never_calls_upstream() {
        let mut c: ReadThrough<u32, String> = ReadThrough::new(8, DEFAULT_TTL_MS);
        for k in 0..5 {
            let v = c.get(0, &k, FrontMode::Static, |_| "placeholder".into(), |_| panic!("no upstream")).unwrap();
            assert_eq!(v, "placeholder");
        }
        assert_eq!(c.upstream_calls(), 0);
    }

    #[test]
    fn stale_entries_are_refetched() {
        let mut c: ReadThrough<u32, u32> = ReadThrough::new(8, 100);
        c.store(0, 1, 10);
        assert_eq!(c.lookup(99, &1), Some(10));
        assert_eq!(c.lookup(100, &1), None);
        assert_eq!(c.get(150, &1, FrontMode::Cache, |_| 0, |_| None), Err(UpstreamUnavailable));
    }
}
