//! Circuit breaker around calls to one upstream.
//!
//! ```text
//! Closed ──[F consecutive failures]──> Open
//!   ▲                                   │ cooldown C elapsed
//!   │ probe ok                          ▼
//!   └────────────────────────────── HalfOpen ──[probe fails]──> Open
//! ```
//!
//! Calls made while Open, or while the single HalfOpen probe is outstanding,
//! are rejected without reaching the upstream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simnet::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakerConfig {
    pub failure_threshold: u32,
    pub cooldown_ms: SimTime,
}

impl Default for BreakerConfig {
    fn default() -> Self {
        Self { failure_threshold: 5, cooldown_ms: 5000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum BreakerPhase {
    Closed,
    Open { opened_at: SimTime },
    HalfOpen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("circuit breaker open")]
pub struct BreakerOpen;

/// Admission granted by [`CircuitBreaker::acquire`]. Report the outcome with
/// [`CircuitBreaker::record`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[must_use]
pub struct Permit {
    probe: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitBreaker {
    pub config: BreakerConfig,
    phase: BreakerPhase,
    consecutive_failures: u32,
    probe_outstanding: bool,
    rejected: u64,
}

/// State change caused by a call; the simulation logs these.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Opened,
    HalfOpened,
    Closed,
}

impl CircuitBreaker {
    pub fn new(config: BreakerConfig) -> Self {
        Self { config, phase: BreakerPhase::Closed, consecutive_failures: 0, probe_outstanding: false, rejected: 0 }
    }

    pub fn phase(&self) -> BreakerPhase {
        self.phase
    }

    pub fn consecutive_failures(&self) -> u32 {
        self.consecutive_failures
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Asks to make a call at `now`. May move Open to HalfOpen.
    pub fn acquire(&mut self, now: SimTime) -> (Result<Permit, BreakerOpen>, Option<Transition>) {
        let mut transition = None;
        if let BreakerPhase::Open { opened_at } = self.phase {
            if now >= opened_at + self.config.cooldown_ms {
                self.phase = BreakerPhase::HalfOpen;
                self.probe_outstanding = false;
                transition = Some(Transition::HalfOpened);
            }
        }
        let result = match self.phase {
            BreakerPhase::Closed => Ok(Permit { probe: false }),
            BreakerPhase::HalfOpen if !self.probe_outstanding => {
                self.probe_outstanding = true;
                Ok(Permit { probe: true })
            }
            _ => {
                self.rejected += 1;
                Err(BreakerOpen)
            }
        };
        (result, transition)
    }

    /// Reports how a permitted call ended.
    pub fn record(&mut self, now: SimTime, permit: Permit, success: bool) -> Option<Transition> {
        if permit.probe {
            self.probe_outstanding = false;
            if self.phase != BreakerPhase::HalfOpen {
                return None;
            }
            return if success {
                self.phase = BreakerPhase::Closed;
                self.consecutive_failures = 0;
                Some(Transition::Closed)
            } else {
                self.phase = BreakerPhase::Open { opened_at: now };
                Some(Transition::Opened)
            };
        }
        if self.phase != BreakerPhase::Closed {
            // A call admitted before the trip finished late; it does not move the state.
            return None;
        }
        if success {
            self.consecutive_failures = 0;
            return None;
        }
        self.consecutive_failures += 1;
        if self.consecutive_failures >= self.config.failure_threshold {
            self.phase = BreakerPhase::Open { opened_at: now };
            return Some(Transition::Opened);
        }
        None
    }

    /// Synchronous wrapper: runs `invocation` if admitted.
    pub fn call<T, E>(
        &mut self,
        now: SimTime,
        invocation: impl FnOnce() -> Result<T, E>,
    ) -> Result<T, BreakerCallError<E>> {
        let (permit, _) = self.acquire(now);
        let permit = permit.map_err(|_| BreakerCallError::Open)?;
        let result = invocation();
        self.record(now, permit, result.is_ok());
        result.map_err(BreakerCallError::Upstream)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BreakerCallError<E> {
    #[error("circuit breaker open")]
    Open,
    #[error("upstream call failed")]
    Upstream(E),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fail() -> Result<(), &'static str> {
        Err("timeout")
    }

    #[test]
    fn trips_after_threshold() {
        let mut b = CircuitBreaker::new(BreakerConfig::default());
        for i in 0..4 {
            assert_eq!(b.call(i, fail), Err(BreakerCallError::Upstream("timeout")));
            assert_eq!(b.phase(), BreakerPhase::Closed);
        }
        let _ = b.call(4, fail);
        assert_eq!(b.phase(), BreakerPhase::Open { opened_at: 4 });
    }

    #[test]
    fn success_resets_count() {
        let mut b = CircuitBreaker::new(BreakerConfig::default());
        for i in 0..4 {
            let _ = b.call(i, fail);
        }
        b.call(5, || Ok::<_, ()>(())).unwrap();
        assert_eq!(b.consecutive_failures(), 0);
    }

    #[test]
    fn open_rejects_without_invoking() {
        let mut b = CircuitBreaker::new(BreakerConfig::default());
        for i in 0..5 {
            let _ = b.call(i, fail);
        }
        let mut invoked = 0;
        let r = b.call(100, || {
            invoked += 1;
            Ok::<_, ()>(())
        });
        assert_eq!(r, Err(BreakerCallError::Open));
        assert_eq!(invoked, 0);
    }

    #[test]
    fn half_open_single_probe() {
        let mut b = CircuitBreaker::new(BreakerConfig::default());
        for i in 0..5 {
            let _ = b.call(i, fail);
        }
        let (p, t) = b.acquire(5004);
        assert_eq!(t, Some(Transition::HalfOpened));
        let p = p.unwrap();
        assert_eq!(b.acquire(5005).0, Err(BreakerOpen));
        assert_eq!(b.record(5010, p, true), Some(Transition::Closed));
        assert_eq!(b.phase(), BreakerPhase::Closed);
    }

    #[test]
    fn failed_probe_reopens_with_fresh_cooldown() {
        let mut b = CircuitBreaker::new(BreakerConfig::default());
        for i in 0..5 {
            let _ = b.call(i, fail);
        }
        let _ = b.call(6000, fail);
        assert_eq!(b.phase(), BreakerPhase::Open { opened_at: 6000 });
        assert_eq!(b.acquire(10_999).0, Err(BreakerOpen));
        assert!(b.acquire(11_000).0.is_ok());
    }
}
