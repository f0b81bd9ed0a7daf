//! Dispatch pacing between consecutive requests to the same backend.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Monotonic clock, swappable for tests.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
    fn sleep_ms(&self, ms: u64);
}

/// Wall clock measured from process start.
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        self.origin.elapsed().as_millis() as u64
    }

    fn sleep_ms(&self, ms: u64) {
        std::thread::sleep(Duration::from_millis(ms));
    }
}

/// Serializes dispatch per backend: consecutive dispatch timestamps for one
/// backend differ by at least its minimum request interval. Dispatch to a
/// given backend is expected to come from a single worker at a time; the
/// gate only tracks timestamps.
pub struct PacingGate {
    clock: Arc<dyn Clock>,
    last_dispatch: Mutex<HashMap<String, u64>>,
}

impl PacingGate {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self {
            clock,
            last_dispatch: Mutex::new(HashMap::new()),
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Block until `min_interval_ms` has elapsed since the previous dispatch
    /// to `backend_id`, then record and return the new dispatch timestamp.
    pub fn acquire(&self, backend_id: &str, min_interval_ms: u64) -> u64 {
        let earliest = {
            let guard = self.last_dispatch.lock().unwrap();
            guard
                .get(backend_id)
                .map(|last| last.saturating_add(min_interval_ms))
        };
        if let Some(earliest) = earliest {
            let now = self.clock.now_ms();
            if earliest > now {
                self.clock.sleep_ms(earliest - now);
            }
        }
        let now = self.clock.now_ms();
        self.last_dispatch
            .lock()
            .unwrap()
            .insert(backend_id.to_string(), now);
        now
    }
}

#[cfg(test)]
pub(crate) mod test_clock {
    use super::Clock;
    use std::sync::Mutex;

    /// Fake clock: `sleep_ms` advances time instantly.
    pub struct FakeClock {
        now: Mutex<u64>,
    }

    impl FakeClock {
        pub fn new() -> Self {
            Self { now: Mutex::new(0) }
        }
    }

    impl Clock for FakeClock {
        fn now_ms(&self) -> u64 {
            *self.now.lock().unwrap()
        }

        fn sleep_ms(&self, ms: u64) {
            *self.now.lock().unwrap() += ms;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_clock::FakeClock;
    use super::*;

    #[test]
    fn consecutive_dispatches_respect_interval() {
        let clock = Arc::new(FakeClock::new());
        let gate = PacingGate::new(clock.clone());
        let mut stamps = Vec::new();
        for _ in 0..10 {
            stamps.push(gate.acquire("b1", 250));
        }
        for pair in stamps.windows(2) {
            assert!(
                pair[1] - pair[0] >= 250,
                "dispatch gap {} < 250",
                pair[1] - pair[0]
            );
        }
    }

    #[test]
    fn first_dispatch_is_immediate() {
        let clock = Arc::new(FakeClock::new());
        let gate = PacingGate::new(clock);
        assert_eq!(gate.acquire("b1", 5_000), 0);
    }

    #[test]
    fn backends_are_paced_independently() {
        let clock = Arc::new(FakeClock::new());
        let gate = PacingGate::new(clock.clone());
        gate.acquire("a", 1_000);
        // a second backend is not delayed by the first one's interval
        assert_eq!(gate.acquire("b", 1_000), 0);
        assert_eq!(clock.now_ms(), 0);
    }

    #[test]
    fn zero_interval_never_sleeps() {
        let clock = Arc::new(FakeClock::new());
        let gate = PacingGate::new(clock.clone());
        for _ in 0..100 {
            gate.acquire("m", 0);
        }
        assert_eq!(clock.now_ms(), 0);
    }
}
