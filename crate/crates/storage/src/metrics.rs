use std::future::Future;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub create: u64,
    pub read: u64,
    pub update: u64,
    pub delete: u64,
    pub list: u64,
}

/// Accumulated cost channels of one backend.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendMetrics {
    pub encrypt_time_total: Duration,
    pub decrypt_time_total: Duration,
    /// Client-side round-trip time of every request to a remote host.
    pub network_time_total: Duration,
    pub op_counts: OpCounts,
    pub round_trips: u64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Op {
    Create,
    Read,
    Update,
    Delete,
    List,
}

/// Lock-free accumulator shared by a backend and its remote clients.
#[derive(Debug, Default)]
pub struct Meter {
    encrypt_ns: AtomicU64,
    decrypt_ns: AtomicU64,
    network_ns: AtomicU64,
    round_trips: AtomicU64,
    ops: [AtomicU64; 5],
}

fn nanos(d: Duration) -> u64 {
    u64::try_from(d.as_nanos()).unwrap_or(u64::MAX)
}

impl Meter {
    pub fn time_encrypt<T>(&self, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.encrypt_ns
            .fetch_add(nanos(start.elapsed()), Ordering::Relaxed);
        out
    }

    pub fn time_decrypt<T>(&self, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.decrypt_ns
            .fetch_add(nanos(start.elapsed()), Ordering::Relaxed);
        out
    }

    pub async fn time_network<T>(&self, fut: impl Future<Output = T>) -> T {
        let start = Instant::now();
        let out = fut.await;
        self.network_ns
            .fetch_add(nanos(start.elapsed()), Ordering::Relaxed);
        self.round_trips.fetch_add(1, Ordering::Relaxed);
        out
    }

    pub(crate) fn count(&self, op: Op) {
        self.ops[op as usize].fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> BackendMetrics {
        let ns = |a: &AtomicU64| Duration::from_nanos(a.load(Ordering::Relaxed));
        let n = |op: Op| self.ops[op as usize].load(Ordering::Relaxed);
        BackendMetrics {
            encrypt_time_total: ns(&self.encrypt_ns),
            decrypt_time_total: ns(&self.decrypt_ns),
            network_time_total: ns(&self.network_ns),
            round_trips: self.round_trips.load(Ordering::Relaxed),
            op_counts: OpCounts {
                create: n(Op::Create),
                read: n(Op::Read),
                update: n(Op::Update),
                delete: n(Op::Delete),
                list: n(Op::List),
            },
        }
    }

    pub fn reset(&self) {
        for a in [
            &self.encrypt_ns,
            &self.decrypt_ns,
            &self.network_ns,
            &self.round_trips,
        ] {
            a.store(0, Ordering::Relaxed);
        }
        for a in &self.ops {
            a.store(0, Ordering::Relaxed);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn accumulates_and_resets() {
        let m = Meter::default();
        m.time_encrypt(|| std::thread::sleep(Duration::from_millis(2)));
        m.time_network(tokio::time::sleep(Duration::from_millis(2))).await;
        m.count(Op::Create);
        m.count(Op::Create);
        m.count(Op::List);
        let s = m.snapshot();
        assert!(s.encrypt_time_total >= Duration::from_millis(2));
        assert_eq!(s.decrypt_time_total, Duration::ZERO);
        assert!(s.network_time_total >= Duration::from_millis(2));
        assert_eq!(s.round_trips, 1);
        assert_eq!(s.op_counts.create, 2);
        assert_eq!(s.op_counts.list, 1);
        m.reset();
        assert_eq!(m.snapshot(), BackendMetrics::default());
    }
}
