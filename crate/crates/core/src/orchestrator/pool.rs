use std::collections::HashSet;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotState {
    Free,
    Leased,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lease {
    pub run_id: String,
    pub acquired_at: DateTime<Utc>,
    pub deadline: DateTime<Utc>,
}

/// Snapshot of one display slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplaySlot {
    pub slot_id: String,
    pub state: SlotState,
    pub lease: Option<Lease>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("no display slot became free within {0:?}")]
    PoolExhaustedTimeout(Duration),
    #[error("run {run_id} does not hold slot {slot_id}")]
    NotLeaseHolder { slot_id: String, run_id: String },
    #[error("unknown slot {0}")]
    UnknownSlot(String),
}

struct LiveLease {
    run_id: String,
    deadline: Instant,
    wall: Lease,
}

struct Entry {
    id: String,
    lease: Option<LiveLease>,
}

struct Inner {
    slots: Vec<Entry>,
    dead: HashSet<String>,
}

/// Leases exclusive environment slots to runs.
///
/// A lease is reclaimed only when its deadline has passed and its holder has
/// been reported dead, so a live run never loses its slot.
pub struct SlotPool {
    inner: Mutex<Inner>,
    freed: Condvar,
    ttl: Duration,
}

impl SlotPool {
    pub fn new(size: usize, ttl: Duration) -> Self {
        assert!(size >= 1, "a slot pool needs at least one slot");
        let slots = (0..size).map(|i| Entry { id: format!("slot-{i}"), lease: None }).collect();
        Self { inner: Mutex::new(Inner { slots, dead: HashSet::new() }), freed: Condvar::new(), ttl }
    }

    pub fn size(&self) -> usize {
        self.lock().slots.len()
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn reclaim(inner: &mut Inner, now: Instant) -> usize {
        let Inner { slots, dead } = inner;
        let mut n = 0;
        for e in slots.iter_mut() {
            if e.lease.as_ref().is_some_and(|l| l.deadline <= now && dead.contains(&l.run_id)) {
                e.lease = None;
                n += 1;
            }
        }
        n
    }

    /// Leases the lowest-numbered free slot to `run_id`, waiting up to
    /// `timeout` for one to become available.
    pub fn acquire(&self, run_id: &str, timeout: Duration) -> Result<DisplaySlot, PoolError> {
        let give_up = Instant::now() + timeout;
        let mut inner = self.lock();
        loop {
            let now = Instant::now();
            Self::reclaim(&mut inner, now);
            if let Some(e) = inner.slots.iter_mut().find(|e| e.lease.is_none()) {
                let acquired_at = Utc::now();
                let wall = Lease {
                    run_id: run_id.to_string(),
                    acquired_at,
                    deadline: acquired_at + chrono::Duration::from_std(self.ttl).unwrap_or(chrono::Duration::MAX),
                };
                e.lease = Some(LiveLease { run_id: run_id.to_string(), deadline: now + self.ttl, wall: wall.clone() });
                return Ok(DisplaySlot { slot_id: e.id.clone(), state: SlotState::Leased, lease: Some(wall) });
            }
            if now >= give_up {
                return Err(PoolError::PoolExhaustedTimeout(timeout));
            }
            // Wake up early when a dead holder's lease is about to expire.
            let next_expiry = inner
                .slots
                .iter()
                .filter_map(|e| e.lease.as_ref())
                .filter(|l| inner.dead.contains(&l.run_id))
                .map(|l| l.deadline)
                .min();
            let wake = next_expiry.map_or(give_up, |d| d.min(give_up));
            let wait = wake.saturating_duration_since(now).max(Duration::from_micros(50));
            inner = self.freed.wait_timeout(inner, wait).unwrap_or_else(|p| p.into_inner()).0;
        }
    }

    pub fn release(&self, slot_id: &str, run_id: &str) -> Result<(), PoolError> {
        let mut inner = self.lock();
        let e = inner
            .slots
            .iter_mut()
            .find(|e| e.id == slot_id)
            .ok_or_else(|| PoolError::UnknownSlot(slot_id.to_string()))?;
        match &e.lease {
            Some(l) if l.run_id == run_id => {
                e.lease = None;
                drop(inner);
                self.freed.notify_one();
                Ok(())
            }
            _ => Err(PoolError::NotLeaseHolder { slot_id: slot_id.into(), run_id: run_id.into() }),
        }
    }

    /// Records that `run_id` terminated without releasing its slots.
    pub fn mark_dead(&self, run_id: &str) {
        self.lock().dead.insert(run_id.to_string());
        self.freed.notify_all();
    }

    /// Frees every expired lease held by a dead run; returns how many.
    pub fn reap(&self) -> usize {
        let n = Self::reclaim(&mut self.lock(), Instant::now());
        if n > 0 {
            self.freed.notify_all();
        }
        n
    }

    pub fn snapshot(&self) -> Vec<DisplaySlot> {
        self.lock()
            .slots
            .iter()
            .map(|e| DisplaySlot {
                slot_id: e.id.clone(),
                state: if e.lease.is_some() { SlotState::Leased } else { SlotState::Free },
                lease: e.lease.as_ref().map(|l| l.wall.clone()),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    const NO_WAIT: Duration = Duration::from_millis(0);

    #[test]
    fn distinct_slots_until_exhausted() {
        let pool = SlotPool::new(4, Duration::from_secs(600));
        let ids: BTreeSet<String> =
            (0..4).map(|i| pool.acquire(&format!("run-{i}"), NO_WAIT).unwrap().slot_id).collect();
        assert_eq!(ids.len(), 4);
        assert_eq!(pool.acquire("run-4", Duration::from_millis(20)), Err(PoolError::PoolExhaustedTimeout(Duration::from_millis(20))));
    }

    #[test]
    fn lease_carries_holder_and_deadline() {
        let pool = SlotPool::new(1, Duration::from_secs(600));
        let slot = pool.acquire("run-1", NO_WAIT).unwrap();
        let lease = slot.lease.unwrap();
        assert_eq!(slot.state, SlotState::Leased);
        assert_eq!(lease.run_id, "run-1");
        assert_eq!(lease.deadline - lease.acquired_at, chrono::Duration::seconds(600));
    }

    #[test]
    fn release_rules() {
        let pool = SlotPool::new(1, Duration::from_secs(600));
        let slot = pool.acquire("run-1", NO_WAIT).unwrap();
        assert!(matches!(pool.release(&slot.slot_id, "run-2"), Err(PoolError::NotLeaseHolder { .. })));
        pool.release(&slot.slot_id, "run-1").unwrap();
        assert!(matches!(pool.release(&slot.slot_id, "run-1"), Err(PoolError::NotLeaseHolder { .. })));
        let again = pool.acquire("run-3", NO_WAIT).unwrap();
        assert_eq!(again.slot_id, slot.slot_id);
    }

    #[test]
    fn expired_lease_of_dead_run_is_reclaimed() {
        let pool = SlotPool::new(1, Duration::from_millis(5));
        pool.acquire("crashed", NO_WAIT).unwrap();
        pool.mark_dead("crashed");
        let slot = pool.acquire("next", Duration::from_secs(2)).unwrap();
        assert_eq!(slot.lease.unwrap().run_id, "next");
    }

    #[test]
    fn expired_lease_of_live_run_is_kept() {
        let pool = SlotPool::new(1, Duration::from_millis(1));
        pool.acquire("alive", NO_WAIT).unwrap();
        std::thread::sleep(Duration::from_millis(5));
        assert!(pool.acquire("next", Duration::from_millis(10)).is_err());
        assert_eq!(pool.reap(), 0);
    }

    #[test]
    fn waiter_gets_slot_on_release() {
        let pool = std::sync::Arc::new(SlotPool::new(1, Duration::from_secs(600)));
        let slot = pool.acquire("a", NO_WAIT).unwrap();
        let p = pool.clone();
        let waiter = std::thread::spawn(move || p.acquire("b", Duration::from_secs(5)));
        std::thread::sleep(Duration::from_millis(20));
        pool.release(&slot.slot_id, "a").unwrap();
        assert_eq!(waiter.join().unwrap().unwrap().slot_id, slot.slot_id);
    }
}
