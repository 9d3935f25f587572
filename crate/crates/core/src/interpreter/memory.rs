//! Phase-tagged allocation accounting.

use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Load,
    Configure,
    Invoke,
}

impl Phase {
    fn code(self) -> u8 {
        match self {
            Phase::Load => 0,
            Phase::Configure => 1,
            Phase::Invoke => 2,
        }
    }

    fn from_code(code: u8) -> Self {
        match code {
            0 => Phase::Load,
            1 => Phase::Configure,
            _ => Phase::Invoke,
        }
    }
}

/// Tracked byte totals per phase and the peak of live tracked bytes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseCounters {
    pub load_bytes: u64,
    pub configure_bytes: u64,
    pub invoke_bytes: u64,
    pub peak_bytes: u64,
}

impl PhaseCounters {
    pub fn total(&self) -> u64 {
        self.load_bytes + self.configure_bytes + self.invoke_bytes
    }
}

/// Thread-safe allocation counter. Every tracked allocation is attributed to
/// the phase that is current when it happens.
#[derive(Debug, Default)]
pub struct MemoryTracker {
    by_phase: [AtomicU64; 3],
    live: AtomicU64,
    peak: AtomicU64,
    phase: AtomicU8,
}

impl MemoryTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_phase(&self, phase: Phase) {
        self.phase.store(phase.code(), Ordering::SeqCst);
    }

    pub fn phase(&self) -> Phase {
        Phase::from_code(self.phase.load(Ordering::SeqCst))
    }

    pub fn alloc(&self, bytes: u64) {
        let phase = self.phase().code() as usize;
        self.by_phase[phase].fetch_add(bytes, Ordering::SeqCst);
        let live = self.live.fetch_add(bytes, Ordering::SeqCst) + bytes;
        self.peak.fetch_max(live, Ordering::SeqCst);
    }

    pub fn free(&self, bytes: u64) {
        self.live.fetch_sub(bytes, Ordering::SeqCst);
    }

    pub fn live(&self) -> u64 {
        self.live.load(Ordering::SeqCst)
    }

    pub fn counters(&self) -> PhaseCounters {
        PhaseCounters {
            load_bytes: self.by_phase[0].load(Ordering::SeqCst),
            configure_bytes: self.by_phase[1].load(Ordering::SeqCst),
            invoke_bytes: self.by_phase[2].load(Ordering::SeqCst),
            peak_bytes: self.peak.load(Ordering::SeqCst),
        }
    }
}
