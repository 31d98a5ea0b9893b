//! Per-thread counters for explicit data movement.
//!
//! Every explicit transposition and every tensor buffer allocated by the
//! library bumps these counters on the calling thread. Evaluators diff a
//! [`Snapshot`] taken before and after a call to report what it moved.

use std::cell::Cell;

thread_local! {
    static TRANSPOSITIONS: Cell<u64> = const { Cell::new(0) };
    static BYTES_COPIED: Cell<u64> = const { Cell::new(0) };
    static BUFFERS: Cell<u64> = const { Cell::new(0) };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Snapshot {
    pub transpositions: u64,
    pub bytes_copied: u64,
    pub buffers_allocated: u64,
}

impl Snapshot {
    pub fn now() -> Self {
        Self {
            transpositions: TRANSPOSITIONS.with(Cell::get),
            bytes_copied: BYTES_COPIED.with(Cell::get),
            buffers_allocated: BUFFERS.with(Cell::get),
        }
    }

    /// Counts accumulated since `self` was taken.
    pub fn elapsed(&self) -> Snapshot {
        let now = Snapshot::now();
        Snapshot {
            transpositions: now.transpositions - self.transpositions,
            bytes_copied: now.bytes_copied - self.bytes_copied,
            buffers_allocated: now.buffers_allocated - self.buffers_allocated,
        }
    }
}

pub(crate) fn record_transposition(elements: usize) {
    TRANSPOSITIONS.with(|c| c.set(c.get() + 1));
    BYTES_COPIED.with(|c| c.set(c.get() + (elements * std::mem::size_of::<f64>()) as u64));
}

pub(crate) fn record_buffer() {
    BUFFERS.with(|c| c.set(c.get() + 1));
}
