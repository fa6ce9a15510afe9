//! Per-thread operation counters for the emulated binary16 units.
//!
//! Every `hf_*` call bumps the matching counter. The pipeline audit reads
//! them to check the per-frame divider budget.

use std::cell::Cell;

thread_local! {
    static ADDS: Cell<u64> = const { Cell::new(0) };
    static MULS: Cell<u64> = const { Cell::new(0) };
    static DIVS: Cell<u64> = const { Cell::new(0) };
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub adds: u64,
    pub muls: u64,
    pub divs: u64,
}

impl OpCounts {
    pub fn since(self, earlier: OpCounts) -> OpCounts {
        OpCounts {
            adds: self.adds - earlier.adds,
            muls: self.muls - earlier.muls,
            divs: self.divs - earlier.divs,
        }
    }
}

pub(crate) fn record_add() {
    ADDS.with(|c| c.set(c.get() + 1));
}

pub(crate) fn record_mul() {
    MULS.with(|c| c.set(c.get() + 1));
}

pub(crate) fn record_div() {
    DIVS.with(|c| c.set(c.get() + 1));
}

pub fn snapshot() -> OpCounts {
    OpCounts {
        adds: ADDS.with(Cell::get),
        muls: MULS.with(Cell::get),
        divs: DIVS.with(Cell::get),
    }
}

pub fn reset() {
    ADDS.with(|c| c.set(0));
    MULS.with(|c| c.set(0));
    DIVS.with(|c| c.set(0));
}
