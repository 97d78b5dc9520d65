//! Per-thread primitive-operation counters.
//!
//! Every access primitive bumps a counter here, which is what the scaling
//! probes and timeout budgets measure. Counters are thread-local so that
//! instrumented code stays `Sync` and cheap.

use serde::Serialize;
use std::cell::Cell;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Sample = 0,
    Degree,
    Neighbor,
    Test,
    Draw,
    Build,
    Scan,
    Merge,
    Trial,
    Accepted,
}

const SLOTS: usize = 10;

thread_local! {
    static COUNTS: [Cell<u64>; SLOTS] = const { [const { Cell::new(0) }; SLOTS] };
}

#[inline]
pub(crate) fn tick(op: Op) {
    COUNTS.with(|c| {
        let slot = &c[op as usize];
        slot.set(slot.get() + 1);
    });
}

#[inline]
pub(crate) fn tick_n(op: Op, n: u64) {
    COUNTS.with(|c| {
        let slot = &c[op as usize];
        slot.set(slot.get() + n);
    });
}

/// Snapshot of the counters on the current thread.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OpCounters {
    pub sample: u64,
    pub degree: u64,
    pub neighbor: u64,
    pub test: u64,
    pub draw: u64,
    pub build: u64,
    pub scan: u64,
    pub merge: u64,
    pub trials: u64,
    pub accepted: u64,
}

impl OpCounters {
    /// Calls to the access primitives and samplers, the unit of cost used
    /// by budgets and scaling probes.
    pub fn primitive_calls(&self) -> u64 {
        self.sample + self.degree + self.neighbor + self.test + self.draw + self.scan + self.merge
    }

    pub fn since(&self, earlier: &OpCounters) -> OpCounters {
        OpCounters {
            sample: self.sample - earlier.sample,
            degree: self.degree - earlier.degree,
            neighbor: self.neighbor - earlier.neighbor,
            test: self.test - earlier.test,
            draw: self.draw - earlier.draw,
            build: self.build - earlier.build,
            scan: self.scan - earlier.scan,
            merge: self.merge - earlier.merge,
            trials: self.trials - earlier.trials,
            accepted: self.accepted - earlier.accepted,
        }
    }

    pub fn add(&mut self, other: &OpCounters) {
        self.sample += other.sample;
        self.degree += other.degree;
        self.neighbor += other.neighbor;
        self.test += other.test;
        self.draw += other.draw;
        self.build += other.build;
        self.scan += other.scan;
        self.merge += other.merge;
        self.trials += other.trials;
        self.accepted += other.accepted;
    }
}

pub fn snapshot() -> OpCounters {
    COUNTS.with(|c| OpCounters {
        sample: c[Op::Sample as usize].get(),
        degree: c[Op::Degree as usize].get(),
        neighbor: c[Op::Neighbor as usize].get(),
        test: c[Op::Test as usize].get(),
        draw: c[Op::Draw as usize].get(),
        build: c[Op::Build as usize].get(),
        scan: c[Op::Scan as usize].get(),
        merge: c[Op::Merge as usize].get(),
        trials: c[Op::Trial as usize].get(),
        accepted: c[Op::Accepted as usize].get(),
    })
}

/// Primitive calls so far on this thread.
#[inline]
pub fn primitive_calls() -> u64 {
    COUNTS.with(|c| {
        c[Op::Sample as usize].get()
            + c[Op::Degree as usize].get()
            + c[Op::Neighbor as usize].get()
            + c[Op::Test as usize].get()
            + c[Op::Draw as usize].get()
            + c[Op::Scan as usize].get()
            + c[Op::Merge as usize].get()
    })
}

pub fn reset() {
    COUNTS.with(|c| c.iter().for_each(|s| s.set(0)));
}

/// Runs `f` and returns its result with the counters it consumed.
pub fn measure<R>(f: impl FnOnce() -> R) -> (R, OpCounters) {
    let before = snapshot();
    let out = f();
    (out, snapshot().since(&before))
}
