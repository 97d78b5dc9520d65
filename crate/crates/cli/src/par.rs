//! Deterministic fan-out: item `i` always gets RNG stream `i`, so results
//! do not depend on the thread count.

use joinsketch::ops::{self, OpCounters};
use joinsketch::rng::{derive_stream, JoinRng};

/// Runs `f(i, rng_i)` for `i in 0..count` on up to `threads` threads and
/// returns the results in index order plus the summed op counters.
pub fn par_map<T, F>(threads: usize, count: usize, seed: u64, base_key: u64, f: F) -> (Vec<T>, OpCounters)
where
    T: Send,
    F: Fn(usize, &mut JoinRng) -> T + Sync,
{
    let threads = threads.clamp(1, count.max(1));
    let chunk = count.div_ceil(threads).max(1);
    let run = |lo: usize, hi: usize| {
        ops::measure(|| {
            (lo..hi)
                .map(|i| {
                    let mut rng = derive_stream(seed, base_key + i as u64);
                    f(i, &mut rng)
                })
                .collect::<Vec<T>>()
        })
    };
    if threads == 1 {
        return run(0, count);
    }
    let parts: Vec<(Vec<T>, OpCounters)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let (lo, hi) = ((t * chunk).min(count), ((t + 1) * chunk).min(count));
                let run = &run;
                s.spawn(move || run(lo, hi))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(count);
    let mut total = OpCounters::default();
    for (items, used) in parts {
        out.extend(items);
        total.add(&used);
    }
    (out, total)
}
