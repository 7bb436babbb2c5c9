//! Worker-count policy shared by the embarrassingly parallel loops.
//!
//! The count comes from `TVD_THREADS` (integer >= 1) and defaults to the
//! available parallelism. Deterministic mode pins it to one.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};

static DETERMINISTIC: AtomicBool = AtomicBool::new(false);

pub const THREADS_ENV: &str = "TVD_THREADS";

pub fn set_deterministic(on: bool) {
    DETERMINISTIC.store(on, Ordering::SeqCst);
}

pub fn is_deterministic() -> bool {
    DETERMINISTIC.load(Ordering::SeqCst)
}

/// Parses a `TVD_THREADS` value.
pub fn parse_threads(raw: &str) -> Result<usize> {
    match raw.trim().parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(Error::InvalidParam(format!(
            "{THREADS_ENV} must be an integer >= 1, got {raw:?}"
        ))),
    }
}

/// Number of workers to use for per-node loops.
pub fn workers() -> usize {
    if is_deterministic() {
        return 1;
    }
    let avail = std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var(THREADS_ENV) {
        Ok(raw) => parse_threads(&raw).map_or(1, |n| n.min(avail.max(1))),
        Err(_) => avail,
    }
}

/// Fills `out[i] = f(i)`, splitting the index range across scoped threads.
/// Entries are independent, so the result does not depend on the split.
pub fn fill_indexed<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync,
{
    let nw = workers().min(out.len().max(1));
    if nw <= 1 {
        for (i, v) in out.iter_mut().enumerate() {
            *v = f(i);
        }
        return;
    }
    let chunk = out.len().div_ceil(nw);
    std::thread::scope(|s| {
        for (c, part) in out.chunks_mut(chunk).enumerate() {
            let f = &f;
            s.spawn(move || {
                for (j, v) in part.iter_mut().enumerate() {
                    *v = f(c * chunk + j);
                }
            });
        }
    });
}

/// `(0..n).map(f)` collected in index order, evaluated across scoped threads.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let nw = workers().min(n.max(1));
    if nw <= 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(nw);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..n)
            .step_by(chunk)
            .map(|start| {
                let f = &f;
                s.spawn(move || (start..(start + chunk).min(n)).map(f).collect::<Vec<T>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
