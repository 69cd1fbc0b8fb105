//! Data-parallel helpers; sequential unless the `parallel` feature is on.

use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::real::Real;

#[cfg(feature = "parallel")]
pub(crate) fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn for_each_range<F>(n: usize, f: F)
where
    F: Fn(usize) + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().for_each(f)
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_range<F>(n: usize, f: F)
where
    F: Fn(usize) + Sync + Send,
{
    (0..n).for_each(f)
}

/// Shared float accumulators updated with compare-and-swap.
pub(crate) struct AtomicAccumulator {
    slots: Vec<AtomicU64>,
}

impl AtomicAccumulator {
    pub(crate) fn zeros<T: Real>(n: usize) -> Self {
        let zero = T::zero().to_bits64();
        Self { slots: (0..n).map(|_| AtomicU64::new(zero)).collect() }
    }

    #[inline]
    pub(crate) fn add<T: Real>(&self, i: usize, v: T) {
        let slot = &self.slots[i];
        let mut cur = slot.load(Ordering::Relaxed);
        loop {
            let next = (T::from_bits64(cur) + v).to_bits64();
            match slot.compare_exchange_weak(cur, next, Ordering::Relaxed, Ordering::Relaxed) {
                Ok(_) => break,
                Err(seen) => cur = seen,
            }
        }
    }

    pub(crate) fn into_values<T: Real>(self) -> Vec<T> {
        self.slots.into_iter().map(|a| T::from_bits64(a.into_inner())).collect()
    }
}
