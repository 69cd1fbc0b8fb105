//! Keyframe selection for incremental training.
//!
//! Every keyframe carries a remaining-iteration count and the loss seen the
//! last time it was trained. Selection draws uniformly among keyframes with
//! iterations left. When none are left, budgets are refilled: the
//! `max(1, ⌊k/d⌋)` keyframes with the largest last loss get two iterations,
//! all others one.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Last-loss value of a keyframe that has never been trained; ranks above any real loss.
pub const UNSEEN_LOSS: f64 = f64::INFINITY;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SchedulerConfig {
    /// Divisor in the refill count `max(1, ⌊k/d⌋)`.
    pub d: usize,
    /// Budget of a newly added keyframe.
    pub r0: u32,
    pub seed: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self { d: 4, r0: 8, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct KeyframeScheduler {
    ids: Vec<u64>,
    remaining: Vec<u32>,
    last_loss: Vec<f64>,
    config: SchedulerConfig,
    rng: ChaCha8Rng,
    refills: u64,
}

impl KeyframeScheduler {
    pub fn new(config: SchedulerConfig) -> Result<Self> {
        if config.d == 0 {
            return Err(Error::InvalidParameter("scheduler divisor d must be at least 1".into()));
        }
        Ok(Self {
            ids: Vec::new(),
            remaining: Vec::new(),
            last_loss: Vec::new(),
            config,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            refills: 0,
        })
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn remaining(&self) -> &[u32] {
        &self.remaining
    }

    pub fn last_losses(&self) -> &[f64] {
        &self.last_loss
    }

    pub fn refill_count(&self) -> u64 {
        self.refills
    }

    fn position(&self, id: u64) -> Result<usize> {
        self.ids.iter().position(|&k| k == id).ok_or(Error::UnknownKeyframe(id))
    }

    pub fn add_keyframe(&mut self, id: u64) -> Result<()> {
        if self.ids.contains(&id) {
            return Err(Error::DuplicateKeyframe(id));
        }
        self.ids.push(id);
        self.remaining.push(self.config.r0);
        self.last_loss.push(UNSEEN_LOSS);
        Ok(())
    }

    /// Uniform draw among keyframes with iterations left, refilling first if none are.
    pub fn select(&mut self) -> Result<u64> {
        if self.ids.is_empty() {
            return Err(Error::EmptyPool);
        }
        if self.remaining.iter().all(|&r| r == 0) {
            self.refill();
        }
        let eligible = self.remaining.iter().filter(|&&r| r > 0).count();
        let pick = self.rng.random_range(0..eligible);
        let (i, _) = self.remaining.iter().enumerate().filter(|(_, r)| **r > 0).nth(pick).expect("pick < eligible");
        Ok(self.ids[i])
    }

    /// Consumes one iteration of `id` and stores its loss.
    pub fn record_result(&mut self, id: u64, loss: f64) -> Result<()> {
        let i = self.position(id)?;
        if self.remaining[i] == 0 {
            return Err(Error::BudgetExhausted(id));
        }
        self.remaining[i] -= 1;
        self.last_loss[i] = loss;
        Ok(())
    }

    /// Stores a loss without touching the budget.
    pub fn note_loss(&mut self, id: u64, loss: f64) -> Result<()> {
        let i = self.position(id)?;
        self.last_loss[i] = loss;
        Ok(())
    }

    /// Number of keyframes that receive two iterations at a refill.
    pub fn priority_count(&self) -> usize {
        (self.ids.len() / self.config.d).max(1).min(self.ids.len())
    }

    /// Reassigns budgets: the highest-loss keyframes get 2, the rest 1.
    /// Equal losses rank the later-added keyframe higher.
    pub fn refill(&mut self) {
        let n = self.ids.len();
        if n == 0 {
            return;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            self.last_loss[b].partial_cmp(&self.last_loss[a]).unwrap_or(core::cmp::Ordering::Equal).then(b.cmp(&a))
        });
        let top = self.priority_count();
        for r in self.remaining.iter_mut() {
            *r = 1;
        }
        for &i in &order[..top] {
            self.remaining[i] = 2;
        }
        self.refills += 1;
    }

    /// Uniform draw over all keyframes, ignoring budgets and losses.
    pub fn select_uniform_baseline(&mut self) -> Result<u64> {
        if self.ids.is_empty() {
            return Err(Error::EmptyPool);
        }
        let i = self.rng.random_range(0..self.ids.len());
        Ok(self.ids[i])
    }
}
