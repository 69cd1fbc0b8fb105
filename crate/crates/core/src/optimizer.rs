//! Adaptive-moment optimizer with per-attribute learning rates.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gaussian::{GaussianMap, PARAMS_PER_PRIMITIVE};
use crate::rasterizer::ParamGrads;
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates<T> {
    pub position_init: T,
    pub position_final: T,
    /// Iterations over which the position rate decays log-linearly.
    pub position_decay_steps: u64,
    pub sh_dc: T,
    pub sh_rest: T,
    pub opacity: T,
    pub log_scale: T,
    pub rotation: T,
}

impl<T: Real> Default for LearningRates<T> {
    fn default() -> Self {
        Self {
            position_init: T::lit(1.6e-4),
            position_final: T::lit(1.6e-6),
            position_decay_steps: 30_000,
            sh_dc: T::lit(2.5e-3),
            sh_rest: T::lit(1.25e-4),
            opacity: T::lit(5e-2),
            log_scale: T::lit(5e-3),
            rotation: T::lit(1e-3),
        }
    }
}

impl<T: Real> LearningRates<T> {
    pub fn position_at(&self, step: u64) -> T {
        if self.position_decay_steps == 0 {
            return self.position_final;
        }
        let s = T::lit((step as f64 / self.position_decay_steps as f64).min(1.0));
        ((T::one() - s) * self.position_init.ln() + s * self.position_final.ln()).exp()
    }

    /// Rate of each slot of the flattened parameter layout at `step`.
    pub fn per_slot(&self, step: u64) -> [T; PARAMS_PER_PRIMITIVE] {
        let mut lr = [self.sh_rest; PARAMS_PER_PRIMITIVE];
        let pos = self.position_at(step);
        lr[..3].fill(pos);
        lr[3..7].fill(self.rotation);
        lr[7..10].fill(self.log_scale);
        lr[10] = self.opacity;
        lr[11..14].fill(self.sh_dc);
        lr
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig<T> {
    pub lr: LearningRates<T>,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Real> Default for AdamConfig<T> {
    fn default() -> Self {
        Self { lr: LearningRates::default(), beta1: T::lit(0.9), beta2: T::lit(0.999), eps: T::lit(1e-15) }
    }
}

/// Moments are kept per primitive together with the number of updates that
/// primitive has received, which drives its bias correction. The global step
/// drives the position-rate schedule and survives densification.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    config: AdamConfig<T>,
    m: Vec<[T; PARAMS_PER_PRIMITIVE]>,
    v: Vec<[T; PARAMS_PER_PRIMITIVE]>,
    updates: Vec<u32>,
    step: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig<T>, n: usize) -> Self {
        Self {
            config,
            m: vec![[T::zero(); PARAMS_PER_PRIMITIVE]; n],
            v: vec![[T::zero(); PARAMS_PER_PRIMITIVE]; n],
            updates: vec![0; n],
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig<T> {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, i: usize) -> &[T; PARAMS_PER_PRIMITIVE] {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &[T; PARAMS_PER_PRIMITIVE] {
        &self.v[i]
    }

    /// Appends zeroed state for primitives added at the end of the map.
    pub fn extend(&mut self, n_new: usize) {
        let n = self.m.len() + n_new;
        self.m.resize(n, [T::zero(); PARAMS_PER_PRIMITIVE]);
        self.v.resize(n, [T::zero(); PARAMS_PER_PRIMITIVE]);
        self.updates.resize(n, 0);
    }

    /// Mirrors [`GaussianMap::gather`]: keeps `survivors` in order, then `n_new` zeroed entries.
    pub fn resize_for_densify(&mut self, survivors: &[usize], n_new: usize) -> Result<()> {
        let n = self.m.len();
        if let Some(&bad) = survivors.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, len: n });
        }
        self.m = survivors.iter().map(|&i| self.m[i]).collect();
        self.v = survivors.iter().map(|&i| self.v[i]).collect();
        self.updates = survivors.iter().map(|&i| self.updates[i]).collect();
        self.extend(n_new);
        Ok(())
    }

    pub fn step(&mut self, map: &mut GaussianMap<T>, grads: &ParamGrads<T>) -> Result<()> {
        if grads.len() != map.len() || self.m.len() != map.len() {
            return Err(Error::ShapeMismatch {
                expected: alloc::format!("{} primitives", map.len()),
                actual: alloc::format!("{} gradients, {} optimizer entries", grads.len(), self.m.len()),
            });
        }
        if let Some((index, param)) = grads.first_non_finite() {
            return Err(Error::NonFiniteGradient { index, param });
        }
        let lr = self.config.lr.per_slot(self.step);
        let (b1, b2, eps) = (self.config.beta1, self.config.beta2, self.config.eps);
        let one = T::one();
        for (i, prim) in map.primitives_mut().iter_mut().enumerate() {
            let g = grads.grads[i].to_array();
            let mut p = prim.to_array();
            self.updates[i] = self.updates[i].saturating_add(1);
            let t = self.updates[i] as i32;
            let c1 = one - b1.powi(t);
            let c2 = one - b2.powi(t);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..PARAMS_PER_PRIMITIVE {
                m[k] = b1 * m[k] + (one - b1) * g[k];
                v[k] = b2 * v[k] + (one - b2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr[k] * m_hat / (v_hat.sqrt() + eps);
            }
            *prim = crate::gaussian::GaussianPrimitive::from_array(&p);
            prim.normalize_rotation();
        }
        self.step += 1;
        Ok(())
    }
}
