//! Tile-based differentiable rasterization.
//!
//! The forward pass projects every primitive, bins the splats into
//! `tile_size`² tiles, sorts each tile front-to-back and alpha-blends every
//! pixel. While blending it stores the pixel state (transmittance and
//! accumulated color) before every `bucket_size`-th splat of the tile list.
//!
//! Two backward passes produce the same gradients:
//!
//! - [`backward_pixelwise`] walks each pixel's splats in reverse depth order and
//!   adds every per-pair gradient into shared per-splat accumulators.
//! - [`backward_splatwise`] splits each tile list into buckets. A bucket is one
//!   work unit: it restores pixel states from the bucket's checkpoint, replays
//!   its own splats forward, and sums the gradients of its splats over all
//!   pixels locally. Partial sums are merged once per bucket.

mod backward;
mod forward;
mod project;

use alloc::vec;
use alloc::vec::Vec;

pub use backward::{backward_pixelwise, backward_splatwise, splatwise_partials, BucketPartial};
pub use forward::{rasterize_forward, PixelState, RenderOutput, TileData};
pub use project::{project_backward, project_gaussian, Projected2D};

use crate::error::{Error, Result};
use crate::gaussian::{PrimitiveGrad, SH_LEN};
use crate::real::Real;

/// How per-splat gradient contributions are summed across work units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Per-work-unit partial sums merged in index order. Bit-reproducible.
    #[default]
    Deterministic,
    /// Shared accumulators updated with atomic compare-and-swap.
    Atomic,
}

/// Which backward pass to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BackwardMode {
    Pixel,
    #[default]
    Splat,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterOptions<T> {
    pub tile_size: usize,
    /// Checkpoint interval and bucket length of the splat-wise pass.
    pub bucket_size: usize,
    /// Blending stops once transmittance falls below this.
    pub t_min: T,
    /// Splats with a smaller alpha at a pixel are skipped.
    pub alpha_min: T,
    pub alpha_max: T,
    pub background: [T; 3],
    pub sh_degree: u8,
    pub near: T,
    /// Added to the diagonal of every projected covariance.
    pub dilation: T,
    pub checkpoints: bool,
    pub reduction: Reduction,
}

impl<T: Real> Default for RasterOptions<T> {
    fn default() -> Self {
        Self {
            tile_size: 16,
            bucket_size: 32,
            t_min: T::lit(1e-4),
            alpha_min: T::lit(1.0 / 255.0),
            alpha_max: T::lit(0.99),
            background: [T::zero(); 3],
            sh_degree: 3,
            near: T::lit(0.01),
            dilation: T::lit(0.3),
            checkpoints: true,
            reduction: Reduction::Deterministic,
        }
    }
}

impl<T: Real> RasterOptions<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.tile_size == 0 || self.bucket_size == 0 {
            return bad("tile and bucket sizes must be positive");
        }
        if !(self.alpha_min >= T::zero() && self.alpha_min <= self.alpha_max && self.alpha_max <= T::one()) {
            return bad("need 0 <= alpha_min <= alpha_max <= 1");
        }
        if !(self.t_min >= T::zero()) {
            return bad("t_min must be non-negative");
        }
        if !(self.near > T::zero()) {
            return bad("near plane must be positive");
        }
        if self.sh_degree > 3 {
            return bad("sh_degree must be at most 3");
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> RasterOptions<U> {
        let c = |v: T| U::lit(v.as_f64());
        RasterOptions {
            tile_size: self.tile_size,
            bucket_size: self.bucket_size,
            t_min: c(self.t_min),
            alpha_min: c(self.alpha_min),
            alpha_max: c(self.alpha_max),
            background: self.background.map(c),
            sh_degree: self.sh_degree,
            near: c(self.near),
            dilation: c(self.dilation),
            checkpoints: self.checkpoints,
            reduction: self.reduction,
        }
    }
}

/// Gradient of a scalar loss w.r.t. every primitive parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads<T> {
    pub grads: Vec<PrimitiveGrad<T>>,
    /// Norm of the gradient w.r.t. the projected mean, in normalized device
    /// coordinates (pixel gradient scaled by half the image size).
    pub mean2d_grad_norm: Vec<T>,
    /// Primitives that survived projection and culling in this pass.
    pub contributed: Vec<bool>,
}

impl<T: Real> ParamGrads<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            grads: vec![PrimitiveGrad::zeroed(); n],
            mean2d_grad_norm: vec![T::zero(); n],
            contributed: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// First non-finite gradient entry, as `(primitive, parameter name)`.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.grads.iter().enumerate().find_map(|(i, g)| g.non_finite_field().map(|f| (i, f)))
    }

    /// Largest per-group normwise difference.
    ///
    /// Parameters are grouped as position, rotation, log-scale, opacity and SH.
    /// For each group this is `max|a − b| / max|b|`; the result is the maximum
    /// over groups. A group that is identically zero in `b` contributes 0 when
    /// `a` is also zero there and infinity otherwise.
    pub fn max_relative_difference(&self, reference: &ParamGrads<T>) -> f64 {
        if self.len() != reference.len() {
            return f64::INFINITY;
        }
        const GROUPS: [(usize, usize); 5] = [(0, 3), (3, 7), (7, 10), (10, 11), (11, 11 + SH_LEN)];
        let mut worst = 0.0f64;
        for (lo, hi) in GROUPS {
            let mut diff = 0.0f64;
            let mut scale = 0.0f64;
            for (a, b) in self.grads.iter().zip(&reference.grads) {
                let (a, b) = (a.to_array(), b.to_array());
                for k in lo..hi {
                    let (x, y) = (a[k].as_f64(), b[k].as_f64());
                    diff = diff.max((x - y).abs());
                    scale = scale.max(y.abs());
                }
            }
            let rel = if scale > 0.0 {
                diff / scale
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(rel);
        }
        worst
    }
}

/// Number of 2D gradient slots per splat: mean (2), conic (3), opacity, rgb (3).
pub(crate) const GRAD2D: usize = 9;

/// Alpha of a splat at one pixel.
#[derive(Clone, Copy, Debug)]
pub(crate) struct AlphaEval<T> {
    pub alpha: T,
    pub gauss: T,
    pub dx: T,
    pub dy: T,
    pub clamped: bool,
}

/// Returns `None` when the splat is skipped at this pixel.
#[inline(always)]
pub(crate) fn splat_alpha<T: Real>(p: &Projected2D<T>, px: T, py: T, opts: &RasterOptions<T>) -> Option<AlphaEval<T>> {
    let dx = px - p.mean2d[0];
    let dy = py - p.mean2d[1];
    let [a, b, c] = p.conic;
    let power = T::lit(-0.5) * (a * dx * dx + c * dy * dy) - b * dx * dy;
    if power < p.power_cut {
        return None;
    }
    let gauss = power.exp();
    let raw = p.opacity * gauss;
    let clamped = raw > opts.alpha_max;
    let alpha = if clamped { opts.alpha_max } else { raw };
    if alpha < opts.alpha_min {
        return None;
    }
    Some(AlphaEval { alpha, gauss, dx, dy, clamped })
}

#[inline(always)]
pub(crate) fn blend<T: Real>(state: &mut PixelState<T>, rgb: &[T; 3], alpha: T) {
    let w = alpha * state.t;
    state.rgb[0] += rgb[0] * w;
    state.rgb[1] += rgb[1] * w;
    state.rgb[2] += rgb[2] * w;
    state.t = state.t * (T::one() - alpha);
}

/// Gradients of one splat-pixel pair w.r.t. the splat's 2D quantities.
#[inline(always)]
pub(crate) fn pair_grads<T: Real>(
    p: &Projected2D<T>,
    a: &AlphaEval<T>,
    dl_dalpha: T,
    weight: T,
    dl_dpix: &[T; 3],
) -> [T; GRAD2D] {
    let mut out = [T::zero(); GRAD2D];
    out[6] = weight * dl_dpix[0];
    out[7] = weight * dl_dpix[1];
    out[8] = weight * dl_dpix[2];
    if !a.clamped {
        out[5] = a.gauss * dl_dalpha;
        let dl_dpower = a.alpha * dl_dalpha;
        let [ca, cb, cc] = p.conic;
        out[0] = dl_dpower * (ca * a.dx + cb * a.dy);
        out[1] = dl_dpower * (cb * a.dx + cc * a.dy);
        out[2] = T::lit(-0.5) * a.dx * a.dx * dl_dpower;
        out[3] = -(a.dx * a.dy) * dl_dpower;
        out[4] = T::lit(-0.5) * a.dy * a.dy * dl_dpower;
    }
    out
}

/// Gradient sums are kept in double precision whatever the render precision.
pub(crate) type Acc2D = [f64; GRAD2D];

#[inline(always)]
pub(crate) fn add_into<T: Real>(acc: &mut Acc2D, g: &[T; GRAD2D]) {
    for k in 0..GRAD2D {
        acc[k] += g[k].as_f64();
    }
}
