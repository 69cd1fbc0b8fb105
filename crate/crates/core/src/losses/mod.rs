//! Photometric training loss, opacity regularization and image metrics.

mod ssim;

use alloc::vec::Vec;

use crate::error::Result;
use crate::image::Image;
use crate::real::{sigmoid, Real};

pub use ssim::{C1, C2, SIGMA as SSIM_SIGMA, WINDOW as SSIM_WINDOW};

pub const DEFAULT_LAMBDA_SSIM: f64 = 0.2;
pub const PSNR_CAP_DB: f64 = 100.0;

/// `(1 − λ)·L1 + λ·(1 − SSIM)` and its gradient w.r.t. the rendered image.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedLoss<T> {
    pub l1: T,
    pub ssim: T,
    /// `1 − ssim`.
    pub ssim_loss: T,
    pub value: T,
    pub grad_image: Image<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown<T> {
    pub l1: T,
    pub ssim_loss: T,
    pub rendered: T,
    pub opacity_reg: T,
    pub total: T,
    pub grad_image: Image<T>,
    /// Gradient of `λ_o · opacity_reg` w.r.t. each opacity logit.
    pub grad_opacity_logit: Vec<T>,
}

/// `(1 − λ_ssim)·l1 + λ_ssim·ssim_loss`.
pub fn blend_terms<T: Real>(l1: T, ssim_loss: T, lambda_ssim: T) -> T {
    (T::one() - lambda_ssim) * l1 + lambda_ssim * ssim_loss
}

pub fn rendered_loss<T: Real>(rendered: &Image<T>, target: &Image<T>, lambda_ssim: T) -> Result<RenderedLoss<T>> {
    rendered.check_shape(target)?;
    let (w, h) = (rendered.width(), rendered.height());
    let count = T::lit((w * h * 3) as f64);
    let mut grad = Image::new(w, h);
    let mut l1 = T::zero();
    let l1_scale = (T::one() - lambda_ssim) / count;
    for ((g, r), t) in grad.data_mut().iter_mut().zip(rendered.data()).zip(target.data()) {
        let d = *r - *t;
        l1 += d.abs();
        *g = if d > T::zero() {
            l1_scale
        } else if d < T::zero() {
            -l1_scale
        } else {
            T::zero()
        };
    }
    l1 = l1 / count;

    let mut ssim_sum = T::zero();
    for c in 0..3 {
        let (s, g) = ssim::ssim_plane(&rendered.channel(c), &target.channel(c), w, h, true);
        ssim_sum += s;
        let g = g.unwrap_or_default();
        // Mean over three channels, negated for the 1 − SSIM loss.
        let k = -lambda_ssim / T::lit(3.0);
        for (i, gv) in g.iter().enumerate() {
            grad.data_mut()[i * 3 + c] += k * *gv;
        }
    }
    let ssim = ssim_sum / T::lit(3.0);
    let ssim_loss = T::one() - ssim;
    Ok(RenderedLoss { l1, ssim, ssim_loss, value: blend_terms(l1, ssim_loss, lambda_ssim), grad_image: grad })
}

/// Mean activated opacity and its gradient w.r.t. each activated value.
pub fn opacity_reg<T: Real>(opacities: &[T]) -> (T, Vec<T>) {
    if opacities.is_empty() {
        return (T::zero(), Vec::new());
    }
    let n = T::lit(opacities.len() as f64);
    let value = opacities.iter().map(|o| o.abs()).sum::<T>() / n;
    let grads = opacities.iter().map(|o| if *o < T::zero() { -T::one() / n } else { T::one() / n }).collect();
    (value, grads)
}

/// [`opacity_reg`] evaluated on logits, with the gradient chained through the logistic.
pub fn opacity_reg_logits<T: Real>(logits: &[T]) -> (T, Vec<T>) {
    let sig: Vec<T> = logits.iter().map(|l| sigmoid(*l)).collect();
    let (value, g) = opacity_reg(&sig);
    (value, g.iter().zip(&sig).map(|(g, s)| *g * *s * (T::one() - *s)).collect())
}

pub fn total_loss<T: Real>(rendered: T, opacity_reg: T, lambda_o: T) -> T {
    rendered + lambda_o * opacity_reg
}

/// Full training objective for one rendered view.
pub fn compute_loss<T: Real>(
    rendered: &Image<T>,
    target: &Image<T>,
    opacity_logits: &[T],
    lambda_ssim: T,
    lambda_o: T,
) -> Result<LossBreakdown<T>> {
    let r = rendered_loss(rendered, target, lambda_ssim)?;
    let (reg, g) = opacity_reg_logits(opacity_logits);
    let reg_grad = g.into_iter().map(|g| g * lambda_o).collect();
    Ok(LossBreakdown {
        l1: r.l1,
        ssim_loss: r.ssim_loss,
        rendered: r.value,
        opacity_reg: reg,
        total: total_loss(r.value, reg, lambda_o),
        grad_image: r.grad_image,
        grad_opacity_logit: reg_grad,
    })
}

pub fn mse<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.check_shape(b)?;
    let n = a.data().len().max(1) as f64;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok(sum / n)
}

/// `10·log10(1/MSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse < 1e-10 {
        PSNR_CAP_DB
    } else {
        (-10.0 * num_traits::Float::log10(mse)).min(PSNR_CAP_DB)
    }
}

/// Mean local SSIM over pixels and channels.
pub fn ssim_metric<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.check_shape(b)?;
    let (w, h) = (a.width(), a.height());
    let mut sum = 0.0;
    for c in 0..3 {
        let pa: Vec<f64> = a.channel(c).iter().map(|v| v.as_f64()).collect();
        let pb: Vec<f64> = b.channel(c).iter().map(|v| v.as_f64()).collect();
        sum += ssim::ssim_plane(&pa, &pb, w, h, false).0;
    }
    Ok(sum / 3.0)
}
