//! Windowed structural similarity with its analytic gradient.

use alloc::vec;
use alloc::vec::Vec;

use crate::real::Real;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

fn kernel<T: Real>() -> [T; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let raw: [f64; WINDOW] = core::array::from_fn(|i| {
        let d = i as f64 - half;
        num_traits::Float::exp(-d * d / (2.0 * SIGMA * SIGMA))
    });
    let sum: f64 = raw.iter().sum();
    raw.map(|v| T::lit(v / sum))
}

/// Mirror index without repeating the edge sample.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Source index of every tap, `n × WINDOW` row-major.
fn taps(n: usize) -> Vec<usize> {
    let half = (WINDOW / 2) as isize;
    (0..n).flat_map(|i| (0..WINDOW).map(move |j| reflect(i as isize + j as isize - half, n))).collect()
}

/// Separable Gaussian blur of a `w×h` plane with reflected borders.
fn blur<T: Real>(src: &[T], w: usize, h: usize, k: &[T; WINDOW]) -> Vec<T> {
    let (tx, ty) = (taps(w), taps(h));
    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let idx = &tx[x * WINDOW..(x + 1) * WINDOW];
            tmp[y * w + x] = k.iter().zip(idx).fold(T::zero(), |acc, (kv, &i)| acc + *kv * row[i]);
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        let idx = &ty[y * WINDOW..(y + 1) * WINDOW];
        let dst = &mut out[y * w..(y + 1) * w];
        for (kv, &i) in k.iter().zip(idx) {
            for (o, v) in dst.iter_mut().zip(&tmp[i * w..(i + 1) * w]) {
                *o += *kv * *v;
            }
        }
    }
    out
}

/// Adjoint of [`blur`].
fn blur_transpose<T: Real>(g: &[T], w: usize, h: usize, k: &[T; WINDOW]) -> Vec<T> {
    let (tx, ty) = (taps(w), taps(h));
    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        let idx = &ty[y * WINDOW..(y + 1) * WINDOW];
        let src = &g[y * w..(y + 1) * w];
        for (kv, &i) in k.iter().zip(idx) {
            for (t, v) in tmp[i * w..(i + 1) * w].iter_mut().zip(src) {
                *t += *kv * *v;
            }
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        let row = &mut out[y * w..(y + 1) * w];
        for x in 0..w {
            let v = tmp[y * w + x];
            for (kv, &i) in k.iter().zip(&tx[x * WINDOW..(x + 1) * WINDOW]) {
                row[i] += *kv * v;
            }
        }
    }
    out
}

/// Mean SSIM of two planes and, if `with_grad`, its gradient w.r.t. `x`.
pub(crate) fn ssim_plane<T: Real>(x: &[T], y: &[T], w: usize, h: usize, with_grad: bool) -> (T, Option<Vec<T>>) {
    let k = kernel::<T>();
    let prod = |a: &[T], b: &[T]| a.iter().zip(b).map(|(p, q)| *p * *q).collect::<Vec<T>>();
    let mu_x = blur(x, w, h, &k);
    let mu_y = blur(y, w, h, &k);
    let e_xx = blur(&prod(x, x), w, h, &k);
    let e_yy = blur(&prod(y, y), w, h, &k);
    let e_xy = blur(&prod(x, y), w, h, &k);
    let (c1, c2, two) = (T::lit(C1), T::lit(C2), T::lit(2.0));
    let n = w * h;
    let mut total = T::zero();
    let mut g_mu = vec![T::zero(); if with_grad { n } else { 0 }];
    let mut g_exx = g_mu.clone();
    let mut g_exy = g_mu.clone();
    let inv_n = T::one() / T::lit(n as f64);
    for i in 0..n {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let n1 = two * mx * my + c1;
        let n2 = two * (e_xy[i] - mx * my) + c2;
        let d1 = mx * mx + my * my + c1;
        let d2 = (e_xx[i] - mx * mx) + (e_yy[i] - my * my) + c2;
        let s = n1 * n2 / (d1 * d2);
        total += s;
        if with_grad {
            let dd = d1 * d2;
            g_mu[i] = inv_n * (two * my * (n2 - n1) / dd - two * mx * s / d1 + two * mx * s / d2);
            g_exx[i] = inv_n * (-s / d2);
            g_exy[i] = inv_n * (two * n1 / dd);
        }
    }
    let mean = total * inv_n;
    if !with_grad {
        return (mean, None);
    }
    let a = blur_transpose(&g_mu, w, h, &k);
    let b = blur_transpose(&g_exx, w, h, &k);
    let c = blur_transpose(&g_exy, w, h, &k);
    let grad = (0..n).map(|i| a[i] + two * x[i] * b[i] + y[i] * c[i]).collect();
    (mean, Some(grad))
}
