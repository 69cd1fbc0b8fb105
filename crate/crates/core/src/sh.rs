//! Real spherical harmonics up to degree 3, in the basis ordering used by
//! common splat exporters.

use crate::gaussian::{SH_COEFFS, SH_LEN};
use crate::real::Real;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Number of basis functions active at `degree`.
#[inline]
pub fn coeff_count(degree: u8) -> usize {
    let d = degree.min(3) as usize + 1;
    d * d
}

/// Basis values and their partial derivatives w.r.t. the (unconstrained) direction components.
pub fn basis_with_grad<T: Real>(dir: &[T; 3], degree: u8) -> ([T; SH_COEFFS], [[T; 3]; SH_COEFFS]) {
    let mut b = [T::zero(); SH_COEFFS];
    let mut g = [[T::zero(); 3]; SH_COEFFS];
    let [x, y, z] = *dir;
    let z0 = T::zero();
    b[0] = T::lit(SH_C0);
    if degree >= 1 {
        let c1 = T::lit(SH_C1);
        b[1] = -c1 * y;
        b[2] = c1 * z;
        b[3] = -c1 * x;
        g[1] = [z0, -c1, z0];
        g[2] = [z0, z0, c1];
        g[3] = [-c1, z0, z0];
    }
    if degree >= 2 {
        let c2 = SH_C2.map(T::lit);
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let two = T::lit(2.0);
        b[4] = c2[0] * x * y;
        b[5] = c2[1] * y * z;
        b[6] = c2[2] * (two * zz - xx - yy);
        b[7] = c2[3] * x * z;
        b[8] = c2[4] * (xx - yy);
        g[4] = [c2[0] * y, c2[0] * x, z0];
        g[5] = [z0, c2[1] * z, c2[1] * y];
        g[6] = [c2[2] * (-two * x), c2[2] * (-two * y), c2[2] * (T::lit(4.0) * z)];
        g[7] = [c2[3] * z, z0, c2[3] * x];
        g[8] = [c2[4] * two * x, c2[4] * (-two * y), z0];
    }
    if degree >= 3 {
        let c3 = SH_C3.map(T::lit);
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (three, four) = (T::lit(3.0), T::lit(4.0));
        let (six, eight, two) = (T::lit(6.0), T::lit(8.0), T::lit(2.0));
        b[9] = c3[0] * y * (three * xx - yy);
        b[10] = c3[1] * x * y * z;
        b[11] = c3[2] * y * (four * zz - xx - yy);
        b[12] = c3[3] * z * (two * zz - three * xx - three * yy);
        b[13] = c3[4] * x * (four * zz - xx - yy);
        b[14] = c3[5] * z * (xx - yy);
        b[15] = c3[6] * x * (xx - three * yy);
        g[9] = [c3[0] * six * x * y, c3[0] * (three * xx - three * yy), z0];
        g[10] = [c3[1] * y * z, c3[1] * x * z, c3[1] * x * y];
        g[11] = [c3[2] * (-two * x * y), c3[2] * (four * zz - xx - three * yy), c3[2] * eight * y * z];
        g[12] = [c3[3] * (-six * x * z), c3[3] * (-six * y * z), c3[3] * (six * zz - three * xx - three * yy)];
        g[13] = [c3[4] * (four * zz - three * xx - yy), c3[4] * (-two * x * y), c3[4] * eight * x * z];
        g[14] = [c3[5] * two * x * z, c3[5] * (-two * y * z), c3[5] * (xx - yy)];
        g[15] = [c3[6] * (three * xx - three * yy), c3[6] * (-six * x * y), z0];
    }
    (b, g)
}

fn unit_or_z<T: Real>(dir: &[T; 3]) -> [T; 3] {
    let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    if n > T::zero() && n.is_finite() {
        dir.map(|v| v / n)
    } else {
        [T::zero(), T::zero(), T::one()]
    }
}

/// Evaluated color before and after the `+0.5`/clamp-at-zero mapping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShColor<T> {
    pub rgb: [T; 3],
    /// Channels that were clamped to zero (zero gradient).
    pub clamped: [bool; 3],
}

/// `rgb = max(Σ c_k·Y_k(dir) + 0.5, 0)` per channel, truncated at `degree`.
pub fn eval_sh<T: Real>(sh: &[T; SH_LEN], view_dir: &[T; 3], degree: u8) -> [T; 3] {
    eval_sh_full(sh, view_dir, degree).rgb
}

pub fn eval_sh_full<T: Real>(sh: &[T; SH_LEN], view_dir: &[T; 3], degree: u8) -> ShColor<T> {
    let dir = unit_or_z(view_dir);
    let (basis, _) = basis_with_grad(&dir, degree);
    let mut rgb = [T::lit(0.5); 3];
    for (k, b) in basis.iter().enumerate().take(coeff_count(degree)) {
        for (c, v) in rgb.iter_mut().enumerate() {
            *v += sh[k * 3 + c] * *b;
        }
    }
    let clamped = rgb.map(|v| v < T::zero());
    ShColor { rgb: rgb.map(|v| v.max(T::zero())), clamped }
}

/// Gradients of `eval_sh` w.r.t. the coefficients and the unit view direction.
pub fn eval_sh_backward<T: Real>(
    sh: &[T; SH_LEN],
    unit_dir: &[T; 3],
    degree: u8,
    clamped: &[bool; 3],
    grad_rgb: &[T; 3],
) -> ([T; SH_LEN], [T; 3]) {
    let (basis, dbasis) = basis_with_grad(unit_dir, degree);
    let g = [0, 1, 2].map(|c| if clamped[c] { T::zero() } else { grad_rgb[c] });
    let mut g_sh = [T::zero(); SH_LEN];
    let mut g_dir = [T::zero(); 3];
    for k in 0..coeff_count(degree) {
        let mut dk = T::zero();
        for c in 0..3 {
            g_sh[k * 3 + c] = basis[k] * g[c];
            dk += sh[k * 3 + c] * g[c];
        }
        for a in 0..3 {
            g_dir[a] += dk * dbasis[k][a];
        }
    }
    (g_sh, g_dir)
}
