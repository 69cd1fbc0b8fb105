use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::{normalize_quat, GaussianPrimitive, PrimitiveGrad};
use crate::linalg::{mat_mul, mat_t_vec, quat_to_mat, quat_to_mat_backward, transpose, Mat3};
use crate::real::{sigmoid, Real};
use crate::sh::{eval_sh_backward, eval_sh_full};

use super::{RasterOptions, GRAD2D};

/// A primitive after projection into one camera.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected2D<T> {
    pub primitive_index: usize,
    /// Pixel coordinates; pixel `(x, y)` has its center at `(x + 0.5, y + 0.5)`.
    pub mean2d: [T; 2],
    /// Dilated screen-space covariance `(xx, xy, yy)`.
    pub cov2d: [T; 3],
    /// Inverse of `cov2d`, `(a, b, c)`.
    pub conic: [T; 3],
    pub depth: T,
    pub rgb: [T; 3],
    pub opacity: T,
    /// 3σ radius along the major axis, in pixels.
    pub radius: T,
    /// Covered tiles as `[x0, y0, x1, y1)`.
    pub tile_rect: [usize; 4],
    /// Exponents below this give an alpha under the cutoff; slightly loose so
    /// that the skip never changes which pairs are blended.
    pub(crate) power_cut: T,
    pub(crate) p_cam: [T; 3],
    pub(crate) view_dir: [T; 3],
    pub(crate) view_dist: T,
    pub(crate) rgb_clamped: [bool; 3],
}

impl<T: Real> Projected2D<T> {
    pub(crate) fn cast<U: Real>(&self) -> Projected2D<U> {
        let c = |v: T| U::lit(v.as_f64());
        Projected2D {
            primitive_index: self.primitive_index,
            mean2d: self.mean2d.map(c),
            cov2d: self.cov2d.map(c),
            conic: self.conic.map(c),
            depth: c(self.depth),
            rgb: self.rgb.map(c),
            opacity: c(self.opacity),
            radius: c(self.radius),
            tile_rect: self.tile_rect,
            power_cut: c(self.power_cut),
            p_cam: self.p_cam.map(c),
            view_dir: self.view_dir.map(c),
            view_dist: c(self.view_dist),
            rgb_clamped: self.rgb_clamped,
        }
    }
}

/// Projects one primitive. `Ok(None)` means culled.
pub fn project_gaussian<T: Real>(
    index: usize,
    prim: &GaussianPrimitive<T>,
    camera: &Camera<T>,
    opts: &RasterOptions<T>,
) -> Result<Option<Projected2D<T>>> {
    if let Some(field) = prim.non_finite_field() {
        return Err(Error::NonFinitePrimitive { index, field });
    }
    let p_cam = camera.pose.transform(&prim.position);
    let [x, y, z] = p_cam;
    if !(z > opts.near) {
        return Ok(None);
    }
    let cov3d = prim.covariance().map_err(|_| Error::NonFinitePrimitive { index, field: "rotation" })?;
    let t2 = jacobian_times_rotation(camera, &p_cam);
    let mut cov = project_cov(&t2, &cov3d);
    cov[0] += opts.dilation;
    cov[2] += opts.dilation;
    let det = cov[0] * cov[2] - cov[1] * cov[1];
    if !(det > T::zero()) {
        return Ok(None);
    }
    let conic = [cov[2] / det, -cov[1] / det, cov[0] / det];
    let half_trace = T::lit(0.5) * (cov[0] + cov[2]);
    let lambda_max = half_trace + (half_trace * half_trace - det).max(T::zero()).sqrt();
    let radius = T::lit(3.0) * lambda_max.sqrt();
    let mean2d = [camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy];

    let (w, h) = (T::lit(camera.width as f64), T::lit(camera.height as f64));
    let (lo_x, hi_x) = (mean2d[0] - radius, mean2d[0] + radius);
    let (lo_y, hi_y) = (mean2d[1] - radius, mean2d[1] + radius);
    if !(hi_x > T::zero() && lo_x < w && hi_y > T::zero() && lo_y < h) {
        return Ok(None);
    }
    let ts = T::lit(opts.tile_size as f64);
    let tiles_x = camera.width.div_ceil(opts.tile_size);
    let tiles_y = camera.height.div_ceil(opts.tile_size);
    let x0 = (lo_x.max(T::zero()) / ts).floor().as_f64() as usize;
    let y0 = (lo_y.max(T::zero()) / ts).floor().as_f64() as usize;
    let x1 = ((hi_x.min(w) / ts).ceil().as_f64() as usize).min(tiles_x);
    let y1 = ((hi_y.min(h) / ts).ceil().as_f64() as usize).min(tiles_y);
    if x0 >= x1 || y0 >= y1 {
        return Ok(None);
    }

    let v = crate::linalg::sub(&prim.position, &camera.center());
    let view_dist = crate::linalg::norm(&v);
    let view_dir = if view_dist > T::zero() { v.map(|c| c / view_dist) } else { [T::zero(), T::zero(), T::one()] };
    let color = eval_sh_full(&prim.sh, &view_dir, opts.sh_degree);

    let opacity = sigmoid(prim.opacity_logit);
    let power_cut = if opacity > T::zero() && opts.alpha_min > T::zero() {
        (opts.alpha_min / opacity).ln() - T::lit(1e-3)
    } else {
        T::neg_infinity()
    };
    Ok(Some(Projected2D {
        primitive_index: index,
        mean2d,
        cov2d: cov,
        conic,
        depth: z,
        rgb: color.rgb,
        opacity,
        radius,
        tile_rect: [x0, y0, x1, y1],
        power_cut,
        p_cam,
        view_dir,
        view_dist,
        rgb_clamped: color.clamped,
    }))
}

/// Rows of `J·W`, where `J` is the perspective Jacobian at `p_cam`.
fn jacobian_times_rotation<T: Real>(camera: &Camera<T>, p_cam: &[T; 3]) -> [[T; 3]; 2] {
    let j = jacobian(camera, p_cam);
    let w = &camera.pose.rotation;
    let mut t2 = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for k in 0..3 {
            t2[r][k] = j[r][0] * w[0][k] + j[r][1] * w[1][k] + j[r][2] * w[2][k];
        }
    }
    t2
}

fn jacobian<T: Real>(camera: &Camera<T>, p_cam: &[T; 3]) -> [[T; 3]; 2] {
    let [x, y, z] = *p_cam;
    let iz = T::one() / z;
    let iz2 = iz * iz;
    [[camera.fx * iz, T::zero(), -camera.fx * x * iz2], [T::zero(), camera.fy * iz, -camera.fy * y * iz2]]
}

fn project_cov<T: Real>(t2: &[[T; 3]; 2], cov3d: &Mat3<T>) -> [T; 3] {
    let mut ts = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for k in 0..3 {
            ts[r][k] = t2[r][0] * cov3d[0][k] + t2[r][1] * cov3d[1][k] + t2[r][2] * cov3d[2][k];
        }
    }
    let e = |r: usize, s: usize| ts[r][0] * t2[s][0] + ts[r][1] * t2[s][1] + ts[r][2] * t2[s][2];
    [e(0, 0), e(0, 1), e(1, 1)]
}

/// Pulls gradients w.r.t. the projected quantities back to the primitive's
/// parameters.
///
/// `g2d` holds `dL/d(mean x, mean y, conic a, b, c, opacity, r, g, b)`.
pub fn project_backward<T: Real>(
    prim: &GaussianPrimitive<T>,
    camera: &Camera<T>,
    proj: &Projected2D<T>,
    g2d: &[T; GRAD2D],
    sh_degree: u8,
) -> Result<PrimitiveGrad<T>> {
    let mut out = PrimitiveGrad::zeroed();
    let [g_mx, g_my, g_a, g_b, g_c, g_op, g_r, g_g, g_bl] = *g2d;

    // Conic is the inverse of the dilated covariance (A, B, C).
    let [ca, cb, cc] = proj.cov2d;
    let d = ca * cc - cb * cb;
    let d2 = d * d;
    let two = T::lit(2.0);
    let g_ca = g_a * (-cc * cc / d2) + g_b * (cb * cc / d2) + g_c * (T::one() / d - ca * cc / d2);
    let g_cc = g_a * (T::one() / d - ca * cc / d2) + g_b * (cb * ca / d2) + g_c * (-ca * ca / d2);
    let g_cb = g_a * (two * cb * cc / d2) + g_b * (-T::one() / d - two * cb * cb / d2) + g_c * (two * ca * cb / d2);
    let gcov = [[g_ca, T::lit(0.5) * g_cb], [T::lit(0.5) * g_cb, g_cc]];

    let (q_unit, q_norm) = normalize_quat(&prim.rotation)?;
    let rot = quat_to_mat(&q_unit);
    let s = prim.log_scale.map(|v| v.exp());
    let mut m = rot;
    for row in m.iter_mut() {
        for j in 0..3 {
            row[j] *= s[j];
        }
    }
    let cov3d = mat_mul(&m, &transpose(&m));
    let t2 = jacobian_times_rotation(camera, &proj.p_cam);

    // dΣ = T2ᵀ·G·T2 and dT2 = 2·G·T2·Σ.
    let mut g_t = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for k in 0..3 {
            g_t[r][k] = gcov[r][0] * t2[0][k] + gcov[r][1] * t2[1][k];
        }
    }
    let mut g_sigma = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            g_sigma[i][j] = t2[0][i] * g_t[0][j] + t2[1][i] * g_t[1][j];
        }
    }
    let mut g_t2 = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for k in 0..3 {
            g_t2[r][k] = two * (g_t[r][0] * cov3d[0][k] + g_t[r][1] * cov3d[1][k] + g_t[r][2] * cov3d[2][k]);
        }
    }
    let w = &camera.pose.rotation;
    let mut g_j = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for mm in 0..3 {
            g_j[r][mm] = g_t2[r][0] * w[mm][0] + g_t2[r][1] * w[mm][1] + g_t2[r][2] * w[mm][2];
        }
    }

    let [x, y, z] = proj.p_cam;
    let (fx, fy) = (camera.fx, camera.fy);
    let iz = T::one() / z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let g_pc = [
        g_mx * fx * iz - g_j[0][2] * fx * iz2,
        g_my * fy * iz - g_j[1][2] * fy * iz2,
        -g_mx * fx * x * iz2 - g_my * fy * y * iz2 - g_j[0][0] * fx * iz2
            + g_j[0][2] * two * fx * x * iz3
            - g_j[1][1] * fy * iz2
            + g_j[1][2] * two * fy * y * iz3,
    ];
    let mut g_pos = mat_t_vec(w, &g_pc);

    let (g_sh, g_dir) = eval_sh_backward(&prim.sh, &proj.view_dir, sh_degree, &proj.rgb_clamped, &[g_r, g_g, g_bl]);
    out.sh = g_sh;
    if proj.view_dist > T::zero() {
        let dd = crate::linalg::dot(&proj.view_dir, &g_dir);
        for k in 0..3 {
            g_pos[k] += (g_dir[k] - proj.view_dir[k] * dd) / proj.view_dist;
        }
    }
    out.position = g_pos;

    // Σ = M·Mᵀ with M = R·S.
    let mut g_m = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            g_m[i][j] = two * (g_sigma[i][0] * m[0][j] + g_sigma[i][1] * m[1][j] + g_sigma[i][2] * m[2][j]);
        }
    }
    let mut g_rot = [[T::zero(); 3]; 3];
    for j in 0..3 {
        let mut gs = T::zero();
        for i in 0..3 {
            gs += g_m[i][j] * rot[i][j];
            g_rot[i][j] = g_m[i][j] * s[j];
        }
        out.log_scale[j] = gs * s[j];
    }
    let g_qu = quat_to_mat_backward(&q_unit, &g_rot);
    let proj_q = q_unit[0] * g_qu[0] + q_unit[1] * g_qu[1] + q_unit[2] * g_qu[2] + q_unit[3] * g_qu[3];
    for k in 0..4 {
        out.rotation[k] = (g_qu[k] - q_unit[k] * proj_q) / q_norm;
    }

    let o = proj.opacity;
    out.opacity_logit = g_op * o * (T::one() - o);
    Ok(out)
}
