//! Gaussian primitives, their activations, and the growable map that holds them.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{mat_mul, quat_to_mat, transpose, Mat3};
use crate::real::{sigmoid, Real};

/// Spherical-harmonic coefficients per color channel (degree 3).
pub const SH_COEFFS: usize = 16;
/// Length of the SH coefficient vector, laid out coefficient-major: `sh[k * 3 + channel]`.
pub const SH_LEN: usize = SH_COEFFS * 3;
/// Number of scalar parameters of one primitive.
pub const PARAMS_PER_PRIMITIVE: usize = 3 + 4 + 3 + 1 + SH_LEN;

/// One 3D Gaussian.
///
/// Opacity is stored as a logit and scale as per-axis log standard deviation;
/// [`opacity`](Self::opacity) and [`scale`](Self::scale) apply the activations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianPrimitive<T> {
    pub position: [T; 3],
    /// `(w, x, y, z)`, renormalized after every optimizer step.
    pub rotation: [T; 4],
    pub log_scale: [T; 3],
    pub opacity_logit: T,
    pub sh: [T; SH_LEN],
}

/// Gradients share the primitive layout, one slot per parameter.
pub type PrimitiveGrad<T> = GaussianPrimitive<T>;

impl<T: Real> GaussianPrimitive<T> {
    pub fn zeroed() -> Self {
        Self {
            position: [T::zero(); 3],
            rotation: [T::zero(); 4],
            log_scale: [T::zero(); 3],
            opacity_logit: T::zero(),
            sh: [T::zero(); SH_LEN],
        }
    }

    #[inline]
    pub fn opacity(&self) -> T {
        sigmoid(self.opacity_logit)
    }

    #[inline]
    pub fn scale(&self) -> [T; 3] {
        self.log_scale.map(|s| s.exp())
    }

    pub fn covariance(&self) -> Result<Mat3<T>> {
        build_covariance(&self.rotation, &self.log_scale)
    }

    /// Flattened parameters: position, rotation, log-scale, opacity logit, SH.
    pub fn to_array(&self) -> [T; PARAMS_PER_PRIMITIVE] {
        let mut out = [T::zero(); PARAMS_PER_PRIMITIVE];
        out[0..3].copy_from_slice(&self.position);
        out[3..7].copy_from_slice(&self.rotation);
        out[7..10].copy_from_slice(&self.log_scale);
        out[10] = self.opacity_logit;
        out[11..].copy_from_slice(&self.sh);
        out
    }

    pub fn from_array(a: &[T; PARAMS_PER_PRIMITIVE]) -> Self {
        let mut p = Self::zeroed();
        p.position.copy_from_slice(&a[0..3]);
        p.rotation.copy_from_slice(&a[3..7]);
        p.log_scale.copy_from_slice(&a[7..10]);
        p.opacity_logit = a[10];
        p.sh.copy_from_slice(&a[11..]);
        p
    }

    pub fn cast<U: Real>(&self) -> GaussianPrimitive<U> {
        let a = self.to_array();
        GaussianPrimitive::from_array(&a.map(|v| U::lit(v.as_f64())))
    }

    /// Name of the first non-finite field, if any.
    pub fn non_finite_field(&self) -> Option<&'static str> {
        if !self.position.iter().all(|v| v.is_finite()) {
            Some("position")
        } else if !self.rotation.iter().all(|v| v.is_finite()) {
            Some("rotation")
        } else if !self.log_scale.iter().all(|v| v.is_finite()) {
            Some("log_scale")
        } else if !self.opacity_logit.is_finite() {
            Some("opacity_logit")
        } else if !self.sh.iter().all(|v| v.is_finite()) {
            Some("sh")
        } else {
            None
        }
    }

    pub fn normalize_rotation(&mut self) {
        let n = self.rotation.iter().map(|&v| v * v).sum::<T>().sqrt();
        if n > T::zero() {
            self.rotation = self.rotation.map(|v| v / n);
        }
    }
}

/// Normalizes a quaternion, rejecting the zero quaternion.
pub fn normalize_quat<T: Real>(q: &[T; 4]) -> Result<([T; 4], T)> {
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if !(n > T::zero()) || !n.is_finite() {
        return Err(Error::InvalidParameter("zero-norm quaternion".into()));
    }
    Ok((q.map(|v| v / n), n))
}

/// `Σ = R · diag(exp(2·log_scale)) · Rᵀ` for the normalized `rotation`.
pub fn build_covariance<T: Real>(rotation: &[T; 4], log_scale: &[T; 3]) -> Result<Mat3<T>> {
    let (q, _) = normalize_quat(rotation)?;
    let r = quat_to_mat(&q);
    let s = log_scale.map(|v| v.exp());
    let mut m = r;
    for row in m.iter_mut() {
        for j in 0..3 {
            row[j] *= s[j];
        }
    }
    Ok(mat_mul(&m, &transpose(&m)))
}

/// Per-primitive densification statistics since the last densify event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradStat<T> {
    /// Sum of 2D positional gradient norms over contributing iterations.
    pub grad_norm_sum: T,
    /// Sum of 3D positional gradients over contributing iterations.
    pub position_grad_sum: [T; 3],
    pub count: u32,
}

impl<T: Real> GradStat<T> {
    pub fn zeroed() -> Self {
        Self { grad_norm_sum: T::zero(), position_grad_sum: [T::zero(); 3], count: 0 }
    }

    pub fn mean_grad_norm(&self) -> T {
        if self.count == 0 {
            T::zero()
        } else {
            self.grad_norm_sum / T::lit(self.count as f64)
        }
    }

    pub fn mean_position_grad(&self) -> [T; 3] {
        if self.count == 0 {
            [T::zero(); 3]
        } else {
            let c = T::lit(self.count as f64);
            self.position_grad_sum.map(|v| v / c)
        }
    }
}

/// Ordered store of primitives with aligned densification statistics.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct GaussianMap<T> {
    primitives: Vec<GaussianPrimitive<T>>,
    grad_stats: Vec<GradStat<T>>,
}

impl<T: Real> GaussianMap<T> {
    pub fn new() -> Self {
        Self { primitives: Vec::new(), grad_stats: Vec::new() }
    }

    pub fn from_primitives(primitives: Vec<GaussianPrimitive<T>>) -> Self {
        let grad_stats = primitives.iter().map(|_| GradStat::zeroed()).collect();
        Self { primitives, grad_stats }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn primitives(&self) -> &[GaussianPrimitive<T>] {
        &self.primitives
    }

    /// Mutable access to parameters; the length cannot change through this.
    pub fn primitives_mut(&mut self) -> &mut [GaussianPrimitive<T>] {
        &mut self.primitives
    }

    pub fn grad_stats(&self) -> &[GradStat<T>] {
        &self.grad_stats
    }

    pub fn grad_stats_mut(&mut self) -> &mut [GradStat<T>] {
        &mut self.grad_stats
    }

    pub fn reset_grad_stats(&mut self) {
        self.grad_stats.iter_mut().for_each(|s| *s = GradStat::zeroed());
    }

    /// Appends primitives with fresh statistics.
    pub fn insert<I: IntoIterator<Item = GaussianPrimitive<T>>>(&mut self, primitives: I) {
        for p in primitives {
            self.primitives.push(p);
            self.grad_stats.push(GradStat::zeroed());
        }
    }

    /// Removes the given indices, keeping survivors in their original order.
    pub fn remove(&mut self, indices: &[usize]) -> Result<()> {
        let n = self.len();
        let mut doomed = alloc::vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            if doomed[i] {
                return Err(Error::DuplicateIndex(i));
            }
            doomed[i] = true;
        }
        let mut keep = doomed.iter().map(|d| !d);
        self.primitives.retain(|_| keep.next().unwrap_or(true));
        let mut keep = doomed.iter().map(|d| !d);
        self.grad_stats.retain(|_| keep.next().unwrap_or(true));
        Ok(())
    }

    /// Rebuilds the map as `survivors` (old indices, in the given order) followed by `appended`.
    pub fn gather(&mut self, survivors: &[usize], appended: Vec<GaussianPrimitive<T>>) -> Result<()> {
        let n = self.len();
        let mut primitives = Vec::with_capacity(survivors.len() + appended.len());
        let mut stats = Vec::with_capacity(survivors.len() + appended.len());
        for &i in survivors {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            primitives.push(self.primitives[i]);
            stats.push(self.grad_stats[i]);
        }
        for p in appended {
            primitives.push(p);
            stats.push(GradStat::zeroed());
        }
        self.primitives = primitives;
        self.grad_stats = stats;
        Ok(())
    }

    /// First primitive holding a non-finite parameter.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.primitives
            .iter()
            .enumerate()
            .find_map(|(i, p)| p.non_finite_field().map(|f| (i, f)))
    }

    pub fn cast<U: Real>(&self) -> GaussianMap<U> {
        GaussianMap {
            primitives: self.primitives.iter().map(|p| p.cast()).collect(),
            grad_stats: self
                .grad_stats
                .iter()
                .map(|s| GradStat {
                    grad_norm_sum: U::lit(s.grad_norm_sum.as_f64()),
                    position_grad_sum: s.position_grad_sum.map(|v| U::lit(v.as_f64())),
                    count: s.count,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::det3;
    use proptest::prelude::*;

    fn prim(x: f64) -> GaussianPrimitive<f64> {
        let mut p = GaussianPrimitive::zeroed();
        p.position = [x, 0.0, 0.0];
        p.rotation = [1.0, 0.0, 0.0, 0.0];
        p
    }

    fn assert_mat_eq(a: &Mat3<f64>, b: &Mat3<f64>) {
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - b[i][j]).abs() < 1e-12, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn covariance_identity() {
        let c = build_covariance(&[1.0, 0.0, 0.0, 0.0], &[0.0f64; 3]).unwrap();
        assert_mat_eq(&c, &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn covariance_axis_scaling() {
        let c = build_covariance(&[1.0, 0.0, 0.0, 0.0], &[2f64.ln(), 0.0, 0.0]).unwrap();
        assert_mat_eq(&c, &[[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn covariance_rotated_about_z() {
        // 90 degrees about z maps the x axis onto y.
        let h = core::f64::consts::FRAC_1_SQRT_2;
        let c = build_covariance(&[h, 0.0, 0.0, h], &[2f64.ln(), 0.0, 0.0]).unwrap();
        assert_mat_eq(&c, &[[1.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 1.0]]);
    }

    #[test]
    fn covariance_rejects_zero_quaternion() {
        assert!(matches!(build_covariance(&[0.0f64; 4], &[0.0; 3]), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn unnormalized_quaternion_is_normalized() {
        let a = build_covariance(&[2.0, 0.4, -0.2, 1.0], &[0.1f64, -0.3, 0.5]).unwrap();
        let n = (4.0f64 + 0.16 + 0.04 + 1.0).sqrt();
        let b = build_covariance(&[2.0 / n, 0.4 / n, -0.2 / n, 1.0 / n], &[0.1f64, -0.3, 0.5]).unwrap();
        assert_mat_eq(&a, &b);
    }

    /// Eigenvalues of a symmetric 3x3 matrix via the trigonometric closed form.
    fn sym_eigenvalues(a: &Mat3<f64>) -> [f64; 3] {
        let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
        let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        if p < 1e-300 {
            return [q; 3];
        }
        let mut b = *a;
        for i in 0..3 {
            for j in 0..3 {
                b[i][j] = (a[i][j] - if i == j { q } else { 0.0 }) / p;
            }
        }
        let r = (det3(&b) / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * core::f64::consts::PI / 3.0).cos();
        let mut e = [e1, 3.0 * q - e1 - e3, e3];
        e.sort_by(|x, y| x.partial_cmp(y).unwrap());
        e
    }

    proptest! {
        #[test]
        fn covariance_is_symmetric_with_scale_eigenvalues(
            q in prop::array::uniform4(-1.0f64..1.0),
            ls in prop::array::uniform3(-1.5f64..1.0),
        ) {
            prop_assume!(q.iter().map(|v| v * v).sum::<f64>() > 1e-2);
            let c = build_covariance(&q, &ls).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert!((c[i][j] - c[j][i]).abs() < 1e-12);
                }
            }
            let mut expected = ls.map(|v| (2.0 * v).exp());
            expected.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let got = sym_eigenvalues(&c);
            for k in 0..3 {
                prop_assert!((got[k] - expected[k]).abs() < 1e-9, "{:?} vs {:?}", got, expected);
            }
            let det = det3(&c);
            let want = (2.0 * ls.iter().sum::<f64>()).exp();
            prop_assert!((det - want).abs() < 1e-9 * want.max(1.0));
        }
    }

    #[test]
    fn map_insert_into_empty() {
        let mut m = GaussianMap::new();
        m.insert([prim(0.0), prim(1.0), prim(2.0)]);
        assert_eq!(m.len(), 3);
        assert_eq!(m.grad_stats().len(), 3);
    }

    #[test]
    fn map_remove_nothing() {
        let mut m = GaussianMap::from_primitives((0..4).map(|i| prim(i as f64)).collect());
        let before = m.clone();
        m.remove(&[]).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn map_remove_keeps_survivor_order() {
        let mut m = GaussianMap::new();
        m.insert((0..5).map(|i| prim(i as f64)));
        m.grad_stats_mut()[2].count = 7;
        m.remove(&[4, 0]).unwrap();
        let xs: Vec<f64> = m.primitives().iter().map(|p| p.position[0]).collect();
        assert_eq!(xs, [1.0, 2.0, 3.0]);
        assert_eq!(m.grad_stats().len(), 3);
        assert_eq!(m.grad_stats()[1].count, 7);
    }

    #[test]
    fn map_remove_rejects_bad_indices() {
        let mut m = GaussianMap::from_primitives(alloc::vec![prim(0.0), prim(1.0)]);
        assert_eq!(m.remove(&[2]), Err(Error::IndexOutOfRange { index: 2, len: 2 }));
        assert_eq!(m.remove(&[1, 1]), Err(Error::DuplicateIndex(1)));
        assert_eq!(m.len(), 2);
    }

    #[test]
    fn flat_array_round_trip() {
        let mut p = prim(0.25);
        p.sh[47] = -3.0;
        p.opacity_logit = 0.5;
        assert_eq!(GaussianPrimitive::from_array(&p.to_array()), p);
    }
}
