use alloc::format;

use crate::error::{Error, Result};
use crate::linalg::{cross, mat_t_vec, mat_vec, norm, scale, sub, transpose, Mat3, Vec3};
use crate::real::Real;

/// Rigid world-to-camera transform: `x_cam = R·x_world + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose<T> {
    pub rotation: Mat3<T>,
    pub translation: Vec3<T>,
}

impl<T: Real> Pose<T> {
    pub fn identity() -> Self {
        Self { rotation: crate::linalg::identity3(), translation: [T::zero(); 3] }
    }

    #[inline]
    pub fn transform(&self, p: &Vec3<T>) -> Vec3<T> {
        let r = mat_vec(&self.rotation, p);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }

    /// Camera center in world coordinates, `-Rᵀt`.
    pub fn center(&self) -> Vec3<T> {
        scale(&mat_t_vec(&self.rotation, &self.translation), -T::one())
    }

    pub fn inverse(&self) -> Self {
        let rt = transpose(&self.rotation);
        let t = scale(&mat_vec(&rt, &self.translation), -T::one());
        Self { rotation: rt, translation: t }
    }

    /// Camera at `eye` looking at `target`; x right, y down, z forward.
    pub fn look_at(eye: &Vec3<T>, target: &Vec3<T>, up: &Vec3<T>) -> Self {
        let f = sub(target, eye);
        let f = scale(&f, T::one() / norm(&f));
        let r = cross(&f, up);
        let r = scale(&r, T::one() / norm(&r));
        let d = cross(&f, &r);
        let rotation = [r, d, f];
        let translation = scale(&mat_vec(&rotation, eye), -T::one());
        Self { rotation, translation }
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let mut acc = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let mut v = 0.0;
                for k in 0..3 {
                    v += r[k][i].as_f64() * r[k][j].as_f64();
                }
                let e = v - if i == j { 1.0 } else { 0.0 };
                acc += e * e;
            }
        }
        num_traits::Float::sqrt(acc)
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose {
            rotation: self.rotation.map(|row| row.map(|v| U::lit(v.as_f64()))),
            translation: self.translation.map(|v| U::lit(v.as_f64())),
        }
    }
}

/// Pinhole camera with a world-to-camera pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
    pub pose: Pose<T>,
}

impl<T: Real> Camera<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: usize, height: usize, pose: Pose<T>) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy, width, height, pose };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(Error::InvalidCamera(format!("focal lengths must be positive ({}, {})", self.fx, self.fy)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera(format!("empty image {}x{}", self.width, self.height)));
        }
        let (w, h) = (T::lit(self.width as f64), T::lit(self.height as f64));
        if !(self.cx > T::zero() && self.cx < w && self.cy > T::zero() && self.cy < h) {
            return Err(Error::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        let err = self.pose.orthonormality_error();
        if !(err < 1e-6) {
            return Err(Error::InvalidCamera(format!("rotation not orthonormal (error {err:e})")));
        }
        if !self.pose.translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCamera("non-finite translation".into()));
        }
        Ok(())
    }

    pub fn center(&self) -> Vec3<T> {
        self.pose.center()
    }

    pub fn cast<U: Real>(&self) -> Camera<U> {
        Camera {
            fx: U::lit(self.fx.as_f64()),
            fy: U::lit(self.fy.as_f64()),
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            width: self.width,
            height: self.height,
            pose: self.pose.cast(),
        }
    }
}
