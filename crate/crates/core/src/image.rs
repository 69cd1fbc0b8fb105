use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::real::Real;

/// Row-major interleaved RGB image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [T::zero(); 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [T; 3]) -> Self {
        let mut data = vec![T::zero(); width * height * 3];
        for px in data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        Self { width, height, data }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values for {width}x{height}x3", width * height * 3),
                actual: format!("{}", data.len()),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [T; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [T; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn same_shape(&self, other: &Image<T>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn check_shape(&self, other: &Image<T>) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                expected: format!("{}x{}", self.width, self.height),
                actual: format!("{}x{}", other.width, other.height),
            })
        }
    }

    pub fn clamp01(&mut self) {
        for v in self.data.iter_mut() {
            *v = v.max(T::zero()).min(T::one());
        }
    }

    /// Single channel as a dense plane.
    pub fn channel(&self, c: usize) -> Vec<T> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image { width: self.width, height: self.height, data: self.data.iter().map(|v| U::lit(v.as_f64())).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(Image::<f32>::from_vec(2, 2, vec![0.0; 12]).is_ok());
        assert!(Image::<f32>::from_vec(2, 2, vec![0.0; 11]).is_err());
        let mut img = Image::<f64>::filled(3, 2, [0.1, 0.2, 1.5]);
        img.clamp01();
        assert_eq!(img.pixel(2, 1), [0.1, 0.2, 1.0]);
        assert_eq!(img.channel(1), vec![0.2; 6]);
    }
}
