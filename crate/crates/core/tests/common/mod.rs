#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatwise_core::camera::{Camera, Pose};
use splatwise_core::gaussian::{GaussianMap, GaussianPrimitive, SH_LEN};
use splatwise_core::image::Image;
use splatwise_core::real::{logit, Real};

#[derive(Clone, Copy, Debug)]
pub enum Regime {
    /// Wide, faint splats: every splat reaches every pixel above the skip
    /// threshold and blending never terminates, so the image is smooth in all
    /// parameters.
    Smooth,
    /// Mixed sizes and opacities, including clamping, skipping and early termination.
    General,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn random_unit_quat(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = core::array::from_fn(|_| uniform(rng, -1.0, 1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.2 && n <= 1.0 {
            return q.map(|v| v / n);
        }
    }
}

pub fn random_scene(seed: u64, n: usize, size: usize, regime: Regime) -> (GaussianMap<f64>, Camera<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eye = [uniform(&mut rng, -0.3, 0.3), uniform(&mut rng, -0.3, 0.3), uniform(&mut rng, -0.3, 0.0)];
    let pose = Pose::look_at(&eye, &[0.0, 0.0, 3.5], &[0.0, -1.0, 0.0]);
    let f = size as f64 * 1.25;
    let c = size as f64 / 2.0;
    let camera = Camera::new(f, f, c + 0.13, c - 0.21, size, size, pose).unwrap();
    let prims = (0..n)
        .map(|i| {
            let mut g = GaussianPrimitive::zeroed();
            g.rotation = random_unit_quat(&mut rng);
            match regime {
                Regime::Smooth => {
                    // Depths are stratified so no perturbation can swap the blend order.
                    let z = 2.5 + 2.0 * (i as f64 + 0.5) / n as f64 + uniform(&mut rng, -0.01, 0.01);
                    g.position = [uniform(&mut rng, -0.4, 0.4), uniform(&mut rng, -0.4, 0.4), z];
                    g.log_scale = core::array::from_fn(|_| uniform(&mut rng, 1.5f64.ln(), 2.5f64.ln()));
                    g.opacity_logit = logit(uniform(&mut rng, 0.1, 0.35));
                    for c in 0..3 {
                        g.sh[c] = uniform(&mut rng, -0.8, 0.8);
                    }
                    for v in g.sh[3..].iter_mut() {
                        *v = uniform(&mut rng, -0.02, 0.02);
                    }
                }
                Regime::General => {
                    g.position = [uniform(&mut rng, -1.2, 1.2), uniform(&mut rng, -1.2, 1.2), uniform(&mut rng, 2.0, 6.0)];
                    g.log_scale = core::array::from_fn(|_| uniform(&mut rng, 0.03f64.ln(), 0.6f64.ln()));
                    g.opacity_logit = logit(uniform(&mut rng, 0.05, 0.999));
                    for c in 0..3 {
                        g.sh[c] = uniform(&mut rng, -2.0, 2.0);
                    }
                    for v in g.sh[3..].iter_mut() {
                        *v = uniform(&mut rng, -0.3, 0.3);
                    }
                }
            }
            g
        })
        .collect::<Vec<_>>();
    assert_eq!(prims[0].sh.len(), SH_LEN);
    (GaussianMap::from_primitives(prims), camera)
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn random_image<T: Real>(seed: u64, w: usize, h: usize, lo: f64, hi: f64) -> Image<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_vec(w, h, (0..w * h * 3).map(|_| T::lit(uniform(&mut rng, lo, hi))).collect()).unwrap()
}
