//! Timing of the forward pass and both backward passes on a scene where
//! every splat overlaps every other, with a gradient-equality check.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatwise_core::rasterizer::{
    backward_pixelwise, backward_splatwise, rasterize_forward, ParamGrads, RasterOptions, Reduction,
};
use splatwise_core::real::logit;
use splatwise_core::sh::SH_C0;
use splatwise_core::{Camera, GaussianMap, GaussianPrimitive, Image, Pose};

use crate::error::{DataError, Result};

/// Largest accepted relative gradient difference between the two backward passes.
pub const GRADIENT_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchConfig {
    pub n_splats: usize,
    /// Square image side in pixels.
    pub size: usize,
    pub repetitions: usize,
    pub threads: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { n_splats: 10_000, size: 256, repetitions: 5, threads: 8, seed: 0 }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.repetitions == 0 {
            return Err("repetitions must be at least 1".into());
        }
        if self.n_splats == 0 || self.size == 0 || self.threads == 0 {
            return Err("splats, size and threads must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub mode: &'static str,
    pub mean_ms: f64,
    pub std_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchResult {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
    /// Splat-wise vs pixel-wise, normwise per parameter group.
    pub max_grad_rel_diff: f64,
}

impl BenchResult {
    pub const CSV_HEADER: &'static str = "mode,n_splats,image,mean_ms,std_ms,max_grad_rel_diff";

    pub fn passed(&self) -> bool {
        self.max_grad_rel_diff <= GRADIENT_TOLERANCE
    }

    pub fn row(&self, mode: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        let c = &self.config;
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{}x{},{:.3},{:.3},{:e}",
                r.mode, c.n_splats, c.size, c.size, r.mean_ms, r.std_ms, self.max_grad_rel_diff
            );
        }
        s
    }
}

/// `n` large, faint splats clustered on the optical axis so that all of them
/// cover the image center.
pub fn overlap_scene(n: usize, size: usize, seed: u64) -> (GaussianMap<f32>, Camera<f32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prims = (0..n)
        .map(|_| {
            let mut p = GaussianPrimitive::<f32>::zeroed();
            p.position = [rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(3.0..5.0)];
            let q: [f32; 4] = [1.0, rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
            let norm = q.iter().map(|v| v * v).sum::<f32>().sqrt();
            p.rotation = q.map(|v| v / norm);
            p.log_scale = [0, 1, 2].map(|_| rng.random_range(0.3f32.ln()..0.8f32.ln()));
            p.opacity_logit = logit(rng.random_range(0.02f32..0.1));
            for c in 0..3 {
                p.sh[c] = (rng.random_range(0.0f32..1.0) - 0.5) / SH_C0 as f32;
            }
            p
        })
        .collect();
    let s = size as f32;
    let camera = Camera::new(s, s, s / 2.0, s / 2.0, size, size, Pose::identity()).expect("valid camera");
    (GaussianMap::from_primitives(prims), camera)
}

fn stats(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn time_ms<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed().as_secs_f64() * 1e3)
}

/// Times forward, pixel-wise and splat-wise backward with shared-accumulator
/// reductions on a pool of `threads` workers.
pub fn run_bench(config: &BenchConfig) -> Result<BenchResult> {
    config.validate().map_err(|m| DataError::Core(splatwise_core::Error::InvalidParameter(m)))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| DataError::Core(splatwise_core::Error::InvalidParameter(e.to_string())))?;
    let (map, camera) = overlap_scene(config.n_splats, config.size, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed + 1);
    let grad = Image::from_vec(
        config.size,
        config.size,
        (0..config.size * config.size * 3).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
    )?;
    let opts = RasterOptions::<f32> { reduction: Reduction::Atomic, ..RasterOptions::default() };

    pool.install(|| -> Result<BenchResult> {
        let (mut fwd, mut pix, mut spl) = (Vec::new(), Vec::new(), Vec::new());
        let mut worst = 0.0f64;
        for _ in 0..config.repetitions {
            let (out, ms) = time_ms(|| rasterize_forward(&map, &camera, &opts));
            let out = out?;
            fwd.push(ms);
            let (p, ms): (splatwise_core::Result<ParamGrads<f32>>, f64) =
                time_ms(|| backward_pixelwise(&out, &map, &camera, &grad));
            pix.push(ms);
            let (s, ms) = time_ms(|| backward_splatwise(&out, &map, &camera, &grad));
            spl.push(ms);
            worst = worst.max(s?.max_relative_difference(&p?));
        }
        let row = |mode, samples: &[f64]| {
            let (mean_ms, std_ms) = stats(samples);
            BenchRow { mode, mean_ms, std_ms }
        };
        Ok(BenchResult {
            config: *config,
            rows: vec![row("forward", &fwd), row("pixel", &pix), row("splat", &spl)],
            max_grad_rel_diff: worst,
        })
    })
}
