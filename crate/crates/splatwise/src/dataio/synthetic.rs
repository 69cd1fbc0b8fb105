//! Deterministic synthetic scenes: random Gaussians in the unit box seen
//! from an orbit of cameras, with targets rendered by the crate's own
//! rasterizer.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_chacha::ChaCha8Rng;
use splatwise_core::densify::ColoredPoint;
use splatwise_core::linalg::{mat_to_quat, quat_to_mat};
use splatwise_core::rasterizer::{project_gaussian, rasterize_forward, RasterOptions};
use splatwise_core::real::logit;
use splatwise_core::sh::SH_C0;
use splatwise_core::{Camera, GaussianMap, GaussianPrimitive, Image, Pose};

use crate::dataio::ply::{save_map, PlyFormat};
use crate::dataio::posed::{write_dataset, Frame, FrameOut, Intrinsics};
use crate::error::{DataError, Result};

/// Seconds between consecutive frames.
pub const FRAME_INTERVAL_S: f64 = 0.1;
const ORBIT_RADIUS: f64 = 2.2;
const FOCAL_PER_PIXEL: f64 = 1.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub n_gaussians: usize,
    pub n_frames: usize,
    /// Square image side in pixels.
    pub size: usize,
    pub seed: u64,
    /// Sparse points attached to each frame; `None` picks `max(8, n_gaussians / 20)`.
    pub points_per_frame: Option<usize>,
}

impl SyntheticConfig {
    pub fn new(n_gaussians: usize, n_frames: usize, size: usize, seed: u64) -> Self {
        Self { n_gaussians, n_frames, size, seed, points_per_frame: None }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.n_gaussians == 0 {
            return Err("number of Gaussians must be at least 1".into());
        }
        if self.n_frames == 0 {
            return Err("number of frames must be at least 1".into());
        }
        if self.size < 8 {
            return Err("image size must be at least 8".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticFrame {
    pub timestamp: f64,
    pub camera_to_world: Pose<f64>,
    pub camera: Camera<f32>,
    pub image: Image<f32>,
    pub points: Vec<ColoredPoint<f32>>,
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub config: SyntheticConfig,
    pub truth: GaussianMap<f32>,
    pub intrinsics: Intrinsics,
    pub frames: Vec<SyntheticFrame>,
}

impl SyntheticScene {
    /// The frames as a training stream, without going through disk.
    pub fn stream(&self) -> impl Iterator<Item = Result<Frame>> + Send + '_ {
        self.frames.iter().enumerate().map(|(index, f)| {
            Ok(Frame {
                index,
                timestamp: f.timestamp,
                camera: f.camera,
                image: f.image.clone(),
                points: f.points.clone(),
            })
        })
    }
}

fn random_primitive(rng: &mut ChaCha8Rng) -> GaussianPrimitive<f32> {
    let mut p = GaussianPrimitive::<f64>::zeroed();
    p.position = [0, 1, 2].map(|_| rng.random_range(-0.5..0.5));
    let q: [f64; 4] = [0, 1, 2, 3].map(|_| rng.random_range(-1.0..1.0));
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-9);
    p.rotation = q.map(|v| v / n);
    let base = rng.random_range(0.02f64.ln()..0.07f64.ln());
    p.log_scale = [0, 1, 2].map(|_| base + rng.random_range(-0.3..0.3));
    p.opacity_logit = logit(rng.random_range(0.3..0.95));
    for c in 0..3 {
        p.sh[c] = (rng.random_range(0.05..0.95) - 0.5) / SH_C0;
    }
    p.cast()
}

/// Orbit pose of frame `j` (camera-to-world), looking at the origin.
fn orbit_pose(j: usize, n: usize) -> Pose<f64> {
    let u = j as f64 / n as f64;
    let theta = std::f64::consts::TAU * u;
    let phi = 0.35 * (2.0 * theta).sin();
    let eye = [ORBIT_RADIUS * phi.cos() * theta.cos(), ORBIT_RADIUS * phi.cos() * theta.sin(), ORBIT_RADIUS * phi.sin()];
    let w2c = Pose::look_at(&eye, &[0.0; 3], &[0.0, 0.0, 1.0]);
    // Pass through the stored quaternion so the camera matches what a loader rebuilds.
    let c2w = w2c.inverse();
    Pose { rotation: quat_to_mat(&mat_to_quat(&c2w.rotation)), translation: c2w.translation }
}

/// Points drawn per visible primitive, so that neighbor distances reflect
/// surface density rather than the spacing between primitives.
const POINTS_PER_CLUSTER: usize = 4;

/// Sparse colored points: small clusters sampled from the distributions of
/// visible primitives, colored by the target pixel they project to.
fn sample_points(
    truth: &GaussianMap<f32>,
    camera: &Camera<f32>,
    image: &Image<f32>,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ColoredPoint<f32>>> {
    let opts = RasterOptions::<f32>::default();
    let inside = |proj: &[f32; 2]| {
        proj[0] >= 0.0 && proj[1] >= 0.0 && (proj[0] as usize) < camera.width && (proj[1] as usize) < camera.height
    };
    let mut visible = Vec::new();
    for (i, p) in truth.primitives().iter().enumerate() {
        if let Some(proj) = project_gaussian(i, p, camera, &opts)? {
            if inside(&proj.mean2d) {
                visible.push(i);
            }
        }
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count && !visible.is_empty() {
        let i = visible.swap_remove(rng.random_range(0..visible.len()));
        let p = &truth.primitives()[i];
        let r = quat_to_mat(&p.rotation);
        let s = p.scale();
        for _ in 0..POINTS_PER_CLUSTER.min(count - out.len()) {
            let z: [f32; 3] = core::array::from_fn(|k| rng.sample::<f32, _>(StandardNormal).clamp(-2.0, 2.0) * s[k]);
            let position: [f32; 3] = core::array::from_fn(|k| p.position[k] + r[k][0] * z[0] + r[k][1] * z[1] + r[k][2] * z[2]);
            let Some(proj) = project_gaussian(0, &GaussianPrimitive { position, ..*p }, camera, &opts)? else { continue };
            if inside(&proj.mean2d) {
                let color = image.pixel(proj.mean2d[0] as usize, proj.mean2d[1] as usize);
                out.push(ColoredPoint { position, color });
            }
        }
    }
    Ok(out)
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticScene> {
    config.validate().map_err(|m| DataError::Core(splatwise_core::Error::InvalidParameter(m)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let truth = GaussianMap::from_primitives((0..config.n_gaussians).map(|_| random_primitive(&mut rng)).collect());
    let s = config.size as f64;
    let intrinsics = Intrinsics {
        fx: FOCAL_PER_PIXEL * s,
        fy: FOCAL_PER_PIXEL * s,
        cx: s / 2.0,
        cy: s / 2.0,
        width: config.size,
        height: config.size,
    };
    let truth64 = truth.cast::<f64>();
    let opts = RasterOptions::<f64> { checkpoints: false, ..RasterOptions::default() };
    let per_frame = config.points_per_frame.unwrap_or((config.n_gaussians / 20).max(8));
    let mut frames = Vec::with_capacity(config.n_frames);
    for j in 0..config.n_frames {
        let c2w = orbit_pose(j, config.n_frames);
        let camera = intrinsics.camera(&c2w.inverse())?;
        let cam64 = Camera::new(intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy, config.size, config.size, c2w.inverse())?;
        let mut image = rasterize_forward(&truth64, &cam64, &opts)?.image.cast::<f32>();
        image.clamp01();
        let points = sample_points(&truth, &camera, &image, per_frame, &mut rng)?;
        frames.push(SyntheticFrame { timestamp: j as f64 * FRAME_INTERVAL_S, camera_to_world: c2w, camera, image, points });
    }
    Ok(SyntheticScene { config: *config, truth, intrinsics, frames })
}

/// Writes the dataset layout plus `gt_map.ply` and `scene.json`.
pub fn write_scene(scene: &SyntheticScene, root: &Path) -> Result<()> {
    std::fs::create_dir_all(root).map_err(|e| DataError::io(root, e))?;
    let frames: Vec<FrameOut<'_>> = scene
        .frames
        .iter()
        .map(|f| FrameOut { timestamp: f.timestamp, camera_to_world: f.camera_to_world, image: &f.image, points: &f.points })
        .collect();
    write_dataset(root, &scene.intrinsics, &frames)?;
    save_map(&root.join("gt_map.ply"), &scene.truth, PlyFormat::BinaryLittleEndian)?;
    let c = &scene.config;
    let meta = serde_json::json!({
        "generator": "splatwise synthetic orbit",
        "n_gaussians": c.n_gaussians,
        "n_frames": c.n_frames,
        "size": c.size,
        "seed": c.seed,
        "points_per_frame": c.points_per_frame,
    });
    let path = root.join("scene.json");
    std::fs::write(&path, serde_json::to_string_pretty(&meta).expect("static JSON") + "\n").map_err(|e| DataError::io(&path, e))
}

pub fn gen_synthetic(config: &SyntheticConfig, root: &Path) -> Result<SyntheticScene> {
    let scene = generate(config)?;
    write_scene(&scene, root)?;
    Ok(scene)
}
