//! Streaming keyframe training.
//!
//! A producer thread loads frames into a bounded queue; the training thread
//! takes one frame per arrival, registers it with the scheduler, seeds
//! Gaussians from its points and then optimizes for the arrival budget. The
//! map, optimizer and scheduler are only touched by the training thread.

use std::fmt::Write as _;
use std::sync::mpsc::sync_channel;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use splatwise_core::densify::{accumulate_grad_stats, densify_and_prune, seed_from_points, DensifyConfig, SceneExtent};
use splatwise_core::losses::{compute_loss, psnr, ssim_metric};
use splatwise_core::optimizer::{Adam, AdamConfig, LearningRates};
use splatwise_core::rasterizer::{
    backward_pixelwise, backward_splatwise, rasterize_forward, BackwardMode, ParamGrads, RasterOptions, Reduction,
};
use splatwise_core::scheduler::{KeyframeScheduler, SchedulerConfig};
use splatwise_core::{Camera, GaussianMap, Image};

use crate::dataio::Frame;
use crate::error::{DataError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchedulerMode {
    Adaptive,
    Uniform,
}

/// How much training each arrival gets before the next frame is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Budget {
    Iterations(u64),
    WallMs(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub backward: BackwardMode,
    pub scheduler: SchedulerMode,
    pub lambda_ssim: f32,
    pub lambda_o: f32,
    pub d: usize,
    pub r0: u32,
    pub densify: DensifyConfig<f32>,
    pub budget: Budget,
    /// Stops training, including refinement, after this many iterations.
    pub max_iterations: Option<u64>,
    /// Extra iterations after the last arrival.
    pub refine_iterations: u64,
    pub seed: u64,
    pub sh_degree: u8,
    /// Ordered gradient reductions; requires an iteration budget.
    pub deterministic: bool,
    pub learning_rates: LearningRates<f32>,
    pub tile_size: usize,
    pub bucket_size: usize,
    pub queue_capacity: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            backward: BackwardMode::Splat,
            scheduler: SchedulerMode::Adaptive,
            lambda_ssim: 0.2,
            lambda_o: 0.001,
            d: 4,
            r0: 8,
            densify: DensifyConfig::default(),
            budget: Budget::Iterations(100),
            max_iterations: None,
            refine_iterations: 0,
            seed: 0,
            sh_degree: 3,
            deterministic: false,
            learning_rates: LearningRates::default(),
            tile_size: 16,
            bucket_size: 32,
            queue_capacity: 4,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("invalid value '{value}' for {key}"))
}

impl TrainConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        match self.budget {
            Budget::Iterations(0) | Budget::WallMs(0) => return Err("arrival budget must be positive".into()),
            Budget::WallMs(_) if self.deterministic => {
                return Err("deterministic runs need an iteration budget, not a wall-clock one".into())
            }
            _ => {}
        }
        if !(self.lambda_o >= 0.0) {
            return Err(format!("lambda_o must be non-negative, got {}", self.lambda_o));
        }
        if !(0.0..=1.0).contains(&self.lambda_ssim) {
            return Err(format!("lambda_ssim must be in [0, 1], got {}", self.lambda_ssim));
        }
        if self.d == 0 {
            return Err("d must be at least 1".into());
        }
        if self.max_iterations == Some(0) {
            return Err("max_iters must be positive".into());
        }
        if self.queue_capacity == 0 {
            return Err("queue_capacity must be at least 1".into());
        }
        self.densify.validate().map_err(|e| e.to_string())?;
        self.raster_options().validate().map_err(|e| e.to_string())
    }

    pub fn raster_options(&self) -> RasterOptions<f32> {
        RasterOptions {
            tile_size: self.tile_size,
            bucket_size: self.bucket_size,
            sh_degree: self.sh_degree,
            checkpoints: self.backward == BackwardMode::Splat,
            reduction: if self.deterministic { Reduction::Deterministic } else { Reduction::Atomic },
            ..RasterOptions::default()
        }
    }

    /// Applies one `key=value` setting; keys are those of [`TrainConfig::entries`].
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let lr = &mut self.learning_rates;
        match key {
            "backward" => {
                self.backward = match value {
                    "pixel" => BackwardMode::Pixel,
                    "splat" => BackwardMode::Splat,
                    _ => return Err(format!("backward must be 'pixel' or 'splat', got '{value}'")),
                }
            }
            "scheduler" => {
                self.scheduler = match value {
                    "adaptive" => SchedulerMode::Adaptive,
                    "uniform" => SchedulerMode::Uniform,
                    _ => return Err(format!("scheduler must be 'adaptive' or 'uniform', got '{value}'")),
                }
            }
            "lambda_ssim" => self.lambda_ssim = parse(key, value)?,
            "lambda_o" => self.lambda_o = parse(key, value)?,
            "d" => self.d = parse(key, value)?,
            "r0" => self.r0 = parse(key, value)?,
            "budget_iters" => self.budget = Budget::Iterations(parse(key, value)?),
            "budget_ms" => self.budget = Budget::WallMs(parse(key, value)?),
            "max_iters" => self.max_iterations = if value == "none" { None } else { Some(parse(key, value)?) },
            "refine_iters" => self.refine_iterations = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "sh_degree" => self.sh_degree = parse(key, value)?,
            "deterministic" => self.deterministic = parse(key, value)?,
            "densify_interval" => self.densify.interval = parse(key, value)?,
            "grad_threshold" => self.densify.grad_threshold = parse(key, value)?,
            "prune_opacity" => self.densify.prune_opacity = parse(key, value)?,
            "split_scale_percentile" => self.densify.split_scale_percentile = parse(key, value)?,
            "lr_position_init" => lr.position_init = parse(key, value)?,
            "lr_position_final" => lr.position_final = parse(key, value)?,
            "lr_position_decay_steps" => lr.position_decay_steps = parse(key, value)?,
            "lr_sh_dc" => lr.sh_dc = parse(key, value)?,
            "lr_sh_rest" => lr.sh_rest = parse(key, value)?,
            "lr_opacity" => lr.opacity = parse(key, value)?,
            "lr_log_scale" => lr.log_scale = parse(key, value)?,
            "lr_rotation" => lr.rotation = parse(key, value)?,
            "tile_size" => self.tile_size = parse(key, value)?,
            "bucket_size" => self.bucket_size = parse(key, value)?,
            "queue_capacity" => self.queue_capacity = parse(key, value)?,
            _ => return Err(format!("unknown setting '{key}'")),
        }
        Ok(())
    }

    /// Every setting as `(key, value)`, in a fixed order; feeding these back through
    /// [`TrainConfig::set`] reproduces the configuration.
    pub fn entries(&self) -> Vec<(String, String)> {
        let lr = &self.learning_rates;
        let mut v: Vec<(&str, String)> = vec![
            ("backward", match self.backward {
                BackwardMode::Pixel => "pixel".into(),
                BackwardMode::Splat => "splat".into(),
            }),
            ("scheduler", match self.scheduler {
                SchedulerMode::Adaptive => "adaptive".into(),
                SchedulerMode::Uniform => "uniform".into(),
            }),
            ("lambda_ssim", self.lambda_ssim.to_string()),
            ("lambda_o", self.lambda_o.to_string()),
            ("d", self.d.to_string()),
            ("r0", self.r0.to_string()),
        ];
        match self.budget {
            Budget::Iterations(n) => v.push(("budget_iters", n.to_string())),
            Budget::WallMs(ms) => v.push(("budget_ms", ms.to_string())),
        }
        v.extend([
            ("max_iters", self.max_iterations.map_or("none".into(), |n| n.to_string())),
            ("refine_iters", self.refine_iterations.to_string()),
            ("seed", self.seed.to_string()),
            ("sh_degree", self.sh_degree.to_string()),
            ("deterministic", self.deterministic.to_string()),
            ("densify_interval", self.densify.interval.to_string()),
            ("grad_threshold", self.densify.grad_threshold.to_string()),
            ("prune_opacity", self.densify.prune_opacity.to_string()),
            ("split_scale_percentile", self.densify.split_scale_percentile.to_string()),
            ("lr_position_init", lr.position_init.to_string()),
            ("lr_position_final", lr.position_final.to_string()),
            ("lr_position_decay_steps", lr.position_decay_steps.to_string()),
            ("lr_sh_dc", lr.sh_dc.to_string()),
            ("lr_sh_rest", lr.sh_rest.to_string()),
            ("lr_opacity", lr.opacity.to_string()),
            ("lr_log_scale", lr.log_scale.to_string()),
            ("lr_rotation", lr.rotation.to_string()),
            ("tile_size", self.tile_size.to_string()),
            ("bucket_size", self.bucket_size.to_string()),
            ("queue_capacity", self.queue_capacity.to_string()),
        ]);
        v.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyframeReport {
    pub id: u64,
    pub timestamp: f64,
    pub iterations: u64,
    /// Rendered loss the last time this keyframe was trained; NaN if never.
    pub last_loss: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub keyframes: Vec<KeyframeReport>,
    pub total_iterations: u64,
    pub refine_iterations: u64,
    pub training_seconds: f64,
    pub iterations_per_second: f64,
    pub final_primitives: usize,
    pub densify_events: u64,
    pub config: Vec<(String, String)>,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "keyframe_id,iters,last_loss,psnr,ssim";

    pub fn mean_psnr(&self) -> f64 {
        mean(self.keyframes.iter().map(|k| k.psnr))
    }

    pub fn min_psnr(&self) -> f64 {
        self.keyframes.iter().map(|k| k.psnr).fold(f64::INFINITY, f64::min)
    }

    pub fn mean_ssim(&self) -> f64 {
        mean(self.keyframes.iter().map(|k| k.ssim))
    }

    /// One row per keyframe, then a `summary` row with the total iteration
    /// count and means. Holds no timings, so deterministic runs reproduce it
    /// byte for byte.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for k in &self.keyframes {
            let _ = writeln!(s, "{},{},{:.9},{:.6},{:.6}", k.id, k.iterations, k.last_loss, k.psnr, k.ssim);
        }
        let trained = self.keyframes.iter().map(|k| k.last_loss).filter(|l| l.is_finite());
        let _ = writeln!(
            s,
            "summary,{},{:.9},{:.6},{:.6}",
            self.total_iterations,
            mean(trained),
            self.mean_psnr(),
            self.mean_ssim()
        );
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "total_iterations": self.total_iterations,
            "refine_iterations": self.refine_iterations,
            "training_seconds": self.training_seconds,
            "iterations_per_second": self.iterations_per_second,
            "final_primitives": self.final_primitives,
            "densify_events": self.densify_events,
            "keyframes": self.keyframes.len(),
            "mean_psnr": self.mean_psnr(),
            "min_psnr": self.min_psnr(),
            "mean_ssim": self.mean_ssim(),
            "config": self.config.iter().map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone()))).collect::<serde_json::Map<_, _>>(),
        })
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub struct TrainOutcome {
    pub map: GaussianMap<f32>,
    pub report: TrainReport,
}

struct Keyframe {
    id: u64,
    timestamp: f64,
    camera: Camera<f32>,
    target: Image<f32>,
    iterations: u64,
    last_loss: f64,
}

struct Trainer {
    config: TrainConfig,
    opts: RasterOptions<f32>,
    map: GaussianMap<f32>,
    adam: Adam<f32>,
    scheduler: KeyframeScheduler,
    keyframes: Vec<Keyframe>,
    extent: SceneExtent<f32>,
    rng: ChaCha8Rng,
    iterations: u64,
    densify_events: u64,
}

impl Trainer {
    fn new(config: &TrainConfig) -> Result<Self> {
        let sched = SchedulerConfig { d: config.d, r0: config.r0, seed: config.seed };
        let adam = AdamConfig { lr: config.learning_rates, ..AdamConfig::default() };
        Ok(Self {
            config: config.clone(),
            opts: config.raster_options(),
            map: GaussianMap::new(),
            adam: Adam::new(adam, 0),
            scheduler: KeyframeScheduler::new(sched)?,
            keyframes: Vec::new(),
            extent: SceneExtent::default(),
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_de75),
            iterations: 0,
            densify_events: 0,
        })
    }

    fn capped(&self) -> bool {
        self.config.max_iterations.is_some_and(|cap| self.iterations >= cap)
    }

    fn arrive(&mut self, frame: Frame) -> Result<()> {
        let id = self.keyframes.len() as u64;
        self.scheduler.add_keyframe(id)?;
        if !frame.points.is_empty() {
            self.extent.include(&frame.points);
            let seeded = seed_from_points(&frame.points, self.extent.extent());
            self.adam.extend(seeded.len());
            self.map.insert(seeded);
        }
        self.keyframes.push(Keyframe {
            id,
            timestamp: frame.timestamp,
            camera: frame.camera,
            target: frame.image,
            iterations: 0,
            last_loss: f64::NAN,
        });
        Ok(())
    }

    fn pick(&mut self) -> Result<usize> {
        let id = match self.config.scheduler {
            SchedulerMode::Adaptive => self.scheduler.select()?,
            SchedulerMode::Uniform => self.scheduler.select_uniform_baseline()?,
        };
        Ok(id as usize)
    }

    fn iterate(&mut self) -> Result<()> {
        let k = self.pick()?;
        let kf = &self.keyframes[k];
        let out = rasterize_forward(&self.map, &kf.camera, &self.opts)?;
        let logits: Vec<f32> = self.map.primitives().iter().map(|p| p.opacity_logit).collect();
        let loss = compute_loss(&out.image, &kf.target, &logits, self.config.lambda_ssim, self.config.lambda_o)?;
        let mut grads: ParamGrads<f32> = match self.config.backward {
            BackwardMode::Splat => backward_splatwise(&out, &self.map, &kf.camera, &loss.grad_image)?,
            BackwardMode::Pixel => backward_pixelwise(&out, &self.map, &kf.camera, &loss.grad_image)?,
        };
        for (g, r) in grads.grads.iter_mut().zip(&loss.grad_opacity_logit) {
            g.opacity_logit += *r;
        }
        self.adam.step(&mut self.map, &grads)?;
        accumulate_grad_stats(&mut self.map, &grads)?;

        let rendered = loss.rendered as f64;
        if self.config.scheduler == SchedulerMode::Adaptive {
            self.scheduler.record_result(k as u64, rendered)?;
        }
        let kf = &mut self.keyframes[k];
        kf.iterations += 1;
        kf.last_loss = rendered;
        self.iterations += 1;

        if self.iterations % self.config.densify.interval as u64 == 0 {
            let extent = self.extent.extent();
            let report = densify_and_prune(&mut self.map, &self.config.densify, extent, &mut self.rng)?;
            self.adam.resize_for_densify(&report.survivors, report.n_new)?;
            self.densify_events += 1;
            log::debug!(
                "densify at {}: cloned {} split {} pruned {} -> {} primitives",
                self.iterations,
                report.cloned,
                report.split,
                report.pruned,
                self.map.len()
            );
        }
        Ok(())
    }

    fn train_for(&mut self, budget: Budget) -> Result<()> {
        match budget {
            Budget::Iterations(n) => {
                for _ in 0..n {
                    if self.capped() {
                        break;
                    }
                    self.iterate()?;
                }
            }
            Budget::WallMs(ms) => {
                let start = Instant::now();
                while start.elapsed().as_millis() < ms as u128 && !self.capped() {
                    self.iterate()?;
                }
            }
        }
        Ok(())
    }
}

/// Runs the streaming loop over `frames`, which are produced on a separate
/// thread and handed over through a bounded queue.
pub fn run_stream<I>(frames: I, config: &TrainConfig) -> Result<TrainOutcome>
where
    I: IntoIterator<Item = Result<Frame>>,
    I::IntoIter: Send,
{
    config.validate().map_err(|m| DataError::Core(splatwise_core::Error::InvalidParameter(m)))?;
    let mut trainer = Trainer::new(config)?;
    let frames = frames.into_iter();
    let (tx, rx) = sync_channel::<Result<Frame>>(config.queue_capacity);
    let started = Instant::now();
    std::thread::scope(|scope| -> Result<()> {
        scope.spawn(move || {
            for frame in frames {
                let failed = frame.is_err();
                if tx.send(frame).is_err() || failed {
                    break;
                }
            }
        });
        for frame in rx {
            trainer.arrive(frame?)?;
            trainer.train_for(config.budget)?;
        }
        Ok(())
    })?;
    if trainer.keyframes.is_empty() {
        return Err(DataError::Core(splatwise_core::Error::EmptyPool));
    }
    let before_refine = trainer.iterations;
    if config.refine_iterations > 0 {
        trainer.train_for(Budget::Iterations(config.refine_iterations))?;
    }
    let training_seconds = started.elapsed().as_secs_f64();

    let cameras: Vec<Camera<f32>> = trainer.keyframes.iter().map(|k| k.camera).collect();
    let renders = render_trajectory(&trainer.map, &cameras, config.sh_degree)?;
    let mut keyframes = Vec::with_capacity(renders.len());
    for (kf, img) in trainer.keyframes.iter().zip(&renders) {
        keyframes.push(KeyframeReport {
            id: kf.id,
            timestamp: kf.timestamp,
            iterations: kf.iterations,
            last_loss: kf.last_loss,
            psnr: psnr(img, &kf.target)?,
            ssim: ssim_metric(img, &kf.target)?,
        });
    }
    let total = trainer.iterations;
    let report = TrainReport {
        keyframes,
        total_iterations: total,
        refine_iterations: total - before_refine,
        training_seconds,
        iterations_per_second: if training_seconds > 0.0 { total as f64 / training_seconds } else { 0.0 },
        final_primitives: trainer.map.len(),
        densify_events: trainer.densify_events,
        config: config.entries(),
    };
    Ok(TrainOutcome { map: trainer.map, report })
}

/// Renders `map` from every camera without checkpoints.
pub fn render_trajectory(map: &GaussianMap<f32>, cameras: &[Camera<f32>], sh_degree: u8) -> Result<Vec<Image<f32>>> {
    let opts = RasterOptions { checkpoints: false, sh_degree, ..RasterOptions::default() };
    cameras.iter().map(|c| Ok(rasterize_forward(map, c, &opts)?.image)).collect()
}
