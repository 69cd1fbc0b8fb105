//! Acceptance run: every criterion at its stated tolerance, one line each.
//!
//! `cargo test -p splatwise --release --test acceptance [-- 3 5 ...]` runs all
//! criteria or the listed ones. Failures are reported but only turn into a
//! non-zero exit status when `ACCEPTANCE_STRICT` is set.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatwise::bench::{run_bench, BenchConfig, GRADIENT_TOLERANCE};
use splatwise::dataio::posed::parse_trajectory_line;
use splatwise::dataio::{generate, read_map, save_ppm8, write_map, PlyFormat, PosedDataset, SyntheticConfig, SYNC_WINDOW_S};
use splatwise::trainer::{run_stream, Budget, SchedulerMode, TrainConfig, TrainReport};
use splatwise_core::gaussian::{GaussianMap, GaussianPrimitive, PARAMS_PER_PRIMITIVE};
use splatwise_core::rasterizer::{
    backward_pixelwise, backward_splatwise, rasterize_forward, BackwardMode, RasterOptions, Reduction,
};
use splatwise_core::real::logit;
use splatwise_core::scheduler::{KeyframeScheduler, SchedulerConfig};
use splatwise_core::{Camera, Image, Pose, Real};

/// Scene of the streaming criteria.
const STREAM_GAUSSIANS: usize = 500;
const STREAM_FRAMES: usize = 50;
const STREAM_SIZE: usize = 128;
const PAIRED_SEEDS: u64 = 5;
/// Wall-clock budget of each arrival in the long-tail comparison.
const LONG_TAIL_ARRIVAL_MS: u64 = 900;
/// Iterations per arrival in the opacity-regularization comparison.
const OPACITY_REG_ARRIVAL_ITERS: u64 = 20;
/// 5k iterations spread over the stream.
const RECON_ARRIVAL_ITERS: u64 = 100;
const RECON_MIN_PSNR_DB: f64 = 28.0;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Verdict,
}

fn main() {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria = [
        Criterion { id: 1, name: "finite-difference gradients", limit: Some(Duration::from_secs(60)), run: c1_finite_differences },
        Criterion { id: 2, name: "splat-wise equals pixel-wise (f32)", limit: Some(Duration::from_secs(120)), run: c2_backward_equivalence },
        Criterion { id: 3, name: "bucket size invariance", limit: None, run: c3_bucketing },
        Criterion { id: 4, name: "blend weights partition unity", limit: None, run: c4_alpha_partition },
        Criterion { id: 5, name: "backward throughput", limit: None, run: c5_bench },
        Criterion { id: 6, name: "scheduler suite", limit: None, run: c6_scheduler },
        Criterion { id: 7, name: "long-tail keyframes", limit: Some(Duration::from_secs(600)), run: c7_long_tail },
        Criterion { id: 8, name: "opacity regularization", limit: None, run: c8_opacity_reg },
        Criterion { id: 9, name: "end-to-end reconstruction", limit: None, run: c9_reconstruction },
        Criterion { id: 10, name: "deterministic reports", limit: None, run: c10_determinism },
        Criterion { id: 11, name: "map and dataset IO", limit: None, run: c11_io },
    ];
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let mut v = (c.run)();
        let elapsed = start.elapsed();
        if let Some(limit) = c.limit {
            if elapsed > limit {
                v.passed = false;
                v.detail += &format!("; over the {} s limit", limit.as_secs());
            }
        }
        ran += 1;
        if !v.passed {
            failed += 1;
        }
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag} {}: {} [{:.1} s]", c.id, c.name, v.detail, elapsed.as_secs_f64());
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

// Random scenes shared by the rasterizer criteria.

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn unit_quat(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = core::array::from_fn(|_| uniform(rng, -1.0, 1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.2 && n <= 1.0 {
            return q.map(|v| v / n);
        }
    }
}

/// `smooth`: wide faint splats at stratified depths, so the rendered image is
/// differentiable in every parameter. Otherwise mixed sizes and opacities.
fn scene(seed: u64, n: usize, size: usize, smooth: bool) -> (GaussianMap<f64>, Camera<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eye = [uniform(&mut rng, -0.3, 0.3), uniform(&mut rng, -0.3, 0.3), uniform(&mut rng, -0.3, 0.0)];
    let pose = Pose::look_at(&eye, &[0.0, 0.0, 3.5], &[0.0, -1.0, 0.0]);
    let f = size as f64 * 1.25;
    let c = size as f64 / 2.0;
    let camera = Camera::new(f, f, c + 0.13, c - 0.21, size, size, pose).unwrap();
    let prims = (0..n)
        .map(|i| {
            let mut g = GaussianPrimitive::zeroed();
            g.rotation = unit_quat(&mut rng);
            if smooth {
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
            } else {
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
            g
        })
        .collect();
    (GaussianMap::from_primitives(prims), camera)
}

fn random_image<T: Real>(seed: u64, w: usize, h: usize) -> Image<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_vec(w, h, (0..w * h * 3).map(|_| T::lit(uniform(&mut rng, -1.0, 1.0))).collect()).unwrap()
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        c += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + c
}

fn c1_finite_differences() -> Verdict {
    const EPS: f64 = 1e-3;
    const TOL: f64 = 1e-4;
    const MIN_MAGNITUDE: f64 = 1e-8;
    let (n, size) = (16, 32);
    let ones = Image::filled(size, size, [1.0; 3]);
    let opts = RasterOptions::default();
    let (mut checked, mut failed) = (0usize, 0usize);
    let (mut worst_plain, mut truncation, mut noisy_max) = (0.0f64, 0usize, 0.0f64);
    for seed in 0..20 {
        let (map, camera) = scene(seed, n, size, true);
        let out = rasterize_forward(&map, &camera, &opts).unwrap();
        let grads = backward_splatwise(&out, &map, &camera, &ones).unwrap();
        for i in 0..map.len() {
            let analytic = grads.grads[i].to_array();
            let base = map.primitives()[i].to_array();
            for k in 0..PARAMS_PER_PRIMITIVE {
                let a = analytic[k];
                if a.abs() <= MIN_MAGNITUDE {
                    continue;
                }
                let eval = |delta: f64| {
                    let mut m = map.clone();
                    let mut p = base;
                    p[k] += delta;
                    m.primitives_mut()[i] = GaussianPrimitive::from_array(&p);
                    compensated_sum(rasterize_forward(&m, &camera, &opts).unwrap().image.data().iter().copied())
                };
                let (fp, fm) = (eval(EPS), eval(-EPS));
                let plain = (fp - fm) / (2.0 * EPS);
                let rel = (a - plain).abs() / a.abs();
                checked += 1;
                if rel > TOL {
                    failed += 1;
                    // Richardson step ε/2 to tell oracle error from a wrong gradient.
                    let half = (eval(EPS / 2.0) - eval(-EPS / 2.0)) / EPS;
                    let extrapolated = (4.0 * half - plain) / 3.0;
                    if (a - extrapolated).abs() / a.abs() <= 1e-6 {
                        truncation += 1;
                    } else {
                        noisy_max = noisy_max.max(a.abs());
                    }
                }
                worst_plain = worst_plain.max(rel);
            }
        }
    }
    verdict(
        failed == 0,
        format!(
            "{failed} of {checked} parameters over {TOL:e} with central ε={EPS:e} (worst {worst_plain:.2e}); \
             {truncation} of those agree with the ε/2 Richardson estimate to 1e-6, the rest have |grad| ≤ {noisy_max:.1e}"
        ),
    )
}

fn c2_backward_equivalence() -> Verdict {
    let mut worst = 0.0f64;
    for seed in 0..100 {
        let (map, camera) = scene(seed, 60, 48, false);
        let (map, camera) = (map.cast::<f32>(), camera.cast::<f32>());
        let grad = random_image::<f32>(seed + 1000, 48, 48);
        let opts = RasterOptions { reduction: Reduction::Deterministic, ..RasterOptions::default() };
        let out = rasterize_forward(&map, &camera, &opts).unwrap();
        let s = backward_splatwise(&out, &map, &camera, &grad).unwrap();
        let p = backward_pixelwise(&out, &map, &camera, &grad).unwrap();
        worst = worst.max(s.max_relative_difference(&p));
    }
    verdict(worst <= 1e-5, format!("max relative difference {worst:.2e} over 100 scenes (limit 1e-5)"))
}

fn c3_bucketing() -> Verdict {
    let mut worst = 0.0f64;
    let mut buckets_ok = true;
    for seed in 0..10 {
        // One 16×16 tile holding all 33 splats, so B = 32 splits the list in two.
        let (mut map, camera) = scene(seed, 33, 16, true);
        for p in map.primitives_mut() {
            p.position[0] *= 0.2;
            p.position[1] *= 0.2;
        }
        let grad = random_image::<f64>(seed, 16, 16);
        let run = |b: usize| {
            let opts = RasterOptions { bucket_size: b, ..RasterOptions::default() };
            let out = rasterize_forward(&map, &camera, &opts).unwrap();
            let g = backward_splatwise(&out, &map, &camera, &grad).unwrap();
            (out.tiles[0].splats.len(), out.tiles[0].n_buckets, g)
        };
        let (n32, b32, g32) = run(32);
        let (_, b64, g64) = run(64);
        buckets_ok &= n32 == 33 && b32 == 2 && b64 == 1;
        worst = worst.max(g32.max_relative_difference(&g64));
    }
    verdict(
        buckets_ok && worst <= 1e-12,
        format!("33 splats, B=32 (2 buckets) vs B=64 (1 bucket): max relative difference {worst:.2e} (limit 1e-12)"),
    )
}

fn partition_error<T: Real>(map: &GaussianMap<T>, camera: &Camera<T>, size: usize) -> f64 {
    let opts = RasterOptions { t_min: T::zero(), ..RasterOptions::default() };
    let out = rasterize_forward(map, camera, &opts).unwrap();
    let mut worst = 0.0f64;
    for y in 0..size {
        for x in 0..size {
            let mut t = T::one();
            let mut total = T::zero();
            for (_, alpha) in out.pixel_contributions(x, y) {
                total += alpha * t;
                t = t * (T::one() - alpha);
            }
            worst = worst.max((total + out.final_transmittance(x, y) - T::one()).as_f64().abs());
        }
    }
    worst
}

fn c4_alpha_partition() -> Verdict {
    let (mut w64, mut w32) = (0.0f64, 0.0f64);
    for seed in 0..50 {
        let (map, camera) = scene(seed, 40, 32, false);
        w64 = w64.max(partition_error(&map, &camera, 32));
        w32 = w32.max(partition_error(&map.cast::<f32>(), &camera.cast::<f32>(), 32));
    }
    verdict(
        w64 <= 1e-6 && w32 <= 1e-6,
        format!("|Σ αT + T_final − 1| ≤ {w64:.1e} (f64), {w32:.1e} (f32) over 50 scenes (limit 1e-6)"),
    )
}

fn c5_bench() -> Verdict {
    let cfg = BenchConfig::default();
    let r = run_bench(&cfg).unwrap();
    let (pixel, splat) = (r.row("pixel").unwrap(), r.row("splat").unwrap());
    verdict(
        splat.mean_ms <= pixel.mean_ms && r.max_grad_rel_diff <= GRADIENT_TOLERANCE,
        format!(
            "{} splats {}², {} workers: splat-wise {:.0}±{:.0} ms, pixel-wise {:.0}±{:.0} ms, gradient difference {:.2e}",
            cfg.n_splats, cfg.size, cfg.threads, splat.mean_ms, splat.std_ms, pixel.mean_ms, pixel.std_ms, r.max_grad_rel_diff
        ),
    )
}

fn c6_scheduler() -> Verdict {
    let mut notes = Vec::new();
    let mut ok = true;

    // Uniform selection among keyframes with budget left.
    let mut s = KeyframeScheduler::new(SchedulerConfig { d: 4, r0: 1, seed: 42 }).unwrap();
    (0..4).for_each(|id| s.add_keyframe(id).unwrap());
    let mut counts = [0usize; 4];
    for _ in 0..10_000 {
        counts[s.select().unwrap() as usize] += 1;
    }
    let dev = counts.iter().map(|&c| (c as f64 / 1e4 - 0.25).abs()).fold(0.0, f64::max);
    ok &= dev <= 0.02;
    notes.push(format!("selection frequency deviation {dev:.3}"));

    // Refill ranking against a brute-force oracle.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut mismatches = 0;
    for trial in 0..500 {
        let k = rng.random_range(1..60usize);
        let d = rng.random_range(1..8usize);
        let losses: Vec<f64> = (0..k).map(|_| rng.random()).collect();
        let mut s = KeyframeScheduler::new(SchedulerConfig { d, r0: 1, seed: trial }).unwrap();
        for (i, &l) in losses.iter().enumerate() {
            s.add_keyframe(i as u64).unwrap();
            s.record_result(i as u64, l).unwrap();
        }
        s.refill();
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(b.cmp(&a)));
        let top = (k / d).max(1);
        let expected: Vec<u32> = (0..k).map(|i| if order[..top].contains(&i) { 2 } else { 1 }).collect();
        if s.remaining() != expected.as_slice() {
            mismatches += 1;
        }
    }
    ok &= mismatches == 0;
    notes.push(format!("refill oracle mismatches {mismatches}/500"));

    // Every refill cycle spends exactly the budget it was given.
    let mut s = KeyframeScheduler::new(SchedulerConfig { d: 4, r0: 8, seed: 9 }).unwrap();
    s.add_keyframe(0).unwrap();
    let (mut next, mut budget, mut spent, mut cycles, mut refills, mut broken) = (1u64, 8u64, 0u64, 0, 0, 0);
    while cycles < 10_000 {
        if next < 24 && rng.random_bool(0.02) {
            s.add_keyframe(next).unwrap();
            next += 1;
            budget += 8;
        }
        let id = s.select().unwrap();
        if s.refill_count() != refills {
            broken += usize::from(spent != budget);
            refills = s.refill_count();
            budget = s.remaining().iter().map(|&r| r as u64).sum();
            spent = 0;
            cycles += 1;
        }
        s.record_result(id, rng.random()).unwrap();
        spent += 1;
    }
    ok &= broken == 0;
    notes.push(format!("budget violations {broken} in 10^4 cycles"));

    // Same seed, same sequence.
    let seq = |seed| {
        let mut s = KeyframeScheduler::new(SchedulerConfig { d: 2, r0: 3, seed }).unwrap();
        (0..10u64)
            .flat_map(|id| {
                s.add_keyframe(id).unwrap();
                (0..7)
                    .map(|_| {
                        let k = s.select().unwrap();
                        s.record_result(k, (k * 31 % 17) as f64).unwrap();
                        k
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    let same = seq(5) == seq(5);
    ok &= same;
    notes.push(format!("reproducible {same}"));
    verdict(ok, notes.join(", "))
}

fn stream_scene(seed: u64) -> splatwise::dataio::SyntheticScene {
    generate(&SyntheticConfig::new(STREAM_GAUSSIANS, STREAM_FRAMES, STREAM_SIZE, seed)).unwrap()
}

fn train(scene: &splatwise::dataio::SyntheticScene, config: &TrainConfig) -> TrainReport {
    run_stream(scene.stream(), config).unwrap().report
}

fn c7_long_tail() -> Verdict {
    let (mut adaptive, mut uniform) = (0.0, 0.0);
    let mut runs = Vec::new();
    for seed in 0..PAIRED_SEEDS {
        let scene = stream_scene(seed);
        let base = TrainConfig { budget: Budget::WallMs(LONG_TAIL_ARRIVAL_MS), seed, ..TrainConfig::default() };
        let a = train(&scene, &TrainConfig { scheduler: SchedulerMode::Adaptive, ..base.clone() }).min_psnr();
        let u = train(&scene, &TrainConfig { scheduler: SchedulerMode::Uniform, ..base }).min_psnr();
        runs.push(format!("{a:.2}/{u:.2}"));
        adaptive += a;
        uniform += u;
    }
    let n = PAIRED_SEEDS as f64;
    let (adaptive, uniform) = (adaptive / n, uniform / n);
    verdict(
        adaptive >= uniform,
        format!(
            "mean min-keyframe PSNR adaptive {adaptive:.2} dB vs uniform {uniform:.2} dB ({:+.2} dB; per seed {})",
            adaptive - uniform,
            runs.join(" ")
        ),
    )
}

fn c8_opacity_reg() -> Verdict {
    let (mut ratio, mut drop) = (0.0, 0.0);
    let mut runs = Vec::new();
    for seed in 0..PAIRED_SEEDS {
        let scene = stream_scene(seed);
        let base = TrainConfig {
            budget: Budget::Iterations(OPACITY_REG_ARRIVAL_ITERS),
            deterministic: true,
            seed,
            ..TrainConfig::default()
        };
        let with = train(&scene, &TrainConfig { lambda_o: 0.001, ..base.clone() });
        let without = train(&scene, &TrainConfig { lambda_o: 0.0, ..base });
        let r = with.final_primitives as f64 / without.final_primitives as f64;
        let d = without.mean_psnr() - with.mean_psnr();
        runs.push(format!("{}/{}", with.final_primitives, without.final_primitives));
        ratio += r;
        drop += d;
    }
    let n = PAIRED_SEEDS as f64;
    let (ratio, drop) = (ratio / n, drop / n);
    verdict(
        ratio <= 0.75 && drop <= 1.5,
        format!("primitive ratio {ratio:.3} (limit 0.75), PSNR drop {drop:.2} dB (limit 1.5); counts {}", runs.join(" ")),
    )
}

fn c9_reconstruction() -> Verdict {
    let scene = stream_scene(7);
    let cfg = TrainConfig {
        backward: BackwardMode::Splat,
        scheduler: SchedulerMode::Adaptive,
        budget: Budget::Iterations(RECON_ARRIVAL_ITERS),
        deterministic: true,
        ..TrainConfig::default()
    };
    let r = train(&scene, &cfg);
    let p = r.mean_psnr();
    verdict(
        p >= RECON_MIN_PSNR_DB && r.total_iterations == RECON_ARRIVAL_ITERS * STREAM_FRAMES as u64,
        format!(
            "{} iterations, mean training-view PSNR {p:.2} dB (limit {RECON_MIN_PSNR_DB}), SSIM {:.3}, {} primitives",
            r.total_iterations,
            r.mean_ssim(),
            r.final_primitives
        ),
    )
}

fn c10_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let p = |path: &Path| path.to_str().unwrap().to_string();
    let data = dir.path().join("data");
    let cli = |args: &[String]| splatwise::cli::main_with_args(std::iter::once("splatwise".to_string()).chain(args.iter().cloned()));
    let gen = ["gen-synthetic", "--seed", "7", "-o"].iter().map(|s| s.to_string()).chain([p(&data)]).collect::<Vec<_>>();
    if cli(&gen) != 0 {
        return verdict(false, "gen-synthetic failed");
    }
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let args: Vec<String> =
            ["train", &p(&data), "-o", &p(&out), "--budget-iters", "4", "--deterministic", "--seed", "3"].iter().map(|s| s.to_string()).collect();
        if cli(&args) != 0 {
            return verdict(false, format!("train run {run} failed"));
        }
        reports.push((std::fs::read(out.join("report.csv")).unwrap(), std::fs::read(out.join("map.ply")).unwrap()));
    }
    let same_csv = reports[0].0 == reports[1].0;
    let same_map = reports[0].1 == reports[1].1;
    verdict(same_csv, format!("two --deterministic runs: report.csv identical {same_csv}, map.ply identical {same_map}"))
}

fn c11_io() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let prims = (0..100)
        .map(|_| {
            let a: [f32; PARAMS_PER_PRIMITIVE] = core::array::from_fn(|_| rng.random_range(-4.0..4.0));
            GaussianPrimitive::from_array(&a)
        })
        .collect();
    let map = GaussianMap::from_primitives(prims);
    let bits = |m: &GaussianMap<f32>| m.primitives().iter().flat_map(|p| p.to_array().map(f32::to_bits)).collect::<Vec<_>>();
    let mut exact = true;
    for format in [PlyFormat::BinaryLittleEndian, PlyFormat::Ascii] {
        let mut buf = Vec::new();
        write_map(&map, format, &mut buf).unwrap();
        let back = read_map(std::io::Cursor::new(buf), Path::new("mem.ply")).unwrap();
        exact &= bits(&back) == bits(&map);
    }

    // Poses 0.079 s and 0.081 s away from their nearest image.
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("intrinsics.txt"), "10 10 4 4 8 8\n").unwrap();
    std::fs::write(root.join("trajectory.txt"), "1.0 0 0 0 0 0 0 1\n2.0 0 0 0 0 0 0 1\n").unwrap();
    std::fs::create_dir(root.join("rgb")).unwrap();
    save_ppm8(&root.join("rgb/a.ppm"), &Image::filled(8, 8, [0.5; 3])).unwrap();
    std::fs::write(root.join("rgb.txt"), "1.079 rgb/a.ppm\n2.081 rgb/a.ppm\n").unwrap();
    let ds = PosedDataset::open(root).unwrap();
    let window_ok = ds.len() == 1 && ds.skipped == 1 && ds.frames[0].timestamp == 1.0;
    let identity = parse_trajectory_line("0 0 0 0 0 0 0 1").map(|(_, pose)| pose == Pose::identity()).unwrap_or(false);
    verdict(
        exact && window_ok && identity && SYNC_WINDOW_S == 0.08,
        format!("100-primitive PLY round trip field-exact {exact}; Δt window {SYNC_WINDOW_S} s keeps 0.079, drops 0.081: {window_ok}"),
    )
}
