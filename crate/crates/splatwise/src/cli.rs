//! The `splatwise` command line. Exit codes: 0 success, 1 runtime failure,
//! 2 usage or validation error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bench::{run_bench, BenchConfig};
use crate::dataio::{gen_synthetic, load_map, save_map, save_png16, PlyFormat, PosedDataset, SyntheticConfig};
use crate::trainer::{render_trajectory, run_stream, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "splatwise", version, about = "Streaming Gaussian-splatting reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic posed dataset with its ground-truth map.
    GenSynthetic(GenArgs),
    /// Train a map on a posed dataset, one keyframe per frame.
    Train(TrainArgs),
    /// Render a saved map at every pose of a dataset.
    Render(RenderArgs),
    /// Compare renders of a saved map against a dataset's images.
    Eval(EvalArgs),
    /// Time forward and both backward passes on a high-overlap scene.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 500)]
    gaussians: usize,
    #[arg(long, default_value_t = 50)]
    frames: usize,
    #[arg(long, default_value_t = 128)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sparse points per frame (default: max(8, gaussians / 20)).
    #[arg(long)]
    points_per_frame: Option<usize>,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BackwardArg {
    Pixel,
    Splat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchedulerArg {
    Adaptive,
    Uniform,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory.
    data: PathBuf,
    /// Output directory (default: `<data>/run`).
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// `key=value` settings file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    backward: Option<BackwardArg>,
    #[arg(long, value_enum)]
    scheduler: Option<SchedulerArg>,
    #[arg(long)]
    lambda_o: Option<f32>,
    #[arg(long)]
    lambda_ssim: Option<f32>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    r0: Option<u32>,
    /// Iterations per arriving keyframe.
    #[arg(long, conflicts_with = "budget_ms")]
    budget_iters: Option<u64>,
    /// Wall-clock milliseconds per arriving keyframe.
    #[arg(long)]
    budget_ms: Option<u64>,
    /// Cap on total iterations.
    #[arg(long)]
    max_iters: Option<u64>,
    /// Iterations after the last keyframe.
    #[arg(long)]
    refine_iters: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Ordered reductions; with an iteration budget, reruns give identical reports.
    #[arg(long)]
    deterministic: bool,
    /// Extra `key=value` setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct RenderArgs {
    map: PathBuf,
    data: PathBuf,
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    sh_degree: u8,
}

#[derive(Args, Debug)]
struct EvalArgs {
    map: PathBuf,
    data: PathBuf,
    /// Directory for `eval.csv` and the manifest; the CSV is always printed.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    sh_degree: u8,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 10_000)]
    splats: usize,
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 8)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: Option<PathBuf>,
}

/// Failure carrying its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

fn runtime(message: impl ToString) -> Failure {
    Failure { code: EXIT_FAILURE, message: message.to_string() }
}

type CmdResult = Result<(), Failure>;

#[derive(Serialize)]
struct RunManifest {
    command: String,
    args: Vec<String>,
    config: serde_json::Map<String, serde_json::Value>,
    seed: u64,
    git_describe: String,
    started_unix: f64,
    finished_unix: Option<f64>,
    outputs: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, config: Vec<(String, String)>, seed: u64) -> Self {
        Self {
            command: command.into(),
            args: std::env::args().collect(),
            config: config.into_iter().map(|(k, v)| (k, serde_json::Value::String(v))).collect(),
            seed,
            git_describe: git_describe(),
            started_unix: unix_now(),
            finished_unix: None,
            outputs: Vec::new(),
        }
    }

    fn write(&self, dir: &Path) -> CmdResult {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(runtime)? + "\n";
        std::fs::write(&path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
    }

    fn finish(&mut self, dir: &Path, outputs: &[&str]) -> CmdResult {
        self.finished_unix = Some(unix_now());
        self.outputs = outputs.iter().map(|o| dir.join(o).display().to_string()).collect();
        self.write(dir)
    }
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

fn create_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))
}

fn write_file(path: &Path, text: &str) -> CmdResult {
    std::fs::write(path, text).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_settings(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn resolve_train_config(args: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = TrainConfig::default();
    let mut settings = Vec::new();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        settings.extend(parse_settings(&text).map_err(|m| usage(format!("{}: {m}", path.display())))?);
    }
    let mut flag = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            settings.push((k.to_string(), v));
        }
    };
    flag("backward", args.backward.map(|b| format!("{b:?}").to_lowercase()));
    flag("scheduler", args.scheduler.map(|s| format!("{s:?}").to_lowercase()));
    flag("lambda_o", args.lambda_o.map(|v| v.to_string()));
    flag("lambda_ssim", args.lambda_ssim.map(|v| v.to_string()));
    flag("d", args.d.map(|v| v.to_string()));
    flag("r0", args.r0.map(|v| v.to_string()));
    flag("budget_iters", args.budget_iters.map(|v| v.to_string()));
    flag("budget_ms", args.budget_ms.map(|v| v.to_string()));
    flag("max_iters", args.max_iters.map(|v| v.to_string()));
    flag("refine_iters", args.refine_iters.map(|v| v.to_string()));
    flag("seed", args.seed.map(|v| v.to_string()));
    flag("deterministic", args.deterministic.then(|| "true".to_string()));
    for s in &args.set {
        let (k, v) = s.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{s}'")))?;
        settings.push((k.to_string(), v.to_string()));
    }
    for (k, v) in settings {
        cfg.set(&k, &v).map_err(usage)?;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn cmd_gen(args: GenArgs) -> CmdResult {
    let cfg = SyntheticConfig {
        n_gaussians: args.gaussians,
        n_frames: args.frames,
        size: args.size,
        seed: args.seed,
        points_per_frame: args.points_per_frame,
    };
    cfg.validate().map_err(usage)?;
    gen_synthetic(&cfg, &args.out).map_err(runtime)?;
    println!("{}", args.out.display());
    Ok(())
}

fn open_dataset(path: &Path) -> Result<PosedDataset, Failure> {
    let ds = PosedDataset::open(path).map_err(runtime)?;
    if ds.skipped > 0 {
        log::warn!("{} trajectory entries had no image within the sync window", ds.skipped);
    }
    Ok(ds)
}

fn cmd_train(args: TrainArgs) -> CmdResult {
    let cfg = resolve_train_config(&args)?;
    let out = args.out.clone().unwrap_or_else(|| args.data.join("run"));
    let dataset = open_dataset(&args.data)?;
    if dataset.is_empty() {
        return Err(runtime(format!("{}: no frames", args.data.display())));
    }
    create_dir(&out)?;
    let mut manifest = RunManifest::new("train", cfg.entries(), cfg.seed);
    manifest.write(&out)?;
    let config_txt: String = cfg.entries().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    write_file(&out.join("config.txt"), &config_txt)?;

    let outcome = run_stream(dataset.stream(), &cfg).map_err(runtime)?;
    save_map(&out.join("map.ply"), &outcome.map, PlyFormat::BinaryLittleEndian).map_err(runtime)?;
    write_file(&out.join("report.csv"), &outcome.report.to_csv())?;
    let summary = serde_json::to_string_pretty(&outcome.report.summary_json()).map_err(runtime)? + "\n";
    write_file(&out.join("summary.json"), &summary)?;
    manifest.finish(&out, &["map.ply", "report.csv", "summary.json", "config.txt"])?;
    eprintln!(
        "{} iterations, {:.1} it/s, {} primitives, mean PSNR {:.2} dB",
        outcome.report.total_iterations,
        outcome.report.iterations_per_second,
        outcome.report.final_primitives,
        outcome.report.mean_psnr()
    );
    println!("{}", out.display());
    Ok(())
}

fn load_for_render(map: &Path, data: &Path) -> Result<(splatwise_core::GaussianMap<f32>, PosedDataset), Failure> {
    let dataset = open_dataset(data)?;
    if dataset.is_empty() {
        return Err(usage(format!("{}: no poses to render", data.display())));
    }
    let map = load_map(map).map_err(runtime)?;
    if let Some((i, field)) = map.first_non_finite() {
        return Err(runtime(format!("map primitive {i} has a non-finite {field}")));
    }
    Ok((map, dataset))
}

fn cmd_render(args: RenderArgs) -> CmdResult {
    let (map, dataset) = load_for_render(&args.map, &args.data)?;
    create_dir(&args.out)?;
    let mut manifest = RunManifest::new("render", vec![("sh_degree".into(), args.sh_degree.to_string())], 0);
    manifest.write(&args.out)?;
    let cameras = dataset.cameras().map_err(runtime)?;
    let images = render_trajectory(&map, &cameras, args.sh_degree).map_err(runtime)?;
    let mut names = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let name = format!("{i:06}.png");
        save_png16(&args.out.join(&name), img).map_err(runtime)?;
        names.push(name);
    }
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    manifest.finish(&args.out, &refs)?;
    println!("{}", args.out.display());
    Ok(())
}

pub const EVAL_CSV_HEADER: &str = "frame_id,timestamp,psnr,ssim,points";

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let (map, dataset) = load_for_render(&args.map, &args.data)?;
    let mut manifest = RunManifest::new("eval", vec![("sh_degree".into(), args.sh_degree.to_string())], 0);
    if let Some(out) = &args.out {
        create_dir(out)?;
        manifest.write(out)?;
    }
    let cameras = dataset.cameras().map_err(runtime)?;
    let renders = render_trajectory(&map, &cameras, args.sh_degree).map_err(runtime)?;
    let mut csv = format!("{EVAL_CSV_HEADER}\n");
    let (mut sum_p, mut sum_s) = (0.0, 0.0);
    for (i, img) in renders.iter().enumerate() {
        let frame = dataset.load_frame(i).map_err(runtime)?;
        let p = splatwise_core::losses::psnr(img, &frame.image).map_err(runtime)?;
        let s = splatwise_core::losses::ssim_metric(img, &frame.image).map_err(runtime)?;
        sum_p += p;
        sum_s += s;
        csv += &format!("{i},{:.6},{p:.6},{s:.6},{}\n", frame.timestamp, map.len());
    }
    let n = renders.len() as f64;
    csv += &format!("mean,,{:.6},{:.6},{}\n", sum_p / n, sum_s / n, map.len());
    print!("{csv}");
    if let Some(out) = &args.out {
        write_file(&out.join("eval.csv"), &csv)?;
        manifest.finish(out, &["eval.csv"])?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let cfg = BenchConfig {
        n_splats: args.splats,
        size: args.size,
        repetitions: args.reps,
        threads: args.threads,
        seed: args.seed,
    };
    cfg.validate().map_err(usage)?;
    let config = vec![
        ("splats".to_string(), args.splats.to_string()),
        ("size".to_string(), args.size.to_string()),
        ("reps".to_string(), args.reps.to_string()),
        ("threads".to_string(), args.threads.to_string()),
    ];
    let mut manifest = RunManifest::new("bench", config, args.seed);
    if let Some(out) = &args.out {
        create_dir(out)?;
        manifest.write(out)?;
    }
    let result = run_bench(&cfg).map_err(runtime)?;
    let csv = result.to_csv();
    print!("{csv}");
    if let Some(out) = &args.out {
        write_file(&out.join("bench.csv"), &csv)?;
        manifest.finish(out, &["bench.csv"])?;
    }
    if !result.passed() {
        return Err(runtime(format!(
            "gradient mismatch between backward passes: {:e} > {:e}",
            result.max_grad_rel_diff,
            crate::bench::GRADIENT_TOLERANCE
        )));
    }
    Ok(())
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::GenSynthetic(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Render(a) => cmd_render(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_file_format() {
        let s = parse_settings("# comment\nbackward = pixel\n\nseed=3 # trailing\n").unwrap();
        assert_eq!(s, vec![("backward".into(), "pixel".into()), ("seed".into(), "3".into())]);
        assert!(parse_settings("novalue\n").is_err());
    }
}
