//! Posed image datasets in a TUM-like text layout:
//!
//! ```text
//! intrinsics.txt   fx fy cx cy width height
//! trajectory.txt   timestamp tx ty tz qx qy qz qw   (camera-to-world)
//! rgb.txt          timestamp relative/path.png
//! points.txt       timestamp relative/path.txt      (optional; rows "x y z r g b", colors in [0, 1])
//! ```
//!
//! Lines starting with `#` and blank lines are ignored. Every trajectory
//! entry is matched to the image with the nearest timestamp; entries with no
//! image within [`SYNC_WINDOW_S`] are skipped and counted.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use splatwise_core::densify::ColoredPoint;
use splatwise_core::linalg::{mat_to_quat, quat_to_mat};
use splatwise_core::{Camera, Image, Pose};

use crate::dataio::imageio::{load_image, save_png16};
use crate::error::{DataError, Result};

/// Largest accepted gap between a pose and its image, in seconds.
pub const SYNC_WINDOW_S: f64 = 0.08;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    pub fn camera(&self, world_to_camera: &Pose<f64>) -> splatwise_core::Result<Camera<f32>> {
        Camera::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height, *world_to_camera).map(|c| c.cast())
    }
}

/// One synchronized trajectory entry; images and points are loaded on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub timestamp: f64,
    pub camera_to_world: Pose<f64>,
    pub image_path: PathBuf,
    pub points_path: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Frame {
    /// Position in the stream.
    pub index: usize,
    pub timestamp: f64,
    pub camera: Camera<f32>,
    pub image: Image<f32>,
    pub points: Vec<ColoredPoint<f32>>,
}

#[derive(Clone, Debug)]
pub struct PosedDataset {
    pub root: PathBuf,
    pub intrinsics: Intrinsics,
    pub frames: Vec<FrameRecord>,
    /// Trajectory entries without an image inside the sync window.
    pub skipped: usize,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

/// Non-comment lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_f64(field: &str) -> std::result::Result<f64, String> {
    let v: f64 = field.parse().map_err(|_| format!("bad number '{field}'"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("non-finite value '{field}'"))
    }
}

/// Parses `timestamp tx ty tz qx qy qz qw` into a camera-to-world pose.
pub fn parse_trajectory_line(line: &str) -> std::result::Result<(f64, Pose<f64>), String> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 8 {
        return Err(format!("expected 8 fields 'timestamp tx ty tz qx qy qz qw', found {}", f.len()));
    }
    let v = f.iter().map(|s| parse_f64(s)).collect::<std::result::Result<Vec<_>, _>>()?;
    let q = [v[7], v[4], v[5], v[6]];
    let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n < 1e-12 {
        return Err("zero quaternion".into());
    }
    let q = q.map(|x| x / n);
    Ok((v[0], Pose { rotation: quat_to_mat(&q), translation: [v[1], v[2], v[3]] }))
}

pub fn format_trajectory_line(timestamp: f64, camera_to_world: &Pose<f64>) -> String {
    let q = mat_to_quat(&camera_to_world.rotation);
    let t = camera_to_world.translation;
    format!("{timestamp:.6} {} {} {} {} {} {} {}", t[0], t[1], t[2], q[1], q[2], q[3], q[0])
}

fn parse_intrinsics(path: &Path) -> Result<Intrinsics> {
    let text = read_text(path)?;
    let (line, l) = content_lines(&text).next().ok_or_else(|| DataError::parse(path, 1, "no intrinsics line"))?;
    let f: Vec<&str> = l.split_whitespace().collect();
    if f.len() != 6 {
        return Err(DataError::parse(path, line, format!("expected 'fx fy cx cy width height', found {} fields", f.len())));
    }
    let num = |s: &str| parse_f64(s).map_err(|m| DataError::parse(path, line, m));
    let int = |s: &str| s.parse::<usize>().map_err(|_| DataError::parse(path, line, format!("bad size '{s}'")));
    Ok(Intrinsics { fx: num(f[0])?, fy: num(f[1])?, cx: num(f[2])?, cy: num(f[3])?, width: int(f[4])?, height: int(f[5])? })
}

/// `timestamp path` rows, sorted by timestamp.
fn parse_index(path: &Path) -> Result<Vec<(f64, PathBuf)>> {
    let text = read_text(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut rows = Vec::new();
    for (line, l) in content_lines(&text) {
        let mut f = l.split_whitespace();
        let (Some(ts), Some(rel), None) = (f.next(), f.next(), f.next()) else {
            return Err(DataError::parse(path, line, "expected 'timestamp path'"));
        };
        let ts = parse_f64(ts).map_err(|m| DataError::parse(path, line, m))?;
        rows.push((ts, dir.join(rel)));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(rows)
}

fn nearest(rows: &[(f64, PathBuf)], t: f64) -> Option<&(f64, PathBuf)> {
    let i = rows.partition_point(|(ts, _)| *ts < t);
    let before = i.checked_sub(1).map(|j| &rows[j]);
    let after = rows.get(i);
    let best = match (before, after) {
        (Some(a), Some(b)) => Some(if (t - a.0).abs() <= (b.0 - t).abs() { a } else { b }),
        (a, b) => a.or(b),
    };
    best.filter(|(ts, _)| (ts - t).abs() <= SYNC_WINDOW_S)
}

pub fn parse_points(path: &Path) -> Result<Vec<ColoredPoint<f32>>> {
    let text = read_text(path)?;
    let mut pts = Vec::new();
    for (line, l) in content_lines(&text) {
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 6 {
            return Err(DataError::parse(path, line, format!("expected 'x y z r g b', found {} fields", f.len())));
        }
        let v = f.iter().map(|s| parse_f64(s)).collect::<std::result::Result<Vec<_>, _>>();
        let v = v.map_err(|m| DataError::parse(path, line, m))?;
        pts.push(ColoredPoint {
            position: [v[0] as f32, v[1] as f32, v[2] as f32],
            color: [v[3] as f32, v[4] as f32, v[5] as f32],
        });
    }
    Ok(pts)
}

impl PosedDataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let intrinsics = parse_intrinsics(&root.join("intrinsics.txt"))?;
        let traj_path = root.join("trajectory.txt");
        let text = read_text(&traj_path)?;
        let mut poses = Vec::new();
        for (line, l) in content_lines(&text) {
            let (t, pose) = parse_trajectory_line(l).map_err(|m| DataError::parse(&traj_path, line, m))?;
            poses.push((line, t, pose));
        }
        poses.sort_by(|a, b| a.1.total_cmp(&b.1));
        if let Some(w) = poses.windows(2).find(|w| w[0].1 == w[1].1) {
            return Err(DataError::parse(&traj_path, w[1].0, format!("duplicate timestamp {}", w[1].1)));
        }
        let images = parse_index(&root.join("rgb.txt"))?;
        let points_index = root.join("points.txt");
        let points = if points_index.exists() { parse_index(&points_index)? } else { Vec::new() };

        let mut frames = Vec::new();
        let mut skipped = 0;
        for (_, t, pose) in poses {
            let Some((_, image_path)) = nearest(&images, t) else {
                log::warn!("no image within {SYNC_WINDOW_S} s of pose at t={t}; skipped");
                skipped += 1;
                continue;
            };
            let points_path = nearest(&points, t).map(|(_, p)| p.clone());
            frames.push(FrameRecord { timestamp: t, camera_to_world: pose, image_path: image_path.clone(), points_path });
        }
        Ok(Self { root, intrinsics, frames, skipped })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn camera(&self, index: usize) -> Result<Camera<f32>> {
        Ok(self.intrinsics.camera(&self.frames[index].camera_to_world.inverse())?)
    }

    pub fn cameras(&self) -> Result<Vec<Camera<f32>>> {
        (0..self.len()).map(|i| self.camera(i)).collect()
    }

    pub fn load_frame(&self, index: usize) -> Result<Frame> {
        let rec = &self.frames[index];
        let wrap = |e: DataError| DataError::Frame { frame: format!("{index} (t={})", rec.timestamp), source: Box::new(e) };
        let camera = self.camera(index).map_err(wrap)?;
        let image = load_image(&rec.image_path).map_err(wrap)?;
        if (image.width(), image.height()) != (camera.width, camera.height) {
            return Err(wrap(DataError::format(
                &rec.image_path,
                format!("image is {}x{}, intrinsics say {}x{}", image.width(), image.height(), camera.width, camera.height),
            )));
        }
        let points = match &rec.points_path {
            Some(p) => parse_points(p).map_err(wrap)?,
            None => Vec::new(),
        };
        Ok(Frame { index, timestamp: rec.timestamp, camera, image, points })
    }

    /// Frames in timestamp order, loaded lazily.
    pub fn stream(&self) -> impl Iterator<Item = Result<Frame>> + '_ {
        (0..self.len()).map(|i| self.load_frame(i))
    }
}

/// One frame to be written by [`write_dataset`].
pub struct FrameOut<'a> {
    pub timestamp: f64,
    pub camera_to_world: Pose<f64>,
    pub image: &'a Image<f32>,
    pub points: &'a [ColoredPoint<f32>],
}

pub fn write_dataset(root: &Path, intrinsics: &Intrinsics, frames: &[FrameOut<'_>]) -> Result<()> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| DataError::io(p, e));
    let write = |p: &Path, s: &str| std::fs::write(p, s).map_err(|e| DataError::io(p, e));
    mkdir(&root.join("rgb"))?;
    mkdir(&root.join("points"))?;
    let k = intrinsics;
    write(&root.join("intrinsics.txt"), &format!("# fx fy cx cy width height\n{} {} {} {} {} {}\n", k.fx, k.fy, k.cx, k.cy, k.width, k.height))?;
    let mut traj = String::from("# timestamp tx ty tz qx qy qz qw (camera-to-world)\n");
    let mut rgb = String::from("# timestamp filename\n");
    let mut pts = String::from("# timestamp filename\n");
    for (i, f) in frames.iter().enumerate() {
        traj.push_str(&format_trajectory_line(f.timestamp, &f.camera_to_world));
        traj.push('\n');
        let name = format!("rgb/{i:06}.png");
        save_png16(&root.join(&name), f.image)?;
        let _ = writeln!(rgb, "{:.6} {name}", f.timestamp);
        if !f.points.is_empty() {
            let name = format!("points/{i:06}.txt");
            let mut body = String::new();
            for p in f.points {
                let (x, c) = (p.position, p.color);
                let _ = writeln!(body, "{} {} {} {} {} {}", x[0], x[1], x[2], c[0], c[1], c[2]);
            }
            write(&root.join(&name), &body)?;
            let _ = writeln!(pts, "{:.6} {name}", f.timestamp);
        }
    }
    write(&root.join("trajectory.txt"), &traj)?;
    write(&root.join("rgb.txt"), &rgb)?;
    write(&root.join("points.txt"), &pts)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_line() {
        let (t, pose) = parse_trajectory_line("0.0 0 0 0 0 0 0 1").unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(pose, Pose::identity());
    }

    #[test]
    fn six_fields_rejected() {
        let err = parse_trajectory_line("0.0 1 2 3 0 1").unwrap_err();
        assert!(err.contains("found 6"), "{err}");
    }

    #[test]
    fn quaternion_is_normalized() {
        let (_, pose) = parse_trajectory_line("1 0 0 0 0 0 0 2").unwrap();
        assert!(pose.orthonormality_error() < 1e-12);
    }

    #[test]
    fn nearest_respects_window() {
        let rows = vec![(0.05, PathBuf::from("a")), (1.0, PathBuf::from("b"))];
        assert_eq!(nearest(&rows, 0.0).unwrap().1, PathBuf::from("a"));
        assert!(nearest(&rows, 0.5).is_none());
        assert_eq!(nearest(&rows, 0.93).unwrap().1, PathBuf::from("b"));
    }

    #[test]
    fn trajectory_line_round_trips() {
        let pose = Pose::look_at(&[1.0, 2.0, -3.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).inverse();
        let (t, back) = parse_trajectory_line(&format_trajectory_line(0.5, &pose)).unwrap();
        assert_eq!(t, 0.5);
        for i in 0..3 {
            assert!((back.translation[i] - pose.translation[i]).abs() < 1e-15);
            for j in 0..3 {
                assert!((back.rotation[i][j] - pose.rotation[i][j]).abs() < 1e-12);
            }
        }
    }
}
