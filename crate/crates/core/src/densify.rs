//! Map growth and pruning: seeding primitives from colored points, and
//! gradient-driven clone/split with low-opacity pruning.

use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::{GaussianMap, GaussianPrimitive};
use crate::linalg::{mat_vec, quat_to_mat};
use crate::rasterizer::ParamGrads;
use crate::real::{logit, Real};
use crate::sh::SH_C0;

pub const INITIAL_OPACITY: f64 = 0.1;
pub const MIN_SEED_SCALE: f64 = 1e-4;
/// Isotropic scale of a lone point, as a fraction of the scene extent.
pub const LONE_POINT_SCALE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensifyConfig<T> {
    /// Densify every this many global iterations.
    pub interval: usize,
    pub grad_threshold: T,
    pub prune_opacity: T,
    /// Primitives larger than this fraction of the scene extent are split, smaller ones cloned.
    pub split_scale_percentile: T,
    pub split_children: usize,
    pub split_scale_shrink: T,
    /// Step length applied to the mean positional gradient when offsetting a clone.
    pub clone_step: T,
}

impl<T: Real> Default for DensifyConfig<T> {
    fn default() -> Self {
        Self {
            interval: 500,
            grad_threshold: T::lit(0.001),
            prune_opacity: T::lit(0.02),
            split_scale_percentile: T::lit(0.01),
            split_children: 2,
            split_scale_shrink: T::lit(1.6),
            clone_step: T::lit(1.6e-4),
        }
    }
}

impl<T: Real> DensifyConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = self.interval >= 1
            && self.grad_threshold > T::zero()
            && self.prune_opacity > T::zero()
            && self.split_scale_percentile > T::zero()
            && self.split_children >= 1
            && self.split_scale_shrink > T::zero()
            && self.clone_step >= T::zero();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("densify: interval >= 1 and positive thresholds required".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColoredPoint<T> {
    pub position: [T; 3],
    /// RGB in `[0, 1]`.
    pub color: [T; 3],
}

/// Running axis-aligned bounds of all seed points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneExtent<T> {
    bounds: Option<([T; 3], [T; 3])>,
}

impl<T: Real> Default for SceneExtent<T> {
    fn default() -> Self {
        Self { bounds: None }
    }
}

impl<T: Real> SceneExtent<T> {
    pub fn include(&mut self, points: &[ColoredPoint<T>]) {
        for p in points {
            let (lo, hi) = self.bounds.get_or_insert((p.position, p.position));
            for k in 0..3 {
                lo[k] = lo[k].min(p.position[k]);
                hi[k] = hi[k].max(p.position[k]);
            }
        }
    }

    /// Bounding-box diagonal, or 1 when no extent is known yet.
    pub fn extent(&self) -> T {
        match self.bounds {
            Some((lo, hi)) => {
                let d = (0..3).map(|k| (hi[k] - lo[k]) * (hi[k] - lo[k])).sum::<T>().sqrt();
                if d > T::zero() {
                    d
                } else {
                    T::one()
                }
            }
            None => T::one(),
        }
    }
}

/// Mean distance from each point to its (up to) three nearest neighbors.
/// `None` for a cloud with a single point.
pub fn knn3_mean_distance<T: Real>(points: &[[T; 3]]) -> Vec<Option<T>> {
    let n = points.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| points[a][0].partial_cmp(&points[b][0]).unwrap_or(Ordering::Equal));
    let k = 3.min(n.saturating_sub(1));
    let mut out = alloc::vec![None; n];
    if k == 0 {
        return out;
    }
    let d2 = |a: &[T; 3], b: &[T; 3]| (0..3).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum::<T>();
    for (rank, &i) in order.iter().enumerate() {
        let p = &points[i];
        // Squared distances of the best k so far, ascending.
        let mut best: Vec<T> = Vec::with_capacity(k + 1);
        let consider = |j: usize, best: &mut Vec<T>| -> bool {
            let dx = points[j][0] - p[0];
            if best.len() == k && dx * dx > best[k - 1] {
                return false;
            }
            let d = d2(p, &points[j]);
            let pos = best.iter().position(|b| d < *b).unwrap_or(best.len());
            if pos < k {
                best.insert(pos, d);
                best.truncate(k);
            }
            true
        };
        let (mut lo, mut hi) = (rank, rank + 1);
        let (mut lo_open, mut hi_open) = (true, true);
        while lo_open || hi_open {
            if hi_open {
                hi_open = hi < n && consider(order[hi], &mut best);
                hi += 1;
            }
            if lo_open {
                lo_open = lo > 0 && consider(order[lo - 1], &mut best);
                lo = lo.saturating_sub(1);
            }
        }
        let mean = best.iter().map(|d| d.sqrt()).sum::<T>() / T::lit(best.len() as f64);
        out[i] = Some(mean);
    }
    out
}

/// One isotropic primitive per point, scaled by local point spacing.
pub fn seed_from_points<T: Real>(points: &[ColoredPoint<T>], scene_extent: T) -> Vec<GaussianPrimitive<T>> {
    let positions: Vec<[T; 3]> = points.iter().map(|p| p.position).collect();
    let spacing = knn3_mean_distance(&positions);
    let floor = T::lit(MIN_SEED_SCALE).ln();
    let lone = (T::lit(LONE_POINT_SCALE) * scene_extent).ln();
    let c0 = T::lit(SH_C0);
    points
        .iter()
        .zip(spacing)
        .map(|(p, d)| {
            let ls = match d {
                Some(d) if d > T::zero() => d.ln().max(floor),
                Some(_) => floor,
                None => lone.max(floor),
            };
            let mut g = GaussianPrimitive::zeroed();
            g.position = p.position;
            g.rotation = [T::one(), T::zero(), T::zero(), T::zero()];
            g.log_scale = [ls; 3];
            g.opacity_logit = logit(T::lit(INITIAL_OPACITY));
            for c in 0..3 {
                g.sh[c] = (p.color[c] - T::lit(0.5)) / c0;
            }
            g
        })
        .collect()
}

/// Adds one iteration's gradients to the per-primitive statistics of
/// primitives that were rendered in it.
pub fn accumulate_grad_stats<T: Real>(map: &mut GaussianMap<T>, grads: &ParamGrads<T>) -> Result<()> {
    if grads.len() != map.len() {
        return Err(Error::ShapeMismatch {
            expected: alloc::format!("{} gradients", map.len()),
            actual: alloc::format!("{}", grads.len()),
        });
    }
    for (i, stat) in map.grad_stats_mut().iter_mut().enumerate() {
        if !grads.contributed[i] {
            continue;
        }
        stat.grad_norm_sum += grads.mean2d_grad_norm[i];
        for k in 0..3 {
            stat.position_grad_sum[k] += grads.grads[i].position[k];
        }
        stat.count += 1;
    }
    Ok(())
}

/// What a densify event did; the map is now `survivors` (old indices) followed by `n_new` primitives.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DensifyReport {
    pub survivors: Vec<usize>,
    pub n_new: usize,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

pub fn densify_and_prune<T: Real, R: Rng + ?Sized>(
    map: &mut GaussianMap<T>,
    config: &DensifyConfig<T>,
    scene_extent: T,
    rng: &mut R,
) -> Result<DensifyReport> {
    config.validate()?;
    let size_limit = config.split_scale_percentile * scene_extent;
    let shrink = config.split_scale_shrink.ln();
    let mut report = DensifyReport::default();
    let mut survivors = Vec::with_capacity(map.len());
    let mut appended = Vec::new();
    for (i, (p, stat)) in map.primitives().iter().zip(map.grad_stats()).enumerate() {
        if !(stat.count > 0 && stat.mean_grad_norm() > config.grad_threshold) {
            survivors.push(i);
            continue;
        }
        let s = p.scale();
        let largest = s[0].max(s[1]).max(s[2]);
        if largest <= size_limit {
            let g = stat.mean_position_grad();
            let mut clone = *p;
            for k in 0..3 {
                clone.position[k] -= config.clone_step * g[k];
            }
            survivors.push(i);
            appended.push(clone);
            report.cloned += 1;
        } else {
            let mut q = p.rotation;
            let n = q.iter().map(|v| *v * *v).sum::<T>().sqrt();
            q = q.map(|v| v / n);
            let r = quat_to_mat(&q);
            for _ in 0..config.split_children {
                let z: [T; 3] = core::array::from_fn(|k| T::lit(rng.sample::<f64, _>(StandardNormal)) * s[k]);
                let off = mat_vec(&r, &z);
                let mut child = *p;
                for k in 0..3 {
                    child.position[k] += off[k];
                    child.log_scale[k] -= shrink;
                }
                appended.push(child);
            }
            report.split += 1;
        }
    }
    let prims = map.primitives();
    let before = survivors.len() + appended.len();
    survivors.retain(|&i| prims[i].opacity() >= config.prune_opacity);
    appended.retain(|p| p.opacity() >= config.prune_opacity);
    report.pruned = before - survivors.len() - appended.len();
    report.n_new = appended.len();
    map.gather(&survivors, appended)?;
    map.reset_grad_stats();
    report.survivors = survivors;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::sigmoid;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pt(x: f64, y: f64, z: f64) -> ColoredPoint<f64> {
        ColoredPoint { position: [x, y, z], color: [0.5; 3] }
    }

    fn brute_knn(points: &[[f64; 3]]) -> Vec<Option<f64>> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d: Vec<f64> = points
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
                    .collect();
                d.sort_by(|a, b| a.partial_cmp(b).unwrap());
                d.truncate(3);
                (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
            })
            .collect()
    }

    #[test]
    fn knn_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<[f64; 3]> = (0..200).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let fast = knn3_mean_distance(&pts);
        for (a, b) in fast.iter().zip(brute_knn(&pts)) {
            assert!((a.unwrap() - b.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn seed_examples() {
        let lone = seed_from_points(&[pt(1.0, 2.0, 3.0)], 1.0);
        assert!((lone[0].log_scale[0] - 0.01f64.ln()).abs() < 1e-12);
        assert_eq!(lone[0].log_scale[0], lone[0].log_scale[2]);

        let line = seed_from_points(&[pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0), pt(2.0, 0.0, 0.0)], 1.0);
        assert!(line[1].log_scale[0].abs() < 1e-12);
        assert_eq!(line[1].sh[..3], [0.0; 3]);
        assert!((sigmoid(line[0].opacity_logit) - 0.1).abs() < 1e-12);
        assert_eq!(line[0].rotation, [1.0, 0.0, 0.0, 0.0]);

        let dup = seed_from_points(&[pt(0.0, 0.0, 0.0), pt(0.0, 0.0, 0.0)], 1.0);
        assert!((dup[0].log_scale[0] - 1e-4f64.ln()).abs() < 1e-12);
        assert!(seed_from_points::<f64>(&[], 1.0).is_empty());
    }

    #[test]
    fn extent_is_bbox_diagonal() {
        let mut e = SceneExtent::default();
        assert_eq!(e.extent(), 1.0);
        e.include(&[pt(0.0, 0.0, 0.0), pt(3.0, 4.0, 0.0)]);
        assert!((e.extent() - 5.0).abs() < 1e-12);
    }

    fn grads_with_norms(norms: &[f64]) -> ParamGrads<f64> {
        let mut g = ParamGrads::zeros(norms.len());
        g.mean2d_grad_norm = norms.to_vec();
        g.contributed = vec![true; norms.len()];
        g
    }

    #[test]
    fn stats_are_running_means() {
        let mut map = GaussianMap::from_primitives(seed_from_points(&[pt(0.0, 0.0, 0.0)], 1.0));
        accumulate_grad_stats(&mut map, &grads_with_norms(&[0.002])).unwrap();
        accumulate_grad_stats(&mut map, &grads_with_norms(&[0.006])).unwrap();
        assert!((map.grad_stats()[0].mean_grad_norm() - 0.004).abs() < 1e-15);
        assert_eq!(map.grad_stats()[0].count, 2);
        let mut skipped = grads_with_norms(&[1.0]);
        skipped.contributed[0] = false;
        accumulate_grad_stats(&mut map, &skipped).unwrap();
        assert_eq!(map.grad_stats()[0].count, 2);
        assert!(accumulate_grad_stats(&mut map, &grads_with_norms(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn prune_and_split_bookkeeping() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = DensifyConfig::default();
        let mut a = seed_from_points(&[pt(0.0, 0.0, 0.0)], 1.0)[0];
        let mut b = a;
        a.opacity_logit = logit(0.01);
        b.opacity_logit = logit(0.5);
        let mut map = GaussianMap::from_primitives(vec![a, b]);
        let rep = densify_and_prune(&mut map, &cfg, 1.0, &mut rng).unwrap();
        assert_eq!(map.len(), 1);
        assert_eq!(rep.survivors, vec![1]);

        let mut big = b;
        big.log_scale = [0.5f64.ln(); 3];
        let mut map = GaussianMap::from_primitives(vec![big]);
        accumulate_grad_stats(&mut map, &grads_with_norms(&[0.01])).unwrap();
        let rep = densify_and_prune(&mut map, &cfg, 1.0, &mut rng).unwrap();
        assert_eq!((map.len(), rep.split, rep.n_new), (2, 1, 2));
        assert!(rep.survivors.is_empty());
        for c in map.primitives() {
            assert!((c.scale()[0] - 0.5 / 1.6).abs() < 1e-12);
        }
        assert!(map.grad_stats().iter().all(|s| s.count == 0));
    }

    #[test]
    fn small_hot_primitive_is_cloned() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = seed_from_points(&[pt(0.0, 0.0, 0.0)], 1.0)[0];
        p.log_scale = [0.001f64.ln(); 3];
        let mut map = GaussianMap::from_primitives(vec![p]);
        let mut g = grads_with_norms(&[0.01]);
        g.grads[0].position = [1.0, 0.0, 0.0];
        accumulate_grad_stats(&mut map, &g).unwrap();
        let rep = densify_and_prune(&mut map, &DensifyConfig::default(), 1.0, &mut rng).unwrap();
        assert_eq!((rep.cloned, rep.survivors.clone(), rep.n_new), (1, vec![0], 1));
        assert!((map.primitives()[1].position[0] + 1.6e-4).abs() < 1e-15);
    }

    #[test]
    fn quiet_map_is_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = [pt(0.0, 0.0, 0.0), pt(1.0, 0.0, 0.0)];
        let mut map = GaussianMap::from_primitives(seed_from_points(&pts, 1.0));
        let before = map.clone();
        accumulate_grad_stats(&mut map, &grads_with_norms(&[0.0001, 0.0])).unwrap();
        densify_and_prune(&mut map, &DensifyConfig::default(), 1.0, &mut rng).unwrap();
        assert_eq!(map, before);
    }
}
