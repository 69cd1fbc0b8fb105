use alloc::vec;
use alloc::vec::Vec;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::GaussianMap;
use crate::image::Image;
use crate::parallel::{for_each_range, map_range, AtomicAccumulator};
use crate::real::Real;

use super::forward::{PixelState, RenderOutput};
use super::project::project_backward;
use super::{add_into, blend, pair_grads, splat_alpha, Acc2D, ParamGrads, Reduction, GRAD2D};

fn check_inputs<T: Real>(out: &RenderOutput<T>, map: &GaussianMap<T>, grad_image: &Image<T>) -> Result<()> {
    out.image.check_shape(grad_image)?;
    if map.len() != out.n_primitives {
        return Err(Error::ShapeMismatch {
            expected: alloc::format!("{} primitives", out.n_primitives),
            actual: alloc::format!("{}", map.len()),
        });
    }
    Ok(())
}

/// Reverse-order blending residual `Rest` just behind entry `k` of a pixel's
/// tile list: the color seen through splat `k`, normalized by the
/// transmittance in front of it.
fn rest_behind<T: Real>(out: &RenderOutput<T>, splats: &[u32], k: usize, n: usize, px: T, py: T) -> [T; 3] {
    let mut rest = out.options.background;
    for &s in splats[k + 1..n].iter().rev() {
        let p = &out.projected[s as usize];
        if let Some(a) = splat_alpha(p, px, py, &out.options) {
            for c in 0..3 {
                rest[c] = p.rgb[c] * a.alpha + rest[c] * (T::one() - a.alpha);
            }
        }
    }
    rest
}

/// Transmittance in front of entry `k`, by forward replay.
fn transmittance_before<T: Real>(out: &RenderOutput<T>, splats: &[u32], k: usize, px: T, py: T) -> T {
    let mut state = PixelState::initial();
    for &s in &splats[..k] {
        let p = &out.projected[s as usize];
        if let Some(a) = splat_alpha(p, px, py, &out.options) {
            blend(&mut state, &p.rgb, a.alpha);
        }
    }
    state.t
}

/// Reverse traversal of every pixel in a tile; `emit(k, g)` receives the
/// gradient of list entry `k` for one pixel.
fn pixelwise_tile<T: Real, F: FnMut(usize, &[T; GRAD2D])>(
    out: &RenderOutput<T>,
    tile: usize,
    grad_image: &Image<T>,
    mut emit: F,
) {
    let td = &out.tiles[tile];
    let [x0, y0, tw, th] = td.rect;
    let w = out.width();
    let bg = out.options.background;
    for ly in 0..th {
        for lx in 0..tw {
            let (x, y) = (x0 + lx, y0 + ly);
            let n = out.n_contrib[y * w + x] as usize;
            let g = grad_image.pixel(x, y);
            if n == 0 || g.iter().all(|v| *v == T::zero()) {
                continue;
            }
            let (px, py) = (T::lit(x as f64 + 0.5), T::lit(y as f64 + 0.5));
            let mut t = out.final_states[y * w + x].t;
            let mut rest = bg;
            for k in (0..n).rev() {
                let p = &out.projected[td.splats[k] as usize];
                let Some(a) = splat_alpha(p, px, py, &out.options) else { continue };
                let one_minus = T::one() - a.alpha;
                let t_i = if one_minus > T::zero() {
                    t / one_minus
                } else {
                    transmittance_before(out, &td.splats, k, px, py)
                };
                let mut dl_dalpha = T::zero();
                for c in 0..3 {
                    dl_dalpha += (p.rgb[c] - rest[c]) * g[c];
                }
                dl_dalpha = dl_dalpha * t_i;
                for c in 0..3 {
                    rest[c] = p.rgb[c] * a.alpha + rest[c] * one_minus;
                }
                t = t_i;
                emit(k, &pair_grads(p, &a, dl_dalpha, a.alpha * t_i, &g));
            }
        }
    }
}

/// Baseline backward: per-pixel reverse traversal with accumulation into
/// shared per-splat slots.
pub fn backward_pixelwise<T: Real>(
    out: &RenderOutput<T>,
    map: &GaussianMap<T>,
    camera: &Camera<T>,
    grad_image: &Image<T>,
) -> Result<ParamGrads<T>> {
    check_inputs(out, map, grad_image)?;
    let n_tiles = out.tiles.len();
    let npr = out.projected.len();
    let grads2d = match out.options.reduction {
        Reduction::Deterministic => {
            let partials = map_range(n_tiles, |tile| {
                let mut local = vec![[0.0; GRAD2D]; out.tiles[tile].splats.len()];
                pixelwise_tile(out, tile, grad_image, |k, g| add_into(&mut local[k], g));
                local
            });
            let mut acc = vec![[0.0; GRAD2D]; npr];
            for (tile, local) in partials.iter().enumerate() {
                for (k, g) in local.iter().enumerate() {
                    add_into(&mut acc[out.tiles[tile].splats[k] as usize], g);
                }
            }
            acc
        }
        Reduction::Atomic => {
            let acc = AtomicAccumulator::zeros::<f64>(npr * GRAD2D);
            for_each_range(n_tiles, |tile| {
                let splats = &out.tiles[tile].splats;
                pixelwise_tile(out, tile, grad_image, |k, g| {
                    let base = splats[k] as usize * GRAD2D;
                    for (j, v) in g.iter().enumerate() {
                        acc.add(base + j, v.as_f64());
                    }
                });
            });
            unflatten(acc.into_values::<f64>())
        }
    };
    finish(out, map, camera, &grads2d)
}

/// Gradient sums of one bucket's splats, in tile-list order.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketPartial<T> {
    pub tile: usize,
    pub bucket: usize,
    /// One entry per splat of the bucket: `dL/d(mean x, mean y, conic a, b, c, opacity, r, g, b)`.
    pub grads: Vec<[T; GRAD2D]>,
}

fn work_units<T: Real>(out: &RenderOutput<T>) -> Result<Vec<(usize, usize)>> {
    if !out.has_checkpoints {
        return Err(Error::MissingCheckpoints);
    }
    Ok(out.tiles.iter().enumerate().flat_map(|(t, td)| (0..td.n_buckets).map(move |b| (t, b))).collect())
}

/// One work unit: every pixel of the tile, restricted to one bucket of splats.
fn bucket_grads<T: Real>(out: &RenderOutput<T>, grad_image: &Image<T>, tile: usize, bucket: usize) -> Vec<Acc2D> {
    let td = &out.tiles[tile];
    let bsz = out.options.bucket_size;
    let start = bucket * bsz;
    let end = (start + bsz).min(td.splats.len());
    let mut local = vec![[0.0; GRAD2D]; end.saturating_sub(start)];
    let [x0, y0, tw, th] = td.rect;
    let npix = tw * th;
    let w = out.width();
    let bg = out.options.background;
    for ly in 0..th {
        for lx in 0..tw {
            let (x, y) = (x0 + lx, y0 + ly);
            let n = out.n_contrib[y * w + x] as usize;
            if n <= start {
                continue;
            }
            let g = grad_image.pixel(x, y);
            if g.iter().all(|v| *v == T::zero()) {
                continue;
            }
            let (px, py) = (T::lit(x as f64 + 0.5), T::lit(y as f64 + 0.5));
            let fin = out.final_states[y * w + x];
            let full = [0, 1, 2].map(|c| fin.rgb[c] + fin.t * bg[c]);
            let mut state = td.checkpoints[bucket * npix + ly * tw + lx];
            for k in start..end.min(n) {
                let p = &out.projected[td.splats[k] as usize];
                let Some(a) = splat_alpha(p, px, py, &out.options) else { continue };
                let t_i = state.t;
                blend(&mut state, &p.rgb, a.alpha);
                let one_minus = T::one() - a.alpha;
                let mut dl_dalpha = T::zero();
                if one_minus > T::zero() {
                    for c in 0..3 {
                        let behind = (full[c] - state.rgb[c]) / one_minus;
                        dl_dalpha += (t_i * p.rgb[c] - behind) * g[c];
                    }
                } else {
                    let rest = rest_behind(out, &td.splats, k, n, px, py);
                    for c in 0..3 {
                        dl_dalpha += t_i * (p.rgb[c] - rest[c]) * g[c];
                    }
                }
                add_into(&mut local[k - start], &pair_grads(p, &a, dl_dalpha, a.alpha * t_i, &g));
            }
        }
    }
    local
}

/// Per-bucket gradient sums of the splat-wise pass, in work-unit order.
pub fn splatwise_partials<T: Real>(out: &RenderOutput<T>, grad_image: &Image<T>) -> Result<Vec<BucketPartial<T>>> {
    out.image.check_shape(grad_image)?;
    let units = work_units(out)?;
    Ok(map_range(units.len(), |u| {
        let (tile, bucket) = units[u];
        let grads = bucket_grads(out, grad_image, tile, bucket).iter().map(|g| g.map(T::lit)).collect();
        BucketPartial { tile, bucket, grads }
    }))
}

/// Bucketed backward: each (tile, bucket) work unit replays its splats from
/// the bucket checkpoint and reduces their gradients locally.
pub fn backward_splatwise<T: Real>(
    out: &RenderOutput<T>,
    map: &GaussianMap<T>,
    camera: &Camera<T>,
    grad_image: &Image<T>,
) -> Result<ParamGrads<T>> {
    check_inputs(out, map, grad_image)?;
    let units = work_units(out)?;
    let npr = out.projected.len();
    let bsz = out.options.bucket_size;
    let grads2d = match out.options.reduction {
        Reduction::Deterministic => {
            let parts = map_range(units.len(), |u| bucket_grads(out, grad_image, units[u].0, units[u].1));
            let mut acc = vec![[0.0; GRAD2D]; npr];
            for (&(tile, bucket), part) in units.iter().zip(&parts) {
                let splats = &out.tiles[tile].splats[bucket * bsz..];
                for (g, &s) in part.iter().zip(splats) {
                    add_into(&mut acc[s as usize], g);
                }
            }
            acc
        }
        Reduction::Atomic => {
            let acc = AtomicAccumulator::zeros::<f64>(npr * GRAD2D);
            for_each_range(units.len(), |u| {
                let (tile, bucket) = units[u];
                let local = bucket_grads(out, grad_image, tile, bucket);
                let splats = &out.tiles[tile].splats[bucket * bsz..];
                for (g, &s) in local.iter().zip(splats) {
                    let base = s as usize * GRAD2D;
                    for (j, v) in g.iter().enumerate() {
                        acc.add(base + j, *v);
                    }
                }
            });
            unflatten(acc.into_values::<f64>())
        }
    };
    finish(out, map, camera, &grads2d)
}

fn unflatten(flat: Vec<f64>) -> Vec<Acc2D> {
    flat.chunks_exact(GRAD2D)
        .map(|c| {
            let mut a = [0.0; GRAD2D];
            a.copy_from_slice(c);
            a
        })
        .collect()
}

/// Chains the per-splat 2D gradients through projection.
fn finish<T: Real>(
    out: &RenderOutput<T>,
    map: &GaussianMap<T>,
    camera: &Camera<T>,
    grads2d: &[Acc2D],
) -> Result<ParamGrads<T>> {
    let prims = map.primitives();
    let degree = out.options.sh_degree;
    let camera64 = camera.cast::<f64>();
    let per_splat = map_range(out.projected.len(), |i| {
        let p = &out.projected[i];
        project_backward(&prims[p.primitive_index].cast::<f64>(), &camera64, &p.cast::<f64>(), &grads2d[i], degree)
            .map(|g| g.cast::<T>())
    });
    let mut result = ParamGrads::zeros(map.len());
    let half_w = T::lit(out.width() as f64 * 0.5);
    let half_h = T::lit(out.height() as f64 * 0.5);
    for (p, (g, g2)) in out.projected.iter().zip(per_splat.into_iter().zip(grads2d)) {
        let i = p.primitive_index;
        result.grads[i] = g?;
        let (gx, gy) = (T::lit(g2[0]) * half_w, T::lit(g2[1]) * half_h);
        result.mean2d_grad_norm[i] = (gx * gx + gy * gy).sqrt();
        result.contributed[i] = true;
    }
    if let Some((index, param)) = result.first_non_finite() {
        return Err(Error::NonFiniteGradient { index, param });
    }
    Ok(result)
}
