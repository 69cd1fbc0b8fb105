use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::gaussian::GaussianMap;
use crate::image::Image;
use crate::parallel::map_range;
use crate::real::Real;

use super::project::{project_gaussian, Projected2D};
use super::{blend, splat_alpha, RasterOptions};

/// Transmittance and accumulated color of one pixel partway through blending.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelState<T> {
    pub t: T,
    pub rgb: [T; 3],
}

impl<T: Real> PixelState<T> {
    pub fn initial() -> Self {
        Self { t: T::one(), rgb: [T::zero(); 3] }
    }
}

/// Sorted splat list and checkpoints of one tile.
#[derive(Clone, Debug, PartialEq)]
pub struct TileData<T> {
    /// Indices into [`RenderOutput::projected`], front to back.
    pub splats: Vec<u32>,
    /// Pixel rectangle `[x0, y0, width, height]`.
    pub rect: [usize; 4],
    /// Buckets reached by at least one pixel of the tile.
    pub n_buckets: usize,
    /// Bucket-major: `checkpoints[b * pixels + local_pixel]` is the pixel
    /// state before splat `b * bucket_size`. Pixels that terminated earlier
    /// repeat their final state.
    pub(crate) checkpoints: Vec<PixelState<T>>,
}

#[derive(Clone, Debug)]
pub struct RenderOutput<T> {
    pub image: Image<T>,
    pub projected: Vec<Projected2D<T>>,
    pub tiles: Vec<TileData<T>>,
    /// Per-pixel state after the last processed splat, before background.
    pub final_states: Vec<PixelState<T>>,
    /// Number of entries of the tile list each pixel processed (including skipped ones).
    pub n_contrib: Vec<u32>,
    pub options: RasterOptions<T>,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub n_primitives: usize,
    pub has_checkpoints: bool,
}

/// Renders the map, recording everything the backward passes need.
pub fn rasterize_forward<T: Real>(
    map: &GaussianMap<T>,
    camera: &Camera<T>,
    opts: &RasterOptions<T>,
) -> Result<RenderOutput<T>> {
    opts.validate()?;
    camera.validate()?;
    let prims = map.primitives();
    let projected: Vec<Projected2D<T>> = map_range(prims.len(), |i| project_gaussian(i, &prims[i], camera, opts))
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    let (w, h) = (camera.width, camera.height);
    let ts = opts.tile_size;
    let tiles_x = w.div_ceil(ts);
    let tiles_y = h.div_ceil(ts);
    let n_tiles = tiles_x * tiles_y;

    struct TileOut<T> {
        data: TileData<T>,
        finals: Vec<PixelState<T>>,
        counts: Vec<u32>,
    }

    let outs: Vec<TileOut<T>> = map_range(n_tiles, |tile| {
        let (tx, ty) = (tile % tiles_x, tile / tiles_x);
        let mut splats: Vec<u32> = projected
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                let [x0, y0, x1, y1] = p.tile_rect;
                tx >= x0 && tx < x1 && ty >= y0 && ty < y1
            })
            .map(|(i, _)| i as u32)
            .collect();
        splats.sort_by(|&a, &b| {
            let (pa, pb) = (&projected[a as usize], &projected[b as usize]);
            pa.depth
                .partial_cmp(&pb.depth)
                .unwrap_or(Ordering::Equal)
                .then(pa.primitive_index.cmp(&pb.primitive_index))
        });

        let x0 = tx * ts;
        let y0 = ty * ts;
        let tw = ts.min(w - x0);
        let th = ts.min(h - y0);
        let npix = tw * th;
        let bsz = opts.bucket_size;
        let mut finals = Vec::with_capacity(npix);
        let mut counts = Vec::with_capacity(npix);
        let mut per_pixel: Vec<Vec<PixelState<T>>> = Vec::new();
        for ly in 0..th {
            for lx in 0..tw {
                let px = T::lit((x0 + lx) as f64 + 0.5);
                let py = T::lit((y0 + ly) as f64 + 0.5);
                let mut state = PixelState::initial();
                let mut ckpts = Vec::new();
                let mut n = 0usize;
                let mut until_ckpt = 0usize;
                for (k, &s) in splats.iter().enumerate() {
                    if opts.checkpoints {
                        if until_ckpt == 0 {
                            ckpts.push(state);
                            until_ckpt = bsz;
                        }
                        until_ckpt -= 1;
                    }
                    n = k + 1;
                    let p = &projected[s as usize];
                    if let Some(a) = splat_alpha(p, px, py, opts) {
                        blend(&mut state, &p.rgb, a.alpha);
                        if state.t < opts.t_min {
                            break;
                        }
                    }
                }
                finals.push(state);
                counts.push(n as u32);
                if opts.checkpoints {
                    per_pixel.push(ckpts);
                }
            }
        }

        let n_buckets = counts.iter().map(|&n| (n as usize).div_ceil(bsz)).max().unwrap_or(0);
        let mut checkpoints = Vec::new();
        if opts.checkpoints {
            checkpoints = vec![PixelState::initial(); n_buckets * npix];
            for b in 0..n_buckets {
                for (pix, ck) in per_pixel.iter().enumerate() {
                    checkpoints[b * npix + pix] = ck.get(b).copied().unwrap_or(finals[pix]);
                }
            }
        }
        TileOut { data: TileData { splats, rect: [x0, y0, tw, th], n_buckets, checkpoints }, finals, counts }
    });

    let mut image = Image::new(w, h);
    let mut final_states = vec![PixelState::initial(); w * h];
    let mut n_contrib = vec![0u32; w * h];
    let bg = opts.background;
    let mut tiles = Vec::with_capacity(n_tiles);
    for out in outs {
        let [x0, y0, tw, _] = out.data.rect;
        for (pix, (state, count)) in out.finals.iter().zip(&out.counts).enumerate() {
            let (x, y) = (x0 + pix % tw, y0 + pix / tw);
            let i = y * w + x;
            final_states[i] = *state;
            n_contrib[i] = *count;
            image.set_pixel(x, y, [0, 1, 2].map(|c| state.rgb[c] + state.t * bg[c]));
        }
        tiles.push(out.data);
    }

    Ok(RenderOutput {
        image,
        projected,
        tiles,
        final_states,
        n_contrib,
        options: *opts,
        tiles_x,
        tiles_y,
        n_primitives: map.len(),
        has_checkpoints: opts.checkpoints,
    })
}

impl<T: Real> RenderOutput<T> {
    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }

    pub fn final_transmittance(&self, x: usize, y: usize) -> T {
        self.final_states[y * self.width() + x].t
    }

    pub fn tile_index(&self, x: usize, y: usize) -> usize {
        let ts = self.options.tile_size;
        (y / ts) * self.tiles_x + x / ts
    }

    fn local_pixel(&self, x: usize, y: usize) -> (usize, usize) {
        let tile = self.tile_index(x, y);
        let [x0, y0, tw, _] = self.tiles[tile].rect;
        (tile, (y - y0) * tw + (x - x0))
    }

    /// State before splat `bucket * bucket_size` of the pixel's tile list.
    pub fn checkpoint(&self, x: usize, y: usize, bucket: usize) -> Result<PixelState<T>> {
        if !self.has_checkpoints {
            return Err(Error::MissingCheckpoints);
        }
        let (tile, pix) = self.local_pixel(x, y);
        let td = &self.tiles[tile];
        if bucket >= td.n_buckets {
            return Err(Error::IndexOutOfRange { index: bucket, len: td.n_buckets });
        }
        let [_, _, tw, th] = td.rect;
        Ok(td.checkpoints[bucket * tw * th + pix])
    }

    /// Re-blends a pixel from a stored checkpoint to its last processed splat.
    pub fn replay_pixel(&self, x: usize, y: usize, bucket: usize) -> Result<PixelState<T>> {
        let mut state = self.checkpoint(x, y, bucket)?;
        let tile = self.tile_index(x, y);
        let n = self.n_contrib[y * self.width() + x] as usize;
        let start = bucket * self.options.bucket_size;
        let (px, py) = (T::lit(x as f64 + 0.5), T::lit(y as f64 + 0.5));
        for &s in self.tiles[tile].splats.iter().take(n).skip(start) {
            let p = &self.projected[s as usize];
            if let Some(a) = splat_alpha(p, px, py, &self.options) {
                blend(&mut state, &p.rgb, a.alpha);
            }
        }
        Ok(state)
    }

    /// `(primitive index, alpha)` of every splat blended at a pixel, front to back.
    pub fn pixel_contributions(&self, x: usize, y: usize) -> Vec<(usize, T)> {
        let tile = self.tile_index(x, y);
        let n = self.n_contrib[y * self.width() + x] as usize;
        let (px, py) = (T::lit(x as f64 + 0.5), T::lit(y as f64 + 0.5));
        self.tiles[tile]
            .splats
            .iter()
            .take(n)
            .filter_map(|&s| {
                let p = &self.projected[s as usize];
                splat_alpha(p, px, py, &self.options).map(|a| (p.primitive_index, a.alpha))
            })
            .collect()
    }
}
