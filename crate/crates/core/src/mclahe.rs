//! Multidimensional contrast-limited adaptive histogram equalization.
//!
//! The volume is min-max normalized to `[0, 1]`, replicate-padded on the
//! high side of each axis to a multiple of the kernel, and split into
//! tiles. Every tile gets a clipped histogram and a lookup table built from
//! its cumulative sum. A voxel's output blends the tables of the 2x2x2
//! surrounding tile centres with trilinear weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Shape, Volume};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MclaheParams {
    /// Tile shape in voxels. `None` means `max(1, dim / 8)` per axis.
    #[serde(default)]
    pub kernel_size: Option<[usize; 3]>,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    #[serde(default = "default_clip")]
    pub clip_limit: f64,
}

fn default_bins() -> usize {
    128
}

fn default_clip() -> f64 {
    0.01
}

impl Default for MclaheParams {
    fn default() -> Self {
        MclaheParams {
            kernel_size: None,
            n_bins: default_bins(),
            clip_limit: default_clip(),
        }
    }
}

impl MclaheParams {
    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.kernel_size {
            if k.contains(&0) {
                return Err(Error::InvalidParam(format!("kernel_size {k:?} must be >= 1")));
            }
        }
        if self.n_bins < 2 || self.n_bins > u16::MAX as usize + 1 {
            return Err(Error::InvalidParam(format!("n_bins {} out of range", self.n_bins)));
        }
        if !(self.clip_limit > 0.0 && self.clip_limit <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "clip_limit {} must lie in (0, 1]",
                self.clip_limit
            )));
        }
        Ok(())
    }

    pub fn kernel_for(&self, shape: Shape) -> [usize; 3] {
        self.kernel_size
            .unwrap_or_else(|| std::array::from_fn(|k| (shape[k] / 8).max(1)))
    }
}

/// Lookup table from histogram bin to equalized intensity.
#[derive(Clone, Debug, PartialEq)]
pub struct TileMapping(Vec<f64>);

impl TileMapping {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_monotone(&self) -> bool {
        self.0.windows(2).all(|w| w[0] <= w[1])
            && self.0.first().is_some_and(|&v| v >= 0.0)
            && self.0.last().is_some_and(|&v| v <= 1.0)
    }
}

/// Bin of a normalized value; the top edge belongs to the last bin.
#[inline]
pub fn bin_index(x: f64, n_bins: usize) -> usize {
    ((x * n_bins as f64).floor().max(0.0) as usize).min(n_bins - 1)
}

/// Caps every bin at `max(1, round(clip_limit * tile_voxels))` and hands the
/// excess back evenly, the remainder one count each to the lowest bins. A
/// single pass, so bins may end above the cap.
pub fn clip_redistribute(hist: &[u64], tile_voxels: u64, clip_limit: f64) -> Vec<u64> {
    let limit = ((clip_limit * tile_voxels as f64).round() as u64).max(1);
    let n = hist.len() as u64;
    let mut excess = 0u64;
    let mut out: Vec<u64> = hist
        .iter()
        .map(|&h| {
            if h > limit {
                excess += h - limit;
                limit
            } else {
                h
            }
        })
        .collect();
    if excess > 0 && n > 0 {
        let share = excess / n;
        let rem = (excess % n) as usize;
        for (b, v) in out.iter_mut().enumerate() {
            *v += share + u64::from(b < rem);
        }
    }
    out
}

pub fn mapping_from_hist(hist: &[u64]) -> Result<TileMapping> {
    let total: u64 = hist.iter().sum();
    if hist.is_empty() || total == 0 {
        return Err(Error::InvalidParam("empty histogram".into()));
    }
    let n = hist.len();
    let mut cdf = Vec::with_capacity(n);
    let mut acc = 0u64;
    for &h in hist {
        acc += h;
        cdf.push(acc);
    }
    let cdf_min = *cdf.iter().find(|&&c| c > 0).unwrap();
    let denom = total - cdf_min;
    let table = if denom == 0 {
        (0..n).map(|b| b as f64 / (n - 1).max(1) as f64).collect()
    } else {
        cdf.iter()
            .map(|&c| c.saturating_sub(cdf_min) as f64 / denom as f64)
            .collect()
    };
    Ok(TileMapping(table))
}

/// Normalized bin of every voxel, x-fastest.
fn voxel_bins(v: &Volume, n_bins: usize) -> Vec<u16> {
    let (lo, hi) = v.min_max();
    let (lo, hi) = (lo as f64, hi as f64);
    let range = hi - lo;
    v.data()
        .par_iter()
        .map(|&x| {
            let t = if range > 0.0 { (x as f64 - lo) / range } else { 0.0 };
            bin_index(t, n_bins) as u16
        })
        .collect()
}

/// Per-tile lookup tables on the padded tile lattice.
#[derive(Clone, Debug)]
pub struct TileGrid {
    pub kernel: [usize; 3],
    pub tiles: [usize; 3],
    pub mappings: Vec<TileMapping>,
}

impl TileGrid {
    #[inline]
    fn tile(&self, t: [usize; 3]) -> &TileMapping {
        &self.mappings[t[0] + self.tiles[0] * (t[1] + self.tiles[1] * t[2])]
    }
}

fn build_tiles(shape: Shape, bins: &[u16], p: &MclaheParams) -> Result<TileGrid> {
    let kernel = p.kernel_for(shape);
    let tiles: [usize; 3] = std::array::from_fn(|k| shape[k].div_ceil(kernel[k]));
    let tile_voxels = (kernel[0] * kernel[1] * kernel[2]) as u64;
    let count = tiles[0] * tiles[1] * tiles[2];
    let [nx, ny, _] = shape;

    let mappings = (0..count)
        .into_par_iter()
        .map(|t| {
            let tx = t % tiles[0];
            let ty = (t / tiles[0]) % tiles[1];
            let tz = t / (tiles[0] * tiles[1]);
            let mut hist = vec![0u64; p.n_bins];
            for pz in tz * kernel[2]..(tz + 1) * kernel[2] {
                let z = pz.min(shape[2] - 1);
                for py in ty * kernel[1]..(ty + 1) * kernel[1] {
                    let y = py.min(shape[1] - 1);
                    let row = nx * (y + ny * z);
                    for px in tx * kernel[0]..(tx + 1) * kernel[0] {
                        let x = px.min(nx - 1);
                        hist[bins[row + x] as usize] += 1;
                    }
                }
            }
            let clipped = clip_redistribute(&hist, tile_voxels, p.clip_limit);
            mapping_from_hist(&clipped)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(TileGrid {
        kernel,
        tiles,
        mappings,
    })
}

/// Builds the tile lookup tables without applying them.
pub fn tile_mappings(v: &Volume, p: &MclaheParams) -> Result<TileGrid> {
    p.validate()?;
    v.check_finite()?;
    let bins = voxel_bins(v, p.n_bins);
    build_tiles(v.shape(), &bins, p)
}

/// Lower tile, upper tile and upper weight for each index along one axis.
fn axis_weights(n: usize, kernel: usize, tiles: usize) -> Vec<(usize, usize, f64)> {
    (0..n)
        .map(|i| {
            let u = (i as f64 + 0.5) / kernel as f64 - 0.5;
            let j0 = (u.floor().max(0.0) as usize).min(tiles - 1);
            let j1 = (j0 + 1).min(tiles - 1);
            let w = (u - j0 as f64).clamp(0.0, 1.0);
            (j0, j1, if j0 == j1 { 0.0 } else { w })
        })
        .collect()
}

/// Enhances `v`; the output lies in `[0, 1]` with the input geometry.
pub fn mclahe(v: &Volume, p: &MclaheParams) -> Result<Volume> {
    p.validate()?;
    v.check_finite()?;
    let shape = v.shape();
    let bins = voxel_bins(v, p.n_bins);
    let grid = build_tiles(shape, &bins, p)?;

    let wx = axis_weights(shape[0], grid.kernel[0], grid.tiles[0]);
    let wy = axis_weights(shape[1], grid.kernel[1], grid.tiles[1]);
    let wz = axis_weights(shape[2], grid.kernel[2], grid.tiles[2]);
    let slice = shape[0] * shape[1];

    let mut out = vec![0f32; v.len()];
    out.par_chunks_mut(slice)
        .zip(bins.par_chunks(slice))
        .enumerate()
        .for_each(|(z, (dst, src))| {
            let (z0, z1, fz) = wz[z];
            for y in 0..shape[1] {
                let (y0, y1, fy) = wy[y];
                for x in 0..shape[0] {
                    let (x0, x1, fx) = wx[x];
                    let b = src[x + shape[0] * y] as usize;
                    let m = |tx, ty, tz| grid.tile([tx, ty, tz]).0[b];
                    let c00 = m(x0, y0, z0) * (1.0 - fx) + m(x1, y0, z0) * fx;
                    let c10 = m(x0, y1, z0) * (1.0 - fx) + m(x1, y1, z0) * fx;
                    let c01 = m(x0, y0, z1) * (1.0 - fx) + m(x1, y0, z1) * fx;
                    let c11 = m(x0, y1, z1) * (1.0 - fx) + m(x1, y1, z1) * fx;
                    let c0 = c00 * (1.0 - fy) + c10 * fy;
                    let c1 = c01 * (1.0 - fy) + c11 * fy;
                    dst[x + shape[0] * y] = (c0 * (1.0 - fz) + c1 * fz).clamp(0.0, 1.0) as f32;
                }
            }
        });
    v.with_data(out)
}
