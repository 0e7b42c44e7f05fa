//! Grid bookkeeping for the coarse-to-fine pipeline: resolution
//! standardization, block downsampling, ROI boxes, window crops and the
//! inverse stitch back to a parent grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{Image, LabelMap, Shape, Volume};

/// Uniform grid every scan is padded/cropped to before segmentation.
pub const STANDARD_SHAPE: Shape = [576, 576, 48];
/// Integer pooling factors from the standard grid to the coarse grid.
pub const COARSE_FACTORS: [usize; 3] = [4, 4, 1];
/// Fine-stage crop size on the standard grid.
pub const FINE_WINDOW: Shape = [256, 256, 48];

/// Links a child grid to its parent: child voxel `c` sits at parent voxel
/// `c + offset`. Negative offsets mean the child starts in padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub parent_shape: Shape,
    pub offset: [i64; 3],
    pub window_shape: Shape,
}

impl Placement {
    pub fn validate(&self) -> Result<()> {
        if self.window_shape.contains(&0) {
            return Err(Error::Geometry(format!(
                "window_shape {:?} has a zero axis",
                self.window_shape
            )));
        }
        if self.parent_shape.contains(&0) {
            return Err(Error::Geometry(format!(
                "parent_shape {:?} has a zero axis",
                self.parent_shape
            )));
        }
        Ok(())
    }

    pub fn identity(shape: Shape) -> Self {
        Placement {
            parent_shape: shape,
            offset: [0; 3],
            window_shape: shape,
        }
    }

    /// Parent index of child voxel `c`, or `None` if it lies in padding.
    #[inline]
    pub fn to_parent(&self, c: [usize; 3]) -> Option<[usize; 3]> {
        let mut p = [0usize; 3];
        for k in 0..3 {
            let v = c[k] as i64 + self.offset[k];
            if v < 0 || v >= self.parent_shape[k] as i64 {
                return None;
            }
            p[k] = v as usize;
        }
        Some(p)
    }

    /// Child index of parent voxel `p`, or `None` if outside the window.
    #[inline]
    pub fn to_child(&self, p: [usize; 3]) -> Option<[usize; 3]> {
        let mut c = [0usize; 3];
        for k in 0..3 {
            let v = p[k] as i64 - self.offset[k];
            if v < 0 || v >= self.window_shape[k] as i64 {
                return None;
            }
            c[k] = v as usize;
        }
        Some(c)
    }

    /// Per-axis child range `[lo, hi)` that overlaps the parent.
    fn overlap(&self, k: usize) -> (usize, usize) {
        let lo = (-self.offset[k]).clamp(0, self.window_shape[k] as i64) as usize;
        let hi = (self.parent_shape[k] as i64 - self.offset[k]).clamp(lo as i64, self.window_shape[k] as i64) as usize;
        (lo, hi)
    }
}

/// Half-open voxel box `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl BBox {
    pub fn validate(&self, parent: Shape) -> Result<()> {
        for k in 0..3 {
            if !(self.lo[k] < self.hi[k] && self.hi[k] <= parent[k]) {
                return Err(Error::Geometry(format!(
                    "box {:?}..{:?} is empty or exceeds {parent:?}",
                    self.lo, self.hi
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|k| self.lo[k] <= p[k] && p[k] < self.hi[k])
    }

    pub fn size(&self) -> Shape {
        [
            self.hi[0] - self.lo[0],
            self.hi[1] - self.lo[1],
            self.hi[2] - self.lo[2],
        ]
    }

    /// Maps a box on a pooled grid to the voxels it covers on the fine grid.
    pub fn scale(&self, factors: [usize; 3]) -> BBox {
        BBox {
            lo: std::array::from_fn(|k| self.lo[k] * factors[k]),
            hi: std::array::from_fn(|k| self.hi[k] * factors[k]),
        }
    }

    /// Grows the box by `margin` voxels per side, clamped to `shape`.
    pub fn expand(&self, margin: usize, shape: Shape) -> BBox {
        BBox {
            lo: std::array::from_fn(|k| self.lo[k].saturating_sub(margin)),
            hi: std::array::from_fn(|k| (self.hi[k] + margin).min(shape[k])),
        }
    }

    /// Centre voxel, rounding half up.
    pub fn center(&self) -> [i64; 3] {
        std::array::from_fn(|k| ((self.lo[k] + self.hi[k]) / 2) as i64)
    }
}

/// Copies `placement.window_shape` voxels out of `img`, starting at
/// `placement.offset`; voxels outside the parent get `fill`.
pub fn extract<T: Copy>(img: &Image<T>, placement: &Placement, fill: T) -> Result<Image<T>> {
    placement.validate()?;
    if img.shape() != placement.parent_shape {
        return Err(Error::ShapeMismatch {
            context: "extract: image vs placement parent",
            left: img.shape(),
            right: placement.parent_shape,
        });
    }
    let w = placement.window_shape;
    let mut out = Image::filled(w, img.spacing(), fill)?;
    out.set_orientation(img.orientation().copied());
    let (x0, x1) = placement.overlap(0);
    let (y0, y1) = placement.overlap(1);
    let (z0, z1) = placement.overlap(2);
    if x0 >= x1 || y0 >= y1 || z0 >= z1 {
        return Ok(out);
    }
    let src = img.data();
    let shape = img.shape();
    let off = placement.offset;
    let dst = out.data_mut();
    for z in z0..z1 {
        let pz = (z as i64 + off[2]) as usize;
        for y in y0..y1 {
            let py = (y as i64 + off[1]) as usize;
            let px0 = (x0 as i64 + off[0]) as usize;
            let s = px0 + shape[0] * (py + shape[1] * pz);
            let d = x0 + w[0] * (y + w[1] * z);
            dst[d..d + (x1 - x0)].copy_from_slice(&src[s..s + (x1 - x0)]);
        }
    }
    Ok(out)
}

/// Inverse of [`extract`]: writes `child` into a parent-shaped grid filled
/// with `background`. Child voxels that fell in padding are dropped.
pub fn paste<T: Copy>(child: &Image<T>, placement: &Placement, background: T) -> Result<Image<T>> {
    placement.validate()?;
    if child.shape() != placement.window_shape {
        return Err(Error::ShapeMismatch {
            context: "stitch: child vs placement window",
            left: child.shape(),
            right: placement.window_shape,
        });
    }
    let parent = placement.parent_shape;
    let mut out = Image::filled(parent, child.spacing(), background)?;
    out.set_orientation(child.orientation().copied());
    let (x0, x1) = placement.overlap(0);
    let (y0, y1) = placement.overlap(1);
    let (z0, z1) = placement.overlap(2);
    if x0 >= x1 || y0 >= y1 || z0 >= z1 {
        return Ok(out);
    }
    let w = placement.window_shape;
    let off = placement.offset;
    let src = child.data();
    let dst = out.data_mut();
    for z in z0..z1 {
        let pz = (z as i64 + off[2]) as usize;
        for y in y0..y1 {
            let py = (y as i64 + off[1]) as usize;
            let px0 = (x0 as i64 + off[0]) as usize;
            let d = px0 + parent[0] * (py + parent[1] * pz);
            let s = x0 + w[0] * (y + w[1] * z);
            dst[d..d + (x1 - x0)].copy_from_slice(&src[s..s + (x1 - x0)]);
        }
    }
    Ok(out)
}

fn check_positive(shape: Shape, what: &str) -> Result<()> {
    if shape.contains(&0) {
        return Err(Error::Geometry(format!("{what} {shape:?} must be positive")));
    }
    Ok(())
}

/// Centre-aligned pad/crop to `target`. When an axis differs by an odd
/// count, the extra voxel is cropped (or padded) on the high side.
pub fn standardize<T: Copy>(img: &Image<T>, target: Shape, fill: T) -> Result<(Image<T>, Placement)> {
    check_positive(target, "target shape")?;
    let shape = img.shape();
    let offset = std::array::from_fn(|k| {
        let diff = shape[k] as i64 - target[k] as i64;
        // truncation puts the odd voxel on the high side for crop and pad
        diff / 2
    });
    let placement = Placement {
        parent_shape: shape,
        offset,
        window_shape: target,
    };
    Ok((extract(img, &placement, fill)?, placement))
}

/// Mean pooling over non-overlapping `factors` blocks; spacing scales by
/// the same factors.
pub fn downsample_mean(v: &Volume, factors: [usize; 3]) -> Result<Volume> {
    let (out_shape, spacing) = pooled_geometry(v.shape(), v.spacing(), factors)?;
    let [fx, fy, fz] = factors;
    let block = (fx * fy * fz) as f64;
    let mut out = Vec::with_capacity(out_shape[0] * out_shape[1] * out_shape[2]);
    let src = v.data();
    let [nx, ny, _] = v.shape();
    for oz in 0..out_shape[2] {
        for oy in 0..out_shape[1] {
            for ox in 0..out_shape[0] {
                let mut sum = 0f64;
                for z in oz * fz..(oz + 1) * fz {
                    for y in oy * fy..(oy + 1) * fy {
                        let row = nx * (y + ny * z);
                        for x in ox * fx..(ox + 1) * fx {
                            sum += src[row + x] as f64;
                        }
                    }
                }
                out.push((sum / block) as f32);
            }
        }
    }
    let mut out = Volume::from_vec(out_shape, spacing, out)?;
    out.set_orientation(v.orientation().copied());
    Ok(out)
}

/// Max pooling of a binary view of a label map: an output voxel is 1 when
/// any voxel of its block is `positive`.
pub fn downsample_any(m: &LabelMap, factors: [usize; 3], positive: impl Fn(u8) -> bool) -> Result<LabelMap> {
    let (out_shape, spacing) = pooled_geometry(m.shape(), m.spacing(), factors)?;
    let mut out = LabelMap::filled(out_shape, spacing, 0)?;
    for (i, &v) in m.data().iter().enumerate() {
        if positive(v) {
            let [x, y, z] = m.coords(i);
            out.set(x / factors[0], y / factors[1], z / factors[2], 1);
        }
    }
    Ok(out)
}

fn pooled_geometry(shape: Shape, spacing: [f64; 3], factors: [usize; 3]) -> Result<(Shape, [f64; 3])> {
    check_positive(factors, "downsample factors")?;
    if (0..3).any(|k| shape[k] % factors[k] != 0) {
        return Err(Error::Geometry(format!(
            "shape {shape:?} is not divisible by factors {factors:?}"
        )));
    }
    Ok((
        std::array::from_fn(|k| shape[k] / factors[k]),
        std::array::from_fn(|k| spacing[k] * factors[k] as f64),
    ))
}

/// Tight bounds of voxels whose class is in `positive_classes`.
pub fn bbox_from_mask(m: &LabelMap, positive_classes: &[u8]) -> Result<BBox> {
    let mut is_pos = [false; 256];
    for &c in positive_classes {
        is_pos[c as usize] = true;
    }
    let [nx, ny, nz] = m.shape();
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let data = m.data();
    for z in 0..nz {
        for y in 0..ny {
            let row = nx * (y + ny * z);
            let line = &data[row..row + nx];
            let first = line.iter().position(|&v| is_pos[v as usize]);
            if let Some(x0) = first {
                let x1 = line.iter().rposition(|&v| is_pos[v as usize]).unwrap();
                lo[0] = lo[0].min(x0);
                hi[0] = hi[0].max(x1 + 1);
                lo[1] = lo[1].min(y);
                hi[1] = hi[1].max(y + 1);
                lo[2] = lo[2].min(z);
                hi[2] = hi[2].max(z + 1);
            }
        }
    }
    if lo[0] == usize::MAX {
        return Err(Error::NoForeground);
    }
    Ok(BBox { lo, hi })
}

/// Placement of a `window`-shaped crop centred on `center` (the window
/// starts at `center - window / 2`). Axes where the window fits are shifted
/// minimally to stay inside the parent; larger windows are padded
/// symmetrically.
pub fn window_placement(parent: Shape, center: [i64; 3], window: Shape) -> Result<Placement> {
    check_positive(window, "window")?;
    let offset = std::array::from_fn(|k| {
        let (n, w) = (parent[k] as i64, window[k] as i64);
        if w <= n {
            (center[k] - w / 2).clamp(0, n - w)
        } else {
            (n - w) / 2
        }
    });
    Ok(Placement {
        parent_shape: parent,
        offset,
        window_shape: window,
    })
}

pub fn crop_window<T: Copy>(img: &Image<T>, center: [i64; 3], window: Shape, fill: T) -> Result<(Image<T>, Placement)> {
    let placement = window_placement(img.shape(), center, window)?;
    Ok((extract(img, &placement, fill)?, placement))
}

/// Writes a child label map back into its parent grid, background 0.
pub fn stitch(child: &LabelMap, placement: &Placement) -> Result<LabelMap> {
    paste(child, placement, 0)
}
