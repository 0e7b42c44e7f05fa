//! Synthetic two-atrium phantoms with exact ground truth.
//!
//! Each atrium cavity is an axis-aligned ellipsoid. The wall is every
//! non-cavity voxel whose centre lies within `wall_thickness_mm` of a cavity
//! voxel centre. Voxel `i` sits at `i * spacing` millimetres.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ClassMap, LabelMap, Shape, Spacing, Volume, LEFT_ATRIUM, RIGHT_ATRIUM, WALL};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipsoid {
    pub center_mm: [f64; 3],
    pub radii_mm: [f64; 3],
}

impl Ellipsoid {
    #[inline]
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3)
            .map(|k| {
                let t = (p[k] - self.center_mm[k]) / self.radii_mm[k];
                t * t
            })
            .sum::<f64>()
            <= 1.0
    }

    pub fn volume_mm3(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.radii_mm.iter().product::<f64>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Levels {
    pub background: f64,
    pub wall: f64,
    pub cavity: f64,
}

impl Default for Levels {
    fn default() -> Self {
        Levels {
            background: 0.1,
            wall: 0.5,
            cavity: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub shape: Shape,
    pub spacing: Spacing,
    pub left_atrium: Ellipsoid,
    pub right_atrium: Ellipsoid,
    pub wall_thickness_mm: f64,
    #[serde(default)]
    pub levels: Levels,
    /// Half-width of the uniform noise added to every voxel.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub class_map: ClassMap,
}

impl PhantomSpec {
    /// Full-size scan geometry (640 x 640 x 44 at 0.625 x 0.625 x 2.5 mm)
    /// with both atria inside one 256 x 256 fine window.
    pub fn challenge_like(seed: u64) -> Self {
        PhantomSpec {
            shape: [640, 640, 44],
            spacing: [0.625, 0.625, 2.5],
            left_atrium: Ellipsoid {
                center_mm: [215.0, 190.0, 55.0],
                radii_mm: [22.0, 18.0, 14.0],
            },
            right_atrium: Ellipsoid {
                center_mm: [160.0, 215.0, 55.0],
                radii_mm: [18.0, 16.0, 14.0],
            },
            wall_thickness_mm: 3.0,
            levels: Levels::default(),
            noise: 0.0,
            seed,
            class_map: ClassMap::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        Volume::filled([1, 1, 1], self.spacing, 0.0)?;
        if self.shape.contains(&0) {
            return Err(Error::InvalidParam(format!("shape {:?} has a zero axis", self.shape)));
        }
        let max_spacing = self.spacing.iter().copied().fold(0.0, f64::max);
        if !(self.wall_thickness_mm >= max_spacing) {
            return Err(Error::InvalidParam(format!(
                "wall thickness {} mm is thinner than the largest voxel spacing {max_spacing} mm",
                self.wall_thickness_mm
            )));
        }
        for (name, e) in [("left_atrium", &self.left_atrium), ("right_atrium", &self.right_atrium)] {
            for k in 0..3 {
                if !(e.radii_mm[k] > 0.0) {
                    return Err(Error::InvalidParam(format!("{name} radius {k} must be positive")));
                }
                let reach = e.radii_mm[k] + self.wall_thickness_mm;
                let extent = (self.shape[k] - 1) as f64 * self.spacing[k];
                if e.center_mm[k] - reach < 0.0 || e.center_mm[k] + reach > extent {
                    return Err(Error::InvalidParam(format!(
                        "{name} plus wall does not fit inside the volume along axis {k}"
                    )));
                }
            }
        }
        let mut levels = [self.levels.background, self.levels.wall, self.levels.cavity];
        levels.sort_by(f64::total_cmp);
        let gap = (levels[1] - levels[0]).min(levels[2] - levels[1]);
        if !(self.noise >= 0.0 && 2.0 * self.noise < gap) {
            return Err(Error::InvalidParam(format!(
                "noise {} must be non-negative and below half the smallest level gap {gap}",
                self.noise
            )));
        }
        self.class_map.validate()?;
        for name in [WALL, RIGHT_ATRIUM, LEFT_ATRIUM] {
            if self.class_map.code(name).is_none() {
                return Err(Error::InvalidParam(format!("class map lacks `{name}`")));
            }
        }
        Ok(())
    }
}

fn position(spacing: Spacing, x: usize, y: usize, z: usize) -> [f64; 3] {
    [x as f64 * spacing[0], y as f64 * spacing[1], z as f64 * spacing[2]]
}

/// Returns `(image, ground_truth)`.
pub fn generate(spec: &PhantomSpec) -> Result<(Volume, LabelMap)> {
    spec.validate()?;
    let code = |n: &str| spec.class_map.code(n).unwrap();
    let (wall, ra, la) = (code(WALL), code(RIGHT_ATRIUM), code(LEFT_ATRIUM));
    let [nx, ny, nz] = spec.shape;
    let s = spec.spacing;
    let mut gt = LabelMap::filled(spec.shape, s, 0)?;

    // cavities
    for (e, class) in [(&spec.left_atrium, la), (&spec.right_atrium, ra)] {
        let range = |k: usize| {
            let lo = ((e.center_mm[k] - e.radii_mm[k]) / s[k]).floor().max(0.0) as usize;
            let hi = (((e.center_mm[k] + e.radii_mm[k]) / s[k]).ceil() as usize).min(spec.shape[k] - 1);
            lo..=hi
        };
        for z in range(2) {
            for y in range(1) {
                for x in range(0) {
                    if e.contains(position(s, x, y, z)) {
                        let i = gt.index(x, y, z);
                        if gt.data()[i] != 0 {
                            return Err(Error::InvalidParam(format!(
                                "atrium cavities overlap at voxel ({x}, {y}, {z})"
                            )));
                        }
                        gt.data_mut()[i] = class;
                    }
                }
            }
        }
    }

    // wall shell: dilate each cavity surface voxel by a ball of the wall
    // thickness
    let t = spec.wall_thickness_mm;
    let reach: [i64; 3] = std::array::from_fn(|k| (t / s[k]).floor() as i64);
    let mut ball = Vec::new();
    for dz in -reach[2]..=reach[2] {
        for dy in -reach[1]..=reach[1] {
            for dx in -reach[0]..=reach[0] {
                let d2 = (dx as f64 * s[0]).powi(2) + (dy as f64 * s[1]).powi(2) + (dz as f64 * s[2]).powi(2);
                if d2 <= t * t && (dx, dy, dz) != (0, 0, 0) {
                    ball.push([dx, dy, dz]);
                }
            }
        }
    }
    let is_cavity = |v: u8| v == la || v == ra;
    let surface: Vec<(usize, u8)> = (0..gt.len())
        .filter(|&i| is_cavity(gt.data()[i]))
        .filter(|&i| {
            let [x, y, z] = gt.coords(i);
            let c = gt.data()[i];
            let neighbour_differs = |x: usize, y: usize, z: usize| gt.get(x, y, z) != c;
            neighbour_differs(x - 1, y, z)
                || neighbour_differs(x + 1, y, z)
                || neighbour_differs(x, y - 1, z)
                || neighbour_differs(x, y + 1, z)
                || neighbour_differs(x, y, z - 1)
                || neighbour_differs(x, y, z + 1)
        })
        .map(|i| (i, gt.data()[i]))
        .collect();
    for &(i, class) in &surface {
        let [x, y, z] = gt.coords(i);
        for [x2, y2, z2] in [[x - 1, y, z], [x + 1, y, z], [x, y - 1, z], [x, y + 1, z], [x, y, z - 1], [x, y, z + 1]] {
            let other = gt.get(x2, y2, z2);
            if is_cavity(other) && other != class {
                return Err(Error::InvalidParam(format!(
                    "atrium cavities touch at voxel ({x}, {y}, {z}); no room for a wall"
                )));
            }
        }
        for d in &ball {
            let p = [x as i64 + d[0], y as i64 + d[1], z as i64 + d[2]];
            if (0..3).any(|k| p[k] < 0 || p[k] >= spec.shape[k] as i64) {
                continue;
            }
            let j = gt.index(p[0] as usize, p[1] as usize, p[2] as usize);
            if gt.data()[j] == 0 {
                gt.data_mut()[j] = wall;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lv = spec.levels;
    let mut data = Vec::with_capacity(gt.len());
    for &c in gt.data() {
        let base = if c == 0 {
            lv.background
        } else if c == wall {
            lv.wall
        } else {
            lv.cavity
        };
        let noise = if spec.noise > 0.0 {
            rng.random_range(-spec.noise..=spec.noise)
        } else {
            0.0
        };
        data.push((base + noise) as f32);
    }
    debug_assert_eq!(data.len(), nx * ny * nz);
    let image = gt.with_data(data)?;
    Ok((image, gt))
}
