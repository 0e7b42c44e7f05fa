//! Dense 3-D grids with physical spacing.
//!
//! Storage is x-fastest: the voxel at `(x, y, z)` lives at
//! `x + nx * (y + ny * z)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Voxel counts per axis, ordered `(x, y, z)`.
pub type Shape = [usize; 3];

/// Millimetres per voxel along each axis.
pub type Spacing = [f64; 3];

/// Orientation block of a NIfTI header (`pixdim[0]`, qform/sform codes,
/// quaternion and affine rows), kept as raw little-endian bytes and never
/// interpreted.
pub const ORIENTATION_BYTES: usize = 80;

#[derive(Clone, PartialEq)]
pub struct Image<T> {
    shape: Shape,
    spacing: Spacing,
    data: Vec<T>,
    orientation: Option<Box<[u8; ORIENTATION_BYTES]>>,
}

/// Scalar intensity volume.
pub type Volume = Image<f32>;

/// Integer class-code volume.
pub type LabelMap = Image<u8>;

impl<T> std::fmt::Debug for Image<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("shape", &self.shape)
            .field("spacing", &self.spacing)
            .field("len", &self.data.len())
            .finish()
    }
}

pub fn voxel_count(shape: Shape) -> usize {
    shape[0] * shape[1] * shape[2]
}

fn check_geometry(shape: Shape, spacing: Spacing) -> Result<()> {
    if shape.iter().any(|&n| n == 0) {
        return Err(Error::Geometry(format!("shape {shape:?} has a zero axis")));
    }
    if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::Geometry(format!(
            "spacing {spacing:?} must be finite and positive"
        )));
    }
    Ok(())
}

impl<T: Copy> Image<T> {
    pub fn from_vec(shape: Shape, spacing: Spacing, data: Vec<T>) -> Result<Self> {
        check_geometry(shape, spacing)?;
        let expected = voxel_count(shape);
        if data.len() != expected {
            return Err(Error::Geometry(format!(
                "data length {} does not match shape {shape:?} ({expected} voxels)",
                data.len()
            )));
        }
        Ok(Image {
            shape,
            spacing,
            data,
            orientation: None,
        })
    }

    pub fn filled(shape: Shape, spacing: Spacing, value: T) -> Result<Self> {
        Self::from_vec(shape, spacing, vec![value; voxel_count(shape)])
    }

    /// Builds an image by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(shape: Shape, spacing: Spacing, mut f: impl FnMut(usize, usize, usize) -> T) -> Result<Self> {
        check_geometry(shape, spacing)?;
        let mut data = Vec::with_capacity(voxel_count(shape));
        for z in 0..shape[2] {
            for y in 0..shape[1] {
                for x in 0..shape[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::from_vec(shape, spacing, data)
    }

    /// Same geometry (and orientation block), different payload.
    pub fn with_data<U: Copy>(&self, data: Vec<U>) -> Result<Image<U>> {
        let mut out = Image::from_vec(self.shape, self.spacing, data)?;
        out.orientation = self.orientation.clone();
        Ok(out)
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Image<U> {
        Image {
            shape: self.shape,
            spacing: self.spacing,
            data: self.data.iter().map(|&v| f(v)).collect(),
            orientation: self.orientation.clone(),
        }
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.shape
    }

    #[inline]
    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.shape[0] * (y + self.shape[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.shape[0];
        let ny = self.shape[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    pub fn set_spacing(&mut self, spacing: Spacing) -> Result<()> {
        check_geometry(self.shape, spacing)?;
        self.spacing = spacing;
        Ok(())
    }

    pub fn orientation(&self) -> Option<&[u8; ORIENTATION_BYTES]> {
        self.orientation.as_deref()
    }

    pub fn set_orientation(&mut self, bytes: Option<[u8; ORIENTATION_BYTES]>) {
        self.orientation = bytes.map(Box::new);
    }

    pub fn same_geometry<U>(&self, other: &Image<U>) -> bool {
        self.shape == other.shape && self.spacing == other.spacing
    }
}

impl Volume {
    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite(i)),
            None => Ok(()),
        }
    }

    /// `(min, max)` of the payload; NaNs are ignored.
    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Mapping from class names to label codes. Code 0 is always background.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassMap(BTreeMap<String, u8>);

pub const WALL: &str = "wall";
pub const RIGHT_ATRIUM: &str = "right_atrium";
pub const LEFT_ATRIUM: &str = "left_atrium";

impl Default for ClassMap {
    /// wall = 1, right atrium = 2, left atrium = 3.
    fn default() -> Self {
        ClassMap(
            [(WALL, 1), (RIGHT_ATRIUM, 2), (LEFT_ATRIUM, 3)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        )
    }
}

impl ClassMap {
    pub fn new(entries: impl IntoIterator<Item = (String, u8)>) -> Result<Self> {
        let map: BTreeMap<String, u8> = entries.into_iter().collect();
        let cm = ClassMap(map);
        cm.validate()?;
        Ok(cm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::InvalidParam("class map is empty".into()));
        }
        let mut seen = [false; 256];
        for (name, &code) in &self.0 {
            if code == 0 {
                return Err(Error::InvalidParam(format!(
                    "class `{name}` uses code 0, reserved for background"
                )));
            }
            if std::mem::replace(&mut seen[code as usize], true) {
                return Err(Error::InvalidParam(format!("duplicate class code {code}")));
            }
        }
        Ok(())
    }

    pub fn code(&self, name: &str) -> Option<u8> {
        self.0.get(name).copied()
    }

    /// Classes in the fixed report order: wall, right atrium, left atrium,
    /// then any extra classes by name.
    pub fn ordered(&self) -> Vec<(&str, u8)> {
        let known = [WALL, RIGHT_ATRIUM, LEFT_ATRIUM];
        let mut out: Vec<(&str, u8)> = known
            .iter()
            .filter_map(|k| self.0.get_key_value(*k).map(|(n, &c)| (n.as_str(), c)))
            .collect();
        out.extend(
            self.0
                .iter()
                .filter(|(n, _)| !known.contains(&n.as_str()))
                .map(|(n, &c)| (n.as_str(), c)),
        );
        out
    }

    pub fn codes(&self) -> Vec<u8> {
        self.ordered().into_iter().map(|(_, c)| c).collect()
    }

    pub fn contains_code(&self, code: u8) -> bool {
        code == 0 || self.0.values().any(|&c| c == code)
    }

    /// Checks every voxel holds background or a declared code.
    pub fn check_labels(&self, labels: &LabelMap) -> Result<()> {
        let mut allowed = [false; 256];
        allowed[0] = true;
        for &c in self.0.values() {
            allowed[c as usize] = true;
        }
        match labels.data().iter().position(|&v| !allowed[v as usize]) {
            Some(index) => Err(Error::UnknownLabel {
                value: labels.data()[index],
                index,
            }),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_is_x_fastest() {
        let img = Image::from_fn([3, 4, 5], [1.0; 3], |x, y, z| (x + 10 * y + 100 * z) as u32).unwrap();
        assert_eq!(img.data()[1], 1);
        assert_eq!(img.data()[3], 10);
        assert_eq!(img.data()[12], 100);
        assert_eq!(img.get(2, 3, 4), 432);
        assert_eq!(img.coords(img.index(2, 3, 4)), [2, 3, 4]);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(Volume::from_vec([2, 2, 2], [1.0; 3], vec![0.0; 7]).is_err());
        assert!(Volume::filled([0, 2, 2], [1.0; 3], 0.0).is_err());
        assert!(Volume::filled([2, 2, 2], [1.0, -1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn default_class_map_order() {
        let cm = ClassMap::default();
        assert_eq!(
            cm.ordered(),
            vec![(WALL, 1), (RIGHT_ATRIUM, 2), (LEFT_ATRIUM, 3)]
        );
        let lm = LabelMap::from_vec([2, 1, 1], [1.0; 3], vec![3, 4]).unwrap();
        assert!(matches!(
            cm.check_labels(&lm),
            Err(Error::UnknownLabel { value: 4, index: 1 })
        ));
    }

    #[test]
    fn class_map_rejects_background_and_duplicates() {
        assert!(ClassMap::new([("a".to_string(), 0)]).is_err());
        assert!(ClassMap::new([("a".to_string(), 1), ("b".to_string(), 1)]).is_err());
    }
}
