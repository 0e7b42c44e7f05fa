//! Overlap and boundary-distance metrics between two label maps.
//!
//! Dice is counted over full regions. HD95 and the Hausdorff distance pool
//! the nearest-neighbour distances in both directions between the two
//! boundary surfaces (or, in [`PointMode::Region`], between all class
//! voxels). Distances are in millimetres: voxel `i` sits at `i * spacing`.

mod nearest;
pub mod report;

pub use nearest::{directed_distances, PointIndex};
pub use report::{MetricReport, MetricRow, SummaryRow};

use crate::error::{Error, Result};
use crate::image::{ClassMap, LabelMap};

/// A point in millimetres.
pub type Point = [f64; 3];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

/// Why a score fell back to a convention instead of being measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmptyFlag {
    /// Class absent from both maps.
    BothEmpty,
    /// Class present in exactly one map.
    OneEmpty,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiceScore {
    pub value: f64,
    /// Set when the class is absent in both maps (value is then 1.0).
    pub empty: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Distance {
    /// Millimetres; 0 when both sets are empty, infinite when one is.
    pub mm: f64,
    pub flag: Option<EmptyFlag>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PointMode {
    /// Class voxels with at least one face neighbour outside the class.
    #[default]
    Surface,
    /// Every class voxel.
    Region,
}

fn check_same_shape(pred: &LabelMap, gt: &LabelMap) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch {
            context: "prediction vs ground truth",
            left: pred.shape(),
            right: gt.shape(),
        });
    }
    Ok(())
}

pub fn confusion_counts(pred: &LabelMap, gt: &LabelMap, class: u8) -> Result<ConfusionCounts> {
    check_same_shape(pred, gt)?;
    let mut c = ConfusionCounts::default();
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        match (p == class, g == class) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

pub fn dice(c: ConfusionCounts) -> DiceScore {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        DiceScore { value: 1.0, empty: true }
    } else {
        DiceScore {
            value: (2 * c.tp) as f64 / denom as f64,
            empty: false,
        }
    }
}

fn voxel_point(m: &LabelMap, x: usize, y: usize, z: usize) -> Point {
    let s = m.spacing();
    [x as f64 * s[0], y as f64 * s[1], z as f64 * s[2]]
}

/// Centres of `class` voxels that touch a non-class voxel (or the volume
/// border) through one of their six faces.
pub fn surface_points(m: &LabelMap, class: u8) -> Vec<Point> {
    let [nx, ny, nz] = m.shape();
    let d = m.data();
    let mut out = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = m.index(x, y, z);
                if d[i] != class {
                    continue;
                }
                let boundary = x == 0
                    || x + 1 == nx
                    || y == 0
                    || y + 1 == ny
                    || z == 0
                    || z + 1 == nz
                    || d[i - 1] != class
                    || d[i + 1] != class
                    || d[i - nx] != class
                    || d[i + nx] != class
                    || d[i - nx * ny] != class
                    || d[i + nx * ny] != class;
                if boundary {
                    out.push(voxel_point(m, x, y, z));
                }
            }
        }
    }
    out
}

pub fn region_points(m: &LabelMap, class: u8) -> Vec<Point> {
    m.data()
        .iter()
        .enumerate()
        .filter(|(_, &v)| v == class)
        .map(|(i, _)| {
            let [x, y, z] = m.coords(i);
            voxel_point(m, x, y, z)
        })
        .collect()
}

pub fn class_points(m: &LabelMap, class: u8, mode: PointMode) -> Vec<Point> {
    match mode {
        PointMode::Surface => surface_points(m, class),
        PointMode::Region => region_points(m, class),
    }
}

fn empty_rule(a: &[Point], b: &[Point]) -> Option<Distance> {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => Some(Distance {
            mm: 0.0,
            flag: Some(EmptyFlag::BothEmpty),
        }),
        (true, false) | (false, true) => Some(Distance {
            mm: f64::INFINITY,
            flag: Some(EmptyFlag::OneEmpty),
        }),
        (false, false) => None,
    }
}

/// `{d(a, B)} ∪ {d(b, A)}`, in that order.
pub fn pooled_distances(a: &[Point], b: &[Point]) -> Vec<f64> {
    let mut d = directed_distances(a, b);
    d.extend(directed_distances(b, a));
    d
}

/// Nearest-rank percentile: sorted element at `ceil(q/100 * n) - 1`.
pub fn nearest_rank(values: &mut [f64], q: u32) -> f64 {
    assert!(!values.is_empty() && q <= 100);
    let n = values.len();
    let rank = (q as usize * n).div_ceil(100).max(1);
    let (_, v, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *v
}

/// 95th percentile of the pooled two-way nearest distances.
pub fn hd95(a: &[Point], b: &[Point]) -> Distance {
    if let Some(d) = empty_rule(a, b) {
        return d;
    }
    let mut d = pooled_distances(a, b);
    Distance {
        mm: nearest_rank(&mut d, 95),
        flag: None,
    }
}

/// Symmetric Hausdorff distance: the largest pooled nearest distance.
pub fn hausdorff(a: &[Point], b: &[Point]) -> Distance {
    if let Some(d) = empty_rule(a, b) {
        return d;
    }
    let d = pooled_distances(a, b);
    Distance {
        mm: d.into_iter().fold(0.0, f64::max),
        flag: None,
    }
}

/// One row per class in `classes` (report order), with Dice, HD95 and HD.
pub fn evaluate_case(
    case_id: &str,
    pred: &LabelMap,
    gt: &LabelMap,
    classes: &ClassMap,
    mode: PointMode,
) -> Result<MetricReport> {
    check_same_shape(pred, gt)?;
    if pred.spacing() != gt.spacing() {
        return Err(Error::SpacingMismatch {
            left: pred.spacing(),
            right: gt.spacing(),
        });
    }
    let rows = classes
        .ordered()
        .into_iter()
        .map(|(name, code)| {
            let score = dice(confusion_counts(pred, gt, code)?);
            let a = class_points(pred, code, mode);
            let b = class_points(gt, code, mode);
            let h95 = hd95(&a, &b);
            let hd = hausdorff(&a, &b);
            Ok(MetricRow {
                case_id: case_id.to_string(),
                class_name: name.to_string(),
                dice: score.value,
                hd95_mm: h95.mm,
                hd_mm: hd.mm,
                flag: h95.flag,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(shape: [usize; 3], on: &[[usize; 3]], class: u8) -> LabelMap {
        let mut m = LabelMap::filled(shape, [1.0; 3], 0).unwrap();
        for p in on {
            m.set(p[0], p[1], p[2], class);
        }
        m
    }

    #[test]
    fn confusion_examples() {
        let m = map([3, 3, 3], &[[1, 1, 1], [0, 2, 1]], 2);
        assert_eq!(
            confusion_counts(&m, &m, 2).unwrap(),
            ConfusionCounts { tp: 2, fp: 0, fn_: 0 }
        );
        let pred = LabelMap::filled([2, 2, 2], [1.0; 3], 1).unwrap();
        let gt = LabelMap::filled([2, 2, 2], [1.0; 3], 0).unwrap();
        assert_eq!(
            confusion_counts(&pred, &gt, 1).unwrap(),
            ConfusionCounts { tp: 0, fp: 8, fn_: 0 }
        );
        let other = LabelMap::filled([2, 2, 3], [1.0; 3], 0).unwrap();
        assert!(confusion_counts(&pred, &other, 1).is_err());
    }

    #[test]
    fn dice_examples() {
        let d = dice(ConfusionCounts { tp: 2, fp: 1, fn_: 1 });
        assert!((d.value - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(dice(ConfusionCounts { tp: 5, fp: 0, fn_: 0 }).value, 1.0);
        assert_eq!(dice(ConfusionCounts { tp: 0, fp: 3, fn_: 2 }).value, 0.0);
        let e = dice(ConfusionCounts::default());
        assert_eq!((e.value, e.empty), (1.0, true));
    }

    #[test]
    fn surface_of_solid_block() {
        let mut m = LabelMap::filled([5, 5, 5], [1.0; 3], 0).unwrap();
        for z in 1..4 {
            for y in 1..4 {
                for x in 1..4 {
                    m.set(x, y, z, 1);
                }
            }
        }
        let s = surface_points(&m, 1);
        assert_eq!(s.len(), 26);
        assert!(!s.contains(&[2.0, 2.0, 2.0]));
        assert!(surface_points(&m, 2).is_empty());
        assert_eq!(region_points(&m, 1).len(), 27);
    }

    #[test]
    fn border_counts_as_outside() {
        let m = LabelMap::filled([3, 3, 3], [2.0, 1.0, 1.0], 1).unwrap();
        assert_eq!(surface_points(&m, 1).len(), 26);
        let single = map([3, 3, 3], &[[1, 2, 0]], 4);
        assert_eq!(surface_points(&single, 4), vec![[1.0, 2.0, 0.0]]);
    }

    #[test]
    fn distance_examples() {
        let a = [[0.0, 0.0, 0.0]];
        let b = [[3.0, 4.0, 0.0]];
        assert_eq!(hd95(&a, &b).mm, 5.0);
        assert_eq!(hd95(&a, &a).mm, 0.0);
        let a2 = [[0.0, 0.0, 0.0], [10.0, 0.0, 0.0]];
        assert_eq!(hausdorff(&a2, &a).mm, 10.0);
        assert_eq!(hausdorff(&a2, &a2).mm, 0.0);
    }

    #[test]
    fn empty_conventions() {
        let e: [Point; 0] = [];
        let p = [[1.0, 2.0, 3.0]];
        assert_eq!(
            hd95(&e, &e),
            Distance { mm: 0.0, flag: Some(EmptyFlag::BothEmpty) }
        );
        assert_eq!(hd95(&p, &e).mm, f64::INFINITY);
        assert_eq!(hausdorff(&e, &p).flag, Some(EmptyFlag::OneEmpty));
    }

    #[test]
    fn nearest_rank_indices() {
        let mut v: Vec<f64> = (1..=20).map(f64::from).collect();
        // ceil(0.95 * 20) - 1 = 18
        assert_eq!(nearest_rank(&mut v, 95), 19.0);
        let mut v: Vec<f64> = (1..=21).rev().map(f64::from).collect();
        // ceil(19.95) - 1 = 19
        assert_eq!(nearest_rank(&mut v, 95), 20.0);
        assert_eq!(nearest_rank(&mut [7.0], 95), 7.0);
        assert_eq!(nearest_rank(&mut [1.0, 2.0], 100), 2.0);
    }

    #[test]
    fn evaluate_identity() {
        let m = map([6, 6, 6], &[[1, 1, 1], [2, 1, 1], [3, 3, 3]], 3);
        let r = evaluate_case("c", &m, &m, &ClassMap::default(), PointMode::Surface).unwrap();
        assert_eq!(r.rows.len(), 3);
        let la = &r.rows[2];
        assert_eq!(la.class_name, "left_atrium");
        assert_eq!((la.dice, la.hd95_mm, la.flag), (1.0, 0.0, None));
        let wall = &r.rows[0];
        assert_eq!(wall.flag, Some(EmptyFlag::BothEmpty));
    }

    #[test]
    fn evaluate_rejects_spacing_mismatch() {
        let a = LabelMap::filled([2, 2, 2], [1.0; 3], 0).unwrap();
        let b = LabelMap::filled([2, 2, 2], [1.0, 1.0, 2.0], 0).unwrap();
        assert!(matches!(
            evaluate_case("c", &a, &b, &ClassMap::default(), PointMode::Surface),
            Err(Error::SpacingMismatch { .. })
        ));
    }
}
