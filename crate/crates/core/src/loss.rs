//! Asymmetric loss for imbalanced binary (one-vs-rest) targets.
//!
//! ```text
//! L = -y (1 - p)^g+ log(p) - (1 - y) p_m^g- log(1 - p_m),   p_m = max(p - m, 0)
//! ```
//!
//! `p` is clamped to `[eps, 1 - eps]` before evaluation and `0^0 = 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{LabelMap, Volume};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymLossParams {
    pub gamma_pos: f64,
    pub gamma_neg: f64,
    pub margin: f64,
    pub eps: f64,
}

impl Default for AsymLossParams {
    /// gamma+ = 1, gamma- = 4, margin 0.05, eps 1e-7.
    fn default() -> Self {
        AsymLossParams {
            gamma_pos: 1.0,
            gamma_neg: 4.0,
            margin: 0.05,
            eps: 1e-7,
        }
    }
}

impl AsymLossParams {
    pub fn new(gamma_pos: f64, gamma_neg: f64, margin: f64) -> Result<Self> {
        let p = AsymLossParams {
            gamma_pos,
            gamma_neg,
            margin,
            ..Default::default()
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_pos >= 0.0 && self.gamma_pos.is_finite()) {
            return Err(Error::InvalidParam(format!("gamma_pos {} must be >= 0", self.gamma_pos)));
        }
        if !(self.gamma_neg >= 0.0 && self.gamma_neg.is_finite()) {
            return Err(Error::InvalidParam(format!("gamma_neg {} must be >= 0", self.gamma_neg)));
        }
        if !(0.0..1.0).contains(&self.margin) {
            return Err(Error::InvalidParam(format!("margin {} must lie in [0, 1)", self.margin)));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::InvalidParam(format!("eps {} must lie in (0, 0.5)", self.eps)));
        }
        Ok(())
    }

    #[inline]
    fn clamp(&self, p: f64) -> f64 {
        p.clamp(self.eps, 1.0 - self.eps)
    }
}

fn check_target(y: u8) -> Result<bool> {
    match y {
        0 => Ok(false),
        1 => Ok(true),
        other => Err(Error::InvalidParam(format!("target {other} is not 0 or 1"))),
    }
}

#[inline]
fn loss_unchecked(positive: bool, p: f64, params: &AsymLossParams) -> f64 {
    let p = params.clamp(p);
    if positive {
        -(1.0 - p).powf(params.gamma_pos) * p.ln()
    } else {
        let pm = (p - params.margin).max(0.0);
        -pm.powf(params.gamma_neg) * (1.0 - pm).ln()
    }
}

pub fn asym_loss(y: u8, p: f64, params: &AsymLossParams) -> Result<f64> {
    Ok(loss_unchecked(check_target(y)?, p, params))
}

/// `dL/dp`. Zero where the clamp is active and, for negatives, where
/// `p <= margin`.
pub fn asym_loss_grad(y: u8, p: f64, params: &AsymLossParams) -> Result<f64> {
    let positive = check_target(y)?;
    if p < params.eps || p > 1.0 - params.eps {
        return Ok(0.0);
    }
    let g = if positive {
        let gp = params.gamma_pos;
        let q = 1.0 - p;
        let focus = if gp == 0.0 { 0.0 } else { gp * q.powf(gp - 1.0) * p.ln() };
        focus - q.powf(gp) / p
    } else {
        let pm = p - params.margin;
        if pm <= 0.0 {
            return Ok(0.0);
        }
        let gn = params.gamma_neg;
        let focus = if gn == 0.0 { 0.0 } else { -gn * pm.powf(gn - 1.0) * (1.0 - pm).ln() };
        focus + pm.powf(gn) / (1.0 - pm)
    };
    Ok(g)
}

/// Mean of the one-vs-rest loss over every (class, voxel) pair. Class `c`
/// of `probs` is scored against `gt == classes[c]`.
pub fn volume_loss(probs: &[Volume], gt: &LabelMap, classes: &[u8], params: &AsymLossParams) -> Result<f64> {
    params.validate()?;
    if probs.is_empty() || probs.len() != classes.len() {
        return Err(Error::InvalidParam(format!(
            "{} probability volumes for {} classes",
            probs.len(),
            classes.len()
        )));
    }
    let mut sum = 0f64;
    for (vol, &class) in probs.iter().zip(classes) {
        if vol.shape() != gt.shape() {
            return Err(Error::ShapeMismatch {
                context: "probabilities vs ground truth",
                left: vol.shape(),
                right: gt.shape(),
            });
        }
        for (i, (&p, &g)) in vol.data().iter().zip(gt.data()).enumerate() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParam(format!("probability {p} at voxel {i} outside [0, 1]")));
            }
            sum += loss_unchecked(g == class, p as f64, params);
        }
    }
    Ok(sum / (probs.len() * gt.len()) as f64)
}

/// Default class codes for `n` probability volumes: `0..n`, so the first
/// volume scores background.
pub fn default_classes(n: usize) -> Vec<u8> {
    (0..n as u8).collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradSample {
    pub y: u8,
    pub p: f64,
    pub params: AsymLossParams,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub samples: Vec<GradSample>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&GradSample> {
        self.samples
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn passed(&self) -> bool {
        self.samples.iter().all(|s| s.rel_error < self.tolerance)
    }
}

/// Central difference `(L(p+h) - L(p-h)) / 2h`.
pub fn central_difference(y: u8, p: f64, params: &AsymLossParams, h: f64) -> Result<f64> {
    Ok((asym_loss(y, p + h, params)? - asym_loss(y, p - h, params)?) / (2.0 * h))
}

fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 { 0.0 } else { (a - b).abs() / scale }
}

/// Compares the analytic gradient with central differences (`h = 1e-6`) on
/// random `(y, p, gamma+, gamma-, margin)` draws, keeping `|p - m| > 1e-3`
/// and `p` in `[0.01, 0.99]`.
pub fn grad_check(samples: usize, seed: u64) -> Result<GradCheckReport> {
    const H: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples);
    while out.len() < samples {
        let y = rng.random_range(0..=1u8);
        let params = AsymLossParams::new(
            rng.random_range(0.0..5.0),
            rng.random_range(0.0..5.0),
            rng.random_range(0.0..0.2),
        )?;
        let p = rng.random_range(0.01..0.99);
        if (p - params.margin).abs() <= 1e-3 {
            continue;
        }
        let analytic = asym_loss_grad(y, p, &params)?;
        let numeric = central_difference(y, p, &params, H)?;
        out.push(GradSample {
            y,
            p,
            params,
            analytic,
            numeric,
            rel_error: relative_error(analytic, numeric),
        });
    }
    Ok(GradCheckReport {
        samples: out,
        tolerance: 1e-5,
    })
}
