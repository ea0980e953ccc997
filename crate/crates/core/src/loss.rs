//! Loss values with analytic gradients, each checkable against central
//! finite differences.
//!
//! All losses operate on probabilities, not logits; upstream normalization is
//! the caller's concern. Probabilities are clamped to `[EPS_PROB, 1 - EPS_PROB]`
//! before any logarithm.

use crate::depth::{eigen_transform, DepJointConfig, DepJointPrediction};
use crate::error::{Error, Result};
use crate::float::{cst, Real};
use crate::grid::Grid;

/// Probability clamp keeping logs finite.
pub const EPS_PROB: f64 = 1e-7;

/// A scalar loss value and its partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult<T> {
    pub value: T,
    /// One partial per input parameter, in the order documented by each loss.
    pub gradient: Vec<T>,
}

/// Task weights for the composite objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights<T> {
    pub lambda_dep: T,
    pub lambda_off: T,
}

impl<T: Real> LossWeights<T> {
    pub fn new(lambda_dep: T, lambda_off: T) -> Result<Self> {
        let ok = lambda_dep.is_finite()
            && lambda_off.is_finite()
            && lambda_dep >= T::zero()
            && lambda_off >= T::zero();
        if !ok {
            return Err(Error::InvalidLossWeights);
        }
        Ok(Self {
            lambda_dep,
            lambda_off,
        })
    }
}

#[inline]
fn clamp_prob<T: Real>(p: T) -> T {
    let eps = cst::<T>(EPS_PROB);
    p.max(eps).min(T::one() - eps)
}

/// Ordinal classification loss over exceedance probabilities.
///
/// For ground-truth bin count `l`:
/// `value = -(sum_{n<l} ln p_n + sum_{n>=l} ln(1 - p_n))`.
/// Gradient entry n is `-1/p_n` for `n < l` and `1/(1 - p_n)` otherwise,
/// evaluated at the clamped probabilities.
pub fn ordinal_loss<T: Real>(probs: &[T], gt_bin: usize) -> Result<LossResult<T>> {
    if gt_bin > probs.len() {
        return Err(Error::GtBinOutOfRange {
            gt_bin,
            n: probs.len(),
        });
    }
    let mut value = T::zero();
    let mut gradient = Vec::with_capacity(probs.len());
    for (n, &raw) in probs.iter().enumerate() {
        let p = clamp_prob(raw);
        if n < gt_bin {
            value = value - p.ln();
            gradient.push(-p.recip());
        } else {
            value = value - (T::one() - p).ln();
            gradient.push((T::one() - p).recip());
        }
    }
    Ok(LossResult { value, gradient })
}

/// Smooth L1 on the difference `x - y`.
///
/// `0.5 t^2` for `|t| < 1`, `|t| - 0.5` beyond; value and slope agree at the
/// knee. Gradient order: `[d/dx, d/dy]`.
pub fn smooth_l1<T: Real>(x: T, y: T) -> LossResult<T> {
    let t = x - y;
    let half = cst::<T>(0.5);
    let (value, dx) = if t.abs() < T::one() {
        (half * t * t, t)
    } else {
        (t.abs() - half, t.signum())
    };
    LossResult {
        value,
        gradient: vec![dx, -dx],
    }
}

/// Binary cross-entropy of probability `p` against target `t` in {0, 1},
/// returning `(value, d/dp)` at the clamped probability.
fn bce<T: Real>(p: T, target: bool) -> (T, T) {
    let p = clamp_prob(p);
    if target {
        (-p.ln(), -p.recip())
    } else {
        (-(T::one() - p).ln(), (T::one() - p).recip())
    }
}

/// Two-bin depth loss: per-bin binary cross-entropy on the confidences plus
/// L1 regression on each active bin's transformed output.
///
/// `value = sum_b BCE(p_b, 1_b(d)) + 1_1(d) |d - exp(-raw1)|
///        + 1_2(d) |d_max - d - exp(-raw2)|`.
/// Gradient order: `[p1, p2, raw1, raw2]`. The L1 subgradient at zero is 0.
pub fn depjoint_loss<T: Real>(
    pred: &DepJointPrediction<T>,
    gt_depth: T,
    cfg: &DepJointConfig<T>,
) -> Result<LossResult<T>> {
    if !(gt_depth >= cfg.d_min && gt_depth <= cfg.d_max) {
        return Err(Error::DepthOutOfRange {
            d: gt_depth.to_f64().unwrap_or(f64::NAN),
            lo: cfg.d_min.to_f64().unwrap_or(f64::NAN),
            hi: cfg.d_max.to_f64().unwrap_or(f64::NAN),
        });
    }
    let (in1, in2) = cfg.membership(gt_depth);
    let (cls1, dp1) = bce(pred.p1, in1);
    let (cls2, dp2) = bce(pred.p2, in2);
    let mut value = cls1 + cls2;
    let mut draw1 = T::zero();
    let mut draw2 = T::zero();
    if in1 {
        let phi = eigen_transform(pred.raw1);
        let diff = gt_depth - phi;
        value = value + diff.abs();
        // d|d - exp(-r)|/dr = sign(d - exp(-r)) * exp(-r); sign(0) -> 0.
        draw1 = l1_sign(diff) * phi;
    }
    if in2 {
        let phi = eigen_transform(pred.raw2);
        let diff = (cfg.d_max - gt_depth) - phi;
        value = value + diff.abs();
        draw2 = l1_sign(diff) * phi;
    }
    Ok(LossResult {
        value,
        gradient: vec![dp1, dp2, draw1, draw2],
    })
}

#[inline]
fn l1_sign<T: Real>(t: T) -> T {
    if t == T::zero() {
        T::zero()
    } else {
        t.signum()
    }
}

/// Sum per-instance depth losses and scale by `lambda_dep`. Empty input
/// yields zero.
pub fn total_depth_loss<T: Real>(
    per_instance: impl IntoIterator<Item = T>,
    weights: &LossWeights<T>,
) -> T {
    per_instance.into_iter().sum::<T>() * weights.lambda_dep
}

/// Penalty-reduced pixel-wise focal loss on a keypoint heatmap.
///
/// Peaks are the pixels where the target is exactly 1:
/// `value = -1/max(peaks, 1) * sum_xy [ gt==1: (1-p)^2 ln p,
/// else: (1-gt)^4 p^2 ln(1-p) ]`. The gradient grid is row-major, one partial
/// per predicted pixel.
pub fn focal_loss<T: Real>(pred: &Grid<T>, gt: &Grid<T>) -> Result<LossResult<T>> {
    if pred.shape() != gt.shape() {
        return Err(Error::GridShapeMismatch {
            a: pred.shape(),
            b: gt.shape(),
        });
    }
    let peaks = gt.values().iter().filter(|&&v| v == T::one()).count();
    let norm = cst::<T>(peaks.max(1) as f64).recip();
    let one = T::one();
    let two = cst::<T>(2.0);
    let four = cst::<T>(4.0);
    let mut total = T::zero();
    let mut gradient = Vec::with_capacity(pred.len());
    for (&p_raw, &y) in pred.values().iter().zip(gt.values()) {
        let p = clamp_prob(p_raw);
        if y == one {
            let q = one - p;
            total = total + q * q * p.ln();
            gradient.push(-norm * (q * q / p - two * q * p.ln()));
        } else {
            let w = (one - y).powf(four);
            let q = one - p;
            total = total + w * p * p * q.ln();
            gradient.push(-norm * w * (two * p * q.ln() - p * p / q));
        }
    }
    Ok(LossResult {
        value: -total * norm,
        gradient,
    })
}
