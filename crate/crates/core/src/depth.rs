//! Depth encodings and decodings.
//!
//! Three codec families:
//! - ordered-bin discretization ([`Discretization::Sid`] with geometrically
//!   growing bins, [`Discretization::Lid`] with linearly growing bins), with a
//!   fractional residual so decoding is exact;
//! - the exponential output transform [`eigen_transform`], `d = exp(-x)`;
//! - a two-bin near/far split ([`DepJointConfig`]) decoded as a
//!   confidence-weighted average of two exponential regressors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::{cst, Real};

/// Bin-spacing strategy for ordered-bin depth classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Discretization {
    /// Spacing-increasing: uniform in log depth, widths grow geometrically.
    Sid,
    /// Linear-increasing: each bin is wider than its predecessor by a
    /// constant increment `delta`.
    Lid,
}

/// Parameters of an ordered-bin discretization over `[d_min, d_max]`.
///
/// The effective range is the raw extrema shifted by `xi`:
/// `d_min = d_min_star + xi`, `d_max = d_max_star + xi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationConfig<T> {
    pub d_min_star: T,
    pub d_max_star: T,
    /// Range shift, typically chosen so that `d_min == 1`.
    pub xi: T,
    /// Number of bins.
    pub bins: usize,
    pub strategy: Discretization,
}

impl<T: Real> DiscretizationConfig<T> {
    pub fn new(
        d_min_star: T,
        d_max_star: T,
        xi: T,
        bins: usize,
        strategy: Discretization,
    ) -> Result<Self> {
        let cfg = Self {
            d_min_star,
            d_max_star,
            xi,
            bins,
            strategy,
        };
        let (lo, hi) = (cfg.d_min(), cfg.d_max());
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidDiscretization {
                reason: format!("range [{lo}, {hi}] is empty or not finite"),
            });
        }
        if strategy == Discretization::Sid && lo <= T::zero() {
            return Err(Error::InvalidDiscretization {
                reason: format!("log-spaced bins need d_min > 0, got {lo}"),
            });
        }
        if bins == 0 {
            return Err(Error::InvalidDiscretization {
                reason: "bin count must be >= 1".into(),
            });
        }
        Ok(cfg)
    }

    /// Config with `xi` chosen so the shifted minimum is exactly 1.
    pub fn normalized(
        d_min_star: T,
        d_max_star: T,
        bins: usize,
        strategy: Discretization,
    ) -> Result<Self> {
        Self::new(
            d_min_star,
            d_max_star,
            T::one() - d_min_star,
            bins,
            strategy,
        )
    }

    pub fn d_min(&self) -> T {
        self.d_min_star + self.xi
    }

    pub fn d_max(&self) -> T {
        self.d_max_star + self.xi
    }

    /// Width of the first LID bin: `delta = 2 (d_max - d_min) / (N (1 + N))`.
    ///
    /// Each subsequent bin is `delta` wider than the one before, so the N
    /// widths sum to the full range. Meaningful for [`Discretization::Lid`].
    pub fn lid_bin_width(&self) -> T {
        let n = cst::<T>(self.bins as f64);
        cst::<T>(2.0) * (self.d_max() - self.d_min()) / (n * (T::one() + n))
    }

    /// Map a depth to its continuous bin coordinate `l` in `[0, N]`.
    pub fn encode(&self, d: T) -> Result<DepthEncoding<T>> {
        let (lo, hi) = (self.d_min(), self.d_max());
        if !(d >= lo && d <= hi) {
            return Err(Error::DepthOutOfRange {
                d: d.to_f64().unwrap_or(f64::NAN),
                lo: lo.to_f64().unwrap_or(f64::NAN),
                hi: hi.to_f64().unwrap_or(f64::NAN),
            });
        }
        let n = cst::<T>(self.bins as f64);
        let l = match self.strategy {
            Discretization::Sid => n * (d.ln() - lo.ln()) / (hi.ln() - lo.ln()),
            Discretization::Lid => {
                let half = cst::<T>(0.5);
                let eight = cst::<T>(8.0);
                -half + half * (T::one() + eight * (d - lo) / self.lid_bin_width()).sqrt()
            }
        };
        Ok(DepthEncoding::split(l.max(T::zero()).min(n)))
    }

    /// Invert [`encode`](Self::encode) at a continuous bin coordinate.
    pub fn decode(&self, l: T) -> Result<T> {
        let n = cst::<T>(self.bins as f64);
        if !(l >= T::zero() && l <= n) {
            return Err(Error::BinIndexOutOfRange {
                l: l.to_f64().unwrap_or(f64::NAN),
                n: self.bins,
            });
        }
        let lo = self.d_min();
        Ok(match self.strategy {
            Discretization::Sid => lo * (l / n * (self.d_max() / lo).ln()).exp(),
            Discretization::Lid => {
                lo + self.lid_bin_width() * l * (l + T::one()) * cst::<T>(0.5)
            }
        })
    }

    /// `[lo, hi)` bounds of the 0-based bin `index`.
    pub fn bin_bounds(&self, index: usize) -> Result<(T, T)> {
        let lo = self.decode(cst::<T>(index as f64))?;
        let hi = self.decode(cst::<T>(index as f64 + 1.0))?;
        Ok((lo, hi))
    }

    /// Table of `(index, lo, hi, width)` rows for every bin.
    pub fn bin_table(&self) -> Vec<BinRow<T>> {
        (0..self.bins)
            .map(|i| {
                let (lo, hi) = self.bin_bounds(i).expect("index < bins is in range");
                BinRow {
                    index: i,
                    lo,
                    hi,
                    width: hi - lo,
                }
            })
            .collect()
    }
}

/// One row of a bin-layout table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinRow<T> {
    pub index: usize,
    pub lo: T,
    pub hi: T,
    pub width: T,
}

/// A continuous bin coordinate split into whole bins and a residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthEncoding<T> {
    /// Number of complete bins below the depth, `floor(l)`.
    pub bin: usize,
    /// Fractional part in `[0, 1)`; `bin + residual` reproduces `l` exactly.
    pub residual: T,
}

impl<T: Real> DepthEncoding<T> {
    pub fn split(l: T) -> Self {
        Self {
            bin: l.floor().to_usize().unwrap_or(0),
            residual: l.fract(),
        }
    }

    pub fn continuous(&self) -> T {
        cst::<T>(self.bin as f64) + self.residual
    }
}

/// Per-bin exceedance probabilities plus a regressed residual.
///
/// `probs[n]` estimates P(depth is beyond bin n); the prediction activates a
/// bin when that probability exceeds 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrdinalPrediction<T> {
    pub probs: Vec<T>,
    pub residual: T,
}

/// Decode an ordinal prediction: count activated bins, refine with the
/// residual, clamp to `[0, N]`, and invert the discretization.
///
/// The count is the plain cardinality of `{n : probs[n] > 0.5}` even for
/// non-monotone probability vectors.
pub fn ordinal_decode<T: Real>(
    pred: &OrdinalPrediction<T>,
    cfg: &DiscretizationConfig<T>,
) -> T {
    let half = cst::<T>(0.5);
    let activated = pred.probs.iter().filter(|&&p| p > half).count();
    let n = cst::<T>(cfg.bins as f64);
    let l = (cst::<T>(activated as f64) + pred.residual)
        .max(T::zero())
        .min(n);
    cfg.decode(l).expect("clamped coordinate is in range")
}

/// Exponential output transform `d = exp(-feature)`.
///
/// Strictly decreasing; small feature values map to a wide far range while
/// most of the feature axis is spent on near depths.
pub fn eigen_transform<T: Real>(feature: T) -> T {
    (-feature).exp()
}

/// Inverse of [`eigen_transform`]: `feature = -ln(d)`, defined for `d > 0`.
pub fn eigen_inverse<T: Real>(d: T) -> Result<T> {
    if d <= T::zero() {
        return Err(Error::NonPositiveDepth {
            d: d.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(-d.ln())
}

/// Like [`eigen_inverse`] but clamps the argument to the smallest positive
/// value, so encoding a boundary depth (e.g. `d_max - d` at `d_max`) stays
/// finite and decodes back within 1e-9.
pub fn eigen_inverse_clamped<T: Real>(d: T) -> T {
    -d.max(T::min_positive_value()).ln()
}

/// Closed interval of depths, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthInterval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> DepthInterval<T> {
    pub fn contains(&self, d: T) -> bool {
        d >= self.lo && d <= self.hi
    }
}

/// Two-bin near/far depth split with scale parameters `alpha` and `beta`.
///
/// Bin 1 covers `[d_min, (1-alpha) d_min + alpha d_max]` and regresses the
/// absolute depth; bin 2 covers `[(1-beta) d_min + beta d_max, d_max]` and
/// regresses the remainder `d_max - d`. With `alpha > beta` the bins overlap;
/// with `alpha == beta` they are associated (meet at one point).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepJointConfig<T> {
    pub alpha: T,
    pub beta: T,
    pub d_min: T,
    pub d_max: T,
}

impl<T: Real> DepJointConfig<T> {
    pub fn new(alpha: T, beta: T, d_min: T, d_max: T) -> Result<Self> {
        let cfg = Self {
            alpha,
            beta,
            d_min,
            d_max,
        };
        let unit = T::zero() < alpha && alpha <= T::one() && T::zero() < beta && beta <= T::one();
        if !unit {
            return Err(Error::InvalidDepJoint {
                reason: format!("alpha {alpha} and beta {beta} must lie in (0, 1]"),
            });
        }
        let ordered = d_min.is_finite() && d_max.is_finite() && d_min < d_max;
        if !ordered {
            return Err(Error::InvalidDepJoint {
                reason: format!("range [{d_min}, {d_max}] is empty"),
            });
        }
        let (bin1, bin2) = cfg.bins();
        if bin1.hi < bin2.lo {
            return Err(Error::InvalidDepJoint {
                reason: format!(
                    "bins [{}, {}] and [{}, {}] leave a gap (alpha < beta)",
                    bin1.lo, bin1.hi, bin2.lo, bin2.hi
                ),
            });
        }
        Ok(cfg)
    }

    /// The two depth intervals.
    pub fn bins(&self) -> (DepthInterval<T>, DepthInterval<T>) {
        let one = T::one();
        (
            DepthInterval {
                lo: self.d_min,
                hi: (one - self.alpha) * self.d_min + self.alpha * self.d_max,
            },
            DepthInterval {
                lo: (one - self.beta) * self.d_min + self.beta * self.d_max,
                hi: self.d_max,
            },
        )
    }

    /// Indicator pair `(d in bin 1, d in bin 2)`; both can hold in an overlap.
    pub fn membership(&self, d: T) -> (bool, bool) {
        let (bin1, bin2) = self.bins();
        (bin1.contains(d), bin2.contains(d))
    }

    /// Regression targets `(raw1, raw2)` whose transforms reproduce `d` and
    /// `d_max - d`.
    pub fn encode_raw(&self, d: T) -> (T, T) {
        (
            eigen_inverse_clamped(d),
            eigen_inverse_clamped(self.d_max - d),
        )
    }
}

/// Bin confidences and raw regressor outputs of the two-bin depth head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepJointPrediction<T> {
    pub p1: T,
    pub p2: T,
    pub raw1: T,
    pub raw2: T,
}

/// Confidence-weighted decode of a two-bin prediction.
///
/// With normalized weights `P_b = p_b / (p1 + p2)`:
/// `d = P_1 * exp(-raw1) + P_2 * (d_max - exp(-raw2))`, clamped to the
/// configured range.
pub fn depjoint_decode<T: Real>(
    pred: &DepJointPrediction<T>,
    cfg: &DepJointConfig<T>,
) -> Result<T> {
    let total = pred.p1 + pred.p2;
    let usable = total > T::zero();
    if !usable {
        return Err(Error::ZeroBinConfidence);
    }
    let near = eigen_transform(pred.raw1);
    let far = cfg.d_max - eigen_transform(pred.raw2);
    let d = (pred.p1 * near + pred.p2 * far) / total;
    Ok(d.max(cfg.d_min).min(cfg.d_max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(strategy: Discretization) -> DiscretizationConfig<f64> {
        DiscretizationConfig::new(1.0, 91.0, 0.0, 80, strategy).unwrap()
    }

    #[test]
    fn lid_bin_width_formula() {
        let c = cfg(Discretization::Lid);
        assert!((c.lid_bin_width() - 180.0 / 6480.0).abs() < 1e-15);
        let single = DiscretizationConfig::<f64>::new(1.0, 91.0, 0.0, 1, Discretization::Lid).unwrap();
        assert!((single.lid_bin_width() - 90.0).abs() < 1e-12);
    }

    #[test]
    fn empty_range_rejected() {
        let err = DiscretizationConfig::new(5.0, 5.0, 0.0, 10, Discretization::Lid).unwrap_err();
        assert!(matches!(err, Error::InvalidDiscretization { .. }));
    }

    #[test]
    fn encode_boundaries() {
        for strategy in [Discretization::Sid, Discretization::Lid] {
            let c = cfg(strategy);
            let at_min = c.encode(1.0).unwrap();
            assert_eq!(at_min.bin, 0);
            assert_eq!(at_min.residual, 0.0);
            let at_max = c.encode(91.0).unwrap();
            assert!((at_max.continuous() - 80.0).abs() < 1e-9);
            assert!((c.decode(80.0).unwrap() - 91.0).abs() < 1e-9);
            assert_eq!(c.decode(0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn near_field_bin_counts() {
        // 5 m falls in the 29th SID bin but only the 17th LID bin: the
        // log-spaced layout burns 28 complete bins below 5 m, the linear
        // layout only 16.
        let sid = cfg(Discretization::Sid).encode(5.0).unwrap();
        assert_eq!(sid.bin, 28);
        assert!((sid.continuous() - 28.54334807118584).abs() < 1e-9);

        let lid = cfg(Discretization::Lid).encode(5.0).unwrap();
        assert_eq!(lid.bin, 16);
        assert!((lid.continuous() - 16.477926846349646).abs() < 1e-9);
    }

    #[test]
    fn encode_rejects_out_of_range() {
        let c = cfg(Discretization::Lid);
        assert!(matches!(
            c.encode(0.5),
            Err(Error::DepthOutOfRange { .. })
        ));
        assert!(matches!(
            c.encode(92.0),
            Err(Error::DepthOutOfRange { .. })
        ));
        assert!(matches!(
            c.decode(-0.1),
            Err(Error::BinIndexOutOfRange { .. })
        ));
    }

    #[test]
    fn roundtrip_dense_grid() {
        for strategy in [Discretization::Sid, Discretization::Lid] {
            let c = cfg(strategy);
            for i in 0..=10_000 {
                let d = 1.0 + 90.0 * f64::from(i) / 10_000.0;
                let enc = c.encode(d).unwrap();
                let back = c.decode(enc.continuous()).unwrap();
                assert!(
                    (back - d).abs() < 1e-9,
                    "{strategy:?} roundtrip failed at {d}: {back}"
                );
            }
        }
    }

    #[test]
    fn bin_width_growth_laws() {
        let lid = cfg(Discretization::Lid).bin_table();
        let delta = cfg(Discretization::Lid).lid_bin_width();
        for pair in lid.windows(2) {
            assert!((pair[1].width - pair[0].width - delta).abs() < 1e-9);
        }
        let sid = cfg(Discretization::Sid).bin_table();
        let ratio = 91.0f64.powf(1.0 / 80.0);
        for pair in sid.windows(2) {
            assert!((pair[1].width / pair[0].width - ratio).abs() < 1e-9);
        }
    }

    #[test]
    fn ordinal_decode_counts_activated_bins() {
        let c = cfg(Discretization::Lid);
        let all_off = OrdinalPrediction {
            probs: vec![0.0; 80],
            residual: 0.0,
        };
        assert_eq!(ordinal_decode(&all_off, &c), 1.0);

        let mut probs = vec![0.0; 80];
        for p in probs.iter_mut().take(16) {
            *p = 1.0;
        }
        let pred = OrdinalPrediction {
            probs,
            residual: 0.477926846349646,
        };
        let d = ordinal_decode(&pred, &c);
        assert!((d - 5.0).abs() < 1e-6, "decoded {d}");

        // Non-monotone probabilities still count by cardinality.
        let zigzag = OrdinalPrediction {
            probs: (0..80).map(|i| if i % 2 == 0 { 1.0 } else { 0.0 }).collect(),
            residual: 0.0,
        };
        let expected = c.decode(40.0).unwrap();
        assert_eq!(ordinal_decode(&zigzag, &c), expected);

        // Residual beyond the last bin clamps to N.
        let saturated = OrdinalPrediction {
            probs: vec![1.0; 80],
            residual: 0.9,
        };
        assert_eq!(ordinal_decode(&saturated, &c), 91.0);
    }

    #[test]
    fn eigen_curve_values() {
        assert_eq!(eigen_transform(0.0_f64), 1.0);
        assert!((eigen_transform(-4.0_f64) - 54.598150033144236).abs() < 1e-12);
        assert!((eigen_transform(-5.0_f64) - 148.4131591025766).abs() < 1e-12);
        assert!((eigen_inverse(10.0).unwrap() - (-10.0f64.ln())).abs() < 1e-15);
        assert!(matches!(
            eigen_inverse(0.0),
            Err(Error::NonPositiveDepth { .. })
        ));
        assert!(matches!(
            eigen_inverse(-1.0),
            Err(Error::NonPositiveDepth { .. })
        ));
    }

    #[test]
    fn eigen_is_strictly_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 0..=100 {
            let x = -5.0 + 10.0 * f64::from(i) / 100.0;
            let d = eigen_transform(x);
            assert!(d < prev);
            prev = d;
        }
        assert!((eigen_transform(5.0) - (-5.0f64).exp()).abs() < 1e-18);
    }

    #[test]
    fn depjoint_bin_layout() {
        let overlap = DepJointConfig::new(0.7, 0.3, 0.0, 60.0).unwrap();
        let (b1, b2) = overlap.bins();
        assert_eq!((b1.lo, b1.hi), (0.0, 42.0));
        assert_eq!((b2.lo, b2.hi), (18.0, 60.0));

        let associated = DepJointConfig::new(0.3, 0.3, 0.0, 60.0).unwrap();
        let (b1, b2) = associated.bins();
        assert_eq!(b1.hi, b2.lo);

        // alpha = 1 stretches bin 1 over the whole range; beta = 1 pins
        // bin 2 to the single point d_max.
        let full = DepJointConfig::new(1.0, 1.0, 0.0, 60.0).unwrap();
        let (b1, b2) = full.bins();
        assert_eq!((b1.lo, b1.hi), (0.0, 60.0));
        assert_eq!((b2.lo, b2.hi), (60.0, 60.0));

        // A gap between the bins is invalid.
        assert!(DepJointConfig::new(0.2, 0.5, 0.0, 60.0).is_err());
        assert!(DepJointConfig::new(0.0, 0.3, 0.0, 60.0).is_err());
    }

    #[test]
    fn depjoint_membership_cases() {
        let cfg = DepJointConfig::new(0.7, 0.3, 0.0, 60.0).unwrap();
        assert_eq!(cfg.membership(10.0), (true, false));
        assert_eq!(cfg.membership(30.0), (true, true));
        assert_eq!(cfg.membership(50.0), (false, true));
    }

    #[test]
    fn depjoint_decode_cases() {
        let cfg = DepJointConfig::new(0.7, 0.3, 0.0, 60.0).unwrap();
        let near_only = DepJointPrediction {
            p1: 1.0,
            p2: 0.0,
            raw1: -(10.0f64.ln()),
            raw2: 0.0,
        };
        assert!((depjoint_decode(&near_only, &cfg).unwrap() - 10.0).abs() < 1e-12);

        let far_only = DepJointPrediction {
            p1: 0.0,
            p2: 1.0,
            raw1: 0.0,
            raw2: -(20.0f64.ln()),
        };
        assert!((depjoint_decode(&far_only, &cfg).unwrap() - 40.0).abs() < 1e-12);

        let blended = DepJointPrediction {
            p1: 0.5,
            p2: 0.5,
            raw1: -(10.0f64.ln()),
            raw2: -(20.0f64.ln()),
        };
        assert!((depjoint_decode(&blended, &cfg).unwrap() - 25.0).abs() < 1e-12);

        let dead = DepJointPrediction {
            p1: 0.0,
            p2: 0.0,
            raw1: 0.0,
            raw2: 0.0,
        };
        assert!(matches!(
            depjoint_decode(&dead, &cfg),
            Err(Error::ZeroBinConfidence)
        ));
    }

    #[test]
    fn depjoint_decode_scale_invariant() {
        let cfg = DepJointConfig::new(0.6, 0.4, 0.0, 60.0).unwrap();
        let base = DepJointPrediction {
            p1: 0.3,
            p2: 0.2,
            raw1: -(12.0f64.ln()),
            raw2: -(31.0f64.ln()),
        };
        let scaled = DepJointPrediction {
            p1: base.p1 * 7.5,
            p2: base.p2 * 7.5,
            ..base
        };
        let a = depjoint_decode(&base, &cfg).unwrap();
        let b = depjoint_decode(&scaled, &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn depjoint_decode_clamps_to_range() {
        let cfg = DepJointConfig::new(0.7, 0.3, 5.0, 60.0).unwrap();
        let wild = DepJointPrediction {
            p1: 1.0,
            p2: 0.0,
            raw1: -(500.0f64.ln()),
            raw2: 0.0,
        };
        assert_eq!(depjoint_decode(&wild, &cfg).unwrap(), 60.0);
    }

    #[test]
    fn f32_roundtrip_sanity() {
        let c = DiscretizationConfig::<f32>::new(1.0, 91.0, 0.0, 80, Discretization::Lid).unwrap();
        for i in 0..100 {
            let d = 1.0 + 90.0 * (i as f32) / 99.0;
            let enc = c.encode(d).unwrap();
            let back = c.decode(enc.continuous()).unwrap();
            assert!((back - d).abs() < 1e-3);
        }
    }
}
