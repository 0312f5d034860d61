//! Log-domain accumulation of sums of exponentials.

/// A (possibly signed) sum `scale * exp(log_max)` kept as its largest
/// exponent and a rescaled coefficient. Merging two accumulators costs one
/// `exp`, and no intermediate ever over- or underflows unless the final
/// value itself does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSum {
    pub log_max: f64,
    pub scale: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self::EMPTY
    }
}

impl LogSum {
    pub const EMPTY: LogSum = LogSum {
        log_max: f64::NEG_INFINITY,
        scale: 0.0,
    };

    /// A single term `coeff * exp(exponent)`.
    #[inline]
    pub fn term(exponent: f64, coeff: f64) -> Self {
        LogSum {
            log_max: exponent,
            scale: coeff,
        }
    }

    #[inline]
    pub fn merge(self, other: LogSum) -> LogSum {
        if self.log_max >= other.log_max {
            if other.log_max == f64::NEG_INFINITY {
                return self;
            }
            LogSum {
                log_max: self.log_max,
                scale: self.scale + other.scale * (other.log_max - self.log_max).exp(),
            }
        } else {
            if self.log_max == f64::NEG_INFINITY {
                return other;
            }
            LogSum {
                log_max: other.log_max,
                scale: other.scale + self.scale * (self.log_max - other.log_max).exp(),
            }
        }
    }

    /// Natural log of the sum. NaN for negative sums, -inf for empty ones.
    pub fn ln(self) -> f64 {
        if self.log_max == f64::NEG_INFINITY || self.scale == 0.0 {
            return f64::NEG_INFINITY;
        }
        self.log_max + self.scale.ln()
    }

    pub fn value(self) -> f64 {
        if self.log_max == f64::NEG_INFINITY {
            return 0.0;
        }
        self.scale * self.log_max.exp()
    }
}

/// `log(sum(exp(x)))` over a slice, shifted by the maximum.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// `exp(x)` for `|x| <= 700` without branches, so loops over it
/// vectorize. Cody-Waite reduction by `ln 2` and a degree-12 Taylor
/// polynomial; relative error within a few ulp. Outside the range the
/// result is meaningless.
#[inline(always)]
pub(crate) fn exp_bounded(x: f64) -> f64 {
    const ROUND: f64 = 6755399441055744.0; // 1.5 * 2^52
    const LN2_HI: f64 = 6.931_471_803_691_238_164_9e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    let t = x * std::f64::consts::LOG2_E + ROUND;
    let k = t - ROUND;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 479_001_600.0;
    p = p * r + 1.0 / 39_916_800.0;
    p = p * r + 1.0 / 3_628_800.0;
    p = p * r + 1.0 / 362_880.0;
    p = p * r + 1.0 / 40_320.0;
    p = p * r + 1.0 / 5_040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // low bits of t hold k; shifting drops the rounding constant
    let two_k = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    p * two_k
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_is_neutral() {
        let a = LogSum::term(3.0, 2.0);
        assert_eq!(a.merge(LogSum::EMPTY), a);
        assert_eq!(LogSum::EMPTY.merge(a), a);
        assert_eq!(LogSum::EMPTY.merge(LogSum::EMPTY).ln(), f64::NEG_INFINITY);
        assert_eq!(LogSum::EMPTY.value(), 0.0);
    }

    #[test]
    fn handles_extreme_exponents() {
        let s = LogSum::term(-1000.0, 1.0).merge(LogSum::term(-1000.0, 1.0));
        assert!((s.ln() - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        let s = LogSum::term(800.0, 1.0).merge(LogSum::term(0.0, 1.0));
        assert!((s.ln() - 800.0).abs() < 1e-12);
    }

    #[test]
    fn slice_version() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn merge_matches_direct_sum(xs in prop::collection::vec(-30.0f64..30.0, 1..40)) {
            let acc = xs.iter().fold(LogSum::EMPTY, |acc, &x| acc.merge(LogSum::term(x, 1.0)));
            let direct = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
            prop_assert!((acc.ln() - direct).abs() < 1e-12);
            prop_assert!((acc.ln() - log_sum_exp(&xs)).abs() < 1e-12);
        }

        #[test]
        fn merge_is_order_insensitive(a in -50.0f64..50.0, b in -50.0f64..50.0, ca in 0.1f64..3.0, cb in -3.0f64..3.0) {
            let x = LogSum::term(a, ca).merge(LogSum::term(b, cb)).value();
            let y = LogSum::term(b, cb).merge(LogSum::term(a, ca)).value();
            prop_assert!((x - y).abs() <= 1e-12 * (x.abs() + y.abs()).max(1e-300));
        }
    }

    #[test]
    fn bounded_exp_matches_std() {
        let mut worst = 0.0f64;
        let steps = 200_000;
        for i in 0..=steps {
            let x = -700.0 + 1400.0 * i as f64 / steps as f64 + 1e-7 * (i % 7) as f64;
            let rel = (exp_bounded(x) - x.exp()).abs() / x.exp();
            worst = worst.max(rel);
        }
        assert!(worst < 1e-15, "worst relative error {worst}");
        assert_eq!(exp_bounded(0.0), 1.0);
    }
}
