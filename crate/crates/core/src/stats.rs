//! Statistics of repeated pricing runs: sample standard deviations with
//! chi-square confidence intervals, and Hartley's variance ratio.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Prices from `R` runs that differ only in their seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RepetitionStudy {
    prices: Vec<f64>,
}

/// Sample standard deviation with a two-sided confidence interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdInterval {
    pub std: f64,
    pub lower: f64,
    pub upper: f64,
}

impl RepetitionStudy {
    pub fn new(prices: Vec<f64>) -> Result<Self> {
        if prices.len() < 2 {
            return Err(Error::invalid("a repetition study needs at least two prices"));
        }
        if prices.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("repetition prices must be finite"));
        }
        Ok(Self { prices })
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.prices.iter().sum::<f64>() / self.len() as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.prices.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (self.len() - 1) as f64
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Sample standard deviation `s` with the interval
    /// `[√((R-1)s²/χ²_{R-1}(1-α/2)), √((R-1)s²/χ²_{R-1}(α/2))]`,
    /// where `level = 1 - α`.
    pub fn sample_std_ci(&self, level: f64) -> Result<StdInterval> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::invalid("confidence level must lie in (0, 1)"));
        }
        let dof = (self.len() - 1) as f64;
        let chi = ChiSquared::new(dof).map_err(|e| Error::invalid(e.to_string()))?;
        let alpha = 1.0 - level;
        let scaled = dof * self.variance();
        Ok(StdInterval {
            std: self.std(),
            lower: (scaled / chi.inverse_cdf(1.0 - alpha / 2.0)).sqrt(),
            upper: (scaled / chi.inverse_cdf(alpha / 2.0)).sqrt(),
        })
    }
}

/// Hartley's `F_max`: largest over smallest variance.
pub fn hartley_fmax(variances: &[f64]) -> Result<f64> {
    if variances.len() < 2 {
        return Err(Error::invalid("F_max needs at least two variances"));
    }
    if let Some(&bad) = variances.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositiveVariance(bad));
    }
    let max = variances.iter().copied().fold(f64::MIN, f64::max);
    let min = variances.iter().copied().fold(f64::MAX, f64::min);
    Ok(max / min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_prices_have_a_degenerate_interval() {
        let s = RepetitionStudy::new(vec![4.5; 10]).unwrap();
        let ci = s.sample_std_ci(0.95).unwrap();
        assert_eq!((ci.std, ci.lower, ci.upper), (0.0, 0.0, 0.0));
    }

    #[test]
    fn interval_factors_for_ninety_nine_degrees_of_freedom() {
        // the bound-to-estimate ratios do not depend on the sample
        let prices: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let s = RepetitionStudy::new(prices).unwrap();
        let ci = s.sample_std_ci(0.95).unwrap();
        // χ²_99(0.975) = 128.4220, χ²_99(0.025) = 73.3611
        assert!((ci.lower / ci.std - (99.0f64 / 128.4220).sqrt()).abs() < 1e-5);
        assert!((ci.upper / ci.std - (99.0f64 / 73.3611).sqrt()).abs() < 1e-5);
        assert!((ci.lower / ci.std - 0.878).abs() < 1e-3);
        assert!((ci.upper / ci.std - 1.161).abs() < 1e-3);
    }

    #[test]
    fn two_degrees_of_freedom_have_closed_form_quantiles() {
        // χ²_2 has cdf 1 - exp(-x/2)
        let s = RepetitionStudy::new(vec![0.0, 1.0, 2.0]).unwrap();
        let ci = s.sample_std_ci(0.9).unwrap();
        let q = |p: f64| -2.0 * (1.0 - p).ln();
        assert!((ci.lower - (2.0 / q(0.95)).sqrt()).abs() < 1e-9);
        assert!((ci.upper - (2.0 / q(0.05)).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn study_validation() {
        assert!(RepetitionStudy::new(vec![1.0]).is_err());
        assert!(RepetitionStudy::new(vec![1.0, f64::NAN]).is_err());
        let s = RepetitionStudy::new(vec![1.0, 2.0]).unwrap();
        assert!(s.sample_std_ci(1.0).is_err());
    }

    #[test]
    fn hartley_examples() {
        assert_eq!(hartley_fmax(&[2.0, 2.0, 2.0]).unwrap(), 1.0);
        assert_eq!(hartley_fmax(&[4.0, 1.0]).unwrap(), 4.0);
        assert_eq!(hartley_fmax(&[4.0, 0.0]), Err(Error::NonPositiveVariance(0.0)));
        assert!(hartley_fmax(&[1.0]).is_err());
        let published = (22.3e-3f64).powi(2) / (2.7e-3f64).powi(2);
        assert!((hartley_fmax(&[(22.3e-3f64).powi(2), (2.7e-3f64).powi(2)]).unwrap() - published).abs() < 1e-9);
        assert!(published > 68.0);
    }

    proptest! {
        #[test]
        fn interval_brackets_the_estimate(prices in proptest::collection::vec(-10.0f64..10.0, 3..40), level in 0.5f64..0.99) {
            let s = RepetitionStudy::new(prices).unwrap();
            let ci = s.sample_std_ci(level).unwrap();
            prop_assert!(ci.lower <= ci.std + 1e-12 && ci.std <= ci.upper + 1e-12);
        }

        #[test]
        fn fmax_is_scale_invariant(v in proptest::collection::vec(0.1f64..10.0, 2..10), c in 0.1f64..10.0) {
            let scaled: Vec<f64> = v.iter().map(|x| x * c).collect();
            let a = hartley_fmax(&v).unwrap();
            prop_assert!(a >= 1.0);
            prop_assert!((hartley_fmax(&scaled).unwrap() / a - 1.0).abs() < 1e-12);
        }
    }
}
