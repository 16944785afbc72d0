//! Leaped Halton sequences and the standard normal quantile function.

use ndarray::Array2;
use libm::erfc;

use crate::error::{Error, Result};

/// The first `n` primes.
pub fn first_primes(n: usize) -> Vec<u64> {
    let mut primes = Vec::with_capacity(n);
    let mut candidate = 2u64;
    while primes.len() < n {
        if is_prime(candidate) {
            primes.push(candidate);
        }
        candidate += 1;
    }
    primes
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut k = 2;
    while k * k <= n {
        if n % k == 0 {
            return false;
        }
        k += 1;
    }
    true
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Radical inverse of `index` in `base`, computed exactly in integers.
pub fn radical_inverse(base: u64, mut index: u64) -> f64 {
    let mut reversed = 0u64;
    let mut denom = 1u64;
    while index > 0 {
        reversed = reversed * base + index % base;
        denom *= base;
        index /= base;
    }
    reversed as f64 / denom as f64
}

/// Configuration of a leaped, skipped Halton sequence.
///
/// Point `p` (starting at 1) is built from the sequence index
/// `skip + 1 + (p - 1) * (leap + 1)`, so index 0 (the cube corner) is never used.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HaltonConfig {
    dim: usize,
    leap: u64,
    skip: u64,
    bases: Vec<u64>,
}

impl HaltonConfig {
    pub fn new(dim: usize, leap: u64, skip: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("Halton dimension must be positive"));
        }
        let bases = first_primes(dim);
        if let Some(&base) = bases.iter().find(|&&b| gcd(leap + 1, b) != 1) {
            return Err(Error::LeapNotCoprime { leap, base });
        }
        Ok(Self { dim, leap, skip, bases })
    }

    /// Uses the conventional leap: one less than the smallest prime larger
    /// than every base in use.
    pub fn with_default_leap(dim: usize) -> Result<Self> {
        Self::new(dim, default_leap(dim), 0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn leap(&self) -> u64 {
        self.leap
    }

    pub fn skip(&self) -> u64 {
        self.skip
    }

    pub fn with_skip(mut self, skip: u64) -> Self {
        self.skip = skip;
        self
    }

    fn index_of(&self, p: u64) -> u64 {
        self.skip + 1 + (p - 1) * (self.leap + 1)
    }

    /// The `p`-th point (1-based) of the sequence, every coordinate in (0, 1).
    pub fn point(&self, p: u64) -> Vec<f64> {
        assert!(p >= 1, "Halton points are indexed from 1");
        let idx = self.index_of(p);
        self.bases.iter().map(|&b| radical_inverse(b, idx)).collect()
    }

    /// Writes point `p` into `out` (length `dim`).
    pub fn fill_point(&self, p: u64, out: &mut [f64]) {
        let idx = self.index_of(p);
        for (o, &b) in out.iter_mut().zip(&self.bases) {
            *o = radical_inverse(b, idx);
        }
    }

    /// Points `first, first + 1, ..., first + count - 1` as rows of a matrix.
    pub fn points(&self, first: u64, count: usize) -> Array2<f64> {
        let mut out = Array2::zeros((count, self.dim));
        for (k, mut row) in out.rows_mut().into_iter().enumerate() {
            self.fill_point(first + k as u64, row.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Points mapped componentwise through the normal quantile function.
    pub fn gaussian_points(&self, first: u64, count: usize) -> Array2<f64> {
        let mut pts = self.points(first, count);
        pts.mapv_inplace(|u| inv_normal_cdf(u).expect("Halton coordinates lie in (0,1)"));
        pts
    }
}

/// `q - 1` where `q` is the smallest prime strictly greater than the
/// `dim`-th prime.
pub fn default_leap(dim: usize) -> u64 {
    let largest = *first_primes(dim.max(1)).last().unwrap();
    let mut q = largest + 1;
    while !is_prime(q) {
        q += 1;
    }
    q - 1
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// Acklam's rational approximation coefficients.
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];

fn acklam(u: f64) -> f64 {
    const P_LOW: f64 = 0.02425;
    if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if u <= 1.0 - P_LOW {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -acklam(1.0 - u)
    }
}

/// Inverse of the standard normal CDF.
///
/// Acklam's approximation followed by one Halley step against an accurate
/// `erfc`. The lower tail is solved directly and the upper tail by symmetry,
/// so `inv(u) == -inv(1 - u)` whenever `1 - u` is exact.
pub fn inv_normal_cdf(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::Domain(u));
    }
    if u == 0.5 {
        return Ok(0.0);
    }
    if u > 0.5 {
        return Ok(-lower_tail_quantile(1.0 - u));
    }
    Ok(lower_tail_quantile(u))
}

fn lower_tail_quantile(u: f64) -> f64 {
    let x = acklam(u);
    let e = normal_cdf(x) - u;
    let step = e / normal_pdf(x);
    x - step / (1.0 + 0.5 * x * step)
}
