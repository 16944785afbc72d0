//! Isotropic covariance kernels and the batched kernel sums behind prediction.

use ndarray::{Array2, ArrayView1};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFamily {
    Matern32,
    SquaredExponential,
}

/// Kernel family with its hyperparameters `σ_f²` and `σ_l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub signal_var: f64,
    pub length_scale: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, signal_var: f64, length_scale: f64) -> Self {
        Self {
            family,
            signal_var,
            length_scale,
        }
    }

    /// Kernel value as a function of the squared distance.
    #[inline(always)]
    pub fn eval_sq_dist(&self, r2: f64) -> f64 {
        match self.family {
            KernelFamily::Matern32 => {
                let a = (3.0 * r2).sqrt() / self.length_scale;
                self.signal_var * (1.0 + a) * exp_fast(-a)
            }
            KernelFamily::SquaredExponential => {
                self.signal_var * exp_fast(-0.5 * r2 / (self.length_scale * self.length_scale))
            }
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        self.eval_sq_dist(r2)
    }
}

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
// 1.5 * 2^52: adding it rounds to the nearest integer and leaves that
// integer in the low mantissa bits.
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

/// `a * b + c`, fused when the target has FMA and plain otherwise (a software
/// `fma` would be far slower than the rounding difference is worth).
#[inline(always)]
fn madd(a: f64, b: f64, c: f64) -> f64 {
    #[cfg(target_feature = "fma")]
    {
        a.mul_add(b, c)
    }
    #[cfg(not(target_feature = "fma"))]
    {
        a * b + c
    }
}

/// Branch-free `exp` that the compiler can vectorize.
///
/// Relative error is a few ulp over `[-708, 709]`; inputs below are clamped,
/// so results never underflow to subnormals.
#[inline(always)]
pub fn exp_fast(x: f64) -> f64 {
    let x = x.clamp(-708.0, 709.0);
    let t = madd(x, LOG2E, ROUND_MAGIC);
    let k = t - ROUND_MAGIC;
    let r = madd(-k, LN2_LO, madd(-k, LN2_HI, x));
    // Taylor series to degree 13 on |r| <= ln2/2.
    let mut p = 1.0 / 6_227_020_800.0;
    p = madd(p, r, 1.0 / 479_001_600.0);
    p = madd(p, r, 1.0 / 39_916_800.0);
    p = madd(p, r, 1.0 / 3_628_800.0);
    p = madd(p, r, 1.0 / 362_880.0);
    p = madd(p, r, 1.0 / 40_320.0);
    p = madd(p, r, 1.0 / 5_040.0);
    p = madd(p, r, 1.0 / 720.0);
    p = madd(p, r, 1.0 / 120.0);
    p = madd(p, r, 1.0 / 24.0);
    p = madd(p, r, 1.0 / 6.0);
    p = madd(p, r, 0.5);
    p = madd(p, r, 1.0);
    p = madd(p, r, 1.0);
    let ki = (t.to_bits() as i64).wrapping_sub(ROUND_MAGIC.to_bits() as i64);
    let scale = f64::from_bits(((ki + 1023) << 52) as u64);
    p * scale
}

const LANES: usize = 8;

/// Predictor set stored coordinate-major so that distance accumulation runs
/// over contiguous memory.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorBlock {
    /// `d x P`, row `i` holds coordinate `i` of every predictor.
    coords: Array2<f64>,
    len: usize,
    padded: usize,
}

impl PredictorBlock {
    pub fn new(points: ndarray::ArrayView2<f64>) -> Self {
        let (len, d) = points.dim();
        let padded = len.div_ceil(LANES) * LANES;
        let mut coords = Array2::zeros((d, padded));
        for (j, row) in points.rows().into_iter().enumerate() {
            for (i, &v) in row.iter().enumerate() {
                coords[[i, j]] = v;
            }
        }
        Self { coords, len, padded }
    }

    /// Builds the block from coordinate-major data (`d x P`).
    pub fn from_coords(coords_t: ndarray::ArrayView2<f64>) -> Self {
        let (d, len) = coords_t.dim();
        let padded = len.div_ceil(LANES) * LANES;
        let mut coords = Array2::zeros((d, padded));
        coords.slice_mut(ndarray::s![.., ..len]).assign(&coords_t);
        Self { coords, len, padded }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.nrows()
    }

    /// Writes squared distances from `x` to every predictor into `out`
    /// (length at least the padded size; padding lanes are garbage).
    pub fn sq_dists(&self, x: &[f64], out: &mut [f64]) {
        let out = &mut out[..self.padded];
        out.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            let row = self.coords.row(i);
            let row = row.as_slice().expect("standard layout");
            for (o, &c) in out.iter_mut().zip(row) {
                let diff = xi - c;
                *o = madd(diff, diff, *o);
            }
        }
    }

    pub fn scratch(&self) -> Vec<f64> {
        vec![0.0; self.padded]
    }

    /// `Σ_j w_j k(x, x_j)`, with `weights` padded by zeros.
    ///
    /// The summation order is fixed (eight interleaved partial sums), so the
    /// result is reproducible bit for bit.
    pub fn weighted_sum(&self, kernel: &KernelSpec, weights: &[f64], x: &[f64], scratch: &mut [f64]) -> f64 {
        self.sq_dists(x, scratch);
        let r2 = &scratch[..self.padded];
        let w = &weights[..self.padded];
        let mut acc = [0.0f64; LANES];
        match kernel.family {
            KernelFamily::Matern32 => {
                let c = 3.0f64.sqrt() / kernel.length_scale;
                for (rc, wc) in r2.chunks_exact(LANES).zip(w.chunks_exact(LANES)) {
                    for l in 0..LANES {
                        let a = c * rc[l].sqrt();
                        acc[l] += wc[l] * (1.0 + a) * exp_fast(-a);
                    }
                }
            }
            KernelFamily::SquaredExponential => {
                let c = -0.5 / (kernel.length_scale * kernel.length_scale);
                for (rc, wc) in r2.chunks_exact(LANES).zip(w.chunks_exact(LANES)) {
                    for l in 0..LANES {
                        acc[l] += wc[l] * exp_fast(c * rc[l]);
                    }
                }
            }
        }
        kernel.signal_var * reduce_lanes(&acc)
    }

    /// Kernel values `k(x, x_j)` for every predictor, into `out[..len]`.
    pub fn kernel_row(&self, kernel: &KernelSpec, x: &[f64], out: &mut [f64]) {
        self.sq_dists(x, out);
        for v in out[..self.padded].iter_mut() {
            *v = kernel.eval_sq_dist(*v);
        }
    }

    /// Zero-padded copy of a weight vector matching this block.
    pub fn pad(&self, w: ArrayView1<f64>) -> Vec<f64> {
        let mut out = vec![0.0; self.padded];
        for (o, &v) in out.iter_mut().zip(w.iter()) {
            *o = v;
        }
        out
    }
}

#[inline(always)]
fn reduce_lanes(acc: &[f64; LANES]) -> f64 {
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))
}

/// Squared-distance matrix between the rows of `a`.
pub fn sq_dist_matrix(points: ndarray::ArrayView2<f64>) -> Array2<f64> {
    let n = points.nrows();
    let block = PredictorBlock::new(points);
    let mut out = Array2::zeros((n, n));
    let mut scratch = block.scratch();
    for (i, row) in points.rows().into_iter().enumerate() {
        block.sq_dists(&row.to_vec(), &mut scratch);
        out.row_mut(i).as_slice_mut().unwrap().copy_from_slice(&scratch[..n]);
    }
    // exact symmetry and zero diagonal
    for i in 0..n {
        out[[i, i]] = 0.0;
        for j in 0..i {
            let v = out[[i, j]];
            out[[j, i]] = v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn exp_fast_matches_std() {
        let mut worst = 0.0f64;
        let mut x = -700.0;
        while x < 700.0 {
            let rel = (exp_fast(x) / x.exp() - 1.0).abs();
            worst = worst.max(rel);
            x += 0.0137;
        }
        assert!(worst < 4e-16, "worst relative error {worst}");
        assert_eq!(exp_fast(0.0), 1.0);
        assert!(exp_fast(-1e6) < 1e-300 && exp_fast(-1e6) > 0.0);
    }

    proptest! {
        #[test]
        fn exp_fast_relative_error(x in -700.0f64..700.0) {
            prop_assert!((exp_fast(x) / x.exp() - 1.0).abs() < 4e-16);
        }
    }

    #[test]
    fn kernel_examples() {
        let se = KernelSpec::new(KernelFamily::SquaredExponential, 1.0, 1.0);
        assert!((se.eval(&[0.0, 0.0], &[1.0, 1.0]) - (-1.0f64).exp()).abs() < 1e-15);
        let ma = KernelSpec::new(KernelFamily::Matern32, 1.0, 3f64.sqrt());
        assert!((ma.eval(&[0.0], &[1.0]) - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        for spec in [se, ma, KernelSpec::new(KernelFamily::Matern32, 2.5, 0.3)] {
            assert_eq!(spec.eval(&[0.3, -1.2], &[0.3, -1.2]), spec.signal_var);
            assert_eq!(spec.eval(&[1.0, 2.0], &[0.5, 0.1]), spec.eval(&[0.5, 0.1], &[1.0, 2.0]));
        }
    }

    #[test]
    fn weighted_sum_matches_naive_loop() {
        let pts = array![[0.0, 0.0], [1.0, 0.5], [-0.3, 2.0], [0.7, 0.7], [2.0, -1.0], [0.1, 0.2], [3.0, 3.0], [1.5, 0.0], [0.9, -0.4], [-1.0, -1.0]];
        let w = array![0.5, -1.0, 2.0, 0.25, 1.5, -0.75, 0.1, 0.3, -0.2, 1.0];
        let block = PredictorBlock::new(pts.view());
        let padded = block.pad(w.view());
        let mut scratch = block.scratch();
        for family in [KernelFamily::Matern32, KernelFamily::SquaredExponential] {
            let spec = KernelSpec::new(family, 1.7, 0.8);
            let x = [0.4, 0.1];
            let naive: f64 = pts
                .rows()
                .into_iter()
                .zip(w.iter())
                .map(|(p, &wj)| wj * spec.eval(&x, &p.to_vec()))
                .sum();
            let fast = block.weighted_sum(&spec, &padded, &x, &mut scratch);
            assert!((naive - fast).abs() < 1e-13, "{naive} vs {fast}");
        }
    }

    #[test]
    fn distance_matrix_is_symmetric() {
        let pts = array![[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]];
        let d = sq_dist_matrix(pts.view());
        assert_eq!(d[[0, 1]], 25.0);
        assert_eq!(d[[1, 0]], 25.0);
        assert_eq!(d[[2, 2]], 0.0);
        assert_eq!(d[[1, 2]], 13.0);
    }
}
