//! Gaussian process regression: marginal likelihood, hyperparameter fitting
//! and posterior-mean prediction.

mod kernel;
mod optimize;

pub use kernel::{exp_fast, sq_dist_matrix, KernelFamily, KernelSpec, PredictorBlock};
pub use optimize::minimize_in_box;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_jittered_into, cholesky_solve, log_det_from_factor};

/// Relative size of the first diagonal jitter tried when `K + σ_P² I` does
/// not factorize; it is scaled by `trace / P` and escalated tenfold.
const JITTER_REL: f64 = 1e-10;
const JITTER_RETRIES: usize = 8;
/// Simplex spread of the negative log marginal likelihood at which a fit stops.
const FIT_TOLERANCE: f64 = 1e-6;

/// Kernel matrix `K(X, X)` plus `noise_var` on the diagonal.
pub fn kernel_matrix(kernel: &KernelSpec, x: ArrayView2<f64>, noise_var: f64) -> Array2<f64> {
    let mut k = sq_dist_matrix(x);
    k.mapv_inplace(|r2| kernel.eval_sq_dist(r2));
    k.diag_mut().mapv_inplace(|v| v + noise_var);
    k
}

fn factor(k: Array2<f64>) -> Result<Array2<f64>> {
    let n = k.nrows() as f64;
    let jitter0 = JITTER_REL * (k.diag().sum() / n).max(f64::MIN_POSITIVE);
    cholesky_jittered_into(k, jitter0, JITTER_RETRIES)
}

/// `−½ log det(K + σ_P² I) − ½ yᵀ (K + σ_P² I)⁻¹ y`, without the `2π` term.
pub fn log_marginal_likelihood(
    kernel: &KernelSpec,
    noise_var: f64,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<f64> {
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(Error::invalid("predictors and targets must be non-empty and of equal length"));
    }
    lml_from_matrix(kernel_matrix(kernel, x, noise_var), y)
}

fn lml_from_matrix(k: Array2<f64>, y: ArrayView1<f64>) -> Result<f64> {
    let l = factor(k)?;
    let alpha = cholesky_solve(&l, y);
    Ok(-0.5 * log_det_from_factor(&l) - 0.5 * y.dot(&alpha))
}

/// Settings for [`fit_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub family: KernelFamily,
    /// Number of local searches; the first starts from the scale-aware
    /// default, the rest from random points of the box.
    pub starts: usize,
    pub seed: u64,
    /// Hyperparameters are searched on the first `subset` rows only (all rows
    /// when `None`). Weights always use every row.
    pub subset: Option<usize>,
    pub max_iters: u64,
    /// Remove the target mean before regression and add it back on prediction.
    pub center: bool,
}

impl FitOptions {
    pub fn new(family: KernelFamily) -> Self {
        Self {
            family,
            starts: 5,
            seed: 0,
            subset: None,
            max_iters: 100,
            center: true,
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn subset(mut self, subset: Option<usize>) -> Self {
        self.subset = subset;
        self
    }

    pub fn starts(mut self, starts: usize) -> Self {
        self.starts = starts;
        self
    }

    pub fn max_iters(mut self, max_iters: u64) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn center(mut self, center: bool) -> Self {
        self.center = center;
        self
    }
}

/// Log-likelihood values recorded during a hyperparameter search, all on
/// the same search rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub start_values: Vec<f64>,
    pub best_value: f64,
}

/// A fitted regression: `f(x) = mean + Σ_p ω_p k(x, x_p)`.
#[derive(Debug, Clone)]
pub struct GprModel {
    predictors: Array2<f64>,
    block: PredictorBlock,
    weights: Array1<f64>,
    padded_weights: Vec<f64>,
    kernel: KernelSpec,
    noise_var: f64,
    mean: f64,
    chol: Option<Array2<f64>>,
    report: Option<FitReport>,
}

impl GprModel {
    /// Solves for the weights with fixed hyperparameters.
    pub fn with_hyperparameters(
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        kernel: KernelSpec,
        noise_var: f64,
        center: bool,
    ) -> Result<Self> {
        check_training_data(x, y)?;
        let mean = if center { y.mean().unwrap_or(0.0) } else { 0.0 };
        let yc = y.mapv(|v| v - mean);
        let l = factor(kernel_matrix(&kernel, x, noise_var))?;
        let weights = cholesky_solve(&l, yc.view());
        Ok(Self::assemble(x, weights, kernel, noise_var, mean, Some(l), None))
    }

    /// Model with zero weights that predicts `value` everywhere.
    pub fn constant(x: ArrayView2<f64>, kernel: KernelSpec, value: f64) -> Self {
        Self::assemble(x, Array1::zeros(x.nrows()), kernel, 0.0, value, None, None)
    }

    fn assemble(
        x: ArrayView2<f64>,
        weights: Array1<f64>,
        kernel: KernelSpec,
        noise_var: f64,
        mean: f64,
        chol: Option<Array2<f64>>,
        report: Option<FitReport>,
    ) -> Self {
        let block = PredictorBlock::new(x);
        let padded_weights = block.pad(weights.view());
        Self {
            predictors: x.to_owned(),
            block,
            weights,
            padded_weights,
            kernel,
            noise_var,
            mean,
            chol,
            report,
        }
    }

    pub fn predictors(&self) -> &Array2<f64> {
        &self.predictors
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    /// Constant added to the kernel expansion (the training-target mean when
    /// centering is on).
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Lower Cholesky factor of `K + σ_P² I`; `None` for constant models.
    pub fn chol_factor(&self) -> Option<&Array2<f64>> {
        self.chol.as_ref()
    }

    pub fn fit_report(&self) -> Option<&FitReport> {
        self.report.as_ref()
    }

    pub fn is_constant(&self) -> bool {
        self.chol.is_none()
    }

    /// Scratch buffer for [`GprModel::predict_with`].
    pub fn scratch(&self) -> Vec<f64> {
        self.block.scratch()
    }

    /// Posterior mean at one point, reusing `scratch`.
    pub fn predict_with(&self, x: &[f64], scratch: &mut [f64]) -> f64 {
        if self.chol.is_none() {
            return self.mean;
        }
        self.mean + self.block.weighted_sum(&self.kernel, &self.padded_weights, x, scratch)
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        let mut scratch = self.scratch();
        self.predict_with(x, &mut scratch)
    }

    /// Posterior means at the rows of `x`.
    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut scratch = self.scratch();
        let mut buf = vec![0.0; x.ncols()];
        x.rows()
            .into_iter()
            .map(|row| {
                for (b, &v) in buf.iter_mut().zip(row.iter()) {
                    *b = v;
                }
                self.predict_with(&buf, &mut scratch)
            })
            .collect()
    }
}

fn check_training_data(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::invalid("predictor rows and targets differ in length"));
    }
    if x.nrows() == 0 {
        return Err(Error::invalid("no training points"));
    }
    if !y.iter().chain(x.iter()).all(|v| v.is_finite()) {
        return Err(Error::invalid("training data must be finite"));
    }
    Ok(())
}

/// Median of the pairwise Euclidean distances between rows (at most the
/// first 1000 rows are used).
pub fn median_pairwise_distance(x: ArrayView2<f64>) -> f64 {
    let n = x.nrows().min(1000);
    let d2 = sq_dist_matrix(x.slice(s![..n, ..]));
    let mut dists: Vec<f64> = (0..n)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| d2[[i, j]].sqrt())
        .collect();
    if dists.is_empty() {
        return 0.0;
    }
    let mid = dists.len() / 2;
    let (_, m, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    *m
}

/// Fits with default options and the given seed.
pub fn fit(x: ArrayView2<f64>, y: ArrayView1<f64>, family: KernelFamily, seed: u64) -> Result<GprModel> {
    fit_with(x, y, &FitOptions::new(family).seed(seed))
}

/// Maximum-likelihood fit of `(σ_f², σ_l, σ_P²)` followed by the weight solve.
///
/// Constant targets yield a constant model with zero weights.
pub fn fit_with(x: ArrayView2<f64>, y: ArrayView1<f64>, opts: &FitOptions) -> Result<GprModel> {
    check_training_data(x, y)?;
    if x.nrows() < 2 {
        return Err(Error::invalid("fitting needs at least two points"));
    }
    let placeholder = KernelSpec::new(opts.family, 1.0, 1.0);
    if y.iter().all(|&v| v == y[0]) {
        let value = if opts.center { y[0] } else { 0.0 };
        return Ok(GprModel::constant(x, placeholder, value));
    }
    let mean = if opts.center { y.mean().unwrap_or(0.0) } else { 0.0 };
    let yc = y.mapv(|v| v - mean);
    let var_y = y.var(0.0);
    let scale = if var_y > 0.0 { var_y } else { yc.dot(&yc) / yc.len() as f64 };
    let rows = opts.subset.unwrap_or(x.nrows()).clamp(2, x.nrows());
    let xs = x.slice(s![..rows, ..]);
    let ys = yc.slice(s![..rows]);
    let mut dist = median_pairwise_distance(xs);
    if !(dist > 0.0) {
        dist = 1.0;
    }

    // log(σ_l), log(σ_f²), log(σ_P²)
    let lower = [(1e-2 * dist).ln(), (1e-4 * scale).ln(), (1e-8 * scale).ln()];
    let upper = [(1e2 * dist).ln(), (1e4 * scale).ln(), scale.ln()];
    let r2 = sq_dist_matrix(xs);
    let objective = |theta: &[f64]| {
        let kernel = KernelSpec::new(opts.family, theta[1].exp(), theta[0].exp());
        let mut k = r2.mapv(|v| kernel.eval_sq_dist(v));
        k.diag_mut().mapv_inplace(|v| v + theta[2].exp());
        lml_from_matrix(k, ys).ok().map(|v| -v)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut start_values = Vec::with_capacity(opts.starts);
    for start in 0..opts.starts.max(1) {
        let x0: Vec<f64> = if start == 0 {
            vec![dist.ln(), scale.ln(), (1e-6 * scale).ln()]
        } else {
            (0..3).map(|i| rng.random_range(lower[i]..=upper[i])).collect()
        };
        start_values.push(objective(&x0).map_or(f64::NEG_INFINITY, |v| -v));
        let (theta, value) = minimize_in_box(&objective, &x0, &lower, &upper, opts.max_iters, FIT_TOLERANCE);
        if best.as_ref().is_none_or(|(_, b)| value < *b) {
            best = Some((theta, value));
        }
    }
    let (theta, value) = best.expect("at least one start");
    if value >= 1e299 {
        return Err(Error::NotPositiveDefinite);
    }
    let kernel = KernelSpec::new(opts.family, theta[1].exp(), theta[0].exp());
    let noise_var = theta[2].exp();
    let l = factor(kernel_matrix(&kernel, x, noise_var))?;
    let weights = cholesky_solve(&l, yc.view());
    let report = FitReport {
        start_values,
        best_value: -value,
    };
    Ok(GprModel::assemble(x, weights, kernel, noise_var, mean, Some(l), Some(report)))
}
