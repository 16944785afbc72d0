//! Multi-asset Black-Scholes model, payoffs and state-point clouds.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::cholesky_jittered;
use crate::lowdiscrepancy::HaltonConfig;

/// Risk-neutral parameters of a `d`-asset Black-Scholes market.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    spot: Vec<f64>,
    rate: f64,
    dividends: Vec<f64>,
    vols: Vec<f64>,
    corr: Array2<f64>,
    maturity: f64,
    chol: Array2<f64>,
}

impl ModelParams {
    pub fn new(
        spot: Vec<f64>,
        rate: f64,
        dividends: Vec<f64>,
        vols: Vec<f64>,
        corr: Array2<f64>,
        maturity: f64,
    ) -> Result<Self> {
        let d = spot.len();
        if d == 0 {
            return Err(Error::invalid("at least one asset is required"));
        }
        if dividends.len() != d || vols.len() != d || corr.dim() != (d, d) {
            return Err(Error::invalid(format!(
                "dimension mismatch: spot {d}, dividends {}, vols {}, corr {:?}",
                dividends.len(),
                vols.len(),
                corr.dim()
            )));
        }
        if spot.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::invalid("spot prices must be positive"));
        }
        // Zero volatility is accepted as the degenerate deterministic market.
        if vols.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid("volatilities must be nonnegative"));
        }
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(Error::invalid("maturity must be positive"));
        }
        if !rate.is_finite() || dividends.iter().any(|q| !q.is_finite()) {
            return Err(Error::invalid("rate and dividends must be finite"));
        }
        let chol = cholesky_root(&corr)?;
        Ok(Self {
            spot,
            rate,
            dividends,
            vols,
            corr,
            maturity,
            chol,
        })
    }

    /// Identical assets with a common pairwise correlation.
    pub fn symmetric(
        dim: usize,
        spot: f64,
        rate: f64,
        dividend: f64,
        vol: f64,
        rho: f64,
        maturity: f64,
    ) -> Result<Self> {
        let corr = Array2::from_shape_fn((dim, dim), |(i, j)| if i == j { 1.0 } else { rho });
        Self::new(vec![spot; dim], rate, vec![dividend; dim], vec![vol; dim], corr, maturity)
    }

    pub fn dim(&self) -> usize {
        self.spot.len()
    }
    pub fn spot(&self) -> &[f64] {
        &self.spot
    }
    pub fn rate(&self) -> f64 {
        self.rate
    }
    pub fn dividends(&self) -> &[f64] {
        &self.dividends
    }
    pub fn vols(&self) -> &[f64] {
        &self.vols
    }
    pub fn corr(&self) -> &Array2<f64> {
        &self.corr
    }
    pub fn maturity(&self) -> f64 {
        self.maturity
    }
    /// Lower Cholesky root Σ of the correlation matrix.
    pub fn chol(&self) -> &Array2<f64> {
        &self.chol
    }

    /// Per-asset log drift `r - η_i - σ_i²/2`.
    pub fn log_drift(&self) -> Vec<f64> {
        self.dividends
            .iter()
            .zip(&self.vols)
            .map(|(q, s)| self.rate - q - 0.5 * s * s)
            .collect()
    }

    /// Covariance of the log-returns per unit time, `Π_ij = ρ_ij σ_i σ_j`.
    pub fn covariance(&self) -> Array2<f64> {
        let d = self.dim();
        Array2::from_shape_fn((d, d), |(i, j)| self.corr[[i, j]] * self.vols[i] * self.vols[j])
    }

    /// Rows `σ_i Σ_i`: maps a standard Gaussian vector to unit-time log shocks.
    pub fn shock_matrix(&self) -> Array2<f64> {
        let mut m = self.chol.clone();
        for (mut row, &s) in m.rows_mut().into_iter().zip(&self.vols) {
            row.mapv_inplace(|v| v * s);
        }
        m
    }

    /// A copy with different spot prices (same market otherwise).
    pub fn with_spot(&self, spot: Vec<f64>) -> Result<Self> {
        if spot.len() != self.dim() || spot.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("spot vector must be positive with matching length"));
        }
        let mut out = self.clone();
        out.spot = spot;
        Ok(out)
    }

    /// A copy with different volatilities.
    pub fn with_vols(&self, vols: Vec<f64>) -> Result<Self> {
        Self::new(
            self.spot.clone(),
            self.rate,
            self.dividends.clone(),
            vols,
            self.corr.clone(),
            self.maturity,
        )
    }
}

/// Lower Cholesky root of a correlation matrix.
///
/// Validates symmetry, unit diagonal and the entry range, then factorizes,
/// escalating a `1e-12 I` jitter up to three times on failure.
pub fn cholesky_root(corr: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, m) = corr.dim();
    if n != m || n == 0 {
        return Err(Error::invalid("correlation matrix must be square and non-empty"));
    }
    for i in 0..n {
        if (corr[[i, i]] - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("correlation matrix must have a unit diagonal"));
        }
        for j in 0..i {
            let c = corr[[i, j]];
            if !(-1.0..=1.0).contains(&c) || (c - corr[[j, i]]).abs() > 1e-12 {
                return Err(Error::invalid("correlation matrix must be symmetric with entries in [-1, 1]"));
            }
        }
    }
    cholesky_jittered(corr, 1e-12, 3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayoffKind {
    GeometricPut,
    ArithmeticPut,
    MaxCall,
}

impl PayoffKind {
    pub fn name(self) -> &'static str {
        match self {
            PayoffKind::GeometricPut => "geometric-put",
            PayoffKind::ArithmeticPut => "arithmetic-put",
            PayoffKind::MaxCall => "max-call",
        }
    }
}

impl std::str::FromStr for PayoffKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "geometric-put" | "geometricput" | "geo-put" => Ok(PayoffKind::GeometricPut),
            "arithmetic-put" | "arithmeticput" | "ari-put" => Ok(PayoffKind::ArithmeticPut),
            "max-call" | "maxcall" => Ok(PayoffKind::MaxCall),
            other => Err(Error::invalid(format!("unknown payoff '{other}'"))),
        }
    }
}

/// Exercise cashflow Ψ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Payoff {
    pub kind: PayoffKind,
    pub strike: f64,
}

impl Payoff {
    pub fn new(kind: PayoffKind, strike: f64) -> Result<Self> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::invalid("strike must be positive"));
        }
        Ok(Self { kind, strike })
    }

    pub fn geometric_put(strike: f64) -> Self {
        Self { kind: PayoffKind::GeometricPut, strike }
    }

    pub fn arithmetic_put(strike: f64) -> Self {
        Self { kind: PayoffKind::ArithmeticPut, strike }
    }

    pub fn max_call(strike: f64) -> Self {
        Self { kind: PayoffKind::MaxCall, strike }
    }

    pub fn eval(&self, state: &[f64]) -> f64 {
        let d = state.len() as f64;
        let v = match self.kind {
            PayoffKind::GeometricPut => {
                let mean_log = state.iter().map(|s| s.ln()).sum::<f64>() / d;
                self.strike - mean_log.exp()
            }
            PayoffKind::ArithmeticPut => self.strike - state.iter().sum::<f64>() / d,
            PayoffKind::MaxCall => state.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - self.strike,
        };
        v.max(0.0)
    }

    pub fn eval_view(&self, state: ArrayView1<f64>) -> f64 {
        match state.as_slice() {
            Some(s) => self.eval(s),
            None => self.eval(&state.to_vec()),
        }
    }

    /// Evaluates every row of a point matrix.
    pub fn eval_rows(&self, points: ArrayView2<f64>) -> Array1<f64> {
        points.rows().into_iter().map(|r| self.eval_view(r)).collect()
    }
}

/// Asset-price states at one exercise date, one point per row.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Array2<f64>,
    pub time_index: usize,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }
}

/// Log shocks `√t σ_i Σ_i Φ⁻¹(H^p)` for `count` Halton points.
pub fn design_shocks(params: &ModelParams, t: f64, count: usize, halton: &HaltonConfig) -> Result<Array2<f64>> {
    if halton.dim() != params.dim() {
        return Err(Error::invalid("Halton dimension must equal the number of assets"));
    }
    let gauss = halton.gaussian_points(1, count);
    let mut shocks = gauss.dot(&params.shock_matrix().t());
    shocks.mapv_inplace(|v| v * t.sqrt());
    Ok(shocks)
}

/// Maps log shocks at date `t` to asset prices `S0 exp(drift t + z)`.
pub fn shocks_to_states(params: &ModelParams, t: f64, shocks: ArrayView2<f64>) -> Array2<f64> {
    let drift = params.log_drift();
    let mut states = shocks.to_owned();
    for mut row in states.rows_mut() {
        for (i, v) in row.iter_mut().enumerate() {
            *v = params.spot[i] * (drift[i] * t + *v).exp();
        }
    }
    states
}

/// Inverse of [`shocks_to_states`] for a single state.
pub fn state_to_shock(params: &ModelParams, t: f64, state: &[f64]) -> Vec<f64> {
    let drift = params.log_drift();
    state
        .iter()
        .enumerate()
        .map(|(i, &s)| (s / params.spot[i]).ln() - drift[i] * t)
        .collect()
}

/// Design points at date index `n` (time `t`), distributed like `S_t`
/// through Halton points pushed into Gaussian space.
pub fn design_points(
    params: &ModelParams,
    n: usize,
    t: f64,
    count: usize,
    halton: &HaltonConfig,
) -> Result<PointCloud> {
    if count < 2 {
        return Err(Error::invalid("at least two design points are required"));
    }
    if !(t > 0.0) {
        return Err(Error::invalid("design points need a positive date"));
    }
    let shocks = design_shocks(params, t, count, halton)?;
    Ok(PointCloud {
        points: shocks_to_states(params, t, shocks.view()),
        time_index: n,
    })
}

/// One-step successors of a single state: row `m` of the result is
/// `x_i exp(drift_i dt + √dt σ_i Σ_i G_m)`.
pub fn propagate_point(
    x: &[f64],
    params: &ModelParams,
    dt: f64,
    gaussians: ArrayView2<f64>,
) -> Array2<f64> {
    let shock = params.shock_matrix();
    let drift = params.log_drift();
    let mut out = gaussians.dot(&shock.t());
    let sq = dt.sqrt();
    for mut row in out.rows_mut() {
        for (i, v) in row.iter_mut().enumerate() {
            *v = x[i] * (drift[i] * dt + sq * *v).exp();
        }
    }
    out
}

/// Successors for every point of a cloud; `gaussians[p]` holds the `M x d`
/// draws for point `p`. Output block `p` occupies rows `p*M .. (p+1)*M`.
pub fn propagate(
    cloud: &PointCloud,
    params: &ModelParams,
    dt: f64,
    gaussians: &[Array2<f64>],
) -> Result<Array2<f64>> {
    if gaussians.len() != cloud.len() {
        return Err(Error::invalid("one Gaussian block per cloud point is required"));
    }
    let blocks: Vec<Array2<f64>> = cloud
        .points
        .rows()
        .into_iter()
        .zip(gaussians)
        .map(|(x, g)| propagate_point(&x.to_vec(), params, dt, g.view()))
        .collect();
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn two_asset() -> ModelParams {
        ModelParams::symmetric(2, 100.0, 0.05, 0.0, 0.2, 0.2, 1.0).unwrap()
    }

    #[test]
    fn cholesky_of_identity_is_identity() {
        let id = Array2::<f64>::eye(3);
        assert_eq!(cholesky_root(&id).unwrap(), id);
    }

    #[test]
    fn cholesky_two_by_two_by_hand() {
        let l = cholesky_root(&array![[1.0, 0.2], [0.2, 1.0]]).unwrap();
        assert!((l[[0, 0]] - 1.0).abs() < 1e-15);
        assert_eq!(l[[0, 1]], 0.0);
        assert!((l[[1, 0]] - 0.2).abs() < 1e-15);
        assert!((l[[1, 1]] - 0.96f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cholesky_reconstructs_equicorrelated() {
        for (d, tol) in [(5usize, 1e-12), (100, 1e-10)] {
            let p = ModelParams::symmetric(d, 100.0, 0.05, 0.0, 0.2, 0.2, 1.0).unwrap();
            let rec = p.chol().dot(&p.chol().t());
            let err = (&rec - p.corr()).mapv(f64::abs).fold(0.0f64, |a, &b| a.max(b));
            assert!(err < tol, "d={d} err={err}");
            assert!(p.chol().diag().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn invalid_correlations_are_rejected() {
        assert!(cholesky_root(&array![[1.0, 0.5], [0.4, 1.0]]).is_err());
        assert!(cholesky_root(&array![[2.0, 0.0], [0.0, 1.0]]).is_err());
        assert_eq!(
            cholesky_root(&array![[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]]),
            Err(Error::NotPositiveDefinite)
        );
        // Perfect correlation sits on the boundary and is accepted through jitter.
        assert!(cholesky_root(&array![[1.0, 1.0], [1.0, 1.0]]).is_ok());
    }

    #[test]
    fn model_validation() {
        let corr = Array2::eye(2);
        assert!(ModelParams::new(vec![100.0, -1.0], 0.05, vec![0.0; 2], vec![0.2; 2], corr.clone(), 1.0).is_err());
        assert!(ModelParams::new(vec![100.0; 2], 0.05, vec![0.0; 2], vec![0.2; 2], corr.clone(), 0.0).is_err());
        assert!(ModelParams::new(vec![100.0; 2], 0.05, vec![0.0; 3], vec![0.2; 2], corr, 1.0).is_err());
    }

    #[test]
    fn payoff_examples() {
        assert!(Payoff::geometric_put(100.0).eval(&[100.0; 7]) < 1e-12);
        assert_eq!(Payoff::arithmetic_put(100.0).eval(&[80.0, 120.0]), 0.0);
        assert_eq!(Payoff::max_call(100.0).eval(&[90.0, 110.0, 95.0]), 10.0);
        assert!((Payoff::geometric_put(100.0).eval(&[50.0, 200.0]) - 0.0).abs() < 1e-12);
        assert!((Payoff::geometric_put(100.0).eval(&[25.0, 100.0]) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn design_points_degenerate_diffusion() {
        let corr = Array2::eye(1);
        let p = ModelParams::new(vec![100.0], 0.0, vec![0.0], vec![0.0], corr, 1.0).unwrap();
        let cfg = HaltonConfig::with_default_leap(1).unwrap();
        let cloud = design_points(&p, 1, 0.5, 16, &cfg).unwrap();
        assert!(cloud.points.iter().all(|&v| v == 100.0));
    }

    #[test]
    fn first_design_point_by_hand() {
        let p = two_asset();
        let cfg = HaltonConfig::new(2, 0, 0).unwrap();
        let t = 0.3;
        let cloud = design_points(&p, 3, t, 2, &cfg).unwrap();
        let g1 = crate::lowdiscrepancy::inv_normal_cdf(0.5).unwrap();
        let g2 = crate::lowdiscrepancy::inv_normal_cdf(1.0 / 3.0).unwrap();
        let drift = 0.05 - 0.02;
        let x1 = 100.0 * (drift * t + t.sqrt() * 0.2 * g1).exp();
        let x2 = 100.0 * (drift * t + t.sqrt() * 0.2 * (0.2 * g1 + 0.96f64.sqrt() * g2)).exp();
        assert!((cloud.points[[0, 0]] - x1).abs() < 1e-12);
        assert!((cloud.points[[0, 1]] - x2).abs() < 1e-12);
        assert_eq!(cloud.time_index, 3);
    }

    #[test]
    fn design_points_follow_lognormal_marginals() {
        let p = ModelParams::new(
            vec![100.0, 80.0],
            0.05,
            vec![0.01, 0.03],
            vec![0.2, 0.35],
            array![[1.0, 0.2], [0.2, 1.0]],
            1.0,
        )
        .unwrap();
        let cfg = HaltonConfig::with_default_leap(2).unwrap();
        let t = 0.6;
        let cloud = design_points(&p, 6, t, 1000, &cfg).unwrap();
        let drift = p.log_drift();
        for i in 0..2 {
            let logs: Vec<f64> = cloud.points.column(i).iter().map(|x| (x / p.spot()[i]).ln()).collect();
            let mean = logs.iter().sum::<f64>() / logs.len() as f64;
            let se = p.vols()[i] * t.sqrt() / (logs.len() as f64).sqrt();
            assert!((mean - drift[i] * t).abs() < 3.0 * se, "coord {i}: {mean}");
        }
    }

    #[test]
    fn zero_shock_propagation_is_pure_drift() {
        let p = two_asset();
        let x = [90.0, 110.0];
        let g = Array2::zeros((3, 2));
        let out = propagate_point(&x, &p, 0.1, g.view());
        for row in out.rows() {
            assert_eq!(row[0], 90.0 * (0.03f64 * 0.1).exp());
            assert_eq!(row[1], 110.0 * (0.03f64 * 0.1).exp());
        }
    }

    #[test]
    fn scalar_propagation_by_hand() {
        let p = ModelParams::new(vec![100.0], 0.05, vec![0.0], vec![0.2], Array2::eye(1), 1.0).unwrap();
        let out = propagate_point(&[100.0], &p, 0.1, array![[1.0]].view());
        let expect = 100.0 * (0.003f64 + 0.2 * 0.1f64.sqrt()).exp();
        assert!((out[[0, 0]] - expect).abs() < 1e-12);
    }

    #[test]
    fn propagation_moments_and_martingale() {
        let p = two_asset();
        let m = 100_000;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g = Array2::from_shape_simple_fn((m, 2), || StandardNormal.sample(&mut rng));
        let dt = 0.1;
        let x = [100.0, 100.0];
        let out = propagate_point(&x, &p, dt, g.view());
        for i in 0..2 {
            let logs: Vec<f64> = out.column(i).iter().map(|v| (v / x[i]).ln()).collect();
            let mean = logs.iter().sum::<f64>() / m as f64;
            let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
            assert!((var / (0.04 * dt) - 1.0).abs() < 0.01, "variance {var}");

            let ratios: Vec<f64> = out.column(i).iter().map(|v| v / x[i]).collect();
            let rmean = ratios.iter().sum::<f64>() / m as f64;
            let rsd = (ratios.iter().map(|r| (r - rmean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
            let growth = (0.05f64 * dt).exp();
            assert!((rmean - growth).abs() < 3.0 * rsd / (m as f64).sqrt());
        }
        // log-return correlation
        let a: Vec<f64> = out.column(0).iter().map(|v| (v / 100.0).ln()).collect();
        let b: Vec<f64> = out.column(1).iter().map(|v| (v / 100.0).ln()).collect();
        let ma = a.iter().sum::<f64>() / m as f64;
        let mb = b.iter().sum::<f64>() / m as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (m - 1) as f64;
        assert!((cov / (0.04 * dt) - 0.2).abs() < 0.02);
    }

    #[test]
    fn propagate_is_deterministic_and_positive() {
        let p = two_asset();
        let cfg = HaltonConfig::with_default_leap(2).unwrap();
        let cloud = design_points(&p, 1, 0.1, 4, &cfg).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let blocks: Vec<Array2<f64>> = (0..4)
            .map(|_| Array2::from_shape_simple_fn((8, 2), || StandardNormal.sample(&mut rng)))
            .collect();
        let a = propagate(&cloud, &p, 0.1, &blocks).unwrap();
        let b = propagate(&cloud, &p, 0.1, &blocks).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), (32, 2));
        assert!(a.iter().all(|&v| v > 0.0));
    }
}
