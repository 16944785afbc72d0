//! European basket prices: exact Gaussian integration of a squared-exponential
//! surrogate, quasi-Monte Carlo, and the closed form for the geometric put.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gpr::{exp_fast, fit_with, FitOptions, GprModel, KernelFamily, KernelSpec, PredictorBlock};
use crate::linalg::{cholesky_jittered, solve_lower_mat};
use crate::lowdiscrepancy::{normal_cdf, HaltonConfig};
use crate::market::{ModelParams, Payoff, PayoffKind};

/// Expectation of a squared-exponential GPR surrogate under a Gaussian shift:
/// `E[f(z + Y)]` with `Y ~ N(0, C)`, evaluated exactly.
///
/// With `A = C + σ_l² I` the integral is
/// `mean + σ_f² σ_l^d / √det A · Σ_q ω_q exp(−½ (z_q − z)ᵀ A⁻¹ (z_q − z))`.
/// The predictors are stored already multiplied by `L⁻¹` (`A = L Lᵀ`), so each
/// evaluation costs one small triangular solve plus a kernel sum.
#[derive(Debug, Clone)]
pub struct GaussianSmoother {
    chol: Array2<f64>,
    block: PredictorBlock,
    weights: Vec<f64>,
    /// `ln(σ_f² σ_l^d / √det A)`.
    log_scale: f64,
    mean: f64,
    constant: bool,
}

const UNIT_SE: KernelSpec = KernelSpec {
    family: KernelFamily::SquaredExponential,
    signal_var: 1.0,
    length_scale: 1.0,
};

impl GaussianSmoother {
    pub fn new(model: &GprModel, cov: ArrayView2<f64>) -> Result<Self> {
        let kernel = model.kernel();
        if kernel.family != KernelFamily::SquaredExponential {
            return Err(Error::invalid("exact integration needs a squared-exponential kernel"));
        }
        let d = model.predictors().ncols();
        if cov.dim() != (d, d) {
            return Err(Error::invalid("covariance dimension does not match the predictors"));
        }
        let sl2 = kernel.length_scale * kernel.length_scale;
        let mut a = cov.to_owned();
        a.diag_mut().mapv_inplace(|v| v + sl2);
        let chol = cholesky_jittered(&a, 0.0, 0)?;
        let half_log_det: f64 = chol.diag().iter().map(|v| v.ln()).sum();
        let log_scale = kernel.signal_var.ln() + d as f64 * kernel.length_scale.ln() - half_log_det;
        let transformed = solve_lower_mat(&chol, model.predictors().t());
        let block = PredictorBlock::from_coords(transformed.view());
        let weights = block.pad(model.weights().view());
        Ok(Self {
            chol,
            block,
            weights,
            log_scale,
            mean: model.mean(),
            constant: model.is_constant(),
        })
    }

    /// Buffers for [`GaussianSmoother::eval_with`]: kernel scratch and a
    /// `d`-vector.
    pub fn scratch(&self) -> (Vec<f64>, Vec<f64>) {
        (self.block.scratch(), vec![0.0; self.chol.nrows()])
    }

    pub fn eval_with(&self, z: &[f64], scratch: &mut (Vec<f64>, Vec<f64>)) -> f64 {
        if self.constant {
            return self.mean;
        }
        let (kbuf, w) = scratch;
        // forward substitution w = L⁻¹ z
        let d = w.len();
        for i in 0..d {
            let row = self.chol.row(i);
            let mut acc = z[i];
            for j in 0..i {
                acc -= row[j] * w[j];
            }
            w[i] = acc / row[i];
        }
        let sum = self.block.weighted_sum(&UNIT_SE, &self.weights, w, kbuf);
        self.mean + self.log_scale.exp() * sum
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.eval_with(z, &mut self.scratch())
    }
}

/// Settings of the European surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct EiOptions {
    /// Number of surrogate points `Q`.
    pub points: usize,
    /// Use Halton coordinates directly as shocks instead of mapping them
    /// through the normal quantile first.
    pub raw_halton: bool,
    pub fit: FitOptions,
}

impl EiOptions {
    pub fn new(points: usize) -> Self {
        Self {
            points,
            raw_halton: false,
            fit: FitOptions::new(KernelFamily::SquaredExponential).subset(Some(500)),
        }
    }
}

/// Squared-exponential surrogate of the terminal payoff in log-shock space,
/// with the integration factor cached for every registered date.
#[derive(Debug, Clone)]
pub struct EiSurrogate {
    params: ModelParams,
    z_points: Array2<f64>,
    targets: Array1<f64>,
    gpr: GprModel,
    pi: Array2<f64>,
    dates: Vec<(f64, GaussianSmoother)>,
}

/// Fits the surrogate and prepares the factors for `t = 0` and every date in
/// `dates` (all in `[0, T]`).
pub fn build_ei_surrogate(params: &ModelParams, payoff: &Payoff, dates: &[f64], opts: &EiOptions) -> Result<EiSurrogate> {
    let q = opts.points;
    if q < 2 {
        return Err(Error::invalid("the surrogate needs at least two points"));
    }
    let d = params.dim();
    let big_t = params.maturity();
    let halton = HaltonConfig::with_default_leap(d)?;
    let h = if opts.raw_halton {
        halton.points(1, q)
    } else {
        halton.gaussian_points(1, q)
    };
    let mut z_points = h.dot(&params.shock_matrix().t());
    z_points.mapv_inplace(|v| v * big_t.sqrt());
    let drift = params.log_drift();
    let mut state = vec![0.0; d];
    let targets: Array1<f64> = z_points
        .rows()
        .into_iter()
        .map(|z| {
            for i in 0..d {
                state[i] = params.spot()[i] * (drift[i] * big_t + z[i]).exp();
            }
            payoff.eval(&state)
        })
        .collect();
    let gpr = fit_with(z_points.view(), targets.view(), &opts.fit)?;
    let pi = params.covariance();
    let mut surrogate = EiSurrogate {
        params: params.clone(),
        z_points,
        targets,
        gpr,
        pi,
        dates: Vec::new(),
    };
    surrogate.register(0.0)?;
    for &t in dates {
        if !(0.0..=big_t).contains(&t) {
            return Err(Error::invalid(format!("date {t} lies outside [0, T]")));
        }
        surrogate.register(t)?;
    }
    Ok(surrogate)
}

fn same_date(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()))
}

impl EiSurrogate {
    fn register(&mut self, t: f64) -> Result<()> {
        if self.dates.iter().any(|(s, _)| same_date(*s, t)) {
            return Ok(());
        }
        let tau = self.params.maturity() - t;
        let cov = self.pi.mapv(|v| v * tau);
        let smoother = GaussianSmoother::new(&self.gpr, cov.view())?;
        self.dates.push((t, smoother));
        Ok(())
    }

    pub fn z_points(&self) -> &Array2<f64> {
        &self.z_points
    }

    pub fn targets(&self) -> &Array1<f64> {
        &self.targets
    }

    pub fn gpr(&self) -> &GprModel {
        &self.gpr
    }

    pub fn pi_matrix(&self) -> &Array2<f64> {
        &self.pi
    }

    pub fn maturity(&self) -> f64 {
        self.params.maturity()
    }

    fn smoother(&self, t: f64) -> Result<&GaussianSmoother> {
        self.dates
            .iter()
            .find(|(s, _)| same_date(*s, t))
            .map(|(_, sm)| sm)
            .ok_or(Error::UncachedDate(t))
    }

    /// Price at date `t` (a registered date) in state `state`.
    pub fn price_at(&self, t: f64, state: &[f64]) -> Result<f64> {
        let sm = self.smoother(t)?;
        self.price_with(t, sm, state, &mut sm.scratch())
    }

    /// Prices for every row of `states` at date `t`.
    pub fn price_rows(&self, t: f64, states: ArrayView2<f64>) -> Result<Array1<f64>> {
        let sm = self.smoother(t)?;
        let mut scratch = sm.scratch();
        states
            .rows()
            .into_iter()
            .map(|row| self.price_with(t, sm, &row.to_vec(), &mut scratch))
            .collect()
    }

    fn price_with(&self, t: f64, sm: &GaussianSmoother, state: &[f64], scratch: &mut (Vec<f64>, Vec<f64>)) -> Result<f64> {
        let d = self.params.dim();
        if state.len() != d || state.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("state must be a positive vector of the model dimension"));
        }
        let drift = self.params.log_drift();
        let z: Vec<f64> = (0..d)
            .map(|i| (state[i] / self.params.spot()[i]).ln() - drift[i] * t)
            .collect();
        let disc = (-self.params.rate() * (self.params.maturity() - t)).exp();
        Ok(disc * sm.eval_with(&z, scratch))
    }
}

/// European price at inception from the surrogate.
pub fn ei_price_t0(s: &EiSurrogate) -> Result<f64> {
    s.price_at(0.0, s.params.spot())
}

/// European price at a registered date `t` in state `state`.
pub fn ei_price_t(s: &EiSurrogate, t: f64, state: &[f64]) -> Result<f64> {
    s.price_at(t, state)
}

/// Samples per block of the QMC loop.
const QMC_CHUNK: usize = 4096;

/// Discounted QMC estimate of `E[Ψ(S_T) | S_t = state]`.
///
/// Gaussians come from the leaped Halton sequence mapped through the normal
/// quantile; `seed` is the number of leading sequence points skipped.
pub fn qmc_european(params: &ModelParams, payoff: &Payoff, t: f64, state: &[f64], n_samples: usize, seed: u64) -> Result<f64> {
    let states = Array2::from_shape_vec((1, state.len()), state.to_vec()).map_err(|e| Error::invalid(e.to_string()))?;
    let out = qmc_european_batch(params, payoff, &[(t, states.view())], n_samples, seed)?;
    Ok(out[0][0])
}

/// QMC European prices for many `(date, states)` groups, sharing the
/// Gaussian draws across all of them. Result `k` holds one price per row of
/// group `k`.
pub fn qmc_european_batch(
    params: &ModelParams,
    payoff: &Payoff,
    groups: &[(f64, ArrayView2<f64>)],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Array1<f64>>> {
    if n_samples < 1000 {
        return Err(Error::invalid("QMC pricing needs at least 1000 samples"));
    }
    let d = params.dim();
    let big_t = params.maturity();
    for (t, states) in groups {
        if !(0.0..=big_t).contains(t) {
            return Err(Error::invalid(format!("date {t} lies outside [0, T]")));
        }
        if states.ncols() != d || states.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid("states must be positive with one column per asset"));
        }
    }
    let halton = HaltonConfig::with_default_leap(d)?.with_skip(seed);
    let shock = params.shock_matrix();
    let drift = params.log_drift();
    let n_chunks = n_samples.div_ceil(QMC_CHUNK);

    // Per-chunk payoff sums, reduced in chunk order for reproducibility.
    let partials: Vec<Vec<Vec<f64>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let first = c * QMC_CHUNK;
            let len = QMC_CHUNK.min(n_samples - first);
            let g = halton.gaussian_points(first as u64 + 1, len);
            // coordinate-major unit-time shocks, d x len
            let e = shock.dot(&g.t());
            let mut scaled = Array2::<f64>::zeros((d, len));
            let mut buf = vec![0.0; len];
            groups
                .iter()
                .map(|(t, states)| {
                    let tau = big_t - t;
                    if tau <= 0.0 {
                        return states.rows().into_iter().map(|r| payoff.eval_view(r) * len as f64).collect();
                    }
                    let sq = tau.sqrt();
                    chunk_sums(payoff, &e, sq, tau, &drift, states, &mut scaled, &mut buf)
                })
                .collect()
        })
        .collect();

    let mut out: Vec<Array1<f64>> = groups.iter().map(|(_, s)| Array1::zeros(s.nrows())).collect();
    for chunk in &partials {
        for (acc, sums) in out.iter_mut().zip(chunk) {
            for (a, v) in acc.iter_mut().zip(sums) {
                *a += v;
            }
        }
    }
    for (acc, (t, _)) in out.iter_mut().zip(groups) {
        let disc = (-params.rate() * (big_t - t)).exp();
        acc.mapv_inplace(|v| disc * v / n_samples as f64);
    }
    Ok(out)
}

/// Payoff sums over one chunk for every state of a group.
#[allow(clippy::too_many_arguments)]
fn chunk_sums(
    payoff: &Payoff,
    e: &Array2<f64>,
    sq: f64,
    tau: f64,
    drift: &[f64],
    states: &ArrayView2<f64>,
    scaled: &mut Array2<f64>,
    buf: &mut [f64],
) -> Vec<f64> {
    let d = e.nrows();
    let len = e.ncols();
    let k = payoff.strike;
    match payoff.kind {
        PayoffKind::GeometricPut => {
            // mean_i of the shocks, then one exponential per sample
            let mut g = vec![0.0; len];
            for row in e.rows() {
                for (gv, &v) in g.iter_mut().zip(row.iter()) {
                    *gv += v;
                }
            }
            let inv_d = 1.0 / d as f64;
            for gv in g.iter_mut() {
                *gv = exp_fast(sq * *gv * inv_d);
            }
            states
                .rows()
                .into_iter()
                .map(|x| {
                    let log_c: f64 = (0..d).map(|i| x[i].ln() + drift[i] * tau).sum::<f64>() * inv_d;
                    let c = log_c.exp();
                    lane_sum(g.iter().map(|&gv| (k - c * gv).max(0.0)), buf)
                })
                .collect()
        }
        PayoffKind::ArithmeticPut | PayoffKind::MaxCall => {
            for (mut srow, erow) in scaled.rows_mut().into_iter().zip(e.rows()) {
                for (sv, &ev) in srow.iter_mut().zip(erow.iter()) {
                    *sv = exp_fast(sq * ev);
                }
            }
            let is_put = payoff.kind == PayoffKind::ArithmeticPut;
            states
                .rows()
                .into_iter()
                .map(|x| {
                    let acc = &mut buf[..len];
                    acc.fill(if is_put { 0.0 } else { f64::NEG_INFINITY });
                    for i in 0..d {
                        let c = x[i] * (drift[i] * tau).exp();
                        let row = scaled.row(i);
                        let row = row.as_slice().expect("standard layout");
                        if is_put {
                            for (a, &v) in acc.iter_mut().zip(row) {
                                *a += c * v;
                            }
                        } else {
                            for (a, &v) in acc.iter_mut().zip(row) {
                                *a = a.max(c * v);
                            }
                        }
                    }
                    let inv_d = 1.0 / d as f64;
                    let mut lanes = [0.0f64; 8];
                    let mut chunks = acc.chunks_exact(8);
                    for ch in &mut chunks {
                        for l in 0..8 {
                            let v = if is_put { (k - ch[l] * inv_d).max(0.0) } else { (ch[l] - k).max(0.0) };
                            lanes[l] += v;
                        }
                    }
                    let tail: f64 = chunks
                        .remainder()
                        .iter()
                        .map(|&a| if is_put { (k - a * inv_d).max(0.0) } else { (a - k).max(0.0) })
                        .sum();
                    lanes.iter().sum::<f64>() + tail
                })
                .collect()
        }
    }
}

fn lane_sum(values: impl Iterator<Item = f64>, buf: &mut [f64]) -> f64 {
    let mut n = 0;
    for (b, v) in buf.iter_mut().zip(values) {
        *b = v;
        n += 1;
    }
    let mut lanes = [0.0f64; 8];
    let mut chunks = buf[..n].chunks_exact(8);
    for ch in &mut chunks {
        for l in 0..8 {
            lanes[l] += ch[l];
        }
    }
    lanes.iter().sum::<f64>() + chunks.remainder().iter().sum::<f64>()
}

/// Black–Scholes put with continuous dividend yield `q`.
pub fn black_scholes_put(spot: f64, strike: f64, rate: f64, q: f64, vol: f64, tau: f64) -> f64 {
    let fwd = spot * ((rate - q) * tau).exp();
    let disc = (-rate * tau).exp();
    let sd = vol * tau.sqrt();
    if sd <= 0.0 {
        return disc * (strike - fwd).max(0.0);
    }
    let d1 = ((fwd / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    disc * (strike * normal_cdf(-d2) - fwd * normal_cdf(-d1))
}

/// Effective volatility and dividend yield of the geometric mean of the assets.
pub fn geometric_reduction(params: &ModelParams) -> (f64, f64) {
    let d = params.dim() as f64;
    let var = params.covariance().sum() / (d * d);
    let mean_carry: f64 = params
        .dividends()
        .iter()
        .zip(params.vols())
        .map(|(q, s)| q + 0.5 * s * s)
        .sum::<f64>()
        / d;
    let r = params.rate();
    let eta = r - (r - mean_carry + 0.5 * var);
    (var.sqrt(), eta)
}

/// Exact price of the European geometric-mean put at `(t, state)`.
pub fn geometric_closed_form(params: &ModelParams, payoff: &Payoff, t: f64, state: &[f64]) -> Result<f64> {
    if payoff.kind != PayoffKind::GeometricPut {
        return Err(Error::WrongPayoff(payoff.kind));
    }
    if state.len() != params.dim() || state.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::invalid("state must be a positive vector of the model dimension"));
    }
    let (vol, eta) = geometric_reduction(params);
    let spot = (state.iter().map(|s| s.ln()).sum::<f64>() / state.len() as f64).exp();
    let tau = params.maturity() - t;
    Ok(black_scholes_put(spot, payoff.strike, params.rate(), eta, vol, tau))
}

/// Where European values come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EuropeanSource {
    /// Exact integration of the squared-exponential surrogate.
    EiFormula,
    /// Quasi-Monte Carlo.
    Qmc,
    /// The exact geometric-put formula (geometric puts only).
    GeometricClosedForm,
}

impl EuropeanSource {
    pub fn name(self) -> &'static str {
        match self {
            EuropeanSource::EiFormula => "ei-formula",
            EuropeanSource::Qmc => "qmc",
            EuropeanSource::GeometricClosedForm => "geometric-closed-form",
        }
    }
}

impl std::str::FromStr for EuropeanSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "ei" | "ei-formula" | "eiformula" => Ok(EuropeanSource::EiFormula),
            "qmc" => Ok(EuropeanSource::Qmc),
            "closed-form" | "geometric-closed-form" => Ok(EuropeanSource::GeometricClosedForm),
            other => Err(Error::invalid(format!("unknown European source '{other}'"))),
        }
    }
}

/// European values at `(0, S0)` and at every `(t_k, states_k)` group,
/// computed with one surrogate or one shared QMC pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EuropeanValues {
    pub at_spot: f64,
    pub groups: Vec<Array1<f64>>,
}

/// Settings for [`european_values`].
#[derive(Debug, Clone, PartialEq)]
pub struct EuropeanConfig {
    pub source: EuropeanSource,
    pub ei: EiOptions,
    pub qmc_samples: usize,
    pub qmc_seed: u64,
}

impl EuropeanConfig {
    pub fn new(source: EuropeanSource) -> Self {
        Self {
            source,
            ei: EiOptions::new(8000),
            qmc_samples: 1_000_000,
            qmc_seed: 0,
        }
    }
}

pub fn european_values(
    params: &ModelParams,
    payoff: &Payoff,
    groups: &[(f64, ArrayView2<f64>)],
    cfg: &EuropeanConfig,
) -> Result<EuropeanValues> {
    match cfg.source {
        EuropeanSource::EiFormula => {
            let dates: Vec<f64> = groups.iter().map(|(t, _)| *t).collect();
            let s = build_ei_surrogate(params, payoff, &dates, &cfg.ei)?;
            let at_spot = ei_price_t0(&s)?;
            let groups = groups
                .iter()
                .map(|(t, states)| s.price_rows(*t, *states))
                .collect::<Result<Vec<_>>>()?;
            Ok(EuropeanValues { at_spot, groups })
        }
        EuropeanSource::Qmc => {
            let spot = Array2::from_shape_vec((1, params.dim()), params.spot().to_vec()).expect("one row");
            let mut all: Vec<(f64, ArrayView2<f64>)> = vec![(0.0, spot.view())];
            all.extend(groups.iter().cloned());
            let mut out = qmc_european_batch(params, payoff, &all, cfg.qmc_samples, cfg.qmc_seed)?;
            let at_spot = out.remove(0)[0];
            Ok(EuropeanValues { at_spot, groups: out })
        }
        EuropeanSource::GeometricClosedForm => {
            let at_spot = geometric_closed_form(params, payoff, 0.0, params.spot())?;
            let groups = groups
                .iter()
                .map(|(t, states)| {
                    states
                        .rows()
                        .into_iter()
                        .map(|r| geometric_closed_form(params, payoff, *t, &r.to_vec()))
                        .collect::<Result<Array1<f64>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(EuropeanValues { at_spot, groups })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpr::GprModel;
    use ndarray::{array, Array};
    use ndarray_linalg::{Eigh, UPLO};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn basket(d: usize) -> ModelParams {
        ModelParams::symmetric(d, 100.0, 0.05, 0.0, 0.2, 0.2, 1.0).unwrap()
    }

    fn bs_put_textbook(s: f64, k: f64, r: f64, q: f64, v: f64, t: f64) -> f64 {
        let d1 = ((s / k).ln() + (r - q + 0.5 * v * v) * t) / (v * t.sqrt());
        let d2 = d1 - v * t.sqrt();
        k * (-r * t).exp() * normal_cdf(-d2) - s * (-q * t).exp() * normal_cdf(-d1)
    }

    /// Gauss–Hermite nodes and weights for `E[f(G)]`, `G ~ N(0,1)`, from the
    /// Golub–Welsch eigenproblem of the probabilists' Jacobi matrix.
    fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
        let mut j = Array2::<f64>::zeros((n, n));
        for k in 1..n {
            let b = (k as f64).sqrt();
            j[[k, k - 1]] = b;
            j[[k - 1, k]] = b;
        }
        let (vals, vecs) = j.eigh(UPLO::Lower).unwrap();
        let w = vecs.row(0).mapv(|v| v * v);
        (vals.to_vec(), w.to_vec())
    }

    #[test]
    fn gauss_hermite_integrates_moments() {
        let (x, w) = gauss_hermite(20);
        let m = |p: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(p)).sum::<f64>();
        assert!((m(0) - 1.0).abs() < 1e-13);
        assert!((m(2) - 1.0).abs() < 1e-12);
        assert!((m(4) - 3.0).abs() < 1e-11);
    }

    #[test]
    fn closed_form_reduces_to_black_scholes() {
        let p = ModelParams::new(vec![95.0], 0.03, vec![0.01], vec![0.25], array![[1.0]], 0.7).unwrap();
        let v = geometric_closed_form(&p, &Payoff::geometric_put(100.0), 0.0, &[95.0]).unwrap();
        let expected = bs_put_textbook(95.0, 100.0, 0.03, 0.01, 0.25, 0.7);
        assert!((v - expected).abs() < 1e-10);
    }

    #[test]
    fn reduced_volatility_by_hand() {
        let (vol, eta) = geometric_reduction(&basket(2));
        assert!((vol - 0.2 * 0.6f64.sqrt()).abs() < 1e-15);
        // η̂ = r − [r − σ²/2 + σ̂²/2]
        assert!((eta - (0.02 - 0.012)).abs() < 1e-15);
    }

    #[test]
    fn closed_form_benchmark_d2() {
        let v = geometric_closed_form(&basket(2), &Payoff::geometric_put(100.0), 0.0, &[100.0, 100.0]).unwrap();
        assert!((v - 4.18).abs() <= 0.01, "{v}");
    }

    #[test]
    fn closed_form_rejects_other_payoffs() {
        let r = geometric_closed_form(&basket(2), &Payoff::max_call(100.0), 0.0, &[100.0, 100.0]);
        assert_eq!(r, Err(Error::WrongPayoff(PayoffKind::MaxCall)));
    }

    #[test]
    fn qmc_zero_volatility_is_exact() {
        let p = basket(3).with_vols(vec![0.0; 3]).unwrap();
        let payoff = Payoff::arithmetic_put(110.0);
        let state = [90.0, 100.0, 105.0];
        let v = qmc_european(&p, &payoff, 0.25, &state, 2000, 0).unwrap();
        let tau: f64 = 0.75;
        let fwd: Vec<f64> = state.iter().map(|s| s * (0.05 * tau).exp()).collect();
        let expected = (-0.05 * tau).exp() * payoff.eval(&fwd);
        assert!((v - expected).abs() < 1e-10 * expected, "{v} vs {expected}");
    }

    #[test]
    fn qmc_matches_closed_form() {
        let payoff = Payoff::geometric_put(100.0);
        for d in [2, 5] {
            let p = basket(d);
            let exact = geometric_closed_form(&p, &payoff, 0.0, p.spot()).unwrap();
            let q = qmc_european(&p, &payoff, 0.0, p.spot(), 200_000, 0).unwrap();
            assert!((q / exact - 1.0).abs() < 2e-3, "d={d}: {q} vs {exact}");
        }
    }

    #[test]
    fn qmc_batch_matches_single_queries() {
        let p = basket(3);
        let payoff = Payoff::max_call(100.0);
        let states = array![[90.0, 100.0, 110.0], [100.0, 100.0, 100.0]];
        let batch = qmc_european_batch(&p, &payoff, &[(0.5, states.view())], 5000, 3).unwrap();
        for (k, row) in states.rows().into_iter().enumerate() {
            let single = qmc_european(&p, &payoff, 0.5, &row.to_vec(), 5000, 3).unwrap();
            assert!((batch[0][k] - single).abs() < 1e-12);
        }
    }

    #[test]
    fn qmc_error_shrinks_with_samples() {
        let p = basket(2);
        let payoff = Payoff::geometric_put(100.0);
        let exact = geometric_closed_form(&p, &payoff, 0.0, p.spot()).unwrap();
        let err = |n| (qmc_european(&p, &payoff, 0.0, p.spot(), n, 0).unwrap() - exact).abs();
        // loose check of the convergence rate: 64x more samples, at least 4x smaller error
        assert!(err(256_000) * 4.0 < err(4_000).max(1e-3), "{} {}", err(4_000), err(256_000));
    }

    #[test]
    fn qmc_rejects_small_sample_counts() {
        assert!(qmc_european(&basket(2), &Payoff::geometric_put(100.0), 0.0, &[100.0, 100.0], 10, 0).is_err());
    }

    #[test]
    fn zero_volatility_surrogate_is_constant() {
        let p = basket(2).with_vols(vec![0.0, 0.0]).unwrap();
        let payoff = Payoff::geometric_put(110.0);
        let s = build_ei_surrogate(&p, &payoff, &[], &EiOptions::new(50)).unwrap();
        assert!(s.z_points().iter().all(|&z| z == 0.0));
        assert!(s.gpr().is_constant());
        let fwd = 100.0 * 0.05f64.exp();
        let v = ei_price_t0(&s).unwrap();
        assert!((v - (-0.05f64).exp() * (110.0 - fwd)).abs() < 1e-12);
    }

    #[test]
    fn surrogate_reproduces_the_one_dimensional_put() {
        let p = ModelParams::new(vec![100.0], 0.05, vec![0.0], vec![0.2], array![[1.0]], 1.0).unwrap();
        // in the money at the forward, so the relative check is meaningful
        let payoff = Payoff::geometric_put(110.0);
        let s = build_ei_surrogate(&p, &payoff, &[], &EiOptions::new(500)).unwrap();
        assert_eq!(s.targets().len(), 500);
        assert!(s.targets().iter().all(|&u| u.is_finite() && u >= 0.0));
        let u0 = payoff.eval(&[100.0 * (0.05f64 - 0.02).exp()]);
        let pred = s.gpr().predict_one(&[0.0]);
        assert!((pred / u0 - 1.0).abs() < 5e-3, "{pred} vs {u0}");
    }

    #[test]
    fn inception_price_equals_dated_price_at_spot() {
        let p = basket(2);
        let payoff = Payoff::geometric_put(100.0);
        let s = build_ei_surrogate(&p, &payoff, &[0.5], &EiOptions::new(400)).unwrap();
        assert_eq!(ei_price_t0(&s).unwrap(), ei_price_t(&s, 0.0, p.spot()).unwrap());
        assert_eq!(ei_price_t(&s, 0.3, p.spot()), Err(Error::UncachedDate(0.3)));
    }

    #[test]
    fn dated_price_matches_closed_form_and_is_monotone() {
        let p = basket(2);
        let payoff = Payoff::geometric_put(100.0);
        let s = build_ei_surrogate(&p, &payoff, &[0.5], &EiOptions::new(2000)).unwrap();
        let v = ei_price_t(&s, 0.5, p.spot()).unwrap();
        let exact = geometric_closed_form(&p, &payoff, 0.5, p.spot()).unwrap();
        assert!((v / exact - 1.0).abs() < 0.01, "{v} vs {exact}");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let scale: f64 = 0.8 + 0.4 * rand::Rng::random::<f64>(&mut rng);
            let x = [100.0 * scale, 100.0 * scale];
            let up = [120.0 * scale, 120.0 * scale];
            assert!(ei_price_t(&s, 0.5, &up).unwrap() <= ei_price_t(&s, 0.5, &x).unwrap());
        }
    }

    #[test]
    fn smoother_matches_gauss_hermite_quadrature() {
        // a surrogate fitted to an arbitrary smooth target, integrated two ways
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 1..=3usize {
            let x: Array2<f64> = Array::from_shape_fn((40, d), |_| { let g: f64 = StandardNormal.sample(&mut rng); 0.3 * g });
            let y = x.map_axis(ndarray::Axis(1), |r| (r.sum() * 2.0f64).sin() + 1.0);
            let kernel = KernelSpec::new(KernelFamily::SquaredExponential, 0.8, 0.4);
            let model = GprModel::with_hyperparameters(x.view(), y.view(), kernel, 1e-6, true).unwrap();
            let cov = Array2::from_shape_fn((d, d), |(i, j)| if i == j { 0.04 } else { 0.01 });
            let sm = GaussianSmoother::new(&model, cov.view()).unwrap();
            let z0 = vec![0.05; d];
            let exact = sm.eval(&z0);
            // quadrature on the tensor grid, shocks mapped by the Cholesky root of cov
            let root = cholesky_jittered(&cov, 0.0, 0).unwrap();
            let (nodes, weights) = gauss_hermite(30);
            let n = nodes.len();
            let mut total = 0.0;
            let mut idx = vec![0usize; d];
            loop {
                let g: Vec<f64> = idx.iter().map(|&k| nodes[k]).collect();
                let w: f64 = idx.iter().map(|&k| weights[k]).product();
                let z: Vec<f64> = (0..d).map(|i| z0[i] + (0..=i).map(|j| root[[i, j]] * g[j]).sum::<f64>()).collect();
                total += w * model.predict_one(&z);
                let mut k = 0;
                while k < d {
                    idx[k] += 1;
                    if idx[k] < n {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
                if k == d {
                    break;
                }
            }
            assert!((exact / total - 1.0).abs() < 1e-3, "d={d}: {exact} vs {total}");
        }
    }

    #[test]
    fn formula_matches_qmc_integration_of_the_surrogate() {
        let p = basket(2);
        let payoff = Payoff::geometric_put(100.0);
        let s = build_ei_surrogate(&p, &payoff, &[], &EiOptions::new(1000)).unwrap();
        let exact = ei_price_t0(&s).unwrap();
        let halton = HaltonConfig::with_default_leap(2).unwrap().with_skip(7);
        let g = halton.gaussian_points(1, 200_000);
        let mut z = g.dot(&p.shock_matrix().t());
        z.mapv_inplace(|v| v * p.maturity().sqrt());
        let mean = s.gpr().predict(z.view()).mean().unwrap();
        let qmc = (-0.05f64).exp() * mean;
        assert!((exact / qmc - 1.0).abs() < 1e-3, "{exact} vs {qmc}");
    }

    #[test]
    fn source_names_parse() {
        for s in [EuropeanSource::EiFormula, EuropeanSource::Qmc, EuropeanSource::GeometricClosedForm] {
            assert_eq!(s.name().parse::<EuropeanSource>().unwrap(), s);
        }
    }
}
