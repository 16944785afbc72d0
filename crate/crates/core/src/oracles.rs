//! Lattice benchmarks: the one-dimensional CRR tree, the reduction of a
//! geometric basket to one asset, and the multi-asset Ekvall lattice.

use crate::error::{Error, Result};
use crate::market::{ModelParams, Payoff};

/// Largest dimension accepted by [`ekvall_price`].
pub const EKVALL_MAX_DIM: usize = 5;

/// Exercise style for [`crr_put_1d`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exercise {
    American,
    European,
}

/// Cox–Ross–Rubinstein binomial price of an American put on one asset with
/// continuous dividend yield `eta`.
pub fn crr_american_put_1d(spot: f64, strike: f64, r: f64, eta: f64, sigma: f64, maturity: f64, steps: usize) -> f64 {
    crr_put_1d(spot, strike, r, eta, sigma, maturity, steps, Exercise::American)
}

/// Cox–Ross–Rubinstein put with the given exercise style. A zero volatility
/// collapses the tree onto the forward path.
#[allow(clippy::too_many_arguments)]
pub fn crr_put_1d(
    spot: f64,
    strike: f64,
    r: f64,
    eta: f64,
    sigma: f64,
    maturity: f64,
    steps: usize,
    exercise: Exercise,
) -> f64 {
    let steps = steps.max(1);
    let dt = maturity / steps as f64;
    let (up, p) = if sigma > 0.0 {
        let up = (sigma * dt.sqrt()).exp();
        (up, (((r - eta) * dt).exp() - 1.0 / up) / (up - 1.0 / up))
    } else {
        (1.0, 0.5)
    };
    let growth = if sigma > 0.0 { 1.0 } else { ((r - eta) * dt).exp() };
    let disc = (-r * dt).exp();
    // node j at step n: spot * growth^n * up^(2j - n)
    let node = |n: usize, j: usize| spot * growth.powi(n as i32) * up.powi(2 * j as i32 - n as i32);
    let mut v: Vec<f64> = (0..=steps).map(|j| (strike - node(steps, j)).max(0.0)).collect();
    for n in (0..steps).rev() {
        for j in 0..=n {
            let cont = disc * (p * v[j + 1] + (1.0 - p) * v[j]);
            v[j] = match exercise {
                Exercise::American => cont.max(strike - node(n, j)),
                Exercise::European => cont,
            };
        }
    }
    v[0]
}

/// One-asset equivalent `(spot, vol, dividend)` of the geometric mean of the
/// basket: the log of the geometric mean has volatility `vol` and the same
/// drift as a single asset paying `dividend`.
pub fn geometric_to_1d(params: &ModelParams) -> (f64, f64, f64) {
    let d = params.dim();
    let (vols, corr) = (params.vols(), params.corr());
    let mut var = 0.0;
    for i in 0..d {
        for j in 0..d {
            var += corr[[i, j]] * vols[i] * vols[j];
        }
    }
    var /= (d * d) as f64;
    let r = params.rate();
    let log_drift = (0..d)
        .map(|i| r - params.dividends()[i] - 0.5 * vols[i] * vols[i])
        .sum::<f64>()
        / d as f64;
    let spot = (params.spot().iter().map(|s| s.ln()).sum::<f64>() / d as f64).exp();
    (spot, var.sqrt(), r - log_drift - 0.5 * var)
}

/// Default lattice depth: 200 steps for two assets, 50 for five, and
/// counts in between that keep the lattice under about 10^8 nodes.
pub fn ekvall_default_steps(dim: usize) -> usize {
    match dim {
        0 | 1 => 1000,
        2 => 200,
        3 => 100,
        4 => 70,
        _ => 50,
    }
}

/// American price on the Ekvall lattice with `steps` time steps.
///
/// Each step moves the independent factors by `±√Δt` with probability
/// `2^{-d}` per branch, and asset `i` follows
/// `S_i exp(μ_i Δt + √Δt σ_i Σ_i ε)`. The lattice recombines, so step `n`
/// holds `(n + 1)^d` nodes indexed by the up-move count of each factor.
pub fn ekvall_price(params: &ModelParams, payoff: &Payoff, steps: usize) -> Result<f64> {
    let d = params.dim();
    if d > EKVALL_MAX_DIM {
        return Err(Error::DimensionTooLarge { dim: d, cap: EKVALL_MAX_DIM });
    }
    if steps == 0 {
        return Err(Error::invalid("the lattice needs at least one step"));
    }
    let side = steps + 1;
    let len = side.checked_pow(d as u32).ok_or_else(|| Error::invalid("lattice too large"))?;
    let strides: Vec<usize> = (0..d).map(|k| side.pow(k as u32)).collect();
    let dt = params.maturity() / steps as f64;
    let sq = dt.sqrt();
    let drift = params.log_drift();
    // c[i][m]: loading of asset i on factor m per unit move
    let c: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|m| params.vols()[i] * params.chol()[[i, m]] * sq).collect())
        .collect();
    // up[i][m][k] = exp(2 k c_im)
    let up: Vec<Vec<Vec<f64>>> = c
        .iter()
        .map(|ci| ci.iter().map(|&cim| (0..side).map(|k| (2.0 * k as f64 * cim).exp()).collect()).collect())
        .collect();
    let disc = (-params.rate() * dt).exp();
    let mut values = vec![0.0; len];
    let mut state = vec![0.0; d];
    let mut idx = vec![0usize; d];

    // Visits every node of step n in lexicographic order (factor 0 fastest).
    let visit = |n: usize, values: &mut [f64], state: &mut [f64], idx: &mut [usize], update: &dyn Fn(f64, f64) -> f64| {
        let base: Vec<f64> = (0..d)
            .map(|i| params.spot()[i] * (drift[i] * n as f64 * dt - n as f64 * c[i].iter().sum::<f64>()).exp())
            .collect();
        idx.iter_mut().for_each(|v| *v = 0);
        loop {
            let offset: usize = (1..d).map(|k| idx[k] * strides[k]).sum();
            let outer: Vec<f64> = (0..d)
                .map(|i| base[i] * (1..d).map(|m| up[i][m][idx[m]]).product::<f64>())
                .collect();
            for j0 in 0..=n {
                for i in 0..d {
                    state[i] = outer[i] * up[i][0][j0];
                }
                let v = &mut values[offset + j0];
                *v = update(*v, payoff.eval(state));
            }
            let mut k = 1;
            while k < d {
                idx[k] += 1;
                if idx[k] <= n {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k >= d {
                break;
            }
        }
    };

    visit(steps, &mut values, &mut state, &mut idx, &|_, ex| ex);
    for n in (0..steps).rev() {
        // average over the 2^d branches one factor at a time, in place
        for k in 0..d {
            average_along(&mut values, &strides, n, k);
        }
        visit(n, &mut values, &mut state, &mut idx, &|cont, ex| (disc * cont).max(ex));
    }
    Ok(values[0])
}

/// `v[j] = (v[j] + v[j + e_k]) / 2` for `j_m <= n` on factors `m <= k` and
/// `j_m <= n + 1` on the factors still to be averaged. The scan is ascending
/// in `j_k`, so every read sees a value not yet averaged in this pass.
fn average_along(values: &mut [f64], strides: &[usize], n: usize, k: usize) {
    let d = strides.len();
    let extent = |m: usize| if m <= k { n } else { n + 1 };
    let mut idx = vec![0usize; d];
    loop {
        let offset: usize = (1..d).map(|m| idx[m] * strides[m]).sum();
        for at in offset..=offset + extent(0) {
            values[at] = 0.5 * (values[at] + values[at + strides[k]]);
        }
        let mut m = 1;
        while m < d {
            idx[m] += 1;
            if idx[m] <= extent(m) {
                break;
            }
            idx[m] = 0;
            m += 1;
        }
        if m >= d {
            break;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::european::{black_scholes_put, geometric_reduction};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn basket(d: usize) -> ModelParams {
        ModelParams::symmetric(d, 100.0, 0.05, 0.0, 0.2, 0.2, 1.0).unwrap()
    }

    /// Jarrow–Rudd tree with layer-by-layer vectors, the one-asset case of
    /// the Ekvall lattice.
    fn jarrow_rudd_put(s: f64, k: f64, r: f64, q: f64, sigma: f64, t: f64, steps: usize) -> f64 {
        let dt = t / steps as f64;
        let mu = r - q - 0.5 * sigma * sigma;
        let price = |n: usize, j: usize| s * (mu * n as f64 * dt + sigma * dt.sqrt() * (2.0 * j as f64 - n as f64)).exp();
        let mut layer: Vec<f64> = (0..=steps).map(|j| (k - price(steps, j)).max(0.0)).collect();
        for n in (0..steps).rev() {
            layer = (0..=n)
                .map(|j| {
                    let cont = (-r * dt).exp() * 0.5 * (layer[j] + layer[j + 1]);
                    cont.max(k - price(n, j))
                })
                .collect();
        }
        layer[0]
    }

    #[test]
    fn crr_deterministic_case_exercises_immediately() {
        let v = crr_american_put_1d(90.0, 100.0, 0.0, 0.0, 0.0, 1.0, 50);
        assert!((v - 10.0).abs() < 1e-12);
    }

    #[test]
    fn crr_european_mode_matches_black_scholes() {
        for (s, k, q) in [(100.0, 100.0, 0.0), (90.0, 100.0, 0.03), (110.0, 95.0, 0.1)] {
            let tree = crr_put_1d(s, k, 0.05, q, 0.2, 1.0, 1000, Exercise::European);
            let bs = black_scholes_put(s, k, 0.05, q, 0.2, 1.0);
            assert!((tree - bs).abs() < 0.01, "{tree} vs {bs}");
        }
    }

    #[test]
    fn crr_is_monotone_in_spot_and_strike() {
        let spots: Vec<f64> = (0..15).map(|i| 70.0 + 5.0 * i as f64).collect();
        let by_spot: Vec<f64> = spots.iter().map(|&s| crr_american_put_1d(s, 100.0, 0.05, 0.0, 0.2, 1.0, 200)).collect();
        assert!(by_spot.windows(2).all(|w| w[1] <= w[0]));
        let by_strike: Vec<f64> = spots.iter().map(|&k| crr_american_put_1d(100.0, k, 0.05, 0.0, 0.2, 1.0, 200)).collect();
        assert!(by_strike.windows(2).all(|w| w[1] >= w[0]));
        let american = crr_american_put_1d(100.0, 100.0, 0.05, 0.0, 0.2, 1.0, 500);
        let european = crr_put_1d(100.0, 100.0, 0.05, 0.0, 0.2, 1.0, 500, Exercise::European);
        assert!(american > european);
    }

    #[test]
    fn geometric_reduction_of_one_asset_is_identity() {
        let p = ModelParams::new(vec![95.0], 0.05, vec![0.02], vec![0.3], array![[1.0]], 1.0).unwrap();
        let (s, v, q) = geometric_to_1d(&p);
        assert!((s - 95.0).abs() < 1e-12 && (v - 0.3).abs() < 1e-15 && (q - 0.02).abs() < 1e-15);
    }

    #[test]
    fn geometric_reduction_matches_simulated_moments() {
        let p = basket(2);
        let (s, vol, eta) = geometric_to_1d(&p);
        assert!((vol - 0.2 * 0.6f64.sqrt()).abs() < 1e-15);
        assert!((s - 100.0).abs() < 1e-12);
        let (v2, e2) = geometric_reduction(&p);
        assert!((v2 - vol).abs() < 1e-15 && (e2 - eta).abs() < 1e-15);

        // log of the geometric mean at T from direct simulation of both assets
        let n = 200_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = p.shock_matrix();
        let drift = p.log_drift();
        let logs: Vec<f64> = (0..n)
            .map(|_| {
                let g: [f64; 2] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
                (0..2).map(|i| drift[i] + b[[i, 0]] * g[0] + b[[i, 1]] * g[1]).sum::<f64>() / 2.0
            })
            .collect();
        let mean = logs.iter().sum::<f64>() / n as f64;
        let var = logs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected_mean = 0.05 - eta - 0.5 * vol * vol;
        assert!((mean - expected_mean).abs() < 3.0 * (var / n as f64).sqrt());
        assert!((var / (vol * vol) - 1.0).abs() < 0.01);
    }

    #[test]
    fn reduced_crr_reproduces_geometric_benchmarks() {
        for (d, expected) in [(2, 4.62), (5, 3.45), (10, 2.97)] {
            let (s, v, q) = geometric_to_1d(&basket(d));
            let price = crr_american_put_1d(s, 100.0, 0.05, q, v, 1.0, 1000);
            assert!((price - expected).abs() < 0.01, "d={d}: {price}");
        }
    }

    #[test]
    fn ekvall_one_asset_is_the_jarrow_rudd_tree() {
        let p = ModelParams::new(vec![100.0], 0.05, vec![0.01], vec![0.25], array![[1.0]], 1.0).unwrap();
        for steps in [1, 7, 150] {
            let lattice = ekvall_price(&p, &Payoff::geometric_put(105.0), steps).unwrap();
            let oracle = jarrow_rudd_put(100.0, 105.0, 0.05, 0.01, 0.25, 1.0, steps);
            assert!((lattice - oracle).abs() < 1e-10, "{lattice} vs {oracle}");
        }
    }

    #[test]
    fn ekvall_geometric_agrees_with_reduced_crr() {
        let p = basket(2);
        let lattice = ekvall_price(&p, &Payoff::geometric_put(100.0), 200).unwrap();
        let (s, v, q) = geometric_to_1d(&p);
        let crr = crr_american_put_1d(s, 100.0, 0.05, q, v, 1.0, 1000);
        assert!((lattice - crr).abs() < 0.01, "{lattice} vs {crr}");
        assert!((lattice - 4.62).abs() < 0.01);
    }

    #[test]
    fn ekvall_arithmetic_two_assets() {
        let v = ekvall_price(&basket(2), &Payoff::arithmetic_put(100.0), 200).unwrap();
        assert!((v - 4.42).abs() < 0.01, "{v}");
    }

    #[test]
    fn ekvall_rejects_large_dimensions() {
        assert_eq!(
            ekvall_price(&basket(6), &Payoff::geometric_put(100.0), 10),
            Err(Error::DimensionTooLarge { dim: 6, cap: 5 })
        );
    }

    #[test]
    #[ignore = "allocates a 51^5 lattice; run with --ignored"]
    fn ekvall_geometric_five_assets_agrees_with_reduced_crr() {
        let p = basket(5);
        let lattice = ekvall_price(&p, &Payoff::geometric_put(100.0), 50).unwrap();
        let (s, v, q) = geometric_to_1d(&p);
        let crr = crr_american_put_1d(s, 100.0, 0.05, q, v, 1.0, 1000);
        assert!((lattice - crr).abs() < 0.01, "{lattice} vs {crr}");
    }
}
