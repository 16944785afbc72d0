//! Backward dynamic programs for Bermudan approximations of American basket
//! options: GPR-MC, GPR-Tree and GPR-EI, each with or without the European
//! price as a control variate.

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::european::{european_values, EuropeanConfig, EuropeanSource, GaussianSmoother};
use crate::gpr::{fit_with, FitOptions, GprModel, KernelFamily};
use crate::lowdiscrepancy::HaltonConfig;
use crate::market::{design_shocks, propagate_point, shocks_to_states, ModelParams, Payoff};

/// Equally spaced exercise dates `t_n = n T / N`, `n = 0..=N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExerciseGrid {
    n_dates: usize,
    maturity: f64,
}

impl ExerciseGrid {
    pub fn new(n_dates: usize, maturity: f64) -> Result<Self> {
        if n_dates == 0 {
            return Err(Error::invalid("the exercise grid needs N >= 1"));
        }
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(Error::invalid("maturity must be positive"));
        }
        Ok(Self { n_dates, maturity })
    }

    pub fn n_dates(&self) -> usize {
        self.n_dates
    }

    pub fn dt(&self) -> f64 {
        self.maturity / self.n_dates as f64
    }

    /// `t_n`, with `t_N` exactly equal to the maturity.
    pub fn date(&self, n: usize) -> f64 {
        if n == self.n_dates {
            self.maturity
        } else {
            self.maturity * n as f64 / self.n_dates as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    GprMc,
    GprMcCv,
    GprTree,
    GprTreeCv,
    GprEi,
    GprEiCv,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::GprMc,
        Method::GprMcCv,
        Method::GprTree,
        Method::GprTreeCv,
        Method::GprEi,
        Method::GprEiCv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::GprMc => "gpr-mc",
            Method::GprMcCv => "gpr-mc-cv",
            Method::GprTree => "gpr-tree",
            Method::GprTreeCv => "gpr-tree-cv",
            Method::GprEi => "gpr-ei",
            Method::GprEiCv => "gpr-ei-cv",
        }
    }

    pub fn uses_cv(self) -> bool {
        matches!(self, Method::GprMcCv | Method::GprTreeCv | Method::GprEiCv)
    }

    pub fn is_monte_carlo(self) -> bool {
        matches!(self, Method::GprMc | Method::GprMcCv)
    }

    pub fn is_tree(self) -> bool {
        matches!(self, Method::GprTree | Method::GprTreeCv)
    }

    pub fn is_ei(self) -> bool {
        matches!(self, Method::GprEi | Method::GprEiCv)
    }

    /// Squared exponential where the continuation is integrated exactly,
    /// Matern 3/2 otherwise.
    pub fn kernel_family(self) -> KernelFamily {
        if self.is_ei() {
            KernelFamily::SquaredExponential
        } else {
            KernelFamily::Matern32
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key || m.name().replace('-', "") == key)
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

/// Settings shared by all backward engines.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub method: Method,
    /// Design points per date, `P`.
    pub design_points: usize,
    /// Inner simulations per design point, `M` (Monte Carlo methods only).
    pub inner_sims: usize,
    /// Source of the control-variate European prices.
    pub european: EuropeanConfig,
    pub seed: u64,
    /// Rows used for the hyperparameter search (`None`: all).
    pub fit_subset: Option<usize>,
    pub fit_starts: usize,
    pub fit_max_iters: u64,
    /// Largest dimension accepted by the tree methods.
    pub tree_cap: usize,
}

impl MethodConfig {
    pub fn new(method: Method, design_points: usize, inner_sims: usize) -> Self {
        Self {
            method,
            design_points,
            inner_sims,
            european: EuropeanConfig::new(EuropeanSource::EiFormula),
            seed: 0,
            fit_subset: Some(250),
            fit_starts: 5,
            fit_max_iters: 100,
            tree_cap: 10,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_european(mut self, european: EuropeanConfig) -> Self {
        self.european = european;
        self
    }

    fn fit_options(&self, date: usize) -> FitOptions {
        FitOptions::new(self.method.kernel_family())
            .seed(self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(date as u64))
            .subset(self.fit_subset)
            .starts(self.fit_starts)
            .max_iters(self.fit_max_iters)
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.design_points < 2 {
            return Err(Error::invalid("P must be at least 2"));
        }
        if self.method.is_monte_carlo() && self.inner_sims == 0 {
            return Err(Error::invalid("M must be at least 1 for Monte Carlo methods"));
        }
        if self.method.is_tree() && d > self.tree_cap {
            return Err(Error::DimensionTooLarge { dim: d, cap: self.tree_cap });
        }
        Ok(())
    }
}

/// Result of one pricing run. `gap` and `european` are set for the control
/// variate methods, where `price == gap + european`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricingResult {
    pub price: f64,
    pub gap: Option<f64>,
    pub european: Option<f64>,
}

/// Random stream for the inner simulation at `(date, point)`, independent of
/// the order in which points are processed.
fn point_rng(seed: u64, date: usize, point: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((date as u64) << 40) | point as u64);
    rng
}

/// Value function at the next date, as seen by the continuation estimate.
enum Next<'a> {
    /// Nothing left after this date (the gap at maturity).
    Zero,
    /// The payoff itself (plain methods, one step before maturity).
    Payoff(&'a Payoff),
    Model(&'a GprModel),
}

/// Continuation estimators by successor averaging.
enum Successors {
    /// `M` fresh Gaussian successors per point.
    Simulated { m: usize },
    /// The `2^d` branch growth factors `exp(μΔt + √Δt σ_i Σ_i ε)`.
    Tree { growth: Array2<f64> },
}

struct Engine<'a> {
    params: &'a ModelParams,
    payoff: &'a Payoff,
    grid: ExerciseGrid,
    cfg: &'a MethodConfig,
}

impl Engine<'_> {
    fn discount(&self) -> f64 {
        (-self.params.rate() * self.grid.dt()).exp()
    }

    /// `e^{-rΔt} E[next(S_{t+Δt}) | S_t = x]` estimated by averaging over
    /// successors of `x`.
    fn averaged_continuation(&self, succ: &Successors, next: &Next, x: &[f64], date: usize, point: usize) -> f64 {
        let d = x.len();
        let mut scratch = match next {
            Next::Model(m) => m.scratch(),
            _ => Vec::new(),
        };
        let mut state = vec![0.0; d];
        let mut eval = |s: &[f64]| match next {
            Next::Zero => 0.0,
            Next::Payoff(p) => p.eval(s),
            Next::Model(m) => m.predict_with(s, &mut scratch),
        };
        if matches!(next, Next::Zero) {
            return 0.0;
        }
        let total = match succ {
            Successors::Simulated { m } => {
                let mut rng = point_rng(self.cfg.seed, date, point);
                let g = Array2::from_shape_simple_fn((*m, d), || -> f64 { StandardNormal.sample(&mut rng) });
                let succ = propagate_point(x, self.params, self.grid.dt(), g.view());
                succ.rows().into_iter().map(|s| eval(s.as_slice().expect("row-major"))).sum::<f64>() / *m as f64
            }
            Successors::Tree { growth } => {
                let mut total = 0.0;
                for row in growth.rows() {
                    for i in 0..d {
                        state[i] = x[i] * row[i];
                    }
                    total += eval(&state);
                }
                total / growth.nrows() as f64
            }
        };
        self.discount() * total
    }

    fn tree_growth(&self) -> Array2<f64> {
        let d = self.params.dim();
        let dt = self.grid.dt();
        let drift = self.params.log_drift();
        let shock = self.params.shock_matrix();
        let branches = 1usize << d;
        Array2::from_shape_fn((branches, d), |(b, i)| {
            let s: f64 = (0..d)
                .map(|j| {
                    let eps = if (b >> j) & 1 == 1 { 1.0 } else { -1.0 };
                    shock[[i, j]] * eps
                })
                .sum();
            (drift[i] * dt + dt.sqrt() * s).exp()
        })
    }

    fn fit(&self, x: ArrayView2<f64>, y: &Array1<f64>, date: usize) -> Result<GprModel> {
        fit_with(x, y.view(), &self.cfg.fit_options(date)).map_err(Error::at_date(date))
    }

    /// Design shocks and states for dates `1..=last`; entry `n - 1` is date `n`.
    fn design(&self, last: usize) -> Result<Vec<(Array2<f64>, Array2<f64>)>> {
        let halton = HaltonConfig::with_default_leap(self.params.dim())?;
        let unit = design_shocks(self.params, 1.0, self.cfg.design_points, &halton)?;
        Ok((1..=last)
            .map(|n| {
                let t = self.grid.date(n);
                let z = unit.mapv(|v| v * t.sqrt());
                let x = shocks_to_states(self.params, t, z.view());
                (z, x)
            })
            .collect())
    }

    /// European values at `(0, S0)` and at each design date `1..N-1`.
    fn europeans(&self, design: &[(Array2<f64>, Array2<f64>)]) -> Result<(f64, Vec<Array1<f64>>)> {
        let n_last = self.grid.n_dates();
        let groups: Vec<(f64, ArrayView2<f64>)> = (1..n_last)
            .map(|n| (self.grid.date(n), design[n - 1].1.view()))
            .collect();
        let values = european_values(self.params, self.payoff, &groups, &self.cfg.european)?;
        Ok((values.at_spot, values.groups))
    }

    fn run(&self) -> Result<PricingResult> {
        let method = self.cfg.method;
        let d = self.params.dim();
        self.cfg.validate(d)?;
        if self.payoff.strike <= 0.0 {
            return Err(Error::invalid("strike must be positive"));
        }
        let n_last = self.grid.n_dates();
        let cv = method.uses_cv();
        // The plain EI method also needs design points at maturity.
        let design_last = if method == Method::GprEi { n_last } else { n_last - 1 };
        let design = self.design(design_last)?;
        let (eu0, eu) = if cv { self.europeans(&design)? } else { (0.0, Vec::new()) };

        // Exercise value at date n (1-based) for every design point.
        let exercise = |n: usize| -> Array1<f64> {
            let psi = self.payoff.eval_rows(design[n - 1].1.view());
            if cv {
                psi - &eu[n - 1]
            } else {
                psi
            }
        };

        let price_gap = if method.is_ei() {
            self.run_ei(&design, &exercise)?
        } else {
            let succ = if method.is_tree() {
                Successors::Tree { growth: self.tree_growth() }
            } else {
                Successors::Simulated { m: self.cfg.inner_sims }
            };
            self.run_averaged(&succ, &design, &exercise)?
        };

        let spot_exercise = self.payoff.eval(self.params.spot()) - if cv { eu0 } else { 0.0 };
        let value0 = spot_exercise.max(price_gap);
        Ok(if cv {
            PricingResult {
                price: value0 + eu0,
                gap: Some(value0),
                european: Some(eu0),
            }
        } else {
            PricingResult {
                price: value0,
                gap: None,
                european: None,
            }
        })
    }

    /// Backward recursion with successor averaging; returns the continuation
    /// value at `(0, S0)`.
    fn run_averaged(
        &self,
        succ: &Successors,
        design: &[(Array2<f64>, Array2<f64>)],
        exercise: &dyn Fn(usize) -> Array1<f64>,
    ) -> Result<f64> {
        let n_last = self.grid.n_dates();
        let cv = self.cfg.method.uses_cv();
        let terminal = if cv { Next::Zero } else { Next::Payoff(self.payoff) };
        let mut model: Option<GprModel> = None;
        for n in (1..n_last).rev() {
            let next = match &model {
                Some(m) => Next::Model(m),
                None => match terminal {
                    Next::Zero => Next::Zero,
                    _ => Next::Payoff(self.payoff),
                },
            };
            let states = &design[n - 1].1;
            let cont: Vec<f64> = (0..states.nrows())
                .into_par_iter()
                .map(|p| {
                    let x = states.row(p).to_vec();
                    self.averaged_continuation(succ, &next, &x, n, p)
                })
                .collect();
            let values = exercise(n)
                .iter()
                .zip(&cont)
                .map(|(&e, &c)| e.max(c))
                .collect::<Array1<f64>>();
            model = Some(self.fit(states.view(), &values, n)?);
        }
        let next = match &model {
            Some(m) => Next::Model(m),
            None => terminal,
        };
        Ok(self.averaged_continuation(succ, &next, self.params.spot(), 0, 0))
    }

    /// Backward recursion with exact one-step integration of squared
    /// exponential surrogates fitted in log-shock space.
    fn run_ei(&self, design: &[(Array2<f64>, Array2<f64>)], exercise: &dyn Fn(usize) -> Array1<f64>) -> Result<f64> {
        let n_last = self.grid.n_dates();
        let cv = self.cfg.method.uses_cv();
        let cov = self.params.covariance().mapv(|v| v * self.grid.dt());
        let disc = self.discount();
        // Surrogate of the value at date n + 1, integrated over one step.
        let mut smoother: Option<GaussianSmoother> = if cv {
            None
        } else {
            let (z, x) = &design[n_last - 1];
            let psi = self.payoff.eval_rows(x.view());
            let model = self.fit(z.view(), &psi, n_last)?;
            Some(GaussianSmoother::new(&model, cov.view()).map_err(Error::at_date(n_last))?)
        };
        for n in (1..n_last).rev() {
            let z = &design[n - 1].0;
            let cont: Vec<f64> = match &smoother {
                None => vec![0.0; z.nrows()],
                Some(sm) => (0..z.nrows())
                    .into_par_iter()
                    .map_init(|| sm.scratch(), |scratch, p| disc * sm.eval_with(&z.row(p).to_vec(), scratch))
                    .collect(),
            };
            let values = exercise(n)
                .iter()
                .zip(&cont)
                .map(|(&e, &c)| e.max(c))
                .collect::<Array1<f64>>();
            let model = self.fit(z.view(), &values, n)?;
            smoother = Some(GaussianSmoother::new(&model, cov.view()).map_err(Error::at_date(n))?);
        }
        Ok(match &smoother {
            None => 0.0,
            Some(sm) => disc * sm.eval(&vec![0.0; self.params.dim()]),
        })
    }
}

fn check_method(cfg: &MethodConfig, allowed: &[Method]) -> Result<()> {
    if allowed.contains(&cfg.method) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "method {} is not handled by this pricer",
            cfg.method.name()
        )))
    }
}

/// Prices with whichever method `cfg` names.
pub fn price(params: &ModelParams, payoff: &Payoff, grid: &ExerciseGrid, cfg: &MethodConfig) -> Result<PricingResult> {
    if (grid.maturity - params.maturity()).abs() > 1e-12 * params.maturity() {
        return Err(Error::invalid("exercise grid and model disagree on the maturity"));
    }
    Engine {
        params,
        payoff,
        grid: *grid,
        cfg,
    }
    .run()
}

pub fn gpr_mc_price(params: &ModelParams, payoff: &Payoff, grid: &ExerciseGrid, cfg: &MethodConfig) -> Result<PricingResult> {
    check_method(cfg, &[Method::GprMc])?;
    price(params, payoff, grid, cfg)
}

pub fn gpr_mc_cv_price(params: &ModelParams, payoff: &Payoff, grid: &ExerciseGrid, cfg: &MethodConfig) -> Result<PricingResult> {
    check_method(cfg, &[Method::GprMcCv])?;
    price(params, payoff, grid, cfg)
}

/// GPR-Tree; `use_cv` selects the control variate variant regardless of the
/// tree method named in `cfg`.
pub fn gpr_tree_price(
    params: &ModelParams,
    payoff: &Payoff,
    grid: &ExerciseGrid,
    cfg: &MethodConfig,
    use_cv: bool,
) -> Result<PricingResult> {
    check_method(cfg, &[Method::GprTree, Method::GprTreeCv])?;
    let cfg = MethodConfig {
        method: if use_cv { Method::GprTreeCv } else { Method::GprTree },
        ..cfg.clone()
    };
    price(params, payoff, grid, &cfg)
}

/// GPR-EI American pricer; `use_cv` as for [`gpr_tree_price`].
pub fn gpr_ei_american_price(
    params: &ModelParams,
    payoff: &Payoff,
    grid: &ExerciseGrid,
    cfg: &MethodConfig,
    use_cv: bool,
) -> Result<PricingResult> {
    check_method(cfg, &[Method::GprEi, Method::GprEiCv])?;
    let cfg = MethodConfig {
        method: if use_cv { Method::GprEiCv } else { Method::GprEi },
        ..cfg.clone()
    };
    price(params, payoff, grid, &cfg)
}
