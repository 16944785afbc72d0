//! Run configurations: presets, flat `key=value` files and flag overrides.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use basket_gpr::american::Method;
use basket_gpr::european::EuropeanSource;
use basket_gpr::market::{ModelParams, Payoff, PayoffKind};

use crate::error::CliError;

/// Named parameter sets for the two experiment families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Basket puts: `S = K = 100`, `r = 0.05`, `η = 0`, `σ = 0.2`, `ρ = 0.2`,
    /// `T = 1`, ten exercise dates.
    BasketPut,
    /// Call on the maximum: `S = K = 100`, `r = 0.05`, `η = 0.1`, `σ = 0.2`,
    /// `ρ = 0`, `T = 3`, nine exercise dates.
    MaxCall,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::BasketPut => "basket-put",
            Preset::MaxCall => "maxcall",
        }
    }
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "basket-put" | "basketput" => Ok(Preset::BasketPut),
            "maxcall" | "max-call" => Ok(Preset::MaxCall),
            other => Err(CliError::validation(format!(
                "unknown preset '{other}' (expected basket-put or maxcall)"
            ))),
        }
    }
}

/// What a job computes: an American engine or one of the reference prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobMethod {
    American(Method),
    /// European price from the configured source.
    European,
    /// CRR tree on the one-asset reduction of a geometric basket.
    Crr,
    /// Multi-asset Ekvall lattice.
    Ekvall,
}

impl JobMethod {
    pub fn name(self) -> &'static str {
        match self {
            JobMethod::American(m) => m.name(),
            JobMethod::European => "european",
            JobMethod::Crr => "crr",
            JobMethod::Ekvall => "ekvall",
        }
    }
}

impl FromStr for JobMethod {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "european" => Ok(JobMethod::European),
            "crr" => Ok(JobMethod::Crr),
            "ekvall" => Ok(JobMethod::Ekvall),
            other => other
                .parse::<Method>()
                .map(JobMethod::American)
                .map_err(|e| CliError::validation(e.to_string())),
        }
    }
}

/// Optional settings from flags or a configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub payoff: Option<PayoffKind>,
    pub strike: Option<f64>,
    pub dim: Option<usize>,
    pub method: Option<JobMethod>,
    pub design_points: Option<usize>,
    pub inner_sims: Option<usize>,
    pub ei_points: Option<usize>,
    pub dates: Option<usize>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub european_source: Option<EuropeanSource>,
    pub european_samples: Option<usize>,
    pub spot: Option<f64>,
    pub rate: Option<f64>,
    pub dividend: Option<f64>,
    pub vol: Option<f64>,
    pub rho: Option<f64>,
    pub maturity: Option<f64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub omit_timing: Option<bool>,
    pub table: Option<String>,
    pub scale: Option<f64>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::validation(format!("cannot parse '{value}' for key '{key}'")))
}

impl Overrides {
    /// Sets one field from its flag name, without leading dashes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "preset" => self.preset = Some(value.parse()?),
            "payoff" => self.payoff = Some(value.parse().map_err(|e: basket_gpr::Error| CliError::validation(e.to_string()))?),
            "strike" => self.strike = Some(parse(key, value)?),
            "dim" => self.dim = Some(parse(key, value)?),
            "method" => self.method = Some(value.parse()?),
            "P" => self.design_points = Some(parse(key, value)?),
            "M" => self.inner_sims = Some(parse(key, value)?),
            "Q" => self.ei_points = Some(parse(key, value)?),
            "N" => self.dates = Some(parse(key, value)?),
            "seed" => self.seed = Some(parse(key, value)?),
            "repeats" => self.repeats = Some(parse(key, value)?),
            "european-source" => {
                self.european_source =
                    Some(value.parse().map_err(|e: basket_gpr::Error| CliError::validation(e.to_string()))?)
            }
            "european-samples" => self.european_samples = Some(parse(key, value)?),
            "spot" => self.spot = Some(parse(key, value)?),
            "rate" => self.rate = Some(parse(key, value)?),
            "dividend" => self.dividend = Some(parse(key, value)?),
            "vol" => self.vol = Some(parse(key, value)?),
            "rho" => self.rho = Some(parse(key, value)?),
            "maturity" => self.maturity = Some(parse(key, value)?),
            "threads" => self.threads = Some(parse(key, value)?),
            "out" => self.out = Some(PathBuf::from(value)),
            "omit-timing" => self.omit_timing = Some(parse(key, value)?),
            "table" => self.table = Some(value.to_string()),
            "scale" => self.scale = Some(parse(key, value)?),
            other => return Err(CliError::validation(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Reads a flat `key=value` file; blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut out = Overrides::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::validation(format!("line {}: expected key=value", i + 1)))?;
            out.set(key.trim(), value.trim())?;
        }
        Ok(out)
    }

    /// Fields set in `self` win over those in `fallback`.
    pub fn or(self, fallback: Overrides) -> Overrides {
        Overrides {
            preset: self.preset.or(fallback.preset),
            payoff: self.payoff.or(fallback.payoff),
            strike: self.strike.or(fallback.strike),
            dim: self.dim.or(fallback.dim),
            method: self.method.or(fallback.method),
            design_points: self.design_points.or(fallback.design_points),
            inner_sims: self.inner_sims.or(fallback.inner_sims),
            ei_points: self.ei_points.or(fallback.ei_points),
            dates: self.dates.or(fallback.dates),
            seed: self.seed.or(fallback.seed),
            repeats: self.repeats.or(fallback.repeats),
            european_source: self.european_source.or(fallback.european_source),
            european_samples: self.european_samples.or(fallback.european_samples),
            spot: self.spot.or(fallback.spot),
            rate: self.rate.or(fallback.rate),
            dividend: self.dividend.or(fallback.dividend),
            vol: self.vol.or(fallback.vol),
            rho: self.rho.or(fallback.rho),
            maturity: self.maturity.or(fallback.maturity),
            threads: self.threads.or(fallback.threads),
            out: self.out.or(fallback.out),
            omit_timing: self.omit_timing.or(fallback.omit_timing),
            table: self.table.or(fallback.table),
            scale: self.scale.or(fallback.scale),
        }
    }
}

/// Fully resolved settings of one pricing job.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub payoff: PayoffKind,
    pub strike: f64,
    pub dim: usize,
    pub spot: f64,
    pub rate: f64,
    pub dividend: f64,
    pub vol: f64,
    pub rho: f64,
    pub maturity: f64,
    pub method: JobMethod,
    /// Design points per date, `P`.
    pub design_points: usize,
    /// Inner simulations per design point, `M`.
    pub inner_sims: usize,
    /// Surrogate points of the European formula, `Q`.
    pub ei_points: usize,
    /// Exercise dates, `N`.
    pub dates: usize,
    pub seed: u64,
    /// Repetitions `R`, with seeds `seed, seed + 1, ...`.
    pub repeats: usize,
    pub european_source: EuropeanSource,
    /// QMC samples of the European price.
    pub european_samples: usize,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = RunConfig {
            preset,
            payoff: PayoffKind::GeometricPut,
            strike: 100.0,
            dim: 2,
            spot: 100.0,
            rate: 0.05,
            dividend: 0.0,
            vol: 0.2,
            rho: 0.2,
            maturity: 1.0,
            method: JobMethod::American(Method::GprMcCv),
            design_points: 250,
            inner_sims: 1000,
            ei_points: 10_000,
            dates: 10,
            seed: 0,
            repeats: 1,
            european_source: EuropeanSource::EiFormula,
            european_samples: 1_000_000,
        };
        match preset {
            Preset::BasketPut => base,
            Preset::MaxCall => RunConfig {
                payoff: PayoffKind::MaxCall,
                dividend: 0.1,
                rho: 0.0,
                maturity: 3.0,
                dates: 9,
                ei_points: 8000,
                european_source: EuropeanSource::Qmc,
                ..base
            },
        }
    }

    /// Applies the model and job fields of `o` on top of its preset.
    pub fn resolve(o: &Overrides) -> Result<Self, CliError> {
        let base = RunConfig::preset(o.preset.unwrap_or(Preset::BasketPut));
        let cfg = RunConfig {
            payoff: o.payoff.unwrap_or(base.payoff),
            strike: o.strike.unwrap_or(base.strike),
            dim: o.dim.unwrap_or(base.dim),
            spot: o.spot.unwrap_or(base.spot),
            rate: o.rate.unwrap_or(base.rate),
            dividend: o.dividend.unwrap_or(base.dividend),
            vol: o.vol.unwrap_or(base.vol),
            rho: o.rho.unwrap_or(base.rho),
            maturity: o.maturity.unwrap_or(base.maturity),
            method: o.method.unwrap_or(base.method),
            design_points: o.design_points.unwrap_or(base.design_points),
            inner_sims: o.inner_sims.unwrap_or(base.inner_sims),
            ei_points: o.ei_points.unwrap_or(base.ei_points),
            dates: o.dates.unwrap_or(base.dates),
            seed: o.seed.unwrap_or(base.seed),
            repeats: o.repeats.unwrap_or(base.repeats),
            european_source: o.european_source.unwrap_or(base.european_source),
            european_samples: o.european_samples.unwrap_or(base.european_samples),
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every constraint that does not need a pricing run.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Validation(msg));
        if self.dim == 0 {
            return fail("dim must be at least 1".into());
        }
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return fail("strike must be positive".into());
        }
        if !(self.spot > 0.0 && self.spot.is_finite()) {
            return fail("spot must be positive".into());
        }
        if !(self.vol >= 0.0 && self.vol.is_finite()) {
            return fail("vol must be nonnegative".into());
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return fail("maturity must be positive".into());
        }
        if !self.rate.is_finite() || !self.dividend.is_finite() {
            return fail("rate and dividend must be finite".into());
        }
        let rho_min = if self.dim > 1 { -1.0 / (self.dim - 1) as f64 } else { -1.0 };
        if !(self.rho >= rho_min && self.rho <= 1.0) {
            return fail(format!("rho must lie in [{rho_min}, 1] for dim {}", self.dim));
        }
        if self.dates == 0 {
            return fail("N must be at least 1".into());
        }
        if self.repeats == 0 {
            return fail("repeats must be at least 1".into());
        }
        let uses_european = match self.method {
            JobMethod::American(m) => {
                if self.design_points < 2 {
                    return fail("P must be at least 2".into());
                }
                if m.is_monte_carlo() && self.inner_sims == 0 {
                    return fail(format!("M must be at least 1 for method {}", m.name()));
                }
                m.uses_cv()
            }
            JobMethod::European => true,
            JobMethod::Crr => {
                if self.payoff != PayoffKind::GeometricPut {
                    return fail("crr prices only the geometric put".into());
                }
                false
            }
            JobMethod::Ekvall => {
                if self.dim > basket_gpr::oracles::EKVALL_MAX_DIM {
                    return fail(format!(
                        "ekvall supports at most {} assets",
                        basket_gpr::oracles::EKVALL_MAX_DIM
                    ));
                }
                false
            }
        };
        if uses_european {
            match self.european_source {
                EuropeanSource::EiFormula if self.ei_points < 2 => return fail("Q must be at least 2".into()),
                EuropeanSource::Qmc if self.european_samples < 1000 => {
                    return fail("european-samples must be at least 1000".into())
                }
                EuropeanSource::GeometricClosedForm if self.payoff != PayoffKind::GeometricPut => {
                    return fail("the closed-form European source needs the geometric put".into())
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelParams, CliError> {
        Ok(ModelParams::symmetric(
            self.dim,
            self.spot,
            self.rate,
            self.dividend,
            self.vol,
            self.rho,
            self.maturity,
        )?)
    }

    pub fn payoff(&self) -> Payoff {
        match self.payoff {
            PayoffKind::GeometricPut => Payoff::geometric_put(self.strike),
            PayoffKind::ArithmeticPut => Payoff::arithmetic_put(self.strike),
            PayoffKind::MaxCall => Payoff::max_call(self.strike),
        }
    }
}
