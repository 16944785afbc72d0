//! Job execution and CSV output.

use std::io::Write;
use std::time::Instant;

use basket_gpr::american::{price, ExerciseGrid, MethodConfig};
use basket_gpr::european::{european_values, EiOptions, EuropeanConfig};
use basket_gpr::oracles::{crr_american_put_1d, ekvall_default_steps, ekvall_price, geometric_to_1d};
use basket_gpr::stats::RepetitionStudy;

use crate::config::{JobMethod, RunConfig};
use crate::error::CliError;

/// Lattice steps of the CRR reference price.
pub const CRR_STEPS: usize = 1000;

/// Confidence level of the repetition summaries.
pub const CI_LEVEL: f64 = 0.95;

pub const ROW_HEADER: [&str; 22] = [
    "method",
    "payoff",
    "d",
    "P",
    "M",
    "Q",
    "N",
    "seed",
    "price",
    "gap",
    "european",
    "wallclock_ms",
    "repetition",
    "strike",
    "spot",
    "rate",
    "dividend",
    "vol",
    "rho",
    "maturity",
    "european_source",
    "european_samples",
];

pub const SUMMARY_HEADER: [&str; 14] = [
    "method", "payoff", "d", "P", "M", "Q", "N", "seed", "R", "mean", "std", "ci_lower", "ci_upper", "level",
];

/// One priced cell, echoing the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub config: RunConfig,
    pub repetition: usize,
    pub price: f64,
    pub gap: Option<f64>,
    pub european: Option<f64>,
    pub wallclock_ms: f64,
}

/// Standard deviation of the repetition prices of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub config: RunConfig,
    pub mean: f64,
    pub std: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JobOutput {
    pub rows: Vec<Row>,
    pub summaries: Vec<Summary>,
}

impl JobOutput {
    pub fn extend(&mut self, other: JobOutput) {
        self.rows.extend(other.rows);
        self.summaries.extend(other.summaries);
    }
}

fn european_config(cfg: &RunConfig) -> EuropeanConfig {
    EuropeanConfig {
        source: cfg.european_source,
        ei: EiOptions::new(cfg.ei_points),
        qmc_samples: cfg.european_samples,
        qmc_seed: 0,
    }
}

/// Exercise dates reported for a job: the lattice steps for tree oracles.
pub fn reported_dates(cfg: &RunConfig) -> usize {
    match cfg.method {
        JobMethod::Crr => CRR_STEPS,
        JobMethod::Ekvall => ekvall_default_steps(cfg.dim),
        JobMethod::European => 1,
        JobMethod::American(_) => cfg.dates,
    }
}

fn price_once(cfg: &RunConfig) -> Result<(f64, Option<f64>, Option<f64>), CliError> {
    let params = cfg.model()?;
    let payoff = cfg.payoff();
    Ok(match cfg.method {
        JobMethod::American(method) => {
            let grid = ExerciseGrid::new(cfg.dates, cfg.maturity)?;
            let mcfg = MethodConfig::new(method, cfg.design_points, cfg.inner_sims)
                .with_seed(cfg.seed)
                .with_european(european_config(cfg));
            let r = price(&params, &payoff, &grid, &mcfg)?;
            (r.price, r.gap, r.european)
        }
        JobMethod::European => {
            let v = european_values(&params, &payoff, &[], &european_config(cfg))?;
            (v.at_spot, None, Some(v.at_spot))
        }
        JobMethod::Crr => {
            let (s, vol, eta) = geometric_to_1d(&params);
            let v = crr_american_put_1d(s, cfg.strike, cfg.rate, eta, vol, cfg.maturity, CRR_STEPS);
            (v, None, None)
        }
        JobMethod::Ekvall => (ekvall_price(&params, &payoff, ekvall_default_steps(cfg.dim))?, None, None),
    })
}

/// Prices `cfg` once per repetition; two or more repetitions add a summary.
pub fn run_job(cfg: &RunConfig) -> Result<JobOutput, CliError> {
    cfg.validate()?;
    let mut out = JobOutput::default();
    for rep in 0..cfg.repeats {
        let rep_cfg = RunConfig {
            seed: cfg.seed + rep as u64,
            ..cfg.clone()
        };
        let start = Instant::now();
        let (price, gap, european) = price_once(&rep_cfg)?;
        out.rows.push(Row {
            config: rep_cfg,
            repetition: rep,
            price,
            gap,
            european,
            wallclock_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    if cfg.repeats >= 2 {
        let study = RepetitionStudy::new(out.rows.iter().map(|r| r.price).collect())?;
        let ci = study.sample_std_ci(CI_LEVEL)?;
        out.summaries.push(Summary {
            config: cfg.clone(),
            mean: study.mean(),
            std: ci.std,
            ci_lower: ci.lower,
            ci_upper: ci.upper,
        });
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `P`, `M` and `Q` as reported: blank where the job does not use them.
fn budget_fields(cfg: &RunConfig) -> [String; 3] {
    let (p, m, q) = match cfg.method {
        JobMethod::American(method) => (
            Some(cfg.design_points),
            method.is_monte_carlo().then_some(cfg.inner_sims),
            (method.uses_cv() && cfg.european_source == basket_gpr::european::EuropeanSource::EiFormula)
                .then_some(cfg.ei_points),
        ),
        JobMethod::European => (
            None,
            None,
            (cfg.european_source == basket_gpr::european::EuropeanSource::EiFormula).then_some(cfg.ei_points),
        ),
        JobMethod::Crr | JobMethod::Ekvall => (None, None, None),
    };
    let s = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
    [s(p), s(m), s(q)]
}

pub fn write_rows<W: Write>(w: W, rows: &[Row], omit_timing: bool) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(ROW_HEADER)?;
    for r in rows {
        let c = &r.config;
        let [p, m, q] = budget_fields(c);
        csv.write_record([
            c.method.name().to_string(),
            c.payoff.name().to_string(),
            c.dim.to_string(),
            p,
            m,
            q,
            reported_dates(c).to_string(),
            c.seed.to_string(),
            r.price.to_string(),
            opt(r.gap),
            opt(r.european),
            if omit_timing { String::new() } else { format!("{:.1}", r.wallclock_ms) },
            r.repetition.to_string(),
            c.strike.to_string(),
            c.spot.to_string(),
            c.rate.to_string(),
            c.dividend.to_string(),
            c.vol.to_string(),
            c.rho.to_string(),
            c.maturity.to_string(),
            c.european_source.name().to_string(),
            c.european_samples.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_summaries<W: Write>(w: W, summaries: &[Summary]) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        let c = &s.config;
        let [p, m, q] = budget_fields(c);
        csv.write_record([
            c.method.name().to_string(),
            c.payoff.name().to_string(),
            c.dim.to_string(),
            p,
            m,
            q,
            reported_dates(c).to_string(),
            c.seed.to_string(),
            c.repeats.to_string(),
            s.mean.to_string(),
            s.std.to_string(),
            s.ci_lower.to_string(),
            s.ci_upper.to_string(),
            CI_LEVEL.to_string(),
        ])?;
    }
    csv.flush()?;
    Ok(())
}
