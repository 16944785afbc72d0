use std::path::PathBuf;
use std::process::ExitCode;

use basket_gpr_cli::{execute, CliError, Overrides};
use clap::error::ErrorKind;
use clap::Parser;

/// Prices American basket options with GPR surrogates and writes CSV rows.
#[derive(Debug, Parser)]
#[command(name = "basket-gpr", version)]
struct Args {
    /// Parameter preset: basket-put or maxcall.
    #[arg(long)]
    preset: Option<String>,
    /// geometric-put, arithmetic-put or max-call.
    #[arg(long)]
    payoff: Option<String>,
    #[arg(long)]
    strike: Option<String>,
    /// Number of assets.
    #[arg(long)]
    dim: Option<String>,
    /// gpr-mc, gpr-mc-cv, gpr-tree, gpr-tree-cv, gpr-ei, gpr-ei-cv,
    /// european, crr or ekvall.
    #[arg(long)]
    method: Option<String>,
    /// Design points per exercise date.
    #[arg(long = "P")]
    p: Option<String>,
    /// Inner simulations per design point.
    #[arg(long = "M")]
    m: Option<String>,
    /// Surrogate points of the European formula.
    #[arg(long = "Q")]
    q: Option<String>,
    /// Exercise dates.
    #[arg(long = "N")]
    n: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Repetitions with consecutive seeds; two or more add a summary.
    #[arg(long)]
    repeats: Option<String>,
    /// ei-formula, qmc or geometric-closed-form.
    #[arg(long)]
    european_source: Option<String>,
    /// QMC samples of the European price.
    #[arg(long)]
    european_samples: Option<String>,
    #[arg(long)]
    spot: Option<String>,
    #[arg(long)]
    rate: Option<String>,
    #[arg(long)]
    dividend: Option<String>,
    #[arg(long)]
    vol: Option<String>,
    /// Pairwise correlation.
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    maturity: Option<String>,
    /// Regenerate a result table, T1 to T14.
    #[arg(long)]
    table: Option<String>,
    /// Budget scale in (0, 1] for --table.
    #[arg(long)]
    scale: Option<String>,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    out: Option<String>,
    /// Worker thread cap.
    #[arg(long)]
    threads: Option<String>,
    /// Flat key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Leave wallclock_ms empty so equal configurations give identical files.
    #[arg(long)]
    omit_timing: bool,
}

impl Args {
    fn overrides(&self) -> Result<Overrides, CliError> {
        let mut o = Overrides::default();
        let pairs = [
            ("preset", &self.preset),
            ("payoff", &self.payoff),
            ("strike", &self.strike),
            ("dim", &self.dim),
            ("method", &self.method),
            ("P", &self.p),
            ("M", &self.m),
            ("Q", &self.q),
            ("N", &self.n),
            ("seed", &self.seed),
            ("repeats", &self.repeats),
            ("european-source", &self.european_source),
            ("european-samples", &self.european_samples),
            ("spot", &self.spot),
            ("rate", &self.rate),
            ("dividend", &self.dividend),
            ("vol", &self.vol),
            ("rho", &self.rho),
            ("maturity", &self.maturity),
            ("table", &self.table),
            ("scale", &self.scale),
            ("out", &self.out),
            ("threads", &self.threads),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                o.set(key, v)?;
            }
        }
        if self.omit_timing {
            o.omit_timing = Some(true);
        }
        Ok(match &self.config {
            Some(path) => o.or(Overrides::from_file(path)?),
            None => o,
        })
    }
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match args.overrides().and_then(|o| execute(&o)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
