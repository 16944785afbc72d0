//! Batch front end: resolves run configurations, executes pricing jobs and
//! repetition studies, and writes CSV tables.

pub mod config;
pub mod error;
pub mod run;
pub mod tables;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

pub use config::{JobMethod, Overrides, Preset, RunConfig};
pub use error::CliError;
pub use run::{run_job, JobOutput};
pub use tables::{reproduce_table, table_jobs};

/// Path of the repetition summary written next to `out`.
pub fn summary_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.summary.csv"))
}

/// Runs a single job or a whole table, as selected by `o`.
pub fn execute(o: &Overrides) -> Result<(), CliError> {
    if let Some(n) = o.threads {
        if n == 0 {
            return Err(CliError::validation("threads must be at least 1"));
        }
        // Fails only when a pool already exists, which then keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let output = match &o.table {
        Some(id) => reproduce_table(id, o.scale.unwrap_or(1.0))?,
        None => run_job(&RunConfig::resolve(o)?)?,
    };
    let omit_timing = o.omit_timing.unwrap_or(false);
    match &o.out {
        Some(path) => {
            run::write_rows(BufWriter::new(File::create(path)?), &output.rows, omit_timing)?;
            if !output.summaries.is_empty() {
                run::write_summaries(BufWriter::new(File::create(summary_path(path))?), &output.summaries)?;
            }
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            run::write_rows(&mut lock, &output.rows, omit_timing)?;
            if !output.summaries.is_empty() {
                writeln!(lock)?;
                run::write_summaries(&mut lock, &output.summaries)?;
            }
        }
    }
    Ok(())
}
