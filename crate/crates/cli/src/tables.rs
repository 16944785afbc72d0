//! Grids of jobs that regenerate the published result tables.

use basket_gpr::american::Method;
use basket_gpr::european::EuropeanSource;
use basket_gpr::market::PayoffKind;
use basket_gpr::oracles::EKVALL_MAX_DIM;

use crate::config::{JobMethod, Preset, RunConfig};
use crate::error::CliError;
use crate::run::{run_job, JobOutput};

pub const BASKET_DIMS: [usize; 6] = [2, 5, 10, 20, 40, 100];
pub const MAXCALL_DIMS: [usize; 7] = [2, 5, 10, 20, 30, 50, 100];
const P_GRID: [usize; 3] = [250, 500, 1000];
const M_GRID: [usize; 3] = [1_000, 10_000, 100_000];
const Q_GRID: [usize; 4] = [250, 500, 1000, 8000];
/// Design points of the max-call GPR-EI runs.
const EI_MAXCALL_P_GRID: [usize; 3] = [1000, 2000, 4000];
/// Largest dimension of the GPR-Tree columns.
const TREE_MAX_DIM: usize = 10;
const STUDY_REPEATS: usize = 100;

/// Shrinks a budget by `scale`, keeping it at least `min`.
fn scaled(n: usize, scale: f64, min: usize) -> usize {
    ((n as f64 * scale).round() as usize).max(min)
}

struct Grid {
    scale: f64,
}

impl Grid {
    fn base(&self, preset: Preset, payoff: PayoffKind, d: usize) -> RunConfig {
        let base = RunConfig::preset(preset);
        RunConfig {
            payoff,
            dim: d,
            european_samples: scaled(base.european_samples, self.scale, 1000),
            ei_points: scaled(base.ei_points, self.scale, 2),
            ..base
        }
    }

    fn american(&self, base: &RunConfig, method: Method, p: usize, m: usize) -> RunConfig {
        RunConfig {
            method: JobMethod::American(method),
            design_points: scaled(p, self.scale, 2),
            inner_sims: scaled(m, self.scale, 1),
            ..base.clone()
        }
    }

    /// `P x M` cells of a Monte Carlo table.
    fn mc_cells(&self, base: &RunConfig, method: Method, out: &mut Vec<RunConfig>) {
        for p in P_GRID {
            for m in M_GRID {
                out.push(self.american(base, method, p, m));
            }
        }
    }

    fn european(&self, base: &RunConfig, out: &mut Vec<RunConfig>) {
        for q in Q_GRID {
            out.push(RunConfig {
                method: JobMethod::European,
                european_source: EuropeanSource::EiFormula,
                ei_points: scaled(q, self.scale, 2),
                ..base.clone()
            });
        }
        out.push(RunConfig {
            method: JobMethod::European,
            european_source: EuropeanSource::Qmc,
            ..base.clone()
        });
    }

    fn benchmarks(&self, base: &RunConfig, out: &mut Vec<RunConfig>) {
        if base.dim <= EKVALL_MAX_DIM {
            out.push(RunConfig {
                method: JobMethod::Ekvall,
                ..base.clone()
            });
        }
        if base.payoff == PayoffKind::GeometricPut {
            out.push(RunConfig {
                method: JobMethod::Crr,
                ..base.clone()
            });
        }
    }

    fn tree_ei(&self, base: &RunConfig, cv: bool, ei_grid: &[usize], out: &mut Vec<RunConfig>) {
        let (tree, ei) = if cv {
            (Method::GprTreeCv, Method::GprEiCv)
        } else {
            (Method::GprTree, Method::GprEi)
        };
        if base.dim <= TREE_MAX_DIM {
            for p in P_GRID {
                out.push(self.american(base, tree, p, 0));
            }
        }
        for &p in ei_grid {
            out.push(self.american(base, ei, p, 0));
        }
    }
}

/// Job configurations of table `id` (`T1` to `T14`) at budget `scale`.
pub fn table_jobs(id: &str, scale: f64) -> Result<Vec<RunConfig>, CliError> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(CliError::validation("scale must lie in (0, 1]"));
    }
    let g = Grid { scale };
    let mut out = Vec::new();
    let basket = |payoff| BASKET_DIMS.map(|d| g.base(Preset::BasketPut, payoff, d));
    let maxcall = || MAXCALL_DIMS.map(|d| g.base(Preset::MaxCall, PayoffKind::MaxCall, d));
    use PayoffKind::{ArithmeticPut, GeometricPut};
    match id.to_ascii_uppercase().as_str() {
        "T1" => {
            for payoff in [GeometricPut, ArithmeticPut] {
                basket(payoff).iter().for_each(|b| g.european(b, &mut out));
            }
        }
        "T2" | "T3" | "T6" | "T8" => {
            let (payoff, method) = match id.to_ascii_uppercase().as_str() {
                "T2" => (GeometricPut, Method::GprMc),
                "T3" => (GeometricPut, Method::GprMcCv),
                "T6" => (ArithmeticPut, Method::GprMc),
                _ => (ArithmeticPut, Method::GprMcCv),
            };
            for b in basket(payoff) {
                g.mc_cells(&b, method, &mut out);
                g.benchmarks(&b, &mut out);
            }
        }
        "T4" | "T5" => {
            for b in basket(GeometricPut) {
                g.tree_ei(&b, id.eq_ignore_ascii_case("T5"), &P_GRID, &mut out);
                g.benchmarks(&b, &mut out);
            }
        }
        "T9" => {
            for b in basket(ArithmeticPut) {
                g.tree_ei(&b, false, &P_GRID, &mut out);
                g.tree_ei(&b, true, &P_GRID, &mut out);
                g.benchmarks(&b, &mut out);
            }
        }
        "T7" => maxcall().iter().for_each(|b| g.european(b, &mut out)),
        "T10" | "T11" => {
            let method = if id.eq_ignore_ascii_case("T10") { Method::GprMc } else { Method::GprMcCv };
            for b in basket(GeometricPut) {
                for p in P_GRID {
                    for m in [1_000, 10_000] {
                        out.push(RunConfig {
                            repeats: scaled(STUDY_REPEATS, scale, 2),
                            ..g.american(&b, method, p, m)
                        });
                    }
                }
            }
        }
        "T12" | "T13" => {
            let method = if id.eq_ignore_ascii_case("T12") { Method::GprMc } else { Method::GprMcCv };
            maxcall().iter().for_each(|b| g.mc_cells(b, method, &mut out));
        }
        "T14" => {
            for b in maxcall() {
                g.tree_ei(&b, false, &EI_MAXCALL_P_GRID, &mut out);
                g.tree_ei(&b, true, &EI_MAXCALL_P_GRID, &mut out);
            }
        }
        _ => return Err(CliError::UnknownTable(id.to_string())),
    }
    Ok(out)
}

/// Runs every job of table `id`.
pub fn reproduce_table(id: &str, scale: f64) -> Result<JobOutput, CliError> {
    let mut out = JobOutput::default();
    for job in table_jobs(id, scale)? {
        out.extend(run_job(&job)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_table_has_jobs() {
        for k in 1..=14 {
            let jobs = table_jobs(&format!("T{k}"), 1.0).unwrap();
            assert!(!jobs.is_empty(), "T{k}");
            for j in &jobs {
                j.validate().unwrap();
            }
        }
    }

    #[test]
    fn geometric_monte_carlo_table_layout() {
        let jobs = table_jobs("T2", 1.0).unwrap();
        // 9 cells per dimension, Ekvall for d <= 5, CRR everywhere
        assert_eq!(jobs.len(), 6 * 9 + 2 + 6);
        assert!(jobs.iter().any(|j| j.method == JobMethod::Crr && j.dim == 100));
        assert!(!jobs.iter().any(|j| j.method == JobMethod::Ekvall && j.dim > 5));
    }

    #[test]
    fn scale_shrinks_budgets() {
        let jobs = table_jobs("T11", 0.3).unwrap();
        assert!(jobs.iter().all(|j| j.repeats == 30));
        let p: Vec<usize> = jobs.iter().take(6).map(|j| j.design_points).collect();
        assert_eq!(p, vec![75, 75, 150, 150, 300, 300]);
        assert!(table_jobs("T2", 0.0).is_err());
    }

    #[test]
    fn unknown_tables_are_rejected() {
        let err = table_jobs("T15", 1.0).unwrap_err();
        assert!(matches!(err, CliError::UnknownTable(_)));
        assert_eq!(err.exit_code(), 1);
    }
}
