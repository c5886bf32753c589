//! Missing-value estimation: error rates at hidden cells for the factorized
//! estimate and for the constant and random replacement baselines.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annealer::{run, RunResult, SolverConfig, Target};
use crate::binmat::{bool_product, BinaryMatrix};
use crate::error::{Error, Result};

/// Number of random fills averaged for the random baseline.
pub const RANDOM_FILLS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub method: String,
    pub error_estimated: f64,
    pub error_zero: f64,
    pub error_one: f64,
    pub error_random: f64,
    pub miss_count: usize,
}

fn hidden_cells(true_v: &BinaryMatrix, masked: &BinaryMatrix) -> Result<Vec<usize>> {
    if (true_v.rows(), true_v.cols()) != (masked.rows(), masked.cols()) {
        return Err(Error::Dimension(format!(
            "truth is {}x{}, masked matrix is {}x{}",
            true_v.rows(),
            true_v.cols(),
            masked.rows(),
            masked.cols()
        )));
    }
    let hidden: Vec<usize> = (0..masked.len())
        .filter(|&idx| !masked.is_observed_flat(idx))
        .collect();
    if hidden.is_empty() {
        return Err(Error::InvalidInput("no masked cells to evaluate".into()));
    }
    Ok(hidden)
}

fn percent(mismatches: usize, total: usize) -> f64 {
    100.0 * mismatches as f64 / total as f64
}

/// Mean error (%) over `fills` Bernoulli(`rho`) fills of the hidden cells.
pub fn random_fill_error(
    truth: &[u8],
    hidden: &[usize],
    rho: f64,
    fills: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total: f64 = (0..fills)
        .map(|_| {
            let wrong = hidden
                .iter()
                .filter(|&&idx| rng.gen_bool(rho) as u8 != truth[idx])
                .count();
            percent(wrong, hidden.len())
        })
        .sum();
    total / fills as f64
}

/// Error rates at the hidden cells of `masked`, comparing against `true_v`.
pub fn evaluate_missing(
    true_v: &BinaryMatrix,
    masked: &BinaryMatrix,
    result: &RunResult,
    rho: f64,
    seed: u64,
) -> Result<EvaluationReport> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidInput(format!("rho must lie in [0, 1], got {rho}")));
    }
    let hidden = hidden_cells(true_v, masked)?;
    let estimate = bool_product(&result.best_factors);
    if (estimate.rows(), estimate.cols()) != (true_v.rows(), true_v.cols()) {
        return Err(Error::Dimension("factors do not match the target shape".into()));
    }
    let truth = true_v.bits();
    let est = estimate.bits();
    let n = hidden.len();
    let wrong_est = hidden.iter().filter(|&&i| est[i] != truth[i]).count();
    let ones = hidden.iter().filter(|&&i| truth[i] == 1).count();
    Ok(EvaluationReport {
        method: result.mode.label().to_string(),
        error_estimated: percent(wrong_est, n),
        // a 0-fill is wrong exactly at the hidden ones, a 1-fill at the hidden zeros
        error_zero: percent(ones, n),
        error_one: percent(n - ones, n),
        error_random: random_fill_error(truth, &hidden, rho, RANDOM_FILLS, seed),
        miss_count: n,
    })
}

/// Runs the annealer for the whole budget, keeping the lowest-mismatch
/// state seen.
pub fn best_local_search(
    v: &BinaryMatrix,
    config: &SolverConfig,
    budget_mcs: u64,
) -> Result<RunResult> {
    let c = config.clone().target(Target::BestWithinBudget).max_mcs(budget_mcs);
    run(v, &c)
}

/// One report line together with the identifiers the CSV carries.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub report: EvaluationReport,
    pub seed: u64,
    pub instance_id: usize,
}

pub fn write_report_csv<W: Write>(out: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "method",
        "error_estimated",
        "error_zero",
        "error_one",
        "error_random",
        "miss_count",
        "seed",
        "instance_id",
    ])?;
    for r in rows {
        let e = &r.report;
        w.write_record([
            e.method.clone(),
            e.error_estimated.to_string(),
            e.error_zero.to_string(),
            e.error_one.to_string(),
            e.error_random.to_string(),
            e.miss_count.to_string(),
            r.seed.to_string(),
            r.instance_id.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
