//! Monte Carlo estimators: strong errors and their rates, second-moment decay,
//! asymptotic bounds.

mod asymptotics;
mod rates;

pub use asymptotics::{
    boundedness_estimate, recursion_bound, second_moment_series, stability_decay, BoundednessConstants,
    BoundednessResult, MomentSeries, StabilityConstants, StabilityResult, DECAY_FLOOR,
};
pub use rates::{corollary_exponent, theoretical_rate_high, theoretical_rate_high_capped, theoretical_rate_low};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{norm, SdeProblem};
use crate::montecarlo::ordered_sum;
use crate::noise::{step_size, NoiseGrid};
use crate::scheme::{simulate_exact_geometric, simulate_increments, Record, SchemeConfig, SchemeKind};

/// What the coarse approximations are compared against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Reference {
    /// The same scheme at level `K`, on the same noise.
    FineLevel { level: u32 },
    /// Closed-form solution of `dx = a x dt + b x dB + c x dN`; the grid is
    /// generated at the finest requested level.
    GeometricOracle { a: f64, b: f64, c: f64 },
}

/// Sampling parameters for [`strong_error`].
#[derive(Clone, Debug, PartialEq)]
pub struct StrongErrorConfig {
    pub horizon: f64,
    pub levels: Vec<u32>,
    pub r: f64,
    pub n_paths: usize,
    pub master_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub level: u32,
    pub delta: f64,
    /// Paths that entered the average.
    pub n_paths: usize,
    /// Sample mean of `|X_T^Δ - X_T|^r`.
    pub raw_moment: f64,
    /// `raw_moment^(1/r)`.
    pub norm_error: f64,
    /// Standard error of `raw_moment`.
    pub std_error: f64,
    /// Paths dropped because the scheme or the reference was not finite.
    pub blow_ups: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub r: f64,
    /// Rows in order of decreasing step size.
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    /// CSV with columns `delta,n_paths,raw_moment,norm_error,std_error`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["delta", "n_paths", "raw_moment", "norm_error", "std_error"])?;
        for row in &self.rows {
            w.write_record([
                row.delta.to_string(),
                row.n_paths.to_string(),
                row.raw_moment.to_string(),
                row.norm_error.to_string(),
                row.std_error.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `true` when the norm error strictly decreases as the step shrinks.
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].norm_error < w[0].norm_error)
    }

    pub fn total_blow_ups(&self) -> usize {
        self.rows.iter().map(|r| r.blow_ups).sum()
    }
}

/// Estimates `E|X_T^Δ - X_T|^r` at each level, all levels sharing one noise
/// path per sample.
///
/// A truncated scheme that produces a non-finite state is reported as
/// [`Error::BlowUp`]. Blown-up paths of the plain scheme are excluded and
/// counted per row.
pub fn strong_error(
    problem: &SdeProblem,
    scheme: &SchemeConfig,
    reference: Reference,
    cfg: &StrongErrorConfig,
) -> Result<ErrorTable> {
    if !(cfg.r > 0.0 && cfg.r.is_finite()) {
        return domain(format!("moment order r must be positive, got {}", cfg.r));
    }
    if cfg.n_paths < 2 {
        return domain(format!("need at least 2 paths, got {}", cfg.n_paths));
    }
    if cfg.levels.is_empty() {
        return domain("no levels requested");
    }
    let mut levels = cfg.levels.clone();
    levels.sort_unstable();
    levels.dedup();
    let max_level = *levels.last().unwrap();
    let fine_level = match reference {
        Reference::FineLevel { level } => {
            if max_level > level {
                return domain(format!("level {max_level} is finer than the reference level {level}"));
            }
            level
        }
        Reference::GeometricOracle { c, .. } => {
            if problem.dim() != 1 || problem.noise_dim() != 1 {
                return domain("the geometric oracle needs a scalar problem");
            }
            if !(c > -1.0) {
                return domain(format!("jump rate c must exceed -1, got {c}"));
            }
            max_level
        }
    };

    let truncated = scheme.kind != SchemeKind::Plain;
    let n_levels = levels.len();
    // per level: sum e^r, sum e^2r, finite count, blow-up count
    let width = 4 * n_levels;
    let sums = ordered_sum(cfg.n_paths, width, |i, acc| {
        let grid = NoiseGrid::generate(
            cfg.master_seed,
            i as u64,
            cfg.horizon,
            fine_level,
            problem.intensity(),
            problem.noise_dim(),
        )?;
        let exact: Option<Vec<f64>> = match reference {
            Reference::FineLevel { level } => {
                let cfg_k = scheme.at_level(level).with_record(Record::TerminalOnly);
                let res = simulate_increments(problem, &cfg_k, grid.fine())?;
                match res.blow_up {
                    Some(step) if truncated => return Err(Error::BlowUp { path: i, step }),
                    Some(_) => None,
                    None => Some(res.terminal),
                }
            }
            Reference::GeometricOracle { a, b, c } => {
                let x = simulate_exact_geometric(a, b, c, &grid, problem.x0()[0])?;
                x.is_finite().then(|| vec![x])
            }
        };
        let mut current = grid.fine().clone();
        for (slot, &level) in levels.iter().enumerate().rev() {
            while current.level > level {
                current = current.halve()?;
            }
            let base = 4 * slot;
            let Some(exact) = exact.as_ref() else {
                acc[base + 3] += 1.0;
                continue;
            };
            let cfg_l = scheme.at_level(level).with_record(Record::TerminalOnly);
            let res = simulate_increments(problem, &cfg_l, &current)?;
            if let Some(step) = res.blow_up {
                if truncated {
                    return Err(Error::BlowUp { path: i, step });
                }
                acc[base + 3] += 1.0;
                continue;
            }
            let diff: Vec<f64> = res.terminal.iter().zip(exact).map(|(a, b)| a - b).collect();
            let e = norm(&diff).powf(cfg.r);
            if !e.is_finite() {
                acc[base + 3] += 1.0;
                continue;
            }
            acc[base] += e;
            acc[base + 1] += e * e;
            acc[base + 2] += 1.0;
        }
        Ok(())
    })?;

    let rows = levels
        .iter()
        .enumerate()
        .map(|(slot, &level)| {
            let s = &sums[4 * slot..4 * slot + 4];
            let n = s[2];
            let (raw, se) = mean_and_se(s[0], s[1], n);
            ErrorRow {
                level,
                delta: step_size(level),
                n_paths: n as usize,
                raw_moment: raw,
                norm_error: raw.powf(1.0 / cfg.r),
                std_error: se,
                blow_ups: s[3] as usize,
            }
        })
        .collect();
    Ok(ErrorTable { r: cfg.r, rows })
}

/// Number of paths on which the scheme leaves the floating-point range before
/// `horizon`.
pub fn count_blow_ups(
    problem: &SdeProblem,
    scheme: &SchemeConfig,
    horizon: f64,
    n_paths: usize,
    master_seed: u64,
) -> Result<usize> {
    let cfg = scheme.clone().with_record(Record::TerminalOnly);
    let sums = ordered_sum(n_paths, 1, |i, acc| {
        let grid = NoiseGrid::generate(
            master_seed,
            i as u64,
            horizon,
            scheme.level,
            problem.intensity(),
            problem.noise_dim(),
        )?;
        if simulate_increments(problem, &cfg, grid.fine())?.blew_up() {
            acc[0] += 1.0;
        }
        Ok(())
    })?;
    Ok(sums[0] as usize)
}

/// Sample mean and its standard error from `Σx`, `Σx²` and the count.
pub(crate) fn mean_and_se(sum: f64, sum_sq: f64, n: f64) -> (f64, f64) {
    if n < 1.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = sum / n;
    if n < 2.0 {
        return (mean, f64::NAN);
    }
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// Ordinary least-squares fit of `log y = intercept + slope log x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Residuals in log space, one per fitted point.
    pub residuals: Vec<f64>,
    pub n_points: usize,
}

/// OLS line through `(x, y)`. Needs at least two distinct `x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<RateFit> {
    if x.len() != y.len() {
        return domain(format!("length mismatch: {} vs {}", x.len(), y.len()));
    }
    let n = x.len() as f64;
    if x.len() < 2 {
        return Err(Error::InsufficientData(format!("{} points, need at least 2", x.len())));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residuals: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - intercept - slope * a).collect();
    let ss_res: f64 = residuals.iter().map(|e| e * e).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let r_squared = if ss_res == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        residuals,
        n_points: x.len(),
    })
}

/// Fits `log raw_moment` against `log Δ`. Rows with a zero or non-finite
/// moment are skipped with a warning; at least three must remain.
pub fn fit_rate(table: &ErrorTable) -> Result<RateFit> {
    fit_column(table, |r| r.raw_moment)
}

/// Same as [`fit_rate`] on the norm error `raw_moment^(1/r)`.
pub fn fit_norm_rate(table: &ErrorTable) -> Result<RateFit> {
    fit_column(table, |r| r.norm_error)
}

fn fit_column(table: &ErrorTable, value: impl Fn(&ErrorRow) -> f64) -> Result<RateFit> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for row in &table.rows {
        let v = value(row);
        if v > 0.0 && v.is_finite() {
            x.push(row.delta.ln());
            y.push(v.ln());
        } else {
            log::warn!("excluding level {} from the rate fit (error {v})", row.level);
        }
    }
    if x.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} usable rows for the rate fit, need at least 3",
            x.len()
        )));
    }
    ols(&x, &y)
}
