//! Long-time behaviour: second-moment decay and asymptotic bounds.

use serde::{Deserialize, Serialize};

use super::{mean_and_se, ols, RateFit};
use crate::error::{domain, Error, Result};
use crate::model::SdeProblem;
use crate::montecarlo::ordered_sum;
use crate::noise::{steps_at_level, NoiseGrid};
use crate::scheme::{simulate_increments, Record, SchemeConfig, SchemeKind};

/// Second moments at or below this value are left out of decay fits.
pub const DECAY_FLOOR: f64 = 1e-12;

/// Monte Carlo estimate of `E|X(t_k)|²` on the scheme grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub step: f64,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    pub n_paths: usize,
    /// Plain-scheme paths dropped because they left the floating-point range.
    pub blow_ups: usize,
}

impl MomentSeries {
    /// CSV with columns `t,second_moment,std_error`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "second_moment", "std_error"])?;
        for ((t, m), s) in self.times.iter().zip(&self.mean).zip(&self.std_error) {
            w.write_record([t.to_string(), m.to_string(), s.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates `n_paths` paths at `scheme.level` over `[0, horizon]` and
/// averages `|X_k|²` at every grid point.
pub fn second_moment_series(
    problem: &SdeProblem,
    scheme: &SchemeConfig,
    horizon: f64,
    n_paths: usize,
    master_seed: u64,
) -> Result<MomentSeries> {
    if n_paths < 2 {
        return domain(format!("need at least 2 paths, got {n_paths}"));
    }
    let n = steps_at_level(horizon, scheme.level)?;
    let cfg = scheme.clone().with_record(Record::SecondMomentSeries);
    let truncated = scheme.kind != SchemeKind::Plain;
    let width = 2 * (n + 1) + 2;
    let sums = ordered_sum(n_paths, width, |i, acc| {
        let grid = NoiseGrid::generate(
            master_seed,
            i as u64,
            horizon,
            scheme.level,
            problem.intensity(),
            problem.noise_dim(),
        )?;
        let res = simulate_increments(problem, &cfg, grid.fine())?;
        if let Some(step) = res.blow_up {
            if truncated {
                return Err(Error::BlowUp { path: i, step });
            }
            acc[width - 1] += 1.0;
            return Ok(());
        }
        let series = res.second_moments.expect("series was requested");
        for (k, v) in series.iter().enumerate() {
            acc[2 * k] += v;
            acc[2 * k + 1] += v * v;
        }
        acc[width - 2] += 1.0;
        Ok(())
    })?;
    let used = sums[width - 2];
    let blow_ups = sums[width - 1] as usize;
    if used < 1.0 {
        return Err(Error::InsufficientData(format!("all {n_paths} paths blew up")));
    }
    let step = scheme.step();
    let mut mean = Vec::with_capacity(n + 1);
    let mut std_error = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let (m, se) = mean_and_se(sums[2 * k], sums[2 * k + 1], used);
        mean.push(m);
        std_error.push(se);
    }
    Ok(MomentSeries {
        step,
        times: (0..=n).map(|k| k as f64 * step).collect(),
        mean,
        std_error,
        n_paths: used as usize,
        blow_ups,
    })
}

/// `α₁ - α₂ - λK₁(2 + K₁)`: the mean-square decay exponent guaranteed for
/// small steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityConstants {
    pub alpha1: f64,
    pub alpha2: f64,
    pub k1: f64,
    pub lambda: f64,
}

impl StabilityConstants {
    pub fn exponent(&self) -> f64 {
        self.alpha1 - self.alpha2 - self.lambda * self.k1 * (2.0 + self.k1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityResult {
    pub series: MomentSeries,
    /// OLS slope of `ln E|X(t)|²` against `t`; negative for decay.
    pub exponent: f64,
    pub fit: RateFit,
    /// First grid index of the fit window.
    pub window_start: usize,
}

/// Second-moment series and its fitted exponential decay rate. The first 10%
/// of the horizon is skipped as transient, and points at or below
/// [`DECAY_FLOOR`] are left out.
pub fn stability_decay(
    problem: &SdeProblem,
    scheme: &SchemeConfig,
    horizon: f64,
    n_paths: usize,
    master_seed: u64,
) -> Result<StabilityResult> {
    let series = second_moment_series(problem, scheme, horizon, n_paths, master_seed)?;
    if series.mean.iter().all(|&m| m == 0.0) {
        return Err(Error::InsufficientData(
            "second moment is identically zero, decay rate undefined".into(),
        ));
    }
    let n = series.mean.len() - 1;
    let window_start = n.div_ceil(10);
    let (t, y): (Vec<f64>, Vec<f64>) = (window_start..=n)
        .filter(|&k| series.mean[k] > DECAY_FLOOR && series.mean[k].is_finite())
        .map(|k| (series.times[k], series.mean[k].ln()))
        .unzip();
    let fit = ols(&t, &y)?;
    Ok(StabilityResult {
        exponent: fit.slope,
        series,
        fit,
        window_start,
    })
}

/// Constants of the asymptotic boundedness estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessConstants {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub k1: f64,
    pub lambda: f64,
}

impl BoundednessConstants {
    /// `(ᾱ₁ + ᾱ₂ + 2λK₁(2+K₁) + ε) / (β̄₁ - β̄₂ - 2λK₁(2+K₁) - ε)` for the scheme.
    pub fn discrete_bound(&self, eps: f64) -> f64 {
        let j = 2.0 * self.lambda * self.k1 * (2.0 + self.k1);
        (self.alpha1 + self.alpha2 + j + eps) / (self.beta1 - self.beta2 - j - eps)
    }

    /// `(ᾱ₁ + ᾱ₂ + 4λK₁²) / (β̄₁ - β̄₂ - λ(4K₁² + 1))` for the exact solution.
    pub fn continuous_bound(&self) -> f64 {
        let k = self.k1 * self.k1;
        (self.alpha1 + self.alpha2 + 4.0 * self.lambda * k) / (self.beta1 - self.beta2 - self.lambda * (4.0 * k + 1.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundednessResult {
    pub series: MomentSeries,
    /// Largest `E|X(t_k)|²` over `t_k >= burn_in`.
    pub limsup_estimate: f64,
    /// Largest `E|X(t_k)|²` over the whole horizon.
    pub sup_estimate: f64,
    pub eps: f64,
    pub theory_bound: f64,
    pub continuous_bound: f64,
}

impl BoundednessResult {
    pub fn within_bound(&self) -> bool {
        self.limsup_estimate <= self.theory_bound
    }
}

/// Late-time maximum of the second moment against the theoretical bound.
#[allow(clippy::too_many_arguments)]
pub fn boundedness_estimate(
    problem: &SdeProblem,
    scheme: &SchemeConfig,
    horizon: f64,
    burn_in: f64,
    n_paths: usize,
    master_seed: u64,
    constants: &BoundednessConstants,
    eps: f64,
) -> Result<BoundednessResult> {
    if !(burn_in >= 0.0 && burn_in < horizon) {
        return domain(format!("burn-in {burn_in} must lie in [0, {horizon})"));
    }
    let series = second_moment_series(problem, scheme, horizon, n_paths, master_seed)?;
    let max_from = |t0: f64| {
        series
            .times
            .iter()
            .zip(&series.mean)
            .filter(|(t, _)| **t >= t0)
            .map(|(_, m)| *m)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(BoundednessResult {
        limsup_estimate: max_from(burn_in),
        sup_estimate: max_from(0.0),
        eps,
        theory_bound: constants.discrete_bound(eps),
        continuous_bound: constants.continuous_bound(),
        series,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionBound {
    /// `D_0, ..., D_{k_max}`.
    pub values: Vec<f64>,
    /// `B / (1 - A)`.
    pub limit: f64,
}

/// Iterates `D_k = A D_{k-1} + B` for `0 < A < 1`, `B >= 0`.
pub fn recursion_bound(a: f64, b: f64, d0: f64, k_max: usize) -> Result<RecursionBound> {
    if !(a > 0.0 && a < 1.0) {
        return domain(format!("A must lie in (0, 1), got {a}"));
    }
    if !(b >= 0.0) {
        return domain(format!("B must be nonnegative, got {b}"));
    }
    let mut values = Vec::with_capacity(k_max + 1);
    let mut d = d0;
    values.push(d);
    for _ in 0..k_max {
        d = a * d + b;
        values.push(d);
    }
    let limit = b / (1.0 - a);
    debug_assert!(d <= limit + d0.abs() * a.powi(k_max as i32) + 1e-9);
    Ok(RecursionBound { values, limit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, Coefficient, TruncationPolicy};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn decay_problem(x0: f64) -> SdeProblem {
        SdeProblem::scalar(
            "decay",
            Coefficient::polynomial(&[0.0, -1.0]),
            Coefficient::zero(),
            Coefficient::zero(),
            0.0,
            x0,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_decay_exponent() {
        let level = 10;
        let delta = 2f64.powi(-level);
        let res = stability_decay(&decay_problem(1.0), &SchemeConfig::plain(level as u32), 10.0, 2, 0).unwrap();
        let expected = 2.0 * (1.0 - delta).ln() / delta;
        assert_relative_eq!(res.exponent, expected, max_relative = 1e-9);
        assert!((res.exponent + 2.0).abs() < 0.02);
        assert_eq!(res.window_start, 1024);
    }

    #[test]
    fn zero_initial_state_is_an_error() {
        let err = stability_decay(&decay_problem(0.0), &SchemeConfig::plain(4), 2.0, 4, 0);
        assert!(matches!(err, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn constants_from_examples() {
        let stab = StabilityConstants { alpha1: 2.0, alpha2: 0.125, k1: 1.0, lambda: 0.5 };
        assert_relative_eq!(stab.exponent(), 0.375, epsilon = 1e-12);
        let bd = BoundednessConstants {
            alpha1: 0.0,
            alpha2: 4.5,
            beta1: 3.0,
            beta2: 0.0,
            k1: 2.0,
            lambda: 0.1,
        };
        assert_relative_eq!(bd.discrete_bound(0.5), 6.6 / 0.9, epsilon = 1e-12);
        assert_relative_eq!(bd.continuous_bound(), 6.1 / 1.3, epsilon = 1e-12);
        assert!((bd.continuous_bound() - 4.69).abs() < 0.005);
    }

    #[test]
    fn contraction_limsup_near_zero() {
        let bd = BoundednessConstants {
            alpha1: 0.0,
            alpha2: 1.0,
            beta1: 2.0,
            beta2: 0.0,
            k1: 0.0,
            lambda: 0.0,
        };
        let res = boundedness_estimate(&decay_problem(1.0), &SchemeConfig::plain(6), 20.0, 15.0, 2, 0, &bd, 0.1).unwrap();
        assert!(res.limsup_estimate < 1e-12);
        assert!(res.within_bound());
        assert_eq!(res.sup_estimate, 1.0);
        assert!(boundedness_estimate(&decay_problem(1.0), &SchemeConfig::plain(6), 2.0, 2.0, 2, 0, &bd, 0.1).is_err());
    }

    #[test]
    fn truncated_stability_series_is_worker_invariant() {
        let problem = preset("example-5.2").unwrap();
        let policy = TruncationPolicy::power_law(1.0, 5.0, 1.0 / 40.0, 0.5).unwrap();
        let scheme = SchemeConfig::truncated(SchemeKind::TruncatedPartial, policy, 5);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| second_moment_series(&problem, &scheme, 4.0, 200, 3).unwrap())
        };
        assert_eq!(run(1), run(5));
    }

    #[test]
    fn recursion_examples() {
        assert!(recursion_bound(1.0, 1.0, 0.0, 5).is_err());
        assert!(recursion_bound(0.0, 1.0, 0.0, 5).is_err());
        assert!(recursion_bound(0.5, -1.0, 0.0, 5).is_err());
        let r = recursion_bound(0.5, 1.0, 0.0, 60).unwrap();
        assert_eq!(r.limit, 2.0);
        assert_eq!(r.values[1], 1.0);
        assert_eq!(r.values[2], 1.5);
        assert!((r.values[60] - 2.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn recursion_matches_closed_form(a in 0.01f64..0.99, b in 0.0f64..10.0, d0 in -100.0f64..100.0, k in 0usize..200) {
            let r = recursion_bound(a, b, d0, k).unwrap();
            let last = r.values[k];
            let closed = a.powi(k as i32) * d0 + b * (1.0 - a.powi(k as i32)) / (1.0 - a);
            prop_assert!((last - closed).abs() <= 1e-9 * (1.0 + closed.abs()));
            prop_assert!(last <= r.limit + d0.abs() * a.powi(k as i32) + 1e-9);
        }
    }
}
