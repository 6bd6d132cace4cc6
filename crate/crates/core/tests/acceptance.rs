//! Acceptance gate. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::time::Instant;

use jumptrunc::analysis::{
    boundedness_estimate, fit_rate, recursion_bound, stability_decay, strong_error, theoretical_rate_high,
    theoretical_rate_high_capped, theoretical_rate_low, BoundednessConstants, Reference, StrongErrorConfig,
};
use jumptrunc::model::{
    check_khasminskii_preserved, geometric, norm, pi_delta, preset, sample_states, truncated_coefficients,
    TruncationMode, TruncationPolicy, GEOMETRIC_JUMP,
};
use jumptrunc::noise::{increment_moment_test, Increments, NoiseGrid};
use jumptrunc::scheme::{SchemeConfig, SchemeKind};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

const SEED: u64 = 42;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, ok: String, bad: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(bad)
    }
}

fn example_one_convergence() -> Outcome {
    let problem = preset("example-5.1").map_err(|e| e.to_string())?;
    let policy = TruncationPolicy::power_law(1.0, 5.0, 0.25, 0.5).map_err(|e| e.to_string())?;
    let scheme = SchemeConfig::truncated(SchemeKind::TruncatedFull, policy, 0);
    let cfg = StrongErrorConfig {
        horizon: 4.0,
        levels: (11..=15).collect(),
        r: 1.0 / 3.0,
        n_paths: 500,
        master_seed: SEED,
    };
    let table = strong_error(&problem, &scheme, Reference::FineLevel { level: 16 }, &cfg).map_err(|e| e.to_string())?;
    let fit = fit_rate(&table).map_err(|e| e.to_string())?;
    let threshold = 1.0 / 12.0 - 0.05;
    let norms: Vec<String> = table.rows.iter().map(|r| format!("{:.3e}", r.norm_error)).collect();
    let msg = format!(
        "slope {:.4} (need >= {threshold:.4}), strictly decreasing {}, errors [{}]",
        fit.slope,
        table.strictly_decreasing(),
        norms.join(", ")
    );
    check(table.rows.len() == 5 && table.strictly_decreasing() && fit.slope >= threshold, msg.clone(), msg)
}

fn example_two_stability() -> Outcome {
    let problem = preset("example-5.2").map_err(|e| e.to_string())?;
    let policy = TruncationPolicy::power_law(1.0, 5.0, 1.0 / 40.0, 0.5).map_err(|e| e.to_string())?;
    let scheme = SchemeConfig::truncated(SchemeKind::TruncatedPartial, policy, 7);
    let res = stability_decay(&problem, &scheme, 20.0, 1000, SEED).map_err(|e| e.to_string())?;
    let x0_sq = problem.x0()[0] * problem.x0()[0];
    let exceed = res
        .series
        .mean
        .iter()
        .zip(&res.series.std_error)
        .skip(1)
        .filter(|(m, se)| **m > x0_sq + 3.0 * **se)
        .count();
    let msg = format!("fitted exponent {:.4} (need <= -0.30), exceedances of |x0|^2 + 3 SE: {exceed}", res.exponent);
    check(res.exponent <= -0.30 && exceed == 0, msg.clone(), msg)
}

fn example_three_boundedness() -> Outcome {
    let problem = preset("example-5.3").map_err(|e| e.to_string())?;
    let policy = TruncationPolicy::power_law(4.0, 3.0, 1.0 / 50.0, 0.5).map_err(|e| e.to_string())?;
    let scheme = SchemeConfig::truncated(SchemeKind::TruncatedPartial, policy, 7);
    let constants = BoundednessConstants {
        alpha1: 0.0,
        alpha2: 4.5,
        beta1: 3.0,
        beta2: 0.0,
        k1: 2.0,
        lambda: 0.1,
    };
    let res = boundedness_estimate(&problem, &scheme, 50.0, 20.0, 1000, SEED, &constants, 0.5).map_err(|e| e.to_string())?;
    let msg = format!(
        "max E|X|^2 on [20, 50] = {:.4} (theory bound {:.4}, golden 7.5, continuous {:.3})",
        res.limsup_estimate, res.theory_bound, res.continuous_bound
    );
    let bound_ok = (res.theory_bound - 22.0 / 3.0).abs() < 1e-12;
    check(bound_ok && res.limsup_estimate <= res.theory_bound && res.limsup_estimate <= 7.5, msg.clone(), msg)
}

fn oracle() -> Outcome {
    let (a, b, c, lambda) = GEOMETRIC_JUMP;
    let problem = geometric(a, b, c, lambda, 1.0).map_err(|e| e.to_string())?;
    let cfg = StrongErrorConfig {
        horizon: 1.0,
        levels: (4..=9).collect(),
        r: 2.0,
        n_paths: 10_000,
        master_seed: SEED,
    };
    let table = strong_error(&problem, &SchemeConfig::plain(0), Reference::GeometricOracle { a, b, c }, &cfg)
        .map_err(|e| e.to_string())?;
    let fit = fit_rate(&table).map_err(|e| e.to_string())?;
    let msg = format!("E|e|^2 slope {:.4} (need [0.85, 1.15]), r^2 {:.4}", fit.slope, fit.r_squared);
    check((0.85..=1.15).contains(&fit.slope), msg.clone(), msg)
}

fn rate_formulas() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    let r = |v: jumptrunc::Result<f64>| v.map_err(|e| e.to_string());
    let values = [
        ("0.15", r(theoretical_rate_high(2.0, 4.0, 40.0, 1.0 / 40.0))?, 0.15),
        ("0.29333", r(theoretical_rate_high(2.0, 2.0, 50.0, 1.0 / 50.0))?, 0.44 * 2.0 / 3.0),
        ("1/12", r(theoretical_rate_low(1.0 / 3.0, 4.0).map(|v| v.1))?, 1.0 / 12.0),
        ("1/4", r(theoretical_rate_low(1.0, 0.0).map(|v| v.1))?, 0.25),
        ("0.23333", r(theoretical_rate_high(2.0, 2.0, 20.0, 1.0 / 20.0))?, 0.7 / 3.0),
    ];
    if let Some((label, got, want)) = values.iter().find(|(_, got, want)| !close(*got, *want)) {
        return Err(format!("{label}: got {got}, expected {want}"));
    }
    let mut grid_points = 0;
    for g in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
        let ps: Vec<f64> = (0..100).map(|j| 2.0 * (1.0 + g) + 0.25 + f64::from(j)).collect();
        let rates: Vec<f64> = ps.iter().map(|&p| theoretical_rate_high_capped(2.0, g, p).unwrap()).collect();
        grid_points += rates.len();
        if rates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(format!("rate not increasing in p at gamma = {g}"));
        }
    }
    for p in [10.0, 20.0, 40.0, 100.0] {
        let gs: Vec<f64> = (0..200).map(|j| 0.05 * f64::from(j)).filter(|g| p > 2.0 * (1.0 + g)).collect();
        let rates: Vec<f64> = gs.iter().map(|&g| theoretical_rate_high_capped(2.0, g, p).unwrap()).collect();
        grid_points += rates.len();
        if rates.windows(2).any(|w| w[1] >= w[0]) {
            return Err(format!("rate not decreasing in gamma at p = {p}"));
        }
    }
    for g in [0.0, 1.0, 2.0, 4.0] {
        let r_max = 2.0 / (2.0 + g);
        let rates: Vec<f64> = (1..=200)
            .map(|j| theoretical_rate_low(r_max * f64::from(j) / 200.0, g).unwrap().1)
            .collect();
        grid_points += rates.len();
        if rates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(format!("low rate not increasing in r at gamma_bar = {g}"));
        }
    }
    Ok(format!("5 printed values to 1e-12, monotone on {grid_points} grid points"))
}

fn run_property<S: Strategy>(name: &str, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| format!("{name}: {e}"))
}

fn invariants() -> Outcome {
    let policy = TruncationPolicy::power_law(1.0, 5.0, 0.25, 0.5).unwrap();
    run_property(
        "truncation mapping",
        (prop::collection::vec(-1e6f64..1e6, 1..4), 1u32..24),
        |(x, j)| {
            let delta = 2f64.powi(-(j as i32));
            let radius = policy.radius(delta).unwrap();
            let y = pi_delta(&x, &policy, delta).unwrap();
            prop_assert!(norm(&y) <= radius * (1.0 + 1e-12));
            if norm(&x) <= radius {
                prop_assert_eq!(&y, &x);
            }
            prop_assert_eq!(pi_delta(&y, &policy, delta).unwrap(), y);
            Ok(())
        },
    )?;

    let problem = preset("example-5.1").unwrap();
    let states = sample_states(1, 1e3, 5000, 3);
    for j in [1, 4, 11, 16] {
        let delta = 2f64.powi(-j);
        let coeffs = truncated_coefficients(&problem, &policy, delta, TruncationMode::Full).unwrap();
        let mut ws = coeffs.workspace();
        let phi = policy.phi(delta);
        for x in &states {
            coeffs.eval_into(x, &mut ws);
            let m = norm(&ws.drift).max(norm(&ws.diffusion)).max(norm(&ws.jump));
            if m > phi * (1.0 + 1e-12) {
                return Err(format!("coefficient bound: |coefficients| = {m} > phi = {phi} at x = {x:?}"));
            }
        }
        let rep = check_khasminskii_preserved(&problem, &policy, delta, 9.0 / 16.0, &states).unwrap();
        if !rep.passed {
            return Err(format!("Khasminskii excess {} at {:?}", rep.max_excess, rep.worst_state));
        }
    }

    for (lambda, delta) in [(0.5, 2f64.powi(-7)), (1.0, 0.5), (5.0, 0.25)] {
        let rep = increment_moment_test(lambda, delta, 100_000, SEED).unwrap();
        if !rep.passed() {
            return Err(format!("Poisson moments at lambda = {lambda}, delta = {delta}: {rep:?}"));
        }
    }
    let n_paths = 200;
    let (mut s1, mut s2, mut n) = (0.0, 0.0, 0.0);
    for i in 0..n_paths {
        let g = NoiseGrid::generate(SEED, i, 1.0, 8, 0.5, 1).unwrap();
        for &b in &g.fine().brownian {
            s1 += b;
            s2 += b * b;
            n += 1.0;
        }
    }
    let delta = 2f64.powi(-8);
    let mean_se = (delta / n).sqrt();
    let var_se = delta * (2.0 / n).sqrt();
    if (s1 / n).abs() > 5.0 * mean_se || (s2 / n - delta).abs() > 5.0 * var_se {
        return Err(format!("Brownian moments off: mean {}, second moment {} vs {delta}", s1 / n, s2 / n));
    }

    run_property("coarsening associativity", (any::<u64>(), 1u32..6, 0u32..6), |(seed, extra, target)| {
        let fine = 6 + extra;
        let g = NoiseGrid::generate(seed, 0, 1.0, fine, 2.0, 2).unwrap();
        let direct = g.coarsen(target).unwrap();
        let mut staged: Increments = g.coarsen(fine - 1).unwrap();
        while staged.level > target {
            staged = staged.halve().unwrap();
        }
        prop_assert_eq!(direct, staged);
        Ok(())
    })?;

    let (a, b, c, lambda) = GEOMETRIC_JUMP;
    let geo = geometric(a, b, c, lambda, 1.0).unwrap();
    let cfg = StrongErrorConfig {
        horizon: 1.0,
        levels: vec![2, 3, 4],
        r: 2.0,
        n_paths: 500,
        master_seed: SEED,
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| strong_error(&geo, &SchemeConfig::plain(0), Reference::GeometricOracle { a, b, c }, &cfg).unwrap())
    };
    let one = run(1);
    for threads in [2, 3, 8] {
        if run(threads) != one {
            return Err(format!("strong_error differs between 1 and {threads} workers"));
        }
    }

    run_property("recursion bound", (0.01f64..0.99, 0.0f64..10.0, -100.0f64..100.0, 0usize..200), |(a, b, d0, k)| {
        let r = recursion_bound(a, b, d0, k).unwrap();
        let closed = a.powi(k as i32) * d0 + b * (1.0 - a.powi(k as i32)) / (1.0 - a);
        prop_assert!((r.values[k] - closed).abs() <= 1e-9 * (1.0 + closed.abs()));
        prop_assert!(r.values[k] <= r.limit + d0.abs() * a.powi(k as i32) + 1e-9);
        prop_assert!((r.limit - b / (1.0 - a)).abs() <= 1e-12 * (1.0 + r.limit));
        Ok(())
    })?;
    let d10 = recursion_bound(0.5, 1.0, 0.0, 10).unwrap();
    if (d10.values[10] - 2.0 * (1.0 - 2f64.powi(-10))).abs() > 1e-12 || d10.limit != 2.0 {
        return Err("recursion example A = 1/2, B = 1".into());
    }
    Ok("truncation, phi bound, Khasminskii, increment moments, coarsening, worker invariance, recursion".into())
}

fn main() {
    let criteria: [Criterion; 6] = [
        ("1 example 5.1 strong convergence", example_one_convergence),
        ("2 example 5.2 mean-square stability", example_two_stability),
        ("3 example 5.3 asymptotic boundedness", example_three_boundedness),
        ("4 geometric oracle slope", oracle),
        ("5 rate formulas", rate_formulas),
        ("6 invariant suites", invariants),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {name}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {name}: {msg} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
