//! End-to-end runs on the named presets: each writes CSV tables, an SVG
//! chart and a JSON summary with pass flags into `<out>/<preset>/`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::analysis::{
    boundedness_estimate, count_blow_ups, fit_norm_rate, fit_rate, second_moment_series, stability_decay,
    strong_error, theoretical_rate_high, theoretical_rate_low, BoundednessConstants, ErrorTable, RateFit,
    Reference, StabilityConstants, StrongErrorConfig,
};
use crate::error::{Error, Result};
use crate::model::{
    check_coefficient_envelope, check_khasminskii_preserved, geometric, norm, preset, sample_states,
    truncated_coefficients, EnvelopeReport, PolicyReport, Regime, SdeProblem, TruncationMode, TruncationPolicy,
    GEOMETRIC_JUMP, PRESET_NAMES,
};
use crate::noise::{step_size, NoiseGrid};
use crate::plot::{Chart, Series};
use crate::scheme::{simulate_path, Record, SchemeConfig, SchemeKind};

/// Allowed shortfall of a fitted convergence slope below the theoretical rate.
pub const SLOPE_MARGIN: f64 = 0.05;
/// A fitted decay must reach this fraction of the theoretical exponent.
pub const DECAY_FRACTION: f64 = 0.8;
/// Accepted slope band for the raw mean-square error against the exact solution.
pub const ORACLE_BAND: (f64, f64) = (0.85, 1.15);
/// Level of the plain-scheme blow-up diagnostic.
pub const DIAGNOSTIC_LEVEL: u32 = 3;

/// Power-law truncation `μ(n) = scale·n^exponent`, `φ(Δ) = Δ^-eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    pub scale: f64,
    pub exponent: f64,
    pub eps: f64,
    pub delta_star: f64,
}

impl PolicyParams {
    pub fn build(&self) -> Result<TruncationPolicy> {
        TruncationPolicy::power_law(self.scale, self.exponent, self.eps, self.delta_star)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Convergence,
    Stability,
    Boundedness,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// A preset name or `"custom"`.
    pub name: String,
    pub kind: ExperimentKind,
    pub scheme: SchemeKind,
    pub policy: Option<PolicyParams>,
    /// Coarse levels for convergence runs; the single simulation level for
    /// stability and boundedness runs.
    pub levels: Vec<u32>,
    pub reference_level: u32,
    pub r: f64,
    pub n_paths: usize,
    pub horizon: f64,
    pub burn_in: f64,
    pub master_seed: u64,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    /// Default parameters of `kind` on the preset `name`.
    pub fn preset_default(name: &str, kind: ExperimentKind, master_seed: u64, out_dir: impl Into<PathBuf>) -> Result<Self> {
        let (scheme, policy) = match name {
            "example-5.1" => (SchemeKind::TruncatedFull, Some((1.0, 5.0, 0.25))),
            "example-5.2" => (SchemeKind::TruncatedPartial, Some((1.0, 5.0, 1.0 / 40.0))),
            "example-5.3" => (SchemeKind::TruncatedPartial, Some((4.0, 3.0, 1.0 / 50.0))),
            "geometric-jump" => (SchemeKind::Plain, None),
            other => {
                return Err(Error::Configuration(format!(
                    "unknown preset '{other}', expected one of {}",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        let policy = policy.map(|(scale, exponent, eps)| PolicyParams {
            scale,
            exponent,
            eps,
            delta_star: 0.5,
        });
        let mut spec = Self {
            name: name.to_string(),
            kind,
            scheme,
            policy,
            levels: vec![7],
            reference_level: 12,
            r: 2.0,
            n_paths: 1000,
            horizon: 20.0,
            burn_in: 10.0,
            master_seed,
            out_dir: out_dir.into(),
        };
        match (name, kind) {
            ("geometric-jump", ExperimentKind::Convergence | ExperimentKind::Oracle) => {
                spec.kind = ExperimentKind::Oracle;
                spec.levels = (4..=9).collect();
                spec.reference_level = 9;
                spec.n_paths = 10_000;
                spec.horizon = 1.0;
            }
            (_, ExperimentKind::Oracle) => {
                return Err(Error::Configuration("the oracle benchmark runs on the geometric-jump preset only".into()))
            }
            ("example-5.1", ExperimentKind::Convergence) => {
                spec.levels = (11..=15).collect();
                spec.reference_level = 16;
                spec.r = 1.0 / 3.0;
                spec.n_paths = 500;
                spec.horizon = 4.0;
            }
            (_, ExperimentKind::Convergence) => {
                spec.levels = (6..=10).collect();
                spec.reference_level = 12;
                spec.n_paths = 500;
                spec.horizon = 1.0;
            }
            ("example-5.3", ExperimentKind::Boundedness) => {
                spec.horizon = 50.0;
                spec.burn_in = 20.0;
            }
            _ => {}
        }
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Configuration(msg));
        if self.name != "custom" && !PRESET_NAMES.contains(&self.name.as_str()) {
            return fail(format!("unknown preset '{}'", self.name));
        }
        if let Some(p) = &self.policy {
            if !(p.eps > 0.0 && p.eps <= 0.25) {
                return fail(format!("policy eps must lie in (0, 1/4], got {}", p.eps));
            }
            p.build()?;
        } else if self.scheme != SchemeKind::Plain {
            return fail("truncated schemes need a policy".into());
        }
        if self.levels.is_empty() {
            return fail("levels must not be empty".into());
        }
        if !(self.r > 0.0 && self.r.is_finite()) {
            return fail(format!("r must be positive, got {}", self.r));
        }
        if self.n_paths < 2 {
            return fail(format!("n_paths must be at least 2, got {}", self.n_paths));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return fail(format!("horizon must be positive, got {}", self.horizon));
        }
        match self.kind {
            ExperimentKind::Convergence => {
                if let Some(&l) = self.levels.iter().find(|&&l| l > self.reference_level) {
                    return fail(format!("level {l} is finer than the reference level {}", self.reference_level));
                }
            }
            ExperimentKind::Stability | ExperimentKind::Boundedness => {
                if self.levels.len() != 1 {
                    return fail(format!("time-series runs take exactly one level, got {:?}", self.levels));
                }
                if self.kind == ExperimentKind::Boundedness && !(self.burn_in >= 0.0 && self.burn_in < self.horizon) {
                    return fail(format!("burn_in must lie in [0, horizon), got {}", self.burn_in));
                }
            }
            ExperimentKind::Oracle => {}
        }
        Ok(())
    }

    fn scheme_config(&self, level: u32) -> Result<SchemeConfig> {
        Ok(match &self.policy {
            Some(p) if self.scheme != SchemeKind::Plain => SchemeConfig::truncated(self.scheme, p.build()?, level),
            _ => SchemeConfig::plain(level),
        })
    }

    fn dir(&self) -> PathBuf {
        self.out_dir.join(&self.name)
    }
}

/// Closed-form quantities attached to a preset.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PresetTheory {
    pub stability: Option<StabilityConstants>,
    pub boundedness: Option<BoundednessConstants>,
    /// `ε` in the discrete boundedness bound.
    pub bound_eps: f64,
    /// Frozen empirical ceiling on the late-time second moment.
    pub golden_bound: Option<f64>,
}

pub fn preset_theory(name: &str) -> PresetTheory {
    match name {
        "example-5.2" => PresetTheory {
            stability: Some(StabilityConstants {
                alpha1: 2.0,
                alpha2: 0.125,
                k1: 1.0,
                lambda: 0.5,
            }),
            ..PresetTheory::default()
        },
        "example-5.3" => PresetTheory {
            boundedness: Some(BoundednessConstants {
                alpha1: 0.0,
                alpha2: 4.5,
                beta1: 3.0,
                beta2: 0.0,
                k1: 2.0,
                lambda: 0.1,
            }),
            bound_eps: 0.5,
            golden_bound: Some(7.5),
            ..PresetTheory::default()
        },
        _ => PresetTheory::default(),
    }
}

/// Theoretical rate of `E|e|^r` for a preset at moment order `r`, when `r`
/// lies in the domain of the applicable formula.
pub fn theory_rate(name: &str, r: f64) -> Option<f64> {
    let rate = match name {
        "example-5.1" => theoretical_rate_low(r, 4.0).map(|(_, rate)| rate),
        "example-5.2" => theoretical_rate_high(r, 4.0, 40.0, 1.0 / 40.0),
        "example-5.3" => theoretical_rate_high(r, 2.0, 50.0, 1.0 / 50.0),
        "geometric-jump" if r == 2.0 => Ok(1.0),
        _ => return None,
    };
    match rate {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("no theoretical rate for {name} at r = {r}: {e}");
            None
        }
    }
}

/// Files written by a run and its summary.
#[derive(Clone, Debug)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub summary: Value,
    pub passed: bool,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn csv(&mut self, name: &str, write: impl FnOnce(BufWriter<File>) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        write(BufWriter::new(File::create(&path)?))?;
        self.files.push(path);
        Ok(())
    }

    fn chart(&mut self, name: &str, chart: &Chart) {
        let path = self.dir.join(name);
        match chart.write(&path) {
            Ok(()) => self.files.push(path),
            Err(e) => log::warn!("could not write {}: {e}", path.display()),
        }
    }

    fn finish(mut self, summary: Value, passed: bool) -> Result<Artifacts> {
        let path = self.dir.join("summary.json");
        let mut text = serde_json::to_string_pretty(&summary)?;
        text.push('\n');
        fs::write(&path, text)?;
        self.files.push(path);
        Ok(Artifacts {
            dir: self.dir,
            files: self.files,
            summary,
            passed,
        })
    }
}

fn fit_json(fit: &RateFit) -> Value {
    json!({
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
    })
}

fn error_chart(title: &str, tables: &[(&str, &ErrorTable)], guide: Option<f64>) -> Chart {
    let mut series: Vec<Series> = tables
        .iter()
        .map(|(label, t)| {
            Series::line(*label, t.rows.iter().map(|r| (r.delta, r.norm_error)).collect()).with_markers()
        })
        .collect();
    if let (Some(rate), Some((_, t))) = (guide, tables.first()) {
        if let (Some(first), Some(last)) = (t.rows.first(), t.rows.last()) {
            let slope = rate / t.r;
            let c = first.norm_error / first.delta.powf(slope);
            series.push(
                Series::line(
                    format!("slope {:.4}", slope),
                    vec![(first.delta, first.norm_error), (last.delta, c * last.delta.powf(slope))],
                )
                .dashed(),
            );
        }
    }
    Chart {
        title: title.into(),
        x_label: "step size".into(),
        y_label: "strong error (norm)".into(),
        log_x: true,
        log_y: true,
        series,
    }
}

/// Coarse-versus-fine strong errors with a log-log rate fit.
pub fn run_convergence(problem: &SdeProblem, spec: &ExperimentSpec) -> Result<Artifacts> {
    spec.validate()?;
    if spec.kind == ExperimentKind::Oracle || spec.name == "geometric-jump" {
        return run_oracle(spec);
    }
    let scheme = spec.scheme_config(0)?;
    let cfg = StrongErrorConfig {
        horizon: spec.horizon,
        levels: spec.levels.clone(),
        r: spec.r,
        n_paths: spec.n_paths,
        master_seed: spec.master_seed,
    };
    let reference = Reference::FineLevel {
        level: spec.reference_level,
    };
    let table = strong_error(problem, &scheme, reference, &cfg)?;
    let fit = fit_rate(&table)?;
    let norm_fit = fit_norm_rate(&table)?;
    let theory = theory_rate(&spec.name, spec.r);
    let decreasing = table.strictly_decreasing();
    let slope_ok = theory.map(|t| fit.slope >= t - SLOPE_MARGIN);
    let plain_blow_ups = if spec.scheme != SchemeKind::Plain {
        Some(count_blow_ups(
            problem,
            &SchemeConfig::plain(DIAGNOSTIC_LEVEL),
            spec.horizon,
            spec.n_paths,
            spec.master_seed,
        )?)
    } else {
        None
    };
    let passed = decreasing && slope_ok.unwrap_or(true);

    let mut out = Writer::new(spec.dir())?;
    out.csv("errors.csv", |w| table.write_csv(w))?;
    out.chart("plot.svg", &error_chart(&format!("{} strong error, r = {:.4}", spec.name, spec.r), &[("scheme", &table)], theory));
    let summary = json!({
        "preset": spec.name,
        "experiment": "convergence",
        "seed": spec.master_seed,
        "spec": spec,
        "theory_rate": theory,
        "fitted_slope": fit.slope,
        "fit": fit_json(&fit),
        "norm_fit": fit_json(&norm_fit),
        "rows": table.rows,
        "diagnostics": {
            "plain_blow_ups": plain_blow_ups,
            "plain_level": DIAGNOSTIC_LEVEL,
        },
        "pass": {
            "strictly_decreasing": decreasing,
            "slope": slope_ok,
        },
        "passed": passed,
    });
    out.finish(summary, passed)
}

fn write_sample_path(out: &mut Writer, problem: &SdeProblem, spec: &ExperimentSpec, scheme: &SchemeConfig) -> Result<Vec<(f64, f64)>> {
    let grid = NoiseGrid::generate(
        spec.master_seed,
        0,
        spec.horizon,
        scheme.level,
        problem.intensity(),
        problem.noise_dim(),
    )?;
    let res = simulate_path(problem, &scheme.clone().with_record(Record::FullPath), &grid)?;
    let states = res.states.expect("full path was requested");
    let d = problem.dim();
    let step = step_size(scheme.level);
    out.csv("paths.csv", |w| {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for (k, row) in states.chunks(d).enumerate() {
            let mut rec = vec![(k as f64 * step).to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(states.chunks(d).enumerate().map(|(k, row)| (k as f64 * step, row[0])).collect())
}

/// Mean-square decay of the second moment, with one sample path.
pub fn run_stability(problem: &SdeProblem, spec: &ExperimentSpec) -> Result<Artifacts> {
    spec.validate()?;
    let scheme = spec.scheme_config(spec.levels[0])?;
    let res = stability_decay(problem, &scheme, spec.horizon, spec.n_paths, spec.master_seed)?;
    let theory = preset_theory(&spec.name).stability.map(|c| c.exponent());
    let x0_sq: f64 = problem.x0().iter().map(|v| v * v).sum();
    let exceedances = res
        .series
        .mean
        .iter()
        .zip(&res.series.std_error)
        .skip(1)
        .filter(|(m, se)| **m > x0_sq + 3.0 * **se)
        .count();
    let decay_ok = theory.map(|t| res.exponent <= -DECAY_FRACTION * t);
    let passed = exceedances == 0 && decay_ok.unwrap_or(true);

    let mut out = Writer::new(spec.dir())?;
    out.csv("series.csv", |w| res.series.write_csv(w))?;
    let path = write_sample_path(&mut out, problem, spec, &scheme)?;
    let mut series = vec![Series::line(
        "E|X|^2",
        res.series.times.iter().copied().zip(res.series.mean.iter().copied()).collect(),
    )];
    if let Some(t) = theory {
        series.push(
            Series::line(
                format!("|x0|^2 exp(-{t}t)"),
                res.series.times.iter().step_by(16).map(|&s| (s, x0_sq * (-t * s).exp())).collect(),
            )
            .dashed(),
        );
    }
    out.chart(
        "plot.svg",
        &Chart {
            title: format!("{} second moment", spec.name),
            x_label: "t".into(),
            y_label: "E|X|^2".into(),
            log_y: true,
            series,
            ..Chart::default()
        },
    );
    out.chart(
        "path.svg",
        &Chart {
            title: format!("{} sample path", spec.name),
            x_label: "t".into(),
            y_label: "X".into(),
            series: vec![Series::line("path 0", path)],
            ..Chart::default()
        },
    );
    let summary = json!({
        "preset": spec.name,
        "experiment": "stability",
        "seed": spec.master_seed,
        "spec": spec,
        "theory_exponent": theory,
        "theory_rate": theory_rate(&spec.name, 2.0),
        "fitted_exponent": res.exponent,
        "fit": fit_json(&res.fit),
        "window_start": res.window_start,
        "exceedances": exceedances,
        "blow_ups": res.series.blow_ups,
        "pass": {
            "decay": decay_ok,
            "no_exceedance": exceedances == 0,
        },
        "passed": passed,
    });
    out.finish(summary, passed)
}

/// Late-time maximum of the second moment against the asymptotic bounds.
pub fn run_boundedness(problem: &SdeProblem, spec: &ExperimentSpec) -> Result<Artifacts> {
    spec.validate()?;
    let scheme = spec.scheme_config(spec.levels[0])?;
    let theory = preset_theory(&spec.name);
    let (series, limsup, bound, continuous) = match &theory.boundedness {
        Some(c) => {
            let b = boundedness_estimate(
                problem,
                &scheme,
                spec.horizon,
                spec.burn_in,
                spec.n_paths,
                spec.master_seed,
                c,
                theory.bound_eps,
            )?;
            (b.series, b.limsup_estimate, Some(b.theory_bound), Some(b.continuous_bound))
        }
        None => {
            let s = second_moment_series(problem, &scheme, spec.horizon, spec.n_paths, spec.master_seed)?;
            let m = s
                .times
                .iter()
                .zip(&s.mean)
                .filter(|(t, _)| **t >= spec.burn_in)
                .map(|(_, m)| *m)
                .fold(f64::NEG_INFINITY, f64::max);
            (s, m, None, None)
        }
    };
    let bound_ok = bound.map(|b| limsup <= b);
    let golden_ok = theory.golden_bound.map(|g| limsup <= g);
    let passed = limsup.is_finite() && bound_ok.unwrap_or(true) && golden_ok.unwrap_or(true);

    let mut out = Writer::new(spec.dir())?;
    out.csv("series.csv", |w| series.write_csv(w))?;
    let path = write_sample_path(&mut out, problem, spec, &scheme)?;
    let mut lines = vec![Series::line(
        "E|X|^2",
        series.times.iter().copied().zip(series.mean.iter().copied()).collect(),
    )];
    let span = |v: f64| vec![(0.0, v), (spec.horizon, v)];
    if let Some(b) = bound {
        lines.push(Series::line(format!("discrete bound {b:.3}"), span(b)).dashed());
    }
    if let Some(c) = continuous {
        lines.push(Series::line(format!("continuous bound {c:.3}"), span(c)).dashed());
    }
    out.chart(
        "plot.svg",
        &Chart {
            title: format!("{} second moment", spec.name),
            x_label: "t".into(),
            y_label: "E|X|^2".into(),
            series: lines,
            ..Chart::default()
        },
    );
    out.chart(
        "path.svg",
        &Chart {
            title: format!("{} sample path", spec.name),
            x_label: "t".into(),
            y_label: "X".into(),
            series: vec![Series::line("path 0", path)],
            ..Chart::default()
        },
    );
    let summary = json!({
        "preset": spec.name,
        "experiment": "boundedness",
        "seed": spec.master_seed,
        "spec": spec,
        "theory_bound": bound,
        "bound_eps": theory.bound_eps,
        "continuous_bound": continuous,
        "golden_bound": theory.golden_bound,
        "theory_rate": theory_rate(&spec.name, 2.0),
        "limsup_estimate": limsup,
        "blow_ups": series.blow_ups,
        "pass": {
            "theory_bound": bound_ok,
            "golden_bound": golden_ok,
        },
        "passed": passed,
    });
    out.finish(summary, passed)
}

/// Plain and inactive-truncation schemes against the exact geometric solution,
/// plus a noise-free consistency check.
pub fn run_oracle(spec: &ExperimentSpec) -> Result<Artifacts> {
    spec.validate()?;
    let (a, b, c, lambda) = GEOMETRIC_JUMP;
    let problem = geometric(a, b, c, lambda, 1.0)?;
    let reference = Reference::GeometricOracle { a, b, c };
    let cfg = StrongErrorConfig {
        horizon: spec.horizon,
        levels: spec.levels.clone(),
        r: spec.r,
        n_paths: spec.n_paths,
        master_seed: spec.master_seed,
    };
    let plain = strong_error(&problem, &SchemeConfig::plain(0), reference, &cfg)?;
    let wide = PolicyParams {
        scale: 1e-6,
        exponent: 1.0,
        eps: 0.25,
        delta_star: 0.5,
    };
    let truncated_scheme = SchemeConfig::truncated(SchemeKind::TruncatedFull, wide.build()?, 0);
    let truncated = strong_error(&problem, &truncated_scheme, reference, &cfg)?;
    let plain_fit = fit_rate(&plain)?;
    let truncated_fit = fit_rate(&truncated)?;
    let in_band = |s: f64| s >= ORACLE_BAND.0 && s <= ORACLE_BAND.1;

    // Noise-free: the scheme is the recursion (1 + aΔ)^n.
    let quiet = geometric(a, 0.0, c, 0.0, 1.0)?;
    let quiet_cfg = StrongErrorConfig { n_paths: 2, ..cfg.clone() };
    let quiet_reference = Reference::GeometricOracle { a, b: 0.0, c };
    let quiet_table = strong_error(&quiet, &SchemeConfig::plain(0), quiet_reference, &quiet_cfg)?;
    let quiet_gap = quiet_table
        .rows
        .iter()
        .map(|row| {
            let n = (spec.horizon / row.delta).round() as i32;
            let direct = ((1.0 + a * row.delta).powi(n) - (a * spec.horizon).exp()).abs();
            (row.norm_error - direct).abs()
        })
        .fold(0.0, f64::max);
    let quiet_ok = quiet_gap <= 1e-12;
    let matches_plain = plain.rows == truncated.rows;
    let passed = in_band(plain_fit.slope) && in_band(truncated_fit.slope) && quiet_ok && matches_plain;

    let mut out = Writer::new(spec.dir())?;
    out.csv("errors.csv", |w| plain.write_csv(w))?;
    out.csv("errors_truncated.csv", |w| truncated.write_csv(w))?;
    out.chart(
        "plot.svg",
        &error_chart(
            "geometric jump-diffusion vs exact solution",
            &[("plain", &plain), ("truncated", &truncated)],
            Some(1.0),
        ),
    );
    let summary = json!({
        "preset": spec.name,
        "experiment": "oracle",
        "seed": spec.master_seed,
        "spec": spec,
        "coefficients": {"a": a, "b": b, "c": c, "lambda": lambda},
        "theory_rate": 1.0,
        "fitted_slope": plain_fit.slope,
        "fit": fit_json(&plain_fit),
        "truncated_fit": fit_json(&truncated_fit),
        "noise_free_max_gap": quiet_gap,
        "pass": {
            "plain_slope": in_band(plain_fit.slope),
            "truncated_slope": in_band(truncated_fit.slope),
            "truncated_matches_plain": matches_plain,
            "noise_free": quiet_ok,
        },
        "passed": passed,
    });
    out.finish(summary, passed)
}

/// Sampled checks of the truncation policy and the structural conditions of a
/// preset.
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub preset: String,
    pub mode: TruncationMode,
    pub policy: PolicyReport,
    pub envelope: EnvelopeReport,
    /// Largest ratio of the truncated (super-linear) coefficients to `φ(Δ)`
    /// over the sampled steps and states.
    pub phi_bound_ratio: f64,
    pub phi_bound_ok: bool,
    /// Largest Khasminskii excess over the sampled steps, for presets with a
    /// stated constant.
    pub khasminskii_k_bar: Option<f64>,
    pub khasminskii_max_excess: Option<f64>,
    pub khasminskii_ok: Option<bool>,
    pub passed: bool,
}

/// Runs the policy, envelope, `φ(Δ)`-bound and Khasminskii checks on a
/// truncated preset.
pub fn check_assumptions(name: &str) -> Result<AssumptionReport> {
    let spec = ExperimentSpec::preset_default(name, ExperimentKind::Convergence, 0, ".")?;
    let (Some(params), Some(mode)) = (spec.policy, spec.scheme.truncation_mode()) else {
        return Err(Error::Configuration(format!("preset {name} is not run with truncation")));
    };
    let problem = preset(name)?;
    let policy = params.build()?;
    let (regime, k_bar) = match name {
        "example-5.1" => (Regime::Full, Some(9.0 / 16.0)),
        "example-5.2" => (Regime::Partial { p_bar: 40.0 }, None),
        _ => (Regime::Partial { p_bar: 50.0 }, None),
    };
    let policy_report = policy.check(regime);
    let radii: Vec<f64> = (0..=6).map(|j| 2f64.powi(j)).collect();
    let envelope = check_coefficient_envelope(&problem, &policy, mode, &radii, 200)?;
    let states = sample_states(problem.dim(), 100.0, 2000, 7);
    let steps: Vec<f64> = policy.sample_steps().into_iter().filter(|d| *d >= 2f64.powi(-20)).collect();
    let (d, dm) = (problem.dim(), problem.dim() * problem.noise_dim());
    let mut ratio = 0.0_f64;
    let mut excess: Option<f64> = None;
    for &delta in &steps {
        let coeffs = truncated_coefficients(&problem, &policy, delta, mode)?;
        let mut ws = coeffs.workspace();
        let phi = policy.phi(delta);
        for x in &states {
            let m = match coeffs.superlinear_parts(x) {
                Some((f, g)) => norm(&f).max(norm(&g)),
                None => {
                    coeffs.eval_into(x, &mut ws);
                    norm(&ws.drift[..d]).max(norm(&ws.diffusion[..dm])).max(norm(&ws.jump[..d]))
                }
            };
            ratio = ratio.max(m / phi);
        }
        if let Some(k) = k_bar {
            let rep = check_khasminskii_preserved(&problem, &policy, delta, k, &states)?;
            excess = Some(excess.map_or(rep.max_excess, |e| e.max(rep.max_excess)));
        }
    }
    let phi_bound_ok = ratio <= 1.0 + 1e-12;
    let khasminskii_ok = excess.map(|e| e <= 1e-9);
    let passed = policy_report.passed() && envelope.passed && phi_bound_ok && khasminskii_ok.unwrap_or(true);
    Ok(AssumptionReport {
        preset: name.to_string(),
        mode,
        policy: policy_report,
        envelope,
        phi_bound_ratio: ratio,
        phi_bound_ok,
        khasminskii_k_bar: k_bar,
        khasminskii_max_excess: excess,
        khasminskii_ok,
        passed,
    })
}

fn run_preset(name: &str, kind: ExperimentKind, seed: u64, out: &Path) -> Result<Artifacts> {
    let spec = ExperimentSpec::preset_default(name, kind, seed, out)?;
    let problem = preset(name)?;
    match kind {
        ExperimentKind::Convergence => run_convergence(&problem, &spec),
        ExperimentKind::Stability => run_stability(&problem, &spec),
        ExperimentKind::Boundedness => run_boundedness(&problem, &spec),
        ExperimentKind::Oracle => run_oracle(&spec),
    }
}

/// Strong `L^{1/3}` errors of the fully truncated scheme on the quintic-drift example.
pub fn run_example_5_1(seed: u64, out: &Path) -> Result<Artifacts> {
    run_preset("example-5.1", ExperimentKind::Convergence, seed, out)
}

/// Mean-square decay of the partially truncated scheme.
pub fn run_example_5_2(seed: u64, out: &Path) -> Result<Artifacts> {
    run_preset("example-5.2", ExperimentKind::Stability, seed, out)
}

/// Asymptotic boundedness of the partially truncated scheme.
pub fn run_example_5_3(seed: u64, out: &Path) -> Result<Artifacts> {
    run_preset("example-5.3", ExperimentKind::Boundedness, seed, out)
}

pub fn run_oracle_benchmark(seed: u64, out: &Path) -> Result<Artifacts> {
    run_preset("geometric-jump", ExperimentKind::Oracle, seed, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn preset_theory_values() {
        assert_relative_eq!(theory_rate("example-5.1", 1.0 / 3.0).unwrap(), 1.0 / 12.0, epsilon = 1e-12);
        assert_relative_eq!(theory_rate("example-5.2", 2.0).unwrap(), 0.15, epsilon = 1e-12);
        assert_relative_eq!(theory_rate("example-5.3", 2.0).unwrap(), 0.29333333333333333, epsilon = 1e-12);
        assert!(theory_rate("example-5.1", 2.0).is_none());
        assert_relative_eq!(preset_theory("example-5.2").stability.unwrap().exponent(), 0.375, epsilon = 1e-12);
        let b = preset_theory("example-5.3");
        assert_relative_eq!(b.boundedness.unwrap().discrete_bound(b.bound_eps), 7.333333333333333, epsilon = 1e-12);
    }

    #[test]
    fn defaults_and_validation() {
        let s = ExperimentSpec::preset_default("example-5.1", ExperimentKind::Convergence, 42, "out").unwrap();
        assert_eq!(s.levels, vec![11, 12, 13, 14, 15]);
        assert_eq!((s.reference_level, s.n_paths, s.horizon), (16, 500, 4.0));
        assert_relative_eq!(s.r, 1.0 / 3.0);
        s.validate().unwrap();
        let bad = ExperimentSpec {
            policy: Some(PolicyParams { eps: 0.3, ..s.policy.unwrap() }),
            ..s.clone()
        };
        assert!(bad.validate().is_err());
        assert!(ExperimentSpec { levels: vec![17], ..s.clone() }.validate().is_err());
        assert!(ExperimentSpec { name: "nope".into(), ..s.clone() }.validate().is_err());
        assert!(ExperimentSpec::preset_default("nope", ExperimentKind::Convergence, 0, "out").is_err());
        assert!(ExperimentSpec::preset_default("example-5.2", ExperimentKind::Oracle, 0, "out").is_err());
        let b = ExperimentSpec::preset_default("example-5.3", ExperimentKind::Boundedness, 0, "out").unwrap();
        assert_eq!((b.horizon, b.burn_in, b.levels.clone()), (50.0, 20.0, vec![7]));
        assert!(ExperimentSpec { burn_in: 50.0, ..b }.validate().is_err());
    }

    #[test]
    fn assumption_reports() {
        let one = check_assumptions("example-5.1").unwrap();
        assert!(one.passed, "{one:?}");
        assert_eq!(one.khasminskii_ok, Some(true));
        assert!(check_assumptions("example-5.2").unwrap().passed);
        // the stated policy of the third example keeps the clamp radius below one
        let three = check_assumptions("example-5.3").unwrap();
        assert!(three.envelope.passed && three.policy.passed());
        assert!(!three.phi_bound_ok && !three.passed);
        assert!(check_assumptions("geometric-jump").is_err());
    }

    #[test]
    fn small_convergence_run_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = ExperimentSpec::preset_default("example-5.2", ExperimentKind::Convergence, 3, dir.path()).unwrap();
        spec.levels = vec![3, 4, 5];
        spec.reference_level = 7;
        spec.n_paths = 50;
        let problem = preset("example-5.2").unwrap();
        let a = run_convergence(&problem, &spec).unwrap();
        let csv = fs::read_to_string(a.dir.join("errors.csv")).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(a.dir.join("plot.svg").exists());
        let summary: Value = serde_json::from_str(&fs::read_to_string(a.dir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["preset"], "example-5.2");
        assert_eq!(summary["theory_rate"], 0.15);
        assert_eq!(summary["passed"], a.passed);
        let again = run_convergence(&problem, &spec).unwrap();
        assert_eq!(csv, fs::read_to_string(again.dir.join("errors.csv")).unwrap());
    }
}
