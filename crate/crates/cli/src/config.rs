//! Run configuration: preset defaults, then the JSON file, then flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use jumptrunc::experiments::{ExperimentKind, ExperimentSpec, PolicyParams};
use jumptrunc::model::{preset, Coefficient, Decomposition, SdeProblem};
use jumptrunc::scheme::SchemeKind;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Convergence,
    Stability,
    Boundedness,
    Oracle,
}

impl Subcommand {
    pub fn kind(self) -> ExperimentKind {
        match self {
            Subcommand::Convergence => ExperimentKind::Convergence,
            Subcommand::Stability => ExperimentKind::Stability,
            Subcommand::Boundedness => ExperimentKind::Boundedness,
            Subcommand::Oracle => ExperimentKind::Oracle,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SchemeArg {
    Plain,
    TruncatedFull,
    TruncatedPartial,
}

impl From<SchemeArg> for SchemeKind {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Plain => SchemeKind::Plain,
            SchemeArg::TruncatedFull => SchemeKind::TruncatedFull,
            SchemeArg::TruncatedPartial => SchemeKind::TruncatedPartial,
        }
    }
}

/// Scalar problem built from coefficient strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineProblem {
    pub drift: String,
    pub diffusion: String,
    pub jump: String,
    #[serde(default)]
    pub intensity: f64,
    pub x0: f64,
    #[serde(default)]
    pub decomposition: Option<InlineDecomposition>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineDecomposition {
    pub linear_drift: String,
    pub superlinear_drift: String,
    pub linear_diffusion: String,
    pub superlinear_diffusion: String,
}

/// Contents of a `--config` file. Every field is optional; missing ones fall
/// back to the preset defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subcommand: Option<Subcommand>,
    pub preset: Option<String>,
    pub problem: Option<InlineProblem>,
    pub seed: Option<u64>,
    pub n_paths: Option<usize>,
    pub levels: Option<Vec<u32>>,
    pub reference_level: Option<u32>,
    pub r: Option<f64>,
    pub horizon: Option<f64>,
    pub burn_in: Option<f64>,
    pub scheme: Option<SchemeArg>,
    pub policy: Option<PolicyParams>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    /// JSON run configuration. Flags override its fields; its optional
    /// `subcommand` field must match the subcommand given here.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Named problem: example-5.1, example-5.2, example-5.3 or geometric-jump.
    #[arg(long)]
    pub preset: Option<String>,
    /// Inline problem drift, e.g. "poly:0,-1" or "zero". Replaces --preset.
    #[arg(long, value_name = "COEFF")]
    pub drift: Option<String>,
    /// Inline problem diffusion coefficient.
    #[arg(long, value_name = "COEFF")]
    pub diffusion: Option<String>,
    /// Inline problem jump coefficient.
    #[arg(long, value_name = "COEFF")]
    pub jump: Option<String>,
    /// Inline problem jump intensity.
    #[arg(long)]
    pub intensity: Option<f64>,
    /// Inline problem initial value.
    #[arg(long)]
    pub x0: Option<f64>,
    /// Inline decomposition for partial truncation: linear part of the drift.
    #[arg(long, value_name = "COEFF", requires_all = ["superlinear_drift", "linear_diffusion", "superlinear_diffusion"])]
    pub linear_drift: Option<String>,
    /// Super-linear part of the drift.
    #[arg(long, value_name = "COEFF")]
    pub superlinear_drift: Option<String>,
    /// Linear part of the diffusion.
    #[arg(long, value_name = "COEFF")]
    pub linear_diffusion: Option<String>,
    /// Super-linear part of the diffusion.
    #[arg(long, value_name = "COEFF")]
    pub superlinear_diffusion: Option<String>,
    /// Master seed [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of Monte Carlo paths [default: per preset].
    #[arg(long)]
    pub n_paths: Option<usize>,
    /// Comma-separated levels; step size is 2^-level.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<u32>>,
    /// Level of the fine reference solution (convergence runs).
    #[arg(long)]
    pub reference_level: Option<u32>,
    /// Moment order of the strong error.
    #[arg(long)]
    pub r: Option<f64>,
    /// Time horizon T.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Start of the window for the late-time maximum (boundedness runs).
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// Time-stepping scheme.
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Truncation policy scale c in mu(n) = c n^a.
    #[arg(long)]
    pub policy_scale: Option<f64>,
    /// Truncation policy exponent a in mu(n) = c n^a.
    #[arg(long)]
    pub policy_exponent: Option<f64>,
    /// Truncation policy eps in phi(delta) = delta^-eps.
    #[arg(long)]
    pub policy_eps: Option<f64>,
    /// Largest admissible step of the truncation policy.
    #[arg(long)]
    pub delta_star: Option<f64>,
    /// Output directory [default: ./out].
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Report format on stdout.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

impl RunArgs {
    fn inline_problem(&self) -> Result<Option<InlineProblem>, CliError> {
        let any = self.drift.is_some() || self.diffusion.is_some() || self.jump.is_some() || self.x0.is_some();
        if !any {
            return Ok(None);
        }
        let need = |v: &Option<String>, flag: &str| {
            v.clone()
                .ok_or_else(|| CliError::Usage(format!("inline problem needs --{flag}")))
        };
        let decomposition = match &self.linear_drift {
            Some(ld) => Some(InlineDecomposition {
                linear_drift: ld.clone(),
                superlinear_drift: need(&self.superlinear_drift, "superlinear-drift")?,
                linear_diffusion: need(&self.linear_diffusion, "linear-diffusion")?,
                superlinear_diffusion: need(&self.superlinear_diffusion, "superlinear-diffusion")?,
            }),
            None => None,
        };
        Ok(Some(InlineProblem {
            drift: need(&self.drift, "drift")?,
            diffusion: need(&self.diffusion, "diffusion")?,
            jump: need(&self.jump, "jump")?,
            intensity: self.intensity.unwrap_or(0.0),
            x0: self
                .x0
                .ok_or_else(|| CliError::Usage("inline problem needs --x0".into()))?,
            decomposition,
        }))
    }
}

/// Parses `poly:c0,c1,...`, `linear:k` or `zero`.
pub fn parse_coefficient(spec: &str) -> Result<Coefficient, CliError> {
    let bad = || {
        CliError::Usage(format!(
            "cannot parse coefficient '{spec}': expected 'poly:c0,c1,...', 'linear:k' or 'zero'"
        ))
    };
    let spec = spec.trim();
    if spec == "zero" {
        return Ok(Coefficient::zero());
    }
    let (kind, args) = spec.split_once(':').ok_or_else(bad)?;
    let nums: Vec<f64> = args
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    if nums.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    match (kind, nums.as_slice()) {
        ("poly", cs) if !cs.is_empty() => Ok(Coefficient::polynomial(cs)),
        ("linear", [k]) => Ok(Coefficient::polynomial(&[0.0, *k])),
        _ => Err(bad()),
    }
}

pub fn build_problem(p: &InlineProblem) -> Result<SdeProblem, CliError> {
    let problem = SdeProblem::scalar(
        "custom",
        parse_coefficient(&p.drift)?,
        parse_coefficient(&p.diffusion)?,
        parse_coefficient(&p.jump)?,
        p.intensity,
        p.x0,
    )?;
    match &p.decomposition {
        None => Ok(problem),
        Some(d) => {
            let dec = Decomposition {
                linear_drift: parse_coefficient(&d.linear_drift)?,
                superlinear_drift: parse_coefficient(&d.superlinear_drift)?,
                linear_diffusion: parse_coefficient(&d.linear_diffusion)?,
                superlinear_diffusion: parse_coefficient(&d.superlinear_diffusion)?,
            };
            let states: Vec<Vec<f64>> = (-40..=40).map(|j| vec![0.25 * f64::from(j)]).collect();
            Ok(problem.with_decomposition(dec, &states)?)
        }
    }
}

/// Reads a config file, reporting schema violations with their field path.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

pub fn parse_config(text: &str) -> Result<RunConfig, String> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.inner().to_string()
        } else {
            format!("{path}: {}", e.inner())
        }
    })?;
    if config.preset.is_none() && config.problem.is_none() {
        return Err("missing field `preset` (or an inline `problem`)".into());
    }
    Ok(config)
}

/// A fully resolved experiment.
pub struct Resolved {
    pub spec: ExperimentSpec,
    pub problem: SdeProblem,
    pub format: Format,
}

pub fn resolve(sub: Subcommand, args: &RunArgs) -> Result<Resolved, CliError> {
    let file = match &args.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = file.subcommand {
        if s != sub {
            return Err(CliError::Usage(format!(
                "config is for subcommand {s:?} but {sub:?} was requested"
            )));
        }
    }
    let inline = match args.inline_problem()? {
        Some(p) => Some(p),
        None if args.preset.is_some() => None,
        None => file.problem.clone(),
    };
    let preset_name = args.preset.clone().or_else(|| if inline.is_some() { None } else { file.preset.clone() });
    let (name, problem) = match (preset_name, inline) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage("give either a preset or an inline problem, not both".into()))
        }
        (Some(name), None) => {
            let problem = preset(&name).map_err(|e| CliError::Usage(e.to_string()))?;
            (name, problem)
        }
        (None, Some(p)) => ("custom".to_string(), build_problem(&p)?),
        (None, None) if sub == Subcommand::Oracle => ("geometric-jump".to_string(), preset("geometric-jump")?),
        (None, None) => return Err(CliError::Usage("missing field `preset` (or an inline problem)".into())),
    };

    let out = args.out.clone().or(file.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let seed = args.seed.or(file.seed).unwrap_or(42);
    let mut spec = if name == "custom" {
        let mut s = ExperimentSpec::preset_default("example-5.2", sub.kind(), seed, &out)?;
        s.name = name.clone();
        s.scheme = SchemeKind::Plain;
        s.policy = None;
        s
    } else {
        ExperimentSpec::preset_default(&name, sub.kind(), seed, &out)?
    };

    if let Some(v) = args.n_paths.or(file.n_paths) {
        spec.n_paths = v;
    }
    if let Some(v) = args.levels.clone().or(file.levels.clone()) {
        spec.levels = v;
    }
    if let Some(v) = args.reference_level.or(file.reference_level) {
        spec.reference_level = v;
    }
    if let Some(v) = args.r.or(file.r) {
        spec.r = v;
    }
    if let Some(v) = args.horizon.or(file.horizon) {
        spec.horizon = v;
    }
    if let Some(v) = args.burn_in.or(file.burn_in) {
        spec.burn_in = v;
    }
    if let Some(p) = file.policy {
        spec.policy = Some(p);
    }
    let flag_policy = [args.policy_scale, args.policy_exponent, args.policy_eps, args.delta_star];
    if flag_policy.iter().any(Option::is_some) {
        let base = spec.policy.unwrap_or(PolicyParams {
            scale: 1.0,
            exponent: f64::NAN,
            eps: f64::NAN,
            delta_star: 0.5,
        });
        let p = PolicyParams {
            scale: args.policy_scale.unwrap_or(base.scale),
            exponent: args.policy_exponent.unwrap_or(base.exponent),
            eps: args.policy_eps.unwrap_or(base.eps),
            delta_star: args.delta_star.unwrap_or(base.delta_star),
        };
        if p.exponent.is_nan() || p.eps.is_nan() {
            return Err(CliError::Usage(
                "a new truncation policy needs --policy-exponent and --policy-eps".into(),
            ));
        }
        spec.policy = Some(p);
    }
    match args.scheme.or(file.scheme) {
        Some(s) => spec.scheme = s.into(),
        None if name == "custom" && spec.policy.is_some() => {
            spec.scheme = if problem.decomposition().is_some() {
                SchemeKind::TruncatedPartial
            } else {
                SchemeKind::TruncatedFull
            }
        }
        None => {}
    }
    spec.validate()?;
    if name == "example-5.1" && sub == Subcommand::Convergence && spec.n_paths < 500 {
        log::warn!(
            "n_paths = {} is below 500; the example's acceptance thresholds assume at least 500 paths",
            spec.n_paths
        );
    }
    let format = args.format.or(file.format).unwrap_or_default();
    Ok(Resolved { spec, problem, format })
}
