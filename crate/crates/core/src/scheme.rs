//! Explicit time stepping: plain, fully truncated and partially truncated
//! Euler-Maruyama on uniform dyadic grids.
//!
//! Every scheme evaluates its coefficients at the left end point of the step
//! and multiplies the jump coefficient by the Poisson count of the interval:
//!
//! ```text
//! X_{k+1} = X_k + f_Δ(X_k) Δ + g_Δ(X_k) ΔB_k + h_Δ(X_k) ΔN_k
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{
    norm, truncated_coefficients, CoefficientWorkspace, SdeProblem, TruncatedCoefficients,
    TruncationMode, TruncationPolicy,
};
use crate::noise::{step_size, Increments, NoiseGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Plain,
    TruncatedFull,
    TruncatedPartial,
}

impl SchemeKind {
    pub fn truncation_mode(self) -> Option<TruncationMode> {
        match self {
            SchemeKind::Plain => None,
            SchemeKind::TruncatedFull => Some(TruncationMode::Full),
            SchemeKind::TruncatedPartial => Some(TruncationMode::Partial),
        }
    }
}

/// What a path simulation keeps besides the terminal state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Record {
    #[default]
    TerminalOnly,
    FullPath,
    /// `|X_k|^2` at every grid time.
    SecondMomentSeries,
}

#[derive(Clone, Debug)]
pub struct SchemeConfig {
    pub kind: SchemeKind,
    pub policy: Option<TruncationPolicy>,
    /// Step size is `2^-level`.
    pub level: u32,
    pub record: Record,
}

impl SchemeConfig {
    pub fn plain(level: u32) -> Self {
        Self {
            kind: SchemeKind::Plain,
            policy: None,
            level,
            record: Record::TerminalOnly,
        }
    }

    pub fn truncated(kind: SchemeKind, policy: TruncationPolicy, level: u32) -> Self {
        Self {
            kind,
            policy: Some(policy),
            level,
            record: Record::TerminalOnly,
        }
    }

    pub fn with_record(mut self, record: Record) -> Self {
        self.record = record;
        self
    }

    pub fn at_level(&self, level: u32) -> Self {
        Self { level, ..self.clone() }
    }

    pub fn step(&self) -> f64 {
        step_size(self.level)
    }

    /// The coefficients this configuration steps with; checks `Δ <= delta_star`.
    pub fn coefficients<'a>(&self, problem: &'a SdeProblem) -> Result<TruncatedCoefficients<'a>> {
        match (self.kind.truncation_mode(), &self.policy) {
            (None, _) => Ok(TruncatedCoefficients::untruncated(problem)),
            (Some(mode), Some(policy)) => truncated_coefficients(problem, policy, self.step(), mode),
            (Some(_), None) => Err(Error::Configuration(format!(
                "{:?} needs a truncation policy",
                self.kind
            ))),
        }
    }
}

/// Grid values of one simulated path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathResult {
    pub terminal: Vec<f64>,
    /// `(n + 1) x d` row-major states when recorded; row 0 is `x0`.
    pub states: Option<Vec<f64>>,
    /// `|X_k|^2` for `k = 0..=n` when recorded.
    pub second_moments: Option<Vec<f64>>,
    /// First grid index whose state is not finite.
    pub blow_up: Option<usize>,
    /// Number of steps at which the truncation clamp was active.
    pub truncation_hits: usize,
}

impl PathResult {
    pub fn blew_up(&self) -> bool {
        self.blow_up.is_some()
    }
}

/// One explicit step from coefficient values already evaluated at `x`:
/// `out = x + drift Δ + diffusion·dB + jump dN`. `diffusion` is `d x m` row-major.
#[inline]
#[allow(clippy::too_many_arguments)]
pub fn step(
    x: &[f64],
    drift: &[f64],
    diffusion: &[f64],
    jump: &[f64],
    delta: f64,
    db: &[f64],
    dn: u32,
    out: &mut [f64],
) {
    let m = db.len();
    let dn = f64::from(dn);
    for i in 0..x.len() {
        let row = &diffusion[i * m..(i + 1) * m];
        let noise: f64 = row.iter().zip(db).map(|(g, b)| g * b).sum();
        out[i] = x[i] + drift[i] * delta + noise + jump[i] * dn;
    }
}

/// Runs the scheme over explicit increments.
pub fn simulate_increments(
    problem: &SdeProblem,
    config: &SchemeConfig,
    increments: &Increments,
) -> Result<PathResult> {
    if increments.level != config.level {
        return domain(format!(
            "increments are at level {} but the scheme runs at level {}",
            increments.level, config.level
        ));
    }
    if increments.noise_dim != problem.noise_dim() {
        return domain(format!(
            "increments carry {} Brownian components, problem needs {}",
            increments.noise_dim,
            problem.noise_dim()
        ));
    }
    let coeffs = config.coefficients(problem)?;
    let mut ws = coeffs.workspace();
    Ok(run(problem, &coeffs, &mut ws, config.record, increments))
}

fn run(
    problem: &SdeProblem,
    coeffs: &TruncatedCoefficients<'_>,
    ws: &mut CoefficientWorkspace,
    record: Record,
    inc: &Increments,
) -> PathResult {
    let d = problem.dim();
    let n = inc.len();
    let mut x = problem.x0().to_vec();
    let mut next = vec![0.0; d];
    let mut states = (record == Record::FullPath).then(|| {
        let mut v = Vec::with_capacity((n + 1) * d);
        v.extend_from_slice(&x);
        v
    });
    let mut second = (record == Record::SecondMomentSeries).then(|| {
        let mut v = Vec::with_capacity(n + 1);
        v.push(x.iter().map(|v| v * v).sum::<f64>());
        v
    });
    let mut blow_up = None;
    let mut hits = 0;
    for j in 0..n {
        if coeffs.eval_into(&x, ws) {
            hits += 1;
        }
        step(
            &x,
            &ws.drift,
            &ws.diffusion,
            &ws.jump,
            inc.step,
            inc.brownian_at(j),
            inc.jumps[j],
            &mut next,
        );
        std::mem::swap(&mut x, &mut next);
        if blow_up.is_none() && !x.iter().all(|v| v.is_finite()) {
            blow_up = Some(j + 1);
        }
        if let Some(s) = states.as_mut() {
            s.extend_from_slice(&x);
        }
        if let Some(s) = second.as_mut() {
            s.push(x.iter().map(|v| v * v).sum::<f64>());
        }
    }
    PathResult {
        terminal: x,
        states,
        second_moments: second,
        blow_up,
        truncation_hits: hits,
    }
}

/// Simulates one path at `config.level` driven by `grid`.
pub fn simulate_path(problem: &SdeProblem, config: &SchemeConfig, grid: &NoiseGrid) -> Result<PathResult> {
    if config.level > grid.fine_level() {
        return domain(format!(
            "scheme level {} is finer than the grid level {}",
            config.level,
            grid.fine_level()
        ));
    }
    if grid.intensity() != problem.intensity() {
        return domain(format!(
            "grid intensity {} does not match problem intensity {}",
            grid.intensity(),
            problem.intensity()
        ));
    }
    let inc = grid.coarsen(config.level)?;
    simulate_increments(problem, config, &inc)
}

/// Exact solution of `dx = a x dt + b x dB + c x dN` at the grid horizon,
/// driven by the grid's total Brownian displacement and jump count.
pub fn simulate_exact_geometric(a: f64, b: f64, c: f64, grid: &NoiseGrid, x0: f64) -> Result<f64> {
    if !(c > -1.0) {
        return domain(format!("jump rate c must exceed -1, got {c}"));
    }
    let t = grid.horizon();
    let bt = grid.fine().brownian_total()[0];
    let nt = grid.total_jumps() as f64;
    Ok(x0 * ((a - 0.5 * b * b) * t + b * bt).exp() * (1.0 + c).powf(nt))
}

/// `|X_{k+1}| <= |X_k| + phi(Δ)(Δ + |dB_k| + dN_k)`: the per-step growth bound of
/// the fully truncated scheme, given the policy dominates all three coefficients.
pub fn growth_bound_holds(states: &[f64], dim: usize, inc: &Increments, phi: f64) -> bool {
    states
        .chunks_exact(dim)
        .zip(states.chunks_exact(dim).skip(1))
        .enumerate()
        .all(|(j, (a, b))| {
            let bound = norm(a) + phi * (inc.step + norm(inc.brownian_at(j)) + f64::from(inc.jumps[j]));
            norm(b) <= bound * (1.0 + 1e-12)
        })
}
