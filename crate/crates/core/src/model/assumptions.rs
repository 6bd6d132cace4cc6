//! Sampling-based spot checks of the structural assumptions and the closed-form
//! constants derived from them. None of these are proofs: a check can only
//! falsify, or fail to falsify, on the states it is given.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::truncation::clamp_into;
use super::{dot, norm, truncated_coefficients, SdeProblem, TruncationMode, TruncationPolicy};
use crate::error::{domain, Result};

/// Constants of the growth, one-sided Lipschitz and Khasminskii conditions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct AssumptionConstants {
    pub l1: f64,
    pub l2: f64,
    /// Super-linear growth exponent.
    pub gamma: f64,
    pub r_bar: f64,
    pub p_bar: f64,
    pub k1: f64,
    pub k2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivedConstants {
    pub l3: f64,
    pub k3: f64,
    pub k4: f64,
}

/// `L3`, `K3`, `K4` for moment orders `r in [2, r_bar)` and `p in [2, p_bar)`.
pub fn derived_constants(c: &AssumptionConstants, r: f64, p: f64) -> Result<DerivedConstants> {
    if !(r >= 2.0 && r < c.r_bar) {
        return domain(format!("need 2 <= r < r_bar, got r = {r}, r_bar = {}", c.r_bar));
    }
    if !(p >= 2.0 && p < c.p_bar) {
        return domain(format!("need 2 <= p < p_bar, got p = {p}, p_bar = {}", c.p_bar));
    }
    let lr = (c.l1 * c.l1 + (r - 1.0) * (c.r_bar - 1.0)) / (c.r_bar - r);
    let kp = (c.k1 * c.k1 + (p - 1.0) * (c.p_bar - 1.0)) / (c.p_bar - p);
    Ok(DerivedConstants {
        l3: 2.0 * c.l1 + c.l2 + lr,
        k3: 2.0 * c.k1 + c.k2 + kp,
        k4: 2.0 * c.k1 + 2.0 * c.k2 + kp,
    })
}

/// Deterministic state sample: `n_uniform` points uniform in `[-half_width, half_width]^dim`,
/// the origin, and log-spaced radial points (`1e-3 ..= 1e3`) along `±(1, ..., 1)/sqrt(dim)`.
pub fn sample_states(dim: usize, half_width: f64, n_uniform: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states: Vec<Vec<f64>> = (0..n_uniform)
        .map(|_| (0..dim).map(|_| rng.gen_range(-half_width..=half_width)).collect())
        .collect();
    states.push(vec![0.0; dim]);
    let unit = 1.0 / (dim as f64).sqrt();
    for j in 0..=60 {
        let radius = 10f64.powf(-3.0 + 0.1 * f64::from(j));
        for sign in [1.0, -1.0] {
            states.push(vec![sign * radius * unit; dim]);
        }
    }
    states
}

#[derive(Clone, Debug, Serialize)]
pub struct KhasminskiiReport {
    /// `max over states of LHS - 2 K (1 + |x|^2)`.
    pub max_excess: f64,
    pub worst_state: Vec<f64>,
    pub n_states: usize,
    pub passed: bool,
}

/// Evaluates `2 x·f_Δ + |g_Δ|² + λ(2 x·h_Δ + |h_Δ|²) - 2 K (1 + |x|²)` for the
/// fully truncated coefficients on every sample state.
pub fn check_khasminskii_preserved(
    problem: &SdeProblem,
    policy: &TruncationPolicy,
    delta: f64,
    k_bar: f64,
    states: &[Vec<f64>],
) -> Result<KhasminskiiReport> {
    let coeffs = truncated_coefficients(problem, policy, delta, TruncationMode::Full)?;
    let mut ws = coeffs.workspace();
    let lambda = problem.intensity();
    let mut max_excess = f64::NEG_INFINITY;
    let mut worst_state = Vec::new();
    for x in states {
        coeffs.eval_into(x, &mut ws);
        let g2 = ws.diffusion.iter().map(|v| v * v).sum::<f64>();
        let h2 = ws.jump.iter().map(|v| v * v).sum::<f64>();
        let lhs = 2.0 * dot(x, &ws.drift) + g2 + lambda * (2.0 * dot(x, &ws.jump) + h2);
        let excess = lhs - 2.0 * k_bar * (1.0 + dot(x, x));
        if excess > max_excess || worst_state.is_empty() {
            max_excess = excess;
            worst_state = x.clone();
        }
    }
    Ok(KhasminskiiReport {
        max_excess,
        worst_state,
        n_states: states.len(),
        passed: max_excess <= 1e-9,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeReport {
    /// Largest `sup |coefficient| / mu(n)` seen over the sampled radii.
    pub worst_ratio: f64,
    pub worst_radius: f64,
    pub passed: bool,
}

/// Checks `sup_{|x| <= n} (|f| ∨ |g| ∨ |h|) <= mu(n)` (full mode) or
/// `sup_{|x| <= n} (|F| ∨ |G|) <= mu(n)` (partial mode) on sampled states of each ball.
pub fn check_coefficient_envelope(
    problem: &SdeProblem,
    policy: &TruncationPolicy,
    mode: TruncationMode,
    radii: &[f64],
    samples_per_radius: usize,
) -> Result<EnvelopeReport> {
    let (d, dm) = (problem.dim(), problem.dim() * problem.noise_dim());
    let dec = match mode {
        TruncationMode::Partial => Some(problem.decomposition().ok_or_else(|| {
            crate::Error::Configuration(format!("problem {} has no decomposition", problem.name))
        })?),
        TruncationMode::Full => None,
    };
    let mut worst_ratio = 0.0_f64;
    let mut worst_radius = f64::NAN;
    let mut y = vec![0.0; d];
    for (i, &n) in radii.iter().enumerate() {
        let bound = policy.mu(n);
        for x in sample_states(d, n, samples_per_radius, 0x5eed ^ i as u64) {
            clamp_into(&x, n, &mut y);
            let m = match dec {
                None => norm(&problem.drift.eval_vec(&y, d))
                    .max(norm(&problem.diffusion.eval_vec(&y, dm)))
                    .max(norm(&problem.jump.eval_vec(&y, d))),
                Some(dec) => norm(&dec.superlinear_drift.eval_vec(&y, d))
                    .max(norm(&dec.superlinear_diffusion.eval_vec(&y, dm))),
            };
            let ratio = m / bound;
            if ratio > worst_ratio {
                worst_ratio = ratio;
                worst_radius = n;
            }
        }
    }
    Ok(EnvelopeReport {
        worst_ratio,
        worst_radius,
        passed: worst_ratio <= 1.0 + 1e-12,
    })
}

/// Step-size threshold condition for the low-moment rate:
/// `phi(Δ̄) >= mu(L3^{-(1+γ)} (Δ̄^{r/2} phi(Δ̄)^r)^{-1/(2-r)})`.
///
/// Only reported as a predicate; nothing downstream acts on a `false`.
pub fn threshold_condition_holds(
    policy: &TruncationPolicy,
    l3_bar: f64,
    gamma_bar: f64,
    r: f64,
    delta_bar: f64,
) -> bool {
    if !(r > 0.0 && r < 2.0 && delta_bar > 0.0 && delta_bar < 1.0 && l3_bar > 0.0) {
        return false;
    }
    let phi = policy.phi(delta_bar);
    let inner = (delta_bar.powf(r / 2.0) * phi.powf(r)).powf(-1.0 / (2.0 - r));
    phi >= policy.mu(l3_bar.powf(-(1.0 + gamma_bar)) * inner)
}
