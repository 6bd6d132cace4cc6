//! Closed-form convergence exponents.

use crate::error::{domain, Result};

/// High-moment rate `ε(p - (1+γ)r)/(1+γ)` for `r >= 2`, `p > (1+γ)r`, `0 < ε <= 1/4 ∧ 1/p`.
pub fn theoretical_rate_high(r: f64, gamma: f64, p: f64, eps: f64) -> Result<f64> {
    if !(r >= 2.0) {
        return domain(format!("need r >= 2, got {r}"));
    }
    if !(gamma >= 0.0) {
        return domain(format!("need gamma >= 0, got {gamma}"));
    }
    if !(p > (1.0 + gamma) * r) {
        return domain(format!("need p > (1 + gamma) r = {}, got {p}", (1.0 + gamma) * r));
    }
    let cap = 0.25f64.min(1.0 / p);
    if !(eps > 0.0 && eps <= cap) {
        return domain(format!("need 0 < eps <= {cap}, got {eps}"));
    }
    Ok(eps * (p - (1.0 + gamma) * r) / (1.0 + gamma))
}

/// [`theoretical_rate_high`] at the largest admissible `ε = 1/4 ∧ 1/p`.
pub fn theoretical_rate_high_capped(r: f64, gamma: f64, p: f64) -> Result<f64> {
    theoretical_rate_high(r, gamma, p, 0.25f64.min(1.0 / p))
}

/// Full exponent `ε(p - (1+γ)r)/(1+γ) ∧ (p - γr)/p`.
pub fn corollary_exponent(r: f64, gamma: f64, p: f64, eps: f64) -> Result<f64> {
    Ok(theoretical_rate_high(r, gamma, p, eps)?.min((p - gamma * r) / p))
}

/// Optimal low-moment rate for `0 < r <= 2/(2+γ̄)`: returns `(ε, r/2 - rε)` with
/// `ε = r(1+γ̄)/(4+2rγ̄)`, which equals `r(2-r)/(2(2+rγ̄))`.
pub fn theoretical_rate_low(r: f64, gamma_bar: f64) -> Result<(f64, f64)> {
    if !(gamma_bar >= 0.0) {
        return domain(format!("need gamma_bar >= 0, got {gamma_bar}"));
    }
    let r_max = 2.0 / (2.0 + gamma_bar);
    if !(r > 0.0 && r <= r_max) {
        return domain(format!("need 0 < r <= 2/(2 + gamma_bar) = {r_max}, got {r}"));
    }
    let eps = r * (1.0 + gamma_bar) / (4.0 + 2.0 * r * gamma_bar);
    Ok((eps, r / 2.0 - r * eps))
}
