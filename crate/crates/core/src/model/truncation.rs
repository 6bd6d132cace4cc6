use std::fmt;
use std::sync::Arc;

use super::{norm, SdeProblem};
use crate::error::{domain, Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The pair `(mu, phi)` that fixes the truncation radius `mu^{-1}(phi(delta))`.
///
/// `mu` bounds the coefficient magnitude on the ball of radius `n` and must be
/// strictly increasing; `phi` is strictly decreasing on `(0, delta_star]` and
/// blows up as the step size goes to zero.
#[derive(Clone)]
pub struct TruncationPolicy {
    label: String,
    mu: ScalarFn,
    mu_inv: ScalarFn,
    phi: ScalarFn,
    delta_star: f64,
}

/// Which set of step-size constraints the policy must satisfy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regime {
    /// All three coefficients truncated: `phi(delta_star) >= mu(1)` and
    /// `phi(delta) * delta^{1/4} <= 1`.
    Full,
    /// Only the super-linear parts truncated: `phi(delta)^p_bar <= delta^{-1} ∧ delta^{-p_bar/4}`.
    Partial { p_bar: f64 },
}

/// Outcome of [`TruncationPolicy::check`].
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct PolicyReport {
    pub inverse_ok: bool,
    pub mu_increasing: bool,
    pub phi_decreasing: bool,
    pub regime_ok: bool,
    pub failures: Vec<String>,
}

impl PolicyReport {
    pub fn passed(&self) -> bool {
        self.inverse_ok && self.mu_increasing && self.phi_decreasing && self.regime_ok
    }
}

impl TruncationPolicy {
    pub fn new<M, MI, P>(label: impl Into<String>, mu: M, mu_inv: MI, phi: P, delta_star: f64) -> Result<Self>
    where
        M: Fn(f64) -> f64 + Send + Sync + 'static,
        MI: Fn(f64) -> f64 + Send + Sync + 'static,
        P: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(delta_star > 0.0 && delta_star < 1.0) {
            return Err(Error::Configuration(format!(
                "delta_star must lie in (0, 1), got {delta_star}"
            )));
        }
        Ok(Self {
            label: label.into(),
            mu: Arc::new(mu),
            mu_inv: Arc::new(mu_inv),
            phi: Arc::new(phi),
            delta_star,
        })
    }

    /// `mu(n) = scale * n^exponent`, `phi(delta) = delta^{-eps}`.
    pub fn power_law(scale: f64, exponent: f64, eps: f64, delta_star: f64) -> Result<Self> {
        if !(scale > 0.0 && exponent > 0.0 && eps > 0.0) {
            return Err(Error::Configuration(format!(
                "power-law policy needs positive scale, exponent and eps (got {scale}, {exponent}, {eps})"
            )));
        }
        Self::new(
            format!("mu(n)={scale}*n^{exponent}, phi(delta)=delta^-{eps}"),
            move |n| scale * n.powf(exponent),
            move |y| (y / scale).powf(1.0 / exponent),
            move |delta| delta.powf(-eps),
            delta_star,
        )
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn delta_star(&self) -> f64 {
        self.delta_star
    }

    pub fn mu(&self, n: f64) -> f64 {
        (self.mu)(n)
    }

    pub fn mu_inv(&self, y: f64) -> f64 {
        (self.mu_inv)(y)
    }

    pub fn phi(&self, delta: f64) -> f64 {
        (self.phi)(delta)
    }

    pub fn validate_step(&self, delta: f64) -> Result<()> {
        if delta > 0.0 && delta <= self.delta_star {
            Ok(())
        } else {
            domain(format!(
                "step size {delta} outside (0, {}] for policy {}",
                self.delta_star, self.label
            ))
        }
    }

    /// Truncation radius `mu^{-1}(phi(delta))`.
    pub fn radius(&self, delta: f64) -> Result<f64> {
        self.validate_step(delta)?;
        Ok(self.mu_inv(self.phi(delta)))
    }

    /// Step sizes used by the sampled checks: `delta_star` and every `2^-j <= delta_star` down to `2^-24`.
    pub fn sample_steps(&self) -> Vec<f64> {
        let mut steps = vec![self.delta_star];
        steps.extend(
            (1..=24)
                .map(|j| 2f64.powi(-j))
                .filter(|&d| d < self.delta_star),
        );
        steps
    }

    /// Spot-checks the policy on sampled `n` and step sizes.
    pub fn check(&self, regime: Regime) -> PolicyReport {
        const TOL: f64 = 1e-10;
        let mut report = PolicyReport {
            inverse_ok: true,
            mu_increasing: true,
            phi_decreasing: true,
            regime_ok: true,
            failures: Vec::new(),
        };
        let ns: Vec<f64> = (0..=10).map(|j| 2f64.powi(j)).collect();
        for &n in &ns {
            let back = self.mu_inv(self.mu(n));
            if !((back - n).abs() <= TOL * n) {
                report.inverse_ok = false;
                report.failures.push(format!("mu_inv(mu({n})) = {back}"));
            }
        }
        let mu_grid: Vec<f64> = (0..=40).map(|j| 0.25 * f64::from(j) + 0.25).collect();
        if mu_grid.windows(2).any(|w| !(self.mu(w[1]) > self.mu(w[0]))) {
            report.mu_increasing = false;
            report.failures.push("mu is not strictly increasing".into());
        }
        // sample_steps is decreasing in delta, so phi must increase along it
        let steps = self.sample_steps();
        if steps.windows(2).any(|w| !(self.phi(w[1]) > self.phi(w[0]))) {
            report.phi_decreasing = false;
            report.failures.push("phi is not strictly decreasing".into());
        }
        match regime {
            Regime::Full => {
                if !(self.phi(self.delta_star) >= self.mu(1.0) * (1.0 - TOL)) {
                    report.regime_ok = false;
                    report.failures.push(format!(
                        "phi(delta_star) = {} < mu(1) = {}",
                        self.phi(self.delta_star),
                        self.mu(1.0)
                    ));
                }
                for &d in &steps {
                    let v = self.phi(d) * d.powf(0.25);
                    if v > 1.0 + TOL {
                        report.regime_ok = false;
                        report.failures.push(format!("phi({d}) * {d}^(1/4) = {v} > 1"));
                    }
                }
            }
            Regime::Partial { p_bar } => {
                for &d in &steps {
                    let lhs = self.phi(d).powf(p_bar);
                    let rhs = d.powi(-1).min(d.powf(-p_bar / 4.0));
                    if lhs > rhs * (1.0 + TOL) {
                        report.regime_ok = false;
                        report.failures.push(format!("phi({d})^{p_bar} = {lhs} > {rhs}"));
                    }
                }
            }
        }
        report
    }
}

impl fmt::Debug for TruncationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TruncationPolicy")
            .field("label", &self.label)
            .field("delta_star", &self.delta_star)
            .finish()
    }
}

/// Radial clamp of `x` onto the closed ball of the given radius, written to `out`.
/// Returns whether the clamp moved the point.
#[inline]
pub(crate) fn clamp_into(x: &[f64], radius: f64, out: &mut [f64]) -> bool {
    let n = norm(x);
    if n <= radius {
        out.copy_from_slice(x);
        false
    } else {
        // Rounding can leave the rescaled norm an ulp above the radius; step the
        // factor down until it is inside, so a second clamp is the identity.
        let mut s = radius / n;
        for _ in 0..4 {
            for (o, v) in out.iter_mut().zip(x) {
                *o = v * s;
            }
            if !(norm(out) > radius) || s == 0.0 {
                break;
            }
            s = f64::from_bits(s.to_bits() - 1);
        }
        true
    }
}

/// `pi_delta(x) = (|x| ∧ mu^{-1}(phi(delta))) x/|x|`, with `pi_delta(0) = 0`.
pub fn pi_delta(x: &[f64], policy: &TruncationPolicy, delta: f64) -> Result<Vec<f64>> {
    let radius = policy.radius(delta)?;
    let mut out = vec![0.0; x.len()];
    clamp_into(x, radius, &mut out);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruncationMode {
    /// `f∘pi, g∘pi, h∘pi`.
    Full,
    /// `F1 + F∘pi, G1 + G∘pi, h`.
    Partial,
}

/// Scratch buffers for [`TruncatedCoefficients::eval_into`]. After a call,
/// `drift`, `diffusion` and `jump` hold the coefficient values.
#[derive(Clone, Debug)]
pub struct CoefficientWorkspace {
    pub drift: Vec<f64>,
    pub diffusion: Vec<f64>,
    pub jump: Vec<f64>,
    clamped: Vec<f64>,
    tmp_d: Vec<f64>,
    tmp_dm: Vec<f64>,
}

impl CoefficientWorkspace {
    pub fn new(dim: usize, noise_dim: usize) -> Self {
        Self {
            drift: vec![0.0; dim],
            diffusion: vec![0.0; dim * noise_dim],
            jump: vec![0.0; dim],
            clamped: vec![0.0; dim],
            tmp_d: vec![0.0; dim],
            tmp_dm: vec![0.0; dim * noise_dim],
        }
    }
}

/// Coefficients `(f_delta, g_delta, h_delta)` for one step size.
#[derive(Clone, Debug)]
pub struct TruncatedCoefficients<'a> {
    problem: &'a SdeProblem,
    mode: Option<TruncationMode>,
    radius: f64,
}

/// Builds the truncated coefficients of `problem` for step size `delta`.
pub fn truncated_coefficients<'a>(
    problem: &'a SdeProblem,
    policy: &TruncationPolicy,
    delta: f64,
    mode: TruncationMode,
) -> Result<TruncatedCoefficients<'a>> {
    if mode == TruncationMode::Partial && problem.decomposition().is_none() {
        return Err(Error::Configuration(format!(
            "partial truncation needs a decomposition, problem {} has none",
            problem.name
        )));
    }
    Ok(TruncatedCoefficients {
        problem,
        mode: Some(mode),
        radius: policy.radius(delta)?,
    })
}

impl<'a> TruncatedCoefficients<'a> {
    /// The untruncated coefficients, used by plain Euler-Maruyama.
    pub fn untruncated(problem: &'a SdeProblem) -> Self {
        Self {
            problem,
            mode: None,
            radius: f64::INFINITY,
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn mode(&self) -> Option<TruncationMode> {
        self.mode
    }

    pub fn workspace(&self) -> CoefficientWorkspace {
        CoefficientWorkspace::new(self.problem.dim(), self.problem.noise_dim())
    }

    /// Evaluates all three coefficients at `x`. Returns `true` when the clamp was active.
    pub fn eval_into(&self, x: &[f64], ws: &mut CoefficientWorkspace) -> bool {
        let p = self.problem;
        match self.mode {
            None => {
                p.drift.eval(x, &mut ws.drift);
                p.diffusion.eval(x, &mut ws.diffusion);
                p.jump.eval(x, &mut ws.jump);
                false
            }
            Some(TruncationMode::Full) => {
                let hit = clamp_into(x, self.radius, &mut ws.clamped);
                p.drift.eval(&ws.clamped, &mut ws.drift);
                p.diffusion.eval(&ws.clamped, &mut ws.diffusion);
                p.jump.eval(&ws.clamped, &mut ws.jump);
                hit
            }
            Some(TruncationMode::Partial) => {
                let dec = p
                    .decomposition()
                    .expect("partial mode is only constructed with a decomposition");
                let hit = clamp_into(x, self.radius, &mut ws.clamped);
                dec.linear_drift.eval(x, &mut ws.drift);
                dec.superlinear_drift.eval(&ws.clamped, &mut ws.tmp_d);
                for (a, b) in ws.drift.iter_mut().zip(&ws.tmp_d) {
                    *a += b;
                }
                dec.linear_diffusion.eval(x, &mut ws.diffusion);
                dec.superlinear_diffusion.eval(&ws.clamped, &mut ws.tmp_dm);
                for (a, b) in ws.diffusion.iter_mut().zip(&ws.tmp_dm) {
                    *a += b;
                }
                p.jump.eval(x, &mut ws.jump);
                hit
            }
        }
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.eval_into(x, &mut ws);
        ws.drift
    }

    pub fn diffusion(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.eval_into(x, &mut ws);
        ws.diffusion
    }

    pub fn jump(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.eval_into(x, &mut ws);
        ws.jump
    }

    /// Values of the truncated super-linear parts `F∘pi` and `G∘pi` (partial mode only).
    pub fn superlinear_parts(&self, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        if self.mode != Some(TruncationMode::Partial) {
            return None;
        }
        let p = self.problem;
        let dec = p.decomposition()?;
        let mut y = vec![0.0; x.len()];
        clamp_into(x, self.radius, &mut y);
        Some((
            dec.superlinear_drift.eval_vec(&y, p.dim()),
            dec.superlinear_diffusion.eval_vec(&y, p.dim() * p.noise_dim()),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, Coefficient};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit_policy(radius: f64) -> TruncationPolicy {
        // mu = identity, phi constant-ish; radius(delta) = phi(delta)
        TruncationPolicy::new("fixed", |n| n, |y| y, move |d| radius * (1.0 + 1e-9 * (0.5 - d)), 0.5).unwrap()
    }

    #[test]
    fn clamp_examples() {
        let p = unit_policy(1.0);
        assert_relative_eq!(pi_delta(&[0.5], &p, 0.25).unwrap()[0], 0.5);
        let q = unit_policy(2.0);
        assert_relative_eq!(pi_delta(&[3.0], &q, 0.25).unwrap()[0], 2.0, max_relative = 1e-8);
        assert_relative_eq!(pi_delta(&[-3.0], &q, 0.25).unwrap()[0], -2.0, max_relative = 1e-8);
        assert_eq!(pi_delta(&[0.0, 0.0], &q, 0.25).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn step_outside_domain_is_rejected() {
        let p = TruncationPolicy::power_law(1.0, 5.0, 0.25, 0.5).unwrap();
        assert!(matches!(pi_delta(&[1.0], &p, 0.0), Err(Error::Domain(_))));
        assert!(matches!(pi_delta(&[1.0], &p, 0.75), Err(Error::Domain(_))));
        assert!(pi_delta(&[1.0], &p, 0.5).is_ok());
    }

    #[test]
    fn example_one_radius() {
        // mu(n) = n^5, phi = delta^{-1/4}: radius = delta^{-1/20}; at 2^-12 this is 2^0.6
        let p = TruncationPolicy::power_law(1.0, 5.0, 0.25, 0.5).unwrap();
        let r = p.radius(2f64.powi(-12)).unwrap();
        assert_relative_eq!(r, 2f64.powf(0.6), max_relative = 1e-12);
        assert_relative_eq!(r, 1.515_716_566_510_398, max_relative = 1e-12);
    }

    #[test]
    fn example_one_truncated_drift_at_five() {
        let problem = preset("example-5.1").unwrap();
        let p = TruncationPolicy::power_law(1.0, 5.0, 0.25, 0.5).unwrap();
        let c = truncated_coefficients(&problem, &p, 2f64.powi(-12), TruncationMode::Full).unwrap();
        assert_relative_eq!(c.drift(&[5.0])[0], -8.0, max_relative = 1e-12);
        assert_eq!(c.drift(&[0.0])[0], 0.0);
    }

    #[test]
    fn example_three_partial_inside_ball_is_exact() {
        let problem = preset("example-5.3").unwrap();
        let p = TruncationPolicy::power_law(4.0, 3.0, 1.0 / 50.0, 0.5).unwrap();
        let delta = 2f64.powi(-7);
        let c = truncated_coefficients(&problem, &p, delta, TruncationMode::Partial).unwrap();
        let x = 0.5 * c.radius();
        assert_relative_eq!(c.drift(&[x])[0], x - x * x * x, max_relative = 1e-14);
        assert_eq!(c.diffusion(&[x])[0], x);
        // h is never truncated in partial mode
        assert_eq!(c.jump(&[100.0])[0], 100.0);
    }

    #[test]
    fn partial_without_decomposition_is_a_configuration_error() {
        let problem = preset("example-5.1").unwrap();
        let p = TruncationPolicy::power_law(1.0, 5.0, 0.25, 0.5).unwrap();
        assert!(matches!(
            truncated_coefficients(&problem, &p, 0.1, TruncationMode::Partial),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn policy_checks_for_presets() {
        let full = TruncationPolicy::power_law(1.0, 5.0, 0.25, 0.5).unwrap();
        assert!(full.check(Regime::Full).passed(), "{:?}", full.check(Regime::Full));
        let two = TruncationPolicy::power_law(1.0, 5.0, 1.0 / 40.0, 0.5).unwrap();
        assert!(two.check(Regime::Partial { p_bar: 40.0 }).passed());
        let three = TruncationPolicy::power_law(4.0, 3.0, 1.0 / 50.0, 0.5).unwrap();
        assert!(three.check(Regime::Partial { p_bar: 50.0 }).passed());

        // phi = delta^{-1/2} violates phi * delta^{1/4} <= 1
        let too_fast = TruncationPolicy::power_law(1.0, 5.0, 0.5, 0.5).unwrap();
        let rep = too_fast.check(Regime::Full);
        assert!(!rep.regime_ok && !rep.passed());
        // and phi^p_bar <= delta^{-1} with p_bar = 40
        assert!(!two.check(Regime::Partial { p_bar: 60.0 }).regime_ok);
    }

    #[test]
    fn broken_inverse_and_monotonicity_are_reported() {
        let p = TruncationPolicy::new("bad", |n| n * n, |y| y, |d: f64| 1.0 + d, 0.5).unwrap();
        let rep = p.check(Regime::Full);
        assert!(!rep.inverse_ok);
        assert!(!rep.phi_decreasing);
        assert!(rep.mu_increasing);
    }

    #[test]
    fn delta_star_domain() {
        assert!(TruncationPolicy::power_law(1.0, 5.0, 0.25, 1.0).is_err());
        assert!(TruncationPolicy::power_law(1.0, 5.0, 0.25, 0.0).is_err());
    }

    #[test]
    fn full_mode_bound_on_sampled_states() {
        // sup_{|x|<=n} |f| v |g| v |h| <= n^5 holds for example 5.1, hence |f_delta| <= phi(delta)
        let problem = preset("example-5.1").unwrap();
        let p = TruncationPolicy::power_law(1.0, 5.0, 0.25, 0.5).unwrap();
        let states = crate::model::sample_states(1, 1e3, 10_000, 3);
        for &delta in &[0.5, 2f64.powi(-4), 2f64.powi(-11), 2f64.powi(-16)] {
            let c = truncated_coefficients(&problem, &p, delta, TruncationMode::Full).unwrap();
            let bound = p.phi(delta) + 1e-12;
            let mut ws = c.workspace();
            for x in &states {
                c.eval_into(x, &mut ws);
                let m = norm(&ws.drift).max(norm(&ws.diffusion)).max(norm(&ws.jump));
                assert!(m <= bound * (1.0 + 1e-12), "delta={delta} x={x:?} m={m} bound={bound}");
            }
        }
    }

    #[test]
    fn partial_mode_bound_on_superlinear_parts() {
        for (name, scale, exp, eps) in [("example-5.2", 1.0, 5.0, 1.0 / 40.0)] {
            let problem = preset(name).unwrap();
            let p = TruncationPolicy::power_law(scale, exp, eps, 0.5).unwrap();
            for &delta in &[2f64.powi(-3), 2f64.powi(-7), 2f64.powi(-16)] {
                let c = truncated_coefficients(&problem, &p, delta, TruncationMode::Partial).unwrap();
                for x in crate::model::sample_states(1, 50.0, 1000, 11) {
                    let (ff, gg) = c.superlinear_parts(&x).unwrap();
                    assert!(norm(&ff).max(norm(&gg)) <= p.phi(delta) * (1.0 + 1e-12));
                }
            }
        }
    }

    #[test]
    fn example_three_radius_stays_below_one() {
        // mu(n) = 4n^3 only dominates F on balls of radius n >= 1, but mu^{-1}(phi(delta))
        // stays below 1 for every practical step, so |F∘pi| <= phi(delta) cannot hold there.
        let problem = preset("example-5.3").unwrap();
        let p = TruncationPolicy::power_law(4.0, 3.0, 1.0 / 50.0, 0.5).unwrap();
        let delta = 2f64.powi(-7);
        assert!(p.radius(delta).unwrap() < 1.0);
        let c = truncated_coefficients(&problem, &p, delta, TruncationMode::Partial).unwrap();
        let (ff, _) = c.superlinear_parts(&[10.0]).unwrap();
        assert!(norm(&ff) > p.phi(delta));
    }

    #[test]
    fn vector_clamp_scales_radially() {
        let p = unit_policy(5.0);
        let y = pi_delta(&[6.0, 8.0], &p, 0.25).unwrap();
        assert_relative_eq!(y[0], 3.0, max_relative = 1e-8);
        assert_relative_eq!(y[1], 4.0, max_relative = 1e-8);
        let _ = Coefficient::zero();
    }

    fn arb_state() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1e4f64..1e4, 1..4)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn clamp_properties(x in arb_state(), j in 1i32..24) {
            let p = TruncationPolicy::power_law(1.0, 5.0, 0.25, 0.5).unwrap();
            let delta = 2f64.powi(-j);
            let r = p.radius(delta).unwrap();
            let y = pi_delta(&x, &p, delta).unwrap();
            prop_assert!(norm(&y) <= r * (1.0 + 1e-12));
            if norm(&x) <= r {
                prop_assert_eq!(&y, &x);
            }
            prop_assert!(norm(&y) <= r);
            prop_assert_eq!(pi_delta(&y, &p, delta).unwrap(), y);
        }

        #[test]
        fn radius_grows_as_step_shrinks(j in 1i32..30, k in 1i32..30) {
            let p = TruncationPolicy::power_law(4.0, 3.0, 1.0 / 50.0, 0.5).unwrap();
            let (d1, d2) = (2f64.powi(-j.max(k)), 2f64.powi(-j.min(k)));
            prop_assert!(p.radius(d1).unwrap() >= p.radius(d2).unwrap());
        }
    }
}
