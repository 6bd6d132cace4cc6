//! SDE problem definitions, truncation policies and the truncated coefficients.
//!
//! A problem is `dx = f(x) dt + g(x) dB + h(x) dN` with `B` an `m`-dimensional
//! Brownian motion and `N` a scalar Poisson process of intensity `lambda`.
//! When the drift and diffusion split into a linear-growth part and a
//! super-linear part (`f = F1 + F`, `g = G1 + G`) the problem can also be
//! integrated with the partially truncated scheme.

mod assumptions;
mod coefficient;
mod presets;
mod truncation;

pub use assumptions::{
    check_coefficient_envelope, check_khasminskii_preserved, derived_constants,
    sample_states, threshold_condition_holds, AssumptionConstants, DerivedConstants,
    EnvelopeReport, KhasminskiiReport,
};
pub use coefficient::{Coefficient, CoefficientFn};
pub use presets::{geometric, preset, GEOMETRIC_JUMP, PRESET_NAMES};
pub use truncation::{
    pi_delta, truncated_coefficients, CoefficientWorkspace, PolicyReport, Regime,
    TruncatedCoefficients, TruncationMode, TruncationPolicy,
};

use crate::error::{Error, Result};

/// Euclidean norm (Frobenius norm when applied to a flattened matrix).
#[inline]
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// Split `f = F1 + F`, `g = G1 + G` into linear-growth and super-linear parts.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub linear_drift: Coefficient,
    pub superlinear_drift: Coefficient,
    pub linear_diffusion: Coefficient,
    pub superlinear_diffusion: Coefficient,
}

/// An autonomous jump-diffusion `dx = f dt + g dB + h dN`.
#[derive(Clone, Debug)]
pub struct SdeProblem {
    pub name: String,
    dim: usize,
    noise_dim: usize,
    pub drift: Coefficient,
    pub diffusion: Coefficient,
    pub jump: Coefficient,
    intensity: f64,
    x0: Vec<f64>,
    decomposition: Option<Decomposition>,
}

impl SdeProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        noise_dim: usize,
        drift: Coefficient,
        diffusion: Coefficient,
        jump: Coefficient,
        intensity: f64,
        x0: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || noise_dim == 0 {
            return Err(Error::Configuration(
                "state and noise dimensions must be at least 1".into(),
            ));
        }
        if !(intensity >= 0.0 && intensity.is_finite()) {
            return Err(Error::Configuration(format!(
                "jump intensity must be finite and nonnegative, got {intensity}"
            )));
        }
        if x0.len() != dim {
            return Err(Error::Configuration(format!(
                "initial state has length {} but dimension is {dim}",
                x0.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            dim,
            noise_dim,
            drift,
            diffusion,
            jump,
            intensity,
            x0,
            decomposition: None,
        })
    }

    /// Scalar problem (`d = m = 1`) from plain `f64 -> f64` maps.
    pub fn scalar(
        name: impl Into<String>,
        drift: Coefficient,
        diffusion: Coefficient,
        jump: Coefficient,
        intensity: f64,
        x0: f64,
    ) -> Result<Self> {
        Self::new(name, 1, 1, drift, diffusion, jump, intensity, vec![x0])
    }

    /// Attaches a decomposition after checking `f = F1 + F` and `g = G1 + G`
    /// on `states`.
    pub fn with_decomposition(mut self, decomposition: Decomposition, states: &[Vec<f64>]) -> Result<Self> {
        self.decomposition = Some(decomposition);
        let mismatch = self.decomposition_mismatch(states)?;
        if mismatch > 1e-12 {
            return Err(Error::Configuration(format!(
                "decomposition does not reproduce the coefficients (relative mismatch {mismatch:e})"
            )));
        }
        Ok(self)
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Result<Self> {
        if x0.len() != self.dim {
            return Err(Error::Configuration(format!(
                "initial state has length {} but dimension is {}",
                x0.len(),
                self.dim
            )));
        }
        self.x0 = x0;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn decomposition(&self) -> Option<&Decomposition> {
        self.decomposition.as_ref()
    }

    /// Largest relative mismatch `|f - (F1 + F)| / max(1, |f|)` (and the same
    /// for `g`) over `states`.
    pub fn decomposition_mismatch(&self, states: &[Vec<f64>]) -> Result<f64> {
        let dec = self
            .decomposition
            .as_ref()
            .ok_or_else(|| Error::Configuration(format!("problem {} has no decomposition", self.name)))?;
        let (d, dm) = (self.dim, self.dim * self.noise_dim);
        let mut worst = 0.0_f64;
        for x in states {
            let f = self.drift.eval_vec(x, d);
            let f1 = dec.linear_drift.eval_vec(x, d);
            let ff = dec.superlinear_drift.eval_vec(x, d);
            let g = self.diffusion.eval_vec(x, dm);
            let g1 = dec.linear_diffusion.eval_vec(x, dm);
            let gg = dec.superlinear_diffusion.eval_vec(x, dm);
            let df: Vec<f64> = (0..d).map(|i| f[i] - f1[i] - ff[i]).collect();
            let dg: Vec<f64> = (0..dm).map(|i| g[i] - g1[i] - gg[i]).collect();
            worst = worst
                .max(norm(&df) / norm(&f).max(1.0))
                .max(norm(&dg) / norm(&g).max(1.0));
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic() -> SdeProblem {
        SdeProblem::scalar(
            "cubic",
            Coefficient::scalar("x - x^3", |x| x - x * x * x),
            Coefficient::scalar("x", |x| x),
            Coefficient::scalar("x", |x| x),
            0.1,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_dimensions_and_intensity() {
        let z = Coefficient::zero;
        assert!(SdeProblem::new("p", 0, 1, z(), z(), z(), 0.0, vec![]).is_err());
        assert!(SdeProblem::new("p", 1, 0, z(), z(), z(), 0.0, vec![0.0]).is_err());
        assert!(SdeProblem::new("p", 1, 1, z(), z(), z(), -1.0, vec![0.0]).is_err());
        assert!(SdeProblem::new("p", 2, 1, z(), z(), z(), 0.0, vec![0.0]).is_err());
    }

    #[test]
    fn decomposition_is_verified() {
        let states = sample_states(1, 10.0, 200, 7);
        let good = Decomposition {
            linear_drift: Coefficient::scalar("-2x", |x| -2.0 * x),
            superlinear_drift: Coefficient::scalar("3x - x^3", |x| 3.0 * x - x * x * x),
            linear_diffusion: Coefficient::scalar("x", |x| x),
            superlinear_diffusion: Coefficient::zero(),
        };
        let p = cubic().with_decomposition(good, &states).unwrap();
        assert!(p.decomposition_mismatch(&states).unwrap() <= 1e-12);

        let bad = Decomposition {
            linear_drift: Coefficient::scalar("-x", |x| -x),
            superlinear_drift: Coefficient::scalar("-x^3", |x| -x * x * x),
            linear_diffusion: Coefficient::scalar("x", |x| x),
            superlinear_diffusion: Coefficient::zero(),
        };
        assert!(matches!(
            cubic().with_decomposition(bad, &states),
            Err(Error::Configuration(_))
        ));
        assert!(cubic().decomposition_mismatch(&states).is_err());
    }
}
