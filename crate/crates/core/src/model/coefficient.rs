use std::fmt;
use std::sync::Arc;

/// Signature shared by every coefficient: read a state, write the value.
pub type CoefficientFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A named coefficient function `state -> value`.
///
/// Drift and jump coefficients write `d` values; diffusion coefficients write
/// a `d x m` matrix in row-major order.
#[derive(Clone)]
pub struct Coefficient {
    name: String,
    func: Arc<CoefficientFn>,
}

impl Coefficient {
    pub fn new<F>(name: impl Into<String>, func: F) -> Self
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            func: Arc::new(func),
        }
    }

    /// Lifts a scalar map `f64 -> f64` to a coefficient on `d = m = 1`.
    pub fn scalar<F>(name: impl Into<String>, func: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(name, move |x: &[f64], out: &mut [f64]| out[0] = func(x[0]))
    }

    pub fn zero() -> Self {
        Self::new("0", |_: &[f64], out: &mut [f64]| out.fill(0.0))
    }

    /// Scalar polynomial `c0 + c1 x + c2 x^2 + ...`, evaluated by Horner's rule.
    pub fn polynomial(coeffs: &[f64]) -> Self {
        let coeffs = coeffs.to_vec();
        let name = format!(
            "poly:{}",
            coeffs
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        Self::scalar(name, move |x| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        (self.func)(x, out)
    }

    /// Allocating convenience wrapper around [`Coefficient::eval`].
    pub fn eval_vec(&self, x: &[f64], out_len: usize) -> Vec<f64> {
        let mut out = vec![0.0; out_len];
        self.eval(x, &mut out);
        out
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Coefficient").field(&self.name).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_horner() {
        let p = Coefficient::polynomial(&[1.0, -2.0, 0.0, 3.0]);
        assert_eq!(p.name(), "poly:1,-2,0,3");
        // 1 - 2*2 + 3*8
        assert_eq!(p.eval_vec(&[2.0], 1), vec![21.0]);
        assert_eq!(Coefficient::polynomial(&[]).eval_vec(&[5.0], 1), vec![0.0]);
    }

    #[test]
    fn zero_fills_every_component() {
        let mut out = [1.0, 2.0, 3.0];
        Coefficient::zero().eval(&[4.0, 5.0, 6.0], &mut out);
        assert_eq!(out, [0.0; 3]);
    }
}
