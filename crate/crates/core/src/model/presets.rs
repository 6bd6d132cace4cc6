use super::{sample_states, Coefficient, Decomposition, SdeProblem};
use crate::error::{Error, Result};

pub const PRESET_NAMES: [&str; 4] = ["example-5.1", "example-5.2", "example-5.3", "geometric-jump"];

/// Drift, diffusion and jump rates of the `geometric-jump` preset.
pub const GEOMETRIC_JUMP: (f64, f64, f64, f64) = (0.05, 0.2, 0.5, 1.0);

fn scalar(name: &str, f: fn(f64) -> f64) -> Coefficient {
    Coefficient::scalar(name, f)
}

/// Looks up a named problem preset.
pub fn preset(name: &str) -> Result<SdeProblem> {
    let check = sample_states(1, 100.0, 1000, 0);
    match name {
        "example-5.1" => SdeProblem::scalar(
            name,
            scalar("-x^5", |x| -x.powi(5)),
            scalar("x^2", |x| x * x),
            scalar("x^2", |x| x * x),
            0.5,
            1.0,
        ),
        "example-5.2" => SdeProblem::scalar(
            name,
            scalar("-(x + x^5)", |x| -(x + x.powi(5))),
            scalar("x^2", |x| x * x),
            scalar("x", |x| x),
            0.5,
            0.5,
        )?
        .with_decomposition(
            Decomposition {
                linear_drift: scalar("-x", |x| -x),
                superlinear_drift: scalar("-x^5", |x| -x.powi(5)),
                linear_diffusion: Coefficient::zero(),
                superlinear_diffusion: scalar("x^2", |x| x * x),
            },
            &check,
        ),
        "example-5.3" => SdeProblem::scalar(
            name,
            scalar("x - x^3", |x| x - x * x * x),
            scalar("x", |x| x),
            scalar("x", |x| x),
            0.1,
            1.0,
        )?
        .with_decomposition(
            Decomposition {
                linear_drift: scalar("-2x", |x| -2.0 * x),
                superlinear_drift: scalar("3x - x^3", |x| 3.0 * x - x * x * x),
                linear_diffusion: scalar("x", |x| x),
                superlinear_diffusion: Coefficient::zero(),
            },
            &check,
        ),
        "geometric-jump" => {
            let (a, b, c, lambda) = GEOMETRIC_JUMP;
            geometric(a, b, c, lambda, 1.0)
        }
        other => Err(Error::Configuration(format!(
            "unknown preset {other:?}; expected one of {}",
            PRESET_NAMES.join(", ")
        ))),
    }
}

/// `dx = a x dt + b x dB + c x dN`, with the whole drift and diffusion in the linear part.
pub fn geometric(a: f64, b: f64, c: f64, lambda: f64, x0: f64) -> Result<SdeProblem> {
    let lin = |name: String, k: f64| Coefficient::scalar(name, move |x| k * x);
    SdeProblem::scalar(
        "geometric-jump",
        lin(format!("{a}x"), a),
        lin(format!("{b}x"), b),
        lin(format!("{c}x"), c),
        lambda,
        x0,
    )?
    .with_decomposition(
        Decomposition {
            linear_drift: lin(format!("{a}x"), a),
            superlinear_drift: Coefficient::zero(),
            linear_diffusion: lin(format!("{b}x"), b),
            superlinear_diffusion: Coefficient::zero(),
        },
        &[vec![0.0], vec![1.0], vec![-3.0]],
    )
}
