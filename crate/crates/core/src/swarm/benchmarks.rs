//! Standard test functions for exercising the optimizer on its own.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::Bounds;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFunction {
    Sphere,
    Rastrigin,
    Rosenbrock,
}

impl TestFunction {
    pub const ALL: [TestFunction; 3] = [
        TestFunction::Sphere,
        TestFunction::Rastrigin,
        TestFunction::Rosenbrock,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestFunction::Sphere => "sphere",
            TestFunction::Rastrigin => "rastrigin",
            TestFunction::Rosenbrock => "rosenbrock",
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Sphere => sphere(x),
            TestFunction::Rastrigin => rastrigin(x),
            TestFunction::Rosenbrock => rosenbrock(x),
        }
    }

    /// Conventional search box for the function.
    pub fn bounds(self, dim: usize) -> Result<Bounds> {
        match self {
            TestFunction::Sphere => Bounds::symmetric(dim, 5.0),
            TestFunction::Rastrigin => Bounds::symmetric(dim, 5.12),
            TestFunction::Rosenbrock => Bounds::uniform(dim, -5.0, 10.0),
        }
    }

    /// Location of the global minimum (value 0 for all three).
    pub fn minimizer(self, dim: usize) -> Vec<f64> {
        match self {
            TestFunction::Rosenbrock => vec![1.0; dim],
            _ => vec![0.0; dim],
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown test function {s:?} (expected sphere, rastrigin or rosenbrock)"
                ))
            })
    }
}

/// Sum of squares. Minimum 0 at the origin.
pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `10 d + sum(x^2 - 10 cos(2 pi x))`. Minimum 0 at the origin.
pub fn rastrigin(x: &[f64]) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    10.0 * x.len() as f64
        + x.iter()
            .map(|v| v * v - 10.0 * (tau * v).cos())
            .sum::<f64>()
}

/// `sum(100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2)`. Minimum 0 at (1, ..., 1).
pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}
