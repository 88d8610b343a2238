//! Convolution smoothing of the plus function `max(t, 0)` and the modulus `|t|`.
//!
//! A probability density `rho` with finite absolute mean `k = ∫|s| rho(s) ds`
//! defines
//!
//! ```text
//! P(eps, t) = ∫ max(t - eps*s, 0) rho(s) ds,      M(eps, t) = P(eps, t) + P(eps, -t)
//! ```
//!
//! with `|P - max(t,0)| <= k eps` and `|M - |t|| <= 2 k eps`. The four built-in
//! densities all have closed forms for `P` and its first two derivatives.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value and first two `t`-derivatives of a smoothing function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedEval {
    pub value: f64,
    pub first_derivative: f64,
    pub second_derivative: f64,
}

/// A density usable for smoothing the plus function.
///
/// Implementors supply the closed form of `P` and its derivatives together
/// with the absolute mean of the density.
pub trait Smoothing: Send + Sync {
    /// `P(eps, t)` and derivatives. `eps > 0` is not checked.
    fn plus_unchecked(&self, eps: f64, t: f64) -> SmoothedEval;

    /// The density `rho(s)`.
    fn density(&self, s: f64) -> f64;

    /// `k = ∫ |s| rho(s) ds`.
    fn absolute_mean(&self) -> f64;

    /// Whether `rho(s) == rho(-s)`.
    fn is_symmetric(&self) -> bool;

    fn name(&self) -> &str;

    fn plus(&self, eps: f64, t: f64) -> Result<SmoothedEval> {
        check_eps(eps)?;
        Ok(self.plus_unchecked(eps, t))
    }

    fn modulus(&self, eps: f64, t: f64) -> Result<SmoothedEval> {
        check_eps(eps)?;
        Ok(self.modulus_unchecked(eps, t))
    }

    /// `M(eps, t) = P(eps, t) + P(eps, -t)`, so `M_t = P_t(t) - P_t(-t)` and
    /// `M_tt = P_tt(t) + P_tt(-t)`.
    fn modulus_unchecked(&self, eps: f64, t: f64) -> SmoothedEval {
        let a = self.plus_unchecked(eps, t);
        let b = self.plus_unchecked(eps, -t);
        SmoothedEval {
            value: a.value + b.value,
            first_derivative: a.first_derivative - b.first_derivative,
            second_derivative: a.second_derivative + b.second_derivative,
        }
    }
}

pub(crate) fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "smoothing parameter must be positive and finite, got {eps}"
        )))
    }
}

/// The four built-in smoothing densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelSpec {
    /// `rho(s) = e^{-s} / (1 + e^{-s})^2`, `P = eps ln(1 + e^{t/eps})`.
    Sigmoid,
    /// `rho(s) = 2 / (s^2 + 4)^{3/2}`, `P = (sqrt(t^2 + 4 eps^2) + t) / 2`.
    Sqrt,
    /// Uniform density on `[-1/2, 1/2]`.
    UniformCentered,
    /// Uniform density on `[0, 1]`.
    UniformShifted,
}

impl KernelSpec {
    pub const ALL: [KernelSpec; 4] = [
        KernelSpec::Sigmoid,
        KernelSpec::Sqrt,
        KernelSpec::UniformCentered,
        KernelSpec::UniformShifted,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            KernelSpec::Sigmoid => "sigmoid",
            KernelSpec::Sqrt => "sqrt",
            KernelSpec::UniformCentered => "uniform_centered",
            KernelSpec::UniformShifted => "uniform_shifted",
        }
    }

    /// Points where `P_tt` jumps (compact kernels only), scaled by `eps`.
    pub fn breakpoints(&self, eps: f64) -> Vec<f64> {
        match self {
            KernelSpec::UniformCentered => vec![-0.5 * eps, 0.5 * eps],
            KernelSpec::UniformShifted => vec![0.0, eps],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(KernelSpec::Sigmoid),
            "sqrt" => Ok(KernelSpec::Sqrt),
            "uniform_centered" => Ok(KernelSpec::UniformCentered),
            "uniform_shifted" => Ok(KernelSpec::UniformShifted),
            other => Err(Error::config(
                "kernel",
                format!(
                    "unknown kernel {other:?}, expected one of sigmoid, sqrt, uniform_centered, uniform_shifted"
                ),
            )),
        }
    }
}

impl Smoothing for KernelSpec {
    fn plus_unchecked(&self, eps: f64, t: f64) -> SmoothedEval {
        match self {
            KernelSpec::Sigmoid => sigmoid_plus(eps, t),
            KernelSpec::Sqrt => sqrt_plus(eps, t),
            KernelSpec::UniformCentered => uniform_centered_plus(eps, t),
            KernelSpec::UniformShifted => uniform_shifted_plus(eps, t),
        }
    }

    fn density(&self, s: f64) -> f64 {
        match self {
            KernelSpec::Sigmoid => {
                let a = (-s.abs()).exp();
                a / ((1.0 + a) * (1.0 + a))
            }
            KernelSpec::Sqrt => 2.0 / (s * s + 4.0).powf(1.5),
            KernelSpec::UniformCentered => {
                if (-0.5..=0.5).contains(&s) {
                    1.0
                } else {
                    0.0
                }
            }
            KernelSpec::UniformShifted => {
                if (0.0..=1.0).contains(&s) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn absolute_mean(&self) -> f64 {
        match self {
            KernelSpec::Sigmoid => 2.0 * std::f64::consts::LN_2,
            KernelSpec::Sqrt => 2.0,
            KernelSpec::UniformCentered => 0.25,
            KernelSpec::UniformShifted => 0.5,
        }
    }

    fn is_symmetric(&self) -> bool {
        !matches!(self, KernelSpec::UniformShifted)
    }

    fn name(&self) -> &str {
        self.as_str()
    }
}

fn sigmoid_plus(eps: f64, t: f64) -> SmoothedEval {
    let z = t / eps;
    // e^{-|z|} never overflows; pick the branch of ln(1 + e^z) accordingly.
    let a = (-z.abs()).exp();
    let value = if z > 0.0 {
        t + eps * a.ln_1p()
    } else {
        eps * a.ln_1p()
    };
    let first = if z >= 0.0 { 1.0 / (1.0 + a) } else { a / (1.0 + a) };
    SmoothedEval {
        value,
        first_derivative: first,
        second_derivative: a / ((1.0 + a) * (1.0 + a)) / eps,
    }
}

fn sqrt_plus(eps: f64, t: f64) -> SmoothedEval {
    let e2 = 4.0 * eps * eps;
    let r = (t * t + e2).sqrt();
    // for t < 0 use the conjugate form to avoid cancellation in r + t
    let (value, first) = if t >= 0.0 {
        (0.5 * (r + t), 0.5 * (1.0 + t / r))
    } else {
        let q = r - t;
        (0.5 * e2 / q, 0.5 * e2 / (r * q))
    };
    SmoothedEval {
        value,
        first_derivative: first,
        second_derivative: 0.5 * e2 / (r * r * r),
    }
}

fn uniform_centered_plus(eps: f64, t: f64) -> SmoothedEval {
    let h = 0.5 * eps;
    if t < -h {
        SmoothedEval {
            value: 0.0,
            first_derivative: 0.0,
            second_derivative: 0.0,
        }
    } else if t < h {
        let s = t + h;
        SmoothedEval {
            value: s * s / (2.0 * eps),
            first_derivative: s / eps,
            second_derivative: 1.0 / eps,
        }
    } else {
        SmoothedEval {
            value: t,
            first_derivative: 1.0,
            second_derivative: 0.0,
        }
    }
}

fn uniform_shifted_plus(eps: f64, t: f64) -> SmoothedEval {
    if t < 0.0 {
        SmoothedEval {
            value: 0.0,
            first_derivative: 0.0,
            second_derivative: 0.0,
        }
    } else if t < eps {
        SmoothedEval {
            value: t * t / (2.0 * eps),
            first_derivative: t / eps,
            second_derivative: 1.0 / eps,
        }
    } else {
        SmoothedEval {
            value: t - 0.5 * eps,
            first_derivative: 1.0,
            second_derivative: 0.0,
        }
    }
}

type DensityFn = dyn Fn(f64) -> f64 + Send + Sync;
type PlusFn = dyn Fn(f64, f64) -> SmoothedEval + Send + Sync;

/// A user-provided density with its own closed form for `P`.
///
/// The absolute mean must be given explicitly; it is not computed.
#[derive(Clone)]
pub struct CustomKernel {
    name: String,
    absolute_mean: f64,
    symmetric: bool,
    density: Arc<DensityFn>,
    plus: Arc<PlusFn>,
}

impl CustomKernel {
    pub fn new(
        name: impl Into<String>,
        absolute_mean: f64,
        symmetric: bool,
        density: impl Fn(f64) -> f64 + Send + Sync + 'static,
        plus: impl Fn(f64, f64) -> SmoothedEval + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(absolute_mean.is_finite() && absolute_mean > 0.0) {
            return Err(Error::Domain(format!(
                "custom kernel absolute mean must be positive and finite, got {absolute_mean}"
            )));
        }
        Ok(Self {
            name: name.into(),
            absolute_mean,
            symmetric,
            density: Arc::new(density),
            plus: Arc::new(plus),
        })
    }
}

impl fmt::Debug for CustomKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomKernel")
            .field("name", &self.name)
            .field("absolute_mean", &self.absolute_mean)
            .field("symmetric", &self.symmetric)
            .finish_non_exhaustive()
    }
}

impl Smoothing for CustomKernel {
    fn plus_unchecked(&self, eps: f64, t: f64) -> SmoothedEval {
        (self.plus)(eps, t)
    }

    fn density(&self, s: f64) -> f64 {
        (self.density)(s)
    }

    fn absolute_mean(&self) -> f64 {
        self.absolute_mean
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn name(&self) -> &str {
        &self.name
    }
}

/// `P(eps, t)` and its derivatives for one of the built-in kernels.
pub fn plus_smooth(kernel: KernelSpec, eps: f64, t: f64) -> Result<SmoothedEval> {
    kernel.plus(eps, t)
}

/// `M(eps, t)` and its derivatives for one of the built-in kernels.
pub fn modulus_smooth(kernel: KernelSpec, eps: f64, t: f64) -> Result<SmoothedEval> {
    kernel.modulus(eps, t)
}

pub fn absolute_mean(kernel: KernelSpec) -> f64 {
    kernel.absolute_mean()
}
