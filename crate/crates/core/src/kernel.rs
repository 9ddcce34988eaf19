//! Kernels used to lift manifold functions into a Hilbert space.
//!
//! Every kernel here has a gradient of the form
//! `∂K(a, b)/∂a = α·a + β·b` with scalar coefficients that are symmetric in
//! `(a, b)`. The manifold code relies on that shape to compute gradients
//! without materialising the feature map or allocating.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    /// `aᵀb`
    #[default]
    Linear,
    /// `exp(−‖a − b‖² / σ²)`
    Gaussian { sigma: f64 },
    /// `(aᵀb + c)^p`
    Polynomial { degree: u32, offset: f64 },
}

impl Kernel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let k = Kernel::Gaussian { sigma };
        k.validate()?;
        Ok(k)
    }

    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        let k = Kernel::Polynomial { degree, offset };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Linear => Ok(()),
            Kernel::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::Config(format!("gaussian bandwidth must be positive, got {sigma}")),
            ),
            Kernel::Polynomial { degree: 0, .. } => {
                Err(Error::Config("polynomial degree must be at least 1".into()))
            }
            Kernel::Polynomial { offset, .. } if !offset.is_finite() => Err(Error::Config(
                format!("polynomial offset must be finite, got {offset}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, Kernel::Linear)
    }

    /// `K(a, b)`; slices must have equal length.
    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match *self {
            Kernel::Linear => dot(a, b),
            Kernel::Gaussian { sigma } => (-sq_dist(a, b) / (sigma * sigma)).exp(),
            Kernel::Polynomial { degree, offset } => powi(dot(a, b) + offset, degree),
        }
    }

    /// Coefficients `(α, β)` with `∂K(a, b)/∂a = α·a + β·b`. Also returns
    /// `K(a, b)`, which is needed anyway.
    #[inline]
    pub fn grad_coefficients(&self, a: &[f64], b: &[f64]) -> (f64, f64, f64) {
        match *self {
            Kernel::Linear => (dot(a, b), 0.0, 1.0),
            Kernel::Gaussian { sigma } => {
                let s2 = sigma * sigma;
                let k = (-sq_dist(a, b) / s2).exp();
                let c = 2.0 * k / s2;
                (k, -c, c)
            }
            Kernel::Polynomial { degree, offset } => {
                let base = dot(a, b) + offset;
                let k = powi(base, degree);
                (k, 0.0, f64::from(degree) * powi(base, degree - 1))
            }
        }
    }

    /// `K(a, a)` and the scalar `γ` with `d/da K(a, a) = γ·a`.
    #[inline]
    pub fn self_coefficient(&self, a: &[f64]) -> (f64, f64) {
        let (k, alpha, beta) = self.grad_coefficients(a, a);
        (k, 2.0 * (alpha + beta))
    }
}

/// Checked kernel evaluation.
pub fn kernel_eval(kernel: &Kernel, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    kernel.validate()?;
    Ok(kernel.eval(a, b))
}

/// Config encoding: `linear`, `gaussian:σ`, `poly:p:c`.
impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Linear => f.write_str("linear"),
            Kernel::Gaussian { sigma } => write!(f, "gaussian:{sigma}"),
            Kernel::Polynomial { degree, offset } => write!(f, "poly:{degree}:{offset}"),
        }
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            Error::Config(format!(
                "bad kernel `{s}` (want linear, gaussian:σ or poly:p:c)"
            ))
        };
        let parts: Vec<&str> = s.trim().split(':').collect();
        let kernel = match parts.as_slice() {
            ["linear"] => Kernel::Linear,
            ["gaussian", sigma] => Kernel::Gaussian {
                sigma: sigma.parse().map_err(|_| bad())?,
            },
            ["poly", p, c] => Kernel::Polynomial {
                degree: p.parse().map_err(|_| bad())?,
                offset: c.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        kernel.validate()?;
        Ok(kernel)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
fn powi(x: f64, n: u32) -> f64 {
    // Degrees are tiny; i32 overflow is not a practical concern.
    x.powi(n as i32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(
            kernel_eval(&Kernel::Linear, &[1., 2., 3.], &[4., 5., 6.]).unwrap(),
            32.0
        );
        let g = Kernel::gaussian(1.0).unwrap();
        assert_eq!(kernel_eval(&g, &[0.3, -2.0], &[0.3, -2.0]).unwrap(), 1.0);
        let p = Kernel::polynomial(2, 2.0).unwrap();
        assert_eq!(kernel_eval(&p, &[1., 0.], &[1., 0.]).unwrap(), 9.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            kernel_eval(&Kernel::Linear, &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn invalid_parameters() {
        assert!(Kernel::gaussian(0.0).is_err());
        assert!(Kernel::gaussian(-1.0).is_err());
        assert!(Kernel::polynomial(0, 1.0).is_err());
    }

    #[test]
    fn parse_and_display() {
        for s in ["linear", "gaussian:1.5", "poly:2:2", "poly:3:-0.5"] {
            let k: Kernel = s.parse().unwrap();
            assert_eq!(k.to_string().parse::<Kernel>().unwrap(), k);
        }
        assert_eq!(
            "poly:2:2".parse::<Kernel>().unwrap(),
            Kernel::Polynomial {
                degree: 2,
                offset: 2.0
            }
        );
        for s in [
            "",
            "rbf",
            "gaussian",
            "gaussian:0",
            "poly:2",
            "poly:0:1",
            "poly:x:1",
        ] {
            assert!(s.parse::<Kernel>().is_err(), "{s}");
        }
    }

    fn kernels() -> impl Strategy<Value = Kernel> {
        prop_oneof![
            Just(Kernel::Linear),
            (0.2f64..3.0).prop_map(|sigma| Kernel::Gaussian { sigma }),
            (1u32..4, -2.0f64..2.0)
                .prop_map(|(degree, offset)| Kernel::Polynomial { degree, offset }),
        ]
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..6).prop_flat_map(|d| {
            (
                prop::collection::vec(-1.0f64..1.0, d),
                prop::collection::vec(-1.0f64..1.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn symmetric(k in kernels(), (a, b) in pair()) {
            prop_assert_eq!(k.eval(&a, &b), k.eval(&b, &a));
        }

        #[test]
        fn gaussian_self_similarity(sigma in 0.1f64..10.0, (a, _) in pair()) {
            prop_assert_eq!(Kernel::Gaussian { sigma }.eval(&a, &a), 1.0);
        }

        #[test]
        fn gradient_coefficients_match_finite_differences(k in kernels(), (a, b) in pair()) {
            let (value, alpha, beta) = k.grad_coefficients(&a, &b);
            prop_assert!((value - k.eval(&a, &b)).abs() <= 1e-12 * value.abs().max(1.0));
            let h = 1e-6;
            for i in 0..a.len() {
                let mut plus = a.clone();
                let mut minus = a.clone();
                plus[i] += h;
                minus[i] -= h;
                let fd = (k.eval(&plus, &b) - k.eval(&minus, &b)) / (2.0 * h);
                let analytic = alpha * a[i] + beta * b[i];
                prop_assert!((fd - analytic).abs() <= 1e-6 * analytic.abs().max(1.0));
            }
        }
    }
}
