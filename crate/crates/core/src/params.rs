//! Scaling parameters of the equation `F(D²u) = u^{γ−1}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponent `γ`, the derived growth exponent `β = 2/(2−γ)` and the
/// ellipticity constant `Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    gamma: f64,
    beta: f64,
    lambda: f64,
}

impl Params {
    pub fn new(gamma: f64, lambda: f64) -> Result<Self> {
        let beta = beta_of(gamma)?;
        if !(lambda >= 1.0) || !lambda.is_finite() {
            return Err(Error::Parameter(format!("ellipticity constant must satisfy lambda >= 1, got {lambda}")));
        }
        Ok(Params { gamma, beta, lambda })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Right-hand side `u₊^{γ−1}`.
    pub fn rhs(&self, u: f64) -> f64 {
        if u > 0.0 {
            u.powf(self.gamma - 1.0)
        } else {
            0.0
        }
    }
}

/// `β = 2/(2−γ)` for `γ ∈ (1,2)`.
pub fn beta_of(gamma: f64) -> Result<f64> {
    if !(gamma > 1.0 && gamma < 2.0) {
        return Err(Error::Parameter(format!("gamma must lie in the open interval (1,2), got {gamma}")));
    }
    Ok(2.0 / (2.0 - gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn beta_examples() {
        assert_eq!(beta_of(1.5).unwrap(), 4.0);
        assert!((beta_of(1.9).unwrap() - 20.0).abs() < 1e-12);
        // quadratic growth in the obstacle limit
        assert!((beta_of(1.0 + 1e-12).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn out_of_range_gamma_names_interval() {
        for g in [1.0, 2.0, 2.5, 0.5, f64::NAN] {
            let err = beta_of(g).unwrap_err();
            assert!(err.to_string().contains("(1,2)"), "{err}");
        }
    }

    #[test]
    fn lambda_below_one_rejected() {
        assert!(Params::new(1.5, 0.5).is_err());
        assert!(Params::new(1.5, 1.0).is_ok());
    }

    proptest! {
        #[test]
        fn beta_increasing_and_above_two(a in 1.0001f64..1.9999, b in 1.0001f64..1.9999) {
            let (ba, bb) = (beta_of(a).unwrap(), beta_of(b).unwrap());
            prop_assert!(ba > 2.0 && bb > 2.0);
            if a < b {
                prop_assert!(ba < bb);
            }
        }
    }
}
