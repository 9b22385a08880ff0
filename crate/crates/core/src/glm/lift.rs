//! Degree-two polynomial feature map.
//!
//! A context `x ∈ [-1, 1]^d` is lifted to
//! `(1, x_1, …, x_d, x_1x_1, x_1x_2, …, x_1x_d, x_2x_2, …, x_dx_d) / √d'`
//! with quadratic monomials in lexicographic `(a, b)`, `a ≤ b` order. Every
//! monomial is bounded by one in magnitude, so dividing by `√d'` keeps the
//! lifted vector inside the unit ball.

use serde::{Deserialize, Serialize};

use crate::error::{Result, UssError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureMapConfig {
    pub input_dim: usize,
    pub lifted_dim: usize,
    pub normalization_scale: f64,
}

impl FeatureMapConfig {
    /// Degree-two polynomial map for `input_dim`-dimensional contexts.
    pub fn quadratic(input_dim: usize) -> Result<Self> {
        if input_dim == 0 {
            return Err(UssError::Precondition(
                "feature map needs at least one input coordinate".into(),
            ));
        }
        let lifted_dim = 1 + input_dim + input_dim * (input_dim + 1) / 2;
        Ok(Self {
            input_dim,
            lifted_dim,
            normalization_scale: 1.0 / (lifted_dim as f64).sqrt(),
        })
    }

    /// Checks the invariants tying the three fields together (used after
    /// deserialization).
    pub fn validate(&self) -> Result<()> {
        let expected = Self::quadratic(self.input_dim)?;
        if expected.lifted_dim != self.lifted_dim
            || (expected.normalization_scale - self.normalization_scale).abs() > 1e-15
        {
            return Err(UssError::Validation(format!(
                "feature map for d = {} must have d' = {} and scale 1/sqrt(d')",
                self.input_dim, expected.lifted_dim
            )));
        }
        Ok(())
    }

    pub fn lift(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.lifted_dim];
        self.lift_into(x, &mut out)?;
        Ok(out)
    }

    /// Writes the lifted vector of `x` into `out` (length `lifted_dim`).
    pub fn lift_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(UssError::Precondition(format!(
                "context has {} coordinates, feature map expects {}",
                x.len(),
                self.input_dim
            )));
        }
        if out.len() != self.lifted_dim {
            return Err(UssError::Precondition(format!(
                "output buffer has length {}, lifted dimension is {}",
                out.len(),
                self.lifted_dim
            )));
        }
        for (index, &value) in x.iter().enumerate() {
            if !(-1.0..=1.0).contains(&value) {
                return Err(UssError::Domain { index, value });
            }
        }
        let s = self.normalization_scale;
        let d = self.input_dim;
        out[0] = s;
        for (a, &xa) in x.iter().enumerate() {
            out[1 + a] = s * xa;
        }
        let mut k = 1 + d;
        for a in 0..d {
            for b in a..d {
                out[k] = s * x[a] * x[b];
                k += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dimension_formula() {
        assert_eq!(FeatureMapConfig::quadratic(1).unwrap().lifted_dim, 3);
        assert_eq!(FeatureMapConfig::quadratic(3).unwrap().lifted_dim, 10);
        assert_eq!(FeatureMapConfig::quadratic(8).unwrap().lifted_dim, 45);
        assert!(FeatureMapConfig::quadratic(0).is_err());
    }

    #[test]
    fn zero_context() {
        let map = FeatureMapConfig::quadratic(1).unwrap();
        let phi = map.lift(&[0.0]).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert_eq!(phi, vec![s, 0.0, 0.0]);
    }

    #[test]
    fn half_context_expands_monomials() {
        let map = FeatureMapConfig::quadratic(1).unwrap();
        let phi = map.lift(&[0.5]).unwrap();
        let s = 1.0 / 3f64.sqrt();
        let expected = [s, 0.5 * s, 0.25 * s];
        for (a, b) in phi.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let norm: f64 = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(norm <= 1.0);
    }

    #[test]
    fn monomial_order_is_lexicographic() {
        let map = FeatureMapConfig::quadratic(3).unwrap();
        let phi = map.lift(&[0.5, -0.25, 1.0]).unwrap();
        let s = map.normalization_scale;
        let raw: Vec<f64> = phi.iter().map(|v| v / s).collect();
        let expected = [
            1.0, 0.5, -0.25, 1.0, // bias + linear
            0.25, -0.125, 0.5, // x1x1 x1x2 x1x3
            0.0625, -0.25, // x2x2 x2x3
            1.0,   // x3x3
        ];
        for (a, b) in raw.iter().zip(expected) {
            assert!((a - b).abs() < 1e-14, "{raw:?}");
        }
    }

    #[test]
    fn out_of_range_coordinate_names_index() {
        let map = FeatureMapConfig::quadratic(3).unwrap();
        match map.lift(&[0.0, 1.5, 0.0]) {
            Err(UssError::Domain { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected domain error, got {other:?}"),
        }
        assert!(map.lift(&[0.0, f64::NAN, 0.0]).is_err());
        assert!(map.lift(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn corner_has_unit_norm() {
        let map = FeatureMapConfig::quadratic(4).unwrap();
        let phi = map.lift(&[1.0, -1.0, 1.0, -1.0]).unwrap();
        let norm: f64 = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn lifted_norm_is_bounded(x in proptest::collection::vec(-1.0f64..=1.0, 1..9)) {
            let map = FeatureMapConfig::quadratic(x.len()).unwrap();
            let phi = map.lift(&x).unwrap();
            let norm: f64 = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(norm <= 1.0 + 1e-12);
        }
    }
}
