use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::orthogonality_error;

/// Orthonormal n×f map from input coordinates to latent coordinates, `q = x·U`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coordinator {
    matrix: DMatrix<f64>,
}

impl Coordinator {
    /// First `f` columns of the n×n identity.
    pub fn identity(n: usize, f: usize) -> Result<Self> {
        if f > n || f == 0 {
            return Err(Error::Invalid(format!("latent dimension {f} for {n} inputs")));
        }
        Ok(Self {
            matrix: DMatrix::identity(n, f),
        })
    }

    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() > matrix.nrows() || matrix.ncols() == 0 {
            return Err(Error::Invalid(format!(
                "coordinator shape {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let err = orthogonality_error(&matrix);
        if err > 1e-10 {
            return Err(Error::NotOrthogonal(err));
        }
        Ok(Self { matrix })
    }

    #[cfg(test)]
    pub(crate) fn new_unchecked(matrix: DMatrix<f64>) -> Self {
        Self { matrix }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn f(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.matrix)
    }

    pub fn to_latent(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("coordinate vector", self.n(), x.len())?;
        Ok(self.project(x))
    }

    /// `x·U` without the length check.
    pub(crate) fn project(&self, x: &[f64]) -> Vec<f64> {
        let (n, f) = self.matrix.shape();
        (0..f)
            .map(|i| (0..n).map(|a| x[a] * self.matrix[(a, i)]).sum())
            .collect()
    }

/// Maps a latent vector or covector back to input space, `g·Uᵀ`; the
    /// inverse of `to_latent` when `n = f`.
    pub fn lift(&self, g: &[f64]) -> Vec<f64> {
        let (n, f) = self.matrix.shape();
        (0..n)
            .map(|a| (0..f).map(|i| g[i] * self.matrix[(a, i)]).sum())
            .collect()
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let (n, f) = self.matrix.shape();
        (0..n)
            .flat_map(|a| (0..f).map(move |i| (a, i)))
            .map(|(a, i)| self.matrix[(a, i)])
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct CoordinatorRepr {
    n: usize,
    f: usize,
    data: Vec<f64>,
}

impl Serialize for Coordinator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CoordinatorRepr {
            n: self.n(),
            f: self.f(),
            data: self.to_row_major(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Coordinator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = CoordinatorRepr::deserialize(d)?;
        if repr.data.len() != repr.n * repr.f {
            return Err(serde::de::Error::custom("coordinator data length"));
        }
        Coordinator::new(DMatrix::from_row_slice(repr.n, repr.f, &repr.data))
            .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm;
    use crate::testutil::{random_orthogonal, rng};
    use proptest::prelude::*;

    #[test]
    fn identity_is_a_no_op() {
        let c = Coordinator::identity(6, 6).unwrap();
        let x = [0.1, -2.0, 3.5, 0.0, 1e-3, 7.0];
        assert_eq!(c.to_latent(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn wrong_length_is_rejected() {
        let c = Coordinator::identity(3, 2).unwrap();
        assert!(matches!(
            c.to_latent(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn non_orthonormal_matrix_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Coordinator::new(m).is_err());
    }

    proptest! {
        #[test]
        fn square_coordinator_preserves_norm(seed in 0u64..1000, raw in prop::collection::vec(-1.0f64..1.0, 5)) {
            let mut r = rng(seed);
            let c = Coordinator::new(random_orthogonal(5, &mut r)).unwrap();
            let nx = norm(&raw);
            prop_assume!(nx > 1e-3);
            let x: Vec<f64> = raw.iter().map(|v| v / nx).collect();
            let q = c.to_latent(&x).unwrap();
            prop_assert!((norm(&q) - 1.0).abs() < 1e-12);
        }
    }
}
