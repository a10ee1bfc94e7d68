//! Riemannian Adam on the Stiefel manifold `{U : UᵀU = I}`.
//!
//! The Euclidean gradient is projected to the tangent space, moments are kept
//! elementwise as in Euclidean Adam, the step is retracted with a sign-fixed
//! QR factorization and the first moment is transported by re-projection.

use nalgebra::DMatrix;

use super::adam::AdamConfig;
use crate::error::{Error, Result};
use crate::linalg::qr_positive;
use crate::model::Coordinator;

/// Retraction fails if any `|R_ii|` drops below this.
pub const RETRACTION_FLOOR: f64 = 1e-12;

/// `G − U·sym(UᵀG)`.
pub fn tangent_projection(u: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    let utg = u.transpose() * g;
    let sym = (&utg + utg.transpose()) * 0.5;
    g - u * sym
}

/// Q factor of `Y` with non-negative diagonal in R.
pub fn qr_retract(y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (q, r) = qr_positive(y);
    let floor = (0..r.nrows().min(r.ncols()))
        .map(|k| r[(k, k)].abs())
        .fold(f64::INFINITY, f64::min);
    if !(floor >= RETRACTION_FLOOR) {
        return Err(Error::RankDeficient(floor));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("retraction".into()));
    }
    Ok(q)
}

#[derive(Clone, Debug)]
pub struct StiefelAdam {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
    t: u32,
}

impl StiefelAdam {
    pub fn new(n: usize, f: usize) -> Self {
        Self {
            m: DMatrix::zeros(n, f),
            v: DMatrix::zeros(n, f),
            t: 0,
        }
    }

    /// One step against the Euclidean gradient `egrad` (same shape as `U`).
    pub fn step(&mut self, u: &Coordinator, egrad: &DMatrix<f64>, cfg: &AdamConfig) -> Result<Coordinator> {
        let x = u.matrix();
        if egrad.shape() != x.shape() {
            return Err(Error::DimensionMismatch {
                context: "coordinator gradient",
                expected: x.len(),
                found: egrad.len(),
            });
        }
        if egrad.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("coordinator gradient".into()));
        }
        let rgrad = tangent_projection(x, egrad);
        self.t += 1;
        self.m = &self.m * cfg.beta1 + &rgrad * (1.0 - cfg.beta1);
        self.v = &self.v * cfg.beta2 + rgrad.component_mul(&rgrad) * (1.0 - cfg.beta2);
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let dir = self
            .m
            .zip_map(&self.v, |m, v| (m / c1) / ((v / c2).sqrt() + cfg.eps));
        let dir = tangent_projection(x, &dir);
        let next = qr_retract(&(x - dir * cfg.lr))?;
        self.m = tangent_projection(&next, &self.m);
        Coordinator::new(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthogonality_error, random_orthonormal};
    use crate::testutil::rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn projection_is_tangent_and_idempotent() {
        let mut r = rng(1);
        let u = random_orthonormal(6, 3, &mut r);
        let g = DMatrix::from_fn(6, 3, |_, _| r.random_range(-1.0..1.0));
        let p = tangent_projection(&u, &g);
        let s = u.transpose() * &p;
        assert!((&s + s.transpose()).amax() < 1e-12);
        assert!((tangent_projection(&u, &p) - &p).amax() < 1e-12);
    }

    #[test]
    fn zero_gradient_keeps_the_frame() {
        let mut r = rng(2);
        let u = Coordinator::new(random_orthonormal(5, 2, &mut r)).unwrap();
        let mut opt = StiefelAdam::new(5, 2);
        let next = opt.step(&u, &DMatrix::zeros(5, 2), &AdamConfig::default()).unwrap();
        assert!((next.matrix() - u.matrix()).amax() < 1e-12);
    }

    #[test]
    fn rank_deficient_step_is_reported() {
        let y = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(matches!(qr_retract(&y), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn maximizes_a_trace_objective() {
        // Minimize −tr(UᵀAU): optimum is the span of the top eigenvectors.
        let mut r = rng(3);
        let q = random_orthonormal(5, 5, &mut r);
        let a = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![5.0, 4.0, 1.0, 0.5, 0.1])) * q.transpose();
        let mut u = Coordinator::new(random_orthonormal(5, 2, &mut r)).unwrap();
        let mut opt = StiefelAdam::new(5, 2);
        let cfg = AdamConfig::default().with_lr(0.02);
        for _ in 0..3000 {
            let g = -(&a * u.matrix()) * 2.0;
            u = opt.step(&u, &g, &cfg).unwrap();
        }
        let tr = (u.matrix().transpose() * &a * u.matrix()).trace();
        assert!((tr - 9.0).abs() < 1e-3, "{tr}");
    }

    proptest! {
        #[test]
        fn steps_stay_on_the_manifold(seed in 0u64..500) {
            let mut r = rng(seed);
            let mut u = Coordinator::new(random_orthonormal(7, 3, &mut r)).unwrap();
            let mut opt = StiefelAdam::new(7, 3);
            let cfg = AdamConfig::default().with_lr(0.1);
            for _ in 0..20 {
                let g = DMatrix::from_fn(7, 3, |_, _| r.random_range(-10.0..10.0));
                u = opt.step(&u, &g, &cfg).unwrap();
            }
            prop_assert!(orthogonality_error(u.matrix()) < 1e-10);
        }
    }
}
