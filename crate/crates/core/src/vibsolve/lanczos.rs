//! Lowest eigenpair of an implicitly applied symmetric operator.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, sym_eigen_sorted};

#[derive(Clone, Debug)]
pub struct LanczosOutcome {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub converged: bool,
    pub applications: usize,
}

/// Thick-restarted Lanczos with full reorthogonalization: the search space
/// grows by the current residual (which spans the same Krylov space), the
/// Ritz pair comes from the explicit projection, and on reaching `krylov`
/// vectors the space shrinks to the lowest few Ritz vectors. The initial
/// space holds `start` and a fixed pseudo-random probe, so exact zeros in
/// `start` cannot confine the search. The returned value never exceeds the
/// Rayleigh quotient of `start`. Converged when
/// `‖Ax − θx‖ ≤ tol·max(1, |θ|)`.
pub fn lanczos_lowest<F>(mut apply: F, start: &[f64], tol: f64, krylov: usize, restarts: usize) -> Result<LanczosOutcome>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let n = start.len();
    if n == 0 {
        return Err(Error::Invalid("empty Lanczos start vector".into()));
    }
    let mut x = start.to_vec();
    let nx = norm(&x);
    if !nx.is_finite() {
        return Err(Error::NonFinite("Lanczos start vector".into()));
    }
    if nx == 0.0 {
        x = vec![1.0 / (n as f64).sqrt(); n];
    } else {
        x.iter_mut().for_each(|v| *v /= nx);
    }
    let kmax = krylov.max(3).min(n);
    let keep = (kmax / 4).max(2).min(kmax - 1).max(1);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut images: Vec<Vec<f64>> = Vec::new();
    let mut proj = DMatrix::<f64>::zeros(0, 0);
    let probe: Vec<f64> = (0..n).map(|i| ((i as f64 + 1.0) * 0.754_877_666_246_692_8).fract() - 0.5).collect();
    let mut pending = vec![probe];
    let mut next = x;
    let mut applications = 0;
    let mut restarts_left = restarts.max(1);
    loop {
        // Orthonormalize the new direction against the space.
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &next);
                axpy(-c, v, &mut next);
            }
        }
        let nn = norm(&next);
        let grown = nn > 1e-12 && basis.len() < n;
        if grown {
            next.iter_mut().for_each(|v| *v /= nn);
            let av = apply(&next);
            applications += 1;
            if av.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("Lanczos operator application".into()));
            }
            let k = basis.len();
            let mut p = DMatrix::zeros(k + 1, k + 1);
            p.view_mut((0, 0), (k, k)).copy_from(&proj);
            for j in 0..k {
                let c = 0.5 * (dot(&basis[j], &av) + dot(&next, &images[j]));
                p[(j, k)] = c;
                p[(k, j)] = c;
            }
            p[(k, k)] = dot(&next, &av);
            proj = p;
            basis.push(std::mem::take(&mut next));
            images.push(av);
        }
        if let Some(p) = pending.pop() {
            next = p;
            continue;
        }
        let (vals, vecs) = sym_eigen_sorted(&proj);
        let theta = vals[0];
        let mut vec = vec![0.0; n];
        let mut res = vec![0.0; n];
        for (j, (v, av)) in basis.iter().zip(&images).enumerate() {
            let c = vecs[(j, 0)];
            axpy(c, v, &mut vec);
            axpy(c, av, &mut res);
        }
        axpy(-theta, &vec, &mut res);
        let residual = norm(&res);
        let converged = residual <= tol * theta.abs().max(1.0);
        let stuck = !grown;
        if converged || stuck {
            return Ok(LanczosOutcome {
                value: theta,
                vector: vec,
                residual,
                converged,
                applications,
            });
        }
        if basis.len() >= kmax {
            if restarts_left == 0 {
                return Ok(LanczosOutcome {
                    value: theta,
                    vector: vec,
                    residual,
                    converged: false,
                    applications,
                });
            }
            restarts_left -= 1;
            let k = basis.len();
            let y = vecs.columns(0, keep).into_owned();
            let combine = |src: &[Vec<f64>]| -> Vec<Vec<f64>> {
                (0..keep)
                    .map(|c| {
                        let mut out = vec![0.0; n];
                        for j in 0..k {
                            axpy(y[(j, c)], &src[j], &mut out);
                        }
                        out
                    })
                    .collect()
            };
            basis = combine(&basis);
            images = combine(&images);
            proj = DMatrix::from_fn(keep, keep, |r, c| if r == c { vals[r] } else { 0.0 });
        }
        next = res;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::rng;
    use rand::Rng;

    fn random_symmetric(n: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng(seed);
        let a = DMatrix::from_fn(n, n, |_, _| r.random_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn finds_the_lowest_eigenpair() {
        let a = random_symmetric(120, 1);
        let (vals, _) = sym_eigen_sorted(&a);
        let start: Vec<f64> = (0..120).map(|i| 1.0 + (i as f64).sin()).collect();
        let out = lanczos_lowest(|v| (&a * DMatrix::from_column_slice(120, 1, v)).as_slice().to_vec(), &start, 1e-10, 30, 200).unwrap();
        assert!(out.converged);
        assert!((out.value - vals[0]).abs() < 1e-10);
        assert!(out.residual < 1e-10 * vals[0].abs().max(1.0));
    }

    #[test]
    fn small_spaces_are_solved_exactly() {
        let out = lanczos_lowest(|v| vec![v[1], v[0]], &[1.0, 0.3], 1e-12, 20, 5).unwrap();
        assert!((out.value + 1.0).abs() < 1e-14);
        assert!(out.converged);
    }

    #[test]
    fn never_worse_than_the_start() {
        let a = random_symmetric(50, 2);
        let (_, vecs) = sym_eigen_sorted(&a);
        let start: Vec<f64> = vecs.column(0).iter().copied().collect();
        let rq = dot(&start, (&a * DMatrix::from_column_slice(50, 1, &start)).as_slice());
        let out = lanczos_lowest(|v| (&a * DMatrix::from_column_slice(50, 1, v)).as_slice().to_vec(), &start, 1e-10, 4, 1).unwrap();
        assert!(out.value <= rq + 1e-12);
    }
}
