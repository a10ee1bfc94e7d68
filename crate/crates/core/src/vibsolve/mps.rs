//! Matrix product states on a product grid.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::linalg::qr_positive;
use crate::tensor::Core;

#[derive(Clone, Debug, PartialEq)]
pub struct Mps {
    cores: Vec<Core>,
    center: Option<usize>,
}

impl Mps {
    pub fn new(cores: Vec<Core>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::Invalid("an MPS needs at least one site".into()));
        }
        check_dim("MPS left boundary", 1, cores[0].left)?;
        check_dim("MPS right boundary", 1, cores[cores.len() - 1].right)?;
        for w in cores.windows(2) {
            check_dim("MPS bond", w[0].right, w[1].left)?;
        }
        Ok(Self { cores, center: None })
    }

    /// Gaussian random state with bond dimension `bond` (clipped to the full
    /// rank of each cut), normalized with its center on site 0.
    pub fn random<R: Rng + ?Sized>(dims: &[usize], bond: usize, rng: &mut R) -> Result<Self> {
        let f = dims.len();
        let bonds: Vec<usize> = (0..=f)
            .map(|i| {
                if i == 0 || i == f {
                    return 1;
                }
                let left = dims[..i].iter().fold(1usize, |a, &d| a.saturating_mul(d));
                let right = dims[i..].iter().fold(1usize, |a, &d| a.saturating_mul(d));
                bond.max(1).min(left).min(right)
            })
            .collect();
        let cores = (0..f)
            .map(|i| Core::from_fn(bonds[i], dims[i], bonds[i + 1], |_, _, _| StandardNormal.sample(rng)))
            .collect();
        let mut mps = Self::new(cores)?;
        mps.canonicalize(0);
        mps.normalize();
        Ok(mps)
    }

    pub fn sites(&self) -> usize {
        self.cores.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.phys).collect()
    }

    /// Bond dimensions including the two boundary ones.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.cores.iter().map(|c| c.left).collect();
        b.push(1);
        b
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn cores(&self) -> &[Core] {
        &self.cores
    }

    pub fn core(&self, i: usize) -> &Core {
        &self.cores[i]
    }

    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub(crate) fn set_core(&mut self, i: usize, core: Core) {
        self.cores[i] = core;
        self.center = None;
    }

    pub(crate) fn set_center(&mut self, center: usize) {
        self.center = Some(center);
    }

    /// QR sweeps from both ends so that every site left of `center` is
    /// left-isometric and every site right of it right-isometric.
    pub fn canonicalize(&mut self, center: usize) {
        let f = self.sites();
        assert!(center < f);
        for i in 0..center {
            let (q, r) = qr_positive(&self.cores[i].left_matrix());
            let c = &self.cores[i];
            let (left, phys) = (c.left, c.phys);
            self.cores[i] = Core::from_left_matrix(&q, left, phys);
            let next = &self.cores[i + 1];
            let m = r * next.right_matrix();
            self.cores[i + 1] = Core::from_right_matrix(&m, next.phys, next.right);
        }
        for i in (center + 1..f).rev() {
            let c = &self.cores[i];
            let (phys, right) = (c.phys, c.right);
            let (q, r) = qr_positive(&c.right_matrix().transpose());
            self.cores[i] = Core::from_right_matrix(&q.transpose(), phys, right);
            let prev = &self.cores[i - 1];
            let m = prev.left_matrix() * r.transpose();
            self.cores[i - 1] = Core::from_left_matrix(&m, prev.left, prev.phys);
        }
        self.center = Some(center);
    }

    pub fn norm(&self) -> f64 {
        overlap(self, self).unwrap_or(0.0).max(0.0).sqrt()
    }

    /// Rescales the center core (or the first core without a center).
    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            let i = self.center.unwrap_or(0);
            self.cores[i].data.iter_mut().for_each(|v| *v /= n);
        }
    }

    /// All `Π d` amplitudes, first site most significant.
    pub fn to_dense(&self, guard: usize) -> Result<Vec<f64>> {
        let size = self.dims().iter().fold(1usize, |a, &d| a.saturating_mul(d));
        if size > guard {
            return Err(Error::GuardExceeded {
                what: "dense MPS",
                size,
                limit: guard,
            });
        }
        let mut acc = DMatrix::from_element(1, 1, 1.0);
        for c in &self.cores {
            let m = acc * c.right_matrix();
            acc = DMatrix::from_row_slice(m.nrows() * c.phys, c.right, &row_major(&m));
        }
        Ok(acc.iter().copied().collect())
    }
}

pub(crate) fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// `⟨a|b⟩`.
pub fn overlap(a: &Mps, b: &Mps) -> Result<f64> {
    check_dim("overlap sites", a.sites(), b.sites())?;
    let mut e = DMatrix::from_element(1, 1, 1.0);
    for (ca, cb) in a.cores.iter().zip(&b.cores) {
        check_dim("overlap physical dim", ca.phys, cb.phys)?;
        e = overlap_step(&e, ca, cb);
    }
    Ok(e[(0, 0)])
}

/// `E'[b, b'] = Σ E[a, a']·A[a, s, b]·B[a', s, b']`.
pub(crate) fn overlap_step(e: &DMatrix<f64>, a: &Core, b: &Core) -> DMatrix<f64> {
    // (E·B) has rows a and columns (s, b').
    let eb = e * b.right_matrix();
    let eb = DMatrix::from_row_slice(a.left * a.phys, b.right, &row_major(&eb));
    a.left_matrix().transpose() * eb
}
