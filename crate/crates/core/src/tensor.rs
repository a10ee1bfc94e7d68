use serde::{Deserialize, Serialize};

use nalgebra::DMatrix;

/// Three-index tensor stored row-major as `[left][phys][right]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Core {
    pub left: usize,
    pub phys: usize,
    pub right: usize,
    pub data: Vec<f64>,
}

impl Core {
    pub fn zeros(left: usize, phys: usize, right: usize) -> Self {
        Self {
            left,
            phys,
            right,
            data: vec![0.0; left * phys * right],
        }
    }

    pub fn from_fn(
        left: usize,
        phys: usize,
        right: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(left * phys * right);
        for l in 0..left {
            for p in 0..phys {
                for r in 0..right {
                    data.push(f(l, p, r));
                }
            }
        }
        Self {
            left,
            phys,
            right,
            data,
        }
    }

    #[inline]
    pub fn idx(&self, l: usize, p: usize, r: usize) -> usize {
        (l * self.phys + p) * self.right + r
    }

    #[inline]
    pub fn get(&self, l: usize, p: usize, r: usize) -> f64 {
        self.data[self.idx(l, p, r)]
    }

    #[inline]
    pub fn set(&mut self, l: usize, p: usize, r: usize, v: f64) {
        let i = self.idx(l, p, r);
        self.data[i] = v;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Matrix with rows `(left, phys)` and columns `right`.
    pub fn left_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.left * self.phys, self.right, &self.data)
    }

    /// Matrix with rows `left` and columns `(phys, right)`.
    pub fn right_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.left, self.phys * self.right, &self.data)
    }

    pub fn from_left_matrix(m: &DMatrix<f64>, left: usize, phys: usize) -> Self {
        assert_eq!(m.nrows(), left * phys);
        let right = m.ncols();
        Self::from_fn(left, phys, right, |l, p, r| m[(l * phys + p, r)])
    }

    pub fn from_right_matrix(m: &DMatrix<f64>, phys: usize, right: usize) -> Self {
        assert_eq!(m.ncols(), phys * right);
        let left = m.nrows();
        Self::from_fn(left, phys, right, |l, p, r| m[(l, p * right + r)])
    }

    /// Contracts `v` (length `left`) and `row` (length `phys`) into a vector
    /// of length `right`.
    pub fn contract_left(&self, v: &[f64], row: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.left);
        debug_assert_eq!(row.len(), self.phys);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (l, &vl) in v.iter().enumerate() {
            if vl == 0.0 {
                continue;
            }
            for (p, &rp) in row.iter().enumerate() {
                let c = vl * rp;
                if c == 0.0 {
                    continue;
                }
                let base = self.idx(l, p, 0);
                for (o, w) in out.iter_mut().zip(&self.data[base..base + self.right]) {
                    *o += c * w;
                }
            }
        }
    }

    /// Contracts `row` and `v` (length `right`) into a vector of length `left`.
    pub fn contract_right(&self, row: &[f64], v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.right);
        for (l, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (p, &rp) in row.iter().enumerate() {
                if rp == 0.0 {
                    continue;
                }
                let base = self.idx(l, p, 0);
                let s: f64 = self.data[base..base + self.right]
                    .iter()
                    .zip(v)
                    .map(|(w, x)| w * x)
                    .sum();
                acc += rp * s;
            }
            *o = acc;
        }
    }
}
