//! Matrix product operators.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{kept_rank, qr_positive, svd_sorted};

pub const MPO_SCHEMA: &str = "ttpes-mpo/1";

/// One MPO core `W[a, σ', σ, b]` stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpoCore {
    pub left: usize,
    pub d: usize,
    pub right: usize,
    pub data: Vec<f64>,
}

impl MpoCore {
    pub fn zeros(left: usize, d: usize, right: usize) -> Self {
        Self {
            left,
            d,
            right,
            data: vec![0.0; left * d * d * right],
        }
    }

    #[inline]
    pub fn idx(&self, a: usize, bra: usize, ket: usize, b: usize) -> usize {
        ((a * self.d + bra) * self.d + ket) * self.right + b
    }

    #[inline]
    pub fn get(&self, a: usize, bra: usize, ket: usize, b: usize) -> f64 {
        self.data[self.idx(a, bra, ket, b)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, bra: usize, ket: usize, b: usize, v: f64) {
        let k = self.idx(a, bra, ket, b);
        self.data[k] = v;
    }

    /// Writes the `d × d` operator block at bond position `(a, b)`.
    pub fn set_block(&mut self, a: usize, b: usize, block: &DMatrix<f64>) {
        for s in 0..self.d {
            for t in 0..self.d {
                self.set(a, s, t, b, block[(s, t)]);
            }
        }
    }

    /// Rows `(a, σ', σ)`, columns `b`.
    fn left_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.left * self.d * self.d, self.right, &self.data)
    }

    /// Rows `a`, columns `(σ', σ, b)`.
    fn right_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.left, self.d * self.d * self.right, &self.data)
    }

    fn from_left_matrix(m: &DMatrix<f64>, left: usize, d: usize) -> Self {
        let right = m.ncols();
        let mut c = Self::zeros(left, d, right);
        for r in 0..m.nrows() {
            for b in 0..right {
                c.data[r * right + b] = m[(r, b)];
            }
        }
        c
    }

    fn from_right_matrix(m: &DMatrix<f64>, d: usize, right: usize) -> Self {
        let left = m.nrows();
        let mut c = Self::zeros(left, d, right);
        let width = d * d * right;
        for a in 0..left {
            for k in 0..width {
                c.data[a * width + k] = m[(a, k)];
            }
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mpo {
    cores: Vec<MpoCore>,
}

#[derive(Serialize, Deserialize)]
struct MpoFile {
    schema: String,
    sites: usize,
    shapes: Vec<[usize; 4]>,
    cores: Vec<Vec<f64>>,
}

impl Mpo {
    pub fn new(cores: Vec<MpoCore>) -> Result<Self> {
        let mpo = Self { cores };
        mpo.validate()?;
        Ok(mpo)
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.cores.len();
        if f == 0 {
            return Err(Error::Invalid("MPO without sites".into()));
        }
        check_dim("MPO left boundary", 1, self.cores[0].left)?;
        check_dim("MPO right boundary", 1, self.cores[f - 1].right)?;
        for (i, c) in self.cores.iter().enumerate() {
            check_dim("MPO core data", c.left * c.d * c.d * c.right, c.data.len())?;
            if i + 1 < f {
                check_dim("MPO bond", c.right, self.cores[i + 1].left)?;
            }
        }
        Ok(())
    }

    /// `c·1` with bond dimension 1.
    pub fn identity(sites: usize, d: usize, c: f64) -> Result<Self> {
        Self::new(
            (0..sites)
                .map(|i| {
                    let mut core = MpoCore::zeros(1, d, 1);
                    for s in 0..d {
                        core.set(0, s, s, 0, if i == 0 { c } else { 1.0 });
                    }
                    core
                })
                .collect(),
        )
    }

    pub fn sites(&self) -> usize {
        self.cores.len()
    }

    /// Local dimension of every site.
    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.d).collect()
    }

    /// `[M_0, …, M_f]` including the unit boundaries.
    pub fn bond_dims(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.cores.iter().map(|c| c.left).collect();
        b.push(1);
        b
    }

    pub fn max_bond(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn cores(&self) -> &[MpoCore] {
        &self.cores
    }

    pub fn core(&self, i: usize) -> &MpoCore {
        &self.cores[i]
    }

    /// Number of rows of the dense operator.
    pub fn dense_rows(&self) -> Option<usize> {
        self.cores.iter().try_fold(1usize, |acc, c| acc.checked_mul(c.d))
    }

    /// `⟨σ'|Ŵ|σ⟩` by a left-to-right contraction of the selected slices.
    pub fn expectation(&self, bra: &[usize], ket: &[usize]) -> Result<f64> {
        check_dim("bra configuration", self.sites(), bra.len())?;
        check_dim("ket configuration", self.sites(), ket.len())?;
        let mut v = vec![1.0];
        for (i, c) in self.cores.iter().enumerate() {
            if bra[i] >= c.d || ket[i] >= c.d {
                return Err(Error::Invalid(format!("grid index out of range at site {i}")));
            }
            let mut next = vec![0.0; c.right];
            for (a, &va) in v.iter().enumerate() {
                if va == 0.0 {
                    continue;
                }
                let base = c.idx(a, bra[i], ket[i], 0);
                for (o, w) in next.iter_mut().zip(&c.data[base..base + c.right]) {
                    *o += va * w;
                }
            }
            v = next;
        }
        Ok(v[0])
    }

    /// Dense operator, first site most significant.
    pub fn to_dense(&self, max_rows: usize) -> Result<DMatrix<f64>> {
        let rows = self.dense_rows().unwrap_or(usize::MAX);
        if rows > max_rows {
            return Err(Error::GuardExceeded {
                what: "dense operator",
                size: rows,
                limit: max_rows,
            });
        }
        // acc[(r, c, bond)] for the sites contracted so far.
        let mut dim = 1;
        let mut bond = 1;
        let mut acc = vec![1.0];
        for c in &self.cores {
            let nd = dim * c.d;
            let mut next = vec![0.0; nd * nd * c.right];
            for r in 0..dim {
                for col in 0..dim {
                    for a in 0..bond {
                        let v = acc[(r * dim + col) * bond + a];
                        if v == 0.0 {
                            continue;
                        }
                        for s in 0..c.d {
                            for t in 0..c.d {
                                let base = c.idx(a, s, t, 0);
                                let out = ((r * c.d + s) * nd + col * c.d + t) * c.right;
                                for b in 0..c.right {
                                    next[out + b] += v * c.data[base + b];
                                }
                            }
                        }
                    }
                }
            }
            acc = next;
            dim = nd;
            bond = c.right;
        }
        Ok(DMatrix::from_row_slice(dim, dim, &acc))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.cores[0].data.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Re-factorizes the operator, dropping singular values below
    /// `rel_cutoff·σ_max` at every bond.
    pub fn compress(&self, rel_cutoff: f64) -> Result<Self> {
        let f = self.sites();
        let mut cores = self.cores.clone();
        for i in 0..f.saturating_sub(1) {
            let (q, r) = qr_positive(&cores[i].left_matrix());
            let (left, d) = (cores[i].left, cores[i].d);
            cores[i] = MpoCore::from_left_matrix(&q, left, d);
            let merged = r * cores[i + 1].right_matrix();
            let (d2, right) = (cores[i + 1].d, cores[i + 1].right);
            cores[i + 1] = MpoCore::from_right_matrix(&merged, d2, right);
        }
        for i in (1..f).rev() {
            let svd = svd_sorted(&cores[i].right_matrix())?;
            let k = kept_rank(&svd.s, rel_cutoff, usize::MAX);
            let vt = svd.vt.rows(0, k).into_owned();
            let us = svd.u.columns(0, k) * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&svd.s[..k]));
            let (d, right) = (cores[i].d, cores[i].right);
            cores[i] = MpoCore::from_right_matrix(&vt, d, right);
            let merged = cores[i - 1].left_matrix() * us;
            let (left, d1) = (cores[i - 1].left, cores[i - 1].d);
            cores[i - 1] = MpoCore::from_left_matrix(&merged, left, d1);
        }
        Self::new(cores)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = MpoFile {
            schema: MPO_SCHEMA.into(),
            sites: self.sites(),
            shapes: self.cores.iter().map(|c| [c.left, c.d, c.d, c.right]).collect(),
            cores: self.cores.iter().map(|c| c.data.clone()).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MpoFile = serde_json::from_str(text)?;
        if file.schema != MPO_SCHEMA {
            return Err(Error::Schema(format!("expected {MPO_SCHEMA}, found {}", file.schema)));
        }
        check_dim("MPO sites", file.sites, file.shapes.len())?;
        check_dim("MPO cores", file.sites, file.cores.len())?;
        let cores = file
            .shapes
            .iter()
            .zip(file.cores)
            .map(|(s, data)| {
                if s[1] != s[2] {
                    return Err(Error::Schema("MPO cores must be square in the physical indices".into()));
                }
                Ok(MpoCore {
                    left: s[0],
                    d: s[1],
                    right: s[3],
                    data,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(cores)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Direct sum: bond dimensions add, the operator is `a + b`.
pub fn mpo_add(a: &Mpo, b: &Mpo) -> Result<Mpo> {
    check_dim("MPO sites", a.sites(), b.sites())?;
    if a.dims() != b.dims() {
        return Err(Error::Invalid("MPO local dimensions differ".into()));
    }
    let f = a.sites();
    if f == 1 {
        let mut c = a.cores[0].clone();
        for (x, y) in c.data.iter_mut().zip(&b.cores[0].data) {
            *x += y;
        }
        return Mpo::new(vec![c]);
    }
    let cores = (0..f)
        .map(|i| {
            let (ca, cb) = (&a.cores[i], &b.cores[i]);
            let d = ca.d;
            let left = if i == 0 { 1 } else { ca.left + cb.left };
            let right = if i == f - 1 { 1 } else { ca.right + cb.right };
            let mut out = MpoCore::zeros(left, d, right);
            let (la, ra) = (if i == 0 { 0 } else { ca.left }, if i == f - 1 { 0 } else { ca.right });
            for s in 0..d {
                for t in 0..d {
                    for x in 0..ca.left {
                        for y in 0..ca.right {
                            out.set(x, s, t, y, ca.get(x, s, t, y));
                        }
                    }
                    for x in 0..cb.left {
                        for y in 0..cb.right {
                            out.set(la + x, s, t, ra + y, cb.get(x, s, t, y));
                        }
                    }
                }
            }
            out
        })
        .collect();
    Mpo::new(cores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::rng;
    use rand::Rng;

    fn random_mpo(d: usize, bonds: &[usize], seed: u64) -> Mpo {
        let mut r = rng(seed);
        let dims: Vec<usize> = std::iter::once(1).chain(bonds.iter().copied()).chain([1]).collect();
        Mpo::new(
            (0..dims.len() - 1)
                .map(|i| {
                    let mut c = MpoCore::zeros(dims[i], d, dims[i + 1]);
                    c.data.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
                    c
                })
                .collect(),
        )
        .unwrap()
    }

    fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a.kronecker(b)
    }

    #[test]
    fn identity_times_constant() {
        let m = Mpo::identity(3, 4, 2.5).unwrap();
        let dense = m.to_dense(100).unwrap();
        assert_eq!(dense, DMatrix::identity(64, 64) * 2.5);
        assert_eq!(m.expectation(&[1, 2, 3], &[1, 2, 3]).unwrap(), 2.5);
        assert_eq!(m.expectation(&[1, 2, 3], &[1, 2, 0]).unwrap(), 0.0);
    }

    #[test]
    fn product_operator_is_a_kronecker_product() {
        let mut r = rng(1);
        let blocks: Vec<DMatrix<f64>> = (0..3).map(|_| DMatrix::from_fn(3, 3, |_, _| r.random_range(-1.0..1.0))).collect();
        let cores = blocks
            .iter()
            .map(|b| {
                let mut c = MpoCore::zeros(1, 3, 1);
                c.set_block(0, 0, b);
                c
            })
            .collect();
        let m = Mpo::new(cores).unwrap();
        let want = kron(&kron(&blocks[0], &blocks[1]), &blocks[2]);
        assert!((m.to_dense(27).unwrap() - want).amax() < 1e-14);
    }

    #[test]
    fn expectation_matches_dense_elements() {
        let m = random_mpo(4, &[3, 2], 2);
        let dense = m.to_dense(64).unwrap();
        for r in 0..64 {
            for c in (0..64).step_by(5) {
                let bra = [r / 16, (r / 4) % 4, r % 4];
                let ket = [c / 16, (c / 4) % 4, c % 4];
                assert!((m.expectation(&bra, &ket).unwrap() - dense[(r, c)]).abs() < 1e-12);
            }
        }
        assert!(m.expectation(&[0, 0, 4], &[0, 0, 0]).is_err());
    }

    #[test]
    fn addition_is_dense_addition() {
        let a = random_mpo(4, &[2], 3);
        let b = random_mpo(4, &[3], 4);
        let s = mpo_add(&a, &b).unwrap();
        assert_eq!(s.bond_dims(), vec![1, 5, 1]);
        let want = a.to_dense(16).unwrap() + b.to_dense(16).unwrap();
        assert!((s.to_dense(16).unwrap() - want).amax() < 1e-12);
        let zero = Mpo::identity(2, 4, 0.0).unwrap();
        assert!((mpo_add(&a, &zero).unwrap().to_dense(16).unwrap() - a.to_dense(16).unwrap()).amax() < 1e-15);
        let single = mpo_add(&random_mpo(3, &[], 5), &random_mpo(3, &[], 6)).unwrap();
        assert_eq!(single.sites(), 1);
    }

    #[test]
    fn compression_preserves_the_operator() {
        let a = random_mpo(3, &[2, 2], 7);
        let doubled = mpo_add(&a, &a).unwrap();
        assert_eq!(doubled.max_bond(), 4);
        let c = doubled.compress(0.0).unwrap();
        let want = a.to_dense(27).unwrap() * 2.0;
        assert!((c.to_dense(27).unwrap() - &want).amax() < 1e-10);
        let tight = doubled.compress(1e-12).unwrap();
        assert!(tight.max_bond() <= 2);
        assert!((tight.to_dense(27).unwrap() - want).amax() < 1e-10);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = random_mpo(3, &[2, 4], 8);
        let back = Mpo::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let bad = m.to_json().unwrap().replace(MPO_SCHEMA, "other/1");
        assert!(matches!(Mpo::from_json(&bad), Err(Error::Schema(_))));
    }

    #[test]
    fn dense_guard_is_enforced() {
        let m = Mpo::identity(4, 5, 1.0).unwrap();
        assert!(matches!(m.to_dense(100), Err(Error::GuardExceeded { .. })));
    }
}
