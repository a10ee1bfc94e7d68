//! Sum-of-products model potentials with analytic derivatives.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::orthogonality_error;

/// Argument bound for `exp`; beyond it `f64` overflows.
pub const EXP_CLAMP: f64 = 700.0;

#[inline]
pub fn exp_clamped(x: f64) -> f64 {
    x.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
}

/// One-mode function library used by sum-of-products terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "kebab-case")]
pub enum OneModeFn {
    /// `x^power`
    Monomial { power: u32 },
    /// `exp(-width·(x - center)²)`
    Gaussian { width: f64, center: f64 },
    /// `(1 - exp(-a·x))^power`
    Morse { a: f64, power: u32 },
}

impl OneModeFn {
    pub fn is_constant(&self) -> bool {
        matches!(self, OneModeFn::Monomial { power: 0 })
            || matches!(self, OneModeFn::Morse { power: 0, .. })
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivatives(x).0
    }

    /// Value, first and second derivative at `x`.
    pub fn derivatives(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            OneModeFn::Monomial { power } => {
                let k = power as i32;
                match power {
                    0 => (1.0, 0.0, 0.0),
                    1 => (x, 1.0, 0.0),
                    _ => (
                        x.powi(k),
                        k as f64 * x.powi(k - 1),
                        (k * (k - 1)) as f64 * x.powi(k - 2),
                    ),
                }
            }
            OneModeFn::Gaussian { width, center } => {
                let dx = x - center;
                let g = exp_clamped(-width * dx * dx);
                (
                    g,
                    -2.0 * width * dx * g,
                    (4.0 * width * width * dx * dx - 2.0 * width) * g,
                )
            }
            OneModeFn::Morse { a, power } => {
                if power == 0 {
                    return (1.0, 0.0, 0.0);
                }
                let e = exp_clamped(-a * x);
                let u = 1.0 - e;
                let du = a * e;
                let ddu = -a * a * e;
                let p = power as i32;
                let pf = power as f64;
                let up1 = if p >= 1 { u.powi(p - 1) } else { 0.0 };
                let up2 = if p >= 2 { u.powi(p - 2) } else { 0.0 };
                (
                    u.powi(p),
                    pf * up1 * du,
                    pf * (pf - 1.0) * up2 * du * du + pf * up1 * ddu,
                )
            }
        }
    }
}

/// `coeff · Π f_i(y_i)` over the listed modes; unlisted modes contribute 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SopTerm {
    pub coeff: f64,
    pub factors: Vec<(usize, OneModeFn)>,
}

impl SopTerm {
    pub fn new(coeff: f64, factors: Vec<(usize, OneModeFn)>) -> Self {
        Self { coeff, factors }
    }
}

/// `V(x) = Σ_t c_t Π_i f_{t,i}(y_i)` with `y = x·R` when a rotation is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SopPotential {
    pub id: String,
    pub n: usize,
    pub terms: Vec<SopTerm>,
    /// Row-major n×n orthogonal matrix.
    pub rotation: Option<Vec<f64>>,
    /// Location of the global minimum in input coordinates.
    pub minimum: Vec<f64>,
}

impl SopPotential {
    pub fn new(id: impl Into<String>, n: usize, terms: Vec<SopTerm>) -> Result<Self> {
        let pot = Self {
            id: id.into(),
            n,
            terms,
            rotation: None,
            minimum: vec![0.0; n],
        };
        pot.validate()?;
        Ok(pot)
    }

    pub fn with_rotation(mut self, rotation: &DMatrix<f64>) -> Result<Self> {
        check_dim("rotation rows", self.n, rotation.nrows())?;
        check_dim("rotation cols", self.n, rotation.ncols())?;
        let err = orthogonality_error(rotation);
        if err > 1e-10 {
            return Err(Error::NotOrthogonal(err));
        }
        let mut data = Vec::with_capacity(self.n * self.n);
        for r in 0..self.n {
            for c in 0..self.n {
                data.push(rotation[(r, c)]);
            }
        }
        self.rotation = Some(data);
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        for (t, term) in self.terms.iter().enumerate() {
            let mut seen = vec![false; self.n];
            for &(mode, _) in &term.factors {
                if mode >= self.n {
                    return Err(Error::Invalid(format!(
                        "term {t} touches mode {mode} of a {}-mode potential",
                        self.n
                    )));
                }
                if seen[mode] {
                    return Err(Error::Invalid(format!(
                        "term {t} lists mode {mode} twice"
                    )));
                }
                seen[mode] = true;
            }
        }
        if let Some(r) = &self.rotation {
            check_dim("rotation", self.n * self.n, r.len())?;
        }
        check_dim("minimum", self.n, self.minimum.len())
    }

    pub fn rotation_matrix(&self) -> Option<DMatrix<f64>> {
        self.rotation
            .as_ref()
            .map(|r| DMatrix::from_row_slice(self.n, self.n, r))
    }

    /// Term coordinates `y = x·R` (identity when no rotation is set).
    pub fn term_coordinates(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("potential input", self.n, x.len())?;
        Ok(match &self.rotation {
            None => x.to_vec(),
            Some(r) => (0..self.n)
                .map(|j| (0..self.n).map(|a| x[a] * r[a * self.n + j]).sum())
                .collect(),
        })
    }

    pub fn value(&self, x: &[f64]) -> Result<f64> {
        let y = self.term_coordinates(x)?;
        Ok(self.value_latent(&y))
    }

    fn value_latent(&self, y: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * t.factors
                        .iter()
                        .map(|&(m, f)| f.value(y[m]))
                        .product::<f64>()
            })
            .sum()
    }

    /// Energy and force `F = -∂V/∂x`.
    pub fn value_and_force(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let y = self.term_coordinates(x)?;
        let mut grad_y = vec![0.0; self.n];
        let mut v = 0.0;
        for term in &self.terms {
            let d: Vec<(f64, f64)> = term
                .factors
                .iter()
                .map(|&(m, f)| {
                    let (g, g1, _) = f.derivatives(y[m]);
                    (g, g1)
                })
                .collect();
            let prod: f64 = d.iter().map(|p| p.0).product();
            v += term.coeff * prod;
            for (k, &(m, _)) in term.factors.iter().enumerate() {
                let others: f64 = d
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, p)| p.0)
                    .product();
                grad_y[m] += term.coeff * d[k].1 * others;
            }
        }
        let force = self.pull_back(&grad_y).into_iter().map(|g| -g).collect();
        Ok((v, force))
    }

    pub fn force(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_force(x)?.1)
    }

    /// Maps a gradient in term coordinates back to input coordinates (R·g).
    fn pull_back(&self, g: &[f64]) -> Vec<f64> {
        match &self.rotation {
            None => g.to_vec(),
            Some(r) => (0..self.n)
                .map(|a| (0..self.n).map(|j| r[a * self.n + j] * g[j]).sum())
                .collect(),
        }
    }

    /// Analytic Hessian `∂²V/∂x∂x` as a dense n×n matrix.
    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let y = self.term_coordinates(x)?;
        let n = self.n;
        let mut h = DMatrix::zeros(n, n);
        for term in &self.terms {
            let d: Vec<(f64, f64, f64)> = term
                .factors
                .iter()
                .map(|&(m, f)| f.derivatives(y[m]))
                .collect();
            let prod_except = |skip: &[usize]| -> f64 {
                d.iter()
                    .enumerate()
                    .filter(|(j, _)| !skip.contains(j))
                    .map(|(_, p)| p.0)
                    .product()
            };
            for (a, &(ma, _)) in term.factors.iter().enumerate() {
                h[(ma, ma)] += term.coeff * d[a].2 * prod_except(&[a]);
                for (b, &(mb, _)) in term.factors.iter().enumerate() {
                    if a != b {
                        h[(ma, mb)] += term.coeff * d[a].1 * d[b].1 * prod_except(&[a, b]);
                    }
                }
            }
        }
        Ok(match self.rotation_matrix() {
            None => h,
            Some(r) => &r * h * r.transpose(),
        })
    }

    /// Per-mode harmonic frequencies `sqrt(H_aa)` at the minimum.
    pub fn harmonic_frequencies(&self) -> Result<Vec<f64>> {
        let h = self.hessian(&self.minimum)?;
        Ok((0..self.n).map(|a| h[(a, a)].max(0.0).sqrt()).collect())
    }
}

/// `V = ½ Σ ω_i² y_i²` with `y = x·R`.
pub fn rotated_coupled_ho(
    n: usize,
    frequencies: &[f64],
    rotation: Option<&DMatrix<f64>>,
) -> Result<SopPotential> {
    check_dim("frequencies", n, frequencies.len())?;
    let terms = frequencies
        .iter()
        .enumerate()
        .map(|(i, &w)| SopTerm::new(0.5 * w * w, vec![(i, OneModeFn::Monomial { power: 2 })]))
        .collect();
    let pot = SopPotential::new("rotated-ho", n, terms)?;
    match rotation {
        Some(r) => pot.with_rotation(r),
        None => Ok(pot),
    }
}

/// Parameters of the coupled anharmonic stand-in surface:
/// `Σ ½k_i x_i² + Σ b_ij x_i x_j + Σ c_ijk x_i x_j x_k + Σ D_i (1 - e^{-a_i x_i})²`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnharmonicParams {
    pub quadratic: Vec<f64>,
    #[serde(default)]
    pub bilinear: Vec<(usize, usize, f64)>,
    #[serde(default)]
    pub cubic: Vec<([usize; 3], f64)>,
    /// `(mode, depth, a)`
    #[serde(default)]
    pub morse: Vec<(usize, f64, f64)>,
    /// Half-width of the bounded-below scan box.
    pub scan_radius: f64,
    pub scan_points: usize,
}

impl AnharmonicParams {
    /// Three-mode reference surface used by the end-to-end experiments.
    /// Mode 0 is a Morse oscillator with unit harmonic frequency, modes 1 and
    /// 2 are harmonic at 1.3 and 1.7, and weak cubic terms couple all three.
    /// Every cubic term is even in modes 1 and 2 or linear in mode 0 with a
    /// positive sign, so the couplings cannot open a path out along the soft
    /// (dissociative) side of the Morse well.
    pub fn reference3() -> Self {
        Self {
            quadratic: vec![0.0, 1.3 * 1.3, 1.7 * 1.7],
            bilinear: vec![],
            cubic: vec![([0, 1, 1], 0.04), ([0, 2, 2], 0.03), ([1, 2, 2], 0.02)],
            morse: vec![(0, 8.0, 0.25)],
            scan_radius: 3.0,
            scan_points: 13,
        }
    }
}

pub fn coupled_anharmonic(n: usize, params: &AnharmonicParams) -> Result<SopPotential> {
    check_dim("quadratic", n, params.quadratic.len())?;
    let mono = |p: u32| OneModeFn::Monomial { power: p };
    let mut terms = Vec::new();
    for (i, &k) in params.quadratic.iter().enumerate() {
        if k != 0.0 {
            terms.push(SopTerm::new(0.5 * k, vec![(i, mono(2))]));
        }
    }
    for &(i, j, b) in &params.bilinear {
        if i == j {
            terms.push(SopTerm::new(b, vec![(i, mono(2))]));
        } else {
            terms.push(SopTerm::new(b, vec![(i, mono(1)), (j, mono(1))]));
        }
    }
    for &(idx, c) in &params.cubic {
        let mut powers: Vec<(usize, u32)> = Vec::new();
        for &m in &idx {
            match powers.iter_mut().find(|(mm, _)| *mm == m) {
                Some(p) => p.1 += 1,
                None => powers.push((m, 1)),
            }
        }
        powers.sort();
        terms.push(SopTerm::new(
            c,
            powers.into_iter().map(|(m, p)| (m, mono(p))).collect(),
        ));
    }
    for &(i, depth, a) in &params.morse {
        terms.push(SopTerm::new(depth, vec![(i, OneModeFn::Morse { a, power: 2 })]));
    }
    let pot = SopPotential::new("coupled-anharmonic", n, terms)?;
    check_bounded_below(&pot, params.scan_radius, params.scan_points)?;
    Ok(pot)
}

/// Fails when some point of the scan box lies below the value at the minimum.
fn check_bounded_below(pot: &SopPotential, radius: f64, points: usize) -> Result<()> {
    let v0 = pot.value(&pot.minimum)?;
    let points = points.max(2);
    let total = points.pow(pot.n as u32);
    let mut x = vec![0.0; pot.n];
    let mut lowest = f64::INFINITY;
    for flat in 0..total {
        let mut rem = flat;
        for (a, xa) in x.iter_mut().enumerate() {
            let k = rem % points;
            rem /= points;
            *xa = pot.minimum[a] - radius + 2.0 * radius * k as f64 / (points - 1) as f64;
        }
        lowest = lowest.min(pot.value(&x)?);
    }
    if lowest < v0 - 1e-12 * v0.abs().max(1.0) {
        return Err(Error::NotBoundedBelow(lowest));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_orthogonal, rng};
    use rand::Rng;

    fn fd_grad(pot: &SopPotential, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|a| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[a] += h;
                xm[a] -= h;
                (pot.value(&xp).unwrap() - pot.value(&xm).unwrap()) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn one_mode_derivatives_match_finite_differences() {
        let fns = [
            OneModeFn::Monomial { power: 3 },
            OneModeFn::Gaussian { width: 0.7, center: 0.2 },
            OneModeFn::Morse { a: 0.4, power: 2 },
            OneModeFn::Morse { a: 1.1, power: 1 },
        ];
        let h = 1e-5;
        for f in fns {
            for &x in &[-1.3, -0.2, 0.0, 0.5, 2.1] {
                let (_, g1, g2) = f.derivatives(x);
                let fd1 = (f.value(x + h) - f.value(x - h)) / (2.0 * h);
                let fd2 = (f.derivatives(x + h).1 - f.derivatives(x - h).1) / (2.0 * h);
                assert!((g1 - fd1).abs() < 1e-7 * (1.0 + g1.abs()), "{f:?} {x}");
                assert!((g2 - fd2).abs() < 1e-7 * (1.0 + g2.abs()), "{f:?} {x}");
            }
        }
    }

    #[test]
    fn rotated_ho_is_stationary_at_origin() {
        let mut r = rng(3);
        let rot = random_orthogonal(3, &mut r);
        let pot = rotated_coupled_ho(3, &[1.0, 2.0, 3.0], Some(&rot)).unwrap();
        let (v, f) = pot.value_and_force(&[0.0; 3]).unwrap();
        assert_eq!(v, 0.0);
        assert!(f.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rotated_ho_hessian_spectrum_is_rotation_invariant() {
        let mut r = rng(4);
        let freqs = [0.8, 1.5, 2.2, 3.1];
        for _ in 0..5 {
            let rot = random_orthogonal(4, &mut r);
            let pot = rotated_coupled_ho(4, &freqs, Some(&rot)).unwrap();
            let (vals, _) = crate::linalg::sym_eigen_sorted(&pot.hessian(&[0.3; 4]).unwrap());
            for (v, w) in vals.iter().zip(freqs) {
                assert!((v - w * w).abs() < 1e-12, "{v} vs {}", w * w);
            }
        }
    }

    #[test]
    fn non_orthogonal_rotation_is_rejected() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(
            rotated_coupled_ho(2, &[1.0, 1.0], Some(&bad)),
            Err(Error::NotOrthogonal(_))
        ));
    }

    #[test]
    fn anharmonic_forces_match_finite_differences() {
        let pot = coupled_anharmonic(3, &AnharmonicParams::reference3()).unwrap();
        let mut r = rng(5);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
            let f = pot.force(&x).unwrap();
            let fd = fd_grad(&pot, &x, 1e-5);
            for (a, b) in f.iter().zip(&fd) {
                assert!((a + b).abs() <= 1e-7 * (1.0 + b.abs()), "{a} vs {}", -b);
            }
        }
    }

    #[test]
    fn uncoupled_anharmonic_is_separable() {
        let mut params = AnharmonicParams::reference3();
        params.cubic.clear();
        let pot = coupled_anharmonic(3, &params).unwrap();
        let x = [0.7, -0.4, 1.1];
        let morse = 8.0 * (1.0 - (-0.25f64 * 0.7).exp()).powi(2);
        let expected = morse + 0.5 * 1.69 * 0.16 + 0.5 * 2.89 * 1.21;
        assert!((pot.value(&x).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn unbounded_cubic_is_rejected() {
        let params = AnharmonicParams {
            quadratic: vec![1.0, 1.0],
            bilinear: vec![],
            cubic: vec![([0, 0, 0], 1.0)],
            morse: vec![],
            scan_radius: 3.0,
            scan_points: 7,
        };
        assert!(matches!(
            coupled_anharmonic(2, &params),
            Err(Error::NotBoundedBelow(_))
        ));
    }
}
