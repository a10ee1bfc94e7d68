//! Local least-squares problems for one- and two-site updates.
//!
//! The design matrix `Φ` of a local update is never formed: row `p` is the
//! outer product `L_p ⊗ u_p ⊗ R_p` of the left environment, the basis row(s)
//! of the active site(s) and the right environment. Products with `Φ` and
//! `Φᵀ` are evaluated row by row.

use super::design::AugmentedDesign;
use super::env::{Dot, EnvironmentCache};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

pub struct LocalProblem<'a> {
    design: &'a AugmentedDesign,
    site: usize,
    dot: Dot,
    left: &'a [f64],
    lw: usize,
    right: &'a [f64],
    rw: usize,
    ridge: f64,
}

impl<'a> LocalProblem<'a> {
    pub fn new(design: &'a AugmentedDesign, env: &'a EnvironmentCache, site: usize, dot: Dot) -> Result<Self> {
        let right_at = match dot {
            Dot::One => site + 1,
            Dot::Two => site + 2,
        };
        let (Some(left), Some(right)) = (env.left(site), env.right(right_at)) else {
            return Err(Error::Invalid(format!("environment blocks missing for site {site}")));
        };
        Ok(Self {
            design,
            site,
            dot,
            left,
            lw: env.width(site),
            right,
            rw: env.width(right_at),
            ridge: 0.0,
        })
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    fn phys(&self) -> usize {
        match self.dot {
            Dot::One => self.design.n_basis(),
            Dot::Two => self.design.n_basis() * self.design.n_basis(),
        }
    }

    /// Shape `(left, phys, right)` of the unknown; `phys` is `N` or `N²`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.lw, self.phys(), self.rw)
    }

    pub fn dim(&self) -> usize {
        self.lw * self.phys() * self.rw
    }

    pub fn rows(&self) -> usize {
        self.design.len()
    }

    fn fill_phys(&self, p: usize, u: &mut [f64]) {
        let a = self.design.row(self.site, p);
        match self.dot {
            Dot::One => u.copy_from_slice(a),
            Dot::Two => {
                let b = self.design.row(self.site + 1, p);
                let n = b.len();
                for (i, &ai) in a.iter().enumerate() {
                    for (j, &bj) in b.iter().enumerate() {
                        u[i * n + j] = ai * bj;
                    }
                }
            }
        }
    }

    /// `z = Φ·x`.
    pub fn apply(&self, x: &[f64], z: &mut [f64]) {
        let (lw, pw, rw) = self.shape();
        let mut u = vec![0.0; pw];
        for (p, zp) in z.iter_mut().enumerate() {
            self.fill_phys(p, &mut u);
            let l = &self.left[p * lw..(p + 1) * lw];
            let r = &self.right[p * rw..(p + 1) * rw];
            let mut acc = 0.0;
            for (a, &la) in l.iter().enumerate() {
                if la == 0.0 {
                    continue;
                }
                let mut inner = 0.0;
                for (m, &um) in u.iter().enumerate() {
                    if um == 0.0 {
                        continue;
                    }
                    let base = (a * pw + m) * rw;
                    inner += um * dot(&x[base..base + rw], r);
                }
                acc += la * inner;
            }
            *zp = acc;
        }
    }

    /// `out = Φᵀ·z`.
    pub fn apply_t(&self, z: &[f64], out: &mut [f64]) {
        let (lw, pw, rw) = self.shape();
        let mut u = vec![0.0; pw];
        out.iter_mut().for_each(|o| *o = 0.0);
        for (p, &zp) in z.iter().enumerate() {
            if zp == 0.0 {
                continue;
            }
            self.fill_phys(p, &mut u);
            let l = &self.left[p * lw..(p + 1) * lw];
            let r = &self.right[p * rw..(p + 1) * rw];
            for (a, &la) in l.iter().enumerate() {
                let ca = zp * la;
                if ca == 0.0 {
                    continue;
                }
                for (m, &um) in u.iter().enumerate() {
                    let c = ca * um;
                    if c == 0.0 {
                        continue;
                    }
                    let base = (a * pw + m) * rw;
                    for (o, &rb) in out[base..base + rw].iter_mut().zip(r) {
                        *o += c * rb;
                    }
                }
            }
        }
    }

    /// `(ΦᵀΦ + λI)·x`.
    pub fn normal_apply(&self, x: &[f64], out: &mut [f64]) {
        let mut z = vec![0.0; self.rows()];
        self.apply(x, &mut z);
        self.apply_t(&z, out);
        if self.ridge != 0.0 {
            for (o, xi) in out.iter_mut().zip(x) {
                *o += self.ridge * xi;
            }
        }
    }

    /// `Φᵀ·y`.
    pub fn rhs(&self) -> Vec<f64> {
        let mut b = vec![0.0; self.dim()];
        self.apply_t(self.design.targets(), &mut b);
        b
    }

    /// `trace(ΦᵀΦ)`.
    pub fn normal_trace(&self) -> f64 {
        let (lw, pw, rw) = self.shape();
        let mut u = vec![0.0; pw];
        (0..self.rows())
            .map(|p| {
                self.fill_phys(p, &mut u);
                let l = &self.left[p * lw..(p + 1) * lw];
                let r = &self.right[p * rw..(p + 1) * rw];
                dot(l, l) * dot(&u, &u) * dot(r, r)
            })
            .sum()
    }

    pub fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.rows()];
        self.apply(x, &mut z);
        for (zp, y) in z.iter_mut().zip(self.design.targets()) {
            *zp -= y;
        }
        z
    }

    /// Training loss `(1/|D|) Σ ½ (Φ_p·x − y_p)²` of the local unknown.
    pub fn loss(&self, x: &[f64]) -> f64 {
        let r = self.residuals(x);
        0.5 * dot(&r, &r) / self.design.points() as f64
    }

    /// Gradient of [`LocalProblem::loss`].
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = self.residuals(x);
        let mut g = vec![0.0; self.dim()];
        self.apply_t(&r, &mut g);
        let s = 1.0 / self.design.points() as f64;
        g.iter_mut().for_each(|v| *v *= s);
        g
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    /// The search direction lost positive curvature before convergence.
    pub stagnated: bool,
}

/// Conjugate gradients for `A·x = b` with `A` symmetric positive definite,
/// started from the contents of `x`. Stops when `‖r‖ ≤ tol` or after
/// `max_iter` iterations.
pub fn conjugate_gradient<F>(apply: F, b: &[f64], x: &mut [f64], max_iter: usize, tol: f64) -> Result<CgOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    let mut r: Vec<f64> = b.iter().zip(&ap).map(|(bi, a)| bi - a).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    if !rr.is_finite() {
        return Err(Error::NonFinite("CG initial residual".into()));
    }
    let mut k = 0;
    let mut stagnated = false;
    while k < max_iter && rr.sqrt() > tol {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !pap.is_finite() {
            return Err(Error::NonFinite("CG curvature".into()));
        }
        if pap <= 0.0 {
            stagnated = true;
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        k += 1;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("CG iterate".into()));
    }
    let residual_norm = rr.sqrt();
    Ok(CgOutcome {
        iterations: k,
        residual_norm,
        converged: residual_norm <= tol,
        stagnated,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CgSettings {
    /// Stop when `‖r‖ ≤ rel_tol·‖Φᵀy‖`.
    pub rel_tol: f64,
    /// Defaults to twice the number of unknowns.
    pub max_iter: Option<usize>,
}

impl Default for CgSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            max_iter: None,
        }
    }
}

/// Solves the local normal equations `ΦᵀΦ·x = Φᵀy` by CG in factored form
/// (CGLS: the residual `y − Φx` is carried instead of `ΦᵀΦ` products),
/// warm-started from `x`. If the curvature `‖Φp‖²` vanishes before
/// convergence, retries once with a small ridge `1e-10·trace/dim`. The
/// result never has a larger loss than the starting point.
pub fn solve_cg(problem: &LocalProblem<'_>, x: &mut [f64], settings: &CgSettings) -> Result<CgOutcome> {
    let b = problem.rhs();
    let tol = settings.rel_tol * norm(&b);
    let max_iter = settings.max_iter.unwrap_or(2 * problem.dim()).max(1);
    let start_loss = problem.loss(x);
    let start = x.to_vec();
    let mut outcome = cgls(problem, x, max_iter, tol)?;
    if outcome.stagnated && !outcome.converged {
        let lambda = 1e-10 * problem.normal_trace() / problem.dim() as f64;
        let ridged = LocalProblem { ridge: lambda, ..*problem };
        x.copy_from_slice(&start);
        outcome = cgls(&ridged, x, max_iter, tol)?;
    }
    if problem.loss(x) > start_loss {
        x.copy_from_slice(&start);
    }
    Ok(outcome)
}

fn cgls(problem: &LocalProblem<'_>, x: &mut [f64], max_iter: usize, tol: f64) -> Result<CgOutcome> {
    let n = x.len();
    let lambda = problem.ridge;
    let mut r = problem.residuals(x);
    r.iter_mut().for_each(|v| *v = -*v);
    let mut s = vec![0.0; n];
    problem.apply_t(&r, &mut s);
    for (si, xi) in s.iter_mut().zip(x.iter()) {
        *si -= lambda * xi;
    }
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    if !gamma.is_finite() {
        return Err(Error::NonFinite("CG initial residual".into()));
    }
    let mut q = vec![0.0; r.len()];
    let mut k = 0;
    let mut stagnated = false;
    while k < max_iter && gamma.sqrt() > tol {
        problem.apply(&p, &mut q);
        let curvature = dot(&q, &q) + lambda * dot(&p, &p);
        if !curvature.is_finite() {
            return Err(Error::NonFinite("CG curvature".into()));
        }
        if curvature <= 0.0 {
            stagnated = true;
            break;
        }
        let alpha = gamma / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
        }
        for (ri, qi) in r.iter_mut().zip(&q) {
            *ri -= alpha * qi;
        }
        problem.apply_t(&r, &mut s);
        for (si, xi) in s.iter_mut().zip(x.iter()) {
            *si -= lambda * xi;
        }
        let next = dot(&s, &s);
        let beta = next / gamma;
        for i in 0..n {
            p[i] = s[i] + beta * p[i];
        }
        gamma = next;
        k += 1;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("CG iterate".into()));
    }
    let residual_norm = gamma.sqrt();
    Ok(CgOutcome {
        iterations: k,
        residual_norm,
        converged: residual_norm <= tol,
        stagnated,
    })
}
