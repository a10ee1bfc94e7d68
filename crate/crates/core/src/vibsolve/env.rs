//! Sparse MPO sites and environment contractions for the sweep solver.

use crate::mpo::{Mpo, MpoCore};
use crate::tensor::Core;

/// Nonzero entries `W[a, σ', σ, b]` of one MPO site (or a merged pair).
#[derive(Clone, Debug)]
pub(crate) struct SparseSite {
    pub left: usize,
    pub d: usize,
    pub right: usize,
    /// `(a, bra, ket, b, value)`.
    pub entries: Vec<(usize, usize, usize, usize, f64)>,
}

impl SparseSite {
    pub fn from_core(w: &MpoCore) -> Self {
        let mut entries = Vec::new();
        for a in 0..w.left {
            for s in 0..w.d {
                for t in 0..w.d {
                    for b in 0..w.right {
                        let v = w.get(a, s, t, b);
                        if v != 0.0 {
                            entries.push((a, s, t, b, v));
                        }
                    }
                }
            }
        }
        Self {
            left: w.left,
            d: w.d,
            right: w.right,
            entries,
        }
    }

    /// Two adjacent sites as one with physical index `σ₁·d₂ + σ₂`.
    pub fn merged(w1: &MpoCore, w2: &MpoCore) -> Self {
        let (d1, d2) = (w1.d, w2.d);
        let d = d1 * d2;
        let mut dense = MpoCore::zeros(w1.left, d, w2.right);
        let s2 = SparseSite::from_core(w2);
        for a in 0..w1.left {
            for s in 0..d1 {
                for t in 0..d1 {
                    for c in 0..w1.right {
                        let v1 = w1.get(a, s, t, c);
                        if v1 == 0.0 {
                            continue;
                        }
                        for &(c2, u, x, b, v2) in &s2.entries {
                            if c2 == c {
                                let k = dense.idx(a, s * d2 + u, t * d2 + x, b);
                                dense.data[k] += v1 * v2;
                            }
                        }
                    }
                }
            }
        }
        Self::from_core(&dense)
    }

    pub fn sites_of(h: &Mpo) -> Vec<Self> {
        h.cores().iter().map(Self::from_core).collect()
    }
}

/// Three-layer block `E[bra, op, ket]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Block {
    pub bra: usize,
    pub op: usize,
    pub ket: usize,
    pub data: Vec<f64>,
}

impl Block {
    pub fn unit() -> Self {
        Self {
            bra: 1,
            op: 1,
            ket: 1,
            data: vec![1.0],
        }
    }

    #[inline]
    fn at(&self, a: usize, w: usize, k: usize) -> f64 {
        self.data[(a * self.op + w) * self.ket + k]
    }
}

/// `t[a, σ', wr, b'] = Σ L[a, w, a']·x[a', σ, b']·W[w, σ', σ, wr]`.
fn left_partial(l: &Block, w: &SparseSite, x: &[f64], xr: usize) -> Vec<f64> {
    let d = w.d;
    debug_assert_eq!(x.len(), l.ket * d * xr);
    // t1[a, w, σ, b']
    let mut t1 = vec![0.0; l.bra * l.op * d * xr];
    let row = d * xr;
    for a in 0..l.bra {
        for wi in 0..l.op {
            let out = &mut t1[(a * l.op + wi) * row..(a * l.op + wi + 1) * row];
            for k in 0..l.ket {
                let c = l.at(a, wi, k);
                if c != 0.0 {
                    for (o, v) in out.iter_mut().zip(&x[k * row..(k + 1) * row]) {
                        *o += c * v;
                    }
                }
            }
        }
    }
    let mut t2 = vec![0.0; l.bra * d * w.right * xr];
    for a in 0..l.bra {
        for &(wi, s, t, wr, v) in &w.entries {
            let src = ((a * l.op + wi) * d + t) * xr;
            let dst = ((a * d + s) * w.right + wr) * xr;
            for j in 0..xr {
                t2[dst + j] += v * t1[src + j];
            }
        }
    }
    t2
}

/// Effective operator on a local tensor `x[a', σ, b']`.
pub(crate) fn apply_local(l: &Block, w: &SparseSite, r: &Block, x: &[f64]) -> Vec<f64> {
    let d = w.d;
    let t2 = left_partial(l, w, x, r.ket);
    let mut y = vec![0.0; l.bra * d * r.bra];
    let inner = w.right * r.ket;
    for a in 0..l.bra {
        for s in 0..d {
            let src = &t2[(a * d + s) * inner..(a * d + s + 1) * inner];
            for b in 0..r.bra {
                let rb = &r.data[b * inner..(b + 1) * inner];
                y[(a * d + s) * r.bra + b] = src.iter().zip(rb).map(|(p, q)| p * q).sum();
            }
        }
    }
    y
}

/// Block covering one more site on the left: `bra` and `ket` are the cores.
pub(crate) fn extend_left(l: &Block, w: &SparseSite, bra: &Core, ket: &Core) -> Block {
    let d = w.d;
    let t2 = left_partial(l, w, &ket.data, ket.right);
    let inner = w.right * ket.right;
    let mut out = vec![0.0; bra.right * inner];
    for a in 0..l.bra {
        for s in 0..d {
            let src = &t2[(a * d + s) * inner..(a * d + s + 1) * inner];
            for b in 0..bra.right {
                let c = bra.get(a, s, b);
                if c != 0.0 {
                    for (o, v) in out[b * inner..(b + 1) * inner].iter_mut().zip(src) {
                        *o += c * v;
                    }
                }
            }
        }
    }
    Block {
        bra: bra.right,
        op: w.right,
        ket: ket.right,
        data: out,
    }
}

/// Block covering one more site on the right.
pub(crate) fn extend_right(r: &Block, w: &SparseSite, bra: &Core, ket: &Core) -> Block {
    let d = w.d;
    // u1[a', σ, b, wr] = Σ_b' ket[a', σ, b']·R[b, wr, b']
    let (kl, br) = (ket.left, r.bra);
    let mut u1 = vec![0.0; kl * d * br * r.op];
    for a in 0..kl {
        for t in 0..d {
            let kv = &ket.data[ket.idx(a, t, 0)..ket.idx(a, t, 0) + ket.right];
            for b in 0..br {
                for wr in 0..r.op {
                    let rr = &r.data[(b * r.op + wr) * r.ket..(b * r.op + wr + 1) * r.ket];
                    u1[((a * d + t) * br + b) * r.op + wr] = kv.iter().zip(rr).map(|(p, q)| p * q).sum();
                }
            }
        }
    }
    // u2[w, σ', a', b]
    let mut u2 = vec![0.0; w.left * d * kl * br];
    for &(wi, s, t, wr, v) in &w.entries {
        for a in 0..kl {
            let dst = ((wi * d + s) * kl + a) * br;
            let src = (a * d + t) * br;
            for b in 0..br {
                u2[dst + b] += v * u1[(src + b) * r.op + wr];
            }
        }
    }
    let mut out = vec![0.0; bra.left * w.left * kl];
    for a in 0..bra.left {
        for s in 0..d {
            let bv = &bra.data[bra.idx(a, s, 0)..bra.idx(a, s, 0) + bra.right];
            for wi in 0..w.left {
                for k in 0..kl {
                    let src = &u2[((wi * d + s) * kl + k) * br..((wi * d + s) * kl + k + 1) * br];
                    out[(a * w.left + wi) * kl + k] += bv.iter().zip(src).map(|(p, q)| p * q).sum::<f64>();
                }
            }
        }
    }
    Block {
        bra: bra.left,
        op: w.left,
        ket: kl,
        data: out,
    }
}

/// `⟨bra|H|ket⟩` by a full left-to-right contraction.
pub(crate) fn operator_expectation(sites: &[SparseSite], bra: &[Core], ket: &[Core]) -> f64 {
    let mut l = Block::unit();
    for ((w, a), b) in sites.iter().zip(bra).zip(ket) {
        l = extend_left(&l, w, a, b);
    }
    l.data[0]
}

/// `⟨Ψ|H²|Ψ⟩`, contracting a four-layer block `E[a, w₁, w₂, a']` site by site.
pub(crate) fn squared_expectation(sites: &[SparseSite], psi: &[Core]) -> f64 {
    let mut e = vec![1.0];
    let (mut m, mut o) = (1usize, 1usize);
    for (w, a) in sites.iter().zip(psi) {
        let (d, r, or) = (w.d, a.right, w.right);
        // t1[a, w1, w2, σ, b'] = Σ_a' E[a, w1, w2, a']·A[a', σ, b']
        let mut t1 = vec![0.0; m * o * o * d * r];
        let row = d * r;
        for x in 0..m * o * o {
            for k in 0..m {
                let c = e[x * m + k];
                if c != 0.0 {
                    for (dst, v) in t1[x * row..(x + 1) * row].iter_mut().zip(&a.data[k * row..(k + 1) * row]) {
                        *dst += c * v;
                    }
                }
            }
        }
        // t2[a, w1, τ, v2, b'] = Σ W[w2, τ, σ, v2]·t1[a, w1, w2, σ, b']
        let mut t2 = vec![0.0; m * o * d * or * r];
        for x in 0..m * o {
            for &(w2, tau, s, v2, v) in &w.entries {
                let src = ((x * o + w2) * d + s) * r;
                let dst = ((x * d + tau) * or + v2) * r;
                for j in 0..r {
                    t2[dst + j] += v * t1[src + j];
                }
            }
        }
        // t3[a, σ', v1, v2, b'] = Σ W[w1, σ', τ, v1]·t2[a, w1, τ, v2, b']
        let blk = or * r;
        let mut t3 = vec![0.0; m * d * or * blk];
        for x in 0..m {
            for &(w1, s, tau, v1, v) in &w.entries {
                let src = ((x * o + w1) * d + tau) * blk;
                let dst = ((x * d + s) * or + v1) * blk;
                for j in 0..blk {
                    t3[dst + j] += v * t2[src + j];
                }
            }
        }
        // E'[b, v1, v2, b'] = Σ A[a, σ', b]·t3[a, σ', v1, v2, b']
        let inner = or * blk;
        let mut next = vec![0.0; r * inner];
        for x in 0..m {
            for s in 0..d {
                let src = &t3[(x * d + s) * inner..(x * d + s + 1) * inner];
                for b in 0..r {
                    let c = a.get(x, s, b);
                    if c != 0.0 {
                        for (dst, v) in next[b * inner..(b + 1) * inner].iter_mut().zip(src) {
                            *dst += c * v;
                        }
                    }
                }
            }
        }
        e = next;
        m = r;
        o = or;
    }
    e[0]
}
