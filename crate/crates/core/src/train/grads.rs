//! Loss and its gradient with respect to the basis parameters and `U`.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::model::ModelState;
use crate::potentials::Record;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub energy: f64,
    pub force: f64,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.energy.is_finite() && self.force.is_finite()
    }
}

/// `L_E = (1/|D|) Σ ½(Ṽ − V)²` and `L_F = (1/|D|) Σ ½‖−∂Ṽ/∂q − F·U‖²`.
pub fn compute_loss(model: &ModelState, batch: &[Record]) -> Result<LossParts> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut le = 0.0;
    let mut lf = 0.0;
    for rec in batch {
        check_dim("record forces", model.n(), rec.force.len())?;
        let q = model.latent(&rec.x)?;
        let (v, dv) = model.latent_gradient(&q)?;
        let fu = model.coordinator().project(&rec.force);
        le += 0.5 * (v - rec.energy).powi(2);
        lf += 0.5 * dv.iter().zip(&fu).map(|(d, t)| (-d - t).powi(2)).sum::<f64>();
    }
    let s = 1.0 / batch.len() as f64;
    Ok(LossParts {
        total: (le + lf) * s,
        energy: le * s,
        force: lf * s,
    })
}

/// Gradients laid out like the basis entries (`mode·N + ρ`).
#[derive(Clone, Debug)]
pub struct BasisGradients {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    /// `n × f`.
    pub coordinator: DMatrix<f64>,
}

/// Loss and exact gradients for one batch.
///
/// Every point is expanded into its `f + 1` augmented rows. For each row the
/// residual `e` and the site environments `E_j = ∂(prediction)/∂row_j` give
/// the sensitivities to the basis values `φ` and derivatives `∂φ/∂q`, which
/// the chain rule through `t = w(q − q̄) + b` turns into weight, bias and
/// coordinator gradients. The projected force target `F·U` contributes a
/// direct term to the coordinator gradient.
pub fn basis_gradients(model: &ModelState, batch: &[Record]) -> Result<(LossParts, BasisGradients)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (n, f, nb) = (model.n(), model.f(), model.n_basis());
    let basis = model.basis();
    let tt = model.tt();
    let mut gw = vec![0.0; f * nb];
    let mut gb = vec![0.0; f * nb];
    let mut gu = DMatrix::zeros(n, f);
    let mut le = 0.0;
    let mut lf = 0.0;

    let mut plain = vec![0.0; f * nb];
    let mut deriv = vec![0.0; f * nb];
    let mut rows = vec![0.0; f * nb];
    let mut evals = Vec::with_capacity(f * nb);
    // Sensitivities to φ and ∂φ/∂q for the current point.
    let mut s_val = vec![0.0; f * nb];
    let mut s_der = vec![0.0; f * nb];
    let mut env = vec![0.0; nb];

    for rec in batch {
        check_dim("record coordinates", n, rec.x.len())?;
        check_dim("record forces", n, rec.force.len())?;
        let q = model.coordinator().project(&rec.x);
        let fu = model.coordinator().project(&rec.force);
        evals.clear();
        for i in 0..f {
            for rho in 0..nb {
                let e = basis.eval_entry(i, rho, q[i]);
                plain[i * nb + rho] = e.value();
                deriv[i * nb + rho] = e.dq();
                evals.push(e);
            }
        }
        s_val.iter_mut().for_each(|v| *v = 0.0);
        s_der.iter_mut().for_each(|v| *v = 0.0);

        for r in 0..=f {
            rows.copy_from_slice(&plain);
            if r < f {
                for (d, s) in rows[r * nb..(r + 1) * nb].iter_mut().zip(&deriv[r * nb..(r + 1) * nb]) {
                    *d = -s;
                }
            }
            let left = tt.left_partials(&rows);
            let right = tt.right_partials(&rows);
            let pred = left[f][0];
            let (target, is_energy) = if r < f { (fu[r], false) } else { (rec.energy, true) };
            let e = pred - target;
            if is_energy {
                le += 0.5 * e * e;
            } else {
                lf += 0.5 * e * e;
                for a in 0..n {
                    gu[(a, r)] -= e * rec.force[a];
                }
            }
            for j in 0..f {
                let core = tt.core(j);
                // E_j[ρ] = Σ_{a,b} L_j[a]·W_j[a,ρ,b]·R_{j+1}[b]
                for (rho, out) in env.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (a, &la) in left[j].iter().enumerate() {
                        if la == 0.0 {
                            continue;
                        }
                        let base = core.idx(a, rho, 0);
                        let s: f64 = core.data[base..base + core.right]
                            .iter()
                            .zip(&right[j + 1])
                            .map(|(w, x)| w * x)
                            .sum();
                        acc += la * s;
                    }
                    *out = acc;
                }
                let dst = if j == r { &mut s_der } else { &mut s_val };
                let sign = if j == r { -1.0 } else { 1.0 };
                for (d, &ev) in dst[j * nb..(j + 1) * nb].iter_mut().zip(&env) {
                    *d += sign * e * ev;
                }
            }
        }

        for (k, ev) in evals.iter().enumerate() {
            let (sv, sd) = (s_val[k], s_der[k]);
            if sv == 0.0 && sd == 0.0 {
                continue;
            }
            let w = ev.weight;
            gw[k] += sv * ev.g1 * ev.shift + sd * (ev.g1 + w * ev.g2 * ev.shift);
            gb[k] += sv * ev.g1 + sd * w * ev.g2;
            let dq = sv * w * ev.g1 + sd * w * w * ev.g2;
            if dq != 0.0 {
                let i = k / nb;
                let reference = &basis.entries()[k].reference;
                for a in 0..n {
                    gu[(a, i)] += dq * (rec.x[a] - reference[a]);
                }
            }
        }
    }
    let s = 1.0 / batch.len() as f64;
    gw.iter_mut().chain(gb.iter_mut()).for_each(|v| *v *= s);
    gu *= s;
    let loss = LossParts {
        total: (le + lf) * s,
        energy: le * s,
        force: lf * s,
    };
    Ok((
        loss,
        BasisGradients {
            weight: gw,
            bias: gb,
            coordinator: gu,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Coordinator;
    use crate::train::design::AugmentedDesign;
    use crate::testutil::{random_batch, random_model};

    #[test]
    fn loss_agrees_with_the_augmented_design() {
        let model = random_model(4, 3, 5, 3, 1);
        let batch = random_batch(4, 20, 2);
        let a = compute_loss(&model, &batch).unwrap();
        let (t, e, f) = AugmentedDesign::build(&batch, &model).unwrap().loss(model.tt());
        assert!((a.total - t).abs() < 1e-12 * t.max(1.0));
        assert!((a.energy - e).abs() < 1e-12 * e.max(1.0));
        assert!((a.force - f).abs() < 1e-12 * f.max(1.0));
        let (b, _) = basis_gradients(&model, &batch).unwrap();
        assert!((a.total - b.total).abs() < 1e-12 * t.max(1.0));
    }

    #[test]
    fn weight_and_bias_gradients_match_finite_differences() {
        let model = random_model(3, 3, 5, 2, 3);
        let batch = random_batch(3, 8, 4);
        let (_, g) = basis_gradients(&model, &batch).unwrap();
        let h = 1e-6;
        for k in 0..15 {
            let (i, rho) = (k / 5, k % 5);
            for bias in [false, true] {
                let eval = |delta: f64| {
                    let mut m = model.clone();
                    let e = m.basis_mut().entry_mut(i, rho);
                    if bias {
                        e.bias += delta;
                    } else {
                        e.weight += delta;
                    }
                    compute_loss(&m, &batch).unwrap().total
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = if bias { g.bias[k] } else { g.weight[k] };
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "{k} {bias}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn coordinator_gradient_matches_finite_differences() {
        // Perturbations of U leave the manifold; the loss is still defined for
        // any U, which is what the Euclidean gradient describes.
        let model = random_model(4, 2, 4, 2, 5);
        let batch = random_batch(4, 10, 6);
        let (_, g) = basis_gradients(&model, &batch).unwrap();
        let h = 1e-6;
        for a in 0..4 {
            for j in 0..2 {
                let eval = |delta: f64| {
                    let mut m = model.clone();
                    let mut u = m.coordinator().matrix().clone();
                    u[(a, j)] += delta;
                    m.set_coordinator(Coordinator::new_unchecked(u)).unwrap();
                    compute_loss(&m, &batch).unwrap().total
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                let an = g.coordinator[(a, j)];
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "({a},{j}): {fd} vs {an}");
            }
        }
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let model = random_model(3, 2, 4, 2, 7);
        let batch: Vec<Record> = random_batch(3, 6, 8)
            .into_iter()
            .map(|r| {
                let (v, f) = model.energy_and_force(&r.x).unwrap();
                Record { x: r.x, energy: v, force: f }
            })
            .collect();
        let (loss, g) = basis_gradients(&model, &batch).unwrap();
        assert!(loss.total < 1e-24);
        assert!(g.weight.iter().chain(&g.bias).all(|v| v.abs() < 1e-12));
        assert!(g.coordinator.amax() < 1e-12);
    }
}
