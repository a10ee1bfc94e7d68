use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use ttpes::model::ModelState;
use ttpes::mpo::{build_ho_dvr, exact_grid_mpo, hamiltonian_mpo, kinetic_mpo, potential_mpo, DvrBasis, Mpo};
use ttpes::potentials::{metropolis_sample, Dataset, Record};
use ttpes::train::{fit, Checkpointing, FitOptions};
use ttpes::vibsolve::{dense_eigs, dense_hamiltonian, dmrg_states, level_report, EigenResult};

use crate::config::{RunConfig, Split};
use crate::error::CliError;
use crate::threads::{parallel_map, thread_count};

fn write(path: &Path, text: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}

pub fn sample(cfg: &RunConfig) -> Result<(), CliError> {
    let pot = cfg.potential()?;
    let mut sampler = cfg.sampler.clone();
    sampler.seed = cfg.seed;
    let (data, stats) = metropolis_sample(&pot, &sampler)?;
    let path = cfg.dataset_path();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    data.save(&path)?;
    println!("wrote {} records to {}", data.len(), path.display());
    println!("acceptance rate {:.4}", stats.acceptance_rate());
    print!("{}", histogram(&data.records, sampler.v_max, 10));
    Ok(())
}

/// Energy histogram over `[min, v_max]` as text lines.
fn histogram(records: &[Record], v_max: f64, bins: usize) -> String {
    let mut out = String::new();
    if records.is_empty() {
        return out;
    }
    let lo = records.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min).min(v_max);
    let width = (v_max - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for r in records {
        let k = if width > 0.0 { ((r.energy - lo) / width) as usize } else { 0 };
        counts[k.min(bins - 1)] += 1;
    }
    let _ = writeln!(out, "energy histogram ({} bins of width {:.4e}):", bins, width);
    for (k, c) in counts.iter().enumerate() {
        let _ = writeln!(out, "  [{:.4e}, {:.4e}) {}", lo + k as f64 * width, lo + (k + 1) as f64 * width, c);
    }
    out
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let path = cfg.dataset_path();
    Dataset::load(&path).map_err(|e| CliError::Config(format!("cannot load dataset {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<ModelState, CliError> {
    ModelState::load(path).map_err(|e| CliError::Config(format!("cannot load checkpoint {}: {e}", path.display())))
}

fn coordinator_csv(model: &ModelState) -> String {
    let u = model.coordinator().matrix();
    let mut s = (0..u.ncols()).map(|i| format!("q{}", i + 1)).collect::<Vec<_>>().join(",");
    s.push('\n');
    for a in 0..u.nrows() {
        let row: Vec<String> = (0..u.ncols()).map(|i| u[(a, i)].to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct TrainSummary {
    epochs: usize,
    final_loss: f64,
    validation_rmse: f64,
    bond_dims: Vec<usize>,
    orthogonality_error: f64,
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_dataset(cfg)?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    let train = data.train();
    if train.is_empty() {
        return Err(CliError::Config("the dataset has no training records".into()));
    }
    let m = &cfg.model;
    let f = m.latent.unwrap_or(data.n);
    let points: Vec<Vec<f64>> = train.iter().map(|r| r.x.clone()).collect();
    let offset = m
        .offset
        .unwrap_or_else(|| train.iter().map(|r| r.energy).sum::<f64>() / train.len() as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = ModelState::initialize(data.n, f, m.n_basis, m.initial_bond, m.max_bond, &points, offset, &mut rng)?;
    model.units = data.units.clone();
    let plan = cfg.plan.resolve(m.max_bond)?;
    let opts = FitOptions {
        seed: cfg.seed,
        optimizer: cfg.optimizer,
        checkpoint: (cfg.train.checkpoint_every > 0).then(|| Checkpointing {
            every: cfg.train.checkpoint_every,
            path: out.join("checkpoint.json"),
        }),
        record_time: cfg.train.record_time,
    };
    let (model, trace) = match fit(model, train, data.validation(), &plan, &opts) {
        Ok(r) => r,
        Err(ttpes::Error::Diverged { epoch, detail, last_good }) => {
            let path = out.join("last_good.json");
            last_good.save(&path)?;
            eprintln!("training diverged at epoch {epoch}: {detail}");
            eprintln!("model from the last finite epoch written to {}", path.display());
            return Err(ttpes::Error::Diverged { epoch, detail, last_good }.into());
        }
        Err(e) => return Err(e.into()),
    };
    trace.write_csv(&out.join("trace.csv"))?;
    model.save(out.join("model.json"))?;
    write(&out.join("coordinator.csv"), coordinator_csv(&model))?;
    let last = trace.last();
    let summary = TrainSummary {
        epochs: trace.len(),
        final_loss: last.map_or(f64::NAN, |r| r.loss),
        validation_rmse: last.map_or(f64::NAN, |r| r.val_rmse),
        bond_dims: model.tt().bond_dims(),
        orthogonality_error: model.coordinator().orthogonality_error(),
    };
    write(&out.join("train_summary.json"), json(&summary))?;
    println!("trained {} epochs; final loss {:.6e}, validation RMSE {:.6e}", summary.epochs, summary.final_loss, summary.validation_rmse);
    Ok(())
}

#[derive(Serialize)]
struct EvalMetrics {
    split: Split,
    count: usize,
    mae: f64,
    rmse: f64,
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let data = load_dataset(cfg)?;
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    let ck = cfg.eval.checkpoint.clone().unwrap_or_else(|| out.join("model.json"));
    let model = load_model(&ck)?;
    if model.n() != data.n {
        return Err(CliError::Config(format!(
            "checkpoint expects {} input coordinates, dataset has {}",
            model.n(),
            data.n
        )));
    }
    let records: &[Record] = match cfg.eval.split {
        Split::All => &data.records,
        Split::Train => data.train(),
        Split::Validation => data.validation(),
        Split::Test => data.test(),
    };
    let predicted = parallel_map(records, thread_count()?, |r| model.evaluate(&r.x))
        .into_iter()
        .collect::<Result<Vec<f64>, _>>()?;
    let mut csv = String::from("index,energy,predicted,error\n");
    let (mut abs, mut sq) = (0.0, 0.0);
    for (k, (r, p)) in records.iter().zip(&predicted).enumerate() {
        let e = p - r.energy;
        abs += e.abs();
        sq += e * e;
        let _ = writeln!(csv, "{k},{},{p},{e}", r.energy);
    }
    let count = records.len();
    let metrics = EvalMetrics {
        split: cfg.eval.split,
        count,
        mae: if count > 0 { abs / count as f64 } else { f64::NAN },
        rmse: if count > 0 { (sq / count as f64).sqrt() } else { f64::NAN },
    };
    write(&out.join("scatter.csv"), csv)?;
    write(&out.join("metrics.json"), json(&metrics))?;
    println!("{count} records: MAE {:.6e}, RMSE {:.6e}", metrics.mae, metrics.rmse);
    Ok(())
}

/// Second derivative of the model along each latent axis at `q0`.
fn model_curvature(model: &ModelState, q0: &[f64]) -> Result<Vec<f64>, CliError> {
    let h = 1e-3;
    let v0 = model.evaluate_latent(q0)?;
    (0..q0.len())
        .map(|i| {
            let mut qp = q0.to_vec();
            let mut qm = q0.to_vec();
            qp[i] += h;
            qm[i] -= h;
            Ok((model.evaluate_latent(&qp)? - 2.0 * v0 + model.evaluate_latent(&qm)?) / (h * h))
        })
        .collect()
}

#[derive(Serialize)]
struct DvrSummary {
    frequency: f64,
    center: f64,
    grid: Vec<f64>,
}

#[derive(Serialize)]
struct Shapes {
    sites: usize,
    d: Vec<usize>,
    potential: Vec<usize>,
    kinetic: Vec<usize>,
    hamiltonian: Vec<usize>,
    exact_hamiltonian: Option<Vec<usize>>,
    dvr: Vec<DvrSummary>,
}

pub fn convert(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    let ck = cfg.convert.checkpoint.clone().unwrap_or_else(|| out.join("model.json"));
    let model = load_model(&ck)?;
    let f = model.f();
    let c = &cfg.convert;
    let pot = match &cfg.potential {
        Some(p) => Some(p.build()?),
        None => None,
    };
    let center = match (&c.center, &pot) {
        (Some(v), _) => v.clone(),
        (None, Some(p)) => model.latent(&p.minimum)?,
        (None, None) => vec![0.0; f],
    };
    if center.len() != f {
        return Err(CliError::Config(format!("convert.center needs {f} entries")));
    }
    let freqs = match &c.frequencies {
        Some(v) => v.clone(),
        None => {
            let k = model_curvature(&model, &center)?;
            if let Some(i) = k.iter().position(|&x| !(x > 0.0)) {
                return Err(CliError::Config(format!(
                    "model curvature along latent mode {i} is {:.3e}; set convert.frequencies",
                    k[i]
                )));
            }
            k.iter().map(|x| x.sqrt()).collect()
        }
    };
    if freqs.len() != f {
        return Err(CliError::Config(format!("convert.frequencies needs {f} entries")));
    }
    let dvrs: Vec<DvrBasis> = (0..f)
        .map(|i| build_ho_dvr(c.d, freqs[i], center[i]))
        .collect::<Result<_, _>>()?;
    let v = potential_mpo(&model, &dvrs)?;
    let t = kinetic_mpo(&dvrs)?;
    let h = hamiltonian_mpo(&v, &dvrs, c.cutoff)?;
    v.save(&out.join("potential_mpo.json"))?;
    t.save(&out.join("kinetic_mpo.json"))?;
    h.save(&out.join("hamiltonian_mpo.json"))?;
    let mut exact_bonds = None;
    if c.exact {
        let pot = pot.ok_or_else(|| CliError::Config("convert.exact needs a [potential] table".into()))?;
        let coord = model.coordinator();
        let ve = exact_grid_mpo(|q| pot.value(&coord.lift(q)).unwrap_or(f64::NAN), &dvrs)?;
        let he = hamiltonian_mpo(&ve, &dvrs, c.cutoff)?;
        ve.save(&out.join("exact_potential_mpo.json"))?;
        he.save(&out.join("exact_hamiltonian_mpo.json"))?;
        exact_bonds = Some(he.bond_dims());
    }
    let shapes = Shapes {
        sites: f,
        d: h.dims(),
        potential: v.bond_dims(),
        kinetic: t.bond_dims(),
        hamiltonian: h.bond_dims(),
        exact_hamiltonian: exact_bonds,
        dvr: dvrs
            .iter()
            .map(|d| DvrSummary {
                frequency: d.frequency,
                center: d.center,
                grid: d.grid.clone(),
            })
            .collect(),
    };
    write(&out.join("shapes.json"), json(&shapes))?;
    println!(
        "potential bonds {:?}, kinetic bonds {:?}, hamiltonian bonds {:?}",
        shapes.potential, shapes.kinetic, shapes.hamiltonian
    );
    Ok(())
}

fn solve_one(cfg: &RunConfig, h: &Mpo) -> Result<EigenResult, CliError> {
    if cfg.solve.dense {
        Ok(dense_eigs(&dense_hamiltonian(h)?, cfg.solve.dmrg.states)?)
    } else {
        let mut s = cfg.solve.dmrg.clone();
        s.seed = cfg.seed;
        Ok(dmrg_states(h, &s)?)
    }
}

fn read_levels(path: &Path) -> Result<EigenResult, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut out = EigenResult::default();
    for (k, line) in text.lines().enumerate().skip(1) {
        let field = line.split(',').nth(1).unwrap_or("");
        let e: f64 = field
            .parse()
            .map_err(|_| CliError::Config(format!("{}:{}: bad energy {field:?}", path.display(), k + 1)))?;
        out.energies.push(e);
        out.converged.push(true);
    }
    Ok(out)
}

pub fn solve(cfg: &RunConfig) -> Result<(), CliError> {
    let out = cfg.out_dir();
    std::fs::create_dir_all(&out)?;
    let hpath = cfg.solve.hamiltonian.clone().unwrap_or_else(|| out.join("hamiltonian_mpo.json"));
    let load = |p: &PathBuf| Mpo::load(p).map_err(|e| CliError::Config(format!("cannot load MPO {}: {e}", p.display())));
    let h = load(&hpath)?;
    let reference_mpo = match &cfg.solve.reference {
        Some(p) if p.extension().is_some_and(|e| e == "csv") => None,
        Some(p) => Some(load(p)?),
        None => None,
    };
    let (result, reference) = match reference_mpo {
        Some(r) => {
            let jobs = [&h, &r];
            let mut solved = parallel_map(&jobs, thread_count()?, |m| solve_one(cfg, m)).into_iter();
            let a = solved.next().expect("two jobs")?;
            let b = solved.next().expect("two jobs")?;
            (a, Some(b))
        }
        None => {
            let a = solve_one(cfg, &h)?;
            let b = match &cfg.solve.reference {
                Some(p) => Some(read_levels(p)?),
                None => None,
            };
            (a, b)
        }
    };
    let report = level_report(&result, reference.as_ref());
    report.write(&out, "levels")?;
    if let Some(r) = reference.as_ref().filter(|_| reference_mpo_written(cfg)) {
        level_report(r, None).write(&out, "reference_levels")?;
    }
    println!("ZPE {:.10}", report.zpe);
    for l in report.levels.iter().skip(1) {
        println!("level {:3} excitation {:.10}", l.index, l.excitation);
    }
    if let Some(mae) = report.mae {
        println!("MAE over excited levels {mae:.6e}");
    }
    let unconverged = result.converged.iter().filter(|c| !**c).count()
        + reference.as_ref().map_or(0, |r| r.converged.iter().filter(|c| !**c).count());
    if unconverged > 0 {
        return Err(CliError::NotConverged(format!(
            "{unconverged} state(s) did not converge within {} sweeps; partial levels written",
            cfg.solve.dmrg.max_sweeps
        )));
    }
    Ok(())
}

fn reference_mpo_written(cfg: &RunConfig) -> bool {
    cfg.solve.reference.as_ref().is_some_and(|p| !p.extension().is_some_and(|e| e == "csv"))
}
