//! One PASS/FAIL line per acceptance criterion. Run with `--nocapture` to
//! see the report; the test fails if any criterion does.

mod common;

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use designnav::bbn::{BbnModel, Evidence};
use designnav::linalg::{estimate_jacobian, low_rank, pseudo_inverse, svd, UnitCubeFunction, DEFAULT_SIGMA_TOL};
use designnav::pipeline::{run_pipeline, PipelineConfig, PipelineOutput};
use designnav::sensitivity::{estimate_indices, saltelli_matrices};
use designnav::simulator::{GroundTruthModel, SyntheticEnergyModel, DUMMY_VARIABLES};
use designnav::sobol::SobolSequence;
use designnav::space::DecisionVector;
use designnav::validation::{mape, nrmse, prediction_accuracy};
use designnav::{Error, Result};
use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SOBOL_BUDGET: Duration = Duration::from_secs(1);
const SENSITIVITY_BUDGET: Duration = Duration::from_secs(10);
const INFERENCE_BUDGET: Duration = Duration::from_secs(30);
const LINALG_BUDGET: Duration = Duration::from_secs(20);
const PIPELINE_BUDGET: Duration = Duration::from_secs(120);

const SENSITIVITY_TOL: f64 = 0.05;
const INFERENCE_TOL: f64 = 1e-9;
const INFERENCE_MODELS: usize = 200;
const MP_REL_TOL: f64 = 1e-8;
const MP_MATRICES: usize = 120;
const ECKART_YOUNG_TOL: f64 = 1e-8;
const AFFINE_JACOBIAN_TOL: f64 = 1e-8;
const MAX_NRMSE: f64 = 0.6;
const MAX_MAPE: f64 = 0.35;
const NAV_SCENARIOS: usize = 50;
const NAV_MIN_SUCCESS: f64 = 0.8;

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn report(id: &'static str, elapsed: Duration, budget: Duration, r: std::result::Result<String, String>) -> Outcome {
    let (pass, mut detail) = match r {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    let in_time = elapsed <= budget;
    detail.push_str(&format!("; {:.2} s of {} s", elapsed.as_secs_f64(), budget.as_secs()));
    Outcome {
        id,
        pass: pass && in_time,
        detail,
    }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed())
}

fn check(ok: bool, msg: String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn sobol() -> std::result::Result<String, String> {
    let mut seq = SobolSequence::new(2).map_err(|e| e.to_string())?;
    for i in 0..16u64 {
        let p = seq.next_point().map_err(|e| e.to_string())?;
        check(p == common::oracle_point(i, 2), format!("point {i}: {p:?}"))?;
    }
    let mut seq = SobolSequence::new(64).map_err(|e| e.to_string())?;
    let pts = seq.take_points(256).map_err(|e| e.to_string())?;
    for m in 0..=8u32 {
        let n = 1usize << m;
        for d in 0..64 {
            let mut hits = vec![0u8; n];
            for p in &pts[..n] {
                hits[(p[d] * n as f64) as usize] += 1;
            }
            check(hits.iter().all(|&h| h == 1), format!("stratification fails at m={m}, dim {d}"))?;
        }
    }
    Ok("16 points exact in dims 1-2, stratified for m<=8 in 64 dims".into())
}

fn sensitivity() -> std::result::Result<String, String> {
    let first_order = |d: usize, n: usize, f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> {
        let plan = saltelli_matrices(d, n).unwrap();
        let out: Vec<Vec<f64>> = plan.points().iter().map(|p| vec![f(p)]).collect();
        let names: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        let r = estimate_indices(&plan, &out, &names, &["y".into()]).unwrap();
        r.outputs["y"].first_order.values().copied().collect()
    };
    let (a, b) = (7.0, 0.1);
    let v1 = 0.5 * (1.0 + b * PI.powi(4) / 5.0).powi(2);
    let v2 = a * a / 8.0;
    let v13 = b * b * PI.powi(8) * (1.0 / 18.0 - 1.0 / 50.0);
    let v = v1 + v2 + v13;
    let truth = [v1 / v, v2 / v, 0.0];
    let ish = first_order(3, 8192, &|u| {
        let x: Vec<f64> = u.iter().map(|t| -PI + 2.0 * PI * t).collect();
        x[0].sin() + a * x[1].sin().powi(2) + b * x[2].powi(4) * x[0].sin()
    });
    let add = first_order(2, 8192, &|u| u[0] + 2.0 * u[1]);
    let text = format!(
        "Ishigami S=[{:.4}, {:.4}, {:.4}] vs [{:.4}, {:.4}, 0]; additive S=[{:.4}, {:.4}] vs [0.2, 0.8]",
        ish[0], ish[1], ish[2], truth[0], truth[1], add[0], add[1]
    );
    let ok = ish.iter().zip(&truth).all(|(s, t)| (s - t).abs() <= SENSITIVITY_TOL)
        && (add[0] - 0.2).abs() <= SENSITIVITY_TOL
        && (add[1] - 0.8).abs() <= SENSITIVITY_TOL;
    check(ok, text.clone())?;
    Ok(text)
}

fn inference() -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut queries = 0;
    for it in 0..INFERENCE_MODELS {
        let m = common::random_model(&mut rng);
        let joint = common::enumerate_joint(&m);
        for mode in 0..3 {
            let e = common::random_evidence(&m, &mut rng, mode);
            let (z, brute) = common::brute_posteriors(&m, &joint, &e);
            let q: Vec<String> = common::node_names(&m).into_iter().filter(|n| !e.hard.contains_key(n)).collect();
            match m.infer(&e, &q) {
                Ok(post) => {
                    worst = worst.max((post.evidence_probability - z).abs());
                    for n in &q {
                        for (a, b) in post.posteriors[n].iter().zip(&brute[n]) {
                            worst = worst.max((a - b).abs());
                        }
                    }
                    queries += 1;
                }
                Err(Error::InconsistentEvidence) if z == 0.0 => queries += 1,
                Err(other) => return Err(format!("model {it}: {other}")),
            }
        }
    }
    let text = format!("{INFERENCE_MODELS} models, {queries} evidence sets, max abs error {worst:.2e}");
    check(worst <= INFERENCE_TOL, text.clone())?;
    Ok(text)
}

fn gaussian(rng: &mut ChaCha8Rng, q: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(q, n, |_, _| {
        let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    })
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    let mut x = DVector::from_fn(m.ncols(), |i, _| 1.0 + 0.1 * i as f64);
    let mut lambda = 0.0;
    for _ in 0..5000 {
        let y = &g * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = x.dot(&y) / x.dot(&x);
        x = y / norm;
    }
    lambda.max(0.0).sqrt()
}

struct Affine(DMatrix<f64>);

impl UnitCubeFunction for Affine {
    fn n_inputs(&self) -> usize {
        self.0.ncols()
    }
    fn n_outputs(&self) -> usize {
        self.0.nrows()
    }
    fn categorical(&self) -> Vec<bool> {
        vec![false; self.0.ncols()]
    }
    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok((&self.0 * DVector::from_column_slice(u)).iter().map(|v| v + 3.0).collect())
    }
}

fn linear_algebra() -> std::result::Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_mp: f64 = 0.0;
    let mut deficient = 0;
    for i in 0..MP_MATRICES {
        let q = rng.random_range(1..=8);
        let n = rng.random_range(1..=8);
        let j = if i % 3 == 0 && q.min(n) > 1 {
            deficient += 1;
            let r = rng.random_range(1..q.min(n));
            gaussian(&mut rng, q, r) * gaussian(&mut rng, r, n)
        } else {
            gaussian(&mut rng, q, n)
        };
        let f = svd(&j).map_err(|e| e.to_string())?;
        let p = pseudo_inverse(&f, None, DEFAULT_SIGMA_TOL).map_err(|e| e.to_string())?.matrix;
        let (jp, pj) = (&j * &p, &p * &j);
        let errs = [
            (&jp * &j - &j).abs().max(),
            (&pj * &p - &p).abs().max(),
            (&jp - jp.transpose()).abs().max(),
            (&pj - pj.transpose()).abs().max(),
        ];
        let rel = errs.iter().fold(0.0f64, |a, &b| a.max(b)) / (1.0 + f.sigma[0]);
        worst_mp = worst_mp.max(rel);
    }
    let mut worst_ey: f64 = 0.0;
    for _ in 0..20 {
        let (q, n) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let mut s = DMatrix::zeros(q, n);
        for c in 0..q.min(n) {
            s[(c, c)] = 8.0 * 0.5f64.powi(c as i32);
        }
        let j = gaussian(&mut rng, q, q).qr().q() * s * gaussian(&mut rng, n, n).qr().q().transpose();
        let f = svd(&j).map_err(|e| e.to_string())?;
        for r in 1..q.min(n) {
            let err = spectral_norm(&(&j - low_rank(&f, r).map_err(|e| e.to_string())?.matrix()));
            worst_ey = worst_ey.max((err - f.sigma[r]).abs());
        }
    }
    let a = gaussian(&mut rng, 3, 5) * 4.0;
    let jac = estimate_jacobian(&Affine(a.clone()), &[0.2, 0.4, 0.5, 0.7, 0.9], 1e-4).map_err(|e| e.to_string())?;
    let worst_aff = (jac.matrix - a).abs().max();
    let text = format!(
        "Moore-Penrose {worst_mp:.1e}*(1+s0) over {MP_MATRICES} ({deficient} rank-deficient); \
         Eckart-Young {worst_ey:.1e}; affine Jacobian {worst_aff:.1e}"
    );
    check(
        worst_mp <= MP_REL_TOL && worst_ey <= ECKART_YOUNG_TOL && worst_aff <= AFFINE_JACOBIAN_TOL,
        text.clone(),
    )?;
    Ok(text)
}

fn acceptance_config(out: &Path) -> PipelineConfig {
    PipelineConfig {
        n_samples: 5000,
        top_k: 6,
        bins: 5,
        alpha: 1.0,
        folds: 10,
        seed: 20240601,
        out_dir: out.to_path_buf(),
        ..Default::default()
    }
}

/// Half-width quantization NRMSE of an output under the model's bins.
fn quantization_bound(run: &PipelineOutput, name: &str) -> f64 {
    let y = run.dataset.real_column(name).unwrap();
    let bins = run.model.bins(name).unwrap();
    let half_sq = y
        .iter()
        .map(|&v| {
            let (lo, hi) = bins.bin_bounds(bins.to_bin(v).bin).unwrap();
            ((hi - lo) / 2.0).powi(2)
        })
        .sum::<f64>()
        / y.len() as f64;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let std = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt();
    half_sq.sqrt() / std
}

/// Scenario: every screened input except the PV pair pinned at a random
/// value, the rest of the dwelling random too. Feasible when some pair of
/// PV bin midpoints reaches the top renewable-share bin.
fn navigation_scenarios(run: &PipelineOutput, sim: &SyntheticEnergyModel) -> (usize, usize, usize) {
    const FREE: [&str; 2] = ["Area_PV", "P_PV"];
    let model = &run.model;
    let space = sim.space();
    let target = "beng3";
    let k = model.n_bins(target).unwrap();
    let top = model.bins(target).unwrap();
    let reaches = |x: &DecisionVector| -> bool {
        let o = sim.evaluate(x).unwrap();
        top.to_bin(o.values[space.output_index(target).unwrap()]).bin == k - 1
    };
    let with_free = |base: &DecisionVector, bins: [usize; 2]| -> DecisionVector {
        let mut x = base.clone();
        for (name, b) in FREE.iter().zip(bins) {
            x.values[space.decision_index(name).unwrap()] = model.bins(name).unwrap().representative(b).unwrap();
        }
        x
    };
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let (mut feasible, mut infeasible, mut hits) = (0, 0, 0);
    while feasible < NAV_SCENARIOS {
        let u: Vec<f64> = (0..space.n_decisions()).map(|_| rng.random()).collect();
        let base = space.denormalize(&u).unwrap();
        let kf: Vec<usize> = FREE.iter().map(|n| model.n_bins(n).unwrap()).collect();
        let any = (0..kf[0]).any(|a| (0..kf[1]).any(|b| reaches(&with_free(&base, [a, b]))));
        if !any {
            infeasible += 1;
            continue;
        }
        feasible += 1;
        let mut fixed = IndexMap::new();
        for name in &model.structure.input_nodes {
            if !FREE.contains(&name.as_str()) {
                let v = &base.values[space.decision_index(name).unwrap()];
                fixed.insert(name.clone(), model.bin_of_value(name, v).unwrap().bin);
            }
        }
        let mut targets = IndexMap::new();
        targets.insert(target.to_string(), vec![k - 1]);
        let nav = model.navigate(&targets, &fixed).unwrap();
        let rec = [nav.recommendations[FREE[0]].bin, nav.recommendations[FREE[1]].bin];
        hits += reaches(&with_free(&base, rec)) as usize;
    }
    (feasible, infeasible, hits)
}

fn pipeline(run: &PipelineOutput) -> std::result::Result<String, String> {
    let sim = SyntheticEnergyModel::new();
    let selected = &run.screening.selected;
    let leaked: Vec<&String> = selected.iter().filter(|s| DUMMY_VARIABLES.contains(&s.as_str())).collect();
    let mut lines = vec![format!("(a) selected {selected:?}, dummies selected: {leaked:?}")];
    let mut ok = leaked.is_empty() && selected.len() == 6;
    for (name, r) in &run.validation.outputs {
        let bound = quantization_bound(run, name);
        ok &= r.nrmse <= MAX_NRMSE && r.mape <= MAX_MAPE;
        lines.push(format!(
            "(b) {name}: NRMSE {:.4} (<= {MAX_NRMSE}), MAPE {:.4} (<= {MAX_MAPE}); \
             bin half-width NRMSE {bound:.4}, own-midpoint NRMSE {:.4}",
            r.nrmse, r.mape, r.quantization_nrmse
        ));
    }
    let (feasible, infeasible, hits) = navigation_scenarios(run, &sim);
    let share = hits as f64 / feasible as f64;
    ok &= share >= NAV_MIN_SUCCESS;
    lines.push(format!(
        "(c) {hits}/{feasible} re-simulated recommendations in the top beng3 bin ({:.0}%, need {:.0}%); \
         {infeasible} unreachable scenarios redrawn",
        share * 100.0,
        NAV_MIN_SUCCESS * 100.0
    ));
    let text = lines.join("\n       ");
    check(ok, text.clone())?;
    Ok(text)
}

fn artifact_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn persistence_battery(model: &BbnModel) -> std::result::Result<usize, String> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).map_err(|e| e.to_string())?;
    let loaded = BbnModel::load(&path).map_err(|e| e.to_string())?;
    check(&loaded == model, "loaded model differs".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let names = common::node_names(model);
    let mut n = 0;
    for _ in 0..50 {
        let mut e = Evidence::default();
        for name in &names {
            let k = model.n_bins(name).unwrap();
            match rng.random_range(0..4) {
                0 => e = e.hard(name.clone(), rng.random_range(0..k)),
                1 => e = e.soft(name.clone(), (0..k).filter(|_| rng.random_bool(0.6)).collect()),
                _ => {}
            }
        }
        let q: Vec<String> = names.iter().filter(|x| !e.hard.contains_key(*x)).cloned().collect();
        let a = model.infer(&e, &q).map_err(|e| e.to_string());
        let b = loaded.infer(&e, &q).map_err(|e| e.to_string());
        check(a == b, format!("evidence {e:?} answers differ"))?;
        n += 1;
    }
    Ok(n)
}

fn determinism(first: &Path, run: &PipelineOutput) -> std::result::Result<String, String> {
    let second = tempfile::tempdir().unwrap();
    run_pipeline(&acceptance_config(second.path())).map_err(|e| e.to_string())?;
    let (a, b) = (artifact_bytes(first), artifact_bytes(second.path()));
    check(a.len() >= 6, format!("only {} artifacts", a.len()))?;
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        check(na == nb && ba == bb, format!("artifact {na} differs between runs"))?;
    }
    check(a.len() == b.len(), "artifact sets differ".into())?;
    let n = persistence_battery(&run.model)?;
    Ok(format!("{} artifacts byte-identical across runs; {n} save/load/infer queries identical", a.len()))
}

fn metrics() -> std::result::Result<String, String> {
    let n = nrmse(&[0.0, 2.0], &[1.0, 1.0]).map_err(|e| e.to_string())?;
    let m = mape(&[100.0, 200.0], &[110.0, 180.0]).map_err(|e| e.to_string())?;
    let mut pa = Vec::new();
    for (y, yp) in [(1.0, 1.0), (0.5, 0.4), (2.0, 3.0)] {
        let got = prediction_accuracy(y, yp).map_err(|e| e.to_string())?;
        pa.push(got == 100.0 * yp / (100.0 * y - yp));
    }
    let text = format!("nrmse {n}, mape {m:.15}, PA hand cases {pa:?}");
    check(n == 1.0 && (m - 0.10).abs() <= 1e-15 && pa.iter().all(|&b| b), text.clone())?;
    Ok(text)
}

#[test]
fn acceptance() {
    let mut outcomes = Vec::new();
    let (r, t) = timed(sobol);
    outcomes.push(report("1 sobol", t, SOBOL_BUDGET, r));
    let (r, t) = timed(sensitivity);
    outcomes.push(report("2 sensitivity", t, SENSITIVITY_BUDGET, r));
    let (r, t) = timed(inference);
    outcomes.push(report("3 inference", t, INFERENCE_BUDGET, r));
    let (r, t) = timed(linear_algebra);
    outcomes.push(report("4 linear algebra", t, LINALG_BUDGET, r));

    let dir = tempfile::tempdir().unwrap();
    let (run, t_run) = timed(|| run_pipeline(&acceptance_config(dir.path())));
    match run {
        Ok(run) => {
            let (r, t) = timed(|| pipeline(&run));
            outcomes.push(report("5 pipeline", t_run + t, PIPELINE_BUDGET, r));
            let (r, t) = timed(|| determinism(dir.path(), &run));
            outcomes.push(report("6 determinism", t, PIPELINE_BUDGET, r));
        }
        Err(e) => {
            outcomes.push(report("5 pipeline", t_run, PIPELINE_BUDGET, Err(e.to_string())));
            outcomes.push(report("6 determinism", t_run, PIPELINE_BUDGET, Err("no first run".into())));
        }
    }
    let (r, t) = timed(metrics);
    outcomes.push(report("7 metrics", t, PIPELINE_BUDGET, r));

    // the stdout handle bypasses test capture, so the table always shows
    let mut out = std::io::stdout().lock();
    for o in &outcomes {
        writeln!(out, "{} {:<17} {}", if o.pass { "PASS" } else { "FAIL" }, o.id, o.detail).unwrap();
    }
    drop(out);
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
