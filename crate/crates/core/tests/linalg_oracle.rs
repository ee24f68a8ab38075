#![allow(clippy::needless_range_loop)]

use designnav::linalg::{
    estimate_jacobian, low_rank, navigate_linear, pseudo_inverse, svd, GroundTruthFunction, UnitCubeFunction,
    DEFAULT_SIGMA_TOL, DEFAULT_STEP,
};
use designnav::simulator::{GroundTruthModel, SyntheticEnergyModel};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gaussian_matrix<R: Rng>(rng: &mut R, q: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(q, n, |_, _| {
        // Box-Muller
        let (u1, u2): (f64, f64) = (rng.random::<f64>().max(1e-300), rng.random());
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    })
}

/// Random shapes up to 8×8; every third one has a planted rank deficit.
fn random_matrix<R: Rng>(rng: &mut R, i: usize) -> DMatrix<f64> {
    let q = rng.random_range(1..=8);
    let n = rng.random_range(1..=8);
    let scale = 10f64.powf(rng.random_range(-2.0..3.0));
    if i.is_multiple_of(3) && q.min(n) > 1 {
        let r = rng.random_range(1..q.min(n));
        (gaussian_matrix(rng, q, r) * gaussian_matrix(rng, r, n)) * scale
    } else {
        gaussian_matrix(rng, q, n) * scale
    }
}

fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, n, n).qr().q()
}

/// Spectral norm by power iteration on `MᵀM`.
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

#[test]
fn moore_penrose_conditions_on_random_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..150 {
        let j = random_matrix(&mut rng, i);
        let f = svd(&j).unwrap();
        let tol = 1e-8 * (1.0 + f.sigma[0]);
        assert!((f.reconstruct() - &j).abs().max() <= tol, "matrix {i}");
        let p = pseudo_inverse(&f, None, DEFAULT_SIGMA_TOL).unwrap().matrix;
        let jp = &j * &p;
        let pj = &p * &j;
        assert!((&jp * &j - &j).abs().max() <= tol, "J J† J, matrix {i}");
        assert!((&pj * &p - &p).abs().max() <= tol * (1.0 + p.abs().max()), "J† J J†, matrix {i}");
        assert!((&jp - jp.transpose()).abs().max() <= tol, "(J J†)ᵀ, matrix {i}");
        assert!((&pj - pj.transpose()).abs().max() <= tol, "(J† J)ᵀ, matrix {i}");
    }
}

#[test]
fn singular_values_match_gram_eigenvalues() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..100 {
        let j = random_matrix(&mut rng, i);
        let f = svd(&j).unwrap();
        let g = if j.nrows() <= j.ncols() { &j * j.transpose() } else { j.transpose() * &j };
        let mut ev: Vec<f64> = SymmetricEigen::new(g).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(ev.len(), f.sigma.len());
        for (a, b) in f.sigma.iter().zip(&ev) {
            assert!((a - b).abs() <= 1e-7 * (1.0 + f.sigma[0]), "matrix {i}: {a} vs {b}");
        }
        assert!(f.sigma.windows(2).all(|w| w[0] >= w[1]));
        let q = f.u.nrows();
        let n = f.v.nrows();
        assert!((f.u.transpose() * &f.u - DMatrix::identity(q, q)).abs().max() < 1e-10);
        assert!((f.v.transpose() * &f.v - DMatrix::identity(n, n)).abs().max() < 1e-10);
    }
}

#[test]
fn truncation_error_is_the_next_singular_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let q = rng.random_range(2..=6);
        let n = rng.random_range(2..=6);
        let p = q.min(n);
        let mut s: Vec<f64> = (0..p).map(|c| 10.0 * 0.5f64.powi(c as i32) * rng.random_range(0.9..1.0)).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let mut sig = DMatrix::zeros(q, n);
        for c in 0..p {
            sig[(c, c)] = s[c];
        }
        let j = random_orthogonal(&mut rng, q) * sig * random_orthogonal(&mut rng, n).transpose();
        let f = svd(&j).unwrap();
        for r in 1..p {
            let err = spectral_norm(&(&j - low_rank(&f, r).unwrap().matrix()));
            assert!((err - f.sigma[r]).abs() <= 1e-8, "r={r}: {err} vs {}", f.sigma[r]);
            assert!((err - s[r]).abs() <= 1e-8);
        }
        let full = low_rank(&f, p).unwrap().matrix();
        assert!((full - &j).abs().max() <= 1e-8 * (1.0 + s[0]));
    }
}

#[test]
fn unreachable_targets_get_the_min_norm_least_squares_step() {
    // rank-one J = a bᵀ, grid step chosen so the exact minimiser is on it
    let cases: [([f64; 2], [f64; 3], [f64; 2]); 4] = [
        ([1.0, 1.0], [1.0, 1.0, 0.0], [1.0, 3.0]),
        ([1.0, 1.0], [1.0, 0.0, 1.0], [0.5, -1.5]),
        ([1.0, 0.0], [1.0, 1.0, 1.0], [1.5, 2.0]),
        ([1.0, 1.0], [1.0, 2.0, 0.0], [2.0, -1.0]),
    ];
    for (a, b, d_o) in cases {
        let j = DMatrix::from_fn(2, 3, |r, c| a[r] * b[c]);
        let pinv = pseudo_inverse(&svd(&j).unwrap(), None, DEFAULT_SIGMA_TOL).unwrap();
        let step = navigate_linear(&pinv, &d_o, &[0.5; 3]).unwrap();
        let resid = |dx: &[f64]| -> f64 {
            (0..2)
                .map(|r| (d_o[r] - (0..3).map(|c| j[(r, c)] * dx[c]).sum::<f64>()).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let denom: f64 = a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|x| x * x).sum::<f64>();
        let steps = (2.0 * denom) as i64;
        let h = 1.0 / (2.0 * denom);
        let mut grid_best = f64::INFINITY;
        let mut best_norm = f64::INFINITY;
        let mut best: Vec<f64> = vec![];
        for i in -steps..=steps {
            for k in -steps..=steps {
                for l in -steps..=steps {
                    let dx = [i as f64 * h, k as f64 * h, l as f64 * h];
                    let r = resid(&dx);
                    let nrm = dx.iter().map(|x| x * x).sum::<f64>();
                    if r < grid_best - 1e-12 || ((r - grid_best).abs() <= 1e-12 && nrm < best_norm) {
                        grid_best = grid_best.min(r);
                        best_norm = nrm;
                        best = dx.to_vec();
                    }
                }
            }
        }
        assert!((resid(&step.delta_x) - grid_best).abs() <= 1e-6);
        for (x, g) in step.delta_x.iter().zip(&best) {
            assert!((x - g).abs() <= 1e-6, "{:?} vs {best:?}", step.delta_x);
        }
        // adding a null-space direction keeps the residual and grows the step
        let null = [b[1], -b[0], 0.0];
        let moved: Vec<f64> = step.delta_x.iter().zip(&null).map(|(x, n)| x + 0.1 * n).collect();
        assert!((resid(&moved) - resid(&step.delta_x)).abs() < 1e-12);
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        assert!(norm(&moved) > norm(&step.delta_x));
    }
}

#[test]
fn reachable_targets_are_hit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let j = gaussian_matrix(&mut rng, 2, 3);
        let d_o = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let pinv = pseudo_inverse(&svd(&j).unwrap(), None, DEFAULT_SIGMA_TOL).unwrap();
        let dx = &pinv.matrix * DVector::from_column_slice(&d_o);
        let hit = &j * &dx;
        assert!((hit[0] - d_o[0]).abs() < 1e-9 && (hit[1] - d_o[1]).abs() < 1e-9);
    }
}

struct Affine(DMatrix<f64>, Vec<f64>);

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
    fn eval(&self, u: &[f64]) -> designnav::Result<Vec<f64>> {
        let y = &self.0 * DVector::from_column_slice(u);
        Ok(y.iter().zip(&self.1).map(|(a, b)| a + b).collect())
    }
}

#[test]
fn affine_jacobians_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let q = rng.random_range(1..=5);
        let n = rng.random_range(1..=6);
        let a = gaussian_matrix(&mut rng, q, n) * 5.0;
        let b: Vec<f64> = (0..q).map(|_| rng.random_range(-10.0..10.0)).collect();
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.99)).collect();
        let j = estimate_jacobian(&Affine(a.clone(), b), &x0, DEFAULT_STEP).unwrap();
        assert!((j.matrix - a).abs().max() <= 1e-8);
    }
}

fn continuous_base(m: &SyntheticEnergyModel) -> (Vec<f64>, Vec<usize>) {
    let x0 = m.space().normalize(&m.reference_dwelling()).unwrap();
    let cont = (0..x0.len()).filter(|&i| !m.space().decision_specs[i].is_categorical()).collect();
    (x0, cont)
}

#[test]
fn central_differences_converge_quadratically() {
    let m = SyntheticEnergyModel::new();
    let (x0, _) = continuous_base(&m);
    let f = GroundTruthFunction(&m);
    let j1 = estimate_jacobian(&f, &x0, 1e-3).unwrap().matrix;
    let j2 = estimate_jacobian(&f, &x0, 5e-4).unwrap().matrix;
    let j3 = estimate_jacobian(&f, &x0, 2.5e-4).unwrap().matrix;
    let (d1, d2) = ((&j1 - &j2).abs().max(), (&j2 - &j3).abs().max());
    assert!(d1 > 1e-9, "model looks linear at the base point");
    let ratio = d1 / d2;
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn linearization_error_shrinks_quadratically() {
    let m = SyntheticEnergyModel::new();
    let (x0, cont) = continuous_base(&m);
    let f = GroundTruthFunction(&m);
    let j = estimate_jacobian(&f, &x0, DEFAULT_STEP).unwrap().matrix;
    let o0 = f.eval(&x0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut dir = vec![0.0; x0.len()];
    for &i in &cont {
        dir[i] = rng.random_range(-1.0..1.0);
    }
    let err = |t: f64| -> f64 {
        let x: Vec<f64> = x0.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
        let o = f.eval(&x).unwrap();
        let lin = &j * DVector::from_iterator(dir.len(), dir.iter().map(|d| t * d));
        (0..o.len()).map(|k| (o[k] - o0[k] - lin[k]).powi(2)).sum::<f64>().sqrt()
    };
    let ratio = err(0.04) / err(0.02);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}
