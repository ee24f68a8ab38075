//! One-sided Jacobi SVD, truncation and the Moore-Penrose pseudo-inverse.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 10_000;
pub const DEFAULT_SIGMA_TOL: f64 = 1e-10;
const MAX_ENTRIES: usize = 1_000_000;

/// `J = U Σ Vᵀ` with `U` (`q × q`) and `V` (`n × n`) orthogonal and the
/// `min(q, n)` singular values in descending order.
#[derive(Clone, Debug, PartialEq)]
pub struct SvdFactors {
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl SvdFactors {
    pub fn rank_bound(&self) -> usize {
        self.sigma.len()
    }

    /// `U Σ Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let (q, n) = (self.u.nrows(), self.v.nrows());
        let mut s = DMatrix::zeros(q, n);
        for (c, &x) in self.sigma.iter().enumerate() {
            s[(c, c)] = x;
        }
        &self.u * s * self.v.transpose()
    }
}

/// Hestenes' one-sided Jacobi: rotate column pairs of `A V` until every
/// pair is orthogonal to working precision. Column norms are then the
/// singular values and the normalized columns the left vectors.
pub fn svd(j: &DMatrix<f64>) -> Result<SvdFactors> {
    let (q, n) = j.shape();
    if q == 0 || n == 0 {
        return Err(Error::DimensionMismatch { expected: 1, actual: 0 });
    }
    if q * n > MAX_ENTRIES {
        return Err(Error::InvalidConfig(format!("{q}×{n} matrix exceeds {MAX_ENTRIES} entries")));
    }
    if j.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("matrix passed to svd".into()));
    }
    let mut a = j.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let eps = f64::EPSILON;
    // columns this small are rounding residue; rotating them never settles
    let negligible = (eps * j.norm()).powi(2);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for r in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(r).norm_squared();
                let gamma = a.column(p).dot(&a.column(r));
                if alpha <= negligible || beta <= negligible || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, r, c, s);
                rotate(&mut v, p, r, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence(MAX_SWEEPS));
    }

    let norms: Vec<f64> = (0..n).map(|c| a.column(c).norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let p = q.min(n);
    let sigma: Vec<f64> = order[..p].iter().map(|&c| norms[c]).collect();
    let v_sorted = DMatrix::from_fn(n, n, |row, col| v[(row, order[col])]);

    // columns below this carry no direction worth keeping
    let floor = sigma[0] * eps * q.max(n) as f64;
    let mut u_cols: Vec<DVector<f64>> = Vec::with_capacity(q);
    let mut missing = Vec::new();
    for (c, &col) in order[..p].iter().enumerate() {
        if sigma[c] > floor && sigma[c] > 0.0 {
            u_cols.push(a.column(col) / sigma[c]);
        } else {
            u_cols.push(DVector::zeros(q));
            missing.push(c);
        }
    }
    missing.extend(p..q);
    u_cols.resize(q, DVector::zeros(q));
    for c in missing {
        let basis: Vec<DVector<f64>> = u_cols
            .iter()
            .enumerate()
            .filter(|&(i, u)| i != c && u.norm_squared() > 0.0)
            .map(|(_, u)| u.clone())
            .collect();
        u_cols[c] = complete(&basis, q);
    }
    let u = DMatrix::from_columns(&u_cols);
    Ok(SvdFactors {
        u,
        sigma,
        v: v_sorted,
    })
}

fn rotate(m: &mut DMatrix<f64>, p: usize, r: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, r)]);
        m[(i, p)] = c * x - s * y;
        m[(i, r)] = s * x + c * y;
    }
}

/// A unit vector orthogonal to `basis`, by Gram–Schmidt on the standard
/// basis vector with the largest residual.
fn complete(basis: &[DVector<f64>], q: usize) -> DVector<f64> {
    let residual = |e: usize| {
        let mut x = DVector::zeros(q);
        x[e] = 1.0;
        // twice, for orthogonality to working precision
        for _ in 0..2 {
            for b in basis {
                let d = b.dot(&x);
                x -= b * d;
            }
        }
        x
    };
    let best = (0..q)
        .map(residual)
        .max_by(|x, y| x.norm().total_cmp(&y.norm()))
        .expect("q ≥ 1");
    let norm = best.norm();
    best / norm
}

/// The leading `r` singular triples.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankMap {
    pub sigma: Vec<f64>,
    pub u: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
}

impl LowRankMap {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `Σ_{c<r} σ_c u_c v_cᵀ`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let (q, n) = (self.u[0].len(), self.v[0].len());
        let mut m = DMatrix::zeros(q, n);
        for ((s, u), v) in self.sigma.iter().zip(&self.u).zip(&self.v) {
            m += u * v.transpose() * *s;
        }
        m
    }
}

pub fn low_rank(f: &SvdFactors, r: usize) -> Result<LowRankMap> {
    let p = f.rank_bound();
    if r == 0 || r > p {
        return Err(Error::RankOutOfRange { rank: r, max: p });
    }
    Ok(LowRankMap {
        sigma: f.sigma[..r].to_vec(),
        u: (0..r).map(|c| f.u.column(c).into_owned()).collect(),
        v: (0..r).map(|c| f.v.column(c).into_owned()).collect(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PseudoInverse {
    /// `n × q`.
    pub matrix: DMatrix<f64>,
    /// Singular values that got a reciprocal.
    pub retained: usize,
    /// No singular value passed the tolerance; the map is zero.
    pub degenerate: bool,
}

/// `J† = Σ σ_c⁻¹ v_c u_cᵀ` over the first `rank` (default all) singular
/// values exceeding `sigma_tol · σ₀`.
pub fn pseudo_inverse(f: &SvdFactors, rank: Option<usize>, sigma_tol: f64) -> Result<PseudoInverse> {
    let p = f.rank_bound();
    let r = rank.unwrap_or(p);
    if r == 0 || r > p {
        return Err(Error::RankOutOfRange { rank: r, max: p });
    }
    if !(sigma_tol >= 0.0) {
        return Err(Error::InvalidConfig(format!("σ tolerance {sigma_tol} must be ≥ 0")));
    }
    let (q, n) = (f.u.nrows(), f.v.nrows());
    let cut = sigma_tol * f.sigma[0];
    let mut m = DMatrix::zeros(n, q);
    let mut retained = 0;
    for c in 0..r {
        let s = f.sigma[c];
        if s > cut && s > 0.0 {
            m += f.v.column(c) * f.u.column(c).transpose() / s;
            retained += 1;
        }
    }
    if retained == 0 {
        log::warn!("pseudo-inverse is degenerate: no singular value above {cut}");
    }
    Ok(PseudoInverse {
        matrix: m,
        retained,
        degenerate: retained == 0,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearStep {
    /// Candidate in normalized coordinates.
    pub x: Vec<f64>,
    pub delta_x: Vec<f64>,
    /// Some coordinate left the unit cube and was cut back.
    pub clamped: bool,
    /// The pseudo-inverse was the zero map.
    pub degenerate: bool,
}

/// Minimum-norm least-squares step `Δx = J† Δo` from `x₀`, clamped to the
/// unit cube.
pub fn navigate_linear(pinv: &PseudoInverse, delta_o: &[f64], x0: &[f64]) -> Result<LinearStep> {
    let (n, q) = pinv.matrix.shape();
    if delta_o.len() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            actual: delta_o.len(),
        });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: x0.len(),
        });
    }
    if delta_o.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite("target change".into()));
    }
    if let Some((index, &value)) = x0.iter().enumerate().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
        return Err(Error::BoundaryPoint { index, value, step: 0.0 });
    }
    let dx = &pinv.matrix * DVector::from_column_slice(delta_o);
    let mut clamped = false;
    let x = x0
        .iter()
        .zip(dx.iter())
        .map(|(a, d)| {
            let y = a + d;
            let c = y.clamp(0.0, 1.0);
            clamped |= c != y;
            c
        })
        .collect();
    Ok(LinearStep {
        x,
        delta_x: dx.iter().copied().collect(),
        clamped,
        degenerate: pinv.degenerate,
    })
}

/// Inspection view: singular values and the leading singular vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorsExport {
    pub input_names: Vec<String>,
    pub output_names: Vec<String>,
    pub singular_values: Vec<f64>,
    /// `u_c` per retained triple, over outputs.
    pub left_vectors: Vec<Vec<f64>>,
    /// `v_c` per retained triple, over inputs.
    pub right_vectors: Vec<Vec<f64>>,
}

impl FactorsExport {
    pub fn new(f: &SvdFactors, leading: usize, input_names: Vec<String>, output_names: Vec<String>) -> Self {
        let r = leading.min(f.rank_bound());
        Self {
            input_names,
            output_names,
            singular_values: f.sigma.clone(),
            left_vectors: (0..r).map(|c| f.u.column(c).iter().copied().collect()).collect(),
            right_vectors: (0..r).map(|c| f.v.column(c).iter().copied().collect()).collect(),
        }
    }
}
