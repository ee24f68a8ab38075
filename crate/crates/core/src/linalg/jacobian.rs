//! Central-difference Jacobians on normalized coordinates.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::bbn::BbnModel;
use crate::error::{Error, Result};
use crate::simulator::GroundTruthModel;
use crate::space::{Value, VariableKind};

pub const DEFAULT_STEP: f64 = 1e-4;

/// A deterministic map from the unit cube to output space.
pub trait UnitCubeFunction: Sync {
    fn n_inputs(&self) -> usize;
    fn n_outputs(&self) -> usize;
    /// Coordinates that stand for categories and are not differentiated.
    fn categorical(&self) -> Vec<bool>;
    fn eval(&self, u: &[f64]) -> Result<Vec<f64>>;
}

/// The simulator seen through the space's unit-cube embedding.
pub struct GroundTruthFunction<'a, M: ?Sized>(pub &'a M);

impl<M: GroundTruthModel + ?Sized> UnitCubeFunction for GroundTruthFunction<'_, M> {
    fn n_inputs(&self) -> usize {
        self.0.space().n_decisions()
    }

    fn n_outputs(&self) -> usize {
        self.0.space().n_outputs()
    }

    fn categorical(&self) -> Vec<bool> {
        self.0.space().decision_specs.iter().map(|s| s.is_categorical()).collect()
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        let x = self.0.space().denormalize(u)?;
        Ok(self.0.evaluate(&x)?.values)
    }
}

/// The network's expected-midpoint prediction over its own inputs. Each
/// continuous coordinate spans the fitted bin range of its input; a
/// categorical coordinate selects category `floor(u·k)`.
pub struct BbnFunction<'a>(pub &'a BbnModel);

impl UnitCubeFunction for BbnFunction<'_> {
    fn n_inputs(&self) -> usize {
        self.0.structure.n_inputs()
    }

    fn n_outputs(&self) -> usize {
        self.0.structure.n_outputs()
    }

    fn categorical(&self) -> Vec<bool> {
        self.0
            .structure
            .input_nodes
            .iter()
            .map(|n| self.0.scheme.get(n).map(|b| b.is_categorical()).unwrap_or(false))
            .collect()
    }

    fn eval(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.n_inputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_inputs(),
                actual: u.len(),
            });
        }
        let bins = self
            .0
            .structure
            .input_nodes
            .iter()
            .zip(u)
            .map(|(name, &x)| {
                let b = self.0.scheme.get(name)?;
                let value = if b.kind == VariableKind::Categorical {
                    let k = b.k();
                    Value::Label(b.labels[((x * k as f64).floor() as usize).min(k - 1)].clone())
                } else {
                    let (lo, hi) = (b.edges[0], b.edges[b.edges.len() - 1]);
                    Value::Real(lo + x.clamp(0.0, 1.0) * (hi - lo))
                };
                Ok(b.value_to_bin(&value)?.bin as u32)
            })
            .collect::<Result<Vec<_>>>()?;
        self.0.predict_expected(&bins)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JacobianEstimate {
    /// `q × n`, units of output per unit of normalized input.
    pub matrix: DMatrix<f64>,
    pub base_point: Vec<f64>,
    pub step: f64,
    /// Columns left at zero because the coordinate is categorical.
    pub categorical_columns: Vec<usize>,
}

/// `J[k][i] = (f_k(x₀ + h·e_i) − f_k(x₀ − h·e_i)) / 2h`.
pub fn estimate_jacobian<F: UnitCubeFunction + ?Sized>(f: &F, x0: &[f64], h: f64) -> Result<JacobianEstimate> {
    let n = f.n_inputs();
    let q = f.n_outputs();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: x0.len(),
        });
    }
    if !(h > 0.0 && h < 0.5) {
        return Err(Error::InvalidConfig(format!("finite-difference step {h} must lie in (0, 0.5)")));
    }
    if let Some((index, &value)) = x0.iter().enumerate().find(|(_, &x)| !(x >= h && x <= 1.0 - h)) {
        return Err(Error::BoundaryPoint { index, value, step: h });
    }
    let categorical = f.categorical();
    let columns = (0..n)
        .into_par_iter()
        .map(|i| {
            if categorical[i] {
                return Ok(vec![0.0; q]);
            }
            let mut plus = x0.to_vec();
            let mut minus = x0.to_vec();
            plus[i] += h;
            minus[i] -= h;
            let (fp, fm) = (f.eval(&plus)?, f.eval(&minus)?);
            if fp.len() != q || fm.len() != q {
                return Err(Error::DimensionMismatch {
                    expected: q,
                    actual: fp.len().min(fm.len()),
                });
            }
            let col: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            if col.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("jacobian column {i}")));
            }
            Ok(col)
        })
        .collect::<Result<Vec<_>>>()?;
    let matrix = DMatrix::from_fn(q, n, |k, i| columns[i][k]);
    Ok(JacobianEstimate {
        matrix,
        base_point: x0.to_vec(),
        step: h,
        categorical_columns: (0..n).filter(|&i| categorical[i]).collect(),
    })
}
