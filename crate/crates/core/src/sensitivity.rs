//! Variance-based global sensitivity analysis: Saltelli sampling with Sobol
//! first-order and Jansen total-order estimators, plus top-k screening.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sobol::{SobolSequence, MAX_DIMENSION};

/// Evaluation plan of `n_base·(d + 2)` unit-cube points, laid out as the
/// blocks `A, AB_1, …, AB_d, B` of `n_base` rows each.
#[derive(Clone, Debug)]
pub struct SaltelliPlan {
    dimension: usize,
    n_base: usize,
    points: Vec<Vec<f64>>,
}

impl SaltelliPlan {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_base(&self) -> usize {
        self.n_base
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn block_a(&self) -> &[Vec<f64>] {
        &self.points[..self.n_base]
    }

    /// `AB_i` for 0-based column `i`.
    pub fn block_ab(&self, i: usize) -> &[Vec<f64>] {
        let start = (i + 1) * self.n_base;
        &self.points[start..start + self.n_base]
    }

    pub fn block_b(&self) -> &[Vec<f64>] {
        let start = (self.dimension + 1) * self.n_base;
        &self.points[start..start + self.n_base]
    }
}

/// Builds the Saltelli plan from a `2d`-dimensional Sobol stream (origin
/// skipped): the first `d` coordinates form `A`, the last `d` form `B`.
pub fn saltelli_matrices(dimension: usize, n_base: usize) -> Result<SaltelliPlan> {
    if dimension == 0 {
        return Err(Error::InvalidPlan("dimension must be at least 1".into()));
    }
    if n_base == 0 {
        return Err(Error::InvalidPlan("n_base must be at least 1".into()));
    }
    if 2 * dimension > MAX_DIMENSION {
        return Err(Error::SobolDimension(2 * dimension));
    }
    if !n_base.is_power_of_two() {
        log::warn!("n_base = {n_base} is not a power of two; Sobol stratification is lost");
    }
    let mut seq = SobolSequence::new(2 * dimension)?;
    seq.skip(1)?;
    let base = seq.take_points(n_base)?;
    let a: Vec<Vec<f64>> = base.iter().map(|p| p[..dimension].to_vec()).collect();
    let b: Vec<Vec<f64>> = base.iter().map(|p| p[dimension..].to_vec()).collect();

    let mut points = Vec::with_capacity(n_base * (dimension + 2));
    points.extend(a.iter().cloned());
    for i in 0..dimension {
        points.extend(a.iter().zip(&b).map(|(ra, rb)| {
            let mut row = ra.clone();
            row[i] = rb[i];
            row
        }));
    }
    points.extend(b);
    Ok(SaltelliPlan {
        dimension,
        n_base,
        points,
    })
}

/// Indices for one output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputIndices {
    pub first_order: IndexMap<String, f64>,
    pub total_order: IndexMap<String, f64>,
    pub variance: f64,
    /// Zero output variance; every index is reported as zero.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub n_base: usize,
    pub outputs: IndexMap<String, OutputIndices>,
}

/// Estimates first- and total-order indices from outputs evaluated on the
/// plan points, in plan order. `outputs[row][k]` is output `k` at row `row`.
pub fn estimate_indices(
    plan: &SaltelliPlan,
    outputs: &[Vec<f64>],
    variable_names: &[String],
    output_names: &[String],
) -> Result<SensitivityResult> {
    let d = plan.dimension;
    let n = plan.n_base;
    if outputs.len() != plan.len() {
        return Err(Error::DimensionMismatch {
            expected: plan.len(),
            actual: outputs.len(),
        });
    }
    if variable_names.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: variable_names.len(),
        });
    }
    let q = output_names.len();
    for (row, o) in outputs.iter().enumerate() {
        if o.len() != q {
            return Err(Error::DimensionMismatch {
                expected: q,
                actual: o.len(),
            });
        }
        if o.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("output at plan row {row}")));
        }
    }

    let mut result = IndexMap::new();
    for (k, out_name) in output_names.iter().enumerate() {
        let col = |start: usize| -> Vec<f64> { outputs[start..start + n].iter().map(|o| o[k]).collect() };
        let fa = col(0);
        let fb = col((d + 1) * n);
        let variance = population_variance(fa.iter().chain(&fb).copied());
        let scale = fa.iter().chain(&fb).fold(0.0f64, |m, v| m.max(v.abs()));
        // below the rounding noise of the outputs themselves
        let degenerate = variance <= (16.0 * f64::EPSILON * scale).powi(2);

        let mut first_order = IndexMap::new();
        let mut total_order = IndexMap::new();
        for (i, name) in variable_names.iter().enumerate() {
            let (s, st) = if degenerate {
                (0.0, 0.0)
            } else {
                let fab = col((i + 1) * n);
                let s = fa
                    .iter()
                    .zip(&fb)
                    .zip(&fab)
                    .map(|((a, b), ab)| b * (ab - a))
                    .sum::<f64>()
                    / n as f64
                    / variance;
                let st = fa.iter().zip(&fab).map(|(a, ab)| (a - ab).powi(2)).sum::<f64>() / n as f64 / (2.0 * variance);
                (s, st)
            };
            first_order.insert(name.clone(), s);
            total_order.insert(name.clone(), st);
        }
        result.insert(
            out_name.clone(),
            OutputIndices {
                first_order,
                total_order,
                variance: variance.max(0.0),
                degenerate,
            },
        );
    }
    Ok(SensitivityResult {
        n_base: n,
        outputs: result,
    })
}

fn population_variance(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let (count, sum) = xs.clone().fold((0usize, 0.0), |(c, s), x| (c + 1, s + x));
    if count == 0 {
        return 0.0;
    }
    let mean = sum / count as f64;
    xs.map(|x| (x - mean).powi(2)).sum::<f64>() / count as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedVariable {
    pub name: String,
    /// Max-over-outputs total-order index, the ranking key.
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScreeningReport {
    pub selected: Vec<String>,
    /// Σ selected ST / Σ all ST, per output.
    pub explained_share: IndexMap<String, f64>,
    pub ranking: Vec<RankedVariable>,
    /// Categorical variables enter through their unit-cube embedding, so
    /// their indices are approximate.
    #[serde(default)]
    pub approximate_variables: Vec<String>,
}

/// Ranks variables by max-over-outputs ST (ties keep declaration order) and
/// keeps the top `k`.
pub fn select_top_k(result: &SensitivityResult, k: usize) -> Result<ScreeningReport> {
    let names: Vec<String> = match result.outputs.values().next() {
        Some(o) => o.total_order.keys().cloned().collect(),
        None => return Err(Error::InvalidPlan("sensitivity result has no outputs".into())),
    };
    if k == 0 || k > names.len() {
        return Err(Error::InvalidPlan(format!("top_k = {k} outside 1..={}", names.len())));
    }
    let mut ranking: Vec<RankedVariable> = names
        .iter()
        .map(|name| RankedVariable {
            name: name.clone(),
            score: result
                .outputs
                .values()
                .map(|o| o.total_order[name])
                .fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();
    // stable sort keeps declaration order among ties
    ranking.sort_by(|a, b| b.score.total_cmp(&a.score));
    let selected: Vec<String> = ranking.iter().take(k).map(|r| r.name.clone()).collect();

    let explained_share = result
        .outputs
        .iter()
        .map(|(out, idx)| {
            let total: f64 = idx.total_order.values().sum();
            let kept: f64 = selected.iter().map(|n| idx.total_order[n]).sum();
            let share = if total > 0.0 { kept / total } else { 0.0 };
            (out.clone(), share)
        })
        .collect();
    Ok(ScreeningReport {
        selected,
        explained_share,
        ranking,
        approximate_variables: Vec::new(),
    })
}

impl ScreeningReport {
    /// Plain-text ranked table.
    pub fn to_table(&self, result: &SensitivityResult) -> String {
        let mut s = String::new();
        s.push_str(&format!("{:<4} {:<20} {:>9}", "rank", "variable", "max ST"));
        for out in result.outputs.keys() {
            s.push_str(&format!(" {:>12}", format!("ST[{out}]")));
        }
        s.push('\n');
        for (i, r) in self.ranking.iter().enumerate() {
            let mark = if self.selected.contains(&r.name) { '*' } else { ' ' };
            s.push_str(&format!("{:<4} {:<19}{} {:>9.4}", i + 1, r.name, mark, r.score));
            for idx in result.outputs.values() {
                s.push_str(&format!(" {:>12.4}", idx.total_order[&r.name]));
            }
            s.push('\n');
        }
        for (out, share) in &self.explained_share {
            s.push_str(&format!("explained share [{out}]: {:.2}%\n", share * 100.0));
        }
        s
    }
}
