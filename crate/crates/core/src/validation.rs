//! k-fold cross-validation of the network with NRMSE, MAPE and PA.

use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbn::{BbnModel, BbnStructure, BinnedData, FitConfig};
use crate::dataset::Dataset;
use crate::discretize::{BinningMethod, DiscretizationScheme};
use crate::error::{Error, Result};

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    /// Fold index of every row.
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    /// Row indices of fold `f`, ascending.
    pub fn test_rows(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&r| self.assignments[r] == f).collect()
    }

    pub fn train_rows(&self, f: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&r| self.assignments[r] != f).collect()
    }
}

/// Seeded shuffle, then round-robin assignment.
pub fn make_folds(n_rows: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidFolds(format!("k = {k}, need at least 2")));
    }
    if n_rows < k {
        return Err(Error::InvalidFolds(format!("{n_rows} rows cannot fill {k} folds")));
    }
    let mut perm: Vec<usize> = (0..n_rows).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n_rows];
    for (j, &r) in perm.iter().enumerate() {
        assignments[r] = j % k;
    }
    Ok(FoldPlan { k, seed, assignments })
}

fn check_lengths(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.is_empty() || actual.len() != predicted.len() {
        return Err(Error::UndefinedMetric(format!(
            "{} actual and {} predicted values",
            actual.len(),
            predicted.len()
        )));
    }
    Ok(())
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// RMSE divided by the population standard deviation of the actuals.
pub fn nrmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let sd = population_std(actual);
    if !(sd > 0.0) {
        return Err(Error::UndefinedMetric("actual values have zero standard deviation".into()));
    }
    let mse = actual.iter().zip(predicted).map(|(a, p)| (a - p).powi(2)).sum::<f64>() / actual.len() as f64;
    Ok(mse.sqrt() / sd)
}

/// Mean of `|a − p| / |a|`, as a ratio.
pub fn mape(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_lengths(actual, predicted)?;
    let zeros: Vec<usize> = (0..actual.len()).filter(|&i| actual[i] == 0.0).collect();
    if !zeros.is_empty() {
        let shown: Vec<String> = zeros.iter().take(20).map(usize::to_string).collect();
        let more = if zeros.len() > 20 { ", ..." } else { "" };
        return Err(Error::UndefinedMetric(format!(
            "{} zero actual values at indices {}{more}",
            zeros.len(),
            shown.join(", ")
        )));
    }
    Ok(actual.iter().zip(predicted).map(|(a, p)| ((a - p) / a).abs()).sum::<f64>() / actual.len() as f64)
}

/// `PA = 100·y′ / (100·y − y′)` for actual `y` and prediction `y′`. Kept
/// for comparability with published figures; its dimensional form is
/// questionable and reports flag it.
pub fn prediction_accuracy(y: f64, y_pred: f64) -> Result<f64> {
    let denom = 100.0 * y - y_pred;
    if denom == 0.0 {
        return Err(Error::UndefinedMetric(format!("PA undefined: 100·{y} = {y_pred}")));
    }
    Ok(100.0 * y_pred / denom)
}

/// Mean PA over the rows where it is defined.
fn pa_mean(actual: &[f64], predicted: &[f64]) -> Option<f64> {
    let vals: Vec<f64> = actual
        .iter()
        .zip(predicted)
        .filter_map(|(&a, &p)| prediction_accuracy(a, p).ok())
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    /// Network inputs, usually the screened decision variables.
    pub inputs: Vec<String>,
    pub bins: usize,
    pub method: BinningMethod,
    pub fit: FitConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldOutputMetrics {
    pub nrmse: f64,
    pub mape: f64,
    pub pa_mean: Option<f64>,
    /// NRMSE of predicting every actual by its own bin midpoint.
    pub quantization_nrmse: f64,
    /// Share of test rows answered by a full-configuration CPT row.
    pub coverage: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Test values outside the fold's fitted bin ranges.
    pub clamped: usize,
    pub outputs: IndexMap<String, FoldOutputMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub actual: Vec<usize>,
    pub predicted: Vec<usize>,
}

impl Histogram {
    fn new(actual: &[f64], predicted: &[f64], bins: usize) -> Self {
        let lo = actual.iter().chain(predicted).copied().fold(f64::INFINITY, f64::min);
        let hi = actual.iter().chain(predicted).copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut edges: Vec<f64> = (0..bins).map(|j| lo + width * j as f64).collect();
        edges.push(if hi > lo { hi } else { lo + 1.0 });
        let count = |xs: &[f64]| {
            let mut c = vec![0; bins];
            for &x in xs {
                c[(((x - lo) / width) as usize).min(bins - 1)] += 1;
            }
            c
        };
        Self {
            actual: count(actual),
            predicted: count(predicted),
            edges,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputReport {
    /// Fold averages.
    pub nrmse: f64,
    pub mape: f64,
    pub quantization_nrmse: f64,
    pub coverage: f64,
    /// Row average of PA where defined.
    pub pa_mean: Option<f64>,
    /// PA's dimensional form is disputed; read it with care.
    pub pa_disputed: bool,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub k: usize,
    pub seed: u64,
    pub n_rows: usize,
    #[serde(default)]
    pub config_hash: String,
    pub outputs: IndexMap<String, OutputReport>,
    pub folds: Vec<FoldMetrics>,
}

struct FoldResult {
    metrics: FoldMetrics,
    rows: Vec<usize>,
    predictions: Vec<Vec<f64>>,
}

fn run_fold(ds: &Dataset, cfg: &CvConfig, plan: &FoldPlan, fold: usize) -> Result<FoldResult> {
    let train_rows = plan.train_rows(fold);
    let test_rows = plan.test_rows(fold);
    if train_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::InvalidFolds(format!("fold {fold} is empty")));
    }
    let train = ds.subset(&train_rows);
    let test = ds.subset(&test_rows);
    let outputs = ds.space.output_names();
    let nodes: Vec<String> = cfg.inputs.iter().chain(&outputs).cloned().collect();
    let scheme = DiscretizationScheme::fit_dataset(&train, &nodes, cfg.bins, cfg.method)?;
    let structure = BbnStructure::complete_bipartite(cfg.inputs.clone(), outputs.clone())?;
    let model = BbnModel::fit_dataset(&train, structure.clone(), scheme.clone(), cfg.fit)?;
    let (binned, clamped) = BinnedData::from_dataset(&test, &structure, &scheme)?;

    let predictions = binned
        .inputs
        .iter()
        .map(|x| model.predict_expected(x))
        .collect::<Result<Vec<_>>>()?;
    let mut out_metrics = IndexMap::new();
    for (k, name) in outputs.iter().enumerate() {
        let actual = test.real_column(name)?;
        let predicted: Vec<f64> = predictions.iter().map(|p| p[k]).collect();
        let bins = scheme.get(name)?;
        let quantized = actual
            .iter()
            .map(|&a| bins.bin_midpoint(bins.to_bin(a).bin))
            .collect::<Result<Vec<_>>>()?;
        let cpt = &model.cpts[name];
        let full = binned
            .inputs
            .iter()
            .filter(|x| cpt.lookup_with_level(x).1 == cfg.inputs.len())
            .count();
        out_metrics.insert(
            name.clone(),
            FoldOutputMetrics {
                nrmse: nrmse(&actual, &predicted)?,
                mape: mape(&actual, &predicted)?,
                pa_mean: pa_mean(&actual, &predicted),
                quantization_nrmse: nrmse(&actual, &quantized)?,
                coverage: full as f64 / test_rows.len() as f64,
            },
        );
    }
    Ok(FoldResult {
        metrics: FoldMetrics {
            fold,
            n_train: train_rows.len(),
            n_test: test_rows.len(),
            clamped,
            outputs: out_metrics,
        },
        rows: test_rows,
        predictions,
    })
}

/// Fits scheme and network on each fold's complement and predicts the
/// held-out rows by the expected bin midpoint of the forward posterior.
pub fn cross_validate(ds: &Dataset, cfg: &CvConfig, plan: &FoldPlan) -> Result<ValidationReport> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if plan.assignments.len() != ds.len() {
        return Err(Error::InvalidFolds(format!(
            "plan covers {} rows, dataset has {}",
            plan.assignments.len(),
            ds.len()
        )));
    }
    let results = (0..plan.k)
        .into_par_iter()
        .map(|f| run_fold(ds, cfg, plan, f))
        .collect::<Result<Vec<_>>>()?;

    // pooled predictions in dataset row order
    let q = ds.space.n_outputs();
    let mut pooled = vec![vec![0.0; q]; ds.len()];
    for r in &results {
        for (&row, p) in r.rows.iter().zip(&r.predictions) {
            pooled[row] = p.clone();
        }
    }
    let mean_of = |name: &str, f: &dyn Fn(&FoldOutputMetrics) -> f64| {
        results.iter().map(|r| f(&r.metrics.outputs[name])).sum::<f64>() / results.len() as f64
    };
    let mut outputs = IndexMap::new();
    for (k, name) in ds.space.output_names().iter().enumerate() {
        let actual = ds.real_column(name)?;
        let predicted: Vec<f64> = pooled.iter().map(|p| p[k]).collect();
        outputs.insert(
            name.clone(),
            OutputReport {
                nrmse: mean_of(name, &|m| m.nrmse),
                mape: mean_of(name, &|m| m.mape),
                quantization_nrmse: mean_of(name, &|m| m.quantization_nrmse),
                coverage: mean_of(name, &|m| m.coverage),
                pa_mean: pa_mean(&actual, &predicted),
                pa_disputed: true,
                histogram: Histogram::new(&actual, &predicted, HISTOGRAM_BINS),
            },
        );
    }
    Ok(ValidationReport {
        k: plan.k,
        seed: plan.seed,
        n_rows: ds.len(),
        config_hash: ds.provenance.config_hash.clone(),
        outputs,
        folds: results.into_iter().map(|r| r.metrics).collect(),
    })
}

impl ValidationReport {
    /// Plain-text summary, metrics as ratios and as percentages.
    pub fn to_table(&self) -> String {
        let mut s = format!("{}-fold cross-validation, {} rows\n", self.k, self.n_rows);
        s.push_str(&format!(
            "{:<10} {:>8} {:>9} {:>8} {:>9} {:>12} {:>9} {:>12}\n",
            "output", "NRMSE", "NRMSE %", "MAPE", "MAPE %", "quant NRMSE", "coverage", "PA mean*"
        ));
        for (name, o) in &self.outputs {
            let pa = o.pa_mean.map_or("n/a".to_string(), |v| format!("{v:.4}"));
            s.push_str(&format!(
                "{:<10} {:>8.4} {:>8.2}% {:>8.4} {:>8.2}% {:>12.4} {:>9.3} {:>12}\n",
                name,
                o.nrmse,
                o.nrmse * 100.0,
                o.mape,
                o.mape * 100.0,
                o.quantization_nrmse,
                o.coverage,
                pa
            ));
        }
        s.push_str("* PA = 100·y′/(100·y − y′); dimensional form disputed\n");
        s
    }
}
