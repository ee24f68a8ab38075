//! Shallow Bayesian belief network over a complete bipartite DAG: every
//! screened input is a parent of every output. Learned by smoothed maximum
//! likelihood, queried exactly by variable elimination in both directions.

mod cpt;
mod factor;
mod infer;

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use cpt::{CptFallback, SparseCpt};
pub use infer::{MapAssignment, Navigation, Posterior, Recommendation, MAP_STATE_LIMIT};

use crate::dataset::Dataset;
use crate::discretize::{BinLookup, DiscretizationScheme, VariableBins};
use crate::error::{Error, Result};
use crate::sensitivity::{ScreeningReport, SensitivityResult};
use crate::space::{DesignSpace, Value};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BbnStructure {
    pub input_nodes: Vec<String>,
    pub output_nodes: Vec<String>,
    pub edges: Vec<(String, String)>,
}

impl BbnStructure {
    pub fn complete_bipartite(inputs: Vec<String>, outputs: Vec<String>) -> Result<Self> {
        let edges = inputs
            .iter()
            .flat_map(|i| outputs.iter().map(move |o| (i.clone(), o.clone())))
            .collect();
        let s = Self {
            input_nodes: inputs,
            output_nodes: outputs,
            edges,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Error::ModelValidation(format!("structure: {m}"));
        if self.input_nodes.is_empty() || self.output_nodes.is_empty() {
            return Err(bad("needs at least one input and one output".into()));
        }
        let mut names = std::collections::HashSet::new();
        for n in self.input_nodes.iter().chain(&self.output_nodes) {
            if !names.insert(n) {
                return Err(bad(format!("duplicate node `{n}`")));
            }
        }
        if self.edges.len() != self.input_nodes.len() * self.output_nodes.len() {
            return Err(bad(format!(
                "{} edges, a complete bipartite graph has {}",
                self.edges.len(),
                self.input_nodes.len() * self.output_nodes.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for (a, b) in &self.edges {
            if !self.input_nodes.contains(a) || !self.output_nodes.contains(b) {
                return Err(bad(format!("edge {a} → {b} is not input → output")));
            }
            if !seen.insert((a, b)) {
                return Err(bad(format!("duplicate edge {a} → {b}")));
            }
        }
        Ok(())
    }

    pub fn n_inputs(&self) -> usize {
        self.input_nodes.len()
    }

    pub fn n_outputs(&self) -> usize {
        self.output_nodes.len()
    }
}

/// Training rows as bin indices, inputs and outputs in structure order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BinnedData {
    pub inputs: Vec<Vec<u32>>,
    pub outputs: Vec<Vec<u32>>,
}

impl BinnedData {
    /// Bins every row of `ds`. Also returns how many values fell outside
    /// the fitted range and were clamped.
    pub fn from_dataset(ds: &Dataset, structure: &BbnStructure, scheme: &DiscretizationScheme) -> Result<(Self, usize)> {
        let mut clamped = 0;
        let mut bin_all = |name: &str, values: Vec<Value>| -> Result<Vec<u32>> {
            let bins = scheme.get(name)?;
            values
                .iter()
                .map(|v| {
                    let BinLookup { bin, out_of_range } = bins.value_to_bin(v)?;
                    clamped += out_of_range as usize;
                    Ok(bin as u32)
                })
                .collect()
        };
        let in_cols = structure
            .input_nodes
            .iter()
            .map(|n| bin_all(n, ds.decision_values(n)?))
            .collect::<Result<Vec<_>>>()?;
        let out_cols = structure
            .output_nodes
            .iter()
            .map(|n| bin_all(n, ds.real_column(n)?.into_iter().map(Value::Real).collect()))
            .collect::<Result<Vec<_>>>()?;
        let rows = |cols: &[Vec<u32>]| (0..ds.len()).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
        Ok((
            Self {
                inputs: rows(&in_cols),
                outputs: rows(&out_cols),
            },
            clamped,
        ))
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub alpha: f64,
    pub fallback: CptFallback,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            fallback: CptFallback::Marginal,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub n_rows: usize,
    pub alpha: f64,
    pub fallback: CptFallback,
    /// Bins per node.
    pub bins: IndexMap<String, usize>,
    #[serde(default)]
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<DesignSpace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub screening: Option<ScreeningReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityResult>,
}

/// Hard evidence pins a variable to one bin; soft evidence restricts it to
/// a set of admissible bins.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    #[serde(default)]
    pub hard: IndexMap<String, usize>,
    #[serde(default)]
    pub soft: IndexMap<String, Vec<usize>>,
}

impl Evidence {
    pub fn hard(mut self, var: impl Into<String>, bin: usize) -> Self {
        self.hard.insert(var.into(), bin);
        self
    }

    pub fn soft(mut self, var: impl Into<String>, bins: Vec<usize>) -> Self {
        self.soft.insert(var.into(), bins);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BbnModel {
    pub schema_version: u32,
    pub structure: BbnStructure,
    pub priors: IndexMap<String, Vec<f64>>,
    pub cpts: IndexMap<String, SparseCpt>,
    pub scheme: DiscretizationScheme,
    pub metadata: TrainingMetadata,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Node {
    Input(usize),
    Output(usize),
}

fn smoothed_counts(counts: &[u64], alpha: f64) -> Vec<f64> {
    let n: u64 = counts.iter().sum();
    let denom = n as f64 + alpha * counts.len() as f64;
    counts.iter().map(|&c| (c as f64 + alpha) / denom).collect()
}

impl BbnModel {
    pub fn fit(structure: BbnStructure, scheme: DiscretizationScheme, data: &BinnedData, config: FitConfig) -> Result<Self> {
        structure.validate()?;
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if data.outputs.len() != data.inputs.len() {
            return Err(Error::ArityMismatch(format!(
                "{} input rows, {} output rows",
                data.inputs.len(),
                data.outputs.len()
            )));
        }
        if !(config.alpha >= 0.0 && config.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("smoothing α = {} must be ≥ 0", config.alpha)));
        }
        let in_cards = cards_of(&scheme, &structure.input_nodes)?;
        let out_cards = cards_of(&scheme, &structure.output_nodes)?;
        for (r, (x, o)) in data.inputs.iter().zip(&data.outputs).enumerate() {
            if x.len() != in_cards.len() || o.len() != out_cards.len() {
                return Err(Error::ArityMismatch(format!(
                    "row {r}: {} inputs and {} outputs, structure has {} and {}",
                    x.len(),
                    o.len(),
                    in_cards.len(),
                    out_cards.len()
                )));
            }
            let names = structure.input_nodes.iter().chain(&structure.output_nodes);
            for ((&b, &k), name) in x.iter().chain(o).zip(in_cards.iter().chain(&out_cards)).zip(names) {
                if b as usize >= k {
                    return Err(Error::BinIndex {
                        variable: name.clone(),
                        index: b as usize,
                        bins: k,
                    });
                }
            }
        }

        let priors = structure
            .input_nodes
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let mut counts = vec![0u64; in_cards[i]];
                for x in &data.inputs {
                    counts[x[i] as usize] += 1;
                }
                (name.clone(), smoothed_counts(&counts, config.alpha))
            })
            .collect();
        let cpts = structure
            .output_nodes
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let col: Vec<u32> = data.outputs.iter().map(|o| o[k]).collect();
                let cpt = SparseCpt::fit(
                    structure.input_nodes.clone(),
                    in_cards.clone(),
                    out_cards[k],
                    &data.inputs,
                    &col,
                    config.alpha,
                    config.fallback,
                );
                (name.clone(), cpt)
            })
            .collect();
        let bins = structure
            .input_nodes
            .iter()
            .zip(&in_cards)
            .chain(structure.output_nodes.iter().zip(&out_cards))
            .map(|(n, &k)| (n.clone(), k))
            .collect();
        let model = Self {
            schema_version: SCHEMA_VERSION,
            structure,
            priors,
            cpts,
            scheme,
            metadata: TrainingMetadata {
                n_rows: data.len(),
                alpha: config.alpha,
                fallback: config.fallback,
                bins,
                ..Default::default()
            },
        };
        Ok(model)
    }

    /// Fits a scheme-binned dataset.
    pub fn fit_dataset(ds: &Dataset, structure: BbnStructure, scheme: DiscretizationScheme, config: FitConfig) -> Result<Self> {
        let (data, clamped) = BinnedData::from_dataset(ds, &structure, &scheme)?;
        if clamped > 0 {
            log::warn!("{clamped} training values outside the fitted bin ranges were clamped");
        }
        Self::fit(structure, scheme, &data, config)
    }

    pub(crate) fn node(&self, name: &str) -> Result<Node> {
        if let Some(i) = self.structure.input_nodes.iter().position(|n| n == name) {
            return Ok(Node::Input(i));
        }
        if let Some(o) = self.structure.output_nodes.iter().position(|n| n == name) {
            return Ok(Node::Output(o));
        }
        Err(Error::UnknownVariable(name.to_string()))
    }

    pub(crate) fn node_name(&self, var: usize) -> &str {
        let d = self.structure.n_inputs();
        if var < d {
            &self.structure.input_nodes[var]
        } else {
            &self.structure.output_nodes[var - d]
        }
    }

    /// Number of bins of a node, by global index (inputs first).
    pub(crate) fn card(&self, var: usize) -> usize {
        let d = self.structure.n_inputs();
        if var < d {
            self.priors[var].len()
        } else {
            self.cpts[var - d].cardinality()
        }
    }

    pub fn n_bins(&self, name: &str) -> Result<usize> {
        Ok(self.card(self.var_index(name)?))
    }

    pub(crate) fn var_index(&self, name: &str) -> Result<usize> {
        Ok(match self.node(name)? {
            Node::Input(i) => i,
            Node::Output(o) => self.structure.n_inputs() + o,
        })
    }

    pub fn bins(&self, name: &str) -> Result<&VariableBins> {
        self.node(name)?;
        self.scheme.get(name)
    }

    pub fn label(&self, name: &str, bin: usize) -> Result<String> {
        let b = self.bins(name)?;
        b.labels.get(bin).cloned().ok_or_else(|| Error::BinIndex {
            variable: name.to_string(),
            index: bin,
            bins: b.k(),
        })
    }

    /// Bins of `name` whose interval intersects `[lo, hi]` in physical units.
    pub fn bins_for_range(&self, name: &str, lo: f64, hi: f64) -> Result<Vec<usize>> {
        let b = self.bins(name)?;
        if b.is_categorical() {
            return Err(Error::InvalidEvidence(format!("`{name}` is categorical; ranges need a continuous variable")));
        }
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            return Err(Error::InvalidEvidence(format!("`{name}`: invalid range [{lo}, {hi}]")));
        }
        let bins = b.bins_intersecting(lo, hi);
        if bins.is_empty() {
            return Err(Error::InvalidEvidence(format!(
                "`{name}`: range [{lo}, {hi}] misses every bin ({} to {})",
                b.edges[0],
                b.edges[b.edges.len() - 1]
            )));
        }
        Ok(bins)
    }

    /// Bin of a physical value, clamping (and flagging) out-of-range values.
    pub fn bin_of_value(&self, name: &str, value: &Value) -> Result<BinLookup> {
        self.bins(name)?.value_to_bin(value)
    }

    pub(crate) fn joint_of(&self, inputs: &[u32], outputs: &[u32]) -> f64 {
        let mut p = 1.0;
        for (prior, &b) in self.priors.values().zip(inputs) {
            p *= prior[b as usize];
        }
        for (cpt, &b) in self.cpts.values().zip(outputs) {
            p *= cpt.lookup(inputs)[b as usize];
        }
        p
    }

    /// `∏ prior(input bins) · ∏ P(output bin | input bins)`.
    pub fn joint_probability(&self, assignment: &IndexMap<String, usize>) -> Result<f64> {
        for name in assignment.keys() {
            self.node(name)?;
        }
        let mut get = |name: &String| -> Result<u32> {
            let b = *assignment
                .get(name)
                .ok_or_else(|| Error::IncompleteAssignment(name.clone()))?;
            let k = self.card(self.var_index(name)?);
            if b >= k {
                return Err(Error::BinIndex {
                    variable: name.clone(),
                    index: b,
                    bins: k,
                });
            }
            Ok(b as u32)
        };
        let inputs = self.structure.input_nodes.iter().map(&mut get).collect::<Result<Vec<_>>>()?;
        let outputs = self.structure.output_nodes.iter().map(&mut get).collect::<Result<Vec<_>>>()?;
        Ok(self.joint_of(&inputs, &outputs))
    }

    /// Expected bin midpoint of each output given every input's bin: the
    /// point prediction of the forward posterior.
    pub fn predict_expected(&self, inputs: &[u32]) -> Result<Vec<f64>> {
        if inputs.len() != self.structure.n_inputs() {
            return Err(Error::ArityMismatch(format!(
                "{} input bins for {} inputs",
                inputs.len(),
                self.structure.n_inputs()
            )));
        }
        self.structure
            .output_nodes
            .iter()
            .zip(self.cpts.values())
            .map(|(name, cpt)| {
                let bins = self.scheme.get(name)?;
                cpt.lookup(inputs)
                    .iter()
                    .enumerate()
                    .map(|(j, p)| Ok(p * bins.bin_midpoint(j)?))
                    .sum()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        self.structure.validate()?;
        self.scheme.validate()?;
        let bad = |m: String| Error::ModelValidation(m);
        let in_cards = cards_of(&self.scheme, &self.structure.input_nodes)?;
        let out_cards = cards_of(&self.scheme, &self.structure.output_nodes)?;
        if self.priors.keys().ne(self.structure.input_nodes.iter()) {
            return Err(bad("priors must list the input nodes in order".into()));
        }
        for ((name, prior), &k) in self.priors.iter().zip(&in_cards) {
            if prior.len() != k {
                return Err(bad(format!("prior `{name}` has {} entries for {k} bins", prior.len())));
            }
            if prior.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(bad(format!("prior `{name}` has a negative or non-finite entry")));
            }
            let s: f64 = prior.iter().sum();
            if (s - 1.0).abs() > cpt::SUM_TOLERANCE {
                return Err(bad(format!("prior `{name}` sums to {s}")));
            }
        }
        if self.cpts.keys().ne(self.structure.output_nodes.iter()) {
            return Err(bad("cpts must list the output nodes in order".into()));
        }
        for ((name, cpt), &k) in self.cpts.iter().zip(&out_cards) {
            if cpt.parents() != self.structure.input_nodes.as_slice() {
                return Err(bad(format!("cpt `{name}`: parents differ from the input nodes")));
            }
            if cpt.cardinality() != k {
                return Err(bad(format!("cpt `{name}` has {} states for {k} bins", cpt.cardinality())));
            }
            cpt.validate(name)?;
            if cpt.parent_cards() != in_cards.as_slice() {
                return Err(bad(format!("cpt `{name}`: parent cardinalities differ from the scheme")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn cards_of(scheme: &DiscretizationScheme, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            scheme
                .get(n)
                .map(VariableBins::k)
                .map_err(|_| Error::ModelValidation(format!("scheme has no bins for node `{n}`")))
        })
        .collect()
}
