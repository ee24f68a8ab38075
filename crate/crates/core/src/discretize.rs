//! Equal-frequency (and opt-in equal-width) binning of variables into the
//! discrete states the belief network works on.

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::space::{Value, VariableKind, VariableSpec};

pub const DEFAULT_BINS: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningMethod {
    #[default]
    EqualFrequency,
    EqualWidth,
}

/// Result of mapping a value to a bin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinLookup {
    pub bin: usize,
    /// The value lay outside the fitted range and was clamped.
    pub out_of_range: bool,
}

/// Edges at the empirical `j/k` quantiles. Each interior edge sits midway
/// between the two order statistics around its cut, so distinct-valued data
/// fills the half-open bins with counts that differ by at most one. Cuts
/// that land inside a run of tied values collapse, shrinking `k`.
pub fn fit_equal_frequency(variable: &str, values: &[f64], k: usize) -> Result<Vec<f64>> {
    let sorted = sorted_finite(variable, values, k)?;
    let n = sorted.len();
    let mut edges = Vec::with_capacity(k + 1);
    edges.push(sorted[0]);
    for j in 1..k {
        // round(j·n/k) in integers
        let c = (2 * j * n + k) / (2 * k);
        let c = c.clamp(1, n - 1);
        let (below, above) = (sorted[c - 1], sorted[c]);
        edges.push(if below < above { below + (above - below) / 2.0 } else { above });
    }
    edges.push(sorted[n - 1]);
    finish_edges(variable, edges, k)
}

/// `k` bins of equal width over `[min, max]` of the data.
pub fn fit_equal_width(variable: &str, values: &[f64], k: usize) -> Result<Vec<f64>> {
    let sorted = sorted_finite(variable, values, k)?;
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    let mut edges: Vec<f64> = (0..k).map(|j| lo + (hi - lo) * j as f64 / k as f64).collect();
    edges.push(hi);
    finish_edges(variable, edges, k)
}

fn sorted_finite(variable: &str, values: &[f64], k: usize) -> Result<Vec<f64>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("training values of `{variable}`")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let distinct = if sorted.is_empty() {
        0
    } else {
        1 + sorted.windows(2).filter(|w| w[0] < w[1]).count()
    };
    if k < 2 || distinct < k {
        return Err(Error::DegenerateBinning {
            variable: variable.to_string(),
            distinct,
            requested: k,
        });
    }
    Ok(sorted)
}

fn finish_edges(variable: &str, mut edges: Vec<f64>, requested: usize) -> Result<Vec<f64>> {
    let last = *edges.last().expect("at least two edges");
    edges.dedup();
    // an interior edge equal to the maximum merges into the closed last bin
    while edges.len() > 2 && edges[edges.len() - 2] >= last {
        edges.remove(edges.len() - 2);
    }
    let k = edges.len() - 1;
    if k < 2 {
        return Err(Error::DegenerateBinning {
            variable: variable.to_string(),
            distinct: k,
            requested,
        });
    }
    if k < requested {
        log::warn!("`{variable}`: tied quantile edges collapsed, {requested} bins reduced to {k}");
    }
    Ok(edges)
}

/// Fitted bins of one variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableBins {
    pub variable: String,
    #[serde(default = "continuous_kind")]
    pub kind: VariableKind,
    /// `k + 1` strictly increasing edges; empty for categorical variables,
    /// whose bins are the categories in declaration order.
    pub edges: Vec<f64>,
    pub labels: Vec<String>,
}

fn continuous_kind() -> VariableKind {
    VariableKind::Continuous
}

impl VariableBins {
    pub fn continuous(variable: impl Into<String>, edges: Vec<f64>, unit: &str) -> Result<Self> {
        let variable = variable.into();
        if edges.len() < 3 || edges.windows(2).any(|w| w[0] >= w[1]) || edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::ModelValidation(format!(
                "`{variable}`: edges must be ≥3 strictly increasing finite values"
            )));
        }
        let labels = range_labels(&edges, unit);
        Ok(Self {
            variable,
            kind: VariableKind::Continuous,
            edges,
            labels,
        })
    }

    pub fn categorical(spec: &VariableSpec) -> Self {
        Self {
            variable: spec.name.clone(),
            kind: VariableKind::Categorical,
            edges: Vec::new(),
            labels: spec.categories.clone(),
        }
    }

    /// Fits bins from training values. Categorical specs ignore the values.
    pub fn fit(spec: &VariableSpec, values: &[f64], k: usize, method: BinningMethod) -> Result<Self> {
        if spec.is_categorical() {
            return Ok(Self::categorical(spec));
        }
        let edges = match method {
            BinningMethod::EqualFrequency => fit_equal_frequency(&spec.name, values, k)?,
            BinningMethod::EqualWidth => fit_equal_width(&spec.name, values, k)?,
        };
        Self::continuous(spec.name.clone(), edges, &spec.unit)
    }

    pub fn k(&self) -> usize {
        self.labels.len()
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == VariableKind::Categorical
    }

    /// Half-open `[e_j, e_{j+1})` membership with a closed last bin; values
    /// outside the fitted span clamp to the boundary bins.
    pub fn to_bin(&self, value: f64) -> BinLookup {
        if self.is_categorical() {
            // category index given as a number
            let k = self.k();
            let idx = value.floor();
            let out_of_range = !(0.0..k as f64).contains(&idx);
            return BinLookup {
                bin: idx.clamp(0.0, (k - 1) as f64) as usize,
                out_of_range,
            };
        }
        let k = self.edges.len() - 1;
        let (lo, hi) = (self.edges[0], self.edges[k]);
        if value < lo {
            return BinLookup { bin: 0, out_of_range: true };
        }
        if value > hi {
            return BinLookup {
                bin: k - 1,
                out_of_range: true,
            };
        }
        // number of interior edges ≤ value
        let bin = self.edges[1..k].partition_point(|&e| e <= value);
        BinLookup {
            bin,
            out_of_range: false,
        }
    }

    pub fn value_to_bin(&self, value: &Value) -> Result<BinLookup> {
        match (self.kind, value) {
            (VariableKind::Continuous, Value::Real(x)) => Ok(self.to_bin(*x)),
            (VariableKind::Categorical, Value::Label(l)) => self
                .labels
                .iter()
                .position(|c| c == l)
                .map(|bin| BinLookup {
                    bin,
                    out_of_range: false,
                })
                .ok_or_else(|| Error::OutOfRange {
                    name: self.variable.clone(),
                    detail: format!("`{l}` is not a category"),
                }),
            _ => Err(Error::OutOfRange {
                name: self.variable.clone(),
                detail: format!("value {value} has the wrong kind"),
            }),
        }
    }

    fn check_index(&self, bin: usize) -> Result<()> {
        if bin >= self.k() {
            return Err(Error::BinIndex {
                variable: self.variable.clone(),
                index: bin,
                bins: self.k(),
            });
        }
        Ok(())
    }

    pub fn bin_midpoint(&self, bin: usize) -> Result<f64> {
        self.check_index(bin)?;
        if self.is_categorical() {
            return Err(Error::OutOfRange {
                name: self.variable.clone(),
                detail: "categorical bins have no midpoint".into(),
            });
        }
        Ok(self.edges[bin] + (self.edges[bin + 1] - self.edges[bin]) / 2.0)
    }

    /// The value a bin stands for when re-simulating: the midpoint, or the
    /// category label.
    pub fn representative(&self, bin: usize) -> Result<Value> {
        self.check_index(bin)?;
        if self.is_categorical() {
            Ok(Value::Label(self.labels[bin].clone()))
        } else {
            self.bin_midpoint(bin).map(Value::Real)
        }
    }

    pub fn bin_bounds(&self, bin: usize) -> Result<(f64, f64)> {
        self.check_index(bin)?;
        if self.is_categorical() {
            return Ok((bin as f64, bin as f64 + 1.0));
        }
        Ok((self.edges[bin], self.edges[bin + 1]))
    }

    /// Bins whose interval intersects `[lo, hi]`.
    pub fn bins_intersecting(&self, lo: f64, hi: f64) -> Vec<usize> {
        if self.is_categorical() || hi < lo {
            return Vec::new();
        }
        let k = self.k();
        (0..k)
            .filter(|&j| {
                let (a, b) = (self.edges[j], self.edges[j + 1]);
                let below_upper = if j + 1 == k { lo <= b } else { lo < b };
                below_upper && hi >= a
            })
            .collect()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self.kind {
            VariableKind::Continuous => {
                let again = Self::continuous(self.variable.clone(), self.edges.clone(), "")?;
                if again.labels.len() != self.labels.len() {
                    return Err(Error::ModelValidation(format!(
                        "`{}`: {} labels for {} bins",
                        self.variable,
                        self.labels.len(),
                        again.labels.len()
                    )));
                }
            }
            VariableKind::Categorical => {
                if self.labels.is_empty() || !self.edges.is_empty() {
                    return Err(Error::ModelValidation(format!(
                        "`{}`: categorical bins need labels and no edges",
                        self.variable
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Range labels: `[lo, hi)` for interior bins and `[lo, hi]` for the last.
pub fn range_labels(edges: &[f64], unit: &str) -> Vec<String> {
    let k = edges.len() - 1;
    let suffix = if unit.is_empty() || unit == "-" {
        String::new()
    } else {
        format!(" {unit}")
    };
    (0..k)
        .map(|j| {
            let close = if j + 1 == k { ']' } else { ')' };
            format!("[{}, {}{close}{suffix}", format_edge(edges[j]), format_edge(edges[j + 1]))
        })
        .collect()
}

fn format_edge(x: f64) -> String {
    let s = format!("{:.2}", x);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Per-variable bins for every node of a network, in node order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationScheme {
    pub variables: Vec<VariableBins>,
}

impl DiscretizationScheme {
    /// Fits bins for `variables` (decisions or outputs) from dataset columns.
    pub fn fit_dataset(ds: &Dataset, variables: &[String], k: usize, method: BinningMethod) -> Result<Self> {
        let variables = variables
            .iter()
            .map(|name| {
                let spec = ds.space.spec(name).ok_or_else(|| Error::UnknownVariable(name.clone()))?;
                if spec.is_categorical() {
                    Ok(VariableBins::categorical(spec))
                } else {
                    VariableBins::fit(spec, &ds.real_column(name)?, k, method)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { variables })
    }

    pub fn get(&self, variable: &str) -> Result<&VariableBins> {
        self.variables
            .iter()
            .find(|v| v.variable == variable)
            .ok_or_else(|| Error::UnknownVariable(variable.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.variables.iter().try_for_each(VariableBins::validate)
    }
}
