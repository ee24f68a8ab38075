//! Design-space vocabulary: variable specs, decision and performance
//! vectors, and the unit-cube embedding every sampler and binner works in.

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    Continuous,
    Categorical,
}

/// One named decision or performance variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default)]
    pub unit: String,
}

impl VariableSpec {
    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64, unit: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Continuous,
            lower: Some(lower),
            upper: Some(upper),
            categories: Vec::new(),
            unit: unit.into(),
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            kind: VariableKind::Categorical,
            lower: None,
            upper: None,
            categories: categories.into_iter().map(Into::into).collect(),
            unit: String::new(),
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == VariableKind::Categorical
    }

    /// `(lower, upper)` of a continuous spec.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match (self.kind, self.lower, self.upper) {
            (VariableKind::Continuous, Some(lo), Some(hi)) => Some((lo, hi)),
            _ => None,
        }
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Error::InvalidSpec {
            name: self.name.clone(),
            reason: reason.to_string(),
        };
        if self.name.is_empty() {
            return Err(bad("empty name"));
        }
        match self.kind {
            VariableKind::Continuous => {
                let (lo, hi) = match (self.lower, self.upper) {
                    (Some(lo), Some(hi)) => (lo, hi),
                    _ => return Err(bad("continuous variable needs lower and upper")),
                };
                if !(lo.is_finite() && hi.is_finite()) {
                    return Err(bad("bounds must be finite"));
                }
                if lo >= hi {
                    return Err(bad("lower must be < upper"));
                }
                if !self.categories.is_empty() {
                    return Err(bad("continuous variable cannot list categories"));
                }
            }
            VariableKind::Categorical => {
                if self.categories.is_empty() {
                    return Err(bad("categorical variable needs categories"));
                }
                let unique: HashSet<&String> = self.categories.iter().collect();
                if unique.len() != self.categories.len() {
                    return Err(bad("duplicate category"));
                }
                if self.lower.is_some() || self.upper.is_some() {
                    return Err(bad("categorical variable cannot carry bounds"));
                }
            }
        }
        Ok(())
    }

    /// Number of discrete states a categorical variable has.
    pub fn cardinality(&self) -> Option<usize> {
        self.is_categorical().then_some(self.categories.len())
    }
}

/// A single decision value: a real number or a category label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Real(f64),
    Label(String),
}

impl Value {
    pub fn as_real(&self) -> Option<f64> {
        match self {
            Value::Real(v) => Some(*v),
            Value::Label(_) => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            Value::Label(s) => Some(s),
            Value::Real(_) => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Real(v) => write!(f, "{v}"),
            Value::Label(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Label(s.to_string())
    }
}

/// Ordered decision values, one per decision spec of the owning space.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionVector {
    pub values: Vec<Value>,
}

impl DecisionVector {
    pub fn new(values: Vec<Value>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ordered outcome values, one per performance spec of the owning space.
#[derive(Clone, Debug, PartialEq)]
pub struct PerformanceVector {
    pub values: Vec<f64>,
}

impl PerformanceVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// The ordered pair of decision space and performance space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignSpace {
    #[serde(rename = "decision")]
    pub decision_specs: Vec<VariableSpec>,
    #[serde(rename = "performance")]
    pub performance_specs: Vec<VariableSpec>,
}

impl DesignSpace {
    pub fn new(decision_specs: Vec<VariableSpec>, performance_specs: Vec<VariableSpec>) -> Result<Self> {
        let space = Self {
            decision_specs,
            performance_specs,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.decision_specs.is_empty() || self.performance_specs.is_empty() {
            return Err(Error::InvalidSpace("both spaces must be non-empty".into()));
        }
        let mut names = HashSet::new();
        for spec in self.decision_specs.iter().chain(&self.performance_specs) {
            spec.validate()?;
            if !names.insert(spec.name.as_str()) {
                return Err(Error::InvalidSpace(format!("duplicate variable name `{}`", spec.name)));
            }
        }
        if let Some(cat) = self.performance_specs.iter().find(|s| s.is_categorical()) {
            return Err(Error::InvalidSpace(format!(
                "performance variable `{}` must be continuous",
                cat.name
            )));
        }
        Ok(())
    }

    /// n, the decision dimension.
    pub fn n_decisions(&self) -> usize {
        self.decision_specs.len()
    }

    /// q, the performance dimension.
    pub fn n_outputs(&self) -> usize {
        self.performance_specs.len()
    }

    pub fn decision_index(&self, name: &str) -> Result<usize> {
        self.decision_specs
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn output_index(&self, name: &str) -> Result<usize> {
        self.performance_specs
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn decision_names(&self) -> Vec<String> {
        self.decision_specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn output_names(&self) -> Vec<String> {
        self.performance_specs.iter().map(|s| s.name.clone()).collect()
    }

    /// Looks a variable up in either space.
    pub fn spec(&self, name: &str) -> Option<&VariableSpec> {
        self.decision_specs
            .iter()
            .chain(&self.performance_specs)
            .find(|s| s.name == name)
    }

    pub fn validate_decision(&self, v: &DecisionVector) -> Result<()> {
        if v.len() != self.n_decisions() {
            return Err(Error::DimensionMismatch {
                expected: self.n_decisions(),
                actual: v.len(),
            });
        }
        for (spec, value) in self.decision_specs.iter().zip(&v.values) {
            check_value(spec, value)?;
        }
        Ok(())
    }

    pub fn validate_performance(&self, o: &PerformanceVector) -> Result<()> {
        if o.values.len() != self.n_outputs() {
            return Err(Error::DimensionMismatch {
                expected: self.n_outputs(),
                actual: o.values.len(),
            });
        }
        for (spec, v) in self.performance_specs.iter().zip(&o.values) {
            if !v.is_finite() {
                return Err(Error::NonFinite(spec.name.clone()));
            }
        }
        Ok(())
    }

    /// Maps a decision vector into the unit cube. Continuous values go through
    /// the affine range map; categorical values sit at `(index + 0.5) / k`.
    pub fn normalize(&self, v: &DecisionVector) -> Result<Vec<f64>> {
        self.validate_decision(v)?;
        Ok(self
            .decision_specs
            .iter()
            .zip(&v.values)
            .map(|(spec, value)| match (spec.kind, value) {
                (VariableKind::Continuous, Value::Real(x)) => {
                    let (lo, hi) = spec.bounds().expect("validated");
                    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
                }
                (VariableKind::Categorical, Value::Label(label)) => {
                    let idx = spec.category_index(label).expect("validated");
                    (idx as f64 + 0.5) / spec.categories.len() as f64
                }
                _ => unreachable!("validated"),
            })
            .collect())
    }

    /// Inverse of [`normalize`](Self::normalize); categorical coordinates snap
    /// to `floor(u * k)` clamped to the last category.
    pub fn denormalize(&self, u: &[f64]) -> Result<DecisionVector> {
        if u.len() != self.n_decisions() {
            return Err(Error::DimensionMismatch {
                expected: self.n_decisions(),
                actual: u.len(),
            });
        }
        let mut values = Vec::with_capacity(u.len());
        for (spec, &x) in self.decision_specs.iter().zip(u) {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::OutOfRange {
                    name: spec.name.clone(),
                    detail: format!("normalized coordinate {x} outside [0, 1]"),
                });
            }
            values.push(denormalize_one(spec, x));
        }
        Ok(DecisionVector { values })
    }

    /// Builds a decision vector from a name → value map, requiring every
    /// decision variable.
    pub fn decision_from_map(&self, map: &IndexMap<String, Value>) -> Result<DecisionVector> {
        for key in map.keys() {
            self.decision_index(key)?;
        }
        let values = self
            .decision_specs
            .iter()
            .map(|spec| {
                map.get(&spec.name)
                    .cloned()
                    .ok_or_else(|| Error::IncompleteAssignment(spec.name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let v = DecisionVector { values };
        self.validate_decision(&v)?;
        Ok(v)
    }

    pub fn decision_to_map(&self, v: &DecisionVector) -> IndexMap<String, Value> {
        self.decision_specs
            .iter()
            .zip(&v.values)
            .map(|(s, x)| (s.name.clone(), x.clone()))
            .collect()
    }

    pub fn performance_from_map(&self, map: &IndexMap<String, f64>) -> Result<PerformanceVector> {
        for key in map.keys() {
            self.output_index(key)?;
        }
        let values = self
            .performance_specs
            .iter()
            .map(|spec| {
                map.get(&spec.name)
                    .copied()
                    .ok_or_else(|| Error::IncompleteAssignment(spec.name.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let o = PerformanceVector { values };
        self.validate_performance(&o)?;
        Ok(o)
    }

    pub fn performance_to_map(&self, o: &PerformanceVector) -> IndexMap<String, f64> {
        self.performance_specs
            .iter()
            .zip(&o.values)
            .map(|(s, x)| (s.name.clone(), *x))
            .collect()
    }
}

pub(crate) fn denormalize_one(spec: &VariableSpec, x: f64) -> Value {
    match spec.kind {
        VariableKind::Continuous => {
            let (lo, hi) = spec.bounds().expect("validated spec");
            // exact endpoints avoid a rounding step past the upper bound
            if x >= 1.0 {
                Value::Real(hi)
            } else {
                Value::Real(lo + x * (hi - lo))
            }
        }
        VariableKind::Categorical => {
            let k = spec.categories.len();
            let idx = ((x * k as f64).floor() as usize).min(k - 1);
            Value::Label(spec.categories[idx].clone())
        }
    }
}

fn check_value(spec: &VariableSpec, value: &Value) -> Result<()> {
    match (spec.kind, value) {
        (VariableKind::Continuous, Value::Real(x)) => {
            let (lo, hi) = spec.bounds().expect("validated spec");
            if !x.is_finite() || *x < lo || *x > hi {
                return Err(Error::OutOfRange {
                    name: spec.name.clone(),
                    detail: format!("{x} not in [{lo}, {hi}]"),
                });
            }
            Ok(())
        }
        (VariableKind::Categorical, Value::Label(label)) => {
            if spec.category_index(label).is_none() {
                return Err(Error::OutOfRange {
                    name: spec.name.clone(),
                    detail: format!("`{label}` is not a category"),
                });
            }
            Ok(())
        }
        (VariableKind::Continuous, Value::Label(l)) => Err(Error::OutOfRange {
            name: spec.name.clone(),
            detail: format!("expected a number, got label `{l}`"),
        }),
        (VariableKind::Categorical, Value::Real(x)) => Err(Error::OutOfRange {
            name: spec.name.clone(),
            detail: format!("expected a category label, got {x}"),
        }),
    }
}
