//! Configuration-keyed conditional probability tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a parent configuration without a usable table row is answered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CptFallback {
    /// Every observed configuration gets a row; anything else gets the
    /// output's marginal distribution.
    #[default]
    Marginal,
    /// Rows need `min_count` training rows. Misses back off through
    /// shorter parent prefixes, ordered by mutual information with the
    /// output, down to the marginal.
    Backoff { min_count: usize },
}

pub(crate) const SUM_TOLERANCE: f64 = 1e-12;

/// `P(output | parents)` for one output node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "CptRepr", try_from = "CptRepr")]
pub struct SparseCpt {
    parents: Vec<String>,
    parent_cards: Vec<usize>,
    cardinality: usize,
    alpha: f64,
    fallback: CptFallback,
    /// Positions into `parents`, strongest first. Identity for `Marginal`.
    parent_order: Vec<usize>,
    /// Full configurations, parents in declaration order.
    table: BTreeMap<Vec<u32>, Vec<f64>>,
    /// `levels[l - 1]` is keyed by the first `l` parents of `parent_order`.
    levels: Vec<BTreeMap<Vec<u32>, Vec<f64>>>,
    marginal: Vec<f64>,
}

fn smoothed(counts: &[u64], alpha: f64) -> Vec<f64> {
    let n: u64 = counts.iter().sum();
    let denom = n as f64 + alpha * counts.len() as f64;
    counts.iter().map(|&c| (c as f64 + alpha) / denom).collect()
}

/// Empirical mutual information between one parent column and the output.
fn mutual_information(parent: &[u32], output: &[u32], kp: usize, ko: usize) -> f64 {
    let n = parent.len() as f64;
    let mut joint = vec![0u64; kp * ko];
    let mut pm = vec![0u64; kp];
    let mut om = vec![0u64; ko];
    for (&p, &o) in parent.iter().zip(output) {
        joint[p as usize * ko + o as usize] += 1;
        pm[p as usize] += 1;
        om[o as usize] += 1;
    }
    let mut mi = 0.0;
    for p in 0..kp {
        for o in 0..ko {
            let c = joint[p * ko + o];
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (pm[p] as f64 * om[o] as f64)).ln();
            }
        }
    }
    mi
}

impl SparseCpt {
    /// Counts rows into configuration-keyed tables. `configs[r]` holds the
    /// parent bins of row `r`, `output[r]` its output bin.
    pub(crate) fn fit(
        parents: Vec<String>,
        parent_cards: Vec<usize>,
        cardinality: usize,
        configs: &[Vec<u32>],
        output: &[u32],
        alpha: f64,
        fallback: CptFallback,
    ) -> Self {
        let d = parents.len();
        let count_by = |key_of: &dyn Fn(&[u32]) -> Vec<u32>| {
            let mut m: BTreeMap<Vec<u32>, Vec<u64>> = BTreeMap::new();
            for (cfg, &o) in configs.iter().zip(output) {
                m.entry(key_of(cfg)).or_insert_with(|| vec![0; cardinality])[o as usize] += 1;
            }
            m
        };
        let keep = |m: BTreeMap<Vec<u32>, Vec<u64>>, min: u64| -> BTreeMap<Vec<u32>, Vec<f64>> {
            m.into_iter()
                .filter(|(_, c)| c.iter().sum::<u64>() >= min)
                .map(|(k, c)| (k, smoothed(&c, alpha)))
                .collect()
        };

        let mut marginal_counts = vec![0u64; cardinality];
        for &o in output {
            marginal_counts[o as usize] += 1;
        }
        let marginal = smoothed(&marginal_counts, alpha);

        let (parent_order, min_count) = match fallback {
            CptFallback::Marginal => ((0..d).collect(), 1),
            CptFallback::Backoff { min_count } => {
                let mi: Vec<f64> = (0..d)
                    .map(|p| {
                        let col: Vec<u32> = configs.iter().map(|c| c[p]).collect();
                        mutual_information(&col, output, parent_cards[p], cardinality)
                    })
                    .collect();
                let mut order: Vec<usize> = (0..d).collect();
                order.sort_by(|&a, &b| mi[b].total_cmp(&mi[a]));
                (order, min_count.max(1) as u64)
            }
        };
        let table = keep(count_by(&|c: &[u32]| c.to_vec()), min_count);
        let levels = match fallback {
            CptFallback::Marginal => Vec::new(),
            CptFallback::Backoff { .. } => (1..d)
                .map(|l| {
                    let order = &parent_order[..l];
                    keep(count_by(&|c: &[u32]| order.iter().map(|&p| c[p]).collect()), min_count)
                })
                .collect(),
        };
        Self {
            parents,
            parent_cards,
            cardinality,
            alpha,
            fallback,
            parent_order,
            table,
            levels,
            marginal,
        }
    }

    pub fn parents(&self) -> &[String] {
        &self.parents
    }

    pub fn parent_cards(&self) -> &[usize] {
        &self.parent_cards
    }

    pub fn cardinality(&self) -> usize {
        self.cardinality
    }

    pub fn fallback(&self) -> CptFallback {
        self.fallback
    }

    pub fn marginal(&self) -> &[f64] {
        &self.marginal
    }

    /// Rows stored for full parent configurations.
    pub fn n_rows(&self) -> usize {
        self.table.len()
    }

    /// Parent names, strongest first under `Backoff`.
    pub fn parent_order(&self) -> Vec<&str> {
        self.parent_order.iter().map(|&p| self.parents[p].as_str()).collect()
    }

    /// Distribution for a full parent configuration, and the number of
    /// parents the answering row conditions on (`0` for the marginal).
    pub fn lookup_with_level(&self, config: &[u32]) -> (&[f64], usize) {
        if let Some(row) = self.table.get(config) {
            return (row, self.parents.len());
        }
        let mut key = Vec::with_capacity(self.levels.len());
        for level in (1..=self.levels.len()).rev() {
            key.clear();
            key.extend(self.parent_order[..level].iter().map(|&p| config[p]));
            if let Some(row) = self.levels[level - 1].get(key.as_slice()) {
                return (row, level);
            }
        }
        (&self.marginal, 0)
    }

    pub fn lookup(&self, config: &[u32]) -> &[f64] {
        self.lookup_with_level(config).0
    }

    pub(crate) fn validate(&self, node: &str) -> Result<()> {
        let bad = |msg: String| Error::ModelValidation(format!("cpt `{node}`: {msg}"));
        let d = self.parents.len();
        if self.parent_cards.len() != d {
            return Err(bad("parent cardinalities do not match parents".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(bad(format!("invalid smoothing {}", self.alpha)));
        }
        let mut seen = vec![false; d];
        for &p in &self.parent_order {
            if p >= d || std::mem::replace(&mut seen[p], true) {
                return Err(bad("parent order is not a permutation".into()));
            }
        }
        if self.parent_order.len() != d {
            return Err(bad("parent order is not a permutation".into()));
        }
        let expected_levels = match self.fallback {
            CptFallback::Marginal => 0,
            CptFallback::Backoff { .. } => d.saturating_sub(1),
        };
        if self.levels.len() != expected_levels {
            return Err(bad(format!("{} backoff levels, expected {expected_levels}", self.levels.len())));
        }
        self.check_row("marginal", &self.marginal).map_err(bad)?;
        let check_keys = |map: &BTreeMap<Vec<u32>, Vec<f64>>, cards: Vec<usize>| -> Result<()> {
            for (key, row) in map {
                if key.len() != cards.len() || key.iter().zip(&cards).any(|(&b, &k)| b as usize >= k) {
                    return Err(bad(format!("invalid configuration key {}", encode_key(key))));
                }
                self.check_row(&encode_key(key), row).map_err(bad)?;
            }
            Ok(())
        };
        check_keys(&self.table, self.parent_cards.clone())?;
        for (l, level) in self.levels.iter().enumerate() {
            let cards = self.parent_order[..=l].iter().map(|&p| self.parent_cards[p]).collect();
            check_keys(level, cards)?;
        }
        Ok(())
    }

    fn check_row(&self, key: &str, row: &[f64]) -> std::result::Result<(), String> {
        if row.len() != self.cardinality {
            return Err(format!("row {key} has {} entries, expected {}", row.len(), self.cardinality));
        }
        if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(format!("row {key} has a negative or non-finite entry"));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > SUM_TOLERANCE {
            return Err(format!("row {key} sums to {s}"));
        }
        Ok(())
    }
}

pub(crate) fn encode_key(key: &[u32]) -> String {
    key.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
}

fn decode_key(s: &str) -> Result<Vec<u32>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| Error::ModelValidation(format!("bad configuration key `{s}`")))
        })
        .collect()
}

/// On-disk form: comma-joined configuration keys and parent names.
#[derive(Serialize, Deserialize)]
struct CptRepr {
    parents: Vec<String>,
    parent_cardinalities: Vec<usize>,
    cardinality: usize,
    alpha: f64,
    fallback: CptFallback,
    parent_order: Vec<String>,
    table: BTreeMap<String, Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    backoff: Vec<BTreeMap<String, Vec<f64>>>,
    marginal: Vec<f64>,
}

fn encode_map(m: BTreeMap<Vec<u32>, Vec<f64>>) -> BTreeMap<String, Vec<f64>> {
    m.into_iter().map(|(k, v)| (encode_key(&k), v)).collect()
}

fn decode_map(m: BTreeMap<String, Vec<f64>>) -> Result<BTreeMap<Vec<u32>, Vec<f64>>> {
    m.into_iter().map(|(k, v)| Ok((decode_key(&k)?, v))).collect()
}

impl From<SparseCpt> for CptRepr {
    fn from(c: SparseCpt) -> Self {
        let parent_order = c.parent_order.iter().map(|&p| c.parents[p].clone()).collect();
        Self {
            parents: c.parents,
            parent_cardinalities: c.parent_cards,
            cardinality: c.cardinality,
            alpha: c.alpha,
            fallback: c.fallback,
            parent_order,
            table: encode_map(c.table),
            backoff: c.levels.into_iter().map(encode_map).collect(),
            marginal: c.marginal,
        }
    }
}

impl TryFrom<CptRepr> for SparseCpt {
    type Error = Error;

    fn try_from(r: CptRepr) -> Result<Self> {
        let parent_order = r
            .parent_order
            .iter()
            .map(|n| {
                r.parents
                    .iter()
                    .position(|p| p == n)
                    .ok_or_else(|| Error::ModelValidation(format!("parent order names unknown parent `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            parents: r.parents,
            parent_cards: r.parent_cardinalities,
            cardinality: r.cardinality,
            alpha: r.alpha,
            fallback: r.fallback,
            parent_order,
            table: decode_map(r.table)?,
            levels: r.backoff.into_iter().map(decode_map).collect::<Result<_>>()?,
            marginal: r.marginal,
        })
    }
}
