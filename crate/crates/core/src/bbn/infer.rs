//! Exact queries by variable elimination, backward navigation and joint MAP.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::factor::Factor;
use super::{BbnModel, Evidence, Node};
use crate::error::{Error, Result};

/// Largest number of joint states [`BbnModel::most_probable_configuration`]
/// will enumerate.
pub const MAP_STATE_LIMIT: u128 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub posteriors: IndexMap<String, Vec<f64>>,
    pub evidence_probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub bin: usize,
    pub range_label: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Navigation {
    pub posteriors: IndexMap<String, Vec<f64>>,
    pub evidence_probability: f64,
    pub recommendations: IndexMap<String, Recommendation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapAssignment {
    pub assignment: IndexMap<String, usize>,
    pub probability: f64,
}

/// Evidence resolved to global node indices (inputs first, then outputs).
struct Resolved {
    hard: Vec<Option<u32>>,
    soft: Vec<Option<Vec<usize>>>,
}

impl BbnModel {
    fn resolve(&self, evidence: &Evidence) -> Result<Resolved> {
        let n = self.structure.n_inputs() + self.structure.n_outputs();
        let mut hard = vec![None; n];
        let mut soft = vec![None; n];
        for (name, &bin) in &evidence.hard {
            let v = self.var_index(name)?;
            if bin >= self.card(v) {
                return Err(Error::InvalidEvidence(format!(
                    "`{name}`: bin {bin} out of range ({} bins)",
                    self.card(v)
                )));
            }
            hard[v] = Some(bin as u32);
        }
        for (name, bins) in &evidence.soft {
            let v = self.var_index(name)?;
            if hard[v].is_some() {
                return Err(Error::InvalidEvidence(format!("`{name}` has both hard and soft evidence")));
            }
            if bins.is_empty() {
                return Err(Error::InvalidEvidence(format!("`{name}`: empty admissible bin set")));
            }
            if let Some(&b) = bins.iter().find(|&&b| b >= self.card(v)) {
                return Err(Error::InvalidEvidence(format!(
                    "`{name}`: bin {b} out of range ({} bins)",
                    self.card(v)
                )));
            }
            let mut set = bins.clone();
            set.sort_unstable();
            set.dedup();
            soft[v] = Some(set);
        }
        Ok(Resolved { hard, soft })
    }

    /// Priors, CPTs and evidence indicators as factors over the unobserved
    /// nodes, plus the constant contributed by hard evidence on inputs.
    fn factors(&self, ev: &Resolved) -> (Vec<Factor>, f64) {
        let d = self.structure.n_inputs();
        let free: Vec<usize> = (0..d).filter(|&i| ev.hard[i].is_none()).collect();
        let free_cards: Vec<usize> = free.iter().map(|&i| self.card(i)).collect();
        let mut scalar = 1.0;
        let mut factors = Vec::new();

        for (i, prior) in self.priors.values().enumerate() {
            match ev.hard[i] {
                Some(b) => scalar *= prior[b as usize],
                None => {
                    let mut f = Factor::new(vec![i], vec![prior.len()], prior.clone());
                    if let Some(set) = &ev.soft[i] {
                        f.mask(i, set);
                    }
                    factors.push(f);
                }
            }
        }

        let n_configs: usize = free_cards.iter().product();
        for (o, cpt) in self.cpts.values().enumerate() {
            let var = d + o;
            let k = cpt.cardinality();
            let mut config: Vec<u32> = ev.hard[..d].iter().map(|h| h.unwrap_or(0)).collect();
            let mut idx = vec![0usize; free.len()];
            let hard_out = ev.hard[var];
            let mut values = Vec::with_capacity(n_configs * if hard_out.is_some() { 1 } else { k });
            for _ in 0..n_configs {
                for (slot, &i) in idx.iter().zip(&free) {
                    config[i] = *slot as u32;
                }
                let row = cpt.lookup(&config);
                match hard_out {
                    Some(b) => values.push(row[b as usize]),
                    None => values.extend_from_slice(row),
                }
                for ax in (0..free.len()).rev() {
                    idx[ax] += 1;
                    if idx[ax] < free_cards[ax] {
                        break;
                    }
                    idx[ax] = 0;
                }
            }
            let mut vars = free.clone();
            let mut cards = free_cards.clone();
            if hard_out.is_none() {
                vars.push(var);
                cards.push(k);
            }
            let mut f = Factor::new(vars, cards, values);
            if let Some(set) = &ev.soft[var] {
                f.mask(var, set);
            }
            factors.push(f);
        }
        (factors, scalar)
    }

    /// Sums every unobserved node except `keep` out of the factor product.
    ///
    /// Unqueried outputs go first: each appears in a single factor, so
    /// summing it out never enlarges anything. Free inputs follow in
    /// increasing state-count order.
    fn eliminate(&self, ev: &Resolved, keep: Option<usize>) -> Factor {
        let d = self.structure.n_inputs();
        let n = d + self.structure.n_outputs();
        let (mut factors, scalar) = self.factors(ev);
        let mut inputs: Vec<usize> = (0..d).filter(|&i| ev.hard[i].is_none() && Some(i) != keep).collect();
        inputs.sort_by_key(|&i| (self.card(i), i));
        let order = (d..n).filter(|&v| ev.hard[v].is_none() && Some(v) != keep).chain(inputs);
        for var in order {
            let (with, without): (Vec<Factor>, Vec<Factor>) = factors.into_iter().partition(|f| f.contains(var));
            factors = without;
            if let Some(prod) = with.into_iter().reduce(|a, b| a.product(&b)) {
                factors.push(prod.sum_out(var));
            }
        }
        factors
            .into_iter()
            .fold(Factor::scalar(scalar), |acc, f| acc.product(&f))
    }

    /// Exact posterior marginals of `query` under `evidence`, with the
    /// probability of the evidence.
    pub fn infer(&self, evidence: &Evidence, query: &[String]) -> Result<Posterior> {
        let ev = self.resolve(evidence)?;
        let mut vars = Vec::with_capacity(query.len());
        for name in query {
            let v = self.var_index(name)?;
            if ev.hard[v].is_some() {
                return Err(Error::InvalidEvidence(format!("query variable `{name}` has hard evidence")));
            }
            vars.push(v);
        }
        let mut posteriors = IndexMap::new();
        let mut evidence_probability = None;
        for (name, &v) in query.iter().zip(&vars) {
            let f = self.eliminate(&ev, Some(v));
            let z = f.total();
            if !(z > 0.0) {
                return Err(Error::InconsistentEvidence);
            }
            evidence_probability.get_or_insert(z);
            posteriors.insert(name.clone(), f.values.iter().map(|p| p / z).collect());
        }
        let evidence_probability = match evidence_probability {
            Some(z) => z,
            None => {
                let z = self.eliminate(&ev, None).total();
                if !(z > 0.0) {
                    return Err(Error::InconsistentEvidence);
                }
                z
            }
        };
        Ok(Posterior {
            posteriors,
            evidence_probability,
        })
    }

    /// Backward query: which input bins make the output targets most
    /// likely, given fixed inputs. `targets` are admissible bin sets on
    /// outputs; `fixed` pins inputs. Each input is recommended its posterior
    /// argmax (ties to the lower bin); fixed inputs echo their bin.
    pub fn navigate(&self, targets: &IndexMap<String, Vec<usize>>, fixed: &IndexMap<String, usize>) -> Result<Navigation> {
        if targets.is_empty() {
            return Err(Error::InvalidEvidence("navigation needs at least one output target".into()));
        }
        for name in targets.keys() {
            if !matches!(self.node(name)?, Node::Output(_)) {
                return Err(Error::InvalidEvidence(format!("target `{name}` is not an output node")));
            }
        }
        for name in fixed.keys() {
            if !matches!(self.node(name)?, Node::Input(_)) {
                return Err(Error::InvalidEvidence(format!("fixed `{name}` is not an input node")));
            }
        }
        let evidence = Evidence {
            hard: fixed.clone(),
            soft: targets.clone(),
        };
        let free: Vec<String> = self
            .structure
            .input_nodes
            .iter()
            .filter(|n| !fixed.contains_key(*n))
            .cloned()
            .collect();
        let post = self.infer(&evidence, &free)?;
        let mut recommendations = IndexMap::new();
        for name in &self.structure.input_nodes {
            let (bin, probability) = match fixed.get(name) {
                Some(&b) => (b, 1.0),
                None => argmax(&post.posteriors[name]),
            };
            recommendations.insert(
                name.clone(),
                Recommendation {
                    bin,
                    range_label: self.label(name, bin)?,
                    probability,
                },
            );
        }
        Ok(Navigation {
            posteriors: post.posteriors,
            evidence_probability: post.evidence_probability,
            recommendations,
        })
    }

    /// Joint assignment of every node maximizing the joint probability
    /// under the evidence, by exhaustive search. Ties go to the
    /// lexicographically smallest assignment (inputs, then outputs).
    pub fn most_probable_configuration(&self, evidence: &Evidence) -> Result<MapAssignment> {
        let ev = self.resolve(evidence)?;
        let d = self.structure.n_inputs();
        let n = d + self.structure.n_outputs();
        let states: Vec<Vec<u32>> = (0..n)
            .map(|v| match (&ev.hard[v], &ev.soft[v]) {
                (Some(b), _) => vec![*b],
                (None, Some(set)) => set.iter().map(|&b| b as u32).collect(),
                (None, None) => (0..self.card(v) as u32).collect(),
            })
            .collect();
        let count = states.iter().map(|s| s.len() as u128).product::<u128>();
        if count > MAP_STATE_LIMIT {
            return Err(Error::StateSpaceTooLarge {
                count,
                limit: MAP_STATE_LIMIT,
            });
        }
        let mut idx = vec![0usize; n];
        let mut assign: Vec<u32> = states.iter().map(|s| s[0]).collect();
        let mut best = (f64::NEG_INFINITY, assign.clone());
        for _ in 0..count {
            let p = self.joint_of(&assign[..d], &assign[d..]);
            if p > best.0 {
                best = (p, assign.clone());
            }
            for v in (0..n).rev() {
                idx[v] += 1;
                if idx[v] < states[v].len() {
                    assign[v] = states[v][idx[v]];
                    break;
                }
                idx[v] = 0;
                assign[v] = states[v][0];
            }
        }
        if !(best.0 > 0.0) {
            return Err(Error::InconsistentEvidence);
        }
        Ok(MapAssignment {
            assignment: best
                .1
                .iter()
                .enumerate()
                .map(|(v, &b)| (self.node_name(v).to_string(), b as usize))
                .collect(),
            probability: best.0,
        })
    }
}

/// First index of the maximum.
fn argmax(p: &[f64]) -> (usize, f64) {
    p.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
}
