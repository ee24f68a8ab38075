//! Reference implementations shared by the integration suites. Each one is
//! written from the defining formula, independently of the library code.
#![allow(dead_code, clippy::needless_range_loop)]

use designnav::bbn::{BbnModel, BbnStructure, BinnedData, CptFallback, Evidence, FitConfig};
use designnav::discretize::{DiscretizationScheme, VariableBins};
use indexmap::IndexMap;
use rand::Rng;

/// `(s, a, m_1..m_s)` for Sobol dimensions 2..=5, copied by hand from the
/// published new-joe-kuo-6.21201 table.
pub const JOE_KUO_HEAD: [(u32, u32, &[u32]); 4] = [(1, 0, &[1]), (2, 1, &[1, 3]), (3, 1, &[1, 3, 1]), (3, 2, &[1, 1, 1])];

/// Direction numbers `v[1..=32]` for 1-based dimension `dim` (slot 0 unused).
pub fn oracle_directions(dim: usize) -> [u64; 33] {
    let mut v = [0u64; 33];
    if dim == 1 {
        for (k, vk) in v.iter_mut().enumerate().skip(1) {
            *vk = 1u64 << (32 - k);
        }
        return v;
    }
    let (s, a, m) = JOE_KUO_HEAD[dim - 2];
    let s = s as usize;
    for k in 1..=s {
        v[k] = (m[k - 1] as u64) << (32 - k);
    }
    for k in s + 1..=32 {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for j in 1..s {
            let bit = (a >> (s - 1 - j)) & 1;
            if bit == 1 {
                x ^= v[k - j];
            }
        }
        v[k] = x;
    }
    v
}

/// Point `i` (0-based, origin first) computed directly from `gray(i)`.
pub fn oracle_point(i: u64, dims: usize) -> Vec<f64> {
    let gray = i ^ (i >> 1);
    (1..=dims)
        .map(|d| {
            let v = oracle_directions(d);
            let mut x = 0u64;
            for k in 1..=32 {
                if (gray >> (k - 1)) & 1 == 1 {
                    x ^= v[k];
                }
            }
            x as f64 / 4_294_967_296.0
        })
        .collect()
}

/// A small network fitted on random binned rows.
pub fn random_model<R: Rng>(rng: &mut R) -> BbnModel {
    loop {
        let n_in = rng.random_range(1..=6);
        let n_out = rng.random_range(1..=2);
        let cards: Vec<usize> = (0..n_in + n_out).map(|_| rng.random_range(2..=4)).collect();
        if cards.iter().product::<usize>() > 20_000 {
            continue;
        }
        let inputs: Vec<String> = (0..n_in).map(|i| format!("x{i}")).collect();
        let outputs: Vec<String> = (0..n_out).map(|i| format!("y{i}")).collect();
        let scheme = DiscretizationScheme {
            variables: inputs
                .iter()
                .chain(&outputs)
                .zip(&cards)
                .map(|(n, &k)| VariableBins::continuous(n.clone(), (0..=k).map(|e| e as f64).collect(), "").unwrap())
                .collect(),
        };
        let n_rows = rng.random_range(1..=80);
        let data = BinnedData {
            inputs: (0..n_rows)
                .map(|_| cards[..n_in].iter().map(|&k| rng.random_range(0..k) as u32).collect())
                .collect(),
            outputs: (0..n_rows)
                .map(|_| cards[n_in..].iter().map(|&k| rng.random_range(0..k) as u32).collect())
                .collect(),
        };
        let alpha = [0.5, 1.0, 2.0][rng.random_range(0..3)];
        let fallback = if rng.random_bool(0.5) {
            CptFallback::Marginal
        } else {
            CptFallback::Backoff {
                min_count: rng.random_range(1..=4),
            }
        };
        let structure = BbnStructure::complete_bipartite(inputs, outputs).unwrap();
        return BbnModel::fit(structure, scheme, &data, FitConfig { alpha, fallback }).unwrap();
    }
}

pub fn node_names(m: &BbnModel) -> Vec<String> {
    m.structure.input_nodes.iter().chain(&m.structure.output_nodes).cloned().collect()
}

pub fn cards(m: &BbnModel) -> Vec<usize> {
    node_names(m).iter().map(|n| m.n_bins(n).unwrap()).collect()
}

/// Every joint state with its unnormalized probability, prior times CPT
/// rows, in odometer order (last node fastest).
pub fn enumerate_joint(m: &BbnModel) -> Vec<(Vec<usize>, f64)> {
    let names = node_names(m);
    let cards = cards(m);
    let n_in = m.structure.n_inputs();
    let total: usize = cards.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut state = vec![0usize; cards.len()];
    for _ in 0..total {
        let parents: Vec<u32> = state[..n_in].iter().map(|&b| b as u32).collect();
        let mut p = 1.0;
        for (i, name) in names[..n_in].iter().enumerate() {
            p *= m.priors[name][state[i]];
        }
        for (j, name) in names[n_in..].iter().enumerate() {
            p *= m.cpts[name].lookup(&parents)[state[n_in + j]];
        }
        out.push((state.clone(), p));
        for d in (0..state.len()).rev() {
            state[d] += 1;
            if state[d] < cards[d] {
                break;
            }
            state[d] = 0;
        }
    }
    out
}

pub fn admits(m: &BbnModel, e: &Evidence, state: &[usize]) -> bool {
    node_names(m).iter().zip(state).all(|(n, &b)| {
        e.hard.get(n).is_none_or(|&h| h == b) && e.soft.get(n).is_none_or(|s| s.contains(&b))
    })
}

/// Evidence probability and every node's posterior marginal by brute force.
pub fn brute_posteriors(m: &BbnModel, joint: &[(Vec<usize>, f64)], e: &Evidence) -> (f64, IndexMap<String, Vec<f64>>) {
    let names = node_names(m);
    let cards = cards(m);
    let mut marg: Vec<Vec<f64>> = cards.iter().map(|&k| vec![0.0; k]).collect();
    let mut z = 0.0;
    for (state, p) in joint {
        if !admits(m, e, state) {
            continue;
        }
        z += p;
        for (i, &b) in state.iter().enumerate() {
            marg[i][b] += p;
        }
    }
    let posts = names
        .into_iter()
        .zip(marg)
        .map(|(n, v)| (n, v.into_iter().map(|x| if z > 0.0 { x / z } else { 0.0 }).collect()))
        .collect();
    (z, posts)
}

/// Random hard, soft or mixed evidence over a random subset of nodes.
pub fn random_evidence<R: Rng>(m: &BbnModel, rng: &mut R, mode: usize) -> Evidence {
    let names = node_names(m);
    let cards = cards(m);
    let mut e = Evidence::default();
    for (n, &k) in names.iter().zip(&cards) {
        if !rng.random_bool(0.4) {
            continue;
        }
        let soft = match mode {
            0 => false,
            1 => true,
            _ => rng.random_bool(0.5),
        };
        if soft {
            let mut set: Vec<usize> = (0..k).filter(|_| rng.random_bool(0.5)).collect();
            if set.is_empty() {
                set.push(rng.random_range(0..k));
            }
            e.soft.insert(n.clone(), set);
        } else {
            e.hard.insert(n.clone(), rng.random_range(0..k));
        }
    }
    e
}
