//! Community structure and class-level degree shares of contagion networks.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::detect::ContagionNetwork;
use crate::ingest::MarketClass;

/// Weighted undirected graph on a dense adjacency matrix (zero diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct UndirectedGraph {
    pub nodes: Vec<String>,
    pub weights: DMatrix<f64>,
}

impl UndirectedGraph {
    pub fn new(nodes: Vec<String>) -> Self {
        let n = nodes.len();
        Self {
            nodes,
            weights: DMatrix::zeros(n, n),
        }
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn set(&mut self, a: usize, b: usize, w: f64) {
        self.weights[(a, b)] = w;
        self.weights[(b, a)] = w;
    }

    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.weights[(a, b)]
    }

    /// Each undirected edge once, `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let w = self.weights[(a, b)];
                if w != 0.0 {
                    out.push((a, b, w));
                }
            }
        }
        out
    }
}

/// Undirected weight `max(w_ij, w_ji)` over the edges present.
pub fn symmetrize(network: &ContagionNetwork) -> UndirectedGraph {
    let mut g = UndirectedGraph::new(network.nodes.clone());
    let n = g.n();
    let mut seen = DMatrix::from_element(n, n, false);
    for e in &network.edges {
        if e.source == e.target {
            continue;
        }
        let (a, b) = (e.source.min(e.target), e.source.max(e.target));
        let w = if seen[(a, b)] { g.weight(a, b).max(e.weight) } else { e.weight };
        seen[(a, b)] = true;
        g.set(a, b, w);
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityPartition {
    /// Community id per node; ids are contiguous from 0 in order of first node.
    pub assignments: Vec<usize>,
    pub n_communities: usize,
    pub modularity: f64,
}

fn relabel(raw: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let out = raw
        .iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect();
    (out, map.len())
}

/// Weighted Newman modularity; zero for a graph without edges.
pub fn modularity(graph: &UndirectedGraph, assignments: &[usize]) -> f64 {
    let n = graph.n();
    let w = positive_weights(graph);
    let degree: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
    let two_m: f64 = degree.iter().sum();
    if two_m <= 0.0 {
        return 0.0;
    }
    let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
    let mut inside = vec![0.0; k];
    let mut total = vec![0.0; k];
    for i in 0..n {
        total[assignments[i]] += degree[i];
        for j in 0..n {
            if assignments[i] == assignments[j] {
                inside[assignments[i]] += w[(i, j)];
            }
        }
    }
    let q: f64 = inside
        .iter()
        .zip(&total)
        .map(|(a, d)| a / two_m - (d / two_m) * (d / two_m))
        .sum();
    if q.abs() < 1e-12 { 0.0 } else { q }
}

fn positive_weights(graph: &UndirectedGraph) -> DMatrix<f64> {
    graph.weights.map(|w| if w > 0.0 { w } else { 0.0 })
}

struct Cluster {
    members: Vec<usize>,
    prob: Vec<f64>,
}

/// Pons-Latapy random-walk clustering, cut at maximum modularity.
///
/// Every node gets a self-loop weighted by its mean incident weight (1 when
/// isolated). Only positive weights are edges.
pub fn walktrap(graph: &UndirectedGraph, steps: usize) -> CommunityPartition {
    let n = graph.n();
    if n == 0 {
        return CommunityPartition {
            assignments: Vec::new(),
            n_communities: 0,
            modularity: 0.0,
        };
    }
    let w = positive_weights(graph);
    let mut a = w.clone();
    for i in 0..n {
        let incident: Vec<f64> = w.row(i).iter().copied().filter(|x| *x > 0.0).collect();
        a[(i, i)] = if incident.is_empty() {
            1.0
        } else {
            incident.iter().sum::<f64>() / incident.len() as f64
        };
    }
    let degree: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    let mut p = a.clone();
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] /= degree[i];
        }
    }
    let mut pt = DMatrix::identity(n, n);
    for _ in 0..steps {
        pt = &pt * &p;
    }

    let mut clusters: Vec<Option<Cluster>> = (0..n)
        .map(|i| {
            Some(Cluster {
                members: vec![i],
                prob: pt.row(i).iter().copied().collect(),
            })
        })
        .collect();
    let mut adjacent = w.map(|x| x > 0.0);
    let mut assignment: Vec<usize> = (0..n).collect();

    let delta_sigma = |c1: &Cluster, c2: &Cluster| -> f64 {
        let s1 = c1.members.len() as f64;
        let s2 = c2.members.len() as f64;
        let r2: f64 = (0..n).map(|k| (c1.prob[k] - c2.prob[k]).powi(2) / degree[k]).sum();
        s1 * s2 / (s1 + s2) * r2 / n as f64
    };

    let mut best_q = modularity(graph, &assignment);
    let mut best = assignment.clone();
    loop {
        let mut choice: Option<(f64, usize, usize)> = None;
        let ids: Vec<usize> = (0..clusters.len()).filter(|i| clusters[*i].is_some()).collect();
        for (x, &c1) in ids.iter().enumerate() {
            for &c2 in &ids[x + 1..] {
                if !adjacent[(c1, c2)] {
                    continue;
                }
                let d = delta_sigma(clusters[c1].as_ref().unwrap(), clusters[c2].as_ref().unwrap());
                if choice.is_none_or(|(bd, _, _)| d < bd) {
                    choice = Some((d, c1, c2));
                }
            }
        }
        let Some((_, c1, c2)) = choice else { break };
        let left = clusters[c1].take().unwrap();
        let right = clusters[c2].take().unwrap();
        let s1 = left.members.len() as f64;
        let s2 = right.members.len() as f64;
        let prob = left
            .prob
            .iter()
            .zip(&right.prob)
            .map(|(x, y)| (s1 * x + s2 * y) / (s1 + s2))
            .collect();
        let mut members = left.members;
        members.extend(right.members);
        for &m in &members {
            assignment[m] = c1;
        }
        clusters[c1] = Some(Cluster { members, prob });
        for k in 0..clusters.len() {
            let adj = adjacent[(c1, k)] || adjacent[(c2, k)];
            adjacent[(c1, k)] = adj;
            adjacent[(k, c1)] = adj;
            adjacent[(c2, k)] = false;
            adjacent[(k, c2)] = false;
        }
        adjacent[(c1, c1)] = false;
        let q = modularity(graph, &assignment);
        if q > best_q + 1e-12 {
            best_q = q;
            best = assignment.clone();
        }
    }
    let (assignments, n_communities) = relabel(&best);
    CommunityPartition {
        modularity: modularity(graph, &assignments),
        assignments,
        n_communities,
    }
}

/// Out- and in-degree shares held by each market class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeShares {
    pub advanced_out: Option<f64>,
    pub emerging_out: Option<f64>,
    pub advanced_in: Option<f64>,
    pub emerging_in: Option<f64>,
}

pub fn degree_decomposition(network: &ContagionNetwork) -> DegreeShares {
    let total = network.edges.len();
    if total == 0 {
        return DegreeShares {
            advanced_out: None,
            emerging_out: None,
            advanced_in: None,
            emerging_in: None,
        };
    }
    let adv = |i: usize| network.classes[i] == MarketClass::Advanced;
    let out_adv = network.edges.iter().filter(|e| adv(e.source)).count() as f64;
    let in_adv = network.edges.iter().filter(|e| adv(e.target)).count() as f64;
    let t = total as f64;
    DegreeShares {
        advanced_out: Some(out_adv / t),
        emerging_out: Some(1.0 - out_adv / t),
        advanced_in: Some(in_adv / t),
        emerging_in: Some(1.0 - in_adv / t),
    }
}
