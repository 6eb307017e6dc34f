//! Wavelet-quantile transfer entropy, thresholding and Stage-1 summaries.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::MarketClass;
use crate::quantreg::{qr_fit_design, QuantileDesign};
use crate::stats;
use crate::wavelet::WaveletDecomposition;

pub const MIN_WQTE_LENGTH: usize = 50;
const DEGENERATE_SUM: f64 = 1e-300;

/// WQTE values for one (period, scale, τ) cell, row = source, column = target.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTensor {
    pub period: String,
    pub scale: usize,
    pub tau: f64,
    pub markets: Vec<String>,
    pub classes: Vec<MarketClass>,
    values: Vec<Option<f64>>,
}

impl FlowTensor {
    pub fn from_values(
        period: impl Into<String>,
        scale: usize,
        tau: f64,
        markets: Vec<String>,
        classes: Vec<MarketClass>,
        values: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n = markets.len();
        if values.len() != n * n || classes.len() != n {
            return Err(Error::Domain("flow tensor dimensions disagree".into()));
        }
        let mut values = values;
        for i in 0..n {
            values[i * n + i] = None;
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite WQTE value".into()));
        }
        Ok(Self {
            period: period.into(),
            scale,
            tau,
            markets,
            classes,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.markets.len()
    }

    /// WQTE from `source` to `target`; `None` on the diagonal or for degenerate pairs.
    pub fn get(&self, source: usize, target: usize) -> Option<f64> {
        self.values[source * self.n() + target]
    }

    /// Populated off-diagonal entries as `(source, target, value)`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n();
        self.values
            .iter()
            .enumerate()
            .filter_map(move |(k, v)| v.map(|v| (k / n, k % n, v)))
    }

    pub fn n_missing(&self) -> usize {
        let n = self.n();
        n * n.saturating_sub(1) - self.entries().count()
    }
}

struct LaggedTarget<'a> {
    response: &'a [f64],
    own_lag: &'a [f64],
}

fn lagged(target: &[f64]) -> LaggedTarget<'_> {
    let t = target.len();
    LaggedTarget {
        response: &target[1..],
        own_lag: &target[..t - 1],
    }
}

fn restricted_abs_sum(target: &[f64], tau: f64) -> Result<f64> {
    let lt = lagged(target);
    let design = QuantileDesign::from_columns(lt.response.len(), &[lt.own_lag])?;
    let sum = qr_fit_design(&design, lt.response, tau)?.abs_residual_sum;
    if sum <= DEGENERATE_SUM {
        return Err(Error::DegenerateFit("restricted quantile fit is exact".into()));
    }
    Ok(sum)
}

fn augmented_abs_sum(source: &[f64], target: &[f64], tau: f64) -> Result<f64> {
    let lt = lagged(target);
    let src_lag = &source[..source.len() - 1];
    let design = QuantileDesign::from_columns(lt.response.len(), &[lt.own_lag, src_lag])?;
    let sum = qr_fit_design(&design, lt.response, tau)?.abs_residual_sum;
    if sum <= DEGENERATE_SUM {
        return Err(Error::DegenerateFit("augmented quantile fit is exact".into()));
    }
    Ok(sum)
}

fn check_pair(source: &[f64], target: &[f64]) -> Result<()> {
    if source.len() != target.len() {
        return Err(Error::Domain(format!(
            "series lengths differ ({} vs {})",
            source.len(),
            target.len()
        )));
    }
    if target.len() < MIN_WQTE_LENGTH {
        return Err(Error::InsufficientData(format!(
            "WQTE needs at least {MIN_WQTE_LENGTH} observations, got {}",
            target.len()
        )));
    }
    Ok(())
}

/// `log Σ|ê₁| − log Σ|ê₂|` for one-lag quantile regressions of the target's
/// next value on its own lag (restricted) and on its own and the source's
/// lag (augmented), both with intercept.
pub fn wqte_pair(source: &[f64], target: &[f64], tau: f64) -> Result<f64> {
    check_pair(source, target)?;
    let restricted = restricted_abs_sum(target, tau)?;
    let augmented = augmented_abs_sum(source, target, tau)?;
    Ok(restricted.ln() - augmented.ln())
}

fn is_missing_pair(e: &Error) -> bool {
    matches!(e.root(), Error::DegenerateFit(_) | Error::SingularDesign(_))
}

/// All ordered-pair WQTE values at one scale and quantile.
///
/// Pairs whose fits are exact or singular are left missing.
pub fn flow_matrix(
    period: &str,
    markets: &[String],
    classes: &[MarketClass],
    decomps: &[WaveletDecomposition],
    scale: usize,
    tau: f64,
) -> Result<FlowTensor> {
    let n = decomps.len();
    if markets.len() != n {
        return Err(Error::Domain("market labels and decompositions differ in count".into()));
    }
    let series: Vec<&[f64]> = decomps
        .iter()
        .map(|d| {
            d.detail(scale)
                .ok_or_else(|| Error::Domain(format!("scale {scale} not in decomposition")))
        })
        .collect::<Result<_>>()?;
    if let Some(first) = series.first() {
        if series.iter().any(|s| s.len() != first.len()) {
            return Err(Error::Domain("decompositions have different lengths".into()));
        }
    }

    let columns: Vec<Vec<Option<f64>>> = (0..n)
        .into_par_iter()
        .map(|target| -> Result<Vec<Option<f64>>> {
            let mut col = vec![None; n];
            if n < 2 {
                return Ok(col);
            }
            let probe = if target == 0 { 1 } else { 0 };
            check_pair(series[probe], series[target])?;
            let restricted = match restricted_abs_sum(series[target], tau) {
                Ok(v) => v,
                Err(e) if is_missing_pair(&e) => return Ok(col),
                Err(e) => return Err(e.context(format!("target {}", markets[target]))),
            };
            for source in (0..n).filter(|&s| s != target) {
                match augmented_abs_sum(series[source], series[target], tau) {
                    Ok(aug) => col[source] = Some(restricted.ln() - aug.ln()),
                    Err(e) if is_missing_pair(&e) => {}
                    Err(e) => {
                        return Err(e.context(format!("pair {}→{}", markets[source], markets[target])))
                    }
                }
            }
            Ok(col)
        })
        .collect::<Result<_>>()?;

    let mut values = vec![None; n * n];
    for (target, col) in columns.into_iter().enumerate() {
        for (source, v) in col.into_iter().enumerate() {
            values[source * n + target] = v;
        }
    }
    FlowTensor::from_values(period, scale, tau, markets.to_vec(), classes.to_vec(), values)
}

/// Minimum number of positive entries for a baseline threshold.
pub const MIN_POSITIVE_BASELINE: usize = 4;

/// Type-7 Q75 of the strictly positive off-diagonal baseline values.
pub fn baseline_threshold(baseline: &FlowTensor) -> Result<f64> {
    let positives: Vec<f64> = baseline.entries().map(|(_, _, v)| v).filter(|v| *v > 0.0).collect();
    if positives.len() < MIN_POSITIVE_BASELINE {
        return Err(Error::InsufficientData(format!(
            "baseline has {} positive WQTE values; at least {MIN_POSITIVE_BASELINE} required",
            positives.len()
        )));
    }
    Ok(stats::quantile_type7(&positives, 0.75))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub weight: f64,
}

/// Thresholded directed WQTE graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ContagionNetwork {
    pub nodes: Vec<String>,
    pub classes: Vec<MarketClass>,
    pub edges: Vec<Edge>,
    pub threshold: f64,
}

impl ContagionNetwork {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn out_degree(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes()];
        self.edges.iter().for_each(|e| deg[e.source] += 1);
        deg
    }

    pub fn in_degree(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes()];
        self.edges.iter().for_each(|e| deg[e.target] += 1);
        deg
    }
}

/// Keeps every pair whose WQTE strictly exceeds `threshold`.
pub fn threshold_network(flows: &FlowTensor, threshold: f64) -> Result<ContagionNetwork> {
    if threshold.is_nan() {
        return Err(Error::Domain("threshold is NaN".into()));
    }
    let edges = flows
        .entries()
        .filter(|&(_, _, v)| v > threshold)
        .map(|(source, target, weight)| Edge { source, target, weight })
        .collect();
    Ok(ContagionNetwork {
        nodes: flows.markets.clone(),
        classes: flows.classes.clone(),
        edges,
        threshold,
    })
}

/// How top transmitters and receivers are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankBy {
    #[default]
    Degree,
    Strength,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSummary {
    pub mean_wqte: Option<f64>,
    pub max_wqte: Option<f64>,
    pub density_pct: f64,
    pub n_edges: usize,
    pub n_pairs: usize,
    pub top_transmitter: Option<String>,
    pub top_receiver: Option<String>,
}

impl DetectionSummary {
    /// Density at two decimals, as tabulated.
    pub fn density_label(&self) -> String {
        format!("{:.2}", self.density_pct)
    }
}

fn top_node(nodes: &[String], score: &[f64]) -> Option<String> {
    let mut best: Option<usize> = None;
    for i in 0..nodes.len() {
        if score[i] <= 0.0 {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) if score[i] > score[b] || (score[i] == score[b] && nodes[i] < nodes[b]) => Some(i),
            keep => keep,
        };
    }
    best.map(|i| nodes[i].clone())
}

pub fn summarize(network: &ContagionNetwork, flows: &FlowTensor, rank_by: RankBy) -> Result<DetectionSummary> {
    if network.nodes != flows.markets {
        return Err(Error::Domain("network and flow tensor have different nodes".into()));
    }
    let n = network.n_nodes();
    let n_pairs = n * n.saturating_sub(1);
    let n_edges = network.edges.len();
    let mean_wqte = (n_edges > 0)
        .then(|| network.edges.iter().map(|e| e.weight).sum::<f64>() / n_edges as f64);
    let max_wqte = flows.entries().map(|(_, _, v)| v).reduce(f64::max);
    let density_pct = if n_pairs == 0 { 0.0 } else { 100.0 * n_edges as f64 / n_pairs as f64 };

    let mut out_score = vec![0.0; n];
    let mut in_score = vec![0.0; n];
    for e in &network.edges {
        let w = match rank_by {
            RankBy::Degree => 1.0,
            RankBy::Strength => e.weight,
        };
        out_score[e.source] += w;
        in_score[e.target] += w;
    }
    Ok(DetectionSummary {
        mean_wqte,
        max_wqte,
        density_pct,
        n_edges,
        n_pairs,
        top_transmitter: top_node(&network.nodes, &out_score),
        top_receiver: top_node(&network.nodes, &in_score),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(n: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> FlowTensor {
        let markets: Vec<String> = (0..n).map(|i| format!("M{i:02}")).collect();
        let values = (0..n * n).map(|k| f(k / n, k % n)).collect();
        FlowTensor::from_values("p", 5, 0.5, markets, vec![MarketClass::Advanced; n], values).unwrap()
    }

    #[test]
    fn baseline_threshold_examples() {
        let vals = [0.01, 0.02, 0.03, 0.04];
        let t = tensor(3, |i, j| {
            let k = i * 3 + j;
            [1, 2, 3, 5].iter().position(|&p| p == k).map(|idx| vals[idx])
        });
        assert!((baseline_threshold(&t).unwrap() - 0.0325).abs() < 1e-15);
        let flat = tensor(3, |_, _| Some(0.05));
        assert_eq!(baseline_threshold(&flat).unwrap(), 0.05);
        let few = tensor(2, |_, _| Some(0.1));
        assert!(matches!(baseline_threshold(&few), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn threshold_examples() {
        let t = tensor(18, |i, j| Some(((i * 31 + j * 7) % 97) as f64 / 1000.0));
        assert!(threshold_network(&t, 1.0).unwrap().edges.is_empty());
        assert_eq!(threshold_network(&t, f64::NEG_INFINITY).unwrap().edges.len(), 306);
        let single = tensor(4, |i, j| Some(if (i, j) == (2, 1) { 0.5 } else { 0.0 }));
        let net = threshold_network(&single, 0.1).unwrap();
        assert_eq!(net.edges, vec![Edge { source: 2, target: 1, weight: 0.5 }]);
        assert!(threshold_network(&t, f64::NAN).is_err());
    }

    fn network_with_edges(n: usize, count: usize) -> (ContagionNetwork, FlowTensor) {
        let mut k = 0;
        let t = tensor(n, |i, j| {
            if i == j {
                return None;
            }
            k += 1;
            Some(if k <= count { 1.0 } else { 0.0 })
        });
        (threshold_network(&t, 0.5).unwrap(), t)
    }

    #[test]
    fn density_matches_table_arithmetic() {
        for (count, label) in [(98, "32.03"), (77, "25.16"), (306, "100.00")] {
            let (net, flows) = network_with_edges(18, count);
            let s = summarize(&net, &flows, RankBy::Degree).unwrap();
            assert_eq!(s.n_edges, count);
            assert_eq!(s.density_label(), label);
        }
    }

    #[test]
    fn empty_network_summary() {
        let (net, flows) = network_with_edges(5, 0);
        let s = summarize(&net, &flows, RankBy::Degree).unwrap();
        assert_eq!(s.density_pct, 0.0);
        assert!(s.mean_wqte.is_none());
        assert!(s.top_transmitter.is_none());
        assert_eq!(s.max_wqte, Some(0.0));
    }

    #[test]
    fn top_nodes_break_ties_lexicographically() {
        let t = tensor(3, |i, j| Some(if i != j && i < 2 && j == 2 { 1.0 } else { 0.0 }));
        let net = threshold_network(&t, 0.5).unwrap();
        let s = summarize(&net, &t, RankBy::Degree).unwrap();
        assert_eq!(s.top_transmitter.as_deref(), Some("M00"));
        assert_eq!(s.top_receiver.as_deref(), Some("M02"));
    }

    #[test]
    fn wqte_errors() {
        let a = vec![0.1; 60];
        assert!(matches!(wqte_pair(&a, &a[..59], 0.5), Err(Error::Domain(_))));
        assert!(matches!(wqte_pair(&a[..10], &a[..10], 0.5), Err(Error::InsufficientData(_))));
    }
}
