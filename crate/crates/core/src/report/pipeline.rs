//! End-to-end orchestration of both stages.

use std::fs::File;
use std::io::BufReader;
use std::ops::Range;

use indexmap::IndexMap;
use log::{info, warn};
use rayon::prelude::*;

use super::config::{PipelineConfig, ThresholdMode};
use super::identification::{classify_identification, IdentificationStatus};
use crate::attribution::{
    self, bootstrap_shares, build_link_sample, fit_2sls, fit_lasso_iv, fit_local_projection, fit_rigobon,
    regime_partition, BootstrapInterval, DiagnosticsRecord, LinkSample, Method, PostDoubleSelection,
    StructuralEstimate, N_CHANNELS,
};
use crate::detect::{self, ContagionNetwork, DetectionSummary, FlowTensor};
use crate::error::{Error, Result};
use crate::ingest::{
    build_channels, compute_log_returns, load_market_classes, load_price_csv_with, load_series_csv, Channel,
    ChannelPanel, LoadOptions, ReturnPanel, SubPeriod,
};
use crate::network::{self, CommunityPartition, DegreeShares};
use crate::wavelet::{self, WaveletDecomposition};

/// Loaded and aligned inputs.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub returns: ReturnPanel,
    pub channels: ChannelPanel,
    pub schedule: Vec<SubPeriod>,
}

impl Inputs {
    pub fn period_range(&self, period: &SubPeriod) -> Range<usize> {
        period.row_range(self.returns.dates())
    }
}

fn open(cfg: &PipelineConfig, p: &std::path::Path) -> Result<BufReader<File>> {
    let path = cfg.resolve(p);
    File::open(&path)
        .map(BufReader::new)
        .map_err(|e| Error::from(e).context(path.display().to_string()))
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs> {
    let opts = LoadOptions {
        min_rows: cfg.min_rows,
        max_fill_gap: cfg.max_fill_gap,
    };
    let mut prices = load_price_csv_with(open(cfg, &cfg.prices)?, &opts).map_err(|e| e.context("prices"))?;
    if let Some(classes) = &cfg.classes {
        let map = load_market_classes(open(cfg, classes)?).map_err(|e| e.context("classes"))?;
        prices = prices.with_classes(&map)?;
    }
    let returns = compute_log_returns(&prices);
    let raw = load_series_csv(open(cfg, &cfg.channels)?).map_err(|e| e.context("channels"))?;
    let raw = raw.align_to(prices.dates()).map_err(|e| e.context("channels"))?;
    let channels = build_channels(&raw, &cfg.schedule, &returns).map_err(|e| e.context("channels"))?;
    Ok(Inputs {
        returns,
        channels,
        schedule: cfg.schedule.clone(),
    })
}

/// Stage-1 output for one period.
#[derive(Debug, Clone)]
pub struct PeriodDetection {
    pub period: SubPeriod,
    pub cells: Vec<(FlowTensor, ContagionNetwork, DetectionSummary)>,
    /// Index into `cells` of the reporting cell.
    pub reporting: usize,
}

impl PeriodDetection {
    pub fn network(&self) -> &ContagionNetwork {
        &self.cells[self.reporting].1
    }
}

#[derive(Debug, Clone)]
pub struct DetectionOutput {
    pub threshold: f64,
    pub periods: Vec<PeriodDetection>,
    pub notices: Vec<String>,
}

fn selected<'a>(schedule: &'a [SubPeriod], only: Option<&[String]>) -> Result<Vec<&'a SubPeriod>> {
    if let Some(names) = only {
        for n in names {
            if !schedule.iter().any(|p| &p.name == n) {
                return Err(Error::Domain(format!("unknown period {n}")));
            }
        }
    }
    Ok(schedule
        .iter()
        .filter(|p| only.is_none_or(|names| names.contains(&p.name)))
        .collect())
}

fn period_tensors(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    decomps: &[WaveletDecomposition],
    period: &SubPeriod,
) -> Result<Vec<FlowTensor>> {
    let range = inputs.period_range(period);
    if range.is_empty() {
        return Err(Error::InsufficientData(format!("sub-period {} contains no observations", period.name)));
    }
    let sliced: Vec<WaveletDecomposition> = decomps.iter().map(|d| d.slice(range.clone())).collect();
    cfg.cells()
        .into_iter()
        .map(|(s, tau)| {
            detect::flow_matrix(
                &period.name,
                inputs.returns.market_ids(),
                inputs.returns.market_class(),
                &sliced,
                s,
                tau,
            )
        })
        .collect::<Result<_>>()
        .map_err(|e| e.context(format!("period {}", period.name)))
}

/// Stage 1: decompositions, WQTE tensors, one baseline threshold, networks.
pub fn run_detection(cfg: &PipelineConfig, inputs: &Inputs, only: Option<&[String]>) -> Result<DetectionOutput> {
    let decomps = wavelet::modwt_panel(&inputs.returns, cfg.levels, cfg.filter)?;
    let cells = cfg.cells();
    let reporting = cells
        .iter()
        .position(|&(s, t)| s == cfg.reporting.scale && t == cfg.reporting.tau)
        .ok_or_else(|| Error::Domain("reporting cell not computed".into()))?;
    let baseline_name = cfg.baseline_name()?;
    let baseline = inputs
        .schedule
        .iter()
        .find(|p| p.name == baseline_name)
        .ok_or_else(|| Error::Domain(format!("baseline {baseline_name} is not in the schedule")))?;

    let mut notices = Vec::new();
    let mut cache: IndexMap<String, Vec<FlowTensor>> = IndexMap::new();
    let threshold = match cfg.threshold {
        ThresholdMode::Fixed { value } => value,
        ThresholdMode::BaselineQ75 => {
            let tensors = period_tensors(cfg, inputs, &decomps, baseline)?;
            let t = detect::baseline_threshold(&tensors[reporting])
                .map_err(|e| e.context(format!("baseline period {}", baseline.name)))?;
            cache.insert(baseline.name.clone(), tensors);
            t
        }
    };
    info!("threshold {threshold}");

    let mut periods = Vec::new();
    for period in selected(&inputs.schedule, only)? {
        let tensors = match cache.shift_remove(&period.name) {
            Some(t) => t,
            None => match period_tensors(cfg, inputs, &decomps, period) {
                Ok(t) => t,
                Err(e) => {
                    warn!("{e}");
                    notices.push(format!("{}: Stage 1 skipped: {e}", period.name));
                    continue;
                }
            },
        };
        let mut out = Vec::with_capacity(tensors.len());
        for flows in tensors {
            let net = detect::threshold_network(&flows, threshold)?;
            let summary = detect::summarize(&net, &flows, cfg.rank_by)?;
            out.push((flows, net, summary));
        }
        periods.push(PeriodDetection {
            period: period.clone(),
            cells: out,
            reporting,
        });
    }
    Ok(DetectionOutput {
        threshold,
        periods,
        notices,
    })
}

/// Stage-2 estimates for one directed link.
#[derive(Debug, Clone)]
pub struct LinkAttribution {
    pub source: String,
    pub target: String,
    pub iv: Option<(StructuralEstimate, DiagnosticsRecord)>,
    pub lasso: Option<(StructuralEstimate, PostDoubleSelection)>,
    pub lp: Vec<Option<StructuralEstimate>>,
    pub rigobon: Option<(StructuralEstimate, [bool; N_CHANNELS])>,
    pub errors: Vec<String>,
}

impl LinkAttribution {
    pub fn estimate(&self, method: Method, horizons: &[usize]) -> Option<&StructuralEstimate> {
        match method {
            Method::Iv2sls => self.iv.as_ref().map(|(e, _)| e),
            Method::LassoIv => self.lasso.as_ref().map(|(e, _)| e),
            Method::Lp(h) => horizons
                .iter()
                .position(|x| *x == h)
                .and_then(|k| self.lp[k].as_ref()),
            Method::Rigobon => self.rigobon.as_ref().map(|(e, _)| e),
            Method::Ols => None,
        }
    }
}

/// Period-level Stage-2 aggregates.
#[derive(Debug, Clone)]
pub struct PeriodAttribution {
    pub period: String,
    pub links: Vec<LinkAttribution>,
    pub methods: Vec<Method>,
    /// Aggregated shares per method with the number of contributing links.
    pub shares: IndexMap<Method, (usize, Option<[f64; N_CHANNELS]>)>,
    pub bootstrap: IndexMap<Method, BootstrapInterval>,
    pub rigobon_run: bool,
    pub regime_degenerate: bool,
    pub identification: Option<IdentificationStatus>,
    pub notices: Vec<String>,
}

impl PeriodAttribution {
    pub fn dominant(&self, method: Method) -> Option<Channel> {
        self.shares.get(&method).and_then(|(_, s)| s.as_ref()).map(attribution::dominant)
    }

    pub fn sargan_rejection_rate(&self, level: f64) -> Option<f64> {
        sargan_rejection_rate(&self.links, level)
    }
}

/// Share of links whose Sargan test rejects at `level`; links without a
/// Sargan statistic are ignored.
pub fn sargan_rejection_rate<'a>(links: impl IntoIterator<Item = &'a LinkAttribution>, level: f64) -> Option<f64> {
    let stats: Vec<bool> = links
        .into_iter()
        .filter_map(|l| l.iv.as_ref().and_then(|(_, d)| d.sargan))
        .map(|s| s.rejects(level))
        .collect();
    (!stats.is_empty()).then(|| stats.iter().filter(|r| **r).count() as f64 / stats.len() as f64)
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Bootstrap seed for a (period, method) pair, independent of run order.
pub fn bootstrap_seed(seed: u64, period_index: usize, method: Method) -> u64 {
    let m = match method {
        Method::Ols => 0,
        Method::Iv2sls => 1,
        Method::LassoIv => 2,
        Method::Lp(h) => 16 + h as u64,
        Method::Rigobon => 3,
    };
    mix(seed ^ mix(((period_index as u64) << 32) | m))
}

fn attribute_link(cfg: &PipelineConfig, sample: &LinkSample) -> LinkAttribution {
    let (source, target) = sample.pair.clone();
    let mut errors = Vec::new();
    let ctx = |what: &str, e: Error| format!("{}/{}->{} {what}: {e}", sample.period, source, target);
    let iv = fit_2sls(sample).map_err(|e| errors.push(ctx("IV", e))).ok();
    let lasso = fit_lasso_iv(sample).map_err(|e| errors.push(ctx("LASSO-IV", e))).ok();
    let lp = cfg
        .horizons
        .iter()
        .map(|h| {
            fit_local_projection(sample, *h)
                .map_err(|e| errors.push(ctx(&format!("LP h={h}"), e)))
                .ok()
        })
        .collect();
    LinkAttribution {
        source,
        target,
        iv,
        lasso,
        lp,
        rigobon: None,
        errors,
    }
}

/// Stage 2 for one period's reporting-cell network.
pub fn attribute_period(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    detection: &PeriodDetection,
    period_index: usize,
) -> Result<PeriodAttribution> {
    let name = detection.period.name.clone();
    let mut methods = vec![Method::Iv2sls, Method::LassoIv];
    methods.extend(cfg.horizons.iter().map(|h| Method::Lp(*h)));
    methods.push(Method::Rigobon);
    let mut out = PeriodAttribution {
        period: name.clone(),
        links: Vec::new(),
        methods: methods.clone(),
        shares: IndexMap::new(),
        bootstrap: IndexMap::new(),
        rigobon_run: false,
        regime_degenerate: false,
        identification: None,
        notices: Vec::new(),
    };
    let net = detection.network();
    if net.edges.is_empty() {
        let msg = format!("{name}: empty network, Stage 2 skipped");
        warn!("{msg}");
        out.notices.push(msg);
        for m in &methods {
            out.shares.insert(*m, (0, None));
        }
        return Ok(out);
    }

    let range = inputs.period_range(&detection.period);
    let returns = inputs.returns.slice_rows(range.clone());
    let channels = inputs.channels.slice_rows(range);
    let samples: Vec<std::result::Result<LinkSample, String>> = net
        .edges
        .iter()
        .map(|e| {
            let (s, t) = (&net.nodes[e.source], &net.nodes[e.target]);
            build_link_sample(
                &returns.series(e.source),
                &returns.series(e.target),
                (s.clone(), t.clone()),
                &channels,
                &name,
                &cfg.instruments,
            )
            .map_err(|err| format!("{name}/{s}->{t}: {err}"))
        })
        .collect();

    let mut links: Vec<Option<LinkAttribution>> = samples
        .par_iter()
        .map(|s| s.as_ref().ok().map(|s| attribute_link(cfg, s)))
        .collect();
    for s in &samples {
        if let Err(msg) = s {
            out.notices.push(msg.clone());
        }
    }

    let gate_rate = sargan_rejection_rate(links.iter().flatten(), cfg.sargan_level);
    let run_rigobon = cfg.force_rigobon || gate_rate.is_some_and(|r| r > cfg.sargan_gate);
    if run_rigobon {
        match regime_partition(&returns, cfg.regime_window) {
            Ok(partition) if !partition.degenerate => {
                out.rigobon_run = true;
                let fits: Vec<Option<std::result::Result<_, String>>> = samples
                    .par_iter()
                    .map(|s| {
                        s.as_ref().ok().map(|s| {
                            fit_rigobon(s, &partition.labels[s.row_offset..])
                                .map(|f| (f.estimate, f.no_shift))
                                .map_err(|e| format!("{name}/{}->{} Rigobon: {e}", s.pair.0, s.pair.1))
                        })
                    })
                    .collect();
                for (link, fit) in links.iter_mut().zip(fits) {
                    if let (Some(link), Some(fit)) = (link.as_mut(), fit) {
                        match fit {
                            Ok(f) => link.rigobon = Some(f),
                            Err(msg) => link.errors.push(msg),
                        }
                    }
                }
            }
            Ok(_) => {
                out.regime_degenerate = true;
                out.notices.push(format!("{name}: degenerate volatility regimes, Rigobon skipped"));
            }
            Err(e) => out.notices.push(format!("{name}: Rigobon skipped: {e}")),
        }
    }
    out.links = links.into_iter().flatten().collect();
    for l in &out.links {
        out.notices.extend(l.errors.iter().cloned());
    }

    for m in &methods {
        let mut link_shares = Vec::new();
        for l in &out.links {
            if let Some(est) = l.estimate(*m, &cfg.horizons) {
                match attribution::shares(est) {
                    Ok(s) => link_shares.push(s),
                    Err(e) => out.notices.push(format!("{name}/{}->{} {}: {e}", l.source, l.target, m.label())),
                }
            }
        }
        if link_shares.is_empty() {
            out.shares.insert(*m, (0, None));
            continue;
        }
        let agg = attribution::aggregate_period_shares(&link_shares)?;
        out.shares.insert(*m, (link_shares.len(), Some(agg)));
        let ci = bootstrap_shares(
            &link_shares,
            cfg.bootstrap_replications,
            bootstrap_seed(cfg.seed, period_index, *m),
        )?;
        out.bootstrap.insert(*m, ci);
    }

    let mut dominants = Vec::new();
    for m in [Method::Iv2sls, Method::Lp(cfg.identification_horizon), Method::Rigobon] {
        if let Some(c) = out.dominant(m) {
            dominants.push((m.label(), c));
        }
    }
    let labels: Vec<Channel> = dominants.iter().map(|(_, c)| *c).collect();
    match classify_identification(&labels) {
        Ok(status) => {
            out.identification = Some(IdentificationStatus {
                period: name.clone(),
                dominants,
                status,
            })
        }
        Err(e) => out.notices.push(format!("{name}: {e}")),
    }
    Ok(out)
}

pub fn run_attribution(
    cfg: &PipelineConfig,
    inputs: &Inputs,
    detection: &DetectionOutput,
) -> Result<Vec<PeriodAttribution>> {
    detection
        .periods
        .iter()
        .map(|p| {
            let idx = inputs
                .schedule
                .iter()
                .position(|s| s.name == p.period.name)
                .expect("detected period is scheduled");
            attribute_period(cfg, inputs, p, idx)
        })
        .collect()
}

/// Community structure and degree shares of one period's network.
#[derive(Debug, Clone)]
pub struct PeriodNetwork {
    pub period: String,
    pub nodes: Vec<String>,
    pub communities: CommunityPartition,
    pub degree: DegreeShares,
}

pub fn analyse_networks(detection: &DetectionOutput, steps: usize) -> Vec<PeriodNetwork> {
    detection
        .periods
        .iter()
        .map(|p| {
            let net = p.network();
            PeriodNetwork {
                period: p.period.name.clone(),
                nodes: net.nodes.clone(),
                communities: network::walktrap(&network::symmetrize(net), steps),
                degree: network::degree_decomposition(net),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub detection: DetectionOutput,
    pub attribution: Vec<PeriodAttribution>,
    pub networks: Vec<PeriodNetwork>,
}

impl PipelineReport {
    pub fn notices(&self) -> Vec<String> {
        let mut out = self.detection.notices.clone();
        for a in &self.attribution {
            out.extend(a.notices.iter().cloned());
        }
        out
    }
}

pub const WALKTRAP_STEPS: usize = 4;

/// Both stages plus network analysis, without writing anything.
pub fn run_pipeline(cfg: &PipelineConfig, only: Option<&[String]>) -> Result<PipelineReport> {
    cfg.validate()?;
    let inputs = load_inputs(cfg)?;
    let detection = run_detection(cfg, &inputs, only)?;
    let attribution = run_attribution(cfg, &inputs, &detection)?;
    let networks = analyse_networks(&detection, WALKTRAP_STEPS);
    Ok(PipelineReport {
        detection,
        attribution,
        networks,
    })
}
