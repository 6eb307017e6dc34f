//! CSV and JSON artifacts. Missing statistics are written as empty cells.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use super::config::PipelineConfig;
use super::pipeline::{DetectionOutput, Inputs, PeriodAttribution, PeriodNetwork, PipelineReport};
use crate::attribution::{Method, N_CHANNELS};
use crate::error::{Error, Result};
use crate::ingest::Channel;

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn pct(x: Option<f64>) -> String {
    x.map(|v| format!("{:.2}", 100.0 * v)).unwrap_or_default()
}

/// File-name-safe form of a period label.
pub fn file_stem(period: &str) -> String {
    period
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

struct Table {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
}

impl Table {
    fn create(dir: &Path, name: &str, header: &[String]) -> Result<Self> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        let mut inner = csv::Writer::from_writer(BufWriter::new(file));
        inner.write_record(header)?;
        Ok(Self { path, inner })
    }

    fn row(&mut self, cells: Vec<String>) -> Result<()> {
        Ok(self.inner.write_record(&cells)?)
    }

    fn finish(mut self) -> Result<PathBuf> {
        self.inner.flush()?;
        Ok(self.path)
    }
}

fn header(cols: &[&str]) -> Vec<String> {
    cols.iter().map(|s| s.to_string()).collect()
}

fn channel_header(prefix: &[&str], suffix: &[&str]) -> Vec<String> {
    let mut h = header(prefix);
    h.extend(Channel::ALL.iter().map(|c| c.key().to_string()));
    h.extend(suffix.iter().map(|s| s.to_string()));
    h
}

pub fn write_detection(dir: &Path, detection: &DetectionOutput) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut t = Table::create(
        dir,
        "stage1_summary.csv",
        &header(&[
            "period",
            "scale",
            "tau",
            "n_pairs",
            "n_missing",
            "n_edges",
            "density_pct",
            "mean_wqte",
            "max_wqte",
            "top_transmitter",
            "top_receiver",
            "threshold",
        ]),
    )?;
    for p in &detection.periods {
        for (flows, _, s) in &p.cells {
            t.row(vec![
                p.period.name.clone(),
                flows.scale.to_string(),
                num(flows.tau),
                s.n_pairs.to_string(),
                flows.n_missing().to_string(),
                s.n_edges.to_string(),
                s.density_label(),
                opt(s.mean_wqte),
                opt(s.max_wqte),
                s.top_transmitter.clone().unwrap_or_default(),
                s.top_receiver.clone().unwrap_or_default(),
                num(detection.threshold),
            ])?;
        }
    }
    files.push(t.finish()?);

    for p in &detection.periods {
        let net = p.network();
        let mut t = Table::create(
            dir,
            &format!("edges_{}.csv", file_stem(&p.period.name)),
            &header(&["source", "target", "wqte"]),
        )?;
        for e in &net.edges {
            t.row(vec![net.nodes[e.source].clone(), net.nodes[e.target].clone(), num(e.weight)])?;
        }
        files.push(t.finish()?);
    }
    Ok(files)
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn rate(flags: &[bool]) -> Option<f64> {
    (!flags.is_empty()).then(|| flags.iter().filter(|f| **f).count() as f64 / flags.len() as f64)
}

pub fn write_attribution(dir: &Path, cfg: &PipelineConfig, periods: &[PeriodAttribution]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let Some(first) = periods.first() else {
        return Ok(files);
    };

    for m in &first.methods {
        let mut t = Table::create(
            dir,
            &format!("shares_{}.csv", m.file_key()),
            &channel_header(&["period", "n_links"], &["dominant"]),
        )?;
        for p in periods {
            let (n, shares) = p.shares.get(m).cloned().unwrap_or((0, None));
            let mut row = vec![p.period.clone(), n.to_string()];
            match shares {
                Some(s) => {
                    row.extend(s.iter().map(|v| num(*v)));
                    row.push(crate::attribution::dominant(&s).as_str().to_string());
                }
                None => row.extend(std::iter::repeat_n(String::new(), N_CHANNELS + 1)),
            }
            t.row(row)?;
        }
        files.push(t.finish()?);
    }

    let mut diag_header = header(&["period", "n_links"]);
    diag_header.extend(Channel::ALL.iter().map(|c| format!("f_{}", c.key())));
    diag_header.extend(header(&[
        "sargan_reject_pct",
        "dwh_reject_pct",
        "lasso_fallback_pct",
        "rigobon_run",
        "regime_degenerate",
        "n_notices",
    ]));
    let mut t = Table::create(dir, "diagnostics.csv", &diag_header)?;
    for p in periods {
        let diags: Vec<_> = p.links.iter().filter_map(|l| l.iv.as_ref().map(|(_, d)| d)).collect();
        let mut row = vec![p.period.clone(), diags.len().to_string()];
        for c in 0..N_CHANNELS {
            let fs: Vec<f64> = diags.iter().map(|d| d.first_stage_f[c]).collect();
            row.push(opt(mean(&fs)));
        }
        let sargan: Vec<bool> = diags.iter().filter_map(|d| d.sargan).map(|s| s.rejects(cfg.sargan_level)).collect();
        let dwh: Vec<bool> = diags.iter().filter_map(|d| d.dwh).map(|s| s.rejects(cfg.sargan_level)).collect();
        let fallback: Vec<bool> = p.links.iter().filter_map(|l| l.lasso.as_ref().map(|(_, s)| s.fallback)).collect();
        row.push(pct(rate(&sargan)));
        row.push(pct(rate(&dwh)));
        row.push(pct(rate(&fallback)));
        row.push(p.rigobon_run.to_string());
        row.push(p.regime_degenerate.to_string());
        row.push(p.notices.len().to_string());
        t.row(row)?;
    }
    files.push(t.finish()?);

    let mut t = Table::create(
        dir,
        "bootstrap_ci.csv",
        &header(&["period", "method", "channel", "share", "lo95", "hi95", "replications", "degenerate"]),
    )?;
    for p in periods {
        for (m, ci) in &p.bootstrap {
            for c in Channel::ALL {
                let i = c.index();
                t.row(vec![
                    p.period.clone(),
                    m.label(),
                    c.as_str().to_string(),
                    num(ci.point[i]),
                    num(ci.lo[i]),
                    num(ci.hi[i]),
                    ci.replications.to_string(),
                    ci.degenerate.to_string(),
                ])?;
            }
        }
    }
    files.push(t.finish()?);

    let mut t = Table::create(
        dir,
        "sensitivity.csv",
        &header(&["period", "channel", "n_links", "rv_mean", "rv_min", "rv_max"]),
    )?;
    for p in periods {
        let diags: Vec<_> = p.links.iter().filter_map(|l| l.iv.as_ref().map(|(_, d)| d)).collect();
        for c in Channel::ALL {
            let rv: Vec<f64> = diags.iter().map(|d| d.robustness_value[c.index()]).collect();
            let min = rv.iter().copied().reduce(f64::min);
            let max = rv.iter().copied().reduce(f64::max);
            t.row(vec![
                p.period.clone(),
                c.as_str().to_string(),
                rv.len().to_string(),
                opt(mean(&rv)),
                opt(min),
                opt(max),
            ])?;
        }
    }
    files.push(t.finish()?);

    let lp = Method::Lp(cfg.identification_horizon);
    let mut t = Table::create(
        dir,
        "identification_status.csv",
        &header(&["period", "iv", &lp.file_key(), "rigobon", "status"]),
    )?;
    for p in periods {
        let label = |m: Method| p.dominant(m).map(|c| c.as_str().to_string()).unwrap_or_default();
        let rigobon = if p.rigobon_run { label(Method::Rigobon) } else { String::new() };
        t.row(vec![
            p.period.clone(),
            label(Method::Iv2sls),
            label(lp),
            rigobon,
            p.identification.as_ref().map(|s| s.status.to_string()).unwrap_or_default(),
        ])?;
    }
    files.push(t.finish()?);
    Ok(files)
}

pub fn write_networks(dir: &Path, networks: &[PeriodNetwork]) -> Result<Vec<PathBuf>> {
    let mut t = Table::create(
        dir,
        "communities.csv",
        &header(&["period", "n_communities", "modularity", "community", "members"]),
    )?;
    for n in networks {
        for k in 0..n.communities.n_communities {
            let members: Vec<&str> = n
                .nodes
                .iter()
                .zip(&n.communities.assignments)
                .filter(|(_, a)| **a == k)
                .map(|(id, _)| id.as_str())
                .collect();
            t.row(vec![
                n.period.clone(),
                n.communities.n_communities.to_string(),
                num(n.communities.modularity),
                k.to_string(),
                members.join(" "),
            ])?;
        }
    }
    let communities = t.finish()?;

    let mut t = Table::create(
        dir,
        "degree_shares.csv",
        &header(&["period", "advanced_out", "emerging_out", "advanced_in", "emerging_in"]),
    )?;
    for n in networks {
        let d = &n.degree;
        t.row(vec![
            n.period.clone(),
            opt(d.advanced_out),
            opt(d.emerging_out),
            opt(d.advanced_in),
            opt(d.emerging_in),
        ])?;
    }
    Ok(vec![communities, t.finish()?])
}

/// Aligned returns, channel composites and period row counts.
pub fn write_inputs(dir: &Path, inputs: &Inputs) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let r = &inputs.returns;
    let mut h = header(&["date"]);
    h.extend(r.market_ids().iter().cloned());
    let mut t = Table::create(dir, "returns.csv", &h)?;
    for (row, d) in r.dates().iter().enumerate() {
        let mut cells = vec![d.to_string()];
        cells.extend((0..r.n_markets()).map(|i| num(r.returns()[(row, i)])));
        t.row(cells)?;
    }
    let returns = t.finish()?;

    let ch = &inputs.channels;
    let mut t = Table::create(dir, "channel_panel.csv", &channel_header(&["date"], &["global_factor"]))?;
    for (row, d) in ch.dates.iter().enumerate() {
        let mut cells = vec![d.to_string()];
        cells.extend((0..N_CHANNELS).map(|c| num(ch.channels[(row, c)])));
        cells.push(num(ch.global_factor[row]));
        t.row(cells)?;
    }
    let channels = t.finish()?;

    let mut t = Table::create(dir, "periods.csv", &header(&["period", "start", "end", "n_rows"]))?;
    for p in &inputs.schedule {
        t.row(vec![
            p.name.clone(),
            p.start.to_string(),
            p.end.to_string(),
            inputs.period_range(p).len().to_string(),
        ])?;
    }
    Ok(vec![returns, channels, t.finish()?])
}

/// Records the configuration, seed and versions; no timestamps or host paths.
pub fn write_manifest(dir: &Path, cfg: &PipelineConfig, report: &PipelineReport, files: &[PathBuf]) -> Result<PathBuf> {
    let names: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let manifest = json!({
        "tool": "contagion",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "threshold": report.detection.threshold,
        "periods": report.detection.periods.iter().map(|p| p.period.name.clone()).collect::<Vec<_>>(),
        "config": cfg,
        "files": names,
        "notices": report.notices(),
    });
    let path = dir.join("run_manifest.json");
    let mut f = BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(path)
}

/// Writes every artifact of a pipeline run into `dir`.
pub fn write_report(dir: &Path, cfg: &PipelineConfig, report: &PipelineReport) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = write_detection(dir, &report.detection)?;
    files.extend(write_attribution(dir, cfg, &report.attribution)?);
    files.extend(write_networks(dir, &report.networks)?);
    let manifest = write_manifest(dir, cfg, report, &files)?;
    files.push(manifest);
    Ok(files)
}
