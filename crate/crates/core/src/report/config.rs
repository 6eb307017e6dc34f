use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attribution::InstrumentSpec;
use crate::detect::RankBy;
use crate::error::{Error, Result};
use crate::ingest::{default_schedule, validate_schedule, SubPeriod};
use crate::wavelet::WaveletFilter;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Q75 of positive WQTE values in the baseline period.
    BaselineQ75,
    Fixed { value: f64 },
}

/// The (scale, τ) cell that feeds networks and Stage 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportingCell {
    pub scale: usize,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Input paths; relative paths resolve against the config file's directory.
    pub prices: PathBuf,
    pub channels: PathBuf,
    pub classes: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub schedule: Vec<SubPeriod>,
    /// Baseline period name; the first scheduled period when absent.
    pub baseline: Option<String>,
    pub levels: usize,
    pub filter: WaveletFilter,
    pub scales: Vec<usize>,
    pub quantiles: Vec<f64>,
    pub reporting: ReportingCell,
    pub threshold: ThresholdMode,
    pub rank_by: RankBy,
    pub horizons: Vec<usize>,
    /// LP horizon compared against IV and Rigobon for identification status.
    pub identification_horizon: usize,
    pub instruments: InstrumentSpec,
    pub bootstrap_replications: usize,
    pub seed: u64,
    pub sargan_level: f64,
    pub sargan_gate: f64,
    pub force_rigobon: bool,
    pub regime_window: usize,
    pub max_fill_gap: usize,
    pub min_rows: usize,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            prices: PathBuf::from("prices.csv"),
            channels: PathBuf::from("channels.csv"),
            classes: None,
            output_dir: None,
            schedule: default_schedule(),
            baseline: None,
            levels: 6,
            filter: WaveletFilter::La8,
            scales: vec![5],
            quantiles: vec![0.05, 0.50, 0.95],
            reporting: ReportingCell { scale: 5, tau: 0.50 },
            threshold: ThresholdMode::BaselineQ75,
            rank_by: RankBy::Degree,
            horizons: vec![1, 5, 22],
            identification_horizon: 5,
            instruments: InstrumentSpec::default(),
            bootstrap_replications: 300,
            seed: 20_260_318,
            sargan_level: 0.05,
            sargan_gate: 0.50,
            force_rigobon: false,
            regime_window: 22,
            max_fill_gap: crate::ingest::MAX_FILL_GAP,
            min_rows: 30,
            base_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::from(e).context(path.display().to_string()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn baseline_name(&self) -> Result<&str> {
        match &self.baseline {
            Some(b) => Ok(b),
            None => self
                .schedule
                .first()
                .map(|p| p.name.as_str())
                .ok_or_else(|| Error::Domain("empty schedule".into())),
        }
    }

    /// All (scale, τ) cells, scales outermost.
    pub fn cells(&self) -> Vec<(usize, f64)> {
        self.scales
            .iter()
            .flat_map(|s| self.quantiles.iter().map(move |q| (*s, *q)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        validate_schedule(&self.schedule)?;
        let baseline = self.baseline_name()?;
        if !self.schedule.iter().any(|p| p.name == baseline) {
            return Err(Error::Domain(format!("baseline {baseline} is not in the schedule")));
        }
        if self.quantiles.is_empty() || self.quantiles.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            return Err(Error::Domain("quantiles must lie in (0, 1)".into()));
        }
        if self.levels == 0 || self.scales.is_empty() || self.scales.iter().any(|s| *s == 0 || *s > self.levels) {
            return Err(Error::Domain(format!("scales must lie in 1..={}", self.levels)));
        }
        if !self.scales.contains(&self.reporting.scale) || !self.quantiles.contains(&self.reporting.tau) {
            return Err(Error::Domain("reporting cell must be one of the computed cells".into()));
        }
        if self.bootstrap_replications == 0 {
            return Err(Error::Domain("bootstrap replications must be at least 1".into()));
        }
        if !self.horizons.contains(&self.identification_horizon) {
            return Err(Error::Domain("identification horizon must be one of the horizons".into()));
        }
        if let ThresholdMode::Fixed { value } = self.threshold {
            if !value.is_finite() {
                return Err(Error::Domain("fixed threshold must be finite".into()));
            }
        }
        if !(0.0..=1.0).contains(&self.sargan_gate) || !(self.sargan_level > 0.0 && self.sargan_level < 1.0) {
            return Err(Error::Domain("sargan gate and level must be probabilities".into()));
        }
        if self.regime_window < 2 {
            return Err(Error::Domain("regime window must be at least 2".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let back: PipelineConfig = serde_json::from_str(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.cells(), vec![(5, 0.05), (5, 0.5), (5, 0.95)]);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg: PipelineConfig =
            serde_json::from_str(r#"{"prices": "p.csv", "threshold": {"mode": "fixed", "value": 0.02}}"#).unwrap();
        assert_eq!(cfg.threshold, ThresholdMode::Fixed { value: 0.02 });
        assert_eq!(cfg.bootstrap_replications, 300);
    }

    #[test]
    fn rejects_bad_quantile() {
        let cfg = PipelineConfig {
            quantiles: vec![0.5, 1.0],
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
