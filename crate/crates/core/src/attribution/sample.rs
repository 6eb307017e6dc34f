use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Channel, ChannelPanel};

/// Minimum usable rows in a link sample after lag trimming.
pub const MIN_LINK_ROWS: usize = 60;

/// Layout of the excluded-instrument matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrumentSpec {
    /// Own-channel lags, applied to every channel.
    pub lags: Vec<usize>,
    /// Pairwise products of channels, taken at `interaction_lag`.
    pub interactions: Vec<(Channel, Channel)>,
    pub interaction_lag: usize,
}

impl Default for InstrumentSpec {
    fn default() -> Self {
        Self {
            lags: vec![5, 10, 15],
            interactions: vec![
                (Channel::Trade, Channel::Financial),
                (Channel::Geopolitical, Channel::Monetary),
                (Channel::Behavioural, Channel::Financial),
            ],
            interaction_lag: 5,
        }
    }
}

impl InstrumentSpec {
    pub fn max_lag(&self) -> usize {
        self.lags
            .iter()
            .copied()
            .chain((!self.interactions.is_empty()).then_some(self.interaction_lag))
            .max()
            .unwrap_or(0)
            .max(1)
    }

    pub fn n_instruments(&self) -> usize {
        self.lags.len() * Channel::ALL.len() + self.interactions.len()
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_instruments());
        for c in Channel::ALL {
            for lag in &self.lags {
                out.push(format!("{}_l{lag}", c.key()));
            }
        }
        for (a, b) in &self.interactions {
            out.push(format!("{}x{}_l{}", a.key(), b.key(), self.interaction_lag));
        }
        out
    }
}

/// Lagged-channel instruments for rows `max_lag..T` of `channels` (T × 5).
///
/// Columns: for each channel in fixed order, its lags in `spec.lags` order;
/// then the configured interaction products.
pub fn build_instruments(channels: &DMatrix<f64>, spec: &InstrumentSpec) -> Result<DMatrix<f64>> {
    let t = channels.nrows();
    let lag = spec.max_lag();
    if channels.ncols() != Channel::ALL.len() {
        return Err(Error::Domain(format!("expected 5 channel columns, got {}", channels.ncols())));
    }
    if t <= lag {
        return Err(Error::InsufficientData(format!("{t} rows; instruments need more than {lag}")));
    }
    let rows = t - lag;
    let mut z = DMatrix::zeros(rows, spec.n_instruments());
    let mut col = 0;
    for c in 0..Channel::ALL.len() {
        for &l in &spec.lags {
            for r in 0..rows {
                z[(r, col)] = channels[(r + lag - l, c)];
            }
            col += 1;
        }
    }
    let il = spec.interaction_lag;
    for (a, b) in &spec.interactions {
        for r in 0..rows {
            z[(r, col)] = channels[(r + lag - il, a.index())] * channels[(r + lag - il, b.index())];
        }
        col += 1;
    }
    Ok(z)
}

/// Everything the Stage-2 estimators need for one directed link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkSample {
    pub period: String,
    pub pair: (String, String),
    /// `C_t = r_i,t · r_j,t`
    pub comovement: DVector<f64>,
    /// `C_{t-1}`
    pub comovement_lag: DVector<f64>,
    /// T × 5
    pub channels: DMatrix<f64>,
    pub global_factor: DVector<f64>,
    /// T × k excluded instruments
    pub instruments: DMatrix<f64>,
    pub instrument_labels: Vec<String>,
    /// Rows of the source period dropped at the front by lag trimming.
    pub row_offset: usize,
}

impl LinkSample {
    /// Trims `max_lag` leading rows from an arbitrary outcome series.
    pub fn from_outcome(
        period: impl Into<String>,
        pair: (String, String),
        outcome: &[f64],
        channels: &DMatrix<f64>,
        global_factor: &[f64],
        spec: &InstrumentSpec,
    ) -> Result<Self> {
        let t = outcome.len();
        if channels.nrows() != t || global_factor.len() != t {
            return Err(Error::Domain("link inputs are not aligned".into()));
        }
        let lag = spec.max_lag();
        if t < lag + MIN_LINK_ROWS {
            return Err(Error::InsufficientData(format!(
                "{t} rows leave {} after trimming {lag}; at least {MIN_LINK_ROWS} required",
                t.saturating_sub(lag)
            )));
        }
        let rows = t - lag;
        let instruments = build_instruments(channels, spec)?;
        Ok(Self {
            period: period.into(),
            pair,
            comovement: DVector::from_fn(rows, |r, _| outcome[r + lag]),
            comovement_lag: DVector::from_fn(rows, |r, _| outcome[r + lag - 1]),
            channels: channels.rows(lag, rows).into_owned(),
            global_factor: DVector::from_fn(rows, |r, _| global_factor[r + lag]),
            instruments,
            instrument_labels: spec.labels(),
            row_offset: lag,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.comovement.len()
    }

    /// Exogenous controls `[1, f_t, C_{t-1}]`.
    pub fn controls(&self) -> DMatrix<f64> {
        let n = self.n_obs();
        DMatrix::from_fn(n, 3, |r, c| match c {
            0 => 1.0,
            1 => self.global_factor[r],
            _ => self.comovement_lag[r],
        })
    }

    /// Copy with the outcome (and its lag) multiplied by `c`.
    pub fn with_scaled_outcome(&self, c: f64) -> LinkSample {
        let mut out = self.clone();
        out.comovement *= c;
        out.comovement_lag *= c;
        out
    }
}

/// Builds the link sample for `i → j` from period-sliced returns and channels.
pub fn build_link_sample(
    returns_i: &[f64],
    returns_j: &[f64],
    pair: (String, String),
    channels: &ChannelPanel,
    period: &str,
    spec: &InstrumentSpec,
) -> Result<LinkSample> {
    if returns_i.len() != returns_j.len() || returns_i.len() != channels.n_rows() {
        return Err(Error::Domain("returns and channels are not aligned".into()));
    }
    let comovement: Vec<f64> = returns_i.iter().zip(returns_j).map(|(a, b)| a * b).collect();
    LinkSample::from_outcome(period, pair, &comovement, &channels.channels, &channels.global_factor, spec)
}
