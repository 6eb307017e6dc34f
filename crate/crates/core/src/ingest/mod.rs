//! Market panels, log-returns, sub-period schedules and channel composites.

mod channels;
mod csv_io;

pub use channels::{build_channels, channel_composites, Channel, ChannelPanel, RawSeriesTable, REQUIRED_CHANNEL_COLUMNS};
pub use csv_io::{
    load_market_classes, load_price_csv, load_price_csv_with, load_series_csv, write_price_csv,
    write_series_csv, LoadOptions, MAX_FILL_GAP,
};

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use chrono::NaiveDate;
use indexmap::IndexMap;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MarketClass {
    Advanced,
    Emerging,
}

impl MarketClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            MarketClass::Advanced => "advanced",
            MarketClass::Emerging => "emerging",
        }
    }
}

impl fmt::Display for MarketClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MarketClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "advanced" | "developed" => Ok(MarketClass::Advanced),
            "emerging" => Ok(MarketClass::Emerging),
            other => Err(Error::Parse(format!("unknown market class {other:?}"))),
        }
    }
}

/// Date-aligned closing prices, one column per market.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    prices: DMatrix<f64>,
    market_ids: Vec<String>,
    market_class: Vec<MarketClass>,
}

impl PricePanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        prices: DMatrix<f64>,
        market_ids: Vec<String>,
        market_class: Vec<MarketClass>,
    ) -> Result<Self> {
        if market_ids.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "{} market(s); at least 2 required",
                market_ids.len()
            )));
        }
        if prices.ncols() != market_ids.len() || market_class.len() != market_ids.len() {
            return Err(Error::Domain(format!(
                "{} price columns, {} labels, {} classes",
                prices.ncols(),
                market_ids.len(),
                market_class.len()
            )));
        }
        if prices.nrows() != dates.len() {
            return Err(Error::Domain("price rows do not match dates".into()));
        }
        check_increasing(&dates)?;
        if let Some(p) = prices.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return Err(Error::Domain(format!("non-positive or non-finite price {p}")));
        }
        Ok(Self {
            dates,
            prices,
            market_ids,
            market_class,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn market_ids(&self) -> &[String] {
        &self.market_ids
    }

    pub fn market_class(&self) -> &[MarketClass] {
        &self.market_class
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_markets(&self) -> usize {
        self.market_ids.len()
    }

    /// Replaces class labels from a `market_id → class` lookup.
    pub fn with_classes(mut self, classes: &IndexMap<String, MarketClass>) -> Result<Self> {
        for (i, id) in self.market_ids.iter().enumerate() {
            self.market_class[i] = *classes
                .get(id)
                .ok_or_else(|| Error::Schema(format!("no class given for market {id}")))?;
        }
        Ok(self)
    }
}

/// Log-returns, T × N.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    returns: DMatrix<f64>,
    market_ids: Vec<String>,
    market_class: Vec<MarketClass>,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        returns: DMatrix<f64>,
        market_ids: Vec<String>,
        market_class: Vec<MarketClass>,
    ) -> Result<Self> {
        if returns.nrows() != dates.len()
            || returns.ncols() != market_ids.len()
            || market_class.len() != market_ids.len()
        {
            return Err(Error::Domain("return panel dimensions disagree".into()));
        }
        check_increasing(&dates)?;
        if returns.iter().any(|r| !r.is_finite()) {
            return Err(Error::Domain("non-finite return".into()));
        }
        Ok(Self {
            dates,
            returns,
            market_ids,
            market_class,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn market_ids(&self) -> &[String] {
        &self.market_ids
    }

    pub fn market_class(&self) -> &[MarketClass] {
        &self.market_class
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_markets(&self) -> usize {
        self.market_ids.len()
    }

    pub fn series(&self, market: usize) -> Vec<f64> {
        self.returns.column(market).iter().copied().collect()
    }

    /// Rows `range` as a new panel.
    pub fn slice_rows(&self, range: Range<usize>) -> ReturnPanel {
        ReturnPanel {
            dates: self.dates[range.clone()].to_vec(),
            returns: self.returns.rows(range.start, range.len()).into_owned(),
            market_ids: self.market_ids.clone(),
            market_class: self.market_class.clone(),
        }
    }
}

fn check_increasing(dates: &[NaiveDate]) -> Result<()> {
    if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::Domain(format!(
            "dates not strictly increasing at {} → {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// `r[t][i] = ln p[t+1][i] − ln p[t][i]`, dated at the later observation.
pub fn compute_log_returns(panel: &PricePanel) -> ReturnPanel {
    let (t, n) = panel.prices.shape();
    let returns = DMatrix::from_fn(t.saturating_sub(1), n, |r, c| {
        panel.prices[(r + 1, c)].ln() - panel.prices[(r, c)].ln()
    });
    ReturnPanel {
        dates: panel.dates.iter().skip(1).copied().collect(),
        returns,
        market_ids: panel.market_ids.clone(),
        market_class: panel.market_class.clone(),
    }
}

/// Cross-sectional mean return per date.
pub fn global_factor(panel: &ReturnPanel) -> Vec<f64> {
    let n = panel.n_markets() as f64;
    panel
        .returns
        .row_iter()
        .map(|row| row.iter().sum::<f64>() / n)
        .collect()
}

/// A named, closed date interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubPeriod {
    pub name: String,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl SubPeriod {
    pub fn new(name: impl Into<String>, start: NaiveDate, end: NaiveDate) -> Result<Self> {
        let name = name.into();
        if start >= end {
            return Err(Error::Domain(format!("sub-period {name}: start {start} not before end {end}")));
        }
        Ok(Self { name, start, end })
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Index range of `dates` (sorted ascending) that falls inside the period.
    pub fn row_range(&self, dates: &[NaiveDate]) -> Range<usize> {
        let lo = dates.partition_point(|d| *d < self.start);
        let hi = dates.partition_point(|d| *d <= self.end);
        lo..hi.max(lo)
    }
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

/// The eight crisis windows, January 2006 through March 2026.
pub fn default_schedule() -> Vec<SubPeriod> {
    [
        ("Pre-Crisis", ymd(2006, 1, 12), ymd(2007, 7, 31)),
        ("GFC", ymd(2007, 8, 1), ymd(2009, 6, 30)),
        ("ESDC", ymd(2009, 12, 1), ymd(2012, 6, 30)),
        ("CSC", ymd(2015, 6, 15), ymd(2016, 12, 31)),
        ("Pre-COVID", ymd(2017, 1, 1), ymd(2020, 1, 31)),
        ("COVID-19", ymd(2020, 2, 1), ymd(2021, 12, 31)),
        ("Russia-Ukraine", ymd(2022, 2, 1), ymd(2023, 12, 31)),
        ("Mid-East/Tariffs", ymd(2024, 1, 1), ymd(2026, 3, 18)),
    ]
    .into_iter()
    .map(|(name, start, end)| SubPeriod {
        name: name.to_string(),
        start,
        end,
    })
    .collect()
}

/// Checks ordering within each period and pairwise disjointness.
pub fn validate_schedule(schedule: &[SubPeriod]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::Domain("empty sub-period schedule".into()));
    }
    for p in schedule {
        if p.start >= p.end {
            return Err(Error::Domain(format!("sub-period {} has start ≥ end", p.name)));
        }
    }
    let mut sorted: Vec<&SubPeriod> = schedule.iter().collect();
    sorted.sort_by_key(|p| p.start);
    for w in sorted.windows(2) {
        if w[1].start <= w[0].end {
            return Err(Error::Domain(format!(
                "sub-periods {} and {} overlap",
                w[0].name, w[1].name
            )));
        }
    }
    let mut names: Vec<&str> = schedule.iter().map(|p| p.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Domain("duplicate sub-period name".into()));
    }
    Ok(())
}

/// Slices the panel into the schedule's periods, in schedule order.
pub fn partition_subperiods(
    panel: &ReturnPanel,
    schedule: &[SubPeriod],
) -> Result<IndexMap<String, ReturnPanel>> {
    validate_schedule(schedule)?;
    let mut out = IndexMap::with_capacity(schedule.len());
    for period in schedule {
        let range = period.row_range(&panel.dates);
        if range.is_empty() {
            return Err(Error::InsufficientData(format!(
                "sub-period {} contains no observations",
                period.name
            )));
        }
        out.insert(period.name.clone(), panel.slice_rows(range));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn panel(prices: &[[f64; 2]]) -> PricePanel {
        let dates = (0..prices.len())
            .map(|i| d("2020-01-01") + chrono::Days::new(i as u64))
            .collect();
        let m = DMatrix::from_fn(prices.len(), 2, |r, c| prices[r][c]);
        PricePanel::new(
            dates,
            m,
            vec!["A".into(), "B".into()],
            vec![MarketClass::Advanced; 2],
        )
        .unwrap()
    }

    #[test]
    fn log_return_examples() {
        let e = std::f64::consts::E;
        let r = compute_log_returns(&panel(&[[100.0, 100.0], [100.0, 100.0 * e]]));
        assert_eq!(r.returns()[(0, 0)], 0.0);
        assert!((r.returns()[(0, 1)] - 1.0).abs() < 1e-15);

        let r = compute_log_returns(&panel(&[[100.0, 1.0], [105.0, 1.0], [103.0, 1.0]]));
        assert_eq!(r.n_rows(), 2);
        // hand arithmetic: ln(105/100) = 0.04879016416943..., ln(103/105) = -0.01923136671...
        assert!((r.returns()[(0, 0)] - 0.048_790_164_169_432).abs() < 1e-14);
        assert!((r.returns()[(1, 0)] + 0.019_231_361_927_887_6).abs() < 1e-14);
    }

    #[test]
    fn global_factor_is_cross_sectional_mean() {
        let r = ReturnPanel::new(
            vec![d("2020-01-02"), d("2020-01-03")],
            DMatrix::from_row_slice(2, 3, &[1e-3, 2e-3, 6e-3, 0.0, 0.0, 0.0]),
            vec!["A".into(), "B".into(), "C".into()],
            vec![MarketClass::Advanced; 3],
        )
        .unwrap();
        let f = global_factor(&r);
        assert!((f[0] - 3e-3).abs() < 1e-18);
        assert_eq!(f[1], 0.0);
    }

    #[test]
    fn default_schedule_is_valid_and_matches_windows() {
        let s = default_schedule();
        validate_schedule(&s).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s[0].start, d("2006-01-12"));
        assert_eq!(s[0].end, d("2007-07-31"));
        assert_eq!(s[1].start, d("2007-08-01"));
        assert_eq!(s[7].end, d("2026-03-18"));
    }

    #[test]
    fn partition_is_closed_interval_and_errors_on_empty() {
        let dates: Vec<NaiveDate> = (0..10).map(|i| d("2020-01-01") + chrono::Days::new(i)).collect();
        let r = ReturnPanel::new(
            dates.clone(),
            DMatrix::from_fn(10, 2, |i, j| (i + j) as f64 * 1e-3),
            vec!["A".into(), "B".into()],
            vec![MarketClass::Advanced; 2],
        )
        .unwrap();
        let whole = SubPeriod::new("all", dates[0], dates[9]).unwrap();
        let parts = partition_subperiods(&r, &[whole]).unwrap();
        assert_eq!(parts["all"], r);

        let a = SubPeriod::new("a", dates[2], dates[4]).unwrap();
        let b = SubPeriod::new("b", dates[5], dates[7]).unwrap();
        let parts = partition_subperiods(&r, &[a.clone(), b]).unwrap();
        assert_eq!(parts["a"].dates()[0], dates[2]);
        assert_eq!(parts["a"].n_rows(), 3);
        assert_eq!(parts["b"].n_rows(), 3);

        let empty = SubPeriod::new("later", d("2021-01-01"), d("2021-02-01")).unwrap();
        let err = partition_subperiods(&r, &[empty]).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(ref m) if m.contains("later")));

        let overlapping = SubPeriod::new("c", dates[4], dates[6]).unwrap();
        assert!(partition_subperiods(&r, &[a, overlapping]).is_err());
    }

    #[test]
    fn market_class_parsing() {
        assert_eq!("Emerging".parse::<MarketClass>().unwrap(), MarketClass::Emerging);
        assert_eq!("developed".parse::<MarketClass>().unwrap(), MarketClass::Advanced);
        assert!("frontier".parse::<MarketClass>().is_err());
    }
}
