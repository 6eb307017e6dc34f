use std::fmt;

use chrono::NaiveDate;
use indexmap::IndexMap;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{global_factor, ReturnPanel, SubPeriod};
use crate::error::{Error, Result};
use crate::linalg;
use crate::stats;

/// The five transmission channels, in their fixed column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    Trade,
    Financial,
    Geopolitical,
    Behavioural,
    Monetary,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Trade,
        Channel::Financial,
        Channel::Geopolitical,
        Channel::Behavioural,
        Channel::Monetary,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Channel> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Trade => "Trade",
            Channel::Financial => "Financial",
            Channel::Geopolitical => "Geopolitical",
            Channel::Behavioural => "Behavioural",
            Channel::Monetary => "Monetary",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Channel::Trade => "trade",
            Channel::Financial => "financial",
            Channel::Geopolitical => "geopolitical",
            Channel::Behavioural => "behavioural",
            Channel::Monetary => "monetary",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const REQUIRED_CHANNEL_COLUMNS: [&str; 10] = [
    "VIX", "HYOAS", "STLFSI", "DTWEXBGS", "GPR", "GEOEVENT", "UMCSENT", "FFR", "T10Y3M", "QE",
];

/// Named source series on a date index; cells may be missing until aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeriesTable {
    dates: Vec<NaiveDate>,
    columns: IndexMap<String, Vec<Option<f64>>>,
}

impl RawSeriesTable {
    pub fn new(dates: Vec<NaiveDate>, columns: IndexMap<String, Vec<Option<f64>>>) -> Self {
        Self { dates, columns }
    }

    pub fn from_dense(dates: Vec<NaiveDate>, columns: IndexMap<String, Vec<f64>>) -> Self {
        let columns = columns
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().map(Some).collect()))
            .collect();
        Self { dates, columns }
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn columns(&self) -> &IndexMap<String, Vec<Option<f64>>> {
        &self.columns
    }

    /// Re-indexes onto `calendar`, carrying each series' latest observation
    /// dated on or before the calendar date forward.
    pub fn align_to(&self, calendar: &[NaiveDate]) -> Result<RawSeriesTable> {
        let mut columns = IndexMap::with_capacity(self.columns.len());
        for (name, values) in &self.columns {
            let mut out = Vec::with_capacity(calendar.len());
            let mut src = 0;
            let mut last: Option<f64> = None;
            for date in calendar {
                while src < self.dates.len() && self.dates[src] <= *date {
                    if let Some(v) = values[src] {
                        last = Some(v);
                    }
                    src += 1;
                }
                match last {
                    Some(v) => out.push(Some(v)),
                    None => {
                        return Err(Error::InsufficientData(format!(
                            "series {name} has no observation on or before {date}"
                        )))
                    }
                }
            }
            columns.insert(name.clone(), out);
        }
        Ok(RawSeriesTable {
            dates: calendar.to_vec(),
            columns,
        })
    }

    fn dense(&self, name: &str) -> Result<Vec<f64>> {
        let col = self
            .columns
            .get(name)
            .ok_or_else(|| Error::Schema(format!("missing channel source column {name}")))?;
        col.iter()
            .enumerate()
            .map(|(r, v)| {
                v.filter(|x| x.is_finite()).ok_or_else(|| {
                    Error::Domain(format!("column {name} has a gap at {}; align first", self.dates[r]))
                })
            })
            .collect()
    }
}

/// Channel composites plus the global factor on the return calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPanel {
    pub dates: Vec<NaiveDate>,
    /// T × 5, columns in [`Channel::ALL`] order.
    pub channels: DMatrix<f64>,
    pub global_factor: Vec<f64>,
}

impl ChannelPanel {
    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn column(&self, channel: Channel) -> Vec<f64> {
        self.channels.column(channel.index()).iter().copied().collect()
    }

    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> ChannelPanel {
        ChannelPanel {
            dates: self.dates[range.clone()].to_vec(),
            channels: self.channels.rows(range.start, range.len()).into_owned(),
            global_factor: self.global_factor[range].to_vec(),
        }
    }
}

fn z(name: &str, xs: &[f64]) -> Result<Vec<f64>> {
    stats::standardize(xs).ok_or_else(|| Error::DegenerateSeries(format!("{name} has zero variance")))
}

fn row_mean(cols: &[&[f64]]) -> Vec<f64> {
    let k = cols.len() as f64;
    (0..cols[0].len())
        .map(|t| cols.iter().map(|c| c[t]).sum::<f64>() / k)
        .collect()
}

/// Builds the five composites from a source table aligned to the *price*
/// calendar (one row longer than the returns). The first row only feeds the
/// first differences; output rows are dated `raw.dates()[1..]`.
pub fn channel_composites(
    raw: &RawSeriesTable,
    schedule: &[SubPeriod],
) -> Result<(Vec<NaiveDate>, DMatrix<f64>)> {
    for name in REQUIRED_CHANNEL_COLUMNS {
        if !raw.columns.contains_key(name) {
            return Err(Error::Schema(format!("missing channel source column {name}")));
        }
    }
    if raw.dates.len() < 3 {
        return Err(Error::InsufficientData("channel table needs at least 3 rows".into()));
    }
    let level = |name: &str| -> Result<Vec<f64>> { Ok(raw.dense(name)?[1..].to_vec()) };
    let diff = |name: &str, log: bool| -> Result<Vec<f64>> {
        let v = raw.dense(name)?;
        if log {
            if let Some(x) = v.iter().find(|x| !(**x > 0.0)) {
                return Err(Error::Domain(format!("{name} must be positive for log-differences, got {x}")));
            }
            Ok(v.windows(2).map(|w| w[1].ln() - w[0].ln()).collect())
        } else {
            Ok(v.windows(2).map(|w| w[1] - w[0]).collect())
        }
    };

    let trade = z("DTWEXBGS", &diff("DTWEXBGS", true)?)?;
    let financial = z(
        "Financial",
        &row_mean(&[
            &z("VIX", &level("VIX")?)?,
            &z("HYOAS", &level("HYOAS")?)?,
            &z("STLFSI", &level("STLFSI")?)?,
        ]),
    )?;
    let geopolitical = z(
        "Geopolitical",
        &row_mean(&[&z("GPR", &level("GPR")?)?, &z("GEOEVENT", &level("GEOEVENT")?)?]),
    )?;
    let monetary = z(
        "Monetary",
        &row_mean(&[
            &z("FFR", &diff("FFR", false)?)?,
            &z("T10Y3M", &level("T10Y3M")?)?,
            &z("QE", &level("QE")?)?,
        ]),
    )?;
    let sentiment = z("UMCSENT", &level("UMCSENT")?)?;
    let dates: Vec<NaiveDate> = raw.dates[1..].to_vec();
    let behavioural = z(
        "Behavioural",
        &residualize_within_periods(&sentiment, &financial, &dates, schedule)?,
    )?;

    let t = dates.len();
    let cols = [&trade, &financial, &geopolitical, &behavioural, &monetary];
    let m = DMatrix::from_fn(t, 5, |r, c| cols[c][r]);
    Ok((dates, m))
}

/// OLS residual of `y` on `[1, x]` separately inside every sub-period and
/// once more over all out-of-schedule rows.
fn residualize_within_periods(
    y: &[f64],
    x: &[f64],
    dates: &[NaiveDate],
    schedule: &[SubPeriod],
) -> Result<Vec<f64>> {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); schedule.len() + 1];
    for (t, d) in dates.iter().enumerate() {
        let g = schedule.iter().position(|p| p.contains(*d)).unwrap_or(schedule.len());
        groups[g].push(t);
    }
    let mut out = vec![0.0; y.len()];
    for rows in groups.iter().filter(|g| !g.is_empty()) {
        let n = rows.len();
        let yy = DVector::from_iterator(n, rows.iter().map(|&t| y[t]));
        let with_slope = DMatrix::from_fn(n, 2, |r, c| if c == 0 { 1.0 } else { x[rows[r]] });
        let fit = match linalg::ols(&with_slope, &yy) {
            Ok(fit) => fit,
            Err(Error::SingularDesign(_)) | Err(Error::InsufficientData(_)) => {
                linalg::ols(&DMatrix::from_element(n, 1, 1.0), &yy)?
            }
            Err(e) => return Err(e),
        };
        for (k, &t) in rows.iter().enumerate() {
            out[t] = fit.residuals[k];
        }
    }
    Ok(out)
}

/// Composites on the return calendar together with the global factor.
///
/// `raw` must already be aligned to the price calendar, i.e. its dates are
/// the price dates and `raw.dates()[1..]` equals the return dates.
pub fn build_channels(
    raw: &RawSeriesTable,
    schedule: &[SubPeriod],
    returns: &ReturnPanel,
) -> Result<ChannelPanel> {
    let (dates, channels) = channel_composites(raw, schedule)?;
    if dates != returns.dates() {
        return Err(Error::Domain(
            "channel table is not aligned to the return calendar".into(),
        ));
    }
    Ok(ChannelPanel {
        dates,
        channels,
        global_factor: global_factor(returns),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::MarketClass;

    fn calendar(n: usize) -> Vec<NaiveDate> {
        let start: NaiveDate = "2015-01-01".parse().unwrap();
        (0..n).map(|i| start + chrono::Days::new(i as u64)).collect()
    }

    fn wiggle(n: usize, a: f64, b: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64) * a).sin() + b * ((i as f64) * 0.37).cos() + 3.0).collect()
    }

    fn raw_table(n: usize) -> RawSeriesTable {
        let mut cols = IndexMap::new();
        for (k, name) in REQUIRED_CHANNEL_COLUMNS.iter().enumerate() {
            let mut v = wiggle(n, 0.1 + 0.07 * k as f64, 0.2 * k as f64);
            if *name == "QE" {
                v = (0..n).map(|i| if (i / 17) % 2 == 0 { 1.0 } else { 0.0 }).collect();
            }
            cols.insert(name.to_string(), v);
        }
        RawSeriesTable::from_dense(calendar(n), cols)
    }

    fn returns_for(dates: &[NaiveDate]) -> ReturnPanel {
        let n = dates.len();
        ReturnPanel::new(
            dates.to_vec(),
            DMatrix::from_fn(n, 2, |r, c| ((r * 3 + c) % 7) as f64 * 1e-3),
            vec!["A".into(), "B".into()],
            vec![MarketClass::Advanced; 2],
        )
        .unwrap()
    }

    fn schedule(dates: &[NaiveDate]) -> Vec<SubPeriod> {
        vec![
            SubPeriod::new("p1", dates[1], dates[60]).unwrap(),
            SubPeriod::new("p2", dates[61], dates[150]).unwrap(),
        ]
    }

    #[test]
    fn composites_are_standardized_and_orthogonal() {
        let raw = raw_table(201);
        let sched = schedule(raw.dates());
        let ret = returns_for(&raw.dates()[1..]);
        let panel = build_channels(&raw, &sched, &ret).unwrap();
        assert_eq!(panel.n_rows(), 200);
        for c in Channel::ALL {
            let col = panel.column(c);
            assert!(stats::mean(&col).abs() < 1e-9, "{c} mean");
            assert!((stats::sd(&col) - 1.0).abs() < 1e-9, "{c} sd");
        }
        let fin = panel.column(Channel::Financial);
        let beh = panel.column(Channel::Behavioural);
        for p in &sched {
            let range = p.row_range(&panel.dates);
            let dot: f64 = range.clone().map(|t| fin[t] * beh[t]).sum();
            assert!(dot.abs() / range.len() as f64 <= 1e-8);
        }
    }

    #[test]
    fn identical_inputs_give_identical_zscores() {
        let n = 80;
        let base = wiggle(n, 0.3, 0.5);
        let mut cols = IndexMap::new();
        for name in REQUIRED_CHANNEL_COLUMNS {
            cols.insert(name.to_string(), base.clone());
        }
        let raw = RawSeriesTable::from_dense(calendar(n), cols);
        let (_, m) = channel_composites(&raw, &[]).unwrap();
        let expected = stats::standardize(&base[1..]).unwrap();
        for t in 0..n - 1 {
            assert!((m[(t, Channel::Financial.index())] - expected[t]).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_qe_is_degenerate() {
        let mut raw = raw_table(100);
        raw.columns.insert("QE".into(), vec![Some(1.0); 100]);
        assert!(matches!(channel_composites(&raw, &[]), Err(Error::DegenerateSeries(_))));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let mut raw = raw_table(100);
        raw.columns.shift_remove("GPR");
        assert!(matches!(channel_composites(&raw, &[]), Err(Error::Schema(_))));
    }

    #[test]
    fn build_is_deterministic() {
        let raw = raw_table(201);
        let sched = schedule(raw.dates());
        let a = channel_composites(&raw, &sched).unwrap();
        let b = channel_composites(&raw, &sched).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monthly_series_forward_fill() {
        let dates = calendar(5);
        let mut cols = IndexMap::new();
        cols.insert("UMCSENT".to_string(), vec![Some(70.0), None, None, Some(72.0), None]);
        let raw = RawSeriesTable::new(dates.clone(), cols);
        let aligned = raw.align_to(&dates[1..]).unwrap();
        assert_eq!(
            aligned.columns()["UMCSENT"],
            vec![Some(70.0), Some(70.0), Some(72.0), Some(72.0)]
        );
        let early: NaiveDate = "2014-12-01".parse().unwrap();
        assert!(raw.align_to(&[early]).is_err());
    }
}
