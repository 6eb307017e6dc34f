use std::io::{Read, Write};

use chrono::NaiveDate;
use indexmap::IndexMap;
use nalgebra::DMatrix;

use super::{MarketClass, PricePanel, RawSeriesTable};
use crate::error::{Error, Result};

/// Longest run of missing prices that is forward-filled rather than dropped.
pub const MAX_FILL_GAP: usize = 5;

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub min_rows: usize,
    pub max_fill_gap: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            min_rows: 30,
            max_fill_gap: MAX_FILL_GAP,
        }
    }
}

fn parse_date(s: &str, line: usize) -> Result<NaiveDate> {
    s.trim()
        .parse::<NaiveDate>()
        .map_err(|e| Error::Parse(format!("line {line}: bad date {s:?}: {e}")))
}

fn parse_cell(s: &str, line: usize, column: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.is_empty() || s == "." || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| Error::Parse(format!("line {line}, column {column}: not a number: {s:?}")))
}

struct Sheet {
    header: Vec<String>,
    rows: Vec<(NaiveDate, Vec<Option<f64>>)>,
}

fn read_sheet<R: Read>(source: R) -> Result<Sheet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.first().map(|h| h.to_ascii_lowercase()) != Some("date".to_string()) {
        return Err(Error::Schema("first column header must be \"date\"".into()));
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = idx + 2;
        let date = parse_date(&record[0], line)?;
        let values = record
            .iter()
            .skip(1)
            .zip(header.iter().skip(1))
            .map(|(cell, col)| parse_cell(cell, line, col))
            .collect::<Result<Vec<_>>>()?;
        rows.push((date, values));
    }
    rows.sort_by_key(|(d, _)| *d);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::Parse(format!("duplicate date {}", w[0].0)));
    }
    Ok(Sheet { header, rows })
}

pub fn load_price_csv<R: Read>(source: R) -> Result<PricePanel> {
    load_price_csv_with(source, &LoadOptions::default())
}

/// Reads `date,<market>...` closing prices.
///
/// Missing cells are forward-filled when the run of consecutive gaps for
/// that market is at most `max_fill_gap` rows and a prior value exists;
/// otherwise every row of the run is dropped from the whole panel.
pub fn load_price_csv_with<R: Read>(source: R, opts: &LoadOptions) -> Result<PricePanel> {
    let sheet = read_sheet(source)?;
    let market_ids: Vec<String> = sheet.header[1..].to_vec();
    let n = market_ids.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{n} market column(s); at least 2 required")));
    }
    let t = sheet.rows.len();
    let mut cells: Vec<Vec<Option<f64>>> = vec![vec![None; t]; n];
    for (r, (_, values)) in sheet.rows.iter().enumerate() {
        for (c, v) in values.iter().enumerate().take(n) {
            if let Some(p) = v {
                if !(*p > 0.0) {
                    return Err(Error::Domain(format!(
                        "non-positive price {p} for {} on {}",
                        market_ids[c], sheet.rows[r].0
                    )));
                }
            }
            cells[c][r] = *v;
        }
    }

    let mut keep = vec![true; t];
    for column in cells.iter_mut() {
        let mut r = 0;
        while r < t {
            if column[r].is_some() {
                r += 1;
                continue;
            }
            let start = r;
            while r < t && column[r].is_none() {
                r += 1;
            }
            let prior = if start > 0 { column[start - 1] } else { None };
            match prior {
                Some(v) if r - start <= opts.max_fill_gap => column[start..r].fill(Some(v)),
                _ => keep[start..r].fill(false),
            }
        }
    }

    let kept: Vec<usize> = (0..t).filter(|&r| keep[r]).collect();
    if kept.len() < opts.min_rows {
        return Err(Error::InsufficientData(format!(
            "{} usable rows; at least {} required",
            kept.len(),
            opts.min_rows
        )));
    }
    let dates = kept.iter().map(|&r| sheet.rows[r].0).collect();
    let prices = DMatrix::from_fn(kept.len(), n, |r, c| {
        cells[c][kept[r]].expect("gaps filled or dropped")
    });
    PricePanel::new(dates, prices, market_ids, vec![MarketClass::Advanced; n])
}

/// Reads the two-column `market_id,class` sidecar.
pub fn load_market_classes<R: Read>(source: R) -> Result<IndexMap<String, MarketClass>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers()?.clone();
    if header.len() != 2 || &header[0] != "market_id" || &header[1] != "class" {
        return Err(Error::Schema("class sidecar header must be market_id,class".into()));
    }
    let mut out = IndexMap::new();
    for record in reader.records() {
        let record = record?;
        out.insert(record[0].to_string(), record[1].parse()?);
    }
    Ok(out)
}

/// Reads an arbitrary `date,<series>...` table, keeping gaps as `None`.
pub fn load_series_csv<R: Read>(source: R) -> Result<RawSeriesTable> {
    let sheet = read_sheet(source)?;
    let mut columns: IndexMap<String, Vec<Option<f64>>> = sheet.header[1..]
        .iter()
        .map(|h| (h.clone(), Vec::with_capacity(sheet.rows.len())))
        .collect();
    let mut dates = Vec::with_capacity(sheet.rows.len());
    for (date, values) in sheet.rows {
        dates.push(date);
        for (col, v) in columns.values_mut().zip(values) {
            col.push(v);
        }
    }
    Ok(RawSeriesTable::new(dates, columns))
}

/// Writes a price panel in the loader's format. Floats use the shortest
/// round-tripping representation so reloading is bit-exact.
pub fn write_price_csv<W: Write>(panel: &PricePanel, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["date".to_string()];
    header.extend(panel.market_ids().iter().cloned());
    w.write_record(&header)?;
    for (r, date) in panel.dates().iter().enumerate() {
        let mut rec = vec![date.to_string()];
        rec.extend(panel.prices().row(r).iter().map(|p| format!("{p:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series_csv<W: Write>(table: &RawSeriesTable, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["date".to_string()];
    header.extend(table.columns().keys().cloned());
    w.write_record(&header)?;
    for (r, date) in table.dates().iter().enumerate() {
        let mut rec = vec![date.to_string()];
        rec.extend(
            table
                .columns()
                .values()
                .map(|col| col[r].map(|v| format!("{v:?}")).unwrap_or_default()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(min_rows: usize) -> LoadOptions {
        LoadOptions {
            min_rows,
            ..LoadOptions::default()
        }
    }

    #[test]
    fn small_well_formed_csv() {
        let csv = "date,A,B\n2020-01-01,1,2\n2020-01-02,1.5,2.5\n2020-01-03,2,3\n";
        let p = load_price_csv_with(csv.as_bytes(), &opts(1)).unwrap();
        assert_eq!(p.n_rows(), 3);
        assert_eq!(p.n_markets(), 2);
    }

    #[test]
    fn zero_price_is_domain_error() {
        let csv = "date,A,B\n2020-01-01,1,2\n2020-01-02,0,2.5\n";
        assert!(matches!(
            load_price_csv_with(csv.as_bytes(), &opts(1)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn unsorted_dates_are_sorted() {
        let sorted = "date,A,B\n2020-01-01,1,2\n2020-01-02,1.5,2.5\n2020-01-03,2,3\n";
        let shuffled = "date,A,B\n2020-01-03,2,3\n2020-01-01,1,2\n2020-01-02,1.5,2.5\n";
        assert_eq!(
            load_price_csv_with(sorted.as_bytes(), &opts(1)).unwrap(),
            load_price_csv_with(shuffled.as_bytes(), &opts(1)).unwrap()
        );
    }

    #[test]
    fn malformed_date_and_short_inputs() {
        let bad = "date,A,B\n2020-13-01,1,2\n";
        assert!(matches!(load_price_csv(bad.as_bytes()), Err(Error::Parse(_))));
        let one_market = "date,A\n2020-01-01,1\n";
        assert!(matches!(
            load_price_csv(one_market.as_bytes()),
            Err(Error::InsufficientData(_))
        ));
        let short = "date,A,B\n2020-01-01,1,2\n2020-01-02,1,2\n";
        assert!(matches!(load_price_csv(short.as_bytes()), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn short_gaps_fill_long_gaps_drop() {
        let mut csv = String::from("date,A,B\n");
        for day in 1..=20 {
            let a = if (3..=5).contains(&day) { String::new() } else { format!("{day}") };
            let b = if (10..=15).contains(&day) { String::new() } else { "7".to_string() };
            csv.push_str(&format!("2020-01-{day:02},{a},{b}\n"));
        }
        let p = load_price_csv_with(csv.as_bytes(), &opts(1)).unwrap();
        // 6-day gap in B removes days 10..=15; 3-day gap in A is filled with day 2's price.
        assert_eq!(p.n_rows(), 14);
        assert_eq!(p.prices()[(2, 0)], 2.0);
        assert_eq!(p.dates()[9].to_string(), "2020-01-16");
    }

    #[test]
    fn class_sidecar() {
        let csv = "market_id,class\nUSA,advanced\nCHN,emerging\n";
        let classes = load_market_classes(csv.as_bytes()).unwrap();
        assert_eq!(classes["CHN"], MarketClass::Emerging);
        assert!(load_market_classes("id,class\n".as_bytes()).is_err());
    }

    #[test]
    fn price_csv_round_trips() {
        let csv = "date,A,B\n2020-01-01,1.1,2\n2020-01-02,1.5,2.123456789012345\n";
        let p = load_price_csv_with(csv.as_bytes(), &opts(1)).unwrap();
        let mut buf = Vec::new();
        write_price_csv(&p, &mut buf).unwrap();
        assert_eq!(load_price_csv_with(buf.as_slice(), &opts(1)).unwrap(), p);
    }
}
