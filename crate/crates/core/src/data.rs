//! Daily consumption + weather panel: ingestion, validation, preprocessing and
//! the standardized regressor matrix used by the GP kernel.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const N_WEATHER: usize = 7;
pub const N_REGRESSORS: usize = N_WEATHER + 2;

/// Angular frequency of the yearly cycle, in radians per day.
pub const OMEGA: f64 = 2.0 * std::f64::consts::PI / 365.0;

pub const WEATHER_COLUMNS: [&str; N_WEATHER] = [
    "temperature",
    "wind_speed",
    "precipitation",
    "chill",
    "solar_radiation",
    "humidity",
    "cloud_cover",
];

pub const REGRESSOR_NAMES: [&str; N_REGRESSORS] = [
    "temperature",
    "wind_speed",
    "precipitation",
    "chill",
    "solar_radiation",
    "humidity",
    "cloud_cover",
    "cos_year",
    "sin_year",
];

pub const HUMIDITY: usize = 5;
pub const CLOUD_COVER: usize = 6;

pub type Weather = [f64; N_WEATHER];
pub type Regressors = [f64; N_REGRESSORS];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    /// MWh, strictly positive.
    pub consumption: f64,
    pub weather: Weather,
}

/// Ordered daily panel. Row `i` has day index `first_day + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyPanel {
    records: Vec<DailyRecord>,
    first_day: u32,
}

impl DailyPanel {
    /// Validates and sorts the records. Row numbers in errors are 1-based
    /// positions in `records` as given.
    pub fn new(records: Vec<DailyRecord>) -> Result<Self> {
        let mut numbered: Vec<(usize, DailyRecord)> = records
            .into_iter()
            .enumerate()
            .map(|(i, r)| (i + 1, r))
            .collect();
        for (row, rec) in &numbered {
            validate_record(*row, rec)?;
        }
        numbered.sort_by_key(|(row, r)| (r.date, *row));
        for pair in numbered.windows(2) {
            if pair[0].1.date == pair[1].1.date {
                return Err(Error::DuplicateDate {
                    row: pair[1].0,
                    date: pair[1].1.date,
                });
            }
        }
        Ok(Self {
            records: numbered.into_iter().map(|(_, r)| r).collect(),
            first_day: 1,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[DailyRecord] {
        &self.records
    }

    pub fn first_day(&self) -> u32 {
        self.first_day
    }

    /// Re-anchor the day index so that row 0 has index `t`.
    pub fn with_first_day(mut self, t: u32) -> Self {
        self.first_day = t;
        self
    }

    pub fn day_index(&self, row: usize) -> u32 {
        self.first_day + row as u32
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.records.iter().map(|r| r.date).collect()
    }

    pub fn consumption(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.consumption).collect()
    }

    pub fn log_consumption(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.consumption.ln()).collect()
    }

    pub fn position(&self, date: NaiveDate) -> Option<usize> {
        self.records.binary_search_by_key(&date, |r| r.date).ok()
    }

    /// Sub-panel over `rows`, keeping the day index of each row.
    pub fn slice(&self, rows: Range<usize>) -> DailyPanel {
        DailyPanel {
            first_day: self.day_index(rows.start),
            records: self.records[rows].to_vec(),
        }
    }

    /// Calendar features of row `row`.
    pub fn calendar(&self, row: usize) -> CalendarDay {
        CalendarDay::new(self.day_index(row), self.records[row].date)
    }

    pub fn calendars(&self) -> Vec<CalendarDay> {
        (0..self.len()).map(|i| self.calendar(i)).collect()
    }
}

fn validate_record(row: usize, rec: &DailyRecord) -> Result<()> {
    if !(rec.consumption > 0.0) || !rec.consumption.is_finite() {
        return Err(Error::NonPositiveConsumption {
            row,
            value: rec.consumption,
        });
    }
    for (j, v) in rec.weather.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Parse {
                row,
                field: WEATHER_COLUMNS[j].to_string(),
                message: format!("non-finite value {v}"),
            });
        }
    }
    let bounded = [
        (HUMIDITY, "humidity", 0.0, 100.0),
        (CLOUD_COVER, "cloud_cover", 0.0, 8.0),
    ];
    for (j, field, min, max) in bounded {
        let value = rec.weather[j];
        if !(min..=max).contains(&value) {
            return Err(Error::OutOfRange {
                row,
                field,
                value,
                min,
                max,
            });
        }
    }
    Ok(())
}

/// Day index `t` plus the weekday needed by the calendar regressors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalendarDay {
    pub t: u32,
    pub weekday: Weekday,
}

impl CalendarDay {
    pub fn new(t: u32, date: NaiveDate) -> Self {
        Self {
            t,
            weekday: date.weekday(),
        }
    }

    pub fn cos(&self) -> f64 {
        (OMEGA * self.t as f64).cos()
    }

    pub fn sin(&self) -> f64 {
        (OMEGA * self.t as f64).sin()
    }

    pub fn is_saturday(&self) -> bool {
        self.weekday == Weekday::Sat
    }

    pub fn is_sunday(&self) -> bool {
        self.weekday == Weekday::Sun
    }
}

// ---------------------------------------------------------------------------
// CSV

pub const CANONICAL_HEADER: [&str; 2 + N_WEATHER] = [
    "date",
    "consumption",
    "temperature",
    "wind_speed",
    "precipitation",
    "chill",
    "solar_radiation",
    "humidity",
    "cloud_cover",
];

/// Maps canonical field names to the header names found in a CSV file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    #[serde(flatten)]
    renames: BTreeMap<String, String>,
}

impl ColumnMap {
    pub fn canonical() -> Self {
        Self::default()
    }

    pub fn rename(mut self, canonical: &str, header: &str) -> Self {
        self.renames
            .insert(canonical.to_string(), header.to_string());
        self
    }

    fn header_for<'a>(&'a self, canonical: &'a str) -> &'a str {
        self.renames
            .get(canonical)
            .map(String::as_str)
            .unwrap_or(canonical)
    }
}

pub fn load_panel(path: impl AsRef<Path>, schema: &ColumnMap) -> Result<DailyPanel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_panel(file, schema)
}

pub fn read_panel(reader: impl Read, schema: &ColumnMap) -> Result<DailyPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut index = [0usize; 2 + N_WEATHER];
    for (slot, name) in index.iter_mut().zip(CANONICAL_HEADER) {
        let header = schema.header_for(name);
        *slot = headers
            .iter()
            .position(|h| h == header)
            .ok_or_else(|| Error::MissingColumn(header.to_string()))?;
    }

    let mut records = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 1;
        let field = |k: usize| -> Result<&str> {
            let v = row.get(index[k]).unwrap_or("");
            if v.is_empty() {
                Err(Error::Parse {
                    row: line,
                    field: CANONICAL_HEADER[k].to_string(),
                    message: "missing value".to_string(),
                })
            } else {
                Ok(v)
            }
        };
        let number = |k: usize| -> Result<f64> {
            let raw = field(k)?;
            raw.parse::<f64>().map_err(|e| Error::Parse {
                row: line,
                field: CANONICAL_HEADER[k].to_string(),
                message: format!("`{raw}`: {e}"),
            })
        };
        let raw_date = field(0)?;
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|e| Error::Parse {
            row: line,
            field: "date".to_string(),
            message: format!("`{raw_date}`: {e}"),
        })?;
        let consumption = number(1)?;
        let mut weather = [0.0; N_WEATHER];
        for (j, w) in weather.iter_mut().enumerate() {
            *w = number(2 + j)?;
        }
        records.push(DailyRecord {
            date,
            consumption,
            weather,
        });
    }
    DailyPanel::new(records)
}

pub fn write_panel(panel: &DailyPanel, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CANONICAL_HEADER)?;
    for r in panel.records() {
        let mut fields = vec![r.date.to_string(), r.consumption.to_string()];
        fields.extend(r.weather.iter().map(f64::to_string));
        w.write_record(&fields)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<panel csv>".into(),
        source,
    })?;
    Ok(())
}

pub fn save_panel(panel: &DailyPanel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_panel(panel, std::io::BufWriter::new(file))
}

// ---------------------------------------------------------------------------
// Preprocessing

pub fn is_leap_day(date: NaiveDate) -> bool {
    date.month() == 2 && date.day() == 29
}

/// Drops every February 29th. Day indices stay contiguous over the remaining rows.
pub fn strip_leap_days(panel: DailyPanel) -> DailyPanel {
    let first_day = panel.first_day;
    DailyPanel {
        records: panel
            .records
            .into_iter()
            .filter(|r| !is_leap_day(r.date))
            .collect(),
        first_day,
    }
}

/// Next calendar day, skipping February 29th.
pub fn next_day(date: NaiveDate) -> NaiveDate {
    let mut d = date.succ_opt().expect("date overflow");
    if is_leap_day(d) {
        d = d.succ_opt().expect("date overflow");
    }
    d
}

/// Calendar days (February 29th excluded) in `range` with no row in `panel`.
pub fn missing_dates(panel: &DailyPanel, range: DateRange) -> Vec<NaiveDate> {
    range
        .days()
        .filter(|d| panel.position(*d).is_none())
        .collect()
}

/// Indices whose residual from the seasonal fit exceeds `k` robust standard
/// deviations.
///
/// The scale is the MAD of all residuals, which an outlier cannot inflate, so
/// the flagged set is already a fixpoint for a fixed seasonal fit. Iterating
/// against a refitted seasonal curve is done by `glm::flag_outliers`.
pub fn detect_outliers(
    log_consumption: &[f64],
    seasonal_fit: &[f64],
    k: f64,
) -> Result<Vec<usize>> {
    crate::error::check_len(log_consumption.len(), seasonal_fit.len())?;
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "outlier threshold k = {k}"
        )));
    }
    let residuals: Vec<f64> = log_consumption
        .iter()
        .zip(seasonal_fit)
        .map(|(y, f)| y - f)
        .collect();
    let center = stats::median(&residuals);
    let scale = stats::robust_std(&residuals);
    Ok(residuals
        .iter()
        .enumerate()
        .filter(|(_, r)| (*r - center).abs() > k * scale)
        .map(|(i, _)| i)
        .collect())
}

// ---------------------------------------------------------------------------
// Split

/// Inclusive date interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidSplit(format!(
                "range {start}..{end} is empty"
            )));
        }
        Ok(Self { start, end })
    }

    /// Days in the range, February 29th excluded.
    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start
            .iter_days()
            .take_while(move |d| *d <= self.end)
            .filter(|d| !is_leap_day(*d))
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end)
    }
}

impl FromStr for DateRange {
    type Err = Error;

    /// Accepts `START:END` or `START..END` with ISO dates.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once("..")
            .or_else(|| s.split_once(':'))
            .ok_or_else(|| Error::InvalidSplit(format!("`{s}` is not START:END")))?;
        let parse = |x: &str| {
            NaiveDate::parse_from_str(x.trim(), "%Y-%m-%d")
                .map_err(|e| Error::InvalidSplit(format!("`{x}`: {e}")))
        };
        DateRange::new(parse(a)?, parse(b)?)
    }
}

/// In-sample / out-of-sample partition. The OS range must start on the day
/// after the IS range ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub in_sample: DateRange,
    pub out_of_sample: DateRange,
}

/// Row ranges of a resolved split. `in_sample.end == out_of_sample.start`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitRows {
    pub in_sample: Range<usize>,
    pub out_of_sample: Range<usize>,
}

impl SplitSpec {
    pub fn new(in_sample: DateRange, out_of_sample: DateRange) -> Result<Self> {
        let spec = Self {
            in_sample,
            out_of_sample,
        };
        if !spec.is_contiguous() {
            return Err(Error::InvalidSplit(format!(
                "out-of-sample range must start on {} (day after {})",
                next_day(in_sample.end),
                in_sample.end
            )));
        }
        Ok(spec)
    }

    pub fn is_contiguous(&self) -> bool {
        self.out_of_sample.start == next_day(self.in_sample.end)
    }

    /// Locate both ranges in a leap-day-free panel; every day must be present.
    pub fn resolve(&self, panel: &DailyPanel) -> Result<SplitRows> {
        let mut missing = missing_dates(panel, self.in_sample);
        missing.extend(missing_dates(panel, self.out_of_sample));
        if !missing.is_empty() {
            return Err(Error::MissingDates(missing));
        }
        let is_start = panel.position(self.in_sample.start).expect("checked");
        let is_end = panel.position(self.in_sample.end).expect("checked") + 1;
        let os_end = panel.position(self.out_of_sample.end).expect("checked") + 1;
        if os_end - is_start != self.in_sample.days().count() + self.out_of_sample.days().count() {
            return Err(Error::InvalidSplit(
                "panel contains February 29th inside the split; strip leap days first".into(),
            ));
        }
        if is_end - is_start < 366 {
            log::warn!(
                "in-sample range has {} days, less than one seasonal cycle",
                is_end - is_start
            );
        }
        Ok(SplitRows {
            in_sample: is_start..is_end,
            out_of_sample: is_end..os_end,
        })
    }
}

// ---------------------------------------------------------------------------
// Regressors

/// Raw (unstandardized) kernel regressors of one day: weather then cos/sin(ωt).
pub fn raw_regressors(weather: &Weather, calendar: CalendarDay) -> Regressors {
    let mut x = [0.0; N_REGRESSORS];
    x[..N_WEATHER].copy_from_slice(weather);
    x[N_WEATHER] = calendar.cos();
    x[N_WEATHER + 1] = calendar.sin();
    x
}

/// Per-column affine map frozen on the training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Regressors,
    pub std: Regressors,
}

impl Standardization {
    /// Column means and sample standard deviations. Constant columns are rejected.
    pub fn fit(rows: &[Regressors]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InsufficientData(
                "standardization needs at least two training rows".into(),
            ));
        }
        let mut mean = [0.0; N_REGRESSORS];
        let mut std = [0.0; N_REGRESSORS];
        for j in 0..N_REGRESSORS {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            mean[j] = stats::mean(&col);
            std[j] = stats::sample_std(&col);
            if !(std[j] > 1e-12 * mean[j].abs().max(1.0)) {
                return Err(Error::ConstantColumn(REGRESSOR_NAMES[j].to_string()));
            }
        }
        Ok(Self { mean, std })
    }

    pub fn identity() -> Self {
        Self {
            mean: [0.0; N_REGRESSORS],
            std: [1.0; N_REGRESSORS],
        }
    }

    pub fn apply(&self, raw: &Regressors) -> Regressors {
        let mut x = [0.0; N_REGRESSORS];
        for j in 0..N_REGRESSORS {
            x[j] = (raw[j] - self.mean[j]) / self.std[j];
        }
        x
    }
}

/// Standardized regressors for every row of a panel, with the statistics used.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorMatrix {
    pub dates: Vec<NaiveDate>,
    pub rows: Vec<Regressors>,
    pub standardization: Standardization,
}

impl RegressorMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn slice(&self, rows: Range<usize>) -> RegressorMatrix {
        RegressorMatrix {
            dates: self.dates[rows.clone()].to_vec(),
            rows: self.rows[rows].to_vec(),
            standardization: self.standardization.clone(),
        }
    }

    /// Apply frozen statistics to every row of `panel`.
    pub fn with_standardization(panel: &DailyPanel, standardization: Standardization) -> Self {
        let rows = panel
            .records()
            .iter()
            .enumerate()
            .map(|(i, r)| standardization.apply(&raw_regressors(&r.weather, panel.calendar(i))))
            .collect();
        Self {
            dates: panel.dates(),
            rows,
            standardization,
        }
    }
}

/// Build the 9-column regressor matrix for all rows of `panel`, standardized
/// with statistics computed on `training` rows only.
pub fn build_regressors(panel: &DailyPanel, training: Range<usize>) -> Result<RegressorMatrix> {
    if training.is_empty() || training.end > panel.len() {
        return Err(Error::InvalidSplit(format!(
            "training rows {training:?} outside panel of {} rows",
            panel.len()
        )));
    }
    let raw: Vec<Regressors> = training
        .map(|i| raw_regressors(&panel.records()[i].weather, panel.calendar(i)))
        .collect();
    let standardization = Standardization::fit(&raw)?;
    Ok(RegressorMatrix::with_standardization(
        panel,
        standardization,
    ))
}
