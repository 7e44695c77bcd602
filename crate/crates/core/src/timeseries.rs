//! Labelled univariate time series: loading, label windows, uniform
//! resampling and expanding-window cross-validation folds.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("duplicate timestamp {0}")]
    DuplicateTimestamp(f64),
    #[error("series is empty")]
    EmptySeries,
    #[error("timestamps must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("malformed label window: {0}")]
    MalformedWindow(String),
    #[error("dataset `{0}` not found in label file")]
    UnknownDataset(String),
    #[error("no spacing covers at least half of the intervals (modal share {share:.3})")]
    IrreconcilableGrid { share: f64 },
    #[error("gap of {missing} missing grid points after t={after} exceeds limit {limit}")]
    GapTooLarge {
        after: f64,
        missing: usize,
        limit: usize,
    },
    #[error("series of length {len} too short for {folds} folds")]
    SeriesTooShort { len: usize, folds: usize },
    #[error("fold count must be at least 2, got {0}")]
    BadFoldCount(usize),
}

/// Timestamped univariate values, timestamps in epoch seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    timestamps: Vec<f64>,
    values: Vec<f64>,
    labels: Option<Vec<bool>>,
}

impl TimeSeries {
    pub fn new(
        timestamps: Vec<f64>,
        values: Vec<f64>,
        labels: Option<Vec<bool>>,
    ) -> Result<Self, DataError> {
        if values.len() != timestamps.len() {
            return Err(DataError::LengthMismatch {
                what: "values",
                got: values.len(),
                expected: timestamps.len(),
            });
        }
        if let Some(l) = &labels {
            if l.len() != values.len() {
                return Err(DataError::LengthMismatch {
                    what: "labels",
                    got: l.len(),
                    expected: values.len(),
                });
            }
        }
        for (i, (t, v)) in timestamps.iter().zip(&values).enumerate() {
            if !t.is_finite() || !v.is_finite() {
                return Err(DataError::NonFinite(i));
            }
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(DataError::NotIncreasing(i + 1));
        }
        Ok(Self {
            timestamps,
            values,
            labels,
        })
    }

    /// Series sampled at `0, step, 2*step, ...`.
    pub fn from_values(values: Vec<f64>, step: f64) -> Result<Self, DataError> {
        let timestamps = (0..values.len()).map(|i| i as f64 * step).collect();
        Self::new(timestamps, values, None)
    }

    pub fn with_labels(mut self, labels: Vec<bool>) -> Result<Self, DataError> {
        if labels.len() != self.values.len() {
            return Err(DataError::LengthMismatch {
                what: "labels",
                got: labels.len(),
                expected: self.values.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    /// Labels, treating an unlabelled series as entirely normal.
    pub fn labels_or_normal(&self) -> Vec<bool> {
        self.labels
            .clone()
            .unwrap_or_else(|| vec![false; self.values.len()])
    }

    pub fn is_anomalous(&self, i: usize) -> bool {
        self.labels.as_ref().is_some_and(|l| l[i])
    }

    pub fn has_anomalies(&self) -> bool {
        self.labels.as_ref().is_some_and(|l| l.iter().any(|&b| b))
    }

    /// True if all consecutive spacings are equal.
    pub fn is_uniform(&self) -> bool {
        match self.timestamps.as_slice() {
            [a, b, rest @ ..] => {
                let step = b - a;
                let mut prev = *b;
                rest.iter().all(|&t| {
                    let ok = t - prev == step;
                    prev = t;
                    ok
                })
            }
            _ => true,
        }
    }

    /// Sub-series over an index range.
    pub fn slice(&self, range: Range<usize>) -> TimeSeries {
        TimeSeries {
            timestamps: self.timestamps[range.clone()].to_vec(),
            values: self.values[range.clone()].to_vec(),
            labels: self.labels.as_ref().map(|l| l[range].to_vec()),
        }
    }

    /// Sub-series made of the given (increasing) indices.
    pub fn select(&self, indices: &[usize]) -> TimeSeries {
        TimeSeries {
            timestamps: indices.iter().map(|&i| self.timestamps[i]).collect(),
            values: indices.iter().map(|&i| self.values[i]).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }

    /// Sets labels from anomaly windows (inclusive endpoints).
    pub fn apply_windows(&mut self, windows: &[LabelWindow]) {
        let merged = merge_windows(windows);
        let labels = self
            .timestamps
            .iter()
            .map(|&t| merged.iter().any(|w| w.contains(t)))
            .collect();
        self.labels = Some(labels);
    }
}

/// Column mapping for [`load_csv`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub timestamp_column: String,
    pub value_column: String,
    pub label_column: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp_column: "timestamp".into(),
            value_column: "value".into(),
            label_column: None,
        }
    }
}

/// Parses epoch seconds, RFC 3339, or `YYYY-MM-DD[ T]HH:MM:SS[.f]` (UTC).
pub fn parse_timestamp(raw: &str) -> Option<f64> {
    let s = raw.trim();
    if let Ok(v) = s.parse::<f64>() {
        return v.is_finite().then_some(v);
    }
    let to_secs = |dt: NaiveDateTime| {
        let utc = dt.and_utc();
        utc.timestamp() as f64 + f64::from(utc.timestamp_subsec_nanos()) * 1e-9
    };
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(to_secs(dt.naive_utc()));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(to_secs(dt));
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(to_secs)
}

fn parse_label(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" => Some(true),
        "0" | "false" | "f" | "no" | "" => Some(false),
        _ => None,
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TimeSeries, DataError> {
    read_csv(File::open(path)?, schema)
}

/// Reads a series from CSV. Rows are sorted by timestamp; duplicates are
/// rejected. Row numbers in errors are 1-based file lines.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<TimeSeries, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let t_col = column(&schema.timestamp_column)?;
    let v_col = column(&schema.value_column)?;
    let l_col = schema.label_column.as_deref().map(column).transpose()?;

    let mut rows: Vec<(f64, f64, bool)> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 2;
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let t = parse_timestamp(field(t_col)).ok_or_else(|| DataError::MalformedRow {
            row,
            reason: format!("unparseable timestamp `{}`", field(t_col)),
        })?;
        let v = field(v_col)
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| DataError::MalformedRow {
                row,
                reason: format!("non-numeric value `{}`", field(v_col)),
            })?;
        let label = match l_col {
            Some(c) => parse_label(field(c)).ok_or_else(|| DataError::MalformedRow {
                row,
                reason: format!("bad label `{}`", field(c)),
            })?,
            None => false,
        };
        rows.push((t, v, label));
    }
    if rows.is_empty() {
        return Err(DataError::EmptySeries);
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(DataError::DuplicateTimestamp(w[0].0));
    }
    let labels = l_col.map(|_| rows.iter().map(|r| r.2).collect());
    TimeSeries::new(
        rows.iter().map(|r| r.0).collect(),
        rows.iter().map(|r| r.1).collect(),
        labels,
    )
}

/// Writes `timestamp,value,label` with label in {0,1}.
pub fn write_csv<W: Write>(series: &TimeSeries, writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "value", "label"])?;
    for i in 0..series.len() {
        w.write_record([
            series.timestamps[i].to_string(),
            series.values[i].to_string(),
            u8::from(series.is_anomalous(i)).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Closed anomaly window `[start, end]` in epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelWindow {
    pub start: f64,
    pub end: f64,
}

impl LabelWindow {
    pub fn new(start: f64, end: f64) -> Result<Self, DataError> {
        if !(start.is_finite() && end.is_finite()) || end < start {
            return Err(DataError::MalformedWindow(format!("[{start}, {end}]")));
        }
        Ok(Self { start, end })
    }

    pub fn contains(&self, t: f64) -> bool {
        self.start <= t && t <= self.end
    }
}

/// Sorts windows and merges any that overlap or touch.
pub fn merge_windows(windows: &[LabelWindow]) -> Vec<LabelWindow> {
    let mut sorted = windows.to_vec();
    sorted.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut out: Vec<LabelWindow> = Vec::with_capacity(sorted.len());
    for w in sorted {
        match out.last_mut() {
            Some(last) if w.start <= last.end => last.end = last.end.max(w.end),
            _ => out.push(w),
        }
    }
    out
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawInstant {
    Number(f64),
    Text(String),
}

impl RawInstant {
    fn seconds(&self) -> Result<f64, DataError> {
        match self {
            RawInstant::Number(v) => Ok(*v),
            RawInstant::Text(s) => parse_timestamp(s)
                .ok_or_else(|| DataError::MalformedWindow(format!("bad timestamp `{s}`"))),
        }
    }
}

pub fn load_label_windows(
    path: impl AsRef<Path>,
    dataset: Option<&str>,
) -> Result<Vec<LabelWindow>, DataError> {
    read_label_windows(File::open(path)?, dataset)
}

/// Reads a Numenta-style label file (`{"name": [[start, end], ...]}`).
///
/// `dataset` is matched against keys exactly, then by trailing path
/// component. Without a name the file must hold a single dataset.
pub fn read_label_windows<R: Read>(
    reader: R,
    dataset: Option<&str>,
) -> Result<Vec<LabelWindow>, DataError> {
    let map: BTreeMap<String, Vec<Vec<RawInstant>>> = serde_json::from_reader(reader)?;
    let entry = match dataset {
        Some(name) => map
            .get(name)
            .or_else(|| {
                map.iter()
                    .find(|(k, _)| k.ends_with(&format!("/{name}")) || k.rsplit('/').next() == Some(name))
                    .map(|(_, v)| v)
            })
            .ok_or_else(|| DataError::UnknownDataset(name.to_string()))?,
        None if map.len() == 1 => map.values().next().unwrap(),
        None => {
            return Err(DataError::UnknownDataset(format!(
                "<unnamed; file has {} datasets>",
                map.len()
            )))
        }
    };
    let mut windows = Vec::with_capacity(entry.len());
    for pair in entry {
        let [start, end] = pair.as_slice() else {
            return Err(DataError::MalformedWindow(format!(
                "expected [start, end], got {} elements",
                pair.len()
            )));
        };
        windows.push(LabelWindow::new(start.seconds()?, end.seconds()?)?);
    }
    Ok(merge_windows(&windows))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ResampleOptions {
    /// Largest run of missing grid points filled by carrying the last value forward.
    pub max_gap: usize,
    /// Split at oversized gaps instead of failing.
    pub split_on_gap: bool,
}

impl Default for ResampleOptions {
    fn default() -> Self {
        Self {
            max_gap: 3,
            split_on_gap: false,
        }
    }
}

// Spacings are compared on a microsecond lattice.
fn spacing_key(dt: f64) -> i64 {
    (dt * 1e6).round() as i64
}

/// Regularizes a series onto the grid of its modal spacing, returning
/// every contiguous segment (more than one only with `split_on_gap`).
pub fn resample_segments(
    series: &TimeSeries,
    opts: &ResampleOptions,
) -> Result<Vec<TimeSeries>, DataError> {
    if series.len() < 2 {
        return Err(DataError::SeriesTooShort {
            len: series.len(),
            folds: 1,
        });
    }
    if series.is_uniform() {
        return Ok(vec![series.clone()]);
    }
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for w in series.timestamps.windows(2) {
        *counts.entry(spacing_key(w[1] - w[0])).or_default() += 1;
    }
    // Smallest spacing wins ties between equally frequent spacings.
    let (&key, &count) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .expect("at least one spacing");
    let share = count as f64 / (series.len() - 1) as f64;
    if share < 0.5 {
        return Err(DataError::IrreconcilableGrid { share });
    }
    let step = key as f64 * 1e-6;
    let t0 = series.timestamps[0];

    // Snap to nearest grid slot; the first point claiming a slot keeps it.
    let mut slots: Vec<(i64, usize)> = Vec::with_capacity(series.len());
    for (i, &t) in series.timestamps.iter().enumerate() {
        let slot = ((t - t0) / step).round() as i64;
        if slots.last().is_none_or(|&(s, _)| s < slot) {
            slots.push((slot, i));
        }
    }

    let labelled = series.labels.is_some();
    let mut segments = Vec::new();
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    let mut ls = Vec::new();
    let mut prev: Option<(i64, usize)> = None;
    for &(slot, i) in &slots {
        if let Some((pslot, pi)) = prev {
            let missing = (slot - pslot - 1) as usize;
            if missing > opts.max_gap {
                if !opts.split_on_gap {
                    return Err(DataError::GapTooLarge {
                        after: t0 + pslot as f64 * step,
                        missing,
                        limit: opts.max_gap,
                    });
                }
                segments.push(TimeSeries {
                    timestamps: std::mem::take(&mut ts),
                    values: std::mem::take(&mut vs),
                    labels: labelled.then(|| std::mem::take(&mut ls)),
                });
                ls.clear();
            } else {
                for s in pslot + 1..slot {
                    ts.push(t0 + s as f64 * step);
                    vs.push(series.values[pi]);
                    ls.push(series.is_anomalous(pi));
                }
            }
        }
        ts.push(t0 + slot as f64 * step);
        vs.push(series.values[i]);
        ls.push(series.is_anomalous(i));
        prev = Some((slot, i));
    }
    segments.push(TimeSeries {
        timestamps: ts,
        values: vs,
        labels: labelled.then_some(ls),
    });
    Ok(segments)
}

/// Uniform resampling; with `split_on_gap` the longest segment is kept.
pub fn resample_uniform(
    series: &TimeSeries,
    opts: &ResampleOptions,
) -> Result<TimeSeries, DataError> {
    let segments = resample_segments(series, opts)?;
    let mut best = 0;
    for (i, s) in segments.iter().enumerate() {
        if s.len() > segments[best].len() {
            best = i;
        }
    }
    Ok(segments.into_iter().nth(best).expect("non-empty"))
}

/// One expanding-window cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_range: Range<usize>,
    pub test_range: Range<usize>,
    /// Indices of `train_range` not labelled anomalous.
    pub train_indices: Vec<usize>,
}

impl FoldSplit {
    /// Training stream with anomalous points removed and the rest concatenated.
    pub fn train_view(&self, series: &TimeSeries) -> TimeSeries {
        series.select(&self.train_indices)
    }

    pub fn test_view(&self, series: &TimeSeries) -> TimeSeries {
        series.slice(self.test_range.clone())
    }
}

/// Splits `[0, N)` into `k + 1` equal blocks (remainder to the last);
/// fold `i` trains on blocks `0..=i` and tests on block `i + 1`.
pub fn expanding_folds(series: &TimeSeries, k: usize) -> Result<Vec<FoldSplit>, DataError> {
    if k < 2 {
        return Err(DataError::BadFoldCount(k));
    }
    let n = series.len();
    if n < k + 1 {
        return Err(DataError::SeriesTooShort { len: n, folds: k });
    }
    let block = n / (k + 1);
    Ok((0..k)
        .map(|i| {
            let train_end = (i + 1) * block;
            let test_end = if i + 1 == k { n } else { train_end + block };
            FoldSplit {
                fold_index: i,
                train_range: 0..train_end,
                test_range: train_end..test_end,
                train_indices: (0..train_end).filter(|&j| !series.is_anomalous(j)).collect(),
            }
        })
        .collect())
}
