//! Turns spike counts into alerts: causal moving average, uniform
//! threshold grid and strict thresholding.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("smoothing window must be at least 1")]
    BadWindow,
    #[error("signal is empty")]
    EmptySignal,
    #[error("threshold count must be at least 2, got {0}")]
    BadCount(usize),
    #[error("detection csv: {0}")]
    Csv(String),
}

/// Windows tried during evaluation besides the raw signal.
pub const DEFAULT_SMOOTHING_WINDOWS: [usize; 3] = [100, 200, 300];
pub const DEFAULT_THRESHOLD_COUNT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub smoothing_window: Option<usize>,
    /// Alert when the (smoothed) count is strictly above this.
    pub threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            smoothing_window: None,
            threshold: 0.0,
        }
    }
}

/// Trailing mean over the current record and up to `window - 1` before it.
pub fn smooth(signal: &[f64], window: usize) -> Result<Vec<f64>, DetectorError> {
    if window == 0 {
        return Err(DetectorError::BadWindow);
    }
    let mut out = Vec::with_capacity(signal.len());
    let mut sum = 0.0;
    for (i, &x) in signal.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= signal[i - window];
        }
        let n = (i + 1).min(window);
        // the running sum drifts; recompute exactly every window
        if i % window == window - 1 {
            sum = signal[i + 1 - n..=i].iter().sum();
        }
        out.push(sum / n as f64);
    }
    Ok(out)
}

/// `count` thresholds evenly spaced over `[min, max]`, endpoints included.
pub fn threshold_grid(signal: &[f64], count: usize) -> Result<Vec<f64>, DetectorError> {
    if count < 2 {
        return Err(DetectorError::BadCount(count));
    }
    let (lo, hi) = min_max(signal).ok_or(DetectorError::EmptySignal)?;
    let step = (hi - lo) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i == count - 1 { hi } else { lo + i as f64 * step })
        .collect())
}

pub fn apply_threshold(signal: &[f64], threshold: f64) -> Vec<bool> {
    signal.iter().map(|&x| x > threshold).collect()
}

pub(crate) fn min_max(signal: &[f64]) -> Option<(f64, f64)> {
    let mut it = signal.iter().copied();
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x))))
}

/// Raw counts, smoothed signal and alerts for one detection run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Detection {
    pub timestamps: Vec<f64>,
    pub raw_counts: Vec<u32>,
    pub smoothed: Vec<f64>,
    pub alerts: Vec<bool>,
}

impl Detection {
    pub fn from_counts(
        timestamps: Vec<f64>,
        raw_counts: Vec<u32>,
        config: &DetectorConfig,
    ) -> Result<Self, DetectorError> {
        let raw: Vec<f64> = raw_counts.iter().map(|&c| f64::from(c)).collect();
        let smoothed = match config.smoothing_window {
            Some(w) => smooth(&raw, w)?,
            None => raw,
        };
        let alerts = apply_threshold(&smoothed, config.threshold);
        Ok(Self {
            timestamps,
            raw_counts,
            smoothed,
            alerts,
        })
    }

    pub fn len(&self) -> usize {
        self.raw_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw_counts.is_empty()
    }

    /// Reads the `timestamp` and `raw_count` columns of a detection CSV.
    pub fn read_counts<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<u32>), DetectorError> {
        let err = |e: String| DetectorError::Csv(e);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| err(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| err(format!("missing column `{name}`")))
        };
        let (t_col, c_col) = (col("timestamp")?, col("raw_count")?);
        let (mut ts, mut counts) = (Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let field = |c: usize| rec.get(c).unwrap_or("");
            let bad = |what: &str, c: usize| err(format!("line {}: bad {what} `{}`", i + 2, field(c)));
            ts.push(field(t_col).parse::<f64>().map_err(|_| bad("timestamp", t_col))?);
            counts.push(field(c_col).parse::<u32>().map_err(|_| bad("raw_count", c_col))?);
        }
        Ok((ts, counts))
    }

    /// Writes `timestamp,raw_count,smoothed,alert`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "raw_count", "smoothed", "alert"])?;
        for i in 0..self.len() {
            w.write_record([
                self.timestamps[i].to_string(),
                self.raw_counts[i].to_string(),
                self.smoothed[i].to_string(),
                u8::from(self.alerts[i]).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
