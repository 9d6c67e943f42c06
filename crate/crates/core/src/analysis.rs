//! Historical ETH/DAI price series: loading, descriptive statistics and
//! correlation.

use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

pub const HEADER: [&str; 3] = ["date", "eth_close", "dai_close"];

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("malformed header: expected `date,eth_close,dai_close`, got `{0}`")]
    MalformedHeader(String),
    #[error("series has no valid rows")]
    EmptySeries,
    #[error("need at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricePoint {
    pub date: NaiveDate,
    pub eth_close: f64,
    pub dai_close: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub points: Vec<PricePoint>,
    /// Rows dropped for unparsable dates, non-finite or non-positive prices.
    pub dropped_corrupt: usize,
    /// Rows dropped because their date had already been seen.
    pub dropped_duplicates: usize,
}

impl PriceSeries {
    pub fn eth(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.eth_close).collect()
    }

    pub fn dai(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.dai_close).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn load_series(path: &Path) -> Result<PriceSeries, AnalysisError> {
    let file = File::open(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => AnalysisError::FileNotFound(path.to_path_buf()),
        _ => AnalysisError::Io(e),
    })?;
    read_series(file)
}

/// First occurrence of a date wins; the result is sorted by date.
pub fn read_series<R: Read>(reader: R) -> Result<PriceSeries, AnalysisError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(AnalysisError::MalformedHeader(header.iter().collect::<Vec<_>>().join(",")));
    }

    let mut points: Vec<PricePoint> = Vec::new();
    let mut dropped_corrupt = 0;
    for record in rdr.records() {
        let parsed = record.ok().and_then(|r| parse_row(&r));
        match parsed {
            Some(p) => points.push(p),
            None => dropped_corrupt += 1,
        }
    }

    // stable sort keeps file order among equal dates
    points.sort_by_key(|p| p.date);
    let before = points.len();
    points.dedup_by_key(|p| p.date);
    let dropped_duplicates = before - points.len();

    if points.is_empty() {
        return Err(AnalysisError::EmptySeries);
    }
    Ok(PriceSeries {
        points,
        dropped_corrupt,
        dropped_duplicates,
    })
}

fn parse_row(r: &csv::StringRecord) -> Option<PricePoint> {
    if r.len() != 3 {
        return None;
    }
    let date = NaiveDate::parse_from_str(&r[0], "%Y-%m-%d").ok()?;
    let eth_close: f64 = r[1].parse().ok()?;
    let dai_close: f64 = r[2].parse().ok()?;
    let valid = |v: f64| v.is_finite() && v > 0.0;
    (valid(eth_close) && valid(dai_close)).then_some(PricePoint {
        date,
        eth_close,
        dai_close,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub std: f64,
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
}

/// Percentile by linear interpolation between closest ranks on sorted data.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn describe(values: &[f64]) -> Result<Summary, AnalysisError> {
    let n = values.len();
    if n < 2 {
        return Err(AnalysisError::TooFewPoints(n));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Summary {
        count: n,
        mean,
        std: var.sqrt(),
        min: sorted[0],
        p25: percentile(&sorted, 0.25),
        p50: percentile(&sorted, 0.5),
        p75: percentile(&sorted, 0.75),
        max: sorted[n - 1],
    })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, AnalysisError> {
    if x.len() != y.len() {
        return Err(AnalysisError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(AnalysisError::TooFewPoints(n));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(AnalysisError::ZeroVariance("x"));
    }
    if syy == 0.0 {
        return Err(AnalysisError::ZeroVariance("y"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Writes `eth_close,dai_close` pairs for plotting and returns the row count.
pub fn scatter_export(series: &PriceSeries, path: &Path) -> Result<usize, AnalysisError> {
    if series.is_empty() {
        return Err(AnalysisError::EmptySeries);
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["eth_close", "dai_close"])?;
    for p in &series.points {
        w.write_record([p.eth_close.to_string(), p.dai_close.to_string()])?;
    }
    w.flush()?;
    Ok(series.len())
}
