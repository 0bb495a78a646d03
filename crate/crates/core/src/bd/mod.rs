//! Rate-distortion curves and Bjontegaard deltas.
//!
//! Curves are cleaned to their Pareto frontier, interpolated in
//! (quality, log10 rate) with a monotone cubic, and integrated in closed
//! form over the overlapping quality range. Two dataset-level aggregations
//! are provided: the classic per-clip average of BD-Rates, and the
//! "smart" variant that first collapses every ladder rung to a single
//! harmonic-mean (rate, quality) point and then runs one BD-Rate.

mod interp;

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use thiserror::Error;

use crate::store::MetricRecord;

pub use interp::Pchip;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BdError {
    #[error("curve error: {0}")]
    Curve(String),
    #[error("no usable overlap: [{low}, {high}]")]
    Overlap { low: f64, high: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("aggregation error: {0}")]
    Aggregation(String),
    #[error("metric mismatch: anchor {anchor}, test {test}")]
    MetricMismatch { anchor: MetricKind, test: MetricKind },
}

pub type Result<T> = std::result::Result<T, BdError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MetricKind {
    #[default]
    Vmaf,
    PsnrY,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Vmaf => "vmaf",
            MetricKind::PsnrY => "psnr_y",
        }
    }

    /// Pulls this metric's score out of a record.
    pub fn quality_of(self, r: &MetricRecord) -> Result<f64> {
        match self {
            MetricKind::Vmaf => Ok(r.vmaf),
            MetricKind::PsnrY => r.psnr_y.ok_or_else(|| {
                BdError::Domain(format!("record for clip {} has no psnr_y", r.clip_id))
            }),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One operating point: rate in kb/s and a quality score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub rate: f64,
    pub quality: f64,
}

impl RdPoint {
    pub fn new(rate: f64, quality: f64) -> Self {
        Self { rate, quality }
    }
}

/// A cleaned curve: strictly increasing in both rate and quality, >= 2
/// points.
#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    pub id: String,
    pub metric: MetricKind,
    points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn quality_range(&self) -> (f64, f64) {
        (self.points[0].quality, self.points[self.points.len() - 1].quality)
    }

    pub fn log_rate_range(&self) -> (f64, f64) {
        (
            self.points[0].rate.log10(),
            self.points[self.points.len() - 1].rate.log10(),
        )
    }
}

/// Drops Pareto-dominated points: a point goes if another point reaches at
/// least its quality at no more rate. Exact duplicates collapse to one.
pub fn clean_curve(id: impl Into<String>, metric: MetricKind, raw: &[RdPoint]) -> Result<RdCurve> {
    let id = id.into();
    if let Some(p) = raw
        .iter()
        .find(|p| !(p.rate.is_finite() && p.rate > 0.0 && p.quality.is_finite()))
    {
        return Err(BdError::Curve(format!(
            "{id}: point ({}, {}) needs a positive rate and finite quality",
            p.rate, p.quality
        )));
    }
    let mut sorted = raw.to_vec();
    sorted.sort_by(|a, b| {
        a.rate
            .total_cmp(&b.rate)
            .then(b.quality.total_cmp(&a.quality))
    });
    let mut points: Vec<RdPoint> = Vec::with_capacity(sorted.len());
    for p in sorted {
        if points.last().is_none_or(|last| p.quality > last.quality) {
            points.push(p);
        }
    }
    if points.len() < 2 {
        return Err(BdError::Curve(format!(
            "{id}: {} point(s) left after removing dominated points, need 2",
            points.len()
        )));
    }
    Ok(RdCurve { id, metric, points })
}

/// Quality -> log10(rate) interpolant of a cleaned curve.
pub fn interpolate(curve: &RdCurve) -> Pchip {
    Pchip::new(
        curve.points.iter().map(|p| p.quality).collect(),
        curve.points.iter().map(|p| p.rate.log10()).collect(),
    )
}

/// log10(rate) -> quality interpolant of a cleaned curve.
pub fn interpolate_quality(curve: &RdCurve) -> Pchip {
    Pchip::new(
        curve.points.iter().map(|p| p.rate.log10()).collect(),
        curve.points.iter().map(|p| p.quality).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BdKind {
    /// Percent bitrate difference at equal quality.
    Rate,
    /// Mean quality difference at equal log-rate.
    Quality,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BdResult {
    pub kind: BdKind,
    /// Percent for [`BdKind::Rate`], metric units for [`BdKind::Quality`].
    pub value: f64,
    /// Integration interval: quality for rate deltas, log10 rate for
    /// quality deltas.
    pub overlap: (f64, f64),
    pub anchor_points: usize,
    pub test_points: usize,
    pub method_note: String,
}

fn point_note(anchor: usize, test: usize) -> String {
    let mut note = format!("pchip, {anchor} anchor / {test} test points");
    if anchor.min(test) < 4 {
        note.push_str(" (fewer than 4 points)");
    }
    note
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> Result<(f64, f64)> {
    let low = a.0.max(b.0);
    let high = a.1.min(b.1);
    if !(low < high) {
        return Err(BdError::Overlap { low, high });
    }
    Ok((low, high))
}

fn same_metric(anchor: &RdCurve, test: &RdCurve) -> Result<()> {
    if anchor.metric != test.metric {
        return Err(BdError::MetricMismatch {
            anchor: anchor.metric,
            test: test.metric,
        });
    }
    Ok(())
}

/// BD-Rate of `test` against `anchor`, in percent. Negative means the test
/// configuration needs less bitrate for the same quality.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve) -> Result<BdResult> {
    same_metric(anchor, test)?;
    let (low, high) = overlap(anchor.quality_range(), test.quality_range())?;
    let ia = interpolate(anchor).integrate(low, high);
    let it = interpolate(test).integrate(low, high);
    let mean_log_diff = (it - ia) / (high - low);
    Ok(BdResult {
        kind: BdKind::Rate,
        value: (10f64.powf(mean_log_diff) - 1.0) * 100.0,
        overlap: (low, high),
        anchor_points: anchor.len(),
        test_points: test.len(),
        method_note: point_note(anchor.len(), test.len()),
    })
}

/// Mean quality gain of `test` over `anchor` across the shared log-rate
/// interval.
pub fn bd_quality(anchor: &RdCurve, test: &RdCurve) -> Result<BdResult> {
    same_metric(anchor, test)?;
    let (low, high) = overlap(anchor.log_rate_range(), test.log_rate_range())?;
    let ia = interpolate_quality(anchor).integrate(low, high);
    let it = interpolate_quality(test).integrate(low, high);
    Ok(BdResult {
        kind: BdKind::Quality,
        value: (it - ia) / (high - low),
        overlap: (low, high),
        anchor_points: anchor.len(),
        test_points: test.len(),
        method_note: point_note(anchor.len(), test.len()),
    })
}

pub fn harmonic_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(BdError::Domain("harmonic mean of no values".into()));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(BdError::Domain(format!(
            "harmonic mean needs positive values, got {v}"
        )));
    }
    let recip: f64 = values.iter().map(|v| 1.0 / v).sum();
    Ok(values.len() as f64 / recip)
}

/// How per-clip points at one ladder rung collapse to a dataset point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregation {
    #[default]
    HarmonicMean,
    /// Plain sums of rates and qualities.
    Sum,
}

/// Collapses the per-clip records of one (family, preset, passes, target)
/// to a single point.
pub fn aggregate_points(
    records: &[&MetricRecord],
    metric: MetricKind,
    aggregation: Aggregation,
) -> Result<RdPoint> {
    let first = records
        .first()
        .ok_or_else(|| BdError::Aggregation("no records to aggregate".into()))?;
    let key = |r: &MetricRecord| (r.family.clone(), r.preset.clone(), r.passes, r.target_kbps);
    if let Some(odd) = records.iter().find(|r| key(r) != key(first)) {
        return Err(BdError::Aggregation(format!(
            "mixed keys: {:?} vs {:?}",
            key(first),
            key(odd)
        )));
    }
    let rates: Vec<f64> = records.iter().map(|r| r.measured_kbps).collect();
    let qualities = records
        .iter()
        .map(|r| metric.quality_of(r))
        .collect::<Result<Vec<_>>>()?;
    match aggregation {
        Aggregation::HarmonicMean => Ok(RdPoint::new(
            harmonic_mean(&rates)?,
            harmonic_mean(&qualities)?,
        )),
        Aggregation::Sum => Ok(RdPoint::new(rates.iter().sum(), qualities.iter().sum())),
    }
}

/// Dataset-level curve of one configuration: one aggregated point per
/// ladder rung that has records.
pub fn aggregate_curve(
    id: impl Into<String>,
    records: &[MetricRecord],
    ladder: &[u32],
    metric: MetricKind,
    aggregation: Aggregation,
) -> Result<RdCurve> {
    let mut points = Vec::new();
    for &rung in ladder {
        let at: Vec<&MetricRecord> = records.iter().filter(|r| r.target_kbps == rung).collect();
        if !at.is_empty() {
            points.push(aggregate_points(&at, metric, aggregation)?);
        }
    }
    clean_curve(id, metric, &points)
}

/// BD-Rate between the aggregate curves of two configurations.
pub fn smart_bd_rate(
    anchor: &[MetricRecord],
    test: &[MetricRecord],
    ladder: &[u32],
    metric: MetricKind,
    aggregation: Aggregation,
) -> Result<BdResult> {
    let a = aggregate_curve("anchor", anchor, ladder, metric, aggregation)?;
    let t = aggregate_curve("test", test, ladder, metric, aggregation)?;
    let mut result = bd_rate(&a, &t)?;
    let how = match aggregation {
        Aggregation::HarmonicMean => "harmonic-mean",
        Aggregation::Sum => "summed",
    };
    result.method_note = format!("smart ({how} per rung); {}", result.method_note);
    Ok(result)
}

/// Arithmetic mean of per-clip BD-Rates. Clips are paired by curve id;
/// unpaired clips and clips without overlap are left out and counted in
/// the note.
pub fn classic_bd_rate(anchor: &[RdCurve], test: &[RdCurve]) -> Result<BdResult> {
    let tests: BTreeMap<&str, &RdCurve> = test.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut values = Vec::new();
    let mut low = f64::INFINITY;
    let mut high = f64::NEG_INFINITY;
    let (mut n_anchor, mut n_test) = (0, 0);
    let mut no_overlap = 0;
    let mut unpaired = 0;
    for a in anchor {
        let Some(t) = tests.get(a.id.as_str()) else {
            unpaired += 1;
            continue;
        };
        match bd_rate(a, t) {
            Ok(r) => {
                values.push(r.value);
                low = low.min(r.overlap.0);
                high = high.max(r.overlap.1);
                n_anchor += r.anchor_points;
                n_test += r.test_points;
            }
            Err(BdError::Overlap { .. }) => no_overlap += 1,
            Err(e) => return Err(e),
        }
    }
    unpaired += test.len().saturating_sub(anchor.len() - unpaired);
    if values.is_empty() {
        return Err(BdError::Aggregation(format!(
            "no clip produced a valid BD-Rate ({no_overlap} without overlap, {unpaired} unpaired)"
        )));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(BdResult {
        kind: BdKind::Rate,
        value: mean,
        overlap: (low, high),
        anchor_points: n_anchor,
        test_points: n_test,
        method_note: format!(
            "classic mean over {} clips; excluded {no_overlap} without overlap, {unpaired} unpaired",
            values.len()
        ),
    })
}

/// Groups records by clip and cleans each clip's curve. Clips that cannot
/// form a curve are returned separately.
pub fn clip_curves(records: &[MetricRecord], metric: MetricKind) -> (Vec<RdCurve>, Vec<(String, BdError)>) {
    let mut by_clip: BTreeMap<&str, Vec<RdPoint>> = BTreeMap::new();
    let mut failed = Vec::new();
    for r in records {
        match metric.quality_of(r) {
            Ok(q) => by_clip
                .entry(r.clip_id.as_str())
                .or_default()
                .push(RdPoint::new(r.measured_kbps, q)),
            Err(e) => failed.push((r.clip_id.clone(), e)),
        }
    }
    let mut curves = Vec::new();
    for (clip, points) in by_clip {
        match clean_curve(clip, metric, &points) {
            Ok(c) => curves.push(c),
            Err(e) => failed.push((clip.to_string(), e)),
        }
    }
    (curves, failed)
}

/// Writes `id,q,rate_kbps` rows.
pub fn write_curves_csv<W: Write>(curves: &[RdCurve], sink: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["id", "q", "rate_kbps"])?;
    for c in curves {
        for p in c.points() {
            w.write_record([c.id.clone(), p.quality.to_string(), p.rate.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A labelled BD result for CSV export.
#[derive(Debug, Clone)]
pub struct BdRow {
    pub anchor: String,
    pub test: String,
    pub metric: MetricKind,
    pub result: BdResult,
}

/// Writes `anchor,test,metric,bd_percent,q_low,q_high,n_anchor,n_test` rows.
pub fn write_results_csv<W: Write>(rows: &[BdRow], sink: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record([
        "anchor", "test", "metric", "bd_percent", "q_low", "q_high", "n_anchor", "n_test",
    ])?;
    for row in rows {
        let r = &row.result;
        w.write_record([
            row.anchor.clone(),
            row.test.clone(),
            row.metric.name().to_string(),
            r.value.to_string(),
            r.overlap.0.to_string(),
            r.overlap.1.to_string(),
            r.anchor_points.to_string(),
            r.test_points.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests;
