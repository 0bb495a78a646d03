use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use super::{ConfigKey, ConfigSummary, ScenarioError};
use crate::bd::{classic_bd_rate, clip_curves, smart_bd_rate, Aggregation, MetricKind, RdCurve};
use crate::store::MetricRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BdMethod {
    /// Mean of per-clip BD-Rates.
    #[default]
    Classic,
    /// One BD-Rate between harmonic-mean aggregate curves.
    Smart,
}

impl fmt::Display for BdMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Classic => "classic",
            Self::Smart => "smart",
        })
    }
}

impl FromStr for BdMethod {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "classic" => Ok(Self::Classic),
            "smart" => Ok(Self::Smart),
            other => Err(ScenarioError::Invalid(format!("unknown BD method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    BdRate { method: BdMethod, metric: MetricKind },
    EncodeTime,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Value(f64),
    /// Not computable, with the reason.
    NotAvailable(String),
}

impl Cell {
    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(*v),
            Cell::NotAvailable(_) => None,
        }
    }
}

/// Square matrix over configurations. Row `i` is the configuration being
/// migrated from, column `j` the one migrated to.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonGrid {
    pub kind: GridKind,
    pub labels: Vec<String>,
    pub cells: Vec<Vec<Cell>>,
}

impl ComparisonGrid {
    /// File-name stem, e.g. `bd_smart_vmaf` or `time`.
    pub fn name(&self) -> String {
        match self.kind {
            GridKind::BdRate { method, metric } => format!("bd_{method}_{}", metric.name()),
            GridKind::EncodeTime => "time".into(),
        }
    }

    pub fn cell(&self, from: usize, to: usize) -> &Cell {
        &self.cells[from][to]
    }

    pub fn unit(&self) -> &'static str {
        match self.kind {
            GridKind::BdRate { .. } => "BD-Rate %",
            GridKind::EncodeTime => "encode time change %",
        }
    }

    /// Writes the grid as a CSV matrix with an `anchor\test` corner.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<(), ScenarioError> {
        let mut w = csv::Writer::from_writer(sink);
        let mut header = vec!["anchor\\test".to_string()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.cells) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|c| match c {
                Cell::Value(v) => format!("{v:.4}"),
                Cell::NotAvailable(_) => "N/A".into(),
            }));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn fill<F>(n: usize, f: F) -> Vec<Vec<Cell>>
where
    F: Fn(usize, usize) -> Cell + Sync,
{
    let flat: Vec<Cell> = (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n, k % n);
            if i == j {
                Cell::Value(0.0)
            } else {
                f(i, j)
            }
        })
        .collect();
    flat.chunks(n.max(1)).map(<[Cell]>::to_vec).collect()
}

/// BD-Rate between every ordered pair of configurations. Cells that fail
/// (missing data, no overlap) are reported as N/A.
pub fn bd_grid(
    configs: &[ConfigKey],
    records: &[MetricRecord],
    method: BdMethod,
    metric: MetricKind,
    ladder: &[u32],
) -> ComparisonGrid {
    let mut grouped: BTreeMap<&ConfigKey, Vec<MetricRecord>> = BTreeMap::new();
    for key in configs {
        grouped.insert(key, records.iter().filter(|r| key.matches(r)).cloned().collect());
    }
    let per_config: Vec<&Vec<MetricRecord>> = configs.iter().map(|k| &grouped[k]).collect();
    let curves: Vec<Vec<RdCurve>> = match method {
        BdMethod::Classic => per_config.iter().map(|rs| clip_curves(rs, metric).0).collect(),
        BdMethod::Smart => Vec::new(),
    };
    let cells = fill(configs.len(), |i, j| {
        if per_config[i].is_empty() || per_config[j].is_empty() {
            return Cell::NotAvailable("no records".into());
        }
        let result = match method {
            BdMethod::Classic => classic_bd_rate(&curves[i], &curves[j]),
            BdMethod::Smart => smart_bd_rate(
                per_config[i],
                per_config[j],
                ladder,
                metric,
                Aggregation::HarmonicMean,
            ),
        };
        match result {
            Ok(r) => Cell::Value(r.value),
            Err(e) => Cell::NotAvailable(e.to_string()),
        }
    });
    ComparisonGrid {
        kind: GridKind::BdRate { method, metric },
        labels: configs.iter().map(ToString::to_string).collect(),
        cells,
    }
}

/// Percent change in total encode time when moving from row to column
/// configuration; negative means a faster pipeline.
pub fn time_grid(summaries: &[ConfigSummary]) -> ComparisonGrid {
    let cells = fill(summaries.len(), |i, j| {
        match (summaries[i].total_hours, summaries[j].total_hours) {
            (Some(hi), Some(hj)) if hi > 0.0 => Cell::Value((hj - hi) / hi * 100.0),
            (Some(_), Some(_)) => Cell::NotAvailable("zero hours".into()),
            _ => Cell::NotAvailable("missing hours".into()),
        }
    });
    ComparisonGrid {
        kind: GridKind::EncodeTime,
        labels: summaries.iter().map(|s| s.key.to_string()).collect(),
        cells,
    }
}
