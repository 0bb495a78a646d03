//! Scenario gating and preset recommendation.
//!
//! Records are summarized per (family, preset, passes): how many encodes
//! clear the quality bar, how many overshoot their target bitrate, and the
//! total encode time. A [`ScenarioSpec`] then picks one configuration per
//! family under its objective and constraints.

mod grid;
mod report;

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bd::BdError;
use crate::store::{normalize_family, MetricRecord};

pub use grid::{bd_grid, time_grid, BdMethod, Cell, ComparisonGrid, GridKind};
pub use report::{emit_report, scenario_curves, ArtifactKind, Artifact, ScenarioCurves};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("cannot read summaries: {0}")]
    Import(String),
    #[error(transparent)]
    Bd(#[from] BdError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
    Custom(String),
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::S1 => f.write_str("S1"),
            Self::S2 => f.write_str("S2"),
            Self::S3 => f.write_str("S3"),
            Self::Custom(name) => f.write_str(name),
        }
    }
}

impl FromStr for ScenarioId {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "S1" => Ok(Self::S1),
            "S2" => Ok(Self::S2),
            "S3" => Ok(Self::S3),
            "" => Err(ScenarioError::Invalid("empty scenario name".into())),
            _ => Ok(Self::Custom(s.trim().to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Highest coverage regardless of encode time.
    MaxCoverage,
    /// Fastest configuration whose coverage is within `slack_points`
    /// percentage points of the family's max-coverage pick.
    FastestWithinSlack { slack_points: f64 },
    /// Fastest configuration under the time budget.
    MinTimeWithinBudget,
    /// Highest coverage under the time budget.
    MaxCoverageWithinBudget,
}

impl Objective {
    pub fn budgeted(self) -> bool {
        matches!(self, Self::MinTimeWithinBudget | Self::MaxCoverageWithinBudget)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub id: ScenarioId,
    pub vmaf_threshold: f64,
    pub checkpoint_kbps: u32,
    /// Fraction of the target a measured rate may exceed before it counts
    /// as an overshoot.
    pub overshoot_threshold: f64,
    pub time_budget_hours: Option<f64>,
    pub objective: Objective,
}

pub const DEFAULT_VMAF_THRESHOLD: f64 = 88.0;
pub const DEFAULT_CHECKPOINT_KBPS: u32 = 4000;
pub const DEFAULT_OVERSHOOT: f64 = 0.15;
pub const DEFAULT_S2_SLACK_POINTS: f64 = 5.0;
pub const DEFAULT_S3_BUDGET_HOURS: f64 = 40.0;

impl ScenarioSpec {
    fn base(id: ScenarioId, objective: Objective) -> Self {
        Self {
            id,
            vmaf_threshold: DEFAULT_VMAF_THRESHOLD,
            checkpoint_kbps: DEFAULT_CHECKPOINT_KBPS,
            overshoot_threshold: DEFAULT_OVERSHOOT,
            time_budget_hours: None,
            objective,
        }
    }

    /// High quality, encode time ignored.
    pub fn s1() -> Self {
        Self::base(ScenarioId::S1, Objective::MaxCoverage)
    }

    /// High quality at lower complexity.
    pub fn s2() -> Self {
        Self::base(
            ScenarioId::S2,
            Objective::FastestWithinSlack {
                slack_points: DEFAULT_S2_SLACK_POINTS,
            },
        )
    }

    /// Encode time under a budget.
    pub fn s3() -> Self {
        let mut spec = Self::base(ScenarioId::S3, Objective::MinTimeWithinBudget);
        spec.time_budget_hours = Some(DEFAULT_S3_BUDGET_HOURS);
        spec
    }

    pub fn standard(id: &ScenarioId) -> Option<Self> {
        match id {
            ScenarioId::S1 => Some(Self::s1()),
            ScenarioId::S2 => Some(Self::s2()),
            ScenarioId::S3 => Some(Self::s3()),
            ScenarioId::Custom(_) => None,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.vmaf_threshold) || !positive(self.overshoot_threshold) || self.checkpoint_kbps == 0 {
            return Err(ScenarioError::Invalid(format!(
                "{}: thresholds must be positive",
                self.id
            )));
        }
        match (self.objective, self.time_budget_hours) {
            (o, None) if o.budgeted() => Err(ScenarioError::Invalid(format!(
                "{}: objective needs a time budget",
                self.id
            ))),
            (_, Some(b)) if !positive(b) => Err(ScenarioError::Invalid(format!(
                "{}: time budget must be positive, got {b}",
                self.id
            ))),
            (Objective::FastestWithinSlack { slack_points }, _)
                if !(slack_points.is_finite() && slack_points >= 0.0) =>
            {
                Err(ScenarioError::Invalid(format!(
                    "{}: slack must be >= 0, got {slack_points}",
                    self.id
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigKey {
    pub family: String,
    pub preset: String,
    pub passes: u8,
}

impl ConfigKey {
    pub fn new(family: &str, preset: &str, passes: u8) -> Self {
        Self {
            family: normalize_family(family),
            preset: preset.trim().to_string(),
            passes,
        }
    }

    pub fn of(r: &MetricRecord) -> Self {
        Self::new(&r.family, &r.preset, r.passes)
    }

    pub fn matches(&self, r: &MetricRecord) -> bool {
        normalize_family(&r.family) == self.family && r.preset == self.preset && r.passes == self.passes
    }
}

impl fmt::Display for ConfigKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}p", self.family, self.preset, self.passes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSummary {
    pub key: ConfigKey,
    pub coverage_all: usize,
    pub total_all: usize,
    pub coverage_checkpoint: usize,
    pub total_checkpoint: usize,
    pub overshoot_count: usize,
    pub total_hours: Option<f64>,
}

fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

impl ConfigSummary {
    /// Coverage over all targets, in percent.
    pub fn coverage_percent(&self) -> f64 {
        percent(self.coverage_all, self.total_all)
    }

    pub fn checkpoint_percent(&self) -> f64 {
        percent(self.coverage_checkpoint, self.total_checkpoint)
    }

    fn describe(&self) -> String {
        let hours = self
            .total_hours
            .map_or("unknown hours".to_string(), |h| format!("{h:.2} h"));
        format!(
            "{}: {}/{} ({:.1}%) above bar, {}/{} at checkpoint, {} overshoots, {hours}",
            self.key,
            self.coverage_all,
            self.total_all,
            self.coverage_percent(),
            self.coverage_checkpoint,
            self.total_checkpoint,
            self.overshoot_count
        )
    }
}

/// True when the measured rate exceeds the target by more than `threshold`.
pub fn overshoots(target_kbps: u32, measured_kbps: f64, threshold: f64) -> bool {
    measured_kbps > (1.0 + threshold) * f64::from(target_kbps)
}

/// One summary per (family, preset, passes), sorted by key.
pub fn summarize(records: &[MetricRecord], spec: &ScenarioSpec) -> Vec<ConfigSummary> {
    let mut groups: BTreeMap<ConfigKey, Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(ConfigKey::of(r)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(key, rs)| {
            let at_checkpoint: Vec<_> = rs
                .iter()
                .filter(|r| r.target_kbps == spec.checkpoint_kbps)
                .collect();
            let mut seconds: Option<Vec<f64>> = rs.iter().map(|r| r.encode_seconds).collect();
            // summing in sorted order keeps the total independent of record order
            let total_hours = seconds.as_mut().map(|s| {
                s.sort_by(f64::total_cmp);
                s.iter().sum::<f64>() / 3600.0
            });
            ConfigSummary {
                key,
                coverage_all: rs.iter().filter(|r| r.vmaf > spec.vmaf_threshold).count(),
                total_all: rs.len(),
                coverage_checkpoint: at_checkpoint.iter().filter(|r| r.vmaf > spec.vmaf_threshold).count(),
                total_checkpoint: at_checkpoint.len(),
                overshoot_count: rs
                    .iter()
                    .filter(|r| overshoots(r.target_kbps, r.measured_kbps, spec.overshoot_threshold))
                    .count(),
                total_hours,
            }
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SummaryRow {
    family: String,
    preset: String,
    passes: u8,
    overshoot_count: usize,
    coverage_all: usize,
    total_all: usize,
    coverage_checkpoint: usize,
    total_checkpoint: usize,
    total_hours: Option<f64>,
}

/// Reads summary rows (`family,preset,passes,overshoot_count,coverage_all,
/// total_all,coverage_checkpoint,total_checkpoint,total_hours`). Extra
/// columns are ignored.
pub fn read_summaries_csv(reader: impl Read) -> Result<Vec<ConfigSummary>, ScenarioError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SummaryRow>().enumerate() {
        let row = row.map_err(|e| ScenarioError::Import(format!("row {}: {e}", i + 1)))?;
        if row.coverage_all > row.total_all
            || row.coverage_checkpoint > row.total_checkpoint
            || row.coverage_checkpoint > row.coverage_all
        {
            return Err(ScenarioError::Import(format!(
                "row {}: counts exceed their totals",
                i + 1
            )));
        }
        out.push(ConfigSummary {
            key: ConfigKey::new(&row.family, &row.preset, row.passes),
            coverage_all: row.coverage_all,
            total_all: row.total_all,
            coverage_checkpoint: row.coverage_checkpoint,
            total_checkpoint: row.total_checkpoint,
            overshoot_count: row.overshoot_count,
            total_hours: row.total_hours,
        });
    }
    Ok(out)
}

pub fn write_summaries_csv<W: Write>(summaries: &[ConfigSummary], sink: W) -> Result<(), ScenarioError> {
    let mut w = csv::Writer::from_writer(sink);
    for s in summaries {
        w.serialize(SummaryRow {
            family: s.key.family.clone(),
            preset: s.key.preset.clone(),
            passes: s.key.passes,
            overshoot_count: s.overshoot_count,
            coverage_all: s.coverage_all,
            total_all: s.total_all,
            coverage_checkpoint: s.coverage_checkpoint,
            total_checkpoint: s.total_checkpoint,
            total_hours: s.total_hours,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Choice {
    Selected(ConfigSummary),
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySelection {
    pub family: String,
    pub choice: Choice,
    pub rationale: String,
    /// Every summary of the family that was considered.
    pub candidates: Vec<ConfigSummary>,
}

impl FamilySelection {
    pub fn selected(&self) -> Option<&ConfigSummary> {
        match &self.choice {
            Choice::Selected(s) => Some(s),
            Choice::Infeasible(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub spec: ScenarioSpec,
    pub selections: Vec<FamilySelection>,
}

impl ScenarioReport {
    pub fn selection(&self, family: &str) -> Option<&FamilySelection> {
        let family = normalize_family(family);
        self.selections.iter().find(|s| s.family == family)
    }

    pub fn selected_keys(&self) -> Vec<ConfigKey> {
        self.selections
            .iter()
            .filter_map(|s| s.selected().map(|c| c.key.clone()))
            .collect()
    }
}

/// Max-coverage order: coverage, then checkpoint coverage, then fewer
/// overshoots, then fewer hours (unknown hours last).
fn coverage_order(a: &ConfigSummary, b: &ConfigSummary) -> Ordering {
    b.coverage_percent()
        .total_cmp(&a.coverage_percent())
        .then_with(|| b.checkpoint_percent().total_cmp(&a.checkpoint_percent()))
        .then_with(|| a.overshoot_count.cmp(&b.overshoot_count))
        .then_with(|| hours_order(a, b))
        .then_with(|| a.key.cmp(&b.key))
}

/// Fastest first; ties go to the better-covering configuration.
fn time_order(a: &ConfigSummary, b: &ConfigSummary) -> Ordering {
    hours_order(a, b).then_with(|| coverage_order(a, b))
}

fn hours_order(a: &ConfigSummary, b: &ConfigSummary) -> Ordering {
    let h = |s: &ConfigSummary| s.total_hours.unwrap_or(f64::INFINITY);
    h(a).total_cmp(&h(b))
}

fn within_budget(s: &ConfigSummary, budget: f64) -> bool {
    s.total_hours.is_some_and(|h| h <= budget)
}

fn max_coverage(candidates: &[ConfigSummary]) -> Option<&ConfigSummary> {
    candidates.iter().min_by(|a, b| coverage_order(a, b))
}

fn select_family(family: &str, candidates: Vec<ConfigSummary>, spec: &ScenarioSpec) -> FamilySelection {
    let budget = spec.time_budget_hours.unwrap_or(f64::INFINITY);
    let (choice, rationale) = match spec.objective {
        Objective::MaxCoverage => {
            let best = max_coverage(&candidates).cloned();
            match best {
                Some(s) => {
                    let why = format!("max coverage above vmaf {}: {}", spec.vmaf_threshold, s.describe());
                    (Choice::Selected(s), why)
                }
                None => (Choice::Infeasible("no configurations".into()), String::new()),
            }
        }
        Objective::FastestWithinSlack { slack_points } => match max_coverage(&candidates) {
            None => (Choice::Infeasible("no configurations".into()), String::new()),
            Some(reference) => {
                let floor = reference.coverage_percent() - slack_points;
                let pick = candidates
                    .iter()
                    .filter(|s| s.total_hours.is_some() && s.coverage_percent() >= floor)
                    .min_by(|a, b| time_order(a, b))
                    .cloned();
                match pick {
                    Some(s) => {
                        let saving = match (reference.total_hours, s.total_hours) {
                            (Some(r), Some(h)) if r > 0.0 => format!(", {:.1}% less time", 100.0 * (r - h) / r),
                            _ => String::new(),
                        };
                        let why = format!(
                            "fastest within {slack_points} points of max-coverage pick {} ({:.1}%){saving}: {}",
                            reference.key,
                            reference.coverage_percent(),
                            s.describe()
                        );
                        (Choice::Selected(s), why)
                    }
                    None => (
                        Choice::Infeasible(format!(
                            "no configuration with known hours within {slack_points} points of {}",
                            reference.key
                        )),
                        String::new(),
                    ),
                }
            }
        },
        Objective::MinTimeWithinBudget | Objective::MaxCoverageWithinBudget => {
            let feasible: Vec<ConfigSummary> = candidates
                .iter()
                .filter(|s| within_budget(s, budget))
                .cloned()
                .collect();
            let pick = if spec.objective == Objective::MinTimeWithinBudget {
                feasible.iter().min_by(|a, b| time_order(a, b))
            } else {
                max_coverage(&feasible)
            };
            match pick {
                Some(s) => {
                    let how = if spec.objective == Objective::MinTimeWithinBudget {
                        "fastest"
                    } else {
                        "max coverage"
                    };
                    let why = format!("{how} within {budget} h budget: {}", s.describe());
                    (Choice::Selected(s.clone()), why)
                }
                None => {
                    let fastest = candidates
                        .iter()
                        .min_by(|a, b| time_order(a, b))
                        .map_or("none".to_string(), |s| s.describe());
                    (
                        Choice::Infeasible(format!(
                            "no configuration within {budget} h budget (fastest: {fastest})"
                        )),
                        String::new(),
                    )
                }
            }
        }
    };
    let rationale = match (&choice, rationale.is_empty()) {
        (Choice::Infeasible(reason), true) => reason.clone(),
        _ => rationale,
    };
    FamilySelection {
        family: family.to_string(),
        choice,
        rationale,
        candidates,
    }
}

/// Picks one configuration per family present in `summaries`. Families
/// with no admissible configuration get an infeasibility entry.
pub fn select_presets(summaries: &[ConfigSummary], spec: &ScenarioSpec) -> Result<ScenarioReport, ScenarioError> {
    spec.validate()?;
    let mut by_family: BTreeMap<String, Vec<ConfigSummary>> = BTreeMap::new();
    for s in summaries {
        by_family.entry(s.key.family.clone()).or_default().push(s.clone());
    }
    let selections = by_family
        .into_iter()
        .map(|(family, candidates)| select_family(&family, candidates, spec))
        .collect();
    Ok(ScenarioReport {
        spec: spec.clone(),
        selections,
    })
}

/// Re-checks every selection of a report against its spec's hard
/// constraints. Returns the violations found.
pub fn constraint_violations(report: &ScenarioReport) -> Vec<String> {
    let spec = &report.spec;
    let mut out = Vec::new();
    for sel in &report.selections {
        let Some(s) = sel.selected() else { continue };
        if !sel.candidates.contains(s) {
            out.push(format!("{}: selection is not a candidate", s.key));
        }
        match spec.objective {
            Objective::MinTimeWithinBudget | Objective::MaxCoverageWithinBudget => {
                let budget = spec.time_budget_hours.unwrap_or(f64::INFINITY);
                if !within_budget(s, budget) {
                    out.push(format!("{}: exceeds {budget} h budget", s.key));
                }
            }
            Objective::FastestWithinSlack { slack_points } => {
                if let Some(reference) = max_coverage(&sel.candidates) {
                    if s.coverage_percent() < reference.coverage_percent() - slack_points {
                        out.push(format!("{}: coverage below slack floor", s.key));
                    }
                }
            }
            Objective::MaxCoverage => {
                if let Some(best) = max_coverage(&sel.candidates) {
                    if best.coverage_percent() > s.coverage_percent() {
                        out.push(format!("{}: not max coverage", s.key));
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
