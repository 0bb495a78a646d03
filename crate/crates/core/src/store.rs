//! Append-only results store.
//!
//! One JSON object per line. Appends are single `write_all` calls; a torn
//! trailing line left behind by a crash is skipped on load and trimmed
//! before the next append. Duplicate keys are resolved at load time by
//! keeping the latest record (by timestamp, then file order).

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("invalid record: {0}")]
    Validation(String),
    #[error("malformed record on line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("import row {row}: {reason}")]
    Import { row: usize, reason: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Canonical spelling for encoder family names: lower case, `-` separated.
/// `SVT_AV1`, `svt-av1` and `Svt-Av1` all map to `svt-av1`.
pub fn normalize_family(name: &str) -> String {
    name.trim().to_ascii_lowercase().replace('_', "-")
}

/// One persisted encode outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    #[serde(rename = "clip")]
    pub clip_id: String,
    pub family: String,
    pub preset: String,
    pub passes: u8,
    #[serde(rename = "tbr_kbps")]
    pub target_kbps: u32,
    #[serde(rename = "kbps")]
    pub measured_kbps: f64,
    pub vmaf: f64,
    pub psnr_y: Option<f64>,
    #[serde(rename = "enc_s")]
    pub encode_seconds: Option<f64>,
    #[serde(rename = "bytes")]
    pub output_bytes: Option<u64>,
    #[serde(rename = "tool")]
    pub tool_version: String,
    #[serde(rename = "ts")]
    pub created_at: DateTime<Utc>,
}

/// Identity of a record for dedupe purposes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordKey {
    pub clip_id: String,
    pub family: String,
    pub preset: String,
    pub passes: u8,
    pub target_kbps: u32,
}

impl MetricRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            clip_id: self.clip_id.clone(),
            family: self.family.clone(),
            preset: self.preset.clone(),
            passes: self.passes,
            target_kbps: self.target_kbps,
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let fail = |m: String| Err(StoreError::Validation(m));
        if self.clip_id.is_empty() || self.family.is_empty() || self.preset.is_empty() {
            return fail("clip, family and preset must be non-empty".into());
        }
        if self.passes == 0 {
            return fail("passes must be >= 1".into());
        }
        if self.target_kbps == 0 {
            return fail("target bitrate must be positive".into());
        }
        if !(self.measured_kbps.is_finite() && self.measured_kbps > 0.0) {
            return fail(format!("measured bitrate {} must be > 0", self.measured_kbps));
        }
        if !(0.0..=100.0).contains(&self.vmaf) {
            return fail(format!("vmaf {} outside [0, 100]", self.vmaf));
        }
        if self.psnr_y.is_some_and(|p| !p.is_finite()) {
            return fail("psnr_y must be finite".into());
        }
        if self
            .encode_seconds
            .is_some_and(|s| !(s.is_finite() && s >= 0.0))
        {
            return fail(format!("encode seconds {:?} must be >= 0", self.encode_seconds));
        }
        Ok(())
    }
}

/// Field-equality filter over records; `None` fields match anything.
#[derive(Debug, Clone, Default)]
pub struct RecordFilter {
    pub clip_id: Option<String>,
    pub family: Option<String>,
    pub preset: Option<String>,
    pub passes: Option<u8>,
    pub target_kbps: Option<u32>,
}

impl RecordFilter {
    pub fn matches(&self, r: &MetricRecord) -> bool {
        self.clip_id.as_ref().is_none_or(|c| *c == r.clip_id)
            && self
                .family
                .as_ref()
                .is_none_or(|f| normalize_family(f) == normalize_family(&r.family))
            && self.preset.as_ref().is_none_or(|p| *p == r.preset)
            && self.passes.is_none_or(|p| p == r.passes)
            && self.target_kbps.is_none_or(|t| t == r.target_kbps)
    }
}

/// Handle on a store file. Writers must be serialized by the caller.
#[derive(Debug, Clone)]
pub struct ResultsStore {
    path: PathBuf,
}

impl ResultsStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &MetricRecord) -> Result<(), StoreError> {
        self.append_all(std::slice::from_ref(record))
    }

    pub fn append_all(&self, records: &[MetricRecord]) -> Result<(), StoreError> {
        for r in records {
            r.validate()?;
        }
        if records.is_empty() {
            return Ok(());
        }
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&self.path)?;
        trim_torn_tail(&mut file)?;
        for r in records {
            let mut line = serde_json::to_string(r).expect("records always serialize");
            line.push('\n');
            file.write_all(line.as_bytes())?;
        }
        file.flush()?;
        Ok(())
    }

    /// Every record, deduped, in key order.
    pub fn load_all(&self) -> Result<Vec<MetricRecord>, StoreError> {
        self.load(|_| true)
    }

    /// Deduped records matching `pred`, in key order. A missing file reads as
    /// an empty store.
    pub fn load(&self, pred: impl Fn(&MetricRecord) -> bool) -> Result<Vec<MetricRecord>, StoreError> {
        let file = match File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e.into()),
        };
        let raw = read_records(BufReader::new(file))?;
        Ok(dedupe(raw).into_iter().filter(|r| pred(r)).collect())
    }

    pub fn contains(&self, key: &RecordKey) -> Result<bool, StoreError> {
        Ok(!self.load(|r| r.key() == *key)?.is_empty())
    }

    /// Appends imported rows, returning how many were written.
    pub fn import_table(&self, rows: &[ImportRow], ctx: &ImportContext) -> Result<usize, StoreError> {
        let records = rows_to_records(rows, ctx)?;
        self.append_all(&records)?;
        Ok(records.len())
    }
}

/// If the file does not end in a newline, drop the torn partial line.
fn trim_torn_tail(file: &mut File) -> io::Result<()> {
    let len = file.metadata()?.len();
    if len == 0 {
        return Ok(());
    }
    let mut contents = Vec::with_capacity(len as usize);
    file.seek(SeekFrom::Start(0))?;
    file.read_to_end(&mut contents)?;
    if contents.last() == Some(&b'\n') {
        return Ok(());
    }
    let keep = contents
        .iter()
        .rposition(|&b| b == b'\n')
        .map_or(0, |i| i + 1);
    warn!("dropping {} bytes of torn trailing record", contents.len() - keep);
    file.set_len(keep as u64)?;
    Ok(())
}

fn read_records(mut reader: impl BufRead) -> Result<Vec<MetricRecord>, StoreError> {
    let mut out = Vec::new();
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let terminated = buf.last() == Some(&b'\n');
        let text = String::from_utf8_lossy(&buf);
        let text = text.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<MetricRecord>(text) {
            Ok(r) => out.push(r),
            Err(e) if !terminated => {
                warn!("ignoring partial trailing record on line {line_no}: {e}");
            }
            Err(e) => {
                return Err(StoreError::Malformed {
                    line: line_no,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Keep-latest dedupe; ties on timestamp go to the later line.
pub fn dedupe(records: Vec<MetricRecord>) -> Vec<MetricRecord> {
    let mut latest: BTreeMap<RecordKey, MetricRecord> = BTreeMap::new();
    for r in records {
        match latest.get(&r.key()) {
            Some(prev) if prev.created_at > r.created_at => {}
            _ => {
                latest.insert(r.key(), r);
            }
        }
    }
    latest.into_values().collect()
}

/// Externally produced table row. Fields stay textual so that bad numbers
/// surface as import errors with row numbers.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ImportRow {
    pub label: String,
    pub bitrate: String,
    pub vmaf: String,
    #[serde(default)]
    pub psnr_y: Option<String>,
    #[serde(default)]
    pub enc_s: Option<String>,
    #[serde(default)]
    pub tbr_kbps: Option<String>,
}

/// Where imported rows land: the row label becomes the preset.
#[derive(Debug, Clone)]
pub struct ImportContext {
    pub clip_id: String,
    pub family: String,
    pub passes: u8,
    pub target_kbps: u32,
    pub tool_version: String,
}

pub fn read_import_csv(reader: impl Read) -> Result<Vec<ImportRow>, StoreError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize()
        .collect::<Result<Vec<ImportRow>, _>>()
        .map_err(StoreError::from)
}

pub fn rows_to_records(rows: &[ImportRow], ctx: &ImportContext) -> Result<Vec<MetricRecord>, StoreError> {
    let now = Utc::now();
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let row_no = i + 1;
            let num = |field: &str, v: &str| -> Result<f64, StoreError> {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| StoreError::Import {
                        row: row_no,
                        reason: format!("non-numeric {field} {v:?}"),
                    })
            };
            let opt = |field: &str, v: &Option<String>| -> Result<Option<f64>, StoreError> {
                match v.as_deref().map(str::trim) {
                    None | Some("") => Ok(None),
                    Some(s) => num(field, s).map(Some),
                }
            };
            let target_kbps = match opt("tbr_kbps", &row.tbr_kbps)? {
                Some(t) if t >= 1.0 && t.fract() == 0.0 => t as u32,
                Some(t) => {
                    return Err(StoreError::Import {
                        row: row_no,
                        reason: format!("target bitrate {t} is not a positive integer"),
                    })
                }
                None => ctx.target_kbps,
            };
            let record = MetricRecord {
                clip_id: ctx.clip_id.clone(),
                family: normalize_family(&ctx.family),
                preset: row.label.trim().to_string(),
                passes: ctx.passes,
                target_kbps,
                measured_kbps: num("bitrate", &row.bitrate)?,
                vmaf: num("vmaf", &row.vmaf)?,
                psnr_y: opt("psnr_y", &row.psnr_y)?,
                encode_seconds: opt("enc_s", &row.enc_s)?,
                output_bytes: None,
                tool_version: ctx.tool_version.clone(),
                created_at: now,
            };
            record.validate().map_err(|e| StoreError::Import {
                row: row_no,
                reason: e.to_string(),
            })?;
            Ok(record)
        })
        .collect()
}
