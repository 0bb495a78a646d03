//! External VMAF measurement through ffmpeg's `libvmaf` filter and parsing
//! of its JSON log.

use std::path::Path;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use super::CommandLine;

#[derive(Debug, Error, PartialEq)]
pub enum QualityError {
    #[error("cannot parse vmaf log: {0}")]
    Parse(String),
    #[error("metric error: {0}")]
    Metric(String),
}

/// Pooled scores from one comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityFields {
    pub vmaf_mean: f64,
    pub psnr_y: Option<f64>,
    pub frames: usize,
}

#[derive(Deserialize)]
struct Pooled {
    mean: f64,
}

/// Reads pooled mean VMAF and PSNR-Y from a libvmaf JSON log.
pub fn parse_vmaf_log(text: &str) -> Result<QualityFields, QualityError> {
    let root: Value =
        serde_json::from_str(text).map_err(|e| QualityError::Parse(e.to_string()))?;
    let pooled = root
        .get("pooled_metrics")
        .ok_or_else(|| QualityError::Parse("no pooled_metrics section".into()))?;
    let mean_of = |name: &str| -> Result<Option<f64>, QualityError> {
        pooled
            .get(name)
            .map(|v| {
                Pooled::deserialize(v)
                    .map(|p| p.mean)
                    .map_err(|e| QualityError::Parse(format!("{name}: {e}")))
            })
            .transpose()
    };
    let vmaf_mean = mean_of("vmaf")?
        .ok_or_else(|| QualityError::Parse("pooled_metrics lacks vmaf".into()))?;
    let psnr_y = mean_of("psnr_y")?;
    let frames = root
        .get("frames")
        .and_then(Value::as_array)
        .map_or(0, Vec::len);
    Ok(QualityFields {
        vmaf_mean,
        psnr_y,
        frames,
    })
}

/// Fails when the log covers a different number of frames than the source.
pub fn check_frame_count(fields: &QualityFields, source_frames: u64) -> Result<(), QualityError> {
    if fields.frames as u64 != source_frames {
        return Err(QualityError::Metric(format!(
            "vmaf log has {} frames, source has {source_frames}",
            fields.frames
        )));
    }
    Ok(())
}

fn filter_escape(p: &Path) -> String {
    p.to_string_lossy()
        .replace('\\', "\\\\")
        .replace(':', "\\:")
        .replace('\'', "\\'")
}

/// ffmpeg invocation comparing `distorted` against `reference`, writing a
/// JSON log with VMAF and PSNR features to `log`.
pub fn vmaf_command(
    ffmpeg: &Path,
    distorted: &Path,
    reference: &Path,
    log: &Path,
    bit_depth: u8,
    threads: u32,
) -> CommandLine {
    let pix = if bit_depth > 8 { "yuv420p10le" } else { "yuv420p" };
    let graph = format!(
        "[0:v]format={pix}[dis];[1:v]format={pix}[ref];[dis][ref]libvmaf=log_fmt=json:log_path={}:feature=name=psnr:n_threads={threads}",
        filter_escape(log)
    );
    CommandLine {
        program: ffmpeg.to_string_lossy().into_owned(),
        args: [
            "-hide_banner",
            "-nostdin",
            "-i",
            &distorted.to_string_lossy(),
            "-i",
            &reference.to_string_lossy(),
            "-lavfi",
            &graph,
            "-f",
            "null",
            "-",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    }
}
