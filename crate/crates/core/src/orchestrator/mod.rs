//! Benchmark planning and execution.
//!
//! A plan is a cartesian product of clips, encoder presets, pass modes and
//! target bitrates. Each job maps to one or two external process
//! invocations whose argument vectors are built by [`build_commands`].
//! [`Runner`] executes them, times every pass, measures quality with the
//! external VMAF tool and appends the outcome to the results store.

mod command;
mod plan;
mod runner;
pub mod vmaf;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::store::{normalize_family, RecordKey};

pub use command::{build_command, build_commands, CommandLine, JobPaths, Programs};
pub use plan::{
    plan_matrix, plan_toolsweep, Clip, FamilyPlan, PlanOptions, DEFAULT_LADDER,
    TOOLSWEEP_LADDER, TOOLSWEEP_PRESET,
};
pub use runner::{job_paths, kbps, resolve_program, ExecError, JobOutcome, JobStatus, Runner, RunnerConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("unknown preset {preset:?} for {family} (known: {known})")]
    UnknownPreset {
        family: EncoderFamily,
        preset: String,
        known: String,
    },
    #[error("unknown encoder family {0:?}")]
    UnknownFamily(String),
    #[error("unsupported combination: {0}")]
    Unsupported(String),
    #[error("invalid plan: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EncoderFamily {
    X264,
    X265,
    SvtAv1,
    NvencAv1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvocationStyle {
    /// Driven through an ffmpeg-compatible transcoder.
    FfmpegWrapped,
    /// The encoder's own command-line application.
    NativeApp,
}

const X26X_PRESETS: &[&str] = &["veryslow", "slow", "medium", "fast", "veryfast", "ultrafast"];
const SVT_PRESETS: &[&str] = &["2", "4", "6", "8", "10", "12"];
const NVENC_PRESETS: &[&str] = &["P1", "P3", "P4", "P5", "P7"];

impl EncoderFamily {
    pub const ALL: [EncoderFamily; 4] = [Self::X264, Self::X265, Self::SvtAv1, Self::NvencAv1];

    pub fn name(self) -> &'static str {
        match self {
            Self::X264 => "x264",
            Self::X265 => "x265",
            Self::SvtAv1 => "svt-av1",
            Self::NvencAv1 => "nvenc-av1",
        }
    }

    /// Presets benchmarked for this family, slowest first.
    pub fn presets(self) -> &'static [&'static str] {
        match self {
            Self::X264 | Self::X265 => X26X_PRESETS,
            Self::SvtAv1 => SVT_PRESETS,
            Self::NvencAv1 => NVENC_PRESETS,
        }
    }

    pub fn invocation_style(self) -> InvocationStyle {
        match self {
            Self::SvtAv1 => InvocationStyle::NativeApp,
            _ => InvocationStyle::FfmpegWrapped,
        }
    }

    /// Hardware encoders share one device and must not run concurrently.
    pub fn hardware_exclusive(self) -> bool {
        matches!(self, Self::NvencAv1)
    }

    /// Canonical spelling of `preset` from this family's vocabulary.
    pub fn canonical_preset(self, preset: &str) -> Result<&'static str, PlanError> {
        self.presets()
            .iter()
            .copied()
            .find(|p| p.eq_ignore_ascii_case(preset.trim()))
            .ok_or_else(|| PlanError::UnknownPreset {
                family: self,
                preset: preset.to_string(),
                known: self.presets().join(","),
            })
    }
}

impl fmt::Display for EncoderFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderFamily {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_family(s).as_str() {
            "x264" | "libx264" => Ok(Self::X264),
            "x265" | "libx265" => Ok(Self::X265),
            "svt-av1" | "svtav1" => Ok(Self::SvtAv1),
            "nvenc-av1" | "nvenc" | "av1-nvenc" => Ok(Self::NvencAv1),
            _ => Err(PlanError::UnknownFamily(s.to_string())),
        }
    }
}

/// One (clip, encoder, preset, pass mode, target bitrate) unit of work.
/// Rate control is always VBR.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodeJob {
    pub clip_id: String,
    pub source: PathBuf,
    pub family: EncoderFamily,
    pub preset: String,
    pub passes: u8,
    pub target_kbps: u32,
    pub keyint_frames: u32,
    pub maxrate_factor: f64,
    pub bufsize_factor: f64,
    pub threads: u32,
    /// Raw encoder options appended to the command line.
    pub extra_params: Vec<String>,
    /// Configuration label for sweeps that share a preset, e.g.
    /// `--enable-tf 0`.
    pub variant: Option<String>,
}

impl EncodeJob {
    pub fn maxrate_kbps(&self) -> u64 {
        (f64::from(self.target_kbps) * self.maxrate_factor).round() as u64
    }

    pub fn bufsize_kbps(&self) -> u64 {
        (f64::from(self.target_kbps) * self.bufsize_factor).round() as u64
    }

    /// Preset column under which the outcome is stored.
    pub fn record_preset(&self) -> String {
        match &self.variant {
            Some(v) => format!("{}/{v}", self.preset),
            None => self.preset.clone(),
        }
    }

    pub fn key(&self) -> RecordKey {
        RecordKey {
            clip_id: self.clip_id.clone(),
            family: self.family.name().to_string(),
            preset: self.record_preset(),
            passes: self.passes,
            target_kbps: self.target_kbps,
        }
    }

    /// File-name friendly identifier, unique within a plan.
    pub fn slug(&self) -> String {
        let preset: String = self
            .record_preset()
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
            .collect();
        format!(
            "{}_{}_{}_{}p_{}k",
            self.clip_id,
            self.family.name(),
            preset,
            self.passes,
            self.target_kbps
        )
    }
}
