use std::fmt;
use std::path::{Path, PathBuf};

use super::{EncodeJob, EncoderFamily, PlanError};

/// Null sink for ffmpeg first passes.
const NULL_SINK: &str = "/dev/null";

/// A program plus its argument vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandLine {
    pub program: String,
    pub args: Vec<String>,
}

impl fmt::Display for CommandLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&quote(&self.program))?;
        for a in &self.args {
            write!(f, " {}", quote(a))?;
        }
        Ok(())
    }
}

fn quote(s: &str) -> String {
    if !s.is_empty() && !s.contains(|c: char| c.is_whitespace() || c == '\'' || c == '"') {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

/// Executables used to run encodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Programs {
    pub ffmpeg: PathBuf,
    pub svt_av1: PathBuf,
}

impl Default for Programs {
    fn default() -> Self {
        Self {
            ffmpeg: PathBuf::from("ffmpeg"),
            svt_av1: PathBuf::from("SvtAv1EncApp"),
        }
    }
}

impl Programs {
    /// Programs looked up inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            ffmpeg: dir.join("ffmpeg"),
            svt_av1: dir.join("SvtAv1EncApp"),
        }
    }

    pub fn for_family(&self, family: EncoderFamily) -> &Path {
        match family {
            EncoderFamily::SvtAv1 => &self.svt_av1,
            _ => &self.ffmpeg,
        }
    }
}

/// Filesystem locations a job's commands refer to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobPaths {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Prefix for ffmpeg two-pass statistics files.
    pub passlog: PathBuf,
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Number of process invocations a job needs. Only ffmpeg-wrapped software
/// encoders run two-pass as two processes; SVT-AV1 and NVENC handle both
/// passes inside one invocation.
pub fn invocations(job: &EncodeJob) -> Result<u8, PlanError> {
    match (job.family, job.passes) {
        (_, 1) => Ok(1),
        (EncoderFamily::X264 | EncoderFamily::X265, 2) => Ok(2),
        (EncoderFamily::SvtAv1 | EncoderFamily::NvencAv1, 2) => Ok(1),
        (f, p) => Err(PlanError::Unsupported(format!("{f} with {p} passes"))),
    }
}

/// All invocations for a job, in execution order.
pub fn build_commands(
    job: &EncodeJob,
    paths: &JobPaths,
    programs: &Programs,
) -> Result<Vec<CommandLine>, PlanError> {
    (1..=invocations(job)?)
        .map(|i| build_command(job, i, paths, programs))
        .collect()
}

/// Invocation `pass_index` (1-based) for a job.
pub fn build_command(
    job: &EncodeJob,
    pass_index: u8,
    paths: &JobPaths,
    programs: &Programs,
) -> Result<CommandLine, PlanError> {
    let count = invocations(job)?;
    if pass_index == 0 || pass_index > count {
        return Err(PlanError::Unsupported(format!(
            "invocation {pass_index} of {count} for {} {}-pass",
            job.family, job.passes
        )));
    }
    let program = s(programs.for_family(job.family));
    let args = match job.family {
        EncoderFamily::X264 | EncoderFamily::X265 => x26x_args(job, pass_index, paths),
        EncoderFamily::NvencAv1 => nvenc_args(job, paths),
        EncoderFamily::SvtAv1 => svt_args(job, paths),
    };
    Ok(CommandLine { program, args })
}

fn ffmpeg_rate_args(job: &EncodeJob, paths: &JobPaths) -> Vec<String> {
    let keyint = job.keyint_frames.to_string();
    vec![
        "-y".into(),
        "-i".into(),
        s(&paths.input),
        "-g".into(),
        keyint.clone(),
        "-keyint_min".into(),
        keyint,
        "-b:v".into(),
        format!("{}k", job.target_kbps),
        "-maxrate".into(),
        format!("{}k", job.maxrate_kbps()),
        "-bufsize".into(),
        format!("{}k", job.bufsize_kbps()),
    ]
}

fn x26x_args(job: &EncodeJob, pass_index: u8, paths: &JobPaths) -> Vec<String> {
    let (codec, params_flag) = match job.family {
        EncoderFamily::X264 => ("libx264", "-x264-params"),
        _ => ("libx265", "-x265-params"),
    };
    let mut a = ffmpeg_rate_args(job, paths);
    a.extend([
        "-c:v".into(),
        codec.into(),
        "-threads".into(),
        job.threads.to_string(),
        "-preset".into(),
        job.preset.clone(),
        "-tune".into(),
        "psnr".into(),
    ]);
    if job.passes == 2 {
        a.extend([
            "-pass".into(),
            pass_index.to_string(),
            "-passlogfile".into(),
            s(&paths.passlog),
        ]);
    }
    a.extend([params_flag.into(), "scenecut=0".into()]);
    a.extend(job.extra_params.iter().cloned());
    match (job.passes, pass_index) {
        (2, 1) => a.extend(["-f".into(), "mp4".into(), NULL_SINK.into()]),
        (2, _) => a.push(s(&paths.output)),
        _ => a.extend(["-f".into(), "mp4".into(), s(&paths.output)]),
    }
    a
}

fn nvenc_args(job: &EncodeJob, paths: &JobPaths) -> Vec<String> {
    let mut a = ffmpeg_rate_args(job, paths);
    a.extend([
        "-c:v".into(),
        "av1_nvenc".into(),
        "-rc".into(),
        "vbr".into(),
        "-threads".into(),
        job.threads.to_string(),
        "-preset".into(),
        // ffmpeg spells the NVENC presets in lower case
        job.preset.to_ascii_lowercase(),
        "-no-scenecut".into(),
        "1".into(),
    ]);
    if job.passes == 2 {
        a.extend(["-multipass".into(), "2".into()]);
    }
    a.extend(job.extra_params.iter().cloned());
    a.push(s(&paths.output));
    a
}

fn svt_args(job: &EncodeJob, paths: &JobPaths) -> Vec<String> {
    let mut a = vec![
        "-i".into(),
        s(&paths.input),
        "--keyint".into(),
        job.keyint_frames.to_string(),
        "--tbr".into(),
        job.target_kbps.to_string(),
        "-lp".into(),
        job.threads.to_string(),
        "--rc".into(),
        "1".into(),
    ];
    if job.passes == 2 {
        a.extend(["--passes".into(), "2".into()]);
    }
    a.extend(["--preset".into(), job.preset.clone()]);
    a.extend(job.extra_params.iter().cloned());
    a.extend(["-b".into(), s(&paths.output)]);
    a
}
