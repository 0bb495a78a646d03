use std::collections::{HashMap, HashSet};
use std::env;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Mutex};
use std::thread;
use std::time::Instant;

use chrono::Utc;
use log::{debug, info, warn};
use thiserror::Error;

use super::command::{build_commands, CommandLine, JobPaths, Programs};
use super::vmaf::{self, QualityError, QualityFields};
use super::{EncodeJob, EncoderFamily, PlanError};
use crate::store::{MetricRecord, RecordKey, ResultsStore, StoreError};
use crate::y4m::{self, Y4mError};

const STDERR_TAIL_LINES: usize = 12;

#[derive(Debug, Error)]
pub enum ExecError {
    /// A required binary is missing or cannot be started.
    #[error("environment error: {0}")]
    Environment(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("cannot read source clip: {0}")]
    Input(#[from] Y4mError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobStatus {
    Ok,
    Failed {
        invocation: u8,
        exit_code: Option<i32>,
        stderr_tail: String,
    },
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobOutcome {
    pub job: EncodeJob,
    pub status: JobStatus,
    /// Wall-clock seconds of each invocation that ran.
    pub pass_seconds: Vec<f64>,
    pub wall_seconds: f64,
    pub output_bytes: u64,
    pub measured_kbps: f64,
    pub output_path: PathBuf,
    pub tool_version: String,
    pub source_frames: u64,
    pub bit_depth: u8,
}

impl JobOutcome {
    fn skeleton(job: &EncodeJob, status: JobStatus) -> Self {
        Self {
            job: job.clone(),
            status,
            pass_seconds: Vec::new(),
            wall_seconds: 0.0,
            output_bytes: 0,
            measured_kbps: 0.0,
            output_path: PathBuf::new(),
            tool_version: String::new(),
            source_frames: 0,
            bit_depth: 8,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == JobStatus::Ok
    }

    /// Store row for an ok outcome and its quality measurement.
    pub fn to_record(&self, quality: &QualityFields) -> MetricRecord {
        MetricRecord {
            clip_id: self.job.clip_id.clone(),
            family: self.job.family.name().to_string(),
            preset: self.job.record_preset(),
            passes: self.job.passes,
            target_kbps: self.job.target_kbps,
            measured_kbps: self.measured_kbps,
            vmaf: quality.vmaf_mean.clamp(0.0, 100.0),
            psnr_y: quality.psnr_y,
            encode_seconds: Some(self.wall_seconds),
            output_bytes: Some(self.output_bytes),
            tool_version: self.tool_version.clone(),
            created_at: Utc::now(),
        }
    }
}

/// Bitrate of `bytes` spread over `seconds`, in kb/s.
pub fn kbps(bytes: u64, seconds: f64) -> f64 {
    8.0 * bytes as f64 / seconds / 1000.0
}

#[derive(Debug, Clone)]
pub struct RunnerConfig {
    pub programs: Programs,
    pub work_dir: PathBuf,
    /// Re-run jobs whose key is already in the store.
    pub force: bool,
    /// Run one encode at a time so wall-clock figures are comparable.
    pub timing_strict: bool,
    pub jobs: usize,
    pub vmaf_threads: u32,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            programs: Programs::default(),
            work_dir: PathBuf::from("rdgauge-work"),
            force: false,
            timing_strict: false,
            jobs: thread::available_parallelism().map_or(1, |n| n.get()),
            vmaf_threads: 1,
        }
    }
}

/// Executes jobs against external binaries and records their outcomes.
pub struct Runner {
    config: RunnerConfig,
    store: ResultsStore,
    completed: Mutex<Option<HashSet<RecordKey>>>,
    versions: Mutex<HashMap<PathBuf, String>>,
}

/// Output, pass-log and input locations of a job under `work_dir`.
pub fn job_paths(job: &EncodeJob, work_dir: &Path) -> JobPaths {
    let ext = match job.family {
        EncoderFamily::SvtAv1 => "ivf",
        _ => "mp4",
    };
    let slug = job.slug();
    JobPaths {
        input: job.source.clone(),
        output: work_dir.join("encodes").join(format!("{slug}.{ext}")),
        passlog: work_dir.join("passlogs").join(&slug),
    }
}

/// Resolves a program name against `PATH`, or checks an explicit path.
pub fn resolve_program(program: &Path) -> Option<PathBuf> {
    if program.components().count() > 1 || program.is_absolute() {
        return program.is_file().then(|| program.to_path_buf());
    }
    let path = env::var_os("PATH")?;
    env::split_paths(&path)
        .map(|dir| dir.join(program))
        .find(|candidate| candidate.is_file())
}

impl Runner {
    pub fn new(config: RunnerConfig, store: ResultsStore) -> Self {
        Self {
            config,
            store,
            completed: Mutex::new(None),
            versions: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> &RunnerConfig {
        &self.config
    }

    fn program(&self, path: &Path) -> Result<PathBuf, ExecError> {
        resolve_program(path)
            .ok_or_else(|| ExecError::Environment(format!("binary {} not found", path.display())))
    }

    /// Verifies that every binary the given families need is present.
    pub fn check_environment(&self, families: &[EncoderFamily]) -> Result<(), ExecError> {
        self.program(&self.config.programs.ffmpeg)?;
        for f in families {
            self.program(self.config.programs.for_family(*f))?;
        }
        Ok(())
    }

    /// First line of the binary's version banner, cached per binary.
    pub fn tool_version(&self, family: EncoderFamily) -> String {
        let program = self.config.programs.for_family(family).to_path_buf();
        let mut cache = self.versions.lock().unwrap();
        cache
            .entry(program.clone())
            .or_insert_with(|| {
                let flag = match family {
                    EncoderFamily::SvtAv1 => "--version",
                    _ => "-version",
                };
                Command::new(&program)
                    .arg(flag)
                    .stdin(Stdio::null())
                    .output()
                    .ok()
                    .and_then(|o| {
                        let text = if o.stdout.is_empty() { o.stderr } else { o.stdout };
                        String::from_utf8_lossy(&text)
                            .lines()
                            .find(|l| !l.trim().is_empty())
                            .map(|l| l.trim().to_string())
                    })
                    .unwrap_or_else(|| "unknown".into())
            })
            .clone()
    }

    fn is_completed(&self, key: &RecordKey) -> Result<bool, ExecError> {
        let mut guard = self.completed.lock().unwrap();
        if guard.is_none() {
            let keys = self.store.load_all()?.into_iter().map(|r| r.key()).collect();
            *guard = Some(keys);
        }
        Ok(guard.as_ref().unwrap().contains(key))
    }

    fn mark_completed(&self, key: RecordKey) {
        if let Some(keys) = self.completed.lock().unwrap().as_mut() {
            keys.insert(key);
        }
    }

    pub fn paths_for(&self, job: &EncodeJob) -> JobPaths {
        job_paths(job, &self.config.work_dir)
    }

    /// Runs every invocation of a job in order and times each one. Jobs
    /// already in the store are skipped unless `force` is set.
    pub fn execute(&self, job: &EncodeJob) -> Result<JobOutcome, ExecError> {
        if !self.config.force && self.is_completed(&job.key())? {
            debug!("skipping completed job {}", job.slug());
            return Ok(JobOutcome::skeleton(job, JobStatus::Skipped));
        }
        let program = self.program(self.config.programs.for_family(job.family))?;
        let clip = y4m::probe(&job.source)?;
        let paths = self.paths_for(job);
        for dir in [paths.output.parent(), paths.passlog.parent()].into_iter().flatten() {
            fs::create_dir_all(dir)?;
        }
        let commands = build_commands(job, &paths, &self.config.programs)?;

        let mut outcome = JobOutcome::skeleton(job, JobStatus::Ok);
        outcome.tool_version = self.tool_version(job.family);
        outcome.output_path = paths.output.clone();
        outcome.source_frames = clip.frames;
        outcome.bit_depth = clip.header.bit_depth();

        for (i, cmd) in commands.iter().enumerate() {
            let started = Instant::now();
            let (code, tail) = run(&program, cmd)?;
            outcome.pass_seconds.push(started.elapsed().as_secs_f64());
            if code != Some(0) {
                warn!("{} invocation {} failed: {tail}", job.slug(), i + 1);
                outcome.status = JobStatus::Failed {
                    invocation: i as u8 + 1,
                    exit_code: code,
                    stderr_tail: tail,
                };
                break;
            }
        }
        outcome.wall_seconds = outcome.pass_seconds.iter().sum();
        if !outcome.is_ok() {
            return Ok(outcome);
        }
        remove_passlogs(&paths.passlog);

        outcome.output_bytes = fs::metadata(&paths.output)?.len();
        outcome.measured_kbps = kbps(outcome.output_bytes, clip.duration_seconds());
        info!(
            "{}: {:.1} kb/s in {:.2} s",
            job.slug(),
            outcome.measured_kbps,
            outcome.wall_seconds
        );
        Ok(outcome)
    }

    /// Runs the external VMAF tool on an ok outcome.
    pub fn measure_quality(&self, outcome: &JobOutcome) -> Result<QualityFields, ExecError> {
        let ffmpeg = self.program(&self.config.programs.ffmpeg)?;
        let log_dir = self.config.work_dir.join("vmaf");
        fs::create_dir_all(&log_dir)?;
        let log = log_dir.join(format!("{}.json", outcome.job.slug()));
        let cmd = vmaf::vmaf_command(
            &ffmpeg,
            &outcome.output_path,
            &outcome.job.source,
            &log,
            outcome.bit_depth,
            self.config.vmaf_threads,
        );
        let (code, tail) = run(&ffmpeg, &cmd)?;
        if code != Some(0) {
            return Err(QualityError::Metric(format!("vmaf run failed: {tail}")).into());
        }
        let fields = vmaf::parse_vmaf_log(&fs::read_to_string(&log)?)?;
        vmaf::check_frame_count(&fields, outcome.source_frames)?;
        Ok(fields)
    }

    /// Encode plus quality measurement, without persisting.
    fn process(&self, job: &EncodeJob) -> Result<(JobOutcome, Option<MetricRecord>), ExecError> {
        let outcome = self.execute(job)?;
        if !outcome.is_ok() {
            return Ok((outcome, None));
        }
        let quality = self.measure_quality(&outcome)?;
        let record = outcome.to_record(&quality);
        Ok((outcome, Some(record)))
    }

    fn persist(&self, record: &MetricRecord) -> Result<(), ExecError> {
        self.store.append(record)?;
        self.mark_completed(record.key());
        Ok(())
    }

    /// Encodes, measures and appends one job.
    pub fn run_job(&self, job: &EncodeJob) -> Result<JobOutcome, ExecError> {
        let (outcome, record) = self.process(job)?;
        if let Some(r) = record {
            self.persist(&r)?;
        }
        Ok(outcome)
    }

    /// Runs a whole plan on a bounded worker pool. Store appends go through
    /// this thread only; hardware-exclusive jobs never overlap. Results come
    /// back in plan order.
    pub fn run_matrix(&self, jobs: &[EncodeJob]) -> Vec<Result<JobOutcome, ExecError>> {
        let workers = if self.config.timing_strict {
            1
        } else {
            self.config.jobs.clamp(1, jobs.len().max(1))
        };
        let next = AtomicUsize::new(0);
        let device = Mutex::new(());
        let mut results: Vec<Option<Result<JobOutcome, ExecError>>> =
            jobs.iter().map(|_| None).collect();

        thread::scope(|scope| {
            let (tx, rx) = mpsc::channel();
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, device) = (&next, &device);
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(job) = jobs.get(i) else { break };
                    let _guard = job
                        .family
                        .hardware_exclusive()
                        .then(|| device.lock().unwrap_or_else(|e| e.into_inner()));
                    if tx.send((i, self.process(job))).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for (i, result) in rx {
                let result = result.and_then(|(outcome, record)| {
                    if let Some(r) = record {
                        self.persist(&r)?;
                    }
                    Ok(outcome)
                });
                results[i] = Some(result);
            }
        });
        results
            .into_iter()
            .map(|r| r.expect("every job reports back"))
            .collect()
    }
}

/// Spawns a command, waits, and returns its exit code with the tail of
/// stderr.
fn run(program: &Path, cmd: &CommandLine) -> Result<(Option<i32>, String), ExecError> {
    debug!("running {cmd}");
    let mut child = Command::new(program)
        .args(&cmd.args)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| match e.kind() {
            io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => {
                ExecError::Environment(format!("cannot start {}: {e}", program.display()))
            }
            _ => ExecError::Io(e),
        })?;
    let mut stderr = String::new();
    if let Some(mut pipe) = child.stderr.take() {
        let mut raw = Vec::new();
        pipe.read_to_end(&mut raw)?;
        stderr = String::from_utf8_lossy(&raw).into_owned();
    }
    let status = child.wait()?;
    Ok((status.code(), tail(&stderr, STDERR_TAIL_LINES)))
}

fn tail(text: &str, lines: usize) -> String {
    let all: Vec<&str> = text.lines().collect();
    all[all.len().saturating_sub(lines)..].join("\n")
}

/// Removes every file whose name starts with the pass-log prefix.
fn remove_passlogs(prefix: &Path) {
    let (Some(dir), Some(stem)) = (prefix.parent(), prefix.file_name()) else {
        return;
    };
    let stem = stem.to_string_lossy();
    let Ok(entries) = fs::read_dir(dir) else {
        return;
    };
    for entry in entries.flatten() {
        if entry.file_name().to_string_lossy().starts_with(stem.as_ref()) {
            let _ = fs::remove_file(entry.path());
        }
    }
}
