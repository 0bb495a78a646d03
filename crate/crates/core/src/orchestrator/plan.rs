use std::collections::HashSet;
use std::path::PathBuf;

use super::{EncodeJob, EncoderFamily, PlanError};

/// Target bitrates in kb/s used for every encoder/preset.
pub const DEFAULT_LADDER: [u32; 12] = [
    500, 1000, 2000, 3000, 4000, 6000, 8000, 10000, 12000, 14000, 16000, 20000,
];

/// Nine-point ladder for coding-tool sweeps, 500 kb/s to 10 Mb/s.
pub const TOOLSWEEP_LADDER: [u32; 9] = [500, 1000, 2000, 3000, 4000, 5000, 6000, 8000, 10000];

pub const TOOLSWEEP_PRESET: &str = "10";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clip {
    pub id: String,
    pub path: PathBuf,
}

impl Clip {
    /// Clip whose id is the file stem.
    pub fn from_path(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Self { id, path }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FamilyPlan {
    pub family: EncoderFamily,
    pub presets: Vec<String>,
}

impl FamilyPlan {
    /// Every preset of the family's vocabulary.
    pub fn full(family: EncoderFamily) -> Self {
        Self {
            family,
            presets: family.presets().iter().map(|p| p.to_string()).collect(),
        }
    }
}

/// Rate-control parameters shared by every job of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOptions {
    pub keyint_frames: u32,
    pub maxrate_factor: f64,
    pub bufsize_factor: f64,
    pub threads: u32,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            keyint_frames: 131,
            maxrate_factor: 1.2,
            bufsize_factor: 2.0,
            threads: 1,
        }
    }
}

impl PlanOptions {
    fn validate(&self) -> Result<(), PlanError> {
        if self.keyint_frames == 0 || self.threads == 0 {
            return Err(PlanError::Invalid("keyint and threads must be >= 1".into()));
        }
        if !(self.maxrate_factor >= 1.0 && self.bufsize_factor > 0.0) {
            return Err(PlanError::Invalid(format!(
                "maxrate factor {} must be >= 1 and bufsize factor {} > 0",
                self.maxrate_factor, self.bufsize_factor
            )));
        }
        Ok(())
    }

    fn job(&self, clip: &Clip, family: EncoderFamily, preset: &str, passes: u8, tbr: u32) -> EncodeJob {
        EncodeJob {
            clip_id: clip.id.clone(),
            source: clip.path.clone(),
            family,
            preset: preset.to_string(),
            passes,
            target_kbps: tbr,
            keyint_frames: self.keyint_frames,
            maxrate_factor: self.maxrate_factor,
            bufsize_factor: self.bufsize_factor,
            threads: self.threads,
            extra_params: Vec::new(),
            variant: None,
        }
    }
}

fn check_ladder(ladder: &[u32]) -> Result<(), PlanError> {
    if ladder.is_empty() {
        return Err(PlanError::Invalid("bitrate ladder is empty".into()));
    }
    if ladder.contains(&0) {
        return Err(PlanError::Invalid("ladder bitrates must be positive".into()));
    }
    let unique: HashSet<_> = ladder.iter().collect();
    if unique.len() != ladder.len() {
        return Err(PlanError::Invalid("ladder has duplicate bitrates".into()));
    }
    Ok(())
}

/// Expands the full benchmark matrix, ordered by clip, family, preset, pass
/// mode, then bitrate (each in the order given).
pub fn plan_matrix(
    clips: &[Clip],
    families: &[FamilyPlan],
    ladder: &[u32],
    pass_modes: &[u8],
    opts: &PlanOptions,
) -> Result<Vec<EncodeJob>, PlanError> {
    check_ladder(ladder)?;
    opts.validate()?;
    if let Some(p) = pass_modes.iter().find(|p| !matches!(p, 1 | 2)) {
        return Err(PlanError::Unsupported(format!("{p}-pass encoding")));
    }
    let canonical = families
        .iter()
        .map(|f| {
            let presets = f
                .presets
                .iter()
                .map(|p| f.family.canonical_preset(p))
                .collect::<Result<Vec<_>, _>>()?;
            Ok((f.family, presets))
        })
        .collect::<Result<Vec<_>, PlanError>>()?;

    let mut jobs = Vec::new();
    for clip in clips {
        for (family, presets) in &canonical {
            for preset in presets {
                for &passes in pass_modes {
                    for &tbr in ladder {
                        jobs.push(opts.job(clip, *family, preset, passes, tbr));
                    }
                }
            }
        }
    }
    Ok(jobs)
}

/// One default configuration plus one configuration per toggle, each
/// swept over `ladder` with 1-pass SVT-AV1 at preset 10.
pub fn plan_toolsweep(
    clip: &Clip,
    toggles: &[String],
    ladder: &[u32],
    opts: &PlanOptions,
) -> Result<Vec<EncodeJob>, PlanError> {
    check_ladder(ladder)?;
    opts.validate()?;
    let mut seen = HashSet::new();
    for t in toggles {
        let t = t.trim();
        if t.is_empty() {
            return Err(PlanError::Invalid("empty toggle".into()));
        }
        if !seen.insert(t) {
            return Err(PlanError::Invalid(format!("duplicate toggle {t:?}")));
        }
    }

    let configs = std::iter::once(None).chain(toggles.iter().map(|t| Some(t.trim())));
    let mut jobs = Vec::new();
    for toggle in configs {
        for &tbr in ladder {
            let mut job = opts.job(clip, EncoderFamily::SvtAv1, TOOLSWEEP_PRESET, 1, tbr);
            match toggle {
                Some(t) => {
                    job.extra_params = t.split_whitespace().map(str::to_string).collect();
                    job.variant = Some(t.to_string());
                }
                None => job.variant = Some("default".into()),
            }
            jobs.push(job);
        }
    }
    Ok(jobs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clips(n: usize) -> Vec<Clip> {
        (0..n)
            .map(|i| Clip {
                id: format!("shot{i:02}"),
                path: PathBuf::from(format!("/data/shot{i:02}.y4m")),
            })
            .collect()
    }

    #[test]
    fn single_job_plan() {
        let jobs = plan_matrix(
            &clips(1),
            &[FamilyPlan {
                family: EncoderFamily::X264,
                presets: vec!["medium".into()],
            }],
            &[4000],
            &[1],
            &PlanOptions::default(),
        )
        .unwrap();
        assert_eq!(jobs.len(), 1);
        let j = &jobs[0];
        assert_eq!((j.keyint_frames, j.threads), (131, 1));
        assert_eq!((j.maxrate_kbps(), j.bufsize_kbps()), (4800, 8000));
    }

    #[test]
    fn ordering_is_clip_family_preset_pass_rate() {
        let jobs = plan_matrix(
            &clips(2),
            &[FamilyPlan {
                family: EncoderFamily::SvtAv1,
                presets: vec!["2".into(), "4".into()],
            }],
            &[1000, 2000],
            &[1, 2],
            &PlanOptions::default(),
        )
        .unwrap();
        let keys: Vec<_> = jobs
            .iter()
            .map(|j| (j.clip_id.as_str(), j.preset.as_str(), j.passes, j.target_kbps))
            .collect();
        assert_eq!(keys[0], ("shot00", "2", 1, 1000));
        assert_eq!(keys[1], ("shot00", "2", 1, 2000));
        assert_eq!(keys[2], ("shot00", "2", 2, 1000));
        assert_eq!(keys[4], ("shot00", "4", 1, 1000));
        assert_eq!(keys[8], ("shot01", "2", 1, 1000));
    }

    #[test]
    fn unknown_preset_is_plan_error() {
        let err = plan_matrix(
            &clips(1),
            &[FamilyPlan {
                family: EncoderFamily::X265,
                presets: vec!["placebo".into()],
            }],
            &DEFAULT_LADDER,
            &[1],
            &PlanOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, PlanError::UnknownPreset { .. }));
    }

    #[test]
    fn rejects_bad_factors() {
        let fam = [FamilyPlan::full(EncoderFamily::X264)];
        assert!(plan_matrix(&clips(1), &fam, &[], &[1], &PlanOptions::default()).is_err());
        assert!(plan_matrix(&clips(1), &fam, &[100], &[3], &PlanOptions::default()).is_err());
        assert!(plan_matrix(&clips(1), &fam, &[100, 100], &[1], &PlanOptions::default()).is_err());
    }

    #[test]
    fn toolsweep_sizes_and_duplicates() {
        let clip = &clips(1)[0];
        let toggles: Vec<String> = [
            "--enable-dlf 0",
            "--enable-cdef 0",
            "--enable-restoration 1",
            "--enable-tpl-la 0",
            "--enable-mfmv 1",
            "--enable-dg 0",
            "--fast-decode 1",
            "--enable-tf 0",
            "--enable-overlays 1",
        ]
        .map(String::from)
        .to_vec();
        let opts = PlanOptions::default();
        let jobs = plan_toolsweep(clip, &toggles, &TOOLSWEEP_LADDER, &opts).unwrap();
        assert_eq!(jobs.len(), 90);
        assert!(jobs.iter().all(|j| j.preset == "10" && j.passes == 1));
        assert_eq!(jobs[9].extra_params, vec!["--enable-dlf", "0"]);
        let keys: HashSet<_> = jobs.iter().map(|j| j.key()).collect();
        assert_eq!(keys.len(), 90);

        assert_eq!(plan_toolsweep(clip, &[], &TOOLSWEEP_LADDER, &opts).unwrap().len(), 9);
        let dup = vec!["--enable-tf 0".to_string(), "--enable-tf 0".to_string()];
        assert!(matches!(
            plan_toolsweep(clip, &dup, &TOOLSWEEP_LADDER, &opts),
            Err(PlanError::Invalid(_))
        ));
    }
}
