use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{bail, Context, Result};
use log::info;

use rdgauge_core::bd::{
    aggregate_curve, classic_bd_rate, clip_curves, smart_bd_rate, write_curves_csv, write_results_csv,
    Aggregation, BdRow, MetricKind,
};
use rdgauge_core::complexity::{analyze_clip, write_scatter_csv};
use rdgauge_core::orchestrator::vmaf::{check_frame_count, parse_vmaf_log, vmaf_command};
use rdgauge_core::orchestrator::{
    build_commands, job_paths, plan_matrix, plan_toolsweep, resolve_program, Clip, EncodeJob, EncoderFamily,
    ExecError, FamilyPlan, JobStatus, PlanOptions, Programs, Runner, RunnerConfig, DEFAULT_LADDER,
    TOOLSWEEP_LADDER,
};
use rdgauge_core::scenario::{
    bd_grid, emit_report, read_summaries_csv, scenario_curves, select_presets, summarize, time_grid, BdMethod,
    Choice, ConfigKey, ConfigSummary, Objective, ScenarioId, ScenarioReport, ScenarioSpec,
};
use rdgauge_core::store::{read_import_csv, ImportContext};
use rdgauge_core::y4m;
use rdgauge_core::{MetricRecord, ResultsStore};

use crate::{Cli, Cmd, Metric, PlanArgs, RunArgs, ScenarioArgs};

/// Bad command-line input discovered after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

impl From<Metric> for MetricKind {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Vmaf => MetricKind::Vmaf,
            Metric::PsnrY => MetricKind::PsnrY,
        }
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

pub fn run(cli: &Cli) -> Result<()> {
    let store = ResultsStore::new(&cli.store);
    match &cli.command {
        Cmd::Plan {
            plan,
            commands,
            work_dir,
        } => cmd_plan(cli, plan, *commands, work_dir),
        Cmd::Encode { plan, run } => cmd_encode(cli, &store, plan, run),
        Cmd::Vmaf {
            distorted,
            reference,
            binary_dir,
            threads,
        } => cmd_vmaf(cli, distorted, reference, binary_dir.as_deref(), *threads),
        Cmd::Complexity { clips } => cmd_complexity(cli, clips),
        Cmd::Import {
            table,
            clip,
            family,
            passes,
            target,
            tool_version,
        } => {
            let rows = read_import_csv(File::open(table).with_context(|| format!("cannot open {}", table.display()))?)?;
            let ctx = ImportContext {
                clip_id: clip.clone(),
                family: family.clone(),
                passes: *passes,
                target_kbps: *target,
                tool_version: tool_version.clone(),
            };
            let n = store.import_table(&rows, &ctx)?;
            println!("imported {n} records into {}", store.path().display());
            Ok(())
        }
        Cmd::Curves { metric } => cmd_curves(cli, &store, (*metric).into()),
        Cmd::Bdrate { anchor, test, metric } => cmd_bdrate(cli, &store, anchor, test, (*metric).into()),
        Cmd::Grid { configs, metric } => cmd_grid(cli, &store, configs, (*metric).into()),
        Cmd::Scenario { scenario } => cmd_scenario(cli, &store, scenario),
        Cmd::Report { scenario, metric } => cmd_report(cli, &store, scenario, (*metric).into()),
    }
}

fn collect_clips(paths: &[PathBuf]) -> Result<Vec<Clip>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x.eq_ignore_ascii_case("y4m")))
                .collect();
            found.sort();
            out.extend(found.into_iter().map(Clip::from_path));
        } else if p.is_file() {
            out.push(Clip::from_path(p));
        } else {
            return Err(usage(format!("no such clip or directory: {}", p.display())));
        }
    }
    if out.is_empty() {
        return Err(usage("no clips found"));
    }
    Ok(out)
}

fn build_plan(cli: &Cli, args: &PlanArgs) -> Result<Vec<EncodeJob>> {
    let clips = collect_clips(&args.clips)?;
    let opts = PlanOptions {
        keyint_frames: args.keyint,
        maxrate_factor: args.maxrate_factor,
        bufsize_factor: args.bufsize_factor,
        threads: args.threads,
    };
    if let Some(file) = &args.toolsweep {
        let toggles: Vec<String> = fs::read_to_string(file)
            .with_context(|| format!("cannot read {}", file.display()))?
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(String::from)
            .collect();
        let ladder = cli.ladder.clone().unwrap_or_else(|| TOOLSWEEP_LADDER.to_vec());
        return Ok(plan_toolsweep(&clips[0], &toggles, &ladder, &opts)?);
    }
    let families: Vec<EncoderFamily> = if args.families.is_empty() {
        EncoderFamily::ALL.to_vec()
    } else {
        args.families.iter().map(|f| f.parse()).collect::<Result<_, _>>()?
    };
    let plans: Vec<FamilyPlan> = families
        .into_iter()
        .map(|family| {
            if args.presets.is_empty() {
                FamilyPlan::full(family)
            } else {
                FamilyPlan {
                    family,
                    presets: args.presets.clone(),
                }
            }
        })
        .collect();
    let ladder = cli.ladder.clone().unwrap_or_else(|| DEFAULT_LADDER.to_vec());
    Ok(plan_matrix(&clips, &plans, &ladder, &args.passes, &opts)?)
}

fn cmd_plan(cli: &Cli, args: &PlanArgs, commands: bool, work_dir: &Path) -> Result<()> {
    let jobs = build_plan(cli, args)?;
    let mut out = sink(cli.out.as_deref())?;
    if commands {
        let programs = Programs::default();
        for job in &jobs {
            for cmd in build_commands(job, &job_paths(job, work_dir), &programs)? {
                writeln!(out, "{cmd}")?;
            }
        }
    } else {
        writeln!(out, "clip,family,preset,passes,target_kbps")?;
        for j in &jobs {
            writeln!(out, "{},{},{},{},{}", j.clip_id, j.family, csv_field(&j.record_preset()), j.passes, j.target_kbps)?;
        }
    }
    out.flush()?;
    eprintln!("{} jobs", jobs.len());
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', ' ']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn programs(binary_dir: Option<&Path>) -> Programs {
    binary_dir.map_or_else(Programs::default, Programs::in_dir)
}

fn cmd_encode(cli: &Cli, store: &ResultsStore, plan: &PlanArgs, run: &RunArgs) -> Result<()> {
    let jobs = build_plan(cli, plan)?;
    let mut config = RunnerConfig {
        programs: programs(run.binary_dir.as_deref()),
        work_dir: run.work_dir.clone(),
        force: run.force,
        timing_strict: run.timing_strict,
        ..RunnerConfig::default()
    };
    if let Some(n) = run.jobs {
        config.jobs = n.max(1);
    }
    let runner = Runner::new(config, store.clone());
    let families: BTreeSet<EncoderFamily> = jobs.iter().map(|j| j.family).collect();
    runner.check_environment(&families.into_iter().collect::<Vec<_>>())?;

    info!("running {} jobs", jobs.len());
    let results = runner.run_matrix(&jobs);
    let (mut ok, mut skipped, mut failed) = (0, 0, 0);
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok(o) => match o.status {
                JobStatus::Ok => ok += 1,
                JobStatus::Skipped => skipped += 1,
                JobStatus::Failed { invocation, exit_code, stderr_tail } => {
                    failed += 1;
                    eprintln!("{}: invocation {invocation} exited {exit_code:?}\n{stderr_tail}", job.slug());
                }
            },
            Err(e @ ExecError::Environment(_)) => return Err(e.into()),
            Err(e) => {
                failed += 1;
                eprintln!("{}: {e}", job.slug());
            }
        }
    }
    println!("{ok} encoded, {skipped} skipped, {failed} failed");
    if failed > 0 {
        bail!("{failed} of {} jobs failed", jobs.len());
    }
    Ok(())
}

fn cmd_vmaf(cli: &Cli, distorted: &Path, reference: &Path, binary_dir: Option<&Path>, threads: u32) -> Result<()> {
    let programs = programs(binary_dir);
    let ffmpeg = resolve_program(&programs.ffmpeg)
        .ok_or_else(|| ExecError::Environment(format!("binary {} not found", programs.ffmpeg.display())))?;
    let source = y4m::probe(reference)?;
    let log = cli.out.clone().unwrap_or_else(|| PathBuf::from("vmaf.json"));
    let cmd = vmaf_command(&ffmpeg, distorted, reference, &log, source.header.bit_depth(), threads);
    let status = Command::new(&ffmpeg)
        .args(&cmd.args)
        .status()
        .map_err(|e| ExecError::Environment(format!("cannot start {}: {e}", ffmpeg.display())))?;
    if !status.success() {
        bail!("vmaf run failed with {status}");
    }
    let fields = parse_vmaf_log(&fs::read_to_string(&log)?)?;
    check_frame_count(&fields, source.frames)?;
    println!("vmaf={:.4}", fields.vmaf_mean);
    if let Some(p) = fields.psnr_y {
        println!("psnr_y={p:.4}");
    }
    Ok(())
}

fn cmd_complexity(cli: &Cli, paths: &[PathBuf]) -> Result<()> {
    let clips = collect_clips(paths)?;
    let records = clips
        .iter()
        .map(|c| analyze_clip(&c.path).with_context(|| format!("analyzing {}", c.path.display())))
        .collect::<Result<Vec<_>>>()?;
    write_scatter_csv(&records, sink(cli.out.as_deref())?)?;
    Ok(())
}

/// `family:preset:passes`, with family and preset spelled canonically when
/// the family is known.
fn parse_config(s: &str) -> Result<ConfigKey> {
    let parts: Vec<&str> = s.split(':').collect();
    let [family, preset, passes] = parts[..] else {
        return Err(usage(format!("configuration {s:?} is not family:preset:passes")));
    };
    let passes: u8 = passes
        .trim_end_matches('p')
        .parse()
        .map_err(|_| usage(format!("bad pass count in {s:?}")))?;
    Ok(match family.parse::<EncoderFamily>() {
        Ok(f) => ConfigKey::new(f.name(), f.canonical_preset(preset).unwrap_or(preset), passes),
        Err(_) => ConfigKey::new(family, preset, passes),
    })
}

fn load_records(store: &ResultsStore) -> Result<Vec<MetricRecord>> {
    store
        .load_all()
        .with_context(|| format!("reading {}", store.path().display()))
}

fn ladder_for(cli: &Cli, records: &[MetricRecord]) -> Vec<u32> {
    cli.ladder.clone().unwrap_or_else(|| {
        let set: BTreeSet<u32> = records.iter().map(|r| r.target_kbps).collect();
        set.into_iter().collect()
    })
}

fn configs_in(records: &[MetricRecord]) -> Vec<ConfigKey> {
    let set: BTreeSet<ConfigKey> = records.iter().map(ConfigKey::of).collect();
    set.into_iter().collect()
}

fn of_config(records: &[MetricRecord], key: &ConfigKey) -> Vec<MetricRecord> {
    records.iter().filter(|r| key.matches(r)).cloned().collect::<Vec<_>>()
}

fn cmd_curves(cli: &Cli, store: &ResultsStore, metric: MetricKind) -> Result<()> {
    let records = load_records(store)?;
    let ladder = ladder_for(cli, &records);
    let mut curves = Vec::new();
    for key in configs_in(&records) {
        let rs = of_config(&records, &key);
        match BdMethod::from(cli.method) {
            BdMethod::Classic => {
                let (cs, failed) = clip_curves(&rs, metric);
                for (clip, e) in failed {
                    log::warn!("{key}/{clip}: {e}");
                }
                curves.extend(cs.into_iter().map(|mut c| {
                    c.id = format!("{key}/{}", c.id);
                    c
                }));
            }
            BdMethod::Smart => match aggregate_curve(key.to_string(), &rs, &ladder, metric, Aggregation::HarmonicMean) {
                Ok(c) => curves.push(c),
                Err(e) => log::warn!("{key}: {e}"),
            },
        }
    }
    write_curves_csv(&curves, sink(cli.out.as_deref())?)?;
    Ok(())
}

fn cmd_bdrate(cli: &Cli, store: &ResultsStore, anchor: &str, test: &str, metric: MetricKind) -> Result<()> {
    let (ka, kt) = (parse_config(anchor)?, parse_config(test)?);
    let records = load_records(store)?;
    let (ra, rt) = (of_config(&records, &ka), of_config(&records, &kt));
    for (k, rs) in [(&ka, &ra), (&kt, &rt)] {
        if rs.is_empty() {
            bail!("no records for {k} in {}", store.path().display());
        }
    }
    let result = match BdMethod::from(cli.method) {
        BdMethod::Classic => classic_bd_rate(&clip_curves(&ra, metric).0, &clip_curves(&rt, metric).0)?,
        BdMethod::Smart => {
            let ladder = ladder_for(cli, &records);
            smart_bd_rate(&ra, &rt, &ladder, metric, Aggregation::HarmonicMean)?
        }
    };
    eprintln!("{}", result.method_note);
    let row = BdRow {
        anchor: ka.to_string(),
        test: kt.to_string(),
        metric,
        result,
    };
    write_results_csv(&[row], sink(cli.out.as_deref())?)?;
    Ok(())
}

fn cmd_grid(cli: &Cli, store: &ResultsStore, configs: &[String], metric: MetricKind) -> Result<()> {
    let records = load_records(store)?;
    let keys = if configs.is_empty() {
        configs_in(&records)
    } else {
        configs.iter().map(|c| parse_config(c)).collect::<Result<Vec<_>>>()?
    };
    if keys.is_empty() {
        bail!("no configurations to compare");
    }
    let ladder = ladder_for(cli, &records);
    let spec = ScenarioSpec::s1();
    let summaries = summaries_for(&keys, &summarize(&records, &spec));
    let grids = vec![
        bd_grid(&keys, &records, cli.method.into(), metric, &ladder),
        time_grid(&summaries),
    ];
    match &cli.out {
        Some(dir) => {
            for a in emit_report(dir, &[], &grids, &[], &[])? {
                println!("{}", a.path.display());
            }
        }
        None => {
            let mut out = io::stdout().lock();
            for g in &grids {
                writeln!(out, "# {} ({})", g.name(), g.unit())?;
                g.write_csv(&mut out)?;
            }
        }
    }
    Ok(())
}

/// Summaries in `keys` order; configurations without records get an empty
/// summary so grid axes line up.
fn summaries_for(keys: &[ConfigKey], all: &[ConfigSummary]) -> Vec<ConfigSummary> {
    keys.iter()
        .map(|k| {
            all.iter().find(|s| &s.key == k).cloned().unwrap_or(ConfigSummary {
                key: k.clone(),
                coverage_all: 0,
                total_all: 0,
                coverage_checkpoint: 0,
                total_checkpoint: 0,
                overshoot_count: 0,
                total_hours: None,
            })
        })
        .collect()
}

fn specs(cli: &Cli, args: &ScenarioArgs) -> Result<Vec<ScenarioSpec>> {
    let ids = if args.scenario.eq_ignore_ascii_case("all") {
        vec![ScenarioId::S1, ScenarioId::S2, ScenarioId::S3]
    } else {
        args.scenario
            .split(',')
            .map(|s| s.parse::<ScenarioId>())
            .collect::<Result<Vec<_>, _>>()?
    };
    ids.iter()
        .map(|id| {
            let mut spec = ScenarioSpec::standard(id)
                .ok_or_else(|| usage(format!("unknown scenario {id}; use S1, S2, S3 or all")))?;
            if let Some(t) = cli.threshold {
                spec.vmaf_threshold = t;
            }
            if let Some(c) = args.checkpoint {
                spec.checkpoint_kbps = c;
            }
            if let Some(o) = args.overshoot {
                spec.overshoot_threshold = o;
            }
            if let (Some(b), true) = (cli.budget_hours, spec.objective.budgeted()) {
                spec.time_budget_hours = Some(b);
            }
            if let (Some(s), Objective::FastestWithinSlack { .. }) = (args.slack, spec.objective) {
                spec.objective = Objective::FastestWithinSlack { slack_points: s };
            }
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

fn load_summaries(store: &ResultsStore, args: &ScenarioArgs, spec: &ScenarioSpec) -> Result<(Vec<ConfigSummary>, Vec<MetricRecord>)> {
    let records = match &args.summaries {
        Some(_) if !store.path().exists() => Vec::new(),
        _ => load_records(store)?,
    };
    let summaries = match &args.summaries {
        Some(p) => read_summaries_csv(File::open(p).with_context(|| format!("cannot open {}", p.display()))?)?,
        None => summarize(&records, spec),
    };
    if summaries.is_empty() {
        bail!("no results to summarize");
    }
    Ok((summaries, records))
}

fn print_report(out: &mut impl Write, report: &ScenarioReport) -> io::Result<()> {
    writeln!(out, "{}", report.spec.id)?;
    for sel in &report.selections {
        match &sel.choice {
            Choice::Selected(s) => writeln!(out, "  {}: {} {}-pass", sel.family, s.key.preset, s.key.passes)?,
            Choice::Infeasible(_) => writeln!(out, "  {}: infeasible", sel.family)?,
        }
        writeln!(out, "    {}", sel.rationale)?;
    }
    Ok(())
}

fn run_scenarios(store: &ResultsStore, cli: &Cli, args: &ScenarioArgs) -> Result<(Vec<ScenarioReport>, Vec<ConfigSummary>, Vec<MetricRecord>)> {
    let specs = specs(cli, args)?;
    let (summaries, records) = load_summaries(store, args, &specs[0])?;
    let reports = specs
        .iter()
        .map(|s| select_presets(&summaries, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((reports, summaries, records))
}

fn cmd_scenario(cli: &Cli, store: &ResultsStore, args: &ScenarioArgs) -> Result<()> {
    let (reports, _, _) = run_scenarios(store, cli, args)?;
    let mut out = sink(cli.out.as_deref())?;
    for r in &reports {
        print_report(&mut out, r)?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_report(cli: &Cli, store: &ResultsStore, args: &ScenarioArgs, metric: MetricKind) -> Result<()> {
    let (reports, summaries, records) = run_scenarios(store, cli, args)?;
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("rdgauge-report"));
    let ladder = ladder_for(cli, &records);
    let selected: Vec<ConfigKey> = reports
        .iter()
        .flat_map(|r| r.selected_keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut grids = Vec::new();
    let mut curves = Vec::new();
    if !records.is_empty() {
        curves = reports
            .iter()
            .map(|r| scenario_curves(r, &records, &ladder, metric))
            .collect();
        grids.push(bd_grid(&selected, &records, cli.method.into(), metric, &ladder));
    }
    if !selected.is_empty() {
        grids.push(time_grid(&summaries_for(&selected, &summaries)));
    }
    let manifest = emit_report(&dir, &reports, &grids, &curves, &summaries)?;
    for a in &manifest {
        println!("{}", a.path.display());
    }
    Ok(())
}
