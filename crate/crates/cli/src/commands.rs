//! Subcommand implementations. Every command reads its documented inputs,
//! writes its outputs plus a `<output>.manifest.json` sidecar, and never
//! mutates an input file.

use std::path::{Path, PathBuf};

use webstar_core::annotate::{self, AnnotationStyle};
use webstar_core::filter::{
    self, cutoff_sweep, export_reward_dataset, export_sft, filter_trajectories, score_stats,
    ExportMode, FilterError, SftExportOptions,
};
use webstar_core::grading::remote::{PromptGraderBackend, RemoteChatClient, RemoteConfig};
use webstar_core::grading::{
    agreement_report, consistency_audit, grade_trajectory, AgreementReport, ConsistencyStats,
    GradeOptions, GradeRequest, GraderBackend, GraderError, ScriptedBackend,
};
use webstar_core::manifest::{manifest_path, RunManifest};
use webstar_core::policy::{self, evaluate, train, EvalConfig, EvalReport};
use webstar_core::retry::RetryPolicy;
use webstar_core::sim::{
    collect_rollouts, generate_site, GenParams, OracleGraderBackend, OracleJudge, SimState,
    SiteBundle, TeacherConfig, SITE_SCHEMA,
};
use webstar_core::thought::{
    augment_trajectory, AugmentError, AugmentOptions, PromptThoughtBackend, TemplateThoughtBackend,
    ThoughtBackend,
};
use webstar_core::trajectory::{read_jsonl, write_jsonl, JsonlError, ObservationRef, Trajectory};
use webstar_core::action::{Point, Viewport};

use crate::config::{Settings, SettingsBuilder};
use crate::{Cli, Command};

pub struct CmdError {
    pub code: u8,
    pub message: String,
}

impl CmdError {
    fn usage(message: impl Into<String>) -> Self {
        CmdError { code: 1, message: message.into() }
    }
    fn schema(message: impl Into<String>) -> Self {
        CmdError { code: 2, message: message.into() }
    }
    fn backend(message: impl Into<String>) -> Self {
        CmdError { code: 3, message: message.into() }
    }
    fn partial(message: impl Into<String>) -> Self {
        CmdError { code: 4, message: message.into() }
    }
}

impl From<JsonlError> for CmdError {
    fn from(err: JsonlError) -> Self {
        CmdError::schema(err.to_string())
    }
}

impl From<FilterError> for CmdError {
    fn from(err: FilterError) -> Self {
        CmdError::schema(err.to_string())
    }
}

impl From<std::io::Error> for CmdError {
    fn from(err: std::io::Error) -> Self {
        CmdError::schema(err.to_string())
    }
}

pub fn run(cli: Cli) -> Result<(), CmdError> {
    let builder = SettingsBuilder::load(cli.config.as_deref()).map_err(CmdError::usage)?;
    let parallelism_flag = cli.parallelism;

    match cli.command {
        Command::GenSite { seed, pages, depth, tasks, scroll_pages, out } => {
            let settings = builder.resolve(seed.seed, parallelism_flag, None, None, None, None);
            gen_site(&settings, pages, depth, tasks, scroll_pages, &out)
        }
        Command::Collect { site, tasks, rollouts, noise, irreversible, max_steps, seed, out } => {
            let settings = builder.resolve(seed.seed, parallelism_flag, None, None, noise, irreversible);
            collect(&settings, &site, tasks, rollouts, max_steps, &out)
        }
        Command::Grade { input, backend, site, window, images, out } => {
            let settings = builder.resolve(None, parallelism_flag, window, None, None, None);
            grade(&settings, &input, &backend, site.as_deref(), images.as_deref(), &out)
        }
        Command::Augment { input, backend, site, window, images, force, out } => {
            let settings = builder.resolve(None, parallelism_flag, window, None, None, None);
            augment(&settings, &input, &backend, site.as_deref(), images.as_deref(), force, &out)
        }
        Command::Filter { input, judge, site, normalize, out, dropped } => {
            let settings = builder.resolve(None, parallelism_flag, None, None, None, None);
            filter_cmd(&settings, &input, &judge, site.as_deref(), normalize, &out, dropped.as_deref())
        }
        Command::ExportSft { input, window, cutoff, mode, drop_masked, out } => {
            let settings = builder.resolve(None, parallelism_flag, window, cutoff, None, None);
            export_sft_cmd(&settings, &input, &mode, drop_masked, &out)
        }
        Command::ExportReward { input, n, cutoff, seed, out } => {
            let settings = builder.resolve(seed.seed, parallelism_flag, None, cutoff, None, None);
            export_reward_cmd(&settings, &input, n, &out)
        }
        Command::Stats { input, out } => stats_cmd(&input, &out),
        Command::SweepCutoff { input, site, cutoffs, budget, window, k, seed, out_dir } => {
            let settings = builder.resolve(seed.seed, parallelism_flag, window, None, None, None);
            sweep_cutoff_cmd(&settings, &input, &site, &cutoffs, budget, k, &out_dir)
        }
        Command::TrainToy { records, site, honor_mask, out } => {
            train_toy_cmd(&records, &site, honor_mask, &out)
        }
        Command::Eval { policy, site, k, max_steps, temperature, seed, out } => {
            let settings = builder.resolve(seed.seed, parallelism_flag, None, None, None, None);
            eval_cmd(&settings, &policy, &site, k, max_steps, temperature, &out)
        }
        Command::AuditConsistency { input, backend, site, scores, repeats, steps, window, out } => {
            let settings = builder.resolve(None, parallelism_flag, window, None, None, None);
            audit_cmd(&settings, &input, &backend, site.as_deref(), &scores, repeats, steps, &out)
        }
        Command::Agreement { grades, reference, counts, cutoff, out } => {
            let settings = builder.resolve(None, parallelism_flag, None, cutoff, None, None);
            agreement_cmd(&settings, grades.as_deref(), reference.as_deref(), counts, &out)
        }
    }
}

fn load_bundle(path: &Path) -> Result<SiteBundle, CmdError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CmdError::schema(format!("cannot read site {}: {e}", path.display())))?;
    let bundle: SiteBundle = serde_json::from_str(&text)
        .map_err(|e| CmdError::schema(format!("bad site bundle {}: {e}", path.display())))?;
    if bundle.schema_version != SITE_SCHEMA {
        return Err(CmdError::schema(format!(
            "site schema mismatch in {}: expected {SITE_SCHEMA}, found {}",
            path.display(),
            bundle.schema_version
        )));
    }
    bundle.site.validate().map_err(|e| CmdError::schema(e.to_string()))?;
    Ok(bundle)
}

fn write_json(value: &impl serde::Serialize, path: &Path) -> Result<(), CmdError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CmdError::schema(format!("serialize {}: {e}", path.display())))?;
    std::fs::write(path, json + "\n")
        .map_err(|e| CmdError::schema(format!("write {}: {e}", path.display())))?;
    Ok(())
}

fn finish_manifest(mut manifest: RunManifest, outputs: &[&Path], out: &Path) -> Result<(), CmdError> {
    for path in outputs {
        manifest.stamp_output(path)?;
    }
    manifest.write(manifest_path(out))?;
    Ok(())
}

fn gen_site(
    settings: &Settings,
    pages: usize,
    depth: usize,
    tasks: usize,
    scroll_pages: u32,
    out: &Path,
) -> Result<(), CmdError> {
    let params = GenParams { pages, depth, tasks, scroll_pages, viewport: Viewport::new(1280, 720) };
    let bundle = generate_site(settings.seed, &params);
    write_json(&bundle, out)?;

    let mut manifest = RunManifest::new("gen-site");
    manifest
        .param("pages", pages)
        .param("depth", depth)
        .param("tasks", tasks)
        .param("scroll_pages", scroll_pages)
        .seed("seed", settings.seed)
        .count("pages", bundle.site.pages.len() as u64)
        .count("tasks", bundle.tasks.len() as u64);
    finish_manifest(manifest, &[out], out)?;
    println!("gen-site: {} pages, {} tasks -> {}", bundle.site.pages.len(), bundle.tasks.len(), out.display());
    Ok(())
}

fn collect(
    settings: &Settings,
    site: &Path,
    tasks: Option<usize>,
    rollouts: usize,
    max_steps: usize,
    out: &Path,
) -> Result<(), CmdError> {
    let bundle = load_bundle(site)?;
    let take = tasks.unwrap_or(bundle.tasks.len());
    if take > bundle.tasks.len() {
        return Err(CmdError::schema(format!(
            "requested {take} tasks but the site bundle has only {}",
            bundle.tasks.len()
        )));
    }
    let selected = &bundle.tasks[..take];
    let cfg = TeacherConfig::new(settings.noise, settings.irreversible, settings.seed);
    let trajs = collect_rollouts(&bundle.site, selected, &cfg, rollouts, max_steps, settings.parallelism);
    let successful = trajs.iter().filter(|t| t.success == Some(true)).count();
    write_jsonl(&trajs, out)?;

    let mut manifest = RunManifest::new("collect");
    manifest
        .param("tasks", take)
        .param("rollouts", rollouts)
        .param("noise", settings.noise)
        .param("irreversible", settings.irreversible)
        .param("max_steps", max_steps)
        .seed("seed", settings.seed)
        .count("trajectories", trajs.len() as u64)
        .count("successful", successful as u64)
        .count("steps", trajs.iter().map(|t| t.steps.len() as u64).sum());
    manifest.stamp_input(site)?;
    finish_manifest(manifest, &[out], out)?;
    println!("collect: {} trajectories ({successful} teacher-successful) -> {}", trajs.len(), out.display());
    Ok(())
}

fn remote_grader(settings: &Settings) -> Result<PromptGraderBackend<RemoteChatClient>, CmdError> {
    let url = settings.backend_url.clone().ok_or_else(|| {
        CmdError::usage("remote backend needs backend.url in the config or WEBSTAR_BACKEND_URL")
    })?;
    let mut config = RemoteConfig::new(url, settings.backend_model.clone());
    config.api_key = std::env::var(&settings.api_key_env).ok().filter(|k| !k.is_empty());
    config.timeout_secs = settings.timeout_secs;
    let client = RemoteChatClient::new(config).map_err(|e| CmdError::backend(e.to_string()))?;
    Ok(PromptGraderBackend::new(client))
}

fn remote_thought(settings: &Settings) -> Result<PromptThoughtBackend<RemoteChatClient>, CmdError> {
    let url = settings.backend_url.clone().ok_or_else(|| {
        CmdError::usage("remote backend needs backend.url in the config or WEBSTAR_BACKEND_URL")
    })?;
    let mut config = RemoteConfig::new(url, settings.backend_model.clone());
    config.api_key = std::env::var(&settings.api_key_env).ok().filter(|k| !k.is_empty());
    config.timeout_secs = settings.timeout_secs;
    let client = RemoteChatClient::new(config).map_err(|e| CmdError::backend(e.to_string()))?;
    Ok(PromptThoughtBackend::new(client))
}

/// Render (sim) or load (ingested) each observation, draw the action
/// overlay and zoom crop, and point the step at the sidecars. Needed only
/// for prompt-based backends.
fn materialize_images(
    bundle: Option<&SiteBundle>,
    traj: &Trajectory,
    dir: &Path,
) -> Result<Trajectory, CmdError> {
    std::fs::create_dir_all(dir)?;
    let style = AnnotationStyle::default();
    let mut out = traj.clone();
    for step in &mut out.steps {
        let base = match &step.observation {
            ObservationRef::Sim { id } => {
                let bundle = bundle.ok_or_else(|| {
                    CmdError::usage("sim observations need --site to render images")
                })?;
                let state = SimState::decode(id).map_err(|e| CmdError::schema(e.to_string()))?;
                webstar_core::sim::render(&bundle.site, &state)
                    .map_err(|e| CmdError::schema(e.to_string()))?
            }
            ObservationRef::Image { path } => {
                annotate::load_png(path).map_err(|e| CmdError::schema(e.to_string()))?
            }
        };
        let base_path = dir.join(format!("{}_s{:03}.png", traj.id, step.index));
        annotate::save_png(&base, &base_path).map_err(|e| CmdError::schema(e.to_string()))?;
        let annotated = annotate::annotate(&base, &step.action, &style)
            .map_err(|e| CmdError::schema(format!("{}: {e}", traj.id)))?;
        let annotated_path = annotate::annotated_path(&base_path);
        annotate::save_png(&annotated, &annotated_path).map_err(|e| CmdError::schema(e.to_string()))?;
        let center = step
            .action
            .points()
            .first()
            .map(|(_, p)| *p)
            .unwrap_or_else(|| Point::new(base.width() / 2, base.height() / 2));
        let zoom = annotate::zoom_crop(&base, center, 2.0, 256)
            .map_err(|e| CmdError::schema(format!("{}: {e}", traj.id)))?;
        annotate::save_png(&zoom, annotate::zoom_path(&base_path))
            .map_err(|e| CmdError::schema(e.to_string()))?;
        step.annotated_observation = Some(annotated_path.display().to_string());
    }
    Ok(out)
}

#[derive(serde::Serialize)]
struct FailureRecord {
    trajectory_id: String,
    step_index: usize,
    error: String,
}

fn grade(
    settings: &Settings,
    input: &Path,
    backend_name: &str,
    site: Option<&Path>,
    images: Option<&Path>,
    out: &Path,
) -> Result<(), CmdError> {
    let trajs = read_jsonl(input)?;
    let bundle = site.map(load_bundle).transpose()?;

    let oracle;
    let remote;
    let backend: &dyn GraderBackend = match backend_name {
        "oracle" => {
            let bundle = bundle
                .as_ref()
                .ok_or_else(|| CmdError::usage("--backend oracle needs --site"))?;
            oracle = OracleGraderBackend::new(bundle);
            &oracle
        }
        "remote" => {
            remote = remote_grader(settings)?;
            &remote
        }
        other => return Err(CmdError::usage(format!("unknown grader backend `{other}`"))),
    };

    let opts = GradeOptions {
        window: settings.window,
        parallelism: settings.parallelism,
        retry: RetryPolicy::default(),
    };
    let mut graded = Vec::with_capacity(trajs.len());
    let mut failures = Vec::new();
    for traj in &trajs {
        let prepared = match images {
            Some(dir) if backend_name == "remote" => materialize_images(bundle.as_ref(), traj, dir)?,
            _ => traj.clone(),
        };
        match grade_trajectory(&prepared, backend, &opts) {
            Ok(report) => {
                for failure in &report.failed_steps {
                    failures.push(FailureRecord {
                        trajectory_id: traj.id.clone(),
                        step_index: failure.step_index,
                        error: failure.error.clone(),
                    });
                }
                graded.push(report.trajectory);
            }
            Err(GraderError::BackendUnavailable { failed }) => {
                return Err(CmdError::backend(format!(
                    "backend unavailable while grading {} ({failed} transport failures)",
                    traj.id
                )))
            }
            Err(err) => return Err(CmdError::backend(err.to_string())),
        }
    }
    write_jsonl(&graded, out)?;

    let graded_steps: u64 = graded
        .iter()
        .map(|t| t.steps.iter().filter(|s| s.grade.is_some()).count() as u64)
        .sum();
    let mut manifest = RunManifest::new("grade");
    manifest
        .param("backend", backend.id())
        .param("window", settings.window)
        .count("trajectories", graded.len() as u64)
        .count("graded_steps", graded_steps)
        .count("failed_steps", failures.len() as u64);
    manifest.stamp_input(input)?;
    if let Some(site) = site {
        manifest.stamp_input(site)?;
    }
    finish_manifest(manifest, &[out], out)?;

    if failures.is_empty() {
        println!("grade: {graded_steps} steps graded -> {}", out.display());
        Ok(())
    } else {
        let report_path = out.with_extension("failures.json");
        write_json(&failures, &report_path)?;
        println!("grade: {graded_steps} steps graded, {} failed -> {}", failures.len(), out.display());
        Err(CmdError::partial(format!(
            "{} step(s) failed to grade; report at {}",
            failures.len(),
            report_path.display()
        )))
    }
}

fn augment(
    settings: &Settings,
    input: &Path,
    backend_name: &str,
    site: Option<&Path>,
    images: Option<&Path>,
    force: bool,
    out: &Path,
) -> Result<(), CmdError> {
    let trajs = read_jsonl(input)?;
    let bundle = site.map(load_bundle).transpose()?;

    let template;
    let remote;
    let backend: &dyn ThoughtBackend = match backend_name {
        "template" => {
            template = TemplateThoughtBackend;
            &template
        }
        "remote" => {
            remote = remote_thought(settings)?;
            &remote
        }
        other => return Err(CmdError::usage(format!("unknown thought backend `{other}`"))),
    };

    let opts = AugmentOptions {
        window: settings.window,
        parallelism: settings.parallelism,
        force,
        retry: RetryPolicy::default(),
    };
    let mut augmented = Vec::with_capacity(trajs.len());
    let mut failures = Vec::new();
    let mut skipped = 0u64;
    for traj in &trajs {
        let prepared = match images {
            Some(dir) if backend_name == "remote" => materialize_images(bundle.as_ref(), traj, dir)?,
            _ => traj.clone(),
        };
        match augment_trajectory(&prepared, backend, &opts) {
            Ok(report) => {
                skipped += report.skipped_steps.len() as u64;
                for failure in &report.failed_steps {
                    failures.push(FailureRecord {
                        trajectory_id: traj.id.clone(),
                        step_index: failure.step_index,
                        error: failure.error.clone(),
                    });
                }
                augmented.push(report.trajectory);
            }
            Err(AugmentError::BackendUnavailable { failed }) => {
                return Err(CmdError::backend(format!(
                    "backend unavailable while augmenting {} ({failed} transport failures)",
                    traj.id
                )))
            }
            Err(err) => return Err(CmdError::backend(err.to_string())),
        }
    }
    write_jsonl(&augmented, out)?;

    let with_thoughts: u64 = augmented
        .iter()
        .map(|t| t.steps.iter().filter(|s| s.thought.is_some()).count() as u64)
        .sum();
    let mut manifest = RunManifest::new("augment");
    manifest
        .param("backend", backend.id())
        .param("window", settings.window)
        .param("force", force)
        .count("trajectories", augmented.len() as u64)
        .count("steps_with_thoughts", with_thoughts)
        .count("skipped_existing", skipped)
        .count("failed_steps", failures.len() as u64);
    manifest.stamp_input(input)?;
    finish_manifest(manifest, &[out], out)?;

    if failures.is_empty() {
        println!("augment: {with_thoughts} steps bear thoughts ({skipped} skipped) -> {}", out.display());
        Ok(())
    } else {
        let report_path = out.with_extension("failures.json");
        write_json(&failures, &report_path)?;
        Err(CmdError::partial(format!(
            "{} step(s) failed to augment; report at {}",
            failures.len(),
            report_path.display()
        )))
    }
}

fn filter_cmd(
    settings: &Settings,
    input: &Path,
    judge_name: &str,
    site: Option<&Path>,
    normalize: bool,
    out: &Path,
    dropped_out: Option<&Path>,
) -> Result<(), CmdError> {
    let trajs = read_jsonl(input)?;
    let judge = match judge_name {
        "oracle" => {
            let bundle = site
                .map(load_bundle)
                .transpose()?
                .ok_or_else(|| CmdError::usage("--judge oracle needs --site"))?;
            OracleJudge::new(&bundle).with_case_fold(normalize)
        }
        other => return Err(CmdError::usage(format!("unknown judge `{other}`"))),
    };

    let total = trajs.len();
    let outcome = filter_trajectories(trajs, &judge, settings.parallelism);
    write_jsonl(&outcome.kept, out)?;
    if let Some(path) = dropped_out {
        write_jsonl(&outcome.dropped, path)?;
    }

    let mut manifest = RunManifest::new("filter");
    manifest
        .param("judge", "oracle")
        .param("normalize", normalize)
        .count("in", total as u64)
        .count("kept", outcome.kept.len() as u64)
        .count("dropped", outcome.dropped.len() as u64)
        .count("judge_errors", outcome.errors.len() as u64);
    manifest.stamp_input(input)?;
    if let Some(site) = site {
        manifest.stamp_input(site)?;
    }
    let mut outputs: Vec<&Path> = vec![out];
    if let Some(path) = dropped_out {
        outputs.push(path);
    }
    finish_manifest(manifest, &outputs, out)?;
    println!(
        "filter: kept {} / dropped {} of {total} -> {}",
        outcome.kept.len(),
        outcome.dropped.len(),
        out.display()
    );
    if outcome.errors.is_empty() {
        Ok(())
    } else {
        let report_path = out.with_extension("failures.json");
        let failures: Vec<FailureRecord> = outcome
            .errors
            .iter()
            .map(|(id, error)| FailureRecord { trajectory_id: id.clone(), step_index: 0, error: error.clone() })
            .collect();
        write_json(&failures, &report_path)?;
        Err(CmdError::partial(format!(
            "{} trajectory judgements failed; report at {}",
            outcome.errors.len(),
            report_path.display()
        )))
    }
}

fn export_sft_cmd(
    settings: &Settings,
    input: &Path,
    mode: &str,
    drop_masked: bool,
    out: &Path,
) -> Result<(), CmdError> {
    let trajs = read_jsonl(input)?;
    let mode = match mode {
        "all_steps" => ExportMode::AllSteps,
        "correct_steps" => ExportMode::CorrectSteps,
        other => return Err(CmdError::usage(format!("unknown mode `{other}`"))),
    };
    let opts = SftExportOptions { window: settings.window, cutoff: settings.cutoff, mode, drop_masked };
    let export = export_sft(&trajs, &opts)?;
    filter::write_records_jsonl(&export.records, out)?;

    let mut manifest = RunManifest::new("export-sft");
    manifest
        .param("mode", mode)
        .param("window", settings.window)
        .param("cutoff", settings.cutoff)
        .param("drop_masked", drop_masked)
        .count("records", export.manifest.records as u64)
        .count("loss_records", export.manifest.loss_records as u64)
        .count("masked_records", export.manifest.masked_records as u64)
        .count("trajectories_exported", export.manifest.trajectories_exported as u64)
        .count("skipped_unsuccessful", export.manifest.skipped_unsuccessful as u64);
    manifest.stamp_input(input)?;
    finish_manifest(manifest, &[out], out)?;
    println!(
        "export-sft[{mode:?}]: {} records, {} loss-bearing -> {}",
        export.manifest.records,
        export.manifest.loss_records,
        out.display()
    );
    Ok(())
}

fn export_reward_cmd(settings: &Settings, input: &Path, n: usize, out: &Path) -> Result<(), CmdError> {
    let trajs = read_jsonl(input)?;
    let export = export_reward_dataset(&trajs, n, settings.cutoff, settings.seed)?;
    filter::write_records_jsonl(&export.records, out)?;

    let mut manifest = RunManifest::new("export-reward");
    manifest
        .param("n", n)
        .param("cutoff", settings.cutoff)
        .param("dedup", "none")
        .seed("seed", settings.seed)
        .count("positive", export.manifest.positive_taken as u64)
        .count("negative", export.manifest.negative_taken as u64)
        .count("positive_available", export.manifest.positive_available as u64)
        .count("negative_available", export.manifest.negative_available as u64);
    manifest.stamp_input(input)?;
    finish_manifest(manifest, &[out], out)?;
    println!(
        "export-reward: {} records ({}/{} balanced) -> {}",
        export.records.len(),
        export.manifest.positive_taken,
        export.manifest.negative_taken,
        out.display()
    );
    Ok(())
}

fn stats_cmd(input: &Path, out: &Path) -> Result<(), CmdError> {
    let trajs = read_jsonl(input)?;
    let stats = score_stats(&trajs);
    write_json(&stats, out)?;

    let mut manifest = RunManifest::new("stats");
    manifest.count("graded_steps", stats.total);
    manifest.stamp_input(input)?;
    finish_manifest(manifest, &[out], out)?;

    println!("score  count");
    for (score, count) in stats.histogram.iter().enumerate() {
        println!("{score:>5}  {count}");
    }
    println!("total graded steps: {}", stats.total);
    println!("retention at strict cutoff 5: {:.3}", stats.retention[5]);
    println!("mean per-trajectory correct fraction: {:.3}", stats.mean_correct_fraction);
    Ok(())
}

#[derive(serde::Serialize)]
struct SweepRow {
    cutoff: u8,
    total_records: usize,
    loss_bearing: usize,
    retention: f64,
    pass_at_1: f64,
    pass_at_k: f64,
}

fn sweep_cutoff_cmd(
    settings: &Settings,
    input: &Path,
    site: &Path,
    cutoffs: &[u8],
    budget: Option<usize>,
    k: usize,
    out_dir: &Path,
) -> Result<(), CmdError> {
    let trajs = read_jsonl(input)?;
    let bundle = load_bundle(site)?;
    std::fs::create_dir_all(out_dir)?;

    let entries = cutoff_sweep(&trajs, settings.window, cutoffs, budget, settings.seed)?;
    let eval_seeds: Vec<u64> = (0..k as u64).map(|j| settings.seed.wrapping_add(j)).collect();
    let mut rows = Vec::new();
    let mut dataset_paths = Vec::new();
    for entry in &entries {
        let dataset = out_dir.join(format!("cutoff-{}.sft.jsonl", entry.report.cutoff));
        filter::write_records_jsonl(&entry.records, &dataset)?;
        let policy = train(&bundle.site, &entry.records, true)
            .map_err(|e| CmdError::schema(e.to_string()))?;
        let cfg = EvalConfig { parallelism: settings.parallelism, ..Default::default() };
        let report = evaluate(&policy, &bundle.site, &bundle.tasks, &eval_seeds, &cfg);
        rows.push(SweepRow {
            cutoff: entry.report.cutoff,
            total_records: entry.report.total_records,
            loss_bearing: entry.report.loss_bearing,
            retention: entry.report.retention,
            pass_at_1: report.pass_at_1,
            pass_at_k: report.pass_at_k,
        });
        dataset_paths.push(dataset);
    }

    let table = sweep_table(&rows, k);
    print!("{table}");
    let table_path = out_dir.join("table.txt");
    std::fs::write(&table_path, &table)?;
    let json_path = out_dir.join("sweep.json");
    write_json(&rows, &json_path)?;

    let mut manifest = RunManifest::new("sweep-cutoff");
    manifest
        .param("cutoffs", cutoffs)
        .param("budget", budget)
        .param("window", settings.window)
        .param("k", k)
        .seed("seed", settings.seed);
    manifest.stamp_input(input)?;
    manifest.stamp_input(site)?;
    let mut outputs: Vec<&Path> = vec![&json_path, &table_path];
    outputs.extend(dataset_paths.iter().map(PathBuf::as_path));
    finish_manifest(manifest, &outputs, &json_path)?;
    Ok(())
}

fn sweep_table(rows: &[SweepRow], k: usize) -> String {
    let mut header = String::from("Cutoff");
    let mut retention = String::from("Retention");
    let mut values = String::from("WebSim");
    for row in rows {
        header.push_str(&format!(" | {:>11}", row.cutoff));
        retention.push_str(&format!(" | {:>11.3}", row.retention));
        values.push_str(&format!(" | {:>4.1} ({:.1})", row.pass_at_1 * 100.0, row.pass_at_k * 100.0));
    }
    format!("{header}\n{retention}\n{values}\nmetrics are Pass@1 (Pass@{k})\n")
}

fn train_toy_cmd(records: &Path, site: &Path, honor_mask: bool, out: &Path) -> Result<(), CmdError> {
    let bundle = load_bundle(site)?;
    let records_list = filter::read_sft_jsonl(records)?;
    let policy = train(&bundle.site, &records_list, honor_mask)
        .map_err(|e| CmdError::schema(e.to_string()))?;
    policy::save_policy(&policy, out).map_err(|e| CmdError::schema(e.to_string()))?;

    let mut manifest = RunManifest::new("train-toy");
    manifest
        .param("honor_mask", honor_mask)
        .count("records_in", records_list.len() as u64)
        .count("trained_records", policy.trained_records)
        .count("signatures", policy.table.len() as u64);
    manifest.stamp_input(records)?;
    manifest.stamp_input(site)?;
    finish_manifest(manifest, &[out], out)?;
    println!(
        "train-toy: {} records counted over {} signatures -> {}",
        policy.trained_records,
        policy.table.len(),
        out.display()
    );
    Ok(())
}

fn eval_cmd(
    settings: &Settings,
    policy_path: &Path,
    site: &Path,
    k: usize,
    max_steps: usize,
    temperature: f64,
    out: &Path,
) -> Result<(), CmdError> {
    let bundle = load_bundle(site)?;
    let policy = policy::load_policy(policy_path).map_err(|e| CmdError::schema(e.to_string()))?;
    let seeds: Vec<u64> = (0..k.max(1) as u64).map(|j| settings.seed.wrapping_add(j)).collect();
    let cfg = EvalConfig { max_steps, temperature, parallelism: settings.parallelism };
    let report: EvalReport = evaluate(&policy, &bundle.site, &bundle.tasks, &seeds, &cfg);
    write_json(&report, out)?;

    let mut manifest = RunManifest::new("eval");
    manifest
        .param("k", k)
        .param("max_steps", report.max_steps)
        .param("temperature", temperature)
        .seed("seed", settings.seed)
        .count("tasks", report.per_task.len() as u64);
    manifest.stamp_input(policy_path)?;
    manifest.stamp_input(site)?;
    finish_manifest(manifest, &[out], out)?;
    println!("{}", report.pass_line());
    Ok(())
}

#[derive(serde::Serialize)]
struct AuditOutput {
    backend: String,
    repeats: usize,
    steps: usize,
    mean_range: f64,
    median_std: f64,
    median_cv: f64,
    per_step: Vec<ConsistencyStats>,
}

#[allow(clippy::too_many_arguments)]
fn audit_cmd(
    settings: &Settings,
    input: &Path,
    backend_name: &str,
    site: Option<&Path>,
    scores: &[u8],
    repeats: usize,
    steps: usize,
    out: &Path,
) -> Result<(), CmdError> {
    let trajs = read_jsonl(input)?;
    let oracle;
    let scripted;
    let backend: &dyn GraderBackend = match backend_name {
        "oracle" => {
            let bundle = site
                .map(load_bundle)
                .transpose()?
                .ok_or_else(|| CmdError::usage("--backend oracle needs --site"))?;
            oracle = OracleGraderBackend::new(&bundle);
            &oracle
        }
        "scripted" => {
            if scores.is_empty() {
                return Err(CmdError::usage("--backend scripted needs --scores"));
            }
            if scores.iter().any(|&s| s > 10) {
                return Err(CmdError::usage("scripted scores must be within 0..=10"));
            }
            scripted = ScriptedBackend::new(scores.to_vec());
            &scripted
        }
        other => return Err(CmdError::usage(format!("unknown grader backend `{other}`"))),
    };

    let mut requests = Vec::new();
    'outer: for traj in &trajs {
        for n in 0..traj.steps.len() {
            if requests.len() >= steps {
                break 'outer;
            }
            requests.push(GradeRequest::from_trajectory(traj, n, settings.window).expect("in range"));
        }
    }
    if requests.is_empty() {
        return Err(CmdError::schema("no steps to audit"));
    }

    let mut per_step = Vec::new();
    for request in &requests {
        match consistency_audit(request, backend, repeats) {
            Ok(stats) => per_step.push(stats),
            Err(GraderError::InvalidRepeats(n)) => {
                return Err(CmdError::usage(format!("repeats must be >= 2, got {n}")))
            }
            Err(err) => return Err(CmdError::backend(err.to_string())),
        }
    }
    let mean_range = per_step.iter().map(|s| s.mean_range).sum::<f64>() / per_step.len() as f64;
    let median = |mut values: Vec<f64>| -> f64 {
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        let mid = values.len() / 2;
        if values.len() % 2 == 1 { values[mid] } else { (values[mid - 1] + values[mid]) / 2.0 }
    };
    let output = AuditOutput {
        backend: backend.id().to_string(),
        repeats,
        steps: per_step.len(),
        mean_range,
        median_std: median(per_step.iter().map(|s| s.std).collect()),
        median_cv: median(per_step.iter().map(|s| s.cv).collect()),
        per_step,
    };
    write_json(&output, out)?;

    let mut manifest = RunManifest::new("audit-consistency");
    manifest
        .param("backend", backend_name)
        .param("repeats", repeats)
        .param("steps", output.steps)
        .param("window", settings.window);
    manifest.stamp_input(input)?;
    finish_manifest(manifest, &[out], out)?;
    println!(
        "audit-consistency over {} step(s), {} repeats: mean range {:.2}, median std {:.2}, median cv {:.2}%",
        output.steps,
        repeats,
        output.mean_range,
        output.median_std,
        output.median_cv * 100.0
    );
    Ok(())
}

fn agreement_cmd(
    settings: &Settings,
    grades: Option<&Path>,
    reference: Option<&Path>,
    counts: Option<Vec<u64>>,
    out: &Path,
) -> Result<(), CmdError> {
    let cutoff = settings.cutoff;
    let (grade_list, reference_list) = if let Some(counts) = counts {
        let [tt, tf, ft, ff] = counts[..] else {
            return Err(CmdError::usage("--counts needs exactly tt,tf,ft,ff"));
        };
        let mut grade_list = Vec::new();
        let mut reference_list = Vec::new();
        let mut push = |n: u64, r: u8, g: u8| {
            for _ in 0..n {
                reference_list.push(r);
                grade_list.push(g);
            }
        };
        let high = cutoff.min(10);
        let low = cutoff.saturating_sub(1);
        push(tt, high, high);
        push(tf, high, low);
        push(ft, low, high);
        push(ff, low, low);
        (grade_list, reference_list)
    } else {
        let load_scores = |path: &Path| -> Result<Vec<u8>, CmdError> {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CmdError::schema(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CmdError::schema(format!("bad score list {}: {e}", path.display())))
        };
        let grades = grades.ok_or_else(|| CmdError::usage("need --grades/--reference or --counts"))?;
        let reference = reference.ok_or_else(|| CmdError::usage("need --reference with --grades"))?;
        (load_scores(grades)?, load_scores(reference)?)
    };

    let report: AgreementReport = match agreement_report(&grade_list, &reference_list, cutoff) {
        Ok(report) => report,
        Err(err) => return Err(CmdError::schema(err.to_string())),
    };
    write_json(&report, out)?;

    let mut manifest = RunManifest::new("agreement");
    manifest.param("cutoff", cutoff).count("pairs", report.total());
    finish_manifest(manifest, &[out], out)?;
    print!("{}", report.table());
    Ok(())
}
