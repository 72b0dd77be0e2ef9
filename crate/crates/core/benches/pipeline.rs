//! Parallel vs sequential benchmarks for the batch-heavy pipeline stages:
//! rollout collection, corpus grading, observation annotation, and policy
//! evaluation.
//!
//! Each group sweeps the `parallelism` knob over {1, 4, 8}; level 1 is the
//! in-process sequential path. Building with `--no-default-features`
//! removes rayon entirely, so every level measures the sequential
//! fallback — the honest baseline.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use webstar_core::annotate::{annotate, AnnotationStyle};
use webstar_core::exec;
use webstar_core::filter::{export_sft, SftExportOptions};
use webstar_core::grading::{grade_trajectory, GradeOptions};
use webstar_core::policy::{evaluate, train, EvalConfig};
use webstar_core::retry::RetryPolicy;
use webstar_core::sim::{
    collect_rollouts, generate_site, render, GenParams, OracleGraderBackend, SimState, SiteBundle,
    TeacherConfig,
};
use webstar_core::trajectory::Trajectory;

const PARALLELISM_LEVELS: [usize; 3] = [1, 4, 8];

fn bench_bundle() -> SiteBundle {
    generate_site(7, &GenParams { pages: 48, depth: 3, tasks: 24, ..Default::default() })
}

fn raw_corpus(bundle: &SiteBundle) -> Vec<Trajectory> {
    let cfg = TeacherConfig::new(0.4, 0.02, 11);
    collect_rollouts(&bundle.site, &bundle.tasks, &cfg, 16, 60, 8)
}

fn graded_corpus(bundle: &SiteBundle, trajs: &[Trajectory]) -> Vec<Trajectory> {
    let backend = OracleGraderBackend::new(bundle);
    let opts = GradeOptions { parallelism: 1, retry: RetryPolicy::immediate(), ..Default::default() };
    trajs
        .iter()
        .map(|t| grade_trajectory(t, &backend, &opts).unwrap().trajectory)
        .collect()
}

fn bench_collect(c: &mut Criterion) {
    let bundle = bench_bundle();
    let cfg = TeacherConfig::new(0.4, 0.02, 11);
    let mut group = c.benchmark_group("collect_rollouts");
    for parallelism in PARALLELISM_LEVELS {
        group.bench_with_input(BenchmarkId::from_parameter(parallelism), &parallelism, |b, &p| {
            b.iter(|| collect_rollouts(&bundle.site, &bundle.tasks, &cfg, 16, 60, p));
        });
    }
    group.finish();
}

fn bench_grade(c: &mut Criterion) {
    let bundle = bench_bundle();
    let trajs = raw_corpus(&bundle);
    let backend = OracleGraderBackend::new(&bundle);
    let mut group = c.benchmark_group("grade_corpus");
    for parallelism in PARALLELISM_LEVELS {
        group.bench_with_input(BenchmarkId::from_parameter(parallelism), &parallelism, |b, &p| {
            // Corpus-level fan-out: one worker grades a whole trajectory.
            let opts = GradeOptions { parallelism: 1, retry: RetryPolicy::immediate(), ..Default::default() };
            b.iter(|| {
                exec::map_indexed(&trajs, p, |_, t| {
                    grade_trajectory(t, &backend, &opts).unwrap().failed_steps.len()
                })
                .into_iter()
                .sum::<usize>()
            });
        });
    }
    group.finish();
}

fn bench_annotate(c: &mut Criterion) {
    let bundle = bench_bundle();
    let trajs = raw_corpus(&bundle);
    // One observation state + action per item, 48 items.
    let jobs: Vec<(SimState, webstar_core::action::Action)> = trajs
        .iter()
        .flat_map(|t| t.steps.iter())
        .take(48)
        .map(|s| (SimState::decode(s.observation.sim_id().unwrap()).unwrap(), s.action.clone()))
        .collect();
    let style = AnnotationStyle::default();
    let mut group = c.benchmark_group("render_annotate_batch");
    group.sample_size(10);
    for parallelism in PARALLELISM_LEVELS {
        group.bench_with_input(BenchmarkId::from_parameter(parallelism), &parallelism, |b, &p| {
            b.iter(|| {
                exec::map_indexed(&jobs, p, |_, (state, action)| {
                    let img = render(&bundle.site, state).unwrap();
                    annotate(&img, action, &style).unwrap().width()
                })
                .into_iter()
                .sum::<u32>()
            });
        });
    }
    group.finish();
}

fn bench_evaluate(c: &mut Criterion) {
    let bundle = bench_bundle();
    let trajs = raw_corpus(&bundle);
    let graded = graded_corpus(&bundle, &trajs);
    let kept: Vec<Trajectory> = graded.into_iter().filter(|t| t.success == Some(true)).collect();
    let export = export_sft(&kept, &SftExportOptions::default()).unwrap();
    let policy = train(&bundle.site, &export.records, true).unwrap();
    let seeds = [1u64, 2, 3, 4];
    let mut group = c.benchmark_group("evaluate_pass_k");
    for parallelism in PARALLELISM_LEVELS {
        group.bench_with_input(BenchmarkId::from_parameter(parallelism), &parallelism, |b, &p| {
            let cfg = EvalConfig { parallelism: p, ..Default::default() };
            b.iter(|| evaluate(&policy, &bundle.site, &bundle.tasks, &seeds, &cfg).pass_at_1);
        });
    }
    group.finish();
}

criterion_group!(benches, bench_collect, bench_grade, bench_annotate, bench_evaluate);
criterion_main!(benches);
