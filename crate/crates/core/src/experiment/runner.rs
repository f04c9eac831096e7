//! The `run`, `compare`, `oracle` and `strip` operations.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;

use super::config::ExperimentConfig;
use super::output::{
    comparison_csv, dominance_csv, fmt_f64, summary_csv, trajectories_jsonl, OutputDir, RunManifest,
    TrajectoryStatusEntry,
};
use super::svg::{loglog_chart, Series};
use crate::error::{RedsError, Result};
use crate::eval::{aggregate_steps, compare_methods, direction_oracle, MethodSpec, OracleReport, StepAggregate, MIN_ORACLE_SAMPLES};
use crate::features::FeatureMap;
use crate::generators::{ImageBuffer, ImageShape};
use crate::geometry::local_geometry;
use crate::rng;
use crate::spectral::RedsStatus;
use crate::testbeds::Testbed;
use crate::traversal::{global_direction_for, reds_at, seed_points, traverse, traverse_seeds, Selector, Trajectory, TrajectoryStatus};

/// Runs `f` on a dedicated pool of `workers` threads (all cores when `None`).
/// Outputs do not depend on the worker count.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| RedsError::InvalidInput(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

struct Session {
    config: ExperimentConfig,
    testbed: Testbed,
    seeds: Vec<DVector<f64>>,
    out: OutputDir,
    started: Instant,
    command: String,
}

impl Session {
    fn open(config: &ExperimentConfig, out: &Path, command: &str) -> Result<Self> {
        config.validate()?;
        let testbed = config.testbed()?;
        let seeds = seed_points(testbed.latent_dim(), config.seeds.count, config.seeds.master_seed);
        Ok(Self {
            config: config.clone(),
            testbed,
            seeds,
            out: OutputDir::create(out)?,
            started: Instant::now(),
            command: command.to_string(),
        })
    }

    fn image_shape(&self) -> Result<ImageShape> {
        self.testbed.generator.image_shape().ok_or_else(|| {
            RedsError::InvalidConfig(format!("generator `{}` is not image-valued", self.testbed.generator.name()))
        })
    }

    fn finish(self, statuses: Vec<TrajectoryStatusEntry>) -> Result<RunManifest> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: self.command,
            config_name: self.config.name.clone(),
            config_sha256: self.config.sha256(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            statuses,
            files: self.out.files().to_vec(),
        };
        manifest.write_to(self.out.root())?;
        Ok(manifest)
    }
}

fn all_empty(trajectories: &[&Trajectory]) -> bool {
    !trajectories.is_empty() && trajectories.iter().all(|t| t.status == TrajectoryStatus::EmptyNullspace)
}

fn empty_nullspace_error() -> RedsError {
    RedsError::EmptySubspace(
        "the fixed features leave no feasible direction at any seed; lower beta_f on the fixed features".into(),
    )
}

/// Series for the log-log chart: x = mean fixed-feature drift summed over
/// features, y = mean changing-feature distance, one point per step.
fn curve(label: &str, aggregates: &[StepAggregate]) -> Series {
    Series {
        label: label.to_string(),
        points: aggregates.iter().map(|a| (a.mean_sq_dy.iter().sum(), a.mean_sq_dx)).collect(),
    }
}

fn chart(name: &str, series: &[Series]) -> String {
    loglog_chart(name, "mean ||dy||² (fixed)", "mean ||dx||² (changing)", series)
}

/// Renders the generator along `t` as `frame_###.pgm` plus `strip.pgm`.
fn write_strip(out: &mut OutputDir, prefix: &str, generator: &FeatureMap, shape: ImageShape, t: &Trajectory) -> Result<()> {
    let frames = t
        .points
        .iter()
        .map(|z| ImageBuffer::from_vector(shape, &generator.evaluate(z)?))
        .collect::<Result<Vec<_>>>()?;
    for (i, frame) in frames.iter().enumerate() {
        out.write(&format!("{prefix}frame_{i:03}.pgm"), &frame.to_pgm())?;
    }
    out.write(&format!("{prefix}strip.pgm"), &ImageBuffer::hstack(&frames)?.to_pgm())
}

/// Traverses every seed with the configured selector and method. Writes
/// `trajectories.jsonl`, `summary.csv`, optionally `plot.svg` and image
/// strips, and `manifest.json`.
pub fn run(config: &ExperimentConfig, out: &Path, command: &str) -> Result<RunManifest> {
    let mut s = Session::open(config, out, command)?;
    let strip_shape = if s.config.emit.strips { Some(s.image_shape()?) } else { None };
    let tc = s.config.traversal_config();
    let bed = &s.testbed;
    log::info!("run: {} seeds x {} paths, d = {}", s.seeds.len(), tc.paths_per_seed, bed.latent_dim());
    let trajectories = traverse_seeds(&bed.fixed, &bed.changing, &s.seeds, &tc)?;
    if all_empty(&trajectories.iter().collect::<Vec<_>>()) {
        return Err(empty_nullspace_error());
    }
    let spec = MethodSpec { selector: tc.selector, method: tc.method };
    let names = bed.fixed_names();
    let aggregates = aggregate_steps(&trajectories)?;
    let jsonl = trajectories_jsonl(&trajectories, &names)?;
    let summary = summary_csv(&[(spec, &aggregates)], &names);
    let generator = bed.generator.clone();
    s.out.write("trajectories.jsonl", &jsonl)?;
    s.out.write("summary.csv", summary.as_bytes())?;
    if s.config.emit.plots {
        let svg = chart(&s.config.name, &[curve(spec.name(), &aggregates)]);
        s.out.write("plot.svg", svg.as_bytes())?;
    }
    if let Some(shape) = strip_shape {
        for t in trajectories.iter().filter(|t| t.path_id == 0) {
            write_strip(&mut s.out, &format!("strips/seed_{:04}/", t.seed_index), &generator, shape, t)?;
        }
    }
    let statuses = trajectories.iter().map(|t| TrajectoryStatusEntry::of(t, spec.name())).collect();
    s.finish(statuses)
}

/// Runs each method on the same seeds. Writes `trajectories.jsonl` (methods
/// in the given order), `summary.csv`, `comparison.csv`, `dominance.csv`,
/// `plot.svg` and `manifest.json`.
pub fn compare(config: &ExperimentConfig, methods: &[MethodSpec], out: &Path, command: &str) -> Result<RunManifest> {
    let mut s = Session::open(config, out, command)?;
    let tc = s.config.traversal_config();
    let bed = &s.testbed;
    log::info!("compare: {} methods on {} seeds", methods.len(), s.seeds.len());
    let report = compare_methods(&bed.fixed, &bed.changing, &s.seeds, &tc, methods)?;
    let constrained: Vec<&Trajectory> = report
        .runs
        .iter()
        .filter(|r| matches!(r.spec.selector, Selector::Reds | Selector::MinDy))
        .flat_map(|r| &r.trajectories)
        .collect();
    if all_empty(&constrained) {
        return Err(empty_nullspace_error());
    }
    let names = bed.fixed_names();
    let mut jsonl = Vec::new();
    let mut statuses = Vec::new();
    for r in &report.runs {
        jsonl.extend(trajectories_jsonl(&r.trajectories, &names)?);
        statuses.extend(r.trajectories.iter().map(|t| TrajectoryStatusEntry::of(t, r.spec.name())));
    }
    let per_method: Vec<(MethodSpec, &[StepAggregate])> = report.runs.iter().map(|r| (r.spec, r.aggregates.as_slice())).collect();
    let summary = summary_csv(&per_method, &names);
    let comparison = comparison_csv(&report.runs, &names);
    let dominance = dominance_csv(&report.dominance, &names);
    let series: Vec<Series> = report.runs.iter().map(|r| curve(r.spec.name(), &r.aggregates)).collect();
    s.out.write("trajectories.jsonl", &jsonl)?;
    s.out.write("summary.csv", summary.as_bytes())?;
    s.out.write("comparison.csv", comparison.as_bytes())?;
    s.out.write("dominance.csv", dominance.as_bytes())?;
    s.out.write("plot.svg", chart(&s.config.name, &series).as_bytes())?;
    s.finish(statuses)
}

/// Outcome of the direction oracle at one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedOracle {
    pub seed_index: u64,
    pub status: RedsStatus,
    pub report: Option<OracleReport>,
}

fn status_name(status: RedsStatus) -> &'static str {
    match status {
        RedsStatus::Ok => "ok",
        RedsStatus::EmptyNullspace => "empty-nullspace",
        RedsStatus::FlatChanging => "flat-changing",
    }
}

/// Checks the top RED at every seed against `n_samples` random unit vectors
/// in its nullspace. Writes `oracle.csv` and `manifest.json`.
pub fn oracle(config: &ExperimentConfig, n_samples: usize, out: &Path, command: &str) -> Result<(RunManifest, Vec<SeedOracle>)> {
    if n_samples < MIN_ORACLE_SAMPLES {
        return Err(RedsError::InvalidConfig(format!(
            "oracle needs at least {MIN_ORACLE_SAMPLES} samples, got {n_samples}"
        )));
    }
    let mut s = Session::open(config, out, command)?;
    let tc = s.config.traversal_config();
    let bed = &s.testbed;
    let mut results = Vec::with_capacity(s.seeds.len());
    for (i, z) in s.seeds.iter().enumerate() {
        let geometry = local_geometry(&bed.fixed, &bed.changing, z, tc.fd_eps)?;
        let reds = reds_at(&geometry, &tc)?;
        let report = if reds.status == RedsStatus::Ok {
            let mut r = rng::stream(&[tc.rng_seed, i as u64, u64::MAX - 1]);
            Some(direction_oracle(&reds.nullspace, &geometry.changing_gram, &reds.basis.column(0), n_samples, &mut r)?)
        } else {
            None
        };
        log::debug!("oracle seed {i}: {:?}", report.map(|r| r.relative_gap));
        results.push(SeedOracle { seed_index: i as u64, status: reds.status, report });
    }
    if results.iter().all(|r| r.status == RedsStatus::EmptyNullspace) {
        return Err(empty_nullspace_error());
    }
    let mut csv = String::from("seed_index,status,red_value,best_sampled,n_samples,relative_gap\n");
    let mut statuses = Vec::new();
    for r in &results {
        match &r.report {
            Some(o) => writeln!(
                csv,
                "{},{},{},{},{},{}",
                r.seed_index,
                status_name(r.status),
                fmt_f64(o.red_value),
                fmt_f64(o.best_sampled),
                o.n_samples,
                fmt_f64(o.relative_gap)
            ),
            None => writeln!(csv, "{},{},,,{n_samples},", r.seed_index, status_name(r.status)),
        }
        .expect("writing to a String cannot fail");
        let status = match r.status {
            RedsStatus::Ok => TrajectoryStatus::Complete,
            RedsStatus::EmptyNullspace => TrajectoryStatus::EmptyNullspace,
            RedsStatus::FlatChanging => TrajectoryStatus::FlatChanging,
        };
        statuses.push(TrajectoryStatusEntry {
            method: "oracle".into(),
            seed_index: r.seed_index,
            path_index: 0,
            status,
            steps: 0,
        });
    }
    s.out.write("oracle.csv", csv.as_bytes())?;
    Ok((s.finish(statuses)?, results))
}

/// Parses `SEED:PATH`, or a flat index `seed * paths_per_seed + path`.
pub fn parse_trajectory_id(id: &str, seeds: usize, paths_per_seed: usize) -> Result<(u64, u64)> {
    let bad = || RedsError::InvalidInput(format!("trajectory id `{id}` is not SEED:PATH or an index"));
    let (seed, path) = match id.split_once(':') {
        Some((a, b)) => (a.trim().parse::<usize>().map_err(|_| bad())?, b.trim().parse::<usize>().map_err(|_| bad())?),
        None => {
            let k = id.trim().parse::<usize>().map_err(|_| bad())?;
            (k / paths_per_seed.max(1), k % paths_per_seed.max(1))
        }
    };
    if seed >= seeds || path >= paths_per_seed {
        return Err(RedsError::InvalidInput(format!(
            "trajectory {seed}:{path} out of range ({seeds} seeds x {paths_per_seed} paths)"
        )));
    }
    Ok((seed as u64, path as u64))
}

/// Recomputes one trajectory and writes its frames and strip.
pub fn strip(config: &ExperimentConfig, trajectory_id: &str, out: &Path, command: &str) -> Result<RunManifest> {
    let mut s = Session::open(config, out, command)?;
    let shape = s.image_shape()?;
    let tc = s.config.traversal_config();
    let (seed, path) = parse_trajectory_id(trajectory_id, s.seeds.len(), tc.paths_per_seed)?;
    let bed = &s.testbed;
    let global = global_direction_for(&bed.fixed, &bed.changing, &tc)?;
    let t = traverse(&bed.fixed, &bed.changing, &s.seeds[seed as usize], seed, path, &tc, global.as_ref())?;
    let generator = bed.generator.clone();
    write_strip(&mut s.out, "", &generator, shape, &t)?;
    let entry = TrajectoryStatusEntry::of(&t, MethodSpec { selector: tc.selector, method: tc.method }.name());
    s.finish(vec![entry])
}
