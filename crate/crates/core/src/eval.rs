//! Distance bookkeeping, aggregation and method comparison.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RedsError, Result};
use crate::features::FeatureMap;
use crate::rng;
use crate::spectral::{GramMatrix, SubspaceBasis};
use crate::traversal::{traverse_seeds, Method, Selector, Trajectory, TraversalConfig};

/// Values at or below zero are replaced by this before taking logs.
pub const LOG_FLOOR: f64 = 1e-30;

/// Distances at step `i >= 1`, measured from the seed unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// `||f_j(z_i) - f_j(z_0)||²`, one per fixed feature.
    pub sq_dy: Vec<f64>,
    /// `1 - cos(f_j(z_i), f_j(z_0))`, one per fixed feature.
    pub cos_dy: Vec<f64>,
    /// `||c(z_i) - c(z_0)||²`.
    pub sq_dx: f64,
    /// `||c(z_i) - c(z_{i-1})||`.
    pub step_dx: f64,
    /// `||c(z_i) - c(z_{i-2})||`, from step 2 on.
    pub skip_dx: Option<f64>,
}

fn cosine_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = a.norm() * b.norm();
    if n == 0.0 {
        0.0
    } else {
        1.0 - a.dot(b) / n
    }
}

fn at_step(e: RedsError, step: usize) -> RedsError {
    match e {
        RedsError::Evaluation { map, perturbation, reason } => {
            RedsError::Evaluation { map, perturbation, reason: format!("step {step}: {reason}") }
        }
        other => other,
    }
}

/// One record per point after the first.
pub fn step_distances(points: &[DVector<f64>], fixed: &[FeatureMap], changing: &FeatureMap) -> Result<Vec<StepRecord>> {
    let eval = |m: &FeatureMap| -> Result<Vec<DVector<f64>>> {
        points.iter().enumerate().map(|(i, z)| m.evaluate(z).map_err(|e| at_step(e, i))).collect()
    };
    let ys = fixed.iter().map(eval).collect::<Result<Vec<_>>>()?;
    let xs = eval(changing)?;
    Ok((1..points.len())
        .map(|i| StepRecord {
            step: i,
            sq_dy: ys.iter().map(|y| (&y[i] - &y[0]).norm_squared()).collect(),
            cos_dy: ys.iter().map(|y| cosine_distance(&y[i], &y[0])).collect(),
            sq_dx: (&xs[i] - &xs[0]).norm_squared(),
            step_dx: (&xs[i] - &xs[i - 1]).norm(),
            skip_dx: (i >= 2).then(|| (&xs[i] - &xs[i - 2]).norm()),
        })
        .collect())
}

/// `log10(max(v, LOG_FLOOR))`, and whether the floor was applied.
pub fn floored_log10(v: f64) -> (f64, bool) {
    if v > LOG_FLOOR {
        (v.log10(), false)
    } else {
        (LOG_FLOOR.log10(), true)
    }
}

/// Means over the trajectories that reached `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepAggregate {
    pub step: usize,
    pub count: usize,
    pub mean_sq_dy: Vec<f64>,
    pub mean_sq_dx: f64,
    /// Mean of the per-trajectory `log10` values.
    pub mean_log10_sq_dy: Vec<f64>,
    pub mean_log10_sq_dx: f64,
    /// Number of values raised to [`LOG_FLOOR`] before taking logs.
    pub floored: usize,
}

pub fn aggregate_steps(trajectories: &[Trajectory]) -> Result<Vec<StepAggregate>> {
    let n_fixed = trajectories
        .iter()
        .find_map(|t| t.records.first().map(|r| r.sq_dy.len()))
        .ok_or_else(|| RedsError::InsufficientData("no trajectory has any recorded step".into()))?;
    let max_step = trajectories.iter().map(|t| t.records.len()).max().unwrap_or(0);
    let mut out = Vec::with_capacity(max_step);
    for step in 1..=max_step {
        let mut agg = StepAggregate {
            step,
            count: 0,
            mean_sq_dy: vec![0.0; n_fixed],
            mean_sq_dx: 0.0,
            mean_log10_sq_dy: vec![0.0; n_fixed],
            mean_log10_sq_dx: 0.0,
            floored: 0,
        };
        for r in trajectories.iter().filter_map(|t| t.records.get(step - 1)) {
            if r.sq_dy.len() != n_fixed {
                return Err(RedsError::InvalidInput("trajectories disagree on the number of fixed features".into()));
            }
            agg.count += 1;
            for (j, &v) in r.sq_dy.iter().enumerate() {
                let (l, f) = floored_log10(v);
                agg.mean_sq_dy[j] += v;
                agg.mean_log10_sq_dy[j] += l;
                agg.floored += f as usize;
            }
            let (l, f) = floored_log10(r.sq_dx);
            agg.mean_sq_dx += r.sq_dx;
            agg.mean_log10_sq_dx += l;
            agg.floored += f as usize;
        }
        let n = agg.count as f64;
        agg.mean_sq_dy.iter_mut().chain(agg.mean_log10_sq_dy.iter_mut()).for_each(|v| *v /= n);
        agg.mean_sq_dx /= n;
        agg.mean_log10_sq_dx /= n;
        out.push(agg);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// How many values were raised to [`LOG_FLOOR`].
    pub floored: usize,
}

/// Least-squares slope of `log10(values)` against `log10(arc_lengths)`.
pub fn loglog_slope(arc_lengths: &[f64], values: &[f64]) -> Result<SlopeFit> {
    if arc_lengths.len() != values.len() {
        return Err(RedsError::InvalidInput(format!(
            "{} arc lengths but {} values",
            arc_lengths.len(),
            values.len()
        )));
    }
    if arc_lengths.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(RedsError::InvalidInput("arc lengths must be positive".into()));
    }
    if values.len() < 3 {
        return Err(RedsError::InsufficientData(format!("slope fit needs 3 points, got {}", values.len())));
    }
    let xs: Vec<f64> = arc_lengths.iter().map(|a| a.log10()).collect();
    let mut floored = 0;
    let ys: Vec<f64> = values
        .iter()
        .map(|&v| {
            let (l, f) = floored_log10(v);
            floored += f as usize;
            l
        })
        .collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(RedsError::InsufficientData("arc lengths are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(SlopeFit { slope, intercept: my - slope * mx, floored })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    /// `vᵀ A_c v` at the top RED.
    pub red_value: f64,
    pub best_sampled: f64,
    pub n_samples: usize,
    /// `(best_sampled - red_value) / max(red_value, 1e-15)`.
    pub relative_gap: f64,
}

pub const MIN_ORACLE_SAMPLES: usize = 10_000;
const ORACLE_CHUNK: usize = 4096;

/// Samples random unit vectors in `nullspace` and compares the best
/// `vᵀ A_c v` against the value at `red_direction`.
pub fn direction_oracle<R: Rng + ?Sized>(
    nullspace: &SubspaceBasis,
    a_c: &GramMatrix,
    red_direction: &DVector<f64>,
    n_samples: usize,
    rng: &mut R,
) -> Result<OracleReport> {
    if n_samples < MIN_ORACLE_SAMPLES {
        return Err(RedsError::InvalidConfig(format!(
            "oracle needs at least {MIN_ORACLE_SAMPLES} samples, got {n_samples}"
        )));
    }
    if nullspace.is_empty() {
        return Err(RedsError::EmptySubspace("oracle needs a nonempty nullspace".into()));
    }
    let n = nullspace.columns();
    // With v = N g / ||g||, vᵀ A_c v = gᵀ P g / gᵀ g.
    let p = n.transpose() * a_c.as_matrix() * n;
    let k = nullspace.rank();
    let chunk_seeds: Vec<u64> = (0..n_samples.div_ceil(ORACLE_CHUNK)).map(|_| rng.random()).collect();
    let best = chunk_seeds
        .par_iter()
        .enumerate()
        .map(|(c, &seed)| {
            let mut r = rng::StreamRng::seed_from_u64(seed);
            let count = ORACLE_CHUNK.min(n_samples - c * ORACLE_CHUNK);
            (0..count)
                .map(|_| {
                    let g = rng::normal_vector(&mut r, k);
                    g.dot(&(&p * &g)) / g.norm_squared()
                })
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let red_value = a_c.quadratic_form(red_direction);
    Ok(OracleReport {
        red_value,
        best_sampled: best,
        n_samples,
        relative_gap: (best - red_value) / red_value.max(1e-15),
    })
}

/// Fraction of triples `(i, i+1, i+2)` with `||x_i - x_{i+1}|| < ||x_i - x_{i+2}||`,
/// as `(satisfied, total)`.
pub fn monotone_fraction(trajectories: &[Trajectory]) -> (usize, usize) {
    let mut ok = 0;
    let mut total = 0;
    for t in trajectories {
        // Triple starting at i uses step_dx of record i+1 and skip_dx of record i+2.
        for w in t.records.windows(2) {
            if let Some(skip) = w[1].skip_dx {
                total += 1;
                ok += (w[0].step_dx < skip) as usize;
            }
        }
    }
    (ok, total)
}

/// A named `(selector, method)` pair, as used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MethodSpec {
    pub selector: Selector,
    pub method: Method,
}

impl MethodSpec {
    pub const ALL: [&'static str; 6] = ["reds-lin", "reds-proj", "random", "max-dx", "min-dy", "global-linear"];

    pub fn name(&self) -> &'static str {
        match (self.selector, self.method) {
            (Selector::Reds, Method::Linear) => "reds-lin",
            (Selector::Reds, Method::Projection) => "reds-proj",
            (s, _) => s.as_str(),
        }
    }

    pub fn apply(&self, base: &TraversalConfig) -> TraversalConfig {
        TraversalConfig { selector: self.selector, method: self.method, ..base.clone() }
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodSpec {
    type Err = RedsError;

    fn from_str(s: &str) -> Result<Self> {
        let (selector, method) = match s {
            "reds-lin" => (Selector::Reds, Method::Linear),
            "reds-proj" => (Selector::Reds, Method::Projection),
            "random" => (Selector::Random, Method::Linear),
            "max-dx" => (Selector::MaxDx, Method::Linear),
            "min-dy" => (Selector::MinDy, Method::Linear),
            "global-linear" => (Selector::GlobalLinear, Method::Linear),
            other => {
                return Err(RedsError::InvalidConfig(format!(
                    "unknown method `{other}`, expected one of {}",
                    Self::ALL.join(", ")
                )))
            }
        };
        Ok(Self { selector, method })
    }
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub spec: MethodSpec,
    pub trajectories: Vec<Trajectory>,
    pub aggregates: Vec<StepAggregate>,
}

impl MethodRun {
    pub fn at_step(&self, step: usize) -> Option<&StepAggregate> {
        self.aggregates.iter().find(|a| a.step == step)
    }
}

/// Pairwise comparison at one step. Negative `delta_log10_sq_dy` means `a`
/// drifts less in the fixed features; positive `delta_log10_sq_dx` means `a`
/// changes the changing feature more.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dominance {
    pub a: String,
    pub b: String,
    pub step: usize,
    pub delta_log10_sq_dy: Vec<f64>,
    pub delta_log10_sq_dx: f64,
    /// `a` is no worse than `b` on every fixed feature and on the changing one.
    pub a_dominates: bool,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub runs: Vec<MethodRun>,
    pub dominance: Vec<Dominance>,
}

impl ComparisonReport {
    pub fn run(&self, name: &str) -> Option<&MethodRun> {
        self.runs.iter().find(|r| r.spec.name() == name)
    }
}

/// Runs every method on the same seeds and path streams, then compares
/// all ordered pairs at the final step.
pub fn compare_methods(
    fixed: &[FeatureMap],
    changing: &FeatureMap,
    seeds: &[DVector<f64>],
    base: &TraversalConfig,
    methods: &[MethodSpec],
) -> Result<ComparisonReport> {
    if methods.is_empty() {
        return Err(RedsError::InvalidConfig("no methods to compare".into()));
    }
    let runs = methods
        .iter()
        .map(|spec| {
            let trajectories = traverse_seeds(fixed, changing, seeds, &spec.apply(base))?;
            let aggregates = aggregate_steps(&trajectories)?;
            Ok(MethodRun { spec: *spec, trajectories, aggregates })
        })
        .collect::<Result<Vec<_>>>()?;
    let step = base.length;
    let mut dominance = Vec::new();
    for a in &runs {
        for b in &runs {
            if a.spec == b.spec {
                continue;
            }
            let (Some(x), Some(y)) = (a.at_step(step), b.at_step(step)) else { continue };
            let delta_dy: Vec<f64> = x.mean_log10_sq_dy.iter().zip(&y.mean_log10_sq_dy).map(|(p, q)| p - q).collect();
            let delta_dx = x.mean_log10_sq_dx - y.mean_log10_sq_dx;
            dominance.push(Dominance {
                a: a.spec.name().into(),
                b: b.spec.name().into(),
                step,
                a_dominates: delta_dy.iter().all(|&v| v <= 0.0) && delta_dx >= 0.0,
                delta_log10_sq_dy: delta_dy,
                delta_log10_sq_dx: delta_dx,
            });
        }
    }
    Ok(ComparisonReport { runs, dominance })
}
