//! Direction selectors and latent paths.
//!
//! A path starts at a seed point `z_0` and takes `length` steps of arc length
//! `step`. The *linear* method walks a single direction chosen at the seed;
//! the *projection* method recomputes the REDs span `R_i` along the way and
//! projects the previous direction onto it, so the path bends to follow the
//! curved set of points whose fixed features match the seed.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{RedsError, Result};
use crate::eval::{step_distances, StepRecord};
use crate::features::FeatureMap;
use crate::geometry::{local_geometry, LocalGeometry};
use crate::rng;
use crate::spectral::{
    check_beta, compute_reds, explained_variance_rank, spectral_normalize, GramMatrix, RankMode, RedsResult,
    RedsStatus, SubspaceBasis, DEFAULT_BETA_CHANGING, DEFAULT_BETA_FIXED,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selector {
    /// Random direction in the span of the local REDs.
    Reds,
    /// Uniform on the unit sphere.
    Random,
    /// Random combination of the leading eigenvectors of `A_c`.
    MaxDx,
    /// Random combination of the trailing eigenvectors of `Σ A_f`.
    MinDy,
    /// One global direction per run, fitted by least squares.
    GlobalLinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Linear,
    Projection,
}

impl Selector {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Reds => "reds",
            Self::Random => "random",
            Self::MaxDx => "max-dx",
            Self::MinDy => "min-dy",
            Self::GlobalLinear => "global-linear",
        }
    }
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Projection => "projection",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraversalConfig {
    /// One value per fixed feature; empty means the default for each.
    pub beta_f: Vec<f64>,
    pub beta_c: f64,
    /// Finite-difference step; `None` scales with the point.
    pub fd_eps: Option<f64>,
    pub step: f64,
    pub length: usize,
    pub paths_per_seed: usize,
    pub method: Method,
    pub selector: Selector,
    pub rng_seed: u64,
    /// Below this projected norm the projection method resamples in span.
    pub projection_floor: f64,
    pub rank_mode: RankMode,
    /// Recompute the REDs every this many steps.
    pub recompute_stride: usize,
    /// Latent samples for the global-linear fit.
    pub global_linear_samples: usize,
}

impl Default for TraversalConfig {
    fn default() -> Self {
        Self {
            beta_f: Vec::new(),
            beta_c: DEFAULT_BETA_CHANGING,
            fd_eps: None,
            step: 1.0,
            length: 5,
            paths_per_seed: 5,
            method: Method::Linear,
            selector: Selector::Reds,
            rng_seed: 0,
            projection_floor: 0.1,
            rank_mode: RankMode::Squared,
            recompute_stride: 1,
            global_linear_samples: 2000,
        }
    }
}

impl TraversalConfig {
    pub fn validate(&self) -> Result<()> {
        for &b in &self.beta_f {
            check_beta(b)?;
        }
        check_beta(self.beta_c)?;
        let bad = |what: String| Err(RedsError::InvalidConfig(what));
        if let Some(eps) = self.fd_eps {
            if !(eps.is_finite() && eps > 0.0) {
                return bad(format!("fd_eps must be positive, got {eps}"));
            }
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return bad(format!("step must be positive, got {}", self.step));
        }
        if self.length == 0 {
            return bad("length must be >= 1".into());
        }
        if self.paths_per_seed == 0 {
            return bad("paths_per_seed must be >= 1".into());
        }
        if !(self.projection_floor > 0.0 && self.projection_floor < 1.0) {
            return bad(format!("projection_floor must lie in (0, 1), got {}", self.projection_floor));
        }
        if self.recompute_stride == 0 {
            return bad("recompute_stride must be >= 1".into());
        }
        if self.method == Method::Projection && self.selector != Selector::Reds {
            return bad(format!("projection traversal needs the reds selector, got {}", self.selector.as_str()));
        }
        Ok(())
    }

    /// `beta_f` expanded to one value per fixed feature.
    pub fn betas_for(&self, n_fixed: usize) -> Result<Vec<f64>> {
        match self.beta_f.len() {
            0 => Ok(vec![DEFAULT_BETA_FIXED; n_fixed]),
            n if n == n_fixed => Ok(self.beta_f.clone()),
            n => Err(RedsError::InvalidConfig(format!("{n} beta_f values for {n_fixed} fixed features"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectoryStatus {
    Complete,
    /// No feasible direction at the seed point.
    EmptyNullspace,
    /// The changing feature is locally constant at the seed point.
    FlatChanging,
    /// The REDs span became empty at `step`; points up to `step` are kept.
    Truncated { step: usize, cause: RedsStatus },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub seed_index: u64,
    pub path_id: u64,
    pub selector: Selector,
    pub method: Method,
    /// `z_0 ..= z_L` (fewer when truncated).
    pub points: Vec<DVector<f64>>,
    pub seed_direction: Option<DVector<f64>>,
    /// One record per step `i >= 1`.
    pub records: Vec<StepRecord>,
    pub status: TrajectoryStatus,
    /// Steps where the projection fell below the floor and was resampled.
    pub fallbacks: usize,
}

impl Trajectory {
    pub fn seed_point(&self) -> &DVector<f64> {
        &self.points[0]
    }

    pub fn steps_reached(&self) -> usize {
        self.points.len() - 1
    }

    fn stopped(z0: &DVector<f64>, selector: Selector, method: Method, status: TrajectoryStatus) -> Self {
        Self {
            seed_index: 0,
            path_id: 0,
            selector,
            method,
            points: vec![z0.clone()],
            seed_direction: None,
            records: Vec::new(),
            status,
            fallbacks: 0,
        }
    }
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> DVector<f64> {
    loop {
        let g = rng::normal_vector(rng, dim);
        let n = g.norm();
        if n > 0.0 {
            return g / n;
        }
    }
}

/// `B g / ||B g||` with `g` standard normal: uniform on the unit sphere of the span.
pub fn random_direction_in_span<R: Rng + ?Sized>(basis: &SubspaceBasis, rng: &mut R) -> Result<DVector<f64>> {
    if basis.is_empty() {
        return Err(RedsError::EmptySubspace(
            "no direction to sample; lower beta_f to open up a truncated nullspace".into(),
        ));
    }
    loop {
        let v = basis.columns() * rng::normal_vector(rng, basis.rank());
        let n = v.norm();
        if n > 0.0 {
            return Ok(v / n);
        }
    }
}

/// Solves for the REDs at an assembled geometry with the config's betas.
pub fn reds_at(geometry: &LocalGeometry, config: &TraversalConfig) -> Result<RedsResult> {
    let betas = config.betas_for(geometry.fixed_grams.len())?;
    compute_reds(&geometry.fixed_grams, &geometry.changing_gram, &betas, config.beta_c, config.rank_mode)
}

fn normalized_fixed_sum(geometry: &LocalGeometry) -> Result<GramMatrix> {
    let normalized: Vec<GramMatrix> = geometry.fixed_grams.iter().map(|g| spectral_normalize(g).gram).collect();
    GramMatrix::sum(geometry.dim(), &normalized)
}

/// Draws a direction at `geometry` with a local selector. Global-linear
/// directions are fitted once per run by [`global_linear_direction`].
pub fn select_direction<R: Rng + ?Sized>(
    selector: Selector,
    geometry: &LocalGeometry,
    config: &TraversalConfig,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let d = geometry.dim();
    match selector {
        Selector::Reds => random_direction_in_span(&reds_at(geometry, config)?.basis, rng),
        Selector::Random => Ok(random_unit_vector(rng, d)),
        Selector::MaxDx => {
            let spectrum = spectral_normalize(&geometry.changing_gram).gram.spectrum();
            let k = explained_variance_rank(&spectrum.clamped_eigenvalues(), config.beta_c, config.rank_mode)?;
            random_direction_in_span(&spectrum.leading(k), rng)
        }
        Selector::MinDy => {
            // As many trailing directions as the REDs nullspace has, so both
            // search spaces have equal size.
            let k = reds_at(geometry, config)?.nullspace.rank();
            let spectrum = normalized_fixed_sum(geometry)?.spectrum();
            random_direction_in_span(&spectrum.trailing(k), rng)
        }
        Selector::GlobalLinear => Err(RedsError::InvalidConfig(
            "global-linear directions are fitted per run, not per point".into(),
        )),
    }
}

/// `z_k = z_0 + k s v` for `k = 0..=length`.
pub fn linear_traverse(z0: &DVector<f64>, direction: &DVector<f64>, step: f64, length: usize) -> Vec<DVector<f64>> {
    (0..=length).map(|k| z0 + direction * (k as f64 * step)).collect()
}

fn seed_status(status: RedsStatus) -> TrajectoryStatus {
    match status {
        RedsStatus::FlatChanging => TrajectoryStatus::FlatChanging,
        _ => TrajectoryStatus::EmptyNullspace,
    }
}

/// Projection traversal from `z0`. The first direction is drawn in the span
/// of `R_0`; each later step projects the previous direction onto the current
/// `R_i` and renormalizes it.
pub fn projection_traverse<R: Rng + ?Sized>(
    z0: &DVector<f64>,
    fixed: &[FeatureMap],
    changing: &FeatureMap,
    config: &TraversalConfig,
    rng: &mut R,
) -> Result<Trajectory> {
    config.validate()?;
    let (selector, method) = (Selector::Reds, Method::Projection);
    let first = reds_at(&local_geometry(fixed, changing, z0, config.fd_eps)?, config)?;
    if first.basis.is_empty() {
        return Ok(Trajectory::stopped(z0, selector, method, seed_status(first.status)));
    }
    let mut dz = random_direction_in_span(&first.basis, rng)?;
    let seed_direction = dz.clone();
    let mut basis = first.basis;
    let mut z = z0 + &dz * config.step;
    let mut points = vec![z0.clone(), z.clone()];
    let mut status = TrajectoryStatus::Complete;
    let mut fallbacks = 0;

    for i in 1..config.length {
        if i % config.recompute_stride == 0 {
            let reds = reds_at(&local_geometry(fixed, changing, &z, config.fd_eps)?, config)?;
            if reds.basis.is_empty() {
                status = TrajectoryStatus::Truncated { step: i, cause: reds.status };
                break;
            }
            basis = reds.basis;
        }
        let p = basis.project(&dz);
        let norm = p.norm();
        dz = if norm < config.projection_floor {
            fallbacks += 1;
            let q = random_direction_in_span(&basis, rng)?;
            if q.dot(&dz) < 0.0 {
                -q
            } else {
                q
            }
        } else {
            p / norm
        };
        z += &dz * config.step;
        points.push(z.clone());
    }

    let records = step_distances(&points, fixed, changing)?;
    Ok(Trajectory {
        seed_index: 0,
        path_id: 0,
        selector,
        method,
        points,
        seed_direction: Some(seed_direction),
        records,
        status,
        fallbacks,
    })
}

/// The random stream owned by one `(seed, path)` pair.
pub fn path_rng(config: &TraversalConfig, seed_index: u64, path_id: u64) -> rng::StreamRng {
    rng::stream(&[config.rng_seed, seed_index, path_id])
}

/// Standard-normal seed points, one independent stream per index.
pub fn seed_points(latent_dim: usize, count: usize, master_seed: u64) -> Vec<DVector<f64>> {
    (0..count as u64)
        .map(|i| rng::normal_vector(&mut rng::stream(&[master_seed, i]), latent_dim))
        .collect()
}

/// One path from `z0` with the configured selector and method.
///
/// Linear and projection paths from the same `(seed_index, path_id)` start
/// with the same REDs direction.
pub fn traverse(
    fixed: &[FeatureMap],
    changing: &FeatureMap,
    z0: &DVector<f64>,
    seed_index: u64,
    path_id: u64,
    config: &TraversalConfig,
    global_direction: Option<&DVector<f64>>,
) -> Result<Trajectory> {
    config.validate()?;
    let mut rng = path_rng(config, seed_index, path_id);
    let mut trajectory = match config.method {
        Method::Projection => projection_traverse(z0, fixed, changing, config, &mut rng)?,
        Method::Linear => {
            let selector = config.selector;
            let direction = match selector {
                Selector::GlobalLinear => global_direction
                    .cloned()
                    .ok_or_else(|| RedsError::InvalidConfig("global-linear needs a fitted direction".into()))?,
                Selector::Random => random_unit_vector(&mut rng, z0.len()),
                _ => {
                    let geometry = local_geometry(fixed, changing, z0, config.fd_eps)?;
                    if selector == Selector::Reds || selector == Selector::MinDy {
                        let reds = reds_at(&geometry, config)?;
                        let empty = if selector == Selector::Reds { reds.basis.is_empty() } else { reds.nullspace.is_empty() };
                        if empty {
                            return Ok(located(Trajectory::stopped(z0, selector, Method::Linear, seed_status(reds.status)), seed_index, path_id));
                        }
                    }
                    match select_direction(selector, &geometry, config, &mut rng) {
                        Ok(v) => v,
                        Err(RedsError::EmptySubspace(_)) => {
                            let t = Trajectory::stopped(z0, selector, Method::Linear, TrajectoryStatus::FlatChanging);
                            return Ok(located(t, seed_index, path_id));
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            let points = linear_traverse(z0, &direction, config.step, config.length);
            let records = step_distances(&points, fixed, changing)?;
            Trajectory {
                seed_index,
                path_id,
                selector,
                method: Method::Linear,
                points,
                seed_direction: Some(direction),
                records,
                status: TrajectoryStatus::Complete,
                fallbacks: 0,
            }
        }
    };
    trajectory.seed_index = seed_index;
    trajectory.path_id = path_id;
    Ok(trajectory)
}

fn located(mut t: Trajectory, seed_index: u64, path_id: u64) -> Trajectory {
    t.seed_index = seed_index;
    t.path_id = path_id;
    t
}

/// The shared global-linear direction when the selector needs one. It is
/// fitted once per run from its own stream.
pub fn global_direction_for(
    fixed: &[FeatureMap],
    changing: &FeatureMap,
    config: &TraversalConfig,
) -> Result<Option<DVector<f64>>> {
    match config.selector {
        Selector::GlobalLinear => {
            let mut r = rng::stream(&[config.rng_seed, u64::MAX]);
            Ok(Some(global_linear_direction(changing, fixed, config.global_linear_samples, &mut r)?))
        }
        _ => Ok(None),
    }
}

/// All `seeds × paths_per_seed` paths, in `(seed, path)` order. Paths run
/// in parallel; each owns its own stream, so the result is schedule-free.
pub fn traverse_seeds(
    fixed: &[FeatureMap],
    changing: &FeatureMap,
    seeds: &[DVector<f64>],
    config: &TraversalConfig,
) -> Result<Vec<Trajectory>> {
    config.validate()?;
    let global = global_direction_for(fixed, changing, config)?;
    let jobs: Vec<(u64, u64)> = (0..seeds.len() as u64)
        .flat_map(|s| (0..config.paths_per_seed as u64).map(move |p| (s, p)))
        .collect();
    jobs.par_iter()
        .map(|&(s, p)| traverse(fixed, changing, &seeds[s as usize], s, p, config, global.as_ref()))
        .collect()
}

/// Ordinary least-squares fit `a(z) ≈ wᵀz + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub weights: DVector<f64>,
    pub intercept: f64,
}

pub fn fit_linear_attribute(latents: &[DVector<f64>], values: &[f64]) -> Result<LinearFit> {
    let n = latents.len();
    let d = latents.first().map_or(0, |z| z.len());
    if n != values.len() {
        return Err(RedsError::InvalidInput(format!("{n} latents but {} values", values.len())));
    }
    if n <= d {
        return Err(RedsError::InvalidConfig(format!("rank-deficient design: {n} samples for {d} dimensions")));
    }
    let design = DMatrix::from_fn(n, d + 1, |i, j| if j < d { latents[i][j] } else { 1.0 });
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-12 * smax {
        return Err(RedsError::InvalidConfig("rank-deficient design matrix".into()));
    }
    let y = DVector::from_column_slice(values);
    let beta = svd.solve(&y, 0.0).map_err(|e| RedsError::InvalidInput(e.to_string()))?;
    Ok(LinearFit { weights: beta.rows(0, d).into_owned(), intercept: beta[d] })
}

/// Removes from `v` its components along each of `against` (Gram–Schmidt in
/// list order) and normalizes the residual.
pub fn orthogonalize_against(v: &DVector<f64>, against: &[DVector<f64>]) -> Result<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(against.len());
    for a in against {
        let mut q = a.clone();
        for _ in 0..2 {
            for b in &basis {
                q -= b * b.dot(&q);
            }
        }
        let n = q.norm();
        if n > 1e-12 * a.norm().max(f64::MIN_POSITIVE) {
            basis.push(q / n);
        }
    }
    let scale = v.norm();
    if scale == 0.0 {
        return Err(RedsError::DegenerateAttribute("attribute direction is zero".into()));
    }
    let mut r = v / scale;
    for _ in 0..2 {
        for b in &basis {
            r -= b * b.dot(&r);
        }
    }
    let n = r.norm();
    if n < 1e-8 {
        return Err(RedsError::DegenerateAttribute(format!(
            "attribute direction lies in the span of the fixed directions (residual {n:.3e})"
        )));
    }
    Ok(r / n)
}

fn scalar_values(map: &FeatureMap, latents: &[DVector<f64>]) -> Result<Vec<f64>> {
    if map.output_dim() != 1 {
        return Err(RedsError::InvalidConfig(format!(
            "global-linear needs scalar attributes, `{}` has dimension {}",
            map.name(),
            map.output_dim()
        )));
    }
    latents.par_iter().map(|z| Ok(map.evaluate(z)?[0])).collect()
}

/// Fits each scalar attribute linearly over `n_samples` standard-normal
/// latents and orthogonalizes the changing attribute's weight vector against
/// the fixed ones.
pub fn global_linear_direction<R: Rng + ?Sized>(
    attribute: &FeatureMap,
    fixed_attributes: &[FeatureMap],
    n_samples: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let d = attribute.latent_dim();
    if n_samples < 10 * d {
        return Err(RedsError::InvalidConfig(format!(
            "global-linear needs at least {} samples for latent dim {d}, got {n_samples}",
            10 * d
        )));
    }
    let latents: Vec<DVector<f64>> = (0..n_samples).map(|_| rng::normal_vector(rng, d)).collect();
    let w = fit_linear_attribute(&latents, &scalar_values(attribute, &latents)?)?.weights;
    let fixed = fixed_attributes
        .iter()
        .map(|m| Ok(fit_linear_attribute(&latents, &scalar_values(m, &latents)?)?.weights))
        .collect::<Result<Vec<_>>>()?;
    orthogonalize_against(&w, &fixed)
}
