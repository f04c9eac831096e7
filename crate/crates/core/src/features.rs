//! Feature maps `z -> R^k` and the feature library.
//!
//! A [`FeatureMap`] is a named, deterministic, reentrant function of the
//! latent point. Every feature is built by composing a generator (itself a
//! `FeatureMap`) with an extractor: raw output, a pixel region, a spatial
//! frequency band, a frozen random embedding, a scalar attribute, or a
//! concatenation of other features. When the inner map carries an analytic
//! Jacobian the composed map does too; those Jacobians are only used as test
//! oracles for the finite-difference path.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{RedsError, Result};
use crate::generators::ImageShape;
use crate::rng;

type EvalFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type JacobianFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

#[derive(Clone)]
pub struct FeatureMap {
    name: String,
    latent_dim: usize,
    output_dim: usize,
    image: Option<ImageShape>,
    eval: Arc<EvalFn>,
    jacobian: Option<Arc<JacobianFn>>,
}

impl fmt::Debug for FeatureMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureMap")
            .field("name", &self.name)
            .field("latent_dim", &self.latent_dim)
            .field("output_dim", &self.output_dim)
            .field("image", &self.image)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl FeatureMap {
    /// Registers a map. It is probed twice at the origin: the outputs must have
    /// length `output_dim` and be bit-identical, otherwise the map is rejected
    /// as non-deterministic.
    pub fn new<F>(name: impl Into<String>, latent_dim: usize, output_dim: usize, eval: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        let map = Self {
            name: name.into(),
            latent_dim,
            output_dim,
            image: None,
            eval: Arc::new(eval),
            jacobian: None,
        };
        map.probe()?;
        Ok(map)
    }

    fn probe(&self) -> Result<()> {
        if self.latent_dim == 0 || self.output_dim == 0 {
            return Err(RedsError::InvalidConfig(format!(
                "feature `{}` must have positive latent and output dimensions",
                self.name
            )));
        }
        let origin = DVector::zeros(self.latent_dim);
        let a = (self.eval)(&origin);
        let b = (self.eval)(&origin);
        if a.len() != self.output_dim {
            return Err(RedsError::InvalidConfig(format!(
                "feature `{}` declared output_dim {} but produced {}",
                self.name,
                self.output_dim,
                a.len()
            )));
        }
        let same = a.len() == b.len() && a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits());
        if !same {
            return Err(RedsError::InvalidConfig(format!(
                "feature `{}` is not deterministic; stochastic maps cannot be differentiated",
                self.name
            )));
        }
        Ok(())
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_image_shape(mut self, shape: ImageShape) -> Result<Self> {
        if shape.len() != self.output_dim {
            return Err(RedsError::InvalidConfig(format!(
                "image shape {}x{}x{} does not match output_dim {}",
                shape.width, shape.height, shape.channels, self.output_dim
            )));
        }
        self.image = Some(shape);
        Ok(self)
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn image_shape(&self) -> Option<ImageShape> {
        self.image
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// Evaluates without validation.
    pub fn eval_unchecked(&self, z: &DVector<f64>) -> DVector<f64> {
        (self.eval)(z)
    }

    /// Evaluates, checking the latent dimension, output length and finiteness.
    pub fn evaluate(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.evaluate_probe(z, None)
    }

    pub(crate) fn evaluate_probe(&self, z: &DVector<f64>, perturbation: Option<i64>) -> Result<DVector<f64>> {
        if z.len() != self.latent_dim {
            return Err(RedsError::InvalidInput(format!(
                "feature `{}` expects latent dim {}, got {}",
                self.name,
                self.latent_dim,
                z.len()
            )));
        }
        let out = (self.eval)(z);
        if out.len() != self.output_dim {
            return Err(RedsError::Evaluation {
                map: self.name.clone(),
                perturbation,
                reason: format!("output length {} != {}", out.len(), self.output_dim),
            });
        }
        if let Some(i) = out.iter().position(|x| !x.is_finite()) {
            return Err(RedsError::Evaluation {
                map: self.name.clone(),
                perturbation,
                reason: format!("non-finite output at index {i}"),
            });
        }
        Ok(out)
    }

    pub fn analytic_jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let jac = self
            .jacobian
            .as_ref()
            .ok_or_else(|| RedsError::Unsupported(format!("feature `{}` has no analytic Jacobian", self.name)))?;
        Ok(jac(z))
    }

    fn require_image(&self, what: &str) -> Result<ImageShape> {
        self.image.ok_or_else(|| {
            RedsError::InvalidConfig(format!("{what} needs an image-valued generator, `{}` is not", self.name))
        })
    }
}

/// Identity wrapper: the generator output itself.
pub fn raw_feature(generator: &FeatureMap) -> FeatureMap {
    generator.clone().renamed("raw")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    Inside,
    Outside,
}

/// Pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionMask {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub polarity: Polarity,
}

impl RegionMask {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize, polarity: Polarity) -> Self {
        Self { x0, y0, x1, y1, polarity }
    }

    pub fn validate(&self, shape: ImageShape) -> Result<()> {
        if !(self.x0 < self.x1 && self.x1 <= shape.width && self.y0 < self.y1 && self.y1 <= shape.height) {
            return Err(RedsError::InvalidConfig(format!(
                "region ({}, {})-({}, {}) is not a valid rectangle in a {}x{} image",
                self.x0, self.y0, self.x1, self.y1, shape.width, shape.height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }

    /// Flat indices (row-major, channels interleaved) of the selected values.
    pub fn selected_indices(&self, shape: ImageShape) -> Vec<usize> {
        let want_inside = self.polarity == Polarity::Inside;
        let mut idx = Vec::new();
        for y in 0..shape.height {
            for x in 0..shape.width {
                if self.contains(x, y) == want_inside {
                    let base = (y * shape.width + x) * shape.channels;
                    idx.extend(base..base + shape.channels);
                }
            }
        }
        idx
    }
}

/// Pixels inside (or outside) a rectangle, flattened row-major.
pub fn region_feature(generator: &FeatureMap, mask: RegionMask) -> Result<FeatureMap> {
    let shape = generator.require_image("region feature")?;
    mask.validate(shape)?;
    let indices = Arc::new(mask.selected_indices(shape));
    if indices.is_empty() {
        return Err(RedsError::InvalidConfig("region selects no pixels".into()));
    }
    let g = generator.clone();
    let idx = Arc::clone(&indices);
    let mut map = FeatureMap::new("region", generator.latent_dim(), indices.len(), move |z| {
        let out = g.eval_unchecked(z);
        DVector::from_iterator(idx.len(), idx.iter().map(|&i| out[i]))
    })?;
    if generator.has_analytic_jacobian() {
        let g = generator.clone();
        let idx = Arc::clone(&indices);
        map = map.with_jacobian(move |z| g.analytic_jacobian(z).expect("checked").select_rows(idx.iter()));
    }
    if mask.polarity == Polarity::Inside {
        let sub = ImageShape::new(mask.x1 - mask.x0, mask.y1 - mask.y0, shape.channels);
        map = map.with_image_shape(sub)?;
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Band {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSplit {
    pub sigma: f64,
    pub band: Band,
}

/// Normalized Gaussian kernel truncated at `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(RedsError::InvalidConfig(format!("blur sigma must be positive, got {sigma}")));
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    r as usize
}

/// Separable blur with reflect padding (mirror without repeating the edge).
/// The kernel radius must be smaller than both image sides.
pub fn blur(values: &[f64], shape: ImageShape, kernel: &[f64]) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let (w, h, c) = (shape.width, shape.height, shape.channels);
    let at = |x: usize, y: usize, ch: usize| (y * w + x) * c + ch;
    let mut tmp = vec![0.0; values.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, wk) in kernel.iter().enumerate() {
                    let xx = reflect(x as isize + k as isize - radius, w);
                    acc += wk * values[at(xx, y, ch)];
                }
                tmp[at(x, y, ch)] = acc;
            }
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (k, wk) in kernel.iter().enumerate() {
                    let yy = reflect(y as isize + k as isize - radius, h);
                    acc += wk * tmp[at(x, yy, ch)];
                }
                out[at(x, y, ch)] = acc;
            }
        }
    }
    out
}

/// Splits `values` into its low band (blurred) or high band (residual).
pub fn band_values(values: &[f64], shape: ImageShape, kernel: &[f64], band: Band) -> Vec<f64> {
    let low = blur(values, shape, kernel);
    match band {
        Band::Low => low,
        Band::High => values.iter().zip(&low).map(|(v, l)| v - l).collect(),
    }
}

/// Low-pass or high-pass filtered image. The high band is defined as the
/// residual, so `low + high == image`.
pub fn band_feature(generator: &FeatureMap, split: BandSplit) -> Result<FeatureMap> {
    let shape = generator.require_image("band feature")?;
    let kernel = Arc::new(gaussian_kernel(split.sigma)?);
    let radius = kernel.len() / 2;
    if radius >= shape.width.min(shape.height) {
        return Err(RedsError::InvalidConfig(format!(
            "blur radius {radius} (sigma {}) does not fit a {}x{} image",
            split.sigma, shape.width, shape.height
        )));
    }
    let g = generator.clone();
    let k = Arc::clone(&kernel);
    let name = match split.band {
        Band::Low => "low-band",
        Band::High => "high-band",
    };
    let mut map = FeatureMap::new(name, generator.latent_dim(), shape.len(), move |z| {
        let img = g.eval_unchecked(z);
        DVector::from_vec(band_values(img.as_slice(), shape, &k, split.band))
    })?
    .with_image_shape(shape)?;
    if generator.has_analytic_jacobian() {
        let g = generator.clone();
        let k = Arc::clone(&kernel);
        map = map.with_jacobian(move |z| {
            let j = g.analytic_jacobian(z).expect("checked");
            let mut out = DMatrix::zeros(j.nrows(), j.ncols());
            for c in 0..j.ncols() {
                let col: Vec<f64> = j.column(c).iter().copied().collect();
                out.set_column(c, &DVector::from_vec(band_values(&col, shape, &k, split.band)));
            }
            out
        });
    }
    Ok(map)
}

/// `tanh(E g(z))` for an explicit embedding matrix `E` (`embed_dim x output_dim`).
pub fn linear_embed_with_matrix(generator: &FeatureMap, embedding: DMatrix<f64>) -> Result<FeatureMap> {
    if embedding.ncols() != generator.output_dim() || embedding.nrows() == 0 {
        return Err(RedsError::InvalidConfig(format!(
            "embedding is {}x{}, generator output dim is {}",
            embedding.nrows(),
            embedding.ncols(),
            generator.output_dim()
        )));
    }
    let e = Arc::new(embedding);
    let g = generator.clone();
    let ee = Arc::clone(&e);
    let mut map = FeatureMap::new("embed", generator.latent_dim(), e.nrows(), move |z| {
        (&*ee * g.eval_unchecked(z)).map(f64::tanh)
    })?;
    if generator.has_analytic_jacobian() {
        let g = generator.clone();
        map = map.with_jacobian(move |z| {
            let y = (&*e * g.eval_unchecked(z)).map(f64::tanh);
            let mut j = &*e * g.analytic_jacobian(z).expect("checked");
            for (mut row, yi) in j.row_iter_mut().zip(y.iter()) {
                row *= 1.0 - yi * yi;
            }
            j
        });
    }
    Ok(map)
}

/// A frozen random embedding standing in for a recognition network:
/// `tanh(E g(z))` with `E_ij ~ N(0, 1) / sqrt(output_dim)` drawn from `embed_seed`.
pub fn linear_embed_feature(generator: &FeatureMap, embed_seed: u64, embed_dim: usize) -> Result<FeatureMap> {
    if embed_dim == 0 {
        return Err(RedsError::InvalidConfig("embed_dim must be at least 1".into()));
    }
    let m = generator.output_dim();
    let e = rng::normal_matrix(&mut rng::seeded(embed_seed), embed_dim, m, 1.0 / (m as f64).sqrt());
    linear_embed_with_matrix(generator, e)
}

/// `wᵀ g(z) + b` for explicit weights.
pub fn scalar_attribute_with(generator: &FeatureMap, weights: DVector<f64>, bias: f64) -> Result<FeatureMap> {
    if weights.len() != generator.output_dim() {
        return Err(RedsError::InvalidConfig(format!(
            "attribute weights have length {}, generator output dim is {}",
            weights.len(),
            generator.output_dim()
        )));
    }
    let w = Arc::new(weights);
    let g = generator.clone();
    let ww = Arc::clone(&w);
    let mut map = FeatureMap::new("attribute", generator.latent_dim(), 1, move |z| {
        DVector::from_element(1, ww.dot(&g.eval_unchecked(z)) + bias)
    })?;
    if generator.has_analytic_jacobian() {
        let g = generator.clone();
        map = map.with_jacobian(move |z| {
            let row = w.transpose() * g.analytic_jacobian(z).expect("checked");
            DMatrix::from_iterator(1, row.len(), row.iter().copied())
        });
    }
    Ok(map)
}

/// A scalar attribute: a fixed random linear functional of the generator
/// output, `w ~ N(0, 1) / sqrt(output_dim)`, `b ~ N(0, 0.1^2)`.
pub fn scalar_attribute_feature(generator: &FeatureMap, weight_seed: u64) -> Result<FeatureMap> {
    let m = generator.output_dim();
    let mut r = rng::seeded(weight_seed);
    let w = rng::normal_vector(&mut r, m) / (m as f64).sqrt();
    let b = 0.1 * rng::standard_normal(&mut r);
    scalar_attribute_with(generator, w, b)
}

/// `M g(z)` for a fixed matrix `M`.
pub fn linear_feature(generator: &FeatureMap, matrix: DMatrix<f64>) -> Result<FeatureMap> {
    if matrix.ncols() != generator.output_dim() || matrix.nrows() == 0 {
        return Err(RedsError::InvalidConfig(format!(
            "linear feature matrix is {}x{}, generator output dim is {}",
            matrix.nrows(),
            matrix.ncols(),
            generator.output_dim()
        )));
    }
    let m = Arc::new(matrix);
    let g = generator.clone();
    let mm = Arc::clone(&m);
    let mut map = FeatureMap::new("linear", generator.latent_dim(), m.nrows(), move |z| &*mm * g.eval_unchecked(z))?;
    if generator.has_analytic_jacobian() {
        let g = generator.clone();
        map = map.with_jacobian(move |z| &*m * g.analytic_jacobian(z).expect("checked"));
    }
    Ok(map)
}

/// `||g(z)||^2` as a one-dimensional feature.
pub fn squared_norm_feature(generator: &FeatureMap) -> Result<FeatureMap> {
    let g = generator.clone();
    let mut map = FeatureMap::new("squared-norm", generator.latent_dim(), 1, move |z| {
        DVector::from_element(1, g.eval_unchecked(z).norm_squared())
    })?;
    if generator.has_analytic_jacobian() {
        let g = generator.clone();
        map = map.with_jacobian(move |z| {
            let row = 2.0 * g.eval_unchecked(z).transpose() * g.analytic_jacobian(z).expect("checked");
            DMatrix::from_iterator(1, row.len(), row.iter().copied())
        });
    }
    Ok(map)
}

/// Outputs of `maps` stacked in list order.
pub fn concat_features(maps: &[FeatureMap]) -> Result<FeatureMap> {
    let first = maps
        .first()
        .ok_or_else(|| RedsError::InvalidConfig("cannot concatenate an empty feature list".into()))?;
    let d = first.latent_dim();
    if let Some(m) = maps.iter().find(|m| m.latent_dim() != d) {
        return Err(RedsError::InvalidConfig(format!(
            "feature `{}` has latent dim {}, expected {d}",
            m.name(),
            m.latent_dim()
        )));
    }
    let total: usize = maps.iter().map(FeatureMap::output_dim).sum();
    let parts: Arc<Vec<FeatureMap>> = Arc::new(maps.to_vec());
    let p = Arc::clone(&parts);
    let mut map = FeatureMap::new("concat", d, total, move |z| {
        let mut out = Vec::with_capacity(total);
        for m in p.iter() {
            out.extend(m.eval_unchecked(z).iter());
        }
        DVector::from_vec(out)
    })?;
    if parts.iter().all(FeatureMap::has_analytic_jacobian) {
        map = map.with_jacobian(move |z| {
            let mut j = DMatrix::zeros(total, d);
            let mut r = 0;
            for m in parts.iter() {
                let block = m.analytic_jacobian(z).expect("checked");
                j.rows_mut(r, block.nrows()).copy_from(&block);
                r += block.nrows();
            }
            j
        });
    }
    Ok(map)
}

/// Serializable description of a feature applied on top of the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FeatureSpec {
    Raw {},
    Region {
        x0: usize,
        y0: usize,
        x1: usize,
        y1: usize,
        polarity: Polarity,
    },
    Band {
        sigma: f64,
        band: Band,
    },
    LinearEmbed {
        seed: u64,
        embed_dim: usize,
    },
    ScalarAttribute {
        seed: u64,
    },
    /// Explicit matrix, row-major.
    Linear {
        matrix: Vec<Vec<f64>>,
    },
    RandomLinear {
        seed: u64,
        output_dim: usize,
    },
    SquaredNorm {},
    Concat {
        parts: Vec<FeatureSpec>,
    },
}

impl FeatureSpec {
    pub fn build(&self, generator: &FeatureMap) -> Result<FeatureMap> {
        match self {
            Self::Raw {} => Ok(raw_feature(generator)),
            Self::Region { x0, y0, x1, y1, polarity } => {
                region_feature(generator, RegionMask::new(*x0, *y0, *x1, *y1, *polarity))
            }
            Self::Band { sigma, band } => band_feature(generator, BandSplit { sigma: *sigma, band: *band }),
            Self::LinearEmbed { seed, embed_dim } => linear_embed_feature(generator, *seed, *embed_dim),
            Self::ScalarAttribute { seed } => scalar_attribute_feature(generator, *seed),
            Self::Linear { matrix } => linear_feature(generator, matrix_from_rows(matrix)?),
            Self::RandomLinear { seed, output_dim } => {
                let m = generator.output_dim();
                let mat = rng::normal_matrix(&mut rng::seeded(*seed), *output_dim, m, 1.0 / (m as f64).sqrt());
                linear_feature(generator, mat)
            }
            Self::SquaredNorm {} => squared_norm_feature(generator),
            Self::Concat { parts } => {
                let maps = parts.iter().map(|p| p.build(generator)).collect::<Result<Vec<_>>>()?;
                concat_features(&maps)
            }
        }
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(RedsError::InvalidConfig("matrix must be a non-empty list of equal-length rows".into()));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(RedsError::InvalidConfig("matrix has non-finite entries".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
