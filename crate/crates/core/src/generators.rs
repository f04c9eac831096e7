//! Deterministic toy generators.
//!
//! Each [`GeneratorSpec`] fully determines a smooth function of the latent
//! point: parameters are drawn from a seeded ChaCha8 stream, so the same spec
//! yields the same function on every run and platform. Construction uses only
//! affine maps, products, `tanh`, Gaussian kernels and sinusoids, so every
//! output is C-infinity in `z`.

use std::io::Write;
use std::ops::Deref;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{RedsError, Result};
use crate::features::{matrix_from_rows, FeatureMap};
use crate::geometry::JacobianMatrix;
use crate::rng;

/// A point in the latent space: `d >= 2` finite coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPoint(DVector<f64>);

impl LatentPoint {
    pub fn new(coords: DVector<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(RedsError::InvalidInput(format!("latent dimension must be >= 2, got {}", coords.len())));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(RedsError::InvalidInput("latent point has non-finite coordinates".into()));
        }
        Ok(Self(coords))
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(coords))
    }

    /// Standard-normal draw.
    pub fn sample<R: rand::Rng + ?Sized>(rng: &mut R, dim: usize) -> Result<Self> {
        Self::new(rng::normal_vector(rng, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for LatentPoint {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels }
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major image with channels interleaved, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub shape: ImageShape,
    pub values: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(shape: ImageShape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(RedsError::InvalidInput(format!(
                "image buffer has {} values, shape needs {}",
                values.len(),
                shape.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn from_vector(shape: ImageShape, v: &DVector<f64>) -> Result<Self> {
        Self::new(shape, v.iter().copied().collect())
    }

    pub fn pixel(&self, x: usize, y: usize, channel: usize) -> f64 {
        self.values[(y * self.shape.width + x) * self.shape.channels + channel]
    }

    /// Mean over channels.
    pub fn intensity(&self, x: usize, y: usize) -> f64 {
        (0..self.shape.channels).map(|c| self.pixel(x, y, c)).sum::<f64>() / self.shape.channels as f64
    }

    /// Intensity-weighted centroid `(x, y)` in pixel units.
    pub fn centroid(&self) -> (f64, f64) {
        let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
        for y in 0..self.shape.height {
            for x in 0..self.shape.width {
                let v = self.intensity(x, y);
                sx += v * x as f64;
                sy += v * y as f64;
                s += v;
            }
        }
        (sx / s, sy / s)
    }

    /// Binary PGM (P5, maxval 255). Values are clamped to `[0, 1]` and rounded
    /// half-up; multi-channel images are averaged to gray.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.shape.width, self.shape.height)?;
        let mut bytes = Vec::with_capacity(self.shape.width * self.shape.height);
        for y in 0..self.shape.height {
            for x in 0..self.shape.width {
                bytes.push(to_byte(self.intensity(x, y)));
            }
        }
        out.write_all(&bytes)
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_pgm(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Concatenates equally sized frames left to right.
    pub fn hstack(frames: &[ImageBuffer]) -> Result<Self> {
        let first = frames.first().ok_or_else(|| RedsError::InvalidInput("no frames to stack".into()))?;
        let s = first.shape;
        if frames.iter().any(|f| f.shape != s) {
            return Err(RedsError::InvalidInput("frames differ in shape".into()));
        }
        let shape = ImageShape::new(s.width * frames.len(), s.height, s.channels);
        let mut values = Vec::with_capacity(shape.len());
        for y in 0..s.height {
            for f in frames {
                let row = y * s.width * s.channels;
                values.extend_from_slice(&f.values[row..row + s.width * s.channels]);
            }
        }
        Self::new(shape, values)
    }
}

fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum QuadraticForm {
    /// `g(z) = ||z||^2`.
    Sphere {},
    /// `g_k(z) = 0.5 zᵀ Q_k z + b_kᵀ z` with seeded symmetric `Q_k`.
    Random { output_dim: usize, seed: u64 },
}

fn default_image_side() -> usize {
    32
}

fn default_channels() -> usize {
    1
}

/// A complete, serializable generator description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GeneratorSpec {
    /// `g(z) = M z`. `M` is taken from `matrix` if given, otherwise drawn from
    /// `seed` with shape `output_dim x latent_dim`, otherwise the identity.
    Linear {
        latent_dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        output_dim: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        matrix: Option<Vec<Vec<f64>>>,
    },
    Quadratic {
        latent_dim: usize,
        form: QuadraticForm,
    },
    /// tanh MLP: `latent_dim -> hidden... -> output_dim`, linear output layer.
    SmoothMlp {
        latent_dim: usize,
        hidden: Vec<usize>,
        output_dim: usize,
        seed: u64,
    },
    /// Procedural image of Gaussian blobs, a background gradient and a
    /// sinusoidal texture.
    BlobImage {
        latent_dim: usize,
        #[serde(default = "default_image_side")]
        width: usize,
        #[serde(default = "default_image_side")]
        height: usize,
        #[serde(default = "default_channels")]
        channels: usize,
        seed: u64,
    },
}

impl GeneratorSpec {
    pub fn identity(latent_dim: usize) -> Self {
        Self::Linear { latent_dim, output_dim: None, seed: None, matrix: None }
    }

    pub fn blob_image(latent_dim: usize, seed: u64) -> Self {
        Self::BlobImage { latent_dim, width: 32, height: 32, channels: 1, seed }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Self::Linear { latent_dim, .. }
            | Self::Quadratic { latent_dim, .. }
            | Self::SmoothMlp { latent_dim, .. }
            | Self::BlobImage { latent_dim, .. } => *latent_dim,
        }
    }

    pub fn is_image(&self) -> bool {
        matches!(self, Self::BlobImage { .. })
    }
}

/// Builds the generator as a feature map (images are flattened row-major).
pub fn build_generator(spec: &GeneratorSpec) -> Result<FeatureMap> {
    let d = spec.latent_dim();
    if d < 2 {
        return Err(RedsError::InvalidConfig(format!("latent_dim must be >= 2, got {d}")));
    }
    match spec {
        GeneratorSpec::Linear { .. } => {
            let m = Arc::new(linear_matrix(spec)?);
            let mm = Arc::clone(&m);
            Ok(FeatureMap::new("linear", d, m.nrows(), move |z| &*mm * z)?.with_jacobian(move |_| (*m).clone()))
        }
        GeneratorSpec::Quadratic { form, .. } => {
            let q = Arc::new(Quadratic::new(d, form)?);
            let qq = Arc::clone(&q);
            Ok(FeatureMap::new("quadratic", d, q.output_dim(), move |z| qq.eval(z))?.with_jacobian(move |z| q.jacobian(z)))
        }
        GeneratorSpec::SmoothMlp { hidden, output_dim, seed, .. } => {
            let net = Arc::new(Mlp::new(d, hidden, *output_dim, *seed)?);
            let n = Arc::clone(&net);
            Ok(FeatureMap::new("smooth-mlp", d, *output_dim, move |z| n.forward(z))?.with_jacobian(move |z| net.jacobian(z)))
        }
        GeneratorSpec::BlobImage { width, height, channels, seed, .. } => {
            let blob = Arc::new(BlobImage::new(d, *width, *height, *channels, *seed)?);
            let shape = blob.shape();
            let b = Arc::clone(&blob);
            FeatureMap::new("blob-image", d, shape.len(), move |z| DVector::from_vec(b.render_values(z)))?
                .with_image_shape(shape)
        }
    }
}

/// Exact Jacobian via the chain rule. Not available for blob images.
pub fn analytic_jacobian(spec: &GeneratorSpec, z: &DVector<f64>) -> Result<JacobianMatrix> {
    if spec.is_image() {
        return Err(RedsError::Unsupported(
            "blob-image generators have no analytic Jacobian; use finite differences".into(),
        ));
    }
    if z.len() != spec.latent_dim() {
        return Err(RedsError::InvalidInput(format!(
            "latent point has dimension {}, generator expects {}",
            z.len(),
            spec.latent_dim()
        )));
    }
    let g = build_generator(spec)?;
    Ok(JacobianMatrix::analytic(g.analytic_jacobian(z)?))
}

fn linear_matrix(spec: &GeneratorSpec) -> Result<DMatrix<f64>> {
    let GeneratorSpec::Linear { latent_dim, output_dim, seed, matrix } = spec else {
        unreachable!("linear spec")
    };
    let d = *latent_dim;
    if let Some(rows) = matrix {
        let m = matrix_from_rows(rows)?;
        if m.ncols() != d || output_dim.is_some_and(|k| k != m.nrows()) {
            return Err(RedsError::InvalidConfig(format!(
                "linear matrix is {}x{}, expected {} columns",
                m.nrows(),
                m.ncols(),
                d
            )));
        }
        return Ok(m);
    }
    match (output_dim, seed) {
        (Some(k), Some(s)) if *k > 0 => Ok(rng::normal_matrix(&mut rng::seeded(*s), *k, d, 1.0 / (d as f64).sqrt())),
        (None, None) => Ok(DMatrix::identity(d, d)),
        _ => Err(RedsError::InvalidConfig(
            "linear generator needs `matrix`, or both `output_dim` and `seed`, or neither (identity)".into(),
        )),
    }
}

struct Quadratic {
    /// `None` means the sphere `||z||^2`.
    forms: Option<Vec<(DMatrix<f64>, DVector<f64>)>>,
}

impl Quadratic {
    fn new(d: usize, form: &QuadraticForm) -> Result<Self> {
        match form {
            QuadraticForm::Sphere {} => Ok(Self { forms: None }),
            QuadraticForm::Random { output_dim, seed } => {
                if *output_dim == 0 {
                    return Err(RedsError::InvalidConfig("quadratic output_dim must be >= 1".into()));
                }
                let mut r = rng::seeded(*seed);
                let scale = 1.0 / (d as f64).sqrt();
                let forms = (0..*output_dim)
                    .map(|_| {
                        let a = rng::normal_matrix(&mut r, d, d, scale);
                        let q = (&a + a.transpose()) * 0.5;
                        let b = rng::normal_vector(&mut r, d) * scale;
                        (q, b)
                    })
                    .collect();
                Ok(Self { forms: Some(forms) })
            }
        }
    }

    fn output_dim(&self) -> usize {
        self.forms.as_ref().map_or(1, Vec::len)
    }

    fn eval(&self, z: &DVector<f64>) -> DVector<f64> {
        match &self.forms {
            None => DVector::from_element(1, z.norm_squared()),
            Some(forms) => DVector::from_iterator(forms.len(), forms.iter().map(|(q, b)| 0.5 * z.dot(&(q * z)) + b.dot(z))),
        }
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        match &self.forms {
            None => DMatrix::from_iterator(1, z.len(), z.iter().map(|x| 2.0 * x)),
            Some(forms) => {
                let mut j = DMatrix::zeros(forms.len(), z.len());
                for (k, (q, b)) in forms.iter().enumerate() {
                    j.set_row(k, &(q * z + b).transpose());
                }
                j
            }
        }
    }
}

/// tanh MLP with weights `N(0, 1) / sqrt(fan_in)` and biases `N(0, 0.1^2)`.
struct Mlp {
    layers: Vec<(DMatrix<f64>, DVector<f64>)>,
}

impl Mlp {
    fn new(d: usize, hidden: &[usize], output_dim: usize, seed: u64) -> Result<Self> {
        if output_dim == 0 || hidden.contains(&0) {
            return Err(RedsError::InvalidConfig("MLP layer widths must be positive".into()));
        }
        let mut r = rng::seeded(seed);
        let mut widths = vec![d];
        widths.extend_from_slice(hidden);
        widths.push(output_dim);
        let layers = widths
            .windows(2)
            .map(|w| {
                let weights = rng::normal_matrix(&mut r, w[1], w[0], 1.0 / (w[0] as f64).sqrt());
                let bias = rng::normal_vector(&mut r, w[1]) * 0.1;
                (weights, bias)
            })
            .collect();
        Ok(Self { layers })
    }

    fn forward(&self, z: &DVector<f64>) -> DVector<f64> {
        let last = self.layers.len() - 1;
        let mut h = z.clone();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = w * h + b;
            if i < last {
                h.apply(|x| *x = x.tanh());
            }
        }
        h
    }

    fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let last = self.layers.len() - 1;
        let mut h = z.clone();
        let mut j = DMatrix::identity(z.len(), z.len());
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = w * h + b;
            j = w * j;
            if i < last {
                h.apply(|x| *x = x.tanh());
                for (mut row, hk) in j.row_iter_mut().zip(h.iter()) {
                    row *= 1.0 - hk * hk;
                }
            }
        }
        j
    }
}

/// Latent layout (coordinates beyond the first eight are optional):
///
/// | coords | controls |
/// |--------|----------|
/// | 0, 1   | central blob center offset (x, y) |
/// | 2      | central blob radius |
/// | 3      | central blob amplitude |
/// | 4, 5   | background slope (x, y) |
/// | 6      | texture phase |
/// | 7      | texture frequency |
/// | 8..    | extra blobs, four coords each (dx, dy, radius, amplitude) |
/// | rest   | amplitudes of seeded low-frequency cosine patterns |
///
/// Pixels are `sigmoid(pre-activation)`, so values stay in `(0, 1)` without
/// the zero-gradient plateaus of hard clipping.
#[derive(Debug, Clone)]
pub struct BlobImage {
    latent_dim: usize,
    shape: ImageShape,
    extra_blobs: Vec<(f64, f64)>,
    patterns: Vec<(f64, f64, f64)>,
    tints: Vec<f64>,
}

pub const TEXTURE_PHASE_COORD: usize = 6;
pub const TEXTURE_FREQUENCY_COORD: usize = 7;
pub const BLOB_CENTER_X_COORD: usize = 0;
pub const BLOB_CENTER_Y_COORD: usize = 1;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl BlobImage {
    pub fn new(latent_dim: usize, width: usize, height: usize, channels: usize, seed: u64) -> Result<Self> {
        if latent_dim < 8 {
            return Err(RedsError::InvalidConfig(format!("blob-image needs latent_dim >= 8, got {latent_dim}")));
        }
        if width < 8 || height < 8 {
            return Err(RedsError::InvalidConfig(format!("blob-image must be at least 8x8, got {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(RedsError::InvalidConfig(format!("blob-image channels must be 1 or 3, got {channels}")));
        }
        let mut r = rng::seeded(seed);
        let uniform = |r: &mut rng::StreamRng, lo: f64, hi: f64| lo + (hi - lo) * rand::Rng::random::<f64>(r);
        let n_extra = (latent_dim - 8) / 4;
        let extra_blobs = (0..n_extra).map(|_| (uniform(&mut r, 0.2, 0.8), uniform(&mut r, 0.2, 0.8))).collect();
        let n_patterns = latent_dim - 8 - 4 * n_extra;
        let patterns = (0..n_patterns)
            .map(|_| {
                let kx = if uniform(&mut r, 0.0, 1.0) < 0.5 { 1.0 } else { 2.0 };
                let ky = if uniform(&mut r, 0.0, 1.0) < 0.5 { 1.0 } else { 2.0 };
                (kx, ky, uniform(&mut r, 0.0, std::f64::consts::TAU))
            })
            .collect();
        let tints = if channels == 1 { vec![1.0] } else { vec![1.0, 0.8, 0.6] };
        Ok(Self { latent_dim, shape: ImageShape::new(width, height, channels), extra_blobs, patterns, tints })
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn render(&self, z: &DVector<f64>) -> ImageBuffer {
        ImageBuffer { shape: self.shape, values: self.render_values(z) }
    }

    fn render_values(&self, z: &DVector<f64>) -> Vec<f64> {
        use std::f64::consts::{PI, TAU};
        debug_assert_eq!(z.len(), self.latent_dim);
        let t = |i: usize| z[i].tanh();

        let mut blobs = vec![(0.5 + 0.25 * t(0), 0.5 + 0.25 * t(1), 0.15 * (0.4 * t(2)).exp(), 2.0 + t(3))];
        for (k, &(bx, by)) in self.extra_blobs.iter().enumerate() {
            let o = 8 + 4 * k;
            blobs.push((bx + 0.2 * t(o), by + 0.2 * t(o + 1), 0.1 * (0.4 * t(o + 2)).exp(), 1.0 + 0.6 * t(o + 3)));
        }
        let pattern_base = 8 + 4 * self.extra_blobs.len();
        let (slope_x, slope_y) = (0.8 * t(4), 0.8 * t(5));
        let phase = PI * z[TEXTURE_PHASE_COORD];
        let freq = 6.0 + 1.5 * t(TEXTURE_FREQUENCY_COORD);

        let (w, h) = (self.shape.width, self.shape.height);
        let mut values = Vec::with_capacity(self.shape.len());
        for y in 0..h {
            let v = (y as f64 + 0.5) / h as f64;
            for x in 0..w {
                let u = (x as f64 + 0.5) / w as f64;
                let mut pre = slope_x * (u - 0.5) + slope_y * (v - 0.5);
                for &(cx, cy, r, a) in &blobs {
                    let d2 = (u - cx).powi(2) + (v - cy).powi(2);
                    pre += a * (-d2 / (2.0 * r * r)).exp();
                }
                pre += 0.35 * (TAU * freq * (u + v) + phase).sin();
                for (k, &(kx, ky, ph)) in self.patterns.iter().enumerate() {
                    pre += 0.4 * t(pattern_base + k) * (TAU * (kx * u + ky * v) + ph).cos();
                }
                values.extend(self.tints.iter().map(|tint| sigmoid(tint * pre)));
            }
        }
        values
    }
}

/// Renders the blob generator described by `spec` at `z`.
pub fn blob_image_generator(spec: &GeneratorSpec, z: &LatentPoint) -> Result<ImageBuffer> {
    let GeneratorSpec::BlobImage { latent_dim, width, height, channels, seed } = spec else {
        return Err(RedsError::InvalidConfig("not a blob-image spec".into()));
    };
    if z.dim() != *latent_dim {
        return Err(RedsError::InvalidInput(format!("latent point has dimension {}, expected {latent_dim}", z.dim())));
    }
    Ok(BlobImage::new(*latent_dim, *width, *height, *channels, *seed)?.render(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{band_values, gaussian_kernel, Band};
    use crate::geometry::fd_jacobian;

    fn z(d: usize, seed: u64) -> DVector<f64> {
        rng::normal_vector(&mut rng::seeded(seed), d)
    }

    #[test]
    fn latent_point_invariants() {
        assert!(LatentPoint::from_slice(&[1.0]).is_err());
        assert!(LatentPoint::from_slice(&[1.0, f64::NAN]).is_err());
        assert_eq!(LatentPoint::from_slice(&[1.0, 2.0]).unwrap().dim(), 2);
    }

    #[test]
    fn identity_linear_generator() {
        let g = build_generator(&GeneratorSpec::identity(4)).unwrap();
        let p = z(4, 1);
        assert_eq!(g.evaluate(&p).unwrap(), p);
        let j = analytic_jacobian(&GeneratorSpec::identity(4), &p).unwrap();
        assert_eq!(j.matrix(), &DMatrix::<f64>::identity(4, 4));
    }

    #[test]
    fn linear_spec_validation() {
        let bad = GeneratorSpec::Linear { latent_dim: 3, output_dim: Some(2), seed: None, matrix: None };
        assert!(build_generator(&bad).is_err());
        let wrong_cols = GeneratorSpec::Linear { latent_dim: 3, output_dim: None, seed: None, matrix: Some(vec![vec![1.0, 2.0]]) };
        assert!(build_generator(&wrong_cols).is_err());
        assert!(build_generator(&GeneratorSpec::identity(1)).is_err());
    }

    #[test]
    fn sphere_value_and_jacobian() {
        let spec = GeneratorSpec::Quadratic { latent_dim: 2, form: QuadraticForm::Sphere {} };
        let g = build_generator(&spec).unwrap();
        let p = DVector::from_vec(vec![3.0, 4.0]);
        assert_eq!(g.evaluate(&p).unwrap()[0], 25.0);
        let j = analytic_jacobian(&spec, &p).unwrap();
        assert_eq!(j.matrix().as_slice(), &[6.0, 8.0]);
    }

    #[test]
    fn random_quadratic_jacobian_matches_fd() {
        let spec = GeneratorSpec::Quadratic { latent_dim: 5, form: QuadraticForm::Random { output_dim: 3, seed: 2 } };
        let g = build_generator(&spec).unwrap();
        let p = z(5, 3);
        let a = analytic_jacobian(&spec, &p).unwrap();
        let f = fd_jacobian(&g, &p, 1e-2).unwrap();
        assert!((a.matrix() - f.matrix()).amax() < 1e-12);
    }

    #[test]
    fn mlp_builds_are_bit_identical() {
        let spec = GeneratorSpec::SmoothMlp { latent_dim: 16, hidden: vec![32], output_dim: 24, seed: 11 };
        let a = build_generator(&spec).unwrap();
        let b = build_generator(&spec).unwrap();
        let mut r = rng::seeded(99);
        for _ in 0..100 {
            let p = rng::normal_vector(&mut r, 16);
            let (x, y) = (a.evaluate(&p).unwrap(), b.evaluate(&p).unwrap());
            assert!(x.iter().zip(y.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn blob_requires_image_capable_spec() {
        let spec = GeneratorSpec::blob_image(16, 1);
        assert!(matches!(analytic_jacobian(&spec, &z(16, 1)), Err(RedsError::Unsupported(_))));
        assert!(build_generator(&GeneratorSpec::blob_image(6, 1)).is_err());
        let tiny = GeneratorSpec::BlobImage { latent_dim: 8, width: 4, height: 32, channels: 1, seed: 1 };
        assert!(build_generator(&tiny).is_err());
    }

    #[test]
    fn blob_zero_latent_is_centered() {
        let spec = GeneratorSpec::blob_image(16, 5);
        let img = blob_image_generator(&spec, &LatentPoint::new(DVector::zeros(16)).unwrap()).unwrap();
        assert!(img.pixel(16, 16, 0) > img.pixel(0, 0, 0));
        assert!(img.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn blob_three_channels() {
        let spec = GeneratorSpec::BlobImage { latent_dim: 10, width: 16, height: 12, channels: 3, seed: 2 };
        let g = build_generator(&spec).unwrap();
        assert_eq!(g.output_dim(), 16 * 12 * 3);
        assert_eq!(g.image_shape(), Some(ImageShape::new(16, 12, 3)));
    }

    #[test]
    fn texture_phase_lives_in_the_high_band() {
        let spec = GeneratorSpec::blob_image(16, 3);
        let g = build_generator(&spec).unwrap();
        let shape = g.image_shape().unwrap();
        let k = gaussian_kernel(2.0).unwrap();
        for seed in 0..20 {
            let p = z(16, 100 + seed);
            let mut q = p.clone();
            q[TEXTURE_PHASE_COORD] += 0.05;
            let diff: Vec<f64> = (g.evaluate(&q).unwrap() - g.evaluate(&p).unwrap()).iter().copied().collect();
            let energy = |band| band_values(&diff, shape, &k, band).iter().map(|v| v * v).sum::<f64>();
            let (lo, hi) = (energy(Band::Low), energy(Band::High));
            assert!(hi >= 10.0 * lo, "seed {seed}: high {hi} low {lo}");
        }
    }

    #[test]
    fn blob_center_moves_centroid_monotonically() {
        let spec = GeneratorSpec::blob_image(16, 4);
        let g = build_generator(&spec).unwrap();
        let shape = g.image_shape().unwrap();
        let p = z(16, 7);
        let centroids: Vec<f64> = (0..=10)
            .map(|k| {
                let mut q = p.clone();
                q[BLOB_CENTER_X_COORD] += 0.01 * k as f64;
                ImageBuffer::from_vector(shape, &g.evaluate(&q).unwrap()).unwrap().centroid().0
            })
            .collect();
        assert!(centroids.windows(2).all(|w| w[1] > w[0]), "{centroids:?}");
    }

    #[test]
    fn pgm_encoding() {
        let img = ImageBuffer::new(ImageShape::new(3, 1, 1), vec![0.0, 0.5, 1.0]).unwrap();
        let bytes = img.to_pgm();
        let header = b"P5\n3 1\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        // 0.5 * 255 = 127.5 rounds half-up to 128
        assert_eq!(&bytes[header.len()..], &[0, 128, 255]);
    }

    #[test]
    fn hstack_layout() {
        let a = ImageBuffer::new(ImageShape::new(2, 2, 1), vec![0.0, 0.1, 0.2, 0.3]).unwrap();
        let b = ImageBuffer::new(ImageShape::new(2, 2, 1), vec![1.0, 0.9, 0.8, 0.7]).unwrap();
        let s = ImageBuffer::hstack(&[a, b]).unwrap();
        assert_eq!(s.shape, ImageShape::new(4, 2, 1));
        assert_eq!(s.values, vec![0.0, 0.1, 1.0, 0.9, 0.2, 0.3, 0.8, 0.7]);
    }

    #[test]
    fn spec_roundtrips_through_json() {
        let spec: GeneratorSpec = serde_json::from_str(r#"{"kind":"blob-image","latent_dim":16,"seed":3}"#).unwrap();
        assert_eq!(spec, GeneratorSpec::blob_image(16, 3));
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<GeneratorSpec>(&text).unwrap(), spec);
        assert!(serde_json::from_str::<GeneratorSpec>(r#"{"kind":"smooth-mlp","latent_dim":4,"hidden":[],"output_dim":2,"seed":1,"x":0}"#).is_err());
    }
}
