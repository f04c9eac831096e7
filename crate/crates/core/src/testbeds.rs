//! Ready-made generator and feature combinations.

use nalgebra::DMatrix;

use crate::error::{RedsError, Result};
use crate::features::{FeatureMap, FeatureSpec, Polarity};
use crate::generators::{build_generator, GeneratorSpec};
use crate::rng;

/// A generator with its fixed and changing features.
#[derive(Debug, Clone)]
pub struct Testbed {
    pub generator_spec: GeneratorSpec,
    pub generator: FeatureMap,
    pub fixed: Vec<FeatureMap>,
    pub changing: FeatureMap,
}

impl Testbed {
    /// Builds every feature on top of the generator and names it.
    pub fn from_specs(
        generator_spec: &GeneratorSpec,
        fixed: &[(String, FeatureSpec)],
        changing: &(String, FeatureSpec),
    ) -> Result<Self> {
        let generator = build_generator(generator_spec)?;
        let build = |(name, spec): &(String, FeatureSpec)| -> Result<FeatureMap> {
            Ok(spec.build(&generator)?.renamed(name.clone()))
        };
        let fixed = fixed.iter().map(build).collect::<Result<Vec<_>>>()?;
        let changing = build(changing)?;
        let mut names: Vec<&str> = fixed.iter().map(FeatureMap::name).chain([changing.name()]).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(RedsError::InvalidConfig("feature names must be unique".into()));
        }
        Ok(Self { generator_spec: generator_spec.clone(), generator, fixed, changing })
    }

    pub fn latent_dim(&self) -> usize {
        self.generator.latent_dim()
    }

    pub fn fixed_names(&self) -> Vec<String> {
        self.fixed.iter().map(|f| f.name().to_string()).collect()
    }
}

fn named(name: &str, spec: FeatureSpec) -> (String, FeatureSpec) {
    (name.to_string(), spec)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub const STANDARD_LATENT_DIM: usize = 16;

/// `beta_f` that keeps every nonzero eigenvalue of an exact (affine)
/// constraint, so the truncated nullspace is the true nullspace.
pub const EXACT_BETA_FIXED: f64 = 1.0 - 1e-9;

/// tanh-MLP generator `16 -> 12 -> 32` (seed 3); fixed = 12-dim nonlinear
/// embedding of the output ("identity"), changing = the raw output ("pixels").
pub fn standard_generator_spec() -> GeneratorSpec {
    GeneratorSpec::SmoothMlp { latent_dim: STANDARD_LATENT_DIM, hidden: vec![12], output_dim: 32, seed: 3 }
}

pub fn standard_features() -> (Vec<(String, FeatureSpec)>, (String, FeatureSpec)) {
    (
        vec![named("identity", FeatureSpec::LinearEmbed { seed: 1003, embed_dim: 12 })],
        named("pixels", FeatureSpec::Raw {}),
    )
}

pub fn standard() -> Result<Testbed> {
    let (fixed, changing) = standard_features();
    Testbed::from_specs(&standard_generator_spec(), &fixed, &changing)
}

/// Identity generator on `R^d`, fixed `f(z) = B z` with a seeded Gaussian
/// `B` of shape `rows x d`, changing = `z`.
pub fn flat_linear(latent_dim: usize, rows_b: usize, seed: u64) -> Result<(Testbed, DMatrix<f64>)> {
    let b = rng::normal_matrix(&mut rng::seeded(seed), rows_b, latent_dim, 1.0);
    let bed = Testbed::from_specs(
        &GeneratorSpec::identity(latent_dim),
        &[named("constraint", FeatureSpec::Linear { matrix: rows(&b) })],
        &named("latent", FeatureSpec::Raw {}),
    )?;
    Ok((bed, b))
}

/// Identity generator, fixed `||z||²`, changing `z`.
pub fn sphere(latent_dim: usize) -> Result<Testbed> {
    Testbed::from_specs(
        &GeneratorSpec::identity(latent_dim),
        &[named("radius", FeatureSpec::SquaredNorm {})],
        &named("latent", FeatureSpec::Raw {}),
    )
}

/// Two independent linear constraints of the given row counts.
pub fn multi_constraint(latent_dim: usize, rows_a: usize, rows_b: usize, seed: u64) -> Result<(Testbed, [DMatrix<f64>; 2])> {
    let mut r = rng::seeded(seed);
    let a = rng::normal_matrix(&mut r, rows_a, latent_dim, 1.0);
    let b = rng::normal_matrix(&mut r, rows_b, latent_dim, 1.0);
    let bed = Testbed::from_specs(
        &GeneratorSpec::identity(latent_dim),
        &[
            named("first", FeatureSpec::Linear { matrix: rows(&a) }),
            named("second", FeatureSpec::Linear { matrix: rows(&b) }),
        ],
        &named("latent", FeatureSpec::Raw {}),
    )?;
    Ok((bed, [a, b]))
}

/// Latent dimension of the region testbed: enough independent blobs that
/// the box constraint leaves a useful nullspace.
pub const REGION_LATENT_DIM: usize = 32;

/// The 8x8 box around the center of a 32x32 image.
pub const REGION_BOX: (usize, usize, usize, usize) = (12, 12, 20, 20);

/// Blob image generator; fixed = pixels inside [`REGION_BOX`], changing =
/// every other pixel.
pub fn blob_region(latent_dim: usize, seed: u64) -> Result<Testbed> {
    let (x0, y0, x1, y1) = REGION_BOX;
    Testbed::from_specs(
        &GeneratorSpec::blob_image(latent_dim, seed),
        &[named("box", FeatureSpec::Region { x0, y0, x1, y1, polarity: Polarity::Inside })],
        &named("surround", FeatureSpec::Region { x0, y0, x1, y1, polarity: Polarity::Outside }),
    )
}

/// `A_f = diag(1, 0, 0, 0)` and `A_c = diag(0, 3, 2, 1)` at every point.
pub fn diagonal() -> Result<Testbed> {
    let s = |v: f64| v.sqrt();
    Testbed::from_specs(
        &GeneratorSpec::identity(4),
        &[named("first-axis", FeatureSpec::Linear { matrix: vec![vec![1.0, 0.0, 0.0, 0.0]] })],
        &named(
            "weighted",
            FeatureSpec::Linear {
                matrix: vec![
                    vec![0.0, s(3.0), 0.0, 0.0],
                    vec![0.0, 0.0, s(2.0), 0.0],
                    vec![0.0, 0.0, 0.0, 1.0],
                ],
            },
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::local_geometry;
    use nalgebra::DVector;

    #[test]
    fn standard_shapes() {
        let t = standard().unwrap();
        assert_eq!(t.latent_dim(), 16);
        assert_eq!(t.fixed[0].output_dim(), 12);
        assert_eq!(t.changing.output_dim(), 32);
        assert_eq!(t.fixed_names(), vec!["identity"]);
    }

    #[test]
    fn diagonal_grams() {
        let t = diagonal().unwrap();
        let geo = local_geometry(&t.fixed, &t.changing, &DVector::from_element(4, 0.3), None).unwrap();
        let expected_c = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 3.0, 2.0, 1.0]));
        assert!((geo.changing_gram.as_matrix() - expected_c).amax() < 1e-12);
        assert!((geo.fixed_grams[0].as_matrix()[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn region_testbed_partitions_the_image() {
        let t = blob_region(16, 1).unwrap();
        assert_eq!(t.fixed[0].output_dim() + t.changing.output_dim(), 1024);
        assert_eq!(t.fixed[0].output_dim(), 64);
    }

    #[test]
    fn duplicate_names_rejected() {
        let r = Testbed::from_specs(
            &GeneratorSpec::identity(3),
            &[named("x", FeatureSpec::Raw {})],
            &named("x", FeatureSpec::SquaredNorm {}),
        );
        assert!(r.is_err());
    }
}
