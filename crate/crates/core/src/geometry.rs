//! Central-difference Jacobians and per-point Gram matrices.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{RedsError, Result};
use crate::features::FeatureMap;
use crate::spectral::GramMatrix;

/// A Jacobian `∂map/∂z`, rows = feature dim, columns = latent dim.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianMatrix {
    matrix: DMatrix<f64>,
    /// Step used for finite differences; `None` for analytic Jacobians.
    fd_step: Option<f64>,
}

impl JacobianMatrix {
    pub fn analytic(matrix: DMatrix<f64>) -> Self {
        Self { matrix, fd_step: None }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn fd_step(&self) -> Option<f64> {
        self.fd_step
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

/// `1e-3 * (1 + ||z|| / sqrt(d))`: tracks the latent scale of the point.
pub fn default_fd_step(z: &DVector<f64>) -> f64 {
    1e-3 * (1.0 + z.norm() / (z.len() as f64).sqrt())
}

fn check_step(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 {
        Ok(())
    } else {
        Err(RedsError::InvalidInput(format!("finite-difference step must be positive, got {eps}")))
    }
}

/// Central differences: column `j` is `(map(z + eps e_j) - map(z - eps e_j)) / 2 eps`.
///
/// The `2d` probes run in parallel and are reduced in index order, so the
/// result does not depend on scheduling.
pub fn fd_jacobian(map: &FeatureMap, z: &DVector<f64>, eps: f64) -> Result<JacobianMatrix> {
    check_step(eps)?;
    let d = map.latent_dim();
    if z.len() != d {
        return Err(RedsError::InvalidInput(format!(
            "feature `{}` expects latent dim {d}, got {}",
            map.name(),
            z.len()
        )));
    }
    let columns: Vec<DVector<f64>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let mut plus = z.clone();
            plus[j] += eps;
            let mut minus = z.clone();
            minus[j] -= eps;
            let signed = j as i64 + 1;
            let fp = map.evaluate_probe(&plus, Some(signed))?;
            let fm = map.evaluate_probe(&minus, Some(-signed))?;
            Ok((fp - fm) / (2.0 * eps))
        })
        .collect::<Result<_>>()?;
    Ok(JacobianMatrix { matrix: DMatrix::from_columns(&columns), fd_step: Some(eps) })
}

/// `JᵀJ`, symmetrized.
pub fn gram(jacobian: &JacobianMatrix) -> GramMatrix {
    GramMatrix::from_jacobian(&jacobian.matrix)
}

/// All Gram matrices needed for one REDs solve at `point`.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    pub point: DVector<f64>,
    pub fixed_grams: Vec<GramMatrix>,
    pub changing_gram: GramMatrix,
    pub fd_step: f64,
    /// Feature values at `point`, one per fixed map.
    pub base_fixed: Vec<DVector<f64>>,
    pub base_changing: DVector<f64>,
    /// Number of map evaluations spent, base points included.
    pub evaluations: usize,
}

impl LocalGeometry {
    pub fn dim(&self) -> usize {
        self.point.len()
    }
}

/// Assembles one Gram per fixed map plus the changing Gram at `z`.
/// `eps = None` selects [`default_fd_step`].
pub fn local_geometry(
    fixed: &[FeatureMap],
    changing: &FeatureMap,
    z: &DVector<f64>,
    eps: Option<f64>,
) -> Result<LocalGeometry> {
    let d = z.len();
    if let Some(m) = fixed.iter().chain(std::iter::once(changing)).find(|m| m.latent_dim() != d) {
        return Err(RedsError::InvalidInput(format!(
            "feature `{}` has latent dim {}, point has {d}",
            m.name(),
            m.latent_dim()
        )));
    }
    let eps = eps.unwrap_or_else(|| default_fd_step(z));
    let mut fixed_grams = Vec::with_capacity(fixed.len());
    let mut base_fixed = Vec::with_capacity(fixed.len());
    for m in fixed {
        base_fixed.push(m.evaluate(z)?);
        fixed_grams.push(gram(&fd_jacobian(m, z, eps)?));
    }
    let base_changing = changing.evaluate(z)?;
    let changing_gram = gram(&fd_jacobian(changing, z, eps)?);
    Ok(LocalGeometry {
        point: z.clone(),
        fixed_grams,
        changing_gram,
        fd_step: eps,
        base_fixed,
        base_changing,
        evaluations: (fixed.len() + 1) * (2 * d + 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{linear_embed_feature, linear_feature, raw_feature};
    use crate::generators::{analytic_jacobian, build_generator, GeneratorSpec};
    use crate::rng;
    use approx::assert_relative_eq;

    fn quadratic_pair() -> FeatureMap {
        FeatureMap::new("pair", 2, 2, |z| DVector::from_vec(vec![z[0] * z[0], z[0] * z[1]])).unwrap()
    }

    #[test]
    fn affine_maps_are_exact() {
        let m = rng::normal_matrix(&mut rng::seeded(1), 3, 5, 1.0);
        let g = build_generator(&GeneratorSpec::identity(5)).unwrap();
        let f = linear_feature(&g, m.clone()).unwrap();
        let j = fd_jacobian(&f, &rng::normal_vector(&mut rng::seeded(2), 5), 1e-3).unwrap();
        assert!((j.matrix() - &m).amax() < 1e-12);
        assert_eq!(j.fd_step(), Some(1e-3));
    }

    #[test]
    fn quadratic_map_at_one_two() {
        let j = fd_jacobian(&quadratic_pair(), &DVector::from_vec(vec![1.0, 2.0]), 1e-3).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 2.0, 1.0]);
        assert!((j.matrix() - expected).amax() < 1e-10);
    }

    #[test]
    fn tanh_mlp_matches_chain_rule() {
        let spec = GeneratorSpec::SmoothMlp { latent_dim: 8, hidden: vec![16], output_dim: 12, seed: 11 };
        let g = build_generator(&spec).unwrap();
        let z = rng::normal_vector(&mut rng::seeded(3), 8);
        let exact = analytic_jacobian(&spec, &z).unwrap();
        let fd = fd_jacobian(&g, &z, 1e-4).unwrap();
        let rel = (fd.matrix() - exact.matrix()).amax() / exact.matrix().amax();
        assert!(rel <= 1e-6, "relative error {rel}");
    }

    #[test]
    fn non_finite_output_reports_probe() {
        let f = FeatureMap::new("log", 2, 1, |z| DVector::from_element(1, (z[1] + 1e-3).ln())).unwrap();
        let err = fd_jacobian(&f, &DVector::from_vec(vec![0.0, 0.0]), 2e-3).unwrap_err();
        match err {
            RedsError::Evaluation { map, perturbation, .. } => {
                assert_eq!(map, "log");
                assert_eq!(perturbation, Some(-2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_step_and_dims() {
        let f = quadratic_pair();
        assert!(fd_jacobian(&f, &DVector::zeros(2), 0.0).is_err());
        assert!(fd_jacobian(&f, &DVector::zeros(3), 1e-3).is_err());
    }

    #[test]
    fn gram_examples() {
        let g = gram(&JacobianMatrix::analytic(DMatrix::identity(3, 3)));
        assert_eq!(g.as_matrix(), &DMatrix::<f64>::identity(3, 3));
        let g = gram(&JacobianMatrix::analytic(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0])));
        assert_eq!(g.as_matrix(), &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn random_gram_is_psd() {
        let j = rng::normal_matrix(&mut rng::seeded(8), 5, 12, 1.0);
        let g = gram(&JacobianMatrix::analytic(j));
        assert!(g.spectrum().min_eigenvalue() >= -1e-12);
    }

    #[test]
    fn scaled_map_scales_gram_quadratically() {
        let spec = GeneratorSpec::SmoothMlp { latent_dim: 6, hidden: vec![10], output_dim: 7, seed: 2 };
        let g = build_generator(&spec).unwrap();
        let alpha = 3.0;
        let gg = g.clone();
        let scaled = FeatureMap::new("scaled", 6, 7, move |z| gg.eval_unchecked(z) * alpha).unwrap();
        let z = rng::normal_vector(&mut rng::seeded(4), 6);
        let a = gram(&fd_jacobian(&g, &z, 1e-3).unwrap());
        let b = gram(&fd_jacobian(&scaled, &z, 1e-3).unwrap());
        assert_relative_eq!(b.as_matrix(), &(a.as_matrix() * alpha * alpha), max_relative = 1e-10, epsilon = 1e-14);
    }

    #[test]
    fn local_geometry_without_constraints() {
        let g = build_generator(&GeneratorSpec::identity(5)).unwrap();
        let z = rng::normal_vector(&mut rng::seeded(1), 5);
        let geo = local_geometry(&[], &raw_feature(&g), &z, None).unwrap();
        assert!(geo.fixed_grams.is_empty());
        assert!((geo.changing_gram.as_matrix() - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
        assert_eq!(geo.evaluations, 11);
        assert_eq!(geo.fd_step, default_fd_step(&z));
    }

    #[test]
    fn local_geometry_linear_constraint() {
        let b = rng::normal_matrix(&mut rng::seeded(6), 2, 8, 1.0);
        let g = build_generator(&GeneratorSpec::identity(8)).unwrap();
        let f = linear_feature(&g, b.clone()).unwrap();
        let z = rng::normal_vector(&mut rng::seeded(2), 8);
        let geo = local_geometry(&[f], &raw_feature(&g), &z, Some(1e-2)).unwrap();
        assert!((geo.fixed_grams[0].as_matrix() - b.transpose() * &b).amax() < 1e-12);
        assert_eq!(geo.base_changing, z);
    }

    #[test]
    fn parallel_geometry_matches_sequential_recomputation() {
        let spec = GeneratorSpec::SmoothMlp { latent_dim: 16, hidden: vec![12], output_dim: 32, seed: 3 };
        let g = build_generator(&spec).unwrap();
        let fixed = linear_embed_feature(&g, 5, 12).unwrap();
        let changing = raw_feature(&g);
        let z = rng::normal_vector(&mut rng::seeded(9), 16);
        let eps = 1e-3;
        let geo = local_geometry(std::slice::from_ref(&fixed), &changing, &z, Some(eps)).unwrap();

        let sequential = |m: &FeatureMap| {
            let mut j = DMatrix::zeros(m.output_dim(), 16);
            for k in 0..16 {
                let mut p = z.clone();
                p[k] += eps;
                let mut q = z.clone();
                q[k] -= eps;
                j.set_column(k, &((m.eval_unchecked(&p) - m.eval_unchecked(&q)) / (2.0 * eps)));
            }
            GramMatrix::from_jacobian(&j)
        };
        let bits = |a: &DMatrix<f64>| a.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(geo.fixed_grams[0].as_matrix()), bits(sequential(&fixed).as_matrix()));
        assert_eq!(bits(geo.changing_gram.as_matrix()), bits(sequential(&changing).as_matrix()));
    }
}
