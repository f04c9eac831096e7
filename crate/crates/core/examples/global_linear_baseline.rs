//! The global-linear baseline: regress each scalar attribute on the latent
//! code, then remove the fixed attributes' directions from the changing one.

use nalgebra::DMatrix;
use reds::features::{linear_feature, FeatureSpec};
use reds::generators::{build_generator, GeneratorSpec};
use reds::rng;
use reds::traversal::global_linear_direction;

fn main() -> reds::Result<()> {
    let d = 16;
    let g = build_generator(&GeneratorSpec::identity(d))?;
    let mut r = rng::seeded(3);
    let w = rng::normal_vector(&mut r, d);
    let u = rng::normal_vector(&mut r, d);
    let attribute = linear_feature(&g, DMatrix::from_row_slice(1, d, w.as_slice()))?;
    let fixed = linear_feature(&g, DMatrix::from_row_slice(1, d, u.as_slice()))?;

    let v = global_linear_direction(&attribute, std::slice::from_ref(&fixed), 2000, &mut rng::seeded(4))?;
    println!("cos(v, w)        = {:.4}", v.dot(&w) / w.norm());
    println!("v · u / |u|      = {:.1e}", v.dot(&u) / u.norm());

    // The same baseline on a nonlinear generator only sees the average slope.
    let mlp = build_generator(&GeneratorSpec::SmoothMlp { latent_dim: d, hidden: vec![24], output_dim: 20, seed: 9 })?;
    let a = FeatureSpec::ScalarAttribute { seed: 1 }.build(&mlp)?;
    let b = FeatureSpec::ScalarAttribute { seed: 2 }.build(&mlp)?;
    let v = global_linear_direction(&a, &[b], 2000, &mut rng::seeded(5))?;
    println!("MLP attribute direction (first 4 coords): {:.3?}", &v.as_slice()[..4]);
    Ok(())
}
