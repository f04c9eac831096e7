//! Keep the coarse layout, change the fine texture.
//!
//! The fixed feature is the Gaussian-blurred image, the changing feature is
//! what the blur removes. The top RED should concentrate on the latent
//! coordinates that drive the texture.

use reds::features::{Band, FeatureSpec};
use reds::generators::{GeneratorSpec, TEXTURE_FREQUENCY_COORD, TEXTURE_PHASE_COORD};
use reds::geometry::local_geometry;
use reds::testbeds::Testbed;
use reds::traversal::{reds_at, seed_points, TraversalConfig};

fn main() -> reds::Result<()> {
    let bed = Testbed::from_specs(
        &GeneratorSpec::blob_image(16, 4),
        &[("coarse".into(), FeatureSpec::Band { sigma: 2.0, band: Band::Low })],
        &("fine".into(), FeatureSpec::Band { sigma: 2.0, band: Band::High }),
    )?;
    let config = TraversalConfig { beta_f: vec![0.99], beta_c: 0.99, ..Default::default() };
    for z in seed_points(16, 3, 5) {
        let reds = reds_at(&local_geometry(&bed.fixed, &bed.changing, &z, None)?, &config)?;
        let v = reds.basis.column(0);
        let texture = v[TEXTURE_PHASE_COORD].powi(2) + v[TEXTURE_FREQUENCY_COORD].powi(2);
        println!(
            "nullspace dim {:>2}, {} RED(s); top RED puts {:.0}% of its weight on the texture coordinates",
            reds.nullspace.rank(),
            reds.basis.rank(),
            100.0 * texture
        );
    }
    Ok(())
}
