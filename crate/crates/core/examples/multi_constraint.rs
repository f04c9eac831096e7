//! Preserving two features at once: the feasible directions are the
//! intersection of both nullspaces.

use reds::geometry::local_geometry;
use reds::testbeds::{self, EXACT_BETA_FIXED};
use reds::traversal::{reds_at, seed_points, TraversalConfig};

fn main() -> reds::Result<()> {
    let (bed, [a, b]) = testbeds::multi_constraint(16, 2, 3, 31)?;
    let z = seed_points(16, 1, 0).remove(0);
    let geometry = local_geometry(&bed.fixed, &bed.changing, &z, None)?;

    for (label, beta_f) in [("second loosened", vec![EXACT_BETA_FIXED, 1e-12]), ("both", vec![EXACT_BETA_FIXED; 2])] {
        let config = TraversalConfig { beta_f, ..Default::default() };
        let reds = reds_at(&geometry, &config)?;
        let v = reds.basis.column(0);
        println!(
            "{label:>15}: nullspace dim {:>2}, fixed ranks {:?}, |A v| = {:.1e}, |B v| = {:.1e}",
            reds.nullspace.rank(),
            reds.fixed_ranks,
            (&a * &v).norm(),
            (&b * &v).norm()
        );
    }
    Ok(())
}
