//! Linear vs projection traversal on the sphere `||z||² = const`.
//!
//! A straight line leaves the sphere quadratically in arc length. Projection
//! traversal re-solves at every step and stays close to it.

use reds::eval::loglog_slope;
use reds::testbeds::{self, EXACT_BETA_FIXED};
use reds::traversal::{seed_points, traverse_seeds, Method, TraversalConfig};

fn main() -> reds::Result<()> {
    let bed = testbeds::sphere(8)?;
    let seeds = seed_points(8, 10, 0);
    let base = TraversalConfig { beta_f: vec![EXACT_BETA_FIXED], step: 0.05, length: 20, ..Default::default() };

    let mut curves = Vec::new();
    for method in [Method::Linear, Method::Projection] {
        let config = TraversalConfig { method, ..base.clone() };
        let paths = traverse_seeds(&bed.fixed, &bed.changing, &seeds, &config)?;
        let dy: Vec<f64> = (1..=config.length)
            .map(|i| {
                paths.iter().map(|t| (t.points[i].norm_squared() - t.points[0].norm_squared()).abs()).sum::<f64>()
                    / paths.len() as f64
            })
            .collect();
        curves.push((method, dy));
    }

    let arc: Vec<f64> = (1..=20).map(|i| i as f64 * 0.05).collect();
    println!("{:>6}  {:>12}  {:>12}", "arc", "linear |dy|", "projection");
    for i in (0..20).step_by(4).chain([19]) {
        println!("{:>6.2}  {:>12.3e}  {:>12.3e}", arc[i], curves[0].1[i], curves[1].1[i]);
    }
    let fit = loglog_slope(&arc, &curves[0].1)?;
    println!("linear log-log slope: {:.3}", fit.slope);
    Ok(())
}
