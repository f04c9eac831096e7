//! Central differences against the analytic Jacobian of a tanh MLP.
//!
//! The error shrinks by about 4x per halving of the step until rounding
//! takes over, the signature of a second-order scheme.

use reds::generators::{analytic_jacobian, build_generator, GeneratorSpec};
use reds::geometry::{default_fd_step, fd_jacobian};
use reds::traversal::seed_points;

fn main() -> reds::Result<()> {
    let spec = GeneratorSpec::SmoothMlp { latent_dim: 8, hidden: vec![16, 32, 24], output_dim: 10, seed: 11 };
    let g = build_generator(&spec)?;
    let z = seed_points(8, 1, 42).remove(0);
    let exact = analytic_jacobian(&spec, &z)?.into_matrix();

    println!("{:>10}  {:>12}  {:>8}", "eps", "rel. error", "ratio");
    let mut prev: Option<f64> = None;
    for k in 0..12 {
        let eps = 0.1 / 2f64.powi(k);
        let fd = fd_jacobian(&g, &z, eps)?;
        let err = (fd.matrix() - &exact).amax() / exact.amax();
        let ratio = prev.map_or(String::new(), |p| format!("{:.3}", p / err));
        println!("{eps:>10.3e}  {err:>12.3e}  {ratio:>8}");
        prev = Some(err);
    }
    println!("default step at this point: {:.3e}", default_fd_step(&z));
    Ok(())
}
