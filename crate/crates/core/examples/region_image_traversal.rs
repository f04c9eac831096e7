//! Editing an image everywhere except inside a box.
//!
//! Writes `region_strip.pgm` (seed image on the left, ten projection steps
//! to the right) to the current directory and reports how much the box moved
//! compared with the rest of the image.

use reds::generators::ImageBuffer;
use reds::testbeds::{self, EXACT_BETA_FIXED, REGION_BOX, REGION_LATENT_DIM};
use reds::traversal::{seed_points, traverse, Method, TraversalConfig};

fn main() -> reds::Result<()> {
    let bed = testbeds::blob_region(REGION_LATENT_DIM, 1)?;
    let shape = bed.generator.image_shape().expect("blob generator is image-valued");
    let config = TraversalConfig {
        beta_f: vec![EXACT_BETA_FIXED],
        beta_c: 0.99,
        step: 0.25,
        length: 10,
        method: Method::Projection,
        ..Default::default()
    };
    let z0 = seed_points(REGION_LATENT_DIM, 1, 0).remove(0);
    let t = traverse(&bed.fixed, &bed.changing, &z0, 0, 0, &config, None)?;

    let frames = t
        .points
        .iter()
        .map(|z| ImageBuffer::from_vector(shape, &bed.generator.evaluate(z)?))
        .collect::<reds::Result<Vec<_>>>()?;
    std::fs::write("region_strip.pgm", ImageBuffer::hstack(&frames)?.to_pgm())?;

    let (x0, y0, x1, y1) = REGION_BOX;
    let (first, last) = (&frames[0], frames.last().unwrap());
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for y in 0..shape.height {
        for x in 0..shape.width {
            let d = (last.intensity(x, y) - first.intensity(x, y)).abs();
            if (x0..x1).contains(&x) && (y0..y1).contains(&y) { inside.push(d) } else { outside.push(d) }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("status {:?}, fallbacks {}", t.status, t.fallbacks);
    println!("mean |change| inside the box  {:.2e}", mean(&inside));
    println!("mean |change| outside the box {:.2e}", mean(&outside));
    println!("wrote region_strip.pgm ({} frames)", frames.len());
    Ok(())
}
