//! Five direction choices on the standard testbed, five paths of five steps
//! from each of 50 seeds. Lower fixed drift is better; higher changing
//! distance is better.

use reds::eval::{compare_methods, MethodSpec};
use reds::experiment::svg::{loglog_chart, Series};
use reds::testbeds;
use reds::traversal::{seed_points, TraversalConfig};

fn main() -> reds::Result<()> {
    let bed = testbeds::standard()?;
    let base = TraversalConfig { beta_f: vec![0.99], beta_c: 0.999, step: 0.1, length: 5, ..Default::default() };
    let seeds = seed_points(bed.latent_dim(), 50, 0);
    let methods = ["reds-lin", "reds-proj", "random", "max-dx", "min-dy"]
        .iter()
        .map(|m| m.parse())
        .collect::<reds::Result<Vec<MethodSpec>>>()?;
    let report = compare_methods(&bed.fixed, &bed.changing, &seeds, &base, &methods)?;

    println!("{:<10} {:>16} {:>16}", "method", "log10 dy² @5", "log10 dx² @5");
    for run in &report.runs {
        let a = run.at_step(5).expect("five steps");
        println!("{:<10} {:>16.3} {:>16.3}", run.spec.name(), a.mean_log10_sq_dy[0], a.mean_log10_sq_dx);
    }
    for d in report.dominance.iter().filter(|d| d.a.starts_with("reds") && d.a_dominates) {
        println!("{} dominates {}", d.a, d.b);
    }

    let series: Vec<Series> = report
        .runs
        .iter()
        .map(|r| Series { label: r.spec.name().into(), points: r.aggregates.iter().map(|a| (a.mean_sq_dy[0], a.mean_sq_dx)).collect() })
        .collect();
    std::fs::write("method_comparison.svg", loglog_chart("standard testbed", "dy²", "dx²", &series))?;
    println!("wrote method_comparison.svg");
    Ok(())
}
