//! REDs on a problem small enough to solve by hand.
//!
//! `A_f = diag(1, 0, 0, 0)` forbids moving along the first axis and
//! `A_c = diag(0, 3, 2, 1)` rewards the second axis most, so the top RED is
//! `e_1` and the full span is `{e_1, e_2, e_3}` ordered by reward.

use nalgebra::DVector;
use reds::spectral::{compute_reds, GramMatrix, RankMode};

fn main() -> reds::Result<()> {
    let a_f = GramMatrix::from_diagonal(&[1.0, 0.0, 0.0, 0.0])?;
    let a_c = GramMatrix::from_diagonal(&[0.0, 3.0, 2.0, 1.0])?;

    for beta_c in [0.5, 0.9, 0.999] {
        let r = compute_reds(std::slice::from_ref(&a_f), &a_c, &[0.99], beta_c, RankMode::Squared)?;
        println!("beta_c = {beta_c}: {} RED(s), status {:?}", r.basis.rank(), r.status);
        for j in 0..r.basis.rank() {
            let v = r.basis.column(j);
            println!("  v{j} = {:?}  vᵀA_cv = {:.3}", v.as_slice(), a_c.quadratic_form(&v));
        }
    }

    let off_axis = DVector::from_vec(vec![0.6, 0.8, 0.0, 0.0]);
    println!("a feasible-looking direction that leaks into the fixed axis: vᵀA_fv = {:.2}", a_f.quadratic_form(&off_axis));
    Ok(())
}
