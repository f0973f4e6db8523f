//! One agent's x-update: closed form for a quadratic, gradient method for a smooth objective.
use edge_admm::subproblem::{solve_x_update, ExpSum, LocalObjective, NeighborTerm, Quadratic, SubproblemData};
use nalgebra::{DMatrix, DVector};

fn main() -> edge_admm::Result<()> {
    let p = DMatrix::<f64>::identity(2, 2);
    let b_bar = DVector::from_row_slice(&[0.0, 3.0]);
    let x_j = DVector::from_row_slice(&[1.0, -1.0]);
    let mult = DVector::from_row_slice(&[0.2, -0.1]);
    let z = DVector::from_row_slice(&[0.5, 0.5]);
    let lambda = DVector::zeros(2);

    let objectives = [
        ("quadratic", LocalObjective::Quadratic(Quadratic::shifted_norm(&DVector::from_row_slice(&[2.0, -2.0])))),
        ("exp-sum", LocalObjective::smooth(ExpSum { n: 2 })),
    ];
    for (name, f) in &objectives {
        let data = SubproblemData {
            objective: f,
            z: &z,
            lambda: &lambda,
            neighbors: vec![NeighborTerm { p: &p, b_bar: &b_bar, x_j: &x_j, multiplier: &mult }],
            rho_z: 5.0,
            rho_edge: 5.0,
        };
        let x = solve_x_update(&data, None)?;
        println!(
            "{name:>9}: x = {:.10?}  objective {:.10}  gradient norm {:.2e}",
            x.as_slice(),
            data.value(&x),
            data.gradient(&x).norm()
        );
    }
    Ok(())
}
