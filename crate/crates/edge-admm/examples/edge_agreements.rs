//! Graph, edge agreements and the stacked operators for the four-agent layout.
use edge_admm::graph::{
    check_consistency, check_well_configured, edge_residual_w1, incidence, stack_operators, EdgeAgreement, Graph,
};
use nalgebra::{DMatrix, DVector};

fn main() -> edge_admm::Result<()> {
    let graph = Graph::from_one_based(4, &[(1, 2), (2, 3), (3, 1), (3, 4)])?;
    println!("incidence H:\n{}", incidence(&graph));

    let b = [[0.0, 3.0], [-2.6, -1.5], [2.6, -1.5], [-3.0, 0.0]];
    let agreements = graph
        .edges()
        .iter()
        .zip(b)
        .map(|(&(i, j), b)| EdgeAgreement::new(i, j, DMatrix::identity(2, 2), DVector::from_row_slice(&b)))
        .collect::<edge_admm::Result<Vec<_>>>()?;

    // a rank-one agreement only constrains one direction
    let partial = EdgeAgreement::new(0, 1, DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_element(1, 2.0))?;
    println!("rank-one projector P:\n{}", partial.p());
    println!("b_bar = {:?}", partial.b_bar().as_slice());
    println!("reversed orientation b = {:?}", partial.reversed().b().as_slice());

    let ops = stack_operators(&graph, &agreements, 2)?;
    println!("L = H_bar^T P_bar H_bar:\n{}", ops.laplacian());
    println!("orientation check: {}", check_consistency(&agreements));
    println!("rank check: {:?}", check_well_configured(&ops));

    // positions that meet every agreement
    let x: Vec<DVector<f64>> =
        [[-3.0, 1.0], [-3.0, -2.0], [-0.4, -0.5], [2.6, -0.5]].iter().map(|p| DVector::from_row_slice(p)).collect();
    println!("W1 at a feasible configuration: {:.3e}", edge_residual_w1(&x, &agreements));
    Ok(())
}
