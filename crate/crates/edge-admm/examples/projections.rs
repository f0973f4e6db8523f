//! Projections onto boxes and box-affine slices; Dykstra against the interior-point route.
use std::time::Instant;

use edge_admm::sets::{ConvexSet, SliceMethod};
use nalgebra::{DMatrix, DVector};

fn main() -> edge_admm::Result<()> {
    let bx = ConvexSet::uniform_box(3, -1.0, 1.0)?;
    let v = DVector::from_row_slice(&[2.0, -0.3, -5.0]);
    println!("box projection of {:?} = {:.6?}", v.as_slice(), bx.project(&v)?.as_slice());

    // sum of coordinates fixed to 1.5 inside the box
    let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
    let b = DVector::from_element(1, 1.5);
    let dyk = ConvexSet::affine_slice(bx.clone(), a.clone(), b.clone())?;
    let ipm = ConvexSet::affine_slice_with(bx, a, b, SliceMethod::InteriorPoint)?;
    for (name, set) in [("dykstra", &dyk), ("interior point", &ipm)] {
        let t = Instant::now();
        let p = set.project(&v)?;
        println!(
            "{name:>15}: {:.12?}  sum {:.12}  in set {}  ({:?})",
            p.as_slice(),
            p.sum(),
            set.contains(&p, 1e-9),
            t.elapsed()
        );
    }

    // a thin slice of a larger box, where Dykstra needs many sweeps
    let n = 40;
    let bx = ConvexSet::uniform_box(n, 0.0, 1.0)?;
    let a = DMatrix::from_fn(5, n, |r, c| if c % 5 == r { 1.0 } else { 1e-3 * (r + c) as f64 });
    let b = DVector::from_element(5, 3.0);
    let v = DVector::from_fn(n, |k, _| (k as f64 * 0.7).sin() * 2.0);
    let dyk = ConvexSet::affine_slice(bx.clone(), a.clone(), b.clone())?;
    let ipm = ConvexSet::affine_slice_with(bx, a, b, SliceMethod::InteriorPoint)?;
    let t = Instant::now();
    let pd = dyk.project(&v)?;
    let td = t.elapsed();
    let t = Instant::now();
    let pi = ipm.project(&v)?;
    let ti = t.elapsed();
    println!("n = {n}: dykstra {td:?}, interior point {ti:?}, max difference {:.3e}", (&pd - &pi).amax());
    Ok(())
}
