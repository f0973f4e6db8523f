//! Local objectives and the per-agent x-update.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub const SMOOTH_GRAD_TOL: f64 = 1e-10;
pub const SMOOTH_MAX_ITERS: usize = 500;
const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;

/// A convex, differentiable function given by value and gradient.
pub trait SmoothFunction: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
}

/// `f(x) = x^T Q x + q^T x + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    q_mat: DMatrix<f64>,
    q: DVector<f64>,
    c: f64,
}

impl Quadratic {
    pub fn new(q_mat: DMatrix<f64>, q: DVector<f64>, c: f64) -> Result<Self> {
        let n = q.len();
        if q_mat.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "Q is {:?}, q has length {n}",
                q_mat.shape()
            )));
        }
        if (&q_mat - q_mat.transpose()).amax() > 1e-12 {
            return Err(Error::InvalidParameter("Q must be symmetric".into()));
        }
        if n > 0 && q_mat.clone().symmetric_eigen().eigenvalues.min() < -1e-10 {
            return Err(Error::InvalidParameter("Q must be positive semidefinite".into()));
        }
        Ok(Self { q_mat, q, c })
    }

    /// `||x - center||^2`.
    pub fn shifted_norm(center: &DVector<f64>) -> Self {
        let n = center.len();
        Self { q_mat: DMatrix::identity(n, n), q: -2.0 * center, c: center.norm_squared() }
    }

    pub fn q_mat(&self) -> &DMatrix<f64> {
        &self.q_mat
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

impl SmoothFunction for Quadratic {
    fn dim(&self) -> usize {
        self.q.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.q_mat * x)) + self.q.dot(x) + self.c
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        2.0 * (&self.q_mat * x) + &self.q
    }
}

/// `f(x) = sum_k exp(x_k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpSum {
    pub n: usize,
}

impl SmoothFunction for ExpSum {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        x.iter().map(|v| v.exp()).sum()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(f64::exp)
    }
}

#[derive(Debug, Clone)]
pub enum LocalObjective {
    Quadratic(Quadratic),
    Smooth(Arc<dyn SmoothFunction>),
}

impl LocalObjective {
    pub fn smooth(f: impl SmoothFunction + 'static) -> Self {
        LocalObjective::Smooth(Arc::new(f))
    }

    pub fn dim(&self) -> usize {
        match self {
            LocalObjective::Quadratic(q) => q.dim(),
            LocalObjective::Smooth(f) => f.dim(),
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            LocalObjective::Quadratic(q) => q.value(x),
            LocalObjective::Smooth(f) => f.value(x),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            LocalObjective::Quadratic(q) => q.gradient(x),
            LocalObjective::Smooth(f) => f.gradient(x),
        }
    }
}

/// One neighbor's contribution to agent i's x-update.
#[derive(Debug, Clone, Copy)]
pub struct NeighborTerm<'a> {
    pub p: &'a DMatrix<f64>,
    /// `b_bar_ij` oriented from agent i.
    pub b_bar: &'a DVector<f64>,
    pub x_j: &'a DVector<f64>,
    /// Multiplier paired with this edge in the linear term `m^T P (x - x_j - b_bar)`.
    pub multiplier: &'a DVector<f64>,
}

/// Everything agent i needs for
/// `min f(x) + lambda^T x + rho_z/2 ||x - z||^2
///  + sum_j [ m_j^T P_ij (x - x_j - b_bar_ij) + rho_edge/2 ||P_ij (x - x_j - b_bar_ij)||^2 ]`.
#[derive(Debug, Clone)]
pub struct SubproblemData<'a> {
    pub objective: &'a LocalObjective,
    pub z: &'a DVector<f64>,
    pub lambda: &'a DVector<f64>,
    pub neighbors: Vec<NeighborTerm<'a>>,
    pub rho_z: f64,
    pub rho_edge: f64,
}

impl SubproblemData<'_> {
    fn validate(&self) -> Result<()> {
        if !(self.rho_z > 0.0 && self.rho_edge > 0.0) {
            return Err(Error::InvalidParameter("penalties must be positive".into()));
        }
        let n = self.objective.dim();
        let ok = self.z.len() == n
            && self.lambda.len() == n
            && self.neighbors.iter().all(|t| {
                t.p.shape() == (n, n)
                    && t.b_bar.len() == n
                    && t.x_j.len() == n
                    && t.multiplier.len() == n
            });
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch("subproblem data sizes disagree".into()))
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let mut v = self.objective.value(x)
            + self.lambda.dot(x)
            + 0.5 * self.rho_z * (x - self.z).norm_squared();
        for t in &self.neighbors {
            let r = t.p * (x - t.x_j - t.b_bar);
            v += t.multiplier.dot(&r) + 0.5 * self.rho_edge * r.norm_squared();
        }
        v
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.objective.gradient(x) + self.lambda + self.rho_z * (x - self.z);
        for t in &self.neighbors {
            g += t.p * (t.multiplier + self.rho_edge * (x - t.x_j - t.b_bar));
        }
        g
    }

    /// Right-hand side of the quadratic normal equations, without the `-q` term.
    fn linear_rhs(&self) -> DVector<f64> {
        let mut rhs = -self.lambda + self.rho_z * self.z;
        for t in &self.neighbors {
            rhs += t.p * (self.rho_edge * (t.x_j + t.b_bar) - t.multiplier);
        }
        rhs
    }
}

/// Factored system `2Q + rho_z I + rho_edge sum_j P_ij` for repeated quadratic x-updates.
#[derive(Debug, Clone)]
pub struct QuadraticSystem {
    q: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl QuadraticSystem {
    pub fn new(f: &Quadratic, projectors: &[&DMatrix<f64>], rho_z: f64, rho_edge: f64) -> Result<Self> {
        let n = f.dim();
        let mut m = 2.0 * f.q_mat() + DMatrix::identity(n, n) * rho_z;
        for p in projectors {
            m += *p * rho_edge;
        }
        let chol = m.cholesky().ok_or(Error::SingularSystem)?;
        Ok(Self { q: f.q().clone(), chol })
    }

    pub fn solve(&self, data: &SubproblemData<'_>) -> DVector<f64> {
        self.chol.solve(&(data.linear_rhs() - &self.q))
    }
}

/// Returns the unique minimizer of the x-update objective.
pub fn solve_x_update(data: &SubproblemData<'_>, warm: Option<&DVector<f64>>) -> Result<DVector<f64>> {
    data.validate()?;
    match data.objective {
        LocalObjective::Quadratic(f) => {
            let ps: Vec<&DMatrix<f64>> = data.neighbors.iter().map(|t| t.p).collect();
            Ok(QuadraticSystem::new(f, &ps, data.rho_z, data.rho_edge)?.solve(data))
        }
        LocalObjective::Smooth(_) => {
            let x0 = warm.unwrap_or(data.z).clone();
            let (x, g) = minimize_smooth(
                |x| data.value(x),
                |x| data.gradient(x),
                x0,
                SMOOTH_GRAD_TOL,
                SMOOTH_MAX_ITERS,
            );
            if g > 1e-8 * (1.0 + x.norm()) {
                return Err(Error::NotConverged { iterations: SMOOTH_MAX_ITERS, residual: g });
            }
            Ok(x)
        }
    }
}

/// Gradient descent with Armijo backtracking and a Barzilai-Borwein trial step.
/// Returns the final point and its gradient infinity-norm.
pub(crate) fn minimize_smooth(
    value: impl Fn(&DVector<f64>) -> f64,
    gradient: impl Fn(&DVector<f64>) -> DVector<f64>,
    x0: DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> (DVector<f64>, f64) {
    let mut x = x0;
    let mut fx = value(&x);
    let mut g = gradient(&x);
    let mut t = 1.0 / (1.0 + g.amax());
    for _ in 0..max_iters {
        let gnorm = g.amax();
        if gnorm < tol || !gnorm.is_finite() {
            break;
        }
        let gg = g.norm_squared();
        let mut step = t;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x - step * &g;
            let fxn = value(&xn);
            if fxn <= fx - ARMIJO_C * step * gg {
                accepted = Some((xn, fxn));
                break;
            }
            // near the optimum the value difference is rounding noise; judge the
            // step by the curvature seen in the gradient change instead
            if (fxn - fx).abs() <= 1e-12 * (1.0 + fx.abs()) {
                let s = &xn - &x;
                let curvature = (gradient(&xn) - &g).dot(&s) / s.norm_squared().max(f64::MIN_POSITIVE);
                if curvature * step <= 1.9 {
                    accepted = Some((xn, fxn));
                    break;
                }
            }
            step *= SHRINK;
        }
        let Some((xn, fxn)) = accepted else { break };
        let gn = gradient(&xn);
        let s = &xn - &x;
        let yv = &gn - &g;
        let sy = s.dot(&yv);
        t = if sy > 0.0 { s.norm_squared() / sy } else { step * 2.0 };
        x = xn;
        fx = fxn;
        g = gn;
    }
    let gnorm = g.amax();
    (x, gnorm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn lone<'a>(f: &'a LocalObjective, z: &'a DVector<f64>, lam: &'a DVector<f64>) -> SubproblemData<'a> {
        SubproblemData { objective: f, z, lambda: lam, neighbors: vec![], rho_z: 5.0, rho_edge: 5.0 }
    }

    #[test]
    fn norm_objective_at_origin() {
        let f = LocalObjective::Quadratic(Quadratic::shifted_norm(&v(&[0.0, 0.0])));
        let z = v(&[0.0, 0.0]);
        let x = solve_x_update(&lone(&f, &z, &z.clone()), None).unwrap();
        assert!(x.amax() < 1e-15);
    }

    #[test]
    fn shifted_norm_meets_z() {
        let f = LocalObjective::Quadratic(Quadratic::shifted_norm(&v(&[2.0, 2.0])));
        let z = v(&[2.0, 2.0]);
        let lam = v(&[0.0, 0.0]);
        let x = solve_x_update(&lone(&f, &z, &lam), None).unwrap();
        assert!((x - v(&[2.0, 2.0])).amax() < 1e-12);
    }

    #[test]
    fn quadratic_validation() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert!(Quadratic::new(asym, v(&[0.0, 0.0]), 0.0).is_err());
        let neg = DMatrix::from_row_slice(1, 1, &[-1.0]);
        assert!(Quadratic::new(neg, v(&[0.0]), 0.0).is_err());
        assert!(Quadratic::new(DMatrix::identity(2, 2), v(&[0.0]), 0.0).is_err());
    }

    #[test]
    fn bad_penalty_is_rejected() {
        let f = LocalObjective::smooth(ExpSum { n: 1 });
        let z = v(&[0.0]);
        let mut d = lone(&f, &z, &z);
        d.rho_z = 0.0;
        assert!(matches!(solve_x_update(&d, None), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn minimize_smooth_on_scalar_quadratic() {
        let (x, g) = minimize_smooth(|x| (x[0] - 3.0).powi(2), |x| v(&[2.0 * (x[0] - 3.0)]), v(&[0.0]), 1e-12, 100);
        assert!((x[0] - 3.0).abs() < 1e-12);
        assert!(g < 1e-12);
    }
}
