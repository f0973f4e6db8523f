//! Centralized reference machinery: the compact constraint form, a projected
//! gradient ground-truth solver, centralized ADMM, KKT residuals and the
//! Lyapunov bound and descent inequalities along centralized trajectories.

use std::io::Write;

use nalgebra::{DMatrix, DVector};

use crate::admm::{fmt_f64, ProblemSpec};
use crate::error::{Error, Result};
use crate::graph::{stack, stack_operators, unstack, StackedOperators, RANK_TOLERANCE};
use crate::sets::{box_affine_projection_multipliers, dykstra, ConvexSet, SliceMethod};
use crate::subproblem::{minimize_smooth, LocalObjective};

pub const PG_TOL: f64 = 1e-10;
pub const PG_MAX_ITERS: usize = 100_000;
/// Slack allowed on every bound or descent inequality.
pub const INEQUALITY_SLACK: f64 = 1e-8;

const PROJ_TOL: f64 = 1e-13;
const PROJ_MAX_SWEEPS: usize = 20_000;
const PROJ_ACCEPT: f64 = 1e-9;

/// `C x + D z = E` with `C = [I; L]`, `D = [-I; 0]`, `E = [0; H_bar^T P_bar b_bar]`
/// and `L = H_bar^T P_bar H_bar`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactForm {
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DVector<f64>,
}

impl CompactForm {
    pub fn residual(&self, x: &DVector<f64>, z: &DVector<f64>) -> DVector<f64> {
        &self.c * x + &self.d * z - &self.e
    }

    fn half(&self) -> usize {
        self.c.ncols()
    }

    /// `L = H_bar^T P_bar H_bar`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let k = self.half();
        self.c.rows(k, k).into_owned()
    }
}

pub fn build_compact_form(ops: &StackedOperators) -> CompactForm {
    let mn = ops.h_bar.ncols();
    let l = ops.laplacian();
    let mut c = DMatrix::zeros(2 * mn, mn);
    c.view_mut((0, 0), (mn, mn)).fill_with_identity();
    c.view_mut((mn, 0), (mn, mn)).copy_from(&l);
    let mut d = DMatrix::zeros(2 * mn, mn);
    d.view_mut((0, 0), (mn, mn)).copy_from(&(-DMatrix::<f64>::identity(mn, mn)));
    let mut e = DVector::zeros(2 * mn);
    e.rows_mut(mn, mn).copy_from(&(ops.h_bar.transpose() * &ops.p_bar * &ops.b_bar));
    CompactForm { c, d, e }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    /// `||C x + D z - E||`.
    pub feasibility: f64,
    /// Distance from `-(C^T + D^T) y - grad f(x)` to the normal cone of the sets at `z`.
    pub stationarity: f64,
}

/// Stacked primal-dual point; `y = [lambda; mu]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleCertificate {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    /// `sum_i f_i(x_i)`.
    pub objective: f64,
    pub kkt: KktReport,
}

impl SaddleCertificate {
    /// One row per stacked coordinate: `index, agent, x, z, lambda, mu`.
    pub fn write_csv<W: Write>(&self, out: W, n: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidParameter(format!("csv output: {e}"));
        w.write_record(["index", "agent", "x", "z", "lambda", "mu"]).map_err(io)?;
        let mn = self.x.len();
        for k in 0..mn {
            w.write_record([
                k.to_string(),
                (k / n + 1).to_string(),
                fmt_f64(self.x[k]),
                fmt_f64(self.z[k]),
                fmt_f64(self.y[k]),
                fmt_f64(self.y[mn + k]),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidParameter(format!("csv output: {e}")))
    }
}

/// Stacked-variable view of a [`ProblemSpec`].
#[derive(Debug, Clone)]
pub struct Centralized<'a> {
    spec: &'a ProblemSpec,
    pub ops: StackedOperators,
    pub compact: CompactForm,
    n: usize,
    /// Pseudo-inverse of `P_bar H_bar`, for projecting onto the agreement manifold.
    g_pinv: DMatrix<f64>,
    g: DMatrix<f64>,
    g_rhs: DVector<f64>,
    /// Boxes and all equality rows as one interior-point slice, when that builds.
    feasible: Option<StackedFeasible>,
}

impl<'a> Centralized<'a> {
    pub fn new(spec: &'a ProblemSpec) -> Result<Self> {
        let n = spec.dim();
        let ops = stack_operators(&spec.graph, &spec.agreements, n)?;
        let compact = build_compact_form(&ops);
        let g = &ops.p_bar * &ops.h_bar;
        let g_rhs = &ops.p_bar * &ops.b_bar;
        let g_pinv = pseudo_inverse(&g);
        let feasible = stacked_slice(spec, &g, &g_rhs);
        Ok(Self { spec, ops, compact, n, g_pinv, g, g_rhs, feasible })
    }

    pub fn spec(&self) -> &ProblemSpec {
        self.spec
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        self.spec.objective(&unstack(x, self.n))
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let blocks: Vec<DVector<f64>> = unstack(x, self.n)
            .iter()
            .zip(&self.spec.objectives)
            .map(|(xi, f)| f.gradient(xi))
            .collect();
        stack(&blocks)
    }

    /// Projection onto the product of the agents' sets.
    pub fn project_sets(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let blocks = unstack(v, self.n)
            .iter()
            .zip(&self.spec.sets)
            .map(|(vi, s)| s.project(vi))
            .collect::<Result<Vec<_>>>()?;
        Ok(stack(&blocks))
    }

    /// Projection onto `{x | P_bar (H_bar x - b_bar) = 0}`.
    pub fn project_manifold(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.g.nrows() == 0 {
            return v.clone();
        }
        v - &self.g_pinv * (&self.g * v - &self.g_rhs)
    }

    /// Projection onto the feasible set of the whole problem.
    pub fn project_feasible(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        // Dykstra stalls when the manifold meets a box face at a small angle
        if let Some(Ok(p)) = self.feasible.as_ref().map(|f| f.set.project(v)) {
            return Ok(p);
        }
        dykstra(
            |u| self.project_sets(u),
            |u| self.project_manifold(u),
            v,
            PROJ_TOL,
            PROJ_MAX_SWEEPS,
            PROJ_ACCEPT,
        )
        .map_err(|e| match e {
            Error::NotConverged { residual, .. } => Error::Infeasible { residual },
            other => other,
        })
    }

    /// Ground truth by projected gradient with backtracking.
    pub fn solve(&self) -> Result<SaddleCertificate> {
        let mn = self.ops.h_bar.ncols();
        let mut x = self.project_feasible(&DVector::zeros(mn))?;
        let mut fx = self.objective(&x);
        let mut step = 1.0;
        let mut converged = false;
        let mut last_change = f64::INFINITY;
        for _ in 0..PG_MAX_ITERS {
            let g = self.gradient(&x);
            let mut trial = step * 2.0;
            let (xn, fxn) = loop {
                let xn = self.project_feasible(&(&x - trial * &g))?;
                let fxn = self.objective(&xn);
                let dx = &xn - &x;
                let d2 = dx.norm_squared();
                // curvature along the step; near the optimum the function
                // difference is lost to rounding, so use the gradient change
                let excess = fxn - fx - g.dot(&dx);
                let curvature = if d2 == 0.0 {
                    0.0
                } else if excess.abs() > 1e-10 * (1.0 + fx.abs()) {
                    2.0 * excess / d2
                } else {
                    (self.gradient(&xn) - &g).dot(&dx) / d2
                };
                if curvature * trial <= 1.0 || trial < 1e-16 {
                    break (xn, fxn);
                }
                trial *= 0.5;
            };
            step = trial;
            last_change = (&xn - &x).amax();
            x = xn;
            fx = fxn;
            if last_change < PG_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NotConverged { iterations: PG_MAX_ITERS, residual: last_change });
        }
        let y = self.recover_dual(&x)?;
        let z = x.clone();
        let kkt = self.kkt(&x, &z, &y);
        Ok(SaddleCertificate { objective: fx, x, z, y, kkt })
    }

    /// `y = [lambda; mu]` with `grad f + lambda + L mu = 0` and `lambda` normal
    /// to the sets. Least squares on the free coordinates is the more accurate
    /// when the multipliers are unique; the multipliers of the projection that
    /// fixes `x` also cover degenerate points. The candidate with the smaller
    /// stationarity residual wins.
    fn recover_dual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let ls = self.least_squares_dual(x)?;
        let Some(proj) = self.feasible.as_ref().and_then(|f| self.dual_from_projection(f, x)) else {
            return Ok(ls);
        };
        let residual = |y: &DVector<f64>| self.kkt(x, x, y).stationarity;
        Ok(if residual(&proj) < residual(&ls) { proj } else { ls })
    }

    // x = proj(x - t grad) gives grad = (A^T y + s) / t; the A^T y part splits
    // into -L mu plus per-agent slice rows
    fn dual_from_projection(&self, f: &StackedFeasible, x: &DVector<f64>) -> Option<DVector<f64>> {
        let mn = x.len();
        let grad = self.gradient(x);
        let t = 1.0 / (1.0 + grad.amax());
        let p = box_affine_projection_multipliers(&(x - t * &grad), &f.lo, &f.hi, &f.a, &f.b).ok()?;
        let l = self.compact.laplacian();
        let r = f.a.transpose() * &p.y / t;
        // r = -L mu + S nu; the slice part is fixed by the component in ker L.
        // L is pseudo-inverted through its own spectrum, since squaring it would
        // push genuine small eigenvalues under the rank cutoff
        let eig = l.clone().symmetric_eigen();
        let cut = RANK_TOLERANCE * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
        let inv = eig.eigenvalues.map(|e| if e > cut { 1.0 / e } else { 0.0 });
        let kernel = eig.eigenvalues.map(|e| if e > cut { 0.0 } else { 1.0 });
        let vecs = &eig.eigenvectors;
        let l_pinv = vecs * DMatrix::from_diagonal(&inv) * vecs.transpose();
        let null = vecs * DMatrix::from_diagonal(&kernel) * vecs.transpose();
        let slice_part = if f.local_rows.ncols() == 0 {
            DVector::zeros(mn)
        } else {
            let ns = &null * &f.local_rows;
            &f.local_rows * (pseudo_inverse(&ns) * (&null * &r))
        };
        let mu = -(l_pinv * (r - slice_part));
        let lambda = -(&grad + &l * &mu);
        let mut y = DVector::zeros(2 * mn);
        y.rows_mut(0, mn).copy_from(&lambda);
        y.rows_mut(mn, mn).copy_from(&mu);
        Some(y)
    }

    fn least_squares_dual(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mn = x.len();
        let grad = self.gradient(x);
        let l = self.compact.laplacian();
        let free = self.free_coordinates(x);
        let rows: Vec<usize> = (0..mn).filter(|&k| free[k]).collect();
        let mu = if rows.is_empty() {
            DVector::zeros(mn)
        } else {
            let lf = DMatrix::from_fn(rows.len(), mn, |r, c| l[(rows[r], c)]);
            let gf = DVector::from_fn(rows.len(), |r, _| -grad[rows[r]]);
            pseudo_inverse(&lf) * gf
        };
        let lambda = -(&grad + &l * &mu);
        let mut y = DVector::zeros(2 * mn);
        y.rows_mut(0, mn).copy_from(&lambda);
        y.rows_mut(mn, mn).copy_from(&mu);
        Ok(y)
    }

    fn free_coordinates(&self, z: &DVector<f64>) -> Vec<bool> {
        let n = self.n;
        let mut free = vec![true; z.len()];
        for (i, set) in self.spec.sets.iter().enumerate() {
            if let ConvexSet::Box(b) = set {
                for k in 0..n {
                    let v = z[i * n + k];
                    let tol = 1e-7 * (1.0 + v.abs());
                    if v - b.lower()[k] <= tol || b.upper()[k] - v <= tol {
                        free[i * n + k] = false;
                    }
                }
            }
        }
        free
    }

    pub fn kkt(&self, x: &DVector<f64>, z: &DVector<f64>, y: &DVector<f64>) -> KktReport {
        let feasibility = self.compact.residual(x, z).norm();
        let ct_y = self.compact.c.transpose() * y + self.compact.d.transpose() * y;
        let w = -ct_y - self.gradient(x);
        let n = self.n;
        let mut dist2 = 0.0;
        for (i, set) in self.spec.sets.iter().enumerate() {
            let zi = z.rows(i * n, n).into_owned();
            let wi = w.rows(i * n, n).into_owned();
            dist2 += match set {
                ConvexSet::WholeSpace(_) => wi.norm_squared(),
                ConvexSet::Box(b) => (0..n)
                    .map(|k| {
                        let tol = 1e-7 * (1.0 + zi[k].abs());
                        let at_lo = zi[k] - b.lower()[k] <= tol;
                        let at_hi = b.upper()[k] - zi[k] <= tol;
                        let d = match (at_lo, at_hi) {
                            (true, true) => 0.0,
                            (true, false) => wi[k].max(0.0),
                            (false, true) => (-wi[k]).max(0.0),
                            (false, false) => wi[k].abs(),
                        };
                        d * d
                    })
                    .sum(),
                // w is normal at z exactly when z is the projection of z + w
                ConvexSet::AffineSlice(_) => match set.project(&(&zi + &wi)) {
                    Ok(p) => (p - &zi).norm_squared(),
                    Err(_) => f64::INFINITY,
                },
            };
        }
        KktReport { feasibility, stationarity: dist2.sqrt() }
    }
}

/// Bounds and equality rows of a set: `lo <= z <= hi`, `A z = b`.
fn describe(set: &ConvexSet) -> (DVector<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    match set {
        ConvexSet::WholeSpace(n) => (
            DVector::from_element(*n, f64::NEG_INFINITY),
            DVector::from_element(*n, f64::INFINITY),
            DMatrix::zeros(0, *n),
            DVector::zeros(0),
        ),
        ConvexSet::Box(b) => {
            let n = b.lower().len();
            (b.lower().clone(), b.upper().clone(), DMatrix::zeros(0, n), DVector::zeros(0))
        }
        ConvexSet::AffineSlice(s) => {
            let (lo, hi, a, b) = describe(s.base());
            let rows = a.nrows() + s.a_eq().nrows();
            let mut am = DMatrix::zeros(rows, lo.len());
            am.rows_mut(0, a.nrows()).copy_from(&a);
            am.rows_mut(a.nrows(), s.a_eq().nrows()).copy_from(s.a_eq());
            let mut bm = DVector::zeros(rows);
            bm.rows_mut(0, b.len()).copy_from(&b);
            bm.rows_mut(b.len(), s.b_eq().len()).copy_from(s.b_eq());
            (lo, hi, am, bm)
        }
    }
}

/// The whole feasible set as one slice of the stacked box. The equality rows
/// (manifold plus per-agent slices) are replaced by an orthonormal basis of
/// their row space. `None` when there are no rows, the rows are inconsistent
/// or the interior-point certification fails; Dykstra then decides.
fn stacked_slice(spec: &ProblemSpec, g: &DMatrix<f64>, g_rhs: &DVector<f64>) -> Option<StackedFeasible> {
    let n = spec.dim();
    let mn = n * spec.agent_count();
    let mut lo = DVector::zeros(mn);
    let mut hi = DVector::zeros(mn);
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for k in 0..g.nrows() {
        rows.push((g.row(k).transpose(), g_rhs[k]));
    }
    let mut local: Vec<DVector<f64>> = Vec::new();
    for (i, set) in spec.sets.iter().enumerate() {
        let (l, h, a, b) = describe(set);
        lo.rows_mut(i * n, n).copy_from(&l);
        hi.rows_mut(i * n, n).copy_from(&h);
        for k in 0..a.nrows() {
            let mut r = DVector::zeros(mn);
            r.rows_mut(i * n, n).copy_from(&a.row(k).transpose());
            local.push(r.clone());
            rows.push((r, b[k]));
        }
    }
    if rows.is_empty() {
        return None;
    }
    let m = DMatrix::from_fn(rows.len(), mn, |r, c| rows[r].0[c]);
    let rhs = DVector::from_fn(rows.len(), |r, _| rows[r].1);
    let x0 = pseudo_inverse(&m) * &rhs;
    if (&m * &x0 - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
        return None;
    }
    let eig = (m.transpose() * &m).symmetric_eigen();
    let cut = RANK_TOLERANCE * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let keep: Vec<usize> = (0..mn).filter(|&k| eig.eigenvalues[k] > cut).collect();
    let a = DMatrix::from_fn(keep.len(), mn, |r, c| eig.eigenvectors[(c, keep[r])]);
    let b = &a * &x0;
    let base = ConvexSet::boxed(lo.clone(), hi.clone()).ok()?;
    let set = ConvexSet::affine_slice_with(base, a.clone(), b.clone(), SliceMethod::InteriorPoint).ok()?;
    let local_rows = if local.is_empty() { DMatrix::zeros(mn, 0) } else { DMatrix::from_columns(&local) };
    Some(StackedFeasible { set, lo, hi, a, b, local_rows })
}

#[derive(Debug, Clone)]
struct StackedFeasible {
    set: ConvexSet,
    lo: DVector<f64>,
    hi: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// Columns are the per-agent slice rows embedded in the stacked space.
    local_rows: DMatrix<f64>,
}

// (A^T A)^+ A^T through the symmetric eigensolver; nalgebra's SVD returns
// inaccurate singular vectors on some rank-deficient incidence products
fn pseudo_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.is_empty() {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let eig = (a.transpose() * a).symmetric_eigen();
    let max = eig.eigenvalues.amax();
    let cut = RANK_TOLERANCE * max.max(f64::MIN_POSITIVE);
    let inv = eig.eigenvalues.map(|l| if l > cut { 1.0 / l } else { 0.0 });
    let v = &eig.eigenvectors;
    v * DMatrix::from_diagonal(&inv) * v.transpose() * a.transpose()
}

/// Ground-truth solution of the whole problem, with a dual estimate.
pub fn solve_centralized(spec: &ProblemSpec) -> Result<SaddleCertificate> {
    Centralized::new(spec)?.solve()
}

pub fn kkt_check(cert: &SaddleCertificate, spec: &ProblemSpec) -> Result<KktReport> {
    Ok(Centralized::new(spec)?.kkt(&cert.x, &cert.z, &cert.y))
}

/// Iterate of centralized ADMM on the compact form.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralState {
    pub x: DVector<f64>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
}

/// Centralized ADMM on `f(x) + y^T (Cx + Dz - E) + rho/2 ||Cx + Dz - E||^2`.
#[derive(Debug, Clone)]
pub struct CentralizedAdmm<'a> {
    pub problem: Centralized<'a>,
    pub rho: f64,
    quadratic: Option<(nalgebra::Cholesky<f64, nalgebra::Dyn>, DVector<f64>)>,
}

impl<'a> CentralizedAdmm<'a> {
    pub fn new(spec: &'a ProblemSpec, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter("rho must be positive".into()));
        }
        let problem = Centralized::new(spec)?;
        let n = spec.dim();
        let mn = n * spec.agent_count();
        let quadratic = if spec.objectives.iter().all(|f| matches!(f, LocalObjective::Quadratic(_))) {
            let mut h = rho * problem.compact.c.transpose() * &problem.compact.c;
            let mut q = DVector::zeros(mn);
            for (i, f) in spec.objectives.iter().enumerate() {
                if let LocalObjective::Quadratic(f) = f {
                    let mut blk = h.view_mut((i * n, i * n), (n, n));
                    blk += 2.0 * f.q_mat();
                    q.rows_mut(i * n, n).copy_from(f.q());
                }
            }
            Some((h.cholesky().ok_or(Error::SingularSystem)?, q))
        } else {
            None
        };
        Ok(Self { problem, rho, quadratic })
    }

    /// `x = z = proj(0)`, `y = 0`.
    pub fn initial_state(&self) -> Result<CentralState> {
        let mn = self.problem.ops.h_bar.ncols();
        let z = self.problem.project_sets(&DVector::zeros(mn))?;
        Ok(CentralState { x: z.clone(), z, y: DVector::zeros(2 * mn) })
    }

    pub fn step(&self, s: &CentralState) -> Result<CentralState> {
        let cf = &self.problem.compact;
        let rho = self.rho;
        let shift = &cf.d * &s.z - &cf.e;
        let x = match &self.quadratic {
            Some((chol, q)) => {
                let rhs = -q - cf.c.transpose() * (&s.y + rho * &shift);
                chol.solve(&rhs)
            }
            None => {
                let value = |x: &DVector<f64>| {
                    let r = &cf.c * x + &shift;
                    self.problem.objective(x) + s.y.dot(&(&cf.c * x)) + 0.5 * rho * r.norm_squared()
                };
                let grad = |x: &DVector<f64>| {
                    let r = &cf.c * x + &shift;
                    self.problem.gradient(x) + cf.c.transpose() * (&s.y + rho * r)
                };
                let (x, g) = minimize_smooth(value, grad, s.x.clone(), 1e-11, 20_000);
                if g > 1e-8 * (1.0 + x.norm()) {
                    return Err(Error::NotConverged { iterations: 20_000, residual: g });
                }
                x
            }
        };
        let mn = x.len();
        let lambda = s.y.rows(0, mn).into_owned();
        let z = self.problem.project_sets(&(&x + lambda / rho))?;
        let y = &s.y + rho * cf.residual(&x, &z);
        Ok(CentralState { x, z, y })
    }

    /// `iters` steps from `start`; the returned history includes `start`.
    pub fn trajectory(&self, start: CentralState, iters: usize) -> Result<Vec<CentralState>> {
        let mut hist = Vec::with_capacity(iters + 1);
        hist.push(start);
        for _ in 0..iters {
            let next = self.step(hist.last().expect("nonempty"))?;
            hist.push(next);
        }
        Ok(hist)
    }

    /// Runs until the residual and the change in `(z, y)` are below `tol`, and
    /// returns the limit as a certificate.
    pub fn certificate(&self, tol: f64, max_iters: usize) -> Result<SaddleCertificate> {
        self.certificate_from(self.initial_state()?, tol, max_iters)
    }

    /// As [`Self::certificate`], starting from `start`.
    pub fn certificate_from(&self, start: CentralState, tol: f64, max_iters: usize) -> Result<SaddleCertificate> {
        let mut s = start;
        for _ in 0..max_iters {
            let next = self.step(&s)?;
            let r = self.problem.compact.residual(&next.x, &next.z).amax();
            let dz = (&next.z - &s.z).amax();
            let dy = (&next.y - &s.y).amax();
            s = next;
            if r < tol && dz < tol && dy < tol * self.rho {
                let kkt = self.problem.kkt(&s.x, &s.z, &s.y);
                let objective = self.problem.objective(&s.x);
                return Ok(SaddleCertificate { x: s.x, z: s.z, y: s.y, objective, kkt });
            }
        }
        let r = self.problem.compact.residual(&s.x, &s.z).amax();
        Err(Error::NotConverged { iterations: max_iters, residual: r })
    }
}

/// Single centralized ADMM step.
pub fn centralized_admm_step(state: &CentralState, spec: &ProblemSpec, rho: f64) -> Result<CentralState> {
    CentralizedAdmm::new(spec, rho)?.step(state)
}

/// Lyapunov values and the bound and descent inequalities along a trajectory.
/// Violations are `lhs - rhs`; the inequality holds with slack `s` when the
/// violation is at most `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub v: Vec<f64>,
    pub lower_bound: Vec<f64>,
    pub upper_bound: Vec<f64>,
    pub descent: Vec<f64>,
}

impl LyapunovReport {
    fn worst(v: &[f64]) -> f64 {
        v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_lower_bound(&self) -> f64 {
        Self::worst(&self.lower_bound)
    }

    pub fn max_upper_bound(&self) -> f64 {
        Self::worst(&self.upper_bound)
    }

    pub fn max_descent(&self) -> f64 {
        Self::worst(&self.descent)
    }

    pub fn holds(&self, slack: f64) -> bool {
        self.max_lower_bound() <= slack && self.max_upper_bound() <= slack && self.max_descent() <= slack
    }

    /// Columns `k, V, lower_bound_violation, upper_bound_violation, descent_violation`;
    /// row `k` holds the checks for the step `k-1 -> k`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidParameter(format!("csv output: {e}"));
        w.write_record(["k", "V", "lower_bound_violation", "upper_bound_violation", "descent_violation"])
            .map_err(io)?;
        for (k, v) in self.v.iter().enumerate() {
            let col = |s: &[f64]| if k == 0 { String::new() } else { fmt_f64(s[k - 1]) };
            w.write_record([k.to_string(), fmt_f64(*v), col(&self.lower_bound), col(&self.upper_bound), col(&self.descent)])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::InvalidParameter(format!("csv output: {e}")))
    }
}

/// `V_k = (1/rho) ||y_k - y*||^2 + rho ||D (z_k - z*)||^2` and the per-step checks
/// `l* - l_{k+1} <= y*^T r_{k+1}`,
/// `l_{k+1} - l* <= -y_{k+1}^T r_{k+1} - rho (D(z_{k+1} - z_k))^T (-r_{k+1} + D(z_{k+1} - z*))`,
/// `V_{k+1} <= V_k - rho ||r_{k+1}||^2 - rho ||D(z_{k+1} - z_k)||^2`.
pub fn lyapunov_series(
    history: &[CentralState],
    cert: &SaddleCertificate,
    problem: &Centralized<'_>,
    rho: f64,
) -> LyapunovReport {
    let cf = &problem.compact;
    let v: Vec<f64> = history
        .iter()
        .map(|s| (&s.y - &cert.y).norm_squared() / rho + rho * (&cf.d * (&s.z - &cert.z)).norm_squared())
        .collect();
    let l_star = cert.objective;
    let mut lower_bound = Vec::new();
    let mut upper_bound = Vec::new();
    let mut descent = Vec::new();
    for k in 0..history.len().saturating_sub(1) {
        let (prev, next) = (&history[k], &history[k + 1]);
        let r = cf.residual(&next.x, &next.z);
        let l_next = problem.objective(&next.x);
        let dz = &cf.d * (&next.z - &prev.z);
        lower_bound.push((l_star - l_next) - cert.y.dot(&r));
        let rhs4 = -next.y.dot(&r) - rho * dz.dot(&(-&r + &cf.d * (&next.z - &cert.z)));
        upper_bound.push((l_next - l_star) - rhs4);
        descent.push(v[k + 1] - (v[k] - rho * r.norm_squared() - rho * dz.norm_squared()));
    }
    LyapunovReport { v, lower_bound, upper_bound, descent }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admm::{AdmmSettings, Penalties};
    use crate::graph::{EdgeAgreement, Graph};
    use crate::subproblem::Quadratic;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn two_agents(lo: [f64; 2], hi: [f64; 2]) -> ProblemSpec {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        let ag = EdgeAgreement::new(0, 1, DMatrix::identity(1, 1), v(&[0.0])).unwrap();
        let objectives = [0.0, 2.0]
            .iter()
            .map(|&c| LocalObjective::Quadratic(Quadratic::shifted_norm(&v(&[c]))))
            .collect();
        let sets = (0..2).map(|i| ConvexSet::uniform_box(1, lo[i], hi[i]).unwrap()).collect();
        ProblemSpec::new(g, vec![ag], objectives, sets, AdmmSettings::new(Penalties::single(5.0), 100))
            .unwrap()
    }

    #[test]
    fn single_edge_compact_form() {
        let spec = two_agents([-10.0; 2], [10.0; 2]);
        let c = Centralized::new(&spec).unwrap();
        assert_eq!(c.compact.laplacian(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
        assert_eq!(c.compact.e, DVector::zeros(4));
        assert_eq!(c.compact.d.rows(0, 2).into_owned(), -DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn no_edges_compact_form() {
        let g = Graph::new(2, []).unwrap();
        let ops = stack_operators(&g, &[], 2).unwrap();
        let cf = build_compact_form(&ops);
        assert_eq!(cf.c.rows(0, 4).into_owned(), DMatrix::<f64>::identity(4, 4));
        assert_eq!(cf.laplacian(), DMatrix::zeros(4, 4));
        assert_eq!(cf.e, DVector::zeros(8));
    }

    #[test]
    fn two_agent_ground_truth() {
        let spec = two_agents([-10.0; 2], [10.0; 2]);
        let cert = solve_centralized(&spec).unwrap();
        assert!((&cert.x - v(&[1.0, 1.0])).amax() < 1e-8);
        assert!((cert.objective - 2.0).abs() < 1e-8);
        assert!(cert.kkt.feasibility < 1e-8);
        assert!(cert.kkt.stationarity < 1e-6);
    }

    #[test]
    fn disjoint_boxes_are_infeasible() {
        let spec = two_agents([0.0, 2.0], [1.0, 3.0]);
        assert!(matches!(solve_centralized(&spec), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn analytic_saddle_has_zero_kkt_residual() {
        // grad f = (2, -2) at x = (1, 1), no bound active, so lambda = 0 and L mu = -grad
        let spec = two_agents([-10.0; 2], [10.0; 2]);
        let c = Centralized::new(&spec).unwrap();
        let x = v(&[1.0, 1.0]);
        let y = v(&[0.0, 0.0, -2.0, 0.0]);
        let rep = c.kkt(&x, &x, &y);
        assert!(rep.feasibility < 1e-12);
        assert!(rep.stationarity < 1e-12);
        let far = v(&[3.0, -4.0]);
        assert!(c.kkt(&far, &x, &y).feasibility > 0.1);
    }

    #[test]
    fn centralized_admm_converges_and_fixes_saddle() {
        let spec = two_agents([-10.0; 2], [10.0; 2]);
        let admm = CentralizedAdmm::new(&spec, 5.0).unwrap();
        let hist = admm.trajectory(admm.initial_state().unwrap(), 200).unwrap();
        let last = hist.last().unwrap();
        assert!((&last.z - v(&[1.0, 1.0])).amax() < 1e-8);

        let cert = admm.certificate(1e-12, 10_000).unwrap();
        let s = CentralState { x: cert.x.clone(), z: cert.z.clone(), y: cert.y.clone() };
        let next = admm.step(&s).unwrap();
        assert!((&next.x - &s.x).amax() < 1e-8);
        assert!((&next.y - &s.y).amax() < 1e-8);

        let rep = lyapunov_series(&admm.trajectory(s, 5).unwrap(), &cert, &admm.problem, 5.0);
        assert!(rep.v.iter().all(|&v| v < 1e-16));
    }

    #[test]
    fn bound_and_descent_inequalities_hold_on_two_agents() {
        let spec = two_agents([-10.0; 2], [0.5, 10.0]);
        let admm = CentralizedAdmm::new(&spec, 5.0).unwrap();
        let cert = admm.certificate(1e-12, 10_000).unwrap();
        let hist = admm.trajectory(admm.initial_state().unwrap(), 100).unwrap();
        let rep = lyapunov_series(&hist, &cert, &admm.problem, 5.0);
        assert!(rep.holds(INEQUALITY_SLACK), "{:?}", (rep.max_lower_bound(), rep.max_upper_bound(), rep.max_descent()));
        assert!(rep.v.windows(2).all(|w| w[1] <= w[0] + INEQUALITY_SLACK));
    }
}
