//! Closed convex sets with Euclidean projection.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::graph::MAX_CONDITION;

pub const DYKSTRA_TOL: f64 = 1e-10;
pub const DYKSTRA_MAX_SWEEPS: usize = 20_000;
/// Largest base/affine gap accepted when the sweep cap is hit.
pub const DYKSTRA_ACCEPT: f64 = 1e-6;

const IPM_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl BoxSet {
    /// Bounds may be infinite; `lower <= upper` is required entrywise.
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch(format!(
                "box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (k, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidParameter(format!(
                    "box coordinate {k}: lower {lo} > upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]^n`.
    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(DVector::from_element(n, lo), DVector::from_element(n, hi))
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn clamp(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            v.len(),
            v.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(&x, (&lo, &hi))| x.max(lo).min(hi)),
        )
    }
}

/// Column-compressed copy of a matrix, used by the interior-point projection.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseColumns {
    rows: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl SparseColumns {
    pub fn from_dense(a: &DMatrix<f64>) -> Self {
        let cols = (0..a.ncols())
            .map(|c| (0..a.nrows()).filter(|&r| a[(r, c)] != 0.0).map(|r| (r, a[(r, c)])).collect())
            .collect();
        Self { rows: a.nrows(), cols }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn mul(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.rows);
        for (col, vk) in self.cols.iter().zip(v.iter()) {
            for &(r, a) in col {
                out[r] += a * vk;
            }
        }
        out
    }

    pub fn tr_mul(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.cols.len(), self.cols.iter().map(|col| col.iter().map(|&(r, a)| a * y[r]).sum()))
    }

    /// `A diag(w) A^T`.
    pub fn weighted_gram(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.rows);
        for (col, wk) in self.cols.iter().zip(w.iter()) {
            for &(r, a) in col {
                for &(s, b) in col {
                    m[(r, s)] += wk * a * b;
                }
            }
        }
        m
    }
}

/// How an [`AffineSlice`] computes its projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SliceMethod {
    /// Dykstra alternating projections between the base set and the affine subspace.
    #[default]
    Dykstra,
    /// Primal-dual interior point on the projection QP. Base must be a box or the whole space.
    InteriorPoint,
}

#[derive(Debug, Clone)]
pub struct AffineSlice {
    base: Box<ConvexSet>,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    gram: Cholesky<f64, Dyn>,
    sparse: SparseColumns,
    method: SliceMethod,
}

impl PartialEq for AffineSlice {
    fn eq(&self, other: &Self) -> bool {
        self.base == other.base
            && self.a_eq == other.a_eq
            && self.b_eq == other.b_eq
            && self.method == other.method
    }
}

impl AffineSlice {
    pub fn base(&self) -> &ConvexSet {
        &self.base
    }

    pub fn a_eq(&self) -> &DMatrix<f64> {
        &self.a_eq
    }

    pub fn b_eq(&self) -> &DVector<f64> {
        &self.b_eq
    }

    pub fn method(&self) -> SliceMethod {
        self.method
    }

    /// Projection onto `{z | A_eq z = b_eq}`.
    pub fn project_affine(&self, v: &DVector<f64>) -> DVector<f64> {
        let r = &self.a_eq * v - &self.b_eq;
        v - self.a_eq.transpose() * self.gram.solve(&r)
    }

    // Dykstra can sit on a plateau for tens of thousands of sweeps when the
    // slice meets a face at a small angle; box slices then finish exactly
    fn dykstra(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let box_base = matches!(self.base.as_ref(), ConvexSet::Box(_) | ConvexSet::WholeSpace(_));
        let accept = if box_base { DYKSTRA_TOL } else { DYKSTRA_ACCEPT };
        let out = dykstra(
            |u| self.base.project(u),
            |u| self.project_affine(u),
            v,
            DYKSTRA_TOL,
            DYKSTRA_MAX_SWEEPS,
            accept,
        );
        match out {
            Err(Error::NotConverged { .. }) if box_base => self.interior_point(v),
            other => other,
        }
    }

    fn interior_point(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        let n = v.len();
        let (lo, hi) = match self.base.as_ref() {
            ConvexSet::Box(b) => (b.lower.clone(), b.upper.clone()),
            ConvexSet::WholeSpace(_) => (
                DVector::from_element(n, f64::NEG_INFINITY),
                DVector::from_element(n, f64::INFINITY),
            ),
            ConvexSet::AffineSlice(_) => {
                return Err(Error::InvalidParameter(
                    "interior-point projection needs a box base".into(),
                ))
            }
        };
        ipm_projection(v, &lo, &hi, &self.sparse, &self.b_eq)
    }
}

/// Dykstra's alternating projections onto the intersection of two convex sets.
/// The result comes from the `affine` side. Stops when both the iterate change
/// and the gap between the two sides fall below `tol`; after `max_sweeps` the
/// result is accepted if the gap is at most `accept`.
pub(crate) fn dykstra(
    base: impl Fn(&DVector<f64>) -> Result<DVector<f64>>,
    affine: impl Fn(&DVector<f64>) -> DVector<f64>,
    v: &DVector<f64>,
    tol: f64,
    max_sweeps: usize,
    accept: f64,
) -> Result<DVector<f64>> {
    let n = v.len();
    let mut x = v.clone();
    let mut y = v.clone();
    let mut p = DVector::zeros(n);
    let mut q = DVector::zeros(n);
    let mut gap = f64::INFINITY;
    for _ in 0..max_sweeps {
        let y_new = base(&(&x + &p))?;
        p += &x - &y_new;
        let x_new = affine(&(&y_new + &q));
        q += &y_new - &x_new;
        let change = (&x_new - &x).amax().max((&y_new - &y).amax());
        gap = (&x_new - &y_new).amax();
        x = x_new;
        y = y_new;
        if change < tol && gap < tol {
            return Ok(x);
        }
    }
    if gap <= accept {
        Ok(x)
    } else {
        Err(Error::NotConverged { iterations: max_sweeps, residual: gap })
    }
}

/// Euclidean projection onto `{z | lo <= z <= hi, A z = b}` by a Mehrotra
/// predictor-corrector method. Infinite bounds are skipped.
pub fn box_affine_projection(
    v: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<DVector<f64>> {
    ipm_projection(v, lo, hi, &SparseColumns::from_dense(a), b)
}

/// Projection with its multipliers: `z - v = A^T y + s`, where `s_k >= 0` may
/// be nonzero only at a lower bound and `s_k <= 0` only at an upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMultipliers {
    pub z: DVector<f64>,
    pub y: DVector<f64>,
    pub s: DVector<f64>,
}

/// As [`box_affine_projection`], also returning the interior-point multipliers.
pub fn box_affine_projection_multipliers(
    v: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<ProjectionMultipliers> {
    ipm_solve(v, lo, hi, &SparseColumns::from_dense(a), b)
}

fn ipm_projection(
    v: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    a: &SparseColumns,
    b: &DVector<f64>,
) -> Result<DVector<f64>> {
    ipm_solve(v, lo, hi, a, b).map(|p| p.z)
}

fn ipm_solve(
    v: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    a: &SparseColumns,
    b: &DVector<f64>,
) -> Result<ProjectionMultipliers> {
    let n = v.len();
    let has_lo: Vec<bool> = lo.iter().map(|x| x.is_finite()).collect();
    let has_hi: Vec<bool> = hi.iter().map(|x| x.is_finite()).collect();
    let bounded = has_lo.iter().filter(|&&f| f).count() + has_hi.iter().filter(|&&f| f).count();
    let scale = 1.0 + v.amax().max(b.amax());

    // start strictly inside the box
    let mut z = DVector::from_fn(n, |k, _| {
        let (l, h) = (lo[k], hi[k]);
        match (has_lo[k], has_hi[k]) {
            (true, true) => {
                let w = h - l;
                if w <= 0.0 {
                    l
                } else {
                    v[k].max(l + 0.01 * w).min(h - 0.01 * w)
                }
            }
            (true, false) => v[k].max(l + 0.01 * (1.0 + l.abs())),
            (false, true) => v[k].min(h - 0.01 * (1.0 + h.abs())),
            (false, false) => v[k],
        }
    });
    let mut g1 = DVector::from_fn(n, |k, _| if has_lo[k] { (z[k] - lo[k]).max(1e-12) } else { 1.0 });
    let mut g2 = DVector::from_fn(n, |k, _| if has_hi[k] { (hi[k] - z[k]).max(1e-12) } else { 1.0 });
    // multipliers chosen so the dual residual starts at zero where possible
    let mut s1 = DVector::from_fn(n, |k, _| if has_lo[k] { (z[k] - v[k]).max(0.0) + 1.0 } else { 0.0 });
    let mut s2 = DVector::from_fn(n, |k, _| if has_hi[k] { (v[k] - z[k]).max(0.0) + 1.0 } else { 0.0 });
    let mut y = DVector::zeros(a.nrows());

    let mut rp_norm = f64::INFINITY;
    for _ in 0..IPM_MAX_ITERS {
        let rd = &z - v - a.tr_mul(&y) - &s1 + &s2;
        let rp = a.mul(&z) - b;
        rp_norm = rp.amax();
        let complementarity = |g1: &DVector<f64>, s1: &DVector<f64>, g2: &DVector<f64>, s2: &DVector<f64>| {
            if bounded == 0 {
                0.0
            } else {
                (g1.dot(s1) + g2.dot(s2)) / bounded as f64
            }
        };
        let gap = complementarity(&g1, &s1, &g2, &s2);
        if rp_norm < 1e-10 * scale && rd.amax() < 1e-10 * scale && gap < 1e-12 * scale {
            let at_lo: Vec<bool> = (0..n).map(|k| has_lo[k] && g1[k] < s1[k]).collect();
            let at_hi: Vec<bool> = (0..n).map(|k| !at_lo[k] && has_hi[k] && g2[k] < s2[k]).collect();
            let s = &s1 - &s2;
            let z = polish(v, lo, hi, a, b, &at_lo, &at_hi, scale)
                .unwrap_or_else(|| DVector::from_fn(n, |k, _| z[k].max(lo[k]).min(hi[k])));
            return Ok(ProjectionMultipliers { z, y, s });
        }
        if !z.iter().all(|x| x.is_finite()) {
            break;
        }
        let theta = DVector::from_fn(n, |k, _| 1.0 / (1.0 + s1[k] / g1[k] + s2[k] / g2[k]));
        let m = a.weighted_gram(&theta);
        let chol = match m.cholesky() {
            Some(c) => c,
            None => break,
        };
        let solve = |c1: &DVector<f64>, c2: &DVector<f64>| {
            let h = DVector::from_fn(n, |k, _| -rd[k] + c1[k] / g1[k] - c2[k] / g2[k]);
            let th = theta.component_mul(&h);
            let dy = chol.solve(&(-&rp - a.mul(&th)));
            let dz = theta.component_mul(&(h + a.tr_mul(&dy)));
            let ds1 = DVector::from_fn(n, |k, _| if has_lo[k] { (c1[k] - s1[k] * dz[k]) / g1[k] } else { 0.0 });
            let ds2 = DVector::from_fn(n, |k, _| if has_hi[k] { (c2[k] + s2[k] * dz[k]) / g2[k] } else { 0.0 });
            (dz, dy, ds1, ds2)
        };
        let step_to_boundary = |dz: &DVector<f64>, ds1: &DVector<f64>, ds2: &DVector<f64>| {
            let mut alpha: f64 = 1.0;
            for k in 0..n {
                if has_lo[k] {
                    if dz[k] < 0.0 {
                        alpha = alpha.min(-g1[k] / dz[k]);
                    }
                    if ds1[k] < 0.0 {
                        alpha = alpha.min(-s1[k] / ds1[k]);
                    }
                }
                if has_hi[k] {
                    if dz[k] > 0.0 {
                        alpha = alpha.min(g2[k] / dz[k]);
                    }
                    if ds2[k] < 0.0 {
                        alpha = alpha.min(-s2[k] / ds2[k]);
                    }
                }
            }
            alpha
        };
        let gap_after = |alpha: f64, dz: &DVector<f64>, ds1: &DVector<f64>, ds2: &DVector<f64>| {
            complementarity(&(&g1 + alpha * dz), &(&s1 + alpha * ds1), &(&g2 - alpha * dz), &(&s2 + alpha * ds2))
        };
        let targets = |sigma: f64, corr1: Option<&DVector<f64>>, corr2: Option<&DVector<f64>>| {
            let c1 = DVector::from_fn(n, |k, _| {
                if has_lo[k] {
                    -g1[k] * s1[k] + sigma * gap - corr1.map_or(0.0, |c| c[k])
                } else {
                    0.0
                }
            });
            let c2 = DVector::from_fn(n, |k, _| {
                if has_hi[k] {
                    -g2[k] * s2[k] + sigma * gap + corr2.map_or(0.0, |c| c[k])
                } else {
                    0.0
                }
            });
            (c1, c2)
        };

        // predictor
        let (c1, c2) = targets(0.0, None, None);
        let (dz_a, _, ds1_a, ds2_a) = solve(&c1, &c2);
        let alpha_a = step_to_boundary(&dz_a, &ds1_a, &ds2_a);
        let sigma = if bounded == 0 || gap <= 0.0 {
            0.0
        } else {
            (gap_after(alpha_a, &dz_a, &ds1_a, &ds2_a) / gap).powi(3)
        };

        // steps must shrink the gap and keep every product g s above a fixed
        // fraction of it; without this the iterates can cycle between vertices
        let min_product = (0..n)
            .flat_map(|k| {
                let lo_p = if has_lo[k] { g1[k] * s1[k] } else { f64::INFINITY };
                let hi_p = if has_hi[k] { g2[k] * s2[k] } else { f64::INFINITY };
                [lo_p, hi_p]
            })
            .fold(f64::INFINITY, f64::min);
        let gamma = if bounded == 0 || gap <= 0.0 { 0.0 } else { (0.5 * min_product / gap).min(1e-3) };
        let acceptable = |alpha: f64, dz: &DVector<f64>, ds1: &DVector<f64>, ds2: &DVector<f64>| {
            if bounded == 0 {
                return true;
            }
            let next = gap_after(alpha, dz, ds1, ds2);
            next <= (1.0 - 0.01 * alpha) * gap
                && (0..n).all(|k| {
                    (!has_lo[k] || (g1[k] + alpha * dz[k]) * (s1[k] + alpha * ds1[k]) >= gamma * next)
                        && (!has_hi[k] || (g2[k] - alpha * dz[k]) * (s2[k] + alpha * ds2[k]) >= gamma * next)
                })
        };
        let line_search = |dz: &DVector<f64>, ds1: &DVector<f64>, ds2: &DVector<f64>| {
            let mut alpha = (0.995 * step_to_boundary(dz, ds1, ds2)).min(1.0);
            while alpha > 1e-10 && !acceptable(alpha, dz, ds1, ds2) {
                alpha *= 0.7;
            }
            alpha
        };

        // Mehrotra corrector; a centering step replaces it when it has to be cut short
        let (c1, c2) = targets(sigma, Some(&dz_a.component_mul(&ds1_a)), Some(&dz_a.component_mul(&ds2_a)));
        let (mut dz, mut dy, mut ds1, mut ds2) = solve(&c1, &c2);
        let mut alpha = line_search(&dz, &ds1, &ds2);
        if alpha < 0.1 {
            let (c1, c2) = targets(sigma.max(0.3), None, None);
            let (cz, cy, cs1, cs2) = solve(&c1, &c2);
            let beta = line_search(&cz, &cs1, &cs2);
            if beta > alpha {
                (dz, dy, ds1, ds2, alpha) = (cz, cy, cs1, cs2, beta);
            }
        }

        z += alpha * &dz;
        y += alpha * dy;
        for k in 0..n {
            if has_lo[k] {
                g1[k] += alpha * dz[k];
                s1[k] += alpha * ds1[k];
            }
            if has_hi[k] {
                g2[k] -= alpha * dz[k];
                s2[k] += alpha * ds2[k];
            }
        }
    }
    Err(Error::NotConverged { iterations: IPM_MAX_ITERS, residual: rp_norm })
}

// Exact projection with the guessed active bounds held fixed. Without strict
// complementarity the interior point is only accurate to about sqrt(gap).
#[allow(clippy::too_many_arguments)]
fn polish(
    v: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    a: &SparseColumns,
    b: &DVector<f64>,
    at_lo: &[bool],
    at_hi: &[bool],
    scale: f64,
) -> Option<DVector<f64>> {
    let n = v.len();
    let fixed = |k: usize| at_lo[k] || at_hi[k];
    let base = DVector::from_fn(n, |k, _| if at_lo[k] { lo[k] } else if at_hi[k] { hi[k] } else { v[k] });
    let w = DVector::from_fn(n, |k, _| if fixed(k) { 0.0 } else { 1.0 });
    let y = if a.nrows() == 0 {
        DVector::zeros(0)
    } else {
        a.weighted_gram(&w).cholesky()?.solve(&(b - a.mul(&base)))
    };
    let aty = a.tr_mul(&y);
    let z = DVector::from_fn(n, |k, _| if fixed(k) { base[k] } else { v[k] + aty[k] });
    let tol = 1e-9 * scale;
    let ok = (0..n).all(|k| {
        let s = z[k] - v[k] - aty[k];
        let inside = z[k] >= lo[k] - tol && z[k] <= hi[k] + tol;
        inside && (!at_lo[k] || s >= -tol) && (!at_hi[k] || s <= tol)
    }) && (a.mul(&z) - b).amax() < 1e-10 * scale;
    ok.then(|| DVector::from_fn(n, |k, _| z[k].max(lo[k]).min(hi[k])))
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvexSet {
    WholeSpace(usize),
    Box(BoxSet),
    AffineSlice(AffineSlice),
}

impl ConvexSet {
    pub fn whole_space(n: usize) -> Self {
        ConvexSet::WholeSpace(n)
    }

    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        Ok(ConvexSet::Box(BoxSet::new(lower, upper)?))
    }

    pub fn uniform_box(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Ok(ConvexSet::Box(BoxSet::uniform(n, lo, hi)?))
    }

    /// `{z in base | A_eq z = b_eq}` projected with Dykstra.
    pub fn affine_slice(base: ConvexSet, a_eq: DMatrix<f64>, b_eq: DVector<f64>) -> Result<Self> {
        Self::affine_slice_with(base, a_eq, b_eq, SliceMethod::Dykstra)
    }

    /// Builds the slice and certifies it is nonempty by projecting the origin.
    pub fn affine_slice_with(
        base: ConvexSet,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        method: SliceMethod,
    ) -> Result<Self> {
        let n = base.dim();
        if a_eq.ncols() != n || a_eq.nrows() != b_eq.len() {
            return Err(Error::DimensionMismatch(format!(
                "A_eq is {}x{}, b_eq has length {}, set dimension {n}",
                a_eq.nrows(),
                a_eq.ncols(),
                b_eq.len()
            )));
        }
        if method == SliceMethod::InteriorPoint && matches!(base, ConvexSet::AffineSlice(_)) {
            return Err(Error::InvalidParameter(
                "interior-point projection needs a box base".into(),
            ));
        }
        let gram = &a_eq * a_eq.transpose();
        let eig = gram.clone().symmetric_eigen().eigenvalues;
        if a_eq.nrows() > 0 && !(eig.min() > 0.0 && eig.max() / eig.min() <= MAX_CONDITION) {
            return Err(Error::InvalidParameter("A_eq must have full row rank".into()));
        }
        let gram = gram
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("A_eq must have full row rank".into()))?;
        let sparse = SparseColumns::from_dense(&a_eq);
        let slice = AffineSlice { base: Box::new(base), a_eq, b_eq, gram, sparse, method };
        match slice_project(&slice, &DVector::zeros(n)) {
            Ok(_) => Ok(ConvexSet::AffineSlice(slice)),
            Err(Error::NotConverged { residual, .. }) => Err(Error::EmptySlice { residual }),
            Err(e) => Err(e),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexSet::WholeSpace(n) => *n,
            ConvexSet::Box(b) => b.lower.len(),
            ConvexSet::AffineSlice(s) => s.base.dim(),
        }
    }

    pub fn project(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "vector of length {} projected onto a set of dimension {}",
                v.len(),
                self.dim()
            )));
        }
        match self {
            ConvexSet::WholeSpace(_) => Ok(v.clone()),
            ConvexSet::Box(b) => Ok(b.clamp(v)),
            ConvexSet::AffineSlice(s) => slice_project(s, v),
        }
    }

    /// Whether `v` lies within `tol` (Euclidean) of the set.
    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        match self.project(v) {
            Ok(p) => (p - v).norm() <= tol,
            Err(_) => false,
        }
    }

    /// The outermost box constraint, if any.
    pub fn bounding_box(&self) -> Option<&BoxSet> {
        match self {
            ConvexSet::WholeSpace(_) => None,
            ConvexSet::Box(b) => Some(b),
            ConvexSet::AffineSlice(s) => s.base.bounding_box(),
        }
    }
}

fn slice_project(slice: &AffineSlice, v: &DVector<f64>) -> Result<DVector<f64>> {
    match slice.method {
        SliceMethod::Dykstra => slice.dykstra(v),
        SliceMethod::InteriorPoint => slice.interior_point(v),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn simplex_slice(method: SliceMethod) -> ConvexSet {
        ConvexSet::affine_slice_with(
            ConvexSet::uniform_box(2, 0.0, 1.0).unwrap(),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            v(&[1.0]),
            method,
        )
        .unwrap()
    }

    #[test]
    fn box_clamps() {
        let b = ConvexSet::uniform_box(2, -100.0, 100.0).unwrap();
        assert_eq!(b.project(&v(&[5.0, -7.0])).unwrap(), v(&[5.0, -7.0]));
        assert_eq!(b.project(&v(&[150.0, -200.0])).unwrap(), v(&[100.0, -100.0]));
    }

    #[test]
    fn infinite_sides_are_skipped() {
        let b = ConvexSet::boxed(v(&[0.0, f64::NEG_INFINITY]), v(&[f64::INFINITY, 1.0])).unwrap();
        assert_eq!(b.project(&v(&[-3.0, -1e300])).unwrap(), v(&[0.0, -1e300]));
        assert_eq!(b.project(&v(&[1e300, 4.0])).unwrap(), v(&[1e300, 1.0]));
    }

    #[test]
    fn inverted_box_is_rejected() {
        assert!(ConvexSet::boxed(v(&[1.0]), v(&[0.0])).is_err());
        assert!(ConvexSet::boxed(v(&[1.0]), v(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn contains_uses_tolerance() {
        let b = ConvexSet::uniform_box(1, 0.0, 1.0).unwrap();
        assert!(b.contains(&v(&[0.5]), 1e-9));
        assert!(b.contains(&v(&[1.0 + 1e-12]), 1e-9));
        assert!(!b.contains(&v(&[1.1]), 1e-9));
        assert!(!simplex_slice(SliceMethod::Dykstra).contains(&v(&[0.7, 0.2]), 1e-9));
    }

    #[test]
    fn simplex_slice_both_methods() {
        for method in [SliceMethod::Dykstra, SliceMethod::InteriorPoint] {
            let s = simplex_slice(method);
            let p = s.project(&v(&[2.0, 2.0])).unwrap();
            assert!((p - v(&[0.5, 0.5])).amax() < 1e-9, "{method:?}");
            let p = s.project(&v(&[3.0, -1.0])).unwrap();
            assert!((p - v(&[1.0, 0.0])).amax() < 1e-9, "{method:?}");
        }
    }

    #[test]
    fn empty_slice_fails_at_construction() {
        for method in [SliceMethod::Dykstra, SliceMethod::InteriorPoint] {
            let r = ConvexSet::affine_slice_with(
                ConvexSet::uniform_box(2, 0.0, 1.0).unwrap(),
                DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
                v(&[3.0]),
                method,
            );
            assert!(matches!(r, Err(Error::EmptySlice { .. })), "{method:?}: {r:?}");
        }
    }

    #[test]
    fn slice_of_whole_space_is_affine_projection() {
        let s = ConvexSet::affine_slice(
            ConvexSet::whole_space(3),
            DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]),
            v(&[3.0]),
        )
        .unwrap();
        let p = s.project(&v(&[0.0, 0.0, 0.0])).unwrap();
        assert!((p - v(&[1.0, 1.0, 1.0])).amax() < 1e-12);
    }

    #[test]
    fn rank_deficient_slice_is_rejected() {
        let r = ConvexSet::affine_slice(
            ConvexSet::whole_space(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            v(&[1.0, 2.0]),
        );
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn wrong_length_is_rejected() {
        let b = ConvexSet::uniform_box(2, 0.0, 1.0).unwrap();
        assert!(matches!(b.project(&v(&[1.0])), Err(Error::DimensionMismatch(_))));
    }
}
