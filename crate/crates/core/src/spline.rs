//! Constrained cubic-spline curves between latent points.
//!
//! A curve from `a` to `b` is the straight line `l(t) = a + t(b - a)` plus a
//! per-dimension spline deviation `S(t)` built from `n` cubic segments. The
//! deviation must vanish at both endpoints and be C0/C1/C2-continuous at the
//! interior knots; those requirements form a homogeneous linear system on the
//! stacked segment coefficients, so every admissible deviation is a point in
//! the null space of the constraint matrix. The free parameters `omega` are
//! coordinates in an orthonormal basis `N` of that null space, with segment
//! coefficients recovered as `xi = N * omega`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{GeometryError, Result};

/// Residual tolerance for `A * N` relative to the largest entry of `A`.
const NULLSPACE_RESIDUAL_TOL: f64 = 1e-10;
/// Orthonormality tolerance for the basis columns.
const BASIS_ORTHO_TOL: f64 = 1e-12;

/// Ordered knots on `[0, 1]` with the endpoints pinned to 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    knots: Vec<f64>,
}

impl KnotVector {
    /// Validates strict monotonicity and exact endpoint values.
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(GeometryError::invalid(
                "knot vector needs at least 2 entries",
            ));
        }
        if knots[0] != 0.0 || *knots.last().unwrap() != 1.0 {
            return Err(GeometryError::invalid(
                "knot vector must start at exactly 0 and end at exactly 1",
            ));
        }
        if knots
            .windows(2)
            .any(|w| w[1].is_nan() || w[0].is_nan() || w[1] <= w[0])
        {
            return Err(GeometryError::invalid("knots must be strictly increasing"));
        }
        Ok(Self { knots })
    }

    /// Uniform knots `h_i = i / n`.
    pub fn uniform(n_segments: usize) -> Result<Self> {
        if n_segments == 0 {
            return Err(GeometryError::invalid("n_segments must be >= 1"));
        }
        let n = n_segments as f64;
        let mut knots: Vec<f64> = (0..=n_segments).map(|i| i as f64 / n).collect();
        // force exact endpoints against rounding
        knots[0] = 0.0;
        *knots.last_mut().unwrap() = 1.0;
        Self::new(knots)
    }

    pub fn n_segments(&self) -> usize {
        self.knots.len() - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Zero-based index of the segment containing `t`; interior knots belong
    /// to the segment on their right, `t = 1` to the last segment.
    pub fn segment_of(&self, t: f64) -> usize {
        let n = self.n_segments();
        let idx = self.knots.partition_point(|&h| h <= t);
        idx.saturating_sub(1).min(n - 1)
    }
}

/// Boundary and continuity constraints on the stacked per-segment cubic
/// coefficients `(a_i, b_i, c_i, d_i)`, in block order: boundary rows, then
/// value, first-derivative and second-derivative continuity rows.
#[derive(Debug, Clone)]
pub struct ConstraintMatrix {
    matrix: DMatrix<f64>,
    knots: KnotVector,
}

impl ConstraintMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn n_segments(&self) -> usize {
        self.knots.n_segments()
    }
}

/// Row vector of monomials `(1, t, t^2, t^3)` evaluated at `t`.
fn powers(t: f64) -> [f64; 4] {
    [1.0, t, t * t, t * t * t]
}

/// Assembles the `(3n - 1) x 4n` constraint system for `n` segments.
///
/// Segment polynomials are expressed in the global parameter `t`, so the
/// continuity windows at knot `h_i` carry `(1, h_i, h_i^2, h_i^3)` and its
/// derivatives directly. For `n = 1` only the two boundary rows exist.
pub fn build_constraint_matrix(n_segments: usize, knots: &KnotVector) -> Result<ConstraintMatrix> {
    if n_segments == 0 {
        return Err(GeometryError::invalid("n_segments must be >= 1"));
    }
    if knots.n_segments() != n_segments {
        return Err(GeometryError::invalid(format!(
            "knot count {} inconsistent with {} segments (need {})",
            knots.knots().len(),
            n_segments,
            n_segments + 1
        )));
    }
    let n = n_segments;
    let h = knots.knots();
    let rows = 3 * n - 1;
    let cols = 4 * n;
    let mut a = DMatrix::zeros(rows, cols);

    // boundary rows: S_1(h_0) = 0 and S_n(h_n) = 0
    let p0 = powers(h[0]);
    let pn = powers(h[n]);
    for j in 0..4 {
        a[(0, j)] = p0[j];
        a[(1, 4 * (n - 1) + j)] = pn[j];
    }

    // continuity rows: one 8-wide window per interior knot per order
    let mut r = 2;
    for order in 0..3usize {
        for i in 1..n {
            let hi = h[i];
            let window: [f64; 8] = match order {
                0 => {
                    let p = powers(hi);
                    [p[0], p[1], p[2], p[3], -p[0], -p[1], -p[2], -p[3]]
                }
                1 => {
                    let (d1, d2) = (2.0 * hi, 3.0 * hi * hi);
                    [0.0, 1.0, d1, d2, 0.0, -1.0, -d1, -d2]
                }
                _ => {
                    let d2 = 6.0 * hi;
                    [0.0, 0.0, 2.0, d2, 0.0, 0.0, -2.0, -d2]
                }
            };
            let off = 4 * (i - 1);
            for (j, w) in window.iter().enumerate() {
                a[(r, off + j)] = *w;
            }
            r += 1;
        }
    }
    debug_assert_eq!(r, rows);

    Ok(ConstraintMatrix {
        matrix: a,
        knots: knots.clone(),
    })
}

/// Orthonormal basis of the constraint null space, shared across the latent
/// dimensions of a curve.
#[derive(Debug, Clone)]
pub struct NullSpaceBasis {
    knots: KnotVector,
    basis: DMatrix<f64>,
}

impl NullSpaceBasis {
    /// Convenience constructor for uniform knots.
    pub fn uniform(n_segments: usize, sv_tol: f64) -> Result<Self> {
        let knots = KnotVector::uniform(n_segments)?;
        let a = build_constraint_matrix(n_segments, &knots)?;
        null_space_basis(&a, sv_tol)
    }

    /// The `4n x k` basis matrix `N`.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    /// Number of free parameters per latent dimension.
    pub fn n_free(&self) -> usize {
        self.basis.ncols()
    }

    pub fn n_segments(&self) -> usize {
        self.knots.n_segments()
    }

    /// `N^T pi(t)` where `pi(t)` carries `(1, t, t^2, t^3)` in the active
    /// segment block and zeros elsewhere: the sensitivity of the deviation
    /// value at `t` to each free parameter.
    pub fn sensitivity_row(&self, t: f64) -> DVector<f64> {
        let seg = self.knots.segment_of(t);
        let p = powers(t);
        self.window_dot(seg, &p)
    }

    /// Sensitivity of the deviation velocity at `t` to each free parameter.
    pub fn velocity_row(&self, t: f64) -> DVector<f64> {
        let seg = self.knots.segment_of(t);
        let p = [0.0, 1.0, 2.0 * t, 3.0 * t * t];
        self.window_dot(seg, &p)
    }

    fn window_dot(&self, seg: usize, p: &[f64; 4]) -> DVector<f64> {
        let k = self.n_free();
        let off = 4 * seg;
        let mut row = DVector::zeros(k);
        for j in 0..k {
            let mut acc = 0.0;
            for (m, pm) in p.iter().enumerate() {
                acc += pm * self.basis[(off + m, j)];
            }
            row[j] = acc;
        }
        row
    }
}

/// Extracts an orthonormal null-space basis of `A` from its SVD.
///
/// The constraint matrix is wide, so it is padded with zero rows to a square
/// matrix first; this makes the decomposition return all right singular
/// vectors, including the ones spanning the null space. Columns with singular
/// value below `sv_tol * sigma_max` are kept.
pub fn null_space_basis(a: &ConstraintMatrix, sv_tol: f64) -> Result<NullSpaceBasis> {
    if sv_tol <= 0.0 {
        return Err(GeometryError::invalid("sv_tol must be positive"));
    }
    let m = a.matrix();
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Err(GeometryError::invalid("constraint matrix is empty"));
    }

    let dim = rows.max(cols);
    let mut padded = DMatrix::zeros(dim, cols);
    padded.view_mut((0, 0), (rows, cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| GeometryError::numerical("SVD did not return right singular vectors"))?;
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
    if sigma_max <= 0.0 {
        return Err(GeometryError::numerical("constraint matrix has zero norm"));
    }

    let threshold = sv_tol * sigma_max;
    let null_idx: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] < threshold)
        .collect();
    if null_idx.is_empty() {
        return Err(GeometryError::numerical(
            "constraint system has empty null space; no free parameters",
        ));
    }

    let mut basis = DMatrix::zeros(cols, null_idx.len());
    for (j, &i) in null_idx.iter().enumerate() {
        basis.set_column(j, &v_t.row(i).transpose());
    }

    // diagnostic: the extracted columns must actually annihilate A and stay
    // orthonormal, otherwise the rank determination was inconsistent
    let residual = (m * &basis).amax();
    if residual > NULLSPACE_RESIDUAL_TOL * m.amax() {
        return Err(GeometryError::numerical(format!(
            "null-space residual {residual:.3e} exceeds tolerance; rank determination unstable"
        )));
    }
    let gram = basis.transpose() * &basis;
    let ortho_err = (&gram - DMatrix::identity(gram.nrows(), gram.ncols())).amax();
    if ortho_err > BASIS_ORTHO_TOL {
        return Err(GeometryError::numerical(format!(
            "null-space basis not orthonormal (deviation {ortho_err:.3e})"
        )));
    }

    Ok(NullSpaceBasis {
        knots: a.knots().clone(),
        basis,
    })
}

/// A spline curve between two latent points: straight line plus null-space
/// deviation, with one row of free parameters per latent dimension.
#[derive(Debug, Clone)]
pub struct GeodesicCurve {
    a: DVector<f64>,
    b: DVector<f64>,
    basis: Arc<NullSpaceBasis>,
    omega: DMatrix<f64>,
    /// Cached per-dimension segment coefficients, `omega * N^T` (d x 4n).
    coeffs: DMatrix<f64>,
}

impl GeodesicCurve {
    pub fn new(
        a: DVector<f64>,
        b: DVector<f64>,
        basis: Arc<NullSpaceBasis>,
        omega: DMatrix<f64>,
    ) -> Result<Self> {
        if a.len() != b.len() {
            return Err(GeometryError::DimensionMismatch {
                context: "curve endpoints",
                expected: a.len(),
                got: b.len(),
            });
        }
        if omega.nrows() != a.len() {
            return Err(GeometryError::DimensionMismatch {
                context: "omega rows vs latent dim",
                expected: a.len(),
                got: omega.nrows(),
            });
        }
        if omega.ncols() != basis.n_free() {
            return Err(GeometryError::DimensionMismatch {
                context: "omega columns vs basis size",
                expected: basis.n_free(),
                got: omega.ncols(),
            });
        }
        let coeffs = &omega * basis.basis().transpose();
        Ok(Self {
            a,
            b,
            basis,
            omega,
            coeffs,
        })
    }

    /// The straight line `l(t)` (all free parameters zero).
    pub fn straight_line(
        a: DVector<f64>,
        b: DVector<f64>,
        basis: Arc<NullSpaceBasis>,
    ) -> Result<Self> {
        let omega = DMatrix::zeros(a.len(), basis.n_free());
        Self::new(a, b, basis, omega)
    }

    /// Same endpoints and basis with replaced free parameters.
    pub fn with_omega(&self, omega: DMatrix<f64>) -> Result<Self> {
        Self::new(
            self.a.clone(),
            self.b.clone(),
            Arc::clone(&self.basis),
            omega,
        )
    }

    pub fn endpoints(&self) -> (&DVector<f64>, &DVector<f64>) {
        (&self.a, &self.b)
    }

    pub fn omega(&self) -> &DMatrix<f64> {
        &self.omega
    }

    pub fn basis(&self) -> &Arc<NullSpaceBasis> {
        &self.basis
    }

    pub fn latent_dim(&self) -> usize {
        self.a.len()
    }

    pub fn n_free(&self) -> usize {
        self.basis.n_free()
    }

    fn check_t(t: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&t) {
            return Err(GeometryError::invalid(format!(
                "curve parameter t = {t} outside [0, 1]"
            )));
        }
        Ok(())
    }

    /// `gamma(t) = a + t (b - a) + S(t)`.
    pub fn eval(&self, t: f64) -> Result<DVector<f64>> {
        Self::check_t(t)?;
        Ok(self.eval_unchecked(t))
    }

    pub(crate) fn eval_unchecked(&self, t: f64) -> DVector<f64> {
        let seg = self.basis.knots().segment_of(t);
        let off = 4 * seg;
        let d = self.latent_dim();
        let mut out = DVector::zeros(d);
        for dim in 0..d {
            let c0 = self.coeffs[(dim, off)];
            let c1 = self.coeffs[(dim, off + 1)];
            let c2 = self.coeffs[(dim, off + 2)];
            let c3 = self.coeffs[(dim, off + 3)];
            let s = c0 + t * (c1 + t * (c2 + t * c3));
            out[dim] = self.a[dim] + t * (self.b[dim] - self.a[dim]) + s;
        }
        out
    }

    /// `gamma'(t) = (b - a) + S'(t)`; piecewise quadratic per dimension.
    pub fn velocity(&self, t: f64) -> Result<DVector<f64>> {
        Self::check_t(t)?;
        let seg = self.basis.knots().segment_of(t);
        let off = 4 * seg;
        let d = self.latent_dim();
        let mut out = DVector::zeros(d);
        for dim in 0..d {
            let c1 = self.coeffs[(dim, off + 1)];
            let c2 = self.coeffs[(dim, off + 2)];
            let c3 = self.coeffs[(dim, off + 3)];
            out[dim] = (self.b[dim] - self.a[dim]) + c1 + t * (2.0 * c2 + t * 3.0 * c3);
        }
        Ok(out)
    }

    /// Sensitivity `d gamma(t) / d omega` as a `d x k` matrix. The curve is
    /// linear in the free parameters and each dimension has its own row of
    /// `omega`, so every row equals `N^T pi(t)`.
    pub fn param_jacobian(&self, t: f64) -> Result<DMatrix<f64>> {
        Self::check_t(t)?;
        let row = self.basis.sensitivity_row(t);
        let d = self.latent_dim();
        let mut jac = DMatrix::zeros(d, row.len());
        for dim in 0..d {
            jac.row_mut(dim).copy_from(&row.transpose());
        }
        Ok(jac)
    }
}
