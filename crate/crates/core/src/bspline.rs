//! Clamped uniform B-splines.
//!
//! A curve of degree `d` with control points `P` (one column per point) is
//! evaluated in derivative form as `s^(r)(t) = P B_r Λ_{d-r}(t)`, where
//! `Λ_{d-r}` collects every degree `d - r` basis function over the *same*
//! knot vector and `B_r` is the derivative basis matrix. The columns of
//! `P B_r` are the virtual control points (VCPs) of order `r`. Because the
//! end knots have multiplicity `d + 1`, the first and last `r` basis functions
//! of degree `d - r` vanish on `[τ_0, τ_ν)` and the matching VCP columns are
//! zero padding; the meaningful VCPs are columns `r..=N`.

use nalgebra::{DMatrix, DVector, DVectorView};
use thiserror::Error;

use crate::quadrature::gauss_legendre;

/// Relative tolerance for the uniform-spacing check.
const UNIFORM_RTOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BSplineError {
    #[error("parameter {t} outside [{start}, {end})")]
    ParameterOutOfRange { t: f64, start: f64, end: f64 },
    #[error("derivative order {order} exceeds degree {degree}")]
    UnsupportedOrder { order: usize, degree: usize },
    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),
    #[error("control point matrix has {got} columns, expected {expected}")]
    ControlPointCount { got: usize, expected: usize },
}

/// Clamped, uniform knot vector `τ_0..τ_ν` for a degree `d` spline.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    /// Validates an explicit knot vector.
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self, BSplineError> {
        let len = knots.len();
        if len < 2 * degree + 2 {
            return Err(BSplineError::InvalidKnots(format!(
                "{len} knots cannot hold an interior span for degree {degree}"
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(BSplineError::InvalidKnots("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(BSplineError::InvalidKnots("knots must be nondecreasing".into()));
        }
        let nu = len - 1;
        let (first, last) = (knots[0], knots[nu]);
        if knots[..=degree].iter().any(|&k| k != first) || knots[nu - degree..].iter().any(|&k| k != last) {
            return Err(BSplineError::InvalidKnots("knot vector is not clamped".into()));
        }
        if last <= first {
            return Err(BSplineError::InvalidKnots("empty parameter interval".into()));
        }
        let n = nu - degree - 1;
        let spans: Vec<f64> = (degree..=n).map(|i| knots[i + 1] - knots[i]).collect();
        let h = spans[0];
        if spans.iter().any(|s| (s - h).abs() > UNIFORM_RTOL * h.abs().max(f64::MIN_POSITIVE)) || h <= 0.0 {
            return Err(BSplineError::InvalidKnots("interior spacing is not uniform".into()));
        }
        Ok(Self { degree, knots })
    }

    /// Knot vector for `num_control_points` points on `[start, end]` with
    /// equally spaced interior knots and end multiplicity `degree + 1`.
    pub fn clamped_uniform(degree: usize, num_control_points: usize, start: f64, end: f64) -> Result<Self, BSplineError> {
        if num_control_points < degree + 1 {
            return Err(BSplineError::InvalidKnots(format!(
                "{num_control_points} control points is too few for degree {degree}"
            )));
        }
        if !(end > start) {
            return Err(BSplineError::InvalidKnots("empty parameter interval".into()));
        }
        let spans = num_control_points - degree;
        let h = (end - start) / spans as f64;
        let mut knots = Vec::with_capacity(num_control_points + degree + 1);
        knots.extend(std::iter::repeat_n(start, degree + 1));
        knots.extend((1..spans).map(|i| start + h * i as f64));
        knots.extend(std::iter::repeat_n(end, degree + 1));
        Self::new(degree, knots)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Index `N` of the last control point.
    pub fn last_index(&self) -> usize {
        self.knots.len() - self.degree - 2
    }

    pub fn num_control_points(&self) -> usize {
        self.last_index() + 1
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Interior knot spacing.
    pub fn spacing(&self) -> f64 {
        self.knots[self.degree + 1] - self.knots[self.degree]
    }

    /// Span index `i` with `τ_i <= t < τ_{i+1}` and `d <= i <= N`.
    pub fn span(&self, t: f64) -> Result<usize, BSplineError> {
        if !(t >= self.start() && t < self.end()) {
            return Err(self.out_of_range(t));
        }
        Ok(self.find_span(t))
    }

    /// Like [`span`](Self::span) but maps `t = τ_ν` onto the last span,
    /// which yields the left limit there.
    pub fn span_closed(&self, t: f64) -> Result<usize, BSplineError> {
        if t == self.end() {
            return Ok(self.last_index());
        }
        self.span(t)
    }

    fn find_span(&self, t: f64) -> usize {
        let (lo, hi) = (self.degree, self.last_index());
        // first knot strictly greater than t, restricted to the interior spans
        let idx = self.knots[lo + 1..=hi + 1].partition_point(|&k| k <= t);
        (lo + idx).min(hi)
    }

    fn out_of_range(&self, t: f64) -> BSplineError {
        BSplineError::ParameterOutOfRange { t, start: self.start(), end: self.end() }
    }
}

/// The `p + 1` nonzero degree-`p` basis values at `t` inside `span`
/// (Cox-de Boor, triangular form).
fn nonzero_basis(knots: &[f64], span: usize, p: usize, t: f64) -> Vec<f64> {
    let mut n = vec![0.0; p + 1];
    let mut left = vec![0.0; p + 1];
    let mut right = vec![0.0; p + 1];
    n[0] = 1.0;
    for j in 1..=p {
        left[j] = t - knots[span + 1 - j];
        right[j] = knots[span + j] - t;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    n
}

/// All degree-`degree` basis values `Λ_degree(t)` over `knots`.
///
/// `degree` may be lower than the knot vector's degree; the result then has
/// `ν - degree` entries, the outermost of which vanish identically.
pub fn eval_basis(knots: &KnotVector, degree: usize, t: f64) -> Result<Vec<f64>, BSplineError> {
    if degree > knots.degree() {
        return Err(BSplineError::UnsupportedOrder { order: degree, degree: knots.degree() });
    }
    let span = knots.span(t)?;
    Ok(scatter_basis(knots, degree, span, t))
}

fn scatter_basis(knots: &KnotVector, degree: usize, span: usize, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; knots.knots().len() - 1 - degree];
    let vals = nonzero_basis(knots.knots(), span, degree, t);
    out[span - degree..=span].copy_from_slice(&vals);
    out
}

/// Derivative basis matrix `B_r` of shape `(N+1) x (N+r+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeBasisMatrix {
    pub order: usize,
    pub matrix: DMatrix<f64>,
}

/// Builds `B_r` by repeated differencing of adjacent control points,
/// `Q^(k)_i = (d-k+1)/(τ_{i+d+1} - τ_{i+k}) (Q^(k-1)_{i+1} - Q^(k-1)_i)`,
/// then pads `r` zero columns on each side.
pub fn derivative_matrix(knots: &KnotVector, order: usize) -> Result<DerivativeBasisMatrix, BSplineError> {
    let d = knots.degree();
    if order > d {
        return Err(BSplineError::UnsupportedOrder { order, degree: d });
    }
    let n = knots.last_index();
    let tau = knots.knots();
    let mut cur = DMatrix::<f64>::identity(n + 1, n + 1);
    for k in 1..=order {
        let cols = n + 1 - k;
        let mut next = DMatrix::<f64>::zeros(n + 1, cols);
        for i in 0..cols {
            let scale = (d - k + 1) as f64 / (tau[i + d + 1] - tau[i + k]);
            let diff = (cur.column(i + 1) - cur.column(i)) * scale;
            next.set_column(i, &diff);
        }
        cur = next;
    }
    let mut matrix = DMatrix::<f64>::zeros(n + 1, n + order + 1);
    matrix.columns_mut(order, n + 1 - order).copy_from(&cur);
    Ok(DerivativeBasisMatrix { order, matrix })
}

/// B-spline curve in `R^m` with control points stored column-wise.
///
/// Virtual control points of every order up to the degree are computed once
/// at construction.
#[derive(Debug, Clone)]
pub struct BSplineCurve {
    knots: KnotVector,
    control: DMatrix<f64>,
    vcps: Vec<DMatrix<f64>>,
}

impl BSplineCurve {
    pub fn new(knots: KnotVector, control: DMatrix<f64>) -> Result<Self, BSplineError> {
        let expected = knots.num_control_points();
        if control.ncols() != expected {
            return Err(BSplineError::ControlPointCount { got: control.ncols(), expected });
        }
        let vcps = (0..=knots.degree())
            .map(|r| derivative_matrix(&knots, r).map(|b| &control * b.matrix))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { knots, control, vcps })
    }

    /// Scalar curve from a list of control values.
    pub fn scalar(knots: KnotVector, values: &[f64]) -> Result<Self, BSplineError> {
        Self::new(knots, DMatrix::from_row_slice(1, values.len(), values))
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.knots.degree()
    }

    pub fn dim(&self) -> usize {
        self.control.nrows()
    }

    pub fn control_points(&self) -> &DMatrix<f64> {
        &self.control
    }

    /// `P^(r) = P B_r`, columns `0..=N+r`.
    pub fn vcps(&self, order: usize) -> Result<&DMatrix<f64>, BSplineError> {
        self.vcps
            .get(order)
            .ok_or(BSplineError::UnsupportedOrder { order, degree: self.degree() })
    }

    /// `s^(r)(t)` on `[τ_0, τ_ν]`; the right end returns the left limit.
    pub fn eval(&self, order: usize, t: f64) -> Result<DVector<f64>, BSplineError> {
        let vcp = self.vcps(order)?;
        let span = self.knots.span_closed(t)?;
        let p = self.degree() - order;
        let basis = nonzero_basis(self.knots.knots(), span, p, t);
        let mut out = DVector::<f64>::zeros(self.dim());
        for (k, b) in basis.iter().enumerate() {
            out += vcp.column(span - p + k) * *b;
        }
        Ok(out)
    }

    /// Scalar convenience for one-dimensional curves.
    pub fn eval_scalar(&self, order: usize, t: f64) -> Result<f64, BSplineError> {
        Ok(self.eval(order, t)?[0])
    }
}

/// `P B_r` as an owned matrix.
pub fn virtual_control_points(curve: &BSplineCurve, order: usize) -> Result<DMatrix<f64>, BSplineError> {
    curve.vcps(order).cloned()
}

pub fn eval_curve(curve: &BSplineCurve, order: usize, t: f64) -> Result<DVector<f64>, BSplineError> {
    curve.eval(order, t)
}

/// First VCP index in `r..=N` rejected by `contains`, if any.
pub fn first_excluded_vcp<F>(curve: &BSplineCurve, order: usize, contains: F) -> Result<Option<usize>, BSplineError>
where
    F: Fn(DVectorView<f64>) -> bool,
{
    let vcp = curve.vcps(order)?;
    let n = curve.knots().last_index();
    Ok((order..=n).find(|&j| !contains(vcp.column(j))))
}

/// Convex-hull inclusion test: if every VCP `p_j^(r)`, `j = r..=N`, lies in
/// a convex set then `s^(r)(t)` stays in that set on `[τ_0, τ_ν)`.
///
/// Sufficient only; `false` does not mean the curve leaves the set.
pub fn inclusion_certificate<F>(curve: &BSplineCurve, order: usize, contains: F) -> Result<bool, BSplineError>
where
    F: Fn(DVectorView<f64>) -> bool,
{
    Ok(first_excluded_vcp(curve, order, contains)?.is_none())
}

/// Gram matrix `∫ Λ_q Λ_q^T dt` of the degree-`q` basis over `knots`,
/// integrated exactly per span with Gauss-Legendre.
pub fn gram_matrix(knots: &KnotVector, degree: usize) -> Result<DMatrix<f64>, BSplineError> {
    if degree > knots.degree() {
        return Err(BSplineError::UnsupportedOrder { order: degree, degree: knots.degree() });
    }
    let size = knots.knots().len() - 1 - degree;
    let mut g = DMatrix::<f64>::zeros(size, size);
    // integrand has degree 2q; n nodes are exact up to degree 2n - 1
    let (nodes, weights) = gauss_legendre(degree + 1);
    let tau = knots.knots();
    for span in knots.degree()..=knots.last_index() {
        let (a, b) = (tau[span], tau[span + 1]);
        let half = 0.5 * (b - a);
        for (x, w) in nodes.iter().zip(&weights) {
            let t = a + half * (x + 1.0);
            let vals = nonzero_basis(tau, span, degree, t);
            let base = span - degree;
            for (i, vi) in vals.iter().enumerate() {
                for (j, vj) in vals.iter().enumerate() {
                    g[(base + i, base + j)] += w * half * vi * vj;
                }
            }
        }
    }
    Ok(g)
}

/// Matrix `H = B_r G B_r^T` with `∫ ‖s^(r)‖² = Σ_rows P_row H P_row^T`.
pub fn roughness_matrix(knots: &KnotVector, order: usize) -> Result<DMatrix<f64>, BSplineError> {
    let b = derivative_matrix(knots, order)?.matrix;
    let g = gram_matrix(knots, knots.degree() - order)?;
    let h = &b * g * b.transpose();
    Ok((&h + h.transpose()) * 0.5)
}

/// Symmetric square root `F` of [`roughness_matrix`], so that
/// `∫ ‖s^(r)‖² = Σ_rows ‖F P_row^T‖²`.
pub fn roughness_factor(knots: &KnotVector, order: usize) -> Result<DMatrix<f64>, BSplineError> {
    let h = roughness_matrix(knots, order)?;
    let eig = h.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&sqrt_vals) * v.transpose())
}
