//! Analytic set catalog with exact projectors, reflectors, distances,
//! tangent spaces, and the Shapiro constant of a subspace.
//!
//! Every set in the catalog is a nonempty closed subset of `R^n` whose
//! metric projector has a closed form.  Projectors may be multivalued
//! (sphere center, equidistant cloud points); operations return one
//! deterministic selection together with a `multivalued` flag and the tie
//! rule that produced the selection, so traces are reproducible while the
//! set-valued information is preserved.

use crate::error::{Error, Result};
use crate::point::Point;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Membership tolerance used by default for "lies in the set" checks.
pub const MEMBERSHIP_TOL: f64 = 1e-10;

/// Orthonormality tolerance enforced at construction time.
pub const CONSTRUCTION_TOL: f64 = 1e-12;

/// How a deterministic selection was made when the projector is multivalued.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieRule {
    None,
    /// Sphere center: project along the first canonical basis vector.
    CanonicalDirection,
    /// Point cloud ties: pick the point with the lowest index.
    LowestIndex,
}

/// Result of a metric projection: the selected nearest point plus
/// multivaluedness information.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionOutcome {
    pub point: Point,
    pub multivalued: bool,
    pub tie_rule: TieRule,
}

impl ProjectionOutcome {
    fn single(point: Point) -> Self {
        ProjectionOutcome {
            point,
            multivalued: false,
            tie_rule: TieRule::None,
        }
    }
}

/// An affine subspace `anchor + span(basis)` of `R^n`.
///
/// Two representations are kept in sync: an orthonormal basis of the
/// direction space (used by the projector) and an orthonormal basis of its
/// orthogonal complement (the rows of the constraint matrix, used by the
/// Shapiro constant).  The empty basis is a single point; a full basis is
/// the whole space.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineSubspace {
    anchor: Point,
    basis: Vec<Point>,
    complement: Vec<Point>,
}

impl AffineSubspace {
    /// Builds the subspace through `anchor` spanned by `spanning`.
    ///
    /// The spanning vectors are re-orthonormalized (modified Gram-Schmidt);
    /// linearly dependent directions are dropped.  A basis that is already
    /// orthonormal to within `1e-12` is kept as given.
    pub fn new(anchor: Point, spanning: Vec<Point>) -> Result<Self> {
        let n = anchor.dim();
        if !anchor.is_finite() {
            return Err(Error::NonFinite("affine anchor"));
        }
        for v in &spanning {
            if v.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: v.dim(),
                });
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("affine spanning vector"));
            }
        }
        let basis = if is_orthonormal(&spanning, CONSTRUCTION_TOL) {
            spanning
        } else {
            orthonormalize(&spanning, n)
        };
        let complement = orthonormal_complement(&basis, n);
        Ok(AffineSubspace {
            anchor,
            basis,
            complement,
        })
    }

    /// Builds the subspace `{x : <row_i, x> = rhs_i}` from constraint rows.
    ///
    /// The rows must be linearly independent; the anchor is the minimum-norm
    /// solution of the constraint system.
    pub fn from_constraints(rows: Vec<Point>, rhs: Vec<f64>) -> Result<Self> {
        if rows.len() != rhs.len() {
            return Err(Error::invalid(
                "constraints",
                format!("{} rows but {} right-hand sides", rows.len(), rhs.len()),
            ));
        }
        if rows.is_empty() {
            return Err(Error::Empty("constraint rows"));
        }
        let n = rows[0].dim();
        for r in &rows {
            if r.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: r.dim(),
                });
            }
        }
        let k = rows.len();
        let mut a = DMatrix::zeros(k, n);
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                a[(i, j)] = *v;
            }
        }
        let gram = &a * a.transpose();
        let b = nalgebra::DVector::from_column_slice(&rhs);
        let sol =
            gram.clone().lu().solve(&b).ok_or_else(|| {
                Error::invalid("constraints", "rows are rank-deficient".to_string())
            })?;
        let anchor = Point::from_dvector(&(a.transpose() * sol));
        let complement = orthonormalize(&rows, n);
        if complement.len() != k {
            return Err(Error::invalid(
                "constraints",
                "rows are rank-deficient".to_string(),
            ));
        }
        let basis = orthonormal_complement(&complement, n);
        Ok(AffineSubspace {
            anchor,
            basis,
            complement,
        })
    }

    /// The whole space `R^n` as a degenerate affine subspace.
    pub fn whole_space(n: usize) -> Self {
        AffineSubspace {
            anchor: Point::zeros(n),
            basis: (0..n).map(|i| Point::unit(n, i)).collect(),
            complement: Vec::new(),
        }
    }

    /// The single point `{p}`.
    pub fn single_point(p: Point) -> Self {
        let n = p.dim();
        AffineSubspace {
            anchor: p,
            basis: Vec::new(),
            complement: (0..n).map(|i| Point::unit(n, i)).collect(),
        }
    }

    pub fn anchor(&self) -> &Point {
        &self.anchor
    }

    pub fn basis(&self) -> &[Point] {
        &self.basis
    }

    /// Orthonormal rows of the constraint matrix (basis of the orthogonal
    /// complement of the direction space).
    pub fn constraint_rows(&self) -> &[Point] {
        &self.complement
    }

    pub fn ambient_dim(&self) -> usize {
        self.anchor.dim()
    }

    /// Dimension of the subspace itself.
    pub fn subspace_dim(&self) -> usize {
        self.basis.len()
    }

    /// Orthogonal projection of `x` onto the subspace.
    pub fn project_point(&self, x: &Point) -> Point {
        let d = x - &self.anchor;
        let mut out = self.anchor.clone();
        for b in &self.basis {
            out = out + b * d.dot(b);
        }
        out
    }

    /// Projection of a direction vector onto the direction space
    /// `span(basis)` (anchor ignored).
    pub fn project_direction(&self, v: &Point) -> Point {
        let mut out = Point::zeros(v.dim());
        for b in &self.basis {
            out = out + b * v.dot(b);
        }
        out
    }

    /// Re-anchors the subspace at another of its points.
    pub fn with_anchor(&self, anchor: Point) -> Self {
        AffineSubspace {
            anchor,
            basis: self.basis.clone(),
            complement: self.complement.clone(),
        }
    }

    /// Operator norm of the orthogonal-projection matrix
    /// `A^T (A A^T)^{-1} A` built from the constraint rows; `0` when there
    /// are no constraints (the subspace is the whole space, whose distance
    /// function vanishes identically).
    pub fn shapiro_constant(&self) -> Result<f64> {
        shapiro_constant_from_rows(&self.complement)
    }
}

/// Shapiro constant from an explicit constraint matrix: the spectral norm
/// of `A^T (A A^T)^{-1} A`.  Errors when the rows are rank-deficient.
pub fn shapiro_constant_from_rows(rows: &[Point]) -> Result<f64> {
    if rows.is_empty() {
        return Ok(0.0);
    }
    let n = rows[0].dim();
    let k = rows.len();
    let mut a = DMatrix::zeros(k, n);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    let svals = a.clone().singular_values();
    let smax = svals.max();
    let smin = svals.min();
    if smax == 0.0 || smin <= 1e-12 * smax {
        return Err(Error::invalid(
            "constraint matrix",
            "rank-deficient rows".to_string(),
        ));
    }
    let gram = &a * a.transpose();
    let inv = gram
        .try_inverse()
        .ok_or_else(|| Error::invalid("constraint matrix", "rank-deficient rows".to_string()))?;
    let projector = a.transpose() * inv * a;
    Ok(projector.singular_values().max())
}

/// Tagged catalog of closed sets with exact projectors.
///
/// JSON form uses a `"kind"` discriminator:
/// `affine`, `hyperplane`, `halfspace`, `ball`, `sphere`, `box`, `cloud`.
/// Construction invariants (unit normals, orthonormal bases, positive radii,
/// componentwise-ordered box bounds, nonempty clouds) are enforced both by
/// the constructors and on deserialization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SetSpecRaw", into = "SetSpecRaw")]
pub enum SetSpec {
    Affine(AffineSubspace),
    /// `{x : <normal, x> = offset}` with unit normal.
    Hyperplane {
        normal: Point,
        offset: f64,
    },
    /// `{x : <normal, x> <= offset}` with unit normal.
    Halfspace {
        normal: Point,
        offset: f64,
    },
    Ball {
        center: Point,
        radius: f64,
    },
    Sphere {
        center: Point,
        radius: f64,
    },
    Box {
        lower: Point,
        upper: Point,
    },
    Cloud {
        points: Vec<Point>,
    },
}

impl SetSpec {
    pub fn affine(anchor: Point, spanning: Vec<Point>) -> Result<Self> {
        Ok(SetSpec::Affine(AffineSubspace::new(anchor, spanning)?))
    }

    pub fn hyperplane(normal: Point, offset: f64) -> Result<Self> {
        let (normal, offset) = normalize_normal(normal, offset)?;
        Ok(SetSpec::Hyperplane { normal, offset })
    }

    pub fn halfspace(normal: Point, offset: f64) -> Result<Self> {
        let (normal, offset) = normalize_normal(normal, offset)?;
        Ok(SetSpec::Halfspace { normal, offset })
    }

    pub fn ball(center: Point, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        check_finite_point(&center, "ball center")?;
        Ok(SetSpec::Ball { center, radius })
    }

    pub fn sphere(center: Point, radius: f64) -> Result<Self> {
        check_radius(radius)?;
        check_finite_point(&center, "sphere center")?;
        Ok(SetSpec::Sphere { center, radius })
    }

    pub fn box_set(lower: Point, upper: Point) -> Result<Self> {
        if lower.dim() != upper.dim() {
            return Err(Error::DimensionMismatch {
                expected: lower.dim(),
                got: upper.dim(),
            });
        }
        check_finite_point(&lower, "box lower bound")?;
        check_finite_point(&upper, "box upper bound")?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
            return Err(Error::invalid(
                "box",
                "lower bound exceeds upper bound".to_string(),
            ));
        }
        Ok(SetSpec::Box { lower, upper })
    }

    pub fn cloud(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("cloud points"));
        }
        let n = points[0].dim();
        for p in &points {
            if p.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: p.dim(),
                });
            }
            check_finite_point(p, "cloud point")?;
        }
        Ok(SetSpec::Cloud { points })
    }

    /// Ambient dimension of the set.
    pub fn dim(&self) -> usize {
        match self {
            SetSpec::Affine(s) => s.ambient_dim(),
            SetSpec::Hyperplane { normal, .. } | SetSpec::Halfspace { normal, .. } => normal.dim(),
            SetSpec::Ball { center, .. } | SetSpec::Sphere { center, .. } => center.dim(),
            SetSpec::Box { lower, .. } => lower.dim(),
            SetSpec::Cloud { points } => points[0].dim(),
        }
    }

    /// True for the convex catalog variants.
    pub fn is_convex(&self) -> bool {
        !matches!(self, SetSpec::Sphere { .. } | SetSpec::Cloud { .. })
    }

    /// Metric projection of `x` onto the set, with a deterministic
    /// selection when the projector is multivalued.
    pub fn project(&self, x: &Point) -> Result<ProjectionOutcome> {
        self.check_input(x)?;
        Ok(match self {
            SetSpec::Affine(s) => ProjectionOutcome::single(s.project_point(x)),
            SetSpec::Hyperplane { normal, offset } => {
                let t = normal.dot(x) - offset;
                ProjectionOutcome::single(x - &(normal * t))
            }
            SetSpec::Halfspace { normal, offset } => {
                let t = normal.dot(x) - offset;
                if t <= 0.0 {
                    ProjectionOutcome::single(x.clone())
                } else {
                    ProjectionOutcome::single(x - &(normal * t))
                }
            }
            SetSpec::Ball { center, radius } => {
                let d = x.dist(center);
                if d <= *radius {
                    ProjectionOutcome::single(x.clone())
                } else {
                    ProjectionOutcome::single(center + &((x - center) * (radius / d)))
                }
            }
            SetSpec::Sphere { center, radius } => {
                let d = x.dist(center);
                if d == 0.0 {
                    // Every sphere point attains the distance; select along e_1.
                    let mut p = center.clone();
                    p.0[0] += radius;
                    ProjectionOutcome {
                        point: p,
                        multivalued: true,
                        tie_rule: TieRule::CanonicalDirection,
                    }
                } else {
                    ProjectionOutcome::single(center + &((x - center) * (radius / d)))
                }
            }
            SetSpec::Box { lower, upper } => {
                let clamped: Vec<f64> = x
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .map(|(v, (l, u))| v.max(*l).min(*u))
                    .collect();
                ProjectionOutcome::single(Point(clamped))
            }
            SetSpec::Cloud { points } => {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                let mut ties = 0usize;
                for (i, p) in points.iter().enumerate() {
                    let d = x - p;
                    let d2 = d.norm_sq();
                    if d2 < best_d {
                        best = i;
                        best_d = d2;
                        ties = 1;
                    } else if d2 == best_d {
                        ties += 1;
                    }
                }
                let multivalued = ties > 1;
                ProjectionOutcome {
                    point: points[best].clone(),
                    multivalued,
                    tie_rule: if multivalued {
                        TieRule::LowestIndex
                    } else {
                        TieRule::None
                    },
                }
            }
        })
    }

    /// Reflection `2 P(x) - x` with the same tie selection as `project`.
    pub fn reflect(&self, x: &Point) -> Result<Point> {
        let p = self.project(x)?;
        Ok(&p.point * 2.0 - x)
    }

    /// Distance of `x` to the set.
    pub fn distance(&self, x: &Point) -> Result<f64> {
        self.check_input(x)?;
        Ok(match self {
            SetSpec::Affine(s) => x.dist(&s.project_point(x)),
            SetSpec::Hyperplane { normal, offset } => (normal.dot(x) - offset).abs(),
            SetSpec::Halfspace { normal, offset } => (normal.dot(x) - offset).max(0.0),
            SetSpec::Ball { center, radius } => (x.dist(center) - radius).max(0.0),
            SetSpec::Sphere { center, radius } => (x.dist(center) - radius).abs(),
            SetSpec::Box { .. } | SetSpec::Cloud { .. } => x.dist(&self.project(x)?.point),
        })
    }

    /// Membership within tolerance `tol >= 0`.
    pub fn contains(&self, x: &Point, tol: f64) -> Result<bool> {
        if tol.is_nan() || tol < 0.0 {
            return Err(Error::invalid("tol", format!("must be >= 0, got {tol}")));
        }
        Ok(self.distance(x)? <= tol)
    }

    /// Translated tangent space `T_A(anchor) + anchor` at a point of the set
    /// where the tangent cone is a linear subspace.
    ///
    /// Supported: affine subspaces and hyperplanes anywhere, spheres at any
    /// of their points, and strict interior points of balls, halfspaces and
    /// boxes (full tangent cone).  Boundary points of the latter and point
    /// clouds are rejected.
    pub fn tangent_space(&self, anchor: &Point) -> Result<AffineSubspace> {
        self.check_input(anchor)?;
        if !self.contains(anchor, 1e-8)? {
            return Err(Error::invalid(
                "anchor",
                format!("not in the set (distance {:e})", self.distance(anchor)?),
            ));
        }
        match self {
            SetSpec::Affine(s) => Ok(s.with_anchor(anchor.clone())),
            SetSpec::Hyperplane { normal, .. } => {
                let n = normal.dim();
                let complement = vec![normal.clone()];
                let basis = orthonormal_complement(&complement, n);
                Ok(AffineSubspace {
                    anchor: anchor.clone(),
                    basis,
                    complement,
                })
            }
            SetSpec::Sphere { center, radius } => {
                if *radius <= 1e-8 {
                    return Err(Error::Unsupported(
                        "sphere radius too small for a tangent space".into(),
                    ));
                }
                let dir = anchor - center;
                let nd = dir.norm();
                let normal = dir.scale(1.0 / nd);
                let n = anchor.dim();
                let complement = vec![normal];
                let basis = orthonormal_complement(&complement, n);
                Ok(AffineSubspace {
                    anchor: anchor.clone(),
                    basis,
                    complement,
                })
            }
            SetSpec::Ball { center, radius } => {
                if anchor.dist(center) < *radius {
                    Ok(AffineSubspace::whole_space(anchor.dim()).with_anchor(anchor.clone()))
                } else {
                    Err(Error::Unsupported(
                        "tangent cone at the ball boundary is a halfspace, not a subspace".into(),
                    ))
                }
            }
            SetSpec::Halfspace { normal, offset } => {
                if normal.dot(anchor) < *offset {
                    Ok(AffineSubspace::whole_space(anchor.dim()).with_anchor(anchor.clone()))
                } else {
                    Err(Error::Unsupported(
                        "tangent cone at the halfspace boundary is a halfspace, not a subspace"
                            .into(),
                    ))
                }
            }
            SetSpec::Box { lower, upper } => {
                let interior = anchor
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .all(|(v, (l, u))| *l < *v && *v < *u);
                if interior {
                    Ok(AffineSubspace::whole_space(anchor.dim()).with_anchor(anchor.clone()))
                } else {
                    Err(Error::Unsupported(
                        "tangent cone at the box boundary is not a subspace".into(),
                    ))
                }
            }
            SetSpec::Cloud { .. } => Err(Error::Unsupported(
                "point clouds have no tangent subspace".into(),
            )),
        }
    }

    fn check_input(&self, x: &Point) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.dim(),
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("input point"));
        }
        Ok(())
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::invalid(
            "radius",
            format!("must be positive and finite, got {radius}"),
        ));
    }
    Ok(())
}

fn check_finite_point(p: &Point, what: &'static str) -> Result<()> {
    if !p.is_finite() {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

/// Normalizes a normal vector to unit length, rescaling the offset to keep
/// the same set.  Normals already within `1e-12` of unit length are kept
/// bit-identical so round-trips are exact.
fn normalize_normal(normal: Point, offset: f64) -> Result<(Point, f64)> {
    check_finite_point(&normal, "normal")?;
    if !offset.is_finite() {
        return Err(Error::NonFinite("offset"));
    }
    let nn = normal.norm();
    if nn <= 1e-14 {
        return Err(Error::invalid("normal", "zero normal vector".to_string()));
    }
    if (nn - 1.0).abs() <= CONSTRUCTION_TOL {
        Ok((normal, offset))
    } else {
        Ok((normal.scale(1.0 / nn), offset / nn))
    }
}

fn is_orthonormal(vs: &[Point], tol: f64) -> bool {
    for (i, a) in vs.iter().enumerate() {
        if (a.norm() - 1.0).abs() > tol {
            return false;
        }
        for b in vs.iter().skip(i + 1) {
            if a.dot(b).abs() > tol {
                return false;
            }
        }
    }
    true
}

/// Modified Gram-Schmidt; linearly dependent vectors are dropped.
fn orthonormalize(vs: &[Point], n: usize) -> Vec<Point> {
    let mut out: Vec<Point> = Vec::new();
    for v in vs {
        let scale = v.norm();
        if scale == 0.0 {
            continue;
        }
        let mut w = v.clone();
        for b in &out {
            w = &w - &(b * w.dot(b));
        }
        // Second pass stabilizes nearly dependent inputs.
        for b in &out {
            w = &w - &(b * w.dot(b));
        }
        let wn = w.norm();
        if wn > 1e-12 * scale.max(1.0) {
            out.push(w.scale(1.0 / wn));
        }
        if out.len() == n {
            break;
        }
    }
    out
}

/// Orthonormal basis of the orthogonal complement of `span(basis)` in `R^n`.
fn orthonormal_complement(basis: &[Point], n: usize) -> Vec<Point> {
    let mut out = Vec::new();
    let k = basis.len();
    if k >= n {
        return out;
    }
    for i in 0..n {
        let mut w = Point::unit(n, i);
        for b in basis.iter().chain(out.iter()) {
            w = &w - &(b * w.dot(b));
        }
        for b in basis.iter().chain(out.iter()) {
            w = &w - &(b * w.dot(b));
        }
        let wn = w.norm();
        if wn > 1e-8 {
            out.push(w.scale(1.0 / wn));
        }
        if out.len() == n - k {
            break;
        }
    }
    out
}

/// Serde mirror of [`SetSpec`] carrying plain numeric arrays.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum SetSpecRaw {
    Affine {
        anchor: Vec<f64>,
        basis: Vec<Vec<f64>>,
    },
    Hyperplane {
        normal: Vec<f64>,
        offset: f64,
    },
    Halfspace {
        normal: Vec<f64>,
        offset: f64,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Sphere {
        center: Vec<f64>,
        radius: f64,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Cloud {
        points: Vec<Vec<f64>>,
    },
}

impl TryFrom<SetSpecRaw> for SetSpec {
    type Error = Error;
    fn try_from(raw: SetSpecRaw) -> Result<SetSpec> {
        match raw {
            SetSpecRaw::Affine { anchor, basis } => {
                SetSpec::affine(Point(anchor), basis.into_iter().map(Point).collect())
            }
            SetSpecRaw::Hyperplane { normal, offset } => SetSpec::hyperplane(Point(normal), offset),
            SetSpecRaw::Halfspace { normal, offset } => SetSpec::halfspace(Point(normal), offset),
            SetSpecRaw::Ball { center, radius } => SetSpec::ball(Point(center), radius),
            SetSpecRaw::Sphere { center, radius } => SetSpec::sphere(Point(center), radius),
            SetSpecRaw::Box { lower, upper } => SetSpec::box_set(Point(lower), Point(upper)),
            SetSpecRaw::Cloud { points } => SetSpec::cloud(points.into_iter().map(Point).collect()),
        }
    }
}

impl From<SetSpec> for SetSpecRaw {
    fn from(set: SetSpec) -> SetSpecRaw {
        match set {
            SetSpec::Affine(s) => SetSpecRaw::Affine {
                anchor: s.anchor.0,
                basis: s.basis.into_iter().map(|p| p.0).collect(),
            },
            SetSpec::Hyperplane { normal, offset } => SetSpecRaw::Hyperplane {
                normal: normal.0,
                offset,
            },
            SetSpec::Halfspace { normal, offset } => SetSpecRaw::Halfspace {
                normal: normal.0,
                offset,
            },
            SetSpec::Ball { center, radius } => SetSpecRaw::Ball {
                center: center.0,
                radius,
            },
            SetSpec::Sphere { center, radius } => SetSpecRaw::Sphere {
                center: center.0,
                radius,
            },
            SetSpec::Box { lower, upper } => SetSpecRaw::Box {
                lower: lower.0,
                upper: upper.0,
            },
            SetSpec::Cloud { points } => SetSpecRaw::Cloud {
                points: points.into_iter().map(|p| p.0).collect(),
            },
        }
    }
}
