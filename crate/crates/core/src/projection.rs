//! Mahalanobis-orthogonal projections onto the facet lines of the hexagon and onto
//! the inscribed ellipse, with the root-count and discriminant machinery.
//!
//! The ellipse is parametrized as `τ(φ) = (d10 sin φ, d20 sin(φ + α))`. Stationary
//! points of `‖t − τ(φ)‖²` in the metric `Σ₂⁻¹` are the zeros of
//! `g(φ) = ⟨t − τ(φ), τ'(φ)⟩`, which the half-angle substitution turns into a
//! quartic. The number of real zeros is 4 inside the astroid, 2 outside and 3 on it.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{Error, Result};
use crate::geometry::{wedge_star, SensorConfig, Side, Tdoa2, Vec2};
use crate::quartic;

/// Largest accepted condition number of `Σ₂`.
pub const MAX_CONDITION: f64 = 1e12;

/// Ellipse stationary points closer than this fraction of `d10` are one point.
pub const MERGE_REL_TOL: f64 = 1e-6;

/// Imaginary-part threshold separating real from complex quartic roots.
pub const REAL_ROOT_TOL: f64 = 1e-8;

const NEWTON_STEPS: usize = 10;

/// A reduced covariance `Σ₂` and the metric `Σ₂⁻¹` it induces on the τ-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric2 {
    sigma2: Matrix2<f64>,
    inv: Matrix2<f64>,
}

impl Metric2 {
    /// Rejects non-symmetric, indefinite, or nearly singular matrices.
    pub fn new(sigma2: Matrix2<f64>) -> Result<Self> {
        if !sigma2.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = sigma2.abs().max();
        if (sigma2[(0, 1)] - sigma2[(1, 0)]).abs() > 1e-12 * scale {
            return Err(Error::NotPositiveDefinite);
        }
        let sym = (sigma2 + sigma2.transpose()) * 0.5;
        let eig = sym.symmetric_eigenvalues();
        let (lo, hi) = (eig.min(), eig.max());
        if !(lo > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        if hi / lo > MAX_CONDITION {
            return Err(Error::IllConditioned(hi / lo));
        }
        let inv = sym.try_inverse().ok_or(Error::NotPositiveDefinite)?;
        Ok(Self {
            sigma2: sym,
            inv: (inv + inv.transpose()) * 0.5,
        })
    }

    /// `Σ₂ = σ² I`.
    pub fn isotropic(sigma: f64) -> Result<Self> {
        Self::new(Matrix2::identity() * (sigma * sigma))
    }

    pub fn identity() -> Self {
        Self {
            sigma2: Matrix2::identity(),
            inv: Matrix2::identity(),
        }
    }

    pub fn sigma2(&self) -> &Matrix2<f64> {
        &self.sigma2
    }

    pub fn inv(&self) -> &Matrix2<f64> {
        &self.inv
    }

    #[inline]
    pub fn inner(&self, u: &Vec2, v: &Vec2) -> f64 {
        u.dot(&(self.inv * v))
    }

    #[inline]
    pub fn norm2(&self, u: &Vec2) -> f64 {
        self.inner(u, u)
    }

    /// Squared Mahalanobis distance between two τ-plane points.
    #[inline]
    pub fn distance2(&self, a: &Tdoa2, b: &Tdoa2) -> f64 {
        self.norm2(&(a.as_vector() - b.as_vector()))
    }
}

/// The six facet lines `s_i^±` of the hexagon, each through the vertex `R^i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FacetId {
    ZeroPlus,
    ZeroMinus,
    OnePlus,
    OneMinus,
    TwoPlus,
    TwoMinus,
}

impl FacetId {
    pub const ALL: [FacetId; 6] = [
        FacetId::ZeroPlus,
        FacetId::ZeroMinus,
        FacetId::OnePlus,
        FacetId::OneMinus,
        FacetId::TwoPlus,
        FacetId::TwoMinus,
    ];

    /// Index `i` of the vertex `R^i` the line passes through.
    pub fn vertex(&self) -> usize {
        match self {
            FacetId::ZeroPlus | FacetId::ZeroMinus => 0,
            FacetId::OnePlus | FacetId::OneMinus => 1,
            FacetId::TwoPlus | FacetId::TwoMinus => 2,
        }
    }

    /// Direction vector: one of `(1,1)`, `(1,0)`, `(0,1)`.
    pub fn direction(&self) -> Vec2 {
        match self {
            FacetId::OnePlus | FacetId::TwoPlus => Vec2::new(1.0, 1.0),
            FacetId::ZeroPlus | FacetId::TwoMinus => Vec2::new(1.0, 0.0),
            FacetId::ZeroMinus | FacetId::OneMinus => Vec2::new(0.0, 1.0),
        }
    }

    /// The point where `E` touches this facet line; the boundary segment of the
    /// parameter sets runs from `R^i` to it.
    pub fn tangency(&self, cfg: &SensorConfig) -> Tdoa2 {
        let r = cfg.vertex(self.vertex()).as_vector();
        let dir = self.direction();
        let off_line = |t: &Tdoa2| wedge_star(&(t.as_vector() - r), &dir).abs();
        (0..3)
            .flat_map(|i| [cfg.tangency(i, Side::Plus), cfg.tangency(i, Side::Minus)])
            .min_by(|a, b| off_line(a).total_cmp(&off_line(b)))
            .expect("six tangency points")
    }

    pub fn label(&self) -> &'static str {
        match self {
            FacetId::ZeroPlus => "0+",
            FacetId::ZeroMinus => "0-",
            FacetId::OnePlus => "1+",
            FacetId::OneMinus => "1-",
            FacetId::TwoPlus => "2+",
            FacetId::TwoMinus => "2-",
        }
    }
}

impl fmt::Display for FacetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetProjection {
    pub facet: FacetId,
    pub point: Tdoa2,
    /// The foot lies on the hexagon and on the vertex side of the line `L_i`,
    /// i.e. on a boundary segment of the parameter set.
    pub on_boundary_of_model: bool,
    pub distance2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipseProjection {
    /// Parameter in `[0, 2π)`.
    pub phi: f64,
    pub point: Tdoa2,
    pub distance2: f64,
}

/// Orthogonal projections of `t` onto all six facet lines.
pub fn project_facets(cfg: &SensorConfig, metric: &Metric2, t: &Tdoa2) -> [FacetProjection; 6] {
    let tol = cfg.eps_geom() * cfg.aperture();
    FacetId::ALL.map(|facet| {
        let r = cfg.vertex(facet.vertex()).as_vector();
        let v = facet.direction();
        let s = metric.inner(&(t.as_vector() - r), &v) / metric.norm2(&v);
        let point = Tdoa2::from_vector(&(r + s * v));
        let on_boundary_of_model = cfg.polytope_membership(&point, false)
            && cfg.line_values(&point)[facet.vertex()] >= -tol;
        FacetProjection {
            facet,
            point,
            on_boundary_of_model,
            distance2: metric.distance2(t, &point),
        }
    })
}

/// `τ(φ) = (d10 sin φ, d20 sin(φ + α))`, a regular parametrization of the ellipse.
pub fn ellipse_parametrize(cfg: &SensorConfig, phi: f64) -> Tdoa2 {
    Tdoa2::new(cfg.d10() * phi.sin(), cfg.d20() * (phi + cfg.alpha()).sin())
}

/// Matrix `A` with `τ(φ) = A (cos φ, sin φ)`.
fn ellipse_frame(cfg: &SensorConfig) -> Matrix2<f64> {
    let (s, c) = cfg.alpha().sin_cos();
    Matrix2::new(0.0, cfg.d10(), cfg.d20() * s, cfg.d20() * c)
}

fn rotation(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// The stationarity function `g(φ) = pᵀ c'(φ) − c(φ)ᵀ K c'(φ)` in a given frame.
#[derive(Debug, Clone, Copy)]
struct Stationarity {
    frame: Matrix2<f64>,
    p: Vec2,
    k: Matrix2<f64>,
    scale: f64,
}

impl Stationarity {
    fn new(frame: Matrix2<f64>, metric: &Metric2, t: &Tdoa2) -> Self {
        let p = frame.transpose() * metric.inv() * t.as_vector();
        let k = frame.transpose() * metric.inv() * frame;
        let scale = p.abs().max() + k.abs().max();
        Self { frame, p, k, scale }
    }

    fn g(&self, phi: f64) -> f64 {
        let (s, c) = phi.sin_cos();
        let cv = Vec2::new(c, s);
        let dv = Vec2::new(-s, c);
        self.p.dot(&dv) - cv.dot(&(self.k * dv))
    }

    fn dg(&self, phi: f64) -> f64 {
        let (s, c) = phi.sin_cos();
        let cv = Vec2::new(c, s);
        let dv = Vec2::new(-s, c);
        -dv.dot(&(self.k * dv)) - self.p.dot(&cv) + cv.dot(&(self.k * cv))
    }

    /// Coefficients in `u = tan(φ/2)`, highest degree first, of `(1+u²)² g`.
    fn quartic(&self) -> [f64; 5] {
        let (p1, p2) = (self.p.x, self.p.y);
        let k12 = self.k[(0, 1)];
        let d = self.k[(1, 1)] - self.k[(0, 0)];
        [-p2 - k12, -2.0 * p1 + 2.0 * d, 6.0 * k12, -2.0 * p1 - 2.0 * d, p2 - k12]
    }

    fn newton(&self, mut phi: f64) -> f64 {
        let mut gv = self.g(phi);
        for _ in 0..NEWTON_STEPS {
            let d = self.dg(phi);
            if d == 0.0 || gv == 0.0 {
                break;
            }
            let next = phi - gv / d;
            let gn = self.g(next);
            if !(gn.abs() < gv.abs()) {
                break;
            }
            phi = next;
            gv = gn;
        }
        phi
    }

    /// Extremum of `g` near `phi`, used to pin down a near-double root.
    fn extremum(&self, mut phi: f64) -> f64 {
        for _ in 0..NEWTON_STEPS {
            let h = 1e-5;
            let d1 = self.dg(phi);
            let d2 = (self.dg(phi + h) - self.dg(phi - h)) / (2.0 * h);
            if d2 == 0.0 {
                break;
            }
            let step = d1 / d2;
            phi -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        phi
    }
}

/// Stationary points in the rotated frame, plus the frame offset `φ0`.
#[derive(Debug, Clone)]
struct RootSet {
    offset: f64,
    problem: Stationarity,
    /// Angles relative to `offset`, one per distinct real root.
    angles: Vec<f64>,
}

fn stationary_angles(cfg: &SensorConfig, metric: &Metric2, t: &Tdoa2) -> Result<RootSet> {
    if !(t.tau10.is_finite() && t.tau20.is_finite()) {
        return Err(Error::NonFinite);
    }
    let base = ellipse_frame(cfg);
    let unshifted = Stationarity::new(base, metric, t);
    // Rotate so that the point u = ∞ (ψ = π) is as far from a root as possible.
    let offset = (0..8)
        .map(|k| k as f64 * FRAC_PI_4)
        .max_by(|a, b| unshifted.g(a + PI).abs().total_cmp(&unshifted.g(b + PI).abs()))
        .unwrap_or(0.0);
    let problem = Stationarity::new(base * rotation(offset), metric, t);
    let coeffs = problem.quartic();
    let lead = coeffs[0].abs();
    if !(lead > 1e-13 * problem.scale) {
        return Err(Error::DegenerateProjection);
    }

    let mut angles: Vec<(f64, bool)> = Vec::with_capacity(4);
    for z in quartic::roots(&coeffs) {
        let band = 1.0 + z.norm();
        if z.im.abs() < REAL_ROOT_TOL * band {
            angles.push((2.0 * z.re.atan(), false));
        } else if z.im > 0.0 && z.im < 1e-5 * band {
            // A conjugate pair this close to the axis may straddle a double root.
            let psi = problem.extremum(2.0 * z.re.atan());
            if problem.g(psi).abs() <= 1e-12 * problem.scale {
                angles.push((psi, true));
            }
        }
    }

    let merge = MERGE_REL_TOL * cfg.d10();
    let mut distinct: Vec<(f64, bool)> = Vec::with_capacity(4);
    for (psi, double) in angles {
        let here = problem.frame * Vec2::new(psi.cos(), psi.sin());
        let dup = distinct.iter_mut().find(|(other, _)| {
            (problem.frame * Vec2::new(other.cos(), other.sin()) - here).norm() < merge
        });
        match dup {
            Some(existing) => existing.1 = true,
            None => distinct.push((psi, double)),
        }
    }
    Ok(RootSet {
        offset,
        problem,
        angles: distinct.into_iter().map(|(psi, _)| psi).collect(),
    })
}

/// Real Mahalanobis degree: the number of distinct real stationary points of the
/// distance from `t` to the ellipse.
///
/// Fails only when every point of the ellipse is equidistant from `t`.
pub fn rmd(cfg: &SensorConfig, metric: &Metric2, t: &Tdoa2) -> Result<usize> {
    Ok(stationary_angles(cfg, metric, t)?.angles.len())
}

/// Normalized stationarity residual `⟨t − τ, τ'⟩ / (‖τ'‖ (‖t − τ‖ + ‖τ'‖))` in the metric.
pub fn stationarity_residual(cfg: &SensorConfig, metric: &Metric2, t: &Tdoa2, phi: f64) -> f64 {
    let tau = ellipse_parametrize(cfg, phi).as_vector();
    let dtau = Vec2::new(cfg.d10() * phi.cos(), cfg.d20() * (phi + cfg.alpha()).cos());
    let r = t.as_vector() - tau;
    let nd = metric.norm2(&dtau).sqrt();
    metric.inner(&r, &dtau) / (nd * (metric.norm2(&r).sqrt() + nd))
}

/// Stationary points of the squared distance from `t` to the ellipse, polished,
/// deduplicated and sorted by distance (ties by smaller `φ`). No count check.
pub(crate) fn ellipse_candidates(
    cfg: &SensorConfig,
    metric: &Metric2,
    t: &Tdoa2,
) -> Result<Vec<EllipseProjection>> {
    let set = stationary_angles(cfg, metric, t)?;
    let merge = MERGE_REL_TOL * cfg.d10();
    let mut out: Vec<EllipseProjection> = Vec::with_capacity(4);
    for psi in &set.angles {
        let polished = set.problem.newton(*psi);
        let phi = (set.offset + polished).rem_euclid(TAU);
        let phi = if phi >= TAU { 0.0 } else { phi };
        let point = ellipse_parametrize(cfg, phi);
        if out
            .iter()
            .any(|e| (e.point.as_vector() - point.as_vector()).norm() < merge)
        {
            continue;
        }
        out.push(EllipseProjection {
            phi,
            point,
            distance2: metric.distance2(t, &point),
        });
    }
    out.sort_by(|a, b| a.distance2.total_cmp(&b.distance2).then(a.phi.total_cmp(&b.phi)));
    Ok(out)
}

/// All real stationary points of the distance from `t` to the ellipse, nearest first.
///
/// Errors if polishing changes the number of distinct roots found by [`rmd`].
pub fn project_ellipse(
    cfg: &SensorConfig,
    metric: &Metric2,
    t: &Tdoa2,
) -> Result<Vec<EllipseProjection>> {
    let expected = rmd(cfg, metric, t)?;
    let list = ellipse_candidates(cfg, metric, t)?;
    if list.len() != expected || !(2..=4).contains(&list.len()) {
        return Err(Error::ProjectionCountMismatch {
            found: list.len(),
            expected,
        });
    }
    Ok(list)
}

/// Classical discriminant of the stationarity quartic (unrotated frame).
///
/// Positive where four stationary points exist, negative where two do.
pub fn discriminant_value(cfg: &SensorConfig, metric: &Metric2, t: &Tdoa2) -> f64 {
    quartic::discriminant(&Stationarity::new(ellipse_frame(cfg), metric, t).quartic())
}

/// One monomial `coef · τ10^i · τ20^j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SexticTerm {
    pub i: u32,
    pub j: u32,
    pub coef: f64,
}

/// Bivariate polynomial of degree six whose zero set is the astroid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminantSextic {
    /// Ordered by total degree descending, then by `i` descending.
    pub terms: Vec<SexticTerm>,
    /// Relative least-squares residual of the fit.
    pub residual: f64,
}

impl DiscriminantSextic {
    pub fn coefficient(&self, i: u32, j: u32) -> f64 {
        self.terms
            .iter()
            .find(|m| m.i == i && m.j == j)
            .map_or(0.0, |m| m.coef)
    }

    pub fn evaluate(&self, t: &Tdoa2) -> f64 {
        self.terms
            .iter()
            .map(|m| m.coef * t.tau10.powi(m.i as i32) * t.tau20.powi(m.j as i32))
            .sum()
    }

    /// `i,j,coef` rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,coef\n");
        for m in &self.terms {
            out.push_str(&format!("{},{},{:.16e}\n", m.i, m.j, m.coef));
        }
        out
    }
}

fn monomials() -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(28);
    for deg in (0..=6u32).rev() {
        for i in (0..=deg).rev() {
            out.push((i, deg - i));
        }
    }
    out
}

/// Recovers the astroid polynomial by least squares on a 7×7 Chebyshev grid.
///
/// The result is normalized so that the `τ10⁶` coefficient is 1 (or, if that
/// coefficient vanishes, so that the largest coefficient has magnitude 1).
pub fn discriminant_sextic(cfg: &SensorConfig, metric: &Metric2) -> Result<DiscriminantSextic> {
    let scale = cfg.aperture();
    let nodes: Vec<f64> = (0..7)
        .map(|k| ((2 * k + 1) as f64 * PI / 14.0).cos())
        .collect();
    let basis = monomials();
    let rows = nodes.len() * nodes.len();
    let mut vander = DMatrix::<f64>::zeros(rows, basis.len());
    let mut rhs = DVector::<f64>::zeros(rows);
    let mut row = 0;
    for &s1 in &nodes {
        for &s2 in &nodes {
            for (col, &(i, j)) in basis.iter().enumerate() {
                vander[(row, col)] = s1.powi(i as i32) * s2.powi(j as i32);
            }
            rhs[row] = discriminant_value(cfg, metric, &Tdoa2::new(s1 * scale, s2 * scale));
            row += 1;
        }
    }
    let fnorm = rhs.norm();
    if !(fnorm > 0.0) || !fnorm.is_finite() {
        return Err(Error::SexticFit(f64::NAN));
    }
    rhs /= fnorm;
    let svd = vander.clone().svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-14)
        .map_err(|_| Error::SexticFit(f64::NAN))?;
    let residual = (&vander * &sol - &rhs).norm();
    if !(residual <= 1e-6) {
        return Err(Error::SexticFit(residual));
    }
    let mut coefs: Vec<f64> = basis
        .iter()
        .zip(sol.iter())
        .map(|(&(i, j), c)| c / scale.powi((i + j) as i32))
        .collect();
    let biggest = coefs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let lead = coefs[0];
    let norm = if lead.abs() > 1e-12 * biggest { lead } else { biggest };
    for c in &mut coefs {
        *c /= norm;
    }
    Ok(DiscriminantSextic {
        terms: basis
            .iter()
            .zip(coefs)
            .map(|(&(i, j), coef)| SexticTerm { i, j, coef })
            .collect(),
        residual,
    })
}
