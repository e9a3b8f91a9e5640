//! Deterministic geometry of the range-difference maps for three planar receivers.
//!
//! A source `x` is mapped to the complete triple `(τ10, τ20, τ21)` of range
//! differences and to its reduced pair `(τ10, τ20)`. The reduced image lives in
//! the hexagon `P2` cut out by the triangle inequalities, is bounded by the
//! inscribed ellipse `E: a(τ) = 0`, and is covered twice on the three corner
//! regions `U0, U1, U2`. The closed-form inverse `x± = m0 + l0(τ) + λ±(τ) v(τ)`
//! recovers the source from a reduced pair.

use std::fmt;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::kv;

pub type Vec2 = Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;

/// Relative tolerance applied to every boundary test, scaled by the aperture.
pub const GEOM_REL_TOL: f64 = 1e-9;

/// Below this fraction of the squared sensor wedge, `a(τ)` is treated as zero
/// and the diverging inverse branch is reported as a direction at infinity.
pub const IDEAL_REL_TOL: f64 = 1e-12;

/// Dimensionless band around zero of the degeneracy Jacobian expression.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// `∗(u ∧ v) = u1 v2 − u2 v1`.
#[inline]
pub fn wedge_star(u: &Vec2, v: &Vec2) -> f64 {
    u.x * v.y - u.y * v.x
}

/// Counterclockwise rotation by a right angle.
#[inline]
pub fn hodge(v: &Vec2) -> Vec2 {
    Vec2::new(-v.y, v.x)
}

/// A point of the reduced τ-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tdoa2 {
    pub tau10: f64,
    pub tau20: f64,
}

impl Tdoa2 {
    pub const fn new(tau10: f64, tau20: f64) -> Self {
        Self { tau10, tau20 }
    }

    #[inline]
    pub fn as_vector(&self) -> Vec2 {
        Vec2::new(self.tau10, self.tau20)
    }

    #[inline]
    pub fn from_vector(v: &Vec2) -> Self {
        Self::new(v.x, v.y)
    }
}

impl fmt::Display for Tdoa2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.tau10, self.tau20)
    }
}

/// A point of the complete τ-space. Noisy data need not satisfy the plane constraint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tdoa3 {
    pub tau10: f64,
    pub tau20: f64,
    pub tau21: f64,
}

impl Tdoa3 {
    pub const fn new(tau10: f64, tau20: f64, tau21: f64) -> Self {
        Self { tau10, tau20, tau21 }
    }

    /// `τ10 − τ20 + τ21`, zero on the plane of noiseless measurements.
    pub fn plane_residual(&self) -> f64 {
        self.tau10 - self.tau20 + self.tau21
    }

    /// Forgets the third coordinate.
    pub fn forget_third(&self) -> Tdoa2 {
        Tdoa2::new(self.tau10, self.tau20)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.tau10, self.tau20, self.tau21]
    }
}

/// Localization regions of the physical plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Injective region containing the receiver triangle, inverted by `x+`.
    Omega,
    /// Cone with vertex at receiver `i`, inverted by `x−`.
    Omega0,
    Omega1,
    Omega2,
    DegeneracyLocus,
}

impl Region {
    pub fn label(&self) -> &'static str {
        match self {
            Region::Omega => "Omega",
            Region::Omega0 => "Omega0",
            Region::Omega1 => "Omega1",
            Region::Omega2 => "Omega2",
            Region::DegeneracyLocus => "DegeneracyLocus",
        }
    }

    /// Index `i` of a corner region `Omega_i`.
    pub fn corner_index(&self) -> Option<usize> {
        match self {
            Region::Omega0 => Some(0),
            Region::Omega1 => Some(1),
            Region::Omega2 => Some(2),
            _ => None,
        }
    }

    pub fn corner(i: usize) -> Region {
        match i {
            0 => Region::Omega0,
            1 => Region::Omega1,
            2 => Region::Omega2,
            _ => panic!("corner index {i} out of range"),
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Vectors `v(τ)`, `l0(τ)` and the conic polynomials `a, b, c` at one τ-plane point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConicCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub v: Vec2,
    pub l0: Vec2,
}

/// Inverse branch: `Plus` inverts on `Omega`, `Minus` on the corner regions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Plus,
    Minus,
}

/// Preimage of a τ-plane point in the compactified physical plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Preimage {
    Finite(Vec2),
    /// Unit vector pointing from the array toward a source at infinity.
    Ideal(Vec2),
}

/// Sign of the tangency point `T_i^±`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Plus,
    Minus,
}

/// Three non-collinear receivers, labeled so that `∗(d10 ∧ d20) > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    original: [Vec2; 3],
    sensors: [Vec2; 3],
    permutation: [usize; 3],
    d10v: Vec2,
    d20v: Vec2,
    d21v: Vec2,
    d10: f64,
    d20: f64,
    d21: f64,
    wedge: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    eps: f64,
}

impl SensorConfig {
    /// Builds a configuration, swapping `m1` and `m2` if they are clockwise.
    ///
    /// Rejects arrays whose wedge `|∗(d10 ∧ d20)|` is below `1e-9 · max(d)²`.
    pub fn new(m0: Vec2, m1: Vec2, m2: Vec2) -> Result<Self> {
        if [m0, m1, m2].iter().any(|m| !m.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite);
        }
        let original = [m0, m1, m2];
        let raw = wedge_star(&(m1 - m0), &(m2 - m0));
        let (sensors, permutation) = if raw < 0.0 {
            ([m0, m2, m1], [0, 2, 1])
        } else {
            ([m0, m1, m2], [0, 1, 2])
        };
        let d10v = sensors[1] - sensors[0];
        let d20v = sensors[2] - sensors[0];
        let d21v = sensors[2] - sensors[1];
        let (d10, d20, d21) = (d10v.norm(), d20v.norm(), d21v.norm());
        let dmax = d10.max(d20).max(d21);
        let wedge = wedge_star(&d10v, &d20v);
        let tolerance = GEOM_REL_TOL * dmax * dmax;
        if !(wedge > tolerance) {
            return Err(Error::CollinearSensors {
                wedge: wedge.abs(),
                tolerance,
            });
        }
        let angle = |u: &Vec2, v: &Vec2| wedge_star(u, v).abs().atan2(u.dot(v));
        let alpha = angle(&d10v, &d20v);
        let beta = angle(&(-d10v), &d21v);
        let gamma = angle(&(-d20v), &(-d21v));
        Ok(Self {
            original,
            sensors,
            permutation,
            d10v,
            d20v,
            d21v,
            d10,
            d20,
            d21,
            wedge,
            alpha,
            beta,
            gamma,
            eps: GEOM_REL_TOL * dmax,
        })
    }

    /// The array used throughout the examples: `(0,0)`, `(2,0)`, `(2,2)`.
    pub fn canonical() -> Self {
        Self::new(Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 2.0))
            .expect("canonical array is valid")
    }

    /// Receiver `i` in the oriented labeling.
    pub fn sensor(&self, i: usize) -> Vec2 {
        self.sensors[i]
    }

    pub fn sensors(&self) -> &[Vec2; 3] {
        &self.sensors
    }

    /// Receivers in the order they were supplied.
    pub fn original_sensors(&self) -> &[Vec2; 3] {
        &self.original
    }

    /// `permutation()[i]` is the caller's label of internal receiver `i`.
    pub fn permutation(&self) -> [usize; 3] {
        self.permutation
    }

    pub fn relabeled(&self) -> bool {
        self.permutation != [0, 1, 2]
    }

    /// Converts range differences between the caller's labeling and the internal
    /// one. The relabeling only ever swaps receivers 1 and 2, so the map is its
    /// own inverse.
    pub fn relabel_tdoa(&self, t: &Tdoa2) -> Tdoa2 {
        if self.relabeled() {
            Tdoa2::new(t.tau20, t.tau10)
        } else {
            *t
        }
    }

    /// [`relabel_tdoa`](Self::relabel_tdoa) for a covariance of range differences.
    pub fn relabel_covariance(&self, m: &Mat2) -> Mat2 {
        if self.relabeled() {
            Mat2::new(m[(1, 1)], m[(1, 0)], m[(0, 1)], m[(0, 0)])
        } else {
            *m
        }
    }

    /// Swaps `Omega1` and `Omega2` when the receivers were relabeled.
    pub fn relabel_region(&self, r: Region) -> Region {
        match (self.relabeled(), r) {
            (true, Region::Omega1) => Region::Omega2,
            (true, Region::Omega2) => Region::Omega1,
            _ => r,
        }
    }

    pub fn d10(&self) -> f64 {
        self.d10
    }
    pub fn d20(&self) -> f64 {
        self.d20
    }
    pub fn d21(&self) -> f64 {
        self.d21
    }
    pub fn d10_vec(&self) -> Vec2 {
        self.d10v
    }
    pub fn d20_vec(&self) -> Vec2 {
        self.d20v
    }
    pub fn d21_vec(&self) -> Vec2 {
        self.d21v
    }
    /// `∗(d10 ∧ d20)`, strictly positive.
    pub fn wedge(&self) -> f64 {
        self.wedge
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn aperture(&self) -> f64 {
        self.d10.max(self.d20).max(self.d21)
    }
    /// Absolute boundary tolerance in meters.
    pub fn eps_geom(&self) -> f64 {
        self.eps
    }

    /// Image `R^i` of receiver `i`, a vertex of `P2`.
    pub fn vertex(&self, i: usize) -> Tdoa2 {
        match i {
            0 => Tdoa2::new(self.d10, self.d20),
            1 => Tdoa2::new(-self.d10, self.d21 - self.d10),
            2 => Tdoa2::new(self.d21 - self.d20, -self.d20),
            _ => panic!("vertex index {i} out of range"),
        }
    }

    /// Tangency point `T_i^±` of `E` with the hexagon.
    pub fn tangency(&self, i: usize, side: Side) -> Tdoa2 {
        let dir = match i {
            0 => self.d21v / self.d21,
            1 => self.d20v / self.d20,
            2 => self.d10v / self.d10,
            _ => panic!("tangency index {i} out of range"),
        };
        let t = Tdoa2::new(self.d10v.dot(&dir), self.d20v.dot(&dir));
        match side {
            Side::Plus => t,
            Side::Minus => Tdoa2::new(-t.tau10, -t.tau20),
        }
    }

    /// `(τ10, τ20, τ21)` with `τji = dj(x) − di(x)`.
    pub fn tdoa_map_full(&self, x: &Vec2) -> Tdoa3 {
        let [r0, r1, r2] = self.ranges(x);
        Tdoa3::new(r1 - r0, r2 - r0, r2 - r1)
    }

    /// Reduced map `(τ10, τ20)`.
    pub fn tdoa_map(&self, x: &Vec2) -> Tdoa2 {
        let [r0, r1, r2] = self.ranges(x);
        Tdoa2::new(r1 - r0, r2 - r0)
    }

    fn ranges(&self, x: &Vec2) -> [f64; 3] {
        [
            (x - self.sensors[0]).norm(),
            (x - self.sensors[1]).norm(),
            (x - self.sensors[2]).norm(),
        ]
    }

    pub fn conic_coefficients(&self, t: &Tdoa2) -> ConicCoefficients {
        let v = hodge(&(t.tau20 * self.d10v - t.tau10 * self.d20v));
        let l0 = hodge(
            &((self.d20 * self.d20 - t.tau20 * t.tau20) * self.d10v
                - (self.d10 * self.d10 - t.tau10 * t.tau10) * self.d20v),
        ) / (2.0 * self.wedge);
        ConicCoefficients {
            a: v.norm_squared() - self.wedge * self.wedge,
            b: v.dot(&l0),
            c: l0.norm_squared(),
            v,
            l0,
        }
    }

    /// The affine forms `l0, l1, l2` of the lines `L_i` through pairs of tangency points.
    pub fn line_values(&self, t: &Tdoa2) -> [f64; 3] {
        let (d10, d20, d21) = (self.d10, self.d20, self.d21);
        let (t1, t2) = (t.tau10, t.tau20);
        [
            d20 * t1 + d10 * t2 - d10 * d20 * (1.0 + self.alpha.cos()),
            -(d10 + d21) * t1 + d10 * t2 - d10 * d21 * (1.0 + self.beta.cos()),
            d20 * t1 - (d20 + d21) * t2 - d20 * d21 * (1.0 + self.gamma.cos()),
        ]
    }

    /// Triangle inequalities defining `P2`, with tolerance `eps_geom`.
    pub fn polytope_membership(&self, t: &Tdoa2, strict: bool) -> bool {
        let e = if strict { -self.eps } else { self.eps };
        let diff = t.tau20 - t.tau10;
        t.tau10.abs() <= self.d10 + e && t.tau20.abs() <= self.d20 + e && diff.abs() <= self.d21 + e
    }

    /// Parameter set of the model on `Omega`: interior of `P2` with `a < 0` or `b > 0`.
    pub fn in_u(&self, t: &Tdoa2) -> bool {
        if !self.polytope_membership(t, true) {
            return false;
        }
        let cc = self.conic_coefficients(t);
        cc.a < 0.0 || cc.b > 0.0
    }

    /// Parameter set `U_i`: interior of `P2` with `a > 0` and `l_i > 0`.
    pub fn in_u_i(&self, t: &Tdoa2, i: usize) -> bool {
        if !self.polytope_membership(t, true) {
            return false;
        }
        self.conic_coefficients(t).a > 0.0 && self.line_values(t)[i] > 0.0
    }

    /// `∗(d̃1∧d̃0) − ∗(d̃2∧d̃0) + ∗(d̃2∧d̃1)`, which vanishes exactly on the degeneracy
    /// locus and is negative on `Omega`. `None` at a receiver.
    pub fn degeneracy_jacobian(&self, x: &Vec2) -> Option<f64> {
        let mut units = [Vec2::zeros(); 3];
        for (i, u) in units.iter_mut().enumerate() {
            let d = x - self.sensors[i];
            let n = d.norm();
            if n <= self.eps {
                return None;
            }
            *u = d / n;
        }
        let [n0, n1, n2] = units;
        Some(wedge_star(&n1, &n0) - wedge_star(&n2, &n0) + wedge_star(&n2, &n1))
    }

    /// Region label of a physical point.
    pub fn region_classify(&self, x: &Vec2) -> Region {
        let Some(jac) = self.degeneracy_jacobian(x) else {
            return Region::DegeneracyLocus;
        };
        if jac.abs() < DEGENERACY_TOL {
            return Region::DegeneracyLocus;
        }
        if jac < 0.0 {
            return Region::Omega;
        }
        let d: [Vec2; 3] = std::array::from_fn(|i| x - self.sensors[i]);
        let nearest = d.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
        let band = self.eps * nearest;
        let w10 = wedge_star(&d[1], &d[0]);
        let w20 = wedge_star(&d[2], &d[0]);
        let w21 = wedge_star(&d[2], &d[1]);
        let pos = |w: f64| w > band;
        let neg = |w: f64| w < -band;
        if pos(w10) && neg(w20) {
            Region::Omega0
        } else if pos(w10) && pos(w21) {
            Region::Omega1
        } else if neg(w20) && pos(w21) {
            Region::Omega2
        } else {
            Region::DegeneracyLocus
        }
    }

    /// Direction of a source at infinity whose range differences approach `t ∈ E`.
    pub fn far_field_direction(&self, t: &Tdoa2) -> Vec2 {
        let v = self.conic_coefficients(t).v;
        let n = v.norm();
        if n > 0.0 {
            -v / n
        } else {
            Vec2::zeros()
        }
    }

    /// Closed-form inverse `m0 + l0(τ) + λ±(τ) v(τ)`.
    ///
    /// The quadratic `a λ² + 2 b λ + c = 0` is solved with the cancellation-free
    /// pair `q/a`, `c/q`. When `|a|` falls below `IDEAL_REL_TOL · ∗(d10∧d20)²` the
    /// root `q/a` is unbounded; requesting its branch yields [`Preimage::Ideal`].
    pub fn inverse_map(&self, t: &Tdoa2, branch: Branch) -> Result<Preimage> {
        let cc = self.conic_coefficients(t);
        let (a, b, c) = (cc.a, cc.b, cc.c);
        let disc = b * b - a * c;
        let scale = b * b + (a * c).abs();
        if disc < -GEOM_REL_TOL * scale {
            return Err(Error::NoRealPreimage(disc));
        }
        let root = disc.max(0.0).sqrt();
        let sign_b = if b >= 0.0 { 1.0 } else { -1.0 };
        let q = -(b + sign_b * root);
        // q/a is λ− when b ≥ 0 and λ+ when b < 0; c/q is the other root.
        let q_over_a_branch = if b >= 0.0 { Branch::Minus } else { Branch::Plus };
        let degenerate = a.abs() < IDEAL_REL_TOL * self.wedge * self.wedge;
        let lambda = if branch == q_over_a_branch {
            if degenerate {
                return Ok(Preimage::Ideal(self.far_field_direction(t)));
            }
            q / a
        } else if q != 0.0 {
            c / q
        } else if degenerate {
            // a = b = 0: the quadratic is inconsistent unless c = 0 too.
            return Ok(Preimage::Ideal(self.far_field_direction(t)));
        } else {
            0.0
        };
        Ok(Preimage::Finite(self.sensors[0] + cc.l0 + lambda * cc.v))
    }

    /// Parses the `m0x, m0y, m1x, m1y, m2x, m2y` key-value format.
    pub fn from_key_value_str(text: &str) -> Result<Self> {
        let entries = kv::parse_entries(text)?;
        const KEYS: [&str; 6] = ["m0x", "m0y", "m1x", "m1y", "m2x", "m2y"];
        if let Some(extra) = entries.iter().find(|e| !KEYS.contains(&e.key.as_str())) {
            return Err(Error::Parse {
                line: extra.line,
                message: format!("unknown key `{}`", extra.key),
            });
        }
        let mut vals = [0.0; 6];
        for (slot, key) in vals.iter_mut().zip(KEYS) {
            let entry = kv::require(&entries, key)?;
            *slot = kv::parse_f64(entry, &entry.value)?;
        }
        Self::new(
            Vec2::new(vals[0], vals[1]),
            Vec2::new(vals[2], vals[3]),
            Vec2::new(vals[4], vals[5]),
        )
    }

    /// Writes the receivers in their original labeling.
    pub fn to_key_value_string(&self) -> String {
        let mut out = String::new();
        for (i, m) in self.original.iter().enumerate() {
            out.push_str(&format!("m{i}x = {:?}\nm{i}y = {:?}\n", m.x, m.y));
        }
        out
    }
}
