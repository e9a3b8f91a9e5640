//! Closed-form maximum likelihood estimation for the four restricted models and
//! blind localization with a likelihood-ratio acceptance test.
//!
//! The MLE of each model is the Mahalanobis-nearest point of the closure of its
//! parameter set. Inside the set the measurement itself is the answer; otherwise
//! the nearest of the facet, ellipse and vertex candidates wins.

use std::fmt;
use std::str::FromStr;

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::geometry::{Branch, Preimage, Region, SensorConfig, Tdoa2, Vec2};
use crate::projection::{ellipse_candidates, project_facets, FacetId, Metric2};

pub const DEFAULT_LEVEL: f64 = 0.05;
pub const DEFAULT_DF: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelId {
    /// Parameter set `U`, source in `Omega`.
    M,
    /// Parameter set `U_0`, source in `Omega0`.
    M0,
    M1,
    M2,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [ModelId::M, ModelId::M0, ModelId::M1, ModelId::M2];

    pub fn label(&self) -> &'static str {
        match self {
            ModelId::M => "M",
            ModelId::M0 => "M0",
            ModelId::M1 => "M1",
            ModelId::M2 => "M2",
        }
    }

    pub fn corner_index(&self) -> Option<usize> {
        match self {
            ModelId::M => None,
            ModelId::M0 => Some(0),
            ModelId::M1 => Some(1),
            ModelId::M2 => Some(2),
        }
    }

    pub fn region(&self) -> Region {
        match self.corner_index() {
            None => Region::Omega,
            Some(i) => Region::corner(i),
        }
    }

    /// The model whose sources lie in `region`; `None` on the degeneracy locus.
    pub fn for_region(region: Region) -> Option<ModelId> {
        match region {
            Region::Omega => Some(ModelId::M),
            Region::Omega0 => Some(ModelId::M0),
            Region::Omega1 => Some(ModelId::M1),
            Region::Omega2 => Some(ModelId::M2),
            Region::DegeneracyLocus => None,
        }
    }

    /// Swaps `M1` and `M2` when the receivers were relabeled.
    pub fn relabel(self, cfg: &SensorConfig) -> ModelId {
        match (cfg.relabeled(), self) {
            (true, ModelId::M1) => ModelId::M2,
            (true, ModelId::M2) => ModelId::M1,
            _ => self,
        }
    }

    /// Root of the inverse map that lands in the model's region.
    pub fn branch(&self) -> Branch {
        match self {
            ModelId::M => Branch::Plus,
            _ => Branch::Minus,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "M" => Ok(ModelId::M),
            "M0" => Ok(ModelId::M0),
            "M1" => Ok(ModelId::M1),
            "M2" => Ok(ModelId::M2),
            _ => Err(Error::InvalidSpec(format!("unknown model `{s}`"))),
        }
    }
}

/// Where the estimate places the source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    Finite(Vec2),
    /// Unit direction of a source at infinity.
    Ideal(Vec2),
    /// The source sits on a receiver (internal label).
    Sensor(usize),
}

impl Location {
    /// Coordinates of a finite or on-receiver location.
    pub fn point(&self, cfg: &SensorConfig) -> Option<Vec2> {
        match *self {
            Location::Finite(p) => Some(p),
            Location::Sensor(i) => Some(cfg.sensor(i)),
            Location::Ideal(_) => None,
        }
    }
}

/// Which candidate produced the estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Candidate {
    Interior,
    Facet(FacetId),
    Ellipse { phi: f64 },
    /// The cusp where a facet segment meets the ellipse arc.
    Tangency(FacetId),
    Vertex(usize),
}

impl Candidate {
    pub fn label(&self) -> String {
        match self {
            Candidate::Interior => "interior".to_string(),
            Candidate::Facet(f) => format!("facet{f}"),
            Candidate::Ellipse { .. } => "ellipse".to_string(),
            Candidate::Tangency(f) => format!("tangency{f}"),
            Candidate::Vertex(i) => format!("vertex{i}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub model: ModelId,
    pub tau_bar: Tdoa2,
    pub location: Location,
    /// Squared Mahalanobis distance from the measurement to `tau_bar`.
    pub lrt_stat: f64,
    pub accepted: bool,
    pub candidate: Candidate,
}

/// Acceptance rule `lrt_stat < χ²_df quantile at 1 − level`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrtTest {
    pub level: f64,
    pub df: f64,
}

impl Default for LrtTest {
    fn default() -> Self {
        Self {
            level: DEFAULT_LEVEL,
            df: DEFAULT_DF,
        }
    }
}

impl LrtTest {
    pub fn new(level: f64, df: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidSpec(format!("level {level} outside (0, 1)")));
        }
        if !(df > 0.0 && df.is_finite()) {
            return Err(Error::InvalidSpec(format!("degrees of freedom {df} must be positive")));
        }
        Ok(Self { level, df })
    }

    pub fn threshold(&self) -> f64 {
        ChiSquared::new(self.df)
            .expect("validated degrees of freedom")
            .inverse_cdf(1.0 - self.level)
    }

    pub fn accepts(&self, lrt_stat: f64) -> bool {
        lrt_stat < self.threshold()
    }
}

/// Log-density of `N(tau, Σ₂)` at `t_hat`.
pub fn log_likelihood(metric: &Metric2, t_hat: &Tdoa2, tau: &Tdoa2) -> f64 {
    let det = metric.sigma2().determinant();
    -(std::f64::consts::TAU * det.sqrt()).ln() - 0.5 * metric.distance2(t_hat, tau)
}

/// Preimage of a point on a facet line, where the discriminant vanishes up to rounding.
fn facet_location(cfg: &SensorConfig, t: &Tdoa2, branch: Branch) -> Location {
    match cfg.inverse_map(t, branch) {
        Ok(Preimage::Finite(p)) => Location::Finite(p),
        Ok(Preimage::Ideal(d)) => Location::Ideal(d),
        Err(_) => {
            let cc = cfg.conic_coefficients(t);
            if cc.a != 0.0 {
                Location::Finite(cfg.sensor(0) + cc.l0 - (cc.b / cc.a) * cc.v)
            } else {
                Location::Ideal(cfg.far_field_direction(t))
            }
        }
    }
}

/// MLE for one restricted model. Total: every measurement gets an estimate.
pub fn mle_restricted(
    cfg: &SensorConfig,
    metric: &Metric2,
    t_hat: &Tdoa2,
    model: ModelId,
) -> Estimate {
    mle_restricted_with(cfg, metric, t_hat, model, &LrtTest::default())
}

pub fn mle_restricted_with(
    cfg: &SensorConfig,
    metric: &Metric2,
    t_hat: &Tdoa2,
    model: ModelId,
    test: &LrtTest,
) -> Estimate {
    let branch = model.branch();
    let corner = model.corner_index();
    let interior = match corner {
        None => cfg.in_u(t_hat),
        Some(i) => cfg.in_u_i(t_hat, i),
    };
    if interior {
        if let Ok(pre) = cfg.inverse_map(t_hat, branch) {
            let location = match pre {
                Preimage::Finite(p) => Location::Finite(p),
                Preimage::Ideal(d) => Location::Ideal(d),
            };
            return Estimate {
                model,
                tau_bar: *t_hat,
                location,
                lrt_stat: 0.0,
                accepted: test.accepts(0.0),
                candidate: Candidate::Interior,
            };
        }
    }

    let scale = cfg.aperture();
    let tol = cfg.eps_geom() * scale;
    let mut best: Option<(f64, Tdoa2, Candidate)> = None;
    let mut offer = |d2: f64, point: Tdoa2, cand: Candidate| {
        if best.as_ref().is_none_or(|b| d2 < b.0) {
            best = Some((d2, point, cand));
        }
    };

    let admissible = |f: FacetId| corner.is_none_or(|i| f.vertex() == i);
    for p in project_facets(cfg, metric, t_hat) {
        if admissible(p.facet) && p.on_boundary_of_model {
            offer(p.distance2, p.point, Candidate::Facet(p.facet));
        }
    }
    if let Ok(list) = ellipse_candidates(cfg, metric, t_hat) {
        for e in list {
            let keep = match corner {
                None => cfg.conic_coefficients(&e.point).b <= tol * scale,
                Some(i) => cfg.line_values(&e.point)[i] >= -tol,
            };
            if keep {
                offer(e.distance2, e.point, Candidate::Ellipse { phi: e.phi });
            }
        }
    }
    for f in FacetId::ALL.into_iter().filter(|&f| admissible(f)) {
        let t = f.tangency(cfg);
        offer(metric.distance2(t_hat, &t), t, Candidate::Tangency(f));
    }
    let vertices: &[usize] = match corner {
        None => &[0, 1, 2],
        Some(0) => &[0],
        Some(1) => &[1],
        Some(_) => &[2],
    };
    for &i in vertices {
        let r = cfg.vertex(i);
        offer(metric.distance2(t_hat, &r), r, Candidate::Vertex(i));
    }

    let (lrt_stat, tau_bar, candidate) = best.expect("vertex candidates are always offered");
    let location = match candidate {
        Candidate::Vertex(i) => Location::Sensor(i),
        Candidate::Ellipse { .. } | Candidate::Tangency(_) => {
            Location::Ideal(cfg.far_field_direction(&tau_bar))
        }
        _ => facet_location(cfg, &tau_bar, branch),
    };
    Estimate {
        model,
        tau_bar,
        location,
        lrt_stat,
        accepted: test.accepts(lrt_stat),
        candidate,
    }
}

/// Runs all four restricted estimators and flags those the test accepts.
pub fn mle_blind(
    cfg: &SensorConfig,
    metric: &Metric2,
    t_hat: &Tdoa2,
    alpha_level: f64,
) -> Result<Vec<Estimate>> {
    let test = LrtTest::new(alpha_level, DEFAULT_DF)?;
    Ok(mle_blind_with(cfg, metric, t_hat, &test))
}

pub fn mle_blind_with(
    cfg: &SensorConfig,
    metric: &Metric2,
    t_hat: &Tdoa2,
    test: &LrtTest,
) -> Vec<Estimate> {
    ModelId::ALL
        .iter()
        .map(|&m| mle_restricted_with(cfg, metric, t_hat, m, test))
        .collect()
}

/// The accepted estimate with the smallest statistic, earliest model on ties.
pub fn best_accepted(estimates: &[Estimate]) -> Option<&Estimate> {
    estimates
        .iter()
        .filter(|e| e.accepted)
        .fold(None, |best: Option<&Estimate>, e| match best {
            Some(b) if b.lrt_stat <= e.lrt_stat => Some(b),
            _ => Some(e),
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::wedge_star;
    use nalgebra::Matrix2;
    use std::f64::consts::SQRT_2;

    fn cfg() -> SensorConfig {
        SensorConfig::canonical()
    }

    #[test]
    fn threshold_matches_table() {
        assert!((LrtTest::default().threshold() - 3.841_458_820_694_124).abs() < 1e-9);
        assert!((LrtTest::new(0.05, 2.0).unwrap().threshold() - 5.991_464_547_107_979).abs() < 1e-9);
        assert!(LrtTest::new(1.5, 1.0).is_err());
    }

    #[test]
    fn log_likelihood_examples() {
        let m = Metric2::identity();
        let t = Tdoa2::new(0.3, 0.1);
        let peak = log_likelihood(&m, &t, &t);
        assert!((peak + std::f64::consts::TAU.ln()).abs() < 1e-15);
        let step = log_likelihood(&m, &Tdoa2::new(1.3, 0.1), &t);
        assert!((step - (peak - 0.5)).abs() < 1e-15);
        let m = Metric2::new(Matrix2::new(2.0, 0.3, 0.3, 1.0)).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..10 {
            let v = log_likelihood(&m, &Tdoa2::new(0.3 + 0.1 * k as f64, 0.1), &t);
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn noiseless_interior_point_is_recovered() {
        let c = cfg();
        let m = Metric2::isotropic(0.005).unwrap();
        let x = Vec2::new(1.2, 0.7);
        let e = mle_restricted(&c, &m, &c.tdoa_map(&x), ModelId::M);
        assert_eq!(e.lrt_stat, 0.0);
        assert_eq!(e.candidate, Candidate::Interior);
        match e.location {
            Location::Finite(p) => assert!((p - x).norm() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn beyond_vertex_snaps_to_sensor() {
        let c = cfg();
        let t = Tdoa2::from_vector(&(c.vertex(0).as_vector() + Vec2::new(1.0, 1.0)));
        let e = mle_restricted(&c, &Metric2::identity(), &t, ModelId::M);
        assert_eq!(e.tau_bar, c.vertex(0));
        assert_eq!(e.location, Location::Sensor(0));
        assert!((e.lrt_stat - 2.0).abs() < 1e-12);
    }

    #[test]
    fn blind_accepts_interior_and_rejects_far() {
        let c = cfg();
        let m = Metric2::isotropic(0.005).unwrap();
        let est = mle_blind(&c, &m, &c.tdoa_map(&Vec2::new(1.0, 0.5)), 0.05).unwrap();
        assert_eq!(est.len(), 4);
        assert!(est[0].accepted && est[0].lrt_stat == 0.0);
        assert_eq!(best_accepted(&est).unwrap().model, ModelId::M);

        let test = LrtTest::default();
        let flags: Vec<bool> = [5.0, 5.0, 5.0, 5.0].iter().map(|&s| test.accepts(s)).collect();
        assert!(flags.iter().all(|f| !f));
        let far = Tdoa2::new(10.0, 10.0);
        let est = mle_blind(&c, &m, &far, 0.05).unwrap();
        assert!(est.iter().all(|e| !e.accepted));
        assert!(best_accepted(&est).is_none());
    }

    #[test]
    fn overlap_point_is_interior_for_corner_model() {
        let c = cfg();
        let m = Metric2::isotropic(0.005).unwrap();
        let x = Vec2::new(-1.0, -0.5);
        let t = c.tdoa_map(&x);
        assert!(c.in_u(&t) && c.in_u_i(&t, 0));
        let est = mle_blind(&c, &m, &t, 0.05).unwrap();
        assert_eq!(est[1].lrt_stat, 0.0);
        assert!(est[1].accepted);
        match est[1].location {
            Location::Finite(p) => assert!((p - x).norm() < 1e-9),
            other => panic!("{other:?}"),
        }
        // The same τ has a second preimage inside Omega.
        match est[0].location {
            Location::Finite(p) => assert_eq!(c.region_classify(&p), Region::Omega),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ellipse_candidate_yields_ideal_direction() {
        let c = cfg();
        let m = Metric2::identity();
        // Just outside the ellipse arc bounding U, away from the facets.
        let u = Vec2::new(1.0, 0.5).normalize();
        let on_e = Tdoa2::new(-u.dot(&c.d10_vec()), -u.dot(&c.d20_vec()));
        let t = Tdoa2::from_vector(&(on_e.as_vector() * 1.02));
        let e = mle_restricted(&c, &m, &t, ModelId::M);
        assert!(matches!(e.candidate, Candidate::Ellipse { .. }), "{e:?}");
        match e.location {
            Location::Ideal(d) => {
                assert!((d - u).norm() < 0.05, "{d:?}");
                assert!((d - c.far_field_direction(&e.tau_bar)).norm() < 1e-15);
                assert!(c.conic_coefficients(&e.tau_bar).a.abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn facet_estimates_map_back_consistently() {
        let c = cfg();
        let m = Metric2::new(Matrix2::new(1.0, 0.25, 0.25, 0.6)).unwrap();
        let mut seen = 0;
        for k in 0..400 {
            let th = k as f64 * 0.0157;
            let t = Tdoa2::new(3.2 * th.cos(), 3.4 * th.sin());
            for model in ModelId::ALL {
                let e = mle_restricted(&c, &m, &t, model);
                if let (Candidate::Facet(_), Location::Finite(p)) = (e.candidate, e.location) {
                    let back = c.tdoa_map(&p);
                    assert!((back.as_vector() - e.tau_bar.as_vector()).norm() < 1e-8);
                    seen += 1;
                }
                let again = mle_restricted(&c, &m, &e.tau_bar, model);
                assert!(again.lrt_stat < 1e-12, "{model} {t} {e:?} {again:?}");
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn cusp_of_corner_set_is_a_candidate() {
        let c = cfg();
        let m = Metric2::new(Matrix2::new(0.32, 0.0, 0.0, 0.29)).unwrap();
        // Left of U0: the nearest feasible point is where the facet τ20 = d20
        // meets the ellipse arc, which is neither a facet foot nor stationary on E.
        let t = Tdoa2::new(-1.02, 2.74);
        let e = mle_restricted(&c, &m, &t, ModelId::M0);
        assert_eq!(e.candidate, Candidate::Tangency(FacetId::ZeroPlus));
        assert!((e.tau_bar.tau10 - SQRT_2).abs() < 1e-15);
        assert!((e.tau_bar.tau20 - 2.0 * SQRT_2).abs() < 1e-15);
        match e.location {
            Location::Ideal(d) => assert!((d - Vec2::new(-1.0, -1.0) / SQRT_2).norm() < 1e-12, "{d:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn facet_tangency_points_lie_on_their_lines() {
        let c = cfg();
        for f in FacetId::ALL {
            let t = f.tangency(&c).as_vector();
            let r = c.vertex(f.vertex()).as_vector();
            assert!(wedge_star(&(t - r), &f.direction()).abs() < 1e-12, "{f}");
            assert!(c.conic_coefficients(&Tdoa2::from_vector(&t)).a.abs() < 1e-12, "{f}");
        }
    }
}
