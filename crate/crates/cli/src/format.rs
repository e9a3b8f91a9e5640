//! Text output. Floats carry 17 significant digits. Coordinates, models and regions
//! are reported in the receiver order of the config file; candidate labels use the
//! internal counter-clockwise order.

use std::fmt::Write as _;

use tdoaloc::*;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub const ESTIMATE_HEADER: &str = "model,accepted,lrt_stat,candidate,tau10,tau20,location,x,y";

pub fn estimates(cfg: &SensorConfig, list: &[Estimate]) -> String {
    let mut out = String::from(ESTIMATE_HEADER);
    out.push('\n');
    for e in list {
        let t = cfg.relabel_tdoa(&e.tau_bar);
        let (kind, p) = match e.location {
            Location::Finite(p) => ("finite".to_string(), p),
            Location::Ideal(d) => ("ideal".to_string(), d),
            Location::Sensor(i) => (format!("sensor{}", cfg.permutation()[i]), cfg.sensor(i)),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            e.model.relabel(cfg),
            e.accepted,
            num(e.lrt_stat),
            e.candidate.label(),
            num(t.tau10),
            num(t.tau20),
            kind,
            num(p.x),
            num(p.y)
        );
    }
    out
}

pub const PROJECTION_HEADER: &str = "kind,label,tau10,tau20,distance2,admissible,phi";

pub fn projections(cfg: &SensorConfig, facets: &[FacetProjection], ellipse: &[EllipseProjection]) -> String {
    let mut out = String::from(PROJECTION_HEADER);
    out.push('\n');
    for f in facets {
        let t = cfg.relabel_tdoa(&f.point);
        let _ = writeln!(
            out,
            "facet,{},{},{},{},{},",
            f.facet,
            num(t.tau10),
            num(t.tau20),
            num(f.distance2),
            f.on_boundary_of_model
        );
    }
    for (k, e) in ellipse.iter().enumerate() {
        let t = cfg.relabel_tdoa(&e.point);
        let _ = writeln!(
            out,
            "ellipse,{k},{},{},{},true,{}",
            num(t.tau10),
            num(t.tau20),
            num(e.distance2),
            num(e.phi)
        );
    }
    out
}

pub fn sextic(cfg: &SensorConfig, s: &DiscriminantSextic) -> String {
    if !cfg.relabeled() {
        return s.to_csv();
    }
    let mut terms: Vec<SexticTerm> = s
        .terms
        .iter()
        .map(|t| SexticTerm { i: t.j, j: t.i, coef: t.coef })
        .collect();
    terms.sort_by_key(|t| std::cmp::Reverse((t.i + t.j, t.i)));
    DiscriminantSextic { terms, residual: s.residual }.to_csv()
}
