//! Monte Carlo campaign over a grid of source positions.
//!
//! For every grid point the engine draws noisy measurements, localizes each one,
//! accumulates the sample mean square error and bias, and attaches the asymptotic
//! predictions at the same point.
//!
//! # Spec file
//!
//! Plain `key = value` lines (`#` starts a comment):
//!
//! | key | value |
//! |---|---|
//! | `sensors` | six numbers `m0x m0y m1x m1y m2x m2y` |
//! | `sigma` | `iso s` (full Σ = s²I), six numbers `s11 s12 s13 s22 s23 s33` (full Σ), `reduced iso s` (Σ₂ = s²I) or `reduced s11 s12 s22` |
//! | `grid_x`, `grid_y` | `min max count`, inclusive uniform spacing |
//! | `trials` | Monte Carlo draws per point |
//! | `policy` | `oracle` (model from the true region) or `blind` |
//! | `seed` | 64-bit seed |
//! | `out` | output path (optional) |
//! | `level`, `df` | blind acceptance test, defaults `0.05` and `1` (optional) |

use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::{Matrix2, Matrix3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Region, SensorConfig, Vec2};
use crate::inference::{report, AsymptoticReport};
use crate::kv;
use crate::mle::{best_accepted, mle_blind_with, mle_restricted_with, Location, LrtTest, ModelId};
use crate::projection::Metric2;
use crate::statmodel::NoiseModel;

pub const CSV_VERSION: &str = "# tdoaloc campaign csv v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Use the estimator of the region the true source lies in.
    Oracle,
    /// Run all four estimators and keep the accepted one with the smallest statistic.
    Blind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridAxis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn new(min: f64, max: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidSpec("grid count must be at least 1".into()));
        }
        if !(min.is_finite() && max.is_finite()) || max < min {
            return Err(Error::InvalidSpec(format!("bad grid range {min} .. {max}")));
        }
        Ok(Self { min, max, count })
    }

    pub fn single(v: f64) -> Self {
        Self {
            min: v,
            max: v,
            count: 1,
        }
    }

    pub fn value(&self, k: usize) -> f64 {
        if self.count == 1 {
            self.min
        } else {
            self.min + (self.max - self.min) * k as f64 / (self.count - 1) as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct CampaignSpec {
    pub cfg: SensorConfig,
    pub noise: NoiseModel,
    pub grid_x: GridAxis,
    pub grid_y: GridAxis,
    pub trials: usize,
    pub policy: Policy,
    pub test: LrtTest,
    pub out: Option<PathBuf>,
}

fn parse_sigma(entry: &kv::Entry) -> Result<NoiseModel> {
    let tokens: Vec<&str> = entry.value.split_whitespace().collect();
    let bad = |msg: &str| Error::Parse {
        line: entry.line,
        message: format!("key `sigma`: {msg}"),
    };
    let num = |tok: &str| kv::parse_f64(entry, tok);
    let wrap = |r: Result<NoiseModel>| {
        r.map_err(|e| bad(&e.to_string()))
    };
    match tokens.as_slice() {
        ["iso", s] => {
            let s = num(s)?;
            wrap(NoiseModel::reduce_covariance(Matrix3::identity() * (s * s)))
        }
        ["reduced", "iso", s] => {
            let s = num(s)?;
            Ok(NoiseModel::from_metric(Metric2::isotropic(s).map_err(|e| bad(&e.to_string()))?))
        }
        ["reduced", a, b, c] => {
            let (a, b, c) = (num(a)?, num(b)?, num(c)?);
            Ok(NoiseModel::from_metric(
                Metric2::new(Matrix2::new(a, b, b, c)).map_err(|e| bad(&e.to_string()))?,
            ))
        }
        [_, _, _, _, _, _] => {
            let v: Vec<f64> = tokens.iter().map(|t| num(t)).collect::<Result<_>>()?;
            wrap(NoiseModel::reduce_covariance(Matrix3::new(
                v[0], v[1], v[2], v[1], v[3], v[4], v[2], v[4], v[5],
            )))
        }
        _ => Err(bad(
            "expected `iso s`, six upper-triangle entries, `reduced iso s` or `reduced s11 s12 s22`",
        )),
    }
}

fn parse_axis(entry: &kv::Entry) -> Result<GridAxis> {
    let tokens: Vec<&str> = entry.value.split_whitespace().collect();
    let err = |message: String| Error::Parse {
        line: entry.line,
        message: format!("key `{}`: {message}", entry.key),
    };
    let [lo, hi, n] = tokens.as_slice() else {
        return Err(err("expected `min max count`".into()));
    };
    let count: usize = n
        .parse()
        .map_err(|_| err(format!("`{n}` is not a non-negative integer")))?;
    GridAxis::new(kv::parse_f64(entry, lo)?, kv::parse_f64(entry, hi)?, count)
        .map_err(|e| err(e.to_string()))
}

fn parse_int<T: std::str::FromStr>(entry: &kv::Entry) -> Result<T> {
    entry.value.parse().map_err(|_| Error::Parse {
        line: entry.line,
        message: format!("key `{}`: `{}` is not a non-negative integer", entry.key, entry.value),
    })
}

impl CampaignSpec {
    pub fn from_key_value_str(text: &str) -> Result<Self> {
        const KEYS: [&str; 10] = [
            "sensors", "sigma", "grid_x", "grid_y", "trials", "policy", "seed", "out", "level", "df",
        ];
        let entries = kv::parse_entries(text)?;
        if let Some(extra) = entries.iter().find(|e| !KEYS.contains(&e.key.as_str())) {
            return Err(Error::Parse {
                line: extra.line,
                message: format!("unknown key `{}`", extra.key),
            });
        }

        let sensors = kv::require(&entries, "sensors")?;
        let m = kv::parse_numbers(sensors)?;
        if m.len() != 6 {
            return Err(Error::Parse {
                line: sensors.line,
                message: "key `sensors`: expected six numbers".into(),
            });
        }
        let cfg = SensorConfig::new(
            Vec2::new(m[0], m[1]),
            Vec2::new(m[2], m[3]),
            Vec2::new(m[4], m[5]),
        )
        .map_err(|e| Error::Parse {
            line: sensors.line,
            message: format!("key `sensors`: {e}"),
        })?;

        let seed_entry = kv::require(&entries, "seed")?;
        let seed: u64 = parse_int(seed_entry)?;
        let noise = parse_sigma(kv::require(&entries, "sigma")?)?.with_seed(seed);
        let grid_x = parse_axis(kv::require(&entries, "grid_x")?)?;
        let grid_y = parse_axis(kv::require(&entries, "grid_y")?)?;
        let trials_entry = kv::require(&entries, "trials")?;
        let trials: usize = parse_int(trials_entry)?;
        if trials == 0 {
            return Err(Error::Parse {
                line: trials_entry.line,
                message: "key `trials`: must be at least 1".into(),
            });
        }
        let policy_entry = kv::require(&entries, "policy")?;
        let policy = match policy_entry.value.as_str() {
            "oracle" => Policy::Oracle,
            "blind" => Policy::Blind,
            other => {
                return Err(Error::Parse {
                    line: policy_entry.line,
                    message: format!("key `policy`: expected `oracle` or `blind`, found `{other}`"),
                })
            }
        };
        let level = match kv::find(&entries, "level") {
            Some(e) => kv::parse_f64(e, &e.value)?,
            None => crate::mle::DEFAULT_LEVEL,
        };
        let df = match kv::find(&entries, "df") {
            Some(e) => kv::parse_f64(e, &e.value)?,
            None => crate::mle::DEFAULT_DF,
        };
        let test = LrtTest::new(level, df).map_err(|e| {
            let line = kv::find(&entries, "level")
                .or_else(|| kv::find(&entries, "df"))
                .map_or(0, |e| e.line);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        Ok(Self {
            cfg,
            noise,
            grid_x,
            grid_y,
            trials,
            policy,
            test,
            out: kv::find(&entries, "out").map(|e| PathBuf::from(&e.value)),
        })
    }

    pub fn point_count(&self) -> usize {
        self.grid_x.count * self.grid_y.count
    }

    /// Row-major: `y` index outer, `x` index inner.
    pub fn point(&self, id: usize) -> Vec2 {
        let ix = id % self.grid_x.count;
        let iy = id / self.grid_x.count;
        Vec2::new(self.grid_x.value(ix), self.grid_y.value(iy))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PointStatus {
    Ok,
    /// On the degeneracy locus; no trials run.
    Skipped,
}

impl PointStatus {
    pub fn label(&self) -> &'static str {
        match self {
            PointStatus::Ok => "ok",
            PointStatus::Skipped => "skipped",
        }
    }
}

/// Per-point Monte Carlo summary and predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignRow {
    pub id: usize,
    pub x: Vec2,
    pub region: Region,
    pub status: PointStatus,
    pub n_trials: usize,
    /// Finite estimates entering the moments.
    pub n_effective: usize,
    /// Estimates at infinity.
    pub n_infinite: usize,
    /// Blind trials where every model was rejected.
    pub n_rejected: usize,
    /// Blind trials whose selected model differs from the true region.
    pub n_disagree: usize,
    /// Sample second moment of the error about the true source.
    pub mse: Matrix2<f64>,
    /// Sample mean of the error.
    pub bias: Vec2,
    pub prediction: Option<AsymptoticReport>,
}

impl CampaignRow {
    /// Sample covariance of the error about its mean.
    pub fn covariance(&self) -> Matrix2<f64> {
        self.mse - self.bias * self.bias.transpose()
    }

    /// Standard errors of the two bias components.
    pub fn bias_standard_error(&self) -> Vec2 {
        let n = self.n_effective as f64;
        let c = self.covariance() * (n / (n - 1.0));
        Vec2::new((c[(0, 0)] / n).sqrt(), (c[(1, 1)] / n).sqrt())
    }

    pub const CSV_HEADER: &'static str = "id,x,y,status,region,n_trials,n_effective,n_infinite,n_rejected,n_disagree,mse_xx,mse_xy,mse_yy,bias_x,bias_y,mse_r,mse_t,bias_r,bias_t,ginv_eig1,ginv_eig2,pred_bias_r,pred_bias_t,delta_eig1,delta_eig2,disc_eig1,disc_eig2";

    pub fn csv_row(&self) -> String {
        let nan = f64::NAN;
        let (mse_rt, bias_rt, eig, pred_b, delta, disc) = match &self.prediction {
            Some(p) => {
                let axes = &p.axes;
                let mse_rt = axes.project_matrix(&self.mse);
                let pb = axes.project_vector(&p.expected_bias());
                let delta = p
                    .remainder
                    .map(|d| axes.project_matrix(&d))
                    .unwrap_or(Vec2::new(nan, nan));
                let disc = axes.project_matrix(&(self.mse - p.mse));
                (
                    mse_rt,
                    axes.project_vector(&self.bias),
                    Vec2::new(axes.major, axes.minor),
                    pb,
                    delta,
                    disc,
                )
            }
            None => {
                let n = Vec2::new(nan, nan);
                (n, n, n, n, n, n)
            }
        };
        let mut s = format!(
            "{},{:.16e},{:.16e},{},{},{},{},{},{},{}",
            self.id,
            self.x.x,
            self.x.y,
            self.status.label(),
            self.region,
            self.n_trials,
            self.n_effective,
            self.n_infinite,
            self.n_rejected,
            self.n_disagree
        );
        for v in [
            self.mse[(0, 0)],
            self.mse[(0, 1)],
            self.mse[(1, 1)],
            self.bias.x,
            self.bias.y,
            mse_rt.x,
            mse_rt.y,
            bias_rt.x,
            bias_rt.y,
            eig.x,
            eig.y,
            pred_b.x,
            pred_b.y,
            delta.x,
            delta.y,
            disc.x,
            disc.y,
        ] {
            let _ = write!(s, ",{v:.16e}");
        }
        s
    }
}

#[derive(Debug, Clone, Default)]
struct Moments {
    n: usize,
    infinite: usize,
    rejected: usize,
    disagree: usize,
    sum: Vec2,
    sum_sq: Matrix2<f64>,
}

/// Runs the trials of one grid point. `id` selects the noise stream.
pub fn run_point(spec: &CampaignSpec, id: usize, x: &Vec2) -> CampaignRow {
    let cfg = &spec.cfg;
    let metric = spec.noise.metric();
    let region = cfg.region_classify(x);
    let mut row = CampaignRow {
        id,
        x: *x,
        region,
        status: PointStatus::Skipped,
        n_trials: spec.trials,
        n_effective: 0,
        n_infinite: 0,
        n_rejected: 0,
        n_disagree: 0,
        mse: Matrix2::from_element(f64::NAN),
        bias: Vec2::new(f64::NAN, f64::NAN),
        prediction: None,
    };
    let Some(true_model) = ModelId::for_region(region) else {
        return row;
    };
    row.status = PointStatus::Ok;
    row.prediction = report(cfg, metric, x).ok();

    let center = cfg.tdoa_map(x).as_vector();
    let mut stream = spec.noise.stream(id as u64);
    let mut m = Moments::default();
    for _ in 0..spec.trials {
        let t_hat = crate::geometry::Tdoa2::from_vector(&(center + stream.reduced()));
        let estimate = match spec.policy {
            Policy::Oracle => mle_restricted_with(cfg, metric, &t_hat, true_model, &spec.test),
            Policy::Blind => {
                let all = mle_blind_with(cfg, metric, &t_hat, &spec.test);
                match best_accepted(&all) {
                    Some(e) => {
                        if e.model != true_model {
                            m.disagree += 1;
                        }
                        *e
                    }
                    None => {
                        m.rejected += 1;
                        continue;
                    }
                }
            }
        };
        let p = match estimate.location {
            Location::Finite(p) => p,
            Location::Sensor(i) => cfg.sensor(i),
            Location::Ideal(_) => {
                m.infinite += 1;
                continue;
            }
        };
        let e = p - x;
        m.n += 1;
        m.sum += e;
        m.sum_sq += e * e.transpose();
    }
    row.n_effective = m.n;
    row.n_infinite = m.infinite;
    row.n_rejected = m.rejected;
    row.n_disagree = m.disagree;
    if m.n > 0 {
        row.mse = m.sum_sq / m.n as f64;
        row.bias = m.sum / m.n as f64;
    }
    row
}

#[derive(Debug, Clone)]
pub struct CampaignOutput {
    pub rows: Vec<CampaignRow>,
    /// One line per skipped point.
    pub log: Vec<String>,
}

impl CampaignOutput {
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(64 + self.rows.len() * 480);
        s.push_str(CSV_VERSION);
        s.push('\n');
        s.push_str(CampaignRow::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Processes every grid point in parallel; rows come back in grid order.
pub fn run_campaign(spec: &CampaignSpec) -> CampaignOutput {
    let rows: Vec<CampaignRow> = (0..spec.point_count())
        .into_par_iter()
        .map(|id| run_point(spec, id, &spec.point(id)))
        .collect();
    let log = rows
        .iter()
        .filter(|r| r.status == PointStatus::Skipped)
        .map(|r| {
            format!(
                "point {} at ({}, {}) lies on the degeneracy locus; skipped",
                r.id, r.x.x, r.x.y
            )
        })
        .collect();
    CampaignOutput { rows, log }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = "\
# small test campaign
sensors = 0 0 2 0 2 2
sigma = reduced iso 0.005
grid_x = -1 3 3
grid_y = 0 2 2
trials = 200
policy = oracle
seed = 11
";

    #[test]
    fn parses_and_lays_out_grid() {
        let spec = CampaignSpec::from_key_value_str(SPEC).unwrap();
        assert_eq!(spec.point_count(), 6);
        assert_eq!(spec.point(0), Vec2::new(-1.0, 0.0));
        assert_eq!(spec.point(2), Vec2::new(3.0, 0.0));
        assert_eq!(spec.point(3), Vec2::new(-1.0, 2.0));
        assert!((spec.test.threshold() - 3.841458820694124).abs() < 1e-9);
        assert!(spec.out.is_none());
    }

    #[test]
    fn sigma_grammar() {
        let with = |s: &str| SPEC.replace("sigma = reduced iso 0.005", &format!("sigma = {s}"));
        let full = CampaignSpec::from_key_value_str(&with("iso 0.1")).unwrap();
        let want = Matrix2::new(2.0, 1.0, 1.0, 2.0) * 0.01 / 3.0;
        assert!((full.noise.metric().sigma2() - want).abs().max() < 1e-15);
        let six = CampaignSpec::from_key_value_str(&with("0.01 0 0 0.01 0 0.01")).unwrap();
        assert!((six.noise.metric().sigma2() - want).abs().max() < 1e-15);
        let red = CampaignSpec::from_key_value_str(&with("reduced 2 0.5 1")).unwrap();
        assert_eq!(*red.noise.metric().sigma2(), Matrix2::new(2.0, 0.5, 0.5, 1.0));
        let err = CampaignSpec::from_key_value_str(&with("iso")).unwrap_err();
        assert!(err.to_string().contains("line 3") && err.to_string().contains("sigma"), "{err}");
    }

    #[test]
    fn errors_name_key_and_line() {
        let err = CampaignSpec::from_key_value_str(&SPEC.replace("trials = 200", "trials = many")).unwrap_err();
        assert!(err.to_string().contains("trials") && err.to_string().contains("line 6"));
        let err = CampaignSpec::from_key_value_str(&SPEC.replace("policy = oracle\n", "")).unwrap_err();
        assert!(matches!(err, Error::MissingKey(k) if k == "policy"));
        let err = CampaignSpec::from_key_value_str(&SPEC.replace("grid_x = -1 3 3", "grid_x = -1 3 0")).unwrap_err();
        assert!(err.to_string().contains("grid_x"));
    }

    #[test]
    fn skips_degenerate_points_and_is_reproducible() {
        let spec = CampaignSpec::from_key_value_str(SPEC).unwrap();
        let a = run_campaign(&spec);
        assert_eq!(a.rows.len(), 6);
        // (-1, 0) and (3, 0) prolong the segment m0 -> m1; (1, 0) lies on it.
        assert_eq!(a.rows[0].status, PointStatus::Skipped);
        assert_eq!(a.rows[1].status, PointStatus::Ok);
        assert_eq!(a.rows[2].status, PointStatus::Skipped);
        assert_eq!(a.log.len(), 2);
        assert!(a.rows.iter().enumerate().all(|(k, r)| r.id == k));
        let b = run_campaign(&spec);
        assert_eq!(a.to_csv(), b.to_csv());
        let csv = a.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_VERSION));
        let cols = lines.next().unwrap().split(',').count();
        assert!(lines.all(|l| l.split(',').count() == cols));
    }

    #[test]
    fn predictions_match_standalone_report() {
        let spec = CampaignSpec::from_key_value_str(SPEC).unwrap();
        let out = run_campaign(&spec);
        for r in out.rows.iter().filter(|r| r.status == PointStatus::Ok) {
            let want = report(&spec.cfg, spec.noise.metric(), &r.x).ok();
            assert_eq!(r.prediction, want);
        }
    }

    #[test]
    fn vanishing_noise_gives_vanishing_error() {
        let text = SPEC
            .replace("sigma = reduced iso 0.005", "sigma = reduced iso 1e-12")
            .replace("grid_x = -1 3 3", "grid_x = 1 1 1")
            .replace("grid_y = 0 2 2", "grid_y = 0.5 0.5 1");
        let out = run_campaign(&CampaignSpec::from_key_value_str(&text).unwrap());
        let r = &out.rows[0];
        assert_eq!(r.n_effective, 200);
        assert!(r.bias.norm() < 1e-10);
        assert!(r.mse.norm() < 1e-20);
    }

    #[test]
    fn blind_policy_counts() {
        let text = SPEC.replace("policy = oracle", "policy = blind");
        let out = run_campaign(&CampaignSpec::from_key_value_str(&text).unwrap());
        for r in out.rows.iter().filter(|r| r.status == PointStatus::Ok) {
            assert_eq!(r.n_effective + r.n_infinite + r.n_rejected, r.n_trials);
        }
    }
}
