//! Gaussian measurement model: reduction of a full 3×3 range-difference covariance
//! to the τ-plane, the sufficient statistic, and reproducible noise sampling.

use nalgebra::{Cholesky, Matrix2, Matrix2x3, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{SensorConfig, Tdoa2, Tdoa3, Vec2};
use crate::projection::Metric2;

/// Normal of the plane `τ10 − τ20 + τ21 = 0` of noiseless measurements.
pub fn plane_normal() -> Vector3<f64> {
    Vector3::new(1.0, -1.0, 1.0)
}

/// Noise covariances plus the seed of the sampling streams.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    sigma3: Option<Matrix3<f64>>,
    projector: Option<Matrix2x3<f64>>,
    metric: Metric2,
    chol: Matrix2<f64>,
    seed: u64,
}

impl NoiseModel {
    /// `Σ₂ = P Σ Pᵀ` with `P` the first two rows of the `Σ⁻¹`-orthogonal projector
    /// `I − Σ n nᵀ / (nᵀ Σ n)` onto the plane.
    pub fn reduce_covariance(sigma3: Matrix3<f64>) -> Result<Self> {
        if !sigma3.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if (sigma3 - sigma3.transpose()).abs().max() > 1e-12 * sigma3.abs().max() {
            return Err(Error::NotPositiveDefinite);
        }
        if Cholesky::new(sigma3).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        let n = plane_normal();
        let sn = sigma3 * n;
        let full = Matrix3::identity() - sn * n.transpose() / n.dot(&sn);
        let p: Matrix2x3<f64> = full.fixed_rows::<2>(0).into_owned();
        let metric = Metric2::new(p * sigma3 * p.transpose())?;
        let mut out = Self::from_metric(metric);
        out.sigma3 = Some(sigma3);
        out.projector = Some(p);
        Ok(out)
    }

    /// Builds the model directly from a reduced covariance; no full-space statistic.
    pub fn from_metric(metric: Metric2) -> Self {
        let chol = Cholesky::new(*metric.sigma2())
            .expect("Metric2 is positive definite")
            .l();
        Self {
            sigma3: None,
            projector: None,
            metric,
            chol,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn metric(&self) -> &Metric2 {
        &self.metric
    }

    pub fn sigma3(&self) -> Option<&Matrix3<f64>> {
        self.sigma3.as_ref()
    }

    /// The 2×3 matrix of the statistic, when the full covariance is known.
    pub fn projector(&self) -> Option<&Matrix2x3<f64>> {
        self.projector.as_ref()
    }

    /// `P τ̂*`, which carries all the information about the source.
    pub fn sufficient_statistic(&self, t_star: &Tdoa3) -> Result<Tdoa2> {
        let p = self
            .projector
            .ok_or_else(|| Error::InvalidSpec("full covariance not specified".into()))?;
        let v = p * Vector3::from(t_star.as_array());
        Ok(Tdoa2::new(v.x, v.y))
    }

    /// Independent generator for one stream, e.g. one grid point.
    pub fn stream(&self, stream: u64) -> NoiseStream {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        NoiseStream {
            rng,
            chol: self.chol,
            chol3: self
                .sigma3
                .map(|s| Cholesky::new(s).expect("validated at construction").l()),
        }
    }

    /// `n` noisy reduced measurements of a source at `x`, from stream 0.
    pub fn sample(&self, cfg: &SensorConfig, x: &Vec2, n: usize) -> Vec<Tdoa2> {
        let center = cfg.tdoa_map(x).as_vector();
        let mut s = self.stream(0);
        (0..n)
            .map(|_| Tdoa2::from_vector(&(center + s.reduced())))
            .collect()
    }
}

/// A seeded Gaussian stream; draws are sequential within the stream.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    chol: Matrix2<f64>,
    chol3: Option<Matrix3<f64>>,
}

impl NoiseStream {
    /// One draw from `N(0, Σ₂)`.
    pub fn reduced(&mut self) -> Vector2<f64> {
        let z = Vector2::new(
            self.rng.sample::<f64, _>(StandardNormal),
            self.rng.sample::<f64, _>(StandardNormal),
        );
        self.chol * z
    }

    /// One draw from `N(0, Σ)` in the full space; `None` without a full covariance.
    pub fn full(&mut self) -> Option<Vector3<f64>> {
        let l = self.chol3?;
        let z = Vector3::new(
            self.rng.sample::<f64, _>(StandardNormal),
            self.rng.sample::<f64, _>(StandardNormal),
            self.rng.sample::<f64, _>(StandardNormal),
        );
        Some(l * z)
    }
}
