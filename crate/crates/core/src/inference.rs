//! Asymptotic accuracy of the MLE: Fisher information, predicted mean square
//! error, first-order bias, bias correction and the σ⁴ remainder of the MSE.

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::geometry::{hodge, Mat2, SensorConfig, Vec2};
use crate::mle::{Estimate, Location};
use crate::projection::Metric2;

/// `J` is singular when `|det J| / ‖J‖₂²` (its reciprocal condition number) falls below this.
pub const SINGULAR_REL_TOL: f64 = 1e-12;

/// Stricter guard for the remainder, whose derivatives blow up near the degeneracy locus.
pub const REMAINDER_REL_TOL: f64 = 1e-3;

fn unit_displacements(cfg: &SensorConfig, x: &Vec2) -> Result<[(Vec2, f64); 3]> {
    let mut out = [(Vec2::zeros(), 0.0); 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let d = x - cfg.sensor(i);
        let r = d.norm();
        if r <= cfg.eps_geom() {
            return Err(Error::AtSensor(i));
        }
        *slot = (d / r, r);
    }
    Ok(out)
}

/// Jacobian of the reduced map: rows `d̃1 − d̃0` and `d̃2 − d̃0` of unit displacements.
pub fn jacobian(cfg: &SensorConfig, x: &Vec2) -> Result<Mat2> {
    let [(n0, _), (n1, _), (n2, _)] = unit_displacements(cfg, x)?;
    let r1 = n1 - n0;
    let r2 = n2 - n0;
    Ok(Mat2::new(r1.x, r1.y, r2.x, r2.y))
}

/// Hessian of a range `‖x − m‖`: `(I − n nᵀ) / r`.
fn range_hessian(n: &Vec2, r: f64) -> Mat2 {
    Mat2::new(n.y * n.y, -n.x * n.y, -n.x * n.y, n.x * n.x) / r
}

/// Hessians of the two components `τ10(x)` and `τ20(x)`.
pub fn hessians(cfg: &SensorConfig, x: &Vec2) -> Result<[Mat2; 2]> {
    let [(n0, r0), (n1, r1), (n2, r2)] = unit_displacements(cfg, x)?;
    let h0 = range_hessian(&n0, r0);
    Ok([range_hessian(&n1, r1) - h0, range_hessian(&n2, r2) - h0])
}

/// `σ_min / σ_max` of a 2×2 matrix. A row of `J` vanishes on the sensor-line
/// prolongations through `m0`, so row norms are no measure of degeneracy.
fn reciprocal_condition(j: &Mat2) -> f64 {
    let top = j.singular_values().max();
    if top > 0.0 {
        j.determinant().abs() / (top * top)
    } else {
        0.0
    }
}

fn checked_inverse(j: &Mat2, rel_tol: f64) -> Result<Mat2> {
    let det = j.determinant();
    if !(reciprocal_condition(j) > rel_tol) {
        return Err(Error::OnDegeneracyLocus(det.abs()));
    }
    j.try_inverse().ok_or(Error::OnDegeneracyLocus(det.abs()))
}

/// Fisher matrix `G = Jᵀ Σ₂⁻¹ J` and its inverse `J⁻¹ Σ₂ J⁻ᵀ`.
pub fn fisher(cfg: &SensorConfig, metric: &Metric2, x: &Vec2) -> Result<(Mat2, Mat2)> {
    let j = jacobian(cfg, x)?;
    let g = j.transpose() * metric.inv() * j;
    let ji = checked_inverse(&j, SINGULAR_REL_TOL)?;
    let ginv = ji * metric.sigma2() * ji.transpose();
    Ok((
        (g + g.transpose()) * 0.5,
        (ginv + ginv.transpose()) * 0.5,
    ))
}

/// Predicted mean square error matrix `G⁻¹`.
pub fn asymptotic_mse(cfg: &SensorConfig, metric: &Metric2, x: &Vec2) -> Result<Mat2> {
    Ok(fisher(cfg, metric, x)?.1)
}

/// The vector `b(x) = J⁻¹ (tr(Hs1 G⁻¹), tr(Hs2 G⁻¹))`; the expected error is `−b/2`.
pub fn bias(cfg: &SensorConfig, metric: &Metric2, x: &Vec2) -> Result<Vec2> {
    let (_, ginv) = fisher(cfg, metric, x)?;
    let [h1, h2] = hessians(cfg, x)?;
    let ji = checked_inverse(&jacobian(cfg, x)?, SINGULAR_REL_TOL)?;
    Ok(ji * Vec2::new((h1 * ginv).trace(), (h2 * ginv).trace()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corrected {
    pub position: Vec2,
    /// False when the bias could not be evaluated and `position` is the raw estimate.
    pub corrected: bool,
}

/// `x̄ + b(x̄)/2`, evaluated at the estimate itself. `None` for sources at infinity.
pub fn bias_corrected(cfg: &SensorConfig, metric: &Metric2, estimate: &Estimate) -> Option<Corrected> {
    let position = match estimate.location {
        Location::Finite(p) => p,
        Location::Sensor(i) => cfg.sensor(i),
        Location::Ideal(_) => return None,
    };
    Some(match bias(cfg, metric, &position) {
        Ok(b) => Corrected {
            position: position + 0.5 * b,
            corrected: true,
        },
        Err(_) => Corrected {
            position,
            corrected: false,
        },
    })
}

/// Partial derivatives of the local inverse of the reduced map, up to third order.
///
/// `first[k]`, `second[k][l]` and `third[k][l][m]` are derivatives with respect to
/// `τ_k`, `τ_l`, `τ_m`, obtained by implicit differentiation of `θ(ψ(τ)) = τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseDerivatives {
    pub first: [Vec2; 2],
    pub second: [[Vec2; 2]; 2],
    pub third: [[[Vec2; 2]; 2]; 2],
}

/// Third derivative tensor of a range: `−(δab nc + δac nb + δbc na − 3 na nb nc) / r²`.
fn range_third(n: &Vec2, r: f64, u: &Vec2, v: &Vec2, w: &Vec2) -> f64 {
    let (nu, nv, nw) = (n.dot(u), n.dot(v), n.dot(w));
    -(u.dot(v) * nw + u.dot(w) * nv + v.dot(w) * nu - 3.0 * nu * nv * nw) / (r * r)
}

pub fn inverse_derivatives(cfg: &SensorConfig, x: &Vec2) -> Result<InverseDerivatives> {
    let units = unit_displacements(cfg, x)?;
    let j = jacobian(cfg, x)?;
    let ji = checked_inverse(&j, SINGULAR_REL_TOL)?;
    let [h1, h2] = hessians(cfg, x)?;
    let second_form = |u: &Vec2, v: &Vec2| Vec2::new(u.dot(&(h1 * v)), u.dot(&(h2 * v)));
    let third_form = |u: &Vec2, v: &Vec2, w: &Vec2| {
        let [(n0, r0), (n1, r1), (n2, r2)] = units;
        let t0 = range_third(&n0, r0, u, v, w);
        Vec2::new(
            range_third(&n1, r1, u, v, w) - t0,
            range_third(&n2, r2, u, v, w) - t0,
        )
    };

    let first = [ji.column(0).into_owned(), ji.column(1).into_owned()];
    let mut second = [[Vec2::zeros(); 2]; 2];
    for k in 0..2 {
        for l in 0..2 {
            second[k][l] = -(ji * second_form(&first[k], &first[l]));
        }
    }
    let mut third = [[[Vec2::zeros(); 2]; 2]; 2];
    for k in 0..2 {
        for l in 0..2 {
            for m in 0..2 {
                let rhs = third_form(&first[k], &first[l], &first[m])
                    + second_form(&second[k][l], &first[m])
                    + second_form(&second[k][m], &first[l])
                    + second_form(&first[k], &second[l][m]);
                third[k][l][m] = -(ji * rhs);
            }
        }
    }
    Ok(InverseDerivatives {
        first,
        second,
        third,
    })
}

/// σ⁴ correction `Δ(x)` to the mean square error matrix for `Σ₂ = σ² I`.
///
/// Includes the outer product of the first-order bias, so it predicts
/// `E[(x̄ − x)(x̄ − x)ᵀ] − G⁻¹`.
pub fn remainder(cfg: &SensorConfig, sigma: f64, x: &Vec2) -> Result<Mat2> {
    let j = jacobian(cfg, x)?;
    if !(reciprocal_condition(&j) >= REMAINDER_REL_TOL) {
        return Err(Error::OnDegeneracyLocus(j.determinant().abs()));
    }
    let d = inverse_derivatives(cfg, x)?;
    let d10 = d.first[0];
    let d01 = d.first[1];
    let d20 = d.second[0][0];
    let d02 = d.second[1][1];
    let d11 = d.second[0][1];
    let d30 = d.third[0][0][0];
    let d03 = d.third[1][1][1];
    let d21 = d.third[0][0][1];
    let d12 = d.third[0][1][1];
    let mut out = Mat2::zeros();
    for i in 0..2 {
        for k in 0..2 {
            out[(i, k)] = 3.0 * (d20[i] * d20[k] + d02[i] * d02[k])
                + d20[i] * d02[k]
                + d02[i] * d20[k]
                + 4.0 * d11[i] * d11[k]
                + 2.0 * d10[i] * (d30[k] + d12[k])
                + 2.0 * d01[i] * (d03[k] + d21[k])
                + 2.0 * d10[k] * (d30[i] + d12[i])
                + 2.0 * d01[k] * (d03[i] + d21[i]);
        }
    }
    Ok(out * sigma.powi(4) / 4.0)
}

/// Eigen-decomposition of `G⁻¹` oriented for reporting.
///
/// `radial` belongs to the larger eigenvalue and points away from receiver 0;
/// `transverse` is its counterclockwise normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseAxes {
    pub major: f64,
    pub minor: f64,
    pub radial: Vec2,
    pub transverse: Vec2,
}

impl MseAxes {
    pub fn new(cfg: &SensorConfig, x: &Vec2, ginv: &Mat2) -> Self {
        let eig = ginv.symmetric_eigen();
        let (imax, imin) = if eig.eigenvalues[0] >= eig.eigenvalues[1] {
            (0, 1)
        } else {
            (1, 0)
        };
        let mut radial: Vec2 = eig.eigenvectors.column(imax).into_owned().normalize();
        if radial.dot(&(x - cfg.sensor(0))) < 0.0 {
            radial = -radial;
        }
        Self {
            major: eig.eigenvalues[imax],
            minor: eig.eigenvalues[imin],
            radial,
            transverse: hodge(&radial),
        }
    }

    /// Components of a vector along `(radial, transverse)`.
    pub fn project_vector(&self, v: &Vec2) -> Vector2<f64> {
        Vector2::new(self.radial.dot(v), self.transverse.dot(v))
    }

    /// Quadratic forms `(rᵀ M r, tᵀ M t)` of a matrix on the two axes.
    pub fn project_matrix(&self, m: &Mat2) -> Vector2<f64> {
        Vector2::new(
            self.radial.dot(&(m * self.radial)),
            self.transverse.dot(&(m * self.transverse)),
        )
    }
}

/// Everything the asymptotic theory predicts at one source position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticReport {
    pub x: Vec2,
    pub jacobian: Mat2,
    pub fisher: Mat2,
    pub mse: Mat2,
    /// The vector `b(x)`; the expected estimation error is `−b/2`.
    pub bias_term: Vec2,
    /// `Δ(x)`, available for isotropic `Σ₂` away from the degeneracy locus.
    pub remainder: Option<Mat2>,
    pub axes: MseAxes,
}

impl AsymptoticReport {
    pub fn expected_bias(&self) -> Vec2 {
        -0.5 * self.bias_term
    }

    pub const CSV_HEADER: &'static str =
        "x,y,g11,g12,g22,ginv_eig1,ginv_eig2,bias_r,bias_t,delta_eig1,delta_eig2";

    /// One CSV row; remainder columns are `NaN` when unavailable.
    pub fn csv_row(&self) -> String {
        let b = self.axes.project_vector(&self.expected_bias());
        let delta = self
            .remainder
            .map(|d| self.axes.project_matrix(&d))
            .unwrap_or(Vector2::new(f64::NAN, f64::NAN));
        [
            self.x.x,
            self.x.y,
            self.fisher[(0, 0)],
            self.fisher[(0, 1)],
            self.fisher[(1, 1)],
            self.axes.major,
            self.axes.minor,
            b.x,
            b.y,
            delta.x,
            delta.y,
        ]
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
    }
}

/// `σ` if `Σ₂ = σ² I` exactly.
pub fn isotropic_sigma(metric: &Metric2) -> Option<f64> {
    let s = metric.sigma2();
    (s[(0, 1)] == 0.0 && s[(0, 0)] == s[(1, 1)]).then(|| s[(0, 0)].sqrt())
}

pub fn report(cfg: &SensorConfig, metric: &Metric2, x: &Vec2) -> Result<AsymptoticReport> {
    let j = jacobian(cfg, x)?;
    let (g, ginv) = fisher(cfg, metric, x)?;
    let bias_term = bias(cfg, metric, x)?;
    let remainder = isotropic_sigma(metric).and_then(|s| remainder(cfg, s, x).ok());
    Ok(AsymptoticReport {
        x: *x,
        jacobian: j,
        fisher: g,
        mse: ginv,
        bias_term,
        remainder,
        axes: MseAxes::new(cfg, x, &ginv),
    })
}
