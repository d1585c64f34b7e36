use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::Estimate;
use crate::error::{Error, Result};

/// Fringe visibility above which a CHSH violation is possible: 1/sqrt(2).
pub const CHSH_VISIBILITY_BOUND: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    /// Offset A of `A + B sin^2(theta + phi)`.
    pub offset: f64,
    /// Modulation depth B.
    pub amplitude: f64,
    pub phase_deg: f64,
    /// B / (2A + B).
    pub visibility: Estimate,
    pub exceeds_chsh_bound: bool,
}

/// Least-squares fit of `A + B sin^2(theta + phi)` to `(theta_deg, counts)`.
/// The angles must sample the whole 180-degree period: at least four distinct
/// angles with no gap of 90 degrees or more between neighbours.
pub fn fringe_visibility(points: &[(f64, f64)]) -> Result<FringeFit> {
    let mut angles: Vec<f64> = points.iter().map(|p| p.0.rem_euclid(180.0)).collect();
    angles.sort_by(|a, b| a.partial_cmp(b).unwrap());
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if angles.len() < 4 {
        return Err(Error::InvalidParameter("fringe fit needs at least four distinct angles".into()));
    }
    let max_gap = angles
        .windows(2)
        .map(|w| w[1] - w[0])
        .chain(std::iter::once(angles[0] + 180.0 - angles[angles.len() - 1]))
        .fold(0.0, f64::max);
    if max_gap >= 90.0 {
        return Err(Error::InvalidParameter("fringe angles do not span the 180-degree period".into()));
    }
    // sin^2(x + phi) = (1 - cos(2x + 2phi))/2 -> linear in (1, cos 2x, sin 2x)
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for &(theta, y) in points {
        let t = 2.0 * theta.to_radians();
        let row = Vector3::new(1.0, t.cos(), t.sin());
        ata += row * row.transpose();
        atb += row * y;
    }
    let coef = ata
        .lu()
        .solve(&atb)
        .ok_or_else(|| Error::NoFringe("singular fringe design".into()))?;
    let (c0, c1, c2) = (coef[0], coef[1], coef[2]);
    let amp = (c1 * c1 + c2 * c2).sqrt();
    if !(c0 > 0.0) || amp <= 1e-12 * c0.abs() {
        return Err(Error::NoFringe(format!("fitted modulation {amp:e} on offset {c0:e}")));
    }
    let visibility = amp / c0;
    // residual-based uncertainty of amp/c0
    let n = points.len() as f64;
    let rss: f64 = points
        .iter()
        .map(|&(theta, y)| {
            let t = 2.0 * theta.to_radians();
            (y - (c0 + c1 * t.cos() + c2 * t.sin())).powi(2)
        })
        .sum();
    let stderr = if n > 3.0 {
        let cov = ata.try_inverse().unwrap_or_else(Matrix3::zeros) * (rss / (n - 3.0));
        let grad = Vector3::new(-amp / (c0 * c0), c1 / (amp * c0), c2 / (amp * c0));
        (grad.transpose() * cov * grad)[(0, 0)].max(0.0).sqrt()
    } else {
        0.0
    };
    Ok(FringeFit {
        offset: c0 - amp,
        amplitude: 2.0 * amp,
        phase_deg: (0.5 * c2.atan2(-c1)).to_degrees(),
        visibility: Estimate::new(visibility, stderr),
        exceeds_chsh_bound: visibility > CHSH_VISIBILITY_BOUND,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomFit {
    /// Far-delay level C0.
    pub baseline: f64,
    pub visibility: Estimate,
    pub fwhm_um: Estimate,
}

fn dip_profile(tau: f64, w: f64) -> f64 {
    (-4.0 * std::f64::consts::LN_2 * tau * tau / (w * w)).exp()
}

/// Linear least squares of `C0 - D g(tau; w)` at fixed width.
fn fit_at_width(points: &[(f64, f64)], w: f64) -> Option<(f64, f64, f64)> {
    let (mut s1, mut sg, mut sgg, mut sy, mut sgy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(tau, y) in points {
        let g = dip_profile(tau, w);
        s1 += 1.0;
        sg += g;
        sgg += g * g;
        sy += y;
        sgy += g * y;
    }
    let det = s1 * sgg - sg * sg;
    if det.abs() < 1e-300 {
        return None;
    }
    let c0 = (sgg * sy - sg * sgy) / det;
    let d = (sg * sy - s1 * sgy) / det;
    let rss = points.iter().map(|&(tau, y)| (y - c0 + d * dip_profile(tau, w)).powi(2)).sum();
    Some((c0, d, rss))
}

/// Fits `C0 (1 - V exp(-4 ln2 tau^2 / w^2))` to a delay scan `(tau_um, counts)`.
pub fn hom_visibility(points: &[(f64, f64)]) -> Result<HomFit> {
    if points.len() < 4 {
        return Err(Error::InvalidParameter("dip fit needs at least four delays".into()));
    }
    if points.iter().all(|p| p.1 == 0.0) {
        return Err(Error::InvertedDip("scan has no counts".into()));
    }
    let mut taus: Vec<f64> = points.iter().map(|p| p.0).collect();
    taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min_step = taus.windows(2).map(|w| w[1] - w[0]).filter(|&d| d > 0.0).fold(f64::INFINITY, f64::min);
    let span = taus[taus.len() - 1] - taus[0];
    if !(span > 0.0) {
        return Err(Error::InvalidParameter("dip scan has zero delay range".into()));
    }
    let (lo, hi) = ((0.5 * min_step).ln(), (2.0 * span).ln());
    let rss_at = |lw: f64| fit_at_width(points, lw.exp()).map(|r| r.2).unwrap_or(f64::INFINITY);
    // coarse log-grid, then golden-section refinement around the best node
    let grid = 400;
    let step = (hi - lo) / grid as f64;
    let best = (0..=grid)
        .map(|k| lo + k as f64 * step)
        .min_by(|a, b| rss_at(*a).partial_cmp(&rss_at(*b)).unwrap())
        .unwrap();
    let (mut a, mut b) = ((best - step).max(lo), (best + step).min(hi));
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let x1 = b - phi * (b - a);
        let x2 = a + phi * (b - a);
        if rss_at(x1) < rss_at(x2) {
            b = x2;
        } else {
            a = x1;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    let w = (0.5 * (a + b)).exp();
    let (c0, d, rss) = fit_at_width(points, w).ok_or_else(|| Error::InvertedDip("degenerate dip fit".into()))?;
    if !(c0 > 0.0) {
        return Err(Error::InvertedDip(format!("non-positive baseline {c0:e}")));
    }
    let v = d / c0;

    // Gauss-Newton covariance in (C0, V, w)
    let n = points.len() as f64;
    let mut jtj = Matrix3::zeros();
    for &(tau, _) in points {
        let g = dip_profile(tau, w);
        let dw = c0 * v * g * 8.0 * std::f64::consts::LN_2 * tau * tau / (w * w * w);
        let row = Vector3::new(1.0 - v * g, -c0 * g, -dw);
        jtj += row * row.transpose();
    }
    let sigma2 = if n > 3.0 { rss / (n - 3.0) } else { 0.0 };
    let cov = jtj.try_inverse().map(|m| m * sigma2);
    let (v_err, w_err) = cov.map(|c| (c[(1, 1)].max(0.0).sqrt(), c[(2, 2)].max(0.0).sqrt())).unwrap_or((0.0, 0.0));

    let significant = v.abs() > 3.0 * v_err && v.abs() > 1e-9;
    if v < 0.0 && significant {
        return Err(Error::InvertedDip(format!("baseline {c0:e} lies below the dip level (V = {v:.4})")));
    }
    if significant && taus.iter().map(|t| t.abs()).fold(0.0, f64::max) <= 3.0 * w {
        return Err(Error::InvalidParameter(format!("scan lacks baseline points beyond 3 x FWHM ({:.1} um)", 3.0 * w)));
    }
    Ok(HomFit { baseline: c0, visibility: Estimate::new(v, v_err), fwhm_um: Estimate::new(w, w_err) })
}
