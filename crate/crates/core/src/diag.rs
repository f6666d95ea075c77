//! Diagnostics: densities from markers, time derivatives of snapshot fields,
//! power-law decay fits, Jacobian probes and support monitoring.

use std::f64::consts::PI;

use crate::effpot::{angle, turning_points, RadialState, SupportSpec};
use crate::error::{Error, Result};
use crate::field::FieldProfile;
use crate::vlasov::{deposit_sigma, MarkerEnsemble, RadialGrid};

/// Least-squares power law `|y| ~ t^exponent` over a window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub t0: f64,
    pub t1: f64,
    pub exponent: f64,
    /// RMS residual of the fit in `ln |y|`.
    pub residual: f64,
    /// Set when the last quarter of the window has a slope smaller than 0.2
    /// in magnitude, i.e. the series has flattened onto a floor.
    pub floor_flag: bool,
}

/// Slope threshold below which the tail counts as a plateau.
pub const FLOOR_SLOPE: f64 = 0.2;

/// `ρ = π σ / r^2` at the bin centres.
pub fn rho_of_r(ens: &MarkerEnsemble, grid: &RadialGrid) -> Result<Vec<f64>> {
    let sigma = deposit_sigma(ens, grid)?;
    Ok(sigma
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let r = grid.center(i);
            PI * s / (r * r)
        })
        .collect())
}

/// `∂_s φ` at the nodes of equally spaced snapshots: centred differences in
/// the interior and second-order one-sided differences at both ends.
pub fn dphi_dt_fd(snapshots: &[&FieldProfile], cadence: f64) -> Result<Vec<Vec<f64>>> {
    if snapshots.len() < 3 {
        return Err(Error::InsufficientSnapshots {
            needed: 3,
            got: snapshots.len(),
        });
    }
    if !(cadence > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "cadence must be positive, got {cadence}"
        )));
    }
    let values: Vec<Vec<f64>> = snapshots.iter().map(|f| f.phi_values().to_vec()).collect();
    let n = values[0].len();
    if values.iter().any(|v| v.len() != n)
        || snapshots.iter().any(|f| f.nodes() != snapshots[0].nodes())
    {
        return Err(Error::InvalidSpec(
            "snapshots must share one radial grid".into(),
        ));
    }
    let m = values.len();
    let out = (0..m)
        .map(|k| {
            (0..n)
                .map(|i| {
                    let v = |j: usize| values[j][i];
                    if k == 0 {
                        (-3.0 * v(0) + 4.0 * v(1) - v(2)) / (2.0 * cadence)
                    } else if k == m - 1 {
                        (3.0 * v(m - 1) - 4.0 * v(m - 2) + v(m - 3)) / (2.0 * cadence)
                    } else {
                        (v(k + 1) - v(k - 1)) / (2.0 * cadence)
                    }
                })
                .collect()
        })
        .collect();
    Ok(out)
}

fn slope(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (b, my - b * mx)
}

/// Log-log least-squares fit of `|y|` against `t` on `[t0, t1]`.
pub fn decay_fit(t: &[f64], y: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let (t0, t1) = window;
    if !(t0 >= 1.0) || !(t1 > 2.0 * t0) {
        return Err(Error::InvalidSpec(format!(
            "fit window must satisfy t0 >= 1 and t1 > 2 t0, got [{t0}, {t1}]"
        )));
    }
    if t.len() != y.len() {
        return Err(Error::InvalidSpec(
            "time and value series differ in length".into(),
        ));
    }
    let mut points = Vec::new();
    for (&ti, &yi) in t.iter().zip(y) {
        if ti >= t0 && ti <= t1 {
            if !(yi > 0.0) {
                return Err(Error::NonPositiveValues(format!("y({ti}) = {yi}")));
            }
            points.push((ti.ln(), yi.ln()));
        }
    }
    if points.len() < 8 {
        return Err(Error::InsufficientSnapshots {
            needed: 8,
            got: points.len(),
        });
    }
    let (b, a) = slope(&points);
    let residual = (points
        .iter()
        .map(|p| (p.1 - a - b * p.0).powi(2))
        .sum::<f64>()
        / points.len() as f64)
        .sqrt();
    let tail = &points[points.len() - (points.len() / 4).max(2)..];
    let (tail_slope, _) = slope(tail);
    Ok(DecayFit {
        t0,
        t1,
        exponent: b,
        residual,
        floor_flag: tail_slope.abs() < FLOOR_SLOPE,
    })
}

/// Largest `|v|` among nodes with radius inside `[lo, hi]`.
pub fn annulus_sup(radii: &[f64], values: &[f64], annulus: (f64, f64)) -> f64 {
    radii
        .iter()
        .zip(values)
        .filter(|(r, _)| **r >= annulus.0 && **r <= annulus.1)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max)
}

/// Central-difference determinant of `∂(Q_T, H)/∂(r, w)` at fixed `L`.
pub fn jacobian_probe(state: &RadialState, field: &FieldProfile) -> Result<f64> {
    jacobian_probe_with(state, field, 1e-4)
}

/// As [`jacobian_probe`] with the stencil `δ = step · (r+ - r-)` in `r` and
/// `δ = step · max(|w|, 0.1)` in `w`.
pub fn jacobian_probe_with(state: &RadialState, field: &FieldProfile, step: f64) -> Result<f64> {
    let h = state.energy(field);
    let (rm, rp) = turning_points(h, state.l, field)?;
    let span = rp - rm;
    if state.r - rm < 1e-3 * span || rp - state.r < 1e-3 * span {
        return Err(Error::OutOfOrbit(format!(
            "r = {} within 1e-3 of a turning point of [{rm}, {rp}]",
            state.r
        )));
    }
    let dr = step * span;
    let dw = step * state.w.abs().max(0.1);
    let eval = |r: f64, w: f64| -> Result<(f64, f64)> {
        let s = RadialState::new(r, w, state.l);
        Ok((angle(&s, field)?, s.energy(field)))
    };
    let unwrap = |a: f64, b: f64| crate::kepler::wrap_angle(a - b);
    let (qr1, hr1) = eval(state.r + dr, state.w)?;
    let (qr0, hr0) = eval(state.r - dr, state.w)?;
    let (qw1, hw1) = eval(state.r, state.w + dw)?;
    let (qw0, hw0) = eval(state.r, state.w - dw)?;
    let q_r = unwrap(qr1, qr0) / (2.0 * dr);
    let q_w = unwrap(qw1, qw0) / (2.0 * dw);
    let h_r = (hr1 - hr0) / (2.0 * dr);
    let h_w = (hw1 - hw0) / (2.0 * dw);
    Ok(q_r * h_w - q_w * h_r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportReport {
    /// Markers with non-zero `f` whose `(H, L)` lies outside the set.
    pub violations: usize,
    /// Smallest signed distance to the energy bounds (negative if outside).
    pub worst_h_margin: f64,
    /// Smallest signed distance to the `L` bounds.
    pub worst_l_margin: f64,
}

/// Checks `(H, L) ∈ spec` with `H = w^2/2 + U(r, L)` in the given field.
pub fn support_monitor(
    ens: &MarkerEnsemble,
    spec: &SupportSpec,
    field: &FieldProfile,
) -> SupportReport {
    let mut report = SupportReport {
        violations: 0,
        worst_h_margin: f64::INFINITY,
        worst_l_margin: f64::INFINITY,
    };
    for m in ens.markers().iter().filter(|m| m.f_value != 0.0) {
        let h = m.state.energy(field);
        let (hm, lm) = spec.margins(h, m.state.l);
        if !spec.contains(h, m.state.l) {
            report.violations += 1;
        }
        report.worst_h_margin = report.worst_h_margin.min(hm);
        report.worst_l_margin = report.worst_l_margin.min(lm);
    }
    report
}
