//! Smooth parametrization of a single radial orbit.
//!
//! An orbit with turning points `r- < r+` is written as
//! `r(ψ) = (r- + r+)/2 - (r+ - r-)/2 · cos ψ`, `ψ ∈ [0, π]`. In this variable
//! `dQ_T/dψ` is smooth up to both turning points, so it is stored as a short
//! cosine series and integrated term by term. For the bare Kepler potential
//! `ψ` is the eccentric anomaly and the series has two terms.

use std::f64::consts::{PI, SQRT_2};

use crate::effpot::{effective_potential, turning_points};
use crate::error::{Error, Result};
use crate::field::FieldProfile;
use crate::kepler::{solve_kepler_equation, wrap_angle};

pub const DEFAULT_CHART_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitChart {
    h: f64,
    l: f64,
    r_minus: f64,
    r_plus: f64,
    /// Cosine coefficients of `dQ_T/dψ`, normalized so the constant term is 1.
    coeffs: Vec<f64>,
    /// Half of `∫ dρ / sqrt(H - U)` over a full radial oscillation.
    half_period: f64,
}

impl OrbitChart {
    pub fn kepler(h: f64, l: f64) -> Result<Self> {
        if !(h < 0.0) || !(l > 0.0) {
            return Err(Error::DegenerateOrbit(format!(
                "need H < 0 and L > 0, got H = {h}, L = {l}"
            )));
        }
        let disc = 1.0 + 2.0 * h * l;
        if disc <= crate::kepler::DEGENERACY_TOL {
            return Err(Error::DegenerateOrbit(format!(
                "1 + 2 H L = {disc} (circular orbit)"
            )));
        }
        let a = -0.5 / h;
        let e = disc.sqrt();
        Ok(Self {
            h,
            l,
            r_minus: a * (1.0 - e),
            r_plus: a * (1.0 + e),
            coeffs: vec![1.0, -e],
            half_period: 0.5 * PI / (-h).powf(1.5),
        })
    }

    /// Chart of the orbit `(H, L)` in `-1/r + φ(r)`, from `n` samples of
    /// `dQ_T/dψ` at the interior nodes `ψ_j = π (j + 1/2) / n`.
    pub fn numeric(h: f64, l: f64, field: &FieldProfile, n: usize) -> Result<Self> {
        if field.is_zero() {
            return Self::kepler(h, l);
        }
        let (r_minus, r_plus) = turning_points(h, l, field)?;
        let mid = 0.5 * (r_plus + r_minus);
        let half = 0.5 * (r_plus - r_minus);
        let samples: Vec<f64> = (0..n)
            .map(|j| {
                let psi = PI * (j as f64 + 0.5) / n as f64;
                let r = mid - half * psi.cos();
                let gap = h - effective_potential(r, l, field);
                if gap <= 0.0 {
                    return Err(Error::QuadratureFailure(format!(
                        "H - U = {gap} inside the orbit at r = {r}"
                    )));
                }
                Ok(half * psi.sin() / gap.sqrt())
            })
            .collect::<Result<_>>()?;
        let mut coeffs: Vec<f64> = (0..n)
            .map(|k| {
                let s: f64 = samples
                    .iter()
                    .enumerate()
                    .map(|(j, g)| g * (PI * k as f64 * (j as f64 + 0.5) / n as f64).cos())
                    .sum();
                if k == 0 {
                    s / n as f64
                } else {
                    2.0 * s / n as f64
                }
            })
            .collect();
        let c0 = coeffs[0];
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(Error::QuadratureFailure(format!(
                "non-positive orbit integral {c0} for H = {h}, L = {l}"
            )));
        }
        for c in &mut coeffs {
            *c /= c0;
        }
        while coeffs.len() > 2 && coeffs.last().is_some_and(|c| c.abs() < 1e-17) {
            coeffs.pop();
        }
        Ok(Self {
            h,
            l,
            r_minus,
            r_plus,
            coeffs,
            half_period: PI * c0,
        })
    }

    pub fn energy(&self) -> f64 {
        self.h
    }

    pub fn squared_angular_momentum(&self) -> f64 {
        self.l
    }

    pub fn turning_points(&self) -> (f64, f64) {
        (self.r_minus, self.r_plus)
    }

    /// `𝔗̃ = 2 ∫_{r-}^{r+} dρ / sqrt(H - U)`.
    pub fn period(&self) -> f64 {
        2.0 * self.half_period
    }

    pub fn omega(&self) -> f64 {
        2.0 * SQRT_2 * PI / self.period()
    }

    pub fn radius(&self, psi: f64) -> f64 {
        0.5 * (self.r_plus + self.r_minus) - 0.5 * (self.r_plus - self.r_minus) * psi.cos()
    }

    /// `Q_T(ψ)` on `[0, π]`, with `Q_T(0) = 0` and `Q_T(π) = π`.
    pub fn angle(&self, psi: f64) -> f64 {
        let mut q = psi;
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            q += c * (k as f64 * psi).sin() / k as f64;
        }
        q
    }

    pub fn angle_rate(&self, psi: f64) -> f64 {
        let mut d = 1.0;
        for (k, c) in self.coeffs.iter().enumerate().skip(1) {
            d += c * (k as f64 * psi).cos();
        }
        d
    }

    /// `ψ ∈ [0, π]` where the orbit passes through radius `r`.
    pub fn psi_at_radius(&self, r: f64) -> Result<f64> {
        let half = 0.5 * (self.r_plus - self.r_minus);
        let c = (0.5 * (self.r_plus + self.r_minus) - r) / half;
        if c.abs() > 1.0 + 1e-12 {
            return Err(Error::OutOfOrbit(format!(
                "r = {r} outside [{}, {}]",
                self.r_minus, self.r_plus
            )));
        }
        Ok(c.clamp(-1.0, 1.0).acos())
    }

    /// Inverts `Q_T(ψ)` for `|q| <= π`, returning the signed `ψ`.
    pub fn psi_at_angle(&self, q: f64) -> Result<f64> {
        let q = wrap_angle(q);
        let target = q.abs();
        if self.coeffs.len() == 2 {
            let e = -self.coeffs[1];
            let psi = solve_kepler_equation(target, e)?;
            return Ok(psi.abs().copysign(q));
        }
        let (mut lo, mut hi) = (0.0, PI);
        let mut psi = target;
        for _ in 0..100 {
            let f = self.angle(psi) - target;
            if f > 0.0 {
                hi = psi;
            } else {
                lo = psi;
            }
            let mut next = psi - f / self.angle_rate(psi);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - psi).abs() < 1e-15 {
                return Ok(next.copysign(q));
            }
            psi = next;
        }
        Err(Error::NonConvergence(format!(
            "ψ(Q_T = {q}) did not converge"
        )))
    }

    /// Radial phase-space point at angle `q`: `(r, w)`.
    pub fn state_at_angle(&self, q: f64, field: &FieldProfile) -> Result<(f64, f64)> {
        let psi = self.psi_at_angle(q)?;
        let r = self.radius(psi);
        let gap = (self.h - effective_potential(r, self.l, field)).max(0.0);
        let w = (2.0 * gap).sqrt().copysign(psi);
        Ok((r, if psi == 0.0 { 0.0 } else { w }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effpot::{angle_on_orbit, radial_period};
    use approx::assert_relative_eq;

    fn bump() -> FieldProfile {
        FieldProfile::bump(1e-3, 1.5, 2.0, 0.2, 25.0, 8001).unwrap()
    }

    #[test]
    fn numeric_chart_reduces_to_kepler() {
        let tiny = FieldProfile::bump(1e-300, 5.0, 6.0, 0.2, 25.0, 101).unwrap();
        let n = OrbitChart::numeric(-0.3, 0.8, &tiny, 64).unwrap();
        let k = OrbitChart::kepler(-0.3, 0.8).unwrap();
        assert_relative_eq!(n.period(), k.period(), max_relative = 1e-10);
        for &psi in &[0.1, 0.9, 2.0, 3.0] {
            assert!((n.angle(psi) - k.angle(psi)).abs() < 1e-9);
        }
    }

    #[test]
    fn chart_period_matches_quadrature() {
        let f = bump();
        let c = OrbitChart::numeric(-0.3, 1.0, &f, 64).unwrap();
        let p = radial_period(-0.3, 1.0, &f).unwrap();
        assert_relative_eq!(c.period(), p, max_relative = 1e-8);
    }

    #[test]
    fn chart_angle_matches_incomplete_integral() {
        let f = bump();
        let c = OrbitChart::numeric(-0.3, 1.0, &f, 64).unwrap();
        for &psi in &[0.3, 1.2, 1.9, 2.7] {
            let r = c.radius(psi);
            let q = angle_on_orbit(r, true, -0.3, 1.0, &f).unwrap();
            assert!((c.angle(psi) - q).abs() < 1e-7, "psi {psi}");
        }
    }

    #[test]
    fn angle_inversion_round_trips() {
        let f = bump();
        for c in [
            OrbitChart::kepler(-0.4, 0.7).unwrap(),
            OrbitChart::numeric(-0.3, 1.0, &f, 64).unwrap(),
        ] {
            for &q in &[-3.0, -1.0, -1e-3, 0.0, 0.5, 2.9, PI] {
                let psi = c.psi_at_angle(q).unwrap();
                assert!((wrap_angle(c.angle(psi.abs()).copysign(psi) - q)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn states_on_chart_have_the_orbit_energy() {
        let f = bump();
        let c = OrbitChart::numeric(-0.3, 1.0, &f, 64).unwrap();
        let (r, w) = c.state_at_angle(-2.0, &f).unwrap();
        assert!(w < 0.0);
        let h = 0.5 * w * w + effective_potential(r, 1.0, &f);
        assert!((h + 0.3).abs() < 1e-13);
    }
}
