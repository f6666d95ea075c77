//! Smooth compactly supported initial data.
//!
//! Every profile is a product of polynomial bumps `(1 - u^2)_+^p` on the
//! normalized coordinates of the support window, times `1 + m cos Q` in the
//! orbital angle. The bump vanishes to order `p` at the window edges, which
//! fixes the regularity of the data there.

use crate::effpot::SupportSpec;
use crate::error::{Error, Result};
use crate::kepler::{DelaunayState, LinearSupportSpec};

/// `(1 - u^2)^p` on `|u| < 1`, zero outside.
pub fn bump(u: f64, p: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - u * u).powf(p)
    }
}

fn normalized(x: f64, lo: f64, hi: f64) -> f64 {
    (2.0 * x - lo - hi) / (hi - lo)
}

fn check_shape(amplitude: f64, p: f64, modulation: f64) -> Result<()> {
    if !amplitude.is_finite() || amplitude < 0.0 {
        return Err(Error::InvalidSpec(format!(
            "amplitude must be finite and non-negative, got {amplitude}"
        )));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "bump exponent must be >= 1, got {p}"
        )));
    }
    if !(0.0..1.0).contains(&modulation) {
        return Err(Error::InvalidSpec(format!(
            "angle modulation must lie in [0, 1), got {modulation}"
        )));
    }
    Ok(())
}

/// Spherically symmetric data `A b_p(Ĥ) b_p(L̂) (1 + m cos Q)` on the window
/// `-1/(2L) + c <= H <= -h`, `l1 <= L <= l2` of `spec`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpProfile {
    pub spec: SupportSpec,
    pub amplitude: f64,
    pub p: f64,
    pub modulation: f64,
}

impl BumpProfile {
    pub fn new(spec: SupportSpec, amplitude: f64, p: f64, modulation: f64) -> Result<Self> {
        spec.validate()?;
        check_shape(amplitude, p, modulation)?;
        Ok(Self {
            spec,
            amplitude,
            p,
            modulation,
        })
    }

    /// Energy window at squared angular momentum `l`.
    pub fn energy_window(&self, l: f64) -> (f64, f64) {
        (-0.5 / l + self.spec.c, -self.spec.h)
    }

    /// The `Q`-independent factor `A b_p(Ĥ) b_p(L̂)`.
    pub fn envelope(&self, h: f64, l: f64) -> f64 {
        let (lo, hi) = self.energy_window(l);
        if lo >= hi {
            return 0.0;
        }
        self.amplitude
            * bump(normalized(h, lo, hi), self.p)
            * bump(normalized(l, self.spec.l1, self.spec.l2), self.p)
    }

    pub fn value(&self, q: f64, h: f64, l: f64) -> f64 {
        self.envelope(h, l) * (1.0 + self.modulation * q.cos())
    }

    pub fn scaled(&self, amplitude: f64) -> Self {
        Self { amplitude, ..*self }
    }
}

/// Three-dimensional data on the linear support set, in Delaunay variables:
/// bumps in `H`, `L`, the node length `|n| ∈ [n0, √l2]` and the periapsis
/// cosine `∈ [-1 + n1, 1 - n1]`, times `1 + m cos Q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBumpProfile {
    pub spec: LinearSupportSpec,
    pub amplitude: f64,
    pub p: f64,
    pub modulation: f64,
}

impl LinearBumpProfile {
    pub fn new(spec: LinearSupportSpec, amplitude: f64, p: f64, modulation: f64) -> Result<Self> {
        spec.validate()?;
        check_shape(amplitude, p, modulation)?;
        Ok(Self {
            spec,
            amplitude,
            p,
            modulation,
        })
    }

    /// The `Q`-independent factor.
    pub fn envelope(&self, d: &DelaunayState) -> f64 {
        let s = &self.spec;
        let l = d.squared_angular_momentum();
        let (h_lo, h_hi) = (-0.5 / l + s.c0, -s.h0);
        if h_lo >= h_hi {
            return 0.0;
        }
        let node = (l - d.frk_lz * d.frk_lz).max(0.0).sqrt();
        let cos_w = d.theta_lz.cos();
        self.amplitude
            * bump(normalized(d.h_kep, h_lo, h_hi), self.p)
            * bump(normalized(l, s.l1, s.l2), self.p)
            * bump(normalized(node, s.n0, s.l2.sqrt()), self.p)
            * bump(normalized(cos_w, -1.0 + s.n1, 1.0 - s.n1), self.p)
    }

    pub fn value(&self, d: &DelaunayState) -> f64 {
        self.envelope(d) * self.angle_factor(d.q).0
    }

    /// `∂_Q f` at the given elements.
    pub fn angle_derivative(&self, d: &DelaunayState) -> f64 {
        self.envelope(d) * self.angle_factor(d.q).1
    }

    /// The angle factor `1 + m cos q` and its derivative.
    pub fn angle_factor(&self, q: f64) -> (f64, f64) {
        let (s, c) = q.sin_cos();
        (1.0 + self.modulation * c, -self.modulation * s)
    }
}
