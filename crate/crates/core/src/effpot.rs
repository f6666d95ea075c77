//! Effective-potential machinery for radial motion in `-1/r + φ(r)`:
//! turning points, the radial period, the angle `Q_T` and the frequency map.
//!
//! Periods are in the normalization `𝔗̃ = 2 ∫_{r-}^{r+} dρ / sqrt(H - U(ρ))`,
//! so the frequency `Ω = 2√2π / 𝔗̃` is the rate at which `Q_T` advances in
//! time and reduces to `(-2H)^{3/2}` for the bare Kepler potential.
//!
//! The period integral is split at `L ∓ b/2`, where `b` is the distance from
//! the circular radius `L` to the nearer turning point. On the two outer
//! pieces the substitution `u = sqrt(H - U(ρ))` turns the inverse square-root
//! endpoint singularity into the bounded integrand `2 / |∂_r U|`.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::field::FieldProfile;
use crate::quadrature::{adaptive_gk15, GaussLegendre};

const ROOT_EXPAND_MAX: usize = 80;
const QUAD_MAX_INTERVALS: usize = 4000;

/// Support window `{(H, L): -1/(2L) + c <= H <= -h, l1 <= L <= l2}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportSpec {
    pub c: f64,
    pub h: f64,
    pub l1: f64,
    pub l2: f64,
}

impl SupportSpec {
    pub fn new(c: f64, h: f64, l1: f64, l2: f64) -> Result<Self> {
        let s = Self { c, h, l1, l2 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.c, self.h, self.l1, self.l2]
            .iter()
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::InvalidSpec(format!(
                "support constants must be positive: {self:?}"
            )));
        }
        if self.l1 >= self.l2 {
            return Err(Error::InvalidSpec(format!(
                "need l1 < l2, got {} >= {}",
                self.l1, self.l2
            )));
        }
        if -0.5 / self.l1 + self.c >= -self.h {
            return Err(Error::InvalidSpec(format!(
                "support window is empty: -1/(2 l1) + c = {} >= -h = {}",
                -0.5 / self.l1 + self.c,
                -self.h
            )));
        }
        Ok(())
    }

    /// The set with `c` and `h` halved, which contains the support for all
    /// times of a small-data evolution.
    pub fn halved(&self) -> Self {
        Self {
            c: 0.5 * self.c,
            h: 0.5 * self.h,
            ..*self
        }
    }

    pub fn contains(&self, h: f64, l: f64) -> bool {
        l >= self.l1 && l <= self.l2 && h >= -0.5 / l + self.c && h <= -self.h
    }

    /// Signed distance to the boundary in the energy and angular-momentum
    /// directions; negative values mean the point is outside.
    pub fn margins(&self, h: f64, l: f64) -> (f64, f64) {
        let h_margin = (h - (-0.5 / l + self.c)).min(-self.h - h);
        let l_margin = (l - self.l1).min(self.l2 - l);
        (h_margin, l_margin)
    }

    /// Energy window `[H_lo, H_hi]` admissible for every `L` in `[l1, l2]`.
    pub fn energy_box(&self) -> Result<(f64, f64)> {
        let lo = -0.5 / self.l2 + self.c;
        let hi = -self.h;
        if lo >= hi {
            return Err(Error::InvalidSpec(format!(
                "no energy window is admissible for all L: [{lo}, {hi}]"
            )));
        }
        Ok((lo, hi))
    }

    /// Radial annulus `[l1/2, 2/h]` on which orbits of the set live.
    pub fn annulus(&self) -> (f64, f64) {
        (0.5 * self.l1, 2.0 / self.h)
    }
}

/// Turning points, period and frequency of one orbit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitGeometry {
    pub h: f64,
    pub l: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub period: f64,
    pub omega: f64,
}

/// Radial velocity-space state `(r, w, L)` with `L` the squared angular momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialState {
    pub r: f64,
    pub w: f64,
    pub l: f64,
}

impl RadialState {
    pub fn new(r: f64, w: f64, l: f64) -> Self {
        Self { r, w, l }
    }

    /// Total energy `w^2/2 + U(r, L)` in the given field.
    pub fn energy(&self, field: &FieldProfile) -> f64 {
        0.5 * self.w * self.w + effective_potential(self.r, self.l, field)
    }

    /// Kepler part of the energy (no self-field).
    pub fn kepler_energy(&self) -> f64 {
        0.5 * self.w * self.w + 0.5 * self.l / (self.r * self.r) - 1.0 / self.r
    }
}

/// How the period-type integrals are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuadRule {
    /// Adaptive Gauss–Kronrod on each piece to the given relative tolerance.
    Adaptive { rel_tol: f64 },
    /// Fixed Gauss–Legendre rule with this many nodes on each piece.
    Fixed { nodes: usize },
}

impl Default for QuadRule {
    fn default() -> Self {
        QuadRule::Adaptive { rel_tol: 1e-12 }
    }
}

pub fn effective_potential(r: f64, l: f64, field: &FieldProfile) -> f64 {
    0.5 * l / (r * r) - 1.0 / r + field.phi(r)
}

/// `∂_r U(r, L)`.
pub fn effective_force(r: f64, l: f64, field: &FieldProfile) -> f64 {
    -l / (r * r * r) + 1.0 / (r * r) + field.dphi(r)
}

/// Bisection on a sign change of `g` inside `[a, b]`, to full precision.
fn bisect<G: Fn(f64) -> f64>(g: G, mut a: f64, mut b: f64) -> f64 {
    let mut ga = g(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if (gm > 0.0) == (ga > 0.0) {
            a = m;
            ga = gm;
        } else {
            b = m;
        }
        if b - a <= 1e-13 * 1e-3 * b.max(1.0) {
            break;
        }
    }
    if g(a).abs() <= g(b).abs() {
        a
    } else {
        b
    }
}

/// Radii `r- < r+` where `U(r±, L) = H`.
///
/// The two roots are separated by the circular radius `L`; each is bracketed
/// by expanding outward from `L` until `H - U` changes sign.
pub fn turning_points(h: f64, l: f64, field: &FieldProfile) -> Result<(f64, f64)> {
    if !(l > 0.0) || !(h < 0.0) {
        return Err(Error::DegenerateOrbit(format!(
            "need L > 0 and H < 0, got H = {h}, L = {l}"
        )));
    }
    let gap = |r: f64| h - effective_potential(r, l, field);
    let centre = l;
    let depth = gap(centre);
    if depth <= 1e-14 * h.abs().max(1.0) {
        return Err(Error::DegenerateOrbit(format!(
            "H - U(L) = {depth} leaves no radial oscillation (H = {h}, L = {l})"
        )));
    }
    let mut lo = 0.5 * centre;
    let mut found = false;
    for _ in 0..ROOT_EXPAND_MAX {
        if gap(lo) < 0.0 {
            found = true;
            break;
        }
        lo *= 0.5;
    }
    if !found {
        return Err(Error::RootBracketFailure(format!(
            "no inner turning point below r = {lo} (H = {h}, L = {l})"
        )));
    }
    let mut hi = (2.0 * centre).max(1.0 / h.abs());
    found = false;
    for _ in 0..ROOT_EXPAND_MAX {
        if gap(hi) < 0.0 {
            found = true;
            break;
        }
        hi *= 2.0;
    }
    if !found {
        return Err(Error::RootBracketFailure(format!(
            "no outer turning point below r = {hi} (H = {h}, L = {l})"
        )));
    }
    let r_minus = bisect(gap, lo, centre);
    let r_plus = bisect(gap, centre, hi);
    Ok((r_minus, r_plus))
}

/// Split points `L ∓ b/2` of the three-piece decomposition.
fn split_points(l: f64, r_minus: f64, r_plus: f64) -> (f64, f64) {
    let b = (l - r_minus).min(r_plus - l);
    (l - 0.5 * b, l + 0.5 * b)
}

/// Solves `H - U(ρ) = u^2` for `ρ` in `[lo, hi]` where `H - U` is monotone.
fn invert_gap(h: f64, l: f64, field: &FieldProfile, u2: f64, lo: f64, hi: f64) -> f64 {
    let g = |r: f64| h - effective_potential(r, l, field) - u2;
    let (mut a, mut b) = (lo, hi);
    let ga = g(a);
    let mut x = 0.5 * (a + b);
    for _ in 0..100 {
        let gx = g(x);
        if gx == 0.0 {
            return x;
        }
        if (gx > 0.0) == (ga > 0.0) {
            a = x;
        } else {
            b = x;
        }
        let slope = -effective_force(x, l, field);
        let mut next = x - gx / slope;
        if !(next > a.min(b) && next < a.max(b)) || !next.is_finite() {
            next = 0.5 * (a + b);
        }
        if (next - x).abs() <= 1e-15 * x.abs() {
            return next;
        }
        x = next;
    }
    x
}

struct PeriodPieces<'a> {
    h: f64,
    l: f64,
    field: &'a FieldProfile,
    r_minus: f64,
    r_plus: f64,
    split_lo: f64,
    split_hi: f64,
    rule: QuadRule,
}

impl<'a> PeriodPieces<'a> {
    fn new(h: f64, l: f64, field: &'a FieldProfile, rule: QuadRule) -> Result<Self> {
        let (r_minus, r_plus) = turning_points(h, l, field)?;
        let (split_lo, split_hi) = split_points(l, r_minus, r_plus);
        Ok(Self {
            h,
            l,
            field,
            r_minus,
            r_plus,
            split_lo,
            split_hi,
            rule,
        })
    }

    fn integrate<F: FnMut(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        match self.rule {
            QuadRule::Adaptive { rel_tol } => {
                adaptive_gk15(f, a, b, 1e-300, rel_tol, QUAD_MAX_INTERVALS)
            }
            QuadRule::Fixed { nodes } => Ok(GaussLegendre::new(nodes).integrate(a, b, f)),
        }
    }

    /// `∫ dρ / sqrt(H - U)` over the inner piece from `r-` up to radius `r`
    /// (at most `split_lo`).
    fn inner(&self, r: f64) -> Result<f64> {
        let u_max = (self.h - effective_potential(r, self.l, self.field))
            .max(0.0)
            .sqrt();
        self.integrate(
            |u| {
                let rho = invert_gap(
                    self.h,
                    self.l,
                    self.field,
                    u * u,
                    self.r_minus,
                    self.split_lo,
                );
                2.0 / effective_force(rho, self.l, self.field).abs()
            },
            0.0,
            u_max,
        )
    }

    /// `∫ dρ / sqrt(H - U)` over the outer piece from radius `r` (at least
    /// `split_hi`) up to `r+`.
    fn outer(&self, r: f64) -> Result<f64> {
        let u_max = (self.h - effective_potential(r, self.l, self.field))
            .max(0.0)
            .sqrt();
        self.integrate(
            |u| {
                let rho = invert_gap(
                    self.h,
                    self.l,
                    self.field,
                    u * u,
                    self.split_hi,
                    self.r_plus,
                );
                2.0 / effective_force(rho, self.l, self.field).abs()
            },
            0.0,
            u_max,
        )
    }

    fn middle(&self, a: f64, b: f64) -> Result<f64> {
        self.integrate(
            |rho| 1.0 / (self.h - effective_potential(rho, self.l, self.field)).sqrt(),
            a,
            b,
        )
    }

    fn half_period(&self) -> Result<f64> {
        Ok(self.inner(self.split_lo)?
            + self.middle(self.split_lo, self.split_hi)?
            + self.outer(self.split_hi)?)
    }

    /// Incomplete integral from `r-` to `r`.
    fn partial(&self, r: f64) -> Result<f64> {
        if r <= self.split_lo {
            self.inner(r)
        } else if r <= self.split_hi {
            Ok(self.inner(self.split_lo)? + self.middle(self.split_lo, r)?)
        } else {
            Ok(self.half_period()? - self.outer(r)?)
        }
    }
}

/// `𝔗̃(H, L) = 2 ∫_{r-}^{r+} dρ / sqrt(H - U(ρ, L))`.
pub fn radial_period(h: f64, l: f64, field: &FieldProfile) -> Result<f64> {
    radial_period_with(h, l, field, QuadRule::default())
}

pub fn radial_period_with(h: f64, l: f64, field: &FieldProfile, rule: QuadRule) -> Result<f64> {
    Ok(2.0 * PeriodPieces::new(h, l, field, rule)?.half_period()?)
}

/// `Ω(H, L) = 2√2π / 𝔗̃(H, L)`.
pub fn frequency(h: f64, l: f64, field: &FieldProfile) -> Result<f64> {
    Ok(2.0 * SQRT_2 * PI / radial_period(h, l, field)?)
}

pub fn orbit_geometry(h: f64, l: f64, field: &FieldProfile) -> Result<OrbitGeometry> {
    let pieces = PeriodPieces::new(h, l, field, QuadRule::default())?;
    let period = 2.0 * pieces.half_period()?;
    Ok(OrbitGeometry {
        h,
        l,
        r_minus: pieces.r_minus,
        r_plus: pieces.r_plus,
        period,
        omega: 2.0 * SQRT_2 * PI / period,
    })
}

/// Central-difference gradient `(∂_H Ω, ∂_L Ω)`.
///
/// With no self-field the stencil uses the closed-form Kepler frequency, which
/// stays defined on the circular boundary where the period integral does not.
pub fn frequency_gradient(h: f64, l: f64, field: &FieldProfile) -> Result<(f64, f64)> {
    let dh = 1e-4 * h.abs();
    let dl = 1e-4 * l;
    let omega = |x: f64, z: f64| -> Result<f64> {
        if field.is_zero() {
            if !(x < 0.0) {
                return Err(Error::DegenerateOrbit(format!("unbound energy {x}")));
            }
            Ok(crate::kepler::kepler_frequency(x))
        } else {
            frequency(x, z, field)
        }
    };
    let d_h = (omega(h + dh, l)? - omega(h - dh, l)?) / (2.0 * dh);
    let d_l = (omega(h, l + dl)? - omega(h, l - dl)?) / (2.0 * dl);
    Ok((d_h, d_l))
}

/// Angle `Q_T` in `(-π, π]` at a given radius of the orbit `(H, L)`;
/// `outgoing` selects the `w >= 0` branch.
///
/// `Q_T = 0` at periapsis and `π` at apoapsis; the inbound branch is the
/// mirror image `Q_T(r, -w) = -Q_T(r, w)`.
pub fn angle_on_orbit(r: f64, outgoing: bool, h: f64, l: f64, field: &FieldProfile) -> Result<f64> {
    let pieces = PeriodPieces::new(h, l, field, QuadRule::default())?;
    let span = pieces.r_plus - pieces.r_minus;
    let tol = 1e-9 * span;
    if r < pieces.r_minus - tol || r > pieces.r_plus + tol {
        return Err(Error::OutOfOrbit(format!(
            "r = {r} outside [{}, {}]",
            pieces.r_minus, pieces.r_plus
        )));
    }
    let r = r.clamp(pieces.r_minus, pieces.r_plus);
    let half = pieces.half_period()?;
    let partial = pieces.partial(r)?;
    let q = PI * (partial / half).clamp(0.0, 1.0);
    Ok(if outgoing || q == 0.0 {
        q
    } else if q >= PI {
        PI
    } else {
        -q
    })
}

/// `Q_T(r, w, L)` with the energy taken from the state itself.
pub fn angle(state: &RadialState, field: &FieldProfile) -> Result<f64> {
    let h = state.energy(field);
    angle_on_orbit(state.r, state.w >= 0.0, h, state.l, field)
}

/// Lower bounds `b` on `|r± - L|` and `d` on `|∂_r U|` (away from `L`) and on
/// `H - U` (near `L`), sampled over the support set and halved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparationConstants {
    pub b: f64,
    pub d: f64,
}

pub fn separation_constants(
    spec: &SupportSpec,
    field: &FieldProfile,
) -> Result<SeparationConstants> {
    spec.validate()?;
    let n = 20;
    let (r_lo, r_hi) = spec.annulus();
    let mut points = Vec::new();
    for i in 0..n {
        let l = spec.l1 + (spec.l2 - spec.l1) * i as f64 / (n - 1) as f64;
        let h_lo = -0.5 / l + spec.c;
        for k in 0..n {
            let h = h_lo + (-spec.h - h_lo) * k as f64 / (n - 1) as f64;
            points.push((h, l, turning_points(h, l, field)?));
        }
    }
    let b_raw = points
        .iter()
        .map(|&(_, l, (rm, rp))| (l - rm).min(rp - l))
        .fold(f64::INFINITY, f64::min);
    let b = 0.5 * b_raw;
    let mut d_raw = f64::INFINITY;
    let nr = 400;
    for &(h, l, _) in &points {
        for j in 0..nr {
            let r = r_lo + (r_hi - r_lo) * j as f64 / (nr - 1) as f64;
            let v = if (r - l).abs() >= 0.5 * b {
                effective_force(r, l, field).abs()
            } else {
                (h - effective_potential(r, l, field)).abs()
            };
            d_raw = d_raw.min(v);
        }
    }
    Ok(SeparationConstants { b, d: 0.5 * d_raw })
}
