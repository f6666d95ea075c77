//! Exact Kepler-problem machinery in units where the central mass and the
//! gravitational constant are one: Hamiltonian, Delaunay action-angle
//! variables, Kepler's equation and the free-streaming flow.
//!
//! The radial action `J` satisfies `H_Kep = -1/(2 J^2)` and the angle `Q` is the
//! mean anomaly, which advances at the constant rate `J^-3` along every orbit.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// Below this value of `1 + 2 H L` the eccentricity vector is treated as zero.
pub const DEGENERACY_TOL: f64 = 1e-14;

const KEPLER_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Add for Vec3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}

/// Maps an angle onto `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Position/velocity pair; the central mass sits at the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianState {
    pub x: Vec3,
    pub v: Vec3,
}

impl CartesianState {
    pub fn new(x: Vec3, v: Vec3) -> Self {
        Self { x, v }
    }

    /// Squared angular momentum `|x|^2 |v|^2 - (x.v)^2`.
    pub fn squared_angular_momentum(&self) -> f64 {
        let xv = self.x.dot(self.v);
        self.x.dot(self.x) * self.v.dot(self.v) - xv * xv
    }

    /// Angular momentum vector `x × v`.
    pub fn angular_momentum(&self) -> Vec3 {
        self.x.cross(self.v)
    }

    /// Node vector `ẑ × (x × v)`.
    pub fn node_vector(&self) -> Vec3 {
        Vec3::new(0.0, 0.0, 1.0).cross(self.angular_momentum())
    }

    /// Eccentricity (Runge–Lenz) vector `(|v|^2 - 1/|x|) x - (x.v) v`.
    pub fn eccentricity_vector(&self) -> Vec3 {
        let r = self.x.norm();
        let v2 = self.v.dot(self.v);
        self.x * (v2 - 1.0 / r) - self.v * self.x.dot(self.v)
    }
}

/// Delaunay actions, angles and the orbital elements they are built from.
///
/// `theta_lz` is the periapsis angle measured from the node vector inside the
/// orbital plane. Its magnitude is the clamped arccos of `n.e / (|n||e|)`; it
/// carries the sign of the eccentricity vector's out-of-node component so that
/// the six coordinates determine the Cartesian state uniquely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelaunayState {
    pub j: f64,
    pub frk_l: f64,
    pub frk_lz: f64,
    pub q: f64,
    pub theta_l: f64,
    pub theta_lz: f64,
    pub h_kep: f64,
    pub e_mag: f64,
    pub ecc_anomaly: f64,
}

impl DelaunayState {
    /// Builds a consistent element set from the six canonical coordinates.
    pub fn from_coordinates(
        j: f64,
        frk_l: f64,
        frk_lz: f64,
        q: f64,
        theta_l: f64,
        theta_lz: f64,
    ) -> Result<Self> {
        if !(j > 0.0 && frk_l > 0.0 && frk_l < j) {
            return Err(Error::InvalidSpec(format!(
                "need 0 < frk_l < J, got J={j}, frk_l={frk_l}"
            )));
        }
        if frk_lz.abs() >= frk_l {
            return Err(Error::InvalidSpec(format!(
                "need |frk_lz| < frk_l, got {frk_lz} vs {frk_l}"
            )));
        }
        let h_kep = -0.5 / (j * j);
        let e_mag = (1.0 - (frk_l / j).powi(2)).max(0.0).sqrt();
        let q = wrap_angle(q);
        let ecc_anomaly = solve_kepler_equation(q, e_mag)?;
        Ok(Self {
            j,
            frk_l,
            frk_lz,
            q,
            theta_l: wrap_angle(theta_l),
            theta_lz: wrap_angle(theta_lz),
            h_kep,
            e_mag,
            ecc_anomaly,
        })
    }

    /// Squared angular momentum `L = frk_l^2`.
    pub fn squared_angular_momentum(&self) -> f64 {
        self.frk_l * self.frk_l
    }

    /// Mean-anomaly rate `J^-3 = (-2 H)^{3/2}`.
    pub fn mean_motion(&self) -> f64 {
        self.j.powi(-3)
    }
}

/// Constants of the admissible set for linear data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSupportSpec {
    pub c0: f64,
    pub h0: f64,
    pub l1: f64,
    pub l2: f64,
    pub n0: f64,
    pub n1: f64,
}

impl LinearSupportSpec {
    pub fn new(c0: f64, h0: f64, l1: f64, l2: f64, n0: f64, n1: f64) -> Result<Self> {
        let spec = Self {
            c0,
            h0,
            l1,
            l2,
            n0,
            n1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.c0, self.h0, self.l1, self.l2, self.n0, self.n1];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidSpec(format!(
                "all linear support constants must be positive: {self:?}"
            )));
        }
        if self.l1 >= self.l2 {
            return Err(Error::InvalidSpec(format!(
                "need l1 < l2, got {} >= {}",
                self.l1, self.l2
            )));
        }
        Ok(())
    }
}

pub fn kepler_hamiltonian(state: &CartesianState) -> f64 {
    0.5 * state.v.dot(state.v) - 1.0 / state.x.norm()
}

/// Membership in the linear support set: energy window, angular-momentum
/// window, node-vector lower bound and the periapsis-angle margin.
pub fn in_linear_support(state: &CartesianState, spec: &LinearSupportSpec) -> bool {
    let h = kepler_hamiltonian(state);
    let l = state.squared_angular_momentum();
    if !(l > 0.0) {
        return false;
    }
    if h < -0.5 / l + spec.c0 || h > -spec.h0 {
        return false;
    }
    if l < spec.l1 || l > spec.l2 {
        return false;
    }
    let n = state.node_vector();
    let n_mag = n.norm();
    if n_mag <= spec.n0 {
        return false;
    }
    let e = state.eccentricity_vector();
    let e_mag = e.norm();
    if e_mag == 0.0 {
        return false;
    }
    let cos_w = n.dot(e) / (n_mag * e_mag);
    (-1.0 + spec.n1..=1.0 - spec.n1).contains(&cos_w)
}

/// Forward Delaunay transform.
///
/// Only the conditions that make the coordinates well defined are enforced
/// here: a bound orbit, a non-vanishing eccentricity and `|n| > n0`. The full
/// membership test (energy/angular-momentum windows and the periapsis margin)
/// is [`in_linear_support`].
pub fn cartesian_to_delaunay(
    state: &CartesianState,
    spec: &LinearSupportSpec,
) -> Result<DelaunayState> {
    let r = state.x.norm();
    if !(r > 0.0) {
        return Err(Error::SupportViolation("|x| must be positive".into()));
    }
    let h = kepler_hamiltonian(state);
    if !(h < 0.0) {
        return Err(Error::SupportViolation(format!(
            "unbound orbit, H_Kep = {h}"
        )));
    }
    let l_vec = state.angular_momentum();
    let frk_l = l_vec.norm();
    let l = state.squared_angular_momentum();
    if 1.0 + 2.0 * h * l <= DEGENERACY_TOL {
        return Err(Error::DegenerateOrbit(format!(
            "1 + 2 H L = {} (circular orbit)",
            1.0 + 2.0 * h * l
        )));
    }
    let n = state.node_vector();
    let n_mag = n.norm();
    if n_mag <= spec.n0 {
        return Err(Error::SupportViolation(format!(
            "|n| = {n_mag} does not exceed n0 = {}",
            spec.n0
        )));
    }
    let e_vec = state.eccentricity_vector();
    let e_mag = e_vec.norm();

    let v2 = state.v.dot(state.v);
    let xv = state.x.dot(state.v);
    let cos_e = (v2 * r - 1.0) / e_mag;
    let sin_e = xv * (2.0 / r - v2).max(0.0).sqrt() / e_mag;
    let ecc_anomaly = sin_e.atan2(cos_e);
    let q = wrap_angle(ecc_anomaly - e_mag * ecc_anomaly.sin());

    let theta_l = n.y.atan2(n.x);
    let cos_w = (n.dot(e_vec) / (n_mag * e_mag)).clamp(-1.0, 1.0);
    let in_plane = l_vec.cross(n);
    let side = e_vec.dot(in_plane);
    let theta_lz = if side < 0.0 {
        -cos_w.acos()
    } else {
        cos_w.acos()
    };

    Ok(DelaunayState {
        j: 1.0 / (-2.0 * h).sqrt(),
        frk_l,
        frk_lz: l_vec.z,
        q,
        theta_l,
        theta_lz: wrap_angle(theta_lz),
        h_kep: h,
        e_mag,
        ecc_anomaly: wrap_angle(ecc_anomaly),
    })
}

/// Inverse Delaunay transform: rebuilds the orbit from the six coordinates.
///
/// The eccentricity and eccentric anomaly are recomputed from `(J, frk_l, Q)`
/// rather than read from the derived fields.
pub fn delaunay_to_cartesian(elems: &DelaunayState) -> Result<CartesianState> {
    let a = elems.j * elems.j;
    let e = (1.0 - (elems.frk_l / elems.j).powi(2)).max(0.0).sqrt();
    let ecc = solve_kepler_equation(elems.q, e)?;
    let n_mag = (elems.frk_l * elems.frk_l - elems.frk_lz * elems.frk_lz)
        .max(0.0)
        .sqrt();
    let (sl, cl) = elems.theta_l.sin_cos();
    let l_hat = Vec3::new(n_mag * sl, -n_mag * cl, elems.frk_lz).scale(1.0 / elems.frk_l);
    let n_hat = Vec3::new(cl, sl, 0.0);
    let m_hat = l_hat.cross(n_hat);
    let (sw, cw) = elems.theta_lz.sin_cos();
    let p_hat = n_hat * cw + m_hat * sw;
    let q_hat = l_hat.cross(p_hat);

    let (se, ce) = ecc.sin_cos();
    let b = (1.0 - e * e).sqrt();
    let x = p_hat * (a * (ce - e)) + q_hat * (a * b * se);
    let speed = 1.0 / (a.sqrt() * (1.0 - e * ce));
    let v = (p_hat * (-se) + q_hat * (b * ce)) * speed;
    Ok(CartesianState { x, v })
}

/// Solves `E - e sin E = Q` for the eccentric anomaly, returned in `(-pi, pi]`.
///
/// Newton iteration from `E0 = Q + e sin Q`, with bisection whenever a Newton
/// step leaves the bracket `[Q - e, Q + e]`.
pub fn solve_kepler_equation(q: f64, e: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&e) {
        return Err(Error::InvalidSpec(format!(
            "eccentricity must lie in [0, 1), got {e}"
        )));
    }
    let q = wrap_angle(q);
    if e == 0.0 {
        return Ok(q);
    }
    let f = |x: f64| x - e * x.sin() - q;
    let mut lo = q - e;
    let mut hi = q + e;
    let mut x = q + e * q.sin();
    for _ in 0..KEPLER_MAX_ITER {
        let fx = f(x);
        if fx.abs() <= 4.0 * f64::EPSILON * (1.0 + q.abs()) {
            return Ok(wrap_angle(x));
        }
        if fx > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let step = fx / (1.0 - e * x.cos());
        let mut next = x - step;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == x || hi - lo <= f64::EPSILON * (1.0 + q.abs()) {
            return Ok(wrap_angle(next));
        }
        x = next;
    }
    Err(Error::NonConvergence(format!(
        "Kepler equation Q={q}, e={e} after {KEPLER_MAX_ITER} iterations"
    )))
}

/// Radial period in the normalization `2 ∫ dr / sqrt(H - U)`, i.e. `π (-H)^{-3/2}`.
/// The time needed to complete one radial oscillation is this value over `√2`.
pub fn kepler_period(h: f64) -> f64 {
    assert!(h < 0.0, "kepler_period needs a bound energy, got {h}");
    PI / (-h).powf(1.5)
}

/// Mean motion `(-2 H)^{3/2}`.
pub fn kepler_frequency(h: f64) -> f64 {
    (-2.0 * h).powf(1.5)
}

/// Linear Kepler flow in Delaunay coordinates: only `Q` (and with it the
/// eccentric anomaly) moves, at rate `J^-3`.
pub fn free_stream_exact(elems0: &DelaunayState, t: f64) -> Result<DelaunayState> {
    let q = wrap_angle(elems0.q + t * elems0.mean_motion());
    let ecc_anomaly = solve_kepler_equation(q, elems0.e_mag)?;
    Ok(DelaunayState {
        q,
        ecc_anomaly,
        ..*elems0
    })
}

/// Exact Kepler evolution of the radial phase-space point `(r, w)` at fixed
/// squared angular momentum `l` over a time `dt` (either sign).
pub fn kepler_radial_drift(r: f64, w: f64, l: f64, dt: f64) -> Result<(f64, f64)> {
    let h = 0.5 * w * w + 0.5 * l / (r * r) - 1.0 / r;
    if !(h < 0.0) {
        return Err(Error::StepRejected(format!(
            "unbound radial orbit (H_Kep = {h}) at r = {r}"
        )));
    }
    let a = -0.5 / h;
    let sqrt_a = a.sqrt();
    let e_cos = 1.0 - r / a;
    let e_sin = r * w / sqrt_a;
    let e = e_cos.hypot(e_sin);
    if e >= 1.0 {
        return Err(Error::StepRejected(format!(
            "eccentricity {e} not below one at r = {r}"
        )));
    }
    let ecc0 = e_sin.atan2(e_cos);
    let q0 = ecc0 - e_sin;
    let q1 = q0 + dt / (a * sqrt_a);
    // Solve relative to the unwrapped angle to keep full precision in q1.
    let turns = (q1 / TAU).round();
    let ecc1 = solve_kepler_equation(q1 - turns * TAU, e)?;
    let (s1, c1) = ecc1.sin_cos();
    let r1 = a * (1.0 - e * c1);
    let w1 = sqrt_a * e * s1 / r1;
    Ok((r1, w1))
}
