//! Exact transport in action-angle variables.
//!
//! Data are expanded in the orbital angle, `f = Σ_k ĥ_k(H, M) e^{ikQ}`, and
//! the flow `∂_t + Ω(H, M) ∂_Q` acts on each mode by the phase `e^{-ikΩt}`.
//! Potentials and their time derivatives are quadratures of the modes
//! against orbit kernels, so no time stepping enters anywhere.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::effpot::{effective_potential, SupportSpec};
use crate::error::{Error, Result};
use crate::field::FieldProfile;
use crate::kepler::{
    cartesian_to_delaunay, kepler_frequency, wrap_angle, CartesianState, DelaunayState, Vec3,
};
use crate::orbit::{OrbitChart, DEFAULT_CHART_NODES};
use crate::profile::{BumpProfile, LinearBumpProfile};
use crate::quadrature::GaussLegendre;

pub const DEFAULT_MODES: usize = 32;

/// Spectral mass allowed beyond the cutoff, relative to the total.
pub const TAIL_TOLERANCE: f64 = 1e-16;

/// A point `(Q, H, M)` of the reduced phase space; `M` is the squared
/// angular momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionAngleState {
    pub q: f64,
    pub h: f64,
    pub m: f64,
}

impl ActionAngleState {
    pub fn new(q: f64, h: f64, m: f64) -> Self {
        Self {
            q: wrap_angle(q),
            h,
            m,
        }
    }

    /// Image under the flow after time `t`.
    pub fn advance(&self, t: f64, freq: &dyn FrequencyMap) -> Result<Self> {
        let omega = freq.omega(self.h, self.m)?;
        Ok(Self::new(self.q + t * omega, self.h, self.m))
    }
}

/// Angle rate `Ω(H, M)` of a time-independent radial potential.
pub trait FrequencyMap: Sync {
    /// Perturbation of the Kepler potential, `φ` in `U = L/(2r²) - 1/r + φ`.
    fn field(&self) -> &FieldProfile;

    fn chart(&self, h: f64, m: f64) -> Result<OrbitChart>;

    fn omega(&self, h: f64, m: f64) -> Result<f64> {
        Ok(self.chart(h, m)?.omega())
    }
}

/// Free streaming in the bare Kepler potential: `Ω = (-2H)^{3/2}`.
#[derive(Debug, Clone)]
pub struct KeplerFlow {
    zero: FieldProfile,
}

impl KeplerFlow {
    pub fn new() -> Self {
        Self {
            zero: FieldProfile::zero(),
        }
    }
}

impl Default for KeplerFlow {
    fn default() -> Self {
        Self::new()
    }
}

impl FrequencyMap for KeplerFlow {
    fn field(&self) -> &FieldProfile {
        &self.zero
    }

    fn chart(&self, h: f64, m: f64) -> Result<OrbitChart> {
        OrbitChart::kepler(h, m)
    }

    fn omega(&self, h: f64, _m: f64) -> Result<f64> {
        if !(h < 0.0) {
            return Err(Error::DegenerateOrbit(format!("unbound energy {h}")));
        }
        Ok(kepler_frequency(h))
    }
}

/// Transport with the potential frozen at `-1/r + φ(r)`.
#[derive(Debug, Clone)]
pub struct FrozenFlow {
    field: FieldProfile,
    nodes: usize,
}

impl FrozenFlow {
    pub fn new(field: FieldProfile) -> Self {
        Self::with_chart_nodes(field, DEFAULT_CHART_NODES)
    }

    pub fn with_chart_nodes(field: FieldProfile, nodes: usize) -> Self {
        Self { field, nodes }
    }
}

impl FrequencyMap for FrozenFlow {
    fn field(&self) -> &FieldProfile {
        &self.field
    }

    fn chart(&self, h: f64, m: f64) -> Result<OrbitChart> {
        OrbitChart::numeric(h, m, &self.field, self.nodes)
    }
}

/// Data on `(Q, H, M)` with a known support window.
pub trait AngleProfile: Sync {
    fn support(&self) -> SupportSpec;

    fn value(&self, q: f64, h: f64, m: f64) -> f64;

    /// `ĥ_0, ..., ĥ_kmax` at `(h, m)`, with `ĥ_k = (2π)^{-1} ∫ f e^{-ikQ} dQ`.
    /// Negative modes follow from reality. The default samples `value` on a
    /// uniform angle grid.
    fn modes(&self, h: f64, m: f64, kmax: usize) -> Vec<Complex64> {
        let n = (4 * (kmax + 1)).max(64);
        let samples: Vec<f64> = (0..n)
            .map(|j| self.value(-PI + 2.0 * PI * j as f64 / n as f64, h, m))
            .collect();
        (0..=kmax)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (j, s) in samples.iter().enumerate() {
                    let q = -PI + 2.0 * PI * j as f64 / n as f64;
                    acc += s * Complex64::from_polar(1.0, -(k as f64) * q);
                }
                acc / n as f64
            })
            .collect()
    }
}

impl AngleProfile for BumpProfile {
    fn support(&self) -> SupportSpec {
        self.spec
    }

    fn value(&self, q: f64, h: f64, m: f64) -> f64 {
        BumpProfile::value(self, q, h, m)
    }

    fn modes(&self, h: f64, m: f64, kmax: usize) -> Vec<Complex64> {
        let env = self.envelope(h, m);
        let mut out = vec![Complex64::new(0.0, 0.0); kmax + 1];
        out[0] = env.into();
        if kmax >= 1 {
            out[1] = (0.5 * self.modulation * env).into();
        }
        out
    }
}

/// A quadrature node in `(H, M)` with its weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableNode {
    pub h: f64,
    pub m: f64,
    pub weight: f64,
}

/// Angle-Fourier coefficients `ĥ_k`, `0 <= k <= K`, on a set of `(H, M)`
/// quadrature nodes. Negative modes are the conjugates.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleFourierTable {
    kmax: usize,
    nodes: Vec<TableNode>,
    coeffs: Vec<Complex64>,
}

/// Quadrature used for the potential at a single radius: `m_nodes`
/// Gauss–Legendre nodes in `M` and, at each `M`, composite Gauss–Legendre in
/// `H` split where the orbits start to reach the probe radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeQuadrature {
    pub m_nodes: usize,
    pub h_panels: usize,
    pub h_order: usize,
}

impl Default for ProbeQuadrature {
    fn default() -> Self {
        Self {
            m_nodes: 32,
            h_panels: 32,
            h_order: 12,
        }
    }
}

impl ProbeQuadrature {
    /// Twice as many nodes in every direction.
    pub fn refined(&self) -> Self {
        Self {
            m_nodes: 2 * self.m_nodes,
            h_panels: 2 * self.h_panels,
            h_order: self.h_order,
        }
    }
}

impl AngleFourierTable {
    /// Samples `profile` at `nodes`, rejecting data whose spectrum beyond
    /// `kmax` carries more than [`TAIL_TOLERANCE`] of the total.
    pub fn new<P: AngleProfile + ?Sized>(
        profile: &P,
        nodes: Vec<TableNode>,
        kmax: usize,
    ) -> Result<Self> {
        let wide = 2 * kmax + 1;
        let rows: Vec<Vec<Complex64>> = nodes
            .par_iter()
            .map(|n| profile.modes(n.h, n.m, wide))
            .collect();
        let (mut total, mut tail) = (0.0, 0.0);
        for (n, row) in nodes.iter().zip(&rows) {
            for (k, c) in row.iter().enumerate() {
                let p = n.weight.abs() * c.norm_sqr() * if k == 0 { 1.0 } else { 2.0 };
                total += p;
                if k > kmax {
                    tail += p;
                }
            }
        }
        if tail > TAIL_TOLERANCE * total {
            return Err(Error::InvalidSpec(format!(
                "angle spectrum beyond k = {kmax} holds {:e} of the total",
                tail / total
            )));
        }
        let coeffs = rows
            .into_iter()
            .flat_map(|row| row.into_iter().take(kmax + 1))
            .collect();
        Ok(Self {
            kmax,
            nodes,
            coeffs,
        })
    }

    /// Gauss–Legendre in `M` over `[l1, l2]` and in `H` over the energy
    /// window at each `M`.
    pub fn tensor<P: AngleProfile + ?Sized>(
        profile: &P,
        nh: usize,
        nm: usize,
        kmax: usize,
    ) -> Result<Self> {
        let spec = profile.support();
        spec.validate()?;
        let gh = GaussLegendre::new(nh);
        let gm = GaussLegendre::new(nm);
        let mut nodes = Vec::with_capacity(nh * nm);
        for (m, wm) in gm.mapped(spec.l1, spec.l2) {
            let (lo, hi) = (-0.5 / m + spec.c, -spec.h);
            for (h, wh) in gh.mapped(lo, hi) {
                nodes.push(TableNode {
                    h,
                    m,
                    weight: wm * wh,
                });
            }
        }
        Self::new(profile, nodes, kmax)
    }

    /// Nodes adapted to the potential at radius `r`: at each `M`, the energy
    /// window is cut at `H = U(r, M)`, above which orbits cross `r`, and the
    /// upper piece is integrated in `u = sqrt(H - U)` to absorb the square
    /// root behaviour at the cut.
    pub fn for_probe<P: AngleProfile + ?Sized>(
        profile: &P,
        r: f64,
        field: &FieldProfile,
        quad: &ProbeQuadrature,
        kmax: usize,
    ) -> Result<Self> {
        let spec = profile.support();
        spec.validate()?;
        if !(r > 0.0) {
            return Err(Error::InvalidSpec(format!(
                "probe radius must be positive, got {r}"
            )));
        }
        let gm = GaussLegendre::new(quad.m_nodes);
        let gh = GaussLegendre::new(quad.h_order);
        let panels =
            |len: f64, span: f64| ((quad.h_panels as f64 * len / span).ceil() as usize).max(1);
        let mut nodes = Vec::new();
        for (m, wm) in gm.mapped(spec.l1, spec.l2) {
            let (lo, hi) = (-0.5 / m + spec.c, -spec.h);
            let span = hi - lo;
            let cut = effective_potential(r, m, field);
            if cut > lo {
                let top = cut.min(hi);
                for (h, wh) in gh.composite(lo, top, panels(top - lo, span)) {
                    nodes.push(TableNode {
                        h,
                        m,
                        weight: wm * wh,
                    });
                }
            }
            if cut < hi {
                let u0 = (lo - cut).max(0.0).sqrt();
                let u1 = (hi - cut).sqrt();
                let len = hi - cut.max(lo);
                for (u, wu) in gh.composite(u0, u1, panels(len, span) + 1) {
                    nodes.push(TableNode {
                        h: cut + u * u,
                        m,
                        weight: wm * wu * 2.0 * u,
                    });
                }
            }
        }
        Self::new(profile, nodes, kmax)
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn nodes(&self) -> &[TableNode] {
        &self.nodes
    }

    /// `ĥ_k` at node `i` for `|k| <= K`; zero beyond the cutoff.
    pub fn coefficient(&self, i: usize, k: i64) -> Complex64 {
        let a = k.unsigned_abs() as usize;
        if a > self.kmax {
            return Complex64::new(0.0, 0.0);
        }
        let c = self.coeffs[i * (self.kmax + 1) + a];
        if k < 0 {
            c.conj()
        } else {
            c
        }
    }

    fn row(&self, i: usize) -> &[Complex64] {
        &self.coeffs[i * (self.kmax + 1)..(i + 1) * (self.kmax + 1)]
    }

    /// `Σ_nodes w |ĥ_k|²`, the weighted power in mode `k`.
    pub fn mode_power(&self, k: i64) -> f64 {
        (0..self.nodes.len())
            .map(|i| self.nodes[i].weight * self.coefficient(i, k).norm_sqr())
            .sum()
    }

    /// Modes `k >= 0` with a non-zero coefficient at some node.
    pub fn active_modes(&self) -> Vec<usize> {
        (0..=self.kmax)
            .filter(|&k| (0..self.nodes.len()).any(|i| self.row(i)[k] != Complex64::new(0.0, 0.0)))
            .collect()
    }
}

/// `ĥ_k(t) = e^{-ikΩt} ĥ_k(0)` at every node.
pub fn semigroup_apply(
    table: &AngleFourierTable,
    t: f64,
    freq: &dyn FrequencyMap,
) -> Result<AngleFourierTable> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    let width = table.kmax + 1;
    let rows: Vec<Vec<Complex64>> = (0..table.nodes.len())
        .into_par_iter()
        .map(|i| {
            let n = table.nodes[i];
            let omega = freq.omega(n.h, n.m)?;
            Ok(table
                .row(i)
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    if k == 0 {
                        *c
                    } else {
                        c * Complex64::from_polar(1.0, -(k as f64) * omega * t)
                    }
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut coeffs = Vec::with_capacity(width * table.nodes.len());
    for row in rows {
        coeffs.extend(row);
    }
    Ok(AngleFourierTable {
        kmax: table.kmax,
        nodes: table.nodes.clone(),
        coeffs,
    })
}

/// Potential and its exact time derivative at one radius and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub phi: f64,
    pub dphi_dt: f64,
}

/// `G_k(r) = ∫_{-π}^{π} cos(kQ) / max(r, r(Q)) dQ` over one orbit, for each
/// `k` in `ks`.
///
/// In the chart variable `ψ` the orbit is inside `r` for `ψ < ψ*`, where
/// the integral is elementary, and outside on `[ψ*, π]`, where the integrand
/// is smooth.
pub fn orbit_kernels(chart: &OrbitChart, r: f64, ks: &[usize], gl: &GaussLegendre) -> Vec<f64> {
    let (rm, rp) = chart.turning_points();
    if r >= rp {
        return ks
            .iter()
            .map(|&k| if k == 0 { 2.0 * PI / r } else { 0.0 })
            .collect();
    }
    let psi_star = if r <= rm {
        0.0
    } else {
        chart.psi_at_radius(r).unwrap_or(0.0)
    };
    let q_star = chart.angle(psi_star);
    let mut out: Vec<f64> = ks
        .iter()
        .map(|&k| {
            if psi_star == 0.0 {
                0.0
            } else if k == 0 {
                q_star / r
            } else {
                (k as f64 * q_star).sin() / (k as f64 * r)
            }
        })
        .collect();
    for (psi, w) in gl.mapped(psi_star, PI) {
        let q = chart.angle(psi);
        let g = w * chart.angle_rate(psi) / chart.radius(psi);
        for (o, &k) in out.iter_mut().zip(ks) {
            *o += g * (k as f64 * q).cos();
        }
    }
    out.iter().map(|g| 2.0 * g).collect()
}

fn kernel_rule(ks: &[usize]) -> GaussLegendre {
    let top = ks.iter().copied().max().unwrap_or(0);
    GaussLegendre::new(32 + 2 * top)
}

/// Node contributions `(Ω, w Σ_k a_k ĥ_k G_k)` for the active modes, so that
/// the potential at time `t` is a sum of phases.
struct ProbeTerms {
    ks: Vec<usize>,
    omega: Vec<f64>,
    /// Per node, `w ĥ_k G_k / Ω` for each active `k`.
    amp: Vec<Complex64>,
}

fn probe_terms(table: &AngleFourierTable, freq: &dyn FrequencyMap, r: f64) -> Result<ProbeTerms> {
    let ks = table.active_modes();
    let gl = kernel_rule(&ks);
    let rows: Vec<(f64, Vec<Complex64>)> = (0..table.nodes.len())
        .into_par_iter()
        .map(|i| {
            let n = table.nodes[i];
            let chart = freq.chart(n.h, n.m)?;
            let omega = chart.omega();
            let g = orbit_kernels(&chart, r, &ks, &gl);
            let row = table.row(i);
            let amp = ks
                .iter()
                .zip(&g)
                .map(|(&k, gk)| row[k] * (n.weight * gk / omega))
                .collect();
            Ok((omega, amp))
        })
        .collect::<Result<_>>()?;
    let mut omega = Vec::with_capacity(rows.len());
    let mut amp = Vec::with_capacity(rows.len() * ks.len());
    for (o, a) in rows {
        omega.push(o);
        amp.extend(a);
    }
    Ok(ProbeTerms { ks, omega, amp })
}

fn evaluate_terms(terms: &ProbeTerms, t: f64) -> FieldSample {
    let nk = terms.ks.len();
    let (mut phi, mut dphi) = (0.0, 0.0);
    for (i, &omega) in terms.omega.iter().enumerate() {
        for (j, &k) in terms.ks.iter().enumerate() {
            let a = terms.amp[i * nk + j];
            if k == 0 {
                phi += a.re;
                continue;
            }
            let kf = k as f64;
            let z = a * Complex64::from_polar(1.0, -kf * omega * t);
            phi += 2.0 * z.re;
            // d/dt of 2 Re(z) is 2 Re(-ikΩ z)
            dphi += 2.0 * kf * omega * z.im;
        }
    }
    FieldSample {
        phi: -PI * phi,
        dphi_dt: -PI * dphi,
    }
}

/// Attractive potential of the transported data at time `t` and radii
/// `probes`, with `∂_t φ` from differentiating the phases.
pub fn field_from_table(
    table: &AngleFourierTable,
    freq: &dyn FrequencyMap,
    t: f64,
    probes: &[f64],
) -> Result<Vec<FieldSample>> {
    let series = field_series_from_table(table, freq, &[t], probes)?;
    Ok(series.into_iter().next().unwrap_or_default())
}

/// As [`field_from_table`] at several times; indexed `[time][probe]`.
pub fn field_series_from_table(
    table: &AngleFourierTable,
    freq: &dyn FrequencyMap,
    times: &[f64],
    probes: &[f64],
) -> Result<Vec<Vec<FieldSample>>> {
    check_times(times)?;
    let mut out = vec![Vec::with_capacity(probes.len()); times.len()];
    for &r in probes {
        let terms = probe_terms(table, freq, r)?;
        for (row, &t) in out.iter_mut().zip(times) {
            row.push(evaluate_terms(&terms, t));
        }
    }
    Ok(out)
}

/// Field series with a separate [`AngleFourierTable::for_probe`] table at
/// each radius; indexed `[time][probe]`.
pub fn probe_field_series<P: AngleProfile + ?Sized>(
    profile: &P,
    freq: &dyn FrequencyMap,
    times: &[f64],
    probes: &[f64],
    quad: &ProbeQuadrature,
    kmax: usize,
) -> Result<Vec<Vec<FieldSample>>> {
    check_times(times)?;
    let per_probe: Vec<Vec<FieldSample>> = probes
        .iter()
        .map(|&r| {
            let table = AngleFourierTable::for_probe(profile, r, freq.field(), quad, kmax)?;
            let terms = probe_terms(&table, freq, r)?;
            Ok(times.iter().map(|&t| evaluate_terms(&terms, t)).collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..times.len())
        .map(|j| per_probe.iter().map(|s| s[j]).collect())
        .collect())
}

fn check_times(times: &[f64]) -> Result<()> {
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidSpec(format!(
            "time must be finite and >= 0, got {t}"
        )));
    }
    Ok(())
}

/// Velocity-space quadrature at a point `x`: composite Gauss–Legendre in the
/// radial velocity `w` (separately for each sign) and in `L`, trapezoid in
/// the azimuth `ϑ` of the tangential velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityQuadrature {
    pub w_panels: usize,
    pub w_order: usize,
    pub l_nodes: usize,
    pub theta_nodes: usize,
}

impl Default for DensityQuadrature {
    fn default() -> Self {
        Self {
            w_panels: 24,
            w_order: 10,
            l_nodes: 24,
            theta_nodes: 48,
        }
    }
}

impl DensityQuadrature {
    pub fn refined(&self) -> Self {
        Self {
            w_panels: 2 * self.w_panels,
            w_order: self.w_order,
            l_nodes: 2 * self.l_nodes,
            theta_nodes: 2 * self.theta_nodes,
        }
    }
}

/// Orthonormal `(x̂, e1, e2)` with `e1 ⟂ ẑ`; falls back to `ŷ` on the axis.
fn frame(x: Vec3) -> (Vec3, Vec3, Vec3) {
    let xh = x.scale(1.0 / x.norm());
    let mut e1 = Vec3::new(0.0, 0.0, 1.0).cross(xh);
    if e1.norm() < 1e-12 {
        e1 = Vec3::new(0.0, 1.0, 0.0).cross(xh);
    }
    let e1 = e1.scale(1.0 / e1.norm());
    let e2 = xh.cross(e1);
    (xh, e1, e2)
}

/// Sums `w · g(d, env)` over the velocity nodes at `x` for which the
/// elements are defined and the envelope is non-zero. `g` returns one value
/// per time.
fn velocity_sum<G>(
    profile: &LinearBumpProfile,
    x: Vec3,
    quad: &DensityQuadrature,
    outputs: usize,
    g: G,
) -> Result<Vec<f64>>
where
    G: Fn(&DelaunayState, f64, &mut [f64]) + Sync,
{
    let r = x.norm();
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "probe point must be non-zero, got |x| = {r}"
        )));
    }
    let spec = profile.spec;
    let (xh, e1, e2) = frame(x);
    let gl = GaussLegendre::new(quad.l_nodes);
    let gw = GaussLegendre::new(quad.w_order);
    let nth = quad.theta_nodes.max(1);
    let l_nodes: Vec<(f64, f64)> = gl.mapped(spec.l1, spec.l2).collect();
    let partial: Vec<Vec<f64>> = l_nodes
        .par_iter()
        .map(|&(l, wl)| {
            let mut acc = vec![0.0; outputs];
            let mut scratch = vec![0.0; outputs];
            let u = 0.5 * l / (r * r) - 1.0 / r;
            let (lo, hi) = (-0.5 / l + spec.c0, -spec.h0);
            if hi <= u || lo >= hi {
                return Ok(acc);
            }
            let wa = (2.0 * (lo - u).max(0.0)).sqrt();
            let wb = (2.0 * (hi - u)).sqrt();
            let tang = l.sqrt() / r;
            let measure = wl * 2.0 * PI / nth as f64 / (2.0 * r * r);
            for (w, ww) in gw.composite(wa, wb, quad.w_panels) {
                for sign in [-1.0, 1.0] {
                    for j in 0..nth {
                        let th = 2.0 * PI * (j as f64 + 0.5) / nth as f64;
                        let (s, c) = th.sin_cos();
                        let v = Vec3::new(
                            sign * w * xh.x + tang * (c * e1.x + s * e2.x),
                            sign * w * xh.y + tang * (c * e1.y + s * e2.y),
                            sign * w * xh.z + tang * (c * e1.z + s * e2.z),
                        );
                        let d = match cartesian_to_delaunay(&CartesianState::new(x, v), &spec) {
                            Ok(d) => d,
                            Err(Error::SupportViolation(_)) | Err(Error::DegenerateOrbit(_)) => {
                                continue
                            }
                            Err(e) => return Err(e),
                        };
                        let env = profile.envelope(&d);
                        if env == 0.0 {
                            continue;
                        }
                        g(&d, env, &mut scratch);
                        for (a, s) in acc.iter_mut().zip(&scratch) {
                            *a += ww * measure * s;
                        }
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; outputs];
    for p in partial {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    Ok(out)
}

/// `ρ(t, x) = ∫ f_in(Q - tΩ, ...) dv` under Kepler free streaming.
pub fn free_stream_density(
    profile: &LinearBumpProfile,
    t: f64,
    x: Vec3,
    quad: &DensityQuadrature,
) -> Result<f64> {
    check_times(&[t])?;
    let out = velocity_sum(profile, x, quad, 1, |d, env, out| {
        out[0] = env * profile.angle_factor(d.q - t * d.mean_motion()).0;
    })?;
    Ok(out[0])
}

/// `∂_t ρ(t, x) = ∫ ∂_t f dv` with `∂_t f = -Ω ∂_Q f_in(Q - tΩ, ...)`, at
/// each of `times`.
pub fn free_stream_density_rate(
    profile: &LinearBumpProfile,
    times: &[f64],
    x: Vec3,
    quad: &DensityQuadrature,
) -> Result<Vec<f64>> {
    check_times(times)?;
    velocity_sum(profile, x, quad, times.len(), |d, env, out| {
        let omega = d.mean_motion();
        for (o, &t) in out.iter_mut().zip(times) {
            *o = -omega * env * profile.angle_factor(d.q - t * omega).1;
        }
    })
}
