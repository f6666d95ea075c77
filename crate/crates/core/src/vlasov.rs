//! Spherically symmetric Vlasov–Poisson with a central point mass, solved
//! along characteristics.
//!
//! `f` is represented by markers in `(r, w, L)`. Each marker carries a fixed
//! weight `f · π dL dw dr` and the constant value of `f` on its
//! characteristic; only `(r, w)` ever change. The self-field comes from
//! cloud-in-cell deposition of the weights onto a uniform radial grid and an
//! exact solve of the radial Poisson equation for the binned density.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::diag::{support_monitor, SupportReport};
pub use crate::effpot::RadialState;
use crate::effpot::SupportSpec;
use crate::error::{Error, Result};
use crate::field::FieldProfile;
use crate::kepler::{kepler_frequency, kepler_radial_drift, solve_kepler_equation};
use crate::orbit::{OrbitChart, DEFAULT_CHART_NODES};
use crate::profile::BumpProfile;

/// Markers per deposition chunk. Partial sums are merged in chunk order, so
/// the result does not depend on how many threads ran the chunks.
const DEPOSIT_CHUNK: usize = 8192;

/// Sign of the self-interaction. The central mass always attracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Coupling {
    #[default]
    Attractive,
    Repulsive,
}

impl Coupling {
    pub fn sign(self) -> f64 {
        match self {
            Coupling::Attractive => 1.0,
            Coupling::Repulsive => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Marker {
    pub state: RadialState,
    pub weight: f64,
    pub f_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerEnsemble {
    markers: Vec<Marker>,
    coupling: Coupling,
    total_mass: f64,
}

impl MarkerEnsemble {
    pub fn new(markers: Vec<Marker>, coupling: Coupling) -> Result<Self> {
        for m in &markers {
            let s = m.state;
            if !(s.r > 0.0) || !(s.l >= 0.0) || !s.w.is_finite() {
                return Err(Error::InvalidSpec(format!("invalid marker state {s:?}")));
            }
            if !(m.weight >= 0.0) || !m.weight.is_finite() {
                return Err(Error::InvalidSpec(format!(
                    "invalid marker weight {}",
                    m.weight
                )));
            }
        }
        let total_mass = markers.iter().map(|m| m.weight).sum();
        Ok(Self {
            markers,
            coupling,
            total_mass,
        })
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    pub fn len(&self) -> usize {
        self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    pub fn coupling(&self) -> Coupling {
        self.coupling
    }

    /// `Σ weights`, fixed at construction.
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Moves marker `i` to a new phase-space point; weight, `f` and `L` stay.
    pub fn relocate(&mut self, i: usize, r: f64, w: f64) {
        let s = &mut self.markers[i].state;
        s.r = r;
        s.w = w;
    }
}

/// Placement of the initial markers in `(H, L, Q)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    /// Cell-centred tensor grid. Markers on one orbit are evenly spaced in
    /// angle and stay so under the flow, which keeps angular aliasing out of
    /// the field; the energy spacing `ΔH` sets a recurrence time
    /// `2π / (ΔH max|∂_H Ω|)`.
    #[default]
    Tensor,
    /// Additive-recurrence lattice with the same number of points. Every
    /// marker has its own energy, so nothing recurs, but the sampling error
    /// of the oscillating modes grows with time.
    Lattice,
}

/// Radial point `(r, w)` at mean anomaly `q` on the Kepler orbit `(h, l)`.
pub fn kepler_state(h: f64, l: f64, q: f64) -> Result<RadialState> {
    let disc = 1.0 + 2.0 * h * l;
    if !(h < 0.0) || disc <= crate::kepler::DEGENERACY_TOL {
        return Err(Error::DegenerateOrbit(format!(
            "no radial oscillation for H = {h}, L = {l}"
        )));
    }
    let a = -0.5 / h;
    let e = disc.sqrt();
    let ecc = solve_kepler_equation(q, e)?;
    let (s, c) = ecc.sin_cos();
    let r = a * (1.0 - e * c);
    Ok(RadialState::new(r, a.sqrt() * e * s / r, l))
}

/// Markers for `profile` on its support window.
///
/// Coordinates are the Kepler energy, `L` and the Kepler mean anomaly `Q`;
/// since `dr dw = dQ dH / Ω(H)`, a cell of volume `ΔH ΔL ΔQ` gets weight
/// `π f ΔH ΔL ΔQ / Ω`.
pub fn init_ensemble(
    profile: &BumpProfile,
    counts: (usize, usize, usize),
    layout: Layout,
    coupling: Coupling,
) -> Result<MarkerEnsemble> {
    init_ensemble_in(profile, counts, layout, coupling, &FieldProfile::zero())
}

/// As [`init_ensemble`], with `(H, Q)` the energy and angle of the orbits in
/// `-1/r + φ(r)`. Markers sharing an orbit stay evenly spaced in angle as
/// long as the potential stays close to `φ`.
pub fn init_ensemble_in(
    profile: &BumpProfile,
    counts: (usize, usize, usize),
    layout: Layout,
    coupling: Coupling,
    field: &FieldProfile,
) -> Result<MarkerEnsemble> {
    let (nh, nl, nq) = counts;
    if nh < 2 || nl < 2 || nq < 2 {
        return Err(Error::InvalidSpec(format!(
            "marker counts must be at least 2 each, got {counts:?}"
        )));
    }
    let spec = profile.spec;
    spec.validate()?;
    let n = nh * nl * nq;
    let dl = spec.l2 - spec.l1;
    let cell = |uh: f64, ul: f64, uq: f64| -> (f64, f64, f64, f64) {
        let l = spec.l1 + ul * dl;
        let (lo, hi) = profile.energy_window(l);
        let h = lo + uh * (hi - lo);
        let q = -PI + 2.0 * PI * uq;
        (h, l, q, hi - lo)
    };
    // points on one orbit are consecutive so each orbit is charted once
    let (points, per_orbit): (Vec<(f64, f64, f64, f64)>, usize) = match layout {
        Layout::Tensor => {
            let mut out = Vec::with_capacity(n);
            for j in 0..nl {
                for i in 0..nh {
                    for k in 0..nq {
                        let (h, l, q, span) = cell(
                            (i as f64 + 0.5) / nh as f64,
                            (j as f64 + 0.5) / nl as f64,
                            (k as f64 + 0.5) / nq as f64,
                        );
                        let vol = span / nh as f64 * dl / nl as f64 * 2.0 * PI / nq as f64;
                        out.push((h, l, q, vol));
                    }
                }
            }
            (out, nq)
        }
        Layout::Lattice => {
            // generalized golden ratio for three dimensions: g^4 = g + 1
            let g = 1.220_744_084_605_759_5_f64;
            let alpha = [1.0 / g, 1.0 / (g * g), 1.0 / (g * g * g)];
            let out = (0..n)
                .map(|i| {
                    let u = |a: f64| (0.5 + a * i as f64).fract();
                    let (h, l, q, span) = cell(u(alpha[0]), u(alpha[1]), u(alpha[2]));
                    (h, l, q, span * dl * 2.0 * PI / n as f64)
                })
                .collect();
            (out, 1)
        }
    };
    let markers = points
        .par_chunks(per_orbit)
        .map(|orbit| {
            let (h, l) = (orbit[0].0, orbit[0].1);
            let chart = if field.is_zero() {
                None
            } else {
                Some(OrbitChart::numeric(h, l, field, DEFAULT_CHART_NODES)?)
            };
            let omega = match &chart {
                None => kepler_frequency(h),
                Some(c) => c.omega(),
            };
            orbit
                .iter()
                .map(|&(h, l, q, vol)| {
                    let f = profile.value(q, h, l);
                    let state = match &chart {
                        None => kepler_state(h, l, q)?,
                        Some(c) => {
                            let (r, w) = c.state_at_angle(q, field)?;
                            RadialState::new(r, w, l)
                        }
                    };
                    Ok(Marker {
                        state,
                        weight: PI * f * vol / omega,
                        f_value: f,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    MarkerEnsemble::new(markers, coupling)
}

/// Markers placed on the orbits of their own potential: the ensemble is
/// rebuilt in the field of the previous one, `iterations` times, starting
/// from the Kepler placement.
pub fn init_self_consistent(
    profile: &BumpProfile,
    counts: (usize, usize, usize),
    layout: Layout,
    coupling: Coupling,
    grid: &RadialGrid,
    iterations: usize,
) -> Result<(MarkerEnsemble, FieldProfile)> {
    let mut ens = init_ensemble(profile, counts, layout, coupling)?;
    let mut field = solve_field(&deposit_sigma(&ens, grid)?, grid, coupling)?;
    for _ in 0..iterations {
        ens = init_ensemble_in(profile, counts, layout, coupling, &field)?;
        field = solve_field(&deposit_sigma(&ens, grid)?, grid, coupling)?;
    }
    Ok((ens, field))
}

/// Uniform radial bins on `[r_min, r_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub bins: usize,
}

impl RadialGrid {
    pub const DEFAULT_BINS: usize = 512;

    pub fn new(r_min: f64, r_max: f64, bins: usize) -> Result<Self> {
        if !(r_min > 0.0) || !(r_max > r_min) || bins < 2 {
            return Err(Error::InvalidSpec(format!(
                "radial grid needs 0 < r_min < r_max and >= 2 bins, got [{r_min}, {r_max}] x {bins}"
            )));
        }
        Ok(Self { r_min, r_max, bins })
    }

    /// `[0.9 · l1/2, 1.1 · 2/h]` for the given support set.
    pub fn for_support(spec: &SupportSpec, bins: usize) -> Result<Self> {
        let (lo, hi) = spec.annulus();
        Self::new(0.9 * lo, 1.1 * hi, bins)
    }

    pub fn dr(&self) -> f64 {
        (self.r_max - self.r_min) / self.bins as f64
    }

    pub fn edge(&self, i: usize) -> f64 {
        self.r_min + self.dr() * i as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.r_min + self.dr() * (i as f64 + 0.5)
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.bins).map(|i| self.edge(i)).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins).map(|i| self.center(i)).collect()
    }
}

/// Cloud-in-cell deposit of `σ(r) = ∫∫ f dL dw` per bin, so that
/// `Σ σ Δr = total mass / π`.
pub fn deposit_sigma(ens: &MarkerEnsemble, grid: &RadialGrid) -> Result<Vec<f64>> {
    let dr = grid.dr();
    let nb = grid.bins;
    let partials = ens
        .markers
        .par_chunks(DEPOSIT_CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; nb];
            for m in chunk {
                let r = m.state.r;
                if !(r >= grid.r_min && r <= grid.r_max) {
                    return Err(Error::MarkerOutOfGrid(format!(
                        "r = {r} outside [{}, {}]",
                        grid.r_min, grid.r_max
                    )));
                }
                let x = (r - grid.r_min) / dr - 0.5;
                if x <= 0.0 {
                    acc[0] += m.weight;
                } else if x >= (nb - 1) as f64 {
                    acc[nb - 1] += m.weight;
                } else {
                    let i = x as usize;
                    let frac = x - i as f64;
                    acc[i] += m.weight * (1.0 - frac);
                    acc[i + 1] += m.weight * frac;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sigma = vec![0.0; nb];
    for part in &partials {
        for (s, p) in sigma.iter_mut().zip(part) {
            *s += p;
        }
    }
    let norm = 1.0 / (PI * dr);
    for s in &mut sigma {
        *s *= norm;
    }
    Ok(sigma)
}

/// Potential of a binned `σ` (constant on each bin), at the bin edges.
///
/// `φ(r) = -π [ (1/r) ∫_0^r σ + ∫_r^∞ σ(r1)/r1 dr1 ]` is evaluated exactly
/// for the piecewise-constant density, and `∂_r φ = π M(r)/r^2` with
/// `M(r) = ∫_0^r σ` independently; the two agree analytically, so finite
/// differences of the stored `φ` reproduce the stored slopes to `O(Δr^2)`.
pub fn solve_field(sigma: &[f64], grid: &RadialGrid, coupling: Coupling) -> Result<FieldProfile> {
    if sigma.len() != grid.bins {
        return Err(Error::InvalidSpec(format!(
            "sigma has {} bins, grid has {}",
            sigma.len(),
            grid.bins
        )));
    }
    let edges = grid.edges();
    if sigma.iter().all(|&s| s == 0.0) {
        let zeros = vec![0.0; edges.len()];
        return FieldProfile::new(edges, zeros.clone(), zeros);
    }
    let dr = grid.dr();
    let sign = coupling.sign();
    let n = edges.len();
    let mut enclosed = vec![0.0; n];
    for i in 0..grid.bins {
        enclosed[i + 1] = enclosed[i] + sigma[i] * dr;
    }
    let mut outer = vec![0.0; n];
    for i in (0..grid.bins).rev() {
        outer[i] = outer[i + 1] + sigma[i] * (edges[i + 1] / edges[i]).ln();
    }
    let phi = (0..n)
        .map(|i| -sign * PI * (enclosed[i] / edges[i] + outer[i]))
        .collect();
    let dphi = (0..n)
        .map(|i| sign * PI * enclosed[i] / (edges[i] * edges[i]))
        .collect();
    FieldProfile::new(edges, phi, dphi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PushMode {
    /// Kepler force only; the self-field is ignored.
    Linear,
    #[default]
    Nonlinear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Self-field kicks around the exact Kepler flow.
    #[default]
    KeplerSplit,
    /// Kick–drift–kick with the full force and straight-line drifts.
    Leapfrog,
}

fn kick(s: &mut RadialState, field: &FieldProfile, scheme: Scheme, with_field: bool, tau: f64) {
    let mut force = 0.0;
    if with_field {
        force -= field.dphi(s.r);
    }
    if scheme == Scheme::Leapfrog {
        force += s.l / (s.r * s.r * s.r) - 1.0 / (s.r * s.r);
    }
    s.w += force * tau;
}

fn drift(s: &mut RadialState, scheme: Scheme, dt: f64) -> Result<()> {
    match scheme {
        Scheme::KeplerSplit => {
            let (r, w) = kepler_radial_drift(s.r, s.w, s.l, dt)?;
            s.r = r;
            s.w = w;
        }
        Scheme::Leapfrog => {
            let r = s.r + s.w * dt;
            if !(r > 0.0) {
                return Err(Error::StepRejected(format!(
                    "marker would reach r = {r} (dt = {dt} too large)"
                )));
            }
            s.r = r;
        }
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if dt == 0.0 || !dt.is_finite() {
        return Err(Error::InvalidSpec(format!(
            "time step must be finite and non-zero, got {dt}"
        )));
    }
    Ok(())
}

/// One kick–drift–kick step of every marker in a fixed field. A negative
/// `dt` integrates backwards.
pub fn push(
    ens: &mut MarkerEnsemble,
    field: &FieldProfile,
    dt: f64,
    mode: PushMode,
    scheme: Scheme,
) -> Result<()> {
    check_dt(dt)?;
    let with_field = mode == PushMode::Nonlinear;
    ens.markers.par_iter_mut().try_for_each(|m| {
        let mut s = m.state;
        kick(&mut s, field, scheme, with_field, 0.5 * dt);
        drift(&mut s, scheme, dt)?;
        kick(&mut s, field, scheme, with_field, 0.5 * dt);
        m.state = s;
        Ok(())
    })
}

/// `0.02 ×` the shortest physical radial period `2π/Ω` among the markers.
pub fn default_dt(ens: &MarkerEnsemble) -> Result<f64> {
    let omega_max = ens
        .markers
        .iter()
        .map(|m| kepler_frequency(m.state.kepler_energy()))
        .fold(0.0f64, f64::max);
    if !(omega_max > 0.0) || !omega_max.is_finite() {
        return Err(Error::InvalidSpec(
            "no bound markers to set the time step".into(),
        ));
    }
    Ok(0.02 * 2.0 * PI / omega_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mode: PushMode,
    pub scheme: Scheme,
    pub dt: f64,
    pub steps: usize,
    pub snapshot_every: usize,
    pub grid: RadialGrid,
    pub keep_ensembles: bool,
    /// Support set checked at every snapshot.
    pub monitor: Option<SupportSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub sigma: Vec<f64>,
    pub field: FieldProfile,
    pub total_mass: f64,
    pub support: Option<SupportReport>,
    /// Largest `|H(t) - H(0) - ∫ ∂_s φ(s, r(s)) ds| / |H(0)|` over markers.
    pub energy_error: f64,
    pub ensemble: Option<MarkerEnsemble>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub snapshots: Vec<Snapshot>,
    pub final_ensemble: MarkerEnsemble,
}

struct Ledger {
    h0: Vec<f64>,
    budget: Vec<f64>,
}

impl Ledger {
    fn energy(m: &Marker, field: &FieldProfile) -> f64 {
        m.state.kepler_energy() + field.phi(m.state.r)
    }

    fn max_error(&self, ens: &MarkerEnsemble, field: &FieldProfile) -> f64 {
        ens.markers
            .par_iter()
            .zip(self.h0.par_iter().zip(self.budget.par_iter()))
            .filter(|(m, _)| m.weight > 0.0)
            .map(|(m, (h0, b))| ((Self::energy(m, field) - h0 - b) / h0).abs())
            .reduce(|| 0.0, f64::max)
    }
}

/// Self-consistent evolution: deposit, field solve and a kick–drift–kick
/// push per step, with the field refreshed between the two half kicks.
pub fn run(ens: MarkerEnsemble, cfg: &SimConfig) -> Result<RunOutput> {
    check_dt(cfg.dt)?;
    if cfg.snapshot_every == 0 {
        return Err(Error::InvalidSpec(
            "snapshot cadence must be positive".into(),
        ));
    }
    let mut ens = ens;
    let coupling = ens.coupling;
    let nonlinear = cfg.mode == PushMode::Nonlinear;
    let field_of = |e: &MarkerEnsemble| -> Result<(Vec<f64>, FieldProfile)> {
        let sigma = deposit_sigma(e, &cfg.grid)?;
        let field = solve_field(&sigma, &cfg.grid, coupling)?;
        Ok((sigma, field))
    };
    let (mut sigma, mut field) = field_of(&ens)?;
    let mut ledger = Ledger {
        h0: ens
            .markers
            .iter()
            .map(|m| Ledger::energy(m, &field))
            .collect(),
        budget: vec![0.0; ens.len()],
    };
    if !nonlinear {
        ledger.h0 = ens
            .markers
            .iter()
            .map(|m| m.state.kepler_energy())
            .collect();
    }
    let snapshot = |step: usize,
                    ens: &MarkerEnsemble,
                    sigma: &[f64],
                    field: &FieldProfile,
                    ledger: &Ledger|
     -> Snapshot {
        let zero = FieldProfile::zero();
        let active = if nonlinear { field } else { &zero };
        let energy_error = ledger.max_error(ens, active);
        Snapshot {
            step,
            time: step as f64 * cfg.dt,
            sigma: sigma.to_vec(),
            field: field.clone(),
            total_mass: ens.total_mass(),
            support: cfg.monitor.map(|s| support_monitor(ens, &s, active)),
            energy_error,
            ensemble: cfg.keep_ensembles.then(|| ens.clone()),
        }
    };
    let mut snapshots = vec![snapshot(0, &ens, &sigma, &field, &ledger)];
    let zero = FieldProfile::zero();
    let half = 0.5 * cfg.dt;
    let mut previous_r = vec![0.0; ens.len()];
    for step in 1..=cfg.steps {
        let take = step % cfg.snapshot_every == 0 || step == cfg.steps;
        if nonlinear {
            ens.markers
                .par_iter_mut()
                .zip(previous_r.par_iter_mut())
                .try_for_each(|(m, prev)| {
                    *prev = m.state.r;
                    kick(&mut m.state, &field, cfg.scheme, true, half);
                    drift(&mut m.state, cfg.scheme, cfg.dt)
                })?;
            let (s, next) = field_of(&ens)?;
            // explicit time change of φ at the marker, trapezoid over the step
            ens.markers
                .par_iter_mut()
                .zip(previous_r.par_iter().zip(ledger.budget.par_iter_mut()))
                .for_each(|(m, (&r0, b))| {
                    let r1 = m.state.r;
                    *b += 0.5 * ((next.phi(r0) - field.phi(r0)) + (next.phi(r1) - field.phi(r1)));
                    kick(&mut m.state, &next, cfg.scheme, true, half);
                });
            sigma = s;
            field = next;
        } else {
            push(&mut ens, &zero, cfg.dt, PushMode::Linear, cfg.scheme)?;
            if take {
                let (s, f) = field_of(&ens)?;
                sigma = s;
                field = f;
            }
        }
        if take {
            snapshots.push(snapshot(step, &ens, &sigma, &field, &ledger));
        }
    }
    Ok(RunOutput {
        snapshots,
        final_ensemble: ens,
    })
}
