//! The six experiments. Each writes its CSV files into the output directory
//! and reports a list of named pass/fail checks.

use std::f64::consts::PI;
use std::path::Path;

use phasemix::diag::{annulus_sup, decay_fit, dphi_dt_fd, jacobian_probe, DecayFit};
use phasemix::effpot::{angle, frequency, radial_period, SupportSpec};
use phasemix::field::FieldProfile;
use phasemix::kepler::{
    cartesian_to_delaunay, delaunay_to_cartesian, in_linear_support, kepler_hamiltonian,
    kepler_period, wrap_angle, DelaunayState, LinearSupportSpec,
};
use phasemix::linflow::{
    probe_field_series, semigroup_apply, AngleFourierTable, FrequencyMap, FrozenFlow, KeplerFlow,
    ProbeQuadrature,
};
use phasemix::orbit::{OrbitChart, DEFAULT_CHART_NODES};
use phasemix::profile::BumpProfile;
use phasemix::vlasov::{
    default_dt, init_ensemble, init_self_consistent, push, run as run_markers, Coupling, Layout,
    Marker, MarkerEnsemble, PushMode, RadialGrid, RadialState, Scheme, SimConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{
    steps_per, DtPolicy, FieldSource, LayoutName, Resolved, RunConfig, Scenario, SignCoupling,
};
use crate::output::{self, num};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Numerics(#[from] phasemix::Error),
    #[error("writing output: {0}")]
    Csv(#[from] csv::Error),
    #[error("writing output: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl Outcome {
    fn check(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail,
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Writes the config echo, then runs the scenario.
pub fn run_scenario(resolved: &Resolved) -> Result<Outcome, RunError> {
    let out = resolved.out_dir();
    std::fs::write(out.join("config.toml"), resolved.echo())?;
    let c = &resolved.config;
    let t_final = resolved.t_final();
    match c.scenario {
        Scenario::OrbitCheck => orbit_check(c, t_final, out),
        Scenario::PeriodTable => period_table(c, out),
        Scenario::TransformCheck => transform_check(c, out),
        Scenario::LinearDecay => {
            let flow = KeplerFlow::new();
            decay_scenario(c, t_final, out, &flow)
        }
        Scenario::FrozenDecay => {
            let flow = FrozenFlow::new(frozen_field(c)?);
            decay_scenario(c, t_final, out, &flow)
        }
        Scenario::NonlinearRun => nonlinear_run(c, t_final, out),
    }
}

fn support(c: &RunConfig) -> Result<SupportSpec, RunError> {
    let s = &c.support;
    Ok(SupportSpec::new(s.c, s.h, s.l1, s.l2)?)
}

fn coupling(c: &RunConfig) -> Coupling {
    match c.coupling {
        SignCoupling::Attractive => Coupling::Attractive,
        SignCoupling::Repulsive => Coupling::Repulsive,
    }
}

fn layout(c: &RunConfig) -> Layout {
    match c.markers.layout {
        LayoutName::Tensor => Layout::Tensor,
        LayoutName::Lattice => Layout::Lattice,
    }
}

fn counts(c: &RunConfig) -> (usize, usize, usize) {
    (c.markers.nh, c.markers.nl, c.markers.nq)
}

/// The configured profile, rescaled to carry `profile.mass` when that is set.
fn profile(c: &RunConfig) -> Result<BumpProfile, RunError> {
    let p = &c.profile;
    let base = BumpProfile::new(support(c)?, p.amplitude, p.p, p.modulation)?;
    if p.mass == 0.0 {
        return Ok(base);
    }
    let unit = base.scaled(1.0);
    let mass = init_ensemble(&unit, counts(c), layout(c), coupling(c))?.total_mass();
    Ok(base.scaled(p.mass / mass))
}

fn frozen_field(c: &RunConfig) -> Result<FieldProfile, RunError> {
    let f = &c.field;
    match f.source {
        FieldSource::Bump if f.amplitude == 0.0 => Ok(FieldProfile::zero()),
        FieldSource::Bump => Ok(FieldProfile::bump(
            f.amplitude,
            f.lo,
            f.hi,
            f.lo,
            f.hi,
            f.nodes,
        )?),
        FieldSource::SelfConsistent => {
            let grid = RadialGrid::for_support(&support(c)?, c.grid.bins)?;
            let (_, field) = init_self_consistent(
                &profile(c)?,
                counts(c),
                layout(c),
                coupling(c),
                &grid,
                c.markers.self_consistent,
            )?;
            Ok(field)
        }
    }
}

/// The configured step, or `auto` shrunk until it divides the cadence.
fn time_step(c: &RunConfig, auto: f64) -> f64 {
    match c.time.dt {
        DtPolicy::Fixed(dt) => dt,
        DtPolicy::Named(_) => c.time.cadence / (c.time.cadence / auto).ceil(),
    }
}

fn output_times(c: &RunConfig, t_final: f64) -> Vec<f64> {
    let n = (t_final / c.time.cadence).round() as usize;
    (0..=n).map(|k| k as f64 * c.time.cadence).collect()
}

fn fit_window(c: &RunConfig, t_final: f64) -> (f64, f64) {
    c.time.fit_window(t_final)
}

fn write_fit(out: &Path, fit: &DecayFit) -> Result<(), RunError> {
    let mut w = output::create(
        out,
        "fit.csv",
        &["t0", "t1", "exponent", "residual", "floor_flag"],
    )?;
    w.write_record([
        num(fit.t0),
        num(fit.t1),
        num(fit.exponent),
        num(fit.residual),
        fit.floor_flag.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

fn orbit_check(c: &RunConfig, t_final: f64, out: &Path) -> Result<Outcome, RunError> {
    let field = frozen_field(c)?;
    let (h, l) = (c.orbit.h, c.orbit.l);
    let chart = OrbitChart::numeric(h, l, &field, DEFAULT_CHART_NODES)?;
    let omega = chart.omega();
    let (r0, w0) = chart.state_at_angle(0.3, &field)?;
    let mut ens = MarkerEnsemble::new(
        vec![Marker {
            state: RadialState::new(r0, w0, l),
            weight: 0.0,
            f_value: 1.0,
        }],
        Coupling::Attractive,
    )?;
    let dt = time_step(c, 1e-3 * 2.0 * PI / omega);
    let per = steps_per(c.time.cadence, dt).unwrap_or(1);
    let times = output_times(c, t_final);
    let mut w = output::create(out, "orbit.csv", &["t", "r", "w", "q", "h", "jdet"])?;
    let (mut worst_h, mut worst_j): (f64, f64) = (0.0, 0.0);
    for (k, &t) in times.iter().enumerate() {
        if k > 0 {
            for _ in 0..per {
                push(
                    &mut ens,
                    &field,
                    dt,
                    PushMode::Nonlinear,
                    Scheme::KeplerSplit,
                )?;
            }
        }
        let s = ens.markers()[0].state;
        let e = s.energy(&field);
        worst_h = worst_h.max(((e - h) / h).abs());
        let q = angle(&s, &field)?;
        let jdet = match jacobian_probe(&s, &field) {
            Ok(j) => {
                let local = frequency(e, s.l, &field)?;
                worst_j = worst_j.max(((j - local) / local).abs());
                num(j)
            }
            Err(phasemix::Error::OutOfOrbit(_)) => String::new(),
            Err(e) => return Err(e.into()),
        };
        w.write_record([num(t), num(s.r), num(s.w), num(q), num(e), jdet])?;
    }
    w.flush()?;
    let mut o = Outcome::default();
    o.check(
        "energy",
        worst_h <= c.checks.energy,
        format!(
            "max relative energy change {worst_h:e} (limit {:e})",
            c.checks.energy
        ),
    );
    o.check(
        "jacobian",
        worst_j <= c.checks.jacobian,
        format!(
            "max relative |det - Ω| {worst_j:e} (limit {:e})",
            c.checks.jacobian
        ),
    );
    Ok(o)
}

fn period_table(c: &RunConfig, out: &Path) -> Result<Outcome, RunError> {
    let spec = support(c)?;
    let field = frozen_field(c)?;
    let (nh, nl) = (c.grid.table_h, c.grid.table_l);
    let mut rows = Vec::with_capacity(nh * nl);
    for j in 0..nl {
        let l = spec.l1 + (spec.l2 - spec.l1) * j as f64 / (nl - 1) as f64;
        let (lo, hi) = (-0.5 / l + spec.c, -spec.h);
        for i in 0..nh {
            let h = lo + (hi - lo) * i as f64 / (nh - 1) as f64;
            rows.push((h, l));
        }
    }
    let mut w = output::create(
        out,
        "periods.csv",
        &["h", "l", "period_numeric", "period_kepler", "rel_err"],
    )?;
    let mut worst: f64 = 0.0;
    let mut worst_abs: f64 = 0.0;
    for (h, l) in rows {
        let numeric = radial_period(h, l, &field)?;
        let kepler = kepler_period(h);
        let rel = ((numeric - kepler) / kepler).abs();
        worst = worst.max(rel);
        worst_abs = worst_abs.max((numeric - kepler).abs());
        w.write_record([num(h), num(l), num(numeric), num(kepler), num(rel)])?;
    }
    w.flush()?;
    let mut o = Outcome::default();
    if field.is_zero() {
        o.check(
            "kepler period",
            worst <= c.checks.period,
            format!("max relative error {worst:e} (limit {:e})", c.checks.period),
        );
    } else if c.field.source == FieldSource::Bump {
        // the absolute shift grows with the period, so the bound is relative
        let bound = 50.0 * c.field.amplitude.abs();
        o.check(
            "period shift",
            worst <= bound,
            format!("max relative shift {worst:e} (bound 50 × amplitude = {bound:e}), max absolute {worst_abs:e}"),
        );
    }
    Ok(o)
}

/// A uniformly drawn element set whose state lies in the linear support set.
pub fn draw_linear_state(
    rng: &mut ChaCha8Rng,
    spec: &LinearSupportSpec,
) -> Result<DelaunayState, RunError> {
    loop {
        let l = rng.gen_range(spec.l1..spec.l2);
        let h = rng.gen_range(-0.5 / l + spec.c0..-spec.h0);
        let lz_max = (l - spec.n0 * spec.n0).sqrt();
        let lz = rng.gen_range(-lz_max..lz_max);
        let cos_w = rng.gen_range(-1.0 + spec.n1..1.0 - spec.n1);
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let q = rng.gen_range(-PI..PI);
        let theta_l = rng.gen_range(-PI..PI);
        let d = DelaunayState::from_coordinates(
            1.0 / (-2.0 * h).sqrt(),
            l.sqrt(),
            lz,
            q,
            theta_l,
            sign * cos_w.acos(),
        )?;
        if in_linear_support(&delaunay_to_cartesian(&d)?, spec) {
            return Ok(d);
        }
    }
}

fn transform_check(c: &RunConfig, out: &Path) -> Result<Outcome, RunError> {
    let s = &c.support;
    let spec = LinearSupportSpec::new(s.c, s.h, s.l1, s.l2, s.n0, s.n1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut w = output::create(
        out,
        "transform.csv",
        &["i", "h", "l", "e_squared", "identity_err", "round_trip_err"],
    )?;
    let (mut worst_id, mut worst_rt): (f64, f64) = (0.0, 0.0);
    for i in 0..c.orbit.samples {
        let d = draw_linear_state(&mut rng, &spec)?;
        let state = delaunay_to_cartesian(&d)?;
        let h = kepler_hamiltonian(&state);
        let l = state.squared_angular_momentum();
        let e = state.eccentricity_vector();
        let e2 = e.dot(e);
        let id = (e2 - (1.0 + 2.0 * h * l)).abs();
        let back = cartesian_to_delaunay(&state, &spec)?;
        let rt = [
            (back.j - d.j).abs(),
            (back.frk_l - d.frk_l).abs(),
            (back.frk_lz - d.frk_lz).abs(),
            wrap_angle(back.q - d.q).abs(),
            wrap_angle(back.theta_l - d.theta_l).abs(),
            wrap_angle(back.theta_lz - d.theta_lz).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        worst_id = worst_id.max(id);
        worst_rt = worst_rt.max(rt);
        w.write_record([i.to_string(), num(h), num(l), num(e2), num(id), num(rt)])?;
    }
    w.flush()?;
    let mut o = Outcome::default();
    o.check(
        "eccentricity identity",
        worst_id <= c.checks.identity,
        format!("max error {worst_id:e} (limit {:e})", c.checks.identity),
    );
    o.check(
        "round trip",
        worst_rt <= c.checks.round_trip,
        format!(
            "max coordinate error {worst_rt:e} (limit {:e})",
            c.checks.round_trip
        ),
    );
    Ok(o)
}

/// Cell-centred probe radii across the annulus of the support set.
pub fn probe_radii(spec: &SupportSpec, n: usize) -> Vec<f64> {
    let (lo, hi) = spec.annulus();
    (0..n)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64)
        .collect()
}

fn decay_scenario(
    c: &RunConfig,
    t_final: f64,
    out: &Path,
    flow: &dyn FrequencyMap,
) -> Result<Outcome, RunError> {
    let spec = support(c)?;
    let p = profile(c)?;
    let probes = probe_radii(&spec, c.grid.probes);
    let times = output_times(c, t_final);
    let quad = ProbeQuadrature {
        m_nodes: c.grid.m_nodes,
        h_panels: c.grid.h_panels,
        h_order: c.grid.h_order,
    };
    let series = probe_field_series(&p, flow, &times, &probes, &quad, c.grid.modes)?;
    let mut fw = output::create(out, "field.csv", &["t", "r", "phi", "dphi_dt"])?;
    let mut dw = output::create(out, "decay.csv", &["t", "sup_dphi_dt"])?;
    let mut sup = Vec::with_capacity(times.len());
    for (t, row) in times.iter().zip(&series) {
        for (r, s) in probes.iter().zip(row) {
            fw.write_record([num(*t), num(*r), num(s.phi), num(s.dphi_dt)])?;
        }
        let m = row.iter().map(|s| s.dphi_dt.abs()).fold(0.0, f64::max);
        dw.write_record([num(*t), num(m)])?;
        sup.push(m);
    }
    fw.flush()?;
    dw.flush()?;
    spectrum(c, &p, flow, &times, out)?;
    let fit = decay_fit(&times, &sup, fit_window(c, t_final))?;
    write_fit(out, &fit)?;
    let mut o = Outcome::default();
    o.notes.push(format!(
        "fitted exponent {:.4} over [{}, {}], floor {}",
        fit.exponent, fit.t0, fit.t1, fit.floor_flag
    ));
    o.check(
        "decay",
        fit.exponent <= c.checks.max_exponent && !fit.floor_flag,
        format!(
            "exponent {:.4} (limit {}), floor {}",
            fit.exponent, c.checks.max_exponent, fit.floor_flag
        ),
    );
    Ok(o)
}

/// `(t, k, sqrt(Σ w |ĥ_k(t)|²))` on a tensor table over the support set.
fn spectrum(
    c: &RunConfig,
    p: &BumpProfile,
    flow: &dyn FrequencyMap,
    times: &[f64],
    out: &Path,
) -> Result<(), RunError> {
    let table = AngleFourierTable::tensor(p, c.grid.m_nodes, c.grid.m_nodes, c.grid.modes)?;
    let mut w = output::create(out, "spectrum.csv", &["t", "k", "mode_amplitude"])?;
    for &t in times {
        let s = semigroup_apply(&table, t, flow)?;
        for k in 0..=s.kmax() {
            w.write_record([num(t), k.to_string(), num(s.mode_power(k as i64).sqrt())])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn nonlinear_run(c: &RunConfig, t_final: f64, out: &Path) -> Result<Outcome, RunError> {
    let spec = support(c)?;
    let p = profile(c)?;
    let grid = RadialGrid::for_support(&spec, c.grid.bins)?;
    let (ens, _) = init_self_consistent(
        &p,
        counts(c),
        layout(c),
        coupling(c),
        &grid,
        c.markers.self_consistent,
    )?;
    let dt = time_step(c, default_dt(&ens)?);
    let every = steps_per(c.time.cadence, dt).unwrap_or(1);
    let outputs = (t_final / c.time.cadence).round() as usize;
    // one extra interval so the last reported time has a centred difference
    let cfg = SimConfig {
        mode: PushMode::Nonlinear,
        scheme: Scheme::KeplerSplit,
        dt,
        steps: (outputs + 1) * every,
        snapshot_every: every,
        grid,
        keep_ensembles: false,
        monitor: Some(spec.halved()),
    };
    let run = run_markers(ens, &cfg)?;
    let fields: Vec<&FieldProfile> = run.snapshots.iter().map(|s| &s.field).collect();
    let rates = dphi_dt_fd(&fields, c.time.cadence)?;
    let nodes = fields[0].nodes().to_vec();
    let annulus = spec.annulus();
    let mut fw = output::create(out, "field.csv", &["t", "r", "phi", "dphi_dt"])?;
    let mut dw = output::create(
        out,
        "decay.csv",
        &["t", "sup_dphi_dt", "mass", "energy_error", "violations"],
    )?;
    let mut times = Vec::with_capacity(outputs + 1);
    let mut sup = Vec::with_capacity(outputs + 1);
    let mut worst_energy: f64 = 0.0;
    let mut violations = 0;
    let mass0 = run.snapshots[0].total_mass;
    let mut mass_drift: f64 = 0.0;
    for (snap, rate) in run.snapshots.iter().zip(&rates).take(outputs + 1) {
        let t = snap.time;
        for ((r, phi), d) in nodes.iter().zip(snap.field.phi_values()).zip(rate) {
            if *r >= annulus.0 && *r <= annulus.1 {
                fw.write_record([num(t), num(*r), num(*phi), num(*d)])?;
            }
        }
        let m = annulus_sup(&nodes, rate, annulus);
        let v = snap.support.map_or(0, |s| s.violations);
        dw.write_record([
            num(t),
            num(m),
            num(snap.total_mass),
            num(snap.energy_error),
            v.to_string(),
        ])?;
        times.push(t);
        sup.push(m);
        worst_energy = worst_energy.max(snap.energy_error);
        violations += v;
        mass_drift = mass_drift.max((snap.total_mass - mass0).abs());
    }
    fw.flush()?;
    dw.flush()?;
    let fit = decay_fit(&times, &sup, fit_window(c, t_final))?;
    write_fit(out, &fit)?;
    let mut o = Outcome::default();
    o.notes.push(format!(
        "{} markers, mass {mass0}, dt {dt}, fitted exponent {:.4} over [{}, {}]",
        run.final_ensemble.len(),
        fit.exponent,
        fit.t0,
        fit.t1
    ));
    o.check(
        "support",
        violations == 0,
        format!("{violations} markers left the halved set"),
    );
    o.check(
        "mass",
        mass_drift == 0.0,
        format!("total mass drift {mass_drift:e}"),
    );
    o.check(
        "energy",
        worst_energy <= c.checks.energy,
        format!(
            "max energy bookkeeping error {worst_energy:e} (limit {:e})",
            c.checks.energy
        ),
    );
    o.check(
        "decay",
        fit.exponent <= c.checks.max_exponent,
        format!(
            "exponent {:.4} (limit {})",
            fit.exponent, c.checks.max_exponent
        ),
    );
    Ok(o)
}
