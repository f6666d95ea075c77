//! Acceptance criteria at pinned tolerances. Prints one line per criterion
//! and exits non-zero if any fails. `ACCEPTANCE_ONLY=3,7` runs a subset.

use std::collections::BTreeMap;
use std::error::Error;
use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use phasemix::diag::{decay_fit, jacobian_probe};
use phasemix::effpot::{angle, radial_period, SupportSpec};
use phasemix::field::FieldProfile;
use phasemix::kepler::{
    cartesian_to_delaunay, kepler_frequency, kepler_hamiltonian, kepler_period, wrap_angle,
    CartesianState, LinearSupportSpec, Vec3,
};
use phasemix::linflow::{
    probe_field_series, ActionAngleState, FrequencyMap, KeplerFlow, ProbeQuadrature,
};
use phasemix::orbit::{OrbitChart, DEFAULT_CHART_NODES};
use phasemix::profile::BumpProfile;
use phasemix::quadrature::GaussLegendre;
use phasemix::vlasov::{
    deposit_sigma, init_ensemble, kepler_state, push, solve_field, Coupling, Layout, PushMode,
    RadialGrid, Scheme,
};
use phasemix_cli::scenarios::{draw_linear_state, probe_radii};
use phasemix_cli::{parse_config, run, Overrides, Scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn Error>>;
type Criterion = (u32, &'static str, fn() -> Outcome);

fn spec() -> SupportSpec {
    SupportSpec::new(0.05, 0.1, 0.5, 1.0).unwrap()
}

fn grid_points(s: &SupportSpec, nh: usize, nl: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(nh * nl);
    for j in 0..nl {
        let l = s.l1 + (s.l2 - s.l1) * j as f64 / (nl - 1) as f64;
        let (lo, hi) = (-0.5 / l + s.c, -s.h);
        for i in 0..nh {
            out.push((lo + (hi - lo) * i as f64 / (nh - 1) as f64, l));
        }
    }
    out
}

fn kepler_period_oracle() -> Outcome {
    let zero = FieldProfile::zero();
    let mut worst: f64 = 0.0;
    for (h, l) in grid_points(&spec(), 20, 20) {
        let t = kepler_period(h);
        worst = worst.max(((radial_period(h, l, &zero)? - t) / t).abs());
    }
    Ok((
        worst < 1e-8,
        format!("max relative error {worst:.2e} < 1e-8"),
    ))
}

fn eccentricity_identity() -> Outcome {
    let s = LinearSupportSpec::new(0.05, 0.1, 0.5, 1.0, 0.1, 0.1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let d = draw_linear_state(&mut rng, &s)?;
        let x = phasemix::kepler::delaunay_to_cartesian(&d)?;
        let e = x.eccentricity_vector();
        let err = e.dot(e) - (1.0 + 2.0 * kepler_hamiltonian(&x) * x.squared_angular_momentum());
        worst = worst.max(err.abs());
    }
    Ok((
        worst < 1e-12,
        format!("max | |e|^2 - (1 + 2HL) | {worst:.2e} < 1e-12"),
    ))
}

fn rk4_step(s: &CartesianState, dt: f64) -> CartesianState {
    let acc = |x: Vec3| x.scale(-1.0 / x.norm().powi(3));
    let (x, v) = (s.x, s.v);
    let (k1x, k1v) = (v, acc(x));
    let (k2x, k2v) = (v + k1v * (0.5 * dt), acc(x + k1x * (0.5 * dt)));
    let (k3x, k3v) = (v + k2v * (0.5 * dt), acc(x + k2x * (0.5 * dt)));
    let (k4x, k4v) = (v + k3v * dt, acc(x + k3x * dt));
    CartesianState::new(
        x + (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (dt / 6.0),
        v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0),
    )
}

fn angle_rate_law() -> Outcome {
    let s = LinearSupportSpec::new(0.05, 0.1, 0.5, 1.0, 0.1, 0.05)?;
    let mut state = CartesianState::new(Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.8, 0.3));
    let d0 = cartesian_to_delaunay(&state, &s)?;
    let rate = 1.0 / d0.j.powi(3);
    let per_period = 4000;
    let dt = 2.0 * PI / rate / per_period as f64;
    let (mut worst_q, mut worst_c): (f64, f64) = (0.0, 0.0);
    for step in 1..=10 * per_period {
        state = rk4_step(&state, dt);
        if step % 100 != 0 {
            continue;
        }
        let d = cartesian_to_delaunay(&state, &s)?;
        let t = step as f64 * dt;
        worst_q = worst_q.max(wrap_angle(d.q - d0.q - rate * t).abs());
        for diff in [
            d.j - d0.j,
            d.frk_l - d0.frk_l,
            d.frk_lz - d0.frk_lz,
            d.e_mag - d0.e_mag,
            wrap_angle(d.theta_l - d0.theta_l),
            wrap_angle(d.theta_lz - d0.theta_lz),
        ] {
            worst_c = worst_c.max(diff.abs());
        }
    }
    Ok((
        worst_q < 1e-6 && worst_c < 1e-8,
        format!("angle error {worst_q:.2e} < 1e-6, other coordinates {worst_c:.2e} < 1e-8 over 10 periods"),
    ))
}

/// `max |det - Ω_Kep(H)| / Ω_Kep(H)` over the sample points in `field`.
fn jacobian_deviation(
    points: &[(f64, f64, f64)],
    field: &FieldProfile,
) -> Result<f64, Box<dyn Error>> {
    let mut worst: f64 = 0.0;
    for &(h, l, q) in points {
        let state = if field.is_zero() {
            kepler_state(h, l, q)?
        } else {
            let (r, w) =
                OrbitChart::numeric(h, l, field, DEFAULT_CHART_NODES)?.state_at_angle(q, field)?;
            phasemix::effpot::RadialState::new(r, w, l)
        };
        let omega = kepler_frequency(h);
        worst = worst.max(((jacobian_probe(&state, field)? - omega) / omega).abs());
    }
    Ok(worst)
}

fn jacobian() -> Outcome {
    let s = spec();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut points = Vec::with_capacity(100);
    while points.len() < 100 {
        let l = rng.gen_range(s.l1..s.l2);
        let h = rng.gen_range(-0.5 / l + s.c..-s.h);
        let q = rng.gen_range(0.2..2.0 * PI - 0.2);
        let state = kepler_state(h, l, q)?;
        match jacobian_probe(&state, &FieldProfile::zero()) {
            Ok(_) => points.push((h, l, q)),
            Err(phasemix::Error::OutOfOrbit(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let kepler = jacobian_deviation(&points, &FieldProfile::zero())?;
    let d1 = jacobian_deviation(
        &points,
        &FieldProfile::bump(1e-3, 1.0, 3.0, 1.0, 3.0, 4001)?,
    )?;
    let d2 = jacobian_deviation(
        &points,
        &FieldProfile::bump(2e-3, 1.0, 3.0, 1.0, 3.0, 4001)?,
    )?;
    let ratio = d2 / d1;
    Ok((
        kepler < 1e-4 && (ratio / 2.0 - 1.0).abs() < 0.2,
        format!("Kepler deviation {kepler:.2e} < 1e-4, perturbed deviations {d1:.3e} / {d2:.3e} (ratio {ratio:.3}, want 2 within 20%)"),
    ))
}

fn period_perturbation() -> Outcome {
    let points = grid_points(&spec(), 10, 10);
    let field = |eps: f64| FieldProfile::bump(eps, 1.5, 2.0, 1.5, 2.0, 4001);
    let shift = |eps: f64| -> Result<f64, Box<dyn Error>> {
        let f = field(eps)?;
        let mut worst: f64 = 0.0;
        for &(h, l) in &points {
            worst = worst.max((radial_period(h, l, &f)? - kepler_period(h)).abs());
        }
        Ok(worst)
    };
    let (d1, d2) = (shift(1e-3)?, shift(2e-3)?);
    let ratio = d2 / d1;
    // the absolute shift grows with the period itself, so the 50ε bound is
    // taken on the reference orbit; the grid maximum is reported alongside
    let mut reference = [0.0; 2];
    for (r, eps) in reference.iter_mut().zip([1e-3, 2e-3]) {
        *r = (radial_period(-0.3, 1.0, &field(eps)?)? - kepler_period(-0.3)).abs() / eps;
    }
    Ok((
        (ratio / 2.0 - 1.0).abs() < 0.1 && reference.iter().all(|&r| r <= 50.0),
        format!(
            "grid max shift {d1:.3e} / {d2:.3e} (ratio {ratio:.3}, want 2 within 10%); shift/ε at H=-0.3, L=1: {:.2} / {:.2} <= 50 (grid max {:.1})",
            reference[0],
            reference[1],
            d2 / 2e-3
        ),
    ))
}

/// `-π [ (1/r) ∫_{ρ<r} σ + ∫_{ρ>r} σ/ρ ]` by Gauss–Legendre.
fn direct_potential(sigma: &dyn Fn(f64) -> f64, lo: f64, hi: f64, r: f64) -> f64 {
    let gl = GaussLegendre::new(20);
    let split = r.clamp(lo, hi);
    let inner: f64 = gl
        .composite(lo, split, 64)
        .iter()
        .map(|&(x, w)| w * sigma(x))
        .sum();
    let outer: f64 = gl
        .composite(split, hi, 64)
        .iter()
        .map(|&(x, w)| w * sigma(x) / x)
        .sum();
    -PI * (inner / r + outer)
}

fn field_solve_oracle() -> Outcome {
    let grid = RadialGrid::new(0.005, 4.005, 400)?;
    let dr = grid.dr();
    let k = ((1.0 - grid.r_min) / dr - 0.5).round() as usize;
    let mut sigma = vec![0.0; grid.bins];
    sigma[k] = 1.0 / dr;
    let f = solve_field(&sigma, &grid, Coupling::Attractive)?;
    let (phi, dphi) = f.eval(2.0);
    let shell = (phi + PI / 2.0).abs().max((dphi - PI / 4.0).abs());

    let bump = |r: f64| {
        let s = r - 2.0;
        if s.abs() < 1.0 {
            (1.0 - s * s).powi(4)
        } else {
            0.0
        }
    };
    let probes = [1.5, 2.0, 2.5, 4.0];
    let error = |bins: usize| -> Result<f64, Box<dyn Error>> {
        let g = RadialGrid::new(0.5, 4.5, bins)?;
        let sig: Vec<f64> = g.centers().into_iter().map(bump).collect();
        let f = solve_field(&sig, &g, Coupling::Attractive)?;
        Ok(probes
            .iter()
            .map(|&r| (f.phi(r) - direct_potential(&bump, 1.0, 3.0, r)).abs())
            .fold(0.0, f64::max))
    };
    let (e1, e2) = (error(200)?, error(400)?);
    let order = (e1 / e2).log2();
    Ok((
        shell < 1e-3 && (order - 2.0).abs() < 0.3,
        format!("shell error {shell:.2e} < 1e-3; direct vs enclosed-mass error {e1:.2e} -> {e2:.2e} on halving, order {order:.2}"),
    ))
}

fn linear_phase_mixing() -> Outcome {
    let s = spec();
    let probes = probe_radii(&s, 24);
    let times: Vec<f64> = (0..=40)
        .map(|i| 10f64.powf(2.0 * i as f64 / 40.0))
        .collect();
    let flow = KeplerFlow::new();
    let mut exponents = Vec::new();
    let mut detail = String::new();
    let mut ok = true;
    for p in [2.0, 4.0, 6.0] {
        let profile = BumpProfile::new(s, 1.0, p, 0.5)?;
        let series = probe_field_series(
            &profile,
            &flow,
            &times,
            &probes,
            &ProbeQuadrature::default(),
            4,
        )?;
        let sup: Vec<f64> = series
            .iter()
            .map(|row| row.iter().map(|v| v.dphi_dt.abs()).fold(0.0, f64::max))
            .collect();
        let fit = decay_fit(&times, &sup, (10.0, 100.0))?;
        exponents.push(fit.exponent);
        if p == 6.0 {
            let ratio = sup[40] / sup[0];
            ok &= ratio <= 1e-3 && fit.exponent <= -2.0 && !fit.floor_flag;
            detail.push_str(&format!(
                "p=6: sup(100)/sup(1) {ratio:.2e} <= 1e-3, exponent {:.3} <= -2, floor {}; ",
                fit.exponent, fit.floor_flag
            ));
        }
    }
    ok &= exponents[0] > exponents[1] && exponents[1] > exponents[2];
    detail.push_str(&format!(
        "exponents p=2,4,6: {:.3}, {:.3}, {:.3} (decreasing)",
        exponents[0], exponents[1], exponents[2]
    ));
    Ok((ok, detail))
}

fn read_columns(path: &Path) -> Result<BTreeMap<String, Vec<f64>>, Box<dyn Error>> {
    let mut r = csv::Reader::from_path(path)?;
    let names: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut cols: BTreeMap<String, Vec<f64>> =
        names.iter().map(|n| (n.clone(), Vec::new())).collect();
    for rec in r.records() {
        for (n, v) in names.iter().zip(rec?.iter()) {
            cols.get_mut(n).unwrap().push(v.parse().unwrap_or(f64::NAN));
        }
    }
    Ok(cols)
}

fn nonlinear_small_data() -> Outcome {
    let dir = tempfile::tempdir()?;
    let flags = Overrides {
        scenario: Some(Scenario::NonlinearRun),
        out: Some(dir.path().to_path_buf()),
        t_final: Some(300.0),
        set: [
            "markers.nh=256",
            "markers.nl=4",
            "markers.nq=100",
            "markers.layout=\"tensor\"",
            "markers.self_consistent=2",
            "profile.mass=1e-3",
            "time.dt=0.1",
            "time.cadence=0.5",
            "time.fit_start=10",
            "time.fit_end=100",
        ]
        .map(String::from)
        .to_vec(),
        ..Overrides::default()
    };
    let resolved = parse_config(None, &flags)?;
    let outcome = run(&resolved)?;
    let cols = read_columns(&dir.path().join("decay.csv"))?;
    let (t, sup) = (&cols["t"], &cols["sup_dphi_dt"]);
    let at = |time: f64| sup[t.iter().position(|&x| (x - time).abs() < 1e-9).unwrap()];
    let ratio = at(300.0) / at(5.0);
    let fit = decay_fit(t, sup, (10.0, 100.0))?;
    let violations: f64 = cols["violations"].iter().sum();
    let mass = &cols["mass"];
    let drift = mass.iter().map(|m| (m - mass[0]).abs()).fold(0.0, f64::max);
    let energy = cols["energy_error"].iter().copied().fold(0.0, f64::max);
    let ok = outcome.passed()
        && violations == 0.0
        && drift == 0.0
        && ratio <= 0.05
        && fit.exponent <= -1.5
        && energy < 1e-4;
    Ok((
        ok,
        format!(
            "violations {violations}, mass drift {drift:e}, sup(300)/sup(5) {ratio:.2e} <= 0.05, exponent over [10, 100] {:.3} <= -1.5, energy error {energy:.2e} < 1e-4",
            fit.exponent
        ),
    ))
}

fn cross_pipeline() -> Outcome {
    let s = spec();
    let p = BumpProfile::new(s, 1.0, 4.0, 0.5)?;
    let mut ens = init_ensemble(&p, (6, 3, 8), Layout::Tensor, Coupling::Attractive)?;
    let zero = FieldProfile::zero();
    let flow = KeplerFlow::new();
    let start: Vec<ActionAngleState> = ens
        .markers()
        .iter()
        .map(|m| {
            Ok(ActionAngleState::new(
                angle(&m.state, &zero)?,
                m.state.kepler_energy(),
                m.state.l,
            ))
        })
        .collect::<phasemix::Result<_>>()?;
    let slowest = start
        .iter()
        .map(|a| flow.omega(a.h, a.m))
        .collect::<phasemix::Result<Vec<_>>>()?;
    let slowest = slowest.into_iter().fold(f64::INFINITY, f64::min);
    let dt = 0.05;
    let steps = (10.0 * 2.0 * PI / slowest / dt).ceil() as usize;
    for _ in 0..steps {
        push(&mut ens, &zero, dt, PushMode::Linear, Scheme::KeplerSplit)?;
    }
    let t = steps as f64 * dt;
    let mut transport: f64 = 0.0;
    for (m, a) in ens.markers().iter().zip(&start) {
        let expected = a.advance(t, &flow)?;
        transport = transport.max(wrap_angle(angle(&m.state, &zero)? - expected.q).abs());
    }

    let ens = init_ensemble(&p, (40, 40, 64), Layout::Lattice, Coupling::Attractive)?;
    let grid = RadialGrid::for_support(&s, 512)?;
    let f = solve_field(&deposit_sigma(&ens, &grid)?, &grid, Coupling::Attractive)?;
    let probes = [1.0, 2.0, 3.5, 6.0];
    let series = probe_field_series(&p, &flow, &[0.0], &probes, &ProbeQuadrature::default(), 32)?;
    let mut field: f64 = 0.0;
    for (r, v) in probes.iter().zip(&series[0]) {
        field = field.max(((v.phi - f.phi(*r)) / f.phi(*r)).abs());
    }
    Ok((
        transport < 1e-5 && field < 1e-2,
        format!("angle transport error {transport:.2e} < 1e-5 over 10 periods; t=0 potential mismatch {field:.2e} < 1e-2"),
    ))
}

fn run_binary(args: &[&str], out: &Path) -> Result<(), Box<dyn Error>> {
    let status = Command::new(env!("CARGO_BIN_EXE_phasemix"))
        .args(args)
        .arg("--out")
        .arg(out)
        .stdout(std::process::Stdio::null())
        .status()?;
    if !status.success() {
        return Err(format!("phasemix {args:?} exited with {status}").into());
    }
    Ok(())
}

fn determinism() -> Outcome {
    let cases: [&[&str]; 2] = [
        &[
            "nonlinear-run",
            "--t-final",
            "30",
            "--workers",
            "2",
            "--set",
            "markers.nh=48",
            "--set",
            "markers.nq=32",
            "--set",
            "time.dt=0.1",
        ],
        &[
            "linear-decay",
            "--t-final",
            "30",
            "--workers",
            "2",
            "--set",
            "grid.probes=6",
        ],
    ];
    let mut compared = 0;
    for args in cases {
        let (a, b) = (tempfile::tempdir()?, tempfile::tempdir()?);
        run_binary(args, a.path())?;
        run_binary(args, b.path())?;
        let mut names: Vec<_> = std::fs::read_dir(a.path())?
            .filter_map(|e| e.ok().map(|e| e.file_name()))
            .filter(|n| n.to_string_lossy().ends_with(".csv"))
            .collect();
        names.sort();
        for n in names {
            if std::fs::read(a.path().join(&n))? != std::fs::read(b.path().join(&n))? {
                return Ok((
                    false,
                    format!(
                        "{} differs between runs of {}",
                        n.to_string_lossy(),
                        args[0]
                    ),
                ));
            }
            compared += 1;
        }
    }
    Ok((
        compared > 0,
        format!("{compared} CSV files bitwise identical across repeated runs"),
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "Kepler period", kepler_period_oracle),
        (2, "eccentricity identity", eccentricity_identity),
        (3, "angle-rate law", angle_rate_law),
        (4, "Jacobian", jacobian),
        (5, "period perturbation", period_perturbation),
        (6, "field solve", field_solve_oracle),
        (7, "linear phase mixing", linear_phase_mixing),
        (8, "nonlinear small data", nonlinear_small_data),
        (9, "cross-pipeline consistency", cross_pipeline),
        (10, "determinism", determinism),
    ];
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = 0;
    for (n, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        let mark = if passed { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2} {mark} {name}: {detail} [{:.1}s]",
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!passed);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
