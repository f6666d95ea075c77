use std::f64::consts::PI;

use phasemix::effpot::{angle, SupportSpec};
use phasemix::field::FieldProfile;
use phasemix::kepler::wrap_angle;
use phasemix::linflow::{
    semigroup_apply, ActionAngleState, AngleFourierTable, FrequencyMap, FrozenFlow, KeplerFlow,
};
use phasemix::profile::BumpProfile;
use phasemix::vlasov::{init_ensemble, push, Coupling, Layout, PushMode, Scheme};
use proptest::prelude::*;

fn table() -> AngleFourierTable {
    let spec = SupportSpec::new(0.05, 0.1, 0.5, 1.0).unwrap();
    let p = BumpProfile::new(spec, 1.0, 4.0, 0.5).unwrap();
    AngleFourierTable::tensor(&p, 5, 4, 3).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn semigroup_composes(t1 in 0.0f64..50.0, t2 in 0.0f64..50.0) {
        let flow = KeplerFlow::new();
        let t = table();
        let once = semigroup_apply(&t, t1 + t2, &flow).unwrap();
        let twice = semigroup_apply(&semigroup_apply(&t, t1, &flow).unwrap(), t2, &flow).unwrap();
        for i in 0..t.nodes().len() {
            for k in -3..=3 {
                prop_assert!((once.coefficient(i, k) - twice.coefficient(i, k)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn semigroup_preserves_moduli(t in 0.0f64..200.0) {
        let t0 = table();
        let s = semigroup_apply(&t0, t, &KeplerFlow::new()).unwrap();
        for i in 0..t0.nodes().len() {
            for k in 0..=3 {
                let (a, b) = (s.coefficient(i, k).norm(), t0.coefficient(i, k).norm());
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON * b);
            }
            prop_assert_eq!(s.coefficient(i, 0), t0.coefficient(i, 0));
        }
    }
}

#[test]
fn marker_push_follows_semigroup_transport() {
    let spec = SupportSpec::new(0.05, 0.1, 0.5, 1.0).unwrap();
    let p = BumpProfile::new(spec, 1.0, 4.0, 0.5).unwrap();
    let mut ens = init_ensemble(&p, (4, 3, 5), Layout::Lattice, Coupling::Attractive).unwrap();
    let zero = FieldProfile::zero();
    let flow = KeplerFlow::new();
    let start: Vec<ActionAngleState> = ens
        .markers()
        .iter()
        .map(|m| {
            ActionAngleState::new(
                angle(&m.state, &zero).unwrap(),
                m.state.kepler_energy(),
                m.state.l,
            )
        })
        .collect();
    // ten periods of the slowest orbit
    let slowest = start
        .iter()
        .map(|s| flow.omega(s.h, s.m).unwrap())
        .fold(f64::INFINITY, f64::min);
    let dt = 0.05;
    let steps = (10.0 * 2.0 * PI / slowest / dt).ceil() as usize;
    for _ in 0..steps {
        push(&mut ens, &zero, dt, PushMode::Linear, Scheme::KeplerSplit).unwrap();
    }
    let t = steps as f64 * dt;
    for (m, s) in ens.markers().iter().zip(&start) {
        let expected = s.advance(t, &flow).unwrap();
        let q = angle(&m.state, &zero).unwrap();
        assert!(wrap_angle(q - expected.q).abs() < 1e-5);
    }
}

#[test]
fn frozen_flow_in_tiny_field_matches_kepler() {
    let tiny = FieldProfile::bump(1e-12, 1.0, 3.0, 0.2, 25.0, 801).unwrap();
    let frozen = FrozenFlow::new(tiny);
    let kepler = KeplerFlow::new();
    for &(h, m) in &[(-0.3, 0.8), (-0.6, 0.6)] {
        let a = frozen.omega(h, m).unwrap();
        let b = kepler.omega(h, m).unwrap();
        assert!((a - b).abs() < 1e-9 * b);
    }
}
