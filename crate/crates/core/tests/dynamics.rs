use proptest::prelude::*;
use vortexlab::background::{builtin_potential, AnalyticPotential, BuiltinKind};
use vortexlab::ode_dynamics::{dissipation_check, hamiltonian_drift, integrate, DynamicsKind, IntegrateOptions, Termination};
use vortexlab::vortex_config::{Domain, VortexConfig};
use vortexlab::Vec2;

fn cfg(items: &[(f64, f64, i32)]) -> VortexConfig {
    VortexConfig::from_tuples(items).unwrap()
}

fn tight() -> IntegrateOptions {
    IntegrateOptions { rtol: 1e-11, atol: 1e-13, ..Default::default() }
}

#[test]
fn free_dipole_translates_rigidly() {
    let l = 0.6;
    let c = cfg(&[(0.2, l / 2.0, 1), (0.2, -l / 2.0, -1)]);
    let traj = integrate(&c, &Domain::Plane, &AnalyticPotential::zero(), DynamicsKind::Schrodinger, 1.0, &tight()).unwrap();
    let shift = 2.0 / l;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        assert!((s.positions[0] - Vec2::new(0.2 + shift * t, l / 2.0)).norm() < 1e-8);
        assert!((s.positions[1] - Vec2::new(0.2 + shift * t, -l / 2.0)).norm() < 1e-8);
    }
}

#[test]
fn same_sign_pair_rotates_about_its_centre() {
    // Each vortex moves at 2/l on the circle of radius l/2: omega = 4/l^2.
    let l = 1.0;
    let c = cfg(&[(0.5, 0.0, 1), (-0.5, 0.0, 1)]);
    let traj = integrate(&c, &Domain::Plane, &AnalyticPotential::zero(), DynamicsKind::Schrodinger, 2.0, &tight()).unwrap();
    let omega = 4.0 / (l * l);
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let sum = s.positions[0] + s.positions[1];
        assert!(sum.norm() < 1e-9);
        assert!((s.positions[0].dist(s.positions[1]) - l).abs() < 1e-8);
        let angle = s.positions[0].y.atan2(s.positions[0].x);
        let want = (omega * t).rem_euclid(2.0 * std::f64::consts::PI);
        let diff = (angle.rem_euclid(2.0 * std::f64::consts::PI) - want).abs();
        assert!(diff.min(2.0 * std::f64::consts::PI - diff) < 1e-7, "t {t}: {angle} vs {want}");
    }
}

#[test]
fn dipole_sum_is_linear_in_time() {
    let c = cfg(&[(0.1, 0.3, 1), (-0.4, -0.2, -1)]);
    let traj = integrate(&c, &Domain::Plane, &AnalyticPotential::zero(), DynamicsKind::Schrodinger, 1.0, &tight()).unwrap();
    let s0 = c.positions[0] + c.positions[1];
    let v = traj.velocities[0][0] + traj.velocities[0][1];
    let l0 = c.positions[0].dist(c.positions[1]);
    for (t, s) in traj.times.iter().zip(&traj.states) {
        assert!((s.positions[0] + s.positions[1] - (s0 + v * *t)).norm() < 1e-8);
        assert!((s.positions[0].dist(s.positions[1]) - l0).abs() < 1e-8);
    }
}

#[test]
fn single_vortex_follows_level_sets() {
    let kinds = [BuiltinKind::Gaussian, BuiltinKind::Step, BuiltinKind::DoubleGaussian, BuiltinKind::Lattice];
    for kind in kinds {
        let q0 = builtin_potential(kind, &[]).unwrap();
        let c = cfg(&[(0.7, 0.4, 1)]);
        let traj = integrate(&c, &Domain::Plane, &q0, DynamicsKind::Schrodinger, 5.0, &IntegrateOptions::default()).unwrap();
        assert_eq!(traj.termination, Termination::ReachedT);
        let v0 = q0.value(c.positions[0]);
        for s in &traj.states {
            assert!((q0.value(s.positions[0]) - v0).abs() <= 1e-8, "{kind:?}");
        }
    }
}

#[test]
fn reversing_degrees_retraces_the_path() {
    let q0 = builtin_potential(BuiltinKind::Gaussian, &[]).unwrap();
    let c = cfg(&[(0.8, 0.1, 1), (-0.3, 0.6, -1), (0.2, -0.9, 1)]);
    let fwd = integrate(&c, &Domain::Plane, &q0, DynamicsKind::Schrodinger, 1.0, &tight()).unwrap();
    let back = integrate(&fwd.final_state().reversed(), &Domain::Plane, &q0, DynamicsKind::Schrodinger, 1.0, &tight()).unwrap();
    for (a, b) in back.final_state().positions.iter().zip(&c.positions) {
        assert!(a.dist(*b) < 1e-6);
    }
}

#[test]
fn collision_is_reported() {
    // Gradient flow pulls a dipole together.
    let c = cfg(&[(0.0, 0.2, 1), (0.0, -0.2, -1)]);
    let traj = integrate(&c, &Domain::Plane, &AnalyticPotential::zero(), DynamicsKind::GradientFlow, 10.0, &IntegrateOptions::default()).unwrap();
    assert!(matches!(traj.termination, Termination::Collision { .. }));
    assert!(dissipation_check(&traj).monotone);
}

fn separated(n: usize) -> impl Strategy<Value = VortexConfig> {
    prop::collection::vec((-1.5f64..1.5, -1.5f64..1.5, prop::bool::ANY), n).prop_filter_map("too close", |v| {
        for (i, a) in v.iter().enumerate() {
            for b in &v[i + 1..] {
                if Vec2::new(a.0, a.1).dist(Vec2::new(b.0, b.1)) < 0.4 {
                    return None;
                }
            }
        }
        VortexConfig::from_tuples(&v.iter().map(|&(x, y, s)| (x, y, if s { 1 } else { -1 })).collect::<Vec<_>>()).ok()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn schrodinger_conserves_h0(c in separated(4)) {
        let q0 = builtin_potential(BuiltinKind::Gaussian, &[]).unwrap();
        let traj = integrate(&c, &Domain::Plane, &q0, DynamicsKind::Schrodinger, 10.0, &tight()).unwrap();
        // Near-collisions need tighter tolerances than this bound assumes.
        prop_assume!(traj.r_alpha.iter().all(|&r| r >= 0.05));
        let h = traj.h0[0];
        prop_assert!(hamiltonian_drift(&traj) <= 1e-7 * h.abs().max(1.0), "drift {}", hamiltonian_drift(&traj));
    }

    #[test]
    fn gradient_flow_dissipates_h0(c in separated(3)) {
        let q0 = builtin_potential(BuiltinKind::DoubleGaussian, &[]).unwrap();
        let traj = integrate(&c, &Domain::Plane, &q0, DynamicsKind::GradientFlow, 2.0, &IntegrateOptions::default()).unwrap();
        let v = dissipation_check(&traj);
        prop_assert!(v.monotone, "uphill {}", v.worst_uphill);
    }
}
