mod common;

use common::{area_line, delay_line, perturbed_rest, rabinowitz_line, window};
use reeblab_core::correspondence::{
    gradvd_residual, inverse_d, lift_r, lift_shift, pushforward_pi, roundtrip_check, shift_ode_residual,
    trajectory_distance, ScalarSeries,
};
use reeblab_core::{energy, init, integrate, Error, Integrator, Model, ScalingRule, Trajectory};

fn shifted(traj: &Trajectory, rho: impl Fn(f64) -> f64) -> Trajectory {
    let loops = traj.s_values.iter().zip(&traj.loops).map(|(s, l)| l.shift_r(rho(*s))).collect();
    Trajectory::from_slices(traj.config.clone(), traj.s_values.clone(), loops, None).unwrap()
}

#[test]
fn decaying_exponential_shift_is_still_a_flow_line() {
    let traj = delay_line(Model::Sphere3, 128, 1e-3, 0.05, 9, Integrator::Rk4);
    let base = gradvd_residual(&traj).unwrap();
    assert!(base < 1e-3);
    for rho0 in [0.01, 0.1, 1.0] {
        let moved = gradvd_residual(&shifted(&traj, |s| rho0 * (-s).exp())).unwrap();
        assert!((moved - base).abs() < 1e-5, "{rho0}: {moved} vs {base}");
    }
}

#[test]
fn growing_exponential_shift_breaks_the_flow_equation() {
    let traj = delay_line(Model::Sphere3, 128, 1e-3, 0.05, 9, Integrator::Rk4);
    let mut last = 0.0;
    for rho0 in [0.01, 0.1, 1.0] {
        let res = gradvd_residual(&shifted(&traj, |s| rho0 * s.exp())).unwrap();
        assert!(res > 1e-3, "{rho0}: {res}");
        assert!(res > last);
        last = res;
    }
}

#[test]
fn inverse_d_is_independent_of_window_size() {
    let bump = |s: f64| (1.0 - s) * (-s * s).exp();
    let small = inverse_d(&ScalarSeries::from_fn(-10.0, 1e-3, 20001, bump).unwrap()).unwrap();
    let large = inverse_d(&ScalarSeries::from_fn(-15.0, 1e-3, 30001, bump).unwrap()).unwrap();
    let offset = 5000;
    for i in 0..small.sigma.len() {
        let (a, b) = (small.sigma.values()[i], large.sigma.values()[i + offset]);
        assert!((a - b).abs() <= 1e-8);
    }
}

#[test]
fn inverse_d_is_linear() {
    let f = ScalarSeries::from_fn(-6.0, 1e-2, 1201, |s| (-s * s).exp()).unwrap();
    let g = ScalarSeries::from_fn(-6.0, 1e-2, 1201, |s| s * (-s * s).exp()).unwrap();
    let fg = ScalarSeries::from_fn(-6.0, 1e-2, 1201, |s| (2.0 - 3.0 * s) * (-s * s).exp()).unwrap();
    let (a, b, c) = (inverse_d(&f).unwrap(), inverse_d(&g).unwrap(), inverse_d(&fg).unwrap());
    for i in 0..f.len() {
        let lhs = 2.0 * a.sigma.values()[i] - 3.0 * b.sigma.values()[i];
        assert!((lhs - c.sigma.values()[i]).abs() < 1e-14);
    }
}

#[test]
fn lifted_area_line_solves_the_delay_flow() {
    let traj = area_line(Model::Sphere3, 128, 1e-3, 0.05, 4, Integrator::Rk4);
    let rho = lift_shift(&traj).unwrap();
    assert!(shift_ode_residual(&rho, &traj) <= 1e-4);
    let lifted = lift_r(&traj).unwrap();
    assert!(gradvd_residual(&lifted).unwrap() <= 1e-3);
    assert!(trajectory_distance(&pushforward_pi(&lifted).unwrap(), &traj).unwrap() < 1e-12);
}

#[test]
fn stationary_area_line_lifts_to_its_period() {
    let orbit = init::reeb_orbit(Model::Sphere3, 64, 1, &common::base_point(Model::Sphere3, 1)).unwrap();
    let on_constraint = orbit.project_pi();
    let s = (0..5).map(|i| i as f64 * 0.01).collect();
    let cfg = window(ScalingRule::ConstrainedArea, 0.01, 4, Integrator::Euler);
    let traj = Trajectory::from_slices(cfg, s, vec![on_constraint.clone(); 5], None).unwrap();
    let a_star = traj.actions[0];
    let rho = lift_shift(&traj).unwrap();
    assert!(rho.values().iter().all(|p| (p + a_star).abs() < 1e-12));
    // the lifted loop sits at r ≡ period of the discrete orbit
    let period = 64.0 * (2.0 * std::f64::consts::PI / 64.0).sin();
    assert!(lift_r(&traj).unwrap().loops[0].r().all(|r| (r - period).abs() < 1e-9));
    assert!(roundtrip_check(&traj).unwrap() < 1e-10);
}

#[test]
fn unbalanced_start_spoils_the_left_inverse() {
    // Without balancing, τ has a nonzero slope at the left end of the window,
    // which the lift cannot reproduce.
    let v = perturbed_rest(Model::Sphere3, 128, 2, 0.05, 6).shift_r(0.2);
    let traj = integrate(&v, &window(ScalingRule::Theta(1.0), 1e-3, 50, Integrator::Rk4)).unwrap();
    let balanced = delay_line(Model::Sphere3, 128, 1e-3, 0.05, 6, Integrator::Rk4);
    assert!(roundtrip_check(&traj).unwrap() > 100.0 * roundtrip_check(&balanced).unwrap());
}

#[test]
fn forward_flow_of_t_dependent_data_is_ill_posed() {
    let v = init::balance_tau(&perturbed_rest(Model::Sphere3, 64, 2, 0.05, 1));
    let mut cfg = window(ScalingRule::Theta(1.0), 1e-3, 3000, Integrator::Euler);
    cfg.record_every = 100;
    match integrate(&v, &cfg) {
        Err(Error::Divergence { partial, .. }) => {
            let g = &partial.grad_norms;
            assert!(g[g.len() - 1] > 100.0 * g[0]);
            assert!(partial.max_action_increase() <= 1e-10);
        }
        other => panic!("expected divergence, got {:?}", other.map(|t| t.len())),
    }
}

#[test]
fn constraint_drift_without_reprojection_is_second_order() {
    let v = perturbed_rest(Model::Sphere3, 128, 2, 0.05, 3).project_pi();
    let drift = |ds: f64| {
        let mut cfg = window(ScalingRule::ConstrainedArea, ds, (0.04 / ds).round() as usize, Integrator::Euler);
        cfg.reproject = false;
        integrate(&v, &cfg).unwrap().constraint_drift()
    };
    let ratio = drift(2e-3) / drift(1e-3);
    assert!((3.0..5.0).contains(&ratio), "{ratio}");
}

#[test]
fn rabinowitz_multiplier_follows_the_mass() {
    for integrator in [Integrator::Euler, Integrator::Rk4] {
        let traj = rabinowitz_line(Model::Sphere3, 128, 1e-3, 0.05, 2, -0.4, integrator);
        assert!(traj.multiplier_law_residual().unwrap() <= 1e-6);
        let e = energy(&traj).unwrap();
        assert!((e - (traj.actions[0] - traj.actions[traj.len() - 1])).abs() <= 1e-3 * e.max(1.0));
    }
}

#[test]
fn correspondence_rejects_wrong_inputs() {
    let rab = rabinowitz_line(Model::Sphere3, 64, 1e-3, 0.005, 2, 0.0, Integrator::Euler);
    assert!(matches!(pushforward_pi(&rab), Err(Error::WrongRule { .. })));
    assert!(matches!(roundtrip_check(&rab), Err(Error::WrongRule { .. })));
    let delay = delay_line(Model::Sphere3, 64, 1e-3, 0.005, 2, Integrator::Euler);
    assert!(matches!(lift_r(&delay), Err(Error::WrongRule { .. })));
    let mut off = area_line(Model::Sphere3, 64, 1e-3, 0.005, 2, Integrator::Euler);
    off.loops[1] = off.loops[1].shift_r(0.1);
    assert!(matches!(lift_r(&off), Err(Error::OffConstraint { .. })));
}
