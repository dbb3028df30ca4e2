#![allow(dead_code)]

use reeblab_core::{init, integrate, Ambient, DiscreteLoop, FlowConfig, Integrator, Model, ScalingRule, Trajectory};

/// Seeded base point on `Σ`.
pub fn base_point(model: Model, seed: u64) -> Ambient {
    *model.random_point(&mut init::rng(seed ^ 0x5eed)).coords()
}

/// Band-limited perturbation of the constant loop `r ≡ 0` at a seeded base point.
pub fn perturbed_rest(model: Model, n: usize, modes: usize, amplitude: f64, seed: u64) -> DiscreteLoop {
    let base = init::constant_loop(model, n, 0.0, &base_point(model, seed)).unwrap();
    init::perturbed(&base, modes, amplitude, seed).unwrap()
}

pub fn window(rule: ScalingRule, ds: f64, steps: usize, integrator: Integrator) -> FlowConfig {
    let mut cfg = FlowConfig::new(rule);
    cfg.ds = ds;
    cfg.max_steps = steps;
    cfg.grad_tol = 0.0;
    cfg.integrator = integrator;
    cfg
}

/// Delay-flow window of length `s_max` started at the balanced perturbation.
pub fn delay_line(model: Model, n: usize, ds: f64, s_max: f64, seed: u64, integrator: Integrator) -> Trajectory {
    let v = init::balance_tau(&perturbed_rest(model, n, 2, 0.05, seed));
    let steps = (s_max / ds).round() as usize;
    integrate(&v, &window(ScalingRule::Theta(1.0), ds, steps, integrator)).unwrap()
}

/// `A₃` flow window on the constraint surface.
pub fn area_line(model: Model, n: usize, ds: f64, s_max: f64, seed: u64, integrator: Integrator) -> Trajectory {
    let v = perturbed_rest(model, n, 2, 0.05, seed).project_pi();
    let steps = (s_max / ds).round() as usize;
    integrate(&v, &window(ScalingRule::ConstrainedArea, ds, steps, integrator)).unwrap()
}

/// Rabinowitz flow window, multiplier started at `tau0`.
pub fn rabinowitz_line(model: Model, n: usize, ds: f64, s_max: f64, seed: u64, tau0: f64, integrator: Integrator) -> Trajectory {
    let v = perturbed_rest(model, n, 2, 0.05, seed);
    let steps = (s_max / ds).round() as usize;
    integrate(&v, &window(ScalingRule::RabinowitzMultiplier(tau0), ds, steps, integrator)).unwrap()
}
