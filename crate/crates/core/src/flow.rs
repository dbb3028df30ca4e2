//! Explicit integration of the gradient and delay flows `∂_s v = −∇A(v)`.
//!
//! The flows are Cauchy–Riemann type equations: read as initial value
//! problems in `s`, half of the Fourier modes in `t` grow like `e^{2π|k|s}`
//! (at most `e^{Ns}` on an `N`-point grid). Trajectories are therefore finite
//! windows; anything past `s ≈ 25/N` amplifies round-off visibly.

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::functionals::{self, grad, scaling_tau, ScalingRule};
use crate::loops::{DiscreteLoop, TangentField};

/// Allowed action increase per accepted step.
pub const MONOTONE_SLACK: f64 = 1e-10;
/// Consecutive step halvings before a flow is declared divergent.
pub const MAX_HALVINGS: u32 = 20;
/// Steps satisfy `ds·max(1, sup|τ|) ≤ STEP_SCALE_LIMIT`.
pub const STEP_SCALE_LIMIT: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Integrator {
    Euler,
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `∂_s v = −∇A`, action non-increasing.
    Descent,
    /// `∂_s v = +∇A`; reverse the trajectory to get a descent window ending at `v₀`.
    Ascent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowConfig {
    pub rule: ScalingRule,
    pub ds: f64,
    pub max_steps: usize,
    /// Stop once the sup-norm of the gradient drops to this (`0` never stops early).
    pub grad_tol: f64,
    pub integrator: Integrator,
    pub record_every: usize,
    /// Apply `Π` after every step of an `A₃` flow.
    pub reproject: bool,
    pub direction: Direction,
}

impl FlowConfig {
    pub fn new(rule: ScalingRule) -> Self {
        FlowConfig {
            rule,
            ds: 1e-3,
            max_steps: 1000,
            grad_tol: 1e-8,
            integrator: Integrator::Euler,
            record_every: 1,
            reproject: true,
            direction: Direction::Descent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rule.validate()?;
        if !(self.ds > 0.0) || !self.ds.is_finite() {
            return Err(Error::Domain { what: "ds", value: self.ds });
        }
        if self.record_every == 0 {
            return Err(Error::Domain { what: "record_every", value: 0.0 });
        }
        if !(self.grad_tol >= 0.0) {
            return Err(Error::Domain { what: "grad_tol", value: self.grad_tol });
        }
        Ok(())
    }

    fn sign(&self) -> f64 {
        match self.direction {
            Direction::Descent => -1.0,
            Direction::Ascent => 1.0,
        }
    }
}

/// A computed window of a flow line.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub config: FlowConfig,
    pub s_values: Vec<f64>,
    pub loops: Vec<DiscreteLoop>,
    /// `τ(s)` for Rabinowitz flows.
    pub multiplier: Option<Vec<f64>>,
    pub actions: Vec<f64>,
    /// Sup-norm of the gradient at each slice.
    pub grad_norms: Vec<f64>,
    /// Cumulative `∫‖∂_s v‖²_g ds` up to each slice.
    pub dissipation: Vec<f64>,
    pub converged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.loops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loops.is_empty()
    }

    pub fn rule(&self) -> ScalingRule {
        self.config.rule
    }

    /// Rule in force at slice `i` (carries the multiplier for Rabinowitz flows).
    pub fn rule_at(&self, i: usize) -> ScalingRule {
        match (&self.multiplier, self.config.rule) {
            (Some(m), rule) => rule.with_multiplier(m[i]),
            (None, rule) => rule,
        }
    }

    /// Common spacing of `s_values`, or [`Error::NonUniformGrid`].
    pub fn spacing(&self) -> Result<f64> {
        uniform_spacing(&self.s_values)
    }

    /// Rebuilds a trajectory from slices, recomputing actions, gradient norms
    /// and the dissipation (trapezoid rule on `‖∇A‖²_g`).
    pub fn from_slices(
        config: FlowConfig,
        s_values: Vec<f64>,
        loops: Vec<DiscreteLoop>,
        multiplier: Option<Vec<f64>>,
    ) -> Result<Self> {
        if s_values.len() != loops.len() || multiplier.as_ref().is_some_and(|m| m.len() != loops.len()) {
            return Err(Error::InvalidLoop("slice count mismatch".into()));
        }
        let mut traj = Trajectory {
            config,
            s_values,
            loops,
            multiplier,
            actions: Vec::new(),
            grad_norms: Vec::new(),
            dissipation: Vec::new(),
            converged: false,
        };
        let mut cumulative = 0.0;
        let mut prev_gsq = None;
        for i in 0..traj.len() {
            let tau = traj.multiplier.as_ref().map(|m| m[i]);
            let e = evaluate(&traj.loops[i], tau, &traj.config)?;
            if let Some(p) = prev_gsq {
                cumulative += 0.5 * (p + e.gsq) * (traj.s_values[i] - traj.s_values[i - 1]);
            }
            prev_gsq = Some(e.gsq);
            traj.actions.push(e.action);
            traj.grad_norms.push(e.sup);
            traj.dissipation.push(cumulative);
        }
        Ok(traj)
    }

    /// Reverses slice order and maps `s ↦ −s`; turns an ascent run into a
    /// descent window ending at the initial loop.
    pub fn reversed(&self) -> Trajectory {
        let total = self.dissipation.last().copied().unwrap_or(0.0);
        let mut config = self.config.clone();
        config.direction = match config.direction {
            Direction::Descent => Direction::Ascent,
            Direction::Ascent => Direction::Descent,
        };
        Trajectory {
            config,
            s_values: self.s_values.iter().rev().map(|s| -s).collect(),
            loops: self.loops.iter().rev().cloned().collect(),
            multiplier: self.multiplier.as_ref().map(|m| m.iter().rev().copied().collect()),
            actions: self.actions.iter().rev().copied().collect(),
            grad_norms: self.grad_norms.iter().rev().copied().collect(),
            dissipation: self.dissipation.iter().rev().map(|d| total - d).collect(),
            converged: self.converged,
        }
    }

    /// Largest per-slice increase of the constraint residual `|∫eʳ − 1|`.
    pub fn constraint_drift(&self) -> f64 {
        self.loops
            .windows(2)
            .map(|w| w[1].constraint_residual() - w[0].constraint_residual())
            .fold(0.0, f64::max)
    }

    /// Largest constraint residual over all slices.
    pub fn max_constraint_residual(&self) -> f64 {
        self.loops.iter().map(|l| l.constraint_residual()).fold(0.0, f64::max)
    }

    /// Largest action increase between consecutive slices (descent orientation).
    pub fn max_action_increase(&self) -> f64 {
        let sign = -self.config.sign();
        self.actions
            .windows(2)
            .map(|w| sign * (w[1] - w[0]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max |Δτ/Δs − (1 − ∫eʳ)|` over consecutive slices of a Rabinowitz flow,
    /// with the right-hand side averaged the way the integrator does it:
    /// left endpoint for Euler, trapezoid for RK4.
    pub fn multiplier_law_residual(&self) -> Result<f64> {
        let m = self.multiplier.as_ref().ok_or(Error::WrongRule {
            op: "multiplier_law_residual",
            expected: "a Rabinowitz multiplier trajectory",
        })?;
        let sign = -self.config.sign();
        let rhs: Vec<f64> = self.loops.iter().map(|l| sign * (1.0 - l.mean_exp_r())).collect();
        let mut worst: f64 = 0.0;
        for i in 1..self.len() {
            let ds = self.s_values[i] - self.s_values[i - 1];
            let expected = match self.config.integrator {
                Integrator::Euler => rhs[i - 1],
                Integrator::Rk4 => 0.5 * (rhs[i - 1] + rhs[i]),
            };
            worst = worst.max(((m[i] - m[i - 1]) / ds - expected).abs());
        }
        Ok(worst)
    }
}

pub(crate) fn uniform_spacing(s: &[f64]) -> Result<f64> {
    if s.len() < 2 {
        return Err(Error::TooShort { op: "spacing", needed: 2, got: s.len() });
    }
    let h = (s[s.len() - 1] - s[0]) / (s.len() - 1) as f64;
    let scale = s.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    for w in s.windows(2) {
        if !((w[1] - w[0]) - h).abs().le(&(1e-12 * scale)) || !(h > 0.0) {
            return Err(Error::NonUniformGrid);
        }
    }
    Ok(h)
}

/// Everything the integrator needs at one state.
struct Eval {
    /// `∂_s v`
    velocity: TangentField,
    /// `∂_s τ` (Rabinowitz only)
    dtau: f64,
    action: f64,
    /// sup-norm of the gradient, including the multiplier component
    sup: f64,
    /// `‖∇A‖²_g`, including the multiplier component
    gsq: f64,
    tau_sup: f64,
}

fn evaluate(v: &DiscreteLoop, tau: Option<f64>, config: &FlowConfig) -> Result<Eval> {
    let rule = match tau {
        Some(t) => config.rule.with_multiplier(t),
        None => config.rule,
    };
    // A₃ is extended off L̄ by A₃∘Π; Π shifts r by a constant, which leaves
    // the gradient field unchanged.
    let projected;
    let base = if rule == ScalingRule::ConstrainedArea {
        projected = v.project_pi();
        &projected
    } else {
        v
    };
    let g = grad(base, &rule)?;
    let action = functionals::action(base, &rule)?;
    let tau_sup = scaling_tau(base, &rule)?.iter().fold(0.0f64, |a, t| a.max(t.abs()));
    let mut gsq = base.l2_inner_unchecked(&g, &g);
    let mut sup = g.sup_norm();
    let sign = config.sign();
    let mut dtau = 0.0;
    if let ScalingRule::RabinowitzMultiplier(_) = rule {
        let c = base.mean_exp_r() - 1.0;
        gsq += c * c;
        sup = sup.max(c.abs());
        dtau = sign * c;
    }
    if !(action.is_finite() && gsq.is_finite()) {
        return Err(Error::BlowUp);
    }
    Ok(Eval {
        velocity: g.scaled(sign),
        dtau,
        action,
        sup,
        gsq,
        tau_sup,
    })
}

fn advance(v: &DiscreteLoop, tau: Option<f64>, velocity: &TangentField, dtau: f64, h: f64) -> Result<(DiscreteLoop, Option<f64>)> {
    Ok((v.advance(velocity, h)?, tau.map(|t| t + h * dtau)))
}

fn try_step(v: &DiscreteLoop, tau: Option<f64>, e0: &Eval, ds: f64, config: &FlowConfig) -> Result<(DiscreteLoop, Option<f64>, Eval)> {
    let (mut next, next_tau) = match config.integrator {
        Integrator::Euler => advance(v, tau, &e0.velocity, e0.dtau, ds)?,
        Integrator::Rk4 => {
            let (va, ta) = advance(v, tau, &e0.velocity, e0.dtau, 0.5 * ds)?;
            let k2 = evaluate(&va, ta, config)?;
            let (vb, tb) = advance(v, tau, &k2.velocity, k2.dtau, 0.5 * ds)?;
            let k3 = evaluate(&vb, tb, config)?;
            let (vc, tc) = advance(v, tau, &k3.velocity, k3.dtau, ds)?;
            let k4 = evaluate(&vc, tc, config)?;
            let velocity = e0
                .velocity
                .add_scaled(&k2.velocity, 2.0)
                .add_scaled(&k3.velocity, 2.0)
                .add_scaled(&k4.velocity, 1.0)
                .scaled(1.0 / 6.0);
            let dtau = (e0.dtau + 2.0 * k2.dtau + 2.0 * k3.dtau + k4.dtau) / 6.0;
            advance(v, tau, &velocity, dtau, ds)?
        }
    };
    if config.rule == ScalingRule::ConstrainedArea && config.reproject {
        next = next.project_pi();
    }
    let e1 = evaluate(&next, next_tau, config)?;
    Ok((next, next_tau, e1))
}

/// One explicit Euler step `v ← retract(v − ds·∇A(v))`, followed by `Π` for `A₃`.
pub fn flow_step(v: &DiscreteLoop, rule: &ScalingRule, ds: f64) -> Result<DiscreteLoop> {
    if ds == 0.0 {
        return Ok(v.clone());
    }
    let g = grad(v, rule)?;
    let next = v.advance(&g, -ds)?;
    Ok(match rule {
        ScalingRule::ConstrainedArea => next.project_pi(),
        _ => next,
    })
}

/// Integrates the flow selected by `config.rule` from `v0`.
///
/// Stops after `max_steps` steps or once the gradient sup-norm is at most
/// `grad_tol`; `grad_tol = 0` always runs the full window. A step that raises the action (or produces non-finite values)
/// is retried at half the step size; after [`MAX_HALVINGS`] consecutive
/// halvings the partial trajectory is returned inside [`Error::Divergence`].
pub fn integrate(v0: &DiscreteLoop, config: &FlowConfig) -> Result<Trajectory> {
    config.validate()?;
    if config.rule == ScalingRule::ConstrainedArea {
        let residual = v0.constraint_residual();
        if residual > 1e-8 {
            return Err(Error::OffConstraint { residual });
        }
    }
    let mut tau = match config.rule {
        ScalingRule::RabinowitzMultiplier(t0) => Some(t0),
        _ => None,
    };
    let mut v = v0.clone();
    let mut e = evaluate(&v, tau, config)?;
    let mut traj = Trajectory {
        config: config.clone(),
        s_values: alloc::vec![0.0],
        loops: alloc::vec![v.clone()],
        multiplier: tau.map(|t| alloc::vec![t]),
        actions: alloc::vec![e.action],
        grad_norms: alloc::vec![e.sup],
        dissipation: alloc::vec![0.0],
        converged: false,
    };
    let sign = config.sign();
    let mut s = 0.0;
    let mut dissipated = 0.0;
    let mut recorded_last = true;

    for step in 1..=config.max_steps {
        if config.grad_tol > 0.0 && e.sup <= config.grad_tol {
            traj.converged = true;
            break;
        }
        let mut ds = config.ds.min(STEP_SCALE_LIMIT / e.tau_sup.max(1.0));
        let mut halvings = 0;
        let (next, next_tau, e1) = loop {
            match try_step(&v, tau, &e, ds, config) {
                Ok((n, t, e1)) if sign * (e1.action - e.action) >= -MONOTONE_SLACK => break (n, t, e1),
                Ok(_) | Err(Error::BlowUp) => {
                    halvings += 1;
                    if halvings > MAX_HALVINGS {
                        if !recorded_last {
                            push_slice(&mut traj, s, &v, tau, &e, dissipated);
                        }
                        return Err(Error::Divergence {
                            s,
                            halvings: MAX_HALVINGS,
                            partial: Box::new(traj),
                        });
                    }
                    log::debug!("step {step}: halving ds to {:e}", ds * 0.5);
                    ds *= 0.5;
                }
                Err(other) => return Err(other),
            }
        };
        dissipated += match config.integrator {
            Integrator::Euler => ds * e.gsq,
            Integrator::Rk4 => 0.5 * ds * (e.gsq + e1.gsq),
        };
        s += ds;
        v = next;
        tau = next_tau;
        e = e1;
        recorded_last = step % config.record_every == 0;
        if recorded_last {
            push_slice(&mut traj, s, &v, tau, &e, dissipated);
        }
    }
    if e.sup <= config.grad_tol {
        traj.converged = true;
    }
    if !recorded_last {
        push_slice(&mut traj, s, &v, tau, &e, dissipated);
    }
    Ok(traj)
}

fn push_slice(traj: &mut Trajectory, s: f64, v: &DiscreteLoop, tau: Option<f64>, e: &Eval, dissipated: f64) {
    traj.s_values.push(s);
    traj.loops.push(v.clone());
    if let (Some(m), Some(t)) = (traj.multiplier.as_mut(), tau) {
        m.push(t);
    }
    traj.actions.push(e.action);
    traj.grad_norms.push(e.sup);
    traj.dissipation.push(dissipated);
}

/// `E = ∫‖∂_s v‖² ds` over the window.
pub fn energy(traj: &Trajectory) -> Result<f64> {
    if traj.len() < 2 {
        return Err(Error::TooShort { op: "energy", needed: 2, got: traj.len() });
    }
    Ok(traj.dissipation[traj.len() - 1] - traj.dissipation[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::Model;
    use crate::init;
    use nalgebra::Vector4;

    fn e1() -> Vector4<f64> {
        Vector4::new(1.0, 0.0, 0.0, 0.0)
    }

    #[test]
    fn euler_step_on_constant_cylinder_loop() {
        let c = 0.5;
        let v = init::constant_loop(Model::Cylinder1, 16, c, &e1()).unwrap();
        for theta in [0.0, 0.5, 1.0] {
            let next = flow_step(&v, &ScalingRule::Theta(theta), 0.01).unwrap();
            assert!(next.r().all(|r| (r - c * (1.0 - 0.01)).abs() < 1e-15));
        }
    }

    #[test]
    fn zero_step_is_identity() {
        let v = init::perturbed(&init::constant_loop(Model::Sphere3, 16, 0.0, &e1()).unwrap(), 2, 0.1, 3).unwrap();
        assert_eq!(flow_step(&v, &ScalingRule::Theta(1.0), 0.0).unwrap(), v);
    }

    #[test]
    fn critical_loop_is_fixed_up_to_stencil_error() {
        let v = init::reeb_orbit(Model::Sphere3, 256, 1, &e1()).unwrap();
        let ds = 1e-3;
        let next = flow_step(&v, &ScalingRule::Theta(1.0), ds).unwrap();
        assert!(v.sup_distance(&next).unwrap() <= ds * 5e-3);
    }

    #[test]
    fn cylinder_constant_loop_matches_exponential_decay() {
        let v = init::constant_loop(Model::Cylinder1, 16, 0.5, &e1()).unwrap();
        let mut cfg = FlowConfig::new(ScalingRule::Theta(1.0));
        cfg.integrator = Integrator::Rk4;
        cfg.max_steps = 5000;
        cfg.grad_tol = 0.0;
        let traj = integrate(&v, &cfg).unwrap();
        assert_eq!(traj.len(), 5001);
        let worst = traj
            .s_values
            .iter()
            .zip(traj.loops.iter())
            .flat_map(|(s, l)| l.r().map(move |r| (r - 0.5 * (-s).exp()).abs()))
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{worst}");
        let e = energy(&traj).unwrap();
        assert!((e - (traj.actions[0] - traj.actions[5000])).abs() <= 1e-3 * e.max(1.0));
    }

    #[test]
    fn converged_start_records_single_slice() {
        let v = init::constant_loop(Model::Sphere3, 16, 0.0, &e1()).unwrap();
        let traj = integrate(&v, &FlowConfig::new(ScalingRule::Theta(0.5))).unwrap();
        assert_eq!(traj.len(), 1);
        assert!(traj.converged);
        assert!(energy(&traj).is_err());
    }

    #[test]
    fn constant_sphere_perturbation_converges() {
        // t-independent perturbations stay constant loops and relax to r = 0.
        let v = init::constant_loop(Model::Sphere3, 16, 0.2, &Vector4::new(0.1, 0.3, -0.2, 0.9)).unwrap();
        let mut cfg = FlowConfig::new(ScalingRule::Theta(0.3));
        cfg.ds = 0.05;
        cfg.max_steps = 2000;
        cfg.integrator = Integrator::Rk4;
        let traj = integrate(&v, &cfg).unwrap();
        assert!(traj.converged);
        assert!(traj.actions.last().unwrap().abs() < 1e-6);
    }

    #[test]
    fn area_flow_requires_constraint() {
        let v = init::constant_loop(Model::Sphere3, 16, 0.2, &e1()).unwrap();
        let cfg = FlowConfig::new(ScalingRule::ConstrainedArea);
        assert!(matches!(integrate(&v, &cfg), Err(Error::OffConstraint { .. })));
    }

    #[test]
    fn record_every_and_final_slice() {
        let v = init::constant_loop(Model::Cylinder1, 8, 0.5, &e1()).unwrap();
        let mut cfg = FlowConfig::new(ScalingRule::Theta(1.0));
        cfg.max_steps = 10;
        cfg.record_every = 4;
        cfg.grad_tol = 0.0;
        let traj = integrate(&v, &cfg).unwrap();
        assert_eq!(traj.len(), 4);
        assert!((traj.s_values[3] - 0.01).abs() < 1e-15);
        assert!(traj.spacing().is_err());
    }

    #[test]
    fn reversed_ascent_is_a_descent_window() {
        let v = init::constant_loop(Model::Cylinder1, 8, 0.5, &e1()).unwrap();
        let mut cfg = FlowConfig::new(ScalingRule::Theta(1.0));
        cfg.max_steps = 20;
        cfg.grad_tol = 0.0;
        cfg.direction = Direction::Ascent;
        let up = integrate(&v, &cfg).unwrap();
        assert!(up.actions.windows(2).all(|w| w[1] >= w[0]));
        let down = up.reversed();
        assert_eq!(down.config.direction, Direction::Descent);
        assert!(down.max_action_increase() <= 0.0);
        assert_eq!(down.loops.last().unwrap(), &v);
        assert_eq!(energy(&down).unwrap(), energy(&up).unwrap());
    }
}
