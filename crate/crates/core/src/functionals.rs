//! The V-shaped function `h`, the action functionals and their `L²`-gradients.
//!
//! All four flow problems share the form `∂_s v + J(∂_t v − τR) = 0`; they only
//! differ in how the Reeb coefficient `τ` is produced, which is what
//! [`ScalingRule`] encodes.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::contact::TangentVector;
use crate::error::{Error, Result};
use crate::loops::{DiscreteLoop, TangentField};

/// `A₃` refuses loops whose constraint residual exceeds this.
pub const AREA_CONSTRAINT_TOL: f64 = 1e-6;

/// How the Reeb coefficient `τ` is produced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalingRule {
    /// `A_θ`: `τ(t) = θ·ln∫eʳ + (1 − θ)·r(t)`. `θ = 0` is local, `θ = 1` is the delay flow.
    Theta(f64),
    /// `A₂` with Lagrange multiplier `τ`.
    RabinowitzMultiplier(f64),
    /// `A₃` on `∫eʳ = 1`; `τ = −A₃(v)`.
    ConstrainedArea,
}

impl ScalingRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ScalingRule::Theta(theta) if !(0.0..=1.0).contains(&theta) => Err(Error::Domain { what: "theta", value: theta }),
            ScalingRule::RabinowitzMultiplier(tau) if !tau.is_finite() => Err(Error::Domain { what: "tau", value: tau }),
            _ => Ok(()),
        }
    }

    pub fn is_delay(&self) -> bool {
        matches!(self, ScalingRule::Theta(t) if *t == 1.0)
    }

    /// The same rule with a different multiplier (no-op unless Rabinowitz).
    pub fn with_multiplier(self, tau: f64) -> Self {
        match self {
            ScalingRule::RabinowitzMultiplier(_) => ScalingRule::RabinowitzMultiplier(tau),
            other => other,
        }
    }
}

/// Central finite difference of the action against `g(∇A, v̂)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradReport {
    pub directional_fd: f64,
    pub inner_with_grad: f64,
    pub rel_error: f64,
}

/// `h(ρ) = ρ(ln ρ − 1) + 1`.
pub fn h(rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Domain { what: "rho", value: rho });
    }
    Ok(h_unchecked(rho))
}

#[inline]
fn h_unchecked(rho: f64) -> f64 {
    rho * (rho.ln() - 1.0) + 1.0
}

/// `h'(ρ) = ln ρ`.
pub fn h_prime(rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Domain { what: "rho", value: rho });
    }
    Ok(rho.ln())
}

/// `A_θ(v) = −∫v*λ + θ·h(∫eʳ) + (1 − θ)·∫h(eʳ)`.
pub fn action_theta(v: &DiscreteLoop, theta: f64) -> Result<f64> {
    ScalingRule::Theta(theta).validate()?;
    let n = v.len() as f64;
    let local: f64 = v.r().map(|r| h_unchecked(r.exp())).sum::<f64>() / n;
    let nonlocal = h_unchecked(v.mean_exp_r());
    Ok(v.area() + theta * nonlocal + (1.0 - theta) * local)
}

/// `A₂(v, τ) = −∫v*λ + τ(∫eʳ − 1)`.
pub fn action_rabinowitz(v: &DiscreteLoop, tau: f64) -> f64 {
    v.area() + tau * (v.mean_exp_r() - 1.0)
}

/// `A₃(v) = −∫v*λ`, defined only on `∫eʳ = 1`.
pub fn action_area(v: &DiscreteLoop) -> Result<f64> {
    let residual = v.constraint_residual();
    if residual > AREA_CONSTRAINT_TOL {
        return Err(Error::OffConstraint { residual });
    }
    Ok(v.area())
}

/// Action of `v` under `rule`.
pub fn action(v: &DiscreteLoop, rule: &ScalingRule) -> Result<f64> {
    match *rule {
        ScalingRule::Theta(theta) => action_theta(v, theta),
        ScalingRule::RabinowitzMultiplier(tau) => Ok(action_rabinowitz(v, tau)),
        ScalingRule::ConstrainedArea => action_area(v),
    }
}

/// The Reeb coefficient `τ_k` at every sample.
pub fn scaling_tau(v: &DiscreteLoop, rule: &ScalingRule) -> Result<Vec<f64>> {
    rule.validate()?;
    let n = v.len();
    Ok(match *rule {
        ScalingRule::Theta(theta) => {
            let log_mean = v.mean_exp_r().ln();
            v.r().map(|r| theta * log_mean + (1.0 - theta) * r).collect()
        }
        ScalingRule::RabinowitzMultiplier(tau) => alloc::vec![tau; n],
        ScalingRule::ConstrainedArea => alloc::vec![-action_area(v)?; n],
    })
}

/// `∇A(v) = J(∂_t v − τR(v))`; for `A₃` additionally projected onto `T L̄`.
pub fn grad(v: &DiscreteLoop, rule: &ScalingRule) -> Result<TangentField> {
    let tau = scaling_tau(v, rule)?;
    let m = v.model();
    let dv = v.d_dt();
    let vectors: Vec<TangentVector> = v
        .points()
        .iter()
        .zip(dv.iter().zip(tau.iter()))
        .map(|(p, (d, t))| {
            let x = TangentVector::new(d.dr, d.w - m.reeb(&p.z) * *t);
            m.apply_j(p, &x)
        })
        .collect();
    let g = TangentField::new(vectors);
    Ok(match rule {
        ScalingRule::ConstrainedArea => remove_radial_component(v, &g),
        _ => g,
    })
}

/// Removes the `g`-component along `∂_r`, the gradient of `v ↦ ∫eʳ`.
pub fn remove_radial_component(v: &DiscreteLoop, field: &TangentField) -> TangentField {
    let q = v.radial_field(1.0);
    let coef = v.l2_inner_unchecked(field, &q) / v.l2_inner_unchecked(&q, &q);
    field.add_scaled(&q, -coef)
}

/// Compares the central difference of the discrete action along `v̂` with
/// `g(∇A(v), v̂)`.
///
/// Perturbed loops are `(r + εr̂, retract(z + εŵ))`. For `A₃` the direction is
/// first made tangent to `L̄` and the perturbed loops are projected with `Π`.
pub fn grad_check(v: &DiscreteLoop, rule: &ScalingRule, vhat: &TangentField, eps: f64) -> Result<GradReport> {
    if !(1e-7..=1e-2).contains(&eps) {
        return Err(Error::Domain { what: "eps", value: eps });
    }
    vhat.check_base(v)?;
    let direction = match rule {
        ScalingRule::ConstrainedArea => remove_radial_component(v, vhat),
        _ => vhat.clone(),
    };
    let g = grad(v, rule)?;
    let inner = v.l2_inner_unchecked(&g, &direction);

    let eval = |h: f64| -> Result<f64> {
        let moved = v.advance(&direction, h)?;
        match rule {
            ScalingRule::ConstrainedArea => action_area(&moved.project_pi()),
            _ => action(&moved, rule),
        }
    };
    let fd = (eval(eps)? - eval(-eps)?) / (2.0 * eps);
    Ok(GradReport {
        directional_fd: fd,
        inner_with_grad: inner,
        rel_error: (fd - inner).abs() / fd.abs().max(1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{j0, Model};
    use core::f64::consts::{E, PI};
    use nalgebra::Vector4;

    fn hopf(n: usize, k: f64, r: f64) -> DiscreteLoop {
        let z0 = Vector4::new(0.6, 0.0, 0.0, 0.8);
        DiscreteLoop::from_fn(Model::Sphere3, n, |t| {
            let a = 2.0 * PI * k * t;
            (r, z0 * a.cos() + j0(&z0) * a.sin())
        })
        .unwrap()
    }

    #[test]
    fn h_values() {
        assert_eq!(h(1.0).unwrap(), 0.0);
        assert!((h(E).unwrap() - 1.0).abs() < 1e-15);
        assert!((h(E * E).unwrap() - (E * E + 1.0)).abs() < 1e-13);
        assert!(h(0.0).is_err() && h(-1.0).is_err());
        assert!(h_prime(0.0).is_err());
        assert_eq!(h_prime(1.0).unwrap(), 0.0);
        assert!((h_prime(E).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn h_prime_matches_central_difference() {
        let eps = 1e-4;
        for rho in [0.5, 1.0, 2.0] {
            let fd = (h(rho + eps).unwrap() - h(rho - eps).unwrap()) / (2.0 * eps);
            let exact = h_prime(rho).unwrap();
            assert!((fd - exact).abs() / exact.abs().max(1.0) <= eps * eps, "{rho}");
        }
    }

    #[test]
    fn action_theta_examples() {
        for theta in [0.0, 0.3, 1.0] {
            assert_eq!(action_theta(&hopf(16, 0.0, 0.0), theta).unwrap(), 0.0);
            let c = 0.4;
            let a = action_theta(&hopf(16, 0.0, c), theta).unwrap();
            assert!((a - h(c.exp()).unwrap()).abs() < 1e-14);
        }
        let a = action_theta(&hopf(256, 1.0, 0.0), 1.0).unwrap();
        assert!((a + 2.0 * PI).abs() < 1e-3);
        assert!(action_theta(&hopf(16, 0.0, 0.0), 1.5).is_err());
    }

    #[test]
    fn rabinowitz_and_area_examples() {
        let v = hopf(64, 1.0, 0.0);
        assert_eq!(action_rabinowitz(&v, 3.7), v.area());
        assert_eq!(action_rabinowitz(&v, 0.0), v.area());
        let c = hopf(16, 0.0, 2f64.ln());
        assert!((action_rabinowitz(&c, 3.0) - 3.0).abs() < 1e-14);
        assert_eq!(action_area(&hopf(16, 0.0, 0.0)).unwrap(), 0.0);
        assert!((action_area(&hopf(256, 1.0, 0.0)).unwrap() + 2.0 * PI).abs() < 1e-3);
        let off = hopf(16, 0.0, 1.5f64.ln());
        assert!(matches!(action_area(&off), Err(Error::OffConstraint { residual }) if (residual - 0.5).abs() < 1e-12));
    }

    #[test]
    fn scaling_tau_examples() {
        let c = hopf(16, 1.0, 0.9);
        assert!(scaling_tau(&c, &ScalingRule::Theta(1.0)).unwrap().iter().all(|t| (t - 0.9).abs() < 1e-15));
        let ln2 = 2f64.ln();
        let alt = DiscreteLoop::new(
            Model::Sphere3,
            c.points()
                .iter()
                .enumerate()
                .map(|(k, p)| crate::contact::SymplPoint { r: if k % 2 == 0 { ln2 } else { -ln2 }, z: p.z })
                .collect(),
        )
        .unwrap();
        let local = scaling_tau(&alt, &ScalingRule::Theta(0.0)).unwrap();
        assert!(local.iter().zip(alt.r()).all(|(t, r)| *t == r));
        let half = scaling_tau(&alt, &ScalingRule::Theta(0.5)).unwrap();
        for (k, t) in half.iter().enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!((t - (0.5 * 1.25f64.ln() + sign * 0.5 * ln2)).abs() < 1e-15);
        }
        assert!(scaling_tau(&alt, &ScalingRule::ConstrainedArea).is_err());
    }

    #[test]
    fn gradient_vanishes_on_reeb_orbits() {
        for theta in [0.0, 0.5, 1.0] {
            let g = grad(&hopf(256, 1.0, 2.0 * PI), &ScalingRule::Theta(theta)).unwrap();
            assert!(g.sup_norm() <= 5e-3);
            let coarse = grad(&hopf(128, 1.0, 2.0 * PI), &ScalingRule::Theta(theta)).unwrap();
            let ratio = coarse.sup_norm() / g.sup_norm();
            assert!((3.5..=4.5).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn constant_loop_gradient_is_radial() {
        // ∂_t v = 0 and τ ≡ c give G = J(−cR) = c·∂_r.
        let c = -0.35;
        for model in Model::ALL {
            let v = DiscreteLoop::from_fn(model, 16, |_| (c, Vector4::new(1.0, 0.0, 0.0, 0.0))).unwrap();
            for theta in [0.0, 1.0] {
                let g = grad(&v, &ScalingRule::Theta(theta)).unwrap();
                for u in g.iter() {
                    assert!((u.dr - c).abs() < 1e-15 && u.w.norm() < 1e-15);
                }
                // The sign agrees with the finite-difference oracle.
                let report = grad_check(&v, &ScalingRule::Theta(theta), &v.radial_field(1.0), 1e-5).unwrap();
                assert!(report.rel_error < 1e-8);
            }
        }
    }

    #[test]
    fn grad_check_zero_direction() {
        let v = hopf(32, 1.0, 0.1);
        let rep = grad_check(&v, &ScalingRule::Theta(0.5), &TangentField::zeros(32), 1e-4).unwrap();
        assert_eq!(rep.directional_fd, 0.0);
        assert_eq!(rep.inner_with_grad, 0.0);
        assert_eq!(rep.rel_error, 0.0);
        assert!(grad_check(&v, &ScalingRule::Theta(0.5), &TangentField::zeros(32), 1.0).is_err());
    }
}
