//! Critical points: loops `(r, x)` with `r` constant and `x` a Reeb orbit
//! `ẋ = r̄R(x)` (for `A_θ`), or `r ≡ 0`, `ẋ = τR(x)` for the Rabinowitz forms.
//!
//! The forward flow cannot be run to convergence from loops with
//! `t`-dependence (see [`crate::flow`]), so the search is a damped
//! Gauss–Newton (Levenberg–Marquardt) iteration on the gradient itself. It
//! handles the degenerate directions of Morse–Bott families through the damping.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::contact::{SymplPoint, TangentVector};
use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::functionals::{self, grad, scaling_tau, ScalingRule};
use crate::loops::DiscreteLoop;

const FD_STEP: f64 = 1e-6;
const MAX_DAMPING: f64 = 1e16;
/// Keeps steps along near-null directions (grid-scale modes invisible to
/// central differences) from amplifying finite-difference noise.
const MIN_DAMPING: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct CriticalReport {
    pub critical_loop: DiscreteLoop,
    /// Final multiplier for Rabinowitz searches.
    pub tau: Option<f64>,
    /// `r̄ = ∫ r`.
    pub r_mean: f64,
    /// `max_k |r_k − r̄|`.
    pub r_spread: f64,
    /// Reeb coefficient of the orbit: `r̄` for `A_θ`, `τ` for `A₂`, `−A₃` for `A₃`.
    pub period: f64,
    /// `max_k |ẋ_k − period·R(x_k)|`.
    pub ode_residual: f64,
    pub action: f64,
    /// `|action − (1 − e^{r̄})|` for `A_θ`, `|action + period|` otherwise.
    pub action_gap: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

struct Search<'a> {
    rule: &'a ScalingRule,
    dim: usize,
    with_tau: bool,
}

impl Search<'_> {
    fn unknowns(&self, n: usize) -> usize {
        n * (1 + self.dim) + usize::from(self.with_tau)
    }

    /// Moves `(v, τ)` by the coordinates `delta`.
    fn moved(&self, v: &DiscreteLoop, tau: f64, delta: &[f64]) -> Result<(DiscreteLoop, f64)> {
        let m = v.model();
        let stride = 1 + self.dim;
        let mut points = Vec::with_capacity(v.len());
        for (k, p) in v.points().iter().enumerate() {
            let c = &delta[k * stride..(k + 1) * stride];
            let frame = m.frame(&p.z);
            let mut w = frame[0] * c[1];
            for i in 1..self.dim {
                w += frame[i] * c[1 + i];
            }
            let z = m.step(&p.z, &w).map_err(|_| Error::BlowUp)?;
            points.push(SymplPoint { r: p.r + c[0], z });
        }
        let mut next = DiscreteLoop::from_points_unchecked(m, points);
        if *self.rule == ScalingRule::ConstrainedArea {
            next = next.project_pi();
        }
        let tau = if self.with_tau { tau + delta[delta.len() - 1] } else { tau };
        Ok((next, tau))
    }

    /// Gradient components in the orthonormal frame, plus `∫eʳ − 1` for `A₂`,
    /// plus the checkerboard component of `r`.
    ///
    /// Central differences do not see `r_k = (−1)^k`, and for the delay rule it
    /// is a null direction of the gradient; the last row pins it at zero.
    fn residual(&self, v: &DiscreteLoop, tau: f64) -> Result<(DVector<f64>, f64)> {
        let rule = self.rule.with_multiplier(tau);
        let g = grad(v, &rule)?;
        let m = v.model();
        let unknowns = self.unknowns(v.len());
        let mut out = DVector::zeros(unknowns + 1);
        let stride = 1 + self.dim;
        for (k, (p, u)) in v.points().iter().zip(g.iter()).enumerate() {
            out[k * stride] = u.dr;
            let frame = m.frame(&p.z);
            for i in 0..self.dim {
                out[k * stride + 1 + i] = frame[i].dot(&u.w);
            }
        }
        let mut sup = g.sup_norm();
        if self.with_tau {
            let c = v.mean_exp_r() - 1.0;
            out[unknowns - 1] = c;
            sup = sup.max(c.abs());
        }
        out[unknowns] = v.r().enumerate().map(|(k, r)| if k % 2 == 0 { r } else { -r }).sum::<f64>();
        if !out.iter().all(|x| x.is_finite()) {
            return Err(Error::BlowUp);
        }
        Ok((out, sup))
    }

    fn jacobian(&self, v: &DiscreteLoop, tau: f64) -> Result<DMatrix<f64>> {
        let size = self.unknowns(v.len());
        let mut jac = DMatrix::zeros(size + 1, size);
        let mut delta = alloc::vec![0.0; size];
        for j in 0..size {
            delta[j] = FD_STEP;
            let (vp, tp) = self.moved(v, tau, &delta)?;
            let (fp, _) = self.residual(&vp, tp)?;
            delta[j] = -FD_STEP;
            let (vm, tm) = self.moved(v, tau, &delta)?;
            let (fm, _) = self.residual(&vm, tm)?;
            delta[j] = 0.0;
            jac.set_column(j, &((fp - fm) / (2.0 * FD_STEP)));
        }
        Ok(jac)
    }
}

/// Searches for a critical point of the functional selected by `rule` near `v0`.
///
/// Uses `config.grad_tol` as the sup-norm target and `config.max_steps` as the
/// iteration cap; the remaining fields of `config` are ignored. A search that
/// stalls or exhausts its iterations returns a report with `converged = false`.
pub fn find_critical(v0: &DiscreteLoop, rule: &ScalingRule, config: &FlowConfig) -> Result<CriticalReport> {
    rule.validate()?;
    let search = Search {
        rule,
        dim: v0.model().tangent_dim(),
        with_tau: matches!(rule, ScalingRule::RabinowitzMultiplier(_)),
    };
    let mut v = match rule {
        ScalingRule::ConstrainedArea => v0.project_pi(),
        _ => v0.clone(),
    };
    let mut tau = match *rule {
        ScalingRule::RabinowitzMultiplier(t) => t,
        _ => 0.0,
    };
    let (mut f, mut sup) = search.residual(&v, tau)?;
    let mut damping = MIN_DAMPING;
    let mut iterations = 0;

    while sup > config.grad_tol && iterations < config.max_steps && damping < MAX_DAMPING {
        iterations += 1;
        let jac = search.jacobian(&v, tau)?;
        let jtj = jac.transpose() * &jac;
        let rhs = -(jac.transpose() * &f);
        let cost = f.norm_squared();
        loop {
            let mut system = jtj.clone();
            for i in 0..system.nrows() {
                system[(i, i)] += damping;
            }
            let Some(chol) = system.cholesky() else {
                damping *= 4.0;
                continue;
            };
            let delta = chol.solve(&rhs);
            let trial = search
                .moved(&v, tau, delta.as_slice())
                .and_then(|(tv, tt)| search.residual(&tv, tt).map(|r| (tv, tt, r)));
            match trial {
                Ok((tv, tt, (tf, tsup))) if tf.norm_squared() < cost => {
                    v = tv;
                    tau = tt;
                    f = tf;
                    sup = tsup;
                    damping = (damping / 3.0).max(MIN_DAMPING);
                    break;
                }
                _ => {
                    damping *= 4.0;
                    if damping >= MAX_DAMPING {
                        break;
                    }
                }
            }
        }
        log::trace!("critical search iteration {iterations}: sup grad {sup:e}");
    }

    report(v, rule.with_multiplier(tau), sup, sup <= config.grad_tol, iterations)
}

fn report(v: DiscreteLoop, rule: ScalingRule, grad_norm: f64, converged: bool, iterations: usize) -> Result<CriticalReport> {
    let n = v.len() as f64;
    let r_mean = v.r().sum::<f64>() / n;
    let r_spread = v.r().map(|r| (r - r_mean).abs()).fold(0.0, f64::max);
    let period = match rule {
        ScalingRule::Theta(_) => r_mean,
        _ => scaling_tau(&v, &rule)?[0],
    };
    let m = v.model();
    let ode_residual = v
        .points()
        .iter()
        .zip(v.d_dt().iter())
        .map(|(p, d): (&SymplPoint, &TangentVector)| (d.w - m.reeb(&p.z) * period).norm())
        .fold(0.0, f64::max);
    let action = functionals::action(&v, &rule)?;
    let action_gap = match rule {
        ScalingRule::Theta(_) => (action - (1.0 - r_mean.exp())).abs(),
        _ => (action + period).abs(),
    };
    Ok(CriticalReport {
        critical_loop: v,
        tau: match rule {
            ScalingRule::RabinowitzMultiplier(t) => Some(t),
            _ => None,
        },
        r_mean,
        r_spread,
        period,
        ode_residual,
        action,
        action_gap,
        grad_norm,
        converged,
        iterations,
    })
}
