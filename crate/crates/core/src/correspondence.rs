//! Delay flow lines versus Rabinowitz flow lines.
//!
//! Along an `A₁` flow line `v_s` put `T(s) = ∫e^{r(s,·)}` and `τ(s) = ln T(s)`.
//! Then `∂_sτ = (1 − A₁(v_s))/e^τ − 1`, which is bounded below by `−1`. The
//! projection `Π` maps `A₁` flow lines to `A₃` flow lines, and its inverse
//! translates an `A₃` flow line back in `r` by the solution `ρ` of
//! `∂_sρ = −ρ − A₃(v_s)` that does not blow up as `s → −∞`.

use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::error::{Error, Result};
use crate::flow::{uniform_spacing, Direction, FlowConfig, Trajectory};
use crate::functionals::{grad, ScalingRule};
use crate::loops::DiscreteLoop;

/// Slices handed to `A₃` checks must be this close to `∫eʳ = 1`.
pub const ON_CONSTRAINT_TOL: f64 = 1e-8;
/// `inverse_d` warns when `|f|` exceeds this on the last 5% of the window.
pub const TRUNCATION_TOL: f64 = 1e-8;

/// Samples of a function on a uniform `s`-grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarSeries {
    s_values: Vec<f64>,
    values: Vec<f64>,
}

impl ScalarSeries {
    pub fn new(s_values: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if s_values.len() != values.len() {
            return Err(Error::InvalidLoop("series length mismatch".into()));
        }
        uniform_spacing(&s_values)?;
        Ok(ScalarSeries { s_values, values })
    }

    /// Samples `f` at `s₀ + i·h`, `i = 0..n`.
    pub fn from_fn(s0: f64, h: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let s_values: Vec<f64> = (0..n).map(|i| s0 + i as f64 * h).collect();
        let values = s_values.iter().map(|&s| f(s)).collect();
        Self::new(s_values, values)
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s_values
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        (self.s_values[self.len() - 1] - self.s_values[0]) / (self.len() - 1) as f64
    }

    /// Second-order derivative: central inside, three-point one-sided at the ends.
    pub fn derivative(&self) -> ScalarSeries {
        let h = self.spacing();
        let f = &self.values;
        let n = f.len();
        let mut d = Vec::with_capacity(n);
        for i in 0..n {
            d.push(if i == 0 {
                (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h)
            } else {
                (f[i + 1] - f[i - 1]) / (2.0 * h)
            });
        }
        ScalarSeries {
            s_values: self.s_values.clone(),
            values: d,
        }
    }

    /// `max |self − other|` over common samples.
    pub fn sup_distance(&self, other: &ScalarSeries) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lemma2Report {
    pub min_dtau: f64,
    /// `min_dtau > −1`.
    pub strict_bound_ok: bool,
    /// `−(A_first − A_last)/(1 − A_last)`, the window stand-in for the asymptotic bound.
    pub window_bound: f64,
    pub window_bound_ok: bool,
    pub der_residual_max: f64,
}

/// Output of [`inverse_d`].
#[derive(Clone, Debug, PartialEq)]
pub struct DInverse {
    pub sigma: ScalarSeries,
    /// `f` had not decayed at the right end of the window.
    pub truncated: bool,
}

fn require_delay(traj: &Trajectory, op: &'static str) -> Result<()> {
    if !traj.config.rule.is_delay() || traj.config.direction != Direction::Descent {
        return Err(Error::WrongRule {
            op,
            expected: "a descending delay-flow (Theta(1)) trajectory",
        });
    }
    Ok(())
}

fn require_area(traj: &Trajectory, op: &'static str) -> Result<()> {
    if traj.config.rule != ScalingRule::ConstrainedArea || traj.config.direction != Direction::Descent {
        return Err(Error::WrongRule {
            op,
            expected: "a descending ConstrainedArea trajectory",
        });
    }
    let residual = traj.max_constraint_residual();
    if residual > ON_CONSTRAINT_TOL {
        return Err(Error::OffConstraint { residual });
    }
    Ok(())
}

fn require_len(traj: &Trajectory, op: &'static str, needed: usize) -> Result<f64> {
    if traj.len() < needed {
        return Err(Error::TooShort { op, needed, got: traj.len() });
    }
    traj.spacing()
}

/// `T(s) = ∫e^{r(s,·)}`.
pub fn mass_series(traj: &Trajectory) -> Result<ScalarSeries> {
    require_delay(traj, "mass_series")?;
    ScalarSeries::new(traj.s_values.clone(), traj.loops.iter().map(|l| l.mean_exp_r()).collect())
}

/// `τ(s) = ln T(s)`.
pub fn tau_series(traj: &Trajectory) -> Result<ScalarSeries> {
    require_delay(traj, "tau_series")?;
    ScalarSeries::new(traj.s_values.clone(), traj.loops.iter().map(|l| l.mean_exp_r().ln()).collect())
}

/// Central differences of `τ` at interior slices.
fn interior_dtau(traj: &Trajectory, op: &'static str) -> Result<(ScalarSeries, Vec<f64>)> {
    require_len(traj, op, 3)?;
    let tau = tau_series(traj)?;
    let d = tau.derivative();
    let interior = d.values[1..d.len() - 1].to_vec();
    Ok((tau, interior))
}

/// `max |∂_sτ − ((1 − A₁)/e^τ − 1)|` over interior slices.
pub fn verify_der(traj: &Trajectory) -> Result<f64> {
    let (tau, dtau) = interior_dtau(traj, "verify_der")?;
    Ok(dtau
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let i = j + 1;
            let rhs = (1.0 - traj.actions[i]) / tau.values[i].exp() - 1.0;
            (d - rhs).abs()
        })
        .fold(0.0, f64::max))
}

pub fn verify_lemma2(traj: &Trajectory) -> Result<Lemma2Report> {
    let (_, dtau) = interior_dtau(traj, "verify_lemma2")?;
    let min_dtau = dtau.iter().copied().fold(f64::INFINITY, f64::min);
    let first = traj.actions[0];
    let last = traj.actions[traj.len() - 1];
    let window_bound = -(first - last) / (1.0 - last);
    Ok(Lemma2Report {
        min_dtau,
        strict_bound_ok: min_dtau > -1.0,
        window_bound,
        window_bound_ok: min_dtau >= window_bound,
        der_residual_max: verify_der(traj)?,
    })
}

/// `min Δr = min(∂²_s r + ∂²_t r)` over interior slices and all samples.
pub fn verify_laplacian(traj: &Trajectory) -> Result<f64> {
    require_delay(traj, "verify_laplacian")?;
    let h = require_len(traj, "verify_laplacian", 3)?;
    let mut min = f64::INFINITY;
    for i in 1..traj.len() - 1 {
        let dtt = traj.loops[i].d2r_dt2();
        let (prev, here, next) = (&traj.loops[i - 1], &traj.loops[i], &traj.loops[i + 1]);
        for (k, d) in dtt.iter().enumerate() {
            let dss = (next.points()[k].r - 2.0 * here.points()[k].r + prev.points()[k].r) / (h * h);
            min = min.min(dss + d);
        }
    }
    Ok(min)
}

/// `Π_*`: projects every slice of an `A₁` flow line onto `∫eʳ = 1`.
pub fn pushforward_pi(traj: &Trajectory) -> Result<Trajectory> {
    require_delay(traj, "pushforward_pi")?;
    let config = FlowConfig {
        rule: ScalingRule::ConstrainedArea,
        ..traj.config.clone()
    };
    let loops = traj.loops.iter().map(DiscreteLoop::project_pi).collect();
    let mut out = Trajectory::from_slices(config, traj.s_values.clone(), loops, None)?;
    out.converged = traj.converged;
    Ok(out)
}

/// `max_{i,k} |∂_s v + ∇A(v)|` over interior slices, with `∂_s v` by central
/// differences in the ambient coordinates.
fn flow_residual(traj: &Trajectory, rule: &ScalingRule, op: &'static str) -> Result<f64> {
    let h = require_len(traj, op, 3)?;
    let m = traj.loops[0].model();
    let mut worst: f64 = 0.0;
    for i in 1..traj.len() - 1 {
        let (prev, here, next) = (&traj.loops[i - 1], &traj.loops[i], &traj.loops[i + 1]);
        let g = grad(here, rule)?;
        for (k, u) in g.iter().enumerate() {
            let (a, b) = (&prev.points()[k], &next.points()[k]);
            let dr = (b.r - a.r) / (2.0 * h) + u.dr;
            let dz = m.displacement(&a.z, &b.z) / (2.0 * h) + u.w;
            worst = worst.max((dr * dr + dz.norm_squared()).sqrt());
        }
    }
    Ok(worst)
}

/// Residual of `∂_s v + J(∂_t v + A₃(v_s)R(v)) = 0` on a trajectory lying on
/// `∫eʳ = 1`, combined (by max) with the largest constraint residual.
pub fn gradrab2_residual(traj: &Trajectory) -> Result<f64> {
    let constraint = traj.max_constraint_residual();
    if constraint > ON_CONSTRAINT_TOL {
        return Err(Error::OffConstraint { residual: constraint });
    }
    // On the constraint surface the gradient of A₃ is already tangent to it.
    Ok(flow_residual(traj, &ScalingRule::ConstrainedArea, "gradrab2_residual")?.max(constraint))
}

/// Residual of the delay flow `∂_s v + J(∂_t v − ln(∫eʳ)R(v)) = 0`.
pub fn gradvd_residual(traj: &Trajectory) -> Result<f64> {
    flow_residual(traj, &ScalingRule::Theta(1.0), "gradvd_residual")
}

/// The decaying solution of `∂_sσ − σ = f`, `σ(s) = −∫_s^∞ e^{s−s′}f(s′) ds′`,
/// with `f` taken as zero past the window, by trapezoid quadrature from the right.
pub fn inverse_d(f: &ScalarSeries) -> Result<DInverse> {
    let n = f.len();
    if n < 2 {
        return Err(Error::TooShort { op: "inverse_d", needed: 2, got: n });
    }
    let h = f.spacing();
    let decay = (-h).exp();
    let tail = n - (n / 20).max(1);
    let truncated = f.values[tail..].iter().any(|x| x.abs() > TRUNCATION_TOL);
    if truncated {
        log::warn!("inverse_d: input has not decayed at the right end of the window");
    }
    let mut sigma = alloc::vec![0.0; n];
    for i in (0..n - 1).rev() {
        sigma[i] = decay * sigma[i + 1] - 0.5 * h * (f.values[i] + decay * f.values[i + 1]);
    }
    Ok(DInverse {
        sigma: ScalarSeries {
            s_values: f.s_values.clone(),
            values: sigma,
        },
        truncated,
    })
}

/// The solution of `∂_sσ + σ = f` that vanishes at the left end of the window,
/// `σ(s) = ∫_{s₀}^s e^{s′−s}f(s′) ds′`, integrating the kernel exactly against
/// the piecewise-linear interpolant of `f`.
///
/// On a bi-infinite line this is the unique solution without the `e^{−s}`
/// mode, provided `f` vanishes to the left of the window.
pub fn inverse_d_plus(f: &ScalarSeries) -> Result<ScalarSeries> {
    let n = f.len();
    if n < 2 {
        return Err(Error::TooShort { op: "inverse_d_plus", needed: 2, got: n });
    }
    let h = f.spacing();
    let decay = (-h).exp();
    // ∫₀ʰ e^{x−h}·(x/h) dx, by its Taylor series where the closed form cancels.
    let w1 = if h < 0.1 {
        h * (0.5 - h * (1.0 / 6.0 - h * (1.0 / 24.0 - h * (1.0 / 120.0 - h * (1.0 / 720.0 - h / 5040.0)))))
    } else {
        (h - 1.0 + decay) / h
    };
    let w0 = -(-h).exp_m1() - w1;
    let mut sigma = alloc::vec![0.0; n];
    for i in 1..n {
        sigma[i] = decay * sigma[i - 1] + w0 * f.values[i - 1] + w1 * f.values[i];
    }
    Ok(ScalarSeries {
        s_values: f.s_values.clone(),
        values: sigma,
    })
}

/// Interior residual of the discrete `D`: `max |σ′ − σ − f|` with central `σ′`.
pub fn d_residual(sigma: &ScalarSeries, f: &ScalarSeries) -> f64 {
    let d = sigma.derivative();
    (1..sigma.len() - 1)
        .map(|i| (d.values[i] - sigma.values[i] - f.values[i]).abs())
        .fold(0.0, f64::max)
}

/// The `r`-translation `ρ(s)` lifting an `A₃` flow line to an `A₁` flow line:
/// the solution of `∂_sρ = −ρ − a(s)`, `a(s) = A₃(v_s)`, without an `e^{−s}`
/// mode, i.e. `ρ = −a + σ` with `∂_sσ + σ = ∂_s a` and `σ(s₀) = 0`.
///
/// Integrating by parts, `ρ(s) = −e^{s₀−s}a(s₀) − ∫_{s₀}^s e^{s′−s}a(s′) ds′`,
/// which avoids differencing the action series.
pub fn lift_shift(traj: &Trajectory) -> Result<ScalarSeries> {
    require_area(traj, "lift_shift")?;
    require_len(traj, "lift_shift", 3)?;
    let a = ScalarSeries::new(traj.s_values.clone(), traj.actions.clone())?;
    let u = inverse_d_plus(&a)?;
    let s0 = a.s_values[0];
    let rho = a
        .s_values
        .iter()
        .zip(u.values.iter())
        .map(|(s, u)| -(u + (s0 - s).exp() * a.values[0]))
        .collect();
    ScalarSeries::new(traj.s_values.clone(), rho)
}

/// Interior residual of `∂_sρ = −ρ − a` against the action series of `traj`.
pub fn shift_ode_residual(rho: &ScalarSeries, traj: &Trajectory) -> f64 {
    let d = rho.derivative();
    (1..rho.len() - 1)
        .map(|i| (d.values[i] + rho.values[i] + traj.actions[i]).abs())
        .fold(0.0, f64::max)
}

/// `R`: translates each slice of an `A₃` flow line by [`lift_shift`].
pub fn lift_r(traj: &Trajectory) -> Result<Trajectory> {
    let rho = lift_shift(traj)?;
    let config = FlowConfig {
        rule: ScalingRule::Theta(1.0),
        ..traj.config.clone()
    };
    let loops = traj.loops.iter().zip(rho.values.iter()).map(|(l, p)| l.shift_r(*p)).collect();
    let mut out = Trajectory::from_slices(config, traj.s_values.clone(), loops, None)?;
    out.converged = traj.converged;
    Ok(out)
}

/// `max_i sup_k (|Δr| + |Δz|)` between trajectories with the same slices.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::BaseMismatch);
    }
    a.loops
        .iter()
        .zip(b.loops.iter())
        .try_fold(0.0f64, |acc, (x, y)| Ok(acc.max(x.sup_distance(y)?)))
}

/// Distance from `traj` to `R(Π_*(traj))` for delay flow lines, or to
/// `Π_*(R(traj))` for `A₃` flow lines.
pub fn roundtrip_check(traj: &Trajectory) -> Result<f64> {
    let back = match traj.config.rule {
        ScalingRule::Theta(1.0) => lift_r(&pushforward_pi(traj)?)?,
        ScalingRule::ConstrainedArea => pushforward_pi(&lift_r(traj)?)?,
        _ => {
            return Err(Error::WrongRule {
                op: "roundtrip_check",
                expected: "a Theta(1) or ConstrainedArea trajectory",
            })
        }
    };
    trajectory_distance(traj, &back)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::Model;
    use crate::flow::{integrate, Integrator};
    use crate::init;
    use nalgebra::Vector4;

    fn stationary(v: &DiscreteLoop, rule: ScalingRule, n: usize) -> Trajectory {
        let s = (0..n).map(|i| i as f64 * 0.01).collect();
        Trajectory::from_slices(FlowConfig::new(rule), s, alloc::vec![v.clone(); n], None).unwrap()
    }

    fn cylinder_oracle() -> Trajectory {
        let v = init::constant_loop(Model::Cylinder1, 8, 0.5, &Vector4::zeros()).unwrap();
        let mut cfg = FlowConfig::new(ScalingRule::Theta(1.0));
        cfg.integrator = Integrator::Rk4;
        cfg.max_steps = 2000;
        cfg.grad_tol = 0.0;
        integrate(&v, &cfg).unwrap()
    }

    #[test]
    fn series_requires_uniform_grid() {
        assert!(matches!(
            ScalarSeries::new(alloc::vec![0.0, 1.0, 3.0], alloc::vec![0.0; 3]),
            Err(Error::NonUniformGrid)
        ));
        assert!(ScalarSeries::new(alloc::vec![0.0, 1.0], alloc::vec![0.0]).is_err());
    }

    #[test]
    fn tau_rejects_other_rules() {
        let v = init::constant_loop(Model::Sphere3, 8, 0.0, &Vector4::new(1.0, 0.0, 0.0, 0.0)).unwrap();
        let t = stationary(&v, ScalingRule::Theta(0.5), 3);
        assert!(matches!(tau_series(&t), Err(Error::WrongRule { .. })));
    }

    #[test]
    fn cylinder_oracle_series() {
        let traj = cylinder_oracle();
        let tau = tau_series(&traj).unwrap();
        for (s, t) in tau.s_values().iter().zip(tau.values()) {
            assert!((t - 0.5 * (-s).exp()).abs() < 1e-6);
        }
        assert!(verify_der(&traj).unwrap() < 1e-4);
        let rep = verify_lemma2(&traj).unwrap();
        assert!(rep.strict_bound_ok && (rep.min_dtau + 0.5).abs() < 1e-3);
        let lap = verify_laplacian(&traj).unwrap();
        assert!(lap > 0.0 && lap < 0.5);
    }

    #[test]
    fn stationary_critical_trajectory() {
        let v = init::reeb_orbit(Model::Cylinder1, 16, -1, &Vector4::zeros()).unwrap();
        let traj = stationary(&v, ScalingRule::Theta(1.0), 5);
        assert!(verify_der(&traj).unwrap() < 1e-12);
        let rep = verify_lemma2(&traj).unwrap();
        assert!(rep.min_dtau == 0.0 && rep.strict_bound_ok && rep.window_bound_ok);
        assert_eq!(verify_laplacian(&traj).unwrap(), 0.0);
        assert!(gradvd_residual(&traj).unwrap() < 1e-12);
        assert!(roundtrip_check(&traj).unwrap() < 1e-10);
        let pushed = pushforward_pi(&traj).unwrap();
        assert!(gradrab2_residual(&pushed).unwrap() < 1e-12);
        assert!(roundtrip_check(&pushed).unwrap() < 1e-10);
    }

    #[test]
    fn pushforward_of_constant_slices_lands_on_zero() {
        let traj = cylinder_oracle();
        let pushed = pushforward_pi(&traj).unwrap();
        assert!(pushed.loops.iter().all(|l| l.r().all(|r| r.abs() < 1e-15)));
        let again = pushforward_pi(&Trajectory {
            config: FlowConfig::new(ScalingRule::Theta(1.0)),
            ..pushed.clone()
        })
        .unwrap();
        assert!(trajectory_distance(&again, &pushed).unwrap() < 1e-15);
    }

    #[test]
    fn inverse_d_gaussian_pair() {
        let f = ScalarSeries::from_fn(-8.0, 1e-3, 16001, |s| (-2.0 * s - 1.0) * (-s * s).exp()).unwrap();
        let inv = inverse_d(&f).unwrap();
        assert!(!inv.truncated);
        let worst = inv
            .sigma
            .s_values()
            .iter()
            .zip(inv.sigma.values())
            .map(|(s, v)| (v - (-s * s).exp()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6, "{worst}");
        assert!(d_residual(&inv.sigma, &f) < 1e-5);
    }

    #[test]
    fn inverse_d_of_zero_and_truncation() {
        let zero = ScalarSeries::from_fn(0.0, 0.1, 50, |_| 0.0).unwrap();
        assert!(inverse_d(&zero).unwrap().sigma.values().iter().all(|v| *v == 0.0));
        let one = ScalarSeries::from_fn(0.0, 0.1, 50, |_| 1.0).unwrap();
        assert!(inverse_d(&one).unwrap().truncated);
    }

    #[test]
    fn inverse_d_plus_is_exact_on_linear_data() {
        let f = ScalarSeries::from_fn(0.0, 0.05, 200, |s| 2.0 - 0.5 * s).unwrap();
        let sigma = inverse_d_plus(&f).unwrap();
        for (s, v) in sigma.s_values().iter().zip(sigma.values()) {
            // closed-form solution of σ′ + σ = 2 − s/2, σ(0) = 0
            let exact = 2.5 - 0.5 * s - 2.5 * (-s).exp();
            assert!((v - exact).abs() < 1e-13, "{s}: {v} vs {exact}");
        }
    }

    #[test]
    fn inverse_d_plus_solves_its_equation() {
        let f = ScalarSeries::from_fn(-6.0, 1e-3, 12001, |s| s * (-s * s).exp()).unwrap();
        let sigma = inverse_d_plus(&f).unwrap();
        let d = sigma.derivative();
        let worst = (1..f.len() - 1)
            .map(|i| (d.values()[i] + sigma.values()[i] - f.values()[i]).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-6);
    }
}
