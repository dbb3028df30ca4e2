//! Initial data: constant loops, Reeb orbits and seeded band-limited perturbations.

use core::f64::consts::PI;

use alloc::vec::Vec;
use nalgebra::Vector4;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contact::{j0, Ambient, Model, SigmaPoint, TangentVector};
use crate::error::Result;
use crate::loops::{DiscreteLoop, TangentField};

/// Identifier of the pseudo-random generator behind every seeded routine.
pub const GENERATOR_ID: &str = "ChaCha8Rng";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The constant loop `(r₀, z₀)`.
pub fn constant_loop(model: Model, n: usize, r0: f64, base: &Ambient) -> Result<DiscreteLoop> {
    let z0 = *model.retract(base)?.coords();
    DiscreteLoop::from_fn(model, n, |_| (r0, z0))
}

/// The Reeb orbit of generalized period `r = 2πk` through `z₀`, at `r ≡ 2πk`.
pub fn reeb_orbit(model: Model, n: usize, k: i64, base: &Ambient) -> Result<DiscreteLoop> {
    let z0 = model.retract(base)?;
    let period = 2.0 * PI * k as f64;
    DiscreteLoop::from_fn(model, n, |t| (period, flow_reeb(model, &z0, period * t)))
}

/// `φ_R^t(z₀)`: `e^{tJ₀}z₀` on the sphere, `θ₀ + t` on the circle.
pub fn flow_reeb(model: Model, z0: &SigmaPoint, t: f64) -> Ambient {
    match model {
        Model::Sphere3 => z0.coords() * t.cos() + j0(z0.coords()) * t.sin(),
        Model::Cylinder1 => Vector4::new(z0.angle() + t, 0.0, 0.0, 0.0),
    }
}

/// Fourier coefficients of a real band-limited periodic function, modes `1..=modes`,
/// with mode `m` drawn uniformly from `[−amplitude/m, amplitude/m]`.
#[derive(Clone, Debug)]
struct Band {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Band {
    fn draw<R: Rng>(rng: &mut R, modes: usize, amplitude: f64) -> Self {
        let mut cos = Vec::with_capacity(modes);
        let mut sin = Vec::with_capacity(modes);
        for m in 1..=modes {
            let a = amplitude / m as f64;
            if a > 0.0 {
                cos.push(rng.random_range(-a..=a));
                sin.push(rng.random_range(-a..=a));
            } else {
                cos.push(0.0);
                sin.push(0.0);
            }
        }
        Band { cos, sin }
    }

    fn eval(&self, t: f64) -> f64 {
        self.cos
            .iter()
            .zip(self.sin.iter())
            .enumerate()
            .map(|(i, (c, s))| {
                let w = 2.0 * PI * (i + 1) as f64 * t;
                c * w.cos() + s * w.sin()
            })
            .sum()
    }
}

/// Band-limited perturbation of `base`: `r += p(t)`, `z ← retract(z + q(t))`.
///
/// `p`, `q` are continuum functions of `t`, so the same seed yields the same
/// underlying loop at every resolution.
pub fn perturbed(base: &DiscreteLoop, modes: usize, amplitude: f64, seed: u64) -> Result<DiscreteLoop> {
    let model = base.model();
    let mut rng = rng(seed);
    let r_band = Band::draw(&mut rng, modes, amplitude);
    let z_bands: Vec<Band> = (0..model.dim()).map(|_| Band::draw(&mut rng, modes, amplitude)).collect();
    let n = base.len();
    let pts = base.points();
    DiscreteLoop::from_fn(model, n, |t| {
        let k = (t * n as f64).round() as usize % n;
        let p = &pts[k];
        let mut z = *p.z.coords();
        for (i, b) in z_bands.iter().enumerate() {
            z[i] += b.eval(t);
        }
        (p.r + r_band.eval(t), z)
    })
}

/// Seeded band-limited tangent field along `v`, ambient part projected to `TΣ`.
///
/// Like [`perturbed`] the field is a fixed continuum object sampled at `t_k`.
pub fn random_field(v: &DiscreteLoop, modes: usize, amplitude: f64, seed: u64) -> TangentField {
    let model = v.model();
    let mut rng = rng(seed);
    let r_band = Band::draw(&mut rng, modes, amplitude);
    let w_bands: Vec<Band> = (0..model.dim()).map(|_| Band::draw(&mut rng, modes, amplitude)).collect();
    let n = v.len() as f64;
    let vectors = v
        .points()
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let t = k as f64 / n;
            let mut w = Ambient::zeros();
            for (i, b) in w_bands.iter().enumerate() {
                w[i] = b.eval(t);
            }
            TangentVector::new(r_band.eval(t), model.project_tangent(&p.z, &w))
        })
        .collect();
    TangentField::new(vectors)
}

/// Shifts `r` by a constant so that `ln∫eʳ + A₃(Πv) = 0`.
///
/// For an `A₁` flow line `∂_sτ = −(τ + A₃(Πv_s))`, so a flow started here
/// leaves with `∂_sτ = 0`, the state it has at an asymptotic critical point.
pub fn balance_tau(v: &DiscreteLoop) -> DiscreteLoop {
    let projected = v.project_pi();
    // Π removes any constant shift, so the target is −A₃(Πv).
    projected.shift_r(-projected.area())
}
