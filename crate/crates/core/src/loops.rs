//! Uniformly sampled loops `v = (r, x): S¹ → ℝ × Σ` and fields along them.
//!
//! Derivatives are periodic central differences and integrals are uniform
//! averages. Central differences are skew-adjoint for the uniform pairing,
//! which keeps the sampled gradient formula consistent with the discrete
//! action to second order in `1/N`.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use crate::contact::{Ambient, Model, SymplPoint, TangentVector, TANGENCY_TOL};
use crate::error::{Error, Result};

/// Smallest admissible number of samples.
pub const MIN_SAMPLES: usize = 8;

/// Tolerance for `|z| = 1` on loops read from outside the crate.
const INPUT_MANIFOLD_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteLoop {
    model: Model,
    points: Vec<SymplPoint>,
}

/// Vectors `v̂_k` attached to the samples of a loop.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentField {
    vectors: Vec<TangentVector>,
}

impl DiscreteLoop {
    /// Builds a loop from sample points at `t_k = k/N`.
    ///
    /// Points within `1e-9` of `Σ` are snapped onto it; anything further away
    /// is rejected.
    pub fn new(model: Model, points: Vec<SymplPoint>) -> Result<Self> {
        let n = points.len();
        if n < MIN_SAMPLES || !n.is_multiple_of(2) {
            return Err(Error::InvalidLoop(format!(
                "need an even number of samples >= {MIN_SAMPLES}, got {n}"
            )));
        }
        let mut snapped = Vec::with_capacity(n);
        for (k, p) in points.into_iter().enumerate() {
            if !p.r.is_finite() {
                return Err(Error::InvalidLoop(format!("r[{k}] is not finite")));
            }
            let residual = match model {
                Model::Sphere3 => model.manifold_residual(&p.z),
                Model::Cylinder1 => {
                    let c = p.z.coords();
                    c[1].abs() + c[2].abs() + c[3].abs() + if c[0].is_finite() { 0.0 } else { f64::INFINITY }
                }
            };
            if residual > INPUT_MANIFOLD_TOL || !residual.is_finite() {
                return Err(Error::InvalidLoop(format!(
                    "sample {k} is off the manifold (residual {residual:e})"
                )));
            }
            snapped.push(SymplPoint {
                r: p.r,
                z: model.retract(p.z.coords())?,
            });
        }
        Ok(DiscreteLoop { model, points: snapped })
    }

    /// Samples `f(t_k)`, retracting the `Σ` component.
    pub fn from_fn(model: Model, n: usize, mut f: impl FnMut(f64) -> (f64, Ambient)) -> Result<Self> {
        let mut points = Vec::with_capacity(n);
        for k in 0..n {
            let (r, z) = f(k as f64 / n as f64);
            points.push(SymplPoint {
                r,
                z: model.retract(&z)?,
            });
        }
        DiscreteLoop::new(model, points)
    }

    pub(crate) fn from_points_unchecked(model: Model, points: Vec<SymplPoint>) -> Self {
        DiscreteLoop { model, points }
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SymplPoint] {
        &self.points
    }

    pub fn r(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.r)
    }

    /// Same `Σ` component, `r_k ↦ r_k + c`.
    pub fn shift_r(&self, c: f64) -> Self {
        DiscreteLoop {
            model: self.model,
            points: self.points.iter().map(|p| SymplPoint { r: p.r + c, z: p.z }).collect(),
        }
    }

    /// `(r_k + h·v̂_k.dr, retract(z_k + h·v̂_k.w))`.
    pub fn advance(&self, field: &TangentField, h: f64) -> Result<Self> {
        if field.len() != self.len() {
            return Err(Error::BaseMismatch);
        }
        let mut points = Vec::with_capacity(self.len());
        for (p, u) in self.points.iter().zip(field.iter()) {
            let r = p.r + h * u.dr;
            if !r.is_finite() {
                return Err(Error::BlowUp);
            }
            let z = self.model.step(&p.z, &(u.w * h)).map_err(|_| Error::BlowUp)?;
            points.push(SymplPoint { r, z });
        }
        Ok(DiscreteLoop {
            model: self.model,
            points,
        })
    }

    #[inline]
    fn neighbours(&self, k: usize) -> (&SymplPoint, &SymplPoint) {
        let n = self.len();
        (&self.points[(k + 1) % n], &self.points[(k + n - 1) % n])
    }

    /// `∂_t v` by periodic central differences, `Σ` part projected to `T_{z_k}Σ`.
    pub fn d_dt(&self) -> TangentField {
        let n = self.len();
        let half_n = 0.5 * n as f64;
        let vectors = (0..n)
            .map(|k| {
                let (next, prev) = self.neighbours(k);
                let here = &self.points[k];
                let dz = self.model.displacement(&prev.z, &next.z) * half_n;
                TangentVector {
                    dr: (next.r - prev.r) * half_n,
                    w: self.model.project_tangent(&here.z, &dz),
                }
            })
            .collect();
        TangentField { vectors }
    }

    /// Second central difference of `r` in `t`.
    pub fn d2r_dt2(&self) -> Vec<f64> {
        let n = self.len();
        let n2 = (n * n) as f64;
        (0..n)
            .map(|k| {
                let (next, prev) = self.neighbours(k);
                (next.r - 2.0 * self.points[k].r + prev.r) * n2
            })
            .collect()
    }

    /// `T = ∫₀¹ eʳ dt` by the uniform rule.
    pub fn mean_exp_r(&self) -> f64 {
        self.points.iter().map(|p| p.r.exp()).sum::<f64>() / self.len() as f64
    }

    /// Negative area `−∫ v*λ = −∫ eʳ λ(∂_t x) dt`.
    pub fn area(&self) -> f64 {
        let n = self.len();
        let half_n = 0.5 * n as f64;
        let mut acc = 0.0;
        for k in 0..n {
            let (next, prev) = self.neighbours(k);
            let here = &self.points[k];
            // λ kills the normal component, so no projection needed here.
            let dz = self.model.displacement(&prev.z, &next.z) * half_n;
            acc += here.r.exp() * self.model.lambda_unchecked(&here.z, &dz);
        }
        -acc / n as f64
    }

    /// `g(a, b) = ∫ ω(a, J b) dt`.
    pub fn l2_inner(&self, a: &TangentField, b: &TangentField) -> Result<f64> {
        a.check_base(self)?;
        b.check_base(self)?;
        Ok(self.l2_inner_unchecked(a, b))
    }

    pub(crate) fn l2_inner_unchecked(&self, a: &TangentField, b: &TangentField) -> f64 {
        let m = self.model;
        let sum: f64 = self
            .points
            .iter()
            .zip(a.iter().zip(b.iter()))
            .map(|(p, (u, w))| m.omega(p, u, &m.apply_j(p, w)))
            .sum();
        sum / self.len() as f64
    }

    /// `Π(r, x) = (r − ln ∫eʳ, x)`, landing on `∫eʳ = 1`.
    pub fn project_pi(&self) -> Self {
        self.shift_r(-self.mean_exp_r().ln())
    }

    /// `|∫eʳ − 1|`.
    pub fn constraint_residual(&self) -> f64 {
        (self.mean_exp_r() - 1.0).abs()
    }

    /// `max_k |Δr_k| + |Δz_k|` against another loop with the same samples.
    pub fn sup_distance(&self, other: &DiscreteLoop) -> Result<f64> {
        if other.model != self.model || other.len() != self.len() {
            return Err(Error::BaseMismatch);
        }
        Ok(self
            .points
            .iter()
            .zip(other.points.iter())
            .map(|(a, b)| (a.r - b.r).abs() + self.model.distance(&a.z, &b.z))
            .fold(0.0, f64::max))
    }

    /// The field `c·∂_r` along this loop.
    pub fn radial_field(&self, c: f64) -> TangentField {
        TangentField {
            vectors: (0..self.len()).map(|_| TangentVector::new(c, Ambient::zeros())).collect(),
        }
    }

    /// The Reeb field `c·R(x)` along this loop.
    pub fn reeb_field(&self, c: f64) -> TangentField {
        TangentField {
            vectors: self
                .points
                .iter()
                .map(|p| TangentVector::new(0.0, self.model.reeb(&p.z) * c))
                .collect(),
        }
    }
}

impl TangentField {
    pub fn new(vectors: Vec<TangentVector>) -> Self {
        TangentField { vectors }
    }

    pub fn zeros(n: usize) -> Self {
        TangentField {
            vectors: alloc::vec![TangentVector::ZERO; n],
        }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, TangentVector> {
        self.vectors.iter()
    }

    pub fn vectors(&self) -> &[TangentVector] {
        &self.vectors
    }

    pub fn into_vectors(self) -> Vec<TangentVector> {
        self.vectors
    }

    /// `max_k ‖v̂_k‖` in the ambient norm.
    pub fn sup_norm(&self) -> f64 {
        self.vectors.iter().map(|u| u.norm()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, c: f64) -> Self {
        TangentField {
            vectors: self.vectors.iter().map(|u| u.scaled(c)).collect(),
        }
    }

    /// `self + c·other`.
    pub fn add_scaled(&self, other: &TangentField, c: f64) -> Self {
        TangentField {
            vectors: self
                .vectors
                .iter()
                .zip(other.vectors.iter())
                .map(|(a, b)| a.plus(&b.scaled(c)))
                .collect(),
        }
    }

    /// Length and pointwise tangency against `base`.
    pub fn check_base(&self, base: &DiscreteLoop) -> Result<()> {
        if self.len() != base.len() {
            return Err(Error::BaseMismatch);
        }
        if base.model() == Model::Sphere3 {
            for (p, u) in base.points().iter().zip(self.iter()) {
                if p.z.coords().dot(&u.w).abs() > TANGENCY_TOL {
                    return Err(Error::BaseMismatch);
                }
            }
        }
        Ok(())
    }
}

/// Pointwise value of the on-manifold invariant for a whole loop.
pub fn max_manifold_residual(v: &DiscreteLoop) -> f64 {
    v.points()
        .iter()
        .map(|p: &SymplPoint| v.model().manifold_residual(&p.z))
        .fold(0.0, f64::max)
}

#[cfg(test)]
pub(crate) fn sigma(model: Model, coords: Ambient) -> crate::contact::SigmaPoint {
    model.retract(&coords).expect("nonzero coordinates")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::j0;
    use core::f64::consts::PI;
    use nalgebra::Vector4;

    fn hopf_orbit(n: usize, k: f64) -> DiscreteLoop {
        let z0 = Vector4::new(1.0, 0.0, 0.0, 0.0);
        DiscreteLoop::from_fn(Model::Sphere3, n, |t| {
            let a = 2.0 * PI * k * t;
            (0.0, z0 * a.cos() + j0(&z0) * a.sin())
        })
        .unwrap()
    }

    fn circle(n: usize, m: f64, r: impl Fn(f64) -> f64) -> DiscreteLoop {
        DiscreteLoop::from_fn(Model::Cylinder1, n, |t| (r(t), Vector4::new(2.0 * PI * m * t, 0.0, 0.0, 0.0))).unwrap()
    }

    #[test]
    fn rejects_bad_sample_counts() {
        let pts = alloc::vec![
            SymplPoint {
                r: 0.0,
                z: sigma(Model::Sphere3, Vector4::new(1.0, 0.0, 0.0, 0.0))
            };
            7
        ];
        assert!(DiscreteLoop::new(Model::Sphere3, pts.clone()).is_err());
        assert!(DiscreteLoop::new(Model::Sphere3, pts[..6].to_vec()).is_err());
    }

    #[test]
    fn d_dt_constant_loop_is_zero() {
        let v = hopf_orbit(16, 0.0);
        assert_eq!(v.d_dt().sup_norm(), 0.0);
    }

    #[test]
    fn d_dt_on_reeb_orbit() {
        let n = 256;
        let v = hopf_orbit(n, 1.0);
        let dv = v.d_dt();
        let bound = (2.0 * PI).powi(3) / (6.0 * (n * n) as f64) * 1.01;
        for (p, u) in v.points().iter().zip(dv.iter()) {
            let exact = j0(p.z.coords()) * (2.0 * PI);
            assert!(u.dr.abs() < 1e-15);
            assert!((u.w - exact).norm() <= bound);
        }
    }

    #[test]
    fn d_dt_exact_on_linear_circle_loop() {
        let v = circle(32, 1.0, |_| 0.0);
        for u in v.d_dt().iter() {
            assert!(u.dr == 0.0 && (u.w[0] - 2.0 * PI).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_exp_r_examples() {
        assert_eq!(circle(8, 0.0, |_| 0.0).mean_exp_r(), 1.0);
        assert!((circle(8, 0.0, |_| 3f64.ln()).mean_exp_r() - 3.0).abs() < 1e-15);
        let ln2 = 2f64.ln();
        let pts: Vec<_> = (0..16)
            .map(|k| SymplPoint {
                r: if k % 2 == 0 { ln2 } else { -ln2 },
                z: sigma(Model::Sphere3, Vector4::new(0.0, 0.0, 1.0, 0.0)),
            })
            .collect();
        let v = DiscreteLoop::new(Model::Sphere3, pts).unwrap();
        assert!((v.mean_exp_r() - 1.25).abs() < 1e-15);
        let p = v.project_pi();
        for (a, b) in v.r().zip(p.r()) {
            assert!((a - b - 1.25f64.ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn area_examples() {
        assert_eq!(hopf_orbit(16, 0.0).area(), 0.0);
        assert!((hopf_orbit(256, 1.0).area() + 2.0 * PI).abs() < 1e-3);
        for m in [1.0, 2.0, -1.0] {
            assert!((circle(64, m, |_| 0.0).area() + 2.0 * PI * m).abs() < 1e-12);
        }
    }

    #[test]
    fn l2_inner_examples() {
        let v = circle(16, 1.0, |_| 0.0);
        let z = TangentField::zeros(16);
        assert_eq!(v.l2_inner(&z, &z).unwrap(), 0.0);
        let dr = v.radial_field(1.0);
        assert!((v.l2_inner(&dr, &dr).unwrap() - 1.0).abs() < 1e-15);
        let w = hopf_orbit(16, 1.0).shift_r(2f64.ln());
        let reeb = w.reeb_field(1.0);
        assert!((w.l2_inner(&reeb, &reeb).unwrap() - 2.0).abs() < 1e-14);
        assert!(matches!(v.l2_inner(&TangentField::zeros(8), &z), Err(Error::BaseMismatch)));
    }

    #[test]
    fn projection_examples() {
        let v = hopf_orbit(16, 1.0).shift_r(0.7);
        let p = v.project_pi();
        assert!(p.r().all(|r| r.abs() < 1e-15));
        assert!(p.points().iter().zip(v.points()).all(|(a, b)| a.z == b.z));
        let q = hopf_orbit(16, 1.0);
        assert_eq!(q.project_pi(), q);
        assert_eq!(q.constraint_residual(), 0.0);
        assert!((q.shift_r(2f64.ln()).constraint_residual() - 1.0).abs() < 1e-15);
    }
}
