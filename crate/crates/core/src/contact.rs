//! Concrete contact manifolds and the SFT-like structure on their symplectization.
//!
//! `Σ` is stored extrinsically: the round `S³ ⊂ ℝ⁴` with `λ_z(v) = ⟨J₀z, v⟩`,
//! or the circle `ℝ/2πℤ` with `λ = dθ`. Points and tangent vectors of `Σ`
//! always travel as [`Ambient`] 4-vectors; the circle uses the first slot.

use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use alloc::string::ToString;
use nalgebra::Vector4;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type Ambient = Vector4<f64>;

/// Inputs whose tangency residual exceeds this are rejected.
pub const TANGENCY_TOL: f64 = 1e-8;
/// Model identities (`λ(R) = 1`, `dλ(R,·) = 0`, ...) are asserted at this level.
pub const IDENTITY_TOL: f64 = 1e-10;

const TAU: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Model {
    /// Unit sphere in `ℝ⁴ = ℂ²` with the standard contact form.
    Sphere3,
    /// `ℝ/2πℤ` with `λ = dθ`. Degenerate (`ξ = 0`) but solvable by hand.
    Cylinder1,
}

impl Model {
    pub const ALL: [Model; 2] = [Model::Sphere3, Model::Cylinder1];

    pub fn id(self) -> &'static str {
        match self {
            Model::Sphere3 => "s3",
            Model::Cylinder1 => "cyl",
        }
    }

    /// Number of ambient coordinates used by a point of `Σ`.
    pub fn dim(self) -> usize {
        match self {
            Model::Sphere3 => 4,
            Model::Cylinder1 => 1,
        }
    }

    /// Dimension of `Σ`.
    pub fn tangent_dim(self) -> usize {
        match self {
            Model::Sphere3 => 3,
            Model::Cylinder1 => 1,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "s3" => Ok(Model::Sphere3),
            "cyl" => Ok(Model::Cylinder1),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// A point of `Σ` in ambient coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SigmaPoint(Ambient);

impl SigmaPoint {
    /// Wraps ambient coordinates without checking them; use [`Model::retract`]
    /// for arbitrary input.
    pub fn new_unchecked(coords: Ambient) -> Self {
        SigmaPoint(coords)
    }

    pub fn coords(&self) -> &Ambient {
        &self.0
    }

    /// Angle of a circle point.
    pub fn angle(&self) -> f64 {
        self.0[0]
    }
}

/// A point `(r, z)` of the symplectization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymplPoint {
    pub r: f64,
    pub z: SigmaPoint,
}

/// Tangent vector `dr·∂_r + w` with `w` tangent to `Σ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVector {
    pub dr: f64,
    pub w: Ambient,
}

impl TangentVector {
    pub const ZERO: TangentVector = TangentVector {
        dr: 0.0,
        w: Vector4::new(0.0, 0.0, 0.0, 0.0),
    };

    pub fn new(dr: f64, w: Ambient) -> Self {
        TangentVector { dr, w }
    }

    pub fn norm_squared(&self) -> f64 {
        self.dr * self.dr + self.w.norm_squared()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        TangentVector {
            dr: c * self.dr,
            w: self.w * c,
        }
    }

    pub fn plus(&self, other: &TangentVector) -> Self {
        TangentVector {
            dr: self.dr + other.dr,
            w: self.w + other.w,
        }
    }
}

/// Standard complex structure on `ℂ² = ℝ⁴`, `(x₁,y₁,x₂,y₂) ↦ (−y₁,x₁,−y₂,x₂)`.
#[inline]
pub fn j0(v: &Ambient) -> Ambient {
    Vector4::new(-v[1], v[0], -v[3], v[2])
}

/// Quaternionic `j`, anticommuting with [`j0`]; `{J₀z, Kz, J₀Kz}` frames `T_zS³`.
#[inline]
fn quat_k(v: &Ambient) -> Ambient {
    Vector4::new(-v[2], v[3], v[0], -v[1])
}

/// Representative of an angle difference in `(−π, π]`.
#[inline]
pub fn wrap_angle(d: f64) -> f64 {
    d - TAU * (d / TAU).round()
}

impl Model {
    /// Tangency residual of `w` at `z`.
    fn tangency_residual(self, z: &SigmaPoint, w: &Ambient) -> f64 {
        match self {
            Model::Sphere3 => z.0.dot(w).abs(),
            Model::Cylinder1 => w[1].abs() + w[2].abs() + w[3].abs(),
        }
    }

    fn check_tangent(self, z: &SigmaPoint, w: &Ambient) -> Result<()> {
        let residual = self.tangency_residual(z, w);
        if residual > TANGENCY_TOL || !residual.is_finite() {
            return Err(Error::NonTangent { residual });
        }
        Ok(())
    }

    /// `λ_z(w)`.
    pub fn lambda(self, z: &SigmaPoint, w: &Ambient) -> Result<f64> {
        self.check_tangent(z, w)?;
        Ok(self.lambda_unchecked(z, w))
    }

    #[inline]
    pub(crate) fn lambda_unchecked(self, z: &SigmaPoint, w: &Ambient) -> f64 {
        match self {
            Model::Sphere3 => j0(&z.0).dot(w),
            Model::Cylinder1 => w[0],
        }
    }

    /// The Reeb field `R(z)`.
    #[inline]
    pub fn reeb(self, z: &SigmaPoint) -> Ambient {
        match self {
            Model::Sphere3 => j0(&z.0),
            Model::Cylinder1 => Vector4::new(1.0, 0.0, 0.0, 0.0),
        }
    }

    /// `dλ_z(u, w)`; `2⟨J₀u, w⟩` on the sphere, identically zero on the circle.
    pub fn dlambda(self, z: &SigmaPoint, u: &Ambient, w: &Ambient) -> Result<f64> {
        self.check_tangent(z, u)?;
        self.check_tangent(z, w)?;
        Ok(self.dlambda_unchecked(u, w))
    }

    #[inline]
    pub(crate) fn dlambda_unchecked(self, u: &Ambient, w: &Ambient) -> f64 {
        match self {
            Model::Sphere3 => 2.0 * j0(u).dot(w),
            Model::Cylinder1 => 0.0,
        }
    }

    /// SFT-like almost complex structure: `∂_r ↦ R`, `R ↦ −∂_r`, `J₀` on `ξ`.
    /// Does not look at `p.r`.
    #[inline]
    pub fn apply_j(self, p: &SymplPoint, u: &TangentVector) -> TangentVector {
        match self {
            Model::Sphere3 => {
                let reeb = j0(&p.z.0);
                let b = reeb.dot(&u.w);
                let xi = u.w - reeb * b;
                TangentVector {
                    dr: -b,
                    w: reeb * u.dr + j0(&xi),
                }
            }
            Model::Cylinder1 => TangentVector {
                dr: -u.w[0],
                w: Vector4::new(u.dr, 0.0, 0.0, 0.0),
            },
        }
    }

    /// `ω = d(eʳλ) = eʳ(dr∧λ + dλ)`.
    #[inline]
    pub fn omega(self, p: &SymplPoint, u: &TangentVector, w: &TangentVector) -> f64 {
        let lu = self.lambda_unchecked(&p.z, &u.w);
        let lw = self.lambda_unchecked(&p.z, &w.w);
        p.r.exp() * (u.dr * lw - w.dr * lu + self.dlambda_unchecked(&u.w, &w.w))
    }

    /// Map an ambient point back onto `Σ`.
    pub fn retract(self, ambient: &Ambient) -> Result<SigmaPoint> {
        match self {
            Model::Sphere3 => {
                let n = ambient.norm();
                if n == 0.0 || !n.is_finite() {
                    return Err(Error::DegenerateRetraction);
                }
                Ok(SigmaPoint(ambient / n))
            }
            Model::Cylinder1 => {
                let theta = ambient[0];
                if !theta.is_finite() {
                    return Err(Error::DegenerateRetraction);
                }
                let mut t = theta - TAU * (theta / TAU).floor();
                if t >= TAU {
                    t -= TAU;
                }
                Ok(SigmaPoint(Vector4::new(t, 0.0, 0.0, 0.0)))
            }
        }
    }

    /// Orthogonal projection onto `T_zΣ`.
    #[inline]
    pub fn project_tangent(self, z: &SigmaPoint, ambient: &Ambient) -> Ambient {
        match self {
            Model::Sphere3 => ambient - z.0 * z.0.dot(ambient),
            Model::Cylinder1 => Vector4::new(ambient[0], 0.0, 0.0, 0.0),
        }
    }

    /// Move `z` by the tangent vector `w` and retract.
    pub fn step(self, z: &SigmaPoint, w: &Ambient) -> Result<SigmaPoint> {
        self.retract(&(z.0 + w))
    }

    /// Orthonormal frame of `T_zΣ`; only the first [`Model::tangent_dim`] entries are meaningful.
    #[inline]
    pub fn frame(self, z: &SigmaPoint) -> [Ambient; 3] {
        match self {
            Model::Sphere3 => {
                let k = quat_k(&z.0);
                [j0(&z.0), k, j0(&k)]
            }
            Model::Cylinder1 => [Vector4::new(1.0, 0.0, 0.0, 0.0), Ambient::zeros(), Ambient::zeros()],
        }
    }

    /// Ambient displacement `b − a`, with angle wrapping on the circle.
    #[inline]
    pub fn displacement(self, a: &SigmaPoint, b: &SigmaPoint) -> Ambient {
        match self {
            Model::Sphere3 => b.0 - a.0,
            Model::Cylinder1 => Vector4::new(wrap_angle(b.0[0] - a.0[0]), 0.0, 0.0, 0.0),
        }
    }

    /// Ambient Euclidean distance (arc distance on the circle).
    pub fn distance(self, a: &SigmaPoint, b: &SigmaPoint) -> f64 {
        self.displacement(a, b).norm()
    }

    /// Residual of the on-manifold invariant.
    pub fn manifold_residual(self, z: &SigmaPoint) -> f64 {
        match self {
            Model::Sphere3 => (z.0.norm() - 1.0).abs(),
            Model::Cylinder1 => {
                let t = z.0[0];
                if (0.0..TAU).contains(&t) {
                    z.0[1].abs() + z.0[2].abs() + z.0[3].abs()
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Random point of `Σ` (not uniformly distributed on the sphere; it does not need to be).
    pub fn random_point<R: Rng>(self, rng: &mut R) -> SigmaPoint {
        match self {
            Model::Sphere3 => loop {
                let v = Vector4::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                if v.norm() > 1e-3 {
                    return SigmaPoint(v / v.norm());
                }
            },
            Model::Cylinder1 => SigmaPoint(Vector4::new(rng.random_range(0.0..TAU), 0.0, 0.0, 0.0)),
        }
    }

    /// Random tangent vector of `Σ` at `z` with ambient entries of order one.
    pub fn random_tangent<R: Rng>(self, z: &SigmaPoint, rng: &mut R) -> Ambient {
        let v = Vector4::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        self.project_tangent(z, &v)
    }

    /// Sample the defining identities at `n_samples` seeded random points.
    pub fn validate(self, n_samples: usize, rng_seed: u64) -> ValidationReport {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut report = ValidationReport {
            model: self,
            samples: n_samples,
            max_lambda_reeb_residual: 0.0,
            max_dlambda_reeb: 0.0,
            max_j_squared_residual: 0.0,
            min_compatibility: f64::INFINITY,
        };
        for _ in 0..n_samples {
            let z = self.random_point(&mut rng);
            let p = SymplPoint {
                r: rng.random_range(-3.0..3.0),
                z,
            };
            let reeb = self.reeb(&z);
            let w = self.random_tangent(&z, &mut rng);
            let u = TangentVector::new(rng.random_range(-1.0..1.0), self.random_tangent(&z, &mut rng));

            let lr = self.lambda_unchecked(&z, &reeb);
            report.max_lambda_reeb_residual = report.max_lambda_reeb_residual.max((lr - 1.0).abs());
            let dl = self.dlambda_unchecked(&reeb, &w);
            report.max_dlambda_reeb = report.max_dlambda_reeb.max(dl.abs());

            let ju = self.apply_j(&p, &u);
            let jju = self.apply_j(&p, &ju);
            report.max_j_squared_residual = report.max_j_squared_residual.max(jju.plus(&u).norm());

            let n2 = u.norm_squared();
            if n2 > 0.0 {
                let ratio = self.omega(&p, &u, &ju) / n2;
                report.min_compatibility = report.min_compatibility.min(ratio);
            }
        }
        report
    }
}

/// Worst-case residuals of the model identities over random samples.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub model: Model,
    pub samples: usize,
    /// `max |λ(R) − 1|`
    pub max_lambda_reeb_residual: f64,
    /// `max |dλ(R, w)|`
    pub max_dlambda_reeb: f64,
    /// `max ‖J²u + u‖`
    pub max_j_squared_residual: f64,
    /// `min ω(u, Ju)/‖u‖²`
    pub min_compatibility: f64,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.max_lambda_reeb_residual <= IDENTITY_TOL
            && self.max_dlambda_reeb <= IDENTITY_TOL
            && self.max_j_squared_residual <= IDENTITY_TOL
            && self.min_compatibility > 0.0
    }
}
