//! Rigid-body transformation algebra on SE(3).
//!
//! A transformation is stored as a rotation matrix plus a translation vector
//! (the homogeneous 4x4 operator with last row `0 0 0 1`). The screw
//! parameterization `(axis, angle, velocity)` supports the logarithm, the
//! exponential and the fractional matrix power `τ^u`, which is the backbone
//! of correction interpolation: the rotation is scaled to `θu` about the
//! fixed axis and the translation becomes `G(θu) G⁻¹(θ) p`, where `G` is the
//! twist gain
//!
//! ```text
//! G(θ) = Iθ + (1 − cos θ)[ω] + (θ − sin θ)[ω]²
//! ```
//!
//! The product `G(θu) G⁻¹(θ)` is evaluated in closed form on the basis
//! `{I, [ω], [ω]²}`; its scalar coefficients degenerate to 0/0 at `θ = 0`,
//! so below [`TAYLOR_SWITCH`] they are replaced by Taylor expansions whose
//! truncation error at the switch point is far below the working tolerance.
//! Pure translations bypass the screw machinery entirely and obey
//! `(I, p)^u = (I, pu)` exactly.

use nalgebra::{Matrix3, Matrix4, Vector3};
use thiserror::Error;

/// Angle below which the gain-product coefficients use their Taylor
/// expansions. At `1e-3` rad the truncation error is O(1e-12).
pub const TAYLOR_SWITCH: f64 = 1e-3;

/// Angle below which a rotation is treated as the identity and the
/// transform takes the pure-translation branch.
const THETA_IDENTITY: f64 = 1e-12;

/// `sin θ` below this switches axis extraction to the `(R + I)` column
/// method (θ near π).
const NEAR_PI_SIN: f64 = 1e-6;

/// Margin below π inside which the axis sign is ambiguous; transforms this
/// close to a half-turn are flagged for diagnostics.
pub const NEAR_PI_MARGIN: f64 = 1e-3;

/// Frobenius deviation of `RᵀR` from `I` beyond which an input rotation is
/// rejected.
const ORTHONORMAL_INPUT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum Se3Error {
    #[error("rotation input is not orthonormal (deviation {0:.3e})")]
    NonOrthonormalInput(f64),
    #[error("rotation axis is not a unit vector (norm {0:.6})")]
    NonUnitAxis(f64),
    #[error("transform contains non-finite entries")]
    NonFinite,
}

/// A rigid-body transformation: orthonormal rotation `R` and translation `p`
/// in meters. Immutable value type; all operations are pure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a validated transform: `R` must be orthonormal with
    /// `det R = +1` within 1e-9 and all entries finite.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, Se3Error> {
        if !rotation.iter().all(|v| v.is_finite()) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Se3Error::NonFinite);
        }
        let dev = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        let det_dev = (rotation.determinant() - 1.0).abs();
        if dev > 1e-9 || det_dev > 1e-9 {
            return Err(Se3Error::NonOrthonormalInput(dev.max(det_dev)));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Constructs from parts that are known valid (library-internal results
    /// such as Rodrigues outputs or orthogonalized fits).
    pub(crate) fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        debug_assert!(
            (rotation.transpose() * rotation - Matrix3::identity()).norm() < 1e-7,
            "from_parts got a non-orthonormal rotation"
        );
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` about the z axis at position `p` — the common
    /// planar case.
    pub fn from_yaw(angle: f64, translation: Vector3<f64>) -> Self {
        let (s, c) = angle.sin_cos();
        let rotation = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        Self {
            rotation,
            translation,
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Maps a point: `R q + p`.
    pub fn apply(&self, q: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * q + self.translation
    }

    /// The homogeneous 4x4 form with last row `0 0 0 1`.
    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Rotation angle in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        let v = skew_vector(&self.rotation);
        v.norm().atan2(c)
    }

    /// True when the rotation angle is within [`NEAR_PI_MARGIN`] of π, where
    /// the logarithm's axis sign is ambiguous. Such transforms are resolved
    /// deterministically but callers may want to flag them.
    pub fn near_half_turn(&self) -> bool {
        self.rotation_angle() > std::f64::consts::PI - NEAR_PI_MARGIN
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.iter().all(|v| v.is_finite()) && self.translation.iter().all(|v| v.is_finite())
    }

    /// The matrix power `τ^u`: rotation angle scaled to `θu` about the same
    /// axis, translation `G(θu) G⁻¹(θ) p`. `pow(τ, 1) = τ`, `pow(τ, 0) = I`;
    /// pure translations satisfy `(I, p)^u = (I, pu)` exactly.
    ///
    /// Values of `u` outside `[0, 1]` are permitted and `θu` is not wrapped;
    /// callers must keep `|θu| ≤ π` for the result to stay on the same screw.
    pub fn pow(&self, u: f64) -> Self {
        InterpolationPrecompute::new(self).pow(u)
    }

    /// Screw logarithm of the transform.
    pub fn log(&self) -> Twist {
        let aa = rotation_log(&self.rotation).expect("valid transform has orthonormal rotation");
        if aa.is_identity() {
            return Twist {
                axis: Vector3::zeros(),
                angle: 0.0,
                velocity: self.translation,
            };
        }
        let k = skew(&aa.axis);
        let velocity = gain_inverse(aa.angle, &k) * self.translation;
        Twist {
            axis: aa.axis,
            angle: aa.angle,
            velocity,
        }
    }
}

impl std::ops::Mul for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        self.compose(rhs)
    }
}

/// Axis-angle decomposition of a rotation. A zero `axis` marks the
/// pure-translation branch (θ ≈ 0), where the axis is unconstrained.
#[derive(Debug, Clone, Copy)]
pub struct AxisAngle {
    pub axis: Vector3<f64>,
    pub angle: f64,
}

impl AxisAngle {
    pub fn is_identity(&self) -> bool {
        self.axis == Vector3::zeros()
    }
}

/// Screw parameterization: unit rotation axis `ω`, angle `θ ∈ [0, π]` and
/// velocity `v` (meters per radian). When `θ = 0` the axis is zero and
/// `velocity` holds the full translation (pure-translation marker).
#[derive(Debug, Clone, Copy)]
pub struct Twist {
    pub axis: Vector3<f64>,
    pub angle: f64,
    pub velocity: Vector3<f64>,
}

impl Twist {
    pub fn is_pure_translation(&self) -> bool {
        self.axis == Vector3::zeros()
    }

    /// Exponential back to the group.
    pub fn exp(&self) -> RigidTransform {
        if self.is_pure_translation() {
            return RigidTransform::from_translation(self.velocity);
        }
        let k = skew(&self.axis);
        let rotation = rodrigues_from_skew(self.angle, &k, &(k * k));
        let translation = twist_gain(self.angle, &k) * self.velocity;
        RigidTransform::from_parts(rotation, translation)
    }
}

/// Skew-symmetric matrix `[ω]` with `[ω] a = ω × a`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// The vector of the antisymmetric part of `R`: `(R − Rᵀ)/2` stacked; its
/// norm equals `sin θ`.
fn skew_vector(r: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        (r[(2, 1)] - r[(1, 2)]) / 2.0,
        (r[(0, 2)] - r[(2, 0)]) / 2.0,
        (r[(1, 0)] - r[(0, 1)]) / 2.0,
    )
}

/// Rotation logarithm: recovers `(axis, angle)` with `angle ∈ [0, π]`.
///
/// A zero axis marks θ ≈ 0 (pure-translation branch). Near θ = π the axis is
/// taken from the largest-norm column of `R + I` with a deterministic sign.
pub fn rotation_log(r: &Matrix3<f64>) -> Result<AxisAngle, Se3Error> {
    let dev = (r.transpose() * r - Matrix3::identity()).norm();
    if dev > ORTHONORMAL_INPUT_TOL || r.determinant() < 0.0 {
        return Err(Se3Error::NonOrthonormalInput(dev));
    }
    let v = skew_vector(r);
    let s = v.norm();
    let c = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = s.atan2(c);

    if angle < THETA_IDENTITY {
        return Ok(AxisAngle {
            axis: Vector3::zeros(),
            angle: 0.0,
        });
    }
    let axis = if s > NEAR_PI_SIN {
        v / s
    } else {
        // θ ≈ π: R + I ≈ 2ωωᵀ, any nonzero column is parallel to the axis.
        let b = r + Matrix3::identity();
        let norms = [b.column(0).norm(), b.column(1).norm(), b.column(2).norm()];
        let best = (0..3)
            .max_by(|&a, &bi| norms[a].total_cmp(&norms[bi]))
            .unwrap();
        let mut axis = b.column(best) / norms[best];
        // Deterministic sign: align with the antisymmetric part when it is
        // informative, otherwise make the largest component positive.
        if s > 0.0 && axis.dot(&v) < 0.0 {
            axis = -axis;
        } else if s == 0.0 {
            let lead = (0..3).max_by(|&a, &bi| axis[a].abs().total_cmp(&axis[bi].abs())).unwrap();
            if axis[lead] < 0.0 {
                axis = -axis;
            }
        }
        axis.into()
    };
    Ok(AxisAngle { axis, angle })
}

/// Rodrigues formula `R = I + sin θ [ω] + (1 − cos θ)[ω]²` for a unit axis.
pub fn rodrigues(axis: &Vector3<f64>, angle: f64) -> Result<Matrix3<f64>, Se3Error> {
    let n = axis.norm();
    if (n - 1.0).abs() > 1e-6 {
        return Err(Se3Error::NonUnitAxis(n));
    }
    let k = skew(axis);
    Ok(rodrigues_from_skew(angle, &k, &(k * k)))
}

fn rodrigues_from_skew(angle: f64, k: &Matrix3<f64>, k2: &Matrix3<f64>) -> Matrix3<f64> {
    Matrix3::identity() + k * angle.sin() + k2 * (1.0 - angle.cos())
}

/// Twist gain `G(θ) = Iθ + (1 − cos θ)[ω] + (θ − sin θ)[ω]²`.
pub fn twist_gain(angle: f64, skew_m: &Matrix3<f64>) -> Matrix3<f64> {
    Matrix3::identity() * angle
        + skew_m * (1.0 - angle.cos())
        + skew_m * skew_m * (angle - angle.sin())
}

/// Closed-form inverse of the twist gain,
/// `G⁻¹(θ) = I/θ − [ω]/2 + (1/θ − 1/(2 tan(θ/2)))[ω]²`. Singular at θ = 0;
/// callers take the pure-translation branch there instead.
pub fn gain_inverse(angle: f64, skew_m: &Matrix3<f64>) -> Matrix3<f64> {
    let half_tan = (angle / 2.0).tan();
    Matrix3::identity() / angle - skew_m / 2.0
        + skew_m * skew_m * (1.0 / angle - 1.0 / (2.0 * half_tan))
}

/// The product `G(θu) G⁻¹(θ)` on the basis `{I, [ω], [ω]²}`:
///
/// ```text
/// Iu + [A(θ,u) − sin(θu)/2] [ω] + [u − (1 − cos(θu))/2 − B(θ,u)] [ω]²
/// A = (1 − cos θu) / (2 tan(θ/2)),   B = sin θu / (2 tan(θ/2))
/// ```
///
/// For `θ` below [`TAYLOR_SWITCH`], `A` and `B` are replaced by their Taylor
/// expansions at θ = 0, which keeps the product continuous across the switch.
pub fn gain_product(angle: f64, u: f64, skew_m: &Matrix3<f64>) -> Matrix3<f64> {
    let tu = angle * u;
    let (a, b) = if angle < TAYLOR_SWITCH {
        let a = 0.5 * u * u * angle - (u * u + u.powi(4)) * angle.powi(3) / 24.0;
        let b = u - (u / 12.0 + u.powi(3) / 6.0) * angle * angle;
        (a, b)
    } else {
        let denom = 2.0 * (angle / 2.0).tan();
        ((1.0 - tu.cos()) / denom, tu.sin() / denom)
    };
    let c1 = a - tu.sin() / 2.0;
    let c2 = u - (1.0 - tu.cos()) / 2.0 - b;
    Matrix3::identity() * u + skew_m * c1 + skew_m * skew_m * c2
}

/// Cached screw decomposition of a fixed base transform, for taking many
/// powers of the same transform cheaply. `pow(1)` reproduces the base.
#[derive(Debug, Clone)]
pub struct InterpolationPrecompute {
    axis: Vector3<f64>,
    angle: f64,
    skew: Matrix3<f64>,
    skew_sq: Matrix3<f64>,
    translation: Vector3<f64>,
    pure_translation: bool,
}

impl InterpolationPrecompute {
    pub fn new(base: &RigidTransform) -> Self {
        let aa = rotation_log(&base.rotation).expect("valid transform has orthonormal rotation");
        if aa.is_identity() {
            Self {
                axis: Vector3::zeros(),
                angle: 0.0,
                skew: Matrix3::zeros(),
                skew_sq: Matrix3::zeros(),
                translation: base.translation,
                pure_translation: true,
            }
        } else {
            let k = skew(&aa.axis);
            Self {
                axis: aa.axis,
                angle: aa.angle,
                skew: k,
                skew_sq: k * k,
                translation: base.translation,
                pure_translation: false,
            }
        }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn axis(&self) -> Vector3<f64> {
        self.axis
    }

    pub fn is_pure_translation(&self) -> bool {
        self.pure_translation
    }

    pub fn pow(&self, u: f64) -> RigidTransform {
        if self.pure_translation {
            return RigidTransform::from_translation(self.translation * u);
        }
        let rotation = rodrigues_from_skew(self.angle * u, &self.skew, &self.skew_sq);
        let translation = gain_product(self.angle, u, &self.skew) * self.translation;
        RigidTransform::from_parts(rotation, translation)
    }
}

/// Power interpolation `τ_u = a^(1−u) · b^u`; `u = 0` gives `a`, `u = 1`
/// gives `b`.
pub fn interpolate(a: &RigidTransform, b: &RigidTransform, u: f64) -> RigidTransform {
    a.pow(1.0 - u).compose(&b.pow(u))
}
