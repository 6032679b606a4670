//! Noise measures, the game constants they induce, and sampling of the
//! rotated/scaled push-forward `mu_v`.
//!
//! A noise measure is a mean-zero, compactly supported probability measure on
//! R^d that is invariant under orthogonal maps fixing `e1`. Its covariance is
//! therefore `diag(C11, C22, ..., C22)`, and those two numbers determine the
//! exponent `p`, its conjugate `q` and the normalization `beta` of the game.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::GameRng;
use crate::vector::Vector;

/// Tolerance for validating user-supplied atom lists.
pub const ATOM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),
    #[error("dimension {0} exceeds the supported maximum")]
    DimensionTooLarge(usize),
    #[error("atom list is empty")]
    NoAtoms,
    #[error("atom {index} has non-positive weight {weight}")]
    NonPositiveWeight { index: usize, weight: f64 },
    #[error("atom {index} has dimension {got}, expected {expected}")]
    AtomDimension {
        index: usize,
        got: usize,
        expected: usize,
    },
    #[error("total weight is {total}, not 1 (normalization violated)")]
    NotNormalized { total: f64 },
    #[error("mean is not zero: coordinate {coordinate} has mean {mean}")]
    NonZeroMean { coordinate: usize, mean: f64 },
    #[error("measure is not axially symmetric about e1: {reason}")]
    NotAxiallySymmetric { reason: String },
    #[error("sphere radius must be finite and non-negative, got {0}")]
    InvalidRadius(f64),
    #[error("undefined rotation target: the zero vector")]
    ZeroRotationTarget,
    #[error("alternating-turn constants are undefined for a measure with zero covariance")]
    DegenerateAlternating,
}

/// One atom of a finitely supported noise measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: Vector,
    pub weight: f64,
}

impl Atom {
    pub fn new(point: Vector, weight: f64) -> Self {
        Self { point, weight }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseKind {
    /// The Dirac mass at the origin: tug of war without noise.
    PointMass,
    /// A finite list of weighted atoms.
    Atoms(Vec<Atom>),
    /// Uniform distribution on the radius-`radius` sphere inside the
    /// hyperplane orthogonal to `e1`. In d = 2 this is the two-point measure
    /// on `(0, +-radius)`.
    UniformSphereOrthogonal { radius: f64 },
}

/// A validated noise measure together with its covariance and support radius.
#[derive(Debug, Clone)]
pub struct NoiseMeasure {
    dim: usize,
    kind: NoiseKind,
    covariance: DMatrix<f64>,
    support_radius: f64,
    cumulative: Vec<f64>,
}

/// Whether players toss a coin each turn or alternate (player I first).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TurnMode {
    Random,
    Alternating,
}

/// Constants derived from a noise measure's covariance.
///
/// `p` may be `f64::INFINITY` (no orthogonal variance), in which case `q = 1`.
/// In alternating mode a measure without parallel variance gives `p = 1`,
/// `q = INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameConstants {
    pub p: f64,
    pub q: f64,
    pub beta: f64,
    pub alpha: f64,
    pub turn_mode: TurnMode,
}

impl GameConstants {
    #[inline]
    pub fn p_inv(&self) -> f64 {
        if self.p.is_infinite() {
            0.0
        } else {
            1.0 / self.p
        }
    }

    #[inline]
    pub fn q_inv(&self) -> f64 {
        if self.q.is_infinite() {
            0.0
        } else {
            1.0 / self.q
        }
    }

    /// True when `p` lies in the open interval `(1, inf)` where the
    /// p-harmonic limit theory applies.
    pub fn has_finite_exponent(&self) -> bool {
        self.p.is_finite() && self.p > 1.0
    }
}

/// `Psi = |v| R` with `R` orthonormal and `Psi e1 = v`.
///
/// `R` is the rotation in the plane spanned by `e1` and `v/|v|` (identity
/// when `v` is a positive multiple of `e1`). For targets in the half-space
/// `v_1 < 0` it is composed with the half-turn in the `(e1, e2)` plane so that
/// the construction stays well conditioned near `-e1`.
#[derive(Debug, Clone, Copy)]
pub struct RotationScale {
    v: Vector,
    scale: f64,
    unit: Vector,
    /// +1: rotate from e1; -1: half-turn first, then rotate from -e1.
    base_sign: f64,
    /// cosine between the base axis and `unit`, always >= 0.
    cos: f64,
}

impl RotationScale {
    pub fn target(&self) -> Vector {
        self.v
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Applies the orthonormal part `R` to `a`.
    #[inline]
    pub fn rotate(&self, a: &Vector) -> Vector {
        let mut w = *a;
        if self.base_sign < 0.0 {
            w[0] = -w[0];
            if w.dim() > 1 {
                w[1] = -w[1];
            }
        }
        // K w = u (f.w) - f (u.w) where f = base_sign * e1, u = unit.
        let f_dot = |x: &Vector| self.base_sign * x[0];
        let k = |x: &Vector| -> Vector {
            let mut out = self.unit * f_dot(x);
            out[0] -= self.base_sign * self.unit.dot(x);
            out
        };
        let kw = k(&w);
        let kkw = k(&kw);
        w + kw + kkw * (1.0 / (1.0 + self.cos))
    }

    /// Applies `Psi = |v| R` to `a`.
    #[inline]
    pub fn apply(&self, a: &Vector) -> Vector {
        self.rotate(a) * self.scale
    }

    /// Dense `Psi` matrix (columns are the images of the basis vectors).
    pub fn matrix(&self) -> DMatrix<f64> {
        let d = self.v.dim();
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            let col = self.apply(&Vector::basis(d, j));
            for i in 0..d {
                m[(i, j)] = col[i];
            }
        }
        m
    }
}

/// Builds `Psi` with `Psi e1 = v`.
pub fn rotation_to(v: &Vector) -> Result<RotationScale, NoiseError> {
    let scale = v.norm();
    if scale == 0.0 || !scale.is_finite() {
        return Err(NoiseError::ZeroRotationTarget);
    }
    let unit = *v * (1.0 / scale);
    let base_sign = if unit[0] >= 0.0 { 1.0 } else { -1.0 };
    Ok(RotationScale {
        v: *v,
        scale,
        unit,
        base_sign,
        cos: base_sign * unit[0],
    })
}

/// Validates and constructs a noise measure.
pub fn make_noise_measure(kind: NoiseKind, dim: usize) -> Result<NoiseMeasure, NoiseError> {
    if dim < 2 {
        return Err(NoiseError::DimensionTooSmall(dim));
    }
    if dim > crate::vector::MAX_DIM {
        return Err(NoiseError::DimensionTooLarge(dim));
    }
    let mut covariance = DMatrix::zeros(dim, dim);
    let mut cumulative = Vec::new();
    let support_radius = match &kind {
        NoiseKind::PointMass => 0.0,
        NoiseKind::UniformSphereOrthogonal { radius } => {
            if !(radius.is_finite() && *radius >= 0.0) {
                return Err(NoiseError::InvalidRadius(*radius));
            }
            let c = radius * radius / (dim - 1) as f64;
            for i in 1..dim {
                covariance[(i, i)] = c;
            }
            *radius
        }
        NoiseKind::Atoms(atoms) => {
            validate_atoms(atoms, dim)?;
            let mut acc = 0.0;
            for a in atoms {
                acc += a.weight;
                cumulative.push(acc);
                for i in 0..dim {
                    for j in 0..dim {
                        covariance[(i, j)] += a.weight * a.point[i] * a.point[j];
                    }
                }
            }
            check_axial_covariance(&covariance)?;
            atoms.iter().map(|a| a.point.norm()).fold(0.0, f64::max)
        }
    };
    Ok(NoiseMeasure {
        dim,
        kind,
        covariance,
        support_radius,
        cumulative,
    })
}

fn validate_atoms(atoms: &[Atom], dim: usize) -> Result<(), NoiseError> {
    if atoms.is_empty() {
        return Err(NoiseError::NoAtoms);
    }
    for (index, a) in atoms.iter().enumerate() {
        if a.point.dim() != dim {
            return Err(NoiseError::AtomDimension {
                index,
                got: a.point.dim(),
                expected: dim,
            });
        }
        if !(a.weight > 0.0 && a.weight.is_finite()) {
            return Err(NoiseError::NonPositiveWeight {
                index,
                weight: a.weight,
            });
        }
    }
    let total: f64 = atoms.iter().map(|a| a.weight).sum();
    if (total - 1.0).abs() > ATOM_TOLERANCE {
        return Err(NoiseError::NotNormalized { total });
    }
    for coordinate in 0..dim {
        let mean: f64 = atoms.iter().map(|a| a.weight * a.point[coordinate]).sum();
        if mean.abs() > ATOM_TOLERANCE {
            return Err(NoiseError::NonZeroMean { coordinate, mean });
        }
    }
    // Invariance of the weighted atom multiset under sign flips of each
    // coordinate 2..d. Sufficient for the measures we build; exotic atom
    // sets with other symmetries are rejected.
    for flip in 1..dim {
        for (index, a) in atoms.iter().enumerate() {
            let mut image = a.point;
            image[flip] = -image[flip];
            let matched: f64 = atoms
                .iter()
                .filter(|b| (b.point - image).norm() <= ATOM_TOLERANCE)
                .map(|b| b.weight)
                .sum();
            let own: f64 = atoms
                .iter()
                .filter(|b| (b.point - a.point).norm() <= ATOM_TOLERANCE)
                .map(|b| b.weight)
                .sum();
            if (matched - own).abs() > ATOM_TOLERANCE {
                return Err(NoiseError::NotAxiallySymmetric {
                    reason: format!(
                        "atom {index} at {} has no mirror image under flipping coordinate {}",
                        a.point,
                        flip + 1
                    ),
                });
            }
        }
    }
    Ok(())
}

fn check_axial_covariance(c: &DMatrix<f64>) -> Result<(), NoiseError> {
    let d = c.nrows();
    for i in 0..d {
        for j in 0..d {
            if i != j && c[(i, j)].abs() > ATOM_TOLERANCE {
                return Err(NoiseError::NotAxiallySymmetric {
                    reason: format!("covariance entry ({},{}) = {} is not zero", i + 1, j + 1, c[(i, j)]),
                });
            }
        }
    }
    for i in 2..d {
        if (c[(i, i)] - c[(1, 1)]).abs() > ATOM_TOLERANCE {
            return Err(NoiseError::NotAxiallySymmetric {
                reason: format!(
                    "covariance diagonal entries C22 = {} and C{}{} = {} differ",
                    c[(1, 1)],
                    i + 1,
                    i + 1,
                    c[(i, i)]
                ),
            });
        }
    }
    Ok(())
}

impl NoiseMeasure {
    /// The measure `mu{(0, r)} = mu{(0, -r)} = 1/2` in the plane.
    pub fn two_point(r: f64) -> Self {
        make_noise_measure(
            NoiseKind::Atoms(vec![
                Atom::new(Vector::new2(0.0, r), 0.5),
                Atom::new(Vector::new2(0.0, -r), 0.5),
            ]),
            2,
        )
        .expect("two-point measure is valid")
    }

    pub fn point_mass(dim: usize) -> Self {
        make_noise_measure(NoiseKind::PointMass, dim).expect("point mass is valid")
    }

    /// Uniform orthogonal sphere with radius `sqrt((d-1) q / p)`, which gives
    /// exponent `p` in random-turn mode.
    pub fn tuned_for_exponent(p: f64, dim: usize) -> Result<Self, NoiseError> {
        let q = p / (p - 1.0);
        let radius = if p.is_infinite() {
            0.0
        } else {
            ((dim - 1) as f64 * q / p).sqrt()
        };
        make_noise_measure(NoiseKind::UniformSphereOrthogonal { radius }, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// `C11`, the variance along e1.
    pub fn parallel_variance(&self) -> f64 {
        self.covariance[(0, 0)]
    }

    /// `C22 = ... = Cdd`, the variance in each direction orthogonal to e1.
    pub fn orthogonal_variance(&self) -> f64 {
        self.covariance[(1, 1)]
    }

    /// `inf { R : mu B(0, R) = 1 }`.
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Atoms of a finitely supported measure (the orthogonal sphere counts
    /// as finitely supported in d = 2).
    pub fn atoms(&self) -> Option<Vec<Atom>> {
        match &self.kind {
            NoiseKind::PointMass => Some(vec![Atom::new(Vector::zeros(self.dim), 1.0)]),
            NoiseKind::Atoms(a) => Some(a.clone()),
            NoiseKind::UniformSphereOrthogonal { radius } if self.dim == 2 => Some(vec![
                Atom::new(Vector::new2(0.0, *radius), 0.5),
                Atom::new(Vector::new2(0.0, -*radius), 0.5),
            ]),
            NoiseKind::UniformSphereOrthogonal { .. } => None,
        }
    }

    pub fn is_point_mass(&self) -> bool {
        self.support_radius == 0.0
    }

    /// Draws a sample of `mu` itself (no rotation).
    #[inline]
    pub fn sample_base(&self, rng: &mut GameRng) -> Vector {
        match &self.kind {
            NoiseKind::PointMass => Vector::zeros(self.dim),
            NoiseKind::Atoms(atoms) => {
                if atoms.len() == 1 {
                    return atoms[0].point;
                }
                let u: f64 = rng.gen::<f64>() * self.cumulative[self.cumulative.len() - 1];
                let idx = self
                    .cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(atoms.len() - 1);
                atoms[idx].point
            }
            NoiseKind::UniformSphereOrthogonal { radius } => {
                let mut z = Vector::zeros(self.dim);
                if *radius == 0.0 {
                    return z;
                }
                if self.dim == 2 {
                    z[1] = if rng.gen::<bool>() { *radius } else { -*radius };
                    return z;
                }
                loop {
                    for i in 1..self.dim {
                        z[i] = StandardNormal.sample(rng);
                    }
                    let n = z.norm();
                    if n > 1e-300 {
                        return z * (radius / n);
                    }
                }
            }
        }
    }
}

/// Computes `p`, `q`, `beta`, `alpha` for the given turn mode.
pub fn derive_constants(mu: &NoiseMeasure, turn_mode: TurnMode) -> Result<GameConstants, NoiseError> {
    let c11 = mu.parallel_variance();
    let c22 = mu.orthogonal_variance();
    let (beta, parallel) = match turn_mode {
        TurnMode::Random => (c11 + c22 + 1.0, c11 + 1.0),
        TurnMode::Alternating => (c11 + c22, c11),
    };
    if beta <= 0.0 {
        return Err(NoiseError::DegenerateAlternating);
    }
    let p_inv = c22 / beta;
    let q_inv = parallel / beta;
    let p = if c22 == 0.0 { f64::INFINITY } else { 1.0 / p_inv };
    let q = if parallel == 0.0 { f64::INFINITY } else { 1.0 / q_inv };
    Ok(GameConstants {
        p,
        q,
        beta,
        alpha: 1.0 + mu.support_radius(),
        turn_mode,
    })
}

/// Draws `z ~ mu_v`. A zero move produces zero noise without consuming randomness.
#[inline]
pub fn sample_noise(mu: &NoiseMeasure, v: &Vector, rng: &mut GameRng) -> Vector {
    if v.dim() == 2 {
        // the only rotation of the plane taking e1 to v/|v|
        if mu.is_point_mass() || !(v.norm_squared() > 0.0) {
            return Vector::zeros(2);
        }
        let a = mu.sample_base(rng);
        return Vector::new2(a[0] * v[0] - a[1] * v[1], a[0] * v[1] + a[1] * v[0]);
    }
    match rotation_to(v) {
        Ok(psi) => {
            if mu.is_point_mass() {
                return Vector::zeros(mu.dim());
            }
            let a = mu.sample_base(rng);
            psi.apply(&a)
        }
        Err(_) => Vector::zeros(v.dim()),
    }
}

/// Covariance of `mu_v`: `(beta/q - 1) v v^T + (beta/p)(|v|^2 I - v v^T)` in
/// random mode (without the `-1` in alternating mode).
pub fn pushforward_covariance(constants: &GameConstants, v: &Vector) -> DMatrix<f64> {
    let d = v.dim();
    let vv = v.to_dvector() * v.to_dvector().transpose();
    let parallel = match constants.turn_mode {
        TurnMode::Random => constants.beta * constants.q_inv() - 1.0,
        TurnMode::Alternating => constants.beta * constants.q_inv(),
    };
    let orth = constants.beta * constants.p_inv();
    &vv * parallel + (DMatrix::identity(d, d) * v.norm_squared() - &vv) * orth
}
