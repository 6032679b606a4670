//! Small fixed-capacity vectors for game positions and moves.
//!
//! Positions live in R^d for small d; the hot simulation loop copies them by
//! value, so they are stored inline rather than on the heap.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Largest supported ambient dimension.
pub const MAX_DIM: usize = 6;

/// A point or displacement in R^d, `2 <= d <= MAX_DIM` in practice.
///
/// Entries past `dim` are kept at zero so arithmetic can run over the whole
/// fixed-size array without branching on the dimension (scaling by a
/// non-finite number breaks this, but such vectors are rejected anyway).
#[derive(Clone, Copy, PartialEq)]
pub struct Vector {
    data: [f64; MAX_DIM],
    dim: u8,
}

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&dim),
            "dimension {dim} outside 1..={MAX_DIM}"
        );
        Self {
            data: [0.0; MAX_DIM],
            dim: dim as u8,
        }
    }

    pub fn from_slice(xs: &[f64]) -> Self {
        let mut v = Self::zeros(xs.len());
        v.data[..xs.len()].copy_from_slice(xs);
        v
    }

    pub fn new2(x: f64, y: f64) -> Self {
        Self::from_slice(&[x, y])
    }

    pub fn new3(x: f64, y: f64, z: f64) -> Self {
        Self::from_slice(&[x, y, z])
    }

    /// The `i`th standard basis vector (0-based).
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.data[i] = 1.0;
        v
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data[..self.dim as usize]
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data[..self.dim as usize]
    }

    #[inline]
    pub fn dot(&self, other: &Vector) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let mut s = 0.0;
        for i in 0..MAX_DIM {
            s += self.data[i] * other.data[i];
        }
        s
    }

    #[inline]
    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(&self, other: &Vector) -> f64 {
        (*self - *other).norm()
    }

    /// Unit vector in the same direction, or `None` for a (numerically) zero vector.
    pub fn normalized(&self) -> Option<Vector> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| *self * (1.0 / n))
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|x| x.is_finite())
    }

    /// Lexicographic comparison, used for deterministic tie-breaking.
    pub fn lex_cmp(&self, other: &Vector) -> std::cmp::Ordering {
        for (a, b) in self.as_slice().iter().zip(other.as_slice()) {
            match a.total_cmp(b) {
                std::cmp::Ordering::Equal => continue,
                ord => return ord,
            }
        }
        std::cmp::Ordering::Equal
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.as_slice().to_vec()
    }

    pub fn to_dvector(&self) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_column_slice(self.as_slice())
    }

    pub fn from_dvector(v: &nalgebra::DVector<f64>) -> Self {
        Self::from_slice(v.as_slice())
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    #[inline]
    fn index(&self, i: usize) -> &f64 {
        debug_assert!(i < self.dim());
        &self.data[i]
    }
}

impl IndexMut<usize> for Vector {
    #[inline]
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        assert!(i < self.dim(), "index {i} out of range for dimension {}", self.dim);
        &mut self.data[i]
    }
}

impl Add for Vector {
    type Output = Vector;
    #[inline]
    fn add(mut self, rhs: Vector) -> Vector {
        self += rhs;
        self
    }
}

impl AddAssign for Vector {
    #[inline]
    fn add_assign(&mut self, rhs: Vector) {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..MAX_DIM {
            self.data[i] += rhs.data[i];
        }
    }
}

impl Sub for Vector {
    type Output = Vector;
    #[inline]
    fn sub(mut self, rhs: Vector) -> Vector {
        self -= rhs;
        self
    }
}

impl SubAssign for Vector {
    #[inline]
    fn sub_assign(&mut self, rhs: Vector) {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..MAX_DIM {
            self.data[i] -= rhs.data[i];
        }
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    #[inline]
    fn mul(mut self, s: f64) -> Vector {
        for i in 0..MAX_DIM {
            self.data[i] *= s;
        }
        self
    }
}

impl Mul<Vector> for f64 {
    type Output = Vector;
    #[inline]
    fn mul(self, v: Vector) -> Vector {
        v * self
    }
}

impl Neg for Vector {
    type Output = Vector;
    #[inline]
    fn neg(self) -> Vector {
        self * -1.0
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.as_slice()).finish()
    }
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.as_slice().iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for Vector {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let xs = Vec::<f64>::deserialize(d)?;
        if xs.is_empty() || xs.len() > MAX_DIM {
            return Err(serde::de::Error::custom(format!(
                "vector must have between 1 and {MAX_DIM} components, got {}",
                xs.len()
            )));
        }
        Ok(Vector::from_slice(&xs))
    }
}

/// Deterministic set of `n` unit directions in R^d.
///
/// d = 2: equally spaced angles starting at e1. d = 3: a Fibonacci lattice
/// on the sphere. Higher d: normalized Gaussians from a fixed-seed stream.
pub fn direction_set(dim: usize, n: usize) -> Vec<Vector> {
    match dim {
        2 => (0..n)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / n as f64;
                Vector::new2(a.cos(), a.sin())
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    // first coordinate runs from 1 to -1 so that e1 is included
                    let x = if n == 1 {
                        1.0
                    } else {
                        1.0 - 2.0 * k as f64 / (n - 1) as f64
                    };
                    let r = (1.0 - x * x).max(0.0).sqrt();
                    let phi = golden * k as f64;
                    Vector::new3(x, r * phi.cos(), r * phi.sin())
                })
                .collect()
        }
        _ => {
            use rand::SeedableRng;
            use rand_distr::{Distribution, StandardNormal};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_d1e5 ^ dim as u64);
            let mut out = Vec::with_capacity(n);
            out.push(Vector::basis(dim, 0));
            while out.len() < n {
                let mut v = Vector::zeros(dim);
                for i in 0..dim {
                    v[i] = StandardNormal.sample(&mut rng);
                }
                if let Some(u) = v.normalized() {
                    out.push(u);
                }
            }
            out
        }
    }
}
