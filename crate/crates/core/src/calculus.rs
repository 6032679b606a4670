//! Differential operators, the quadratic one-step model, and closed-form
//! radial solutions.
//!
//! The game p-Laplacian is `p^-1 Delta_1 + q^-1 Delta_inf` with
//! `Delta_inf u = <D^2u grad u, grad u> / |grad u|^2` and
//! `Delta_1 = Delta - Delta_inf`. All operators here are evaluated by
//! central differences.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::noise::{GameConstants, TurnMode};
use crate::vector::Vector;

/// Below this gradient norm the operators are treated as undefined.
pub const GRADIENT_FLOOR: f64 = 1e-8;

/// Default finite-difference step at `x`.
pub fn default_step(x: &Vector) -> f64 {
    1e-4 * (1.0 + x.norm())
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalculusError {
    #[error("vanishing gradient: |grad u| = {0:e} is below the floor")]
    VanishingGradient(f64),
    #[error("gradient-free quadratic step undefined (xi = 0)")]
    ZeroLinearTerm,
    #[error("radial reference is singular at the origin")]
    Singularity,
    #[error("exponent p = {0} is outside (1, inf)")]
    InvalidExponent(f64),
    #[error("annulus radii must satisfy 0 < s < 1 < t, got s = {s}, t = {t}")]
    InvalidRadii { s: f64, t: f64 },
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("dimension mismatch: matrix is {matrix}x{matrix}, vector has {vector} components")]
    DimensionMismatch { matrix: usize, vector: usize },
}

/// A real function on R^d.
pub trait ScalarField: Send + Sync {
    fn value(&self, x: &Vector) -> f64;

    /// Central-difference gradient unless overridden.
    fn gradient(&self, x: &Vector) -> Vector {
        let h = 1e-6 * (1.0 + x.norm());
        let mut g = Vector::zeros(x.dim());
        for i in 0..x.dim() {
            let mut a = *x;
            let mut b = *x;
            a[i] += h;
            b[i] -= h;
            g[i] = (self.value(&a) - self.value(&b)) / (2.0 * h);
        }
        g
    }

    fn name(&self) -> String {
        "custom".into()
    }
}

impl<T: ScalarField + ?Sized> ScalarField for Arc<T> {
    fn value(&self, x: &Vector) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &Vector) -> Vector {
        (**self).gradient(x)
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

/// `x -> offset + (coeffs, x)`.
#[derive(Debug, Clone, Copy)]
pub struct LinearField {
    pub coeffs: Vector,
    pub offset: f64,
}

impl ScalarField for LinearField {
    fn value(&self, x: &Vector) -> f64 {
        self.offset + self.coeffs.dot(x)
    }
    fn gradient(&self, _x: &Vector) -> Vector {
        self.coeffs
    }
    fn name(&self) -> String {
        format!("linear({}, {})", self.coeffs, self.offset)
    }
}

/// `x -> offset + scale * rho_{d,p}(x - center)`.
#[derive(Debug, Clone, Copy)]
pub struct RadialField {
    pub center: Vector,
    pub p: f64,
    pub scale: f64,
    pub offset: f64,
}

impl RadialField {
    pub fn new(dim: usize, p: f64) -> Self {
        Self {
            center: Vector::zeros(dim),
            p,
            scale: 1.0,
            offset: 0.0,
        }
    }
}

impl ScalarField for RadialField {
    fn value(&self, x: &Vector) -> f64 {
        self.offset + self.scale * radial_value(x.dim(), self.p, (*x - self.center).norm())
    }
    fn gradient(&self, x: &Vector) -> Vector {
        radial_gradient_unchecked(self.p, &(*x - self.center)) * self.scale
    }
    fn name(&self) -> String {
        format!(
            "radial(center={}, p={}, scale={}, offset={})",
            self.center, self.p, self.scale, self.offset
        )
    }
}

/// `x -> (x - center)^T A (x - center) + (xi, x - center) + offset`.
#[derive(Debug, Clone)]
pub struct QuadraticField {
    pub a: DMatrix<f64>,
    pub xi: Vector,
    pub center: Vector,
    pub offset: f64,
}

impl ScalarField for QuadraticField {
    fn value(&self, x: &Vector) -> f64 {
        let w = (*x - self.center).to_dvector();
        (w.transpose() * &self.a * &w)[(0, 0)] + self.xi.dot(&(*x - self.center)) + self.offset
    }
    fn gradient(&self, x: &Vector) -> Vector {
        let w = (*x - self.center).to_dvector();
        let g = (&self.a + self.a.transpose()) * w;
        Vector::from_dvector(&g) + self.xi
    }
    fn name(&self) -> String {
        format!("quadratic(xi={}, center={}, offset={})", self.xi, self.center, self.offset)
    }
}

/// Wraps a closure (value only; gradient by central differences).
pub struct FnField<F> {
    f: F,
    name: String,
}

impl<F: Fn(&Vector) -> f64 + Send + Sync> FnField<F> {
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { f, name: name.into() }
    }
}

impl<F: Fn(&Vector) -> f64 + Send + Sync> ScalarField for FnField<F> {
    fn value(&self, x: &Vector) -> f64 {
        (self.f)(x)
    }
    fn name(&self) -> String {
        self.name.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorValues {
    pub laplacian: f64,
    pub inf_laplacian: f64,
    pub one_laplacian: f64,
    pub p_laplacian_g: f64,
    pub gradient: Vector,
}

/// `(p^-1, q^-1)` with `p = inf` and `p = 1` handled.
pub fn exponent_weights(p: f64) -> (f64, f64) {
    if p.is_infinite() {
        (0.0, 1.0)
    } else {
        (1.0 / p, 1.0 - 1.0 / p)
    }
}

/// Central-difference gradient and Hessian of `u` at `x` with step `h`.
pub fn fd_derivatives(u: &dyn Fn(&Vector) -> f64, x: &Vector, h: f64) -> (Vector, DMatrix<f64>) {
    let d = x.dim();
    let u0 = u(x);
    let shifted = |i: usize, si: f64, j: usize, sj: f64| {
        let mut y = *x;
        y[i] += si * h;
        y[j] += sj * h;
        u(&y)
    };
    let mut g = Vector::zeros(d);
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        let mut a = *x;
        let mut b = *x;
        a[i] += h;
        b[i] -= h;
        let (ua, ub) = (u(&a), u(&b));
        g[i] = (ua - ub) / (2.0 * h);
        hess[(i, i)] = (ua - 2.0 * u0 + ub) / (h * h);
        for j in 0..i {
            let v = (shifted(i, 1.0, j, 1.0) - shifted(i, 1.0, j, -1.0) - shifted(i, -1.0, j, 1.0)
                + shifted(i, -1.0, j, -1.0))
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (g, hess)
}

/// Operators from a gradient and Hessian.
pub fn operators_from(g: &Vector, hess: &DMatrix<f64>, p: f64) -> Result<OperatorValues, CalculusError> {
    let gn = g.norm();
    if !(gn > GRADIENT_FLOOR) {
        return Err(CalculusError::VanishingGradient(gn));
    }
    let gv = g.to_dvector();
    let laplacian = hess.trace();
    let inf_laplacian = (gv.transpose() * hess * &gv)[(0, 0)] / (gn * gn);
    let one_laplacian = laplacian - inf_laplacian;
    let (pi, qi) = exponent_weights(p);
    Ok(OperatorValues {
        laplacian,
        inf_laplacian,
        one_laplacian,
        p_laplacian_g: pi * one_laplacian + qi * inf_laplacian,
        gradient: *g,
    })
}

/// Laplacian, infinity/1-Laplacians and the game p-Laplacian of `u` at `x`.
pub fn operators_at(
    u: &dyn Fn(&Vector) -> f64,
    x: &Vector,
    p: f64,
    h: f64,
) -> Result<OperatorValues, CalculusError> {
    let (g, hess) = fd_derivatives(u, x, h);
    operators_from(&g, &hess, p)
}

/// Exponent `c = (p - d)/(p - 1)` of the radial solution, `None` when `p = d`
/// (logarithmic case). `p = inf` gives `c = 1`.
pub fn radial_exponent(d: usize, p: f64) -> Option<f64> {
    if p.is_infinite() {
        return Some(1.0);
    }
    if (p - d as f64).abs() < 1e-9 {
        None
    } else {
        Some((p - d as f64) / (p - 1.0))
    }
}

/// `rho_{d,p}` as a function of the radius; non-finite at `r = 0` when singular.
#[inline]
pub fn radial_value(d: usize, p: f64, r: f64) -> f64 {
    match radial_exponent(d, p) {
        None => r.ln(),
        Some(c) => r.powf(c),
    }
}

fn radial_gradient_unchecked(p: f64, x: &Vector) -> Vector {
    let r2 = x.norm_squared();
    match radial_exponent(x.dim(), p) {
        // grad log|x| = x / |x|^2
        None => *x * (1.0 / r2),
        // grad |x|^c = c |x|^(c-2) x
        Some(c) => *x * (c * r2.powf((c - 2.0) / 2.0)),
    }
}

fn check_exponent(p: f64) -> Result<(), CalculusError> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(CalculusError::InvalidExponent(p))
    }
}

/// `rho_{d,p}(x) = |x|^c`, or `log |x|` when `p = d`.
pub fn radial_reference(d: usize, p: f64, x: &Vector) -> Result<f64, CalculusError> {
    check_exponent(p)?;
    let r = x.norm();
    if r == 0.0 {
        return Err(CalculusError::Singularity);
    }
    debug_assert_eq!(d, x.dim());
    Ok(radial_value(d, p, r))
}

pub fn radial_reference_gradient(p: f64, x: &Vector) -> Result<Vector, CalculusError> {
    check_exponent(p)?;
    if x.norm() == 0.0 {
        return Err(CalculusError::Singularity);
    }
    Ok(radial_gradient_unchecked(p, x))
}

/// Probability that the game exits the annulus `B(0, t) \ B(0, s)` (radii
/// relative to a starting radius 1) through the inner sphere in the limit
/// `eps -> 0`: `(t^c - 1) / (t^c - s^c)`, or `log t / (log t - log s)` when
/// `p = d`.
pub fn annulus_hit_prob(s: f64, t: f64, p: f64, d: usize) -> Result<f64, CalculusError> {
    if !(s > 0.0 && s < 1.0 && t > 1.0 && t.is_finite()) {
        return Err(CalculusError::InvalidRadii { s, t });
    }
    if !(p > 1.0) {
        return Err(CalculusError::InvalidExponent(p));
    }
    let (ls, lt) = (s.ln(), t.ln());
    let c = if p.is_infinite() {
        1.0
    } else {
        (p - d as f64) / (p - 1.0)
    };
    if c.abs() < 1e-12 {
        return Ok(lt / (lt - ls));
    }
    // (e^{c lt} - 1) / (e^{c lt} - e^{c ls}) via expm1 for small |c|
    let num = (c * lt).exp_m1();
    let den = num - (c * ls).exp_m1();
    Ok(num / den)
}

/// `phi(x) = x^T A x + (xi, x)` around the current position.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    pub a: DMatrix<f64>,
    pub xi: Vector,
}

impl QuadraticModel {
    pub fn new(a: DMatrix<f64>, xi: Vector) -> Result<Self, CalculusError> {
        if a.nrows() != a.ncols() || a.nrows() != xi.dim() {
            return Err(CalculusError::DimensionMismatch {
                matrix: a.nrows(),
                vector: xi.dim(),
            });
        }
        let asym = (&a - a.transpose()).abs().max();
        if asym > 1e-12 {
            return Err(CalculusError::NotSymmetric(asym));
        }
        Ok(Self { a, xi })
    }

    /// Second-order model of `u` at `x`: `A = D^2u / 2`, `xi = grad u`.
    pub fn from_field(u: &dyn Fn(&Vector) -> f64, x: &Vector, h: f64) -> Self {
        let (g, hess) = fd_derivatives(u, x, h);
        let a = (&hess + hess.transpose()) * 0.25;
        Self { a, xi: g }
    }

    pub fn dim(&self) -> usize {
        self.xi.dim()
    }

    pub fn value(&self, v: &Vector) -> f64 {
        let w = v.to_dvector();
        (w.transpose() * &self.a * &w)[(0, 0)] + self.xi.dot(v)
    }

    /// Game p-Laplacian of `phi` (constant in x except through the gradient;
    /// evaluated at the model's center).
    pub fn p_laplacian(&self, p: f64) -> Result<f64, CalculusError> {
        let hess = &self.a * 2.0;
        Ok(operators_from(&self.xi, &hess, p)?.p_laplacian_g)
    }
}

/// `B` in `psi(v) = (xi, v) + v^T B v`.
pub fn b_matrix(a: &DMatrix<f64>, constants: &GameConstants) -> DMatrix<f64> {
    let (beta, pi, qi) = (constants.beta, constants.p_inv(), constants.q_inv());
    let d = a.nrows();
    let parallel = match constants.turn_mode {
        TurnMode::Random => beta * qi - beta * pi,
        TurnMode::Alternating => beta * qi - beta * pi + 1.0,
    };
    a * parallel + DMatrix::identity(d, d) * (beta * pi * a.trace())
}

/// Expected value of `phi(v + z)` for `z ~ mu_v`.
pub fn expected_quadratic(model: &QuadraticModel, v: &Vector, constants: &GameConstants) -> f64 {
    let b = b_matrix(&model.a, constants);
    let w = v.to_dvector();
    model.xi.dot(v) + (w.transpose() * b * &w)[(0, 0)]
}

/// Spectral norm of a symmetric matrix.
pub fn symmetric_norm(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// `zeta = 4 ||B|| / |xi|`; the maximizer sits on the sphere for `eps < 1/zeta`.
pub fn lemma_threshold(model: &QuadraticModel, constants: &GameConstants) -> Result<f64, CalculusError> {
    let xn = model.xi.norm();
    if xn == 0.0 {
        return Err(CalculusError::ZeroLinearTerm);
    }
    Ok(4.0 * symmetric_norm(&b_matrix(&model.a, constants)) / xn)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalMove {
    pub v: Vector,
    pub value: f64,
    /// `false` when `eps >= 1/zeta`; the move then comes from a multi-start
    /// projected ascent and is not certified.
    pub in_lemma_regime: bool,
}

/// Maximizer (or minimizer) of `psi` over the closed `eps`-ball.
pub fn optimal_move(
    model: &QuadraticModel,
    eps: f64,
    constants: &GameConstants,
    maximize: bool,
) -> Result<OptimalMove, CalculusError> {
    let xn = model.xi.norm();
    if xn == 0.0 {
        return Err(CalculusError::ZeroLinearTerm);
    }
    let sign = if maximize { 1.0 } else { -1.0 };
    let b = b_matrix(&model.a, constants) * sign;
    let xi = model.xi * sign;
    let objective = |v: &Vector| {
        let w = v.to_dvector();
        xi.dot(v) + (w.transpose() * &b * &w)[(0, 0)]
    };
    let eig = SymmetricEigen::new(b.clone());
    let zeta = 4.0 * eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs())) / xn;
    let in_regime = eps * zeta < 1.0;

    let sphere = sphere_maximizer(&eig, &xi, eps);
    let v = if in_regime {
        sphere.expect("secular equation is bracketed inside the regime")
    } else {
        let mut starts: Vec<Vector> = vec![Vector::zeros(xi.dim()), xi * (eps / xn)];
        if let Some(s) = sphere {
            starts.push(s);
        }
        for i in 0..xi.dim() {
            let col = Vector::from_dvector(&eig.eigenvectors.column(i).into_owned());
            starts.push(col * eps);
            starts.push(col * -eps);
        }
        let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
        let step = 1.0 / (2.0 * lmax + xn / eps).max(1e-300);
        starts
            .into_iter()
            .map(|mut v| {
                for _ in 0..2000 {
                    let g = xi + Vector::from_dvector(&(&b * v.to_dvector() * 2.0));
                    let mut next = v + g * step * eps;
                    let n = next.norm();
                    if n > eps {
                        next = next * (eps / n);
                    }
                    let done = (next - v).norm() <= 1e-15 * (1.0 + eps);
                    v = next;
                    if done {
                        break;
                    }
                }
                v
            })
            .fold(None::<Vector>, |best, v| match best {
                Some(b) if objective(&b) >= objective(&v) => Some(b),
                _ => Some(v),
            })
            .expect("at least one start")
    };
    Ok(OptimalMove {
        v,
        value: sign * objective(&v),
        in_lemma_regime: in_regime,
    })
}

/// Maximizer of `(xi, v) + v^T B v` on `|v| = eps` from the secular
/// equation `|(lambda - B)^-1 xi| = 2 eps`; `None` if the bracket fails
/// (the "hard case" outside the lemma's regime).
fn sphere_maximizer(eig: &SymmetricEigen<f64, nalgebra::Dyn>, xi: &Vector, eps: f64) -> Option<Vector> {
    let xt: DVector<f64> = eig.eigenvectors.transpose() * xi.to_dvector();
    let lam = &eig.eigenvalues;
    let bmax = lam.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let bmin = lam.iter().cloned().fold(f64::INFINITY, f64::min);
    let xn = xi.norm();
    let norm_at = |l: f64| -> f64 {
        let mut s = 0.0;
        for i in 0..lam.len() {
            let c = xt[i] / (2.0 * (l - lam[i]));
            s += c * c;
        }
        s.sqrt()
    };
    let mut lo = bmin + xn / (2.0 * eps);
    let hi0 = bmax + xn / (2.0 * eps);
    if lo <= bmax {
        // search upward from just above bmax for a point with norm >= eps
        let mut gap = (hi0 - bmax) * 0.5;
        let mut found = false;
        for _ in 0..200 {
            let l = bmax + gap;
            if norm_at(l) >= eps {
                lo = l;
                found = true;
                break;
            }
            gap *= 0.5;
            if gap <= f64::EPSILON * (1.0 + bmax.abs()) {
                break;
            }
        }
        if !found {
            return None;
        }
    }
    let mut hi = hi0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if norm_at(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l = 0.5 * (lo + hi);
    let mut coords = DVector::zeros(lam.len());
    for i in 0..lam.len() {
        coords[i] = xt[i] / (2.0 * (l - lam[i]));
    }
    let v = Vector::from_dvector(&(&eig.eigenvectors * coords));
    let n = v.norm();
    (n > 0.0).then(|| v * (eps / n))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneStepBound {
    /// Guaranteed `E[phi(x_1)]` (with `phi(x_0) = 0`) when player I tugs in
    /// the gradient direction, whatever player II does.
    pub lower_bound: f64,
    pub m: f64,
}

/// `phi(x_0) + (beta/2) Delta_p phi eps^2 - M eps^3` with
/// `M = 16 beta (d + 1) ||A||^2 / |xi|`.
pub fn one_step_bound(
    model: &QuadraticModel,
    eps: f64,
    constants: &GameConstants,
) -> Result<OneStepBound, CalculusError> {
    let xn = model.xi.norm();
    if xn == 0.0 {
        return Err(CalculusError::ZeroLinearTerm);
    }
    let d = model.dim() as f64;
    let a_norm = symmetric_norm(&model.a);
    let m = 16.0 * constants.beta * (d + 1.0) * a_norm * a_norm / xn;
    let lap = model.p_laplacian(constants.p)?;
    Ok(OneStepBound {
        lower_bound: 0.5 * constants.beta * lap * eps * eps - m * eps.powi(3),
        m,
    })
}
