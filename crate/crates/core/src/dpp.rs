//! Grid value iteration for the one-step optimality equation of the
//! `eps`-game with finitely supported noise.
//!
//! For interior nodes (`dist > alpha eps`)
//!
//! ```text
//! T u(x) = 1/2 max_v E u(x + v + z) + 1/2 min_v E u(x + v + z),   z ~ mu_v,
//! ```
//!
//! with `v` ranging over `n_dir` directions of length `eps` plus `v = 0`,
//! the expectation an exact atom sum and `u` read off the grid by
//! multilinear interpolation. Nodes in the termination band take the value
//! of the best exit for whoever wins the turn; nodes outside the domain
//! carry `F` at their nearest boundary point. The interpolation weights are
//! non-negative and sum to one, so `T` is monotone and non-expansive in the
//! sup norm. Iteration is Jacobi-style (each sweep reads only the previous
//! iterate), so results do not depend on thread count.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Variant;
use crate::geometry::{BoundaryFunction, Domain, GeometryError};
use crate::noise::{rotation_to, GameConstants, NoiseMeasure};
use crate::vector::{direction_set, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DppError {
    #[error("oracle requires atomic noise")]
    NonAtomic,
    #[error("grid spacing {h} exceeds eps/8 = {limit}")]
    GridTooCoarse { h: f64, limit: f64 },
    #[error("grid oracle supports dimensions 2 and 3, got {0}")]
    UnsupportedDimension(usize),
    #[error("grid would have {0} nodes, above the limit")]
    GridTooLarge(usize),
    #[error("invalid oracle parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Largest grid the oracle will allocate.
pub const MAX_NODES: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeClass {
    Interior,
    /// `0 < dist <= alpha eps`: the game ends on this turn.
    Band,
    Outside,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DppOptions {
    pub h: f64,
    /// Stop once the sup-norm change is below this; default
    /// `1e-6 (max F - min F)`.
    pub tol: Option<f64>,
    /// Default `10 (diam / eps)^2`.
    pub max_iter: Option<u64>,
    /// Directions on the `eps`-sphere; default 64 (d = 2) or 256 (d = 3).
    pub n_dir: Option<usize>,
}

impl DppOptions {
    pub fn with_spacing(h: f64) -> Self {
        Self {
            h,
            tol: None,
            max_iter: None,
            n_dir: None,
        }
    }
}

/// Regular lattice `origin + h * index`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: Vector,
    pub h: f64,
    pub shape: Vec<usize>,
}

impl Grid {
    fn covering(lo: &Vector, hi: &Vector, h: f64, margin: f64) -> Result<Self, DppError> {
        let d = lo.dim();
        let mut origin = *lo;
        let mut shape = Vec::with_capacity(d);
        let mut total: usize = 1;
        for i in 0..d {
            origin[i] = lo[i] - margin;
            let n = ((hi[i] + margin - origin[i]) / h).ceil() as usize + 1;
            shape.push(n);
            total = total.saturating_mul(n);
        }
        if total > MAX_NODES {
            return Err(DppError::GridTooLarge(total));
        }
        Ok(Self { origin, h, shape })
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.shape.len()];
        for i in 1..self.shape.len() {
            s[i] = s[i - 1] * self.shape[i - 1];
        }
        s
    }

    /// Multi-index of a linear index (first axis fastest).
    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.shape.len());
        for &n in &self.shape {
            out.push(idx % n);
            idx /= n;
        }
        out
    }

    pub fn point(&self, idx: usize) -> Vector {
        let mi = self.multi_index(idx);
        let mut x = self.origin;
        for (i, k) in mi.iter().enumerate() {
            x[i] += self.h * *k as f64;
        }
        x
    }
}

/// Interpolation taps for a fixed displacement: linear index offsets and weights.
fn displacement_taps(grid: &Grid, strides: &[usize], offset: &Vector, weight: f64, out: &mut Vec<(isize, f64)>) {
    let d = grid.shape.len();
    let mut base = [0isize; crate::vector::MAX_DIM];
    let mut frac = [0f64; crate::vector::MAX_DIM];
    for i in 0..d {
        let q = offset[i] / grid.h;
        let f = q.floor();
        base[i] = f as isize;
        frac[i] = q - f;
    }
    for corner in 0..(1usize << d) {
        let mut w = weight;
        let mut lin = 0isize;
        for i in 0..d {
            let up = (corner >> i) & 1 == 1;
            w *= if up { frac[i] } else { 1.0 - frac[i] };
            lin += (base[i] + up as isize) * strides[i] as isize;
        }
        if w > 0.0 {
            out.push((lin, w));
        }
    }
}

fn merge_taps(mut taps: Vec<(isize, f64)>) -> Vec<(isize, f64)> {
    taps.sort_by_key(|t| t.0);
    let mut merged: Vec<(isize, f64)> = Vec::with_capacity(taps.len());
    for (o, w) in taps {
        match merged.last_mut() {
            Some(last) if last.0 == o => last.1 += w,
            _ => merged.push((o, w)),
        }
    }
    merged
}

/// Per-move stencils, stored flat: `taps[starts[m]..starts[m + 1]]`.
#[derive(Debug, Clone)]
struct Stencils {
    taps: Vec<(isize, f64)>,
    starts: Vec<usize>,
}

impl Stencils {
    #[inline]
    fn expectation(&self, m: usize, u: &[f64], node: usize) -> f64 {
        let mut s = 0.0;
        for &(o, w) in &self.taps[self.starts[m]..self.starts[m + 1]] {
            s += w * u[(node as isize + o) as usize];
        }
        s
    }

    fn len(&self) -> usize {
        self.starts.len() - 1
    }
}

/// Exit values of band nodes for the three kinds of mover.
#[derive(Debug, Clone, Copy)]
struct BandValue {
    max: f64,
    min: f64,
}

/// The one-step operator on a fixed grid.
#[derive(Debug, Clone)]
pub struct BellmanOperator {
    grid: Grid,
    classes: Vec<NodeClass>,
    interior: Vec<usize>,
    band: Vec<(usize, BandValue)>,
    fixed: Vec<f64>,
    /// Stencils for tug moves (with noise); move 0 is `v = 0`.
    tug: Stencils,
    /// Spencer phase: pairs of stencils for `+w` and `-w` (no noise).
    spencer: Option<Stencils>,
    variant: Variant,
    constants: GameConstants,
    f_range: (f64, f64),
    eps: f64,
}

impl BellmanOperator {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        domain: &Domain,
        boundary: &BoundaryFunction,
        noise: &NoiseMeasure,
        constants: &GameConstants,
        eps: f64,
        variant: Variant,
        h: f64,
        n_dir: Option<usize>,
    ) -> Result<Self, DppError> {
        Self::build(domain, boundary, noise, constants, eps, variant, h, n_dir, true)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(
        domain: &Domain,
        boundary: &BoundaryFunction,
        noise: &NoiseMeasure,
        constants: &GameConstants,
        eps: f64,
        variant: Variant,
        h: f64,
        n_dir: Option<usize>,
        enforce_spacing: bool,
    ) -> Result<Self, DppError> {
        let d = domain.dim();
        if !(2..=3).contains(&d) {
            return Err(DppError::UnsupportedDimension(d));
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(DppError::InvalidParameter(format!("eps must be positive, got {eps}")));
        }
        if !(h > 0.0) || (enforce_spacing && h > eps / 8.0 * (1.0 + 1e-12)) {
            return Err(DppError::GridTooCoarse { h, limit: eps / 8.0 });
        }
        let atoms = noise.atoms().ok_or(DppError::NonAtomic)?;
        let alpha = constants.alpha;
        let (lo, hi) = domain.bounding_box();
        let grid = Grid::covering(&lo, &hi, h, alpha * eps + 2.0 * h)?;
        let strides = grid.strides();
        let n_dir = n_dir.unwrap_or(if d == 2 { 64 } else { 256 });
        let dirs = direction_set(d, n_dir);

        let mut taps = Vec::new();
        let mut starts = vec![0];
        taps.push((0isize, 1.0));
        starts.push(taps.len());
        for u in &dirs {
            let v = *u * eps;
            let psi = rotation_to(&v).expect("nonzero move");
            let mut raw = Vec::new();
            for a in &atoms {
                displacement_taps(&grid, &strides, &(v + psi.apply(&a.point)), a.weight, &mut raw);
            }
            taps.extend(merge_taps(raw));
            starts.push(taps.len());
        }
        let tug = Stencils { taps, starts };

        let spencer = match variant {
            Variant::SpencerInterpolated { p_interp } if p_interp.is_finite() => {
                let mut taps = Vec::new();
                let mut starts = vec![0];
                for u in &dirs {
                    for s in [1.0, -1.0] {
                        let mut raw = Vec::new();
                        displacement_taps(&grid, &strides, &(*u * (eps * s)), 1.0, &mut raw);
                        taps.extend(merge_taps(raw));
                        starts.push(taps.len());
                    }
                }
                Some(Stencils { taps, starts })
            }
            _ => None,
        };

        let n = grid.len();
        let mut classes = Vec::with_capacity(n);
        let mut fixed = vec![0.0; n];
        let mut interior = Vec::new();
        let mut band = Vec::new();
        let mut f_lo = f64::INFINITY;
        let mut f_hi = f64::NEG_INFINITY;
        for idx in 0..n {
            let x = grid.point(idx);
            let dist = domain.dist_to_boundary(&x);
            if dist <= 0.0 {
                classes.push(NodeClass::Outside);
                let v = boundary.eval(&domain.nearest_boundary_point(&x));
                fixed[idx] = v;
                f_lo = f_lo.min(v);
                f_hi = f_hi.max(v);
            } else if dist <= alpha * eps {
                classes.push(NodeClass::Band);
                let cands = domain.exit_candidates(&x, alpha * eps)?;
                let vals: Vec<f64> = cands.iter().map(|y| boundary.eval(y)).collect();
                let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                f_lo = f_lo.min(min);
                f_hi = f_hi.max(max);
                band.push((idx, BandValue { max, min }));
            } else {
                classes.push(NodeClass::Interior);
                interior.push(idx);
            }
        }
        // every interior stencil must stay on the grid
        let reach = alpha * eps + h * (d as f64).sqrt();
        for &idx in &interior {
            let mi = grid.multi_index(idx);
            for (i, k) in mi.iter().enumerate() {
                let k = *k as f64 * h;
                let span = (grid.shape[i] - 1) as f64 * h;
                if k < reach || k > span - reach {
                    return Err(DppError::InvalidParameter(
                        "interior stencil leaves the grid".into(),
                    ));
                }
            }
        }
        let mut op = Self {
            grid,
            classes,
            interior,
            band,
            fixed,
            tug,
            spencer,
            variant,
            constants: *constants,
            f_range: (f_lo, f_hi),
            eps,
        };
        let band_init: Vec<(usize, f64)> = op
            .band
            .iter()
            .map(|(i, b)| (*i, op.band_value(b, Phase::Random)))
            .collect();
        for (i, v) in band_init {
            op.fixed[i] = v;
        }
        Ok(op)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn constants(&self) -> &GameConstants {
        &self.constants
    }

    pub fn classes(&self) -> &[NodeClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Range of `F` over the exit points and outside projections.
    pub fn payoff_range(&self) -> (f64, f64) {
        self.f_range
    }

    /// A field equal to the fixed band/outside values and `c` elsewhere.
    pub fn initial_field(&self, c: f64) -> Vec<f64> {
        let mut u = self.fixed.clone();
        for &i in &self.interior {
            u[i] = c;
        }
        u
    }

    fn band_value(&self, b: &BandValue, phase: Phase) -> f64 {
        match phase {
            Phase::Max => b.max,
            Phase::Min => b.min,
            Phase::Random => match self.variant {
                Variant::SpencerInterpolated { p_interp } if p_interp.is_finite() => {
                    let pi = 1.0 / p_interp;
                    pi * b.max + (1.0 - pi) * 0.5 * (b.max + b.min)
                }
                _ => 0.5 * (b.max + b.min),
            },
        }
    }

    #[inline]
    fn tug_extremes(&self, u: &[f64], node: usize) -> (f64, f64) {
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for m in 0..self.tug.len() {
            let e = self.tug.expectation(m, u, node);
            hi = hi.max(e);
            lo = lo.min(e);
        }
        (hi, lo)
    }

    #[inline]
    fn node_update(&self, u: &[f64], node: usize, phase: Phase) -> f64 {
        match phase {
            Phase::Max => self.tug_extremes(u, node).0,
            Phase::Min => self.tug_extremes(u, node).1,
            Phase::Random => {
                let (hi, lo) = self.tug_extremes(u, node);
                let tug = 0.5 * (hi + lo);
                match (&self.spencer, self.variant) {
                    (Some(sp), Variant::SpencerInterpolated { p_interp }) => {
                        let mut best = f64::INFINITY;
                        for m in 0..sp.len() / 2 {
                            let plus = sp.expectation(2 * m, u, node);
                            let minus = sp.expectation(2 * m + 1, u, node);
                            best = best.min(plus.max(minus));
                        }
                        let pi = 1.0 / p_interp;
                        pi * best + (1.0 - pi) * tug
                    }
                    _ => tug,
                }
            }
        }
    }

    fn sweep(&self, u: &[f64], out: &mut [f64], phase: Phase) {
        let updates: Vec<f64> = self
            .interior
            .par_iter()
            .map(|&i| self.node_update(u, i, phase))
            .collect();
        out.copy_from_slice(&self.fixed);
        for (&i, v) in self.interior.iter().zip(updates) {
            out[i] = v;
        }
        if phase != Phase::Random {
            for (i, b) in &self.band {
                out[*i] = self.band_value(b, phase);
            }
        }
    }

    /// One application of the operator (for alternating turns, the
    /// composition of the minimizing and maximizing steps, giving the
    /// value with player I to move).
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), self.len());
        assert_eq!(out.len(), self.len());
        match self.variant {
            Variant::Alternating => {
                let mut mid = vec![0.0; u.len()];
                self.sweep(u, &mut mid, Phase::Min);
                self.sweep(&mid, out, Phase::Max);
            }
            _ => self.sweep(u, out, Phase::Random),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Random,
    Max,
    Min,
}

/// Converged (or iteration-capped) grid value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValueField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub classes: Vec<NodeClass>,
    pub eps: f64,
    pub variant: Variant,
    pub iterations: u64,
    pub residual: f64,
    pub converged: bool,
    pub payoff_range: (f64, f64),
}

/// Value iteration from the midrange of `F`.
pub fn solve_dpp(
    domain: &Domain,
    boundary: &BoundaryFunction,
    noise: &NoiseMeasure,
    constants: &GameConstants,
    eps: f64,
    variant: Variant,
    options: &DppOptions,
) -> Result<ValueField, DppError> {
    let op = BellmanOperator::new(domain, boundary, noise, constants, eps, variant, options.h, options.n_dir)?;
    Ok(iterate(&op, domain, options))
}

fn iterate(op: &BellmanOperator, domain: &Domain, options: &DppOptions) -> ValueField {
    let (lo, hi) = op.payoff_range();
    let tol = options.tol.unwrap_or(1e-6 * (hi - lo));
    let diam = domain.diameter();
    let max_iter = options
        .max_iter
        .unwrap_or_else(|| (10.0 * (diam / op.eps).powi(2)).ceil() as u64);
    let mut u = op.initial_field(0.5 * (lo + hi));
    let mut next = vec![0.0; u.len()];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    while iterations < max_iter {
        op.apply(&u, &mut next);
        iterations += 1;
        residual = u
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut u, &mut next);
        if residual <= tol {
            converged = true;
            break;
        }
    }
    ValueField {
        grid: op.grid.clone(),
        values: u,
        classes: op.classes.clone(),
        eps: op.eps,
        variant: op.variant,
        iterations,
        residual,
        converged,
        payoff_range: (lo, hi),
    }
}

/// Header of the flat binary export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BinaryHeader {
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub order: String,
}

impl ValueField {
    /// Multilinear interpolation of the grid values at `x`.
    pub fn value_at(&self, x: &Vector) -> f64 {
        let d = self.grid.shape.len();
        let strides = self.grid.strides();
        let mut base = [0usize; crate::vector::MAX_DIM];
        let mut frac = [0f64; crate::vector::MAX_DIM];
        for i in 0..d {
            let q = ((x[i] - self.grid.origin[i]) / self.grid.h).clamp(0.0, (self.grid.shape[i] - 1) as f64);
            let f = q.floor().min((self.grid.shape[i] - 2) as f64);
            base[i] = f as usize;
            frac[i] = q - f;
        }
        let mut s = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut lin = 0;
            for i in 0..d {
                let up = (corner >> i) & 1 == 1;
                w *= if up { frac[i] } else { 1.0 - frac[i] };
                lin += (base[i] + up as usize) * strides[i];
            }
            s += w * self.values[lin];
        }
        s
    }

    /// CSV rows `x, y[, z], value, class` for nodes in the closed domain band.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let d = self.grid.shape.len();
        let axes = ["x", "y", "z"];
        writeln!(w, "{},value,class", axes[..d].join(","))?;
        for (idx, class) in self.classes.iter().enumerate() {
            if *class == NodeClass::Outside {
                continue;
            }
            let p = self.grid.point(idx);
            let coords: Vec<String> = p.as_slice().iter().map(|c| format!("{c}")).collect();
            let class = match class {
                NodeClass::Interior => "interior",
                NodeClass::Band => "band",
                NodeClass::Outside => "outside",
            };
            writeln!(w, "{},{},{}", coords.join(","), self.values[idx], class)?;
        }
        Ok(())
    }

    pub fn binary_header(&self) -> BinaryHeader {
        BinaryHeader {
            origin: self.grid.origin.to_vec(),
            spacing: self.grid.h,
            shape: self.grid.shape.clone(),
            dtype: "f64-le".into(),
            order: "first-axis-fastest".into(),
        }
    }

    /// All node values as little-endian f64, first axis fastest.
    pub fn write_binary<W: Write>(&self, mut w: W) -> io::Result<()> {
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Oracle value at `x` with spacing `h` and the grid-error estimate
/// `|u_h(x) - u_2h(x)|` (the coarse solve is exempt from `h <= eps/8`).
#[derive(Debug, Clone)]
pub struct OracleValue {
    pub value: f64,
    pub coarse_value: f64,
    pub grid_error: f64,
    pub fine: ValueField,
}

#[allow(clippy::too_many_arguments)]
pub fn solve_with_error_estimate(
    domain: &Domain,
    boundary: &BoundaryFunction,
    noise: &NoiseMeasure,
    constants: &GameConstants,
    eps: f64,
    variant: Variant,
    options: &DppOptions,
    x: &Vector,
) -> Result<OracleValue, DppError> {
    let fine = solve_dpp(domain, boundary, noise, constants, eps, variant, options)?;
    // the coarse grid relaxes the h <= eps/8 precondition to h <= eps/4
    let coarse_opts = DppOptions {
        h: options.h * 2.0,
        ..options.clone()
    };
    let coarse_op = BellmanOperator::build(
        domain,
        boundary,
        noise,
        constants,
        eps,
        variant,
        coarse_opts.h,
        coarse_opts.n_dir,
        false,
    )?;
    let coarse = iterate(&coarse_op, domain, &coarse_opts);
    let value = fine.value_at(x);
    let coarse_value = coarse.value_at(x);
    Ok(OracleValue {
        value,
        coarse_value,
        grid_error: (value - coarse_value).abs(),
        fine,
    })
}
