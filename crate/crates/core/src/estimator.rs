//! Monte Carlo estimates of game values.
//!
//! Plays are split into fixed chunks of consecutive play indices; each chunk
//! runs sequentially on its own streams and the chunk accumulators are merged
//! in index order, so every estimate is bit-for-bit independent of the
//! number of threads.
//!
//! Players other than the two fixed strategies are approximated by small
//! best-response panels; an estimate over a panel is the panel minimum (or
//! maximum) and should be read as a one-sided bound.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{default_step_cap, play_seeded, EngineError, EpsRule, GameConfig, Outcome};
use crate::geometry::{ArcSet, BoundaryFunction, DomainKind, IndicatorSet};
use crate::rng::derive_seed;
use crate::stats::{line_fit, weighted_line_fit, LineFit, Moments, Z95};
use crate::strategy::{PullAway, PullToward, Strategy, Target, UniformRandom};
use crate::vector::Vector;

/// Plays per work unit.
const CHUNK: u64 = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("invalid estimator parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`.
    pub std_error: f64,
    pub n_plays: u64,
    /// Plays stopped by the step cap; they pay no terminal payoff.
    pub cap_hit_fraction: f64,
    /// Plays stopped by a leash.
    pub escaped_fraction: f64,
    pub mean_steps: f64,
    /// SHA-256 of the configuration description and both strategy names.
    pub fingerprint: String,
    pub seed: u64,
    pub player_one: String,
    pub player_two: String,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    moments: Moments,
    cap_hits: u64,
    escapes: u64,
    steps: u64,
}

impl Tally {
    fn merge(&self, other: &Tally) -> Tally {
        Tally {
            moments: self.moments.merge(&other.moments),
            cap_hits: self.cap_hits + other.cap_hits,
            escapes: self.escapes + other.escapes,
            steps: self.steps + other.steps,
        }
    }
}

/// Hex SHA-256 identifying an experiment.
pub fn fingerprint(config: &GameConfig, one: &dyn Strategy, two: &dyn Strategy) -> String {
    let mut h = Sha256::new();
    h.update(config.describe().as_bytes());
    h.update(b"|I=");
    h.update(one.name().as_bytes());
    h.update(b"|II=");
    h.update(two.name().as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Mean payoff over `n` plays on streams `(seed, 0..n)`.
pub fn estimate_value(
    config: &GameConfig,
    one: &dyn Strategy,
    two: &dyn Strategy,
    n: u64,
    seed: u64,
) -> Result<ValueEstimate, EstimatorError> {
    estimate_by(config, one, two, n, seed, |o| o.payoff)
}

/// As [`estimate_value`] with a custom per-play score.
pub fn estimate_by(
    config: &GameConfig,
    one: &dyn Strategy,
    two: &dyn Strategy,
    n: u64,
    seed: u64,
    score: impl Fn(&Outcome) -> f64 + Sync,
) -> Result<ValueEstimate, EstimatorError> {
    if n < 2 {
        return Err(EstimatorError::InvalidParameter(format!("need at least 2 plays, got {n}")));
    }
    config.validate()?;
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Result<Tally, EngineError>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut t = Tally::default();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                let out = play_seeded(config, one, two, seed, i)?;
                let s = score(&out);
                if !s.is_finite() {
                    return Err(EngineError::NonFinite {
                        step: out.steps,
                        position: out.final_position,
                    });
                }
                t.moments.push(s);
                t.cap_hits += out.cap_hit as u64;
                t.escapes += out.escaped as u64;
                t.steps += out.steps;
            }
            Ok(t)
        })
        .collect();
    let mut total = Tally::default();
    for p in parts {
        total = total.merge(&p?);
    }
    Ok(ValueEstimate {
        mean: total.moments.mean,
        std_error: total.moments.std_error(),
        n_plays: n,
        cap_hit_fraction: total.cap_hits as f64 / n as f64,
        escaped_fraction: total.escapes as f64 / n as f64,
        mean_steps: total.steps as f64 / n as f64,
        fingerprint: fingerprint(config, one, two),
        seed,
        player_one: one.name(),
        player_two: two.name(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub mean: f64,
    pub std_error: f64,
    /// `|mean - reference(x0)|`.
    pub error: f64,
    pub n_plays: u64,
    pub cap_hit_fraction: f64,
    pub fingerprint: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub reference: f64,
    pub rows: Vec<SweepRow>,
    /// Least-squares fit of `ln error` against `ln eps` over rows with a
    /// positive error.
    pub fit: Option<LineFit>,
}

impl SweepTable {
    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// Whether the error shrinks at every refinement (rows sorted by
    /// decreasing `eps`).
    pub fn errors_decrease(&self) -> bool {
        let mut rows: Vec<&SweepRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));
        rows.windows(2).all(|w| w[1].error < w[0].error)
    }
}

/// Child seed for one step size, stable under reordering of the list.
pub fn eps_seed(seed: u64, eps: f64) -> u64 {
    derive_seed(seed, eps.to_bits())
}

/// Estimates the value at each step size and compares with `reference` at
/// the start point. Step caps are rescaled to the default for each `eps`.
pub fn convergence_sweep(
    template: &GameConfig,
    eps_list: &[f64],
    one: &dyn Strategy,
    two: &dyn Strategy,
    reference: &dyn Fn(&Vector) -> f64,
    n: u64,
    seed: u64,
) -> Result<SweepTable, EstimatorError> {
    if eps_list.is_empty() {
        return Err(EstimatorError::InvalidParameter("empty step-size list".into()));
    }
    let target = reference(&template.start);
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let config = template
            .clone()
            .with_eps(eps)
            .with_step_cap(default_step_cap(eps, template.domain.diameter()));
        let s = eps_seed(seed, eps);
        let est = estimate_value(&config, one, two, n, s)?;
        rows.push(SweepRow {
            eps,
            mean: est.mean,
            std_error: est.std_error,
            error: (est.mean - target).abs(),
            n_plays: n,
            cap_hit_fraction: est.cap_hit_fraction,
            fingerprint: est.fingerprint,
            seed: s,
        });
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.error > 0.0)
        .map(|r| (r.eps.ln(), r.error.ln()))
        .unzip();
    Ok(SweepTable {
        reference: target,
        fit: line_fit(&lx, &ly),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityEstimate {
    /// Smallest success frequency over the adversary panel.
    pub theta: f64,
    pub std_error: f64,
    /// Panel member attaining the minimum.
    pub worst_adversary: String,
    pub panel: Vec<ValueEstimate>,
}

/// Boundary point of the domain farthest from `y` among a sample.
fn far_boundary_point(config: &GameConfig, y: &Vector) -> Vector {
    let samples = config.domain.boundary_samples(64);
    let mut best = samples[0];
    let mut best_d = f64::NEG_INFINITY;
    for s in samples {
        let d = (s - *y).norm();
        if d > best_d + 1e-12 || ((d - best_d).abs() <= 1e-12 && s.lex_cmp(&best).is_lt()) {
            best = s;
            best_d = d;
        }
    }
    best
}

/// Probability that player I, pulling toward the boundary point `y`, ends
/// the game at a boundary point within `delta` of `y` without the token
/// ever leaving `B(y, delta)`. Player II is drawn from a panel (pull away
/// from `y`, pull toward the far side of the domain, uniformly random) and
/// the minimum over the panel is reported.
pub fn regularity_probe(
    config: &GameConfig,
    y: Vector,
    delta: f64,
    n: u64,
    seed: u64,
) -> Result<RegularityEstimate, EstimatorError> {
    if !(delta > 0.0) {
        return Err(EstimatorError::InvalidParameter(format!("delta must be positive, got {delta}")));
    }
    let on_boundary = config.domain.dist_to_boundary(&y).abs() <= 1e-9;
    if !on_boundary {
        return Err(EstimatorError::InvalidParameter(format!("{y} is not a boundary point")));
    }
    let mut probe = config.clone().with_leash(y, delta);
    probe.boundary = BoundaryFunction::Indicator(IndicatorSet::Ball { center: y, radius: delta });
    probe.running_payoff = None;
    probe.validate()?;
    let one = PullToward::point(y);
    let panel: Vec<Box<dyn Strategy>> = vec![
        Box::new(PullAway::new(y)),
        Box::new(PullToward::point(far_boundary_point(config, &y))),
        Box::new(UniformRandom),
    ];
    let mut estimates = Vec::with_capacity(panel.len());
    for (k, two) in panel.iter().enumerate() {
        estimates.push(estimate_value(&probe, &one, two.as_ref(), n, derive_seed(seed, k as u64))?);
    }
    let worst = estimates
        .iter()
        .min_by(|a, b| a.mean.total_cmp(&b.mean))
        .expect("panel is not empty")
        .clone();
    Ok(RegularityEstimate {
        theta: worst.mean,
        std_error: worst.std_error,
        worst_adversary: worst.player_two.clone(),
        panel: estimates,
    })
}

/// Middle-fraction Cantor set on an arc of the unit circle around `center`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CantorSpec {
    pub center: Vector,
    /// Angle of the arc midpoint.
    pub mid: f64,
    /// Angular length of the arc.
    pub span: f64,
    /// Fraction removed from the middle of every piece.
    pub ratio: f64,
}

impl CantorSpec {
    pub fn middle_thirds(center: Vector, mid: f64, span: f64) -> Self {
        Self {
            center,
            mid,
            span,
            ratio: 1.0 / 3.0,
        }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(EstimatorError::InvalidParameter(format!(
                "Cantor ratio must lie in (0, 1), got {}",
                self.ratio
            )));
        }
        if !(self.span > 0.0 && self.span < 2.0 * PI) {
            return Err(EstimatorError::InvalidParameter(format!(
                "arc span must lie in (0, 2 pi), got {}",
                self.span
            )));
        }
        Ok(())
    }

    /// Generation `depth` of the construction.
    pub fn generation(&self, depth: u32) -> ArcSet {
        ArcSet::cantor(self.center, self.mid, self.span, self.ratio, depth)
    }

    /// Points of the circle within distance `delta` of the Cantor set.
    pub fn neighborhood(&self, delta: f64) -> ArcSet {
        ArcSet::cantor_neighborhood(self.center, self.mid, self.span, self.ratio, delta)
    }

    /// Porosity constant in arc length: every arc of length `2r <= span`
    /// contains a gap arc of length `2 lambda r`. A generation piece of
    /// length `l <= r < l / keep` containing the arc's center lies in the
    /// arc and its removed middle has half-length `ratio * l / 2`.
    pub fn porosity(&self) -> f64 {
        let keep = (1.0 - self.ratio) / 2.0;
        self.ratio * keep / 2.0
    }
}

/// Step-size rule for the porous experiment: `eps = clamp(ratio * dist,
/// delta * floor_fraction, eps_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradedSteps {
    pub ratio: f64,
    pub eps_max: f64,
    pub floor_fraction: f64,
}

impl Default for GradedSteps {
    fn default() -> Self {
        Self {
            ratio: 0.25,
            eps_max: 0.1,
            floor_fraction: 1.0 / 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorousRow {
    pub delta: f64,
    /// Smallest value over player I's panel.
    pub estimate: f64,
    pub std_error: f64,
    pub best_response: String,
    /// Angular measure of the target set.
    pub set_measure: f64,
    pub fingerprint: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PorousTable {
    pub rows: Vec<PorousRow>,
    /// Estimates strictly decrease as `delta` decreases.
    pub decreasing: bool,
    /// Weighted fit of `ln estimate` against `ln delta`; the slope is the
    /// fitted decay exponent.
    pub fit: Option<LineFit>,
}

impl PorousTable {
    pub fn exponent(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    /// One-sided 95% lower confidence bound on the exponent.
    pub fn exponent_lower_bound(&self) -> Option<f64> {
        self.fit.map(|f| f.slope - Z95 * f.slope_std_error)
    }
}

/// Value at the start point of the game with payoff `1` on the
/// `delta`-neighborhood of the Cantor set, for each `delta`. Player II pulls
/// toward the nearest point of that set; player I is the best of pulling
/// toward the middle of the nearest gap, toward the nearest gap point, and
/// toward the point opposite the arc.
pub fn porous_measure_decay(
    spec: &CantorSpec,
    template: &GameConfig,
    steps: GradedSteps,
    deltas: &[f64],
    n: u64,
    seed: u64,
) -> Result<PorousTable, EstimatorError> {
    spec.validate()?;
    match template.domain.kind() {
        DomainKind::Ball { center, radius } if (*radius - 1.0).abs() < 1e-12 && (*center - spec.center).norm() < 1e-12 => {}
        _ => {
            return Err(EstimatorError::InvalidParameter(
                "the porous experiment runs on the unit disc around the Cantor arc's center".into(),
            ))
        }
    }
    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        if !(delta > 0.0) {
            return Err(EstimatorError::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        let set = Arc::new(spec.neighborhood(delta));
        let floor = delta * steps.floor_fraction;
        let eps = steps.eps_max.max(floor);
        let mut config = template
            .clone()
            .with_eps(eps)
            .with_eps_rule(EpsRule::Graded {
                ratio: steps.ratio,
                floor,
            })
            .with_step_cap(default_step_cap(floor, 2.0));
        config.boundary = BoundaryFunction::Indicator(IndicatorSet::Arcs((*set).clone()));
        let c = spec.center;
        let on_circle = move |theta: f64| c + Vector::new2(theta.cos(), theta.sin());
        let toward_set = {
            let set = Arc::clone(&set);
            Target::dynamic("nearest-target-point", move |x: &Vector| {
                on_circle(set.nearest_angle(set.angle_of(x)))
            })
        };
        let gap_edge = {
            let set = Arc::clone(&set);
            Target::dynamic("nearest-gap-edge", move |x: &Vector| {
                let theta = set.angle_of(x);
                on_circle(set.nearest_gap_angle(theta).unwrap_or(theta + PI))
            })
        };
        let gap_middle = {
            let set = Arc::clone(&set);
            Target::dynamic("nearest-gap-middle", move |x: &Vector| {
                let theta = set.angle_of(x);
                on_circle(set.nearest_gap_midpoint(theta).unwrap_or(theta + PI))
            })
        };
        let two = PullToward::new(toward_set);
        let panel: Vec<PullToward> = vec![
            PullToward::new(gap_middle),
            PullToward::new(gap_edge),
            PullToward::point(on_circle(spec.mid + PI)),
        ];
        let s = derive_seed(seed, delta.to_bits());
        let mut best: Option<ValueEstimate> = None;
        for (k, one) in panel.iter().enumerate() {
            let est = estimate_value(&config, one, &two, n, derive_seed(s, k as u64))?;
            if best.as_ref().map_or(true, |b| est.mean < b.mean) {
                best = Some(est);
            }
        }
        let best = best.expect("panel is not empty");
        rows.push(PorousRow {
            delta,
            estimate: best.mean,
            std_error: best.std_error,
            best_response: best.player_one,
            set_measure: set.measure(),
            fingerprint: best.fingerprint,
            seed: s,
        });
    }
    rows.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let decreasing = rows.windows(2).all(|w| w[1].estimate < w[0].estimate);
    let usable: Vec<&PorousRow> = rows.iter().filter(|r| r.estimate > 0.0).collect();
    let x: Vec<f64> = usable.iter().map(|r| r.delta.ln()).collect();
    let y: Vec<f64> = usable.iter().map(|r| r.estimate.ln()).collect();
    // delta method: var(ln m) ~ se^2 / m^2
    let var: Vec<f64> = usable
        .iter()
        .map(|r| (r.std_error / r.estimate).powi(2).max(1e-12))
        .collect();
    Ok(PorousTable {
        fit: weighted_line_fit(&x, &y, &var),
        decreasing,
        rows,
    })
}
