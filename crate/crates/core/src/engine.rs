//! One play of the game.
//!
//! Each turn a mover is selected (fair coin, alternation, or a Spencer
//! phase). If the token is within `alpha * eps` of the boundary the mover
//! picks an exit point within that distance and the game ends; otherwise the
//! mover picks `v` with `|v| <= eps` and the token moves to `x + v + z`
//! with `z ~ mu_v`. A running payoff `f(x_{k-1}) eps^2` accrues on every
//! turn, including the terminating one. Games still running at the step cap
//! pay only the accrued running payoff.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculus::ScalarField;
use crate::geometry::{best_candidate, BoundaryFunction, Domain, GeometryError};
use crate::noise::{derive_constants, sample_noise, GameConstants, NoiseError, NoiseMeasure, TurnMode};
use crate::rng::{play_rng, GameRng};
use crate::strategy::{ExitPreference, History, Mover, Player, Step, Strategy};
use crate::vector::Vector;

/// Smallest step size the shrinking game will use.
pub const MIN_SHRINKING_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid game configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite position {position} after step {step}")]
    NonFinite { step: u64, position: Vector },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum Variant {
    RandomTurn,
    /// Player I moves on odd turns, player II on even turns.
    Alternating,
    /// With probability `1/p_interp` a Spencer phase (II offers a direction
    /// of length `eps`, I picks its sign), otherwise an ordinary noiseless
    /// tug-of-war turn. `p_interp = inf` never draws the phase coin.
    SpencerInterpolated { p_interp: f64 },
}

impl Variant {
    pub fn turn_mode(&self) -> TurnMode {
        match self {
            Variant::Alternating => TurnMode::Alternating,
            _ => TurnMode::Random,
        }
    }
}

/// Who acts on a turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turn {
    Player(Player),
    Spencer,
}

/// Mover for turn `k` (1-based).
#[inline]
pub fn turn_order(variant: &Variant, k: u64, rng: &mut GameRng) -> Turn {
    match variant {
        Variant::RandomTurn => Turn::Player(coin(rng)),
        Variant::Alternating => Turn::Player(if k % 2 == 1 { Player::One } else { Player::Two }),
        Variant::SpencerInterpolated { p_interp } => {
            if p_interp.is_finite() && rng.gen::<f64>() < 1.0 / p_interp {
                Turn::Spencer
            } else {
                Turn::Player(coin(rng))
            }
        }
    }
}

#[inline]
fn coin(rng: &mut GameRng) -> Player {
    if rng.gen::<bool>() {
        Player::One
    } else {
        Player::Two
    }
}

/// Per-step payment `f(x) eps^2`.
#[derive(Clone)]
pub enum RunningPayoff {
    Constant(f64),
    Field(Arc<dyn ScalarField>),
}

impl RunningPayoff {
    #[inline]
    pub fn eval(&self, x: &Vector) -> f64 {
        match self {
            RunningPayoff::Constant(c) => *c,
            RunningPayoff::Field(f) => f.value(x),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            RunningPayoff::Constant(c) => format!("constant({c})"),
            RunningPayoff::Field(f) => f.name(),
        }
    }
}

impl std::fmt::Debug for RunningPayoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.describe())
    }
}

/// How the step size depends on the position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum EpsRule {
    /// `eps` throughout.
    Fixed,
    /// `clamp(ratio * dist(x, boundary), floor, eps)`: large steps in the
    /// bulk, exactly `floor` once within `floor / ratio` of the boundary.
    /// Termination is only possible at the floor when `alpha * ratio < 1`.
    Graded { ratio: f64, floor: f64 },
}

/// `eps_m = eps0 2^-m`, advanced at every trigger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkSchedule {
    pub eps0: f64,
}

#[derive(Debug, Clone)]
pub struct GameConfig {
    pub domain: Domain,
    pub noise: NoiseMeasure,
    pub constants: GameConstants,
    pub eps: f64,
    pub variant: Variant,
    pub boundary: BoundaryFunction,
    pub running_payoff: Option<RunningPayoff>,
    pub step_cap: u64,
    pub shrink_schedule: Option<ShrinkSchedule>,
    pub eps_rule: EpsRule,
    pub start: Vector,
    pub record_history: bool,
    /// Plays that leave this ball stop with no terminal payoff.
    pub leash: Option<Leash>,
}

/// Open ball `|x - center| < radius` a play must stay in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leash {
    pub center: Vector,
    pub radius: f64,
}

/// `50 eps^-2 diam^2`, at least 1.
pub fn default_step_cap(eps: f64, diameter: f64) -> u64 {
    (50.0 * diameter * diameter / (eps * eps)).ceil().clamp(1.0, 1e15) as u64
}

impl GameConfig {
    /// Configuration with constants derived from `noise` for the variant's
    /// turn mode, the default step cap, no running payoff and fixed `eps`.
    pub fn new(
        domain: Domain,
        noise: NoiseMeasure,
        variant: Variant,
        eps: f64,
        boundary: BoundaryFunction,
        start: Vector,
    ) -> Result<Self, EngineError> {
        let constants = derive_constants(&noise, variant.turn_mode())?;
        let cfg = Self {
            step_cap: default_step_cap(eps, domain.diameter()),
            domain,
            noise,
            constants,
            eps,
            variant,
            boundary,
            running_payoff: None,
            shrink_schedule: None,
            eps_rule: EpsRule::Fixed,
            start,
            record_history: false,
            leash: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_running_payoff(mut self, f: RunningPayoff) -> Self {
        self.running_payoff = Some(f);
        self
    }

    pub fn with_step_cap(mut self, cap: u64) -> Self {
        self.step_cap = cap;
        self
    }

    pub fn with_eps_rule(mut self, rule: EpsRule) -> Self {
        self.eps_rule = rule;
        self
    }

    pub fn with_shrink_schedule(mut self, schedule: ShrinkSchedule) -> Self {
        self.shrink_schedule = Some(schedule);
        self
    }

    pub fn with_start(mut self, start: Vector) -> Self {
        self.start = start;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_leash(mut self, center: Vector, radius: f64) -> Self {
        self.leash = Some(Leash { center, radius });
        self
    }

    pub fn recording(mut self, on: bool) -> Self {
        self.record_history = on;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: String| Err(EngineError::InvalidConfig(msg));
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if self.step_cap < 1 {
            return bad("step_cap must be at least 1".into());
        }
        let d = self.domain.dim();
        if self.noise.dim() != d || self.start.dim() != d {
            return bad(format!(
                "dimension mismatch: domain {d}, noise {}, start {}",
                self.noise.dim(),
                self.start.dim()
            ));
        }
        if !self.domain.contains(&self.start) {
            return bad(format!("start {} is not inside the domain", self.start));
        }
        if self.constants.turn_mode != self.variant.turn_mode() {
            return bad("constants were derived for a different turn mode".into());
        }
        if let Variant::SpencerInterpolated { p_interp } = self.variant {
            if !(p_interp >= 1.0) {
                return bad(format!("p_interp must lie in [1, inf], got {p_interp}"));
            }
            if !self.noise.is_point_mass() {
                return bad("the Spencer-interpolated game is played without noise".into());
            }
        }
        if let EpsRule::Graded { ratio, floor } = self.eps_rule {
            if !(ratio > 0.0 && floor > 0.0 && floor <= self.eps) {
                return bad(format!(
                    "graded step needs ratio > 0 and 0 < floor <= eps, got ratio {ratio}, floor {floor}"
                ));
            }
        }
        if let Some(s) = self.shrink_schedule {
            if !(s.eps0 > 0.0 && s.eps0.is_finite()) {
                return bad(format!("shrink schedule eps0 must be positive, got {}", s.eps0));
            }
        }
        if let Some(l) = self.leash {
            if l.center.dim() != d || !(l.radius > 0.0) {
                return bad(format!("leash needs a positive radius in dimension {d}"));
            }
            if (self.start - l.center).norm() >= l.radius {
                return bad("start lies outside the leash".into());
            }
            if self.shrink_schedule.is_some() {
                return bad("leashes are not supported in the shrinking game".into());
            }
        }
        Ok(())
    }

    /// Stable text description used for fingerprints.
    pub fn describe(&self) -> String {
        format!(
            "domain={:?};noise={:?};constants={:?};eps={:e};variant={:?};boundary={};running={:?};cap={};shrink={:?};eps_rule={:?};start={:?};leash={:?}",
            self.domain.kind(),
            self.noise.kind(),
            self.constants,
            self.eps,
            self.variant,
            self.boundary.describe(),
            self.running_payoff,
            self.step_cap,
            self.shrink_schedule,
            self.eps_rule,
            self.start,
            self.leash,
        )
    }

    #[inline]
    fn step_size(&self, dist: f64) -> f64 {
        match self.eps_rule {
            EpsRule::Fixed => self.eps,
            EpsRule::Graded { ratio, floor } => (ratio * dist).clamp(floor, self.eps),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeFlags {
    /// Moves longer than `eps` that were clamped.
    pub clamp_violations: u32,
    /// Shrinking game: payoff taken at the nearest boundary point of the
    /// final position rather than over limit points.
    pub shrinking_proxy: bool,
    /// Shrinking game: the schedule went below `MIN_SHRINKING_EPS`.
    pub schedule_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub terminal_point: Option<Vector>,
    pub payoff: f64,
    pub running_total: f64,
    pub steps: u64,
    pub terminated: bool,
    pub cap_hit: bool,
    /// The play left the leash ball.
    pub escaped: bool,
    pub final_position: Vector,
    pub flags: OutcomeFlags,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<Step>>,
    /// `(seed, play index)` when the play owned its stream.
    pub seed: Option<(u64, u64)>,
}

/// Exit point for a preference among the reachable candidates.
pub fn choose_exit(
    domain: &Domain,
    boundary: &BoundaryFunction,
    x: &Vector,
    budget: f64,
    preference: ExitPreference,
) -> Result<Vector, GeometryError> {
    match preference {
        ExitPreference::Nearest => domain.exit_point(x, budget, None),
        ExitPreference::Direction(v) => domain.exit_point(x, budget, Some(&v)),
        ExitPreference::Toward(t) => {
            let c = domain.exit_candidates(x, budget)?;
            Ok(best_candidate(&c, |y| -(*y - t).norm()))
        }
        ExitPreference::MaximizePayoff => {
            let c = domain.exit_candidates(x, budget)?;
            Ok(best_candidate(&c, |y| boundary.eval(y)))
        }
        ExitPreference::MinimizePayoff => {
            let c = domain.exit_candidates(x, budget)?;
            Ok(best_candidate(&c, |y| -boundary.eval(y)))
        }
    }
}

#[inline]
fn clamp_move(v: Vector, eps: f64, flags: &mut OutcomeFlags) -> Vector {
    let n = v.norm();
    if n > eps * (1.0 + 1e-12) {
        flags.clamp_violations += 1;
        v * (eps / n)
    } else {
        v
    }
}

fn strategy_for<'a>(p: Player, one: &'a dyn Strategy, two: &'a dyn Strategy) -> &'a dyn Strategy {
    match p {
        Player::One => one,
        Player::Two => two,
    }
}

/// Plays one game with a caller-owned stream.
pub fn play(
    config: &GameConfig,
    one: &dyn Strategy,
    two: &dyn Strategy,
    rng: &mut GameRng,
) -> Result<Outcome, EngineError> {
    let recording = config.record_history || one.needs_history() || two.needs_history();
    let mut history = History::new(config.start, recording);
    play_with(config, one, two, rng, &mut history)
}

/// Plays one game on stream `(seed, index)`.
pub fn play_seeded(
    config: &GameConfig,
    one: &dyn Strategy,
    two: &dyn Strategy,
    seed: u64,
    index: u64,
) -> Result<Outcome, EngineError> {
    let mut rng = play_rng(seed, index);
    let mut out = if config.shrink_schedule.is_some() {
        play_shrinking(config, one, two, &mut rng)?
    } else {
        play(config, one, two, &mut rng)?
    };
    out.seed = Some((seed, index));
    Ok(out)
}

/// As [`play`], reusing a history buffer.
pub fn play_with(
    config: &GameConfig,
    one: &dyn Strategy,
    two: &dyn Strategy,
    rng: &mut GameRng,
    history: &mut History,
) -> Result<Outcome, EngineError> {
    history.reset(config.start);
    let alpha = config.constants.alpha;
    let mut flags = OutcomeFlags::default();
    let mut running = 0.0;
    let mut x = config.start;
    for k in 1..=config.step_cap {
        let dist = config.domain.dist_to_boundary(&x);
        let eps = config.step_size(dist);
        let turn = turn_order(&config.variant, k, rng);
        if let Some(f) = &config.running_payoff {
            running += f.eval(&x) * eps * eps;
        }
        if dist <= alpha * eps {
            let chooser = match turn {
                Turn::Player(p) => p,
                Turn::Spencer => Player::One,
            };
            let pref = strategy_for(chooser, one, two).exit_preference(chooser, history);
            let y = choose_exit(&config.domain, &config.boundary, &x, alpha * eps, pref)?;
            history.push(chooser.into(), y - x, Vector::zeros(x.dim()), y);
            history.mark_terminated();
            let terminal = config.boundary.eval(&y);
            return Ok(Outcome {
                terminal_point: Some(y),
                payoff: terminal + running,
                running_total: running,
                steps: k,
                terminated: true,
                cap_hit: false,
                escaped: false,
                final_position: y,
                flags,
                history: recording_of(history),
                seed: None,
            });
        }
        let (mover, v, z) = match turn {
            Turn::Player(p) => {
                let v = strategy_for(p, one, two).choose_move(p, history, eps, rng);
                let v = clamp_move(v, eps, &mut flags);
                (Mover::from(p), v, sample_noise(&config.noise, &v, rng))
            }
            Turn::Spencer => {
                let w = two.choose_direction(history, eps, rng);
                let w = match w.normalized() {
                    Some(u) => u * eps,
                    None => Vector::basis(x.dim(), 0) * eps,
                };
                let sigma = one.choose_sign(history, &w, eps, rng);
                let sigma = if sigma >= 0.0 { 1.0 } else { -1.0 };
                (Mover::Spencer, w * sigma, Vector::zeros(x.dim()))
            }
        };
        x = x + v + z;
        if !x.is_finite() {
            return Err(EngineError::NonFinite { step: k, position: x });
        }
        history.push(mover, v, z, x);
        if let Some(l) = &config.leash {
            if (x - l.center).norm() >= l.radius {
                return Ok(Outcome {
                    terminal_point: None,
                    payoff: running,
                    running_total: running,
                    steps: k,
                    terminated: false,
                    cap_hit: false,
                    escaped: true,
                    final_position: x,
                    flags,
                    history: recording_of(history),
                    seed: None,
                });
            }
        }
    }
    Ok(Outcome {
        terminal_point: None,
        payoff: running,
        running_total: running,
        steps: config.step_cap,
        terminated: false,
        cap_hit: true,
        escaped: false,
        final_position: x,
        flags,
        history: recording_of(history),
        seed: None,
    })
}

fn recording_of(history: &History) -> Option<Vec<Step>> {
    history.is_recording().then(|| history.steps().to_vec())
}

/// Shrinking-step game with the deterministic halving schedule.
///
/// At the start and whenever the token comes within `alpha * eps` of the
/// boundary or first reaches a new dyadic distance `2^-m`, the schedule
/// advances by one halving, and further until `dist > alpha * eps`. Moves
/// therefore never reach the boundary; the play runs to the step cap (or
/// until `eps` would drop below [`MIN_SHRINKING_EPS`]) and pays `F` at the
/// nearest boundary point of the final position plus any running payoff.
pub fn play_shrinking(
    config: &GameConfig,
    one: &dyn Strategy,
    two: &dyn Strategy,
    rng: &mut GameRng,
) -> Result<Outcome, EngineError> {
    let schedule = config.shrink_schedule.ok_or_else(|| {
        EngineError::InvalidConfig("shrinking play requires a shrink schedule".into())
    })?;
    let recording = config.record_history || one.needs_history() || two.needs_history();
    let mut history = History::new(config.start, recording);
    let alpha = config.constants.alpha;
    let mut flags = OutcomeFlags {
        shrinking_proxy: true,
        ..Default::default()
    };
    let mut running = 0.0;
    let mut x = config.start;
    let mut level: i32 = 0;
    let mut eps = schedule.eps0;
    // deepest m with dist <= 2^-m seen so far
    let mut dyadic = dyadic_level(config.domain.dist_to_boundary(&x));
    let mut steps = 0;
    let mut exhausted = false;
    // initial choice must satisfy dist > alpha eps
    let dist0 = config.domain.dist_to_boundary(&x);
    while dist0 <= alpha * eps {
        level += 1;
        eps = schedule.eps0 * 2f64.powi(-level);
        if eps < MIN_SHRINKING_EPS {
            exhausted = true;
            break;
        }
    }
    if !exhausted {
        for k in 1..=config.step_cap {
            let turn = turn_order(&config.variant, k, rng);
            if let Some(f) = &config.running_payoff {
                running += f.eval(&x) * eps * eps;
            }
            let (mover, v, z) = match turn {
                Turn::Player(p) => {
                    let v = strategy_for(p, one, two).choose_move(p, &history, eps, rng);
                    let v = clamp_move(v, eps, &mut flags);
                    (Mover::from(p), v, sample_noise(&config.noise, &v, rng))
                }
                Turn::Spencer => {
                    let w = two.choose_direction(&history, eps, rng);
                    let w = w.normalized().map_or(Vector::basis(x.dim(), 0) * eps, |u| u * eps);
                    let sigma = if one.choose_sign(&history, &w, eps, rng) >= 0.0 { 1.0 } else { -1.0 };
                    (Mover::Spencer, w * sigma, Vector::zeros(x.dim()))
                }
            };
            x = x + v + z;
            if !x.is_finite() {
                return Err(EngineError::NonFinite { step: k, position: x });
            }
            history.push(mover, v, z, x);
            steps = k;
            let dist = config.domain.dist_to_boundary(&x);
            let new_dyadic = dyadic_level(dist);
            let trigger = dist <= alpha * eps || new_dyadic > dyadic;
            dyadic = dyadic.max(new_dyadic);
            if trigger {
                level += 1;
                eps = schedule.eps0 * 2f64.powi(-level);
                while dist <= alpha * eps && eps >= MIN_SHRINKING_EPS {
                    level += 1;
                    eps = schedule.eps0 * 2f64.powi(-level);
                }
                if eps < MIN_SHRINKING_EPS {
                    exhausted = true;
                    break;
                }
            }
        }
    }
    flags.schedule_exhausted = exhausted;
    let y = config.domain.nearest_boundary_point(&x);
    let terminal = config.boundary.eval(&y);
    Ok(Outcome {
        terminal_point: Some(y),
        payoff: terminal + running,
        running_total: running,
        steps,
        terminated: false,
        cap_hit: !exhausted,
        escaped: false,
        final_position: x,
        flags,
        history: recording_of(&history),
        seed: None,
    })
}

/// Largest `m >= 0` with `dist <= 2^-m` (0 if `dist > 1/2`).
fn dyadic_level(dist: f64) -> i32 {
    if dist <= 0.0 {
        return i32::MAX;
    }
    let m = (-dist.log2()).floor();
    m.max(0.0).min(2000.0) as i32
}
