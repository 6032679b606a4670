//! Player strategies.
//!
//! A strategy maps the game history to a move of length at most `eps`. The
//! built-ins only look at the current position, but the interface passes
//! the whole [`History`] so custom strategies can do more (the engine
//! records full histories for strategies that ask for them).

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calculus::{optimal_move, QuadraticModel, ScalarField, GRADIENT_FLOOR};
use crate::noise::GameConstants;
use crate::rng::GameRng;
use crate::vector::Vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Player {
    One,
    Two,
}

/// Who produced a recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mover {
    One,
    Two,
    /// Spencer phase: II chose the direction, I the sign.
    Spencer,
}

impl From<Player> for Mover {
    fn from(p: Player) -> Self {
        match p {
            Player::One => Mover::One,
            Player::Two => Mover::Two,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub step: usize,
    pub mover: Mover,
    pub v: Vector,
    pub z: Vector,
    pub x: Vector,
}

/// `x_0, v_1, x_1, ..., v_k, x_k`. Individual steps are kept only when
/// recording is on; the current position and step count are always tracked.
#[derive(Debug, Clone)]
pub struct History {
    start: Vector,
    position: Vector,
    moves: usize,
    recording: bool,
    steps: Vec<Step>,
    terminated: bool,
}

impl History {
    pub fn new(start: Vector, recording: bool) -> Self {
        Self {
            start,
            position: start,
            moves: 0,
            recording,
            steps: Vec::new(),
            terminated: false,
        }
    }

    /// Resets to a fresh history at `start`, keeping the step buffer.
    pub fn reset(&mut self, start: Vector) {
        self.start = start;
        self.position = start;
        self.moves = 0;
        self.steps.clear();
        self.terminated = false;
    }

    #[inline]
    pub fn position(&self) -> Vector {
        self.position
    }

    pub fn start(&self) -> Vector {
        self.start
    }

    /// Number of moves made so far (`k`).
    #[inline]
    pub fn len(&self) -> usize {
        self.moves
    }

    pub fn is_empty(&self) -> bool {
        self.moves == 0
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    #[inline]
    pub fn push(&mut self, mover: Mover, v: Vector, z: Vector, x: Vector) {
        self.moves += 1;
        self.position = x;
        if self.recording {
            self.steps.push(Step {
                step: self.moves,
                mover,
                v,
                z,
                x,
            });
        }
    }

    pub fn set_position(&mut self, x: Vector) {
        self.position = x;
    }

    pub fn mark_terminated(&mut self) {
        self.terminated = true;
    }

    pub fn into_steps(self) -> Vec<Step> {
        self.steps
    }
}

/// How a terminating player picks the exit point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExitPreference {
    Nearest,
    /// Maximize `(y, direction)` over the candidates.
    Direction(Vector),
    /// Minimize `|y - target|` over the candidates.
    Toward(Vector),
    MaximizePayoff,
    MinimizePayoff,
}

pub trait Strategy: Send + Sync {
    /// Move `v` with `|v| <= eps` for the player who won the turn.
    fn choose_move(&self, player: Player, history: &History, eps: f64, rng: &mut GameRng) -> Vector;

    /// Spencer phase, player I: sign applied to the opponent's direction.
    /// Defaults to agreeing with this strategy's own move (`+1` on ties).
    fn choose_sign(&self, history: &History, candidate: &Vector, eps: f64, rng: &mut GameRng) -> f64 {
        let own = self.choose_move(Player::One, history, eps, rng);
        if candidate.dot(&own) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Spencer phase, player II: direction of length exactly `eps`.
    fn choose_direction(&self, history: &History, eps: f64, rng: &mut GameRng) -> Vector {
        let v = self.choose_move(Player::Two, history, eps, rng);
        match v.normalized() {
            Some(u) => u * eps,
            None => Vector::basis(v.dim(), 0) * eps,
        }
    }

    /// Exit choice when this player wins a terminating turn.
    fn exit_preference(&self, player: Player, _history: &History) -> ExitPreference {
        match player {
            Player::One => ExitPreference::MaximizePayoff,
            Player::Two => ExitPreference::MinimizePayoff,
        }
    }

    /// Whether the strategy needs recorded steps (not just the position).
    fn needs_history(&self) -> bool {
        false
    }

    fn name(&self) -> String;
}

impl<S: Strategy + ?Sized> Strategy for Arc<S> {
    fn choose_move(&self, player: Player, history: &History, eps: f64, rng: &mut GameRng) -> Vector {
        (**self).choose_move(player, history, eps, rng)
    }
    fn choose_sign(&self, history: &History, candidate: &Vector, eps: f64, rng: &mut GameRng) -> f64 {
        (**self).choose_sign(history, candidate, eps, rng)
    }
    fn choose_direction(&self, history: &History, eps: f64, rng: &mut GameRng) -> Vector {
        (**self).choose_direction(history, eps, rng)
    }
    fn exit_preference(&self, player: Player, history: &History) -> ExitPreference {
        (**self).exit_preference(player, history)
    }
    fn needs_history(&self) -> bool {
        (**self).needs_history()
    }
    fn name(&self) -> String {
        (**self).name()
    }
}

/// Uniform direction on the unit sphere.
pub fn random_unit(dim: usize, rng: &mut GameRng) -> Vector {
    if dim == 2 {
        let a = rng.gen::<f64>() * std::f64::consts::TAU;
        return Vector::new2(a.cos(), a.sin());
    }
    loop {
        let mut v = Vector::zeros(dim);
        for i in 0..dim {
            v[i] = StandardNormal.sample(rng);
        }
        if let Some(u) = v.normalized() {
            return u;
        }
    }
}

/// A unit vector orthogonal to `u` (90 degree rotation in the plane).
pub fn perpendicular(u: &Vector) -> Vector {
    if u.dim() == 2 {
        return Vector::new2(-u[1], u[0]);
    }
    let mut k = 0;
    for i in 1..u.dim() {
        if u[i].abs() < u[k].abs() {
            k = i;
        }
    }
    let b = Vector::basis(u.dim(), k);
    (b - *u * (u.dot(&b) / u.norm_squared()))
        .normalized()
        .unwrap_or(b)
}

/// `v = +-eps grad u / |grad u|`.
pub struct Gradient {
    field: Arc<dyn ScalarField>,
    ascend: bool,
    fallbacks: Arc<AtomicU64>,
}

impl Gradient {
    /// Moves up the gradient (player I's choice).
    pub fn ascend(field: Arc<dyn ScalarField>) -> Self {
        Self {
            field,
            ascend: true,
            fallbacks: Arc::new(AtomicU64::new(0)),
        }
    }

    /// Moves down the gradient (player II's choice).
    pub fn descend(field: Arc<dyn ScalarField>) -> Self {
        Self {
            field,
            ascend: false,
            fallbacks: Arc::new(AtomicU64::new(0)),
        }
    }

    /// Number of moves where the gradient vanished and a random move was used.
    pub fn fallback_count(&self) -> u64 {
        self.fallbacks.load(Ordering::Relaxed)
    }

    pub fn field(&self) -> &Arc<dyn ScalarField> {
        &self.field
    }

    fn direction(&self, x: &Vector) -> Option<Vector> {
        let g = self.field.gradient(x);
        let n = g.norm();
        (n > GRADIENT_FLOOR && n.is_finite()).then(|| g * (1.0 / n))
    }
}

impl fmt::Debug for Gradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl Strategy for Gradient {
    #[inline]
    fn choose_move(&self, _player: Player, history: &History, eps: f64, rng: &mut GameRng) -> Vector {
        let x = history.position();
        match self.direction(&x) {
            Some(u) => {
                if self.ascend {
                    u * eps
                } else {
                    u * -eps
                }
            }
            None => {
                self.fallbacks.fetch_add(1, Ordering::Relaxed);
                random_unit(x.dim(), rng) * eps
            }
        }
    }

    fn choose_direction(&self, history: &History, eps: f64, rng: &mut GameRng) -> Vector {
        // the sign-chooser will align any direction with the gradient, so
        // the minimizer offers one orthogonal to it
        let x = history.position();
        match self.direction(&x) {
            Some(u) => perpendicular(&u) * eps,
            None => {
                self.fallbacks.fetch_add(1, Ordering::Relaxed);
                random_unit(x.dim(), rng) * eps
            }
        }
    }

    fn exit_preference(&self, _player: Player, _history: &History) -> ExitPreference {
        if self.ascend {
            ExitPreference::MaximizePayoff
        } else {
            ExitPreference::MinimizePayoff
        }
    }

    fn name(&self) -> String {
        format!(
            "gradient-{}({})",
            if self.ascend { "ascend" } else { "descend" },
            self.field.name()
        )
    }
}

/// Where a pull strategy is heading.
#[derive(Clone)]
pub enum Target {
    Point(Vector),
    /// Target depending on the current position (e.g. the nearest point of a set).
    Dynamic {
        name: String,
        f: Arc<dyn Fn(&Vector) -> Vector + Send + Sync>,
    },
}

impl Target {
    pub fn dynamic(name: impl Into<String>, f: impl Fn(&Vector) -> Vector + Send + Sync + 'static) -> Self {
        Target::Dynamic {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    #[inline]
    pub fn at(&self, x: &Vector) -> Vector {
        match self {
            Target::Point(z) => *z,
            Target::Dynamic { f, .. } => f(x),
        }
    }

    fn describe(&self) -> String {
        match self {
            Target::Point(z) => format!("{z}"),
            Target::Dynamic { name, .. } => name.clone(),
        }
    }
}

/// `v = eps (z - x)/|z - x|`, or `z - x` when closer than `eps`.
pub fn pull_move(x: &Vector, z: &Vector, eps: f64) -> Vector {
    let w = *z - *x;
    let n = w.norm();
    if n <= eps {
        w
    } else {
        w * (eps / n)
    }
}

/// Tug toward a target; exits as close to the target as possible.
pub struct PullToward {
    target: Target,
}

impl PullToward {
    pub fn new(target: Target) -> Self {
        Self { target }
    }

    pub fn point(z: Vector) -> Self {
        Self::new(Target::Point(z))
    }
}

impl Strategy for PullToward {
    #[inline]
    fn choose_move(&self, _player: Player, history: &History, eps: f64, _rng: &mut GameRng) -> Vector {
        let x = history.position();
        pull_move(&x, &self.target.at(&x), eps)
    }

    fn exit_preference(&self, _player: Player, history: &History) -> ExitPreference {
        ExitPreference::Toward(self.target.at(&history.position()))
    }

    fn name(&self) -> String {
        format!("pull-toward({})", self.target.describe())
    }
}

/// Tug directly away from a point; exits as far from it as possible.
pub struct PullAway {
    source: Vector,
}

impl PullAway {
    pub fn new(source: Vector) -> Self {
        Self { source }
    }
}

impl Strategy for PullAway {
    fn choose_move(&self, _player: Player, history: &History, eps: f64, rng: &mut GameRng) -> Vector {
        let x = history.position();
        match (x - self.source).normalized() {
            Some(u) => u * eps,
            None => random_unit(x.dim(), rng) * eps,
        }
    }

    fn exit_preference(&self, _player: Player, history: &History) -> ExitPreference {
        ExitPreference::Direction(history.position() - self.source)
    }

    fn name(&self) -> String {
        format!("pull-away({})", self.source)
    }
}

/// Uniformly random direction of length `eps`; nearest-point exits.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformRandom;

impl Strategy for UniformRandom {
    fn choose_move(&self, _player: Player, history: &History, eps: f64, rng: &mut GameRng) -> Vector {
        random_unit(history.position().dim(), rng) * eps
    }

    fn choose_sign(&self, _history: &History, _candidate: &Vector, _eps: f64, rng: &mut GameRng) -> f64 {
        if rng.gen::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    fn exit_preference(&self, _player: Player, _history: &History) -> ExitPreference {
        ExitPreference::Nearest
    }

    fn name(&self) -> String {
        "uniform-random".into()
    }
}

/// Optimizes the expected value of the local quadratic model of `u`.
pub struct QuadraticOptimal {
    field: Arc<dyn ScalarField>,
    constants: GameConstants,
    maximize: bool,
    step: f64,
}

impl QuadraticOptimal {
    pub fn new(field: Arc<dyn ScalarField>, constants: GameConstants, maximize: bool) -> Self {
        Self {
            field,
            constants,
            maximize,
            step: 1e-4,
        }
    }
}

impl Strategy for QuadraticOptimal {
    fn choose_move(&self, _player: Player, history: &History, eps: f64, rng: &mut GameRng) -> Vector {
        let x = history.position();
        let u = |y: &Vector| self.field.value(y);
        let model = QuadraticModel::from_field(&u, &x, self.step * (1.0 + x.norm()));
        match optimal_move(&model, eps, &self.constants, self.maximize) {
            Ok(mv) => mv.v,
            Err(_) => random_unit(x.dim(), rng) * eps,
        }
    }

    fn exit_preference(&self, _player: Player, _history: &History) -> ExitPreference {
        if self.maximize {
            ExitPreference::MaximizePayoff
        } else {
            ExitPreference::MinimizePayoff
        }
    }

    fn name(&self) -> String {
        format!(
            "quadratic-optimal-{}({})",
            if self.maximize { "max" } else { "min" },
            self.field.name()
        )
    }
}

/// Player I in the Spencer phase: keep the sign that makes the offered
/// direction non-negative against `grad u` (`+1` on ties); tug along the
/// gradient otherwise.
pub struct SpencerSign {
    inner: Gradient,
}

impl SpencerSign {
    pub fn new(field: Arc<dyn ScalarField>) -> Self {
        Self {
            inner: Gradient::ascend(field),
        }
    }

    pub fn sign(&self, x: &Vector, candidate: &Vector) -> f64 {
        let g = self.inner.field.gradient(x);
        if candidate.dot(&g) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

impl Strategy for SpencerSign {
    fn choose_move(&self, player: Player, history: &History, eps: f64, rng: &mut GameRng) -> Vector {
        self.inner.choose_move(player, history, eps, rng)
    }

    fn choose_sign(&self, history: &History, candidate: &Vector, _eps: f64, _rng: &mut GameRng) -> f64 {
        self.sign(&history.position(), candidate)
    }

    fn choose_direction(&self, history: &History, eps: f64, rng: &mut GameRng) -> Vector {
        self.inner.choose_direction(history, eps, rng)
    }

    fn name(&self) -> String {
        format!("spencer-sign({})", self.inner.field.name())
    }
}

type MoveFn = dyn Fn(&History, f64, &mut GameRng) -> Vector + Send + Sync;

/// Strategy from a closure; custom closures must be reentrant.
pub struct FnStrategy {
    name: String,
    f: Box<MoveFn>,
    exit: Option<ExitPreference>,
    needs_history: bool,
}

impl FnStrategy {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&History, f64, &mut GameRng) -> Vector + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            f: Box::new(f),
            exit: None,
            needs_history: false,
        }
    }

    pub fn with_exit(mut self, exit: ExitPreference) -> Self {
        self.exit = Some(exit);
        self
    }

    pub fn with_history(mut self) -> Self {
        self.needs_history = true;
        self
    }
}

impl Strategy for FnStrategy {
    fn choose_move(&self, _player: Player, history: &History, eps: f64, rng: &mut GameRng) -> Vector {
        (self.f)(history, eps, rng)
    }

    fn exit_preference(&self, player: Player, _history: &History) -> ExitPreference {
        self.exit.unwrap_or(match player {
            Player::One => ExitPreference::MaximizePayoff,
            Player::Two => ExitPreference::MinimizePayoff,
        })
    }

    fn needs_history(&self) -> bool {
        self.needs_history
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::{FnField, LinearField, RadialField};
    use crate::rng::play_rng;

    fn at(x: Vector) -> History {
        History::new(x, false)
    }

    #[test]
    fn gradient_examples() {
        let mut rng = play_rng(0, 0);
        let eps = 0.05;
        let lin = Gradient::ascend(Arc::new(LinearField {
            coeffs: Vector::new2(1.0, 0.0),
            offset: 0.0,
        }));
        let v = lin.choose_move(Player::One, &at(Vector::new2(0.3, -0.2)), eps, &mut rng);
        assert!((v - Vector::new2(eps, 0.0)).norm() < 1e-15);

        let rho = Gradient::ascend(Arc::new(RadialField::new(2, 3.0)));
        let v = rho.choose_move(Player::One, &at(Vector::new2(2.0, 0.0)), eps, &mut rng);
        assert!((v - Vector::new2(eps, 0.0)).norm() < 1e-15);

        let log = Gradient::ascend(Arc::new(RadialField::new(2, 2.0)));
        let v = log.choose_move(Player::One, &at(Vector::new2(0.0, 1.0)), eps, &mut rng);
        assert!((v - Vector::new2(0.0, eps)).norm() < 1e-15);

        let down = Gradient::descend(Arc::new(RadialField::new(2, 2.0)));
        let v = down.choose_move(Player::Two, &at(Vector::new2(0.0, 1.0)), eps, &mut rng);
        assert!((v - Vector::new2(0.0, -eps)).norm() < 1e-15);
    }

    #[test]
    fn vanishing_gradient_falls_back_to_random() {
        let mut rng = play_rng(0, 0);
        let flat = Gradient::ascend(Arc::new(FnField::new("flat", |_x: &Vector| 1.0)));
        let v = flat.choose_move(Player::One, &at(Vector::new2(0.1, 0.1)), 0.1, &mut rng);
        assert!((v.norm() - 0.1).abs() < 1e-12);
        assert_eq!(flat.fallback_count(), 1);
    }

    #[test]
    fn pull_examples() {
        let mut rng = play_rng(0, 0);
        let pull = PullToward::point(Vector::zeros(2));
        let v = pull.choose_move(Player::One, &at(Vector::new2(1.0, 0.0)), 0.1, &mut rng);
        assert!((v - Vector::new2(-0.1, 0.0)).norm() < 1e-15);
        let v = pull.choose_move(Player::One, &at(Vector::new2(0.05, 0.0)), 0.1, &mut rng);
        assert!((v - Vector::new2(-0.05, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn spencer_sign_examples() {
        let s = SpencerSign::new(Arc::new(LinearField {
            coeffs: Vector::new2(1.0, 0.0),
            offset: 0.0,
        }));
        let x = Vector::new2(0.2, 0.2);
        assert_eq!(s.sign(&x, &Vector::new2(0.1, 0.0)), 1.0);
        assert_eq!(s.sign(&x, &Vector::new2(-0.1, 0.0)), -1.0);
        assert_eq!(s.sign(&x, &Vector::new2(0.0, 0.1)), 1.0);
    }

    #[test]
    fn minimizer_offers_orthogonal_directions() {
        let mut rng = play_rng(0, 0);
        let g = Gradient::descend(Arc::new(RadialField::new(2, 3.0)));
        let w = g.choose_direction(&at(Vector::new2(1.5, 0.0)), 0.02, &mut rng);
        assert!((w.norm() - 0.02).abs() < 1e-15);
        assert!(w[0].abs() < 1e-15);
        let p = perpendicular(&Vector::new3(0.3, 0.4, 0.5));
        assert!(p.dot(&Vector::new3(0.3, 0.4, 0.5)).abs() < 1e-15);
    }

    #[test]
    fn history_recording() {
        let mut h = History::new(Vector::zeros(2), true);
        h.push(Mover::One, Vector::new2(0.1, 0.0), Vector::zeros(2), Vector::new2(0.1, 0.0));
        assert_eq!(h.len(), 1);
        assert_eq!(h.steps()[0].step, 1);
        let mut q = History::new(Vector::zeros(2), false);
        q.push(Mover::Two, Vector::new2(0.1, 0.0), Vector::zeros(2), Vector::new2(0.1, 0.0));
        assert!(q.steps().is_empty());
        assert_eq!(q.position()[0], 0.1);
    }
}
