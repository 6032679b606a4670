//! Experiment configuration files.
//!
//! A config is a TOML document with a `[game]` table describing the game
//! and an `[experiment]` table selecting the experiment kind. Unknown keys
//! are rejected and every error names the offending field path.

use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use noisytug::calculus::{LinearField, QuadraticField, RadialField, ScalarField};
use noisytug::engine::{GameConfig, RunningPayoff, Variant};
use noisytug::estimator::{CantorSpec, GradedSteps};
use noisytug::geometry::{BoundaryFunction, Domain, IndicatorSet};
use noisytug::noise::{make_noise_measure, Atom, NoiseKind, NoiseMeasure};
use noisytug::strategy::{
    Gradient, PullAway, PullToward, QuadraticOptimal, SpencerSign, Strategy, UniformRandom,
};
use noisytug::Vector;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// The result this experiment reproduces.
    pub anchor: String,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    pub game: GameSpec,
    pub experiment: ExperimentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSpec {
    pub domain: DomainSpec,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub variant: VariantName,
    /// Phase parameter of the Spencer-interpolated variant; may be `inf`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_interp: Option<f64>,
    /// Step size for single-eps experiments; sweeps take theirs from the
    /// experiment table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    pub start: Vec<f64>,
    pub boundary: BoundarySpec,
    /// Constant running payoff `f`, paid as `f eps^2` per step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub running_payoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_cap: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    #[default]
    RandomTurn,
    Alternating,
    SpencerInterpolated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DomainSpec {
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    Annulus {
        center: Vec<f64>,
        inner: f64,
        outer: f64,
    },
    Box {
        min: Vec<f64>,
        max: Vec<f64>,
    },
    PuncturedBall {
        center: Vec<f64>,
        radius: f64,
        core: f64,
    },
    ConeComplement {
        center: Vec<f64>,
        radius: f64,
        direction: Vec<f64>,
        half_angle: f64,
        height: f64,
    },
    Polygon {
        vertices: Vec<[f64; 2]>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NoiseSpec {
    PointMass { dim: usize },
    TwoPoint { radius: f64 },
    /// Orthogonal sphere whose radius gives exponent `p` with random turns.
    Tuned { p: f64, dim: usize },
    OrthogonalSphere { radius: f64, dim: usize },
    Atoms { atoms: Vec<AtomSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub point: Vec<f64>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldSpec {
    Linear {
        coeffs: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    /// `offset + scale * rho_{d,p}(x - center)`.
    Radial {
        p: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `(x - c)^T A (x - c) + (xi, x - c) + offset`, rows of `A` listed.
    Quadratic {
        a: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xi: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
        #[serde(default)]
        offset: f64,
    },
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BoundarySpec {
    Constant { value: f64 },
    /// Restriction of a scalar field to the boundary.
    Field { field: FieldSpec },
    /// 1 on the closed ball, 0 elsewhere.
    IndicatorBall { center: Vec<f64>, radius: f64 },
    /// 1 where `|y - center| < radius`, 0 elsewhere.
    IndicatorRadiusBelow { center: Vec<f64>, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StrategySpec {
    GradientAscend { field: FieldSpec },
    GradientDescend { field: FieldSpec },
    PullToward { point: Vec<f64> },
    PullAway { point: Vec<f64> },
    UniformRandom,
    QuadraticOptimal { field: FieldSpec, maximize: bool },
    SpencerSign { field: FieldSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentSpec {
    /// Estimates at each `eps` against a closed-form reference.
    Convergence {
        n: u64,
        eps: Vec<f64>,
        reference: FieldSpec,
        one: StrategySpec,
        two: StrategySpec,
    },
    /// Probability of reaching the inner sphere of an annulus centred at
    /// the origin, against the closed form.
    Annulus {
        n: u64,
        eps: Vec<f64>,
        p: f64,
        one: StrategySpec,
        two: StrategySpec,
    },
    /// As `convergence`, with the game's running payoff required.
    RunningPayoff {
        n: u64,
        eps: Vec<f64>,
        reference: FieldSpec,
        one: StrategySpec,
        two: StrategySpec,
    },
    /// Success probability of pulling toward a boundary point, per `eps`.
    Regularity {
        n: u64,
        eps: Vec<f64>,
        point: Vec<f64>,
        delta: f64,
    },
    /// Value of the indicator of the Cantor arc's neighborhoods.
    Porous {
        n: u64,
        deltas: Vec<f64>,
        /// Angle of the arc midpoint.
        mid: f64,
        /// Angular length of the arc.
        span: f64,
        #[serde(default = "third")]
        ratio: f64,
        #[serde(default)]
        steps: StepsSpec,
    },
    /// Grid oracle against Monte Carlo at the start point.
    DppVsMc {
        n: u64,
        /// Grid spacing; defaults to `eps / 8`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        n_dir: Option<usize>,
        one: StrategySpec,
        two: StrategySpec,
    },
    /// Full recorded plays as JSON lines.
    TrajectoryDump {
        n: u64,
        one: StrategySpec,
        two: StrategySpec,
    },
}

fn third() -> f64 {
    1.0 / 3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepsSpec {
    pub ratio: f64,
    pub eps_max: f64,
    pub floor_fraction: f64,
}

impl Default for StepsSpec {
    fn default() -> Self {
        let g = GradedSteps::default();
        Self {
            ratio: g.ratio,
            eps_max: g.eps_max,
            floor_fraction: g.floor_fraction,
        }
    }
}

impl From<StepsSpec> for GradedSteps {
    fn from(s: StepsSpec) -> Self {
        GradedSteps {
            ratio: s.ratio,
            eps_max: s.eps_max,
            floor_fraction: s.floor_fraction,
        }
    }
}

impl ExperimentSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentSpec::Convergence { .. } => "convergence",
            ExperimentSpec::Annulus { .. } => "annulus",
            ExperimentSpec::RunningPayoff { .. } => "running-payoff",
            ExperimentSpec::Regularity { .. } => "regularity",
            ExperimentSpec::Porous { .. } => "porous",
            ExperimentSpec::DppVsMc { .. } => "dpp-vs-mc",
            ExperimentSpec::TrajectoryDump { .. } => "trajectory-dump",
        }
    }

    pub fn plays(&self) -> u64 {
        match self {
            ExperimentSpec::Convergence { n, .. }
            | ExperimentSpec::Annulus { n, .. }
            | ExperimentSpec::RunningPayoff { n, .. }
            | ExperimentSpec::Regularity { n, .. }
            | ExperimentSpec::Porous { n, .. }
            | ExperimentSpec::DppVsMc { n, .. }
            | ExperimentSpec::TrajectoryDump { n, .. } => *n,
        }
    }

    /// The step sizes swept, if any.
    fn eps_list(&self) -> Option<&[f64]> {
        match self {
            ExperimentSpec::Convergence { eps, .. }
            | ExperimentSpec::Annulus { eps, .. }
            | ExperimentSpec::RunningPayoff { eps, .. }
            | ExperimentSpec::Regularity { eps, .. } => Some(eps),
            _ => None,
        }
    }
}

pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = toml::Deserializer::new(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Schema {
        path: e.path().to_string(),
        message: e.inner().message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text)
}

fn positive(field: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {x}")))
    }
}

impl ExperimentConfig {
    /// Checks that do not need the core types: positivity of step sizes,
    /// play counts and radii.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(eps) = self.game.eps {
            positive("game.eps", eps)?;
        }
        if let Some(list) = self.experiment.eps_list() {
            if list.is_empty() {
                return Err(invalid("experiment.eps", "needs at least one step size"));
            }
            for (i, &e) in list.iter().enumerate() {
                positive(&format!("experiment.eps[{i}]"), e)?;
            }
        }
        if self.experiment.plays() < 2 {
            return Err(invalid("experiment.n", "needs at least 2 plays"));
        }
        match &self.experiment {
            ExperimentSpec::DppVsMc { h, .. } => {
                if self.game.eps.is_none() {
                    return Err(invalid("game.eps", "required by the dpp-vs-mc experiment"));
                }
                if let Some(h) = h {
                    positive("experiment.h", *h)?;
                }
            }
            ExperimentSpec::TrajectoryDump { .. } if self.game.eps.is_none() => {
                return Err(invalid("game.eps", "required by the trajectory-dump experiment"));
            }
            ExperimentSpec::RunningPayoff { .. } if self.game.running_payoff.is_none() => {
                return Err(invalid("game.running_payoff", "required by the running-payoff experiment"));
            }
            ExperimentSpec::Regularity { delta, .. } => positive("experiment.delta", *delta)?,
            ExperimentSpec::Porous { deltas, steps, .. } => {
                if deltas.is_empty() {
                    return Err(invalid("experiment.deltas", "needs at least one radius"));
                }
                for (i, &d) in deltas.iter().enumerate() {
                    positive(&format!("experiment.deltas[{i}]"), d)?;
                }
                positive("experiment.steps.ratio", steps.ratio)?;
                positive("experiment.steps.eps_max", steps.eps_max)?;
                positive("experiment.steps.floor_fraction", steps.floor_fraction)?;
            }
            _ => {}
        }
        if self.game.variant == VariantName::SpencerInterpolated && self.game.p_interp.is_none() {
            return Err(invalid("game.p_interp", "required by the spencer-interpolated variant"));
        }
        Ok(())
    }

    /// Step size used to build the game template.
    pub fn template_eps(&self) -> f64 {
        self.experiment
            .eps_list()
            .and_then(|l| l.first().copied())
            .or(self.game.eps)
            .unwrap_or(0.1)
    }

    /// The game with step size `template_eps`.
    pub fn build_game(&self) -> Result<GameConfig, ConfigError> {
        let g = &self.game;
        let domain = g.domain.build()?;
        let dim = domain.dim();
        let noise = g.noise.build()?;
        let variant = match g.variant {
            VariantName::RandomTurn => Variant::RandomTurn,
            VariantName::Alternating => Variant::Alternating,
            VariantName::SpencerInterpolated => Variant::SpencerInterpolated {
                p_interp: g.p_interp.unwrap_or(f64::INFINITY),
            },
        };
        let start = vector("game.start", &g.start, dim)?;
        let boundary = g.boundary.build(dim)?;
        let mut cfg = GameConfig::new(domain, noise, variant, self.template_eps(), boundary, start)
            .map_err(|e| invalid("game", e.to_string()))?;
        if let Some(f) = g.running_payoff {
            cfg = cfg.with_running_payoff(RunningPayoff::Constant(f));
        }
        if let Some(cap) = g.step_cap {
            if cap == 0 {
                return Err(invalid("game.step_cap", "must be at least 1"));
            }
            cfg = cfg.with_step_cap(cap);
        }
        Ok(cfg)
    }

    pub fn cantor(&self) -> Option<CantorSpec> {
        match &self.experiment {
            ExperimentSpec::Porous { mid, span, ratio, .. } => Some(CantorSpec {
                center: Vector::zeros(2),
                mid: *mid,
                span: *span,
                ratio: *ratio,
            }),
            _ => None,
        }
    }
}

pub fn vector(field: &str, xs: &[f64], dim: usize) -> Result<Vector, ConfigError> {
    if xs.len() != dim {
        return Err(invalid(field, format!("expected {dim} coordinates, got {}", xs.len())));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(invalid(field, "coordinates must be finite"));
    }
    Ok(Vector::from_slice(xs))
}

fn any_vector(field: &str, xs: &[f64]) -> Result<Vector, ConfigError> {
    if !(1..=noisytug::vector::MAX_DIM).contains(&xs.len()) {
        return Err(invalid(field, format!("dimension {} is not supported", xs.len())));
    }
    vector(field, xs, xs.len())
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain, ConfigError> {
        let f = "game.domain";
        let d = match self {
            DomainSpec::Ball { center, radius } => Domain::ball(any_vector(f, center)?, *radius),
            DomainSpec::Annulus { center, inner, outer } => Domain::annulus(any_vector(f, center)?, *inner, *outer),
            DomainSpec::Box { min, max } => Domain::cube(any_vector(f, min)?, vector(f, max, min.len())?),
            DomainSpec::PuncturedBall { center, radius, core } => {
                Domain::punctured_ball(any_vector(f, center)?, *radius, *core)
            }
            DomainSpec::ConeComplement {
                center,
                radius,
                direction,
                half_angle,
                height,
            } => Domain::cone_complement(
                any_vector(f, center)?,
                *radius,
                vector(f, direction, center.len())?,
                *half_angle,
                *height,
            ),
            DomainSpec::Polygon { vertices } => {
                Domain::polygon(vertices.iter().map(|v| Vector::new2(v[0], v[1])).collect())
            }
        };
        d.map_err(|e| invalid(f, e.to_string()))
    }
}

impl NoiseSpec {
    pub fn build(&self) -> Result<NoiseMeasure, ConfigError> {
        let f = "game.noise";
        match self {
            NoiseSpec::PointMass { dim } => Ok(NoiseMeasure::point_mass(*dim)),
            NoiseSpec::TwoPoint { radius } => {
                positive("game.noise.radius", *radius)?;
                Ok(NoiseMeasure::two_point(*radius))
            }
            NoiseSpec::Tuned { p, dim } => {
                NoiseMeasure::tuned_for_exponent(*p, *dim).map_err(|e| invalid(f, e.to_string()))
            }
            NoiseSpec::OrthogonalSphere { radius, dim } => {
                make_noise_measure(NoiseKind::UniformSphereOrthogonal { radius: *radius }, *dim)
                    .map_err(|e| invalid(f, e.to_string()))
            }
            NoiseSpec::Atoms { atoms } => {
                let dim = atoms.first().map_or(0, |a| a.point.len());
                let list = atoms
                    .iter()
                    .enumerate()
                    .map(|(i, a)| Ok(Atom::new(vector(&format!("game.noise.atoms[{i}].point"), &a.point, dim)?, a.weight)))
                    .collect::<Result<Vec<_>, ConfigError>>()?;
                make_noise_measure(NoiseKind::Atoms(list), dim).map_err(|e| invalid(f, e.to_string()))
            }
        }
    }
}

impl FieldSpec {
    pub fn build(&self, field: &str, dim: usize) -> Result<Arc<dyn ScalarField>, ConfigError> {
        let center = |c: &Option<Vec<f64>>| match c {
            Some(c) => vector(&format!("{field}.center"), c, dim),
            None => Ok(Vector::zeros(dim)),
        };
        Ok(match self {
            FieldSpec::Linear { coeffs, offset } => Arc::new(LinearField {
                coeffs: vector(&format!("{field}.coeffs"), coeffs, dim)?,
                offset: *offset,
            }),
            FieldSpec::Radial {
                p,
                center: c,
                scale,
                offset,
            } => {
                if !(*p > 1.0) {
                    return Err(invalid(format!("{field}.p"), format!("must exceed 1, got {p}")));
                }
                Arc::new(RadialField {
                    center: center(c)?,
                    p: *p,
                    scale: *scale,
                    offset: *offset,
                })
            }
            FieldSpec::Quadratic {
                a,
                xi,
                center: c,
                offset,
            } => {
                if a.len() != dim || a.iter().any(|row| row.len() != dim) {
                    return Err(invalid(format!("{field}.a"), format!("must be {dim} x {dim}")));
                }
                let xi = match xi {
                    Some(xi) => vector(&format!("{field}.xi"), xi, dim)?,
                    None => Vector::zeros(dim),
                };
                Arc::new(QuadraticField {
                    a: DMatrix::from_fn(dim, dim, |i, j| a[i][j]),
                    xi,
                    center: center(c)?,
                    offset: *offset,
                })
            }
        })
    }
}

impl BoundarySpec {
    pub fn build(&self, dim: usize) -> Result<BoundaryFunction, ConfigError> {
        let f = "game.boundary";
        Ok(match self {
            BoundarySpec::Constant { value } => BoundaryFunction::Constant(*value),
            BoundarySpec::Field { field } => match field {
                // keep the closed forms that the exit logic evaluates fastest
                FieldSpec::Linear { coeffs, offset } => BoundaryFunction::Linear {
                    coeffs: vector("game.boundary.field.coeffs", coeffs, dim)?,
                    offset: *offset,
                },
                _ => BoundaryFunction::Field(field.build("game.boundary.field", dim)?),
            },
            BoundarySpec::IndicatorBall { center, radius } => BoundaryFunction::Indicator(IndicatorSet::Ball {
                center: vector(f, center, dim)?,
                radius: *radius,
            }),
            BoundarySpec::IndicatorRadiusBelow { center, radius } => {
                BoundaryFunction::Indicator(IndicatorSet::RadiusBelow {
                    center: vector(f, center, dim)?,
                    radius: *radius,
                })
            }
        })
    }
}

impl StrategySpec {
    pub fn build(
        &self,
        field: &str,
        dim: usize,
        constants: noisytug::noise::GameConstants,
    ) -> Result<Box<dyn Strategy>, ConfigError> {
        let sub = |s: &FieldSpec| s.build(&format!("{field}.field"), dim);
        Ok(match self {
            StrategySpec::GradientAscend { field: s } => Box::new(Gradient::ascend(sub(s)?)),
            StrategySpec::GradientDescend { field: s } => Box::new(Gradient::descend(sub(s)?)),
            StrategySpec::PullToward { point } => {
                Box::new(PullToward::point(vector(&format!("{field}.point"), point, dim)?))
            }
            StrategySpec::PullAway { point } => Box::new(PullAway::new(vector(&format!("{field}.point"), point, dim)?)),
            StrategySpec::UniformRandom => Box::new(UniformRandom),
            StrategySpec::QuadraticOptimal { field: s, maximize } => {
                Box::new(QuadraticOptimal::new(sub(s)?, constants, *maximize))
            }
            StrategySpec::SpencerSign { field: s } => Box::new(SpencerSign::new(sub(s)?)),
        })
    }
}
