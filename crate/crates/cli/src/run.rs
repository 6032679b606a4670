//! Runs one experiment and writes its tables.

use serde::Serialize;
use thiserror::Error;

use noisytug::calculus::annulus_hit_prob;
use noisytug::dpp::{solve_with_error_estimate, DppOptions};
use noisytug::engine::{default_step_cap, play_seeded, GameConfig, Outcome};
use noisytug::estimator::{
    convergence_sweep, eps_seed, estimate_value, fingerprint, porous_measure_decay, regularity_probe,
    EstimatorError, RegularityEstimate,
};
use noisytug::geometry::DomainKind;
use noisytug::stats::Z99;
use noisytug::strategy::Strategy;

use crate::config::{vector, ConfigError, ExperimentConfig, ExperimentSpec, StrategySpec};
use crate::output::{OutputDir, OutputError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("oracle failed: {0}")]
    Oracle(#[from] noisytug::dpp::DppError),
    #[error("play failed: {0}")]
    Engine(#[from] noisytug::engine::EngineError),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error("non-finite {what} in the results")]
    NonFinite { what: String },
}

fn finite(what: &str, xs: &[f64]) -> Result<(), RunError> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(RunError::NonFinite { what: what.into() })
    }
}

#[derive(Debug, Serialize)]
struct SweepCsvRow {
    eps: f64,
    mean: f64,
    std_error: f64,
    error: f64,
    n_plays: u64,
    cap_hit_fraction: f64,
    fingerprint: String,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct AnnulusRow {
    eps: f64,
    mean: f64,
    std_error: f64,
    exact: f64,
    error: f64,
    n_plays: u64,
    cap_hit_fraction: f64,
    fingerprint: String,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct RegularityRow {
    eps: f64,
    theta: f64,
    std_error: f64,
    worst_adversary: String,
    n_plays: u64,
    escaped_fraction: f64,
    fingerprint: String,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct ComparisonRow {
    eps: f64,
    h: f64,
    dpp_value: f64,
    grid_error: f64,
    iterations: u64,
    converged: bool,
    mc_mean: f64,
    mc_std_error: f64,
    gap: f64,
    allowed: f64,
    agree: bool,
    n_plays: u64,
    fingerprint: String,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct Trajectory<'a> {
    index: u64,
    seed: u64,
    outcome: &'a Outcome,
}

fn players(
    game: &GameConfig,
    one: &StrategySpec,
    two: &StrategySpec,
) -> Result<(Box<dyn Strategy>, Box<dyn Strategy>), ConfigError> {
    let d = game.domain.dim();
    Ok((
        one.build("experiment.one", d, game.constants)?,
        two.build("experiment.two", d, game.constants)?,
    ))
}

/// Runs `cfg` and writes its outputs plus `config.resolved.toml`.
pub fn run(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), RunError> {
    let game = cfg.build_game()?;
    let seed = cfg.seed;
    let dim = game.domain.dim();
    match &cfg.experiment {
        ExperimentSpec::Convergence {
            n,
            eps,
            reference,
            one,
            two,
        }
        | ExperimentSpec::RunningPayoff {
            n,
            eps,
            reference,
            one,
            two,
        } => {
            let (one, two) = players(&game, one, two)?;
            let field = reference.build("experiment.reference", dim)?;
            let reference = |x: &noisytug::Vector| field.value(x);
            let table = convergence_sweep(&game, eps, one.as_ref(), two.as_ref(), &reference, *n, seed)?;
            for r in &table.rows {
                finite("sweep estimate", &[r.mean, r.std_error, r.error])?;
            }
            let rows: Vec<SweepCsvRow> = table
                .rows
                .iter()
                .map(|r| SweepCsvRow {
                    eps: r.eps,
                    mean: r.mean,
                    std_error: r.std_error,
                    error: r.error,
                    n_plays: r.n_plays,
                    cap_hit_fraction: r.cap_hit_fraction,
                    fingerprint: r.fingerprint.clone(),
                    seed: r.seed,
                })
                .collect();
            out.write_csv("sweep.csv", &rows)?;
            out.write_json(
                "summary.json",
                &serde_json::json!({
                    "experiment": cfg.experiment.kind(),
                    "reference": table.reference,
                    "slope": table.slope(),
                    "errors_decrease": table.errors_decrease(),
                    "fit": table.fit,
                    "rows": table.rows,
                }),
            )?;
        }
        ExperimentSpec::Annulus { n, eps, p, one, two } => {
            let (center, inner, outer) = match game.domain.kind() {
                DomainKind::Annulus { center, inner, outer } => (*center, *inner, *outer),
                _ => {
                    return Err(ConfigError::Invalid {
                        field: "game.domain".into(),
                        message: "the annulus experiment needs an annulus".into(),
                    }
                    .into())
                }
            };
            let r = (game.start - center).norm();
            let exact = annulus_hit_prob(inner / r, outer / r, *p, dim).map_err(|e| ConfigError::Invalid {
                field: "experiment.p".into(),
                message: e.to_string(),
            })?;
            let (one, two) = players(&game, one, two)?;
            let mut rows = Vec::new();
            for &e in eps {
                let config = game
                    .clone()
                    .with_eps(e)
                    .with_step_cap(cfg.game.step_cap.unwrap_or_else(|| default_step_cap(e, game.domain.diameter())));
                let s = eps_seed(seed, e);
                let est = estimate_value(&config, one.as_ref(), two.as_ref(), *n, s)?;
                finite("hitting frequency", &[est.mean, est.std_error])?;
                rows.push(AnnulusRow {
                    eps: e,
                    mean: est.mean,
                    std_error: est.std_error,
                    exact,
                    error: (est.mean - exact).abs(),
                    n_plays: est.n_plays,
                    cap_hit_fraction: est.cap_hit_fraction,
                    fingerprint: est.fingerprint,
                    seed: s,
                });
            }
            out.write_csv("hitting.csv", &rows)?;
            out.write_json(
                "summary.json",
                &serde_json::json!({ "experiment": "annulus", "exact": exact, "rows": rows }),
            )?;
        }
        ExperimentSpec::Regularity { n, eps, point, delta } => {
            let y = vector("experiment.point", point, dim)?;
            let mut rows = Vec::new();
            let mut probes: Vec<(f64, RegularityEstimate)> = Vec::new();
            for &e in eps {
                let config = game.clone().with_eps(e).with_step_cap(
                    cfg.game
                        .step_cap
                        .unwrap_or_else(|| default_step_cap(e, game.domain.diameter())),
                );
                let s = eps_seed(seed, e);
                let r = regularity_probe(&config, y, *delta, *n, s)?;
                finite("success frequency", &[r.theta, r.std_error])?;
                let worst = r
                    .panel
                    .iter()
                    .find(|p| p.player_two == r.worst_adversary)
                    .expect("worst adversary is in the panel");
                rows.push(RegularityRow {
                    eps: e,
                    theta: r.theta,
                    std_error: r.std_error,
                    worst_adversary: r.worst_adversary.clone(),
                    n_plays: *n,
                    escaped_fraction: worst.escaped_fraction,
                    fingerprint: worst.fingerprint.clone(),
                    seed: s,
                });
                probes.push((e, r));
            }
            out.write_csv("regularity.csv", &rows)?;
            let panels: Vec<_> = probes
                .iter()
                .map(|(e, r)| serde_json::json!({ "eps": e, "probe": r }))
                .collect();
            out.write_json(
                "summary.json",
                &serde_json::json!({ "experiment": "regularity", "point": point, "delta": delta, "probes": panels }),
            )?;
        }
        ExperimentSpec::Porous { n, deltas, steps, .. } => {
            let spec = cfg.cantor().expect("porous experiment has a Cantor arc");
            let table = porous_measure_decay(&spec, &game, (*steps).into(), deltas, *n, seed)?;
            for r in &table.rows {
                finite("porous estimate", &[r.estimate, r.std_error])?;
            }
            out.write_csv("porous.csv", &table.rows)?;
            out.write_json(
                "summary.json",
                &serde_json::json!({
                    "experiment": "porous",
                    "porosity": spec.porosity(),
                    "decreasing": table.decreasing,
                    "exponent": table.exponent(),
                    "exponent_lower_bound_95": table.exponent_lower_bound(),
                    "fit": table.fit,
                    "rows": table.rows,
                }),
            )?;
        }
        ExperimentSpec::DppVsMc { n, h, n_dir, one, two } => {
            let eps = game.eps;
            let h = h.unwrap_or(eps / 8.0);
            let options = DppOptions {
                n_dir: *n_dir,
                ..DppOptions::with_spacing(h)
            };
            let oracle = solve_with_error_estimate(
                &game.domain,
                &game.boundary,
                &game.noise,
                &game.constants,
                eps,
                game.variant,
                &options,
                &game.start,
            )?;
            let (one, two) = players(&game, one, two)?;
            let mc = estimate_value(&game, one.as_ref(), two.as_ref(), *n, seed)?;
            let gap = (oracle.value - mc.mean).abs();
            let allowed = Z99 * mc.std_error + oracle.grid_error;
            finite("comparison", &[oracle.value, oracle.grid_error, mc.mean, mc.std_error])?;
            finite("value field", &oracle.fine.values)?;
            let row = ComparisonRow {
                eps,
                h,
                dpp_value: oracle.value,
                grid_error: oracle.grid_error,
                iterations: oracle.fine.iterations,
                converged: oracle.fine.converged,
                mc_mean: mc.mean,
                mc_std_error: mc.std_error,
                gap,
                allowed,
                agree: gap <= allowed,
                n_plays: mc.n_plays,
                fingerprint: mc.fingerprint.clone(),
                seed,
            };
            out.write_csv("comparison.csv", &[&row])?;
            out.write_with("value_field.csv", |w| oracle.fine.write_csv(w).map_err(|e| e.to_string()))?;
            out.write_with("value_field.bin", |w| oracle.fine.write_binary(w).map_err(|e| e.to_string()))?;
            out.write_json("value_field.json", &oracle.fine.binary_header())?;
            out.write_json(
                "summary.json",
                &serde_json::json!({ "experiment": "dpp-vs-mc", "comparison": row, "estimate": mc }),
            )?;
        }
        ExperimentSpec::TrajectoryDump { n, one, two } => {
            let game = game.recording(true);
            let (one, two) = players(&game, one, two)?;
            let outcomes = (0..*n)
                .map(|i| play_seeded(&game, one.as_ref(), two.as_ref(), seed, i))
                .collect::<Result<Vec<_>, _>>()?;
            let payoffs: Vec<f64> = outcomes.iter().map(|o| o.payoff).collect();
            finite("payoff", &payoffs)?;
            let lines: Vec<Trajectory> = outcomes
                .iter()
                .enumerate()
                .map(|(i, o)| Trajectory {
                    index: i as u64,
                    seed,
                    outcome: o,
                })
                .collect();
            out.write_json_lines("trajectories.jsonl", &lines)?;
            out.write_json(
                "summary.json",
                &serde_json::json!({
                    "experiment": "trajectory-dump",
                    "plays": n,
                    "terminated": outcomes.iter().filter(|o| o.terminated).count(),
                    "fingerprint": fingerprint(&game, one.as_ref(), two.as_ref()),
                }),
            )?;
        }
    }
    let resolved = toml::to_string(cfg).map_err(|e| OutputError::Encode {
        path: "config.resolved.toml".into(),
        message: e.to_string(),
    })?;
    out.write_bytes("config.resolved.toml", resolved.as_bytes())?;
    Ok(())
}
