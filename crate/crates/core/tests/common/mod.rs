//! Randomized property checks shared by the integration tests and the
//! acceptance runner. Each check runs a deterministic proptest runner for a
//! given number of cases and reports the first failure as a string.

#![allow(dead_code)]

use std::fmt::Debug;

use nalgebra::DMatrix;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use noisytug::calculus::{
    lemma_threshold, one_step_bound, operators_at, optimal_move, QuadraticModel,
};
use noisytug::dpp::BellmanOperator;
use noisytug::engine::{play_seeded, GameConfig, Variant};
use noisytug::estimator::estimate_value;
use noisytug::geometry::{BoundaryFunction, Domain};
use noisytug::noise::{
    derive_constants, make_noise_measure, pushforward_covariance, rotation_to, sample_noise, Atom,
    GameConstants, NoiseKind, NoiseMeasure, TurnMode,
};
use noisytug::rng::play_rng;
use noisytug::strategy::{Gradient, PullToward, UniformRandom};
use noisytug::Vector;

pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn run<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S: proptest::strategy::Strategy,
    S::Value: Debug,
{
    runner(cases).run(&strategy, test).map_err(|e| e.to_string())
}

fn sym_matrix(d: usize, entries: &[f64]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in 0..=i {
            a[(i, j)] = entries[k];
            a[(j, i)] = entries[k];
            k += 1;
        }
    }
    a
}

fn quad_form(b: &DMatrix<f64>, v: &Vector) -> f64 {
    let d = v.dim();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += v[i] * b[(i, j)] * v[j];
        }
    }
    s
}

fn unit_from(dim: usize, raw: &[f64]) -> Option<Vector> {
    Vector::from_slice(&raw[..dim]).normalized()
}

/// Axially symmetric atomic measures built from a parameter vector:
/// atoms `(a_i, +-b_i e_j)` over every orthogonal axis `j`, shifted so the
/// first coordinate has mean zero.
pub fn atomic_measure(dim: usize, params: &[(f64, f64, f64)]) -> NoiseMeasure {
    let total: f64 = params.iter().map(|p| p.2).sum();
    let mean: f64 = params.iter().map(|p| p.0 * p.2).sum::<f64>() / total;
    let per = 2 * (dim - 1);
    let mut atoms = Vec::new();
    for &(a, b, w) in params {
        for j in 1..dim {
            for s in [1.0, -1.0] {
                let mut x = Vector::zeros(dim);
                x[0] = a - mean;
                x[j] = s * b;
                atoms.push(Atom::new(x, w / total / per as f64));
            }
        }
    }
    make_noise_measure(NoiseKind::Atoms(atoms), dim).expect("symmetric atoms are valid")
}

/// Four atoms `(+-a, 0), (0, +-a)` of weight 1/4: equal parallel and
/// orthogonal variance, hence exponent 2 with alternating turns.
pub fn cross_measure(a: f64) -> NoiseMeasure {
    make_noise_measure(
        NoiseKind::Atoms(vec![
            Atom::new(Vector::new2(a, 0.0), 0.25),
            Atom::new(Vector::new2(-a, 0.0), 0.25),
            Atom::new(Vector::new2(0.0, a), 0.25),
            Atom::new(Vector::new2(0.0, -a), 0.25),
        ]),
        2,
    )
    .expect("cross measure is valid")
}

fn atom_params() -> impl proptest::strategy::Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, 0.05f64..1.5, 0.1f64..1.0), 1..4)
}

/// Exact `E phi(v + z)` for an atomic measure, with the plane rotation
/// written out by hand (d = 2 only).
fn atom_expectation_2d(mu: &NoiseMeasure, a: &DMatrix<f64>, xi: &Vector, v: &Vector) -> f64 {
    let atoms = mu.atoms().expect("atomic");
    atoms
        .iter()
        .map(|at| {
            let (p, q) = (at.point[0], at.point[1]);
            let z = Vector::new2(p * v[0] - q * v[1], p * v[1] + q * v[0]);
            let y = *v + z;
            at.weight * (quad_form(a, &y) + xi.dot(&y))
        })
        .sum()
}

/// Maximizer of the one-step quadratic model: on the sphere, within
/// `zeta eps^2` of the gradient direction, and no worse than a dense sample
/// of the sphere.
pub fn check_quadratic_maximizer(cases: u32) -> Result<(), String> {
    let inputs = (
        2usize..=3,
        prop::collection::vec(-1.0f64..1.0, 6),
        prop::collection::vec(-1.0f64..1.0, 3),
        0.3f64..2.0,
        1.5f64..8.0,
        0.05f64..0.95,
        any::<bool>(),
        any::<u64>(),
    );
    run(cases, inputs, |(d, entries, raw_xi, xi_len, p, frac, maximize, seed)| {
        let Some(dir) = unit_from(d, &raw_xi) else {
            return Ok(());
        };
        let mu = NoiseMeasure::tuned_for_exponent(p, d).unwrap();
        let k = derive_constants(&mu, TurnMode::Random).unwrap();
        let model = QuadraticModel::new(sym_matrix(d, &entries), dir * xi_len).unwrap();
        let zeta = lemma_threshold(&model, &k).unwrap();
        let eps = (frac / zeta).min(1.0);
        let mv = optimal_move(&model, eps, &k, maximize).unwrap();
        prop_assert!(mv.in_lemma_regime);
        prop_assert!((mv.v.norm() - eps).abs() <= 1e-9 * eps, "|v| = {} != {}", mv.v.norm(), eps);
        let sign = if maximize { 1.0 } else { -1.0 };
        let dev = (mv.v - dir * (sign * eps)).norm();
        prop_assert!(dev <= zeta * eps * eps + 1e-12, "deviation {dev} > {}", zeta * eps * eps);
        // brute-force sphere oracle
        let b = noisytug::calculus::b_matrix(&model.a, &k);
        let psi = |v: &Vector| sign * (model.xi.dot(v) + quad_form(&b, v));
        let found = psi(&mv.v);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..20_000 {
            let mut g = Vector::zeros(d);
            for i in 0..d {
                g[i] = rng.gen::<f64>() * 2.0 - 1.0;
            }
            if let Some(u) = g.normalized() {
                let s = psi(&(u * eps));
                prop_assert!(s <= found + 1e-12 * (1.0 + found.abs()), "sample {s} beats {found}");
            }
        }
        Ok(())
    })
}

/// Tugging along the gradient guarantees the one-step lower bound against
/// every reply on a 720-direction grid (plus standing still), with the
/// expectation summed exactly over the atoms.
pub fn check_one_step_bound(cases: u32) -> Result<(), String> {
    let inputs = (
        prop::collection::vec(-1.0f64..1.0, 3),
        prop::collection::vec(-1.0f64..1.0, 2),
        0.3f64..2.0,
        atom_params(),
        0.01f64..1.0,
    );
    run(cases, inputs, |(entries, raw_xi, xi_len, params, frac)| {
        let Some(dir) = unit_from(2, &raw_xi) else {
            return Ok(());
        };
        let mu = atomic_measure(2, &params);
        let k = derive_constants(&mu, TurnMode::Random).unwrap();
        let a = sym_matrix(2, &entries);
        let xi = dir * xi_len;
        let model = QuadraticModel::new(a.clone(), xi).unwrap();
        let zeta = lemma_threshold(&model, &k).unwrap();
        let eps = (frac / zeta).min(0.2);
        let bound = one_step_bound(&model, eps, &k).unwrap();
        let mine = atom_expectation_2d(&mu, &a, &xi, &(dir * eps));
        let mut worst = atom_expectation_2d(&mu, &a, &xi, &Vector::zeros(2));
        for j in 0..720 {
            let t = std::f64::consts::TAU * j as f64 / 720.0;
            let w = Vector::new2(t.cos(), t.sin()) * eps;
            worst = worst.min(atom_expectation_2d(&mu, &a, &xi, &w));
        }
        let guaranteed = 0.5 * mine + 0.5 * worst;
        prop_assert!(
            guaranteed >= bound.lower_bound - 1e-14,
            "guaranteed {guaranteed} below bound {}",
            bound.lower_bound
        );
        Ok(())
    })
}

/// Covariance of the pushed-forward atoms equals the closed form, the
/// map is a scaled rotation with `Psi e1 = v`, and sampled noise lands on
/// an atom image.
pub fn check_pushforward_covariance(cases: u32) -> Result<(), String> {
    let inputs = (
        2usize..=4,
        atom_params(),
        prop::collection::vec(-2.0f64..2.0, 4),
        any::<u64>(),
        any::<bool>(),
    );
    run(cases, inputs, |(d, params, raw_v, seed, alternating)| {
        let v = Vector::from_slice(&raw_v[..d]);
        if v.norm() < 1e-3 {
            return Ok(());
        }
        let mu = atomic_measure(d, &params);
        let mode = if alternating { TurnMode::Alternating } else { TurnMode::Random };
        let Ok(k) = derive_constants(&mu, mode) else {
            return Ok(());
        };
        // constants reproduce the covariance
        let c11 = mu.covariance()[(0, 0)];
        let c22 = mu.covariance()[(1, 1)];
        let shift = if alternating { 0.0 } else { 1.0 };
        prop_assert!((k.beta * k.q_inv() - shift - c11).abs() < 1e-10);
        prop_assert!((k.beta * k.p_inv() - c22).abs() < 1e-10);

        let psi = rotation_to(&v).unwrap();
        let m = psi.matrix();
        let gram = m.transpose() * &m;
        prop_assert!((gram - DMatrix::identity(d, d) * v.norm_squared()).abs().max() < 1e-10 * (1.0 + v.norm_squared()));
        prop_assert!((psi.apply(&Vector::basis(d, 0)) - v).norm() < 1e-12 * (1.0 + v.norm()));

        let atoms = mu.atoms().unwrap();
        let images: Vec<(Vector, f64)> = atoms.iter().map(|a| (psi.apply(&a.point), a.weight)).collect();
        let mut cov = DMatrix::zeros(d, d);
        for (z, w) in &images {
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] += w * z[i] * z[j];
                }
            }
        }
        let formula = pushforward_covariance(&k, &v);
        let err = (&cov - &formula).abs().max();
        prop_assert!(err < 1e-10 * (1.0 + v.norm_squared()), "covariance mismatch {err}\n{cov}\n{formula}");

        let mut rng = play_rng(seed, 0);
        for _ in 0..8 {
            let z = sample_noise(&mu, &v, &mut rng);
            let hit = images.iter().any(|(y, _)| (*y - z).norm() < 1e-10 * (1.0 + v.norm()));
            prop_assert!(hit, "sample {z} is not an atom image");
        }
        Ok(())
    })
}

#[derive(Debug, Clone)]
pub enum TestFunction {
    Quadratic { a: DMatrix<f64>, xi: Vector },
    RadialPower { center: Vector, k: f64 },
    Product { a: Vector, b: Vector, c: f64 },
}

impl TestFunction {
    fn eval(&self, x: &Vector) -> f64 {
        match self {
            TestFunction::Quadratic { a, xi } => quad_form(a, x) + xi.dot(x),
            TestFunction::RadialPower { center, k } => (*x - *center).norm().powf(*k),
            TestFunction::Product { a, b, c } => (a.dot(x) + c) * (b.dot(x) - c),
        }
    }
}

fn test_function() -> impl proptest::strategy::Strategy<Value = (usize, TestFunction, Vec<f64>)> {
    (2usize..=3).prop_flat_map(|d| {
        let quad = (prop::collection::vec(-1.0f64..1.0, 6), prop::collection::vec(-1.0f64..1.0, 3))
            .prop_map(move |(e, xi)| TestFunction::Quadratic {
                a: sym_matrix(d, &e),
                xi: Vector::from_slice(&xi[..d]),
            });
        let radial = (prop::collection::vec(-0.5f64..0.5, 3), 0.5f64..3.0).prop_map(move |(c, k)| {
            TestFunction::RadialPower {
                center: Vector::from_slice(&c[..d]) + Vector::basis(d, 0) * 3.0,
                k,
            }
        });
        let product = (
            prop::collection::vec(-1.0f64..1.0, 3),
            prop::collection::vec(-1.0f64..1.0, 3),
            0.5f64..2.0,
        )
            .prop_map(move |(a, b, c)| TestFunction::Product {
                a: Vector::from_slice(&a[..d]),
                b: Vector::from_slice(&b[..d]),
                c,
            });
        (
            Just(d),
            prop_oneof![quad, radial, product],
            prop::collection::vec(-1.0f64..1.0, 3),
        )
    })
}

/// `Delta = Delta_inf + Delta_1` and the game p-Laplacian is the stated
/// combination; for quadratics both operators match hand values.
pub fn check_operator_decomposition(cases: u32) -> Result<(), String> {
    run(cases, (test_function(), 1.2f64..10.0), |((d, f, raw_x), p)| {
        let x = Vector::from_slice(&raw_x[..d]);
        let u = |y: &Vector| f.eval(y);
        let h = match f {
            TestFunction::Quadratic { .. } => 1e-3,
            _ => 1e-4,
        };
        let Ok(ops) = operators_at(&u, &x, p, h) else {
            return Ok(());
        };
        if ops.gradient.norm() < 1e-3 {
            return Ok(());
        }
        prop_assert!((ops.laplacian - ops.inf_laplacian - ops.one_laplacian).abs() <= 1e-7);
        let combo = ops.one_laplacian / p + ops.inf_laplacian * (1.0 - 1.0 / p);
        prop_assert!((ops.p_laplacian_g - combo).abs() <= 1e-7);
        if let TestFunction::Quadratic { a, xi } = &f {
            let mut g = *xi;
            for i in 0..d {
                for j in 0..d {
                    g[i] += 2.0 * a[(i, j)] * x[j];
                }
            }
            let lap = 2.0 * a.trace();
            let inf = 2.0 * quad_form(a, &g) / g.norm_squared();
            prop_assert!((ops.laplacian - lap).abs() <= 1e-6, "laplacian {} vs {lap}", ops.laplacian);
            prop_assert!((ops.inf_laplacian - inf).abs() <= 1e-6, "inf-laplacian {} vs {inf}", ops.inf_laplacian);
        }
        Ok(())
    })
}

/// Small Bellman operators for the three variants.
pub fn small_operators() -> Vec<BellmanOperator> {
    let disc = Domain::unit_disc();
    let f = BoundaryFunction::linear(Vector::new2(1.0, 0.5));
    let fig1 = NoiseMeasure::two_point(1.0);
    let cross = cross_measure(0.7);
    let point = NoiseMeasure::point_mass(2);
    let eps = 0.2;
    let h = eps / 8.0;
    let build = |mu: &NoiseMeasure, variant: Variant| {
        let k: GameConstants = derive_constants(mu, variant.turn_mode()).unwrap();
        BellmanOperator::new(&disc, &f, mu, &k, eps, variant, h, Some(32)).unwrap()
    };
    vec![
        build(&fig1, Variant::RandomTurn),
        build(&cross, Variant::Alternating),
        build(&point, Variant::SpencerInterpolated { p_interp: 2.5 }),
    ]
}

/// `u <= w` implies `Tu <= Tw`, and `|Tu - Tv| <= |u - v|` in sup norm.
pub fn check_dpp_monotone_nonexpansive(cases: u32, ops: &[BellmanOperator]) -> Result<(), String> {
    run(cases, (0..ops.len(), any::<u64>(), 0.0f64..1.0), |(which, seed, spread)| {
        let op = &ops[which];
        let n = op.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = op.initial_field(0.0);
        let interior: Vec<usize> = op
            .classes()
            .iter()
            .enumerate()
            .filter(|(_, c)| **c == noisytug::dpp::NodeClass::Interior)
            .map(|(i, _)| i)
            .collect();
        let mut u = base.clone();
        let mut w = base.clone();
        let mut v = base;
        for &i in &interior {
            u[i] = rng.gen::<f64>() * 2.0 - 1.0;
            w[i] = u[i] + spread * rng.gen::<f64>();
            v[i] = rng.gen::<f64>() * 2.0 - 1.0;
        }
        let (mut tu, mut tw, mut tv) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        op.apply(&u, &mut tu);
        op.apply(&w, &mut tw);
        op.apply(&v, &mut tv);
        for i in 0..n {
            prop_assert!(tu[i] <= tw[i] + 1e-12, "monotonicity fails at node {i}: {} > {}", tu[i], tw[i]);
        }
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let before = dist(&u, &v);
        let after = dist(&tu, &tv);
        prop_assert!(after <= before + 1e-12, "expansion {after} > {before}");
        Ok(())
    })
}

/// Identical seeds give identical outcomes (with recorded histories), and
/// estimates do not depend on the thread count.
pub fn check_determinism(cases: u32) -> Result<(), String> {
    let inputs = (any::<u64>(), 0u64..1_000_000, 0.05f64..0.2, -0.5f64..0.5, -0.5f64..0.5, 0usize..3);
    run(cases, inputs, |(seed, index, eps, x, y, which)| {
        let (noise, variant) = match which {
            0 => (NoiseMeasure::two_point(1.0), Variant::RandomTurn),
            1 => (cross_measure(1.0), Variant::Alternating),
            _ => (NoiseMeasure::point_mass(2), Variant::SpencerInterpolated { p_interp: 3.0 }),
        };
        let field: std::sync::Arc<dyn noisytug::calculus::ScalarField> =
            std::sync::Arc::new(noisytug::calculus::LinearField {
                coeffs: Vector::new2(1.0, 0.3),
                offset: 0.0,
            });
        let cfg = GameConfig::new(
            Domain::unit_disc(),
            noise,
            variant,
            eps,
            BoundaryFunction::linear(Vector::new2(1.0, 0.3)),
            Vector::new2(x, y),
        )
        .unwrap()
        .recording(true);
        let one = Gradient::ascend(field.clone());
        let two = UniformRandom;
        let a = play_seeded(&cfg, &one, &two, seed, index).unwrap();
        let b = play_seeded(&cfg, &one, &two, seed, index).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.payoff.to_bits(), b.payoff.to_bits());

        let pull = PullToward::point(Vector::new2(0.0, 1.0));
        let cfg = cfg.recording(false);
        let in_pool = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| estimate_value(&cfg, &pull, &two, 300, seed).unwrap())
        };
        let (e1, e2) = (in_pool(1), in_pool(2));
        prop_assert_eq!(e1.mean.to_bits(), e2.mean.to_bits());
        prop_assert_eq!(e1, e2);
        Ok(())
    })
}
