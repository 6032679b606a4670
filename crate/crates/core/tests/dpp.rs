use noisytug::dpp::{solve_dpp, solve_with_error_estimate, BellmanOperator, DppError, DppOptions, NodeClass};
use noisytug::engine::Variant;
use noisytug::geometry::{BoundaryFunction, Domain};
use noisytug::noise::{derive_constants, make_noise_measure, NoiseKind, NoiseMeasure, TurnMode};
use noisytug::Vector;

const EPS: f64 = 0.2;

fn fig1() -> (NoiseMeasure, noisytug::noise::GameConstants) {
    let mu = NoiseMeasure::two_point(1.0);
    let k = derive_constants(&mu, TurnMode::Random).unwrap();
    (mu, k)
}

fn opts() -> DppOptions {
    DppOptions {
        n_dir: Some(32),
        ..DppOptions::with_spacing(EPS / 8.0)
    }
}

#[test]
fn constant_payoff_converges_at_once() {
    let (mu, k) = fig1();
    let v = solve_dpp(
        &Domain::unit_disc(),
        &BoundaryFunction::Constant(-1.5),
        &mu,
        &k,
        EPS,
        Variant::RandomTurn,
        &opts(),
    )
    .unwrap();
    assert!(v.converged);
    assert_eq!(v.iterations, 1);
    for (val, class) in v.values.iter().zip(&v.classes) {
        if *class != NodeClass::Outside {
            assert_eq!(*val, -1.5);
        }
    }
}

#[test]
fn values_stay_within_the_range_of_f() {
    let (mu, k) = fig1();
    let v = solve_dpp(
        &Domain::unit_disc(),
        &BoundaryFunction::linear(Vector::new2(1.0, 0.5)),
        &mu,
        &k,
        EPS,
        Variant::RandomTurn,
        &opts(),
    )
    .unwrap();
    assert!(v.converged);
    let (lo, hi) = v.payoff_range;
    assert!(v.values.iter().all(|x| *x >= lo - 1e-9 && *x <= hi + 1e-9));
}

#[test]
fn raising_f_raises_the_value() {
    let (mu, k) = fig1();
    let solve = |offset: f64| {
        solve_dpp(
            &Domain::unit_disc(),
            &BoundaryFunction::Linear {
                coeffs: Vector::new2(0.0, 1.0),
                offset,
            },
            &mu,
            &k,
            EPS,
            Variant::RandomTurn,
            &opts(),
        )
        .unwrap()
    };
    let a = solve(0.0);
    let b = solve(0.25);
    for ((x, y), class) in a.values.iter().zip(&b.values).zip(&a.classes) {
        if *class != NodeClass::Outside {
            assert!(y >= x, "{x} -> {y}");
            assert!((y - x - 0.25).abs() <= 1e-4);
        }
    }
}

#[test]
fn alternating_cross_measure_is_supported() {
    let atoms = [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]
        .iter()
        .map(|&(a, b)| noisytug::noise::Atom::new(Vector::new2(a, b), 0.25))
        .collect();
    let mu = make_noise_measure(NoiseKind::Atoms(atoms), 2).unwrap();
    let k = derive_constants(&mu, TurnMode::Alternating).unwrap();
    let op = BellmanOperator::new(
        &Domain::unit_disc(),
        &BoundaryFunction::linear(Vector::new2(1.0, 0.0)),
        &mu,
        &k,
        EPS,
        Variant::Alternating,
        EPS / 8.0,
        Some(32),
    )
    .unwrap();
    assert!(op.classes().iter().any(|c| *c == NodeClass::Interior));
    assert!(op.classes().iter().any(|c| *c == NodeClass::Band));
}

#[test]
fn grid_error_estimate_is_reported() {
    let (mu, k) = fig1();
    let x0 = Vector::new2(0.3, 0.0);
    let o = solve_with_error_estimate(
        &Domain::unit_disc(),
        &BoundaryFunction::linear(Vector::new2(1.0, 0.0)),
        &mu,
        &k,
        EPS,
        Variant::RandomTurn,
        &opts(),
        &x0,
    )
    .unwrap();
    assert_eq!(o.grid_error, (o.value - o.coarse_value).abs());
    assert!(o.fine.converged);
    // the exit layer pushes the discrete value above x_1 by O(eps)
    assert!(o.value > 0.3 && o.value < 0.3 + 0.75 * EPS, "{}", o.value);
}

#[test]
fn exports_have_the_declared_layout() {
    let (mu, k) = fig1();
    let v = solve_dpp(
        &Domain::unit_disc(),
        &BoundaryFunction::Constant(2.0),
        &mu,
        &k,
        EPS,
        Variant::RandomTurn,
        &opts(),
    )
    .unwrap();
    let mut csv = Vec::new();
    v.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,value,class"));
    let inside = v.classes.iter().filter(|c| **c != NodeClass::Outside).count();
    assert_eq!(lines.count(), inside);

    let mut bin = Vec::new();
    v.write_binary(&mut bin).unwrap();
    let header = v.binary_header();
    assert_eq!(bin.len(), 8 * header.shape.iter().product::<usize>());
    assert_eq!(header.dtype, "f64-le");
    let first = f64::from_le_bytes(bin[..8].try_into().unwrap());
    assert_eq!(first, v.values[0]);
}

#[test]
fn rejects_what_the_grid_cannot_represent() {
    let (mu, k) = fig1();
    let sphere = make_noise_measure(NoiseKind::UniformSphereOrthogonal { radius: 1.0 }, 3).unwrap();
    let ks = derive_constants(&sphere, TurnMode::Random).unwrap();
    let run = |mu: &NoiseMeasure, k, h| {
        solve_dpp(
            &Domain::ball(Vector::zeros(mu.dim()), 1.0).unwrap(),
            &BoundaryFunction::Constant(0.0),
            mu,
            k,
            EPS,
            Variant::RandomTurn,
            &DppOptions::with_spacing(h),
        )
    };
    assert_eq!(run(&sphere, &ks, EPS / 8.0).unwrap_err(), DppError::NonAtomic);
    assert!(matches!(run(&mu, &k, EPS / 4.0), Err(DppError::GridTooCoarse { .. })));
}
