use proptest::prelude::*;

use noisytug::engine::choose_exit;
use noisytug::geometry::{BoundaryFunction, Domain};
use noisytug::strategy::ExitPreference;
use noisytug::Vector;

fn domains() -> Vec<Domain> {
    vec![
        Domain::unit_disc(),
        Domain::annulus(Vector::new2(0.5, -0.5), 1.0, 2.0).unwrap(),
        Domain::cube(Vector::new2(-1.0, 0.0), Vector::new2(1.0, 0.5)).unwrap(),
        Domain::punctured_ball(Vector::zeros(2), 1.0, 0.0).unwrap(),
        Domain::cone_complement(Vector::zeros(2), 1.0, Vector::new2(0.0, 1.0), 0.4, 0.5).unwrap(),
        Domain::polygon(vec![
            Vector::new2(0.0, 0.0),
            Vector::new2(2.0, 0.0),
            Vector::new2(2.0, 1.0),
            Vector::new2(1.0, 0.4),
            Vector::new2(0.0, 1.0),
        ])
        .unwrap(),
        Domain::ball(Vector::new3(0.0, 0.0, 1.0), 1.5).unwrap(),
    ]
}

fn point_in_box(domain: &Domain, u: &[f64]) -> Vector {
    let (lo, hi) = domain.bounding_box();
    let mut x = lo;
    for i in 0..domain.dim() {
        x[i] = lo[i] + u[i] * (hi[i] - lo[i]);
    }
    x
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn nearest_boundary_point_realizes_the_distance(u in prop::collection::vec(0.0f64..1.0, 3)) {
        for domain in domains() {
            let x = point_in_box(&domain, &u);
            let d = domain.dist_to_boundary(&x);
            let y = domain.nearest_boundary_point(&x);
            prop_assert!(domain.dist_to_boundary(&y).abs() <= 1e-9, "{:?} at {}", domain.kind(), x);
            prop_assert!(((y - x).norm() - d.abs()).abs() <= 1e-9, "{:?} at {}", domain.kind(), x);
            prop_assert_eq!(domain.contains(&x), d > 0.0);
        }
    }

    #[test]
    fn exits_are_on_the_boundary_and_within_budget(
        u in prop::collection::vec(0.0f64..1.0, 3),
        slack in 0.0f64..0.3,
        pref in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        for domain in domains() {
            let x = point_in_box(&domain, &u);
            let d = domain.dist_to_boundary(&x);
            if !(d > 0.0) {
                continue;
            }
            let budget = d + slack;
            let dir = Vector::from_slice(&pref[..domain.dim()]);
            let target = x + dir;
            let payoff = BoundaryFunction::linear(dir);
            let prefs = [
                ExitPreference::Nearest,
                ExitPreference::Direction(dir),
                ExitPreference::Toward(target),
                ExitPreference::MaximizePayoff,
                ExitPreference::MinimizePayoff,
            ];
            for p in prefs {
                let y = choose_exit(&domain, &payoff, &x, budget, p).unwrap();
                prop_assert!(domain.dist_to_boundary(&y).abs() <= 1e-9, "{:?} {:?}", domain.kind(), p);
                prop_assert!((y - x).norm() <= budget + 1e-9, "{:?} {:?}", domain.kind(), p);
            }
            prop_assert!(domain.exit_point(&x, d * 0.5, None).is_err());
        }
    }
}
