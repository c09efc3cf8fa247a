use proptest::prelude::*;

use wideflow::ensemble::{init, simulate, simulate_from, Ensemble, InitKind, InitSpec, SimOptions};
use wideflow::meanfield::MixedDensity;
use wideflow::quadrature::{piecewise_integral_cuts, uniform_cuts};
use wideflow::spectral::{linearized_loss_curve, phi_star, smallc_loss};
use wideflow::spline_model::loss;
use wideflow::stationary::equidistant_family;
use wideflow::{GroundTruth, Model, Weight};

fn weight() -> impl Strategy<Value = Weight> {
    (-2.0..2.0f64, -0.3..1.3f64).prop_map(|(c, h)| Weight::new(c, h))
}

fn truth() -> impl Strategy<Value = GroundTruth> {
    prop_oneof![
        Just(GroundTruth::x_squared()),
        Just(GroundTruth::half_x_squared()),
        (0.01..1.0f64, 1u32..4).prop_map(|(a, k)| GroundTruth::sine(a, k)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loss_rate_identity_holds(ws in prop::collection::vec(weight(), 1..30), f in truth()) {
        let (lhs, rhs) = Ensemble::new(ws, Model::Full).unwrap().loss_rate_check(&f);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1e-300) || lhs == rhs);
        prop_assert!(rhs <= 0.0);
    }

    #[test]
    fn permutation_leaves_loss_trace_unchanged(ws in prop::collection::vec(weight(), 2..12), f in truth()) {
        let mut rev = ws.clone();
        rev.reverse();
        let opts = SimOptions::new(1e-2, 0.2).with_snapshots(true);
        let (a, _) = simulate_from(Ensemble::new(ws, Model::Full).unwrap(), &f, opts).unwrap();
        let (b, _) = simulate_from(Ensemble::new(rev, Model::Full).unwrap(), &f, opts).unwrap();
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            prop_assert!((ra.loss - rb.loss).abs() <= 1e-14 * ra.loss.max(1e-300));
            let mut wa = ra.weights.clone().unwrap();
            let mut wb = rb.weights.clone().unwrap();
            wb.reverse();
            for (x, y) in wa.iter_mut().zip(&mut wb) {
                prop_assert!((x.c - y.c).abs() < 1e-12 && (x.h - y.h).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn loss_never_increases(ws in prop::collection::vec(weight(), 1..20), f in truth()) {
        let (trace, end) = simulate_from(
            Ensemble::new(ws.clone(), Model::Full).unwrap(), &f, SimOptions::new(1e-2, 0.5)).unwrap();
        let l = trace.losses();
        prop_assert!(l.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        prop_assert_eq!(end.len(), ws.len());
    }

    #[test]
    fn loss_matches_refined_quadrature(ws in prop::collection::vec(weight(), 1..10), f in truth()) {
        let e = Ensemble::new(ws.clone(), Model::Full).unwrap();
        let fhat = |x: f64| ws.iter().map(|w| w.c * (x - w.h).max(0.0)).sum::<f64>() / ws.len() as f64;
        let mut cuts = uniform_cuts(0.0, 1.0, 64);
        cuts.extend(ws.iter().map(|w| w.h).filter(|&h| h > 0.0 && h < 1.0));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let brute = 0.5 * piecewise_integral_cuts(|x| (fhat(x) - f.eval(x)).powi(2), &cuts).unwrap();
        prop_assert!((loss(&e, &f) - brute).abs() <= 1e-12 * brute.max(1.0));
    }

    #[test]
    fn phi_star_matches_quadrature(h in -0.5..1.2f64, f in truth()) {
        let lo = h.clamp(0.0, 1.0);
        let quad = piecewise_integral_cuts(|x| (x - h).max(0.0) * f.eval(x), &uniform_cuts(lo, 1.0, 64)).unwrap();
        prop_assert!((phi_star(&f).eval(h) - quad).abs() < 1e-13);
    }

    #[test]
    fn theory_losses_decrease(t in 0.0..50.0f64, dt in 0.01..50.0f64) {
        let f = GroundTruth::sine(1e-3, 2);
        prop_assert!(smallc_loss(&f, t + dt, 10).unwrap() < smallc_loss(&f, t, 10).unwrap());
        let dp = MixedDensity::knot_box(0.3, 0.8, 2.0).plus(&MixedDensity::knot_box(0.0, 1.0, -1.0));
        let c = linearized_loss_curve(&dp, &[t, t + dt], 1000).unwrap();
        prop_assert!(c[1] < c[0]);
    }
}

#[test]
fn same_seed_same_trace() {
    let spec = InitSpec::new(InitKind::UniformBox { c_lo: -1.0, c_hi: 1.0, h_lo: 0.0, h_hi: 1.0 }, 9);
    let f = GroundTruth::x_squared();
    let a = simulate(&spec, 50, &f, 1e-2, 1.0, 10).unwrap();
    let b = simulate(&spec, 50, &f, 1e-2, 1.0, 10).unwrap();
    assert_eq!(a, b);
    let other = simulate(&InitSpec { seed: 10, ..spec }, 50, &f, 1e-2, 1.0, 10).unwrap();
    assert_ne!(a.losses(), other.losses());
}

#[test]
fn equal_particles_stay_equal() {
    let ws = vec![Weight::new(0.4, 0.3), Weight::new(0.4, 0.3), Weight::new(-0.2, 0.7)];
    let (_, end) = simulate_from(
        Ensemble::new(ws, Model::Full).unwrap(),
        &GroundTruth::x_squared(),
        SimOptions::new(1e-2, 2.0),
    )
    .unwrap();
    assert_eq!(end.weights()[0], end.weights()[1]);
}

#[test]
fn atom_family_start_stays_put() {
    let f = GroundTruth::x_squared();
    for m in [1, 3, 5] {
        let fam = equidistant_family(m).unwrap();
        // each atom carries mass 1/M; 4 coincident particles per atom
        let ws: Vec<Weight> = fam
            .knots
            .iter()
            .zip(&fam.coefficients)
            .flat_map(|(&h, &c)| std::iter::repeat_n(Weight::new(c, h), 4))
            .collect();
        let start = Ensemble::new(ws.clone(), Model::Full).unwrap();
        let (_, end) = simulate_from(start, &f, SimOptions::new(1e-3, 1.0)).unwrap();
        for (a, b) in ws.iter().zip(end.weights()) {
            assert!((a.c - b.c).abs() < 1e-6 && (a.h - b.h).abs() < 1e-6, "M={m}");
        }
    }
}

#[test]
fn frozen_atom_keeps_constant_loss() {
    let spec = InitSpec::new(InitKind::Atom { c: 0.7, h: 1.4 }, 0);
    let trace = simulate(&spec, 10, &GroundTruth::x_squared(), 1e-2, 3.0, 50).unwrap();
    assert!(trace.losses().iter().all(|&l| (l - 0.1).abs() < 1e-15));
}

#[test]
fn knot_only_runs_keep_unit_coefficients() {
    let spec = InitSpec::new(InitKind::StratifiedUniform { c: 1.0, h_lo: 0.3, h_hi: 0.8 }, 0).knot_only();
    let start = init(&spec, 40).unwrap();
    let (_, end) = simulate_from(start, &GroundTruth::half_x_squared(), SimOptions::new(1e-3, 0.5)).unwrap();
    assert!(end.weights().iter().all(|w| w.c == 1.0));
}
