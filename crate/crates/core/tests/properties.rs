use proptest::prelude::*;
use queuecorr::properties::{
    check_lindley_shape, check_pathwise_monotonicity, check_shape, coupling_matrix, monotone_pair_expectations, Coupling,
    FiniteLaw, LindleyIncrement, StepFunction,
};
use queuecorr::sim::{RngStreamSpec, StreamRole};
use queuecorr::transform::correlation_from_gamma;
use queuecorr::{
    GeneratorMatrix, InversionParams, JumpDist, LevyComponent, MapModel, SpectralFlag, TransformEvaluator,
    ShapeProperty, TwoStateFluidParams, Verdict,
};

#[test]
fn analytic_two_state_curve_is_flat_then_concave_at_zero() {
    // without jumps c'(0) = E[Q_0 Q_0'] = (1/2) d/dt E[Q_t^2] = 0, so the
    // curve cannot be convex near 0
    let ev = TransformEvaluator::two_state(TwoStateFluidParams::new(1.0, 4.0).unwrap()).unwrap();
    let ts: Vec<f64> = (0..200).map(|k| 0.1 * k as f64).collect();
    let curve = correlation_from_gamma(&ev, &ts, &InversionParams::default()).unwrap();
    let rep = check_shape(&curve, 0.01).unwrap();
    assert_eq!(rep.get(ShapeProperty::NonNegative).verdict, Verdict::Holds);
    assert_eq!(rep.get(ShapeProperty::NonIncreasing).verdict, Verdict::Holds);
    let convex = rep.get(ShapeProperty::Convex);
    assert_eq!(convex.verdict, Verdict::Violated);
    assert!(convex.violations.iter().all(|&t| t < 1.0), "{:?}", convex.violations);

    let h = 1e-3;
    let near = correlation_from_gamma(&ev, &[h, 2.0 * h], &InversionParams::default()).unwrap();
    let slope = (near.r[0] - 1.0) / h;
    let second = (near.r[1] - 2.0 * near.r[0] + 1.0) / (h * h);
    assert!(slope.abs() < 1e-2 && second < 0.0, "slope {slope}, curvature {second}");
}

#[test]
fn cyclic_four_is_monotone_and_convex() {
    // c'(t) < 0 and c''(t) > 0 for the d = 4 closed form, so no
    // counterexample can come from d = 4
    let ev = TransformEvaluator::cyclic(4).unwrap();
    let ts: Vec<f64> = (0..400).map(|k| 0.05 * k as f64).collect();
    let curve = correlation_from_gamma(&ev, &ts, &InversionParams::default()).unwrap();
    assert!(check_shape(&curve, 0.01).unwrap().all_hold());
}

#[test]
fn mm1_waiting_times_have_all_shape_properties() {
    let inc = LindleyIncrement {
        plus: JumpDist::Exponential { mean: 1.0 },
        minus: JumpDist::Exponential { mean: 2.0 },
    };
    let (curve, rep) = check_lindley_shape(&inc, 100_000, 12, 0.01, 2).unwrap();
    assert_eq!(curve.r[0], 1.0);
    assert!(rep.all_hold(), "{}", rep.to_csv());
}

#[test]
fn monotonicity_with_jumps_and_three_states() {
    let cp = MapModel::levy(
        LevyComponent::compound_poisson(-1.0, 1.0, JumpDist::Uniform { lo: -1.0, hi: 2.0 }),
        SpectralFlag::TwoSided,
    );
    let three = MapModel::fluid(GeneratorMatrix::cyclic(3, 1.0).unwrap(), &[1.0, -2.0, -3.0]);
    for model in [&cp, &three] {
        for k in [None, Some(1.5)] {
            let rep = check_pathwise_monotonicity(model, 1_000, 15.0, k, 9).unwrap();
            assert_eq!(rep.total_violations(), 0, "{rep:?}");
        }
    }
}

#[test]
fn simulated_pathology_is_detected() {
    // a fabricated curve with a clear bump must be rejected even with noise
    let ts: Vec<f64> = (0..10).map(|k| k as f64).collect();
    let c: Vec<f64> = ts.iter().map(|&t| (-0.5 * t).exp() + if t == 5.0 { 0.3 } else { 0.0 }).collect();
    let curve = queuecorr::CorrelationCurve::analytic(ts, c, 1.0, queuecorr::CurveMethod::Analytic);
    let rep = check_shape(&curve, 0.01).unwrap();
    assert!(rep.any_violated());
    assert_eq!(rep.get(ShapeProperty::NonIncreasing).verdict, Verdict::Violated);
}

fn law_strategy() -> impl Strategy<Value = FiniteLaw> {
    prop::collection::vec((0.0..10.0f64, 0.01..1.0f64), 1..7).prop_map(|pts| {
        let total: f64 = pts.iter().map(|p| p.1).sum();
        let mut probs: Vec<f64> = pts.iter().map(|p| p.1 / total).collect();
        let rest: f64 = probs[1..].iter().sum();
        probs[0] = 1.0 - rest;
        FiniteLaw::new(pts.iter().map(|p| p.0).collect(), probs).unwrap()
    })
}

proptest! {
    #[test]
    fn monotone_correlation_inequality(
        law in law_strategy(),
        cuts in prop::collection::vec(0.0..10.0f64, 0..4),
        steps in prop::collection::vec(0.0..3.0f64, 4),
        seed in any::<u64>(),
    ) {
        let mut cuts = cuts;
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut levels = vec![0.0];
        for s in steps.iter().take(cuts.len()) {
            levels.push(levels.last().unwrap() + s);
        }
        let f = StepFunction::new(cuts, levels).unwrap();
        let g = f.negated();
        let mut rng = RngStreamSpec::new(seed, 0).rng(StreamRole::Trial);
        for kind in Coupling::ALL {
            let joint = coupling_matrix(&law, kind, &mut rng);
            let (a, b) = monotone_pair_expectations(&law, &joint, |x| f.eval(x));
            prop_assert!(a >= b - 1e-12 * (1.0 + a.abs() + b.abs()), "{kind:?}: {a} < {b}");
            let (a, b) = monotone_pair_expectations(&law, &joint, |x| g.eval(x));
            prop_assert!(a <= b + 1e-12 * (1.0 + a.abs() + b.abs()), "{kind:?}: {a} > {b}");
        }
    }
}
