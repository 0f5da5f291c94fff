use queuecorr::transform::{correlation_from_gamma, decay_rate_fit, invert_laplace_fn};
use queuecorr::{FitMode, InversionParams, MapModel, TransformEvaluator, TwoStateFluidParams};

fn two_state() -> TwoStateFluidParams {
    TwoStateFluidParams::new(1.0, 4.0).unwrap()
}

#[test]
fn general_fluid_route_matches_closed_form_route() {
    let p = two_state();
    let ts = [0.5, 1.0, 2.0, 5.0, 10.0];
    let params = InversionParams::default();
    let closed = correlation_from_gamma(&TransformEvaluator::two_state(p).unwrap(), &ts, &params).unwrap();
    let model: MapModel = p.model();
    let general = correlation_from_gamma(&TransformEvaluator::fluid(&model).unwrap(), &ts, &params).unwrap();
    for k in 0..ts.len() {
        assert!((closed.r[k] - general.r[k]).abs() < 1e-6, "t={}: {} vs {}", ts[k], closed.r[k], general.r[k]);
    }
}

#[test]
fn correlation_is_continuous_at_zero() {
    let ev = TransformEvaluator::two_state(two_state()).unwrap();
    let c = correlation_from_gamma(&ev, &[0.0, 0.01], &InversionParams::default()).unwrap();
    assert_eq!(c.r[0], 1.0);
    assert!((0.99..=1.0).contains(&c.r[1]), "{}", c.r[1]);
}

#[test]
fn cyclic_three_tail_constant() {
    let ev = TransformEvaluator::cyclic(3).unwrap();
    assert!((ev.var_q0 - 5.0 / 9.0).abs() < 1e-14);
    let c = correlation_from_gamma(&ev, &[40.0], &InversionParams::default()).unwrap();
    assert!((c.r[0] * 40f64.exp() - 1.2).abs() < 1e-6, "{}", c.r[0] * 40f64.exp());
}

#[test]
fn textbook_pair_on_the_unit_range() {
    let p = InversionParams::default();
    for k in 1..=100 {
        let t = 0.1 * k as f64;
        let v = invert_laplace_fn(|s| Ok(1.0 / (1.0 + s)), t, 0.0, &p).unwrap().value;
        assert!((v * t.exp() - 1.0).abs() < 1e-8, "t={t}");
    }
}

#[test]
fn cyclic_six_envelope_rate() {
    let ev = TransformEvaluator::cyclic(6).unwrap();
    let ts: Vec<f64> = (0..=600).map(|k| 20.0 + 0.1 * k as f64).collect();
    let curve = correlation_from_gamma(&ev, &ts, &InversionParams::default()).unwrap();
    let fit = decay_rate_fit(&curve, (20.0, 80.0), FitMode::Envelope).unwrap();
    assert!((fit.rate + 0.5).abs() < 0.01, "{}", fit.rate);
    assert!(decay_rate_fit(&curve, (20.0, 80.0), FitMode::Plain).is_err());
}

#[test]
fn failed_convergence_is_reported() {
    let p = InversionParams {
        n_terms: 2,
        euler_terms: 1,
        ..InversionParams::default()
    };
    // a jump discontinuity at t = 1 defeats the series near t = 1
    let r = invert_laplace_fn(|s| Ok((-s).exp() / s), 1.0, 0.0, &p);
    assert!(r.is_err());
}
