use nalgebra::DMatrix;
use queuecorr::model::{
    matrix_exponent, mean_drift, stability_check, stationary_distribution, validate_model, ViolationKind,
};
use queuecorr::sim::{simulate_path_from, Discretization, RngStreamSpec, StreamRole};
use queuecorr::{GeneratorMatrix, JumpDist, LevyComponent, MapModel, SpectralFlag};

fn sp_map() -> MapModel {
    let g = GeneratorMatrix::from_rows(&[vec![-1.0, 1.0], vec![2.0, -2.0]]).unwrap();
    MapModel::new(
        g,
        vec![
            LevyComponent::compound_poisson(-1.0, 0.5, JumpDist::Exponential { mean: 1.0 }),
            LevyComponent::fluid(-0.5),
        ],
        SpectralFlag::Positive,
    )
    .with_transition_jump(1, 0, JumpDist::Deterministic { size: 0.3 })
}

#[test]
fn matrix_exponent_matches_simulated_transform() {
    let model = sp_map();
    let (alpha, t) = (0.7, 1.5);
    let exact = (matrix_exponent(&model, alpha).unwrap() * t).exp();
    let n = 20_000;
    for i in 0..2 {
        let mut sums = [0.0; 2];
        let mut sq = [0.0; 2];
        for rep in 0..n {
            let spec = RngStreamSpec::new(5 + i as u64, rep);
            let p = simulate_path_from(&model, t, Discretization::Event, i, &mut spec.rng(StreamRole::Path)).unwrap();
            let (x, j) = (*p.x.last().unwrap(), *p.states.last().unwrap());
            let v = (-alpha * x).exp();
            sums[j] += v;
            sq[j] += v * v;
        }
        for j in 0..2 {
            let m = sums[j] / n as f64;
            let se = ((sq[j] / n as f64 - m * m) / n as f64).sqrt();
            assert!((m - exact[(i, j)]).abs() < 4.0 * se, "({i},{j}): {m} vs {}", exact[(i, j)]);
        }
    }
}

#[test]
fn matrix_exponent_at_zero_is_the_generator() {
    let model = sp_map();
    let s = matrix_exponent(&model, 0.0).unwrap();
    assert!((s - model.generator.matrix()).abs().max() < 1e-15);
    let two_sided = MapModel::levy(LevyComponent::brownian(-1.0, 1.0), SpectralFlag::TwoSided);
    assert!(matrix_exponent(&two_sided, 1.0).is_err());
}

#[test]
fn stationary_laws() {
    let pi = stationary_distribution(&GeneratorMatrix::cyclic(5, 1.0).unwrap()).unwrap();
    assert!(pi.iter().all(|p| (p - 0.2).abs() < 1e-14));
    let pi = stationary_distribution(&GeneratorMatrix::two_state(3.0, 1.0)).unwrap();
    assert!((pi[0] - 0.25).abs() < 1e-14 && (pi[1] - 0.75).abs() < 1e-14);
}

#[test]
fn drift_includes_jumps() {
    let model = sp_map();
    // π = (2/3, 1/3); state 1: -1 + 0.5; transitions 2 -> 1 at rate 2 add 0.3
    let expected = 2.0 / 3.0 * -0.5 + 1.0 / 3.0 * (-0.5 + 2.0 * 0.3);
    assert!((mean_drift(&model).unwrap() - expected).abs() < 1e-14);
    assert!(stability_check(&model).unwrap());
    let unstable = MapModel::fluid(GeneratorMatrix::two_state(1.0, 1.0), &[2.0, -1.0]);
    assert!(!stability_check(&unstable).unwrap());
}

#[test]
fn validation_reports_each_problem() {
    let g = GeneratorMatrix::new(DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, 0.0])).unwrap();
    let rep = validate_model(&MapModel::fluid(g, &[1.0, -1.0]));
    assert!(rep.has(ViolationKind::Reducible));

    let bad_sign = MapModel::levy(
        LevyComponent::compound_poisson(-1.0, 1.0, JumpDist::Uniform { lo: -1.0, hi: 1.0 }),
        SpectralFlag::Positive,
    );
    let rep = validate_model(&bad_sign);
    assert!(rep.has(ViolationKind::SpectralSign));
    assert!(rep.violations[0].message.contains("sign/spectral mismatch"));

    let neg_var = MapModel::levy(LevyComponent::brownian(-1.0, -1.0), SpectralFlag::TwoSided);
    assert!(validate_model(&neg_var).has(ViolationKind::NegativeVariance));

    let g = GeneratorMatrix::from_rows(&[vec![-1.0, 0.5], vec![1.0, -1.0]]).unwrap();
    assert!(validate_model(&MapModel::fluid(g, &[1.0, -1.0])).has(ViolationKind::RowSum));
}

#[test]
fn jump_transforms() {
    let e = JumpDist::Exponential { mean: 2.0 };
    assert!((e.laplace(1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    assert!(e.mgf(0.6).is_err());
    let u = JumpDist::Uniform { lo: -1.0, hi: 2.0 };
    let direct = ((-1.0f64).exp() - 2.0f64.exp()) / (-3.0);
    assert!((u.mgf(1.0).unwrap() - direct).abs() < 1e-14);
    assert_eq!(JumpDist::Deterministic { size: 0.0 }.laplace(5.0).unwrap(), 1.0);
}
