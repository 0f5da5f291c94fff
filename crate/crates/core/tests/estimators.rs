use queuecorr::estimate::{
    curve_from_samples, estimate_correlation, estimate_covariance_coupled, estimate_gamma, estimate_min_transform,
    StationarySampler,
};
use queuecorr::sim::{RngStreamSpec, StreamRole};
use queuecorr::{CurveMethod, JumpDist, LevyComponent, MapModel, SimConfig, SpectralFlag, StartMethod};
use rand::Rng;

fn mm1_input() -> MapModel {
    MapModel::levy(
        LevyComponent::compound_poisson(-1.0, 0.5, JumpDist::Exponential { mean: 1.0 }),
        SpectralFlag::Positive,
    )
}

#[test]
fn independent_pairs_give_zero_correlation() {
    let mut rng = RngStreamSpec::new(1, 0).rng(StreamRole::Trial);
    let n = 20_000;
    let q0: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let qt: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
    let curve = curve_from_samples(vec![1.0, 2.0], &q0, &qt, 50, CurveMethod::Plain);
    for k in 0..2 {
        assert!(curve.r[k].abs() < curve.half_width[k] * 1.5, "{} ± {}", curve.r[k], curve.half_width[k]);
    }
}

#[test]
fn coupled_and_plain_estimators_agree() {
    let model = mm1_input();
    let ts = [0.0, 1.0, 5.0];
    let cfg = SimConfig::default().with_reps(20_000).with_seed(3);
    let plain = estimate_correlation(&model, &ts, &cfg).unwrap();
    let coupled = estimate_covariance_coupled(&model, &ts, &cfg.clone().with_seed(4)).unwrap();
    for k in 1..3 {
        let se = ((plain.half_width[k] / 1.96).powi(2) + (coupled.half_width[k] / 1.96).powi(2)).sqrt();
        assert!(
            (plain.r[k] - coupled.r[k]).abs() < 3.0 * se,
            "t={}: {} vs {}",
            ts[k],
            plain.r[k],
            coupled.r[k]
        );
    }
}

#[test]
fn coupling_reduces_the_half_width() {
    let model = mm1_input();
    let ts = [0.0, 2.0, 8.0];
    let cfg = SimConfig::default().with_reps(10_000).with_seed(5);
    let plain = estimate_correlation(&model, &ts, &cfg).unwrap();
    let coupled = estimate_covariance_coupled(&model, &ts, &cfg).unwrap();
    assert!(coupled.half_width[2] < plain.half_width[2], "{} vs {}", coupled.half_width[2], plain.half_width[2]);
}

#[test]
fn burn_in_is_long_enough() {
    let model = MapModel::levy(
        LevyComponent::compound_poisson(-1.0, 1.0, JumpDist::Uniform { lo: -1.0, hi: 2.0 }),
        SpectralFlag::TwoSided,
    );
    let ts = [0.0, 1.0, 3.0];
    let cfg = SimConfig::default().with_reps(20_000).with_seed(6);
    let t0 = StationarySampler::new(&model, &cfg).unwrap().burn_in().unwrap();
    let base = estimate_correlation(&model, &ts, &cfg).unwrap();
    let mut longer = cfg.clone();
    longer.start = StartMethod::BurnIn(2.0 * t0);
    let doubled = estimate_correlation(&model, &ts, &longer).unwrap();
    for k in 1..3 {
        assert!((base.r[k] - doubled.r[k]).abs() < base.half_width[k], "t={}", ts[k]);
    }
}

#[test]
fn brownian_start_is_exact() {
    let model = MapModel::levy(LevyComponent::brownian(-1.0, 1.0), SpectralFlag::TwoSided);
    let n = 50_000;
    for (k, mean) in [(None, 0.5), (Some(2.0), 0.5 - 2.0 / (4f64.exp() - 1.0))] {
        let cfg = SimConfig::default().with_buffer(k);
        let sampler = StationarySampler::new(&model, &cfg).unwrap();
        assert!(sampler.burn_in().is_none());
        let mut rng = RngStreamSpec::new(7, 0).rng(StreamRole::Start);
        let draws: Vec<f64> = (0..n).map(|_| sampler.sample(&model, &mut rng).unwrap().0).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        let sd = (draws.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64).sqrt();
        assert!((m - mean).abs() < 3.0 * sd / (n as f64).sqrt(), "{k:?}: {m} vs {mean}");
        assert!(draws.iter().all(|&x| x >= 0.0 && x <= k.unwrap_or(f64::INFINITY)));
    }
}

#[test]
fn min_transform_limits() {
    let down = MapModel::levy(LevyComponent::fluid(-1.0), SpectralFlag::Positive);
    let cfg = SimConfig::default().with_reps(20_000).with_seed(8);
    let est = estimate_min_transform(&down, 1.0, 1.0, &cfg).unwrap()[0];
    assert!((est.mean - 0.5).abs() < 3.0 * est.std_err, "{est:?}");
    let est = estimate_min_transform(&mm1_input(), 1.0, 1e3, &cfg).unwrap()[0];
    assert!((est.mean - 1.0).abs() < 2e-3, "{est:?}");
}

#[test]
fn exponential_horizon_covariance_matches_two_state_closed_form() {
    use queuecorr::fluid::two_state_gamma;
    let p = queuecorr::TwoStateFluidParams::new(1.0, 4.0).unwrap();
    let thetas = [0.5, 2.0, 50.0];
    let cfg = SimConfig::default().with_reps(40_000).with_seed(31);
    let est = estimate_gamma(&p.model(), &thetas, &cfg).unwrap();
    for e in &est {
        let exact = two_state_gamma(&p, e.theta).unwrap();
        assert!((e.gamma - exact).abs() < 3.0 * e.half_width, "ϑ = {}: {} vs {exact} ± {}", e.theta, e.gamma, e.half_width);
    }
    // T → 0 as ϑ grows, so γ approaches Var Q_0 = 55/36
    assert!((est[2].gamma - 55.0 / 36.0).abs() < 0.1);
    assert!(estimate_gamma(&p.model(), &[0.0], &cfg).is_err());
}
