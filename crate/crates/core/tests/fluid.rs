use num_complex::Complex64;
use queuecorr::fluid::{
    cyclic_gamma, gamma_sp, stationary_workload_fluid, stationary_workload_two_state, two_state_gamma,
    FluidView,
};
use queuecorr::sim::{reflect, sample_background, simulate_path_from, Discretization, RngStreamSpec, StreamRole};
use queuecorr::{GeneratorMatrix, MapModel, TwoStateFluidParams};
use rand::Rng;

fn three_state() -> MapModel {
    MapModel::fluid(GeneratorMatrix::cyclic(3, 1.0).unwrap(), &[1.0, -2.0, -3.0])
}

/// Terminal workload after running the queue from empty for `burn` time units.
fn burned_in_draws(model: &MapModel, n: usize, burn: f64, seed: u64) -> Vec<f64> {
    (0..n)
        .map(|rep| {
            let spec = RngStreamSpec::new(seed, rep as u64);
            let mut rng = spec.rng(StreamRole::Start);
            let j = sample_background(model, &mut rng).unwrap();
            let path = simulate_path_from(model, burn, Discretization::Event, j, &mut rng).unwrap();
            reflect(&path, 0.0, None).unwrap().terminal().0
        })
        .collect()
}

/// Kolmogorov distance to a law that is continuous on `(0, ∞)` with a
/// possible atom at 0.
fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d = 0.0_f64;
    let mut k = 0;
    while k < xs.len() {
        let mut e = k + 1;
        while e < xs.len() && xs[e] == xs[k] {
            e += 1;
        }
        let f = cdf(xs[k]);
        d = d.max((f - e as f64 / n).abs());
        if xs[k] > 0.0 {
            d = d.max((f - k as f64 / n).abs());
        }
        k = e;
    }
    d
}

#[test]
fn three_state_law_matches_simulated_workload() {
    let model = three_state();
    let sw = stationary_workload_fluid(&FluidView::new(&model).unwrap()).unwrap();
    assert!((sw.total_mass() - 1.0).abs() < 1e-12);
    let draws = burned_in_draws(&model, 100_000, 40.0, 17);
    let d = ks_distance(draws, |x| sw.cdf(x));
    assert!(d < 0.01, "KS distance {d}");
}

#[test]
fn two_state_busy_fraction_and_mean_from_long_path() {
    let p = TwoStateFluidParams::new(1.0, 4.0).unwrap();
    let model = p.model();
    let spec = RngStreamSpec::new(3, 0);
    let horizon = 200_000.0;
    let path = simulate_path_from(&model, horizon, Discretization::Event, 0, &mut spec.rng(StreamRole::Path)).unwrap();
    let q = reflect(&path, 0.0, None).unwrap();
    // exact time integrals over the piecewise-linear workload
    let (mut busy, mut area) = (0.0, 0.0);
    for k in 0..q.q.len() - 1 {
        let dt = q.path.times[k + 1] - q.path.times[k];
        let (a, b) = (q.q[k], q.q[k + 1]);
        if a > 0.0 || b > 0.0 {
            busy += dt;
        }
        area += 0.5 * (a + b) * dt;
    }
    assert!((busy / horizon - 0.625).abs() < 0.01, "{}", busy / horizon);
    assert!((area / horizon - 5.0 / 6.0).abs() < 0.03, "{}", area / horizon);
    let m = stationary_workload_two_state(&p).unwrap().moments();
    assert!((m.mean - 5.0 / 6.0).abs() < 1e-12);
}

#[test]
fn exact_sampler_hits_busy_probability() {
    let p = TwoStateFluidParams::new(1.0, 4.0).unwrap();
    let sw = stationary_workload_two_state(&p).unwrap();
    let n = 100_000;
    let mut rng = RngStreamSpec::new(8, 0).rng(StreamRole::Start);
    let busy = (0..n).filter(|_| sw.sample(&mut rng).0 > 0.0).count() as f64 / n as f64;
    let sd = (0.625 * 0.375 / n as f64).sqrt();
    assert!((busy - 0.625).abs() < 3.0 * sd, "{busy}");
}

#[test]
fn steep_fluid_approximates_the_cyclic_example() {
    for d in [2, 3] {
        let mut drifts = vec![-2000.0; d];
        drifts[0] = 1.0;
        let model = MapModel::fluid(GeneratorMatrix::cyclic(d, 1.0).unwrap(), &drifts);
        let fv = FluidView::new(&model).unwrap();
        let sw = stationary_workload_fluid(&fv).unwrap();
        let empty = 1.0 - sw.ccdf(0.0);
        assert!((empty - (d - 1) as f64 / d as f64).abs() < 1e-2, "d={d}: P(Q=0) = {empty}");
        for theta in [0.5, 1.0, 2.0] {
            let a = gamma_sp(&fv, &sw, theta).unwrap();
            let b = cyclic_gamma(d, Complex64::new(theta, 0.0)).unwrap().re;
            assert!((a - b).abs() < 5e-3, "d={d} theta={theta}: {a} vs {b}");
        }
    }
}

#[test]
fn gamma_matches_exponential_horizon_simulation() {
    let p = TwoStateFluidParams::new(1.0, 4.0).unwrap();
    let model = p.model();
    let sw = stationary_workload_two_state(&p).unwrap();
    let theta = 1.0;
    let n = 100_000;
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|rep| {
            let spec = RngStreamSpec::new(21, rep);
            let mut rng = spec.rng(StreamRole::Start);
            let (q0, j0) = sw.sample(&mut rng);
            let u: f64 = spec.rng(StreamRole::Horizon).random();
            let t = -(1.0 - u).ln() / theta;
            let path = simulate_path_from(&model, t, Discretization::Event, j0, &mut spec.rng(StreamRole::Path)).unwrap();
            (q0, reflect(&path, q0, None).unwrap().terminal().0)
        })
        .collect();
    let m0 = pairs.iter().map(|p| p.0).sum::<f64>() / n as f64;
    let mt = pairs.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let prods: Vec<f64> = pairs.iter().map(|(a, b)| (a - m0) * (b - mt)).collect();
    let cov = prods.iter().sum::<f64>() / (n - 1) as f64;
    let sd = (prods.iter().map(|v| (v - cov) * (v - cov)).sum::<f64>() / (n - 1) as f64).sqrt();
    let exact = two_state_gamma(&p, theta).unwrap();
    assert!((cov - exact).abs() < 3.0 * sd / (n as f64).sqrt(), "{cov} vs {exact}");
}
