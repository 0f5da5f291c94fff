//! Monte Carlo estimators of `c(t) = Cov(Q_0, Q_t)` and `r(t)`.

use std::fmt::{self, Write as _};

use rand::Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::fluid::{stationary_workload_fluid, FluidView, StationaryWorkloadFluid};
use crate::model::{stability_check, validate_model, MapModel};
use crate::sim::{
    coupled_pair, reflect, sample_background, simulate_path_from, Discretization, RngStreamSpec,
    StreamRole,
};

/// Where a curve came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMethod {
    Plain,
    Coupled,
    AnalyticInverted,
    /// Closed-form evaluation.
    Analytic,
}

impl CurveMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveMethod::Plain => "plain",
            CurveMethod::Coupled => "coupled",
            CurveMethod::AnalyticInverted => "analytic-inverted",
            CurveMethod::Analytic => "analytic",
        }
    }

    pub fn is_simulated(self) -> bool {
        matches!(self, CurveMethod::Plain | CurveMethod::Coupled)
    }
}

impl fmt::Display for CurveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `c(t)` and `r(t)` on a grid, with 95% half-widths for simulated curves.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationCurve {
    pub t: Vec<f64>,
    pub c: Vec<f64>,
    pub r: Vec<f64>,
    /// Half-width for `r`.
    pub half_width: Vec<f64>,
    /// Half-width for `c`.
    pub c_half_width: Vec<f64>,
    pub n_reps: usize,
    pub method: CurveMethod,
    /// The variance used to normalise `c` into `r`.
    pub var_q0: f64,
    /// Per-batch `r` curves, used to propagate uncertainty into derived
    /// quantities. Empty for analytic curves.
    pub batch_r: Vec<Vec<f64>>,
}

impl CorrelationCurve {
    /// Noise-free curve from values of `c`.
    pub fn analytic(t: Vec<f64>, c: Vec<f64>, var_q0: f64, method: CurveMethod) -> Self {
        let n = t.len();
        let r = c.iter().map(|&v| v / var_q0).collect();
        CorrelationCurve {
            t,
            c,
            r,
            half_width: vec![0.0; n],
            c_half_width: vec![0.0; n],
            n_reps: 0,
            method,
            var_q0,
            batch_r: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// CSV with header `t,c_hat,r_hat,half_width,n_reps,method`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,c_hat,r_hat,half_width,n_reps,method\n");
        for k in 0..self.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.t[k], self.c[k], self.r[k], self.half_width[k], self.n_reps, self.method
            );
        }
        out
    }

    /// CSV with header `t,c,r`.
    pub fn to_analytic_csv(&self) -> String {
        let mut out = String::from("t,c,r\n");
        for k in 0..self.len() {
            let _ = writeln!(out, "{},{},{}", self.t[k], self.c[k], self.r[k]);
        }
        out
    }
}

/// How stationary initial conditions are produced.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StartMethod {
    /// Exact draws when a closed-form law exists, burn-in otherwise.
    #[default]
    Auto,
    /// Exact draws from the fluid stationary law; an error if there is none.
    Exact,
    /// Forward simulation from an empty queue over the given horizon.
    BurnIn(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub reps: usize,
    pub seed: u64,
    /// `None` picks event-driven paths when possible, Euler steps otherwise.
    pub disc: Option<Discretization>,
    /// Finite buffer `K` for two-sided reflection.
    pub buffer: Option<f64>,
    pub start: StartMethod,
    pub batches: usize,
    /// Thread count; results do not depend on it.
    pub workers: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            reps: 10_000,
            seed: 1,
            disc: None,
            buffer: None,
            start: StartMethod::Auto,
            batches: 50,
            workers: None,
        }
    }
}

impl SimConfig {
    pub fn with_reps(mut self, reps: usize) -> Self {
        self.reps = reps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_buffer(mut self, k: Option<f64>) -> Self {
        self.buffer = k;
        self
    }

    pub fn discretization(&self, model: &MapModel) -> Discretization {
        self.disc.unwrap_or_else(|| Discretization::auto(model))
    }
}

/// Runs `f` for replications `0..n` in parallel, keeping index order.
pub(crate) fn run_indexed<T, F>(n: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let job = || (0..n).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w.max(1))
            .build()
            .map_err(|e| Error::Numeric(format!("cannot build thread pool: {e}")))?
            .install(job),
        None => job(),
    }
}

/// Draws `(Q_0, J_0)` from the stationary law of the queue.
#[derive(Debug, Clone)]
pub struct StationarySampler {
    kind: SamplerKind,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Exact(StationaryWorkloadFluid),
    /// Reflected Brownian motion: density proportional to `e^{κx}` on
    /// `[0, K]` (or `[0, ∞)`), `κ = 2·drift/variance`.
    Brownian { kappa: f64, upper: Option<f64> },
    BurnIn {
        horizon: f64,
        disc: Discretization,
        upper: Option<f64>,
    },
}

impl StationarySampler {
    pub fn new(model: &MapModel, cfg: &SimConfig) -> Result<Self> {
        validate_model(model).into_result()?;
        if cfg.buffer.is_none() && !stability_check(model)? {
            return Err(Error::Unstable {
                drift: crate::model::mean_drift(model)?,
            });
        }
        let brownian = model.dim() == 1 && {
            let c = &model.components[0];
            c.brownian_var > 0.0 && (c.jump_rate == 0.0 || c.jump_dist.is_zero())
        };
        let exact_available = brownian || (cfg.buffer.is_none() && model.is_fluid());
        let kind = match cfg.start {
            StartMethod::Exact | StartMethod::Auto if exact_available && brownian => {
                let c = &model.components[0];
                SamplerKind::Brownian {
                    kappa: 2.0 * c.drift / c.brownian_var,
                    upper: cfg.buffer,
                }
            }
            StartMethod::Exact | StartMethod::Auto if exact_available => {
                SamplerKind::Exact(stationary_workload_fluid(&FluidView::new(model)?)?)
            }
            StartMethod::Exact => {
                return Err(Error::Unsupported(
                    "exact stationary sampling needs an infinite-buffer fluid model or Brownian input".into(),
                ))
            }
            StartMethod::BurnIn(horizon) => {
                if !(horizon >= 0.0 && horizon.is_finite()) {
                    return Err(Error::Domain(format!("burn-in must be non-negative, got {horizon}")));
                }
                SamplerKind::BurnIn {
                    horizon,
                    disc: cfg.discretization(model),
                    upper: cfg.buffer,
                }
            }
            StartMethod::Auto => SamplerKind::BurnIn {
                horizon: auto_burn_in(model, cfg)?,
                disc: cfg.discretization(model),
                upper: cfg.buffer,
            },
        };
        Ok(StationarySampler { kind })
    }

    /// Burn-in horizon, or `None` for exact sampling.
    pub fn burn_in(&self) -> Option<f64> {
        match self.kind {
            SamplerKind::Exact(_) | SamplerKind::Brownian { .. } => None,
            SamplerKind::BurnIn { horizon, .. } => Some(horizon),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, model: &MapModel, rng: &mut R) -> Result<(f64, usize)> {
        match &self.kind {
            SamplerKind::Exact(sw) => Ok(sw.sample(rng)),
            SamplerKind::Brownian { kappa, upper } => {
                let u: f64 = rng.random();
                let x = match upper {
                    None => -(1.0 - u).ln() / -kappa,
                    Some(k) if kappa.abs() * k < 1e-12 => u * k,
                    // inverse of (e^{κx} − 1)/(e^{κK} − 1)
                    Some(k) => (u * (kappa * k).exp_m1()).ln_1p() / kappa,
                };
                Ok((x, 0))
            }
            SamplerKind::BurnIn { horizon, disc, upper } => {
                let j = sample_background(model, rng)?;
                if *horizon == 0.0 {
                    return Ok((0.0, j));
                }
                let path = simulate_path_from(model, *horizon, *disc, j, rng)?;
                Ok(reflect(&path, 0.0, *upper)?.terminal())
            }
        }
    }
}

/// Burn-in of `40 / (relaxation rate)` for single-regime input; for
/// modulated input 50 mean busy cycles measured on a pilot path.
fn auto_burn_in(model: &MapModel, cfg: &SimConfig) -> Result<f64> {
    if model.dim() == 1 {
        if let Ok(rate) = model.components[0].relaxation_rate() {
            return Ok(if rate.is_finite() { 40.0 / rate } else { 0.0 });
        }
    }
    let tau = (0..model.dim())
        .map(|i| model.generator.leaving_rate(i))
        .filter(|&r| r > 0.0)
        .map(|r| 1.0 / r)
        .fold(1.0, f64::max);
    let horizon = 2000.0 * tau;
    let spec = RngStreamSpec::new(cfg.seed, u64::MAX);
    let mut rng = spec.rng(StreamRole::Pilot);
    let j = sample_background(model, &mut rng)?;
    let path = simulate_path_from(model, horizon, cfg.discretization(model), j, &mut rng)?;
    let q = reflect(&path, 0.0, cfg.buffer)?.q;
    let cycles = q.windows(2).filter(|w| w[0] <= 0.0 && w[1] > 0.0).count();
    let mean_cycle = horizon / cycles.max(1) as f64;
    Ok((50.0 * mean_cycle).max(10.0 * tau).min(1e4 * tau))
}

/// One exact or burned-in stationary draw using the `Start` stream of `spec`.
pub fn sample_stationary_start(model: &MapModel, cfg: &SimConfig, spec: &RngStreamSpec) -> Result<(f64, usize)> {
    StationarySampler::new(model, cfg)?.sample(model, &mut spec.rng(StreamRole::Start))
}

fn check_grid(t: &[f64]) -> Result<()> {
    if t.is_empty() {
        return Err(Error::Grid("time grid is empty".into()));
    }
    if t.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::Grid("times must be finite and non-negative".into()));
    }
    if t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Grid("time grid must be strictly increasing".into()));
    }
    Ok(())
}

fn check_reps(cfg: &SimConfig) -> Result<()> {
    if cfg.reps < 100 {
        return Err(Error::Domain(format!("need at least 100 replications, got {}", cfg.reps)));
    }
    if cfg.batches < 2 {
        return Err(Error::Domain("need at least two batches".into()));
    }
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Unbiased covariance of paired samples.
fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a.iter().copied());
    let mb = mean(b.iter().copied());
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() - 1) as f64
}

fn z95() -> f64 {
    Normal::standard().inverse_cdf(0.975)
}

fn spread(values: &[f64]) -> f64 {
    let m = mean(values.iter().copied());
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}

fn batch_bounds(n: usize, batches: usize) -> Vec<(usize, usize)> {
    let b = batches.min(n / 2).max(2);
    (0..b).map(|k| (k * n / b, (k + 1) * n / b)).collect()
}

/// Builds a curve from stationary pairs: `q0[r]` and `qt[r][j] = Q_{t_j}`.
pub fn curve_from_samples(
    t: Vec<f64>,
    q0: &[f64],
    qt: &[Vec<f64>],
    batches: usize,
    method: CurveMethod,
) -> CorrelationCurve {
    let n = q0.len();
    let m = t.len();
    let column = |j: usize, lo: usize, hi: usize| -> Vec<f64> { qt[lo..hi].iter().map(|row| row[j]).collect() };
    let stats = |lo: usize, hi: usize| -> (Vec<f64>, Vec<f64>) {
        let a = &q0[lo..hi];
        let var = covariance(a, a);
        let c: Vec<f64> = (0..m).map(|j| covariance(a, &column(j, lo, hi))).collect();
        let r = c.iter().map(|&v| v / var).collect();
        (c, r)
    };
    let (c, r) = stats(0, n);
    let var_q0 = covariance(q0, q0);
    let per_batch: Vec<(Vec<f64>, Vec<f64>)> = batch_bounds(n, batches)
        .into_iter()
        .map(|(lo, hi)| stats(lo, hi))
        .collect();
    let b = per_batch.len() as f64;
    let hw = |pick: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> f64| -> f64 {
        let vals: Vec<f64> = per_batch.iter().map(pick).collect();
        z95() * spread(&vals) / b.sqrt()
    };
    let half_width = (0..m).map(|j| hw(&|s| s.1[j])).collect();
    let c_half_width = (0..m).map(|j| hw(&|s| s.0[j])).collect();
    CorrelationCurve {
        t,
        c,
        r,
        half_width,
        c_half_width,
        n_reps: n,
        method,
        var_q0,
        batch_r: per_batch.into_iter().map(|s| s.1).collect(),
    }
}

/// Plain estimator: stationary start, one simulated path per replication,
/// unbiased covariance between `Q_0` and `Q_t`, batch-means half-widths.
pub fn estimate_correlation(model: &MapModel, t_grid: &[f64], cfg: &SimConfig) -> Result<CorrelationCurve> {
    check_grid(t_grid)?;
    check_reps(cfg)?;
    let sampler = StationarySampler::new(model, cfg)?;
    let disc = cfg.discretization(model);
    let horizon = *t_grid.last().unwrap();
    let rows = run_indexed(cfg.reps, cfg.workers, |rep| {
        let spec = RngStreamSpec::new(cfg.seed, rep as u64);
        let (q0, j0) = sampler.sample(model, &mut spec.rng(StreamRole::Start))?;
        if horizon == 0.0 {
            return Ok((q0, vec![q0; t_grid.len()]));
        }
        let path = simulate_path_from(model, horizon, disc, j0, &mut spec.rng(StreamRole::Path))?;
        let refl = reflect(&path, q0, cfg.buffer)?;
        Ok((q0, t_grid.iter().map(|&t| if t == 0.0 { q0 } else { refl.q_at(t) }).collect()))
    })?;
    let (q0, qt): (Vec<f64>, Vec<Vec<f64>>) = rows.into_iter().unzip();
    Ok(curve_from_samples(t_grid.to_vec(), &q0, &qt, cfg.batches, CurveMethod::Plain))
}

/// Coupled estimator `c(t) = E[Q_0 (Q_t - Q*_t)]`, where `Q*` starts from an
/// independent stationary level and is driven by the same input. The
/// variance used for `r` is the estimator's own value at `t = 0`.
pub fn estimate_covariance_coupled(
    model: &MapModel,
    t_grid: &[f64],
    cfg: &SimConfig,
) -> Result<CorrelationCurve> {
    if model.dim() != 1 {
        return Err(Error::Unsupported(
            "the coupled estimator needs single-regime Lévy input: with a background chain the \
             two copies start in different background states and cannot share the driving process"
                .into(),
        ));
    }
    check_grid(t_grid)?;
    check_reps(cfg)?;
    let sampler = StationarySampler::new(model, cfg)?;
    let disc = cfg.discretization(model);
    let horizon = *t_grid.last().unwrap();
    let rows = run_indexed(cfg.reps, cfg.workers, |rep| {
        let spec = RngStreamSpec::new(cfg.seed, rep as u64);
        let (q0, _) = sampler.sample(model, &mut spec.rng(StreamRole::Start))?;
        let (q0_star, _) = sampler.sample(model, &mut spec.rng(StreamRole::Coupled))?;
        let base = q0 * (q0 - q0_star);
        if horizon == 0.0 {
            return Ok((base, vec![base; t_grid.len()]));
        }
        let path = simulate_path_from(model, horizon, disc, 0, &mut spec.rng(StreamRole::Path))?;
        let pair = coupled_pair(&path, q0, q0_star, cfg.buffer)?;
        let vals = t_grid
            .iter()
            .map(|&t| if t == 0.0 { base } else { q0 * (pair.a.q_at(t) - pair.b.q_at(t)) })
            .collect();
        Ok((base, vals))
    })?;
    let n = rows.len();
    let m = t_grid.len();
    let means = |lo: usize, hi: usize| -> (f64, Vec<f64>) {
        let k = (hi - lo) as f64;
        let var = rows[lo..hi].iter().map(|r| r.0).sum::<f64>() / k;
        let c = (0..m).map(|j| rows[lo..hi].iter().map(|r| r.1[j]).sum::<f64>() / k).collect();
        (var, c)
    };
    let (var_q0, c) = means(0, n);
    let per_batch: Vec<(f64, Vec<f64>)> = batch_bounds(n, cfg.batches)
        .into_iter()
        .map(|(lo, hi)| means(lo, hi))
        .collect();
    let b = per_batch.len() as f64;
    let batch_r: Vec<Vec<f64>> = per_batch
        .iter()
        .map(|(v, c)| c.iter().map(|x| x / v).collect())
        .collect();
    let half_width = (0..m)
        .map(|j| z95() * spread(&batch_r.iter().map(|r| r[j]).collect::<Vec<_>>()) / b.sqrt())
        .collect();
    let c_half_width = (0..m)
        .map(|j| z95() * spread(&per_batch.iter().map(|p| p.1[j]).collect::<Vec<_>>()) / b.sqrt())
        .collect();
    Ok(CorrelationCurve {
        t: t_grid.to_vec(),
        r: c.iter().map(|x| x / var_q0).collect(),
        c,
        half_width,
        c_half_width,
        n_reps: n,
        method: CurveMethod::Coupled,
        var_q0,
        batch_r,
    })
}

/// `γ̂(ϑ)`: covariance of `Q_0` and `Q_T` with an independent `T ~ Exp(ϑ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaEstimate {
    pub theta: f64,
    pub gamma: f64,
    /// 95% batch-means half-width.
    pub half_width: f64,
}

pub fn estimate_gamma(model: &MapModel, thetas: &[f64], cfg: &SimConfig) -> Result<Vec<GammaEstimate>> {
    if thetas.iter().any(|&th| !(th > 0.0 && th.is_finite())) {
        return Err(Error::Domain("ϑ must be positive and finite".into()));
    }
    check_reps(cfg)?;
    let sampler = StationarySampler::new(model, cfg)?;
    let disc = cfg.discretization(model);
    thetas
        .iter()
        .enumerate()
        .map(|(k, &theta)| {
            let rows = run_indexed(cfg.reps, cfg.workers, |rep| {
                let spec = RngStreamSpec::new(cfg.seed, (k * cfg.reps + rep) as u64);
                let (q0, j0) = sampler.sample(model, &mut spec.rng(StreamRole::Start))?;
                let u: f64 = spec.rng(StreamRole::Horizon).random();
                let horizon = -(1.0 - u).ln() / theta;
                let path = simulate_path_from(model, horizon, disc, j0, &mut spec.rng(StreamRole::Path))?;
                Ok((q0, reflect(&path, q0, cfg.buffer)?.terminal().0))
            })?;
            let (a, b): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
            let per_batch: Vec<f64> = batch_bounds(a.len(), cfg.batches)
                .into_iter()
                .map(|(lo, hi)| covariance(&a[lo..hi], &b[lo..hi]))
                .collect();
            Ok(GammaEstimate {
                theta,
                gamma: covariance(&a, &b),
                half_width: z95() * spread(&per_batch) / (per_batch.len() as f64).sqrt(),
            })
        })
        .collect()
}

/// `Ω̂_i = mean of exp(η X̲_T)` with `T ~ Exp(ϑ)` and `J_0 = i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinTransformEstimate {
    pub state: usize,
    pub mean: f64,
    pub std_err: f64,
}

pub fn estimate_min_transform(
    model: &MapModel,
    eta: f64,
    theta: f64,
    cfg: &SimConfig,
) -> Result<Vec<MinTransformEstimate>> {
    if !(eta > 0.0 && theta > 0.0) {
        return Err(Error::Domain(format!("need η > 0 and ϑ > 0, got η = {eta}, ϑ = {theta}")));
    }
    validate_model(model).into_result()?;
    if cfg.reps < 2 {
        return Err(Error::Domain("need at least two replications".into()));
    }
    let disc = cfg.discretization(model);
    (0..model.dim())
        .map(|state| {
            let vals = run_indexed(cfg.reps, cfg.workers, |rep| {
                let spec = RngStreamSpec::new(cfg.seed, (state * cfg.reps + rep) as u64);
                let u: f64 = spec.rng(StreamRole::Horizon).random();
                let horizon = -(1.0 - u).ln() / theta;
                let path = simulate_path_from(model, horizon, disc, state, &mut spec.rng(StreamRole::Path))?;
                Ok((eta * path.running_min()).exp())
            })?;
            let m = mean(vals.iter().copied());
            Ok(MinTransformEstimate {
                state,
                mean: m,
                std_err: spread(&vals) / (vals.len() as f64).sqrt(),
            })
        })
        .collect()
}
