//! Executable checks of the structural results: shape of `r(·)`, the
//! monotone-correlation inequality, pathwise monotonicity of reflected
//! workloads and the Lindley analogue.

use std::fmt::{self, Write as _};

use nalgebra::DMatrix;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimate::{curve_from_samples, run_indexed, CorrelationCurve, CurveMethod};
use crate::model::{validate_model, JumpDist, MapModel};
use crate::sim::{
    coupled_pair, gamma_lower, gamma_upper, reflect, sample_background, simulate_path_from,
    Discretization, RngStreamSpec, StreamRole,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeProperty {
    NonNegative,
    NonIncreasing,
    Convex,
}

impl ShapeProperty {
    pub const ALL: [ShapeProperty; 3] = [ShapeProperty::NonNegative, ShapeProperty::NonIncreasing, ShapeProperty::Convex];

    pub fn as_str(self) -> &'static str {
        match self {
            ShapeProperty::NonNegative => "non-negative",
            ShapeProperty::NonIncreasing => "non-increasing",
            ShapeProperty::Convex => "convex",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Violated => "violated",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub property: ShapeProperty,
    pub verdict: Verdict,
    /// Where the margin is smallest.
    pub worst_t: Option<f64>,
    /// Smallest margin; negative means violated.
    pub worst_margin: f64,
    /// Times at which the margin is negative.
    pub violations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeReport {
    pub checks: Vec<PropertyCheck>,
    pub significance: f64,
    pub provenance: CurveMethod,
    pub diagnostic: Option<String>,
}

impl ShapeReport {
    pub fn get(&self, p: ShapeProperty) -> &PropertyCheck {
        self.checks.iter().find(|c| c.property == p).expect("all properties are checked")
    }

    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.verdict == Verdict::Holds)
    }

    pub fn any_violated(&self) -> bool {
        self.checks.iter().any(|c| c.verdict == Verdict::Violated)
    }

    /// CSV with header `property,verdict,worst_t,worst_margin`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("property,verdict,worst_t,worst_margin\n");
        for c in &self.checks {
            let t = c.worst_t.map(|t| t.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", c.property.as_str(), c.verdict, t, c.worst_margin);
        }
        out
    }
}

/// Linear combinations of curve values tested by one property: each is
/// `(location, [(index, weight)])` and should be `≥ 0`.
fn combinations(p: ShapeProperty, n: usize) -> Vec<(usize, Vec<(usize, f64)>)> {
    match p {
        ShapeProperty::NonNegative => (0..n).map(|k| (k, vec![(k, 1.0)])).collect(),
        ShapeProperty::NonIncreasing => (1..n).map(|k| (k, vec![(k - 1, 1.0), (k, -1.0)])).collect(),
        ShapeProperty::Convex => (1..n - 1)
            .map(|k| (k, vec![(k - 1, 1.0), (k, -2.0), (k + 1, 1.0)]))
            .collect(),
    }
}

/// Checks non-negativity, monotonicity and convexity of `r`.
///
/// Analytic curves are judged exactly. For simulated curves a combination
/// counts as violated only below `-z·se`, with `se` from the batch curves
/// and `z` the one-sided normal quantile at `significance/m` for the `m`
/// combinations tested by that property.
pub fn check_shape(curve: &CorrelationCurve, significance: f64) -> Result<ShapeReport> {
    let n = curve.len();
    if n < 4 {
        return Err(Error::Grid(format!("shape checks need at least 4 grid points, got {n}")));
    }
    if !(significance > 0.0 && significance < 1.0) {
        return Err(Error::Domain(format!("significance must lie in (0, 1), got {significance}")));
    }
    let steps: Vec<f64> = curve.t.windows(2).map(|w| w[1] - w[0]).collect();
    let h = steps[0];
    if steps.iter().any(|&s| (s - h).abs() > 1e-9 * h.abs().max(1.0)) {
        return Err(Error::Grid("convexity needs a uniformly spaced grid".into()));
    }
    if curve.r.iter().any(|v| !v.is_finite()) || !(curve.var_q0 > 0.0) {
        let checks = ShapeProperty::ALL
            .iter()
            .map(|&property| PropertyCheck {
                property,
                verdict: Verdict::Inconclusive,
                worst_t: None,
                worst_margin: f64::NAN,
                violations: Vec::new(),
            })
            .collect();
        return Ok(ShapeReport {
            checks,
            significance,
            provenance: curve.method,
            diagnostic: Some("zero variance at lag 0: the correlation is undefined".into()),
        });
    }
    let simulated = curve.method.is_simulated();
    let batches = curve.batch_r.len();
    let z95 = Normal::standard().inverse_cdf(0.975);
    let checks = ShapeProperty::ALL
        .iter()
        .map(|&property| {
            let combos = combinations(property, n);
            let z = Normal::standard().inverse_cdf(1.0 - significance / combos.len() as f64);
            let mut worst = (None, f64::INFINITY);
            let mut violations = Vec::new();
            for (loc, w) in &combos {
                let value: f64 = w.iter().map(|&(k, c)| c * curve.r[k]).sum();
                let threshold = if !simulated {
                    0.0
                } else if batches >= 2 {
                    let vals: Vec<f64> = curve
                        .batch_r
                        .iter()
                        .map(|b| w.iter().map(|&(k, c)| c * b[k]).sum())
                        .collect();
                    let m = vals.iter().sum::<f64>() / batches as f64;
                    let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (batches - 1) as f64;
                    z * (var / batches as f64).sqrt()
                } else {
                    z * w.iter().map(|&(k, c)| c.abs() * curve.half_width[k]).sum::<f64>() / z95
                };
                let margin = value + threshold;
                if margin < worst.1 {
                    worst = (Some(curve.t[*loc]), margin);
                }
                if margin < 0.0 {
                    violations.push(curve.t[*loc]);
                }
            }
            PropertyCheck {
                property,
                verdict: if violations.is_empty() { Verdict::Holds } else { Verdict::Violated },
                worst_t: worst.0,
                worst_margin: worst.1,
                violations,
            }
        })
        .collect();
    Ok(ShapeReport {
        checks,
        significance,
        provenance: curve.method,
        diagnostic: None,
    })
}

/// Non-decreasing (or non-increasing) step function: `levels[k]` on the
/// `k`-th interval cut out by `cuts`, right-continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    pub cuts: Vec<f64>,
    pub levels: Vec<f64>,
}

impl StepFunction {
    pub fn new(cuts: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if levels.len() != cuts.len() + 1 {
            return Err(Error::Domain("a step function needs one more level than cuts".into()));
        }
        if cuts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("cuts must be strictly increasing".into()));
        }
        Ok(StepFunction { cuts, levels })
    }

    pub fn constant(c: f64) -> Self {
        StepFunction {
            cuts: Vec::new(),
            levels: vec![c],
        }
    }

    pub fn eval(&self, a: f64) -> f64 {
        self.levels[self.cuts.partition_point(|&c| c <= a)]
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.levels.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn is_non_increasing(&self) -> bool {
        self.levels.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn negated(&self) -> Self {
        StepFunction {
            cuts: self.cuts.clone(),
            levels: self.levels.iter().map(|v| -v).collect(),
        }
    }
}

/// Law on finitely many non-negative points.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteLaw {
    pub points: Vec<f64>,
    pub probs: Vec<f64>,
}

impl FiniteLaw {
    pub fn new(points: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != probs.len() {
            return Err(Error::Domain("need as many probabilities as points".into()));
        }
        if points.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(Error::Domain("points must be finite and non-negative".into()));
        }
        let total: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p < 0.0) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain("probabilities must be non-negative and sum to 1".into()));
        }
        Ok(FiniteLaw { points, probs })
    }

    pub fn uniform(points: Vec<f64>) -> Result<Self> {
        let n = points.len();
        FiniteLaw::new(points, vec![1.0 / n as f64; n])
    }
}

/// Joint laws of `(A, B)` with both marginals equal to a given law.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Coupling {
    Independent,
    /// `B = A`.
    Comonotone,
    /// `A = F⁻¹(U)`, `B = F⁻¹(1 − U)` on sorted points.
    Countermonotone,
    /// A random positive matrix scaled to the marginals.
    Random,
    /// Random convex combination of the four above.
    Mixture,
}

impl Coupling {
    pub const ALL: [Coupling; 5] = [
        Coupling::Independent,
        Coupling::Comonotone,
        Coupling::Countermonotone,
        Coupling::Random,
        Coupling::Mixture,
    ];
}

/// `P[i][j] = P(A = points[i], B = points[j])`.
pub fn coupling_matrix<R: Rng + ?Sized>(law: &FiniteLaw, kind: Coupling, rng: &mut R) -> DMatrix<f64> {
    let n = law.points.len();
    let p = &law.probs;
    match kind {
        Coupling::Independent => DMatrix::from_fn(n, n, |i, j| p[i] * p[j]),
        Coupling::Comonotone => DMatrix::from_fn(n, n, |i, j| if i == j { p[i] } else { 0.0 }),
        Coupling::Countermonotone => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| law.points[a].total_cmp(&law.points[b]));
            let mut cum = vec![0.0; n + 1];
            for (k, &i) in order.iter().enumerate() {
                cum[k + 1] = cum[k] + p[i];
            }
            let mut m = DMatrix::zeros(n, n);
            for (ka, &ia) in order.iter().enumerate() {
                for (kb, &ib) in order.iter().enumerate() {
                    let lo = cum[ka].max(1.0 - cum[kb + 1]);
                    let hi = cum[ka + 1].min(1.0 - cum[kb]);
                    m[(ia, ib)] = (hi - lo).max(0.0);
                }
            }
            m
        }
        Coupling::Random => {
            let mut m = DMatrix::from_fn(n, n, |i, j| if p[i] > 0.0 && p[j] > 0.0 { rng.random::<f64>() + 1e-3 } else { 0.0 });
            for _ in 0..500 {
                for i in 0..n {
                    let s: f64 = m.row(i).sum();
                    if s > 0.0 {
                        m.row_mut(i).scale_mut(p[i] / s);
                    }
                }
                for j in 0..n {
                    let s: f64 = m.column(j).sum();
                    if s > 0.0 {
                        m.column_mut(j).scale_mut(p[j] / s);
                    }
                }
            }
            m
        }
        Coupling::Mixture => {
            let w: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let total: f64 = w.iter().sum();
            let parts = [Coupling::Independent, Coupling::Comonotone, Coupling::Countermonotone, Coupling::Random];
            parts
                .iter()
                .zip(&w)
                .fold(DMatrix::zeros(n, n), |acc, (&k, &wk)| acc + coupling_matrix(law, k, rng) * (wk / total))
        }
    }
}

/// `(E[A h(A)], E[B h(A)])` under the joint law `joint`.
pub fn monotone_pair_expectations(law: &FiniteLaw, joint: &DMatrix<f64>, h: impl Fn(f64) -> f64) -> (f64, f64) {
    let n = law.points.len();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for i in 0..n {
        let ha = h(law.points[i]);
        lhs += law.probs[i] * law.points[i] * ha;
        for j in 0..n {
            rhs += joint[(i, j)] * law.points[j] * ha;
        }
    }
    (lhs, rhs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCorrelationReport {
    pub trials: usize,
    pub violations: usize,
    /// Smallest slack `E[A f(A)] − E[B f(A)]` (or its mirror for `g`) seen.
    pub min_slack: f64,
}

/// Randomised exact-enumeration check of `E[A f(A)] ≥ E[B f(A)]` and
/// `E[A g(A)] ≤ E[B g(A)]` for equally distributed `A`, `B ≥ 0`,
/// non-decreasing `f` and non-increasing `g`. Each trial draws a law on up
/// to eight points, a coupling, and step functions `f` and `g`.
pub fn check_monotone_correlation(trials: usize, seed: u64) -> Result<MonotoneCorrelationReport> {
    let outcomes = run_indexed(trials, None, |k| {
        let mut rng = RngStreamSpec::new(seed, k as u64).rng(StreamRole::Trial);
        let n = rng.random_range(1..=8);
        let points: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { 10.0 * rng.random::<f64>() })
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
        let total: f64 = w.iter().sum();
        let mut probs: Vec<f64> = w.iter().map(|x| x / total).collect();
        let rest: f64 = probs[1..].iter().sum();
        probs[0] = 1.0 - rest;
        let law = FiniteLaw::new(points, probs)?;
        let kind = Coupling::ALL[rng.random_range(0..Coupling::ALL.len())];
        let joint = coupling_matrix(&law, kind, &mut rng);

        let n_cuts = rng.random_range(0..=4);
        let mut cuts: Vec<f64> = (0..n_cuts).map(|_| 10.0 * rng.random::<f64>()).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut level = 4.0 * rng.random::<f64>() - 2.0;
        let mut levels = vec![level];
        for _ in 0..cuts.len() {
            level += if rng.random::<f64>() < 0.2 { 0.0 } else { 3.0 * rng.random::<f64>() };
            levels.push(level);
        }
        let f = StepFunction::new(cuts, levels)?;
        let g = if rng.random::<f64>() < 0.5 {
            f.negated()
        } else {
            StepFunction::constant(4.0 * rng.random::<f64>() - 2.0)
        };
        debug_assert!(f.is_non_decreasing() && g.is_non_increasing());

        let (af, bf) = monotone_pair_expectations(&law, &joint, |a| f.eval(a));
        let (ag, bg) = monotone_pair_expectations(&law, &joint, |a| g.eval(a));
        let scale = 1.0 + af.abs() + bf.abs() + ag.abs() + bg.abs();
        let tol = 1e-12 * scale;
        let slack = (af - bf).min(bg - ag);
        Ok((slack < -tol, slack))
    })?;
    Ok(MonotoneCorrelationReport {
        trials,
        violations: outcomes.iter().filter(|o| o.0).count(),
        min_slack: outcomes.iter().map(|o| o.1).fold(f64::INFINITY, f64::min),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub paths: usize,
    /// Paths where `Q^a_t > Q^b_t` somewhere although `Q^a_0 < Q^b_0`.
    pub order_violations: usize,
    /// Sampled `t < u` with `Q^b_u − Q^b_t > Q^a_u − Q^a_t`.
    pub increment_violations: usize,
    /// Paths where the reflection differs from the Skorokhod-map formula.
    pub composition_violations: usize,
    pub max_composition_error: f64,
}

impl MonotonicityReport {
    pub fn total_violations(&self) -> usize {
        self.order_violations + self.increment_violations + self.composition_violations
    }
}

/// Drives pairs of workloads with common input from random initial levels
/// `q0a < q0b` and checks the ordering and increment monotonicity on every
/// path, plus agreement of the reflection with the explicit maps
/// (`Γ⁻` for one-sided, `Γ⁺ ∘ Γ⁻` for two-sided).
pub fn check_pathwise_monotonicity(
    model: &MapModel,
    n_paths: usize,
    horizon: f64,
    upper: Option<f64>,
    seed: u64,
) -> Result<MonotonicityReport> {
    validate_model(model).into_result()?;
    let disc = Discretization::auto(model);
    let cap = upper.unwrap_or(5.0);
    let rows = run_indexed(n_paths, None, |k| {
        let spec = RngStreamSpec::new(seed, k as u64);
        let mut rng = spec.rng(StreamRole::Trial);
        let mut q0a = cap * rng.random::<f64>();
        let mut q0b = cap * rng.random::<f64>();
        if q0a > q0b {
            std::mem::swap(&mut q0a, &mut q0b);
        }
        let j0 = sample_background(model, &mut rng)?;
        let path = simulate_path_from(model, horizon, disc, j0, &mut spec.rng(StreamRole::Path))?;
        let pair = coupled_pair(&path, q0a, q0b, upper)?;
        let scale = 1.0 + cap + path.x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let tol = 1e-9 * scale;
        let (qa, qb) = (&pair.a.q, &pair.b.q);
        let order_bad = qa.iter().zip(qb).any(|(a, b)| a > &(b + tol));
        let mut incr_bad = 0;
        let len = qa.len();
        for _ in 0..8 {
            let i = rng.random_range(0..len);
            let j = rng.random_range(0..len);
            let (t, u) = (i.min(j), i.max(j));
            if qb[u] - qb[t] > qa[u] - qa[t] + tol {
                incr_bad += 1;
            }
        }

        // reflection versus the explicit maps, on a grid holding the hits
        // of the intermediate one-sided path
        let mut comp_err = 0.0_f64;
        if path.jumps.iter().all(|&u| u == 0.0) {
            let one = reflect(&path, q0a, None)?;
            let fine = match upper {
                Some(_) => reflect(&one.path, q0a, upper)?,
                None => one,
            };
            let y: Vec<f64> = fine.path.x.iter().map(|x| q0a + x).collect();
            let lower = gamma_lower(&y);
            let mapped = match upper {
                Some(kk) => gamma_upper(&lower, kk),
                None => lower,
            };
            comp_err = mapped
                .iter()
                .zip(&fine.q)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
        }
        Ok((order_bad, incr_bad, comp_err > tol, comp_err))
    })?;
    Ok(MonotonicityReport {
        paths: n_paths,
        order_violations: rows.iter().filter(|r| r.0).count(),
        increment_violations: rows.iter().map(|r| r.1).sum(),
        composition_violations: rows.iter().filter(|r| r.2).count(),
        max_composition_error: rows.iter().map(|r| r.3).fold(0.0, f64::max),
    })
}

/// Increments `U = plus − minus` of a Lindley recursion (service minus
/// interarrival time for a single-server queue).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LindleyIncrement {
    pub plus: JumpDist,
    pub minus: JumpDist,
}

impl LindleyIncrement {
    pub fn mean(&self) -> f64 {
        self.plus.mean() - self.minus.mean()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.plus.sample(rng) - self.minus.sample(rng)
    }

    /// `log E exp(θU)`.
    fn cumulant(&self, theta: f64) -> f64 {
        match (self.plus.mgf(theta), self.minus.laplace(theta)) {
            (Ok(a), Ok(b)) if a > 0.0 && b > 0.0 => a.ln() + b.ln(),
            _ => f64::INFINITY,
        }
    }

    /// Steps after which the recursion started from 0 is stationary up to a
    /// factor `e^{-40}`.
    fn burn_in(&self) -> usize {
        let hi = self.plus.mgf_upper_bound().min(self.minus.mgf_upper_bound().max(0.0) + 50.0).min(50.0);
        let (mut a, mut b) = (0.0, hi * (1.0 - 1e-9));
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let x1 = b - g * (b - a);
            let x2 = a + g * (b - a);
            if self.cumulant(x1) <= self.cumulant(x2) {
                b = x2;
            } else {
                a = x1;
            }
        }
        let rate = -self.cumulant(0.5 * (a + b));
        if rate > 0.0 {
            ((40.0 / rate).ceil() as usize).clamp(10, 100_000)
        } else {
            100_000
        }
    }
}

/// Simulates stationary waiting-time sequences, estimates the lag-`k`
/// correlations for `k = 0..lags` and checks their shape.
pub fn check_lindley_shape(
    inc: &LindleyIncrement,
    reps: usize,
    lags: usize,
    significance: f64,
    seed: u64,
) -> Result<(CorrelationCurve, ShapeReport)> {
    if !(inc.mean() < 0.0) {
        return Err(Error::Unstable { drift: inc.mean() });
    }
    if reps < 100 {
        return Err(Error::Domain(format!("need at least 100 replications, got {reps}")));
    }
    let burn = inc.burn_in();
    let rows = run_indexed(reps, None, |k| {
        let mut rng = RngStreamSpec::new(seed, k as u64).rng(StreamRole::Path);
        let mut w = 0.0_f64;
        for _ in 0..burn {
            w = (w + inc.sample(&mut rng)).max(0.0);
        }
        let w0 = w;
        let mut seq = Vec::with_capacity(lags);
        seq.push(w0);
        for _ in 1..lags {
            w = (w + inc.sample(&mut rng)).max(0.0);
            seq.push(w);
        }
        Ok((w0, seq))
    })?;
    let (w0, ws): (Vec<f64>, Vec<Vec<f64>>) = rows.into_iter().unzip();
    let t = (0..lags).map(|k| k as f64).collect();
    let curve = curve_from_samples(t, &w0, &ws, 50, CurveMethod::Plain);
    let report = check_shape(&curve, significance)?;
    Ok((curve, report))
}
