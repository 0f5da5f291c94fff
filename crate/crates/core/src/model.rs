//! Lévy and Markov-additive input models.
//!
//! A [`MapModel`] is a bivariate process `(X_t, J_t)`: `J` is an irreducible
//! finite-state Markov chain with generator [`GeneratorMatrix`], and while
//! `J = i` the level `X` moves as the Lévy process [`LevyComponent`] `i`.
//! When `J` switches from `i` to `j`, `X` additionally jumps by a draw of the
//! transition jump `U_ij`.
//!
//! Laplace exponents follow the convention
//! `φ_i(α) = log E exp(-α X^{(i)}_1)`, so a deterministic drift `μ` has
//! `φ(α) = -αμ`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

/// Tolerance on generator row sums and on `πᵀQ = 0`.
pub const GENERATOR_TOL: f64 = 1e-12;

/// Sign restriction on all jumps of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralFlag {
    /// Only upward jumps.
    Positive,
    /// Only downward jumps.
    Negative,
    /// Jumps of either sign.
    TwoSided,
}

impl SpectralFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            SpectralFlag::Positive => "SP",
            SpectralFlag::Negative => "SN",
            SpectralFlag::TwoSided => "TWO_SIDED",
        }
    }

    fn allows(self, dist: &JumpDist) -> bool {
        match self {
            SpectralFlag::Positive => dist.support_min() >= 0.0,
            SpectralFlag::Negative => dist.support_max() <= 0.0,
            SpectralFlag::TwoSided => true,
        }
    }
}

impl fmt::Display for SpectralFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Jump-size law.
///
/// `Exponential { mean }` with a negative mean is the negated exponential
/// with mean `|mean|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JumpDist {
    Exponential { mean: f64 },
    Deterministic { size: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Default for JumpDist {
    fn default() -> Self {
        JumpDist::Deterministic { size: 0.0 }
    }
}

impl JumpDist {
    pub fn is_zero(&self) -> bool {
        matches!(self, JumpDist::Deterministic { size } if *size == 0.0)
    }

    pub fn mean(&self) -> f64 {
        match *self {
            JumpDist::Exponential { mean } => mean,
            JumpDist::Deterministic { size } => size,
            JumpDist::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    pub fn support_min(&self) -> f64 {
        match *self {
            JumpDist::Exponential { mean } if mean >= 0.0 => 0.0,
            JumpDist::Exponential { .. } => f64::NEG_INFINITY,
            JumpDist::Deterministic { size } => size,
            JumpDist::Uniform { lo, .. } => lo,
        }
    }

    pub fn support_max(&self) -> f64 {
        match *self {
            JumpDist::Exponential { mean } if mean > 0.0 => f64::INFINITY,
            JumpDist::Exponential { .. } => 0.0,
            JumpDist::Deterministic { size } => size,
            JumpDist::Uniform { hi, .. } => hi,
        }
    }

    /// `E exp(-α U)`. Errors outside the domain of the transform.
    pub fn laplace(&self, alpha: f64) -> Result<f64> {
        match *self {
            JumpDist::Exponential { mean } => {
                let denom = 1.0 + alpha * mean;
                if denom <= 0.0 {
                    return Err(Error::Domain(format!(
                        "E exp(-{alpha} U) diverges for exponential jumps with mean {mean}"
                    )));
                }
                Ok(1.0 / denom)
            }
            JumpDist::Deterministic { size } => Ok((-alpha * size).exp()),
            JumpDist::Uniform { lo, hi } => {
                let width = hi - lo;
                let z = alpha * width;
                if width == 0.0 || z == 0.0 {
                    return Ok((-alpha * lo).exp());
                }
                // (e^{-α lo} - e^{-α hi}) / (α (hi - lo))
                Ok((-alpha * lo).exp() * (-(-z).exp_m1()) / z)
            }
        }
    }

    /// `E exp(θ U)`, the moment generating function.
    pub fn mgf(&self, theta: f64) -> Result<f64> {
        self.laplace(-theta)
    }

    /// Largest `θ` for which the moment generating function is finite
    /// (exclusive bound, `+∞` for bounded support).
    pub fn mgf_upper_bound(&self) -> f64 {
        match *self {
            JumpDist::Exponential { mean } if mean > 0.0 => 1.0 / mean,
            _ => f64::INFINITY,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpDist::Exponential { mean } => {
                let e: f64 = Exp1.sample(rng);
                mean * e
            }
            JumpDist::Deterministic { size } => size,
            JumpDist::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        }
    }

    fn check(&self) -> Option<String> {
        match *self {
            JumpDist::Exponential { mean } if !mean.is_finite() || mean == 0.0 => {
                Some(format!("exponential jump mean must be finite and nonzero, got {mean}"))
            }
            JumpDist::Deterministic { size } if !size.is_finite() => {
                Some(format!("deterministic jump size must be finite, got {size}"))
            }
            JumpDist::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                Some(format!("uniform jump bounds must satisfy lo <= hi, got ({lo}, {hi})"))
            }
            _ => None,
        }
    }
}

impl fmt::Display for JumpDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            JumpDist::Exponential { mean } => write!(f, "exp {mean}"),
            JumpDist::Deterministic { size } => write!(f, "det {size}"),
            JumpDist::Uniform { lo, hi } => write!(f, "unif {lo} {hi}"),
        }
    }
}

/// Per-state Lévy dynamics: drift, Brownian part and compound-Poisson jumps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyComponent {
    pub drift: f64,
    pub brownian_var: f64,
    pub jump_rate: f64,
    pub jump_dist: JumpDist,
}

impl LevyComponent {
    pub fn fluid(drift: f64) -> Self {
        LevyComponent {
            drift,
            brownian_var: 0.0,
            jump_rate: 0.0,
            jump_dist: JumpDist::default(),
        }
    }

    pub fn brownian(drift: f64, variance: f64) -> Self {
        LevyComponent {
            drift,
            brownian_var: variance,
            jump_rate: 0.0,
            jump_dist: JumpDist::default(),
        }
    }

    pub fn compound_poisson(drift: f64, rate: f64, jump_dist: JumpDist) -> Self {
        LevyComponent {
            drift,
            brownian_var: 0.0,
            jump_rate: rate,
            jump_dist,
        }
    }

    /// Zero Brownian variance and no jumps.
    pub fn is_piecewise_linear(&self) -> bool {
        self.brownian_var == 0.0 && self.jump_rate == 0.0
    }

    /// `E X_1`.
    pub fn mean_rate(&self) -> f64 {
        self.drift + self.jump_rate * self.jump_dist.mean()
    }

    /// `φ(α) = log E exp(-α X_1)`.
    pub fn laplace_exponent(&self, alpha: f64) -> Result<f64> {
        let jumps = if self.jump_rate > 0.0 {
            self.jump_rate * (self.jump_dist.laplace(alpha)? - 1.0)
        } else {
            0.0
        };
        Ok(-alpha * self.drift + 0.5 * self.brownian_var * alpha * alpha + jumps)
    }

    /// `log E exp(θ X_1)`.
    pub fn cumulant(&self, theta: f64) -> Result<f64> {
        self.laplace_exponent(-theta)
    }

    /// Exponential rate at which a reflected version of this process forgets
    /// its initial condition: `-min_{θ ≥ 0} log E exp(θ X_1)`.
    ///
    /// Errors when the process has non-negative mean (no positive rate).
    pub fn relaxation_rate(&self) -> Result<f64> {
        if self.mean_rate() >= 0.0 {
            return Err(Error::Unstable {
                drift: self.mean_rate(),
            });
        }
        let never_up = self.drift <= 0.0 && (self.jump_rate == 0.0 || self.jump_dist.support_max() <= 0.0);
        if self.brownian_var == 0.0 && never_up {
            // non-increasing input: the workload empties in finite time
            return Ok(f64::INFINITY);
        }
        let upper = if self.jump_rate > 0.0 {
            self.jump_dist.mgf_upper_bound()
        } else {
            f64::INFINITY
        };
        // bracket the minimiser of the convex cumulant
        let mut hi = 1.0_f64.min(0.5 * upper);
        while hi < upper && self.cumulant_derivative(hi)? < 0.0 {
            let next = 2.0 * hi;
            hi = if next < upper { next } else { 0.5 * (hi + upper) };
            if upper - hi < 1e-12 {
                break;
            }
        }
        let (mut a, mut b) = (0.0, hi);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if self.cumulant_derivative(m)? < 0.0 {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(-self.cumulant(0.5 * (a + b))?)
    }

    fn cumulant_derivative(&self, theta: f64) -> Result<f64> {
        let h = 1e-7 * theta.abs().max(1e-3);
        Ok((self.cumulant(theta + h)? - self.cumulant(theta - h)?) / (2.0 * h))
    }
}

/// Transition-rate matrix of the background chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix {
    q: DMatrix<f64>,
}

impl GeneratorMatrix {
    /// Wraps a square matrix. Rate invariants are checked by
    /// [`GeneratorMatrix::violations`], not here.
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if q.nrows() == 0 || q.nrows() != q.ncols() {
            return Err(Error::InvalidModel(format!(
                "generator must be square with at least one state, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        Ok(GeneratorMatrix { q })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidModel(
                "generator rows must all have one entry per state".into(),
            ));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(d, d, &flat))
    }

    /// Two-state generator with leaving rates `q1` (state 1) and `q2` (state 2).
    pub fn two_state(q1: f64, q2: f64) -> Self {
        GeneratorMatrix {
            q: DMatrix::from_row_slice(2, 2, &[-q1, q1, q2, -q2]),
        }
    }

    /// Cyclic chain `1 → 2 → … → d → 1` with common rate.
    pub fn cyclic(d: usize, rate: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidModel("cyclic chain needs d >= 1".into()));
        }
        let mut q = DMatrix::zeros(d, d);
        if d > 1 {
            for i in 0..d {
                q[(i, (i + 1) % d)] = rate;
                q[(i, i)] = -rate;
            }
        }
        Ok(GeneratorMatrix { q })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.q[(i, j)]
    }

    /// `q̂_i = -q_ii`.
    pub fn leaving_rate(&self, i: usize) -> f64 {
        -self.q[(i, i)]
    }

    /// Every violated generator invariant, as human-readable messages.
    pub fn violations(&self) -> Vec<Violation> {
        let d = self.dim();
        let mut out = Vec::new();
        for i in 0..d {
            for j in 0..d {
                let v = self.q[(i, j)];
                if !v.is_finite() {
                    out.push(Violation::new(
                        ViolationKind::NonFinite,
                        format!("generator entry ({}, {}) is not finite", i + 1, j + 1),
                    ));
                } else if i != j && v < 0.0 {
                    out.push(Violation::new(
                        ViolationKind::NegativeRate,
                        format!("off-diagonal rate q[{}][{}] = {v} is negative", i + 1, j + 1),
                    ));
                }
            }
            let sum: f64 = self.q.row(i).iter().sum();
            let scale = self.q.row(i).iter().map(|x| x.abs()).fold(1.0, f64::max);
            if !(sum.abs() <= GENERATOR_TOL * scale) {
                out.push(Violation::new(
                    ViolationKind::RowSum,
                    format!("row sum ≠ 0: row {} sums to {sum}", i + 1),
                ));
            }
        }
        if out.is_empty() && !self.is_irreducible() {
            out.push(Violation::new(
                ViolationKind::Reducible,
                "background chain is reducible (more than one communicating class)",
            ));
        }
        out
    }

    /// Strong connectivity of the off-diagonal support graph.
    pub fn is_irreducible(&self) -> bool {
        let d = self.dim();
        let reach = |forward: bool| {
            let mut seen = vec![false; d];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..d {
                    let rate = if forward { self.q[(i, j)] } else { self.q[(j, i)] };
                    if i != j && rate > 0.0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }
}

/// Stationary distribution `π` with `πᵀQ = 0`, `Σπ = 1`.
pub fn stationary_distribution(g: &GeneratorMatrix) -> Result<DVector<f64>> {
    let d = g.dim();
    if let Some(v) = g.violations().first() {
        return Err(Error::SingularGenerator(v.message.clone()));
    }
    if d == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    // Solve Qᵀπ = 0 with the last equation replaced by normalisation.
    let mut a = g.matrix().transpose();
    for j in 0..d {
        a[(d - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(d);
    b[d - 1] = 1.0;
    let pi = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SingularGenerator("balance equations are singular".into()))?;
    let pi = pi.map(|p| if p < 0.0 && p > -1e-14 { 0.0 } else { p });
    if pi.iter().any(|&p| p < 0.0) {
        return Err(Error::SingularGenerator(format!(
            "balance solution has negative mass: {:?}",
            pi.as_slice()
        )));
    }
    let pi = &pi / pi.sum();
    let scale = g.matrix().amax().max(1.0);
    let residual = (g.matrix().transpose() * &pi).amax();
    if residual > GENERATOR_TOL * scale {
        return Err(Error::Numeric(format!(
            "stationary residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(pi)
}

/// Category of a model invariant violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Dimension,
    NonFinite,
    NegativeRate,
    RowSum,
    Reducible,
    NegativeVariance,
    InvalidJump,
    SpectralSign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl Violation {
    fn new(kind: ViolationKind, message: impl Into<String>) -> Self {
        Violation {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// All invariant failures of a model; empty iff the model is valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.iter().map(|v| v.message.clone()).collect();
            Err(Error::InvalidModel(msgs.join("; ")))
        }
    }
}

/// A Markov-additive input process.
#[derive(Debug, Clone, PartialEq)]
pub struct MapModel {
    pub generator: GeneratorMatrix,
    pub components: Vec<LevyComponent>,
    /// `transition_jumps[i][j]` is the law of `U_ij`; the diagonal is unused.
    pub transition_jumps: Vec<Vec<JumpDist>>,
    pub spectral: SpectralFlag,
}

impl MapModel {
    /// Model without transition jumps.
    pub fn new(
        generator: GeneratorMatrix,
        components: Vec<LevyComponent>,
        spectral: SpectralFlag,
    ) -> Self {
        let d = generator.dim();
        MapModel {
            generator,
            components,
            transition_jumps: vec![vec![JumpDist::default(); d]; d],
            spectral,
        }
    }

    /// Markov-modulated fluid model with the given drifts.
    pub fn fluid(generator: GeneratorMatrix, drifts: &[f64]) -> Self {
        let comps = drifts.iter().map(|&m| LevyComponent::fluid(m)).collect();
        MapModel::new(generator, comps, SpectralFlag::Positive)
    }

    /// Single-regime Lévy input seen as a one-state MAP.
    pub fn levy(component: LevyComponent, spectral: SpectralFlag) -> Self {
        let g = GeneratorMatrix {
            q: DMatrix::zeros(1, 1),
        };
        MapModel::new(g, vec![component], spectral)
    }

    pub fn with_transition_jump(mut self, from: usize, to: usize, dist: JumpDist) -> Self {
        self.transition_jumps[from][to] = dist;
        self
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn has_transition_jumps(&self) -> bool {
        self.transition_jumps
            .iter()
            .enumerate()
            .any(|(i, row)| row.iter().enumerate().any(|(j, u)| i != j && !u.is_zero()))
    }

    /// True when every state moves linearly (no Brownian part, no jumps within
    /// states); such paths can be simulated exactly.
    pub fn is_piecewise_linear(&self) -> bool {
        self.components.iter().all(LevyComponent::is_piecewise_linear)
    }

    /// Fluid view exists when all states are pure nonzero drifts and there are
    /// no transition jumps.
    pub fn is_fluid(&self) -> bool {
        self.is_piecewise_linear()
            && self.components.iter().all(|c| c.drift != 0.0)
            && !self.has_transition_jumps()
    }

    pub fn drifts(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.drift).collect()
    }

    pub fn stationary_distribution(&self) -> Result<DVector<f64>> {
        stationary_distribution(&self.generator)
    }
}

/// Checks every model invariant and reports all failures.
pub fn validate_model(model: &MapModel) -> ValidationReport {
    let d = model.dim();
    let mut violations = model.generator.violations();
    if model.components.len() != d {
        violations.push(Violation::new(
            ViolationKind::Dimension,
            format!("{} state components given for {d} states", model.components.len()),
        ));
    }
    if model.transition_jumps.len() != d || model.transition_jumps.iter().any(|r| r.len() != d) {
        violations.push(Violation::new(
            ViolationKind::Dimension,
            "transition jump table must be d x d",
        ));
    }
    for (i, c) in model.components.iter().enumerate() {
        let s = i + 1;
        if !(c.drift.is_finite() && c.brownian_var.is_finite() && c.jump_rate.is_finite()) {
            violations.push(Violation::new(
                ViolationKind::NonFinite,
                format!("state {s}: parameters must be finite"),
            ));
        }
        if c.brownian_var < 0.0 {
            violations.push(Violation::new(
                ViolationKind::NegativeVariance,
                format!("state {s}: brownian variance {} is negative", c.brownian_var),
            ));
        }
        if c.jump_rate < 0.0 {
            violations.push(Violation::new(
                ViolationKind::NegativeRate,
                format!("state {s}: jump rate {} is negative", c.jump_rate),
            ));
        }
        if let Some(msg) = c.jump_dist.check() {
            violations.push(Violation::new(
                ViolationKind::InvalidJump,
                format!("state {s}: {msg}"),
            ));
        } else if c.jump_rate > 0.0 && !model.spectral.allows(&c.jump_dist) {
            violations.push(Violation::new(
                ViolationKind::SpectralSign,
                format!(
                    "sign/spectral mismatch: state {s} jumps ({}) violate the {} restriction",
                    c.jump_dist, model.spectral
                ),
            ));
        }
    }
    for (i, row) in model.transition_jumps.iter().enumerate() {
        for (j, u) in row.iter().enumerate() {
            if i == j || u.is_zero() {
                continue;
            }
            if let Some(msg) = u.check() {
                violations.push(Violation::new(
                    ViolationKind::InvalidJump,
                    format!("transition jump {} -> {}: {msg}", i + 1, j + 1),
                ));
            } else if !model.spectral.allows(u) {
                violations.push(Violation::new(
                    ViolationKind::SpectralSign,
                    format!(
                        "sign/spectral mismatch: transition jump {} -> {} ({u}) violates the {} restriction",
                        i + 1,
                        j + 1,
                        model.spectral
                    ),
                ));
            }
        }
    }
    ValidationReport { violations }
}

/// Long-run rate `E X_1` under the stationary background law, including the
/// contribution of transition jumps.
pub fn mean_drift(model: &MapModel) -> Result<f64> {
    validate_model(model).into_result()?;
    let pi = model.stationary_distribution()?;
    let d = model.dim();
    let mut total = 0.0;
    for i in 0..d {
        total += pi[i] * model.components[i].mean_rate();
        for j in 0..d {
            if i != j {
                total += pi[i] * model.generator.rate(i, j) * model.transition_jumps[i][j].mean();
            }
        }
    }
    Ok(total)
}

/// Strictly negative mean drift.
pub fn stability_check(model: &MapModel) -> Result<bool> {
    Ok(mean_drift(model)? < 0.0)
}

/// Matrix exponent `s(α)` with `E_i[exp(-α X_t); J_t = j] = (exp(s(α) t))_ij`.
pub fn matrix_exponent(model: &MapModel, alpha: f64) -> Result<DMatrix<f64>> {
    if model.spectral != SpectralFlag::Positive {
        return Err(Error::Unsupported(format!(
            "matrix exponent s(α) is defined for SP models, got {}",
            model.spectral
        )));
    }
    if !(alpha >= 0.0) {
        return Err(Error::Domain(format!("α must be non-negative, got {alpha}")));
    }
    validate_model(model).into_result()?;
    let d = model.dim();
    let mut s = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            s[(i, j)] = if i == j {
                model.components[i].laplace_exponent(alpha)? + model.generator.rate(i, i)
            } else {
                model.generator.rate(i, j) * model.transition_jumps[i][j].laplace(alpha)?
            };
        }
    }
    Ok(s)
}
