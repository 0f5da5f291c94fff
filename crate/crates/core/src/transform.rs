//! Laplace inversion of `γ(ϑ)/ϑ` and decay-rate extraction.
//!
//! `c(t)` has Laplace transform `γ(ϑ)/ϑ`. Inversion uses the Fourier-series
//! method with Euler summation, applied to the shifted function
//! `e^{-σt} c(t)` with `σ` the real part of the rightmost singularity, so
//! the result stays accurate relative to the size of `c(t)` even when it is
//! many orders of magnitude below `c(0)`.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::estimate::{CorrelationCurve, CurveMethod};
use crate::fluid::{
    cyclic_decay_rate, cyclic_gamma, cyclic_gamma_over_theta, cyclic_poles, gamma_sp_complex,
    singularities_two_state, stationary_workload_fluid, stationary_workload_two_state,
    two_state_gamma_complex, FluidView, StationaryWorkloadFluid, TwoStateFluidParams,
};
use crate::model::MapModel;

type TransformFn = Arc<dyn Fn(Complex64) -> Result<Complex64> + Send + Sync>;

/// `ϑ ↦ γ(ϑ)` on a right half-plane, with what inversion needs to know
/// about it.
#[derive(Clone)]
pub struct TransformEvaluator {
    gamma: TransformFn,
    /// `γ(ϑ)/ϑ` with the removable singularity at 0 cancelled, when known.
    over_theta: Option<TransformFn>,
    /// Real part of the rightmost singularity other than `ϑ = 0`; `γ` is
    /// analytic for `Re ϑ > abscissa`.
    pub abscissa: f64,
    /// Evaluations need `Re ϑ` strictly above this (0 when the formula is
    /// only available on the right half-plane).
    pub domain_floor: f64,
    pub var_q0: f64,
    pub label: String,
}

impl fmt::Debug for TransformEvaluator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransformEvaluator")
            .field("label", &self.label)
            .field("abscissa", &self.abscissa)
            .field("var_q0", &self.var_q0)
            .finish_non_exhaustive()
    }
}

impl TransformEvaluator {
    pub fn from_fn<F>(gamma: F, abscissa: f64, var_q0: f64, label: impl Into<String>) -> Self
    where
        F: Fn(Complex64) -> Result<Complex64> + Send + Sync + 'static,
    {
        TransformEvaluator {
            gamma: Arc::new(gamma),
            over_theta: None,
            abscissa,
            domain_floor: f64::NEG_INFINITY,
            var_q0,
            label: label.into(),
        }
    }

    pub fn with_over_theta<F>(mut self, f: F) -> Self
    where
        F: Fn(Complex64) -> Result<Complex64> + Send + Sync + 'static,
    {
        self.over_theta = Some(Arc::new(f));
        self
    }

    /// Limiting cyclic model with `d` states; `Var Q_0 = 2/d − 1/d²`.
    pub fn cyclic(d: usize) -> Result<Self> {
        let abscissa = cyclic_decay_rate(d)?;
        let df = d as f64;
        Ok(
            TransformEvaluator::from_fn(move |z| cyclic_gamma(d, z), abscissa, 2.0 / df - 1.0 / (df * df), format!("cyclic d={d}"))
                .with_over_theta(move |z| cyclic_gamma_over_theta(d, z)),
        )
    }

    /// Two-state fluid queue in closed form; the abscissa is the branch point.
    pub fn two_state(p: TwoStateFluidParams) -> Result<Self> {
        let sing = singularities_two_state(&p)?;
        let var = stationary_workload_two_state(&p)?.moments().variance;
        Ok(TransformEvaluator::from_fn(
            move |z| two_state_gamma_complex(&p, z),
            sing.decay_rate,
            var,
            format!("two-state q={} mu={}", p.q, p.mu),
        ))
    }

    /// General fluid queue via the mode expansion. Only available on
    /// `Re ϑ > 0`, so inversion runs without a shift.
    pub fn fluid(model: &MapModel) -> Result<Self> {
        let fv = FluidView::new(model)?;
        let sw: StationaryWorkloadFluid = stationary_workload_fluid(&fv)?;
        let var = sw.moments().variance;
        let mut ev = TransformEvaluator::from_fn(
            move |z| gamma_sp_complex(&fv, &sw, z),
            0.0,
            var,
            format!("fluid d={}", model.dim()),
        );
        ev.domain_floor = 0.0;
        Ok(ev)
    }

    pub fn gamma(&self, theta: Complex64) -> Result<Complex64> {
        (self.gamma)(theta)
    }

    /// `γ(ϑ)` at real `ϑ`, checking that the result is real.
    pub fn gamma_real(&self, theta: f64) -> Result<f64> {
        let g = self.gamma(Complex64::new(theta, 0.0))?;
        if g.im.abs() > 1e-10 * g.re.abs().max(1.0) {
            return Err(Error::Invariant(format!("γ({theta}) has imaginary part {:e}", g.im)));
        }
        Ok(g.re)
    }

    /// `γ(ϑ)/ϑ`, the transform of `c(t)`.
    pub fn gamma_over_theta(&self, theta: Complex64) -> Result<Complex64> {
        match &self.over_theta {
            Some(f) => f(theta),
            None => Ok(self.gamma(theta)? / theta),
        }
    }

    fn has_regular_form(&self) -> bool {
        self.over_theta.is_some()
    }
}

/// Fourier-series inversion parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionParams {
    /// Discretisation parameter; the aliasing error is about `e^{-a}`.
    pub a: f64,
    /// Terms summed before Euler averaging.
    pub n_terms: usize,
    /// Binomial averaging order.
    pub euler_terms: usize,
    /// Exponential shift; `None` uses the evaluator's abscissa.
    pub shift: Option<f64>,
    /// Acceptable gap between consecutive Euler averages, relative to the
    /// shifted value (plus the same amount absolutely).
    pub tol: f64,
}

impl Default for InversionParams {
    fn default() -> Self {
        InversionParams {
            a: 18.4,
            n_terms: 25,
            euler_terms: 25,
            shift: None,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub value: f64,
    /// Difference between the last two Euler averages, in the units of `value`.
    pub error_estimate: f64,
}

/// Inverts `F(s)` at `t > 0` after shifting by `shift`:
/// `f(t) = e^{σt} g(t)` where `g` has transform `F(s + σ)`.
pub fn invert_laplace_fn<F>(f: F, t: f64, shift: f64, params: &InversionParams) -> Result<Inversion>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("inversion needs t > 0, got {t}")));
    }
    let a = params.a;
    let n = params.n_terms;
    let m = params.euler_terms;
    let scale = (a / 2.0).exp() / t;
    // partial sums s_0..s_{n+m+1}
    let mut sums = Vec::with_capacity(n + m + 2);
    let mut acc = 0.0;
    for k in 0..=(n + m + 1) {
        let s = Complex64::new(shift + a / (2.0 * t), std::f64::consts::PI * k as f64 / t);
        let v = f(s)?.re;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("transform is not finite at {s}")));
        }
        let term = if k == 0 {
            0.5 * v
        } else if k % 2 == 1 {
            -v
        } else {
            v
        };
        acc += term;
        sums.push(acc * scale);
    }
    let euler = |start: usize| -> f64 {
        let mut binom = 1.0;
        let mut total = 0.0;
        for j in 0..=m {
            total += binom * sums[start + j];
            binom *= (m - j) as f64 / (j + 1) as f64;
        }
        total / 2f64.powi(m as i32)
    };
    let g = euler(n);
    let g_next = euler(n + 1);
    let gap = (g - g_next).abs();
    if gap > params.tol * (g.abs() + 1.0) {
        return Err(Error::Numeric(format!(
            "Euler summation did not settle at t = {t}: consecutive averages {g} and {g_next}"
        )));
    }
    let grow = (shift * t).exp();
    Ok(Inversion {
        value: grow * g,
        error_estimate: grow * gap,
    })
}

/// `c(t)` on a grid by inverting `γ(ϑ)/ϑ`; `c(0) = Var Q_0`.
pub fn invert_laplace(ev: &TransformEvaluator, t_grid: &[f64], params: &InversionParams) -> Result<Vec<f64>> {
    let shift = params.shift.unwrap_or(ev.abscissa.max(ev.domain_floor));
    t_grid
        .iter()
        .map(|&t| {
            if t == 0.0 {
                return Ok(ev.var_q0);
            }
            let mut p = *params;
            // keep the real point of the contour away from the cancelling
            // singularity at 0 when only the plain quotient is available
            let re = shift + p.a / (2.0 * t);
            if !ev.has_regular_form() && re.abs() < 0.02 {
                p.a = 2.0 * t * (0.02 - shift);
            }
            if shift + p.a / (2.0 * t) <= ev.domain_floor {
                return Err(Error::Domain(format!(
                    "contour at t = {t} leaves the domain of the transform"
                )));
            }
            Ok(invert_laplace_fn(|s| ev.gamma_over_theta(s), t, shift, &p)?.value)
        })
        .collect()
}

/// `c(t)` and `r(t) = c(t)/Var Q_0` by inversion.
pub fn correlation_from_gamma(
    ev: &TransformEvaluator,
    t_grid: &[f64],
    params: &InversionParams,
) -> Result<CorrelationCurve> {
    if !(ev.var_q0 > 0.0) {
        return Err(Error::Domain(format!("Var Q_0 must be positive, got {}", ev.var_q0)));
    }
    let c = invert_laplace(ev, t_grid, params)?;
    Ok(CorrelationCurve::analytic(t_grid.to_vec(), c, ev.var_q0, CurveMethod::AnalyticInverted))
}

/// How to turn a curve into an exponential rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    /// Least-squares slope of `log c(t)`.
    Plain,
    /// Slope through the local maxima of `|c(t)|`; falls back to a plain fit
    /// of `log |c|` when the window holds fewer than two maxima.
    Envelope,
    /// Regression of `log c(t)` on `t`, `log t` and `1/t`, for curves behaving
    /// like `t^β e^{σt} (a + b/t)` (branch points).
    PowerCorrected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub rate: f64,
    pub intercept: f64,
    /// Coefficient of `log t` in power-corrected mode.
    pub power: Option<f64>,
    pub points: usize,
    pub rms_residual: f64,
    pub mode: FitMode,
    /// Set when envelope mode used the plain fallback.
    pub note: Option<String>,
}

fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = rows.len();
    let p = rows[0].len();
    if n < p + 1 {
        return Err(Error::Domain(format!("fit needs more than {p} points, got {n}")));
    }
    let a = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(y);
    let beta = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Numeric(format!("least squares failed: {e}")))?;
    let resid = &b - &a * &beta;
    Ok((beta.iter().copied().collect(), (resid.norm_squared() / n as f64).sqrt()))
}

/// Decay rate `lim (1/t) log c(t)` estimated on `window`.
pub fn decay_rate_fit(curve: &CorrelationCurve, window: (f64, f64), mode: FitMode) -> Result<DecayFit> {
    let (lo, hi) = window;
    let idx: Vec<usize> = (0..curve.len()).filter(|&k| curve.t[k] >= lo && curve.t[k] <= hi).collect();
    if idx.len() < 3 {
        return Err(Error::Domain(format!("window [{lo}, {hi}] holds fewer than three points")));
    }
    let plain = |pts: &[usize], mode: FitMode, note: Option<String>| -> Result<DecayFit> {
        let rows: Vec<Vec<f64>> = pts.iter().map(|&k| vec![1.0, curve.t[k]]).collect();
        let y: Vec<f64> = pts.iter().map(|&k| curve.c[k].abs().ln()).collect();
        let (beta, rms) = least_squares(&rows, &y)?;
        Ok(DecayFit {
            rate: beta[1],
            intercept: beta[0],
            power: None,
            points: pts.len(),
            rms_residual: rms,
            mode,
            note,
        })
    };
    match mode {
        FitMode::Plain | FitMode::PowerCorrected => {
            if let Some(&k) = idx.iter().find(|&&k| !(curve.c[k] > 0.0)) {
                return Err(Error::Domain(format!(
                    "c({}) = {} is not positive; use envelope mode for oscillating curves",
                    curve.t[k], curve.c[k]
                )));
            }
            if mode == FitMode::Plain {
                return plain(&idx, mode, None);
            }
            if curve.t[idx[0]] <= 0.0 {
                return Err(Error::Domain("power-corrected fit needs t > 0".into()));
            }
            // log c ≈ a + σt + β log t + b/t: leading branch-point term
            // plus its first correction
            let rows: Vec<Vec<f64>> = idx
                .iter()
                .map(|&k| {
                    let t = curve.t[k];
                    vec![1.0, t, t.ln(), 1.0 / t]
                })
                .collect();
            let y: Vec<f64> = idx.iter().map(|&k| curve.c[k].ln()).collect();
            let (beta, rms) = least_squares(&rows, &y)?;
            Ok(DecayFit {
                rate: beta[1],
                intercept: beta[0],
                power: Some(beta[2]),
                points: idx.len(),
                rms_residual: rms,
                mode,
                note: Some(format!("1/t coefficient {:.6}", beta[3])),
            })
        }
        FitMode::Envelope => {
            let abs = |k: usize| curve.c[k].abs();
            let peaks: Vec<usize> = idx
                .windows(3)
                .filter(|w| abs(w[1]) > abs(w[0]) && abs(w[1]) >= abs(w[2]))
                .map(|w| w[1])
                .collect();
            if peaks.len() >= 2 {
                let rows: Vec<Vec<f64>> = peaks.iter().map(|&k| vec![1.0, curve.t[k]]).collect();
                let y: Vec<f64> = peaks.iter().map(|&k| abs(k).ln()).collect();
                if peaks.len() == 2 {
                    let rate = (y[1] - y[0]) / (curve.t[peaks[1]] - curve.t[peaks[0]]);
                    return Ok(DecayFit {
                        rate,
                        intercept: y[0] - rate * curve.t[peaks[0]],
                        power: None,
                        points: 2,
                        rms_residual: 0.0,
                        mode,
                        note: None,
                    });
                }
                let (beta, rms) = least_squares(&rows, &y)?;
                Ok(DecayFit {
                    rate: beta[1],
                    intercept: beta[0],
                    power: None,
                    points: peaks.len(),
                    rms_residual: rms,
                    mode,
                    note: None,
                })
            } else {
                if idx.iter().any(|&k| curve.c[k] == 0.0) {
                    return Err(Error::Domain("curve vanishes inside the window".into()));
                }
                plain(&idx, mode, Some("no oscillation in window; plain fit of log |c|".into()))
            }
        }
    }
}

/// Models with a known singularity structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SingularModel {
    TwoState(TwoStateFluidParams),
    Cyclic(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularityKind {
    Pole,
    Branch,
}

impl SingularityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SingularityKind::Pole => "pole",
            SingularityKind::Branch => "branch",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Singularity {
    pub at: Complex64,
    pub kind: SingularityKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingularityReport {
    /// Sorted by decreasing real part.
    pub singularities: Vec<Singularity>,
    /// Largest real part; `ϑ = 0` is removable and not listed.
    pub dominant: f64,
    /// Number of singularities attaining the dominant real part.
    pub dominant_count: usize,
    pub note: Option<String>,
}

impl SingularityReport {
    /// CSV with header `re,im,type`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im,type\n");
        for s in &self.singularities {
            let _ = writeln!(out, "{},{},{}", s.at.re, s.at.im, s.kind.as_str());
        }
        out
    }
}

pub fn singularity_report(model: &SingularModel) -> Result<SingularityReport> {
    let (mut singularities, note) = match *model {
        SingularModel::TwoState(p) => {
            let s = singularities_two_state(&p)?;
            (
                vec![
                    Singularity {
                        at: Complex64::new(s.branch, 0.0),
                        kind: SingularityKind::Branch,
                    },
                    Singularity {
                        at: Complex64::new(s.pole, 0.0),
                        kind: SingularityKind::Pole,
                    },
                ],
                None,
            )
        }
        SingularModel::Cyclic(d) => {
            let poles = cyclic_poles(d)?
                .into_iter()
                .map(|at| Singularity {
                    at,
                    kind: SingularityKind::Pole,
                })
                .collect();
            let note = (d == 5).then(|| {
                "d = 5: the complex pair -1 + exp(±2πi/5) already lies right of -1 and dominates".to_string()
            });
            (poles, note)
        }
    };
    singularities.sort_by(|a, b| b.at.re.total_cmp(&a.at.re).then(b.at.im.total_cmp(&a.at.im)));
    let dominant = singularities[0].at.re;
    let dominant_count = singularities
        .iter()
        .filter(|s| (s.at.re - dominant).abs() <= 1e-12)
        .count();
    Ok(SingularityReport {
        singularities,
        dominant,
        dominant_count,
        note,
    })
}
