//! Markov-modulated fluid analytics.
//!
//! For a fluid input with drifts `μ_i ≠ 0` the first-passage quantities are
//! explicit: `Ψ(ϑ) = M⁻¹(Q − ϑI)` with `M = diag(μ)`, and the downward
//! passage transform `ξ_i(y, ϑ) = E_i exp(-ϑ τ(y))` is a finite sum of
//! exponentials in `y`. Combined with the stationary workload law this gives
//! the covariance transform `γ(ϑ) = Cov(Q_0, Q_T)` for `T ~ Exp(ϑ)`.

mod cyclic;
mod two_state;
mod workload;

pub use cyclic::{
    cyclic_c_closed, cyclic_decay_rate, cyclic_gamma, cyclic_gamma_over_theta, cyclic_poles,
};
pub use two_state::{
    busy_period_transform_mm1, busy_period_transform_mm1_complex, singularities_two_state,
    stationary_workload_two_state, two_state_busy_transform, two_state_busy_transform_complex,
    two_state_gamma, two_state_gamma_complex, two_state_rho, two_state_rho_complex,
    TwoStateFluidParams, TwoStateSingularities,
};
pub use workload::{stationary_workload_fluid, KappaMoments, StationaryWorkloadFluid};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{validate_model, MapModel};
use crate::quad::{self, QuadOptions};

const IMAG_TOL: f64 = 1e-10;

/// A validated Markov-modulated fluid model: generator plus nonzero drifts.
#[derive(Debug, Clone, PartialEq)]
pub struct FluidView {
    q: DMatrix<f64>,
    mu: Vec<f64>,
}

impl FluidView {
    pub fn new(model: &MapModel) -> Result<Self> {
        validate_model(model).into_result()?;
        if !model.is_fluid() {
            return Err(Error::Unsupported(
                "fluid analytics need every state to be a pure nonzero drift \
                 (no Brownian part, no jumps)"
                    .into(),
            ));
        }
        Ok(FluidView {
            q: model.generator.matrix().clone(),
            mu: model.drifts(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn drifts(&self) -> &[f64] {
        &self.mu
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// States with negative drift.
    pub fn down_states(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.mu[i] < 0.0).collect()
    }

    /// States with positive drift.
    pub fn up_states(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.mu[i] > 0.0).collect()
    }
}

/// `Ψ(ϑ) = M⁻¹(Q − ϑI)`.
pub fn psi_matrix(fluid: &FluidView, theta: f64) -> Result<DMatrix<f64>> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("ϑ must be positive, got {theta}")));
    }
    let d = fluid.dim();
    let mut psi = fluid.q.clone();
    for i in 0..d {
        psi[(i, i)] -= theta;
        let inv = 1.0 / fluid.mu[i];
        for j in 0..d {
            psi[(i, j)] *= inv;
        }
    }
    Ok(psi)
}

fn psi_matrix_complex(fluid: &FluidView, theta: Complex64) -> DMatrix<Complex64> {
    let d = fluid.dim();
    let mut psi = linalg::to_complex(&fluid.q);
    for i in 0..d {
        psi[(i, i)] -= theta;
        let inv = 1.0 / fluid.mu[i];
        for j in 0..d {
            psi[(i, j)] *= inv;
        }
    }
    psi
}

/// `ν_i(ϑ) = E_i X_T`, `T ~ Exp(ϑ)`, from `(ϑI − Q) ν = r` where `r_i` is the
/// mean rate in state `i` plus the expected transition jumps out of `i`.
pub fn nu_vector(model: &MapModel, theta: f64) -> Result<DVector<f64>> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("ϑ must be positive, got {theta}")));
    }
    validate_model(model).into_result()?;
    let d = model.dim();
    let mut a = -model.generator.matrix().clone();
    let mut r = DVector::zeros(d);
    for i in 0..d {
        a[(i, i)] += theta;
        r[i] = model.components[i].mean_rate();
        for j in 0..d {
            if i != j {
                r[i] += model.generator.rate(i, j) * model.transition_jumps[i][j].mean();
            }
        }
    }
    let nu = a
        .clone()
        .lu()
        .solve(&r)
        .expect("ϑI − Q is strictly diagonally dominant for ϑ > 0");
    debug_assert!((a * &nu - &r).amax() <= 1e-12 * r.amax().max(1.0) * (1.0 + theta));
    Ok(nu)
}

/// Fluid `ν(ϑ) = (ϑI − Q)⁻¹ μ` at complex `ϑ`.
pub fn nu_vector_complex(fluid: &FluidView, theta: Complex64) -> Result<DVector<Complex64>> {
    let d = fluid.dim();
    let mut a = linalg::to_complex(&(-fluid.q.clone()));
    for i in 0..d {
        a[(i, i)] += theta;
    }
    let mu = DVector::from_iterator(d, fluid.mu.iter().map(|&m| Complex64::new(m, 0.0)));
    linalg::solve(&a, &mu)
}

/// `ξ_i(y, ϑ) = Σ_j c_ij e^{-ψ_j y}` with `Re ψ_j > 0`.
#[derive(Debug, Clone)]
pub struct ModeExpansion {
    pub theta: Complex64,
    /// Decay rates `ψ_j`, one per negative-drift state.
    pub psi: Vec<Complex64>,
    /// `coeffs[(i, j)] = c_ij`.
    pub coeffs: DMatrix<Complex64>,
}

impl ModeExpansion {
    pub fn dim(&self) -> usize {
        self.coeffs.nrows()
    }

    pub fn xi_complex(&self, i: usize, y: f64) -> Complex64 {
        self.psi
            .iter()
            .enumerate()
            .map(|(j, &p)| self.coeffs[(i, j)] * (-p * y).exp())
            .sum()
    }

    /// `ξ_i(y, ϑ)` for real `ϑ` (real part of the expansion).
    pub fn xi(&self, i: usize, y: f64) -> f64 {
        self.xi_complex(i, y).re
    }

    /// `ξ_i(0+, ϑ)`: 1 for negative-drift states, the busy-period transform
    /// otherwise.
    pub fn xi0(&self, i: usize) -> f64 {
        self.xi(i, 0.0)
    }

    /// `∫_0^∞ e^{-ηy} ξ_i(y, ϑ) dy = Σ_j c_ij / (η + ψ_j)`.
    pub fn laplace_xi(&self, i: usize, eta: f64) -> f64 {
        self.psi
            .iter()
            .enumerate()
            .map(|(j, &p)| self.coeffs[(i, j)] / (p + eta))
            .sum::<Complex64>()
            .re
    }

    /// Checks the expansion on a grid of levels: real-valued, within `[0, 1]`
    /// and equal to 1 at `0+` for the given negative-drift states.
    pub fn check(&self, down: &[usize], ys: &[f64]) -> Result<()> {
        for i in 0..self.dim() {
            for &y in ys {
                let v = self.xi_complex(i, y);
                if v.im.abs() > IMAG_TOL {
                    return Err(Error::Invariant(format!(
                        "ξ_{}({y}) has imaginary residue {:e}",
                        i + 1,
                        v.im
                    )));
                }
                if !(-IMAG_TOL..=1.0 + IMAG_TOL).contains(&v.re) {
                    return Err(Error::Invariant(format!(
                        "ξ_{}({y}) = {} lies outside [0, 1]",
                        i + 1,
                        v.re
                    )));
                }
            }
        }
        for &i in down {
            let v = self.xi0(i);
            if (v - 1.0).abs() > 1e-10 {
                return Err(Error::Invariant(format!("ξ_{}(0+) = {v}, expected 1", i + 1)));
            }
        }
        Ok(())
    }
}

/// Mode expansion of `ξ(y, ϑ)` for real `ϑ > 0`.
pub fn xi_expansion(fluid: &FluidView, theta: f64) -> Result<ModeExpansion> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("ϑ must be positive, got {theta}")));
    }
    xi_expansion_at(fluid, Complex64::new(theta, 0.0))
}

/// Mode expansion at complex `ϑ` with `Re ϑ > 0`.
pub fn xi_expansion_complex(fluid: &FluidView, theta: Complex64) -> Result<ModeExpansion> {
    if !(theta.re > 0.0) {
        return Err(Error::Domain(format!(
            "mode expansion needs Re ϑ > 0, got {theta}"
        )));
    }
    xi_expansion_at(fluid, theta)
}

fn xi_expansion_at(fluid: &FluidView, theta: Complex64) -> Result<ModeExpansion> {
    let psi = psi_matrix_complex(fluid, theta);
    let real = theta.im == 0.0;
    let pairs = linalg::eigenpairs(&psi, real)?;
    let down = fluid.down_states();
    let kept: Vec<&linalg::EigenPair> = pairs.iter().filter(|p| p.value.re > 0.0).collect();
    if kept.len() != down.len() {
        return Err(Error::Invariant(format!(
            "Ψ(ϑ) has {} eigenvalues with positive real part but there are {} negative-drift states",
            kept.len(),
            down.len()
        )));
    }
    let m = kept.len();
    let d = fluid.dim();
    let mut coeffs = DMatrix::zeros(d, m);
    if m > 0 {
        // ξ_i(0+) = 1 on the negative-drift states pins the mode weights
        let v_down = DMatrix::from_fn(m, m, |r, j| kept[j].vector[down[r]]);
        let ones = DVector::from_element(m, Complex64::new(1.0, 0.0));
        let b = linalg::solve(&v_down, &ones)?;
        for i in 0..d {
            for j in 0..m {
                coeffs[(i, j)] = kept[j].vector[i] * b[j];
            }
        }
    }
    Ok(ModeExpansion {
        theta,
        psi: kept.iter().map(|p| p.value).collect(),
        coeffs,
    })
}

/// `m_i(x) = E(Q_T | Q_0 = x, J_0 = i) = x + Σ_j (c_ij/ψ_j) e^{-ψ_j x} + ν_i`.
pub fn transient_mean(me: &ModeExpansion, nu: &DVector<f64>, x: f64, i: usize) -> f64 {
    let tail: Complex64 = me
        .psi
        .iter()
        .enumerate()
        .map(|(j, &p)| me.coeffs[(i, j)] / p * (-p * x).exp())
        .sum();
    x + tail.re + nu[i]
}

/// `γ(ϑ)` assembled from the mode expansion, `ν(ϑ)` and the stationary
/// workload transform:
/// `Var Q_0 − Σ_ij (c_ij/ψ_j) κ_i'(ψ_j) − Σ_i ν_i κ_i'(0)`.
pub fn gamma_sp(fluid: &FluidView, sw: &StationaryWorkloadFluid, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("ϑ must be positive, got {theta}")));
    }
    let g = gamma_sp_complex(fluid, sw, Complex64::new(theta, 0.0))?;
    if g.im.abs() > IMAG_TOL * g.re.abs().max(1.0) {
        return Err(Error::Invariant(format!(
            "γ({theta}) has imaginary residue {:e}",
            g.im
        )));
    }
    Ok(g.re)
}

/// `γ(ϑ)` at complex `ϑ` with `Re ϑ > 0`.
pub fn gamma_sp_complex(
    fluid: &FluidView,
    sw: &StationaryWorkloadFluid,
    theta: Complex64,
) -> Result<Complex64> {
    let me = xi_expansion_complex(fluid, theta)?;
    let nu = nu_vector_complex(fluid, theta)?;
    let moments = sw.moments();
    let mut g = Complex64::new(moments.variance, 0.0);
    for i in 0..fluid.dim() {
        for (j, &p) in me.psi.iter().enumerate() {
            g -= me.coeffs[(i, j)] / p * sw.kappa_prime(i, p)?;
        }
        g -= nu[i] * sw.kappa_prime(i, Complex64::new(0.0, 0.0))?;
    }
    Ok(g)
}

/// `γ(ϑ) = ∫ x ⟨m(x), p(x)⟩ dx − (E Q_0)²` by adaptive quadrature, truncated
/// where the remaining tail contributes less than `1e-13`.
pub fn gamma_quadrature(
    sw: &StationaryWorkloadFluid,
    me: &ModeExpansion,
    nu: &DVector<f64>,
) -> Result<f64> {
    let d = sw.dim();
    let mean = sw.moments().mean;
    let x_max = sw.tail_cutoff(1e-13 / (1.0 + nu.amax() + mean));
    if x_max == 0.0 {
        return Ok(-mean * mean);
    }
    let integrand = |x: f64| {
        (0..d)
            .map(|i| transient_mean(me, nu, x, i) * sw.density(i, x))
            .sum::<f64>()
            * x
    };
    // split at a few decay lengths so the adaptive rule sees the bulk early
    let mut total = 0.0;
    let mut lo = 0.0;
    let scale = 1.0 / sw.slowest_rate();
    for k in 1.. {
        let hi = (scale * f64::from(k)).min(x_max);
        let r = quad::integrate(
            integrand,
            lo,
            hi,
            QuadOptions {
                abs_tol: 1e-15,
                rel_tol: 1e-13,
                max_intervals: 4000,
            },
        )?;
        total += r.value;
        lo = hi;
        if hi >= x_max {
            break;
        }
    }
    Ok(total - mean * mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GeneratorMatrix;
    use approx::assert_abs_diff_eq;

    fn two_state(q: f64, mu: f64) -> (MapModel, FluidView) {
        let m = MapModel::fluid(GeneratorMatrix::two_state(q, 1.0), &[1.0, -mu]);
        let f = FluidView::new(&m).unwrap();
        (m, f)
    }

    #[test]
    fn psi_example() {
        let (_, f) = two_state(1.0, 4.0);
        let psi = psi_matrix(&f, 1.0).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, -0.25, 0.5]);
        assert!((psi - expect).amax() < 1e-15);
    }

    #[test]
    fn single_down_state_is_deterministic_passage() {
        let m = MapModel::fluid(GeneratorMatrix::cyclic(1, 1.0).unwrap(), &[-1.0]);
        let f = FluidView::new(&m).unwrap();
        for theta in [0.3, 1.0, 5.0] {
            let psi = psi_matrix(&f, theta).unwrap();
            assert_abs_diff_eq!(psi[(0, 0)], theta, epsilon = 1e-15);
            let me = xi_expansion(&f, theta).unwrap();
            for y in [0.0, 0.5, 2.0] {
                assert_abs_diff_eq!(me.xi(0, y), (-theta * y).exp(), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn nu_examples() {
        let m = MapModel::fluid(GeneratorMatrix::two_state(1.0, 1.0), &[1.0, -2.0]);
        let nu = nu_vector(&m, 1.0).unwrap();
        assert_abs_diff_eq!(nu[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(nu[1], -1.0, epsilon = 1e-15);

        let zero = MapModel::levy(crate::LevyComponent::fluid(0.0), crate::SpectralFlag::Positive);
        assert_eq!(nu_vector(&zero, 2.0).unwrap()[0], 0.0);

        let (m, _) = two_state(1.0, 4.0);
        let theta = 1e3;
        let nu = nu_vector(&m, theta).unwrap();
        for (i, mu) in [1.0f64, -4.0].iter().enumerate() {
            assert!(nu[i].abs() <= mu.abs() / theta + 10.0 / (theta * theta));
        }
    }

    #[test]
    fn nu_matches_first_step_equation_with_jumps() {
        let m = MapModel::fluid(GeneratorMatrix::two_state(2.0, 1.0), &[1.5, -3.0])
            .with_transition_jump(0, 1, crate::JumpDist::Exponential { mean: 0.5 });
        let theta = 0.7;
        let nu = nu_vector(&m, theta).unwrap();
        // ν_1 = (μ_1 + q_12 (E U_12 + ν_2)) / (q̂_1 + ϑ)
        let lhs = (1.5 + 2.0 * (0.5 + nu[1])) / (2.0 + theta);
        assert_abs_diff_eq!(nu[0], lhs, epsilon = 1e-14);
    }

    #[test]
    fn xi_two_state_example() {
        let (_, f) = two_state(1.0, 4.0);
        let me = xi_expansion(&f, 1.0).unwrap();
        assert_eq!(me.psi.len(), 1);
        assert_abs_diff_eq!(me.psi[0].re, (21f64.sqrt() - 3.0) / 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(me.xi0(0), 5.0 - 21f64.sqrt(), epsilon = 1e-13);
        assert_abs_diff_eq!(me.xi0(1), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn xi_is_decreasing_in_level_and_theta() {
        let (_, f) = two_state(1.0, 4.0);
        let ys: Vec<f64> = (0..=100).map(|k| 0.1 * f64::from(k)).collect();
        let exps: Vec<ModeExpansion> =
            [0.5, 1.0, 2.0].iter().map(|&t| xi_expansion(&f, t).unwrap()).collect();
        for me in &exps {
            me.check(&f.down_states(), &ys).unwrap();
            for i in 0..2 {
                for w in ys.windows(2) {
                    assert!(me.xi(i, w[1]) <= me.xi(i, w[0]));
                }
            }
        }
        for i in 0..2 {
            for &y in &ys {
                assert!(exps[1].xi(i, y) <= exps[0].xi(i, y));
                assert!(exps[2].xi(i, y) <= exps[1].xi(i, y));
            }
        }
    }

    #[test]
    fn mode_count_matches_down_states() {
        let g = GeneratorMatrix::from_rows(&[
            vec![-2.0, 1.0, 1.0, 0.0],
            vec![0.5, -1.5, 0.5, 0.5],
            vec![1.0, 1.0, -3.0, 1.0],
            vec![0.0, 2.0, 1.0, -3.0],
        ])
        .unwrap();
        let m = MapModel::fluid(g, &[2.0, -1.0, 1.0, -3.0]);
        let f = FluidView::new(&m).unwrap();
        for theta in [0.1, 0.5, 1.0, 3.0] {
            let me = xi_expansion(&f, theta).unwrap();
            assert_eq!(me.psi.len(), 2);
            me.check(&f.down_states(), &[0.0, 0.3, 1.0, 4.0]).unwrap();
        }
    }

    #[test]
    fn transient_mean_slope_and_limit() {
        let (m, f) = two_state(1.0, 4.0);
        let theta = 1.0;
        let me = xi_expansion(&f, theta).unwrap();
        let nu = nu_vector(&m, theta).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(transient_mean(&me, &nu, 200.0, i) - 200.0, nu[i], epsilon = 1e-12);
            for x in [0.1, 1.0, 3.0] {
                let h = 1e-5;
                let slope =
                    (transient_mean(&me, &nu, x + h, i) - transient_mean(&me, &nu, x - h, i)) / (2.0 * h);
                assert_abs_diff_eq!(slope, 1.0 - me.xi(i, x), epsilon = 1e-6);
            }
        }
        // symbol-for-symbol against the two-state display for m_1
        let p = TwoStateFluidParams::new(1.0, 4.0).unwrap();
        let pi = two_state_busy_transform(&p, theta).unwrap();
        let rho = two_state_rho(&p, theta).unwrap();
        let x = 0.8;
        let direct = x + pi / rho * (-rho * x).exp() + nu[0];
        assert_abs_diff_eq!(transient_mean(&me, &nu, x, 0), direct, epsilon = 1e-12);
    }

    #[test]
    fn non_fluid_model_is_unsupported() {
        let m = MapModel::levy(crate::LevyComponent::brownian(-1.0, 1.0), crate::SpectralFlag::Positive);
        assert!(matches!(FluidView::new(&m), Err(Error::Unsupported(_))));
    }

    #[test]
    fn gamma_routes_agree_on_three_state_model() {
        let g = GeneratorMatrix::cyclic(3, 1.0).unwrap();
        let m = MapModel::fluid(g, &[1.0, -2.0, -3.0]);
        let f = FluidView::new(&m).unwrap();
        let sw = stationary_workload_fluid(&f).unwrap();
        for theta in [0.25, 1.0, 4.0] {
            let me = xi_expansion(&f, theta).unwrap();
            let nu = nu_vector(&m, theta).unwrap();
            let a = gamma_sp(&f, &sw, theta).unwrap();
            let b = gamma_quadrature(&sw, &me, &nu).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        // large ϑ: T → 0
        let var = sw.moments().variance;
        assert_abs_diff_eq!(gamma_sp(&f, &sw, 1e7).unwrap(), var, epsilon = 1e-5);
    }
}
