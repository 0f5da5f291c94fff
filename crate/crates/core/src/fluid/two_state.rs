//! Two-state fluid queue in the normalisation `μ_1 = q_21 = 1`: state 1 fills
//! at unit rate and is left at rate `q`, state 2 drains at rate `μ` and is
//! left at unit rate.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::StationaryWorkloadFluid;
use crate::error::{Error, Result};
use crate::model::{GeneratorMatrix, MapModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStateFluidParams {
    /// Rate of leaving the filling state.
    pub q: f64,
    /// Drain rate `-μ_2 > 0` of the second state.
    pub mu: f64,
}

impl TwoStateFluidParams {
    pub fn new(q: f64, mu: f64) -> Result<Self> {
        if !(q > 0.0 && q.is_finite() && mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidModel(format!(
                "two-state parameters need q > 0 and mu > 0, got q = {q}, mu = {mu}"
            )));
        }
        Ok(TwoStateFluidParams { q, mu })
    }

    pub fn model(&self) -> MapModel {
        MapModel::fluid(GeneratorMatrix::two_state(self.q, 1.0), &[1.0, -self.mu])
    }

    /// Background law `(1, q) / (1 + q)`.
    pub fn pi(&self) -> [f64; 2] {
        let s = 1.0 + self.q;
        [1.0 / s, self.q / s]
    }

    pub fn mean_drift(&self) -> f64 {
        (1.0 - self.q * self.mu) / (1.0 + self.q)
    }

    pub fn is_stable(&self) -> bool {
        self.q * self.mu > 1.0
    }

    fn require_stable(&self) -> Result<()> {
        if self.is_stable() {
            Ok(())
        } else {
            Err(Error::Unstable {
                drift: self.mean_drift(),
            })
        }
    }

    /// Decay rate of the workload density, `q_12/μ_1 + q_21/μ_2 = q − 1/μ`.
    pub fn lambda(&self) -> f64 {
        self.q - 1.0 / self.mu
    }

    /// Density weights `(a_1, a_2)` with `p_i(x) = a_i e^{-λx}`.
    pub fn density_weights(&self) -> [f64; 2] {
        let [p1, p2] = self.pi();
        let lam = self.lambda();
        [p1 * lam, p2 * lam / (1.0 + lam * self.mu)]
    }

    /// Branch point of the busy-period transform, `-(√(qμ) − 1)² / (1 + μ)`.
    pub fn branch_point(&self) -> f64 {
        let s = (self.q * self.mu).sqrt() - 1.0;
        -s * s / (1.0 + self.mu)
    }

    /// Pole `-(q + 1)` coming from `ν(ϑ)`.
    pub fn pole(&self) -> f64 {
        -(self.q + 1.0)
    }
}

fn check_rates(alpha: f64, beta: f64, r: f64) -> Result<()> {
    if alpha > 0.0 && beta > 0.0 && r > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "M/M/1 rates must be positive, got α = {alpha}, β = {beta}, R = {r}"
        )))
    }
}

/// Busy-period transform of an M/M/1 fluid queue (arrival rate `α`,
/// exponential amounts of rate `β`, depletion rate `R`): the root in
/// `(0, 1]` of `π = βR / (βR + ϑ + α(1 − π))`.
pub fn busy_period_transform_mm1(alpha: f64, beta: f64, r: f64, theta: f64) -> Result<f64> {
    check_rates(alpha, beta, r)?;
    if !(theta >= 0.0) {
        return Err(Error::Domain(format!("ϑ must be non-negative, got {theta}")));
    }
    let br = beta * r;
    let b = br + theta + alpha;
    let disc = (b * b - 4.0 * alpha * br).max(0.0);
    Ok(2.0 * br / (b + disc.sqrt()))
}

/// Analytic continuation of [`busy_period_transform_mm1`] to the plane cut
/// along the real axis left of its branch point.
pub fn busy_period_transform_mm1_complex(
    alpha: f64,
    beta: f64,
    r: f64,
    theta: Complex64,
) -> Result<Complex64> {
    check_rates(alpha, beta, r)?;
    let br = beta * r;
    let b = theta + br + alpha;
    let s = 2.0 * (alpha * br).sqrt();
    let root = (b - s).sqrt() * (b + s).sqrt();
    Ok(2.0 * br / (b + root))
}

fn check_branch(p: &TwoStateFluidParams, theta: f64) -> Result<()> {
    let branch = p.branch_point();
    if theta >= branch {
        Ok(())
    } else {
        Err(Error::BranchCut { theta, branch })
    }
}

/// `π(ϑ)`, transform of a busy period started in the filling state.
pub fn two_state_busy_transform(p: &TwoStateFluidParams, theta: f64) -> Result<f64> {
    check_branch(p, theta)?;
    let qm = p.q * p.mu;
    let b = qm + theta * (1.0 + p.mu) + 1.0;
    let disc = (b * b - 4.0 * qm).max(0.0);
    Ok(2.0 * qm / (b + disc.sqrt()))
}

pub fn two_state_busy_transform_complex(p: &TwoStateFluidParams, theta: Complex64) -> Complex64 {
    busy_period_transform_mm1_complex(1.0, p.q, p.mu, theta * (1.0 + p.mu))
        .expect("normalised rates are positive")
}

/// `ϱ(ϑ) = (ϑ + 1 − π(ϑ)) / μ`, the decay rate of `ξ(·, ϑ)`.
pub fn two_state_rho(p: &TwoStateFluidParams, theta: f64) -> Result<f64> {
    Ok((theta + 1.0 - two_state_busy_transform(p, theta)?) / p.mu)
}

pub fn two_state_rho_complex(p: &TwoStateFluidParams, theta: Complex64) -> Complex64 {
    (theta + 1.0 - two_state_busy_transform_complex(p, theta)) / p.mu
}

/// Closed-form stationary workload of the two-state queue.
pub fn stationary_workload_two_state(p: &TwoStateFluidParams) -> Result<StationaryWorkloadFluid> {
    p.require_stable()?;
    let lam = p.lambda();
    let [a1, a2] = p.density_weights();
    let [_, p2] = p.pi();
    let atoms = vec![0.0, (p2 - a2 / lam).max(0.0)];
    StationaryWorkloadFluid::from_real_terms(atoms, vec![lam], DMatrix::from_column_slice(2, 1, &[a1, a2]))
}

/// `γ(ϑ)` of the two-state queue in closed form.
pub fn two_state_gamma(p: &TwoStateFluidParams, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("ϑ must be positive, got {theta}")));
    }
    p.require_stable()?;
    Ok(two_state_gamma_complex(p, Complex64::new(theta, 0.0))?.re)
}

/// `γ(ϑ) = Σ_i a_i (2/λ³ + c_i/(ϱ(ϱ+λ)²) + ν_i/λ²) − ((a_1+a_2)/λ²)²`
/// with `c_1 = π(ϑ)`, `c_2 = 1` and
/// `ν_i = (μ_i ϑ + μ̄ q̄)/(ϑ² + ϑ q̄)`; analytic off `(-∞, ϑ_b]` and the pole.
pub fn two_state_gamma_complex(p: &TwoStateFluidParams, theta: Complex64) -> Result<Complex64> {
    p.require_stable()?;
    let qbar = 1.0 + p.q;
    if (theta + qbar).norm() < 1e-300 || theta.norm() < 1e-300 {
        return Err(Error::Pole {
            at: theta,
            poles: vec![Complex64::new(-qbar, 0.0), Complex64::new(0.0, 0.0)],
        });
    }
    let lam = p.lambda();
    let [a1, a2] = p.density_weights();
    let pi = two_state_busy_transform_complex(p, theta);
    let rho = (theta + 1.0 - pi) / p.mu;
    let mbar_qbar = 1.0 - p.q * p.mu;
    let denom = theta * theta + theta * qbar;
    let nu1 = (theta + mbar_qbar) / denom;
    let nu2 = (-p.mu * theta + mbar_qbar) / denom;
    let l2 = lam * lam;
    let rl = (rho + lam) * (rho + lam) * rho;
    let term = |a: f64, c: Complex64, nu: Complex64| a * (2.0 / (l2 * lam) + c / rl + nu / l2);
    let mean = (a1 + a2) / l2;
    Ok(term(a1, pi, nu1) + term(a2, Complex64::new(1.0, 0.0), nu2) - mean * mean)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStateSingularities {
    pub pole: f64,
    pub branch: f64,
    /// Rightmost of the two, i.e. the branch point.
    pub decay_rate: f64,
}

pub fn singularities_two_state(p: &TwoStateFluidParams) -> Result<TwoStateSingularities> {
    p.require_stable()?;
    let pole = p.pole();
    let branch = p.branch_point();
    Ok(TwoStateSingularities {
        pole,
        branch,
        decay_rate: pole.max(branch),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::{
        gamma_quadrature, gamma_sp, nu_vector, psi_matrix, stationary_workload_fluid, xi_expansion,
        FluidView,
    };
    use crate::linalg;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn base() -> TwoStateFluidParams {
        TwoStateFluidParams::new(1.0, 4.0).unwrap()
    }

    #[test]
    fn mm1_examples() {
        assert_abs_diff_eq!(busy_period_transform_mm1(0.5, 1.0, 1.0, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        let v = busy_period_transform_mm1(1.0, 1.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(v, (3.0 - 5f64.sqrt()) / 2.0, epsilon = 1e-15);
        let mut last = 1.0;
        for k in 1..40 {
            let v = busy_period_transform_mm1(0.5, 1.0, 2.0, 1.5f64.powi(k)).unwrap();
            assert!(v < last && v > 0.0);
            last = v;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn busy_transform_examples() {
        let p = base();
        assert_abs_diff_eq!(two_state_busy_transform(&p, 0.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(two_state_busy_transform(&p, 1.0).unwrap(), 5.0 - 21f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(two_state_rho(&p, 1.0).unwrap(), (21f64.sqrt() - 3.0) / 4.0, epsilon = 1e-14);
        for k in 0..50 {
            let theta = 0.1 * f64::from(k);
            let a = two_state_busy_transform(&p, theta).unwrap();
            let b = busy_period_transform_mm1(1.0, p.q, p.mu, theta * (1.0 + p.mu)).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn busy_transform_refuses_branch_cut() {
        let p = base();
        assert!(two_state_busy_transform(&p, -0.2).is_ok());
        match two_state_busy_transform(&p, -0.3) {
            Err(Error::BranchCut { branch, .. }) => assert_abs_diff_eq!(branch, -0.2, epsilon = 1e-15),
            other => panic!("expected branch-cut error, got {other:?}"),
        }
    }

    #[test]
    fn complex_branch_agrees_on_real_axis() {
        let p = TwoStateFluidParams::new(2.0, 3.0).unwrap();
        for theta in [-0.1, 0.0, 0.3, 2.0, 50.0] {
            if theta < p.branch_point() {
                continue;
            }
            let a = two_state_busy_transform(&p, theta).unwrap();
            let b = two_state_busy_transform_complex(&p, Complex64::new(theta, 0.0));
            assert_abs_diff_eq!(a, b.re, epsilon = 1e-13);
            assert!(b.im.abs() < 1e-15);
        }
    }

    #[test]
    fn stationary_examples() {
        let p = base();
        assert_abs_diff_eq!(p.lambda(), 0.75, epsilon = 1e-15);
        let [a1, a2] = p.density_weights();
        assert_abs_diff_eq!(a1, 0.375, epsilon = 1e-15);
        assert_abs_diff_eq!(a2, 0.09375, epsilon = 1e-15);
        let sw = stationary_workload_two_state(&p).unwrap();
        assert_abs_diff_eq!(sw.ccdf(0.0), 0.625, epsilon = 1e-15);
        assert_abs_diff_eq!(sw.moments().mean, 0.833_333_333_333_333_4, epsilon = 1e-14);
        assert_abs_diff_eq!(sw.total_mass(), 1.0, epsilon = 1e-12);
        assert!(stationary_workload_two_state(&TwoStateFluidParams::new(1.0, 0.5).unwrap()).is_err());
    }

    #[test]
    fn eigenvalue_equals_rho() {
        for (q, mu) in [(1.0, 4.0), (2.0, 3.0), (0.7, 2.0)] {
            let p = TwoStateFluidParams::new(q, mu).unwrap();
            let f = FluidView::new(&p.model()).unwrap();
            for theta in [0.25, 0.5, 1.0, 2.0, 4.0] {
                let psi = psi_matrix(&f, theta).unwrap();
                let pairs = linalg::eigenpairs(&linalg::to_complex(&psi), true).unwrap();
                let pos: Vec<_> = pairs.iter().filter(|e| e.value.re > 0.0).collect();
                assert_eq!(pos.len(), 1);
                assert_abs_diff_eq!(pos[0].value.re, two_state_rho(&p, theta).unwrap(), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn gamma_closed_form_matches_matrix_route() {
        for (q, mu) in [(1.0, 4.0), (2.0, 3.0), (0.7, 2.0)] {
            let p = TwoStateFluidParams::new(q, mu).unwrap();
            let m = p.model();
            let f = FluidView::new(&m).unwrap();
            let sw = stationary_workload_fluid(&f).unwrap();
            for theta in [0.05, 0.25, 0.5, 1.0, 2.0, 4.0, 30.0] {
                let closed = two_state_gamma(&p, theta).unwrap();
                let sp = gamma_sp(&f, &sw, theta).unwrap();
                let me = xi_expansion(&f, theta).unwrap();
                let nu = nu_vector(&m, theta).unwrap();
                let quad = gamma_quadrature(&sw, &me, &nu).unwrap();
                assert_abs_diff_eq!(closed, sp, epsilon = 1e-10);
                assert_abs_diff_eq!(closed, quad, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn gamma_tends_to_variance() {
        let p = base();
        let var = stationary_workload_two_state(&p).unwrap().moments().variance;
        assert_abs_diff_eq!(var, 1.527_777_777_777_778, epsilon = 1e-12);
        assert_abs_diff_eq!(two_state_gamma(&p, 1e8).unwrap(), var, epsilon = 1e-6);
    }

    #[test]
    fn singularity_examples() {
        let s = singularities_two_state(&base()).unwrap();
        assert_abs_diff_eq!(s.branch, -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.pole, -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.decay_rate, -0.2, epsilon = 1e-15);
        let crit = TwoStateFluidParams::new(0.5, 2.0).unwrap();
        assert_abs_diff_eq!(crit.branch_point(), 0.0, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn branch_point_dominates_pole(q in 0.05f64..20.0, mu in 0.05f64..20.0) {
            prop_assume!(q * mu > 1.0);
            let s = singularities_two_state(&TwoStateFluidParams::new(q, mu).unwrap()).unwrap();
            prop_assert!(s.branch >= s.pole);
            prop_assert_eq!(s.decay_rate, s.branch);
        }
    }
}
