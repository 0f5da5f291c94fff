use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use super::FluidView;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{stationary_distribution, GeneratorMatrix};

/// Joint law of `(Q_0, J_0)`: an atom at 0 per state plus a density
/// `p_i(x) = Σ_k ζ_ik e^{-η_k x}`.
///
/// Rates and coefficients may come in conjugate pairs; all derived real
/// quantities take real parts.
#[derive(Debug, Clone)]
pub struct StationaryWorkloadFluid {
    pub atoms: Vec<f64>,
    pub rates: Vec<Complex64>,
    /// `coeffs[(i, k)] = ζ_ik`.
    pub coeffs: DMatrix<Complex64>,
}

/// Moments of `Q_0` derived from `κ(α) = E e^{-αQ_0}`.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaMoments {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    /// `π_i E_i Q_0 = -κ_i'(0)` per state.
    pub partial_means: Vec<f64>,
}

impl StationaryWorkloadFluid {
    /// Builds a law from real exponential terms, checking positivity of the
    /// rates.
    pub fn from_real_terms(atoms: Vec<f64>, rates: Vec<f64>, coeffs: DMatrix<f64>) -> Result<Self> {
        if coeffs.nrows() != atoms.len() || coeffs.ncols() != rates.len() {
            return Err(Error::Invariant("coefficient table has the wrong shape".into()));
        }
        if rates.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::Invariant("density rates must be positive".into()));
        }
        Ok(StationaryWorkloadFluid {
            atoms,
            rates: rates.into_iter().map(|r| Complex64::new(r, 0.0)).collect(),
            coeffs: linalg::to_complex(&coeffs),
        })
    }

    /// Limit law of the cyclic example: busy periods are `Exp(1)` and only
    /// state 1 carries workload, so `p_1(x) = e^{-x}/d` and the other states
    /// sit at 0 with mass `1/d` each.
    pub fn cyclic(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Domain(format!("cyclic example needs d >= 2, got {d}")));
        }
        let w = 1.0 / d as f64;
        let mut atoms = vec![w; d];
        atoms[0] = 0.0;
        let mut coeffs = DMatrix::zeros(d, 1);
        coeffs[(0, 0)] = w;
        Self::from_real_terms(atoms, vec![1.0], coeffs)
    }

    pub fn dim(&self) -> usize {
        self.atoms.len()
    }

    pub fn density(&self, i: usize, x: f64) -> f64 {
        self.rates
            .iter()
            .enumerate()
            .map(|(k, &eta)| self.coeffs[(i, k)] * (-eta * x).exp())
            .sum::<Complex64>()
            .re
    }

    /// `P(Q_0 > x, J_0 = i)`.
    pub fn tail(&self, i: usize, x: f64) -> f64 {
        self.rates
            .iter()
            .enumerate()
            .map(|(k, &eta)| self.coeffs[(i, k)] / eta * (-eta * x).exp())
            .sum::<Complex64>()
            .re
    }

    /// `P(Q_0 > x)`.
    pub fn ccdf(&self, x: f64) -> f64 {
        (0..self.dim()).map(|i| self.tail(i, x)).sum()
    }

    /// `P(Q_0 ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            1.0 - self.ccdf(x)
        }
    }

    /// `P(J_0 = i)`.
    pub fn state_mass(&self, i: usize) -> f64 {
        self.atoms[i] + self.tail(i, 0.0)
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.dim()).map(|i| self.state_mass(i)).sum()
    }

    fn check_alpha(&self, alpha: Complex64) -> Result<()> {
        let bound = self.slowest_rate();
        if self.rates.is_empty() || alpha.re > -bound {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "κ(α) needs Re α > {}, got {alpha}",
                -bound
            )))
        }
    }

    /// `κ_i(α) = atom_i + Σ_k ζ_ik / (η_k + α)`.
    pub fn kappa(&self, i: usize, alpha: Complex64) -> Result<Complex64> {
        self.check_alpha(alpha)?;
        Ok(Complex64::new(self.atoms[i], 0.0)
            + self
                .rates
                .iter()
                .enumerate()
                .map(|(k, &eta)| self.coeffs[(i, k)] / (eta + alpha))
                .sum::<Complex64>())
    }

    /// `κ_i'(α) = -Σ_k ζ_ik / (η_k + α)²`.
    pub fn kappa_prime(&self, i: usize, alpha: Complex64) -> Result<Complex64> {
        self.check_alpha(alpha)?;
        Ok(-self
            .rates
            .iter()
            .enumerate()
            .map(|(k, &eta)| self.coeffs[(i, k)] / ((eta + alpha) * (eta + alpha)))
            .sum::<Complex64>())
    }

    /// `κ_i''(α) = 2 Σ_k ζ_ik / (η_k + α)³`.
    pub fn kappa_second(&self, i: usize, alpha: Complex64) -> Result<Complex64> {
        self.check_alpha(alpha)?;
        Ok(self
            .rates
            .iter()
            .enumerate()
            .map(|(k, &eta)| 2.0 * self.coeffs[(i, k)] / (eta + alpha).powi(3))
            .sum::<Complex64>())
    }

    pub fn moments(&self) -> KappaMoments {
        let zero = Complex64::new(0.0, 0.0);
        let partial_means: Vec<f64> = (0..self.dim())
            .map(|i| -self.kappa_prime(i, zero).expect("α = 0 is in the domain").re)
            .collect();
        let mean: f64 = partial_means.iter().sum();
        let second_moment: f64 = (0..self.dim())
            .map(|i| self.kappa_second(i, zero).expect("α = 0 is in the domain").re)
            .sum();
        KappaMoments {
            mean,
            second_moment,
            variance: second_moment - mean * mean,
            partial_means,
        }
    }

    /// Smallest real part among the density rates (`+∞` without density).
    pub fn slowest_rate(&self) -> f64 {
        self.rates.iter().map(|r| r.re).fold(f64::INFINITY, f64::min)
    }

    /// A level beyond which `x² Σ|ζ| e^{-Re η x}` stays below `eps`.
    pub fn tail_cutoff(&self, eps: f64) -> f64 {
        if self.rates.is_empty() {
            return 0.0;
        }
        let weight: f64 = self.coeffs.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
        let eta = self.slowest_rate();
        let bound = |x: f64| weight * (1.0 + x) * (1.0 + x) * (-eta * x).exp() / eta;
        let mut x = 1.0 / eta;
        while bound(x) > eps {
            x *= 1.5;
        }
        x
    }

    /// Checks total mass and non-negativity of the density on a grid.
    pub fn check(&self, xs: &[f64]) -> Result<()> {
        let mass = self.total_mass();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(Error::Invariant(format!("total mass {mass} differs from 1")));
        }
        for i in 0..self.dim() {
            if self.atoms[i] < -1e-12 {
                return Err(Error::Invariant(format!(
                    "negative atom {} in state {}",
                    self.atoms[i],
                    i + 1
                )));
            }
            for &x in xs {
                let p = self.density(i, x);
                if p < -1e-12 {
                    return Err(Error::Invariant(format!(
                        "negative density p_{}({x}) = {p}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Exact draw of `(Q_0, J_0)` by inversion.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, usize) {
        let d = self.dim();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut state = d - 1;
        for i in 0..d {
            acc += self.state_mass(i);
            if u < acc {
                state = i;
                break;
            }
        }
        let mass = self.state_mass(state);
        let atom = self.atoms[state];
        let v: f64 = rng.random::<f64>() * mass;
        if v < atom || mass <= atom {
            return (0.0, state);
        }
        // P(Q_0 > x, J_0 = i) = v'  with v' uniform on (0, mass - atom)
        let target = mass - v;
        (self.invert_tail(state, target), state)
    }

    fn invert_tail(&self, i: usize, target: f64) -> f64 {
        if self.rates.len() == 1 && self.rates[0].im == 0.0 {
            let eta = self.rates[0].re;
            let top = self.tail(i, 0.0);
            return (top / target).ln().max(0.0) / eta;
        }
        let mut hi = 1.0 / self.slowest_rate();
        while self.tail(i, hi) > target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if self.tail(i, mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-14 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Stationary workload of a stable fluid queue.
///
/// The row vector `F(x) = P(Q_0 ≤ x, J_0 = ·)` solves `F'(x) M = F(x) Q`, so
/// `F(x) = π + Σ_k a_k φ_k e^{z_k x}` over the left eigenpairs of `Q M⁻¹`
/// with `Re z_k < 0`; the weights follow from `F_i(0) = 0` for the
/// positive-drift states.
pub fn stationary_workload_fluid(fluid: &FluidView) -> Result<StationaryWorkloadFluid> {
    let d = fluid.dim();
    let mu = fluid.drifts();
    let generator = GeneratorMatrix::new(fluid.generator().clone())?;
    let pi = stationary_distribution(&generator)?;
    let drift: f64 = (0..d).map(|i| pi[i] * mu[i]).sum();
    if !(drift < 0.0) {
        return Err(Error::Unstable { drift });
    }
    let up = fluid.up_states();
    if up.is_empty() {
        return Ok(StationaryWorkloadFluid {
            atoms: pi.iter().copied().collect(),
            rates: Vec::new(),
            coeffs: DMatrix::zeros(d, 0),
        });
    }
    let mut qm = fluid.generator().clone();
    for j in 0..d {
        let inv = 1.0 / mu[j];
        for i in 0..d {
            qm[(i, j)] *= inv;
        }
    }
    let mut pairs = linalg::left_eigenpairs(&linalg::to_complex(&qm), true)?;
    // z = 0 belongs to π and may come out with either sign
    let (zero, _) = pairs
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.value.norm().total_cmp(&y.1.value.norm()))
        .expect("non-empty spectrum");
    pairs.remove(zero);
    let kept: Vec<&linalg::EigenPair> = pairs.iter().filter(|p| p.value.re < 0.0).collect();
    if kept.len() != up.len() {
        return Err(Error::Invariant(format!(
            "spectral problem has {} decaying modes but {} positive-drift states",
            kept.len(),
            up.len()
        )));
    }
    let m = kept.len();
    let phi_up = DMatrix::from_fn(m, m, |r, k| kept[k].vector[up[r]]);
    let rhs = DVector::from_fn(m, |r, _| Complex64::new(-pi[up[r]], 0.0));
    let a = linalg::solve(&phi_up, &rhs)?;

    let mut coeffs = DMatrix::zeros(d, m);
    let mut rates = Vec::with_capacity(m);
    for (k, p) in kept.iter().enumerate() {
        rates.push(-p.value);
        for i in 0..d {
            coeffs[(i, k)] = a[k] * p.value * p.vector[i];
        }
    }
    let mut atoms = vec![0.0; d];
    for i in 0..d {
        if mu[i] < 0.0 {
            let f0: Complex64 =
                Complex64::new(pi[i], 0.0) + (0..m).map(|k| a[k] * kept[k].vector[i]).sum::<Complex64>();
            atoms[i] = f0.re.max(0.0);
        }
    }
    let sw = StationaryWorkloadFluid {
        atoms,
        rates,
        coeffs,
    };
    let mass = sw.total_mass();
    if (mass - 1.0).abs() > 1e-10 {
        return Err(Error::Invariant(format!(
            "stationary workload has total mass {mass}"
        )));
    }
    Ok(sw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fluid::{stationary_workload_two_state, TwoStateFluidParams};
    use crate::model::MapModel;
    use approx::assert_abs_diff_eq;

    fn grid() -> Vec<f64> {
        (0..=200).map(|k| 0.1 * f64::from(k)).collect()
    }

    #[test]
    fn spectral_law_matches_two_state_closed_form() {
        for (q, mu) in [(1.0, 4.0), (2.0, 3.0), (0.5, 5.0), (3.0, 0.8)] {
            let p = TwoStateFluidParams::new(q, mu).unwrap();
            let closed = stationary_workload_two_state(&p).unwrap();
            let f = FluidView::new(&p.model()).unwrap();
            let spectral = stationary_workload_fluid(&f).unwrap();
            for i in 0..2 {
                assert_abs_diff_eq!(closed.atoms[i], spectral.atoms[i], epsilon = 1e-10);
                for &x in &[0.0, 0.5, 2.0, 7.0] {
                    assert_abs_diff_eq!(closed.density(i, x), spectral.density(i, x), epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn three_state_law_is_a_distribution() {
        let m = MapModel::fluid(GeneratorMatrix::cyclic(3, 1.0).unwrap(), &[1.0, -2.0, -3.0]);
        let sw = stationary_workload_fluid(&FluidView::new(&m).unwrap()).unwrap();
        sw.check(&grid()).unwrap();
        assert_eq!(sw.atoms[0], 0.0);
        // state marginals equal the background law
        for i in 0..3 {
            assert_abs_diff_eq!(sw.state_mass(i), 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn all_down_states_means_empty_queue() {
        let m = MapModel::fluid(GeneratorMatrix::cyclic(1, 1.0).unwrap(), &[-1.0]);
        let sw = stationary_workload_fluid(&FluidView::new(&m).unwrap()).unwrap();
        assert_eq!(sw.atoms, vec![1.0]);
        assert_eq!(sw.moments().variance, 0.0);
    }

    #[test]
    fn unstable_fluid_is_rejected() {
        let m = MapModel::fluid(GeneratorMatrix::two_state(1.0, 1.0), &[2.0, -1.0]);
        assert!(matches!(
            stationary_workload_fluid(&FluidView::new(&m).unwrap()),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn kappa_examples() {
        let p = TwoStateFluidParams::new(1.0, 4.0).unwrap();
        let sw = stationary_workload_two_state(&p).unwrap();
        let zero = Complex64::new(0.0, 0.0);
        assert_abs_diff_eq!(sw.kappa(0, zero).unwrap().re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(-sw.kappa_prime(0, zero).unwrap().re, 0.5 / 0.75, epsilon = 1e-14);
        let big = Complex64::new(1e12, 0.0);
        for i in 0..2 {
            assert_abs_diff_eq!(sw.kappa(i, big).unwrap().re, sw.atoms[i], epsilon = 1e-11);
        }
        assert!(sw.kappa(0, Complex64::new(-1.0, 0.0)).is_err());

        let cyc = StationaryWorkloadFluid::cyclic(2).unwrap();
        assert_abs_diff_eq!(cyc.moments().variance, 0.75, epsilon = 1e-15);
        let cyc3 = StationaryWorkloadFluid::cyclic(3).unwrap();
        assert_abs_diff_eq!(cyc3.moments().variance, 5.0 / 9.0, epsilon = 1e-15);
    }

    #[test]
    fn sampler_hits_mass_at_zero() {
        use rand::SeedableRng;
        let p = TwoStateFluidParams::new(1.0, 4.0).unwrap();
        let sw = stationary_workload_two_state(&p).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let busy = (0..n).filter(|_| sw.sample(&mut rng).0 > 0.0).count();
        let frac = busy as f64 / n as f64;
        let sd = (0.625f64 * 0.375 / n as f64).sqrt();
        assert!((frac - 0.625).abs() < 3.0 * sd, "{frac}");
    }

    #[test]
    fn inversion_sampler_matches_tail() {
        use rand::SeedableRng;
        let m = MapModel::fluid(GeneratorMatrix::cyclic(3, 1.0).unwrap(), &[1.0, -2.0, -3.0]);
        let sw = stationary_workload_fluid(&FluidView::new(&m).unwrap()).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 40_000;
        let x = 0.7;
        let hits = (0..n).filter(|_| sw.sample(&mut rng).0 > x).count();
        let p = sw.ccdf(x);
        let frac = hits as f64 / n as f64;
        assert!((frac - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    }
}
