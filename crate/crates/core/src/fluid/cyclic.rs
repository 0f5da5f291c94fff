//! Limit of a cyclic fluid model: state 1 fills at unit rate, states
//! `2..=d` drain instantly, and the background chain cycles `1 → 2 → … → d → 1`
//! at unit rate.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

fn check_d(d: usize) -> Result<()> {
    if d >= 2 {
        Ok(())
    } else {
        Err(Error::Domain(format!("cyclic example needs d >= 2, got {d}")))
    }
}

/// Poles of `γ(ϑ)`: `-1` and `-1 + e^{2πik/d}` for `k = 1..d`.
pub fn cyclic_poles(d: usize) -> Result<Vec<Complex64>> {
    check_d(d)?;
    let mut poles = vec![Complex64::new(-1.0, 0.0)];
    for k in 1..d {
        let angle = 2.0 * PI * k as f64 / d as f64;
        let mut z = Complex64::new(-1.0 + angle.cos(), angle.sin());
        // keep exact symmetry of the pole set
        if 2 * k == d {
            z.im = 0.0;
        }
        poles.push(z);
    }
    Ok(poles)
}

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn horner(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn check_pole(d: usize, theta: Complex64) -> Result<()> {
    let poles = cyclic_poles(d)?;
    if poles.iter().any(|p| (theta - p).norm() <= 1e-12 * (1.0 + p.norm())) {
        return Err(Error::Pole { at: theta, poles });
    }
    Ok(())
}

/// `γ(ϑ)/ϑ` with the removable singularity at 0 cancelled:
/// `(2/d)/(1+ϑ) + (1/d) (P(ϑ)/ϑ) / w(ϑ)` where `w(ϑ) = ((1+ϑ)^d − 1)/ϑ` and
/// `P(ϑ) = (1+ϑ)^{d−2} − w(ϑ)/d`, both polynomials with `P(0) = 0`.
pub fn cyclic_gamma_over_theta(d: usize, theta: Complex64) -> Result<Complex64> {
    check_pole(d, theta)?;
    let df = d as f64;
    // w(ϑ) = Σ_{k=1}^{d} C(d,k) ϑ^{k-1}
    let w: Vec<f64> = (1..=d).map(|k| binom(d, k)).collect();
    // P(ϑ)/ϑ = Σ_{k≥1} [C(d−2,k) − C(d,k+1)/d] ϑ^{k−1}
    let p_over: Vec<f64> = (1..d).map(|k| binom(d - 2, k) - binom(d, k + 1) / df).collect();
    let one = Complex64::new(1.0, 0.0);
    Ok(2.0 / df / (one + theta) + horner(&p_over, theta) / horner(&w, theta) / df)
}

/// `γ(ϑ) = (2/d) ϑ/(1+ϑ) + (1/d)(ϑ(1+ϑ)^{d−2} − d⁻¹((1+ϑ)^d − 1))/((1+ϑ)^d − 1)`.
pub fn cyclic_gamma(d: usize, theta: Complex64) -> Result<Complex64> {
    Ok(theta * cyclic_gamma_over_theta(d, theta)?)
}

/// Explicit `c(t)` for `d ∈ {2, 3, 4}`.
pub fn cyclic_c_closed(d: usize, t: f64) -> Result<f64> {
    let e = (-t).exp();
    match d {
        2 => Ok(e - 0.25 * e * e),
        3 => {
            let s = 3f64.sqrt();
            let damp = (-1.5 * t).exp();
            Ok(2.0 / 3.0 * e + s / 9.0 * damp * (0.5 * s * t).sin() - damp * (0.5 * s * t).cos() / 9.0)
        }
        4 => Ok(0.5 * e - e * e / 16.0 + e * t.sin() / 8.0),
        _ => Err(Error::Unsupported(format!(
            "explicit c(t) is available for d in 2..=4, got {d}"
        ))),
    }
}

/// `-1 + max{0, cos(2π/d)}`.
pub fn cyclic_decay_rate(d: usize) -> Result<f64> {
    check_d(d)?;
    Ok(-1.0 + (2.0 * PI / d as f64).cos().max(0.0))
}
