//! Special functions used by the closed-form models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest Hermite degree accepted by [`hermite`].
pub const HERMITE_MAX_DEGREE: usize = 60;

/// Distance from `z = 1` below which [`gauss_2f1`] refuses to sum.
pub const HYPERGEOMETRIC_EDGE: f64 = 1e-3;

const SERIES_REL_TOL: f64 = 1e-16;
const SERIES_MAX_TERMS: usize = 2_000_000;

/// Physicists' Hermite polynomial `H_k(x)`.
pub fn hermite(k: usize, x: f64) -> Result<f64> {
    if k > HERMITE_MAX_DEGREE {
        return Err(Error::Config(format!(
            "Hermite degree {k} exceeds {HERMITE_MAX_DEGREE}"
        )));
    }
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    if k == 0 {
        return Ok(prev);
    }
    for j in 1..k {
        let next = 2.0 * x * cur - 2.0 * j as f64 * prev;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Jacobi polynomial `P_n^(σ,δ)(x)` by the three-term recurrence in `n`.
pub fn jacobi(n: usize, sigma: f64, delta: f64, x: f64) -> Result<f64> {
    if !(sigma > -1.0 && delta > -1.0) {
        return Err(Error::Domain(format!(
            "Jacobi parameters must exceed -1, got ({sigma}, {delta})"
        )));
    }
    if !(x.abs() <= 1.0) {
        return Err(Error::Domain(format!(
            "Jacobi argument {x} outside [-1, 1]"
        )));
    }
    let (a, b) = (sigma, delta);
    let mut prev = 1.0;
    if n == 0 {
        return Ok(prev);
    }
    let mut cur = 0.5 * (a - b) + 0.5 * (a + b + 2.0) * x;
    for k in 2..=n {
        let k = k as f64;
        let s = 2.0 * k + a + b;
        let c0 = 2.0 * k * (k + a + b) * (s - 2.0);
        let c1 = (s - 1.0) * (s * (s - 2.0) * x + a * a - b * b);
        let c2 = 2.0 * (k + a - 1.0) * (k + b - 1.0) * s;
        let next = (c1 * cur - c2 * prev) / c0;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Error function.
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Parameters `(a, b; c)` of the Gauss hypergeometric function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypergeometricParams {
    a: f64,
    b: f64,
    c: f64,
}

impl HypergeometricParams {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            return Err(Error::Domain(
                "hypergeometric parameters must be finite".into(),
            ));
        }
        if c <= 0.0 && c == c.round() {
            return Err(Error::Domain(format!(
                "c = {c} is zero or a negative integer"
            )));
        }
        Ok(Self { a, b, c })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }
}

fn check_2f1_argument(z: f64) -> Result<()> {
    if !(0.0..1.0 - HYPERGEOMETRIC_EDGE).contains(&z) {
        return Err(Error::Domain(format!(
            "2F1 series is only evaluated on [0, {}), got z = {z}",
            1.0 - HYPERGEOMETRIC_EDGE
        )));
    }
    Ok(())
}

/// Sum of the first `terms` terms of the `₂F₁` power series.
pub fn gauss_2f1_partial_sum(p: HypergeometricParams, z: f64, terms: usize) -> Result<f64> {
    check_2f1_argument(z)?;
    let mut t = 1.0;
    let mut sum = 0.0;
    for k in 0..terms {
        sum += t;
        let k = k as f64;
        t *= (p.a + k) * (p.b + k) / ((p.c + k) * (k + 1.0)) * z;
    }
    Ok(sum)
}

/// `₂F₁(a, b; c; z)` on `0 ≤ z < 1 − 10⁻³` by direct summation.
///
/// Summation stops once the term ratio has settled below one and the last
/// few terms no longer move the sum at double precision. Returns the value
/// together with the number of terms used.
pub fn gauss_2f1_with_terms(p: HypergeometricParams, z: f64) -> Result<(f64, usize)> {
    check_2f1_argument(z)?;
    let mut t = 1.0;
    let mut sum = 0.0;
    let mut quiet = 0;
    for k in 0..SERIES_MAX_TERMS {
        sum += t;
        if t == 0.0 {
            return Ok((sum, k + 1));
        }
        let kf = k as f64;
        let ratio = (p.a + kf) * (p.b + kf) / ((p.c + kf) * (kf + 1.0)) * z;
        t *= ratio;
        // Terms may grow for a while before the geometric factor wins.
        if ratio.abs() < 1.0 && t.abs() <= SERIES_REL_TOL * sum.abs() {
            quiet += 1;
            if quiet >= 4 {
                return Ok((sum, k + 1));
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::Domain(format!(
        "2F1 series did not converge in {SERIES_MAX_TERMS} terms at z = {z}"
    )))
}

pub fn gauss_2f1(p: HypergeometricParams, z: f64) -> Result<f64> {
    gauss_2f1_with_terms(p, z).map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(x: f64, k: usize) -> f64 {
        (0..k).fold(1.0, |acc, j| acc * (x - j as f64) / (j as f64 + 1.0))
    }

    fn factorial(k: usize) -> f64 {
        (1..=k).map(|j| j as f64).product()
    }

    // H_k(x) = k! Σ_m (-1)^m (2x)^(k-2m) / (m! (k-2m)!)
    fn hermite_sum(k: usize, x: f64) -> f64 {
        (0..=k / 2)
            .map(|m| {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                sign * factorial(k) * (2.0 * x).powi((k - 2 * m) as i32)
                    / (factorial(m) * factorial(k - 2 * m))
            })
            .sum()
    }

    // P_n^(a,b)(x) = Σ_s C(n+a, n-s) C(n+b, s) ((x-1)/2)^s ((x+1)/2)^(n-s)
    fn jacobi_sum(n: usize, a: f64, b: f64, x: f64) -> f64 {
        (0..=n)
            .map(|s| {
                binom(n as f64 + a, n - s)
                    * binom(n as f64 + b, s)
                    * ((x - 1.0) / 2.0).powi(s as i32)
                    * ((x + 1.0) / 2.0).powi((n - s) as i32)
            })
            .sum()
    }

    #[test]
    fn hermite_low_degrees() {
        assert_eq!(hermite(0, 3.7).unwrap(), 1.0);
        assert_eq!(hermite(1, 0.5).unwrap(), 1.0);
        // H4(x) = 16x^4 - 48x^2 + 12, computed by hand at 1.3
        let want = 16.0 * 1.3f64.powi(4) - 48.0 * 1.69 + 12.0;
        assert!((hermite(4, 1.3).unwrap() - want).abs() < 1e-12);
        assert!((hermite(4, 1.3).unwrap() - (-23.4224)).abs() < 1e-10);
        assert!(matches!(hermite(61, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn jacobi_low_degrees() {
        assert_eq!(jacobi(0, 0.3, 1.2, -0.4).unwrap(), 1.0);
        assert!((jacobi(1, 3.0, 2.0, 0.0).unwrap() - 0.5).abs() < 1e-15);
        // P_2^(3,2)(0.4) from the finite sum by hand:
        // C(5,2)*C(4,0)*0.7^2 + C(5,1)*C(4,1)*(-0.3)(0.7) + C(5,0)*C(4,2)*0.09
        let want = 10.0 * 0.49 + 20.0 * (-0.21) + 6.0 * 0.09;
        assert!((want - 1.24_f64).abs() < 1e-12);
        assert!((jacobi(2, 3.0, 2.0, 0.4).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn jacobi_domain_errors() {
        assert!(matches!(jacobi(2, -1.5, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(jacobi(2, 0.0, 0.0, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn recurrences_match_finite_sums() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let a: f64 = rng.gen_range(-0.9..4.0);
            let b: f64 = rng.gen_range(-0.9..4.0);
            for n in 0..=10 {
                let r = jacobi(n, a, b, x).unwrap();
                let s = jacobi_sum(n, a, b, x);
                assert!(
                    (r - s).abs() <= 1e-9 * s.abs().max(1.0),
                    "P_{n}^({a},{b})({x})"
                );
                let hx = 3.0 * x;
                let r = hermite(n, hx).unwrap();
                let s = hermite_sum(n, hx);
                assert!((r - s).abs() <= 1e-9 * s.abs().max(1.0), "H_{n}({hx})");
            }
        }
    }

    // Maclaurin series of erf, summed until the terms vanish.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = 0.0;
        let mut n = 0usize;
        loop {
            let add = term / (2 * n + 1) as f64;
            sum += add;
            if add.abs() < 1e-20 {
                break;
            }
            n += 1;
            term *= -x * x / n as f64;
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    }

    #[test]
    fn erf_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf_series(1.0) - 0.8427007929497149).abs() < 1e-15);
        assert!((erf(1.0) - 0.8427007929497149).abs() < 1e-12);
        for &x in &[0.1, 0.7, 1.9, 2.5, 3.3] {
            assert_eq!(erf(-x), -erf(x));
            assert!((erf(x) - erf_series(x)).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn erf_monotone_and_bounded() {
        let xs: Vec<f64> = (0..2001).map(|i| -10.0 + 0.01 * i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| erf(x)).collect();
        assert!(ys.iter().all(|y| (-1.0..=1.0).contains(y)));
        assert!(ys.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn gauss_2f1_identities() {
        let p = HypergeometricParams::new(1.3, -0.7, 2.2).unwrap();
        assert_eq!(gauss_2f1(p, 0.0).unwrap(), 1.0);
        let p = HypergeometricParams::new(0.0, 5.0, 2.5).unwrap();
        assert_eq!(gauss_2f1(p, 0.9).unwrap(), 1.0);
        let p = HypergeometricParams::new(1.0, 1.0, 2.0).unwrap();
        let want = -(1.0f64 - 0.5).ln() / 0.5;
        assert!((want - 1.3862943611198906).abs() < 1e-15);
        let got = gauss_2f1(p, 0.5).unwrap();
        assert!((got - want).abs() <= 1e-10 * want);
    }

    #[test]
    fn gauss_2f1_near_edge_matches_closed_form() {
        let p = HypergeometricParams::new(1.0, 1.0, 2.0).unwrap();
        let z = 0.998;
        let want = -(1.0f64 - z).ln() / z;
        assert!((gauss_2f1(p, z).unwrap() - want).abs() <= 1e-10 * want);
    }

    #[test]
    fn gauss_2f1_rejects_outside_series_region() {
        let p = HypergeometricParams::new(1.0, 1.0, 2.0).unwrap();
        assert!(matches!(gauss_2f1(p, 0.9995), Err(Error::Domain(_))));
        assert!(matches!(gauss_2f1(p, -0.1), Err(Error::Domain(_))));
        assert!(HypergeometricParams::new(1.0, 1.0, -2.0).is_err());
        assert!(HypergeometricParams::new(1.0, 1.0, 0.0).is_err());
        assert!(HypergeometricParams::new(1.0, 1.0, -2.5).is_ok());
    }

    #[test]
    fn gauss_2f1_partial_sums_are_cauchy() {
        let p = HypergeometricParams::new(6.87, -0.87, 4.0).unwrap();
        for &z in &[0.1, 0.5, 0.9, 0.99] {
            let (v, n) = gauss_2f1_with_terms(p, z).unwrap();
            let more = gauss_2f1_partial_sum(p, z, n + 10).unwrap();
            assert!((more - v).abs() < 1e-12 * v.abs().max(1.0), "z = {z}");
        }
    }
}
